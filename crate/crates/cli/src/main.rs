use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spde2d::alpha::{cell_sums, estimate_alpha};
use spde2d::contrast::{estimate_vartheta, ParamSpaceXi};
use spde2d::coord::coordinate_stage;
use spde2d::harness::{read_field, run_experiment, summarize, write_field, ExperimentConfig, RunRecord};
use spde2d::model::{NodeSet, ThinSpec};
use spde2d::sim::{simulate_record, SimConfig, SynthMode};
use spde2d::special::PsiCache;

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "spde2d", version, about = "Simulate 2D SPDE fields and estimate their parameters")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); the desk-scale first case if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NodeLayer {
    /// Uniform observation grid.
    Uniform,
    /// Shifted nodes of the damping stage.
    Alpha,
    /// Shifted nodes of the contrast stage.
    Contrast,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one field and write it with its metadata sidecar.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "uniform")]
        nodes: NodeLayer,
        /// Keep every `stride`-th observation time.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Damping estimate from a field on damping-stage nodes.
    Alpha {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: PathBuf,
    },
    /// Minimum-contrast estimate from a field covering the contrast view.
    Contrast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: PathBuf,
        /// Damping value to plug in.
        #[arg(long)]
        alpha: f64,
    },
    /// Contrast plus coordinate plug-in estimates from a uniform-grid field.
    Coord {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
    /// Monte Carlo replications; writes a CSV and prints its summary.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Summary table of a run CSV.
    Summarize {
        csv: PathBuf,
        /// Also write the summary as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::case1_desk(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn xi_for(cfg: &ExperimentConfig, r: f64) -> ParamSpaceXi {
    cfg.xi.unwrap_or_else(|| ParamSpaceXi::for_ratio(r))
}

fn contrast_spec(cfg: &ExperimentConfig) -> ThinSpec {
    let c = cfg.contrast_stage;
    ThinSpec {
        margin: c.b,
        cells: c.m1,
        steps: c.n,
    }
}

fn write_summary(run: &RunRecord, csv: Option<&Path>) -> CliResult<()> {
    let s = summarize(run)?;
    print!("{}", s.to_table());
    if let Some(p) = csv {
        s.write_csv(BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate {
            common,
            nodes,
            stride,
            out,
        } => {
            let cfg = load(&common)?;
            let (y, z) = match nodes {
                NodeLayer::Uniform => (cfg.grid.y_nodes(), cfg.grid.z_nodes()),
                NodeLayer::Alpha => {
                    let n = NodeSet::shifted(cfg.alpha_stage.b, cfg.alpha_stage.m1)?;
                    (n.clone(), n)
                }
                NodeLayer::Contrast => {
                    let n = NodeSet::shifted(cfg.contrast_stage.b, cfg.contrast_stage.m1)?;
                    (n.clone(), n)
                }
            };
            let sim = SimConfig::unit(cfg.model, cfg.truncation, cfg.grid.n_time, cfg.scheme, cfg.seed);
            let rec = simulate_record(&sim, None, y, z, stride, SynthMode::Auto)?;
            write_field(&out, &rec)?;
            println!("wrote {} ({} x {} x {})", out.display(), rec.time.steps + 1, rec.y.len(), rec.z.len());
        }
        Command::Alpha { common, field } => {
            let cfg = load(&common)?;
            let rec = read_field(&field)?;
            let a = cfg.alpha_stage;
            let est = estimate_alpha(&rec, a.b, a.m1, a.p)?;
            println!("alpha_hat = {}", est.alpha_hat);
            println!("ms_fine = {}, ms_coarse = {}, in_range = {}", est.ms_fine, est.ms_coarse, est.in_range);
        }
        Command::Contrast { common, field, alpha } => {
            let cfg = load(&common)?;
            let rec = read_field(&field)?;
            let sums = cell_sums(&rec, &rec.thin(&contrast_spec(&cfg))?)?;
            let cache = PsiCache::new(cfg.psi_tol)?;
            let xi = xi_for(&cfg, sums.aspect_ratio());
            let res = estimate_vartheta(&sums, alpha, &xi, cfg.model.noise.family(), &cache, &cfg.optimizer)?;
            let v = res.vartheta_hat;
            println!("kappa = {}\neta = {}\ntheta2 = {}\nsigma2 = {}", v.kappa, v.eta, v.theta2, v.sigma2);
            println!("theta1 = {}\neta1 = {}", res.theta1_hat, res.eta1_hat);
            println!("objective = {}, converged = {}, alpha_clamped = {}", res.objective, res.converged, res.alpha_clamped);
        }
        Command::Coord { common, field, alpha } => {
            let cfg = load(&common)?;
            let rec = read_field(&field)?;
            let sums = cell_sums(&rec, &rec.thin(&contrast_spec(&cfg))?)?;
            let cache = PsiCache::new(cfg.psi_tol)?;
            let family = cfg.model.noise.family();
            let xi = xi_for(&cfg, sums.aspect_ratio());
            let res = estimate_vartheta(&sums, alpha, &xi, family, &cache, &cfg.optimizer)?;
            let est = coordinate_stage(&rec, cfg.coord_stage.n, &res.vartheta_hat, res.alpha_used, family)?;
            let e = est.estimates;
            if let Some(t0) = e.theta0 {
                println!("theta0 = {t0}");
            }
            if let Some(m0) = e.mu0 {
                println!("mu0 = {m0}");
            }
            println!("theta1 = {}\neta1 = {}\ntheta2 = {}\nsigma2 = {}", e.theta1, e.eta1, e.theta2, e.sigma2);
            println!("qv11 = {}, qv12 = {}", est.qv11, est.qv12);
            if let Some(r) = est.rates {
                println!("rate_consistency = {}, rate_clt = {}", r.consistency, r.clt);
            }
        }
        Command::Mc {
            common,
            reps,
            out,
            print_config,
        } => {
            let mut cfg = load(&common)?;
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if let Some(o) = out {
                cfg.output.csv = Some(o);
            }
            if print_config {
                print!("{}", cfg.to_toml()?);
                return Ok(());
            }
            let run = run_experiment(&cfg)?;
            match &cfg.output.csv {
                Some(p) => {
                    let mut w = BufWriter::new(File::create(p)?);
                    run.write_csv(&mut w)?;
                    w.flush()?;
                }
                None => run.write_csv(std::io::stdout().lock())?,
            }
            write_summary(&run, cfg.output.summary_csv.as_deref())?;
        }
        Command::Summarize { csv, out } => {
            let run = RunRecord::read_csv(File::open(&csv)?)?;
            write_summary(&run, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
