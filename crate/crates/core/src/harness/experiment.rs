//! Monte Carlo replications of the full estimation pipeline.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::alpha::{cell_sums, AlphaEstimate, AlphaSink, CellSums, IncrementSink};
use crate::contrast::{estimate_vartheta, ContrastResult, ParamSpaceXi};
use crate::coord::{approx_coordinate, coord_qv, coordinate_stage, thinned_times, CoordEstimates};
use crate::error::{Error, Result};
use crate::model::{thin, NodeSet, ThinSpec, ThinnedView, TimeAxis};
use crate::rng::rep_seed;
use crate::sim::{simulate_layers, FieldRecord, Layer, RecordSink, SimConfig, SynthMode};
use crate::special::PsiCache;

/// Estimator columns of a run, in CSV order after `rep, seed, status`.
pub const BASE_COLUMNS: [&str; 16] = [
    "alpha_hat",
    "theta0",
    "theta1",
    "eta1",
    "theta2",
    "sigma2",
    "mu0",
    "kappa_hat",
    "eta_hat",
    "contrast_objective",
    "theta1_coord",
    "eta1_coord",
    "theta2_coord",
    "sigma2_coord",
    "rate_consistency",
    "rate_clt",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

/// One replication: estimates (missing when a stage did not produce them) and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct RepRow {
    pub rep: usize,
    pub seed: u64,
    pub status: RowStatus,
    pub values: Vec<Option<f64>>,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub columns: Vec<String>,
    pub rows: Vec<RepRow>,
}

/// Everything one replication produced.
#[derive(Clone, Debug)]
pub struct RepOutcome {
    pub alpha: Option<AlphaEstimate>,
    /// Cell sums of the contrast view.
    pub sums: Option<CellSums>,
    pub contrast: Option<ContrastResult>,
    pub coord: Option<CoordEstimates>,
    pub mode_qv: Vec<f64>,
    pub unstable_modes: usize,
}

pub fn columns(cfg: &ExperimentConfig) -> Vec<String> {
    let mut c: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    c.extend(cfg.coord_stage.modes.iter().map(|m| format!("qv_{}_{}", m[0], m[1])));
    c
}

fn alpha_nodes(b: f64, m: usize) -> Result<NodeSet> {
    if b == 0.0 {
        Ok(NodeSet::uniform(m))
    } else {
        NodeSet::shifted(b, m)
    }
}

enum ContrastSource {
    Stored(ThinnedView),
    Direct(Box<IncrementSink>, NodeSet, usize),
}

/// Runs the pipeline of one replication with an explicit seed.
pub fn run_pipeline(cfg: &ExperimentConfig, seed: u64, out: &mut RepOutcome) -> Result<()> {
    let n = cfg.grid.n_time;
    let family = cfg.model.noise.family();
    let sim = SimConfig::unit(cfg.model, cfg.truncation, n, cfg.scheme, seed);
    let unit = TimeAxis::unit(n);

    let a = cfg.alpha_stage;
    let anodes = alpha_nodes(a.b, a.m1)?;
    let spec = |cells, steps| ThinSpec {
        margin: a.b,
        cells,
        steps,
    };
    let fine = thin(&unit, &anodes, &anodes, &spec(a.m1, n))?;
    let coarse = fine.coarsen(a.p)?;
    let mut alpha_sink = AlphaSink::new(fine, coarse, a.p)?;

    let s = cfg.store_stride();
    let store_time = TimeAxis {
        steps: n / s,
        dt: s as f64 / n as f64,
    };
    let (uy, uz) = (NodeSet::uniform(cfg.grid.m_space_y), NodeSet::uniform(cfg.grid.m_space_z));
    let mut store = RecordSink::new(store_time, uy.clone(), uz.clone());

    let c = cfg.contrast_stage;
    let cspec = ThinSpec {
        margin: c.b,
        cells: c.m1,
        steps: c.n,
    };
    let cstride = n / c.n;
    let stored = if cstride.is_multiple_of(s) {
        match thin(&store_time, &uy, &uz, &cspec) {
            Ok(view) => Some(view),
            Err(Error::MisalignedThinning { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let mut source = match stored {
        Some(view) => ContrastSource::Stored(view),
        None => {
            let nodes = NodeSet::shifted(c.b, c.m1)?;
            let t = TimeAxis {
                steps: c.n,
                dt: cstride as f64 / n as f64,
            };
            let view = thin(&t, &nodes, &nodes, &cspec)?;
            ContrastSource::Direct(Box::new(IncrementSink::new(view)?), nodes, cstride)
        }
    };

    let diag = {
        let mut layers = vec![
            Layer {
                y: anodes.clone(),
                z: anodes,
                stride: 1,
                mode: SynthMode::Auto,
                sink: &mut alpha_sink,
            },
            Layer {
                y: uy,
                z: uz,
                stride: s,
                mode: SynthMode::Auto,
                sink: &mut store,
            },
        ];
        if let ContrastSource::Direct(sink, nodes, stride) = &mut source {
            layers.push(Layer {
                y: nodes.clone(),
                z: nodes.clone(),
                stride: *stride,
                mode: SynthMode::Auto,
                sink: &mut **sink,
            });
        }
        simulate_layers(&sim, None, &mut layers)?
    };
    out.unstable_modes = diag.unstable_modes;
    let record: FieldRecord = store.finish(None)?;

    let alpha = alpha_sink.finish()?;
    out.alpha = Some(alpha);
    let sums: CellSums = match source {
        ContrastSource::Stored(view) => cell_sums(&record, &view)?,
        ContrastSource::Direct(sink, _, _) => (*sink).finish()?,
    };
    let xi = cfg.xi.unwrap_or_else(|| ParamSpaceXi::for_ratio(sums.aspect_ratio()));
    let cache = PsiCache::new(cfg.psi_tol)?;
    let res = estimate_vartheta(&sums, alpha.alpha_hat, &xi, family, &cache, &cfg.optimizer);
    out.sums = Some(sums);
    let res = res?;
    let vt = res.vartheta_hat;
    let alpha_used = res.alpha_used;
    out.contrast = Some(res);

    let times = thinned_times(record.time.steps, cfg.coord_stage.n)?;
    out.mode_qv = cfg
        .coord_stage
        .modes
        .iter()
        .map(|m| Ok(coord_qv(&approx_coordinate(&record, m[0], m[1], vt.kappa, vt.eta, &times)?)))
        .collect::<Result<_>>()?;
    out.coord = Some(coordinate_stage(&record, cfg.coord_stage.n, &vt, alpha_used, family)?);
    Ok(())
}

fn error_tag(e: &Error) -> &'static str {
    match e {
        Error::InvalidParam { .. } => "invalid_param",
        Error::NonPositiveOperator { .. } => "non_positive_operator",
        Error::BadNoiseParam { .. } => "bad_noise_param",
        Error::MisalignedThinning { .. } => "misaligned_thinning",
        Error::DegenerateView(_) => "degenerate_view",
        Error::IndivisibleCoarsening { .. } => "indivisible_coarsening",
        Error::FoldedRequiresUniformGrid => "folded_requires_uniform_grid",
        Error::NonUniformGrid => "non_uniform_grid",
        Error::ToleranceNotMet { .. } => "tolerance_not_met",
        Error::DegenerateDesign => "degenerate_design",
        Error::NonPositiveQV { .. } => "non_positive_qv",
        Error::InvertedModeOrder => "inverted_mode_order",
        Error::TooFewRows(_) => "too_few_rows",
        Error::BadMagic => "bad_magic",
        Error::DimMismatch(_) => "dim_mismatch",
        Error::TruncatedFile { .. } => "truncated_file",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Flattens an outcome into a CSV row.
pub fn to_row(cfg: &ExperimentConfig, rep: usize, seed: u64, out: &RepOutcome, err: Option<&Error>) -> RepRow {
    let mut values = vec![None; BASE_COLUMNS.len() + cfg.coord_stage.modes.len()];
    let mut flags = Vec::new();
    let mut set = |name: &str, v: f64| {
        let i = BASE_COLUMNS.iter().position(|c| *c == name).expect("known column");
        values[i] = finite(v);
    };
    if out.unstable_modes > 0 {
        flags.push(format!("em_unstable={}", out.unstable_modes));
    }
    if let Some(a) = &out.alpha {
        set("alpha_hat", a.alpha_hat);
        if !a.in_range {
            flags.push("alpha_out_of_range".into());
        }
    }
    if let Some(c) = &out.contrast {
        let v = c.vartheta_hat;
        set("theta1", c.theta1_hat);
        set("eta1", c.eta1_hat);
        set("theta2", v.theta2);
        set("sigma2", v.sigma2);
        set("kappa_hat", v.kappa);
        set("eta_hat", v.eta);
        set("contrast_objective", c.objective);
        if c.alpha_clamped {
            flags.push("alpha_clamped".into());
        }
        if !c.converged {
            flags.push("no_convergence".into());
        }
    }
    if let Some(q) = &out.coord {
        let e = q.estimates;
        if let Some(t0) = e.theta0 {
            set("theta0", t0);
        }
        if let Some(m0) = e.mu0 {
            set("mu0", m0);
        }
        set("theta1_coord", e.theta1);
        set("eta1_coord", e.eta1);
        set("theta2_coord", e.theta2);
        set("sigma2_coord", e.sigma2);
        if let Some(r) = q.rates {
            set("rate_consistency", r.consistency);
            set("rate_clt", r.clt);
        }
        if q.fragile {
            flags.push("fragile_alpha".into());
        }
    }
    for (i, v) in out.mode_qv.iter().enumerate() {
        values[BASE_COLUMNS.len() + i] = finite(*v);
    }
    let status = match err {
        Some(e) => {
            flags.push(format!("failed:{}", error_tag(e)));
            RowStatus::Failed
        }
        None => RowStatus::Ok,
    };
    RepRow {
        rep,
        seed,
        status,
        values,
        flags,
    }
}

/// Replication `rep` under the configured master seed.
pub fn run_rep(cfg: &ExperimentConfig, rep: usize) -> (RepRow, RepOutcome) {
    let seed = rep_seed(cfg.seed, rep as u64);
    let mut out = RepOutcome {
        alpha: None,
        sums: None,
        contrast: None,
        coord: None,
        mode_qv: Vec::new(),
        unstable_modes: 0,
    };
    let err = run_pipeline(cfg, seed, &mut out).err();
    (to_row(cfg, rep, seed, &out, err.as_ref()), out)
}

/// All replications, run in parallel and collected in rep order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let rows = (0..cfg.reps).into_par_iter().map(|r| run_rep(cfg, r).0).collect();
    Ok(RunRecord {
        columns: columns(cfg),
        rows,
    })
}

impl RunRecord {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        let mut header = vec!["rep".to_string(), "seed".into(), "status".into()];
        header.extend(self.columns.iter().cloned());
        header.push("flags".into());
        out.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![
                r.rep.to_string(),
                r.seed.to_string(),
                match r.status {
                    RowStatus::Ok => "ok".into(),
                    RowStatus::Failed => "failed".into(),
                },
            ];
            rec.extend(r.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            rec.push(r.flags.join(";"));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header.len() < 4 || header[..3] != ["rep", "seed", "status"] || header.last().map(String::as_str) != Some("flags") {
            return Err(Error::Config("csv header must be rep,seed,status,...,flags".into()));
        }
        let columns = header[3..header.len() - 1].to_vec();
        let parse_err = |what: &str, s: &str| Error::Config(format!("csv: bad {what} '{s}'"));
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let rep = rec[0].parse().map_err(|_| parse_err("rep", &rec[0]))?;
            let seed = rec[1].parse().map_err(|_| parse_err("seed", &rec[1]))?;
            let status = match &rec[2] {
                "ok" => RowStatus::Ok,
                "failed" => RowStatus::Failed,
                s => return Err(parse_err("status", s)),
            };
            let values = (3..rec.len() - 1)
                .map(|i| {
                    let s = &rec[i];
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        s.parse().map(Some).map_err(|_| parse_err("value", s))
                    }
                })
                .collect::<Result<_>>()?;
            let f = &rec[rec.len() - 1];
            let flags = if f.is_empty() { Vec::new() } else { f.split(';').map(str::to_string).collect() };
            rows.push(RepRow {
                rep,
                seed,
                status,
                values,
                flags,
            });
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of a column over rows with status `ok`.
    pub fn ok_values(&self, name: &str) -> Vec<f64> {
        let Some(i) = self.column(name) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter(|r| r.status == RowStatus::Ok)
            .filter_map(|r| r.values[i])
            .collect()
    }
}
