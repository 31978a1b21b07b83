//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contrast::{ContrastOptions, ParamSpaceXi};
use crate::error::{Error, Result};
use crate::model::{ModelParams, NodeSet, SamplingGrid};
use crate::sim::{Scheme, Truncation};

fn two() -> usize {
    2
}

fn default_psi_tol() -> f64 {
    1e-10
}

fn default_modes() -> Vec<[usize; 2]> {
    vec![[1, 1], [1, 2]]
}

/// Damping stage: fine view of `m1` cells at margin `b` over all times, coarsened by `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaStage {
    pub b: f64,
    pub m1: usize,
    #[serde(default = "two")]
    pub p: usize,
}

/// Contrast stage: `m1 x m1` cells at margin `b` over `n` thinned times.
/// Thinning below the full `N` shrinks the aspect ratio; see the README.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastStage {
    pub b: f64,
    pub m1: usize,
    #[serde(default)]
    pub m2: Option<usize>,
    pub n: usize,
}

/// Coordinate stage: `n` thinned times on the full uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordStage {
    pub n: usize,
    /// Modes whose variations are reported; (1,1) and (1,2) are always used.
    #[serde(default = "default_modes")]
    pub modes: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub summary_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub truncation: Truncation,
    pub grid: SamplingGrid,
    #[serde(default)]
    pub scheme: Scheme,
    pub alpha_stage: AlphaStage,
    pub contrast_stage: ContrastStage,
    pub coord_stage: CoordStage,
    /// Parameter box; the default for the contrast view's aspect ratio if absent.
    #[serde(default)]
    pub xi: Option<ParamSpaceXi>,
    #[serde(default = "default_psi_tol")]
    pub psi_tol: f64,
    #[serde(default)]
    pub optimizer: ContrastOptions,
    pub reps: usize,
    #[serde(with = "crate::rng::seed_format")]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Desk-scale version of the first reference case.
    pub fn case1_desk() -> Self {
        Self {
            model: ModelParams {
                theta0: 0.0,
                theta1: 0.2,
                eta1: 0.2,
                theta2: 0.2,
                sigma: 1.0,
                alpha: 0.5,
                noise: crate::model::Noise::Q1,
            },
            truncation: Truncation { l1: 2000, l2: 2000 },
            grid: SamplingGrid {
                n_time: 1000,
                m_space_y: 200,
                m_space_z: 200,
            },
            scheme: Scheme::Exact,
            alpha_stage: AlphaStage { b: 0.005, m1: 200, p: 2 },
            contrast_stage: ContrastStage {
                b: 0.05,
                m1: 30,
                m2: None,
                n: 1000,
            },
            coord_stage: CoordStage {
                n: 100,
                modes: default_modes(),
            },
            xi: None,
            psi_tol: default_psi_tol(),
            optimizer: ContrastOptions::default(),
            reps: 20,
            seed: 20_240_501,
            output: OutputSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParam { name, reason });
        self.model.validate()?;
        Truncation::new(self.truncation.l1, self.truncation.l2)?;
        SamplingGrid::new(self.grid.n_time, self.grid.m_space_y, self.grid.m_space_z)?;
        if self.reps == 0 {
            return bad("reps", "need at least one replication".into());
        }
        if let Scheme::Em { substeps: 0 } = self.scheme {
            return bad("scheme.substeps", "must be at least 1".into());
        }
        if !(1e-12..=1e-6).contains(&self.psi_tol) {
            return bad("psi_tol", format!("must lie in [1e-12, 1e-6], got {}", self.psi_tol));
        }
        let a = &self.alpha_stage;
        NodeSet::shifted(a.b, a.m1)?;
        let n = self.grid.n_time;
        if a.p < 2 || !a.m1.is_multiple_of(a.p) || !n.is_multiple_of(a.p * a.p) {
            return Err(Error::IndivisibleCoarsening {
                p: a.p,
                cells: a.m1,
                steps: n,
            });
        }
        let c = &self.contrast_stage;
        NodeSet::shifted(c.b, c.m1)?;
        if c.m2.is_some_and(|m2| m2 != c.m1) {
            return bad("contrast_stage.m2", "only square views (m2 = m1) are supported".into());
        }
        let q = &self.coord_stage;
        for (name, k) in [("contrast_stage.n", c.n), ("coord_stage.n", q.n)] {
            if k == 0 || k > n {
                return bad(name, format!("need 1 <= n <= {n}, got {k}"));
            }
        }
        let (cs, qs) = self.strides();
        if !n.is_multiple_of(cs) {
            return bad("contrast_stage.n", format!("stride floor(N/n) = {cs} must divide N = {n}"));
        }
        if !n.is_multiple_of(qs) {
            return bad("coord_stage.n", format!("stride floor(N/n) = {qs} must divide N = {n}"));
        }
        if q.modes.iter().any(|m| m[0] == 0 || m[1] == 0) {
            return bad("coord_stage.modes", "mode indices start at 1".into());
        }
        if let Some(xi) = &self.xi {
            let c = &self.contrast_stage;
            let r = (1.0 - 2.0 * c.b) / c.m1 as f64 / ((n / c.n) as f64 / n as f64).sqrt();
            xi.validate(r)?;
        }
        Ok(())
    }

    /// Thinning strides `floor(N / n)` of the contrast and coordinate stages.
    pub fn strides(&self) -> (usize, usize) {
        let n = self.grid.n_time;
        (n / self.contrast_stage.n, n / self.coord_stage.n)
    }

    /// Time stride of the stored uniform-grid layer.
    pub fn store_stride(&self) -> usize {
        self.strides().1
    }
}
