//! Model parameterization, the spectral eigensystem of the operator, observation
//! grids and thinned views over them.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PI2: f64 = PI * PI;

/// Absolute tolerance for matching thinned coordinates against parent nodes.
pub const ALIGN_TOL: f64 = 1e-9;

/// Noise family of the driving Q-Wiener process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Noise {
    /// Mode weights `lambda^{-alpha/2}`.
    Q1,
    /// Mode weights `mu^{-alpha/2}` with `mu = pi^2 (l1^2 + l2^2) + mu0`.
    Q2 { mu0: f64 },
}

impl Noise {
    pub fn is_q2(&self) -> bool {
        matches!(self, Noise::Q2 { .. })
    }

    pub fn family(&self) -> Family {
        match self {
            Noise::Q1 => Family::Q1,
            Noise::Q2 { .. } => Family::Q2,
        }
    }
}

/// Noise family without its parameters, as seen by the estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Q1,
    Q2,
}

/// Full parameterization of the SPDE
/// `dX = {theta2 Lap + theta1 d_y + eta1 d_z + theta0} X dt + sigma dW^Q`
/// on the unit square with Dirichlet boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta0: f64,
    pub theta1: f64,
    pub eta1: f64,
    pub theta2: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub noise: Noise,
}

impl ModelParams {
    pub fn new(
        theta0: f64,
        theta1: f64,
        eta1: f64,
        theta2: f64,
        sigma: f64,
        alpha: f64,
        noise: Noise,
    ) -> Result<Self> {
        let p = Self {
            theta0,
            theta1,
            eta1,
            theta2,
            sigma,
            alpha,
            noise,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks every invariant, including positive definiteness of the operator.
    ///
    /// `sigma = 0` is accepted: it describes a deterministic (noise free)
    /// configuration that the simulator and harness handle as a degenerate case.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.theta0,
            self.theta1,
            self.eta1,
            self.theta2,
            self.sigma,
            self.alpha,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParam {
                name: "params",
                reason: "all parameters must be finite".into(),
            });
        }
        if self.theta2 <= 0.0 {
            return Err(Error::InvalidParam {
                name: "theta2",
                reason: format!("must be positive, got {}", self.theta2),
            });
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidParam {
                name: "sigma",
                reason: format!("must be non-negative, got {}", self.sigma),
            });
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidParam {
                name: "alpha",
                reason: format!("must lie in (0, 2), got {}", self.alpha),
            });
        }
        if let Noise::Q2 { mu0 } = self.noise {
            if !(mu0.is_finite() && mu0 > -2.0 * PI2) {
                return Err(Error::BadNoiseParam { mu0 });
            }
        }
        let lambda11 = self.theta2 * (2.0 * PI2 + self.gamma());
        if lambda11 <= 0.0 {
            return Err(Error::NonPositiveOperator { lambda11 });
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.theta1 / self.theta2
    }

    pub fn eta(&self) -> f64 {
        self.eta1 / self.theta2
    }

    pub fn gamma(&self) -> f64 {
        let (k, e) = (self.kappa(), self.eta());
        -self.theta0 / self.theta2 + (k * k + e * e) / 4.0
    }

    pub fn spectrum(&self) -> Result<DerivedSpectrum> {
        derive_spectrum(self)
    }
}

/// Eigensystem of the operator for one parameter set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedSpectrum {
    pub kappa: f64,
    pub eta: f64,
    pub gamma_cap: f64,
    pub theta2: f64,
    params: ModelParams,
}

pub fn derive_spectrum(params: &ModelParams) -> Result<DerivedSpectrum> {
    params.validate()?;
    Ok(DerivedSpectrum {
        kappa: params.kappa(),
        eta: params.eta(),
        gamma_cap: params.gamma(),
        theta2: params.theta2,
        params: *params,
    })
}

impl DerivedSpectrum {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn lambda(&self, l1: usize, l2: usize) -> f64 {
        let s = (l1 * l1 + l2 * l2) as f64;
        self.theta2 * (PI2 * s + self.gamma_cap)
    }

    /// Q2 noise eigenvalue; `None` under Q1 noise.
    pub fn mu(&self, l1: usize, l2: usize) -> Option<f64> {
        match self.params.noise {
            Noise::Q1 => None,
            Noise::Q2 { mu0 } => Some(PI2 * (l1 * l1 + l2 * l2) as f64 + mu0),
        }
    }

    /// Diffusion coefficient of the coordinate process `x_{l1,l2}`.
    pub fn noise_sd(&self, l1: usize, l2: usize) -> f64 {
        let base = match self.params.noise {
            Noise::Q1 => self.lambda(l1, l2),
            Noise::Q2 { mu0 } => PI2 * (l1 * l1 + l2 * l2) as f64 + mu0,
        };
        self.params.sigma * base.powf(-self.params.alpha / 2.0)
    }

    pub fn e1(&self, l: usize, y: f64) -> f64 {
        axis_eigfun(l, y, self.kappa)
    }

    pub fn e2(&self, l: usize, z: f64) -> f64 {
        axis_eigfun(l, z, self.eta)
    }
}

/// `sqrt(2) sin(pi l x) exp(-tilt x / 2)`, exactly zero on the boundary.
pub fn axis_eigfun(l: usize, x: f64, tilt: f64) -> f64 {
    if x == 0.0 || x == 1.0 {
        return 0.0;
    }
    SQRT_2 * (PI * l as f64 * x).sin() * (-tilt * x / 2.0).exp()
}

pub fn eigfun(spec: &DerivedSpectrum, l1: usize, l2: usize, y: f64, z: f64) -> f64 {
    spec.e1(l1, y) * spec.e2(l2, z)
}

/// Node coordinates along one spatial axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeSet {
    /// `j / cells` for `j = 0..=cells`.
    Uniform { cells: usize },
    /// Strictly increasing coordinates in `[0, 1]`.
    Explicit { coords: Vec<f64> },
}

impl NodeSet {
    pub fn uniform(cells: usize) -> Self {
        NodeSet::Uniform { cells }
    }

    pub fn explicit(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParam {
                name: "nodes",
                reason: "empty node list".into(),
            });
        }
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidParam {
                name: "nodes",
                reason: "coordinates must lie in [0, 1]".into(),
            });
        }
        if coords.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParam {
                name: "nodes",
                reason: "coordinates must be strictly increasing".into(),
            });
        }
        Ok(NodeSet::Explicit { coords })
    }

    /// Nodes `margin + j (1 - 2 margin) / cells`, `j = 0..=cells`.
    pub fn shifted(margin: f64, cells: usize) -> Result<Self> {
        if !(0.0..0.5).contains(&margin) || cells == 0 {
            return Err(Error::InvalidParam {
                name: "margin",
                reason: format!("need margin in [0, 1/2) and cells >= 1, got {margin}, {cells}"),
            });
        }
        let delta = (1.0 - 2.0 * margin) / cells as f64;
        Self::explicit((0..=cells).map(|j| margin + j as f64 * delta).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            NodeSet::Uniform { cells } => cells + 1,
            NodeSet::Explicit { coords } => coords.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, j: usize) -> f64 {
        match self {
            NodeSet::Uniform { cells } => j as f64 / *cells as f64,
            NodeSet::Explicit { coords } => coords[j],
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.coord(j)).collect()
    }

    pub fn uniform_cells(&self) -> Option<usize> {
        match self {
            NodeSet::Uniform { cells } => Some(*cells),
            NodeSet::Explicit { .. } => None,
        }
    }

    /// Index of the node within [`ALIGN_TOL`] of `target`.
    pub fn locate(&self, target: f64) -> Option<usize> {
        match self {
            NodeSet::Uniform { cells } => {
                let scaled = target * *cells as f64;
                let idx = scaled.round();
                ((scaled - idx).abs() <= ALIGN_TOL && idx >= 0.0 && idx <= *cells as f64)
                    .then_some(idx as usize)
            }
            NodeSet::Explicit { coords } => {
                let pos = coords.partition_point(|&c| c < target);
                [pos.checked_sub(1), Some(pos)]
                    .into_iter()
                    .flatten()
                    .filter(|&i| i < coords.len())
                    .find(|&i| (coords[i] - target).abs() <= ALIGN_TOL)
            }
        }
    }
}

/// Observation times `t_i = i dt`, `i = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub steps: usize,
    pub dt: f64,
}

impl TimeAxis {
    pub fn unit(steps: usize) -> Self {
        Self {
            steps,
            dt: 1.0 / steps as f64,
        }
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }
}

/// The full uniform observation grid `(i/N, j/M1, k/M2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub n_time: usize,
    pub m_space_y: usize,
    pub m_space_z: usize,
}

impl SamplingGrid {
    pub fn new(n_time: usize, m_space_y: usize, m_space_z: usize) -> Result<Self> {
        if n_time < 2 || m_space_y < 2 || m_space_z < 2 {
            return Err(Error::InvalidParam {
                name: "grid",
                reason: format!("all counts must be >= 2, got ({n_time}, {m_space_y}, {m_space_z})"),
            });
        }
        Ok(Self {
            n_time,
            m_space_y,
            m_space_z,
        })
    }

    pub fn time_axis(&self) -> TimeAxis {
        TimeAxis::unit(self.n_time)
    }

    pub fn y_nodes(&self) -> NodeSet {
        NodeSet::uniform(self.m_space_y)
    }

    pub fn z_nodes(&self) -> NodeSet {
        NodeSet::uniform(self.m_space_z)
    }
}

/// Thinning request: spatial margin, cell count per axis and time steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThinSpec {
    pub margin: f64,
    pub cells: usize,
    pub steps: usize,
}

/// Index mapping realizing a thinned data set over a parent record.
#[derive(Clone, Debug, PartialEq)]
pub struct ThinnedView {
    pub t_idx: Vec<usize>,
    pub y_idx: Vec<usize>,
    pub z_idx: Vec<usize>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Thinned time step `floor(N/n) dt`.
    pub dt: f64,
    /// Spatial mesh `(1 - 2 margin) / cells`.
    pub delta: f64,
    pub margin: f64,
}

pub fn thin(time: &TimeAxis, y: &NodeSet, z: &NodeSet, spec: &ThinSpec) -> Result<ThinnedView> {
    let ThinSpec {
        margin,
        cells,
        steps,
    } = *spec;
    if !(0.0..0.5).contains(&margin) {
        return Err(Error::InvalidParam {
            name: "margin",
            reason: format!("must lie in [0, 1/2), got {margin}"),
        });
    }
    if cells == 0 || steps == 0 || steps > time.steps {
        return Err(Error::DegenerateView(format!(
            "need cells >= 1 and 1 <= steps <= {}, got cells={cells}, steps={steps}",
            time.steps
        )));
    }
    let stride = time.steps / steps;
    let delta = (1.0 - 2.0 * margin) / cells as f64;
    let place = |axis: &'static str, nodes: &NodeSet| -> Result<(Vec<usize>, Vec<f64>)> {
        let mut idx = Vec::with_capacity(cells + 1);
        let mut coords = Vec::with_capacity(cells + 1);
        for j in 0..=cells {
            let coord = margin + j as f64 * delta;
            let i = nodes
                .locate(coord)
                .ok_or(Error::MisalignedThinning { axis, index: j, coord })?;
            idx.push(i);
            coords.push(coord);
        }
        Ok((idx, coords))
    };
    let (y_idx, yc) = place("y", y)?;
    let (z_idx, zc) = place("z", z)?;
    Ok(ThinnedView {
        t_idx: (0..=steps).map(|i| i * stride).collect(),
        y_idx,
        z_idx,
        y: yc,
        z: zc,
        dt: stride as f64 * time.dt,
        delta,
        margin,
    })
}

impl SamplingGrid {
    pub fn thin(&self, spec: &ThinSpec) -> Result<ThinnedView> {
        thin(&self.time_axis(), &self.y_nodes(), &self.z_nodes(), spec)
    }
}

impl ThinnedView {
    pub fn cells_y(&self) -> usize {
        self.y_idx.len() - 1
    }

    pub fn cells_z(&self) -> usize {
        self.z_idx.len() - 1
    }

    pub fn steps(&self) -> usize {
        self.t_idx.len() - 1
    }

    /// `(y_{j-1} + y_j) / 2` for `j = 1..=cells`.
    pub fn mid_y(&self) -> Vec<f64> {
        self.y.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn mid_z(&self) -> Vec<f64> {
        self.z.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Space-over-root-time mesh ratio `delta / sqrt(dt)`.
    pub fn aspect_ratio(&self) -> f64 {
        self.delta / self.dt.sqrt()
    }

    /// Every `p`-th spatial node and every `p^2`-th time: `delta' = p delta`,
    /// `dt' = p^2 dt`, same margin.
    pub fn coarsen(&self, p: usize) -> Result<ThinnedView> {
        let (cy, cz, n) = (self.cells_y(), self.cells_z(), self.steps());
        if p < 2 || cy % p != 0 || cz % p != 0 || n % (p * p) != 0 {
            return Err(Error::IndivisibleCoarsening {
                p,
                cells: cy,
                steps: n,
            });
        }
        let every = |v: &[usize], s: usize| v.iter().step_by(s).copied().collect::<Vec<_>>();
        let every_f = |v: &[f64], s: usize| v.iter().step_by(s).copied().collect::<Vec<_>>();
        Ok(ThinnedView {
            t_idx: every(&self.t_idx, p * p),
            y_idx: every(&self.y_idx, p),
            z_idx: every(&self.z_idx, p),
            y: every_f(&self.y, p),
            z: every_f(&self.z, p),
            dt: self.dt * (p * p) as f64,
            delta: self.delta * p as f64,
            margin: self.margin,
        })
    }
}
