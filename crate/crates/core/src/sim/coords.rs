//! Joint evolution of the truncated coordinate processes `x_{l1,l2}`.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ou::{em_unstable, ou_transition_sd};
use crate::error::{Error, Result};
use crate::model::DerivedSpectrum;
use crate::rng::Philox;

/// Spectral cutoffs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub l1: usize,
    pub l2: usize,
}

impl Truncation {
    pub fn new(l1: usize, l2: usize) -> Result<Self> {
        if l1 == 0 || l2 == 0 {
            return Err(Error::InvalidParam {
                name: "truncation",
                reason: "cutoffs must be at least 1".into(),
            });
        }
        Ok(Self { l1, l2 })
    }

    pub fn square(l: usize) -> Result<Self> {
        Self::new(l, l)
    }
}

/// Time-stepping scheme for the coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Exact,
    /// Euler–Maruyama with `substeps` steps per observation interval.
    Em { substeps: usize },
}

impl Scheme {
    pub fn em() -> Self {
        Scheme::Em { substeps: 1 }
    }

    fn substeps(&self) -> usize {
        match self {
            Scheme::Exact => 1,
            Scheme::Em { substeps } => *substeps,
        }
    }
}

/// Streams the coefficient block `x_{l1,l2}(t_i)` forward one observation
/// interval at a time. Row `l1 - 1`, column `l2 - 1` holds mode `(l1, l2)`.
pub struct CoordinateSim {
    gen: Philox,
    decay: Array2<f64>,
    shock: Array2<f64>,
    state: Array2<f64>,
    substeps: usize,
    step: usize,
    unstable: usize,
}

impl CoordinateSim {
    pub fn new(spec: &DerivedSpectrum, trunc: Truncation, dt: f64, scheme: Scheme, seed: u64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParam {
                name: "dt",
                reason: "must be finite and positive".into(),
            });
        }
        let substeps = scheme.substeps();
        if substeps == 0 {
            return Err(Error::InvalidParam {
                name: "substeps",
                reason: "must be at least 1".into(),
            });
        }
        let h = dt / substeps as f64;
        let shape = (trunc.l1, trunc.l2);
        let mut decay = Array2::zeros(shape);
        let mut shock = Array2::zeros(shape);
        let mut unstable = 0;
        for ((i, j), d) in decay.indexed_iter_mut() {
            let lam = spec.lambda(i + 1, j + 1);
            let sd = spec.noise_sd(i + 1, j + 1);
            let s = &mut shock[(i, j)];
            match scheme {
                Scheme::Exact => {
                    *d = (-lam * h).exp();
                    *s = ou_transition_sd(lam, sd, h);
                }
                Scheme::Em { .. } => {
                    *d = 1.0 - lam * h;
                    *s = sd * h.sqrt();
                    unstable += em_unstable(lam, h) as usize;
                }
            }
        }
        Ok(Self {
            gen: Philox::new(seed),
            decay,
            shock,
            state: Array2::zeros(shape),
            substeps,
            step: 0,
            unstable,
        })
    }

    /// Replaces the initial coefficients `<X0, e_{l1,l2}>`.
    pub fn with_initial(mut self, x0: ArrayView2<f64>) -> Result<Self> {
        if x0.dim() != self.state.dim() {
            return Err(Error::DimMismatch(format!(
                "initial block {:?} vs truncation {:?}",
                x0.dim(),
                self.state.dim()
            )));
        }
        if self.step != 0 {
            return Err(Error::InvalidParam {
                name: "x0",
                reason: "initial block must be set before stepping".into(),
            });
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam {
                name: "x0",
                reason: "coefficients must be finite".into(),
            });
        }
        self.state.assign(&x0);
        Ok(self)
    }

    pub fn state(&self) -> ArrayView2<'_, f64> {
        self.state.view()
    }

    /// Number of observation intervals advanced so far.
    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Modes whose Euler–Maruyama recursion is unstable at the substep size.
    pub fn unstable_modes(&self) -> usize {
        self.unstable
    }

    /// Advances every coordinate by one observation interval.
    pub fn advance(&mut self) {
        let l2 = self.state.ncols();
        let gen = self.gen;
        let base = self.step * self.substeps;
        let substeps = self.substeps;
        let state = self.state.as_slice_mut().expect("standard layout");
        let decay = self.decay.as_slice().expect("standard layout");
        let shock = self.shock.as_slice().expect("standard layout");
        state
            .par_chunks_mut(l2)
            .zip(decay.par_chunks(l2))
            .zip(shock.par_chunks(l2))
            .enumerate()
            .for_each_init(
                || vec![0.0; l2],
                |gauss, (row, ((x, d), s))| {
                    for sub in 0..substeps {
                        let ctr = (base + sub + 1) as u32;
                        gen.fill_row(row as u32 + 1, ctr, gauss);
                        for k in 0..l2 {
                            x[k] = d[k] * x[k] + s[k] * gauss[k];
                        }
                    }
                },
            );
        self.step += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, Noise};

    fn spec() -> DerivedSpectrum {
        ModelParams::new(0.0, 0.2, 0.2, 0.2, 1.0, 0.5, Noise::Q1).unwrap().spectrum().unwrap()
    }

    #[test]
    fn zero_noise_zero_initial_stays_zero() {
        let s = ModelParams::new(0.0, 0.2, 0.2, 0.2, 0.0, 0.5, Noise::Q1).unwrap().spectrum().unwrap();
        let mut sim = CoordinateSim::new(&s, Truncation::square(8).unwrap(), 0.01, Scheme::Exact, 1).unwrap();
        for _ in 0..10 {
            sim.advance();
        }
        assert!(sim.state().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn initial_block_decays_deterministically() {
        let s = ModelParams::new(0.0, 0.2, 0.2, 0.2, 0.0, 0.5, Noise::Q1).unwrap().spectrum().unwrap();
        let x0 = Array2::from_elem((3, 4), 1.0);
        let mut sim = CoordinateSim::new(&s, Truncation::new(3, 4).unwrap(), 0.01, Scheme::Exact, 1)
            .unwrap()
            .with_initial(x0.view())
            .unwrap();
        sim.advance();
        let want = (-s.lambda(2, 3) * 0.01).exp();
        assert!((sim.state()[(1, 2)] - want).abs() < 1e-15);
        assert!(CoordinateSim::new(&s, Truncation::new(3, 4).unwrap(), 0.01, Scheme::Exact, 1)
            .unwrap()
            .with_initial(Array2::zeros((2, 2)).view())
            .is_err());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut sim = CoordinateSim::new(&spec(), Truncation::new(37, 23).unwrap(), 0.01, Scheme::Exact, 99)
                    .unwrap();
                for _ in 0..5 {
                    sim.advance();
                }
                sim.state().to_owned()
            })
        };
        let a = run(1);
        let b = run(4);
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn stationary_variance_of_low_mode() {
        // long run of mode (1,1), sampled every 2 relaxation times
        let s = spec();
        let lam = s.lambda(1, 1);
        let dt = 2.0 / lam;
        let mut sim = CoordinateSim::new(&s, Truncation::square(1).unwrap(), dt, Scheme::Exact, 5).unwrap();
        for _ in 0..20 {
            sim.advance();
        }
        let n = 20000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            sim.advance();
            let x = sim.state()[(0, 0)];
            s1 += x;
            s2 += x * x;
        }
        let var = s2 / n as f64 - (s1 / n as f64).powi(2);
        let want = lam.powf(-0.5) / (2.0 * lam);
        // lag-one correlation e^{-2} inflates the s.e. by sqrt((1+r^2)/(1-r^2))
        let r2 = (-4.0f64).exp();
        let se = want * (2.0 / n as f64).sqrt() * ((1.0 + r2) / (1.0 - r2)).sqrt();
        assert!((var - want).abs() < 3.0 * se, "{var} vs {want}");
    }

    #[test]
    fn em_flags_unstable_modes() {
        let sim = CoordinateSim::new(&spec(), Truncation::square(50).unwrap(), 0.01, Scheme::em(), 1).unwrap();
        assert!(sim.unstable_modes() > 0);
        let fine = CoordinateSim::new(&spec(), Truncation::square(2).unwrap(), 0.01, Scheme::em(), 1).unwrap();
        assert_eq!(fine.unstable_modes(), 0);
        assert!(CoordinateSim::new(&spec(), Truncation::square(2).unwrap(), 0.01, Scheme::Em { substeps: 0 }, 1).is_err());
    }
}
