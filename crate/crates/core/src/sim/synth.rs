//! Evaluation of the truncated eigen-expansion on node sets.
//!
//! With the exponential tilt factored out, the field at `(y_j, z_k)` is
//! `2 w_y(j) w_z(k) sum_{l1,l2} c_{l1 l2} sin(pi l1 y_j) sin(pi l2 z_k)`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::coords::Truncation;
use crate::error::{Error, Result};
use crate::model::{DerivedSpectrum, NodeSet};

/// Fixed row-block size; partial products are reduced in block order so the
/// result does not depend on the thread count.
const ROW_BLOCK: usize = 256;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    /// Dense matrix products `S_y^T C S_z`.
    Naive,
    /// Fold modes modulo `2M` and apply a fast sine transform (uniform grids).
    Folded,
    /// Folded on uniform grids with `L1 > 2 M1`, dense otherwise.
    #[default]
    Auto,
}

/// `sin(pi l x_j)` with exact zeros at the boundary and argument reduction on
/// uniform grids.
fn unit_sine(l: usize, nodes: &NodeSet, j: usize) -> f64 {
    match nodes {
        NodeSet::Uniform { cells } => {
            let m = *cells;
            let k = (l as u128 * j as u128 % (2 * m as u128)) as usize;
            if k == 0 || k == m {
                0.0
            } else {
                (PI * k as f64 / m as f64).sin()
            }
        }
        NodeSet::Explicit { .. } => {
            let x = nodes.coord(j);
            if x == 0.0 || x == 1.0 {
                0.0
            } else {
                (PI * l as f64 * x).sin()
            }
        }
    }
}

fn tilt(nodes: &NodeSet, rate: f64) -> Vec<f64> {
    nodes.coords().iter().map(|&x| (-0.5 * rate * x).exp()).collect()
}

fn symmetric(nodes: &NodeSet) -> bool {
    let c = nodes.coords();
    let n = c.len();
    (0..n).all(|j| (c[j] + c[n - 1 - j] - 1.0).abs() <= SYMMETRY_TOL)
}

/// Per-axis sine table. On node sets symmetric about 1/2 only the first half
/// of the nodes is stored, using `sin(pi l (1 - x)) = (-1)^{l+1} sin(pi l x)`.
struct AxisTable {
    table: Array2<f64>,
    n: usize,
    half: Option<usize>,
}

impl AxisTable {
    fn new(l: usize, nodes: &NodeSet) -> Self {
        let n = nodes.len();
        let half = symmetric(nodes).then_some(n.div_ceil(2));
        let cols = half.unwrap_or(n);
        let table = Array2::from_shape_fn((l, cols), |(i, j)| unit_sine(i + 1, nodes, j));
        Self { table, n, half }
    }

    /// `C · S` for a block of rows of `C` (shape rows × L).
    fn right_apply(&self, c: ArrayView2<f64>) -> Array2<f64> {
        match self.half {
            None => c.dot(&self.table),
            Some(h) => {
                let odd = c.slice(s![.., 0..;2]).dot(&self.table.slice(s![0..;2, ..]));
                let even = c.slice(s![.., 1..;2]).dot(&self.table.slice(s![1..;2, ..]));
                let mut out = Array2::zeros((c.nrows(), self.n));
                for k in 0..h {
                    let mirror = self.n - 1 - k;
                    for r in 0..c.nrows() {
                        let (a, b) = (odd[(r, k)], even[(r, k)]);
                        out[(r, k)] = a + b;
                        if mirror != k {
                            out[(r, mirror)] = a - b;
                        }
                    }
                }
                out
            }
        }
    }

    /// Full `L × n` table restricted to rows `lo..hi`.
    fn rows(&self, lo: usize, hi: usize) -> Array2<f64> {
        match self.half {
            None => self.table.slice(s![lo..hi, ..]).to_owned(),
            Some(h) => Array2::from_shape_fn((hi - lo, self.n), |(i, j)| {
                let l = lo + i + 1;
                if j < h {
                    self.table[(lo + i, j)]
                } else if l % 2 == 1 {
                    self.table[(lo + i, self.n - 1 - j)]
                } else {
                    -self.table[(lo + i, self.n - 1 - j)]
                }
            }),
        }
    }
}

struct Dense {
    y: AxisTable,
    z: AxisTable,
}

struct AxisFold {
    cells: usize,
    /// `(folded index - 1, sign)` per mode, `None` for residues 0 and M.
    map: Vec<Option<(usize, f64)>>,
    fft: Arc<dyn Fft<f64>>,
}

impl AxisFold {
    fn new(l: usize, cells: usize, planner: &mut FftPlanner<f64>) -> Self {
        let period = 2 * cells;
        let map = (1..=l)
            .map(|mode| {
                let rho = mode % period;
                if rho == 0 || rho == cells {
                    None
                } else if rho < cells {
                    Some((rho - 1, 1.0))
                } else {
                    Some((period - rho - 1, -1.0))
                }
            })
            .collect();
        Self {
            cells,
            map,
            fft: planner.plan_fft_forward(period),
        }
    }

    /// In-place DST-I: `v[k-1] <- sum_rho v[rho-1] sin(pi rho k / M)`.
    fn dst(&self, v: &mut [f64], buf: &mut [Complex64], scratch: &mut [Complex64]) {
        buf.fill(Complex64::new(0.0, 0.0));
        for (rho, &x) in v.iter().enumerate() {
            buf[rho + 1] = Complex64::new(x, 0.0);
        }
        self.fft.process_with_scratch(buf, scratch);
        for (k, out) in v.iter_mut().enumerate() {
            *out = -buf[k + 1].im;
        }
    }

    /// Folds one coefficient row (modes `1..=src.len()`) into `out`.
    fn fold_into(&self, src: &[f64], out: &mut [f64]) {
        let m = self.cells;
        out.fill(0.0);
        for blk in src.chunks(2 * m) {
            // blk[i] is residue i + 1; residues m and 2m vanish on the grid
            let up = blk.len().min(m - 1);
            for (o, &v) in out[..up].iter_mut().zip(&blk[..up]) {
                *o += v;
            }
            for i in m..blk.len().min(2 * m - 1) {
                out[2 * m - 2 - i] -= blk[i];
            }
        }
    }

    fn inner(&self) -> usize {
        self.cells - 1
    }
}

struct Folded {
    y: AxisFold,
    z: AxisFold,
}

enum Plan {
    Dense(Dense),
    Folded(Folded),
}

/// Precomputed synthesis operator for one pair of node sets.
pub struct Synthesizer {
    plan: Plan,
    tilt_y: Vec<f64>,
    tilt_z: Vec<f64>,
    trunc: Truncation,
    mode: SynthMode,
}

impl Synthesizer {
    pub fn new(spec: &DerivedSpectrum, trunc: Truncation, y: &NodeSet, z: &NodeSet, mode: SynthMode) -> Result<Self> {
        let uniform = match (y.uniform_cells(), z.uniform_cells()) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        };
        let resolved = match mode {
            SynthMode::Folded if uniform.is_none() => return Err(Error::FoldedRequiresUniformGrid),
            SynthMode::Auto => match uniform {
                Some((m1, _)) if trunc.l1 > 2 * m1 => SynthMode::Folded,
                _ => SynthMode::Naive,
            },
            m => m,
        };
        let plan = match resolved {
            SynthMode::Folded => {
                let (m1, m2) = uniform.expect("checked above");
                let mut planner = FftPlanner::new();
                Plan::Folded(Folded {
                    y: AxisFold::new(trunc.l1, m1, &mut planner),
                    z: AxisFold::new(trunc.l2, m2, &mut planner),
                })
            }
            _ => Plan::Dense(Dense {
                y: AxisTable::new(trunc.l1, y),
                z: AxisTable::new(trunc.l2, z),
            }),
        };
        Ok(Self {
            plan,
            tilt_y: tilt(y, spec.kappa),
            tilt_z: tilt(z, spec.eta),
            trunc,
            mode: resolved,
        })
    }

    /// Mode actually used after resolving `Auto`.
    pub fn mode(&self) -> SynthMode {
        self.mode
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.tilt_y.len(), self.tilt_z.len())
    }

    /// Field values on the node grid for coefficient block `c` (L1 × L2).
    pub fn synthesize(&self, c: ArrayView2<f64>) -> Result<Array2<f64>> {
        let c = c.as_standard_layout();
        let c = c.view();
        if c.dim() != (self.trunc.l1, self.trunc.l2) {
            return Err(Error::DimMismatch(format!(
                "coefficients {:?} vs truncation ({}, {})",
                c.dim(),
                self.trunc.l1,
                self.trunc.l2
            )));
        }
        let mut out = match &self.plan {
            Plan::Dense(d) => self.dense(d, c),
            Plan::Folded(f) => self.folded(f, c),
        };
        for (j, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let wy = 2.0 * self.tilt_y[j];
            for (v, &wz) in row.iter_mut().zip(&self.tilt_z) {
                *v *= wy * wz;
            }
        }
        Ok(out)
    }

    fn blocks(&self) -> Vec<(usize, usize)> {
        (0..self.trunc.l1)
            .step_by(ROW_BLOCK)
            .map(|lo| (lo, (lo + ROW_BLOCK).min(self.trunc.l1)))
            .collect()
    }

    fn dense(&self, d: &Dense, c: ArrayView2<f64>) -> Array2<f64> {
        let partials: Vec<Array2<f64>> = self
            .blocks()
            .into_par_iter()
            .map(|(lo, hi)| {
                let right = d.z.right_apply(c.slice(s![lo..hi, ..]));
                d.y.rows(lo, hi).t().dot(&right)
            })
            .collect();
        sum_in_order(partials)
    }

    fn folded(&self, f: &Folded, c: ArrayView2<f64>) -> Array2<f64> {
        let (n1, n2) = (f.y.inner(), f.z.inner());
        let partials: Vec<Array2<f64>> = self
            .blocks()
            .into_par_iter()
            .map(|(lo, hi)| {
                let mut b = Array2::<f64>::zeros((n1, n2));
                let mut tmp = vec![0.0; n2];
                for l1 in lo..hi {
                    let Some((r1, s1)) = f.y.map[l1] else { continue };
                    let row = c.row(l1);
                    let src = row.as_slice().expect("contiguous coefficient rows");
                    f.z.fold_into(src, &mut tmp);
                    let mut dst = b.row_mut(r1);
                    for (d, &t) in dst.iter_mut().zip(&tmp) {
                        *d += s1 * t;
                    }
                }
                b
            })
            .collect();
        let mut b = sum_in_order(partials);
        // rows: transform along z
        b.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n2)
            .for_each_init(|| dst_buffers(&f.z), |(buf, scratch), v| f.z.dst(v, buf, scratch));
        // columns: transform along y
        let mut bt = b.t().as_standard_layout().into_owned();
        bt.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n1)
            .for_each_init(|| dst_buffers(&f.y), |(buf, scratch), v| f.y.dst(v, buf, scratch));
        let mut out = Array2::zeros((n1 + 2, n2 + 2));
        out.slice_mut(s![1..=n1, 1..=n2]).assign(&bt.t());
        out
    }
}

fn dst_buffers(axis: &AxisFold) -> (Vec<Complex64>, Vec<Complex64>) {
    (
        vec![Complex64::new(0.0, 0.0); 2 * axis.cells],
        vec![Complex64::new(0.0, 0.0); axis.fft.get_inplace_scratch_len()],
    )
}

fn sum_in_order(parts: Vec<Array2<f64>>) -> Array2<f64> {
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("at least one row block");
    for p in it {
        acc += &p;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{eigfun, ModelParams, Noise};
    use crate::rng::Philox;

    fn spec() -> DerivedSpectrum {
        ModelParams::new(0.0, 0.2, 0.2, 0.2, 1.0, 0.5, Noise::Q1).unwrap().spectrum().unwrap()
    }

    fn random_block(l1: usize, l2: usize, seed: u64) -> Array2<f64> {
        let g = Philox::new(seed);
        Array2::from_shape_fn((l1, l2), |(i, j)| g.normal(i as u32 + 1, j as u32 + 1, 0))
    }

    #[test]
    fn single_mode_reproduces_eigenfunction() {
        let s = spec();
        let t = Truncation::new(4, 3).unwrap();
        let mut c = Array2::zeros((4, 3));
        c[(0, 0)] = 1.0;
        let ny = NodeSet::uniform(10);
        let nz = NodeSet::explicit(vec![0.0, 0.13, 0.5, 0.77, 1.0]).unwrap();
        let syn = Synthesizer::new(&s, t, &ny, &nz, SynthMode::Naive).unwrap();
        let x = syn.synthesize(c.view()).unwrap();
        for j in 0..ny.len() {
            for k in 0..nz.len() {
                let want = eigfun(&s, 1, 1, ny.coord(j), nz.coord(k));
                assert!((x[(j, k)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn boundary_is_exactly_zero() {
        let s = spec();
        let t = Truncation::square(70).unwrap();
        let c = random_block(70, 70, 3);
        for mode in [SynthMode::Naive, SynthMode::Folded] {
            let g = NodeSet::uniform(16);
            let x = Synthesizer::new(&s, t, &g, &g, mode).unwrap().synthesize(c.view()).unwrap();
            for i in 0..17 {
                for v in [x[(0, i)], x[(16, i)], x[(i, 0)], x[(i, 16)]] {
                    assert_eq!(v, 0.0, "{mode:?}");
                }
            }
        }
    }

    #[test]
    fn folded_matches_naive() {
        let s = spec();
        for (l, m) in [(64, 16), (256, 32), (128, 16), (33, 8), (20, 10)] {
            let t = Truncation::square(l).unwrap();
            let c = random_block(l, l, l as u64);
            let g = NodeSet::uniform(m);
            let a = Synthesizer::new(&s, t, &g, &g, SynthMode::Naive).unwrap().synthesize(c.view()).unwrap();
            let b = Synthesizer::new(&s, t, &g, &g, SynthMode::Folded).unwrap().synthesize(c.view()).unwrap();
            let d = (&a - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(d < 1e-9, "L={l} M={m} diff={d:e}");
        }
    }

    #[test]
    fn symmetric_half_tables_match_direct_sum() {
        let s = spec();
        let t = Truncation::new(9, 7).unwrap();
        let c = random_block(9, 7, 11);
        let nodes = NodeSet::shifted(0.05, 6).unwrap();
        let syn = Synthesizer::new(&s, t, &nodes, &nodes, SynthMode::Naive).unwrap();
        let x = syn.synthesize(c.view()).unwrap();
        for j in 0..nodes.len() {
            for k in 0..nodes.len() {
                let mut want = 0.0;
                for l1 in 1..=9 {
                    for l2 in 1..=7 {
                        want += c[(l1 - 1, l2 - 1)] * eigfun(&s, l1, l2, nodes.coord(j), nodes.coord(k));
                    }
                }
                assert!((x[(j, k)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn auto_mode_and_errors() {
        let s = spec();
        let g = NodeSet::uniform(8);
        let e = NodeSet::explicit(vec![0.2, 0.4]).unwrap();
        let big = Truncation::square(40).unwrap();
        let small = Truncation::square(10).unwrap();
        assert_eq!(Synthesizer::new(&s, big, &g, &g, SynthMode::Auto).unwrap().mode(), SynthMode::Folded);
        assert_eq!(Synthesizer::new(&s, small, &g, &g, SynthMode::Auto).unwrap().mode(), SynthMode::Naive);
        assert_eq!(Synthesizer::new(&s, big, &e, &g, SynthMode::Auto).unwrap().mode(), SynthMode::Naive);
        assert!(matches!(
            Synthesizer::new(&s, big, &e, &g, SynthMode::Folded),
            Err(Error::FoldedRequiresUniformGrid)
        ));
        let syn = Synthesizer::new(&s, small, &g, &g, SynthMode::Naive).unwrap();
        assert!(syn.synthesize(Array2::zeros((3, 3)).view()).is_err());
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let s = spec();
        let t = Truncation::square(600).unwrap();
        let c = random_block(600, 600, 8);
        let g = NodeSet::uniform(40);
        for mode in [SynthMode::Naive, SynthMode::Folded] {
            let syn = Synthesizer::new(&s, t, &g, &g, mode).unwrap();
            let run = |n| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .unwrap()
                    .install(|| syn.synthesize(c.view()).unwrap())
            };
            let (a, b) = (run(1), run(3));
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
