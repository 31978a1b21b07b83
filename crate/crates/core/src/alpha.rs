//! Triple-increment statistics and the damping estimator.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ThinSpec, ThinnedView};
use crate::sim::{FieldRecord, FieldSink};

/// Spatial double difference over every cell of the view at one time.
fn double_diff(slab: ArrayView2<f64>, view: &ThinnedView, out: &mut Array2<f64>) {
    let (yi, zi) = (&view.y_idx, &view.z_idx);
    for j in 1..yi.len() {
        let (a, b) = (slab.row(yi[j]), slab.row(yi[j - 1]));
        for k in 1..zi.len() {
            out[(j - 1, k - 1)] = a[zi[k]] - a[zi[k - 1]] - b[zi[k]] + b[zi[k - 1]];
        }
    }
}

fn check_view(values: ArrayView3<f64>, view: &ThinnedView) -> Result<()> {
    if view.steps() == 0 || view.cells_y() == 0 || view.cells_z() == 0 {
        return Err(Error::DegenerateView("need at least one time step and one cell per axis".into()));
    }
    let (nt, ny, nz) = values.dim();
    let last = |v: &[usize]| v.iter().copied().max().unwrap_or(0);
    if last(&view.t_idx) >= nt || last(&view.y_idx) >= ny || last(&view.z_idx) >= nz {
        return Err(Error::DimMismatch(format!("view exceeds field of shape {:?}", values.dim())));
    }
    Ok(())
}

/// `T_{i,j,k}` for `i = 1..=n`, shape `(n, m1, m2)`.
pub fn triple_increments(values: ArrayView3<f64>, view: &ThinnedView) -> Result<Array3<f64>> {
    check_view(values, view)?;
    let (n, m1, m2) = (view.steps(), view.cells_y(), view.cells_z());
    let mut out = Array3::zeros((n, m1, m2));
    let mut prev = Array2::zeros((m1, m2));
    let mut cur = Array2::zeros((m1, m2));
    double_diff(values.index_axis(ndarray::Axis(0), view.t_idx[0]), view, &mut prev);
    for i in 1..=n {
        double_diff(values.index_axis(ndarray::Axis(0), view.t_idx[i]), view, &mut cur);
        Zip::from(out.slice_mut(s![i - 1, .., ..]))
            .and(&cur)
            .and(&prev)
            .for_each(|t, &c, &p| *t = c - p);
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(out)
}

/// Per-cell sums of `T^2` (i = 1..=n) and of `(T_i + T_{i+1})^2` (i = 1..n-1).
#[derive(Clone, Debug, PartialEq)]
pub struct CellSums {
    pub sq: Array2<f64>,
    pub sq_tilde: Array2<f64>,
    pub steps: usize,
    pub dt: f64,
    pub delta: f64,
    pub mid_y: Vec<f64>,
    pub mid_z: Vec<f64>,
}

impl CellSums {
    pub fn cells(&self) -> usize {
        self.sq.len()
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.delta / self.dt.sqrt()
    }

    pub fn total_sq(&self) -> f64 {
        self.sq.iter().sum()
    }

    pub fn total_sq_tilde(&self) -> f64 {
        self.sq_tilde.iter().sum()
    }

    /// Rescaled sums `V = S / (n dt^alpha)` and `Ṽ = S̃ / (n (2 dt)^alpha)`.
    pub fn rescale(&self, alpha: f64) -> Result<IncrementStats> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidParam {
                name: "alpha",
                reason: format!("must lie in (0, 2), got {alpha}"),
            });
        }
        let n = self.steps as f64;
        let c = 1.0 / (n * self.dt.powf(alpha));
        let ct = 1.0 / (n * (2.0 * self.dt).powf(alpha));
        Ok(IncrementStats {
            sum_sq_t: self.total_sq(),
            sum_sq_ttilde: self.total_sq_tilde(),
            cells_y: self.sq.nrows(),
            cells_z: self.sq.ncols(),
            steps: self.steps,
            alpha,
            r: self.aspect_ratio(),
            v: self.sq.mapv(|x| x * c),
            v_tilde: self.sq_tilde.mapv(|x| x * ct),
            mid_y: self.mid_y.clone(),
            mid_z: self.mid_z.clone(),
        })
    }
}

/// Rescaled cell statistics at a given damping value.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementStats {
    pub sum_sq_t: f64,
    pub sum_sq_ttilde: f64,
    pub cells_y: usize,
    pub cells_z: usize,
    pub steps: usize,
    pub alpha: f64,
    /// Aspect ratio `delta / sqrt(dt)` of the view.
    pub r: f64,
    pub v: Array2<f64>,
    pub v_tilde: Array2<f64>,
    pub mid_y: Vec<f64>,
    pub mid_z: Vec<f64>,
}

/// Streaming accumulator of [`CellSums`] over one view of a layer.
pub struct IncrementSink {
    view: ThinnedView,
    stride: usize,
    seen: usize,
    prev_d: Array2<f64>,
    cur_d: Array2<f64>,
    prev_t: Option<Array2<f64>>,
    sq: Array2<f64>,
    sq_tilde: Array2<f64>,
}

impl IncrementSink {
    pub fn new(view: ThinnedView) -> Result<Self> {
        if view.steps() == 0 || view.cells_y() == 0 || view.cells_z() == 0 {
            return Err(Error::DegenerateView("need at least one time step and one cell per axis".into()));
        }
        let stride = view.t_idx[1] - view.t_idx[0];
        if view.t_idx[0] != 0 || view.t_idx.windows(2).any(|w| w[1] - w[0] != stride) {
            return Err(Error::DegenerateView("time indices must be 0, s, 2s, ...".into()));
        }
        let shape = (view.cells_y(), view.cells_z());
        Ok(Self {
            view,
            stride,
            seen: 0,
            prev_d: Array2::zeros(shape),
            cur_d: Array2::zeros(shape),
            prev_t: None,
            sq: Array2::zeros(shape),
            sq_tilde: Array2::zeros(shape),
        })
    }

    pub fn view(&self) -> &ThinnedView {
        &self.view
    }

    pub fn finish(self) -> Result<CellSums> {
        let want = self.view.steps() + 1;
        if self.seen != want {
            return Err(Error::DimMismatch(format!("received {} of {want} view times", self.seen)));
        }
        Ok(CellSums {
            sq: self.sq,
            sq_tilde: self.sq_tilde,
            steps: self.view.steps(),
            dt: self.view.dt,
            delta: self.view.delta,
            mid_y: self.view.mid_y(),
            mid_z: self.view.mid_z(),
        })
    }
}

impl FieldSink for IncrementSink {
    fn accept(&mut self, index: usize, slab: ArrayView2<f64>) -> Result<()> {
        if !index.is_multiple_of(self.stride) || index / self.stride > self.view.steps() {
            return Ok(());
        }
        if index / self.stride != self.seen {
            return Err(Error::DimMismatch(format!("view time {index} out of order")));
        }
        let (ny, nz) = slab.dim();
        if self.view.y_idx.iter().any(|&j| j >= ny) || self.view.z_idx.iter().any(|&k| k >= nz) {
            return Err(Error::DimMismatch(format!("view exceeds slab of shape {:?}", slab.dim())));
        }
        double_diff(slab, &self.view, &mut self.cur_d);
        if self.seen > 0 {
            let t = &self.cur_d - &self.prev_d;
            Zip::from(&mut self.sq).and(&t).for_each(|s, &x| *s += x * x);
            if let Some(pt) = &self.prev_t {
                Zip::from(&mut self.sq_tilde)
                    .and(&t)
                    .and(pt)
                    .for_each(|s, &x, &p| *s += (x + p) * (x + p));
            }
            self.prev_t = Some(t);
        }
        std::mem::swap(&mut self.prev_d, &mut self.cur_d);
        self.seen += 1;
        Ok(())
    }
}

/// Cell sums of a stored record over a view.
pub fn cell_sums(record: &FieldRecord, view: &ThinnedView) -> Result<CellSums> {
    check_view(record.values(), view)?;
    let mut sink = IncrementSink::new(view.clone())?;
    for (i, slab) in record.values().outer_iter().enumerate() {
        sink.accept(i, slab)?;
    }
    sink.finish()
}

/// Rescaled per-cell statistics of a stored record at damping `alpha`.
pub fn rescaled_cell_sums(record: &FieldRecord, view: &ThinnedView, alpha: f64) -> Result<IncrementStats> {
    cell_sums(record, view)?.rescale(alpha)
}

/// Damping estimate with its two mean squares.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha_hat: f64,
    pub ms_fine: f64,
    pub ms_coarse: f64,
    pub p: usize,
    /// Whether the raw estimate lies in (0, 2).
    pub in_range: bool,
}

/// `log(ms_coarse / ms_fine) / log(p^2)`, reported raw.
pub fn alpha_from_mean_squares(ms_fine: f64, ms_coarse: f64, p: usize) -> AlphaEstimate {
    let alpha_hat = (ms_coarse / ms_fine).ln() / ((p * p) as f64).ln();
    AlphaEstimate {
        alpha_hat,
        ms_fine,
        ms_coarse,
        p,
        in_range: alpha_hat > 0.0 && alpha_hat < 2.0,
    }
}

fn mean_square(c: &CellSums) -> f64 {
    c.total_sq() / (c.cells() * c.steps) as f64
}

/// Fine view with margin `b` and `m1` cells per axis over all parent times,
/// paired with its `p`-coarsening.
pub fn alpha_views(time_steps: usize, b: f64, m1: usize, p: usize, thin: impl Fn(&ThinSpec) -> Result<ThinnedView>) -> Result<(ThinnedView, ThinnedView)> {
    if p < 2 || !m1.is_multiple_of(p) || !time_steps.is_multiple_of(p * p) {
        return Err(Error::IndivisibleCoarsening {
            p,
            cells: m1,
            steps: time_steps,
        });
    }
    let fine = thin(&ThinSpec {
        margin: b,
        cells: m1,
        steps: time_steps,
    })?;
    let coarse = fine.coarsen(p)?;
    Ok((fine, coarse))
}

/// Streaming damping estimator over a single layer.
pub struct AlphaSink {
    fine: IncrementSink,
    coarse: IncrementSink,
    p: usize,
}

impl AlphaSink {
    pub fn new(fine: ThinnedView, coarse: ThinnedView, p: usize) -> Result<Self> {
        Ok(Self {
            fine: IncrementSink::new(fine)?,
            coarse: IncrementSink::new(coarse)?,
            p,
        })
    }

    pub fn finish(self) -> Result<AlphaEstimate> {
        let f = self.fine.finish()?;
        let c = self.coarse.finish()?;
        Ok(alpha_from_mean_squares(mean_square(&f), mean_square(&c), self.p))
    }
}

impl FieldSink for AlphaSink {
    fn accept(&mut self, index: usize, slab: ArrayView2<f64>) -> Result<()> {
        self.fine.accept(index, slab)?;
        self.coarse.accept(index, slab)
    }
}

/// Damping estimate from a stored record: fine view at margin `b` with `m1`
/// cells and all record times, coarse view by factor `p`.
pub fn estimate_alpha(record: &FieldRecord, b: f64, m1: usize, p: usize) -> Result<AlphaEstimate> {
    let (fine, coarse) = alpha_views(record.time.steps, b, m1, p, |s| record.thin(s))?;
    check_view(record.values(), &fine)?;
    let mut sink = AlphaSink::new(fine, coarse, p)?;
    for (i, slab) in record.values().outer_iter().enumerate() {
        sink.accept(i, slab)?;
    }
    sink.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SamplingGrid;

    fn record(n: usize, m: usize, f: impl Fn(f64, f64, f64) -> f64) -> FieldRecord {
        FieldRecord::from_fn(&SamplingGrid::new(n, m, m).unwrap(), f)
    }

    fn full(rec: &FieldRecord) -> ThinnedView {
        rec.thin(&ThinSpec {
            margin: 0.0,
            cells: rec.y.len() - 1,
            steps: rec.time.steps,
        })
        .unwrap()
    }

    #[test]
    fn bilinear_in_space_linear_in_time() {
        let rec = record(4, 5, |t, y, z| t * y * z);
        let t = triple_increments(rec.values(), &full(&rec)).unwrap();
        let want = 0.25 * 0.2 * 0.2;
        assert!(t.iter().all(|&v| (v - want).abs() < 1e-15));
    }

    #[test]
    fn streaming_matches_array_sums() {
        let rec = record(8, 6, |t, y, z| (3.0 * t + y * y).sin() * (z + t * t).cos() + y * z * t);
        let view = full(&rec);
        let t = triple_increments(rec.values(), &view).unwrap();
        let c = cell_sums(&rec, &view).unwrap();
        for j in 0..6 {
            for k in 0..6 {
                let s: f64 = (0..8).map(|i| t[(i, j, k)].powi(2)).sum();
                let st: f64 = (0..7).map(|i| (t[(i, j, k)] + t[(i + 1, j, k)]).powi(2)).sum();
                assert!((c.sq[(j, k)] - s).abs() < 1e-15);
                assert!((c.sq_tilde[(j, k)] - st).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn alpha_from_ratio() {
        assert!((alpha_from_mean_squares(1.0, 4.0, 2).alpha_hat - 1.0).abs() < 1e-15);
        assert_eq!(alpha_from_mean_squares(2.0, 2.0, 2).alpha_hat, 0.0);
        assert!(!alpha_from_mean_squares(2.0, 2.0, 2).in_range);
        assert!((alpha_from_mean_squares(1.0, 9.0, 3).alpha_hat - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coarsening_divisibility() {
        let rec = record(8, 6, |t, y, z| t + y * z);
        assert!(matches!(estimate_alpha(&rec, 0.0, 6, 4), Err(Error::IndivisibleCoarsening { .. })));
        assert!(matches!(estimate_alpha(&rec, 0.0, 3, 2), Err(Error::IndivisibleCoarsening { .. })));
    }

    #[test]
    fn rescale_scaling() {
        let rec = record(4, 4, |t, y, z| (t * 7.0).sin() * y * z * z);
        let c = cell_sums(&rec, &full(&rec)).unwrap();
        let a = c.rescale(0.7).unwrap();
        let mut c2 = c.clone();
        c2.dt *= 2.0;
        let b = c2.rescale(0.7).unwrap();
        let f = 2f64.powf(-0.7);
        assert!(a.v.iter().zip(b.v.iter()).all(|(x, y)| (x * f - y).abs() <= 1e-15 * x.abs()));
        assert!(c.rescale(2.0).is_err());
    }
}
