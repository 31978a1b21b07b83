//! Field simulation: coordinate stepping composed with synthesis on one or
//! more node layers, streamed one time slab at a time.

use ndarray::{Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use super::coords::{CoordinateSim, Scheme, Truncation};
use super::synth::{SynthMode, Synthesizer};
use crate::error::{Error, Result};
use crate::model::{thin, ModelParams, NodeSet, SamplingGrid, ThinSpec, ThinnedView, TimeAxis};

/// Everything needed to regenerate a simulated field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub trunc: Truncation,
    /// Number of observation intervals on `[0, steps * dt]`.
    pub steps: usize,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(with = "crate::rng::seed_format")]
    pub seed: u64,
}

impl SimConfig {
    /// Unit time horizon with `steps` intervals.
    pub fn unit(params: ModelParams, trunc: Truncation, steps: usize, scheme: Scheme, seed: u64) -> Self {
        Self {
            params,
            trunc,
            steps,
            dt: 1.0 / steps as f64,
            scheme,
            seed,
        }
    }

    pub fn time_axis(&self) -> TimeAxis {
        TimeAxis {
            steps: self.steps,
            dt: self.dt,
        }
    }
}

/// Consumer of field slabs at the retained times of one layer.
pub trait FieldSink {
    /// Receives the slab (y-nodes × z-nodes) of retained time `index`.
    fn accept(&mut self, index: usize, slab: ArrayView2<f64>) -> Result<()>;
}

/// Node layer to synthesize, keeping every `stride`-th observation time.
pub struct Layer<'a> {
    pub y: NodeSet,
    pub z: NodeSet,
    pub stride: usize,
    pub mode: SynthMode,
    pub sink: &'a mut dyn FieldSink,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimDiagnostics {
    /// Modes outside the Euler–Maruyama stability region.
    pub unstable_modes: usize,
}

/// Runs one coordinate simulation and feeds every layer.
pub fn simulate_layers(cfg: &SimConfig, x0: Option<ArrayView2<f64>>, layers: &mut [Layer<'_>]) -> Result<SimDiagnostics> {
    cfg.params.validate()?;
    if cfg.steps == 0 {
        return Err(Error::InvalidParam {
            name: "steps",
            reason: "need at least one time step".into(),
        });
    }
    let spec = cfg.params.spectrum()?;
    let mut synths = Vec::with_capacity(layers.len());
    for layer in layers.iter() {
        if layer.stride == 0 || !cfg.steps.is_multiple_of(layer.stride) {
            return Err(Error::InvalidParam {
                name: "stride",
                reason: format!("must be positive and divide {} steps", cfg.steps),
            });
        }
        synths.push(Synthesizer::new(&spec, cfg.trunc, &layer.y, &layer.z, layer.mode)?);
    }
    let mut sim = CoordinateSim::new(&spec, cfg.trunc, cfg.dt, cfg.scheme, cfg.seed)?;
    if let Some(x0) = x0 {
        sim = sim.with_initial(x0)?;
    }
    let emit = |sim: &CoordinateSim, layers: &mut [Layer<'_>]| -> Result<()> {
        let i = sim.steps_taken();
        for (layer, syn) in layers.iter_mut().zip(&synths) {
            if i.is_multiple_of(layer.stride) {
                let slab = syn.synthesize(sim.state())?;
                layer.sink.accept(i / layer.stride, slab.view())?;
            }
        }
        Ok(())
    };
    emit(&sim, layers)?;
    for _ in 0..cfg.steps {
        sim.advance();
        emit(&sim, layers)?;
    }
    Ok(SimDiagnostics {
        unstable_modes: sim.unstable_modes(),
    })
}

/// Generating configuration and layer geometry of a stored field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sim: SimConfig,
    pub stride: usize,
    pub mode: SynthMode,
}

/// Field values indexed `(time, y-node, z-node)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldRecord {
    pub time: TimeAxis,
    pub y: NodeSet,
    pub z: NodeSet,
    pub values: Array3<f64>,
    pub provenance: Option<Provenance>,
}

impl FieldRecord {
    pub fn new(time: TimeAxis, y: NodeSet, z: NodeSet, values: Array3<f64>) -> Result<Self> {
        let want = (time.steps + 1, y.len(), z.len());
        if values.dim() != want {
            return Err(Error::DimMismatch(format!("values {:?} vs grid {want:?}", values.dim())));
        }
        Ok(Self {
            time,
            y,
            z,
            values,
            provenance: None,
        })
    }

    /// Record on a uniform grid filled by `f(t, y, z)`.
    pub fn from_fn(grid: &SamplingGrid, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let time = grid.time_axis();
        let (y, z) = (grid.y_nodes(), grid.z_nodes());
        let values = Array3::from_shape_fn((time.steps + 1, y.len(), z.len()), |(i, j, k)| {
            f(time.time(i), y.coord(j), z.coord(k))
        });
        Self {
            time,
            y,
            z,
            values,
            provenance: None,
        }
    }

    pub fn thin(&self, spec: &ThinSpec) -> Result<ThinnedView> {
        thin(&self.time, &self.y, &self.z, spec)
    }

    pub fn values(&self) -> ArrayView3<'_, f64> {
        self.values.view()
    }
}

/// Sink collecting every slab into a [`FieldRecord`].
pub struct RecordSink {
    time: TimeAxis,
    y: NodeSet,
    z: NodeSet,
    values: Array3<f64>,
    filled: usize,
}

impl RecordSink {
    pub fn new(time: TimeAxis, y: NodeSet, z: NodeSet) -> Self {
        let values = Array3::zeros((time.steps + 1, y.len(), z.len()));
        Self {
            time,
            y,
            z,
            values,
            filled: 0,
        }
    }

    pub fn finish(self, provenance: Option<Provenance>) -> Result<FieldRecord> {
        if self.filled != self.time.steps + 1 {
            return Err(Error::DimMismatch(format!(
                "received {} of {} time slabs",
                self.filled,
                self.time.steps + 1
            )));
        }
        Ok(FieldRecord {
            time: self.time,
            y: self.y,
            z: self.z,
            values: self.values,
            provenance,
        })
    }
}

impl FieldSink for RecordSink {
    fn accept(&mut self, index: usize, slab: ArrayView2<f64>) -> Result<()> {
        if index > self.time.steps || slab.dim() != (self.y.len(), self.z.len()) {
            return Err(Error::DimMismatch(format!("slab {index} of shape {:?}", slab.dim())));
        }
        self.values.index_axis_mut(ndarray::Axis(0), index).assign(&slab);
        self.filled += 1;
        Ok(())
    }
}

/// Simulates a single layer and keeps all of it.
pub fn simulate_record(
    cfg: &SimConfig,
    x0: Option<ArrayView2<f64>>,
    y: NodeSet,
    z: NodeSet,
    stride: usize,
    mode: SynthMode,
) -> Result<FieldRecord> {
    if stride == 0 || !cfg.steps.is_multiple_of(stride) {
        return Err(Error::InvalidParam {
            name: "stride",
            reason: format!("must be positive and divide {} steps", cfg.steps),
        });
    }
    let time = TimeAxis {
        steps: cfg.steps / stride,
        dt: cfg.dt * stride as f64,
    };
    let mut sink = RecordSink::new(time, y.clone(), z.clone());
    let mut layers = [Layer {
        y,
        z,
        stride,
        mode,
        sink: &mut sink,
    }];
    simulate_layers(cfg, x0, &mut layers)?;
    sink.finish(Some(Provenance {
        sim: cfg.clone(),
        stride,
        mode,
    }))
}

/// Simulates the field on the uniform observation grid, time horizon 1.
pub fn simulate_field(
    params: &ModelParams,
    trunc: Truncation,
    grid: &SamplingGrid,
    scheme: Scheme,
    seed: u64,
) -> Result<FieldRecord> {
    let cfg = SimConfig::unit(*params, trunc, grid.n_time, scheme, seed);
    simulate_record(&cfg, None, grid.y_nodes(), grid.z_nodes(), 1, SynthMode::Auto)
}
