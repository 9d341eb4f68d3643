use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{compute_roof_gops, estimate_chain, roofline, Calibration, PlatformSpec, ResourceEstimate, RooflinePoint, WORD_BYTES};
use crate::error::{Error, Result};
use crate::fusion::{simulate_chain, stage_chain, FusedDesignConfig, SimOptions, Tiling};
use crate::hw::{BufferOption, Dims, Seq};
use crate::model::{BlockSpec, LayerKind, LayerSpec, ModelSpec, Shortcut, StageOp, TensorShape};

/// Spatial tiling of every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileChoice {
    /// Whole output map per pass.
    Full,
    /// Square output tiles of this edge.
    Square(u32),
}

/// One point of the hardware grid. The same engine is reused by every stage
/// of the model, reconfigured per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesignPoint {
    /// Input-channel parallelism of the first layer of each chain, unless
    /// that layer is depthwise.
    pub p_c: u32,
    /// Filter parallelism of every non-depthwise layer.
    pub p_f: u32,
    pub tile: TileChoice,
    pub use_winograd: bool,
}

impl DesignPoint {
    /// `P_h = P_w`: the Winograd output tile edge, otherwise 1.
    pub fn p_spatial(&self) -> u32 {
        if self.use_winograd {
            4
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DseOptions {
    pub p_c: Vec<u32>,
    pub p_f: Vec<u32>,
    pub tiles: Vec<TileChoice>,
    pub winograd: Vec<bool>,
    /// Try every FM/CM combination per block instead of all-FM.
    pub search_seqs: bool,
}

impl Default for DseOptions {
    fn default() -> Self {
        DseOptions {
            p_c: vec![1, 2, 4, 8, 16],
            p_f: vec![2, 4, 8, 16, 32, 64],
            tiles: vec![TileChoice::Full, TileChoice::Square(28), TileChoice::Square(14), TileChoice::Square(7)],
            winograd: vec![false, true],
            search_seqs: true,
        }
    }
}

impl DseOptions {
    pub fn points(&self) -> Vec<DesignPoint> {
        let mut out = Vec::new();
        for &use_winograd in &self.winograd {
            for &tile in &self.tiles {
                for &p_c in &self.p_c {
                    for &p_f in &self.p_f {
                        out.push(DesignPoint { p_c, p_f, tile, use_winograd });
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEval {
    pub stage: usize,
    pub ops: u64,
    pub cycles: u64,
    pub offchip_bytes: u64,
    pub seconds: f64,
    /// True when off-chip transfer, not compute, sets the stage time.
    pub memory_bound: bool,
    /// FM/CM string of the chosen sequence, empty for stages without compute.
    pub seqs: String,
    pub resources: ResourceEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedDesign {
    pub point: DesignPoint,
    pub latency_s: f64,
    /// Model ops divided by latency.
    pub gops: f64,
    pub resources: ResourceEstimate,
    pub feasible: bool,
    pub roofline: RooflinePoint,
    pub stages: Vec<StageEval>,
}

impl EvaluatedDesign {
    pub fn latency_ms(&self) -> f64 {
        self.latency_s * 1e3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseReport {
    pub platform: PlatformSpec,
    pub total_ops: u64,
    pub candidates: Vec<EvaluatedDesign>,
    pub best: EvaluatedDesign,
}

/// Port-matched per-layer parallelism for a chain.
fn chain_parallelism(layers: &[LayerSpec], shapes: &[TensorShape], point: &DesignPoint, s: u32) -> Vec<Dims> {
    let mut dims = Vec::with_capacity(layers.len());
    // a leading depthwise layer has no filter dimension to spread, so it
    // takes the filter parallelism as its channel lanes
    let first = if layers[0].kind == LayerKind::DepthwiseConv { point.p_f } else { point.p_c };
    let mut c = first.min(shapes[0].channels);
    for (i, layer) in layers.iter().enumerate() {
        c = c.min(shapes[i].channels);
        let f = if layer.kind == LayerKind::DepthwiseConv { c } else { point.p_f.min(shapes[i + 1].channels) };
        dims.push(Dims::new(s, s, c, f));
        c = f;
    }
    dims
}

fn chain_config(layers: &[LayerSpec], shapes: &[TensorShape], point: &DesignPoint, seqs: Vec<Seq>) -> FusedDesignConfig {
    let n = layers.len();
    let out = shapes[n];
    let (h, w) = match point.tile {
        TileChoice::Full => (out.height, out.width),
        TileChoice::Square(t) => (t.min(out.height), t.min(out.width)),
    };
    // small maps cannot host a 4x4 output tile; fall back to F(2x2) or direct
    let spatial = match point.p_spatial().min(h).min(w) {
        3 => 2,
        s => s,
    };
    FusedDesignConfig {
        tiling: Tiling { h, w, c: shapes[..n].iter().map(|s| s.channels).collect(), f: out.channels },
        parallelism: chain_parallelism(layers, shapes, point, spatial),
        seqs,
        buffer_options: vec![BufferOption::Double; n - 1],
        use_winograd: point.use_winograd && spatial >= 2,
    }
}

struct ChainEval {
    cycles: u64,
    extra_bytes: u64,
    seqs: String,
    resources: ResourceEstimate,
}

fn eval_chain(layers: &[LayerSpec], input: TensorShape, point: &DesignPoint, calib: &Calibration, search_seqs: bool) -> Result<ChainEval> {
    let mut shapes = vec![input];
    for l in layers {
        shapes.push(l.output_shape(shapes[shapes.len() - 1])?);
    }
    let n = layers.len();
    let combos = if search_seqs { 1usize << n } else { 1 };
    let mut best: Option<(u64, u64, FusedDesignConfig, u64)> = None;
    for code in 0..combos {
        let seqs = (0..n).map(|i| if code >> (n - 1 - i) & 1 == 0 { Seq::FilterMajor } else { Seq::ChannelMajor }).collect();
        let cfg = chain_config(layers, &shapes, point, seqs);
        let report = match simulate_chain(layers, input, &cfg, SimOptions::default()) {
            Ok(r) => r,
            Err(Error::InefficientConfig(_)) => continue,
            Err(e) => return Err(e),
        };
        let key = (report.total_cycles, report.buffer_words());
        if best.as_ref().is_none_or(|b| key < (b.0, b.1)) {
            best = Some((key.0, key.1, cfg, report.extra_offchip_bytes));
        }
    }
    let (cycles, _, cfg, extra_bytes) =
        best.ok_or_else(|| Error::InefficientConfig(format!("no sequence combination is valid for {n} layers")))?;
    let resources = estimate_chain(layers, input, &cfg, calib)?;
    Ok(ChainEval { cycles, extra_bytes, seqs: cfg.seq_label(), resources })
}

fn layer_weight_bytes(layers: &[LayerSpec], input: TensorShape) -> Result<u64> {
    let mut shape = input;
    let mut words = 0;
    for l in layers {
        words += l.weight_words(shape)?;
        shape = l.output_shape(shape)?;
    }
    Ok(words * WORD_BYTES)
}

fn eval_stage(
    index: usize,
    op: &StageOp,
    input: TensorShape,
    point: &DesignPoint,
    platform: &PlatformSpec,
    calib: &Calibration,
    search_seqs: bool,
) -> Result<StageEval> {
    let (ops, output) = match op {
        StageOp::Layer(l) => (l.ops(input)?, l.output_shape(input)?),
        StageOp::Block(b) => (b.ops(input)?, b.output_shape(input)?),
    };
    let ends = (input.elements() + output.elements()) * WORD_BYTES;
    let (mut cycles, mut bytes, mut seqs, mut resources) = (0, ends, String::new(), ResourceEstimate::ZERO);
    let mut run = |layers: &[LayerSpec], inp: TensorShape| -> Result<()> {
        let e = eval_chain(layers, inp, point, calib, search_seqs)?;
        cycles += e.cycles;
        bytes += e.extra_bytes + layer_weight_bytes(layers, inp)?;
        seqs.push_str(&e.seqs);
        resources = resources.max(e.resources);
        Ok(())
    };
    if let Some((layers, chain_input)) = stage_chain(op, input) {
        run(&layers, chain_input)?;
    }
    if let StageOp::Block(BlockSpec { shortcut: Shortcut::Projection(p), .. }) = op {
        run(core::slice::from_ref(p), input)?;
    }
    let compute_s = cycles as f64 / platform.clock_hz();
    let memory_s = bytes as f64 / (platform.bandwidth_gbps * 1e9);
    Ok(StageEval {
        stage: index,
        ops,
        cycles,
        offchip_bytes: bytes,
        seconds: compute_s.max(memory_s),
        memory_bound: memory_s > compute_s,
        seqs,
        resources,
    })
}

/// Stage times are `max(compute, transfer)`; stages run back to back on one
/// engine, so resources are the per-stage maximum.
pub fn evaluate_design(
    model: &ModelSpec,
    point: &DesignPoint,
    platform: &PlatformSpec,
    calib: &Calibration,
    search_seqs: bool,
) -> Result<EvaluatedDesign> {
    model.validate()?;
    if point.p_c == 0 || point.p_f == 0 || point.tile == TileChoice::Square(0) {
        return Err(Error::InvalidConfig(format!("design point {point:?} has a zero parameter")));
    }
    let mut stages: Vec<StageEval> = Vec::with_capacity(model.stages.len());
    for (i, stage) in model.stages.iter().enumerate() {
        // repeated blocks share one evaluation
        let seen = model.stages[..i].iter().position(|s| s == stage);
        let eval = match seen {
            Some(j) => StageEval { stage: i, ..stages[j].clone() },
            None => eval_stage(i, &stage.op, stage.input, point, platform, calib, search_seqs)?,
        };
        stages.push(eval);
    }
    let ops: u64 = stages.iter().map(|s| s.ops).sum();
    let bytes: u64 = stages.iter().map(|s| s.offchip_bytes).sum();
    let latency_s: f64 = stages.iter().map(|s| s.seconds).sum();
    let resources = stages.iter().fold(ResourceEstimate::ZERO, |acc, s| acc.max(s.resources));
    let gain = if point.use_winograd { 4.0 } else { 1.0 };
    Ok(EvaluatedDesign {
        point: *point,
        latency_s,
        gops: if latency_s > 0.0 { ops as f64 / latency_s / 1e9 } else { 0.0 },
        resources,
        feasible: resources.fits(platform),
        roofline: roofline(ops, bytes, compute_roof_gops(platform, resources.dsp, gain), platform.bandwidth_gbps),
        stages,
    })
}

fn rank(a: &EvaluatedDesign, b: &EvaluatedDesign) -> Ordering {
    b.gops
        .total_cmp(&a.gops)
        .then(a.latency_s.total_cmp(&b.latency_s))
        .then(a.resources.dsp.cmp(&b.resources.dsp))
        .then(a.point.cmp(&b.point))
}

/// Highest-GOPS design that fits the platform; ties go to lower latency,
/// then fewer DSPs.
pub fn pick_best_design<'a>(candidates: &'a [EvaluatedDesign], platform: &PlatformSpec) -> Result<&'a EvaluatedDesign> {
    candidates
        .iter()
        .filter(|c| c.resources.fits(platform))
        .min_by(|a, b| rank(a, b))
        .ok_or(Error::Infeasible)
}

/// Evaluates the whole grid and selects the best feasible point.
pub fn explore_designs(model: &ModelSpec, platform: &PlatformSpec, calib: &Calibration, options: &DseOptions) -> Result<DseReport> {
    platform.validate()?;
    let points = options.points();
    if points.is_empty() {
        return Err(Error::InvalidConfig("design grid is empty".into()));
    }
    let mut candidates = Vec::with_capacity(points.len());
    for p in &points {
        candidates.push(evaluate_design(model, p, platform, calib, options.search_seqs)?);
    }
    let best = pick_best_design(&candidates, platform)?.clone();
    let total_ops = best.stages.iter().map(|s| s.ops).sum();
    Ok(DseReport { platform: *platform, total_ops, candidates, best })
}

/// Fused-block convenience used by callers that only hold one block.
pub fn block_as_model(block: &BlockSpec, input: TensorShape) -> Result<ModelSpec> {
    ModelSpec::chain(crate::model::ModelBase::Custom, input, vec![StageOp::Block(block.clone())])
}
