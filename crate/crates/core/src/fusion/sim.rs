use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::engine::{simulate_pipeline, ConsumeMode, LinkSpec, ProduceMode, StageTiming};
use super::{tiling_overhead_chain, FusedDesignConfig, TraceEvent};
use crate::error::{Error, Result};
use crate::hw::{buffer_words, ceil_div, instantiate_layer, layer_cycle_counts, BufferOption, Dims, LayerHwConfig, Seq};
use crate::model::{BlockSpec, LayerKind, LayerSpec, TensorShape};

/// Declared in every report so cycle numbers can be interpreted.
pub const CYCLE_MODEL: &str = "one cycle issues P_c*P_f*P_h*P_w multiply-accumulate lanes (a whole m x m output tile per lane on \
the Winograd path); work units are outer-loop chunks; every tile is costed at full tile size; \
pipeline fill is the sum of module latencies and is added once";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimOptions {
    pub record_trace: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: usize,
    pub kind: LayerKind,
    pub seq: Seq,
    pub winograd: bool,
    pub tile: Dims,
    pub work_units_per_tile: u64,
    pub cycles_per_unit: u64,
    /// Cycles the layer would take on its own.
    pub busy_cycles: u64,
    /// Idle cycles between its first start and last finish.
    pub stall_cycles: u64,
    pub first_start: u64,
    pub last_finish: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferStats {
    /// Index of the consuming layer.
    pub feeds_layer: usize,
    pub option: BufferOption,
    pub words: u64,
    pub chunk_words: u64,
    pub peak_words: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    pub total_cycles: u64,
    pub makespan_cycles: u64,
    pub fill_cycles: u64,
    pub tiles: u64,
    pub layers: Vec<LayerStats>,
    pub buffers: Vec<BufferStats>,
    pub input_buffer_words: u64,
    pub output_buffer_words: u64,
    pub redundant_compute_ops: u64,
    pub extra_offchip_bytes: u64,
    pub cycle_model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEvent>>,
}

impl SimReport {
    pub fn buffer_words(&self) -> u64 {
        self.buffers.iter().map(|b| b.words).sum()
    }

    /// Sum of isolated per-layer cycles plus fill: a strictly sequential run.
    pub fn sequential_cycles(&self) -> u64 {
        self.layers.iter().map(|l| l.busy_cycles).sum::<u64>() + self.fill_cycles
    }
}

fn winograd_eligible(layer: &LayerSpec) -> bool {
    matches!(layer.kind, LayerKind::StandardConv | LayerKind::DepthwiseConv) && layer.kernel_size == 3 && layer.stride == 1
}

/// Per-layer hardware configs and buffer sizes for a fused chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainPlan {
    pub layers: Vec<LayerHwConfig>,
    pub tiles: u64,
    pub tile_h: u32,
    pub tile_w: u32,
    /// Intermediate buffers, without peak occupancy.
    pub buffers: Vec<BufferStats>,
    links: Vec<LinkSpec>,
    pub input_buffer_words: u64,
    pub output_buffer_words: u64,
}

/// Resolves tiling and parallelism for `layers`; `shapes` holds each layer's
/// input followed by the chain output.
pub fn plan_chain(layers: &[LayerSpec], shapes: &[TensorShape], cfg: &FusedDesignConfig) -> Result<ChainPlan> {
    cfg.validate_layers(layers)?;
    let n = layers.len();
    let out = shapes[n];
    let t = &cfg.tiling;
    if t.h == 0 || t.w == 0 {
        return Err(Error::InvalidTiling("spatial tile must be >= 1".into()));
    }
    let (tile_h, tile_w) = (t.h.min(out.height), t.w.min(out.width));
    let mut channel_tiles = t.c.clone();
    channel_tiles.push(t.f);
    for (i, tc) in channel_tiles.iter_mut().enumerate() {
        let full = shapes[i].channels;
        if *tc < full {
            return Err(Error::InvalidTiling(format!(
                "fused layers keep every channel on chip; channel tile {} of boundary {i} is below {full}",
                *tc
            )));
        }
        *tc = full;
    }
    let mut scale = 1u32;
    let mut spatial = vec![(0u32, 0u32); n];
    for i in (0..n).rev() {
        let o = shapes[i + 1];
        spatial[i] = (tile_h.saturating_mul(scale).min(o.height), tile_w.saturating_mul(scale).min(o.width));
        scale = scale.saturating_mul(layers[i].stride);
    }
    let mut hw = Vec::with_capacity(n);
    for (i, layer) in layers.iter().enumerate() {
        let (h, w) = spatial[i];
        let c = layer_hw(layer, Dims::new(h, w, channel_tiles[i], channel_tiles[i + 1]), cfg, i);
        c.validate_for(layer)?;
        hw.push(c);
    }

    let mut links = Vec::with_capacity(n - 1);
    let mut buffers = Vec::with_capacity(n - 1);
    for i in 1..n {
        let (prev, cur) = (&hw[i - 1], &hw[i]);
        let table_tile = Dims::new(prev.tile.h, prev.tile.w, cur.tile.c, cur.tile.f);
        let words = buffer_words(prev.seq, cur.seq, table_tile, cur.parallelism, cfg.buffer_options[i - 1])?;
        let chunk_words = cur.parallelism.c as u64 * prev.tile.h as u64 * prev.tile.w as u64;
        links.push(LinkSpec {
            chunks_per_tile: ceil_div(cur.tile.c as u64, cur.parallelism.c as u64),
            capacity_chunks: words / chunk_words,
        });
        buffers.push(BufferStats { feeds_layer: i, option: cfg.buffer_options[i - 1], words, chunk_words, peak_words: 0 });
    }

    let (first, l0) = (&hw[0], &layers[0]);
    let in_rows = ((first.tile.h - 1) * l0.stride + l0.kernel_size).min(shapes[0].height);
    let in_cols = ((first.tile.w - 1) * l0.stride + l0.kernel_size).min(shapes[0].width);
    let last = &hw[n - 1];
    Ok(ChainPlan {
        tiles: ceil_div(out.height as u64, tile_h as u64) * ceil_div(out.width as u64, tile_w as u64),
        tile_h,
        tile_w,
        buffers,
        links,
        input_buffer_words: first.tile.c as u64 * in_rows as u64 * in_cols as u64,
        output_buffer_words: last.tile.f as u64 * last.tile.h as u64 * last.tile.w as u64,
        layers: hw,
    })
}

fn layer_hw(layer: &LayerSpec, tile: Dims, cfg: &FusedDesignConfig, i: usize) -> LayerHwConfig {
    LayerHwConfig {
        tile,
        parallelism: cfg.parallelism[i],
        seq: cfg.seqs[i],
        use_winograd: cfg.use_winograd && winograd_eligible(layer),
        layer_kind: layer.kind,
    }
}

fn modes(kind: LayerKind, seq: Seq) -> (ProduceMode, ConsumeMode) {
    match (kind, seq) {
        (LayerKind::DepthwiseConv, _) => (ProduceMode::PerUnit, ConsumeMode::PerUnit),
        (_, Seq::FilterMajor) => (ProduceMode::PerUnit, ConsumeMode::WholeTile),
        (_, Seq::ChannelMajor) => (ProduceMode::AtTileEnd, ConsumeMode::PerUnit),
    }
}

/// Simulates one fused block at work-unit granularity.
pub fn simulate_fused(block: &BlockSpec, input: TensorShape, cfg: &FusedDesignConfig, opts: SimOptions) -> Result<SimReport> {
    block.layer_shapes(input)?;
    simulate_chain(&block.layers, input, cfg, opts)
}

/// Simulates a chain of compute layers fused into one pipeline; a single
/// layer is a chain of length one.
pub fn simulate_chain(layers: &[LayerSpec], input: TensorShape, cfg: &FusedDesignConfig, opts: SimOptions) -> Result<SimReport> {
    let mut shapes = vec![input];
    for l in layers {
        shapes.push(l.output_shape(shapes[shapes.len() - 1])?);
    }
    let plan = plan_chain(layers, &shapes, cfg)?;

    let mut stages = Vec::with_capacity(layers.len());
    let mut fill = 0;
    for (layer, hw) in layers.iter().zip(&plan.layers) {
        let counts = layer_cycle_counts(layer, hw)?;
        let (produce, consume) = modes(layer.kind, hw.seq);
        stages.push(StageTiming { units_per_tile: counts.work_units, cycles_per_unit: counts.cycles_per_unit(), produce, consume });
        fill += instantiate_layer(layer, hw)?.iter().map(|m| m.latency).sum::<u64>();
    }

    let schedule = simulate_pipeline(&stages, &plan.links, plan.tiles, opts.record_trace)?;
    let mut buffers = plan.buffers.clone();
    for (b, peak) in buffers.iter_mut().zip(&schedule.peak_chunks) {
        b.peak_words = peak * b.chunk_words;
    }
    let layer_stats = layers
        .iter()
        .zip(&plan.layers)
        .zip(stages.iter().zip(&schedule.stages))
        .enumerate()
        .map(|(i, ((layer, hw), (timing, stats)))| {
            let first = stats.first_start.unwrap_or(0);
            let last = stats.last_finish.unwrap_or(0);
            LayerStats {
                layer: i,
                kind: layer.kind,
                seq: hw.seq,
                winograd: hw.use_winograd,
                tile: hw.tile,
                work_units_per_tile: timing.units_per_tile,
                cycles_per_unit: timing.cycles_per_unit,
                busy_cycles: stats.busy_cycles,
                stall_cycles: (last - first) - stats.busy_cycles,
                first_start: first,
                last_finish: last,
            }
        })
        .collect();

    let overhead = tiling_overhead_chain(layers, &shapes, plan.tile_h, plan.tile_w)?;
    Ok(SimReport {
        total_cycles: schedule.makespan + fill,
        makespan_cycles: schedule.makespan,
        fill_cycles: fill,
        tiles: plan.tiles,
        layers: layer_stats,
        buffers,
        input_buffer_words: plan.input_buffer_words,
        output_buffer_words: plan.output_buffer_words,
        redundant_compute_ops: overhead.redundant_ops,
        extra_offchip_bytes: overhead.extra_offchip_bytes,
        cycle_model: CYCLE_MODEL.into(),
        trace: schedule.trace,
    })
}

/// Outcome of one sequence/buffer-option combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqResult {
    pub seqs: Vec<Seq>,
    pub buffer_options: Vec<BufferOption>,
    pub report: SimReport,
}

fn sort_key(r: &SeqResult) -> (u64, u64, &[Seq], &[BufferOption]) {
    (r.report.total_cycles, r.report.buffer_words(), &r.seqs, &r.buffer_options)
}

/// Every combination that mixes `Seq` per layer and `BufferOption` per
/// buffer, skipping inefficient ones; sorted by latency, then buffer words,
/// then lexicographically.
pub fn enumerate_configs(block: &BlockSpec, input: TensorShape, base: &FusedDesignConfig, max_layers: usize) -> Result<Vec<SeqResult>> {
    let n = block.layers.len();
    if n > max_layers {
        return Err(Error::InvalidConfig(format!("{n} layers exceed the enumeration bound of {max_layers}")));
    }
    let mut out = Vec::new();
    for seq_code in 0..(1usize << n) {
        let seqs: Vec<Seq> = (0..n).map(|i| if seq_code >> (n - 1 - i) & 1 == 0 { Seq::FilterMajor } else { Seq::ChannelMajor }).collect();
        for opt_code in 0..3usize.pow(n.saturating_sub(1) as u32) {
            let mut code = opt_code;
            let mut options = vec![BufferOption::MatchPrev; n.saturating_sub(1)];
            for slot in options.iter_mut().rev() {
                *slot = BufferOption::ALL[code % 3];
                code /= 3;
            }
            let cfg = FusedDesignConfig { seqs: seqs.clone(), buffer_options: options.clone(), ..base.clone() };
            match simulate_fused(block, input, &cfg, SimOptions::default()) {
                Ok(report) => out.push(SeqResult { seqs: seqs.clone(), buffer_options: options, report }),
                Err(Error::InefficientConfig(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    out.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    Ok(out)
}

/// One entry per sequence combination (`2^N`), each with its best buffer
/// options, in the same order as [`enumerate_configs`].
pub fn enumerate_sequences(block: &BlockSpec, input: TensorShape, base: &FusedDesignConfig, max_layers: usize) -> Result<Vec<SeqResult>> {
    let all = enumerate_configs(block, input, base, max_layers)?;
    let mut best: Vec<SeqResult> = Vec::new();
    for r in all {
        if !best.iter().any(|b| b.seqs == r.seqs) {
            best.push(r);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{FlatParallelism, Tiling};
    use crate::model::Shortcut;

    /// Two 3x3 layers on a 1x1 map; each layer runs 2 units of 10 cycles.
    fn toy() -> (BlockSpec, TensorShape, FusedDesignConfig) {
        let block = BlockSpec::stacked(10, 1, Shortcut::Identity);
        let mut block = block;
        block.layers[0].out_channels = Some(2);
        let input = TensorShape { height: 1, width: 1, channels: 10 };
        let cfg = FusedDesignConfig::from_flat(
            Tiling::full(&block, input).unwrap(),
            &FlatParallelism { h: 1, w: 1, c: vec![1, 1], f: 1 },
            vec![Seq::FilterMajor, Seq::ChannelMajor],
            vec![BufferOption::Double],
            false,
        );
        (block, input, cfg)
    }

    #[test]
    fn toy_block_matches_hand_trace() {
        let (block, input, cfg) = toy();
        let r = simulate_fused(&block, input, &cfg, SimOptions::default()).unwrap();
        assert_eq!(r.makespan_cycles, 30);
        assert_eq!(r.total_cycles, 30 + r.fill_cycles);
        let single = FusedDesignConfig { buffer_options: vec![BufferOption::MatchPrev], ..cfg };
        assert_eq!(simulate_fused(&block, input, &single, SimOptions::default()).unwrap().makespan_cycles, 40);
    }

    #[test]
    fn enumeration_counts() {
        let (block, input, cfg) = toy();
        assert_eq!(enumerate_sequences(&block, input, &cfg, 6).unwrap().len(), 4);
        let best = &enumerate_sequences(&block, input, &cfg, 6).unwrap()[0];
        assert_eq!(best.seqs, [Seq::FilterMajor, Seq::ChannelMajor]);
        assert!(enumerate_sequences(&block, input, &cfg, 1).is_err());
    }

    #[test]
    fn channel_tiles_below_map_rejected() {
        let (block, input, mut cfg) = toy();
        cfg.tiling.c[1] = 1;
        assert!(matches!(simulate_fused(&block, input, &cfg, SimOptions::default()), Err(Error::InvalidTiling(_))));
    }

    #[test]
    fn deterministic_with_trace() {
        let (block, input, cfg) = toy();
        let opts = SimOptions { record_trace: true };
        let a = simulate_fused(&block, input, &cfg, opts).unwrap();
        assert_eq!(a, simulate_fused(&block, input, &cfg, opts).unwrap());
        assert_eq!(a.trace.unwrap().len(), 8);
    }
}
