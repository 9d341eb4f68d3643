//! Fused convolution blocks: layers chained through on-chip buffers and
//! pipelined at work-unit granularity.

mod engine;
mod sim;
mod tiling;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hw::{BufferOption, Dims, Seq};
use crate::model::{BlockSpec, LayerKind, LayerSpec, StageOp, TensorShape};

pub use engine::{simulate_pipeline, ConsumeMode, LinkSpec, ProduceMode, Schedule, StageStats, StageTiming};
pub use sim::{
    enumerate_configs, enumerate_sequences, plan_chain, simulate_chain, simulate_fused, BufferStats, ChainPlan, LayerStats, SeqResult,
    SimOptions, SimReport, CYCLE_MODEL,
};
pub use tiling::{tiling_overhead, tiling_overhead_chain, TilingOverhead};

/// The layer chain the engine runs for one stage, with its input shape.
/// Fully connected layers see their input flattened to `1 x 1 x HWC`.
/// Returns `None` for stages without compute.
pub fn stage_chain(op: &StageOp, input: TensorShape) -> Option<(Vec<LayerSpec>, TensorShape)> {
    match op {
        StageOp::Block(b) => Some((b.layers.clone(), input)),
        StageOp::Layer(l) if l.kind == LayerKind::FullyConnected => {
            Some((alloc::vec![*l], TensorShape { height: 1, width: 1, channels: input.height * input.width * input.channels }))
        }
        StageOp::Layer(l) if l.kind.is_compute() => Some((alloc::vec![*l], input)),
        StageOp::Layer(_) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Start,
    Finish,
}

/// One work-unit event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: u64,
    pub layer: usize,
    pub tile: u64,
    pub unit: u64,
    pub event: TraceKind,
}

/// `<T_h, T_w, T_c^1..T_c^N, T_f>`. `h` and `w` tile the block output; the
/// filter tile of layer `i` is the channel tile of layer `i+1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tiling {
    pub h: u32,
    pub w: u32,
    pub c: Vec<u32>,
    pub f: u32,
}

impl Tiling {
    /// The whole feature map and all channels in one pass.
    pub fn full(block: &BlockSpec, input: TensorShape) -> Result<Self> {
        let shapes = block.layer_shapes(input)?;
        let out = shapes[shapes.len() - 1];
        Ok(Tiling {
            h: out.height,
            w: out.width,
            c: shapes[..shapes.len() - 1].iter().map(|s| s.channels).collect(),
            f: out.channels,
        })
    }

    pub fn spatial(block: &BlockSpec, input: TensorShape, h: u32, w: u32) -> Result<Self> {
        Ok(Tiling { h, w, ..Self::full(block, input)? })
    }

    /// Full tiling of a single layer.
    pub fn full_layer(layer: &LayerSpec, input: TensorShape) -> Result<Self> {
        let out = layer.output_shape(input)?;
        Ok(Tiling { h: out.height, w: out.width, c: alloc::vec![input.channels], f: out.channels })
    }
}

/// `<P_h, P_w, P_c^1..P_c^N, P_f>`, the port-matched parallelism of a block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlatParallelism {
    pub h: u32,
    pub w: u32,
    pub c: Vec<u32>,
    pub f: u32,
}

impl FlatParallelism {
    /// Per-layer `(P_h, P_w, P_c^i, P_f^i)` with `P_f^i = P_c^{i+1}`.
    pub fn per_layer(&self) -> Vec<Dims> {
        (0..self.c.len())
            .map(|i| Dims::new(self.h, self.w, self.c[i], self.c.get(i + 1).copied().unwrap_or(self.f)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FusedDesignConfig {
    pub tiling: Tiling,
    /// Per-layer parallelism; must satisfy port matching.
    pub parallelism: Vec<Dims>,
    pub seqs: Vec<Seq>,
    /// One per intermediate buffer (`N - 1` entries).
    pub buffer_options: Vec<BufferOption>,
    /// Run eligible 3x3 stride-1 layers on the Winograd path.
    #[serde(default)]
    pub use_winograd: bool,
}

impl FusedDesignConfig {
    pub fn from_flat(
        tiling: Tiling,
        parallelism: &FlatParallelism,
        seqs: Vec<Seq>,
        buffer_options: Vec<BufferOption>,
        use_winograd: bool,
    ) -> Self {
        FusedDesignConfig { tiling, parallelism: parallelism.per_layer(), seqs, buffer_options, use_winograd }
    }

    pub fn num_layers(&self) -> usize {
        self.parallelism.len()
    }

    /// Checks list lengths and port matching between adjacent layers.
    pub fn validate(&self, block: &BlockSpec) -> Result<()> {
        self.validate_layers(&block.layers)
    }

    pub fn validate_layers(&self, layers: &[LayerSpec]) -> Result<()> {
        let n = layers.len();
        if n == 0 || layers.iter().any(|l| !l.kind.is_compute()) {
            return Err(Error::InvalidConfig("fused chains need at least one layer and only compute layers".into()));
        }
        let lens = [self.tiling.c.len(), self.parallelism.len(), self.seqs.len(), self.buffer_options.len() + 1];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::InvalidConfig(format!(
                "block has {n} layers but config lists {} channel tiles, {} parallelism entries, {} seqs and {} buffer options",
                lens[0], lens[1], lens[2], self.buffer_options.len()
            )));
        }
        for (i, p) in self.parallelism.iter().enumerate() {
            if p.h == 0 || p.w == 0 || p.c == 0 || p.f == 0 {
                return Err(Error::InvalidConfig(format!("layer {i} has zero parallelism")));
            }
            if layers[i].kind == LayerKind::DepthwiseConv && p.f != p.c {
                return Err(Error::PortMismatch(format!(
                    "depthwise layer {i} emits P_c = {} channels per cycle, config says P_f = {}",
                    p.c, p.f
                )));
            }
        }
        for i in 1..n {
            let (prev, cur) = (self.parallelism[i - 1], self.parallelism[i]);
            if cur.h != prev.h || cur.w != prev.w || cur.c != prev.f {
                return Err(Error::PortMismatch(format!(
                    "layer {i} ports (P_h={}, P_w={}, P_c={}) do not match layer {} (P_h={}, P_w={}, P_f={})",
                    cur.h,
                    cur.w,
                    cur.c,
                    i - 1,
                    prev.h,
                    prev.w,
                    prev.f
                )));
            }
        }
        Ok(())
    }

    /// Sequence string such as `"FCF"`.
    pub fn seq_label(&self) -> alloc::string::String {
        self.seqs.iter().map(|s| s.short()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Shortcut;

    fn block() -> BlockSpec {
        BlockSpec::bottleneck(16, 64, 1, Shortcut::Identity)
    }

    fn input() -> TensorShape {
        TensorShape { height: 8, width: 8, channels: 64 }
    }

    #[test]
    fn flat_is_port_matched() {
        let flat = FlatParallelism { h: 1, w: 1, c: alloc::vec![4, 2, 8], f: 16 };
        let cfg = FusedDesignConfig::from_flat(
            Tiling::full(&block(), input()).unwrap(),
            &flat,
            alloc::vec![Seq::FilterMajor; 3],
            alloc::vec![BufferOption::Double; 2],
            false,
        );
        cfg.validate(&block()).unwrap();
        assert_eq!(cfg.parallelism[1], Dims::new(1, 1, 2, 8));
    }

    #[test]
    fn mismatched_ports_rejected() {
        let flat = FlatParallelism { h: 1, w: 1, c: alloc::vec![4, 2, 8], f: 16 };
        let mut cfg = FusedDesignConfig::from_flat(
            Tiling::full(&block(), input()).unwrap(),
            &flat,
            alloc::vec![Seq::FilterMajor; 3],
            alloc::vec![BufferOption::Double; 2],
            false,
        );
        cfg.parallelism[1].c = 3;
        assert!(matches!(cfg.validate(&block()), Err(Error::PortMismatch(_))));
        cfg.parallelism[1].c = 2;
        cfg.parallelism[2].h = 2;
        assert!(matches!(cfg.validate(&block()), Err(Error::PortMismatch(_))));
        cfg.parallelism[2].h = 1;
        cfg.seqs.pop();
        assert!(matches!(cfg.validate(&block()), Err(Error::InvalidConfig(_))));
    }
}
