use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::PlatformSpec;
use crate::error::Result;
use crate::model::{mobilenet_v1, resnet34, resnet50, BlockKind, BlockSpec, ModelSpec, Shortcut, StageOp, TensorShape};

/// Bytes per feature-map or weight word (16-bit fixed point).
pub const WORD_BYTES: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    /// Ops per byte of off-chip traffic.
    pub arithmetic_intensity: f64,
    pub attainable_gops: f64,
    pub compute_roof_gops: f64,
}

/// `min(roof, intensity x bandwidth)`.
pub fn roofline(ops: u64, bytes: u64, compute_roof_gops: f64, bandwidth_gbps: f64) -> RooflinePoint {
    let intensity = if bytes == 0 { f64::INFINITY } else { ops as f64 / bytes as f64 };
    RooflinePoint {
        arithmetic_intensity: intensity,
        attainable_gops: compute_roof_gops.min(intensity * bandwidth_gbps),
        compute_roof_gops,
    }
}

/// `dsp x 2 ops x clock`, scaled by the multiply reduction of the arithmetic
/// (4.0 for F(4x4, 3x3) Winograd, 1.0 for direct).
pub fn compute_roof_gops(platform: &PlatformSpec, dsp: u64, arithmetic_gain: f64) -> f64 {
    dsp as f64 * 2.0 * platform.clock_hz() * arithmetic_gain / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRoofline {
    pub ops: u64,
    /// Every layer reads its input and weights and writes its output.
    pub baseline_bytes: u64,
    /// Only the block input, block output and weights cross the chip edge.
    pub fused_bytes: u64,
    pub baseline: RooflinePoint,
    pub fused: RooflinePoint,
}

fn weight_words(block: &BlockSpec, input: TensorShape) -> Result<u64> {
    let shapes = block.layer_shapes(input)?;
    let mut words = 0;
    for (l, s) in block.layers.iter().zip(&shapes) {
        words += l.weight_words(*s)?;
    }
    if let Shortcut::Projection(p) = &block.shortcut {
        words += p.weight_words(input)?;
    }
    Ok(words)
}

/// Traffic of one block with weights streamed once per full-map pass.
fn block_traffic(block: &BlockSpec, input: TensorShape) -> Result<(u64, u64, u64)> {
    let shapes = block.layer_shapes(input)?;
    let weights = weight_words(block, input)?;
    let maps: u64 = shapes.windows(2).map(|w| w[0].elements() + w[1].elements()).sum();
    let ends = input.elements() + shapes[shapes.len() - 1].elements();
    Ok((block.ops(input)?, (maps + weights) * WORD_BYTES, (ends + weights) * WORD_BYTES))
}

pub fn block_roofline(block: &BlockSpec, input: TensorShape, platform: &PlatformSpec, compute_roof_gops: f64) -> Result<BlockRoofline> {
    let (ops, baseline_bytes, fused_bytes) = block_traffic(block, input)?;
    Ok(BlockRoofline {
        ops,
        baseline_bytes,
        fused_bytes,
        baseline: roofline(ops, baseline_bytes, compute_roof_gops, platform.bandwidth_gbps),
        fused: roofline(ops, fused_bytes, compute_roof_gops, platform.bandwidth_gbps),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTypeRoofline {
    pub kind: BlockKind,
    /// Model whose blocks were aggregated.
    pub source_model: alloc::string::String,
    pub blocks: usize,
    pub totals: BlockRoofline,
}

fn aggregate(kind: BlockKind, model: &ModelSpec, platform: &PlatformSpec, roof: f64) -> Result<BlockTypeRoofline> {
    let (mut ops, mut base, mut fused, mut blocks) = (0, 0, 0, 0);
    for stage in &model.stages {
        if let StageOp::Block(b) = &stage.op {
            if b.kind == kind {
                let (o, bb, fb) = block_traffic(b, stage.input)?;
                ops += o;
                base += bb;
                fused += fb;
                blocks += 1;
            }
        }
    }
    Ok(BlockTypeRoofline {
        kind,
        source_model: alloc::format!("{}", model.base),
        blocks,
        totals: BlockRoofline {
            ops,
            baseline_bytes: base,
            fused_bytes: fused,
            baseline: roofline(ops, base, roof, platform.bandwidth_gbps),
            fused: roofline(ops, fused, roof, platform.bandwidth_gbps),
        },
    })
}

/// Baseline and fused rooflines of the three block families, each
/// aggregated over every block of that type in its canonical ImageNet model
/// (stacked: ResNet-34, bottleneck: ResNet-50, depthwise separable:
/// MobileNet v1). The compute roof assumes every DSP of the platform.
pub fn block_type_rooflines(platform: &PlatformSpec, arithmetic_gain: f64) -> Result<Vec<BlockTypeRoofline>> {
    let input = TensorShape { height: 224, width: 224, channels: 3 };
    let roof = compute_roof_gops(platform, platform.dsp_total, arithmetic_gain);
    Ok(alloc::vec![
        aggregate(BlockKind::Stacked, &resnet34(input)?, platform, roof)?,
        aggregate(BlockKind::Bottleneck, &resnet50(input)?, platform, roof)?,
        aggregate(BlockKind::DepthwiseSeparable, &mobilenet_v1(input)?, platform, roof)?,
    ])
}
