use alloc::format;

use super::{BlockKind, BlockSpec, LayerKind, LayerSpec, ModelSpec, Replacement, Shortcut, Stage, StageOp};
use crate::error::{Error, Result};

/// The separable form of one replaceable stage, with the same output shape.
pub fn replaced_stage(stage: &Stage) -> Result<Stage> {
    let op = match &stage.op {
        StageOp::Layer(l) if l.kind == LayerKind::StandardConv && l.kernel_size >= 2 => {
            let depthwise = LayerSpec::depthwise(l.kernel_size, l.stride, l.padding);
            let pointwise = LayerSpec::pointwise(l.out_channels.unwrap_or(0)).with_bias(l.bias);
            StageOp::Block(BlockSpec {
                kind: BlockKind::DepthwiseSeparable,
                layers: alloc::vec![depthwise, pointwise],
                shortcut: Shortcut::None,
            })
        }
        StageOp::Block(b) if b.kind == BlockKind::Bottleneck => {
            let shapes = b.layer_shapes(stage.input)?;
            let mid = b.layers[1];
            if shapes[1].channels != shapes[2].channels {
                return Err(Error::InvalidReplacement(format!(
                    "bottleneck middle layer maps {} to {} channels; a depthwise layer cannot",
                    shapes[1].channels, shapes[2].channels
                )));
            }
            let mut layers = b.layers.clone();
            layers[1] = LayerSpec::depthwise(mid.kernel_size, mid.stride, mid.padding).with_bias(mid.bias);
            StageOp::Block(BlockSpec { kind: BlockKind::SeparableBottleneck, layers, shortcut: b.shortcut })
        }
        _ => return Err(Error::InvalidReplacement("stage is not a standard convolution or bottleneck".into())),
    };
    Ok(Stage { input: stage.input, op })
}

/// Replaces every stage of replaceable position `position` with its separable
/// form. Positions are indexed from the input end.
pub fn replace_layer(model: &ModelSpec, position: usize) -> Result<ModelSpec> {
    let stages = model.positions.get(position).ok_or_else(|| {
        Error::InvalidReplacement(format!("position {position} out of range (model has {})", model.num_positions()))
    })?;
    if model.replacement_vector[position] == Replacement::Separable {
        return Err(Error::InvalidReplacement(format!("position {position} is already replaced")));
    }
    let mut out = model.clone();
    for &s in stages {
        out.stages[s] = replaced_stage(&model.stages[s])?;
    }
    out.replacement_vector[position] = Replacement::Separable;
    out.validate()?;
    Ok(out)
}
