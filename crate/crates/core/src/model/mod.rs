//! CNN model intermediate representation.
//!
//! A model is an ordered list of stages, each either a single layer or a
//! convolution block, annotated with the input shape it consumes. The IR only
//! carries shapes and hyperparameters; there are no weights.

mod count;
mod reference;
mod replace;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use count::{count_ops_params, OpCount, StageCategory, StageCount};
pub use reference::{build_reference_model, mobilenet_v1, mobilenet_v2, resnet34, resnet50, vgg16};
pub use replace::{replace_layer, replaced_stage};

/// Height, width and channel count of a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TensorShape {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

impl TensorShape {
    pub fn new(height: u32, width: u32, channels: u32) -> Result<Self> {
        let shape = TensorShape { height, width, channels };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::ShapeMismatch(format!("tensor dimensions must be >= 1, got {self}")));
        }
        Ok(())
    }

    pub fn pixels(&self) -> u64 {
        self.height as u64 * self.width as u64
    }

    pub fn elements(&self) -> u64 {
        self.pixels() * self.channels as u64
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    StandardConv,
    DepthwiseConv,
    PointwiseConv,
    FullyConnected,
    Activation,
    BatchNorm,
    ElementwiseAdd,
    MaxPool,
    AvgPool,
}

impl LayerKind {
    pub fn is_conv(self) -> bool {
        matches!(self, LayerKind::StandardConv | LayerKind::DepthwiseConv | LayerKind::PointwiseConv)
    }

    /// Layers that run on the dot-product array.
    pub fn is_compute(self) -> bool {
        self.is_conv() || self == LayerKind::FullyConnected
    }

    fn has_out_channels(self) -> bool {
        matches!(self, LayerKind::StandardConv | LayerKind::PointwiseConv | LayerKind::FullyConnected)
    }
}

/// One layer's hyperparameters. Kernels are square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel_size: u32,
    pub stride: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<u32>,
    #[serde(default)]
    pub padding: u32,
    #[serde(default)]
    pub bias: bool,
}

impl LayerSpec {
    pub fn conv(kernel_size: u32, stride: u32, out_channels: u32, padding: u32) -> Self {
        LayerSpec {
            kind: LayerKind::StandardConv,
            kernel_size,
            stride,
            out_channels: Some(out_channels),
            padding,
            bias: false,
        }
    }

    /// `K`x`K` standard convolution with "same" padding.
    pub fn conv_same(kernel_size: u32, stride: u32, out_channels: u32) -> Self {
        Self::conv(kernel_size, stride, out_channels, (kernel_size - 1) / 2)
    }

    pub fn depthwise(kernel_size: u32, stride: u32, padding: u32) -> Self {
        LayerSpec {
            kind: LayerKind::DepthwiseConv,
            kernel_size,
            stride,
            out_channels: None,
            padding,
            bias: false,
        }
    }

    pub fn pointwise(out_channels: u32) -> Self {
        Self::pointwise_strided(out_channels, 1)
    }

    pub fn pointwise_strided(out_channels: u32, stride: u32) -> Self {
        LayerSpec {
            kind: LayerKind::PointwiseConv,
            kernel_size: 1,
            stride,
            out_channels: Some(out_channels),
            padding: 0,
            bias: false,
        }
    }

    pub fn fully_connected(out_channels: u32) -> Self {
        LayerSpec {
            kind: LayerKind::FullyConnected,
            kernel_size: 1,
            stride: 1,
            out_channels: Some(out_channels),
            padding: 0,
            bias: true,
        }
    }

    pub fn passthrough(kind: LayerKind) -> Self {
        LayerSpec { kind, kernel_size: 1, stride: 1, out_channels: None, padding: 0, bias: false }
    }

    pub fn max_pool(kernel_size: u32, stride: u32, padding: u32) -> Self {
        LayerSpec { kind: LayerKind::MaxPool, kernel_size, stride, out_channels: None, padding, bias: false }
    }

    pub fn avg_pool(kernel_size: u32, stride: u32) -> Self {
        LayerSpec { kind: LayerKind::AvgPool, kernel_size, stride, out_channels: None, padding: 0, bias: false }
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.stride == 0 {
            return Err(Error::InvalidConfig(format!("{:?}: kernel size and stride must be >= 1", self.kind)));
        }
        match (self.kind.has_out_channels(), self.out_channels) {
            (true, None) | (true, Some(0)) => {
                return Err(Error::InvalidConfig(format!("{:?} needs a positive out_channels", self.kind)))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidConfig(format!("{:?} does not change the channel count", self.kind)))
            }
            _ => {}
        }
        if matches!(self.kind, LayerKind::PointwiseConv | LayerKind::FullyConnected) && self.kernel_size != 1 {
            return Err(Error::InvalidConfig(format!("{:?} must have kernel_size 1", self.kind)));
        }
        Ok(())
    }

    pub fn output_shape(&self, input: TensorShape) -> Result<TensorShape> {
        self.validate()?;
        input.validate()?;
        let spatial = |dim: u32| -> Result<u32> {
            let padded = dim + 2 * self.padding;
            if padded < self.kernel_size {
                return Err(Error::ShapeMismatch(format!(
                    "{:?} kernel {} does not fit input {input} with padding {}",
                    self.kind, self.kernel_size, self.padding
                )));
            }
            Ok((padded - self.kernel_size) / self.stride + 1)
        };
        let shape = match self.kind {
            LayerKind::StandardConv | LayerKind::PointwiseConv => TensorShape {
                height: spatial(input.height)?,
                width: spatial(input.width)?,
                channels: self.out_channels.unwrap_or(0),
            },
            LayerKind::DepthwiseConv | LayerKind::MaxPool | LayerKind::AvgPool => TensorShape {
                height: spatial(input.height)?,
                width: spatial(input.width)?,
                channels: input.channels,
            },
            LayerKind::FullyConnected => TensorShape { height: 1, width: 1, channels: self.out_channels.unwrap_or(0) },
            LayerKind::Activation | LayerKind::BatchNorm | LayerKind::ElementwiseAdd => input,
        };
        Ok(shape)
    }

    /// Operations for one inference; one multiply-accumulate counts as two.
    pub fn ops(&self, input: TensorShape) -> Result<u64> {
        let out = self.output_shape(input)?;
        let k2 = self.kernel_size as u64 * self.kernel_size as u64;
        let c = input.channels as u64;
        Ok(match self.kind {
            LayerKind::StandardConv | LayerKind::PointwiseConv => 2 * out.pixels() * c * out.channels as u64 * k2,
            LayerKind::DepthwiseConv => 2 * out.pixels() * c * k2,
            LayerKind::FullyConnected => 2 * input.elements() * out.channels as u64,
            _ => 0,
        })
    }

    pub fn params(&self, input: TensorShape) -> Result<u64> {
        let out = self.output_shape(input)?;
        let k2 = self.kernel_size as u64 * self.kernel_size as u64;
        let c = input.channels as u64;
        let f = out.channels as u64;
        let bias = if self.bias { f } else { 0 };
        Ok(match self.kind {
            LayerKind::StandardConv | LayerKind::PointwiseConv => c * f * k2 + bias,
            LayerKind::DepthwiseConv => c * k2 + bias,
            LayerKind::FullyConnected => input.elements() * f + bias,
            // scale and shift
            LayerKind::BatchNorm => 2 * c,
            _ => 0,
        })
    }

    /// Number of weight words that must be streamed in for this layer.
    pub fn weight_words(&self, input: TensorShape) -> Result<u64> {
        match self.kind {
            LayerKind::BatchNorm => Ok(0),
            _ => self.params(input),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Stacked,
    DepthwiseSeparable,
    Bottleneck,
    SeparableBottleneck,
}

/// Residual path of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shortcut {
    None,
    Identity,
    /// A 1x1 convolution on the shortcut path matching the block output shape.
    Projection(LayerSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub layers: Vec<LayerSpec>,
    pub shortcut: Shortcut,
}

impl BlockSpec {
    pub fn stacked(out_channels: u32, stride: u32, shortcut: Shortcut) -> Self {
        BlockSpec {
            kind: BlockKind::Stacked,
            layers: alloc::vec![LayerSpec::conv_same(3, stride, out_channels), LayerSpec::conv_same(3, 1, out_channels)],
            shortcut,
        }
    }

    pub fn depthwise_separable(kernel_size: u32, stride: u32, out_channels: u32) -> Self {
        BlockSpec {
            kind: BlockKind::DepthwiseSeparable,
            layers: alloc::vec![
                LayerSpec::depthwise(kernel_size, stride, (kernel_size - 1) / 2),
                LayerSpec::pointwise(out_channels)
            ],
            shortcut: Shortcut::None,
        }
    }

    /// 1x1 reduce, 3x3, 1x1 expand. The stride sits on the first 1x1 layer.
    pub fn bottleneck(mid_channels: u32, out_channels: u32, stride: u32, shortcut: Shortcut) -> Self {
        BlockSpec {
            kind: BlockKind::Bottleneck,
            layers: alloc::vec![
                LayerSpec::pointwise_strided(mid_channels, stride),
                LayerSpec::conv_same(3, 1, mid_channels),
                LayerSpec::pointwise(out_channels)
            ],
            shortcut,
        }
    }

    /// 1x1 expand, 3x3 depthwise (carrying the stride), 1x1 project.
    pub fn separable_bottleneck(expanded: u32, out_channels: u32, stride: u32, shortcut: Shortcut) -> Self {
        BlockSpec {
            kind: BlockKind::SeparableBottleneck,
            layers: alloc::vec![
                LayerSpec::pointwise(expanded),
                LayerSpec::depthwise(3, stride, 1),
                LayerSpec::pointwise(out_channels)
            ],
            shortcut,
        }
    }

    pub fn has_shortcut(&self) -> bool {
        self.shortcut != Shortcut::None
    }

    /// Number of convolution layers, the `N` of a fused design.
    pub fn conv_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.kind.is_conv()).count()
    }

    pub fn validate(&self) -> Result<()> {
        use LayerKind::*;
        for layer in &self.layers {
            layer.validate()?;
        }
        let kinds: Vec<LayerKind> = self.layers.iter().map(|l| l.kind).collect();
        let ok = match self.kind {
            BlockKind::Stacked => kinds == [StandardConv, StandardConv] && self.has_shortcut(),
            BlockKind::DepthwiseSeparable => kinds == [DepthwiseConv, PointwiseConv],
            BlockKind::Bottleneck => {
                kinds == [PointwiseConv, StandardConv, PointwiseConv] && self.layers[1].kernel_size == 3
            }
            BlockKind::SeparableBottleneck => {
                kinds == [PointwiseConv, DepthwiseConv, PointwiseConv] && self.layers[1].kernel_size == 3
            }
        };
        if !ok {
            return Err(Error::InvalidConfig(format!("{:?} block has layers {:?}", self.kind, kinds)));
        }
        if let Shortcut::Projection(p) = &self.shortcut {
            p.validate()?;
            if !matches!(p.kind, PointwiseConv | StandardConv) {
                return Err(Error::InvalidConfig(format!("projection shortcut must be a convolution, got {:?}", p.kind)));
            }
        }
        Ok(())
    }

    /// Per-layer input shapes followed by the block output shape.
    pub fn layer_shapes(&self, input: TensorShape) -> Result<Vec<TensorShape>> {
        self.validate()?;
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = input;
        shapes.push(cur);
        for layer in &self.layers {
            cur = layer.output_shape(cur)?;
            shapes.push(cur);
        }
        match &self.shortcut {
            Shortcut::None => {}
            Shortcut::Identity => {
                if input != cur {
                    return Err(Error::ShapeMismatch(format!("identity shortcut joins {input} with {cur}")));
                }
            }
            Shortcut::Projection(p) => {
                let s = p.output_shape(input)?;
                if s != cur {
                    return Err(Error::ShapeMismatch(format!("projection shortcut yields {s}, block yields {cur}")));
                }
            }
        }
        Ok(shapes)
    }

    pub fn output_shape(&self, input: TensorShape) -> Result<TensorShape> {
        Ok(*self.layer_shapes(input)?.last().expect("non-empty"))
    }

    pub fn ops(&self, input: TensorShape) -> Result<u64> {
        let shapes = self.layer_shapes(input)?;
        let mut total = 0;
        for (layer, shape) in self.layers.iter().zip(&shapes) {
            total += layer.ops(*shape)?;
        }
        if let Shortcut::Projection(p) = &self.shortcut {
            total += p.ops(input)?;
        }
        Ok(total)
    }

    pub fn params(&self, input: TensorShape) -> Result<u64> {
        let shapes = self.layer_shapes(input)?;
        let mut total = 0;
        for (layer, shape) in self.layers.iter().zip(&shapes) {
            total += layer.params(*shape)?;
        }
        if let Shortcut::Projection(p) = &self.shortcut {
            total += p.params(input)?;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOp {
    Layer(LayerSpec),
    Block(BlockSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stage {
    pub input: TensorShape,
    pub op: StageOp,
}

impl Stage {
    pub fn output_shape(&self) -> Result<TensorShape> {
        match &self.op {
            StageOp::Layer(l) => l.output_shape(self.input),
            StageOp::Block(b) => b.output_shape(self.input),
        }
    }

    pub fn ops(&self) -> Result<u64> {
        match &self.op {
            StageOp::Layer(l) => l.ops(self.input),
            StageOp::Block(b) => b.ops(self.input),
        }
    }

    pub fn params(&self) -> Result<u64> {
        match &self.op {
            StageOp::Layer(l) => l.params(self.input),
            StageOp::Block(b) => b.params(self.input),
        }
    }

    /// Whether a standard-to-separable replacement applies to this stage.
    pub fn is_replaceable(&self) -> bool {
        match &self.op {
            StageOp::Layer(l) => l.kind == LayerKind::StandardConv && l.kernel_size >= 2,
            StageOp::Block(b) => b.kind == BlockKind::Bottleneck,
        }
    }

    pub fn is_replaced(&self) -> bool {
        match &self.op {
            StageOp::Layer(_) => false,
            StageOp::Block(b) => matches!(b.kind, BlockKind::DepthwiseSeparable | BlockKind::SeparableBottleneck),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelBase {
    #[serde(rename = "VGG16")]
    Vgg16,
    ResNet50,
    ResNet34,
    MobileNetV1,
    MobileNetV2,
    Custom,
}

impl fmt::Display for ModelBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelBase::Vgg16 => "VGG16",
            ModelBase::ResNet50 => "ResNet50",
            ModelBase::ResNet34 => "ResNet34",
            ModelBase::MobileNetV1 => "MobileNetV1",
            ModelBase::MobileNetV2 => "MobileNetV2",
            ModelBase::Custom => "Custom",
        })
    }
}

impl FromStr for ModelBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect();
        Ok(match norm.as_str() {
            "vgg16" => ModelBase::Vgg16,
            "resnet50" => ModelBase::ResNet50,
            "resnet34" => ModelBase::ResNet34,
            "mobilenetv1" | "mobilenet" => ModelBase::MobileNetV1,
            "mobilenetv2" => ModelBase::MobileNetV2,
            "custom" => ModelBase::Custom,
            _ => return Err(Error::UnknownModel(s.into())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Replacement {
    Origin,
    Separable,
}

/// A CNN in the replacement design space: base model, stages, and one
/// ORIGIN/SEPARABLE flag per replaceable position.
///
/// A position is a group of stages replaced together (a VGG-16 convolution
/// group, a ResNet bottleneck). Positions are ordered from the input (bottom)
/// towards the classifier (top).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub base: ModelBase,
    pub input: TensorShape,
    pub stages: Vec<Stage>,
    pub positions: Vec<Vec<usize>>,
    pub replacement_vector: Vec<Replacement>,
}

impl ModelSpec {
    /// Builds a model by chaining `ops` from `input`; every replaceable stage
    /// becomes its own position.
    pub fn chain(base: ModelBase, input: TensorShape, ops: Vec<StageOp>) -> Result<Self> {
        let mut stages = Vec::with_capacity(ops.len());
        let mut cur = input;
        for op in ops {
            let stage = Stage { input: cur, op };
            cur = stage.output_shape()?;
            stages.push(stage);
        }
        let positions: Vec<Vec<usize>> =
            stages.iter().enumerate().filter(|(_, s)| s.is_replaceable()).map(|(i, _)| alloc::vec![i]).collect();
        let replacement_vector = alloc::vec![Replacement::Origin; positions.len()];
        let model = ModelSpec { base, input, stages, positions, replacement_vector };
        model.validate()?;
        Ok(model)
    }

    /// Replaces the position list; all positions start as ORIGIN.
    pub fn with_positions(mut self, positions: Vec<Vec<usize>>) -> Result<Self> {
        self.replacement_vector = alloc::vec![Replacement::Origin; positions.len()];
        self.positions = positions;
        self.validate()?;
        Ok(self)
    }

    pub fn output_shape(&self) -> Result<TensorShape> {
        match self.stages.last() {
            Some(s) => s.output_shape(),
            None => Ok(self.input),
        }
    }

    /// `N`, the number of replaceable positions.
    pub fn num_positions(&self) -> usize {
        self.positions.len()
    }

    pub fn replaced_count(&self) -> usize {
        self.replacement_vector.iter().filter(|r| **r == Replacement::Separable).count()
    }

    pub fn validate(&self) -> Result<()> {
        self.input.validate()?;
        let mut cur = self.input;
        for (i, stage) in self.stages.iter().enumerate() {
            if stage.input != cur {
                return Err(Error::ShapeMismatch(format!(
                    "stage {i} expects input {} but the previous stage produces {cur}",
                    stage.input
                )));
            }
            cur = stage.output_shape()?;
        }
        if self.positions.len() != self.replacement_vector.len() {
            return Err(Error::InvalidConfig(format!(
                "{} positions but replacement vector of length {}",
                self.positions.len(),
                self.replacement_vector.len()
            )));
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for (p, (stages, rep)) in self.positions.iter().zip(&self.replacement_vector).enumerate() {
            if stages.is_empty() {
                return Err(Error::InvalidConfig(format!("position {p} is empty")));
            }
            for &s in stages {
                let stage = self
                    .stages
                    .get(s)
                    .ok_or_else(|| Error::InvalidConfig(format!("position {p} refers to missing stage {s}")))?;
                if !seen.insert(s) {
                    return Err(Error::InvalidConfig(format!("stage {s} belongs to more than one position")));
                }
                let consistent = match rep {
                    Replacement::Origin => stage.is_replaceable(),
                    Replacement::Separable => stage.is_replaced(),
                };
                if !consistent {
                    return Err(Error::InvalidConfig(format!("stage {s} of position {p} is not in {rep:?} form")));
                }
            }
        }
        Ok(())
    }
}
