//! Declarative model files.
//!
//! A file either names a reference network:
//!
//! ```json
//! { "reference": "resnet50", "input": { "height": 224, "width": 224, "channels": 3 } }
//! ```
//!
//! or lists its stages. Each stage is a layer (`kind`, `kernel`, `stride`,
//! `out_channels`, `padding`) or a block (`block`, `layers`, `shortcut`).
//! Stages sharing a `group` number are replaced together; without any
//! `group`, every replaceable stage is its own position.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use turf_core::model::{
    build_reference_model, BlockKind, BlockSpec, LayerKind, LayerSpec, ModelBase, ModelSpec, Shortcut, StageOp, TensorShape,
};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerName {
    Conv,
    Depthwise,
    Pointwise,
    Fc,
    Relu,
    BatchNorm,
    Add,
    MaxPool,
    AvgPool,
}

impl From<LayerName> for LayerKind {
    fn from(n: LayerName) -> Self {
        match n {
            LayerName::Conv => LayerKind::StandardConv,
            LayerName::Depthwise => LayerKind::DepthwiseConv,
            LayerName::Pointwise => LayerKind::PointwiseConv,
            LayerName::Fc => LayerKind::FullyConnected,
            LayerName::Relu => LayerKind::Activation,
            LayerName::BatchNorm => LayerKind::BatchNorm,
            LayerName::Add => LayerKind::ElementwiseAdd,
            LayerName::MaxPool => LayerKind::MaxPool,
            LayerName::AvgPool => LayerKind::AvgPool,
        }
    }
}

impl From<LayerKind> for LayerName {
    fn from(k: LayerKind) -> Self {
        match k {
            LayerKind::StandardConv => LayerName::Conv,
            LayerKind::DepthwiseConv => LayerName::Depthwise,
            LayerKind::PointwiseConv => LayerName::Pointwise,
            LayerKind::FullyConnected => LayerName::Fc,
            LayerKind::Activation => LayerName::Relu,
            LayerKind::BatchNorm => LayerName::BatchNorm,
            LayerKind::ElementwiseAdd => LayerName::Add,
            LayerKind::MaxPool => LayerName::MaxPool,
            LayerKind::AvgPool => LayerName::AvgPool,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub kind: LayerName,
    #[serde(default = "one")]
    pub kernel: u32,
    #[serde(default = "one")]
    pub stride: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<u32>,
    /// Defaults to `kernel / 2` for convolutions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<u32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub bias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
}

fn one() -> u32 {
    1
}

impl LayerEntry {
    fn to_spec(&self) -> LayerSpec {
        let kind = LayerKind::from(self.kind);
        let padding = self.padding.unwrap_or(match kind {
            LayerKind::StandardConv | LayerKind::DepthwiseConv => self.kernel / 2,
            _ => 0,
        });
        LayerSpec { kind, kernel_size: self.kernel, stride: self.stride, out_channels: self.out_channels, padding, bias: self.bias }
    }

    fn from_spec(l: &LayerSpec, group: Option<usize>) -> Self {
        LayerEntry {
            kind: l.kind.into(),
            kernel: l.kernel_size,
            stride: l.stride,
            out_channels: l.out_channels,
            padding: Some(l.padding),
            bias: l.bias,
            group,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortcutEntry {
    None,
    Identity,
    Projection(LayerEntry),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub block: BlockKind,
    pub layers: Vec<LayerEntry>,
    #[serde(default = "no_shortcut")]
    pub shortcut: ShortcutEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
}

fn no_shortcut() -> ShortcutEntry {
    ShortcutEntry::None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageEntry {
    Block(BlockEntry),
    Layer(LayerEntry),
}

impl StageEntry {
    fn group(&self) -> Option<usize> {
        match self {
            StageEntry::Block(b) => b.group,
            StageEntry::Layer(l) => l.group,
        }
    }

    fn to_op(&self) -> StageOp {
        match self {
            StageEntry::Layer(l) => StageOp::Layer(l.to_spec()),
            StageEntry::Block(b) => StageOp::Block(BlockSpec {
                kind: b.block,
                layers: b.layers.iter().map(LayerEntry::to_spec).collect(),
                shortcut: match &b.shortcut {
                    ShortcutEntry::None => Shortcut::None,
                    ShortcutEntry::Identity => Shortcut::Identity,
                    ShortcutEntry::Projection(p) => Shortcut::Projection(p.to_spec()),
                },
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<ModelBase>,
    pub input: TensorShape,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageEntry>,
}

impl ModelFile {
    pub fn to_model(&self) -> turf_core::Result<ModelSpec> {
        self.input.validate()?;
        if let Some(name) = &self.reference {
            if !self.stages.is_empty() {
                return Err(turf_core::Error::InvalidConfig("a model file lists either `reference` or `stages`, not both".into()));
            }
            return build_reference_model(name, self.input);
        }
        if self.stages.is_empty() {
            return Err(turf_core::Error::InvalidConfig("model file has no stages".into()));
        }
        let base = self.base.unwrap_or(ModelBase::Custom);
        let model = ModelSpec::chain(base, self.input, self.stages.iter().map(StageEntry::to_op).collect())?;
        if self.stages.iter().all(|s| s.group().is_none()) {
            return Ok(model);
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.stages.iter().enumerate() {
            if let Some(g) = s.group() {
                if !model.stages[i].is_replaceable() {
                    return Err(turf_core::Error::InvalidReplacement(format!("stage {i} is in group {g} but cannot be replaced")));
                }
                groups.entry(g).or_default().push(i);
            }
        }
        model.with_positions(groups.into_values().collect())
    }

    /// Explicit stage listing of `model`, with groups for multi-stage positions.
    pub fn from_model(model: &ModelSpec) -> Self {
        let mut group_of = vec![None; model.stages.len()];
        for (g, stages) in model.positions.iter().enumerate() {
            for &s in stages {
                group_of[s] = Some(g);
            }
        }
        let stages = model
            .stages
            .iter()
            .zip(group_of)
            .map(|(s, group)| match &s.op {
                StageOp::Layer(l) => StageEntry::Layer(LayerEntry::from_spec(l, group)),
                StageOp::Block(b) => StageEntry::Block(BlockEntry {
                    block: b.kind,
                    layers: b.layers.iter().map(|l| LayerEntry::from_spec(l, None)).collect(),
                    shortcut: match &b.shortcut {
                        Shortcut::None => ShortcutEntry::None,
                        Shortcut::Identity => ShortcutEntry::Identity,
                        Shortcut::Projection(p) => ShortcutEntry::Projection(LayerEntry::from_spec(p, None)),
                    },
                    group,
                }),
            })
            .collect();
        ModelFile { reference: None, base: Some(model.base), input: model.input, stages }
    }
}

pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let file: ModelFile = crate::io::read_json(path)?;
    Ok(file.to_model()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips_through_explicit_form() {
        let input = TensorShape { height: 224, width: 224, channels: 3 };
        for name in ["vgg16", "resnet50", "resnet34", "mobilenetv1", "mobilenetv2"] {
            let m = build_reference_model(name, input).unwrap();
            let text = serde_json::to_string(&ModelFile::from_model(&m)).unwrap();
            let back: ModelFile = serde_json::from_str(&text).unwrap();
            assert_eq!(back.to_model().unwrap(), m, "{name}");
        }
    }

    #[test]
    fn stage_list_with_defaults() {
        let text = r#"{
            "input": {"height": 8, "width": 8, "channels": 4},
            "stages": [
                {"kind": "conv", "kernel": 3, "out_channels": 8},
                {"block": "depthwise_separable", "layers": [{"kind": "depthwise", "kernel": 3}, {"kind": "pointwise", "out_channels": 16}]}
            ]
        }"#;
        let m = serde_json::from_str::<ModelFile>(text).unwrap().to_model().unwrap();
        assert_eq!(m.output_shape().unwrap(), TensorShape { height: 8, width: 8, channels: 16 });
        assert_eq!(m.num_positions(), 1);
    }

    #[test]
    fn unknown_reference() {
        let f = ModelFile { reference: Some("alexnet".into()), base: None, input: TensorShape { height: 1, width: 1, channels: 1 }, stages: vec![] };
        assert_eq!(f.to_model().unwrap_err().name(), "UnknownModel");
    }
}
