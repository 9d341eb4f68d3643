//! Builders for the standard ImageNet architectures.
//!
//! Batch normalization is assumed folded into the preceding convolution, so
//! no BatchNorm stages are emitted and convolutions in the residual and
//! mobile networks carry no bias.

use alloc::vec;
use alloc::vec::Vec;

use super::{BlockSpec, LayerSpec, ModelBase, ModelSpec, Shortcut, StageOp, TensorShape};
use crate::error::{Error, Result};

/// Builds a reference model by name, e.g. `"VGG16"` or `"mobilenet-v2"`.
pub fn build_reference_model(name: &str, input: TensorShape) -> Result<ModelSpec> {
    match name.parse::<ModelBase>()? {
        ModelBase::Vgg16 => vgg16(input),
        ModelBase::ResNet50 => resnet50(input),
        ModelBase::ResNet34 => resnet34(input),
        ModelBase::MobileNetV1 => mobilenet_v1(input),
        ModelBase::MobileNetV2 => mobilenet_v2(input),
        ModelBase::Custom => Err(Error::UnknownModel(name.into())),
    }
}

/// Tracks the running shape so pooling sizes can depend on it.
struct Builder {
    input: TensorShape,
    cur: TensorShape,
    ops: Vec<StageOp>,
}

impl Builder {
    fn new(input: TensorShape) -> Result<Self> {
        input.validate()?;
        Ok(Builder { input, cur: input, ops: Vec::new() })
    }

    fn layer(&mut self, l: LayerSpec) -> Result<usize> {
        self.cur = l.output_shape(self.cur)?;
        self.ops.push(StageOp::Layer(l));
        Ok(self.ops.len() - 1)
    }

    fn block(&mut self, b: BlockSpec) -> Result<usize> {
        self.cur = b.output_shape(self.cur)?;
        self.ops.push(StageOp::Block(b));
        Ok(self.ops.len() - 1)
    }

    fn global_pool(&mut self) -> Result<usize> {
        let k = self.cur.height.min(self.cur.width);
        self.layer(LayerSpec::avg_pool(k, k))
    }

    fn finish(self, base: ModelBase, positions: Option<Vec<Vec<usize>>>) -> Result<ModelSpec> {
        let model = ModelSpec::chain(base, self.input, self.ops)?;
        match positions {
            Some(p) => model.with_positions(p),
            None => Ok(model),
        }
    }
}

/// VGG-16. Each of the five convolution groups is one replaceable position.
pub fn vgg16(input: TensorShape) -> Result<ModelSpec> {
    let mut b = Builder::new(input)?;
    let mut groups = Vec::new();
    for widths in [&[64, 64][..], &[128, 128], &[256; 3], &[512; 3], &[512; 3]] {
        let mut group = Vec::new();
        for &f in widths {
            group.push(b.layer(LayerSpec::conv_same(3, 1, f).with_bias(true))?);
        }
        groups.push(group);
        b.layer(LayerSpec::max_pool(2, 2, 0))?;
    }
    for f in [4096, 4096, 1000] {
        b.layer(LayerSpec::fully_connected(f))?;
    }
    b.finish(ModelBase::Vgg16, Some(groups))
}

fn projection(out: u32, stride: u32) -> Shortcut {
    Shortcut::Projection(LayerSpec::pointwise_strided(out, stride))
}

fn resnet_stem(b: &mut Builder) -> Result<()> {
    b.layer(LayerSpec::conv(7, 2, 64, 3))?;
    b.layer(LayerSpec::max_pool(3, 2, 1))?;
    Ok(())
}

/// ResNet-50 with the stride on the first 1x1 layer of each stage. Every
/// bottleneck block is a replaceable position.
pub fn resnet50(input: TensorShape) -> Result<ModelSpec> {
    let mut b = Builder::new(input)?;
    resnet_stem(&mut b)?;
    let mut positions = Vec::new();
    for (blocks, mid, out, stride) in [(3, 64, 256, 1), (4, 128, 512, 2), (6, 256, 1024, 2), (3, 512, 2048, 2)] {
        for i in 0..blocks {
            let s = if i == 0 { stride } else { 1 };
            let shortcut = if i == 0 { projection(out, s) } else { Shortcut::Identity };
            positions.push(vec![b.block(BlockSpec::bottleneck(mid, out, s, shortcut))?]);
        }
    }
    b.global_pool()?;
    b.layer(LayerSpec::fully_connected(1000))?;
    b.finish(ModelBase::ResNet50, Some(positions))
}

/// ResNet-34, built from stacked blocks.
pub fn resnet34(input: TensorShape) -> Result<ModelSpec> {
    let mut b = Builder::new(input)?;
    resnet_stem(&mut b)?;
    for (blocks, out, stride) in [(3, 64, 1), (4, 128, 2), (6, 256, 2), (3, 512, 2)] {
        for i in 0..blocks {
            let s = if i == 0 { stride } else { 1 };
            let shortcut = if s != 1 { projection(out, s) } else { Shortcut::Identity };
            b.block(BlockSpec::stacked(out, s, shortcut))?;
        }
    }
    b.global_pool()?;
    b.layer(LayerSpec::fully_connected(1000))?;
    b.finish(ModelBase::ResNet34, None)
}

pub fn mobilenet_v1(input: TensorShape) -> Result<ModelSpec> {
    let mut b = Builder::new(input)?;
    b.layer(LayerSpec::conv_same(3, 2, 32))?;
    let mut cfg = vec![(64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2)];
    cfg.extend([(512, 1); 5]);
    cfg.extend([(1024, 2), (1024, 1)]);
    for (f, s) in cfg {
        b.block(BlockSpec::depthwise_separable(3, s, f))?;
    }
    b.global_pool()?;
    b.layer(LayerSpec::fully_connected(1000))?;
    b.finish(ModelBase::MobileNetV1, None)
}

pub fn mobilenet_v2(input: TensorShape) -> Result<ModelSpec> {
    let mut b = Builder::new(input)?;
    b.layer(LayerSpec::conv_same(3, 2, 32))?;
    let cfg = [(1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2), (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)];
    for (expand, out, repeats, stride) in cfg {
        for i in 0..repeats {
            let s = if i == 0 { stride } else { 1 };
            let c = b.cur.channels;
            if expand == 1 {
                b.block(BlockSpec::depthwise_separable(3, s, out))?;
            } else {
                let shortcut = if s == 1 && c == out { Shortcut::Identity } else { Shortcut::None };
                b.block(BlockSpec::separable_bottleneck(c * expand, out, s, shortcut))?;
            }
        }
    }
    b.layer(LayerSpec::pointwise(1280))?;
    b.global_pool()?;
    b.layer(LayerSpec::fully_connected(1000))?;
    b.finish(ModelBase::MobileNetV2, None)
}
