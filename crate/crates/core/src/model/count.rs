use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{LayerKind, ModelSpec, StageOp, TensorShape};
use crate::error::Result;

/// Which bar of an ops/params breakdown a stage falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageCategory {
    Block,
    SingleLayer,
    FullyConnected,
    /// Pooling, activation and other layers with no ops.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub index: usize,
    pub label: alloc::string::String,
    pub category: StageCategory,
    pub input: TensorShape,
    pub output: TensorShape,
    pub ops: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub total_ops: u64,
    pub total_params: u64,
    pub stages: Vec<StageCount>,
}

impl OpCount {
    pub fn gop(&self) -> f64 {
        self.total_ops as f64 / 1e9
    }

    pub fn mparams(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    /// Params in units of 2^20.
    pub fn mparams_binary(&self) -> f64 {
        self.total_params as f64 / (1u64 << 20) as f64
    }

    /// Sums (ops, params) over one category.
    pub fn by_category(&self, category: StageCategory) -> (u64, u64) {
        self.stages
            .iter()
            .filter(|s| s.category == category)
            .fold((0, 0), |(o, p), s| (o + s.ops, p + s.params))
    }
}

/// Counts ops and params per stage. A multiply-accumulate is two ops.
pub fn count_ops_params(model: &ModelSpec) -> Result<OpCount> {
    model.validate()?;
    let mut stages = Vec::with_capacity(model.stages.len());
    for (index, stage) in model.stages.iter().enumerate() {
        let (label, category) = match &stage.op {
            StageOp::Block(b) => (alloc::format!("{:?}", b.kind), StageCategory::Block),
            StageOp::Layer(l) => {
                let cat = match l.kind {
                    LayerKind::FullyConnected => StageCategory::FullyConnected,
                    k if k.is_conv() => StageCategory::SingleLayer,
                    _ => StageCategory::Other,
                };
                (alloc::format!("{:?}", l.kind), cat)
            }
        };
        stages.push(StageCount {
            index,
            label,
            category,
            input: stage.input,
            output: stage.output_shape()?,
            ops: stage.ops()?,
            params: stage.params()?,
        });
    }
    Ok(OpCount {
        total_ops: stages.iter().map(|s| s.ops).sum(),
        total_params: stages.iter().map(|s| s.params).sum(),
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerSpec, ModelBase};

    fn single(input: TensorShape, layer: LayerSpec) -> ModelSpec {
        ModelSpec::chain(ModelBase::Custom, input, alloc::vec![StageOp::Layer(layer)]).unwrap()
    }

    #[test]
    fn smallest_conv_is_one_mac() {
        let m = single(TensorShape { height: 1, width: 1, channels: 1 }, LayerSpec::pointwise(1));
        let c = count_ops_params(&m).unwrap();
        assert_eq!((c.total_ops, c.total_params), (2, 1));
    }

    #[test]
    fn same_padded_conv() {
        let m = single(TensorShape { height: 8, width: 8, channels: 16 }, LayerSpec::conv_same(3, 1, 32));
        assert_eq!(count_ops_params(&m).unwrap().total_ops, 2 * 8 * 8 * 16 * 32 * 9);
    }

    #[test]
    fn fc_flattens_input() {
        let m = single(TensorShape { height: 2, width: 2, channels: 3 }, LayerSpec::fully_connected(5));
        let c = count_ops_params(&m).unwrap();
        assert_eq!(c.total_ops, 2 * 12 * 5);
        assert_eq!(c.total_params, 12 * 5 + 5);
        assert_eq!(c.by_category(StageCategory::FullyConnected).0, 120);
    }

    #[test]
    fn batch_norm_counts_scale_and_shift() {
        let m = single(TensorShape { height: 4, width: 4, channels: 6 }, LayerSpec::passthrough(LayerKind::BatchNorm));
        let c = count_ops_params(&m).unwrap();
        assert_eq!((c.total_ops, c.total_params), (0, 12));
    }
}
