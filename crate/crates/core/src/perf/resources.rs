use alloc::collections::BTreeMap;
use alloc::format;

use serde::{Deserialize, Serialize};

use super::{PlatformSpec, WORD_BYTES};
use crate::error::{Error, Result};
use crate::fusion::{plan_chain, FusedDesignConfig};
use crate::hw::{instantiate_layer, ModuleDesc, ModuleKind};
use crate::model::{LayerSpec, TensorShape};

/// ALMs of one module: `base + per_lane * (in_width + out_width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmCoefficients {
    pub base: f64,
    pub per_lane: f64,
}

/// Linear resource model coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Free-form provenance note, copied into reports.
    pub source: alloc::string::String,
    pub bram_block_bytes: u64,
    pub alm: BTreeMap<ModuleKind, AlmCoefficients>,
}

impl Calibration {
    /// Documented placeholder values, not fitted to synthesized designs.
    pub fn placeholder() -> Self {
        use ModuleKind::*;
        let table = [
            (LineBuffer, 120.0, 6.0),
            (InputBuffer, 80.0, 2.0),
            (OutputBuffer, 80.0, 2.0),
            (WinogradInputTransform, 200.0, 12.0),
            (WinogradWeightTransform, 200.0, 8.0),
            (WinogradOutputTransform, 200.0, 10.0),
            (DotProductArray, 300.0, 4.0),
            (ElementwiseAdd, 40.0, 1.0),
            (Activation, 20.0, 1.0),
            (Norm, 60.0, 2.0),
        ];
        Calibration {
            source: "placeholder".into(),
            bram_block_bytes: 2560,
            alm: table.into_iter().map(|(k, base, per_lane)| (k, AlmCoefficients { base, per_lane })).collect(),
        }
    }

    fn alms(&self, m: &ModuleDesc) -> Result<f64> {
        let c = self.alm.get(&m.kind).ok_or_else(|| Error::CalibrationError(format!("no ALM coefficients for {:?}", m.kind)))?;
        Ok(c.base + c.per_lane * (m.in_width + m.out_width) as f64)
    }

    /// BRAM blocks holding `words` 16-bit words.
    pub fn bram_blocks(&self, words: u64) -> u64 {
        (words * WORD_BYTES).div_ceil(self.bram_block_bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub dsp: u64,
    pub bram: u64,
    pub alm: u64,
}

impl ResourceEstimate {
    pub const ZERO: ResourceEstimate = ResourceEstimate { dsp: 0, bram: 0, alm: 0 };

    pub fn fits(&self, platform: &PlatformSpec) -> bool {
        self.dsp <= platform.dsp_total && self.bram <= platform.bram_blocks && self.alm <= platform.alm_total
    }

    /// Elementwise maximum: hardware shared by stages run one after another.
    pub fn max(self, other: ResourceEstimate) -> ResourceEstimate {
        ResourceEstimate { dsp: self.dsp.max(other.dsp), bram: self.bram.max(other.bram), alm: self.alm.max(other.alm) }
    }
}

/// Resources of a fused chain. Line buffers are shift registers and count
/// toward ALMs only; input, output and intermediate buffers take BRAM.
pub fn estimate_chain(layers: &[LayerSpec], input: TensorShape, cfg: &FusedDesignConfig, calib: &Calibration) -> Result<ResourceEstimate> {
    let mut shapes = alloc::vec![input];
    for l in layers {
        shapes.push(l.output_shape(shapes[shapes.len() - 1])?);
    }
    let plan = plan_chain(layers, &shapes, cfg)?;
    let mut dsp = 0;
    let mut alm = 0.0;
    for (layer, hw) in layers.iter().zip(&plan.layers) {
        for m in instantiate_layer(layer, hw)? {
            dsp += m.multipliers;
            alm += calib.alms(&m)?;
        }
    }
    let mut bram = calib.bram_blocks(plan.input_buffer_words) + calib.bram_blocks(plan.output_buffer_words);
    for b in &plan.buffers {
        bram += calib.bram_blocks(b.words);
    }
    Ok(ResourceEstimate { dsp, bram, alm: libm::ceil(alm) as u64 })
}

/// Resources of a fused block design.
pub fn estimate_resources(
    block: &crate::model::BlockSpec,
    input: TensorShape,
    cfg: &FusedDesignConfig,
    calib: &Calibration,
) -> Result<ResourceEstimate> {
    block.layer_shapes(input)?;
    estimate_chain(&block.layers, input, cfg, calib)
}
