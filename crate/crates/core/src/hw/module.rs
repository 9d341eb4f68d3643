use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::LayerHwConfig;
use crate::error::{Error, Result};
use crate::kernels::{TransformKind, WinogradConfig};
use crate::model::{LayerKind, LayerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModuleKind {
    LineBuffer,
    InputBuffer,
    OutputBuffer,
    WinogradInputTransform,
    WinogradWeightTransform,
    WinogradOutputTransform,
    DotProductArray,
    ElementwiseAdd,
    Activation,
    Norm,
}

/// Whether a module sits on the feature-map stream or on the weight side
/// input of the dot-product array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortRole {
    Stream,
    Weights,
}

/// A building module as `<cfg, in, out>` plus derived costs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDesc {
    pub kind: ModuleKind,
    pub cfg: BTreeMap<String, u64>,
    pub in_width: u64,
    pub out_width: u64,
    pub role: PortRole,
    /// Fill latency in cycles; every module has initiation interval 1.
    pub latency: u64,
    /// Hard multipliers (DSP blocks).
    pub multipliers: u64,
}

fn cfg(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (String::from(*k), *v)).collect()
}

fn adder_tree_depth(inputs: u64) -> u64 {
    (u64::BITS - inputs.max(1).saturating_sub(1).leading_zeros()) as u64
}

impl ModuleDesc {
    fn new(kind: ModuleKind, cfg: BTreeMap<String, u64>, in_width: u64, out_width: u64) -> Self {
        ModuleDesc { kind, cfg, in_width, out_width, role: PortRole::Stream, latency: 1, multipliers: 0 }
    }

    /// Sliding windows over `K'` rows of shift registers.
    pub fn line_buffer(p_c: u64, p_h: u64, p_w: u64, k_prime: u64) -> Self {
        let out = p_c * (k_prime + p_h - 1) * (k_prime + p_w - 1);
        let mut m = Self::new(ModuleKind::LineBuffer, cfg(&[("P_c", p_c), ("P_h", p_h), ("P_w", p_w), ("K'", k_prime)]), p_c * p_h * p_w, out);
        m.latency = k_prime;
        m
    }

    pub fn input_buffer(p_c: u64, p_w: u64) -> Self {
        Self::new(ModuleKind::InputBuffer, cfg(&[("P_c", p_c), ("P_w", p_w)]), p_c * p_w, p_c * p_w)
    }

    pub fn output_buffer(p_f: u64, p_w: u64) -> Self {
        Self::new(ModuleKind::OutputBuffer, cfg(&[("P_f", p_f), ("P_w", p_w)]), p_f * p_w, p_f * p_w)
    }

    /// `BT d B` on `p_c` tiles per cycle.
    pub fn winograd_input_transform(p_c: u64, k: u64, wino: &WinogradConfig) -> Self {
        let tk = wino.tile_size() as u64;
        let mut m = Self::new(ModuleKind::WinogradInputTransform, cfg(&[("P_c", p_c), ("K", k), ("m", wino.m as u64)]), p_c * tk * tk, p_c * tk * tk);
        m.latency = 2 * tk;
        m.multipliers = p_c * wino.transform_multipliers(TransformKind::Input);
        m
    }

    /// `G g GT` for `p_c x p_f` kernels per cycle.
    pub fn winograd_weight_transform(p_c: u64, p_f: u64, k: u64, wino: &WinogradConfig) -> Self {
        let tk = wino.tile_size() as u64;
        let mut m = Self::new(
            ModuleKind::WinogradWeightTransform,
            cfg(&[("P_c", p_c), ("P_f", p_f), ("K", k), ("m", wino.m as u64)]),
            p_c * p_f * k * k,
            p_c * p_f * tk * tk,
        );
        m.role = PortRole::Weights;
        m.latency = tk + k;
        m.multipliers = p_c * p_f * wino.transform_multipliers(TransformKind::Weight);
        m
    }

    /// `AT X A` on `p_c x p_f` tiles per cycle.
    pub fn winograd_output_transform(p_c: u64, p_f: u64, k: u64, wino: &WinogradConfig) -> Self {
        let tk = wino.tile_size() as u64;
        let mm = (wino.m * wino.m) as u64;
        let mut m = Self::new(
            ModuleKind::WinogradOutputTransform,
            cfg(&[("P_c", p_c), ("P_f", p_f), ("K", k), ("m", wino.m as u64)]),
            p_c * p_f * tk * tk,
            p_c * p_f * mm,
        );
        m.latency = tk + wino.m as u64;
        m.multipliers = p_c * p_f * wino.transform_multipliers(TransformKind::Output);
        m
    }

    /// `lanes` dot products of length `length` each cycle.
    pub fn dot_product_array(in_width: u64, lanes: u64, length: u64) -> Self {
        let mut m = Self::new(ModuleKind::DotProductArray, cfg(&[("lanes", lanes), ("length", length)]), in_width, lanes);
        m.latency = 1 + adder_tree_depth(length);
        m.multipliers = lanes * length;
        m
    }

    pub fn passthrough(kind: ModuleKind, width: u64) -> Self {
        let mut m = Self::new(kind, cfg(&[("width", width)]), width, width);
        m.latency = 0;
        m
    }
}

/// Builds the module chain that runs `layer` under `hw`.
///
/// Spatial parallelism is folded into the buffer widths (`P_w` of the buffer
/// tuples becomes `P_h x P_w`). On the Winograd path the line buffer runs with
/// `K' = K` and `P_h = P_w = m`, emitting one `T_k x T_k` tile per channel
/// lane, and the dot-product array reduces over input channels before the
/// output transform.
pub fn instantiate_layer(layer: &LayerSpec, hw: &LayerHwConfig) -> Result<Vec<ModuleDesc>> {
    hw.validate_for(layer)?;
    let p = hw.parallelism;
    let (pc, pf, ph, pw) = (p.c as u64, p.f as u64, p.h as u64, p.w as u64);
    let spatial = ph * pw;
    let k = layer.kernel_size as u64;
    let chain = match (layer.kind, hw.winograd_m()) {
        (LayerKind::StandardConv, Some(m)) => {
            let wino = WinogradConfig::new(m as usize, 3)?;
            let tk2 = (wino.tile_size() * wino.tile_size()) as u64;
            vec![
                ModuleDesc::input_buffer(pc, spatial),
                ModuleDesc::line_buffer(pc, ph, pw, k),
                ModuleDesc::winograd_input_transform(pc, k, &wino),
                ModuleDesc::winograd_weight_transform(pc, pf, k, &wino),
                dot_product_lanes(pc * tk2, pf * tk2, pc),
                ModuleDesc::winograd_output_transform(1, pf, k, &wino),
                ModuleDesc::output_buffer(pf, spatial),
            ]
        }
        (LayerKind::DepthwiseConv, Some(m)) => {
            let wino = WinogradConfig::new(m as usize, 3)?;
            let tk2 = (wino.tile_size() * wino.tile_size()) as u64;
            vec![
                ModuleDesc::input_buffer(pc, spatial),
                ModuleDesc::line_buffer(pc, ph, pw, k),
                ModuleDesc::winograd_input_transform(pc, k, &wino),
                ModuleDesc::winograd_weight_transform(pc, 1, k, &wino),
                dot_product_lanes(pc * tk2, pc * tk2, 1),
                ModuleDesc::winograd_output_transform(pc, 1, k, &wino),
                ModuleDesc::output_buffer(pc, spatial),
            ]
        }
        (LayerKind::StandardConv, None) => vec![
            ModuleDesc::input_buffer(pc, spatial),
            ModuleDesc::line_buffer(pc, ph, pw, k),
            dot_product_lanes(pc * (k + ph - 1) * (k + pw - 1), pf * spatial, pc * k * k),
            ModuleDesc::output_buffer(pf, spatial),
        ],
        (LayerKind::DepthwiseConv, None) => vec![
            ModuleDesc::input_buffer(pc, spatial),
            ModuleDesc::line_buffer(pc, ph, pw, k),
            dot_product_lanes(pc * (k + ph - 1) * (k + pw - 1), pc * spatial, k * k),
            ModuleDesc::output_buffer(pc, spatial),
        ],
        (LayerKind::PointwiseConv | LayerKind::FullyConnected, None) => vec![
            ModuleDesc::input_buffer(pc, spatial),
            dot_product_lanes(pc * spatial, pf * spatial, pc),
            ModuleDesc::output_buffer(pf, spatial),
        ],
        (LayerKind::Activation, None) => vec![ModuleDesc::passthrough(ModuleKind::Activation, pc * spatial)],
        (LayerKind::BatchNorm, None) => vec![ModuleDesc::passthrough(ModuleKind::Norm, pc * spatial)],
        (LayerKind::ElementwiseAdd, None) => vec![ModuleDesc::passthrough(ModuleKind::ElementwiseAdd, pc * spatial)],
        (kind, _) => return Err(Error::UnsupportedConfig(format!("no hardware template for {kind:?}"))),
    };
    Ok(chain)
}

fn dot_product_lanes(in_width: u64, lanes: u64, length: u64) -> ModuleDesc {
    ModuleDesc::dot_product_array(in_width, lanes, length)
}

/// Checks that every stream module's output feeds the next one's input.
pub fn check_chaining(chain: &[ModuleDesc]) -> Result<()> {
    let stream: Vec<&ModuleDesc> = chain.iter().filter(|m| m.role == PortRole::Stream).collect();
    for pair in stream.windows(2) {
        if pair[0].out_width != pair[1].in_width {
            return Err(Error::PortMismatch(format!(
                "{:?} emits {} elements per cycle but {:?} consumes {}",
                pair[0].kind, pair[0].out_width, pair[1].kind, pair[1].in_width
            )));
        }
    }
    Ok(())
}
