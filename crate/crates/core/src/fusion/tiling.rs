use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockSpec, LayerSpec, TensorShape};

/// Cost of spatially tiling a fused block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TilingOverhead {
    /// Ops spent recomputing halo pixels shared by neighbouring tiles.
    pub redundant_ops: u64,
    /// Input halo pixels loaded more than once, in bytes.
    pub extra_offchip_bytes: u64,
}

const WORD_BYTES: u64 = 2;

/// Half-open range of rows (or columns).
type Span = (u32, u32);

/// Input rows a layer reads to produce output rows `span`, clipped to the map.
fn input_span(layer: &LayerSpec, span: Span, input_len: u32) -> Span {
    let s = layer.stride as i64;
    let lo = span.0 as i64 * s - layer.padding as i64;
    let hi = (span.1 as i64 - 1) * s - layer.padding as i64 + layer.kernel_size as i64;
    (lo.max(0) as u32, hi.min(input_len as i64) as u32)
}

fn tile_spans(len: u32, tile: u32) -> Vec<Span> {
    (0..len.div_ceil(tile)).map(|i| (i * tile, ((i + 1) * tile).min(len))).collect()
}

/// Halo recomputation when the block output is tiled `tile_h x tile_w` and
/// each tile is computed from the block input independently.
pub fn tiling_overhead(block: &BlockSpec, input: TensorShape, tile_h: u32, tile_w: u32) -> Result<TilingOverhead> {
    let shapes = block.layer_shapes(input)?;
    tiling_overhead_chain(&block.layers, &shapes, tile_h, tile_w)
}

/// Same as [`tiling_overhead`] for a bare layer chain; `shapes` holds each
/// layer's input followed by the final output.
pub fn tiling_overhead_chain(layers: &[LayerSpec], shapes: &[TensorShape], tile_h: u32, tile_w: u32) -> Result<TilingOverhead> {
    let input = shapes[0];
    let out = shapes[shapes.len() - 1];
    let (th, tw) = (tile_h.min(out.height), tile_w.min(out.width));
    let max_k = layers.iter().map(|l| l.kernel_size).max().unwrap_or(1);
    for (t, full) in [(th, out.height), (tw, out.width)] {
        if t == 0 || (t < full && t < max_k) {
            return Err(Error::InvalidTiling(format!("tile edge {t} is smaller than the {max_k}x{max_k} receptive field")));
        }
    }
    let n = layers.len();
    let rows = axis_coverage(layers, out.height, th, |s| s.height, shapes);
    let cols = axis_coverage(layers, out.width, tw, |s| s.width, shapes);
    // computed minus distinct pixels, per layer output (index 1..=n) and input (index 0)
    let excess = |i: usize| rows[i].0 * cols[i].0 - rows[i].1 * cols[i].1;
    let mut redundant_ops = 0;
    for i in 0..n {
        let per_pixel = layers[i].ops(shapes[i])? / shapes[i + 1].pixels();
        redundant_ops += excess(i + 1) * per_pixel;
    }
    Ok(TilingOverhead { redundant_ops, extra_offchip_bytes: excess(0) * input.channels as u64 * WORD_BYTES })
}

/// For one axis, the summed span length over tiles and the length of their
/// union, at every layer boundary (0 = chain input).
fn axis_coverage(
    layers: &[LayerSpec],
    len: u32,
    tile: u32,
    axis: impl Fn(&TensorShape) -> u32,
    shapes: &[TensorShape],
) -> Vec<(u64, u64)> {
    let n = layers.len();
    let mut spans = tile_spans(len, tile);
    let mut out = alloc::vec![(0, 0); n + 1];
    out[n] = measure(&spans);
    for i in (0..n).rev() {
        for s in spans.iter_mut() {
            *s = input_span(&layers[i], *s, axis(&shapes[i]));
        }
        out[i] = measure(&spans);
    }
    out
}

fn measure(spans: &[Span]) -> (u64, u64) {
    let total = spans.iter().map(|s| (s.1 - s.0) as u64).sum();
    let mut sorted = spans.to_vec();
    sorted.sort_unstable();
    let (mut union, mut reach) = (0u64, 0u32);
    for (lo, hi) in sorted {
        let lo = lo.max(reach);
        if hi > lo {
            union += (hi - lo) as u64;
            reach = hi;
        }
    }
    (total, union)
}
