//! Hardware building-module descriptors: configuration tuples, stream widths,
//! cycle costs and buffer sizes.

mod buffer;
mod module;

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerKind, LayerSpec};

pub use buffer::{buffer_words, BufferOption};
pub use module::{check_chaining, instantiate_layer, ModuleDesc, ModuleKind, PortRole};

/// Loop order of a convolution: filter-major `(f, c, i)` or channel-major
/// `(c, f, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Seq {
    #[serde(rename = "FM")]
    FilterMajor,
    #[serde(rename = "CM")]
    ChannelMajor,
}

impl Seq {
    pub const ALL: [Seq; 2] = [Seq::FilterMajor, Seq::ChannelMajor];

    pub fn short(self) -> char {
        match self {
            Seq::FilterMajor => 'F',
            Seq::ChannelMajor => 'C',
        }
    }
}

/// Tile extents. `h` and `w` are output rows and columns computed per pass,
/// `c` input channels and `f` output channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dims {
    pub h: u32,
    pub w: u32,
    pub c: u32,
    pub f: u32,
}

impl Dims {
    pub const fn new(h: u32, w: u32, c: u32, f: u32) -> Self {
        Dims { h, w, c, f }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerHwConfig {
    pub tile: Dims,
    pub parallelism: Dims,
    pub seq: Seq,
    #[serde(default)]
    pub use_winograd: bool,
    pub layer_kind: LayerKind,
}

pub(crate) fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

impl LayerHwConfig {
    /// Winograd output tile edge, which is also the spatial parallelism.
    pub fn winograd_m(&self) -> Option<u32> {
        self.use_winograd.then_some(self.parallelism.h)
    }

    /// Checks the config against the layer it will run.
    pub fn validate_for(&self, layer: &LayerSpec) -> Result<()> {
        let (t, p) = (self.tile, self.parallelism);
        for (name, tv, pv) in [("h", t.h, p.h), ("w", t.w, p.w), ("c", t.c, p.c), ("f", t.f, p.f)] {
            if tv == 0 || pv == 0 {
                return Err(Error::InvalidConfig(format!("tile and parallelism along {name} must be >= 1")));
            }
            if pv > tv {
                return Err(Error::InvalidConfig(format!("parallelism {pv} exceeds tile {tv} along {name}")));
            }
        }
        if self.layer_kind != layer.kind {
            return Err(Error::InvalidConfig(format!("config is for {:?}, layer is {:?}", self.layer_kind, layer.kind)));
        }
        if layer.kind == LayerKind::DepthwiseConv && (p.f != p.c || t.f != t.c) {
            return Err(Error::InvalidConfig("depthwise layers need matching channel and filter tiling".into()));
        }
        if self.use_winograd {
            let shape_ok = matches!(layer.kind, LayerKind::StandardConv | LayerKind::DepthwiseConv)
                && layer.kernel_size == 3
                && layer.stride == 1;
            if !shape_ok {
                return Err(Error::UnsupportedConfig(format!(
                    "Winograd needs a 3x3 stride-1 standard or depthwise conv, got {:?} K={} s={}",
                    layer.kind, layer.kernel_size, layer.stride
                )));
            }
            if p.h != p.w || !(p.h == 2 || p.h == 4) {
                return Err(Error::InvalidConfig(format!(
                    "Winograd layers use spatial parallelism P_h = P_w = m in {{2, 4}}, got {}x{}",
                    p.h, p.w
                )));
            }
        }
        Ok(())
    }
}

/// Trip counts for one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleCounts {
    pub compute_cycles: u64,
    pub work_units: u64,
}

impl CycleCounts {
    pub fn cycles_per_unit(&self) -> u64 {
        self.compute_cycles.checked_div(self.work_units).unwrap_or(0)
    }
}

/// One cycle issues `P_c x P_f x P_h x P_w` outputs' worth of work (a whole
/// `m x m` output tile per lane on the Winograd path). A work unit is one
/// iteration of the outermost loop: a filter chunk for FM, a channel chunk
/// for CM; depthwise layers always iterate channel chunks.
pub fn layer_cycle_counts(layer: &LayerSpec, hw: &LayerHwConfig) -> Result<CycleCounts> {
    hw.validate_for(layer)?;
    if !layer.kind.is_compute() {
        return Ok(CycleCounts { compute_cycles: 0, work_units: 0 });
    }
    let (t, p) = (hw.tile, hw.parallelism);
    let trips = |tv: u32, pv: u32| ceil_div(tv as u64, pv as u64);
    let spatial = match hw.winograd_m() {
        Some(m) => trips(t.h, m) * trips(t.w, m),
        None => trips(t.h, p.h) * trips(t.w, p.w),
    };
    let c_trips = trips(t.c, p.c);
    let f_trips = trips(t.f, p.f);
    let counts = if layer.kind == LayerKind::DepthwiseConv {
        CycleCounts { compute_cycles: c_trips * spatial, work_units: c_trips }
    } else {
        let units = match hw.seq {
            Seq::FilterMajor => f_trips,
            Seq::ChannelMajor => c_trips,
        };
        CycleCounts { compute_cycles: c_trips * f_trips * spatial, work_units: units }
    };
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: LayerKind, tile: Dims, par: Dims, seq: Seq, wino: bool) -> LayerHwConfig {
        LayerHwConfig { tile, parallelism: par, seq, use_winograd: wino, layer_kind: kind }
    }

    #[test]
    fn trip_count_product() {
        let layer = LayerSpec::conv_same(3, 1, 32);
        let fm = cfg(LayerKind::StandardConv, Dims::new(8, 8, 16, 32), Dims::new(1, 1, 4, 4), Seq::FilterMajor, false);
        let c = layer_cycle_counts(&layer, &fm).unwrap();
        assert_eq!(c, CycleCounts { compute_cycles: 2048, work_units: 8 });
        let cm = LayerHwConfig { seq: Seq::ChannelMajor, ..fm };
        assert_eq!(layer_cycle_counts(&layer, &cm).unwrap().work_units, 4);
    }

    #[test]
    fn winograd_spatial_trips() {
        let layer = LayerSpec::conv_same(3, 1, 4);
        let w = cfg(LayerKind::StandardConv, Dims::new(8, 8, 4, 4), Dims::new(4, 4, 1, 1), Seq::FilterMajor, true);
        assert_eq!(layer_cycle_counts(&layer, &w).unwrap().compute_cycles, 4 * 4 * 4);
    }

    #[test]
    fn depthwise_drops_filter_trips() {
        let layer = LayerSpec::depthwise(3, 1, 1);
        let d = cfg(LayerKind::DepthwiseConv, Dims::new(4, 4, 8, 8), Dims::new(1, 1, 2, 2), Seq::FilterMajor, false);
        assert_eq!(layer_cycle_counts(&layer, &d).unwrap(), CycleCounts { compute_cycles: 4 * 16, work_units: 4 });
    }

    #[test]
    fn winograd_constraints() {
        let strided = LayerSpec::conv_same(3, 2, 4);
        let w = cfg(LayerKind::StandardConv, Dims::new(8, 8, 4, 4), Dims::new(4, 4, 1, 1), Seq::FilterMajor, true);
        assert!(matches!(w.validate_for(&strided), Err(Error::UnsupportedConfig(_))));
        let pw = cfg(LayerKind::PointwiseConv, Dims::new(8, 8, 4, 4), Dims::new(4, 4, 1, 1), Seq::FilterMajor, true);
        assert!(matches!(pw.validate_for(&LayerSpec::pointwise(4)), Err(Error::UnsupportedConfig(_))));
        let odd = cfg(LayerKind::StandardConv, Dims::new(8, 8, 4, 4), Dims::new(3, 3, 1, 1), Seq::FilterMajor, true);
        assert!(matches!(odd.validate_for(&LayerSpec::conv_same(3, 1, 4)), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn parallelism_bounded_by_tile() {
        let c = cfg(LayerKind::PointwiseConv, Dims::new(4, 4, 4, 4), Dims::new(1, 1, 8, 1), Seq::FilterMajor, false);
        assert!(c.validate_for(&LayerSpec::pointwise(4)).is_err());
    }
}
