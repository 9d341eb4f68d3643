//! Software reference convolutions. These are correctness oracles, not fast
//! kernels.

mod quant;
mod winograd;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TensorShape;

pub use quant::{quantize, FixedPointFormat};
pub use winograd::{conv_winograd, conv_winograd_quantized, Rational, TransformKind, WinogradConfig};

/// Dense feature map stored as `[c][y][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    shape: TensorShape,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(shape: TensorShape, data: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if data.len() as u64 != shape.elements() {
            return Err(Error::ShapeMismatch(format!("{shape} needs {} values, got {}", shape.elements(), data.len())));
        }
        Ok(Tensor3 { shape, data })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        Tensor3 { shape, data: vec![0.0; shape.elements() as usize] }
    }

    pub fn from_fn(shape: TensorShape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        for c in 0..shape.channels as usize {
            for y in 0..shape.height as usize {
                for x in 0..shape.width as usize {
                    let i = t.index(c, y, x);
                    t.data[i] = f(c, y, x);
                }
            }
        }
        t
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape.height as usize + y) * self.shape.width as usize + x
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    /// Reads with zeros outside the map.
    pub fn get_padded(&self, c: usize, y: i64, x: i64) -> f64 {
        if y < 0 || x < 0 || y >= self.shape.height as i64 || x >= self.shape.width as i64 {
            0.0
        } else {
            self.get(c, y as usize, x as usize)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor3 { shape: self.shape, data: self.data.iter().map(|v| f(*v)).collect() }
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Tensor3) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!("{} vs {}", self.shape, other.shape)));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max))
    }
}

/// Filter bank stored as `[f][c][kh][kw]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter4 {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    data: Vec<f64>,
}

impl Filter4 {
    pub fn new(out_channels: usize, in_channels: usize, kernel: usize, data: Vec<f64>) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || kernel == 0 {
            return Err(Error::ShapeMismatch("filter dimensions must be >= 1".into()));
        }
        if data.len() != out_channels * in_channels * kernel * kernel {
            return Err(Error::ShapeMismatch(format!(
                "{out_channels}x{in_channels}x{kernel}x{kernel} filter given {} values",
                data.len()
            )));
        }
        Ok(Filter4 { out_channels, in_channels, kernel, data })
    }

    pub fn from_fn(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(out_channels * in_channels * kernel * kernel);
        for o in 0..out_channels {
            for c in 0..in_channels {
                for h in 0..kernel {
                    for w in 0..kernel {
                        data.push(f(o, c, h, w));
                    }
                }
            }
        }
        Filter4 { out_channels, in_channels, kernel, data }
    }

    pub fn get(&self, f: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[((f * self.in_channels + c) * self.kernel + h) * self.kernel + w]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Filter4 { data: self.data.iter().map(|v| f(*v)).collect(), ..*self }
    }
}

/// One `K`x`K` kernel per channel, stored as `[c][kh][kw]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthwiseFilter {
    pub channels: usize,
    pub kernel: usize,
    data: Vec<f64>,
}

impl DepthwiseFilter {
    pub fn new(channels: usize, kernel: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || kernel == 0 || data.len() != channels * kernel * kernel {
            return Err(Error::ShapeMismatch(format!(
                "depthwise filter {channels}x{kernel}x{kernel} given {} values",
                data.len()
            )));
        }
        Ok(DepthwiseFilter { channels, kernel, data })
    }

    pub fn from_fn(channels: usize, kernel: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * kernel * kernel);
        for c in 0..channels {
            for h in 0..kernel {
                for w in 0..kernel {
                    data.push(f(c, h, w));
                }
            }
        }
        DepthwiseFilter { channels, kernel, data }
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.kernel + h) * self.kernel + w]
    }
}

fn output_dim(input: u32, kernel: usize, stride: usize, padding: usize) -> Result<u32> {
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    let padded = input as usize + 2 * padding;
    if padded < kernel {
        return Err(Error::ShapeMismatch(format!("kernel {kernel} larger than padded input {padded}")));
    }
    Ok(((padded - kernel) / stride + 1) as u32)
}

/// Direct cross-correlation with zero padding.
pub fn conv_direct(input: &Tensor3, filter: &Filter4, stride: usize, padding: usize) -> Result<Tensor3> {
    let s = input.shape();
    if filter.in_channels != s.channels as usize {
        return Err(Error::ShapeMismatch(format!(
            "filter expects {} input channels, input has {}",
            filter.in_channels, s.channels
        )));
    }
    let k = filter.kernel;
    let out_shape = TensorShape {
        height: output_dim(s.height, k, stride, padding)?,
        width: output_dim(s.width, k, stride, padding)?,
        channels: filter.out_channels as u32,
    };
    let pad = padding as i64;
    Ok(Tensor3::from_fn(out_shape, |f, y, x| {
        let mut acc = 0.0;
        for c in 0..filter.in_channels {
            for h in 0..k {
                for w in 0..k {
                    let iy = (y * stride + h) as i64 - pad;
                    let ix = (x * stride + w) as i64 - pad;
                    acc += input.get_padded(c, iy, ix) * filter.get(f, c, h, w);
                }
            }
        }
        acc
    }))
}

/// Per-channel spatial cross-correlation.
pub fn conv_depthwise(input: &Tensor3, filter: &DepthwiseFilter, stride: usize, padding: usize) -> Result<Tensor3> {
    let s = input.shape();
    if filter.channels != s.channels as usize {
        return Err(Error::ShapeMismatch(format!(
            "depthwise filter has {} channels, input has {}",
            filter.channels, s.channels
        )));
    }
    let k = filter.kernel;
    let out_shape = TensorShape {
        height: output_dim(s.height, k, stride, padding)?,
        width: output_dim(s.width, k, stride, padding)?,
        channels: s.channels,
    };
    let pad = padding as i64;
    Ok(Tensor3::from_fn(out_shape, |c, y, x| {
        let mut acc = 0.0;
        for h in 0..k {
            for w in 0..k {
                let iy = (y * stride + h) as i64 - pad;
                let ix = (x * stride + w) as i64 - pad;
                acc += input.get_padded(c, iy, ix) * filter.get(c, h, w);
            }
        }
        acc
    }))
}

/// Depthwise convolution followed by a 1x1 pointwise convolution.
pub fn conv_depthwise_separable(
    input: &Tensor3,
    depthwise: &DepthwiseFilter,
    pointwise: &Filter4,
    stride: usize,
    padding: usize,
) -> Result<Tensor3> {
    if pointwise.kernel != 1 {
        return Err(Error::ShapeMismatch(format!("pointwise filter must be 1x1, got {0}x{0}", pointwise.kernel)));
    }
    let mid = conv_depthwise(input, depthwise, stride, padding)?;
    conv_direct(&mid, pointwise, 1, 0)
}
