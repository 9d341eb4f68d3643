//! Winograd minimal filtering F(m x m, r x r).
//!
//! Transform matrices come from a Toom-Cook construction over the points
//! 0, 1, -1, 2, -2, ... and infinity, kept as exact rationals. For a 1-D
//! correlation `y = AT [(G g) ⊙ (BT d)]`, `G` evaluates the kernel polynomial,
//! `AT` is the transposed evaluation of the output polynomial, and `BT` is the
//! inverse-transposed evaluation of the product polynomial. Each row `j` of
//! `G` is divided by `f_j = prod_{k != j} (a_j - a_k)` and the matching row of
//! `BT` multiplied by it, which keeps `BT` integral.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{quantize, Filter4, FixedPointFormat, Tensor3};
use crate::error::{Error, Result};
use crate::model::TensorShape;

pub type Rational = Ratio<i64>;
type Matrix<T> = Vec<Vec<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// `BT d B`
    Input,
    /// `G g GT`
    Weight,
    /// `AT M A`
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinogradConfig {
    pub m: usize,
    pub r: usize,
    at: Matrix<Rational>,
    g: Matrix<Rational>,
    bt: Matrix<Rational>,
    at_f: Matrix<f64>,
    g_f: Matrix<f64>,
    bt_f: Matrix<f64>,
}

fn matmul<T: Copy + Add<Output = T> + Mul<Output = T>>(a: &[Vec<T>], b: &[Vec<T>], zero: T) -> Matrix<T> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).fold(zero, |acc, k| acc + row[k] * b[k][j]))
                .collect()
        })
        .collect()
}

fn transpose<T: Copy>(a: &[Vec<T>]) -> Matrix<T> {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

/// `L X LT` for a square or rectangular `L`.
fn sandwich<T: Copy + Add<Output = T> + Mul<Output = T>>(l: &[Vec<T>], x: &[Vec<T>], zero: T) -> Matrix<T> {
    matmul(&matmul(l, x, zero), &transpose(l), zero)
}

fn to_f64(q: Rational) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn pow(a: Rational, e: usize) -> Rational {
    (0..e).fold(Rational::from_integer(1), |acc, _| acc * a)
}

fn invert(mut a: Matrix<Rational>) -> Result<Matrix<Rational>> {
    let n = a.len();
    let zero = Rational::from_integer(0);
    let one = Rational::from_integer(1);
    let mut inv: Matrix<Rational> = (0..n).map(|i| (0..n).map(|j| if i == j { one } else { zero }).collect()).collect();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| a[r][col] != zero)
            .ok_or_else(|| Error::UnsupportedConfig("singular evaluation matrix".into()))?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for row in 0..n {
            if row != col && a[row][col] != zero {
                let factor = a[row][col];
                for j in 0..n {
                    a[row][j] = a[row][j] - factor * a[col][j];
                    inv[row][j] = inv[row][j] - factor * inv[col][j];
                }
            }
        }
    }
    Ok(inv)
}

/// Evaluation matrix for polynomials with `terms` coefficients at `points`
/// plus infinity (which picks the leading coefficient).
fn evaluation(points: &[Rational], terms: usize) -> Matrix<Rational> {
    let mut e: Matrix<Rational> = points.iter().map(|&a| (0..terms).map(|k| pow(a, k)).collect()).collect();
    let mut inf = vec![Rational::from_integer(0); terms];
    inf[terms - 1] = Rational::from_integer(1);
    e.push(inf);
    e
}

/// `0, 1, -1, 2, -2, 1/2, -1/2, ...`
fn default_points(n: usize) -> Vec<Rational> {
    let mut pts = vec![Rational::from_integer(0)];
    let mut mags = (1..).map(Rational::from_integer).flat_map(|k| [k, k.recip()]).filter({
        let mut seen = Vec::new();
        move |q: &Rational| {
            if seen.contains(q) {
                false
            } else {
                seen.push(*q);
                true
            }
        }
    });
    while pts.len() < n {
        let q = mags.next().expect("infinite");
        pts.push(q);
        if pts.len() < n {
            pts.push(-q);
        }
    }
    pts
}

/// Nonzero and not a signed power of two, so it needs a real multiplier.
fn needs_multiplier(q: Rational) -> bool {
    let n = q.numer().unsigned_abs();
    let d = q.denom().unsigned_abs();
    n != 0 && !(n.is_power_of_two() && d.is_power_of_two())
}

impl WinogradConfig {
    /// F(2x2, 3x3) or F(4x4, 3x3).
    pub fn new(m: usize, r: usize) -> Result<Self> {
        if r != 3 || !(m == 2 || m == 4) {
            return Err(Error::UnsupportedConfig(format!("Winograd F({m}x{m}, {r}x{r}) is not supported")));
        }
        Self::construct(m, r, &default_points(m + r - 2))
    }

    fn construct(m: usize, r: usize, points: &[Rational]) -> Result<Self> {
        let alpha = m + r - 1;
        debug_assert_eq!(points.len() + 1, alpha);
        let at = transpose(&evaluation(points, m));
        let mut g = evaluation(points, r);
        let mut bt = transpose(&invert(evaluation(points, alpha))?);
        let one = Rational::from_integer(1);
        let mut scale: Vec<Rational> = points
            .iter()
            .enumerate()
            .map(|(j, &a)| points.iter().enumerate().filter(|(k, _)| *k != j).fold(one, |acc, (_, &b)| acc * (a - b)))
            .collect();
        scale.push(one);
        if scale[0] < Rational::from_integer(0) {
            scale[0] = -scale[0];
        }
        for j in 0..alpha {
            for v in g[j].iter_mut() {
                *v /= scale[j];
            }
            for v in bt[j].iter_mut() {
                *v *= scale[j];
            }
        }
        let f = |mat: &Matrix<Rational>| mat.iter().map(|row| row.iter().map(|&q| to_f64(q)).collect()).collect();
        Ok(WinogradConfig { m, r, at_f: f(&at), g_f: f(&g), bt_f: f(&bt), at, g, bt })
    }

    /// Input tile edge, `m + r - 1`.
    pub fn tile_size(&self) -> usize {
        self.m + self.r - 1
    }

    /// Elementwise multiplies per output tile.
    pub fn multiplies_per_tile(&self) -> u64 {
        (self.tile_size() * self.tile_size()) as u64
    }

    /// Multiplies direct convolution needs for the same `m x m` outputs.
    pub fn direct_multiplies_per_tile(&self) -> u64 {
        (self.m * self.m * self.r * self.r) as u64
    }

    pub fn speedup(&self) -> f64 {
        self.direct_multiplies_per_tile() as f64 / self.multiplies_per_tile() as f64
    }

    pub fn matrix(&self, kind: TransformKind) -> &[Vec<Rational>] {
        match kind {
            TransformKind::Input => &self.bt,
            TransformKind::Weight => &self.g,
            TransformKind::Output => &self.at,
        }
    }

    /// Entries of a transform matrix that are not 0 or a signed power of two.
    pub fn general_constants(&self, kind: TransformKind) -> usize {
        self.matrix(kind).iter().flatten().filter(|q| needs_multiplier(**q)).count()
    }

    /// Entries that hardware can realize as shifts.
    pub fn shift_constants(&self, kind: TransformKind) -> usize {
        self.matrix(kind).iter().flatten().filter(|q| **q != Rational::from_integer(0) && !needs_multiplier(**q)).count()
    }

    /// Multipliers needed for one 2-D transform `L X LT` with `L` of size p x q.
    pub fn transform_multipliers(&self, kind: TransformKind) -> u64 {
        let l = self.matrix(kind);
        let p = l.len();
        let q = l.first().map_or(0, Vec::len);
        (self.general_constants(kind) * (p + q)) as u64
    }

    /// One output tile in exact arithmetic: `AT [(G g GT) ⊙ (BT d B)] A`.
    pub fn tile_exact(&self, d: &[Vec<Rational>], g: &[Vec<Rational>]) -> Matrix<Rational> {
        let zero = Rational::from_integer(0);
        let u = sandwich(&self.g, g, zero);
        let v = sandwich(&self.bt, d, zero);
        let prod: Matrix<Rational> =
            u.iter().zip(&v).map(|(ur, vr)| ur.iter().zip(vr).map(|(a, b)| *a * *b).collect()).collect();
        sandwich(&self.at, &prod, zero)
    }

    fn weight_transform(&self, g: &[Vec<f64>]) -> Matrix<f64> {
        sandwich(&self.g_f, g, 0.0)
    }

    fn input_transform(&self, d: &[Vec<f64>]) -> Matrix<f64> {
        sandwich(&self.bt_f, d, 0.0)
    }

    fn output_transform(&self, m: &[Vec<f64>]) -> Matrix<f64> {
        sandwich(&self.at_f, m, 0.0)
    }
}

/// Winograd convolution. Only stride 1 and `K = r` are supported. Edge tiles
/// are zero-padded and the output cropped.
pub fn conv_winograd(
    input: &Tensor3,
    filter: &Filter4,
    stride: usize,
    padding: usize,
    cfg: &WinogradConfig,
) -> Result<Tensor3> {
    if stride != 1 {
        return Err(Error::UnsupportedConfig(format!("Winograd requires stride 1, got {stride}")));
    }
    if filter.kernel != cfg.r {
        return Err(Error::UnsupportedConfig(format!("Winograd F(m, {0}) cannot run a {1}x{1} kernel", cfg.r, filter.kernel)));
    }
    let s = input.shape();
    if filter.in_channels != s.channels as usize {
        return Err(Error::ShapeMismatch(format!(
            "filter expects {} input channels, input has {}",
            filter.in_channels, s.channels
        )));
    }
    let (h, w) = (s.height as usize + 2 * padding, s.width as usize + 2 * padding);
    if h < cfg.r || w < cfg.r {
        return Err(Error::ShapeMismatch(format!("kernel {} larger than padded input", cfg.r)));
    }
    let out_shape = TensorShape { height: (h - cfg.r + 1) as u32, width: (w - cfg.r + 1) as u32, channels: filter.out_channels as u32 };
    let (m, alpha, k) = (cfg.m, cfg.tile_size(), cfg.r);
    let channels = filter.in_channels;

    let weights: Vec<Matrix<f64>> = (0..filter.out_channels * channels)
        .map(|i| {
            let (f, c) = (i / channels, i % channels);
            let g: Matrix<f64> = (0..k).map(|y| (0..k).map(|x| filter.get(f, c, y, x)).collect()).collect();
            cfg.weight_transform(&g)
        })
        .collect();

    let mut out = Tensor3::zeros(out_shape);
    let pad = padding as i64;
    for ty in (0..out_shape.height as usize).step_by(m) {
        for tx in (0..out_shape.width as usize).step_by(m) {
            let inputs: Vec<Matrix<f64>> = (0..channels)
                .map(|c| {
                    let d: Matrix<f64> = (0..alpha)
                        .map(|y| (0..alpha).map(|x| input.get_padded(c, (ty + y) as i64 - pad, (tx + x) as i64 - pad)).collect())
                        .collect();
                    cfg.input_transform(&d)
                })
                .collect();
            for f in 0..filter.out_channels {
                let mut acc = vec![vec![0.0; alpha]; alpha];
                for (c, v) in inputs.iter().enumerate() {
                    let u = &weights[f * channels + c];
                    for y in 0..alpha {
                        for x in 0..alpha {
                            acc[y][x] += u[y][x] * v[y][x];
                        }
                    }
                }
                let tile = cfg.output_transform(&acc);
                for (y, row) in tile.iter().enumerate() {
                    for (x, v) in row.iter().enumerate() {
                        if ty + y < out_shape.height as usize && tx + x < out_shape.width as usize {
                            out.set(f, ty + y, tx + x, *v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Winograd convolution with inputs, weights and outputs on a fixed-point
/// grid; transforms and accumulation are carried at full precision.
pub fn conv_winograd_quantized(
    input: &Tensor3,
    filter: &Filter4,
    padding: usize,
    cfg: &WinogradConfig,
    fmt: FixedPointFormat,
) -> Result<Tensor3> {
    let qi = quantize(input, fmt);
    let qf = filter.map(|v| fmt.quantize_value(v));
    Ok(quantize(&conv_winograd(&qi, &qf, 1, padding, cfg)?, fmt))
}
