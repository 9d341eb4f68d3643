use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turf_core::kernels::*;
use turf_core::model::TensorShape;

fn shape(h: u32, w: u32, c: u32) -> TensorShape {
    TensorShape { height: h, width: w, channels: c }
}

fn random_tensor(rng: &mut ChaCha8Rng, s: TensorShape) -> Tensor3 {
    Tensor3::from_fn(s, |_, _, _| rng.gen_range(-1.0..1.0))
}

fn random_filter(rng: &mut ChaCha8Rng, f: usize, c: usize, k: usize) -> Filter4 {
    Filter4::from_fn(f, c, k, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

/// Written straight from the correlation definition over flat buffers.
fn naive_conv(d: &[f64], (c_in, h, w): (usize, usize, usize), g: &[f64], f_out: usize, k: usize, s: usize, p: usize) -> Vec<f64> {
    let ho = (h + 2 * p - k) / s + 1;
    let wo = (w + 2 * p - k) / s + 1;
    let mut y = vec![0.0; f_out * ho * wo];
    for f in 0..f_out {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for c in 0..c_in {
                    for kh in 0..k {
                        for kw in 0..k {
                            let iy = (oy * s + kh) as isize - p as isize;
                            let ix = (ox * s + kw) as isize - p as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                acc += d[(c * h + iy as usize) * w + ix as usize] * g[((f * c_in + c) * k + kh) * k + kw];
                            }
                        }
                    }
                }
                y[(f * ho + oy) * wo + ox] = acc;
            }
        }
    }
    y
}

#[test]
fn direct_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = random_tensor(&mut rng, shape(8, 8, 4));
    let g = random_filter(&mut rng, 3, 4, 3);
    for (s, p) in [(1, 0), (1, 1), (2, 1)] {
        let y = conv_direct(&d, &g, s, p).unwrap();
        assert_eq!(y.data(), &naive_conv(d.data(), (4, 8, 8), g.data(), 3, 3, s, p)[..]);
    }
}

#[test]
fn separable_matches_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = random_tensor(&mut rng, shape(6, 6, 3));
    let dw = DepthwiseFilter::from_fn(3, 3, |_, _, _| rng.gen_range(-1.0..1.0));
    let pw = random_filter(&mut rng, 5, 3, 1);
    // depthwise as a direct conv with a block-diagonal filter, then 1x1
    let grouped = Filter4::from_fn(3, 3, 3, |f, c, h, w| if f == c { dw.get(c, h, w) } else { 0.0 });
    let oracle = conv_direct(&conv_direct(&d, &grouped, 1, 1).unwrap(), &pw, 1, 0).unwrap();
    let y = conv_depthwise_separable(&d, &dw, &pw, 1, 1).unwrap();
    assert_eq!(y, oracle);
}

#[test]
fn winograd_random_12x12() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = WinogradConfig::new(4, 3).unwrap();
    let d = random_tensor(&mut rng, shape(12, 12, 2));
    let g = random_filter(&mut rng, 4, 2, 3);
    let dev = conv_winograd(&d, &g, 1, 1, &cfg).unwrap().max_abs_diff(&conv_direct(&d, &g, 1, 1).unwrap()).unwrap();
    assert!(dev < 1e-9, "{dev}");
}

/// Measured over 100 trials at (16, 12): worst case is one LSB, from
/// float noise pushing a value across a rounding boundary.
const QUANTIZED_BOUND_LSB: f64 = 1.0;

#[test]
fn quantized_winograd_bound() {
    let fmt = FixedPointFormat::new(16, 12).unwrap();
    let cfg = WinogradConfig::new(4, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = shape(rng.gen_range(3..=10), rng.gen_range(3..=10), rng.gen_range(1..=4));
        let d = random_tensor(&mut rng, s);
        let f = rng.gen_range(1..=4);
        let g = random_filter(&mut rng, f, s.channels as usize, 3);
        let wino = conv_winograd_quantized(&d, &g, 1, &cfg, fmt).unwrap();
        let qd = quantize(&d, fmt);
        let qg = g.map(|v| fmt.quantize_value(v));
        let direct = quantize(&conv_direct(&qd, &qg, 1, 1).unwrap(), fmt);
        worst = worst.max(wino.max_abs_diff(&direct).unwrap());
    }
    assert!(worst <= QUANTIZED_BOUND_LSB * fmt.lsb(), "worst deviation {worst}");
}

proptest! {
    #[test]
    fn winograd_equals_direct(m in prop::sample::select(vec![2usize, 4]), h in 3u32..=16, w in 3u32..=16,
                              c in 1u32..=8, f in 1usize..=8, pad in 0usize..=1, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = WinogradConfig::new(m, 3).unwrap();
        let d = random_tensor(&mut rng, shape(h, w, c));
        let g = random_filter(&mut rng, f, c as usize, 3);
        let dev = conv_winograd(&d, &g, 1, pad, &cfg).unwrap().max_abs_diff(&conv_direct(&d, &g, 1, pad).unwrap()).unwrap();
        prop_assert!(dev < 1e-9);
    }

    #[test]
    fn direct_is_linear(alpha in -2.0f64..2.0, beta in -2.0f64..2.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = shape(5, 6, 2);
        let (d1, d2) = (random_tensor(&mut rng, s), random_tensor(&mut rng, s));
        let g = random_filter(&mut rng, 3, 2, 3);
        let mix = Tensor3::from_fn(s, |c, y, x| alpha * d1.get(c, y, x) + beta * d2.get(c, y, x));
        let lhs = conv_direct(&mix, &g, 1, 1).unwrap();
        let (y1, y2) = (conv_direct(&d1, &g, 1, 1).unwrap(), conv_direct(&d2, &g, 1, 1).unwrap());
        let rhs = Tensor3::from_fn(lhs.shape(), |c, y, x| alpha * y1.get(c, y, x) + beta * y2.get(c, y, x));
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn quantize_idempotent_and_monotone(x in -300.0f64..300.0, y in -300.0f64..300.0, frac in 1u8..15) {
        let fmt = FixedPointFormat::new(16, frac).unwrap();
        let qx = fmt.quantize_value(x);
        prop_assert_eq!(fmt.quantize_value(qx), qx);
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(fmt.quantize_value(lo) <= fmt.quantize_value(hi));
    }
}
