use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use turf_core::kernels::{conv_direct, conv_winograd, Filter4, Tensor3, WinogradConfig};
use turf_core::model::TensorShape;

/// Largest tolerated `|winograd - direct|` in double precision.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinogradCheck {
    pub m: usize,
    pub r: usize,
    pub trials: u32,
    pub seed: u64,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub multiplies_per_tile: u64,
    pub direct_multiplies_per_tile: u64,
    pub speedup: f64,
}

/// One random case: input up to 16x16x8, up to 8 filters, `r x r` kernel.
pub fn random_case(rng: &mut ChaCha8Rng, r: usize) -> (Tensor3, Filter4, usize) {
    let shape = TensorShape { height: rng.gen_range(r as u32..=16), width: rng.gen_range(r as u32..=16), channels: rng.gen_range(1..=8) };
    let input = Tensor3::from_fn(shape, |_, _, _| rng.gen_range(-1.0..1.0));
    let f = rng.gen_range(1..=8);
    let filter = Filter4::from_fn(f, shape.channels as usize, r, |_, _, _, _| rng.gen_range(-1.0..1.0));
    let padding = rng.gen_range(0..=r / 2);
    (input, filter, padding)
}

pub fn run(m: usize, r: usize, trials: u32, seed: u64) -> turf_core::Result<WinogradCheck> {
    let cfg = WinogradConfig::new(m, r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (input, filter, padding) = random_case(&mut rng, r);
        let direct = conv_direct(&input, &filter, 1, padding)?;
        let fast = conv_winograd(&input, &filter, 1, padding, &cfg)?;
        worst = worst.max(fast.max_abs_diff(&direct)?);
    }
    Ok(WinogradCheck {
        m,
        r,
        trials,
        seed,
        max_abs_diff: worst,
        tolerance: TOLERANCE,
        passed: worst < TOLERANCE,
        multiplies_per_tile: cfg.multiplies_per_tile(),
        direct_multiplies_per_tile: cfg.direct_multiplies_per_tile(),
        speedup: cfg.speedup(),
    })
}
