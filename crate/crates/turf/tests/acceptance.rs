//! End-to-end acceptance checks. Each criterion prints one `[PASS]` or
//! `[FAIL]` line; the test fails if any criterion fails.

use std::panic::{catch_unwind, UnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turf::winograd_check;
use turf_core::explore::{
    run_framework, AccuracyOracle, FrameworkOptions, PerfRequirement, Requirements, SearchOutcome, SyntheticOracle,
};
use turf_core::fusion::{
    simulate_fused, tiling_overhead, FlatParallelism, FusedDesignConfig, SimOptions, SimReport, Tiling,
};
use turf_core::hw::{buffer_words, BufferOption, Dims, Seq};
use turf_core::kernels::WinogradConfig;
use turf_core::model::{
    build_reference_model, count_ops_params, vgg16, BlockKind, BlockSpec, LayerKind, ModelSpec, Shortcut, TensorShape,
};
use turf_core::perf::{block_type_rooflines, Calibration, DseOptions, PlatformSpec, TileChoice};
use turf_core::Error;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const IMAGENET: TensorShape = TensorShape { height: 224, width: 224, channels: 3 };

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    if took > limit {
        return Err(format!("took {took:.2?}, limit {limit:?}"));
    }
    Ok(took)
}

fn winograd_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for m in [2, 4] {
        let check = winograd_check::run(m, 3, 200, 0).map_err(|e| e.to_string())?;
        ensure!(check.passed, "F({m},3) max |diff| {:e} over {} trials", check.max_abs_diff, check.trials);
        worst = worst.max(check.max_abs_diff);
    }
    ensure!(worst < 1e-9, "max |diff| {worst:e}");
    let took = within_time(start, Duration::from_secs(10))?;
    Ok(format!("max |winograd - direct| = {worst:.2e} < 1e-9 over 2 x 200 cases in {took:.2?}"))
}

fn winograd_complexity() -> Outcome {
    let cfg = WinogradConfig::new(4, 3).map_err(|e| e.to_string())?;
    let (wino, direct) = (cfg.multiplies_per_tile(), cfg.direct_multiplies_per_tile());
    ensure!(wino == 36 && direct == 144, "got {wino} vs {direct} multiplies");
    ensure!(cfg.speedup() == 4.0, "speedup {}", cfg.speedup());
    Ok(format!("F(4x4,3x3): {wino} vs {direct} multiplies per tile, speedup {}", cfg.speedup()))
}

fn reference_counts() -> Outcome {
    let start = Instant::now();
    let expected = [("VGG16", 30.95, 138.3), ("ResNet50", 7.72, 24.3), ("MobileNetV1", 1.14, 4.01), ("MobileNetV2", 0.61, 3.31)];
    let mut worst = 0.0f64;
    for (name, gop, mparams) in expected {
        let counts = count_ops_params(&build_reference_model(name, IMAGENET).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let got_gop = counts.total_ops as f64 / 1e9;
        let got_m = counts.total_params as f64 / 1e6;
        for (got, want, what) in [(got_gop, gop, "GOP"), (got_m, mparams, "M params")] {
            let rel = (got - want).abs() / want;
            ensure!(rel <= 0.05, "{name}: {got:.3} {what} vs {want} ({:.1}% off)", rel * 100.0);
            worst = worst.max(rel);
        }
    }
    let took = within_time(start, Duration::from_secs(1))?;
    Ok(format!("4 models, worst relative error {:.2}% (limit 5%) in {took:.2?}", worst * 100.0))
}

fn buffer_table() -> Outcome {
    use BufferOption::*;
    use Seq::*;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let settings = 256;
    for _ in 0..settings {
        let (th, tw) = (rng.gen_range(1..=64u32), rng.gen_range(1..=64u32));
        let pc = rng.gen_range(1..=32u32);
        let tc = pc + rng.gen_range(0..=64u32);
        let tile = Dims::new(th, tw, tc, rng.gen_range(1..=64));
        let par = Dims::new(1, 1, pc, 1);
        let chunk = (pc * th * tw) as u64;
        let full = (tc * th * tw) as u64;
        // (prev, cur) -> words for MatchPrev, MatchNext, Double; None is an inefficient cell
        let rows: [(Seq, Seq, [Option<u64>; 3]); 4] = [
            (FilterMajor, ChannelMajor, [Some(chunk), Some(full), Some(2 * chunk)]),
            (ChannelMajor, FilterMajor, [Some(full), Some(full), Some(2 * full)]),
            (FilterMajor, FilterMajor, [Some(chunk), Some(full), Some(2 * chunk)]),
            (ChannelMajor, ChannelMajor, [Some(full), None, Some(2 * full)]),
        ];
        for (prev, cur, cells) in rows {
            for (opt, want) in [MatchPrev, MatchNext, Double].into_iter().zip(cells) {
                let got = buffer_words(prev, cur, tile, par, opt);
                match (want, got) {
                    (Some(w), Ok(g)) if w == g => {}
                    (None, Err(Error::InefficientConfig(_))) => {}
                    (w, g) => return Err(format!("({prev:?}, {cur:?}) {opt:?} at {tile:?} P_c={pc}: want {w:?}, got {g:?}")),
                }
            }
        }
    }
    Ok(format!("{settings} random tile/parallelism settings x 4 sequence pairs x 3 buffer options match"))
}

fn sequence_ordering() -> Outcome {
    let start = Instant::now();
    let block = BlockSpec::stacked(16, 1, Shortcut::Identity);
    let input = TensorShape { height: 8, width: 8, channels: 16 };
    let total = |seqs: [Seq; 2]| -> Result<u64, String> {
        let cfg = FusedDesignConfig::from_flat(
            Tiling::full(&block, input).map_err(|e| e.to_string())?,
            &FlatParallelism { h: 1, w: 1, c: vec![4, 4], f: 4 },
            seqs.to_vec(),
            vec![BufferOption::Double],
            false,
        );
        simulate_fused(&block, input, &cfg, SimOptions::default()).map(|r| r.total_cycles).map_err(|e| e.to_string())
    };
    let fm_cm = total([Seq::FilterMajor, Seq::ChannelMajor])?;
    let cm_cm = total([Seq::ChannelMajor, Seq::ChannelMajor])?;
    ensure!(fm_cm < cm_cm, "(FM,CM) {fm_cm} cycles vs (CM,CM) {cm_cm}");

    // Toy block traced by hand: 10 input channels, 2 intermediate, 1 output,
    // all parallelism 1 on a 1x1 map. Layer 0 (FM) emits one channel every
    // 10 cycles, at 10 and 20. Layer 1 (CM) consumes one channel per 10-cycle
    // unit, so with two slots it runs 10..20 and 20..30. With one slot layer 0
    // waits for layer 1 to drain it: layer 0 runs 0..10 and 20..30, layer 1
    // runs 10..20 and 30..40.
    let mut toy = BlockSpec::stacked(10, 1, Shortcut::Identity);
    toy.layers[0].out_channels = Some(2);
    let toy_in = TensorShape { height: 1, width: 1, channels: 10 };
    let makespan = |opt: BufferOption| -> Result<u64, String> {
        let cfg = FusedDesignConfig::from_flat(
            Tiling::full(&toy, toy_in).map_err(|e| e.to_string())?,
            &FlatParallelism { h: 1, w: 1, c: vec![1, 1], f: 1 },
            vec![Seq::FilterMajor, Seq::ChannelMajor],
            vec![opt],
            false,
        );
        simulate_fused(&toy, toy_in, &cfg, SimOptions::default()).map(|r| r.makespan_cycles).map_err(|e| e.to_string())
    };
    let (double, single) = (makespan(BufferOption::Double)?, makespan(BufferOption::MatchPrev)?);
    ensure!(double == 30 && single == 40, "toy makespan double {double} (want 30), single {single} (want 40)");
    let took = within_time(start, Duration::from_secs(1))?;
    Ok(format!("(FM,CM) {fm_cm} < (CM,CM) {cm_cm} cycles; toy trace 30/40 cycles matched in {took:.2?}"))
}

struct FusedCase {
    block: BlockSpec,
    input: TensorShape,
    cfg: FusedDesignConfig,
}

fn random_block(rng: &mut ChaCha8Rng, c: u32, mid: u32) -> BlockSpec {
    match rng.gen_range(0..4) {
        0 => {
            let mut b = BlockSpec::stacked(c, 1, Shortcut::Identity);
            b.layers[0].out_channels = Some(mid);
            b
        }
        1 => BlockSpec::depthwise_separable(3, 1, mid),
        2 => BlockSpec::bottleneck(mid, c, 1, Shortcut::Identity),
        _ => BlockSpec::separable_bottleneck(mid, c, 1, Shortcut::Identity),
    }
}

fn random_case(rng: &mut ChaCha8Rng) -> FusedCase {
    let (c, mid, hw) = (rng.gen_range(1..=12), rng.gen_range(1..=12), rng.gen_range(4..=12));
    let block = random_block(rng, c, mid);
    let input = TensorShape { height: hw, width: hw, channels: c };
    let shapes = block.layer_shapes(input).expect("generated blocks are valid");
    let n = block.layers.len();
    let mut lanes: Vec<u32> = Vec::new();
    for i in 0..n {
        let p = if i > 0 && block.layers[i - 1].kind == LayerKind::DepthwiseConv {
            lanes[i - 1]
        } else {
            rng.gen_range(1..=4).min(shapes[i].channels)
        };
        lanes.push(p);
    }
    let f = if block.layers[n - 1].kind == LayerKind::DepthwiseConv { lanes[n - 1] } else { rng.gen_range(1..=4).min(shapes[n].channels) };
    let winograd = rng.gen_bool(0.5);
    let spatial = if winograd { [2, 4][rng.gen_range(0..2)] } else { rng.gen_range(1..=3) };
    let tile = rng.gen_range(1..=12).max(spatial).max(3);
    let cfg = FusedDesignConfig::from_flat(
        Tiling::spatial(&block, input, tile, tile).expect("generated tiling is valid"),
        &FlatParallelism { h: spatial, w: spatial, c: lanes, f },
        (0..n).map(|_| Seq::ALL[rng.gen_range(0..2)]).collect(),
        (1..n).map(|_| BufferOption::ALL[rng.gen_range(0..3)]).collect(),
        winograd,
    );
    FusedCase { block, input, cfg }
}

fn simulate(case: &FusedCase, cfg: &FusedDesignConfig) -> Result<SimReport, Error> {
    simulate_fused(&case.block, case.input, cfg, SimOptions::default())
}

fn fusion_bounds() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut feasible, mut attempts, mut buffer_pairs) = (0, 0, 0);
    while feasible < 500 {
        attempts += 1;
        ensure!(attempts <= 20_000, "only {feasible} feasible configs in {attempts} attempts");
        let case = random_case(&mut rng);
        let report = match simulate(&case, &case.cfg) {
            Ok(r) => r,
            Err(Error::InefficientConfig(_)) => continue,
            Err(e) => return Err(format!("{:?} on {:?}: {e}", case.block.kind, case.cfg)),
        };
        feasible += 1;
        let max_layer = report.layers.iter().map(|l| l.busy_cycles).max().unwrap_or(0);
        ensure!(
            max_layer <= report.total_cycles && report.total_cycles <= report.sequential_cycles(),
            "bounds violated: max layer {max_layer}, fused {}, sequential + fill {} for {:?}",
            report.total_cycles,
            report.sequential_cycles(),
            case.cfg
        );
        for i in 0..case.cfg.buffer_options.len() {
            let mut single = case.cfg.clone();
            single.buffer_options[i] = BufferOption::MatchPrev;
            let mut double = case.cfg.clone();
            double.buffer_options[i] = BufferOption::Double;
            if let Ok(s) = simulate(&case, &single) {
                buffer_pairs += 1;
                let d = simulate(&case, &double).map_err(|e| format!("double buffer failed where single worked: {e}"))?;
                ensure!(d.total_cycles <= s.total_cycles, "double {} > single {} cycles for {:?}", d.total_cycles, s.total_cycles, double);
            }
        }
    }
    let took = within_time(start, Duration::from_secs(60))?;
    Ok(format!("{feasible} feasible configs ({attempts} drawn), {buffer_pairs} single/double pairs in {took:.2?}"))
}

fn bandwidth_claim() -> Outcome {
    let fused_wins = |bw: f64| -> Result<Vec<(BlockKind, bool)>, String> {
        let rows = block_type_rooflines(&PlatformSpec::STRATIX_V.with_bandwidth(bw), 4.0).map_err(|e| e.to_string())?;
        Ok(rows.iter().map(|r| (r.kind, r.totals.fused.attainable_gops > r.totals.baseline.attainable_gops)).collect())
    };
    let at_default = fused_wins(PlatformSpec::STRATIX_V.bandwidth_gbps)?;
    let at_16 = fused_wins(16.0)?;
    let winners = |rows: &[(BlockKind, bool)]| rows.iter().filter(|r| r.1).map(|r| r.0).collect::<Vec<_>>();
    ensure!(winners(&at_default) == [BlockKind::DepthwiseSeparable], "at 38 GB/s fusion helps {:?}", winners(&at_default));
    ensure!(at_16.len() == 3 && at_16.iter().all(|r| r.1), "at 16 GB/s fusion helps only {:?}", winners(&at_16));
    Ok("fusion helps only depthwise-separable blocks at 38 GB/s and all three at 16 GB/s".into())
}

/// Marks, per output tile, every pixel of every layer the tile depends on.
fn brute_force_redundant(block: &BlockSpec, input: TensorShape, tile: usize) -> (u64, u64) {
    let shapes = block.layer_shapes(input).unwrap();
    let n = block.layers.len();
    let out = shapes[n];
    let mut computed = vec![0u64; n];
    let mut loaded = 0u64;
    for ty in (0..out.height as usize).step_by(tile) {
        for tx in (0..out.width as usize).step_by(tile) {
            let (h, w) = (out.height as usize, out.width as usize);
            let mut need: Vec<Vec<bool>> =
                (0..h).map(|y| (0..w).map(|x| (ty..ty + tile).contains(&y) && (tx..tx + tile).contains(&x)).collect()).collect();
            for i in (0..n).rev() {
                computed[i] += need.iter().flatten().filter(|b| **b).count() as u64;
                let l = &block.layers[i];
                let (ih, iw) = (shapes[i].height as i64, shapes[i].width as i64);
                let mut prev = vec![vec![false; iw as usize]; ih as usize];
                for (y, row) in need.iter().enumerate() {
                    for (x, _) in row.iter().enumerate().filter(|(_, on)| **on) {
                        for kh in 0..l.kernel_size as i64 {
                            for kw in 0..l.kernel_size as i64 {
                                let iy = y as i64 * l.stride as i64 + kh - l.padding as i64;
                                let ix = x as i64 * l.stride as i64 + kw - l.padding as i64;
                                if (0..ih).contains(&iy) && (0..iw).contains(&ix) {
                                    prev[iy as usize][ix as usize] = true;
                                }
                            }
                        }
                    }
                }
                need = prev;
            }
            loaded += need.iter().flatten().filter(|b| **b).count() as u64;
        }
    }
    let mut ops = 0;
    for i in 0..n {
        let pixels = shapes[i + 1].pixels();
        ops += (computed[i] - pixels) * (block.layers[i].ops(shapes[i]).unwrap() / pixels);
    }
    (ops, (loaded - input.pixels()) * input.channels as u64 * 2)
}

fn tiling_oracle() -> Outcome {
    let block = BlockSpec::stacked(4, 1, Shortcut::Identity);
    let input = TensorShape { height: 16, width: 16, channels: 4 };
    let model = tiling_overhead(&block, input, 8, 8).map_err(|e| e.to_string())?;
    let (ops, bytes) = brute_force_redundant(&block, input, 8);
    ensure!(model.redundant_ops == ops, "redundant ops {} vs brute force {ops}", model.redundant_ops);
    ensure!(model.extra_offchip_bytes == bytes, "extra bytes {} vs brute force {bytes}", model.extra_offchip_bytes);
    Ok(format!("redundant ops {ops} and reloaded bytes {bytes} match the per-pixel count"))
}

struct Fixed(f64);

impl AccuracyOracle for Fixed {
    fn accuracy(&self, _: &ModelSpec, _: u32) -> turf_core::Result<f64> {
        Ok(self.0)
    }
    fn describe(&self) -> String {
        format!("fixed {}", self.0)
    }
}

/// Keeps the pretrained accuracy and loses it on any replacement.
struct PretrainedOnly;

impl AccuracyOracle for PretrainedOnly {
    fn accuracy(&self, m: &ModelSpec, _: u32) -> turf_core::Result<f64> {
        Ok(if m.replaced_count() == 0 { 0.95 } else { 0.1 })
    }
    fn describe(&self) -> String {
        "pretrained only".into()
    }
}

fn search_conformance() -> Outcome {
    let start = Instant::now();
    let model = vgg16(IMAGENET).map_err(|e| e.to_string())?;
    let positions = model.num_positions();
    let options = |exhaustive| FrameworkOptions {
        exhaustive,
        budget: 1,
        dse: DseOptions { p_c: vec![4], p_f: vec![32, 64], tiles: vec![TileChoice::Square(14)], winograd: vec![false], search_seqs: true },
    };
    let search = |min_accuracy: f64, oracle: &dyn AccuracyOracle, exhaustive: bool| -> Result<SearchOutcome, String> {
        let req = Requirements { min_accuracy, performance: PerfRequirement::MinGops(1.0) };
        run_framework("flowers", &req, &PlatformSpec::STRATIX_V, &Calibration::placeholder(), &model, oracle, &options(exhaustive))
            .map_err(|e| e.to_string())
    };
    let chosen = |out: &SearchOutcome| out.best().map(|c| c.replacement_vector.clone()).map_err(|e| e.to_string());

    let strict = search(0.905, &SyntheticOracle::default(), false)?;
    ensure!(chosen(&strict)? == "OOOOS", "synthetic peak chose {}", chosen(&strict)?);
    ensure!(strict.candidates.len() <= positions + 1, "visited {} candidates for {positions} positions", strict.candidates.len());

    let kept = search(0.9, &PretrainedOnly, false)?;
    ensure!(chosen(&kept)? == "OOOOO", "failing replacements chose {}", chosen(&kept)?);
    ensure!(kept.candidates.len() <= positions + 1, "visited {} candidates", kept.candidates.len());

    let none = search(0.9, &Fixed(0.0), false)?;
    ensure!(matches!(none.best(), Err(Error::NoSolution)), "always-failing oracle returned {:?}", none.best().map(|c| &c.replacement_vector));
    ensure!(none.candidates.len() <= positions + 1, "visited {} candidates", none.candidates.len());

    let took = within_time(start, Duration::from_secs(5))?;
    Ok(format!(
        "peak -> OOOOS ({} visited), failing replacements -> OOOOO, failing oracle -> NoSolution; at most {} candidates; {took:.2?}",
        strict.candidates.len(),
        positions + 1
    ))
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run_turf(args: &[&str], out: &Path) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_turf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SOURCE_DATE_EPOCH")
        .env_remove("TURF_SEED")
        .status()
        .map_err(|e| e.to_string())?;
    ensure!(status.success(), "turf {args:?} exited with {status}");
    std::fs::read(out).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = repo_path("models/tiny.json");
    let model = model.to_str().ok_or("non-UTF-8 path")?;
    let runs: [(&str, Vec<&str>); 2] = [
        ("dse", vec!["dse", model]),
        ("explore", vec!["explore", "--model", model, "--min-acc", "0.9", "--jitter", "0.01", "--seed", "7", "--exhaustive"]),
    ];
    let mut sizes = Vec::new();
    for (name, args) in runs {
        // same --out both times: the manifest records the command line
        let out = dir.path().join(format!("{name}.json"));
        let a = run_turf(&args, &out)?;
        let b = run_turf(&args, &out)?;
        ensure!(a == b, "two `turf {name}` runs differ");
        sizes.push(format!("{name} {} bytes", a.len()));
    }
    Ok(format!("byte-identical reports across two runs: {}", sizes.join(", ")))
}

fn check(index: usize, name: &str, f: impl FnOnce() -> Outcome + UnwindSafe) -> bool {
    let outcome = catch_unwind(f).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(detail) => {
            println!("[PASS] {index:>2} {name}: {detail}");
            true
        }
        Err(why) => {
            println!("[FAIL] {index:>2} {name}: {why}");
            false
        }
    }
}

#[test]
fn acceptance() {
    let results = [
        check(1, "winograd equivalence", winograd_equivalence),
        check(2, "winograd multiply count", winograd_complexity),
        check(3, "reference model op/param counts", reference_counts),
        check(4, "intermediate buffer sizes", buffer_table),
        check(5, "FM/CM ordering and toy trace", sequence_ordering),
        check(6, "fusion latency bounds", fusion_bounds),
        check(7, "bandwidth and fusion payoff", bandwidth_claim),
        check(8, "tiling overhead oracle", tiling_oracle),
        check(9, "search conformance", search_conformance),
        check(10, "report determinism", determinism),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
