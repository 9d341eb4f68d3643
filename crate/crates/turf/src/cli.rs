//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use turf_core::explore::{run_framework, AccuracyOracle, FrameworkOptions, PerfRequirement, Requirements, SyntheticOracle};
use turf_core::fusion::{enumerate_sequences, plan_chain, simulate_chain, stage_chain, FusedDesignConfig, SimOptions, CYCLE_MODEL};
use turf_core::hw::{instantiate_layer, layer_cycle_counts};
use turf_core::model::{count_ops_params, ModelSpec, StageOp};
use turf_core::perf::{block_as_model, block_roofline, compute_roof_gops, explore_designs, Calibration, DseOptions, PlatformSpec};

use crate::error::{CliError, Result};
use crate::io::{read_json, to_json, write_text};
use crate::manifest::RunManifest;
use crate::model_file::{load_model, ModelFile};
use crate::oracle::{load_table_oracle, ExternalOracle};
use crate::reports::*;

#[derive(Debug, Parser)]
#[command(name = "turf", version, about = "Design-space exploration for CNN accelerators built from fused convolution blocks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect model files.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Inspect the hardware template.
    #[command(subcommand)]
    Hw(HwCommand),
    /// Simulate one stage of a model as a fused pipeline.
    Simulate(SimulateArgs),
    /// Search hardware designs for a model or one of its stages.
    Dse(DseArgs),
    /// Greedy model and hardware co-search.
    Explore(ExploreArgs),
    /// Randomized Winograd vs direct convolution trials.
    WinogradCheck(WinogradArgs),
}

#[derive(Debug, Subcommand)]
enum ModelCommand {
    /// Per-stage op and parameter counts.
    Show {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a reference network as an explicit stage list.
    Export {
        /// vgg16, resnet34, resnet50, mobilenetv1 or mobilenetv2.
        name: String,
        #[arg(long, default_value_t = 224)]
        size: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum HwCommand {
    /// Module chain and per-tile cycle counts of one stage.
    Describe {
        model: PathBuf,
        /// Stage index.
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    model: PathBuf,
    /// Stage index.
    #[arg(long)]
    block: usize,
    #[arg(long)]
    config: PathBuf,
    /// Write the work-unit trace as a JSON array.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also rank every FM/CM sequence combination.
    #[arg(long)]
    enumerate_seqs: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlatformArgs {
    /// Platform JSON; defaults to the Stratix V 5SGSD8 board.
    #[arg(long)]
    platform: Option<PathBuf>,
    /// ALM calibration JSON; defaults to placeholder coefficients.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Override the platform bandwidth in GB/s.
    #[arg(long)]
    bandwidth: Option<f64>,
}

#[derive(Debug, Args)]
struct DseArgs {
    model: PathBuf,
    #[command(flatten)]
    platform: PlatformArgs,
    /// Explore a single stage instead of the whole model.
    #[arg(long)]
    block: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Candidate roofline coordinates as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExploreArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    platform: PlatformArgs,
    #[arg(long, default_value_t = 0.0)]
    min_acc: f64,
    #[arg(long, conflicts_with = "max_latency_ms")]
    min_gops: Option<f64>,
    #[arg(long)]
    max_latency_ms: Option<f64>,
    /// synthetic, table:<csv> or external:<command>.
    #[arg(long, default_value = "synthetic")]
    oracle: String,
    /// Visit every candidate; accuracy only filters the selection.
    #[arg(long)]
    exhaustive: bool,
    /// Fine-tuning steps passed to the oracle.
    #[arg(long, default_value_t = 1)]
    budget: u32,
    #[arg(long, default_value = "unspecified")]
    dataset: String,
    /// Jitter amplitude of the synthetic oracle.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Seed; `TURF_SEED` takes precedence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WinogradArgs {
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    r: usize,
    #[arg(long, default_value_t = 200)]
    trials: u32,
    /// Seed; `TURF_SEED` takes precedence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut command = vec!["turf".to_string()];
    command.extend(argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()));
    match dispatch(cli.command, command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("{}: {e}", e.name());
            1
        }
    }
}

fn seed_or_env(seed: u64) -> Result<u64> {
    match std::env::var("TURF_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Usage(format!("TURF_SEED=`{s}` is not an unsigned integer"))),
        Err(_) => Ok(seed),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            // a closed pipe (`turf dse m.json | head`) is not a failure
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io { path: "<stdout>".into(), source: e }),
            _ => Ok(()),
        },
    }
}

fn stage_of(model: &ModelSpec, index: usize) -> Result<&turf_core::model::Stage> {
    model.stages.get(index).ok_or_else(|| {
        CliError::Core(turf_core::Error::InvalidConfig(format!("stage {index} out of range (model has {})", model.stages.len())))
    })
}

fn load_platform(args: &PlatformArgs, manifest: &mut RunManifest) -> Result<(PlatformSpec, Calibration)> {
    let mut platform = match &args.platform {
        Some(p) => {
            manifest.add_input(p)?;
            read_json(p)?
        }
        None => PlatformSpec::default(),
    };
    if let Some(bw) = args.bandwidth {
        platform = platform.with_bandwidth(bw);
    }
    platform.validate()?;
    let calib = match &args.calibration {
        Some(p) => {
            manifest.add_input(p)?;
            read_json(p)?
        }
        None => Calibration::placeholder(),
    };
    Ok((platform, calib))
}

fn dispatch(command: Command, argv: Vec<String>) -> Result<()> {
    match command {
        Command::Model(ModelCommand::Show { model, format, out }) => model_show(&model, format, out.as_deref(), argv),
        Command::Model(ModelCommand::Export { name, size, out }) => {
            let input = turf_core::model::TensorShape::new(size, size, 3)?;
            let m = turf_core::model::build_reference_model(&name, input)?;
            emit(out.as_deref(), &to_json(&ModelFile::from_model(&m)))
        }
        Command::Hw(HwCommand::Describe { model, layer, config, out }) => hw_describe(&model, layer, &config, out.as_deref(), argv),
        Command::Simulate(a) => simulate(a, argv),
        Command::Dse(a) => dse(a, argv),
        Command::Explore(a) => explore(a, argv),
        Command::WinogradCheck(a) => {
            let seed = seed_or_env(a.seed)?;
            let check = crate::winograd_check::run(a.m, a.r, a.trials, seed)?;
            let report = WinogradReport { manifest: RunManifest::new(argv, Some(seed)), check };
            emit(a.out.as_deref(), &to_json(&report))
        }
    }
}

fn model_show(path: &Path, format: Format, out: Option<&Path>, argv: Vec<String>) -> Result<()> {
    let model = load_model(path)?;
    let counts = count_ops_params(&model)?;
    let text = match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["index", "label", "category", "input", "output", "ops", "params"]).map_err(|e| CliError::parse(path, e))?;
            for s in &counts.stages {
                w.write_record([
                    s.index.to_string(),
                    s.label.clone(),
                    format!("{:?}", s.category),
                    s.input.to_string(),
                    s.output.to_string(),
                    s.ops.to_string(),
                    s.params.to_string(),
                ])
                .map_err(|e| CliError::parse(path, e))?;
            }
            w.write_record(["total", "", "", "", "", &counts.total_ops.to_string(), &counts.total_params.to_string()])
                .map_err(|e| CliError::parse(path, e))?;
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
        }
        Format::Json => {
            let mut manifest = RunManifest::new(argv, None);
            manifest.add_input(path)?;
            to_json(&ModelReport {
                manifest,
                base: model.base,
                input: model.input,
                output: model.output_shape()?,
                total_ops: counts.total_ops,
                total_params: counts.total_params,
                gop: counts.gop(),
                mparams: counts.mparams(),
                positions: model.positions.clone(),
                replacement_vector: model.replacement_vector.clone(),
                stages: counts.stages,
            })
        }
    };
    emit(out, &text)
}

fn hw_describe(path: &Path, index: usize, config: &Path, out: Option<&Path>, argv: Vec<String>) -> Result<()> {
    let mut manifest = RunManifest::new(argv, None);
    manifest.add_input(path)?;
    manifest.add_input(config)?;
    let model = load_model(path)?;
    let cfg: FusedDesignConfig = read_json(config)?;
    let stage = stage_of(&model, index)?;
    let (layers, input) = stage_chain(&stage.op, stage.input)
        .ok_or_else(|| turf_core::Error::UnsupportedConfig(format!("stage {index} has no compute layers")))?;
    let mut shapes = vec![input];
    for l in &layers {
        shapes.push(l.output_shape(shapes[shapes.len() - 1])?);
    }
    let plan = plan_chain(&layers, &shapes, &cfg)?;
    let mut described = Vec::new();
    for (i, (layer, hw)) in layers.iter().zip(&plan.layers).enumerate() {
        let modules = instantiate_layer(layer, hw)?;
        turf_core::hw::check_chaining(&modules)?;
        described.push(LayerDescription { layer: i, hw: *hw, cycles: layer_cycle_counts(layer, hw)?, modules });
    }
    emit(out, &to_json(&HwReport { manifest, stage: index, layers: described }))
}

fn simulate(a: SimulateArgs, argv: Vec<String>) -> Result<()> {
    let mut manifest = RunManifest::new(argv, None);
    manifest.add_input(&a.model)?;
    manifest.add_input(&a.config)?;
    let model = load_model(&a.model)?;
    let cfg: FusedDesignConfig = read_json(&a.config)?;
    let stage = stage_of(&model, a.block)?;
    let (layers, input) = stage_chain(&stage.op, stage.input)
        .ok_or_else(|| turf_core::Error::UnsupportedConfig(format!("stage {} has no compute layers", a.block)))?;
    let mut report = simulate_chain(&layers, input, &cfg, SimOptions { record_trace: a.trace.is_some() })?;
    if let Some(path) = &a.trace {
        write_text(path, &(serde_json::to_string(&report.trace.take().unwrap_or_default()).expect("trace serializes") + "\n"))?;
    }
    let sequences = match (&stage.op, a.enumerate_seqs) {
        (StageOp::Block(b), true) => Some(enumerate_sequences(b, input, &cfg, 4)?.iter().map(SequenceRow::from).collect()),
        (_, true) => return Err(turf_core::Error::UnsupportedConfig("sequence enumeration needs a block stage".into()).into()),
        _ => None,
    };
    emit(a.out.as_deref(), &to_json(&SimulateReport { manifest, stage: a.block, config: cfg, report, sequences }))
}

fn dse(a: DseArgs, argv: Vec<String>) -> Result<()> {
    let mut manifest = RunManifest::new(argv, None);
    manifest.add_input(&a.model)?;
    let (platform, calib) = load_platform(&a.platform, &mut manifest)?;
    let model = load_model(&a.model)?;
    let (target, block_rl) = match a.block {
        None => (model, None),
        Some(i) => {
            let stage = stage_of(&model, i)?;
            match &stage.op {
                StageOp::Block(b) => {
                    let roof = compute_roof_gops(&platform, platform.dsp_total, 1.0);
                    (block_as_model(b, stage.input)?, Some(block_roofline(b, stage.input, &platform, roof)?))
                }
                op => (ModelSpec::chain(model.base, stage.input, vec![op.clone()])?, None),
            }
        }
    };
    let report = explore_designs(&target, &platform, &calib, &DseOptions::default())?;
    if let Some(p) = &a.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = ["p_c", "p_f", "tile", "winograd", "latency_ms", "gops", "dsp", "bram", "alm", "feasible", "intensity", "attainable_gops", "compute_roof_gops"];
        w.write_record(header).map_err(|e| CliError::parse(p, e))?;
        for c in &report.candidates {
            let tile = match c.point.tile {
                turf_core::perf::TileChoice::Full => "full".to_string(),
                turf_core::perf::TileChoice::Square(t) => t.to_string(),
            };
            w.write_record([
                c.point.p_c.to_string(),
                c.point.p_f.to_string(),
                tile,
                c.point.use_winograd.to_string(),
                format!("{:.6}", c.latency_ms()),
                format!("{:.3}", c.gops),
                c.resources.dsp.to_string(),
                c.resources.bram.to_string(),
                c.resources.alm.to_string(),
                c.feasible.to_string(),
                format!("{:.3}", c.roofline.arithmetic_intensity),
                format!("{:.3}", c.roofline.attainable_gops),
                format!("{:.3}", c.roofline.compute_roof_gops),
            ])
            .map_err(|e| CliError::parse(p, e))?;
        }
        write_text(p, &String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv"))?;
    }
    let out = DseOutput {
        manifest,
        platform,
        calibration: calib.source.clone(),
        cycle_model: CYCLE_MODEL.into(),
        stage: a.block,
        total_ops: report.total_ops,
        block_roofline: block_rl,
        candidates: report.candidates.iter().map(CandidateRow::from).collect(),
        best: report.best,
    };
    emit(a.out.as_deref(), &to_json(&out))
}

fn explore(a: ExploreArgs, argv: Vec<String>) -> Result<()> {
    let seed = seed_or_env(a.seed)?;
    let mut manifest = RunManifest::new(argv, Some(seed));
    manifest.add_input(&a.model)?;
    let (platform, calib) = load_platform(&a.platform, &mut manifest)?;
    let model = load_model(&a.model)?;
    let oracle: Box<dyn AccuracyOracle> = if a.oracle == "synthetic" {
        Box::new(SyntheticOracle { jitter: a.jitter, seed, ..Default::default() })
    } else if let Some(csv) = a.oracle.strip_prefix("table:") {
        manifest.add_input(Path::new(csv))?;
        Box::new(load_table_oracle(Path::new(csv))?)
    } else if let Some(cmd) = a.oracle.strip_prefix("external:") {
        Box::new(ExternalOracle { command: cmd.into() })
    } else {
        return Err(CliError::Usage(format!("unknown oracle `{}`; use synthetic, table:<csv> or external:<command>", a.oracle)));
    };
    let performance = match a.max_latency_ms {
        Some(ms) => PerfRequirement::MaxLatencyMs(ms),
        None => PerfRequirement::MinGops(a.min_gops.unwrap_or(0.0)),
    };
    let req = Requirements { min_accuracy: a.min_acc, performance };
    let options = FrameworkOptions { exhaustive: a.exhaustive, budget: a.budget, dse: DseOptions::default() };
    let result = run_framework(&a.dataset, &req, &platform, &calib, &model, oracle.as_ref(), &options)?;
    let found = result.best().map(|_| ());
    let out = ExploreOutput { manifest, platform, calibration: calib.source.clone(), result };
    emit(a.out.as_deref(), &to_json(&out))?;
    found.map_err(CliError::from)
}
