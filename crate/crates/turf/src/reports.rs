//! JSON report bodies written by the subcommands. Each report starts with
//! its [`RunManifest`].

use serde::{Deserialize, Serialize};
use turf_core::explore::SearchOutcome;
use turf_core::fusion::{FusedDesignConfig, SeqResult, SimReport};
use turf_core::hw::{BufferOption, CycleCounts, LayerHwConfig, ModuleDesc, Seq};
use turf_core::model::{ModelBase, Replacement, StageCount, TensorShape};
use turf_core::perf::{BlockRoofline, DesignPoint, EvaluatedDesign, PlatformSpec, ResourceEstimate, RooflinePoint};

use crate::manifest::RunManifest;
use crate::winograd_check::WinogradCheck;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub manifest: RunManifest,
    pub base: ModelBase,
    pub input: TensorShape,
    pub output: TensorShape,
    pub total_ops: u64,
    pub total_params: u64,
    pub gop: f64,
    pub mparams: f64,
    pub positions: Vec<Vec<usize>>,
    pub replacement_vector: Vec<Replacement>,
    pub stages: Vec<StageCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDescription {
    pub layer: usize,
    pub hw: LayerHwConfig,
    pub cycles: CycleCounts,
    pub modules: Vec<ModuleDesc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwReport {
    pub manifest: RunManifest,
    pub stage: usize,
    pub layers: Vec<LayerDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub seqs: Vec<Seq>,
    pub buffer_options: Vec<BufferOption>,
    pub total_cycles: u64,
    pub buffer_words: u64,
}

impl From<&SeqResult> for SequenceRow {
    fn from(r: &SeqResult) -> Self {
        SequenceRow {
            seqs: r.seqs.clone(),
            buffer_options: r.buffer_options.clone(),
            total_cycles: r.report.total_cycles,
            buffer_words: r.report.buffer_words(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub manifest: RunManifest,
    pub stage: usize,
    pub config: FusedDesignConfig,
    pub report: SimReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequences: Option<Vec<SequenceRow>>,
}

/// One evaluated design point, without its per-stage breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub point: DesignPoint,
    pub latency_ms: f64,
    pub gops: f64,
    pub resources: ResourceEstimate,
    pub feasible: bool,
    pub roofline: RooflinePoint,
}

impl From<&EvaluatedDesign> for CandidateRow {
    fn from(d: &EvaluatedDesign) -> Self {
        CandidateRow {
            point: d.point,
            latency_ms: d.latency_ms(),
            gops: d.gops,
            resources: d.resources,
            feasible: d.feasible,
            roofline: d.roofline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseOutput {
    pub manifest: RunManifest,
    pub platform: PlatformSpec,
    pub calibration: String,
    pub cycle_model: String,
    /// Stage index when a single stage was explored.
    pub stage: Option<usize>,
    pub total_ops: u64,
    /// Baseline and fused traffic of the explored block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_roofline: Option<BlockRoofline>,
    pub candidates: Vec<CandidateRow>,
    pub best: EvaluatedDesign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreOutput {
    pub manifest: RunManifest,
    pub platform: PlatformSpec,
    pub calibration: String,
    pub result: SearchOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinogradReport {
    pub manifest: RunManifest,
    #[serde(flatten)]
    pub check: WinogradCheck,
}
