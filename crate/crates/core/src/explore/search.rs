use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{replacement_key, AccuracyOracle};
use crate::error::{Error, Result};
use crate::model::{count_ops_params, replace_layer, ModelSpec, Replacement};
use crate::perf::{explore_designs, Calibration, DseOptions, EvaluatedDesign, PlatformSpec};

/// Performance side of the requirements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerfRequirement {
    MinGops(f64),
    MaxLatencyMs(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Requirements {
    pub min_accuracy: f64,
    pub performance: PerfRequirement,
}

impl Requirements {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_accuracy) {
            return Err(Error::InvalidConfig(format!("minimum accuracy {} is outside [0, 1]", self.min_accuracy)));
        }
        match self.performance {
            PerfRequirement::MinGops(g) if !(g >= 0.0) => Err(Error::InvalidConfig(format!("minimum GOPS {g} is negative"))),
            PerfRequirement::MaxLatencyMs(l) if !(l > 0.0) => Err(Error::InvalidConfig(format!("latency bound {l} ms is not positive"))),
            _ => Ok(()),
        }
    }

    /// Threshold on the performance metric, which is the pretrained model's
    /// op count divided by the candidate's latency.
    fn min_metric(&self, pretrained_ops: u64) -> f64 {
        match self.performance {
            PerfRequirement::MinGops(g) => g,
            PerfRequirement::MaxLatencyMs(ms) => pretrained_ops as f64 / (ms * 1e-3) / 1e9,
        }
    }
}

/// Next candidate in the greedy top-down order: `None` yields the pretrained
/// model, then each call replaces one more position counting down from the
/// top. Returns `None` once every position is replaced.
pub fn model_gen(pretrained: &ModelSpec, current: Option<&ModelSpec>) -> Result<Option<ModelSpec>> {
    let Some(cur) = current else {
        pretrained.validate()?;
        return Ok(Some(pretrained.clone()));
    };
    let n = cur.num_positions();
    let done = cur.replacement_vector.iter().rev().take_while(|r| **r == Replacement::Separable).count();
    if done == n {
        return Ok(None);
    }
    Ok(Some(replace_layer(cur, n - 1 - done)?))
}

/// Iterator form of [`model_gen`].
#[derive(Debug, Clone)]
pub struct ModelGen {
    pretrained: ModelSpec,
    current: Option<ModelSpec>,
    finished: bool,
}

impl ModelGen {
    pub fn new(pretrained: ModelSpec) -> Self {
        ModelGen { pretrained, current: None, finished: false }
    }
}

impl Iterator for ModelGen {
    type Item = Result<ModelSpec>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match model_gen(&self.pretrained, self.current.as_ref()) {
            Ok(Some(m)) => {
                self.current = Some(m.clone());
                Some(Ok(m))
            }
            Ok(None) => {
                self.finished = true;
                None
            }
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkOptions {
    /// Visit every candidate instead of stopping at the first one below the
    /// accuracy requirement.
    pub exhaustive: bool,
    /// Fine-tuning steps handed to the oracle.
    pub budget: u32,
    pub dse: DseOptions,
}

impl Default for FrameworkOptions {
    fn default() -> Self {
        FrameworkOptions { exhaustive: false, budget: 1, dse: DseOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLog {
    pub replacement_vector: String,
    pub replaced: usize,
    pub ops: u64,
    pub accuracy: f64,
    pub meets_accuracy: bool,
    /// Absent when the hardware search was skipped or nothing fit.
    pub design: Option<EvaluatedDesign>,
    pub latency_ms: Option<f64>,
    /// Pretrained ops over latency.
    pub performance_gops: Option<f64>,
    pub meets_performance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub dataset: String,
    pub oracle: String,
    pub synthetic_accuracy: bool,
    pub requirements: Requirements,
    pub exhaustive: bool,
    pub pretrained_ops: u64,
    pub required_gops: f64,
    pub candidates: Vec<CandidateLog>,
    /// Index into `candidates`.
    pub best: Option<usize>,
}

impl SearchOutcome {
    /// The selected candidate, or `NoSolution`.
    pub fn best(&self) -> Result<&CandidateLog> {
        self.best.map(|i| &self.candidates[i]).ok_or(Error::NoSolution)
    }
}

/// Greedy search: walk candidates from [`ModelGen`] while they stay valid and
/// accurate enough, run the hardware search for each, and keep the fastest
/// one that meets the performance requirement.
pub fn run_framework(
    dataset: &str,
    req: &Requirements,
    platform: &PlatformSpec,
    calib: &Calibration,
    pretrained: &ModelSpec,
    oracle: &dyn AccuracyOracle,
    options: &FrameworkOptions,
) -> Result<SearchOutcome> {
    req.validate()?;
    platform.validate()?;
    pretrained.validate()?;
    let pretrained_ops = count_ops_params(pretrained)?.total_ops;
    let required = req.min_metric(pretrained_ops);
    let mut candidates = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for model in ModelGen::new(pretrained.clone()) {
        let model = model?;
        let accuracy = oracle.accuracy(&model, options.budget)?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::Oracle(format!("oracle returned accuracy {accuracy}")));
        }
        let meets_accuracy = accuracy >= req.min_accuracy;
        let mut log = CandidateLog {
            replacement_vector: replacement_key(&model),
            replaced: model.replaced_count(),
            ops: count_ops_params(&model)?.total_ops,
            accuracy,
            meets_accuracy,
            design: None,
            latency_ms: None,
            performance_gops: None,
            meets_performance: false,
        };
        if !meets_accuracy && !options.exhaustive {
            candidates.push(log);
            break;
        }
        match explore_designs(&model, platform, calib, &options.dse) {
            Ok(report) => {
                let d = report.best;
                let p = pretrained_ops as f64 / d.latency_s / 1e9;
                log.latency_ms = Some(d.latency_ms());
                log.performance_gops = Some(p);
                log.meets_performance = p >= required;
                log.design = Some(d);
                if meets_accuracy && log.meets_performance && best.is_none_or(|(_, bp)| p > bp) {
                    best = Some((candidates.len(), p));
                }
            }
            Err(Error::Infeasible) => {}
            Err(e) => return Err(e),
        }
        candidates.push(log);
    }
    Ok(SearchOutcome {
        dataset: dataset.into(),
        oracle: oracle.describe(),
        synthetic_accuracy: oracle.is_synthetic(),
        requirements: *req,
        exhaustive: options.exhaustive,
        pretrained_ops,
        required_gops: required,
        candidates,
        best: best.map(|(i, _)| i),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{vgg16, TensorShape};

    #[test]
    fn generator_walks_top_down() {
        let m = vgg16(TensorShape { height: 32, width: 32, channels: 3 }).unwrap();
        let keys: Vec<String> = ModelGen::new(m).map(|m| replacement_key(&m.unwrap())).collect();
        assert_eq!(keys, ["OOOOO", "OOOOS", "OOOSS", "OOSSS", "OSSSS", "SSSSS"]);
    }

    #[test]
    fn requirement_bounds() {
        let r = Requirements { min_accuracy: 1.5, performance: PerfRequirement::MinGops(1.0) };
        assert!(r.validate().is_err());
        let r = Requirements { min_accuracy: 0.5, performance: PerfRequirement::MaxLatencyMs(10.0) };
        assert!((r.min_metric(1_000_000_000) - 100.0).abs() < 1e-9);
    }
}
