// SPDX-License-Identifier: Apache-2.0

//! Fault-injection campaigns: scenario generation, golden-referenced
//! classification and aggregation.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::{enumerate_sites, FaultDuration, FaultError, FaultModel, FaultSite, FaultSpec, Scheme, SiteKind};
use crate::redundancy::{build_machine, default_cycle_cap, run_stream, AnyMachine, CycleRecord, Machine, StreamRun};
use crate::synth::PipelineDesign;

pub const DEFAULT_SEED: u64 = 0x5eed_ae5b_0c5e_ed01;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("campaign contains no scenarios")]
    EmptyCampaign,
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error("invalid campaign config: {0}")]
    InvalidConfig(String),
    #[error("campaign json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum RunClassification {
    Masked,
    DetectedCorrected { stall_cycles: u64 },
    SilentDataCorruption { first_bad_cycle: u64 },
    DetectedUncorrected,
}

impl RunClassification {
    pub fn name(&self) -> &'static str {
        match self {
            RunClassification::Masked => "masked",
            RunClassification::DetectedCorrected { .. } => "detected_corrected",
            RunClassification::SilentDataCorruption { .. } => "silent_data_corruption",
            RunClassification::DetectedUncorrected => "detected_uncorrected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultClass {
    #[default]
    Transient,
    Permanent,
}

/// Per-classification run counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub masked: u64,
    pub detected_corrected: u64,
    pub silent_data_corruption: u64,
    pub detected_uncorrected: u64,
}

impl ClassCounts {
    pub fn record(&mut self, c: &RunClassification) {
        match c {
            RunClassification::Masked => self.masked += 1,
            RunClassification::DetectedCorrected { .. } => self.detected_corrected += 1,
            RunClassification::SilentDataCorruption { .. } => self.silent_data_corruption += 1,
            RunClassification::DetectedUncorrected => self.detected_uncorrected += 1,
        }
    }

    pub fn merge(self, other: ClassCounts) -> ClassCounts {
        ClassCounts {
            masked: self.masked + other.masked,
            detected_corrected: self.detected_corrected + other.detected_corrected,
            silent_data_corruption: self.silent_data_corruption + other.silent_data_corruption,
            detected_uncorrected: self.detected_uncorrected + other.detected_uncorrected,
        }
    }

    pub fn total(&self) -> u64 {
        self.masked + self.detected_corrected + self.silent_data_corruption + self.detected_uncorrected
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub fault: FaultSpec,
    pub classification: RunClassification,
    pub stalls: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteBreakdown {
    pub site: FaultSite,
    pub counts: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub design: String,
    pub stages: usize,
    pub seed: u64,
    pub fault_class: FaultClass,
    pub stream_len: usize,
    pub total_runs: u64,
    pub counts: ClassCounts,
    pub coverage: f64,
    /// Free-form run metadata (tool version, input hashes).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub run_info: BTreeMap<String, String>,
    pub per_site: Vec<SiteBreakdown>,
    pub scenarios: Vec<ScenarioResult>,
}

impl CampaignResult {
    /// True when no run corrupted data silently or left an error unrepaired.
    pub fn guarantee_held(&self) -> bool {
        self.counts.silent_data_corruption == 0 && self.counts.detected_uncorrected == 0
    }

    pub fn to_json(&self) -> Result<String, CampaignError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CampaignError> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per scenario: site, model, duration, start, classification, stalls.
    pub fn to_csv(&self) -> Result<String, CampaignError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["site", "model", "duration", "start", "classification", "stalls"])?;
        for s in &self.scenarios {
            let duration = match s.fault.duration {
                FaultDuration::Cycles(n) => n.to_string(),
                FaultDuration::Permanent => "permanent".to_string(),
            };
            w.write_record([
                s.fault.site.to_string(),
                s.fault.model.name().to_string(),
                duration,
                s.fault.start_cycle.to_string(),
                s.classification.name().to_string(),
                s.stalls.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| CampaignError::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Campaign configuration; every optional field falls back to a default
/// derived from the scheme, the fault class and the pipeline depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub scheme: Scheme,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default)]
    pub fault: FaultClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<FaultModel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_cycles: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site_kinds: Option<Vec<SiteKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<Vec<u8>>,
    /// Run a seeded random sample of this many scenarios instead of all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Explicit input stream; defaults to every byte followed by
    /// `random_bytes` seeded random bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<Vec<u8>>,
    #[serde(default = "default_random_bytes")]
    pub random_bytes: usize,
}

fn default_stages() -> usize {
    5
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_random_bytes() -> usize {
    256
}

impl CampaignConfig {
    pub fn new(scheme: Scheme, fault: FaultClass) -> Self {
        CampaignConfig {
            scheme,
            stages: default_stages(),
            fault,
            durations: None,
            models: None,
            start_cycles: None,
            site_kinds: None,
            replicas: None,
            sample: None,
            seed: DEFAULT_SEED,
            stream: None,
            random_bytes: default_random_bytes(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CampaignError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn input_stream(&self) -> Vec<u8> {
        match &self.stream {
            Some(s) => s.clone(),
            None => default_stream(self.seed, self.random_bytes),
        }
    }

    pub fn durations_or_default(&self) -> Vec<FaultDuration> {
        match self.fault {
            FaultClass::Permanent => vec![FaultDuration::Permanent],
            FaultClass::Transient => {
                let d = self.durations.clone().unwrap_or_else(|| {
                    if self.scheme == Scheme::Ttr {
                        vec![1]
                    } else {
                        vec![1, 2, 5, 10]
                    }
                });
                d.into_iter().map(FaultDuration::Cycles).collect()
            }
        }
    }

    pub fn models_or_default(&self) -> Vec<FaultModel> {
        self.models.clone().unwrap_or_else(|| match self.fault {
            FaultClass::Transient => FaultModel::ALL.to_vec(),
            FaultClass::Permanent => vec![FaultModel::StuckAt0, FaultModel::StuckAt1],
        })
    }

    pub fn start_cycles_or_default(&self, design: &PipelineDesign) -> Vec<u64> {
        self.start_cycles.clone().unwrap_or_else(|| match self.fault {
            FaultClass::Transient => (0..=design.n_stages() as u64 + 2).collect(),
            FaultClass::Permanent => vec![0],
        })
    }

    /// The selected sites, in enumeration order.
    pub fn sites(&self, design: &PipelineDesign) -> Vec<FaultSite> {
        let kinds = self.site_kinds.clone().unwrap_or_else(|| vec![SiteKind::Gate, SiteKind::Register]);
        enumerate_sites(self.scheme, design)
            .into_iter()
            .filter(|s| kinds.contains(&s.kind()))
            .filter(|s| match (&self.replicas, s.replica()) {
                (Some(rs), Some(r)) => rs.contains(&r),
                _ => true,
            })
            .collect()
    }

    /// Every scenario of the campaign (before sampling), validated.
    pub fn scenarios(&self, design: &PipelineDesign) -> Result<Vec<FaultSpec>, CampaignError> {
        if design.n_stages() != self.stages {
            return Err(CampaignError::InvalidConfig(format!(
                "config asks for {} stages but the design has {}",
                self.stages,
                design.n_stages()
            )));
        }
        let durations = self.durations_or_default();
        let models = self.models_or_default();
        let starts = self.start_cycles_or_default(design);
        let mut out = Vec::new();
        for site in self.sites(design) {
            for &model in &models {
                for &duration in &durations {
                    for &start_cycle in &starts {
                        let spec = FaultSpec { site, model, start_cycle, duration };
                        spec.validate(self.scheme, design)?;
                        out.push(spec);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// All 256 byte values in order followed by `random` seeded random bytes.
pub fn default_stream(seed: u64, random: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..=255u8).chain((0..random).map(|_| rng.gen::<u8>())).collect()
}

/// Classifies a faulted run against the golden run of the same stream.
pub fn classify(scheme: Scheme, golden: &StreamRun, faulted: &StreamRun) -> RunClassification {
    if !faulted.completed {
        return RunClassification::DetectedUncorrected;
    }
    if scheme.fixed_latency() {
        let len = golden.trace.len().max(faulted.trace.len());
        let at = |run: &StreamRun, t: usize| run.trace.get(t).and_then(|r| r.output);
        return match (0..len).find(|&t| at(golden, t) != at(faulted, t)) {
            None => RunClassification::Masked,
            Some(t) => RunClassification::SilentDataCorruption { first_bad_cycle: t as u64 },
        };
    }
    let values = |run: &StreamRun| -> Vec<(u64, u8)> {
        run.trace.iter().filter_map(|r| r.output.map(|v| (r.cycle, v))).collect()
    };
    let (g, f) = (values(golden), values(faulted));
    let detected = faulted.stalls > 0 || faulted.trace.iter().any(|r| r.global_err);
    let first_bad = (0..g.len().max(f.len())).find(|&i| g.get(i).map(|x| x.1) != f.get(i).map(|x| x.1));
    match first_bad {
        None if faulted.stalls == 0 => RunClassification::Masked,
        None => RunClassification::DetectedCorrected { stall_cycles: faulted.stalls },
        Some(_) if detected => RunClassification::DetectedUncorrected,
        Some(i) => {
            let cycle = f.get(i).map(|x| x.0).unwrap_or_else(|| faulted.trace.last().map_or(0, |r| r.cycle));
            RunClassification::SilentDataCorruption { first_bad_cycle: cycle }
        }
    }
}

/// Runs faulted simulations of one scheme against a cached golden run.
///
/// Faulted runs fork from a golden checkpoint at the fault start cycle, and
/// once the fault has expired a run whose state matches the golden state
/// (offset by the stalls taken) adopts the golden remainder.
pub struct ScenarioRunner<'a> {
    scheme: Scheme,
    design: &'a PipelineDesign,
    stream: Vec<u8>,
    cap: u64,
    golden: StreamRun,
    keys: Vec<Vec<u8>>,
    checkpoints: Vec<AnyMachine<'a>>,
}

impl<'a> ScenarioRunner<'a> {
    pub fn new(scheme: Scheme, design: &'a PipelineDesign, stream: &[u8], max_checkpoint: u64) -> Self {
        let cap = default_cycle_cap(design, stream.len());
        let mut machine = build_machine(scheme, design);
        let mut keys = vec![machine.state_key()];
        let mut checkpoints = vec![machine.clone()];
        let mut trace = Vec::new();
        let mut completed = true;
        loop {
            let t = machine.cycles();
            if (t as usize) >= stream.len() && !machine.busy() {
                break;
            }
            if t >= cap {
                completed = false;
                break;
            }
            trace.push(machine.cycle(stream.get(t as usize).copied(), &[]));
            keys.push(machine.state_key());
            if machine.cycles() <= max_checkpoint {
                checkpoints.push(machine.clone());
            }
        }
        let golden = StreamRun { trace, stalls: machine.stall_cycles(), completed };
        ScenarioRunner { scheme, design, stream: stream.to_vec(), cap, golden, keys, checkpoints }
    }

    pub fn golden(&self) -> &StreamRun {
        &self.golden
    }

    pub fn stream(&self) -> &[u8] {
        &self.stream
    }

    /// Simulates the stream under `fault`; `shortcut` enables golden
    /// convergence splicing.
    pub fn simulate(&self, fault: &FaultSpec, shortcut: bool) -> StreamRun {
        let faults = std::slice::from_ref(fault);
        if !shortcut {
            let mut m = build_machine(self.scheme, self.design);
            return run_stream(&mut m, &self.stream, faults, self.cap);
        }
        let fork = (fault.start_cycle as usize).min(self.checkpoints.len() - 1);
        let mut m = self.checkpoints[fork].clone();
        let mut trace: Vec<CycleRecord> = self.golden.trace[..fork].to_vec();
        let end = fault.end_cycle();
        loop {
            let t = m.cycles();
            if end.is_some_and(|e| t >= e) {
                let g = (t - m.stall_cycles()) as usize;
                if g < self.keys.len() && self.keys[g] == m.state_key() {
                    let shift = m.stall_cycles();
                    for r in &self.golden.trace[g..] {
                        if r.cycle + shift >= self.cap {
                            return StreamRun { trace, stalls: shift, completed: false };
                        }
                        trace.push(CycleRecord { cycle: r.cycle + shift, ..r.clone() });
                    }
                    return StreamRun { trace, stalls: shift, completed: self.golden.completed };
                }
            }
            if (t as usize) >= self.stream.len() && !m.busy() {
                return StreamRun { trace, stalls: m.stall_cycles(), completed: true };
            }
            if t >= self.cap {
                return StreamRun { trace, stalls: m.stall_cycles(), completed: false };
            }
            trace.push(m.cycle(self.stream.get(t as usize).copied(), faults));
        }
    }

    pub fn run(&self, fault: &FaultSpec) -> Result<(RunClassification, StreamRun), CampaignError> {
        fault.validate(self.scheme, self.design)?;
        let run = self.simulate(fault, true);
        Ok((classify(self.scheme, &self.golden, &run), run))
    }
}

/// Runs one faulted simulation plus its golden reference.
pub fn run_scenario(
    scheme: Scheme,
    design: &PipelineDesign,
    stream: &[u8],
    fault: &FaultSpec,
) -> Result<(RunClassification, StreamRun), CampaignError> {
    fault.validate(scheme, design)?;
    ScenarioRunner::new(scheme, design, stream, fault.start_cycle).run(fault)
}

/// Executes every (or a seeded sample of) scenario of `config` on `design`.
pub fn run_campaign(design: &PipelineDesign, config: &CampaignConfig) -> Result<CampaignResult, CampaignError> {
    let mut scenarios = config.scenarios(design)?;
    if let Some(n) = config.sample {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut picked = sample(&mut rng, scenarios.len(), n.min(scenarios.len())).into_vec();
        picked.sort_unstable();
        scenarios = picked.into_iter().map(|i| scenarios[i]).collect();
    }
    if scenarios.is_empty() {
        return Err(CampaignError::EmptyCampaign);
    }
    let stream = config.input_stream();
    let max_start = scenarios.iter().map(|s| s.start_cycle).max().unwrap_or(0);
    let runner = ScenarioRunner::new(config.scheme, design, &stream, max_start);
    let results = scenarios
        .par_iter()
        .map(|f| {
            let (classification, run) = runner.run(f)?;
            Ok(ScenarioResult { fault: *f, classification, stalls: run.stalls })
        })
        .collect::<Result<Vec<_>, CampaignError>>()?;
    Ok(aggregate(config, design, stream.len(), results))
}

/// Folds scenario results into a campaign result. The outcome does not
/// depend on the order of `results`.
pub fn aggregate(config: &CampaignConfig, design: &PipelineDesign, stream_len: usize, mut results: Vec<ScenarioResult>) -> CampaignResult {
    results.sort_by_key(|a| a.fault);
    let mut per_site: BTreeMap<FaultSite, ClassCounts> = BTreeMap::new();
    let mut counts = ClassCounts::default();
    for r in &results {
        counts.record(&r.classification);
        per_site.entry(r.fault.site).or_default().record(&r.classification);
    }
    let total = counts.total();
    let coverage = if total == 0 { 0.0 } else { (counts.masked + counts.detected_corrected) as f64 / total as f64 };
    CampaignResult {
        design: config.scheme.name().to_string(),
        stages: design.n_stages(),
        seed: config.seed,
        fault_class: config.fault,
        stream_len,
        total_runs: total,
        counts,
        coverage,
        run_info: BTreeMap::new(),
        per_site: per_site.into_iter().map(|(site, counts)| SiteBreakdown { site, counts }).collect(),
        scenarios: results,
    }
}
