//! Scenario files: TOML schema, resolution of names to indices, validation
//! and count scaling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::engine::{secs, SimTime};
use crate::ids::RegionIdx;
use crate::pool::{PoolConfig, PoolRegion};
use crate::providers::{BootDelay, FaultKind, FaultSpec, Flavor, Provider, Region};
use crate::workload::{GpuModel, InputCatalog, InputClass, PerfTable, StorageEndpoint, StorageTable, Workload};

const PAPER_REPLAY: &str = include_str!("../data/paper-replay.toml");

/// One semantic problem, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{} validation error(s):\n{}", .0.len(), join_errors(.0))]
    Invalid(Vec<ValidationError>),
}

fn join_errors(errors: &[ValidationError]) -> String {
    errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default = "default_seed")]
    seed: u64,
    horizon_min: f64,
    /// CSV path, relative to the scenario file. The built-in table otherwise.
    perf_table: Option<PathBuf>,
    #[serde(default)]
    pool: PoolFile,
    #[serde(default)]
    timing: TimingFile,
    regions: Vec<RegionFile>,
    #[serde(default)]
    plan: Vec<PlanFile>,
    workload: WorkloadFile,
    shutdown: ShutdownFile,
    #[serde(default)]
    faults: Vec<FaultFile>,
    #[serde(default)]
    operator: Vec<OperatorFile>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PoolFile {
    gpu_schedds: u16,
    cpu_schedds: u16,
    schedd_cap: u32,
    leaves_per_region: u16,
    registration_service_ms: u64,
    forward_latency_ms: u64,
    cpu_slots_per_instance: u8,
    prefetch_bug: bool,
}

impl Default for PoolFile {
    fn default() -> Self {
        let d = PoolConfig::default();
        Self {
            gpu_schedds: d.gpu_schedds,
            cpu_schedds: d.cpu_schedds,
            schedd_cap: d.schedd_cap,
            leaves_per_region: d.leaves_per_region,
            registration_service_ms: d.registration_service.as_millis() as u64,
            forward_latency_ms: d.forward_latency.as_millis() as u64,
            cpu_slots_per_instance: d.cpu_slots_per_instance,
            prefetch_bug: d.prefetch_bug,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TimingFile {
    negotiator_period_s: f64,
    provider_tick_s: f64,
    controller_period_s: f64,
    sample_period_s: f64,
    deprovision_latency_s: f64,
}

impl Default for TimingFile {
    fn default() -> Self {
        let t = Timing::default();
        Self {
            negotiator_period_s: t.negotiator_period.as_secs_f64(),
            provider_tick_s: t.provider_tick.as_secs_f64(),
            controller_period_s: t.controller_period.as_secs_f64(),
            sample_period_s: t.sample_period.as_secs_f64(),
            deprovision_latency_s: t.deprovision_latency.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionFile {
    name: String,
    provider: Provider,
    #[serde(default)]
    geo: String,
    #[serde(default)]
    quota: BTreeMap<GpuModel, u32>,
    #[serde(default)]
    boot: BootDelay,
    #[serde(default)]
    wan_latency_ms: u64,
    #[serde(default = "yes")]
    has_collector: bool,
    /// Pre-created scale sets per GPU model (provider B only).
    scale_sets: Option<u32>,
    scale_set_max: Option<u32>,
    #[serde(default = "default_gbps")]
    storage_read_gbps: f64,
    #[serde(default = "default_gbps")]
    storage_write_gbps: f64,
}

fn yes() -> bool {
    true
}

fn default_gbps() -> f64 {
    1000.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    at_min: f64,
    region: String,
    gpu: GpuModel,
    target: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFile {
    #[serde(default = "default_size_factor")]
    size_factor: f64,
    #[serde(default = "default_jitter")]
    jitter: f64,
    #[serde(default = "default_input_gb")]
    input_gb: f64,
    #[serde(default)]
    output_gb: f64,
    #[serde(default)]
    cpu_jobs: u32,
    #[serde(default)]
    jobs: Vec<JobsFile>,
}

fn default_size_factor() -> f64 {
    0.125
}

fn default_jitter() -> f64 {
    0.05
}

fn default_input_gb() -> f64 {
    10.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobsFile {
    input: InputClass,
    count: u32,
    #[serde(default)]
    gpus: Vec<GpuModel>,
    /// Region names holding a replica of the input; `"*"` means every region.
    replicas: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShutdownFile {
    at_min: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FaultKindFile {
    Stall { fraction: f64 },
    Respawn { rogue_per_call: u32 },
    Preemption { rate_per_hour: f64 },
}

#[derive(Debug, Clone, Deserialize)]
struct FaultFile {
    #[serde(flatten)]
    kind: FaultKindFile,
    #[serde(default)]
    regions: Vec<String>,
    #[serde(default)]
    start_min: f64,
    /// Open-ended when absent.
    end_min: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    ManualRecovery,
    ManualSweep,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorFile {
    at_min: f64,
    action: OperatorKind,
    region: String,
}

// ---------------------------------------------------------------------------
// Resolved scenario

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub negotiator_period: Duration,
    pub provider_tick: Duration,
    pub controller_period: Duration,
    pub sample_period: Duration,
    /// Delay between a slot draining and its de-provisioning API call.
    pub deprovision_latency: Duration,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            negotiator_period: Duration::from_secs(60),
            provider_tick: Duration::from_secs(10),
            controller_period: Duration::from_secs(60),
            sample_period: Duration::from_secs(60),
            deprovision_latency: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub region: Region,
    pub has_collector: bool,
    pub scale_sets: u32,
    pub scale_set_max: u32,
    pub storage: StorageEndpoint,
}

/// From `at` on, the controller keeps `target` instances of `gpu` in `region`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub at: SimTime,
    pub region: RegionIdx,
    pub gpu: GpuModel,
    pub target: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobBatch {
    pub input: InputClass,
    pub count: u32,
    /// Empty means any model.
    pub gpus: BTreeSet<GpuModel>,
    pub replicas: BTreeSet<RegionIdx>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadPlan {
    pub batches: Vec<JobBatch>,
    pub cpu_jobs: u32,
    pub size_factor: f64,
    pub jitter: f64,
    pub input_bytes: u64,
    pub output_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorAction {
    pub at: SimTime,
    pub kind: OperatorKind,
    pub region: RegionIdx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub horizon: SimTime,
    pub perf: PerfTable,
    pub pool: PoolConfig,
    pub timing: Timing,
    pub regions: Vec<RegionSpec>,
    pub plan: Vec<PlanEntry>,
    pub workload: WorkloadPlan,
    pub shutdown: SimTime,
    pub faults: Vec<FaultSpec>,
    pub operator: Vec<OperatorAction>,
    /// Count multiplier already applied to this scenario.
    pub scale: f64,
}

#[derive(Default)]
struct Errors(Vec<ValidationError>);

impl Errors {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ValidationError { path: path.into(), message: message.into() });
    }
}

fn minutes(m: f64) -> SimTime {
    SimTime::from_secs_f64(m * 60.0)
}

fn scale_count(n: u32, f: f64) -> u32 {
    (f64::from(n) * f).round() as u32
}

impl Scenario {
    /// Parses and validates scenario text. Relative paths inside it resolve
    /// against `base_dir`.
    pub fn parse_str(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        if text.trim().is_empty() {
            return Err(ScenarioError::Parse("scenario is empty".into()));
        }
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let mut errors = Errors::default();
        let scenario = resolve(file, base_dir, &mut errors);
        if let Some(s) = &scenario {
            s.check(&mut errors);
        }
        match scenario {
            Some(s) if errors.0.is_empty() => Ok(s),
            _ => Err(ScenarioError::Invalid(errors.0)),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        Self::parse_str(&text, path.parent())
    }

    /// The shipped, calibrated replay of the full exercise.
    pub fn paper_replay() -> Self {
        Self::parse_str(PAPER_REPLAY, None).expect("shipped scenario is valid")
    }

    pub fn paper_replay_text() -> &'static str {
        PAPER_REPLAY
    }

    pub fn region_index(&self, name: &str) -> Option<RegionIdx> {
        self.regions.iter().position(|r| r.region.name == name).map(|i| RegionIdx(i as u16))
    }

    /// Models that appear in the provisioning plan.
    pub fn planned_models(&self) -> BTreeSet<GpuModel> {
        self.plan.iter().map(|p| p.gpu).collect()
    }

    /// Multiplies job counts, quotas and plan targets by `factor` and
    /// re-validates.
    pub fn scaled(&self, factor: f64) -> Result<Self, ScenarioError> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(ScenarioError::Invalid(vec![ValidationError {
                path: "scale".into(),
                message: format!("must be a positive number, got {factor}"),
            }]));
        }
        let mut s = self.clone();
        for r in &mut s.regions {
            for q in r.region.quota.values_mut() {
                *q = scale_count(*q, factor);
            }
        }
        for p in &mut s.plan {
            p.target = scale_count(p.target, factor);
        }
        for b in &mut s.workload.batches {
            b.count = scale_count(b.count, factor);
        }
        s.workload.cpu_jobs = scale_count(s.workload.cpu_jobs, factor);
        s.scale *= factor;
        let mut errors = Errors::default();
        s.check(&mut errors);
        if errors.0.is_empty() {
            Ok(s)
        } else {
            Err(ScenarioError::Invalid(errors.0))
        }
    }

    pub fn provider_regions(&self) -> Vec<Region> {
        self.regions.iter().map(|r| r.region.clone()).collect()
    }

    pub fn pool_regions(&self) -> Vec<PoolRegion> {
        self.regions
            .iter()
            .map(|r| PoolRegion {
                name: r.region.name.clone(),
                provider: r.region.provider,
                wan_latency: secs(r.region.wan_latency_s),
                has_collector: r.has_collector,
            })
            .collect()
    }

    pub fn build_workload(&self) -> Workload {
        let mut storage = StorageTable::default();
        for r in &self.regions {
            storage.insert(r.storage);
        }
        let mut replicas: BTreeMap<InputClass, BTreeSet<RegionIdx>> = BTreeMap::new();
        for b in &self.workload.batches {
            replicas.entry(b.input).or_default().extend(b.replicas.iter().copied());
        }
        Workload {
            perf: self.perf.clone(),
            catalog: InputCatalog { size_factor: self.workload.size_factor, replicas },
            storage,
            jitter: self.workload.jitter,
            input_bytes: self.workload.input_bytes,
            output_bytes: self.workload.output_bytes,
        }
    }

    /// Semantic checks on a resolved scenario.
    fn check(&self, errors: &mut Errors) {
        if self.horizon == SimTime::ZERO {
            errors.push("horizon_min", "must be positive");
        }
        if self.shutdown > self.horizon {
            errors.push("shutdown.at_min", "is past the horizon");
        }
        let provisioned: BTreeSet<RegionIdx> = self.plan.iter().filter(|p| p.target > 0).map(|p| p.region).collect();
        for (i, p) in self.plan.iter().enumerate() {
            let path = format!("plan[{i}]");
            if p.at > self.horizon {
                errors.push(format!("{path}.at_min"), "is past the horizon");
            }
            let spec = &self.regions[p.region.index()];
            if spec.region.provider.flavor() == Flavor::ScaleSet {
                let max = u64::from(spec.scale_sets) * u64::from(spec.scale_set_max);
                if u64::from(p.target) > max {
                    errors.push(
                        format!("{path}.target"),
                        format!(
                            "scale-set resize to {} exceeds the max size ({} sets of {})",
                            p.target, spec.scale_sets, spec.scale_set_max
                        ),
                    );
                }
            }
            if !spec.has_collector && p.target > 0 {
                errors.push(format!("{path}.region"), format!("region {} has no leaf collector", spec.region.name));
            }
            match self.perf.entry(p.gpu) {
                Ok(e) if e.price.is_none() => {
                    errors.push(format!("{path}.gpu"), format!("{} has no price in the performance table", p.gpu))
                }
                Err(_) => errors.push(format!("{path}.gpu"), format!("{} is not in the performance table", p.gpu)),
                Ok(_) => {}
            }
        }
        let mut classes: BTreeMap<InputClass, bool> = BTreeMap::new();
        for (i, b) in self.workload.batches.iter().enumerate() {
            let reachable = b.replicas.iter().any(|r| provisioned.contains(r));
            *classes.entry(b.input).or_default() |= reachable;
            if b.count > 0 && !reachable {
                errors.push(
                    format!("workload.jobs[{i}].replicas"),
                    format!("input class {} has no replica in any provisioned region", b.input),
                );
            }
        }
        if !(0.0..=1.0).contains(&self.workload.size_factor) || self.workload.size_factor == 0.0 {
            errors.push("workload.size_factor", "must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.workload.jitter) {
            errors.push("workload.jitter", "must be in [0, 1)");
        }
        for (i, f) in self.faults.iter().enumerate() {
            if f.start > f.end {
                errors.push(format!("faults[{i}].end_min"), "ends before it starts");
            }
            match f.kind {
                FaultKind::RegionalLimitStall { fraction } if !(0.0..=1.0).contains(&fraction) => {
                    errors.push(format!("faults[{i}].fraction"), "must be in [0, 1]")
                }
                FaultKind::Preemption { rate_per_hour } if !(rate_per_hour >= 0.0 && rate_per_hour.is_finite()) => {
                    errors.push(format!("faults[{i}].rate_per_hour"), "must be non-negative")
                }
                _ => {}
            }
        }
        for (i, a) in self.operator.iter().enumerate() {
            if a.at > self.horizon {
                errors.push(format!("operator[{i}].at_min"), "is past the horizon");
            }
        }
    }
}

fn resolve(file: ScenarioFile, base_dir: Option<&Path>, errors: &mut Errors) -> Option<Scenario> {
    let mut names: BTreeMap<&str, RegionIdx> = BTreeMap::new();
    if file.regions.is_empty() {
        errors.push("regions", "at least one region is required");
    }
    if file.regions.len() > usize::from(u16::MAX) {
        errors.push("regions", "too many regions");
        return None;
    }
    for (i, r) in file.regions.iter().enumerate() {
        if names.insert(r.name.as_str(), RegionIdx(i as u16)).is_some() {
            errors.push(format!("regions[{i}].name"), format!("duplicate region name {}", r.name));
        }
    }
    let lookup = |name: &str, path: String, errors: &mut Errors| -> Option<RegionIdx> {
        let idx = names.get(name).copied();
        if idx.is_none() {
            errors.push(path, format!("unknown region {name}"));
        }
        idx
    };

    let perf = match &file.perf_table {
        None => PerfTable::builtin(),
        Some(p) => {
            let path = base_dir.map_or_else(|| p.clone(), |d| d.join(p));
            match std::fs::File::open(&path) {
                Ok(f) => match PerfTable::from_csv(f) {
                    Ok(t) => t,
                    Err(e) => {
                        errors.push("perf_table", e.to_string());
                        return None;
                    }
                },
                Err(e) => {
                    errors.push("perf_table", format!("cannot open {}: {e}", path.display()));
                    return None;
                }
            }
        }
    };

    let mut regions = Vec::new();
    for (i, r) in file.regions.iter().enumerate() {
        let path = format!("regions[{i}]");
        let is_set = r.provider.flavor() == Flavor::ScaleSet;
        if !is_set && (r.scale_sets.is_some() || r.scale_set_max.is_some()) {
            errors.push(format!("{path}.scale_sets"), "only provider B offers scale sets");
        }
        if r.boot.median_s <= 0.0 || r.boot.sigma < 0.0 {
            errors.push(format!("{path}.boot"), "median must be positive and sigma non-negative");
        }
        if r.storage_read_gbps <= 0.0 || r.storage_write_gbps <= 0.0 {
            errors.push(format!("{path}.storage"), "bandwidths must be positive");
        }
        regions.push(RegionSpec {
            region: Region {
                name: r.name.clone(),
                provider: r.provider,
                geo: r.geo.clone(),
                quota: r.quota.clone(),
                boot: r.boot,
                wan_latency_s: r.wan_latency_ms as f64 / 1000.0,
            },
            has_collector: r.has_collector,
            scale_sets: if is_set { r.scale_sets.unwrap_or(1) } else { 0 },
            scale_set_max: if is_set { r.scale_set_max.unwrap_or(1000) } else { 0 },
            storage: StorageEndpoint {
                region: RegionIdx(i as u16),
                read_bps: r.storage_read_gbps * 1e9,
                write_bps: r.storage_write_gbps * 1e9,
            },
        });
    }

    let time = |m: f64, path: String, errors: &mut Errors| -> SimTime {
        if !(m >= 0.0 && m.is_finite()) {
            errors.push(path, "must be a non-negative number of minutes");
            return SimTime::ZERO;
        }
        minutes(m)
    };

    let mut plan = Vec::new();
    for (i, p) in file.plan.iter().enumerate() {
        let at = time(p.at_min, format!("plan[{i}].at_min"), errors);
        if let Some(region) = lookup(&p.region, format!("plan[{i}].region"), errors) {
            plan.push(PlanEntry { at, region, gpu: p.gpu, target: p.target });
        }
    }

    let all: BTreeSet<RegionIdx> = (0..regions.len()).map(|i| RegionIdx(i as u16)).collect();
    let mut batches = Vec::new();
    for (i, j) in file.workload.jobs.iter().enumerate() {
        let mut replicas = BTreeSet::new();
        if j.replicas.is_empty() {
            errors.push(format!("workload.jobs[{i}].replicas"), format!("input class {} lists no replicas", j.input));
        }
        for (k, name) in j.replicas.iter().enumerate() {
            if name == "*" {
                replicas.extend(all.iter().copied());
            } else if let Some(r) = lookup(name, format!("workload.jobs[{i}].replicas[{k}]"), errors) {
                replicas.insert(r);
            }
        }
        batches.push(JobBatch { input: j.input, count: j.count, gpus: j.gpus.iter().copied().collect(), replicas });
    }

    let mut faults = Vec::new();
    for (i, f) in file.faults.iter().enumerate() {
        let mut regions = Vec::new();
        for (k, name) in f.regions.iter().enumerate() {
            if let Some(r) = lookup(name, format!("faults[{i}].regions[{k}]"), errors) {
                regions.push(r);
            }
        }
        let start = time(f.start_min, format!("faults[{i}].start_min"), errors);
        let end = match f.end_min {
            Some(m) => time(m, format!("faults[{i}].end_min"), errors),
            None => SimTime::from_millis(u64::MAX),
        };
        let kind = match f.kind {
            FaultKindFile::Stall { fraction } => FaultKind::RegionalLimitStall { fraction },
            FaultKindFile::Respawn { rogue_per_call } => FaultKind::DeprovisionRespawnBug { rogue_per_call },
            FaultKindFile::Preemption { rate_per_hour } => FaultKind::Preemption { rate_per_hour },
        };
        faults.push(FaultSpec { kind, regions, start, end });
    }

    let mut operator = Vec::new();
    for (i, a) in file.operator.iter().enumerate() {
        let at = time(a.at_min, format!("operator[{i}].at_min"), errors);
        if let Some(region) = lookup(&a.region, format!("operator[{i}].region"), errors) {
            operator.push(OperatorAction { at, kind: a.action, region });
        }
    }

    let t = &file.timing;
    let mut period = |s: f64, path: &str| -> Duration {
        if !(s > 0.0 && s.is_finite()) {
            errors.push(format!("timing.{path}"), "must be a positive number of seconds");
            return Duration::from_secs(1);
        }
        secs(s)
    };
    let timing = Timing {
        negotiator_period: period(t.negotiator_period_s, "negotiator_period_s"),
        provider_tick: period(t.provider_tick_s, "provider_tick_s"),
        controller_period: period(t.controller_period_s, "controller_period_s"),
        sample_period: period(t.sample_period_s, "sample_period_s"),
        deprovision_latency: period(t.deprovision_latency_s, "deprovision_latency_s"),
    };

    let p = &file.pool;
    if p.gpu_schedds == 0 || p.cpu_schedds == 0 {
        errors.push("pool", "needs at least one schedd of each kind");
    }
    if p.cpu_slots_per_instance < 2 {
        errors.push("pool.cpu_slots_per_instance", "must be at least 2");
    }
    if p.leaves_per_region == 0 {
        errors.push("pool.leaves_per_region", "must be positive");
    }
    let pool = PoolConfig {
        gpu_schedds: p.gpu_schedds,
        cpu_schedds: p.cpu_schedds,
        schedd_cap: p.schedd_cap,
        leaves_per_region: p.leaves_per_region,
        registration_service: Duration::from_millis(p.registration_service_ms),
        forward_latency: Duration::from_millis(p.forward_latency_ms),
        cpu_slots_per_instance: p.cpu_slots_per_instance,
        prefetch_bug: p.prefetch_bug,
    };

    let w = &file.workload;
    let workload = WorkloadPlan {
        batches,
        cpu_jobs: w.cpu_jobs,
        size_factor: w.size_factor,
        jitter: w.jitter,
        input_bytes: (w.input_gb * 1e9).max(0.0) as u64,
        output_bytes: (w.output_gb * 1e9).max(0.0) as u64,
    };

    let horizon = time(file.horizon_min, "horizon_min".into(), errors);
    let shutdown = time(file.shutdown.at_min, "shutdown.at_min".into(), errors);
    Some(Scenario {
        name: file.name,
        seed: file.seed,
        horizon,
        perf,
        pool,
        timing,
        regions,
        plan,
        workload,
        shutdown,
        faults,
        operator,
        scale: 1.0,
    })
}
