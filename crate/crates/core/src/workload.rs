//! Job and GPU performance model.
//!
//! Per-model runtimes and fp32 peak throughput come from a versioned CSV
//! table (`data/gpu_perf.csv`, compiled in as the default). Jobs read their
//! inputs from a storage endpoint in the region they execute in; which
//! regions hold input replicas is described by the [`InputCatalog`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::RegionIdx;
use crate::rng::RngStream;

const BUILTIN_PERF_TABLE: &str = include_str!("../data/gpu_perf.csv");

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("unknown GPU model `{0}`")]
    UnknownGpuModel(String),
    #[error("unknown input class `{0}`")]
    UnknownInputClass(String),
    #[error("no storage endpoint for region {0}")]
    NoEndpointForRegion(RegionIdx),
    #[error("performance table row {row}: {msg}")]
    InvalidEntry { row: usize, msg: String },
    #[error("performance table: {0}")]
    Csv(#[from] csv::Error),
}

/// GPU models the simulator knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GpuModel {
    V100,
    P100,
    P40,
    T4,
    P4,
    M60,
    K80,
    K520,
    #[serde(rename = "GTX1080")]
    Gtx1080,
}

impl GpuModel {
    pub const ALL: [GpuModel; 9] = [
        GpuModel::V100,
        GpuModel::P100,
        GpuModel::P40,
        GpuModel::T4,
        GpuModel::P4,
        GpuModel::M60,
        GpuModel::K80,
        GpuModel::K520,
        GpuModel::Gtx1080,
    ];
    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GpuModel::V100 => "V100",
            GpuModel::P100 => "P100",
            GpuModel::P40 => "P40",
            GpuModel::T4 => "T4",
            GpuModel::P4 => "P4",
            GpuModel::M60 => "M60",
            GpuModel::K80 => "K80",
            GpuModel::K520 => "K520",
            GpuModel::Gtx1080 => "GTX1080",
        }
    }
}

impl fmt::Display for GpuModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GpuModel {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GpuModel::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| WorkloadError::UnknownGpuModel(s.to_string()))
    }
}

/// Which input file set a GPU job processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InputClass {
    Standard,
    Small,
}

impl InputClass {
    pub fn name(self) -> &'static str {
        match self {
            InputClass::Standard => "Standard",
            InputClass::Small => "Small",
        }
    }
}

impl fmt::Display for InputClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputClass {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Standard" => Ok(InputClass::Standard),
            "Small" => Ok(InputClass::Small),
            other => Err(WorkloadError::UnknownInputClass(other.to_string())),
        }
    }
}

/// Opportunistic-market list price range for instances carrying one GPU model,
/// in USD per instance-hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceRange {
    pub min: f64,
    pub max: f64,
    /// Point value used for accrual.
    pub point: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpuPerfEntry {
    pub model: GpuModel,
    /// Runtime of one reference (Standard) job, in minutes.
    pub runtime_standard_min: f64,
    pub peak_tflops32: f64,
    /// Runtime efficacy relative to nominal fp32 peak; reporting only.
    pub efficacy_correlation: f64,
    pub price: Option<PriceRange>,
}

#[derive(Debug, Deserialize)]
struct PerfRow {
    model: String,
    runtime_min: f64,
    tflops32: f64,
    corr: f64,
    price_min: Option<f64>,
    price_max: Option<f64>,
    price_point: Option<f64>,
}

/// GPU performance and price table, one row per model.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfTable {
    entries: [Option<GpuPerfEntry>; GpuModel::COUNT],
}

impl PerfTable {
    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_csv(BUILTIN_PERF_TABLE.as_bytes()).expect("builtin performance table is valid")
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self, WorkloadError> {
        let mut entries: [Option<GpuPerfEntry>; GpuModel::COUNT] = Default::default();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (i, row) in rdr.deserialize::<PerfRow>().enumerate() {
            let row = row?;
            let model: GpuModel = row.model.parse()?;
            let invalid = |msg: &str| WorkloadError::InvalidEntry { row: i + 1, msg: msg.to_string() };
            if !(row.runtime_min > 0.0 && row.tflops32 > 0.0 && row.corr > 0.0) {
                return Err(invalid("runtime, tflops32 and corr must be positive"));
            }
            let price = match (row.price_min, row.price_max, row.price_point) {
                (None, None, None) => None,
                (Some(min), Some(max), Some(point)) => {
                    if !(min > 0.0 && min <= point && point <= max) {
                        return Err(invalid("price must satisfy 0 < min <= point <= max"));
                    }
                    Some(PriceRange { min, max, point })
                }
                _ => return Err(invalid("price columns must be all present or all empty")),
            };
            if entries[model.index()].is_some() {
                return Err(invalid("duplicate model"));
            }
            entries[model.index()] = Some(GpuPerfEntry {
                model,
                runtime_standard_min: row.runtime_min,
                peak_tflops32: row.tflops32,
                efficacy_correlation: row.corr,
                price,
            });
        }
        Ok(Self { entries })
    }

    pub fn entry(&self, model: GpuModel) -> Result<&GpuPerfEntry, WorkloadError> {
        self.entries[model.index()]
            .as_ref()
            .ok_or_else(|| WorkloadError::UnknownGpuModel(model.name().to_string()))
    }

    pub fn entries(&self) -> impl Iterator<Item = &GpuPerfEntry> {
        self.entries.iter().flatten()
    }

    pub fn tflops32(&self, model: GpuModel) -> Result<f64, WorkloadError> {
        Ok(self.entry(model)?.peak_tflops32)
    }

    /// Aggregate fp32 peak, in PFLOP32s, of a multiset of GPUs.
    pub fn pflops32_of<I>(&self, gpus: I) -> Result<f64, WorkloadError>
    where
        I: IntoIterator<Item = (GpuModel, u64)>,
    {
        gpus.into_iter().try_fold(0.0, |acc, (model, count)| {
            Ok(acc + count as f64 * self.tflops32(model)? / 1000.0)
        })
    }
}

/// Work done by completed jobs, in Standard-job equivalents.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct ScienceUnits(pub f64);

impl std::ops::AddAssign for ScienceUnits {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

/// Input classes, their relative size and where their replicas live.
#[derive(Debug, Clone, PartialEq)]
pub struct InputCatalog {
    /// Work of a Small job relative to a Standard one.
    pub size_factor: f64,
    pub replicas: BTreeMap<InputClass, BTreeSet<RegionIdx>>,
}

impl InputCatalog {
    pub fn factor(&self, class: InputClass) -> f64 {
        match class {
            InputClass::Standard => 1.0,
            InputClass::Small => self.size_factor,
        }
    }

    pub fn replica_regions(&self, class: InputClass) -> Option<&BTreeSet<RegionIdx>> {
        self.replicas.get(&class)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageEndpoint {
    pub region: RegionIdx,
    /// Aggregate read bandwidth, bits per second.
    pub read_bps: f64,
    /// Aggregate write bandwidth, bits per second.
    pub write_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Read,
    Write,
}

/// Region to storage endpoint lookup table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StorageTable {
    endpoints: BTreeMap<RegionIdx, StorageEndpoint>,
}

impl StorageTable {
    pub fn insert(&mut self, endpoint: StorageEndpoint) {
        self.endpoints.insert(endpoint.region, endpoint);
    }

    pub fn resolve_storage(&self, region: RegionIdx) -> Result<&StorageEndpoint, WorkloadError> {
        self.endpoints
            .get(&region)
            .ok_or(WorkloadError::NoEndpointForRegion(region))
    }
}

/// Seconds to move `bytes` through `endpoint`.
pub fn transfer_time(bytes: u64, endpoint: &StorageEndpoint, direction: Direction) -> f64 {
    if bytes == 0 {
        return 0.0;
    }
    let bps = match direction {
        Direction::Read => endpoint.read_bps,
        Direction::Write => endpoint.write_bps,
    };
    bytes as f64 * 8.0 / bps
}

/// Everything needed to time and credit a GPU job.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub perf: PerfTable,
    pub catalog: InputCatalog,
    pub storage: StorageTable,
    /// Half-width of the uniform multiplicative runtime jitter (0.05 = ±5%).
    pub jitter: f64,
    /// Input bytes fetched by a Standard job (Small jobs scale by the size factor).
    pub input_bytes: u64,
    pub output_bytes: u64,
}

impl Workload {
    /// Nominal runtime in seconds, without jitter.
    pub fn runtime_for(&self, model: GpuModel, class: InputClass) -> Result<f64, WorkloadError> {
        let entry = self.perf.entry(model)?;
        Ok(entry.runtime_standard_min * 60.0 * self.catalog.factor(class))
    }

    /// Runtime with the seeded multiplicative jitter applied.
    pub fn sample_runtime(
        &self,
        model: GpuModel,
        class: InputClass,
        rng: &mut RngStream,
    ) -> Result<f64, WorkloadError> {
        let base = self.runtime_for(model, class)?;
        let jitter = 1.0 + self.jitter * (2.0 * rng.unit() - 1.0);
        Ok(base * jitter)
    }

    /// Science credited for a job reaching a terminal state.
    pub fn science_output(
        &self,
        model: GpuModel,
        class: InputClass,
        completed: bool,
    ) -> Result<ScienceUnits, WorkloadError> {
        self.perf.entry(model)?;
        Ok(ScienceUnits(if completed { self.catalog.factor(class) } else { 0.0 }))
    }

    /// Stage-in plus stage-out time for one job executing in `region`.
    pub fn io_time(&self, region: RegionIdx, class: InputClass) -> Result<f64, WorkloadError> {
        let endpoint = self.storage.resolve_storage(region)?;
        let factor = self.catalog.factor(class);
        let input = (self.input_bytes as f64 * factor) as u64;
        let output = (self.output_bytes as f64 * factor) as u64;
        Ok(transfer_time(input, endpoint, Direction::Read)
            + transfer_time(output, endpoint, Direction::Write))
    }
}
