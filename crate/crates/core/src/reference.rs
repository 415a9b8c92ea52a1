//! Observed figures of the full-size exercise that the replay scenario is
//! calibrated against, with the tolerances used by [`crate::check`].

use std::time::Duration;

use crate::workload::GpuModel;

/// Instances per model at the peak.
pub const PEAK_COUNTS: [(GpuModel, u32); 8] = [
    (GpuModel::V100, 9200),
    (GpuModel::P100, 7100),
    (GpuModel::P40, 2100),
    (GpuModel::T4, 4600),
    (GpuModel::P4, 500),
    (GpuModel::M60, 10100),
    (GpuModel::K80, 12500),
    (GpuModel::K520, 5400),
];
pub const PEAK_TOTAL: u32 = 51_500;
pub const PEAK_COUNT_TOL: f64 = 0.02;

pub const PEAK_PFLOPS32: f64 = 379.4;
pub const PEAK_PFLOPS32_TOL: f64 = 0.05;

/// USD per hour at the peak.
pub const PEAK_COST_PER_HOUR: f64 = 19_600.0;
pub const PEAK_COST_TOL: f64 = 0.05;

/// Fraction of the peak instance count, and the time it was first reached.
pub const MILESTONES: [(f64, Duration); 2] =
    [(0.65, Duration::from_secs(30 * 60)), (0.90, Duration::from_secs(70 * 60))];
pub const MILESTONE_TOL: Duration = Duration::from_secs(5 * 60);

pub const TOTAL_WALLTIME_H: f64 = 97_300.0;
pub const TOTAL_PFLOP32_H: f64 = 734.7;
pub const TOTALS_TOL: f64 = 0.05;

/// PFLOP32-hours per model over the whole run. The rows add up to 743.6,
/// not to [`TOTAL_PFLOP32_H`]; both are checked as published.
pub const PFLOP32_HOURS: [(GpuModel, f64); 8] = [
    (GpuModel::V100, 260.7),
    (GpuModel::P100, 152.8),
    (GpuModel::P40, 51.5),
    (GpuModel::T4, 61.4),
    (GpuModel::P4, 3.6),
    (GpuModel::M60, 121.3),
    (GpuModel::K80, 76.2),
    (GpuModel::K520, 16.1),
];
pub const PER_MODEL_TOL: f64 = 0.10;

/// Science-fraction windows for the fastest and the oldest models.
pub const FAST_MODELS: [GpuModel; 2] = [GpuModel::V100, GpuModel::T4];
pub const FAST_SCIENCE: (f64, f64) = (0.45, 0.55);
pub const OLD_MODELS: [GpuModel; 2] = [GpuModel::K80, GpuModel::K520];
pub const OLD_SCIENCE: (f64, f64) = (0.05, 0.11);

/// Preemptions per running instance-hour.
pub const PREEMPTION_RATE: f64 = 0.02;
pub const PREEMPTION_TOL: f64 = 0.005;

/// Max/min running jobs across schedds while all of them are backlogged.
pub const FAIRNESS_MAX: f64 = 1.15;
pub const LEAF_BACKLOG_MAX: Duration = Duration::from_secs(60);
