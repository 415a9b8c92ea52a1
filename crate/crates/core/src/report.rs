//! Run artifacts: the event trace, the pool time series, the provisioning
//! audit, the peak and totals tables and a `key=value` summary.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::check::{Acceptance, RunFigures};
use crate::economics::{peak_report, totals_report, EconomicsError, PeakReport, PriceBook, TotalsReport};
use crate::providers::AuditRecord;
use crate::sim::{RunOutput, Sample};
use crate::trace::{EventTrace, TraceError};
use crate::workload::PerfTable;

pub const TRACE_FILE: &str = "trace.csv";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const AUDIT_FILE: &str = "audit.csv";
pub const PEAK_FILE: &str = "peak.csv";
pub const TOTALS_FILE: &str = "totals.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

pub const TIMESERIES_HEADER: &str = "t,running_gpu_jobs,idle_gpu_jobs,running_instances,pflops32";
pub const AUDIT_HEADER: &str = "t,group_id,flavor,region,action,count";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Trace { path: PathBuf, source: TraceError },
    #[error("{}: {msg}", path.display())]
    Summary { path: PathBuf, msg: String },
    #[error(transparent)]
    Economics(#[from] EconomicsError),
}

/// Files written by [`emit_outputs`], in write order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

pub fn write_timeseries<W: Write>(samples: &[Sample], mut out: W) -> io::Result<()> {
    writeln!(out, "{TIMESERIES_HEADER}")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{:.4}",
            s.at, s.running_gpu_jobs, s.idle_gpu_jobs, s.running_instances, s.pflops32
        )?;
    }
    out.flush()
}

pub fn write_audit<W: Write>(audit: &[AuditRecord], trace: &EventTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "{AUDIT_HEADER}")?;
    for a in audit {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            a.at,
            a.group.map_or_else(|| "-".to_string(), |g| g.0.to_string()),
            a.flavor.map_or_else(|| "-".to_string(), |f| f.to_string()),
            trace.region_name(a.region),
            a.action,
            a.count
        )?;
    }
    out.flush()
}

/// Ordered `key=value` lines. Values never contain newlines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub fields: Vec<(String, String)>,
}

impl Summary {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        self.fields.push((key.into(), value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut s = Summary::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            s.fields.push((k.to_string(), v.to_string()));
        }
        Ok(s)
    }
}

pub fn summarize(
    out: &RunOutput,
    size_factor: f64,
    peak: &PeakReport,
    totals: &TotalsReport,
    acceptance: Option<&Acceptance>,
) -> Summary {
    let mut s = Summary::default();
    let m = &out.metrics;
    s.set("scenario", &out.scenario);
    s.set("seed", out.seed);
    s.set("scale", out.scale);
    s.set("regions", out.trace.regions().join(","));
    s.set("size_factor", size_factor);
    s.set("horizon_s", out.horizon);
    s.set("shutdown_s", out.shutdown_at);
    s.set("trace_records", out.trace.len());
    s.set("peak_at_s", peak.at);
    s.set("peak_instances", peak.total_count);
    s.set("peak_pflops32", format!("{:.3}", peak.total_pflops32));
    s.set("peak_cost_per_hour", format!("{:.2}", peak.total_cost_per_hour));
    s.set("walltime_h", format!("{:.1}", totals.total_walltime_h));
    s.set("pflop32_h", format!("{:.3}", totals.total_pflop32_h));
    s.set("cost_usd", format!("{:.2}", totals.total_cost));
    s.set("rogue_cost_usd", format!("{:.2}", totals.rogue_cost));
    s.set("science_units", format!("{:.3}", totals.total_science));
    s.set("completed_gpu_jobs", totals.completed_gpu_jobs);
    s.set("preemptions", m.preemptions);
    s.set("preempted_gpu_attempts", totals.preempted_attempts);
    s.set("rogues_spawned", m.rogues_spawned);
    s.set("groups_created", m.groups_created);
    s.set("max_running_per_schedd", m.max_running_per_schedd);
    s.set("max_leaf_backlog_ms", m.max_leaf_backlog.as_millis());
    s.set("locality_violations", m.locality_violations);
    s.set("final_billable", m.final_billable);
    if let Some(acc) = acceptance {
        s.set("accepted", acc.passed());
        for c in &acc.criteria {
            s.set(format!("check.{}", c.name), if c.passed { "PASS" } else { "FAIL" });
            s.set(format!("check.{}.detail", c.name), &c.detail);
        }
    }
    s
}

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    File::create(path).map(BufWriter::new).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

fn csv_at(path: &Path) -> impl FnOnce(EconomicsError) -> ReportError + '_ {
    move |e| match e {
        EconomicsError::Io(source) => ReportError::Io { path: path.to_path_buf(), source },
        other => ReportError::Economics(other),
    }
}

/// Writes all six artifacts into `dir`, creating it if needed. Reports are
/// taken from `figures` when given, otherwise rebuilt from the trace.
pub fn emit_outputs(
    out: &RunOutput,
    perf: &PerfTable,
    size_factor: f64,
    figures: Option<&RunFigures>,
    acceptance: Option<&Acceptance>,
    dir: &Path,
) -> Result<Manifest, ReportError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let (peak, totals) = match figures {
        Some(f) => (f.peak.clone(), f.totals.clone()),
        None => {
            let prices = PriceBook::from_perf(perf);
            (peak_report(&out.trace, perf, &prices)?, totals_report(&out.trace, perf, &prices, size_factor)?)
        }
    };
    let mut files = Vec::new();

    let p = dir.join(TRACE_FILE);
    out.trace.write_csv(create(&p)?).map_err(io_at(&p))?;
    files.push(p);

    let p = dir.join(TIMESERIES_FILE);
    write_timeseries(&out.samples, create(&p)?).map_err(io_at(&p))?;
    files.push(p);

    let p = dir.join(AUDIT_FILE);
    write_audit(&out.audit, &out.trace, create(&p)?).map_err(io_at(&p))?;
    files.push(p);

    let p = dir.join(PEAK_FILE);
    peak.write_csv(create(&p)?).map_err(csv_at(&p))?;
    files.push(p);

    let p = dir.join(TOTALS_FILE);
    totals.write_csv(create(&p)?).map_err(csv_at(&p))?;
    files.push(p);

    let p = dir.join(SUMMARY_FILE);
    let mut w = create(&p)?;
    let summary = summarize(out, size_factor, &peak, &totals, acceptance);
    w.write_all(summary.to_text().as_bytes()).and_then(|_| w.flush()).map_err(io_at(&p))?;
    files.push(p);

    Ok(Manifest { dir: dir.to_path_buf(), files })
}

/// Reads a run directory back and rebuilds the peak and totals tables from
/// its trace. Region names and the Small-input factor come from the summary.
pub fn rebuild(dir: &Path, perf: &PerfTable) -> Result<(Summary, PeakReport, TotalsReport), ReportError> {
    let p = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&p).map_err(io_at(&p))?;
    let summary = Summary::parse(&text).map_err(|msg| ReportError::Summary { path: p.clone(), msg })?;
    let regions: Vec<String> = summary
        .get("regions")
        .ok_or_else(|| ReportError::Summary { path: p.clone(), msg: "missing `regions`".into() })?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    let size_factor: f64 = summary
        .get("size_factor")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ReportError::Summary { path: p.clone(), msg: "missing or bad `size_factor`".into() })?;

    let p = dir.join(TRACE_FILE);
    let f = File::open(&p).map_err(io_at(&p))?;
    let trace = EventTrace::read_csv_with_regions(BufReader::new(f), &regions)
        .map_err(|source| ReportError::Trace { path: p.clone(), source })?;
    let prices = PriceBook::from_perf(perf);
    let peak = peak_report(&trace, perf, &prices)?;
    let totals = totals_report(&trace, perf, &prices, size_factor)?;
    Ok((summary, peak, totals))
}
