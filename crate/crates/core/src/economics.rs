//! Spot-price book, cost ledger and the peak / totals reports.
//!
//! Reports are pure functions of a finished [`EventTrace`]: instance counts
//! and billable spans are rebuilt from the `instance_state` records and
//! science credit from the `job_end` records.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io;

use thiserror::Error;

use crate::engine::{EventKind, SimTime};
use crate::ids::{InstanceId, RegionIdx};
use crate::pool::{JobClass, JobOutcome};
use crate::providers::{BillingInterval, InstanceState};
use crate::trace::EventTrace;
use crate::workload::{GpuModel, InputClass, PerfTable, PriceRange};

#[derive(Debug, Error)]
pub enum EconomicsError {
    #[error("no price for GPU model {0}")]
    UnknownGpuModel(GpuModel),
    #[error("interval {start}..{end} overlaps an earlier entry for instance {instance}")]
    OverlappingInterval { instance: InstanceId, start: SimTime, end: SimTime },
    #[error("trace has no records")]
    EmptyTrace,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Market {
    Opportunistic,
    OnDemand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceBook {
    ranges: [Option<PriceRange>; GpuModel::COUNT],
    pub on_demand_multiplier: f64,
}

impl PriceBook {
    pub const DEFAULT_ON_DEMAND_MULTIPLIER: f64 = 3.0;

    pub fn from_perf(perf: &PerfTable) -> Self {
        let mut ranges: [Option<PriceRange>; GpuModel::COUNT] = Default::default();
        for e in perf.entries() {
            ranges[e.model.index()] = e.price;
        }
        Self { ranges, on_demand_multiplier: Self::DEFAULT_ON_DEMAND_MULTIPLIER }
    }

    pub fn range(&self, model: GpuModel) -> Result<&PriceRange, EconomicsError> {
        self.ranges[model.index()].as_ref().ok_or(EconomicsError::UnknownGpuModel(model))
    }

    /// USD per instance-hour.
    pub fn hourly_price(&self, model: GpuModel, market: Market) -> Result<f64, EconomicsError> {
        let point = self.range(model)?.point;
        Ok(match market {
            Market::Opportunistic => point,
            Market::OnDemand => point * self.on_demand_multiplier,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    pub instance: InstanceId,
    pub gpu: GpuModel,
    pub region: RegionIdx,
    pub start: SimTime,
    pub end: SimTime,
    /// USD per hour.
    pub rate: f64,
    pub rogue: bool,
}

impl LedgerEntry {
    pub fn hours(&self) -> f64 {
        (self.end - self.start).as_secs_f64() / 3600.0
    }

    pub fn cost(&self) -> f64 {
        self.rate * self.hours()
    }
}

/// Billed intervals with their rates. Intervals of one instance never overlap.
#[derive(Debug, Clone)]
pub struct CostLedger {
    prices: PriceBook,
    market: Market,
    entries: Vec<LedgerEntry>,
    spans: HashMap<InstanceId, Vec<(SimTime, SimTime)>>,
}

impl CostLedger {
    pub fn new(prices: PriceBook, market: Market) -> Self {
        Self { prices, market, entries: Vec::new(), spans: HashMap::new() }
    }

    /// Bills one interval at the model's hourly price. Returns its cost.
    pub fn accrue(&mut self, interval: &BillingInterval) -> Result<f64, EconomicsError> {
        let rate = self.prices.hourly_price(interval.gpu, self.market)?;
        let spans = self.spans.entry(interval.instance).or_default();
        if spans.iter().any(|&(s, e)| interval.start < e && s < interval.end) {
            return Err(EconomicsError::OverlappingInterval {
                instance: interval.instance,
                start: interval.start,
                end: interval.end,
            });
        }
        spans.push((interval.start, interval.end));
        let entry = LedgerEntry {
            instance: interval.instance,
            gpu: interval.gpu,
            region: interval.region,
            start: interval.start,
            end: interval.end,
            rate,
            rogue: interval.rogue,
        };
        self.entries.push(entry);
        Ok(entry.cost())
    }

    /// Rebuilds the ledger from the billable spans recorded in a trace.
    /// Spans still open at the end of the trace are closed there.
    pub fn from_trace(trace: &EventTrace, prices: PriceBook, market: Market) -> Result<Self, EconomicsError> {
        let mut ledger = Self::new(prices, market);
        let mut open: BTreeMap<InstanceId, (SimTime, GpuModel, RegionIdx, bool)> = BTreeMap::new();
        for ev in trace.records() {
            let EventKind::InstanceState(t) = ev.kind else { continue };
            match (t.from.billable(), t.to.billable()) {
                (false, true) => {
                    open.insert(t.instance, (ev.at, t.gpu, t.region, t.rogue));
                }
                (true, false) => {
                    if let Some((start, gpu, region, rogue)) = open.remove(&t.instance) {
                        ledger.accrue(&BillingInterval { instance: t.instance, gpu, region, rogue, start, end: ev.at })?;
                    }
                }
                _ => {}
            }
        }
        let end = trace.end_time();
        for (instance, (start, gpu, region, rogue)) in open {
            ledger.accrue(&BillingInterval { instance, gpu, region, rogue, start, end })?;
        }
        Ok(ledger)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(LedgerEntry::cost).fold(0.0, |a, b| a + b)
    }

    pub fn rogue_total(&self) -> f64 {
        self.entries.iter().filter(|e| e.rogue).map(LedgerEntry::cost).fold(0.0, |a, b| a + b)
    }

    pub fn by_model(&self) -> [f64; GpuModel::COUNT] {
        let mut out = [0.0; GpuModel::COUNT];
        for e in &self.entries {
            out[e.gpu.index()] += e.cost();
        }
        out
    }

    pub fn by_region(&self) -> BTreeMap<RegionIdx, f64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.region).or_insert(0.0) += e.cost();
        }
        out
    }
}

/// Non-rogue `Running` instances per model, replayed from a trace.
#[derive(Debug, Clone, Default)]
struct RunningCounter {
    counts: [u32; GpuModel::COUNT],
}

impl RunningCounter {
    /// Applies one record; returns true if the count changed.
    fn apply(&mut self, kind: &EventKind) -> bool {
        let EventKind::InstanceState(t) = kind else { return false };
        if t.rogue {
            return false;
        }
        let c = &mut self.counts[t.gpu.index()];
        if t.to == InstanceState::Running {
            *c += 1;
            true
        } else if t.from == InstanceState::Running {
            *c -= 1;
            true
        } else {
            false
        }
    }

    fn total(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// Non-rogue running instances after every change, as `(time, count)`.
pub fn running_series(trace: &EventTrace) -> Vec<(SimTime, u32)> {
    let mut counter = RunningCounter::default();
    let mut out: Vec<(SimTime, u32)> = Vec::new();
    for ev in trace.records() {
        if counter.apply(&ev.kind) {
            match out.last_mut() {
                Some(last) if last.0 == ev.at => last.1 = counter.total(),
                _ => out.push((ev.at, counter.total())),
            }
        }
    }
    out
}

/// First instant at which at least `fraction` of `peak` instances run.
pub fn first_crossing(series: &[(SimTime, u32)], peak: u32, fraction: f64) -> Option<SimTime> {
    let level = (f64::from(peak) * fraction).ceil() as u32;
    series.iter().find(|&&(_, n)| n >= level).map(|&(t, _)| t)
}

/// Instance-hours spent `Running`, rogues included or not.
pub fn running_hours(trace: &EventTrace, include_rogue: bool) -> f64 {
    let mut running = 0u64;
    let mut acc = 0u128;
    let mut last = SimTime::ZERO;
    for ev in trace.records() {
        acc += u128::from((ev.at - last).as_millis() as u64) * u128::from(running);
        last = ev.at;
        if let EventKind::InstanceState(t) = ev.kind {
            if t.rogue && !include_rogue {
                continue;
            }
            if t.to == InstanceState::Running {
                running += 1;
            } else if t.from == InstanceState::Running {
                running -= 1;
            }
        }
    }
    acc as f64 / 3_600_000.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakRow {
    pub model: GpuModel,
    pub count: u32,
    pub pflops32: f64,
    pub price_min: f64,
    pub price_max: f64,
    pub cost_per_hour: f64,
}

/// Pool composition at the instant of the most running instances.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakReport {
    pub at: SimTime,
    pub rows: Vec<PeakRow>,
    pub total_count: u32,
    pub total_pflops32: f64,
    pub total_cost_per_hour: f64,
}

pub fn peak_report(trace: &EventTrace, perf: &PerfTable, prices: &PriceBook) -> Result<PeakReport, EconomicsError> {
    if trace.is_empty() {
        return Err(EconomicsError::EmptyTrace);
    }
    let mut counter = RunningCounter::default();
    let mut best = (0u32, SimTime::ZERO, counter.counts);
    for ev in trace.records() {
        if counter.apply(&ev.kind) && counter.total() > best.0 {
            best = (counter.total(), ev.at, counter.counts);
        }
    }
    let (_, at, counts) = best;
    let mut rows = Vec::new();
    for model in GpuModel::ALL {
        let count = counts[model.index()];
        if count == 0 {
            continue;
        }
        let tf = perf.tflops32(model).map_err(|_| EconomicsError::UnknownGpuModel(model))?;
        let range = prices.range(model)?;
        rows.push(PeakRow {
            model,
            count,
            pflops32: f64::from(count) * tf / 1000.0,
            price_min: range.min,
            price_max: range.max,
            cost_per_hour: f64::from(count) * prices.hourly_price(model, Market::Opportunistic)?,
        });
    }
    Ok(PeakReport {
        at,
        total_count: rows.iter().map(|r| r.count).sum(),
        total_pflops32: rows.iter().map(|r| r.pflops32).fold(0.0, |a, b| a + b),
        total_cost_per_hour: rows.iter().map(|r| r.cost_per_hour).fold(0.0, |a, b| a + b),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalsRow {
    pub model: GpuModel,
    pub walltime_h: f64,
    pub pflop32_h: f64,
    pub cost: f64,
    pub science: f64,
    pub walltime_frac: f64,
    pub cost_frac: f64,
    pub science_frac: f64,
}

/// Integrals over the whole run, per model and in total.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalsReport {
    pub rows: Vec<TotalsRow>,
    pub total_walltime_h: f64,
    pub total_pflop32_h: f64,
    pub total_cost: f64,
    pub rogue_cost: f64,
    pub total_science: f64,
    pub completed_gpu_jobs: u64,
    pub preempted_attempts: u64,
}

impl TotalsReport {
    pub fn row(&self, model: GpuModel) -> Option<&TotalsRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    /// Summed science fraction of a set of models.
    pub fn science_fraction(&self, models: &[GpuModel]) -> f64 {
        self.rows.iter().filter(|r| models.contains(&r.model)).map(|r| r.science_frac).fold(0.0, |a, b| a + b)
    }
}

fn frac(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        part / whole
    } else {
        0.0
    }
}

/// `small_factor` is the science credit of one completed Small job.
pub fn totals_report(
    trace: &EventTrace,
    perf: &PerfTable,
    prices: &PriceBook,
    small_factor: f64,
) -> Result<TotalsReport, EconomicsError> {
    if trace.is_empty() {
        return Err(EconomicsError::EmptyTrace);
    }
    let mut counter = RunningCounter::default();
    let mut running_ms = [0u128; GpuModel::COUNT];
    let mut science = [0.0; GpuModel::COUNT];
    let mut last = SimTime::ZERO;
    let (mut completed, mut preempted) = (0u64, 0u64);
    for ev in trace.records() {
        let dt = u128::from((ev.at - last).as_millis() as u64);
        for (acc, &c) in running_ms.iter_mut().zip(&counter.counts) {
            *acc += dt * u128::from(c);
        }
        last = ev.at;
        counter.apply(&ev.kind);
        if let EventKind::JobEnded { class: JobClass::Gpu, input, gpu: Some(gpu), outcome } = ev.kind {
            match outcome {
                JobOutcome::Completed => {
                    completed += 1;
                    science[gpu.index()] += match input {
                        Some(InputClass::Small) => small_factor,
                        _ => 1.0,
                    };
                }
                JobOutcome::Preempted => preempted += 1,
                JobOutcome::Removed => {}
            }
        }
    }
    let ledger = CostLedger::from_trace(trace, prices.clone(), Market::Opportunistic)?;
    let cost = ledger.by_model();

    let mut rows = Vec::new();
    for model in GpuModel::ALL {
        let i = model.index();
        let walltime_h = running_ms[i] as f64 / 3_600_000.0;
        if walltime_h == 0.0 && cost[i] == 0.0 && science[i] == 0.0 {
            continue;
        }
        let tf = perf.tflops32(model).map_err(|_| EconomicsError::UnknownGpuModel(model))?;
        rows.push(TotalsRow {
            model,
            walltime_h,
            pflop32_h: walltime_h * tf / 1000.0,
            cost: cost[i],
            science: science[i],
            walltime_frac: 0.0,
            cost_frac: 0.0,
            science_frac: 0.0,
        });
    }
    let total_walltime_h = rows.iter().map(|r| r.walltime_h).fold(0.0, |a, b| a + b);
    let total_cost = rows.iter().map(|r| r.cost).fold(0.0, |a, b| a + b);
    let total_science = rows.iter().map(|r| r.science).fold(0.0, |a, b| a + b);
    for r in &mut rows {
        r.walltime_frac = frac(r.walltime_h, total_walltime_h);
        r.cost_frac = frac(r.cost, total_cost);
        r.science_frac = frac(r.science, total_science);
    }
    Ok(TotalsReport {
        total_pflop32_h: rows.iter().map(|r| r.pflop32_h).sum(),
        rogue_cost: ledger.rogue_total(),
        rows,
        total_walltime_h,
        total_cost,
        total_science,
        completed_gpu_jobs: completed,
        preempted_attempts: preempted,
    })
}

fn pct(part: f64, whole: f64) -> String {
    format!("{:.0}%", 100.0 * frac(part, whole))
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, cell)| if c == 0 { format!("{cell:<w$}", w = widths[c]) } else { format!("{cell:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

impl PeakReport {
    pub fn to_text(&self) -> String {
        let mut rows = vec![vec![
            "GPU type".to_string(),
            "Price range (list)".into(),
            "Count at peak".into(),
            "PFLOP32s at peak".into(),
            "Est. list price at peak".into(),
        ]];
        for r in &self.rows {
            rows.push(vec![
                r.model.to_string(),
                format!("${:.2}-${:.2}", r.price_min, r.price_max),
                format!("{} ({})", r.count, pct(f64::from(r.count), f64::from(self.total_count))),
                format!("{:.1} ({})", r.pflops32, pct(r.pflops32, self.total_pflops32)),
                format!("${:.0}/h", r.cost_per_hour),
            ]);
        }
        rows.push(vec![
            "Total".into(),
            String::new(),
            self.total_count.to_string(),
            format!("{:.1}", self.total_pflops32),
            format!("${:.0}/h", self.total_cost_per_hour),
        ]);
        format!("Peak at t={} s\n{}", self.at, align(&rows))
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), EconomicsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "count", "pflops32", "price_min", "price_max", "cost_per_hour"])?;
        for r in &self.rows {
            w.write_record([
                r.model.to_string(),
                r.count.to_string(),
                format!("{:.3}", r.pflops32),
                format!("{:.3}", r.price_min),
                format!("{:.3}", r.price_max),
                format!("{:.2}", r.cost_per_hour),
            ])?;
        }
        w.write_record([
            "Total".to_string(),
            self.total_count.to_string(),
            format!("{:.3}", self.total_pflops32),
            String::new(),
            String::new(),
            format!("{:.2}", self.total_cost_per_hour),
        ])?;
        w.flush()?;
        Ok(())
    }
}

impl TotalsReport {
    pub fn to_text(&self) -> String {
        let mut rows = vec![vec![
            "GPU type".to_string(),
            "Walltime (h)".into(),
            "PFLOP32 hours".into(),
            "Cost".into(),
            "Science".into(),
        ]];
        for r in &self.rows {
            rows.push(vec![
                r.model.to_string(),
                format!("{:.0} ({})", r.walltime_h, pct(r.walltime_h, self.total_walltime_h)),
                format!("{:.1} ({})", r.pflop32_h, pct(r.pflop32_h, self.total_pflop32_h)),
                format!("${:.0} ({})", r.cost, pct(r.cost, self.total_cost)),
                format!("{:.1} ({})", r.science, pct(r.science, self.total_science)),
            ]);
        }
        rows.push(vec![
            "Total".into(),
            format!("{:.0}", self.total_walltime_h),
            format!("{:.1}", self.total_pflop32_h),
            format!("${:.0}", self.total_cost),
            format!("{:.1}", self.total_science),
        ]);
        let mut s = align(&rows);
        let _ = writeln!(s, "Rogue cost: ${:.2}", self.rogue_cost);
        s
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), EconomicsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "model",
            "walltime_h",
            "pflop32_h",
            "cost_usd",
            "science_units",
            "walltime_frac",
            "cost_frac",
            "science_frac",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.model.to_string(),
                format!("{:.3}", r.walltime_h),
                format!("{:.3}", r.pflop32_h),
                format!("{:.2}", r.cost),
                format!("{:.3}", r.science),
                format!("{:.4}", r.walltime_frac),
                format!("{:.4}", r.cost_frac),
                format!("{:.4}", r.science_frac),
            ])?;
        }
        w.write_record([
            "Total".to_string(),
            format!("{:.3}", self.total_walltime_h),
            format!("{:.3}", self.total_pflop32_h),
            format!("{:.2}", self.total_cost),
            format!("{:.3}", self.total_science),
            "1".into(),
            "1".into(),
            "1".into(),
        ])?;
        w.flush()?;
        Ok(())
    }
}
