//! Acceptance checks of a finished run against [`crate::reference`], plus
//! trace audits shared by the test suite.
//!
//! Runs at a reduced scale compare against the reference figures times the
//! scale, with relative tolerances widened by the extra counting noise:
//! `tol + 3/sqrt(n * scale) - 3/sqrt(n)`. At scale 1 the tolerances are the
//! reference ones.

use std::collections::HashMap;
use std::fmt;
use std::time::Duration;

use crate::economics::{
    first_crossing, peak_report, running_hours, running_series, totals_report, EconomicsError, PeakReport, PriceBook,
    TotalsReport,
};
use crate::engine::{EventKind, SimTime, Target};
use crate::ids::{InstanceId, JobId};
use crate::pool::{JobClass, JobOutcome};
use crate::providers::InstanceState;
use crate::reference as r;
use crate::scenario::Scenario;
use crate::sim::{RunOutput, Sample};
use crate::trace::EventTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Acceptance {
    pub criteria: Vec<Criterion>,
}

impl Acceptance {
    pub fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.criteria.push(Criterion { name, passed, detail });
    }

    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }
}

/// Relative tolerance for a quantity of `n` units at full size.
pub fn widened(tol: f64, n: f64, scale: f64) -> f64 {
    if scale >= 1.0 || n <= 0.0 {
        return tol;
    }
    tol + 3.0 / (n * scale).sqrt() - 3.0 / n.sqrt()
}

fn rel_ok(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol * target.abs()
}

fn pct(value: f64, target: f64) -> f64 {
    100.0 * (value - target) / target
}

/// Instance-state records that break the transition relation or skip a
/// state, as `(time, instance, from, to)`.
pub fn illegal_transitions(trace: &EventTrace) -> Vec<(SimTime, InstanceId, InstanceState, InstanceState)> {
    let mut state: HashMap<InstanceId, InstanceState> = HashMap::new();
    let mut bad = Vec::new();
    for ev in trace.records() {
        let EventKind::InstanceState(t) = ev.kind else { continue };
        let prev = state.get(&t.instance).copied().unwrap_or(InstanceState::Requested);
        if prev != t.from || !t.from.can_transition(t.to) {
            bad.push((ev.at, t.instance, t.from, t.to));
        }
        state.insert(t.instance, t.to);
    }
    bad
}

/// Job records out of order: an end without a start, or a start while an
/// attempt is already open.
pub fn job_sequence_errors(trace: &EventTrace) -> usize {
    let mut open: HashMap<JobId, bool> = HashMap::new();
    let mut errors = 0;
    for ev in trace.records() {
        let Target::Job(job) = ev.target else { continue };
        match ev.kind {
            EventKind::JobStarted { .. } if open.insert(job, true) == Some(true) => errors += 1,
            EventKind::JobEnded { .. } if open.insert(job, false) != Some(true) => errors += 1,
            _ => {}
        }
    }
    errors
}

/// GPU attempts ended by preemption.
pub fn preempted_attempts(trace: &EventTrace) -> u64 {
    trace
        .records()
        .iter()
        .filter(|e| {
            matches!(e.kind, EventKind::JobEnded { class: JobClass::Gpu, outcome: JobOutcome::Preempted, .. })
        })
        .count() as u64
}

/// Preemptions per running instance-hour, rogues included.
pub fn preemption_rate(out: &RunOutput) -> (u64, f64) {
    (out.metrics.preemptions, running_hours(&out.trace, true))
}

/// Worst fairness ratio over samples taken while every GPU schedd was
/// backlogged, between `from` and `to`.
pub fn steady_fairness(samples: &[Sample], from: SimTime, to: SimTime) -> Option<f64> {
    samples
        .iter()
        .filter(|s| s.at >= from && s.at < to && s.gpu_backlogged && s.running_gpu_jobs > 0)
        .map(|s| s.gpu_fairness)
        .fold(None, |m, f| Some(m.map_or(f, |m: f64| m.max(f))))
}

/// Everything [`check_run`] derives from the trace, kept for reporting.
#[derive(Debug, Clone)]
pub struct RunFigures {
    pub peak: PeakReport,
    pub totals: TotalsReport,
    pub milestones: Vec<(f64, Option<SimTime>)>,
    pub running_hours: f64,
    pub preemptions: u64,
    pub fairness: Option<f64>,
    pub illegal_transitions: usize,
    pub job_sequence_errors: usize,
}

pub fn figures(scenario: &Scenario, out: &RunOutput) -> Result<RunFigures, EconomicsError> {
    let prices = PriceBook::from_perf(&scenario.perf);
    let peak = peak_report(&out.trace, &scenario.perf, &prices)?;
    let totals = totals_report(&out.trace, &scenario.perf, &prices, scenario.workload.size_factor)?;
    let series = running_series(&out.trace);
    let milestones = r::MILESTONES.iter().map(|&(f, _)| (f, first_crossing(&series, peak.total_count, f))).collect();
    let (preemptions, running_hours) = preemption_rate(out);
    // steady state: from the 90% milestone to the shutdown
    let from = first_crossing(&series, peak.total_count, 0.9).unwrap_or(out.shutdown_at);
    let fairness = steady_fairness(&out.samples, from, out.shutdown_at);
    Ok(RunFigures {
        peak,
        totals,
        milestones,
        running_hours,
        preemptions,
        fairness,
        illegal_transitions: illegal_transitions(&out.trace).len(),
        job_sequence_errors: job_sequence_errors(&out.trace),
    })
}

/// Checks one run against the reference figures scaled by the scenario scale.
pub fn check_run(scenario: &Scenario, out: &RunOutput) -> Result<(Acceptance, RunFigures), EconomicsError> {
    let f = figures(scenario, out)?;
    let s = scenario.scale;
    let mut acc = Acceptance::default();

    let mut ok = true;
    let mut detail = String::new();
    for &(m, n) in &r::PEAK_COUNTS {
        let got = f.peak.rows.iter().find(|row| row.model == m).map_or(0, |row| row.count);
        let target = f64::from(n) * s;
        let pass = rel_ok(f64::from(got), target, widened(r::PEAK_COUNT_TOL, f64::from(n), s));
        ok &= pass;
        detail += &format!("{m}={got} ");
    }
    let total = f64::from(r::PEAK_TOTAL) * s;
    let pass = rel_ok(f64::from(f.peak.total_count), total, widened(r::PEAK_COUNT_TOL, f64::from(r::PEAK_TOTAL), s));
    detail += &format!("total={} ({:+.2}%)", f.peak.total_count, pct(f64::from(f.peak.total_count), total));
    acc.push("peak-composition", ok && pass, detail);

    let target = r::PEAK_PFLOPS32 * s;
    acc.push(
        "peak-compute",
        rel_ok(f.peak.total_pflops32, target, widened(r::PEAK_PFLOPS32_TOL, f64::from(r::PEAK_TOTAL), s)),
        format!("{:.2} PFLOP32s vs {:.2} ({:+.2}%)", f.peak.total_pflops32, target, pct(f.peak.total_pflops32, target)),
    );

    let mut ok = true;
    let mut detail = Vec::new();
    for (&(frac, at), &(_, got)) in r::MILESTONES.iter().zip(&f.milestones) {
        let pass = got.is_some_and(|t| {
            let d = Duration::from_millis(t.as_millis());
            d + r::MILESTONE_TOL >= at && d <= at + r::MILESTONE_TOL
        });
        ok &= pass;
        detail.push(match got {
            Some(t) => format!("{:.0}% at {:.1} min", frac * 100.0, t.as_mins_f64()),
            None => format!("{:.0}% never", frac * 100.0),
        });
    }
    acc.push("ramp-milestones", ok, detail.join(", "));

    let n = f64::from(r::PEAK_TOTAL);
    let wall = r::TOTAL_WALLTIME_H * s;
    let pfh = r::TOTAL_PFLOP32_H * s;
    let mut ok = rel_ok(f.totals.total_walltime_h, wall, widened(r::TOTALS_TOL, n, s))
        && rel_ok(f.totals.total_pflop32_h, pfh, widened(r::TOTALS_TOL, n, s));
    let mut detail = format!(
        "walltime {:.0} h ({:+.1}%), {:.1} PFLOP32-h ({:+.1}%);",
        f.totals.total_walltime_h,
        pct(f.totals.total_walltime_h, wall),
        f.totals.total_pflop32_h,
        pct(f.totals.total_pflop32_h, pfh)
    );
    for (&(m, v), &(_, n)) in r::PFLOP32_HOURS.iter().zip(&r::PEAK_COUNTS) {
        let got = f.totals.row(m).map_or(0.0, |row| row.pflop32_h);
        let target = v * s;
        ok &= rel_ok(got, target, widened(r::PER_MODEL_TOL, f64::from(n), s));
        detail += &format!(" {m} {:+.1}%", pct(got, target));
    }
    acc.push("integral-totals", ok, detail);

    let target = r::PEAK_COST_PER_HOUR * s;
    let mut ok = rel_ok(f.peak.total_cost_per_hour, target, widened(r::PEAK_COST_TOL, n, s));
    for row in &f.peak.rows {
        let c = f64::from(row.count);
        ok &= row.cost_per_hour >= c * row.price_min - 1e-9 && row.cost_per_hour <= c * row.price_max + 1e-9;
    }
    acc.push(
        "peak-cost",
        ok,
        format!("${:.0}/h vs ${:.0}/h ({:+.2}%)", f.peak.total_cost_per_hour, target, pct(f.peak.total_cost_per_hour, target)),
    );

    let fast = f.totals.science_fraction(&r::FAST_MODELS);
    let old = f.totals.science_fraction(&r::OLD_MODELS);
    let within = |x: f64, (lo, hi): (f64, f64)| x >= lo && x <= hi;
    acc.push(
        "science-skew",
        within(fast, r::FAST_SCIENCE) && within(old, r::OLD_SCIENCE),
        format!("V100+T4 {fast:.3}, K80+K520 {old:.3}"),
    );

    let rate = if f.running_hours > 0.0 { f.preemptions as f64 / f.running_hours } else { 0.0 };
    let tol = widened(r::PREEMPTION_TOL / r::PREEMPTION_RATE, r::PREEMPTION_RATE * r::TOTAL_WALLTIME_H, s)
        * r::PREEMPTION_RATE;
    let science_matches = (out.metrics.science - f.totals.total_science).abs() <= 1e-6 * f.totals.total_science.max(1.0);
    acc.push(
        "preemption-accounting",
        (rate - r::PREEMPTION_RATE).abs() <= tol
            && out.metrics.stuck_requeued == 0
            && f.job_sequence_errors == 0
            && science_matches,
        format!(
            "{} preemptions over {:.0} instance-h = {:.4}/h, {} lost GPU attempts, {} stuck",
            f.preemptions,
            f.running_hours,
            rate,
            f.totals.preempted_attempts,
            out.metrics.stuck_requeued
        ),
    );

    let m = &out.metrics;
    let fair_ok = f.fairness.is_none_or(|x| x <= r::FAIRNESS_MAX);
    acc.push(
        "pool-properties",
        m.max_running_per_schedd <= m.schedd_cap
            && fair_ok
            && m.locality_violations == 0
            && m.max_leaf_backlog < r::LEAF_BACKLOG_MAX,
        format!(
            "max/schedd {} (cap {}), fairness {}, locality violations {}, leaf backlog {} ms",
            m.max_running_per_schedd,
            m.schedd_cap,
            f.fairness.map_or("n/a".into(), |x| format!("{x:.3}")),
            m.locality_violations,
            m.max_leaf_backlog.as_millis()
        ),
    );

    acc.push(
        "end-state",
        m.final_billable == 0 && f.illegal_transitions == 0,
        format!(
            "{} billable at the horizon ({} rogue), {} illegal transitions",
            m.final_billable, m.final_rogue_billable, f.illegal_transitions
        ),
    );
    Ok((acc, f))
}
