//! Event trace storage and its CSV form.
//!
//! One line per record: `t,seq,kind,target,detail`, where `t` is seconds with
//! millisecond precision and `detail` is a `;`-separated list of `key=value`
//! pairs specific to the kind. Region indices are written as region names.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::engine::{Event, EventKind, InstanceTransition, SimTime, Target};
use crate::ids::{GroupId, InstanceId, JobId, RegionIdx};

pub const TRACE_HEADER: &str = "t,seq,kind,target,detail";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: unknown event kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Every dispatched or recorded event of a run, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTrace {
    regions: Vec<String>,
    records: Vec<Event>,
}

impl EventTrace {
    pub fn push(&mut self, event: Event) {
        self.records.push(event);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Event] {
        &self.records
    }

    pub fn set_regions(&mut self, names: Vec<String>) {
        self.regions = names;
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn region_name(&self, idx: RegionIdx) -> &str {
        self.regions.get(idx.index()).map(String::as_str).unwrap_or("?")
    }

    /// Time of the last record, or zero for an empty trace.
    pub fn end_time(&self) -> SimTime {
        self.records.last().map_or(SimTime::ZERO, |e| e.at)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(out);
        writeln!(out, "{TRACE_HEADER}")?;
        let mut detail = String::new();
        for ev in &self.records {
            detail.clear();
            self.format_detail(&ev.kind, &mut detail);
            writeln!(out, "{},{},{},{},{}", ev.at, ev.seq, ev.kind.name(), TargetFmt(ev.target), detail)?;
        }
        out.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    fn format_detail(&self, kind: &EventKind, s: &mut String) {
        let _ = match kind {
            EventKind::PlanStep { step } => write!(s, "step={step}"),
            EventKind::ManualRecovery { region } | EventKind::ManualSweep { region } => {
                write!(s, "region={}", self.region_name(*region))
            }
            EventKind::InstancePreempted { epoch } => write!(s, "epoch={epoch}"),
            EventKind::JobCompleted { attempt } => write!(s, "attempt={attempt}"),
            EventKind::Marker { label } => write!(s, "label={label}"),
            EventKind::InstanceState(t) => write!(
                s,
                "group={};region={};gpu={};from={};to={};rogue={}",
                t.group.map_or_else(|| "-".to_string(), |g| g.0.to_string()),
                self.region_name(t.region),
                t.gpu,
                t.from,
                t.to,
                u8::from(t.rogue)
            ),
            EventKind::JobStarted { instance, class, input, gpu } => write!(
                s,
                "instance={};class={class};input={};gpu={gpu}",
                instance.0,
                opt(input.map(|i| i.name()))
            ),
            EventKind::JobEnded { class, input, gpu, outcome } => write!(
                s,
                "class={class};input={};gpu={};outcome={outcome}",
                opt(input.map(|i| i.name())),
                opt(gpu.map(|g| g.name()))
            ),
            EventKind::JobsRemoved { class, count } => write!(s, "class={class};count={count}"),
            _ => Ok(()),
        };
    }

    /// Parses a trace written by [`EventTrace::write_csv`]. Unknown kinds are
    /// rejected. Region names are numbered in order of first appearance.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, TraceError> {
        Self::read_csv_with_regions(input, &[])
    }

    /// Like [`EventTrace::read_csv`], with region numbering seeded from a
    /// known region list so indices match the run that wrote the trace.
    pub fn read_csv_with_regions<R: BufRead>(input: R, regions: &[String]) -> Result<Self, TraceError> {
        let mut trace = EventTrace { regions: regions.to_vec(), ..EventTrace::default() };
        let mut region_index: HashMap<String, RegionIdx> =
            regions.iter().enumerate().map(|(i, n)| (n.clone(), RegionIdx(i as u16))).collect();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if i == 0 {
                if line.trim() != TRACE_HEADER {
                    return Err(TraceError::Parse { line: 1, msg: "missing trace header".into() });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| TraceError::Parse { line: lineno, msg: msg.to_string() };
            let mut cols = line.splitn(5, ',');
            let (Some(t), Some(seq), Some(kind), Some(target), Some(detail)) =
                (cols.next(), cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(err("expected 5 columns"));
            };
            let at = parse_time(t).ok_or_else(|| err("bad time"))?;
            let seq: u64 = seq.parse().map_err(|_| err("bad seq"))?;
            let target = parse_target(target).ok_or_else(|| err("bad target"))?;
            let fields = Fields::parse(detail).ok_or_else(|| err("bad detail"))?;
            let mut region = |name: &str| -> RegionIdx {
                let next = RegionIdx(region_index.len() as u16);
                let idx = *region_index.entry(name.to_string()).or_insert(next);
                if idx == next {
                    trace.regions.push(name.to_string());
                }
                idx
            };
            let kind = match kind {
                "negotiator_tick" => EventKind::NegotiatorTick,
                "provider_tick" => EventKind::ProviderTick,
                "controller_tick" => EventKind::ControllerTick,
                "sample" => EventKind::Sample,
                "plan_step" => EventKind::PlanStep { step: fields.get("step").ok_or_else(|| err("step"))? },
                "shutdown_start" => EventKind::ShutdownStart,
                "manual_recovery" => EventKind::ManualRecovery {
                    region: region(fields.raw("region").ok_or_else(|| err("region"))?),
                },
                "manual_sweep" => EventKind::ManualSweep {
                    region: region(fields.raw("region").ok_or_else(|| err("region"))?),
                },
                "instance_booted" => EventKind::InstanceBooted,
                "instance_preempted" => {
                    EventKind::InstancePreempted { epoch: fields.get("epoch").ok_or_else(|| err("epoch"))? }
                }
                "startd_handshake" => EventKind::StartdHandshake,
                "slot_visible" => EventKind::SlotVisible,
                "job_completed" => {
                    EventKind::JobCompleted { attempt: fields.get("attempt").ok_or_else(|| err("attempt"))? }
                }
                "deprovision" => EventKind::Deprovision,
                "horizon" => EventKind::Horizon,
                "marker" => EventKind::Marker { label: fields.get("label").ok_or_else(|| err("label"))? },
                "instance_state" => {
                    let instance = match target {
                        Target::Instance(i) => i,
                        _ => return Err(err("instance_state must target an instance")),
                    };
                    let group = match fields.raw("group").ok_or_else(|| err("group"))? {
                        "-" => None,
                        g => Some(GroupId(g.parse().map_err(|_| err("group"))?)),
                    };
                    EventKind::InstanceState(InstanceTransition {
                        instance,
                        group,
                        region: region(fields.raw("region").ok_or_else(|| err("region"))?),
                        gpu: fields.get("gpu").ok_or_else(|| err("gpu"))?,
                        from: fields.get("from").ok_or_else(|| err("from"))?,
                        to: fields.get("to").ok_or_else(|| err("to"))?,
                        rogue: fields.get::<u8>("rogue").ok_or_else(|| err("rogue"))? == 1,
                    })
                }
                "job_start" => EventKind::JobStarted {
                    instance: InstanceId(fields.get("instance").ok_or_else(|| err("instance"))?),
                    class: fields.get("class").ok_or_else(|| err("class"))?,
                    input: fields.opt("input").map_err(|_| err("input"))?,
                    gpu: fields.get("gpu").ok_or_else(|| err("gpu"))?,
                },
                "job_end" => EventKind::JobEnded {
                    class: fields.get("class").ok_or_else(|| err("class"))?,
                    input: fields.opt("input").map_err(|_| err("input"))?,
                    gpu: fields.opt("gpu").map_err(|_| err("gpu"))?,
                    outcome: fields.get("outcome").ok_or_else(|| err("outcome"))?,
                },
                "jobs_removed" => EventKind::JobsRemoved {
                    class: fields.get("class").ok_or_else(|| err("class"))?,
                    count: fields.get("count").ok_or_else(|| err("count"))?,
                },
                other => return Err(TraceError::UnknownKind { line: lineno, kind: other.to_string() }),
            };
            trace.records.push(Event { at, seq, kind, target });
        }
        Ok(trace)
    }
}

fn opt(v: Option<&str>) -> &str {
    v.unwrap_or("-")
}

struct TargetFmt(Target);

impl std::fmt::Display for TargetFmt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Target::Engine => f.write_str("engine"),
            Target::Negotiator => f.write_str("negotiator"),
            Target::Provider => f.write_str("provider"),
            Target::Controller => f.write_str("controller"),
            Target::Sampler => f.write_str("sampler"),
            Target::Operator => f.write_str("operator"),
            Target::Pool => f.write_str("pool"),
            Target::Instance(i) => write!(f, "{i}"),
            Target::Job(j) => write!(f, "{j}"),
            Target::Region(r) => write!(f, "{r}"),
        }
    }
}

fn parse_target(s: &str) -> Option<Target> {
    Some(match s {
        "engine" => Target::Engine,
        "negotiator" => Target::Negotiator,
        "provider" => Target::Provider,
        "controller" => Target::Controller,
        "sampler" => Target::Sampler,
        "operator" => Target::Operator,
        "pool" => Target::Pool,
        _ => {
            let (prefix, num) = s.split_at(1);
            match prefix {
                "i" => Target::Instance(InstanceId(num.parse().ok()?)),
                "j" => Target::Job(JobId(num.parse().ok()?)),
                "r" => Target::Region(RegionIdx(num.parse().ok()?)),
                _ => return None,
            }
        }
    })
}

fn parse_time(s: &str) -> Option<SimTime> {
    let (whole, frac) = s.split_once('.')?;
    if frac.len() != 3 {
        return None;
    }
    let whole: u64 = whole.parse().ok()?;
    let frac: u64 = frac.parse().ok()?;
    Some(SimTime::from_millis(whole * 1000 + frac))
}

struct Fields<'a>(Vec<(&'a str, &'a str)>);

impl<'a> Fields<'a> {
    fn parse(detail: &'a str) -> Option<Self> {
        if detail.is_empty() {
            return Some(Fields(Vec::new()));
        }
        detail.split(';').map(|kv| kv.split_once('=')).collect::<Option<Vec<_>>>().map(Fields)
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.0.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn get<T: FromStr>(&self, key: &str) -> Option<T> {
        self.raw(key)?.parse().ok()
    }

    /// `-` means absent; a missing key is an error.
    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ()> {
        match self.raw(key) {
            None => Err(()),
            Some("-") => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ()),
        }
    }
}
