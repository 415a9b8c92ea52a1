//! Deterministic discrete-event core.
//!
//! Events are ordered by `(at, seq)`: virtual time first, then insertion
//! order. Every dispatched event is appended to the [`EventTrace`] before its
//! handler runs; handlers may also [`Engine::record`] effect events (state
//! transitions) that are traced at the current instant without being queued.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};
use std::time::Duration;

use thiserror::Error;

use crate::ids::{GroupId, InstanceId, JobId, RegionIdx};
use crate::pool::{JobClass, JobOutcome};
use crate::providers::InstanceState;
use crate::rng::{RngStream, StreamKey};
use crate::trace::EventTrace;
use crate::workload::{GpuModel, InputClass};

/// Virtual time since scenario start, stored as whole milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1000)
    }

    pub const fn from_mins(m: u64) -> Self {
        SimTime(m * 60_000)
    }

    /// Rounds to the nearest millisecond; negative input clamps to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1000.0).round().max(0.0) as u64)
    }

    pub const fn as_millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn as_mins_f64(self) -> f64 {
        self.0 as f64 / 60_000.0
    }

    pub fn saturating_sub(self, other: SimTime) -> Duration {
        Duration::from_millis(self.0.saturating_sub(other.0))
    }
}

impl Add<Duration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: Duration) -> SimTime {
        SimTime(self.0 + rhs.as_millis() as u64)
    }
}

impl Sub for SimTime {
    type Output = Duration;

    fn sub(self, rhs: SimTime) -> Duration {
        Duration::from_millis(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

/// Converts fractional seconds into a millisecond-resolution duration.
pub fn secs(s: f64) -> Duration {
    Duration::from_millis((s * 1000.0).round().max(0.0) as u64)
}

/// Unique per-run event identifier (the event's sequence number).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

/// The entity an event is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Engine,
    Negotiator,
    Provider,
    Controller,
    Sampler,
    Operator,
    Pool,
    Instance(InstanceId),
    Job(JobId),
    Region(RegionIdx),
}

/// One instance lifecycle transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceTransition {
    pub instance: InstanceId,
    pub group: Option<GroupId>,
    pub region: RegionIdx,
    pub gpu: GpuModel,
    pub from: InstanceState,
    pub to: InstanceState,
    pub rogue: bool,
}

/// Event payloads. The first group is queued and dispatched; the second group
/// (`InstanceState` onward) is only ever recorded as an effect of a dispatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    NegotiatorTick,
    ProviderTick,
    ControllerTick,
    Sample,
    PlanStep { step: u32 },
    ShutdownStart,
    ManualRecovery { region: RegionIdx },
    ManualSweep { region: RegionIdx },
    InstanceBooted,
    InstancePreempted { epoch: u32 },
    StartdHandshake,
    SlotVisible,
    JobCompleted { attempt: u32 },
    Deprovision,
    Horizon,
    /// Test and tooling payload with no simulator meaning.
    Marker { label: u32 },

    InstanceState(InstanceTransition),
    JobStarted {
        instance: InstanceId,
        class: JobClass,
        input: Option<InputClass>,
        gpu: GpuModel,
    },
    JobEnded {
        class: JobClass,
        input: Option<InputClass>,
        gpu: Option<GpuModel>,
        outcome: JobOutcome,
    },
    JobsRemoved { class: JobClass, count: u32 },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::NegotiatorTick => "negotiator_tick",
            EventKind::ProviderTick => "provider_tick",
            EventKind::ControllerTick => "controller_tick",
            EventKind::Sample => "sample",
            EventKind::PlanStep { .. } => "plan_step",
            EventKind::ShutdownStart => "shutdown_start",
            EventKind::ManualRecovery { .. } => "manual_recovery",
            EventKind::ManualSweep { .. } => "manual_sweep",
            EventKind::InstanceBooted => "instance_booted",
            EventKind::InstancePreempted { .. } => "instance_preempted",
            EventKind::StartdHandshake => "startd_handshake",
            EventKind::SlotVisible => "slot_visible",
            EventKind::JobCompleted { .. } => "job_completed",
            EventKind::Deprovision => "deprovision",
            EventKind::Horizon => "horizon",
            EventKind::Marker { .. } => "marker",
            EventKind::InstanceState(_) => "instance_state",
            EventKind::JobStarted { .. } => "job_start",
            EventKind::JobEnded { .. } => "job_end",
            EventKind::JobsRemoved { .. } => "jobs_removed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub target: Target,
}

impl Event {
    pub fn id(&self) -> EventId {
        EventId(self.seq)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("cannot schedule at {at}: clock is already at {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

#[derive(Clone)]
struct Queued(Event);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Reversed so the max-heap pops the earliest (at, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.at, other.0.seq).cmp(&(self.0.at, self.0.seq))
    }
}

/// Virtual clock, event queue, trace and seeded stream factory for one run.
#[derive(Clone)]
pub struct Engine {
    seed: u64,
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued>,
    trace: EventTrace,
}

impl Engine {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            trace: EventTrace::default(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn trace(&self) -> &EventTrace {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut EventTrace {
        &mut self.trace
    }

    pub fn into_trace(self) -> EventTrace {
        self.trace
    }

    /// Random stream for `key` under this run's seed.
    pub fn rng(&self, key: StreamKey) -> RngStream {
        RngStream::new(self.seed, key)
    }

    fn alloc_seq(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }

    pub fn schedule(&mut self, at: SimTime, kind: EventKind, target: Target) -> Result<EventId, EngineError> {
        if at < self.now {
            return Err(EngineError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.alloc_seq();
        self.queue.push(Queued(Event { at, seq, kind, target }));
        Ok(EventId(seq))
    }

    pub fn schedule_in(&mut self, delay: Duration, kind: EventKind, target: Target) -> EventId {
        let at = self.now + delay;
        self.schedule(at, kind, target).expect("future time")
    }

    /// Traces an effect at the current instant without queueing it.
    pub fn record(&mut self, kind: EventKind, target: Target) -> EventId {
        let seq = self.alloc_seq();
        self.trace.push(Event { at: self.now, seq, kind, target });
        EventId(seq)
    }

    /// Dispatches every queued event with `at <= t_end` in `(at, seq)` order.
    ///
    /// The clock ends at `t_end` when later events remain queued, otherwise at
    /// the time of the last dispatched event.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> &EventTrace
    where
        F: FnMut(&mut Engine, &Event),
    {
        while let Some(head) = self.queue.peek() {
            if head.0.at > t_end {
                break;
            }
            let Queued(event) = self.queue.pop().expect("peeked");
            debug_assert!(event.at >= self.now);
            self.now = event.at;
            self.trace.push(event);
            handler(self, &event);
        }
        if !self.queue.is_empty() && t_end > self.now {
            self.now = t_end;
        }
        &self.trace
    }
}
