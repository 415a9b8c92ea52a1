//! Workload management pool: sharded job queues, a collector tree, a
//! fair-share negotiator and per-instance startds.
//!
//! Each running instance advertises one GPU slot and a few CPU slots. GPU
//! jobs may only run in regions that hold a replica of their input. CPU
//! slots open up once the instance's GPU slot is claimed; CPU jobs are
//! open-ended filler and only end by removal or preemption.

mod collector;
mod negotiator;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::engine::{Engine, EventKind, SimTime, Target};
use crate::ids::{InstanceId, JobId, RegionIdx, ScheddId};
use crate::providers::Provider;
use crate::rng::StreamKey;
use crate::workload::{GpuModel, InputClass, Workload, WorkloadError};

pub use collector::{CollectorTree, Leaf, LeafId};
pub use negotiator::Match;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JobClass {
    Gpu,
    Cpu,
}

impl JobClass {
    fn idx(self) -> usize {
        self as usize
    }
}

impl fmt::Display for JobClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobClass::Gpu => "GPU",
            JobClass::Cpu => "CPU",
        })
    }
}

impl FromStr for JobClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "GPU" => Ok(JobClass::Gpu),
            "CPU" => Ok(JobClass::Cpu),
            _ => Err(format!("unknown job class `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JobState {
    Idle,
    Running,
    Completed,
    Removed,
    /// Transient: the attempt was lost and the job is about to be requeued.
    PreemptedRequeued,
}

impl JobState {
    const COUNT: usize = 5;
}

/// How a running (or idle) job left its current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JobOutcome {
    Completed,
    Preempted,
    Removed,
}

impl fmt::Display for JobOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for JobOutcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Completed" => Ok(JobOutcome::Completed),
            "Preempted" => Ok(JobOutcome::Preempted),
            "Removed" => Ok(JobOutcome::Removed),
            _ => Err(format!("unknown job outcome `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    Unclaimed,
    ClaimedGpu,
    Draining,
}

/// Matching requirements shared by a batch of jobs.
#[derive(Debug, Clone, PartialEq)]
pub struct JobTemplate {
    pub class: JobClass,
    pub input: Option<InputClass>,
    /// Regions holding an input replica; empty means any region.
    pub required_regions: BTreeSet<RegionIdx>,
    /// GPU models the job may run on; empty means any.
    pub allowed_gpus: BTreeSet<GpuModel>,
}

impl JobTemplate {
    pub fn gpu(input: InputClass, regions: impl IntoIterator<Item = RegionIdx>, gpus: impl IntoIterator<Item = GpuModel>) -> Self {
        Self {
            class: JobClass::Gpu,
            input: Some(input),
            required_regions: regions.into_iter().collect(),
            allowed_gpus: gpus.into_iter().collect(),
        }
    }

    pub fn cpu() -> Self {
        Self { class: JobClass::Cpu, input: None, required_regions: BTreeSet::new(), allowed_gpus: BTreeSet::new() }
    }

    pub fn admits(&self, region: RegionIdx, gpu: GpuModel) -> bool {
        (self.required_regions.is_empty() || self.required_regions.contains(&region))
            && (self.allowed_gpus.is_empty() || self.allowed_gpus.contains(&gpu))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobAd {
    pub id: JobId,
    pub template: u16,
    pub schedd: ScheddId,
    pub state: JobState,
    /// Number of execution attempts started so far.
    pub attempt: u32,
    pub instance: Option<InstanceId>,
}

#[derive(Debug, Clone)]
pub struct Schedd {
    pub id: ScheddId,
    pub kind: JobClass,
    /// Idle jobs per template, in submission order.
    queues: BTreeMap<u16, BTreeSet<JobId>>,
    pub running: u32,
    pub cap: u32,
}

impl Schedd {
    pub fn idle(&self) -> usize {
        self.queues.values().map(BTreeSet::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotAd {
    pub instance: InstanceId,
    pub gpu: GpuModel,
    pub region: RegionIdx,
    pub provider: Provider,
    pub gpu_slots: u8,
    pub cpu_slots: u8,
    pub state: SlotState,
    pub leaf: LeafId,
    /// Ad has reached the main collector.
    pub visible: bool,
    pub gpu_job: Option<JobId>,
    pub cpu_jobs: Vec<JobId>,
    cpu_reserved: u8,
}

impl SlotAd {
    fn cpu_free(&self) -> bool {
        self.state == SlotState::ClaimedGpu && (self.cpu_jobs.len() as u8 + self.cpu_reserved) < self.cpu_slots
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolConfig {
    pub gpu_schedds: u16,
    pub cpu_schedds: u16,
    pub schedd_cap: u32,
    pub leaves_per_region: u16,
    pub registration_service: Duration,
    pub forward_latency: Duration,
    pub cpu_slots_per_instance: u8,
    /// Reproduces the negotiator defect that starves all but one region.
    pub prefetch_bug: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            gpu_schedds: 10,
            cpu_schedds: 20,
            schedd_cap: 12_000,
            leaves_per_region: 20,
            registration_service: Duration::from_millis(50),
            forward_latency: Duration::from_secs(2),
            cpu_slots_per_instance: 2,
            prefetch_bug: false,
        }
    }
}

/// What the pool needs to know about a region.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRegion {
    pub name: String,
    pub provider: Provider,
    pub wan_latency: Duration,
    /// Whether a collector node serves this region.
    pub has_collector: bool,
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("region {0} has no leaf collector")]
    NoLeafInRegion(RegionIdx),
    #[error("unknown region {0}")]
    UnknownRegion(RegionIdx),
    #[error("unknown schedd {0}")]
    UnknownSchedd(ScheddId),
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error("a {job} job cannot be queued on a {queue} schedd")]
    KindMismatch { job: JobClass, queue: JobClass },
    #[error("schedd {0} is at its running-job cap")]
    CapExceeded(ScheddId),
    #[error("slot on {0} vanished before the job started")]
    SlotVanished(InstanceId),
    #[error("job {0} is not in a startable state")]
    NotIdle(JobId),
    #[error("job {job} does not admit the slot on {instance}")]
    LocalityViolation { job: JobId, instance: InstanceId },
    #[error("startd {0} already registered")]
    AlreadyRegistered(InstanceId),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

/// Result of a successful `start_job`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Claim {
    pub job: JobId,
    pub instance: InstanceId,
    /// Completion time for GPU jobs; CPU jobs run until removed.
    pub completes_at: Option<SimTime>,
}

/// Side effects of a job reaching a terminal state that other modules act on.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TerminalDelta {
    /// GPU and input class of a completed GPU job, for science crediting.
    pub completed_gpu: Option<(GpuModel, InputClass)>,
    /// Instance whose last GPU job finished during shutdown.
    pub deprovision: Option<InstanceId>,
    pub cpu_removed: u32,
}

/// Counters that must never move in a valid run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoolStats {
    pub locality_violations: u64,
    pub max_running_per_schedd: u32,
    pub registrations: u64,
}

pub struct Pool {
    config: PoolConfig,
    regions: Vec<PoolRegion>,
    collector: CollectorTree,
    schedds: Vec<Schedd>,
    templates: Vec<JobTemplate>,
    template_pools: Vec<Vec<usize>>,
    jobs: Vec<JobAd>,
    slots: Vec<Option<SlotAd>>,
    free_gpu: Vec<BTreeSet<InstanceId>>,
    free_cpu: BTreeSet<InstanceId>,
    ads_at_main: usize,
    ads_per_pool: Vec<u32>,
    state_counts: [[u64; JobState::COUNT]; 2],
    submitted: [u64; 2],
    rr_cursor: [usize; 2],
    shutdown: bool,
    stats: PoolStats,
}

fn pool_index(region: RegionIdx, gpu: GpuModel) -> usize {
    region.index() * GpuModel::COUNT + gpu.index()
}

impl Pool {
    pub fn new(config: PoolConfig, regions: Vec<PoolRegion>) -> Self {
        let mut schedds = Vec::new();
        for (kind, n) in [(JobClass::Gpu, config.gpu_schedds), (JobClass::Cpu, config.cpu_schedds)] {
            for _ in 0..n {
                let id = ScheddId(schedds.len() as u16);
                schedds.push(Schedd { id, kind, queues: BTreeMap::new(), running: 0, cap: config.schedd_cap });
            }
        }
        let mut collector = CollectorTree::new(regions.len(), config.leaves_per_region, config.registration_service);
        for (i, r) in regions.iter().enumerate() {
            if !r.has_collector {
                collector.clear_region(RegionIdx(i as u16));
            }
        }
        let pools = regions.len() * GpuModel::COUNT;
        Self {
            config,
            collector,
            schedds,
            templates: Vec::new(),
            template_pools: Vec::new(),
            jobs: Vec::new(),
            slots: Vec::new(),
            free_gpu: vec![BTreeSet::new(); pools],
            free_cpu: BTreeSet::new(),
            ads_at_main: 0,
            ads_per_pool: vec![0; pools],
            state_counts: [[0; JobState::COUNT]; 2],
            submitted: [0; 2],
            rr_cursor: [0; 2],
            shutdown: false,
            stats: PoolStats::default(),
            regions,
        }
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    pub fn stats(&self) -> &PoolStats {
        &self.stats
    }

    pub fn collector(&self) -> &CollectorTree {
        &self.collector
    }

    pub fn schedds(&self) -> &[Schedd] {
        &self.schedds
    }

    pub fn job(&self, id: JobId) -> Result<&JobAd, PoolError> {
        self.jobs.get(id.index()).ok_or(PoolError::UnknownJob(id))
    }

    pub fn jobs(&self) -> &[JobAd] {
        &self.jobs
    }

    pub fn template(&self, idx: u16) -> &JobTemplate {
        &self.templates[idx as usize]
    }

    pub fn slot(&self, instance: InstanceId) -> Option<&SlotAd> {
        self.slots.get(instance.index()).and_then(Option::as_ref)
    }

    pub fn is_shutdown(&self) -> bool {
        self.shutdown
    }

    /// Slot ads currently known to the main collector.
    pub fn ads_at_main(&self) -> usize {
        self.ads_at_main
    }

    pub fn count(&self, class: JobClass, state: JobState) -> u64 {
        self.state_counts[class.idx()][state as usize]
    }

    pub fn submitted(&self, class: JobClass) -> u64 {
        self.submitted[class.idx()]
    }

    pub fn running_gpu_jobs(&self) -> u64 {
        self.count(JobClass::Gpu, JobState::Running)
    }

    pub fn idle_gpu_jobs(&self) -> u64 {
        self.count(JobClass::Gpu, JobState::Idle)
    }

    /// Running counts of the schedds of one kind, by schedd id.
    pub fn schedd_running(&self, kind: JobClass) -> Vec<u32> {
        self.schedds.iter().filter(|s| s.kind == kind).map(|s| s.running).collect()
    }

    /// max/min running count across schedds of one kind (1.0 when all idle).
    pub fn fairness_ratio(&self, kind: JobClass) -> f64 {
        let running = self.schedd_running(kind);
        let max = running.iter().copied().max().unwrap_or(0);
        let min = running.iter().copied().min().unwrap_or(0);
        match (max, min) {
            (0, _) => 1.0,
            (_, 0) => f64::INFINITY,
            _ => f64::from(max) / f64::from(min),
        }
    }

    fn set_state(&mut self, job: JobId, to: JobState) {
        let ad = &mut self.jobs[job.index()];
        let class = self.templates[ad.template as usize].class.idx();
        self.state_counts[class][ad.state as usize] -= 1;
        self.state_counts[class][to as usize] += 1;
        ad.state = to;
    }

    pub fn add_template(&mut self, template: JobTemplate) -> u16 {
        let pools = if template.class == JobClass::Gpu {
            (0..self.regions.len())
                .flat_map(|r| GpuModel::ALL.into_iter().map(move |g| (RegionIdx(r as u16), g)))
                .filter(|&(r, g)| template.admits(r, g))
                .map(|(r, g)| pool_index(r, g))
                .collect()
        } else {
            Vec::new()
        };
        self.templates.push(template);
        self.template_pools.push(pools);
        (self.templates.len() - 1) as u16
    }

    /// Appends `count` Idle jobs of `template` to one schedd.
    pub fn submit_jobs(&mut self, schedd: ScheddId, template: u16, count: u32) -> Result<u32, PoolError> {
        let kind = self.schedds.get(schedd.index()).ok_or(PoolError::UnknownSchedd(schedd))?.kind;
        let class = self.templates[template as usize].class;
        if class != kind {
            return Err(PoolError::KindMismatch { job: class, queue: kind });
        }
        for _ in 0..count {
            let id = JobId(self.jobs.len() as u32);
            self.jobs.push(JobAd { id, template, schedd, state: JobState::Idle, attempt: 0, instance: None });
            self.schedds[schedd.index()].queues.entry(template).or_default().insert(id);
        }
        self.state_counts[class.idx()][JobState::Idle as usize] += u64::from(count);
        self.submitted[class.idx()] += u64::from(count);
        Ok(count)
    }

    /// Spreads a batch round-robin over every schedd of the template's kind.
    pub fn submit_round_robin(&mut self, template: u16, count: u32) -> u32 {
        let class = self.templates[template as usize].class;
        let ids: Vec<ScheddId> = self.schedds.iter().filter(|s| s.kind == class).map(|s| s.id).collect();
        if ids.is_empty() {
            return 0;
        }
        let n = ids.len() as u32;
        let cursor = self.rr_cursor[class.idx()];
        let mut accepted = 0;
        for k in 0..n {
            let idx = (cursor + k as usize) % ids.len();
            let share = count / n + u32::from(k < count % n);
            accepted += self.submit_jobs(ids[idx], template, share).expect("kind checked");
        }
        self.rr_cursor[class.idx()] = (cursor + (count % n) as usize) % ids.len();
        accepted
    }

    /// Attaches a new startd to a uniformly chosen leaf in its region and
    /// queues its handshake. The ad reaches the main collector after the
    /// handshake plus the forwarding latency.
    pub fn register_startd(
        &mut self,
        eng: &mut Engine,
        instance: InstanceId,
        region: RegionIdx,
        gpu: GpuModel,
    ) -> Result<LeafId, PoolError> {
        let info = self.regions.get(region.index()).ok_or(PoolError::UnknownRegion(region))?;
        let leaves = self.collector.leaves_in(region);
        if leaves == 0 {
            return Err(PoolError::NoLeafInRegion(region));
        }
        if self.slot(instance).is_some() {
            return Err(PoolError::AlreadyRegistered(instance));
        }
        let provider = info.provider;
        let pick = eng.rng(StreamKey::new("leaf", u64::from(instance.0))).below(leaves as u32) as u16;
        let leaf = LeafId { region, index: pick };
        let done = self.collector.enqueue(leaf, eng.now());
        if self.slots.len() <= instance.index() {
            self.slots.resize(instance.index() + 1, None);
        }
        self.slots[instance.index()] = Some(SlotAd {
            instance,
            gpu,
            region,
            provider,
            gpu_slots: 1,
            cpu_slots: self.config.cpu_slots_per_instance,
            state: SlotState::Unclaimed,
            leaf,
            visible: false,
            gpu_job: None,
            cpu_jobs: Vec::new(),
            cpu_reserved: 0,
        });
        self.stats.registrations += 1;
        eng.schedule(done, EventKind::StartdHandshake, Target::Instance(instance)).expect("future");
        Ok(leaf)
    }

    /// Handshake finished at the leaf; forward the ad to the main collector.
    pub fn on_handshake(&mut self, eng: &mut Engine, instance: InstanceId) {
        let Some(slot) = self.slot(instance) else { return };
        let delay = self.config.forward_latency + self.regions[slot.region.index()].wan_latency;
        eng.schedule_in(delay, EventKind::SlotVisible, Target::Instance(instance));
    }

    /// The ad reached the main collector. Returns true when the pool is
    /// shutting down and the fresh slot should be de-provisioned right away.
    pub fn on_slot_visible(&mut self, instance: InstanceId) -> bool {
        let shutdown = self.shutdown;
        let Some(slot) = self.slots.get_mut(instance.index()).and_then(Option::as_mut) else {
            return false;
        };
        if slot.visible {
            return false;
        }
        slot.visible = true;
        let p = pool_index(slot.region, slot.gpu);
        self.ads_at_main += 1;
        self.ads_per_pool[p] += 1;
        if shutdown {
            slot.state = SlotState::Draining;
            true
        } else {
            self.free_gpu[p].insert(instance);
            false
        }
    }

    /// Starts a matched job on a slot. On `CapExceeded` and `SlotVanished`
    /// the job stays Idle in its queue for the next cycle.
    pub fn start_job(
        &mut self,
        eng: &mut Engine,
        workload: &Workload,
        job: JobId,
        instance: InstanceId,
    ) -> Result<Claim, PoolError> {
        let ad = self.jobs.get(job.index()).ok_or(PoolError::UnknownJob(job))?;
        if ad.state != JobState::Idle {
            return Err(PoolError::NotIdle(job));
        }
        let (schedd, template) = (ad.schedd, ad.template);
        let tpl = self.templates[template as usize].clone();
        // Pull the job out of its queue; failures put it back.
        self.schedds[schedd.index()].queues.get_mut(&template).map(|q| q.remove(&job));
        let requeue = |pool: &mut Pool| {
            pool.schedds[schedd.index()].queues.entry(template).or_default().insert(job);
        };

        let slot = match self.slots.get_mut(instance.index()).and_then(Option::as_mut) {
            Some(s) if s.visible => s,
            _ => {
                requeue(self);
                return Err(PoolError::SlotVanished(instance));
            }
        };
        let usable = match tpl.class {
            JobClass::Gpu => slot.state == SlotState::Unclaimed,
            JobClass::Cpu => slot.state == SlotState::ClaimedGpu && slot.cpu_jobs.len() < slot.cpu_slots as usize,
        };
        if tpl.class == JobClass::Cpu && slot.cpu_reserved > 0 {
            slot.cpu_reserved -= 1;
        }
        if !usable {
            self.restore_slot(instance);
            requeue(self);
            return Err(PoolError::SlotVanished(instance));
        }
        let (region, gpu) = (slot.region, slot.gpu);
        if !tpl.admits(region, gpu) {
            self.stats.locality_violations += 1;
            self.restore_slot(instance);
            requeue(self);
            return Err(PoolError::LocalityViolation { job, instance });
        }
        if self.schedds[schedd.index()].running >= self.schedds[schedd.index()].cap {
            self.restore_slot(instance);
            requeue(self);
            return Err(PoolError::CapExceeded(schedd));
        }

        let completes_at = match tpl.class {
            JobClass::Gpu => {
                let input = tpl.input.expect("GPU jobs carry an input class");
                let attempt = self.jobs[job.index()].attempt + 1;
                let mut rng = eng.rng(StreamKey::with("job", u64::from(job.0), u64::from(attempt)));
                let runtime = workload.sample_runtime(gpu, input, &mut rng)? + workload.io_time(region, input)?;
                let at = eng.now() + crate::engine::secs(runtime);
                eng.schedule(at, EventKind::JobCompleted { attempt }, Target::Job(job)).expect("future");
                Some(at)
            }
            JobClass::Cpu => None,
        };

        let slot = self.slots[instance.index()].as_mut().expect("checked above");
        self.free_gpu[pool_index(region, gpu)].remove(&instance);
        match tpl.class {
            JobClass::Gpu => {
                slot.state = SlotState::ClaimedGpu;
                slot.gpu_job = Some(job);
            }
            JobClass::Cpu => slot.cpu_jobs.push(job),
        }
        if slot.cpu_free() {
            self.free_cpu.insert(instance);
        } else {
            self.free_cpu.remove(&instance);
        }
        let s = &mut self.schedds[schedd.index()];
        s.running += 1;
        self.stats.max_running_per_schedd = self.stats.max_running_per_schedd.max(s.running);
        let ad = &mut self.jobs[job.index()];
        ad.attempt += 1;
        ad.instance = Some(instance);
        self.set_state(job, JobState::Running);
        eng.record(
            EventKind::JobStarted { instance, class: tpl.class, input: tpl.input, gpu },
            Target::Job(job),
        );
        Ok(Claim { job, instance, completes_at })
    }

    /// Brings the free-slot indexes in line with a slot's current state.
    fn restore_slot(&mut self, instance: InstanceId) {
        let Some(slot) = self.slots.get(instance.index()).and_then(Option::as_ref) else { return };
        let open = slot.visible && !self.shutdown;
        let p = pool_index(slot.region, slot.gpu);
        if open && slot.state == SlotState::Unclaimed {
            self.free_gpu[p].insert(instance);
        } else {
            self.free_gpu[p].remove(&instance);
        }
        if open && slot.cpu_free() {
            self.free_cpu.insert(instance);
        } else {
            self.free_cpu.remove(&instance);
        }
    }

    /// Removes every Idle job of `class`. Running jobs are untouched.
    pub fn remove_idle_jobs(&mut self, eng: &mut Engine, class: JobClass) -> u32 {
        let mut removed = Vec::new();
        for s in self.schedds.iter_mut().filter(|s| s.kind == class) {
            for q in s.queues.values_mut() {
                removed.extend(std::mem::take(q));
            }
        }
        for &job in &removed {
            self.set_state(job, JobState::Removed);
        }
        let count = removed.len() as u32;
        if count > 0 {
            eng.record(EventKind::JobsRemoved { class, count }, Target::Pool);
        }
        count
    }

    fn requeue(&mut self, eng: &mut Engine, job: JobId, gpu: GpuModel) {
        let ad = &self.jobs[job.index()];
        let (schedd, template) = (ad.schedd, ad.template);
        let (class, input) = (self.templates[template as usize].class, self.templates[template as usize].input);
        let gpu = Some(gpu);
        self.set_state(job, JobState::PreemptedRequeued);
        eng.record(
            EventKind::JobEnded { class, input, gpu, outcome: JobOutcome::Preempted },
            Target::Job(job),
        );
        self.schedds[schedd.index()].running -= 1;
        self.jobs[job.index()].instance = None;
        self.set_state(job, JobState::Idle);
        self.schedds[schedd.index()].queues.entry(template).or_default().insert(job);
    }

    fn remove_running(&mut self, eng: &mut Engine, job: JobId, gpu: GpuModel) {
        let ad = &self.jobs[job.index()];
        let (schedd, tpl) = (ad.schedd, &self.templates[ad.template as usize]);
        eng.record(
            EventKind::JobEnded { class: tpl.class, input: tpl.input, gpu: Some(gpu), outcome: JobOutcome::Removed },
            Target::Job(job),
        );
        self.schedds[schedd.index()].running -= 1;
        self.set_state(job, JobState::Removed);
    }

    /// A running job ended. Completed jobs free their slot (or, during
    /// shutdown, drain it: the instance's CPU jobs are removed and the
    /// instance is handed back for de-provisioning). Preempted jobs go back
    /// to Idle with the same requirements.
    pub fn on_job_terminal(&mut self, eng: &mut Engine, job: JobId, outcome: JobOutcome) -> Result<TerminalDelta, PoolError> {
        let ad = self.jobs.get(job.index()).ok_or(PoolError::UnknownJob(job))?;
        if ad.state != JobState::Running {
            return Err(PoolError::NotIdle(job));
        }
        let instance = ad.instance.expect("running job has a slot");
        let tpl = self.templates[ad.template as usize].clone();
        let mut delta = TerminalDelta::default();
        match outcome {
            JobOutcome::Preempted => {
                let gpu = self.slot(instance).map(|s| s.gpu).expect("slot");
                self.detach(job, instance);
                self.requeue(eng, job, gpu);
            }
            JobOutcome::Removed => {
                let gpu = self.slot(instance).map(|s| s.gpu).expect("slot");
                self.detach(job, instance);
                self.remove_running(eng, job, gpu);
            }
            JobOutcome::Completed => {
                let gpu = self.slot(instance).map(|s| s.gpu).expect("slot");
                self.detach(job, instance);
                let schedd = self.jobs[job.index()].schedd;
                self.schedds[schedd.index()].running -= 1;
                self.set_state(job, JobState::Completed);
                eng.record(
                    EventKind::JobEnded { class: tpl.class, input: tpl.input, gpu: Some(gpu), outcome: JobOutcome::Completed },
                    Target::Job(job),
                );
                if tpl.class == JobClass::Gpu {
                    delta.completed_gpu = Some((gpu, tpl.input.expect("GPU input")));
                    if self.shutdown {
                        let cpu_jobs = {
                            let slot = self.slots[instance.index()].as_mut().expect("slot");
                            slot.state = SlotState::Draining;
                            std::mem::take(&mut slot.cpu_jobs)
                        };
                        for &c in &cpu_jobs {
                            self.remove_running(eng, c, gpu);
                        }
                        delta.cpu_removed = cpu_jobs.len() as u32;
                        delta.deprovision = Some(instance);
                    }
                }
                self.restore_slot(instance);
            }
        }
        Ok(delta)
    }

    /// Completion event of one attempt. Events for an attempt that was
    /// already preempted are ignored.
    pub fn on_job_completed(&mut self, eng: &mut Engine, job: JobId, attempt: u32) -> Option<TerminalDelta> {
        let ad = self.jobs.get(job.index())?;
        if ad.state != JobState::Running || ad.attempt != attempt {
            return None;
        }
        self.on_job_terminal(eng, job, JobOutcome::Completed).ok()
    }

    /// Unlinks a job from its slot, leaving the slot state to the caller.
    fn detach(&mut self, job: JobId, instance: InstanceId) {
        if let Some(slot) = self.slots.get_mut(instance.index()).and_then(Option::as_mut) {
            if slot.gpu_job == Some(job) {
                slot.gpu_job = None;
                if slot.state == SlotState::ClaimedGpu {
                    slot.state = SlotState::Unclaimed;
                }
            }
            slot.cpu_jobs.retain(|&j| j != job);
        }
    }

    /// The instance is gone. Every job still running on it is requeued.
    /// Returns the number of requeued jobs.
    pub fn remove_startd(&mut self, eng: &mut Engine, instance: InstanceId) -> u32 {
        let Some(slot) = self.slots.get_mut(instance.index()).and_then(Option::take) else {
            return 0;
        };
        let p = pool_index(slot.region, slot.gpu);
        if slot.visible {
            self.ads_at_main -= 1;
            self.ads_per_pool[p] -= 1;
        }
        self.free_gpu[p].remove(&instance);
        self.free_cpu.remove(&instance);
        let jobs: Vec<JobId> = slot.gpu_job.into_iter().chain(slot.cpu_jobs.iter().copied()).collect();
        for &job in &jobs {
            self.requeue(eng, job, slot.gpu);
        }
        jobs.len() as u32
    }

    /// Marks a slot as draining and removes the CPU jobs still on it.
    /// Returns the number of CPU jobs removed.
    pub fn drain_slot(&mut self, eng: &mut Engine, instance: InstanceId) -> u32 {
        let Some(slot) = self.slots.get_mut(instance.index()).and_then(Option::as_mut) else {
            return 0;
        };
        slot.state = SlotState::Draining;
        let gpu = slot.gpu;
        let cpu_jobs = std::mem::take(&mut slot.cpu_jobs);
        for &c in &cpu_jobs {
            self.remove_running(eng, c, gpu);
        }
        self.restore_slot(instance);
        cpu_jobs.len() as u32
    }

    /// Enters controlled shutdown: no new claims. Returns the instances whose
    /// visible slot has no GPU job, to be de-provisioned now.
    pub fn begin_shutdown(&mut self) -> Vec<InstanceId> {
        self.shutdown = true;
        for set in &mut self.free_gpu {
            set.clear();
        }
        self.free_cpu.clear();
        let mut idle = Vec::new();
        for slot in self.slots.iter_mut().flatten() {
            slot.cpu_reserved = 0;
            if slot.visible && slot.state == SlotState::Unclaimed {
                slot.state = SlotState::Draining;
                idle.push(slot.instance);
            }
        }
        idle
    }
}

#[cfg(test)]
mod tests;
