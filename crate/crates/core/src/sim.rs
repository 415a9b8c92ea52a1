//! One simulated exercise: provisioning controller, pool, providers and the
//! controlled shutdown, driven by a single event loop.

use std::collections::BTreeMap;
use std::time::Duration;

use thiserror::Error;

use crate::engine::{Engine, Event, EventKind, SimTime, Target};
use crate::ids::{GroupId, InstanceId, RegionIdx};
use crate::pool::{JobClass, JobState, JobTemplate, Pool, PoolError};
use crate::providers::{AuditRecord, Cloud, Flavor, InstanceGroupId, InstanceState, ProviderError, ScaleSetId};
use crate::scenario::{OperatorKind, Scenario};
use crate::trace::EventTrace;
use crate::workload::{GpuModel, Workload};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("provider: {0}")]
    Provider(#[from] ProviderError),
    #[error("pool: {0}")]
    Pool(#[from] PoolError),
    #[error("unexpected {kind} event addressed to {target:?}")]
    Misaddressed { kind: &'static str, target: Target },
}

/// One row of the pool time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub at: SimTime,
    pub running_gpu_jobs: u64,
    pub idle_gpu_jobs: u64,
    pub running_instances: u32,
    pub pflops32: f64,
    pub billable_instances: usize,
    /// Max/min running jobs across GPU schedds.
    pub gpu_fairness: f64,
    pub cpu_fairness: f64,
    /// Every GPU schedd still had idle jobs.
    pub gpu_backlogged: bool,
}

/// Counters gathered while the run executes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub preemptions: u64,
    pub science: f64,
    pub completed_gpu_jobs: u64,
    pub locality_violations: u64,
    pub max_running_per_schedd: u32,
    pub schedd_cap: u32,
    pub max_leaf_backlog: Duration,
    pub registrations: u64,
    /// Jobs still in the transient requeue state at the end (must be 0).
    pub stuck_requeued: u64,
    pub final_billable: usize,
    pub final_rogue_billable: usize,
    pub rogues_spawned: u64,
    pub groups_created: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: String,
    pub seed: u64,
    pub scale: f64,
    pub shutdown_at: SimTime,
    pub horizon: SimTime,
    pub trace: EventTrace,
    pub samples: Vec<Sample>,
    pub audit: Vec<AuditRecord>,
    pub metrics: RunMetrics,
}

type Key = (RegionIdx, GpuModel);

struct World<'a> {
    scenario: &'a Scenario,
    cloud: Cloud,
    pool: Pool,
    workload: Workload,
    targets: BTreeMap<Key, u32>,
    fleets: BTreeMap<Key, Vec<GroupId>>,
    sets: BTreeMap<Key, Vec<ScaleSetId>>,
    igs: BTreeMap<Key, InstanceGroupId>,
    shutdown: bool,
    samples: Vec<Sample>,
    science: f64,
    completed: u64,
    error: Option<SimError>,
}

/// Runs `scenario` with its own seed to the horizon.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    run_with_seed(scenario, scenario.seed)
}

pub fn run_with_seed(scenario: &Scenario, seed: u64) -> Result<RunOutput, SimError> {
    let mut eng = Engine::new(seed);
    let mut world = World {
        scenario,
        cloud: Cloud::new(scenario.provider_regions(), scenario.faults.clone()),
        pool: Pool::new(scenario.pool.clone(), scenario.pool_regions()),
        workload: scenario.build_workload(),
        targets: BTreeMap::new(),
        fleets: BTreeMap::new(),
        sets: BTreeMap::new(),
        igs: BTreeMap::new(),
        shutdown: false,
        samples: Vec::new(),
        science: 0.0,
        completed: 0,
        error: None,
    };
    world.submit();

    let h = scenario.horizon;
    for (i, p) in scenario.plan.iter().enumerate() {
        eng.schedule(p.at, EventKind::PlanStep { step: i as u32 }, Target::Controller).expect("t >= 0");
    }
    eng.schedule(SimTime::ZERO, EventKind::ProviderTick, Target::Provider).expect("t >= 0");
    eng.schedule(SimTime::ZERO, EventKind::NegotiatorTick, Target::Negotiator).expect("t >= 0");
    eng.schedule(SimTime::ZERO, EventKind::Sample, Target::Sampler).expect("t >= 0");
    eng.schedule(SimTime::ZERO + scenario.timing.controller_period, EventKind::ControllerTick, Target::Controller)
        .expect("t >= 0");
    eng.schedule(scenario.shutdown, EventKind::ShutdownStart, Target::Controller).expect("t >= 0");
    for a in &scenario.operator {
        let kind = match a.kind {
            OperatorKind::ManualRecovery => EventKind::ManualRecovery { region: a.region },
            OperatorKind::ManualSweep => EventKind::ManualSweep { region: a.region },
        };
        eng.schedule(a.at, kind, Target::Operator).expect("t >= 0");
    }
    eng.schedule(h, EventKind::Horizon, Target::Engine).expect("t >= 0");

    eng.run_until(h, |eng, ev| {
        if world.error.is_none() {
            if let Err(e) = world.dispatch(eng, ev) {
                world.error = Some(e);
            }
        }
    });
    if let Some(e) = world.error.take() {
        return Err(e);
    }

    let stats = world.pool.stats().clone();
    let rogues = world.cloud.instances().iter().filter(|i| i.rogue).count() as u64;
    let metrics = RunMetrics {
        preemptions: world.cloud.preemptions(),
        science: world.science,
        completed_gpu_jobs: world.completed,
        locality_violations: stats.locality_violations,
        max_running_per_schedd: stats.max_running_per_schedd,
        schedd_cap: scenario.pool.schedd_cap,
        max_leaf_backlog: world.pool.collector().max_backlog(),
        registrations: stats.registrations,
        stuck_requeued: world.pool.count(JobClass::Gpu, JobState::PreemptedRequeued)
            + world.pool.count(JobClass::Cpu, JobState::PreemptedRequeued),
        final_billable: world.cloud.billable_count(),
        final_rogue_billable: world.cloud.instances().iter().filter(|i| i.rogue && i.state.billable()).count(),
        rogues_spawned: rogues,
        groups_created: world.cloud.groups().len(),
    };
    let mut trace = eng.into_trace();
    trace.set_regions(scenario.regions.iter().map(|r| r.region.name.clone()).collect());
    Ok(RunOutput {
        scenario: scenario.name.clone(),
        seed,
        scale: scenario.scale,
        shutdown_at: scenario.shutdown,
        horizon: h,
        trace,
        samples: world.samples,
        audit: world.cloud.audit().to_vec(),
        metrics,
    })
}

impl World<'_> {
    fn submit(&mut self) {
        for b in &self.scenario.workload.batches {
            let t = self.pool.add_template(JobTemplate::gpu(b.input, b.replicas.iter().copied(), b.gpus.iter().copied()));
            self.pool.submit_round_robin(t, b.count);
        }
        let t = self.pool.add_template(JobTemplate::cpu());
        self.pool.submit_round_robin(t, self.scenario.workload.cpu_jobs);
    }

    fn again(&self, eng: &mut Engine, period: Duration, kind: EventKind, target: Target) {
        let next = eng.now() + period;
        if next <= self.scenario.horizon {
            eng.schedule(next, kind, target).expect("future");
        }
    }

    fn dispatch(&mut self, eng: &mut Engine, ev: &Event) -> Result<(), SimError> {
        let timing = &self.scenario.timing;
        match ev.kind {
            EventKind::NegotiatorTick => {
                if !self.shutdown {
                    for m in self.pool.negotiate_cycle() {
                        match self.pool.start_job(eng, &self.workload, m.job, m.instance) {
                            Ok(_)
                            | Err(PoolError::CapExceeded(_))
                            | Err(PoolError::SlotVanished(_))
                            | Err(PoolError::LocalityViolation { .. }) => {}
                            Err(e) => return Err(e.into()),
                        }
                    }
                }
                self.again(eng, timing.negotiator_period, ev.kind, ev.target);
            }
            EventKind::ProviderTick => {
                self.cloud.provider_tick(eng);
                self.again(eng, timing.provider_tick, ev.kind, ev.target);
            }
            EventKind::ControllerTick => {
                if !self.shutdown {
                    let keys: Vec<Key> = self.targets.keys().copied().collect();
                    for k in keys {
                        self.reconcile(eng, k)?;
                    }
                }
                self.again(eng, timing.controller_period, ev.kind, ev.target);
            }
            EventKind::Sample => {
                self.sample(eng.now());
                self.again(eng, timing.sample_period, ev.kind, ev.target);
            }
            EventKind::PlanStep { step } => {
                if !self.shutdown {
                    let p = self.scenario.plan[step as usize];
                    self.targets.insert((p.region, p.gpu), p.target);
                    self.reconcile(eng, (p.region, p.gpu))?;
                }
            }
            EventKind::ShutdownStart => self.begin_shutdown(eng)?,
            EventKind::ManualRecovery { region } => {
                self.cloud.manual_recovery(eng, region)?;
            }
            EventKind::ManualSweep { region } => {
                self.cloud.manual_sweep(eng, region)?;
            }
            EventKind::InstanceBooted => {
                let id = instance_of(ev)?;
                if self.cloud.on_booted(eng, id)? {
                    let inst = self.cloud.instance(id)?;
                    let (rogue, region, gpu) = (inst.rogue, inst.region, inst.gpu);
                    if rogue {
                        // rogues never join the pool
                    } else if self.shutdown {
                        self.begin_deprovision(eng, id)?;
                    } else {
                        self.pool.register_startd(eng, id, region, gpu)?;
                    }
                }
            }
            EventKind::InstancePreempted { epoch } => {
                let id = instance_of(ev)?;
                if self.cloud.on_preempted(eng, id, epoch)? {
                    self.pool.remove_startd(eng, id);
                }
            }
            EventKind::StartdHandshake => self.pool.on_handshake(eng, instance_of(ev)?),
            EventKind::SlotVisible => {
                let id = instance_of(ev)?;
                if self.pool.on_slot_visible(id) {
                    self.pool.drain_slot(eng, id);
                    self.begin_deprovision(eng, id)?;
                }
            }
            EventKind::JobCompleted { attempt } => {
                let Target::Job(job) = ev.target else {
                    return Err(SimError::Misaddressed { kind: ev.kind.name(), target: ev.target });
                };
                if let Some(delta) = self.pool.on_job_completed(eng, job, attempt) {
                    if let Some((gpu, input)) = delta.completed_gpu {
                        self.science += self.workload.science_output(gpu, input, true).map_err(PoolError::from)?.0;
                        self.completed += 1;
                    }
                    if let Some(id) = delta.deprovision {
                        self.begin_deprovision(eng, id)?;
                    }
                }
            }
            EventKind::Deprovision => self.finish_deprovision(eng, instance_of(ev)?)?,
            EventKind::Horizon | EventKind::Marker { .. } => {}
            EventKind::InstanceState(_)
            | EventKind::JobStarted { .. }
            | EventKind::JobEnded { .. }
            | EventKind::JobsRemoved { .. } => {
                return Err(SimError::Misaddressed { kind: ev.kind.name(), target: ev.target });
            }
        }
        Ok(())
    }

    fn sample(&mut self, at: SimTime) {
        let running = self.cloud.running_by_model();
        let pflops32 = GpuModel::ALL
            .iter()
            .filter(|m| running[m.index()] > 0)
            .map(|&m| f64::from(running[m.index()]) * self.workload.perf.tflops32(m).unwrap_or(0.0) / 1000.0)
            .fold(0.0, |a, b| a + b);
        let gpu_backlogged = self.pool.schedds().iter().filter(|s| s.kind == JobClass::Gpu).all(|s| s.idle() > 0);
        self.samples.push(Sample {
            at,
            running_gpu_jobs: self.pool.count(JobClass::Gpu, JobState::Running),
            idle_gpu_jobs: self.pool.count(JobClass::Gpu, JobState::Idle),
            running_instances: self.cloud.running_total(),
            pflops32,
            billable_instances: self.cloud.billable_count(),
            gpu_fairness: self.pool.fairness_ratio(JobClass::Gpu),
            cpu_fairness: self.pool.fairness_ratio(JobClass::Cpu),
            gpu_backlogged,
        });
    }

    /// Brings the groups serving `key` up to the planned target.
    fn reconcile(&mut self, eng: &mut Engine, key: Key) -> Result<(), SimError> {
        let target = self.targets.get(&key).copied().unwrap_or(0);
        let (region, gpu) = key;
        let spec = &self.scenario.regions[region.index()];
        match spec.region.provider.flavor() {
            Flavor::Fleet => {
                let live: usize = self
                    .fleets
                    .get(&key)
                    .map(|gs| gs.iter().map(|g| self.cloud.groups()[g.index()].members.len()).sum())
                    .unwrap_or(0);
                let room = spec.region.quota_for(gpu).saturating_sub(self.cloud.quota_used(region, gpu));
                let want = target.saturating_sub(live as u32).min(room);
                if want > 0 {
                    let f = self.cloud.create_fleet(eng, region, &[gpu], want)?;
                    self.fleets.entry(key).or_default().push(f.group());
                }
            }
            Flavor::ScaleSet => {
                if !self.sets.contains_key(&key) {
                    let mut sets = Vec::new();
                    for _ in 0..spec.scale_sets {
                        sets.push(self.cloud.create_scale_set(region, gpu, spec.scale_set_max)?);
                    }
                    self.sets.insert(key, sets);
                }
                let mut left = target;
                for &s in &self.sets[&key] {
                    let d = left.min(spec.scale_set_max);
                    left -= d;
                    let g = &self.cloud.groups()[s.group().index()];
                    if g.desired != d || (g.members.len() as u32) < d {
                        self.cloud.resize_scale_set(eng, s, d)?;
                    }
                }
            }
            Flavor::InstanceGroup => {
                let ig = match self.igs.get(&key) {
                    Some(&ig) => ig,
                    None => {
                        let ig = self.cloud.create_instance_group(region, gpu)?;
                        self.igs.insert(key, ig);
                        ig
                    }
                };
                self.cloud.set_instance_group_size(eng, ig, target)?;
            }
        }
        Ok(())
    }

    /// Remove idle GPU work, freeze provisioning, lower desired sizes and
    /// start draining every slot without a GPU job.
    fn begin_shutdown(&mut self, eng: &mut Engine) -> Result<(), SimError> {
        self.shutdown = true;
        self.pool.remove_idle_jobs(eng, JobClass::Gpu);
        self.cloud.cancel_frozen(eng);
        let sets: Vec<ScaleSetId> = self.sets.values().flatten().copied().collect();
        for s in sets {
            self.cloud.resize_scale_set(eng, s, 0)?;
        }
        let igs: Vec<InstanceGroupId> = self.igs.values().copied().collect();
        for ig in igs {
            self.cloud.set_instance_group_size(eng, ig, 0)?;
        }
        for id in self.pool.begin_shutdown() {
            self.pool.drain_slot(eng, id);
            self.begin_deprovision(eng, id)?;
        }
        Ok(())
    }

    fn flavor_of(&self, id: InstanceId) -> Result<Option<Flavor>, SimError> {
        let inst = self.cloud.instance(id)?;
        Ok(inst.group.map(|g| self.cloud.groups()[g.index()].flavor))
    }

    /// The instance has no GPU work left. Scale-set members shut down at
    /// the OS level right away (and keep billing until deallocated); every
    /// flavor gets its de-provisioning call after the API latency.
    fn begin_deprovision(&mut self, eng: &mut Engine, id: InstanceId) -> Result<(), SimError> {
        self.pool.remove_startd(eng, id);
        if self.cloud.instance(id)?.state != InstanceState::Running {
            return Ok(());
        }
        if self.flavor_of(id)? == Some(Flavor::ScaleSet) {
            self.cloud.system_shutdown(eng, id)?;
        }
        eng.schedule_in(self.scenario.timing.deprovision_latency, EventKind::Deprovision, Target::Instance(id));
        Ok(())
    }

    fn finish_deprovision(&mut self, eng: &mut Engine, id: InstanceId) -> Result<(), SimError> {
        let inst = self.cloud.instance(id)?;
        let (state, group) = (inst.state, inst.group);
        match (self.flavor_of(id)?, state) {
            (Some(Flavor::ScaleSet), InstanceState::Stopped) => {
                let set = self.cloud.scale_set(group.expect("member"))?;
                self.cloud.deallocate_instance(eng, set, id)?;
            }
            (Some(Flavor::InstanceGroup), InstanceState::Running) => {
                let ig = self.cloud.instance_group(group.expect("member"))?;
                self.cloud.delete_group_instance(eng, ig, id)?;
            }
            (Some(Flavor::Fleet) | None, InstanceState::Running) => {
                self.cloud.system_shutdown(eng, id)?;
            }
            // preempted meanwhile
            _ => {}
        }
        Ok(())
    }
}

fn instance_of(ev: &Event) -> Result<InstanceId, SimError> {
    match ev.target {
        Target::Instance(id) => Ok(id),
        target => Err(SimError::Misaddressed { kind: ev.kind.name(), target }),
    }
}
