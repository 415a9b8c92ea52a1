//! Simulated cloud backends.
//!
//! A [`Cloud`] owns every region, provisioning group and instance of a run.
//! All state changes go through one transition function that enforces the
//! legal lifecycle, keeps quota usage and billing spans up to date, and
//! records an `instance_state` event in the trace.

mod fault;
mod group;
mod instance;
mod region;

use std::collections::BTreeSet;
use std::time::Duration;

use thiserror::Error;

use crate::engine::{secs, Engine, EventKind, InstanceTransition, SimTime, Target};
use crate::ids::{GroupId, InstanceId, RegionIdx};
use crate::rng::StreamKey;
use crate::workload::GpuModel;

pub use fault::{FaultKind, FaultSpec};
pub use group::{FleetId, InstanceGroupId, ProvisioningGroup, ScaleSetId};
pub use instance::{Instance, InstanceState};
pub use region::{BootDelay, Flavor, Provider, Region};

#[derive(Debug, Error, PartialEq)]
pub enum ProviderError {
    #[error("unknown region {0}")]
    UnknownRegion(RegionIdx),
    #[error("unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("instance {0} is not known to this group")]
    UnknownInstance(InstanceId),
    #[error("a fleet template must name exactly one GPU model, got {0}")]
    MixedGpuTemplate(usize),
    #[error("region {region} does not offer {flavor} groups")]
    FlavorNotOffered { region: RegionIdx, flavor: Flavor },
    #[error("requested size {requested} exceeds scale set max {max}")]
    ExceedsMaxSize { requested: u32, max: u32 },
    #[error("group {0} is not a scale set")]
    NotAScaleSet(GroupId),
    #[error("group {0} is not an instance group")]
    NotAnInstanceGroup(GroupId),
    #[error("instance {0} is not provisioned")]
    NotProvisioned(InstanceId),
    #[error("instance {instance} cannot go from {from} to {to}")]
    IllegalTransition { instance: InstanceId, from: InstanceState, to: InstanceState },
}

/// Answer of the per-instance metadata service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataRecord {
    pub instance: InstanceId,
    pub provider: Provider,
    pub region: RegionIdx,
}

/// A closed span of billable time for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BillingInterval {
    pub instance: InstanceId,
    pub gpu: GpuModel,
    pub region: RegionIdx,
    pub rogue: bool,
    pub start: SimTime,
    pub end: SimTime,
}

/// One provisioning API action, for the audit log.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    pub at: SimTime,
    pub group: Option<GroupId>,
    pub flavor: Option<Flavor>,
    pub region: RegionIdx,
    pub action: &'static str,
    pub count: u32,
}

#[derive(Clone)]
pub struct Cloud {
    regions: Vec<Region>,
    groups: Vec<ProvisioningGroup>,
    instances: Vec<Instance>,
    faults: Vec<FaultSpec>,
    /// Quota usage per (region, model), rogues included.
    active: Vec<u32>,
    /// Rogue share of `active`.
    rogue_active: Vec<u32>,
    frozen: Vec<Vec<InstanceId>>,
    running_by_model: [u32; GpuModel::COUNT],
    billing: Vec<BillingInterval>,
    audit: Vec<AuditRecord>,
    preemptions: u64,
}

impl Cloud {
    pub fn new(regions: Vec<Region>, faults: Vec<FaultSpec>) -> Self {
        let n = regions.len();
        Self {
            active: vec![0; n * GpuModel::COUNT],
            rogue_active: vec![0; n * GpuModel::COUNT],
            frozen: vec![Vec::new(); n],
            regions,
            groups: Vec::new(),
            instances: Vec::new(),
            faults,
            running_by_model: [0; GpuModel::COUNT],
            billing: Vec::new(),
            audit: Vec::new(),
            preemptions: 0,
        }
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, idx: RegionIdx) -> Result<&Region, ProviderError> {
        self.regions.get(idx.index()).ok_or(ProviderError::UnknownRegion(idx))
    }

    pub fn groups(&self) -> &[ProvisioningGroup] {
        &self.groups
    }

    pub fn group(&self, id: GroupId) -> Result<&ProvisioningGroup, ProviderError> {
        self.groups.get(id.index()).ok_or(ProviderError::UnknownGroup(id))
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn instance(&self, id: InstanceId) -> Result<&Instance, ProviderError> {
        self.instances.get(id.index()).ok_or(ProviderError::UnknownInstance(id))
    }

    pub fn billing(&self) -> &[BillingInterval] {
        &self.billing
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn preemptions(&self) -> u64 {
        self.preemptions
    }

    /// Non-rogue instances in `Running`, per GPU model.
    pub fn running_by_model(&self) -> &[u32; GpuModel::COUNT] {
        &self.running_by_model
    }

    pub fn running_total(&self) -> u32 {
        self.running_by_model.iter().sum()
    }

    /// Instances the provider is charging for right now (rogues included).
    pub fn billable_count(&self) -> usize {
        self.instances.iter().filter(|i| i.state.billable()).count()
    }

    fn slot(region: RegionIdx, gpu: GpuModel) -> usize {
        region.index() * GpuModel::COUNT + gpu.index()
    }

    /// Quota usage (rogues included) for one (region, model) pair.
    pub fn quota_used(&self, region: RegionIdx, gpu: GpuModel) -> u32 {
        self.active[Self::slot(region, gpu)]
    }

    /// Non-rogue instances holding quota in one (region, model) pair.
    pub fn live_count(&self, region: RegionIdx, gpu: GpuModel) -> u32 {
        let s = Self::slot(region, gpu);
        self.active[s] - self.rogue_active[s]
    }

    fn quota_room(&self, region: RegionIdx, gpu: GpuModel) -> u32 {
        self.regions[region.index()].quota_for(gpu).saturating_sub(self.quota_used(region, gpu))
    }

    fn log(&mut self, at: SimTime, group: Option<GroupId>, region: RegionIdx, action: &'static str, count: u32) {
        let flavor = group.map(|g| self.groups[g.index()].flavor);
        self.audit.push(AuditRecord { at, group, flavor, region, action, count });
    }

    fn check_flavor(&self, region: RegionIdx, flavor: Flavor) -> Result<(), ProviderError> {
        if self.region(region)?.provider.flavor() != flavor {
            return Err(ProviderError::FlavorNotOffered { region, flavor });
        }
        Ok(())
    }

    pub fn scale_set(&self, id: GroupId) -> Result<ScaleSetId, ProviderError> {
        match self.group(id)?.flavor {
            Flavor::ScaleSet => Ok(ScaleSetId(id)),
            _ => Err(ProviderError::NotAScaleSet(id)),
        }
    }

    pub fn instance_group(&self, id: GroupId) -> Result<InstanceGroupId, ProviderError> {
        match self.group(id)?.flavor {
            Flavor::InstanceGroup => Ok(InstanceGroupId(id)),
            _ => Err(ProviderError::NotAnInstanceGroup(id)),
        }
    }

    /// The single mutation point for instance state.
    fn transition(&mut self, eng: &mut Engine, id: InstanceId, to: InstanceState) -> Result<(), ProviderError> {
        let now = eng.now();
        let inst = &mut self.instances[id.index()];
        let from = inst.state;
        if !from.can_transition(to) {
            return Err(ProviderError::IllegalTransition { instance: id, from, to });
        }
        match (from.billable(), to.billable()) {
            (false, true) => inst.billable_since = Some(now),
            (true, false) => {
                let start = inst.billable_since.take().expect("billable span open");
                self.billing.push(BillingInterval {
                    instance: id,
                    gpu: inst.gpu,
                    region: inst.region,
                    rogue: inst.rogue,
                    start,
                    end: now,
                });
            }
            _ => {}
        }
        let s = Self::slot(inst.region, inst.gpu);
        if from.holds_quota() && !to.holds_quota() {
            self.active[s] -= 1;
            if inst.rogue {
                self.rogue_active[s] -= 1;
            }
        }
        if !inst.rogue {
            if to == InstanceState::Running {
                self.running_by_model[inst.gpu.index()] += 1;
            } else if from == InstanceState::Running {
                self.running_by_model[inst.gpu.index()] -= 1;
            }
        }
        if to == InstanceState::Running {
            inst.epoch += 1;
        }
        inst.state = to;
        let record = InstanceTransition {
            instance: id,
            group: inst.group,
            region: inst.region,
            gpu: inst.gpu,
            from,
            to,
            rogue: inst.rogue,
        };
        eng.record(EventKind::InstanceState(record), Target::Instance(id));
        Ok(())
    }

    /// Creates an instance in `Requested` and either starts it booting or, in
    /// a stalled region, freezes the request.
    fn request(
        &mut self,
        eng: &mut Engine,
        region: RegionIdx,
        gpu: GpuModel,
        group: Option<GroupId>,
        rogue: bool,
        generation: u32,
    ) -> InstanceId {
        let id = InstanceId(self.instances.len() as u32);
        self.instances.push(Instance {
            id,
            group,
            region,
            gpu,
            state: InstanceState::Requested,
            rogue,
            generation,
            epoch: 0,
            billable_since: None,
            frozen: false,
            surplus: false,
            preempted: false,
        });
        let s = Self::slot(region, gpu);
        self.active[s] += 1;
        if rogue {
            self.rogue_active[s] += 1;
        }
        if let Some(g) = group {
            self.groups[g.index()].members.insert(id);
        }
        let now = eng.now();
        let stall = self.faults.iter().find_map(|f| match f.kind {
            FaultKind::RegionalLimitStall { fraction } if f.active(region, now) => Some(fraction),
            _ => None,
        });
        let freeze = !rogue
            && stall.is_some_and(|fraction| eng.rng(StreamKey::new("stall", u64::from(id.0))).unit() < fraction);
        if freeze {
            self.instances[id.index()].frozen = true;
            self.frozen[region.index()].push(id);
        } else {
            self.boot(eng, id);
        }
        id
    }

    fn boot(&mut self, eng: &mut Engine, id: InstanceId) {
        self.transition(eng, id, InstanceState::Booting).expect("requested instance boots");
        let inst = &mut self.instances[id.index()];
        inst.frozen = false;
        let delay = self.regions[inst.region.index()].boot.sample(&mut eng.rng(StreamKey::new("boot", u64::from(id.0))));
        eng.schedule_in(delay, EventKind::InstanceBooted, Target::Instance(id));
    }

    fn launch(&mut self, eng: &mut Engine, group: GroupId, count: u32, generation: u32) -> u32 {
        let (region, gpu) = {
            let g = &self.groups[group.index()];
            (g.region, g.gpu)
        };
        let n = count.min(self.quota_room(region, gpu));
        for _ in 0..n {
            self.request(eng, region, gpu, Some(group), false, generation);
        }
        n
    }

    fn new_group(&mut self, flavor: Flavor, region: RegionIdx, gpu: GpuModel, max_size: Option<u32>) -> GroupId {
        let id = GroupId(self.groups.len() as u32);
        self.groups.push(ProvisioningGroup {
            id,
            flavor,
            region,
            gpu,
            desired: 0,
            max_size,
            members: BTreeSet::new(),
            pending_replacements: Vec::new(),
        });
        id
    }

    /// Creates an ephemeral fleet and requests up to `count` instances,
    /// clamped by the remaining quota. The fleet is never resized.
    pub fn create_fleet(
        &mut self,
        eng: &mut Engine,
        region: RegionIdx,
        gpus: &[GpuModel],
        count: u32,
    ) -> Result<FleetId, ProviderError> {
        self.check_flavor(region, Flavor::Fleet)?;
        let distinct: BTreeSet<_> = gpus.iter().collect();
        if distinct.len() != 1 {
            return Err(ProviderError::MixedGpuTemplate(distinct.len()));
        }
        let gpu = gpus[0];
        let id = self.new_group(Flavor::Fleet, region, gpu, None);
        self.groups[id.index()].desired = count;
        let launched = self.launch(eng, id, count, 0);
        self.log(eng.now(), Some(id), region, "create_fleet", launched);
        if launched < count {
            self.log(eng.now(), Some(id), region, "unfulfilled", count - launched);
        }
        Ok(FleetId(id))
    }

    pub fn create_scale_set(&mut self, region: RegionIdx, gpu: GpuModel, max_size: u32) -> Result<ScaleSetId, ProviderError> {
        self.check_flavor(region, Flavor::ScaleSet)?;
        Ok(ScaleSetId(self.new_group(Flavor::ScaleSet, region, gpu, Some(max_size))))
    }

    pub fn create_instance_group(&mut self, region: RegionIdx, gpu: GpuModel) -> Result<InstanceGroupId, ProviderError> {
        self.check_flavor(region, Flavor::InstanceGroup)?;
        Ok(InstanceGroupId(self.new_group(Flavor::InstanceGroup, region, gpu, None)))
    }

    /// Sets a scale set's desired size. Growth boots the difference to the
    /// current membership (quota permitting, surplus marks are cleared first);
    /// shrinking only marks surplus members, which stay allocated and billed
    /// until explicitly deallocated. Returns instances launched (positive) or
    /// marked (negative).
    pub fn resize_scale_set(&mut self, eng: &mut Engine, set: ScaleSetId, new_desired: u32) -> Result<i64, ProviderError> {
        let gid = set.0;
        let g = &self.groups[gid.index()];
        let max = g.max_size.expect("scale sets have a max size");
        if new_desired > max {
            return Err(ProviderError::ExceedsMaxSize { requested: new_desired, max });
        }
        let region = g.region;
        let members: Vec<InstanceId> = g.members.iter().copied().collect();
        self.groups[gid.index()].desired = new_desired;
        let kept = members.iter().filter(|i| !self.instances[i.index()].surplus).count() as u32;
        let delta = if new_desired > kept {
            let mut need = new_desired - kept;
            for &i in &members {
                if need == 0 {
                    break;
                }
                if self.instances[i.index()].surplus {
                    self.instances[i.index()].surplus = false;
                    need -= 1;
                }
            }
            i64::from(self.launch(eng, gid, need, 0))
        } else {
            let mut mark = kept - new_desired;
            let marked = mark;
            for &i in members.iter().rev() {
                if mark == 0 {
                    break;
                }
                if !self.instances[i.index()].surplus {
                    self.instances[i.index()].surplus = true;
                    mark -= 1;
                }
            }
            -i64::from(marked)
        };
        if delta != 0 {
            self.log(eng.now(), Some(gid), region, "resize", delta.unsigned_abs() as u32);
        }
        Ok(delta)
    }

    /// Sets an instance group's desired size. Growth boots the shortfall;
    /// lowering it never kills members, it only stops replacements.
    pub fn set_instance_group_size(
        &mut self,
        eng: &mut Engine,
        group: InstanceGroupId,
        desired: u32,
    ) -> Result<i64, ProviderError> {
        let gid = group.0;
        let g = &mut self.groups[gid.index()];
        g.desired = desired;
        let have = g.members.len() as u32;
        let region = g.region;
        let room = desired.saturating_sub(have);
        g.pending_replacements.truncate(room as usize);
        let shortfall = room - g.pending_replacements.len() as u32;
        let launched = self.launch(eng, gid, shortfall, 0);
        if launched > 0 {
            self.log(eng.now(), Some(gid), region, "resize", launched);
        }
        Ok(i64::from(launched))
    }

    /// Bookkeeping when a group member leaves the allocated states.
    fn member_exit(&mut self, eng: &mut Engine, id: InstanceId, explicit_delete: bool) {
        let Some(gid) = self.instances[id.index()].group else { return };
        let generation = self.instances[id.index()].generation;
        let g = &mut self.groups[gid.index()];
        g.members.remove(&id);
        if g.flavor == Flavor::InstanceGroup && !explicit_delete {
            let have = g.members.len() + g.pending_replacements.len();
            if (have as u32) < g.desired {
                g.pending_replacements.push(generation + 1);
                let region = g.region;
                self.log(eng.now(), Some(gid), region, "replace_scheduled", 1);
            }
        }
    }

    /// OS-level shutdown from inside the instance. Fleet members and rogue
    /// instances terminate; scale-set members only stop (and keep billing);
    /// instance-group members terminate and are subject to auto-replacement.
    pub fn system_shutdown(&mut self, eng: &mut Engine, id: InstanceId) -> Result<InstanceState, ProviderError> {
        let inst = self.instance(id)?;
        if inst.state != InstanceState::Running {
            return Err(ProviderError::IllegalTransition {
                instance: id,
                from: inst.state,
                to: InstanceState::Terminated,
            });
        }
        let flavor = inst.group.map(|g| self.groups[g.index()].flavor);
        let to = match flavor {
            Some(Flavor::ScaleSet) => InstanceState::Stopped,
            _ => InstanceState::Terminated,
        };
        self.transition(eng, id, to)?;
        if to == InstanceState::Terminated {
            self.member_exit(eng, id, false);
        }
        let region = self.instances[id.index()].region;
        let group = self.instances[id.index()].group;
        self.log(eng.now(), group, region, if to == InstanceState::Stopped { "stop" } else { "terminate" }, 1);
        Ok(to)
    }

    /// Restarts a stopped instance.
    pub fn start_stopped(&mut self, eng: &mut Engine, id: InstanceId) -> Result<(), ProviderError> {
        self.instance(id)?;
        self.transition(eng, id, InstanceState::Running)?;
        self.schedule_preemption(eng, id);
        Ok(())
    }

    /// Releases a scale-set member; billing stops now.
    pub fn deallocate_instance(&mut self, eng: &mut Engine, set: ScaleSetId, id: InstanceId) -> Result<(), ProviderError> {
        let gid = set.0;
        if !self.groups[gid.index()].members.contains(&id) {
            return Err(ProviderError::UnknownInstance(id));
        }
        self.transition(eng, id, InstanceState::Deallocated)?;
        self.member_exit(eng, id, true);
        let region = self.groups[gid.index()].region;
        self.log(eng.now(), Some(gid), region, "deallocate", 1);
        self.respawn_fault(eng, id);
        Ok(())
    }

    /// Deletes an instance-group member and lowers the desired size by one,
    /// so no replacement is started.
    pub fn delete_group_instance(
        &mut self,
        eng: &mut Engine,
        group: InstanceGroupId,
        id: InstanceId,
    ) -> Result<(), ProviderError> {
        let gid = group.0;
        if !self.groups[gid.index()].members.contains(&id) {
            return Err(ProviderError::UnknownInstance(id));
        }
        self.transition(eng, id, InstanceState::Terminated)?;
        let g = &mut self.groups[gid.index()];
        g.desired = g.desired.saturating_sub(1);
        self.member_exit(eng, id, true);
        let region = self.groups[gid.index()].region;
        self.log(eng.now(), Some(gid), region, "delete", 1);
        self.respawn_fault(eng, id);
        Ok(())
    }

    fn respawn_fault(&mut self, eng: &mut Engine, deprovisioned: InstanceId) {
        let (region, gpu) = {
            let i = &self.instances[deprovisioned.index()];
            (i.region, i.gpu)
        };
        let now = eng.now();
        let per_call: u32 = self
            .faults
            .iter()
            .filter(|f| f.active(region, now))
            .map(|f| match f.kind {
                FaultKind::DeprovisionRespawnBug { rogue_per_call } => rogue_per_call,
                _ => 0,
            })
            .sum();
        let n = per_call.min(self.quota_room(region, gpu));
        for _ in 0..n {
            self.request(eng, region, gpu, None, true, 0);
        }
        if n > 0 {
            self.log(now, None, region, "rogue_spawn", n);
        }
    }

    /// Handles a boot-completion event. Returns whether the instance became
    /// `Running`.
    pub fn on_booted(&mut self, eng: &mut Engine, id: InstanceId) -> Result<bool, ProviderError> {
        if self.instance(id)?.state != InstanceState::Booting {
            return Ok(false);
        }
        self.transition(eng, id, InstanceState::Running)?;
        self.schedule_preemption(eng, id);
        Ok(true)
    }

    fn schedule_preemption(&mut self, eng: &mut Engine, id: InstanceId) {
        let inst = &self.instances[id.index()];
        let now = eng.now();
        let Some((rate, end)) = self.faults.iter().find_map(|f| match f.kind {
            FaultKind::Preemption { rate_per_hour } if f.active(inst.region, now) && rate_per_hour > 0.0 => {
                Some((rate_per_hour, f.end))
            }
            _ => None,
        }) else {
            return;
        };
        let mut rng = eng.rng(StreamKey::with("preempt", u64::from(id.0), u64::from(inst.epoch)));
        let hours = -(1.0 - rng.unit()).ln() / rate;
        let at = now + secs(hours * 3600.0);
        if at <= end {
            let epoch = inst.epoch;
            eng.schedule(at, EventKind::InstancePreempted { epoch }, Target::Instance(id))
                .expect("future time");
        }
    }

    /// Handles a preemption event. Returns whether the instance was revoked
    /// (stale events for instances that already left `Running` are ignored).
    pub fn on_preempted(&mut self, eng: &mut Engine, id: InstanceId, epoch: u32) -> Result<bool, ProviderError> {
        let inst = self.instance(id)?;
        if inst.state != InstanceState::Running || inst.epoch != epoch {
            return Ok(false);
        }
        self.transition(eng, id, InstanceState::Terminated)?;
        self.instances[id.index()].preempted = true;
        self.preemptions += 1;
        self.member_exit(eng, id, false);
        let (group, region) = (self.instances[id.index()].group, self.instances[id.index()].region);
        self.log(eng.now(), group, region, "preempted", 1);
        Ok(true)
    }

    /// Periodic provider work: boots pending instance-group replacements and
    /// releases frozen requests whose stall window has closed.
    pub fn provider_tick(&mut self, eng: &mut Engine) {
        for gi in 0..self.groups.len() {
            if self.groups[gi].pending_replacements.is_empty() {
                continue;
            }
            let gid = GroupId(gi as u32);
            let pending = std::mem::take(&mut self.groups[gi].pending_replacements);
            let (region, gpu) = (self.groups[gi].region, self.groups[gi].gpu);
            let mut booted = 0;
            for (k, generation) in pending.iter().enumerate() {
                if self.quota_room(region, gpu) == 0 {
                    self.groups[gi].pending_replacements.extend_from_slice(&pending[k..]);
                    break;
                }
                self.request(eng, region, gpu, Some(gid), false, *generation);
                booted += 1;
            }
            if booted > 0 {
                self.log(eng.now(), Some(gid), region, "replace", booted);
            }
        }
        let now = eng.now();
        for r in 0..self.regions.len() {
            let region = RegionIdx(r as u16);
            if self.frozen[r].is_empty() {
                continue;
            }
            let still_stalled = self
                .faults
                .iter()
                .any(|f| matches!(f.kind, FaultKind::RegionalLimitStall { .. }) && f.active(region, now));
            if !still_stalled {
                self.release_frozen(eng, region, "stall_expired");
            }
        }
    }

    fn release_frozen(&mut self, eng: &mut Engine, region: RegionIdx, action: &'static str) -> u32 {
        let frozen = std::mem::take(&mut self.frozen[region.index()]);
        let mut n = 0;
        for id in frozen {
            if self.instances[id.index()].state == InstanceState::Requested {
                self.boot(eng, id);
                n += 1;
            }
        }
        self.log(eng.now(), None, region, action, n);
        n
    }

    /// Operator intervention that clears a regional stall: every frozen
    /// request in the region starts booting.
    pub fn manual_recovery(&mut self, eng: &mut Engine, region: RegionIdx) -> Result<u32, ProviderError> {
        self.region(region)?;
        Ok(self.release_frozen(eng, region, "manual_recovery"))
    }

    /// Operator sweep through the web console: terminates every running rogue
    /// instance in the region. Their accrued cost stays on the books.
    pub fn manual_sweep(&mut self, eng: &mut Engine, region: RegionIdx) -> Result<u32, ProviderError> {
        self.region(region)?;
        let rogues: Vec<InstanceId> = self
            .instances
            .iter()
            .filter(|i| i.rogue && i.region == region && i.state == InstanceState::Running)
            .map(|i| i.id)
            .collect();
        for &id in &rogues {
            self.transition(eng, id, InstanceState::Terminated)?;
        }
        self.log(eng.now(), None, region, "sweep", rogues.len() as u32);
        Ok(rogues.len() as u32)
    }

    /// Cancels every request still held by a stall.
    pub fn cancel_frozen(&mut self, eng: &mut Engine) -> u32 {
        let mut n = 0;
        for r in 0..self.regions.len() {
            let frozen = std::mem::take(&mut self.frozen[r]);
            let mut cancelled = 0;
            for id in frozen {
                if self.instances[id.index()].state == InstanceState::Requested {
                    self.transition(eng, id, InstanceState::Terminated).expect("cancel request");
                    self.member_exit(eng, id, true);
                    cancelled += 1;
                }
            }
            if cancelled > 0 {
                self.log(eng.now(), None, RegionIdx(r as u16), "cancel_requests", cancelled);
            }
            n += cancelled;
        }
        n
    }

    pub fn query_metadata(&self, caller: InstanceId) -> Result<MetadataRecord, ProviderError> {
        let inst = self.instance(caller).map_err(|_| ProviderError::NotProvisioned(caller))?;
        match inst.state {
            InstanceState::Booting | InstanceState::Running => Ok(MetadataRecord {
                instance: caller,
                provider: self.regions[inst.region.index()].provider,
                region: inst.region,
            }),
            _ => Err(ProviderError::NotProvisioned(caller)),
        }
    }

    /// Closes every open billing span at `now` (spans stay open afterwards).
    pub fn close_billing(&mut self, now: SimTime) {
        for inst in &mut self.instances {
            if let Some(start) = inst.billable_since {
                if now > start {
                    self.billing.push(BillingInterval {
                        instance: inst.id,
                        gpu: inst.gpu,
                        region: inst.region,
                        rogue: inst.rogue,
                        start,
                        end: now,
                    });
                }
                inst.billable_since = Some(now);
            }
        }
    }

    /// Seconds of billable time per instance, open spans included up to `now`.
    pub fn billable_seconds(&self, now: SimTime) -> f64 {
        let closed: Duration = self.billing.iter().map(|b| b.end - b.start).sum();
        let open: Duration = self
            .instances
            .iter()
            .filter_map(|i| i.billable_since.map(|s| now.saturating_sub(s)))
            .sum();
        (closed + open).as_secs_f64()
    }
}

#[cfg(test)]
mod tests;
