//! Fair-share matchmaking over the idle queues and the free-slot indexes.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{JobClass, Pool, SlotState};
use crate::ids::{InstanceId, JobId, ScheddId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub job: JobId,
    pub instance: InstanceId,
}

impl Pool {
    /// One negotiation cycle: GPU jobs first, then CPU jobs on the currently
    /// claimed instances.
    pub fn negotiate_cycle(&mut self) -> Vec<Match> {
        let mut out = self.negotiate(JobClass::Gpu);
        out.extend(self.negotiate(JobClass::Cpu));
        out
    }

    /// Matches idle jobs of one class to free slots. Schedds are served in
    /// order of fewest running (plus tentatively matched) jobs, ties by id;
    /// each schedd offers its oldest matchable job. Matched jobs and slots
    /// are reserved until `start_job` consumes them.
    pub fn negotiate(&mut self, class: JobClass) -> Vec<Match> {
        let mut matches = Vec::new();
        if self.shutdown {
            return matches;
        }
        let pools = self.candidate_pools(class);
        let mut exhausted = vec![false; self.templates.len()];
        let mut heap: BinaryHeap<Reverse<(u32, ScheddId)>> = self
            .schedds
            .iter()
            .filter(|s| s.kind == class && s.idle() > 0)
            .map(|s| Reverse((s.running, s.id)))
            .collect();

        while let Some(Reverse((load, sid))) = heap.pop() {
            if load >= self.schedds[sid.index()].cap {
                continue;
            }
            loop {
                let best = self.schedds[sid.index()]
                    .queues
                    .iter()
                    .filter(|(t, q)| !exhausted[**t as usize] && !q.is_empty())
                    .min_by_key(|(_, q)| *q.first().expect("non-empty"))
                    .map(|(t, _)| *t);
                let Some(t) = best else { break };
                let slot = match class {
                    JobClass::Gpu => self.take_gpu_slot(&pools[t as usize]),
                    JobClass::Cpu => self.take_cpu_slot(&pools[t as usize]),
                };
                match slot {
                    Some(instance) => {
                        let job = self.schedds[sid.index()]
                            .queues
                            .get_mut(&t)
                            .and_then(|q| q.pop_first())
                            .expect("non-empty");
                        matches.push(Match { job, instance });
                        heap.push(Reverse((load + 1, sid)));
                        break;
                    }
                    None => exhausted[t as usize] = true,
                }
            }
        }
        matches
    }

    /// Slot pools each template may draw from this cycle. With the prefetch
    /// defect, every template only sees the first region (by name) that it
    /// accepts and that currently advertises any matching slot.
    fn candidate_pools(&self, class: JobClass) -> Vec<Vec<usize>> {
        let gpus = crate::workload::GpuModel::COUNT;
        self.templates
            .iter()
            .zip(&self.template_pools)
            .map(|(tpl, pools)| {
                if tpl.class != class {
                    return Vec::new();
                }
                let pools: Vec<usize> = match class {
                    JobClass::Gpu => pools.clone(),
                    // CPU templates match by region only; encode regions as pool rows
                    JobClass::Cpu => (0..self.regions.len())
                        .filter(|&r| tpl.required_regions.is_empty() || tpl.required_regions.contains(&crate::ids::RegionIdx(r as u16)))
                        .map(|r| r * gpus)
                        .collect(),
                };
                if !self.config.prefetch_bug {
                    return pools;
                }
                let advertised = |p: usize| match class {
                    JobClass::Gpu => self.ads_per_pool[p] > 0,
                    JobClass::Cpu => self.ads_per_pool[p..p + gpus].iter().any(|&n| n > 0),
                };
                let first = pools
                    .iter()
                    .filter(|&&p| advertised(p))
                    .map(|&p| p / gpus)
                    .min_by(|&a, &b| self.regions[a].name.cmp(&self.regions[b].name));
                match first {
                    Some(r) => pools.into_iter().filter(|p| p / gpus == r).collect(),
                    None => Vec::new(),
                }
            })
            .collect()
    }

    fn take_gpu_slot(&mut self, pools: &[usize]) -> Option<InstanceId> {
        let (p, inst) = pools
            .iter()
            .filter_map(|&p| self.free_gpu[p].first().map(|&i| (p, i)))
            .min_by_key(|&(_, i)| i)?;
        self.free_gpu[p].remove(&inst);
        Some(inst)
    }

    fn take_cpu_slot(&mut self, region_rows: &[usize]) -> Option<InstanceId> {
        let gpus = crate::workload::GpuModel::COUNT;
        let all = region_rows.len() == self.regions.len();
        let inst = if all {
            self.free_cpu.first().copied()?
        } else {
            self.free_cpu
                .iter()
                .copied()
                .find(|i| {
                    let r = self.slots[i.index()].as_ref().expect("free slot exists").region.index();
                    region_rows.contains(&(r * gpus))
                })?
        };
        let slot = self.slots[inst.index()].as_mut().expect("free slot exists");
        debug_assert_eq!(slot.state, SlotState::ClaimedGpu);
        slot.cpu_reserved += 1;
        if !slot.cpu_free() {
            self.free_cpu.remove(&inst);
        }
        Some(inst)
    }
}
