//! Two-level collector tree: per-region leaf collectors absorb the expensive
//! startd handshake and forward ads to the main collector.

use std::time::Duration;

use crate::engine::SimTime;
use crate::ids::RegionIdx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LeafId {
    pub region: RegionIdx,
    pub index: u16,
}

#[derive(Debug, Clone, Default)]
pub struct Leaf {
    /// Time the leaf finishes its current handshake backlog.
    pub busy_until: SimTime,
    pub max_backlog: Duration,
    pub handshakes: u64,
}

#[derive(Debug, Clone)]
pub struct CollectorTree {
    leaves: Vec<Vec<Leaf>>,
    service_time: Duration,
}

impl CollectorTree {
    pub fn new(regions: usize, leaves_per_region: u16, service_time: Duration) -> Self {
        Self {
            leaves: vec![vec![Leaf::default(); leaves_per_region as usize]; regions],
            service_time,
        }
    }

    pub fn leaves_in(&self, region: RegionIdx) -> usize {
        self.leaves.get(region.index()).map_or(0, Vec::len)
    }

    /// Queues a handshake on a leaf (FIFO, one at a time). Returns when the
    /// handshake completes.
    pub fn enqueue(&mut self, leaf: LeafId, now: SimTime) -> SimTime {
        let l = &mut self.leaves[leaf.region.index()][leaf.index as usize];
        let start = l.busy_until.max(now);
        let backlog = start - now;
        if backlog > l.max_backlog {
            l.max_backlog = backlog;
        }
        l.busy_until = start + self.service_time;
        l.handshakes += 1;
        l.busy_until
    }

    /// Drops every leaf of a region that has no collector node.
    pub fn clear_region(&mut self, region: RegionIdx) {
        if let Some(l) = self.leaves.get_mut(region.index()) {
            l.clear();
        }
    }

    pub fn leaf(&self, id: LeafId) -> &Leaf {
        &self.leaves[id.region.index()][id.index as usize]
    }

    /// Longest wait any startd spent queued at any leaf.
    pub fn max_backlog(&self) -> Duration {
        self.leaves.iter().flatten().map(|l| l.max_backlog).max().unwrap_or_default()
    }
}
