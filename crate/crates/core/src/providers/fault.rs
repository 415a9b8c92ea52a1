use crate::engine::SimTime;
use crate::ids::RegionIdx;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultKind {
    /// Requests issued in the window are frozen with this probability until a
    /// manual recovery (or the end of the window).
    RegionalLimitStall { fraction: f64 },
    /// Every explicit de-provisioning call starts this many rogue instances.
    DeprovisionRespawnBug { rogue_per_call: u32 },
    /// Running instances are revoked at this rate per instance-hour.
    Preemption { rate_per_hour: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Affected regions; empty means every region.
    pub regions: Vec<RegionIdx>,
    pub start: SimTime,
    pub end: SimTime,
}

impl FaultSpec {
    pub fn covers_region(&self, region: RegionIdx) -> bool {
        self.regions.is_empty() || self.regions.contains(&region)
    }

    pub fn active(&self, region: RegionIdx, at: SimTime) -> bool {
        self.covers_region(region) && self.start <= at && at <= self.end
    }
}
