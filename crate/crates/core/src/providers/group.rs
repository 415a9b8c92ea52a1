use std::collections::BTreeSet;

use crate::ids::{GroupId, InstanceId, RegionIdx};
use crate::providers::Flavor;
use crate::workload::GpuModel;

/// Handle to a fleet. No resize operation accepts it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FleetId(pub(crate) GroupId);

/// Handle to a scale set, obtainable only for groups of that flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScaleSetId(pub(crate) GroupId);

/// Handle to an instance group, obtainable only for groups of that flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceGroupId(pub(crate) GroupId);

macro_rules! group_handle {
    ($($t:ident),*) => {$(
        impl $t {
            pub fn group(self) -> GroupId {
                self.0
            }
        }
    )*};
}
group_handle!(FleetId, ScaleSetId, InstanceGroupId);

/// A GPU-homogeneous set of instances managed through one provider API.
#[derive(Debug, Clone, PartialEq)]
pub struct ProvisioningGroup {
    pub id: GroupId,
    pub flavor: Flavor,
    pub region: RegionIdx,
    pub gpu: GpuModel,
    pub desired: u32,
    /// Hard size cap (scale sets only).
    pub max_size: Option<u32>,
    /// Instances currently allocated to the group.
    pub members: BTreeSet<InstanceId>,
    /// Generations of replacements waiting for the next provider tick.
    pub pending_replacements: Vec<u32>,
}
