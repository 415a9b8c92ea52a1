use std::fmt;
use std::str::FromStr;

use crate::engine::SimTime;
use crate::ids::{GroupId, InstanceId, RegionIdx};
use crate::workload::GpuModel;

/// Instance lifecycle states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InstanceState {
    Requested,
    Booting,
    Running,
    Stopped,
    Deallocated,
    Terminated,
}

impl InstanceState {
    pub const ALL: [InstanceState; 6] = [
        InstanceState::Requested,
        InstanceState::Booting,
        InstanceState::Running,
        InstanceState::Stopped,
        InstanceState::Deallocated,
        InstanceState::Terminated,
    ];

    /// The legal transition relation. `Requested -> Terminated` is a
    /// cancelled request; preemption is `Running -> Terminated`.
    pub fn can_transition(self, to: InstanceState) -> bool {
        use InstanceState::*;
        matches!(
            (self, to),
            (Requested, Booting)
                | (Requested, Terminated)
                | (Booting, Running)
                | (Running, Stopped)
                | (Running, Deallocated)
                | (Running, Terminated)
                | (Stopped, Deallocated)
                | (Stopped, Running)
        )
    }

    /// Whether the provider charges for an instance in this state. A stopped
    /// but not deallocated instance keeps its hardware and is charged.
    pub fn billable(self) -> bool {
        matches!(self, InstanceState::Booting | InstanceState::Running | InstanceState::Stopped)
    }

    /// Whether the instance counts against its region's quota.
    pub fn holds_quota(self) -> bool {
        matches!(
            self,
            InstanceState::Requested | InstanceState::Booting | InstanceState::Running | InstanceState::Stopped
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            InstanceState::Requested => "Requested",
            InstanceState::Booting => "Booting",
            InstanceState::Running => "Running",
            InstanceState::Stopped => "Stopped",
            InstanceState::Deallocated => "Deallocated",
            InstanceState::Terminated => "Terminated",
        }
    }
}

impl fmt::Display for InstanceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InstanceState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InstanceState::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown instance state `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: InstanceId,
    pub group: Option<GroupId>,
    pub region: RegionIdx,
    pub gpu: GpuModel,
    pub state: InstanceState,
    /// Spawned by a faulty de-provisioning call; invisible to group automation.
    pub rogue: bool,
    /// Auto-replacement generation; 0 for instances requested directly.
    pub generation: u32,
    /// Incremented on every entry into `Running`; stale preemption events
    /// carry an older epoch.
    pub epoch: u32,
    pub billable_since: Option<SimTime>,
    /// Held in `Requested` by a regional limit stall.
    pub frozen: bool,
    /// Marked for removal by a scale-set shrink, still allocated and billed.
    pub surplus: bool,
    pub preempted: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_relation() {
        use InstanceState::*;
        let legal: Vec<_> = InstanceState::ALL
            .iter()
            .flat_map(|&a| InstanceState::ALL.iter().map(move |&b| (a, b)))
            .filter(|(a, b)| a.can_transition(*b))
            .collect();
        assert_eq!(
            legal,
            vec![
                (Requested, Booting),
                (Requested, Terminated),
                (Booting, Running),
                (Running, Stopped),
                (Running, Deallocated),
                (Running, Terminated),
                (Stopped, Running),
                (Stopped, Deallocated),
            ]
        );
        for s in InstanceState::ALL {
            assert!(!Deallocated.can_transition(s) && !Terminated.can_transition(s));
            assert_eq!(s.name().parse::<InstanceState>().unwrap(), s);
        }
    }

    #[test]
    fn billing_follows_allocation() {
        use InstanceState::*;
        assert!(Booting.billable() && Running.billable() && Stopped.billable());
        assert!(!Requested.billable() && !Deallocated.billable() && !Terminated.billable());
    }
}
