use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::engine::secs;
use crate::rng::RngStream;
use crate::workload::GpuModel;

/// Anonymized cloud provider. Each exposes one provisioning-group flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provider {
    A,
    B,
    C,
}

impl Provider {
    pub fn flavor(self) -> Flavor {
        match self {
            Provider::A => Flavor::Fleet,
            Provider::B => Flavor::ScaleSet,
            Provider::C => Flavor::InstanceGroup,
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Provisioning-group semantics.
///
/// * `Fleet`: ephemeral, sized once at creation.
/// * `ScaleSet`: resizable up to a hard maximum; stopping a member at the OS
///   level does not release (or stop billing) it.
/// * `InstanceGroup`: resizable; members that terminate without an explicit
///   delete call are replaced while the group is below its desired size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flavor {
    Fleet,
    ScaleSet,
    InstanceGroup,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Log-normal boot delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootDelay {
    pub median_s: f64,
    pub sigma: f64,
}

impl Default for BootDelay {
    fn default() -> Self {
        Self { median_s: 90.0, sigma: 0.5 }
    }
}

impl BootDelay {
    pub fn fixed(s: f64) -> Self {
        Self { median_s: s, sigma: 0.0 }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Duration {
        if self.sigma == 0.0 {
            return secs(self.median_s);
        }
        let dist = LogNormal::new(self.median_s.ln(), self.sigma).expect("valid log-normal");
        secs(dist.sample(rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    pub provider: Provider,
    /// Geographic grouping label for reporting.
    pub geo: String,
    /// Concurrent instance cap per GPU model; absent models have quota 0.
    pub quota: BTreeMap<GpuModel, u32>,
    pub boot: BootDelay,
    /// One-way latency from the region to the pool core, seconds.
    pub wan_latency_s: f64,
}

impl Region {
    pub fn quota_for(&self, gpu: GpuModel) -> u32 {
        self.quota.get(&gpu).copied().unwrap_or(0)
    }
}
