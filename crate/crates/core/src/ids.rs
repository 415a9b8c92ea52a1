//! Entity identifiers shared across the simulator.

use std::fmt;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident($inner:ty), $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub $inner);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// A cloud instance (VM). Dense, allocated in creation order.
    InstanceId(u32),
    "i"
);
id_type!(
    /// A provisioning group (fleet, scale set or instance group).
    GroupId(u32),
    "g"
);
id_type!(
    /// A job in the pool. Dense, allocated in submission order.
    JobId(u32),
    "j"
);
id_type!(
    /// Index of a region in the scenario's region table.
    RegionIdx(u16),
    "r"
);
id_type!(
    /// A job queue service.
    ScheddId(u16),
    "s"
);
