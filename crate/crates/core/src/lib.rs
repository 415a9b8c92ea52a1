//! Discrete-event simulator of a multi-cloud GPU burst run by a single
//! workload-management pool.

pub mod check;
pub mod economics;
pub mod engine;
pub mod ids;
pub mod pool;
pub mod providers;
pub mod reference;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod workload;
