//! Joint task caching and computation offloading for a multi-user MEC
//! system: problem model, energy kernels, scenario generation, a convex
//! solver for fixed caching decisions, branch-and-bound over the caching
//! vector, the baseline schemes and an experiment harness.

pub mod bnb;
pub mod energy;
pub mod error;
pub mod harness;
pub mod model;
pub mod scenario;
pub mod schemes;
pub mod subproblem;

pub use error::{Error, Result};
pub use model::{
    CachePlacement, CacheState, EnergyBreakdown, Scenario, Schedule, SchemeId, SolveReport, SystemParams,
    TaskLibrary,
};
pub use scenario::{generate, GenConfig};
