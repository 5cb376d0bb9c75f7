//! Analytic and simulated stability regions of multi-channel DCF WLANs.

pub mod aloha;
pub mod error;
pub mod frontier;
pub mod multi_channel;
pub mod params;
pub mod shape;
pub mod simulator;
pub mod single_channel;
pub mod slotstats;

pub use error::{Error, Result};
pub use frontier::{AnalyticSolver, BoundaryTrace, TraceMethod, TracePoint, TraceSpec};
pub use multi_channel::UnbiasedPolicy;
pub use params::{ArrivalVector, ChannelSpec, CollisionModel, SystemParams, MBPS, US};
pub use shape::RegionShape;
pub use simulator::{SimConfig, SimReport};
pub use single_channel::{InitialCondition, SolverOptions};
