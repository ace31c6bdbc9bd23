//! Fresh-CSMA: distributed age-of-information scheduling in single-hop
//! wireless networks.
//!
//! Sources contend with exponential backoff timers whose rates grow with
//! their weighted squared age (or with their age of incorrect information),
//! so the stalest source almost always wins the channel. This crate holds a
//! seedable packet-level simulator for the idealized and minislot models, the
//! centralized baselines, and the closed-form bounds used to check them.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod params;
pub mod policy;
pub mod rng;
pub mod special;
pub mod timer;
pub mod verify;

pub use engine::{run, AgeState, Engine, FrameOutcome, MarkovNetState, RunOptions, SimulationResult, StopRule};
pub use error::{Error, Result};
pub use params::{BackoffParams, LogBase, NetworkConfig};
pub use policy::{AccessModel, PolicyKind};
pub use rng::RngStream;
