//! Simulator for federated learning over unreliable wireless uplinks.
//!
//! Devices train locally and upload over a Rayleigh-faded channel that drops
//! packets with a distance- and load-dependent probability. The server
//! aggregates what arrives under one of two rules: GoMORE reuses the
//! previous global model for every lost upload, DDS reweights the received
//! ones by their inverse success probability. The crate covers the channel
//! model, data partitioning, local training, both aggregation rules, the
//! closed-form divergence bounds, the participant-count planner and a
//! reproducible experiment harness.

pub mod aggregation;
pub mod analysis;
pub mod channel;
pub mod data;
pub mod error;
pub mod harness;
pub mod learner;
pub mod optimizer;
pub mod rng;
pub mod types;
pub mod vector;

pub use aggregation::StrategyId;
pub use error::{Error, Result};
pub use rng::RngSpec;
pub use types::{HyperParams, SelectionSet};
pub use vector::ParamVector;
