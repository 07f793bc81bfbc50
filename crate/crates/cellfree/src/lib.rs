//! Uplink simulator for cell-free massive MIMO with rate-limited backhaul.
//!
//! A large set of access points (APs) serves a smaller set of single-antenna
//! users over a shared coherence block. Each AP estimates its local channels
//! from uplink pilots, then forwards either quantized estimates plus
//! quantized raw samples, or a locally combined and quantized statistic, over
//! a capacity-limited link to a central processor. The crate generates
//! random deployments, evaluates closed-form achievable rates for both
//! forwarding strategies, optimizes the minimum rate over receiver weights
//! and transmit powers, and trades quantizer resolution against the number
//! of served users under a backhaul bit budget.

pub mod assignment;
pub mod config;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod quantization;
pub mod rates;
pub mod rng;
pub mod scenario;
pub mod solver;

pub use config::SystemConfig;
pub use error::{Error, Result};
