//! Simulator for NOMA-aided joint communication, sensing and multi-tier computing.
//!
//! Users offload computation to a base station (BS) over uplink NOMA; the BS
//! either computes locally or relays bits to a cloud server (CS) with an ISAC
//! waveform that also illuminates a radar target. The crate provides the
//! closed-form rate and sensing models, a WMMSE-based alternating optimizer for
//! partial offloading, an ADMM-based optimizer for binary offloading,
//! exhaustive-search oracles, benchmarks and a Monte Carlo harness.

pub mod binary;
pub mod config;
pub mod cvxcore;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod partial;
pub mod rates;
pub mod scenario;
pub mod validation;
pub mod wmmse;

pub use error::{Error, Result};
pub use rates::{DecodingOrder, MultipleAccess, SystemModel};
pub use scenario::{sample_channels, ChannelRealization, ScenarioConfig};
