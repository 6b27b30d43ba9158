//! Proactive optimization for mobile indoor LiFi.
//!
//! The pipeline simulates walking users with handheld devices, collects the
//! uplink SNR the ceiling access points observe, predicts each device's
//! future pose with a sequence LSTM, rebuilds the downlink channel matrix
//! from the predicted poses and solves a zero-forcing sum-rate problem
//! before the channel is needed.

pub mod channel;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kv;
pub mod lstm;
pub mod mobility;
pub mod optimizer;
pub mod scene;
pub mod util;
pub mod window;

pub use error::{Error, Result};
