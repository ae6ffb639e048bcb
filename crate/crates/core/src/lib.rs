//! Uplink multi-user MIMO with 1-bit ADCs.
//!
//! The crate models a single-cell uplink in which `K` single-antenna users
//! reach an `M`-antenna base station whose receive chains keep only the sign
//! of each I/Q rail. It provides the Bussgang statistics of the quantized
//! signal, quantization-aware channel estimation and detection, a regular
//! LDPC code with sum-product decoding, and a reproducible Monte-Carlo
//! harness for NMSE and BER sweeps.

pub mod channel;
pub mod config;
pub mod detectors;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod ldpc;
pub mod linalg;
pub mod quantize;
pub mod rng;

pub use error::{Error, Result};
