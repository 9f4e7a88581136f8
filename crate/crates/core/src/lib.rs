//! Classical side of a real-time decoded stability experiment on an 8-qubit
//! ring: circuit and decoding-graph construction, Pauli-frame sampling,
//! matching and clustering decoders, soft readout calibration, latency and
//! backlog modelling, and the feedback-delay and reset estimators.

pub mod calibration;
pub mod circuit;
pub mod decoders;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod graph;
pub mod noise;
pub mod pauli;
pub mod realtime;
pub mod reset;
pub mod sampler;
pub mod t1_clock;

pub use error::{Error, Result};
