//! Link simulation: source, fiber, interferometers and detectors, with an
//! analytic expectation path and a seeded Monte Carlo path.

mod analytic;
mod calibrate;
mod model;
mod montecarlo;
mod outcomes;
mod prbs;

pub use analytic::{dead_time_throttle, end_to_end_efficiency, expected_tallies};
pub use calibrate::{
    calibrate_noise, reference_targets, CalibrationError, CalibrationTarget, NoiseFit,
    QBER_TOLERANCE,
};
pub use model::{db_to_transmission, DetectorModel, LinkModel, NoiseParams, Protocol, SourceModel};
pub use montecarlo::{
    sample_photon_number, simulate_block, simulate_block_with, AliceRecord, BlockRecords,
    BobRecord, PhotonTruth, SimulationOptions,
};
pub use outcomes::timing_error_probability;
pub use prbs::Prbs12;

use crate::finite_key::{FiniteKeyError, TallyCounts};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid link parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("unknown protocol {0:?}, expected 2D or 4D")]
    UnknownProtocol(String),
    #[error("target number of key-basis detections must be positive")]
    EmptyTarget,
    #[error("no key-basis detections are possible on this link")]
    NoDetections,
    #[error(transparent)]
    FiniteKey(#[from] FiniteKeyError),
}

/// Outcome of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResult {
    pub tallies: TallyCounts,
    /// Seconds of key-generation transmission charged to the block.
    pub wall_time_equivalent: f64,
    /// Seconds of transmission including any separate check-basis run.
    pub measurement_time: f64,
    /// Clicks per second at each detector, in run order.
    pub raw_click_rate: Vec<f64>,
    pub pulses_sent: u64,
    pub pulses_per_intensity: [u64; 2],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truth: Option<PhotonTruth>,
    #[serde(skip)]
    pub records: Option<BlockRecords>,
}
