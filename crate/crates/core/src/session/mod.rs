//! Block orchestration: simulate, sift, estimate, bound and convert the key
//! length into a secret key rate.

mod net;
mod optimize;
mod wire;

pub use net::{
    resume_networked_session, run_networked_session, run_networked_session_with, Checkpoint,
    NetError, NetOptions, Stage,
};
pub use optimize::{optimize_parameters, GridPoint, Optimization, SearchSpace};
pub use wire::{
    decode_message, encode_message, pack_bits, unpack_bits, FrameReader, FrameWriter, MessageType,
    Payload, ReconciliationMessage, WireError, HEADER_LEN, MAX_FRAME_LEN,
};

use crate::channel::{
    expected_tallies, simulate_block_with, AliceRecord, BlockResult, BobRecord, ChannelError,
    LinkModel, NoiseParams, Protocol, SimulationOptions,
};
use crate::finite_key::{
    estimate_bounds, key_length, lambda_ec, DecoyScheme, FiniteKeyError, Intensity, PhotonBounds,
    SecurityParams, TallyCounts,
};
use crate::qudit::BasisName;
use crate::reference::OperatingPoint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    FiniteKey(#[from] FiniteKeyError),
    #[error("no sifted detections in the {0:?} basis")]
    EmptyBasis(BasisName),
    #[error("block duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("invalid error-correction efficiency {0}")]
    InvalidEfficiency(f64),
    #[error("the parameter search space is empty")]
    EmptySearchSpace,
    #[error("records are not aligned: {alice} Alice entries, {bob} Bob entries")]
    Misaligned { alice: usize, bob: usize },
}

/// How the block statistics are produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionMode {
    /// Expected tallies, no sampling.
    #[default]
    Analytic,
    /// Seeded Monte Carlo with sifting of per-click records.
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub protocol: Protocol,
    /// Carries the decoy scheme and both basis probabilities.
    pub link: LinkModel,
    pub security: SecurityParams,
    /// Error-correction inefficiency.
    pub f_ec: f64,
    pub mode: SessionMode,
    /// Intensity pattern from a PRBS12 sequence in Monte Carlo mode.
    pub prbs: bool,
}

impl SessionConfig {
    pub const DEFAULT_F_EC: f64 = 1.16;

    pub fn new(
        protocol: Protocol,
        channel_loss_db: f64,
        decoy: DecoyScheme,
        p_z_alice: f64,
        p_z_bob: f64,
        noise: NoiseParams,
    ) -> Self {
        Self {
            protocol,
            link: LinkModel::new(protocol, channel_loss_db, decoy, p_z_alice, p_z_bob, noise),
            security: SecurityParams::default(),
            f_ec: Self::DEFAULT_F_EC,
            mode: SessionMode::Analytic,
            prbs: false,
        }
    }

    /// Settings of a reference operating point with calibrated noise.
    pub fn from_point(point: &OperatingPoint) -> Self {
        Self::new(
            point.protocol,
            point.loss_db,
            DecoyScheme::new(point.mu1, point.mu2),
            point.p_z_alice,
            point.p_z_bob,
            NoiseParams::calibrated(point.protocol),
        )
    }

    pub fn with_mode(mut self, mode: SessionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn decoy(&self) -> &DecoyScheme {
        &self.link.source.decoy
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.link.validate(self.protocol)?;
        self.security.validate()?;
        if !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            return Err(SessionError::InvalidEfficiency(self.f_ec));
        }
        Ok(())
    }
}

/// Everything computed for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub protocol: Protocol,
    pub channel_loss_db: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub p_z_alice: f64,
    pub p_z_bob: f64,
    pub qber_z: f64,
    pub error_rate_x: f64,
    pub phi_z_upper: f64,
    pub lambda_ec: f64,
    pub key_length_bits: f64,
    /// Seconds of key-generation transmission.
    pub block_duration: f64,
    pub skr_bits_per_second: f64,
    /// Secret bits per prepared state.
    pub secret_fraction: f64,
    pub tallies: TallyCounts,
    pub bounds_snapshot: PhotonBounds,
}

/// One sifted detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedPair {
    pub basis: BasisName,
    pub intensity: Intensity,
    pub sent: u8,
    pub received: u8,
}

impl SiftedPair {
    pub fn is_error(&self) -> bool {
        self.sent != self.received
    }
}

/// Sifted detections of a block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiftedPairs {
    pub pairs: Vec<SiftedPair>,
}

impl SiftedPairs {
    pub fn tallies(&self) -> TallyCounts {
        let mut t = TallyCounts::default();
        for p in &self.pairs {
            t.record(p.basis, p.intensity, p.is_error());
        }
        t
    }

    pub fn count(&self, basis: BasisName, intensity: Intensity) -> usize {
        self.pairs
            .iter()
            .filter(|p| p.basis == basis && p.intensity == intensity)
            .count()
    }
}

/// Keeps detections with matching bases and a conclusive outcome.
pub fn sift(alice: &[AliceRecord], bob: &[BobRecord]) -> Result<SiftedPairs, SessionError> {
    if alice.len() != bob.len() {
        return Err(SessionError::Misaligned {
            alice: alice.len(),
            bob: bob.len(),
        });
    }
    let pairs = alice
        .iter()
        .zip(bob)
        .filter(|(a, b)| a.basis == b.basis)
        .filter_map(|(a, b)| {
            b.outcome.map(|received| SiftedPair {
                basis: a.basis,
                intensity: a.intensity,
                sent: a.symbol,
                received,
            })
        })
        .collect();
    Ok(SiftedPairs { pairs })
}

/// Symbol error rates per basis, overall and per intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub qber_z: f64,
    pub error_rate_x: f64,
    /// `[basis][intensity]`; `None` when that partition is empty.
    pub per_intensity: [[Option<f64>; 2]; 2],
}

pub fn estimate_error_rates(tallies: &TallyCounts) -> Result<ErrorRates, SessionError> {
    let rate = |b: BasisName| {
        tallies
            .basis(b)
            .error_rate()
            .ok_or(SessionError::EmptyBasis(b))
    };
    let mut per_intensity = [[None; 2]; 2];
    for b in BasisName::ALL {
        let t = tallies.basis(b);
        for k in Intensity::ALL {
            let n = t.detections(k);
            per_intensity[b.index()][k.index()] = (n > 0).then(|| t.errors(k) as f64 / n as f64);
        }
    }
    Ok(ErrorRates {
        qber_z: rate(BasisName::Z)?,
        error_rate_x: rate(BasisName::X)?,
        per_intensity,
    })
}

/// `SKR = ℓ / duration` and the secret fraction `SKR / state_rate`.
pub fn compute_skr(
    key_length_bits: f64,
    duration: f64,
    state_rate: f64,
) -> Result<(f64, f64), SessionError> {
    if !(duration > 0.0) {
        return Err(SessionError::InvalidDuration(duration));
    }
    let skr = key_length_bits.max(0.0) / duration;
    Ok((skr, skr / state_rate))
}

/// Finite-key evaluation of a block's tallies.
pub fn evaluate_block(
    config: &SessionConfig,
    tallies: &TallyCounts,
    duration: f64,
) -> Result<KeyRateReport, SessionError> {
    let rates = estimate_error_rates(tallies)?;
    let dim = config.protocol.dimension();
    let security = config
        .security
        .with_block_size(tallies.z.total_detections());
    let bounds = estimate_bounds(tallies, config.decoy(), &security, dim)?;
    let lambda = lambda_ec(tallies.z.total_detections(), rates.qber_z, dim, config.f_ec)?;
    let ell = key_length(dim, &bounds, lambda, &security);
    let (skr, fraction) = compute_skr(ell, duration, config.link.source.state_rate)?;
    let decoy = config.decoy();
    Ok(KeyRateReport {
        protocol: config.protocol,
        channel_loss_db: config.link.channel_loss_db,
        mu1: decoy.mu1,
        mu2: decoy.mu2,
        p_z_alice: config.link.source.p_z_alice,
        p_z_bob: config.link.p_z_bob,
        qber_z: rates.qber_z,
        error_rate_x: rates.error_rate_x,
        phi_z_upper: bounds.phi_z_upper,
        lambda_ec: lambda,
        key_length_bits: ell,
        block_duration: duration,
        skr_bits_per_second: skr,
        secret_fraction: fraction,
        tallies: *tallies,
        bounds_snapshot: bounds,
    })
}

/// Simulated block used by a session, with records in Monte Carlo mode.
pub fn simulate_session_block(
    config: &SessionConfig,
    seed: u64,
) -> Result<BlockResult, SessionError> {
    config.validate()?;
    let n_z = config.security.block_size_nz;
    Ok(match config.mode {
        SessionMode::Analytic => expected_tallies(&config.link, config.protocol, n_z)?,
        SessionMode::MonteCarlo => simulate_block_with(
            &config.link,
            config.protocol,
            n_z,
            seed,
            SimulationOptions {
                keep_records: true,
                prbs: config.prbs,
            },
        )?,
    })
}

/// Runs one block end to end. The seed only matters in Monte Carlo mode.
pub fn run_session(config: &SessionConfig, seed: u64) -> Result<KeyRateReport, SessionError> {
    let block = simulate_session_block(config, seed)?;
    let tallies = match &block.records {
        Some(r) => sift(&r.alice, &r.bob)?.tallies(),
        None => block.tallies,
    };
    evaluate_block(config, &tallies, block.wall_time_equivalent)
}
