//! Time-bin qubit and qudit state algebra.
//!
//! A time-bin state of dimension `d` is a complex amplitude vector over `d`
//! consecutive bins of width τ. For `d = 2` the key basis occupies a single
//! bin and the check basis is the equal superposition of both bins. For
//! `d = 4` every state occupies exactly two bins: key-basis states pair
//! consecutive bins `(0,1)` and `(2,3)`, check-basis states pair `(0,2)` and
//! `(1,3)`. In both cases the relative phase between the occupied bins is
//! `0` or `π`.

mod entropy;
mod interferometer;

pub use entropy::{binary_entropy, shannon_entropy_4d, symbol_entropy};
pub use interferometer::{
    interferometer_response, measurement_outcome_distribution, outcome_event, symbol_for_event,
    InterferometerSpec, OutcomeDistribution, Port, PortBinProbability,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use thiserror::Error;

/// Tolerance used for exact algebraic identities.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuditError {
    #[error("probability {0} outside [0, 1]")]
    Domain(f64),
    #[error("index {index} out of range for dimension {dimension}")]
    InvalidIndex { index: usize, dimension: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("unsupported dimension {0}; expected 2 or 4")]
    UnsupportedDimension(usize),
    #[error("interferometer delay must be 1 or 2 bins, got {0}")]
    InvalidDelay(usize),
    #[error("insertion loss must be non-negative, got {0} dB")]
    NegativeLoss(f64),
}

/// Hilbert-space dimension of the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Two,
    Four,
}

impl Dimension {
    pub fn get(self) -> usize {
        match self {
            Dimension::Two => 2,
            Dimension::Four => 4,
        }
    }

    pub fn from_usize(d: usize) -> Result<Self, QuditError> {
        match d {
            2 => Ok(Dimension::Two),
            4 => Ok(Dimension::Four),
            other => Err(QuditError::UnsupportedDimension(other)),
        }
    }

    /// Probability that a uniformly random outcome is wrong, `1 - 1/d`.
    pub fn noise_error_probability(self) -> f64 {
        1.0 - 1.0 / self.get() as f64
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.get())
    }
}

/// Preparation/measurement basis. `Z` carries the key, `X` is only used to
/// bound the phase error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasisName {
    Z,
    X,
}

impl BasisName {
    pub const ALL: [BasisName; 2] = [BasisName::Z, BasisName::X];

    pub fn is_key_basis(self) -> bool {
        self == BasisName::Z
    }

    pub fn index(self) -> usize {
        match self {
            BasisName::Z => 0,
            BasisName::X => 1,
        }
    }
}

impl fmt::Display for BasisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisName::Z => f.write_str("Z"),
            BasisName::X => f.write_str("X"),
        }
    }
}

/// A basis in a given dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Basis {
    pub name: BasisName,
    pub dimension: Dimension,
}

impl Basis {
    pub fn new(name: BasisName, dimension: Dimension) -> Self {
        Self { name, dimension }
    }

    pub fn z(dimension: Dimension) -> Self {
        Self::new(BasisName::Z, dimension)
    }

    pub fn x(dimension: Dimension) -> Self {
        Self::new(BasisName::X, dimension)
    }

    /// All `d` orthonormal states of the basis.
    pub fn states(self) -> Vec<TimeBinState> {
        (0..self.dimension.get())
            .map(|n| state_vector(self, n).expect("index < d"))
            .collect()
    }

    /// The states a transmitter actually prepares in this basis. The
    /// three-state qubit protocol only sends the zero-phase superposition in
    /// the check basis.
    pub fn prepared_indices(self) -> &'static [u8] {
        match (self.dimension, self.name) {
            (Dimension::Two, BasisName::Z) => &[0, 1],
            (Dimension::Two, BasisName::X) => &[0],
            (Dimension::Four, _) => &[0, 1, 2, 3],
        }
    }

    /// Interferometer arm delay (in bins) used to measure this basis, or
    /// `None` for a direct time-of-arrival measurement.
    pub fn measurement_delay(self) -> Option<usize> {
        match (self.dimension, self.name) {
            (Dimension::Two, BasisName::Z) => None,
            (Dimension::Two, BasisName::X) => Some(1),
            (Dimension::Four, BasisName::Z) => Some(1),
            (Dimension::Four, BasisName::X) => Some(2),
        }
    }
}

/// Normalized amplitude vector over `d` time bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBinState {
    basis: Basis,
    index: usize,
    amplitudes: Vec<Complex64>,
}

impl TimeBinState {
    /// Builds a state from raw amplitudes, normalizing them. Used for
    /// perturbed or custom states; canonical states come from
    /// [`state_vector`].
    pub fn from_amplitudes(
        basis: Basis,
        index: usize,
        amplitudes: Vec<Complex64>,
    ) -> Result<Self, QuditError> {
        let d = basis.dimension.get();
        if amplitudes.len() != d {
            return Err(QuditError::DimensionMismatch(amplitudes.len(), d));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let amplitudes = amplitudes.into_iter().map(|a| a / norm).collect();
        Ok(Self {
            basis,
            index,
            amplitudes,
        })
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dimension(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &TimeBinState) -> Result<Complex64, QuditError> {
        if self.dimension() != other.dimension() {
            return Err(QuditError::DimensionMismatch(
                self.dimension(),
                other.dimension(),
            ));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// Canonical state `index` of `basis`.
///
/// For `d = 4` the check basis uses `|x₀⟩ ∝ |0⟩+|2⟩`, `|x₁⟩ ∝ |0⟩−|2⟩`,
/// `|x₂⟩ ∝ |1⟩+|3⟩`, `|x₃⟩ ∝ |1⟩−|3⟩`.
pub fn state_vector(basis: Basis, index: usize) -> Result<TimeBinState, QuditError> {
    let d = basis.dimension.get();
    if index >= d {
        return Err(QuditError::InvalidIndex {
            index,
            dimension: d,
        });
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut amplitudes = vec![zero; d];
    let sign = if index.is_multiple_of(2) { 1.0 } else { -1.0 };
    match (basis.dimension, basis.name) {
        (Dimension::Two, BasisName::Z) => amplitudes[index] = Complex64::new(1.0, 0.0),
        (Dimension::Two, BasisName::X) => {
            amplitudes[0] = Complex64::new(FRAC_1_SQRT_2, 0.0);
            amplitudes[1] = Complex64::new(sign * FRAC_1_SQRT_2, 0.0);
        }
        (Dimension::Four, BasisName::Z) => {
            let first = 2 * (index / 2);
            amplitudes[first] = Complex64::new(FRAC_1_SQRT_2, 0.0);
            amplitudes[first + 1] = Complex64::new(sign * FRAC_1_SQRT_2, 0.0);
        }
        (Dimension::Four, BasisName::X) => {
            let first = index / 2;
            amplitudes[first] = Complex64::new(FRAC_1_SQRT_2, 0.0);
            amplitudes[first + 2] = Complex64::new(sign * FRAC_1_SQRT_2, 0.0);
        }
    }
    Ok(TimeBinState {
        basis,
        index,
        amplitudes,
    })
}

/// `|⟨a|b⟩|²`.
pub fn overlap_probability(a: &TimeBinState, b: &TimeBinState) -> Result<f64, QuditError> {
    Ok(a.inner(b)?.norm_sqr())
}

/// All pairwise overlaps between two bases, with the verdict.
#[derive(Debug, Clone)]
pub struct MubReport {
    pub dimension: Dimension,
    /// `cross[n][m] = |⟨z_n|x_m⟩|²`.
    pub cross: Vec<Vec<f64>>,
    /// Gram matrices `|⟨b_i|b_j⟩|²` of the Z and X bases.
    pub gram_z: Vec<Vec<f64>>,
    pub gram_x: Vec<Vec<f64>>,
    pub max_cross_deviation: f64,
    pub max_gram_deviation: f64,
    pub is_mub: bool,
}

/// Checks that the canonical Z and X bases of dimension `d` are orthonormal
/// and mutually unbiased.
pub fn verify_mub_pair(dimension: Dimension) -> MubReport {
    verify_mub_states(
        dimension,
        &Basis::z(dimension).states(),
        &Basis::x(dimension).states(),
    )
}

/// Same check on arbitrary state sets (used for perturbed phase
/// assignments).
pub fn verify_mub_states(
    dimension: Dimension,
    z_states: &[TimeBinState],
    x_states: &[TimeBinState],
) -> MubReport {
    let d = dimension.get() as f64;
    let overlaps = |a: &[TimeBinState], b: &[TimeBinState]| -> Vec<Vec<f64>> {
        a.iter()
            .map(|s| {
                b.iter()
                    .map(|t| overlap_probability(s, t).unwrap_or(f64::NAN))
                    .collect()
            })
            .collect()
    };
    let cross = overlaps(z_states, x_states);
    let gram_z = overlaps(z_states, z_states);
    let gram_x = overlaps(x_states, x_states);

    let max_cross_deviation = cross
        .iter()
        .flatten()
        .map(|p| (p - 1.0 / d).abs())
        .fold(0.0, f64::max);
    let gram_dev = |g: &[Vec<f64>]| {
        g.iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(move |(j, p)| (p - if i == j { 1.0 } else { 0.0 }).abs())
            })
            .fold(0.0, f64::max)
    };
    let max_gram_deviation = gram_dev(&gram_z).max(gram_dev(&gram_x));
    let complete = z_states.len() == dimension.get() && x_states.len() == dimension.get();
    let is_mub = complete
        && max_cross_deviation.is_finite()
        && max_gram_deviation.is_finite()
        && max_cross_deviation <= EXACT_TOL
        && max_gram_deviation <= EXACT_TOL;

    MubReport {
        dimension,
        cross,
        gram_z,
        gram_x,
        max_cross_deviation,
        max_gram_deviation,
        is_mub,
    }
}
