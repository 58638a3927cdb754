//! One-decoy finite-key analysis.
//!
//! Tallies are split by basis and intensity. Detection-count corrections use
//! `eps_1`, error-count corrections use `eps_2`; both are Hoeffding terms with
//! natural logarithms.

use crate::qudit::{symbol_entropy, BasisName, Dimension};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiniteKeyError {
    #[error("{name} = {value} must lie in (0, 1)")]
    InvalidEpsilon { name: &'static str, value: f64 },
    #[error("block size must be at least 1")]
    EmptyBlock,
    #[error("intensities must satisfy mu1 > mu2 > 0, got mu1 = {mu1}, mu2 = {mu2}")]
    InvalidIntensities { mu1: f64, mu2: f64 },
    #[error("send probabilities must be positive and sum to 1, got {0} and {1}")]
    InvalidSendProbabilities(f64, f64),
    #[error("single-photon bounds must be positive, got D1_Z = {d1_z}, D1_X = {d1_x}")]
    NonPositiveSinglePhoton { d1_z: f64, d1_x: f64 },
    #[error("gamma correction domain violated: a = {a}, b = {b}, c = {c}, d = {d}")]
    GammaDomain { a: f64, b: f64, c: f64, d: f64 },
    #[error("error-correction efficiency must be >= 1, got {0}")]
    InvalidEfficiency(f64),
    #[error("probability {0} outside [0, 1]")]
    Domain(f64),
    #[error("tally for {basis} basis has {errors} errors but {detections} detections")]
    InconsistentTally {
        basis: BasisName,
        errors: u64,
        detections: u64,
    },
}

/// Secrecy, correctness and concentration-bound parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    pub eps_sec: f64,
    pub eps_corr: f64,
    pub eps_1: f64,
    pub eps_2: f64,
    /// Z-basis detections per privacy-amplification block.
    pub block_size_nz: u64,
    /// Constant inside the logarithm of the phase-error correction.
    pub gamma_constant: f64,
}

impl Default for SecurityParams {
    fn default() -> Self {
        Self::new(1e-9, 1e-9, 10_000_000)
    }
}

impl SecurityParams {
    /// `eps_1 = eps_2 = eps_sec / 19`.
    pub fn new(eps_sec: f64, eps_corr: f64, block_size_nz: u64) -> Self {
        Self {
            eps_sec,
            eps_corr,
            eps_1: eps_sec / 19.0,
            eps_2: eps_sec / 19.0,
            block_size_nz,
            gamma_constant: 21.0,
        }
    }

    pub fn with_block_size(mut self, block_size_nz: u64) -> Self {
        self.block_size_nz = block_size_nz;
        self
    }

    pub fn validate(&self) -> Result<(), FiniteKeyError> {
        for (name, value) in [
            ("eps_sec", self.eps_sec),
            ("eps_corr", self.eps_corr),
            ("eps_1", self.eps_1),
            ("eps_2", self.eps_2),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(FiniteKeyError::InvalidEpsilon { name, value });
            }
        }
        if self.block_size_nz == 0 {
            return Err(FiniteKeyError::EmptyBlock);
        }
        Ok(())
    }

    /// `6 log2(19/eps_sec) + log2(2/eps_corr)`.
    pub fn constant_cost(&self) -> f64 {
        6.0 * (19.0 / self.eps_sec).log2() + (2.0 / self.eps_corr).log2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Intensity {
    Mu1,
    Mu2,
}

impl Intensity {
    pub const ALL: [Intensity; 2] = [Intensity::Mu1, Intensity::Mu2];

    pub fn index(self) -> usize {
        match self {
            Intensity::Mu1 => 0,
            Intensity::Mu2 => 1,
        }
    }
}

/// Signal and decoy intensities with their send probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyScheme {
    pub mu1: f64,
    pub mu2: f64,
    pub p_mu1: f64,
    pub p_mu2: f64,
}

impl DecoyScheme {
    /// Equal send probabilities.
    pub fn new(mu1: f64, mu2: f64) -> Self {
        Self {
            mu1,
            mu2,
            p_mu1: 0.5,
            p_mu2: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), FiniteKeyError> {
        if !(self.mu1 > self.mu2 && self.mu2 > 0.0) {
            return Err(FiniteKeyError::InvalidIntensities {
                mu1: self.mu1,
                mu2: self.mu2,
            });
        }
        if !(self.p_mu1 > 0.0 && self.p_mu2 > 0.0 && (self.p_mu1 + self.p_mu2 - 1.0).abs() < 1e-12)
        {
            return Err(FiniteKeyError::InvalidSendProbabilities(
                self.p_mu1, self.p_mu2,
            ));
        }
        Ok(())
    }

    pub fn mean(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Mu1 => self.mu1,
            Intensity::Mu2 => self.mu2,
        }
    }

    pub fn probability(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Mu1 => self.p_mu1,
            Intensity::Mu2 => self.p_mu2,
        }
    }
}

/// Detections `n` and errors `m` of one basis, indexed by intensity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisTally {
    pub n: [u64; 2],
    pub m: [u64; 2],
}

impl BasisTally {
    pub fn detections(&self, k: Intensity) -> u64 {
        self.n[k.index()]
    }

    pub fn errors(&self, k: Intensity) -> u64 {
        self.m[k.index()]
    }

    pub fn total_detections(&self) -> u64 {
        self.n.iter().sum()
    }

    pub fn total_errors(&self) -> u64 {
        self.m.iter().sum()
    }

    pub fn error_rate(&self) -> Option<f64> {
        let n = self.total_detections();
        (n > 0).then(|| self.total_errors() as f64 / n as f64)
    }
}

/// Per-basis, per-intensity detection and error counts of a block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyCounts {
    pub z: BasisTally,
    pub x: BasisTally,
}

impl TallyCounts {
    pub fn basis(&self, b: BasisName) -> &BasisTally {
        match b {
            BasisName::Z => &self.z,
            BasisName::X => &self.x,
        }
    }

    pub fn basis_mut(&mut self, b: BasisName) -> &mut BasisTally {
        match b {
            BasisName::Z => &mut self.z,
            BasisName::X => &mut self.x,
        }
    }

    pub fn record(&mut self, b: BasisName, k: Intensity, error: bool) {
        let t = self.basis_mut(b);
        t.n[k.index()] += 1;
        if error {
            t.m[k.index()] += 1;
        }
    }

    pub fn validate(&self) -> Result<(), FiniteKeyError> {
        for b in BasisName::ALL {
            let t = self.basis(b);
            for k in Intensity::ALL {
                if t.errors(k) > t.detections(k) {
                    return Err(FiniteKeyError::InconsistentTally {
                        basis: b,
                        errors: t.errors(k),
                        detections: t.detections(k),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Upper,
    Lower,
}

/// `(e^k / p_k) (count ± sqrt(total/2 · ln(1/eps)))`, lower values clamped at 0.
pub fn finite_corrected_count(
    count: u64,
    total: u64,
    k: f64,
    p_k: f64,
    eps: f64,
    direction: Direction,
) -> f64 {
    let delta = (total as f64 / 2.0 * (1.0 / eps).ln()).sqrt();
    let scale = k.exp() / p_k;
    match direction {
        Direction::Upper => scale * (count as f64 + delta),
        Direction::Lower => (scale * (count as f64 - delta)).max(0.0),
    }
}

/// Total probability of sending `n` photons, `Σ_k p_k e^{-k} k^n / n!`.
pub fn tau_n(n: u32, scheme: &DecoyScheme) -> f64 {
    let factorial: f64 = (1..=n).map(f64::from).product();
    Intensity::ALL
        .iter()
        .map(|&k| {
            let mu = scheme.mean(k);
            scheme.probability(k) * (-mu).exp() * mu.powi(n as i32) / factorial
        })
        .sum()
}

/// `d / (d - 1)`: inverse of the error probability of a vacuum event.
fn vacuum_prefactor(dimension: Dimension) -> f64 {
    1.0 / dimension.noise_error_probability()
}

/// Upper bound on vacuum events in the Z basis from the error count at
/// intensity `k_choice`.
pub fn vacuum_upper(
    tallies: &TallyCounts,
    scheme: &DecoyScheme,
    params: &SecurityParams,
    dimension: Dimension,
    k_choice: Intensity,
) -> f64 {
    vacuum_upper_in(BasisName::Z, tallies, scheme, params, dimension, k_choice)
}

/// [`vacuum_upper`] for an arbitrary basis.
pub fn vacuum_upper_in(
    basis: BasisName,
    tallies: &TallyCounts,
    scheme: &DecoyScheme,
    params: &SecurityParams,
    dimension: Dimension,
    k_choice: Intensity,
) -> f64 {
    let t = tallies.basis(basis);
    let k = scheme.mean(k_choice);
    let tau0 = tau_n(0, scheme);
    let m_total = t.total_errors() as f64;
    let n_total = t.total_detections() as f64;
    let err_term = tau0 * k.exp() / scheme.probability(k_choice)
        * (t.errors(k_choice) as f64 + (m_total / 2.0 * (1.0 / params.eps_2).ln()).sqrt());
    let det_term = (n_total / 2.0 * (1.0 / params.eps_1).ln()).sqrt();
    vacuum_prefactor(dimension) * (err_term + det_term)
}

fn corrected_detections(
    t: &BasisTally,
    scheme: &DecoyScheme,
    params: &SecurityParams,
) -> (f64, f64) {
    let total = t.total_detections();
    let n_minus_mu2 = finite_corrected_count(
        t.detections(Intensity::Mu2),
        total,
        scheme.mu2,
        scheme.p_mu2,
        params.eps_1,
        Direction::Lower,
    );
    let n_plus_mu1 = finite_corrected_count(
        t.detections(Intensity::Mu1),
        total,
        scheme.mu1,
        scheme.p_mu1,
        params.eps_1,
        Direction::Upper,
    );
    (n_minus_mu2, n_plus_mu1)
}

/// Lower bound on Z-basis vacuum events.
pub fn vacuum_lower(tallies: &TallyCounts, scheme: &DecoyScheme, params: &SecurityParams) -> f64 {
    vacuum_lower_in(BasisName::Z, tallies, scheme, params)
}

pub fn vacuum_lower_in(
    basis: BasisName,
    tallies: &TallyCounts,
    scheme: &DecoyScheme,
    params: &SecurityParams,
) -> f64 {
    let (n_minus_mu2, n_plus_mu1) = corrected_detections(tallies.basis(basis), scheme, params);
    let v = tau_n(0, scheme) * (scheme.mu1 * n_minus_mu2 - scheme.mu2 * n_plus_mu1)
        / (scheme.mu1 - scheme.mu2);
    v.max(0.0)
}

/// Lower bound on Z-basis single-photon events given a vacuum upper bound.
pub fn single_photon_lower(
    tallies: &TallyCounts,
    scheme: &DecoyScheme,
    params: &SecurityParams,
    vacuum_upper_value: f64,
) -> Result<f64, FiniteKeyError> {
    single_photon_lower_in(BasisName::Z, tallies, scheme, params, vacuum_upper_value)
}

pub fn single_photon_lower_in(
    basis: BasisName,
    tallies: &TallyCounts,
    scheme: &DecoyScheme,
    params: &SecurityParams,
    vacuum_upper_value: f64,
) -> Result<f64, FiniteKeyError> {
    let (mu1, mu2) = (scheme.mu1, scheme.mu2);
    if !(mu1 > mu2 && mu2 > 0.0) {
        return Err(FiniteKeyError::InvalidIntensities { mu1, mu2 });
    }
    let (n_minus_mu2, n_plus_mu1) = corrected_detections(tallies.basis(basis), scheme, params);
    let mu1_sq = mu1 * mu1;
    let bracket = n_minus_mu2
        - (mu2 * mu2 / mu1_sq) * n_plus_mu1
        - ((mu1_sq - mu2 * mu2) / mu1_sq) * (vacuum_upper_value / tau_n(0, scheme));
    let v = tau_n(1, scheme) * mu1 / (mu2 * (mu1 - mu2)) * bracket;
    Ok(v.max(0.0))
}

/// Finite-sample correction of the phase-error rate with the default
/// constant 21.
pub fn gamma_correction(a: f64, b: f64, c: f64, d: f64) -> Result<f64, FiniteKeyError> {
    gamma_correction_with(a, b, c, d, 21.0)
}

/// `γ = sqrt( (c+d)(1-b)b / (c d ln2) · log2( (c+d)/(c d (1-b) b) · (K/a)² ) )`.
pub fn gamma_correction_with(
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    constant: f64,
) -> Result<f64, FiniteKeyError> {
    if !(a > 0.0 && (0.0..=1.0).contains(&b) && c > 0.0 && d > 0.0) {
        return Err(FiniteKeyError::GammaDomain { a, b, c, d });
    }
    if b == 0.0 || b == 1.0 {
        return Ok(0.0);
    }
    let spread = (c + d) * (1.0 - b) * b / (c * d * std::f64::consts::LN_2);
    let log_arg = (c + d) / (c * d * (1.0 - b) * b) * (constant / a).powi(2);
    Ok((spread * log_arg.log2()).max(0.0).sqrt())
}

/// Upper bound on the Z-basis phase-error rate from X-basis errors.
pub fn phase_error_upper(
    tallies: &TallyCounts,
    scheme: &DecoyScheme,
    params: &SecurityParams,
    d1_z: f64,
    d1_x: f64,
) -> Result<f64, FiniteKeyError> {
    if !(d1_z > 0.0 && d1_x > 0.0) {
        return Err(FiniteKeyError::NonPositiveSinglePhoton { d1_z, d1_x });
    }
    let v1 = single_photon_errors_upper(tallies, scheme, params);
    let ratio = (v1 / d1_x).min(1.0);
    let gamma = gamma_correction_with(params.eps_sec, ratio, d1_z, d1_x, params.gamma_constant)?;
    Ok((ratio + gamma).clamp(0.0, 1.0))
}

/// `v_{X,1} = τ1 (m⁺_{X,μ1} - m⁻_{X,μ2}) / (μ1 - μ2)`, at least 0.
pub fn single_photon_errors_upper(
    tallies: &TallyCounts,
    scheme: &DecoyScheme,
    params: &SecurityParams,
) -> f64 {
    let x = &tallies.x;
    let total = x.total_errors();
    let m_plus = finite_corrected_count(
        x.errors(Intensity::Mu1),
        total,
        scheme.mu1,
        scheme.p_mu1,
        params.eps_2,
        Direction::Upper,
    );
    let m_minus = finite_corrected_count(
        x.errors(Intensity::Mu2),
        total,
        scheme.mu2,
        scheme.p_mu2,
        params.eps_2,
        Direction::Lower,
    );
    let v = tau_n(1, scheme) * (m_plus - m_minus) / (scheme.mu1 - scheme.mu2);
    v.max(0.0)
}

/// Bits disclosed by error correction: `n_Z f_ec h(qber)` for `d = 2`,
/// `n_Z f_ec H(qber)` for `d = 4`.
pub fn lambda_ec(
    n_z: u64,
    qber: f64,
    dimension: Dimension,
    f_ec: f64,
) -> Result<f64, FiniteKeyError> {
    if !(f_ec >= 1.0) {
        return Err(FiniteKeyError::InvalidEfficiency(f_ec));
    }
    let entropy = symbol_entropy(dimension, qber).map_err(|_| FiniteKeyError::Domain(qber))?;
    Ok(n_z as f64 * f_ec * entropy)
}

/// Vacuum and single-photon bounds of a block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhotonBounds {
    pub d0_lower: f64,
    pub d0_upper: f64,
    pub d1_lower: f64,
    /// Single-photon lower bound in the X basis.
    pub d1_lower_x: f64,
    pub v1_upper: f64,
    pub phi_z_upper: f64,
    pub tau0: f64,
    pub tau1: f64,
}

/// Runs the full bound chain on a block. When either single-photon bound is
/// zero the phase error is reported as 1.
pub fn estimate_bounds(
    tallies: &TallyCounts,
    scheme: &DecoyScheme,
    params: &SecurityParams,
    dimension: Dimension,
) -> Result<PhotonBounds, FiniteKeyError> {
    scheme.validate()?;
    params.validate()?;
    tallies.validate()?;
    let d0_upper = vacuum_upper(tallies, scheme, params, dimension, Intensity::Mu2);
    let d0_lower = vacuum_lower(tallies, scheme, params).min(d0_upper);
    let d1_lower = single_photon_lower(tallies, scheme, params, d0_upper)?;
    let d0_upper_x = vacuum_upper_in(
        BasisName::X,
        tallies,
        scheme,
        params,
        dimension,
        Intensity::Mu2,
    );
    let d1_lower_x = single_photon_lower_in(BasisName::X, tallies, scheme, params, d0_upper_x)?;
    let (v1_upper, phi_z_upper) = if d1_lower > 0.0 && d1_lower_x > 0.0 {
        (
            single_photon_errors_upper(tallies, scheme, params),
            phase_error_upper(tallies, scheme, params, d1_lower, d1_lower_x)?,
        )
    } else {
        (single_photon_errors_upper(tallies, scheme, params), 1.0)
    };
    Ok(PhotonBounds {
        d0_lower,
        d0_upper,
        d1_lower,
        d1_lower_x,
        v1_upper,
        phi_z_upper,
        tau0: tau_n(0, scheme),
        tau1: tau_n(1, scheme),
    })
}

/// Phase error fed to the entropy, capped at its maximizing value `1 - 1/d`.
fn capped_phase_error(phi: f64, dimension: Dimension) -> f64 {
    phi.clamp(0.0, dimension.noise_error_probability())
}

/// `ℓ = D0 + D1 [1 - h(φ)] - λ_EC - 6 log2(19/ε_sec) - log2(2/ε_corr)`, at least 0.
pub fn key_length_2d(bounds: &PhotonBounds, lambda_ec: f64, params: &SecurityParams) -> f64 {
    let phi = capped_phase_error(bounds.phi_z_upper, Dimension::Two);
    let h = symbol_entropy(Dimension::Two, phi).unwrap_or(1.0);
    let l = bounds.d0_lower + bounds.d1_lower * (1.0 - h) - lambda_ec - params.constant_cost();
    l.max(0.0)
}

/// `ℓ = 2 D0 + D1 [2 - H(φ)] - λ_EC - 6 log2(19/ε_sec) - log2(2/ε_corr)`, at least 0.
pub fn key_length_4d(bounds: &PhotonBounds, lambda_ec: f64, params: &SecurityParams) -> f64 {
    let phi = capped_phase_error(bounds.phi_z_upper, Dimension::Four);
    let h = symbol_entropy(Dimension::Four, phi).unwrap_or(2.0);
    let l =
        2.0 * bounds.d0_lower + bounds.d1_lower * (2.0 - h) - lambda_ec - params.constant_cost();
    l.max(0.0)
}

pub fn key_length(
    dimension: Dimension,
    bounds: &PhotonBounds,
    lambda_ec: f64,
    params: &SecurityParams,
) -> f64 {
    match dimension {
        Dimension::Two => key_length_2d(bounds, lambda_ec, params),
        Dimension::Four => key_length_4d(bounds, lambda_ec, params),
    }
}
