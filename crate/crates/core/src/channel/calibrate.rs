//! Least-squares fit of the dark-count rate and intrinsic errors to measured
//! error rates.

use super::analytic::expected_tallies;
use super::model::{LinkModel, NoiseParams, Protocol};
use super::ChannelError;
use crate::finite_key::{estimate_bounds, DecoyScheme, SecurityParams};
use crate::reference::operating_points;
use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted QBER residual, as a fraction.
pub const QBER_TOLERANCE: f64 = 0.004;

const PHI_WEIGHT: f64 = 0.09;

/// One measured point to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub loss_db: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub p_z_alice: f64,
    pub p_z_bob: f64,
    pub qber: f64,
    /// Phase-error bound; weighted less than the QBER when present.
    pub phi_z: Option<f64>,
}

impl CalibrationTarget {
    fn link(&self, protocol: Protocol, noise: NoiseParams) -> LinkModel {
        LinkModel::new(
            protocol,
            self.loss_db,
            DecoyScheme::new(self.mu1, self.mu2),
            self.p_z_alice,
            self.p_z_bob,
            noise,
        )
    }
}

/// Targets built from the reference operating points of a protocol.
pub fn reference_targets(protocol: Protocol) -> Vec<CalibrationTarget> {
    operating_points(protocol)
        .map(|p| CalibrationTarget {
            loss_db: p.loss_db,
            mu1: p.mu1,
            mu2: p.mu2,
            p_z_alice: p.p_z_alice,
            p_z_bob: p.p_z_bob,
            qber: p.qber,
            phi_z: Some(p.phi_z),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFit {
    pub protocol: Protocol,
    pub params: NoiseParams,
    /// Modeled minus measured QBER per target.
    pub qber_residuals: Vec<f64>,
    /// Modeled minus measured phase-error bound per target that has one.
    pub phi_residuals: Vec<Option<f64>>,
    pub cost: f64,
}

impl NoiseFit {
    pub fn worst_qber_residual(&self) -> f64 {
        self.qber_residuals
            .iter()
            .fold(0.0, |m: f64, r| m.max(r.abs()))
    }
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no calibration targets")]
    NoTargets,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("optimizer failed: {0}")]
    Optimizer(String),
    #[error("model cannot reproduce the targets: worst QBER residual {worst:.4}")]
    Inadequate { fit: Box<NoiseFit>, worst: f64 },
}

/// Modeled QBER and phase-error bound of a target.
fn model_point(
    protocol: Protocol,
    target: &CalibrationTarget,
    noise: NoiseParams,
    params: &SecurityParams,
) -> Result<(f64, f64), ChannelError> {
    let link = target.link(protocol, noise);
    let block = expected_tallies(&link, protocol, params.block_size_nz)?;
    let qber = block.tallies.z.error_rate().unwrap_or(0.0);
    let phi = estimate_bounds(
        &block.tallies,
        &link.source.decoy,
        params,
        protocol.dimension(),
    )
    .map(|b| b.phi_z_upper)
    .unwrap_or(1.0);
    Ok((qber, phi))
}

fn decode(x: &[f64]) -> NoiseParams {
    NoiseParams {
        dark_count_rate: 10f64.powf(x[0]),
        intrinsic_error_z: (x[1] / 100.0).abs().min(1.0),
        intrinsic_error_x: (x[2] / 100.0).abs().min(1.0),
    }
}

struct Problem<'a> {
    protocol: Protocol,
    targets: &'a [CalibrationTarget],
    params: SecurityParams,
}

impl Problem<'_> {
    fn residuals(&self, noise: NoiseParams) -> Result<(Vec<f64>, Vec<Option<f64>>), ChannelError> {
        let mut q = Vec::with_capacity(self.targets.len());
        let mut p = Vec::with_capacity(self.targets.len());
        for t in self.targets {
            let (qber, phi) = model_point(self.protocol, t, noise, &self.params)?;
            q.push(qber - t.qber);
            p.push(t.phi_z.map(|target| phi - target));
        }
        Ok((q, p))
    }

    fn cost_of(q: &[f64], p: &[Option<f64>]) -> f64 {
        let pp = |r: f64| (100.0 * r).powi(2);
        q.iter().map(|&r| pp(r)).sum::<f64>()
            + PHI_WEIGHT * p.iter().flatten().map(|&r| pp(r)).sum::<f64>()
    }
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> Result<f64, ArgminError> {
        let (q, p) = self.residuals(decode(x))?;
        Ok(Self::cost_of(&q, &p))
    }
}

/// Fits dark-count rate and intrinsic errors by Nelder-Mead over
/// `[log10 dcr, 100 e_Z, 100 e_X]`. Targets without any error return zero
/// noise.
pub fn calibrate_noise(
    protocol: Protocol,
    targets: &[CalibrationTarget],
    params: &SecurityParams,
) -> Result<NoiseFit, CalibrationError> {
    if targets.is_empty() {
        return Err(CalibrationError::NoTargets);
    }
    let problem = Problem {
        protocol,
        targets,
        params: *params,
    };
    if targets.iter().all(|t| t.qber == 0.0) {
        let (q, p) = problem.residuals(NoiseParams::NONE)?;
        return Ok(NoiseFit {
            protocol,
            params: NoiseParams::NONE,
            cost: Problem::cost_of(&q, &p),
            qber_residuals: q,
            phi_residuals: p,
        });
    }
    let start = [2.0, 1.0, 3.0];
    let simplex = (0..=3)
        .map(|i| {
            let mut v = start.to_vec();
            if i > 0 {
                v[i - 1] += if i == 1 { 1.0 } else { 1.5 };
            }
            v
        })
        .collect();
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-10)
        .map_err(|e| CalibrationError::Optimizer(e.to_string()))?;
    let result = Executor::new(problem, solver)
        .configure(|s| s.max_iters(400))
        .run()
        .map_err(|e| CalibrationError::Optimizer(e.to_string()))?;
    let best = result
        .state
        .best_param
        .clone()
        .ok_or_else(|| CalibrationError::Optimizer("no parameters".into()))?;
    let problem = Problem {
        protocol,
        targets,
        params: *params,
    };
    let noise = decode(&best);
    let (q, p) = problem.residuals(noise)?;
    let fit = NoiseFit {
        protocol,
        params: noise,
        cost: Problem::cost_of(&q, &p),
        qber_residuals: q,
        phi_residuals: p,
    };
    let worst = fit.worst_qber_residual();
    if worst > QBER_TOLERANCE {
        return Err(CalibrationError::Inadequate {
            fit: Box::new(fit),
            worst,
        });
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_targets_give_zero_noise() {
        let targets: Vec<_> = reference_targets(Protocol::FourD)
            .into_iter()
            .map(|t| CalibrationTarget {
                qber: 0.0,
                phi_z: None,
                ..t
            })
            .collect();
        let fit = calibrate_noise(Protocol::FourD, &targets, &SecurityParams::default()).unwrap();
        assert_eq!(fit.params, NoiseParams::NONE);
        assert!(fit.worst_qber_residual() < 1e-5);
    }

    fn fitted(protocol: Protocol) -> NoiseFit {
        match calibrate_noise(
            protocol,
            &reference_targets(protocol),
            &SecurityParams::default(),
        ) {
            Ok(fit) => fit,
            Err(CalibrationError::Inadequate { fit, .. }) => *fit,
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn frozen_defaults_match_fresh_fit() {
        for protocol in Protocol::ALL {
            let fresh = fitted(protocol).params;
            let frozen = NoiseParams::calibrated(protocol);
            let rel = |a: f64, b: f64| (a - b).abs() / b;
            assert!(
                rel(fresh.dark_count_rate, frozen.dark_count_rate) < 0.01,
                "{fresh:?}"
            );
            assert!(
                rel(fresh.intrinsic_error_z, frozen.intrinsic_error_z) < 0.01,
                "{fresh:?}"
            );
            assert!(
                rel(fresh.intrinsic_error_x, frozen.intrinsic_error_x) < 0.01,
                "{fresh:?}"
            );
        }
    }

    #[test]
    fn qubit_fit_reproduces_reference_qber() {
        let fit = calibrate_noise(
            Protocol::TwoD,
            &reference_targets(Protocol::TwoD),
            &SecurityParams::default(),
        )
        .unwrap();
        assert!(fit.worst_qber_residual() <= QBER_TOLERANCE);
    }

    #[test]
    fn empty_targets_rejected() {
        assert!(matches!(
            calibrate_noise(Protocol::TwoD, &[], &SecurityParams::default()),
            Err(CalibrationError::NoTargets)
        ));
    }
}
