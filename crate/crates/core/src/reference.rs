//! Experimental operating points used as defaults and calibration targets.

use crate::channel::Protocol;

/// One measured configuration: channel, source settings and the observed
/// error rates and secret key rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub protocol: Protocol,
    pub length_km: f64,
    pub loss_db: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub p_z_alice: f64,
    pub p_z_bob: f64,
    /// Symbol error rate in the key basis, as a fraction.
    pub qber: f64,
    /// Phase-error bound, as a fraction.
    pub phi_z: f64,
    pub skr_bps: f64,
}

#[allow(clippy::too_many_arguments)]
const fn point(
    protocol: Protocol,
    length_km: f64,
    loss_db: f64,
    mu: (f64, f64),
    p_z_bob: f64,
    qber_pct: f64,
    phi_pct: f64,
    skr_kbps: f64,
) -> OperatingPoint {
    OperatingPoint {
        protocol,
        length_km,
        loss_db,
        mu1: mu.0,
        mu2: mu.1,
        p_z_alice: 0.9,
        p_z_bob,
        qber: qber_pct / 100.0,
        phi_z: phi_pct / 100.0,
        skr_bps: skr_kbps * 1e3,
    }
}

use Protocol::{FourD, TwoD};

pub const OPERATING_POINTS: [OperatingPoint; 8] = [
    point(TwoD, 25.0, 5.1, (0.07, 0.03), 0.5, 1.1, 6.6, 15.0),
    point(TwoD, 65.0, 14.0, (0.12, 0.06), 0.9, 1.1, 9.2, 12.0),
    point(TwoD, 105.0, 23.0, (0.26, 0.14), 0.5, 1.4, 8.9, 5.1),
    point(TwoD, 145.0, 31.5, (0.31, 0.15), 0.5, 2.3, 13.6, 0.53),
    point(FourD, 25.0, 5.1, (0.10, 0.05), 0.7, 3.4, 3.9, 37.0),
    point(FourD, 65.0, 14.0, (0.20, 0.10), 0.7, 3.4, 4.6, 24.0),
    point(FourD, 105.0, 23.0, (0.21, 0.10), 0.7, 4.9, 5.7, 5.5),
    point(FourD, 145.0, 31.5, (0.18, 0.08), 0.5, 7.9, 7.2, 0.42),
];

/// Last channel loss with a positive key.
pub fn cutoff_loss_db(protocol: Protocol) -> f64 {
    match protocol {
        TwoD => 39.0,
        FourD => 34.0,
    }
}

pub fn operating_points(protocol: Protocol) -> impl Iterator<Item = &'static OperatingPoint> {
    OPERATING_POINTS
        .iter()
        .filter(move |p| p.protocol == protocol)
}

/// The point whose loss is closest to `loss_db`.
pub fn nearest_point(protocol: Protocol, loss_db: f64) -> &'static OperatingPoint {
    operating_points(protocol)
        .min_by(|a, b| {
            (a.loss_db - loss_db)
                .abs()
                .total_cmp(&(b.loss_db - loss_db).abs())
        })
        .expect("every protocol has operating points")
}

/// Relative key-rate gain of the four-dimensional protocol at 5.1 dB and
/// 14 dB.
pub const ENHANCEMENT: [(f64, f64); 2] = [(5.1, 2.4), (14.0, 2.0)];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_points_each() {
        assert_eq!(operating_points(TwoD).count(), 4);
        assert_eq!(operating_points(FourD).count(), 4);
        assert_eq!(nearest_point(FourD, 60.0).loss_db, 31.5);
        assert_eq!(nearest_point(TwoD, 13.0).mu1, 0.12);
    }
}
