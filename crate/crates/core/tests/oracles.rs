#![allow(clippy::excessive_precision)]

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use proptest::prelude::*;
use timebin_qkd::channel::{expected_tallies, Protocol};
use timebin_qkd::finite_key::{
    estimate_bounds, key_length, vacuum_upper, BasisTally, DecoyScheme, Intensity, SecurityParams,
    TallyCounts,
};
use timebin_qkd::qudit::{binary_entropy, shannon_entropy_4d, Dimension};
use timebin_qkd::reference::OPERATING_POINTS;
use timebin_qkd::session::SessionConfig;

type Big = FBig<HalfEven>;

fn big(x: f64) -> Big {
    Big::try_from(x).unwrap().with_precision(128).value()
}

fn oracle_h(x: f64) -> f64 {
    let (p, q) = (big(x), big(1.0) - big(x));
    let mut s = big(0.0);
    if x > 0.0 {
        s -= &p * p.ln();
    }
    if x < 1.0 {
        s -= &q * q.ln();
    }
    (s / big(2.0).ln()).to_f64().value()
}

#[test]
fn frozen_entropy_values() {
    assert!((binary_entropy(0.25).unwrap() - 0.811_278_124_459_132_863_91).abs() < 1e-15);
    assert!((shannon_entropy_4d(0.072).unwrap() - 0.487_460_621_131_776_870_52).abs() < 1e-15);
}

#[test]
fn reference_blocks_have_valid_bounds() {
    for p in OPERATING_POINTS.iter() {
        let c = SessionConfig::from_point(p);
        let block = expected_tallies(&c.link, p.protocol, c.security.block_size_nz).unwrap();
        let b = estimate_bounds(
            &block.tallies,
            &c.link.source.decoy,
            &c.security,
            p.protocol.dimension(),
        )
        .unwrap();
        assert!(b.d0_lower <= b.d0_upper);
        assert!(b.d1_lower > 0.0 && b.d1_lower_x > 0.0);
        assert!(b.phi_z_upper > 0.0 && b.phi_z_upper < 0.5);
    }
}

fn tally() -> impl Strategy<Value = TallyCounts> {
    let basis = (
        100u64..1_000_000,
        100u64..1_000_000,
        0.0f64..0.3,
        0.0f64..0.3,
    )
        .prop_map(|(n1, n2, e1, e2)| BasisTally {
            n: [n1, n2],
            m: [(n1 as f64 * e1) as u64, (n2 as f64 * e2) as u64],
        });
    (basis.clone(), basis).prop_map(|(z, x)| TallyCounts { z, x })
}

proptest! {
    #[test]
    fn binary_entropy_matches_extended_precision(x in 0.0f64..=1.0) {
        prop_assert!((binary_entropy(x).unwrap() - oracle_h(x)).abs() < 1e-12);
    }

    #[test]
    fn vacuum_prefactor_ratio(t in tally(), mu1 in 0.05f64..0.5, r in 0.1f64..0.9) {
        let s = DecoyScheme::new(mu1, mu1 * r);
        let p = SecurityParams::default();
        let two = vacuum_upper(&t, &s, &p, Dimension::Two, Intensity::Mu2);
        let four = vacuum_upper(&t, &s, &p, Dimension::Four, Intensity::Mu2);
        prop_assert!((four / two - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn key_length_is_finite_and_nonnegative(t in tally(), mu1 in 0.05f64..0.5, r in 0.1f64..0.9) {
        let s = DecoyScheme::new(mu1, mu1 * r);
        let p = SecurityParams::default().with_block_size(t.z.total_detections());
        for protocol in Protocol::ALL {
            let d = protocol.dimension();
            let b = estimate_bounds(&t, &s, &p, d).unwrap();
            prop_assert!(b.phi_z_upper >= 0.0 && b.phi_z_upper <= 1.0);
            let l = key_length(d, &b, 0.0, &p);
            prop_assert!(l.is_finite() && l >= 0.0);
        }
    }
}
