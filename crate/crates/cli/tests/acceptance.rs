//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::{Duration, Instant};
use timebin_qkd::channel::{
    calibrate_noise, dead_time_throttle, expected_tallies, reference_targets, simulate_block,
    CalibrationError, LinkModel, NoiseParams, Protocol, QBER_TOLERANCE,
};
use timebin_qkd::finite_key::{
    estimate_bounds, vacuum_upper, DecoyScheme, Intensity, SecurityParams, TallyCounts,
};
use timebin_qkd::qudit::{
    binary_entropy, overlap_probability, shannon_entropy_4d, verify_mub_pair, Basis, BasisName,
    Dimension,
};
use timebin_qkd::reference::{cutoff_loss_db, operating_points, OPERATING_POINTS};
use timebin_qkd::session::{
    decode_message, encode_message, run_networked_session, run_networked_session_with, run_session,
    NetError, NetOptions, Payload, ReconciliationMessage, SessionConfig, SessionMode, WireError,
    HEADER_LEN,
};
use timebin_qkd_cli::config::{ExperimentConfig, SweepSpec};
use timebin_qkd_cli::sweep::{compare_protocols, run_sweep};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

type Big = FBig<HalfEven>;

const PRECISION: usize = 128;

fn big(x: f64) -> Big {
    Big::try_from(x).unwrap().with_precision(PRECISION).value()
}

/// `(h(x), H(x))` evaluated in extended precision.
fn oracle_entropies(x: f64, ln2: &Big, ln3: &Big) -> (f64, f64) {
    let (p, q) = (big(x), big(1.0) - big(x));
    let p_ln = if x > 0.0 { &p * p.ln() } else { big(0.0) };
    let q_ln = if x < 1.0 { &q * q.ln() } else { big(0.0) };
    let h = -(&p_ln + &q_ln) / ln2;
    let h4 = -(p_ln - &p * ln3 + q_ln) / ln2;
    (h.to_f64().value(), h4.to_f64().value())
}

fn c1_mub() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for d in [Dimension::Two, Dimension::Four] {
        let r = verify_mub_pair(d);
        ok &= r.is_mub;
        worst = worst.max(r.max_cross_deviation);
    }
    let z = Basis::z(Dimension::Four).states();
    let x = Basis::x(Dimension::Four).states();
    let mut count = 0;
    for a in &z {
        for b in &x {
            let p = overlap_probability(a, b).map_err(|e| e.to_string())?;
            ok &= (p - 0.25).abs() < 1e-12;
            worst = worst.max((p - 0.25).abs());
            count += 1;
        }
    }
    check(
        ok && count == 16,
        format!("{count} overlaps, max deviation {worst:.1e}"),
    )
}

fn c2_entropy() -> Outcome {
    let ident = [
        (binary_entropy(0.5).unwrap(), 1.0),
        (shannon_entropy_4d(0.75).unwrap(), 2.0),
        (shannon_entropy_4d(0.0).unwrap(), 0.0),
        (binary_entropy(0.0).unwrap(), 0.0),
    ];
    let mut ok = ident.iter().all(|(a, b)| (a - b).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (ln2, ln3) = (big(2.0).ln(), big(3.0).ln());
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x: f64 = rng.random();
        let (h, h4) = oracle_entropies(x, &ln2, &ln3);
        let dh = (binary_entropy(x).unwrap() - h).abs();
        let dh4 = (shannon_entropy_4d(x).unwrap() - h4).abs();
        worst = worst.max(dh).max(dh4);
    }
    ok &= worst < 1e-12;
    check(
        ok,
        format!("identities hold, max oracle deviation {worst:.1e}"),
    )
}

fn oracle_vacuum_upper(t: &TallyCounts, s: &DecoyScheme, p: &SecurityParams, d: f64) -> f64 {
    let tau0 = big(s.p_mu1) * big(-s.mu1).exp() + big(s.p_mu2) * big(-s.mu2).exp();
    let m = (t.z.m[0] + t.z.m[1]) as f64;
    let n = (t.z.n[0] + t.z.n[1]) as f64;
    let half_ln = |total: f64, eps: f64| (big(total) / big(2.0) * big(1.0 / eps).ln()).sqrt();
    let inner = big(t.z.m[1] as f64) + half_ln(m, p.eps_2);
    let bound = big(d) / big(d - 1.0)
        * (tau0 * big(s.mu2).exp() / big(s.p_mu2) * inner + half_ln(n, p.eps_1));
    bound.to_f64().value()
}

fn random_tally(rng: &mut ChaCha8Rng) -> TallyCounts {
    let mut t = TallyCounts::default();
    for b in [&mut t.z, &mut t.x] {
        for k in 0..2 {
            b.n[k] = rng.random_range(100..10_000_000);
            b.m[k] = rng.random_range(0..=b.n[k] / 5);
        }
    }
    t
}

fn c3_vacuum_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = SecurityParams::default();
    let mut worst: f64 = 0.0;
    let mut ratio_worst: f64 = 0.0;
    for _ in 0..100 {
        let t = random_tally(&mut rng);
        let mu1 = rng.random_range(0.05..0.5);
        let s = DecoyScheme::new(mu1, mu1 * rng.random_range(0.1..0.9));
        for (dim, d) in [(Dimension::Two, 2.0), (Dimension::Four, 4.0)] {
            let got = vacuum_upper(&t, &s, &params, dim, Intensity::Mu2);
            let want = oracle_vacuum_upper(&t, &s, &params, d);
            worst = worst.max(((got - want) / want).abs());
        }
        let two = vacuum_upper(&t, &s, &params, Dimension::Two, Intensity::Mu2);
        let four = vacuum_upper(&t, &s, &params, Dimension::Four, Intensity::Mu2);
        ratio_worst = ratio_worst.max((four / two - (4.0 / 3.0) / 2.0).abs());
    }
    check(
        worst < 1e-9 && ratio_worst < 1e-14,
        format!("max relative deviation {worst:.1e}, prefactor ratio deviation {ratio_worst:.1e}"),
    )
}

fn c4_coverage() -> Outcome {
    let n_z = 10_000;
    let trials = 1000;
    let mut details = Vec::new();
    let mut ok = true;
    for protocol in Protocol::ALL {
        let point = operating_points(protocol).nth(1).unwrap();
        let link = SessionConfig::from_point(point).link;
        let violations: Vec<bool> = (0..trials)
            .into_par_iter()
            .map(|seed| -> Result<bool, String> {
                let block =
                    simulate_block(&link, protocol, n_z, seed).map_err(|e| e.to_string())?;
                let truth = block.truth.ok_or("no photon truth")?;
                let params =
                    SecurityParams::default().with_block_size(block.tallies.z.total_detections());
                let b = estimate_bounds(
                    &block.tallies,
                    &link.source.decoy,
                    &params,
                    protocol.dimension(),
                )
                .map_err(|e| e.to_string())?;
                let vac = truth.z_vacuum as f64;
                Ok(vac > b.d0_upper
                    || vac < b.d0_lower
                    || (truth.z_single as f64) < b.d1_lower
                    || (truth.x_single as f64) < b.d1_lower_x
                    || (truth.x_single_errors as f64) > b.v1_upper)
            })
            .collect::<Result<_, _>>()?;
        let violations = violations.iter().filter(|&&v| v).count();
        let rate = violations as f64 / trials as f64;
        ok &= rate <= 0.01;
        details.push(format!("{protocol} {violations}/{trials}"));
    }
    check(ok, format!("violations {}", details.join(", ")))
}

type Fits = Vec<(Protocol, NoiseParams)>;

fn fitted_noise() -> Result<(Fits, Vec<String>), String> {
    let mut fits = Vec::new();
    let mut notes = Vec::new();
    for protocol in Protocol::ALL {
        let fit = match calibrate_noise(
            protocol,
            &reference_targets(protocol),
            &SecurityParams::default(),
        ) {
            Ok(f) => f,
            Err(CalibrationError::Inadequate { fit, worst }) => {
                notes.push(format!(
                    "{protocol} fit inadequate ({:.2} pp)",
                    worst * 100.0
                ));
                *fit
            }
            Err(e) => return Err(e.to_string()),
        };
        fits.push((protocol, fit.params));
    }
    Ok((fits, notes))
}

fn c5_reference_reproduction() -> Outcome {
    let (fits, mut notes) = fitted_noise()?;
    let mut ok = notes.is_empty();
    for p in OPERATING_POINTS.iter() {
        let noise = fits.iter().find(|f| f.0 == p.protocol).unwrap().1;
        let mut config = SessionConfig::from_point(p);
        config.link = config.link.with_noise(noise);
        let r = run_session(&config, 0).map_err(|e| e.to_string())?;
        let skr_ratio = r.skr_bits_per_second / p.skr_bps;
        let dq = r.qber_z - p.qber;
        let good = (skr_ratio - 1.0).abs() <= 0.25 && dq.abs() <= QBER_TOLERANCE;
        if !good {
            notes.push(format!(
                "{} {} dB: SKR x{skr_ratio:.3}, QBER {:+.2} pp",
                p.protocol,
                p.loss_db,
                dq * 100.0
            ));
        }
        ok &= good;
    }
    check(
        ok,
        if notes.is_empty() {
            "8/8 points within tolerance".into()
        } else {
            notes.join("; ")
        },
    )
}

fn c6_enhancement() -> Outcome {
    let cmp = compare_protocols(&run_sweep(&ExperimentConfig::default()));
    let mut ok = true;
    let mut notes = Vec::new();
    for (loss, want) in [(5.1, 2.4), (14.0, 2.0)] {
        let row = cmp
            .rows
            .iter()
            .find(|c| (c.loss_db - loss).abs() < 1e-9)
            .ok_or(format!("no comparison at {loss} dB"))?;
        let e = row.enhancement.unwrap_or(0.0);
        ok &= (e - want).abs() <= 0.4;
        notes.push(format!("{loss} dB: {e:.2} (target {want} +/- 0.4)"));
    }
    check(ok, notes.join(", "))
}

fn c7_cutoffs() -> Outcome {
    let config = ExperimentConfig {
        points: vec![],
        optimize: true,
        sweep: Some(SweepSpec {
            protocols: Protocol::ALL.to_vec(),
            from_db: 25.0,
            to_db: 45.0,
            step_db: 0.5,
        }),
        ..ExperimentConfig::default()
    };
    let table = run_sweep(&config);
    let mut ok = table.failures.is_empty();
    let mut notes = Vec::new();
    for protocol in Protocol::ALL {
        let got = table.cutoff_loss_db(protocol);
        let want = cutoff_loss_db(protocol);
        ok &= got.is_some_and(|g| (g - want).abs() <= 2.0);
        notes.push(format!("{protocol}: {got:?} dB (target {want} +/- 2)"));
    }
    check(ok, notes.join(", "))
}

fn c8_secret_fraction() -> Outcome {
    let cmp = compare_protocols(&run_sweep(&ExperimentConfig::default()));
    let ok = cmp.rows.len() == 4
        && cmp
            .rows
            .iter()
            .all(|c| c.secret_fraction_4d > c.secret_fraction_2d);
    let ratios: Vec<_> = cmp
        .rows
        .iter()
        .map(|c| format!("{:.1}", c.secret_fraction_4d / c.secret_fraction_2d))
        .collect();
    check(ok, format!("4D/2D fraction ratios {}", ratios.join(", ")))
}

fn c9_saturation() -> Outcome {
    let asymptote = dead_time_throttle(1e15, 20e-6);
    let mut ok = (asymptote / 50e3 - 1.0).abs() < 1e-3;
    let mut peak: f64 = 0.0;
    for protocol in Protocol::ALL {
        let link = LinkModel::new(
            protocol,
            0.0,
            DecoyScheme::new(0.5, 0.25),
            0.9,
            0.5,
            NoiseParams::calibrated(protocol),
        );
        let r = simulate_block(&link, protocol, 20_000, 9).map_err(|e| e.to_string())?;
        peak = r.raw_click_rate.iter().fold(peak, |m, &c| m.max(c));
    }
    ok &= peak <= 50e3;
    check(
        ok,
        format!("asymptote {asymptote:.2} Hz, peak simulated click rate {peak:.0} Hz"),
    )
}

fn c10_noise_floor() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for protocol in Protocol::ALL {
        let point = operating_points(protocol).next().unwrap();
        let link = SessionConfig::from_point(point).link.with_loss(60.0);
        let r = simulate_block(&link, protocol, 20_000, 10).map_err(|e| e.to_string())?;
        let q = r.tallies.z.error_rate().unwrap_or(0.0);
        let floor = protocol.dimension().noise_error_probability();
        ok &= (q - floor).abs() <= 0.02;
        notes.push(format!("{protocol} QBER {q:.3} (floor {floor})"));
    }
    check(ok, notes.join(", "))
}

fn c11_monte_carlo_agreement() -> Outcome {
    let n_z = 100_000;
    let mut worst: f64 = 0.0;
    for p in OPERATING_POINTS.iter() {
        let link = SessionConfig::from_point(p).link;
        let mc = simulate_block(&link, p.protocol, n_z, 11).map_err(|e| e.to_string())?;
        let ex = expected_tallies(&link, p.protocol, n_z).map_err(|e| e.to_string())?;
        for b in BasisName::ALL {
            let (m, e) = (mc.tallies.basis(b), ex.tallies.basis(b));
            for k in 0..2 {
                for (got, want) in [(m.n[k], e.n[k]), (m.m[k], e.m[k])] {
                    let sigma = (want as f64).sqrt().max(1.0);
                    worst = worst.max((got as f64 - want as f64).abs() / sigma);
                }
            }
        }
    }
    check(
        worst < 4.0,
        format!("worst deviation {worst:.2} sigma over 8 blocks"),
    )
}

fn c12_transport() -> Outcome {
    let mut ok = true;
    for protocol in Protocol::ALL {
        for mode in [SessionMode::Analytic, SessionMode::MonteCarlo] {
            let point = operating_points(protocol).nth(1).unwrap();
            let mut config = SessionConfig::from_point(point).with_mode(mode);
            config.security.block_size_nz = 100_000;
            let local = run_session(&config, 5).map_err(|e| e.to_string())?;
            let remote = run_networked_session(&config, 5).map_err(|e| e.to_string())?;
            ok &= serde_json::to_vec(&local).unwrap() == serde_json::to_vec(&remote).unwrap();
        }
    }
    let frame = encode_message(&ReconciliationMessage {
        block_id: 1,
        seq: 0,
        payload: Payload::ErrorEstimate {
            rate: 0.01,
            size: 10.0,
        },
    });
    let mut rejected = 0;
    for cut in 0..frame.len() {
        rejected += decode_message(&frame[..cut]).is_err() as u32;
    }
    let mut bad_type = frame.clone();
    bad_type[4] = 0xee;
    rejected += decode_message(&bad_type).is_err() as u32;
    ok &= rejected as usize == frame.len() + 1 && frame.len() > HEADER_LEN;

    let mut config = SessionConfig::from_point(operating_points(Protocol::TwoD).next().unwrap())
        .with_mode(SessionMode::MonteCarlo);
    config.security.block_size_nz = 10_000;
    let reorder = NetOptions {
        alice_reorders: true,
        ..NetOptions::default()
    };
    let reordered = run_networked_session_with(&config, 2, reorder);
    ok &= matches!(reordered, Err(NetError::Wire(WireError::OutOfOrder { .. })));
    check(
        ok,
        format!(
            "4 sessions byte-identical, {rejected} malformed frames rejected, reordering rejected"
        ),
    )
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "MUB exactness",
            budget: Duration::from_secs(1),
            run: c1_mub,
        },
        Criterion {
            id: 2,
            name: "entropy identities",
            budget: Duration::from_secs(1),
            run: c2_entropy,
        },
        Criterion {
            id: 3,
            name: "vacuum bound fidelity",
            budget: Duration::from_secs(1),
            run: c3_vacuum_bound,
        },
        Criterion {
            id: 4,
            name: "bound coverage",
            budget: Duration::from_secs(120),
            run: c4_coverage,
        },
        Criterion {
            id: 5,
            name: "reference reproduction",
            budget: Duration::from_secs(300),
            run: c5_reference_reproduction,
        },
        Criterion {
            id: 6,
            name: "enhancement factors",
            budget: Duration::from_secs(300),
            run: c6_enhancement,
        },
        Criterion {
            id: 7,
            name: "cutoff losses",
            budget: Duration::from_secs(120),
            run: c7_cutoffs,
        },
        Criterion {
            id: 8,
            name: "secret-fraction ordering",
            budget: Duration::from_secs(300),
            run: c8_secret_fraction,
        },
        Criterion {
            id: 9,
            name: "saturation",
            budget: Duration::from_secs(1),
            run: c9_saturation,
        },
        Criterion {
            id: 10,
            name: "noise floor",
            budget: Duration::from_secs(60),
            run: c10_noise_floor,
        },
        Criterion {
            id: 11,
            name: "Monte Carlo agreement",
            budget: Duration::from_secs(300),
            run: c11_monte_carlo_agreement,
        },
        Criterion {
            id: 12,
            name: "transport transparency",
            budget: Duration::from_secs(60),
            run: c12_transport,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (verdict, detail) = match &outcome {
            Ok(d) if elapsed <= c.budget => ("PASS", d.clone()),
            Ok(d) => ("FAIL", format!("{d}; over time budget {:?}", c.budget)),
            Err(d) => ("FAIL", d.clone()),
        };
        failed += (verdict == "FAIL") as u32;
        println!(
            "criterion {:>2} {verdict}  {} [{:.2}s]: {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() as u32 - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
