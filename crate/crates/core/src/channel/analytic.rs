use super::model::{db_to_transmission, LinkModel, Protocol};
use super::outcomes::{RunKind, RunTables};
use super::{BlockResult, ChannelError};
use crate::finite_key::{Intensity, TallyCounts};
use crate::qudit::BasisName;

/// Probability that a photon entering the receiver in `basis` yields a
/// conclusive detection: channel, interferometer, detection and, for
/// interferometric measurements, the conclusive fraction 1/2. The qubit key
/// basis is measured by time of arrival and has neither.
pub fn end_to_end_efficiency(link: &LinkModel, protocol: Protocol, basis: BasisName) -> f64 {
    let base = db_to_transmission(link.channel_loss_db) * link.detector.detection_probability();
    match protocol.basis(basis).measurement_delay() {
        None => base,
        Some(delay) => base * db_to_transmission(link.interferometer_loss_db(delay)) * 0.5,
    }
}

/// Non-paralyzable dead-time throttle `r / (1 + r T)`.
pub fn dead_time_throttle(raw_rate: f64, dead_time: f64) -> f64 {
    raw_rate / (1.0 + raw_rate * dead_time)
}

/// Expected sifted detections and errors per pulse for one run.
pub(crate) struct RunRates {
    pub detections: [[f64; 2]; 2],
    pub errors: [[f64; 2]; 2],
    /// Live-time-corrected click probability per pulse, per detector.
    pub clicks: Vec<f64>,
}

impl RunRates {
    pub fn sifted(&self, basis: BasisName) -> f64 {
        self.detections[basis.index()].iter().sum()
    }
}

pub(crate) fn run_rates(tables: &RunTables, dead_pulses: u64) -> RunRates {
    let live: Vec<f64> = (0..tables.detectors())
        .map(|j| 1.0 / (1.0 + tables.mean_click_probability(j) * dead_pulses as f64))
        .collect();
    let mut detections = [[0.0; 2]; 2];
    let mut errors = [[0.0; 2]; 2];
    for (j, per_k) in tables.tables.iter().enumerate() {
        for k in Intensity::ALL {
            let w = tables.send_probability[k.index()] * live[j];
            for e in &per_k[k.index()].entries {
                if let Some((basis, _, _)) = tables.sifted(e) {
                    detections[basis.index()][k.index()] += w * e.weight;
                    errors[basis.index()][k.index()] += w * e.weight * tables.error_probability(e);
                }
            }
        }
    }
    let clicks = (0..tables.detectors())
        .map(|j| tables.mean_click_probability(j) * live[j])
        .collect();
    RunRates {
        detections,
        errors,
        clicks,
    }
}

fn add_rounded(t: &mut TallyCounts, rates: &RunRates, basis: BasisName, pulses: f64) {
    let b = basis.index();
    let tally = t.basis_mut(basis);
    for k in 0..2 {
        tally.n[k] = (rates.detections[b][k] * pulses).round() as u64;
        tally.m[k] = (rates.errors[b][k] * pulses).round() as u64;
    }
}

/// Expected tallies of a block that collects `n_z_target` sifted key-basis
/// detections, rounded to integers.
///
/// The qubit protocol measures both bases at once behind a passive splitter.
/// The four-dimensional protocol runs the key basis until the target is met
/// and then the check basis for `(1 - p_Z^Bob) / p_Z^Bob` times as many
/// pulses; only the key run is charged as key-generation time.
pub fn expected_tallies(
    link: &LinkModel,
    protocol: Protocol,
    n_z_target: u64,
) -> Result<BlockResult, ChannelError> {
    link.validate(protocol)?;
    if n_z_target == 0 {
        return Err(ChannelError::EmptyTarget);
    }
    let rate = link.source.state_rate;
    let dead = link.dead_pulses();
    let mut tallies = TallyCounts::default();
    let mut raw_click_rate = Vec::new();
    let (key_pulses, check_pulses) = match protocol {
        Protocol::TwoD => {
            let rates = run_rates(&RunTables::new(link, protocol, RunKind::Passive), dead);
            let pulses = key_run_pulses(&rates, n_z_target)?;
            add_rounded(&mut tallies, &rates, BasisName::Z, pulses);
            add_rounded(&mut tallies, &rates, BasisName::X, pulses);
            raw_click_rate.extend(rates.clicks.iter().map(|c| c * rate));
            (pulses, 0.0)
        }
        Protocol::FourD => {
            let key = run_rates(
                &RunTables::new(link, protocol, RunKind::Single(BasisName::Z)),
                dead,
            );
            let check = run_rates(
                &RunTables::new(link, protocol, RunKind::Single(BasisName::X)),
                dead,
            );
            let pulses = key_run_pulses(&key, n_z_target)?;
            let check_pulses = check_run_pulses(link, pulses.round() as u64) as f64;
            add_rounded(&mut tallies, &key, BasisName::Z, pulses);
            add_rounded(&mut tallies, &check, BasisName::X, check_pulses);
            raw_click_rate.extend(key.clicks.iter().map(|c| c * rate));
            raw_click_rate.extend(check.clicks.iter().map(|c| c * rate));
            (pulses, check_pulses)
        }
    };
    let total = key_pulses + check_pulses;
    let decoy = &link.source.decoy;
    Ok(BlockResult {
        tallies,
        wall_time_equivalent: key_pulses / rate,
        measurement_time: total / rate,
        raw_click_rate,
        pulses_sent: total.round() as u64,
        pulses_per_intensity: [
            (total * decoy.p_mu1).round() as u64,
            (total * decoy.p_mu2).round() as u64,
        ],
        truth: None,
        records: None,
    })
}

fn key_run_pulses(rates: &RunRates, n_z_target: u64) -> Result<f64, ChannelError> {
    let per_pulse = rates.sifted(BasisName::Z);
    if per_pulse <= 0.0 {
        return Err(ChannelError::NoDetections);
    }
    Ok(n_z_target as f64 / per_pulse)
}

/// Check-basis run length for the block-wise protocol.
pub(crate) fn check_run_pulses(link: &LinkModel, key_pulses: u64) -> u64 {
    (key_pulses as f64 * (1.0 - link.p_z_bob) / link.p_z_bob).round() as u64
}
