//! Seeded Monte Carlo realization of a block.
//!
//! Pulses without a click are skipped with geometric gaps drawn from the
//! summed click probability of the live detectors. A detector that clicks is
//! blind for the dead time, counted in whole pulse periods.

use super::analytic::check_run_pulses;
use super::model::{LinkModel, Protocol};
use super::outcomes::{Entry, RunKind, RunTables};
use super::prbs::Prbs12;
use super::{BlockResult, ChannelError};
use crate::finite_key::{Intensity, TallyCounts};
use crate::qudit::BasisName;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Poisson photon number with mean `mu`.
pub fn sample_photon_number<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u32 {
    if mu <= 0.0 {
        return 0;
    }
    let n: f64 = Poisson::new(mu).expect("positive mean").sample(rng);
    n as u32
}

/// Alice's side of a detected pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliceRecord {
    pub basis: BasisName,
    pub symbol: u8,
    pub intensity: Intensity,
    /// Photons in the pulse.
    pub photons: u8,
}

/// Bob's side of a detected pulse; `outcome` is `None` for inconclusive
/// clicks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobRecord {
    pub basis: BasisName,
    pub outcome: Option<u8>,
}

/// Per-click records of both parties, index-aligned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockRecords {
    pub alice: Vec<AliceRecord>,
    pub bob: Vec<BobRecord>,
}

/// Sifted detections broken down by the true photon number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotonTruth {
    pub z_vacuum: u64,
    pub z_single: u64,
    pub x_vacuum: u64,
    pub x_single: u64,
    /// Check-basis errors from single-photon pulses.
    pub x_single_errors: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimulationOptions {
    /// Keep per-click records for sifting.
    pub keep_records: bool,
    /// Drive the intensity with a PRBS12 pattern instead of independent
    /// draws.
    pub prbs: bool,
}

pub fn simulate_block(
    link: &LinkModel,
    protocol: Protocol,
    n_z_target: u64,
    seed: u64,
) -> Result<BlockResult, ChannelError> {
    simulate_block_with(
        link,
        protocol,
        n_z_target,
        seed,
        SimulationOptions::default(),
    )
}

pub fn simulate_block_with(
    link: &LinkModel,
    protocol: Protocol,
    n_z_target: u64,
    seed: u64,
    options: SimulationOptions,
) -> Result<BlockResult, ChannelError> {
    link.validate(protocol)?;
    if n_z_target == 0 {
        return Err(ChannelError::EmptyTarget);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::new(options);
    let prbs = options
        .prbs
        .then(|| Prbs12::period_bits(rng.random::<u16>()));
    let dead = link.dead_pulses();
    let rate = link.source.state_rate;

    let (key_pulses, check_pulses) = match protocol {
        Protocol::TwoD => {
            let tables = RunTables::new(link, protocol, RunKind::Passive);
            let mut run = Run::new(&tables, dead, prbs.as_deref());
            let pulses = run.execute(&mut rng, &mut acc, Stop::KeyDetections(n_z_target))?;
            acc.finish_run(&run, rate);
            (pulses, 0)
        }
        Protocol::FourD => {
            let key = RunTables::new(link, protocol, RunKind::Single(BasisName::Z));
            let mut run = Run::new(&key, dead, prbs.as_deref());
            let pulses = run.execute(&mut rng, &mut acc, Stop::KeyDetections(n_z_target))?;
            acc.finish_run(&run, rate);
            let n_x = check_run_pulses(link, pulses);
            let check = RunTables::new(link, protocol, RunKind::Single(BasisName::X));
            let mut run = Run::new(&check, dead, prbs.as_deref());
            let checked = run.execute(&mut rng, &mut acc, Stop::Pulses(n_x))?;
            acc.finish_run(&run, rate);
            (pulses, checked)
        }
    };
    let total = key_pulses + check_pulses;
    Ok(BlockResult {
        tallies: acc.tallies,
        wall_time_equivalent: key_pulses as f64 / rate,
        measurement_time: total as f64 / rate,
        raw_click_rate: acc.click_rates,
        pulses_sent: total,
        pulses_per_intensity: acc.pulses_per_intensity,
        truth: Some(acc.truth),
        records: options.keep_records.then_some(acc.records),
    })
}

#[derive(Debug, Clone, Copy)]
enum Stop {
    KeyDetections(u64),
    Pulses(u64),
}

struct Accumulator {
    tallies: TallyCounts,
    truth: PhotonTruth,
    records: BlockRecords,
    keep_records: bool,
    pulses_per_intensity: [u64; 2],
    click_rates: Vec<f64>,
}

impl Accumulator {
    fn new(options: SimulationOptions) -> Self {
        Self {
            tallies: TallyCounts::default(),
            truth: PhotonTruth::default(),
            records: BlockRecords::default(),
            keep_records: options.keep_records,
            pulses_per_intensity: [0; 2],
            click_rates: Vec::new(),
        }
    }

    fn finish_run(&mut self, run: &Run, rate: f64) {
        let seconds = run.t as f64 / rate;
        for &c in &run.clicks {
            self.click_rates.push(if seconds > 0.0 {
                c as f64 / seconds
            } else {
                0.0
            });
        }
        for k in 0..2 {
            self.pulses_per_intensity[k] += run.pulses_per_intensity[k];
        }
    }
}

/// Photon-number distribution of pulses that produced a signal click.
struct PhotonTable {
    cumulative: Vec<f64>,
}

impl PhotonTable {
    fn new(mu: f64, eta: f64) -> Self {
        let mut cumulative = Vec::new();
        let mut poisson = (-mu).exp();
        let mut acc = 0.0;
        for n in 1..=u8::MAX as u32 {
            poisson *= mu / n as f64;
            let detected = -(n as f64 * (-eta).ln_1p()).exp_m1();
            acc += poisson * detected;
            cumulative.push(acc);
            if poisson < 1e-18 {
                break;
            }
        }
        Self { cumulative }
    }

    fn sample(&self, u: f64) -> u8 {
        let total = self.cumulative.last().copied().unwrap_or(0.0);
        let i = self.cumulative.partition_point(|&c| c <= u * total);
        (i.min(self.cumulative.len() - 1) + 1) as u8
    }
}

struct Run<'a> {
    tables: &'a RunTables,
    dead: u64,
    prbs: Option<&'a [bool]>,
    /// `[detector][intensity]` click probability per pulse.
    click: Vec<[f64; 2]>,
    /// Dominating click probability per detector.
    bound: Vec<f64>,
    photons: Vec<[PhotonTable; 2]>,
    dead_until: Vec<u64>,
    clicks: Vec<u64>,
    pulses_per_intensity: [u64; 2],
    t: u64,
}

impl<'a> Run<'a> {
    fn new(tables: &'a RunTables, dead: u64, prbs: Option<&'a [bool]>) -> Self {
        let detectors = tables.detectors();
        let click: Vec<[f64; 2]> = (0..detectors)
            .map(|j| {
                [
                    tables.click_probability(j, Intensity::Mu1),
                    tables.click_probability(j, Intensity::Mu2),
                ]
            })
            .collect();
        let bound = click
            .iter()
            .enumerate()
            .map(|(j, c)| match prbs {
                Some(_) => c[0].max(c[1]),
                None => tables.mean_click_probability(j),
            })
            .collect();
        let photons = tables
            .arms
            .iter()
            .map(|arm| {
                [
                    PhotonTable::new(tables.means[0], arm.eta),
                    PhotonTable::new(tables.means[1], arm.eta),
                ]
            })
            .collect();
        Self {
            tables,
            dead,
            prbs,
            click,
            bound,
            photons,
            dead_until: vec![0; detectors],
            clicks: vec![0; detectors],
            pulses_per_intensity: [0; 2],
            t: 0,
        }
    }

    fn intensity_at(&self, pulse: u64) -> Option<Intensity> {
        self.prbs.map(|bits| {
            if bits[(pulse % bits.len() as u64) as usize] {
                Intensity::Mu1
            } else {
                Intensity::Mu2
            }
        })
    }

    /// Counts the intensities of pulses `[from, to)` that produced no click.
    fn count_silent<R: Rng>(&mut self, rng: &mut R, from: u64, to: u64, live: &[bool]) {
        if to <= from {
            return;
        }
        let len = to - from;
        if let Some(bits) = self.prbs {
            let period = bits.len() as u64;
            let ones_in = |start: u64, n: u64| -> u64 {
                let full = n / period;
                let per_period = bits.iter().filter(|&&b| b).count() as u64;
                let rest = (0..n % period)
                    .filter(|i| bits[((start + i) % period) as usize])
                    .count() as u64;
                full * per_period + rest
            };
            let ones = ones_in(from, len);
            self.pulses_per_intensity[0] += ones;
            self.pulses_per_intensity[1] += len - ones;
            return;
        }
        let p = self.tables.send_probability;
        let silent = |k: usize| -> f64 {
            let s: f64 = (0..live.len())
                .filter(|&j| live[j])
                .map(|j| self.click[j][k])
                .sum();
            p[k] * (1.0 - s)
        };
        let (a, b) = (silent(0), silent(1));
        let q = (a / (a + b)).clamp(0.0, 1.0);
        let ones = Binomial::new(len, q).expect("valid binomial").sample(rng);
        self.pulses_per_intensity[0] += ones;
        self.pulses_per_intensity[1] += len - ones;
    }

    /// Simulates until the stop condition and returns the pulses used.
    fn execute<R: Rng>(
        &mut self,
        rng: &mut R,
        acc: &mut Accumulator,
        stop: Stop,
    ) -> Result<u64, ChannelError> {
        let detectors = self.tables.detectors();
        let mut key_detections = 0u64;
        let mut live = vec![true; detectors];
        loop {
            match stop {
                Stop::KeyDetections(n) if key_detections >= n => return Ok(self.t),
                Stop::Pulses(n) if self.t >= n => return Ok(self.t),
                _ => {}
            }
            let mut p = 0.0;
            let mut wake = u64::MAX;
            for (j, l) in live.iter_mut().enumerate() {
                *l = self.dead_until[j] <= self.t;
                if *l {
                    p += self.bound[j];
                } else {
                    wake = wake.min(self.dead_until[j]);
                }
            }
            let limit = match stop {
                Stop::Pulses(n) => n,
                Stop::KeyDetections(_) => u64::MAX,
            };
            if p <= 0.0 {
                if wake == u64::MAX {
                    if limit == u64::MAX {
                        return Err(ChannelError::NoDetections);
                    }
                    let t0 = self.t;
                    self.count_silent(rng, t0, limit, &live);
                    self.t = limit;
                    continue;
                }
                let t0 = self.t;
                self.count_silent(rng, t0, wake.min(limit), &live);
                self.t = wake.min(limit);
                continue;
            }
            let gap = geometric(rng, p);
            let candidate = self.t.saturating_add(gap);
            if candidate >= wake.min(limit) {
                let t0 = self.t;
                let until = wake.min(limit);
                self.count_silent(rng, t0, until, &live);
                self.t = until;
                continue;
            }
            let t0 = self.t;
            self.count_silent(rng, t0, candidate, &live);
            self.t = candidate;

            let mut u = rng.random::<f64>() * p;
            let mut j = 0;
            for (i, &b) in self.bound.iter().enumerate() {
                if !live[i] {
                    continue;
                }
                j = i;
                if u < b {
                    break;
                }
                u -= b;
            }
            let k = match self.intensity_at(self.t) {
                Some(k) => {
                    if rng.random::<f64>() * self.bound[j] >= self.click[j][k.index()] {
                        self.pulses_per_intensity[k.index()] += 1;
                        self.t += 1;
                        continue;
                    }
                    k
                }
                None => {
                    let w = self.tables.send_probability;
                    let c = &self.click[j];
                    let r = rng.random::<f64>() * (w[0] * c[0] + w[1] * c[1]);
                    if r < w[0] * c[0] {
                        Intensity::Mu1
                    } else {
                        Intensity::Mu2
                    }
                }
            };
            self.pulses_per_intensity[k.index()] += 1;
            let entry = *self.tables.tables[j][k.index()].pick(rng.random());
            if self.record(rng, acc, &entry, k) == Some(BasisName::Z) {
                key_detections += 1;
            }
            self.clicks[j] += 1;
            self.dead_until[j] = self.t + 1 + self.dead;
            self.t += 1;
        }
    }

    /// Books one click and returns the basis if it was sifted.
    fn record<R: Rng>(
        &self,
        rng: &mut R,
        acc: &mut Accumulator,
        e: &Entry,
        k: Intensity,
    ) -> Option<BasisName> {
        let tables = self.tables;
        let arm = &tables.arms[e.arm];
        let st = tables.states[e.state];
        let mut outcome = arm.cells[e.cell].outcome;
        let photons = if e.signal {
            self.photons[e.arm][k.index()].sample(rng.random())
        } else {
            let mu = tables.means[k.index()] * (1.0 - arm.eta);
            sample_photon_number(mu, rng).min(u8::MAX as u32) as u8
        };
        let sifted = tables.sifted(e);
        if let (Some((basis, _, observed)), true) = (sifted, e.signal) {
            if rng.random::<f64>() < tables.error[basis.index()] {
                let mut r = rng.random_range(0..tables.d as u8 - 1);
                if r >= observed {
                    r += 1;
                }
                outcome = Some(r);
            }
        }
        if acc.keep_records {
            acc.records.alice.push(AliceRecord {
                basis: st.basis,
                symbol: st.symbol,
                intensity: k,
                photons,
            });
            acc.records.bob.push(BobRecord {
                basis: arm.basis,
                outcome,
            });
        }
        let (basis, sent, _) = sifted?;
        let error = outcome != Some(sent);
        acc.tallies.record(basis, k, error);
        let truth = &mut acc.truth;
        match (basis, photons) {
            (BasisName::Z, 0) => truth.z_vacuum += 1,
            (BasisName::Z, 1) => truth.z_single += 1,
            (BasisName::X, 0) => truth.x_vacuum += 1,
            (BasisName::X, 1) => {
                truth.x_single += 1;
                truth.x_single_errors += error as u64;
            }
            _ => {}
        }
        Some(basis)
    }
}

/// Failures before the first success with probability `p`.
fn geometric<R: Rng>(rng: &mut R, p: f64) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    let g = (u.ln() / (-p).ln_1p()).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{expected_tallies, NoiseParams};
    use crate::finite_key::DecoyScheme;

    fn link(protocol: Protocol, loss: f64, noise: NoiseParams) -> LinkModel {
        LinkModel::new(protocol, loss, DecoyScheme::new(0.1, 0.05), 0.9, 0.7, noise)
    }

    #[test]
    fn photon_number_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!((0..100).all(|_| sample_photon_number(0.0, &mut rng) == 0));
        let n = 1_000_000;
        let samples: Vec<u32> = (0..n)
            .map(|_| sample_photon_number(0.1, &mut rng))
            .collect();
        let mean = samples.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
        let sigma = (0.1 / n as f64).sqrt();
        assert!((mean - 0.1).abs() < 3.0 * sigma, "{mean}");
        let zeros = samples.iter().filter(|&&x| x == 0).count() as f64 / n as f64;
        assert!((zeros - (-0.1f64).exp()).abs() < 2e-3);
    }

    #[test]
    fn deterministic_given_seed() {
        let l = link(
            Protocol::FourD,
            14.0,
            NoiseParams::calibrated(Protocol::FourD),
        );
        let a = simulate_block(&l, Protocol::FourD, 5_000, 42).unwrap();
        let b = simulate_block(&l, Protocol::FourD, 5_000, 42).unwrap();
        let c = simulate_block(&l, Protocol::FourD, 5_000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.tallies, c.tallies);
    }

    #[test]
    fn noiseless_four_dim_is_error_free() {
        let mut l = link(Protocol::FourD, 0.0, NoiseParams::NONE);
        l.detector.timing_jitter = 0.0;
        let r = simulate_block_with(
            &l,
            Protocol::FourD,
            5_000,
            1,
            SimulationOptions {
                keep_records: true,
                prbs: false,
            },
        )
        .unwrap();
        assert_eq!(r.tallies.z.total_errors(), 0);
        assert_eq!(r.tallies.x.total_errors(), 0);
        let recs = r.records.unwrap();
        for (a, b) in recs.alice.iter().zip(&recs.bob) {
            if a.basis == b.basis {
                if let Some(o) = b.outcome {
                    assert_eq!(o, a.symbol);
                }
            }
        }
    }

    #[test]
    fn agrees_with_expectation() {
        for protocol in Protocol::ALL {
            let l = link(protocol, 14.0, NoiseParams::calibrated(protocol));
            let n = 50_000;
            let mc = simulate_block(&l, protocol, n, 11).unwrap();
            let ex = expected_tallies(&l, protocol, n).unwrap();
            for b in BasisName::ALL {
                let (m, e) = (mc.tallies.basis(b), ex.tallies.basis(b));
                for k in 0..2 {
                    for (got, want) in [(m.n[k], e.n[k]), (m.m[k], e.m[k])] {
                        let sigma = (want as f64).sqrt().max(1.0);
                        let z = (got as f64 - want as f64).abs() / sigma;
                        assert!(z < 4.0, "{protocol} {b:?} k={k}: {got} vs {want}");
                    }
                }
            }
            let dt = (mc.wall_time_equivalent - ex.wall_time_equivalent).abs();
            assert!(dt / ex.wall_time_equivalent < 0.02);
        }
    }

    #[test]
    fn prbs_mode_matches_expectation() {
        let l = link(Protocol::TwoD, 5.1, NoiseParams::calibrated(Protocol::TwoD));
        let opts = SimulationOptions {
            keep_records: false,
            prbs: true,
        };
        let mc = simulate_block_with(&l, Protocol::TwoD, 20_000, 3, opts).unwrap();
        let ex = expected_tallies(&l, Protocol::TwoD, 20_000).unwrap();
        for k in 0..2 {
            let want = ex.tallies.z.n[k] as f64;
            assert!((mc.tallies.z.n[k] as f64 - want).abs() < 4.0 * want.sqrt());
        }
    }

    #[test]
    fn conservation_and_saturation() {
        for protocol in Protocol::ALL {
            let l = link(protocol, 0.0, NoiseParams::calibrated(protocol));
            let r = simulate_block(&l, protocol, 2_000, 5).unwrap();
            for c in &r.raw_click_rate {
                assert!(*c <= 50e3, "{c}");
            }
            for k in Intensity::ALL {
                let n = r.tallies.z.detections(k) + r.tallies.x.detections(k);
                assert!(n <= r.pulses_per_intensity[k.index()]);
            }
            assert_eq!(r.pulses_per_intensity.iter().sum::<u64>(), r.pulses_sent);
        }
    }

    #[test]
    fn noise_floor() {
        for protocol in Protocol::ALL {
            let l = link(protocol, 60.0, NoiseParams::calibrated(protocol));
            let r = simulate_block(&l, protocol, 20_000, 9).unwrap();
            let q = r.tallies.z.error_rate().unwrap();
            let floor = protocol.dimension().noise_error_probability();
            assert!((q - floor).abs() < 0.02, "{protocol}: {q}");
        }
    }
}
