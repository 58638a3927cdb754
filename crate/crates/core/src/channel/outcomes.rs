//! Per-pulse click model shared by the analytic and Monte Carlo paths.
//!
//! Every pulse ends in at most one click. A receiver arm with per-photon
//! efficiency η sees a signal click with probability `1 - e^{-kη}`, placed in
//! a (detector, bin) cell according to the interferometer response;
//! otherwise a dark click lands uniformly on the arm's cells.

use super::model::{db_to_transmission, LinkModel, Protocol};
use crate::finite_key::Intensity;
use crate::qudit::{
    interferometer_response, state_vector, symbol_for_event, BasisName, InterferometerSpec, Port,
};

/// Which arms are active during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RunKind {
    /// Both arms behind a passive splitter.
    Passive,
    /// One arm only, for block-wise basis switching.
    Single(BasisName),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AliceState {
    pub basis: BasisName,
    pub symbol: u8,
    /// Probability given the intensity.
    pub probability: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Cell {
    /// Global detector index within the run.
    pub detector: usize,
    pub outcome: Option<u8>,
}

#[derive(Debug, Clone)]
pub(crate) struct Arm {
    pub basis: BasisName,
    /// Per-photon efficiency including routing.
    pub eta: f64,
    pub cells: Vec<Cell>,
    /// Signal cell distribution, indexed by Alice state.
    pub signal: Vec<Vec<f64>>,
    /// Dark-click probability per cell for a pulse without signal.
    pub dark: Vec<f64>,
}

/// One way a click can occur at a detector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Entry {
    pub state: usize,
    pub arm: usize,
    pub cell: usize,
    pub signal: bool,
    /// Probability per pulse given the intensity.
    pub weight: f64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct EntryTable {
    pub entries: Vec<Entry>,
    pub cumulative: Vec<f64>,
}

impl EntryTable {
    fn push(&mut self, e: Entry) {
        if e.weight <= 0.0 {
            return;
        }
        let last = self.cumulative.last().copied().unwrap_or(0.0);
        self.cumulative.push(last + e.weight);
        self.entries.push(e);
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Entry whose cumulative interval contains `u · total`.
    pub fn pick(&self, u: f64) -> &Entry {
        let target = u * self.total();
        let i = self.cumulative.partition_point(|&c| c <= target);
        &self.entries[i.min(self.entries.len() - 1)]
    }
}

/// Precomputed click tables of a run.
#[derive(Debug, Clone)]
pub(crate) struct RunTables {
    pub d: usize,
    pub states: Vec<AliceState>,
    pub arms: Vec<Arm>,
    pub means: [f64; 2],
    pub send_probability: [f64; 2],
    /// Intrinsic error per arm basis, jitter included.
    pub error: [f64; 2],
    /// `[detector][intensity]`.
    pub tables: Vec<[EntryTable; 2]>,
}

impl RunTables {
    pub fn new(link: &LinkModel, protocol: Protocol, kind: RunKind) -> Self {
        let d = protocol.dimension().get();
        let src = &link.source;
        let mut states = Vec::new();
        for basis in BasisName::ALL {
            let prepared = protocol.basis(basis).prepared_indices();
            for &s in prepared {
                states.push(AliceState {
                    basis,
                    symbol: s,
                    probability: src.basis_probability(basis) / prepared.len() as f64,
                });
            }
        }
        let arm_bases: Vec<BasisName> = match kind {
            RunKind::Passive => BasisName::ALL.to_vec(),
            RunKind::Single(b) => vec![b],
        };
        let mut arms = Vec::new();
        let mut next_detector = 0;
        for &b in &arm_bases {
            let arm = build_arm(link, protocol, kind, b, &states, next_detector);
            next_detector = arm
                .cells
                .iter()
                .map(|c| c.detector + 1)
                .max()
                .unwrap_or(next_detector);
            arms.push(arm);
        }
        let means = [src.decoy.mu1, src.decoy.mu2];
        let jitter = timing_error_probability(link.detector.timing_jitter, src.bin_duration);
        let error = [
            (src.intrinsic_error_z + jitter).min(1.0),
            (src.intrinsic_error_x + jitter).min(1.0),
        ];
        let mut tables: Vec<[EntryTable; 2]> =
            (0..next_detector).map(|_| Default::default()).collect();
        for k in Intensity::ALL {
            let mu = means[k.index()];
            for (a, arm) in arms.iter().enumerate() {
                let p_none = (-mu * arm.eta).exp();
                for (si, st) in states.iter().enumerate() {
                    for (ci, cell) in arm.cells.iter().enumerate() {
                        let table = &mut tables[cell.detector][k.index()];
                        table.push(Entry {
                            state: si,
                            arm: a,
                            cell: ci,
                            signal: true,
                            weight: st.probability * (1.0 - p_none) * arm.signal[si][ci],
                        });
                        table.push(Entry {
                            state: si,
                            arm: a,
                            cell: ci,
                            signal: false,
                            weight: st.probability * p_none * arm.dark[ci],
                        });
                    }
                }
            }
        }
        Self {
            d,
            states,
            arms,
            means,
            send_probability: [src.decoy.p_mu1, src.decoy.p_mu2],
            error,
            tables,
        }
    }

    pub fn detectors(&self) -> usize {
        self.tables.len()
    }

    /// Click probability per pulse at a detector given the intensity.
    pub fn click_probability(&self, detector: usize, k: Intensity) -> f64 {
        self.tables[detector][k.index()].total()
    }

    /// Click probability per pulse averaged over intensities.
    pub fn mean_click_probability(&self, detector: usize) -> f64 {
        Intensity::ALL
            .iter()
            .map(|&k| self.send_probability[k.index()] * self.click_probability(detector, k))
            .sum()
    }

    /// Whether the entry yields a sifted event: matching bases and a
    /// conclusive cell.
    pub fn sifted(&self, e: &Entry) -> Option<(BasisName, u8, u8)> {
        let arm = &self.arms[e.arm];
        let st = &self.states[e.state];
        let outcome = arm.cells[e.cell].outcome?;
        (arm.basis == st.basis).then_some((arm.basis, st.symbol, outcome))
    }

    /// Probability that a sifted entry is recorded as an error.
    pub fn error_probability(&self, e: &Entry) -> f64 {
        let Some((basis, sent, outcome)) = self.sifted(e) else {
            return 0.0;
        };
        let eps = self.error[basis.index()];
        match (e.signal, sent == outcome) {
            (false, true) => 0.0,
            (false, false) => 1.0,
            (true, true) => eps,
            (true, false) => 1.0 - eps / (self.d - 1) as f64,
        }
    }
}

/// Bin-misassignment probability from Gaussian timing jitter of the given
/// FWHM: the chance of landing more than half a bin away.
pub fn timing_error_probability(jitter_fwhm: f64, bin_duration: f64) -> f64 {
    if jitter_fwhm <= 0.0 {
        return 0.0;
    }
    let sigma = jitter_fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    libm::erfc(bin_duration / 2.0 / (sigma * std::f64::consts::SQRT_2))
}

fn build_arm(
    link: &LinkModel,
    protocol: Protocol,
    kind: RunKind,
    basis: BasisName,
    states: &[AliceState],
    first_detector: usize,
) -> Arm {
    let d = protocol.dimension().get();
    let measured = protocol.basis(basis);
    let routing = match kind {
        RunKind::Passive => link.bob_basis_probability(basis),
        RunKind::Single(_) => 1.0,
    };
    let channel = db_to_transmission(link.channel_loss_db);
    let detection = link.detector.detection_probability();
    let dark_bin = 1.0 - (-link.detector.dark_count_rate * link.source.bin_duration).exp();
    let dark_per_detector = 1.0 - (1.0 - dark_bin).powi(d as i32);

    let input = |st: &AliceState| {
        state_vector(protocol.basis(st.basis), st.symbol as usize).expect("prepared index < d")
    };

    match measured.measurement_delay() {
        None => {
            // Time of arrival on a single detector.
            let cells = (0..d)
                .map(|b| Cell {
                    detector: first_detector,
                    outcome: Some(b as u8),
                })
                .collect();
            let signal = states
                .iter()
                .map(|st| {
                    input(st)
                        .amplitudes()
                        .iter()
                        .map(|a| a.norm_sqr())
                        .collect()
                })
                .collect();
            Arm {
                basis,
                eta: channel * detection * routing,
                cells,
                signal,
                dark: vec![dark_per_detector / d as f64; d],
            }
        }
        Some(delay) => {
            let spec = InterferometerSpec::new(delay, 0.0, link.interferometer_loss_db(delay))
                .expect("delay is 1 or 2");
            // The qubit check arm has one physical detector; both ports map
            // onto it as logical outcomes.
            let detectors = match protocol {
                Protocol::TwoD => 1,
                Protocol::FourD => link.detector.n_detectors,
            };
            let ports = [Port::Plus, Port::Minus];
            let mut cells = Vec::with_capacity(2 * d);
            for port in ports {
                for bin in 0..d {
                    cells.push(Cell {
                        detector: first_detector + port.index() % detectors,
                        outcome: symbol_for_event(measured, port, bin).map(|s| s as u8),
                    });
                }
            }
            let signal = states
                .iter()
                .map(|st| {
                    let mut dist = vec![0.0; 2 * d];
                    for ev in interferometer_response(&input(st), &spec) {
                        dist[ev.port.index() * d + ev.bin % d] += ev.probability;
                    }
                    dist
                })
                .collect();
            let cells_per_detector = (2 * d / detectors) as f64;
            Arm {
                basis,
                eta: channel * spec.transmission() * detection * routing,
                cells,
                signal,
                dark: vec![dark_per_detector / cells_per_detector; 2 * d],
            }
        }
    }
}
