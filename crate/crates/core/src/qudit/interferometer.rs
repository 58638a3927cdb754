use super::{Basis, QuditError, TimeBinState};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Unbalanced Mach–Zehnder interferometer with a long arm delayed by an
/// integer number of bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerSpec {
    delay: usize,
    /// Relative phase of the long arm, radians.
    pub phase: f64,
    insertion_loss_db: f64,
}

impl InterferometerSpec {
    pub fn new(delay: usize, phase: f64, insertion_loss_db: f64) -> Result<Self, QuditError> {
        if !(1..=2).contains(&delay) {
            return Err(QuditError::InvalidDelay(delay));
        }
        if !(insertion_loss_db >= 0.0) {
            return Err(QuditError::NegativeLoss(insertion_loss_db));
        }
        Ok(Self {
            delay,
            phase,
            insertion_loss_db,
        })
    }

    /// τ-delayed interferometer, 2.3 dB insertion loss.
    pub fn tau() -> Self {
        Self::new(1, 0.0, 2.3).unwrap()
    }

    /// 2τ-delayed interferometer, 2.5 dB insertion loss.
    pub fn two_tau() -> Self {
        Self::new(2, 0.0, 2.5).unwrap()
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn insertion_loss_db(&self) -> f64 {
        self.insertion_loss_db
    }

    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.insertion_loss_db / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    Plus,
    Minus,
}

impl Port {
    pub fn index(self) -> usize {
        match self {
            Port::Plus => 0,
            Port::Minus => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortBinProbability {
    pub port: Port,
    /// Output bin, `0..d + delay`.
    pub bin: usize,
    pub probability: f64,
}

/// Detection probability per output port and bin, before insertion loss.
///
/// Port `±` at output bin `t` carries `(a_t ± e^{iφ} a_{t-delay}) / 2`. The
/// returned list is ordered by bin, then port, and covers `d + delay` bins.
pub fn interferometer_response(
    input: &TimeBinState,
    spec: &InterferometerSpec,
) -> Vec<PortBinProbability> {
    let amps = input.amplitudes();
    let d = amps.len();
    let phase = Complex64::from_polar(1.0, spec.phase);
    let at = |t: isize| -> Complex64 {
        if t >= 0 && (t as usize) < d {
            amps[t as usize]
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let mut out = Vec::with_capacity(2 * (d + spec.delay));
    for t in 0..d + spec.delay {
        let short = at(t as isize);
        let long = phase * at(t as isize - spec.delay as isize);
        for (port, amp) in [(Port::Plus, short + long), (Port::Minus, short - long)] {
            out.push(PortBinProbability {
                port,
                bin: t,
                probability: (amp / 2.0).norm_sqr(),
            });
        }
    }
    out
}

/// Outcome statistics of measuring `input` in `measured`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    /// Probability of each conclusive outcome symbol `0..d`.
    pub conclusive: Vec<f64>,
    /// Probability mass landing in non-interfering bins.
    pub inconclusive: f64,
}

impl OutcomeDistribution {
    pub fn conclusive_mass(&self) -> f64 {
        self.conclusive.iter().sum()
    }

    /// Outcome probabilities conditioned on a conclusive event.
    pub fn conditional(&self) -> Vec<f64> {
        let total = self.conclusive_mass();
        if total == 0.0 {
            return vec![0.0; self.conclusive.len()];
        }
        self.conclusive.iter().map(|p| p / total).collect()
    }
}

/// The `(port, bin)` event that signals outcome `symbol` when measuring in
/// `basis`, or `None` for a direct time-of-arrival measurement where the
/// bin alone is the outcome.
///
/// Each measured basis state occupies a pair of bins `(i, j)`, `i < j`. Its
/// interference shows up at output bin `j`; the bin pair selects the upper
/// bit of the symbol and the port selects the lower bit.
pub fn outcome_event(basis: Basis, symbol: usize) -> Option<(Port, usize)> {
    basis.measurement_delay()?;
    let state = super::state_vector(basis, symbol).ok()?;
    let later = state
        .amplitudes()
        .iter()
        .rposition(|a| a.norm_sqr() > 0.0)?;
    let port = if symbol.is_multiple_of(2) {
        Port::Plus
    } else {
        Port::Minus
    };
    Some((port, later))
}

/// Maps an output `(port, bin)` event to the outcome symbol it signals.
pub fn symbol_for_event(basis: Basis, port: Port, bin: usize) -> Option<usize> {
    (0..basis.dimension.get()).find(|&s| outcome_event(basis, s) == Some((port, bin)))
}

/// Measures `input` with the receiver arrangement for `measured`: direct
/// time of arrival for the qubit key basis, otherwise the interferometer
/// whose delay matches the basis pairs. Events outside the interference bins
/// are inconclusive.
pub fn measurement_outcome_distribution(
    input: &TimeBinState,
    measured: Basis,
) -> Result<OutcomeDistribution, QuditError> {
    let d = measured.dimension.get();
    if input.dimension() != d {
        return Err(QuditError::DimensionMismatch(input.dimension(), d));
    }
    let Some(delay) = measured.measurement_delay() else {
        let conclusive = input.amplitudes().iter().map(|a| a.norm_sqr()).collect();
        return Ok(OutcomeDistribution {
            conclusive,
            inconclusive: 0.0,
        });
    };
    let spec = InterferometerSpec::new(delay, 0.0, 0.0)?;
    let response = interferometer_response(input, &spec);
    let mut conclusive = vec![0.0; d];
    let mut inconclusive = 0.0;
    for ev in response {
        match symbol_for_event(measured, ev.port, ev.bin) {
            Some(s) => conclusive[s] += ev.probability,
            None => inconclusive += ev.probability,
        }
    }
    Ok(OutcomeDistribution {
        conclusive,
        inconclusive,
    })
}
