use crate::config::{ExperimentConfig, PointSpec};
use rayon::prelude::*;
use serde::Serialize;
use timebin_qkd::channel::Protocol;
use timebin_qkd::session::{optimize_parameters, run_session, KeyRateReport, SearchSpace};

/// A point that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFailure {
    pub protocol: Protocol,
    pub loss_db: f64,
    pub message: String,
}

/// Reports keyed by (protocol, loss), in evaluation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTable {
    pub reports: Vec<KeyRateReport>,
    pub failures: Vec<PointFailure>,
}

impl ReportTable {
    pub fn get(&self, protocol: Protocol, loss_db: f64) -> Option<&KeyRateReport> {
        self.reports
            .iter()
            .find(|r| r.protocol == protocol && (r.channel_loss_db - loss_db).abs() < 1e-9)
    }

    /// Largest loss with a positive key rate.
    pub fn cutoff_loss_db(&self, protocol: Protocol) -> Option<f64> {
        self.reports
            .iter()
            .filter(|r| r.protocol == protocol && r.skr_bits_per_second > 0.0)
            .map(|r| r.channel_loss_db)
            .max_by(f64::total_cmp)
    }
}

fn run_point(
    config: &ExperimentConfig,
    index: usize,
    spec: &PointSpec,
) -> Result<KeyRateReport, String> {
    let session = spec.session_config(config.block_size, config.mode());
    let session = if config.optimize {
        let opt =
            optimize_parameters(&session, &SearchSpace::default()).map_err(|e| e.to_string())?;
        let mut tuned = session;
        tuned.link.source.decoy.mu1 = opt.best.mu1;
        tuned.link.source.decoy.mu2 = opt.best.mu2;
        tuned.link.p_z_bob = opt.best.p_z_bob;
        tuned
    } else {
        session
    };
    run_session(&session, config.seed.wrapping_add(index as u64)).map_err(|e| e.to_string())
}

/// Evaluates every configured point. Points run concurrently; failures are
/// collected and the remaining points still run.
pub fn run_sweep(config: &ExperimentConfig) -> ReportTable {
    let points = config.all_points();
    let results: Vec<_> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| run_point(config, i, p))
        .collect();
    let mut table = ReportTable::default();
    for (p, r) in points.iter().zip(results) {
        match r {
            Ok(report) => table.reports.push(report),
            Err(message) => table.failures.push(PointFailure {
                protocol: p.protocol,
                loss_db: p.loss_db,
                message,
            }),
        }
    }
    table
}

/// Four-dimensional versus qubit protocol at one loss.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Comparison {
    pub loss_db: f64,
    pub skr_2d_bps: f64,
    pub skr_4d_bps: f64,
    /// `SKR_4D / SKR_2D`; empty when the qubit rate is zero.
    pub enhancement: Option<f64>,
    pub secret_fraction_2d: f64,
    pub secret_fraction_4d: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<Comparison>,
    /// Rows without a counterpart at the same loss.
    pub unmatched: Vec<(Protocol, f64)>,
}

pub fn compare_protocols(table: &ReportTable) -> ComparisonTable {
    let mut out = ComparisonTable::default();
    for r in &table.reports {
        let other = match r.protocol {
            Protocol::TwoD => Protocol::FourD,
            Protocol::FourD => Protocol::TwoD,
        };
        let Some(counterpart) = table.get(other, r.channel_loss_db) else {
            out.unmatched.push((r.protocol, r.channel_loss_db));
            continue;
        };
        if r.protocol == Protocol::FourD {
            continue;
        }
        if out
            .rows
            .iter()
            .any(|c| (c.loss_db - r.channel_loss_db).abs() < 1e-9)
        {
            continue;
        }
        let (two, four) = (r, counterpart);
        out.rows.push(Comparison {
            loss_db: r.channel_loss_db,
            skr_2d_bps: two.skr_bits_per_second,
            skr_4d_bps: four.skr_bits_per_second,
            enhancement: (two.skr_bits_per_second > 0.0)
                .then(|| four.skr_bits_per_second / two.skr_bits_per_second),
            secret_fraction_2d: two.secret_fraction,
            secret_fraction_4d: four.secret_fraction,
        });
    }
    out
}
