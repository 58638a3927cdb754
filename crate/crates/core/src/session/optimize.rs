use super::{evaluate_block, KeyRateReport, SessionConfig, SessionError, SessionMode};
use crate::channel::expected_tallies;
use crate::finite_key::DecoyScheme;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Grid of intensities and receiver basis probabilities. The decoy send
/// probability stays at 1/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub mu1_min: f64,
    pub mu1_max: f64,
    pub mu1_step: f64,
    pub mu2_min: f64,
    pub mu2_step: f64,
    pub p_z_bob: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            mu1_min: 0.01,
            mu1_max: 0.5,
            mu1_step: 0.01,
            mu2_min: 0.005,
            mu2_step: 0.01,
            p_z_bob: vec![0.5, 0.7, 0.9],
        }
    }
}

impl SearchSpace {
    /// A space holding exactly one point.
    pub fn single(mu1: f64, mu2: f64, p_z_bob: f64) -> Self {
        Self {
            mu1_min: mu1,
            mu1_max: mu1,
            mu1_step: 1.0,
            mu2_min: mu2,
            mu2_step: 1.0,
            p_z_bob: vec![p_z_bob],
        }
    }

    /// Grid points `(μ1, μ2, p_Z^Bob)` with `μ2 ≤ μ1 / 2`.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let steps = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
            if !(step > 0.0) || hi < lo {
                return Vec::new();
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| round12(lo + i as f64 * step)).collect()
        };
        let mut out = Vec::new();
        for mu1 in steps(self.mu1_min, self.mu1_max, self.mu1_step) {
            for mu2 in steps(self.mu2_min, mu1 / 2.0, self.mu2_step) {
                if mu2 <= 0.0 || mu2 >= mu1 {
                    continue;
                }
                for &pb in &self.p_z_bob {
                    out.push((mu1, mu2, pb));
                }
            }
        }
        out
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub mu1: f64,
    pub mu2: f64,
    pub p_z_bob: f64,
    /// Zero where the key length clamps or the evaluation fails.
    pub skr_bits_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimization {
    pub best: GridPoint,
    pub best_report: Option<KeyRateReport>,
    pub surface: Vec<GridPoint>,
}

fn evaluate(config: &SessionConfig) -> Result<KeyRateReport, SessionError> {
    let block = expected_tallies(&config.link, config.protocol, config.security.block_size_nz)?;
    evaluate_block(config, &block.tallies, block.wall_time_equivalent)
}

/// Grid search on the analytic path. Ties keep the first point in grid
/// order.
pub fn optimize_parameters(
    base: &SessionConfig,
    space: &SearchSpace,
) -> Result<Optimization, SessionError> {
    let points = space.points();
    if points.is_empty() {
        return Err(SessionError::EmptySearchSpace);
    }
    let configure = |&(mu1, mu2, pb): &(f64, f64, f64)| {
        let mut c = base.with_mode(SessionMode::Analytic);
        c.link.source.decoy = DecoyScheme {
            mu1,
            mu2,
            ..c.link.source.decoy
        };
        c.link.p_z_bob = pb;
        c
    };
    let surface: Vec<GridPoint> = points
        .par_iter()
        .map(|p| GridPoint {
            mu1: p.0,
            mu2: p.1,
            p_z_bob: p.2,
            skr_bits_per_second: evaluate(&configure(p))
                .map(|r| r.skr_bits_per_second)
                .unwrap_or(0.0),
        })
        .collect();
    let best_index = surface.iter().enumerate().fold(0, |best, (i, g)| {
        if g.skr_bits_per_second > surface[best].skr_bits_per_second {
            i
        } else {
            best
        }
    });
    let best = surface[best_index];
    Ok(Optimization {
        best,
        best_report: evaluate(&configure(&points[best_index])).ok(),
        surface,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Protocol;
    use crate::reference::nearest_point;

    #[test]
    fn default_grid_shape() {
        let pts = SearchSpace::default().points();
        assert!(pts
            .iter()
            .all(|&(a, b, _)| b <= a / 2.0 + 1e-12 && b >= 0.005));
        assert!(pts.contains(&(0.07, 0.035, 0.5)) || pts.contains(&(0.07, 0.025, 0.5)));
        assert_eq!(pts.first().unwrap(), &(0.01, 0.005, 0.5));
        assert!(pts.iter().any(|&(a, _, _)| a == 0.5));
    }

    #[test]
    fn degenerate_space_returns_its_point() {
        let base = SessionConfig::from_point(nearest_point(Protocol::TwoD, 5.1));
        let opt = optimize_parameters(&base, &SearchSpace::single(0.07, 0.03, 0.5)).unwrap();
        assert_eq!(opt.surface.len(), 1);
        assert_eq!(
            (opt.best.mu1, opt.best.mu2, opt.best.p_z_bob),
            (0.07, 0.03, 0.5)
        );
        let empty = SearchSpace {
            p_z_bob: vec![],
            ..SearchSpace::default()
        };
        assert_eq!(
            optimize_parameters(&base, &empty),
            Err(SessionError::EmptySearchSpace)
        );
    }

    #[test]
    fn best_dominates_surface() {
        let base = SessionConfig::from_point(nearest_point(Protocol::FourD, 14.0));
        let space = SearchSpace {
            mu1_min: 0.1,
            mu1_max: 0.3,
            mu1_step: 0.05,
            ..SearchSpace::default()
        };
        let opt = optimize_parameters(&base, &space).unwrap();
        for g in &opt.surface {
            assert!(opt.best.skr_bits_per_second >= g.skr_bits_per_second);
        }
        assert!(opt.best.skr_bits_per_second > 0.0);
    }
}
