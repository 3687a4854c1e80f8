//! Brute-force sampling of `|a − t|^p ≥ (1 − t)^{p−1}(|a|^p − t)` for
//! `t ∈ [0, 1]`, `p > 1` and real or complex `a`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElementaryReport {
    pub samples: usize,
    /// Smallest normalized slack `(lhs − rhs) / (lhs + |rhs| + 1)`.
    pub min_slack: f64,
    /// `(|a|, arg a, t, p)` at the minimum.
    pub worst: (f64, f64, f64, f64),
    /// Samples with normalized slack below `−tolerance`.
    pub violations: usize,
    pub tolerance: f64,
}

/// Normalized slack of one instance. Both sides reach `10^{30}` for
/// `|a| = 10³`, `p = 10`, so the raw difference is scaled by the size of
/// the terms involved.
pub fn elementary_slack(a: Complex64, t: f64, p: f64) -> f64 {
    let lhs = (a - t).norm().powf(p);
    let rhs = (1.0 - t).powf(p - 1.0) * (a.norm().powf(p) - t);
    (lhs - rhs) / (lhs + rhs.abs() + 1.0)
}

/// `samples` instances: half real, half complex `a` with `|a|` log-uniform
/// in `[10⁻³, 10³]`, `t` uniform in `[0, 1]` and `p` uniform in `(1, 10]`,
/// plus the boundary cases `t ∈ {0, 1}` and `a ∈ {0, 1, t}`.
pub fn elementary_inequality_check(
    samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<ElementaryReport> {
    if samples == 0 {
        return invalid("at least one sample is required");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ElementaryReport {
        samples,
        min_slack: f64::INFINITY,
        worst: (0.0, 0.0, 0.0, 0.0),
        violations: 0,
        tolerance,
    };
    for i in 0..samples {
        let p = 1.0 + 9.0 * (1.0 - rng.gen::<f64>());
        let mut t: f64 = rng.gen();
        let radius = 10f64.powf(rng.gen_range(-3.0..=3.0));
        let angle = if i % 2 == 0 {
            if rng.gen::<bool>() {
                0.0
            } else {
                std::f64::consts::PI
            }
        } else {
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
        };
        let mut a = Complex64::from_polar(radius, angle);
        match i % 97 {
            0 => t = 0.0,
            1 => t = 1.0,
            2 => a = Complex64::new(0.0, 0.0),
            3 => a = Complex64::new(1.0, 0.0),
            4 => a = Complex64::new(t, 0.0),
            _ => {}
        }
        let slack = elementary_slack(a, t, p);
        if slack < -tolerance {
            report.violations += 1;
        }
        if slack < report.min_slack {
            report.min_slack = slack;
            report.worst = (a.norm(), a.arg(), t, p);
        }
    }
    Ok(report)
}
