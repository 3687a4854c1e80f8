//! Dyadic level sets `a_k = |{|u| > 2^k}|` and the two discrete lemmas
//! built on them.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::SampledFunction;
use crate::group::{GroupDescriptor, QuasiNorm};
use crate::operator::{gagliardo_seminorm, FracParams, QuadratureConfig};

/// Level-set measures of a sampled function. Counts are kept as integers
/// so that the telescoping identities hold exactly; measures are counts
/// times the cell volume.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSetProfile {
    /// First index. For every `k < k_min`, `a_k = a_{k_min}` (the whole
    /// support).
    pub k_min: i32,
    /// `counts[j] = #{i : |u_i| > 2^{k_min + j}}`; the last entry is 0.
    pub counts: Vec<u64>,
    pub cell_volume: f64,
}

impl LevelSetProfile {
    /// Indices covered explicitly, `k_min..=k_max` with `a_{k_max} = 0`.
    pub fn k_range(&self) -> std::ops::RangeInclusive<i32> {
        self.k_min..=self.k_min + self.counts.len() as i32 - 1
    }

    pub fn count(&self, k: i32) -> u64 {
        if k < self.k_min {
            return self.counts.first().copied().unwrap_or(0);
        }
        self.counts
            .get((k - self.k_min) as usize)
            .copied()
            .unwrap_or(0)
    }

    /// `d_k = a_k − a_{k+1}` in cells.
    pub fn d_count(&self, k: i32) -> u64 {
        self.count(k) - self.count(k + 1)
    }

    pub fn a(&self, k: i32) -> f64 {
        self.count(k) as f64 * self.cell_volume
    }

    pub fn d(&self, k: i32) -> f64 {
        self.d_count(k) as f64 * self.cell_volume
    }

    /// Measures `a_k` over `k_range`.
    pub fn a_values(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 * self.cell_volume)
            .collect()
    }

    pub fn d_values(&self) -> Vec<f64> {
        self.k_range().map(|k| self.d(k)).collect()
    }
}

/// Smallest `k` with `2^k ≥ v` (for `v > 0`).
fn ceil_log2(v: f64) -> i32 {
    let mut k = v.log2().ceil() as i32;
    while 2f64.powi(k) < v {
        k += 1;
    }
    while 2f64.powi(k - 1) >= v {
        k -= 1;
    }
    k
}

pub fn level_set_profile(u: &SampledFunction) -> Result<LevelSetProfile> {
    if u.values.iter().any(|v| !v.is_finite()) {
        return invalid("level sets need finite values");
    }
    let cell_volume = u.grid.cell_volume();
    let mags: Vec<f64> = u
        .values
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > 0.0)
        .collect();
    if mags.is_empty() {
        return Ok(LevelSetProfile {
            k_min: 0,
            counts: vec![0],
            cell_volume,
        });
    }
    let lo = mags.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mags.iter().copied().fold(0.0, f64::max);
    // Every nonzero value exceeds 2^{k_min}; nothing exceeds 2^{k_max}.
    let k_min = ceil_log2(lo) - 1;
    let k_max = ceil_log2(hi);
    let counts = (k_min..=k_max)
        .map(|k| {
            let level = 2f64.powi(k);
            mags.iter().filter(|&&m| m > level).count() as u64
        })
        .collect();
    Ok(LevelSetProfile {
        k_min,
        counts,
        cell_volume,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSetBound {
    /// `S* = Σ_{k: a_k ≠ 0} 2^{kp} a_k^{−sp/Q} a_{k+1}`, including the
    /// geometric series over `k < k_min`.
    pub s_star: f64,
    pub seminorm: f64,
    /// `[u]^p / S*` (0 when both vanish).
    pub ratio: f64,
}

/// `S*` for a profile.
pub fn levelset_sum(profile: &LevelSetProfile, q_dim: f64, params: &FracParams) -> f64 {
    let p = params.p();
    let e = -params.sp() / q_dim;
    let mut total = 0.0;
    let a0 = profile.a(profile.k_min);
    if a0 > 0.0 {
        // k < k_min: a_k = a_{k+1} = a0, Σ_{k<k_min} 2^{kp} = 2^{k_min p}/(2^p − 1).
        total += 2f64.powf(profile.k_min as f64 * p) / (2f64.powf(p) - 1.0) * a0.powf(e) * a0;
    }
    for k in profile.k_range() {
        let ak = profile.a(k);
        if ak != 0.0 {
            total += 2f64.powf(k as f64 * p) * ak.powf(e) * profile.a(k + 1);
        }
    }
    total
}

pub fn levelset_lower_bound(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    u: &SampledFunction,
    cfg: &QuadratureConfig,
) -> Result<LevelSetBound> {
    let profile = level_set_profile(u)?;
    let s_star = levelset_sum(&profile, g.q_dim(), params);
    let seminorm = gagliardo_seminorm(g, norm, params, u, cfg)?;
    let ratio = if s_star == 0.0 {
        if seminorm == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        seminorm / s_star
    };
    Ok(LevelSetBound {
        s_star,
        seminorm,
        ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceReport {
    /// `Σ_k a_k^{(Q−sp)/Q} T^k`.
    pub lhs: f64,
    /// `Σ_{k: a_k ≠ 0} a_{k+1} a_k^{−sp/Q} T^k`.
    pub rhs: f64,
    /// `lhs / rhs`; 0 when both vanish, ∞ when only `rhs` does.
    pub ratio: f64,
    /// Right side vanishes while the left does not: a single nonzero
    /// entry, whose successor is zero.
    pub degenerate: bool,
}

/// Discrete sequence lemma for `a_{k0}, a_{k0+1}, …` (zero afterwards).
/// The sums follow the index set `{k : a_k ≠ 0}` literally.
pub fn sequence_lemma_check(
    a: &[f64],
    k0: i32,
    t: f64,
    q_dim: f64,
    params: &FracParams,
) -> Result<SequenceReport> {
    if !(t > 1.0 && t.is_finite()) {
        return invalid(format!("T must exceed 1, got {t}"));
    }
    params.require_subcritical(q_dim)?;
    if a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return invalid("sequence entries must be finite and nonnegative");
    }
    if a.windows(2).any(|w| w[1] > w[0]) {
        return invalid("sequence must be non-increasing");
    }
    let e_left = (q_dim - params.sp()) / q_dim;
    let e_right = -params.sp() / q_dim;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (j, &ak) in a.iter().enumerate() {
        if ak == 0.0 {
            continue;
        }
        let tk = t.powi(k0 + j as i32);
        lhs += ak.powf(e_left) * tk;
        let next = a.get(j + 1).copied().unwrap_or(0.0);
        rhs += next * ak.powf(e_right) * tk;
    }
    let degenerate = lhs > 0.0 && rhs == 0.0;
    let ratio = if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    };
    Ok(SequenceReport {
        lhs,
        rhs,
        ratio,
        degenerate,
    })
}
