//! Hardy inequality `2μ(γ) ∫ |u|^p q^{−sp} ≤ [u]^p` and the fractional
//! Sobolev ratio `[u]^p / ‖u‖^p_{L^{p*}}`.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::SampledFunction;
use crate::group::{GroupDescriptor, QuasiNorm};
use crate::operator::{abs_pow, gagliardo_seminorm, FracParams, QuadratureConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HardyReport {
    pub gamma: f64,
    pub mu: f64,
    /// `∫ |u|^p q^{−sp}`.
    pub weighted: f64,
    /// `2μ ∫ |u|^p q^{−sp}`.
    pub lhs: f64,
    /// `[u]^p`.
    pub rhs: f64,
    /// `(rhs − lhs)/rhs`, or 0 for `u ≡ 0`.
    pub margin: f64,
}

/// `Σ |u_i|^p q(x_i)^{−sp} hᴺ`. The weight is singular at the identity, so
/// `u` must vanish on the grid cell that contains it.
pub fn hardy_weighted_norm(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    u: &SampledFunction,
) -> Result<f64> {
    norm.check_compatible(g)?;
    if let Some(c) = u.grid.cell_of(&g.identity().0) {
        if u.values[c] != 0.0 {
            return invalid(
                "u must vanish on the grid cell containing the identity (singular Hardy weight)",
            );
        }
    }
    let (p, sp) = (params.p(), params.sp());
    let mut x = vec![0.0; g.dim()];
    let mut total = 0.0;
    for (i, &v) in u.values.iter().enumerate() {
        if v != 0.0 {
            u.grid.node_into(i, &mut x);
            let q = norm.eval(g, &x);
            if q == 0.0 {
                return Err(Error::Singular);
            }
            total += abs_pow(v, p) * q.powf(-sp);
        }
    }
    Ok(total * u.grid.cell_volume())
}

#[allow(clippy::too_many_arguments)]
pub fn hardy_check(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    gamma: f64,
    mu: f64,
    u: &SampledFunction,
    cfg: &QuadratureConfig,
) -> Result<HardyReport> {
    if !(mu.is_finite() && mu >= 0.0) {
        return invalid(format!("μ must be finite and nonnegative, got {mu}"));
    }
    let weighted = hardy_weighted_norm(g, norm, params, u)?;
    let lhs = 2.0 * mu * weighted;
    let rhs = gagliardo_seminorm(g, norm, params, u, cfg)?;
    let margin = if rhs == 0.0 {
        if lhs == 0.0 {
            0.0
        } else {
            -1.0
        }
    } else {
        (rhs - lhs) / rhs
    };
    Ok(HardyReport {
        gamma,
        mu,
        weighted,
        lhs,
        rhs,
        margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SobolevReport {
    pub p_star: f64,
    pub seminorms: Vec<f64>,
    pub norms: Vec<f64>,
    /// `[u]^p / ‖u‖^p_{p*}` per family member.
    pub ratios: Vec<f64>,
    /// Empirical lower bound for `1/C`.
    pub min_ratio: f64,
}

/// `(‖u‖^p_{p*}, [u]^p, ratio)`.
pub fn sobolev_ratio(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    u: &SampledFunction,
    cfg: &QuadratureConfig,
) -> Result<(f64, f64, f64)> {
    let p_star = params
        .p_star(g.q_dim())
        .ok_or_else(|| Error::InvalidInput("the Sobolev exponent needs Q > sp".into()))?;
    let lp = u.lp_norm_pow(p_star).powf(params.p() / p_star);
    if lp == 0.0 {
        return invalid("the Sobolev ratio is undefined for u ≡ 0");
    }
    let semi = gagliardo_seminorm(g, norm, params, u, cfg)?;
    Ok((lp, semi, semi / lp))
}

pub fn sobolev_ratio_scan(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    family: &[SampledFunction],
    cfg: &QuadratureConfig,
) -> Result<SobolevReport> {
    if family.is_empty() {
        return invalid("the Sobolev scan needs at least one function");
    }
    let p_star = params
        .p_star(g.q_dim())
        .ok_or_else(|| Error::InvalidInput("the Sobolev exponent needs Q > sp".into()))?;
    let mut report = SobolevReport {
        p_star,
        seminorms: vec![],
        norms: vec![],
        ratios: vec![],
        min_ratio: f64::INFINITY,
    };
    for u in family {
        let (lp, semi, ratio) = sobolev_ratio(g, norm, params, u, cfg)?;
        report.norms.push(lp);
        report.seminorms.push(semi);
        report.ratios.push(ratio);
        report.min_ratio = report.min_ratio.min(ratio);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn zero_function_has_zero_sides() {
        let g = GroupDescriptor::abelian(1).unwrap();
        let u = SampledFunction::zeros(&g, GridSpec::cube(1, 1.0, 16).unwrap());
        let params = FracParams::new(0.25, 2.0).unwrap();
        let r = hardy_check(
            &g,
            QuasiNorm::Euclidean,
            &params,
            0.2,
            0.67,
            &u,
            &QuadratureConfig::default(),
        )
        .unwrap();
        assert_eq!((r.lhs, r.rhs, r.margin), (0.0, 0.0, 0.0));
    }

    #[test]
    fn origin_cell_must_vanish() {
        let g = GroupDescriptor::abelian(1).unwrap();
        let grid = GridSpec::cube(1, 1.0, 5).unwrap();
        let u = SampledFunction::new(g.name(), grid, vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let params = FracParams::new(0.25, 2.0).unwrap();
        assert!(hardy_weighted_norm(&g, QuasiNorm::Euclidean, &params, &u).is_err());
    }

    #[test]
    fn sobolev_needs_nonzero_function() {
        let g = GroupDescriptor::abelian(1).unwrap();
        let params = FracParams::new(0.25, 2.0).unwrap();
        let u = SampledFunction::zeros(&g, GridSpec::cube(1, 1.0, 8).unwrap());
        assert!(sobolev_ratio(
            &g,
            QuasiNorm::Euclidean,
            &params,
            &u,
            &QuadratureConfig::default()
        )
        .is_err());
        assert!(sobolev_ratio_scan(
            &g,
            QuasiNorm::Euclidean,
            &params,
            &[],
            &QuadratureConfig::default()
        )
        .is_err());
    }
}
