//! Kernel mass of the complement of a set,
//! `∫_{K^c} q(y⁻¹∘x)^{−Q−sp} dy ≥ C |K|^{−sp/Q}` with the explicit constant
//! `C = σ(ω_Q)/(sp) · |B_q(0, 1)|^{sp/Q}`, attained by `K = B_q(x, δ)`.
//!
//! `K` is a union of grid cells. Along a ray `r ↦ x∘δ_r ω` the kernel is
//! `r^{−Q−sp}` and every coordinate is a polynomial of degree ≤ 2 in `r`,
//! so the radii where the ray crosses grid planes are roots of
//! quadratics; between consecutive crossings the ray stays in one cell.
//! The radial integral is then exact and only the sphere rule in ω
//! carries discretization error.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::GridSpec;
use crate::group::{GroupDescriptor, Point, QuasiNorm, MAX_DIM};
use crate::operator::{FracParams, Kernel};
use crate::sphere::{
    eval_ray, exterior_box_integral, positive_roots, radial_power_integral, sphere_measure,
    unit_ball_volume, SphereQuadrature,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplementReport {
    pub measure: f64,
    /// `∫_{K^c} k(x, y) dy`.
    pub lhs: f64,
    /// `C |K|^{−sp/Q}`.
    pub floor: f64,
    pub constant: f64,
    /// `lhs/floor − 1`.
    pub margin: f64,
}

/// `σ(ω_Q)/(sp) · |B_q(0, 1)|^{sp/Q}`.
pub fn complement_constant(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
) -> Result<f64> {
    let sp = params.sp();
    Ok(sphere_measure(g, norm)? / sp * unit_ball_volume(g, norm)?.powf(sp / g.q_dim()))
}

/// Cells whose centres satisfy `q(c⁻¹∘y) < δ`.
pub fn ball_mask(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    grid: &GridSpec,
    center: &Point,
    delta: f64,
) -> Vec<bool> {
    let n = g.dim();
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    (0..grid.len())
        .map(|i| {
            grid.node_into(i, &mut y);
            g.left_quotient_into(&y, &center.0, &mut z);
            norm.eval(g, &z) < delta
        })
        .collect()
}

fn check_set(g: &GroupDescriptor, grid: &GridSpec, mask: &[bool], x: &Point) -> Result<usize> {
    g.check_point(x)?;
    if grid.dim() != g.dim() || mask.len() != grid.len() {
        return invalid("set mask does not match the grid");
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return invalid("K has measure zero");
    }
    Ok(count)
}

/// `∫_{K^c} k(x, y) dy` by exact ray marching; infinite when `x ∉ K`.
pub fn complement_integral(
    g: &GroupDescriptor,
    params: &FracParams,
    grid: &GridSpec,
    mask: &[bool],
    x: &Point,
    sphere: &SphereQuadrature,
) -> Result<f64> {
    check_set(g, grid, mask, x)?;
    let n = g.dim();
    let sp = params.sp();
    let inside = |pt: &[f64]| grid.cell_of(pt).is_some_and(|c| mask[c]);
    if !inside(&x.0) {
        return Ok(f64::INFINITY);
    }
    let mut roots = Vec::new();
    let mut pt = [0.0; MAX_DIM];
    let mut total = 0.0;
    for (node, w) in sphere.iter() {
        let c = g.ray_coefficients(&x.0, node);
        roots.clear();
        for (i, ci) in c.iter().enumerate().take(n) {
            let (lo, h) = (grid.lo()[i], grid.spacing()[i]);
            for k in 0..=grid.counts()[i] {
                positive_roots(ci, lo + k as f64 * h, &mut roots);
            }
        }
        roots.sort_by(f64::total_cmp);
        let mut outside = 0.0;
        let mut prev = 0.0;
        for k in 0..=roots.len() {
            let next = roots.get(k).copied().unwrap_or(f64::INFINITY);
            if next > prev {
                let probe = if next.is_finite() {
                    0.5 * (prev + next)
                } else {
                    2.0 * prev + 1.0
                };
                eval_ray(&c, n, probe, &mut pt);
                if !inside(&pt[..n]) {
                    outside += radial_power_integral(prev, next, sp);
                }
            }
            prev = next;
        }
        total += w * outside;
    }
    Ok(total)
}

/// Independent estimate: midpoint sum of the kernel over grid cells off
/// `K`, plus the exact exterior mass of the grid box.
pub fn complement_integral_brute(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    grid: &GridSpec,
    mask: &[bool],
    x: &Point,
    sphere: &SphereQuadrature,
) -> Result<f64> {
    check_set(g, grid, mask, x)?;
    let kernel = Kernel::new(g, norm, params);
    let mut y = vec![0.0; g.dim()];
    let mut sum = 0.0;
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            grid.node_into(i, &mut y);
            sum += kernel.eval(&x.0, &y);
        }
    }
    Ok(sum * grid.cell_volume()
        + exterior_box_integral(g, sphere, grid.lo(), grid.hi(), &x.0, params.sp()))
}

pub fn complement_integral_check(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    grid: &GridSpec,
    mask: &[bool],
    x: &Point,
    sphere: &SphereQuadrature,
) -> Result<ComplementReport> {
    let count = check_set(g, grid, mask, x)?;
    let measure = count as f64 * grid.cell_volume();
    let constant = complement_constant(g, norm, params)?;
    let floor = constant * measure.powf(-params.sp() / g.q_dim());
    let lhs = complement_integral(g, params, grid, mask, x, sphere)?;
    Ok(ComplementReport {
        measure,
        lhs,
        floor,
        constant,
        margin: lhs / floor - 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::build_sphere_quadrature;

    #[test]
    fn interval_is_exact() {
        // K = [−1, 2] around x = 0 on ℝ: ∫_{K^c} |y|^{−1−sp} = (1^{−sp} + 2^{−sp})/sp.
        let g = GroupDescriptor::abelian(1).unwrap();
        let params = FracParams::new(0.5, 1.5).unwrap();
        let grid = GridSpec::new(&[-4.0], &[4.0], &[8]).unwrap();
        let mask: Vec<bool> = (0..8).map(|i| (3..6).contains(&i)).collect();
        let sphere = build_sphere_quadrature(&g, QuasiNorm::Euclidean, 8).unwrap();
        let sp = params.sp();
        let got = complement_integral(&g, &params, &grid, &mask, &Point::new(vec![0.0]), &sphere)
            .unwrap();
        let want = (1.0 + 2f64.powf(-sp)) / sp;
        assert!((got - want).abs() < 1e-13, "{got} vs {want}");
    }

    #[test]
    fn point_outside_gives_infinity() {
        let g = GroupDescriptor::abelian(1).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let grid = GridSpec::cube(1, 1.0, 4).unwrap();
        let sphere = build_sphere_quadrature(&g, QuasiNorm::Euclidean, 8).unwrap();
        let v = complement_integral(
            &g,
            &params,
            &grid,
            &[true, false, false, false],
            &Point::new(vec![0.5]),
            &sphere,
        )
        .unwrap();
        assert!(v.is_infinite());
        assert!(complement_integral(
            &g,
            &params,
            &grid,
            &[false; 4],
            &Point::new(vec![0.5]),
            &sphere
        )
        .is_err());
    }

    #[test]
    fn disc_is_near_equality() {
        let g = GroupDescriptor::abelian(2).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let grid = GridSpec::cube(2, 1.0, 200).unwrap();
        let x = Point::new(vec![0.0, 0.0]);
        let mask = ball_mask(&g, QuasiNorm::Euclidean, &grid, &x, 0.5);
        let sphere = build_sphere_quadrature(&g, QuasiNorm::Euclidean, 256).unwrap();
        let r =
            complement_integral_check(&g, QuasiNorm::Euclidean, &params, &grid, &mask, &x, &sphere)
                .unwrap();
        assert!(r.margin.abs() < 0.01, "{r:?}");
        let brute =
            complement_integral_brute(&g, QuasiNorm::Euclidean, &params, &grid, &mask, &x, &sphere)
                .unwrap();
        assert!((brute / r.lhs - 1.0).abs() < 0.02, "{brute} vs {}", r.lhs);
    }
}
