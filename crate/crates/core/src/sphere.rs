//! Polar decomposition on the unit quasi-sphere `{q = 1}`.
//!
//! Every `x ≠ 0` is uniquely `δ_r ω` with `r = q(x)` and `q(ω) = 1`, and
//! Haar measure splits as `dx = r^{Q−1} dr dσ(ω)`. The quadrature rules
//! below represent `σ` by weighted nodes. Directions are parametrized on a
//! Euclidean sphere (or, for the weighted-max gauge, on the faces of its
//! unit box, which *is* its quasi-sphere) and pushed radially onto
//! `{q = 1}`; the Jacobian of that push is folded into the weights:
//!
//! ```text
//! dσ(δ_{1/q(u)} u) = ⟨A u, ν⟩ q(u)^{−Q} dS(u)
//! ```
//!
//! where `A = diag(v₁, …, v_N)` and `ν` is the outer unit normal of the
//! parametrizing surface at `u`.
//!
//! The Korányi sphere has its own chart, `(√cos α · e^{iψ}, sin α / 4)`,
//! in which that density is the constant 1/4; the pushed Euclidean rule is
//! kept as [`SphereScheme::EuclideanPush`] for cross-checks.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::group::{GroupDescriptor, Point, QuasiNorm, MAX_DIM};
use crate::quad::{adaptive_gk15, gauss_legendre_on, AdaptiveOpts};

/// Resolution used when a routine needs σ and the caller did not provide
/// a quadrature.
pub const REFERENCE_RESOLUTION: usize = 256;

/// Refuse rules whose node count would exceed this.
const MAX_NODES: usize = 4_000_000;

#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// σ(ω_Q) as seen by this rule.
    pub total: f64,
    pub resolution: usize,
    flat: Vec<f64>,
    dim: usize,
}

impl SphereQuadrature {
    fn from_parts(dim: usize, resolution: usize, nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        let flat: Vec<f64> = nodes.iter().flatten().copied().collect();
        let total = weights.iter().sum();
        SphereQuadrature {
            nodes: nodes.into_iter().map(Point).collect(),
            weights,
            total,
            resolution,
            flat,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn node(&self, j: usize) -> &[f64] {
        &self.flat[j * self.dim..(j + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Iterator over `(node, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.flat
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }
}

/// How directions are parametrized before being placed on `{q = 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SphereScheme {
    /// Gauge-adapted chart: box faces for weighted-max, the `(α, ψ)` chart
    /// for Korányi, the round sphere for Euclidean.
    Native,
    /// Round-sphere product rule pushed radially for every gauge.
    EuclideanPush,
}

/// Builds the polar quadrature for `(g, norm)` with the native scheme.
///
/// `resolution` is the number of azimuthal nodes; polar angles use
/// `resolution / 2` Gauss–Legendre nodes each. For the weighted-max gauge
/// every box face carries a `(resolution/2)^{N−1}` Gauss–Legendre product.
pub fn build_sphere_quadrature(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    resolution: usize,
) -> Result<SphereQuadrature> {
    build_sphere_quadrature_with(g, norm, resolution, SphereScheme::Native)
}

pub fn build_sphere_quadrature_with(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    resolution: usize,
    scheme: SphereScheme,
) -> Result<SphereQuadrature> {
    norm.check_compatible(g)?;
    if resolution < 8 {
        return invalid(format!(
            "sphere resolution must be at least 8, got {resolution}"
        ));
    }
    let n = g.dim();
    let estimated = if n == 1 {
        2
    } else if norm == QuasiNorm::WeightedMax && scheme == SphereScheme::Native {
        2 * n * (resolution / 2).pow(n as u32 - 1)
    } else {
        resolution * (resolution / 2).pow(n as u32 - 2)
    };
    if estimated > MAX_NODES {
        return invalid(format!(
            "sphere rule with resolution {resolution} in dimension {n} needs {estimated} nodes (limit {MAX_NODES})"
        ));
    }
    if n == 1 {
        // The quasi-sphere is {−1, +1} for every gauge on ℝ.
        return Ok(SphereQuadrature::from_parts(
            1,
            resolution,
            vec![vec![-1.0], vec![1.0]],
            vec![1.0, 1.0],
        ));
    }
    let (nodes, weights) = match (scheme, norm) {
        (SphereScheme::Native, QuasiNorm::WeightedMax) => box_face_rule(g, resolution),
        (SphereScheme::Native, QuasiNorm::Koranyi) => koranyi_chart_rule(resolution),
        _ => euclidean_push_rule(g, norm, resolution),
    };
    let quad = SphereQuadrature::from_parts(n, resolution, nodes, weights);
    for (node, _) in quad.iter() {
        let qn = norm.eval(g, node);
        if (qn - 1.0).abs() > 1e-12 {
            return Err(Error::Invariant(format!(
                "sphere node off the unit sphere: q = {qn}"
            )));
        }
    }
    Ok(quad)
}

fn box_face_rule(g: &GroupDescriptor, resolution: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = g.dim();
    let (x, w) = gauss_legendre_on(resolution / 2, -1.0, 1.0);
    let m = x.len();
    let per_face = m.pow(n as u32 - 1);
    let mut nodes = Vec::with_capacity(2 * n * per_face);
    let mut weights = Vec::with_capacity(2 * n * per_face);
    for axis in 0..n {
        for sign in [-1.0, 1.0] {
            for flat in 0..per_face {
                let mut rem = flat;
                let mut node = vec![0.0; n];
                let mut weight = g.weights()[axis];
                for (k, slot) in node.iter_mut().enumerate() {
                    if k == axis {
                        *slot = sign;
                        continue;
                    }
                    let idx = rem % m;
                    rem /= m;
                    *slot = x[idx];
                    weight *= w[idx];
                }
                nodes.push(node);
                weights.push(weight);
            }
        }
    }
    (nodes, weights)
}

/// Korányi sphere as `(√cos α cos ψ, √cos α sin ψ, sin α / 4)`,
/// `α ∈ [−π/2, π/2]`, where `dσ = dα dψ / 4`.
fn koranyi_chart_rule(resolution: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (alpha, wa) = gauss_legendre_on(resolution / 2, -0.5 * PI, 0.5 * PI);
    let dpsi = 2.0 * PI / resolution as f64;
    let mut nodes = Vec::with_capacity(alpha.len() * resolution);
    let mut weights = Vec::with_capacity(alpha.len() * resolution);
    for (a, w) in alpha.iter().zip(&wa) {
        let rho = a.cos().sqrt();
        for k in 0..resolution {
            let psi = dpsi * k as f64;
            nodes.push(vec![rho * psi.cos(), rho * psi.sin(), 0.25 * a.sin()]);
            weights.push(0.25 * w * dpsi);
        }
    }
    (nodes, weights)
}

/// Directions on the Euclidean sphere from hyperspherical angles with the
/// pole on the last coordinate (the `t` axis for Heisenberg, so that the
/// azimuthal trapezoid sees a rotation-invariant integrand for Korányi).
fn euclidean_push_rule(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    resolution: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = g.dim();
    let q_dim = g.q_dim();
    let polar = gauss_legendre_on(resolution / 2, 0.0, PI);
    let azimuth: Vec<f64> = (0..resolution)
        .map(|k| 2.0 * PI * k as f64 / resolution as f64)
        .collect();
    let dphi = 2.0 * PI / resolution as f64;
    let n_polar = n - 2;
    let mp = polar.0.len();
    let count = resolution * mp.pow(n_polar as u32);
    let mut nodes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for flat in 0..count {
        let mut rem = flat;
        let az = azimuth[rem % resolution];
        rem /= resolution;
        // Standard hyperspherical coordinates u₁ = cos φ₁, …, then reversed.
        let mut u = [0.0; MAX_DIM];
        let mut jac = dphi;
        let mut sin_prod = 1.0;
        for k in 0..n_polar {
            let idx = rem % mp;
            rem /= mp;
            let phi = polar.0[idx];
            jac *= polar.1[idx] * phi.sin().powi((n - 2 - k) as i32);
            u[k] = sin_prod * phi.cos();
            sin_prod *= phi.sin();
        }
        u[n - 2] = sin_prod * az.cos();
        u[n - 1] = sin_prod * az.sin();
        u[..n].reverse();
        let qu = norm.eval(g, &u[..n]);
        let au_u: f64 = (0..n).map(|i| g.weights()[i] * u[i] * u[i]).sum();
        let mut node = vec![0.0; n];
        g.dilate_into(1.0 / qu, &u[..n], &mut node);
        nodes.push(node);
        weights.push(jac * au_u * qu.powf(-q_dim));
    }
    (nodes, weights)
}

/// σ(ω_Q): closed form where one is known, otherwise a reference rule.
pub fn sphere_measure(g: &GroupDescriptor, norm: QuasiNorm) -> Result<f64> {
    norm.check_compatible(g)?;
    let n = g.dim();
    match norm {
        QuasiNorm::Euclidean => Ok(2.0 * PI.powf(n as f64 / 2.0) / gamma_fn(n as f64 / 2.0)),
        QuasiNorm::WeightedMax => Ok(g.q_dim() * 2f64.powi(n as i32)),
        QuasiNorm::Koranyi => Ok(build_sphere_quadrature(g, norm, REFERENCE_RESOLUTION)?.total),
    }
}

/// |B_q(0,1)| = σ(ω_Q)/Q.
pub fn unit_ball_volume(g: &GroupDescriptor, norm: QuasiNorm) -> Result<f64> {
    Ok(sphere_measure(g, norm)? / g.q_dim())
}

/// |B_q(0,R)| = R^Q σ(ω_Q)/Q.
pub fn ball_volume(g: &GroupDescriptor, norm: QuasiNorm, radius: f64) -> Result<f64> {
    if !(radius > 0.0) || !radius.is_finite() {
        return invalid(format!("ball radius must be positive, got {radius}"));
    }
    Ok(radius.powf(g.q_dim()) * unit_ball_volume(g, norm)?)
}

/// Lanczos approximation of Γ(x) for x > 0 (only half-integers are used).
pub(crate) fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// `∫_𝔾 f(x) dx` for `f` supported in (or negligible beyond) `B_q(0, r_max)`
/// by the polar formula: the sphere rule in angle and adaptive G7/K15 in r.
pub fn polar_integral<F: Fn(&[f64]) -> f64>(
    g: &GroupDescriptor,
    sphere: &SphereQuadrature,
    f: F,
    r_max: f64,
) -> Result<f64> {
    let n = g.dim();
    let q_dim = g.q_dim();
    let mut total = 0.0;
    for (node, w) in sphere.iter() {
        let radial = adaptive_gk15(
            |r| {
                let mut b = [0.0; MAX_DIM];
                g.dilate_into(r, node, &mut b[..n]);
                f(&b[..n]) * r.powf(q_dim - 1.0)
            },
            &[0.0, 0.5 * r_max, r_max],
            &AdaptiveOpts {
                abs_tol: 1e-14,
                rel_tol: 1e-12,
                max_subdivisions: 400,
            },
        )?;
        total += w * radial.value;
    }
    Ok(total)
}

/// Real roots `r > 0` of `c₀ + c₁ r + c₂ r² = v`, pushed into `out`.
#[inline]
pub(crate) fn positive_roots(c: &[f64; 3], v: f64, out: &mut Vec<f64>) {
    let a = c[2];
    let b = c[1];
    let cc = c[0] - v;
    if a == 0.0 {
        if b != 0.0 {
            let r = -cc / b;
            if r > 0.0 {
                out.push(r);
            }
        }
        return;
    }
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return;
    }
    let sq = disc.sqrt();
    let qv = -0.5 * (b + b.signum() * sq);
    let r1 = qv / a;
    let r2 = if qv != 0.0 { cc / qv } else { r1 };
    if r1 > 0.0 {
        out.push(r1);
    }
    if r2 > 0.0 && r2 != r1 {
        out.push(r2);
    }
}

#[inline]
pub(crate) fn eval_ray(c: &[[f64; 3]; MAX_DIM], n: usize, r: f64, out: &mut [f64]) {
    for i in 0..n {
        out[i] = c[i][0] + r * (c[i][1] + r * c[i][2]);
    }
}

/// `∫_a^b r^{−1−sp} dr` with `b` possibly infinite.
#[inline]
pub(crate) fn radial_power_integral(a: f64, b: f64, sp: f64) -> f64 {
    if b.is_infinite() {
        a.powf(-sp) / sp
    } else {
        (a.powf(-sp) - b.powf(-sp)) / sp
    }
}

/// Exterior kernel mass `∫_{𝔾∖B} q(y⁻¹∘x)^{−Q−sp} dy` of the box
/// `B = Π[lo_i, hi_i]` seen from `x ∈ B`.
///
/// Along each ray `r ↦ x ∘ δ_r ω` the kernel is exactly `r^{−Q−sp}`, so
/// only the set of radii outside `B` has to be found; it is bounded by
/// roots of the (at most quadratic) coordinate polynomials.
pub fn exterior_box_integral(
    g: &GroupDescriptor,
    sphere: &SphereQuadrature,
    lo: &[f64],
    hi: &[f64],
    x: &[f64],
    sp: f64,
) -> f64 {
    let n = g.dim();
    let mut roots = Vec::with_capacity(4 * n);
    let mut pt = [0.0; MAX_DIM];
    let mut total = 0.0;
    for (node, w) in sphere.iter() {
        let c = g.ray_coefficients(x, node);
        roots.clear();
        for i in 0..n {
            positive_roots(&c[i], lo[i], &mut roots);
            positive_roots(&c[i], hi[i], &mut roots);
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut outside = 0.0;
        let mut prev = 0.0;
        for k in 0..=roots.len() {
            let next = if k < roots.len() {
                roots[k]
            } else {
                f64::INFINITY
            };
            if next > prev {
                let probe = if next.is_finite() {
                    0.5 * (prev + next)
                } else {
                    prev + 1.0 + prev
                };
                eval_ray(&c, n, probe, &mut pt);
                let inside = (0..n).all(|i| pt[i] >= lo[i] && pt[i] <= hi[i]);
                if !inside {
                    if prev == 0.0 {
                        // x on or outside the boundary: the exterior reaches x.
                        return f64::INFINITY;
                    }
                    outside += radial_power_integral(prev, next, sp);
                }
            }
            prev = next;
        }
        total += w * outside;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(id: &str, norm: QuasiNorm, m: usize) -> (GroupDescriptor, SphereQuadrature) {
        let g = GroupDescriptor::from_id(id).unwrap();
        let s = build_sphere_quadrature(&g, norm, m).unwrap();
        (g, s)
    }

    #[test]
    fn circle_circumference() {
        let (_, s) = rule("abelian:2", QuasiNorm::Euclidean, 64);
        assert!((s.total - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn gaussian_by_polar_formula() {
        let (g, s) = rule("abelian:2", QuasiNorm::Euclidean, 32);
        let v = polar_integral(&g, &s, |x| (-(x[0] * x[0] + x[1] * x[1])).exp(), 12.0).unwrap();
        assert!((v - PI).abs() < 1e-6, "{v}");
    }

    #[test]
    fn koranyi_sphere_measure() {
        // |B_K(0,1)| = π²/8 for the Korányi gauge with the factor 16.
        let (_, s) = rule("heisenberg1", QuasiNorm::Koranyi, 64);
        assert!((s.total - PI * PI / 2.0).abs() < 1e-10, "{}", s.total);
    }

    #[test]
    fn pushed_rule_agrees_with_native_charts() {
        let g = GroupDescriptor::heisenberg();
        let push =
            build_sphere_quadrature_with(&g, QuasiNorm::Koranyi, 160, SphereScheme::EuclideanPush)
                .unwrap();
        assert!((push.total - PI * PI / 2.0).abs() < 1e-8, "{}", push.total);
        let a2 = GroupDescriptor::abelian(2).unwrap();
        let push = build_sphere_quadrature_with(
            &a2,
            QuasiNorm::WeightedMax,
            512,
            SphereScheme::EuclideanPush,
        )
        .unwrap();
        assert!((push.total - 8.0).abs() < 1e-3, "{}", push.total);
        // A smooth non-radial integrand: ∫ ω₁² dσ on both Korányi rules.
        let native = build_sphere_quadrature(&g, QuasiNorm::Koranyi, 64).unwrap();
        let push =
            build_sphere_quadrature_with(&g, QuasiNorm::Koranyi, 160, SphereScheme::EuclideanPush)
                .unwrap();
        let m = |s: &SphereQuadrature| s.iter().map(|(x, w)| w * x[0] * x[0]).sum::<f64>();
        assert!((m(&native) - m(&push)).abs() < 1e-7);
    }

    #[test]
    fn weighted_max_sphere_measure() {
        let (_, s) = rule("heisenberg1", QuasiNorm::WeightedMax, 16);
        assert!((s.total - 32.0).abs() < 1e-12);
        let (_, s) = rule("abelian:2", QuasiNorm::WeightedMax, 16);
        assert!((s.total - 8.0).abs() < 1e-12);
    }

    #[test]
    fn euclidean_three_sphere_area() {
        let (_, s) = rule("abelian:3", QuasiNorm::Euclidean, 32);
        assert!((s.total - 4.0 * PI).abs() < 1e-12);
        let (_, s) = rule("abelian:4", QuasiNorm::Euclidean, 32);
        assert!((s.total - 2.0 * PI * PI).abs() < 1e-10);
        assert!(
            (sphere_measure(&GroupDescriptor::abelian(4).unwrap(), QuasiNorm::Euclidean).unwrap()
                - 2.0 * PI * PI)
                .abs()
                < 1e-10
        );
    }

    #[test]
    fn nodes_on_sphere() {
        for (id, norm) in [
            ("abelian:1", QuasiNorm::Euclidean),
            ("abelian:2", QuasiNorm::WeightedMax),
            ("abelian:3", QuasiNorm::Euclidean),
            ("heisenberg1", QuasiNorm::Koranyi),
            ("heisenberg1", QuasiNorm::WeightedMax),
        ] {
            let (g, s) = rule(id, norm, 16);
            for (node, w) in s.iter() {
                assert!((norm.eval(&g, node) - 1.0).abs() <= 1e-12);
                assert!(w > 0.0);
            }
        }
    }

    #[test]
    fn resolution_floor() {
        let g = GroupDescriptor::heisenberg();
        assert!(build_sphere_quadrature(&g, QuasiNorm::Koranyi, 4).is_err());
        assert!(build_sphere_quadrature(&g, QuasiNorm::Euclidean, 16).is_err());
    }

    #[test]
    fn ball_volume_scaling() {
        let g = GroupDescriptor::heisenberg();
        let v1 = ball_volume(&g, QuasiNorm::Koranyi, 1.0).unwrap();
        let v2 = ball_volume(&g, QuasiNorm::Koranyi, 2.0).unwrap();
        assert!((v2 / v1 - 16.0).abs() < 1e-12);
        assert!((v1 - PI * PI / 8.0).abs() < 1e-10);
        let a2 = GroupDescriptor::abelian(2).unwrap();
        assert!((ball_volume(&a2, QuasiNorm::Euclidean, 1.0).unwrap() - PI).abs() < 1e-12);
        assert!(ball_volume(&a2, QuasiNorm::Euclidean, 0.0).is_err());
    }

    #[test]
    fn exterior_of_interval_is_exact() {
        let (g, s) = rule("abelian:1", QuasiNorm::Euclidean, 8);
        let sp = 0.5;
        let e = exterior_box_integral(&g, &s, &[-1.0], &[2.0], &[0.25], sp);
        let exact = (1.25f64.powf(-sp) + 1.75f64.powf(-sp)) / sp;
        assert!((e - exact).abs() < 1e-14);
    }

    #[test]
    fn exterior_of_disc_like_box_matches_polar() {
        // From the centre of a large square, compare with the closed form
        // for the inscribed and circumscribed discs.
        let (g, s) = rule("abelian:2", QuasiNorm::Euclidean, 256);
        let sp = 0.8;
        let e = exterior_box_integral(&g, &s, &[-1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0], sp);
        let inner = 2.0 * PI / sp;
        let outer = 2.0 * PI * 2f64.sqrt().powf(-sp) / sp;
        assert!(e < inner && e > outer);
        // Exact: 8 ∫₀^{π/4} (sec θ)^{−sp} dθ / sp
        let exact = 8.0
            * adaptive_gk15(
                |t: f64| t.cos().powf(sp),
                &[0.0, PI / 4.0],
                &AdaptiveOpts::default(),
            )
            .unwrap()
            .value
            / sp;
        assert!((e - exact).abs() < 1e-4 * exact, "{e} vs {exact}");
    }

    #[test]
    fn exterior_is_dilation_covariant() {
        let (g, s) = rule("heisenberg1", QuasiNorm::Koranyi, 32);
        let sp = 1.0;
        let lo = [-1.0, -0.5, -0.7];
        let hi = [0.8, 1.2, 0.9];
        let x = [0.1, 0.2, -0.3];
        let lam = 1.7;
        let mut lo2 = [0.0; 3];
        let mut hi2 = [0.0; 3];
        let mut x2 = [0.0; 3];
        g.dilate_into(lam, &lo, &mut lo2);
        g.dilate_into(lam, &hi, &mut hi2);
        g.dilate_into(lam, &x, &mut x2);
        let e1 = exterior_box_integral(&g, &s, &lo, &hi, &x, sp);
        let e2 = exterior_box_integral(&g, &s, &lo2, &hi2, &x2, sp);
        assert!((e2 - lam.powf(-sp) * e1).abs() < 1e-12 * e1);
    }

    #[test]
    fn roots_are_found() {
        let mut v = Vec::new();
        positive_roots(&[0.0, 0.0, 1.0], 4.0, &mut v);
        assert_eq!(v, vec![2.0]);
        v.clear();
        positive_roots(&[1.0, -3.0, 0.0], -2.0, &mut v);
        assert_eq!(v, vec![1.0]);
        v.clear();
        positive_roots(&[2.0, -3.0, 1.0], 0.0, &mut v);
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] - 2.0).abs() < 1e-15);
    }
}
