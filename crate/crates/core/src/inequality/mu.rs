//! The Hardy constant μ(γ) and the sphere integral
//!
//! ```text
//! L(ρ; x′) = ∫_{q(y′)=1} q((δ_ρ y′)⁻¹ ∘ x′)^{−(Q+sp)} dσ(y′),   q(x′) = 1.
//! ```
//!
//! `L` is sharply peaked as ρ → 1. Away from ρ = 1 it is evaluated with
//! the fixed sphere rule. Near ρ = 1 it is integrated adaptively over a
//! chart of the sphere. On groups with a weight-2 coordinate the peak is a
//! thin curved strip (width ε along the curve where the weight-2
//! component of `(δ_ρ y′)⁻¹∘x′` vanishes, ε² across it). The chart
//! coordinate across the strip is therefore reparametrized so that the
//! strip lies on a cell edge.
//!
//! μ is then a one-dimensional integral in ρ:
//! * the half-line form
//!   `∫₁^∞ (ρ^γ − 1)^{p−1} (ρ^{Q−1−γ(p−1)} − ρ^{sp−1}) L(ρ) dρ`, valid when
//!   `L` obeys the reflection identity `L(1/ζ) = ζ^{Q+sp} L(ζ)`;
//! * the full-line form `∫₀^∞ φ_p(1 − ρ^{−γ}) L(ρ) ρ^{Q−1} dρ`, folded onto
//!   `[1, ∞)` by `ρ ↦ 1/ρ` so that the principal value converges
//!   absolutely. This one is the exact constant in
//!   `(−Δ_p)^s q^{−γ}(x′) = 2μ(x′)` and needs no reflection identity.
//!
//! Near ρ = 1 both integrands behave like `(ρ − 1)^{p−1−sp}`. They are
//! integrated by Gauss–Legendre on dyadic shells of `η = ρ − 1`. The
//! innermost shell `(0, η_min)` uses that power law with its amplitude
//! fitted at the smallest node. Beyond ρ = 2 the variable is `t = ln ρ`
//! with `ζ = e^{−t}`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::group::{GroupDescriptor, Point, QuasiNorm, MAX_DIM};
use crate::operator::{phi, FracParams};
use crate::quad::{adaptive_cubature_cells, adaptive_gk15, gauss_legendre_on, AdaptiveOpts, Rect};
use crate::sphere::{build_sphere_quadrature, gamma_fn, SphereQuadrature};

/// Relative spread of `L(ρ; ·)` below which `L` is treated as independent
/// of the base point.
pub const ISOTROPY_THRESHOLD: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct MuOptions {
    /// The dyadic shells cover `η = ρ − 1 ∈ [2^{−octaves}, 1]`.
    pub octaves: u32,
    /// Gauss–Legendre nodes per shell and per tail panel.
    pub gl_nodes: usize,
    /// Resolution of the fixed sphere rule used away from ρ = 1.
    pub sphere_resolution: usize,
    /// Relative tolerance of the adaptive sphere integrals.
    pub rel_tol: f64,
    pub max_refinements: usize,
}

impl Default for MuOptions {
    fn default() -> Self {
        Self {
            octaves: 12,
            gl_nodes: 8,
            sphere_resolution: 64,
            rel_tol: 1e-9,
            max_refinements: 400_000,
        }
    }
}

impl MuOptions {
    /// Defaults tuned per gauge. The weighted-max integrands have kinks
    /// wherever the maximum switches coordinate, so the adaptive cubature
    /// only converges algebraically there; a looser tolerance keeps the
    /// cost comparable to the smooth gauges.
    pub fn for_gauge(norm: QuasiNorm) -> Self {
        match norm {
            QuasiNorm::WeightedMax => Self {
                rel_tol: 1e-6,
                octaves: 10,
                ..Self::default()
            },
            _ => Self::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Chart {
    /// ℝ¹: the sphere is {−1, 1}.
    Pair,
    /// Euclidean circle, angle chart.
    Circle,
    /// Boundary of the weighted-max unit box, one patch per face.
    Faces,
    /// Korányi sphere in (α, ψ), dσ = dα dψ / 4.
    Koranyi,
    /// Round 2-sphere in (θ, ψ), dσ = sin θ dθ dψ.
    Round,
    /// Euclidean sphere in N ≥ 4 through the polar-angle formula.
    Radial,
}

#[derive(Clone, Copy, Debug)]
struct Patch {
    id: usize,
    lo: [f64; 2],
    hi: [f64; 2],
}

#[derive(Clone, Copy, Debug)]
enum SubMap {
    Plain {
        id: usize,
    },
    /// Half of a patch on one side of the strip curve
    /// `v = c₀ + c₁(u − u₀) + c₂(u − u₀)²` (clamped to the patch). The
    /// cell coordinates are `(u, τ)` with τ ∈ [0, 1].
    Strip {
        id: usize,
        along: usize,
        curve: [f64; 4],
        lower: bool,
        lo: f64,
        hi: f64,
    },
}

/// Evaluator for `L(ρ; x′)` and the companion
/// `M(ζ; x′) = ∫ q(y′⁻¹ ∘ δ_ζ x′)^{−(Q+sp)} dσ(y′)`, which equals
/// `ρ^{Q+sp} L(ρ; x′)` at `ζ = 1/ρ`.
pub struct SphereIntegral {
    g: GroupDescriptor,
    norm: QuasiNorm,
    exponent: f64,
    chart: Chart,
    vertical: Option<usize>,
    sphere: SphereQuadrature,
    adaptive: AdaptiveOpts,
}

impl SphereIntegral {
    pub fn new(
        g: &GroupDescriptor,
        norm: QuasiNorm,
        params: &FracParams,
        opts: &MuOptions,
    ) -> Result<Self> {
        norm.check_compatible(g)?;
        let n = g.dim();
        let chart = match (n, norm) {
            (1, _) => Chart::Pair,
            (2, QuasiNorm::Euclidean) => Chart::Circle,
            (3, QuasiNorm::Euclidean) => Chart::Round,
            (_, QuasiNorm::Euclidean) => Chart::Radial,
            (2 | 3, QuasiNorm::WeightedMax) => Chart::Faces,
            (3, QuasiNorm::Koranyi) => Chart::Koranyi,
            _ => {
                return Err(Error::Unsupported(format!(
                    "adaptive sphere integrals for the {} gauge in dimension {n}",
                    norm.id()
                )))
            }
        };
        let vertical = g
            .weights()
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 1.0)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i);
        Ok(Self {
            g: g.clone(),
            norm,
            exponent: -(g.q_dim() + params.sp()),
            chart,
            vertical,
            sphere: build_sphere_quadrature(g, norm, opts.sphere_resolution)?,
            adaptive: AdaptiveOpts {
                abs_tol: 0.0,
                rel_tol: opts.rel_tol,
                max_subdivisions: opts.max_refinements,
            },
        })
    }

    pub fn sphere(&self) -> &SphereQuadrature {
        &self.sphere
    }

    /// Checks that `x` lies on the unit quasi-sphere.
    pub fn check_base_point(&self, x: &Point) -> Result<()> {
        self.g.check_point(x)?;
        let q = self.norm.eval(&self.g, &x.0);
        if (q - 1.0).abs() > 1e-10 {
            return invalid(format!("base point must satisfy q(x′) = 1, got q = {q}"));
        }
        Ok(())
    }

    #[inline]
    fn kernel_at(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.g.dim();
        let mut z = [0.0; MAX_DIM];
        self.g.left_quotient_into(x, y, &mut z[..n]);
        self.norm.eval_pow(&self.g, &z[..n], self.exponent)
    }

    /// `q((δ_ρ y)⁻¹ ∘ x)^{−(Q+sp)}`.
    #[inline]
    fn l_integrand(&self, x: &[f64], rho: f64, y: &[f64]) -> f64 {
        let n = self.g.dim();
        let mut d = [0.0; MAX_DIM];
        self.g.dilate_into(rho, y, &mut d[..n]);
        self.kernel_at(x, &d[..n])
    }

    /// `L(ρ; x′)`.
    pub fn l(&self, rho: f64, x: &Point) -> Result<f64> {
        if !(rho > 0.0 && rho.is_finite()) {
            return invalid(format!("ρ must be positive and finite, got {rho}"));
        }
        if rho == 1.0 {
            return Err(Error::Singular);
        }
        let x = &x.0[..];
        match self.chart {
            Chart::Pair => Ok([-1.0, 1.0]
                .iter()
                .map(|y| (x[0] - rho * y).abs().powf(self.exponent))
                .sum()),
            Chart::Radial => self.radial(rho),
            _ if (0.5..=2.0).contains(&rho) => {
                if matches!(self.chart, Chart::Circle) || self.g.dim() == 2 {
                    self.adaptive_1d(rho, x)
                } else {
                    self.adaptive_2d(rho, x)
                }
            }
            _ => Ok(self
                .sphere
                .iter()
                .map(|(y, w)| w * self.l_integrand(x, rho, y))
                .sum()),
        }
    }

    /// `M(ζ; x′)`, for `ζ ∈ [0, 1)`.
    pub fn m(&self, zeta: f64, x: &Point) -> Result<f64> {
        if !(0.0..1.0).contains(&zeta) {
            return invalid(format!("ζ must lie in [0, 1), got {zeta}"));
        }
        if zeta > 0.5 || matches!(self.chart, Chart::Pair | Chart::Radial) && zeta > 0.0 {
            let rho = 1.0 / zeta;
            return Ok(rho.powf(-self.exponent) * self.l(rho, x)?);
        }
        let n = self.g.dim();
        let mut d = [0.0; MAX_DIM];
        self.g.dilate_into(zeta, &x.0, &mut d[..n]);
        Ok(self
            .sphere
            .iter()
            .map(|(y, w)| w * self.kernel_at(&d[..n], y))
            .sum())
    }

    /// `|S^{N−2}| ∫₀^π sin^{N−2}θ (1 + ρ² − 2ρ cos θ)^{−(N+sp)/2} dθ`.
    fn radial(&self, rho: f64) -> Result<f64> {
        let n = self.g.dim() as f64;
        let area = 2.0 * PI.powf(0.5 * (n - 1.0)) / gamma_fn(0.5 * (n - 1.0));
        let half = 0.5 * self.exponent;
        let f = |t: f64| t.sin().powf(n - 2.0) * (1.0 + rho * rho - 2.0 * rho * t.cos()).powf(half);
        let eps = (rho - 1.0).abs();
        let bp = graded(0.0, 0.0, PI, 0.25 * eps, 4.0);
        Ok(area * adaptive_gk15(f, &bp, &self.adaptive)?.value)
    }

    fn patches(&self, anchor: [f64; 2]) -> Vec<Patch> {
        let n = self.g.dim();
        match self.chart {
            Chart::Circle => vec![Patch {
                id: 0,
                lo: [anchor[0] - PI, 0.0],
                hi: [anchor[0] + PI, 0.0],
            }],
            Chart::Koranyi => vec![Patch {
                id: 0,
                lo: [-0.5 * PI, anchor[1] - PI],
                hi: [0.5 * PI, anchor[1] + PI],
            }],
            Chart::Round => vec![Patch {
                id: 0,
                lo: [0.0, anchor[1] - PI],
                hi: [PI, anchor[1] + PI],
            }],
            Chart::Faces => (0..2 * n)
                .map(|id| Patch {
                    id,
                    lo: [-1.0, -1.0],
                    hi: [1.0, 1.0],
                })
                .collect(),
            Chart::Pair | Chart::Radial => Vec::new(),
        }
    }

    /// Sphere point for chart coordinates `c` on patch `id`; returns the
    /// surface density.
    #[inline]
    fn map(&self, id: usize, c: [f64; 2], y: &mut [f64]) -> f64 {
        match self.chart {
            Chart::Circle => {
                y[0] = c[0].cos();
                y[1] = c[0].sin();
                1.0
            }
            Chart::Koranyi => {
                let r = c[0].cos().max(0.0).sqrt();
                y[0] = r * c[1].cos();
                y[1] = r * c[1].sin();
                y[2] = 0.25 * c[0].sin();
                0.25
            }
            Chart::Round => {
                let (st, ct) = c[0].sin_cos();
                y[0] = st * c[1].cos();
                y[1] = st * c[1].sin();
                y[2] = ct;
                st
            }
            Chart::Faces => {
                let axis = id / 2;
                y[axis] = if id % 2 == 0 { -1.0 } else { 1.0 };
                let mut k = 0;
                for (i, yi) in y.iter_mut().enumerate().take(self.g.dim()) {
                    if i != axis {
                        *yi = c[k];
                        k += 1;
                    }
                }
                self.g.weights()[axis]
            }
            Chart::Pair | Chart::Radial => unreachable!("no chart"),
        }
    }

    /// Patch and chart coordinates of a point on the sphere.
    fn locate(&self, x: &[f64]) -> (usize, [f64; 2]) {
        match self.chart {
            Chart::Circle => (0, [x[1].atan2(x[0]), 0.0]),
            Chart::Koranyi => (0, [(4.0 * x[2]).clamp(-1.0, 1.0).asin(), x[1].atan2(x[0])]),
            Chart::Round => (0, [x[2].clamp(-1.0, 1.0).acos(), x[1].atan2(x[0])]),
            Chart::Faces => {
                let w = self.g.weights();
                let axis = (0..self.g.dim())
                    .max_by(|&a, &b| {
                        x[a].abs()
                            .powf(1.0 / w[a])
                            .total_cmp(&x[b].abs().powf(1.0 / w[b]))
                    })
                    .expect("nonempty");
                let id = 2 * axis + usize::from(x[axis] > 0.0);
                let mut c = [0.0; 2];
                let mut k = 0;
                for (i, xi) in x.iter().enumerate() {
                    if i != axis {
                        c[k] = *xi;
                        k += 1;
                    }
                }
                (id, c)
            }
            Chart::Pair | Chart::Radial => (0, [0.0; 2]),
        }
    }

    fn adaptive_1d(&self, rho: f64, x: &[f64]) -> Result<f64> {
        let (home, c0) = self.locate(x);
        let eps = (rho - 1.0).abs();
        let mut total = 0.0;
        for p in self.patches(c0) {
            let bp = if p.id == home {
                graded(c0[0], p.lo[0], p.hi[0], 0.125 * eps * eps.min(1.0), 4.0)
            } else {
                vec![p.lo[0], p.hi[0]]
            };
            let mut y = [0.0; MAX_DIM];
            let f = |u: f64| {
                let dens = self.map(p.id, [u, 0.0], &mut y);
                dens * self.l_integrand(x, rho, &y[..self.g.dim()])
            };
            total += adaptive_gk15(f, &bp, &self.adaptive)?.value;
        }
        Ok(total)
    }

    /// Weight-2 component of `(δ_ρ y(c))⁻¹ ∘ x`.
    fn vertical_gap(&self, id: usize, c: [f64; 2], rho: f64, x: &[f64], t: usize) -> f64 {
        let n = self.g.dim();
        let mut y = [0.0; MAX_DIM];
        let mut d = [0.0; MAX_DIM];
        let mut z = [0.0; MAX_DIM];
        self.map(id, c, &mut y);
        self.g.dilate_into(rho, &y[..n], &mut d[..n]);
        self.g.left_quotient_into(x, &d[..n], &mut z[..n]);
        z[t]
    }

    /// Root in the across coordinate of the vertical gap at a fixed along
    /// coordinate, by Newton's method from `start`.
    #[allow(clippy::too_many_arguments)]
    fn strip_root(
        &self,
        id: usize,
        along: usize,
        u: f64,
        start: f64,
        rho: f64,
        x: &[f64],
        t: usize,
    ) -> Option<f64> {
        let at = |v: f64| {
            let mut c = [0.0; 2];
            c[along] = u;
            c[1 - along] = v;
            self.vertical_gap(id, c, rho, x, t)
        };
        let mut v = start;
        for _ in 0..60 {
            let h = 1e-7 * (1.0 + v.abs());
            let f = at(v);
            let df = (at(v + h) - at(v - h)) / (2.0 * h);
            if df == 0.0 || !df.is_finite() {
                return None;
            }
            let step = f / df;
            v -= step;
            if step.abs() <= 1e-15 * (1.0 + v.abs()) {
                return Some(v);
            }
        }
        (at(v).abs() < 1e-13).then_some(v)
    }

    fn adaptive_2d(&self, rho: f64, x: &[f64]) -> Result<f64> {
        let (home, c0) = self.locate(x);
        let eps = (rho - 1.0).abs();
        let mut rects = Vec::new();
        let mut maps = Vec::new();
        for p in self.patches(c0) {
            if p.id != home {
                rects.push(Rect {
                    tag: maps.len(),
                    lo: p.lo,
                    hi: p.hi,
                });
                maps.push(SubMap::Plain { id: p.id });
            } else if !self.strip_cells(p, c0, rho, x, eps, &mut rects, &mut maps) {
                let s0 = graded(c0[0], p.lo[0], p.hi[0], 0.25 * eps, 8.0);
                let s1 = graded(c0[1], p.lo[1], p.hi[1], 0.25 * eps, 8.0);
                let tag = maps.len();
                maps.push(SubMap::Plain { id: p.id });
                for a in s0.windows(2) {
                    for b in s1.windows(2) {
                        rects.push(Rect {
                            tag,
                            lo: [a[0], b[0]],
                            hi: [a[1], b[1]],
                        });
                    }
                }
            }
        }
        let n = self.g.dim();
        let f = |tag: usize, a: f64, b: f64| {
            let mut y = [0.0; MAX_DIM];
            match maps[tag] {
                SubMap::Plain { id } => {
                    let dens = self.map(id, [a, b], &mut y);
                    dens * self.l_integrand(x, rho, &y[..n])
                }
                SubMap::Strip {
                    id,
                    along,
                    curve,
                    lower,
                    lo,
                    hi,
                } => {
                    let du = a - curve[3];
                    let vs = (curve[0] + du * (curve[1] + du * curve[2])).clamp(lo, hi);
                    let (v, jac) = if lower {
                        (lo + (vs - lo) * b, vs - lo)
                    } else {
                        (vs + (hi - vs) * b, hi - vs)
                    };
                    if jac == 0.0 {
                        return 0.0;
                    }
                    let mut c = [0.0; 2];
                    c[along] = a;
                    c[1 - along] = v;
                    let dens = self.map(id, c, &mut y);
                    jac * dens * self.l_integrand(x, rho, &y[..n])
                }
            }
        };
        Ok(adaptive_cubature_cells(f, &rects, &self.adaptive)?.value)
    }

    /// Builds strip-adapted cells on the home patch. Returns false when the
    /// peak is not strip-shaped (no weight-2 coordinate, or the vertical
    /// gap has no first-order dependence on the chart coordinates).
    #[allow(clippy::too_many_arguments)]
    fn strip_cells(
        &self,
        p: Patch,
        c0: [f64; 2],
        rho: f64,
        x: &[f64],
        eps: f64,
        rects: &mut Vec<Rect>,
        maps: &mut Vec<SubMap>,
    ) -> bool {
        let Some(t) = self.vertical else { return false };
        let h = 1e-6;
        let mut grad = [0.0; 2];
        for (k, gk) in grad.iter_mut().enumerate() {
            let mut a = c0;
            let mut b = c0;
            a[k] += h;
            b[k] -= h;
            *gk = (self.vertical_gap(p.id, a, 1.0, x, t) - self.vertical_gap(p.id, b, 1.0, x, t))
                / (2.0 * h);
        }
        if grad[0].abs().max(grad[1].abs()) < 1e-6 {
            return false;
        }
        let across = if grad[1].abs() >= grad[0].abs() { 1 } else { 0 };
        let along = 1 - across;
        let (lo_b, hi_b) = (p.lo[across], p.hi[across]);
        let u0 = c0[along];
        let Some(v0) = self.strip_root(p.id, along, u0, c0[across], rho, x, t) else {
            return false;
        };
        let delta = (0.5 * eps.powf(0.75)).clamp(1e-6, 0.05);
        let (Some(vm), Some(vp)) = (
            self.strip_root(p.id, along, u0 - delta, v0, rho, x, t),
            self.strip_root(p.id, along, u0 + delta, v0, rho, x, t),
        ) else {
            return false;
        };
        if !(v0 > lo_b && v0 < hi_b) {
            return false;
        }
        let c1 = (vp - vm) / (2.0 * delta);
        let c2 = (vp - 2.0 * v0 + vm) / (2.0 * delta * delta);
        let curve = [v0, c1, c2, u0];
        let su = graded(u0, p.lo[along], p.hi[along], 0.25 * eps, 8.0);
        let thickness = 0.25 * eps * eps / grad[across].abs();
        let lower_width = v0 - lo_b;
        let upper_width = hi_b - v0;
        let lower = SubMap::Strip {
            id: p.id,
            along,
            curve,
            lower: true,
            lo: lo_b,
            hi: hi_b,
        };
        let upper = SubMap::Strip {
            id: p.id,
            along,
            curve,
            lower: false,
            lo: lo_b,
            hi: hi_b,
        };
        let tl = maps.len();
        maps.push(lower);
        maps.push(upper);
        // τ grading toward the strip: τ → 1 on the lower half, τ → 0 on the upper.
        let tau_lower: Vec<f64> = graded(1.0, 0.0, 1.0, thickness / lower_width, 8.0);
        let tau_upper: Vec<f64> = graded(0.0, 0.0, 1.0, thickness / upper_width, 8.0);
        for a in su.windows(2) {
            for b in tau_lower.windows(2) {
                rects.push(Rect {
                    tag: tl,
                    lo: [a[0], b[0]],
                    hi: [a[1], b[1]],
                });
            }
            for b in tau_upper.windows(2) {
                rects.push(Rect {
                    tag: tl + 1,
                    lo: [a[0], b[0]],
                    hi: [a[1], b[1]],
                });
            }
        }
        true
    }
}

/// Sorted breakpoints on `[lo, hi]` that include `center` and points
/// `center ± d·fᵏ`.
fn graded(center: f64, lo: f64, hi: f64, d: f64, factor: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    if center > lo && center < hi {
        pts.push(center);
    }
    if d > 0.0 && d.is_finite() {
        let mut s = d;
        while s < hi - lo {
            for c in [center - s, center + s] {
                if c > lo && c < hi {
                    pts.push(c);
                }
            }
            s *= factor;
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
    pts
}

/// One row of the μ table.
#[derive(Clone, Debug, Serialize)]
pub struct MuRow {
    pub gamma: f64,
    /// The reported constant: the half-line form with the base-point mean
    /// of `L` when `L` is isotropic, otherwise the minimum of the pointwise
    /// constants.
    pub mu: f64,
    /// Half-line form evaluated with the mean of `L` over base points.
    pub mu_mean_l: f64,
    /// Full-line (pointwise) constant at each base point.
    pub mu_pointwise: Vec<f64>,
    /// Half-line form with each base point's own `L`.
    pub mu_half_line: Vec<f64>,
    pub isotropic: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MuTable {
    pub group: String,
    pub norm: String,
    pub s: f64,
    pub p: f64,
    pub gamma_grid: Vec<f64>,
    pub mu: Vec<f64>,
    pub rows: Vec<MuRow>,
    pub base_points: Vec<Vec<f64>>,
    pub rho_grid: Vec<f64>,
    /// `l_samples[b][j] = L(rho_grid[j]; base_points[b])`.
    pub l_samples: Vec<Vec<f64>>,
    pub anisotropy: f64,
}

/// Largest admissible γ, `(Q − sp)/(p − 1)`.
pub fn gamma_max(g: &GroupDescriptor, params: &FracParams) -> f64 {
    (g.q_dim() - params.sp()) / (params.p() - 1.0)
}

/// `n` equispaced values strictly inside `(0, γ_max)`.
pub fn admissible_gamma_grid(g: &GroupDescriptor, params: &FracParams, n: usize) -> Vec<f64> {
    let top = gamma_max(g, params);
    (1..=n).map(|k| top * k as f64 / (n + 1) as f64).collect()
}

/// A spread of base points on the unit sphere of each supported gauge.
pub fn default_base_points(g: &GroupDescriptor, norm: QuasiNorm) -> Vec<Point> {
    let n = g.dim();
    let pts: Vec<Vec<f64>> = match (n, norm) {
        (1, _) => vec![vec![1.0], vec![-1.0]],
        (_, QuasiNorm::Koranyi) => [0.0, PI / 6.0, PI / 3.0, 0.5 * PI]
            .iter()
            .map(|a: &f64| vec![a.cos().max(0.0).sqrt(), 0.0, 0.25 * a.sin()])
            .collect(),
        (_, QuasiNorm::WeightedMax) => {
            let w = g.weights();
            let mut v = Vec::new();
            for axis in 0..n {
                for off in [0.0f64, 0.5] {
                    let mut x = vec![0.0; n];
                    x[axis] = 1.0;
                    if off > 0.0 {
                        let other = (axis + 1) % n;
                        x[other] = off.powf(w[other]);
                    }
                    v.push(x);
                }
            }
            v
        }
        (_, QuasiNorm::Euclidean) => {
            let mut a = vec![0.0; n];
            a[0] = 1.0;
            let mut b = vec![0.0; n];
            b[n - 1] = 1.0;
            let mut c = vec![1.0 / (n as f64).sqrt(); n];
            c[0] = -c[0];
            vec![a, b, c]
        }
    };
    pts.into_iter().map(Point).collect()
}

/// Precomputed samples of `L` on the ρ nodes shared by every γ.
pub struct MuSolver {
    g: GroupDescriptor,
    norm: QuasiNorm,
    params: FracParams,
    base_points: Vec<Point>,
    eta_min: f64,
    eta: Vec<(f64, f64)>,
    tail: Vec<(f64, f64)>,
    /// `[b][k]`: `L(1 + η_k)`.
    l_plus: Vec<Vec<f64>>,
    /// `[b][k]`: `L(1/(1 + η_k))`.
    l_minus: Vec<Vec<f64>>,
    /// `[b][k]`: `M(e^{−t_k})`.
    m_tail: Vec<Vec<f64>>,
    /// `[b][k]`: `L(e^{−t_k})`.
    l_small: Vec<Vec<f64>>,
    integral: SphereIntegral,
}

impl MuSolver {
    pub fn new(
        g: &GroupDescriptor,
        norm: QuasiNorm,
        params: &FracParams,
        base_points: &[Point],
        opts: &MuOptions,
    ) -> Result<Self> {
        params.require_subcritical(g.q_dim())?;
        if base_points.is_empty() {
            return invalid("at least one base point is required");
        }
        if opts.octaves == 0 || opts.octaves > 40 || opts.gl_nodes < 2 {
            return invalid("μ options need 1..=40 octaves and at least 2 nodes per shell");
        }
        let integral = SphereIntegral::new(g, norm, params, opts)?;
        for x in base_points {
            integral.check_base_point(x)?;
        }
        let eta_min = 0.5f64.powi(opts.octaves as i32);
        let mut eta = Vec::new();
        for k in 0..opts.octaves {
            let a = eta_min * 2f64.powi(k as i32);
            let (x, w) = gauss_legendre_on(opts.gl_nodes, a, 2.0 * a);
            eta.extend(x.into_iter().zip(w));
        }
        let sp = params.sp();
        let t0 = 2f64.ln();
        let t_max = t0 + 46.0 / sp;
        let mut tail = Vec::new();
        let mut a = t0;
        let mut width = 0.125;
        while a < t_max {
            let b = (a + width).min(t_max);
            let (x, w) = gauss_legendre_on(opts.gl_nodes, a, b);
            tail.extend(x.into_iter().zip(w));
            a = b;
            width = (width * 1.5).min(4.0 / sp);
        }
        let mut l_plus = Vec::new();
        let mut l_minus = Vec::new();
        let mut m_tail = Vec::new();
        let mut l_small = Vec::new();
        for x in base_points {
            l_plus.push(
                eta.iter()
                    .map(|(e, _)| integral.l(1.0 + e, x))
                    .collect::<Result<Vec<_>>>()?,
            );
            l_minus.push(
                eta.iter()
                    .map(|(e, _)| integral.l(1.0 / (1.0 + e), x))
                    .collect::<Result<Vec<_>>>()?,
            );
            m_tail.push(
                tail.iter()
                    .map(|(t, _)| integral.m((-t).exp(), x))
                    .collect::<Result<Vec<_>>>()?,
            );
            l_small.push(
                tail.iter()
                    .map(|(t, _)| integral.l((-t).exp(), x))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self {
            g: g.clone(),
            norm,
            params: *params,
            base_points: base_points.to_vec(),
            eta_min,
            eta,
            tail,
            l_plus,
            l_minus,
            m_tail,
            l_small,
            integral,
        })
    }

    pub fn integral(&self) -> &SphereIntegral {
        &self.integral
    }

    pub fn base_points(&self) -> &[Point] {
        &self.base_points
    }

    /// ρ values at which `L` was sampled, with `L` per base point.
    pub fn l_samples(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let q = self.g.q_dim() + self.params.sp();
        let mut rho = Vec::new();
        rho.extend(self.tail.iter().rev().map(|(t, _)| (-t).exp()));
        rho.extend(self.eta.iter().rev().map(|(e, _)| 1.0 / (1.0 + e)));
        rho.extend(self.eta.iter().map(|(e, _)| 1.0 + e));
        rho.extend(self.tail.iter().map(|(t, _)| t.exp()));
        let rows = (0..self.base_points.len())
            .map(|b| {
                let mut v = Vec::with_capacity(rho.len());
                v.extend(self.l_small[b].iter().rev());
                v.extend(self.l_minus[b].iter().rev());
                v.extend(self.l_plus[b].iter());
                v.extend(
                    self.tail
                        .iter()
                        .zip(&self.m_tail[b])
                        .map(|((t, _), m)| (-q * t).exp() * m),
                );
                v
            })
            .collect();
        (rho, rows)
    }

    /// Maximum over the sampled ρ of `(max − min)/mean` of `L(ρ; ·)`.
    pub fn anisotropy(&self) -> f64 {
        let (_, rows) = self.l_samples();
        let nb = rows.len();
        (0..rows[0].len())
            .map(|j| {
                let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
                for row in &rows {
                    lo = lo.min(row[j]);
                    hi = hi.max(row[j]);
                    sum += row[j];
                }
                (hi - lo) / (sum / nb as f64)
            })
            .fold(0.0, f64::max)
    }

    fn check_gamma(&self, gamma: f64) -> Result<()> {
        let top = gamma_max(&self.g, &self.params);
        if !(gamma > 0.0 && gamma < top) {
            return invalid(format!(
                "γ = {gamma} outside the admissible interval (0, {top})"
            ));
        }
        Ok(())
    }

    /// Sums the shell quadrature of `f(k, ρ_k)` and adds the power-law
    /// model for the innermost shell.
    fn near<F: Fn(usize, f64) -> f64>(&self, f: F) -> f64 {
        let beta = self.params.p() - self.params.sp();
        let mut total = 0.0;
        for (k, (e, w)) in self.eta.iter().enumerate() {
            total += w * f(k, 1.0 + e);
        }
        let (e0, _) = self.eta[0];
        let amp = f(0, 1.0 + e0) / e0.powf(beta - 1.0);
        total + amp * self.eta_min.powf(beta) / beta
    }

    /// Half-line form with the given `L(1 + η_k)` and `M(e^{−t_k})`.
    fn half_line(&self, gamma: f64, lp: &[f64], m: &[f64]) -> f64 {
        let (p, sp, q) = (self.params.p(), self.params.sp(), self.g.q_dim());
        let a = q - 1.0 - gamma * (p - 1.0);
        let near = self.near(|k, r| {
            (r.powf(gamma) - 1.0).powf(p - 1.0) * (r.powf(a) - r.powf(sp - 1.0)) * lp[k]
        });
        let decay = q - sp - gamma * (p - 1.0);
        let tail: f64 = self
            .tail
            .iter()
            .zip(m)
            .map(|((t, w), m)| {
                w * (-sp * t).exp()
                    * (1.0 - (-gamma * t).exp()).powf(p - 1.0)
                    * (1.0 - (-decay * t).exp())
                    * m
            })
            .sum();
        near + tail
    }

    /// Full-line form at base point `b`, folded onto `[1, ∞)`.
    fn full_line(&self, gamma: f64, b: usize) -> f64 {
        let (p, sp, q) = (self.params.p(), self.params.sp(), self.g.q_dim());
        let a = q - 1.0 - gamma * (p - 1.0);
        let (lp, lm) = (&self.l_plus[b], &self.l_minus[b]);
        let near = self.near(|k, r| {
            (r.powf(gamma) - 1.0).powf(p - 1.0) * (r.powf(a) * lp[k] - r.powf(-q - 1.0) * lm[k])
        });
        let tail: f64 = self
            .tail
            .iter()
            .zip(self.m_tail[b].iter().zip(&self.l_small[b]))
            .map(|((t, w), (m, ls))| {
                w * (1.0 - (-gamma * t).exp()).powf(p - 1.0)
                    * ((-sp * t).exp() * m - ((gamma * (p - 1.0) - q) * t).exp() * ls)
            })
            .sum();
        near + tail
    }

    pub fn row(&self, gamma: f64) -> Result<MuRow> {
        self.check_gamma(gamma)?;
        let nb = self.base_points.len();
        let mean = |rows: &[Vec<f64>]| -> Vec<f64> {
            (0..rows[0].len())
                .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / nb as f64)
                .collect()
        };
        let mu_mean_l = self.half_line(gamma, &mean(&self.l_plus), &mean(&self.m_tail));
        let mu_pointwise: Vec<f64> = (0..nb).map(|b| self.full_line(gamma, b)).collect();
        let mu_half_line: Vec<f64> = (0..nb)
            .map(|b| self.half_line(gamma, &self.l_plus[b], &self.m_tail[b]))
            .collect();
        let isotropic = self.anisotropy() < ISOTROPY_THRESHOLD;
        let mu = if isotropic {
            mu_mean_l
        } else {
            mu_pointwise.iter().copied().fold(f64::INFINITY, f64::min)
        };
        if !mu.is_finite() || mu_pointwise.iter().any(|v| !v.is_finite()) {
            return Err(Error::Quadrature(format!("non-finite μ at γ = {gamma}")));
        }
        Ok(MuRow {
            gamma,
            mu,
            mu_mean_l,
            mu_pointwise,
            mu_half_line,
            isotropic,
        })
    }

    pub fn table(&self, gammas: &[f64]) -> Result<MuTable> {
        let rows = gammas
            .iter()
            .map(|&g| self.row(g))
            .collect::<Result<Vec<_>>>()?;
        let (rho_grid, l_samples) = self.l_samples();
        Ok(MuTable {
            group: self.g.name().to_string(),
            norm: self.norm.id().to_string(),
            s: self.params.s(),
            p: self.params.p(),
            gamma_grid: gammas.to_vec(),
            mu: rows.iter().map(|r| r.mu).collect(),
            rows,
            base_points: self.base_points.iter().map(|x| x.0.clone()).collect(),
            rho_grid,
            l_samples,
            anisotropy: self.anisotropy(),
        })
    }

    /// Reflection defects `|L(1/ζ) − ζ^{Q+sp} L(ζ)| / L(1/ζ)`: the worst
    /// pointwise value over base points, and the value for `L` averaged
    /// over the sphere with the fixed rule (exact for any rule, since the
    /// identity then only swaps the roles of base and integration point).
    pub fn reflection_defects(&self, zetas: &[f64]) -> Result<(f64, f64)> {
        let e = self.g.q_dim() + self.params.sp();
        let mut pointwise: f64 = 0.0;
        let mut averaged: f64 = 0.0;
        for &z in zetas {
            if !(z > 0.0 && z < 1.0) {
                return invalid(format!("ζ must lie in (0, 1), got {z}"));
            }
            for x in &self.base_points {
                let big = self.integral.l(1.0 / z, x)?;
                let small = self.integral.l(z, x)?;
                pointwise = pointwise.max((big - z.powf(e) * small).abs() / big);
            }
            let (big, small) = self.averaged_l(z);
            averaged = averaged.max((big - z.powf(e) * small).abs() / big);
        }
        Ok((pointwise, averaged))
    }

    /// `(L̄(1/ζ), L̄(ζ))` with `L̄(ρ) = ∫∫ q((δ_ρ y)⁻¹∘x)^{−(Q+sp)} dσ(x) dσ(y)`
    /// on the fixed rule.
    fn averaged_l(&self, z: f64) -> (f64, f64) {
        let sph = self.integral.sphere();
        let mut big = 0.0;
        let mut small = 0.0;
        for (x, wx) in sph.iter() {
            for (y, wy) in sph.iter() {
                big += wx * wy * self.integral.l_integrand(x, 1.0 / z, y);
                small += wx * wy * self.integral.l_integrand(x, z, y);
            }
        }
        (big, small)
    }
}

/// One μ row for a single γ.
pub fn hardy_mu(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    gamma: f64,
    base_points: &[Point],
    opts: &MuOptions,
) -> Result<MuRow> {
    let top = gamma_max(g, params);
    if !(gamma > 0.0 && gamma < top) {
        return invalid(format!(
            "γ = {gamma} outside the admissible interval (0, {top})"
        ));
    }
    MuSolver::new(g, norm, params, base_points, opts)?.row(gamma)
}

/// Direct principal-value evaluation of `μ(x′) = PV∫ φ_p(1 − q(y)^{−γ}) k(x′, y) dy`
/// in polar coordinates about `x′`, pairing each direction with its
/// opposite. Independent of `L`; used as a cross-check.
pub fn mu_direct(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    gamma: f64,
    x: &Point,
    sphere: &SphereQuadrature,
    opts: &AdaptiveOpts,
) -> Result<f64> {
    norm.check_compatible(g)?;
    let n = g.dim();
    let (p, sp) = (params.p(), params.sp());
    let profile = |r: f64, w: &[f64]| {
        let mut d = [0.0; MAX_DIM];
        let mut y = [0.0; MAX_DIM];
        g.dilate_into(r, w, &mut d[..n]);
        g.compose_into(&x.0, &d[..n], &mut y[..n]);
        phi(1.0 - norm.eval(g, &y[..n]).powf(-gamma), p)
    };
    let mut total = 0.0;
    for (w, weight) in sphere.iter() {
        let minus: Vec<f64> = w.iter().map(|v| -v).collect();
        let pair = |r: f64| 0.5 * (profile(r, w) + profile(r, &minus));
        let inner = adaptive_gk15(
            |r| pair(r) * r.powf(-1.0 - sp),
            &[0.0, 0.25, 0.5, 1.0],
            opts,
        )?;
        // r = 1/v on (1, ∞): r^{−1−sp} dr = v^{sp−1} dv.
        let outer = adaptive_gk15(|v| pair(1.0 / v) * v.powf(sp - 1.0), &[0.0, 0.5, 1.0], opts)?;
        total += weight * (inner.value + outer.value);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from an independent mpmath evaluation of the
    // half-line integral with the closed-form L on ℝ¹.
    const R1_S025_P2_G02: f64 = 0.676645295541722;
    const R1_S025_P2_G025: f64 = 0.701854299883226;
    const R1_S05_P15_G02: f64 = 0.3310817689357;

    fn line() -> GroupDescriptor {
        GroupDescriptor::abelian(1).unwrap()
    }

    fn fine() -> MuOptions {
        MuOptions {
            octaves: 24,
            ..MuOptions::default()
        }
    }

    #[test]
    fn line_matches_reference_values() {
        let g = line();
        for (s, p, gamma, want) in [
            (0.25, 2.0, 0.2, R1_S025_P2_G02),
            (0.25, 2.0, 0.25, R1_S025_P2_G025),
            (0.5, 1.5, 0.2, R1_S05_P15_G02),
        ] {
            let params = FracParams::new(s, p).unwrap();
            let row = hardy_mu(
                &g,
                QuasiNorm::Euclidean,
                &params,
                gamma,
                &default_base_points(&g, QuasiNorm::Euclidean),
                &fine(),
            )
            .unwrap();
            assert!(row.isotropic);
            assert!(
                (row.mu - want).abs() < 1e-7 * want,
                "s={s} p={p} γ={gamma}: {} vs {want}",
                row.mu
            );
            for v in &row.mu_pointwise {
                assert!((v - want).abs() < 1e-6 * want, "full-line {v} vs {want}");
            }
        }
    }

    #[test]
    fn gamma_outside_interval_is_rejected() {
        let g = line();
        let params = FracParams::new(0.25, 2.0).unwrap();
        let pts = default_base_points(&g, QuasiNorm::Euclidean);
        for gamma in [0.0, -0.1, 0.75, 1.0] {
            assert!(matches!(
                hardy_mu(
                    &g,
                    QuasiNorm::Euclidean,
                    &params,
                    gamma,
                    &pts,
                    &MuOptions::default()
                ),
                Err(Error::InvalidInput(_))
            ));
        }
    }

    #[test]
    fn line_direct_pv_agrees() {
        let g = line();
        let params = FracParams::new(0.25, 2.0).unwrap();
        let sphere = build_sphere_quadrature(&g, QuasiNorm::Euclidean, 8).unwrap();
        let opts = AdaptiveOpts {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_subdivisions: 5000,
        };
        let v = mu_direct(
            &g,
            QuasiNorm::Euclidean,
            &params,
            0.2,
            &Point::new(vec![1.0]),
            &sphere,
            &opts,
        )
        .unwrap();
        assert!((v - R1_S025_P2_G02).abs() < 1e-6, "{v}");
    }

    #[test]
    fn plane_is_isotropic_and_reflects_pointwise() {
        let g = GroupDescriptor::abelian(2).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let opts = MuOptions {
            rel_tol: 1e-12,
            octaves: 8,
            ..MuOptions::default()
        };
        let solver = MuSolver::new(
            &g,
            QuasiNorm::Euclidean,
            &params,
            &default_base_points(&g, QuasiNorm::Euclidean),
            &opts,
        )
        .unwrap();
        assert!(solver.anisotropy() < 1e-9, "{}", solver.anisotropy());
        let (pw, av) = solver.reflection_defects(&[0.3, 0.7, 0.9]).unwrap();
        assert!(pw < 1e-9 && av < 1e-12, "{pw} {av}");
        let row = solver.row(0.3).unwrap();
        assert!(row.mu > 0.0);
        for v in &row.mu_pointwise {
            assert!((v - row.mu).abs() < 1e-6 * row.mu, "{v} vs {}", row.mu);
        }
    }

    #[test]
    fn plane_matches_direct_pv() {
        let g = GroupDescriptor::abelian(2).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let x = Point::new(vec![1.0, 0.0]);
        let row = hardy_mu(
            &g,
            QuasiNorm::Euclidean,
            &params,
            0.3,
            std::slice::from_ref(&x),
            &MuOptions::default(),
        )
        .unwrap();
        // The ray through the origin makes the angular integrand Hölder-0.7,
        // so the direct route converges like h^1.7; 1024 nodes give ~5e-5.
        let sphere = build_sphere_quadrature(&g, QuasiNorm::Euclidean, 1024).unwrap();
        let opts = AdaptiveOpts {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdivisions: 5000,
        };
        let direct = mu_direct(&g, QuasiNorm::Euclidean, &params, 0.3, &x, &sphere, &opts).unwrap();
        assert!(
            (direct - row.mu).abs() < 1e-4 * row.mu,
            "{direct} vs {}",
            row.mu
        );
    }

    #[test]
    fn koranyi_near_zone_matches_fixed_rule_at_moderate_rho() {
        let g = GroupDescriptor::heisenberg();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let si =
            SphereIntegral::new(&g, QuasiNorm::Koranyi, &params, &MuOptions::default()).unwrap();
        let big = SphereIntegral::new(
            &g,
            QuasiNorm::Koranyi,
            &params,
            &MuOptions {
                sphere_resolution: 512,
                ..MuOptions::default()
            },
        )
        .unwrap();
        for x in default_base_points(&g, QuasiNorm::Koranyi) {
            let adaptive = si.l(1.9, &x).unwrap();
            let fixed: f64 = big
                .sphere()
                .iter()
                .map(|(y, w)| w * big.l_integrand(&x.0, 1.9, y))
                .sum();
            assert!(
                (adaptive - fixed).abs() < 1e-8 * fixed,
                "{adaptive} vs {fixed}"
            );
        }
    }

    #[test]
    fn graded_breakpoints_are_sorted_and_bounded() {
        let b = graded(0.3, -1.0, 1.0, 1e-3, 4.0);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(b[0], -1.0);
        assert_eq!(*b.last().unwrap(), 1.0);
        assert!(b.contains(&0.3));
    }
}
