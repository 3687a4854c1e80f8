//! First Dirichlet eigenvalue of the fractional p-sub-Laplacian on
//! mask-defined domains, and the Lyapunov scaling product.
//!
//! The exterior condition `u = 0` on `𝔾∖Ω` is not a boundary condition on
//! `∂Ω`: every interior point interacts with the whole complement. That
//! interaction is folded into the diagonal-like column `b`, which sums the
//! kernel over the grid points of the box outside `Ω` and adds the analytic
//! tail beyond the box.
//!
//! Conventions (ordered pairs, no ½):
//!
//! ```text
//! N(u) = Σ_{i≠j} W_ij |u_i − u_j|^p + Σ_i b_i |u_i|^p       W_ij = hᴺhᴺ k(x_i, x_j)
//! D(u) = hᴺ Σ_i ω_i |u_i|^p                                 b_i  = 2hᴺ (Σ_{j∉Ω} hᴺ k(x_i, x_j) + E(x_i))
//! R(u) = N(u) / D(u)
//! ```
//!
//! `N(u)` equals the grid Gagliardo seminorm of `u` extended by zero, and
//! `∂N/∂u_k = p · W(u, e_k)` with `W` the full-space weak form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exec::Exec;
use crate::grid::{GridSpec, SampledFunction};
use crate::group::{GroupDescriptor, GroupLaw, QuasiNorm};
use crate::operator::{abs_pow, phi, FracParams, PairSum, QuadratureConfig};

/// A bounded domain `Ω` given as a grid mask.
#[derive(Clone, Debug)]
pub struct Domain {
    pub group: GroupDescriptor,
    pub norm: QuasiNorm,
    pub grid: GridSpec,
    pub mask: Vec<bool>,
    /// Nominal radius: `R` for a quasi-ball, `r_inner` otherwise.
    pub radius: f64,
    /// Inner quasi-radius `max{q(x) : x ∈ Ω}` over the grid nodes of `Ω`.
    pub r_inner: f64,
    /// `|Ω|` as node count times `hᴺ`.
    pub volume: f64,
    /// Smallest number of cells per half-extent of `Ω`, over all axes.
    pub resolution: f64,
}

impl Domain {
    /// The quasi-ball `B_q(0, R)` on a box padded by one cell, with
    /// `cells_per_radius` cells across each half-extent of the ball.
    ///
    /// The grid for radius `R` is exactly `δ_R` of the grid for radius 1, so
    /// balls of different radii are discretized at matched resolution.
    pub fn ball(
        g: &GroupDescriptor,
        norm: QuasiNorm,
        radius: f64,
        cells_per_radius: usize,
    ) -> Result<Self> {
        norm.check_compatible(g)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid(format!("ball radius must be positive, got {radius}"));
        }
        if cells_per_radius == 0 {
            return invalid("cells_per_radius must be positive");
        }
        let m = cells_per_radius as f64;
        let half: Vec<f64> = norm
            .unit_ball_extent(g)
            .iter()
            .zip(g.weights())
            .map(|(e, w)| radius.powf(*w) * e * (m + 1.0) / m)
            .collect();
        let counts = vec![2 * (cells_per_radius + 1); g.dim()];
        let grid = GridSpec::centered(&half, &counts)?;
        let mut x = vec![0.0; g.dim()];
        let mask: Vec<bool> = (0..grid.len())
            .map(|i| {
                grid.node_into(i, &mut x);
                norm.eval(g, &x) < radius
            })
            .collect();
        Self::from_mask(g, norm, grid, mask, Some(radius))
    }

    /// A domain from an explicit mask. `radius` defaults to `r_inner`.
    pub fn from_mask(
        g: &GroupDescriptor,
        norm: QuasiNorm,
        grid: GridSpec,
        mask: Vec<bool>,
        radius: Option<f64>,
    ) -> Result<Self> {
        norm.check_compatible(g)?;
        if grid.dim() != g.dim() {
            return invalid("group and grid dimensions differ");
        }
        if mask.len() != grid.len() {
            return invalid("domain mask does not match the grid");
        }
        let d = g.dim();
        let mut x = vec![0.0; d];
        let mut r_inner: f64 = 0.0;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut count = 0usize;
        for i in (0..grid.len()).filter(|&i| mask[i]) {
            grid.node_into(i, &mut x);
            r_inner = r_inner.max(norm.eval(g, &x));
            for k in 0..d {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
            count += 1;
        }
        if count == 0 {
            return invalid("the domain mask is empty");
        }
        if !(r_inner > 0.0) {
            return invalid("the domain must contain a point other than the identity");
        }
        let resolution = (0..d)
            .map(|k| 0.5 * (hi[k] - lo[k] + grid.spacing()[k]) / grid.spacing()[k])
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            group: g.clone(),
            norm,
            volume: count as f64 * grid.cell_volume(),
            grid,
            mask,
            radius: radius.unwrap_or(r_inner),
            r_inner,
            resolution,
        })
    }

    /// Grid indices of the interior points, ascending.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `δ_λ Ω` on the dilated grid with the same mask.
    pub fn dilated(&self, lambda: f64) -> Result<Self> {
        let grid = self.grid.dilated(&self.group, lambda)?;
        let mut d = Self::from_mask(
            &self.group,
            self.norm,
            grid,
            self.mask.clone(),
            Some(lambda * self.radius),
        )?;
        d.resolution = self.resolution;
        Ok(d)
    }

    /// Interior values scattered back onto the full grid (zero off `Ω`).
    pub fn extend(&self, values: &[f64]) -> Result<SampledFunction> {
        let idx = self.interior();
        if values.len() != idx.len() {
            return invalid(format!(
                "expected {} interior values, got {}",
                idx.len(),
                values.len()
            ));
        }
        let mut full = vec![0.0; self.grid.len()];
        for (k, &i) in idx.iter().enumerate() {
            full[i] = values[k];
        }
        SampledFunction::new(self.group.name(), self.grid.clone(), full)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AssemblyConfig {
    /// Only the sphere resolution and the execution policy are used: the
    /// assembly sums every pair `i ≠ j` (no exclusion zone, no local
    /// correction).
    pub quad: QuadratureConfig,
    /// Minimum cells per half-extent of `Ω` along every axis.
    pub min_resolution: f64,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            quad: QuadratureConfig::default(),
            min_resolution: 16.0,
        }
    }
}

impl AssemblyConfig {
    /// 16 cells per half-extent on abelian groups. On three-dimensional
    /// groups that would mean about 2·10⁴ unknowns and a 3 GB dense form,
    /// so the gate there is 6.
    pub fn for_group(g: &GroupDescriptor) -> Self {
        let min_resolution = if matches!(g.law(), GroupLaw::Abelian) {
            16.0
        } else {
            6.0
        };
        Self {
            min_resolution,
            ..Self::default()
        }
    }
}

/// Dense discretization of the Dirichlet energy on a [`Domain`].
/// Relative floor on the differences entering the preconditioner.
const PRECOND_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct NonlocalForm {
    /// Grid indices of the unknowns.
    pub indices: Vec<usize>,
    pub cell_volume: f64,
    pub p: f64,
    /// Row-major `n × n`, zero diagonal.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    /// Weight `ω` in the denominator; all ones unless replaced.
    pub weight: Vec<f64>,
    pub exec: Exec,
}

pub fn assemble(
    domain: &Domain,
    params: &FracParams,
    cfg: &AssemblyConfig,
) -> Result<NonlocalForm> {
    cfg.quad.validate()?;
    // The cell count is recovered from floating extents; allow rounding.
    if domain.resolution < cfg.min_resolution * (1.0 - 1e-9) {
        return invalid(format!(
            "under-resolved domain: {:.1} cells per half-extent, at least {} required",
            domain.resolution, cfg.min_resolution
        ));
    }
    let g = &domain.group;
    let grid = &domain.grid;
    let hn = grid.cell_volume();
    let idx = domain.interior();
    let n = idx.len();
    let ps = PairSum::new(g, domain.norm, params, grid, &cfg.quad);
    let exec = cfg.quad.exec;

    // Upper triangle, then mirrored, so that W is symmetric bit for bit.
    let upper: Vec<Vec<f64>> = exec.map(n, |r| {
        let xi = ps.x(idx[r]);
        idx[r + 1..]
            .iter()
            .map(|&j| hn * hn * ps.kernel.eval(xi, ps.x(j)))
            .collect()
    });
    let mut w = vec![0.0; n * n];
    for (r, row) in upper.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let j = r + 1 + c;
            w[r * n + j] = v;
            w[j * n + r] = v;
        }
    }
    drop(upper);

    let outside: Vec<usize> = (0..grid.len()).filter(|&j| !domain.mask[j]).collect();
    let sphere = ps.sphere()?;
    let b = exec.map(n, |r| {
        let i = idx[r];
        let xi = ps.x(i);
        let grid_part: f64 = outside
            .iter()
            .map(|&j| ps.kernel.eval(xi, ps.x(j)))
            .sum::<f64>()
            * hn;
        2.0 * hn * (grid_part + ps.exterior(&sphere, i))
    });
    if let Some(r) = b.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Invariant(format!(
            "boundary interaction b[{r}] = {} is not positive",
            b[r]
        )));
    }
    Ok(NonlocalForm {
        indices: idx,
        cell_volume: hn,
        p: params.p(),
        w,
        b,
        weight: vec![1.0; n],
        exec,
    })
}

impl NonlocalForm {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    #[inline]
    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.len() + j]
    }

    /// Replaces the weight `ω` (nonnegative, not identically zero).
    pub fn with_weight(mut self, weight: Vec<f64>) -> Result<Self> {
        if weight.len() != self.len() {
            return invalid("weight length does not match the number of unknowns");
        }
        if weight.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || weight.iter().all(|v| *v == 0.0)
        {
            return invalid("weight must be finite, nonnegative and not identically zero");
        }
        self.weight = weight;
        Ok(self)
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return invalid(format!(
                "expected {} interior values, got {}",
                self.len(),
                u.len()
            ));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return invalid("values must be finite");
        }
        Ok(())
    }

    /// `N(u)`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let n = self.len();
        let p = self.p;
        self.exec.sum(n, |i| {
            let row = &self.w[i * n..(i + 1) * n];
            let ui = u[i];
            let pairs: f64 = row
                .iter()
                .zip(u)
                .map(|(w, uj)| w * abs_pow(ui - uj, p))
                .sum();
            pairs + self.b[i] * abs_pow(ui, p)
        })
    }

    /// `D(u)`.
    pub fn mass(&self, u: &[f64]) -> f64 {
        self.cell_volume
            * u.iter()
                .zip(&self.weight)
                .map(|(v, w)| w * abs_pow(*v, self.p))
                .sum::<f64>()
    }

    /// `W(u, e_k)` for every `k`; equals `∂N/∂u_k / p`.
    pub fn weak_rows(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        let p = self.p;
        self.exec.map(n, |k| {
            let row = &self.w[k * n..(k + 1) * n];
            let uk = u[k];
            let pairs: f64 = row.iter().zip(u).map(|(w, uj)| w * phi(uk - uj, p)).sum();
            2.0 * pairs + self.b[k] * phi(uk, p)
        })
    }

    /// The p = 2 operator matrix `A` with `N(u) = uᵀAu`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0 * self.w[i * n..(i + 1) * n].iter().sum::<f64>() + self.b[i]
            } else {
                -2.0 * self.w(i, j)
            }
        })
    }

    /// Diagonal of the Hessian of `N/(p(p−1))` at `u`, with differences
    /// floored so that it stays finite for p < 2. At p = 2 it is `A_kk`.
    fn hessian_diagonal(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        let p = self.p;
        let floor = PRECOND_FLOOR * u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let curv = |t: f64| {
            let a = t.abs().max(floor);
            if p == 2.0 {
                1.0
            } else if p == 3.0 {
                a
            } else if p == 1.5 {
                1.0 / a.sqrt()
            } else {
                a.powf(p - 2.0)
            }
        };
        self.exec.map(n, |k| {
            let row = &self.w[k * n..(k + 1) * n];
            let pairs: f64 = row
                .iter()
                .zip(u)
                .map(|(w, uj)| if *w == 0.0 { 0.0 } else { w * curv(u[k] - uj) })
                .sum();
            2.0 * pairs + self.b[k] * curv(u[k])
        })
    }

    /// `‖u‖_{L^p(Ω)} = 1`.
    fn normalize(&self, u: &mut [f64]) -> f64 {
        let norm = (self.cell_volume * u.iter().map(|v| abs_pow(*v, self.p)).sum::<f64>())
            .powf(1.0 / self.p);
        u.iter_mut().for_each(|v| *v /= norm);
        norm
    }
}

fn check_p(form: &NonlocalForm, params: &FracParams) -> Result<()> {
    if form.p != params.p() {
        return invalid(format!(
            "form was assembled for p = {}, got p = {}",
            form.p,
            params.p()
        ));
    }
    Ok(())
}

/// `R(u) = N(u)/D(u)`; invariant under `u ↦ cu`.
pub fn rayleigh_quotient(form: &NonlocalForm, params: &FracParams, u: &[f64]) -> Result<f64> {
    check_p(form, params)?;
    form.check(u)?;
    let d = form.mass(u);
    if d == 0.0 {
        return invalid("the Rayleigh quotient is undefined for u = 0 (on the support of ω)");
    }
    Ok(form.energy(u) / d)
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenResult {
    pub lambda1: f64,
    /// Interior values, `‖u‖_{L^p(Ω)} = 1`, positive.
    pub eigvec: Vec<f64>,
    pub residual: f64,
    pub iters: usize,
    /// Rayleigh quotient after each accepted step.
    pub history: Vec<f64>,
    /// Quotients reached from every starting seed.
    pub seed_lambdas: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    /// Stagnation threshold on the relative quotient decrease over `window`
    /// iterations (general p) or on consecutive quotients (p = 2).
    pub tol: f64,
    pub window: usize,
    /// Bound on the relative weak residual at convergence.
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Number of starting points: a constant one plus seeded random
    /// positive ones. Their quotients must agree to `seed_agreement`.
    pub seeds: usize,
    pub seed: u64,
    pub seed_agreement: f64,
}

impl SolverConfig {
    /// Defaults with the residual bound matched to `p`: for p < 2 the map
    /// `t ↦ |t|^{p−2}t` is only Hölder-(p−1) at 0, so a quotient converged
    /// to rounding still leaves a residual of order `ε^{(p−1)/2}`. Ties
    /// between symmetric nodes are resolved only to that level, so the
    /// bound carries a safety factor of ten.
    pub fn for_exponent(p: f64) -> Self {
        let mut cfg = Self::default();
        if p < 2.0 {
            let floor = 10.0 * f64::EPSILON.powf(0.5 * (p - 1.0));
            cfg.residual_tol = cfg.residual_tol.max(floor);
        }
        cfg
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            window: 25,
            residual_tol: 1e-5,
            max_iter: 20_000,
            seeds: 3,
            seed: 0,
            seed_agreement: 1e-6,
        }
    }
}

/// Relative weak residual
/// `max_k |W(u, e_k) − λ hᴺ ω_k φ(u_k)| / (λ hᴺ max_k ω_k |φ(u_k)|)`.
pub fn weak_residual(
    form: &NonlocalForm,
    params: &FracParams,
    result: &EigenResult,
) -> Result<f64> {
    check_p(form, params)?;
    form.check(&result.eigvec)?;
    Ok(residual_of(
        form,
        &result.eigvec,
        result.lambda1,
        &form.weak_rows(&result.eigvec),
    ))
}

fn residual_of(form: &NonlocalForm, u: &[f64], lambda: f64, rows: &[f64]) -> f64 {
    let hn = form.cell_volume;
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for k in 0..u.len() {
        let m = lambda * hn * form.weight[k] * phi(u[k], form.p);
        num = num.max((rows[k] - m).abs());
        den = den.max(m.abs());
    }
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn starts(n: usize, cfg: &SolverConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.seeds.max(1))
        .map(|k| {
            if k == 0 {
                vec![1.0; n]
            } else {
                (0..n).map(|_| rng.gen_range(0.5..1.5)).collect()
            }
        })
        .collect()
}

/// First eigenpair: inverse iteration for p = 2, preconditioned nonlinear
/// conjugate gradients with Armijo backtracking otherwise. Every seed must
/// reach the same quotient; the best run is returned.
pub fn minimize_rayleigh(
    form: &NonlocalForm,
    params: &FracParams,
    cfg: &SolverConfig,
) -> Result<EigenResult> {
    check_p(form, params)?;
    if form.is_empty() {
        return invalid("the form has no unknowns");
    }
    if !(cfg.tol > 0.0 && cfg.residual_tol > 0.0 && cfg.max_iter > 0 && cfg.window > 0) {
        return invalid("solver tolerances, window and iteration budget must be positive");
    }
    let factor = if form.p == 2.0 {
        let chol = form.matrix().cholesky().ok_or_else(|| {
            Error::Invariant("the p = 2 operator matrix is not positive definite".into())
        })?;
        Some(chol)
    } else {
        None
    };
    let mut runs = Vec::new();
    for u0 in starts(form.len(), cfg) {
        let run = match &factor {
            Some(chol) => inverse_iteration(form, chol, u0, cfg)?,
            None => descent(form, u0, cfg)?,
        };
        runs.push(run);
    }
    let lambdas: Vec<f64> = runs.iter().map(|r| r.lambda1).collect();
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo) > cfg.seed_agreement * lo {
        return Err(Error::Invariant(format!(
            "starting seeds disagree (quotients {lambdas:?}): near-degenerate first eigenvalue or stalled descent"
        )));
    }
    let best = runs
        .into_iter()
        .min_by(|a, b| a.lambda1.total_cmp(&b.lambda1))
        .expect("at least one seed");
    let mut best = best;
    best.seed_lambdas = lambdas;
    if best.eigvec.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Invariant(
            "the first eigenvector changed sign".into(),
        ));
    }
    Ok(best)
}

fn inverse_iteration(
    form: &NonlocalForm,
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    mut u: Vec<f64>,
    cfg: &SolverConfig,
) -> Result<EigenResult> {
    let hn = form.cell_volume;
    form.normalize(&mut u);
    let mut lambda = form.energy(&u) / form.mass(&u);
    let mut history = vec![lambda];
    let mut residual = residual_of(form, &u, lambda, &form.weak_rows(&u));
    let mut idle = 0;
    for it in 1..=cfg.max_iter {
        let rhs =
            DVector::from_iterator(u.len(), u.iter().zip(&form.weight).map(|(v, w)| hn * w * v));
        let mut next: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
        form.normalize(&mut next);
        let next_lambda = form.energy(&next) / form.mass(&next);
        let next_residual = residual_of(form, &next, next_lambda, &form.weak_rows(&next));
        // Quotients of inverse iteration are non-increasing in exact
        // arithmetic; an uptick is rounding, and the trace keeps the minimum.
        lambda = next_lambda.min(lambda);
        history.push(lambda);
        u = next;
        // Keep iterating while the residual still improves: the quotient
        // stalls at rounding long before the eigenvector does.
        if next_residual < 0.99 * residual {
            idle = 0;
        } else {
            idle += 1;
        }
        residual = next_residual.min(residual);
        if residual < 1e-14 || idle >= 3 {
            if residual <= cfg.residual_tol {
                return Ok(EigenResult {
                    lambda1: lambda,
                    eigvec: u,
                    residual: next_residual,
                    iters: it,
                    history,
                    seed_lambdas: vec![],
                });
            }
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: history.len() - 1,
        last: lambda,
        history,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn descent(form: &NonlocalForm, mut u: Vec<f64>, cfg: &SolverConfig) -> Result<EigenResult> {
    let n = form.len();
    let p = form.p;
    let hn = form.cell_volume;
    form.normalize(&mut u);
    let precondition = |u: &[f64], g: &[f64]| -> Vec<f64> {
        form.hessian_diagonal(u)
            .iter()
            .zip(g)
            .map(|(h, gk)| gk / h)
            .collect()
    };

    // Gradient of R(u) = N/D: (p·rows − R·p·hᴺ ω φ(u)) / D.
    let grad = |u: &[f64], r: f64, rows: &[f64]| -> Vec<f64> {
        let d = form.mass(u);
        (0..n)
            .map(|k| p * (rows[k] - r * hn * form.weight[k] * phi(u[k], p)) / d)
            .collect()
    };

    let mut r = form.energy(&u) / form.mass(&u);
    let mut rows = form.weak_rows(&u);
    let mut g = grad(&u, r, &rows);
    let mut z = precondition(&u, &g);
    let mut d: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut history = vec![r];
    let mut step = 0.1
        / d.iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
    let mut residual = residual_of(form, &u, r, &rows);
    let mut restarted = false;

    for it in 1..=cfg.max_iter {
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            d = z.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        // Armijo backtracking on the quotient.
        let mut alpha = step * 2.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let rt = form.energy(&trial) / form.mass(&trial);
            if rt.is_finite() && rt <= r + 1e-4 * alpha * slope && rt < r {
                accepted = Some((trial, rt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((mut trial, rt)) = accepted else {
            // A stale conjugate direction can stop admitting decrease
            // before the gradient does: restart once from steepest descent.
            if !restarted {
                restarted = true;
                d = z.iter().map(|v| -v).collect();
                continue;
            }
            // No decrease is representable any more.
            if residual <= cfg.residual_tol {
                return Ok(EigenResult {
                    lambda1: r,
                    eigvec: u,
                    residual,
                    iters: it,
                    history,
                    seed_lambdas: vec![],
                });
            }
            return Err(Error::NonConvergence {
                iterations: it,
                last: r,
                history,
            });
        };
        step = alpha;
        restarted = false;
        let scale = form.normalize(&mut trial);
        u = trial;
        r = rt;
        history.push(r);
        rows = form.weak_rows(&u);
        residual = residual_of(form, &u, r, &rows);
        let g_new = grad(&u, r, &rows);
        let z_new = precondition(&u, &g_new);
        // Polak–Ribière+.
        let num: f64 = g_new
            .iter()
            .zip(&g)
            .zip(&z_new)
            .map(|((a, b), c)| (a - b) * c)
            .sum();
        let beta = (num / dot(&g, &z)).max(0.0);
        d = z_new
            .iter()
            .zip(&d)
            .map(|(a, b)| -a + beta * b / scale)
            .collect();
        step /= scale;
        g = g_new;
        z = z_new;

        let k = history.len();
        let stagnant = k > cfg.window && (history[k - 1 - cfg.window] - r) <= cfg.tol * r;
        if residual <= cfg.residual_tol && (stagnant || residual <= 1e-3 * cfg.residual_tol) {
            return Ok(EigenResult {
                lambda1: r,
                eigvec: u,
                residual,
                iters: it,
                history,
                seed_lambdas: vec![],
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        last: r,
        history,
    })
}

/// Smallest eigenvalue of the p = 2 pencil `(A, hᴺ diag ω)` by a dense
/// symmetric eigendecomposition; requires `ω > 0`.
pub fn dense_first_eigenvalue(form: &NonlocalForm) -> Result<f64> {
    if form.p != 2.0 {
        return invalid("the dense eigensolve is only defined for p = 2");
    }
    if form.weight.iter().any(|w| !(*w > 0.0)) {
        return invalid("the dense eigensolve needs a strictly positive weight");
    }
    let s: Vec<f64> = form
        .weight
        .iter()
        .map(|w| 1.0 / (form.cell_volume * w).sqrt())
        .collect();
    let mut a = form.matrix();
    let n = form.len();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= s[i] * s[j];
        }
    }
    let eig = SymmetricEigen::new(a);
    Ok(eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub theta: f64,
    pub radius: f64,
    pub lambda1: f64,
    pub r_inner: f64,
    /// `‖λ₁ ω‖_{L^θ(Ω)}`; equals `λ₁ |Ω|^{1/θ}` for `ω ≡ 1`.
    pub weight_norm: f64,
    /// `P = ‖λ₁ ω‖_{L^θ} · r^{sp − Q/θ}`.
    pub product: f64,
}

/// The Lyapunov product for one solved domain; requires `Q/(sp) < θ < ∞`.
pub fn lyapunov_check(
    domain: &Domain,
    form: &NonlocalForm,
    params: &FracParams,
    theta: f64,
    result: &EigenResult,
) -> Result<LyapunovReport> {
    check_p(form, params)?;
    let q = domain.group.q_dim();
    let sp = params.sp();
    if !(theta > q / sp && theta.is_finite()) {
        return invalid(format!(
            "θ must lie in (Q/(sp), ∞) = ({}, ∞), got {theta}",
            q / sp
        ));
    }
    if !(result.lambda1 > 0.0) {
        return Err(Error::Invariant(format!(
            "λ₁ = {} is not positive",
            result.lambda1
        )));
    }
    let hn = form.cell_volume;
    let weight_norm = result.lambda1
        * (hn * form.weight.iter().map(|w| w.powf(theta)).sum::<f64>()).powf(1.0 / theta);
    let product = weight_norm * domain.r_inner.powf(sp - q / theta);
    if !(product > 0.0) {
        return Err(Error::Invariant(format!(
            "Lyapunov product {product} is not positive"
        )));
    }
    Ok(LyapunovReport {
        theta,
        radius: domain.radius,
        lambda1: result.lambda1,
        r_inner: domain.r_inner,
        weight_norm,
        product,
    })
}

/// `ω(x) = f(q(x)/R)` on the interior points of a ball of radius `R`;
/// dilation covariant, so `‖ω‖_θ` scales like `|Ω|^{1/θ}`.
pub fn radial_weight<F: Fn(f64) -> f64>(domain: &Domain, f: F) -> Vec<f64> {
    let mut x = vec![0.0; domain.grid.dim()];
    domain
        .interior()
        .iter()
        .map(|&i| {
            domain.grid.node_into(i, &mut x);
            f(domain.norm.eval(&domain.group, &x) / domain.radius)
        })
        .collect()
}

/// `max/min − 1` of a positive sample.
pub fn relative_spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi / lo - 1.0
}
