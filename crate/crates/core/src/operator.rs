//! The kernel `k(x, y) = q(y⁻¹∘x)^{−(Q+sp)}`, the Gagliardo seminorm, the
//! principal-value operator and its weak form, all on cell-centred grids.
//!
//! Conventions fixed here and used throughout the crate:
//!
//! * `[u]^p = ∬_{𝔾×𝔾} |u(x) − u(y)|^p k(x, y) dx dy` (ordered pairs).
//! * `(−Δ_{p,q})^s u(x) = 2 PV ∫ φ(u(x) − u(y)) k(x, y) dy`, `φ(t) = |t|^{p−2} t`.
//! * `W(u, v) = ∬ φ(u(x) − u(y)) (v(x) − v(y)) k(x, y) dx dy`, so that
//!   `∫ (−Δ_{p,q})^s u · v = W(u, v)` and `W(u, u) = [u]^p`.
//!
//! Pairs with both points on the grid are summed with weight `h^{2N}`;
//! pairs with one point off the box see `u = 0` there and are summed
//! through the exact ray integral of the kernel over the box complement.

use crate::error::{invalid, Error, Result};
use crate::exec::Exec;
use crate::grid::{GridSpec, SampledFunction};
use crate::group::{GroupDescriptor, Point, QuasiNorm, MAX_DIM};
use crate::quad::gauss_legendre_on;
use crate::sphere::{
    build_sphere_quadrature, exterior_box_integral, positive_roots, SphereQuadrature,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FracParams {
    s: f64,
    p: f64,
}

impl FracParams {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return invalid(format!("s must lie in (0, 1), got {s}"));
        }
        if !(p > 1.0 && p.is_finite()) {
            return invalid(format!("p must lie in (1, ∞), got {p}"));
        }
        Ok(Self { s, p })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// `Q − sp`.
    pub fn gap(&self, q_dim: f64) -> f64 {
        q_dim - self.sp()
    }

    /// Critical exponent `p* = Qp/(Q − sp)`, defined only when `Q > sp`.
    pub fn p_star(&self, q_dim: f64) -> Option<f64> {
        (q_dim > self.sp()).then(|| q_dim * self.p / (q_dim - self.sp()))
    }

    pub fn require_subcritical(&self, q_dim: f64) -> Result<()> {
        if q_dim > self.sp() {
            Ok(())
        } else {
            invalid(format!("need Q > sp, got Q = {q_dim}, sp = {}", self.sp()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NearMode {
    Skip,
    LocalCorrection,
}

impl NearMode {
    pub fn from_id(id: &str) -> Result<Self> {
        match id.trim() {
            "skip" => Ok(NearMode::Skip),
            "local_correction" | "local-correction" => Ok(NearMode::LocalCorrection),
            other => invalid(format!(
                "unknown near_mode '{other}' (expected skip or local_correction)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadratureConfig {
    /// Radius of the excluded neighbourhood, in units of the grid index
    /// (0.5 excludes exactly the own cell).
    pub pv_cutoff: f64,
    pub near_mode: NearMode,
    pub tol: f64,
    /// Resolution of the sphere rule used for exterior integrals.
    pub sphere_resolution: usize,
    pub exec: Exec,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            pv_cutoff: 0.5,
            near_mode: NearMode::Skip,
            tol: 1e-6,
            sphere_resolution: 64,
            exec: Exec::default(),
        }
    }
}

impl QuadratureConfig {
    pub fn with_near_mode(mut self, mode: NearMode) -> Self {
        self.near_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pv_cutoff >= 0.5) {
            return invalid(format!(
                "pv_cutoff must be at least half a cell, got {}",
                self.pv_cutoff
            ));
        }
        if !(self.tol > 0.0) {
            return invalid("quadrature tolerance must be positive");
        }
        if self.sphere_resolution < 8 {
            return invalid("sphere resolution must be at least 8");
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn abs_pow(t: f64, p: f64) -> f64 {
    let a = t.abs();
    if p == 2.0 {
        a * a
    } else if p == 3.0 {
        a * a * a
    } else if p == 1.5 {
        a * a.sqrt()
    } else {
        a.powf(p)
    }
}

/// `φ(t) = |t|^{p−2} t`.
#[inline]
pub(crate) fn phi(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t
    } else if p == 3.0 {
        t * t.abs()
    } else if p == 1.5 {
        if t == 0.0 {
            0.0
        } else {
            t / t.abs().sqrt()
        }
    } else if t == 0.0 {
        0.0
    } else {
        t.signum() * t.abs().powf(p - 1.0)
    }
}

/// Kernel evaluation with the group, gauge and exponent bound once.
#[derive(Clone, Copy)]
pub(crate) struct Kernel<'a> {
    pub g: &'a GroupDescriptor,
    pub norm: QuasiNorm,
    pub exponent: f64,
}

impl<'a> Kernel<'a> {
    pub fn new(g: &'a GroupDescriptor, norm: QuasiNorm, params: &FracParams) -> Self {
        Self {
            g,
            norm,
            exponent: -(g.q_dim() + params.sp()),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut z = [0.0; MAX_DIM];
        let n = self.g.dim();
        self.g.left_quotient_into(x, y, &mut z[..n]);
        self.norm.eval_pow(self.g, &z[..n], self.exponent)
    }
}

/// `k(x, y) = q(y⁻¹∘x)^{−(Q+sp)}`.
pub fn kernel(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    x: &Point,
    y: &Point,
) -> Result<f64> {
    norm.check_compatible(g)?;
    g.check_point(x)?;
    g.check_point(y)?;
    if x.0 == y.0 {
        return Err(Error::Singular);
    }
    Ok(Kernel::new(g, norm, params).eval(&x.0, &y.0))
}

fn check_inputs(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    u: &SampledFunction,
    cfg: &QuadratureConfig,
) -> Result<()> {
    norm.check_compatible(g)?;
    cfg.validate()?;
    if u.grid.dim() != g.dim() {
        return invalid(format!(
            "function lives on a {}-dimensional grid, group {} has dimension {}",
            u.grid.dim(),
            g.name(),
            g.dim()
        ));
    }
    if u.values.iter().any(|v| !v.is_finite()) {
        return invalid("sampled values must be finite");
    }
    Ok(())
}

/// Excluded neighbours: index offsets of Euclidean index-length `< δ`,
/// other than the zero offset.
#[derive(Clone, Debug)]
pub(crate) struct Exclusion {
    offsets: Vec<[i64; MAX_DIM]>,
}

impl Exclusion {
    pub fn new(dim: usize, cutoff: f64) -> Self {
        let reach = cutoff.ceil() as i64;
        let mut offsets = Vec::new();
        if cutoff > 1.0 {
            let side = (2 * reach + 1) as usize;
            for flat in 0..side.pow(dim as u32) {
                let mut rem = flat;
                let mut off = [0i64; MAX_DIM];
                let mut len2 = 0.0;
                for k in 0..dim {
                    off[k] = (rem % side) as i64 - reach;
                    rem /= side;
                    len2 += (off[k] * off[k]) as f64;
                }
                if len2 > 0.0 && len2.sqrt() < cutoff {
                    offsets.push(off);
                }
            }
        }
        Self { offsets }
    }

    pub fn is_trivial(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Sorted flat indices excluded around node `i` (own cell not included).
    pub fn around(&self, grid: &GridSpec, i: usize) -> Vec<usize> {
        let d = grid.dim();
        let mut idx = [0usize; MAX_DIM];
        grid.multi_index(i, &mut idx[..d]);
        let mut out: Vec<usize> = self
            .offsets
            .iter()
            .filter_map(|off| {
                let mut flat = 0usize;
                for k in 0..d {
                    let v = idx[k] as i64 + off[k];
                    if v < 0 || v >= grid.counts()[k] as i64 {
                        return None;
                    }
                    flat += v as usize * grid.strides()[k];
                }
                Some(flat)
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// Shared state for grid double sums: coordinates, kernel, exclusion set
/// and a lazily built sphere rule.
pub(crate) struct PairSum<'a> {
    pub kernel: Kernel<'a>,
    pub grid: &'a GridSpec,
    pub coords: Vec<f64>,
    pub exclusion: Exclusion,
    pub cfg: &'a QuadratureConfig,
    pub sp: f64,
}

impl<'a> PairSum<'a> {
    pub fn new(
        g: &'a GroupDescriptor,
        norm: QuasiNorm,
        params: &FracParams,
        grid: &'a GridSpec,
        cfg: &'a QuadratureConfig,
    ) -> Self {
        Self {
            kernel: Kernel::new(g, norm, params),
            grid,
            coords: grid.coordinates(),
            exclusion: Exclusion::new(grid.dim(), cfg.pv_cutoff),
            cfg,
            sp: params.sp(),
        }
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn sphere(&self) -> Result<SphereQuadrature> {
        build_sphere_quadrature(self.kernel.g, self.kernel.norm, self.cfg.sphere_resolution)
    }

    /// Row sum `Σ_{j ∈ cols, j ≠ i, not excluded} f(j) k(x_i, x_j)`.
    #[inline]
    pub fn row<F: Fn(usize) -> f64>(
        &self,
        i: usize,
        cols: impl Iterator<Item = usize>,
        f: F,
    ) -> f64 {
        let xi = self.x(i);
        let excluded = if self.exclusion.is_trivial() {
            Vec::new()
        } else {
            self.exclusion.around(self.grid, i)
        };
        let mut ex = excluded.iter().peekable();
        let mut acc = 0.0;
        for j in cols {
            if j == i {
                continue;
            }
            if !excluded.is_empty() {
                while let Some(&&e) = ex.peek() {
                    if e < j {
                        ex.next();
                    } else {
                        break;
                    }
                }
                if ex.peek() == Some(&&j) {
                    continue;
                }
            }
            let w = f(j);
            if w != 0.0 {
                acc += w * self.kernel.eval(xi, self.x(j));
            }
        }
        acc
    }

    /// Exterior kernel mass `E(x_i)` of the grid box.
    pub fn exterior(&self, sphere: &SphereQuadrature, i: usize) -> f64 {
        exterior_box_integral(
            self.kernel.g,
            sphere,
            self.grid.lo(),
            self.grid.hi(),
            self.x(i),
            self.sp,
        )
    }
}

/// `[u]^p_{s,p,q}` over `𝔾 × 𝔾`.
pub fn gagliardo_seminorm(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    u: &SampledFunction,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_inputs(g, norm, u, cfg)?;
    let support = u.support();
    if support.is_empty() {
        return Ok(0.0);
    }
    let grid = &u.grid;
    let hn = grid.cell_volume();
    let p = params.p();
    let ps = PairSum::new(g, norm, params, grid, cfg);
    let vals = &u.values;
    let n = grid.len();
    // Rows over the support; a column outside the support stands for both
    // orderings of its pair.
    let pairs = cfg.exec.sum(support.len(), |r| {
        let i = support[r];
        let ui = vals[i];
        ps.row(i, 0..n, |j| {
            let w = if vals[j] == 0.0 { 2.0 } else { 1.0 };
            w * abs_pow(ui - vals[j], p)
        })
    });
    let sphere = ps.sphere()?;
    let tail = cfg.exec.sum(support.len(), |r| {
        abs_pow(vals[support[r]], p) * ps.exterior(&sphere, support[r])
    });
    let mut total = pairs * hn * hn + 2.0 * tail * hn;
    if cfg.near_mode == NearMode::LocalCorrection {
        total += hn * near_field(g, norm, params, u, cfg, NearIntegrand::Energy)?;
    }
    Ok(total)
}

/// `(−Δ_{p,q})^s u(x)` at a grid node `x`.
pub fn apply_operator(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    u: &SampledFunction,
    x: &Point,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_inputs(g, norm, u, cfg)?;
    g.check_point(x)?;
    let grid = &u.grid;
    let i = grid
        .locate_node(&x.0, 1e-6)
        .ok_or_else(|| Error::InvalidInput("x is not a node of the function's grid".into()))?;
    let p = params.p();
    let kern = Kernel::new(g, norm, params);
    let vals = &u.values;
    let ui = vals[i];
    let exclusion = Exclusion::new(grid.dim(), cfg.pv_cutoff);
    let excluded = exclusion.around(grid, i);
    let d = grid.dim();
    // Coordinates are generated on the fly: this is one row of a grid that
    // may be too large to tabulate.
    let chunk = 4096;
    let n = grid.len();
    let blocks = n.div_ceil(chunk);
    let sum = cfg.exec.sum(blocks, |b| {
        let mut y = [0.0; MAX_DIM];
        let mut acc = 0.0;
        for j in b * chunk..((b + 1) * chunk).min(n) {
            if j == i || excluded.binary_search(&j).is_ok() {
                continue;
            }
            let diff = ui - vals[j];
            if diff == 0.0 {
                continue;
            }
            grid.node_into(j, &mut y[..d]);
            acc += phi(diff, p) * kern.eval(&x.0, &y[..d]);
        }
        acc
    });
    let mut total = sum * grid.cell_volume();
    if ui != 0.0 {
        let sphere = build_sphere_quadrature(g, norm, cfg.sphere_resolution)?;
        total +=
            phi(ui, p) * exterior_box_integral(g, &sphere, grid.lo(), grid.hi(), &x.0, params.sp());
    }
    if cfg.near_mode == NearMode::LocalCorrection {
        let model = TaylorModel::at(u, i);
        let sphere = build_sphere_quadrature(g, norm, cfg.sphere_resolution.min(64))?;
        total += near_integral(
            g,
            &sphere,
            params,
            grid,
            &x.0,
            &model,
            NearIntegrand::Operator,
        ) + excluded_cells_integral(
            g,
            norm,
            params,
            grid,
            i,
            &excluded,
            &model,
            NearIntegrand::Operator,
        );
    }
    Ok(2.0 * total)
}

/// Which pairs a weak form or restricted seminorm ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeakScope {
    /// `Ω × Ω` only.
    Domain,
    /// Every pair with at least one point in `Ω`; equals the full
    /// `𝔾 × 𝔾` form when `u` and `v` vanish off `Ω`.
    WithExterior,
}

/// `W(u, v)` restricted per `scope`.
#[allow(clippy::too_many_arguments)]
pub fn weak_form(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    u: &SampledFunction,
    v: &SampledFunction,
    mask: &[bool],
    scope: WeakScope,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_inputs(g, norm, u, cfg)?;
    check_inputs(g, norm, v, cfg)?;
    if !u.grid.same_as(&v.grid) {
        return invalid("u and v live on different grids");
    }
    if mask.len() != u.len() {
        return invalid("domain mask does not match the grid");
    }
    if cfg.near_mode != NearMode::Skip {
        return Err(Error::Unsupported(
            "the weak form is only discretized with near_mode = skip".into(),
        ));
    }
    let grid = &u.grid;
    let hn = grid.cell_volume();
    let p = params.p();
    let ps = PairSum::new(g, norm, params, grid, cfg);
    let rows: Vec<usize> = (0..grid.len()).filter(|&i| mask[i]).collect();
    let (uv, vv) = (&u.values, &v.values);
    let n = grid.len();
    let pairs = cfg.exec.sum(rows.len(), |r| {
        let i = rows[r];
        ps.row(i, 0..n, |j| {
            let w = match (mask[j], scope) {
                (true, _) => 1.0,
                (false, WeakScope::Domain) => 0.0,
                (false, WeakScope::WithExterior) => 2.0,
            };
            if w == 0.0 {
                return 0.0;
            }
            w * phi(uv[i] - uv[j], p) * (vv[i] - vv[j])
        })
    });
    let mut total = pairs * hn * hn;
    if scope == WeakScope::WithExterior {
        let sphere = ps.sphere()?;
        let tail = cfg.exec.sum(rows.len(), |r| {
            let i = rows[r];
            let w = phi(uv[i], p) * vv[i];
            if w == 0.0 {
                0.0
            } else {
                w * ps.exterior(&sphere, i)
            }
        });
        total += 2.0 * tail * hn;
    }
    Ok(total)
}

/// `[u]^p` restricted to `Ω × Ω`.
pub fn seminorm_on_domain(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    u: &SampledFunction,
    mask: &[bool],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    weak_form(g, norm, params, u, u, mask, WeakScope::Domain, cfg)
}

/// `u_n = max(min(u, n), −n)`.
pub fn truncate(u: &SampledFunction, level: f64) -> Result<SampledFunction> {
    if !(level > 0.0) {
        return invalid("truncation level must be positive");
    }
    u.map(|v| v.clamp(-level, level))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncationStep {
    pub level: f64,
    pub seminorm: f64,
    pub lp_norm: f64,
}

/// Seminorm and `‖·‖_p^p` of the truncations at increasing `levels`,
/// followed by the untruncated values under `level = ∞`.
pub fn truncation_sequence(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    u: &SampledFunction,
    levels: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<TruncationStep>> {
    let mut out = Vec::with_capacity(levels.len() + 1);
    for &level in levels {
        let t = truncate(u, level)?;
        out.push(TruncationStep {
            level,
            seminorm: gagliardo_seminorm(g, norm, params, &t, cfg)?,
            lp_norm: t.lp_norm_pow(params.p()),
        });
    }
    out.push(TruncationStep {
        level: f64::INFINITY,
        seminorm: gagliardo_seminorm(g, norm, params, u, cfg)?,
        lp_norm: u.lp_norm_pow(params.p()),
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Near field: integrals of a local Taylor model over excluded cells.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum NearIntegrand {
    /// `|m(d)|^p`, for the seminorm.
    Energy,
    /// `½[φ(−m(d)) + φ(−m(−d))]`, the symmetrized operator integrand.
    Operator,
}

/// `u(x + d) − u(x) ≈ g·d + ½ dᵀHd` from central differences, with `u = 0`
/// off the grid.
#[derive(Clone, Debug)]
pub(crate) struct TaylorModel {
    dim: usize,
    grad: [f64; MAX_DIM],
    hess: [[f64; MAX_DIM]; MAX_DIM],
}

impl TaylorModel {
    pub fn at(u: &SampledFunction, i: usize) -> Self {
        let grid = &u.grid;
        let d = grid.dim();
        let mut idx = [0usize; MAX_DIM];
        grid.multi_index(i, &mut idx[..d]);
        let value = |off: &[i64]| -> f64 {
            let mut flat = 0usize;
            for k in 0..d {
                let v = idx[k] as i64 + off[k];
                if v < 0 || v >= grid.counts()[k] as i64 {
                    return 0.0;
                }
                flat += v as usize * grid.strides()[k];
            }
            u.values[flat]
        };
        let h = grid.spacing();
        let mut grad = [0.0; MAX_DIM];
        let mut hess = [[0.0; MAX_DIM]; MAX_DIM];
        let u0 = u.values[i];
        for a in 0..d {
            let mut e = [0i64; MAX_DIM];
            e[a] = 1;
            let up = value(&e[..d]);
            e[a] = -1;
            let dn = value(&e[..d]);
            grad[a] = (up - dn) / (2.0 * h[a]);
            hess[a][a] = (up - 2.0 * u0 + dn) / (h[a] * h[a]);
            for b in 0..a {
                let mut e = [0i64; MAX_DIM];
                let mut acc = 0.0;
                for (sa, sb, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                    e[a] = sa;
                    e[b] = sb;
                    acc += sign * value(&e[..d]);
                }
                let v = acc / (4.0 * h[a] * h[b]);
                hess[a][b] = v;
                hess[b][a] = v;
            }
        }
        Self { dim: d, grad, hess }
    }

    pub fn is_zero(&self) -> bool {
        self.grad[..self.dim].iter().all(|v| *v == 0.0)
            && self.hess[..self.dim]
                .iter()
                .all(|r| r[..self.dim].iter().all(|v| *v == 0.0))
    }

    #[inline]
    fn linear(&self, d: &[f64]) -> f64 {
        (0..self.dim).map(|a| self.grad[a] * d[a]).sum()
    }

    #[inline]
    fn quadratic(&self, d: &[f64]) -> f64 {
        let mut acc = 0.0;
        for a in 0..self.dim {
            for b in 0..self.dim {
                acc += self.hess[a][b] * d[a] * d[b];
            }
        }
        0.5 * acc
    }

    #[inline]
    fn integrand(&self, d: &[f64], p: f64, kind: NearIntegrand) -> f64 {
        let l = self.linear(d);
        let q = self.quadratic(d);
        match kind {
            NearIntegrand::Energy => abs_pow(l + q, p),
            NearIntegrand::Operator => 0.5 * (phi(-l - q, p) + phi(l - q, p)),
        }
    }
}

/// `∫_{own cell} model(y − x) k(x, y) dy` in polar coordinates about `x`.
///
/// Writing `y = x ∘ (δ_r ω)⁻¹`, the offset `y − x` is a polynomial of degree
/// ≤ 2 in `r`, so the cell is cut out of each ray by quadratic roots; on
/// the segment touching `r = 0` the substitution `r = b t^{1/(p−sp)}`
/// absorbs the `r^{p−1−sp}` behaviour of the integrand.
pub(crate) fn near_integral(
    g: &GroupDescriptor,
    sphere: &SphereQuadrature,
    params: &FracParams,
    grid: &GridSpec,
    x: &[f64],
    model: &TaylorModel,
    kind: NearIntegrand,
) -> f64 {
    if model.is_zero() {
        return 0.0;
    }
    let n = g.dim();
    let p = params.p();
    let sp = params.sp();
    let beta = p - sp;
    let h = grid.spacing();
    let (gl_x, gl_w) = gauss_legendre_on(24, 0.0, 1.0);
    let mut roots = Vec::with_capacity(4 * n);
    let mut neg = [0.0; MAX_DIM];
    let mut total = 0.0;
    for (node, w) in sphere.iter() {
        for k in 0..n {
            neg[k] = -node[k];
        }
        let c = g.ray_coefficients(x, &neg[..n]);
        // offset polynomial: d(r) = c₁ r + c₂ r²
        let offset = |r: f64, out: &mut [f64]| {
            for k in 0..n {
                out[k] = r * (c[k][1] + r * c[k][2]);
            }
        };
        roots.clear();
        for k in 0..n {
            let poly = [0.0, c[k][1], c[k][2]];
            positive_roots(&poly, 0.5 * h[k], &mut roots);
            positive_roots(&poly, -0.5 * h[k], &mut roots);
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d = [0.0; MAX_DIM];
        let mut prev = 0.0;
        let mut ray = 0.0;
        for &next in &roots {
            if next <= prev {
                continue;
            }
            offset(0.5 * (prev + next), &mut d[..n]);
            let inside = (0..n).all(|k| d[k].abs() <= 0.5 * h[k]);
            if inside {
                if prev == 0.0 {
                    // ∫₀^b F(r) r^{−1−sp} dr = (b^β/β) ∫₀¹ F(r) r^{−p} dt, r = b t^{1/β}
                    let mut acc = 0.0;
                    for (t, wt) in gl_x.iter().zip(&gl_w) {
                        let r = next * t.powf(1.0 / beta);
                        offset(r, &mut d[..n]);
                        acc += wt * model.integrand(&d[..n], p, kind) * r.powf(-p);
                    }
                    ray += acc * next.powf(beta) / beta;
                } else {
                    let mut acc = 0.0;
                    for (t, wt) in gl_x.iter().zip(&gl_w) {
                        let r = prev + (next - prev) * t;
                        offset(r, &mut d[..n]);
                        acc += wt * model.integrand(&d[..n], p, kind) * r.powf(-1.0 - sp);
                    }
                    ray += acc * (next - prev);
                }
            }
            prev = next;
        }
        total += w * ray;
    }
    total
}

/// Model integral over excluded cells other than the own cell (regular
/// integrands, 3-point Gauss–Legendre per axis).
#[allow(clippy::too_many_arguments)]
fn excluded_cells_integral(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    grid: &GridSpec,
    i: usize,
    excluded: &[usize],
    model: &TaylorModel,
    kind: NearIntegrand,
) -> f64 {
    if excluded.is_empty() || model.is_zero() {
        return 0.0;
    }
    let n = g.dim();
    let kern = Kernel::new(g, norm, params);
    let h = grid.spacing();
    let (gx, gw) = gauss_legendre_on(3, -0.5, 0.5);
    let x = grid.node(i);
    let mut total = 0.0;
    let mut y = [0.0; MAX_DIM];
    let mut d = [0.0; MAX_DIM];
    for &j in excluded {
        let yc = grid.node(j);
        for flat in 0..3usize.pow(n as u32) {
            let mut rem = flat;
            let mut w = 1.0;
            for k in 0..n {
                let a = rem % 3;
                rem /= 3;
                y[k] = yc[k] + gx[a] * h[k];
                w *= gw[a] * h[k];
                d[k] = y[k] - x[k];
            }
            total += w * model.integrand(&d[..n], params.p(), kind) * kern.eval(&x, &y[..n]);
        }
    }
    total
}

/// `Σ_i ∫_{excluded(i)} model_i k` over every node whose model is nonzero.
fn near_field(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    u: &SampledFunction,
    cfg: &QuadratureConfig,
    kind: NearIntegrand,
) -> Result<f64> {
    let grid = &u.grid;
    let sphere = build_sphere_quadrature(g, norm, cfg.sphere_resolution.min(64))?;
    let exclusion = Exclusion::new(grid.dim(), cfg.pv_cutoff);
    Ok(cfg.exec.sum(grid.len(), |i| {
        let model = TaylorModel::at(u, i);
        if model.is_zero() {
            return 0.0;
        }
        let x = grid.node(i);
        let excluded = exclusion.around(grid, i);
        near_integral(g, &sphere, params, grid, &x, &model, kind)
            + excluded_cells_integral(g, norm, params, grid, i, &excluded, &model, kind)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use proptest::prelude::*;

    fn bump1(x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 < 1.0 {
            (1.0 - r2).powi(3)
        } else {
            0.0
        }
    }

    #[test]
    fn params_validation() {
        assert!(FracParams::new(0.0, 2.0).is_err());
        assert!(FracParams::new(1.0, 2.0).is_err());
        assert!(FracParams::new(0.5, 1.0).is_err());
        let p = FracParams::new(0.5, 2.0).unwrap();
        assert_eq!(p.p_star(4.0), Some(8.0 / 3.0));
        assert_eq!(p.p_star(1.0), None);
        assert!(QuadratureConfig {
            pv_cutoff: 0.4,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn kernel_examples() {
        let h = GroupDescriptor::heisenberg();
        let par = FracParams::new(0.5, 2.0).unwrap();
        let k = kernel(
            &h,
            QuasiNorm::Koranyi,
            &par,
            &Point::new([1.0, 0.0, 0.0]),
            &h.identity(),
        )
        .unwrap();
        assert!((k - 1.0).abs() < 1e-15);
        let a = GroupDescriptor::abelian(2).unwrap();
        let k = kernel(
            &a,
            QuasiNorm::Euclidean,
            &par,
            &Point::new([3.0, 4.0]),
            &a.identity(),
        )
        .unwrap();
        assert!((k - 5f64.powf(-3.0)).abs() < 1e-15);
        assert!(matches!(
            kernel(
                &a,
                QuasiNorm::Euclidean,
                &par,
                &Point::new([1.0, 1.0]),
                &Point::new([1.0, 1.0])
            ),
            Err(Error::Singular)
        ));
    }

    #[test]
    fn phi_fast_paths_agree_with_powf() {
        for p in [1.5, 2.0, 3.0] {
            for t in [-2.5f64, -0.3, 0.0, 0.7, 4.0] {
                let slow = if t == 0.0 {
                    0.0
                } else {
                    t.signum() * f64::abs(t).powf(p - 1.0)
                };
                assert!((phi(t, p) - slow).abs() < 1e-14);
                assert!((abs_pow(t, p) - f64::abs(t).powf(p)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_function_has_zero_seminorm_and_operator() {
        let g = GroupDescriptor::abelian(1).unwrap();
        let par = FracParams::new(0.5, 2.0).unwrap();
        let u = SampledFunction::zeros(&g, GridSpec::cube(1, 2.0, 32).unwrap());
        let cfg = QuadratureConfig::default();
        assert_eq!(
            gagliardo_seminorm(&g, QuasiNorm::Euclidean, &par, &u, &cfg).unwrap(),
            0.0
        );
        let x = Point::new(u.grid.node(5));
        assert_eq!(
            apply_operator(&g, QuasiNorm::Euclidean, &par, &u, &x, &cfg).unwrap(),
            0.0
        );
    }

    /// Brute-force seminorm on ℝ¹: ordered pairs on the grid plus the
    /// closed-form exterior integral of the interval.
    #[test]
    fn seminorm_matches_brute_force_on_the_line() {
        let g = GroupDescriptor::abelian(1).unwrap();
        let par = FracParams::new(0.3, 1.7).unwrap();
        let grid = GridSpec::cube(1, 2.0, 40).unwrap();
        let u = SampledFunction::from_fn(&g, grid.clone(), bump1).unwrap();
        let h = grid.spacing()[0];
        let mut brute = 0.0;
        for i in 0..40 {
            let xi = grid.node(i)[0];
            for j in 0..40 {
                if i != j {
                    let xj = grid.node(j)[0];
                    brute += (u.values[i] - u.values[j]).abs().powf(1.7)
                        * (xi - xj).abs().powf(-1.0 - 0.51)
                        * h
                        * h;
                }
            }
            let e = ((xi + 2.0).powf(-0.51) + (2.0 - xi).powf(-0.51)) / 0.51;
            brute += 2.0 * u.values[i].abs().powf(1.7) * e * h;
        }
        let v = gagliardo_seminorm(
            &g,
            QuasiNorm::Euclidean,
            &par,
            &u,
            &QuadratureConfig::default(),
        )
        .unwrap();
        assert!((v - brute).abs() < 1e-12 * brute, "{v} vs {brute}");
    }

    #[test]
    fn constant_on_support_is_not_constant_on_the_group() {
        let g = GroupDescriptor::heisenberg();
        let par = FracParams::new(0.5, 2.0).unwrap();
        let grid = GridSpec::cube(3, 1.0, 6).unwrap();
        let u = SampledFunction::from_fn(&g, grid, |x| if x[0].abs() < 0.5 { 1.0 } else { 0.0 })
            .unwrap();
        let cfg = QuadratureConfig {
            sphere_resolution: 16,
            ..Default::default()
        };
        assert!(gagliardo_seminorm(&g, QuasiNorm::Koranyi, &par, &u, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn operator_at_maximum_is_nonnegative() {
        let g = GroupDescriptor::abelian(2).unwrap();
        let par = FracParams::new(0.4, 2.5).unwrap();
        let grid = GridSpec::cube(2, 2.0, 16).unwrap();
        let u =
            SampledFunction::from_fn(&g, grid, |x| bump1(&[x[0] - 0.125, x[1] - 0.125])).unwrap();
        let imax = (0..u.len())
            .max_by(|a, b| u.values[*a].partial_cmp(&u.values[*b]).unwrap())
            .unwrap();
        let x = Point::new(u.grid.node(imax));
        let cfg = QuadratureConfig {
            sphere_resolution: 32,
            ..Default::default()
        };
        assert!(apply_operator(&g, QuasiNorm::Euclidean, &par, &u, &x, &cfg).unwrap() > 0.0);
        assert!(apply_operator(
            &g,
            QuasiNorm::Euclidean,
            &par,
            &u,
            &Point::new([0.1, 0.1]),
            &cfg
        )
        .is_err());
    }

    #[test]
    fn operator_pairs_with_weak_form() {
        // Σ_x (−Δ)^s u(x) v(x) h^N equals the full weak form.
        let g = GroupDescriptor::abelian(1).unwrap();
        let grid = GridSpec::cube(1, 2.0, 64).unwrap();
        let u = SampledFunction::from_fn(&g, grid.clone(), bump1).unwrap();
        let v = SampledFunction::from_fn(&g, grid.clone(), |x| bump1(&[x[0] * 1.3 - 0.2])).unwrap();
        let mask = vec![true; grid.len()];
        let cfg = QuadratureConfig::default();
        for p in [1.5, 2.0, 3.0] {
            let par = FracParams::new(0.4, p).unwrap();
            let wf = weak_form(
                &g,
                QuasiNorm::Euclidean,
                &par,
                &u,
                &v,
                &mask,
                WeakScope::WithExterior,
                &cfg,
            )
            .unwrap();
            let mut dual = 0.0;
            for i in 0..grid.len() {
                let x = Point::new(grid.node(i));
                dual += apply_operator(&g, QuasiNorm::Euclidean, &par, &u, &x, &cfg).unwrap()
                    * v.values[i];
            }
            dual *= grid.cell_volume();
            assert!(
                (dual - wf).abs() < 1e-10 * wf.abs(),
                "p={p}: {dual} vs {wf}"
            );
        }
    }

    #[test]
    fn weak_form_of_u_with_itself_is_the_seminorm() {
        let g = GroupDescriptor::heisenberg();
        let par = FracParams::new(0.5, 1.5).unwrap();
        let grid = GridSpec::cube(3, 1.5, 8).unwrap();
        let u = SampledFunction::from_fn(&g, grid.clone(), bump1).unwrap();
        let cfg = QuadratureConfig {
            sphere_resolution: 16,
            ..Default::default()
        };
        let mask = vec![true; grid.len()];
        let wf = weak_form(
            &g,
            QuasiNorm::Koranyi,
            &par,
            &u,
            &u,
            &mask,
            WeakScope::WithExterior,
            &cfg,
        )
        .unwrap();
        let sn = gagliardo_seminorm(&g, QuasiNorm::Koranyi, &par, &u, &cfg).unwrap();
        assert!((wf - sn).abs() < 1e-12 * sn);
    }

    #[test]
    fn truncations_converge_monotonically() {
        let g = GroupDescriptor::abelian(1).unwrap();
        let par = FracParams::new(0.25, 2.0).unwrap();
        // |x|^{-1/4} cut off smoothly: unbounded profile, finite energy.
        let grid = GridSpec::cube(1, 2.0, 128).unwrap();
        let u = SampledFunction::from_fn(&g, grid, |x| x[0].abs().powf(-0.25) * bump1(x)).unwrap();
        let steps = truncation_sequence(
            &g,
            QuasiNorm::Euclidean,
            &par,
            &u,
            &[1.0, 1.5, 2.0, 3.0],
            &QuadratureConfig::default(),
        )
        .unwrap();
        for w in steps.windows(2) {
            assert!(w[1].seminorm >= w[0].seminorm && w[1].lp_norm >= w[0].lp_norm);
        }
    }

    #[test]
    fn local_correction_on_a_line_converges_faster() {
        // s = 0.5, p = 2 on ℝ: the own-cell term of skip mode is O(h).
        let g = GroupDescriptor::abelian(1).unwrap();
        let par = FracParams::new(0.5, 2.0).unwrap();
        let eval = |n: usize, mode| {
            let u =
                SampledFunction::from_fn(&g, GridSpec::cube(1, 2.0, n).unwrap(), bump1).unwrap();
            gagliardo_seminorm(
                &g,
                QuasiNorm::Euclidean,
                &par,
                &u,
                &QuadratureConfig::default().with_near_mode(mode),
            )
            .unwrap()
        };
        let reference = eval(4096, NearMode::LocalCorrection);
        let skip = (eval(128, NearMode::Skip) - reference).abs();
        let corr = (eval(128, NearMode::LocalCorrection) - reference).abs();
        assert!(corr < 0.2 * skip, "skip err {skip}, corrected err {corr}");
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(x in prop::array::uniform3(-3.0f64..3.0), y in prop::array::uniform3(-3.0f64..3.0)) {
            let par = FracParams::new(0.37, 2.2).unwrap();
            for (g, norm) in [
                (GroupDescriptor::heisenberg(), QuasiNorm::Koranyi),
                (GroupDescriptor::heisenberg(), QuasiNorm::WeightedMax),
                (GroupDescriptor::abelian(3).unwrap(), QuasiNorm::Euclidean),
            ] {
                let k1 = kernel(&g, norm, &par, &Point::new(x), &Point::new(y)).unwrap();
                let k2 = kernel(&g, norm, &par, &Point::new(y), &Point::new(x)).unwrap();
                prop_assert!((k1 - k2).abs() <= 1e-12 * k1.max(k2));
            }
        }

        #[test]
        fn weak_form_is_linear_in_v(a in -2.0f64..2.0, b in -2.0f64..2.0, p in 1.2f64..4.0) {
            let g = GroupDescriptor::abelian(1).unwrap();
            let par = FracParams::new(0.45, p).unwrap();
            let grid = GridSpec::cube(1, 2.0, 24).unwrap();
            let u = SampledFunction::from_fn(&g, grid.clone(), bump1).unwrap();
            let v1 = SampledFunction::from_fn(&g, grid.clone(), |x| (3.0 * x[0]).sin() * bump1(x)).unwrap();
            let v2 = SampledFunction::from_fn(&g, grid.clone(), |x| x[0] * bump1(x)).unwrap();
            let comb = SampledFunction::new(g.name(), grid.clone(),
                v1.values.iter().zip(&v2.values).map(|(x, y)| a * x + b * y).collect()).unwrap();
            let mask: Vec<bool> = (0..grid.len()).map(|i| i % 5 != 0).collect();
            let cfg = QuadratureConfig::default();
            for scope in [WeakScope::Domain, WeakScope::WithExterior] {
                let w = |v: &SampledFunction| weak_form(&g, QuasiNorm::Euclidean, &par, &u, v, &mask, scope, &cfg).unwrap();
                let lhs = w(&comb);
                let rhs = a * w(&v1) + b * w(&v2);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn quadratic_weak_form_is_symmetric() {
        let g = GroupDescriptor::abelian(2).unwrap();
        let par = FracParams::new(0.3, 2.0).unwrap();
        let grid = GridSpec::cube(2, 1.5, 10).unwrap();
        let u = SampledFunction::from_fn(&g, grid.clone(), bump1).unwrap();
        let v = SampledFunction::from_fn(&g, grid.clone(), |x| (x[0] - x[1]) * bump1(x)).unwrap();
        let mask: Vec<bool> = (0..grid.len()).map(|i| i % 7 != 3).collect();
        let cfg = QuadratureConfig {
            sphere_resolution: 32,
            ..Default::default()
        };
        for scope in [WeakScope::Domain, WeakScope::WithExterior] {
            let a = weak_form(&g, QuasiNorm::Euclidean, &par, &u, &v, &mask, scope, &cfg).unwrap();
            let b = weak_form(&g, QuasiNorm::Euclidean, &par, &v, &u, &mask, scope, &cfg).unwrap();
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn wider_cutoff_excludes_neighbours() {
        let e = Exclusion::new(2, 1.5);
        let grid = GridSpec::cube(2, 1.0, 5).unwrap();
        // interior node: 8 neighbours at index distance 1 and √2
        assert_eq!(e.around(&grid, grid.flat_index(&[2, 2])).len(), 8);
        assert_eq!(e.around(&grid, 0).len(), 3);
        assert!(Exclusion::new(3, 0.5).is_trivial());
    }
}
