//! The experiment registry: each experiment turns a validated config into
//! check rows, eigen records, summary lines and plot-data files.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use subfrac::eigen::{
    assemble, dense_first_eigenvalue, lyapunov_check, minimize_rayleigh, radial_weight,
    relative_spread, AssemblyConfig, Domain, EigenResult, NonlocalForm, SolverConfig,
};
use subfrac::family::annulus_family;
use subfrac::inequality::{
    admissible_gamma_grid, ball_mask, complement_integral_check, default_base_points, hardy_check,
    levelset_lower_bound, picone_check, sequence_lemma_check, sobolev_ratio, MuOptions, MuSolver,
};
use subfrac::report::CheckRow;
use subfrac::{
    build_sphere_quadrature, Exec, FracParams, GridSpec, GroupDescriptor, Point, QuadratureConfig,
    QuasiNorm, Reduction, SampledFunction,
};

use crate::config::{Experiment, ExperimentConfig};
use crate::CliError;

/// One eigenvalue run, as appended to the ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenRecord {
    pub run_id: String,
    pub group: String,
    pub norm: String,
    pub s: f64,
    pub p: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub h: f64,
    pub lambda1: f64,
    pub residual: f64,
    pub iters: usize,
    pub config_hash: String,
    pub version: String,
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub rows: Vec<CheckRow>,
    pub eigen: Vec<EigenRecord>,
    pub summary: Vec<String>,
    /// `(file name, contents)` of plot-data files.
    pub plots: Vec<(String, String)>,
}

impl Outcome {
    fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }
}

struct Ctx {
    g: GroupDescriptor,
    norm: QuasiNorm,
    params: FracParams,
    quad: QuadratureConfig,
    cfg: ExperimentConfig,
}

impl Ctx {
    fn row(
        &self,
        id: &str,
        param: Option<f64>,
        lhs: f64,
        rhs: f64,
        margin: f64,
        tol: f64,
        pass: bool,
    ) -> CheckRow {
        CheckRow::new(
            id,
            &self.g,
            self.norm,
            Some(&self.params),
            param,
            lhs,
            rhs,
            margin,
            tol,
            pass,
        )
    }
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut quad = QuadratureConfig {
        sphere_resolution: cfg.resolution,
        ..Default::default()
    };
    if !cfg.deterministic {
        quad.exec = Exec {
            parallel: quad.exec.parallel,
            reduction: Reduction::Unordered,
        };
    }
    let ctx = Ctx {
        g: cfg.group(),
        norm: cfg.norm(),
        params: cfg.params(),
        quad,
        cfg: cfg.clone(),
    };
    match cfg.experiment {
        Experiment::SobolevScan => sobolev_scan(&ctx),
        Experiment::HardyMu => hardy_mu(&ctx),
        Experiment::Picone => picone(&ctx),
        Experiment::Levelset => levelset(&ctx),
        Experiment::LemmaLem1 => lemma_lem1(&ctx),
        Experiment::Eigen => eigen(&ctx),
        Experiment::Lyapunov => lyapunov(&ctx),
    }
}

/// Box with half-widths `box^{w_i}` times the unit-ball extent, padded by
/// a quarter along the last (central) axis so that the family can be
/// translated along it.
pub fn sampling_grid(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    n: usize,
    scale: f64,
) -> Result<GridSpec, CliError> {
    let d = g.dim();
    let ext = norm.unit_ball_extent(g);
    let mut half: Vec<f64> = (0..d)
        .map(|i| scale.powf(g.weights()[i]) * ext[i])
        .collect();
    let mut counts = vec![n; d];
    half[d - 1] *= 1.25;
    counts[d - 1] = (1.25 * n as f64).round() as usize;
    Ok(GridSpec::centered(&half, &counts)?)
}

/// The annulus family used by the Sobolev, Hardy and level-set scans.
pub fn scan_family(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    n: usize,
    scale: f64,
) -> Result<Vec<SampledFunction>, CliError> {
    let grid = sampling_grid(g, norm, n, scale)?;
    Ok(annulus_family(g, norm, &grid, 0.35 * scale, 0.95 * scale)?)
}

/// `u ↦ u(a ∘ ·)` with `a` two cells along the last axis.
pub fn central_shift(u: &SampledFunction) -> Vec<f64> {
    let d = u.grid.dim();
    let mut a = vec![0.0; d];
    a[d - 1] = 2.0 * u.grid.spacing()[d - 1];
    a
}

fn csv(header: &str, lines: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

fn sobolev_scan(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let fam = scan_family(&ctx.g, ctx.norm, ctx.cfg.n, ctx.cfg.box_half)?;
    let mut ratios = Vec::new();
    for u in fam.iter().take(ctx.cfg.count) {
        let (lp, semi, ratio) = sobolev_ratio(&ctx.g, ctx.norm, &ctx.params, u, &ctx.quad)?;
        let k = ratios.len() as f64;
        ratios.push(ratio);
        out.rows.push(ctx.row(
            "sobolev_ratio",
            Some(k),
            semi,
            lp,
            ratio,
            0.0,
            ratio > 0.0 && ratio.is_finite(),
        ));
        for lambda in [0.5, 2.0] {
            let ul = u.dilated(&ctx.g, lambda)?;
            let (_, _, rl) = sobolev_ratio(&ctx.g, ctx.norm, &ctx.params, &ul, &ctx.quad)?;
            let m = (rl / ratio - 1.0).abs();
            out.rows.push(ctx.row(
                "sobolev_dilation",
                Some(lambda),
                rl,
                ratio,
                m,
                0.03,
                m <= 0.03,
            ));
        }
        let ua = u.left_translated(&ctx.g, &central_shift(u))?;
        let (_, _, ra) = sobolev_ratio(&ctx.g, ctx.norm, &ctx.params, &ua, &ctx.quad)?;
        let m = (ra / ratio - 1.0).abs();
        out.rows.push(ctx.row(
            "sobolev_translation",
            Some(k),
            ra,
            ratio,
            m,
            0.03,
            m <= 0.03,
        ));
    }
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    out.note(format!("family size: {}", ratios.len()));
    out.note(format!("minimum ratio [u]^p / ||u||^p_(p*): {min:?}"));
    out.plots.push((
        "sobolev_ratios.csv".into(),
        csv(
            "x,y",
            ratios.iter().enumerate().map(|(k, r)| format!("{k},{r:?}")),
        ),
    ));
    Ok(out)
}

fn hardy_mu(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let opts = MuOptions {
        sphere_resolution: ctx.cfg.resolution,
        ..MuOptions::for_gauge(ctx.norm)
    };
    let base = default_base_points(&ctx.g, ctx.norm);
    let solver = MuSolver::new(&ctx.g, ctx.norm, &ctx.params, &base, &opts)?;
    let gammas = match ctx.cfg.gamma {
        Some(gm) => vec![gm],
        None => admissible_gamma_grid(&ctx.g, &ctx.params, ctx.cfg.count),
    };
    let table = solver.table(&gammas)?;
    for row in &table.rows {
        let ok = row.mu > 0.0 && row.mu.is_finite();
        out.rows
            .push(ctx.row("hardy_mu", Some(row.gamma), row.mu, 0.0, row.mu, 0.0, ok));
    }
    let (pointwise, averaged) = solver.reflection_defects(&[0.3, 0.5, 0.8])?;
    out.note(format!(
        "anisotropy of L across base points: {:?}",
        table.anisotropy
    ));
    out.note(format!(
        "mu path: {}",
        if table.anisotropy < subfrac::inequality::mu::ISOTROPY_THRESHOLD {
            "scalar (mean L)"
        } else {
            "minimum over base points"
        }
    ));
    out.note(format!(
        "reflection defect: pointwise {pointwise:e}, sphere-averaged {averaged:e}"
    ));
    out.plots.push((
        "mu_curve.csv".into(),
        csv(
            "x,y,mu_mean_l,mu_pointwise_min,mu_pointwise_max",
            table.rows.iter().map(|r| {
                let lo = r.mu_pointwise.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = r
                    .mu_pointwise
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                format!("{:?},{:?},{:?},{lo:?},{hi:?}", r.gamma, r.mu, r.mu_mean_l)
            }),
        ),
    ));
    // With an explicit γ, also check the Hardy inequality on the family.
    if let Some(gm) = ctx.cfg.gamma {
        let mu = table.mu[0];
        let fam = scan_family(&ctx.g, ctx.norm, ctx.cfg.n, ctx.cfg.box_half)?;
        let mut worst = f64::INFINITY;
        for u in &fam {
            let r = hardy_check(&ctx.g, ctx.norm, &ctx.params, gm, mu, u, &ctx.quad)?;
            worst = worst.min(r.margin);
            out.rows.push(ctx.row(
                "hardy_inequality",
                Some(gm),
                r.lhs,
                r.rhs,
                r.margin,
                0.0,
                r.margin >= 0.0,
            ));
        }
        out.note(format!(
            "Hardy inequality with 2 mu = {:?}: minimum margin {worst:?}",
            2.0 * mu
        ));
    }
    Ok(out)
}

fn picone(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let grid = sampling_grid(&ctx.g, ctx.norm, ctx.cfg.n, ctx.cfg.box_half)?;
    let origin = Point::new(vec![0.0; ctx.g.dim()]);
    let mask = ball_mask(&ctx.g, ctx.norm, &grid, &origin, 0.8 * ctx.cfg.box_half);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    for k in 0..ctx.cfg.count {
        let w: Vec<f64> = mask
            .iter()
            .map(|&m| if m { rng.gen_range(0.5..1.5) } else { 1.0 })
            .collect();
        let u: Vec<f64> = mask
            .iter()
            .map(|&m| if m { rng.gen_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let omega = SampledFunction::new(ctx.g.name(), grid.clone(), w)?;
        let u = SampledFunction::new(ctx.g.name(), grid.clone(), u)?;
        let r = picone_check(&ctx.g, ctx.norm, &ctx.params, &omega, &u, &mask, &ctx.quad)?;
        let tol = 1e-10;
        out.rows.push(ctx.row(
            "picone_remainder",
            Some(k as f64),
            r.min_remainder,
            0.0,
            r.min_remainder,
            tol,
            r.min_remainder >= -tol,
        ));
        let gap =
            (r.seminorm_domain - r.weak_domain) / r.seminorm_domain.abs().max(f64::MIN_POSITIVE);
        out.rows.push(ctx.row(
            "picone_integrated",
            Some(k as f64),
            r.weak_domain,
            r.seminorm_domain,
            gap,
            tol,
            gap >= -tol,
        ));
        out.note(format!(
            "instance {k}: {} pairs, min remainder {:e}",
            r.pairs, r.min_remainder
        ));
    }
    Ok(out)
}

fn levelset(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let fam = scan_family(&ctx.g, ctx.norm, ctx.cfg.n, ctx.cfg.box_half)?;
    let mut min_ratio = f64::INFINITY;
    for (k, u) in fam.iter().take(ctx.cfg.count).enumerate() {
        // Amplitudes 5·2^k spread the level sets over several dyadic bands.
        let u = u.map(|v| 5.0 * 2f64.powi(k as i32 % 4) * v)?;
        let b = levelset_lower_bound(&ctx.g, ctx.norm, &ctx.params, &u, &ctx.quad)?;
        min_ratio = min_ratio.min(b.ratio);
        out.rows.push(ctx.row(
            "levelset_ratio",
            Some(k as f64),
            b.seminorm,
            b.s_star,
            b.ratio,
            0.0,
            b.ratio > 0.0 && b.ratio.is_finite(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let t = 2f64.powf(ctx.params.p());
    let mut max_ratio: f64 = 0.0;
    for k in 0..ctx.cfg.count {
        let len = rng.gen_range(3..=12);
        let mut a: Vec<f64> = (0..len).map(|_| rng.gen_range(0.01..1.0)).collect();
        a.sort_by(|x, y| y.total_cmp(x));
        let k0 = rng.gen_range(-5..=5);
        let r = sequence_lemma_check(&a, k0, t, ctx.g.q_dim(), &ctx.params)?;
        max_ratio = max_ratio.max(r.ratio);
        let ok = r.ratio.is_finite() && !r.degenerate;
        out.rows.push(ctx.row(
            "sequence_lemma",
            Some(k as f64),
            r.lhs,
            r.rhs,
            r.ratio,
            0.0,
            ok,
        ));
    }
    out.note(format!("minimum [u]^p / S*: {min_ratio:?}"));
    out.note(format!(
        "maximum sequence-lemma ratio (T = 2^p): {max_ratio:?}"
    ));
    Ok(out)
}

fn lemma_lem1(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let g = &ctx.g;
    let grid = sampling_grid(g, ctx.norm, ctx.cfg.n, ctx.cfg.box_half)?;
    let sphere = build_sphere_quadrature(g, ctx.norm, ctx.cfg.resolution)?;
    let d = g.dim();
    let counts = grid.counts().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut idx = vec![0usize; d];
    for k in 0..ctx.cfg.count {
        // A union of one to four random boxes of cells.
        let mut mask = vec![false; grid.len()];
        let boxes: Vec<Vec<(usize, usize)>> = (0..rng.gen_range(1..=4))
            .map(|_| {
                (0..d)
                    .map(|a| {
                        let len = rng.gen_range(counts[a] / 8..=counts[a] / 3).max(1);
                        let start = rng.gen_range(0..counts[a] - len);
                        (start, start + len)
                    })
                    .collect()
            })
            .collect();
        for (i, m) in mask.iter_mut().enumerate() {
            grid.multi_index(i, &mut idx);
            *m = boxes.iter().any(|b| {
                b.iter()
                    .zip(&idx)
                    .all(|((lo, hi), j)| (*lo..*hi).contains(j))
            });
        }
        let inside: Vec<usize> = (0..grid.len()).filter(|&i| mask[i]).collect();
        let x = Point::new(grid.node(inside[rng.gen_range(0..inside.len())]));
        let r = complement_integral_check(g, ctx.norm, &ctx.params, &grid, &mask, &x, &sphere)?;
        out.rows.push(ctx.row(
            "complement_bound",
            Some(k as f64),
            r.lhs,
            r.floor,
            r.margin,
            0.02,
            r.margin >= -0.02,
        ));
    }
    // Equality case: a quasi-ball around the node nearest the identity.
    let x = Point::new(
        grid.node(
            grid.cell_of(&vec![0.0; d])
                .expect("the box contains the identity"),
        ),
    );
    let delta = 0.5 * ctx.cfg.box_half;
    let mask = ball_mask(g, ctx.norm, &grid, &x, delta);
    let r = complement_integral_check(g, ctx.norm, &ctx.params, &grid, &mask, &x, &sphere)?;
    out.rows.push(ctx.row(
        "complement_equality",
        Some(delta),
        r.lhs,
        r.floor,
        r.margin,
        0.01,
        r.margin.abs() <= 0.01,
    ));
    out.note(format!("explicit constant C = {:?}", r.constant));
    out.note(format!("equality case margin: {:e}", r.margin));
    Ok(out)
}

struct Solved {
    domain: Domain,
    form: NonlocalForm,
    result: EigenResult,
}

fn solve_ball(ctx: &Ctx, radius: f64, weight: bool) -> Result<Solved, CliError> {
    let domain = Domain::ball(&ctx.g, ctx.norm, radius, ctx.cfg.n)?;
    let acfg = AssemblyConfig {
        quad: ctx.quad,
        ..AssemblyConfig::for_group(&ctx.g)
    };
    let mut form = assemble(&domain, &ctx.params, &acfg)?;
    if weight {
        form = form.with_weight(radial_weight(&domain, |r| 1.0 + r * r))?;
    }
    let scfg = SolverConfig {
        seed: ctx.cfg.seed,
        ..SolverConfig::for_exponent(ctx.params.p())
    };
    let result = minimize_rayleigh(&form, &ctx.params, &scfg)?;
    Ok(Solved {
        domain,
        form,
        result,
    })
}

fn record(ctx: &Ctx, hash: &str, k: usize, s: &Solved) -> EigenRecord {
    EigenRecord {
        run_id: format!("{}-{k}", &hash[..12]),
        group: ctx.g.name().into(),
        norm: ctx.norm.id().into(),
        s: ctx.params.s(),
        p: ctx.params.p(),
        radius: s.domain.radius,
        h: s.domain.grid.spacing()[0],
        lambda1: s.result.lambda1,
        residual: s.result.residual,
        iters: s.result.iters,
        config_hash: hash.to_string(),
        version: crate::VERSION.to_string(),
    }
}

fn eigen(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let hash = ctx.cfg.hash();
    let s = solve_ball(ctx, ctx.cfg.radius, false)?;
    let tol = SolverConfig::for_exponent(ctx.params.p()).residual_tol;
    let r = &s.result;
    out.rows.push(ctx.row(
        "eigen_lambda1",
        Some(ctx.cfg.radius),
        r.lambda1,
        r.residual,
        r.residual,
        tol,
        r.residual <= tol,
    ));
    if ctx.params.p() == 2.0 && s.form.len() <= 600 {
        let dense = dense_first_eigenvalue(&s.form)?;
        let m = (r.lambda1 / dense - 1.0).abs();
        out.rows.push(ctx.row(
            "eigen_dense_oracle",
            Some(ctx.cfg.radius),
            r.lambda1,
            dense,
            m,
            1e-8,
            m <= 1e-8,
        ));
    }
    out.note(format!(
        "unknowns: {}, iterations: {}, residual {:e}",
        s.form.len(),
        r.iters,
        r.residual
    ));
    out.note(format!("lambda1 = {:?}", r.lambda1));
    out.eigen.push(record(ctx, &hash, 0, &s));
    Ok(out)
}

fn lyapunov(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let hash = ctx.cfg.hash();
    let (q, sp) = (ctx.g.q_dim(), ctx.params.sp());
    let thetas = match ctx.cfg.theta {
        Some(t) => vec![t],
        None => vec![2.0 * q / sp, 4.0 * q / sp],
    };
    let radii: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|f| f * ctx.cfg.radius).collect();
    let mut plain = Vec::new();
    let mut weighted = Vec::new();
    for (k, &r) in radii.iter().enumerate() {
        let s = solve_ball(ctx, r, false)?;
        out.eigen.push(record(ctx, &hash, k, &s));
        plain.push(s);
        weighted.push(solve_ball(ctx, r, true)?);
    }
    let target = 2f64.powf(-sp);
    for w in plain.windows(2) {
        let ratio = w[1].result.lambda1 / w[0].result.lambda1;
        let m = (ratio / target - 1.0).abs();
        out.rows.push(ctx.row(
            "eigen_scaling",
            Some(w[0].domain.radius),
            ratio,
            target,
            m,
            0.03,
            m <= 0.03,
        ));
    }
    let mut text = String::new();
    for &theta in &thetas {
        for (id, runs) in [("lyapunov", &plain), ("lyapunov_weighted", &weighted)] {
            let mut products = Vec::new();
            for s in runs.iter() {
                let rep = lyapunov_check(&s.domain, &s.form, &ctx.params, theta, &s.result)?;
                products.push(rep.product);
                out.rows.push(ctx.row(
                    &format!("{id}_product"),
                    Some(theta),
                    rep.product,
                    0.0,
                    rep.product,
                    0.0,
                    rep.product > 0.0,
                ));
            }
            let spread = relative_spread(&products);
            let hi = products.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = products.iter().cloned().fold(f64::INFINITY, f64::min);
            out.rows.push(ctx.row(
                &format!("{id}_scaling"),
                Some(theta),
                hi,
                lo,
                spread,
                0.05,
                spread <= 0.05,
            ));
            let _ = writeln!(
                text,
                "{id} theta = {theta:?}: P = {products:?}, spread {spread:e}"
            );
        }
    }
    out.summary.extend(text.lines().map(String::from));
    Ok(out)
}
