//! One- and two-dimensional quadrature building blocks.
//!
//! Gauss–Legendre rules for fixed product lattices, and globally adaptive
//! Gauss–Kronrod (7/15) integration in one dimension and as a tensor rule
//! on rectangles. The adaptive routines bisect the interval (or cell) with
//! the largest error estimate until the total estimate meets the tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// The 15 Kronrod abscissae on [-1, 1] with Kronrod and embedded Gauss
/// weights (zero where the node is Kronrod-only).
fn kronrod_table() -> ([f64; 15], [f64; 15], [f64; 15]) {
    let mut x = [0.0; 15];
    let mut wk = [0.0; 15];
    let mut wg = [0.0; 15];
    for j in 0..7 {
        x[j] = -XGK[j];
        x[14 - j] = XGK[j];
        wk[j] = WGK[j];
        wk[14 - j] = WGK[j];
        if j % 2 == 1 {
            wg[j] = WG[j / 2];
            wg[14 - j] = WG[j / 2];
        }
    }
    x[7] = 0.0;
    wk[7] = WGK[7];
    wg[7] = WG[3];
    (x, wk, wg)
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * half, ((rk - rg) * half).abs())
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for AdaptiveOpts {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive G7/K15 integration of `f` over the partition given by
/// `breakpoints` (sorted, at least two entries).
pub fn adaptive_gk15<F: FnMut(f64) -> f64>(
    mut f: F,
    breakpoints: &[f64],
    opts: &AdaptiveOpts,
) -> Result<QuadResult> {
    if breakpoints.len() < 2 {
        return Err(Error::InvalidInput("need at least two breakpoints".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    let mut total = 0.0;
    let mut err = 0.0;
    for w in breakpoints.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        evaluations += 15;
        total += v;
        err += e;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    let mut splits = 0;
    while err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if splits >= opts.max_subdivisions {
            return Err(Error::Quadrature(format!(
                "error estimate {err:e} above tolerance after {splits} subdivisions"
            )));
        }
        let seg = heap.pop().expect("heap never empties");
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            // Interval exhausted at machine resolution; accept what we have.
            heap.push(seg);
            break;
        }
        let (v1, e1) = gk15(&mut f, seg.a, mid);
        let (v2, e2) = gk15(&mut f, mid, seg.b);
        evaluations += 30;
        total += v1 + v2 - seg.value;
        err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
        splits += 1;
    }
    // Re-sum to shed the drift of the running totals.
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    if !value.is_finite() {
        return Err(Error::Quadrature("non-finite integrand".into()));
    }
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

struct Cell {
    tag: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    value: f64,
    error: f64,
    /// Axis whose Gauss/Kronrod discrepancy dominates.
    axis: usize,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

/// Tensor K15×K15 value, error estimate `|KK − GG|`, and the axis whose
/// one-sided discrepancy (`|KK − GK|` vs `|KK − KG|`) is larger.
fn tensor_gk<F: FnMut(usize, f64, f64) -> f64>(
    f: &mut F,
    tag: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    table: &([f64; 15], [f64; 15], [f64; 15]),
) -> (f64, f64, usize) {
    let (x, wk, wg) = table;
    let h0 = 0.5 * (hi[0] - lo[0]);
    let h1 = 0.5 * (hi[1] - lo[1]);
    let m0 = 0.5 * (hi[0] + lo[0]);
    let m1 = 0.5 * (hi[1] + lo[1]);
    let (mut kk, mut gg, mut gk, mut kg) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..15 {
        let u = m0 + h0 * x[i];
        let mut rk = 0.0;
        let mut rg = 0.0;
        for j in 0..15 {
            let v = f(tag, u, m1 + h1 * x[j]);
            rk += wk[j] * v;
            rg += wg[j] * v;
        }
        kk += wk[i] * rk;
        gg += wg[i] * rg;
        gk += wg[i] * rk;
        kg += wk[i] * rg;
    }
    let scale = h0 * h1;
    let axis = if (kk - gk).abs() >= (kk - kg).abs() {
        0
    } else {
        1
    };
    (kk * scale, ((kk - gg) * scale).abs(), axis)
}

/// Globally adaptive tensor Gauss–Kronrod cubature over a rectangle that is
/// pre-split into `splits[0] × splits[1]` equal cells.
pub fn adaptive_cubature_2d<F: FnMut(f64, f64) -> f64>(
    f: F,
    lo: [f64; 2],
    hi: [f64; 2],
    splits: [usize; 2],
    opts: &AdaptiveOpts,
) -> Result<QuadResult> {
    let d0 = (hi[0] - lo[0]) / splits[0] as f64;
    let d1 = (hi[1] - lo[1]) / splits[1] as f64;
    let mut cells = Vec::with_capacity(splits[0] * splits[1]);
    for i in 0..splits[0] {
        for j in 0..splits[1] {
            let clo = [lo[0] + d0 * i as f64, lo[1] + d1 * j as f64];
            cells.push(Rect {
                tag: 0,
                lo: clo,
                hi: [clo[0] + d0, clo[1] + d1],
            });
        }
    }
    let mut f = f;
    adaptive_cubature_cells(|_, x, y| f(x, y), &cells, opts)
}

/// An axis-aligned integration cell. The tag is passed back to the
/// integrand so one adaptive run can cover several chart patches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub tag: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

/// Globally adaptive tensor Gauss–Kronrod cubature over a union of
/// rectangles. The cell with the largest error is bisected along the axis
/// carrying most of that error, which lets anisotropic peaks be resolved
/// with elongated cells.
pub fn adaptive_cubature_cells<F: FnMut(usize, f64, f64) -> f64>(
    mut f: F,
    cells: &[Rect],
    opts: &AdaptiveOpts,
) -> Result<QuadResult> {
    if cells.is_empty() {
        return Err(Error::InvalidInput("no cells to integrate over".into()));
    }
    let table = kronrod_table();
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut err = 0.0;
    let mut evaluations = 0;
    for c in cells {
        let (v, e, axis) = tensor_gk(&mut f, c.tag, c.lo, c.hi, &table);
        evaluations += 225;
        total += v;
        err += e;
        heap.push(Cell {
            tag: c.tag,
            lo: c.lo,
            hi: c.hi,
            value: v,
            error: e,
            axis,
        });
    }
    let mut refinements = 0;
    while err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if refinements >= opts.max_subdivisions {
            return Err(Error::Quadrature(format!(
                "cubature error {err:e} above tolerance after {refinements} refinements"
            )));
        }
        let cell = heap.pop().expect("heap never empties");
        let axis = cell.axis;
        let mid = 0.5 * (cell.lo[axis] + cell.hi[axis]);
        if !(mid > cell.lo[axis] && mid < cell.hi[axis]) {
            heap.push(cell);
            break;
        }
        let mut hi_a = cell.hi;
        hi_a[axis] = mid;
        let mut lo_b = cell.lo;
        lo_b[axis] = mid;
        let (v1, e1, a1) = tensor_gk(&mut f, cell.tag, cell.lo, hi_a, &table);
        let (v2, e2, a2) = tensor_gk(&mut f, cell.tag, lo_b, cell.hi, &table);
        evaluations += 450;
        total += v1 + v2 - cell.value;
        err += e1 + e2 - cell.error;
        heap.push(Cell {
            tag: cell.tag,
            lo: cell.lo,
            hi: hi_a,
            value: v1,
            error: e1,
            axis: a1,
        });
        heap.push(Cell {
            tag: cell.tag,
            lo: lo_b,
            hi: cell.hi,
            value: v2,
            error: e2,
            axis: a2,
        });
        refinements += 1;
    }
    let value: f64 = heap.iter().map(|c| c.value).sum();
    let error: f64 = heap.iter().map(|c| c.error).sum();
    if !value.is_finite() {
        return Err(Error::Quadrature("non-finite integrand".into()));
    }
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}
