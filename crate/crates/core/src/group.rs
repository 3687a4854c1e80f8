//! Concrete homogeneous Lie groups in exponential coordinates.
//!
//! Two laws ship with the crate: the abelian group ℝᴺ with isotropic
//! dilations, and the first Heisenberg group H¹ with coordinates
//! `(x, y, t)`, weights `(1, 1, 2)` and the law
//!
//! ```text
//! (x₁, y₁, t₁) ∘ (x₂, y₂, t₂) = (x₁ + x₂, y₁ + y₂, t₁ + t₂ + (x₁y₂ − y₁x₂)/2)
//! ```
//!
//! Other step-two groups can be plugged in through [`GroupOps`]. Haar
//! measure is Lebesgue measure in these coordinates for every law here.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// Largest topological dimension handled by the stack buffers in hot loops.
pub const MAX_DIM: usize = 8;

/// Extension point for additional group laws.
///
/// Implementors must describe a step-two graded group in exponential
/// coordinates: dilation weights are 1 or 2 and the inverse of `x` is `-x`.
/// Under those conditions the curve `r ↦ x ∘ δ_r y` is a polynomial of
/// degree at most two in `r`, which the exterior-integral code relies on.
pub trait GroupOps: Send + Sync {
    fn name(&self) -> &str;
    fn weights(&self) -> &[f64];
    fn compose_into(&self, a: &[f64], b: &[f64], out: &mut [f64]);
}

#[derive(Clone)]
pub enum GroupLaw {
    Abelian,
    Heisenberg,
    Custom(Arc<dyn GroupOps>),
}

impl fmt::Debug for GroupLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLaw::Abelian => write!(f, "Abelian"),
            GroupLaw::Heisenberg => write!(f, "Heisenberg"),
            GroupLaw::Custom(ops) => write!(f, "Custom({})", ops.name()),
        }
    }
}

/// A concrete homogeneous group: law, dilation weights and homogeneous
/// dimension `Q = Σ vᵢ`.
#[derive(Clone, Debug)]
pub struct GroupDescriptor {
    name: String,
    weights: Vec<f64>,
    homogeneous_dim: f64,
    law: GroupLaw,
}

impl GroupDescriptor {
    pub fn abelian(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return invalid(format!(
                "abelian dimension must be in 1..={MAX_DIM}, got {n}"
            ));
        }
        Ok(Self {
            name: format!("abelian:{n}"),
            weights: vec![1.0; n],
            homogeneous_dim: n as f64,
            law: GroupLaw::Abelian,
        })
    }

    pub fn heisenberg() -> Self {
        Self {
            name: "heisenberg1".into(),
            weights: vec![1.0, 1.0, 2.0],
            homogeneous_dim: 4.0,
            law: GroupLaw::Heisenberg,
        }
    }

    pub fn custom(ops: Arc<dyn GroupOps>) -> Result<Self> {
        let weights = ops.weights().to_vec();
        if weights.is_empty() || weights.len() > MAX_DIM {
            return invalid("custom group dimension out of range");
        }
        if weights.iter().any(|&w| w != 1.0 && w != 2.0) {
            return invalid("custom groups must be step-two (weights 1 or 2)");
        }
        Ok(Self {
            name: ops.name().to_string(),
            homogeneous_dim: weights.iter().sum(),
            weights,
            law: GroupLaw::Custom(ops),
        })
    }

    /// Parses the identifiers used in configs and CLI flags:
    /// `abelian:N` and `heisenberg1`.
    pub fn from_id(id: &str) -> Result<Self> {
        let id = id.trim();
        if id == "heisenberg1" || id == "heisenberg" {
            return Ok(Self::heisenberg());
        }
        if let Some(n) = id.strip_prefix("abelian:") {
            let n: usize = n
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad abelian dimension in '{id}'")))?;
            return Self::abelian(n);
        }
        invalid(format!(
            "unknown group '{id}' (expected abelian:N or heisenberg1)"
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Topological dimension N.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Homogeneous dimension Q.
    pub fn q_dim(&self) -> f64 {
        self.homogeneous_dim
    }

    pub fn law(&self) -> &GroupLaw {
        &self.law
    }

    pub fn identity(&self) -> Point {
        Point(vec![0.0; self.dim()])
    }

    pub fn check_point(&self, a: &Point) -> Result<()> {
        if a.0.len() != self.dim() {
            return invalid(format!(
                "point has {} coordinates, group {} has dimension {}",
                a.0.len(),
                self.name,
                self.dim()
            ));
        }
        if a.0.iter().any(|v| !v.is_finite()) {
            return invalid("point has non-finite coordinates");
        }
        Ok(())
    }

    #[inline]
    pub fn compose_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        match &self.law {
            GroupLaw::Abelian => {
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    *o = x + y;
                }
            }
            GroupLaw::Heisenberg => {
                out[0] = a[0] + b[0];
                out[1] = a[1] + b[1];
                out[2] = a[2] + b[2] + 0.5 * (a[0] * b[1] - a[1] * b[0]);
            }
            GroupLaw::Custom(ops) => ops.compose_into(a, b, out),
        }
    }

    /// Writes `y⁻¹ ∘ x` into `out`; this is the argument of the kernel.
    #[inline]
    pub fn left_quotient_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.law {
            GroupLaw::Abelian => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o = a - b;
                }
            }
            GroupLaw::Heisenberg => {
                out[0] = x[0] - y[0];
                out[1] = x[1] - y[1];
                out[2] = x[2] - y[2] + 0.5 * (x[0] * y[1] - x[1] * y[0]);
            }
            GroupLaw::Custom(ops) => {
                let n = self.dim();
                let mut neg = [0.0; MAX_DIM];
                for i in 0..n {
                    neg[i] = -y[i];
                }
                ops.compose_into(&neg[..n], x, out);
            }
        }
    }

    #[inline]
    pub fn dilate_into(&self, lambda: f64, a: &[f64], out: &mut [f64]) {
        for ((o, x), w) in out.iter_mut().zip(a).zip(&self.weights) {
            *o = if *w == 1.0 {
                lambda * x
            } else if *w == 2.0 {
                lambda * lambda * x
            } else {
                lambda.powf(*w) * x
            };
        }
    }

    /// Coefficients `(c₀, c₁, c₂)` per coordinate of the curve
    /// `r ↦ x ∘ δ_r y`, exact for step-two groups.
    pub fn ray_coefficients(&self, x: &[f64], y: &[f64]) -> [[f64; 3]; MAX_DIM] {
        let n = self.dim();
        let mut coeffs = [[0.0; 3]; MAX_DIM];
        match &self.law {
            GroupLaw::Abelian => {
                for i in 0..n {
                    coeffs[i] = [x[i], y[i], 0.0];
                }
            }
            GroupLaw::Heisenberg => {
                coeffs[0] = [x[0], y[0], 0.0];
                coeffs[1] = [x[1], y[1], 0.0];
                coeffs[2] = [x[2], 0.5 * (x[0] * y[1] - x[1] * y[0]), y[2]];
            }
            GroupLaw::Custom(_) => {
                // Fit through r = 0, 1, 2.
                let mut d = [0.0; MAX_DIM];
                let mut c1 = [0.0; MAX_DIM];
                let mut c2 = [0.0; MAX_DIM];
                self.compose_into(x, y, &mut c1[..n]);
                self.dilate_into(2.0, y, &mut d[..n]);
                self.compose_into(x, &d[..n], &mut c2[..n]);
                for i in 0..n {
                    let f0 = x[i];
                    let f1 = c1[i];
                    let f2 = c2[i];
                    let a2 = 0.5 * (f2 - 2.0 * f1 + f0);
                    let a1 = f1 - f0 - a2;
                    coeffs[i] = [f0, a1, a2];
                }
            }
        }
        coeffs
    }
}

/// A point of the group in exponential coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Point(coords.into())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Point(v.to_vec())
    }
}

/// Homogeneous quasi-norms shipped with the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuasiNorm {
    /// `|x|`, abelian groups only.
    Euclidean,
    /// `((x² + y²)² + 16 t²)^{1/4}`, Heisenberg only.
    Koranyi,
    /// `maxᵢ |xᵢ|^{1/vᵢ}`, any group.
    WeightedMax,
}

impl QuasiNorm {
    pub fn from_id(id: &str) -> Result<Self> {
        match id.trim() {
            "euclidean" => Ok(QuasiNorm::Euclidean),
            "koranyi" => Ok(QuasiNorm::Koranyi),
            "wmax" | "weighted_max" => Ok(QuasiNorm::WeightedMax),
            other => invalid(format!(
                "unknown quasi-norm '{other}' (expected euclidean, koranyi or wmax)"
            )),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            QuasiNorm::Euclidean => "euclidean",
            QuasiNorm::Koranyi => "koranyi",
            QuasiNorm::WeightedMax => "wmax",
        }
    }

    pub fn check_compatible(&self, g: &GroupDescriptor) -> Result<()> {
        let ok = match (self, g.law()) {
            (QuasiNorm::Euclidean, GroupLaw::Abelian) => true,
            (QuasiNorm::Koranyi, GroupLaw::Heisenberg) => true,
            (QuasiNorm::WeightedMax, _) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!(
                "quasi-norm {} is not defined on {}",
                self.id(),
                g.name()
            ))
        }
    }

    #[inline]
    pub fn eval(&self, g: &GroupDescriptor, z: &[f64]) -> f64 {
        match self {
            QuasiNorm::Euclidean => z.iter().map(|v| v * v).sum::<f64>().sqrt(),
            QuasiNorm::Koranyi => {
                let h = z[0] * z[0] + z[1] * z[1];
                (h * h + 16.0 * z[2] * z[2]).sqrt().sqrt()
            }
            QuasiNorm::WeightedMax => weighted_max(g.weights(), z),
        }
    }

    /// `q(z)^e`, avoiding the intermediate root where the norm allows it.
    #[inline]
    pub fn eval_pow(&self, g: &GroupDescriptor, z: &[f64], e: f64) -> f64 {
        match self {
            QuasiNorm::Euclidean => z.iter().map(|v| v * v).sum::<f64>().powf(0.5 * e),
            QuasiNorm::Koranyi => {
                let h = z[0] * z[0] + z[1] * z[1];
                (h * h + 16.0 * z[2] * z[2]).powf(0.25 * e)
            }
            QuasiNorm::WeightedMax => weighted_max(g.weights(), z).powf(e),
        }
    }

    /// `max{|zᵢ| : q(z) ≤ 1}` per coordinate: the half-widths of the
    /// smallest coordinate box containing the unit ball.
    pub fn unit_ball_extent(&self, g: &GroupDescriptor) -> Vec<f64> {
        match self {
            QuasiNorm::Koranyi => vec![1.0, 1.0, 0.25],
            _ => vec![1.0; g.dim()],
        }
    }
}

#[inline]
fn weighted_max(weights: &[f64], z: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for (x, w) in z.iter().zip(weights) {
        let a = x.abs();
        let v = if *w == 1.0 {
            a
        } else if *w == 2.0 {
            a.sqrt()
        } else {
            a.powf(1.0 / w)
        };
        m = m.max(v);
    }
    m
}

pub fn compose(g: &GroupDescriptor, a: &Point, b: &Point) -> Result<Point> {
    g.check_point(a)?;
    g.check_point(b)?;
    let mut out = vec![0.0; g.dim()];
    g.compose_into(&a.0, &b.0, &mut out);
    Ok(Point(out))
}

/// Inverse in exponential coordinates is coordinate negation for every
/// supported law.
pub fn inverse(g: &GroupDescriptor, a: &Point) -> Result<Point> {
    g.check_point(a)?;
    Ok(Point(a.0.iter().map(|v| -v).collect()))
}

pub fn dilate(g: &GroupDescriptor, lambda: f64, a: &Point) -> Result<Point> {
    g.check_point(a)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return invalid(format!("dilation factor must be positive, got {lambda}"));
    }
    let mut out = vec![0.0; g.dim()];
    g.dilate_into(lambda, &a.0, &mut out);
    Ok(Point(out))
}

pub fn quasi_norm(g: &GroupDescriptor, norm: QuasiNorm, a: &Point) -> Result<f64> {
    norm.check_compatible(g)?;
    g.check_point(a)?;
    Ok(norm.eval(g, &a.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
    }

    #[test]
    fn heisenberg_law_examples() {
        let h = GroupDescriptor::heisenberg();
        let c = compose(
            &h,
            &Point::new([1.0, 0.0, 0.0]),
            &Point::new([0.0, 1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(c.0, vec![1.0, 1.0, 0.5]);
        let inv = inverse(&h, &c).unwrap();
        assert_eq!(inv.0, vec![-1.0, -1.0, -0.5]);
        let e = compose(&h, &c, &inv).unwrap();
        assert!(e.0.iter().all(|v| v.abs() <= 1e-15));
    }

    #[test]
    fn abelian_law_examples() {
        let g = GroupDescriptor::abelian(2).unwrap();
        let c = compose(&g, &Point::new([1.0, 2.0]), &Point::new([3.0, 4.0])).unwrap();
        assert_eq!(c.0, vec![4.0, 6.0]);
        assert_eq!(
            inverse(&g, &Point::new([3.0, -4.0])).unwrap().0,
            vec![-3.0, 4.0]
        );
        assert_eq!(inverse(&g, &g.identity()).unwrap().0, vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let h = GroupDescriptor::heisenberg();
        assert!(compose(&h, &Point::new([1.0, 0.0]), &Point::new([0.0, 1.0, 0.0])).is_err());
        assert!(inverse(&h, &Point::new([1.0])).is_err());
    }

    #[test]
    fn dilation_examples() {
        let h = GroupDescriptor::heisenberg();
        let a = Point::new([1.0, 1.0, 1.0]);
        assert_eq!(dilate(&h, 2.0, &a).unwrap().0, vec![2.0, 2.0, 4.0]);
        assert_eq!(dilate(&h, 1.0, &a).unwrap(), a);
        assert!(dilate(&h, 0.0, &a).is_err());
        assert!(dilate(&h, -1.0, &a).is_err());
    }

    #[test]
    fn koranyi_examples() {
        let h = GroupDescriptor::heisenberg();
        let q = |v: [f64; 3]| quasi_norm(&h, QuasiNorm::Koranyi, &Point::new(v)).unwrap();
        assert_eq!(q([0.0, 0.0, 0.0]), 0.0);
        assert!((q([1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((q([0.0, 0.0, 1.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn incompatible_norms_are_rejected() {
        let h = GroupDescriptor::heisenberg();
        let a = GroupDescriptor::abelian(3).unwrap();
        assert!(quasi_norm(&h, QuasiNorm::Euclidean, &Point::new([1.0, 0.0, 0.0])).is_err());
        assert!(quasi_norm(&a, QuasiNorm::Koranyi, &Point::new([1.0, 0.0, 0.0])).is_err());
        assert!(quasi_norm(&a, QuasiNorm::WeightedMax, &Point::new([1.0, 0.0, 0.0])).is_ok());
    }

    #[test]
    fn identifiers_parse() {
        assert_eq!(GroupDescriptor::from_id("abelian:3").unwrap().q_dim(), 3.0);
        assert_eq!(
            GroupDescriptor::from_id("heisenberg1").unwrap().q_dim(),
            4.0
        );
        assert!(GroupDescriptor::from_id("abelian:x").is_err());
        assert!(GroupDescriptor::from_id("sl2").is_err());
        assert_eq!(QuasiNorm::from_id("wmax").unwrap(), QuasiNorm::WeightedMax);
        assert!(QuasiNorm::from_id("l1").is_err());
    }

    struct Heis2;
    impl GroupOps for Heis2 {
        fn name(&self) -> &str {
            "custom-heisenberg"
        }
        fn weights(&self) -> &[f64] {
            &[1.0, 1.0, 2.0]
        }
        fn compose_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
            GroupDescriptor::heisenberg().compose_into(a, b, out)
        }
    }

    #[test]
    fn custom_law_matches_builtin_rays() {
        let c = GroupDescriptor::custom(Arc::new(Heis2)).unwrap();
        let h = GroupDescriptor::heisenberg();
        let x = [0.3, -0.7, 0.2];
        let y = [0.5, 0.1, -0.9];
        let rc = c.ray_coefficients(&x, &y);
        let rh = h.ray_coefficients(&x, &y);
        for i in 0..3 {
            assert!(close(&rc[i], &rh[i], 1e-14));
        }
        let mut o1 = [0.0; 3];
        let mut o2 = [0.0; 3];
        c.left_quotient_into(&x, &y, &mut o1);
        h.left_quotient_into(&x, &y, &mut o2);
        assert!(close(&o1, &o2, 1e-15));
    }

    fn groups() -> Vec<GroupDescriptor> {
        vec![
            GroupDescriptor::abelian(1).unwrap(),
            GroupDescriptor::abelian(2).unwrap(),
            GroupDescriptor::abelian(3).unwrap(),
            GroupDescriptor::heisenberg(),
        ]
    }

    proptest! {
        #[test]
        fn inverse_and_associativity(a in prop::array::uniform3(-5.0f64..5.0),
                                     b in prop::array::uniform3(-5.0f64..5.0),
                                     c in prop::array::uniform3(-5.0f64..5.0)) {
            for g in groups() {
                let n = g.dim();
                let (pa, pb, pc) = (Point::new(&a[..n]), Point::new(&b[..n]), Point::new(&c[..n]));
                let e = compose(&g, &pa, &inverse(&g, &pa).unwrap()).unwrap();
                prop_assert!(e.0.iter().all(|v| v.abs() <= 1e-12));
                let l = compose(&g, &compose(&g, &pa, &pb).unwrap(), &pc).unwrap();
                let r = compose(&g, &pa, &compose(&g, &pb, &pc).unwrap()).unwrap();
                prop_assert!(close(&l.0, &r.0, 1e-12));
            }
        }

        #[test]
        fn dilation_is_an_automorphism(a in prop::array::uniform3(-5.0f64..5.0),
                                       b in prop::array::uniform3(-5.0f64..5.0),
                                       lam in 0.05f64..20.0, mu in 0.05f64..20.0) {
            for g in groups() {
                let n = g.dim();
                let (pa, pb) = (Point::new(&a[..n]), Point::new(&b[..n]));
                let lhs = dilate(&g, lam, &compose(&g, &pa, &pb).unwrap()).unwrap();
                let rhs = compose(&g, &dilate(&g, lam, &pa).unwrap(), &dilate(&g, lam, &pb).unwrap()).unwrap();
                prop_assert!(close(&lhs.0, &rhs.0, 1e-12));
                let twice = dilate(&g, lam, &dilate(&g, mu, &pa).unwrap()).unwrap();
                let once = dilate(&g, lam * mu, &pa).unwrap();
                prop_assert!(close(&twice.0, &once.0, 1e-12));
            }
        }

        #[test]
        fn ray_coefficients_reproduce_the_curve(x in prop::array::uniform3(-3.0f64..3.0),
                                                y in prop::array::uniform3(-3.0f64..3.0),
                                                r in 0.0f64..5.0) {
            for g in groups() {
                let n = g.dim();
                let c = g.ray_coefficients(&x[..n], &y[..n]);
                let mut d = [0.0; 3];
                let mut o = [0.0; 3];
                g.dilate_into(r, &y[..n], &mut d[..n]);
                g.compose_into(&x[..n], &d[..n], &mut o[..n]);
                for i in 0..n {
                    let v = c[i][0] + r * (c[i][1] + r * c[i][2]);
                    prop_assert!((v - o[i]).abs() <= 1e-12 * (1.0 + v.abs()));
                }
            }
        }
    }
}
