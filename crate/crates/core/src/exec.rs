//! Row-wise map/reduce used by every double sum.
//!
//! Work is split by outer (row) index. In ordered mode each row partial is
//! computed independently and the partials are summed sequentially in
//! index order, so the result is bit-identical whether rows ran on one
//! thread or many. Unordered mode lets rayon combine partials in whatever
//! tree it likes; it is only for benchmarking.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Ordered,
    Unordered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Exec {
    pub parallel: bool,
    pub reduction: Reduction,
}

impl Default for Exec {
    fn default() -> Self {
        Self {
            parallel: cfg!(feature = "parallel"),
            reduction: Reduction::Ordered,
        }
    }
}

impl Exec {
    pub fn sequential() -> Self {
        Self {
            parallel: false,
            reduction: Reduction::Ordered,
        }
    }

    pub fn parallel() -> Self {
        Self {
            parallel: true,
            reduction: Reduction::Ordered,
        }
    }

    /// `f(0), …, f(n−1)` in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// `Σ f(i)` over `0..n`.
    pub fn sum<F>(&self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.parallel && self.reduction == Reduction::Unordered {
            return (0..n).into_par_iter().map(f).sum();
        }
        self.map(n, f).iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_reduction_is_bit_identical() {
        let f = |i: usize| 1.0 / (1.0 + i as f64).powf(1.3) * if i % 3 == 0 { -1.0 } else { 1.0 };
        let a = Exec::sequential().sum(100_000, f);
        let b = Exec::parallel().sum(100_000, f);
        assert_eq!(a.to_bits(), b.to_bits());
        let c = Exec {
            parallel: true,
            reduction: Reduction::Unordered,
        }
        .sum(100_000, f);
        assert!((a - c).abs() < 1e-12);
    }
}
