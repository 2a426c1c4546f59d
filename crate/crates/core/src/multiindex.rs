//! Multi-indices and the ordered derivative basis.
//!
//! A [`MultiIndex`] labels both a mixed partial derivative `D^α` and a monomial
//! `x^α`. A [`DerivativeBasis`] is the full set of multi-indices whose order lies
//! in `[min_order, max_order]`, laid out graded-lexicographically: ascending
//! order, and within one order descending in the first entry, then the second,
//! and so on. For `n = 2`, orders `1..=2` this gives
//! `(1,0), (0,1), (2,0), (1,1), (0,2)`.

use std::fmt;
use std::ops::{Add, Range};

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        if entries.is_empty() {
            return Err(param("multi-index needs at least one entry"));
        }
        Ok(Self(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n.max(1)])
    }

    /// Unit multi-index `e_k` in `n` dimensions.
    pub fn unit(n: usize, k: usize) -> Self {
        let mut e = vec![0; n];
        e[k] = 1;
        Self(e)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|α| = Σ α_i`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `α! = Π α_i!`, always at least one.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&k| factorial(k)).product()
    }

    /// `kα`, entrywise.
    pub fn scaled(&self, k: u32) -> MultiIndex {
        Self(self.0.iter().map(|e| e * k).collect())
    }

    /// `x^α = Π x_i^{α_i}` with `0^0 = 1`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.0.len());
        self.0
            .iter()
            .zip(x)
            .map(|(&k, &xi)| powu(xi, k))
            .product()
    }
}

impl Add for &MultiIndex {
    type Output = MultiIndex;

    fn add(self, rhs: &MultiIndex) -> MultiIndex {
        assert_eq!(self.dim(), rhs.dim(), "multi-index dimension mismatch");
        MultiIndex(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Integer power with `0^0 = 1`.
pub(crate) fn powu(x: f64, k: u32) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(k as i32),
    }
}

/// Checked `x^α` for callers holding plain slices.
pub fn monomial_power(x: &[f64], alpha: &MultiIndex) -> Result<f64> {
    if x.len() != alpha.dim() {
        return Err(Error::DimensionMismatch {
            expected: alpha.dim(),
            got: x.len(),
        });
    }
    Ok(alpha.monomial(x))
}

/// Number of distinct `k`-th order partial derivatives in `n` variables,
/// `binom(n + k - 1, k)`.
pub fn count_derivatives(n: usize, k: usize) -> u64 {
    if n == 0 {
        return u64::from(k == 0);
    }
    // binom(n + k - 1, k) computed incrementally; each partial product is itself a binomial
    let mut c: u64 = 1;
    for i in 1..=k as u64 {
        c = c * (n as u64 - 1 + i) / i;
    }
    c
}

/// The ordered set of multi-indices with `min_order <= |α| <= max_order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivativeBasis {
    dim: usize,
    min_order: u32,
    max_order: u32,
    indices: Vec<MultiIndex>,
}

impl DerivativeBasis {
    pub fn enumerate(n: usize, min_order: u32, max_order: u32) -> Result<Self> {
        if n == 0 {
            return Err(param("basis dimension must be at least 1"));
        }
        if min_order > max_order {
            return Err(param(format!(
                "min order {min_order} exceeds max order {max_order}"
            )));
        }
        let mut indices = Vec::new();
        for k in min_order..=max_order {
            let mut buf = vec![0u32; n];
            push_order(&mut indices, &mut buf, 0, k);
        }
        Ok(Self {
            dim: n,
            min_order,
            max_order,
            indices,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min_order(&self) -> u32 {
        self.min_order
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    /// Total number of components `o`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        if alpha.dim() != self.dim {
            return None;
        }
        let k = alpha.order();
        if k < self.min_order || k > self.max_order {
            return None;
        }
        let block = self.order_range(k);
        self.indices[block.clone()]
            .iter()
            .position(|b| b == alpha)
            .map(|p| block.start + p)
    }

    /// Index range of the order-`k` block; empty when `k` is outside the basis.
    pub fn order_range(&self, k: u32) -> Range<usize> {
        if k < self.min_order || k > self.max_order {
            return 0..0;
        }
        let start: u64 = (self.min_order..k)
            .map(|j| count_derivatives(self.dim, j as usize))
            .sum();
        let len = count_derivatives(self.dim, k as usize);
        start as usize..(start + len) as usize
    }

    /// Evaluate every basis monomial at `x` into `out`.
    pub fn monomials_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, alpha) in out.iter_mut().zip(&self.indices) {
            *o = alpha.monomial(x);
        }
    }
}

impl<'a> IntoIterator for &'a DerivativeBasis {
    type Item = &'a MultiIndex;
    type IntoIter = std::slice::Iter<'a, MultiIndex>;

    fn into_iter(self) -> Self::IntoIter {
        self.indices.iter()
    }
}

// Fill buf[pos..] with every composition of `remaining`, largest leading entry first.
fn push_order(out: &mut Vec<MultiIndex>, buf: &mut [u32], pos: usize, remaining: u32) {
    if pos == buf.len() - 1 {
        buf[pos] = remaining;
        out.push(MultiIndex(buf.to_vec()));
        return;
    }
    for v in (0..=remaining).rev() {
        buf[pos] = v;
        push_order(out, buf, pos + 1, remaining - v);
    }
    buf[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Brute force: every tuple in [0, m]^n, filtered by order.
    fn brute_force(n: usize, m0: u32, m: u32) -> Vec<Vec<u32>> {
        let mut all = Vec::new();
        let total = (m as usize + 1).pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let mut t = Vec::with_capacity(n);
            for _ in 0..n {
                t.push((c % (m as usize + 1)) as u32);
                c /= m as usize + 1;
            }
            let ord: u32 = t.iter().sum();
            if ord >= m0 && ord <= m {
                all.push(t);
            }
        }
        all
    }

    #[test]
    fn two_dim_gradient_hessian_layout() {
        let b = DerivativeBasis::enumerate(2, 1, 2).unwrap();
        let got: Vec<Vec<u32>> = b.iter().map(|a| a.entries().to_vec()).collect();
        assert_eq!(
            got,
            vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn zeroth_order_only() {
        let b = DerivativeBasis::enumerate(1, 0, 0).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.get(0).entries(), &[0]);
    }

    #[test]
    fn three_dim_count_matches_brute_force() {
        let b = DerivativeBasis::enumerate(3, 1, 2).unwrap();
        assert_eq!(brute_force(3, 1, 2).len(), 9);
        assert_eq!(b.len(), 9);
    }

    #[test]
    fn inverted_bounds_rejected() {
        assert!(matches!(
            DerivativeBasis::enumerate(2, 3, 2),
            Err(Error::Parameter(_))
        ));
        assert!(DerivativeBasis::enumerate(0, 0, 1).is_err());
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_derivatives(2, 2), 3);
        assert_eq!(count_derivatives(7, 0), 1);
        let brute = brute_force(4, 3, 3).len() as u64;
        assert_eq!(brute, 20);
        assert_eq!(count_derivatives(4, 3), 20);
    }

    #[test]
    fn monomial_examples() {
        let a = MultiIndex::new(vec![1, 2]).unwrap();
        assert_eq!(monomial_power(&[2.0, 3.0], &a).unwrap(), 18.0);
        let z = MultiIndex::zeros(3);
        assert_eq!(monomial_power(&[0.0, -4.0, 9.0], &z).unwrap(), 1.0);
        let b = MultiIndex::new(vec![2, 3]).unwrap();
        assert_eq!(monomial_power(&[0.5, -1.0], &b).unwrap(), -0.25);
        assert!(matches!(
            monomial_power(&[1.0], &b),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn factorial_and_order() {
        let a = MultiIndex::new(vec![3, 0, 2]).unwrap();
        assert_eq!(a.order(), 5);
        assert_eq!(a.factorial(), 12.0);
        assert_eq!(MultiIndex::zeros(2).factorial(), 1.0);
    }

    #[test]
    fn position_and_blocks() {
        let b = DerivativeBasis::enumerate(3, 0, 3).unwrap();
        for (i, a) in b.iter().enumerate() {
            assert_eq!(b.position(a), Some(i));
        }
        assert_eq!(b.order_range(0), 0..1);
        assert_eq!(b.order_range(2), 4..10);
        assert_eq!(b.order_range(5), 0..0);
    }

    #[test]
    fn counts_agree_for_small_ranges() {
        for n in 1..=5usize {
            for m in 0..=4u32 {
                for m0 in 0..=m {
                    let b = DerivativeBasis::enumerate(n, m0, m).unwrap();
                    let expect: u64 = (m0..=m).map(|k| count_derivatives(n, k as usize)).sum();
                    assert_eq!(b.len() as u64, expect);
                    let mut brute = brute_force(n, m0, m);
                    let mut got: Vec<Vec<u32>> = b.iter().map(|a| a.entries().to_vec()).collect();
                    assert_eq!(b, DerivativeBasis::enumerate(n, m0, m).unwrap());
                    brute.sort();
                    got.sort();
                    assert_eq!(got, brute);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn monomials_multiply(
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            a in proptest::collection::vec(0u32..4, 3),
            b in proptest::collection::vec(0u32..4, 3),
        ) {
            let a = MultiIndex::new(a).unwrap();
            let b = MultiIndex::new(b).unwrap();
            let lhs = a.monomial(&x) * b.monomial(&x);
            let rhs = (&a + &b).monomial(&x);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }
    }
}
