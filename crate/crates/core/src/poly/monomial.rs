use alloc::vec::Vec;
use core::cmp::Ordering;

use super::VarId;

/// A power product of variables, stored sparsely as `(var, exponent)` pairs
/// sorted by variable index with no zero exponents.
///
/// The total order is graded-lexicographic: lower total degree first, and
/// within a degree the monomial with the larger exponent on the
/// lowest-indexed variable first. Ascending iteration over `(x, y)` therefore
/// yields `1, x, y, x^2, x*y, y^2, ...`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Monomial {
    exps: Vec<(u32, u32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial { exps: Vec::new() }
    }

    pub fn var(v: VarId) -> Self {
        Monomial {
            exps: alloc::vec![(v.0, 1)],
        }
    }

    /// Builds a monomial from arbitrary `(var, exponent)` pairs, merging
    /// duplicates and dropping zero exponents.
    pub fn from_pairs(pairs: &[(VarId, u32)]) -> Self {
        let mut exps: Vec<(u32, u32)> = pairs
            .iter()
            .filter(|(_, e)| *e > 0)
            .map(|(v, e)| (v.0, *e))
            .collect();
        exps.sort_unstable_by_key(|p| p.0);
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(exps.len());
        for (v, e) in exps {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += e,
                _ => merged.push((v, e)),
            }
        }
        Monomial { exps: merged }
    }

    pub fn is_one(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|p| p.1).sum()
    }

    pub fn exponent(&self, v: VarId) -> u32 {
        self.exps
            .binary_search_by_key(&v.0, |p| p.0)
            .map(|i| self.exps[i].1)
            .unwrap_or(0)
    }

    /// `(variable, exponent)` pairs in increasing variable order.
    pub fn powers(&self) -> impl Iterator<Item = (VarId, u32)> + '_ {
        self.exps.iter().map(|&(v, e)| (VarId(v), e))
    }

    pub fn max_var_index(&self) -> Option<u32> {
        self.exps.last().map(|p| p.0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.exps, &other.exps);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial { exps: out }
    }

    /// Partial derivative: `Some((factor, monomial))` or `None` when the
    /// variable does not occur.
    pub fn derivative(&self, v: VarId) -> Option<(u32, Monomial)> {
        let pos = self.exps.binary_search_by_key(&v.0, |p| p.0).ok()?;
        let e = self.exps[pos].1;
        let mut exps = self.exps.clone();
        if e == 1 {
            exps.remove(pos);
        } else {
            exps[pos].1 = e - 1;
        }
        Some((e, Monomial { exps }))
    }

    /// Evaluates at a dense point indexed by variable index.
    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut acc = 1.0;
        for &(v, e) in &self.exps {
            acc *= powi(point[v as usize], e);
        }
        acc
    }

    /// True if every variable of the monomial is in the (sorted) index set.
    pub fn supported_by(&self, vars: &[VarId]) -> bool {
        self.exps
            .iter()
            .all(|&(v, _)| vars.binary_search(&VarId(v)).is_ok())
    }
}

pub(crate) fn powi(x: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        3 => x * x * x,
        _ => {
            let mut acc = 1.0;
            let mut base = x;
            let mut n = e;
            while n > 0 {
                if n & 1 == 1 {
                    acc *= base;
                }
                base *= base;
                n >>= 1;
            }
            acc
        }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        let d = self.degree().cmp(&other.degree());
        if d != Ordering::Equal {
            return d;
        }
        for (a, b) in self.exps.iter().zip(other.exps.iter()) {
            if a.0 != b.0 {
                // `self` carries a lower-indexed variable that `other` lacks.
                return if a.0 < b.0 {
                    Ordering::Less
                } else {
                    Ordering::Greater
                };
            }
            if a.1 != b.1 {
                return b.1.cmp(&a.1);
            }
        }
        self.exps.len().cmp(&other.exps.len())
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials in `vars` with total degree in `[min_degree, max_degree]`,
/// in graded-lexicographic order.
pub fn monomial_basis(vars: &[VarId], max_degree: u32, min_degree: u32) -> Vec<Monomial> {
    let mut sorted: Vec<VarId> = vars.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out = Vec::new();
    for d in min_degree..=max_degree {
        let mut exps = alloc::vec![0u32; sorted.len()];
        homogeneous(&sorted, d, 0, &mut exps, &mut out);
    }
    out
}

// Emits degree-`remaining` completions in lex order (largest exponent on the
// first variable first).
fn homogeneous(vars: &[VarId], remaining: u32, pos: usize, exps: &mut [u32], out: &mut Vec<Monomial>) {
    if pos + 1 >= vars.len() {
        if vars.is_empty() {
            if remaining == 0 {
                out.push(Monomial::one());
            }
            return;
        }
        exps[pos] = remaining;
        let pairs: Vec<(VarId, u32)> = vars.iter().copied().zip(exps.iter().copied()).collect();
        out.push(Monomial::from_pairs(&pairs));
        exps[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        exps[pos] = e;
        homogeneous(vars, remaining - e, pos + 1, exps, out);
    }
    exps[pos] = 0;
}
