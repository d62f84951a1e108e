//! Sparse multivariate polynomials over a named variable universe.
//!
//! Coefficients are `f64`; any coefficient with magnitude at or below
//! [`ZERO_TOL`] is dropped during normalization. Every polynomial carries a
//! reference to its [`Universe`], and arithmetic between polynomials over
//! different universes is an error rather than a silent union.

mod monomial;
mod text;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

pub use monomial::{monomial_basis, Monomial};
pub(crate) use monomial::powi;
pub use text::ParseError;

/// Coefficients at or below this magnitude are treated as zero.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolyError {
    #[error("polynomials belong to different variable universes")]
    UniverseMismatch,
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("invalid variable name `{0}`")]
    InvalidVariableName(String),
    #[error("no value assigned to variable `{0}`")]
    MissingAssignment(String),
    #[error("length mismatch: {0} dynamics components for {1} variables")]
    LengthMismatch(usize, usize),
}

/// An ordered set of named variables. Indices are dense `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Universe {
    names: Vec<String>,
}

impl Universe {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Arc<Universe>, PolyError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            if !text::is_identifier(n) {
                return Err(PolyError::InvalidVariableName(n.to_string()));
            }
            if !seen.insert(n) {
                return Err(PolyError::DuplicateVariable(n.to_string()));
            }
            out.push(n.to_string());
        }
        Ok(Arc::new(Universe { names: out }))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, v: VarId) -> &str {
        &self.names[v.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| VarId(i as u32))
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> {
        (0..self.names.len() as u32).map(VarId)
    }

    /// Two universe handles are compatible when they name the same variables
    /// in the same order.
    pub fn compatible(a: &Arc<Universe>, b: &Arc<Universe>) -> bool {
        Arc::ptr_eq(a, b) || a.names == b.names
    }
}

#[derive(Clone, Debug)]
pub struct Polynomial {
    universe: Arc<Universe>,
    terms: BTreeMap<Monomial, f64>,
}

impl PartialEq for Polynomial {
    fn eq(&self, other: &Self) -> bool {
        Universe::compatible(&self.universe, &other.universe) && self.terms == other.terms
    }
}

impl Polynomial {
    pub fn zero(universe: &Arc<Universe>) -> Self {
        Polynomial {
            universe: universe.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(universe: &Arc<Universe>, c: f64) -> Self {
        Self::from_terms(universe, [(Monomial::one(), c)])
    }

    pub fn var(universe: &Arc<Universe>, v: VarId) -> Self {
        Self::from_terms(universe, [(Monomial::var(v), 1.0)])
    }

    pub fn monomial(universe: &Arc<Universe>, m: Monomial, c: f64) -> Self {
        Self::from_terms(universe, [(m, c)])
    }

    /// Builds a canonical polynomial, summing repeated monomials.
    pub fn from_terms<I>(universe: &Arc<Universe>, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, c) in terms {
            debug_assert!(m.max_var_index().map_or(true, |v| (v as usize) < universe.len()));
            *map.entry(m).or_insert(0.0) += c;
        }
        let mut p = Polynomial {
            universe: universe.clone(),
            terms: map,
        };
        p.normalize();
        p
    }

    /// Drops coefficients at or below [`ZERO_TOL`]. Idempotent.
    pub fn normalize(&mut self) {
        self.terms.retain(|_, c| libm::fabs(*c) > ZERO_TOL);
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&Monomial::one())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().next_back().map_or(0, |m| m.degree())
    }

    /// Lowest total degree among the terms; 0 for the zero polynomial.
    pub fn min_degree(&self) -> u32 {
        self.terms.keys().next().map_or(0, |m| m.degree())
    }

    /// Variables that actually occur, sorted.
    pub fn variables(&self) -> Vec<VarId> {
        let mut set = BTreeSet::new();
        for m in self.terms.keys() {
            for (v, _) in m.powers() {
                set.insert(v);
            }
        }
        set.into_iter().collect()
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(libm::fabs(*c)))
    }

    fn check(&self, other: &Polynomial) -> Result<(), PolyError> {
        if Universe::compatible(&self.universe, &other.universe) {
            Ok(())
        } else {
            Err(PolyError::UniverseMismatch)
        }
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            *out.terms.entry(m.clone()).or_insert(0.0) += c;
        }
        out.normalize();
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            *out.terms.entry(m.clone()).or_insert(0.0) -= c;
        }
        out.normalize();
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check(other)?;
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *map.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        let mut p = Polynomial {
            universe: self.universe.clone(),
            terms: map,
        };
        p.normalize();
        Ok(p)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut p = Polynomial {
            universe: self.universe.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        };
        p.normalize();
        p
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut acc = Polynomial::constant(&self.universe, 1.0);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Evaluates at a point given as a map; every variable of `self` must be
    /// assigned.
    pub fn evaluate(&self, point: &BTreeMap<VarId, f64>) -> Result<f64, PolyError> {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut t = *c;
            for (v, e) in m.powers() {
                let x = point
                    .get(&v)
                    .ok_or_else(|| PolyError::MissingAssignment(self.universe.name(v).to_string()))?;
                t *= powi(*x, e);
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Term-wise evaluation at a dense point indexed by variable index.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    pub fn derivative(&self, v: VarId) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter_map(|(m, c)| m.derivative(v).map(|(k, dm)| (dm, c * k as f64)));
        Polynomial::from_terms(&self.universe, terms)
    }

    pub fn gradient(&self, vars: &[VarId]) -> Vec<Polynomial> {
        vars.iter().map(|&v| self.derivative(v)).collect()
    }

    /// Lie derivative `sum_k dV/dx_k * f_k`.
    pub fn lie_derivative(&self, f: &[Polynomial], vars: &[VarId]) -> Result<Polynomial, PolyError> {
        if f.len() != vars.len() {
            return Err(PolyError::LengthMismatch(f.len(), vars.len()));
        }
        let mut acc = Polynomial::zero(&self.universe);
        for (fk, &v) in f.iter().zip(vars) {
            let d = self.derivative(v);
            acc = acc.checked_add(&d.checked_mul(fk)?)?;
        }
        Ok(acc)
    }

    /// Drops every term whose monomial involves a variable outside `vars`
    /// (equivalently, substitutes zero for those variables).
    pub fn restrict_to(&self, vars: &[VarId]) -> Polynomial {
        let mut sorted = vars.to_vec();
        sorted.sort_unstable();
        Polynomial {
            universe: self.universe.clone(),
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.supported_by(&sorted))
                .map(|(m, c)| (m.clone(), *c))
                .collect(),
        }
    }

    /// Sum of squares of the given variables, `sum x_k^2`.
    pub fn norm_squared(universe: &Arc<Universe>, vars: &[VarId]) -> Polynomial {
        Polynomial::from_terms(
            universe,
            vars.iter().map(|&v| (Monomial::from_pairs(&[(v, 2)]), 1.0)),
        )
    }

    /// Parses the text form, e.g. `3.5*x1^2*x2 - 1.0`.
    pub fn parse(universe: &Arc<Universe>, s: &str) -> Result<Polynomial, ParseError> {
        text::parse(universe, s)
    }

    /// Largest absolute coefficient difference to `other`.
    pub fn max_coefficient_diff(&self, other: &Polynomial) -> Result<f64, PolyError> {
        Ok(self.checked_sub(other)?.max_abs_coefficient())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        text::write_polynomial(self, f)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("polynomial universe mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.checked_sub(rhs).expect("polynomial universe mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("polynomial universe mismatch")
    }
}

impl Mul<f64> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn xy() -> Arc<Universe> {
        Universe::new(&["x", "y"]).unwrap()
    }

    fn p(u: &Arc<Universe>, s: &str) -> Polynomial {
        Polynomial::parse(u, s).unwrap()
    }

    #[test]
    fn add_cancels_and_identity() {
        let u = xy();
        assert_eq!(&p(&u, "x^2 + 1") + &p(&u, "-x^2"), p(&u, "1"));
        let q = p(&u, "3*x*y - y + 2");
        assert_eq!(&q + &Polynomial::zero(&u), q);
        assert_eq!(&p(&u, "x + y") + &p(&u, "x - y"), p(&u, "2*x"));
    }

    #[test]
    fn mul_examples() {
        let u = xy();
        assert_eq!(&p(&u, "x + y") * &p(&u, "x - y"), p(&u, "x^2 - y^2"));
        let q = p(&u, "x^3 - 2*y + 0.5");
        assert_eq!(&q * &Polynomial::constant(&u, 1.0), q);
        let d = p(&u, "x^2 - y^2");
        assert_eq!(&d * &d, p(&u, "x^4 - 2*x^2*y^2 + y^4"));
    }

    #[test]
    fn universe_mismatch_is_an_error() {
        let a = xy();
        let b = Universe::new(&["x", "z"]).unwrap();
        let e = Polynomial::var(&a, VarId(0)).checked_add(&Polynomial::var(&b, VarId(0)));
        assert_eq!(e, Err(PolyError::UniverseMismatch));
        // Structurally identical universes are compatible.
        let c = Universe::new(&["x", "y"]).unwrap();
        assert!(Polynomial::var(&a, VarId(0)).checked_mul(&Polynomial::var(&c, VarId(1))).is_ok());
    }

    #[test]
    fn evaluate_examples() {
        let u = xy();
        let q = p(&u, "x^2 + 2*x*y");
        let mut pt = BTreeMap::new();
        pt.insert(VarId(0), 1.0);
        pt.insert(VarId(1), 2.0);
        assert_eq!(q.evaluate(&pt).unwrap(), 5.0);
        let r = p(&u, "x^3 - 4*y + 7.25");
        assert_eq!(r.eval(&[0.0, 0.0]), 7.25);
        pt.remove(&VarId(1));
        assert_eq!(q.evaluate(&pt), Err(PolyError::MissingAssignment("y".into())));
    }

    #[test]
    fn gradient_and_lie_derivative() {
        let u = xy();
        let g = p(&u, "x^2 + y^2").gradient(&[VarId(0), VarId(1)]);
        assert_eq!(g, vec![p(&u, "2*x"), p(&u, "2*y")]);
        let g0 = p(&u, "3").gradient(&[VarId(0), VarId(1)]);
        assert!(g0.iter().all(|q| q.is_zero()));

        let x = [VarId(0)];
        let v = p(&u, "x^2");
        assert_eq!(v.lie_derivative(&[p(&u, "-x")], &x).unwrap(), p(&u, "-2*x^2"));
        let w = p(&u, "x^2 + y^2");
        let rot = [p(&u, "y"), p(&u, "-x")];
        assert!(w.lie_derivative(&rot, &[VarId(0), VarId(1)]).unwrap().is_zero());
        assert_eq!(
            w.lie_derivative(&rot[..1], &[VarId(0), VarId(1)]),
            Err(PolyError::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn basis_examples() {
        let u = xy();
        let b = monomial_basis(&[VarId(0), VarId(1)], 1, 0);
        let shown: Vec<String> = b
            .iter()
            .map(|m| Polynomial::monomial(&u, m.clone(), 1.0).to_string())
            .collect();
        assert_eq!(shown, vec!["1.0", "x", "y"]);
        let b2 = monomial_basis(&[VarId(0)], 2, 2);
        assert_eq!(b2, vec![Monomial::from_pairs(&[(VarId(0), 2)])]);
        let four: Vec<VarId> = (0..4).map(VarId).collect();
        assert_eq!(monomial_basis(&four, 3, 0).len(), 35);
    }

    #[test]
    fn basis_is_sorted_and_matches_order() {
        let vars: Vec<VarId> = (0..3).map(VarId).collect();
        let b = monomial_basis(&vars, 4, 0);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn degrees() {
        let u = xy();
        let q = p(&u, "x^3*y + x^2 - y");
        assert_eq!(q.degree(), 4);
        assert_eq!(q.min_degree(), 1);
        assert_eq!(Polynomial::zero(&u).degree(), 0);
        assert_eq!(q.variables(), vec![VarId(0), VarId(1)]);
    }

    #[test]
    fn tiny_coefficients_are_dropped() {
        let u = xy();
        let q = Polynomial::from_terms(&u, [(Monomial::var(VarId(0)), 1e-13), (Monomial::one(), 1.0)]);
        assert_eq!(q.num_terms(), 1);
        let mut r = q.clone();
        r.normalize();
        assert_eq!(q, r);
    }
}
