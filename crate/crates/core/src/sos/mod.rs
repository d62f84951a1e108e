//! Sum-of-squares programs lowered to SDPs by Gram-matrix parameterization.
//!
//! Constraints are affine in decision variables: each is a known polynomial
//! plus products of known polynomials with decision variables. Every `IsSos`
//! constraint receives its own Gram matrix `sigma_0`, and coefficient matching
//! between the expression and `z^T G z` yields the SDP equality rows.

mod certificate;

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::poly::{monomial_basis, Monomial, PolyError, Polynomial, Universe, VarId};
use crate::sdp::{
    InteriorPoint, LinearForm, SdpConstraint, SdpProblem, SdpSolution, SdpStatus, Sense, SolverBackend,
    SolverOptions, SymEntry,
};

pub use certificate::{
    check_certificate, default_multiplier_degree, prove_nonneg_on, Certificate, CertificateCheck, DomainSense,
    ProveOutcome,
};

/// Default strictness margin for strict inequalities.
pub const EPS_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SosError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("bilinear term: product of two decision-variable expressions")]
    Bilinear,
    #[error("SOS decision variable must have even degree, got {0}")]
    OddDegree(u32),
    #[error("objective refers to a non-scalar decision variable")]
    NonScalarObjective,
    #[error("unknown decision variable {0}")]
    UnknownDecisionVar(usize),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecisionVarId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ScalarSign {
    Free,
    Nonnegative,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SosVarKind {
    /// `z^T G z` with `G` PSD over `monomial_basis(vars, degree/2, min_half)`.
    Gram { vars: Vec<VarId>, degree: u32, min_half: u32 },
    /// Unconstrained polynomial with every monomial of degree `<= degree`.
    Free { vars: Vec<VarId>, degree: u32 },
    Scalar(ScalarSign),
}

impl SosVarKind {
    fn basis(&self) -> Vec<Monomial> {
        match self {
            SosVarKind::Gram { vars, degree, min_half } => monomial_basis(vars, degree / 2, *min_half),
            SosVarKind::Free { vars, degree } => monomial_basis(vars, *degree, 0),
            SosVarKind::Scalar(_) => vec![Monomial::one()],
        }
    }

    fn vars(&self) -> &[VarId] {
        match self {
            SosVarKind::Gram { vars, .. } | SosVarKind::Free { vars, .. } => vars,
            SosVarKind::Scalar(_) => &[],
        }
    }

    fn degree_range(&self) -> (u32, u32) {
        match self {
            SosVarKind::Gram { degree, min_half, .. } => (2 * min_half, *degree),
            SosVarKind::Free { degree, .. } => (0, *degree),
            SosVarKind::Scalar(_) => (0, 0),
        }
    }
}

/// `known + sum_t coeff_t * var_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SosExpr {
    pub known: Polynomial,
    pub terms: Vec<(Polynomial, DecisionVarId)>,
}

impl SosExpr {
    pub fn known(p: Polynomial) -> Self {
        SosExpr { known: p, terms: Vec::new() }
    }

    pub fn constant(u: &Arc<Universe>, c: f64) -> Self {
        SosExpr::known(Polynomial::constant(u, c))
    }

    pub fn var(u: &Arc<Universe>, id: DecisionVarId) -> Self {
        SosExpr {
            known: Polynomial::zero(u),
            terms: vec![(Polynomial::constant(u, 1.0), id)],
        }
    }

    pub fn universe(&self) -> &Arc<Universe> {
        self.known.universe()
    }

    pub fn add(&self, other: &SosExpr) -> Result<SosExpr, SosError> {
        let mut terms = self.terms.clone();
        for (q, id) in &other.terms {
            if !Universe::compatible(q.universe(), self.universe()) {
                return Err(PolyError::UniverseMismatch.into());
            }
            terms.push((q.clone(), *id));
        }
        Ok(SosExpr {
            known: self.known.checked_add(&other.known)?,
            terms,
        })
    }

    pub fn sub(&self, other: &SosExpr) -> Result<SosExpr, SosError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> SosExpr {
        SosExpr {
            known: self.known.scale(s),
            terms: self.terms.iter().map(|(q, id)| (q.scale(s), *id)).collect(),
        }
    }

    pub fn add_poly(&self, p: &Polynomial) -> Result<SosExpr, SosError> {
        Ok(SosExpr {
            known: self.known.checked_add(p)?,
            terms: self.terms.clone(),
        })
    }

    pub fn mul_poly(&self, p: &Polynomial) -> Result<SosExpr, SosError> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (q, id) in &self.terms {
            terms.push((q.checked_mul(p)?, *id));
        }
        Ok(SosExpr {
            known: self.known.checked_mul(p)?,
            terms,
        })
    }

    /// Product of two expressions; rejected when both involve decision
    /// variables.
    pub fn mul(&self, other: &SosExpr) -> Result<SosExpr, SosError> {
        if !self.terms.is_empty() && !other.terms.is_empty() {
            return Err(SosError::Bilinear);
        }
        if self.terms.is_empty() {
            other.mul_poly(&self.known)
        } else {
            self.mul_poly(&other.known)
        }
    }

    /// Polynomial value once every decision variable is replaced by its
    /// solved value.
    pub fn instantiate(&self, values: &[DecisionValue]) -> Result<Polynomial, SosError> {
        let mut out = self.known.clone();
        for (q, id) in &self.terms {
            let v = values.get(id.0).ok_or(SosError::UnknownDecisionVar(id.0))?;
            out = out.checked_add(&q.checked_mul(&v.poly)?)?;
        }
        Ok(out)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Requirement {
    IsSos,
    IsZero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SosConstraint {
    pub expr: SosExpr,
    pub requirement: Requirement,
}

/// Multiplier shape for one Putinar domain polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiplier {
    pub vars: Vec<VarId>,
    pub degree: u32,
}

/// Indices tying a Putinar-form constraint back to its pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct PutinarHandle {
    pub constraint: usize,
    pub target: SosExpr,
    pub ineqs: Vec<(Polynomial, DecisionVarId)>,
    pub eqs: Vec<(Polynomial, DecisionVarId)>,
}

#[derive(Clone, Debug)]
pub struct SosProgram {
    universe: Arc<Universe>,
    vars: Vec<SosVarKind>,
    constraints: Vec<SosConstraint>,
    objective: Vec<(DecisionVarId, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramPoly {
    pub basis: Vec<Monomial>,
    pub gram: DMatrix<f64>,
}

impl GramPoly {
    pub fn polynomial(&self, u: &Arc<Universe>) -> Polynomial {
        let n = self.basis.len();
        let mut terms = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let c = if i == j { self.gram[(i, i)] } else { 2.0 * self.gram[(i, j)] };
                terms.push((self.basis[i].mul(&self.basis[j]), c));
            }
        }
        Polynomial::from_terms(u, terms)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        crate::linalg::min_eigenvalue(&self.gram)
    }
}

#[derive(Clone, Debug)]
pub struct DecisionValue {
    pub poly: Polynomial,
    /// Present for Gram (SOS) variables and nonnegative scalars.
    pub gram: Option<GramPoly>,
}

impl DecisionValue {
    pub fn scalar(&self) -> f64 {
        self.poly.constant_term()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SosStatus {
    Optimal,
    Feasible,
    Infeasible,
    Unbounded,
    /// Solver failure; never to be read as infeasible.
    Unknown,
}

impl SosStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, SosStatus::Optimal | SosStatus::Feasible)
    }
}

#[derive(Clone, Debug)]
pub struct SosSolution {
    pub status: SosStatus,
    pub values: Vec<DecisionValue>,
    /// One implicit `sigma_0` per constraint (`None` for `IsZero`).
    pub slack_grams: Vec<Option<GramPoly>>,
    pub objective: Option<f64>,
    pub sdp: SdpSolution,
}

impl SosSolution {
    pub fn value(&self, id: DecisionVarId) -> &DecisionValue {
        &self.values[id.0]
    }

    pub fn scalar(&self, id: DecisionVarId) -> f64 {
        self.values[id.0].scalar()
    }
}

/// Lowered program plus the back-map from SDP blocks to decision variables.
#[derive(Clone, Debug)]
pub struct Lowered {
    pub sdp: SdpProblem,
    var_slots: Vec<Slot>,
    slack_slots: Vec<Option<(usize, Vec<Monomial>)>>,
}

#[derive(Clone, Debug)]
enum Slot {
    Block { block: usize, basis: Vec<Monomial> },
    Free { first: usize, basis: Vec<Monomial> },
}

impl SosProgram {
    pub fn new(universe: &Arc<Universe>) -> Self {
        SosProgram {
            universe: universe.clone(),
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
        }
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    fn push_var(&mut self, kind: SosVarKind) -> DecisionVarId {
        self.vars.push(kind);
        DecisionVarId(self.vars.len() - 1)
    }

    fn sorted(vars: &[VarId]) -> Vec<VarId> {
        let mut v = vars.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// SOS polynomial of the given even degree.
    pub fn new_sos(&mut self, vars: &[VarId], degree: u32) -> Result<DecisionVarId, SosError> {
        self.new_sos_range(vars, 0, degree)
    }

    /// SOS polynomial whose Gram basis has half-degrees in
    /// `[min_half, degree/2]`.
    pub fn new_sos_range(&mut self, vars: &[VarId], min_half: u32, degree: u32) -> Result<DecisionVarId, SosError> {
        if degree % 2 == 1 {
            return Err(SosError::OddDegree(degree));
        }
        Ok(self.push_var(SosVarKind::Gram {
            vars: Self::sorted(vars),
            degree,
            min_half: min_half.min(degree / 2),
        }))
    }

    pub fn new_free_poly(&mut self, vars: &[VarId], degree: u32) -> DecisionVarId {
        self.push_var(SosVarKind::Free {
            vars: Self::sorted(vars),
            degree,
        })
    }

    pub fn new_scalar(&mut self, sign: ScalarSign) -> DecisionVarId {
        self.push_var(SosVarKind::Scalar(sign))
    }

    pub fn var_kind(&self, id: DecisionVarId) -> &SosVarKind {
        &self.vars[id.0]
    }

    pub fn expr(&self, id: DecisionVarId) -> SosExpr {
        SosExpr::var(&self.universe, id)
    }

    fn check_expr(&self, e: &SosExpr) -> Result<(), SosError> {
        if !Universe::compatible(e.universe(), &self.universe) {
            return Err(PolyError::UniverseMismatch.into());
        }
        for (q, id) in &e.terms {
            if !Universe::compatible(q.universe(), &self.universe) {
                return Err(PolyError::UniverseMismatch.into());
            }
            if id.0 >= self.vars.len() {
                return Err(SosError::UnknownDecisionVar(id.0));
            }
        }
        Ok(())
    }

    pub fn add_sos(&mut self, expr: SosExpr) -> Result<usize, SosError> {
        self.check_expr(&expr)?;
        self.constraints.push(SosConstraint {
            expr,
            requirement: Requirement::IsSos,
        });
        Ok(self.constraints.len() - 1)
    }

    pub fn add_zero(&mut self, expr: SosExpr) -> Result<usize, SosError> {
        self.check_expr(&expr)?;
        self.constraints.push(SosConstraint {
            expr,
            requirement: Requirement::IsZero,
        });
        Ok(self.constraints.len() - 1)
    }

    /// Requires `target - sum_j s_j k_j - sum_l l_l h_l` to be SOS with
    /// SOS multipliers `s_j` on inequalities `k_j >= 0` and free multipliers
    /// `l_l` on equalities `h_l = 0`.
    pub fn add_putinar(
        &mut self,
        target: SosExpr,
        ineqs: &[(Polynomial, Multiplier)],
        eqs: &[(Polynomial, Multiplier)],
    ) -> Result<PutinarHandle, SosError> {
        let mut expr = target.clone();
        let mut hi = Vec::with_capacity(ineqs.len());
        for (k, m) in ineqs {
            let d = m.degree - m.degree % 2;
            let s = self.new_sos(&m.vars, d)?;
            expr.terms.push((k.scale(-1.0), s));
            hi.push((k.clone(), s));
        }
        let mut he = Vec::with_capacity(eqs.len());
        for (h, m) in eqs {
            let l = self.new_free_poly(&m.vars, m.degree);
            expr.terms.push((h.scale(-1.0), l));
            he.push((h.clone(), l));
        }
        let constraint = self.add_sos(expr)?;
        Ok(PutinarHandle {
            constraint,
            target,
            ineqs: hi,
            eqs: he,
        })
    }

    /// Minimizes `sum c * var` over scalar decision variables.
    pub fn set_objective(&mut self, terms: &[(DecisionVarId, f64)]) -> Result<(), SosError> {
        for (id, _) in terms {
            match self.vars.get(id.0) {
                Some(SosVarKind::Scalar(_)) => {}
                Some(_) => return Err(SosError::NonScalarObjective),
                None => return Err(SosError::UnknownDecisionVar(id.0)),
            }
        }
        self.objective = terms.to_vec();
        Ok(())
    }

    pub fn constraints(&self) -> &[SosConstraint] {
        &self.constraints
    }

    /// Every polynomial variable referenced anywhere in the program.
    pub fn variables_used(&self) -> Vec<VarId> {
        let mut set = alloc::collections::BTreeSet::new();
        for k in &self.vars {
            set.extend(k.vars().iter().copied());
        }
        for c in &self.constraints {
            set.extend(c.expr.known.variables());
            for (q, _) in &c.expr.terms {
                set.extend(q.variables());
            }
        }
        set.into_iter().collect()
    }

    /// Lowest/highest degree any monomial of the expression can have, its
    /// variables, and per-variable maximal exponents.
    fn expr_shape(&self, e: &SosExpr) -> (u32, u32, Vec<VarId>, BTreeMap<VarId, u32>) {
        let mut lo = u32::MAX;
        let mut hi = 0;
        let mut vars = alloc::collections::BTreeSet::new();
        let mut maxexp: BTreeMap<VarId, u32> = BTreeMap::new();
        let note = |m: &Monomial, extra: &BTreeMap<VarId, u32>, maxexp: &mut BTreeMap<VarId, u32>| {
            for (v, k) in m.powers() {
                let e = maxexp.entry(v).or_insert(0);
                *e = (*e).max(k + extra.get(&v).copied().unwrap_or(0));
            }
            for (&v, &k) in extra {
                let e = maxexp.entry(v).or_insert(0);
                *e = (*e).max(k + m.exponent(v));
            }
        };
        let none = BTreeMap::new();
        if !e.known.is_zero() {
            lo = e.known.min_degree();
            hi = e.known.degree();
            vars.extend(e.known.variables());
            for (m, _) in e.known.terms() {
                note(m, &none, &mut maxexp);
            }
        }
        for (q, id) in &e.terms {
            if q.is_zero() {
                continue;
            }
            let kind = &self.vars[id.0];
            let (vl, vh) = kind.degree_range();
            lo = lo.min(q.min_degree() + vl);
            hi = hi.max(q.degree() + vh);
            vars.extend(q.variables());
            vars.extend(kind.vars().iter().copied());
            // Largest exponent of each variable in the decision variable.
            let mut dv: BTreeMap<VarId, u32> = BTreeMap::new();
            let mult = if matches!(kind, SosVarKind::Gram { .. }) { 2 } else { 1 };
            let top = match kind {
                SosVarKind::Gram { degree, .. } => degree / 2,
                SosVarKind::Free { degree, .. } => *degree,
                SosVarKind::Scalar(_) => 0,
            };
            for &v in kind.vars() {
                if top > 0 {
                    dv.insert(v, mult * top);
                }
            }
            for (m, _) in q.terms() {
                note(m, &dv, &mut maxexp);
            }
        }
        if lo == u32::MAX {
            lo = 0;
        }
        (lo, hi, vars.into_iter().collect(), maxexp)
    }

    pub fn lower(&self) -> Result<Lowered, SosError> {
        // Blocks: Gram variables and nonnegative scalars first, then one
        // sigma_0 per SOS constraint. Free variables: free scalars and free
        // polynomial coefficients.
        let mut blocks = Vec::new();
        let mut nfree = 0;
        let mut var_slots = Vec::with_capacity(self.vars.len());
        for kind in &self.vars {
            let basis = kind.basis();
            match kind {
                SosVarKind::Gram { .. } | SosVarKind::Scalar(ScalarSign::Nonnegative) => {
                    var_slots.push(Slot::Block {
                        block: blocks.len(),
                        basis: basis.clone(),
                    });
                    blocks.push(basis.len());
                }
                SosVarKind::Free { .. } | SosVarKind::Scalar(ScalarSign::Free) => {
                    var_slots.push(Slot::Free { first: nfree, basis: basis.clone() });
                    nfree += basis.len();
                }
            }
        }
        let mut slack_slots = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            if c.requirement == Requirement::IsZero {
                slack_slots.push(None);
                continue;
            }
            let (lo, hi, vars, maxexp) = self.expr_shape(&c.expr);
            let basis: Vec<Monomial> = monomial_basis(&vars, hi / 2, (lo + 1) / 2)
                .into_iter()
                .filter(|m| m.powers().all(|(v, k)| 2 * k <= maxexp.get(&v).copied().unwrap_or(0)))
                .collect();
            if basis.is_empty() {
                slack_slots.push(None);
            } else {
                slack_slots.push(Some((blocks.len(), basis.clone())));
                blocks.push(basis.len());
            }
        }

        let mut constraints = Vec::new();
        for (ci, c) in self.constraints.iter().enumerate() {
            let mut rows: BTreeMap<Monomial, (Vec<SymEntry>, Vec<(usize, f64)>, f64)> = BTreeMap::new();
            for (m, v) in c.expr.known.terms() {
                rows.entry(m.clone()).or_default().2 -= v;
            }
            for (q, id) in &c.expr.terms {
                match &var_slots[id.0] {
                    Slot::Block { block, basis } => {
                        for i in 0..basis.len() {
                            for j in i..basis.len() {
                                let zz = basis[i].mul(&basis[j]);
                                for (qm, qv) in q.terms() {
                                    rows.entry(zz.mul(qm))
                                        .or_default()
                                        .0
                                        .push(SymEntry::new(*block, i, j, qv));
                                }
                            }
                        }
                    }
                    Slot::Free { first, basis } => {
                        for (i, bm) in basis.iter().enumerate() {
                            for (qm, qv) in q.terms() {
                                rows.entry(bm.mul(qm)).or_default().1.push((first + i, qv));
                            }
                        }
                    }
                }
            }
            if let Some((block, basis)) = &slack_slots[ci] {
                for i in 0..basis.len() {
                    for j in i..basis.len() {
                        rows.entry(basis[i].mul(&basis[j]))
                            .or_default()
                            .0
                            .push(SymEntry::new(*block, i, j, -1.0));
                    }
                }
            }
            for (_, (entries, free, rhs)) in rows {
                constraints.push(SdpConstraint {
                    form: LinearForm { entries, free },
                    rhs,
                });
            }
        }

        let mut objective = LinearForm::default();
        for &(id, c) in &self.objective {
            match &var_slots[id.0] {
                Slot::Block { block, .. } => objective.entries.push(SymEntry::new(*block, 0, 0, c)),
                Slot::Free { first, .. } => objective.free.push((*first, c)),
            }
        }
        let sense = if self.objective.is_empty() {
            Sense::Feasibility
        } else {
            Sense::Minimize
        };
        let mut sdp = SdpProblem::new(blocks, nfree, sense);
        sdp.constraints = constraints;
        sdp.objective = objective;
        Ok(Lowered {
            sdp,
            var_slots,
            slack_slots,
        })
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<SosSolution, SosError> {
        self.solve_with(&InteriorPoint, opts)
    }

    pub fn solve_with(&self, backend: &dyn SolverBackend, opts: &SolverOptions) -> Result<SosSolution, SosError> {
        let lowered = self.lower()?;
        if lowered.sdp.constraints.is_empty() {
            // Nothing to satisfy: every decision variable at zero works.
            let sol = SdpSolution {
                status: SdpStatus::Optimal,
                block_values: lowered.sdp.zero_blocks(),
                free_values: vec![0.0; lowered.sdp.free_vars],
                dual: Vec::new(),
                dual_slack: lowered.sdp.zero_blocks(),
                objective: 0.0,
                dual_objective: 0.0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                duality_gap: 0.0,
                iterations: 0,
                ray: None,
            };
            return Ok(self.back_map(&lowered, sol));
        }
        let sol = backend.solve(&lowered.sdp, opts);
        Ok(self.back_map(&lowered, sol))
    }

    fn back_map(&self, lowered: &Lowered, sol: SdpSolution) -> SosSolution {
        let status = match sol.status {
            SdpStatus::Optimal => SosStatus::Optimal,
            SdpStatus::Feasible => SosStatus::Feasible,
            SdpStatus::Infeasible => SosStatus::Infeasible,
            SdpStatus::Unbounded => SosStatus::Unbounded,
            SdpStatus::NumericFailure => SosStatus::Unknown,
        };
        let u = &self.universe;
        let values = lowered
            .var_slots
            .iter()
            .map(|slot| match slot {
                Slot::Block { block, basis } => {
                    let g = GramPoly {
                        basis: basis.clone(),
                        gram: sol.block_values[*block].clone(),
                    };
                    DecisionValue {
                        poly: g.polynomial(u),
                        gram: Some(g),
                    }
                }
                Slot::Free { first, basis } => DecisionValue {
                    poly: Polynomial::from_terms(
                        u,
                        basis.iter().enumerate().map(|(i, m)| (m.clone(), sol.free_values[first + i])),
                    ),
                    gram: None,
                },
            })
            .collect();
        let slack_grams = lowered
            .slack_slots
            .iter()
            .map(|s| {
                s.as_ref().map(|(block, basis)| GramPoly {
                    basis: basis.clone(),
                    gram: sol.block_values[*block].clone(),
                })
            })
            .collect();
        let objective = if self.objective.is_empty() || !status.is_feasible() {
            None
        } else {
            Some(sol.objective)
        };
        SosSolution {
            status,
            values,
            slack_grams,
            objective,
            sdp: sol,
        }
    }

    /// Assembles the Putinar certificate of a solved `add_putinar` constraint.
    pub fn certificate(&self, sol: &SosSolution, h: &PutinarHandle) -> Result<Certificate, SosError> {
        let u = &self.universe;
        let target = h.target.instantiate(&sol.values)?;
        let sigma0 = sol.slack_grams[h.constraint].clone().unwrap_or(GramPoly {
            basis: Vec::new(),
            gram: DMatrix::zeros(0, 0),
        });
        let ineqs = h
            .ineqs
            .iter()
            .map(|(k, id)| (k.clone(), sol.values[id.0].gram.clone().expect("SOS multiplier")))
            .collect();
        let eqs = h.eqs.iter().map(|(k, id)| (k.clone(), sol.values[id.0].poly.clone())).collect();
        Ok(Certificate {
            universe: u.clone(),
            target,
            sigma0,
            ineqs,
            eqs,
        })
    }

    /// Minimizes one scalar decision variable.
    pub fn minimize_scalar(
        &mut self,
        var: DecisionVarId,
        opts: &SolverOptions,
    ) -> Result<SosSolution, SosError> {
        self.set_objective(&[(var, 1.0)])?;
        self.solve(opts)
    }

    /// Residual of every constraint after substituting the solved values:
    /// `IsSos` constraints against their `sigma_0`, `IsZero` against zero.
    pub fn max_residual(&self, sol: &SosSolution) -> Result<f64, SosError> {
        let mut worst = 0.0f64;
        for (c, s0) in self.constraints.iter().zip(&sol.slack_grams) {
            let mut p = c.expr.instantiate(&sol.values)?;
            if let Some(g) = s0 {
                p = p.checked_sub(&g.polynomial(&self.universe))?;
            }
            worst = worst.max(p.max_abs_coefficient());
        }
        Ok(worst)
    }
}
