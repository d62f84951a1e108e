//! Dense-block semidefinite programming.
//!
//! Primal form:
//!
//! ```text
//! minimize   <C, X> + c_f^T u
//! subject to <A_k, X> + (B u)_k = b_k,   k = 1..m
//!            X = diag(X_1, ..., X_p) PSD,  u free
//! ```
//!
//! with dual `max b^T y  s.t.  Z = C - sum_k y_k A_k PSD,  B^T y = c_f`.
//! Symmetric coefficient matrices are given sparsely by their upper triangle.

mod ipm;
mod presolve;

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::linalg::min_eigenvalue;

/// One upper-triangle entry `(row <= col)` of a symmetric coefficient matrix.
/// Off-diagonal entries stand for both `(row, col)` and `(col, row)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl SymEntry {
    pub fn new(block: usize, row: usize, col: usize, value: f64) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        SymEntry { block, row, col, value }
    }
}

/// A linear functional of `(X, u)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearForm {
    pub entries: Vec<SymEntry>,
    pub free: Vec<(usize, f64)>,
}

impl LinearForm {
    pub fn eval(&self, x: &[DMatrix<f64>], u: &[f64]) -> f64 {
        let mut s = 0.0;
        for e in &self.entries {
            let v = x[e.block][(e.row, e.col)];
            s += if e.row == e.col { e.value * v } else { 2.0 * e.value * v };
        }
        for &(f, c) in &self.free {
            s += c * u[f];
        }
        s
    }

    /// Adds `scale * A` into the dense blocks (the adjoint map).
    pub fn scatter(&self, scale: f64, out: &mut [DMatrix<f64>]) {
        for e in &self.entries {
            out[e.block][(e.row, e.col)] += scale * e.value;
            if e.row != e.col {
                out[e.block][(e.col, e.row)] += scale * e.value;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpConstraint {
    pub form: LinearForm,
    pub rhs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Feasibility,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub free_vars: usize,
    pub constraints: Vec<SdpConstraint>,
    pub objective: LinearForm,
    pub sense: Sense,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("problem has no constraints")]
    NoConstraints,
    #[error("block {0} has dimension 0")]
    EmptyBlock(usize),
    #[error("entry refers to block {block} index ({row}, {col}) out of range")]
    EntryOutOfRange { block: usize, row: usize, col: usize },
    #[error("free variable index {0} out of range")]
    FreeOutOfRange(usize),
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
}

impl SdpProblem {
    pub fn new(blocks: Vec<usize>, free_vars: usize, sense: Sense) -> Self {
        SdpProblem {
            blocks,
            free_vars,
            constraints: Vec::new(),
            objective: LinearForm::default(),
            sense,
        }
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.constraints.is_empty() {
            return Err(SdpError::NoConstraints);
        }
        if let Some(b) = self.blocks.iter().position(|&d| d == 0) {
            return Err(SdpError::EmptyBlock(b));
        }
        let forms = self
            .constraints
            .iter()
            .map(|c| (&c.form, c.rhs))
            .chain(core::iter::once((&self.objective, 0.0)));
        for (f, rhs) in forms {
            if !rhs.is_finite() {
                return Err(SdpError::NonFinite);
            }
            for e in &f.entries {
                if e.block >= self.blocks.len() || e.col >= self.blocks[e.block] || e.row > e.col {
                    return Err(SdpError::EntryOutOfRange {
                        block: e.block,
                        row: e.row,
                        col: e.col,
                    });
                }
                if !e.value.is_finite() {
                    return Err(SdpError::NonFinite);
                }
            }
            for &(i, c) in &f.free {
                if i >= self.free_vars {
                    return Err(SdpError::FreeOutOfRange(i));
                }
                if !c.is_finite() {
                    return Err(SdpError::NonFinite);
                }
            }
        }
        Ok(())
    }

    /// Multiplies every constraint row by `s` (right-hand sides included).
    pub fn scale_rows(&mut self, s: f64) {
        for c in &mut self.constraints {
            c.rhs *= s;
            for e in &mut c.form.entries {
                e.value *= s;
            }
            for f in &mut c.form.free {
                f.1 *= s;
            }
        }
    }

    pub fn zero_blocks(&self) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpStatus {
    /// Converged to the stated gap and residual tolerances.
    Optimal,
    /// A primal feasible point (within `feas_tol`) was found; for minimization
    /// problems the objective is an upper bound but optimality was not reached.
    Feasible,
    /// Proven infeasible by a dual improving ray or by presolve.
    Infeasible,
    Unbounded,
    /// The iteration stalled. This means "unknown", never "infeasible".
    NumericFailure,
}

impl SdpStatus {
    /// True when the solution carries a usable primal point.
    pub fn has_primal(self) -> bool {
        matches!(self, SdpStatus::Optimal | SdpStatus::Feasible)
    }
}

/// Farkas-type certificate of primal infeasibility: `y` with `B^T y = 0`,
/// `sum y_k A_k` negative semidefinite and `b^T y > 0`. The residual is the
/// violation of the first two conditions after normalizing `b^T y = 1`.
///
/// When presolve proved infeasibility on a face, `face_rows` lists the
/// zero-rhs rows whose diagonal entries force that face (a facial-reduction
/// chain) and the PSD condition is checked on the face only.
#[derive(Clone, Debug, PartialEq)]
pub struct InfeasibilityRay {
    pub y: Vec<f64>,
    pub residual: f64,
    pub face_rows: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub block_values: Vec<DMatrix<f64>>,
    pub free_values: Vec<f64>,
    pub dual: Vec<f64>,
    pub dual_slack: Vec<DMatrix<f64>>,
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub ray: Option<InfeasibilityRay>,
}

impl SdpSolution {
    pub(crate) fn empty(p: &SdpProblem, status: SdpStatus) -> Self {
        SdpSolution {
            status,
            block_values: p.zero_blocks(),
            free_values: vec![0.0; p.free_vars],
            dual: vec![0.0; p.constraints.len()],
            dual_slack: p.zero_blocks(),
            objective: f64::NAN,
            dual_objective: f64::NAN,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            duality_gap: f64::INFINITY,
            iterations: 0,
            ray: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Eigenvalue slack accepted when checking PSD-ness of returned blocks.
    pub psd_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-7,
            feas_tol: 1e-7,
            max_iter: 200,
            psd_tol: 1e-7,
        }
    }
}

/// Substitution point for external conic solvers.
pub trait SolverBackend: Send + Sync {
    fn solve(&self, problem: &SdpProblem, opts: &SolverOptions) -> SdpSolution;
}

/// The built-in primal-dual interior-point method (HKM direction, Mehrotra
/// predictor-corrector).
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint;

impl SolverBackend for InteriorPoint {
    fn solve(&self, problem: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
        solve(problem, opts)
    }
}

pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
    if problem.validate().is_err() {
        return SdpSolution::empty(problem, SdpStatus::NumericFailure);
    }
    let pre = match presolve::presolve(problem) {
        presolve::Outcome::Infeasible(ray) => {
            let mut s = SdpSolution::empty(problem, SdpStatus::Infeasible);
            s.ray = Some(ray);
            return s;
        }
        presolve::Outcome::Reduced(r) => r,
    };
    let reduced = match pre.problem() {
        Some(p) => p,
        // Every constraint was eliminated and satisfied at X = 0.
        None => return pre.trivial_solution(problem),
    };
    let inner = match problem.sense {
        Sense::Feasibility => ipm::solve_feasibility(reduced, opts),
        Sense::Minimize => ipm::solve_minimize(reduced, opts),
    };
    pre.restore(problem, inner, opts)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    /// `max_k |b_k - <A_k, X> - (B u)_k|`.
    pub primal_residual: f64,
    /// Max of `|C - A^*(y) - Z|` entries and `|c_f - B^T y|`.
    pub dual_residual: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub min_primal_eigenvalues: Vec<f64>,
    pub min_dual_eigenvalues: Vec<f64>,
}

/// Recomputes residuals and eigenvalues from scratch.
pub fn verify(problem: &SdpProblem, sol: &SdpSolution) -> Result<ResidualReport, SdpError> {
    let nb = problem.blocks.len();
    if sol.block_values.len() != nb || sol.dual_slack.len() != nb {
        return Err(SdpError::DimensionMismatch("block count"));
    }
    for (b, &d) in problem.blocks.iter().enumerate() {
        let (x, z) = (&sol.block_values[b], &sol.dual_slack[b]);
        if x.nrows() != d || x.ncols() != d || z.nrows() != d || z.ncols() != d {
            return Err(SdpError::DimensionMismatch("block size"));
        }
    }
    if sol.free_values.len() != problem.free_vars {
        return Err(SdpError::DimensionMismatch("free variables"));
    }
    if sol.dual.len() != problem.constraints.len() {
        return Err(SdpError::DimensionMismatch("dual vector"));
    }
    let x = &sol.block_values;
    let u = &sol.free_values;
    let y = &sol.dual;

    let primal_residual = problem
        .constraints
        .iter()
        .map(|c| libm::fabs(c.rhs - c.form.eval(x, u)))
        .fold(0.0, f64::max);

    // R = C - A^*(y) - Z
    let mut r = problem.zero_blocks();
    problem.objective.scatter(1.0, &mut r);
    for (c, &yk) in problem.constraints.iter().zip(y) {
        c.form.scatter(-yk, &mut r);
    }
    let mut dual_residual = 0.0f64;
    for (rb, zb) in r.iter().zip(&sol.dual_slack) {
        dual_residual = dual_residual.max((rb - zb).amax());
    }
    let mut cf = vec![0.0; problem.free_vars];
    for &(f, c) in &problem.objective.free {
        cf[f] += c;
    }
    for (c, &yk) in problem.constraints.iter().zip(y) {
        for &(f, a) in &c.form.free {
            cf[f] -= a * yk;
        }
    }
    dual_residual = cf.iter().fold(dual_residual, |m, v| m.max(libm::fabs(*v)));

    let primal_objective = problem.objective.eval(x, u);
    let dual_objective: f64 = problem.constraints.iter().zip(y).map(|(c, yk)| c.rhs * yk).sum();
    let duality_gap = libm::fabs(primal_objective - dual_objective)
        / (1.0 + libm::fabs(primal_objective) + libm::fabs(dual_objective));
    Ok(ResidualReport {
        primal_residual,
        dual_residual,
        primal_objective,
        dual_objective,
        duality_gap,
        min_primal_eigenvalues: x.iter().map(min_eigenvalue).collect(),
        min_dual_eigenvalues: sol.dual_slack.iter().map(min_eigenvalue).collect(),
    })
}

/// Checks that every block passes a Cholesky test after a diagonal shift of
/// `psd_tol`.
pub fn blocks_psd(blocks: &[DMatrix<f64>], psd_tol: f64) -> bool {
    blocks.iter().all(|b| {
        let n = b.nrows();
        let shifted = b + DMatrix::<f64>::identity(n, n) * psd_tol;
        shifted.cholesky().is_some()
    })
}
