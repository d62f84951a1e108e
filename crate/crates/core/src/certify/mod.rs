//! Comparison-system constructions for interconnected systems: the
//! traditional single CS from magnitude bounds, the SOS-direct single CS, the
//! power transform between the two, and the distributed multiple-CS protocol.

mod audit;
pub mod local;
mod protocol;

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::linalg::max_real_eigenvalue;
use crate::lyap::{BoundConstants, LyapError, LyapunovFn};
use crate::model::Network;
use crate::poly::PolyError;
use crate::sdp::SolverOptions;
use crate::sos::{prove_nonneg_on, DomainSense, ProveOutcome, SosError, EPS_MARGIN};

pub use audit::{audit_certificate, CertRecord, Stage};
pub use local::{Ctx, LevelBox};
pub use protocol::{
    phase1_envelope, phase1_parallel, phase2_diagonal, phase2_parallel, phase2_round, run_protocol,
    run_protocol_with, AgentMessage, CertificationReport, Executor, LevelSequence, Mode, Phase, Phase2Step,
    Phase1Outcome, Round, SequentialExecutor, StepStatus, Verdict,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertifyError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Lyap(#[from] LyapError),
    #[error("Lyapunov functions do not match the network's subsystems")]
    Misaligned,
    #[error("subsystem {id}: level {value} outside {range}")]
    BadLevel { id: usize, value: f64, range: &'static str },
    #[error("subsystem {id}: nonpositive constant {name} = {value}")]
    NonPositiveConstant { id: usize, name: &'static str, value: f64 },
    #[error("Lyapunov functions have different lowest degrees")]
    MixedDegree,
    #[error("row {0}: power-transform hypothesis violated")]
    HypothesisViolated(usize),
    #[error("entry ({0}, {1}) must be positive")]
    NonPositiveRatio(usize, usize),
    #[error("dimension mismatch")]
    Dimension,
    #[error("replayed message log is missing {sender} at {round:?}")]
    MissingMessage { sender: usize, round: Round },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifyOptions {
    pub sdp: SolverOptions,
    /// Margin on every strict scalar inequality.
    pub margin: f64,
    /// Phase-1 increment.
    pub delta: f64,
    /// Phase-2 bisection tolerance and convergence threshold.
    pub tol: f64,
    pub max_rounds: usize,
    /// Lower bound `-rate_cap` on searched decay rates.
    pub rate_cap: f64,
    /// Smallest level used by the closing step, and the floor on neighbor
    /// levels inside local programs.
    pub closure_floor: f64,
    /// Samples per certificate in the audit (0 disables sampling).
    pub audit_samples: usize,
    pub audit_seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            sdp: SolverOptions::default(),
            margin: EPS_MARGIN,
            delta: 0.01,
            tol: 1e-3,
            max_rounds: 200,
            rate_cap: 1e3,
            closure_floor: 1e-3,
            audit_samples: 0,
            audit_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Traditional,
    Direct,
    PowerTransform,
    DiagonalK(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonMatrix {
    /// Subsystem ids labelling rows and columns.
    pub ids: Vec<usize>,
    pub a: DMatrix<f64>,
    pub domain_gammas: Vec<f64>,
    pub provenance: Provenance,
}

impl ComparisonMatrix {
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.a.nrows()).map(|i| self.a.row(i).sum()).collect()
    }

    pub fn max_row_sum(&self) -> f64 {
        self.row_sums().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_metzler(&self) -> bool {
        is_metzler(&self.a)
    }
}

pub fn is_metzler(a: &DMatrix<f64>) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] >= 0.0))
}

/// Weissenberger-style matrix for the `d`-th-root functions built from the
/// magnitude bounds: `a~_ii = -eta~3/eta~2`, `a~_ij = zeta~_ij / eta~1_j`.
pub fn traditional_single_cs(
    net: &Network,
    lfs: &[LyapunovFn],
    consts: &[BoundConstants],
) -> Result<ComparisonMatrix, CertifyError> {
    let m = net.subsystems().len();
    if lfs.len() != m || consts.len() != m {
        return Err(CertifyError::Misaligned);
    }
    let mut t1 = Vec::with_capacity(m);
    let mut t2 = Vec::with_capacity(m);
    let mut t3 = Vec::with_capacity(m);
    for (k, (lf, c)) in lfs.iter().zip(consts).enumerate() {
        if lf.id != net.subsystems()[k].id || c.id != lf.id {
            return Err(CertifyError::Misaligned);
        }
        for (name, v) in [("eta1", c.eta1), ("eta2", c.eta2), ("eta3", c.eta3)] {
            if !(v > 0.0) {
                return Err(CertifyError::NonPositiveConstant { id: c.id, name, value: v });
            }
        }
        let d = lf.d as f64;
        let e1 = libm::pow(c.eta1, 1.0 / d);
        let e2 = libm::pow(c.eta2, 1.0 / d);
        t1.push(e1);
        t2.push(e2);
        t3.push(c.eta3 * e2 / (d * c.eta2));
    }
    let mut a = DMatrix::zeros(m, m);
    for (i, c) in consts.iter().enumerate() {
        a[(i, i)] = -t3[i] / t2[i];
        let d = lfs[i].d as f64;
        for &(j, z) in &c.zeta {
            let jj = net.index_of(j).ok_or(CertifyError::Misaligned)?;
            let zt = z * t1[i] / (d * c.eta1);
            a[(i, jj)] = zt / t1[jj];
        }
    }
    Ok(ComparisonMatrix {
        ids: net.ids(),
        a,
        domain_gammas: consts.iter().map(|c| c.gamma).collect(),
        provenance: Provenance::Traditional,
    })
}

/// Power transform: `a_ii = d a~_ii + (d-1) sum_j a~_ij c_ij`,
/// `a_ij = a~_ij c_ij^(1-d)`. Requires `a~_ii + sum_j a~_ij c_ij < 0`.
pub fn power_transform(at: &DMatrix<f64>, c: &DMatrix<f64>, d: u32) -> Result<DMatrix<f64>, CertifyError> {
    let m = at.nrows();
    if at.ncols() != m || c.nrows() != m || c.ncols() != m || d == 0 {
        return Err(CertifyError::Dimension);
    }
    let df = d as f64;
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut hyp = at[(i, i)];
        let mut cross = 0.0;
        for j in 0..m {
            if j == i {
                continue;
            }
            if !(c[(i, j)] > 0.0) {
                return Err(CertifyError::NonPositiveRatio(i, j));
            }
            hyp += at[(i, j)] * c[(i, j)];
            cross += at[(i, j)] * c[(i, j)];
            a[(i, j)] = at[(i, j)] * libm::pow(c[(i, j)], 1.0 - df);
        }
        if !(hyp < 0.0) {
            return Err(CertifyError::HypothesisViolated(i));
        }
        a[(i, i)] = df * at[(i, i)] + (df - 1.0) * cross;
    }
    Ok(a)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GershgorinVerdict {
    /// `sum_j a_ij < 0`
    pub hurwitz_row: Vec<bool>,
    /// `sum_j a_ij gamma_j < 0`
    pub invariance_row: Vec<bool>,
    /// Independent eigenvalue test.
    pub eigen_hurwitz: bool,
}

impl GershgorinVerdict {
    pub fn rows_hurwitz(&self) -> bool {
        self.hurwitz_row.iter().all(|&b| b)
    }
}

pub fn gershgorin_verdict(a: &DMatrix<f64>, gammas: &[f64]) -> GershgorinVerdict {
    let m = a.nrows();
    GershgorinVerdict {
        hurwitz_row: (0..m).map(|i| a.row(i).sum() < 0.0).collect(),
        invariance_row: (0..m)
            .map(|i| (0..m).map(|j| a[(i, j)] * gammas[j]).sum::<f64>() < 0.0)
            .collect(),
        eigen_hurwitz: max_real_eigenvalue(a) < 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectMode {
    /// Row-sum and invariance conditions imposed with the margin.
    Feasibility,
    /// Row-sum minimized, no sign conditions.
    MinimizeRowSum,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowOutcome {
    /// Coefficients in `N_i` order.
    Row(Vec<(usize, f64)>),
    Infeasible,
    Unknown,
}

#[derive(Clone, Debug)]
pub enum DirectOutcome {
    Matrix(ComparisonMatrix),
    Infeasible { id: usize },
    Unknown { id: usize },
}

/// One row of the SOS-direct comparison matrix, with its audit record.
pub fn direct_row(
    ctx: &Ctx<'_>,
    i: usize,
    gammas: &[f64],
    mode: DirectMode,
    opts: &CertifyOptions,
) -> Result<(RowOutcome, Option<CertRecord>), CertifyError> {
    let row = local::direct_row(ctx, i, gammas, mode == DirectMode::MinimizeRowSum, opts)?;
    Ok(match row.local.solve(opts)? {
        local::Solved::Feasible { sol, cert } => {
            let coeffs = ctx.hood(i).iter().zip(&row.a).map(|(&j, &v)| (j, sol.scalar(v))).collect();
            let rec = audit_certificate(ctx, &cert, &row.local.domain, Stage::Direct, 0, i, None, opts)?;
            (RowOutcome::Row(coeffs), Some(rec))
        }
        local::Solved::Infeasible => (RowOutcome::Infeasible, None),
        local::Solved::Unknown(_) => (RowOutcome::Unknown, None),
    })
}

fn check_levels(net: &Network, gammas: &[f64], lo_open: bool, range: &'static str) -> Result<(), CertifyError> {
    if gammas.len() != net.subsystems().len() {
        return Err(CertifyError::Dimension);
    }
    for (s, &g) in net.subsystems().iter().zip(gammas) {
        let ok = if lo_open { g > 0.0 && g <= 1.0 } else { (0.0..1.0).contains(&g) };
        if !ok {
            return Err(CertifyError::BadLevel { id: s.id, value: g, range });
        }
    }
    Ok(())
}

/// SOS-direct single CS on `cap_i {V_i <= gamma_i}`; rows are solved
/// independently and assembled.
pub fn direct_single_cs(
    ctx: &Ctx<'_>,
    gammas: &[f64],
    mode: DirectMode,
    opts: &CertifyOptions,
) -> Result<(DirectOutcome, Vec<CertRecord>), CertifyError> {
    check_levels(ctx.net, gammas, true, "(0, 1]")?;
    let m = ctx.m();
    let mut a = DMatrix::zeros(m, m);
    let mut recs = Vec::new();
    for s in ctx.net.subsystems() {
        let (row, rec) = direct_row(ctx, s.id, gammas, mode, opts)?;
        recs.extend(rec);
        match row {
            RowOutcome::Row(coeffs) => {
                let i = ctx.index(s.id);
                for (j, v) in coeffs {
                    a[(i, ctx.index(j))] = v;
                }
            }
            RowOutcome::Infeasible => return Ok((DirectOutcome::Infeasible { id: s.id }, recs)),
            RowOutcome::Unknown => return Ok((DirectOutcome::Unknown { id: s.id }, recs)),
        }
    }
    Ok((
        DirectOutcome::Matrix(ComparisonMatrix {
            ids: ctx.net.ids(),
            a,
            domain_gammas: gammas.to_vec(),
            provenance: Provenance::Direct,
        }),
        recs,
    ))
}

/// Failed check of a user-supplied multiple-CS certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma2Failure {
    pub k: usize,
    pub id: usize,
    pub reason: String,
}

/// Checks a full (not necessarily diagonal) multiple-CS certificate:
/// `V_i' <= sum_j a_ij^k (V_j - gamma_j^(k+1))` on the annuli
/// `cap_{j in N_i} {gamma_j^(k+1) <= V_j <= gamma_j^k}`, the row conditions
/// `sum_j a_ij^k < 0`, and the `k = 0` invariance condition.
/// `gammas[k]` is the level vector `gamma^k`; `matrices.len() + 1 == gammas.len()`.
pub fn check_lemma2_certificate(
    ctx: &Ctx<'_>,
    matrices: &[DMatrix<f64>],
    gammas: &[Vec<f64>],
    opts: &CertifyOptions,
) -> Result<Vec<Lemma2Failure>, CertifyError> {
    if gammas.len() != matrices.len() + 1 {
        return Err(CertifyError::Dimension);
    }
    let m = ctx.m();
    let mut fails = Vec::new();
    let fail = |k, id, reason: &str| Lemma2Failure { k, id, reason: String::from(reason) };
    for (k, a) in matrices.iter().enumerate() {
        if a.nrows() != m || a.ncols() != m {
            return Err(CertifyError::Dimension);
        }
        if !is_metzler(a) {
            fails.push(fail(k, 0, "negative off-diagonal entry"));
            continue;
        }
        for s in ctx.net.subsystems() {
            let i = ctx.index(s.id);
            let hood = ctx.hood(s.id);
            // Entries outside N_i must vanish: the row only sees neighbors.
            if (0..m).any(|j| a[(i, j)] != 0.0 && !hood.contains(&ctx.net.subsystems()[j].id)) {
                fails.push(fail(k, s.id, "entry outside the neighborhood"));
                continue;
            }
            if !(a.row(i).sum() < 0.0) {
                fails.push(fail(k, s.id, "row sum not negative"));
                continue;
            }
            if k == 0 {
                let inv: f64 = (0..m).map(|j| a[(i, j)] * (gammas[0][j] - gammas[1][j])).sum();
                if !(inv < 0.0) {
                    fails.push(fail(k, s.id, "invariance condition"));
                    continue;
                }
            }
            let mut target = ctx.vdot[i].scale(-1.0);
            let mut domain = Vec::new();
            for &j in hood {
                let jj = ctx.index(j);
                target = target.checked_add(&ctx.above(j, gammas[k + 1][jj])?.scale(a[(i, jj)]))?;
                domain.push((ctx.above(j, gammas[k + 1][jj])?, DomainSense::NonNeg));
                domain.push((ctx.below(j, gammas[k][jj])?, DomainSense::NonNeg));
            }
            match prove_nonneg_on(&target, &domain, None, &opts.sdp)? {
                ProveOutcome::Certificate(_) => {}
                ProveOutcome::Infeasible => fails.push(fail(k, s.id, "SOS certificate infeasible")),
                ProveOutcome::Unknown => fails.push(fail(k, s.id, "SOS certificate not found")),
            }
        }
    }
    Ok(fails)
}

#[cfg(test)]
mod tests;
