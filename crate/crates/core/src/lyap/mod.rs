//! Isolated-subsystem Lyapunov functions: quadratic synthesis with
//! level-set scaling, self-decay rates on boundary level sets, and the
//! magnitude constants used by the traditional comparison matrix.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::linalg::{max_real_eigenvalue, min_eigenvalue, solve_lyapunov};
use crate::model::Subsystem;
use crate::poly::{Monomial, PolyError, Polynomial, VarId};
use crate::rng::Stream;
use crate::sdp::SolverOptions;
use crate::sos::{
    prove_nonneg_on, Certificate, DomainSense, Multiplier, ProveOutcome, ScalarSign, SosError, SosExpr,
    SosProgram, SosStatus, EPS_MARGIN,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LyapError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error("subsystem {id}: linearization is not Hurwitz (max real eigenvalue {max_real_eigenvalue})")]
    NotHurwitz { id: usize, max_real_eigenvalue: f64 },
    #[error("subsystem {id}: Lyapunov equation has no positive definite solution")]
    NoLyapunovSolution { id: usize },
    #[error("subsystem {id}: largest certified level {gamma_max} is below the floor {floor}")]
    LevelFloor { id: usize, gamma_max: f64, floor: f64 },
    #[error("{what}: SOS program {status:?}")]
    Constant { what: &'static str, status: SosStatus },
    #[error("Lyapunov function must have an even positive lowest degree, got {0}")]
    BadDegree(u32),
    #[error("level {0} outside (0, 1]")]
    BadLevel(f64),
}

/// How `v` was obtained from the unscaled candidate: `v = unscaled / gamma_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub unscaled: Polynomial,
    pub gamma_max: f64,
    /// The search hit `gamma_cap` without failing.
    pub capped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovFn {
    pub id: usize,
    pub vars: Vec<VarId>,
    pub v: Polynomial,
    /// Lowest monomial degree of `v`.
    pub d: u32,
    pub scaling: Scaling,
}

impl LyapunovFn {
    /// Wraps an externally supplied function (e.g. a loaded quartic).
    pub fn from_polynomial(id: usize, vars: &[VarId], v: Polynomial) -> Result<Self, LyapError> {
        let d = v.min_degree();
        if d == 0 || d % 2 == 1 {
            return Err(LyapError::BadDegree(d));
        }
        Ok(LyapunovFn {
            id,
            vars: vars.to_vec(),
            scaling: Scaling {
                unscaled: v.clone(),
                gamma_max: 1.0,
                capped: false,
            },
            v,
            d,
        })
    }

    /// `(sum x^2)^(d/2)`.
    pub fn norm_pow(&self) -> Polynomial {
        Polynomial::norm_squared(self.v.universe(), &self.vars).pow(self.d / 2)
    }

    pub fn lie_derivative(&self, field: &[Polynomial]) -> Result<Polynomial, LyapError> {
        Ok(self.v.lie_derivative(field, &self.vars)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapOptions {
    pub sdp: SolverOptions,
    /// Absolute tolerance of every scalar bisection.
    pub tol: f64,
    pub gamma_cap: f64,
    pub gamma_floor: f64,
    /// `eps |x|^2` margin making `V' < 0` strict away from the origin.
    pub margin: f64,
}

impl Default for LyapOptions {
    fn default() -> Self {
        LyapOptions {
            sdp: SolverOptions::default(),
            tol: 1e-3,
            gamma_cap: 1e3,
            gamma_floor: 1e-4,
            margin: EPS_MARGIN,
        }
    }
}

/// Result of the quadratic synthesis.
#[derive(Clone, Debug)]
pub struct QuadraticLf {
    pub lf: LyapunovFn,
    pub p: DMatrix<f64>,
    /// Putinar certificate of `-V~' - eps|x|^2 >= 0` on `{V~ <= gamma_max}`.
    pub certificate: Certificate,
}

fn decrease_certificate(
    vt: &Polynomial,
    vdot: &Polynomial,
    vars: &[VarId],
    gamma: f64,
    opts: &LyapOptions,
) -> Result<Option<Certificate>, LyapError> {
    let u = vt.universe();
    let target = vdot.scale(-1.0).checked_sub(&Polynomial::norm_squared(u, vars).scale(opts.margin))?;
    let k = Polynomial::constant(u, gamma).checked_sub(vt)?;
    Ok(match prove_nonneg_on(&target, &[(k, DomainSense::NonNeg)], None, &opts.sdp)? {
        ProveOutcome::Certificate(c) => Some(c),
        // A solver failure cannot certify the level, so it counts as a miss.
        ProveOutcome::Infeasible | ProveOutcome::Unknown => None,
    })
}

/// `P` from `J^T P + P J = -I`, then the largest level `gamma_max` on which
/// `V~ = x^T P x` decreases (bisection, absolute tolerance `opts.tol`), and
/// `V = V~ / gamma_max`.
pub fn synth_quadratic_lf(sub: &Subsystem, opts: &LyapOptions) -> Result<QuadraticLf, LyapError> {
    let j = sub.linearization();
    let lam = max_real_eigenvalue(&j);
    if !(lam < 0.0) {
        return Err(LyapError::NotHurwitz {
            id: sub.id,
            max_real_eigenvalue: lam,
        });
    }
    let n = sub.dim();
    let p = solve_lyapunov(&j, &DMatrix::identity(n, n)).ok_or(LyapError::NoLyapunovSolution { id: sub.id })?;
    if !(min_eigenvalue(&p) > 0.0) {
        return Err(LyapError::NoLyapunovSolution { id: sub.id });
    }
    let u = sub.f[0].universe();
    let mut terms = Vec::new();
    for r in 0..n {
        for c in r..n {
            let coef = if r == c { p[(r, r)] } else { 2.0 * p[(r, c)] };
            let m = Monomial::var(sub.state_vars[r]).mul(&Monomial::var(sub.state_vars[c]));
            terms.push((m, coef));
        }
    }
    let vt = Polynomial::from_terms(u, terms);
    let vdot = vt.lie_derivative(&sub.f, &sub.state_vars)?;

    let (gamma_max, capped, cert) = match decrease_certificate(&vt, &vdot, &sub.state_vars, opts.gamma_cap, opts)? {
        Some(c) => (opts.gamma_cap, true, c),
        None => {
            let (mut lo, mut hi) = (0.0, opts.gamma_cap);
            let mut best = None;
            while hi - lo > opts.tol {
                let mid = 0.5 * (lo + hi);
                match decrease_certificate(&vt, &vdot, &sub.state_vars, mid, opts)? {
                    Some(c) => {
                        lo = mid;
                        best = Some(c);
                    }
                    None => hi = mid,
                }
            }
            match best {
                Some(c) if lo >= opts.gamma_floor => (lo, false, c),
                _ => {
                    return Err(LyapError::LevelFloor {
                        id: sub.id,
                        gamma_max: lo,
                        floor: opts.gamma_floor,
                    })
                }
            }
        }
    };
    Ok(QuadraticLf {
        lf: LyapunovFn {
            id: sub.id,
            vars: sub.state_vars.clone(),
            v: vt.scale(1.0 / gamma_max),
            d: 2,
            scaling: Scaling {
                unscaled: vt,
                gamma_max,
                capped,
            },
        },
        p,
        certificate: cert,
    })
}

/// Self-decay rate on the boundary level set `{V = gamma}`.
#[derive(Clone, Debug, PartialEq)]
pub enum DecayRate {
    /// `alpha >= 0`, clamped at zero when the optimum is negative.
    Rate(f64),
    /// The solver could not decide; never to be read as zero.
    Unknown,
}

impl DecayRate {
    pub fn value(&self) -> Option<f64> {
        match self {
            DecayRate::Rate(a) => Some(*a),
            DecayRate::Unknown => None,
        }
    }
}

fn boundary_multiplier_degree(lf: &LyapunovFn, target_degree: u32) -> u32 {
    target_degree.saturating_sub(lf.v.degree())
}

/// Largest `alpha` with `V' <= -alpha V` on `{V = gamma}`, computed directly
/// as `max alpha` s.t. `-V' - alpha V - l (gamma - V)` is SOS with a
/// sign-free multiplier `l`.
pub fn self_decay_rate(
    lf: &LyapunovFn,
    f: &[Polynomial],
    gamma: f64,
    opts: &LyapOptions,
) -> Result<DecayRate, LyapError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LyapError::BadLevel(gamma));
    }
    let u = lf.v.universe();
    let vdot = lf.lie_derivative(f)?;
    let mut prog = SosProgram::new(u);
    let alpha = prog.new_scalar(ScalarSign::Free);
    let target = SosExpr::known(vdot.scale(-1.0)).sub(&prog.expr(alpha).mul_poly(&lf.v)?)?;
    let k = Polynomial::constant(u, gamma).checked_sub(&lf.v)?;
    let m = Multiplier {
        vars: lf.vars.clone(),
        degree: boundary_multiplier_degree(lf, vdot.degree().max(lf.v.degree())),
    };
    prog.add_putinar(target, &[], &[(k, m)])?;
    prog.set_objective(&[(alpha, -1.0)])?;
    let sol = prog.solve(&opts.sdp)?;
    Ok(match sol.status {
        SosStatus::Optimal | SosStatus::Feasible => DecayRate::Rate(sol.scalar(alpha).max(0.0)),
        // Not even alpha -> -inf works: the boundary admits no certificate
        // at these degrees, so the rate is reported as zero.
        SosStatus::Infeasible => DecayRate::Rate(0.0),
        SosStatus::Unbounded | SosStatus::Unknown => DecayRate::Unknown,
    })
}

/// Certificate of `-V' - alpha V >= 0` on `{V = gamma}` at a fixed `alpha`;
/// `None` when none is found.
pub fn verify_decay(
    lf: &LyapunovFn,
    f: &[Polynomial],
    gamma: f64,
    alpha: f64,
    opts: &LyapOptions,
) -> Result<Option<Certificate>, LyapError> {
    let u = lf.v.universe();
    let vdot = lf.lie_derivative(f)?;
    let target = vdot.scale(-1.0).checked_sub(&lf.v.scale(alpha))?;
    let k = Polynomial::constant(u, gamma).checked_sub(&lf.v)?;
    let deg = boundary_multiplier_degree(lf, target.degree());
    Ok(match prove_nonneg_on(&target, &[(k, DomainSense::Zero)], Some(&[deg]), &opts.sdp)? {
        ProveOutcome::Certificate(c) => Some(c),
        _ => None,
    })
}

/// Magnitude bounds on `{V_i <= gamma}`:
/// `eta1 |x|^d <= V <= eta2 |x|^d`, `V' <= -eta3 |x|^d`,
/// `|grad V_i . g_ij| <= zeta_ij |x_i|^(d-1) |x_j|`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundConstants {
    pub id: usize,
    pub gamma: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    /// `(j, zeta_ij)` for every supplied neighbor.
    pub zeta: Vec<(usize, f64)>,
}

impl BoundConstants {
    pub fn zeta(&self, j: usize) -> f64 {
        self.zeta.iter().find(|z| z.0 == j).map(|z| z.1).unwrap_or(0.0)
    }
}

/// A neighbor's Lyapunov function together with the coupling `g_ij`.
pub struct Coupling<'a> {
    pub from: usize,
    pub lf: &'a LyapunovFn,
    pub g: &'a [Polynomial],
}

/// Optimizes one scalar `c` subject to `base + c * coef` being nonnegative on
/// the product of sublevel sets; returns the optimal `c`.
fn optimize_scalar_on(
    what: &'static str,
    base: &Polynomial,
    coef: &Polynomial,
    maximize: bool,
    domain: &[(&LyapunovFn, f64)],
    opts: &LyapOptions,
) -> Result<f64, LyapError> {
    let u = base.universe();
    let mut prog = SosProgram::new(u);
    let c = prog.new_scalar(ScalarSign::Free);
    let target = SosExpr::known(base.clone()).add(&prog.expr(c).mul_poly(coef)?)?;
    let mut vars: Vec<VarId> = domain.iter().flat_map(|(lf, _)| lf.vars.iter().copied()).collect();
    vars.sort_unstable();
    let top = target.known.degree().max(coef.degree());
    let ineqs: Vec<(Polynomial, Multiplier)> = domain
        .iter()
        .map(|(lf, g)| -> Result<_, LyapError> {
            let k = Polynomial::constant(u, *g).checked_sub(&lf.v)?;
            let deg = top.saturating_sub(k.degree());
            Ok((k, Multiplier { vars: vars.clone(), degree: deg }))
        })
        .collect::<Result<_, _>>()?;
    prog.add_putinar(target, &ineqs, &[])?;
    prog.set_objective(&[(c, if maximize { -1.0 } else { 1.0 })])?;
    let sol = prog.solve(&opts.sdp)?;
    if !sol.status.is_feasible() {
        return Err(LyapError::Constant { what, status: sol.status });
    }
    Ok(sol.scalar(c))
}

pub fn bound_constants(
    lf: &LyapunovFn,
    f: &[Polynomial],
    couplings: &[Coupling<'_>],
    gamma: f64,
    opts: &LyapOptions,
) -> Result<BoundConstants, LyapError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LyapError::BadLevel(gamma));
    }
    if lf.d == 0 || lf.d % 2 == 1 {
        return Err(LyapError::BadDegree(lf.d));
    }
    let xd = lf.norm_pow();
    let dom = [(lf, gamma)];
    // V - eta1 |x|^d >= 0, maximize eta1.
    let eta1 = optimize_scalar_on("eta1", &lf.v, &xd.scale(-1.0), true, &dom, opts)?;
    // eta2 |x|^d - V >= 0, minimize eta2.
    let eta2 = optimize_scalar_on("eta2", &lf.v.scale(-1.0), &xd, false, &dom, opts)?;
    let vdot = lf.lie_derivative(f)?;
    let eta3 = optimize_scalar_on("eta3", &vdot.scale(-1.0), &xd.scale(-1.0), true, &dom, opts)?;
    let mut zeta = Vec::with_capacity(couplings.len());
    let grad = lf.v.gradient(&lf.vars);
    for c in couplings {
        let mut flow = Polynomial::zero(lf.v.universe());
        for (dv, g) in grad.iter().zip(c.g) {
            flow = flow.checked_add(&dv.checked_mul(g)?)?;
        }
        if flow.is_zero() {
            zeta.push((c.from, 0.0));
            continue;
        }
        let u = lf.v.universe();
        let weight = Polynomial::norm_squared(u, &lf.vars)
            .pow(lf.d - 1)
            .checked_mul(&Polynomial::norm_squared(u, &c.lf.vars))?;
        let sq = flow.checked_mul(&flow)?;
        let s = optimize_scalar_on("zeta", &sq.scale(-1.0), &weight, false, &[(lf, gamma), (c.lf, gamma)], opts)?;
        zeta.push((c.from, libm::sqrt(s.max(0.0))));
    }
    Ok(BoundConstants {
        id: lf.id,
        gamma,
        eta1,
        eta2,
        eta3,
        zeta,
    })
}

/// Smallest `r > 0` with `v(r * dir) = level` along a ray, by doubling then
/// bisection. `dir` is in the local coordinates `vars`.
pub fn radial_level(v: &Polynomial, vars: &[VarId], dir: &[f64], level: f64) -> f64 {
    let n = v.universe().len();
    let at = |r: f64| {
        let mut x = vec![0.0; n];
        for (k, &var) in vars.iter().enumerate() {
            x[var.index()] = r * dir[k];
        }
        v.eval(&x)
    };
    if level <= 0.0 {
        return 0.0;
    }
    let d = v.degree();
    if d > 0 && v.min_degree() == d {
        // Homogeneous: v(r u) = r^d v(u).
        let base = at(1.0);
        if base > 0.0 {
            return libm::pow(level / base, 1.0 / d as f64);
        }
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while at(hi) < level && guard < 200 {
        hi *= 2.0;
        guard += 1;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Uniform random direction on the unit sphere of dimension `n`.
pub fn random_direction(n: usize, rng: &mut Stream) -> Vec<f64> {
    loop {
        let d: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let norm = libm::sqrt(d.iter().map(|x| x * x).sum::<f64>());
        if norm > 1e-12 {
            return d.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Random points of `{V <= level}` (star-shaped sets): direction uniform on
/// the sphere, radius fraction uniform. Returned in local coordinates.
pub fn sample_sublevel(lf: &LyapunovFn, level: f64, count: usize, rng: &mut Stream) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let dir = random_direction(lf.vars.len(), rng);
            let r = radial_level(&lf.v, &lf.vars, &dir, level) * rng.unit();
            dir.into_iter().map(|x| x * r).collect()
        })
        .collect()
}

/// Scatters local coordinates into a full-universe point.
pub fn embed(point: &mut [f64], vars: &[VarId], local: &[f64]) {
    for (k, &v) in vars.iter().enumerate() {
        point[v.index()] = local[k];
    }
}

#[cfg(test)]
mod tests;
