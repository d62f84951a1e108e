//! Per-agent SOS programs. Every program of agent `i` lives on the variables
//! of its neighborhood (sequential) or of one pair `(i, j)` (parallel).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{CertifyError, CertifyOptions};
use crate::lyap::LyapunovFn;
use crate::model::Network;
use crate::poly::{Polynomial, VarId};
use crate::sos::{
    Certificate, DecisionVarId, Multiplier, ScalarSign, SosExpr, SosProgram, SosSolution, SosStatus,
};

/// Network plus the Lyapunov functions and the derived Lie derivatives.
pub struct Ctx<'a> {
    pub net: &'a Network,
    pub lfs: &'a [LyapunovFn],
    /// `grad V_i . f_i`
    pub vdot_iso: Vec<Polynomial>,
    /// `grad V_i . (f_i + g_i)`
    pub vdot: Vec<Polynomial>,
    /// `grad V_i . g_ij`, keyed by `(i, j)` subsystem ids.
    pub flow: BTreeMap<(usize, usize), Polynomial>,
}

impl<'a> Ctx<'a> {
    pub fn new(net: &'a Network, lfs: &'a [LyapunovFn]) -> Result<Self, CertifyError> {
        if lfs.len() != net.subsystems().len() {
            return Err(CertifyError::Misaligned);
        }
        let mut vdot_iso = Vec::with_capacity(lfs.len());
        let mut vdot = Vec::with_capacity(lfs.len());
        let mut flow = BTreeMap::new();
        for (s, lf) in net.subsystems().iter().zip(lfs) {
            if s.id != lf.id || s.state_vars != lf.vars {
                return Err(CertifyError::Misaligned);
            }
            let iso = lf.lie_derivative(&s.f)?;
            let mut full = iso.clone();
            for it in net.incoming(s.id) {
                let fl = lf.lie_derivative(&it.g)?;
                full = full.checked_add(&fl)?;
                flow.insert((s.id, it.from), fl);
            }
            vdot_iso.push(iso);
            vdot.push(full);
        }
        Ok(Ctx {
            net,
            lfs,
            vdot_iso,
            vdot,
            flow,
        })
    }

    pub fn m(&self) -> usize {
        self.lfs.len()
    }

    pub fn index(&self, id: usize) -> usize {
        self.net.index_of(id).expect("subsystem id")
    }

    pub fn lf(&self, id: usize) -> &LyapunovFn {
        &self.lfs[self.index(id)]
    }

    /// `N_i` as ids, `i` first.
    pub fn hood(&self, id: usize) -> &[usize] {
        self.net.neighborhood(id)
    }

    /// State variables of the given subsystems.
    pub fn vars_of(&self, ids: &[usize]) -> Vec<VarId> {
        let mut v: Vec<VarId> = ids.iter().flat_map(|&j| self.lf(j).vars.iter().copied()).collect();
        v.sort_unstable();
        v
    }

    pub fn flow(&self, i: usize, j: usize) -> Polynomial {
        self.flow
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(|| Polynomial::zero(self.net.universe()))
    }

    fn konst(&self, c: f64) -> Polynomial {
        Polynomial::constant(self.net.universe(), c)
    }

    /// `c - V_j`
    pub fn below(&self, j: usize, c: f64) -> Result<Polynomial, CertifyError> {
        Ok(self.konst(c).checked_sub(&self.lf(j).v)?)
    }

    /// `V_j - c`
    pub fn above(&self, j: usize, c: f64) -> Result<Polynomial, CertifyError> {
        Ok(self.lf(j).v.checked_sub(&self.konst(c))?)
    }
}

/// Interval `[lo, hi]` for `V_sub` describing (part of) a certificate domain.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelBox {
    pub sub: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Even multiplier degree so that `sigma * k` reaches the target degree.
fn mult_degree(top: u32, k: &Polynomial) -> u32 {
    let d = top.saturating_sub(k.degree());
    d - d % 2
}

/// A Putinar-form local program and its domain description.
pub struct Local {
    pub prog: SosProgram,
    pub handle: crate::sos::PutinarHandle,
    pub domain: Vec<LevelBox>,
    pub vars: Vec<VarId>,
}

pub enum Solved {
    Feasible { sol: SosSolution, cert: Certificate },
    Infeasible,
    /// Solver stalled; carries its last iterate when there is one.
    Unknown(Option<SosSolution>),
}

impl Solved {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Solved::Feasible { .. })
    }
}

impl Local {
    /// `target - sum s_k k >= 0` with SOS `s_k` on `ineqs` and free multipliers
    /// on `eqs`, all multipliers over `vars`.
    fn build(
        mut prog: SosProgram,
        target: SosExpr,
        ineqs: Vec<Polynomial>,
        eqs: Vec<Polynomial>,
        vars: Vec<VarId>,
        domain: Vec<LevelBox>,
    ) -> Result<Local, CertifyError> {
        let mut top = target.known.degree();
        for (q, _) in &target.terms {
            top = top.max(q.degree());
        }
        let spec = |k: Polynomial| {
            let degree = mult_degree(top, &k);
            (k, Multiplier { vars: vars.clone(), degree })
        };
        let ineqs: Vec<_> = ineqs.into_iter().map(spec).collect();
        let eqs: Vec<_> = eqs.into_iter().map(spec).collect();
        let handle = prog.add_putinar(target, &ineqs, &eqs)?;
        Ok(Local {
            prog,
            handle,
            domain,
            vars,
        })
    }

    pub fn solve(&self, opts: &CertifyOptions) -> Result<Solved, CertifyError> {
        let sol = self.prog.solve(&opts.sdp)?;
        Ok(match sol.status {
            SosStatus::Optimal | SosStatus::Feasible => {
                let cert = self.prog.certificate(&sol, &self.handle)?;
                Solved::Feasible { sol, cert }
            }
            SosStatus::Infeasible => Solved::Infeasible,
            SosStatus::Unbounded => Solved::Unknown(None),
            SosStatus::Unknown => Solved::Unknown(Some(sol)),
        })
    }

    /// Polynomial variables the program touches outside `allowed`.
    pub fn foreign_vars(&self, allowed: &[VarId]) -> usize {
        self.prog.variables_used().iter().filter(|v| !allowed.contains(v)).count()
    }
}

/// `c >= 0` as a degree-0 SOS constraint.
fn add_scalar_nonneg(prog: &mut SosProgram, e: SosExpr) -> Result<(), CertifyError> {
    prog.add_sos(e)?;
    Ok(())
}

pub struct DirectRow {
    pub local: Local,
    /// `a_ij` for `j` in `N_i` order.
    pub a: Vec<DecisionVarId>,
}

/// Single-CS row `i`: `-V_i' + sum_j a_ij V_j >= 0` on `cap_j {V_j <= gamma_j}`.
/// With `rowsum_objective`, the row-sum is minimized and no sign condition is
/// imposed; otherwise both row conditions are required with the margin.
pub fn direct_row(
    ctx: &Ctx<'_>,
    i: usize,
    gammas: &[f64],
    rowsum_objective: bool,
    opts: &CertifyOptions,
) -> Result<DirectRow, CertifyError> {
    let u = ctx.net.universe();
    let hood = ctx.hood(i);
    let mut prog = SosProgram::new(u);
    let a: Vec<DecisionVarId> = hood
        .iter()
        .map(|&j| prog.new_scalar(if j == i { ScalarSign::Free } else { ScalarSign::Nonnegative }))
        .collect();
    let mut target = SosExpr::known(ctx.vdot[ctx.index(i)].scale(-1.0));
    for (&j, &aj) in hood.iter().zip(&a) {
        target = target.add(&prog.expr(aj).mul_poly(&ctx.lf(j).v)?)?;
    }
    let mut rowsum = SosExpr::constant(u, 0.0);
    let mut inv = SosExpr::constant(u, 0.0);
    for (&j, &aj) in hood.iter().zip(&a) {
        rowsum = rowsum.add(&prog.expr(aj))?;
        inv = inv.add(&prog.expr(aj).scale(gammas[ctx.index(j)]))?;
    }
    if rowsum_objective {
        let terms: Vec<(DecisionVarId, f64)> = a.iter().map(|&v| (v, 1.0)).collect();
        prog.set_objective(&terms)?;
    } else {
        add_scalar_nonneg(&mut prog, rowsum.scale(-1.0).add_poly(&ctx.konst(-opts.margin))?)?;
        add_scalar_nonneg(&mut prog, inv.scale(-1.0).add_poly(&ctx.konst(-opts.margin))?)?;
    }
    let mut ineqs = Vec::new();
    let mut domain = Vec::new();
    for &j in hood {
        let g = gammas[ctx.index(j)];
        ineqs.push(ctx.below(j, g)?);
        domain.push(LevelBox { sub: ctx.index(j), lo: 0.0, hi: g });
    }
    let vars = ctx.vars_of(hood);
    Ok(DirectRow {
        local: Local::build(prog, target, ineqs, Vec::new(), vars, domain)?,
        a,
    })
}

/// Phase-1 check of agent `i` at candidate level `g_i` with neighbor levels
/// taken from `levels`: `V_i' <= -eps |x_i|^2` on `{V_i = g_i} cap_j {V_j <= g_j}`.
pub fn phase1_check(ctx: &Ctx<'_>, i: usize, g_i: f64, levels: &[f64], opts: &CertifyOptions) -> Result<Local, CertifyError> {
    let u = ctx.net.universe();
    let lf = ctx.lf(i);
    let prog = SosProgram::new(u);
    let target = SosExpr::known(
        ctx.vdot[ctx.index(i)]
            .scale(-1.0)
            .checked_sub(&Polynomial::norm_squared(u, &lf.vars).scale(opts.margin))?,
    );
    let hood = ctx.hood(i);
    let mut ineqs = Vec::new();
    let mut domain = vec_box(ctx.index(i), g_i, g_i);
    for &j in &hood[1..] {
        let g = levels[ctx.index(j)];
        ineqs.push(ctx.below(j, g)?);
        domain.push(LevelBox { sub: ctx.index(j), lo: 0.0, hi: g });
    }
    let eqs = alloc::vec![ctx.below(i, g_i)?];
    Local::build(prog, target, ineqs, eqs, ctx.vars_of(hood), domain)
}

fn vec_box(sub: usize, lo: f64, hi: f64) -> Vec<LevelBox> {
    alloc::vec![LevelBox { sub, lo, hi }]
}

pub struct EdgeLocal {
    pub local: Local,
    /// `None` when the weight was fixed.
    pub w: Option<DecisionVarId>,
    pub a: Option<DecisionVarId>,
    fixed: f64,
}

impl EdgeLocal {
    pub fn weight(&self, sol: &SosSolution) -> f64 {
        self.w.map_or(self.fixed, |w| sol.scalar(w).max(0.0))
    }
}

/// How the edge weight `w` enters a program.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    Minimize,
    Fixed(f64),
}

/// `-w grad V_i . f_i` and the weight variable.
fn weight_term(prog: &mut SosProgram, ctx: &Ctx<'_>, i: usize, weight: Weight) -> Result<(SosExpr, Option<DecisionVarId>), CertifyError> {
    let neg_iso = ctx.vdot_iso[ctx.index(i)].scale(-1.0);
    Ok(match weight {
        Weight::Fixed(c) => (SosExpr::known(neg_iso.scale(c)), None),
        Weight::Minimize => {
            let w = prog.new_scalar(ScalarSign::Nonnegative);
            prog.set_objective(&[(w, 1.0)])?;
            (prog.expr(w).mul_poly(&neg_iso)?, Some(w))
        }
    })
}

/// Parallel Phase-1 edge program: minimize `w >= 0` such that
/// `grad V_i . (w f_i + g_ij) <= 0` on `{V_i = g_i} cap {V_j <= g_j}`.
pub fn phase1_edge(ctx: &Ctx<'_>, i: usize, j: usize, g_i: f64, g_j: f64, weight: Weight) -> Result<EdgeLocal, CertifyError> {
    let u = ctx.net.universe();
    let mut prog = SosProgram::new(u);
    let (wt, w) = weight_term(&mut prog, ctx, i, weight)?;
    let target = SosExpr::known(ctx.flow(i, j).scale(-1.0)).add(&wt)?;
    let domain = alloc::vec![
        LevelBox { sub: ctx.index(i), lo: g_i, hi: g_i },
        LevelBox { sub: ctx.index(j), lo: 0.0, hi: g_j },
    ];
    let local = Local::build(
        prog,
        target,
        alloc::vec![ctx.below(j, g_j)?],
        alloc::vec![ctx.below(i, g_i)?],
        ctx.vars_of(&[i, j]),
        domain,
    )?;
    let fixed = if let Weight::Fixed(c) = weight { c } else { 0.0 };
    Ok(EdgeLocal { local, w, a: None, fixed })
}

/// How the Phase-2 rate `a_ii` enters a program.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rate {
    /// Free in `[-cap, -margin]`; minimized when `minimize` is set.
    Search { minimize: bool },
    Fixed(f64),
}

pub struct Phase2Local {
    pub local: Local,
    pub a: Option<DecisionVarId>,
}

fn rate_term(
    prog: &mut SosProgram,
    ctx: &Ctx<'_>,
    rate: Rate,
    shifted: &Polynomial,
    opts: &CertifyOptions,
) -> Result<(SosExpr, Option<DecisionVarId>), CertifyError> {
    let u = ctx.net.universe();
    Ok(match rate {
        Rate::Fixed(a) => (SosExpr::known(shifted.scale(a)), None),
        Rate::Search { .. } => {
            let a = prog.new_scalar(ScalarSign::Free);
            let ea = SosExpr::var(u, a);
            add_scalar_nonneg(prog, ea.scale(-1.0).add_poly(&ctx.konst(-opts.margin))?)?;
            add_scalar_nonneg(prog, ea.add_poly(&ctx.konst(opts.rate_cap))?)?;
            (ea.mul_poly(shifted)?, Some(a))
        }
    })
}

/// Phase-2 check of agent `i`: `V_i' <= a (V_i - g_next)` on
/// `{g_next <= V_i <= g_i} cap_j {V_j <= g_j}` with `a <= -eps`.
/// `levels` holds the current `gamma^k` of every subsystem (own included).
pub fn phase2_check(
    ctx: &Ctx<'_>,
    i: usize,
    g_next: f64,
    levels: &[f64],
    rate: Rate,
    opts: &CertifyOptions,
) -> Result<Phase2Local, CertifyError> {
    let u = ctx.net.universe();
    let mut prog = SosProgram::new(u);
    let shifted = ctx.above(i, g_next)?;
    let (rt, a) = rate_term(&mut prog, ctx, rate, &shifted, opts)?;
    let target = SosExpr::known(ctx.vdot[ctx.index(i)].scale(-1.0)).add(&rt)?;
    if let (Some(a), Rate::Search { minimize: true }) = (a, rate) {
        prog.set_objective(&[(a, 1.0)])?;
    }
    let hood = ctx.hood(i);
    let mut ineqs = alloc::vec![shifted];
    let mut domain = Vec::new();
    for &j in hood {
        let g = levels[ctx.index(j)];
        ineqs.push(ctx.below(j, g)?);
        let lo = if j == i { g_next } else { 0.0 };
        domain.push(LevelBox { sub: ctx.index(j), lo, hi: g });
    }
    Ok(Phase2Local {
        local: Local::build(prog, target, ineqs, Vec::new(), ctx.vars_of(hood), domain)?,
        a,
    })
}

/// Parallel Phase-2 edge program: minimize `w >= 0` such that
/// `grad V_i . (w f_i + g_ij) <= a_ij (V_i - g_next)` on
/// `{g_next <= V_i <= g_i} cap {V_j <= g_j}`, `a_ij <= -eps`.
pub fn phase2_edge(
    ctx: &Ctx<'_>,
    i: usize,
    j: usize,
    g_next: f64,
    g_i: f64,
    g_j: f64,
    weight: Weight,
    opts: &CertifyOptions,
) -> Result<EdgeLocal, CertifyError> {
    let u = ctx.net.universe();
    let mut prog = SosProgram::new(u);
    let (wt, w) = weight_term(&mut prog, ctx, i, weight)?;
    let shifted = ctx.above(i, g_next)?;
    let (rt, a) = rate_term(&mut prog, ctx, Rate::Search { minimize: false }, &shifted, opts)?;
    let target = SosExpr::known(ctx.flow(i, j).scale(-1.0)).add(&wt)?.add(&rt)?;
    let domain = alloc::vec![
        LevelBox { sub: ctx.index(i), lo: g_next, hi: g_i },
        LevelBox { sub: ctx.index(j), lo: 0.0, hi: g_j },
    ];
    let local = Local::build(
        prog,
        target,
        alloc::vec![shifted, ctx.below(i, g_i)?, ctx.below(j, g_j)?],
        Vec::new(),
        ctx.vars_of(&[i, j]),
        domain,
    )?;
    let fixed = if let Weight::Fixed(c) = weight { c } else { 0.0 };
    Ok(EdgeLocal { local, w, a, fixed })
}
