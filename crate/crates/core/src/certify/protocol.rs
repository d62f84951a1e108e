//! Synchronous message-passing protocol for the multiple-CS certificate.
//!
//! Every round, each agent reads the last level its neighbors broadcast,
//! solves its local programs and broadcasts its new level. Agents never see
//! levels of non-neighbors: their view holds `NaN` there.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::audit::{audit_certificate, CertRecord, Stage};
use super::local::{self, Ctx, EdgeLocal, Local, Rate, Solved, Weight};
use super::{CertifyError, CertifyOptions};
use crate::poly::VarId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    /// Phase 1: invariant envelope.
    Envelope,
    /// Phase 2: contraction of the levels.
    Contraction,
    /// Closing attempt at zero on a small neighborhood of the limit.
    Closure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Round {
    pub phase: Phase,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentMessage {
    pub sender: usize,
    pub round: Round,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

/// Runs the independent per-agent work of one round.
pub trait Executor: Sync {
    fn map<R: Send>(&self, n: usize, f: &(dyn Fn(usize) -> R + Sync)) -> Vec<R>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SequentialExecutor;

impl Executor for SequentialExecutor {
    fn map<R: Send>(&self, n: usize, f: &(dyn Fn(usize) -> R + Sync)) -> Vec<R> {
        (0..n).map(f).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    ExponentiallyStable,
    ConvergesToLimitSet(Vec<f64>),
    Inconclusive(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Phase1Outcome {
    Envelope(Vec<f64>),
    /// The envelope of this subsystem would reach the unit level.
    Escaped { id: usize },
    Unknown { id: usize },
    NoConvergence,
}

/// Level sequences, indexed `[round][subsystem position]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelSequence {
    pub ids: Vec<usize>,
    /// Phase-1 iterates, starting at `v0`.
    pub envelope: Vec<Vec<f64>>,
    /// Phase-2 iterates, starting at `gamma^0`.
    pub levels: Vec<Vec<f64>>,
    /// `a_ii^k` per Phase-2 step (`None` when the step stalled or was idle).
    pub rates: Vec<Vec<Option<f64>>>,
    /// Parallel mode: `(j, w_ij^k)` per step and subsystem.
    pub weights: Vec<Vec<Vec<(usize, f64)>>>,
    pub limit: Vec<f64>,
    /// Rows `(j, a_ij)` of the closing single CS, when it succeeded.
    pub terminal: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificationReport {
    pub mode: Mode,
    pub v0: Vec<f64>,
    pub phase1: Option<Phase1Outcome>,
    pub sequence: LevelSequence,
    pub verdict: Verdict,
    pub certificates: Vec<CertRecord>,
    pub messages: Vec<AgentMessage>,
    /// Local programs that referenced variables outside their allowed set.
    pub locality_violations: usize,
    pub solves: usize,
    pub diagnostics: Vec<String>,
}

impl CertificationReport {
    pub fn envelope(&self) -> Option<&[f64]> {
        match &self.phase1 {
            Some(Phase1Outcome::Envelope(g)) => Some(g),
            _ => None,
        }
    }
}

/// Outcome of one agent's Phase-2 step.
#[derive(Clone, Debug, PartialEq)]
pub struct Phase2Step {
    pub id: usize,
    pub next: f64,
    pub rate: Option<f64>,
    pub weights: Vec<(usize, f64)>,
    pub status: StepStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepStatus {
    Certified,
    /// Already at zero; nothing to do.
    Idle,
    Stalled,
    Unknown,
}


/// Resolution of the fallback weight bisection.
const WEIGHT_TOL: f64 = 1e-2;

struct Bus<'l> {
    log: Vec<AgentMessage>,
    replay: Option<&'l [AgentMessage]>,
}

impl Bus<'_> {
    fn publish(&mut self, ctx: &Ctx<'_>, round: Round, values: &[f64]) {
        for (s, &g) in ctx.net.subsystems().iter().zip(values) {
            self.log.push(AgentMessage { sender: s.id, round, gamma: g });
        }
    }

    /// Agent `i`'s view of round `round`: neighbor levels, `NaN` elsewhere.
    /// The own entry is filled from `own`. Neighbor levels are clamped below
    /// at `floor`: `{V_j <= 0}` is a point that Putinar multipliers cannot
    /// exploit, and a larger neighbor domain only strengthens the claim.
    fn view(&self, ctx: &Ctx<'_>, i: usize, round: Round, own: f64, floor: f64) -> Result<Vec<f64>, CertifyError> {
        let source = self.replay.unwrap_or(&self.log);
        let mut v = vec![f64::NAN; ctx.m()];
        v[ctx.index(i)] = own;
        for &j in &ctx.hood(i)[1..] {
            let msg = source
                .iter()
                .find(|m| m.sender == j && m.round == round)
                .ok_or(CertifyError::MissingMessage { sender: j, round })?;
            v[ctx.index(j)] = msg.gamma.max(floor);
        }
        Ok(v)
    }
}

#[derive(Default)]
struct AgentOut {
    level: f64,
    rate: Option<f64>,
    weights: Vec<(usize, f64)>,
    status: Option<StepStatus>,
    escaped: bool,
    unknown: bool,
    certs: Vec<CertRecord>,
    foreign: usize,
    solves: usize,
}

/// Bookkeeping shared by the agent routines.
struct Agent<'c, 'a> {
    ctx: &'c Ctx<'a>,
    opts: &'c CertifyOptions,
    mode: Mode,
    out: AgentOut,
    round: usize,
    id: usize,
}

impl Agent<'_, '_> {
    fn allowed(&self, edge: Option<usize>) -> Vec<VarId> {
        match edge {
            Some(j) => self.ctx.vars_of(&[self.id, j]),
            None => self.ctx.vars_of(self.ctx.hood(self.id)),
        }
    }

    fn run(&mut self, l: &Local, edge: Option<usize>) -> Result<Solved, CertifyError> {
        self.out.foreign += l.foreign_vars(&self.allowed(edge));
        self.out.solves += 1;
        l.solve(self.opts)
    }

    fn keep(&mut self, l: &Local, s: &Solved, stage: Stage, edge: Option<usize>) -> Result<(), CertifyError> {
        if let Solved::Feasible { cert, .. } = s {
            let rec = audit_certificate(self.ctx, cert, &l.domain, stage, self.round, self.id, edge, self.opts)?;
            self.out.certs.push(rec);
        }
        Ok(())
    }

    /// Solves an edge program minimizing its weight. When the minimization
    /// stalls (the infimum is often only approached with unbounded
    /// multipliers, and the last iterate is then unreliable), the weight is
    /// bisected over `[0, 1]` with fixed-weight feasibility problems; a
    /// weight of 1 or more exhausts the budget on its own.
    /// `Some(None)`: not certifiable within the budget; `None`: unknown.
    fn edge<F>(&mut self, j: usize, build: F) -> Result<Option<Option<(EdgeLocal, Solved)>>, CertifyError>
    where
        F: Fn(Weight) -> Result<EdgeLocal, CertifyError>,
    {
        let e = build(Weight::Minimize)?;
        let s = self.run(&e.local, Some(j))?;
        match &s {
            Solved::Feasible { .. } => return Ok(Some(Some((e, s)))),
            Solved::Infeasible => return Ok(Some(None)),
            Solved::Unknown(None) => return Ok(None),
            Solved::Unknown(Some(_)) => {}
        }
        let e = build(Weight::Fixed(1.0))?;
        let mut best = match self.run(&e.local, Some(j))? {
            s @ Solved::Feasible { .. } => (e, s),
            Solved::Infeasible => return Ok(Some(None)),
            Solved::Unknown(_) => return Ok(None),
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > WEIGHT_TOL {
            let mid = 0.5 * (lo + hi);
            let e = build(Weight::Fixed(mid))?;
            match self.run(&e.local, Some(j))? {
                s @ Solved::Feasible { .. } => {
                    hi = mid;
                    best = (e, s);
                }
                // Unknown counts as not certified; `hi` stays certified.
                _ => lo = mid,
            }
        }
        Ok(Some(Some(best)))
    }

    fn others(&self) -> Vec<usize> {
        self.ctx.hood(self.id)[1..].to_vec()
    }

    /// Phase-1 feasibility of the candidate level. `None` on Unknown.
    fn phase1_try(&mut self, cand: f64, view: &[f64]) -> Result<Option<bool>, CertifyError> {
        let (ctx, i) = (self.ctx, self.id);
        let others = self.others();
        if self.mode == Mode::Sequential || others.is_empty() {
            let l = local::phase1_check(ctx, i, cand, view, self.opts)?;
            let s = self.run(&l, None)?;
            return Ok(match s {
                Solved::Feasible { .. } => {
                    self.keep(&l, &s, Stage::Phase1, None)?;
                    Some(true)
                }
                Solved::Infeasible => Some(false),
                Solved::Unknown(_) => None,
            });
        }
        let mut total = 0.0;
        let mut kept = Vec::new();
        let mut weights = Vec::new();
        for &j in &others {
            let gj = view[ctx.index(j)];
            let (e, s) = match self.edge(j, |w| local::phase1_edge(ctx, i, j, cand, gj, w))? {
                Some(Some(found)) => found,
                Some(None) => return Ok(Some(false)),
                None => return Ok(None),
            };
            if let Solved::Feasible { sol, .. } = &s {
                let w = e.weight(sol);
                total += w;
                weights.push((j, w));
            }
            kept.push((e.local, s, j));
        }
        if total > 1.0 - self.opts.margin {
            return Ok(Some(false));
        }
        for (l, s, j) in &kept {
            self.keep(l, s, Stage::Phase1Edge, Some(*j))?;
        }
        self.out.weights = weights;
        Ok(Some(true))
    }

    fn phase1(&mut self, own: f64, view: &[f64]) -> Result<(), CertifyError> {
        let mut step = 0usize;
        loop {
            let cand = own + step as f64 * self.opts.delta;
            if cand >= 1.0 {
                self.out.escaped = true;
                self.out.level = own;
                return Ok(());
            }
            match self.phase1_try(cand, view)? {
                Some(true) => {
                    self.out.level = cand;
                    return Ok(());
                }
                Some(false) => step += 1,
                None => {
                    self.out.unknown = true;
                    self.out.level = own;
                    return Ok(());
                }
            }
        }
    }

    /// Phase-2 feasibility of `next` for the current levels `view`.
    /// Returns the rate and weights on success; `None` on Unknown.
    #[allow(clippy::type_complexity)]
    fn phase2_try(
        &mut self,
        next: f64,
        view: &[f64],
        stage: Stage,
        record: bool,
    ) -> Result<Option<Option<(f64, Vec<(usize, f64)>)>>, CertifyError> {
        let (ctx, i) = (self.ctx, self.id);
        let others = self.others();
        if self.mode == Mode::Sequential || others.is_empty() {
            let l = local::phase2_check(ctx, i, next, view, Rate::Search { minimize: false }, self.opts)?;
            let s = self.run(&l.local, None)?;
            return Ok(match &s {
                Solved::Feasible { sol, .. } => {
                    let a = sol.scalar(l.a.expect("searched rate"));
                    if record {
                        self.keep(&l.local, &s, stage, None)?;
                    }
                    Some(Some((a, Vec::new())))
                }
                Solved::Infeasible => Some(None),
                Solved::Unknown(_) => None,
            });
        }
        let gi = view[ctx.index(i)];
        let mut total = 0.0;
        let mut rate = 0.0;
        let mut weights = Vec::new();
        let mut kept = Vec::new();
        for &j in &others {
            let gj = view[ctx.index(j)];
            let opts = self.opts;
            let (e, s) = match self.edge(j, |w| local::phase2_edge(ctx, i, j, next, gi, gj, w, opts))? {
                Some(Some(found)) => found,
                Some(None) => return Ok(Some(None)),
                None => return Ok(None),
            };
            if let Solved::Feasible { sol, .. } = &s {
                let w = e.weight(sol);
                total += w;
                rate += sol.scalar(e.a.expect("edge rate"));
                weights.push((j, w));
            }
            kept.push((e.local, s, j));
        }
        if total > 1.0 - self.opts.margin {
            return Ok(Some(None));
        }
        if record {
            for (l, s, j) in &kept {
                self.keep(l, s, Stage::Phase2Edge, Some(*j))?;
            }
        }
        Ok(Some(Some((rate, weights))))
    }

    /// Tightest decay rate at the accepted level (sequential programs), backed
    /// off by 0.1% so that the reported rate is strictly inside the feasible
    /// set. The recorded certificate is the one at the optimum, which implies
    /// the backed-off claim on the annulus.
    fn tighten_rate(&mut self, next: f64, view: &[f64], stage: Stage, fallback: f64) -> Result<f64, CertifyError> {
        let l = local::phase2_check(self.ctx, self.id, next, view, Rate::Search { minimize: true }, self.opts)?;
        let s = self.run(&l.local, None)?;
        match &s {
            Solved::Feasible { sol, .. } => {
                let a = sol.scalar(l.a.expect("searched rate"));
                self.keep(&l.local, &s, stage, None)?;
                let backed = a * (1.0 - 1e-3);
                Ok(if backed <= -self.opts.margin { backed } else { a })
            }
            _ => {
                // Keep the feasibility certificate instead.
                let _ = self.phase2_try(next, view, stage, true)?;
                Ok(fallback)
            }
        }
    }

    fn accept(&mut self, next: f64, view: &[f64], found: (f64, Vec<(usize, f64)>), stage: Stage) -> Result<(), CertifyError> {
        let sequential = self.mode == Mode::Sequential || self.others().is_empty();
        let rate = if sequential {
            self.tighten_rate(next, view, stage, found.0)?
        } else {
            // Re-run to record the certificates at the accepted level.
            match self.phase2_try(next, view, stage, true)? {
                Some(Some((r, w))) => {
                    self.out.weights = w;
                    r
                }
                _ => {
                    self.out.weights = found.1;
                    found.0
                }
            }
        };
        self.out.level = next;
        self.out.rate = Some(rate);
        self.out.status = Some(StepStatus::Certified);
        Ok(())
    }

    fn phase2(&mut self, own: f64, view: &[f64]) -> Result<(), CertifyError> {
        if own == 0.0 {
            self.out.level = 0.0;
            self.out.status = Some(StepStatus::Idle);
            return Ok(());
        }
        // An undecided program only means this level is not certified; the
        // step is reported unknown when nothing was certified at all.
        let stage = Stage::Phase2;
        let mut undecided = false;
        match self.phase2_try(0.0, view, stage, false)? {
            Some(Some(found)) => return self.accept(0.0, view, found, stage),
            Some(None) => {}
            None => undecided = true,
        }
        let (mut lo, mut hi) = (0.0, own);
        let mut best = None;
        while hi - lo > self.opts.tol {
            let mid = 0.5 * (lo + hi);
            match self.phase2_try(mid, view, stage, false)? {
                Some(Some(found)) => {
                    hi = mid;
                    best = Some(found);
                }
                Some(None) => lo = mid,
                None => {
                    undecided = true;
                    lo = mid;
                }
            }
        }
        match best {
            Some(found) => self.accept(hi, view, found, stage),
            None if undecided => self.unknown(own),
            None => {
                self.out.level = own;
                self.out.status = Some(StepStatus::Stalled);
                Ok(())
            }
        }
    }

    fn unknown(&mut self, own: f64) -> Result<(), CertifyError> {
        self.out.level = own;
        self.out.unknown = true;
        self.out.status = Some(StepStatus::Unknown);
        Ok(())
    }

    /// Closing step: the agent's direct single-CS row on the inflated levels
    /// `view`, with both row conditions. If every agent succeeds, the rows
    /// form a Hurwitz comparison matrix on an invariant set and the network
    /// converges exponentially to the origin.
    fn terminal(&mut self, _own: f64, view: &[f64]) -> Result<(), CertifyError> {
        let row = local::direct_row(self.ctx, self.id, view, false, self.opts)?;
        let s = self.run(&row.local, None)?;
        match &s {
            Solved::Feasible { sol, .. } => {
                self.keep(&row.local, &s, Stage::Closure, None)?;
                let hood = self.ctx.hood(self.id);
                self.out.weights = hood.iter().zip(&row.a).map(|(&j, &v)| (j, sol.scalar(v))).collect();
                self.out.status = Some(StepStatus::Certified);
            }
            Solved::Infeasible => self.out.status = Some(StepStatus::Stalled),
            Solved::Unknown(_) => {
                self.out.unknown = true;
                self.out.status = Some(StepStatus::Unknown);
            }
        }
        Ok(())
    }
}

struct Run<'c, 'a, 'l, E: Executor> {
    ctx: &'c Ctx<'a>,
    opts: &'c CertifyOptions,
    exec: &'c E,
    mode: Mode,
    bus: Bus<'l>,
    report: CertificationReport,
}

impl<E: Executor> Run<'_, '_, '_, E> {
    fn round<F>(&mut self, round: Round, own: &[f64], f: F) -> Result<Vec<AgentOut>, CertifyError>
    where
        F: Fn(&mut Agent<'_, '_>, f64, &[f64]) -> Result<(), CertifyError> + Sync,
    {
        let ctx = self.ctx;
        let views: Vec<Vec<f64>> = ctx
            .net
            .subsystems()
            .iter()
            .enumerate()
            .map(|(k, s)| self.bus.view(ctx, s.id, round, own[k], self.opts.closure_floor))
            .collect::<Result<_, _>>()?;
        let (opts, mode) = (self.opts, self.mode);
        let outs = self.exec.map(ctx.m(), &|k| {
            let mut agent = Agent {
                ctx,
                opts,
                mode,
                out: AgentOut::default(),
                round: round.index,
                id: ctx.net.subsystems()[k].id,
            };
            f(&mut agent, own[k], &views[k]).map(|_| agent.out)
        });
        let outs: Vec<AgentOut> = outs.into_iter().collect::<Result<_, _>>()?;
        for o in &outs {
            self.report.certificates.extend(o.certs.iter().cloned());
            self.report.locality_violations += o.foreign;
            self.report.solves += o.solves;
        }
        Ok(outs)
    }

    fn phase1(&mut self, v0: &[f64]) -> Result<Phase1Outcome, CertifyError> {
        let ids = self.ctx.net.ids();
        let mut cur = v0.to_vec();
        self.report.sequence.envelope.push(cur.clone());
        self.bus.publish(self.ctx, Round { phase: Phase::Envelope, index: 0 }, &cur);
        for l in 0..self.opts.max_rounds {
            let round = Round { phase: Phase::Envelope, index: l };
            let outs = self.round(round, &cur, |a, own, view| a.phase1(own, view))?;
            if let Some(k) = outs.iter().position(|o| o.unknown) {
                return Ok(Phase1Outcome::Unknown { id: ids[k] });
            }
            if let Some(k) = outs.iter().position(|o| o.escaped) {
                return Ok(Phase1Outcome::Escaped { id: ids[k] });
            }
            let next: Vec<f64> = outs.iter().map(|o| o.level).collect();
            let moved = next.iter().zip(&cur).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max);
            cur = next;
            self.report.sequence.envelope.push(cur.clone());
            self.bus.publish(self.ctx, Round { phase: Phase::Envelope, index: l + 1 }, &cur);
            if moved < 0.5 * self.opts.delta {
                return Ok(Phase1Outcome::Envelope(cur));
            }
        }
        Ok(Phase1Outcome::NoConvergence)
    }

    fn record_step(&mut self, outs: &[AgentOut]) -> Vec<f64> {
        let next: Vec<f64> = outs.iter().map(|o| o.level).collect();
        self.report.sequence.levels.push(next.clone());
        self.report.sequence.rates.push(outs.iter().map(|o| o.rate).collect());
        if self.mode == Mode::Parallel {
            self.report.sequence.weights.push(outs.iter().map(|o| o.weights.clone()).collect());
        }
        next
    }

    /// Phase 2 from `gamma0`; returns the verdict.
    fn phase2(&mut self, gamma0: &[f64]) -> Result<Verdict, CertifyError> {
        let ids = self.ctx.net.ids();
        let mut cur = gamma0.to_vec();
        self.report.sequence.levels.push(cur.clone());
        self.bus.publish(self.ctx, Round { phase: Phase::Contraction, index: 0 }, &cur);
        let mut converged = false;
        for k in 0..self.opts.max_rounds {
            let round = Round { phase: Phase::Contraction, index: k };
            let outs = self.round(round, &cur, |a, own, view| a.phase2(own, view))?;
            let next = self.record_step(&outs);
            self.bus.publish(self.ctx, Round { phase: Phase::Contraction, index: k + 1 }, &next);
            if let Some(p) = outs.iter().position(|o| o.unknown) {
                self.report.sequence.limit = next;
                return Ok(Verdict::Inconclusive(format!(
                    "phase 2 round {k}: solver status unknown for subsystem {}",
                    ids[p]
                )));
            }
            let step = cur.iter().zip(&next).map(|(a, b)| a - b).fold(0.0, f64::max);
            cur = next;
            if step < self.opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            self.report.diagnostics.push(format!("phase 2 stopped after {} rounds", self.opts.max_rounds));
        }
        if self.mode == Mode::Sequential && converged && cur.iter().any(|&g| g > 0.0) {
            // With couplings linear in the neighbor states, no diagonal step
            // reaches zero while a neighbor level is positive; close with a
            // single CS on a small invariant neighborhood of the limit.
            let floor = self.opts.closure_floor;
            let inflated: Vec<f64> = cur.iter().map(|&g| g.max(floor)).collect();
            let round = Round { phase: Phase::Closure, index: 0 };
            self.bus.publish(self.ctx, round, &inflated);
            let outs = self.round(round, &inflated, |a, own, view| a.terminal(own, view))?;
            if outs.iter().all(|o| o.status == Some(StepStatus::Certified)) {
                self.report.sequence.terminal = outs.iter().map(|o| o.weights.clone()).collect();
                let zeros = vec![0.0; cur.len()];
                self.report.sequence.levels.push(zeros.clone());
                self.report.sequence.rates.push(vec![None; cur.len()]);
                self.bus.publish(self.ctx, Round { phase: Phase::Closure, index: 1 }, &zeros);
                cur = zeros;
            } else if let Some(p) = outs.iter().position(|o| o.unknown) {
                self.report.diagnostics.push(format!("closing step: solver status unknown for subsystem {}", ids[p]));
            } else {
                self.report.diagnostics.push(String::from("closing step infeasible"));
            }
        }
        self.report.sequence.limit = cur.clone();
        Ok(if cur.iter().all(|&g| g == 0.0) {
            Verdict::ExponentiallyStable
        } else if converged {
            Verdict::ConvergesToLimitSet(cur)
        } else {
            Verdict::Inconclusive(String::from("phase 2 did not converge"))
        })
    }
}

fn check_v0(ctx: &Ctx<'_>, v0: &[f64]) -> Result<(), CertifyError> {
    if v0.len() != ctx.m() {
        return Err(CertifyError::Dimension);
    }
    for (s, &v) in ctx.net.subsystems().iter().zip(v0) {
        if !(0.0..1.0).contains(&v) {
            return Err(CertifyError::BadLevel { id: s.id, value: v, range: "[0, 1)" });
        }
    }
    Ok(())
}

fn empty_report(ctx: &Ctx<'_>, mode: Mode, v0: &[f64]) -> CertificationReport {
    CertificationReport {
        mode,
        v0: v0.to_vec(),
        phase1: None,
        sequence: LevelSequence {
            ids: ctx.net.ids(),
            ..LevelSequence::default()
        },
        verdict: Verdict::Inconclusive(String::from("not run")),
        certificates: Vec::new(),
        messages: Vec::new(),
        locality_violations: 0,
        solves: 0,
        diagnostics: Vec::new(),
    }
}

/// Phase 1 then Phase 2. With `replay`, agents read neighbor levels from the
/// given log instead of the live one.
pub fn run_protocol_with<E: Executor>(
    ctx: &Ctx<'_>,
    v0: &[f64],
    mode: Mode,
    opts: &CertifyOptions,
    exec: &E,
    replay: Option<&[AgentMessage]>,
) -> Result<CertificationReport, CertifyError> {
    check_v0(ctx, v0)?;
    let mut run = Run {
        ctx,
        opts,
        exec,
        mode,
        bus: Bus { log: Vec::new(), replay },
        report: empty_report(ctx, mode, v0),
    };
    let p1 = run.phase1(v0)?;
    run.report.phase1 = Some(p1.clone());
    run.report.verdict = match p1 {
        Phase1Outcome::Envelope(g0) => run.phase2(&g0)?,
        Phase1Outcome::Escaped { id } => {
            Verdict::Inconclusive(format!("phase 1: envelope of subsystem {id} reaches the unit level"))
        }
        Phase1Outcome::Unknown { id } => {
            Verdict::Inconclusive(format!("phase 1: solver status unknown for subsystem {id}"))
        }
        Phase1Outcome::NoConvergence => Verdict::Inconclusive(String::from("phase 1 did not converge")),
    };
    run.report.messages = run.bus.log;
    Ok(run.report)
}

pub fn run_protocol<E: Executor>(
    ctx: &Ctx<'_>,
    v0: &[f64],
    mode: Mode,
    opts: &CertifyOptions,
    exec: &E,
) -> Result<CertificationReport, CertifyError> {
    run_protocol_with(ctx, v0, mode, opts, exec, None)
}

fn phase1_only(ctx: &Ctx<'_>, v0: &[f64], mode: Mode, opts: &CertifyOptions) -> Result<CertificationReport, CertifyError> {
    check_v0(ctx, v0)?;
    let mut run = Run {
        ctx,
        opts,
        exec: &SequentialExecutor,
        mode,
        bus: Bus { log: Vec::new(), replay: None },
        report: empty_report(ctx, mode, v0),
    };
    let p1 = run.phase1(v0)?;
    run.report.verdict = Verdict::Inconclusive(String::from("phase 2 not run"));
    run.report.phase1 = Some(p1);
    run.report.messages = run.bus.log;
    Ok(run.report)
}

/// Phase 1 alone, sequential programs.
pub fn phase1_envelope(ctx: &Ctx<'_>, v0: &[f64], opts: &CertifyOptions) -> Result<CertificationReport, CertifyError> {
    phase1_only(ctx, v0, Mode::Sequential, opts)
}

/// Phase 1 alone, pairwise programs with weights.
pub fn phase1_parallel(ctx: &Ctx<'_>, v0: &[f64], opts: &CertifyOptions) -> Result<CertificationReport, CertifyError> {
    phase1_only(ctx, v0, Mode::Parallel, opts)
}

fn phase2_only(ctx: &Ctx<'_>, gamma0: &[f64], mode: Mode, opts: &CertifyOptions) -> Result<CertificationReport, CertifyError> {
    if gamma0.len() != ctx.m() {
        return Err(CertifyError::Dimension);
    }
    for (s, &g) in ctx.net.subsystems().iter().zip(gamma0) {
        if !(0.0..=1.0).contains(&g) {
            return Err(CertifyError::BadLevel { id: s.id, value: g, range: "[0, 1]" });
        }
    }
    let mut run = Run {
        ctx,
        opts,
        exec: &SequentialExecutor,
        mode,
        bus: Bus { log: Vec::new(), replay: None },
        report: empty_report(ctx, mode, gamma0),
    };
    run.report.verdict = run.phase2(gamma0)?;
    run.report.messages = run.bus.log;
    Ok(run.report)
}

/// Phase 2 alone from a given envelope, sequential diagonal programs.
pub fn phase2_diagonal(ctx: &Ctx<'_>, gamma0: &[f64], opts: &CertifyOptions) -> Result<CertificationReport, CertifyError> {
    phase2_only(ctx, gamma0, Mode::Sequential, opts)
}

/// Phase 2 alone, pairwise programs with weights.
pub fn phase2_parallel(ctx: &Ctx<'_>, gamma0: &[f64], opts: &CertifyOptions) -> Result<CertificationReport, CertifyError> {
    phase2_only(ctx, gamma0, Mode::Parallel, opts)
}

/// One Phase-2 step of every agent from the given levels, without the
/// message log. Used for iteration-0 comparisons.
pub fn phase2_round<E: Executor>(
    ctx: &Ctx<'_>,
    levels: &[f64],
    mode: Mode,
    opts: &CertifyOptions,
    exec: &E,
) -> Result<(Vec<Phase2Step>, Vec<CertRecord>), CertifyError> {
    if levels.len() != ctx.m() {
        return Err(CertifyError::Dimension);
    }
    let mut run = Run {
        ctx,
        opts,
        exec,
        mode,
        bus: Bus { log: Vec::new(), replay: None },
        report: empty_report(ctx, mode, levels),
    };
    let round = Round { phase: Phase::Contraction, index: 0 };
    run.bus.publish(ctx, round, levels);
    let outs = run.round(round, levels, |a, own, view| a.phase2(own, view))?;
    let steps = outs
        .iter()
        .zip(ctx.net.subsystems())
        .map(|(o, s)| Phase2Step {
            id: s.id,
            next: o.level,
            rate: o.rate,
            weights: o.weights.clone(),
            status: o.status.unwrap_or(StepStatus::Unknown),
        })
        .collect();
    Ok((steps, run.report.certificates))
}
