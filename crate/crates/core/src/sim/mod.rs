//! Fixed-step RK4 simulation used to check certificates empirically.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::lyap::{random_direction, LyapunovFn};
use crate::model::{Network, Subsystem};
use crate::poly::{Polynomial, VarId};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("step {dt} and horizon {t_end} must satisfy 0 < dt <= t_end")]
    BadStep { dt: f64, t_end: f64 },
    #[error("state dimension {got}, expected {want}")]
    Dimension { got: usize, want: usize },
    #[error("non-finite state at step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },
    #[error("level {value} of subsystem {id} outside [0, 1)")]
    BadLevel { id: usize, value: f64 },
}

/// A polynomial flattened for fast repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, u32)>)>,
}

impl CompiledPoly {
    /// `slot` maps a variable to its index in the evaluation point.
    pub fn new(p: &Polynomial, slot: impl Fn(VarId) -> usize) -> Self {
        let terms = p
            .terms()
            .map(|(m, c)| (c, m.powers().map(|(v, k)| (slot(v), k)).collect()))
            .collect();
        CompiledPoly { terms }
    }

    pub fn full(p: &Polynomial) -> Self {
        Self::new(p, |v| v.index())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (c, pw) in &self.terms {
            let mut t = *c;
            for &(i, k) in pw {
                let xi = x[i];
                t *= match k {
                    1 => xi,
                    2 => xi * xi,
                    3 => xi * xi * xi,
                    _ => libm::pow(xi, k as f64),
                };
            }
            s += t;
        }
        s
    }
}

/// Vector field `x' = F(x)` with one compiled polynomial per state.
#[derive(Clone, Debug)]
pub struct Field {
    rows: Vec<CompiledPoly>,
    sign: f64,
}

impl Field {
    /// The coupled network dynamics over the full universe.
    pub fn network(net: &Network) -> Self {
        let f = net.vector_field();
        Field {
            rows: f.iter().map(CompiledPoly::full).collect(),
            sign: 1.0,
        }
    }

    /// Isolated subsystem in local coordinates; `reversed` flips time.
    pub fn subsystem(sub: &Subsystem, reversed: bool) -> Self {
        let vars = sub.state_vars.clone();
        let slot = |v: VarId| vars.iter().position(|&w| w == v).expect("state variable");
        Field {
            rows: sub.f.iter().map(|p| CompiledPoly::new(p, slot)).collect(),
            sign: if reversed { -1.0 } else { 1.0 },
        }
    }

    /// Linear field `x' = A x`.
    pub fn linear(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let rows = (0..n)
            .map(|i| CompiledPoly {
                terms: (0..n).filter(|&j| a[(i, j)] != 0.0).map(|j| (a[(i, j)], vec![(j, 1)])).collect(),
            })
            .collect();
        Field { rows, sign: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(&self.rows) {
            *o = self.sign * r.eval(x);
        }
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, f: &Field, x: &mut [f64], h: f64) {
        let n = x.len();
        f.eval_into(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        f.eval_into(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        f.eval_into(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        f.eval_into(&self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Samples on a uniform grid: row `k` is the state at `t = k * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub n: usize,
    states: Vec<f64>,
    /// `V_i(t_k)` per row, in subsystem order; empty without LFs.
    pub levels: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len() / self.n.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// The samples from row `k` on, re-timed to start at zero.
    pub fn tail(&self, k: usize) -> Trajectory {
        let k = k.min(self.len());
        Trajectory {
            dt: self.dt,
            n: self.n,
            states: self.states[k * self.n..].to_vec(),
            levels: self.levels.get(k..).map(|l| l.to_vec()).unwrap_or_default(),
        }
    }
}

/// Integrates `field` from `x0` over `[0, t_end]` with step `dt`, recording
/// every `stride`-th step.
pub fn integrate_field(field: &Field, x0: &[f64], t_end: f64, dt: f64, stride: usize) -> Result<Trajectory, SimError> {
    if !(dt > 0.0 && t_end >= dt) {
        return Err(SimError::BadStep { dt, t_end });
    }
    let n = field.dim();
    if x0.len() != n {
        return Err(SimError::Dimension { got: x0.len(), want: n });
    }
    let stride = stride.max(1);
    let steps = libm::round(t_end / dt) as usize;
    let mut x = x0.to_vec();
    let mut states = Vec::with_capacity((steps / stride + 1) * n);
    states.extend_from_slice(&x);
    let mut rk = Rk4::new(n);
    for s in 1..=steps {
        rk.step(field, &mut x, dt);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SimError::BlowUp { step: s, t: s as f64 * dt });
        }
        if s % stride == 0 {
            states.extend_from_slice(&x);
        }
    }
    Ok(Trajectory {
        dt: dt * stride as f64,
        n,
        states,
        levels: Vec::new(),
    })
}

/// Network trajectory with `V_i(t)` attached for every supplied LF.
pub fn integrate(
    net: &Network,
    lfs: &[LyapunovFn],
    x0: &[f64],
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory, SimError> {
    let mut traj = integrate_field(&Field::network(net), x0, t_end, dt, stride)?;
    let vs: Vec<CompiledPoly> = lfs.iter().map(|lf| CompiledPoly::full(&lf.v)).collect();
    traj.levels = (0..traj.len()).map(|k| vs.iter().map(|v| v.eval(traj.state(k))).collect()).collect();
    Ok(traj)
}

/// Largest state difference between the `dt` run and a `dt/2` run at the
/// recorded grid points.
pub fn halving_check(field: &Field, x0: &[f64], t_end: f64, dt: f64, stride: usize) -> Result<f64, SimError> {
    let a = integrate_field(field, x0, t_end, dt, stride)?;
    let b = integrate_field(field, x0, t_end, 0.5 * dt, 2 * stride.max(1))?;
    let mut worst: f64 = 0.0;
    for k in 0..a.len().min(b.len()) {
        for (p, q) in a.state(k).iter().zip(b.state(k)) {
            worst = worst.max(libm::fabs(p - q));
        }
    }
    Ok(worst)
}

/// Radius along `dir` where `V` reaches `level`, by bisection.
pub fn bisect_radius(v: &CompiledPoly, dir: &[f64], level: f64) -> f64 {
    if level <= 0.0 {
        return 0.0;
    }
    let at = |r: f64| {
        let p: Vec<f64> = dir.iter().map(|d| d * r).collect();
        v.eval(&p)
    };
    let mut hi = 1.0;
    while at(hi) < level && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let val = at(mid);
        if libm::fabs(val - level) <= 1e-13 * level.max(1.0) {
            return mid;
        }
        if val < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Initial state with `V_i(x_i(0)) = v0_i`: a random direction per subsystem
/// scaled onto the level set.
pub fn sample_disturbance(net: &Network, lfs: &[LyapunovFn], v0: &[f64], rng: &mut Stream) -> Result<Vec<f64>, SimError> {
    if v0.len() != lfs.len() {
        return Err(SimError::Dimension { got: v0.len(), want: lfs.len() });
    }
    let mut x = vec![0.0; net.universe().len()];
    for (lf, &v) in lfs.iter().zip(v0) {
        if !(0.0..1.0).contains(&v) {
            return Err(SimError::BadLevel { id: lf.id, value: v });
        }
        let dir = random_direction(lf.vars.len(), rng);
        if v == 0.0 {
            continue;
        }
        let vars = lf.vars.clone();
        let local = CompiledPoly::new(&lf.v, |w| vars.iter().position(|&u| u == w).expect("LF variable"));
        let r = bisect_radius(&local, &dir, v);
        for (k, var) in lf.vars.iter().enumerate() {
            x[var.index()] = dir[k] * r;
        }
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundCheck {
    /// `max_{i,t} V_i(t) - r_i(t)` over the whole trajectory.
    Applies { max_violation: f64 },
    /// Some `V_j` left its domain level; the bound was checked up to `t`.
    DomainExit { t: f64, id: usize, max_violation: f64 },
}

impl BoundCheck {
    pub fn max_violation(&self) -> f64 {
        match self {
            BoundCheck::Applies { max_violation } | BoundCheck::DomainExit { max_violation, .. } => *max_violation,
        }
    }
}

/// Co-integrates `r' = A r`, `r(0) = V(x(0))`, on the trajectory grid and
/// compares against the recorded levels while they stay below `domain`.
pub fn check_comparison_bound(traj: &Trajectory, a: &DMatrix<f64>, domain: &[f64], ids: &[usize]) -> Result<BoundCheck, SimError> {
    let m = a.nrows();
    if traj.levels.first().map(|l| l.len()) != Some(m) || domain.len() != m || ids.len() != m {
        return Err(SimError::Dimension { got: domain.len(), want: m });
    }
    let field = Field::linear(a);
    let mut r = traj.levels[0].clone();
    let mut rk = Rk4::new(m);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..traj.len() {
        if k > 0 {
            rk.step(&field, &mut r, traj.dt);
        }
        let v = &traj.levels[k];
        if let Some(j) = (0..m).find(|&j| v[j] > domain[j]) {
            return Ok(BoundCheck::DomainExit {
                t: traj.time(k),
                id: ids[j],
                max_violation: worst,
            });
        }
        for j in 0..m {
            worst = worst.max(v[j] - r[j]);
        }
    }
    Ok(BoundCheck::Applies { max_violation: worst })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReverseOptions {
    pub seeds: usize,
    /// Seeds start on `{V = seed_level}`.
    pub seed_level: f64,
    pub t_end: f64,
    /// Points are recorded after this time.
    pub t_settle: f64,
    pub dt: f64,
    pub stride: usize,
    /// Trajectories leaving this radius are dropped.
    pub escape_radius: f64,
}

impl Default for ReverseOptions {
    fn default() -> Self {
        ReverseOptions {
            seeds: 32,
            seed_level: 1.05,
            t_end: 40.0,
            t_settle: 20.0,
            dt: 1e-2,
            stride: 10,
            escape_radius: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCloud {
    /// Points in the subsystem's local coordinates.
    pub points: Vec<Vec<f64>>,
    pub dropped: usize,
}

/// Empirical ROA boundary of an isolated subsystem: the reversed flow from a
/// ring of seeds just outside `{V = 1}` settles on the boundary's attractor;
/// divergent trajectories are dropped.
pub fn reverse_time_boundary(sub: &Subsystem, lf: &LyapunovFn, opts: &ReverseOptions) -> BoundaryCloud {
    let field = Field::subsystem(sub, true);
    let vars = lf.vars.clone();
    let v = CompiledPoly::new(&lf.v, |w| vars.iter().position(|&u| u == w).expect("LF variable"));
    let n = sub.dim();
    let mut cloud = BoundaryCloud { points: Vec::new(), dropped: 0 };
    for s in 0..opts.seeds {
        let dir: Vec<f64> = if n == 2 {
            let th = 2.0 * core::f64::consts::PI * s as f64 / opts.seeds as f64;
            vec![libm::cos(th), libm::sin(th)]
        } else {
            random_direction(n, &mut Stream::new(s as u64, 0))
        };
        let r = bisect_radius(&v, &dir, opts.seed_level);
        let x0: Vec<f64> = dir.iter().map(|d| d * r).collect();
        let Ok(traj) = integrate_field(&field, &x0, opts.t_end, opts.dt, opts.stride) else {
            cloud.dropped += 1;
            continue;
        };
        let escaped = (0..traj.len()).any(|k| traj.state(k).iter().map(|x| x * x).sum::<f64>() > opts.escape_radius * opts.escape_radius);
        if escaped {
            cloud.dropped += 1;
            continue;
        }
        for k in 0..traj.len() {
            if traj.time(k) >= opts.t_settle {
                cloud.points.push(traj.state(k).to_vec());
            }
        }
    }
    cloud
}
