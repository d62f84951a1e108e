//! Infeasible-start primal-dual path following with the HKM search direction
//! and Mehrotra's predictor-corrector.
//!
//! Newton system, with `Q = sigma*mu*Z^-1 - X - (G + X Rd) Z^-1`:
//!
//! ```text
//! M dy + B du = rp - A(Q),     M_kl = <A_k, X A_l Z^-1>
//! B^T dy      = rf
//! dZ = Rd - A^*(dy),   dX = sym(sigma*mu*Z^-1 - X - (G + X dZ) Z^-1)
//! ```
//!
//! Free variables are eliminated through `(B^T M^-1 B) du = B^T M^-1 h - rf`.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::{InfeasibilityRay, SdpProblem, SdpStatus, SolverOptions, SymEntry};
use crate::linalg::{min_eigenvalue, symmetrize, Cholesky};

pub(super) struct IpmOutput {
    pub status: SdpStatus,
    pub x: Vec<DMatrix<f64>>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub ray: Option<InfeasibilityRay>,
    /// Dual values are meaningful (false for feasibility problems, whose
    /// dual is replaced by the trivial one).
    pub dual_valid: bool,
}

// Upper bound on the primal objective below which a primal-feasible
// minimization is reported as unbounded.
const UNBOUNDED_LEVEL: f64 = -1e8;

struct Data {
    dims: Vec<usize>,
    m: usize,
    nf: usize,
    b: Vec<f64>,
    /// Expanded entries per row: both (i, j) and (j, i) for off-diagonals.
    rows: Vec<Vec<(u32, u32, u32, f64)>>,
    /// Per block: (row, expanded entries of that row within the block).
    by_block: Vec<Vec<(usize, Vec<(u32, u32, f64)>)>>,
    row_free: Vec<Vec<(usize, f64)>>,
    c: Vec<DMatrix<f64>>,
    cf: Vec<f64>,
}

impl Data {
    fn new(p: &SdpProblem) -> Data {
        let m = p.constraints.len();
        let nb = p.blocks.len();
        let expand = |entries: &[SymEntry]| {
            let mut out = Vec::with_capacity(2 * entries.len());
            for e in entries {
                out.push((e.block as u32, e.row as u32, e.col as u32, e.value));
                if e.row != e.col {
                    out.push((e.block as u32, e.col as u32, e.row as u32, e.value));
                }
            }
            out
        };
        let rows: Vec<_> = p.constraints.iter().map(|c| expand(&c.form.entries)).collect();
        let mut by_block: Vec<Vec<(usize, Vec<(u32, u32, f64)>)>> = vec![Vec::new(); nb];
        for (k, r) in rows.iter().enumerate() {
            let mut per: Vec<Vec<(u32, u32, f64)>> = vec![Vec::new(); nb];
            for &(bl, i, j, v) in r {
                per[bl as usize].push((i, j, v));
            }
            for (bl, list) in per.into_iter().enumerate() {
                if !list.is_empty() {
                    by_block[bl].push((k, list));
                }
            }
        }
        let mut c = p.zero_blocks();
        p.objective.scatter(1.0, &mut c);
        let mut cf = vec![0.0; p.free_vars];
        for &(f, v) in &p.objective.free {
            cf[f] += v;
        }
        Data {
            dims: p.blocks.clone(),
            m,
            nf: p.free_vars,
            b: p.constraints.iter().map(|c| c.rhs).collect(),
            rows,
            by_block,
            row_free: p.constraints.iter().map(|c| c.form.free.clone()).collect(),
            c,
            cf,
        }
    }

    /// `<A_k, Y>` for every row.
    fn apply(&self, y: &[DMatrix<f64>]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(bl, i, j, v)| v * y[bl as usize][(i as usize, j as usize)]).sum())
            .collect()
    }

    /// `sum_k w_k A_k`.
    fn adjoint(&self, w: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (r, &wk) in self.rows.iter().zip(w) {
            if wk == 0.0 {
                continue;
            }
            for &(bl, i, j, v) in r {
                out[bl as usize][(i as usize, j as usize)] += wk * v;
            }
        }
        out
    }

    fn apply_b(&self, u: &[f64]) -> Vec<f64> {
        self.row_free
            .iter()
            .map(|r| r.iter().map(|&(f, c)| c * u[f]).sum())
            .collect()
    }

    fn apply_bt(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nf];
        for (r, &yk) in self.row_free.iter().zip(y) {
            for &(f, c) in r {
                out[f] += c * yk;
            }
        }
        out
    }

    fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    fn initial_scales(&self) -> (Vec<f64>, Vec<f64>) {
        let nb = self.dims.len();
        let mut xi = vec![0.0f64; nb];
        let mut eta = vec![0.0f64; nb];
        for bl in 0..nb {
            let n = self.dims[bl] as f64;
            let mut x_s = 10.0f64.max(libm::sqrt(n));
            let mut z_s = x_s;
            for (k, list) in &self.by_block[bl] {
                let nrm = libm::sqrt(list.iter().map(|e| e.2 * e.2).sum::<f64>());
                x_s = x_s.max(n * (1.0 + libm::fabs(self.b[*k])) / (1.0 + nrm));
                z_s = z_s.max(nrm);
            }
            z_s = z_s.max(self.c[bl].norm());
            xi[bl] = x_s;
            eta[bl] = z_s;
        }
        (xi, eta)
    }
}

fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    // Symmetric inputs only, so column-major storage is its own transpose.
    m.as_slice().to_vec()
}

/// Schur complement `M_kl = <A_k, X A_l Z^-1>`, row-major.
fn schur(d: &Data, x: &[DMatrix<f64>], zi: &[DMatrix<f64>]) -> Vec<f64> {
    let m = d.m;
    let mut out = vec![0.0; m * m];
    for (bl, list) in d.by_block.iter().enumerate() {
        let n = d.dims[bl];
        let xr = to_row_major(&x[bl]);
        let zr = to_row_major(&zi[bl]);
        if n == 1 {
            let s = xr[0] * zr[0];
            for (p, (k, ek)) in list.iter().enumerate() {
                let vk: f64 = ek.iter().map(|e| e.2).sum();
                for (l, el) in &list[p..] {
                    let vl: f64 = el.iter().map(|e| e.2).sum();
                    out[k * m + l] += s * vk * vl;
                }
            }
            continue;
        }
        for (p, (k, ek)) in list.iter().enumerate() {
            // For each entry (a, b, v) of A_k precompute the rows X[a,:] and
            // Zi[b,:]; the inner sum over A_l entries is then a gather.
            for (l, el) in &list[p..] {
                let mut s = 0.0;
                for &(a, b, v) in ek {
                    let xa = &xr[a as usize * n..a as usize * n + n];
                    let zb = &zr[b as usize * n..b as usize * n + n];
                    let mut t = 0.0;
                    for &(c, dd, w) in el {
                        t += w * xa[c as usize] * zb[dd as usize];
                    }
                    s += v * t;
                }
                out[k * m + l] += s;
            }
        }
    }
    for k in 0..m {
        for l in 0..k {
            out[k * m + l] = out[l * m + k];
        }
    }
    out
}

fn inverse_spd(s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if s.nrows() == 1 {
        let v = s[(0, 0)];
        return if v > 0.0 { Some(DMatrix::from_element(1, 1, 1.0 / v)) } else { None };
    }
    let mut inv = s.clone().cholesky()?.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

/// Largest `alpha` with `S + alpha*D` PSD (infinity if unbounded).
fn max_step(s: &DMatrix<f64>, dir: &DMatrix<f64>) -> f64 {
    if s.nrows() == 1 {
        let dv = dir[(0, 0)];
        return if dv < 0.0 { -s[(0, 0)] / dv } else { f64::INFINITY };
    }
    let chol = match s.clone().cholesky() {
        Some(c) => c,
        None => return 0.0,
    };
    let l = chol.l();
    let w = match l.solve_lower_triangular(dir) {
        Some(w) => w,
        None => return 0.0,
    };
    let mut w2 = match l.solve_lower_triangular(&w.transpose()) {
        Some(w2) => w2,
        None => return 0.0,
    };
    symmetrize(&mut w2);
    let lam = min_eigenvalue(&w2);
    if lam < 0.0 {
        -1.0 / lam
    } else {
        f64::INFINITY
    }
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

struct Factored {
    chol: Cholesky,
    /// M~^-1 B, one column per free variable (row-major m x nf).
    minv_b: Vec<f64>,
    k_chol: Option<Cholesky>,
    rho: f64,
}

impl Factored {
    /// Factors `M~ = M + rho B B^T`. Adding `rho B (B^T dy - rf) = 0` to the
    /// first block row leaves the solution unchanged but keeps `M~` definite
    /// whenever the full saddle system is nonsingular, even if `M` is not
    /// (e.g. more rows than a small block can span).
    fn new(d: &Data, mmat: &mut [f64]) -> Option<Factored> {
        let (m, nf) = (d.m, d.nf);
        let mut cols: Vec<Vec<f64>> = vec![vec![0.0; m]; nf];
        for (k, r) in d.row_free.iter().enumerate() {
            for &(f, c) in r {
                cols[f][k] += c;
            }
        }
        let mut rho = 0.0;
        if nf > 0 {
            let mdiag = (0..m).fold(0.0f64, |a, k| a.max(mmat[k * m + k]));
            let bdiag = (0..m).fold(0.0f64, |a, k| a.max(cols.iter().map(|c| c[k] * c[k]).sum()));
            if bdiag > 0.0 {
                rho = mdiag.max(1e-8) / bdiag;
                for col in &cols {
                    for k in 0..m {
                        if col[k] == 0.0 {
                            continue;
                        }
                        let ck = rho * col[k];
                        let row = &mut mmat[k * m..k * m + m];
                        for (l, v) in col.iter().enumerate() {
                            row[l] += ck * v;
                        }
                    }
                }
            }
        }
        let (chol, _) = Cholesky::factor_regularized(mmat, m)?;
        let mut minv_b = vec![0.0; m * nf];
        let mut k_chol = None;
        if nf > 0 {
            let mut kmat = vec![0.0; nf * nf];
            let mut sols: Vec<Vec<f64>> = Vec::with_capacity(nf);
            for (f, col) in cols.iter().enumerate() {
                let mut sol = col.clone();
                chol.solve_in_place(&mut sol);
                for k in 0..m {
                    minv_b[k * nf + f] = sol[k];
                }
                sols.push(sol);
            }
            for g in 0..nf {
                for f in 0..nf {
                    kmat[g * nf + f] = crate::linalg::dot(&cols[g], &sols[f]);
                }
            }
            // K is PSD; a singular K means some free variables are not pinned
            // down (a flat direction), which the shift resolves.
            let scale = (0..nf).fold(0.0f64, |a, i| a.max(kmat[i * nf + i]));
            for i in 0..nf {
                kmat[i * nf + i] += 1e-13 * scale;
            }
            k_chol = Some(Cholesky::factor_regularized(&kmat, nf)?.0);
        }
        Some(Factored { chol, minv_b, k_chol, rho })
    }

    /// Solves the saddle system for (dy, du).
    fn solve(&self, d: &Data, h: &[f64], rf: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let (m, nf) = (d.m, d.nf);
        let mut w = h.to_vec();
        if nf > 0 && self.rho != 0.0 {
            for (k, r) in d.row_free.iter().enumerate() {
                for &(f, c) in r {
                    w[k] += self.rho * c * rf[f];
                }
            }
        }
        self.chol.solve_in_place(&mut w);
        if nf == 0 {
            return Some((w, Vec::new()));
        }
        let btw = d.apply_bt(&w);
        let mut du: Vec<f64> = btw.iter().zip(rf).map(|(a, r)| a - r).collect();
        self.k_chol.as_ref()?.solve_in_place(&mut du);
        let mut dy = w;
        for k in 0..m {
            let row = &self.minv_b[k * nf..k * nf + nf];
            dy[k] -= row.iter().zip(&du).map(|(a, b)| a * b).sum::<f64>();
        }
        Some((dy, du))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Minimize,
    /// Slack feasibility problem: the last block is the 1x1 slack `s`, and
    /// the original problem is feasible iff the optimal `s` is at most 1.
    Slack,
}

struct State {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    y: Vec<f64>,
    u: Vec<f64>,
}

struct Metrics {
    rp: Vec<f64>,
    rd: Vec<DMatrix<f64>>,
    rf: Vec<f64>,
    rp_norm: f64,
    rd_norm: f64,
    pobj: f64,
    dobj: f64,
    gap: f64,
    mu: f64,
}

fn metrics(d: &Data, s: &State) -> Metrics {
    let ax = d.apply(&s.x);
    let bu = d.apply_b(&s.u);
    let rp: Vec<f64> = (0..d.m).map(|k| d.b[k] - ax[k] - bu[k]).collect();
    let aty = d.adjoint(&s.y);
    let rd: Vec<DMatrix<f64>> = (0..d.dims.len()).map(|bl| &d.c[bl] - &aty[bl] - &s.z[bl]).collect();
    let bty = d.apply_bt(&s.y);
    let rf: Vec<f64> = (0..d.nf).map(|f| d.cf[f] - bty[f]).collect();
    let rp_norm = rp.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
    let rd_norm = rd
        .iter()
        .map(|r| r.amax())
        .chain(rf.iter().map(|v| libm::fabs(*v)))
        .fold(0.0f64, f64::max);
    let pobj = inner(&d.c, &s.x) + d.cf.iter().zip(&s.u).map(|(a, b)| a * b).sum::<f64>();
    let dobj: f64 = d.b.iter().zip(&s.y).map(|(a, b)| a * b).sum();
    let gap = libm::fabs(pobj - dobj) / (1.0 + libm::fabs(pobj) + libm::fabs(dobj));
    let mu = inner(&s.x, &s.z) / d.total_dim() as f64;
    Metrics {
        rp,
        rd,
        rf,
        rp_norm,
        rd_norm,
        pobj,
        dobj,
        gap,
        mu,
    }
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dy: Vec<f64>,
    du: Vec<f64>,
}

fn direction(
    d: &Data,
    s: &State,
    mt: &Metrics,
    zi: &[DMatrix<f64>],
    fac: &Factored,
    sigma_mu: f64,
    corr: Option<&[DMatrix<f64>]>,
) -> Option<Direction> {
    let nb = d.dims.len();
    // Q = sigma*mu*Zi - X - (G + X Rd) Zi
    let mut q = Vec::with_capacity(nb);
    for bl in 0..nb {
        let mut inner_m = &s.x[bl] * &mt.rd[bl];
        if let Some(g) = corr {
            inner_m += &g[bl];
        }
        let qb = &zi[bl] * sigma_mu - &s.x[bl] - inner_m * &zi[bl];
        q.push(qb);
    }
    let aq = d.apply(&q);
    let h: Vec<f64> = (0..d.m).map(|k| mt.rp[k] - aq[k]).collect();
    let (dy, du) = fac.solve(d, &h, &mt.rf)?;
    let aty = d.adjoint(&dy);
    let mut dz = Vec::with_capacity(nb);
    let mut dx = Vec::with_capacity(nb);
    for bl in 0..nb {
        let dzb = &mt.rd[bl] - &aty[bl];
        let mut rest = &s.x[bl] * &dzb;
        if let Some(g) = corr {
            rest += &g[bl];
        }
        let mut dxb = &zi[bl] * sigma_mu - &s.x[bl] - rest * &zi[bl];
        symmetrize(&mut dxb);
        dx.push(dxb);
        dz.push(dzb);
    }
    if dy.iter().chain(&du).any(|v| !v.is_finite()) {
        return None;
    }
    Some(Direction { dx, dz, dy, du })
}

fn step_lengths(s: &State, dir: &Direction) -> (f64, f64) {
    let ap = s.x.iter().zip(&dir.dx).map(|(a, b)| max_step(a, b)).fold(f64::INFINITY, f64::min);
    let ad = s.z.iter().zip(&dir.dz).map(|(a, b)| max_step(a, b)).fold(f64::INFINITY, f64::min);
    (ap, ad)
}

fn run(d: &Data, opts: &SolverOptions, mode: Mode) -> IpmOutput {
    let nb = d.dims.len();
    let (xi, eta) = d.initial_scales();
    let mut s = State {
        x: (0..nb).map(|b| DMatrix::identity(d.dims[b], d.dims[b]) * xi[b]).collect(),
        z: (0..nb).map(|b| DMatrix::identity(d.dims[b], d.dims[b]) * eta[b]).collect(),
        y: vec![0.0; d.m],
        u: vec![0.0; d.nf],
    };
    let slack_block = nb - 1;
    let mut stalls = 0;
    let mut iterations = 0;
    let mut last: Option<Metrics> = None;
    let finish = |status: SdpStatus, s: State, iterations: usize, ray: Option<InfeasibilityRay>| IpmOutput {
        status,
        x: s.x,
        u: s.u,
        y: s.y,
        z: s.z,
        iterations,
        ray,
        dual_valid: mode == Mode::Minimize,
    };

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let mt = metrics(d, &s);
        let nonfinite = !(mt.pobj.is_finite() && mt.dobj.is_finite() && mt.mu.is_finite());
        if nonfinite {
            break;
        }
        let converged = mt.rp_norm <= opts.feas_tol && mt.rd_norm <= opts.feas_tol && mt.gap <= opts.gap_tol;
        match mode {
            Mode::Minimize => {
                if converged {
                    return finish(SdpStatus::Optimal, s, iter, None);
                }
                if mt.rp_norm <= opts.feas_tol && mt.pobj < UNBOUNDED_LEVEL && mt.rd_norm > opts.feas_tol {
                    return finish(SdpStatus::Unbounded, s, iter, None);
                }
            }
            Mode::Slack => {
                let sv = s.x[slack_block][(0, 0)];
                if mt.rp_norm <= opts.feas_tol && sv < 1.0 {
                    return finish(SdpStatus::Feasible, s, iter, None);
                }
                if mt.rd_norm <= opts.feas_tol && mt.dobj > 1.0 + opts.feas_tol {
                    return finish(SdpStatus::Infeasible, s, iter, None);
                }
                if converged {
                    let st = if sv - 1.0 < opts.feas_tol {
                        SdpStatus::Feasible
                    } else {
                        SdpStatus::Infeasible
                    };
                    return finish(st, s, iter, None);
                }
            }
        }
        if iter == opts.max_iter {
            last = Some(mt);
            break;
        }

        let zi: Option<Vec<DMatrix<f64>>> = s.z.iter().map(inverse_spd).collect();
        let zi = match zi {
            Some(z) => z,
            None => {
                last = Some(mt);
                break;
            }
        };
        let mut mmat = schur(d, &s.x, &zi);
        let fac = match Factored::new(d, &mut mmat) {
            Some(f) => f,
            None => {
                last = Some(mt);
                break;
            }
        };
        let pred = match direction(d, &s, &mt, &zi, &fac, 0.0, None) {
            Some(p) => p,
            None => {
                last = Some(mt);
                break;
            }
        };
        let (ap, ad) = step_lengths(&s, &pred);
        let (ap1, ad1) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for bl in 0..nb {
            let xa = &s.x[bl] + &pred.dx[bl] * ap1;
            let za = &s.z[bl] + &pred.dz[bl] * ad1;
            mu_aff += xa.dot(&za);
        }
        mu_aff /= d.total_dim() as f64;
        let ratio = (mu_aff / mt.mu).clamp(0.0, 1.0);
        let sigma = ratio * ratio * ratio;
        let g: Vec<DMatrix<f64>> = (0..nb).map(|bl| &pred.dx[bl] * &pred.dz[bl]).collect();
        let corr = match direction(d, &s, &mt, &zi, &fac, sigma * mt.mu, Some(&g)) {
            Some(c) => c,
            None => pred,
        };
        let (ap, ad) = step_lengths(&s, &corr);
        let tau = 0.9 + 0.08 * ap1.min(ad1);
        let ap = (tau * ap).min(1.0);
        let ad = (tau * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                last = Some(mt);
                break;
            }
        } else {
            stalls = 0;
        }
        for bl in 0..nb {
            s.x[bl] += &corr.dx[bl] * ap;
            s.z[bl] += &corr.dz[bl] * ad;
            symmetrize(&mut s.x[bl]);
            symmetrize(&mut s.z[bl]);
        }
        for (u, du) in s.u.iter_mut().zip(&corr.du) {
            *u += ap * du;
        }
        for (y, dy) in s.y.iter_mut().zip(&corr.dy) {
            *y += ad * dy;
        }
    }

    // Out of iterations or numerically stuck: salvage what can be proven.
    let mt = last.unwrap_or_else(|| metrics(d, &s));
    match mode {
        Mode::Minimize => {
            if mt.rp_norm <= opts.feas_tol && mt.pobj.is_finite() && s.x.iter().all(|b| min_eigenvalue(b) >= 0.0) {
                finish(SdpStatus::Feasible, s, iterations, None)
            } else {
                finish(SdpStatus::NumericFailure, s, iterations, None)
            }
        }
        Mode::Slack => {
            let sv = s.x[slack_block][(0, 0)];
            if mt.rp_norm <= opts.feas_tol && sv < 1.0 && s.x.iter().all(|b| min_eigenvalue(b) >= 0.0) {
                finish(SdpStatus::Feasible, s, iterations, None)
            } else if mt.rd_norm <= opts.feas_tol && mt.dobj > 1.0 + opts.feas_tol {
                finish(SdpStatus::Infeasible, s, iterations, None)
            } else {
                finish(SdpStatus::NumericFailure, s, iterations, None)
            }
        }
    }
}

pub(super) fn solve_minimize(p: &SdpProblem, opts: &SolverOptions) -> IpmOutput {
    let d = Data::new(p);
    let out = run(&d, opts, Mode::Minimize);
    match out.status {
        SdpStatus::Optimal | SdpStatus::Feasible | SdpStatus::Unbounded => out,
        _ => {
            // Classify through the slack formulation: a proven-infeasible
            // problem is reported as such, anything else stays unknown.
            let f = solve_feasibility(p, opts);
            match f.status {
                SdpStatus::Infeasible => IpmOutput { dual_valid: false, ..f },
                _ => out,
            }
        }
    }
}

/// Solves `min s  s.t.  A(X) - s*tr(A_k) + B u = b - tr(A_k),  X, s >= 0`,
/// i.e. maximizes the margin `1 - s` of `X_orig = X + (1 - s) I`.
pub(super) fn solve_feasibility(p: &SdpProblem, opts: &SolverOptions) -> IpmOutput {
    let nb = p.blocks.len();
    let mut aug = p.clone();
    aug.sense = super::Sense::Minimize;
    aug.blocks.push(1);
    aug.objective = super::LinearForm {
        entries: vec![SymEntry::new(nb, 0, 0, 1.0)],
        free: Vec::new(),
    };
    for c in &mut aug.constraints {
        let tr: f64 = c.form.entries.iter().filter(|e| e.row == e.col).map(|e| e.value).sum();
        if tr != 0.0 {
            c.form.entries.push(SymEntry::new(nb, 0, 0, -tr));
            c.rhs -= tr;
        }
    }
    let d = Data::new(&aug);
    let mut out = run(&d, opts, Mode::Slack);
    let sv = out.x[nb][(0, 0)];
    out.x.truncate(nb);
    out.z.truncate(nb);
    for x in &mut out.x {
        let n = x.nrows();
        for i in 0..n {
            x[(i, i)] += 1.0 - sv;
        }
    }
    if out.status == SdpStatus::Infeasible {
        out.ray = Some(farkas_residual(p, &out.y));
    }
    out.dual_valid = false;
    out
}

/// Normalizes `y` to `b^T y = 1` and measures how far it is from a Farkas
/// certificate of the (unaugmented) problem.
pub(super) fn farkas_residual(p: &SdpProblem, y: &[f64]) -> InfeasibilityRay {
    farkas_residual_on(p, y, None)
}

/// Farkas residual with the PSD test restricted to the indices marked in
/// `face`.
pub(super) fn farkas_residual_on(p: &SdpProblem, y: &[f64], face: Option<&[Vec<bool>]>) -> InfeasibilityRay {
    let by: f64 = p.constraints.iter().zip(y).map(|(c, v)| c.rhs * v).sum();
    if !(by > 0.0) {
        return InfeasibilityRay {
            y: y.to_vec(),
            residual: f64::INFINITY,
            face_rows: Vec::new(),
        };
    }
    let yn: Vec<f64> = y.iter().map(|v| v / by).collect();
    let mut aty = p.zero_blocks();
    let mut bty = vec![0.0; p.free_vars];
    for (c, &v) in p.constraints.iter().zip(&yn) {
        c.form.scatter(v, &mut aty);
        for &(f, a) in &c.form.free {
            bty[f] += a * v;
        }
    }
    let mut res = bty.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
    for (bi, b) in aty.iter().enumerate() {
        // A^*(y) must be negative semidefinite.
        let b = match face {
            Some(f) => {
                let keep: Vec<usize> = (0..b.nrows()).filter(|&i| f[bi][i]).collect();
                DMatrix::from_fn(keep.len(), keep.len(), |i, j| b[(keep[i], keep[j])])
            }
            None => b.clone(),
        };
        res = res.max(-min_eigenvalue(&(-b)).min(0.0));
    }
    InfeasibilityRay {
        y: yn,
        residual: res,
        face_rows: Vec::new(),
    }
}
