//! Presolve: canonicalize rows and remove faces forced to zero.
//!
//! A row whose right-hand side is zero and whose entries are all diagonal
//! with one common sign forces those diagonal entries, and hence the whole
//! row and column of each, to vanish in any PSD solution. Those indices are
//! removed from their blocks and the scan repeats. This is a cheap form of
//! facial reduction and matters for SOS programs, whose Gram matrices
//! routinely contain monomials that can only take zero weight.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::ipm::{farkas_residual_on, IpmOutput};
use super::{
    blocks_psd, verify, InfeasibilityRay, LinearForm, SdpConstraint, SdpProblem, SdpSolution, SdpStatus,
    Sense, SolverOptions, SymEntry,
};
use crate::linalg::min_eigenvalue;

const RHS_ZERO: f64 = 1e-12;

pub(super) enum Outcome {
    Infeasible(InfeasibilityRay),
    Reduced(Presolved),
}

pub(super) struct Presolved {
    reduced: Option<SdpProblem>,
    kept_rows: Vec<usize>,
    /// Eliminating rows with the common sign of their diagonal entries and
    /// their nesting depth (1 + depth of the rows that removed indices the
    /// row touches).
    elim_rows: Vec<Elim>,
    /// Per original block: new block index (if any survive) and the kept
    /// original indices in order.
    block_map: Vec<(Option<usize>, Vec<usize>)>,
    free_map: Vec<Option<usize>>,
    active: Vec<Vec<bool>>,
    /// Free variables pinned by rows in which they appear alone.
    fixed: Vec<Option<f64>>,
    fix_rows: Vec<FixRow>,
    rows: Vec<LinearForm>,
}

#[derive(Copy, Clone, Debug)]
struct FixRow {
    row: usize,
    var: usize,
    coef: f64,
}

fn canonical(form: &LinearForm) -> LinearForm {
    let mut entries = form.entries.clone();
    entries.sort_by(|a, b| (a.block, a.row, a.col).cmp(&(b.block, b.row, b.col)));
    let mut merged: Vec<SymEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        match merged.last_mut() {
            Some(l) if (l.block, l.row, l.col) == (e.block, e.row, e.col) => l.value += e.value,
            _ => merged.push(e),
        }
    }
    merged.retain(|e| e.value != 0.0);
    let mut free = form.free.clone();
    free.sort_by_key(|f| f.0);
    let mut mf: Vec<(usize, f64)> = Vec::with_capacity(free.len());
    for (i, c) in free {
        match mf.last_mut() {
            Some(l) if l.0 == i => l.1 += c,
            _ => mf.push((i, c)),
        }
    }
    mf.retain(|f| f.1 != 0.0);
    LinearForm { entries: merged, free: mf }
}

#[derive(Copy, Clone, Debug)]
struct Elim {
    row: usize,
    sign: f64,
    level: u32,
}

pub(super) fn presolve(p: &SdpProblem) -> Outcome {
    let rows: Vec<LinearForm> = p.constraints.iter().map(|c| canonical(&c.form)).collect();
    let mut active: Vec<Vec<bool>> = p.blocks.iter().map(|&n| vec![true; n]).collect();
    let mut alive = vec![true; rows.len()];
    let mut elim_rows = Vec::new();
    let mut removed_at: Vec<Vec<u32>> = p.blocks.iter().map(|&n| vec![0; n]).collect();
    let mut fixed: Vec<Option<f64>> = vec![None; p.free_vars];
    let mut fix_rows: Vec<FixRow> = Vec::new();

    loop {
        let mut changed = false;
        for (k, row) in rows.iter().enumerate() {
            if !alive[k] {
                continue;
            }
            let rhs = effective_rhs(p.constraints[k].rhs, row, &fixed);
            let ents: Vec<&SymEntry> = row
                .entries
                .iter()
                .filter(|e| active[e.block][e.row] && active[e.block][e.col])
                .collect();
            let mut frees = row.free.iter().filter(|f| fixed[f.0].is_none());
            if let Some(&(var, coef)) = frees.next() {
                if ents.is_empty() && frees.next().is_none() {
                    fixed[var] = Some(rhs / coef);
                    fix_rows.push(FixRow { row: k, var, coef });
                    alive[k] = false;
                    changed = true;
                }
                continue;
            }
            if ents.is_empty() {
                if libm::fabs(rhs) <= RHS_ZERO {
                    alive[k] = false;
                    continue;
                }
                let mut y = vec![0.0; rows.len()];
                y[k] = 1.0 / rhs;
                return Outcome::Infeasible(ray_from(p, &rows, y, &elim_rows, &fix_rows, &active));
            }
            let all_diag = ents.iter().all(|e| e.row == e.col);
            let pos = ents.iter().all(|e| e.value > 0.0);
            let neg = ents.iter().all(|e| e.value < 0.0);
            if !(all_diag && (pos || neg)) {
                continue;
            }
            let sgn = if pos { 1.0 } else { -1.0 };
            if libm::fabs(rhs) <= RHS_ZERO {
                let level = 1 + row
                    .entries
                    .iter()
                    .map(|e| removed_at[e.block][e.row].max(removed_at[e.block][e.col]))
                    .max()
                    .unwrap_or(0);
                for e in &ents {
                    active[e.block][e.row] = false;
                    removed_at[e.block][e.row] = level;
                }
                alive[k] = false;
                elim_rows.push(Elim { row: k, sign: sgn, level });
                changed = true;
            } else if rhs * sgn < 0.0 {
                let mut y = vec![0.0; rows.len()];
                y[k] = 1.0 / rhs;
                return Outcome::Infeasible(ray_from(p, &rows, y, &elim_rows, &fix_rows, &active));
            }
        }
        if !changed {
            break;
        }
    }

    let mut block_map = Vec::with_capacity(p.blocks.len());
    let mut new_dims = Vec::new();
    for act in &active {
        let kept: Vec<usize> = (0..act.len()).filter(|&i| act[i]).collect();
        if kept.is_empty() {
            block_map.push((None, kept));
        } else {
            block_map.push((Some(new_dims.len()), kept));
            new_dims.push(block_map.last().unwrap().1.len());
        }
    }
    // Position of each original index inside its reduced block.
    let pos: Vec<Vec<usize>> = block_map
        .iter()
        .zip(&p.blocks)
        .map(|((_, kept), &n)| {
            let mut v = vec![usize::MAX; n];
            for (new, &old) in kept.iter().enumerate() {
                v[old] = new;
            }
            v
        })
        .collect();

    let kept_rows: Vec<usize> = (0..rows.len()).filter(|&k| alive[k]).collect();
    let mut cost_free = vec![0.0; p.free_vars];
    for &(f, c) in &p.objective.free {
        cost_free[f] += c;
    }
    let mut used = vec![false; p.free_vars];
    for &k in &kept_rows {
        for &(f, _) in &rows[k].free {
            used[f] = true;
        }
    }
    let mut free_map = vec![None; p.free_vars];
    let mut nf = 0;
    for f in 0..p.free_vars {
        if fixed[f].is_none() && (used[f] || cost_free[f] != 0.0) {
            free_map[f] = Some(nf);
            nf += 1;
        }
    }
    let remap = |form: &LinearForm| LinearForm {
        entries: form
            .entries
            .iter()
            .filter(|e| active[e.block][e.row] && active[e.block][e.col])
            .map(|e| SymEntry {
                block: block_map[e.block].0.unwrap(),
                row: pos[e.block][e.row],
                col: pos[e.block][e.col],
                value: e.value,
            })
            .collect(),
        free: form.free.iter().filter_map(|&(f, c)| free_map[f].map(|g| (g, c))).collect(),
    };
    let reduced = if kept_rows.is_empty() || new_dims.is_empty() {
        None
    } else {
        let mut r = SdpProblem::new(new_dims, nf, p.sense);
        r.constraints = kept_rows
            .iter()
            .map(|&k| SdpConstraint {
                form: remap(&rows[k]),
                rhs: effective_rhs(p.constraints[k].rhs, &rows[k], &fixed),
            })
            .collect();
        r.objective = remap(&canonical(&p.objective));
        Some(r)
    };
    // Rows that survive with only free variables still need the IPM, but a
    // problem whose PSD part vanished entirely is left to the trivial path
    // only when no rows remain.
    let reduced = match reduced {
        None if !kept_rows.is_empty() => {
            // All PSD indices eliminated but rows remain: keep a dummy 1x1
            // block so the IPM sees a well-formed problem.
            let mut r = SdpProblem::new(vec![1], nf, p.sense);
            r.constraints = kept_rows
                .iter()
                .map(|&k| SdpConstraint {
                    form: LinearForm {
                        entries: Vec::new(),
                        free: rows[k].free.iter().filter_map(|&(f, c)| free_map[f].map(|g| (g, c))).collect(),
                    },
                    rhs: effective_rhs(p.constraints[k].rhs, &rows[k], &fixed),
                })
                .collect();
            r.objective = LinearForm {
                entries: Vec::new(),
                free: p.objective.free.iter().filter_map(|&(f, c)| free_map[f].map(|g| (g, c))).collect(),
            };
            Some(r)
        }
        other => other,
    };
    Outcome::Reduced(Presolved {
        reduced,
        kept_rows,
        elim_rows,
        block_map,
        free_map,
        active,
        fixed,
        fix_rows,
        rows,
    })
}

fn effective_rhs(rhs: f64, row: &LinearForm, fixed: &[Option<f64>]) -> f64 {
    row.free
        .iter()
        .filter_map(|&(f, a)| fixed[f].map(|v| a * v))
        .fold(rhs, |r, t| r - t)
}

/// Chooses the multipliers of pinning rows so that `B^T y = scale_c * c_free`,
/// undoing the pinning in reverse order.
fn complete_free_duals(p: &SdpProblem, rows: &[LinearForm], y: &mut [f64], fix: &[FixRow], scale_c: f64) {
    if fix.is_empty() {
        return;
    }
    let mut bty = vec![0.0; p.free_vars];
    let mut cost = vec![0.0; p.free_vars];
    for &(f, c) in &p.objective.free {
        cost[f] += scale_c * c;
    }
    for fr in fix {
        y[fr.row] = 0.0;
    }
    for (row, &v) in rows.iter().zip(y.iter()) {
        for &(f, a) in &row.free {
            bty[f] += a * v;
        }
    }
    for fr in fix.iter().rev() {
        let v = (cost[fr.var] - bty[fr.var]) / fr.coef;
        y[fr.row] = v;
        for &(f, a) in &rows[fr.row].free {
            bty[f] += a * v;
        }
    }
}

/// Puts weight `t^(L + 1 - level)` on eliminating rows (growing `t`
/// geometrically) until `scale_c * C - A^*(y)` is PSD or the attempts run
/// out. Rows removed earlier need to dominate the coupling terms of rows
/// removed after them, hence the level-dependent powers.
fn lift(p: &SdpProblem, y: &mut [f64], elim: &[Elim], scale_c: f64) -> bool {
    if elim.is_empty() {
        return true;
    }
    let base = |y: &[f64]| {
        let mut w = p.zero_blocks();
        p.objective.scatter(scale_c, &mut w);
        for (c, &v) in p.constraints.iter().zip(y) {
            if v != 0.0 {
                c.form.scatter(-v, &mut w);
            }
        }
        w
    };
    // Tolerance scaled by the unlifted data; lifted weights can be huge and
    // must not loosen the test.
    let w0 = base(y);
    let tol = 1e-10 * (1.0 + w0.iter().fold(0.0f64, |m, b| m.max(b.amax())));
    let ok = |w: &[DMatrix<f64>]| w.iter().all(|b| min_eigenvalue(b) >= -tol);
    if ok(&w0) {
        return true;
    }
    let y0 = y.to_vec();
    let top = elim.iter().map(|e| e.level).max().unwrap_or(0) as i32;
    let mut t = 1e-3;
    for _ in 0..80 {
        for e in elim {
            y[e.row] = -e.sign * libm::pow(t, (top + 1 - e.level as i32) as f64);
        }
        if y.iter().any(|v| !v.is_finite() || libm::fabs(*v) > 1e200) {
            break;
        }
        if ok(&base(y)) {
            return true;
        }
        t *= 2.0;
    }
    y.copy_from_slice(&y0);
    false
}

/// A Farkas ray for the full problem when lifting succeeds; otherwise the
/// ray certifies infeasibility on the face cut out by the eliminated rows.
fn ray_from(
    p: &SdpProblem,
    rows: &[LinearForm],
    mut y: Vec<f64>,
    elim: &[Elim],
    fix: &[FixRow],
    face: &[Vec<bool>],
) -> InfeasibilityRay {
    complete_free_duals(p, rows, &mut y, fix, 0.0);
    let lifted = lift(p, &mut y, elim, 0.0);
    complete_free_duals(p, rows, &mut y, fix, 0.0);
    if lifted {
        farkas_residual_on(p, &y, None)
    } else {
        let mut r = farkas_residual_on(p, &y, Some(face));
        r.face_rows = elim.iter().map(|e| e.row).collect();
        r
    }
}

impl Presolved {
    fn dual_completion(&self, p: &SdpProblem, y: &mut [f64]) {
        complete_free_duals(p, &self.rows, y, &self.fix_rows, 1.0);
        lift(p, y, &self.elim_rows, 1.0);
        complete_free_duals(p, &self.rows, y, &self.fix_rows, 1.0);
    }

    pub(super) fn problem(&self) -> Option<&SdpProblem> {
        self.reduced.as_ref()
    }

    pub(super) fn trivial_solution(&self, p: &SdpProblem) -> SdpSolution {
        let mut s = SdpSolution::empty(p, SdpStatus::Optimal);
        let has_cost = p.objective.free.iter().any(|f| f.1 != 0.0 && self.fixed[f.0].is_none());
        s.status = match (p.sense, has_cost) {
            (Sense::Feasibility, _) => SdpStatus::Feasible,
            (Sense::Minimize, false) => SdpStatus::Optimal,
            (Sense::Minimize, true) => SdpStatus::Unbounded,
        };
        for (f, v) in self.fixed.iter().enumerate() {
            if let Some(v) = v {
                s.free_values[f] = *v;
            }
        }
        let mut y = vec![0.0; p.constraints.len()];
        self.dual_completion(p, &mut y);
        s.dual = y;
        s.dual_slack = dual_slack_from(p, &s.dual);
        fill_residuals(p, &mut s);
        s
    }

    pub(super) fn restore(&self, p: &SdpProblem, inner: IpmOutput, opts: &SolverOptions) -> SdpSolution {
        let m = p.constraints.len();
        let mut sol = SdpSolution::empty(p, inner.status);
        sol.iterations = inner.iterations;
        for (b, (nb, kept)) in self.block_map.iter().enumerate() {
            if let Some(nb) = nb {
                let xr = &inner.x[*nb];
                for (i2, &i) in kept.iter().enumerate() {
                    for (j2, &j) in kept.iter().enumerate() {
                        sol.block_values[b][(i, j)] = xr[(i2, j2)];
                    }
                }
            }
        }
        for (f, g) in self.free_map.iter().enumerate() {
            if let Some(g) = g {
                sol.free_values[f] = inner.u[*g];
            } else if let Some(v) = self.fixed[f] {
                sol.free_values[f] = v;
            }
        }
        let mut y = vec![0.0; m];
        if inner.dual_valid {
            for (r, &k) in self.kept_rows.iter().enumerate() {
                y[k] = inner.y[r];
            }
            if inner.status.has_primal() {
                self.dual_completion(p, &mut y);
            }
        }
        let mut z = dual_slack_from(p, &y);
        if inner.dual_valid {
            for (b, (nb, kept)) in self.block_map.iter().enumerate() {
                if let Some(nb) = nb {
                    for (i2, &i) in kept.iter().enumerate() {
                        for (j2, &j) in kept.iter().enumerate() {
                            z[b][(i, j)] = inner.z[*nb][(i2, j2)];
                        }
                    }
                }
            }
        }
        sol.dual = y;
        sol.dual_slack = z;
        if let Some(ray) = inner.ray {
            let mut ry = vec![0.0; m];
            for (r, &k) in self.kept_rows.iter().enumerate() {
                ry[k] = ray.y[r];
            }
            sol.ray = Some(ray_from(p, &self.rows, ry, &self.elim_rows, &self.fix_rows, &self.active));
        }
        fill_residuals(p, &mut sol);

        // Never report more than the recomputed numbers support.
        if sol.status.has_primal() {
            let primal_ok = sol.primal_residual <= opts.feas_tol && blocks_psd(&sol.block_values, opts.psd_tol);
            sol.status = if !primal_ok {
                SdpStatus::NumericFailure
            } else if p.sense == Sense::Minimize
                && sol.status == SdpStatus::Optimal
                && !(sol.dual_residual <= opts.feas_tol && sol.duality_gap <= opts.gap_tol)
            {
                SdpStatus::Feasible
            } else {
                sol.status
            };
        }
        sol
    }
}

fn dual_slack_from(p: &SdpProblem, y: &[f64]) -> Vec<DMatrix<f64>> {
    let mut z = p.zero_blocks();
    p.objective.scatter(1.0, &mut z);
    for (c, &v) in p.constraints.iter().zip(y) {
        if v != 0.0 {
            c.form.scatter(-v, &mut z);
        }
    }
    z
}

fn fill_residuals(p: &SdpProblem, s: &mut SdpSolution) {
    if let Ok(r) = verify(p, s) {
        s.primal_residual = r.primal_residual;
        s.dual_residual = r.dual_residual;
        s.objective = r.primal_objective;
        s.dual_objective = r.dual_objective;
        s.duality_gap = r.duality_gap;
    }
}
