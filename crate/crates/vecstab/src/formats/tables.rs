//! CSV outputs for external plotting. Floats are written in their shortest
//! round-trip form; missing values are empty fields.

use std::fs;
use std::path::Path;

use vecstab_core::certify::CertificationReport;
use vecstab_core::sim::Trajectory;

use crate::{Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(csv::Writer::from_path(path)?)
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn pairs(w: &[(usize, f64)]) -> String {
    w.iter().map(|(j, v)| format!("{j}:{}", num(*v))).collect::<Vec<_>>().join(";")
}

pub const ROUNDS_HEADER: [&str; 6] = ["phase", "round", "subsystem", "gamma", "a_ii", "weights"];

/// One row per (phase, round, subsystem). A contraction row carries the
/// rate `a_ii^k` and weights certified on the annulus below `gamma^k`; the
/// closure row carries the diagonal of the terminal single CS.
pub fn rounds_rows(r: &CertificationReport) -> Vec<[String; 6]> {
    let s = &r.sequence;
    let mut out = Vec::new();
    for (k, g) in s.envelope.iter().enumerate() {
        for (i, id) in s.ids.iter().enumerate() {
            out.push(["envelope".into(), k.to_string(), id.to_string(), num(g[i]), String::new(), String::new()]);
        }
    }
    for (k, g) in s.levels.iter().enumerate() {
        for (i, id) in s.ids.iter().enumerate() {
            let rate = s.rates.get(k).and_then(|r| r[i]);
            let w = s.weights.get(k).map(|w| pairs(&w[i])).unwrap_or_default();
            out.push(["contraction".into(), k.to_string(), id.to_string(), num(g[i]), opt(rate), w]);
        }
    }
    if !s.terminal.is_empty() {
        for (i, id) in s.ids.iter().enumerate() {
            let a_ii = s.terminal[i].iter().find(|(j, _)| j == id).map(|e| e.1);
            out.push(["closure".into(), "0".into(), id.to_string(), "0".into(), opt(a_ii), pairs(&s.terminal[i])]);
        }
    }
    out
}

pub fn write_rounds(path: &Path, r: Option<&CertificationReport>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(ROUNDS_HEADER)?;
    for row in r.map(rounds_rows).unwrap_or_default() {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Traditional,
    Direct,
    Multiple,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Traditional, Method::Direct, Method::Multiple];

    pub fn name(self) -> &'static str {
        match self {
            Method::Traditional => "traditional",
            Method::Direct => "direct",
            Method::Multiple => "multiple",
        }
    }
}

/// One (gamma, method) cell of a sweep. `max_row_sum` is the largest row sum
/// of the single matrix (for `multiple`: the largest certified `a_ii^0`);
/// `certified` lists the subsystems whose row (or first step) succeeded.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub method: Method,
    pub status: String,
    pub max_row_sum: Option<f64>,
    pub certified: Vec<usize>,
}

pub const SWEEP_HEADER: [&str; 5] = ["gamma", "method", "status", "max_row_sum", "certified"];
pub const SUMMARY_HEADER: [&str; 3] = ["method", "subsystem", "max_gamma"];

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let ids: Vec<String> = r.certified.iter().map(|i| i.to_string()).collect();
        w.write_record([num(r.gamma), r.method.name().into(), r.status.clone(), opt(r.max_row_sum), ids.join(";")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Largest grid level at which each subsystem was certified, per method.
pub fn sweep_summary(rows: &[SweepRow], ids: &[usize]) -> Vec<(Method, usize, Option<f64>)> {
    let mut out = Vec::new();
    for m in Method::ALL {
        for &id in ids {
            let best = rows
                .iter()
                .filter(|r| r.method == m && r.certified.contains(&id))
                .map(|r| r.gamma)
                .fold(None, |a: Option<f64>, g| Some(a.map_or(g, |a| a.max(g))));
            out.push((m, id, best));
        }
    }
    out
}

pub fn write_sweep_summary(path: &Path, summary: &[(Method, usize, Option<f64>)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for (m, id, g) in summary {
        w.write_record([m.name().to_string(), id.to_string(), opt(*g)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationRow {
    pub trajectory: usize,
    /// `boundary` or `interior`.
    pub start: &'static str,
    /// `max_{i,t} V_i(t) - gamma_i^0`.
    pub invariance_excess: f64,
    pub final_max_v: f64,
    /// `applies`, `domain_exit`, `not_entered` or `none`.
    pub bound: &'static str,
    pub bound_violation: Option<f64>,
    pub ok: bool,
}

pub const VALIDATION_HEADER: [&str; 7] =
    ["trajectory", "start", "invariance_excess", "final_max_v", "bound", "bound_violation", "ok"];

pub fn write_validation(path: &Path, rows: &[ValidationRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(VALIDATION_HEADER)?;
    for r in rows {
        w.write_record([
            r.trajectory.to_string(),
            r.start.into(),
            num(r.invariance_excess),
            num(r.final_max_v),
            r.bound.into(),
            opt(r.bound_violation),
            r.ok.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `t, x..., V_<id>...`, every `every`-th recorded sample.
pub fn write_trajectory(path: &Path, traj: &Trajectory, names: &[String], ids: &[usize], every: usize) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    header.extend(ids.iter().map(|i| format!("V_{i}")));
    w.write_record(&header)?;
    for k in (0..traj.len()).step_by(every.max(1)) {
        let mut row = vec![num(traj.time(k))];
        row.extend(traj.state(k).iter().map(|&x| num(x)));
        if let Some(l) = traj.levels.get(k) {
            row.extend(l.iter().map(|&v| num(v)));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
