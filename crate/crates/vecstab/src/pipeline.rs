//! generate → synthesize LFs → certify → simulate, plus the single-CS sweep.
//! Every step is deterministic given the configuration.

use std::fs;
use std::path::PathBuf;

use nalgebra::DMatrix;
use vecstab_core::certify::{
    direct_row, direct_single_cs, gershgorin_verdict, power_transform, run_protocol, traditional_single_cs,
    CertRecord, CertifyError, ComparisonMatrix, Ctx, DirectMode, DirectOutcome, Executor, Mode,
    Phase, Provenance, RowOutcome, StepStatus, Verdict,
};
use vecstab_core::lyap::{bound_constants, embed, sample_sublevel, synth_quadratic_lf, Coupling, LyapError, LyapunovFn};
use vecstab_core::model::{generate_vdp_network, Network};
use vecstab_core::rng::Stream;
use vecstab_core::sim::{check_comparison_bound, integrate, sample_disturbance, BoundCheck, SimError};
use vecstab_core::sos::check_certificate;

use crate::config::{LfSource, RunConfig, RunMode};
use crate::exec::RayonExecutor;
use crate::formats::lfs::LfsFile;
use crate::formats::network::NetworkFile;
use crate::formats::report::{matrix_rows, ReportFile, SingleFile, SCHEMA_VERSION};
use crate::formats::tables::{self, Method, SweepRow, ValidationRow};
use crate::formats::{read_json, write_json};
use crate::{Error, Result};

pub const EXIT_STABLE: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_LIMIT_SET: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_VALIDATION_FAILED: i32 = 4;

pub fn exit_code(v: &Verdict) -> i32 {
    match v {
        Verdict::ExponentiallyStable => EXIT_STABLE,
        Verdict::ConvergesToLimitSet(_) => EXIT_LIMIT_SET,
        Verdict::Inconclusive(_) => EXIT_INCONCLUSIVE,
    }
}

pub fn generate(cfg: &RunConfig) -> Result<Network> {
    let topology = cfg.topology.resolve()?;
    Ok(generate_vdp_network(cfg.seed, &topology)?.0)
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<PathBuf> {
    let net = generate(cfg)?;
    let path = cfg.network_path();
    write_json(&path, &NetworkFile::from_network(&net))?;
    Ok(path)
}

pub fn load_network(cfg: &RunConfig) -> Result<Network> {
    read_json::<NetworkFile>(&cfg.network_path())?.to_network()
}

/// Re-verification of an LF synthesis certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthAudit {
    pub id: usize,
    pub coeff_residual: f64,
    pub min_eigenvalue: f64,
    pub sample_violation: Option<f64>,
}

impl SynthAudit {
    pub fn record(&self) -> CertRecord {
        CertRecord {
            stage: vecstab_core::certify::Stage::Direct,
            round: 0,
            agent: self.id,
            edge: None,
            coeff_residual: self.coeff_residual,
            min_eigenvalue: self.min_eigenvalue,
            sample_violation: self.sample_violation,
        }
    }
}

/// Quadratic LFs for every subsystem (with their decrease certificates
/// re-verified), or the functions of an LF file.
pub fn synth_lfs(net: &Network, cfg: &RunConfig, exec: &RayonExecutor) -> Result<(Vec<LyapunovFn>, Vec<SynthAudit>)> {
    match &cfg.lf {
        LfSource::File(p) => Ok((read_json::<LfsFile>(p)?.to_lfs(net)?, Vec::new())),
        LfSource::Quadratic => {
            let opts = cfg.lyap_options();
            let samples = cfg.tolerances.audit_samples;
            let seed = cfg.seed;
            let subs = net.subsystems();
            let out = exec.map(subs.len(), &|k| -> Result<(LyapunovFn, SynthAudit)> {
                let q = synth_quadratic_lf(&subs[k], &opts)?;
                let chk = check_certificate(&q.certificate).map_err(LyapError::from)?;
                let sample_violation = (samples > 0).then(|| {
                    let mut rng = Stream::new(seed, (0x5e << 40) | subs[k].id as u64);
                    let mut x = vec![0.0; net.universe().len()];
                    sample_sublevel(&q.lf, 1.0, samples, &mut rng)
                        .iter()
                        .map(|p| {
                            embed(&mut x, &q.lf.vars, p);
                            -q.certificate.target.eval(&x)
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                });
                let audit = SynthAudit {
                    id: subs[k].id,
                    coeff_residual: chk.coeff_residual,
                    min_eigenvalue: chk.min_eigenvalue,
                    sample_violation,
                };
                Ok((q.lf, audit))
            });
            let (lfs, audits) = out.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
            Ok((lfs, audits))
        }
    }
}

fn lfs_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("lfs.json")
}

/// Loads the network and prepares LFs, writing `lfs.json` next to the
/// other outputs so later commands use exactly the same functions.
pub fn prepare(cfg: &RunConfig, exec: &RayonExecutor) -> Result<(Network, Vec<LyapunovFn>, Vec<SynthAudit>)> {
    let net = load_network(cfg)?;
    let (lfs, audits) = synth_lfs(&net, cfg, exec)?;
    write_json(&lfs_path(cfg), &LfsFile::from_lfs(&net, &lfs))?;
    Ok((net, lfs, audits))
}

fn couplings<'a>(net: &'a Network, lfs: &'a [LyapunovFn], id: usize) -> Vec<Coupling<'a>> {
    net.incoming(id)
        .map(|it| Coupling {
            from: it.from,
            lf: &lfs[net.index_of(it.from).expect("interaction source")],
            g: &it.g,
        })
        .collect()
}

/// The traditional matrix `Ã` for the `d`-th-root functions on the uniform
/// level `gamma`; `Err` carries the reason a magnitude bound was not found.
pub fn traditional_tilde(
    net: &Network,
    lfs: &[LyapunovFn],
    gamma: f64,
    cfg: &RunConfig,
    exec: &RayonExecutor,
) -> Result<std::result::Result<ComparisonMatrix, String>> {
    let opts = cfg.lyap_options();
    let subs = net.subsystems();
    let consts = exec.map(subs.len(), &|k| bound_constants(&lfs[k], &subs[k].f, &couplings(net, lfs, subs[k].id), gamma, &opts));
    let mut ok = Vec::with_capacity(consts.len());
    for (c, s) in consts.into_iter().zip(subs) {
        match c {
            Ok(c) => ok.push(c),
            Err(e @ LyapError::Constant { .. }) => return Ok(Err(format!("subsystem {}: {e}", s.id))),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Ok(traditional_single_cs(net, lfs, &ok)?))
}

fn common_degree(lfs: &[LyapunovFn]) -> Result<u32> {
    let d = lfs.first().map_or(2, |l| l.d);
    if lfs.iter().any(|l| l.d != d) {
        return Err(CertifyError::MixedDegree.into());
    }
    Ok(d)
}

fn single_file(m: &ComparisonMatrix, certs: &[CertRecord]) -> SingleFile {
    let g = gershgorin_verdict(&m.a, &m.domain_gammas);
    SingleFile {
        provenance: m.provenance.into(),
        domain_gammas: m.domain_gammas.clone(),
        a: matrix_rows(&m.a),
        row_sums: m.row_sums(),
        hurwitz_rows: g.hurwitz_row.clone(),
        invariance_rows: g.invariance_row.clone(),
        eigen_hurwitz: g.eigen_hurwitz,
        certificates: certs.iter().map(Into::into).collect(),
    }
}

fn single_verdict(s: &SingleFile) -> Verdict {
    let bad = |rows: &[bool]| rows.iter().position(|&b| !b);
    if let Some(i) = bad(&s.hurwitz_rows) {
        Verdict::Inconclusive(format!("row {} of the comparison matrix has a nonnegative sum", i + 1))
    } else if let Some(i) = bad(&s.invariance_rows) {
        Verdict::Inconclusive(format!("row {} violates the invariance condition", i + 1))
    } else {
        Verdict::ExponentiallyStable
    }
}

fn report(cfg: &RunConfig, ids: &[usize], v0: &[f64], verdict: &Verdict, single: Option<SingleFile>) -> ReportFile {
    ReportFile {
        schema_version: SCHEMA_VERSION.to_string(),
        mode: cfg.mode,
        ids: ids.to_vec(),
        v0: v0.to_vec(),
        verdict: verdict.into(),
        single,
        protocol: None,
    }
}

/// Runs the configured mode. Single modes certify the level box the
/// disturbance starts in (`max v0` uniformly for the traditional matrix,
/// `v0` clamped below at the closure floor for the direct one).
pub fn certify(net: &Network, lfs: &[LyapunovFn], cfg: &RunConfig, exec: &RayonExecutor) -> Result<ReportFile> {
    let ids = net.ids();
    let v0 = cfg.disturbance.levels(&ids)?;
    let opts = cfg.certify_options();
    let floor = opts.closure_floor;
    match cfg.mode {
        RunMode::SingleTraditional => {
            let gamma = v0.iter().copied().fold(floor, f64::max);
            let at = match traditional_tilde(net, lfs, gamma, cfg, exec)? {
                Ok(at) => at,
                Err(reason) => return Ok(report(cfg, &ids, &v0, &Verdict::Inconclusive(reason), None)),
            };
            let m = ids.len();
            let a = match power_transform(&at.a, &DMatrix::from_element(m, m, 1.0), common_degree(lfs)?) {
                Ok(a) => a,
                Err(CertifyError::HypothesisViolated(i)) => {
                    let v = Verdict::Inconclusive(format!("power-transform hypothesis violated for subsystem {}", ids[i]));
                    return Ok(report(cfg, &ids, &v0, &v, Some(single_file(&at, &[]))));
                }
                Err(e) => return Err(e.into()),
            };
            let cm = ComparisonMatrix { a, provenance: Provenance::PowerTransform, ..at };
            let s = single_file(&cm, &[]);
            Ok(report(cfg, &ids, &v0, &single_verdict(&s), Some(s)))
        }
        RunMode::SingleDirect => {
            let gammas: Vec<f64> = v0.iter().map(|&v| v.max(floor)).collect();
            let ctx = Ctx::new(net, lfs)?;
            let (out, certs) = direct_single_cs(&ctx, &gammas, DirectMode::Feasibility, &opts)?;
            Ok(match out {
                DirectOutcome::Matrix(cm) => {
                    let s = single_file(&cm, &certs);
                    report(cfg, &ids, &v0, &single_verdict(&s), Some(s))
                }
                DirectOutcome::Infeasible { id } => {
                    let v = Verdict::Inconclusive(format!("direct comparison row of subsystem {id} is infeasible"));
                    report(cfg, &ids, &v0, &v, None)
                }
                DirectOutcome::Unknown { id } => {
                    let v = Verdict::Inconclusive(format!("solver status unknown for the row of subsystem {id}"));
                    report(cfg, &ids, &v0, &v, None)
                }
            })
        }
        RunMode::MultipleSequential | RunMode::MultipleParallel => {
            let mode = if cfg.mode == RunMode::MultipleSequential { Mode::Sequential } else { Mode::Parallel };
            let ctx = Ctx::new(net, lfs)?;
            let r = run_protocol(&ctx, &v0, mode, &opts, exec)?;
            Ok(ReportFile::from_protocol(cfg.mode, &r))
        }
    }
}

pub fn report_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("report.json")
}

/// `certify` plus `report.json` and `rounds.csv`; returns the exit code.
pub fn cmd_certify(cfg: &RunConfig) -> Result<(ReportFile, i32)> {
    let exec = RayonExecutor::new(cfg.jobs)?;
    let (net, lfs, _) = prepare(cfg, &exec)?;
    let rep = certify(&net, &lfs, cfg, &exec)?;
    write_json(&report_path(cfg), &rep)?;
    tables::write_rounds(&cfg.out.join("rounds.csv"), rep.protocol_report().as_ref())?;
    let code = exit_code(&rep.verdict());
    Ok((rep, code))
}

/// One sweep cell. Status `ok` unless a program could not be decided.
pub fn sweep_cell(
    net: &Network,
    lfs: &[LyapunovFn],
    gamma: f64,
    method: Method,
    cfg: &RunConfig,
    exec: &RayonExecutor,
) -> Result<SweepRow> {
    let ids = net.ids();
    let opts = cfg.certify_options();
    let mut row = SweepRow { gamma, method, status: "ok".into(), max_row_sum: None, certified: Vec::new() };
    match method {
        Method::Traditional => match traditional_tilde(net, lfs, gamma, cfg, exec)? {
            // With unit ratios the power transform scales every row sum of
            // `Ã` by `d`, so the sign pattern carries over.
            Ok(at) => {
                let d = common_degree(lfs)? as f64;
                let sums: Vec<f64> = at.row_sums().into_iter().map(|s| d * s).collect();
                row.max_row_sum = sums.iter().copied().reduce(f64::max);
                row.certified = ids.iter().zip(&sums).filter(|(_, &s)| s < 0.0).map(|(&i, _)| i).collect();
            }
            Err(reason) => row.status = format!("unknown: {reason}"),
        },
        Method::Direct => {
            let ctx = Ctx::new(net, lfs)?;
            let gammas = vec![gamma; ids.len()];
            let rows = exec.map(ids.len(), &|k| direct_row(&ctx, ids[k], &gammas, DirectMode::MinimizeRowSum, &opts));
            let mut sums = Vec::new();
            for (id, r) in ids.iter().zip(rows) {
                match r?.0 {
                    RowOutcome::Row(coeffs) => {
                        let s: f64 = coeffs.iter().map(|c| c.1).sum();
                        if s < 0.0 {
                            row.certified.push(*id);
                        }
                        sums.push(s);
                    }
                    RowOutcome::Infeasible => row.status = format!("infeasible: subsystem {id}"),
                    RowOutcome::Unknown => row.status = format!("unknown: subsystem {id}"),
                }
            }
            if sums.len() == ids.len() {
                row.max_row_sum = sums.into_iter().reduce(f64::max);
            }
        }
        Method::Multiple => {
            let steps = first_step(net, lfs, gamma, Mode::Sequential, cfg, exec)?;
            let mut rates = Vec::new();
            for s in &steps {
                if s.status == StepStatus::Unknown {
                    row.status = format!("unknown: subsystem {}", s.id);
                }
                if s.status == StepStatus::Certified && s.next < gamma {
                    row.certified.push(s.id);
                }
                rates.extend(s.rate);
            }
            if rates.len() == steps.len() {
                row.max_row_sum = rates.into_iter().reduce(f64::max);
            }
        }
    }
    Ok(row)
}

/// The first contraction step of every agent from the uniform level `gamma`.
pub fn first_step(
    net: &Network,
    lfs: &[LyapunovFn],
    gamma: f64,
    mode: Mode,
    cfg: &RunConfig,
    exec: &RayonExecutor,
) -> Result<Vec<vecstab_core::certify::Phase2Step>> {
    let ctx = Ctx::new(net, lfs)?;
    let levels = vec![gamma; net.subsystems().len()];
    Ok(vecstab_core::certify::phase2_round(&ctx, &levels, mode, &cfg.certify_options(), exec)?.0)
}

pub fn sweep(net: &Network, lfs: &[LyapunovFn], cfg: &RunConfig, exec: &RayonExecutor) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &g in &cfg.gamma_grid {
        for m in Method::ALL {
            rows.push(sweep_cell(net, lfs, g, m, cfg, exec)?);
        }
    }
    Ok(rows)
}

/// `sweep.csv` and `sweep_summary.csv`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let exec = RayonExecutor::new(cfg.jobs)?;
    let (net, lfs, _) = prepare(cfg, &exec)?;
    let rows = sweep(&net, &lfs, cfg, &exec)?;
    tables::write_sweep(&cfg.out.join("sweep.csv"), &rows)?;
    tables::write_sweep_summary(&cfg.out.join("sweep_summary.csv"), &tables::sweep_summary(&rows, &net.ids()))?;
    Ok(rows)
}

/// A single comparison system and the level box on which it holds.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundSpec {
    pub a: DMatrix<f64>,
    pub domain: Vec<f64>,
}

/// Where the report offers a single CS: the single matrix itself, or the
/// closing rows of the protocol on their inflated levels.
pub fn bound_spec(rep: &ReportFile) -> Result<Option<BoundSpec>> {
    if rep.verdict() != Verdict::ExponentiallyStable {
        return Ok(None);
    }
    if let Some(s) = &rep.single {
        let m = s.matrix(&rep.ids)?;
        return Ok(Some(BoundSpec { a: m.a, domain: m.domain_gammas }));
    }
    let Some(p) = rep.protocol_report() else { return Ok(None) };
    let terminal = &p.sequence.terminal;
    if terminal.is_empty() {
        return Ok(None);
    }
    let m = rep.ids.len();
    let pos = |id: usize| rep.ids.iter().position(|&i| i == id);
    let mut a = DMatrix::zeros(m, m);
    for (i, row) in terminal.iter().enumerate() {
        for &(j, v) in row {
            a[(i, pos(j).ok_or_else(|| Error::Format(format!("terminal row names unknown subsystem {j}")))?)] = v;
        }
    }
    let mut domain = vec![f64::NAN; m];
    for msg in p.messages.iter().filter(|msg| msg.round.phase == Phase::Closure && msg.round.index == 0) {
        if let Some(i) = pos(msg.sender) {
            domain[i] = msg.gamma;
        }
    }
    if domain.iter().any(|d| d.is_nan()) {
        return Err(Error::Format("closing levels missing from the message log".into()));
    }
    Ok(Some(BoundSpec { a, domain }))
}

/// Validation of one trajectory: invariance of the envelope, the
/// comparison bound from the first entry into its domain, and decay.
pub fn check_trajectory(
    net: &Network,
    lfs: &[LyapunovFn],
    x0: &[f64],
    envelope: &[f64],
    bound: Option<&BoundSpec>,
    cfg: &RunConfig,
) -> Result<(ValidationRowCore, Option<vecstab_core::sim::Trajectory>)> {
    let v = &cfg.validation;
    let traj = match integrate(net, lfs, x0, v.t_end, v.dt, 1) {
        Ok(t) => t,
        Err(SimError::BlowUp { .. }) => {
            let row = ValidationRowCore {
                invariance_excess: f64::INFINITY,
                final_max_v: f64::INFINITY,
                bound: "none",
                bound_violation: None,
                ok: false,
            };
            return Ok((row, None));
        }
        Err(e) => return Err(e.into()),
    };
    let mut excess = f64::NEG_INFINITY;
    for l in &traj.levels {
        for (vi, gi) in l.iter().zip(envelope) {
            excess = excess.max(vi - gi);
        }
    }
    let final_max_v = traj.levels.last().map_or(0.0, |l| l.iter().copied().fold(0.0, f64::max));
    let (label, violation, bound_ok) = match bound {
        None => ("none", None, true),
        Some(b) => match traj.levels.iter().position(|l| l.iter().zip(&b.domain).all(|(v, d)| v <= d)) {
            None => ("not_entered", None, true),
            Some(k) => match check_comparison_bound(&traj.tail(k), &b.a, &b.domain, &net.ids())? {
                BoundCheck::Applies { max_violation } => ("applies", Some(max_violation), max_violation <= v.bound_tol),
                BoundCheck::DomainExit { max_violation, .. } => ("domain_exit", Some(max_violation), false),
            },
        },
    };
    let ok = excess <= v.invariance_tol && final_max_v < v.final_level && bound_ok;
    let row = ValidationRowCore { invariance_excess: excess, final_max_v, bound: label, bound_violation: violation, ok };
    Ok((row, Some(traj)))
}

/// [`ValidationRow`] without its bookkeeping columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationRowCore {
    pub invariance_excess: f64,
    pub final_max_v: f64,
    pub bound: &'static str,
    pub bound_violation: Option<f64>,
    pub ok: bool,
}

/// Initial states: the configured list, or half on the envelope boundary
/// (`V_i = gamma_i^0` for all `i`) and half at uniform fractions of it.
pub fn validation_starts(net: &Network, lfs: &[LyapunovFn], envelope: &[f64], cfg: &RunConfig) -> Result<Vec<(&'static str, Vec<f64>)>> {
    let v = &cfg.validation;
    if let Some(starts) = &v.starts {
        return Ok(starts.iter().map(|s| ("given", s.clone())).collect());
    }
    let half = v.trajectories.div_ceil(2);
    (0..v.trajectories)
        .map(|k| {
            let mut rng = Stream::new(v.seed, k as u64);
            let (label, levels): (&'static str, Vec<f64>) = if k < half {
                ("boundary", envelope.to_vec())
            } else {
                ("interior", envelope.iter().map(|g| g * rng.unit()).collect())
            };
            Ok((label, sample_disturbance(net, lfs, &levels, &mut rng)?))
        })
        .collect()
}

/// Simulates from the report's envelope; returns the rows and whether
/// every check passed. An empty start list is a successful no-op.
pub fn validate(
    net: &Network,
    lfs: &[LyapunovFn],
    rep: &ReportFile,
    cfg: &RunConfig,
    exec: &RayonExecutor,
) -> Result<Vec<ValidationRow>> {
    let empty = cfg.validation.starts.as_ref().is_some_and(|s| s.is_empty()) || cfg.validation.trajectories == 0;
    if empty {
        return Ok(Vec::new());
    }
    let envelope = rep.envelope().ok_or_else(|| Error::Format("report has no invariant envelope to validate".into()))?;
    if envelope.len() != net.subsystems().len() {
        return Err(Error::Format("report does not match the network".into()));
    }
    let bound = bound_spec(rep)?;
    let starts = validation_starts(net, lfs, &envelope, cfg)?;
    let n = net.universe().len();
    if let Some(s) = starts.iter().find(|s| s.1.len() != n) {
        return Err(Error::Config(format!("initial state of length {} for {n} variables", s.1.len())));
    }
    let write = cfg.validation.write_trajectories;
    let dir = cfg.out.join("trajectories");
    let names = net.universe().names().to_vec();
    let ids = net.ids();
    let results = exec.map(starts.len(), &|k| -> Result<ValidationRow> {
        let (label, x0) = &starts[k];
        let (core, traj) = check_trajectory(net, lfs, x0, &envelope, bound.as_ref(), cfg)?;
        if let (true, Some(t)) = (k < write, traj.as_ref()) {
            tables::write_trajectory(&dir.join(format!("traj_{k:03}.csv")), t, &names, &ids, cfg.validation.write_every)?;
        }
        Ok(ValidationRow {
            trajectory: k,
            start: label,
            invariance_excess: core.invariance_excess,
            final_max_v: core.final_max_v,
            bound: core.bound,
            bound_violation: core.bound_violation,
            ok: core.ok,
        })
    });
    results.into_iter().collect()
}

/// `validation.csv` (plus `trajectories/`); exit code 4 when any
/// trajectory fails a check.
pub fn cmd_validate(cfg: &RunConfig) -> Result<(Vec<ValidationRow>, i32)> {
    let exec = RayonExecutor::new(cfg.jobs)?;
    let net = load_network(cfg)?;
    let lfs = read_json::<LfsFile>(&lfs_path(cfg))?.to_lfs(&net)?;
    let rep: ReportFile = read_json(&report_path(cfg))?;
    rep.check_version()?;
    let rows = validate(&net, &lfs, &rep, cfg, &exec)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    tables::write_validation(&cfg.out.join("validation.csv"), &rows)?;
    let code = if rows.iter().all(|r| r.ok) { EXIT_STABLE } else { EXIT_VALIDATION_FAILED };
    Ok((rows, code))
}
