//! Acceptance run on the seed-1 network: one PASS/FAIL line per criterion.
//! Exits non-zero when any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use tempfile::TempDir;
use vecstab::config::{Disturbance, RunConfig, RunMode};
use vecstab::core::certify::{gershgorin_verdict, is_metzler, power_transform, Executor, Mode, StepStatus};
use vecstab::core::lyap::{self_decay_rate, DecayRate, LyapunovFn};
use vecstab::core::model::Network;
use vecstab::core::poly::{Polynomial, Universe};
use vecstab::core::rng::Stream;
use vecstab::core::sdp::{solve, LinearForm, SdpConstraint, SdpProblem, SdpStatus, Sense, SolverOptions, SymEntry};
use vecstab::core::sim::{halving_check, Field};
use vecstab::core::sos::{SosExpr, SosProgram, SosStatus};
use vecstab::exec::RayonExecutor;
use vecstab::formats::report::{CertRecordFile, ReportFile};
use vecstab::formats::tables::Method;
use vecstab::pipeline::{self, BoundSpec, SynthAudit};

struct Line {
    pass: bool,
    detail: String,
}

fn line(pass: bool, detail: impl Into<String>) -> Line {
    Line { pass, detail: detail.into() }
}

fn below(rng: &mut Stream, n: u64) -> usize {
    (rng.next_u64() % n) as usize
}

// ---- 1: SOS / SDP soundness ----

fn fixed_sos(u: &std::sync::Arc<Universe>, text: &str) -> (SosStatus, f64) {
    let p = Polynomial::parse(u, text).unwrap();
    let mut prog = SosProgram::new(u);
    prog.add_sos(SosExpr::known(p)).unwrap();
    let sol = prog.solve(&SolverOptions::default()).unwrap();
    let res = if sol.status.is_feasible() { prog.max_residual(&sol).unwrap() } else { f64::NAN };
    (sol.status, res)
}

fn sym(rng: &mut Stream, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            if rng.unit() < 0.6 {
                let v = rng.uniform(-2.0, 2.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    m
}

fn pd(rng: &mut Stream, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.uniform(-1.0, 1.0));
    &g * g.transpose() + DMatrix::identity(n, n) * 0.5
}

fn entries(mats: &[DMatrix<f64>]) -> Vec<SymEntry> {
    let mut out = Vec::new();
    for (bl, m) in mats.iter().enumerate() {
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                if m[(i, j)] != 0.0 {
                    out.push(SymEntry::new(bl, i, j, m[(i, j)]));
                }
            }
        }
    }
    out
}

/// A strictly feasible primal-dual pair by construction, solved and then
/// checked against KKT residuals recomputed from the dense data.
fn random_sdp(seed: u64) -> Result<(f64, f64), String> {
    let mut rng = Stream::new(seed, 0xacce);
    let dims: Vec<usize> = (0..1 + below(&mut rng, 2)).map(|_| 1 + below(&mut rng, 8)).collect();
    let m = 1 + below(&mut rng, 12);
    let x0: Vec<_> = dims.iter().map(|&n| pd(&mut rng, n)).collect();
    let z0: Vec<_> = dims.iter().map(|&n| pd(&mut rng, n)).collect();
    let y0: Vec<f64> = (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let a: Vec<Vec<DMatrix<f64>>> = (0..m).map(|_| dims.iter().map(|&n| sym(&mut rng, n)).collect()).collect();
    let b: Vec<f64> = a.iter().map(|ak| ak.iter().zip(&x0).map(|(p, q)| p.dot(q)).sum()).collect();
    let c: Vec<DMatrix<f64>> = (0..dims.len())
        .map(|bl| (0..m).fold(z0[bl].clone(), |acc, k| acc + &a[k][bl] * y0[k]))
        .collect();
    let mut p = SdpProblem::new(dims.clone(), 0, Sense::Minimize);
    p.objective = LinearForm { entries: entries(&c), free: vec![] };
    for k in 0..m {
        p.constraints.push(SdpConstraint { form: LinearForm { entries: entries(&a[k]), free: vec![] }, rhs: b[k] });
    }
    let s = solve(&p, &SolverOptions::default());
    if s.status != SdpStatus::Optimal {
        return Err(format!("seed {seed}: {:?}", s.status));
    }
    let x = &s.block_values;
    let z: Vec<DMatrix<f64>> = (0..dims.len())
        .map(|bl| (0..m).fold(c[bl].clone(), |acc, k| acc - &a[k][bl] * s.dual[k]))
        .collect();
    let rp = (0..m)
        .map(|k| (b[k] - a[k].iter().zip(x).map(|(p, q)| p.dot(q)).sum::<f64>()).abs())
        .fold(0.0, f64::max);
    let rd = z.iter().zip(&s.dual_slack).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max);
    let pobj: f64 = c.iter().zip(x).map(|(p, q)| p.dot(q)).sum();
    let dobj: f64 = b.iter().zip(&s.dual).map(|(p, q)| p * q).sum();
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    let eig = x.iter().chain(&z).map(|m| m.clone().symmetric_eigen().eigenvalues.min()).fold(f64::INFINITY, f64::min);
    if rp > 1e-6 || rd > 1e-6 || gap > 1e-7 || eig < -1e-7 {
        return Err(format!("seed {seed}: rp {rp:.1e} rd {rd:.1e} gap {gap:.1e} eig {eig:.1e}"));
    }
    Ok((rp.max(rd), gap))
}

fn criterion1() -> Line {
    let t = Instant::now();
    let u2 = Universe::new(&["x", "y"]).unwrap();
    let u3 = Universe::new(&["x", "y", "z"]).unwrap();
    let (sq, sq_res) = fixed_sos(&u2, "x^4 - 2*x^2*y^2 + y^4");
    let (mz, _) = fixed_sos(&u3, "x^4*y^2 + x^2*y^4 - 3*x^2*y^2*z^2 + z^6");
    let mut worst = (0.0f64, 0.0f64);
    let mut errors = Vec::new();
    for seed in 0..10 {
        match random_sdp(seed) {
            Ok((r, g)) => worst = (worst.0.max(r), worst.1.max(g)),
            Err(e) => errors.push(e),
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = sq.is_feasible() && sq_res <= 1e-6 && mz == SosStatus::Infeasible && errors.is_empty() && secs < 30.0;
    line(
        pass,
        format!(
            "(x^2-y^2)^2 {sq:?} (residual {sq_res:.1e}), Motzkin {mz:?}, 10 SDPs max KKT {:.1e} gap {:.1e}{}, {secs:.1} s",
            worst.0,
            worst.1,
            if errors.is_empty() { String::new() } else { format!(" failures {errors:?}") }
        ),
    )
}

// ---- 2: certificate audit ----

fn criterion2(audits: &[SynthAudit], reports: &[&ReportFile], psd_tol: f64) -> Line {
    let mut records: Vec<CertRecordFile> = audits.iter().map(|a| (&a.record()).into()).collect();
    for r in reports {
        if let Some(p) = &r.protocol {
            records.extend(p.certificates.iter().cloned());
        }
        if let Some(s) = &r.single {
            records.extend(s.certificates.iter().cloned());
        }
    }
    let coeff = records.iter().map(|r| r.coeff_residual).fold(0.0, f64::max);
    let eig = records.iter().filter_map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let unsampled = records.iter().filter(|r| r.sample_violation.is_none()).count();
    let sample = records.iter().filter_map(|r| r.sample_violation).fold(f64::NEG_INFINITY, f64::max);
    let pass = !records.is_empty() && coeff <= 1e-6 && eig >= -psd_tol && unsampled == 0 && sample <= 1e-5;
    line(
        pass,
        format!(
            "{} certificates: max coefficient residual {coeff:.1e}, min Gram eigenvalue {eig:.1e}, max sampled violation {sample:.1e} ({unsampled} unsampled)",
            records.len()
        ),
    )
}

// ---- 3: self-decay rates ----

fn criterion3(net: &Network, lfs: &[LyapunovFn], cfg: &RunConfig, exec: &RayonExecutor) -> Line {
    let t = Instant::now();
    let grid: Vec<f64> = (1..=20).map(|k| k as f64 * 0.05).collect();
    let opts = cfg.lyap_options();
    let tol = cfg.tolerances.tol;
    let subs = net.subsystems();
    let rates = exec.map(subs.len() * grid.len(), &|k| {
        let (i, g) = (k / grid.len(), grid[k % grid.len()]);
        self_decay_rate(&lfs[i], &subs[i].f, g, &opts)
    });
    let mut unknown = 0;
    let mut at_one = 0.0f64;
    let mut nonmono = Vec::new();
    let mut shapes = Vec::new();
    for (i, s) in subs.iter().enumerate() {
        let alpha: Vec<f64> = rates[i * grid.len()..(i + 1) * grid.len()]
            .iter()
            .map(|r| match r {
                Ok(DecayRate::Rate(a)) => *a,
                _ => {
                    unknown += 1;
                    f64::NAN
                }
            })
            .collect();
        at_one = at_one.max(*alpha.last().unwrap());
        let rises = alpha.windows(2).any(|w| w[1] > w[0] + tol);
        let falls = alpha.windows(2).any(|w| w[1] < w[0] - tol);
        if rises && falls {
            nonmono.push(s.id);
        }
        shapes.push(format!("{}:{:.3}->{:.3}", s.id, alpha[0], alpha[alpha.len() - 1]));
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = unknown == 0 && at_one <= 2.0 * tol && !nonmono.is_empty() && secs < 300.0;
    line(
        pass,
        format!(
            "max alpha(1) {at_one:.1e} (limit {:.1e}), non-monotonic subsystems {nonmono:?}, alpha(0.05)->alpha(1) [{}], {unknown} undecided, {secs:.1} s",
            2.0 * tol,
            shapes.join(" ")
        ),
    )
}

// ---- 4 and 5: sweep comparisons ----

fn max_all_negative(rows: &[vecstab::formats::tables::SweepRow], m: Method) -> Option<f64> {
    rows.iter()
        .filter(|r| r.method == m && r.max_row_sum.is_some_and(|s| s < 0.0))
        .map(|r| r.gamma)
        .reduce(f64::max)
}

fn criterion4(rows: &[vecstab::formats::tables::SweepRow], grid: &[f64]) -> Line {
    let cell = |g: f64, m: Method| rows.iter().find(|r| r.gamma == g && r.method == m).and_then(|r| r.max_row_sum);
    let mut compared = 0;
    let mut bad = Vec::new();
    let mut pairs = Vec::new();
    for &g in grid {
        if let (Some(t), Some(d)) = (cell(g, Method::Traditional), cell(g, Method::Direct)) {
            compared += 1;
            pairs.push(format!("{g}:{d:.3}/{t:.3}"));
            if d > t {
                bad.push(g);
            }
        }
    }
    let (gd, gt) = (max_all_negative(rows, Method::Direct), max_all_negative(rows, Method::Traditional));
    let pass = compared > 0 && bad.is_empty() && gd >= gt;
    line(
        pass,
        format!(
            "direct/traditional max row sum [{}]; worse at {bad:?}; all-negative up to direct {gd:?} vs traditional {gt:?}",
            pairs.join(" ")
        ),
    )
}

fn criterion5(rows: &[vecstab::formats::tables::SweepRow], ids: &[usize], parallel: &[(f64, Vec<usize>)], secs: f64) -> Line {
    let max_gamma = |m: Method, id: usize| {
        rows.iter().filter(|r| r.method == m && r.certified.contains(&id)).map(|r| r.gamma).reduce(f64::max)
    };
    let mut bad = Vec::new();
    let mut pairs = Vec::new();
    for &id in ids {
        let (mu, di) = (max_gamma(Method::Multiple, id), max_gamma(Method::Direct, id));
        pairs.push(format!("{id}:{}/{}", fmt_opt(mu), fmt_opt(di)));
        if mu < di {
            bad.push(id);
        }
    }
    let par: Vec<f64> = parallel.iter().filter(|(_, c)| !c.is_empty()).map(|(g, _)| *g).collect();
    let pass = bad.is_empty() && !par.is_empty() && secs < 1200.0;
    line(
        pass,
        format!(
            "max certified level multiple/direct [{}]; multiple behind at {bad:?}; parallel certifies at {par:?}; {secs:.0} s",
            pairs.join(" ")
        ),
    )
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("-".into(), |g| format!("{g}"))
}

// ---- 6: simulation ----

fn criterion6(
    rows: &[vecstab::formats::tables::ValidationRow],
    verdict_ok: bool,
    halving: f64,
    direct: Option<(usize, f64, bool)>,
) -> Line {
    let excess = rows.iter().map(|r| r.invariance_excess).fold(f64::NEG_INFINITY, f64::max);
    let applies = rows.iter().filter(|r| r.bound == "applies").count();
    let viol = rows.iter().filter_map(|r| r.bound_violation).fold(f64::NEG_INFINITY, f64::max);
    let exits = rows.iter().filter(|r| r.bound == "domain_exit").count();
    let fin = rows.iter().map(|r| r.final_max_v).fold(0.0, f64::max);
    let mut pass = verdict_ok
        && rows.len() == 100
        && rows.iter().all(|r| r.ok)
        && excess <= 1e-6
        && exits == 0
        && viol <= 1e-4
        && fin < 1e-3
        && halving <= 1e-5;
    let mut detail = format!(
        "{} trajectories, max envelope excess {excess:.1e}, bound applies on {applies} (max violation {viol:.1e}), max V(T) {fin:.1e}, step-halving {halving:.1e}",
        rows.len()
    );
    match direct {
        Some((n, v, caught)) => {
            pass &= v <= 1e-4 && caught;
            detail += &format!("; direct single CS on {n} trajectories violation {v:.1e}, doubled decay flagged: {caught}");
        }
        None => detail += "; direct single CS not certified at v0",
    }
    line(pass, detail)
}

fn direct_bound_probe(
    net: &Network,
    lfs: &[LyapunovFn],
    rep: &ReportFile,
    cfg: &RunConfig,
    exec: &RayonExecutor,
) -> Option<(usize, f64, bool)> {
    let spec = pipeline::bound_spec(rep).ok()??;
    let rows = pipeline::validate(net, lfs, rep, cfg, exec).ok()?;
    let viol = rows.iter().filter_map(|r| r.bound_violation).fold(f64::NEG_INFINITY, f64::max);
    let mut fast = spec.a.clone();
    for i in 0..fast.nrows() {
        fast[(i, i)] *= 2.0;
    }
    let wrong = BoundSpec { a: fast, domain: spec.domain.clone() };
    let env = rep.envelope()?;
    let starts = pipeline::validation_starts(net, lfs, &env, cfg).ok()?;
    let caught = starts.iter().any(|(_, x0)| {
        pipeline::check_trajectory(net, lfs, x0, &env, Some(&wrong), cfg)
            .is_ok_and(|(r, _)| r.bound_violation.is_some_and(|v| v > cfg.validation.bound_tol))
    });
    Some((rows.len(), viol, caught))
}

// ---- 7: sequences and replay ----

fn monotone(rep: &ReportFile) -> Result<(), String> {
    let p = rep.protocol.as_ref().ok_or("no protocol")?;
    let check = |seq: &[Vec<f64>], up: bool, what: &str| -> Result<(), String> {
        for w in seq.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                if (up && b < a) || (!up && b > a) {
                    return Err(format!("{what} {a} -> {b}"));
                }
            }
        }
        Ok(())
    };
    check(&p.sequence.envelope, true, "envelope")?;
    check(&p.sequence.levels, false, "contraction")
}

// ---- 8: Gershgorin and the power transform ----

/// `-A` is a nonsingular M-matrix iff all its leading principal minors are
/// positive; for Metzler `A` that is exactly Hurwitz stability.
fn metzler_hurwitz(a: &DMatrix<f64>) -> bool {
    let m = -a.clone();
    (1..=m.nrows()).all(|k| m.view((0, 0), (k, k)).into_owned().determinant() > 0.0)
}

fn criterion8() -> Line {
    let mut rng = Stream::new(8, 0);
    let (mut row_pass, mut exceptions, mut disagree) = (0, 0, 0);
    for _ in 0..100 {
        let m = 2 + below(&mut rng, 8);
        let mut a = DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else if rng.unit() < 0.5 { rng.uniform(0.0, 1.0) } else { 0.0 });
        for i in 0..m {
            let off: f64 = a.row(i).sum();
            // About half the rows pass the row test.
            a[(i, i)] = -off * rng.uniform(0.6, 1.6) - rng.uniform(0.0, 0.05);
        }
        assert!(is_metzler(&a));
        let v = gershgorin_verdict(&a, &vec![1.0; m]);
        let oracle = metzler_hurwitz(&a);
        if v.rows_hurwitz() {
            row_pass += 1;
            if !oracle || !v.eigen_hurwitz {
                exceptions += 1;
            }
        }
        if oracle != v.eigen_hurwitz {
            disagree += 1;
        }
    }
    let mut worst: f64 = 0.0;
    let mut broken = 0;
    for _ in 0..100 {
        let m = 2 + below(&mut rng, 6);
        let d = 1 + below(&mut rng, 4) as u32;
        let c = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rng.uniform(0.1, 5.0) });
        let mut at = DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { rng.uniform(0.0, 2.0) });
        for i in 0..m {
            let off: f64 = (0..m).filter(|&j| j != i).map(|j| at[(i, j)] * c[(i, j)]).sum();
            at[(i, i)] = -off - rng.uniform(1e-3, 2.0);
        }
        let Ok(a) = power_transform(&at, &c, d) else {
            broken += 1;
            continue;
        };
        for i in 0..m {
            let hyp: f64 = (0..m).map(|j| at[(i, j)] * if i == j { 1.0 } else { c[(i, j)] }).sum();
            let row: f64 = (0..m).map(|j| a[(i, j)] * if i == j { 1.0 } else { c[(i, j)].powi(d as i32) }).sum();
            let scale = (0..m).map(|j| (at[(i, j)] * if i == j { 1.0 } else { c[(i, j)] }).abs()).sum::<f64>();
            worst = worst.max((row - d as f64 * hyp).abs() / scale);
            if !(row < 0.0) || !is_metzler(&a) {
                broken += 1;
            }
        }
    }
    let pass = row_pass > 0 && exceptions == 0 && disagree == 0 && broken == 0 && worst <= 1e-12;
    line(
        pass,
        format!(
            "{row_pass}/100 Metzler matrices pass the row test, {exceptions} non-Hurwitz among them, {disagree} eigen/minor disagreements; power transform: {broken} broken rows, max identity error {worst:.1e}"
        ),
    )
}

fn main() {
    let mut lines: Vec<(u32, &str, Line, f64)> = Vec::new();
    let mut record = |id: u32, name: &'static str, secs: f64, l: Line| {
        println!("{} criterion {id} ({name}) [{secs:.2} s]: {}", if l.pass { "PASS" } else { "FAIL" }, l.detail);
        lines.push((id, name, l, secs));
    };

    let t = Instant::now();
    let l = criterion1();
    record(1, "SOS/SDP soundness", t.elapsed().as_secs_f64(), l);

    let tmp = TempDir::new().unwrap();
    let cfg = RunConfig { out: tmp.path().join("run"), ..RunConfig::default() };
    cfg.validate().unwrap();
    let exec = RayonExecutor::new(cfg.jobs).unwrap();

    // Full pipeline: generate, synth, multiple-sequential certify, validate.
    let t9 = Instant::now();
    pipeline::cmd_generate(&cfg).unwrap();
    let (rep, code) = pipeline::cmd_certify(&cfg).unwrap();
    let (vrows, vcode) = pipeline::cmd_validate(&cfg).unwrap();
    let pipeline_secs = t9.elapsed().as_secs_f64();
    println!("seed-1 pipeline: certify exit {code}, validate exit {vcode}, {pipeline_secs:.1} s");

    let net = pipeline::load_network(&cfg).unwrap();
    let (lfs, audits) = pipeline::synth_lfs(&net, &cfg, &exec).unwrap();
    let ids = net.ids();

    let par_cfg = RunConfig { mode: RunMode::MultipleParallel, ..cfg.clone() };
    let par = pipeline::certify(&net, &lfs, &par_cfg, &exec).unwrap();
    // A uniform start level at which every direct row sum is negative.
    let dir_cfg = RunConfig {
        mode: RunMode::SingleDirect,
        disturbance: Disturbance::Explicit { v0: vec![0.1; ids.len()] },
        ..cfg.clone()
    };
    let direct = pipeline::certify(&net, &lfs, &dir_cfg, &exec).unwrap();

    let t = Instant::now();
    let l = criterion2(&audits, &[&rep, &par, &direct], cfg.tolerances.sdp.psd_tol);
    record(2, "certificate audit", t.elapsed().as_secs_f64(), l);

    let t = Instant::now();
    let l = criterion3(&net, &lfs, &cfg, &exec);
    record(3, "self-decay rates", t.elapsed().as_secs_f64(), l);

    let t = Instant::now();
    let rows = pipeline::sweep(&net, &lfs, &cfg, &exec).unwrap();
    let l = criterion4(&rows, &cfg.gamma_grid);
    record(4, "direct beats traditional", t.elapsed().as_secs_f64(), l);
    let parallel: Vec<(f64, Vec<usize>)> = cfg
        .gamma_grid
        .iter()
        .map(|&g| {
            let steps = pipeline::first_step(&net, &lfs, g, Mode::Parallel, &cfg, &exec).unwrap();
            let ok = steps.iter().filter(|s| s.status == StepStatus::Certified && s.next < g).map(|s| s.id).collect();
            (g, ok)
        })
        .collect();
    let secs = t.elapsed().as_secs_f64();
    let l = criterion5(&rows, &ids, &parallel, secs);
    record(5, "multiple beats single", t.elapsed().as_secs_f64(), l);

    let t = Instant::now();
    let field = Field::network(&net);
    let env = rep.envelope().unwrap_or_default();
    let halving = pipeline::validation_starts(&net, &lfs, &env, &cfg)
        .map(|s| {
            s.iter()
                .take(3)
                .map(|(_, x0)| halving_check(&field, x0, cfg.validation.t_end, cfg.validation.dt, 1).unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max)
        })
        .unwrap_or(f64::INFINITY);
    let probe = direct_bound_probe(&net, &lfs, &direct, &dir_cfg, &exec);
    let l = criterion6(&vrows, code == pipeline::EXIT_STABLE && vcode == 0, halving, probe);
    record(6, "simulation", t.elapsed().as_secs_f64(), l);

    let t = Instant::now();
    let replay = RunConfig { out: tmp.path().join("replay"), ..cfg.clone() };
    pipeline::cmd_generate(&replay).unwrap();
    pipeline::cmd_certify(&replay).unwrap();
    let same = |f: &str| fs::read(cfg.out.join(f)).ok() == fs::read(replay.out.join(f)).ok();
    let identical = ["network.json", "lfs.json", "report.json", "rounds.csv"].iter().all(|f| same(f));
    let par_again = pipeline::certify(&net, &lfs, &par_cfg, &exec).unwrap();
    let par_same = vecstab::formats::to_json_string(&par) == vecstab::formats::to_json_string(&par_again);
    let mono = [("sequential", &rep), ("parallel", &par)].map(|(n, r)| (n, monotone(r)));
    let pass7 = identical && par_same && mono.iter().all(|m| m.1.is_ok());
    record(
        7,
        "monotone sequences and replay",
        t.elapsed().as_secs_f64(),
        line(pass7, format!("sequences {mono:?}; sequential replay byte-identical: {identical}; parallel replay identical: {par_same}")),
    );

    let t = Instant::now();
    let l = criterion8();
    record(8, "Gershgorin and power transform", t.elapsed().as_secs_f64(), l);

    record(
        9,
        "pipeline budget",
        pipeline_secs,
        line(pipeline_secs < 1800.0 && code == 0 && vcode == 0, format!("generate+synth+certify+validate took {pipeline_secs:.1} s")),
    );

    keep_outputs(&cfg.out);
    let failed: Vec<u32> = lines.iter().filter(|l| !l.2.pass).map(|l| l.0).collect();
    println!("{} of {} criteria passed; failed: {failed:?}", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

/// Copies the run outputs to `VECSTAB_ACCEPTANCE_OUT` when set.
fn keep_outputs(from: &Path) {
    let Some(to) = std::env::var_os("VECSTAB_ACCEPTANCE_OUT") else { return };
    let to = Path::new(&to);
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap().flatten() {
        if e.path().is_file() {
            fs::copy(e.path(), to.join(e.file_name())).unwrap();
        }
    }
}
