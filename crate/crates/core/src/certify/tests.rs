use super::local::{phase1_edge, Solved, Weight};
use super::*;
use crate::lyap::BoundConstants;
use crate::model::{Interaction, Subsystem};
use crate::poly::{Polynomial, Universe, VarId};
use crate::rng::Stream;
use alloc::sync::Arc;
use alloc::vec;
use proptest::prelude::*;

/// `m` scalar subsystems `x_k' = -x_k + sum_j c_kj x_j` with `V_k = x_k^2`.
fn scalar_net(m: usize, coupling: &[(usize, usize, f64)]) -> (Network, Vec<LyapunovFn>) {
    let names: Vec<alloc::string::String> = (1..=m).map(|k| alloc::format!("x{k}")).collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let u: Arc<Universe> = Universe::new(&refs).unwrap();
    let x = |k: usize| Polynomial::var(&u, VarId(k as u32 - 1));
    let subs = (1..=m)
        .map(|k| Subsystem { id: k, state_vars: vec![VarId(k as u32 - 1)], f: vec![x(k).scale(-1.0)] })
        .collect();
    let its = coupling
        .iter()
        .map(|&(to, from, c)| Interaction { to, from, g: vec![x(from).scale(c)] })
        .collect();
    let net = Network::new(&u, subs, its).unwrap();
    let lfs = (1..=m)
        .map(|k| LyapunovFn::from_polynomial(k, &[VarId(k as u32 - 1)], &x(k) * &x(k)).unwrap())
        .collect();
    (net, lfs)
}

fn opts() -> CertifyOptions {
    CertifyOptions::default()
}

#[test]
fn traditional_square_is_minus_one() {
    let (net, lfs) = scalar_net(1, &[]);
    let c = BoundConstants { id: 1, gamma: 0.5, eta1: 1.0, eta2: 1.0, eta3: 2.0, zeta: vec![] };
    let at = traditional_single_cs(&net, &lfs, &[c]).unwrap();
    assert_eq!(at.a[(0, 0)], -1.0);
    assert_eq!(at.provenance, Provenance::Traditional);
}

#[test]
fn traditional_decoupled_is_diagonal() {
    let (net, lfs) = scalar_net(2, &[]);
    let cs: Vec<_> = (1..=2)
        .map(|id| BoundConstants { id, gamma: 0.5, eta1: 1.0, eta2: 1.0, eta3: 2.0, zeta: vec![] })
        .collect();
    let at = traditional_single_cs(&net, &lfs, &cs).unwrap();
    assert_eq!(at.a[(0, 1)], 0.0);
    assert_eq!(at.a[(1, 0)], 0.0);
    assert!(at.is_metzler());
    let mut bad = cs.clone();
    bad[1].eta3 = 0.0;
    assert!(matches!(
        traditional_single_cs(&net, &lfs, &bad),
        Err(CertifyError::NonPositiveConstant { id: 2, .. })
    ));
}

#[test]
fn power_transform_examples() {
    let at = DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, 1.0, -3.0]);
    let ones = DMatrix::from_element(2, 2, 1.0);
    assert_eq!(power_transform(&at, &ones, 1).unwrap(), at);
    let a = power_transform(&at, &ones, 2).unwrap();
    assert_eq!(a, DMatrix::from_row_slice(2, 2, &[-5.0, 1.0, 1.0, -5.0]));
    assert!(a[(0, 0)] + a[(0, 1)] < 0.0);
    let hot = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -3.0]);
    assert_eq!(power_transform(&hot, &ones, 2), Err(CertifyError::HypothesisViolated(0)));
}

#[test]
fn power_transform_level_ratios_give_invariance() {
    // With c_ij = gamma_j / gamma_i, the transformed row condition scaled by
    // gamma_i^d is the invariance condition at the levels gamma^d.
    let mut rng = Stream::new(7, 0);
    for _ in 0..20 {
        let g: Vec<f64> = (0..3).map(|_| rng.uniform(0.2, 1.0)).collect();
        let mut at = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { rng.uniform(0.0, 0.5) });
        for i in 0..3 {
            let off: f64 = (0..3).filter(|&j| j != i).map(|j| at[(i, j)] * g[j] / g[i]).sum();
            at[(i, i)] = -off - rng.uniform(0.1, 1.0);
        }
        let c = DMatrix::from_fn(3, 3, |i, j| g[j] / g[i]);
        for d in 1..=4u32 {
            let a = power_transform(&at, &c, d).unwrap();
            for i in 0..3 {
                let hyp: f64 = (0..3).map(|j| at[(i, j)] * if i == j { 1.0 } else { c[(i, j)] }).sum();
                let row: f64 =
                    (0..3).map(|j| a[(i, j)] * if i == j { 1.0 } else { libm::pow(c[(i, j)], d as f64) }).sum();
                assert!((row - d as f64 * hyp).abs() <= 1e-12);
                let inv: f64 = (0..3).map(|j| a[(i, j)] * libm::pow(g[j], d as f64)).sum();
                assert!((inv - libm::pow(g[i], d as f64) * row).abs() <= 1e-12);
                assert!(inv < 0.0);
            }
        }
    }
}

#[test]
fn gershgorin_examples() {
    let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
    let v = gershgorin_verdict(&a, &[1.0, 1.0]);
    assert!(v.rows_hurwitz() && v.invariance_row.iter().all(|&b| b) && v.eigen_hurwitz);
    let b = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -1.0]);
    let v = gershgorin_verdict(&b, &[1.0, 1.0]);
    assert_eq!(v.hurwitz_row, vec![false, true]);
    assert!(v.eigen_hurwitz);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gershgorin_rows_imply_eigen_hurwitz(
        n in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = Stream::new(seed, 0);
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { rng.uniform(-4.0, 0.5) } else { rng.uniform(0.0, 1.0) });
        prop_assert!(is_metzler(&a));
        let v = gershgorin_verdict(&a, &vec![1.0; n]);
        if v.rows_hurwitz() {
            prop_assert!(v.eigen_hurwitz);
        }
    }

    #[test]
    fn power_transform_keeps_row_condition(seed in any::<u64>(), d in 1u32..=4) {
        let mut rng = Stream::new(seed, 1);
        let n = 3;
        let c = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rng.uniform(0.2, 3.0) });
        let mut at = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.uniform(0.0, 1.0) });
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| at[(i, j)] * c[(i, j)]).sum();
            at[(i, i)] = -off - rng.uniform(1e-3, 1.0);
        }
        let a = power_transform(&at, &c, d).unwrap();
        prop_assert!(is_metzler(&a));
        for i in 0..n {
            let row: f64 = (0..n)
                .map(|j| a[(i, j)] * if i == j { 1.0 } else { libm::pow(c[(i, j)], d as f64) })
                .sum();
            prop_assert!(row < 0.0);
        }
    }
}

#[test]
fn direct_decoupled_square() {
    let (net, lfs) = scalar_net(1, &[]);
    let ctx = Ctx::new(&net, &lfs).unwrap();
    let o = opts();
    let (out, recs) = direct_single_cs(&ctx, &[0.5], DirectMode::MinimizeRowSum, &o).unwrap();
    let DirectOutcome::Matrix(a) = out else { panic!("{out:?}") };
    assert!((a.a[(0, 0)] + 2.0).abs() <= 1e-5, "{}", a.a);
    assert!(recs.iter().all(|r| r.passes(1e-6, 1e-7, 1e-5)));
    let (out, _) = direct_single_cs(&ctx, &[0.5], DirectMode::Feasibility, &o).unwrap();
    let DirectOutcome::Matrix(a) = out else { panic!("{out:?}") };
    assert!(a.a[(0, 0)] >= -2.0 - 1e-5 && a.a[(0, 0)] <= -o.margin + 1e-9);
    assert!(direct_single_cs(&ctx, &[0.0], DirectMode::Feasibility, &o).is_err());
}

#[test]
fn direct_rejects_strong_coupling() {
    // x1' = -x1 + 2 x2 drives V1 up faster than it decays: no negative row sum.
    let (net, lfs) = scalar_net(2, &[(1, 2, 2.0), (2, 1, 2.0)]);
    let ctx = Ctx::new(&net, &lfs).unwrap();
    let (out, _) = direct_single_cs(&ctx, &[0.5, 0.5], DirectMode::Feasibility, &opts()).unwrap();
    assert!(matches!(out, DirectOutcome::Infeasible { id: 1 }), "{out:?}");
    let (out, _) = direct_single_cs(&ctx, &[0.5, 0.5], DirectMode::MinimizeRowSum, &opts()).unwrap();
    let DirectOutcome::Matrix(a) = out else { panic!("{out:?}") };
    assert!(a.is_metzler());
    assert!(a.max_row_sum() > 0.0);
}

#[test]
fn weak_coupling_direct_matrix() {
    let (net, lfs) = scalar_net(2, &[(1, 2, 0.3), (2, 1, 0.3)]);
    let ctx = Ctx::new(&net, &lfs).unwrap();
    let (out, recs) = direct_single_cs(&ctx, &[0.5, 0.5], DirectMode::MinimizeRowSum, &opts()).unwrap();
    let DirectOutcome::Matrix(a) = out else { panic!("{out:?}") };
    // -V1' + a11 V1 + a12 V2 = (2 + a11) x1^2 - 0.6 x1 x2 + a12 x2^2 is PSD iff
    // (2 + a11) a12 >= 0.09; the row sum is smallest at a12 = 0.3.
    assert!((a.row_sums()[0] - (-2.0 + 0.6)).abs() <= 1e-4, "{}", a.a);
    assert!(gershgorin_verdict(&a.a, &[0.5, 0.5]).eigen_hurwitz);
    assert!(recs.iter().all(|r| r.passes(1e-6, 1e-7, 1e-5)), "{recs:?}");
}

#[test]
fn decoupled_phases() {
    let (net, lfs) = scalar_net(2, &[]);
    let ctx = Ctx::new(&net, &lfs).unwrap();
    let o = opts();
    for rep in [phase1_envelope(&ctx, &[0.3, 0.6], &o).unwrap(), phase1_parallel(&ctx, &[0.3, 0.6], &o).unwrap()] {
        assert_eq!(rep.envelope(), Some(&[0.3, 0.6][..]));
    }
    let seq = phase2_diagonal(&ctx, &[0.5, 0.5], &o).unwrap();
    assert_eq!(seq.verdict, Verdict::ExponentiallyStable);
    assert_eq!(seq.sequence.levels[1], vec![0.0, 0.0]);
    for r in &seq.sequence.rates[0] {
        assert!((r.unwrap() + 2.0).abs() <= 1e-2, "{r:?}");
    }
    let par = phase2_parallel(&ctx, &[0.5, 0.5], &o).unwrap();
    assert_eq!(par.sequence.levels, seq.sequence.levels);
    assert_eq!(par.verdict, Verdict::ExponentiallyStable);
}

#[test]
fn uncoupled_edge_needs_no_budget() {
    let (net, lfs) = scalar_net(2, &[]);
    let ctx = Ctx::new(&net, &lfs).unwrap();
    let e = phase1_edge(&ctx, 1, 2, 0.5, 0.5, Weight::Minimize).unwrap();
    let Solved::Feasible { sol, .. } = e.local.solve(&opts()).unwrap() else { panic!() };
    assert!(e.weight(&sol) <= 1e-6);
}

#[test]
fn lemma2_checker() {
    let (net, lfs) = scalar_net(2, &[(1, 2, 0.3), (2, 1, 0.3)]);
    let ctx = Ctx::new(&net, &lfs).unwrap();
    let o = opts();
    let rep = phase2_diagonal(&ctx, &[0.5, 0.5], &o).unwrap();
    let levels = &rep.sequence.levels;
    // Diagonal steps that actually moved.
    let steps: Vec<usize> = (0..rep.sequence.rates.len())
        .filter(|&k| rep.sequence.rates[k].iter().all(|r| r.is_some()) && levels[k + 1].iter().all(|&g| g > 0.0))
        .collect();
    assert!(!steps.is_empty(), "{rep:?}");
    for &k in steps.iter().take(2) {
        let a = DMatrix::from_fn(2, 2, |i, j| if i == j { rep.sequence.rates[k][i].unwrap() } else { 0.0 });
        let gs = vec![levels[k].clone(), levels[k + 1].clone()];
        let fails = check_lemma2_certificate(&ctx, &[a.clone()], &gs, &o).unwrap();
        assert!(fails.is_empty(), "step {k}: {fails:?}");
        let mut pos = a.clone();
        pos[(0, 1)] = 5.0;
        let fails = check_lemma2_certificate(&ctx, &[pos], &gs, &o).unwrap();
        assert!(fails.iter().any(|f| f.id == 1 && f.reason.contains("row sum")));
        let mut hot = a.clone();
        hot[(1, 1)] += 10.0;
        let fails = check_lemma2_certificate(&ctx, &[hot], &gs, &o).unwrap();
        assert!(fails.iter().any(|f| f.id == 2), "{fails:?}");
    }
}

#[test]
fn protocol_on_weak_coupling() {
    let (net, lfs) = scalar_net(3, &[(1, 2, 0.3), (2, 1, 0.3), (2, 3, 0.2), (3, 2, 0.1)]);
    let ctx = Ctx::new(&net, &lfs).unwrap();
    let o = opts();
    for mode in [Mode::Sequential, Mode::Parallel] {
        let rep = run_protocol(&ctx, &[0.2, 0.0, 0.4], mode, &o, &SequentialExecutor).unwrap();
        assert_eq!(rep.locality_violations, 0);
        let env = &rep.sequence.envelope;
        for w in env.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(a, b)| a <= b), "{env:?}");
        }
        for w in rep.sequence.levels.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(a, b)| b <= a), "{:?}", rep.sequence.levels);
        }
        assert!(rep.sequence.levels.iter().flatten().all(|g| (0.0..=1.0).contains(g)));
        // One message per (sender, round).
        for (k, m) in rep.messages.iter().enumerate() {
            assert!(!rep.messages[..k].iter().any(|p| p.sender == m.sender && p.round == m.round));
        }
        let again = run_protocol_with(&ctx, &[0.2, 0.0, 0.4], mode, &o, &SequentialExecutor, Some(&rep.messages)).unwrap();
        assert_eq!(again.sequence, rep.sequence);
        assert_eq!(again.verdict, rep.verdict);
        assert!(rep.certificates.iter().all(|r| r.passes(1e-6, 1e-7, 1e-5)));
        if mode == Mode::Sequential {
            assert_eq!(rep.verdict, Verdict::ExponentiallyStable, "{rep:?}");
            assert!(!rep.sequence.terminal.is_empty());
        } else {
            assert!(!matches!(rep.verdict, Verdict::Inconclusive(_)), "{:?}", rep.verdict);
            assert!(rep.sequence.weights.iter().flatten().flatten().all(|&(_, w)| w >= 0.0));
        }
    }
}

#[test]
fn missing_message_is_an_error() {
    let (net, lfs) = scalar_net(2, &[(1, 2, 0.3), (2, 1, 0.3)]);
    let ctx = Ctx::new(&net, &lfs).unwrap();
    let err = run_protocol_with(&ctx, &[0.2, 0.2], Mode::Sequential, &opts(), &SequentialExecutor, Some(&[]));
    assert!(matches!(err, Err(CertifyError::MissingMessage { .. })));
    assert!(matches!(
        run_protocol(&ctx, &[0.2, 1.0], Mode::Sequential, &opts(), &SequentialExecutor),
        Err(CertifyError::BadLevel { id: 2, .. })
    ));
}

#[test]
fn strong_coupling_escapes_in_phase1() {
    let (net, lfs) = scalar_net(2, &[(1, 2, 2.0), (2, 1, 2.0)]);
    let ctx = Ctx::new(&net, &lfs).unwrap();
    let rep = run_protocol(&ctx, &[0.5, 0.5], Mode::Sequential, &opts(), &SequentialExecutor).unwrap();
    assert!(matches!(rep.phase1, Some(Phase1Outcome::Escaped { .. })), "{:?}", rep.phase1);
    assert!(matches!(rep.verdict, Verdict::Inconclusive(_)));
}
