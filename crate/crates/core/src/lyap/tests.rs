use super::*;
use crate::model::{default_topology, generate_vdp_network, Network};
use crate::poly::Universe;
use crate::sos::check_certificate;
use alloc::sync::Arc;
use alloc::vec;

fn linear_1d() -> (Arc<Universe>, Subsystem) {
    let u = Universe::new(&["x"]).unwrap();
    let f = vec![Polynomial::var(&u, VarId(0)).scale(-1.0)];
    (u, Subsystem { id: 1, state_vars: vec![VarId(0)], f })
}

fn x_squared(u: &Arc<Universe>) -> LyapunovFn {
    let x = Polynomial::var(u, VarId(0));
    LyapunovFn::from_polynomial(1, &[VarId(0)], &x * &x).unwrap()
}

fn seed1() -> Network {
    generate_vdp_network(1, &default_topology()).unwrap().0
}

#[test]
fn linear_system_is_capped() {
    let (u, sub) = linear_1d();
    let q = synth_quadratic_lf(&sub, &LyapOptions::default()).unwrap();
    assert!((q.p[(0, 0)] - 0.5).abs() <= 1e-12);
    assert!(q.lf.scaling.capped);
    assert_eq!(q.lf.scaling.gamma_max, 1e3);
    let x = Polynomial::var(&u, VarId(0));
    let want = (&x * &x).scale(0.5 / 1e3);
    assert!(q.lf.v.max_coefficient_diff(&want).unwrap() <= 1e-15);
    assert_eq!(q.lf.d, 2);
    assert!(check_certificate(&q.certificate).unwrap().is_valid(1e-6, 1e-7));
}

#[test]
fn unstable_linearization_is_rejected() {
    let (u, mut sub) = linear_1d();
    sub.f[0] = Polynomial::var(&u, VarId(0)).scale(0.5);
    assert!(matches!(
        synth_quadratic_lf(&sub, &LyapOptions::default()),
        Err(LyapError::NotHurwitz { id: 1, .. })
    ));
    // A positive damping coefficient in a generated oscillator.
    let net = seed1();
    let mut s = net.subsystems()[0].clone();
    let (x1, x2) = (Polynomial::var(net.universe(), s.state_vars[0]), Polynomial::var(net.universe(), s.state_vars[1]));
    s.f[1] = &(&x2 * 1.5) - &(&x1 * 0.9);
    assert!(matches!(
        synth_quadratic_lf(&s, &LyapOptions::default()),
        Err(LyapError::NotHurwitz { .. })
    ));
}

#[test]
fn exact_decay_of_a_square() {
    let (u, sub) = linear_1d();
    let lf = x_squared(&u);
    let opts = LyapOptions::default();
    for g in [0.1, 0.5, 1.0] {
        let a = self_decay_rate(&lf, &sub.f, g, &opts).unwrap().value().unwrap();
        assert!((a - 2.0).abs() <= opts.tol, "gamma {g}: {a}");
    }
    assert!(verify_decay(&lf, &sub.f, 0.5, 2.0 - opts.tol, &opts).unwrap().is_some());
    assert!(verify_decay(&lf, &sub.f, 0.5, 2.5, &opts).unwrap().is_none());
    assert!(self_decay_rate(&lf, &sub.f, 0.0, &opts).is_err());
}

#[test]
fn constants_of_a_square() {
    let (u, sub) = linear_1d();
    let lf = x_squared(&u);
    let c = bound_constants(&lf, &sub.f, &[], 0.5, &LyapOptions::default()).unwrap();
    assert!((c.eta1 - 1.0).abs() <= 1e-6, "{c:?}");
    assert!((c.eta2 - 1.0).abs() <= 1e-6, "{c:?}");
    assert!((c.eta3 - 2.0).abs() <= 1e-6, "{c:?}");
}

#[test]
fn zero_coupling_has_zero_zeta() {
    let u = Universe::new(&["a", "b"]).unwrap();
    let a = Polynomial::var(&u, VarId(0));
    let b = Polynomial::var(&u, VarId(1));
    let la = LyapunovFn::from_polynomial(1, &[VarId(0)], &a * &a).unwrap();
    let lb = LyapunovFn::from_polynomial(2, &[VarId(1)], &b * &b).unwrap();
    let zero = [Polynomial::zero(&u)];
    let f = [a.scale(-1.0)];
    let opts = LyapOptions::default();
    let c = bound_constants(&la, &f, &[Coupling { from: 2, lf: &lb, g: &zero }], 0.5, &opts).unwrap();
    assert_eq!(c.zeta(2), 0.0);
    // g = 0.3 b: |2a * 0.3 b| = 0.6 |a||b|.
    let g = [b.scale(0.3)];
    let c = bound_constants(&la, &f, &[Coupling { from: 2, lf: &lb, g: &g }], 0.5, &opts).unwrap();
    assert!((c.zeta(2) - 0.6).abs() <= 1e-4, "{c:?}");
}

/// Maximum of `p` over `{V <= 1}` by sampling, in local coordinates.
fn sample_max(lf: &LyapunovFn, level: f64, p: &Polynomial, n: usize, seed: u64) -> f64 {
    let mut rng = Stream::new(seed, 99);
    let mut x = vec![0.0; lf.v.universe().len()];
    let mut worst = f64::NEG_INFINITY;
    for pt in sample_sublevel(lf, level, n, &mut rng) {
        embed(&mut x, &lf.vars, &pt);
        worst = worst.max(p.eval(&x));
    }
    worst
}

#[test]
fn generated_subsystem_lf_reverifies() {
    let net = seed1();
    let opts = LyapOptions::default();
    let sub = &net.subsystems()[0];
    let q = synth_quadratic_lf(sub, &opts).unwrap();
    let chk = check_certificate(&q.certificate).unwrap();
    assert!(chk.is_valid(1e-6, 1e-7), "{chk:?}");
    assert!(!q.lf.scaling.capped);
    assert!(q.lf.scaling.gamma_max > 1e-4);
    // V' < 0 on the unit level set and V > 0 away from 0, by sampling.
    let vdot = q.lf.lie_derivative(&sub.f).unwrap();
    assert!(sample_max(&q.lf, 1.0, &vdot, 10_000, 1) <= 0.0);
    let mut rng = Stream::new(2, 0);
    let mut x = vec![0.0; net.universe().len()];
    for pt in sample_sublevel(&q.lf, 1.0, 10_000, &mut rng) {
        embed(&mut x, &q.lf.vars, &pt);
        if pt.iter().any(|c| *c != 0.0) {
            assert!(q.lf.v.eval(&x) > 0.0);
        }
    }
    assert_eq!(q.lf.v.constant_term(), 0.0);
    // Just beyond gamma_max the scaled function must stop decreasing
    // somewhere, or the bisection would have gone further (up to SOS slack).
    let p_beyond = &(&vdot * 1.0) + &Polynomial::zero(net.universe());
    assert!(sample_max(&q.lf, 1.5, &p_beyond, 20_000, 3) > -1e-3);
}

#[test]
fn seed1_constants_are_positive_and_hold_on_samples() {
    let net = seed1();
    let opts = LyapOptions::default();
    let lfs: Vec<LyapunovFn> = net
        .subsystems()
        .iter()
        .map(|s| synth_quadratic_lf(s, &opts).unwrap().lf)
        .collect();
    let gamma = 0.3;
    let i = 0;
    let sub = &net.subsystems()[i];
    let couplings: Vec<Coupling<'_>> = net
        .incoming(sub.id)
        .map(|it| Coupling {
            from: it.from,
            lf: &lfs[net.index_of(it.from).unwrap()],
            g: &it.g,
        })
        .collect();
    let c = bound_constants(&lfs[i], &sub.f, &couplings, gamma, &opts).unwrap();
    assert!(c.eta1 > 0.0 && c.eta3 > 0.0 && c.eta1 <= c.eta2, "{c:?}");
    assert_eq!(c.zeta.len(), couplings.len());
    assert!(c.zeta.iter().all(|z| z.1 > 0.0));

    let lf = &lfs[i];
    let xd = lf.norm_pow();
    let vdot = lf.lie_derivative(&sub.f).unwrap();
    let mut rng = Stream::new(11, 0);
    let mut x = vec![0.0; net.universe().len()];
    for pt in sample_sublevel(lf, gamma, 10_000, &mut rng) {
        embed(&mut x, &lf.vars, &pt);
        let (v, n, vd) = (lf.v.eval(&x), xd.eval(&x), vdot.eval(&x));
        assert!(v >= c.eta1 * n - 1e-9);
        assert!(v <= c.eta2 * n + 1e-9);
        assert!(vd <= -c.eta3 * n + 1e-9);
        for cp in &couplings {
            let dir = random_direction(cp.lf.vars.len(), &mut rng);
            let r = radial_level(&cp.lf.v, &cp.lf.vars, &dir, gamma) * rng.unit();
            let pj: Vec<f64> = dir.iter().map(|d| d * r).collect();
            embed(&mut x, &cp.lf.vars, &pj);
            let flow: f64 = lf.v.gradient(&lf.vars).iter().zip(cp.g).map(|(dv, g)| dv.eval(&x) * g.eval(&x)).sum();
            let xi = libm::sqrt(Polynomial::norm_squared(net.universe(), &lf.vars).eval(&x));
            let xj = libm::sqrt(Polynomial::norm_squared(net.universe(), &cp.lf.vars).eval(&x));
            assert!(flow.abs() <= cp_zeta(&c, cp.from) * xi * xj + 1e-9);
            embed(&mut x, &cp.lf.vars, &vec![0.0; pj.len()]);
        }
    }
}

fn cp_zeta(c: &BoundConstants, j: usize) -> f64 {
    c.zeta(j)
}

#[test]
fn scaling_keeps_decay_rate() {
    // alpha for s V at level s gamma equals alpha for V at gamma.
    let net = seed1();
    let opts = LyapOptions::default();
    let sub = &net.subsystems()[2];
    let lf = synth_quadratic_lf(sub, &opts).unwrap().lf;
    let mut scaled = lf.clone();
    scaled.v = lf.v.scale(0.5);
    let a = self_decay_rate(&lf, &sub.f, 0.6, &opts).unwrap().value().unwrap();
    let b = self_decay_rate(&scaled, &sub.f, 0.3, &opts).unwrap().value().unwrap();
    assert!((a - b).abs() <= opts.tol, "{a} vs {b}");
    let cert = verify_decay(&lf, &sub.f, 0.6, (a - opts.tol).max(0.0), &opts).unwrap().unwrap();
    assert!(check_certificate(&cert).unwrap().coeff_residual <= 1e-6);
}

#[test]
fn radial_level_matches_closed_form() {
    let u = Universe::new(&["a", "b"]).unwrap();
    let v = Polynomial::parse(&u, "2*a^2 + a*b + 3*b^2").unwrap();
    let mut rng = Stream::new(5, 0);
    for _ in 0..100 {
        let d = random_direction(2, &mut rng);
        let q = 2.0 * d[0] * d[0] + d[0] * d[1] + 3.0 * d[1] * d[1];
        let want = libm::sqrt(0.7 / q);
        let got = radial_level(&v, &[VarId(0), VarId(1)], &d, 0.7);
        assert!((got - want).abs() <= 1e-9 * want.max(1.0));
    }
}


#[test]
fn decay_rate_matches_boundary_sampling() {
    // Oracle: min of -V'/gamma over 4000 points of the 2-D level curve. It
    // upper-bounds the true rate, so the SOS value may not exceed it.
    let net = seed1();
    let opts = LyapOptions::default();
    let sub = &net.subsystems()[2];
    let lf = synth_quadratic_lf(sub, &opts).unwrap().lf;
    let vdot = lf.lie_derivative(&sub.f).unwrap();
    let mut x = vec![0.0; net.universe().len()];
    for g in [0.05, 0.4, 0.75, 1.0] {
        let mut oracle = f64::INFINITY;
        for t in 0..4000 {
            let th = t as f64 * 2.0 * core::f64::consts::PI / 4000.0;
            let d = [libm::cos(th), libm::sin(th)];
            let r = radial_level(&lf.v, &lf.vars, &d, g);
            embed(&mut x, &lf.vars, &[r * d[0], r * d[1]]);
            oracle = oracle.min(-vdot.eval(&x) / g);
        }
        let a = self_decay_rate(&lf, &sub.f, g, &opts).unwrap().value().unwrap();
        assert!(a <= oracle.max(0.0) + 1e-6, "gamma {g}: {a} > {oracle}");
        assert!(a >= oracle.max(0.0) - opts.tol, "gamma {g}: {a} << {oracle}");
    }
}
