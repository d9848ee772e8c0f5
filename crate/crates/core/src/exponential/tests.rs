use super::*;
use crate::asymptotics::make_schedule;
use crate::genfunc::support_estimate;
use crate::kernel_ops::discrete_l2_norm;

fn unit() -> AxisBox {
    AxisBox::interval(-1.0, 1.0).unwrap()
}

fn rule() -> Rule {
    Rule::new(8, 8)
}

fn short_policy() -> Policy {
    Policy { schedule: make_schedule(4, 10, 2.0).unwrap(), ..Policy::default() }
}

fn settings() -> ExpSettings {
    ExpSettings { policy: short_policy(), ..ExpSettings::default() }
}

/// `0.8 (1 - x^2) + 0.3 x`; polynomial, so Gauss rules integrate `phi^2` exactly.
fn phi() -> Func1 {
    Func1::Poly { coeffs: vec![0.8, 0.3, -0.8] }
}

/// `int_{-1}^{1} phi^2`.
fn lambda() -> f64 {
    // 0.64 (1 - x^2)^2 + 0.09 x^2 integrated; odd terms vanish
    0.64 * 16.0 / 15.0 + 0.09 * 2.0 / 3.0
}

fn rank1() -> KernelNet {
    KernelNet::sigma(SmoothFn::tensor(vec![phi(), phi()]), &unit(), &unit(), rule()).unwrap()
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn exp_tail_bounds_the_remainder() {
    for &x in &[0.1, 1.0, 5.0] {
        for n in [3usize, 10, 20] {
            if x >= (n + 2) as f64 {
                continue;
            }
            let exact: f64 = (n + 1..200).map(|k| (1..=k).fold(1.0, |p, i| p * x / i as f64)).sum();
            let b = exp_tail(x, n);
            assert!(b >= exact && b <= 2.0 * exact, "x={x} n={n}: {b} vs {exact}");
        }
    }
    assert_eq!(exp_tail(0.0, 1), 0.0);
    assert!(exp_tail(10.0, 5).is_infinite());
}

#[test]
fn zero_kernel_has_zero_exponent() {
    let z = KernelNet::zero(&unit(), &unit(), rule()).unwrap();
    let r = exp_with(&z, c(1.0, 0.0), &settings()).unwrap();
    assert!(r.terms_used.iter().all(|&n| n == 1));
    assert_eq!(r.s.eval(0.1, &[0.2], &[0.3]), c(0.0, 0.0));
    let f = RepNet::from_smooth(SmoothFn::of(Func1::sin()), unit()).unwrap();
    assert_eq!(r.apply(&f).unwrap().eval(0.1, &[0.4]), f.eval(0.1, &[0.4]));
}

#[test]
fn rank_one_closed_form() {
    let lam = lambda();
    for t in [c(1.0, 0.0), c(-0.7, 0.0), c(0.0, 2.0), c(0.3, -0.4)] {
        let r = exp_with(&rank1(), t, &settings()).unwrap();
        let factor = ((t * lam).exp() - 1.0) / lam;
        for &e in &[0.0625, 2f64.powi(-10)] {
            for &(x, y) in &[(0.1, 0.2), (-0.9, 0.5), (0.6, -0.3)] {
                let want = factor * phi().eval(x) * phi().eval(y);
                let got = r.s.eval(e, &[x], &[y]);
                assert!((got - want).norm() <= 1e-12 * want.norm(), "t={t}: {got} vs {want}");
            }
        }
        let f = RepNet::from_smooth(SmoothFn::of(phi()), unit()).unwrap();
        let uf = r.apply(&f).unwrap();
        let want = (t * lam).exp() * phi().eval(0.25);
        assert!((uf.eval(0.1, &[0.25]) - want).norm() < 1e-12 * want.norm());
    }
}

#[test]
fn series_matches_oracles() {
    let h = random::smooth_kernel(&mut random::rng(3), &unit(), &unit(), 3, rule()).unwrap();
    for t in [c(1.0, 0.0), c(0.0, -1.5), c(2.0, 0.5)] {
        let r = exp_with(&h, t, &settings()).unwrap();
        let o = oracle_agreement(&r).unwrap();
        assert!(o.passed(), "{o:?}");
        assert!(exp_matrix_identity(&r).unwrap().passed());
        let (ok, _) = oracle_phi1(&h, t, ExpMode::CompactSup).unwrap();
        for &(x, y) in &[(0.13, -0.4), (0.95, 0.2)] {
            let (a, b) = (r.s.eval(0.125, &[x], &[y]), ok.eval(0.125, &[x], &[y]));
            assert!((a - b).norm() <= 1e-10 * b.norm().max(1e-12), "{a} vs {b}");
        }
    }
    let (zero, _) = oracle_phi1(&h, c(0.0, 0.0), ExpMode::CompactSup).unwrap();
    assert_eq!(zero.eval(0.1, &[0.3], &[0.2]), c(0.0, 0.0));
}

#[test]
fn semigroup_identities() {
    let h = random::smooth_kernel(&mut random::rng(5), &unit(), &unit(), 2, rule()).unwrap();
    for (a, b) in [(1.0, 1.0), (1.0, -1.0), (0.5, 0.25), (0.0, 0.0)] {
        let r = verify_semigroup(&h, c(a, 0.0), c(b, 0.0), &settings()).unwrap();
        assert!(r.passed(), "{a},{b}: {r:?}");
    }
    let r = verify_semigroup(&rank1(), c(0.3, 1.0), c(-0.2, 0.5), &settings()).unwrap();
    assert!(r.passed(), "{r:?}");
}

#[test]
fn derivative_is_second_order() {
    let r = verify_derivative(&rank1(), 0.7, &DEFAULT_STEPS, &settings()).unwrap();
    let o = r.observed_order.unwrap();
    assert!((o - 2.0).abs() <= 0.2, "{r:?}");
    let z = KernelNet::zero(&unit(), &unit(), rule()).unwrap();
    let r = verify_derivative(&z, 0.7, &DEFAULT_STEPS, &settings()).unwrap();
    assert!(r.observed_order.is_none() && r.verdict == Verdict::Pass);
    assert!(verify_derivative(&z, 0.0, &[], &settings()).is_err());
}

#[test]
fn kernel_commutes_with_its_exponential() {
    let h = random::smooth_kernel(&mut random::rng(11), &unit(), &unit(), 3, rule()).unwrap();
    let r = verify_commutes(&h, c(1.0, 0.0), &settings()).unwrap();
    assert!(r.passed(), "{r:?}");
}

#[test]
fn commuting_sums() {
    let h = random::smooth_kernel(&mut random::rng(2), &unit(), &unit(), 2, rule()).unwrap();
    let k = h.scaled_by(c(2.0, 0.0));
    let r = verify_commuting_sum(&h, &k, &settings()).unwrap();
    assert!(r.passed(), "{r:?}");

    let p = Func1::Poly { coeffs: vec![1.0, 0.5] };
    let q = Func1::Poly { coeffs: vec![0.2, 0.0, 1.0] };
    let dq = Func1::Poly { coeffs: vec![0.0, 2.0] };
    let a = KernelNet::sigma(SmoothFn::tensor(vec![p.clone(), q]), &unit(), &unit(), rule()).unwrap();
    let b = KernelNet::sigma(SmoothFn::tensor(vec![dq, p]), &unit(), &unit(), rule()).unwrap();
    let r = verify_commuting_sum(&a, &b, &settings()).unwrap();
    assert_eq!(r.verdict, Verdict::HypothesisViolated);
    assert!(r.max_residual > 1e-6, "{r:?}");
}

#[test]
fn symmetry_examples() {
    let p = short_policy();
    assert_eq!(is_symmetric(&rank1(), &p).unwrap().max_residual, 0.0);
    let (f, g) = (phi(), Func1::cos());
    let anti = SmoothFn::sum_of(2, vec![(c(0.0, 1.0), vec![f.clone(), g.clone()]), (c(0.0, -1.0), vec![g.clone(), f.clone()])]);
    let h = KernelNet::sigma(anti, &unit(), &unit(), rule()).unwrap();
    assert!(is_symmetric(&h, &p).unwrap().passed());
    let h = KernelNet::sigma(SmoothFn::tensor(vec![f, g]), &unit(), &unit(), rule()).unwrap();
    assert!(is_symmetric(&h, &p).unwrap().max_residual > 1e-3);
}

#[test]
fn unitary_group() {
    let s = settings();
    let h = rank1();
    let f = RepNet::from_smooth(SmoothFn::of(phi()), unit()).unwrap();
    let n = scalar_product(&f, &f, &nystrom_grid(&h, 0.1).unwrap()).unwrap().value(0.1).re.sqrt();
    let f = genfunc::scale(c(1.0 / n, 0.0), &f);
    let r = verify_unitary(&h, 1.0, &[(f.clone(), f)], &s).unwrap();
    assert!(r.max_residual < 1e-12, "{r:?}");

    let h = random::hermitian_kernel(&mut random::rng(1), &unit(), 3, rule()).unwrap().scaled(&GeneralizedNumberNet::log_scale(0.3));
    let probes = random_probe_pairs(&h, 5, 0).unwrap();
    let r = verify_unitary(&h, 1.0, &probes, &s).unwrap();
    assert!(r.passed() && r.max_residual < 1e-10, "{r:?}");
    assert_eq!(verify_unitary(&h, 0.0, &probes, &s).unwrap().max_residual, 0.0);

    let a = random::smooth_kernel(&mut random::rng(4), &unit(), &unit(), 2, rule()).unwrap();
    assert_eq!(verify_unitary(&a, 1.0, &probes, &s).unwrap().verdict, Verdict::HypothesisViolated);
}

fn bump_product() -> KernelNet {
    KernelNet::sigma(SmoothFn::tensor(vec![Func1::bump(0.0, 0.8), Func1::bump(0.0, 0.8)]), &unit(), &unit(), rule()).unwrap()
}

#[test]
fn log_scale_gate() {
    let p = Policy::default();
    let b = bump_product();
    let k = b.base.domain.clone();
    let r = check_log_scale(&b, &k, 1, ExpMode::CompactSup, &p).unwrap();
    assert!(r.pass && r.max_k < 1e-6, "{r:?}");
    let logb = b.scaled(&GeneralizedNumberNet::log_scale(1.0));
    let r = check_log_scale(&logb, &k, 0, ExpMode::CompactSup, &p).unwrap();
    assert!(r.pass && (r.entries[0].k - (-2.0f64).exp()).abs() < 0.01, "{r:?}");
    let big = b.scaled(&GeneralizedNumberNet::power(1.0, -1.0));
    assert!(!check_log_scale(&big, &k, 0, ExpMode::CompactSup, &p).unwrap().pass);

    let s = ExpSettings::default();
    assert!(matches!(exp_with(&big, c(1.0, 0.0), &s), Err(Error::LogScaleGate(_))));
    let mut force = s.clone();
    force.options.proceed_if_not_log_scale = true;
    assert!(matches!(exp_with(&big, c(1.0, 0.0), &force), Err(Error::Divergence { .. })));

    let r = exp_with(&logb, c(1.0, 0.0), &s).unwrap();
    let xs: Vec<f64> = r.epsilons.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = r.terms_used.iter().map(|&n| n as f64).collect();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    assert!(slope > 0.0 && r2 > 0.9, "{:?}", r.terms_used);
    assert!(ys.iter().zip(&xs).all(|(n, l)| *n <= 10.0 * l + 10.0));
}

#[test]
fn l2_mode_norm_bound() {
    let h = random::hermitian_kernel(&mut random::rng(9), &unit(), 2, rule()).unwrap().scaled(&GeneralizedNumberNet::log_scale(0.5));
    let s = ExpSettings { mode: ExpMode::L2, ..settings() };
    let r = exp_with(&h, c(1.0, 0.0), &s).unwrap();
    for &e in &r.epsilons {
        assert!(discrete_l2_norm(&r.s, e) <= discrete_l2_norm(&h, e).exp());
    }
    assert!(oracle_agreement(&r).unwrap().passed());
    let l2 = h.clone().into_l2();
    assert!(matches!(exp_with(&l2, c(1.0, 0.0), &settings()), Err(Error::Capability(_))));
}

#[test]
fn tail_bound_dominates_more_terms() {
    let h = random::smooth_kernel(&mut random::rng(8), &unit(), &unit(), 3, rule()).unwrap().scaled_by(c(3.0, 0.0));
    let mut s = settings();
    s.options.series_tol = 1e-6;
    let a = exp_with(&h, c(1.0, 0.0), &s).unwrap();
    s.options.extra_terms = 5;
    let b = exp_with(&h, c(1.0, 0.0), &s).unwrap();
    for (i, &e) in a.epsilons.iter().enumerate() {
        let (_, ma) = a.grid_matrix(e).unwrap();
        let (_, mb) = b.grid_matrix(e).unwrap();
        assert!(max_abs(&(ma - mb)) <= a.tail_bound[i], "eps {e}");
    }
}

#[test]
fn compact_support_is_kept() {
    let h = bump_product();
    let r = exp_with(&h, c(1.0, 0.0), &settings()).unwrap();
    let dom = AxisBox::new(vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    let est = support_estimate(&r.s.base, &dom, 10, 4, &short_policy()).unwrap().unwrap();
    let cell = 0.2;
    assert!(AxisBox::new(vec![(-0.8, 0.8), (-0.8, 0.8)]).unwrap().inflate(cell + 1e-12).contains_box(&est), "{est:?}");
}

#[test]
fn representatives_do_not_matter() {
    let h = random::smooth_kernel(&mut random::rng(6), &unit(), &unit(), 2, rule()).unwrap();
    let (null, rep) = verify_representative_independence(&h, c(1.0, 0.0), 1, &ExpSettings::default()).unwrap();
    assert!(null, "{rep:?}");
}

#[test]
fn entire_function_variant() {
    // f(z) = z^2 / 2 has L_2 / 2 as its kernel
    let spec = SeriesSpec {
        label: "z^2/2".into(),
        coeff: Arc::new(|n| if n == 2 { c(0.5, 0.0) } else { c(0.0, 0.0) }),
        tail: Arc::new(|_, n| if n >= 2 { 0.0 } else { f64::INFINITY }),
    };
    let h = rank1();
    let r = entire_kernel(&h, spec, &settings()).unwrap();
    assert!(r.terms_used.iter().all(|&n| n == 2));
    let lam = lambda();
    let want = 0.5 * lam * phi().eval(0.3) * phi().eval(-0.2);
    assert!((r.s.eval(0.1, &[0.3], &[-0.2]).re - want).abs() < 1e-14);
}
