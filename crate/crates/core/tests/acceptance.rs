//! Acceptance criteria. Runs as a plain binary so the PASS/FAIL lines are always printed;
//! `cargo test --test acceptance -- <substring>` runs the matching criteria only.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use genkernel::asymptotics::{classify, fit_growth, linear_fit, Policy};
use genkernel::exponential::{
    exp_with, oracle_agreement, random_probe_pairs, verify_commutes, verify_derivative, verify_semigroup,
    verify_unitary, ExpSettings, DEFAULT_STEPS,
};
use genkernel::functions::{Func1, SmoothFn, C64};
use genkernel::genfunc::{seminorm_pkl_adaptive, sub, GeneralizedNumberNet, RepNet, Support};
use genkernel::kernel_ops::{
    apply, compose, diagram_check_smooth, discrete_l2_norm, test_zero_operator, KernelNet, Witness,
};
use genkernel::mollifier::{build_rho, check_scarp_moments, embed_is, embed_sigma, DistTerm, DistributionSpec, MollifierKit};
use genkernel::quadrature::{composite_1d, AxisBox, Rule};
use genkernel::random;
use genkernel::report::Verdict;
use genkernel::Error;

type Outcome = Result<String, String>;

fn kit() -> &'static MollifierKit {
    static KIT: OnceLock<MollifierKit> = OnceLock::new();
    KIT.get_or_init(|| build_rho(256, 20.0).unwrap())
}

/// Number of vanishing moments of the default kit.
fn m() -> f64 {
    kit().verified_moments as f64
}

fn policy() -> Policy {
    Policy::default()
}

fn interval(a: f64, b: f64) -> AxisBox {
    AxisBox::interval(a, b).unwrap()
}

/// 64 nodes. `Theta_eps` is supported on about `10 eps` around its center but varies on the
/// scale `eps`; 16-node panels resolve it to ~1e-13 where 8 x 8 leaves ~1e-6.
const RULE: Rule = Rule::new(4, 16);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn slope_str(s: f64) -> String {
    format!("{s:.2}")
}

/// Independent high-order integral on [a, b].
fn reference(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (xs, ws) = composite_1d(a, b, Rule::new(200, 20));
    xs.iter().zip(&ws).map(|(x, w)| w * f(*x)).sum()
}

/// Widens the support witness to the whole domain so every quadrature shares one grid.
fn on_domain(mut k: KernelNet) -> KernelNet {
    let d = k.x_domain();
    k.witness = Witness::Global { x_support: Support::Fixed(d.clone()), y_support: Support::Fixed(d) };
    k
}

fn rel_max(pairs: impl Iterator<Item = (C64, C64)>) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (a, b) in pairs {
        num = num.max((a - b).norm());
        den = den.max(b.norm());
    }
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn mollifier_moments() -> Outcome {
    let p = policy();
    let reps = check_scarp_moments(kit(), &p, 3).map_err(|e| e.to_string())?;
    let ok = reps.iter().all(|r| r.fitted_slope <= -3.0 && r.fit_r2 >= 0.95);
    let rows: Vec<String> = reps
        .iter()
        .enumerate()
        .map(|(m, r)| format!("m={m} slope={} r2={:.3} max={:.1e}", slope_str(r.fitted_slope), r.fit_r2, r.values.iter().cloned().fold(0.0, f64::max)))
        .collect();
    check(ok && reps.len() == 4, format!("M={} {}", m(), rows.join("; ")))
}

fn embedding_consistency() -> Outcome {
    let dom = interval(-4.0, 4.0);
    let f = Func1::bump(0.0, 1.5);
    let a = embed_is(&DistributionSpec::new(vec![DistTerm::Smooth { f: f.clone() }]), kit(), &dom).unwrap();
    let b = embed_sigma(SmoothFn::of(f), &dom).unwrap();
    let d = sub(&a, &b).unwrap();
    let rep = seminorm_pkl_adaptive(&d, &interval(-2.0, 2.0), 0, Rule::new(8, 6), &policy()).unwrap();
    check(rep.fitted_slope <= -(m() - 1.0), format!("slope={} (bound {})", slope_str(rep.fitted_slope), -(m() - 1.0)))
}

fn identity_kernel() -> Outcome {
    let dom = interval(-2.0, 2.0);
    let th = KernelNet::theta_diff(kit(), &dom, &dom, RULE).unwrap();
    let f = RepNet::from_smooth(SmoothFn::of(Func1::bump(0.0, 1.2)), dom.clone()).unwrap();
    let g = apply(&th, &f).unwrap();
    let rep = seminorm_pkl_adaptive(&sub(&g, &f).unwrap(), &interval(-1.5, 1.5), 0, Rule::new(6, 5), &policy()).unwrap();
    check(rep.fitted_slope <= -(m() - 1.0), format!("slope={} (bound {})", slope_str(rep.fitted_slope), -(m() - 1.0)))
}

fn delta_example() -> Outcome {
    let p = policy();
    let dom = interval(-2.0, 2.0);
    // narrow enough that the tail outside the domain (~1e-25) is below the noise floor
    let (width, center) = (0.25, 0.1);
    let chi = Func1::gaussian(center, width);
    let delta = embed_is(&DistributionSpec::delta(0.0), kit(), &dom).unwrap();
    let one = RepNet::from_smooth(SmoothFn::of(Func1::constant(1.0)), dom.clone()).unwrap();
    let chi_s = embed_is(&DistributionSpec::new(vec![DistTerm::Smooth { f: chi }]), kit(), &dom).unwrap();
    // H = i_S(delta_x 1_y), K = i_S(chi_x delta_y)
    let h = KernelNet::tensor(&delta, &one, 1.0, RULE).unwrap();
    let k = KernelNet::tensor(&chi_s, &delta, 1.0, RULE).unwrap();

    let kh = compose(&k, &h).unwrap();
    let (x0, y0) = (0.1, 0.3);
    let mut c = Vec::new();
    let mut factor_err = 0.0f64;
    for e in p.schedule.iter() {
        let r = kit().theta_radius(e);
        let c_ref = reference(-r, r, |z| kit().theta(e, z).powi(2));
        let ce = (kh.eval(e, &[x0], &[y0]) / chi_s.eval(e, &[x0])).re;
        c.push(ce);
        for &x in &[-0.5, 0.1, 0.7] {
            for &y in &[-1.0, 0.3] {
                let want = chi_s.eval(e, &[x]) * c_ref;
                factor_err = factor_err.max((kh.eval(e, &[x], &[y]) - want).norm() / want.norm());
            }
        }
    }
    let c_rep = fit_growth(&c, &p.schedule).unwrap();

    let hk = compose(&h, &k).unwrap();
    let int_chi = width * std::f64::consts::PI.sqrt();
    let target = KernelNet::embedded_tensor(&DistributionSpec::delta(0.0), &DistributionSpec::delta(0.0), int_chi, kit(), &dom, &dom, RULE).unwrap();
    let diff = sub(&hk.base, &target.base).unwrap();
    let sq = interval(-1.0, 1.0).product(&interval(-1.0, 1.0));
    let rep = seminorm_pkl_adaptive(&diff, &sq, 0, Rule::new(4, 4), &p).unwrap();
    let class = classify(&rep, p.m_max, p.slope_tol);
    check(
        (c_rep.fitted_slope - 1.0).abs() <= 0.1 && factor_err <= 1e-8 && class.is_negligible_to(2),
        format!(
            "slope(c_eps)={:.3} factorization err={factor_err:.1e}; HoK - i_S(dd) int chi: {}",
            c_rep.fitted_slope,
            class.label()
        ),
    )
}

fn associativity_fubini() -> Outcome {
    let p = policy();
    let dom = interval(-1.0, 1.0);
    let mut rng = random::rng(0);
    let pts: Vec<f64> = (0..5).map(|i| -0.9 + 0.45 * i as f64).collect();
    let (mut assoc, mut fub) = (0.0f64, 0.0f64);
    for _ in 0..3 {
        let mut ks = (0..3).map(|_| on_domain(random::smooth_kernel(&mut rng, &dom, &dom, 3, RULE).unwrap()));
        let (a, b, c) = (ks.next().unwrap(), ks.next().unwrap(), ks.next().unwrap());
        let left = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        let right = compose(&a, &compose(&b, &c).unwrap()).unwrap();
        let f = RepNet::from_smooth(random::trig_probe(&mut rng, 3), dom.clone()).unwrap();
        let lf = apply(&compose(&a, &b).unwrap(), &f).unwrap();
        let rf = apply(&a, &apply(&b, &f).unwrap()).unwrap();
        for e in p.schedule.iter() {
            let pairs = pts.iter().flat_map(|&x| pts.iter().map(move |&y| (x, y)));
            assoc = assoc.max(rel_max(pairs.map(|(x, y)| (left.eval(e, &[x], &[y]), right.eval(e, &[x], &[y])))));
            fub = fub.max(rel_max(pts.iter().map(|&x| (lf.eval(e, &[x]), rf.eval(e, &[x])))));
        }
    }
    check(assoc <= 1e-10 && fub <= 1e-10, format!("associativity {assoc:.1e}, Fubini {fub:.1e}"))
}

fn l2_bound() -> Outcome {
    let p = policy();
    let dom = interval(-1.0, 1.0);
    let mut rng = random::rng(0);
    // the kernels are eps-independent up to the log factor; three epsilons suffice
    let ks: Vec<KernelNet> = (0..5)
        .map(|i| {
            let k = random::smooth_kernel(&mut rng, &dom, &dom, 3, RULE).unwrap();
            let k = if i % 2 == 0 { k.scaled(&GeneralizedNumberNet::log_scale(1.0)) } else { k };
            on_domain(k).into_l2()
        })
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..5 {
        let (a, b) = (&ks[i], &ks[(i + 1) % 5]);
        let l = compose(a, b).unwrap();
        for e in [p.schedule.largest(), 2f64.powi(-9), p.schedule.smallest()] {
            let ratio = discrete_l2_norm(&l, e) / (discrete_l2_norm(a, e) * discrete_l2_norm(b, e));
            worst = worst.max(ratio);
        }
    }
    check(worst <= 1.0 + 1e-12, format!("max ||L|| / (||H1|| ||H2||) = {worst:.6}"))
}

fn exponential_oracle() -> Outcome {
    let s = ExpSettings::default();
    let unit = interval(-1.0, 1.0);
    let h = random::smooth_kernel(&mut random::rng(0), &unit, &unit, 3, RULE).unwrap();
    let mut worst = 0.0f64;
    for t in [C64::new(1.0, 0.0), C64::new(0.0, -1.5)] {
        let r = exp_with(&h, t, &s).unwrap();
        worst = worst.max(oracle_agreement(&r).unwrap().max_residual);
    }
    // rank one: phi(x) phi(y) with polynomial phi, so Gauss rules integrate phi^2 exactly
    let phi = Func1::Poly { coeffs: vec![0.8, 0.3, -0.8] };
    let lam = 0.64 * 16.0 / 15.0 + 0.09 * 2.0 / 3.0;
    let r1 = KernelNet::sigma(SmoothFn::tensor(vec![phi.clone(), phi.clone()]), &unit, &unit, RULE).unwrap();
    let mut rank1 = 0.0f64;
    for t in [C64::new(1.0, 0.0), C64::new(-0.7, 0.4)] {
        let r = exp_with(&r1, t, &s).unwrap();
        let factor = ((t * lam).exp() - 1.0) / lam;
        for e in r.epsilons.clone() {
            rank1 = rank1.max(rel_max([(0.1, 0.2), (-0.9, 0.5), (0.6, -0.3)].iter().map(|&(x, y)| {
                (r.s.eval(e, &[x], &[y]), factor * phi.eval(x) * phi.eval(y))
            })));
        }
    }
    check(worst <= 1e-10 && rank1 <= 1e-8, format!("oracle {worst:.1e}, rank-1 closed form {rank1:.1e}"))
}

fn exponential_identities() -> Outcome {
    let s = ExpSettings::default();
    let unit = interval(-1.0, 1.0);
    let h = random::smooth_kernel(&mut random::rng(0), &unit, &unit, 3, RULE).unwrap();
    let mut semi = 0.0f64;
    for (a, b) in [(1.0, 1.0), (1.0, -1.0), (0.5, 0.25)] {
        semi = semi.max(verify_semigroup(&h, C64::new(a, 0.0), C64::new(b, 0.0), &s).unwrap().max_residual);
    }
    let d = verify_derivative(&h, 1.0, &DEFAULT_STEPS, &s).unwrap();
    let order = d.observed_order.unwrap_or(f64::NAN);
    let comm = verify_commutes(&h, C64::new(1.0, 0.0), &s).unwrap().max_residual;
    check(
        semi <= 1e-8 && (order - 2.0).abs() <= 0.2 && comm <= 1e-10,
        format!("semigroup {semi:.1e}, derivative order {order:.3}, commutation {comm:.1e}"),
    )
}

fn unitarity() -> Outcome {
    let s = ExpSettings::default();
    let unit = interval(-1.0, 1.0);
    let mut worst = 0.0f64;
    let mut all_pass = true;
    for seed in 1..=3 {
        let h = random::hermitian_kernel(&mut random::rng(seed), &unit, 3, RULE)
            .unwrap()
            .scaled(&GeneralizedNumberNet::log_scale(0.3));
        let probes = random_probe_pairs(&h, 5, seed).unwrap();
        let r = verify_unitary(&h, 1.0, &probes, &s).unwrap();
        all_pass &= r.verdict == Verdict::Pass;
        worst = worst.max(r.max_residual);
    }
    check(all_pass && worst <= 1e-7, format!("max relative defect {worst:.1e}"))
}

fn characterization() -> Outcome {
    let p = policy();
    let unit = interval(-1.0, 1.0);
    let z = KernelNet::zero(&unit, &unit, RULE).unwrap();
    let zero_ok = test_zero_operator(&z, None, &unit, 4, &p).unwrap().consistent_with_zero;
    let mut witnessed = 0;
    for seed in 0..10 {
        let h = random::smooth_kernel(&mut random::rng(seed), &unit, &unit, 3, RULE).unwrap();
        let v = test_zero_operator(&h, None, &unit, 4, &p).unwrap();
        if !v.consistent_with_zero && v.witness.is_some() {
            witnessed += 1;
        }
    }
    check(zero_ok && witnessed == 10, format!("zero kernel consistent: {zero_ok}; nonzero witnessed {witnessed}/10"))
}

fn log_scale_gate() -> Outcome {
    let unit = interval(-1.0, 1.0);
    let b = KernelNet::sigma(SmoothFn::tensor(vec![Func1::bump(0.0, 0.8), Func1::bump(0.0, 0.8)]), &unit, &unit, RULE).unwrap();
    let s = ExpSettings::default();
    let big = b.scaled(&GeneralizedNumberNet::power(1.0, -1.0));
    let gated = matches!(exp_with(&big, C64::new(1.0, 0.0), &s), Err(Error::LogScaleGate(_) | Error::Divergence { .. }));
    let logb = b.scaled(&GeneralizedNumberNet::log_scale(1.0));
    let r = exp_with(&logb, C64::new(1.0, 0.0), &s).map_err(|e| e.to_string())?;
    let ls: Vec<f64> = r.epsilons.iter().map(|e| (1.0 / e).ln()).collect();
    let ns: Vec<f64> = r.terms_used.iter().map(|&n| n as f64).collect();
    let (slope, _, r2) = linear_fit(&ls, &ns);
    // power-law exponent of N(eps) in 1/eps; logarithmic growth keeps it near zero
    let (pow, _, _) = linear_fit(&ls, &ns.iter().map(|n| n.ln()).collect::<Vec<_>>());
    check(
        gated && slope > 0.0 && r2 >= 0.9 && pow < 0.25,
        format!("eps^-1 kernel rejected: {gated}; terms_used {:?} ~ {slope:.2} |ln eps| (r2 {r2:.3})", r.terms_used),
    )
}

fn diagram() -> Outcome {
    let p = policy();
    let dom = interval(-2.0, 2.0);
    let h = SmoothFn::tensor(vec![Func1::bump(0.0, 1.5), Func1::bump(0.2, 1.5)]);
    let k = interval(-1.0, 1.0);
    // For smooth T the y-integrand has bump edges of width O(1) rather than O(eps); 64 nodes
    // leave a ~1e-10 quadrature floor that hides the eps^(M+1) decay, 512 nodes do not.
    let cases = [
        ("delta", DistributionSpec::delta(0.0), -(m() - 1.0), RULE),
        ("delta'", DistributionSpec::new(vec![DistTerm::dirac(0.0, 1)]), -(m() - 2.0), RULE),
        ("smooth", DistributionSpec::new(vec![DistTerm::Smooth { f: Func1::bump(0.3, 0.8) }]), -3.0, Rule::new(32, 16)),
    ];
    let mut ok = true;
    let mut rows = Vec::new();
    for (name, t, bound, rule) in cases {
        let r = diagram_check_smooth(&h, &t, kit(), &dom, &dom, &k, rule, &p).unwrap();
        ok &= r.report.fitted_slope <= bound;
        rows.push(format!("{name} slope={} (bound {bound})", slope_str(r.report.fitted_slope)));
    }
    check(ok, rows.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("mollifier moments", mollifier_moments),
        ("embedding consistency", embedding_consistency),
        ("identity kernel", identity_kernel),
        ("worked delta example", delta_example),
        ("discrete associativity and Fubini", associativity_fubini),
        ("L2 composition bound", l2_bound),
        ("exponential oracle agreement", exponential_oracle),
        ("exponential identities", exponential_identities),
        ("unitarity", unitarity),
        ("characterization harness", characterization),
        ("log-scale gate", log_scale_gate),
        ("diagram check", diagram),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {name}: {tag} [{secs:.1}s] {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
