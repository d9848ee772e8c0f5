use genkernel::asymptotics::{make_schedule, Policy};
use genkernel::exponential::{exp_with, ExpSettings};
use genkernel::functions::{Func1, SmoothFn, C64};
use genkernel::genfunc::{add, mul, scalar_product, scale, seminorm_pkl, RepNet};
use genkernel::kernel_ops::{apply, compose, KernelNet, Witness};
use genkernel::mollifier::build_rho;
use genkernel::quadrature::{build_grid, AxisBox, Rule};
use genkernel::random;
use proptest::prelude::*;

fn unit() -> AxisBox {
    AxisBox::interval(-1.0, 1.0).unwrap()
}

fn short_policy() -> Policy {
    Policy { schedule: make_schedule(4, 9, 2.0).unwrap(), ..Policy::default() }
}

fn probe(seed: u64) -> RepNet {
    RepNet::from_smooth(random::trig_probe(&mut random::rng(seed), 3), unit()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadrature_weights(a in -5.0f64..5.0, w in 0.01f64..10.0, panels in 1usize..12, nodes in 2usize..=12) {
        let b = AxisBox::interval(a, a + w).unwrap();
        let g = build_grid(&b, panels, nodes).unwrap();
        prop_assert!(g.weights.iter().all(|&x| x > 0.0));
        let total: f64 = g.weights.iter().sum();
        prop_assert!((total - w).abs() <= 1e-12 * w);
        prop_assert!(g.nodes().all(|p| b.contains(p)));
    }

    #[test]
    fn schedules_are_decreasing(k_min in 0i32..6, extra in 3i32..12, base in 1.5f64..4.0) {
        let s = make_schedule(k_min, k_min + extra, base).unwrap();
        prop_assert!(s.len() >= 4);
        prop_assert!(s.values().iter().all(|&e| e > 0.0 && e <= 1.0));
        prop_assert!(s.values().windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn scalar_product_is_positive(seed in 0u64..1000, panels in 1usize..6) {
        let f = probe(seed);
        let g = build_grid(&unit(), panels, 6).unwrap();
        let n = scalar_product(&f, &f, &g).unwrap();
        for e in [0.5, 0.01, 1e-4] {
            let v = n.value(e);
            prop_assert!(v.im == 0.0 && v.re >= 0.0);
        }
    }

    #[test]
    fn sup_seminorms(seed in 0u64..1000) {
        let p = short_policy();
        let (u, v) = (probe(seed), probe(seed + 7919));
        let g = build_grid(&unit(), 4, 5).unwrap();
        let pu = seminorm_pkl(&u, &unit(), 0, &g, &p).unwrap();
        let pv = seminorm_pkl(&v, &unit(), 0, &g, &p).unwrap();
        let puv = seminorm_pkl(&mul(&u, &v).unwrap(), &unit(), 0, &g, &p).unwrap();
        let pu1 = seminorm_pkl(&u, &unit(), 1, &g, &p).unwrap();
        for i in 0..p.schedule.len() {
            prop_assert!(puv.values[i] <= pu.values[i] * pv.values[i] * (1.0 + 1e-14));
            prop_assert!(pu1.values[i] >= pu.values[i]);
        }
    }

    #[test]
    fn theta_support_shrinks(k in 4i32..15, z in 0.0f64..1.0) {
        let kit = build_rho(256, 20.0).unwrap();
        let e = 2f64.powi(-k);
        let r = kit.theta_radius(e);
        prop_assert!(r <= 2.0 / e.ln().abs());
        prop_assert_eq!(kit.theta(e, r * (1.0 + z) + 1e-15), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn application_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let h = random::smooth_kernel(&mut random::rng(seed), &unit(), &unit(), 3, Rule::new(4, 8)).unwrap();
        let (f, g) = (probe(seed + 1), probe(seed + 2));
        let (ca, cb) = (C64::new(a, 0.5), C64::new(b, -0.25));
        let lhs = apply(&h, &add(&scale(ca, &f), &scale(cb, &g)).unwrap()).unwrap();
        let (hf, hg) = (apply(&h, &f).unwrap(), apply(&h, &g).unwrap());
        for e in [0.25, 1e-3] {
            for x in [-0.7, 0.0, 0.55] {
                let want = hf.eval(e, &[x]) * ca + hg.eval(e, &[x]) * cb;
                prop_assert!((lhs.eval(e, &[x]) - want).norm() <= 1e-13 * (1.0 + want.norm()));
            }
        }
    }

    #[test]
    fn composition_associates_on_shared_grids(seed in 0u64..1000) {
        let mut rng = random::rng(seed);
        let mut k = || {
            let mut k = random::smooth_kernel(&mut rng, &unit(), &unit(), 2, Rule::new(2, 8)).unwrap();
            k.witness = Witness::Global {
                x_support: genkernel::genfunc::Support::Fixed(unit()),
                y_support: genkernel::genfunc::Support::Fixed(unit()),
            };
            k
        };
        let (a, b, c): (KernelNet, KernelNet, KernelNet) = (k(), k(), k());
        let l = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        let r = compose(&a, &compose(&b, &c).unwrap()).unwrap();
        for (x, y) in [(0.1, -0.3), (0.8, 0.6), (-0.9, 0.0)] {
            let (p, q) = (l.eval(0.1, &[x], &[y]), r.eval(0.1, &[x], &[y]));
            prop_assert!((p - q).norm() <= 1e-12 * (1.0 + q.norm()));
        }
    }

    #[test]
    fn series_truncation_meets_tolerance(seed in 0u64..1000, t in -2.0f64..2.0) {
        let s = ExpSettings { policy: short_policy(), ..ExpSettings::default() };
        let h = random::smooth_kernel(&mut random::rng(seed), &unit(), &unit(), 2, Rule::new(4, 8)).unwrap();
        let r = exp_with(&h, C64::new(t, 0.0), &s).unwrap();
        prop_assert!(r.terms_used.iter().all(|&n| n >= 1));
        prop_assert!(r.tail_bound.iter().all(|&b| b < s.options.series_tol));
    }

    #[test]
    fn sigma_is_a_homomorphism(c in -2.0f64..2.0, w in 0.2f64..1.0) {
        let (f, g) = (Func1::bump(c * 0.3, w), Func1::Trig { amp: 1.0, freq: c, phase: w });
        let sf = RepNet::from_smooth(SmoothFn::of(f.clone()), unit()).unwrap();
        let sg = RepNet::from_smooth(SmoothFn::of(g.clone()), unit()).unwrap();
        let prod = RepNet::from_smooth(SmoothFn::of(f.clone().times(g.clone())), unit()).unwrap();
        let m = mul(&sf, &sg).unwrap();
        let s = add(&sf, &sg).unwrap();
        for x in [-0.8, -0.1, 0.33, 0.9] {
            prop_assert!((m.eval(0.1, &[x]) - prod.eval(0.1, &[x])).norm() <= 1e-15);
            prop_assert!((s.eval(0.1, &[x]).re - f.eval(x) - g.eval(x)).abs() <= 1e-15);
        }
    }
}
