use dphase::approx::{energy, lavrentiev_probe, mollify, LavrentievConfig, MollifierSpec, TestField};
use dphase::conditions::{check_f1, check_zsigma, convex_hull_1d, zsigma_sides, ZsigmaConstants};
use dphase::densities::{eval_g, DensitySpec, ExponentConfig, WeightSpec};
use dphase::fields::{
    discrete_gradient, gradient_at, truncation_gradient_identity, vectorial_truncation, Ball, GradientMatrix, Grid,
    SampledField,
};
use dphase::sampling::SamplerConfig;
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::cube(2, -1.0, 1.0, 24).unwrap()
}

fn field(values: Vec<f64>) -> SampledField {
    SampledField::new(grid(), 1, values).unwrap()
}

fn nodal_values(lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(lo..hi, grid().node_count())
}

fn weight() -> impl Strategy<Value = WeightSpec> {
    prop_oneof![
        (0.0..3.0).prop_map(WeightSpec::Constant),
        (0.0..2.0, -0.5..0.5, 0.2..2.0).prop_map(|(coef, shift, sigma)| WeightSpec::Holder { coef, shift, sigma }),
        (0.1..0.8, 0.2..2.0, 0.05..1.0).prop_map(|(r, sigma, h)| WeightSpec::StepHolder { r, sigma, h }),
    ]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = GradientMatrix> {
    proptest::collection::vec(-3.0..3.0, rows * cols).prop_map(move |d| GradientMatrix::from_rows(rows, cols, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mollification_is_linear(u in nodal_values(-2.0, 2.0), v in nodal_values(-2.0, 2.0), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let m = MollifierSpec::new(0.2).unwrap();
        let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = mollify(&field(combo), &m).unwrap();
        let (mu, mv) = (mollify(&field(u), &m).unwrap(), mollify(&field(v), &m).unwrap());
        for ((l, x), y) in lhs.values().iter().zip(mu.values()).zip(mv.values()) {
            prop_assert!((l - (a * x + b * y)).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()) * 4.0);
        }
    }

    #[test]
    fn mollification_preserves_positivity_and_constants(u in nodal_values(0.0, 5.0), c in -4.0..4.0f64) {
        let m = MollifierSpec::new(0.25).unwrap();
        prop_assert!(mollify(&field(u), &m).unwrap().values().iter().all(|&x| x >= 0.0));
        let flat = mollify(&field(vec![c; grid().node_count()]), &m).unwrap();
        prop_assert!(flat.values().iter().all(|&x| (x - c).abs() <= 1e-13 * (1.0 + c.abs())));
    }

    #[test]
    fn energy_is_monotone_under_domination(w in weight(), extra in 0.0..2.0f64, seed in 0u64..1000) {
        let u = TestField::random_smooth(2, 2, seed).sample(&grid()).unwrap();
        let ball = Ball::centered(2, 0.8).unwrap();
        let base = DensitySpec::PPower { p: 2.0 };
        let f = DensitySpec::zhikov(2.0, 3.0, w.clone());
        let (e0, e1) = (energy(&base, &u, &ball).unwrap(), energy(&f, &u, &ball).unwrap());
        prop_assert!(e0 <= e1);
        let wmax = (0..grid().node_count()).map(|k| w.eval(&grid().point(k))).fold(0.0, f64::max);
        let top = DensitySpec::zhikov(2.0, 3.0, WeightSpec::Constant(wmax + extra));
        prop_assert!(e1 <= energy(&top, &u, &ball).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn hull_is_convex_and_below_the_points(pts in proptest::collection::btree_map(-1000i32..1000, -10.0..10.0f64, 2..50)) {
        let pts: Vec<(f64, f64)> = pts.into_iter().map(|(s, v)| (s as f64 / 100.0, v)).collect();
        let hull = convex_hull_1d(&pts).unwrap();
        let v = hull.vertices();
        for w in v.windows(3) {
            let left = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            let right = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
            prop_assert!(right >= left - 1e-9);
        }
        for &(s, y) in &pts {
            prop_assert!(hull.eval(s).unwrap() <= y + 1e-9);
        }
    }

    #[test]
    fn truncation_is_idempotent_and_contracts(seed in 0u64..1000, k in 0.2..1.5f64) {
        let u = TestField::random_smooth(2, 2, seed).sample(&grid()).unwrap();
        let once = vectorial_truncation(&u, k).unwrap();
        let twice = vectorial_truncation(&once, k).unwrap();
        prop_assert_eq!(twice.values(), once.values());
        for node in 0..u.grid().node_count() {
            if u.magnitude(node) > k {
                let dk = truncation_gradient_identity(&u, k, node).unwrap();
                prop_assert!(dk.norm() <= gradient_at(&u, node).norm() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn discrete_gradient_is_exact_on_affine_fields(a in matrix(2, 2), b in proptest::collection::vec(-2.0..2.0f64, 2)) {
        let u = TestField::Affine { a: a.clone(), b }.sample(&grid()).unwrap();
        let du = discrete_gradient(&u).unwrap();
        for node in 0..u.grid().node_count() {
            for (x, y) in du.at(node).data().iter().zip(a.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn f1_agrees_with_the_exponent_sign(p in 1.1..4.0f64, dq in 0.01..3.0f64, n in 2usize..4, sigma in 0.05..3.0f64) {
        let q = p + dq;
        let e = ExponentConfig::new(p, q, n, 1, sigma).unwrap();
        let margin = sigma - n as f64 * (q - p) / p;
        if margin.abs() > 1e-12 {
            prop_assert_eq!(check_f1(&e), margin > 0.0);
        }
    }

    #[test]
    fn model_densities_dominate_the_p_power(w in weight(), x in proptest::collection::vec(-1.0..1.0f64, 2), z in matrix(2, 2), q in 2.1..4.0f64) {
        let p = 2.0;
        let lower = z.norm().powf(p);
        for f in [DensitySpec::zhikov(p, q, w.clone()), DensitySpec::example1(p, q, w.clone()), DensitySpec::example2(p, q)] {
            prop_assert!(f.eval(&x, z.view()).unwrap() >= lower * (1.0 - 1e-12));
        }
    }

    #[test]
    fn g_is_nonincreasing_in_x1(x1 in -2.0..2.0f64, d in 0.0..2.0f64, t in 0.01..3.0f64, q in 1.5..4.0f64) {
        prop_assert!(eval_g(x1 + d, t, q) <= eval_g(x1, t, q) + 1e-12);
    }

    #[test]
    fn zsigma_witnesses_are_genuine(factor in 0.3..1.0f64, seed in 0u64..100) {
        let w = WeightSpec::TwoThreshold { r1: -0.25, r2: 0.25, sigma: 0.1, h: 0.5 };
        let c = ZsigmaConstants::for_weight(&w).unwrap().scaled(factor);
        let report = check_zsigma(&w, &c, &Ball::centered(2, 1.0).unwrap(), &SamplerConfig::new(2000, seed));
        if let Some(wit) = &report.witness {
            let (lhs, rhs) = zsigma_sides(&w, &c, &wit.x, wit.x_tilde.as_ref().unwrap());
            prop_assert!(lhs - rhs > 1e-12);
            prop_assert_eq!((lhs, rhs), (wit.lhs, wit.rhs));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn smooth_class_never_beats_the_full_class(p in 1.6..3.0f64, cells in prop_oneof![Just(8usize), Just(12)]) {
        let f = DensitySpec::PPower { p };
        let probe = lavrentiev_probe(&f, &TestField::Saddle, &LavrentievConfig::new(vec![cells], 1)).unwrap();
        for level in &probe.levels {
            prop_assert!(level.inf_smooth() >= level.inf_full() - 1e-8);
        }
    }
}
