use amm_duality::il::{
    il_cpmm_closed, il_from_w, il_spread_over_base_rates, il_weighted_closed, impermanent_loss,
    ratio_vector,
};
use amm_duality::legendre::{
    estimate_homogeneity, eval_w, grad_w, legendre_transform, ExchangeRates, HomogeneityProbes,
    HomogeneityTarget,
};
use amm_duality::{
    closed_form_stable_point, eval_f, grad_f, solve_stable_point, AmmSpec, Family, PriceVector,
    ReserveVector, SolverOptions,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let rest: f64 = w[1..].iter().sum();
        w[0] = 1.0 - rest;
        w
    })
}

/// Any family with its natural level, for `n` tokens.
fn spec_with_level(n: usize) -> impl Strategy<Value = (AmmSpec, f64)> {
    prop_oneof![
        (0.5f64..50.0).prop_map(move |k| (AmmSpec::constant_product(n).unwrap(), k)),
        (weights(n), 0.5f64..5.0).prop_map(|(w, k)| (AmmSpec::weighted(w).unwrap(), k)),
        (0.5f64..20.0, 0.5f64..3.0)
            .prop_map(move |(amp, d)| (AmmSpec::stableswap(n, amp, d).unwrap(), d)),
    ]
}

fn positive(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((lo.ln()..hi.ln()).prop_map(f64::exp), n)
}

fn prices(n: usize) -> impl Strategy<Value = PriceVector> {
    positive(n, 0.1, 10.0).prop_map(|v| PriceVector::new(v).unwrap())
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

proptest! {
    #[test]
    fn gradient_matches_central_differences(
        (spec, _) in (2usize..5).prop_flat_map(spec_with_level),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..spec.n()).map(|_| rng.gen_range(0.1..10.0)).collect();
        let g = spec.eval_gradient(&ReserveVector::new(x.clone()).unwrap()).unwrap();
        for i in 0..x.len() {
            let h = 1e-6 * x[i];
            let mut up = x.clone();
            up[i] += h;
            let mut down = x.clone();
            down[i] -= h;
            let fd = (spec.eval_invariant(&ReserveVector::new(up).unwrap()).unwrap()
                - spec.eval_invariant(&ReserveVector::new(down).unwrap()).unwrap())
                / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs(), "i={i} fd={fd} g={}", g[i]);
            prop_assert!(g[i] > 0.0);
        }
    }

    #[test]
    fn product_and_equal_weight_surfaces_coincide(n in 2usize..6, x in positive(5, 0.1, 10.0)) {
        let x = ReserveVector::new(x[..n].to_vec()).unwrap();
        let cp = AmmSpec::constant_product(n).unwrap().eval_invariant(&x).unwrap();
        let g3m = AmmSpec::weighted(vec![1.0 / n as f64; n]).unwrap().eval_invariant(&x).unwrap();
        prop_assert!((cp.powf(1.0 / n as f64) - g3m).abs() <= 1e-12 * g3m);
    }

    #[test]
    fn stable_map_is_price_level_independent(
        (spec, level) in (2usize..4).prop_flat_map(spec_with_level),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PriceVector::new((0..spec.n()).map(|_| rng.gen_range(0.2..5.0)).collect()).unwrap();
        let base = solve_stable_point(&spec, level, &p, &opts()).unwrap();
        for c in [0.1, 7.0, 100.0] {
            let s = solve_stable_point(&spec, level, &p.scaled(c).unwrap(), &opts()).unwrap();
            for (u, v) in s.x.iter().zip(base.x.iter()) {
                prop_assert!((u - v).abs() <= 1e-8, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn stable_point_is_tangent(
        (spec, level) in (2usize..4).prop_flat_map(spec_with_level),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PriceVector::new((0..spec.n()).map(|_| rng.gen_range(0.2..5.0)).collect()).unwrap();
        let s = solve_stable_point(&spec, level, &p, &SolverOptions::numeric()).unwrap();
        let slope = grad_f(&spec, level, s.x_hat()).unwrap();
        let pn = p[p.len() - 1];
        for (g, pi) in slope.iter().zip(p.iter()) {
            prop_assert!((g + pi / pn).abs() <= 1e-7, "{g} vs {}", -pi / pn);
        }
        prop_assert!(s.grad_residual <= 1e-10 && s.level_residual <= 1e-10);
    }

    #[test]
    fn constant_product_equal_value(n in 2usize..5, level in 0.5f64..50.0, p in prices(4)) {
        let spec = AmmSpec::constant_product(n).unwrap();
        let p = PriceVector::new(p[..n].to_vec()).unwrap();
        let s = solve_stable_point(&spec, level, &p, &SolverOptions::numeric()).unwrap();
        let common = level.powf(1.0 / n as f64) * p.iter().map(|v| v.powf(1.0 / n as f64)).product::<f64>();
        for j in 0..n {
            prop_assert!((p[j] * s.x[j] - common).abs() <= 1e-9 * common);
        }
    }

    #[test]
    fn w_gradient_and_slope_identities(
        (spec, level) in (2usize..4).prop_flat_map(spec_with_level),
        m_hat in positive(2, 0.2, 5.0),
    ) {
        let dim = spec.n() - 1;
        let m = ExchangeRates::from_non_numeraire(&m_hat[..dim]).unwrap();
        let g = grad_w(&spec, level, &m, &opts()).unwrap();
        for j in 0..dim {
            let h = 1e-5 * m[j];
            let mut up = m.m_hat().to_vec();
            up[j] += h;
            let mut down = m.m_hat().to_vec();
            down[j] -= h;
            let wu = eval_w(&spec, level, &ExchangeRates::from_non_numeraire(&up).unwrap(), &opts()).unwrap();
            let wd = eval_w(&spec, level, &ExchangeRates::from_non_numeraire(&down).unwrap(), &opts()).unwrap();
            let fd = (wu - wd) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-5 * g[j], "j={j}: fd {fd} vs {}", g[j]);

            // concavity along each coordinate
            let h2 = 1e-4 * m[j];
            let mut up = m.m_hat().to_vec();
            up[j] += h2;
            let mut down = m.m_hat().to_vec();
            down[j] -= h2;
            let w0 = eval_w(&spec, level, &m, &opts()).unwrap();
            let wu = eval_w(&spec, level, &ExchangeRates::from_non_numeraire(&up).unwrap(), &opts()).unwrap();
            let wd = eval_w(&spec, level, &ExchangeRates::from_non_numeraire(&down).unwrap(), &opts()).unwrap();
            prop_assert!(wu - 2.0 * w0 + wd <= 1e-8);
        }
        let slope = grad_f(&spec, level, &g).unwrap();
        for j in 0..dim {
            prop_assert!((slope[j] + m[j]).abs() <= 1e-7);
        }
    }

    #[test]
    fn transform_route_matches_value_function(
        (spec, level) in (2usize..4).prop_flat_map(spec_with_level),
        m_hat in positive(2, 0.2, 5.0),
    ) {
        let m = ExchangeRates::from_non_numeraire(&m_hat[..spec.n() - 1]).unwrap();
        let w = eval_w(&spec, level, &m, &opts()).unwrap();
        let e = legendre_transform(&spec, level, &m).unwrap();
        prop_assert!((e.w_via_transform - w).abs() <= 1e-8 * w);
        prop_assert!((e.transform_value + 2.0 * e.f_at_point - w).abs() <= 1e-8 * w);
    }

    #[test]
    fn impermanent_loss_properties(
        (spec, level) in (2usize..4).prop_flat_map(spec_with_level),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = spec.n();
        let mut draw = || PriceVector::new((0..n).map(|_| rng.gen_range(0.1f64..10.0)).collect()).unwrap();
        let (p_i, p_f) = (draw(), draw());
        let r = impermanent_loss(&spec, level, &p_i, &p_f, &opts()).unwrap();
        prop_assert!(r.il <= 1e-9);

        let c = (rng.gen_range(0.01f64.ln()..100f64.ln())).exp();
        let d = (rng.gen_range(0.01f64.ln()..100f64.ln())).exp();
        let scaled = impermanent_loss(&spec, level, &p_i.scaled(c).unwrap(), &p_f.scaled(d).unwrap(), &opts()).unwrap();
        prop_assert!((scaled.il - r.il).abs() <= 1e-9);

        let via_w = il_from_w(&spec, level, &ExchangeRates::from_prices(&p_i), &ExchangeRates::from_prices(&p_f), &opts()).unwrap();
        prop_assert!((via_w - r.il).abs() <= 1e-8);

        if spec.family() == Family::ConstantProduct {
            let closed = il_cpmm_closed(&ratio_vector(&p_i, &p_f).unwrap());
            prop_assert!((closed - r.il).abs() <= 1e-9);
        }

        let same = impermanent_loss(&spec, level, &p_i, &p_i, &opts()).unwrap();
        prop_assert!(same.il.abs() <= 1e-12);
    }

    #[test]
    fn geometric_pools_are_rate_level_independent(
        (spec, level) in (2usize..4).prop_flat_map(spec_with_level)
            .prop_filter("geometric", |(s, _)| s.is_geometric()),
        t in positive(2, 0.1, 10.0),
        seed in any::<u64>(),
    ) {
        let dim = spec.n() - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bases: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.1f64.ln()..10f64.ln()).exp()).collect())
            .collect();
        let spread = il_spread_over_base_rates(&spec, level, &[t[..dim].to_vec()], &bases, &opts()).unwrap();
        prop_assert!(spread <= 1e-7, "spread {spread}");
    }
}

#[test]
fn closed_form_agrees_with_numeric_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for draw in 0..100 {
        for family in [Family::ConstantProduct, Family::WeightedG3m] {
            let n = 2 + draw % 3;
            let spec = match family {
                Family::ConstantProduct => AmmSpec::constant_product(n).unwrap(),
                _ => {
                    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
                    let rest: f64 = w[1..].iter().sum();
                    w[0] = 1.0 - rest;
                    AmmSpec::weighted(w).unwrap()
                }
            };
            let level = rng.gen_range(0.5..20.0);
            let p = PriceVector::new((0..n).map(|_| rng.gen_range(0.1..10.0)).collect()).unwrap();
            let closed = closed_form_stable_point(&spec, level, &p).unwrap().unwrap();
            let numeric = solve_stable_point(&spec, level, &p, &SolverOptions::numeric()).unwrap();
            for (a, b) in closed.x.iter().zip(numeric.x.iter()) {
                assert!((a - b).abs() <= 1e-9 * a, "{spec} p={p:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn weighted_closed_form_matches_numeric_il() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for draw in 0..100 {
        let n = 2 + draw % 2;
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let rest: f64 = w[1..].iter().sum();
        w[0] = 1.0 - rest;
        let spec = AmmSpec::weighted(w.clone()).unwrap();
        let p_i = PriceVector::new((0..n).map(|_| rng.gen_range(0.1..10.0)).collect()).unwrap();
        let p_f = PriceVector::new((0..n).map(|_| rng.gen_range(0.1..10.0)).collect()).unwrap();
        let numeric = impermanent_loss(&spec, 1.0, &p_i, &p_f, &SolverOptions::numeric()).unwrap();
        let closed = il_weighted_closed(&w, &ratio_vector(&p_i, &p_f).unwrap()).unwrap();
        assert!((numeric.il - closed).abs() <= 1e-8, "w={w:?}: {} vs {closed}", numeric.il);
    }
}

#[test]
fn stable_point_minimizes_value_on_surface() {
    // 1000 on-surface perturbations for two tokens, a 10x10x10 grid for four
    let cases = [
        (AmmSpec::constant_product(2).unwrap(), 12.0, vec![3.0, 1.0]),
        (AmmSpec::weighted(vec![0.8, 0.2]).unwrap(), 1.0, vec![0.7, 1.3]),
        (AmmSpec::stableswap(2, 1.0, 1.0).unwrap(), 1.0, vec![2.0, 1.0]),
        (AmmSpec::constant_product(4).unwrap(), 5.0, vec![0.5, 2.0, 1.5, 1.0]),
        (AmmSpec::stableswap(4, 3.0, 2.0).unwrap(), 2.0, vec![1.2, 0.9, 1.1, 1.0]),
    ];
    for (spec, level, p) in cases {
        let p = PriceVector::new(p).unwrap();
        let s = solve_stable_point(&spec, level, &p, &SolverOptions::default()).unwrap();
        let best = s.value(&p);
        let dim = spec.n() - 1;
        let per_axis: usize = if dim == 1 { 1000 } else { 10 };
        let deltas: Vec<f64> = (0..per_axis)
            .map(|k| -0.5 + k as f64 / (per_axis - 1) as f64)
            .collect();
        let total = per_axis.pow(dim as u32);
        for idx in 0..total {
            let mut rest = idx;
            let y: Vec<f64> = (0..dim)
                .map(|j| {
                    let d = deltas[rest % per_axis];
                    rest /= per_axis;
                    s.x[j] * (1.0 + d)
                })
                .collect();
            let xn = eval_f(&spec, level, &y).unwrap();
            let v: f64 = y.iter().zip(p.iter()).map(|(a, b)| a * b).sum::<f64>() + xn * p[dim];
            assert!(v >= best - 1e-9 * best, "{spec}: {v} < {best}");
        }
    }
}

#[test]
fn degree_relation_for_weighted_pools() {
    let probes = HomogeneityProbes::default_for(2, 9);
    for mut w in [vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3], vec![1.0 / 3.0; 3]] {
        w[0] = 1.0 - w[1..].iter().sum::<f64>();
        let spec = AmmSpec::weighted(w.clone()).unwrap();
        let o = SolverOptions::default();
        let alpha: Vec<f64> = (0..2)
            .map(|j| estimate_homogeneity(&spec, 2.0, HomogeneityTarget::SurfaceFn, j, &probes, &o).unwrap().degree)
            .collect();
        let sum: f64 = alpha.iter().sum();
        for j in 0..2 {
            // f = (k / prod x_i^{w_i})^{1/w_n}
            assert!((alpha[j] + w[j] / w[2]).abs() < 1e-9);
            let beta = estimate_homogeneity(&spec, 2.0, HomogeneityTarget::ValueFn, j, &probes, &o).unwrap();
            assert!((beta.degree - alpha[j] / (-1.0 + sum)).abs() <= 1e-6, "w={w:?} j={j}");
        }
    }
}

#[test]
fn zero_loss_at_identity_for_every_family() {
    let p = PriceVector::new(vec![1.7, 0.3, 1.0]).unwrap();
    for spec in [
        AmmSpec::constant_product(3).unwrap(),
        AmmSpec::weighted(vec![0.5, 0.25, 0.25]).unwrap(),
        AmmSpec::stableswap(3, 5.0, 3.0).unwrap(),
    ] {
        let level = spec.d().unwrap_or(4.0);
        let r = impermanent_loss(&spec, level, &p, &p.scaled(3.0).unwrap(), &opts()).unwrap();
        assert!(r.il.abs() <= 1e-12, "{spec}: {}", r.il);
        assert!(r.t.iter().all(|t| (t - 1.0).abs() < 1e-15));
    }
}

#[test]
fn direct_minimization_agrees_with_solver() {
    use amm_duality::legendre::eval_w_direct;
    // reference values from 40-digit arithmetic on the explicit curves
    let cases = [
        (AmmSpec::weighted(vec![0.8, 0.2]).unwrap(), 1.0, 1.0, 1.649_384_888_466_117_8),
        (AmmSpec::stableswap(2, 1.0, 1.0).unwrap(), 1.0, 2.0, 1.297_963_376_539_628),
    ];
    for (spec, level, m1, golden) in cases {
        let m = ExchangeRates::from_non_numeraire(&[m1]).unwrap();
        let w = eval_w(&spec, level, &m, &opts()).unwrap();
        let direct = eval_w_direct(&spec, level, &m, 256).unwrap();
        let transform = legendre_transform(&spec, level, &m).unwrap().w_via_transform;
        for v in [w, direct, transform] {
            assert!((v - golden).abs() <= 1e-9 * golden, "{spec}: {v} vs {golden}");
        }
    }
}

#[test]
fn stableswap_is_valid_on_reference_box() {
    use amm_duality::validate_spec;
    let spec = AmmSpec::stableswap(2, 1.0, 1.0).unwrap();
    let lo = ReserveVector::new(vec![0.05, 0.05]).unwrap();
    let hi = ReserveVector::new(vec![5.0, 5.0]).unwrap();
    let report = validate_spec(&spec, &lo, &hi).unwrap();
    assert!(report.passed, "{report:?}");
    assert!(report.samples >= 256);
    assert!(report.min_gradient > 0.0);
}

#[test]
fn surface_comparison_cases() {
    use amm_duality::il::same_level_surfaces;
    let cp = AmmSpec::constant_product(2).unwrap();
    let half = AmmSpec::weighted(vec![0.5, 0.5]).unwrap();
    let skew = AmmSpec::weighted(vec![0.8, 0.2]).unwrap();
    let ss = AmmSpec::stableswap(2, 1.0, 1.0).unwrap();
    let z: Vec<Vec<f64>> = [0.1, 0.3, 1.0, 2.5, 8.0].iter().map(|v| vec![*v]).collect();
    assert!(same_level_surfaces(&cp, 4.0, &half, 2.0, &z).unwrap().same);
    assert!(!same_level_surfaces(&cp, 4.0, &half, 3.0, &z).unwrap().same);
    assert!(!same_level_surfaces(&half, 1.0, &skew, 1.0, &z).unwrap().same);
    assert!(!same_level_surfaces(&cp, 0.25, &ss, 1.0, &z).unwrap().same);
}
