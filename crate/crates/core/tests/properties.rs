use ews_core::models::{
    attracting_branch, drift, fold_point_stommel, linearization, Bifurcation, ModelKind,
};
use ews_core::noise::{
    generate_brownian, generate_ou, FbmGenerator, NoiseSource, NoiseSpec, OuStart, RngStream,
    RosenblattGenerator, TruncationConfig,
};
use ews_core::theory::{
    scaling_exponent, v_infinity, v_infinity_coloured, v_infinity_volterra, v_infinity_volterra_alpha,
    v_infinity_white, solve_lyapunov_2x2, lyapunov_residual_2x2,
};
use proptest::prelude::*;

const STOMMEL: ModelKind = ModelKind::StommelCessi { eta2: 7.5 };

fn normal_forms() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::Fold),
        Just(ModelKind::Transcritical),
        Just(ModelKind::Pitchfork)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn normal_form_manifold_is_consistent(m in normal_forms(), y in -10.0f64..-1e-9) {
        let x = attracting_branch(&m, y).unwrap();
        prop_assert!(drift(&m, x, y).abs() <= 1e-12 * (1.0 + y.abs()));
        prop_assert!(linearization(&m, y).unwrap() < 0.0);
    }

    #[test]
    fn stommel_manifold_is_consistent(d in 1e-9f64..3.0) {
        let y = fold_point_stommel(7.5).unwrap().y_star + d;
        let x = attracting_branch(&STOMMEL, y).unwrap();
        prop_assert!(drift(&STOMMEL, x, y).abs() < 1e-12);
        prop_assert!(linearization(&STOMMEL, y).unwrap() < 0.0);
    }

    #[test]
    fn variances_grow_as_a_vanishes(a in -10.0f64..-1e-6, shrink in 0.01f64..0.99, h in 0.51f64..0.99, tau in 1e-3f64..10.0) {
        let b = a * shrink;
        prop_assert!(v_infinity_white(0.1, b).unwrap() > v_infinity_white(0.1, a).unwrap());
        prop_assert!(v_infinity_volterra(0.1, h, b).unwrap() > v_infinity_volterra(0.1, h, a).unwrap());
        let (cb, ca) = (v_infinity_coloured(0.1, tau, b).unwrap(), v_infinity_coloured(0.1, tau, a).unwrap());
        prop_assert!(cb > ca);
        prop_assert!(cb <= 0.01 * tau / 2.0);
    }

    #[test]
    fn volterra_forms_agree(alpha in 0.01f64..0.49, a in -50.0f64..-1e-3, sigma in 0.0f64..2.0) {
        let v = v_infinity_volterra(sigma, alpha + 0.5, a).unwrap();
        let w = v_infinity_volterra_alpha(sigma, alpha, a).unwrap();
        prop_assert!((v - w).abs() <= 1e-12 * v.abs());
    }

    #[test]
    fn lyapunov_residual_vanishes(a in -50.0f64..-1e-3, sigma in 0.0f64..1.0, tau in 1e-2f64..10.0) {
        let c = solve_lyapunov_2x2(a, sigma, tau).unwrap();
        let scale = 1.0f64.max(1.0 / tau).max(a.abs()) * c[1][1].max(1.0);
        prop_assert!(lyapunov_residual_2x2(a, sigma, tau, &c) < 1e-14 * scale);
    }

    #[test]
    fn generators_are_reproducible(seed in any::<u64>(), idx in 0u64..1000) {
        let s = RngStream::new(seed, idx);
        prop_assert_eq!(generate_brownian(64, 0.01, &s).unwrap(), generate_brownian(64, 0.01, &s).unwrap());
        prop_assert_eq!(
            generate_ou(0.3, 64, 0.01, &s, OuStart::Stationary).unwrap(),
            generate_ou(0.3, 64, 0.01, &s, OuStart::Stationary).unwrap()
        );
        let g = FbmGenerator::new(0.7, 64, 0.01).unwrap();
        prop_assert_eq!(g.sample(&s), g.sample(&s));
    }
}

#[test]
fn lyapunov_residual_reference_values() {
    let c = solve_lyapunov_2x2(-1.0, 0.01, 0.05).unwrap();
    assert!(lyapunov_residual_2x2(-1.0, 0.01, 0.05, &c) < 1e-14);
}

#[test]
fn fold_exponent_is_half_the_pitchfork_exponent() {
    for n in [
        NoiseSpec::White,
        NoiseSpec::fbm(0.6).unwrap(),
        NoiseSpec::rosenblatt(0.83).unwrap(),
        NoiseSpec::coloured(0.05).unwrap(),
    ] {
        let pf = scaling_exponent(&n, Bifurcation::Pitchfork);
        assert_eq!(scaling_exponent(&n, Bifurcation::Fold), pf / 2.0);
        assert_eq!(scaling_exponent(&n, Bifurcation::Transcritical), pf);
    }
}

#[test]
fn theory_is_affine_in_log_log() {
    // exact differencing over a decade for each normal form
    for n in [NoiseSpec::White, NoiseSpec::fbm(0.9).unwrap(), NoiseSpec::fbm(0.6).unwrap()] {
        for b in Bifurcation::ALL {
            let m = ModelKind::normal_form(b);
            let v = |y: f64| v_infinity(&n, 0.01, linearization(&m, y).unwrap()).unwrap();
            for y in [-0.5f64, -0.05] {
                // d = |y| shrinks by a factor 10
                let slope = (v(y / 10.0).ln() - v(y).ln()) / -(10f64.ln());
                let expected = scaling_exponent(&n, b);
                assert!((slope - expected).abs() < 1e-12, "{n} {b}: {slope} vs {expected}");
            }
        }
    }
}

#[test]
fn coloured_stays_below_its_limit() {
    for a in [-1.0, -1e-3, -1e-9] {
        assert!(v_infinity_coloured(0.01, 0.05, a).unwrap() < 2.5e-6);
    }
    assert!(v_infinity_white(0.01, -1e-9).unwrap() > 1.0);
}

#[test]
fn noise_sources_ignore_thread_layout() {
    let trunc = TruncationConfig::default();
    let specs = [
        NoiseSpec::White,
        NoiseSpec::coloured(0.1).unwrap(),
        NoiseSpec::fbm(0.8).unwrap(),
        NoiseSpec::rosenblatt(0.8).unwrap(),
    ];
    for spec in specs {
        let src = NoiseSource::prepare(&spec, 200, 0.01, &trunc).unwrap();
        let draw = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                use rayon::prelude::*;
                (0..16u64)
                    .into_par_iter()
                    .map(|i| {
                        let mut v = vec![0.0; 200];
                        src.fill_increments(&RngStream::new(9, i), &mut v);
                        v
                    })
                    .collect::<Vec<_>>()
            })
        };
        assert_eq!(draw(1), draw(3), "{spec}");
    }
}

#[test]
fn fbm_and_rosenblatt_increments_are_stationary() {
    // second moments of increments over disjoint windows agree within MC error
    let (n, dt, m) = (200, 0.01, 2000u64);
    let fbm = FbmGenerator::new(0.8, n, dt).unwrap();
    let ros = RosenblattGenerator::new(0.8, n, dt, &TruncationConfig::default()).unwrap();
    for (name, sample) in [
        ("fbm", Box::new(|s: &RngStream| fbm.sample(s)) as Box<dyn Fn(&RngStream) -> _>),
        ("rosenblatt", Box::new(|s: &RngStream| ros.sample(s))),
    ] {
        let (mut early, mut late) = (Vec::new(), Vec::new());
        for p in 0..m {
            let path = sample(&RngStream::new(21, p));
            early.push((path.values[50] - path.values[0]).powi(2));
            late.push((path.values[200] - path.values[150]).powi(2));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64]| {
            let mu = mean(v);
            (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt()
        };
        let diff = (mean(&early) - mean(&late)).abs();
        let se = (sd(&early).powi(2) + sd(&late).powi(2)).sqrt();
        assert!(diff < 4.0 * se, "{name}: {diff} vs se {se}");
        let expected = (50.0 * dt).powf(1.6);
        assert!((mean(&early) / expected - 1.0).abs() < 0.15, "{name}: {}", mean(&early));
    }
}
