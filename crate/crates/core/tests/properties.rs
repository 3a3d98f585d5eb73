use proptest::prelude::*;
use rand::Rng;

use thzcov::antenna::{
    mean_effective_gain, pointing_loss_cdf, side_lobe_gain, InterfererAntenna, PointingMode, PointingModel,
};
use thzcov::channel::{MftrModel, MftrParams};
use thzcov::curve::{fmt_sig, parse_grid};
use thzcov::geometry::{
    human_los_probability, los_mass, los_probability, nearest_los_cdf, nearest_los_quantile, wall_los_probability,
};
use thzcov::params::{derive_constants, load_scenario, Scenario};
use thzcov::simulate::trial_rng;
use thzcov::stats::wilson_interval;
use thzcov::Error;

fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    (
        (0.1e12..1.0e12f64, 0.0..0.01f64, 0.0..0.5f64, 0.1..0.4f64),
        (0.0..0.3f64, 0.0..0.1f64, 1.0..6.0f64),
        (2u32..65, 2u32..17, 0.0..3.0f64),
        (0.0..10.0f64, 0.5..20.0f64, 0.0..1.0f64, 1u32..4),
        0..=i64::MAX as u64,
    )
        .prop_map(|((f, eps_f, lambda_a, r_b), (lambda_b, lambda_w, mean_l_w), (n_a, n_u, sig), (k, m, delta, mu), seed)| {
            Scenario {
                f,
                eps_f,
                lambda_a,
                r_b,
                lambda_b,
                lambda_w,
                mean_l_w,
                n_a,
                n_u,
                sigma_theta_deg: sig,
                k,
                m,
                delta,
                mu,
                seed,
                ..Scenario::default()
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_toml_round_trips(s in scenario_strategy()) {
        let back = load_scenario(&s.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn oversized_seeds_are_rejected(seed in (i64::MAX as u64 + 1)..=u64::MAX) {
        let s = Scenario { seed, ..Scenario::default() };
        let checked = s.validate();
        prop_assert!(checked.is_err());
    }

    #[test]
    fn fading_cdf_is_a_distribution(
        k in 0.0..8.0f64,
        m in 0.5..30.0f64,
        delta in 0.0..1.0f64,
        mu in 1u32..4,
        h in proptest::collection::vec(0.0..20.0f64, 8),
    ) {
        // A slowly converging series is reported, never cut short.
        let model = match MftrModel::new(MftrParams { k, m, delta, mu }) {
            Ok(model) => model,
            Err(e) => {
                let truncated = matches!(e, Error::Truncation { .. });
                prop_assert!(truncated, "{}", e);
                return Ok(());
            }
        };
        let total: f64 = model.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(model.weights().iter().all(|&w| w >= 0.0));
        let mut h = h;
        h.sort_by(f64::total_cmp);
        let f: Vec<f64> = h.iter().map(|&x| model.cdf(x)).collect();
        prop_assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(f.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn moderate_fading_series_converge(k in 0.0..4.0f64, m in 1.0..30.0f64, delta in 0.0..1.0f64, mu in 1u32..3) {
        let built = MftrModel::new(MftrParams { k, m, delta, mu });
        prop_assert!(built.is_ok());
    }

    #[test]
    fn fading_laplace_is_completely_monotone(
        k in 0.0..4.0f64,
        m in 1.0..30.0f64,
        mu in 1u32..3,
        s1 in 0.0..50.0f64,
        ds in 0.0..50.0f64,
    ) {
        let model = MftrModel::new(MftrParams { k, m, delta: 0.3, mu }).unwrap();
        let l1 = model.laplace_factor(s1, 1.0);
        let l2 = model.laplace_factor(s1 + ds, 1.0);
        prop_assert!(l1 > 0.0 && l1 <= 1.0);
        prop_assert!(l2 <= l1 + 1e-15);
        prop_assert!((model.laplace_complement(s1, 1.0) + l1 - 1.0).abs() < 1e-12);
        prop_assert_eq!(model.laplace_factor(0.0, 1.0), 1.0);
    }

    #[test]
    fn los_probability_is_a_product_and_decreasing(
        s in scenario_strategy(),
        d in 0.0..60.0f64,
        dd in 0.0..20.0f64,
    ) {
        let c = derive_constants(&s);
        let p = los_probability(d, &c);
        let q = human_los_probability(d, &c) * wall_los_probability(d, &c);
        prop_assert!((p - q).abs() <= 1e-14);
        prop_assert!(los_probability(d + dd, &c) <= p);
        prop_assert!(los_mass(d + dd, &c, &s) >= los_mass(d, &c, &s));
    }

    #[test]
    fn nearest_los_quantile_inverts_cdf(s in scenario_strategy(), p in 0.01..0.99f64) {
        prop_assume!(s.lambda_a > 0.01);
        let c = derive_constants(&s);
        let total = 1.0 - (-thzcov::geometry::los_mass_total(&c, &s)).exp();
        prop_assume!(p < total * 0.999);
        let q = nearest_los_quantile(p, &c, &s).unwrap();
        prop_assert!((nearest_los_cdf(q, &c, &s) - p).abs() < 1e-7);
    }

    #[test]
    fn pointing_gain_never_exceeds_peak(n_a in 2u32..128, n_u in 2u32..32, sig in 0.0..5.0f64, h in 0.0..1.0f64) {
        let model = PointingModel::new(sig.to_radians(), n_a, n_u, PointingMode::Gaussian);
        let g_max = std::f64::consts::PI.powi(2) * (n_a * n_a * n_u * n_u) as f64;
        let g = mean_effective_gain(&model);
        prop_assert!(g > 0.0 && g <= g_max * (1.0 + 1e-12));
        if model.beta.is_finite() {
            let f = pointing_loss_cdf(h, model.beta).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn side_lobes_are_below_isotropic(n in 2u32..256) {
        let g = side_lobe_gain(n).unwrap();
        prop_assert!(g > 0.0 && g < 1.0);
    }

    #[test]
    fn interferer_pmf_is_normalized(s in scenario_strategy(), d0 in 0.1..20.0f64, extra in 0.0..50.0f64) {
        let c = derive_constants(&s);
        let ant = InterfererAntenna::new(&s, &c).unwrap();
        let pmf = ant.pmf(d0 + extra, d0, &c);
        let mass: f64 = pmf.iter().map(|(_, p)| p).sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert!(pmf.iter().all(|(g, p)| g > 0.0 && (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn grid_spans_its_endpoints(start in -20i32..20, n in 1usize..30, step in 1u32..5) {
        let stop = start + (n as i32) * step as i32;
        let spec = format!("{start}:{stop}:{step}");
        let g = parse_grid(&spec).unwrap();
        prop_assert_eq!(g.len(), n + 1);
        prop_assert!((g[0] - start as f64).abs() < 1e-12);
        prop_assert!((g[n] - stop as f64).abs() < 1e-9);
    }

    #[test]
    fn six_significant_digits(x in -1e9..1e9f64) {
        let back: f64 = fmt_sig(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs() + 1e-300);
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(n in 1usize..100_000, frac in 0.0..1.0f64) {
        let k = ((n as f64) * frac) as usize;
        let (lo, hi) = wilson_interval(k, n, 1.96);
        let p = k as f64 / n as f64;
        prop_assert!(lo >= 0.0 && hi <= 1.0);
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
    }

    #[test]
    fn trial_streams_depend_only_on_seed_and_index(seed in any::<u64>(), i in any::<u64>(), j in any::<u64>()) {
        let a: [u64; 4] = trial_rng(seed, i).random();
        let b: [u64; 4] = trial_rng(seed, i).random();
        prop_assert_eq!(a, b);
        if i != j {
            let c: [u64; 4] = trial_rng(seed, j).random();
            prop_assert_ne!(a, c);
        }
    }
}
