use proptest::prelude::*;

use xflex_core::banding::{assign_band, band_probs, Band, BandProbabilities, BandSpec};
use xflex_core::distributions::{
    dgamma_cdf, dgamma_quantile, dgamma_sample, dgp_cdf, dgp_pmf, dgp_sample, gp_cdf, DiscreteGammaParams, GpParams,
};
use xflex_core::ensemble::{combine, default_prob_grid, vincentize, MemberForecast, WeightSchedule, HRES_ID};
use xflex_core::quantile_model::{pinball_loss, smoothed_pinball};
use xflex_core::scoring::{auc, pinball, twcrps_sample};
use xflex_core::splice::{CountDistribution, PredictiveDistribution};
use xflex_core::spline::{SplineBasis, SplineSpec};

/// Closed-form GP survival `(1 + xi y / sigma)^(-1/xi)`, exponential at `xi = 0`.
fn survival(y: f64, sigma: f64, xi: f64) -> f64 {
    if xi == 0.0 {
        (-y / sigma).exp()
    } else {
        (1.0 + xi * y / sigma).max(0.0).powf(-1.0 / xi)
    }
}

fn spliced() -> impl Strategy<Value = PredictiveDistribution> {
    (
        0.0f64..5.0,
        prop::collection::vec(0.0f64..8.0, 3),
        prop::sample::select(vec![0.75, 0.8, 0.9, 0.95]),
        0.3f64..20.0,
        -0.45f64..0.9,
    )
        .prop_map(|(q0, gaps, alpha_t, sigma, xi)| {
            let mut q = vec![(0.05, q0)];
            for (a, g) in [0.25, 0.5, alpha_t].into_iter().zip(gaps) {
                let prev = q.last().unwrap().1;
                q.push((a, prev + g));
            }
            PredictiveDistribution::spliced(&q, alpha_t, GpParams::new(sigma, xi).unwrap()).unwrap()
        })
}

fn triple() -> impl Strategy<Value = BandProbabilities> {
    (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        BandProbabilities { green: lo, amber: hi - lo, red: 1.0 - hi }
    })
}

proptest! {
    #[test]
    fn dgp_mass_plus_analytic_tail_is_one(sigma in 0.1f64..50.0, xi in 0.0f64..1.0, k_max in 1u64..2000) {
        let g = GpParams::new(sigma, xi).unwrap();
        let head: f64 = (0..k_max).map(|k| dgp_pmf(k, &g)).sum();
        prop_assert!((head + survival(k_max as f64, sigma, xi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dgp_cdf_nondecreasing_and_bounded(sigma in 0.1f64..50.0, xi in -0.5f64..1.0) {
        let g = GpParams::new(sigma, xi).unwrap();
        let mut prev = 0.0;
        for k in 0..500 {
            let c = dgp_cdf(k, &g);
            prop_assert!(c >= prev && c <= 1.0);
            prev = c;
        }
    }

    #[test]
    fn gp_branch_switch_is_continuous(y in 0.0f64..100.0, sigma in 0.1f64..50.0) {
        let at_zero = 1.0 - (-y / sigma).exp();
        for xi in [1e-12, -1e-12] {
            prop_assert!((gp_cdf(y, &GpParams::new(sigma, xi).unwrap()).unwrap() - at_zero).abs() < 1e-8);
        }
    }

    #[test]
    fn dgamma_quantile_inverts_cdf(kappa in 0.2f64..20.0, lambda in 0.1f64..30.0, k in 0u64..200) {
        let p = DiscreteGammaParams::new(kappa, lambda).unwrap();
        let c = dgamma_cdf(k, &p);
        let below = if k == 0 { 0.0 } else { dgamma_cdf(k - 1, &p) };
        prop_assume!(c > below && c < 1.0);
        prop_assert_eq!(dgamma_quantile(c, &p).unwrap(), k);
    }

    #[test]
    fn sampling_is_a_function_of_params_and_seed(seed in any::<u64>(), n in 0usize..200) {
        let g = GpParams::new(2.5, 0.3).unwrap();
        prop_assert_eq!(dgp_sample(n, &g, seed), dgp_sample(n, &g, seed));
        let d = DiscreteGammaParams::new(1.5, 4.0).unwrap();
        prop_assert_eq!(dgamma_sample(n, &d, seed), dgamma_sample(n, &d, seed));
    }

    #[test]
    fn spline_partition_of_unity(values in prop::collection::vec(-50.0f64..50.0, 40..120), x in -80.0f64..80.0) {
        let b = SplineBasis::from_values(&values, &SplineSpec::new("x")).unwrap();
        prop_assert!((b.evaluate(x).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn knots_depend_only_on_the_multiset(mut values in prop::collection::vec(-50.0f64..50.0, 40..120), rot in 0usize..40) {
        let a = SplineBasis::from_values(&values, &SplineSpec::new("x")).unwrap();
        values.reverse();
        let r = rot % values.len();
        values.rotate_left(r);
        let b = SplineBasis::from_values(&values, &SplineSpec::new("x")).unwrap();
        prop_assert_eq!(a.knots, b.knots);
    }

    #[test]
    fn smoothing_gap_is_bounded(u in -50.0f64..50.0, alpha in 0.01f64..0.99, lambda in 0.001f64..2.0, sigma in 0.1f64..10.0) {
        // the loss carries a 1/sigma factor, so the bound applies to sigma times it
        let gap = sigma * smoothed_pinball(u, alpha, lambda, sigma) - pinball_loss(u, alpha);
        let tol = 1e-12 * (1.0 + u.abs());
        prop_assert!(gap >= -tol && gap <= lambda * sigma * std::f64::consts::LN_2 + tol);
    }

    #[test]
    fn spliced_quantile_and_cdf_invert(d in spliced()) {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let q = d.quantile(p).unwrap() as i64;
            prop_assert!(d.cdf(q) >= p);
            prop_assert!(q == 0 || d.cdf(q - 1) < p);
        }
    }

    #[test]
    fn spliced_cdf_matches_bulk_below_the_transition(d in spliced()) {
        let ceil = d.tail.as_ref().map_or(i64::MAX, |t| t.ceil);
        for y in 0..ceil.min(1000) {
            prop_assert_eq!(d.cdf(y), d.bulk_cdf(y));
        }
    }

    #[test]
    fn band_interval_two_ways(d in spliced(), ag in 1u64..60, width in 1u64..80) {
        let spec = BandSpec::new(ag, ag + width).unwrap();
        let p = band_probs(&d, &spec);
        let green: f64 = (0..=ag as i64).map(|y| d.pmf(y)).sum();
        let amber: f64 = (ag as i64 + 1..=(ag + width) as i64).map(|y| d.pmf(y)).sum();
        prop_assert!((p.green - green).abs() < 1e-10);
        prop_assert!((p.amber - amber).abs() < 1e-10);
        prop_assert!((p.green + p.amber + p.red - 1.0).abs() < 1e-10);
    }

    #[test]
    fn combined_quantiles_nondecreasing_and_weight_free(ds in prop::collection::vec(spliced(), 2..6), lead in 0i64..120, c in 0.1f64..10.0) {
        let members: Vec<MemberForecast> = ds
            .into_iter()
            .enumerate()
            .map(|(i, dist)| MemberForecast { member_id: i as u32, lead_hours: lead, dist })
            .collect();
        let grid = default_prob_grid();
        let s = WeightSchedule::default();
        let scaled = WeightSchedule { hres_weight_at_0: c * s.hres_weight_at_0, member_weight: c * s.member_weight, ..s };
        let a = combine(&members, &s, &grid).unwrap();
        let b = combine(&members, &scaled, &grid).unwrap();
        let qa: Vec<u64> = grid.iter().map(|&p| a.quantile(p).unwrap()).collect();
        let qb: Vec<u64> = grid.iter().map(|&p| b.quantile(p).unwrap()).collect();
        prop_assert!(qa.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(qa, qb);
    }

    #[test]
    fn hres_is_an_ordinary_member_beyond_72h(ds in prop::collection::vec(spliced(), 2..5), lead in 73i64..240) {
        let with_hres: Vec<MemberForecast> = ds
            .iter()
            .enumerate()
            .map(|(i, d)| MemberForecast { member_id: HRES_ID + i as u32, lead_hours: lead, dist: d.clone() })
            .collect();
        let relabelled: Vec<MemberForecast> = ds
            .iter()
            .enumerate()
            .map(|(i, d)| MemberForecast { member_id: 100 + i as u32, lead_hours: lead, dist: d.clone() })
            .collect();
        let grid = default_prob_grid();
        let a = combine(&with_hres, &WeightSchedule::default(), &grid).unwrap();
        let b = combine(&relabelled, &WeightSchedule::default(), &grid).unwrap();
        for y in 0..200 {
            prop_assert_eq!(a.cdf(y), b.cdf(y));
        }
    }

    #[test]
    fn vincentization_scales_and_ignores_weight_scale(
        q in prop::collection::vec(0.0f64..100.0, 1..10),
        c in 0.1f64..10.0,
        k in 0.1f64..10.0,
    ) {
        let w: Vec<f64> = (0..q.len()).map(|i| 1.0 + i as f64).collect();
        let base = vincentize(&q, &w);
        let cq: Vec<f64> = q.iter().map(|v| c * v).collect();
        let kw: Vec<f64> = w.iter().map(|v| k * v).collect();
        prop_assert!((vincentize(&cq, &w) - c * base).abs() < 1e-9 * (1.0 + base.abs()));
        prop_assert!((vincentize(&q, &kw) - base).abs() < 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn band_probs_sum_to_one(d in spliced(), ag in 1u64..60, width in 1u64..80) {
        let p = band_probs(&d, &BandSpec::new(ag, ag + width).unwrap());
        prop_assert!((p.green + p.amber + p.red - 1.0).abs() < 1e-10);
        prop_assert!(p.as_array().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn band_depends_only_on_rule_region(p in triple(), eps in -0.02f64..0.02) {
        let band = assign_band(&p);
        // move mass between the two bands the firing rule does not look at
        let moved = match band {
            Band::Green if p.green > 0.8 => {
                let d = eps.clamp(-p.amber, p.red);
                Some(BandProbabilities { green: p.green, amber: p.amber + d, red: p.red - d })
            }
            Band::Red if p.green <= 0.8 && p.red > 0.2 => {
                let d = eps.clamp(-p.amber, p.green);
                let g = p.green - d;
                (g <= 0.8).then_some(BandProbabilities { green: g, amber: p.amber + d, red: p.red })
            }
            _ => None,
        };
        if let Some(q) = moved {
            prop_assert_eq!(assign_band(&q), band);
        }
    }

    #[test]
    fn heavier_forecasts_never_move_toward_green(p in triple(), dg in 0.0f64..0.3, dr in 0.0f64..0.3) {
        let f_ag = (p.green - dg).max(0.0);
        let f_ra = (p.green + p.amber - dr).max(f_ag);
        let q = BandProbabilities { green: f_ag, amber: f_ra - f_ag, red: 1.0 - f_ra };
        let fires = |t: &BandProbabilities| t.green > 0.8 || t.red > 0.2 || t.amber > t.red;
        prop_assume!(fires(&p) && fires(&q));
        prop_assert!(assign_band(&q) >= assign_band(&p));
    }

    #[test]
    fn twcrps_nonneg_permutation_free_and_monotone_in_a(
        mut s in prop::collection::vec(0u64..60, 2..40),
        y in 0u64..60,
        a in -5.0f64..70.0,
        da in 0.0f64..20.0,
    ) {
        let v = twcrps_sample(&s, y, a);
        prop_assert!(v >= 0.0);
        s.reverse();
        s.rotate_left(1);
        prop_assert!((twcrps_sample(&s, y, a) - v).abs() < 1e-12);
        prop_assert!(twcrps_sample(&s, y, a + da) <= v + 1e-12);
    }

    #[test]
    fn auc_invariant_under_increasing_maps(raw in prop::collection::vec((0u32..50, any::<bool>()), 2..80)) {
        let s: Vec<f64> = raw.iter().map(|(v, _)| *v as f64 / 50.0).collect();
        let l: Vec<bool> = raw.iter().map(|(_, b)| *b).collect();
        let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
        prop_assert_eq!(auc(&s, &l), auc(&t, &l));
    }

    #[test]
    fn median_pinball_is_half_absolute_error(y in 0.0f64..1000.0, q in 0.0f64..1000.0) {
        prop_assert!((pinball(y, q, 0.5) - 0.5 * (y - q).abs()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spliced_cdf_nondecreasing_to_a_million(d in spliced()) {
        let mut prev = 0.0;
        for y in 0..1_000_000 {
            let c = d.cdf(y);
            prop_assert!(c >= prev);
            prev = c;
        }
        prop_assert!(prev <= 1.0);
    }
}

#[test]
fn modal_fallback_can_move_a_heavier_forecast_to_green() {
    let p = BandProbabilities { green: 0.79, amber: 0.20, red: 0.01 };
    let heavier = BandProbabilities { green: 0.60, amber: 0.20, red: 0.20 };
    assert_eq!(assign_band(&p), Band::Amber);
    assert_eq!(assign_band(&heavier), Band::Green);
}
