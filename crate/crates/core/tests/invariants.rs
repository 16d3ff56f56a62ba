use lattice_edgeworth::bootstrap::{bootstrap_quantile, ResampleScheme, SampleSet};
use lattice_edgeworth::edgeworth::{full_expansion, BlockingConfig, Variant};
use lattice_edgeworth::lattice::{exact_sum_distribution, LatticeLaw, MeanSumModel, StandardizedOracle};
use lattice_edgeworth::number_theory::{
    continued_fraction, convergents, nearest_int_distance, plan_sample_sizes, type_sum, IrrationalSpec, PlanMode,
};
use lattice_edgeworth::numeric::normal_cdf;
use lattice_edgeworth::rng::StreamKey;
use proptest::prelude::*;

fn law(probs: &[f64]) -> LatticeLaw {
    let total: f64 = probs.iter().sum();
    LatticeLaw::new(0.0, 1.0, probs.iter().enumerate().map(|(i, p)| (i as i64, p / total))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_moments_match_model(
        p in 0.05f64..0.95,
        q in proptest::collection::vec(0.05f64..1.0, 2..5),
        n1 in 1u64..15,
        n2 in 1u64..15,
    ) {
        let m = MeanSumModel::from_laws([(LatticeLaw::bernoulli(p).unwrap(), n1), (law(&q), n2)]).unwrap();
        let d = exact_sum_distribution(&m).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!((d.mean() - m.mean()).abs() < 1e-12);
        prop_assert!((d.variance() - m.variance()).abs() < 1e-12 * m.variance().max(1.0));
    }

    #[test]
    fn standardized_law_ignores_offsets(shift in -20i32..20, x in -3.0f64..3.0, n in 2u64..20) {
        let base = MeanSumModel::from_laws([(law(&[0.2, 0.5, 0.3]), n), (LatticeLaw::bernoulli(0.3).unwrap(), n + 3)]).unwrap();
        let moved_law = LatticeLaw::new(shift as f64 * 0.5, 1.0, [(0, 0.2), (1, 0.5), (2, 0.3)]).unwrap();
        let moved = MeanSumModel::from_laws([(moved_law, n), (LatticeLaw::bernoulli(0.3).unwrap(), n + 3)]).unwrap();
        let a = StandardizedOracle::new(&base).unwrap().cdf(x);
        let b = StandardizedOracle::new(&moved).unwrap().cdf(x);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn span_is_reduced_to_maximal(k in 2i64..7, p in 0.1f64..0.9) {
        let wide = LatticeLaw::new(1.0, 0.5, [(0, p), (k, 1.0 - p)]).unwrap();
        prop_assert_eq!(wide.span(), 0.5 * k as f64);
        prop_assert_eq!(wide.atoms(), &[(0, p), (1, 1.0 - p)][..]);
    }

    #[test]
    fn expansions_reach_normal_tails(direct in any::<bool>(), n1 in 5u64..60, n2 in 5u64..60) {
        // the blocked form is left out: with very unequal sizes its Taylor
        // blocks outrun the Gaussian and it is not a tail approximation
        let variant = if direct { Variant::TwoSampleDirect } else { Variant::Smooth };
        let m = MeanSumModel::from_laws([(LatticeLaw::bernoulli(0.4).unwrap(), n1), (LatticeLaw::bernoulli(0.6).unwrap(), n2)]).unwrap();
        let cfg = BlockingConfig::default();
        for x in [-9.0, 9.0] {
            let e = full_expansion(&m, x, variant, &cfg).unwrap();
            prop_assert!((e.total - normal_cdf(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn nearest_int_rule_rounds(n_max in 2u64..400) {
        let rho = IrrationalSpec::named("sqrt2").unwrap();
        let plan = plan_sample_sizes(&rho, n_max, PlanMode::NearestInt).unwrap();
        prop_assert_eq!(plan.pairs.len() as u64, n_max - 1);
        for p in &plan.pairs {
            prop_assert!((p.n2 as f64 - std::f64::consts::SQRT_2 * p.n1 as f64).abs() <= 0.5);
        }
    }

    #[test]
    fn nearest_int_distance_is_periodic_and_even(x in -1e6f64..1e6) {
        let d = nearest_int_distance(x);
        prop_assert!((0.0..=0.5).contains(&d));
        prop_assert!((d - nearest_int_distance(x + 1.0)).abs() < 1e-9);
        prop_assert_eq!(d, nearest_int_distance(-x));
    }

    #[test]
    fn quantile_is_shift_invariant(seed in 0u64..1000, shift in -3i64..4) {
        let model = MeanSumModel::from_laws([(LatticeLaw::bernoulli(0.4).unwrap(), 12), (law(&[0.3, 0.3, 0.4]), 9)]).unwrap();
        let data = SampleSet::draw(&model, &mut StreamKey::new(seed, 0).replicate(0));
        let moved_law = LatticeLaw::new(shift as f64, 1.0, [(0, 0.4), (1, 0.6)]).unwrap();
        let moved_model = MeanSumModel::from_laws([(moved_law, 12), (law(&[0.3, 0.3, 0.4]), 9)]).unwrap();
        let values: Vec<Vec<f64>> = data
            .samples()
            .iter()
            .enumerate()
            .map(|(j, s)| s.values().map(|v| if j == 0 { v + shift as f64 } else { v }).collect())
            .collect();
        let moved = SampleSet::from_values(&moved_model, &values).unwrap();
        let key = StreamKey::new(seed, 1);
        let a = bootstrap_quantile(&data, 0.9, 99, ResampleScheme::Nonparametric, &mut key.replicate(0)).unwrap();
        let b = bootstrap_quantile(&moved, 0.9, 99, ResampleScheme::Nonparametric, &mut key.replicate(0)).unwrap();
        prop_assert_eq!(a.s_hat, b.s_hat);
    }
}

#[test]
fn convergent_denominators_satisfy_dirichlet() {
    for name in IrrationalSpec::names() {
        let spec = IrrationalSpec::named(name).unwrap();
        let cs = convergents(&continued_fraction(&spec, 20).unwrap()).unwrap();
        for c in &cs {
            assert!(spec.high_precision().nearest_int_distance_of_multiple(c.q as u64) < 1.0 / c.q as f64);
        }
        if spec.claimed_type != Some(1.0) {
            continue;
        }
        // growth of denominators is geometric on average, quotient by quotient it varies
        for w in cs.windows(2).skip(1) {
            let ratio = w[1].q as f64 / w[0].q as f64;
            assert!((1.0..=20.0).contains(&ratio), "{name}: {ratio}");
        }
    }
}

#[test]
fn golden_type_sum_grows_slowly() {
    let golden = IrrationalSpec::named("golden").unwrap();
    let s: Vec<f64> = [100u64, 1000, 10_000].iter().map(|&m| type_sum(&golden, m).unwrap()).collect();
    for w in s.windows(2) {
        let slope = (w[1] / w[0]).log10();
        assert!(slope <= 1.3, "log-log slope {slope}");
    }
}
