use condstein::cli::{format_samples, parse_samples};
use condstein::discrepancy::stein_identity_check;
use condstein::measures::{bin_samples, joint_table};
use condstein::oracle::tv_exact;
use condstein::{BivariateSource, ConditionalModel, FiniteLaw, SampleSet, TargetFamily};
use proptest::prelude::*;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let t: f64 = w.iter().sum();
        w.into_iter().map(|v| v / t).collect()
    })
}

fn family() -> impl Strategy<Value = TargetFamily> {
    prop_oneof![
        (-5.0f64..5.0, 0.1f64..4.0).prop_map(|(m, v)| TargetFamily::gaussian(m, v).unwrap()),
        (0.1f64..20.0).prop_map(|l| TargetFamily::poisson(l).unwrap()),
        (0.3f64..6.0, 0.2f64..3.0).prop_map(|(a, b)| TargetFamily::gamma(a, b).unwrap()),
        (1usize..5).prop_flat_map(weights).prop_map(|w| {
            let s = (0..w.len()).map(|i| i as f64 * 0.5).collect();
            TargetFamily::finite(FiniteLaw::new(s, w).unwrap())
        }),
    ]
}

fn model() -> impl Strategy<Value = ConditionalModel> {
    (1usize..4).prop_flat_map(|k| (weights(k), prop::collection::vec(family(), k))).prop_map(|(w, fams)| {
        let ys = (0..w.len()).map(|i| i as f64).collect();
        ConditionalModel::new(FiniteLaw::new(ys, w).unwrap(), fams).unwrap()
    })
}

/// Model with finite-discrete families on {0, 1, 2} only.
fn finite_model(k: usize) -> impl Strategy<Value = ConditionalModel> {
    (weights(k), prop::collection::vec(weights(3), k)).prop_map(|(w, conds)| {
        let ys = (0..w.len()).map(|i| i as f64).collect();
        let fams = conds
            .into_iter()
            .map(|c| TargetFamily::finite(FiniteLaw::new(vec![0.0, 1.0, 2.0], c).unwrap()))
            .collect();
        ConditionalModel::new(FiniteLaw::new(ys, w).unwrap(), fams).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_json_round_trips(m in model()) {
        let text = serde_json::to_string(&m).unwrap();
        let back: ConditionalModel = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn sample_text_round_trips(pairs in prop::collection::vec((-1e6f64..1e6, -50.0f64..50.0), 1..50)) {
        let s = SampleSet::new(pairs, "prop").unwrap();
        let back = parse_samples(&format_samples(&s), "prop").unwrap();
        prop_assert_eq!(back.pairs(), s.pairs());
    }

    #[test]
    fn identity_holds_on_random_finite_pairs(
        (m, alt) in (1usize..4).prop_flat_map(|k| (finite_model(k), finite_model(k))),
        ax in 0.0f64..2.0, bx in 0.0f64..2.0, ay in 0.0f64..3.0,
    ) {
        // share μ_Y so the joint's y-marginal matches the model
        let alt = ConditionalModel::new(m.y_weights().clone(), alt.families().to_vec()).unwrap();
        let joint = joint_table(&alt).unwrap();
        let h = BivariateSource::rectangle(ax.min(bx) - 0.5, ax.max(bx), -0.5, ay);
        let (lhs, rhs) = stein_identity_check(&joint, &m, &h).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn tv_is_a_bounded_symmetric_distance(a in finite_model(2), b in finite_model(3)) {
        let (ja, jb) = (joint_table(&a).unwrap(), joint_table(&b).unwrap());
        let ab = tv_exact(&ja, &jb);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, tv_exact(&jb, &ja));
        prop_assert_eq!(tv_exact(&ja, &ja), 0.0);
    }

    #[test]
    fn binning_conserves_and_centres(
        pairs in prop::collection::vec((-3.0f64..3.0, -2.0f64..12.0), 1..200),
        mut edges in prop::collection::btree_set(0i32..100, 2..8),
    ) {
        let edges: Vec<f64> = std::mem::take(&mut edges).into_iter().map(|e| e as f64 / 10.0).collect();
        let s = SampleSet::new(pairs.clone(), "prop").unwrap();
        let inside = pairs.iter().filter(|p| p.1 >= edges[0] && p.1 <= edges[edges.len() - 1]).count();
        let Ok(binned) = bin_samples(&s, &edges) else {
            prop_assert_eq!(inside, 0);
            return Ok(());
        };
        prop_assert_eq!(binned.samples.len(), inside);
        prop_assert_eq!(binned.samples.len() + binned.out_of_range, pairs.len());
        let mids: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        for &(_, y) in binned.samples.pairs() {
            prop_assert!(mids.contains(&y));
        }
        for (b, mid) in mids.iter().enumerate() {
            let hit = binned.samples.pairs().iter().any(|p| p.1 == *mid);
            prop_assert_eq!(hit, !binned.empty_bins.contains(&b));
        }
    }
}

proptest! {
    #[test]
    fn number_formatting_round_trips(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let text = condstein::cli::format_number(v);
        prop_assert_eq!(text.parse::<f64>().unwrap().to_bits(), v.to_bits());
        prop_assert!(text.len() <= 24, "{}", text);
    }
}
