use std::collections::HashSet;

use proptest::prelude::*;

use mtcm_core::autodiff::{sigmoid, softmax};
use mtcm_core::encoder::train_vocab;
use mtcm_core::metrics::{auc, mean_std, region_wise_accuracy};
use mtcm_core::model::{build_pairs, RecordLatents};
use mtcm_core::rng::rng_from_seed;
use mtcm_core::scene::{generate_corpus, split_dataset, SceneConfig};
use mtcm_core::similarity::cosine;

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(any::<bool>(), n).prop_map(|mut l| {
                l[0] = true;
                l[1] = false;
                l
            }),
        )
    })
}

fn latents() -> impl Strategy<Value = Vec<RecordLatents>> {
    prop::collection::vec((1usize..6, 0usize..6), 1..30).prop_map(|shapes| {
        shapes
            .into_iter()
            .enumerate()
            .map(|(r, (n, gt))| RecordLatents {
                scene_id: r as u64,
                gt: gt % n,
                o_i: vec![r as f64, 0.5],
                o_v: (0..n).map(|k| vec![k as f64, 1.0]).collect(),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(xs in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let p = softmax(&xs);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_monotone_and_bounded(a in -40.0f64..40.0, b in -40.0f64..40.0) {
        let (sa, sb) = (sigmoid(a), sigmoid(b));
        prop_assert!((0.0..=1.0).contains(&sa));
        prop_assert!((sigmoid(-a) - (1.0 - sa)).abs() < 1e-12);
        if a < b {
            prop_assert!(sa <= sb);
        }
    }

    #[test]
    fn region_wise_accuracy_ignores_order(
        pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..80),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let (p, l): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng_from_seed(seed));
        let (ps, ls): (Vec<bool>, Vec<bool>) = shuffled.into_iter().unzip();
        let e = region_wise_accuracy(&p, &l).unwrap();
        prop_assert_eq!(e, region_wise_accuracy(&ps, &ls).unwrap());
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps((scores, labels) in scored_labels()) {
        let a = auc(&scores, &labels).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() * 2.0 + 1.0).collect();
        prop_assert!((a - auc(&mapped, &labels).unwrap()).abs() < 1e-12);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((a + auc(&flipped, &labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_is_bounded_and_scale_free(
        u in prop::collection::vec(-3.0f64..3.0, 4),
        v in prop::collection::vec(-3.0f64..3.0, 4),
        c in 0.1f64..10.0,
    ) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
        let k = cosine(&u, &v).unwrap();
        prop_assert!((-1.0..=1.0).contains(&k));
        let scaled: Vec<f64> = u.iter().map(|x| x * c).collect();
        prop_assert!((k - cosine(&scaled, &v).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn pair_sets_hold_one_positive_and_gamma_negatives(lat in latents(), gamma in 1usize..6, seed in any::<u64>()) {
        let set = build_pairs(&lat, gamma, &mut rng_from_seed(seed));
        let usable = lat.iter().filter(|l| l.o_v.len() >= 2).count();
        prop_assert_eq!(set.pairs.len(), usable * (1 + gamma));
        prop_assert_eq!(set.skipped, lat.len() - usable);
        for p in &set.pairs {
            prop_assert_eq!(p.positive, p.candidate == lat[p.record].gt);
            prop_assert!(p.candidate < lat[p.record].o_v.len());
        }
    }

    #[test]
    fn mean_std_bounds_the_values(xs in prop::collection::vec(-100.0f64..100.0, 1..30)) {
        let m = mean_std(&xs).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m.mean >= lo - 1e-9 && m.mean <= hi + 1e-9);
        prop_assert!(m.std >= 0.0);
    }

    #[test]
    fn subword_tokens_round_trip(text in "[a-zA-Z]{1,24}") {
        let vocab = train_vocab(&["put the green mug on the shelf", "bring me a spray bottle"], 80).unwrap();
        let tokens = vocab.tokenize(&text);
        prop_assert!(tokens.iter().all(|t| t.id < vocab.id_count()));
        prop_assert_eq!(vocab.detokenize(&tokens), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn splits_partition_records_by_scene(count in 20usize..200, seed in any::<u64>()) {
        let records = generate_corpus(&SceneConfig::default(), count, seed).unwrap();
        let split = split_dataset(&records, [0.6, 0.2, 0.2], seed).unwrap();
        let parts = split.parts();
        prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), count);
        let scenes: Vec<HashSet<u64>> = parts.iter().map(|p| p.iter().map(|r| r.scene_id).collect()).collect();
        for a in 0..3 {
            for b in a + 1..3 {
                prop_assert!(scenes[a].is_disjoint(&scenes[b]));
            }
        }
    }
}
