use super::*;
use crate::autodiff::grad_check_params;
use crate::optim::AdamConfig;
use crate::rng::rng_from_seed;
use crate::scene::{generate_corpus, Label};

fn small_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 40,
        d_emb: 4,
        d_h: 4,
        lstm_layers: 1,
        mlp_hidden: vec![6],
        d_lat: 4,
        target_hidden: 5,
        source_hidden: vec![4],
        ..ModelConfig::default()
    }
}

fn fixture(cfg: ModelConfig, records: usize, seed: u64) -> (MtcmModel, Vec<Sample>) {
    let scene_cfg = SceneConfig::default();
    let recs = generate_corpus(&scene_cfg, records, seed).unwrap();
    let texts: Vec<String> = recs.iter().map(|r| r.text.clone()).collect();
    let tok = build_tokenizer(&cfg, &texts).unwrap();
    let samples = prepare(&recs, &tok, cfg.head, &scene_cfg, seed);
    let dim = CandidateFeatures::joined_dim(&scene_cfg);
    let model = MtcmModel::new(cfg, tok, dim, &mut rng_from_seed(seed)).unwrap();
    (model, samples)
}

fn two_candidate(samples: &[Sample]) -> Sample {
    let mut s = samples.iter().find(|s| s.n() >= 2).unwrap().clone();
    let keep = [s.gt, (s.gt + 1) % s.n()];
    s.candidates = keep.iter().map(|&j| s.candidates[j].clone()).collect();
    s.targ = keep.iter().map(|&j| s.targ[j]).collect();
    s.src = keep.iter().map(|&j| s.src[j]).collect();
    s.likely = keep.iter().map(|&j| s.likely[j]).collect();
    s.siblings = s
        .siblings
        .iter()
        .filter(|k| k.gt == keep[1])
        .map(|k| Sibling { ids: k.ids.clone(), gt: 1 })
        .collect();
    s.gt = 0;
    s
}

#[test]
fn binary_head_outputs_a_distribution() {
    let (m, samples) = fixture(small_config(), 5, 1);
    for p in m.predict(&samples[0]).unwrap() {
        assert_eq!(p.y_targ.len(), 2);
        assert!((p.y_targ.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((p.y_src.unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(p.o_v.len(), p.o_i.len());
    }
}

#[test]
fn zero_parameters_give_uniform_outputs() {
    for head in [HeadArity::Binary, HeadArity::Labels] {
        let (mut m, samples) = fixture(ModelConfig { head, ..small_config() }, 5, 2);
        m.store.set_all(0.0);
        for p in m.predict(&samples[0]).unwrap() {
            let k = head.classes() as f64;
            assert!(p.y_targ.iter().all(|&v| (v - 1.0 / k).abs() < 1e-12));
            assert!(p.y_src.unwrap().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        }
    }
}

#[test]
fn prediction_is_bit_identical_across_runs() {
    let (a, s) = fixture(small_config(), 5, 3);
    let (b, _) = fixture(small_config(), 5, 3);
    assert_eq!(a.predict(&s[1]).unwrap(), b.predict(&s[1]).unwrap());
}

#[test]
fn cross_entropy_limits() {
    let mut g = Graph::new();
    let onehot = g.constant(&[0.0, 1.0]).unwrap();
    let l = cross_entropy(&mut g, onehot, 1).unwrap();
    assert_eq!(g.scalar(l), 0.0);
    for k in [2usize, 4, 7] {
        let u = g.constant(&vec![1.0 / k as f64; k]).unwrap();
        let l = cross_entropy(&mut g, u, 0).unwrap();
        assert!((g.scalar(l) - (k as f64).ln()).abs() < 1e-9);
    }
    let zero = g.constant(&[1.0, 0.0]).unwrap();
    let l = cross_entropy(&mut g, zero, 1).unwrap();
    assert!((g.scalar(l) + PROB_FLOOR.ln()).abs() < 1e-9);
}

#[test]
fn weighted_loss_matches_hand_computation() {
    let (m, samples) = fixture(small_config(), 6, 4);
    let batch: Vec<&Sample> = samples[..2].iter().collect();
    let mut g = Graph::new();
    let l = m.loss(&mut g, &batch, false).unwrap();
    let mut total = 0.0;
    let mut count = 0;
    for s in &batch {
        for (j, p) in m.predict(s).unwrap().iter().enumerate() {
            total += -p.y_targ[s.targ[j]].ln() - 0.7 * p.y_src.as_ref().unwrap()[s.src[j]].ln();
            count += 1;
        }
    }
    assert!((g.scalar(l) - total / count as f64).abs() < 1e-12);
}

#[test]
fn full_loss_gradient_on_two_candidates() {
    let (m, samples) = fixture(small_config(), 8, 5);
    let s = two_candidate(&samples);
    let model = m;
    let mut store = model.store.clone();
    let report = grad_check_params(
        &mut store,
        |g, st| {
            let mut local = model.clone();
            local.store = st.clone();
            local.loss(g, &[&s], false)
        },
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "max {} {:?}", report.max_rel_err, report.failures.first());
    assert_eq!(report.checked, model.store.count());
}

#[test]
fn zero_source_weight_zeroes_source_head_gradients() {
    let (mut m, samples) = fixture(ModelConfig { lambda2: 0.0, ..small_config() }, 6, 6);
    let batch: Vec<&Sample> = samples.iter().collect();
    let mut g = Graph::new();
    let l = m.loss(&mut g, &batch, false).unwrap();
    g.backward(l).unwrap();
    g.accumulate_param_grads(&mut m.store);
    let ids = m.source_head_param_ids();
    assert!(!ids.is_empty());
    assert_eq!(m.store.grad_norm(&ids), 0.0);
    assert!(m.store.grad_norm(&m.mlp_v.param_ids()) > 0.0);
}

#[test]
fn candidates_do_not_leak_into_each_other() {
    let (m, samples) = fixture(small_config(), 10, 7);
    let s = samples.iter().find(|s| s.n() >= 3).unwrap();
    let base = m.predict(s).unwrap();

    let mut perm = s.clone();
    perm.candidates.rotate_left(1);
    let rotated = m.predict(&perm).unwrap();
    for j in 0..s.n() {
        assert_eq!(rotated[j], base[(j + 1) % s.n()]);
    }

    let mut replaced = s.clone();
    replaced.candidates[1] = vec![0.3; m.input_dim()];
    let r = m.predict(&replaced).unwrap();
    assert_eq!(r[0], base[0]);
    assert_eq!(r[2], base[2]);
}

#[test]
fn argmax_survives_monotone_transforms() {
    let mut rng = rng_from_seed(8);
    for _ in 0..200 {
        let logits: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = crate::autodiff::softmax(&logits);
        let cubed: Vec<f64> = logits.iter().map(|x| x * x * x + 2.0 * x).collect();
        assert_eq!(argmax(&p), argmax(&crate::autodiff::softmax(&cubed)));
        assert_eq!(argmax(&p), argmax(&logits));
    }
    assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
}

#[test]
fn top1_equals_brute_force_scan() {
    let (m, samples) = fixture(small_config(), 20, 9);
    for s in &samples {
        let probs: Vec<f64> = m.predict(s).unwrap().iter().map(|p| p.y_targ[1]).collect();
        let mut best = 0;
        for j in 1..probs.len() {
            if probs[j] > probs[best] {
                best = j;
            }
        }
        assert_eq!(m.top1(s).unwrap(), best);
    }
}

#[test]
fn scorer_agrees_with_prediction() {
    let (m, samples) = fixture(small_config(), 4, 10);
    let s = &samples[0];
    for p in m.predict(s).unwrap() {
        assert_eq!(m.score(&p.o_v, &p.o_i).unwrap(), p.y_targ[1]);
    }
}

fn latents_for(ns: &[usize]) -> Vec<RecordLatents> {
    ns.iter()
        .enumerate()
        .flat_map(|(scene, &n)| {
            (0..n).map(move |gt| RecordLatents {
                scene_id: scene as u64,
                gt,
                o_i: vec![gt as f64],
                o_v: (0..n).map(|j| vec![j as f64]).collect(),
            })
        })
        .collect()
}

#[test]
fn pair_counts() {
    let l = latents_for(&[3]);
    let set = build_pairs(&l, 2, &mut rng_from_seed(0));
    assert_eq!(set.pairs.len(), 9);
    assert_eq!(set.pairs.iter().filter(|p| p.positive).count(), 3);
    let set = build_pairs(&l, 0, &mut rng_from_seed(0));
    assert!(set.pairs.iter().all(|p| p.positive) && set.pairs.len() == 3);
}

#[test]
fn negatives_never_reuse_the_target() {
    let l = latents_for(&[2, 3, 5, 4]);
    let mut rng = rng_from_seed(1);
    let mut seen = 0;
    while seen < 10_000 {
        for p in build_pairs(&l, 3, &mut rng).pairs {
            if !p.positive {
                assert_ne!(p.candidate, l[p.record].gt);
                seen += 1;
            }
        }
    }
}

#[test]
fn single_candidate_scenes_are_skipped() {
    let l = latents_for(&[1, 2]);
    let set = build_pairs(&l, 1, &mut rng_from_seed(0));
    assert_eq!(set.skipped, 1);
    assert_eq!(set.pairs.len(), 4);
    assert_eq!(build_pairs(&l, 0, &mut rng_from_seed(0)).skipped, 0);
}

#[test]
fn label_head_marks_a1_a2_as_positive() {
    assert_eq!(HeadArity::Labels.positive(&[0.1, 0.2, 0.3, 0.4]), 0.1 + 0.2);
    assert_eq!(Label::A2.index(), 1);
}

fn train_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        adam: AdamConfig::new(3e-3, 0.9, 0.999),
        patience: None,
        schedule: Default::default(),
    }
}

#[test]
fn one_epoch_smoke() {
    let (mut m, samples) = fixture(small_config(), 10, 11);
    let log = fit(&mut m, &samples, &[], &train_cfg(1), &mut rng_from_seed(0)).unwrap();
    assert_eq!(log.epochs.len(), 1);
    assert!(log.epochs[0].train_loss.is_finite());
}

#[test]
fn loss_falls_on_separable_corpus() {
    let mut curves = vec![0.0; 5];
    for seed in 0..3 {
        let (mut m, samples) = fixture(small_config(), 60, 20 + seed);
        let log = fit(&mut m, &samples, &[], &train_cfg(5), &mut rng_from_seed(seed)).unwrap();
        for (c, e) in curves.iter_mut().zip(&log.epochs) {
            *c += e.train_loss / 3.0;
        }
    }
    assert!(curves.windows(2).all(|w| w[1] < w[0]), "{curves:?}");
}

#[test]
fn non_finite_loss_aborts_with_diagnostic() {
    let (mut m, samples) = fixture(small_config(), 4, 12);
    let id = *m.target_head.param_ids().last().unwrap();
    m.store.get_mut(id).data.iter_mut().for_each(|x| *x = f64::NAN);
    let err = fit(&mut m, &samples, &[], &train_cfg(1), &mut rng_from_seed(0)).unwrap_err();
    assert!(matches!(err, Error::Diverged(ref d) if d.contains("gradient norm")), "{err}");
}

#[test]
fn cosine_schedule_starts_at_one_and_decays() {
    let f = |e| LrSchedule::Cosine.factor(e, 10);
    assert_eq!(f(1), 1.0);
    assert!((1..10).all(|e| f(e + 1) < f(e)));
    assert!(f(10) > 0.0);
    assert_eq!(LrSchedule::Constant.factor(7, 10), 1.0);
}
