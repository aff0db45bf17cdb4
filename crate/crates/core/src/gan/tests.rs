use super::*;
use crate::autodiff::grad_check_param_ids;
use crate::rng::rng_from_seed;

fn latents(records: usize, d_lat: usize, seed: u64) -> Vec<RecordLatents> {
    let mut rng = rng_from_seed(seed);
    (0..records)
        .map(|r| {
            let n = rng.random_range(2..5);
            let gt = rng.random_range(0..n);
            let o_i: Vec<f64> = (0..d_lat).map(|_| rng.random_range(-2.0..2.0)).collect();
            let o_v = (0..n)
                .map(|k| {
                    if k == gt {
                        o_i.iter().map(|x| x + rng.random_range(-0.1..0.1)).collect()
                    } else {
                        (0..d_lat).map(|_| rng.random_range(-2.0..2.0)).collect()
                    }
                })
                .collect();
            RecordLatents {
                scene_id: r as u64,
                gt,
                o_i,
                o_v,
            }
        })
        .collect()
}

fn small(mode: GanMode) -> GanConfig {
    GanConfig {
        mode,
        d_z: 3,
        g_hidden: vec![5],
        d_hidden: vec![4, 3],
        batch_size: 8,
        epochs: 2,
        ..GanConfig::default()
    }
}

fn build(mode: GanMode, seed: u64) -> (Gan, Vec<RecordLatents>) {
    let lat = latents(20, 3, seed);
    let scaler = LatentScaler::fit(&lat, 0.95).unwrap();
    (Gan::new(small(mode), scaler, &mut rng_from_seed(seed)).unwrap(), lat)
}

fn batch(gan: &Gan, lat: &[RecordLatents], labels: &[bool], seed: u64) -> GanBatch {
    let mut rng = rng_from_seed(seed);
    let picks: Vec<&RecordLatents> = lat.iter().take(labels.len()).collect();
    GanBatch {
        real: picks
            .iter()
            .zip(labels)
            .map(|(l, &pos)| {
                let c = if pos { l.gt } else { (l.gt + 1) % l.o_v.len() };
                [l.o_v[c].as_slice(), &l.o_i].concat()
            })
            .collect(),
        labels: labels.to_vec(),
        cond: picks.iter().map(|l| gan.scaler.candidate(&l.o_v[l.gt])).collect(),
        z: picks.iter().map(|_| noise(gan.config.d_z, &mut rng)).collect(),
    }
}

#[test]
fn generator_output_stays_in_the_scaled_range_and_is_deterministic() {
    let (gan, lat) = build(GanMode::Conditioned, 1);
    let cond: Vec<Vec<f64>> = lat.iter().map(|l| gan.scaler.candidate(&l.o_v[0])).collect();
    let a = gan.sample(&cond, &mut rng_from_seed(4)).unwrap();
    assert_eq!(a, gan.sample(&cond, &mut rng_from_seed(4)).unwrap());
    let s = &gan.scaler;
    for x in &a {
        assert_eq!(x.len(), 6);
        for (k, v) in x.iter().enumerate() {
            let pad = (s.hi[k] - s.lo[k]) * (1.0 / s.bound - 1.0) / 2.0 + 1e-12;
            assert!(*v >= s.lo[k] - pad && *v <= s.hi[k] + pad);
        }
    }
}

#[test]
fn inverse_coefficients_undo_the_scaling() {
    let lat = latents(12, 3, 13);
    let s = LatentScaler::fit(&lat, 0.9).unwrap();
    let (a, b) = s.inverse_coefficients();
    let l = &lat[3];
    let raw: Vec<f64> = [l.o_v[0].as_slice(), &l.o_i].concat();
    for (k, x) in s.pair(&l.o_v[0], &l.o_i).iter().enumerate() {
        assert!((a[k] * x + b[k] - raw[k]).abs() < 1e-12);
    }
}

#[test]
fn generator_input_width_follows_mode() {
    let (c, _) = build(GanMode::Conditioned, 2);
    let (u, _) = build(GanMode::Unconditioned, 2);
    assert_eq!(c.generator_input_dim(), 3 + 3);
    assert_eq!(u.generator_input_dim(), 3);
    let mut g = Graph::new();
    let z = g.constant(&[0.1, 0.2, 0.3]).unwrap();
    assert!(matches!(c.generate(&mut g, z, None, true), Err(Error::Contract(_))));
    let o = g.constant(&[0.0; 3]).unwrap();
    assert!(matches!(u.generate(&mut g, z, Some(o), true), Err(Error::Contract(_))));
}

#[test]
fn uniform_discriminator_gives_ln2() {
    let (mut gan, lat) = build(GanMode::Conditioned, 3);
    for id in gan.discriminator_param_ids() {
        gan.store.get_mut(id).data.iter_mut().for_each(|x| *x = 0.0);
    }
    let b = batch(&gan, &lat, &[true, false, true, false], 0);
    let mut g = Graph::new();
    let (d, gl) = gan.adversarial_loss(&mut g, &b, Side::Discriminator).unwrap();
    assert!((g.scalar(d) - std::f64::consts::LN_2).abs() < 1e-9);
    assert_eq!(g.scalar(d) + g.scalar(gl), 0.0);
    // hand calculation: uniform class head adds λ·ln 2
    let mut g = Graph::new();
    let jd = gan.discriminator_loss(&mut g, &b).unwrap();
    assert!((g.scalar(jd) - 1.2 * std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn generator_and_discriminator_losses_cancel_on_any_batch() {
    for seed in 0..20 {
        let (gan, lat) = build(GanMode::Unconditioned, seed);
        let b = batch(&gan, &lat, &[true, false, false], seed);
        let mut g = Graph::new();
        let (d, gl) = gan.adversarial_loss(&mut g, &b, Side::Generator).unwrap();
        assert_eq!(g.scalar(d) + g.scalar(gl), 0.0);
    }
}

#[test]
fn discriminator_loss_reduces_to_adversarial_term() {
    let (mut gan, lat) = build(GanMode::Conditioned, 5);
    let b = batch(&gan, &lat, &[true, false, true], 1);
    let j_s = |gan: &Gan| {
        let mut g = Graph::new();
        let (d, _) = gan.adversarial_loss(&mut g, &b, Side::Discriminator).unwrap();
        g.scalar(d)
    };
    let j_d = |gan: &Gan, b: &GanBatch| {
        let mut g = Graph::new();
        let l = gan.discriminator_loss(&mut g, b).unwrap();
        g.scalar(l)
    };
    gan.config.lambda = 0.0;
    assert_eq!(j_d(&gan, &b), j_s(&gan));

    // a class head that is certain and right costs nothing beyond J_S
    gan.config.lambda = 0.2;
    let all_pos = batch(&gan, &lat, &[true, true, true], 1);
    let w = gan.class_head.weight;
    gan.store.get_mut(w).data.iter_mut().for_each(|x| *x = 0.0);
    gan.store.get_mut(gan.class_head.bias).data = vec![-40.0, 40.0];
    let mut g = Graph::new();
    let (s, _) = gan.adversarial_loss(&mut g, &all_pos, Side::Discriminator).unwrap();
    assert!((j_d(&gan, &all_pos) - g.scalar(s)).abs() < 1e-12);
}

#[test]
fn discriminator_and_generator_gradients_match_finite_differences() {
    for mode in [GanMode::Conditioned, GanMode::Unconditioned] {
        let (gan, lat) = build(mode, 6);
        let b = batch(&gan, &lat, &[true, false, true, false], 2);
        let mut store = gan.store.clone();
        let d_ids = gan.discriminator_param_ids();
        let report = grad_check_param_ids(
            &mut store,
            &d_ids,
            |g, st| {
                let mut local = gan.clone();
                local.store = st.clone();
                local.discriminator_loss(g, &b)
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "J_D {mode:?}: {:?}", report.failures.first());
        let g_ids = gan.generator_param_ids();
        let report = grad_check_param_ids(
            &mut store,
            &g_ids,
            |g, st| {
                let mut local = gan.clone();
                local.store = st.clone();
                local.generator_loss(g, &b)
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "J_G {mode:?}: {:?}", report.failures.first());
    }
}

#[test]
fn class_head_is_idle_without_lambda_and_fake_labels() {
    let (mut gan, lat) = build(GanMode::Conditioned, 7);
    gan.config.lambda = 0.0;
    let b = batch(&gan, &lat, &[true, false], 0);
    let mut g = Graph::new();
    let l = gan.discriminator_loss(&mut g, &b).unwrap();
    g.backward(l).unwrap();
    g.accumulate_param_grads(&mut gan.store);
    assert_eq!(gan.store.grad_norm(&gan.class_head_param_ids()), 0.0);
    assert!(gan.store.grad_norm(&gan.trunk.param_ids()) > 0.0);
}

#[test]
fn smoke_training_logs_pair_counts() {
    let lat = latents(10, 3, 8);
    let (_, log) = train_gan(small(GanMode::Conditioned), None, &lat, &lat, 8).unwrap();
    assert_eq!(log.epochs.len(), 2);
    assert!(log.epochs.iter().all(|e| e.real_pairs == 10 * 2));
    assert!(log.best_epoch >= 1);
}

#[test]
fn training_is_reproducible() {
    let lat = latents(16, 3, 9);
    let (a, la) = train_gan(small(GanMode::Conditioned), None, &lat, &lat, 3).unwrap();
    let (b, lb) = train_gan(small(GanMode::Conditioned), None, &lat, &lat, 3).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.score(&lat[0].o_v[0], &lat[0].o_i).unwrap(), b.score(&lat[0].o_v[0], &lat[0].o_i).unwrap());
}

#[test]
fn saturated_discriminator_is_flagged() {
    let (mut gan, lat) = build(GanMode::Conditioned, 10);
    gan.config.collapse_window = 2;
    gan.config.epochs = 1;
    gan.config.lr = 1e-9;
    let w = gan.source_head.weight;
    gan.store.get_mut(w).data.iter_mut().for_each(|x| *x = 0.0);
    gan.store.get_mut(gan.source_head.bias).data = vec![60.0];
    let log = fit_gan(&mut gan, &lat, &[], 0).unwrap();
    assert!(log.collapsed);
}

#[test]
fn frechet_closed_forms() {
    let mut rng = rng_from_seed(11);
    let normal = |rng: &mut crate::rng::Rng, mu: f64| -> Vec<f64> {
        let z: f64 = StandardNormal.sample(rng);
        vec![mu + z]
    };
    let a: Vec<Vec<f64>> = (0..10_000).map(|_| normal(&mut rng, 0.0)).collect();
    let b: Vec<Vec<f64>> = (0..10_000).map(|_| normal(&mut rng, 3.0)).collect();
    let d = latent_frechet(&a, &b).unwrap();
    assert!((d.distance - 9.0).abs() < 0.45, "{}", d.distance);
    assert!((d.distance - latent_frechet(&b, &a).unwrap().distance).abs() < 1e-8);

    let m: Vec<Vec<f64>> = (0..200).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    assert!(latent_frechet(&m, &m).unwrap().distance < 1e-8);
}

#[test]
fn frechet_reports_ridge_on_degenerate_sets() {
    let flat: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
    let d = latent_frechet(&flat, &flat).unwrap();
    assert_eq!(d.ridge, Some(FRECHET_RIDGE));
    assert!(d.distance < 1e-8);
    assert!(latent_frechet(&flat[..2], &flat).is_err());
}

#[test]
fn scaler_maps_training_range_inside_bound() {
    let lat = latents(30, 4, 12);
    let s = LatentScaler::fit(&lat, 0.95).unwrap();
    for l in &lat {
        for v in &l.o_v {
            assert!(s.pair(v, &l.o_i).iter().all(|x| x.abs() <= 0.95 + 1e-12));
        }
    }
}

fn tiny_mtcm(seed: u64) -> (crate::model::MtcmModel, Vec<RecordLatents>) {
    use crate::model::{build_tokenizer, prepare, MtcmModel};
    use crate::scene::{generate_corpus, CandidateFeatures, SceneConfig};
    let scene = SceneConfig::default();
    let cfg = crate::model::ModelConfig {
        vocab_size: 40,
        d_emb: 4,
        d_h: 4,
        mlp_hidden: vec![6],
        d_lat: 3,
        target_hidden: 5,
        source_hidden: vec![4],
        ..Default::default()
    };
    let recs = generate_corpus(&scene, 12, seed).unwrap();
    let texts: Vec<String> = recs.iter().map(|r| r.text.clone()).collect();
    let tok = build_tokenizer(&cfg, &texts).unwrap();
    let samples = prepare(&recs, &tok, cfg.head, &scene, seed);
    let model = MtcmModel::new(cfg, tok, CandidateFeatures::joined_dim(&scene), &mut rng_from_seed(seed)).unwrap();
    let lat = samples.iter().map(|s| model.latents(s).unwrap()).collect();
    (model, lat)
}

#[test]
fn warm_start_reproduces_the_mtcm_scores() {
    let (mtcm, lat) = tiny_mtcm(14);
    let scaler = LatentScaler::fit(&lat, 0.95).unwrap();
    let gan = Gan::from_mtcm(small(GanMode::Conditioned), &mtcm, scaler, &mut rng_from_seed(1)).unwrap();
    assert_eq!(gan.config.d_hidden, vec![5]);
    for l in &lat {
        for v in &l.o_v {
            let a = gan.score(v, &l.o_i).unwrap();
            let b = mtcm.score(v, &l.o_i).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn warm_start_refuses_a_four_class_head() {
    let (mut mtcm, lat) = tiny_mtcm(15);
    mtcm.config.head = crate::model::HeadArity::Labels;
    let scaler = LatentScaler::fit(&lat, 0.95).unwrap();
    assert!(matches!(
        Gan::from_mtcm(small(GanMode::Conditioned), &mtcm, scaler, &mut rng_from_seed(1)),
        Err(Error::Config(_))
    ));
}
