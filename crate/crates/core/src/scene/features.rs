use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BBox, Scene, SceneConfig, SceneObject};
use crate::rng::{derive_seed, rng_for};

/// `[x/W, y/H, w/W, h/H, wh/(WH)]`, optionally followed by the normalised
/// target-minus-source centre offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationalFeatures(pub Vec<f64>);

pub fn relational_features(b: &BBox, scene: &Scene, source: Option<&BBox>) -> RelationalFeatures {
    let (w_img, h_img) = (scene.width, scene.height);
    let mut v = vec![
        b.x / w_img,
        b.y / h_img,
        b.w / w_img,
        b.h / h_img,
        b.w * b.h / (w_img * h_img),
    ];
    if let Some(s) = source {
        let (tx, ty) = b.center();
        let (sx, sy) = s.center();
        v.push((tx - sx) / w_img);
        v.push((ty - sy) / h_img);
    }
    RelationalFeatures(v)
}

/// Length of a single object's visual descriptor.
pub fn descriptor_dim(cfg: &SceneConfig) -> usize {
    cfg.category_words().len() + cfg.attribute_words().len()
}

/// One-hot category, multi-hot attributes, plus Gaussian noise of `cfg.descriptor_sigma`.
pub fn visual_descriptor(o: &SceneObject, cfg: &SceneConfig, rng: &mut impl Rng) -> Vec<f64> {
    let cats = cfg.category_words();
    let attrs = cfg.attribute_words();
    let mut v: Vec<f64> = cats
        .iter()
        .map(|c| (*c == o.category) as u8 as f64)
        .chain(attrs.iter().map(|a| o.has_attribute(a) as u8 as f64))
        .collect();
    if cfg.descriptor_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.descriptor_sigma).expect("validated sigma");
        for x in &mut v {
            *x += noise.sample(rng);
        }
    }
    v
}

/// Visual and relational inputs of one target candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFeatures {
    /// Descriptor of the candidate followed by that of its supporting source.
    pub visual: Vec<f64>,
    pub relational: Vec<f64>,
}

impl CandidateFeatures {
    /// `x_v ⊕ x_rel`.
    pub fn joined(&self) -> Vec<f64> {
        self.visual.iter().chain(&self.relational).copied().collect()
    }

    /// Length of `joined()` for the given configuration.
    pub fn joined_dim(cfg: &SceneConfig) -> usize {
        2 * descriptor_dim(cfg) + 5 + if cfg.wrs_mode { 2 } else { 0 }
    }
}

/// Features for every target candidate of `scene`. Descriptor noise is a pure
/// function of `(seed, scene id, object index)`, so every instruction on the
/// same scene sees the same visual input.
pub fn candidate_features(scene: &Scene, cfg: &SceneConfig, seed: u64) -> Vec<CandidateFeatures> {
    let scene_seed = derive_seed(seed, "descriptor", scene.id);
    let descriptors: Vec<Vec<f64>> = scene
        .objects
        .iter()
        .enumerate()
        .map(|(k, o)| visual_descriptor(o, cfg, &mut rng_for(scene_seed, "object", k as u64)))
        .collect();
    let m = scene.m();
    scene
        .targets()
        .enumerate()
        .map(|(i, t)| {
            let s = t.source_index.expect("target candidate");
            let src = scene.source(s);
            let mut visual = descriptors[m + i].clone();
            visual.extend_from_slice(&descriptors[s]);
            let rel = relational_features(&t.bbox, scene, cfg.wrs_mode.then_some(&src.bbox));
            CandidateFeatures {
                visual,
                relational: rel.0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::ObjectKind;
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::scene::generate_scene;

    fn frame() -> Scene {
        Scene {
            id: 0,
            width: 640.0,
            height: 480.0,
            objects: vec![],
        }
    }

    fn object(cat: &str, attrs: &[&str]) -> SceneObject {
        SceneObject {
            kind: ObjectKind::TargetCandidate,
            category: cat.into(),
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            bbox: BBox { x: 0.0, y: 0.0, w: 1.0, h: 1.0 },
            source_index: Some(0),
        }
    }

    #[test]
    fn full_frame_box() {
        let s = frame();
        let b = BBox { x: 0.0, y: 0.0, w: 640.0, h: 480.0 };
        assert_eq!(relational_features(&b, &s, None).0, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn vanishing_centre_box() {
        let s = frame();
        let b = BBox { x: 320.0, y: 240.0, w: 1e-9, h: 1e-9 };
        let r = relational_features(&b, &s, None).0;
        assert_eq!(&r[..2], &[0.5, 0.5]);
        assert!(r[2..].iter().all(|v| *v < 1e-10));
    }

    #[test]
    fn random_boxes_match_direct_formula() {
        let s = frame();
        let mut rng = rng_from_seed(2);
        for _ in 0..500 {
            let w = rng.random_range(1.0..640.0);
            let h = rng.random_range(1.0..480.0);
            let b = BBox { x: rng.random_range(0.0..640.0 - w), y: rng.random_range(0.0..480.0 - h), w, h };
            let src = BBox { x: 10.0, y: 300.0, w: 200.0, h: 100.0 };
            let r = relational_features(&b, &s, Some(&src)).0;
            let want = [
                b.x / 640.0,
                b.y / 480.0,
                w / 640.0,
                h / 480.0,
                (w / 640.0) * (h / 480.0),
                (b.x + w / 2.0 - 110.0) / 640.0,
                (b.y + h / 2.0 - 350.0) / 480.0,
            ];
            for (a, e) in r.iter().zip(want) {
                assert!((a - e).abs() < 1e-12);
            }
            assert!(r[..5].iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn noiseless_twins_share_a_descriptor() {
        let cfg = SceneConfig {
            descriptor_sigma: 0.0,
            ..SceneConfig::default()
        };
        let a = visual_descriptor(&object("cup", &["red", "small"]), &cfg, &mut rng_from_seed(1));
        let b = visual_descriptor(&object("cup", &["red", "small"]), &cfg, &mut rng_from_seed(2));
        assert_eq!(a, b);
        assert_eq!(a.len(), descriptor_dim(&cfg));
        assert_eq!(descriptor_dim(&cfg), 16 + 10);
    }

    #[test]
    fn noisy_descriptors_still_separate_attributes() {
        let cfg = SceneConfig::default();
        let cos = |u: &[f64], v: &[f64]| {
            let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            d / (u.iter().map(|a| a * a).sum::<f64>().sqrt() * v.iter().map(|a| a * a).sum::<f64>().sqrt())
        };
        let mut rng = rng_from_seed(3);
        let (mut same, mut diff) = (0.0, 0.0);
        for _ in 0..1000 {
            let a = visual_descriptor(&object("cup", &["red", "small"]), &cfg, &mut rng);
            let b = visual_descriptor(&object("cup", &["red", "small"]), &cfg, &mut rng);
            let c = visual_descriptor(&object("cup", &["blue", "large"]), &cfg, &mut rng);
            same += cos(&a, &b);
            diff += cos(&a, &c);
        }
        assert!(same > diff, "{same} vs {diff}");
    }

    #[test]
    fn candidate_features_are_stable_per_scene() {
        let cfg = SceneConfig {
            wrs_mode: true,
            ..SceneConfig::default()
        };
        let s = generate_scene(4, &cfg, &mut rng_from_seed(4)).unwrap();
        let a = candidate_features(&s, &cfg, 11);
        assert_eq!(a, candidate_features(&s, &cfg, 11));
        assert_ne!(a, candidate_features(&s, &cfg, 12));
        assert_eq!(a.len(), s.n());
        assert_eq!(a[0].joined().len(), CandidateFeatures::joined_dim(&cfg));
    }
}
