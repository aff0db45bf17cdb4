use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{BBox, ObjectKind, Scene, SceneConfig, SceneObject};
use crate::error::{Error, Result};

/// Generates one valid scene: `M` pieces of furniture with `N` objects on top.
///
/// Boxes are placed by rejection sampling so that no two boxes overlap and
/// every target sits directly on its source's top edge.
pub fn generate_scene(id: u64, cfg: &SceneConfig, rng: &mut impl Rng) -> Result<Scene> {
    cfg.validate()?;
    let m = rng.random_range(cfg.n_sources[0]..=cfg.n_sources[1]);
    let n = rng.random_range(cfg.n_targets[0]..=cfg.n_targets[1]);
    let mut last = String::new();
    // a crowded layout is redrawn from scratch rather than patched
    for _ in 0..cfg.max_retries {
        match layout(id, cfg, m, n, rng) {
            Ok(scene) => return Ok(scene),
            Err(msg) => last = msg,
        }
    }
    Err(Error::Generation(format!("scene {id}: {last}")))
}

fn layout(id: u64, cfg: &SceneConfig, m: usize, n: usize, rng: &mut impl Rng) -> std::result::Result<Scene, String> {
    let (w_img, h_img) = (cfg.width, cfg.height);
    let mut sources: Vec<SceneObject> = Vec::with_capacity(m);
    for s in 0..m {
        let bbox = place(cfg.max_retries, &sources, rng, |rng| {
            let w = rng.random_range(0.2..0.32) * w_img;
            let h = rng.random_range(0.1..0.2) * h_img;
            let x = rng.random_range(0.0..=(w_img - w));
            let y = rng.random_range(0.3 * h_img..=(h_img - h));
            Some(BBox { x, y, w, h })
        })
        .ok_or_else(|| format!("could not place source {s}"))?;
        sources.push(SceneObject {
            kind: ObjectKind::SourceCandidate,
            category: cfg.source_categories.choose(rng).expect("validated").clone(),
            attributes: vec![cfg.colors.choose(rng).expect("validated").clone()],
            bbox,
            source_index: None,
        });
    }

    let mut targets: Vec<SceneObject> = Vec::with_capacity(n);
    for t in 0..n {
        let twin = if !targets.is_empty() && rng.random_bool(cfg.twin_prob) {
            targets.choose(rng).cloned()
        } else {
            None
        };
        let (category, color, preferred) = match twin {
            Some(orig) => {
                let color = orig
                    .attributes
                    .iter()
                    .find(|a| cfg.colors.contains(a))
                    .cloned()
                    .expect("targets carry a colour");
                // prefer a different piece of furniture so the source disambiguates
                let prev = orig.source_index.expect("target");
                let src = if m > 1 {
                    (prev + rng.random_range(1..m)) % m
                } else {
                    prev
                };
                (orig.category, color, src)
            }
            None => (
                cfg.target_categories.choose(rng).expect("validated").clone(),
                cfg.colors.choose(rng).expect("validated").clone(),
                rng.random_range(0..m),
            ),
        };
        let size = cfg.sizes.choose(rng).expect("validated").clone();
        let mut attributes = vec![color, size];
        attributes.sort();

        let occupied: Vec<SceneObject> = sources.iter().chain(&targets).cloned().collect();
        let (src, bbox) = (0..m)
            .map(|k| (preferred + k) % m)
            .find_map(|src| {
                let support = sources[src].bbox;
                place(cfg.max_retries, &occupied, rng, |rng| {
                    let w = rng.random_range(0.025..0.05) * w_img;
                    let h = rng.random_range(0.05..0.12) * h_img;
                    if w > support.w || support.y - h < 0.0 {
                        return None;
                    }
                    let x = rng.random_range(support.x..=(support.x + support.w - w));
                    Some(BBox { x, y: support.y - h, w, h })
                })
                .map(|b| (src, b))
            })
            .ok_or_else(|| format!("could not place target {t}"))?;
        targets.push(SceneObject {
            kind: ObjectKind::TargetCandidate,
            category,
            attributes,
            bbox,
            source_index: Some(src),
        });
    }

    let mut objects = sources;
    objects.extend(targets);
    if cfg.box_jitter > 0.0 {
        let noise = Normal::new(0.0, cfg.box_jitter).map_err(|e| e.to_string())?;
        for o in &mut objects {
            o.bbox = jitter(o.bbox, w_img, h_img, &noise, rng);
        }
    }
    let scene = Scene {
        id,
        width: w_img,
        height: h_img,
        objects,
    };
    scene.validate().map_err(|e| e.to_string())?;
    Ok(scene)
}

fn place<R: Rng>(
    retries: usize,
    occupied: &[SceneObject],
    rng: &mut R,
    mut propose: impl FnMut(&mut R) -> Option<BBox>,
) -> Option<BBox> {
    (0..retries).find_map(|_| {
        propose(rng).filter(|b| occupied.iter().all(|o| !o.bbox.overlaps(b)))
    })
}

fn jitter(b: BBox, w_img: f64, h_img: f64, noise: &Normal<f64>, rng: &mut impl Rng) -> BBox {
    let w = (b.w * (1.0 + noise.sample(rng))).clamp(1.0, w_img);
    let h = (b.h * (1.0 + noise.sample(rng))).clamp(1.0, h_img);
    let x = (b.x + b.w * noise.sample(rng)).clamp(0.0, w_img - w);
    let y = (b.y + b.h * noise.sample(rng)).clamp(0.0, h_img - h);
    BBox { x, y, w, h }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn single_target_single_source() {
        let cfg = SceneConfig {
            n_targets: [1, 1],
            n_sources: [1, 1],
            ..SceneConfig::default()
        };
        let s = generate_scene(0, &cfg, &mut rng_from_seed(1)).unwrap();
        assert_eq!((s.n(), s.m()), (1, 1));
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig {
            n_targets: [2, 6],
            ..SceneConfig::default()
        };
        let a = generate_scene(3, &cfg, &mut rng_from_seed(7)).unwrap();
        let b = generate_scene(3, &cfg, &mut rng_from_seed(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thousand_scenes_respect_geometry() {
        let cfg = SceneConfig {
            n_targets: [2, 6],
            n_sources: [1, 4],
            ..SceneConfig::default()
        };
        let mut rng = rng_from_seed(99);
        for id in 0..1000 {
            let s = generate_scene(id, &cfg, &mut rng).unwrap();
            for (i, a) in s.objects.iter().enumerate() {
                let b = a.bbox;
                assert!(b.x >= 0.0 && b.y >= 0.0 && b.w > 0.0 && b.h > 0.0);
                assert!(b.x + b.w <= s.width && b.y + b.h <= s.height);
                for c in &s.objects[i + 1..] {
                    assert!(!b.overlaps(&c.bbox));
                }
                if let Some(src) = a.source_index {
                    let sb = s.source(src).bbox;
                    assert!((b.y + b.h - sb.y).abs() < 1e-9, "target rests on its source");
                    assert!(b.x >= sb.x && b.x + b.w <= sb.x + sb.w);
                }
            }
        }
    }

    #[test]
    fn impossible_layout_is_a_generation_error() {
        let cfg = SceneConfig {
            n_sources: [30, 30],
            max_retries: 5,
            ..SceneConfig::default()
        };
        assert!(matches!(
            generate_scene(0, &cfg, &mut rng_from_seed(0)),
            Err(Error::Generation(_))
        ));
    }

    #[test]
    fn jitter_keeps_boxes_in_frame() {
        let cfg = SceneConfig {
            box_jitter: 0.3,
            ..SceneConfig::default()
        };
        let mut rng = rng_from_seed(5);
        for id in 0..200 {
            generate_scene(id, &cfg, &mut rng).unwrap().validate().unwrap();
        }
    }
}
