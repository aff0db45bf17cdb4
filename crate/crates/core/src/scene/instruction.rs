use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AmbiguityMode, Instruction, Label, Scene, SceneConfig, SceneObject, Style};

/// Word used in place of a category when the target is not named explicitly.
pub const HYPERNYM: &str = "object";

const VERBS: &[&str] = &[
    "bring", "fetch", "grab", "take", "get", "bring me", "give me", "hand me",
];
const PREPOSITIONS: &[&str] = &["from", "on", "off", "that is on"];
const SUFFIX_FILLERS: &[&str] = &["for me", "now", "quickly", "right now", "if you can"];
const MISSPELL_TAILS: &str = "abcdefghijklmnopqrstuvwxyz";

/// What an instruction says about its target and, optionally, the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    /// `None` when the hypernym stands in for the category.
    pub category: Option<String>,
    pub attributes: Vec<String>,
    pub source: Option<SourceMention>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMention {
    pub category: String,
    pub color: Option<String>,
}

impl Mention {
    fn category_matches(&self, o: &SceneObject) -> bool {
        self.category.as_ref().is_none_or(|c| *c == o.category)
    }

    fn attributes_match(&self, o: &SceneObject) -> bool {
        self.attributes.iter().all(|a| o.has_attribute(a))
    }

    fn source_matches(&self, scene: &Scene, o: &SceneObject) -> bool {
        let Some(sm) = &self.source else { return true };
        let src = scene.source(o.source_index.expect("target candidate"));
        src.category == sm.category && sm.color.as_ref().is_none_or(|c| src.has_attribute(c))
    }

    fn matches(&self, scene: &Scene, o: &SceneObject) -> bool {
        self.category_matches(o) && self.attributes_match(o) && self.source_matches(scene, o)
    }

    fn match_count(&self, scene: &Scene) -> usize {
        scene.targets().filter(|o| self.matches(scene, o)).count()
    }
}

/// Likelihood label of every target candidate under `mention`.
///
/// * A1: category, attributes and source all agree, category named explicitly.
/// * A2: as A1 but the category is replaced by the hypernym.
/// * A3: the source agrees but the description does not.
/// * A4: wrong source, or neither category nor attributes agree.
pub fn assign_labels(scene: &Scene, mention: &Mention) -> Vec<Label> {
    scene
        .targets()
        .map(|o| {
            let cat = mention.category_matches(o);
            let attrs = mention.attributes_match(o);
            let src = mention.source_matches(scene, o);
            if cat && attrs && src {
                if mention.category.is_some() {
                    Label::A1
                } else {
                    Label::A2
                }
            } else if !src || (!cat && !attrs) {
                Label::A4
            } else {
                Label::A3
            }
        })
        .collect()
}

/// Style as judged from the words alone: any source category word makes it `I_F`.
pub fn detect_style(words: &[String], cfg: &SceneConfig) -> Style {
    if words.iter().any(|w| cfg.source_categories.contains(w)) {
        Style::WithSource
    } else {
        Style::NoSource
    }
}

/// Writes an instruction about target `gt` in the requested style and mode.
///
/// Returns `None` when the scene cannot support the mode (for example an
/// ambiguous description needs a look-alike candidate).
pub fn generate_instruction(
    scene: &Scene,
    gt: usize,
    style: Style,
    mode: AmbiguityMode,
    cfg: &SceneConfig,
    rng: &mut impl Rng,
) -> Option<Instruction> {
    let target = scene.target(gt);
    let gt_source = target.source_index.expect("target candidate");
    let src = scene.source(gt_source);
    let src_color = src.attributes.first().cloned();

    let with_source = style == Style::WithSource;
    let mut attr_subsets = ordered_subsets(&target.attributes, rng);
    let source_options: Vec<Option<SourceMention>> = if with_source {
        vec![
            Some(SourceMention {
                category: src.category.clone(),
                color: None,
            }),
            Some(SourceMention {
                category: src.category.clone(),
                color: src_color,
            }),
        ]
    } else {
        vec![None]
    };

    let unique_with = |noun: Option<String>, subsets: &[Vec<String>]| -> Option<Mention> {
        // fewest words first; the source colour only when needed
        let mut best: Option<(usize, Mention)> = None;
        for s in subsets {
            for so in &source_options {
                let m = Mention {
                    category: noun.clone(),
                    attributes: s.clone(),
                    source: so.clone(),
                };
                let words = s.len() + so.as_ref().map_or(0, |x| x.color.is_some() as usize);
                if m.match_count(scene) == 1 && best.as_ref().is_none_or(|(b, _)| words < *b) {
                    best = Some((words, m));
                }
            }
        }
        best.map(|(_, m)| m)
    };

    let mention = match mode {
        AmbiguityMode::Unique => {
            let mut m = unique_with(Some(target.category.clone()), &attr_subsets)?;
            if rng.random_bool(0.3) {
                m.attributes = target.attributes.clone();
            }
            m
        }
        AmbiguityMode::Implicit => unique_with(None, &attr_subsets)?,
        AmbiguityMode::Ambiguous => {
            attr_subsets.reverse();
            let src_opt = source_options.first().cloned().flatten();
            [Some(target.category.clone()), None]
                .into_iter()
                .flat_map(|noun| {
                    let src_opt = src_opt.clone();
                    attr_subsets.iter().map(move |s| Mention {
                        category: noun.clone(),
                        attributes: s.clone(),
                        source: src_opt.clone(),
                    })
                })
                .find(|m| m.match_count(scene) >= 2)?
        }
        AmbiguityMode::Erroneous => {
            let mut m = unique_with(Some(target.category.clone()), &attr_subsets)?;
            corrupt(&mut m, scene, target, cfg, rng);
            m
        }
    };

    let text = render(&mention, cfg, rng);
    let labels = assign_labels(scene, &mention);
    Some(Instruction {
        scene_id: scene.id,
        text,
        style,
        mode,
        gt_target: gt,
        gt_source,
        labels,
        mention,
    })
}

/// Subsets of `attrs`, by increasing size, shuffled within each size.
fn ordered_subsets(attrs: &[String], rng: &mut impl Rng) -> Vec<Vec<String>> {
    let n = attrs.len();
    let mut by_size: Vec<Vec<Vec<String>>> = vec![Vec::new(); n + 1];
    for mask in 0u32..(1 << n) {
        let s: Vec<String> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| attrs[i].clone()).collect();
        by_size[s.len()].push(s);
    }
    by_size
        .into_iter()
        .flat_map(|mut group| {
            group.shuffle(rng);
            group
        })
        .collect()
}

/// Makes the description wrong for the ground truth: a wrong attribute value
/// or, when a source is mentioned, a different piece of furniture.
fn corrupt(m: &mut Mention, scene: &Scene, target: &SceneObject, cfg: &SceneConfig, rng: &mut impl Rng) {
    let other_sources: Vec<&str> = scene
        .sources()
        .map(|s| s.category.as_str())
        .filter(|c| m.source.as_ref().is_some_and(|sm| sm.category != *c))
        .collect();
    if !other_sources.is_empty() && rng.random_bool(0.5) {
        let sm = m.source.as_mut().expect("checked");
        sm.category = other_sources.choose(rng).expect("non-empty").to_string();
        sm.color = None;
        return;
    }
    let color = target.attributes.iter().find(|a| cfg.colors.contains(a));
    let wrong: Vec<&String> = cfg.colors.iter().filter(|c| Some(*c) != color).collect();
    let Some(&wrong) = wrong.choose(rng) else { return };
    m.attributes.retain(|a| !cfg.colors.contains(a));
    m.attributes.push(wrong.clone());
}

fn render(m: &Mention, cfg: &SceneConfig, rng: &mut impl Rng) -> Vec<String> {
    let mut desc: Vec<String> = Vec::new();
    // size before colour, as in ordinary English
    desc.extend(m.attributes.iter().filter(|a| cfg.sizes.contains(a)).cloned());
    desc.extend(m.attributes.iter().filter(|a| cfg.colors.contains(a)).cloned());
    desc.push(m.category.clone().unwrap_or_else(|| HYPERNYM.to_string()));
    if cfg.misspell_rate > 0.0 {
        desc = misspell(desc, cfg.misspell_rate, rng);
    }

    let mut words: Vec<String> = Vec::new();
    let push = |words: &mut Vec<String>, phrase: &str| words.extend(phrase.split_whitespace().map(String::from));
    match &m.source {
        Some(sm) => {
            push(&mut words, VERBS.choose(rng).expect("non-empty"));
            words.push("the".into());
            words.extend(desc);
            push(&mut words, PREPOSITIONS.choose(rng).expect("non-empty"));
            words.push("the".into());
            words.extend(sm.color.clone());
            words.push(sm.category.clone());
        }
        None if rng.random_bool(0.25) => {
            push(&mut words, "pick up the");
            words.extend(desc);
            push(&mut words, "and bring it to me");
        }
        None => {
            push(&mut words, VERBS.choose(rng).expect("non-empty"));
            words.push("the".into());
            words.extend(desc);
        }
    }

    // pad towards the configured mean length
    let gap = cfg.target_words - words.len() as f64;
    if gap > 0.0 {
        let mut k = gap.floor() as usize + rng.random_bool(gap.fract()) as usize;
        if k > 0 && rng.random_bool(0.5) {
            words.insert(0, "please".into());
            k -= 1;
        }
        while k > 0 {
            let fits: Vec<&str> = SUFFIX_FILLERS
                .iter()
                .copied()
                .filter(|f| f.split_whitespace().count() <= k)
                .collect();
            let f = fits.choose(rng).expect("single-word fillers always fit");
            k -= f.split_whitespace().count();
            push(&mut words, f);
        }
    }
    words
}

/// Spelling noise: a random letter tail glued to a word ("greyis"), or two
/// adjacent description words run together ("topright").
fn misspell(desc: Vec<String>, rate: f64, rng: &mut impl Rng) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(desc.len());
    let mut i = 0;
    while i < desc.len() {
        let w = &desc[i];
        if rng.random_bool(rate) {
            if i + 1 < desc.len() && rng.random_bool(0.3) {
                out.push(format!("{w}{}", desc[i + 1]));
                i += 2;
                continue;
            }
            let tail_len = rng.random_range(1..=2);
            let tail: String = (0..tail_len)
                .map(|_| *MISSPELL_TAILS.as_bytes().choose(rng).expect("non-empty") as char)
                .collect();
            out.push(format!("{w}{tail}"));
        } else {
            out.push(w.clone());
        }
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{BBox, ObjectKind};
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::scene::generate_scene;

    fn obj(kind: ObjectKind, cat: &str, attrs: &[&str], src: Option<usize>) -> SceneObject {
        let mut attributes: Vec<String> = attrs.iter().map(|s| s.to_string()).collect();
        attributes.sort();
        SceneObject {
            kind,
            category: cat.into(),
            attributes,
            bbox: BBox { x: 0.0, y: 0.0, w: 1.0, h: 1.0 },
            source_index: src,
        }
    }

    /// Two tables apart, four candidates that each fall into a different label.
    fn crafted() -> Scene {
        use ObjectKind::*;
        Scene {
            id: 1,
            width: 640.0,
            height: 480.0,
            objects: vec![
                obj(SourceCandidate, "table", &["white"], None),
                obj(SourceCandidate, "shelf", &["brown"], None),
                obj(TargetCandidate, "bottle", &["red", "small"], Some(0)),
                obj(TargetCandidate, "bottle", &["blue", "small"], Some(0)),
                obj(TargetCandidate, "cup", &["green", "large"], Some(0)),
                obj(TargetCandidate, "bottle", &["red", "small"], Some(1)),
            ],
        }
    }

    /// Independent rule table: (category ok, attributes ok, source ok, explicit) -> label.
    fn rule_oracle(cat: bool, attrs: bool, src: bool, explicit: bool) -> Label {
        match (cat, attrs, src, explicit) {
            (true, true, true, true) => Label::A1,
            (true, true, true, false) => Label::A2,
            (_, _, false, _) => Label::A4,
            (false, false, true, _) => Label::A4,
            (true, false, true, _) | (false, true, true, _) => Label::A3,
        }
    }

    #[test]
    fn four_way_assignment_matches_rule_table() {
        let scene = crafted();
        let mention = Mention {
            category: Some("bottle".into()),
            attributes: vec!["red".into()],
            source: Some(SourceMention { category: "table".into(), color: None }),
        };
        let got = assign_labels(&scene, &mention);
        let want: Vec<Label> = [
            (true, true, true),   // red bottle on the table
            (true, false, true),  // blue bottle on the table
            (false, false, true), // green cup on the table
            (true, true, false),  // red bottle on the shelf
        ]
        .iter()
        .map(|&(c, a, s)| rule_oracle(c, a, s, true))
        .collect();
        assert_eq!(want, vec![Label::A1, Label::A3, Label::A4, Label::A4]);
        assert_eq!(got, want);
    }

    #[test]
    fn hypernym_gives_a2() {
        let scene = crafted();
        let mention = Mention {
            category: None,
            attributes: vec!["green".into()],
            source: None,
        };
        assert_eq!(assign_labels(&scene, &mention)[2], Label::A2);
    }

    #[test]
    fn wrong_source_wrong_attributes_is_a4() {
        let scene = crafted();
        let mention = Mention {
            category: Some("bottle".into()),
            attributes: vec!["red".into()],
            source: Some(SourceMention { category: "shelf".into(), color: None }),
        };
        assert_eq!(assign_labels(&scene, &mention)[2], Label::A4);
    }

    #[test]
    fn source_style_mentions_the_source() {
        let cfg = SceneConfig::default();
        let scene = crafted();
        let ins = generate_instruction(&scene, 0, Style::WithSource, AmbiguityMode::Unique, &cfg, &mut rng_from_seed(1)).unwrap();
        assert!(ins.text.contains(&"table".to_string()), "{:?}", ins.text);
        assert_eq!(detect_style(&ins.text, &cfg), Style::WithSource);
        assert_eq!(ins.labels[0], Label::A1);
        assert_eq!(ins.labels.iter().filter(|l| **l == Label::A1).count(), 1);
    }

    #[test]
    fn no_source_style_omits_furniture() {
        let cfg = SceneConfig::default();
        let scene = crafted();
        for seed in 0..50 {
            let ins = generate_instruction(&scene, 2, Style::NoSource, AmbiguityMode::Unique, &cfg, &mut rng_from_seed(seed)).unwrap();
            assert!(ins.text.iter().all(|w| !cfg.source_categories.contains(w)), "{:?}", ins.text);
        }
    }

    #[test]
    fn look_alikes_without_source_cannot_be_unique() {
        let cfg = SceneConfig::default();
        let scene = crafted();
        // targets 0 and 3 are identical apart from their furniture
        assert!(generate_instruction(&scene, 0, Style::NoSource, AmbiguityMode::Unique, &cfg, &mut rng_from_seed(0)).is_none());
        let amb = generate_instruction(&scene, 0, Style::NoSource, AmbiguityMode::Ambiguous, &cfg, &mut rng_from_seed(0)).unwrap();
        assert!(amb.labels.iter().filter(|l| l.is_likely()).count() >= 2);
    }

    #[test]
    fn erroneous_instruction_does_not_fit_ground_truth() {
        let cfg = SceneConfig::default();
        let scene = crafted();
        for seed in 0..30 {
            let ins = generate_instruction(&scene, 2, Style::WithSource, AmbiguityMode::Erroneous, &cfg, &mut rng_from_seed(seed)).unwrap();
            assert!(!ins.labels[2].is_likely());
        }
    }

    #[test]
    fn unique_mode_corpus_has_exactly_one_a1() {
        let cfg = SceneConfig::default();
        let mut rng = rng_from_seed(4);
        let mut produced = 0;
        for id in 0..300 {
            let scene = generate_scene(id, &cfg, &mut rng).unwrap();
            for gt in 0..scene.n() {
                for style in [Style::WithSource, Style::NoSource] {
                    if let Some(ins) = generate_instruction(&scene, gt, style, AmbiguityMode::Unique, &cfg, &mut rng) {
                        produced += 1;
                        let a1: Vec<usize> = (0..scene.n()).filter(|&i| ins.labels[i] == Label::A1).collect();
                        assert_eq!(a1, vec![gt]);
                    }
                }
            }
        }
        assert!(produced > 500);
    }

    #[test]
    fn removing_source_words_flips_detected_style() {
        let cfg = SceneConfig::default();
        let mut rng = rng_from_seed(8);
        for id in 0..200 {
            let scene = generate_scene(id, &cfg, &mut rng).unwrap();
            if let Some(ins) = generate_instruction(&scene, 0, Style::WithSource, AmbiguityMode::Unique, &cfg, &mut rng) {
                let stripped: Vec<String> = ins
                    .text
                    .iter()
                    .filter(|w| !cfg.source_categories.contains(w))
                    .cloned()
                    .collect();
                assert_eq!(detect_style(&ins.text, &cfg), Style::WithSource);
                assert_eq!(detect_style(&stripped, &cfg), Style::NoSource);
            }
        }
    }

    #[test]
    fn misspelling_keeps_word_stems() {
        let cfg = SceneConfig {
            misspell_rate: 1.0,
            ..SceneConfig::default()
        };
        let scene = crafted();
        let ins = generate_instruction(&scene, 2, Style::NoSource, AmbiguityMode::Unique, &cfg, &mut rng_from_seed(3)).unwrap();
        let s = ins.sentence();
        assert!(s.contains("cup"), "{s}");
        assert!(!ins.text.iter().any(|w| w == "cup"), "{s}");
    }
}
