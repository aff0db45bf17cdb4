//! Procedural scenes, fetching instructions and candidate labels.
//!
//! A scene holds source candidates (furniture) and target candidates (small
//! objects resting on a piece of furniture). Instructions are produced from a
//! template grammar so every label is exact by construction.

mod dataset;
mod features;
mod generate;
mod instruction;

pub use dataset::{
    generate_corpus, read_records, split_dataset, write_records, DatasetSplit, LabelTable, Record,
    DEFAULT_SPLIT_RATIOS,
};
pub use features::{
    candidate_features, descriptor_dim, relational_features, visual_descriptor, CandidateFeatures,
    RelationalFeatures,
};
pub use generate::generate_scene;
pub use instruction::{assign_labels, detect_style, generate_instruction, Mention, HYPERNYM};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixels: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// True when the two boxes share positive area.
    pub fn overlaps(&self, o: &BBox) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn inside(&self, width: f64, height: f64) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x >= 0.0 && self.y >= 0.0 && self.x + self.w <= width && self.y + self.h <= height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    TargetCandidate,
    SourceCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub kind: ObjectKind,
    pub category: String,
    /// Sorted, duplicate-free.
    pub attributes: Vec<String>,
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// Index into the scene's source candidates; targets only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_index: Option<usize>,
}

impl SceneObject {
    pub fn has_attribute(&self, a: &str) -> bool {
        self.attributes.iter().any(|x| x == a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: u64,
    pub width: f64,
    pub height: f64,
    /// Source candidates first, then target candidates.
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn sources(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.kind == ObjectKind::SourceCandidate)
    }

    pub fn targets(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.kind == ObjectKind::TargetCandidate)
    }

    pub fn target(&self, i: usize) -> &SceneObject {
        self.targets().nth(i).expect("target index in range")
    }

    pub fn source(&self, i: usize) -> &SceneObject {
        self.sources().nth(i).expect("source index in range")
    }

    /// Number of target candidates.
    pub fn n(&self) -> usize {
        self.targets().count()
    }

    /// Number of source candidates.
    pub fn m(&self) -> usize {
        self.sources().count()
    }

    /// Checks box containment, target/source references and counts.
    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.n() == 0 || m == 0 {
            return Err(Error::Generation(format!("scene {} lacks targets or sources", self.id)));
        }
        for (k, o) in self.objects.iter().enumerate() {
            if !o.bbox.inside(self.width, self.height) {
                return Err(Error::Generation(format!("scene {} object {k} leaves the frame", self.id)));
            }
            match (o.kind, o.source_index) {
                (ObjectKind::TargetCandidate, Some(s)) if s < m => {}
                (ObjectKind::SourceCandidate, None) => {}
                _ => {
                    return Err(Error::Generation(format!(
                        "scene {} object {k} has an invalid source reference",
                        self.id
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Style {
    /// Mentions the source furniture.
    #[serde(rename = "I_F")]
    WithSource,
    /// Mentions no furniture.
    #[serde(rename = "I_N")]
    NoSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityMode {
    Unique,
    Implicit,
    Ambiguous,
    Erroneous,
}

impl AmbiguityMode {
    pub const ALL: [AmbiguityMode; 4] = [
        AmbiguityMode::Unique,
        AmbiguityMode::Implicit,
        AmbiguityMode::Ambiguous,
        AmbiguityMode::Erroneous,
    ];
}

/// Likelihood of a candidate given an instruction, from very likely (A1)
/// to very unlikely (A4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    A1,
    A2,
    A3,
    A4,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::A1, Label::A2, Label::A3, Label::A4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_likely(self) -> bool {
        matches!(self, Label::A1 | Label::A2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub scene_id: u64,
    /// Whitespace-separated words.
    pub text: Vec<String>,
    pub style: Style,
    pub mode: AmbiguityMode,
    pub gt_target: usize,
    pub gt_source: usize,
    pub labels: Vec<Label>,
    pub mention: Mention,
}

impl Instruction {
    pub fn sentence(&self) -> String {
        self.text.join(" ")
    }
}

/// Word pools and sampling ranges for the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: f64,
    pub height: f64,
    pub target_categories: Vec<String>,
    pub source_categories: Vec<String>,
    pub colors: Vec<String>,
    pub sizes: Vec<String>,
    /// Inclusive range of target candidates per scene.
    pub n_targets: [usize; 2],
    /// Inclusive range of source candidates per scene.
    pub n_sources: [usize; 2],
    /// Probability that a new target copies the category and colour of an
    /// earlier one (a look-alike distractor).
    pub twin_prob: f64,
    /// Probability that an instruction mentions its source.
    pub source_style_prob: f64,
    /// Relative weights of unique / implicit / ambiguous / erroneous instructions.
    pub mode_weights: [f64; 4],
    /// Per description word probability of a spelling corruption.
    pub misspell_rate: f64,
    /// Mean words per instruction aimed for with filler phrases.
    pub target_words: f64,
    /// Instructions per scene; `None` gives one per target candidate.
    pub instructions_per_scene: Option<usize>,
    /// Gaussian noise on visual descriptors.
    pub descriptor_sigma: f64,
    /// Relative Gaussian jitter on emitted boxes (emulated detection error).
    pub box_jitter: f64,
    /// Adds target-minus-source centre offsets to the relational features.
    pub wrs_mode: bool,
    pub max_retries: usize,
}

fn words(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 480.0,
            target_categories: words(&[
                "bottle", "can", "cup", "mug", "ball", "doll", "sponge", "book", "apple", "toy",
            ]),
            source_categories: words(&["table", "shelf", "desk", "drawer", "sofa", "bed"]),
            colors: words(&["red", "green", "blue", "yellow", "white", "black", "grey", "brown"]),
            sizes: words(&["small", "large"]),
            n_targets: [2, 5],
            n_sources: [1, 3],
            twin_prob: 0.3,
            source_style_prob: 0.5,
            mode_weights: [1.0, 0.0, 0.0, 0.0],
            misspell_rate: 0.0,
            target_words: 7.4,
            instructions_per_scene: None,
            descriptor_sigma: 0.1,
            box_jitter: 0.0,
            wrs_mode: false,
            max_retries: 200,
        }
    }
}

impl SceneConfig {
    /// Every configuration problem, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.width > 0.0 && self.height > 0.0) {
            p.push("dataset.width/height must be positive".into());
        }
        if self.target_categories.is_empty() {
            p.push("dataset.target_categories is empty".into());
        }
        if self.source_categories.is_empty() {
            p.push("dataset.source_categories is empty".into());
        }
        if self.colors.is_empty() {
            p.push("dataset.colors is empty".into());
        }
        if self.sizes.is_empty() {
            p.push("dataset.sizes is empty".into());
        }
        let mut all: Vec<&String> = self
            .target_categories
            .iter()
            .chain(&self.source_categories)
            .chain(&self.colors)
            .chain(&self.sizes)
            .collect();
        let total = all.len();
        all.sort();
        all.dedup();
        if all.len() != total {
            p.push("dataset word pools must be disjoint".into());
        }
        if all.iter().any(|w| w.as_str() == HYPERNYM) {
            p.push(format!("dataset word pools must not contain the hypernym {HYPERNYM:?}"));
        }
        if self.n_targets[0] < 1 || self.n_targets[0] > self.n_targets[1] {
            p.push(format!("dataset.n_targets {:?} must be a range starting at >= 1", self.n_targets));
        }
        if self.n_sources[0] < 1 || self.n_sources[0] > self.n_sources[1] {
            p.push(format!("dataset.n_sources {:?} must be a range starting at >= 1", self.n_sources));
        }
        for (name, v) in [
            ("dataset.twin_prob", self.twin_prob),
            ("dataset.source_style_prob", self.source_style_prob),
            ("dataset.misspell_rate", self.misspell_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                p.push(format!("{name} = {v} is not a probability"));
            }
        }
        if self.mode_weights.iter().any(|&w| !(w >= 0.0)) || self.mode_weights.iter().sum::<f64>() <= 0.0 {
            p.push("dataset.mode_weights must be non-negative with a positive sum".into());
        }
        if self.instructions_per_scene == Some(0) {
            p.push("dataset.instructions_per_scene must be >= 1".into());
        }
        if !(self.descriptor_sigma >= 0.0) || !(self.box_jitter >= 0.0) {
            p.push("dataset.descriptor_sigma and dataset.box_jitter must be >= 0".into());
        }
        if self.max_retries == 0 {
            p.push("dataset.max_retries must be >= 1".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    /// Mean number of target candidates per scene implied by the range.
    pub fn expected_targets(&self) -> f64 {
        (self.n_targets[0] + self.n_targets[1]) as f64 / 2.0
    }

    /// All attribute words in descriptor order.
    pub fn attribute_words(&self) -> Vec<&str> {
        self.colors.iter().chain(&self.sizes).map(String::as_str).collect()
    }

    /// All category words in descriptor order.
    pub fn category_words(&self) -> Vec<&str> {
        self.target_categories
            .iter()
            .chain(&self.source_categories)
            .map(String::as_str)
            .collect()
    }
}
