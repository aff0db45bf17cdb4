use rand::Rng;
use serde::{Deserialize, Serialize};

/// Latents of one instruction and every candidate of its scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLatents {
    pub scene_id: u64,
    /// Candidate the instruction refers to.
    pub gt: usize,
    pub o_i: Vec<f64>,
    pub o_v: Vec<Vec<f64>>,
}

impl RecordLatents {
    pub fn d_lat(&self) -> usize {
        self.o_i.len()
    }
}

/// `(o_V(candidate), o_I(record))` with its correct/incorrect label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentPair {
    pub record: usize,
    pub candidate: usize,
    pub positive: bool,
}

impl LatentPair {
    pub fn o_v<'a>(&self, latents: &'a [RecordLatents]) -> &'a [f64] {
        &latents[self.record].o_v[self.candidate]
    }

    pub fn o_i<'a>(&self, latents: &'a [RecordLatents]) -> &'a [f64] {
        &latents[self.record].o_i
    }

    /// `o_V ⊕ o_I`.
    pub fn joined(&self, latents: &[RecordLatents]) -> Vec<f64> {
        let mut x = self.o_v(latents).to_vec();
        x.extend_from_slice(self.o_i(latents));
        x
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<LatentPair>,
    /// Records left out because their scene has a single candidate.
    pub skipped: usize,
}

/// `R(i) = R₊(i) ∪ γR₋(i)` for every record: the correct pair plus `γ`
/// incorrect pairs `(o_V(j), o_I(i))`, `j ≠ i` drawn uniformly with
/// replacement from the same scene.
pub fn build_pairs(latents: &[RecordLatents], gamma: usize, rng: &mut impl Rng) -> PairSet {
    let mut set = PairSet::default();
    for (r, l) in latents.iter().enumerate() {
        let n = l.o_v.len();
        if gamma >= 1 && n < 2 {
            set.skipped += 1;
            continue;
        }
        set.pairs.push(LatentPair {
            record: r,
            candidate: l.gt,
            positive: true,
        });
        for _ in 0..gamma {
            // uniform over the n - 1 other candidates
            let mut j = rng.random_range(0..n - 1);
            if j >= l.gt {
                j += 1;
            }
            set.pairs.push(LatentPair {
                record: r,
                candidate: j,
                positive: false,
            });
        }
    }
    if set.skipped > 0 {
        log::warn!("build_pairs: skipped {} single-candidate records", set.skipped);
    }
    set
}
