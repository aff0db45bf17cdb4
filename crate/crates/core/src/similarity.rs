//! Similarity-based baseline: instruction and candidate are embedded by two
//! networks `g1`, `g2` and matched by cosine similarity under a hinge loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::encoder::{EncoderConfig, InstructionEncoder, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{argmax, cross_entropy, ModelConfig, Sample, Top1, Trainable};
use crate::nn::{Activation, Mlp, NormPlacement, ParamId, ParamStore};

/// `u·v / (‖u‖‖v‖)`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::dim("cosine", &[u.len()], &[v.len()]));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Domain {
            op: "cosine",
            detail: "zero vector".into(),
        });
    }
    let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((d / (nu * nv)).clamp(-1.0, 1.0))
}

/// Floor on `‖u‖²‖v‖²` inside [`cosine_var`].
pub const NORM_FLOOR: f64 = 1e-24;

/// Differentiable cosine similarity. A vanishing norm product is floored at
/// [`NORM_FLOOR`], so a zero embedding scores 0 instead of failing mid-training.
pub fn cosine_var(g: &mut Graph, u: Var, v: Var) -> Result<Var> {
    let uu = g.dot(u, u)?;
    let vv = g.dot(v, v)?;
    let uv = g.dot(u, v)?;
    let norms = g.mul(uu, vv)?;
    let norms = g.clamp_min(norms, NORM_FLOOR);
    let norms = g.sqrt(norms)?;
    g.div(uv, norms)
}

/// Distractors drawn for one sample of a hinge-loss batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HingeDraw {
    /// Candidate `j ≠ gt` paired with this sample's instruction.
    pub j: Option<usize>,
    /// Sibling instruction `k` paired with this sample's target.
    pub k: Option<usize>,
}

/// Draws one `(j, k)` per sample. Returns the draws and the number of hinge
/// terms that had no distractor.
pub fn draw_distractors(batch: &[&Sample], rng: &mut impl Rng) -> (Vec<HingeDraw>, usize) {
    let mut skipped = 0;
    let draws = batch
        .iter()
        .map(|s| {
            let j = (s.n() >= 2).then(|| {
                let j = rng.random_range(0..s.n() - 1);
                if j >= s.gt {
                    j + 1
                } else {
                    j
                }
            });
            let k = (!s.siblings.is_empty()).then(|| rng.random_range(0..s.siblings.len()));
            skipped += j.is_none() as usize + k.is_none() as usize;
            HingeDraw { j, k }
        })
        .collect();
    (draws, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    /// Margin `λ_M`.
    pub margin: f64,
    /// Weight of the source-head cross-entropy when the head is enabled.
    pub source_weight: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            source_weight: 0.7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityModel {
    pub model: ModelConfig,
    pub config: SimilarityConfig,
    pub tokenizer: Tokenizer,
    pub store: ParamStore,
    pub encoder: InstructionEncoder,
    pub g1: Mlp,
    pub g2: Mlp,
    /// Present when `model.source_head` is set.
    pub source_head: Option<Mlp>,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
}

impl SimilarityModel {
    /// Reuses the encoder and MLP sizes of `model`; `d_lat` is the embedding width.
    pub fn new(
        model: ModelConfig,
        config: SimilarityConfig,
        tokenizer: Tokenizer,
        input_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut p = model.problems();
        if !(config.margin >= 0.0) {
            p.push("similarity.margin must be >= 0".into());
        }
        if !(config.source_weight >= 0.0) {
            p.push("similarity.source_weight must be >= 0".into());
        }
        if !p.is_empty() {
            return Err(Error::Validation(p));
        }
        let mut store = ParamStore::new();
        let encoder = InstructionEncoder::new(
            &mut store,
            "encoder",
            EncoderConfig {
                vocab: tokenizer.id_count(),
                d_emb: model.d_emb,
                d_h: model.d_h,
                layers: model.lstm_layers,
                pooling: model.pooling,
                embedding_sigma: model.embedding_sigma,
            },
            rng,
        )?;
        let d = model.d_lat;
        let g1 = Mlp::new(
            &mut store,
            "g1",
            &widths(encoder.output_dim(), &model.mlp_hidden, d),
            Activation::Relu,
            Activation::Identity,
            NormPlacement::None,
            rng,
        )?;
        let g2 = Mlp::new(
            &mut store,
            "g2",
            &widths(input_dim, &model.mlp_hidden, d),
            Activation::Relu,
            Activation::Identity,
            NormPlacement::None,
            rng,
        )?;
        let source_head = model
            .source_head
            .then(|| {
                Mlp::new(
                    &mut store,
                    "mlp_s",
                    &widths(encoder.output_dim() + input_dim, &model.source_hidden, 2),
                    Activation::Relu,
                    Activation::Identity,
                    NormPlacement::None,
                    rng,
                )
            })
            .transpose()?;
        Ok(Self {
            model,
            config,
            tokenizer,
            store,
            encoder,
            g1,
            g2,
            source_head,
        })
    }

    pub fn source_head_param_ids(&self) -> Vec<ParamId> {
        self.source_head.as_ref().map(Mlp::param_ids).unwrap_or_default()
    }

    pub fn embed_instruction(&self, g: &mut Graph, ids: &[usize]) -> Result<Var> {
        let e = self.encoder.forward(g, &self.store, ids)?;
        self.g1.forward(g, &self.store, e, false)
    }

    pub fn embed_candidate(&self, g: &mut Graph, x: &[f64]) -> Result<Var> {
        if x.len() != self.g2.input_dim() {
            return Err(Error::dim("candidate features", &[x.len()], &[self.g2.input_dim()]));
        }
        let x = g.constant(x)?;
        self.g2.forward(g, &self.store, x, false)
    }

    /// `J_sim` summed over the batch, plus the weighted source cross-entropy
    /// over every candidate when the source head is enabled.
    ///
    /// For sample `i` with instruction `u_i` and target `v_i` the hinge terms
    /// are `max(0, λ_M + f(u_i, v_j) − f(u_i, v_i))` and
    /// `max(0, λ_M + f(u_k, v_i) − f(u_i, v_i))`; terms without a draw are
    /// left out.
    pub fn hinge_loss(&self, g: &mut Graph, batch: &[&Sample], draws: &[HingeDraw]) -> Result<Var> {
        if batch.len() != draws.len() {
            return Err(Error::Contract(format!("{} samples but {} draws", batch.len(), draws.len())));
        }
        let m = self.config.margin;
        let mut terms = Vec::new();
        for (s, d) in batch.iter().zip(draws) {
            let e = self.encoder.forward(g, &self.store, &s.ids)?;
            let u = self.g1.forward(g, &self.store, e, false)?;
            let v = self.embed_candidate(g, &s.candidates[s.gt])?;
            let pos = cosine_var(g, u, v)?;
            if let Some(j) = d.j {
                let vj = self.embed_candidate(g, &s.candidates[j])?;
                let neg = cosine_var(g, u, vj)?;
                terms.push(hinge(g, m, neg, pos)?);
            }
            if let Some(k) = d.k {
                let uk = self.embed_instruction(g, &s.siblings[k].ids)?;
                let neg = cosine_var(g, uk, v)?;
                terms.push(hinge(g, m, neg, pos)?);
            }
            if let Some(head) = &self.source_head {
                for (c, x) in s.candidates.iter().enumerate() {
                    let xc = g.constant(x)?;
                    let joint = g.concat(&[e, xc])?;
                    let logits = head.forward(g, &self.store, joint, false)?;
                    let probs = g.softmax(logits)?;
                    let ce = cross_entropy(g, probs, s.src[c])?;
                    terms.push(g.scale(ce, self.config.source_weight));
                }
            }
        }
        if terms.is_empty() {
            return Ok(g.scalar_constant(0.0));
        }
        g.add_all(&terms)
    }

    /// Cosine similarity of the instruction with every candidate.
    pub fn similarities(&self, s: &Sample) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let u = self.embed_instruction(&mut g, &s.ids)?;
        s.candidates
            .iter()
            .map(|x| {
                let v = self.embed_candidate(&mut g, x)?;
                let c = cosine_var(&mut g, u, v)?;
                Ok(g.scalar(c))
            })
            .collect()
    }
}

fn hinge(g: &mut Graph, margin: f64, neg: Var, pos: Var) -> Result<Var> {
    let d = g.sub(neg, pos)?;
    let d = g.add_scalar(d, margin);
    Ok(g.relu(d))
}

/// Index of the largest score; ties go to the lowest index.
pub fn top1_predict(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Contract("top-1 over zero candidates".into()));
    }
    Ok(argmax(scores))
}

impl Top1 for SimilarityModel {
    fn top1(&self, s: &Sample) -> Result<usize> {
        top1_predict(&self.similarities(s)?)
    }
}

impl Trainable for SimilarityModel {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn batch_loss(&self, g: &mut Graph, batch: &[&Sample], rng: &mut crate::rng::Rng) -> Result<Var> {
        let (draws, skipped) = draw_distractors(batch, rng);
        if skipped > 0 {
            log::debug!("hinge loss: {skipped} terms without a distractor");
        }
        self.hinge_loss(g, batch, &draws)
    }

    fn update_stats(&mut self, _g: &Graph) {}

    /// Mean hinge loss with deterministic distractors, and top-1 accuracy.
    fn evaluate(&self, valid: &[Sample]) -> Result<(f64, f64)> {
        let mut rng = crate::rng::rng_from_seed(0);
        let mut loss = 0.0;
        let mut correct = 0usize;
        for s in valid {
            let (draws, _) = draw_distractors(&[s], &mut rng);
            let mut g = Graph::new();
            let l = self.hinge_loss(&mut g, &[s], &draws)?;
            loss += g.scalar(l);
            correct += (self.top1(s)? == s.gt) as usize;
        }
        let n = valid.len().max(1) as f64;
        Ok((loss / n, correct as f64 / n))
    }
}
