//! The multimodal target-source classifier.
//!
//! For an instruction and one target candidate the model computes
//! `o_I = MLP_I(BiLSTM(x_ins))` and `o_V = MLP_V(x_v ⊕ x_rel)`, then a target
//! head and a source head on `o_V ⊕ o_I`. Each candidate is scored on its own
//! (region-wise), so no information passes between candidates.

mod pairs;
mod train;

pub use pairs::{build_pairs, LatentPair, PairSet, RecordLatents};
pub use train::{fit, EpochLog, LrSchedule, TrainConfig, TrainLog, Trainable};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::encoder::{train_vocab, EncoderConfig, InstructionEncoder, Pooling, Tokenizer, WordVocab};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, NormPlacement, ParamId, ParamStore};
use crate::scene::{candidate_features, CandidateFeatures, Record, SceneConfig};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Classes of the target head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadArity {
    /// `{unlikely, likely}`.
    Binary,
    /// `{A1, A2, A3, A4}`.
    Labels,
}

impl HeadArity {
    pub fn classes(self) -> usize {
        match self {
            HeadArity::Binary => 2,
            HeadArity::Labels => 4,
        }
    }

    /// Probability mass of the "likely" outcome.
    pub fn positive(self, probs: &[f64]) -> f64 {
        match self {
            HeadArity::Binary => probs[1],
            HeadArity::Labels => probs[0] + probs[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    Subword,
    Word,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub tokenizer: TokenizerKind,
    /// Target size of the sub-word vocabulary.
    pub vocab_size: usize,
    /// Minimum count for a whole word to get its own id.
    pub word_min_count: usize,
    pub d_emb: usize,
    pub embedding_sigma: f64,
    pub d_h: usize,
    pub lstm_layers: usize,
    pub pooling: Pooling,
    /// Hidden widths of MLP-I and MLP-V.
    pub mlp_hidden: Vec<usize>,
    /// Width of `o_V` and `o_I`.
    pub d_lat: usize,
    /// Output activation of MLP-I and MLP-V.
    pub latent_activation: Activation,
    /// Hidden width of the target head; 0 makes it a single affine layer.
    pub target_hidden: usize,
    pub source_hidden: Vec<usize>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub source_head: bool,
    pub head: HeadArity,
    /// Running-statistics standardisation inside the MLPs.
    pub norm: bool,
    /// Feeds `o_V ⊙ o_I` to the heads alongside `o_V ⊕ o_I`.
    pub interaction: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerKind::Subword,
            vocab_size: 300,
            word_min_count: 2,
            d_emb: 16,
            embedding_sigma: 1.0,
            d_h: 16,
            lstm_layers: 1,
            pooling: Pooling::Final,
            mlp_hidden: vec![64],
            d_lat: 32,
            latent_activation: Activation::Identity,
            target_hidden: 64,
            source_hidden: vec![16],
            lambda1: 1.0,
            lambda2: 0.7,
            source_head: true,
            head: HeadArity::Binary,
            norm: false,
            interaction: true,
        }
    }
}

impl ModelConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        for (name, v) in [
            ("model.d_emb", self.d_emb),
            ("model.d_h", self.d_h),
            ("model.lstm_layers", self.lstm_layers),
            ("model.d_lat", self.d_lat),
        ] {
            if v == 0 {
                p.push(format!("{name} must be >= 1"));
            }
        }
        if self.mlp_hidden.contains(&0) || self.source_hidden.contains(&0) {
            p.push("model hidden widths must be >= 1".into());
        }
        if !(self.embedding_sigma > 0.0) {
            p.push("model.embedding_sigma must be > 0".into());
        }
        if !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            p.push("model.lambda1 and model.lambda2 must be >= 0".into());
        }
        if self.tokenizer == TokenizerKind::Subword && self.vocab_size < 26 {
            p.push(format!("model.vocab_size = {} is below the alphabet size", self.vocab_size));
        }
        p
    }
}

/// Builds the tokenizer named by `cfg` from training sentences.
pub fn build_tokenizer(cfg: &ModelConfig, corpus: &[String]) -> Result<Tokenizer> {
    Ok(match cfg.tokenizer {
        TokenizerKind::Subword => Tokenizer::Subword(train_vocab(corpus, cfg.vocab_size)?),
        TokenizerKind::Word => Tokenizer::Word(WordVocab::train(corpus, cfg.word_min_count)),
    })
}

/// A record turned into model inputs and per-candidate targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub scene_id: u64,
    pub ids: Vec<usize>,
    /// `x_v ⊕ x_rel` per candidate.
    pub candidates: Vec<Vec<f64>>,
    /// Target-head class per candidate.
    pub targ: Vec<usize>,
    /// 1 when the candidate rests on the instructed source.
    pub src: Vec<usize>,
    pub likely: Vec<bool>,
    pub gt: usize,
    /// Other instructions on the same scene that name a different target.
    pub siblings: Vec<Sibling>,
}

/// Token ids and ground-truth target of another instruction on the same scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Sibling {
    pub ids: Vec<usize>,
    pub gt: usize,
}

impl Sample {
    pub fn n(&self) -> usize {
        self.candidates.len()
    }
}

/// Tokenises every record and computes its candidate features.
pub fn prepare(records: &[Record], tokenizer: &Tokenizer, head: HeadArity, scene_cfg: &SceneConfig, seed: u64) -> Vec<Sample> {
    let ids: Vec<Vec<usize>> = records.iter().map(|r| tokenizer.ids(&r.text)).collect();
    let mut by_scene: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (k, r) in records.iter().enumerate() {
        by_scene.entry(r.scene_id).or_default().push(k);
    }
    records
        .iter()
        .zip(&ids)
        .map(|(r, ids_r)| {
            let scene = r.scene();
            let candidates: Vec<Vec<f64>> = candidate_features(&scene, scene_cfg, seed)
                .iter()
                .map(CandidateFeatures::joined)
                .collect();
            let targ = r
                .labels
                .iter()
                .map(|l| match head {
                    HeadArity::Binary => l.is_likely() as usize,
                    HeadArity::Labels => l.index(),
                })
                .collect();
            let src = scene
                .targets()
                .map(|t| (t.source_index == Some(r.gt_source)) as usize)
                .collect();
            let siblings = by_scene[&r.scene_id]
                .iter()
                .filter(|&&k| records[k].gt_target != r.gt_target)
                .map(|&k| Sibling {
                    ids: ids[k].clone(),
                    gt: records[k].gt_target,
                })
                .collect();
            Sample {
                scene_id: r.scene_id,
                ids: ids_r.clone(),
                candidates,
                targ,
                src,
                likely: r.labels.iter().map(|l| l.is_likely()).collect(),
                gt: r.gt_target,
                siblings,
            }
        })
        .collect()
}

/// `-ln max(p[class], ε)`.
pub fn cross_entropy(g: &mut Graph, probs: Var, class: usize) -> Result<Var> {
    let p = g.pick(probs, class)?;
    let p = g.clamp_min(p, PROB_FLOOR);
    let l = g.log(p)?;
    Ok(g.scale(l, -1.0))
}

/// Output for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub y_targ: Vec<f64>,
    pub y_src: Option<Vec<f64>>,
    pub o_v: Vec<f64>,
    pub o_i: Vec<f64>,
}

/// Scores a latent pair: probability that the candidate behind `o_v` is the
/// one the instruction behind `o_i` asks for.
pub trait Scorer {
    fn score(&self, o_v: &[f64], o_i: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MtcmModel {
    pub config: ModelConfig,
    pub tokenizer: Tokenizer,
    pub store: ParamStore,
    pub encoder: InstructionEncoder,
    pub mlp_i: Mlp,
    pub mlp_v: Mlp,
    pub target_head: Mlp,
    pub source_head: Option<Mlp>,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
}

impl MtcmModel {
    /// `input_dim` is the length of `x_v ⊕ x_rel`.
    pub fn new(config: ModelConfig, tokenizer: Tokenizer, input_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let p = config.problems();
        if !p.is_empty() {
            return Err(Error::Validation(p));
        }
        if input_dim == 0 {
            return Err(Error::Config("candidate feature width must be >= 1".into()));
        }
        let norm = |p: NormPlacement| if config.norm { p } else { NormPlacement::None };
        let mut store = ParamStore::new();
        let enc_cfg = EncoderConfig {
            vocab: tokenizer.id_count(),
            d_emb: config.d_emb,
            d_h: config.d_h,
            layers: config.lstm_layers,
            pooling: config.pooling,
            embedding_sigma: config.embedding_sigma,
        };
        let encoder = InstructionEncoder::new(&mut store, "encoder", enc_cfg, rng)?;
        let d_lat = config.d_lat;
        let d_joint = if config.interaction { 3 * d_lat } else { 2 * d_lat };
        let mlp_i = Mlp::new(
            &mut store,
            "mlp_i",
            &widths(encoder.output_dim(), &config.mlp_hidden, d_lat),
            Activation::Relu,
            config.latent_activation,
            norm(NormPlacement::All),
            rng,
        )?;
        let mlp_v = Mlp::new(
            &mut store,
            "mlp_v",
            &widths(input_dim, &config.mlp_hidden, d_lat),
            Activation::Relu,
            config.latent_activation,
            norm(NormPlacement::All),
            rng,
        )?;
        let head_hidden: Vec<usize> = (config.target_hidden > 0).then_some(config.target_hidden).into_iter().collect();
        let target_head = Mlp::new(
            &mut store,
            "target_head",
            &widths(d_joint, &head_hidden, config.head.classes()),
            Activation::Relu,
            Activation::Identity,
            norm(NormPlacement::Hidden),
            rng,
        )?;
        let source_head = config
            .source_head
            .then(|| {
                Mlp::new(
                    &mut store,
                    "mlp_s",
                    &widths(d_joint, &config.source_hidden, 2),
                    Activation::Relu,
                    Activation::Identity,
                    norm(NormPlacement::Hidden),
                    rng,
                )
            })
            .transpose()?;
        Ok(Self {
            config,
            tokenizer,
            store,
            encoder,
            mlp_i,
            mlp_v,
            target_head,
            source_head,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp_v.input_dim()
    }

    pub fn source_head_param_ids(&self) -> Vec<ParamId> {
        self.source_head.as_ref().map(Mlp::param_ids).unwrap_or_default()
    }

    pub fn instruction_latent(&self, g: &mut Graph, ids: &[usize], track: bool) -> Result<Var> {
        let e = self.encoder.forward(g, &self.store, ids)?;
        self.mlp_i.forward(g, &self.store, e, track)
    }

    pub fn candidate_latent(&self, g: &mut Graph, x: &[f64], track: bool) -> Result<Var> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("candidate features", &[x.len()], &[self.input_dim()]));
        }
        let x = g.constant(x)?;
        self.mlp_v.forward(g, &self.store, x, track)
    }

    /// `(y_targ, y_src)` as probability vectors.
    pub fn heads(&self, g: &mut Graph, o_v: Var, o_i: Var, track: bool) -> Result<(Var, Option<Var>)> {
        let joint = if self.config.interaction {
            let prod = g.mul(o_v, o_i)?;
            g.concat(&[o_v, o_i, prod])?
        } else {
            g.concat(&[o_v, o_i])?
        };
        let t = self.target_head.forward(g, &self.store, joint, track)?;
        let t = g.softmax(t)?;
        let s = match &self.source_head {
            Some(h) => {
                let s = h.forward(g, &self.store, joint, track)?;
                Some(g.softmax(s)?)
            }
            None => None,
        };
        Ok((t, s))
    }

    /// Sum over the sample's candidates of `λ1·J_targ + λ2·J_src`.
    fn sample_loss(&self, g: &mut Graph, s: &Sample, track: bool) -> Result<Var> {
        let o_i = self.instruction_latent(g, &s.ids, track)?;
        let mut terms = Vec::with_capacity(s.n());
        for (j, x) in s.candidates.iter().enumerate() {
            let o_v = self.candidate_latent(g, x, track)?;
            let (t, src) = self.heads(g, o_v, o_i, track)?;
            let jt = cross_entropy(g, t, s.targ[j])?;
            let mut term = g.scale(jt, self.config.lambda1);
            if let Some(src) = src {
                let js = cross_entropy(g, src, s.src[j])?;
                let js = g.scale(js, self.config.lambda2);
                term = g.add(term, js)?;
            }
            terms.push(term);
        }
        g.add_all(&terms)
    }

    /// `J = λ1·J_targ + λ2·J_src`, averaged over every candidate in the batch.
    pub fn loss(&self, g: &mut Graph, batch: &[&Sample], track: bool) -> Result<Var> {
        let count: usize = batch.iter().map(|s| s.n()).sum();
        if count == 0 {
            return Err(Error::Contract("loss over an empty batch".into()));
        }
        let terms: Vec<Var> = batch.iter().map(|s| self.sample_loss(g, s, track)).collect::<Result<_>>()?;
        let total = g.add_all(&terms)?;
        Ok(g.scale(total, 1.0 / count as f64))
    }

    pub fn predict(&self, s: &Sample) -> Result<Vec<Prediction>> {
        let mut g = Graph::new();
        let o_i = self.instruction_latent(&mut g, &s.ids, false)?;
        s.candidates
            .iter()
            .map(|x| {
                let o_v = self.candidate_latent(&mut g, x, false)?;
                let (t, src) = self.heads(&mut g, o_v, o_i, false)?;
                Ok(Prediction {
                    y_targ: g.value(t).to_vec(),
                    y_src: src.map(|v| g.value(v).to_vec()),
                    o_v: g.value(o_v).to_vec(),
                    o_i: g.value(o_i).to_vec(),
                })
            })
            .collect()
    }

    /// Latents of one record, detached from any graph.
    pub fn latents(&self, s: &Sample) -> Result<RecordLatents> {
        let preds = self.predict(s)?;
        Ok(RecordLatents {
            scene_id: s.scene_id,
            gt: s.gt,
            o_i: preds[0].o_i.clone(),
            o_v: preds.into_iter().map(|p| p.o_v).collect(),
        })
    }
}

/// Picks the candidate an instruction refers to.
pub trait Top1 {
    /// Index of the best-scoring candidate; ties go to the lowest index.
    fn top1(&self, s: &Sample) -> Result<usize>;
}

impl Top1 for MtcmModel {
    fn top1(&self, s: &Sample) -> Result<usize> {
        let scores: Vec<f64> = self
            .predict(s)?
            .iter()
            .map(|p| self.config.head.positive(&p.y_targ))
            .collect();
        Ok(argmax(&scores))
    }
}

impl Scorer for MtcmModel {
    fn score(&self, o_v: &[f64], o_i: &[f64]) -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(o_v)?;
        let i = g.constant(o_i)?;
        let (t, _) = self.heads(&mut g, v, i, false)?;
        Ok(self.config.head.positive(g.value(t)))
    }
}

impl Trainable for MtcmModel {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn batch_loss(&self, g: &mut Graph, batch: &[&Sample], _rng: &mut crate::rng::Rng) -> Result<Var> {
        self.loss(g, batch, true)
    }

    fn update_stats(&mut self, g: &Graph) {
        self.mlp_i.update_norms(g);
        self.mlp_v.update_norms(g);
        self.target_head.update_norms(g);
        if let Some(h) = &mut self.source_head {
            h.update_norms(g);
        }
    }

    /// Mean loss per candidate and balanced accuracy (mean of the
    /// likely-class and unlikely-class recalls) at the 0.5 threshold.
    fn evaluate(&self, valid: &[Sample]) -> Result<(f64, f64)> {
        let mut loss = 0.0;
        let mut hits = [0usize; 2];
        let mut seen = [0usize; 2];
        for s in valid {
            let mut g = Graph::new();
            let l = self.sample_loss(&mut g, s, false)?;
            loss += g.scalar(l);
            for (p, &likely) in self.predict(s)?.iter().zip(&s.likely) {
                let k = likely as usize;
                seen[k] += 1;
                hits[k] += ((self.config.head.positive(&p.y_targ) >= 0.5) == likely) as usize;
            }
        }
        let total = (seen[0] + seen[1]).max(1) as f64;
        let recalls: Vec<f64> = (0..2).filter(|&k| seen[k] > 0).map(|k| hits[k] as f64 / seen[k] as f64).collect();
        let acc = if recalls.is_empty() { 0.0 } else { recalls.iter().sum::<f64>() / recalls.len() as f64 };
        Ok((loss / total, acc))
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
