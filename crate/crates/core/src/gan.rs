//! Latent-space GAN on `(o_V, o_I)` pairs.
//!
//! `G` maps noise `z` (optionally with a candidate latent `o_V`) to a fake
//! pair; `D` has a shared trunk and two heads: the probability that its input
//! is real and a correct/incorrect classifier. Training alternates
//! `J_D = J_S + λJ` and `J_G = −J_S`; the classifier head of the best
//! validation epoch is the augmented model's scorer.
//!
//! `D` reads raw latent pairs. `G` works in a scaled space: its conditioning
//! `o_V` is scaled into `(−bound, bound)` and its tanh output is mapped back.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_pairs, PairEvaluation};
use crate::model::{build_pairs, cross_entropy, HeadArity, MtcmModel, RecordLatents, Scorer, PROB_FLOOR};
use crate::nn::{Activation, Linear, Mlp, NormPlacement, ParamId, ParamStore};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{derive_seed, rng_for, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanMode {
    /// `G(z, o_V)`.
    Conditioned,
    /// `G(z)`.
    Unconditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub mode: GanMode,
    pub d_z: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    /// Weight `λ` of the classification loss in `J_D`.
    pub lambda: f64,
    /// Incorrect pairs per correct pair in the real batches.
    pub gamma: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Also train the classifier head on fakes, labelled like the real pair
    /// whose `o_V` conditioned them.
    pub classify_fakes: bool,
    /// Feeds `o_V ⊙ o_I` to `D` alongside the pair.
    pub interaction: bool,
    /// Start `D`'s trunk and class head from the MTCM target head when one is
    /// supplied; `d_hidden` and `interaction` then follow the MTCM.
    pub warm_start: bool,
    /// Consecutive saturated batches that count as a collapsed `D`.
    pub collapse_window: usize,
    /// Real latents are mapped affinely into `(−bound, bound)`.
    pub scale_bound: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            mode: GanMode::Conditioned,
            d_z: 8,
            g_hidden: vec![32, 32, 32],
            d_hidden: vec![32, 64],
            lambda: 0.2,
            gamma: 1,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.9,
            batch_size: 64,
            epochs: 30,
            classify_fakes: false,
            interaction: true,
            warm_start: true,
            collapse_window: 100,
            scale_bound: 0.95,
        }
    }
}

impl GanConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.d_z == 0 {
            p.push("gan.d_z must be >= 1".into());
        }
        if self.g_hidden.contains(&0) || self.d_hidden.is_empty() || self.d_hidden.contains(&0) {
            p.push("gan hidden widths must be >= 1 and D needs at least one hidden layer".into());
        }
        if !(self.lambda >= 0.0) {
            p.push("gan.lambda must be >= 0".into());
        }
        if !(self.lr > 0.0) {
            p.push("gan.lr must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            p.push("gan.beta1 and gan.beta2 must lie in [0, 1)".into());
        }
        if self.batch_size == 0 {
            p.push("gan.batch_size must be >= 1".into());
        }
        if !(self.scale_bound > 0.0 && self.scale_bound < 1.0) {
            p.push("gan.scale_bound must lie in (0, 1)".into());
        }
        p
    }
}

/// Per-coordinate affine map of latent pairs into `(−bound, bound)`, fitted on
/// the training latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentScaler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bound: f64,
}

impl LatentScaler {
    /// Fits on every `o_V ⊕ o_I` combination present in `latents`.
    pub fn fit(latents: &[RecordLatents], bound: f64) -> Result<Self> {
        let first = latents.first().ok_or_else(|| Error::Contract("scaler fitted on no latents".into()))?;
        let d = first.d_lat();
        let mut lo = vec![f64::INFINITY; 2 * d];
        let mut hi = vec![f64::NEG_INFINITY; 2 * d];
        for l in latents {
            for v in &l.o_v {
                for (k, &x) in v.iter().enumerate() {
                    lo[k] = lo[k].min(x);
                    hi[k] = hi[k].max(x);
                }
            }
            for (k, &x) in l.o_i.iter().enumerate() {
                lo[d + k] = lo[d + k].min(x);
                hi[d + k] = hi[d + k].max(x);
            }
        }
        Ok(Self { lo, hi, bound })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn map(&self, k: usize, x: f64) -> f64 {
        let span = self.hi[k] - self.lo[k];
        if span > 0.0 {
            self.bound * (2.0 * (x - self.lo[k]) / span - 1.0)
        } else {
            0.0
        }
    }

    /// Affine coefficients `(a, b)` of the inverse map `x = a·s + b`.
    pub fn inverse_coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&lo, &hi)| {
                let half = (hi - lo) / 2.0;
                (half / self.bound, lo + half)
            })
            .unzip()
    }

    /// Scales `o_V ⊕ o_I`.
    pub fn pair(&self, o_v: &[f64], o_i: &[f64]) -> Vec<f64> {
        o_v.iter().chain(o_i).enumerate().map(|(k, &x)| self.map(k, x)).collect()
    }

    /// Scales `o_V` alone (the first half of a pair).
    pub fn candidate(&self, o_v: &[f64]) -> Vec<f64> {
        o_v.iter().enumerate().map(|(k, &x)| self.map(k, x)).collect()
    }
}

/// One alternating step's inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GanBatch {
    /// Raw `o_V ⊕ o_I` pairs.
    pub real: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    /// Scaled conditioning `o_V` for the fake at the same position.
    pub cond: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

/// Which network's parameters are live in a loss graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Discriminator,
    Generator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gan {
    pub config: GanConfig,
    pub d_lat: usize,
    pub scaler: LatentScaler,
    pub store: ParamStore,
    pub generator: Mlp,
    pub trunk: Mlp,
    pub source_head: Linear,
    pub class_head: Linear,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
}

impl Gan {
    pub fn new(config: GanConfig, scaler: LatentScaler, rng: &mut impl Rng) -> Result<Self> {
        let p = config.problems();
        if !p.is_empty() {
            return Err(Error::Validation(p));
        }
        let pair = scaler.dim();
        if pair == 0 || pair % 2 != 0 {
            return Err(Error::Config(format!("latent pair width {pair} must be even and positive")));
        }
        let d_lat = pair / 2;
        let g_in = match config.mode {
            GanMode::Conditioned => config.d_z + d_lat,
            GanMode::Unconditioned => config.d_z,
        };
        let mut store = ParamStore::new();
        let generator = Mlp::new(
            &mut store,
            "gan.g",
            &widths(g_in, &config.g_hidden, pair),
            Activation::Relu,
            Activation::Tanh,
            NormPlacement::None,
            rng,
        )?;
        let (trunk_out, trunk_hidden) = config.d_hidden.split_last().expect("validated");
        let trunk = Mlp::new(
            &mut store,
            "gan.d",
            &widths(if config.interaction { 3 * d_lat } else { pair }, trunk_hidden, *trunk_out),
            Activation::Relu,
            Activation::Relu,
            NormPlacement::None,
            rng,
        )?;
        let source_head = Linear::new(&mut store, "gan.d.source", *trunk_out, 1, rng);
        let class_head = Linear::new(&mut store, "gan.d.class", *trunk_out, 2, rng);
        Ok(Self {
            config,
            d_lat,
            scaler,
            store,
            generator,
            trunk,
            source_head,
            class_head,
        })
    }

    /// A GAN whose `D` trunk and class head are copies of `mtcm`'s target
    /// head (when `config.warm_start` is set).
    pub fn from_mtcm(mut config: GanConfig, mtcm: &MtcmModel, scaler: LatentScaler, rng: &mut impl Rng) -> Result<Self> {
        if !config.warm_start {
            return Self::new(config, scaler, rng);
        }
        let m = &mtcm.config;
        if m.head != HeadArity::Binary || m.target_hidden == 0 || m.norm {
            return Err(Error::Config(
                "gan.warm_start needs a binary MTCM target head with one hidden layer and no running norm".into(),
            ));
        }
        if scaler.dim() != 2 * m.d_lat {
            return Err(Error::dim("gan warm start", &[scaler.dim()], &[2 * m.d_lat]));
        }
        config.d_hidden = vec![m.target_hidden];
        config.interaction = m.interaction;
        let mut gan = Self::new(config, scaler, rng)?;
        let head = &mtcm.target_head.layers;
        for (src, dst) in [(&head[0], &gan.trunk.layers[0]), (&head[1], &gan.class_head)] {
            for (s, d) in [(src.weight, dst.weight), (src.bias, dst.bias)] {
                let data = mtcm.store.get(s).data.clone();
                gan.store.get_mut(d).data = data;
            }
        }
        Ok(gan)
    }

    pub fn generator_input_dim(&self) -> usize {
        self.generator.input_dim()
    }

    pub fn generator_param_ids(&self) -> Vec<ParamId> {
        self.generator.param_ids()
    }

    pub fn discriminator_param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.trunk.param_ids();
        ids.extend([self.source_head.weight, self.source_head.bias]);
        ids.extend(self.class_head_param_ids());
        ids
    }

    pub fn class_head_param_ids(&self) -> Vec<ParamId> {
        vec![self.class_head.weight, self.class_head.bias]
    }

    /// `G(z, o_V)` in conditioned mode, `G(z)` otherwise.
    pub fn generate(&self, g: &mut Graph, z: Var, o_v: Option<Var>, frozen: bool) -> Result<Var> {
        let input = match (self.config.mode, o_v) {
            (GanMode::Conditioned, Some(c)) => g.concat(&[z, c])?,
            (GanMode::Unconditioned, None) => z,
            (GanMode::Conditioned, None) => {
                return Err(Error::Contract("conditioned generator needs o_V".into()));
            }
            (GanMode::Unconditioned, Some(_)) => {
                return Err(Error::Contract("unconditioned generator takes no o_V".into()));
            }
        };
        let s = if frozen {
            self.generator.forward_frozen(g, &self.store, input)?
        } else {
            self.generator.forward(g, &self.store, input, false)?
        };
        let (a, b) = self.scaler.inverse_coefficients();
        let a = g.constant(&a)?;
        let b = g.constant(&b)?;
        let x = g.mul(s, a)?;
        g.add(x, b)
    }

    /// `(p_D(S = real), p_D(y))`.
    pub fn discriminate(&self, g: &mut Graph, x: Var, frozen: bool) -> Result<(Var, Var)> {
        let x = if self.config.interaction {
            let o_v = g.slice(x, 0, self.d_lat)?;
            let o_i = g.slice(x, self.d_lat, self.d_lat)?;
            let prod = g.mul(o_v, o_i)?;
            g.concat(&[x, prod])?
        } else {
            x
        };
        let (s, c) = if frozen {
            let h = self.trunk.forward_frozen(g, &self.store, x)?;
            (self.source_head.forward_frozen(g, &self.store, h)?, self.class_head.forward_frozen(g, &self.store, h)?)
        } else {
            let h = self.trunk.forward(g, &self.store, x, false)?;
            (self.source_head.forward(g, &self.store, h)?, self.class_head.forward(g, &self.store, h)?)
        };
        let s = g.pick(s, 0)?;
        let p = g.sigmoid(s);
        let y = g.softmax(c)?;
        Ok((p, y))
    }

    fn fakes(&self, g: &mut Graph, batch: &GanBatch, frozen: bool) -> Result<Vec<Var>> {
        batch
            .z
            .iter()
            .zip(&batch.cond)
            .map(|(z, c)| {
                let z = g.constant(z)?;
                let c = match self.config.mode {
                    GanMode::Conditioned => Some(g.constant(c)?),
                    GanMode::Unconditioned => None,
                };
                self.generate(g, z, c, frozen)
            })
            .collect()
    }

    /// `(J_D_adv, J_G)` with `J_S = −½·E[log D(x_real)] − ½·E[log(1 − D(x_fake))]`,
    /// `J_D_adv = J_S` and `J_G = −J_S`. Also returns the class-probability
    /// outputs on reals and fakes so callers can add the classification term.
    fn adversarial(&self, g: &mut Graph, batch: &GanBatch, side: Side) -> Result<(Var, Var, Vec<Var>, Vec<Var>, Vec<f64>)> {
        if batch.real.is_empty() || batch.z.is_empty() {
            return Err(Error::Contract("GAN batch needs at least one real and one fake sample".into()));
        }
        let d_frozen = side == Side::Generator;
        let fakes = self.fakes(g, batch, side == Side::Discriminator)?;
        let mut real_terms = Vec::new();
        let mut real_classes = Vec::new();
        let mut saturation = Vec::new();
        for x in &batch.real {
            let x = g.constant(x)?;
            let (p, y) = self.discriminate(g, x, d_frozen)?;
            saturation.push(g.scalar(p));
            let p = g.clamp_min(p, PROB_FLOOR);
            real_terms.push(g.log(p)?);
            real_classes.push(y);
        }
        let mut fake_terms = Vec::new();
        let mut fake_classes = Vec::new();
        for &x in &fakes {
            let (p, y) = self.discriminate(g, x, d_frozen)?;
            saturation.push(g.scalar(p));
            let q = g.scale(p, -1.0);
            let q = g.add_scalar(q, 1.0);
            let q = g.clamp_min(q, PROB_FLOOR);
            fake_terms.push(g.log(q)?);
            fake_classes.push(y);
        }
        let r = g.add_all(&real_terms)?;
        let r = g.scale(r, -0.5 / real_terms.len() as f64);
        let f = g.add_all(&fake_terms)?;
        let f = g.scale(f, -0.5 / fake_terms.len() as f64);
        let j_s = g.add(r, f)?;
        let j_g = g.scale(j_s, -1.0);
        Ok((j_s, j_g, real_classes, fake_classes, saturation))
    }

    /// `(J_D_adv, J_G)`; `side` selects whose parameters receive gradients.
    pub fn adversarial_loss(&self, g: &mut Graph, batch: &GanBatch, side: Side) -> Result<(Var, Var)> {
        let (d, gl, ..) = self.adversarial(g, batch, side)?;
        Ok((d, gl))
    }

    /// `J_D = J_S + λ·J`, `J` the mean cross-entropy of the class head on the
    /// real pairs (and on the fakes when `classify_fakes` is set).
    pub fn discriminator_loss(&self, g: &mut Graph, batch: &GanBatch) -> Result<Var> {
        Ok(self.discriminator_step_loss(g, batch)?.0)
    }

    fn discriminator_step_loss(&self, g: &mut Graph, batch: &GanBatch) -> Result<(Var, Vec<f64>)> {
        if batch.labels.len() != batch.real.len() {
            return Err(Error::Contract("every real pair needs a label".into()));
        }
        let (j_s, _, real_classes, fake_classes, sat) = self.adversarial(g, batch, Side::Discriminator)?;
        let mut ce = Vec::new();
        for (&y, &l) in real_classes.iter().zip(&batch.labels) {
            ce.push(cross_entropy(g, y, l as usize)?);
        }
        if self.config.classify_fakes {
            for (&y, &l) in fake_classes.iter().zip(&batch.labels) {
                ce.push(cross_entropy(g, y, l as usize)?);
            }
        }
        let j = g.add_all(&ce)?;
        let j = g.scale(j, self.config.lambda / ce.len() as f64);
        Ok((g.add(j_s, j)?, sat))
    }

    /// `J_G = −J_S` with only the generator's parameters live.
    pub fn generator_loss(&self, g: &mut Graph, batch: &GanBatch) -> Result<Var> {
        Ok(self.adversarial(g, batch, Side::Generator)?.1)
    }

    /// Raw fake pairs for the given scaled conditioning latents.
    pub fn sample(&self, cond: &[Vec<f64>], rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
        cond.iter()
            .map(|c| {
                let mut g = Graph::new();
                let z: Vec<f64> = (0..self.config.d_z).map(|_| StandardNormal.sample(rng)).collect();
                let z = g.constant(&z)?;
                let c = match self.config.mode {
                    GanMode::Conditioned => Some(g.constant(c)?),
                    GanMode::Unconditioned => None,
                };
                let x = self.generate(&mut g, z, c, true)?;
                Ok(g.value(x).to_vec())
            })
            .collect()
    }

    /// Classifier-head probability that a raw pair is correct.
    pub fn classify(&self, x: &[f64]) -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(x)?;
        let (_, y) = self.discriminate(&mut g, x, true)?;
        Ok(g.value(y)[1])
    }
}

impl Scorer for Gan {
    fn score(&self, o_v: &[f64], o_i: &[f64]) -> Result<f64> {
        let x: Vec<f64> = o_v.iter().chain(o_i).copied().collect();
        self.classify(&x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanEpochLog {
    pub epoch: usize,
    pub real_pairs: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Mean `p_D(S = real)` on real and on fake inputs.
    pub real_p: f64,
    pub fake_p: f64,
    pub valid: Option<PairEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GanLog {
    pub epochs: Vec<GanEpochLog>,
    pub best_epoch: usize,
    /// Set when `p_D(S)` saturated for `collapse_window` consecutive batches.
    pub collapsed: bool,
    /// Fréchet distance between real training pairs and fakes.
    pub frechet: Option<f64>,
}

fn noise(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Trains `G` and `D` on latents of a frozen MTCM, warm-starting `D` from
/// `mtcm` when given. The parameters with the best validation region-wise
/// accuracy at `config.gamma` over the trained epochs are kept.
pub fn train_gan(
    config: GanConfig,
    mtcm: Option<&MtcmModel>,
    train: &[RecordLatents],
    valid: &[RecordLatents],
    seed: u64,
) -> Result<(Gan, GanLog)> {
    let scaler = LatentScaler::fit(train, config.scale_bound)?;
    let mut rng = rng_for(seed, "gan-init", 0);
    let mut gan = match mtcm {
        Some(m) => Gan::from_mtcm(config, m, scaler, &mut rng)?,
        None => Gan::new(config, scaler, &mut rng)?,
    };
    let log = fit_gan(&mut gan, train, valid, seed)?;
    Ok((gan, log))
}

/// Alternating `D`/`G` updates on an already built [`Gan`].
pub fn fit_gan(gan: &mut Gan, train: &[RecordLatents], valid: &[RecordLatents], seed: u64) -> Result<GanLog> {
    let config = gan.config.clone();
    let scaler = gan.scaler.clone();
    let adam = AdamConfig::new(config.lr, config.beta1, config.beta2);
    let mut d_opt = Adam::new(adam, &gan.store, gan.discriminator_param_ids());
    let mut g_opt = Adam::new(adam, &gan.store, gan.generator_param_ids());
    let mut rng = rng_for(seed, "gan-train", 0);
    let mut log = GanLog::default();
    let mut best: Option<(f64, Gan)> = None;
    let mut saturated_run = 0usize;

    for epoch in 1..=config.epochs {
        let mut pairs = build_pairs(train, config.gamma, &mut rng).pairs;
        if pairs.is_empty() {
            return Err(Error::Contract(format!("no training pairs at gamma {}", config.gamma)));
        }
        pairs.shuffle(&mut rng);
        let (mut d_sum, mut g_sum, mut real_p, mut fake_p, mut batches) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for chunk in pairs.chunks(config.batch_size) {
            let make_batch = |rng: &mut crate::rng::Rng| GanBatch {
                real: chunk.iter().map(|p| [p.o_v(train), p.o_i(train)].concat()).collect(),
                labels: chunk.iter().map(|p| p.positive).collect(),
                cond: chunk.iter().map(|p| scaler.candidate(p.o_v(train))).collect(),
                z: chunk.iter().map(|_| noise(config.d_z, rng)).collect(),
            };

            let batch = make_batch(&mut rng);
            let mut g = Graph::new();
            let (loss, sat) = gan.discriminator_step_loss(&mut g, &batch)?;
            let d_value = g.scalar(loss);
            g.backward(loss)?;
            g.accumulate_param_grads(&mut gan.store);
            if !d_value.is_finite() {
                return Err(Error::Diverged(format!("GAN epoch {epoch}: discriminator loss {d_value}")));
            }
            d_opt.step(&mut gan.store);
            let n_real = batch.real.len();
            real_p += sat[..n_real].iter().sum::<f64>() / n_real as f64;
            fake_p += sat[n_real..].iter().sum::<f64>() / (sat.len() - n_real) as f64;
            if sat.iter().all(|&p| !(1e-3..=1.0 - 1e-3).contains(&p)) {
                saturated_run += 1;
                if saturated_run == config.collapse_window {
                    log::warn!("GAN epoch {epoch}: discriminator saturated for {saturated_run} batches");
                    log.collapsed = true;
                }
            } else {
                saturated_run = 0;
            }

            let batch = make_batch(&mut rng);
            let mut g = Graph::new();
            let loss = gan.generator_loss(&mut g, &batch)?;
            let g_value = g.scalar(loss);
            g.backward(loss)?;
            g.accumulate_param_grads(&mut gan.store);
            if !g_value.is_finite() {
                return Err(Error::Diverged(format!("GAN epoch {epoch}: generator loss {g_value}")));
            }
            g_opt.step(&mut gan.store);

            d_sum += d_value;
            g_sum += g_value;
            batches += 1;
        }
        let valid_eval = if valid.is_empty() {
            None
        } else {
            Some(evaluate_pairs(&*gan, valid, config.gamma, &mut rng_for(seed, "gan-valid", 0))?)
        };
        let nb = batches as f64;
        log::info!(
            "GAN epoch {epoch}: J_D {:.4} J_G {:.4} valid {:?}",
            d_sum / nb,
            g_sum / nb,
            valid_eval.as_ref().map(|v| v.region_wise)
        );
        let score = valid_eval.as_ref().map(|v| v.region_wise).unwrap_or(0.0);
        log.epochs.push(GanEpochLog {
            epoch,
            real_pairs: pairs.len(),
            d_loss: d_sum / nb,
            g_loss: g_sum / nb,
            real_p: real_p / nb,
            fake_p: fake_p / nb,
            valid: valid_eval,
        });
        if best.as_ref().is_none_or(|(b, _)| score > *b || valid.is_empty()) {
            best = Some((score, gan.clone()));
            log.best_epoch = epoch;
        }
    }
    if let Some((_, g)) = best {
        *gan = g;
    }
    let (reals, fakes) = real_and_fake(gan, train, derive_seed(seed, "gan-frechet", 0))?;
    log.frechet = latent_frechet(&reals, &fakes).ok().map(|f| f.distance);
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frechet {
    pub distance: f64,
    /// Ridge added to both covariances when either was near-singular.
    pub ridge: Option<f64>,
}

/// Ridge added to degenerate covariances.
pub const FRECHET_RIDGE: f64 = 1e-6;

fn moments(xs: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut mu = DVector::zeros(d);
    for x in xs {
        mu += DVector::from_column_slice(x);
    }
    mu /= n;
    let mut cov = DMatrix::zeros(d, d);
    for x in xs {
        let c = DVector::from_column_slice(x) - &mu;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    (mu, cov)
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let s = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&s) * e.eigenvectors.transpose()
}

fn near_singular(m: &DMatrix<f64>) -> bool {
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues;
    let max = e.iter().cloned().fold(0.0f64, f64::max);
    let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
    min <= 1e-12 * max.max(1.0)
}

/// Fréchet distance between Gaussians fitted to two sample sets:
/// `‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2(Σ_a Σ_b)^{1/2})`, with the matrix root
/// taken as `tr((Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2})`.
pub fn latent_frechet(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Frechet> {
    let d = a.first().map(Vec::len).unwrap_or(0);
    if d == 0 || b.first().map(Vec::len) != Some(d) || a.iter().chain(b).any(|x| x.len() != d) {
        return Err(Error::Contract("Fréchet distance needs non-empty sets of equal width".into()));
    }
    if a.len() < d + 1 || b.len() < d + 1 {
        return Err(Error::Contract(format!(
            "Fréchet distance in {d} dimensions needs at least {} samples per set",
            d + 1
        )));
    }
    let (mu_a, mut cov_a) = moments(a);
    let (mu_b, mut cov_b) = moments(b);
    let ridge = (near_singular(&cov_a) || near_singular(&cov_b)).then_some(FRECHET_RIDGE);
    if let Some(r) = ridge {
        log::warn!("Fréchet distance: near-singular covariance, adding ridge {r}");
        cov_a += DMatrix::identity(d, d) * r;
        cov_b += DMatrix::identity(d, d) * r;
    }
    let ra = psd_sqrt(&cov_a);
    let cross = psd_sqrt(&(&ra * &cov_b * &ra)).trace();
    let distance = (mu_a - mu_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    Ok(Frechet {
        distance: distance.max(0.0),
        ridge,
    })
}

/// Reals and fakes side by side for inspection: the correct pair of each
/// record with a fake conditioned on the same `o_V`.
pub fn real_and_fake(gan: &Gan, latents: &[RecordLatents], seed: u64) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let reals = latents.iter().map(|l| [l.o_v[l.gt].as_slice(), &l.o_i].concat()).collect();
    let cond: Vec<Vec<f64>> = latents.iter().map(|l| gan.scaler.candidate(&l.o_v[l.gt])).collect();
    let fakes = gan.sample(&cond, &mut rng_from_seed(seed))?;
    Ok((reals, fakes))
}

#[cfg(test)]
mod tests;
