use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{orthogonal, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab: usize,
    pub d_emb: usize,
    pub d_h: usize,
    pub layers: usize,
    pub pooling: Pooling,
    /// Standard deviation of the initial embedding table.
    pub embedding_sigma: f64,
}

/// How the top layer's states become the sentence encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Last forward state ⊕ last backward state.
    #[default]
    Final,
    /// Mean over time of forward ⊕ backward states.
    Mean,
}

/// One direction of one layer. Gate blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_h: usize,
}

impl LstmCell {
    fn new(store: &mut ParamStore, name: &str, d_in: usize, d_h: usize, rng: &mut impl Rng) -> Self {
        let w_x = store.glorot(format!("{name}.w_x"), d_in, 4 * d_h, rng);
        // each gate block of the recurrent matrix is orthogonal
        let blocks: Vec<Vec<f64>> = (0..4).map(|_| orthogonal(d_h, rng)).collect();
        let mut wh = vec![0.0; d_h * 4 * d_h];
        for r in 0..d_h {
            for (gate, b) in blocks.iter().enumerate() {
                wh[r * 4 * d_h + gate * d_h..r * 4 * d_h + (gate + 1) * d_h].copy_from_slice(&b[r * d_h..(r + 1) * d_h]);
            }
        }
        let w_h = store.add(format!("{name}.w_h"), &[d_h, 4 * d_h], wh);
        let mut b = vec![0.0; 4 * d_h];
        b[d_h..2 * d_h].iter_mut().for_each(|x| *x = 1.0);
        let bias = store.add(format!("{name}.bias"), &[4 * d_h], b);
        Self { w_x, w_h, bias, d_in, d_h }
    }

    fn param_ids(&self) -> [ParamId; 3] {
        [self.w_x, self.w_h, self.bias]
    }

    /// Runs over `xs` in the given order and returns every hidden state.
    fn run(&self, g: &mut Graph, store: &ParamStore, xs: &[Var]) -> Result<Vec<Var>> {
        let d = self.d_h;
        let w_x = g.param(store, self.w_x);
        let w_h = g.param(store, self.w_h);
        let bias = g.param(store, self.bias);
        let mut hs = Vec::with_capacity(xs.len());
        let mut state: Option<(Var, Var)> = None;
        for &x in xs {
            let mut z = g.linear(x, w_x, bias)?;
            if let Some((h, _)) = state {
                let r = g.matmul(h, w_h)?;
                z = g.add(z, r)?;
            }
            let i = g.slice(z, 0, d)?;
            let f = g.slice(z, d, d)?;
            let c_hat = g.slice(z, 2 * d, d)?;
            let o = g.slice(z, 3 * d, d)?;
            let i = g.sigmoid(i);
            let f = g.sigmoid(f);
            let c_hat = g.tanh(c_hat);
            let o = g.sigmoid(o);
            let ig = g.mul(i, c_hat)?;
            let c = match state {
                Some((_, c_prev)) => {
                    let kept = g.mul(f, c_prev)?;
                    g.add(kept, ig)?
                }
                None => ig,
            };
            let tc = g.tanh(c);
            let h = g.mul(o, tc)?;
            hs.push(h);
            state = Some((h, c));
        }
        Ok(hs)
    }
}

/// Token embedding followed by `layers` bidirectional LSTM layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstructionEncoder {
    pub config: EncoderConfig,
    pub embedding: ParamId,
    /// `[forward, backward]` cells per layer.
    pub cells: Vec<[LstmCell; 2]>,
}

impl InstructionEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        let EncoderConfig { vocab, d_emb, d_h, layers, .. } = config;
        if vocab == 0 || d_emb == 0 || d_h == 0 || layers == 0 {
            return Err(Error::Config(format!("{name}: encoder sizes must be positive, got {config:?}")));
        }
        let normal = Normal::new(0.0, config.embedding_sigma)
            .map_err(|e| Error::Config(format!("{name}: embedding sigma: {e}")))?;
        let emb: Vec<f64> = (0..vocab * d_emb).map(|_| normal.sample(rng)).collect();
        let embedding = store.add(format!("{name}.embedding"), &[vocab, d_emb], emb);
        let cells = (0..layers)
            .map(|l| {
                let d_in = if l == 0 { d_emb } else { 2 * d_h };
                [
                    LstmCell::new(store, &format!("{name}.l{l}.fwd"), d_in, d_h, rng),
                    LstmCell::new(store, &format!("{name}.l{l}.bwd"), d_in, d_h, rng),
                ]
            })
            .collect();
        Ok(Self { config, embedding, cells })
    }

    /// `2 * d_h`.
    pub fn output_dim(&self) -> usize {
        2 * self.config.d_h
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        std::iter::once(self.embedding)
            .chain(self.cells.iter().flatten().flat_map(|c| c.param_ids()))
            .collect()
    }

    /// Sentence encoding of width `2 * d_h`, pooled from the top layer.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::Contract("cannot encode an empty token sequence".into()));
        }
        let emb = g.param(store, self.embedding);
        let mut xs: Vec<Var> = ids.iter().map(|&i| g.row(emb, i)).collect::<Result<_>>()?;
        let mut last = (xs[0], xs[0]);
        for [fwd, bwd] in &self.cells {
            let hf = fwd.run(g, store, &xs)?;
            let rev: Vec<Var> = xs.iter().rev().copied().collect();
            let mut hb = bwd.run(g, store, &rev)?;
            last = (*hf.last().expect("non-empty"), *hb.last().expect("non-empty"));
            hb.reverse();
            xs = hf.iter().zip(&hb).map(|(&a, &b)| g.concat(&[a, b])).collect::<Result<_>>()?;
        }
        match self.config.pooling {
            Pooling::Final => g.concat(&[last.0, last.1]),
            Pooling::Mean => {
                let total = g.add_all(&xs)?;
                Ok(g.scale(total, 1.0 / xs.len() as f64))
            }
        }
    }
}
