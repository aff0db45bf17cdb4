//! Parameter storage and the small set of layers the models are built from.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

/// Owns every trainable array of a model.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> ParamId {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "parameter shape/data mismatch");
        let n = data.len();
        self.params.push(Param {
            name: name.into(),
            shape: shape.to_vec(),
            data,
            grad: vec![0.0; n],
        });
        ParamId(self.params.len() - 1)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, shape, vec![0.0; shape.iter().product()])
    }

    /// Glorot-uniform initialised matrix `[fan_in × fan_out]`.
    pub fn glorot(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        self.add(name, &[fan_in, fan_out], data)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.clear();
            p.grad.resize(p.data.len(), 0.0);
        }
    }

    pub fn scale_grads(&mut self, c: f64) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= c);
        }
    }

    pub fn grad_norm(&self, ids: &[ParamId]) -> f64 {
        ids.iter()
            .flat_map(|&id| self.get(id).grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn set_all(&mut self, value: f64) {
        for p in &mut self.params {
            p.data.iter_mut().for_each(|x| *x = value);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let weight = store.glorot(format!("{name}.weight"), fan_in, fan_out, rng);
        let bias = store.zeros(format!("{name}.bias"), &[fan_out]);
        Self { weight, bias, fan_in, fan_out }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.linear(x, w, b)
    }

    pub fn forward_frozen(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.frozen_param(store, self.weight);
        let b = g.frozen_param(store, self.bias);
        g.linear(x, w, b)
    }
}

/// Feature standardisation with running statistics.
///
/// The statistics are constants inside the graph: they are refreshed from
/// tapped pre-activations between optimiser steps and never differentiated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunningNorm {
    pub key: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl RunningNorm {
    pub fn new(key: usize, dim: usize) -> Self {
        Self {
            key,
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    fn forward(&self, g: &mut Graph, x: Var, track: bool) -> Result<Var> {
        if track {
            g.tap(self.key, x);
        }
        let mean = g.constant(&self.mean)?;
        let inv: Vec<f64> = self.var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let inv = g.constant(&inv)?;
        let centered = g.sub(x, mean)?;
        g.mul(centered, inv)
    }

    /// Folds the tapped batch statistics into the running estimates.
    pub fn update(&mut self, graph: &Graph) {
        let rows: Vec<&[f64]> = graph.tapped(self.key).collect();
        if rows.len() < 2 {
            return;
        }
        let n = rows.len() as f64;
        let d = self.mean.len();
        for j in 0..d {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let v = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
            self.mean[j] = (1.0 - self.momentum) * self.mean[j] + self.momentum * m;
            self.var[j] = (1.0 - self.momentum) * self.var[j] + self.momentum * v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPlacement {
    None,
    /// Every layer except the output layer.
    Hidden,
    /// Every layer.
    All,
}

/// Stack of affine layers with per-layer activation and optional standardisation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub norms: Vec<Option<RunningNorm>>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    /// `dims` lists the input width followed by every layer's output width.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        norm: NormPlacement,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("{name}: invalid layer widths {dims:?}")));
        }
        let nl = dims.len() - 1;
        let mut layers = Vec::with_capacity(nl);
        let mut norms = Vec::with_capacity(nl);
        for (l, w) in dims.windows(2).enumerate() {
            let lin = Linear::new(store, &format!("{name}.{l}"), w[0], w[1], rng);
            let normed = match norm {
                NormPlacement::None => false,
                NormPlacement::Hidden => l + 1 < nl,
                NormPlacement::All => true,
            };
            norms.push(normed.then(|| RunningNorm::new(lin.weight.0, w[1])));
            layers.push(lin);
        }
        Ok(Self { layers, norms, hidden, output })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.fan_out).unwrap_or(0)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    /// Forward pass. `track` records pre-normalisation activations so that
    /// [`Mlp::update_norms`] can refresh the running statistics.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, track: bool) -> Result<Var> {
        self.run(g, store, x, track, false)
    }

    /// Forward pass with every parameter entered as a constant.
    pub fn forward_frozen(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        self.run(g, store, x, false, true)
    }

    fn run(&self, g: &mut Graph, store: &ParamStore, mut x: Var, track: bool, frozen: bool) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (l, (lin, norm)) in self.layers.iter().zip(&self.norms).enumerate() {
            x = if frozen {
                lin.forward_frozen(g, store, x)?
            } else {
                lin.forward(g, store, x)?
            };
            if let Some(n) = norm {
                x = n.forward(g, x, track)?;
            }
            let act = if l == last { self.output } else { self.hidden };
            x = act.apply(g, x);
        }
        Ok(x)
    }

    pub fn update_norms(&mut self, graph: &Graph) {
        for n in self.norms.iter_mut().flatten() {
            n.update(graph);
        }
    }
}

/// `n × n` matrix with orthonormal rows (Gram–Schmidt on a Gaussian draw).
pub fn orthogonal(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            rows.push(v);
        }
    }
    rows.concat()
}
