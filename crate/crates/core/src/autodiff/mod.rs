//! Tape-based reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is rebuilt for every forward pass. Nodes are appended in
//! evaluation order, so the append order is already a topological order and
//! [`Graph::backward`] is a single reverse sweep.
//!
//! Parameters live outside the graph in a [`ParamStore`](crate::nn::ParamStore).
//! [`Graph::param`] copies a parameter in, and
//! [`Graph::accumulate_param_grads`] adds the resulting gradients back.

mod gradcheck;

pub use gradcheck::{grad_check, grad_check_param_ids, grad_check_params, GradCheckReport, GradFailure};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};

/// Index of a node in its graph.
pub type NodeId = usize;

/// Handle to a tensor recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(NodeId);

impl Var {
    pub fn id(self) -> NodeId {
        self.0
    }
}

/// Dense row-major tensor. A scalar has an empty shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
    pub requires_grad: bool,
    pub node_id: NodeId,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Elementwise operations accepted by [`Graph::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Tanh,
    Sigmoid,
    Log,
    Exp,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var, usize, usize, usize),
    Linear(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Sqrt(Var),
    ClampMin(Var, f64),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Row(Var, usize),
    Sum(Var),
    Dot(Var, Var),
    Pick(Var, usize),
}

#[derive(Debug, Clone)]
struct Node {
    tensor: Tensor,
    op: Op,
}

/// Append-only operation record for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    taps: Vec<(usize, Var)>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].tensor.data
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].tensor.grad
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].tensor.shape
    }

    /// Scalar value of a one-element tensor.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].tensor.data[0]
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].tensor.requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        let id = self.nodes.len();
        let grad = vec![0.0; data.len()];
        self.nodes.push(Node {
            tensor: Tensor {
                shape,
                data,
                grad,
                requires_grad,
                node_id: id,
            },
            op,
        });
        Var(id)
    }

    /// Records a leaf tensor.
    pub fn leaf(&mut self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if shape.iter().any(|&d| d == 0) || numel(shape) != data.len() {
            return Err(Error::dim("leaf", shape, &[data.len()]));
        }
        Ok(self.push(shape.to_vec(), data, requires_grad, Op::Leaf))
    }

    /// Constant 1-D tensor.
    pub fn constant(&mut self, data: &[f64]) -> Result<Var> {
        self.leaf(&[data.len()], data.to_vec(), false)
    }

    /// Trainable 1-D tensor not tied to a parameter store.
    pub fn variable(&mut self, data: &[f64]) -> Result<Var> {
        self.leaf(&[data.len()], data.to_vec(), true)
    }

    pub fn scalar_constant(&mut self, x: f64) -> Var {
        self.push(Vec::new(), vec![x], false, Op::Leaf)
    }

    /// Brings a stored parameter into the graph. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.push(p.shape.clone(), p.data.clone(), true, Op::Param);
        self.params.insert(id, v);
        v
    }

    /// Brings a parameter in as a constant (no gradient), e.g. for a frozen model.
    pub fn frozen_param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.shape.clone(), p.data.clone(), false, Op::Leaf)
    }

    /// Adds the gradients of every parameter node into `store`.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (&id, &v) in &self.params {
            let g = &self.nodes[v.0].tensor.grad;
            for (dst, src) in store.get_mut(id).grad.iter_mut().zip(g) {
                *dst += src;
            }
        }
    }

    /// Marks `v` for later inspection under `key` (used for running statistics).
    pub fn tap(&mut self, key: usize, v: Var) {
        self.taps.push((key, v));
    }

    pub fn tapped(&self, key: usize) -> impl Iterator<Item = &[f64]> + '_ {
        self.taps
            .iter()
            .filter(move |(k, _)| *k == key)
            .map(|&(_, v)| self.value(v))
    }

    // ---- operations -------------------------------------------------------

    /// `a [m×k] · b [k×n] -> [m×n]`. A 1-D `a` is treated as a single row and
    /// yields a 1-D result.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let (m, k, row) = match sa.len() {
            1 => (1, sa[0], true),
            2 => (sa[0], sa[1], false),
            _ => return Err(Error::dim("matmul", &sa, &sb)),
        };
        if sb.len() != 2 || sb[0] != k {
            return Err(Error::dim("matmul", &sa, &sb));
        }
        let n = sb[1];
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, bj) in orow.iter_mut().zip(brow) {
                    *o += aip * bj;
                }
            }
        }
        let shape = if row { vec![n] } else { vec![m, n] };
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(shape, out, rg, Op::MatMul(a, b, m, k, n)))
    }

    /// Affine map `x [k] · w [k×n] + bias [n]`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let sb = self.shape(bias).to_vec();
        if sx.len() != 1 || sw.len() != 2 || sw[0] != sx[0] {
            return Err(Error::dim("linear", &sx, &sw));
        }
        let (k, n) = (sw[0], sw[1]);
        if sb != [n] {
            return Err(Error::dim("linear", &sw, &sb));
        }
        let xv = self.value(x);
        let wv = self.value(w);
        let mut out = self.value(bias).to_vec();
        for p in 0..k {
            let xp = xv[p];
            if xp == 0.0 {
                continue;
            }
            for (o, wj) in out.iter_mut().zip(&wv[p * n..(p + 1) * n]) {
                *o += xp * wj;
            }
        }
        let rg = self.requires(x) || self.requires(w) || self.requires(bias);
        Ok(self.push(vec![n], out, rg, Op::Linear(x, w, bias)))
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Vec<usize>, Vec<f64>, bool)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::dim(op, sa, sb));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok((sa.to_vec(), out, self.requires(a) || self.requires(b)))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64) -> (Vec<usize>, Vec<f64>, bool) {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        (self.shape(a).to_vec(), out, self.requires(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, d, r) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(s, d, r, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, d, r) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(s, d, r, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, d, r) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(s, d, r, Op::Mul(a, b)))
    }

    /// Elementwise quotient; the divisor must be non-zero everywhere.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).iter().any(|&y| y == 0.0) {
            return Err(Error::Domain {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        let (s, d, r) = self.binary("div", a, b, |x, y| x / y)?;
        Ok(self.push(s, d, r, Op::Div(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let (s, d, r) = self.unary(a, |x| c * x);
        self.push(s, d, r, Op::Scale(a, c))
    }

    /// `a + c` for a constant `c`.
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let (s, d, r) = self.unary(a, |x| x + c);
        self.push(s, d, r, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (s, d, r) = self.unary(a, |x| x.max(0.0));
        self.push(s, d, r, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (s, d, r) = self.unary(a, f64::tanh);
        self.push(s, d, r, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (s, d, r) = self.unary(a, sigmoid);
        self.push(s, d, r, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let (s, d, r) = self.unary(a, f64::exp);
        self.push(s, d, r, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(&x) = self.value(a).iter().find(|&&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {x}"),
            });
        }
        let (s, d, r) = self.unary(a, f64::ln);
        Ok(self.push(s, d, r, Op::Log(a)))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some(&x) = self.value(a).iter().find(|&&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::Domain {
                op: "sqrt",
                detail: format!("non-positive input {x}"),
            });
        }
        let (s, d, r) = self.unary(a, f64::sqrt);
        Ok(self.push(s, d, r, Op::Sqrt(a)))
    }

    /// `max(a, floor)`; gradient passes only where `a > floor`.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let (s, d, r) = self.unary(a, |x| x.max(floor));
        self.push(s, d, r, Op::ClampMin(a, floor))
    }

    /// Dispatches one of the [`Elementwise`] operations; `b` is required for
    /// the binary ones and ignored otherwise.
    pub fn elementwise(&mut self, op: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        let need = || Error::Contract(format!("{op:?} needs two operands"));
        match op {
            Elementwise::Add => self.add(a, b.ok_or_else(need)?),
            Elementwise::Sub => self.sub(a, b.ok_or_else(need)?),
            Elementwise::Mul => self.mul(a, b.ok_or_else(need)?),
            Elementwise::Relu => Ok(self.relu(a)),
            Elementwise::Tanh => Ok(self.tanh(a)),
            Elementwise::Sigmoid => Ok(self.sigmoid(a)),
            Elementwise::Log => self.log(a),
            Elementwise::Exp => Ok(self.exp(a)),
        }
    }

    /// Numerically stable softmax over a 1-D tensor.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 1 || s[0] == 0 {
            return Err(Error::dim("softmax", &s, &[]));
        }
        let out = softmax(self.value(a));
        let r = self.requires(a);
        Ok(self.push(s, out, r, Op::Softmax(a)))
    }

    /// Concatenates 1-D tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::dim("concat", &[], &[]));
        }
        let mut out = Vec::new();
        let mut rg = false;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 1 {
                return Err(Error::dim("concat", s, &[]));
            }
            out.extend_from_slice(self.value(p));
            rg |= self.requires(p);
        }
        let n = out.len();
        Ok(self.push(vec![n], out, rg, Op::Concat(parts.to_vec())))
    }

    /// Contiguous slice `a[start..start + len]` of a 1-D tensor.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 1 || len == 0 || start + len > s[0] {
            return Err(Error::dim("slice", s, &[start, len]));
        }
        let out = self.value(a)[start..start + len].to_vec();
        let r = self.requires(a);
        Ok(self.push(vec![len], out, r, Op::Slice(a, start)))
    }

    /// Row `i` of a matrix (embedding lookup).
    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let s = self.shape(m);
        if s.len() != 2 || i >= s[0] {
            return Err(Error::dim("row", s, &[i]));
        }
        let n = s[1];
        let out = self.value(m)[i * n..(i + 1) * n].to_vec();
        let r = self.requires(m);
        Ok(self.push(vec![n], out, r, Op::Row(m, i)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().sum();
        let r = self.requires(a);
        self.push(Vec::new(), vec![total], r, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::dim("dot", sa, sb));
        }
        let d = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .sum();
        let r = self.requires(a) || self.requires(b);
        Ok(self.push(Vec::new(), vec![d], r, Op::Dot(a, b)))
    }

    /// Element `i` of a 1-D tensor as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 1 || i >= s[0] {
            return Err(Error::dim("pick", s, &[i]));
        }
        let x = self.value(a)[i];
        let r = self.requires(a);
        Ok(self.push(Vec::new(), vec![x], r, Op::Pick(a, i)))
    }

    /// Sum of several same-shape tensors.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::Contract("add_all of nothing".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    // ---- backward ---------------------------------------------------------

    /// Accumulates `d loss / d node` into every node that requires a gradient.
    /// Gradients add up across repeated calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.tensor(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract("loss does not belong to this graph".into()));
        }
        let mut seeds: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        seeds[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(up) = seeds[i].take() else { continue };
            if !self.nodes[i].tensor.requires_grad {
                continue;
            }
            for (g, u) in self.nodes[i].tensor.grad.iter_mut().zip(&up) {
                *g += u;
            }
            self.propagate(i, &up, &mut seeds);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, up: &[f64], seeds: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.tensor.data;
        let mut send = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].tensor.requires_grad {
                return;
            }
            let n = self.nodes[v.0].tensor.data.len();
            let slot = seeds[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            &Op::MatMul(a, b, m, k, n) => {
                let av = self.value(a);
                let bv = self.value(b);
                send(a, &mut |da| {
                    for r in 0..m {
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            let urow = &up[r * n..(r + 1) * n];
                            da[r * k + p] += urow.iter().zip(brow).map(|(u, w)| u * w).sum::<f64>();
                        }
                    }
                });
                send(b, &mut |db| {
                    for r in 0..m {
                        for p in 0..k {
                            let a_rp = av[r * k + p];
                            for j in 0..n {
                                db[p * n + j] += a_rp * up[r * n + j];
                            }
                        }
                    }
                });
            }
            &Op::Linear(x, w, bias) => {
                let xv = self.value(x);
                let wv = self.value(w);
                let n = up.len();
                send(x, &mut |dx| {
                    for (p, d) in dx.iter_mut().enumerate() {
                        *d += wv[p * n..(p + 1) * n]
                            .iter()
                            .zip(up)
                            .map(|(w, u)| w * u)
                            .sum::<f64>();
                    }
                });
                send(w, &mut |dw| {
                    for (p, &xp) in xv.iter().enumerate() {
                        if xp == 0.0 {
                            continue;
                        }
                        for (d, u) in dw[p * n..(p + 1) * n].iter_mut().zip(up) {
                            *d += xp * u;
                        }
                    }
                });
                send(bias, &mut |db| add_into(db, up));
            }
            &Op::Add(a, b) => {
                send(a, &mut |d| add_into(d, up));
                send(b, &mut |d| add_into(d, up));
            }
            &Op::Sub(a, b) => {
                send(a, &mut |d| add_into(d, up));
                send(b, &mut |d| d.iter_mut().zip(up).for_each(|(d, u)| *d -= u));
            }
            &Op::Mul(a, b) => {
                let av = self.value(a);
                let bv = self.value(b);
                send(a, &mut |d| zip3(d, up, bv, |u, y| u * y));
                send(b, &mut |d| zip3(d, up, av, |u, x| u * x));
            }
            &Op::Div(a, b) => {
                let av = self.value(a);
                let bv = self.value(b);
                send(a, &mut |d| zip3(d, up, bv, |u, y| u / y));
                send(b, &mut |d| {
                    for j in 0..d.len() {
                        d[j] -= up[j] * av[j] / (bv[j] * bv[j]);
                    }
                });
            }
            &Op::Scale(a, c) => send(a, &mut |d| d.iter_mut().zip(up).for_each(|(d, u)| *d += c * u)),
            &Op::AddScalar(a) => send(a, &mut |d| add_into(d, up)),
            &Op::Relu(a) => {
                let av = self.value(a);
                send(a, &mut |d| zip3(d, up, av, |u, x| if x > 0.0 { u } else { 0.0 }));
            }
            &Op::Tanh(a) => send(a, &mut |d| zip3(d, up, out, |u, y| u * (1.0 - y * y))),
            &Op::Sigmoid(a) => send(a, &mut |d| zip3(d, up, out, |u, y| u * y * (1.0 - y))),
            &Op::Log(a) => {
                let av = self.value(a);
                send(a, &mut |d| zip3(d, up, av, |u, x| u / x));
            }
            &Op::Exp(a) => send(a, &mut |d| zip3(d, up, out, |u, y| u * y)),
            &Op::Sqrt(a) => send(a, &mut |d| zip3(d, up, out, |u, y| u * 0.5 / y)),
            &Op::ClampMin(a, floor) => {
                let av = self.value(a);
                send(a, &mut |d| zip3(d, up, av, |u, x| if x > floor { u } else { 0.0 }));
            }
            &Op::Softmax(a) => {
                let s: f64 = up.iter().zip(out).map(|(u, y)| u * y).sum();
                send(a, &mut |d| zip3(d, up, out, |u, y| y * (u - s)));
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.nodes[p.0].tensor.data.len();
                    send(p, &mut |d| add_into(d, &up[off..off + n]));
                    off += n;
                }
            }
            &Op::Slice(a, start) => send(a, &mut |d| add_into(&mut d[start..start + up.len()], up)),
            &Op::Row(m, r) => {
                let n = up.len();
                send(m, &mut |d| add_into(&mut d[r * n..(r + 1) * n], up));
            }
            &Op::Sum(a) => send(a, &mut |d| d.iter_mut().for_each(|d| *d += up[0])),
            &Op::Dot(a, b) => {
                let av = self.value(a);
                let bv = self.value(b);
                send(a, &mut |d| d.iter_mut().zip(bv).for_each(|(d, y)| *d += up[0] * y));
                send(b, &mut |d| d.iter_mut().zip(av).for_each(|(d, x)| *d += up[0] * x));
            }
            &Op::Pick(a, j) => send(a, &mut |d| d[j] += up[0]),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn zip3(dst: &mut [f64], up: &[f64], other: &[f64], f: impl Fn(f64, f64) -> f64) {
    for ((d, &u), &o) in dst.iter_mut().zip(up).zip(other) {
        *d += f(u, o);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax of a plain slice.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
