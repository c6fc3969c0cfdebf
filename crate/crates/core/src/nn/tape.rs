//! Reverse-mode automatic differentiation over a flat, vector-valued tape.
//!
//! Nodes hold contiguous `f64` blocks (scalars are length one). Values are
//! computed eagerly when a node is recorded, so the node list is always in
//! topological order. Parameters are not copied onto the tape: a `param`
//! node is a window into the slice the tape was created with, and its
//! adjoint is accumulated straight into the parameter gradient.

use super::NnError;
use statrs::function::gamma::{digamma, ln_gamma};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Tanh,
    Relu,
    Exp,
    Log,
    Softplus,
    Sigmoid,
    Sqrt,
    Square,
    Log1p,
    Lgamma,
}

/// Output-slot transform applied by an MLP head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Identity,
    Softplus,
    Sigmoid,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Param { offset: usize },
    Affine { w: usize, x: usize, b: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Unary(usize, UnaryOp),
    Heads { x: usize, first: usize },
    Index(usize, usize),
    Slice(usize, usize),
    Concat { first: usize, count: usize },
    Sum(usize),
    Dot(usize, usize),
    LogSumExp(usize),
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    start: usize,
    len: usize,
}

pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
    data: Vec<f64>,
    aux: Vec<usize>,
    heads: Vec<Head>,
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn apply_unary(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Tanh => x.tanh(),
        UnaryOp::Relu => x.max(0.0),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => x.ln(),
        UnaryOp::Softplus => softplus(x),
        UnaryOp::Sigmoid => sigmoid(x),
        UnaryOp::Sqrt => x.sqrt(),
        UnaryOp::Square => x * x,
        UnaryOp::Log1p => x.ln_1p(),
        UnaryOp::Lgamma => ln_gamma(x),
    }
}

pub(crate) fn apply_head(h: Head, x: f64) -> f64 {
    match h {
        Head::Identity => x,
        Head::Softplus => softplus(x),
        Head::Sigmoid => sigmoid(x),
    }
}

impl<'p> Tape<'p> {
    /// A tape whose `param` nodes index into `params`.
    pub fn new(params: &'p [f64]) -> Self {
        Tape { params, nodes: Vec::with_capacity(256), data: Vec::with_capacity(4096), aux: Vec::new(), heads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        match n.op {
            Op::Param { offset } => &self.params[offset..offset + n.len],
            _ => &self.data[n.start..n.start + n.len],
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn check(&self, v: Var) -> Result<usize, NnError> {
        self.nodes.get(v.0).map(|n| n.len).ok_or(NnError::UnknownVar(v.0))
    }

    fn push(&mut self, op: Op, values: impl IntoIterator<Item = f64>) -> Var {
        let start = self.data.len();
        self.data.extend(values);
        let len = self.data.len() - start;
        self.nodes.push(Node { op, start, len });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, values: &[f64]) -> Var {
        self.push(Op::Leaf, values.iter().copied())
    }

    pub fn constant(&mut self, v: f64) -> Var {
        self.push(Op::Leaf, [v])
    }

    pub fn param(&mut self, offset: usize, len: usize) -> Result<Var, NnError> {
        if offset + len > self.params.len() {
            return Err(NnError::Shape { op: "param", left: offset + len, right: self.params.len() });
        }
        self.nodes.push(Node { op: Op::Param { offset }, start: usize::MAX, len });
        Ok(Var(self.nodes.len() - 1))
    }

    /// `W x + b` with `W` row-major, `rows = b.len()`, `cols = x.len()`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var, NnError> {
        let (lw, lx, lb) = (self.check(w)?, self.check(x)?, self.check(b)?);
        if lw != lx * lb {
            return Err(NnError::Shape { op: "affine", left: lw, right: lx * lb });
        }
        let out: Vec<f64> = {
            let (wv, xv, bv) = (self.value(w), self.value(x), self.value(b));
            (0..lb)
                .map(|r| {
                    let row = &wv[r * lx..(r + 1) * lx];
                    bv[r] + row.iter().zip(xv).map(|(a, c)| a * c).sum::<f64>()
                })
                .collect()
        };
        Ok(self.push(Op::Affine { w: w.0, x: x.0, b: b.0 }, out))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, NnError> {
        let (la, lb) = (self.check(a)?, self.check(b)?);
        if la != lb && la != 1 && lb != 1 {
            return Err(NnError::Shape { op: name, left: la, right: lb });
        }
        let n = la.max(lb);
        let out: Vec<f64> = {
            let (av, bv) = (self.value(a), self.value(b));
            (0..n).map(|i| f(av[if la == 1 { 0 } else { i }], bv[if lb == 1 { 0 } else { i }])).collect()
        };
        Ok(self.push(op, out))
    }

    /// Elementwise; a length-one operand broadcasts.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out: Vec<f64> = self.value(a).iter().map(|x| x * c).collect();
        self.push(Op::Scale(a.0, c), out)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let out: Vec<f64> = self.value(a).iter().map(|x| x + c).collect();
        self.push(Op::Offset(a.0), out)
    }

    pub fn unary(&mut self, a: Var, op: UnaryOp) -> Var {
        let out: Vec<f64> = self.value(a).iter().map(|x| apply_unary(op, *x)).collect();
        self.push(Op::Unary(a.0, op), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, UnaryOp::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, UnaryOp::Relu)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, UnaryOp::Exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, UnaryOp::Log)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, UnaryOp::Softplus)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, UnaryOp::Sigmoid)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, UnaryOp::Sqrt)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, UnaryOp::Square)
    }

    pub fn ln_1p(&mut self, a: Var) -> Var {
        self.unary(a, UnaryOp::Log1p)
    }

    pub fn lgamma(&mut self, a: Var) -> Var {
        self.unary(a, UnaryOp::Lgamma)
    }

    pub fn heads(&mut self, x: Var, heads: &[Head]) -> Result<Var, NnError> {
        let lx = self.check(x)?;
        if lx != heads.len() {
            return Err(NnError::Shape { op: "heads", left: lx, right: heads.len() });
        }
        let first = self.heads.len();
        self.heads.extend_from_slice(heads);
        let out: Vec<f64> = self.value(x).iter().zip(heads).map(|(v, h)| apply_head(*h, *v)).collect();
        Ok(self.push(Op::Heads { x: x.0, first }, out))
    }

    pub fn index(&mut self, a: Var, k: usize) -> Result<Var, NnError> {
        let la = self.check(a)?;
        if k >= la {
            return Err(NnError::Shape { op: "index", left: k, right: la });
        }
        let v = self.value(a)[k];
        Ok(self.push(Op::Index(a.0, k), [v]))
    }

    pub fn slice(&mut self, a: Var, from: usize, len: usize) -> Result<Var, NnError> {
        let la = self.check(a)?;
        if from + len > la || len == 0 {
            return Err(NnError::Shape { op: "slice", left: from + len, right: la });
        }
        let out: Vec<f64> = self.value(a)[from..from + len].to_vec();
        Ok(self.push(Op::Slice(a.0, from), out))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let mut out = Vec::new();
        for p in parts {
            self.check(*p)?;
            out.extend_from_slice(self.value(*p));
        }
        let first = self.aux.len();
        self.aux.extend(parts.iter().map(|p| p.0));
        Ok(self.push(Op::Concat { first, count: parts.len() }, out))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum::<f64>();
        self.push(Op::Sum(a.0), [s])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (la, lb) = (self.check(a)?, self.check(b)?);
        if la != lb {
            return Err(NnError::Shape { op: "dot", left: la, right: lb });
        }
        let s = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum::<f64>();
        Ok(self.push(Op::Dot(a.0, b.0), [s]))
    }

    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let v = crate::prob::log_sum_exp(self.value(a)).unwrap_or(f64::NEG_INFINITY);
        self.push(Op::LogSumExp(a.0), [v])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        let len = self.check(loss)?;
        if len != 1 {
            return Err(NnError::NotScalar(len));
        }
        let mut adj = vec![0.0; self.data.len()];
        let mut pgrad = vec![0.0; self.params.len()];
        adj[self.nodes[loss.0].start] = 1.0;
        for i in (0..=loss.0).rev() {
            let node = self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Param { .. }) {
                continue;
            }
            let (before, after) = adj.split_at_mut(node.start);
            let g = &after[..node.len];
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let mut sink = Sink { nodes: &self.nodes, adj: before, pgrad: &mut pgrad };
            let y = &self.data[node.start..node.start + node.len];
            match node.op {
                Op::Leaf | Op::Param { .. } => unreachable!(),
                Op::Affine { w, x, b } => {
                    let cols = self.nodes[x].len;
                    let wv = self.value(Var(w));
                    let xv = self.value(Var(x));
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        sink.add(b, r, *gr);
                        sink.add_row(w, r * cols, xv, *gr);
                    }
                    for c in 0..cols {
                        let s: f64 = g.iter().enumerate().map(|(r, gr)| gr * wv[r * cols + c]).sum();
                        sink.add(x, c, s);
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                    let (av, bv) = (self.value(Var(a)), self.value(Var(b)));
                    let (la, lb) = (av.len(), bv.len());
                    for (k, gk) in g.iter().enumerate() {
                        let (ia, ib) = (if la == 1 { 0 } else { k }, if lb == 1 { 0 } else { k });
                        let (x, z) = (av[ia], bv[ib]);
                        let (da, db) = match node.op {
                            Op::Add(..) => (1.0, 1.0),
                            Op::Sub(..) => (1.0, -1.0),
                            Op::Mul(..) => (z, x),
                            _ => (1.0 / z, -x / (z * z)),
                        };
                        sink.add(a, ia, gk * da);
                        sink.add(b, ib, gk * db);
                    }
                }
                Op::Scale(a, c) => {
                    for (k, gk) in g.iter().enumerate() {
                        sink.add(a, k, gk * c);
                    }
                }
                Op::Offset(a) => {
                    for (k, gk) in g.iter().enumerate() {
                        sink.add(a, k, *gk);
                    }
                }
                Op::Unary(a, op) => {
                    let xv = self.value(Var(a));
                    for (k, gk) in g.iter().enumerate() {
                        let (x, yk) = (xv[k], y[k]);
                        let d = match op {
                            UnaryOp::Tanh => 1.0 - yk * yk,
                            UnaryOp::Relu => {
                                if x > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            UnaryOp::Exp => yk,
                            UnaryOp::Log => 1.0 / x,
                            UnaryOp::Softplus => sigmoid(x),
                            UnaryOp::Sigmoid => yk * (1.0 - yk),
                            UnaryOp::Sqrt => 0.5 / yk,
                            UnaryOp::Square => 2.0 * x,
                            UnaryOp::Log1p => 1.0 / (1.0 + x),
                            UnaryOp::Lgamma => digamma(x),
                        };
                        sink.add(a, k, gk * d);
                    }
                }
                Op::Heads { x, first } => {
                    let xv = self.value(Var(x));
                    for (k, gk) in g.iter().enumerate() {
                        let d = match self.heads[first + k] {
                            Head::Identity => 1.0,
                            Head::Softplus => sigmoid(xv[k]),
                            Head::Sigmoid => y[k] * (1.0 - y[k]),
                        };
                        sink.add(x, k, gk * d);
                    }
                }
                Op::Index(a, k) => sink.add(a, k, g[0]),
                Op::Slice(a, from) => {
                    for (k, gk) in g.iter().enumerate() {
                        sink.add(a, from + k, *gk);
                    }
                }
                Op::Concat { first, count } => {
                    let mut k = 0;
                    for &p in &self.aux[first..first + count] {
                        for j in 0..self.nodes[p].len {
                            sink.add(p, j, g[k]);
                            k += 1;
                        }
                    }
                }
                Op::Sum(a) => {
                    for k in 0..self.nodes[a].len {
                        sink.add(a, k, g[0]);
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.value(Var(a)), self.value(Var(b)));
                    for k in 0..av.len() {
                        sink.add(a, k, g[0] * bv[k]);
                        sink.add(b, k, g[0] * av[k]);
                    }
                }
                Op::LogSumExp(a) => {
                    let av = self.value(Var(a));
                    if y[0] == f64::NEG_INFINITY {
                        continue;
                    }
                    for (k, v) in av.iter().enumerate() {
                        sink.add(a, k, g[0] * (v - y[0]).exp());
                    }
                }
            }
        }
        Ok(Gradients { nodes: self.nodes.clone(), adj, params: pgrad })
    }
}

struct Sink<'a> {
    nodes: &'a [Node],
    adj: &'a mut [f64],
    pgrad: &'a mut [f64],
}

impl Sink<'_> {
    #[inline]
    fn add(&mut self, node: usize, k: usize, v: f64) {
        let n = &self.nodes[node];
        match n.op {
            Op::Param { offset } => self.pgrad[offset + k] += v,
            _ => self.adj[n.start + k] += v,
        }
    }

    #[inline]
    fn add_row(&mut self, node: usize, from: usize, xs: &[f64], scale: f64) {
        let n = &self.nodes[node];
        let dst = match n.op {
            Op::Param { offset } => &mut self.pgrad[offset + from..offset + from + xs.len()],
            _ => &mut self.adj[n.start + from..n.start + from + xs.len()],
        };
        for (d, x) in dst.iter_mut().zip(xs) {
            *d += scale * x;
        }
    }
}

/// Result of a backward sweep.
pub struct Gradients {
    nodes: Vec<Node>,
    adj: Vec<f64>,
    params: Vec<f64>,
}

impl Gradients {
    /// Gradient with respect to the tape's parameter slice.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    /// Adjoint of a non-parameter node (typically a leaf input).
    pub fn wrt(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        match n.op {
            Op::Param { offset } => &self.params[offset..offset + n.len],
            _ => &self.adj[n.start..n.start + n.len],
        }
    }
}
