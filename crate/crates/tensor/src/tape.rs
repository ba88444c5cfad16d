//! Reverse-mode gradient tape.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Calling
//! [`Tape::backward`] walks the records in reverse and accumulates
//! gradients for every node that depends on a trainable leaf.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{invalid, shape_err, Result};
use crate::tensor::{self, gemm_acc, require_2d, Tensor};

/// Lower/upper clamp applied to probabilities inside [`Var::bce`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    None,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Minimum(usize, usize),
    AddBias(usize, usize),
    Linear { x: usize, w: usize, b: usize, relu: bool },
    Relu(usize),
    Sigmoid(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Recip(usize),
    Reshape(usize),
    MaxPool { x: usize, argmax: Vec<usize> },
    Bce { pred: usize, target: Rc<Tensor>, reduction: Reduction },
    GatherRows { x: usize, idx: Vec<usize> },
    ConcatCols(Vec<usize>),
    NarrowCols { x: usize, start: usize },
    RowSum(usize),
    RowNorm(usize),
    ScaleRows(usize, usize),
    WeightedGather { x: usize, idx: Vec<usize>, weights: Vec<f64>, k: usize },
    Sum(usize),
    Mean(usize),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward pass. Single-threaded by construction.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} {:?})", self.id, self.value().shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or zeros when nothing flowed into it.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Trainable leaf: gradients are accumulated into it.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: never receives gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Back-propagates from a one-element `output`.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let out_val = &nodes[output.id].value;
        if out_val.numel() != 1 {
            return invalid("backward", format!("output must be scalar, got {:?}", out_val.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.id] = Some(Tensor::ones(out_val.shape()));

        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop_node(&nodes, node, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, delta: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(g) => {
            for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

/// Gradient of a binary op operand after undoing scalar broadcasting.
fn unbroadcast(operand: &Tensor, full: Tensor) -> Tensor {
    if operand.numel() == full.numel() {
        full.reshape(operand.shape()).expect("same numel")
    } else {
        Tensor::new(operand.shape(), vec![full.sum()]).expect("scalar operand")
    }
}

fn binary_grads(
    a: &Tensor,
    b: &Tensor,
    g: &Tensor,
    f: impl Fn(f64, f64, f64) -> (f64, f64),
) -> (Tensor, Tensor) {
    let n = g.numel();
    let mut ga = Vec::with_capacity(n);
    let mut gb = Vec::with_capacity(n);
    for i in 0..n {
        let av = if a.numel() == 1 { a.data()[0] } else { a.data()[i] };
        let bv = if b.numel() == 1 { b.data()[0] } else { b.data()[i] };
        let (da, db) = f(av, bv, g.data()[i]);
        ga.push(da);
        gb.push(db);
    }
    let shape = g.shape();
    (
        unbroadcast(a, Tensor::new(shape, ga).expect("shape")),
        unbroadcast(b, Tensor::new(shape, gb).expect("shape")),
    )
}

fn backprop_node(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
    let val = |i: usize| nodes[i].value.clone();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k) = require_2d("matmul", &av)?;
            let n = bv.cols();
            if nodes[*a].requires_grad {
                let mut da = vec![0.0; m * k];
                gemm_acc(m, n, k, g.data(), false, bv.data(), true, &mut da, 0.0);
                accumulate(grads, nodes, *a, Tensor::new(&[m, k], da)?);
            }
            if nodes[*b].requires_grad {
                let mut db = vec![0.0; k * n];
                gemm_acc(k, m, n, av.data(), true, g.data(), false, &mut db, 0.0);
                accumulate(grads, nodes, *b, Tensor::new(&[k, n], db)?);
            }
        }
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::Minimum(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (ga, gb) = match &node.op {
                Op::Add(..) => binary_grads(&av, &bv, g, |_, _, g| (g, g)),
                Op::Sub(..) => binary_grads(&av, &bv, g, |_, _, g| (g, -g)),
                Op::Mul(..) => binary_grads(&av, &bv, g, |x, y, g| (g * y, g * x)),
                Op::Div(..) => binary_grads(&av, &bv, g, |x, y, g| (g / y, -g * x / (y * y))),
                _ => binary_grads(&av, &bv, g, |x, y, g| if x <= y { (g, 0.0) } else { (0.0, g) }),
            };
            accumulate(grads, nodes, *a, ga);
            accumulate(grads, nodes, *b, gb);
        }
        Op::Linear { x, w, b, relu } => {
            let (xv, wv) = (val(*x), val(*w));
            let (m, k) = require_2d("linear", &xv)?;
            let n = wv.cols();
            let gz: Vec<f64> = if *relu {
                node.value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
                    .collect()
            } else {
                g.data().to_vec()
            };
            if nodes[*x].requires_grad {
                let mut dx = vec![0.0; m * k];
                gemm_acc(m, n, k, &gz, false, wv.data(), true, &mut dx, 0.0);
                accumulate(grads, nodes, *x, Tensor::new(&[m, k], dx)?);
            }
            if nodes[*w].requires_grad {
                let mut dw = vec![0.0; k * n];
                gemm_acc(k, m, n, xv.data(), true, &gz, false, &mut dw, 0.0);
                accumulate(grads, nodes, *w, Tensor::new(&[k, n], dw)?);
            }
            if nodes[*b].requires_grad {
                let mut db = vec![0.0; n];
                for r in 0..m {
                    for (d, v) in db.iter_mut().zip(&gz[r * n..(r + 1) * n]) {
                        *d += v;
                    }
                }
                let bshape = nodes[*b].value.shape().to_vec();
                accumulate(grads, nodes, *b, Tensor::new(&bshape, db)?);
            }
        }
        Op::AddBias(x, b) => {
            accumulate(grads, nodes, *x, g.clone());
            let c = g.cols();
            let mut db = vec![0.0; c];
            for r in 0..g.rows() {
                for (d, v) in db.iter_mut().zip(g.row(r)) {
                    *d += v;
                }
            }
            let bshape = nodes[*b].value.shape().to_vec();
            accumulate(grads, nodes, *b, Tensor::new(&bshape, db)?);
        }
        Op::Relu(x) => {
            let xv = val(*x);
            let d = xv
                .data()
                .iter()
                .zip(g.data())
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect();
            accumulate(grads, nodes, *x, Tensor::new(xv.shape(), d)?);
        }
        Op::Sigmoid(x) => {
            let y = &node.value;
            let d = y.data().iter().zip(g.data()).map(|(&y, &g)| g * y * (1.0 - y)).collect();
            accumulate(grads, nodes, *x, Tensor::new(y.shape(), d)?);
        }
        Op::Scale(x, c) => accumulate(grads, nodes, *x, g.map(|v| v * c)),
        Op::AddScalar(x) => accumulate(grads, nodes, *x, g.clone()),
        Op::Recip(x) => {
            let y = &node.value;
            let d = y.data().iter().zip(g.data()).map(|(&y, &g)| -g * y * y).collect();
            accumulate(grads, nodes, *x, Tensor::new(y.shape(), d)?);
        }
        Op::Reshape(x) => {
            let shape = nodes[*x].value.shape().to_vec();
            accumulate(grads, nodes, *x, g.clone().reshape(&shape)?);
        }
        Op::MaxPool { x, argmax } => {
            let shape = nodes[*x].value.shape().to_vec();
            let mut d = Tensor::zeros(&shape);
            let dd = d.data_mut();
            for (&src, &gv) in argmax.iter().zip(g.data()) {
                dd[src] += gv;
            }
            accumulate(grads, nodes, *x, d);
        }
        Op::Bce {
            pred,
            target,
            reduction,
        } => {
            let pv = val(*pred);
            let scale = match reduction {
                Reduction::Mean => 1.0 / pv.numel() as f64,
                Reduction::None => 1.0,
            };
            let d = pv
                .data()
                .iter()
                .zip(target.data())
                .enumerate()
                .map(|(i, (&p, &y))| {
                    let gi = if g.numel() == 1 { g.data()[0] } else { g.data()[i] };
                    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
                        0.0
                    } else {
                        gi * scale * (p - y) / (p * (1.0 - p))
                    }
                })
                .collect();
            accumulate(grads, nodes, *pred, Tensor::new(pv.shape(), d)?);
        }
        Op::GatherRows { x, idx } => {
            let shape = nodes[*x].value.shape().to_vec();
            let c = g.cols();
            let mut d = Tensor::zeros(&shape);
            let dd = d.data_mut();
            for (r, &src) in idx.iter().enumerate() {
                for (dst, v) in dd[src * c..(src + 1) * c].iter_mut().zip(g.row(r)) {
                    *dst += v;
                }
            }
            accumulate(grads, nodes, *x, d);
        }
        Op::ConcatCols(parts) => {
            let total = g.cols();
            let mut offset = 0;
            for &p in parts {
                let pv = val(p);
                let (r, c) = (pv.rows(), pv.cols());
                if nodes[p].requires_grad {
                    let mut d = Vec::with_capacity(r * c);
                    for i in 0..r {
                        d.extend_from_slice(&g.data()[i * total + offset..i * total + offset + c]);
                    }
                    accumulate(grads, nodes, p, Tensor::new(&[r, c], d)?);
                }
                offset += c;
            }
        }
        Op::NarrowCols { x, start } => {
            let shape = nodes[*x].value.shape().to_vec();
            let (r, c) = (shape[0], shape[1]);
            let len = g.cols();
            let mut d = Tensor::zeros(&shape);
            let dd = d.data_mut();
            for i in 0..r {
                dd[i * c + start..i * c + start + len].copy_from_slice(g.row(i));
            }
            accumulate(grads, nodes, *x, d);
        }
        Op::RowSum(x) => {
            let shape = nodes[*x].value.shape().to_vec();
            let c = shape[1];
            let d = g.data().iter().flat_map(|&v| std::iter::repeat(v).take(c)).collect();
            accumulate(grads, nodes, *x, Tensor::new(&shape, d)?);
        }
        Op::RowNorm(x) => {
            let xv = val(*x);
            let c = xv.cols();
            let mut d = Vec::with_capacity(xv.numel());
            for i in 0..xv.rows() {
                let norm = node.value.data()[i];
                for &v in xv.row(i) {
                    // gradient at the origin is defined as zero
                    d.push(if norm > 0.0 { g.data()[i] * v / norm } else { 0.0 });
                }
            }
            debug_assert_eq!(d.len(), xv.rows() * c);
            accumulate(grads, nodes, *x, Tensor::new(xv.shape(), d)?);
        }
        Op::ScaleRows(x, s) => {
            let (xv, sv) = (val(*x), val(*s));
            let c = xv.cols();
            if nodes[*x].requires_grad {
                let mut d = g.data().to_vec();
                for i in 0..xv.rows() {
                    for v in &mut d[i * c..(i + 1) * c] {
                        *v *= sv.data()[i];
                    }
                }
                accumulate(grads, nodes, *x, Tensor::new(xv.shape(), d)?);
            }
            if nodes[*s].requires_grad {
                let d = (0..xv.rows())
                    .map(|i| xv.row(i).iter().zip(g.row(i)).map(|(a, b)| a * b).sum())
                    .collect();
                accumulate(grads, nodes, *s, Tensor::new(sv.shape(), d)?);
            }
        }
        Op::WeightedGather { x, idx, weights, k } => {
            let shape = nodes[*x].value.shape().to_vec();
            let c = shape[1];
            let mut d = Tensor::zeros(&shape);
            let dd = d.data_mut();
            for i in 0..idx.len() / k {
                for j in 0..*k {
                    let (src, w) = (idx[i * k + j], weights[i * k + j]);
                    for (dst, v) in dd[src * c..(src + 1) * c].iter_mut().zip(g.row(i)) {
                        *dst += w * v;
                    }
                }
            }
            accumulate(grads, nodes, *x, d);
        }
        Op::Sum(x) | Op::Mean(x) => {
            let shape = nodes[*x].value.shape().to_vec();
            let n: usize = shape.iter().product();
            let scale = if matches!(node.op, Op::Mean(_)) { 1.0 / n as f64 } else { 1.0 };
            accumulate(grads, nodes, *x, Tensor::full(&shape, g.item() * scale));
        }
    }
    Ok(())
}

fn broadcast_binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let d = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape(), d)
    } else if b.numel() == 1 {
        let y = b.data()[0];
        Ok(a.map(|x| f(x, y)))
    } else if a.numel() == 1 {
        let x = a.data()[0];
        Ok(b.map(|y| f(x, y)))
    } else {
        shape_err(op, a.shape(), b.shape())
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.needs(&[self.id]);
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.needs(&[self.id, other.id]);
        self.tape.push(value, op, rg)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = tensor::matmul(&self.value(), &other.value())?;
        Ok(self.binary(other, v, Op::MatMul(self.id, other.id)))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = broadcast_binary("add", &self.value(), &other.value(), |x, y| x + y)?;
        Ok(self.binary(other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = broadcast_binary("sub", &self.value(), &other.value(), |x, y| x - y)?;
        Ok(self.binary(other, v, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = broadcast_binary("mul", &self.value(), &other.value(), |x, y| x * y)?;
        Ok(self.binary(other, v, Op::Mul(self.id, other.id)))
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = broadcast_binary("div", &self.value(), &other.value(), |x, y| x / y)?;
        Ok(self.binary(other, v, Op::Div(self.id, other.id)))
    }

    /// Elementwise minimum; ties route gradient to `self`.
    pub fn minimum(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = broadcast_binary("minimum", &self.value(), &other.value(), f64::min)?;
        Ok(self.binary(other, v, Op::Minimum(self.id, other.id)))
    }

    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        let v = tensor::add_bias(&self.value(), &bias.value())?;
        Ok(self.binary(bias, v, Op::AddBias(self.id, bias.id)))
    }

    /// Fused `x·w + b`, optionally followed by relu, recorded as one node.
    pub fn linear(self, w: Var<'t>, b: Var<'t>, relu: bool) -> Result<Var<'t>> {
        let v = tensor::linear(&self.value(), &w.value(), &b.value(), relu)?;
        let rg = self.tape.needs(&[self.id, w.id, b.id]);
        Ok(self.tape.push(
            v,
            Op::Linear {
                x: self.id,
                w: w.id,
                b: b.id,
                relu,
            },
            rg,
        ))
    }

    pub fn relu(self) -> Var<'t> {
        let v = tensor::relu(&self.value());
        self.unary(v, Op::Relu(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let v = tensor::sigmoid(&self.value());
        self.unary(v, Op::Sigmoid(self.id))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let v = self.value().map(|x| x * c);
        self.unary(v, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let v = self.value().map(|x| x + c);
        self.unary(v, Op::AddScalar(self.id))
    }

    pub fn recip(self) -> Var<'t> {
        let v = self.value().map(|x| 1.0 / x);
        self.unary(v, Op::Recip(self.id))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let v = (*self.value()).clone().reshape(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }

    /// Max over neighbors of a `[centers, neighbors, channels]` value.
    pub fn max_pool_groups(self) -> Result<Var<'t>> {
        let (v, argmax) = tensor::max_pool_groups(&self.value())?;
        Ok(self.unary(v, Op::MaxPool { x: self.id, argmax }))
    }

    /// Binary cross entropy of probabilities `self` against a 0/1 `target`.
    pub fn bce(self, target: &Tensor, reduction: Reduction) -> Result<Var<'t>> {
        let p = self.value();
        if p.shape() != target.shape() {
            return shape_err("bce", p.shape(), target.shape());
        }
        if let Some(bad) = target.data().iter().find(|&&y| y != 0.0 && y != 1.0) {
            return invalid("bce", format!("target value {bad} is not 0 or 1"));
        }
        let per: Vec<f64> = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .collect();
        let v = match reduction {
            Reduction::None => Tensor::new(p.shape(), per)?,
            Reduction::Mean => {
                let n = per.len().max(1) as f64;
                Tensor::scalar(per.iter().sum::<f64>() / n)
            }
        };
        Ok(self.unary(
            v,
            Op::Bce {
                pred: self.id,
                target: Rc::new(target.clone()),
                reduction,
            },
        ))
    }

    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t>> {
        let v = tensor::gather_rows(&self.value(), idx)?;
        Ok(self.unary(
            v,
            Op::GatherRows {
                x: self.id,
                idx: idx.to_vec(),
            },
        ))
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let Some(first) = parts.first() else {
            return invalid("concat_cols", "no inputs");
        };
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        let v = tensor::concat_cols(&refs)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = first.tape.needs(&ids);
        Ok(first.tape.push(v, Op::ConcatCols(ids), rg))
    }

    pub fn narrow_cols(self, start: usize, len: usize) -> Result<Var<'t>> {
        let x = self.value();
        let (r, c) = require_2d("narrow_cols", &x)?;
        if start + len > c {
            return invalid("narrow_cols", format!("columns {start}..{} of {c}", start + len));
        }
        let mut d = Vec::with_capacity(r * len);
        for i in 0..r {
            d.extend_from_slice(&x.row(i)[start..start + len]);
        }
        let v = Tensor::new(&[r, len], d)?;
        Ok(self.unary(v, Op::NarrowCols { x: self.id, start }))
    }

    /// `[n, c] -> [n, 1]` row sums.
    pub fn row_sum(self) -> Result<Var<'t>> {
        let x = self.value();
        let (r, _) = require_2d("row_sum", &x)?;
        let d = (0..r).map(|i| x.row(i).iter().sum()).collect();
        Ok(self.unary(Tensor::new(&[r, 1], d)?, Op::RowSum(self.id)))
    }

    /// `[n, c] -> [n, 1]` Euclidean row norms; gradient at zero is zero.
    pub fn row_norm(self) -> Result<Var<'t>> {
        let x = self.value();
        let (r, _) = require_2d("row_norm", &x)?;
        let d = (0..r)
            .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Ok(self.unary(Tensor::new(&[r, 1], d)?, Op::RowNorm(self.id)))
    }

    /// Multiplies row `i` of `self` by `s[i]`, where `s` is `[n, 1]`.
    pub fn scale_rows(self, s: Var<'t>) -> Result<Var<'t>> {
        let (x, sv) = (self.value(), s.value());
        let (r, c) = require_2d("scale_rows", &x)?;
        if sv.numel() != r {
            return shape_err("scale_rows", x.shape(), sv.shape());
        }
        let mut d = x.data().to_vec();
        for i in 0..r {
            for v in &mut d[i * c..(i + 1) * c] {
                *v *= sv.data()[i];
            }
        }
        Ok(self.binary(s, Tensor::new(&[r, c], d)?, Op::ScaleRows(self.id, s.id)))
    }

    /// Row interpolation: `out[i] = sum_j w[i,j] * self[idx[i,j]]`.
    pub fn weighted_gather(self, idx: &[usize], weights: &[f64], k: usize) -> Result<Var<'t>> {
        let v = tensor::weighted_gather(&self.value(), idx, weights, k)?;
        Ok(self.unary(
            v,
            Op::WeightedGather {
                x: self.id,
                idx: idx.to_vec(),
                weights: weights.to_vec(),
                k,
            },
        ))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().sum());
        self.unary(v, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let x = self.value();
        let v = Tensor::scalar(x.sum() / x.numel().max(1) as f64);
        self.unary(v, Op::Mean(self.id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_half_is_ln2() {
        let tape = Tape::new();
        let p = tape.param(Tensor::full(&[4], 0.5));
        let y = Tensor::new(&[4], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let l = p.bce(&y, Reduction::Mean).unwrap();
        assert!((l.value().item() - 0.69315).abs() < 1e-5);
    }

    #[test]
    fn bce_perfect_is_near_zero() {
        let tape = Tape::new();
        let p = tape.param(Tensor::scalar(1.0 - BCE_EPS));
        let l = p.bce(&Tensor::scalar(1.0), Reduction::None).unwrap();
        assert!(l.value().item() < 1e-6);
    }

    #[test]
    fn bce_rejects_soft_targets() {
        let tape = Tape::new();
        let p = tape.param(Tensor::scalar(0.3));
        assert!(p.bce(&Tensor::scalar(0.5), Reduction::Mean).is_err());
    }

    #[test]
    fn relu_gradient_at_zero_is_zero() {
        let tape = Tape::new();
        let x = tape.param(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = x.relu().sum();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn max_pool_gradient_is_one_hot() {
        let tape = Tape::new();
        let x = tape.param(Tensor::new(&[1, 3, 2], vec![2.0, 1.0, 2.0, 4.0, 0.0, 4.0]).unwrap());
        let y = x.max_pool_groups().unwrap().sum();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(Tensor::scalar(3.0));
        let p = tape.param(Tensor::scalar(2.0));
        let y = p.mul(c).unwrap();
        let g = tape.backward(y).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(p).unwrap().item(), 3.0);
    }

    #[test]
    fn scalar_broadcast_and_mismatch() {
        let tape = Tape::new();
        let a = tape.param(Tensor::ones(&[2, 2]));
        let s = tape.param(Tensor::scalar(2.0));
        let y = a.mul(s).unwrap().sum();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(s).unwrap().item(), 4.0);
        let b = tape.param(Tensor::ones(&[3]));
        assert!(a.add(b).is_err());
    }
}
