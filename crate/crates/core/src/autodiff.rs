//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and the data its
//! backward rule needs. Nodes are appended in execution order, so walking the
//! tape backwards from the loss is a valid reverse topological order.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{conv, interp, norm, pool};
use crate::param::{ParamId, ParamStore};
use crate::tensor::{Real, Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Constant,
    Leaf,
    Param,
    Conv3d,
    MaxPool3d,
    Upsample,
    InstanceNorm,
    LeakyRelu,
    Add,
    Sub,
    Abs,
    Scale,
    Sum,
    Concat,
    SliceChannels,
    Softmax,
    HybridLoss,
}

/// The FMU primitives and their companion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Abs,
}

enum Op<T> {
    Constant,
    Leaf,
    Param(ParamId),
    Conv3d { input: Var, weight: Var, bias: Var, geom: conv::ConvGeometry },
    MaxPool3d { input: Var, argmax: Vec<usize> },
    Upsample { input: Var, src: [usize; 3], dst: [usize; 3], slices: usize },
    InstanceNorm { input: Var, gamma: Var, beta: Var, stats: norm::SliceStats },
    LeakyRelu { input: Var, slope: T },
    Add(Var, Var),
    Sub(Var, Var),
    Abs(Var),
    Scale(Var, T),
    Sum(Var),
    Concat(Var, Var),
    SliceChannels { input: Var, start: usize },
    Softmax(Var),
    HybridLoss { probs: Var, label: Tensor<T>, eps: f64 },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Constant => OpKind::Constant,
            Op::Leaf => OpKind::Leaf,
            Op::Param(_) => OpKind::Param,
            Op::Conv3d { .. } => OpKind::Conv3d,
            Op::MaxPool3d { .. } => OpKind::MaxPool3d,
            Op::Upsample { .. } => OpKind::Upsample,
            Op::InstanceNorm { .. } => OpKind::InstanceNorm,
            Op::LeakyRelu { .. } => OpKind::LeakyRelu,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Abs(_) => OpKind::Abs,
            Op::Scale(..) => OpKind::Scale,
            Op::Sum(_) => OpKind::Sum,
            Op::Concat(..) => OpKind::Concat,
            Op::SliceChannels { .. } => OpKind::SliceChannels,
            Op::Softmax(_) => OpKind::Softmax,
            Op::HybridLoss { .. } => OpKind::HybridLoss,
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    fault: Option<OpKind>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one backward pass, kept for leaf and parameter nodes.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn same_shape(op: &'static str, a: &Shape, b: &Shape) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch { op, left: a.clone(), right: b.clone() });
    }
    Ok(())
}

const AXES: [&str; 3] = ["depth", "height", "width"];

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), fault: None }
    }

    /// Test hook: scales every input gradient produced by ops of `kind` by 1.5.
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// A value whose gradient is tracked (e.g. an input under test).
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        let p = store.get(id)?;
        Ok(self.push(p.value.clone(), Op::Param(id), true))
    }

    /// Stride-1 cross-correlation with zero padding.
    pub fn conv3d(&mut self, input: Var, weight: Var, bias: Var, padding: [usize; 3]) -> Result<Var> {
        let [n, cin, d, h, w] = self.shape(input).dims5()?;
        let [cout, wcin, kd, kh, kw] = self.shape(weight).dims5()?;
        if wcin != cin {
            return Err(Error::AxisMismatch { op: "conv3d", axis: "channel", expected: wcin, actual: cin });
        }
        let kernel = [kd, kh, kw];
        for (a, &k) in kernel.iter().enumerate() {
            if k % 2 == 0 {
                return Err(Error::EvenKernel { axis: AXES[a], extent: k });
            }
        }
        if self.shape(bias).dims() != [cout] {
            return Err(Error::AxisMismatch {
                op: "conv3d",
                axis: "bias",
                expected: cout,
                actual: self.shape(bias).numel(),
            });
        }
        let pad = [padding[0] as isize, padding[1] as isize, padding[2] as isize];
        let output = conv::ConvGeometry::output_extents([d, h, w], kernel, pad)
            .map_err(|(a, e)| Error::NonPositiveExtent { op: "conv3d", axis: AXES[a], extent: e })?;
        let geom = conv::ConvGeometry {
            batch: n,
            in_channels: cin,
            out_channels: cout,
            input: [d, h, w],
            kernel,
            padding: pad,
            output,
        };
        let y = conv::forward(
            self.value(input).data(),
            self.value(weight).data(),
            Some(self.value(bias).data()),
            &geom,
        );
        let value = Tensor::from_parts(Shape::new(&[n, cout, output[0], output[1], output[2]])?, y);
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(value, Op::Conv3d { input, weight, bias, geom }, rg))
    }

    /// Max pooling with stride equal to the window.
    pub fn maxpool3d(&mut self, input: Var, window: [usize; 3]) -> Result<Var> {
        let [n, c, d, h, w] = self.shape(input).dims5()?;
        for (a, (&win, &e)) in window.iter().zip(&[d, h, w]).enumerate() {
            if win == 0 {
                return Err(Error::InvalidArgument("maxpool3d: zero window".into()));
            }
            if win > e {
                return Err(Error::WindowTooLarge { axis: AXES[a], window: win, extent: e });
            }
        }
        let (y, argmax) = pool::max_forward(self.value(input).data(), n * c, [d, h, w], window);
        let dims = [n, c, d / window[0], h / window[1], w / window[2]];
        let value = Tensor::from_parts(Shape::new(&dims)?, y);
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::MaxPool3d { input, argmax }, rg))
    }

    /// Trilinear resize to `target` (z, y, x) extents.
    pub fn upsample_trilinear(&mut self, input: Var, target: [usize; 3]) -> Result<Var> {
        let [n, c, d, h, w] = self.shape(input).dims5()?;
        if let Some(a) = target.iter().position(|&t| t == 0) {
            return Err(Error::NonPositiveExtent { op: "upsample_trilinear", axis: AXES[a], extent: 0 });
        }
        let src = [d, h, w];
        let y = interp::trilinear_forward(self.value(input).data(), n * c, src, target);
        let value = Tensor::from_parts(Shape::new(&[n, c, target[0], target[1], target[2]])?, y);
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::Upsample { input, src, dst: target, slices: n * c }, rg))
    }

    pub fn instance_norm(&mut self, input: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument("instance_norm: eps must be positive".into()));
        }
        let [n, c, ..] = self.shape(input).dims5()?;
        for p in [gamma, beta] {
            if self.shape(p).dims() != [c] {
                return Err(Error::AxisMismatch {
                    op: "instance_norm",
                    axis: "affine",
                    expected: c,
                    actual: self.shape(p).numel(),
                });
            }
        }
        let (y, stats) = norm::instance_forward(
            self.value(input).data(),
            n,
            c,
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
        );
        let value = Tensor::from_parts(self.shape(input).clone(), y);
        let rg = self.any_grad(&[input, gamma, beta]);
        Ok(self.push(value, Op::InstanceNorm { input, gamma, beta, stats }, rg))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let s = T::of(slope);
        let value = self.value(input).map(|v| if v >= T::zero() { v } else { v * s });
        let rg = self.any_grad(&[input]);
        self.push(value, Op::LeakyRelu { input, slope: s }, rg)
    }

    pub fn elementwise(&mut self, op: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        match (op, b) {
            (Elementwise::Add, Some(b)) => self.add(a, b),
            (Elementwise::Sub, Some(b)) => self.sub(a, b),
            (Elementwise::Abs, None) => Ok(self.abs(a)),
            (Elementwise::Abs, Some(_)) => Err(Error::InvalidArgument("abs is unary".into())),
            (_, None) => Err(Error::InvalidArgument("binary elementwise op needs two operands".into())),
        }
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        same_shape(name, self.shape(a), self.shape(b))?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Ok(Tensor::from_parts(x.shape().clone(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("add", a, b, |p, q| p + q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("sub", a, b, |p, q| p - q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.abs());
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Abs(a), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let f = T::of(factor);
        let value = self.value(a).map(|v| v * f);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Scale(a, f), rg)
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    /// Concatenates along the channel axis, `a` first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [na, ca, da, ha, wa] = self.shape(a).dims5()?;
        let [nb, cb, db, hb, wb] = self.shape(b).dims5()?;
        for (axis, x, y) in [("batch", na, nb), ("depth", da, db), ("height", ha, hb), ("width", wa, wb)] {
            if x != y {
                return Err(Error::AxisMismatch { op: "concat_channels", axis, expected: x, actual: y });
            }
        }
        let vox = da * ha * wa;
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity((ca + cb) * vox * na);
        for n in 0..na {
            data.extend_from_slice(&x[n * ca * vox..(n + 1) * ca * vox]);
            data.extend_from_slice(&y[n * cb * vox..(n + 1) * cb * vox]);
        }
        let value = Tensor::from_parts(Shape::new(&[na, ca + cb, da, ha, wa])?, data);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Concat(a, b), rg))
    }

    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(input).slice_channels(start, len)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::SliceChannels { input, start }, rg))
    }

    /// Softmax across channels at every voxel, max-subtracted.
    pub fn softmax_channels(&mut self, logits: Var) -> Result<Var> {
        let [n, c, d, h, w] = self.shape(logits).dims5()?;
        let vox = d * h * w;
        let x = self.value(logits).data();
        let mut out = vec![T::zero(); x.len()];
        for b in 0..n {
            let base = b * c * vox;
            for v in 0..vox {
                let mut m = T::neg_infinity();
                for k in 0..c {
                    m = m.max(x[base + k * vox + v]);
                }
                let mut s = T::zero();
                for k in 0..c {
                    let e = (x[base + k * vox + v] - m).exp();
                    out[base + k * vox + v] = e;
                    s = s + e;
                }
                let inv = T::one() / s;
                for k in 0..c {
                    out[base + k * vox + v] = out[base + k * vox + v] * inv;
                }
            }
        }
        let value = Tensor::from_parts(self.shape(logits).clone(), out);
        let rg = self.any_grad(&[logits]);
        Ok(self.push(value, Op::Softmax(logits), rg))
    }

    /// Hybrid dice + cross-entropy loss of softmax probabilities `probs`
    /// against a one-hot `label` of the same shape:
    ///
    /// `-( 2/C * sum_c (I_c + eps/2) / (S_c + eps) + 1/V * sum y log(x + eps) )`
    ///
    /// where `I_c = sum x*y` and `S_c = sum x + sum y` run over every voxel of
    /// the batch and `V` is the batch voxel count.
    pub fn hybrid_loss(&mut self, probs: Var, label: &Tensor<T>, eps: f64) -> Result<Var> {
        same_shape("hybrid_loss", self.shape(probs), label.shape())?;
        let (_, loss) = hybrid_terms(self.value(probs), label, eps)?;
        let rg = self.any_grad(&[probs]);
        Ok(self.push(Tensor::scalar(T::of(loss)), Op::HybridLoss { probs, label: label.clone(), eps }, rg))
    }

    /// Gradients of a scalar output with respect to every leaf and parameter.
    pub fn gradients(&self, loss: Var) -> Result<Gradients<T>> {
        let v = self.value(loss);
        if v.len() != 1 {
            return Err(Error::NotScalar { shape: v.shape().clone() });
        }
        self.vjp(loss, Tensor::from_parts(v.shape().clone(), vec![T::one()]))
    }

    /// Vector-Jacobian product: pulls `seed` (shaped like `output`) back to
    /// the leaves.
    pub fn vjp(&self, output: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        same_shape("vjp", self.shape(output), seed.shape())?;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let is_leaf = matches!(node.op, Op::Leaf | Op::Param(_) | Op::Constant);
            if is_leaf {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let mut contribs = self.backward_rule(idx, &g);
            if self.fault == Some(node.op.kind()) {
                for (_, t) in contribs.iter_mut() {
                    let k = T::of(1.5);
                    t.data_mut().iter_mut().for_each(|v| *v = *v * k);
                }
            }
            for (var, t) in contribs {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Fills every parameter's gradient slot; parameters the loss does not
    /// reach get zeros.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let grads = self.gradients(loss)?;
        store.zero_grad();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = &grads.grads[idx] {
                    store.get_mut(id)?.grad.add_assign(g);
                }
            }
        }
        Ok(())
    }

    fn backward_rule(&self, idx: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let node = &self.nodes[idx];
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        let like = |v: Var, data: Vec<T>| Tensor::from_parts(self.shape(v).clone(), data);
        let mut out = Vec::with_capacity(3);
        match &node.op {
            Op::Constant | Op::Leaf | Op::Param(_) => {}
            Op::Conv3d { input, weight, bias, geom } => {
                if rg(*weight) || rg(*bias) {
                    let (dw, db) = conv::backward_params(self.value(*input).data(), g.data(), geom);
                    out.push((*weight, like(*weight, dw)));
                    out.push((*bias, like(*bias, db)));
                }
                if rg(*input) {
                    let dx = conv::backward_input(g.data(), self.value(*weight).data(), geom);
                    out.push((*input, like(*input, dx)));
                }
            }
            Op::MaxPool3d { input, argmax } => {
                let dx = pool::max_backward(g.data(), argmax, self.value(*input).len());
                out.push((*input, like(*input, dx)));
            }
            Op::Upsample { input, src, dst, slices } => {
                let dx = interp::trilinear_backward(g.data(), *slices, *src, *dst);
                out.push((*input, like(*input, dx)));
            }
            Op::InstanceNorm { input, gamma, beta, stats } => {
                let x = self.value(*input);
                let [n, c, ..] = x.shape().dims5().expect("checked at record time");
                let (dx, dg, db) =
                    norm::instance_backward(x.data(), g.data(), n, c, self.value(*gamma).data(), stats);
                out.push((*input, like(*input, dx)));
                out.push((*gamma, like(*gamma, dg)));
                out.push((*beta, like(*beta, db)));
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input).data();
                let dx = x.iter().zip(g.data()).map(|(&v, &d)| if v >= T::zero() { d } else { d * *slope }).collect();
                out.push((*input, like(*input, dx)));
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.map(|v| -v)));
            }
            Op::Abs(a) => {
                let x = self.value(*a).data();
                let dx = x
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &d)| {
                        if v > T::zero() {
                            d
                        } else if v < T::zero() {
                            -d
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                out.push((*a, like(*a, dx)));
            }
            Op::Scale(a, f) => out.push((*a, g.map(|v| v * *f))),
            Op::Sum(a) => {
                let s = g.data()[0];
                out.push((*a, Tensor::from_parts(self.shape(*a).clone(), vec![s; self.value(*a).len()])));
            }
            Op::Concat(a, b) => {
                let [n, ca, ..] = self.shape(*a).dims5().expect("checked at record time");
                let cb = self.shape(*b).dims()[1];
                let vox = self.value(*a).len() / (n * ca);
                let mut ga = Vec::with_capacity(n * ca * vox);
                let mut gb = Vec::with_capacity(n * cb * vox);
                for s in 0..n {
                    let base = s * (ca + cb) * vox;
                    ga.extend_from_slice(&g.data()[base..base + ca * vox]);
                    gb.extend_from_slice(&g.data()[base + ca * vox..base + (ca + cb) * vox]);
                }
                out.push((*a, like(*a, ga)));
                out.push((*b, like(*b, gb)));
            }
            Op::SliceChannels { input, start } => {
                let [n, c, d, h, w] = self.shape(*input).dims5().expect("checked at record time");
                let len = g.dims()[1];
                let vox = d * h * w;
                let mut dx = vec![T::zero(); n * c * vox];
                for s in 0..n {
                    let dst = (s * c + start) * vox;
                    dx[dst..dst + len * vox].copy_from_slice(&g.data()[s * len * vox..(s + 1) * len * vox]);
                }
                out.push((*input, like(*input, dx)));
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let [n, c, d, h, w] = node.value.shape().dims5().expect("checked at record time");
                let vox = d * h * w;
                let gy = g.data();
                let mut dx = vec![T::zero(); y.len()];
                for b in 0..n {
                    let base = b * c * vox;
                    for v in 0..vox {
                        let mut dot = T::zero();
                        for k in 0..c {
                            let i = base + k * vox + v;
                            dot = dot + gy[i] * y[i];
                        }
                        for k in 0..c {
                            let i = base + k * vox + v;
                            dx[i] = y[i] * (gy[i] - dot);
                        }
                    }
                }
                out.push((*a, like(*a, dx)));
            }
            Op::HybridLoss { probs, label, eps } => {
                let x = self.value(*probs);
                let (terms, _) = hybrid_terms(x, label, *eps).expect("checked at record time");
                let upstream = g.data()[0].f64();
                let [n, c, d, h, w] = x.shape().dims5().expect("checked at record time");
                let vox = d * h * w;
                let total = (n * vox) as f64;
                let (xd, yd) = (x.data(), label.data());
                let mut dx = vec![T::zero(); xd.len()];
                for k in 0..c {
                    let (i_c, s_c) = (terms.intersection[k], terms.sums[k]);
                    let den = s_c + eps;
                    let minus_num = i_c + eps / 2.0;
                    for b in 0..n {
                        let base = (b * c + k) * vox;
                        for v in 0..vox {
                            let (xv, yv) = (xd[base + v].f64(), yd[base + v].f64());
                            let ddice = (yv * den - minus_num) / (den * den);
                            let dce = yv / (total * (xv + eps));
                            dx[base + v] = T::of(-upstream * (2.0 / c as f64 * ddice + dce));
                        }
                    }
                }
                out.push((*probs, like(*probs, dx)));
            }
        }
        out
    }
}

struct HybridTerms {
    intersection: Vec<f64>,
    sums: Vec<f64>,
}

fn hybrid_terms<T: Real>(x: &Tensor<T>, y: &Tensor<T>, eps: f64) -> Result<(HybridTerms, f64)> {
    let [n, c, d, h, w] = x.shape().dims5()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("hybrid_loss: eps must be positive".into()));
    }
    let vox = d * h * w;
    let (xd, yd) = (x.data(), y.data());
    let mut intersection = vec![0.0; c];
    let mut sums = vec![0.0; c];
    let mut ce = 0.0;
    for b in 0..n {
        for k in 0..c {
            let base = (b * c + k) * vox;
            let (xs, ys) = (&xd[base..base + vox], &yd[base..base + vox]);
            let mut inter = 0.0;
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut ce_k = 0.0;
            for (&xv, &yv) in xs.iter().zip(ys) {
                let (xv, yv) = (xv.f64(), yv.f64());
                inter += xv * yv;
                sx += xv;
                sy += yv;
                if yv != 0.0 {
                    ce_k += yv * libm::log(xv + eps);
                }
            }
            intersection[k] += inter;
            sums[k] += sx + sy;
            ce += ce_k;
        }
    }
    let dice: f64 = intersection.iter().zip(&sums).map(|(i, s)| (i + eps / 2.0) / (s + eps)).sum();
    let loss = -(2.0 / c as f64 * dice + ce / (n * vox) as f64);
    Ok((HybridTerms { intersection, sums }, loss))
}
