//! Recording tape and the differentiable op set.
//!
//! Every op appends a node holding its forward value. A node needs a
//! gradient when any of its inputs does; `backward` walks the nodes in
//! reverse recording order, which is a valid topological order because
//! inputs always precede the node that consumes them.

use super::conv::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    Relu(Var),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Log(Var),
    Abs(Var),
    Clamp(Var, T, T),
    SoftmaxChannels(Var),
    UpsampleNearest2x(Var),
    AvgPool2x(Var),
    GatherChannels(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Relu(_) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Log(_) => "log",
            Op::Abs(_) => "abs",
            Op::Clamp(..) => "clamp",
            Op::SoftmaxChannels(_) => "softmax_channels",
            Op::UpsampleNearest2x(_) => "upsample_nearest2x",
            Op::AvgPool2x(_) => "avg_pool2x",
            Op::GatherChannels(..) => "gather_channels",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Single-owner record of one forward graph.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Its `requires_grad` flag decides whether backward
    /// fills its gradient slot.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs_grad = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs_grad)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.push(tensor.with_requires_grad(false), Op::Leaf, false)
    }

    /// Copies a recorded value into a fresh gradient-free leaf.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Gradient stored on a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].value.take_grad()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(Error::Usage(format!("variable {} is not on this tape", v.0)));
        }
        if self.backward_done {
            return Err(Error::Usage("tape already consumed by backward".into()));
        }
        Ok(())
    }

    fn map_unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var> {
        self.check(x)?;
        let src = &self.nodes[x.0].value;
        let data = src.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(src.shape(), data)?;
        let needs = self.nodes[x.0].needs_grad;
        Ok(self.push(out, op, needs))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        self.check(input)?;
        self.check(kernel)?;
        self.check(bias)?;
        let [batch, cin, h, w] = self.value(input).dims4()?;
        let [cout, kcin, kh, kw] = self.value(kernel).dims4()?;
        if kcin != cin {
            return Err(Error::Config(format!(
                "conv2d kernel expects {kcin} input channels, input has {cin}"
            )));
        }
        if self.value(bias).shape() != [cout] {
            return Err(Error::Shape(format!(
                "conv2d bias shape {:?}, expected [{cout}]",
                self.value(bias).shape()
            )));
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be at least 1".into()));
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(Error::Shape(format!(
                "kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        let geom = ConvGeom {
            batch,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            padding,
            ho: (h + 2 * padding - kh) / stride + 1,
            wo: (w + 2 * padding - kw) / stride + 1,
        };
        let (out, cols) = conv::forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        let out = Tensor::new(&[batch, cout, geom.ho, geom.wo], out)?;
        let needs = self.needs_grad(input) || self.needs_grad(kernel) || self.needs_grad(bias);
        // cols are only needed to differentiate w.r.t. the kernel or input
        let cols = if needs { cols } else { Vec::new() };
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            },
            needs,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map_unary(x, |v| v.max(T::zero()), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        self.map_unary(
            x,
            move |v| if v > T::zero() { v } else { v * slope },
            Op::LeakyRelu(x, slope),
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map_unary(x, sigmoid, Op::Sigmoid(x))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(Error::Shape(format!(
                "{}: {:?} vs {:?}",
                op.name(),
                va.shape(),
                vb.shape()
            )));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(va.shape(), data)?;
        let needs = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(out, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        self.map_unary(x, move |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var> {
        self.map_unary(x, move |v| v + c, Op::AddScalar(x))
    }

    /// Natural log. Non-positive inputs are rejected in debug builds;
    /// callers clamp probabilities first.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        if cfg!(debug_assertions) {
            if let Some(pos) = self.value(x).data().iter().position(|&v| v <= T::zero()) {
                return Err(Error::Numeric(format!(
                    "log of non-positive value {} at element {pos}",
                    self.value(x).data()[pos]
                )));
            }
        }
        self.map_unary(x, |v| v.ln(), Op::Log(x))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.map_unary(x, |v| v.abs(), Op::Abs(x))
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Result<Var> {
        if lo > hi {
            return Err(Error::Usage(format!("clamp with lo {lo} > hi {hi}")));
        }
        self.map_unary(x, move |v| v.max(lo).min(hi), Op::Clamp(x, lo, hi))
    }

    pub fn softmax_channels(&mut self, scores: Var) -> Result<Var> {
        self.check(scores)?;
        let src = self.value(scores);
        let [b, c, h, w] = src.dims4()?;
        if c < 2 {
            return Err(Error::Shape(format!("softmax over {c} channel(s)")));
        }
        let hw = h * w;
        let x = src.data();
        let mut out = vec![T::zero(); x.len()];
        for bi in 0..b {
            let base = bi * c * hw;
            for p in 0..hw {
                let mut m = T::neg_infinity();
                for ch in 0..c {
                    m = m.max(x[base + ch * hw + p]);
                }
                let mut total = T::zero();
                for ch in 0..c {
                    let e = (x[base + ch * hw + p] - m).exp();
                    out[base + ch * hw + p] = e;
                    total += e;
                }
                for ch in 0..c {
                    out[base + ch * hw + p] /= total;
                }
            }
        }
        let out = Tensor::new(src.shape(), out)?;
        let needs = self.needs_grad(scores);
        Ok(self.push(out, Op::SoftmaxChannels(scores), needs))
    }

    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let src = self.value(x);
        let [b, c, h, w] = src.dims4()?;
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); b * c * h2 * w2];
        for (plane, dst) in src.data().chunks_exact(h * w).zip(out.chunks_exact_mut(h2 * w2)) {
            for y in 0..h2 {
                let src_row = &plane[(y / 2) * w..(y / 2 + 1) * w];
                let dst_row = &mut dst[y * w2..(y + 1) * w2];
                for (xx, v) in dst_row.iter_mut().enumerate() {
                    *v = src_row[xx / 2];
                }
            }
        }
        let out = Tensor::new(&[b, c, h2, w2], out)?;
        let needs = self.needs_grad(x);
        Ok(self.push(out, Op::UpsampleNearest2x(x), needs))
    }

    /// 2×2 average pooling with stride 2 (even extents only).
    pub fn avg_pool2x(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let src = self.value(x);
        let [b, c, h, w] = src.dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("avg_pool2x on odd extent {h}x{w}")));
        }
        let (h2, w2) = (h / 2, w / 2);
        let quarter = T::lit(0.25);
        let mut out = vec![T::zero(); b * c * h2 * w2];
        for (plane, dst) in src.data().chunks_exact(h * w).zip(out.chunks_exact_mut(h2 * w2)) {
            for y in 0..h2 {
                for xx in 0..w2 {
                    let s = plane[2 * y * w + 2 * xx]
                        + plane[2 * y * w + 2 * xx + 1]
                        + plane[(2 * y + 1) * w + 2 * xx]
                        + plane[(2 * y + 1) * w + 2 * xx + 1];
                    dst[y * w2 + xx] = s * quarter;
                }
            }
        }
        let out = Tensor::new(&[b, c, h2, w2], out)?;
        let needs = self.needs_grad(x);
        Ok(self.push(out, Op::AvgPool2x(x), needs))
    }

    /// Picks `x[b, labels[b,h,w], h, w]`, producing `[B,1,H,W]`.
    pub fn gather_channels(&mut self, x: Var, labels: &[usize]) -> Result<Var> {
        self.check(x)?;
        let src = self.value(x);
        let [b, c, h, w] = src.dims4()?;
        let hw = h * w;
        if labels.len() != b * hw {
            return Err(Error::Shape(format!(
                "{} labels for a {b}x{h}x{w} score map",
                labels.len()
            )));
        }
        if let Some(pos) = labels.iter().position(|&l| l >= c) {
            return Err(Error::Data(format!(
                "label {} out of range [0, {c}) at pixel index {pos}",
                labels[pos]
            )));
        }
        let data = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| src.data()[(i / hw) * c * hw + l * hw + i % hw])
            .collect();
        let out = Tensor::new(&[b, 1, h, w], data)?;
        let needs = self.needs_grad(x);
        Ok(self.push(out, Op::GatherChannels(x, labels.to_vec()), needs))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s: T = self.value(x).data().iter().copied().sum();
        let needs = self.needs_grad(x);
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), needs))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::Shape("mean of empty tensor".into()));
        }
        let s: T = v.data().iter().copied().sum::<T>() / T::from_usize(v.len()).unwrap();
        let needs = self.needs_grad(x);
        Ok(self.push(Tensor::scalar(s), Op::Mean(x), needs))
    }

    /// Reverse pass from a scalar `loss`. Fills the gradient slot of every
    /// leaf that requires grad and is reachable from `loss`; unreachable
    /// grad-requiring leaves receive zeros.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward from non-scalar of shape {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.needs_grad(loss) {
            return Err(Error::Usage(
                "backward from a value that depends on no grad-requiring leaf".into(),
            ));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.set_grad(g)?;
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        for node in self.nodes.iter_mut() {
            if matches!(node.op, Op::Leaf) && node.needs_grad && node.value.grad().is_none() {
                let n = node.value.len();
                node.value.set_grad(vec![T::zero(); n])?;
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let mut acc = |v: Var, contrib: Vec<T>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match grads[v.0].as_mut() {
                Some(existing) => existing.iter_mut().zip(contrib).for_each(|(e, c)| *e += c),
                None => grads[v.0] = Some(contrib),
            }
        };
        let input_of = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            } => {
                let need = (
                    self.nodes[input.0].needs_grad,
                    self.nodes[kernel.0].needs_grad,
                    self.nodes[bias.0].needs_grad,
                );
                let cg = conv::backward(geom, g, cols, input_of(*kernel), need);
                if let Some(d) = cg.input {
                    acc(*input, d);
                }
                if let Some(d) = cg.kernel {
                    acc(*kernel, d);
                }
                if let Some(d) = cg.bias {
                    acc(*bias, d);
                }
            }
            Op::Relu(x) => {
                let xs = input_of(*x);
                let d = g
                    .iter()
                    .zip(xs)
                    .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                    .collect();
                acc(*x, d);
            }
            Op::LeakyRelu(x, slope) => {
                let xs = input_of(*x);
                let d = g
                    .iter()
                    .zip(xs)
                    .map(|(&gi, &xi)| if xi > T::zero() { gi } else { gi * *slope })
                    .collect();
                acc(*x, d);
            }
            Op::Sigmoid(x) => {
                let d = g
                    .iter()
                    .zip(out)
                    .map(|(&gi, &s)| gi * s * (T::one() - s))
                    .collect();
                acc(*x, d);
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|&v| -v).collect());
            }
            Op::Scale(x, c) => acc(*x, g.iter().map(|&v| v * *c).collect()),
            Op::AddScalar(x) => acc(*x, g.to_vec()),
            Op::Log(x) => {
                let xs = input_of(*x);
                acc(*x, g.iter().zip(xs).map(|(&gi, &xi)| gi / xi).collect());
            }
            Op::Abs(x) => {
                let xs = input_of(*x);
                let d = g
                    .iter()
                    .zip(xs)
                    .map(|(&gi, &xi)| {
                        if xi > T::zero() {
                            gi
                        } else if xi < T::zero() {
                            -gi
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                acc(*x, d);
            }
            Op::Clamp(x, lo, hi) => {
                let xs = input_of(*x);
                let d = g
                    .iter()
                    .zip(xs)
                    .map(|(&gi, &xi)| if xi < *lo || xi > *hi { T::zero() } else { gi })
                    .collect();
                acc(*x, d);
            }
            Op::SoftmaxChannels(x) => {
                let [b, c, h, w] = node.value.dims4().expect("rank 4");
                let hw = h * w;
                let mut d = vec![T::zero(); out.len()];
                for bi in 0..b {
                    let base = bi * c * hw;
                    for p in 0..hw {
                        let mut dot = T::zero();
                        for ch in 0..c {
                            let k = base + ch * hw + p;
                            dot += g[k] * out[k];
                        }
                        for ch in 0..c {
                            let k = base + ch * hw + p;
                            d[k] = out[k] * (g[k] - dot);
                        }
                    }
                }
                acc(*x, d);
            }
            Op::UpsampleNearest2x(x) => {
                let [b, c, h, w] = self.nodes[x.0].value.dims4().expect("rank 4");
                let w2 = 2 * w;
                let mut d = vec![T::zero(); b * c * h * w];
                for (plane, gp) in d.chunks_exact_mut(h * w).zip(g.chunks_exact(4 * h * w)) {
                    for y in 0..2 * h {
                        for xx in 0..w2 {
                            plane[(y / 2) * w + xx / 2] += gp[y * w2 + xx];
                        }
                    }
                }
                acc(*x, d);
            }
            Op::AvgPool2x(x) => {
                let [b, c, h, w] = self.nodes[x.0].value.dims4().expect("rank 4");
                let (h2, w2) = (h / 2, w / 2);
                let quarter = T::lit(0.25);
                let mut d = vec![T::zero(); b * c * h * w];
                for (plane, gp) in d.chunks_exact_mut(h * w).zip(g.chunks_exact(h2 * w2)) {
                    for y in 0..h {
                        for xx in 0..w {
                            plane[y * w + xx] = gp[(y / 2) * w2 + xx / 2] * quarter;
                        }
                    }
                }
                acc(*x, d);
            }
            Op::GatherChannels(x, labels) => {
                let [_, c, h, w] = self.nodes[x.0].value.dims4().expect("rank 4");
                let hw = h * w;
                let mut d = vec![T::zero(); self.nodes[x.0].value.len()];
                for (i, &l) in labels.iter().enumerate() {
                    d[(i / hw) * c * hw + l * hw + i % hw] = g[i];
                }
                acc(*x, d);
            }
            Op::Sum(x) => {
                let n = self.nodes[x.0].value.len();
                acc(*x, vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len();
                let v = g[0] / T::from_usize(n).unwrap();
                acc(*x, vec![v; n]);
            }
        }
    }
}

/// Overflow-free logistic function.
#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
