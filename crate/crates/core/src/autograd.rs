//! Reverse-mode differentiation over a per-step tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so reverse index order is a valid backward schedule.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvSpec};
use crate::tensor::{Real, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

const NORM_EPS: f64 = 1e-5;

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, spec: ConvSpec },
    Linear { x: Var, w: Var, b: Option<Var> },
    InstanceNorm { x: Var, inv_std: Vec<T> },
    LeakyRelu { x: Var, slope: T },
    Sigmoid { x: Var },
    LogSigmoid { x: Var },
    Upsample2 { x: Var },
    AvgPool2 { x: Var },
    Concat { xs: Vec<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale { x: Var, c: T },
    Abs { x: Var },
    Square { x: Var },
    Mean { x: Var },
    Reshape { x: Var },
    /// Forward value is substituted, gradient passes straight to `x`.
    StraightThrough { x: Var },
    SoftmaxXent { x: Var, labels: Vec<usize>, probs: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is collected by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Number of trainable leaves on the tape.
    pub fn param_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.requires_grad && matches!(n.op, Op::Leaf)).count()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Copy of `v` cut off from the tape.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    /// Node that evaluates to `value` but routes its gradient into `x`.
    pub fn straight_through(&mut self, x: Var, value: Tensor<T>) -> Result<Var> {
        if value.shape() != self.value(x).shape() {
            return Err(Error::shape(format!("straight-through value {:?} vs {:?}", value.shape(), self.value(x).shape())));
        }
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::StraightThrough { x }, rg))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        if xv.shape().len() != 4 || wv.shape().len() != 4 {
            return Err(Error::shape(format!("conv2d expects rank-4 input and weight, got {:?} and {:?}", xv.shape(), wv.shape())));
        }
        let (n, c, h, wd) = xv.dims4();
        let (cout, cin, k, k2) = wv.dims4();
        if cin != c || k != k2 {
            return Err(Error::shape(format!("conv2d weight {:?} does not match input channels {c}", wv.shape())));
        }
        let (ho, wo) = match (spec.out_len(h, k), spec.out_len(wd, k)) {
            (Some(ho), Some(wo)) => (ho, wo),
            _ => return Err(Error::shape(format!("input {h}x{wd} too small for kernel {k} with {spec:?}"))),
        };
        let bias = b.map(|b| self.value(b).data());
        let out = kernels::conv2d_forward(xv.data(), (n, c, h, wd), wv.data(), cout, k, bias, spec, ho, wo);
        let value = Tensor::from_vec(&[n, cout, ho, wo], out)?;
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.needs(&deps);
        Ok(self.push(value, Op::Conv2d { x, w, b, spec }, rg))
    }

    /// `x` is flattened to `[N, F]`; `w` is `[Out, F]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let n = xv.shape()[0];
        let f = xv.len() / n.max(1);
        let (out_f, wf) = match wv.shape() {
            [o, i] => (*o, *i),
            s => return Err(Error::shape(format!("linear weight must be rank 2, got {s:?}"))),
        };
        if wf != f {
            return Err(Error::shape(format!("linear weight expects {wf} features, input has {f}")));
        }
        let mut out = vec![T::zero(); n * out_f];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(out_f) {
                row.copy_from_slice(bv);
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        use crate::tensor::MatRef;
        T::gemm(n, f, out_f, T::one(), MatRef::row_major(xv.data(), f), MatRef::transposed(wv.data(), f), beta, &mut out, out_f as isize, 1);
        let value = Tensor::from_vec(&[n, out_f], out)?;
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.needs(&deps);
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    /// Per-sample, per-channel normalization over the spatial plane.
    pub fn instance_norm(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4();
        let plane = h * w;
        let inv_plane = T::of(1.0 / plane as f64);
        let eps = T::of(NORM_EPS);
        let mut out = vec![T::zero(); xv.len()];
        let mut inv_std = Vec::with_capacity(n * c);
        for (p, (src, dst)) in xv.data().chunks(plane).zip(out.chunks_mut(plane)).enumerate() {
            let mean = src.iter().copied().sum::<T>() * inv_plane;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_plane;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = (s - mean) * is;
            }
            debug_assert_eq!(inv_std.len(), p + 1);
        }
        let value = Tensor::from_vec(&[n, c, h, w], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::InstanceNorm { x, inv_std }, rg))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let slope = T::of(slope);
        let value = self.value(x).map(|v| if v > T::zero() { v } else { v * slope });
        let rg = self.needs(&[x]);
        self.push(value, Op::LeakyRelu { x, slope }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.needs(&[x]);
        self.push(value, Op::Sigmoid { x }, rg)
    }

    /// Numerically stable `ln σ(x)`.
    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(log_sigmoid);
        let rg = self.needs(&[x]);
        self.push(value, Op::LogSigmoid { x }, rg)
    }

    pub fn upsample2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4();
        let out = kernels::upsample2(xv.data(), n * c, h, w);
        let value = Tensor::from_vec(&[n, c, 2 * h, 2 * w], out).expect("upsample shape");
        let rg = self.needs(&[x]);
        self.push(value, Op::Upsample2 { x }, rg)
    }

    pub fn avgpool2(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!("avgpool2 needs even spatial size, got {h}x{w}")));
        }
        let out = kernels::avgpool2(xv.data(), n * c, h, w);
        let value = Tensor::from_vec(&[n, c, h / 2, w / 2], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::AvgPool2 { x }, rg))
    }

    /// Concatenate rank-4 tensors along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.value(*xs.first().ok_or_else(|| Error::shape("concat of nothing"))?);
        let (n, _, h, w) = first.dims4();
        let mut total_c = 0;
        for &v in xs {
            let t = self.value(v);
            if t.shape().len() != 4 {
                return Err(Error::shape(format!("concat expects rank-4 inputs, got {:?}", t.shape())));
            }
            let (n2, c2, h2, w2) = t.dims4();
            if (n2, h2, w2) != (n, h, w) {
                return Err(Error::shape(format!("concat of {:?} with {:?}", first.shape(), t.shape())));
            }
            total_c += c2;
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total_c * plane);
        for s in 0..n {
            for &v in xs {
                out.extend_from_slice(self.value(v).sample(s));
            }
        }
        let value = Tensor::from_vec(&[n, total_c, h, w], out)?;
        let rg = self.needs(xs);
        Ok(self.push(value, Op::Concat { xs: xs.to_vec() }, rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(format!("{what}: {:?} vs {:?}", self.value(a).shape(), self.value(b).shape())));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let av = self.value(a);
        let data = av.data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.shape(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = self.zip_with(a, b, |x, y| x + y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let value = self.zip_with(a, b, |x, y| x - y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = self.zip_with(a, b, |x, y| x * y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        let value = self.value(x).map(|v| v * c);
        let rg = self.needs(&[x]);
        self.push(value, Op::Scale { x, c }, rg)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.abs());
        let rg = self.needs(&[x]);
        self.push(value, Op::Abs { x }, rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        let rg = self.needs(&[x]);
        self.push(value, Op::Square { x }, rg)
    }

    /// Mean over every element, as a rank-0 tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).mean());
        let rg = self.needs(&[x]);
        self.push(value, Op::Mean { x }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Mean cross-entropy of `[N, C]` logits against class labels.
    pub fn softmax_xent(&mut self, x: Var, labels: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = match xv.shape() {
            [n, c] => (*n, *c),
            s => return Err(Error::shape(format!("softmax_xent expects [N, C], got {s:?}"))),
        };
        if labels.len() != n {
            return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
        }
        let mut probs = Vec::with_capacity(n * c);
        let mut loss = T::zero();
        for (row, &label) in xv.data().chunks(c).zip(labels) {
            if label >= c {
                return Err(Error::LabelOutOfRange { label, classes: c });
            }
            let p = softmax(row);
            loss -= p[label].max(T::min_positive_value()).ln();
            probs.extend(p);
        }
        let value = Tensor::scalar(loss / T::of(n as f64));
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::SoftmaxXent { x, labels: labels.to_vec(), probs }, rg))
    }

    /// Sum of rank-0 terms (convenience for assembling objectives).
    pub fn sum_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let mut acc = *terms.first().ok_or_else(|| Error::shape("empty sum"))?;
        for &t in &terms[1..] {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Backpropagate from a rank-0 `loss`, replacing any previous gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!("backward needs a scalar, got {:?}", self.value(loss).shape())));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            self.backprop_node(i, &g)?;
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, g: &Tensor<T>) -> Result<()> {
        // Ops are moved out temporarily so their payloads can be borrowed
        // while gradients are accumulated into other nodes.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        let result = self.backprop_op(i, &op, g);
        self.nodes[i].op = op;
        result
    }

    fn backprop_op(&mut self, i: usize, op: &Op<T>, g: &Tensor<T>) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, spec } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let dims = xv.dims4();
                let (cout, _, k, _) = wv.dims4();
                let (_, _, ho, wo) = self.nodes[i].value.dims4();
                let want_x = self.requires_grad(*x);
                let want_w = self.requires_grad(*w);
                let want_b = b.is_some_and(|b| self.requires_grad(b));
                let mut dx = want_x.then(|| vec![T::zero(); xv.len()]);
                let mut dw = want_w.then(|| vec![T::zero(); wv.len()]);
                let mut db = want_b.then(|| vec![T::zero(); cout]);
                kernels::conv2d_backward(xv.data(), dims, wv.data(), cout, k, *spec, ho, wo, g.data(), dx.as_deref_mut(), dw.as_deref_mut(), db.as_deref_mut());
                let (xs, ws) = (xv.shape().to_vec(), wv.shape().to_vec());
                if let Some(dx) = dx {
                    self.accumulate(*x, Tensor::from_vec(&xs, dx)?);
                }
                if let Some(dw) = dw {
                    self.accumulate(*w, Tensor::from_vec(&ws, dw)?);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    self.accumulate(*b, Tensor::from_vec(&[cout], db)?);
                }
            }
            Op::Linear { x, w, b } => {
                use crate::tensor::MatRef;
                let xv = self.value(*x);
                let wv = self.value(*w);
                let n = xv.shape()[0];
                let f = xv.len() / n;
                let out_f = wv.shape()[0];
                let gd = g.data();
                if self.requires_grad(*x) {
                    let mut dx = vec![T::zero(); xv.len()];
                    T::gemm(n, out_f, f, T::one(), MatRef::row_major(gd, out_f), MatRef::row_major(wv.data(), f), T::zero(), &mut dx, f as isize, 1);
                    let xs = xv.shape().to_vec();
                    self.accumulate(*x, Tensor::from_vec(&xs, dx)?);
                }
                let xv = self.value(*x);
                if self.requires_grad(*w) {
                    let mut dw = vec![T::zero(); out_f * f];
                    T::gemm(out_f, n, f, T::one(), MatRef::transposed(gd, out_f), MatRef::row_major(xv.data(), f), T::zero(), &mut dw, f as isize, 1);
                    self.accumulate(*w, Tensor::from_vec(&[out_f, f], dw)?);
                }
                if let Some(b) = b {
                    let mut db = vec![T::zero(); out_f];
                    for row in gd.chunks(out_f) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(*b, Tensor::from_vec(&[out_f], db)?);
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                let y = &self.nodes[i].value;
                let (_, _, h, w) = y.dims4();
                let plane = h * w;
                let inv_plane = T::of(1.0 / plane as f64);
                let mut dx = vec![T::zero(); y.len()];
                for (p, ((dy, yy), out)) in g.data().chunks(plane).zip(y.data().chunks(plane)).zip(dx.chunks_mut(plane)).enumerate() {
                    let mean_dy = dy.iter().copied().sum::<T>() * inv_plane;
                    let mean_dyy = dy.iter().zip(yy).map(|(&a, &b)| a * b).sum::<T>() * inv_plane;
                    for ((o, &d), &yv) in out.iter_mut().zip(dy).zip(yy) {
                        *o = inv_std[p] * (d - mean_dy - yv * mean_dyy);
                    }
                }
                let shape = y.shape().to_vec();
                self.accumulate(*x, Tensor::from_vec(&shape, dx)?);
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let data = xv.data().iter().zip(g.data()).map(|(&v, &d)| if v > T::zero() { d } else { d * *slope }).collect();
                let t = Tensor::from_vec(xv.shape(), data)?;
                self.accumulate(*x, t);
            }
            Op::Sigmoid { x } => {
                let y = &self.nodes[i].value;
                let data = y.data().iter().zip(g.data()).map(|(&s, &d)| d * s * (T::one() - s)).collect();
                let t = Tensor::from_vec(y.shape(), data)?;
                self.accumulate(*x, t);
            }
            Op::LogSigmoid { x } => {
                let xv = self.value(*x);
                let data = xv.data().iter().zip(g.data()).map(|(&v, &d)| d * sigmoid(-v)).collect();
                let t = Tensor::from_vec(xv.shape(), data)?;
                self.accumulate(*x, t);
            }
            Op::Upsample2 { x } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let dx = kernels::upsample2_backward(g.data(), n * c, h, w);
                self.accumulate(*x, Tensor::from_vec(&[n, c, h, w], dx)?);
            }
            Op::AvgPool2 { x } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let dx = kernels::avgpool2_backward(g.data(), n * c, h, w);
                self.accumulate(*x, Tensor::from_vec(&[n, c, h, w], dx)?);
            }
            Op::Concat { xs } => {
                let (n, _, h, w) = g.dims4();
                let plane = h * w;
                let total_c = g.shape()[1];
                let mut offset = 0;
                for &v in xs {
                    let c = self.value(v).shape()[1];
                    if self.requires_grad(v) {
                        let mut dx = Vec::with_capacity(n * c * plane);
                        for s in 0..n {
                            let base = (s * total_c + offset) * plane;
                            dx.extend_from_slice(&g.data()[base..base + c * plane]);
                        }
                        self.accumulate(v, Tensor::from_vec(&[n, c, h, w], dx)?);
                    }
                    offset += c;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g.clone());
                self.accumulate(*b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, g.clone());
                self.accumulate(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let da = Tensor::from_vec(g.shape(), g.data().iter().zip(self.value(*b).data()).map(|(&d, &v)| d * v).collect())?;
                let db = Tensor::from_vec(g.shape(), g.data().iter().zip(self.value(*a).data()).map(|(&d, &v)| d * v).collect())?;
                self.accumulate(*a, da);
                self.accumulate(*b, db);
            }
            Op::Scale { x, c } => {
                let c = *c;
                self.accumulate(*x, g.map(|v| v * c));
            }
            Op::Abs { x } => {
                let xv = self.value(*x);
                let data = xv.data().iter().zip(g.data()).map(|(&v, &d)| if v > T::zero() { d } else if v < T::zero() { -d } else { T::zero() }).collect();
                let t = Tensor::from_vec(xv.shape(), data)?;
                self.accumulate(*x, t);
            }
            Op::Square { x } => {
                let xv = self.value(*x);
                let two = T::of(2.0);
                let data = xv.data().iter().zip(g.data()).map(|(&v, &d)| d * two * v).collect();
                let t = Tensor::from_vec(xv.shape(), data)?;
                self.accumulate(*x, t);
            }
            Op::Mean { x } => {
                let xv = self.value(*x);
                let each = g.item() / T::of(xv.len() as f64);
                let t = Tensor::full(xv.shape(), each);
                self.accumulate(*x, t);
            }
            Op::Reshape { x } | Op::StraightThrough { x } => {
                let shape = self.value(*x).shape().to_vec();
                let t = g.clone().reshape(&shape)?;
                self.accumulate(*x, t);
            }
            Op::SoftmaxXent { x, labels, probs } => {
                let c = probs.len() / labels.len();
                let scale = g.item() / T::of(labels.len() as f64);
                let mut d = probs.clone();
                for (row, &label) in d.chunks_mut(c).zip(labels) {
                    row[label] -= T::one();
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                }
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(*x, Tensor::from_vec(&shape, d)?);
            }
        }
        Ok(())
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn log_sigmoid<T: Real>(x: T) -> T {
    x.min(T::zero()) - (T::one() + (-x.abs()).exp()).ln()
}

pub fn softmax<T: Real>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}
