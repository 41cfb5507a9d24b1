//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters enter as
//! leaves copied out of a [`ParamStore`]; [`Graph::backward`] accumulates
//! their gradients back into the store.

use rand::Rng;

use crate::conv;
use crate::error::{shape_err, Result, TensorError};
use crate::params::{ParamId, ParamStore};
use crate::{Scalar, Tensor};

const NORM_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Param(ParamId),
    Conv2d { x: Var, w: Var, stride: usize, pad: usize },
    ConvTranspose { x: Var, w: Var, stride: usize, pad: usize },
    ChannelBias { x: Var, b: Var },
    LeakyRelu { x: Var, slope: T },
    Sigmoid { x: Var },
    InstanceNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Dropout { x: Var, mask: Vec<T> },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Concat { a: Var, b: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: T },
    Sum { x: Var },
    Mean { x: Var },
    BceWithLogits { x: Var, target: T },
    L1 { x: Var, target: Tensor<T> },
    SoftDice { p: Var, target: Tensor<T>, eps: T },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    // max(x, 0) + ln(1 + e^{-|x|})
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
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

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant leaf; no gradient flows into it.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Leaf that records gradients, without a backing parameter. Used to
    /// differentiate with respect to inputs.
    pub fn watched(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, true)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    /// Copy of `v`'s value as a constant (gradient stops here).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.input(value)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let out = conv::conv2d(self.value(x), self.value(w), stride, pad)?;
        let ng = self.needs(x) || self.needs(w);
        Ok(self.push(out, Op::Conv2d { x, w, stride, pad }, ng))
    }

    /// Transposed convolution with kernel `Cin×Cout×Kh×Kw`.
    pub fn conv2d_transpose(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let out = conv::conv2d_transpose(self.value(x), self.value(w), stride, pad)?;
        let ng = self.needs(x) || self.needs(w);
        Ok(self.push(out, Op::ConvTranspose { x, w, stride, pad }, ng))
    }

    /// Adds `b[c]` to every pixel of channel `c`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if self.value(b).len() != c {
            return shape_err(format!(
                "channel_bias: {} biases for {c} channels",
                self.value(b).len()
            ));
        }
        let hw = h * w;
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for (i, chunk) in out.data_mut().chunks_mut(hw).enumerate() {
            let bc = bias[i % c];
            chunk.iter_mut().for_each(|v| *v += bc);
        }
        debug_assert_eq!(out.len(), n * c * hw);
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(out, Op::ChannelBias { x, b }, ng))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        if !(slope >= T::zero() && slope < T::one()) {
            return Err(TensorError::Config(format!(
                "leaky_relu slope {slope} outside [0, 1)"
            )));
        }
        let out = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { v * slope });
        let ng = self.needs(x);
        Ok(self.push(out, Op::LeakyRelu { x, slope }, ng))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.leaky_relu(x, T::zero())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let ng = self.needs(x);
        self.push(out, Op::Sigmoid { x }, ng)
    }

    /// Per-sample, per-channel normalization followed by a channel affine.
    pub fn instance_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let hw = h * w;
        if hw < 2 {
            return shape_err("instance_norm requires H*W >= 2");
        }
        if self.value(gain).len() != c || self.value(bias).len() != c {
            return shape_err(format!("instance_norm: affine parameters must have {c} entries"));
        }
        let eps = T::lit(NORM_EPS);
        let inv_hw = T::one() / T::lit(hw as f64);
        let (gv, bv) = (self.value(gain).data(), self.value(bias).data());
        let mut out = vec![T::zero(); n * c * hw];
        let mut xhat = vec![T::zero(); n * c * hw];
        let mut inv_std = vec![T::zero(); n * c];
        for (i, plane) in self.value(x).data().chunks(hw).enumerate() {
            let mean = plane.iter().copied().sum::<T>() * inv_hw;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_hw;
            let is = T::one() / (var + eps).sqrt();
            inv_std[i] = is;
            let ch = i % c;
            for (j, &v) in plane.iter().enumerate() {
                let xh = (v - mean) * is;
                xhat[i * hw + j] = xh;
                out[i * hw + j] = gv[ch] * xh + bv[ch];
            }
        }
        let out = Tensor::new(vec![n, c, h, w], out)?;
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(out, Op::InstanceNorm { x, gain, bias, xhat, inv_std }, ng))
    }

    /// Inverted dropout: zero each element with probability `rate`, scale
    /// survivors by `1/(1-rate)`. The sampled mask is reused in backward.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let n = self.value(x).len();
        let mask: Vec<T> = if rate == 0.0 {
            vec![T::one(); n]
        } else {
            (0..n)
                .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
                .collect()
        };
        let mut out = self.value(x).clone();
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        let ng = self.needs(x);
        Ok(self.push(out, Op::Dropout { x, mask }, ng))
    }

    /// 2×2 max pooling with stride 2.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return shape_err(format!("max_pool2 needs even spatial dims, got {h}x{w}"));
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for p in 0..n * c {
            let base = p * h * w;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * y + dy) * w + 2 * xx + dx;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let out = Tensor::new(vec![n, c, oh, ow], out)?;
        let ng = self.needs(x);
        Ok(self.push(out, Op::MaxPool2 { x, argmax }, ng))
    }

    /// Concatenate two NCHW tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.value(a).dims4()?;
        let (nb, cb, hb, wb) = self.value(b).dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return shape_err(format!(
                "concat_channels: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        let hw = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * hw);
        for s in 0..n {
            out.extend_from_slice(&self.value(a).data()[s * ca * hw..(s + 1) * ca * hw]);
            out.extend_from_slice(&self.value(b).data()[s * cb * hw..(s + 1) * cb * hw]);
        }
        let out = Tensor::new(vec![n, ca + cb, h, w], out)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Concat { a, b }, ng))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        self.value(a).expect_same_shape(self.value(b), name)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.value(a).shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul { a, b }, ng))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let ng = self.needs(x);
        self.push(out, Op::Scale { x, factor }, ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let ng = self.needs(x);
        self.push(out, Op::Sum { x }, ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = T::lit(self.value(x).len() as f64);
        let out = Tensor::scalar(self.value(x).sum() / n);
        let ng = self.needs(x);
        self.push(out, Op::Mean { x }, ng)
    }

    /// Mean binary cross-entropy of logits against a constant label:
    /// `mean(softplus(x) - target * x)`.
    pub fn bce_with_logits(&mut self, x: Var, target: T) -> Var {
        let xs = self.value(x);
        let n = T::lit(xs.len() as f64);
        let total: T = xs.data().iter().map(|&v| softplus(v) - target * v).sum();
        let ng = self.needs(x);
        self.push(Tensor::scalar(total / n), Op::BceWithLogits { x, target }, ng)
    }

    /// Mean absolute error against a constant target.
    pub fn l1_loss(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        self.value(x).expect_same_shape(target, "l1_loss")?;
        let n = T::lit(target.len() as f64);
        let total: T = self
            .value(x)
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| (a - b).abs())
            .sum();
        let ng = self.needs(x);
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::L1 { x, target: target.clone() },
            ng,
        ))
    }

    /// Soft Dice loss `1 - (2Σpg + eps) / (Σp + Σg + eps)`, evaluated per
    /// sample (leading axis) and averaged over the batch.
    pub fn soft_dice(&mut self, p: Var, target: &Tensor<T>, eps: T) -> Result<Var> {
        self.value(p).expect_same_shape(target, "soft_dice")?;
        let batch = self.value(p).shape().first().copied().unwrap_or(1).max(1);
        let per = target.len() / batch;
        let mut total = T::zero();
        for s in 0..batch {
            let (ps, gs) = (
                &self.value(p).data()[s * per..(s + 1) * per],
                &target.data()[s * per..(s + 1) * per],
            );
            let inter: T = ps.iter().zip(gs).map(|(&a, &b)| a * b).sum();
            let denom = ps.iter().copied().sum::<T>() + gs.iter().copied().sum::<T>() + eps;
            total += T::one() - (T::lit(2.0) * inter + eps) / denom;
        }
        let ng = self.needs(p);
        Ok(self.push(
            Tensor::scalar(total / T::lit(batch as f64)),
            Op::SoftDice { p, target: target.clone(), eps },
            ng,
        ))
    }

    /// Reverse pass from a scalar `loss`. Gradients of parameters owned by
    /// `store` are added to it (they accumulate across calls until
    /// [`ParamStore::zero_grad`]); all node gradients are also returned.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(TensorError::Usage(format!(
                "backward() needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.all_finite() {
            return Err(TensorError::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            self.propagate(node, &gout, &mut grads, store)?;
            grads[i] = Some(gout);
        }
        if let Some(bad) = grads.iter().flatten().find(|g| !g.all_finite()) {
            return Err(TensorError::NonFinite(format!(
                "gradient of shape {:?}",
                bad.shape()
            )));
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
        if !self.needs(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn elementwise(&self, x: Var, gout: &Tensor<T>, f: impl Fn(usize, T) -> T) -> Tensor<T> {
        Tensor::from_fn(self.value(x).shape(), |i| f(i, gout.data()[i]))
    }

    fn propagate(
        &self,
        node: &Node<T>,
        gout: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
        store: &mut ParamStore<T>,
    ) -> Result<()> {
        match &node.op {
            Op::Input => {}
            // Parameters of other stores act as constants here.
            Op::Param(id) if store.owns(*id) => store.get_mut(*id).grad.add_assign(gout)?,
            Op::Param(_) => {}
            &Op::Conv2d { x, w, stride, pad } => {
                let (dx, dw) = conv::conv2d_backward(
                    self.value(x),
                    self.value(w),
                    gout,
                    stride,
                    pad,
                    self.needs(x),
                    self.needs(w),
                )?;
                if let Some(dx) = dx {
                    self.accumulate(grads, x, dx)?;
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, w, dw)?;
                }
            }
            &Op::ConvTranspose { x, w, stride, pad } => {
                let (dx, dw) = conv::conv2d_transpose_backward(
                    self.value(x),
                    self.value(w),
                    gout,
                    stride,
                    pad,
                    self.needs(x),
                    self.needs(w),
                )?;
                if let Some(dx) = dx {
                    self.accumulate(grads, x, dx)?;
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, w, dw)?;
                }
            }
            &Op::ChannelBias { x, b } => {
                self.accumulate(grads, x, gout.clone())?;
                if self.needs(b) {
                    let (_, c, h, w) = gout.dims4()?;
                    let mut db = Tensor::zeros(self.value(b).shape());
                    for (i, chunk) in gout.data().chunks(h * w).enumerate() {
                        db.data_mut()[i % c] += chunk.iter().copied().sum::<T>();
                    }
                    self.accumulate(grads, b, db)?;
                }
            }
            &Op::LeakyRelu { x, slope } => {
                let xs = self.value(x).data();
                let g = self.elementwise(x, gout, |i, go| if xs[i] > T::zero() { go } else { go * slope });
                self.accumulate(grads, x, g)?;
            }
            &Op::Sigmoid { x } => {
                let ys = node.value.data();
                let g = self.elementwise(x, gout, |i, go| go * ys[i] * (T::one() - ys[i]));
                self.accumulate(grads, x, g)?;
            }
            Op::InstanceNorm { x, gain, bias, xhat, inv_std } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let (_, c, h, w) = gout.dims4()?;
                let hw = h * w;
                let nf = T::lit(hw as f64);
                let gv = self.value(gain).data();
                let mut dx = vec![T::zero(); gout.len()];
                let mut dgain = vec![T::zero(); c];
                let mut dbias = vec![T::zero(); c];
                for (p, go) in gout.data().chunks(hw).enumerate() {
                    let ch = p % c;
                    let xh = &xhat[p * hw..(p + 1) * hw];
                    let mut sum_d = T::zero();
                    let mut sum_dx = T::zero();
                    for j in 0..hw {
                        dgain[ch] += go[j] * xh[j];
                        dbias[ch] += go[j];
                        let d = go[j] * gv[ch];
                        sum_d += d;
                        sum_dx += d * xh[j];
                    }
                    let k = inv_std[p] / nf;
                    for j in 0..hw {
                        let d = go[j] * gv[ch];
                        dx[p * hw + j] = k * (nf * d - sum_d - xh[j] * sum_dx);
                    }
                }
                self.accumulate(grads, x, Tensor::new(gout.shape().to_vec(), dx)?)?;
                self.accumulate(grads, gain, Tensor::new(self.value(gain).shape().to_vec(), dgain)?)?;
                self.accumulate(grads, bias, Tensor::new(self.value(bias).shape().to_vec(), dbias)?)?;
            }
            Op::Dropout { x, mask } => {
                let g = self.elementwise(*x, gout, |i, go| go * mask[i]);
                self.accumulate(grads, *x, g)?;
            }
            Op::MaxPool2 { x, argmax } => {
                let mut g = Tensor::zeros(self.value(*x).shape());
                for (&src, &go) in argmax.iter().zip(gout.data()) {
                    g.data_mut()[src] += go;
                }
                self.accumulate(grads, *x, g)?;
            }
            &Op::Concat { a, b } => {
                let (n, ca, h, w) = self.value(a).dims4()?;
                let cb = self.value(b).dims4()?.1;
                let hw = h * w;
                let mut ga = Vec::with_capacity(n * ca * hw);
                let mut gb = Vec::with_capacity(n * cb * hw);
                for s in 0..n {
                    let base = s * (ca + cb) * hw;
                    ga.extend_from_slice(&gout.data()[base..base + ca * hw]);
                    gb.extend_from_slice(&gout.data()[base + ca * hw..base + (ca + cb) * hw]);
                }
                self.accumulate(grads, a, Tensor::new(self.value(a).shape().to_vec(), ga)?)?;
                self.accumulate(grads, b, Tensor::new(self.value(b).shape().to_vec(), gb)?)?;
            }
            &Op::Add { a, b } => {
                self.accumulate(grads, a, gout.clone())?;
                self.accumulate(grads, b, gout.clone())?;
            }
            &Op::Mul { a, b } => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                if self.needs(a) {
                    self.accumulate(grads, a, self.elementwise(a, gout, |i, go| go * bv[i]))?;
                }
                if self.needs(b) {
                    self.accumulate(grads, b, self.elementwise(b, gout, |i, go| go * av[i]))?;
                }
            }
            &Op::Scale { x, factor } => {
                self.accumulate(grads, x, gout.map(|g| g * factor))?;
            }
            &Op::Sum { x } => {
                let go = gout.item()?;
                self.accumulate(grads, x, Tensor::full(self.value(x).shape(), go))?;
            }
            &Op::Mean { x } => {
                let go = gout.item()? / T::lit(self.value(x).len() as f64);
                self.accumulate(grads, x, Tensor::full(self.value(x).shape(), go))?;
            }
            &Op::BceWithLogits { x, target } => {
                let xs = self.value(x);
                let k = gout.item()? / T::lit(xs.len() as f64);
                let g = xs.map(|v| (sigmoid(v) - target) * k);
                self.accumulate(grads, x, g)?;
            }
            Op::L1 { x, target } => {
                let xs = self.value(*x);
                let k = gout.item()? / T::lit(xs.len() as f64);
                let t = target.data();
                let g = Tensor::from_fn(xs.shape(), |i| {
                    let d = xs.data()[i] - t[i];
                    if d > T::zero() {
                        k
                    } else if d < T::zero() {
                        -k
                    } else {
                        T::zero()
                    }
                });
                self.accumulate(grads, *x, g)?;
            }
            Op::SoftDice { p, target, eps } => {
                let (p, eps) = (*p, *eps);
                let ps = self.value(p);
                let batch = ps.shape().first().copied().unwrap_or(1).max(1);
                let per = ps.len() / batch;
                let k = gout.item()? / T::lit(batch as f64);
                let two = T::lit(2.0);
                let mut g = vec![T::zero(); ps.len()];
                for s in 0..batch {
                    let range = s * per..(s + 1) * per;
                    let (pv, gv) = (&ps.data()[range.clone()], &target.data()[range]);
                    let inter: T = pv.iter().zip(gv).map(|(&a, &b)| a * b).sum();
                    let denom = pv.iter().copied().sum::<T>() + gv.iter().copied().sum::<T>() + eps;
                    let num = two * inter + eps;
                    for j in 0..per {
                        // d/dp_j of -(num/denom)
                        g[s * per + j] = -k * (two * gv[j] * denom - num) / (denom * denom);
                    }
                }
                self.accumulate(grads, p, Tensor::new(ps.shape().to_vec(), g)?)?;
            }
        }
        Ok(())
    }
}
