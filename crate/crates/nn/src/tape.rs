//! Forward recording and reverse-mode differentiation.

use crate::error::{invalid, Error, Result};
use crate::kernels::{self, Grid, Taps};
use crate::layer::LayerKind;
use crate::params::{BnUpdate, Gradients, NetParams, ParamId};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;
/// Probabilities inside the cross-entropy are kept in `[CLAMP, 1 - CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: ParamId, b: Option<ParamId>, taps: Taps },
    Depthwise { x: Var, w: ParamId, taps: Taps, dm: usize },
    BatchNorm { x: Var, gamma: ParamId, beta: ParamId, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    Relu { x: Var },
    Add { a: Var, b: Var },
    Concat { parts: Vec<Var> },
    MaskedBce { logits: Var, grad: Vec<T> },
    SquaredError { x: Var, target: Tensor<T> },
    Dot { x: Var, weights: Tensor<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records a forward pass over borrowed parameters. [`Tape::backward`]
/// returns parameter gradients; batch-norm statistics gathered in training
/// mode are exposed through [`Tape::bn_updates`] and applied by the caller.
pub struct Tape<'p, T: Scalar> {
    params: &'p NetParams<T>,
    mode: Mode,
    nodes: Vec<Node<T>>,
    bn_updates: Vec<BnUpdate<T>>,
    fault: Option<LayerKind>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p NetParams<T>, mode: Mode) -> Self {
        Self { params, mode, nodes: Vec::new(), bn_updates: Vec::new(), fault: None }
    }

    /// Test fixture: perturbs the backward pass of one layer kind so that
    /// gradient checks can be shown to fail.
    pub fn inject_fault(&mut self, kind: LayerKind) {
        self.fault = Some(kind);
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn bn_updates(&self) -> &[BnUpdate<T>] {
        &self.bn_updates
    }

    pub fn into_bn_updates(self) -> Vec<BnUpdate<T>> {
        self.bn_updates
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn grid(&self, v: Var) -> Result<(Grid, usize)> {
        let (n, s, f, c) = self.value(v).dims4()?;
        Ok((Grid { n, s, f }, c))
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// "Same" dilated convolution with kernel `(ks, kf, cin, cout)` and optional bias.
    pub fn conv2d(&mut self, x: Var, w: ParamId, b: Option<ParamId>, dilation: (usize, usize)) -> Result<Var> {
        let (g, cin) = self.grid(x)?;
        let wt = self.params.value(w);
        let [ks, kf, wc, cout] = wt.shape()[..] else {
            return invalid(format!("conv kernel shape {:?} is not rank 4", wt.shape()));
        };
        if wc != cin {
            return invalid(format!("conv expects {wc} input channels, got {cin}"));
        }
        if dilation.0 == 0 || dilation.1 == 0 {
            return invalid("dilation must be positive");
        }
        let bias = match b {
            Some(b) if self.params.value(b).len() != cout => {
                return invalid(format!("bias length {} vs {cout} channels", self.params.value(b).len()))
            }
            Some(b) => Some(self.params.value(b).data()),
            None => None,
        };
        let taps = Taps { ks, kf, ds: dilation.0, df: dilation.1 };
        let y = kernels::conv2d_forward(self.value(x).data(), g, cin, wt.data(), taps, cout, bias);
        let value = Tensor::from_vec(&[g.n, g.s, g.f, cout], y)?;
        Ok(self.push(value, Op::Conv2d { x, w, b, taps }))
    }

    /// Depthwise convolution with kernel `(ks, kf, cin, dm)`.
    pub fn depthwise(&mut self, x: Var, w: ParamId, dilation: (usize, usize)) -> Result<Var> {
        let (g, cin) = self.grid(x)?;
        let wt = self.params.value(w);
        let [ks, kf, wc, dm] = wt.shape()[..] else {
            return invalid(format!("depthwise kernel shape {:?} is not rank 4", wt.shape()));
        };
        if wc != cin {
            return invalid(format!("depthwise expects {wc} channels, got {cin}"));
        }
        if dilation.0 == 0 || dilation.1 == 0 || dm == 0 {
            return invalid("dilation and depth multiplier must be positive");
        }
        let taps = Taps { ks, kf, ds: dilation.0, df: dilation.1 };
        let y = kernels::depthwise_forward(self.value(x).data(), g, cin, wt.data(), taps, dm);
        let value = Tensor::from_vec(&[g.n, g.s, g.f, cin * dm], y)?;
        Ok(self.push(value, Op::Depthwise { x, w, taps, dm }))
    }

    /// Depthwise followed by a bias-free 1x1 convolution.
    pub fn separable(&mut self, x: Var, depthwise: ParamId, pointwise: ParamId, dilation: (usize, usize)) -> Result<Var> {
        let d = self.depthwise(x, depthwise, dilation)?;
        self.conv2d(d, pointwise, None, (1, 1))
    }

    /// Per-channel batch normalization over batch and both spatial axes.
    pub fn batchnorm(&mut self, x: Var, gamma: ParamId, beta: ParamId, mean: ParamId, var: ParamId) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.channels();
        if xv.is_empty() {
            return invalid("batch norm over an empty batch");
        }
        for id in [gamma, beta, mean, var] {
            if self.params.value(id).len() != c {
                return invalid(format!("batch norm parameter '{}' does not have {c} entries", self.params.get(id).name));
            }
        }
        let train = self.mode == Mode::Train;
        let (mu, sigma2) = if train {
            kernels::channel_stats(xv.data(), c)
        } else {
            (self.params.value(mean).data().to_vec(), self.params.value(var).data().to_vec())
        };
        let eps = T::of(BN_EPSILON);
        let inv_std: Vec<T> = sigma2.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.params.value(gamma).data();
        let b = self.params.value(beta).data();
        let mut xhat = xv.data().to_vec();
        let mut y = vec![T::zero(); xhat.len()];
        for (xr, yr) in xhat.chunks_exact_mut(c).zip(y.chunks_exact_mut(c)) {
            for k in 0..c {
                xr[k] = (xr[k] - mu[k]) * inv_std[k];
                yr[k] = g[k] * xr[k] + b[k];
            }
        }
        let value = Tensor::from_vec(xv.shape(), y)?;
        if train {
            self.bn_updates.push(BnUpdate { mean, var, batch_mean: mu, batch_var: sigma2 });
        }
        Ok(self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return invalid(format!("add of shapes {:?} and {:?}", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::from_vec(va.shape(), data)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return invalid("concat of nothing");
        };
        let (g, _) = self.grid(first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (gp, c) = self.grid(p)?;
            if gp != g {
                return invalid("concat of tensors with different spatial shapes");
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(g.rows() * total);
        for r in 0..g.rows() {
            for (&p, &c) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * c..(r + 1) * c]);
            }
        }
        let value = Tensor::from_vec(&[g.n, g.s, g.f, total], out)?;
        Ok(self.push(value, Op::Concat { parts: parts.to_vec() }))
    }

    /// Mean binary cross-entropy over the entries where `mask` is nonzero.
    /// Logits follow `L = log(P(b=0) / P(b=1))`, so the bit-one probability is
    /// `sigmoid(-L)`.
    pub fn masked_bce(&mut self, logits: Var, targets: &Tensor<T>, mask: &Tensor<T>) -> Result<Var> {
        let l = self.value(logits);
        if l.shape() != targets.shape() || l.shape() != mask.shape() {
            return invalid(format!(
                "loss shapes: logits {:?}, targets {:?}, mask {:?}",
                l.shape(),
                targets.shape(),
                mask.shape()
            ));
        }
        let count: f64 = mask.data().iter().map(|m| m.f64()).sum();
        if count <= 0.0 {
            return invalid("loss over an empty set of bits");
        }
        let (lo, hi) = (PROB_CLAMP, 1.0 - PROB_CLAMP);
        let mut total = 0.0f64;
        let mut grad = vec![T::zero(); l.len()];
        for (k, ((&lv, &t), &m)) in l.data().iter().zip(targets.data()).zip(mask.data()).enumerate() {
            if m == T::zero() {
                continue;
            }
            let raw = 1.0 / (1.0 + lv.f64().exp());
            let p = raw.clamp(lo, hi);
            let t = t.f64();
            total -= m.f64() * (t * p.ln() + (1.0 - t) * (1.0 - p).ln());
            if raw > lo && raw < hi {
                grad[k] = T::of(m.f64() * (t - p) / count);
            }
        }
        let value = Tensor::scalar(T::of(total / count));
        Ok(self.push(value, Op::MaskedBce { logits, grad }))
    }

    /// `sum (x - target)^2`.
    pub fn squared_error(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != target.shape() {
            return invalid("squared error shape mismatch");
        }
        let s = xv.data().iter().zip(target.data()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        Ok(self.push(Tensor::scalar(s), Op::SquaredError { x, target: target.clone() }))
    }

    /// `sum x * weights`, a linear read-out used by gradient checks.
    pub fn dot(&mut self, x: Var, weights: &Tensor<T>) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != weights.shape() {
            return invalid("dot shape mismatch");
        }
        let s = xv.data().iter().zip(weights.data()).map(|(&a, &b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot { x, weights: weights.clone() }))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.backward_full(loss).map(|(g, _)| g)
    }

    /// Reverse pass that also returns the gradient reaching each leaf input.
    pub fn backward_full(&self, loss: Var) -> Result<(Gradients<T>, Vec<Option<Tensor<T>>>)> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::InvalidState("backward on a value that was never recorded".into()));
        }
        if self.value(loss).len() != 1 {
            return invalid("backward needs a scalar loss");
        }
        let mut grads = Gradients::new(self.params.len());
        let mut node_grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        node_grads[loss.0] = Some(vec![T::one()]);
        let mut leaves = Vec::new();
        for k in (0..=loss.0).rev() {
            let Some(dy) = node_grads[k].take() else { continue };
            let node = &self.nodes[k];
            match &node.op {
                Op::Leaf => leaves.push((k, dy)),
                Op::Conv2d { x, w, b, taps } => {
                    let (g, cin) = self.grid(*x)?;
                    let wt = self.params.value(*w);
                    let cout = wt.shape()[3];
                    let (dx, mut dw, db) =
                        kernels::conv2d_backward(self.value(*x).data(), g, cin, wt.data(), *taps, cout, &dy, true);
                    if self.fault == Some(LayerKind::Conv2d) {
                        dw[0] = dw[0] * T::of(1.01) + T::of(1e-3);
                    }
                    grads.add(*w, wt.shape(), &dw);
                    if let Some(b) = b {
                        grads.add(*b, &[cout], &db);
                    }
                    if let Some(dx) = dx {
                        accumulate(&mut node_grads, *x, dx);
                    }
                }
                Op::Depthwise { x, w, taps, dm } => {
                    let (g, cin) = self.grid(*x)?;
                    let wt = self.params.value(*w);
                    let (dx, mut dw) =
                        kernels::depthwise_backward(self.value(*x).data(), g, cin, wt.data(), *taps, *dm, &dy, true);
                    if self.fault == Some(LayerKind::DepthwiseSeparable) {
                        dw[0] = dw[0] * T::of(1.01) + T::of(1e-3);
                    }
                    grads.add(*w, wt.shape(), &dw);
                    if let Some(dx) = dx {
                        accumulate(&mut node_grads, *x, dx);
                    }
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                    let c = inv_std.len();
                    let rows = xhat.len() / c;
                    let g = self.params.value(*gamma).data();
                    let mut dgamma = vec![T::zero(); c];
                    let mut dbeta = vec![T::zero(); c];
                    for (d, xh) in dy.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for k in 0..c {
                            dgamma[k] += d[k] * xh[k];
                            dbeta[k] += d[k];
                        }
                    }
                    let mut dx = vec![T::zero(); dy.len()];
                    let m = T::of(rows as f64);
                    for ((o, d), xh) in dx.chunks_exact_mut(c).zip(dy.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
                        for k in 0..c {
                            o[k] = if *train {
                                g[k] * inv_std[k] / m * (m * d[k] - dbeta[k] - xh[k] * dgamma[k])
                            } else {
                                g[k] * inv_std[k] * d[k]
                            };
                        }
                    }
                    if self.fault == Some(LayerKind::BatchNorm) {
                        dx[0] = dx[0] * T::of(1.01) + T::of(1e-3);
                    }
                    grads.add(*gamma, &[c], &dgamma);
                    grads.add(*beta, &[c], &dbeta);
                    accumulate(&mut node_grads, *x, dx);
                }
                Op::Relu { x } => {
                    let dx = dy
                        .iter()
                        .zip(node.value.data())
                        .map(|(&d, &y)| if y > T::zero() { d } else { T::zero() })
                        .collect();
                    accumulate(&mut node_grads, *x, dx);
                }
                Op::Add { a, b } => {
                    let mut da = dy.clone();
                    if self.fault == Some(LayerKind::AddResidual) {
                        da[0] = da[0] * T::of(1.01) + T::of(1e-3);
                    }
                    accumulate(&mut node_grads, *a, da);
                    accumulate(&mut node_grads, *b, dy);
                }
                Op::Concat { parts } => {
                    let total = node.value.channels();
                    let rows = dy.len() / total;
                    let mut start = 0;
                    for &p in parts {
                        let c = self.value(p).channels();
                        let mut dp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            dp.extend_from_slice(&dy[r * total + start..r * total + start + c]);
                        }
                        accumulate(&mut node_grads, p, dp);
                        start += c;
                    }
                }
                Op::MaskedBce { logits, grad } => {
                    let mut dl: Vec<T> = grad.iter().map(|&g| g * dy[0]).collect();
                    if self.fault == Some(LayerKind::SigmoidOutput) {
                        dl[0] = dl[0] * T::of(1.01) + T::of(1e-3);
                    }
                    accumulate(&mut node_grads, *logits, dl);
                }
                Op::SquaredError { x, target } => {
                    let two = T::of(2.0) * dy[0];
                    let dx = self.value(*x).data().iter().zip(target.data()).map(|(&a, &b)| two * (a - b)).collect();
                    accumulate(&mut node_grads, *x, dx);
                }
                Op::Dot { x, weights } => {
                    let dx = weights.data().iter().map(|&w| w * dy[0]).collect();
                    accumulate(&mut node_grads, *x, dx);
                }
            }
        }
        let mut inputs: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (k, g) in leaves {
            inputs[k] = Some(Tensor::from_vec(self.nodes[k].value.shape(), g)?);
        }
        let inputs = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf))
            .map(|(k, _)| inputs[k].take())
            .collect();
        Ok((grads, inputs))
    }
}

fn accumulate<T: Scalar>(slots: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
    match &mut slots[v.0] {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
