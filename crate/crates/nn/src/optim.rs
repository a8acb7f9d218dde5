use crate::error::{invalid, Result};
use crate::params::{Gradients, NetParams};
use crate::scalar::Scalar;

/// Adam with decoupled weight decay. Decay applies to convolution kernels only.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new<T: Scalar>(params: &NetParams<T>, weight_decay: f64) -> Self {
        let zeros = || params.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect::<Vec<_>>();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: zeros(), v: zeros() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update at learning rate `lr`. Parameters without a gradient only
    /// receive weight decay (if they decay).
    pub fn step<T: Scalar>(&mut self, params: &mut NetParams<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return invalid("optimizer state does not match the parameter set");
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in params.ids().collect::<Vec<_>>() {
            let kind = params.get(id).kind;
            if !kind.trainable() {
                continue;
            }
            let decay = if kind.decays() { 1.0 - lr * self.weight_decay } else { 1.0 };
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let g = grads.get(id).map(|g| g.data());
            for (k, theta) in params.value_mut(id).data_mut().iter_mut().enumerate() {
                let mut x = theta.f64() * decay;
                if let Some(g) = g {
                    let gk = g[k].f64();
                    m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                    v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                    x -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
                }
                *theta = T::of(x);
            }
        }
        Ok(())
    }
}

/// Linear warmup to `base_lr`, constant until `decay_start_fraction` of the
/// run, then linear decay to zero at `total_iters`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_iters: usize,
    pub decay_start_fraction: f64,
    pub total_iters: usize,
}

impl LrSchedule {
    pub fn new(base_lr: f64, warmup_iters: usize, total_iters: usize) -> Result<Self> {
        if warmup_iters > total_iters {
            return invalid(format!("warmup {warmup_iters} exceeds total {total_iters}"));
        }
        Ok(Self { base_lr, warmup_iters, decay_start_fraction: 0.3, total_iters })
    }

    pub fn lr_at(&self, iteration: usize) -> Result<f64> {
        if iteration > self.total_iters {
            return invalid(format!("iteration {iteration} beyond {}", self.total_iters));
        }
        let it = iteration as f64;
        if iteration < self.warmup_iters {
            return Ok(self.base_lr * it / self.warmup_iters as f64);
        }
        let decay_start = (self.decay_start_fraction * self.total_iters as f64).max(self.warmup_iters as f64);
        let total = self.total_iters as f64;
        if it <= decay_start || total <= decay_start {
            return Ok(self.base_lr);
        }
        Ok(self.base_lr * (total - it) / (total - decay_start))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParamId, ParamKind};
    use crate::tensor::Tensor;

    fn one_param(kind: ParamKind, v: f64) -> NetParams<f64> {
        let mut p = NetParams::new();
        p.push("w", kind, Tensor::full(&[3], v)).unwrap();
        p
    }

    fn grads(p: &NetParams<f64>, g: f64) -> Gradients<f64> {
        let mut gr = Gradients::new(p.len());
        gr.add(ParamId(0), &[3], &[g, -g, 0.0]);
        gr
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let mut p = one_param(ParamKind::ConvWeight, 0.7);
        let before = p.clone();
        let mut opt = AdamW::new(&p, 0.0);
        let g = grads(&p, 0.0);
        opt.step(&mut p, &g, 1e-2).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let mut p = one_param(ParamKind::ConvWeight, 0.0);
        let mut opt = AdamW::new(&p, 0.0);
        let g = grads(&p, 0.3);
        opt.step(&mut p, &g, 1e-2).unwrap();
        let v = p.value(ParamId(0)).data();
        assert!((v[0] + 1e-2).abs() < 1e-9);
        assert!((v[1] - 1e-2).abs() < 1e-9);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn decoupled_decay_only_on_conv_weights() {
        let mut p = one_param(ParamKind::ConvWeight, 2.0);
        let mut opt = AdamW::new(&p, 1e-2);
        opt.step(&mut p, &Gradients::new(1), 0.5).unwrap();
        assert!((p.value(ParamId(0)).data()[0] - 2.0 * (1.0 - 0.5 * 1e-2)).abs() < 1e-15);
        for kind in [ParamKind::BnScale, ParamKind::BnShift, ParamKind::Bias] {
            let mut q = one_param(kind, 2.0);
            AdamW::new(&q, 1e-2).step(&mut q, &Gradients::new(1), 0.5).unwrap();
            assert_eq!(q.value(ParamId(0)).data()[0], 2.0);
        }
    }

    #[test]
    fn schedule_examples() {
        let s = LrSchedule::new(1e-2, 800, 10_000).unwrap();
        assert!((s.lr_at(400).unwrap() - 5e-3).abs() < 1e-15);
        assert_eq!(s.lr_at(3000).unwrap(), 1e-2);
        assert_eq!(s.lr_at(10_000).unwrap(), 0.0);
        assert_eq!(s.lr_at(0).unwrap(), 0.0);
        assert!((s.lr_at(6500).unwrap() - 5e-3).abs() < 1e-15);
        assert!(s.lr_at(10_001).is_err());
        assert!(LrSchedule::new(1e-2, 11, 10).is_err());
    }
}
