use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Index of a tensor inside [`NetParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution kernel (full, depthwise or pointwise); subject to weight decay.
    ConvWeight,
    Bias,
    BnScale,
    BnShift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }

    pub fn decays(self) -> bool {
        self == ParamKind::ConvWeight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
}

/// Named parameter set of a network, including batch-norm running statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetParams<T> {
    entries: Vec<Param<T>>,
}

impl<T: Scalar> NetParams<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.find(&name).is_some() {
            return invalid(format!("duplicate parameter name '{name}'"));
        }
        self.entries.push(Param { name, kind, value });
        Ok(ParamId(self.entries.len() - 1))
    }

    /// Conv kernel drawn from `N(0, gain^2 * 2 / fan_in)`.
    pub fn push_he<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        gain: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        let std = gain * (2.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::of(z * std)
            })
            .collect();
        self.push(name, ParamKind::ConvWeight, Tensor::from_vec(shape, data)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.entries.iter().enumerate().map(|(k, p)| (ParamId(k), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|p| p.kind.trainable()).map(|p| p.value.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|p| p.value.is_finite())
    }

    /// Moves running statistics toward the batch statistics:
    /// `running <- momentum * running + (1 - momentum) * batch`.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<T>], momentum: f64) {
        let m = T::of(momentum);
        let k = T::one() - m;
        for u in updates {
            for (id, batch) in [(u.mean, &u.batch_mean), (u.var, &u.batch_var)] {
                for (r, &b) in self.entries[id.0].value.data_mut().iter_mut().zip(batch) {
                    *r = m * *r + k * b;
                }
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> NetParams<U> {
        NetParams {
            entries: self
                .entries
                .iter()
                .map(|p| Param { name: p.name.clone(), kind: p.kind, value: p.value.cast() })
                .collect(),
        }
    }

    /// Replaces the tensor values of `self` by those of `other`, matching by
    /// name and shape.
    pub fn load_values(&mut self, other: &NetParams<T>) -> Result<()> {
        if other.len() != self.len() {
            return invalid(format!("parameter count {} vs {}", other.len(), self.len()));
        }
        for p in &mut self.entries {
            let id = other
                .find(&p.name)
                .ok_or_else(|| Error::InvalidArgument(format!("missing parameter '{}'", p.name)))?;
            let src = &other.entries[id.0].value;
            if src.shape() != p.value.shape() {
                return invalid(format!("parameter '{}' has shape {:?}, expected {:?}", p.name, src.shape(), p.value.shape()));
            }
            p.value = src.clone();
        }
        Ok(())
    }
}

/// Batch statistics recorded by a training-mode batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnUpdate<T> {
    pub mean: ParamId,
    pub var: ParamId,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

/// Gradients aligned with a [`NetParams`]; `None` for tensors that received none.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn new(n: usize) -> Self {
        Self { grads: vec![None; n] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub(crate) fn add(&mut self, id: ParamId, shape: &[usize], g: &[T]) {
        let slot = self.grads[id.0].get_or_insert_with(|| Tensor::zeros(shape));
        for (a, &b) in slot.data_mut().iter_mut().zip(g) {
            *a += b;
        }
    }

    /// Sums another shard's gradients into this one.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (k, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(k), g.shape(), g.data());
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.is_finite())
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().flatten().flat_map(|g| g.data()).map(|v| v.f64().powi(2)).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn he_variance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut p = NetParams::<f64>::new();
        let id = p.push_he("w", &[3, 3, 64, 64], 9 * 64, 1.0, &mut rng).unwrap();
        let v = p.value(id).data();
        let var = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        assert!((var / (2.0 / 576.0) - 1.0).abs() < 0.03, "{var}");
        assert!(p.push("w", ParamKind::Bias, Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn running_stat_momentum() {
        let mut p = NetParams::<f64>::new();
        let mean = p.push("m", ParamKind::RunningMean, Tensor::zeros(&[2])).unwrap();
        let var = p.push("v", ParamKind::RunningVar, Tensor::full(&[2], 1.0)).unwrap();
        p.apply_bn_updates(
            &[BnUpdate { mean, var, batch_mean: vec![1.0, 2.0], batch_var: vec![3.0, 1.0] }],
            0.99,
        );
        assert!((p.value(mean).data()[1] - 0.02).abs() < 1e-15);
        assert!((p.value(var).data()[0] - 1.02).abs() < 1e-15);
        assert_eq!(p.trainable_count(), 0);
    }
}
