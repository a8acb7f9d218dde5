use crate::error::{invalid, Result};

/// Layer kinds of the receiver network family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    DepthwiseSeparable,
    BatchNorm,
    Relu,
    AddResidual,
    SigmoidOutput,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::DepthwiseSeparable => "depthwise_separable",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::AddResidual => "add_residual",
            LayerKind::SigmoidOutput => "sigmoid_output",
        }
    }
}

/// Geometry of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// `(f_S, f_F)`.
    pub filter: (usize, usize),
    /// `(d_S, d_F)`.
    pub dilation: (usize, usize),
    pub channels_in: usize,
    pub channels_out: usize,
    pub depth_multiplier: usize,
}

impl LayerSpec {
    pub fn conv2d(filter: (usize, usize), dilation: (usize, usize), channels_in: usize, channels_out: usize) -> Self {
        Self { kind: LayerKind::Conv2d, filter, dilation, channels_in, channels_out, depth_multiplier: 1 }
    }

    pub fn separable(
        filter: (usize, usize),
        dilation: (usize, usize),
        channels_in: usize,
        channels_out: usize,
        depth_multiplier: usize,
    ) -> Self {
        Self { kind: LayerKind::DepthwiseSeparable, filter, dilation, channels_in, channels_out, depth_multiplier }
    }

    pub fn validate(&self) -> Result<()> {
        let (fs, ff) = self.filter;
        let (ds, df) = self.dilation;
        if fs == 0 || ff == 0 || ds == 0 || df == 0 {
            return invalid(format!("filter {:?} and dilation {:?} must be positive", self.filter, self.dilation));
        }
        if !(1..=2).contains(&self.depth_multiplier) {
            return invalid(format!("depth multiplier {} not in {{1, 2}}", self.depth_multiplier));
        }
        if self.channels_in == 0 || self.channels_out == 0 {
            return invalid("channel counts must be positive");
        }
        Ok(())
    }

    /// Weight count without biases.
    pub fn weight_count(&self) -> usize {
        let taps = self.filter.0 * self.filter.1;
        match self.kind {
            LayerKind::Conv2d => taps * self.channels_in * self.channels_out,
            LayerKind::DepthwiseSeparable => {
                let mid = self.channels_in * self.depth_multiplier;
                taps * mid + mid * self.channels_out
            }
            _ => 0,
        }
    }

    /// Extent of the receptive field along `(S, F)`.
    pub fn receptive_field(&self) -> (usize, usize) {
        ((self.filter.0 - 1) * self.dilation.0 + 1, (self.filter.1 - 1) * self.dilation.1 + 1)
    }
}

/// Zero padding before the first output position so that a stride-1 layer
/// keeps the spatial size. Even filters pad one less in front than behind.
pub fn pad_before(filter: usize, dilation: usize) -> usize {
    dilation * (filter - 1) / 2
}

/// Signed input offset of tap `a` relative to the output position.
pub(crate) fn tap_offset(a: usize, filter: usize, dilation: usize) -> isize {
    (a * dilation) as isize - pad_before(filter, dilation) as isize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_param_count() {
        let spec = LayerSpec::separable((3, 3), (1, 1), 64, 64, 2);
        assert_eq!(spec.weight_count(), 9 * 64 * 2 + 128 * 64);
        assert_eq!(spec.weight_count(), 9344);
    }

    #[test]
    fn validation() {
        assert!(LayerSpec::separable((3, 3), (1, 1), 4, 4, 3).validate().is_err());
        assert!(LayerSpec::conv2d((0, 3), (1, 1), 4, 4).validate().is_err());
        assert!(LayerSpec::conv2d((3, 3), (2, 3), 4, 4).validate().is_ok());
        assert_eq!(LayerSpec::conv2d((3, 3), (3, 6), 1, 1).receptive_field(), (7, 13));
    }
}
