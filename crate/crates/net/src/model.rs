use crate::config::DeepRxConfig;
use crate::error::{Error, Result};
use crate::input::{build_input, data_channels, InputTensor};
use deeprx_core::{BitGrid, Constellation, LlrGrid, PilotConfig, ResourceGrid};
use deeprx_nn::{Mode, NetParams, ParamId, ParamKind, Scalar, Tape, Tensor, Var};
use ndarray::{Array2, Array3};
use rand::Rng;

/// Initial scale of the output convolution relative to He initialization.
pub const OUTPUT_INIT_GAIN: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
struct Bn {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    bn1: Bn,
    dw1: ParamId,
    pw1: ParamId,
    bn2: Bn,
    dw2: ParamId,
    pw2: ParamId,
    proj: Option<ParamId>,
    dilation: (usize, usize),
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: Option<ParamId>,
}

/// Network inputs for a batch of TTIs.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    /// `(N, S, F, C)` full input.
    pub z: Tensor<T>,
    /// Input of the restricted network's deep path (pilots only).
    pub z_pilots: Option<Tensor<T>>,
    /// `(N, S, F, 2 N_r)` received data for the restricted network's head.
    pub y: Option<Tensor<T>>,
}

/// A receiver network: architecture, parameters and layer bookkeeping.
#[derive(Debug, Clone)]
pub struct DeepRx<T> {
    pub config: DeepRxConfig,
    pub n_rx: usize,
    pub params: NetParams<T>,
    conv_in: Conv,
    blocks: Vec<Block>,
    head: Vec<Conv>,
    conv_out: Conv,
}

fn add_bn<T: Scalar>(p: &mut NetParams<T>, prefix: &str, c: usize) -> Result<Bn> {
    Ok(Bn {
        gamma: p.push(format!("{prefix}/gamma"), ParamKind::BnScale, Tensor::full(&[c], T::one()))?,
        beta: p.push(format!("{prefix}/beta"), ParamKind::BnShift, Tensor::zeros(&[c]))?,
        mean: p.push(format!("{prefix}/running_mean"), ParamKind::RunningMean, Tensor::zeros(&[c]))?,
        var: p.push(format!("{prefix}/running_var"), ParamKind::RunningVar, Tensor::full(&[c], T::one()))?,
    })
}

fn add_bias<T: Scalar>(p: &mut NetParams<T>, name: String, c: usize) -> Result<ParamId> {
    Ok(p.push(name, ParamKind::Bias, Tensor::zeros(&[c]))?)
}

impl<T: Scalar> DeepRx<T> {
    /// Randomly initialized network for `n_rx` receive antennas.
    pub fn new<R: Rng + ?Sized>(config: DeepRxConfig, n_rx: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if n_rx == 0 {
            return Err(Error::InvalidArgument("n_rx must be positive".into()));
        }
        let mut p = NetParams::new();
        let (fs, ff) = config.filter;
        let cin = config.input_channels(n_rx);
        let c0 = config.stem_channels;
        let conv_in = Conv {
            w: p.push_he("conv_in/w", &[fs, ff, cin, c0], fs * ff * cin, 1.0, rng)?,
            b: Some(add_bias(&mut p, "conv_in/b".into(), c0)?),
        };
        let dm = config.depth_multiplier;
        let mut blocks = Vec::new();
        let mut c = c0;
        for (k, spec) in config.blocks.iter().enumerate() {
            let pre = format!("block{:02}", k + 1);
            let co = spec.channels;
            let bn1 = add_bn(&mut p, &format!("{pre}/bn1"), c)?;
            let dw1 = p.push_he(format!("{pre}/dw1"), &[fs, ff, c, dm], fs * ff, 1.0, rng)?;
            let pw1 = p.push_he(format!("{pre}/pw1"), &[1, 1, c * dm, co], c * dm, 1.0, rng)?;
            let bn2 = add_bn(&mut p, &format!("{pre}/bn2"), co)?;
            let dw2 = p.push_he(format!("{pre}/dw2"), &[fs, ff, co, dm], fs * ff, 1.0, rng)?;
            let pw2 = p.push_he(format!("{pre}/pw2"), &[1, 1, co * dm, co], co * dm, 1.0, rng)?;
            let proj = if c != co { Some(p.push_he(format!("{pre}/proj"), &[1, 1, c, co], c, 1.0, rng)?) } else { None };
            blocks.push(Block { bn1, dw1, pw1, bn2, dw2, pw2, proj, dilation: spec.dilation });
            c = co;
        }
        let mut head = Vec::new();
        if let Some(r) = config.restricted {
            let mut width = c + 2 * n_rx;
            for l in 0..r.head_layers {
                head.push(Conv {
                    w: p.push_he(format!("head{l}/w"), &[1, 1, width, r.head_width], width, 1.0, rng)?,
                    b: Some(add_bias(&mut p, format!("head{l}/b"), r.head_width)?),
                });
                width = r.head_width;
            }
            c = width;
        }
        let conv_out = Conv {
            w: p.push_he("conv_out/w", &[1, 1, c, config.outputs], c, OUTPUT_INIT_GAIN, rng)?,
            b: Some(add_bias(&mut p, "conv_out/b".into(), config.outputs)?),
        };
        Ok(Self { config, n_rx, params: p, conv_in, blocks, head, conv_out })
    }

    pub fn is_restricted(&self) -> bool {
        self.config.restricted.is_some()
    }

    pub fn trainable_count(&self) -> usize {
        self.params.trainable_count()
    }

    /// Stacks per-TTI inputs into a batch.
    pub fn batch(&self, samples: &[(&ResourceGrid, &PilotConfig)]) -> Result<Batch<T>> {
        let coords = self.config.use_coordinate_channels;
        let mut z = Vec::with_capacity(samples.len());
        let mut zp = Vec::new();
        let mut y = Vec::new();
        for (rx, pilots) in samples {
            if rx.ports() != self.n_rx {
                return Err(Error::InvalidArgument(format!(
                    "network expects {} antennas, grid has {}",
                    self.n_rx,
                    rx.ports()
                )));
            }
            z.push(build_input(rx, pilots, coords, false)?);
            if let Some(r) = self.config.restricted {
                if !r.switch_closed {
                    zp.push(build_input(rx, pilots, coords, true)?);
                }
                y.push(data_channels(rx));
            }
        }
        Ok(Batch {
            z: stack(&z)?,
            z_pilots: if zp.is_empty() { None } else { Some(stack(&zp)?) },
            y: if y.is_empty() { None } else { Some(stack(&y)?) },
        })
    }

    fn bn(&self, tape: &mut Tape<T>, x: Var, b: Bn) -> Result<Var> {
        Ok(tape.batchnorm(x, b.gamma, b.beta, b.mean, b.var)?)
    }

    fn block(&self, tape: &mut Tape<T>, x: Var, b: &Block) -> Result<Var> {
        let h = self.bn(tape, x, b.bn1)?;
        let h = tape.relu(h);
        let h = tape.separable(h, b.dw1, b.pw1, b.dilation)?;
        let h = self.bn(tape, h, b.bn2)?;
        let h = tape.relu(h);
        let h = tape.separable(h, b.dw2, b.pw2, b.dilation)?;
        let skip = match b.proj {
            Some(p) => tape.conv2d(x, p, None, (1, 1))?,
            None => x,
        };
        Ok(tape.add(skip, h)?)
    }

    /// Records the forward pass; returns the `(N, S, F, outputs)` logits.
    pub fn forward(&self, tape: &mut Tape<T>, batch: Batch<T>) -> Result<Var> {
        let z = tape.input(batch.z);
        let deep_in = match batch.z_pilots {
            Some(zp) => tape.input(zp),
            None => z,
        };
        let mut x = tape.conv2d(deep_in, self.conv_in.w, self.conv_in.b, (1, 1))?;
        for b in &self.blocks {
            x = self.block(tape, x, b)?;
        }
        if !self.head.is_empty() {
            let y = batch.y.ok_or_else(|| Error::InvalidArgument("restricted network needs data channels".into()))?;
            let y = tape.input(y);
            x = tape.concat(&[x, y])?;
            for l in &self.head {
                x = tape.conv2d(x, l.w, l.b, (1, 1))?;
                x = tape.relu(x);
            }
        }
        Ok(tape.conv2d(x, self.conv_out.w, self.conv_out.b, (1, 1))?)
    }

    /// Inference with running batch-norm statistics.
    pub fn infer(&self, batch: Batch<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new(&self.params, Mode::Eval);
        let out = self.forward(&mut tape, batch)?;
        Ok(tape.value(out).clone())
    }

    /// LLR grids of a batch of received TTIs.
    pub fn receive(&self, samples: &[(&ResourceGrid, &PilotConfig)], constellation: &Constellation) -> Result<Vec<LlrGrid>> {
        let logits = self.infer(self.batch(samples)?)?;
        let (_, s, f, c) = logits.dims4()?;
        let per = s * f * c;
        samples
            .iter()
            .enumerate()
            .map(|(n, (_, pilots))| {
                let valid = Array2::from_shape_fn((s, f), |(i, j)| !pilots.is_pilot(i, j));
                mask_llrs(&logits.data()[n * per..(n + 1) * per], (s, f, c), constellation, &valid)
            })
            .collect()
    }
}

fn stack<T: Scalar>(items: &[InputTensor]) -> Result<Tensor<T>> {
    let first = items.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (s, f, c) = (first.symbols, first.subcarriers, first.channels);
    let mut data = Vec::with_capacity(items.len() * s * f * c);
    for z in items {
        if (z.symbols, z.subcarriers, z.channels) != (s, f, c) {
            return Err(Error::InvalidArgument("batch items differ in shape".into()));
        }
        data.extend(z.data.iter().map(|&v| T::of(v)));
    }
    Ok(Tensor::from_vec(&[items.len(), s, f, c], data)?)
}

/// Keeps the first `B` output planes on the data REs.
pub fn mask_llrs<T: Scalar>(
    logits: &[T],
    dims: (usize, usize, usize),
    constellation: &Constellation,
    valid: &Array2<bool>,
) -> Result<LlrGrid> {
    let (s, f, c) = dims;
    let b = constellation.bits_per_symbol();
    if b > c {
        return Err(Error::InvalidArgument(format!("{b} bits per symbol but only {c} outputs")));
    }
    if logits.len() != s * f * c || valid.dim() != (s, f) {
        return Err(Error::InvalidArgument("logit and mask dimensions disagree".into()));
    }
    let llr = Array3::from_shape_fn((s, f, b), |(i, j, l)| logits[(i * f + j) * c + l].f64());
    Ok(LlrGrid { llr, valid: valid.clone() })
}

/// Targets and loss mask `(N, S, F, outputs)` for a batch of bit grids:
/// the mask selects the first `B` planes on data REs.
pub fn loss_targets<T: Scalar>(bits: &[&BitGrid], outputs: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let first = bits.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (s, f, _) = first.bits.dim();
    let mut t = vec![T::zero(); bits.len() * s * f * outputs];
    let mut m = vec![T::zero(); t.len()];
    for (n, g) in bits.iter().enumerate() {
        let (gs, gf, b) = g.bits.dim();
        if (gs, gf) != (s, f) || b > outputs {
            return Err(Error::InvalidArgument("bit grids differ in shape".into()));
        }
        for ((i, j), &v) in g.valid.indexed_iter() {
            if !v {
                continue;
            }
            let base = ((n * s + i) * f + j) * outputs;
            for l in 0..b {
                t[base + l] = T::of(f64::from(g.bits[[i, j, l]]));
                m[base + l] = T::one();
            }
        }
    }
    let shape = [bits.len(), s, f, outputs];
    Ok((Tensor::from_vec(&shape, t)?, Tensor::from_vec(&shape, m)?))
}
