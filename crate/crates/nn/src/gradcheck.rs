//! Central finite-difference checks of every layer kind, in 64-bit.

use crate::error::Result;
use crate::layer::LayerKind;
use crate::params::{NetParams, ParamKind};
use crate::tape::{Mode, Tape, Var};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so that near-zero gradients are
/// compared in absolute terms.
pub const DENOMINATOR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckResult {
    pub layer: &'static str,
    pub max_rel_error: f64,
    pub entries_checked: usize,
}

impl GradcheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

type Forward = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

fn loss_of(params: &NetParams<f64>, inputs: &[Tensor<f64>], forward: &Forward) -> Result<f64> {
    let mut tape = Tape::new(params, Mode::Train);
    let vars: Vec<Var> = inputs.iter().map(|x| tape.input(x.clone())).collect();
    let loss = forward(&mut tape, &vars)?;
    Ok(tape.value(loss).item())
}

/// Compares the tape gradients of a scalar function of `params` and `inputs`
/// with central differences over every trainable scalar and every input entry.
pub fn check(
    params: &NetParams<f64>,
    inputs: &[Tensor<f64>],
    forward: &Forward,
    fault: Option<LayerKind>,
) -> Result<(f64, usize)> {
    let mut tape = Tape::new(params, Mode::Train);
    if let Some(kind) = fault {
        tape.inject_fault(kind);
    }
    let vars: Vec<Var> = inputs.iter().map(|x| tape.input(x.clone())).collect();
    let loss = forward(&mut tape, &vars)?;
    let (grads, input_grads) = tape.backward_full(loss)?;

    let mut worst = 0.0f64;
    let mut count = 0;
    let mut probe = params.clone();
    for (id, p) in params.iter() {
        if !p.kind.trainable() {
            continue;
        }
        for k in 0..p.value.len() {
            let orig = p.value.data()[k];
            probe.value_mut(id).data_mut()[k] = orig + STEP;
            let up = loss_of(&probe, inputs, forward)?;
            probe.value_mut(id).data_mut()[k] = orig - STEP;
            let down = loss_of(&probe, inputs, forward)?;
            probe.value_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            worst = worst.max(relative_error(analytic, numeric));
            count += 1;
        }
    }
    let mut probe_inputs = inputs.to_vec();
    for (n, x) in inputs.iter().enumerate() {
        for k in 0..x.len() {
            let orig = x.data()[k];
            probe_inputs[n].data_mut()[k] = orig + STEP;
            let up = loss_of(params, &probe_inputs, forward)?;
            probe_inputs[n].data_mut()[k] = orig - STEP;
            let down = loss_of(params, &probe_inputs, forward)?;
            probe_inputs[n].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = input_grads[n].as_ref().map_or(0.0, |g| g.data()[k]);
            worst = worst.max(relative_error(analytic, numeric));
            count += 1;
        }
    }
    Ok((worst, count))
}

fn normal(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let data = (0..shape.iter().product()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_vec(shape, data).expect("shape")
}

fn push(p: &mut NetParams<f64>, name: &str, kind: ParamKind, t: Tensor<f64>) -> crate::ParamId {
    p.push(name, kind, t).expect("unique name")
}

const N: usize = 2;
const S: usize = 6;
const F: usize = 8;

fn conv_case(rng: &mut ChaCha8Rng, fault: Option<LayerKind>) -> Result<(f64, usize)> {
    let mut p = NetParams::new();
    let w = push(&mut p, "w", ParamKind::ConvWeight, normal(&[3, 3, 3, 4], 0.3, rng));
    let b = push(&mut p, "b", ParamKind::Bias, normal(&[4], 0.3, rng));
    let x = normal(&[N, S, F, 3], 1.0, rng);
    let r = normal(&[N, S, F, 4], 1.0, rng);
    check(&p, &[x], &move |t, v| {
        let y = t.conv2d(v[0], w, Some(b), (2, 3))?;
        t.dot(y, &r)
    }, fault)
}

fn separable_case(rng: &mut ChaCha8Rng, dm: usize, fault: Option<LayerKind>) -> Result<(f64, usize)> {
    let mut p = NetParams::new();
    let dw = push(&mut p, "dw", ParamKind::ConvWeight, normal(&[3, 3, 3, dm], 0.3, rng));
    let pw = push(&mut p, "pw", ParamKind::ConvWeight, normal(&[1, 1, 3 * dm, 4], 0.3, rng));
    let x = normal(&[N, S, F, 3], 1.0, rng);
    let r = normal(&[N, S, F, 4], 1.0, rng);
    check(&p, &[x], &move |t, v| {
        let y = t.separable(v[0], dw, pw, (2, 3))?;
        t.dot(y, &r)
    }, fault)
}

fn batchnorm_case(rng: &mut ChaCha8Rng, fault: Option<LayerKind>) -> Result<(f64, usize)> {
    let mut p = NetParams::new();
    let g = push(&mut p, "g", ParamKind::BnScale, normal(&[3], 0.5, rng).map(|v| v + 1.0));
    let b = push(&mut p, "b", ParamKind::BnShift, normal(&[3], 0.5, rng));
    let m = push(&mut p, "m", ParamKind::RunningMean, Tensor::zeros(&[3]));
    let s = push(&mut p, "s", ParamKind::RunningVar, Tensor::full(&[3], 1.0));
    let x = normal(&[N, S, F, 3], 1.0, rng).map(|v| 2.0 * v + 0.5);
    let r = normal(&[N, S, F, 3], 1.0, rng);
    check(&p, &[x], &move |t, v| {
        let y = t.batchnorm(v[0], g, b, m, s)?;
        t.dot(y, &r)
    }, fault)
}

fn residual_case(rng: &mut ChaCha8Rng, fault: Option<LayerKind>) -> Result<(f64, usize)> {
    let mut p = NetParams::new();
    let w = push(&mut p, "w", ParamKind::ConvWeight, normal(&[3, 3, 3, 3], 0.3, rng));
    let x = normal(&[N, S, F, 3], 1.0, rng);
    let r = normal(&[N, S, F, 3], 1.0, rng);
    check(&p, &[x], &move |t, v| {
        let y = t.conv2d(v[0], w, None, (1, 1))?;
        let y = t.relu(y);
        let z = t.add(v[0], y)?;
        t.dot(z, &r)
    }, fault)
}

fn bce_case(rng: &mut ChaCha8Rng, fault: Option<LayerKind>) -> Result<(f64, usize)> {
    let mut p = NetParams::new();
    let w = push(&mut p, "w", ParamKind::ConvWeight, normal(&[1, 1, 3, 8], 0.5, rng));
    let b = push(&mut p, "b", ParamKind::Bias, normal(&[8], 0.5, rng));
    let x = normal(&[N, S, F, 3], 1.0, rng);
    let targets = Tensor::from_vec(&[N, S, F, 8], (0..N * S * F * 8).map(|_| f64::from(rng.random_range(0..2u8))).collect())?;
    let mask = Tensor::from_vec(
        &[N, S, F, 8],
        (0..N * S * F * 8).map(|k| if k % 8 < 4 && (k / 8) % 5 != 0 { 1.0 } else { 0.0 }).collect(),
    )?;
    check(&p, &[x], &move |t, v| {
        let y = t.conv2d(v[0], w, Some(b), (1, 1))?;
        t.masked_bce(y, &targets, &mask)
    }, fault)
}

/// Runs one check per layer kind. `fault` corrupts the backward pass of the
/// given kind.
pub fn run_suite(fault: Option<LayerKind>) -> Result<Vec<GradcheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let mut out = Vec::new();
    let (e, n) = conv_case(&mut rng, fault)?;
    out.push(GradcheckResult { layer: "conv2d", max_rel_error: e, entries_checked: n });
    let (e1, n1) = separable_case(&mut rng, 1, fault)?;
    let (e2, n2) = separable_case(&mut rng, 2, fault)?;
    out.push(GradcheckResult { layer: "depthwise_separable", max_rel_error: e1.max(e2), entries_checked: n1 + n2 });
    let (e, n) = batchnorm_case(&mut rng, fault)?;
    out.push(GradcheckResult { layer: "batchnorm", max_rel_error: e, entries_checked: n });
    let (e, n) = residual_case(&mut rng, fault)?;
    out.push(GradcheckResult { layer: "add_residual", max_rel_error: e, entries_checked: n });
    let (e, n) = bce_case(&mut rng, fault)?;
    out.push(GradcheckResult { layer: "masked_bce", max_rel_error: e, entries_checked: n });
    Ok(out)
}

/// Layer kind whose backward pass [`run_suite`] corrupts for a report name.
pub fn fault_target(layer: &str) -> Option<LayerKind> {
    match layer {
        "conv2d" => Some(LayerKind::Conv2d),
        "depthwise_separable" => Some(LayerKind::DepthwiseSeparable),
        "batchnorm" => Some(LayerKind::BatchNorm),
        "add_residual" => Some(LayerKind::AddResidual),
        "masked_bce" => Some(LayerKind::SigmoidOutput),
        _ => None,
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_lists_each_kind_once() {
        let report = run_suite(None).unwrap();
        let names: Vec<_> = report.iter().map(|r| r.layer).collect();
        assert_eq!(names, ["conv2d", "depthwise_separable", "batchnorm", "add_residual", "masked_bce"]);
        for r in &report {
            assert!(r.passed(), "{r:?}");
            assert!(r.entries_checked > 0);
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        for name in ["conv2d", "depthwise_separable", "batchnorm", "add_residual", "masked_bce"] {
            let report = run_suite(fault_target(name)).unwrap();
            let hit = report.iter().find(|r| r.layer == name).unwrap();
            assert!(!hit.passed(), "{name}: {hit:?}");
        }
    }
}
