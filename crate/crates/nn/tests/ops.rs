use deeprx_nn::{Mode, NetParams, ParamId, ParamKind, Tape, Tensor, PROB_CLAMP};
use proptest::prelude::*;

fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, data).unwrap()
}

fn lcg(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

fn bn_params(p: &mut NetParams<f64>, c: usize) -> [ParamId; 4] {
    [
        p.push("g", ParamKind::BnScale, Tensor::full(&[c], 1.0)).unwrap(),
        p.push("b", ParamKind::BnShift, Tensor::zeros(&[c])).unwrap(),
        p.push("m", ParamKind::RunningMean, Tensor::zeros(&[c])).unwrap(),
        p.push("v", ParamKind::RunningVar, Tensor::full(&[c], 1.0)).unwrap(),
    ]
}

#[test]
fn identity_pointwise_conv() {
    let mut p = NetParams::new();
    let mut eye = vec![0.0; 9];
    eye[0] = 1.0;
    eye[4] = 1.0;
    eye[8] = 1.0;
    let w = p.push("w", ParamKind::ConvWeight, t(&[1, 1, 3, 3], eye)).unwrap();
    let b = p.push("b", ParamKind::Bias, Tensor::zeros(&[3])).unwrap();
    let x = t(&[1, 4, 5, 3], lcg(60, 1));
    let mut tape = Tape::new(&p, Mode::Eval);
    let v = tape.input(x.clone());
    let y = tape.conv2d(v, w, Some(b), (1, 1)).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn conv_channel_mismatch_rejected() {
    let mut p = NetParams::<f64>::new();
    let w = p.push("w", ParamKind::ConvWeight, Tensor::zeros(&[3, 3, 2, 1])).unwrap();
    let mut tape = Tape::new(&p, Mode::Eval);
    let v = tape.input(Tensor::zeros(&[1, 4, 4, 3]));
    assert!(tape.conv2d(v, w, None, (1, 1)).is_err());
}

#[test]
fn delta_separable_is_identity() {
    let c = 3;
    let mut p = NetParams::new();
    let mut dw = vec![0.0; 9 * c];
    for k in 0..c {
        dw[4 * c + k] = 1.0;
    }
    let mut pw = vec![0.0; c * c];
    for k in 0..c {
        pw[k * c + k] = 1.0;
    }
    let dwi = p.push("dw", ParamKind::ConvWeight, t(&[3, 3, c, 1], dw)).unwrap();
    let pwi = p.push("pw", ParamKind::ConvWeight, t(&[1, 1, c, c], pw)).unwrap();
    let x = t(&[2, 5, 6, c], lcg(180, 2));
    let mut tape = Tape::new(&p, Mode::Eval);
    let v = tape.input(x.clone());
    let y = tape.separable(v, dwi, pwi, (2, 3)).unwrap();
    assert!(tape.value(y).max_abs_diff(&x) < 1e-15);
}

#[test]
fn separable_with_one_channel_equals_full_conv() {
    // A rank-1 full kernel K[a,b,o] = k[a,b] * q[o] is a separable conv with
    // depthwise k and pointwise q; with DM=2 the two intermediate channels
    // carry k1, k2 and the full kernel is k1 q1 + k2 q2.
    let k = lcg(18, 3);
    let q = lcg(4, 4);
    let mut full = vec![0.0; 9 * 2];
    for tap in 0..9 {
        for o in 0..2 {
            full[tap * 2 + o] = k[tap * 2] * q[o] + k[tap * 2 + 1] * q[2 + o];
        }
    }
    let mut p = NetParams::new();
    let dw = p.push("dw", ParamKind::ConvWeight, t(&[3, 3, 1, 2], k)).unwrap();
    let pw = p.push("pw", ParamKind::ConvWeight, t(&[1, 1, 2, 2], q)).unwrap();
    let fw = p.push("fw", ParamKind::ConvWeight, t(&[3, 3, 1, 2], full)).unwrap();
    let x = t(&[1, 4, 4, 1], lcg(16, 5));
    let mut tape = Tape::new(&p, Mode::Eval);
    let v = tape.input(x);
    let a = tape.separable(v, dw, pw, (1, 1)).unwrap();
    let b = tape.conv2d(v, fw, None, (1, 1)).unwrap();
    assert!(tape.value(a).max_abs_diff(tape.value(b)) < 1e-14);
}

#[test]
fn batchnorm_train_standardizes_and_eval_is_affine() {
    let mut p = NetParams::new();
    let [g, b, m, v] = bn_params(&mut p, 2);
    let x = t(&[3, 4, 5, 2], lcg(120, 6).iter().map(|v| 3.0 * v + 1.0).collect());
    let mut tape = Tape::new(&p, Mode::Train);
    let xi = tape.input(x.clone());
    let y = tape.batchnorm(xi, g, b, m, v).unwrap();
    let yd = tape.value(y).data();
    for c in 0..2 {
        let vals: Vec<f64> = yd.iter().skip(c).step_by(2).copied().collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4, "{var}");
    }
    assert_eq!(tape.bn_updates().len(), 1);

    // Already standardized input passes through (up to epsilon).
    let mut tape = Tape::new(&p, Mode::Train);
    let yi = tape.input(Tensor::from_vec(&[3, 4, 5, 2], yd.to_vec()).unwrap());
    let z = tape.batchnorm(yi, g, b, m, v).unwrap();
    assert!(tape.value(z).max_abs_diff(tape.value(y)) < 1e-4);

    let mut q = p.clone();
    q.value_mut(m).data_mut().copy_from_slice(&[0.5, -1.0]);
    q.value_mut(v).data_mut().copy_from_slice(&[2.0, 0.25]);
    let mut tape = Tape::new(&q, Mode::Eval);
    let x1 = tape.input(t(&[1, 1, 1, 2], vec![1.5, 0.0]));
    let x2 = tape.input(t(&[1, 1, 1, 2], vec![2.5, 1.0]));
    let y1 = tape.batchnorm(x1, g, b, m, v).unwrap();
    let y2 = tape.batchnorm(x2, g, b, m, v).unwrap();
    for c in 0..2 {
        let (a, bb) = (tape.value(y1).data()[c], tape.value(y2).data()[c]);
        assert!((bb - 2.0 * a).abs() < 1e-12);
    }
    assert!(tape.bn_updates().is_empty());

    let mut tape = Tape::new(&p, Mode::Train);
    let e = tape.input(Tensor::zeros(&[0, 4, 5, 2]));
    assert!(tape.batchnorm(e, g, b, m, v).is_err());
}

#[test]
fn bce_examples() {
    let p = NetParams::<f64>::new();
    let shape = [1, 2, 3, 8];
    let n = 48;
    let targets = t(&shape, (0..n).map(|k| (k % 3 == 0) as u8 as f64).collect());
    let mask = t(&shape, (0..n).map(|k| (k % 8 < 2) as u8 as f64).collect());

    let mut tape = Tape::new(&p, Mode::Train);
    let l = tape.input(Tensor::zeros(&shape));
    let loss = tape.masked_bce(l, &targets, &mask).unwrap();
    assert!((tape.value(loss).item() - std::f64::consts::LN_2).abs() < 1e-12);
    let (_, inputs) = tape.backward_full(loss).unwrap();
    let g = inputs[0].as_ref().unwrap();
    for k in 0..n {
        if k % 8 >= 2 {
            assert_eq!(g.data()[k], 0.0);
        }
    }

    // Confident and correct: L = +20 for bit 0, -20 for bit 1.
    let confident = t(&shape, targets.data().iter().map(|&b| if b == 1.0 { -20.0 } else { 20.0 }).collect());
    let mut tape = Tape::new(&p, Mode::Train);
    let l = tape.input(confident);
    let loss = tape.masked_bce(l, &targets, &mask).unwrap();
    let value = tape.value(loss).item();
    // -ln(1 - 1e-7) = 1.00000005e-7.
    assert!(value <= -(1.0 - PROB_CLAMP).ln() + 1e-15, "{value}");
    assert!(value <= 1.0000001e-7);

    let mut tape = Tape::new(&p, Mode::Train);
    let l = tape.input(Tensor::zeros(&shape));
    assert!(tape.masked_bce(l, &targets, &Tensor::zeros(&shape)).is_err());
}

#[test]
fn linear_layer_squared_loss_closed_form() {
    // y = x w with x: 5x3 rows, w: 3x2; d/dw sum (xw - y)^2 = 2 x^T (x w - y).
    let xs = lcg(15, 7);
    let ws = lcg(6, 8);
    let ys = lcg(10, 9);
    let mut p = NetParams::new();
    let w = p.push("w", ParamKind::ConvWeight, t(&[1, 1, 3, 2], ws.clone())).unwrap();
    let mut tape = Tape::new(&p, Mode::Train);
    let x = tape.input(t(&[1, 1, 5, 3], xs.clone()));
    let out = tape.conv2d(x, w, None, (1, 1)).unwrap();
    let loss = tape.squared_error(out, &t(&[1, 1, 5, 2], ys.clone())).unwrap();
    let grads = tape.backward(loss).unwrap();
    let g = grads.get(w).unwrap().data();
    for i in 0..3 {
        for j in 0..2 {
            let mut expect = 0.0;
            for r in 0..5 {
                let pred: f64 = (0..3).map(|k| xs[r * 3 + k] * ws[k * 2 + j]).sum();
                expect += 2.0 * xs[r * 3 + i] * (pred - ys[r * 2 + j]);
            }
            assert!((g[i * 2 + j] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn backward_requires_recorded_scalar() {
    let p = NetParams::<f64>::new();
    let mut tape = Tape::new(&p, Mode::Train);
    let x = tape.input(Tensor::zeros(&[1, 1, 1, 2]));
    assert!(tape.backward(x).is_err());
    let other = {
        let mut t2 = Tape::new(&p, Mode::Train);
        let a = t2.input(Tensor::zeros(&[1]));
        let b = t2.input(Tensor::zeros(&[1]));
        let _ = a;
        b
    };
    let empty = Tape::new(&p, Mode::Train);
    assert!(matches!(empty.backward(other), Err(deeprx_nn::Error::InvalidState(_))));
}

proptest! {
    #[test]
    fn same_padding_preserves_spatial_shape(s in 1usize..9, f in 1usize..12, ks in 1usize..5, kf in 1usize..5,
                                            ds in 1usize..4, df in 1usize..7, dm in 1usize..3) {
        let mut p = NetParams::<f32>::new();
        let w = p.push("w", ParamKind::ConvWeight, Tensor::full(&[ks, kf, 2, 3], 0.1)).unwrap();
        let d = p.push("d", ParamKind::ConvWeight, Tensor::full(&[ks, kf, 2, dm], 0.1)).unwrap();
        let mut tape = Tape::new(&p, Mode::Eval);
        let x = tape.input(Tensor::full(&[2, s, f, 2], 1.0));
        let y = tape.conv2d(x, w, None, (ds, df)).unwrap();
        let z = tape.depthwise(x, d, (ds, df)).unwrap();
        prop_assert_eq!(tape.value(y).shape(), &[2, s, f, 3]);
        prop_assert_eq!(tape.value(z).shape(), &[2, s, f, 2 * dm]);
        prop_assert!(tape.value(y).is_finite());
    }
}
