mod common;

use clas_core::tensor::{kernels, Gradients, ParamSet, Shape, Tape, Tensor};
use clas_core::Error;
use common::{lcg_values, max_grad_error};

fn mat(r: usize, c: usize, v: &[f64]) -> Tensor {
    Tensor::matrix(r, c, v.to_vec()).unwrap()
}

#[test]
fn matmul_identity_and_hand_case() {
    let m = mat(2, 2, &[0.3, -1.2, 4.0, 2.5]);
    let id = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(id.matmul(&m).unwrap(), m);

    let a = mat(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let b = mat(2, 1, &[1.0, 1.0]);
    assert_eq!(a.matmul(&b).unwrap(), mat(2, 1, &[3.0, 7.0]));
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let params = ParamSet::new();
    let mut tape = Tape::new(&params);
    let a = tape.constant(mat(2, 3, &[0.0; 6]));
    let b = tape.constant(mat(2, 2, &[0.0; 4]));
    match tape.matmul(a, b) {
        Err(Error::Shape { left, right, .. }) => {
            assert_eq!(left, Shape::Matrix(2, 3));
            assert_eq!(right, Shape::Matrix(2, 2));
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut params = ParamSet::new();
    let a = params.add("a", mat(3, 4, &lcg_values(1, 12)));
    let b = params.add("b", mat(4, 2, &lcg_values(2, 8)));
    let c = params.add("c", mat(3, 2, &lcg_values(3, 6)));
    // sum((A B) * C) has a non-trivial upstream gradient.
    let err = max_grad_error(&params, &|t| {
        let ab = t.matmul(t.param(a), t.param(b)).unwrap();
        let w = t.mul(ab, t.param(c)).unwrap();
        t.sum(w)
    });
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn elementwise_values() {
    let params = ParamSet::new();
    let mut tape = Tape::new(&params);
    let z = tape.constant(Tensor::scalar(0.0));
    let th = tape.tanh(z);
    let sg = tape.sigmoid(z);
    assert_eq!(tape.value(th).data(), &[0.0]);
    assert_eq!(tape.value(sg).data(), &[0.5]);
}

#[test]
fn tanh_gradient_at_point_three() {
    let mut params = ParamSet::new();
    let x = params.add("x", Tensor::scalar(0.3));
    let err = max_grad_error(&params, &|t| {
        let y = t.tanh(t.param(x));
        t.sum(y)
    });
    assert!(err < 1e-8, "rel err {err}");
    let mut tape = Tape::new(&params);
    let y = tape.tanh(tape.param(x));
    let l = tape.sum(y);
    let mut g = Gradients::zeros_like(&params);
    tape.backward(l, &mut g).unwrap();
    let th = 0.3f64.tanh();
    assert!(((g.get(x).data()[0]) - (1.0 - th * th)).abs() < 1e-12);
}

#[test]
fn elementwise_shape_errors() {
    let params = ParamSet::new();
    let mut tape = Tape::new(&params);
    let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    assert!(matches!(tape.add(a, b), Err(Error::Shape { .. })));
    assert!(matches!(tape.mul(a, b), Err(Error::Shape { .. })));
}

#[test]
fn softmax_examples() {
    let mut out = [0.0; 3];
    kernels::softmax(&[0.0, 0.0, 0.0], None, &mut out).unwrap();
    assert!(out.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));

    let mut out = [0.0; 2];
    for x in [-40.0, 0.0, 3.5, 700.0] {
        kernels::softmax(&[x, kernels::MASKED], None, &mut out).unwrap();
        assert_eq!(out, [1.0, 0.0]);
    }

    let mut out = [0.0; 3];
    kernels::softmax(&[1.0, 2.0, 3.0], None, &mut out).unwrap();
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
    for (o, v) in out.iter().zip([1.0f64, 2.0, 3.0]) {
        assert!((o - v.exp() / z).abs() < 1e-12);
    }

    assert_eq!(
        kernels::softmax(&[kernels::MASKED; 2], None, &mut [0.0; 2]),
        Err(Error::NoUnmaskedEntry)
    );
    assert_eq!(
        kernels::softmax(&[1.0, 2.0], Some(&[false, false]), &mut [0.0; 2]),
        Err(Error::NoUnmaskedEntry)
    );
}

#[test]
fn lstm_zero_weights_give_zero_state() {
    let mut params = ParamSet::new();
    let w = params.add("w", Tensor::zeros(Shape::Matrix(12, 5)));
    let b = params.add("b", Tensor::zeros(Shape::Vector(12)));
    let mut tape = Tape::new(&params);
    let x = tape.constant(Tensor::vector(vec![0.7, -0.2]));
    let s = tape.constant(Tensor::zeros(Shape::Vector(6)));
    let s1 = tape.lstm(x, s, tape.param(w), tape.param(b)).unwrap();
    assert!(tape.value(s1).data().iter().all(|v| *v == 0.0));
}

#[test]
fn lstm_single_unit_hand_case() {
    // One unit, one input: gates z = w_x * x + w_h * h + b.
    let (x, h, c) = (0.5, -0.3, 0.8);
    let wx = [0.2, -0.4, 0.6, 0.1];
    let wh = [0.7, 0.3, -0.5, 0.9];
    let bias = [0.05, 1.0, -0.1, 0.2];
    let mut params = ParamSet::new();
    let w = params.add(
        "w",
        mat(4, 2, &[wx[0], wh[0], wx[1], wh[1], wx[2], wh[2], wx[3], wh[3]]),
    );
    let b = params.add("b", Tensor::vector(bias.to_vec()));
    let mut tape = Tape::new(&params);
    let xv = tape.constant(Tensor::scalar(x));
    let sv = tape.constant(Tensor::vector(vec![h, c]));
    let out = tape.lstm(xv, sv, tape.param(w), tape.param(b)).unwrap();

    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let z: Vec<f64> = (0..4).map(|k| wx[k] * x + wh[k] * h + bias[k]).collect();
    let (i, f, g, o) = (sig(z[0]), sig(z[1]), z[2].tanh(), sig(z[3]));
    let c1 = f * c + i * g;
    let h1 = o * c1.tanh();
    let got = tape.value(out).data();
    assert!((got[0] - h1).abs() < 1e-12);
    assert!((got[1] - c1).abs() < 1e-12);
}

#[test]
fn lstm_gradients_match_finite_differences() {
    let mut params = ParamSet::new();
    let w = params.add("w", mat(12, 5, &lcg_values(11, 60)));
    let b = params.add("b", Tensor::vector(lcg_values(12, 12)));
    let x = params.add("x", Tensor::vector(lcg_values(13, 2)));
    let s0 = params.add("s0", Tensor::vector(lcg_values(14, 6)));
    let probe = params.add("probe", Tensor::vector(lcg_values(15, 6)));
    let err = max_grad_error(&params, &|t| {
        let s1 = t.lstm(t.param(x), t.param(s0), t.param(w), t.param(b)).unwrap();
        let s2 = t.lstm(t.param(x), s1, t.param(w), t.param(b)).unwrap();
        let weighted = t.mul(s2, t.param(probe)).unwrap();
        t.sum(weighted)
    });
    assert!(err < 1e-5, "rel err {err}");
}

#[test]
fn backward_sum_of_wx_gives_broadcast_x() {
    let mut params = ParamSet::new();
    let w = params.add("w", mat(2, 3, &lcg_values(21, 6)));
    let unused = params.add("unused", Tensor::vector(vec![1.0, 2.0]));
    let xs = [0.5, -1.5, 2.0];
    let mut tape = Tape::new(&params);
    let x = tape.constant(Tensor::vector(xs.to_vec()));
    let y = tape.matvec(tape.param(w), x).unwrap();
    let l = tape.sum(y);
    let mut g = Gradients::zeros_like(&params);
    tape.backward(l, &mut g).unwrap();
    assert_eq!(g.get(w).data(), &[0.5, -1.5, 2.0, 0.5, -1.5, 2.0]);
    assert_eq!(g.get(unused).data(), &[0.0, 0.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let params = ParamSet::new();
    let mut tape = Tape::new(&params);
    let v = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let mut g = Gradients::zeros_like(&params);
    assert!(matches!(tape.backward(v, &mut g), Err(Error::NotScalar(_))));
}

#[test]
fn two_layer_tanh_net_gradients() {
    let mut params = ParamSet::new();
    let w1 = params.add("w1", mat(4, 3, &lcg_values(31, 12)));
    let b1 = params.add("b1", Tensor::vector(lcg_values(32, 4)));
    let w2 = params.add("w2", mat(3, 4, &lcg_values(33, 12)));
    let b2 = params.add("b2", Tensor::vector(lcg_values(34, 3)));
    let err = max_grad_error(&params, &|t| {
        let x = t.constant(Tensor::vector(vec![0.2, -0.7, 1.1]));
        let h = t.linear(t.param(w1), x, Some(t.param(b1))).unwrap();
        let h = t.tanh(h);
        let o = t.linear(t.param(w2), h, Some(t.param(b2))).unwrap();
        t.nll(o, 1).unwrap()
    });
    assert!(err < 1e-5, "rel err {err}");
}

#[test]
fn remaining_ops_gradients() {
    let mut params = ParamSet::new();
    let m = params.add("m", mat(3, 4, &lcg_values(41, 12)));
    let k = params.add("k", mat(2, 4, &lcg_values(42, 8)));
    let v = params.add("v", Tensor::vector(lcg_values(43, 4)));
    let q = params.add("q", Tensor::vector(lcg_values(44, 2)));
    let err = max_grad_error(&params, &|t| {
        let mk = t.matmul_t(t.param(m), t.param(k)).unwrap(); // 3x2
        let s = t.matvec(mk, t.param(q)).unwrap(); // 3
        let a = t.softmax(s, Some(&[true, false, true])).unwrap();
        let ctx = t.vecmat(a, t.param(m)).unwrap(); // 4
        let shifted = t.add_row(t.param(m), t.param(v)).unwrap();
        let r = t.row(shifted, 2).unwrap();
        let sg = t.sigmoid(r);
        let both = t.concat(&[ctx, sg]).unwrap();
        let part = t.slice(both, 2, 5).unwrap();
        let stacked = t.stack_rows(&[part, part]).unwrap();
        let ls = t.log_softmax(part).unwrap();
        let sc = t.scale(ls, 0.3);
        let s1 = t.sum(sc);
        let s2 = t.sum(stacked);
        t.add_scalars(&[s1, s2]).unwrap()
    });
    assert!(err < 1e-5, "rel err {err}");
}

#[test]
fn forward_is_deterministic() {
    let mut params = ParamSet::new();
    let w = params.add("w", mat(12, 7, &lcg_values(51, 84)));
    let b = params.add("b", Tensor::vector(lcg_values(52, 12)));
    let run = || {
        let mut tape = Tape::inference(&params);
        let x = tape.constant(Tensor::vector(lcg_values(53, 4)));
        let mut s = tape.constant(Tensor::zeros(Shape::Vector(6)));
        for _ in 0..5 {
            s = tape.lstm(x, s, tape.param(w), tape.param(b)).unwrap();
        }
        tape.value(s).data().to_vec()
    };
    let (a, b2) = (run(), run());
    assert!(a.iter().zip(&b2).all(|(x, y)| x.to_bits() == y.to_bits()));
}
