#![allow(dead_code)]

use clas_core::tensor::{Gradients, ParamSet, Tape, Var};

/// Central finite differences for every entry of every parameter.
pub fn numeric_grads(params: &ParamSet, step: f64, loss: &dyn Fn(&mut Tape<'_>) -> Var) -> Vec<Vec<f64>> {
    let mut work = params.clone();
    let mut out = Vec::new();
    for id in params.ids() {
        let mut g = vec![0.0; params.get(id).len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + step;
            let plus = eval(&work, loss);
            work.get_mut(id).data_mut()[i] = orig - step;
            let minus = eval(&work, loss);
            work.get_mut(id).data_mut()[i] = orig;
            *gi = (plus - minus) / (2.0 * step);
        }
        out.push(g);
    }
    out
}

fn eval(params: &ParamSet, loss: &dyn Fn(&mut Tape<'_>) -> Var) -> f64 {
    let mut tape = Tape::inference(params);
    let l = loss(&mut tape);
    tape.value(l).data()[0]
}

pub fn analytic_grads(params: &ParamSet, loss: &dyn Fn(&mut Tape<'_>) -> Var) -> Gradients {
    let mut tape = Tape::new(params);
    let l = loss(&mut tape);
    let mut grads = Gradients::zeros_like(params);
    tape.backward(l, &mut grads).unwrap();
    grads
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    rel_err_floor(a, b, 1e-6)
}

pub fn rel_err_floor(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between recorded and finite-difference gradients.
pub fn max_grad_error(params: &ParamSet, loss: &dyn Fn(&mut Tape<'_>) -> Var) -> f64 {
    max_grad_error_floor(params, 1e-6, loss)
}

/// As [`max_grad_error`], with magnitudes below `floor` compared absolutely
/// (finite differences carry roughly 1e-10 absolute noise).
pub fn max_grad_error_floor(params: &ParamSet, floor: f64, loss: &dyn Fn(&mut Tape<'_>) -> Var) -> f64 {
    let analytic = analytic_grads(params, loss);
    let numeric = numeric_grads(params, 1e-5, loss);
    let mut worst: f64 = 0.0;
    for (id, num) in params.ids().zip(&numeric) {
        for (a, n) in analytic.get(id).data().iter().zip(num) {
            worst = worst.max(rel_err_floor(*a, *n, floor));
        }
    }
    worst
}

/// Deterministic pseudo-random values in [-1, 1).
pub fn lcg_values(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}
