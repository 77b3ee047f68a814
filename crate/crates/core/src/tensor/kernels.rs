//! Slice-level numeric kernels shared by the tape and the inference paths.
//!
//! Matrices are row-major. Every routine has a fixed summation order so that
//! identical inputs always produce bit-identical outputs.

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = W x` for `W` of shape `rows x cols`.
pub fn matvec(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += Wᵀ g`
pub fn matvec_t_acc(w: &[f64], cols: usize, g: &[f64], out: &mut [f64]) {
    for (r, gr) in g.iter().enumerate() {
        if *gr != 0.0 {
            axpy(*gr, &w[r * cols..(r + 1) * cols], out);
        }
    }
}

/// `W_grad += g xᵀ`
pub fn outer_acc(g: &[f64], x: &[f64], w_grad: &mut [f64]) {
    let cols = x.len();
    for (r, gr) in g.iter().enumerate() {
        if *gr != 0.0 {
            axpy(*gr, x, &mut w_grad[r * cols..(r + 1) * cols]);
        }
    }
}

/// `out = A B` with `A: m x k`, `B: k x n`.
pub fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av != 0.0 {
                axpy(av, &b[p * n..(p + 1) * n], row);
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// Masked logits use this sentinel; any `NEG_INFINITY` entry is treated as
/// excluded and receives probability exactly zero.
pub const MASKED: f64 = f64::NEG_INFINITY;

#[inline]
fn is_masked(v: f64) -> bool {
    v == MASKED
}

/// Numerically stable softmax. Entries equal to [`MASKED`], or whose `allowed`
/// flag is false, get probability exactly 0.
pub fn softmax(logits: &[f64], allowed: Option<&[bool]>, out: &mut [f64]) -> Result<()> {
    let open = |i: usize| !is_masked(logits[i]) && allowed.is_none_or(|a| a[i]);
    let mut max = f64::NEG_INFINITY;
    let mut any = false;
    for (i, &v) in logits.iter().enumerate() {
        if open(i) {
            any = true;
            if v > max {
                max = v;
            }
        }
    }
    if !any {
        return Err(Error::NoUnmaskedEntry);
    }
    let mut sum = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        if open(i) {
            *o = libm::exp(logits[i] - max);
            sum += *o;
        } else {
            *o = 0.0;
        }
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok(())
}

/// `out = log softmax(logits)`; returns the log partition function.
pub fn log_softmax(logits: &[f64], out: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &v in logits {
        sum += libm::exp(v - max);
    }
    let lse = max + libm::log(sum);
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = v - lse;
    }
    lse
}

/// One LSTM step. `w` is `4H x (I + H)` with gate blocks ordered input,
/// forget, candidate, output. Writes `[h; c]` to `out` and, when given, the
/// activations `[i; f; g; o; tanh(c)]` to `cache`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step(
    w: &[f64],
    b: &[f64],
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    out: &mut [f64],
    cache: Option<&mut [f64]>,
) {
    let hidden = h_prev.len();
    let in_dim = x.len();
    let cols = in_dim + hidden;
    let mut gates = alloc::vec![0.0; 4 * hidden];
    for (r, z) in gates.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *z = dot(&row[..in_dim], x) + dot(&row[in_dim..], h_prev) + b[r];
    }
    let (h_out, c_out) = out.split_at_mut(hidden);
    let mut local = [0.0f64; 0];
    let cache: &mut [f64] = match cache {
        Some(c) => c,
        None => &mut local,
    };
    let keep = !cache.is_empty();
    for j in 0..hidden {
        let i = sigmoid(gates[j]);
        let f = sigmoid(gates[hidden + j]);
        let g = tanh(gates[2 * hidden + j]);
        let o = sigmoid(gates[3 * hidden + j]);
        let c = f * c_prev[j] + i * g;
        let tc = tanh(c);
        c_out[j] = c;
        h_out[j] = o * tc;
        if keep {
            cache[j] = i;
            cache[hidden + j] = f;
            cache[2 * hidden + j] = g;
            cache[3 * hidden + j] = o;
            cache[4 * hidden + j] = tc;
        }
    }
}
