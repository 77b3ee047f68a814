use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::{Gradients, ParamId, ParamSet, Shape, Tensor};
use crate::error::{Error, Result};

const PARAM_BIT: u32 = 1 << 31;

/// Handle to a value on a [`Tape`]: either a parameter of the borrowed
/// [`ParamSet`] or a node recorded on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    fn param(id: ParamId) -> Var {
        Var(id.0 as u32 | PARAM_BIT)
    }

    fn node(i: usize) -> Var {
        debug_assert!((i as u32) < PARAM_BIT);
        Var(i as u32)
    }

    fn as_param(self) -> Option<ParamId> {
        (self.0 & PARAM_BIT != 0).then_some(ParamId((self.0 & !PARAM_BIT) as usize))
    }

    fn as_node(self) -> Option<usize> {
        (self.0 & PARAM_BIT == 0).then_some(self.0 as usize)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { w: Var, x: Var, b: Option<Var> },
    MatMul { a: Var, b: Var },
    MatMulT { a: Var, b: Var },
    VecMat { p: Var, m: Var },
    Add(Var, Var),
    AddRow { m: Var, v: Var },
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Slice { a: Var, start: usize },
    Row { m: Var, index: usize },
    StackRows(Vec<Var>),
    Softmax(Var),
    LogSoftmax(Var),
    Lstm { x: Var, state: Var, w: Var, b: Var },
    Nll { logits: Var, target: usize },
    Sum(Var),
    AddScalars(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    aux: Vec<f64>,
}

/// Records operations for reverse-mode differentiation.
///
/// With recording off the tape still computes values (through exactly the same
/// kernels) but keeps no backward information, which is how inference runs.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    record: bool,
}

fn mismatch(op: &'static str, left: Shape, right: Shape) -> Error {
    Error::Shape { op, left, right }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            record: true,
        }
    }

    /// A tape that computes values only.
    pub fn inference(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            record: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param(&self, id: ParamId) -> Var {
        Var::param(id)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, Vec::new())
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match v.as_param() {
            Some(id) => self.params.get(id),
            None => &self.nodes[v.0 as usize].value,
        }
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.value(v).shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.value(v).data()
    }

    fn push(&mut self, value: Tensor, op: Op, aux: Vec<f64>) -> Var {
        let (op, aux) = if self.record {
            (op, aux)
        } else {
            (Op::Leaf, Vec::new())
        };
        self.nodes.push(Node { value, op, aux });
        Var::node(self.nodes.len() - 1)
    }

    fn vec_len(&self, v: Var, op: &'static str) -> Result<usize> {
        match self.shape(v) {
            Shape::Vector(n) => Ok(n),
            s => Err(mismatch(op, s, Shape::Vector(0))),
        }
    }

    /// `W x (+ b)` for a matrix `W` and vector `x`.
    pub fn linear(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var> {
        let ws = self.shape(w);
        let xs = self.shape(x);
        let (rows, cols) = match (ws, xs) {
            (Shape::Matrix(r, c), Shape::Vector(n)) if c == n => (r, c),
            _ => return Err(mismatch("linear", ws, xs)),
        };
        if let Some(b) = b {
            if self.shape(b) != Shape::Vector(rows) {
                return Err(mismatch("linear bias", ws, self.shape(b)));
            }
        }
        let mut out = vec![0.0; rows];
        kernels::matvec(self.data(w), cols, self.data(x), &mut out);
        if let Some(b) = b {
            out.iter_mut().zip(self.data(b)).for_each(|(o, bi)| *o += bi);
        }
        Ok(self.push(Tensor::vector(out), Op::Linear { w, x, b }, Vec::new()))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        self.linear(w, x, None)
    }

    /// Matrix product of two matrices.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n) = match (sa, sb) {
            (Shape::Matrix(m, k), Shape::Matrix(k2, n)) if k == k2 => (m, k, n),
            _ => return Err(mismatch("matmul", sa, sb)),
        };
        let mut out = vec![0.0; m * n];
        kernels::matmul(self.data(a), m, k, self.data(b), n, &mut out);
        let t = Tensor::new(Shape::Matrix(m, n), out)?;
        Ok(self.push(t, Op::MatMul { a, b }, Vec::new()))
    }

    /// `A Bᵀ` for `A: m x k`, `B: n x k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n) = match (sa, sb) {
            (Shape::Matrix(m, k), Shape::Matrix(n, k2)) if k == k2 => (m, k, n),
            _ => return Err(mismatch("matmul_t", sa, sb)),
        };
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = kernels::dot(&ad[i * k..(i + 1) * k], &bd[j * k..(j + 1) * k]);
            }
        }
        let t = Tensor::new(Shape::Matrix(m, n), out)?;
        Ok(self.push(t, Op::MatMulT { a, b }, Vec::new()))
    }

    /// `pᵀ M`: weighted sum of the rows of `M`.
    pub fn vecmat(&mut self, p: Var, m: Var) -> Result<Var> {
        let (sp, sm) = (self.shape(p), self.shape(m));
        let (r, c) = match (sp, sm) {
            (Shape::Vector(n), Shape::Matrix(r, c)) if n == r => (r, c),
            _ => return Err(mismatch("vecmat", sp, sm)),
        };
        let (pd, md) = (self.data(p), self.data(m));
        let mut out = vec![0.0; c];
        for i in 0..r {
            kernels::axpy(pd[i], &md[i * c..(i + 1) * c], &mut out);
        }
        Ok(self.push(Tensor::vector(out), Op::VecMat { p, m }, Vec::new()))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch(op, sa, sb));
        }
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        Tensor::new(sa, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), Vec::new()))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), Vec::new()))
    }

    /// Adds vector `v` to every row of matrix `m`.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (sm, sv) = (self.shape(m), self.shape(v));
        let c = match (sm, sv) {
            (Shape::Matrix(_, c), Shape::Vector(n)) if c == n => c,
            _ => return Err(mismatch("add_row", sm, sv)),
        };
        let vd = self.data(v);
        let out: Vec<f64> = self
            .data(m)
            .iter()
            .enumerate()
            .map(|(i, x)| x + vd[i % c])
            .collect();
        let t = Tensor::new(sm, out)?;
        Ok(self.push(t, Op::AddRow { m, v }, Vec::new()))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.map(a, |x| x * s);
        self.push(t, Op::Scale(a, s), Vec::new())
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value(a);
        Tensor {
            shape: v.shape(),
            data: v.data().iter().map(|x| f(*x)).collect(),
        }
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map(a, kernels::tanh);
        self.push(t, Op::Tanh(a), Vec::new())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map(a, kernels::sigmoid);
        self.push(t, Op::Sigmoid(a), Vec::new())
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            self.vec_len(p, "concat")?;
            out.extend_from_slice(self.data(p));
        }
        if out.is_empty() {
            return Err(Error::Empty("concat"));
        }
        Ok(self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), Vec::new()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.vec_len(a, "slice")?;
        if len == 0 || start + len > n {
            return Err(mismatch("slice", Shape::Vector(n), Shape::Vector(start + len)));
        }
        let t = Tensor::vector(self.data(a)[start..start + len].to_vec());
        Ok(self.push(t, Op::Slice { a, start }, Vec::new()))
    }

    pub fn row(&mut self, m: Var, index: usize) -> Result<Var> {
        let sm = self.shape(m);
        match sm {
            Shape::Matrix(r, _) if index < r => {}
            _ => return Err(mismatch("row", sm, Shape::Vector(index))),
        }
        let t = Tensor::vector(self.value(m).row(index).to_vec());
        Ok(self.push(t, Op::Row { m, index }, Vec::new()))
    }

    /// Stacks equal-length vectors into the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows.first().ok_or(Error::Empty("stack_rows"))?;
        let c = self.vec_len(first, "stack_rows")?;
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if self.shape(r) != Shape::Vector(c) {
                return Err(mismatch("stack_rows", Shape::Vector(c), self.shape(r)));
            }
            out.extend_from_slice(self.data(r));
        }
        let t = Tensor::new(Shape::Matrix(rows.len(), c), out)?;
        Ok(self.push(t, Op::StackRows(rows.to_vec()), Vec::new()))
    }

    /// Softmax over a vector. `allowed[i] == false` (or a
    /// [`kernels::MASKED`] logit) forces probability exactly 0.
    pub fn softmax(&mut self, a: Var, allowed: Option<&[bool]>) -> Result<Var> {
        let n = self.vec_len(a, "softmax")?;
        if let Some(al) = allowed {
            if al.len() != n {
                return Err(Error::MaskLength {
                    got: al.len(),
                    expected: n,
                });
            }
        }
        let mut out = vec![0.0; n];
        kernels::softmax(self.data(a), allowed, &mut out)?;
        Ok(self.push(Tensor::vector(out), Op::Softmax(a), Vec::new()))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let n = self.vec_len(a, "log_softmax")?;
        let mut out = vec![0.0; n];
        kernels::log_softmax(self.data(a), &mut out);
        Ok(self.push(Tensor::vector(out), Op::LogSoftmax(a), Vec::new()))
    }

    /// One LSTM step over a packed `[h; c]` state. Returns the new packed state.
    pub fn lstm(&mut self, x: Var, state: Var, w: Var, b: Var) -> Result<Var> {
        let in_dim = self.vec_len(x, "lstm input")?;
        let two_h = self.vec_len(state, "lstm state")?;
        let hidden = two_h / 2;
        let ws = self.shape(w);
        if two_h % 2 != 0 || ws != Shape::Matrix(4 * hidden, in_dim + hidden) {
            return Err(mismatch("lstm weights", ws, Shape::Matrix(4 * hidden, in_dim + hidden)));
        }
        if self.shape(b) != Shape::Vector(4 * hidden) {
            return Err(mismatch("lstm bias", self.shape(b), Shape::Vector(4 * hidden)));
        }
        let mut out = vec![0.0; two_h];
        let mut cache = if self.record {
            vec![0.0; 5 * hidden]
        } else {
            Vec::new()
        };
        {
            let s = self.data(state);
            kernels::lstm_step(
                self.data(w),
                self.data(b),
                self.data(x),
                &s[..hidden],
                &s[hidden..],
                &mut out,
                self.record.then_some(cache.as_mut_slice()),
            );
        }
        Ok(self.push(Tensor::vector(out), Op::Lstm { x, state, w, b }, cache))
    }

    /// `-log softmax(logits)[target]` as a scalar.
    pub fn nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = self.vec_len(logits, "nll")?;
        if target >= n {
            return Err(Error::TokenOutOfRange(target));
        }
        let mut logp = vec![0.0; n];
        kernels::log_softmax(self.data(logits), &mut logp);
        let loss = -logp[target];
        let probs = if self.record {
            logp.iter().map(|v| libm::exp(*v)).collect()
        } else {
            Vec::new()
        };
        Ok(self.push(Tensor::scalar(loss), Op::Nll { logits, target }, probs))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), Vec::new())
    }

    /// Sum of scalar vars.
    pub fn add_scalars(&mut self, xs: &[Var]) -> Result<Var> {
        let mut s = 0.0;
        for &x in xs {
            if self.shape(x) != Shape::Vector(1) {
                return Err(Error::NotScalar(self.shape(x)));
            }
            s += self.data(x)[0];
        }
        Ok(self.push(Tensor::scalar(s), Op::AddScalars(xs.to_vec()), Vec::new()))
    }

    /// Reverse pass from scalar `loss`, accumulating into `grads`.
    ///
    /// Nodes are visited in exact reverse recording order. Parameters the loss
    /// does not reach keep whatever `grads` already held (zero for fresh
    /// accumulators).
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Result<()> {
        let shape = self.shape(loss);
        if shape != Shape::Vector(1) {
            return Err(Error::NotScalar(shape));
        }
        if !self.record {
            return Err(Error::Config("backward on a non-recording tape".into()));
        }
        let Some(root) = loss.as_node() else {
            grads.buf(loss.as_param().unwrap())[0] += 1.0;
            return Ok(());
        };
        let mut sink = Sink {
            nodes: vec![None; root + 1],
            params: grads,
            tape: self,
        };
        sink.nodes[root] = Some(vec![1.0]);
        for i in (0..=root).rev() {
            let Some(g) = sink.nodes[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            self.backward_node(node, &g, &mut sink);
        }
        Ok(())
    }

    fn backward_node(&self, node: &Node, g: &[f64], sink: &mut Sink<'_, '_, 'p>) {
        match &node.op {
            Op::Leaf => {}
            Op::Linear { w, x, b } => {
                let cols = self.value(*x).len();
                kernels::outer_acc(g, self.data(*x), sink.buf(*w));
                kernels::matvec_t_acc(self.data(*w), cols, g, sink.buf(*x));
                if let Some(b) = b {
                    kernels::axpy(1.0, g, sink.buf(*b));
                }
            }
            Op::MatMul { a, b } => {
                let (m, k) = self.shape(*a).as_matrix();
                let n = self.value(*b).cols();
                let (ad, bd) = (self.data(*a), self.data(*b));
                {
                    let ga = sink.buf(*a);
                    for i in 0..m {
                        for p in 0..k {
                            ga[i * k + p] += kernels::dot(&g[i * n..(i + 1) * n], &bd[p * n..(p + 1) * n]);
                        }
                    }
                }
                let gb = sink.buf(*b);
                for i in 0..m {
                    for p in 0..k {
                        kernels::axpy(ad[i * k + p], &g[i * n..(i + 1) * n], &mut gb[p * n..(p + 1) * n]);
                    }
                }
            }
            Op::MatMulT { a, b } => {
                let (m, k) = self.shape(*a).as_matrix();
                let n = self.value(*b).rows();
                let (ad, bd) = (self.data(*a), self.data(*b));
                {
                    let ga = sink.buf(*a);
                    for i in 0..m {
                        for j in 0..n {
                            kernels::axpy(g[i * n + j], &bd[j * k..(j + 1) * k], &mut ga[i * k..(i + 1) * k]);
                        }
                    }
                }
                let gb = sink.buf(*b);
                for i in 0..m {
                    for j in 0..n {
                        kernels::axpy(g[i * n + j], &ad[i * k..(i + 1) * k], &mut gb[j * k..(j + 1) * k]);
                    }
                }
            }
            Op::VecMat { p, m } => {
                let c = self.value(*m).cols();
                let (pd, md) = (self.data(*p), self.data(*m));
                {
                    let gp = sink.buf(*p);
                    for (r, gpr) in gp.iter_mut().enumerate() {
                        *gpr += kernels::dot(g, &md[r * c..(r + 1) * c]);
                    }
                }
                let gm = sink.buf(*m);
                for (r, pr) in pd.iter().enumerate() {
                    kernels::axpy(*pr, g, &mut gm[r * c..(r + 1) * c]);
                }
            }
            Op::Add(a, b) => {
                kernels::axpy(1.0, g, sink.buf(*a));
                kernels::axpy(1.0, g, sink.buf(*b));
            }
            Op::AddRow { m, v } => {
                kernels::axpy(1.0, g, sink.buf(*m));
                let gv = sink.buf(*v);
                let c = gv.len();
                for row in g.chunks(c) {
                    kernels::axpy(1.0, row, gv);
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                {
                    let ga = sink.buf(*a);
                    for i in 0..g.len() {
                        ga[i] += g[i] * bd[i];
                    }
                }
                let gb = sink.buf(*b);
                for i in 0..g.len() {
                    gb[i] += g[i] * ad[i];
                }
            }
            Op::Scale(a, s) => kernels::axpy(*s, g, sink.buf(*a)),
            Op::Tanh(a) => {
                let y = node.value.data();
                let ga = sink.buf(*a);
                for i in 0..g.len() {
                    ga[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let ga = sink.buf(*a);
                for i in 0..g.len() {
                    ga[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    kernels::axpy(1.0, &g[off..off + n], sink.buf(*p));
                    off += n;
                }
            }
            Op::Slice { a, start } => {
                let ga = sink.buf(*a);
                kernels::axpy(1.0, g, &mut ga[*start..*start + g.len()]);
            }
            Op::Row { m, index } => {
                let c = g.len();
                let gm = sink.buf(*m);
                kernels::axpy(1.0, g, &mut gm[index * c..(index + 1) * c]);
            }
            Op::StackRows(rows) => {
                let c = g.len() / rows.len();
                for (i, r) in rows.iter().enumerate() {
                    kernels::axpy(1.0, &g[i * c..(i + 1) * c], sink.buf(*r));
                }
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let yg = kernels::dot(y, g);
                let ga = sink.buf(*a);
                for i in 0..g.len() {
                    ga[i] += y[i] * (g[i] - yg);
                }
            }
            Op::LogSoftmax(a) => {
                let y = node.value.data();
                let gs: f64 = g.iter().sum();
                let ga = sink.buf(*a);
                for i in 0..g.len() {
                    ga[i] += g[i] - libm::exp(y[i]) * gs;
                }
            }
            Op::Lstm { x, state, w, b } => self.backward_lstm(node, g, [*x, *state, *w, *b], sink),
            Op::Nll { logits, target } => {
                let ga = sink.buf(*logits);
                for (i, p) in node.aux.iter().enumerate() {
                    let onehot = if i == *target { 1.0 } else { 0.0 };
                    ga[i] += g[0] * (p - onehot);
                }
            }
            Op::Sum(a) => {
                for v in sink.buf(*a) {
                    *v += g[0];
                }
            }
            Op::AddScalars(xs) => {
                for x in xs {
                    sink.buf(*x)[0] += g[0];
                }
            }
        }
    }

    fn backward_lstm(&self, node: &Node, g: &[f64], [x, state, w, b]: [Var; 4], sink: &mut Sink<'_, '_, 'p>) {
        let hidden = g.len() / 2;
        let (dh, dc_next) = g.split_at(hidden);
        let cache = &node.aux;
        let c_prev = &self.data(state)[hidden..];
        let mut dz = vec![0.0; 4 * hidden];
        let mut dc_prev = vec![0.0; hidden];
        for j in 0..hidden {
            let i = cache[j];
            let f = cache[hidden + j];
            let gg = cache[2 * hidden + j];
            let o = cache[3 * hidden + j];
            let tc = cache[4 * hidden + j];
            let d_o = dh[j] * tc;
            let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
            dz[j] = dc * gg * i * (1.0 - i);
            dz[hidden + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * hidden + j] = dc * i * (1.0 - gg * gg);
            dz[3 * hidden + j] = d_o * o * (1.0 - o);
            dc_prev[j] = dc * f;
        }
        let xd = self.data(x);
        let hd = &self.data(state)[..hidden];
        let in_dim = xd.len();
        let cols = in_dim + hidden;
        let wd = self.data(w);
        {
            let gw = sink.buf(w);
            for (r, dzr) in dz.iter().enumerate() {
                if *dzr != 0.0 {
                    let row = &mut gw[r * cols..(r + 1) * cols];
                    kernels::axpy(*dzr, xd, &mut row[..in_dim]);
                    kernels::axpy(*dzr, hd, &mut row[in_dim..]);
                }
            }
        }
        kernels::axpy(1.0, &dz, sink.buf(b));
        {
            let gx = sink.buf(x);
            for (r, dzr) in dz.iter().enumerate() {
                if *dzr != 0.0 {
                    kernels::axpy(*dzr, &wd[r * cols..r * cols + in_dim], gx);
                }
            }
        }
        let gs = sink.buf(state);
        {
            let (gh, gc) = gs.split_at_mut(hidden);
            for (r, dzr) in dz.iter().enumerate() {
                if *dzr != 0.0 {
                    kernels::axpy(*dzr, &wd[r * cols + in_dim..(r + 1) * cols], gh);
                }
            }
            kernels::axpy(1.0, &dc_prev, gc);
        }
    }
}

struct Sink<'s, 'g, 'p> {
    nodes: Vec<Option<Vec<f64>>>,
    params: &'g mut Gradients,
    tape: &'s Tape<'p>,
}

impl Sink<'_, '_, '_> {
    fn buf(&mut self, v: Var) -> &mut [f64] {
        match v.as_param() {
            Some(id) => self.params.buf(id),
            None => {
                let i = v.0 as usize;
                let len = self.tape.nodes[i].value.len();
                self.nodes[i].get_or_insert_with(|| vec![0.0; len])
            }
        }
    }
}
