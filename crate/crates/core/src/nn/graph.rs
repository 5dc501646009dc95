use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::{ParamId, ParamStore, Scalar};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Gather { table: Var, ids: Vec<u32> },
    Conv1d { x: Var, w: Var, b: Var, kernel: usize },
    MaxPool { x: Var, argmax: Vec<usize> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    CrossEntropy { logits: Var, targets: Vec<u32>, mask: Vec<bool>, probs: Vec<T>, count: usize },
    Dice { p: Var, y: Vec<T>, gamma: T },
    Sum(Var),
    Mean(Var),
}

struct Node<T> {
    rows: usize,
    cols: usize,
    /// Empty for parameters, whose value lives in the store.
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients of one backward pass, keyed by parameter.
#[derive(Debug, Clone, Default)]
pub struct Gradients<T> {
    grads: Vec<(ParamId, Vec<T>)>,
}

impl<T> Gradients<T> {
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[T])> + '_ {
        self.grads.iter().map(|(id, g)| (*id, g.as_slice()))
    }

    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.grads.iter().find(|(i, _)| *i == id).map(|(_, g)| g.as_slice())
    }
}

/// Records a forward computation over parameters borrowed from a store.
pub struct Graph<'a, T: Scalar> {
    store: &'a ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape { op, detail: format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1) }
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new(store: &'a ParamStore<T>) -> Self {
        Self { store, nodes: Vec::new(), param_vars: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'a ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        let needs_grad = match op {
            Op::Input => false,
            Op::Param(_) => true,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { rows, cols, value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[T] {
        let n = &self.nodes[v.0];
        match n.op {
            Op::Param(id) => &self.store.get(id).data,
            _ => &n.value,
        }
    }

    /// First element, for `1 x 1` results.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::Shape { op: "input", detail: format!("{rows}x{cols} from {} values", data.len()) });
        }
        Ok(self.push(rows, cols, data, Op::Input, &[]))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let t = self.store.get(id);
        let v = self.push(t.rows(), t.cols(), Vec::new(), Op::Param(id), &[]);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        Ok(self.push(m, n, out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a * b^T`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (n, k2)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul_nt", (m, k), (n, k2)));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_nt_acc(self.value(a), self.value(b), &mut out, m, k, n);
        Ok(self.push(m, n, out, Op::MatMulNt(a, b), &[a, b]))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Vec<T>> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        Ok(self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        let (r, c) = self.shape(a);
        Ok(self.push(r, c, out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        let (r, c) = self.shape(a);
        Ok(self.push(r, c, out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds the `1 x n` (or any `n`-element) vector `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = self.shape(x);
        let bn = self.value(b).len();
        if bn != n {
            return Err(shape_err("add_row", (m, n), self.shape(b)));
        }
        let bias = self.value(b);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(n.max(1)) {
            for (o, &bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        Ok(self.push(m, n, out, Op::AddRow(x, b), &[x, b]))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let (r, cols) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v * c).collect();
        self.push(r, cols, out, Op::Scale(x, c), &[x])
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        self.push(r, c, out, op, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(T::zero()), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| T::one() / (T::one() + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (k, c) = (T::of(SQRT_2_OVER_PI), T::of(GELU_C));
        let half = T::of(0.5);
        self.unary(x, |v| half * v * (T::one() + (k * (v + c * v * v * v)).tanh()), Op::Gelu(x))
    }

    /// Row-wise softmax, stabilized by subtracting the row max.
    pub fn softmax(&mut self, x: Var) -> Var {
        self.masked_softmax(x, None).expect("unmasked softmax cannot fail")
    }

    /// Row-wise softmax where columns with `keep[j] == false` get probability
    /// exactly zero.
    pub fn masked_softmax(&mut self, x: Var, keep: Option<&[bool]>) -> Result<Var> {
        let (m, n) = self.shape(x);
        if let Some(k) = keep {
            if k.len() != n {
                return Err(Error::Shape { op: "softmax", detail: format!("{m}x{n} with mask of {}", k.len()) });
            }
        }
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(n.max(1)) {
            softmax_in_place(row, keep);
        }
        Ok(self.push(m, n, out, Op::Softmax(x), &[x]))
    }

    /// Per-row layer normalization with learned gain and bias of width `n`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let (m, n) = self.shape(x);
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(shape_err("layer_norm", (m, n), self.shape(gain)));
        }
        let nt = T::of(n as f64);
        let mut xhat = vec![T::zero(); m * n];
        let mut inv_std = vec![T::zero(); m];
        let xv = self.value(x);
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nt;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
            let is = T::one() / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..n {
                xhat[i * n + j] = (row[j] - mean) * is;
            }
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let out = xhat.iter().enumerate().map(|(idx, &h)| h * g[idx % n] + b[idx % n]).collect();
        Ok(self.push(m, n, out, Op::LayerNorm { x, gain, bias, xhat, inv_std }, &[x, gain, bias]))
    }

    /// Row lookup: output row `r` is `table[ids[r]]`.
    pub fn gather(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let (v, d) = self.shape(table);
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= v) {
            return Err(Error::TargetOutOfRange { target: bad as usize, classes: v });
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tv[i as usize * d..(i as usize + 1) * d]);
        }
        Ok(self.push(ids.len(), d, out, Op::Gather { table, ids: ids.to_vec() }, &[table]))
    }

    /// 1-D convolution over rows with "same" padding: output length equals
    /// input length for any kernel size, with `(k - 1) / 2` zero rows before
    /// and the rest after. `w` is `[k * c_in, c_out]` with rows ordered by
    /// kernel offset, then input channel; `b` has `c_out` elements.
    pub fn conv1d_same(&mut self, x: Var, w: Var, b: Var, kernel: usize) -> Result<Var> {
        let (len, cin) = self.shape(x);
        let (wr, cout) = self.shape(w);
        if kernel == 0 || wr != kernel * cin || self.value(b).len() != cout {
            return Err(Error::Shape {
                op: "conv1d",
                detail: format!("input {len}x{cin}, kernel {kernel}, weight {wr}x{cout}, bias {}", self.value(b).len()),
            });
        }
        let left = (kernel - 1) / 2;
        let mut out = vec![T::zero(); len * cout];
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        for row in out.chunks_mut(cout) {
            row.copy_from_slice(bv);
        }
        for j in 0..kernel {
            let Some((t0, t1)) = conv_range(len, left, j) else { continue };
            let s0 = t0 + j - left;
            let rows = t1 - t0;
            matmul_acc(
                &xv[s0 * cin..(s0 + rows) * cin],
                &wv[j * cin * cout..(j + 1) * cin * cout],
                &mut out[t0 * cout..t1 * cout],
                rows,
                cin,
                cout,
            );
        }
        Ok(self.push(len, cout, out, Op::Conv1d { x, w, b, kernel }, &[x, w, b]))
    }

    /// Column-wise max over rows: `[L, C] -> [1, C]`.
    pub fn max_over_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.shape(x);
        if m == 0 {
            return Err(Error::Shape { op: "max_over_rows", detail: format!("{m}x{n}") });
        }
        let xv = self.value(x);
        let mut out = xv[..n].to_vec();
        let mut argmax = vec![0; n];
        for i in 1..m {
            for j in 0..n {
                if xv[i * n + j] > out[j] {
                    out[j] = xv[i * n + j];
                    argmax[j] = i;
                }
            }
        }
        Ok(self.push(1, n, out, Op::MaxPool { x, argmax }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = parts.first().map(|&p| self.shape(p).0).unwrap_or(0);
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).0 != m) {
            return Err(shape_err("concat_cols", self.shape(parts[0]), self.shape(bad)));
        }
        let n: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(m, n, out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts.first().map(|&p| self.shape(p).1).unwrap_or(0);
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).1 != n) {
            return Err(shape_err("concat_rows", self.shape(parts[0]), self.shape(bad)));
        }
        let m: usize = parts.iter().map(|&p| self.shape(p).0).sum();
        let mut out = Vec::with_capacity(m * n);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(m, n, out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let (m, n) = self.shape(x);
        if start + width > n {
            return Err(Error::Shape {
                op: "slice_cols",
                detail: format!("{m}x{n} columns {start}..{}", start + width),
            });
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(m * width);
        for i in 0..m {
            out.extend_from_slice(&xv[i * n + start..i * n + start + width]);
        }
        Ok(self.push(m, width, out, Op::SliceCols { x, start }, &[x]))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, count: usize) -> Result<Var> {
        let (m, n) = self.shape(x);
        if start + count > m {
            return Err(Error::Shape { op: "slice_rows", detail: format!("{m}x{n} rows {start}..{}", start + count) });
        }
        let out = self.value(x)[start * n..(start + count) * n].to_vec();
        Ok(self.push(count, n, out, Op::SliceRows { x, start }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        self.push(1, 1, vec![s], Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1);
        let s = self.value(x).iter().copied().sum::<T>() / T::of(n as f64);
        self.push(1, 1, vec![s], Op::Mean(x), &[x])
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, over rows with `mask[r]`. Zero when every row is masked out.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u32], mask: &[bool]) -> Result<Var> {
        let (m, c) = self.shape(logits);
        if targets.len() != m || mask.len() != m {
            return Err(Error::Shape {
                op: "cross_entropy",
                detail: format!("{m}x{c} logits, {} targets, {} mask", targets.len(), mask.len()),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t as usize >= c) {
            return Err(Error::TargetOutOfRange { target: bad as usize, classes: c });
        }
        let mut probs = self.value(logits).to_vec();
        let mut total = T::zero();
        let mut count = 0;
        for (i, row) in probs.chunks_mut(c.max(1)).enumerate() {
            let lse = log_sum_exp(row);
            if mask[i] {
                total += lse - row[targets[i] as usize];
                count += 1;
            }
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        let loss = if count == 0 { T::zero() } else { total / T::of(count as f64) };
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), mask: mask.to_vec(), probs, count };
        Ok(self.push(1, 1, vec![loss], op, &[logits]))
    }

    /// Smoothed soft-dice loss averaged over rows:
    /// `1 - (2 sum(p*y) + gamma) / (sum(p^2) + sum(y^2) + gamma)`.
    pub fn dice(&mut self, p: Var, y: &[T], gamma: T) -> Result<Var> {
        if !(gamma > T::zero()) {
            return Err(Error::InvalidGamma(gamma.as_f64()));
        }
        let (m, c) = self.shape(p);
        if y.len() != m * c {
            return Err(Error::Shape { op: "dice", detail: format!("{m}x{c} predictions, {} labels", y.len()) });
        }
        let pv = self.value(p);
        let mut total = T::zero();
        for i in 0..m {
            let (num, den) = dice_terms(&pv[i * c..(i + 1) * c], &y[i * c..(i + 1) * c], gamma);
            total += T::one() - num / den;
        }
        let loss = total / T::of(m.max(1) as f64);
        Ok(self.push(1, 1, vec![loss], Op::Dice { p, y: y.to_vec(), gamma }, &[p]))
    }

    /// Reverse pass from `output`, seeded with ones.
    pub fn backward(&self, output: Var) -> Gradients<T> {
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(vec![T::one(); self.value(output).len()]);
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Param(_)) {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            self.backward_node(idx, &dy, &mut grads);
        }
        let mut out = Gradients::default();
        for (pid, var) in self.param_vars.iter().enumerate() {
            if let Some(v) = var {
                if let Some(g) = grads[v.0].take() {
                    out.grads.push((ParamId(pid), g));
                }
            }
        }
        out
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let len = self.nodes[v.0].rows * self.nodes[v.0].cols;
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn backward_node(&self, idx: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let ((m, k), n) = (self.shape(*a), node.cols);
                if let Some(ga) = self.grad_buf(grads, *a) {
                    matmul_nt_acc(dy, self.value(*b), ga, m, n, k);
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    matmul_tn_acc(self.value(*a), dy, gb, k, m, n);
                }
            }
            Op::MatMulNt(a, b) => {
                let ((m, k), n) = (self.shape(*a), node.cols);
                if let Some(ga) = self.grad_buf(grads, *a) {
                    matmul_acc(dy, self.value(*b), ga, m, n, k);
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    matmul_tn_acc(dy, self.value(*a), gb, n, m, k);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(g) = self.grad_buf(grads, v) {
                        add_into(g, dy);
                    }
                }
            }
            Op::AddRow(x, b) => {
                if let Some(g) = self.grad_buf(grads, *x) {
                    add_into(g, dy);
                }
                if let Some(g) = self.grad_buf(grads, *b) {
                    for row in dy.chunks(node.cols.max(1)) {
                        add_into(g, row);
                    }
                }
            }
            Op::Mul(a, b) => {
                if let Some(g) = self.grad_buf(grads, *a) {
                    for ((gv, &d), &bv) in g.iter_mut().zip(dy).zip(self.value(*b)) {
                        *gv += d * bv;
                    }
                }
                if let Some(g) = self.grad_buf(grads, *b) {
                    for ((gv, &d), &av) in g.iter_mut().zip(dy).zip(self.value(*a)) {
                        *gv += d * av;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(g) = self.grad_buf(grads, *x) {
                    for (gv, &d) in g.iter_mut().zip(dy) {
                        *gv += d * *c;
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(g) = self.grad_buf(grads, *x) {
                    for ((gv, &d), &yv) in g.iter_mut().zip(dy).zip(y) {
                        if yv > T::zero() {
                            *gv += d;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(g) = self.grad_buf(grads, *x) {
                    for ((gv, &d), &yv) in g.iter_mut().zip(dy).zip(y) {
                        *gv += d * yv * (T::one() - yv);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(g) = self.grad_buf(grads, *x) {
                    for ((gv, &d), &yv) in g.iter_mut().zip(dy).zip(y) {
                        *gv += d * (T::one() - yv * yv);
                    }
                }
            }
            Op::Gelu(x) => {
                let (k, c, half) = (T::of(SQRT_2_OVER_PI), T::of(GELU_C), T::of(0.5));
                let three = T::of(3.0);
                let xv = self.value(*x);
                if let Some(g) = self.grad_buf(grads, *x) {
                    for ((gv, &d), &v) in g.iter_mut().zip(dy).zip(xv) {
                        let t = (k * (v + c * v * v * v)).tanh();
                        let dt = (T::one() - t * t) * k * (T::one() + three * c * v * v);
                        *gv += d * (half * (T::one() + t) + half * v * dt);
                    }
                }
            }
            Op::Softmax(x) => {
                let n = node.cols.max(1);
                if let Some(g) = self.grad_buf(grads, *x) {
                    for ((grow, drow), yrow) in g.chunks_mut(n).zip(dy.chunks(n)).zip(y.chunks(n)) {
                        let dot: T = drow.iter().zip(yrow).map(|(&d, &p)| d * p).sum();
                        for ((gv, &d), &p) in grow.iter_mut().zip(drow).zip(yrow) {
                            *gv += p * (d - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let n = node.cols;
                let gv = self.value(*gain);
                if let Some(g) = self.grad_buf(grads, *gain) {
                    for (drow, hrow) in dy.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            g[j] += drow[j] * hrow[j];
                        }
                    }
                }
                if let Some(g) = self.grad_buf(grads, *bias) {
                    for drow in dy.chunks(n) {
                        add_into(g, drow);
                    }
                }
                if let Some(g) = self.grad_buf(grads, *x) {
                    let nt = T::of(n as f64);
                    let mut dxhat = vec![T::zero(); n];
                    for (i, (drow, hrow)) in dy.chunks(n).zip(xhat.chunks(n)).enumerate() {
                        for j in 0..n {
                            dxhat[j] = drow[j] * gv[j];
                        }
                        let mean_d = dxhat.iter().copied().sum::<T>() / nt;
                        let mean_dh = dxhat.iter().zip(hrow).map(|(&a, &b)| a * b).sum::<T>() / nt;
                        for j in 0..n {
                            g[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - hrow[j] * mean_dh);
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                let d = node.cols;
                if let Some(g) = self.grad_buf(grads, *table) {
                    for (r, &i) in ids.iter().enumerate() {
                        add_into(&mut g[i as usize * d..(i as usize + 1) * d], &dy[r * d..(r + 1) * d]);
                    }
                }
            }
            Op::Conv1d { x, w, b, kernel } => {
                let (len, cin) = self.shape(*x);
                let cout = node.cols;
                let left = (kernel - 1) / 2;
                if let Some(g) = self.grad_buf(grads, *b) {
                    for row in dy.chunks(cout) {
                        add_into(g, row);
                    }
                }
                let (xv, wv) = (self.value(*x), self.value(*w));
                if let Some(g) = self.grad_buf(grads, *w) {
                    for j in 0..*kernel {
                        let Some((t0, t1)) = conv_range(len, left, j) else { continue };
                        let s0 = t0 + j - left;
                        let rows = t1 - t0;
                        matmul_tn_acc(
                            &xv[s0 * cin..(s0 + rows) * cin],
                            &dy[t0 * cout..t1 * cout],
                            &mut g[j * cin * cout..(j + 1) * cin * cout],
                            cin,
                            rows,
                            cout,
                        );
                    }
                }
                if let Some(g) = self.grad_buf(grads, *x) {
                    for j in 0..*kernel {
                        let Some((t0, t1)) = conv_range(len, left, j) else { continue };
                        let s0 = t0 + j - left;
                        let rows = t1 - t0;
                        matmul_nt_acc(
                            &dy[t0 * cout..t1 * cout],
                            &wv[j * cin * cout..(j + 1) * cin * cout],
                            &mut g[s0 * cin..(s0 + rows) * cin],
                            rows,
                            cout,
                            cin,
                        );
                    }
                }
            }
            Op::MaxPool { x, argmax } => {
                let n = node.cols;
                if let Some(g) = self.grad_buf(grads, *x) {
                    for (j, &i) in argmax.iter().enumerate() {
                        g[i * n + j] += dy[j];
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = (node.rows, node.cols);
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    if let Some(g) = self.grad_buf(grads, p) {
                        for i in 0..m {
                            add_into(&mut g[i * c..(i + 1) * c], &dy[i * n + offset..i * n + offset + c]);
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if let Some(g) = self.grad_buf(grads, p) {
                        add_into(g, &dy[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::SliceCols { x, start } => {
                let (m, w) = (node.rows, node.cols);
                let n = self.shape(*x).1;
                if let Some(g) = self.grad_buf(grads, *x) {
                    for i in 0..m {
                        add_into(&mut g[i * n + start..i * n + start + w], &dy[i * w..(i + 1) * w]);
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let n = node.cols;
                if let Some(g) = self.grad_buf(grads, *x) {
                    add_into(&mut g[start * n..(start + node.rows) * n], dy);
                }
            }
            Op::CrossEntropy { logits, targets, mask, probs, count } => {
                if *count == 0 {
                    return;
                }
                let c = self.shape(*logits).1;
                let scale = dy[0] / T::of(*count as f64);
                if let Some(g) = self.grad_buf(grads, *logits) {
                    for i in 0..targets.len() {
                        if !mask[i] {
                            continue;
                        }
                        for j in 0..c {
                            g[i * c + j] += scale * probs[i * c + j];
                        }
                        g[i * c + targets[i] as usize] -= scale;
                    }
                }
            }
            Op::Dice { p, y: labels, gamma } => {
                let (m, c) = self.shape(*p);
                let pv = self.value(*p);
                let scale = dy[0] / T::of(m.max(1) as f64);
                let two = T::of(2.0);
                if let Some(g) = self.grad_buf(grads, *p) {
                    for i in 0..m {
                        let (prow, yrow) = (&pv[i * c..(i + 1) * c], &labels[i * c..(i + 1) * c]);
                        let (num, den) = dice_terms(prow, yrow, *gamma);
                        for j in 0..c {
                            g[i * c + j] += scale * (two * num * prow[j] / (den * den) - two * yrow[j] / den);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(g) = self.grad_buf(grads, *x) {
                    for gv in g.iter_mut() {
                        *gv += dy[0];
                    }
                }
            }
            Op::Mean(x) => {
                let n = self.value(*x).len().max(1);
                let d = dy[0] / T::of(n as f64);
                if let Some(g) = self.grad_buf(grads, *x) {
                    for gv in g.iter_mut() {
                        *gv += d;
                    }
                }
            }
        }
    }
}

/// Output rows `t0..t1` that read an in-range input row at kernel offset `j`.
fn conv_range(len: usize, left: usize, j: usize) -> Option<(usize, usize)> {
    let t0 = left.saturating_sub(j);
    let t1 = (len + left).saturating_sub(j).min(len);
    (t0 < t1).then_some((t0, t1))
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T], keep: Option<&[bool]>) {
    let kept = |j: usize| keep.is_none_or(|k| k[j]);
    let max = row.iter().enumerate().filter(|(j, _)| kept(*j)).map(|(_, &v)| v).fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (j, v) in row.iter_mut().enumerate() {
        *v = if kept(j) { (*v - max).exp() } else { T::zero() };
        total += *v;
    }
    if total > T::zero() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

fn dice_terms<T: Scalar>(p: &[T], y: &[T], gamma: T) -> (T, T) {
    let two = T::of(2.0);
    let inter: T = p.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let pp: T = p.iter().map(|&a| a * a).sum();
    let yy: T = y.iter().map(|&b| b * b).sum();
    (two * inter + gamma, pp + yy + gamma)
}
