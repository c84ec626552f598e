use std::collections::HashMap;

use super::kernels;
use super::param::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        /// normalized input, per row
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<f64>,
        count: usize,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation tape. Nodes are appended in evaluation order, so reverse
/// index order is a valid topological order for backprop.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: HashMap<ParamId, Var>,
}

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    t.dims2()
        .ok_or_else(|| Error::shape(op, format!("expected a matrix, got shape {:?}", t.shape())))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; no gradient is propagated into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input leaf whose gradient is tracked.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Brings a stored parameter into the graph. Repeated calls return the
    /// same node so gradients from every use accumulate in one place.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.input(store.get(id).value.clone());
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` call with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.value(a), "matmul")?;
        let (k2, n) = dims2(self.value(b), "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg, "matmul")
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.value(a), "matmul_bt")?;
        let (n, k2) = dims2(self.value(b), "matmul_bt")?;
        if k != k2 {
            return Err(Error::shape("matmul_bt", format!("{m}x{k} · ({n}x{k2})ᵀ")));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_bt_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        self.push(Tensor::new(&[m, n], out)?, Op::MatMulBt(a, b), rg, "matmul_bt")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("add", format!("{:?} + {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape(), data)?;
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Add(a, b), rg, "add")
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = dims2(self.value(x), "add_row")?;
        let b = self.value(bias);
        if b.len() != n {
            return Err(Error::shape("add_row", format!("{m}x{n} + {:?}", b.shape())));
        }
        let b = b.data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_exact_mut(n) {
            kernels::add_assign(row, &b);
        }
        let rg = self.rg(&[x, bias]);
        self.push(Tensor::new(&[m, n], data)?, Op::AddRow(x, bias), rg, "add_row")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("mul", format!("{:?} * {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape(), data)?;
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Mul(a, b), rg, "mul")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let t = self.value(x);
        let t = Tensor::new(t.shape(), t.data().iter().map(|v| v * s).collect())?;
        let rg = self.rg(&[x]);
        self.push(t, Op::Scale(x, s), rg, "scale")
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let t = Tensor::new(t.shape(), t.data().iter().map(|&v| kernels::gelu(v)).collect())?;
        let rg = self.rg(&[x]);
        self.push(t, Op::Gelu(x), rg, "gelu")
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, false)
    }

    /// Row softmax with entries above the diagonal masked out.
    pub fn softmax_rows_causal(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, true)
    }

    fn softmax_impl(&mut self, x: Var, causal: bool) -> Result<Var> {
        let (m, n) = dims2(self.value(x), "softmax_rows")?;
        let mut data = self.value(x).data().to_vec();
        kernels::softmax_rows(&mut data, m, n, causal);
        let rg = self.rg(&[x]);
        self.push(Tensor::new(&[m, n], data)?, Op::Softmax(x), rg, "softmax_rows")
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (m, n) = dims2(self.value(x), "layer_norm")?;
        let (g, b) = (self.value(gain), self.value(bias));
        if g.len() != n || b.len() != n {
            return Err(Error::shape(
                "layer_norm",
                format!("row width {n}, gain {:?}, bias {:?}", g.shape(), b.shape()),
            ));
        }
        let (g, b) = (g.data().to_vec(), b.data().to_vec());
        let xs = self.value(x).data();
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xs[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + eps).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mean) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = g[j] * h + b[j];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        };
        self.push(Tensor::new(&[m, n], out)?, op, rg, "layer_norm")
    }

    /// Selects rows of `table` by id.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = dims2(self.value(table), "gather")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape("gather", format!("id {bad} out of range for {v} rows")));
        }
        let t = self.value(table);
        let data = ids.iter().flat_map(|&i| t.row(i).iter().copied()).collect();
        let rg = self.rg(&[table]);
        let op = Op::Gather {
            table,
            ids: ids.to_vec(),
        };
        self.push(Tensor::new(&[ids.len(), d], data)?, op, rg, "gather")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = dims2(self.value(parts[0]), "concat_rows")?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = dims2(self.value(p), "concat_rows")?;
            if c != n {
                return Err(Error::shape("concat_rows", format!("widths {n} and {c}")));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        self.push(Tensor::new(&[rows, n], data)?, Op::ConcatRows(parts.to_vec()), rg, "concat_rows")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = dims2(self.value(parts[0]), "concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = dims2(self.value(p), "concat_cols")?;
            if r != m {
                return Err(Error::shape("concat_cols", format!("heights {m} and {r}")));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let rg = self.rg(parts);
        self.push(Tensor::new(&[m, n], data)?, Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = dims2(self.value(x), "slice_rows")?;
        if start + len > m {
            return Err(Error::shape("slice_rows", format!("rows {start}..{} of {m}", start + len)));
        }
        let data = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let rg = self.rg(&[x]);
        self.push(Tensor::new(&[len, n], data)?, Op::SliceRows(x, start), rg, "slice_rows")
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = dims2(self.value(x), "slice_cols")?;
        if start + len > n {
            return Err(Error::shape("slice_cols", format!("cols {start}..{} of {n}", start + len)));
        }
        let t = self.value(x);
        let data = (0..m).flat_map(|i| t.row(i)[start..start + len].iter().copied()).collect();
        let rg = self.rg(&[x]);
        self.push(Tensor::new(&[m, len], data)?, Op::SliceCols(x, start), rg, "slice_cols")
    }

    /// Mean token cross-entropy over rows whose target is `Some`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let (m, v) = dims2(self.value(logits), "cross_entropy")?;
        if targets.len() != m {
            return Err(Error::shape("cross_entropy", format!("{m} rows, {} targets", targets.len())));
        }
        if let Some(bad) = targets.iter().flatten().find(|&&t| t >= v) {
            return Err(Error::shape("cross_entropy", format!("target {bad} >= vocab {v}")));
        }
        let mut probs = self.value(logits).data().to_vec();
        kernels::softmax_rows(&mut probs, m, v, false);
        let xs = self.value(logits).data();
        let mut loss = 0.0;
        let mut count = 0;
        for (i, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                let row = &xs[i * v..(i + 1) * v];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                loss += lse - row[t];
                count += 1;
            }
        }
        if count > 0 {
            loss /= count as f64;
        }
        let rg = self.rg(&[logits]);
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
            count,
        };
        self.push(Tensor::scalar(loss), op, rg, "cross_entropy")
    }

    /// Scaled dot-product attention `softmax(Q·Kᵀ/√d)·V`. With `causal`,
    /// query `i` only sees keys `j ≤ i`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, causal: bool) -> Result<Var> {
        let (_, d) = dims2(self.value(q), "attention")?;
        let (nk, dk) = dims2(self.value(k), "attention")?;
        let (nv, _) = dims2(self.value(v), "attention")?;
        if d != dk || nk != nv {
            return Err(Error::shape(
                "attention",
                format!(
                    "Q {:?}, K {:?}, V {:?}",
                    self.value(q).shape(),
                    self.value(k).shape(),
                    self.value(v).shape()
                ),
            ));
        }
        let logits = self.matmul_bt(q, k)?;
        let logits = self.scale(logits, 1.0 / (d as f64).sqrt())?;
        let weights = if causal {
            self.softmax_rows_causal(logits)?
        } else {
            self.softmax_rows(logits)?
        };
        self.matmul(weights, v)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 || shape.len() > 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else { continue };
            self.backprop_node(idx, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, idx: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        // Only allocate gradient buffers for inputs that need them.
        macro_rules! with_grad {
            ($v:expr, |$g:ident| $body:block) => {
                let v: Var = $v;
                if nodes[v.0].requires_grad {
                    let len = nodes[v.0].value.len();
                    let $g: &mut Vec<f64> = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
                    $body
                }
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = nodes[a.0].value.dims2().unwrap();
                let n = nodes[b.0].value.cols();
                with_grad!(*a, |ga| {
                    kernels::matmul_bt_acc(gy, nodes[b.0].value.data(), ga, m, n, k);
                });
                with_grad!(*b, |gb| {
                    kernels::matmul_at_acc(nodes[a.0].value.data(), gy, gb, m, k, n);
                });
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = nodes[a.0].value.dims2().unwrap();
                let n = nodes[b.0].value.rows();
                with_grad!(*a, |ga| {
                    kernels::matmul_acc(gy, nodes[b.0].value.data(), ga, m, n, k);
                });
                with_grad!(*b, |gb| {
                    kernels::matmul_at_acc(gy, nodes[a.0].value.data(), gb, m, n, k);
                });
            }
            Op::Add(a, b) => {
                with_grad!(*a, |ga| {
                    kernels::add_assign(ga, gy);
                });
                with_grad!(*b, |gb| {
                    kernels::add_assign(gb, gy);
                });
            }
            Op::AddRow(x, bias) => {
                let n = nodes[x.0].value.cols();
                with_grad!(*x, |gx| {
                    kernels::add_assign(gx, gy);
                });
                with_grad!(*bias, |gb| {
                    for row in gy.chunks_exact(n) {
                        kernels::add_assign(gb, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                with_grad!(*a, |ga| {
                    for ((g, d), o) in ga.iter_mut().zip(gy).zip(nodes[b.0].value.data()) {
                        *g += d * o;
                    }
                });
                with_grad!(*b, |gb| {
                    for ((g, d), o) in gb.iter_mut().zip(gy).zip(nodes[a.0].value.data()) {
                        *g += d * o;
                    }
                });
            }
            Op::Scale(x, s) => {
                with_grad!(*x, |gx| {
                    for (g, d) in gx.iter_mut().zip(gy) {
                        *g += s * d;
                    }
                });
            }
            Op::Gelu(x) => {
                with_grad!(*x, |gx| {
                    for ((g, d), xv) in gx.iter_mut().zip(gy).zip(nodes[x.0].value.data()) {
                        *g += d * kernels::gelu_grad(*xv);
                    }
                });
            }
            Op::Softmax(x) => {
                let n = node.value.cols();
                with_grad!(*x, |gx| {
                    for ((grow, dyrow), yrow) in gx
                        .chunks_exact_mut(n)
                        .zip(gy.chunks_exact(n))
                        .zip(node.value.data().chunks_exact(n))
                    {
                        let s = kernels::dot(dyrow, yrow);
                        for ((g, d), y) in grow.iter_mut().zip(dyrow).zip(yrow) {
                            *g += y * (d - s);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let n = node.value.cols();
                let g = nodes[gain.0].value.data();
                with_grad!(*gain, |gg| {
                    for (dyrow, hrow) in gy.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        for j in 0..n {
                            gg[j] += dyrow[j] * hrow[j];
                        }
                    }
                });
                with_grad!(*bias, |gb| {
                    for dyrow in gy.chunks_exact(n) {
                        kernels::add_assign(gb, dyrow);
                    }
                });
                with_grad!(*x, |gx| {
                    let mut dh = vec![0.0; n];
                    for (i, (dyrow, hrow)) in gy.chunks_exact(n).zip(xhat.chunks_exact(n)).enumerate() {
                        for j in 0..n {
                            dh[j] = dyrow[j] * g[j];
                        }
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h = kernels::dot(&dh, hrow);
                        let r = rstd[i] / n as f64;
                        let grow = &mut gx[i * n..(i + 1) * n];
                        for j in 0..n {
                            grow[j] += r * (n as f64 * dh[j] - sum_dh - hrow[j] * sum_dh_h);
                        }
                    }
                });
            }
            Op::Gather { table, ids } => {
                let d = node.value.cols();
                with_grad!(*table, |gt| {
                    for (row, &id) in gy.chunks_exact(d).zip(ids) {
                        kernels::add_assign(&mut gt[id * d..(id + 1) * d], row);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p.0].value.len();
                    with_grad!(p, |gp| {
                        kernels::add_assign(gp, &gy[offset..offset + len]);
                    });
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let n = node.value.cols();
                let mut col = 0;
                for &p in parts {
                    let w = nodes[p.0].value.cols();
                    with_grad!(p, |gp| {
                        for (grow, dyrow) in gp.chunks_exact_mut(w).zip(gy.chunks_exact(n)) {
                            kernels::add_assign(grow, &dyrow[col..col + w]);
                        }
                    });
                    col += w;
                }
            }
            Op::SliceRows(x, start) => {
                let n = node.value.cols();
                with_grad!(*x, |gx| {
                    kernels::add_assign(&mut gx[start * n..start * n + gy.len()], gy);
                });
            }
            Op::SliceCols(x, start) => {
                let w = node.value.cols();
                let n = nodes[x.0].value.cols();
                with_grad!(*x, |gx| {
                    for (grow, dyrow) in gx.chunks_exact_mut(n).zip(gy.chunks_exact(w)) {
                        kernels::add_assign(&mut grow[*start..start + w], dyrow);
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let v = nodes[logits.0].value.cols();
                let scale = gy[0] / *count as f64;
                with_grad!(*logits, |gl| {
                    for (i, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let grow = &mut gl[i * v..(i + 1) * v];
                        for (j, g) in grow.iter_mut().enumerate() {
                            let y = if j == t { 1.0 } else { 0.0 };
                            *g += scale * (probs[i * v + j] - y);
                        }
                    }
                });
            }
            Op::Sum(x) => {
                with_grad!(*x, |gx| {
                    for g in gx.iter_mut() {
                        *g += gy[0];
                    }
                });
            }
        }
    }

    /// Adds this graph's parameter gradients into the store's buffers.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (&id, &var) in &self.params {
            if let Some(g) = self.grad(var) {
                kernels::add_assign(&mut store.get_mut(id).grad, g);
            }
        }
    }
}
