//! Reverse-mode tape over batched tensor operations.
//!
//! Every operation appends one node holding its forward value; `backward`
//! walks the nodes in reverse and accumulates vector-Jacobian products.
//! Nodes are batched (one row per sequence) so a recurrent step costs a
//! handful of nodes regardless of batch size.

use super::tensor::{gemm, matmul_t, Tensor, Trans};
use super::{sigmoid, softmax_rows};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMulT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SoftmaxRows(Var),
    CumsumRows(Var),
    RepeatCols(Var, usize),
    ScaleByCol(Var, Var, usize),
    Gather(Var, Vec<usize>),
    StackUpdate { stack: Var, actions: Var, push: Var },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Grads(Vec<Option<Tensor>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node from `len` onward; earlier handles stay valid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Moves a value out, leaving an empty tensor. Only sound once no
    /// later op or backward pass will read `v`.
    pub fn take_value(&mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros(0, 0))
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// `x · wᵀ`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let out = matmul_t(self.value(x), self.value(w));
        self.push(out, Op::MatMulT(x, w))
    }

    /// Adds a `1 x n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1);
        let mut out = self.value(x).clone();
        assert_eq!(out.cols(), b.cols(), "bias width");
        let b = b.data().to_vec();
        for r in 0..out.rows() {
            for (o, bb) in out.row_mut(r).iter_mut().zip(&b) {
                *o += bb;
            }
        }
        self.push(out, Op::AddRow(x, bias))
    }

    /// `x · wᵀ + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul_t(x, w);
        self.add_row(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shape");
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    /// Multiplies every row of `x` elementwise by the `1 x n` row `m`.
    pub fn mul_row(&mut self, x: Var, m: Var) -> Var {
        let mv = self.value(m).data().to_vec();
        let mut out = self.value(x).clone();
        assert_eq!(out.cols(), mv.len(), "mul_row width");
        for r in 0..out.rows() {
            for (o, k) in out.row_mut(r).iter_mut().zip(&mv) {
                *o *= k;
            }
        }
        self.push(out, Op::MulRow(x, m))
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| 1.0 - v);
        self.push(out, Op::OneMinus(x))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).map(|v| v * k);
        self.push(out, Op::Scale(x, k))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x).slice_cols(start, len);
        self.push(out, Op::SliceCols(x, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let v = self.value(p);
                assert_eq!(v.rows(), rows, "concat_cols rows");
                out.row_mut(r)[off..off + v.cols()].copy_from_slice(v.row(r));
                off += v.cols();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        for &p in parts {
            assert_eq!(self.value(p).cols(), cols, "concat_rows cols");
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols.max(1);
        let out = Tensor::from_vec(rows, cols, data).expect("concat_rows");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        self.push(out, Op::SoftmaxRows(x))
    }

    pub fn cumsum_rows(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for c in 1..row.len() {
                row[c] += row[c - 1];
            }
        }
        self.push(out, Op::CumsumRows(x))
    }

    /// Cumulative softmax along each row.
    pub fn cumax_rows(&mut self, x: Var) -> Var {
        let s = self.softmax_rows(x);
        self.cumsum_rows(s)
    }

    /// Repeats each column `times` times in place (`[a, b]` -> `[a, a, b, b]`).
    pub fn repeat_cols(&mut self, x: Var, times: usize) -> Var {
        let v = self.value(x);
        let mut out = Tensor::zeros(v.rows(), v.cols() * times);
        for r in 0..v.rows() {
            for (c, &val) in v.row(r).iter().enumerate() {
                out.row_mut(r)[c * times..(c + 1) * times].fill(val);
            }
        }
        self.push(out, Op::RepeatCols(x, times))
    }

    /// Scales row `r` of `x` by `s[r, col]`.
    pub fn scale_by_col(&mut self, x: Var, s: Var, col: usize) -> Var {
        let sv = self.value(s);
        let mut out = self.value(x).clone();
        assert_eq!(sv.rows(), out.rows());
        for r in 0..out.rows() {
            let k = sv[(r, col)];
            out.row_mut(r).iter_mut().for_each(|o| *o *= k);
        }
        self.push(out, Op::ScaleByCol(x, s, col))
    }

    /// Row lookup: `out[i] = table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let out = self.value(table).select_rows(ids);
        self.push(out, Op::Gather(table, ids.to_vec()))
    }

    /// Soft stack update. `stack` is `B x (cells * width)` with the top
    /// cell first; `actions` is `B x 2` (push, pop) or `B x 3` (push, pop,
    /// noop); `push` is `B x width`. The result has one more cell than
    /// `stack` until `max_cells` is reached, after which the bottom cell
    /// falls off on push. Missing cells read as zero.
    pub fn stack_update(&mut self, stack: Var, actions: Var, push: Var, max_cells: usize) -> Var {
        let old = self.value(stack);
        let a = self.value(actions);
        let p = self.value(push);
        let width = p.cols();
        assert!(width > 0 && old.cols() % width == 0, "stack width");
        assert!(a.cols() == 2 || a.cols() == 3, "stack actions");
        let in_cells = old.cols() / width;
        let out_cells = (in_cells + 1).min(max_cells).max(in_cells);
        let mut out = Tensor::zeros(old.rows(), out_cells * width);
        for r in 0..old.rows() {
            let (ap, apop) = (a[(r, 0)], a[(r, 1)]);
            let anoop = if a.cols() == 3 { a[(r, 2)] } else { 0.0 };
            let o = old.row(r);
            let n = out.row_mut(r);
            for (dst, src) in n[..width].iter_mut().zip(p.row(r)) {
                *dst = ap * src;
            }
            // shift down on push
            let down = (out_cells - 1).min(in_cells) * width;
            for (dst, src) in n[width..width + down].iter_mut().zip(&o[..down]) {
                *dst += ap * src;
            }
            // shift up on pop
            let up = in_cells.saturating_sub(1) * width;
            for (dst, src) in n[..up].iter_mut().zip(&o[width..]) {
                *dst += apop * src;
            }
            if anoop != 0.0 {
                for (dst, src) in n.iter_mut().zip(o) {
                    *dst += anoop * src;
                }
            }
        }
        self.push(out, Op::StackUpdate { stack, actions, push })
    }

    /// Mean softmax cross-entropy (nats) of each row against its target.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows(), targets.len(), "one target per row");
        let probs = softmax_rows(l);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = l.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        loss /= targets.len().max(1) as f64;
        self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, targets: targets.to_vec(), probs })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.value(root).shape(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads(grads)
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMulT(x, w) => {
                // y = x wᵀ: dx = g w, dw = gᵀ x
                let mut dx = Tensor::zeros(val(*x).rows(), val(*x).cols());
                gemm(1.0, g, Trans::N, val(*w), Trans::N, 0.0, &mut dx);
                accumulate(grads, *x, dx);
                let mut dw = Tensor::zeros(val(*w).rows(), val(*w).cols());
                gemm(1.0, g, Trans::T, val(*x), Trans::N, 0.0, &mut dw);
                accumulate(grads, *w, dw);
            }
            Op::AddRow(x, b) => {
                let mut db = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                accumulate(grads, *x, g.clone());
                accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y));
                accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::MulRow(x, m) => {
                let mv = val(*m);
                let xv = val(*x);
                let mut dx = g.clone();
                let mut dm = Tensor::zeros(1, mv.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        dx[(r, c)] *= mv[(0, c)];
                        dm[(0, c)] += g[(r, c)] * xv[(r, c)];
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *m, dm);
            }
            Op::OneMinus(x) => accumulate(grads, *x, g.map(|v| -v)),
            Op::Scale(x, k) => accumulate(grads, *x, g.map(|v| v * k)),
            Op::Sigmoid(x) => accumulate(grads, *x, g.zip_map(&node.value, |d, y| d * y * (1.0 - y))),
            Op::Tanh(x) => accumulate(grads, *x, g.zip_map(&node.value, |d, y| d * (1.0 - y * y))),
            Op::SliceCols(x, start) => {
                let xv = val(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                accumulate(grads, *x, dx);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = val(p).cols();
                    accumulate(grads, p, g.slice_cols(off, w));
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (rows, cols) = val(p).shape();
                    let chunk = g.data()[off * cols..(off + rows) * cols].to_vec();
                    accumulate(grads, p, Tensor::from_vec(rows, cols, chunk).expect("rows"));
                    off += rows;
                }
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let mut dx = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols() {
                        dx[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::CumsumRows(x) => {
                let mut dx = g.clone();
                for r in 0..dx.rows() {
                    let row = dx.row_mut(r);
                    for c in (0..row.len().saturating_sub(1)).rev() {
                        row[c] += row[c + 1];
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::RepeatCols(x, times) => {
                let xv = val(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    for c in 0..xv.cols() {
                        dx[(r, c)] = g.row(r)[c * times..(c + 1) * times].iter().sum();
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::ScaleByCol(x, s, col) => {
                let xv = val(*x);
                let sv = val(*s);
                let mut dx = g.clone();
                let mut ds = Tensor::zeros(sv.rows(), sv.cols());
                for r in 0..g.rows() {
                    let k = sv[(r, *col)];
                    dx.row_mut(r).iter_mut().for_each(|d| *d *= k);
                    ds[(r, *col)] = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *s, ds);
            }
            Op::Gather(table, ids) => {
                let tv = val(*table);
                let mut dt = Tensor::zeros(tv.rows(), tv.cols());
                for (r, &id) in ids.iter().enumerate() {
                    for (d, v) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                accumulate(grads, *table, dt);
            }
            Op::StackUpdate { stack, actions, push } => {
                let old = val(*stack);
                let a = val(*actions);
                let p = val(*push);
                let width = p.cols();
                let in_total = old.cols();
                let in_cells = in_total / width;
                let out_cells = g.cols() / width;
                let down = (out_cells - 1).min(in_cells) * width;
                let up = in_cells.saturating_sub(1) * width;
                let keep = in_total.min(g.cols());
                let mut d_old = Tensor::zeros(old.rows(), in_total);
                let mut d_a = Tensor::zeros(a.rows(), a.cols());
                let mut d_p = Tensor::zeros(p.rows(), width);
                let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
                let noop = a.cols() == 3;
                for r in 0..old.rows() {
                    let (ap, apop) = (a[(r, 0)], a[(r, 1)]);
                    let anoop = if noop { a[(r, 2)] } else { 0.0 };
                    let o = old.row(r);
                    let gr = g.row(r);
                    {
                        let dor = d_old.row_mut(r);
                        for (d, v) in dor[..down].iter_mut().zip(&gr[width..width + down]) {
                            *d += ap * v;
                        }
                        for (d, v) in dor[width..width + up].iter_mut().zip(&gr[..up]) {
                            *d += apop * v;
                        }
                        if noop {
                            for (d, v) in dor[..keep].iter_mut().zip(&gr[..keep]) {
                                *d += anoop * v;
                            }
                        }
                    }
                    for (d, v) in d_p.row_mut(r).iter_mut().zip(&gr[..width]) {
                        *d = ap * v;
                    }
                    d_a[(r, 0)] = dot(&gr[..width], p.row(r)) + dot(&gr[width..width + down], &o[..down]);
                    d_a[(r, 1)] = dot(&gr[..up], &o[width..width + up]);
                    if noop {
                        d_a[(r, 2)] = dot(&gr[..keep], &o[..keep]);
                    }
                }
                accumulate(grads, *stack, d_old);
                accumulate(grads, *actions, d_a);
                accumulate(grads, *push, d_p);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let scale = g[(0, 0)] / targets.len().max(1) as f64;
                let mut dl = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    dl[(r, t)] -= 1.0;
                }
                dl.data_mut().iter_mut().for_each(|v| *v *= scale);
                accumulate(grads, *logits, dl);
            }
            Op::Sum(x) => {
                let xv = val(*x);
                accumulate(grads, *x, Tensor::filled(xv.rows(), xv.cols(), g[(0, 0)]));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
