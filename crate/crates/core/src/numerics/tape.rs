//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! Every operation appends one node holding its output value and the handles
//! of its inputs. [`Tape::backward`] walks the nodes in exact reverse
//! recording order and accumulates adjoints sequentially, so two runs over the
//! same inputs yield bit-identical gradients.

use super::tensor::{matmul_nt_into, matmul_tn_into};
use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Row(Var, usize),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    MixBlocks(Var, Var),
    Sum(Var),
    /// Scalar computed outside the tape whose gradient with respect to its
    /// single input was supplied by the caller.
    External(Var, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_rank2(op: &'static str, a: &Tensor) -> Result<()> {
    if a.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: vec![0, 0],
        });
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax of one row, written into `out`.
pub(crate) fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push("constant", value, Op::Constant)
    }

    /// Record a named parameter. Gradients flow back to `name` in
    /// [`Tape::backward`]'s result.
    pub fn param(&mut self, params: &ParamStore, name: &str) -> Result<Var> {
        let value = params.get(name)?.clone();
        self.push("param", value, Op::Param(name.to_string()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same(name, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(name, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the `1 × c` row `b` to every row of the `r × c` matrix `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_rank2("add_row", ta)?;
        if tb.rows() != 1 || tb.cols() != ta.cols() {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut out = ta.clone();
        let bias = tb.data();
        for r in 0..out.rows() {
            for (o, &x) in out.row_mut(r).iter_mut().zip(bias) {
                *o += x;
            }
        }
        self.push("add_row", out, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * factor).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("scale", out, Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x.tanh()).collect())?;
        self.push("tanh", out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| sigmoid(x)).collect())?;
        self.push("sigmoid", out, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        check_rank2("softmax_rows", ta)?;
        let mut out = Tensor::zeros(ta.shape());
        for r in 0..ta.rows() {
            softmax_into(ta.row(r), out.row_mut(r));
        }
        self.push("softmax_rows", out, Op::SoftmaxRows(a))
    }

    /// Row `r` of a matrix as a `1 × c` matrix.
    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let ta = self.value(a);
        check_rank2("row", ta)?;
        if r >= ta.rows() {
            return Err(Error::InvalidArgument(format!(
                "row {r} of a {}-row matrix",
                ta.rows()
            )));
        }
        let out = Tensor::new(vec![1, ta.cols()], ta.row(r).to_vec())?;
        self.push("row", out, Op::Row(a, r))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        check_rank2("slice_cols", ta)?;
        if start > end || end > ta.cols() {
            return Err(Error::InvalidArgument(format!(
                "column range {start}..{end} of a {}-column matrix",
                ta.cols()
            )));
        }
        let mut data = Vec::with_capacity(ta.rows() * (end - start));
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.row(r)[start..end]);
        }
        let out = Tensor::new(vec![ta.rows(), end - start], data)?;
        self.push("slice_cols", out, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat_cols of nothing".into()))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            check_rank2("concat_cols", t)?;
            if t.rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.value(*first).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("stack_rows of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            check_rank2("stack_rows", t)?;
            if t.cols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "stack_rows",
                    lhs: self.value(*first).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        self.push("stack_rows", out, Op::StackRows(parts.to_vec()))
    }

    /// Row-wise convex mixing of column blocks.
    ///
    /// `weights` is `r × n`, `blocks` is `r × (n·w)`; the output is `r × w`
    /// with `out[t] = Σ_j weights[t, j] · blocks[t, j·w .. (j+1)·w]`.
    pub fn mix_blocks(&mut self, weights: Var, blocks: Var) -> Result<Var> {
        let (tw, tb) = (self.value(weights), self.value(blocks));
        check_rank2("mix_blocks", tw)?;
        check_rank2("mix_blocks", tb)?;
        let (rows, n) = (tw.rows(), tw.cols());
        if tb.rows() != rows || n == 0 || tb.cols() % n != 0 {
            return Err(Error::ShapeMismatch {
                op: "mix_blocks",
                lhs: tw.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let width = tb.cols() / n;
        let mut out = Tensor::zeros(&[rows, width]);
        for t in 0..rows {
            let (wr, br) = (tw.row(t), tb.row(t));
            let o = out.row_mut(t);
            for (j, &wj) in wr.iter().enumerate() {
                for (ok, &b) in o.iter_mut().zip(&br[j * width..(j + 1) * width]) {
                    *ok += wj * b;
                }
            }
        }
        self.push("mix_blocks", out, Op::MixBlocks(weights, blocks))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(a))
    }

    /// Record a scalar computed outside the tape, with its gradient with
    /// respect to `input` already known.
    pub fn external_scalar(&mut self, input: Var, value: f64, grad: Tensor) -> Result<Var> {
        check_same("external_scalar", self.value(input), &grad)?;
        if !grad.is_finite() {
            return Err(Error::NonFinite("external_scalar gradient"));
        }
        self.push("external_scalar", Tensor::scalar(value), Op::External(input, grad))
    }

    /// Exact gradients of the scalar `loss` with respect to every tensor in
    /// `params`. Parameters that were never recorded, or that `loss` does not
    /// depend on, receive zeros.
    pub fn backward(&self, loss: Var, params: &ParamStore) -> Result<ParamStore> {
        let adj = self.adjoints(loss)?;
        let mut grads = params.zeros_like();
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(name), Some(g)) = (&node.op, &adj[i]) {
                let slot = grads.values_mut(name)?;
                for (s, v) in slot.iter_mut().zip(g) {
                    *s += v;
                }
            }
        }
        Ok(grads)
    }

    /// Adjoint of every node with respect to `loss`; `None` where unreachable.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let adj = self.adjoints(loss)?;
        Ok(adj
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|d| Tensor::new(self.nodes[i].value.shape().to_vec(), d)))
            .map(Option::transpose)
            .collect::<Result<_>>()?)
    }

    fn adjoints(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    // dA = G·Bᵀ, dB = Aᵀ·G
                    let mut da = vec![0.0; m * k];
                    matmul_nt_into(&g, tb.data(), &mut da, m, n, k);
                    let mut db = vec![0.0; k * n];
                    matmul_tn_into(ta.data(), &g, &mut db, m, k, n);
                    accumulate(&mut adj, *a, &da);
                    accumulate(&mut adj, *b, &db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, &g);
                    accumulate(&mut adj, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, &g);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(&mut adj, *b, &neg);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da: Vec<f64> = g.iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                    let db: Vec<f64> = g.iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                    accumulate(&mut adj, *a, &da);
                    accumulate(&mut adj, *b, &db);
                }
                Op::AddRow(a, b) => {
                    let cols = self.value(*b).cols();
                    let mut db = vec![0.0; cols];
                    for row in g.chunks(cols) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut adj, *a, &g);
                    accumulate(&mut adj, *b, &db);
                }
                Op::Scale(a, f) => {
                    let da: Vec<f64> = g.iter().map(|v| v * f).collect();
                    accumulate(&mut adj, *a, &da);
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let da: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    accumulate(&mut adj, *a, &da);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let da: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    accumulate(&mut adj, *a, &da);
                }
                Op::SoftmaxRows(a) => {
                    let cols = node.value.cols();
                    let mut da = vec![0.0; g.len()];
                    for ((d, gr), yr) in da
                        .chunks_mut(cols)
                        .zip(g.chunks(cols))
                        .zip(node.value.data().chunks(cols))
                    {
                        let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                        for ((d, g), y) in d.iter_mut().zip(gr).zip(yr) {
                            *d = y * (g - dot);
                        }
                    }
                    accumulate(&mut adj, *a, &da);
                }
                Op::Row(a, r) => {
                    let src = self.value(*a);
                    let cols = src.cols();
                    let slot = slot(&mut adj, *a, src.numel());
                    for (s, v) in slot[r * cols..(r + 1) * cols].iter_mut().zip(&g) {
                        *s += v;
                    }
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let (cols, width) = (src.cols(), node.value.cols());
                    let slot = slot(&mut adj, *a, src.numel());
                    for (r, gr) in g.chunks(width).enumerate() {
                        let dst = &mut slot[r * cols + start..r * cols + start + width];
                        for (s, v) in dst.iter_mut().zip(gr) {
                            *s += v;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let width = self.value(p).cols();
                        let part: Vec<f64> = g
                            .chunks(total)
                            .flat_map(|row| &row[offset..offset + width])
                            .copied()
                            .collect();
                        accumulate(&mut adj, p, &part);
                        offset += width;
                    }
                }
                Op::StackRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).numel();
                        accumulate(&mut adj, p, &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::MixBlocks(w, b) => {
                    let (tw, tb) = (self.value(*w), self.value(*b));
                    let (n, width) = (tw.cols(), node.value.cols());
                    let mut dw = vec![0.0; tw.numel()];
                    let mut db = vec![0.0; tb.numel()];
                    for (t, gr) in g.chunks(width).enumerate() {
                        let (wr, br) = (tw.row(t), tb.row(t));
                        for j in 0..n {
                            let block = &br[j * width..(j + 1) * width];
                            dw[t * n + j] = gr.iter().zip(block).map(|(g, b)| g * b).sum();
                            let dst = &mut db[t * n * width + j * width..][..width];
                            for (d, gv) in dst.iter_mut().zip(gr) {
                                *d = wr[j] * gv;
                            }
                        }
                    }
                    accumulate(&mut adj, *w, &dw);
                    accumulate(&mut adj, *b, &db);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).numel();
                    accumulate(&mut adj, *a, &vec![g[0]; n]);
                }
                Op::External(a, grad) => {
                    let da: Vec<f64> = grad.data().iter().map(|v| v * g[0]).collect();
                    accumulate(&mut adj, *a, &da);
                }
            }
            adj[i] = Some(g);
        }
        Ok(adj)
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut Vec<f64> {
    adj[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(g) {
                *e += x;
            }
        }
        none => *none = Some(g.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        let b = tape.constant(t(&[&[1.0], &[1.0]])).unwrap();
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &t(&[&[3.0], &[7.0]]));

        let i = tape.constant(Tensor::identity(2)).unwrap();
        let ia = tape.matmul(i, a).unwrap();
        assert_eq!(tape.value(ia), tape.value(a));
    }

    #[test]
    fn shape_mismatches_are_errors() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(tape.matmul(a, b), Err(Error::ShapeMismatch { .. })));
        let c = tape.constant(Tensor::zeros(&[3, 2])).unwrap();
        assert!(tape.add(a, c).is_err());
        assert!(tape.mul(a, c).is_err());
    }

    #[test]
    fn elementwise_fixed_points() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[1, 1])).unwrap();
        let th = tape.tanh(z).unwrap();
        let sg = tape.sigmoid(z).unwrap();
        assert_eq!(tape.value(th).data(), &[0.0]);
        assert_eq!(tape.value(sg).data(), &[0.5]);
    }

    #[test]
    fn softmax_hand_values() {
        let mut tape = Tape::new();
        let a = tape
            .constant(t(&[&[2.0, 2.0, 2.0, 2.0], &[0.0, 3f64.ln(), 0.0, 0.0]]))
            .unwrap();
        // second row: only the first two columns matter for the [0, ln 3] case
        let s = tape.softmax_rows(a).unwrap();
        assert!(tape.value(s).row(0).iter().all(|&p| (p - 0.25).abs() < 1e-15));

        let b = tape.constant(t(&[&[0.0, 3f64.ln()]])).unwrap();
        let sb = tape.softmax_rows(b).unwrap();
        let p = tape.value(sb).row(0);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[&[1000.0, -1000.0, 999.0]])).unwrap();
        let s = tape.softmax_rows(a).unwrap();
        let row = tape.value(s).row(0);
        assert!(row.iter().all(|p| p.is_finite()));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[&[f64::MAX]])).unwrap();
        assert!(matches!(tape.scale(a, 10.0), Err(Error::NonFinite("scale"))));
        assert!(tape.constant(t(&[&[f64::NAN]])).is_err());
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::full(&[2, 2], 0.3)).unwrap();
        let mut tape = Tape::new();
        let _w = tape.param(&store, "w").unwrap();
        let c = tape.constant(Tensor::full(&[2, 2], 1.0)).unwrap();
        let loss = tape.sum(c).unwrap();
        let g = tape.backward(loss, &store).unwrap();
        assert!(g.get("w").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_of_projection_gives_outer_product() {
        // loss = sum(M·h): dL/dM[i][j] = h[j]
        let mut store = ParamStore::new();
        store
            .insert("m", t(&[&[0.1, -0.2, 0.3], &[0.5, 0.7, -1.1]]))
            .unwrap();
        let h = t(&[&[2.0], &[-3.0], &[0.5]]);
        let mut tape = Tape::new();
        let m = tape.param(&store, "m").unwrap();
        let hv = tape.constant(h.clone()).unwrap();
        let p = tape.matmul(m, hv).unwrap();
        let loss = tape.sum(p).unwrap();
        let g = tape.backward(loss, &store).unwrap();
        let gm = g.get("m").unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(gm.get(i, j), h.get(j, 0));
            }
        }
    }

    #[test]
    fn backward_requires_scalar() {
        let store = ParamStore::new();
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 2])).unwrap();
        assert!(matches!(tape.backward(a, &store), Err(Error::NotScalar(_))));
    }

    #[test]
    fn param_used_twice_accumulates() {
        let mut store = ParamStore::new();
        store.insert("x", t(&[&[3.0]])).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, "x").unwrap();
        let b = tape.param(&store, "x").unwrap();
        let p = tape.mul(a, b).unwrap();
        let loss = tape.sum(p).unwrap();
        let g = tape.backward(loss, &store).unwrap();
        assert_eq!(g.get("x").unwrap().data(), &[6.0]);
    }
}
