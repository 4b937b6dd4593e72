use std::sync::Arc;

use super::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-row constant matrices for the batched row operations. Row `j` uses the
/// `dim × dim` block starting at `j * dim * dim`, row-major.
#[derive(Debug, Clone)]
pub struct RowMatrices {
    dim: usize,
    data: Arc<[f64]>,
}

impl RowMatrices {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim * dim) {
            return Err(Error::Dimension(format!(
                "{} values cannot be split into {dim}x{dim} blocks",
                data.len()
            )));
        }
        Ok(RowMatrices {
            dim,
            data: data.into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / (self.dim * self.dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn block(&self, j: usize) -> &[f64] {
        let sz = self.dim * self.dim;
        &self.data[j * sz..(j + 1) * sz]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `[r×c] + [1×c]` broadcast over rows.
    AddRow(Var, Var),
    /// Constant offset; gradient passes straight through.
    Shift(Var),
    Scale(Var, f64),
    Relu(Var),
    Sum(Var),
    MaskCols(Var, Arc<[f64]>),
    WeightedQuadratic(Var, Arc<[f64]>),
    SmoothNorm(Var),
    RowQuadratic(Var, RowMatrices),
    RowLinear(Var, RowMatrices),
    RowSmoothNorm(Var),
    WeightedSum(Var, Arc<[f64]>),
    ConcatCols(Var, Var),
    StackRows(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Records primitive operations in evaluation order for one reverse sweep.
///
/// Nodes are appended as they are computed, so every node's inputs precede
/// it and a single backward walk in reverse order visits each node once.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    sizes: Vec<usize>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Vec<f64> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| vec![0.0; self.sizes[v.0]])
    }

    pub fn is_reachable(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }

    /// Add the gradient of `v` into `tensor.grad`.
    pub fn accumulate_into(&self, v: Var, tensor: &mut Tensor) -> Result<()> {
        match &self.grads[v.0] {
            Some(g) => tensor.accumulate_grad(g),
            None => tensor.accumulate_grad(&vec![0.0; self.sizes[v.0]]),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// `c (+)= a · b` with explicit strides; `a` is `m×k`, `b` is `k×n`, `c` is `m×n` row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices cover m*k, k*n and m*n elements for the given strides,
    // which every call site guarantees from node shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    fn push(
        &mut self,
        rows: usize,
        cols: usize,
        value: Vec<f64>,
        op: Op,
        requires_grad: bool,
    ) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Record a tensor as a leaf. Gradients are tracked iff the tensor requires them.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let (r, c) = t.dims2();
        self.push(r, c, t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Record a constant `rows × cols` leaf.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() || rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "constant of shape {rows}x{cols} given {} values",
                data.len()
            )));
        }
        Ok(self.push(rows, cols, data, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dimensions differ: {m}x{k} times {k2}x{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a),
            (k as isize, 1),
            self.value(b),
            (n as isize, 1),
            &mut out,
            false,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(m, n, out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let da = self.dims(a);
        let db = self.dims(b);
        if da != db {
            return Err(Error::Dimension(format!(
                "{what}: shapes {}x{} and {}x{} differ",
                da.0, da.1, db.0, db.1
            )));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "add")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "sub")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x - y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Sub(a, b), rg))
    }

    /// Add a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        if self.dims(row) != (1, c) {
            return Err(Error::Dimension(format!(
                "row broadcast needs 1x{c}, got {:?}",
                self.dims(row)
            )));
        }
        let bias = self.value(row);
        let mut out = self.value(a).to_vec();
        for chunk in out.chunks_mut(c) {
            add_into(chunk, bias);
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(r, c, out, Op::AddRow(a, row), rg))
    }

    /// `a + offset` for a constant `offset` of the same shape.
    pub fn add_const(&mut self, a: Var, offset: &[f64]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if offset.len() != r * c {
            return Err(Error::Dimension(format!(
                "constant offset has {} values, node has {}",
                offset.len(),
                r * c
            )));
        }
        let out = self
            .value(a)
            .iter()
            .zip(offset)
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(a);
        Ok(self.push(r, c, out, Op::Shift(a), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let (r, c) = self.dims(a);
        let out = self.value(a).iter().map(|x| k * x).collect();
        let rg = self.rg(a);
        self.push(r, c, out, Op::Scale(a, k), rg)
    }

    /// Elementwise `max(0, x)`; the subgradient at exactly zero is zero.
    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let out = self
            .value(a)
            .iter()
            .map(|&x| if x > 0.0 { x } else { 0.0 })
            .collect();
        let rg = self.rg(a);
        self.push(r, c, out, Op::Relu(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(1, 1, vec![s], Op::Sum(a), rg)
    }

    /// Multiply column `j` of `a` by `mask[j]`.
    pub fn mask_cols(&mut self, a: Var, mask: &[f64]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if mask.len() != c {
            return Err(Error::Dimension(format!(
                "column mask has {} entries for {c} columns",
                mask.len()
            )));
        }
        let mut out = self.value(a).to_vec();
        for chunk in out.chunks_mut(c) {
            chunk.iter_mut().zip(mask).for_each(|(x, m)| *x *= m);
        }
        let rg = self.rg(a);
        Ok(self.push(r, c, out, Op::MaskCols(a, mask.into()), rg))
    }

    /// `zᵀ·W·z` for a constant square `weight` (no gradient flows into `weight`).
    pub fn weighted_quadratic(&mut self, z: Var, weight: &Tensor) -> Result<Var> {
        let (wr, wc) = weight.dims2();
        if weight.shape().len() != 2 || wr != wc {
            return Err(Error::Dimension(format!(
                "quadratic weight must be square, got {:?}",
                weight.shape()
            )));
        }
        let zv = self.value(z);
        if zv.len() != wr {
            return Err(Error::Dimension(format!(
                "vector of length {} against {wr}x{wr} weight",
                zv.len()
            )));
        }
        let w = weight.data();
        let mut acc = 0.0;
        for i in 0..wr {
            let mut row = 0.0;
            for j in 0..wr {
                row += w[i * wr + j] * zv[j];
            }
            acc += zv[i] * row;
        }
        let rg = self.rg(z);
        Ok(self.push(1, 1, vec![acc], Op::WeightedQuadratic(z, w.into()), rg))
    }

    /// `sqrt(Σ xᵢ² + eps)`, a norm that stays differentiable at zero.
    pub fn smooth_norm(&mut self, x: Var, eps: f64) -> Var {
        let s: f64 = self.value(x).iter().map(|v| v * v).sum();
        let rg = self.rg(x);
        self.push(1, 1, vec![(s + eps).sqrt()], Op::SmoothNorm(x), rg)
    }

    /// Row `j` of the `t×1` result is `r_jᵀ·M_j·r_j`.
    pub fn row_quadratic(&mut self, a: Var, mats: &RowMatrices) -> Result<Var> {
        let (t, p) = self.dims(a);
        self.check_row_mats(t, p, mats)?;
        let av = self.value(a);
        let out = (0..t)
            .map(|j| {
                let r = &av[j * p..(j + 1) * p];
                let m = mats.block(j);
                let mut acc = 0.0;
                for i in 0..p {
                    let mut row = 0.0;
                    for k in 0..p {
                        row += m[i * p + k] * r[k];
                    }
                    acc += r[i] * row;
                }
                acc
            })
            .collect();
        let rg = self.rg(a);
        Ok(self.push(t, 1, out, Op::RowQuadratic(a, mats.clone()), rg))
    }

    /// Row `j` of the result is `(M_j · r_jᵀ)ᵀ`.
    pub fn row_linear(&mut self, a: Var, mats: &RowMatrices) -> Result<Var> {
        let (t, p) = self.dims(a);
        self.check_row_mats(t, p, mats)?;
        let av = self.value(a);
        let mut out = vec![0.0; t * p];
        for j in 0..t {
            let r = &av[j * p..(j + 1) * p];
            let m = mats.block(j);
            for i in 0..p {
                out[j * p + i] = (0..p).map(|k| m[i * p + k] * r[k]).sum();
            }
        }
        let rg = self.rg(a);
        Ok(self.push(t, p, out, Op::RowLinear(a, mats.clone()), rg))
    }

    fn check_row_mats(&self, t: usize, p: usize, mats: &RowMatrices) -> Result<()> {
        if mats.dim() != p || mats.rows() != t {
            return Err(Error::Dimension(format!(
                "{}x{} row operand against {} blocks of size {}",
                t,
                p,
                mats.rows(),
                mats.dim()
            )));
        }
        Ok(())
    }

    /// Smooth norm of every row; result is `t×1`.
    pub fn row_smooth_norm(&mut self, a: Var, eps: f64) -> Var {
        let (t, p) = self.dims(a);
        let av = self.value(a);
        let out = av
            .chunks(p)
            .map(|r| (r.iter().map(|v| v * v).sum::<f64>() + eps).sqrt())
            .collect();
        let rg = self.rg(a);
        self.push(t, 1, out, Op::RowSmoothNorm(a), rg)
    }

    /// `Σ_j w_j a_j` over all entries of `a`.
    pub fn weighted_sum(&mut self, a: Var, weights: &[f64]) -> Result<Var> {
        let av = self.value(a);
        if weights.len() != av.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} entries",
                weights.len(),
                av.len()
            )));
        }
        let s = av.iter().zip(weights).map(|(x, w)| x * w).sum();
        let rg = self.rg(a);
        Ok(self.push(1, 1, vec![s], Op::WeightedSum(a, weights.into()), rg))
    }

    /// `[a | b]` for operands with the same number of rows.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims(a);
        let (rb, cb) = self.dims(b);
        if ra != rb {
            return Err(Error::Dimension(format!(
                "concat of {ra}-row and {rb}-row operands"
            )));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&av[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&bv[i * cb..(i + 1) * cb]);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(ra, ca + cb, out, Op::ConcatCols(a, b), rg))
    }

    /// Stack `1×c` rows into a `len×c` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(Error::Dimension("cannot stack zero rows".into()));
        };
        let c = self.dims(first).1;
        let mut out = Vec::with_capacity(rows.len() * c);
        let mut rg = false;
        for &r in rows {
            if self.dims(r) != (1, c) {
                return Err(Error::Dimension(format!(
                    "stack expects 1x{c} rows, got {:?}",
                    self.dims(r)
                )));
            }
            out.extend_from_slice(self.value(r));
            rg |= self.rg(r);
        }
        Ok(self.push(rows.len(), c, out, Op::StackRows(rows.to_vec()), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.node(loss);
        if root.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}x{}",
                root.rows, root.cols
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }

        grads.resize(self.nodes.len(), None);
        let sizes = self.nodes.iter().map(|n| n.value.len()).collect();
        Ok(Gradients { grads, sizes })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let send = |v: Var, contrib: Vec<f64>, grads: &mut [Option<Vec<f64>>]| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => add_into(acc, &contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = node.cols;
                if self.rg(*a) {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    gemm(
                        m,
                        n,
                        k,
                        g,
                        (n as isize, 1),
                        self.value(*b),
                        (1, n as isize),
                        &mut da,
                        false,
                    );
                    send(*a, da, grads);
                }
                if self.rg(*b) {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * n];
                    gemm(
                        k,
                        m,
                        n,
                        self.value(*a),
                        (1, k as isize),
                        g,
                        (n as isize, 1),
                        &mut db,
                        false,
                    );
                    send(*b, db, grads);
                }
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec(), grads);
                send(*b, g.to_vec(), grads);
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec(), grads);
                send(*b, g.iter().map(|x| -x).collect(), grads);
            }
            Op::AddRow(a, row) => {
                send(*a, g.to_vec(), grads);
                if self.rg(*row) {
                    let c = node.cols;
                    let mut db = vec![0.0; c];
                    for chunk in g.chunks(c) {
                        add_into(&mut db, chunk);
                    }
                    send(*row, db, grads);
                }
            }
            Op::Shift(a) => send(*a, g.to_vec(), grads),
            Op::Scale(a, k) => send(*a, g.iter().map(|x| k * x).collect(), grads),
            Op::Relu(a) => {
                let d = self
                    .value(*a)
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| if x > 0.0 { gi } else { 0.0 })
                    .collect();
                send(*a, d, grads);
            }
            Op::Sum(a) => send(*a, vec![g[0]; self.value(*a).len()], grads),
            Op::MaskCols(a, mask) => {
                let c = node.cols;
                let mut d = g.to_vec();
                for chunk in d.chunks_mut(c) {
                    chunk.iter_mut().zip(mask.iter()).for_each(|(x, m)| *x *= m);
                }
                send(*a, d, grads);
            }
            Op::WeightedQuadratic(z, w) => {
                let zv = self.value(*z);
                let p = zv.len();
                let d = (0..p)
                    .map(|i| {
                        let s: f64 = (0..p).map(|j| (w[i * p + j] + w[j * p + i]) * zv[j]).sum();
                        g[0] * s
                    })
                    .collect();
                send(*z, d, grads);
            }
            Op::SmoothNorm(x) => {
                let norm = node.value[0];
                let d = self.value(*x).iter().map(|v| g[0] * v / norm).collect();
                send(*x, d, grads);
            }
            Op::RowQuadratic(a, mats) => {
                let (t, p) = self.dims(*a);
                let av = self.value(*a);
                let mut d = vec![0.0; t * p];
                for j in 0..t {
                    let r = &av[j * p..(j + 1) * p];
                    let m = mats.block(j);
                    for i in 0..p {
                        let s: f64 = (0..p).map(|k| (m[i * p + k] + m[k * p + i]) * r[k]).sum();
                        d[j * p + i] = g[j] * s;
                    }
                }
                send(*a, d, grads);
            }
            Op::RowLinear(a, mats) => {
                let (t, p) = self.dims(*a);
                let mut d = vec![0.0; t * p];
                for j in 0..t {
                    let m = mats.block(j);
                    let gj = &g[j * p..(j + 1) * p];
                    for k in 0..p {
                        d[j * p + k] = (0..p).map(|i| m[i * p + k] * gj[i]).sum();
                    }
                }
                send(*a, d, grads);
            }
            Op::RowSmoothNorm(a) => {
                let (_, p) = self.dims(*a);
                let av = self.value(*a);
                let mut d = vec![0.0; av.len()];
                for (j, norm) in node.value.iter().enumerate() {
                    for k in 0..p {
                        d[j * p + k] = g[j] * av[j * p + k] / norm;
                    }
                }
                send(*a, d, grads);
            }
            Op::WeightedSum(a, w) => send(*a, w.iter().map(|wi| g[0] * wi).collect(), grads),
            Op::ConcatCols(a, b) => {
                let (r, ca) = self.dims(*a);
                let cb = self.dims(*b).1;
                let c = ca + cb;
                let mut da = Vec::with_capacity(r * ca);
                let mut db = Vec::with_capacity(r * cb);
                for i in 0..r {
                    da.extend_from_slice(&g[i * c..i * c + ca]);
                    db.extend_from_slice(&g[i * c + ca..(i + 1) * c]);
                }
                send(*a, da, grads);
                send(*b, db, grads);
            }
            Op::StackRows(rows) => {
                let c = node.cols;
                for (i, r) in rows.iter().enumerate() {
                    send(*r, g[i * c..(i + 1) * c].to_vec(), grads);
                }
            }
        }
    }
}
