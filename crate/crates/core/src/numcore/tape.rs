//! Reverse-mode differentiation over a linear tape.
//!
//! Every value on the tape is a row-major matrix (vectors are `1×n`, scalars
//! `1×1`). Nodes are appended in evaluation order, so walking the tape
//! backwards visits every node after all of its consumers. A tape is built
//! fresh for each training step and dropped afterwards.

use std::collections::HashMap;

use super::kernels;
use super::params::{ParamId, ParamStore};
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Offset(Var),
    Transpose(Var),
    Gelu(Var),
    Relu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    MeanRows(Var),
    Sum(Var),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows { table: Var, ids: Vec<usize> },
    L2Norm(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T> },
}

struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<'s, T: Real = f32> {
    store: Option<&'s ParamStore>,
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'s, T: Real> Tape<'s, T> {
    /// A tape without parameter access; only constants and inputs can be leaves.
    pub fn new() -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn with_params(store: &'s ParamStore) -> Self {
        Self {
            store: Some(store),
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(Error::dim("constant", &[rows, cols], &[data.len()]));
        }
        Ok(self.push(rows, cols, data, Op::Leaf, false))
    }

    pub fn constant_f32(&mut self, rows: usize, cols: usize, data: &[f32]) -> Result<Var> {
        self.constant(rows, cols, data.iter().map(|&v| T::from_f32(v)).collect())
    }

    /// A leaf whose gradient is reported by [`Gradients::of`].
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(Error::dim("input", &[rows, cols], &[data.len()]));
        }
        Ok(self.push(rows, cols, data, Op::Leaf, true))
    }

    /// Places a stored parameter on the tape (once; later calls reuse the node).
    /// Frozen parameters become constants.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let store = self.store.expect("tape built without a parameter store");
        let t = store.tensor(id);
        let (rows, cols) = t.as_matrix();
        let value = t.data().iter().map(|&v| T::from_f32(v)).collect();
        let v = self.push(rows, cols, value, Op::Leaf, !store.is_frozen(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::dim("matmul", &[m, k], &[k2, n]));
        }
        let value = kernels::matmul(self.value(a), self.value(b), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(m, n, value, Op::MatMul(a, b), ng))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::dim(op, &[sa.0, sa.1], &[sb.0, sb.1]));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("add", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(r, c, value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("sub", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x - y).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(r, c, value, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(r, c, value, Op::Mul(a, b), ng))
    }

    /// Adds a `1×c` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let (br, bc) = self.shape(row);
        if br * bc != c {
            return Err(Error::dim("add_row", &[r, c], &[br, bc]));
        }
        let b = self.value(row).to_vec();
        let mut value = self.value(x).to_vec();
        for chunk in value.chunks_mut(c) {
            for (v, &bv) in chunk.iter_mut().zip(&b) {
                *v = *v + bv;
            }
        }
        let ng = self.ng(x) || self.ng(row);
        Ok(self.push(r, c, value, Op::AddRow(x, row), ng))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let (r, c) = self.shape(x);
        let s = T::of(s);
        let value = self.value(x).iter().map(|&v| v * s).collect();
        let ng = self.ng(x);
        self.push(r, c, value, Op::Scale(x, s), ng)
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, x: Var, c0: f64) -> Var {
        let (r, c) = self.shape(x);
        let k = T::of(c0);
        let value = self.value(x).iter().map(|&v| v + k).collect();
        let ng = self.ng(x);
        self.push(r, c, value, Op::Offset(x), ng)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let value = kernels::transpose(self.value(x), r, c);
        let ng = self.ng(x);
        self.push(c, r, value, Op::Transpose(x), ng)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let value = self.value(x).iter().map(|&v| kernels::gelu(v)).collect();
        let ng = self.ng(x);
        self.push(r, c, value, Op::Gelu(x), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let value = self.value(x).iter().map(|&v| v.max(T::zero())).collect();
        let ng = self.ng(x);
        self.push(r, c, value, Op::Relu(x), ng)
    }

    /// Softmax over each row.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if c == 0 {
            return Err(Error::dim("softmax", &[r, c], &[r, 1]));
        }
        let value = kernels::softmax_rows(self.value(x), c);
        let ng = self.ng(x);
        Ok(self.push(r, c, value, Op::Softmax(x), ng))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.shape(x);
        let (gr, gc) = self.shape(gain);
        let (br, bc) = self.shape(bias);
        if c == 0 || gr * gc != c || br * bc != c {
            return Err(Error::dim("layer_norm", &[r, c], &[gr, gc]));
        }
        if eps <= 0.0 {
            return Err(Error::Config("layer_norm eps must be positive".into()));
        }
        let (xhat, rstd) = kernels::layer_norm_stats(self.value(x), c, T::of(eps));
        let g = self.value(gain);
        let b = self.value(bias);
        let mut value = xhat.clone();
        for row in value.chunks_mut(c) {
            for ((v, &gv), &bv) in row.iter_mut().zip(g).zip(b) {
                *v = *v * gv + bv;
            }
        }
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        Ok(self.push(
            r,
            c,
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    /// Mean over rows, giving a `1×c` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if r == 0 {
            return Err(Error::dim("mean_rows", &[r, c], &[1, c]));
        }
        let mut value = vec![T::zero(); c];
        for row in self.value(x).chunks(c) {
            for (acc, &v) in value.iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
        let n = T::of(r as f64);
        for v in &mut value {
            *v = *v / n;
        }
        let ng = self.ng(x);
        Ok(self.push(1, c, value, Op::MeanRows(x), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().copied().sum();
        let ng = self.ng(x);
        self.push(1, 1, vec![total], Op::Sum(x), ng)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start + len > c {
            return Err(Error::dim("slice_cols", &[r, c], &[start, len]));
        }
        let mut value = Vec::with_capacity(r * len);
        for row in self.value(x).chunks(c) {
            value.extend_from_slice(&row[start..start + len]);
        }
        let ng = self.ng(x);
        Ok(self.push(r, len, value, Op::SliceCols { x, start }, ng))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start + len > r {
            return Err(Error::dim("slice_rows", &[r, c], &[start, len]));
        }
        let value = self.value(x)[start * c..(start + len) * c].to_vec();
        let ng = self.ng(x);
        Ok(self.push(len, c, value, Op::SliceRows { x, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("concat_cols of nothing".into()));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::dim("concat_cols", &[rows, cols], &[r, c]));
            }
            cols += c;
        }
        let mut value = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                value.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(rows, cols, value, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("concat_rows of nothing".into()));
        };
        let cols = self.shape(first).1;
        let mut rows = 0;
        let mut value = Vec::new();
        for &p in parts {
            let (r, c) = self.shape(p);
            if c != cols {
                return Err(Error::dim("concat_rows", &[rows, cols], &[r, c]));
            }
            rows += r;
            value.extend_from_slice(self.value(p));
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(rows, cols, value, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Row lookup: output row `t` is row `ids[t]` of `table`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(table);
        let mut value = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(Error::Index {
                    what: "row",
                    index: id,
                    bound: r,
                });
            }
            value.extend_from_slice(&self.value(table)[id * c..(id + 1) * c]);
        }
        let ng = self.ng(table);
        Ok(self.push(
            ids.len(),
            c,
            value,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Euclidean norm of all elements, as a `1×1` node.
    pub fn l2_norm(&mut self, x: Var) -> Var {
        let n = kernels::l2_norm(self.value(x));
        let ng = self.ng(x);
        self.push(1, 1, vec![n], Op::L2Norm(x), ng)
    }

    /// Sum over rows of `-log softmax(row)[target]`, as a `1×1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if targets.len() != r {
            return Err(Error::dim("cross_entropy", &[r, c], &[targets.len()]));
        }
        if c == 0 {
            return Err(Error::dim("cross_entropy", &[r, c], &[r, 1]));
        }
        let probs = kernels::softmax_rows(self.value(logits), c);
        let mut total = T::zero();
        for (&t, row) in targets.iter().zip(self.value(logits).chunks(c)) {
            if t >= c {
                return Err(Error::Index {
                    what: "class",
                    index: t,
                    bound: c,
                });
            }
            total = total + (kernels::log_sum_exp(row) - row[t]);
        }
        let ng = self.ng(logits);
        Ok(self.push(
            1,
            1,
            vec![total],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let (r, c) = self.shape(loss);
        if r * c != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {r}×{c}"
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let params = self.params.iter().map(|(&id, &v)| (id, v)).collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let acc = |grads: &mut [Option<Vec<T>>], v: Var, delta: Vec<T>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(delta) {
                        *e = *e + d;
                    }
                }
                slot => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                if self.ng(*a) {
                    acc(grads, *a, kernels::matmul_nt(g, self.value(*b), m, n, k));
                }
                if self.ng(*b) {
                    acc(grads, *b, kernels::matmul_tn(self.value(*a), g, m, k, n));
                }
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.to_vec());
                acc(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.to_vec());
                acc(grads, *b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                acc(grads, *a, g.iter().zip(bv).map(|(&x, &y)| x * y).collect());
                acc(grads, *b, g.iter().zip(av).map(|(&x, &y)| x * y).collect());
            }
            Op::AddRow(x, row) => {
                acc(grads, *x, g.to_vec());
                if self.ng(*row) {
                    let c = node.cols;
                    let mut db = vec![T::zero(); c];
                    for chunk in g.chunks(c) {
                        for (d, &v) in db.iter_mut().zip(chunk) {
                            *d = *d + v;
                        }
                    }
                    acc(grads, *row, db);
                }
            }
            Op::Scale(x, s) => acc(grads, *x, g.iter().map(|&v| v * *s).collect()),
            Op::Offset(x) => acc(grads, *x, g.to_vec()),
            Op::Transpose(x) => acc(grads, *x, kernels::transpose(g, node.rows, node.cols)),
            Op::Gelu(x) => {
                let xv = self.value(*x);
                acc(
                    grads,
                    *x,
                    g.iter().zip(xv).map(|(&d, &v)| d * kernels::gelu_grad(v)).collect(),
                );
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc(
                    grads,
                    *x,
                    g.iter()
                        .zip(xv)
                        .map(|(&d, &v)| if v > T::zero() { d } else { T::zero() })
                        .collect(),
                );
            }
            Op::Softmax(x) => {
                let c = node.cols;
                let y = &node.value;
                let mut dx = vec![T::zero(); y.len()];
                for ((yr, gr), dr) in y.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
                    let dot = kernels::dot(yr, gr);
                    for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = yv * (gv - dot);
                    }
                }
                acc(grads, *x, dx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let c = node.cols;
                let gv = self.value(*gain);
                if self.ng(*x) {
                    let n = T::of(c as f64);
                    let mut dx = vec![T::zero(); xhat.len()];
                    for (((xr, gr), dr), &rs) in xhat
                        .chunks(c)
                        .zip(g.chunks(c))
                        .zip(dx.chunks_mut(c))
                        .zip(rstd)
                    {
                        let dxhat: Vec<T> = gr.iter().zip(gv).map(|(&a, &b)| a * b).collect();
                        let sum: T = dxhat.iter().copied().sum();
                        let sum_x: T = dxhat.iter().zip(xr).map(|(&a, &b)| a * b).sum();
                        for ((d, &dh), &xh) in dr.iter_mut().zip(&dxhat).zip(xr) {
                            *d = rs / n * (n * dh - sum - xh * sum_x);
                        }
                    }
                    acc(grads, *x, dx);
                }
                if self.ng(*gain) {
                    let mut dg = vec![T::zero(); c];
                    for (xr, gr) in xhat.chunks(c).zip(g.chunks(c)) {
                        for ((d, &xh), &gg) in dg.iter_mut().zip(xr).zip(gr) {
                            *d = *d + xh * gg;
                        }
                    }
                    acc(grads, *gain, dg);
                }
                if self.ng(*bias) {
                    let mut db = vec![T::zero(); c];
                    for gr in g.chunks(c) {
                        for (d, &gg) in db.iter_mut().zip(gr) {
                            *d = *d + gg;
                        }
                    }
                    acc(grads, *bias, db);
                }
            }
            Op::MeanRows(x) => {
                let (r, c) = self.shape(*x);
                let inv = T::one() / T::of(r as f64);
                let mut dx = Vec::with_capacity(r * c);
                for _ in 0..r {
                    dx.extend(g.iter().map(|&v| v * inv));
                }
                acc(grads, *x, dx);
            }
            Op::Sum(x) => {
                let len = self.value(*x).len();
                acc(grads, *x, vec![g[0]; len]);
            }
            Op::SliceCols { x, start } => {
                let (r, c) = self.shape(*x);
                let len = node.cols;
                let mut dx = vec![T::zero(); r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + len]
                        .copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                acc(grads, *x, dx);
            }
            Op::SliceRows { x, start } => {
                let (r, c) = self.shape(*x);
                let mut dx = vec![T::zero(); r * c];
                dx[start * c..start * c + g.len()].copy_from_slice(g);
                acc(grads, *x, dx);
            }
            Op::ConcatCols(parts) => {
                let rows = node.rows;
                let total = node.cols;
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    if self.ng(p) {
                        let mut dp = Vec::with_capacity(rows * c);
                        for i in 0..rows {
                            dp.extend_from_slice(&g[i * total + offset..i * total + offset + c]);
                        }
                        acc(grads, p, dp);
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    acc(grads, p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::GatherRows { table, ids } => {
                let (r, c) = self.shape(*table);
                let mut dt = vec![T::zero(); r * c];
                for (t, &id) in ids.iter().enumerate() {
                    for (d, &v) in dt[id * c..(id + 1) * c].iter_mut().zip(&g[t * c..(t + 1) * c]) {
                        *d = *d + v;
                    }
                }
                acc(grads, *table, dt);
            }
            Op::L2Norm(x) => {
                let n = node.value[0];
                let xv = self.value(*x);
                // subgradient 0 at the origin
                let dx = if n == T::zero() {
                    vec![T::zero(); xv.len()]
                } else {
                    xv.iter().map(|&v| g[0] * v / n).collect()
                };
                acc(grads, *x, dx);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let c = self.shape(*logits).1;
                let mut dl: Vec<T> = probs.iter().map(|&p| p * g[0]).collect();
                for (i, &t) in targets.iter().enumerate() {
                    dl[i * c + t] = dl[i * c + t] - g[0];
                }
                acc(grads, *logits, dl);
            }
        }
    }
}

/// Result of a reverse sweep.
pub struct Gradients<T: Real> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`; `None` when `v` is not
    /// reachable from the loss or does not require a gradient.
    pub fn of(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of every trainable parameter that was placed on the
    /// tape into the store. Parameters on the tape but unreachable from the
    /// loss receive zeros.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        let mut params = self.params.clone();
        params.sort_by_key(|(id, _)| *id);
        for (id, var) in params {
            if store.is_frozen(id) {
                continue;
            }
            let len = store.tensor(id).len();
            let grad: Vec<f32> = match self.of(var) {
                Some(g) => g.iter().map(|&v| v.to_f32()).collect(),
                None => vec![0.0; len],
            };
            store.accumulate_grad(id, &grad)?;
        }
        Ok(())
    }
}
