//! Dense f64 tensors on a dynamic tape with reverse-mode differentiation.
//!
//! Every operation appends a node to the [`Tape`] as it executes, so the node
//! order is already topological. [`Tape::backward`] walks the nodes once in
//! reverse, accumulating gradients additively into every `requires_grad`
//! ancestor of the loss. Gradients are never cleared implicitly: callers zero
//! them between optimizer steps and truncate the tape back to the parameter
//! prefix after each step.
//!
//! Scalars have the empty shape `[]`, vectors `[n]`, matrices `[r, c]`
//! (row-major). Elementwise operations broadcast only between a scalar and a
//! tensor; anything richer is out of scope.

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Neg(TensorId),
    Scale(TensorId, f64),
    Tanh(TensorId),
    Sigmoid(TensorId),
    Exp(TensorId),
    Log(TensorId),
    MatMul(TensorId, TensorId),
    MatVec(TensorId, TensorId),
    Sum(TensorId),
    LogSumExp(TensorId),
    /// Column-wise log-sum-exp of an r x c matrix, yielding a length-c vector.
    LogSumExpCols(TensorId),
    /// out[i][j] = m[i][j] + v[i] for an r x c matrix and a length-r vector.
    AddColBroadcast(TensorId, TensorId),
    Concat(Vec<TensorId>),
    Slice { input: TensorId, start: usize },
    Row { input: TensorId, index: usize },
    Elem { input: TensorId, index: usize },
    StackRows(Vec<TensorId>),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Record of executed operations plus the values (and gradients) they produced.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Number of recorded nodes. Pair with [`Tape::truncate`] to roll the tape
    /// back to a parameter-only prefix between training steps.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node at index `>= len`. Handles into the dropped suffix
    /// become invalid; parameter handles below `len` stay usable.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn numel(&self, id: TensorId) -> usize {
        self.nodes[id.0].data.len()
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn data_mut(&mut self, id: TensorId) -> &mut [f64] {
        &mut self.nodes[id.0].data
    }

    /// Scalar convenience accessor: the first (usually only) element.
    pub fn value(&self, id: TensorId) -> f64 {
        self.nodes[id.0].data[0]
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Sets the gradients of `ids` to zero, allocating buffers if absent.
    pub fn zero_grad(&mut self, ids: &[TensorId]) {
        for &id in ids {
            let node = &mut self.nodes[id.0];
            match node.grad.as_mut() {
                Some(g) => g.iter_mut().for_each(|x| *x = 0.0),
                None => node.grad = Some(vec![0.0; node.data.len()]),
            }
        }
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> TensorId {
        debug_assert_eq!(numel_of(&shape), data.len());
        self.nodes.push(Node {
            shape,
            data,
            grad: None,
            requires_grad,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Registers a leaf tensor. `shape` must multiply out to `data.len()`.
    pub fn leaf(&mut self, data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<TensorId> {
        if numel_of(shape) != data.len() {
            return Err(Error::Argument(format!(
                "leaf shape {:?} implies {} elements but data has {}",
                shape,
                numel_of(shape),
                data.len()
            )));
        }
        if data.is_empty() {
            return Err(Error::Argument("zero-size tensors are not supported".into()));
        }
        Ok(self.push(shape.to_vec(), data, requires_grad, Op::Leaf))
    }

    /// Trainable leaf.
    pub fn param(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<TensorId> {
        self.leaf(data, shape, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<TensorId> {
        self.leaf(data, shape, false)
    }

    pub fn scalar(&mut self, value: f64) -> TensorId {
        self.push(vec![], vec![value], false, Op::Leaf)
    }

    pub fn zeros(&mut self, shape: &[usize], requires_grad: bool) -> TensorId {
        self.push(shape.to_vec(), vec![0.0; numel_of(shape)], requires_grad, Op::Leaf)
    }

    fn wants_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn either_grad(&self, a: TensorId, b: TensorId) -> bool {
        self.wants_grad(a) || self.wants_grad(b)
    }

    // ---- elementwise ----

    fn broadcast_shape(&self, op: &'static str, a: TensorId, b: TensorId) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(sa.to_vec())
        } else if self.numel(a) == 1 {
            Ok(sb.to_vec())
        } else if self.numel(b) == 1 {
            Ok(sa.to_vec())
        } else {
            Err(Error::Dimension {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            })
        }
    }

    fn ew2(&mut self, op_name: &'static str, a: TensorId, b: TensorId, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<TensorId> {
        let shape = self.broadcast_shape(op_name, a, b)?;
        let (ad, bd) = (self.data(a), self.data(b));
        let data = if ad.len() == bd.len() {
            ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect()
        } else if ad.len() == 1 {
            bd.iter().map(|&y| f(ad[0], y)).collect()
        } else {
            ad.iter().map(|&x| f(x, bd[0])).collect()
        };
        let rg = self.either_grad(a, b);
        Ok(self.push(shape, data, rg, op))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.ew2("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.ew2("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.ew2("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        let data = self.data(a).iter().map(|&x| -x).collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.wants_grad(a));
        self.push(shape, data, rg, Op::Neg(a))
    }

    /// Multiplication by a plain constant (no node is created for the constant).
    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let data = self.data(a).iter().map(|&x| c * x).collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.wants_grad(a));
        self.push(shape, data, rg, Op::Scale(a, c))
    }

    fn unary(&mut self, a: TensorId, f: impl Fn(f64) -> f64, op: Op) -> TensorId {
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.wants_grad(a));
        self.push(shape, data, rg, op)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        if let Some(&bad) = self.data(a).iter().find(|x| **x <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                message: format!("log of non-positive value {bad}"),
            });
        }
        Ok(self.unary(a, f64::ln, Op::Log(a)))
    }

    // ---- linear algebra ----

    fn matrix_dims(&self, op: &'static str, id: TensorId) -> Result<(usize, usize)> {
        match self.shape(id) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Dimension {
                op,
                left: s.to_vec(),
                right: vec![],
            }),
        }
    }

    /// `a` is m x k, `b` is k x n; the result is m x n.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, ka) = self.matrix_dims("matmul", a)?;
        let (kb, n) = self.matrix_dims("matmul", b)?;
        if ka != kb {
            return Err(Error::Dimension {
                op: "matmul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let (ad, bd) = (self.data(a), self.data(b));
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for l in 0..ka {
                let av = ad[i * ka + l];
                let brow = &bd[l * n..(l + 1) * n];
                let orow = &mut data[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let rg = self.either_grad(a, b);
        Ok(self.push(vec![m, n], data, rg, Op::MatMul(a, b)))
    }

    /// `a` is m x k, `x` is a length-k vector; the result is a length-m vector.
    pub fn matvec(&mut self, a: TensorId, x: TensorId) -> Result<TensorId> {
        let (m, k) = self.matrix_dims("matvec", a)?;
        if self.shape(x) != [k] {
            return Err(Error::Dimension {
                op: "matvec",
                left: self.shape(a).to_vec(),
                right: self.shape(x).to_vec(),
            });
        }
        let (ad, xd) = (self.data(a), self.data(x));
        let data: Vec<f64> = (0..m)
            .map(|i| {
                let row = &ad[i * k..(i + 1) * k];
                row.iter().zip(xd).map(|(&w, &v)| w * v).sum()
            })
            .collect();
        let rg = self.either_grad(a, x);
        Ok(self.push(vec![m], data, rg, Op::MatVec(a, x)))
    }

    // ---- reductions ----

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total: f64 = self.data(a).iter().sum();
        let rg = self.wants_grad(a);
        self.push(vec![], vec![total], rg, Op::Sum(a))
    }

    /// log(sum(exp(x))) over all elements, computed as m + log(sum(exp(x - m)))
    /// with m = max(x), so `logsumexp(x) >= max(x)` holds exactly.
    pub fn logsumexp(&mut self, a: TensorId) -> Result<TensorId> {
        if self.numel(a) == 0 {
            return Err(Error::Argument("logsumexp of an empty tensor".into()));
        }
        let v = stable_lse(self.data(a));
        let rg = self.wants_grad(a);
        Ok(self.push(vec![], vec![v], rg, Op::LogSumExp(a)))
    }

    /// Column-wise log-sum-exp: for an r x c input the result is length c.
    pub fn logsumexp_cols(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.matrix_dims("logsumexp_cols", a)?;
        let ad = self.data(a);
        let data: Vec<f64> = (0..c)
            .map(|j| {
                let col: Vec<f64> = (0..r).map(|i| ad[i * c + j]).collect();
                stable_lse(&col)
            })
            .collect();
        let rg = self.wants_grad(a);
        Ok(self.push(vec![c], data, rg, Op::LogSumExpCols(a)))
    }

    /// Adds vector `v` (length r) down the columns of the r x c matrix `m`.
    pub fn add_col_broadcast(&mut self, m: TensorId, v: TensorId) -> Result<TensorId> {
        let (r, c) = self.matrix_dims("add_col_broadcast", m)?;
        if self.shape(v) != [r] {
            return Err(Error::Dimension {
                op: "add_col_broadcast",
                left: self.shape(m).to_vec(),
                right: self.shape(v).to_vec(),
            });
        }
        let (md, vd) = (self.data(m), self.data(v));
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(md[i * c + j] + vd[i]);
            }
        }
        let rg = self.either_grad(m, v);
        Ok(self.push(vec![r, c], data, rg, Op::AddColBroadcast(m, v)))
    }

    // ---- structural ----

    /// Concatenates vectors into one longer vector.
    pub fn concat(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::Argument("concat of zero tensors".into()));
        }
        let mut data = Vec::new();
        let mut rg = false;
        for &p in parts {
            data.extend_from_slice(self.data(p));
            rg |= self.wants_grad(p);
        }
        let n = data.len();
        Ok(self.push(vec![n], data, rg, Op::Concat(parts.to_vec())))
    }

    /// Contiguous slice `[start, start+len)` of a vector.
    pub fn slice(&mut self, a: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let n = self.numel(a);
        if start + len > n || len == 0 {
            return Err(Error::Argument(format!(
                "slice [{start}, {}) out of range for length {n}",
                start + len
            )));
        }
        let data = self.data(a)[start..start + len].to_vec();
        let rg = self.wants_grad(a);
        Ok(self.push(vec![len], data, rg, Op::Slice { input: a, start }))
    }

    /// Row `index` of a matrix, as a vector.
    pub fn row(&mut self, a: TensorId, index: usize) -> Result<TensorId> {
        let (r, c) = self.matrix_dims("row", a)?;
        if index >= r {
            return Err(Error::Argument(format!(
                "row index {index} out of range for {r} rows"
            )));
        }
        let data = self.data(a)[index * c..(index + 1) * c].to_vec();
        let rg = self.wants_grad(a);
        Ok(self.push(vec![c], data, rg, Op::Row { input: a, index }))
    }

    /// Single element of a vector, as a scalar.
    pub fn elem(&mut self, a: TensorId, index: usize) -> Result<TensorId> {
        let n = self.numel(a);
        if index >= n {
            return Err(Error::Argument(format!(
                "element index {index} out of range for length {n}"
            )));
        }
        let v = self.data(a)[index];
        let rg = self.wants_grad(a);
        Ok(self.push(vec![], vec![v], rg, Op::Elem { input: a, index }))
    }

    /// Stacks equal-length vectors as the rows of a new matrix.
    pub fn stack_rows(&mut self, rows: &[TensorId]) -> Result<TensorId> {
        if rows.is_empty() {
            return Err(Error::Argument("stack_rows of zero rows".into()));
        }
        let c = self.numel(rows[0]);
        let mut data = Vec::with_capacity(rows.len() * c);
        let mut rg = false;
        for &r in rows {
            if self.numel(r) != c {
                return Err(Error::Dimension {
                    op: "stack_rows",
                    left: vec![c],
                    right: self.shape(r).to_vec(),
                });
            }
            data.extend_from_slice(self.data(r));
            rg |= self.wants_grad(r);
        }
        Ok(self.push(vec![rows.len(), c], data, rg, Op::StackRows(rows.to_vec())))
    }

    // ---- backward ----

    /// Accumulates d(loss)/d(node) into every `requires_grad` ancestor of
    /// `loss`. Repeated calls keep accumulating; nothing is zeroed here. Each
    /// pass propagates only its own contributions (held in a per-pass pending
    /// buffer), so gradients left over from earlier passes are never
    /// re-propagated.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.numel(loss) != 1 {
            return Err(Error::Argument(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.wants_grad(loss) {
            return Ok(()); // nothing reachable is trainable
        }
        let mut pending: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(gout) = pending[idx].take() else {
                continue;
            };
            // fold this pass's contribution into the persistent record
            {
                let node = &mut self.nodes[idx];
                let g = node.grad.get_or_insert_with(|| vec![0.0; node.data.len()]);
                for (gi, &ci) in g.iter_mut().zip(&gout) {
                    *gi += ci;
                }
            }
            let op = self.nodes[idx].op.clone();
            let p = &mut pending;
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.pend_bcast(p, a, &gout, None, false);
                    self.pend_bcast(p, b, &gout, None, false);
                }
                Op::Sub(a, b) => {
                    self.pend_bcast(p, a, &gout, None, false);
                    self.pend_bcast(p, b, &gout, None, true);
                }
                Op::Mul(a, b) => {
                    self.pend_bcast(p, a, &gout, Some(b), false);
                    self.pend_bcast(p, b, &gout, Some(a), false);
                }
                Op::Neg(a) => self.pend_bcast(p, a, &gout, None, true),
                Op::Scale(a, c) => {
                    if self.wants_grad(a) {
                        let contrib: Vec<f64> = gout.iter().map(|&g| c * g).collect();
                        self.pend(p, a, &contrib);
                    }
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].data;
                    let contrib: Vec<f64> =
                        gout.iter().zip(y).map(|(&g, &t)| g * (1.0 - t * t)).collect();
                    self.pend(p, a, &contrib);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[idx].data;
                    let contrib: Vec<f64> =
                        gout.iter().zip(y).map(|(&g, &s)| g * s * (1.0 - s)).collect();
                    self.pend(p, a, &contrib);
                }
                Op::Exp(a) => {
                    let y = &self.nodes[idx].data;
                    let contrib: Vec<f64> = gout.iter().zip(y).map(|(&g, &e)| g * e).collect();
                    self.pend(p, a, &contrib);
                }
                Op::Log(a) => {
                    if self.wants_grad(a) {
                        let contrib: Vec<f64> = gout
                            .iter()
                            .zip(self.data(a))
                            .map(|(&g, &x)| g / x)
                            .collect();
                        self.pend(p, a, &contrib);
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                    let n = self.shape(b)[1];
                    if self.wants_grad(a) {
                        // dA = dC . B^T
                        let bd = self.data(b);
                        let mut contrib = vec![0.0; m * k];
                        for i in 0..m {
                            let grow = &gout[i * n..(i + 1) * n];
                            for l in 0..k {
                                let brow = &bd[l * n..(l + 1) * n];
                                contrib[i * k + l] =
                                    grow.iter().zip(brow).map(|(&g, &bv)| g * bv).sum();
                            }
                        }
                        self.pend(p, a, &contrib);
                    }
                    if self.wants_grad(b) {
                        // dB = A^T . dC
                        let ad = self.data(a);
                        let mut contrib = vec![0.0; k * n];
                        for i in 0..m {
                            let grow = &gout[i * n..(i + 1) * n];
                            for l in 0..k {
                                let av = ad[i * k + l];
                                let crow = &mut contrib[l * n..(l + 1) * n];
                                for (cv, &g) in crow.iter_mut().zip(grow) {
                                    *cv += av * g;
                                }
                            }
                        }
                        self.pend(p, b, &contrib);
                    }
                }
                Op::MatVec(a, x) => {
                    let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                    if self.wants_grad(a) {
                        let xd = self.data(x);
                        let mut contrib = vec![0.0; m * k];
                        for i in 0..m {
                            let g = gout[i];
                            let crow = &mut contrib[i * k..(i + 1) * k];
                            for (cv, &xv) in crow.iter_mut().zip(xd) {
                                *cv = g * xv;
                            }
                        }
                        self.pend(p, a, &contrib);
                    }
                    if self.wants_grad(x) {
                        let ad = self.data(a);
                        let mut contrib = vec![0.0; k];
                        for i in 0..m {
                            let g = gout[i];
                            let arow = &ad[i * k..(i + 1) * k];
                            for (cv, &av) in contrib.iter_mut().zip(arow) {
                                *cv += g * av;
                            }
                        }
                        self.pend(p, x, &contrib);
                    }
                }
                Op::Sum(a) => {
                    if self.wants_grad(a) {
                        let contrib = vec![gout[0]; self.numel(a)];
                        self.pend(p, a, &contrib);
                    }
                }
                Op::LogSumExp(a) => {
                    if self.wants_grad(a) {
                        let out = self.nodes[idx].data[0];
                        let contrib: Vec<f64> = self
                            .data(a)
                            .iter()
                            .map(|&x| gout[0] * (x - out).exp())
                            .collect();
                        self.pend(p, a, &contrib);
                    }
                }
                Op::LogSumExpCols(a) => {
                    if self.wants_grad(a) {
                        let (r, c) = (self.shape(a)[0], self.shape(a)[1]);
                        let out = &self.nodes[idx].data;
                        let ad = self.data(a);
                        let mut contrib = vec![0.0; r * c];
                        for i in 0..r {
                            for j in 0..c {
                                contrib[i * c + j] = gout[j] * (ad[i * c + j] - out[j]).exp();
                            }
                        }
                        self.pend(p, a, &contrib);
                    }
                }
                Op::AddColBroadcast(m, v) => {
                    let (r, c) = (self.shape(m)[0], self.shape(m)[1]);
                    self.pend_bcast(p, m, &gout, None, false);
                    if self.wants_grad(v) {
                        let contrib: Vec<f64> = (0..r)
                            .map(|i| gout[i * c..(i + 1) * c].iter().sum())
                            .collect();
                        self.pend(p, v, &contrib);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for part in parts {
                        let n = self.numel(part);
                        self.pend(p, part, &gout[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Slice { input, start } => {
                    self.pend_at(p, input, start, &gout);
                }
                Op::Row { input, index } => {
                    let c = gout.len();
                    self.pend_at(p, input, index * c, &gout);
                }
                Op::Elem { input, index } => {
                    self.pend_at(p, input, index, &gout);
                }
                Op::StackRows(rows) => {
                    let c = self.numel(rows[0]);
                    for (i, row) in rows.into_iter().enumerate() {
                        self.pend(p, row, &gout[i * c..(i + 1) * c]);
                    }
                }
            }
        }
        Ok(())
    }

    fn pend(&self, pending: &mut [Option<Vec<f64>>], id: TensorId, contrib: &[f64]) {
        if !self.wants_grad(id) {
            return;
        }
        let buf = pending[id.0].get_or_insert_with(|| vec![0.0; self.numel(id)]);
        for (bi, &ci) in buf.iter_mut().zip(contrib) {
            *bi += ci;
        }
    }

    /// Scatters `contrib` into the pending buffer of `id` at `offset`.
    fn pend_at(&self, pending: &mut [Option<Vec<f64>>], id: TensorId, offset: usize, contrib: &[f64]) {
        if !self.wants_grad(id) {
            return;
        }
        let buf = pending[id.0].get_or_insert_with(|| vec![0.0; self.numel(id)]);
        for (bi, &ci) in buf[offset..offset + contrib.len()].iter_mut().zip(contrib) {
            *bi += ci;
        }
    }

    /// Adds `gout` (or its weighted/summed form for broadcast operands) into
    /// the pending buffer of `id`.
    fn pend_bcast(
        &self,
        pending: &mut [Option<Vec<f64>>],
        id: TensorId,
        gout: &[f64],
        weight: Option<TensorId>,
        negate: bool,
    ) {
        if !self.wants_grad(id) {
            return;
        }
        let sign = if negate { -1.0 } else { 1.0 };
        let n = self.numel(id);
        if n == gout.len() {
            let contrib: Vec<f64> = match weight {
                Some(w) => {
                    let wd = self.data(w);
                    if wd.len() == gout.len() {
                        gout.iter().zip(wd).map(|(&g, &x)| sign * g * x).collect()
                    } else {
                        gout.iter().map(|&g| sign * g * wd[0]).collect()
                    }
                }
                None => gout.iter().map(|&g| sign * g).collect(),
            };
            self.pend(pending, id, &contrib);
        } else {
            // scalar operand broadcast across gout
            debug_assert_eq!(n, 1);
            let total: f64 = match weight {
                Some(w) => {
                    let wd = self.data(w);
                    gout.iter().zip(wd).map(|(&g, &x)| g * x).sum()
                }
                None => gout.iter().sum(),
            };
            self.pend(pending, id, &[sign * total]);
        }
    }
}

fn stable_lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}
