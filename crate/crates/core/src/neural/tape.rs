use super::store::{ParamId, ParamStore};
use super::tensor::{sigmoid, Matrix};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    /// Rows gathered from a store parameter; avoids copying large tables.
    ParamRows {
        param: ParamId,
        rows: Vec<usize>,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    /// Softmax over a column vector.
    Softmax(NodeId),
    /// log(sum(exp(.))) over all entries, -> 1x1.
    LogSumExp(NodeId),
    Sum(NodeId),
    /// Column-wise sum over rows: (r x c) -> (1 x c).
    SumRows(NodeId),
    Dot(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    Reshape(NodeId),
    PickElem(NodeId, usize, usize),
    /// Column-wise max over rows: (r x c) -> (1 x c); ties go to the lowest row.
    MaxCols(NodeId),
    /// Matrix scaled by a 1x1 node.
    ScaleBy(NodeId, NodeId),
    /// One step of the CRF forward recursion in log space:
    /// out[j] = logsumexp_i(prev[i] + trans[i][j]) + emit[j].
    CrfStep {
        prev: NodeId,
        trans: NodeId,
        emit: NodeId,
    },
    /// Binary cross-entropy of sigmoid(logit) against a constant target.
    BceWithLogit {
        logit: NodeId,
        target: f64,
    },
}

/// A recorded forward computation. Build ops, then call [`Tape::backward_into`]
/// on a scalar loss to accumulate gradients into the store.
#[derive(Default)]
pub struct Tape {
    values: Vec<Matrix>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        let id = NodeId(self.values.len());
        self.values.push(value);
        self.ops.push(op);
        id
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.values[id.0]
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = &self.values[id.0];
        assert_eq!(v.shape(), (1, 1), "scalar() on non-scalar node");
        v.data()[0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn constant(&mut self, m: Matrix) -> NodeId {
        self.push(m, Op::Constant)
    }

    pub fn colvec(&mut self, values: &[f64]) -> NodeId {
        self.constant(Matrix::colvec(values))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.constant(Matrix::zeros(rows, cols))
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn param_rows(&mut self, store: &ParamStore, id: ParamId, rows: &[usize]) -> NodeId {
        let src = store.value(id);
        let mut out = Matrix::zeros(rows.len(), src.cols());
        for (k, &r) in rows.iter().enumerate() {
            out.row_mut(k).copy_from_slice(src.row(r));
        }
        self.push(
            out,
            Op::ParamRows {
                param: id,
                rows: rows.to_vec(),
            },
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.values[a.0].shape(), self.values[b.0].shape(), "add shapes");
        let mut out = self.values[a.0].clone();
        out.add_assign(&self.values[b.0]);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.values[a.0].shape(), self.values[b.0].shape(), "sub shapes");
        let bv = &self.values[b.0];
        let mut out = self.values[a.0].clone();
        for (o, &x) in out.data_mut().iter_mut().zip(bv.data()) {
            *o -= x;
        }
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.values[a.0].shape(), self.values[b.0].shape(), "mul shapes");
        let bv = &self.values[b.0];
        let mut out = self.values[a.0].clone();
        for (o, &x) in out.data_mut().iter_mut().zip(bv.data()) {
            *o *= x;
        }
        self.push(out, Op::Mul(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.values[a.0].matmul(&self.values[b.0]);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.values[a.0].map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.values[a.0].map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = &self.values[a.0];
        assert_eq!(v.cols(), 1, "softmax expects a column vector");
        let out = Matrix::colvec(&super::tensor::softmax(v.data()));
        self.push(out, Op::Softmax(a))
    }

    pub fn log_sum_exp(&mut self, a: NodeId) -> NodeId {
        let v = super::tensor::log_sum_exp(self.values[a.0].data());
        self.push(Matrix::from_vec(1, 1, vec![v]), Op::LogSumExp(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v: f64 = self.values[a.0].data().iter().sum();
        self.push(Matrix::from_vec(1, 1, vec![v]), Op::Sum(a))
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let v = &self.values[a.0];
        let mut out = Matrix::zeros(1, v.cols());
        for i in 0..v.rows() {
            for (o, &x) in out.data_mut().iter_mut().zip(v.row(i)) {
                *o += x;
            }
        }
        self.push(out, Op::SumRows(a))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.values[a.0].len(), self.values[b.0].len(), "dot lengths");
        let v: f64 = self.values[a.0]
            .data()
            .iter()
            .zip(self.values[b.0].data())
            .map(|(&x, &y)| x * y)
            .sum();
        self.push(Matrix::from_vec(1, 1, vec![v]), Op::Dot(a, b))
    }

    /// Stack nodes vertically; all must share the column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.values[parts[0].0].cols();
        let rows: usize = parts.iter().map(|p| self.values[p.0].rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            let v = &self.values[p.0];
            assert_eq!(v.cols(), cols, "concat_rows column counts");
            data.extend_from_slice(v.data());
        }
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    /// Reinterpret the row-major data with a new shape.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let v = &self.values[a.0];
        assert_eq!(v.len(), rows * cols, "reshape size");
        let out = Matrix::from_vec(rows, cols, v.data().to_vec());
        self.push(out, Op::Reshape(a))
    }

    pub fn pick(&mut self, a: NodeId, i: usize, j: usize) -> NodeId {
        let v = self.values[a.0].get(i, j);
        self.push(Matrix::from_vec(1, 1, vec![v]), Op::PickElem(a, i, j))
    }

    pub fn max_cols(&mut self, a: NodeId) -> NodeId {
        let v = &self.values[a.0];
        let mut out = Matrix::zeros(1, v.cols());
        for j in 0..v.cols() {
            let mut best = f64::NEG_INFINITY;
            for i in 0..v.rows() {
                let x = v.get(i, j);
                if x > best {
                    best = x;
                }
            }
            out.set(0, j, best);
        }
        self.push(out, Op::MaxCols(a))
    }

    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let c = self.scalar_of(s);
        let out = self.values[a.0].map(|x| x * c);
        self.push(out, Op::ScaleBy(a, s))
    }

    fn scalar_of(&self, id: NodeId) -> f64 {
        let v = &self.values[id.0];
        assert_eq!(v.shape(), (1, 1), "expected 1x1 node");
        v.data()[0]
    }

    /// One CRF forward-recursion step; `prev` and `emit` are (L x 1), `trans` (L x L).
    pub fn crf_step(&mut self, prev: NodeId, trans: NodeId, emit: NodeId) -> NodeId {
        let p = &self.values[prev.0];
        let t = &self.values[trans.0];
        let e = &self.values[emit.0];
        let l = p.rows();
        assert_eq!(t.shape(), (l, l), "crf_step transition shape");
        assert_eq!(e.shape(), (l, 1), "crf_step emission shape");
        let mut out = Matrix::zeros(l, 1);
        let mut scores = vec![0.0; l];
        for j in 0..l {
            for i in 0..l {
                scores[i] = p.get(i, 0) + t.get(i, j);
            }
            out.set(j, 0, super::tensor::log_sum_exp(&scores) + e.get(j, 0));
        }
        self.push(out, Op::CrfStep { prev, trans, emit })
    }

    /// Stable BCE of sigmoid(logit) against `target`; `logit` is 1x1.
    pub fn bce_with_logit(&mut self, logit: NodeId, target: f64) -> NodeId {
        let l = self.scalar_of(logit);
        let loss = l.max(0.0) - target * l + (-l.abs()).exp().ln_1p();
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::BceWithLogit { logit, target },
        )
    }

    /// Reverse pass from a scalar loss; accumulates parameter gradients into
    /// the store. Errors if the loss node is not 1x1 or is non-finite.
    pub fn backward_into(&mut self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if self.values[loss.0].shape() != (1, 1) {
            return Err(Error::Train(
                "backward requires a scalar (1x1) loss node".into(),
            ));
        }
        if !self.values[loss.0].data()[0].is_finite() {
            return Err(Error::Train(format!(
                "non-finite loss {}; aborting backward",
                self.values[loss.0].data()[0]
            )));
        }
        let n = self.values.len();
        let mut grads: Vec<Option<Matrix>> = vec![None; n];
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        for idx in (0..n).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.ops[idx] {
                Op::Constant => {}
                Op::Param(p) => {
                    store.grad_mut(*p).add_assign(&g);
                }
                Op::ParamRows { param, rows } => {
                    let gm = store.grad_mut(*param);
                    for (k, &r) in rows.iter().enumerate() {
                        for (o, &x) in gm.row_mut(r).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, &g);
                    accumulate(&mut grads, b, &g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, &g);
                    let mut neg = g.clone();
                    neg.scale_assign(-1.0);
                    accumulate(&mut grads, b, &neg);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let mut ga = g.clone();
                    for (o, &x) in ga.data_mut().iter_mut().zip(self.values[b.0].data()) {
                        *o *= x;
                    }
                    let mut gb = g.clone();
                    for (o, &x) in gb.data_mut().iter_mut().zip(self.values[a.0].data()) {
                        *o *= x;
                    }
                    accumulate(&mut grads, a, &ga);
                    accumulate(&mut grads, b, &gb);
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = g.matmul_nt(&self.values[b.0]);
                    let gb = self.values[a.0].matmul_tn(&g);
                    accumulate(&mut grads, a, &ga);
                    accumulate(&mut grads, b, &gb);
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    let mut ga = g.clone();
                    ga.scale_assign(c);
                    accumulate(&mut grads, a, &ga);
                }
                Op::AddScalar(a) => {
                    let a = *a;
                    accumulate(&mut grads, a, &g);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = &self.values[idx];
                    let mut ga = g.clone();
                    for (o, &s) in ga.data_mut().iter_mut().zip(y.data()) {
                        *o *= s * (1.0 - s);
                    }
                    accumulate(&mut grads, a, &ga);
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = &self.values[idx];
                    let mut ga = g.clone();
                    for (o, &t) in ga.data_mut().iter_mut().zip(y.data()) {
                        *o *= 1.0 - t * t;
                    }
                    accumulate(&mut grads, a, &ga);
                }
                Op::Softmax(a) => {
                    let a = *a;
                    let y = self.values[idx].data();
                    let dot: f64 = y.iter().zip(g.data()).map(|(&yi, &gi)| yi * gi).sum();
                    let data: Vec<f64> = y
                        .iter()
                        .zip(g.data())
                        .map(|(&yi, &gi)| yi * (gi - dot))
                        .collect();
                    let ga = Matrix::from_vec(y.len(), 1, data);
                    accumulate(&mut grads, a, &ga);
                }
                Op::LogSumExp(a) => {
                    let a = *a;
                    let v = &self.values[a.0];
                    let w = super::tensor::softmax(v.data());
                    let gy = g.data()[0];
                    let ga = Matrix::from_vec(
                        v.rows(),
                        v.cols(),
                        w.iter().map(|&x| x * gy).collect(),
                    );
                    accumulate(&mut grads, a, &ga);
                }
                Op::Sum(a) => {
                    let a = *a;
                    let v = &self.values[a.0];
                    let gy = g.data()[0];
                    let ga = Matrix::from_vec(v.rows(), v.cols(), vec![gy; v.len()]);
                    accumulate(&mut grads, a, &ga);
                }
                Op::SumRows(a) => {
                    let a = *a;
                    let v = &self.values[a.0];
                    let mut ga = Matrix::zeros(v.rows(), v.cols());
                    for i in 0..v.rows() {
                        ga.row_mut(i).copy_from_slice(g.data());
                    }
                    accumulate(&mut grads, a, &ga);
                }
                Op::Dot(a, b) => {
                    let (a, b) = (*a, *b);
                    let gy = g.data()[0];
                    let va = &self.values[a.0];
                    let vb = &self.values[b.0];
                    let ga = Matrix::from_vec(
                        va.rows(),
                        va.cols(),
                        vb.data().iter().map(|&x| x * gy).collect(),
                    );
                    let gb = Matrix::from_vec(
                        vb.rows(),
                        vb.cols(),
                        va.data().iter().map(|&x| x * gy).collect(),
                    );
                    accumulate(&mut grads, a, &ga);
                    accumulate(&mut grads, b, &gb);
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let v = &self.values[p.0];
                        let take = v.len();
                        let gp = Matrix::from_vec(
                            v.rows(),
                            v.cols(),
                            g.data()[offset..offset + take].to_vec(),
                        );
                        offset += take;
                        accumulate(&mut grads, p, &gp);
                    }
                }
                Op::Reshape(a) => {
                    let a = *a;
                    let v = &self.values[a.0];
                    let ga = Matrix::from_vec(v.rows(), v.cols(), g.data().to_vec());
                    accumulate(&mut grads, a, &ga);
                }
                Op::PickElem(a, i, j) => {
                    let (a, i, j) = (*a, *i, *j);
                    let v = &self.values[a.0];
                    let mut ga = Matrix::zeros(v.rows(), v.cols());
                    ga.set(i, j, g.data()[0]);
                    accumulate(&mut grads, a, &ga);
                }
                Op::MaxCols(a) => {
                    let a = *a;
                    let v = &self.values[a.0];
                    let mut ga = Matrix::zeros(v.rows(), v.cols());
                    for j in 0..v.cols() {
                        let mut arg = 0;
                        let mut best = f64::NEG_INFINITY;
                        for i in 0..v.rows() {
                            let x = v.get(i, j);
                            if x > best {
                                best = x;
                                arg = i;
                            }
                        }
                        ga.set(arg, j, g.get(0, j));
                    }
                    accumulate(&mut grads, a, &ga);
                }
                Op::ScaleBy(a, s) => {
                    let (a, s) = (*a, *s);
                    let c = self.values[s.0].data()[0];
                    let mut ga = g.clone();
                    ga.scale_assign(c);
                    let ds: f64 = g
                        .data()
                        .iter()
                        .zip(self.values[a.0].data())
                        .map(|(&gi, &ai)| gi * ai)
                        .sum();
                    accumulate(&mut grads, a, &ga);
                    accumulate(&mut grads, s, &Matrix::from_vec(1, 1, vec![ds]));
                }
                Op::CrfStep { prev, trans, emit } => {
                    let (prev, trans, emit) = (*prev, *trans, *emit);
                    let p = &self.values[prev.0];
                    let t = &self.values[trans.0];
                    let l = p.rows();
                    let mut gp = Matrix::zeros(l, 1);
                    let mut gt = Matrix::zeros(l, l);
                    let mut scores = vec![0.0; l];
                    for j in 0..l {
                        let gj = g.get(j, 0);
                        for i in 0..l {
                            scores[i] = p.get(i, 0) + t.get(i, j);
                        }
                        let w = super::tensor::softmax(&scores);
                        for i in 0..l {
                            let contrib = gj * w[i];
                            gp.set(i, 0, gp.get(i, 0) + contrib);
                            gt.set(i, j, gt.get(i, j) + contrib);
                        }
                    }
                    accumulate(&mut grads, prev, &gp);
                    accumulate(&mut grads, trans, &gt);
                    accumulate(&mut grads, emit, &g);
                }
                Op::BceWithLogit { logit, target } => {
                    let (logit, target) = (*logit, *target);
                    let l = self.values[logit.0].data()[0];
                    let gl = g.data()[0] * (sigmoid(l) - target);
                    accumulate(&mut grads, logit, &Matrix::from_vec(1, 1, vec![gl]));
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: &Matrix) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::store::seeded_rng;

    #[test]
    fn sum_of_squares_gradient() {
        // loss = sum(w^2)  =>  dloss/dw = 2w
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::colvec(&[1.5, -2.0, 0.25]));
        let mut tape = Tape::new();
        let wn = tape.param(&store, w);
        let sq = tape.mul(wn, wn);
        let loss = tape.sum(sq);
        tape.backward_into(loss, &mut store).unwrap();
        let g = store.grad(w);
        assert_eq!(g.data(), &[3.0, -4.0, 0.5]);
    }

    #[test]
    fn bce_gradient_at_half() {
        // p = sigmoid(0) = 0.5, y = 1  =>  dloss/dlogit = -0.5
        let mut store = ParamStore::new();
        let l = store.add("logit", Matrix::from_vec(1, 1, vec![0.0]));
        let mut tape = Tape::new();
        let ln = tape.param(&store, l);
        let loss = tape.bce_with_logit(ln, 1.0);
        tape.backward_into(loss, &mut store).unwrap();
        assert!((store.grad(l).data()[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        let mut rng = seeded_rng(3);
        let mut store = ParamStore::new();
        let a = store.add_xavier(&mut rng, "a", 3, 4);
        let b = store.add_xavier(&mut rng, "b", 4, 2);
        let loss_of = |store: &ParamStore| {
            let mut t = Tape::new();
            let an = t.param(store, a);
            let bn = t.param(store, b);
            let c = t.matmul(an, bn);
            let sq = t.mul(c, c);
            let l = t.sum(sq);
            (t, l)
        };
        let (mut tape, loss) = loss_of(&store);
        tape.backward_into(loss, &mut store).unwrap();
        let h = 1e-6;
        for id in [a, b] {
            for k in 0..store.value(id).len() {
                let orig = store.value(id).data()[k];
                store.value_mut(id).data_mut()[k] = orig + h;
                let (tp, lp) = loss_of(&store);
                let up = tp.scalar(lp);
                store.value_mut(id).data_mut()[k] = orig - h;
                let (tm, lm) = loss_of(&store);
                let down = tm.scalar(lm);
                store.value_mut(id).data_mut()[k] = orig;
                let num = (up - down) / (2.0 * h);
                let ana = store.grad(id).data()[k];
                assert!((num - ana).abs() <= 1e-6 * (1.0 + num.abs()));
            }
        }
    }

    #[test]
    fn softmax_node_is_simplex_and_shift_invariant() {
        let mut tape = Tape::new();
        let v = tape.colvec(&[0.3, -1.0, 2.0]);
        let s = tape.softmax(v);
        let sum: f64 = tape.value(s).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let v2 = tape.colvec(&[100.3, 99.0, 102.0]);
        let s2 = tape.softmax(v2);
        for (x, y) in tape.value(s).data().iter().zip(tape.value(s2).data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let v = tape.colvec(&[1.0, 2.0]);
        assert!(tape.backward_into(v, &mut store).is_err());
    }
}
