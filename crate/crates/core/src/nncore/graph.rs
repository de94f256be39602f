//! Define-by-run reverse-mode automatic differentiation on 2-D f64 tensors.
//!
//! A [`Graph`] is rebuilt per step; ops compute values eagerly and record
//! enough to run the backward sweep. All ops are single-threaded and
//! deterministic: gradients accumulate in fixed reverse creation order.

use ndarray::{Array2, Axis};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Adds a 1 x n row vector to every row.
    AddRow(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    /// k * x + c, elementwise with scalar constants.
    Affine(NodeId, f64, f64),
    /// Clamp to [lo, hi]; gradient passes only strictly inside the range.
    Clamp(NodeId, f64, f64),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize, usize),
    /// Row r of the output is row `indices[r]` of the table.
    GatherRows(NodeId, Vec<usize>),
    /// y[b, m] = sum_k (a[b, k] - t[m, k])^2.
    PairwiseSqDist(NodeId, NodeId),
    /// Row-wise log-sum-exp with the usual max shift; output B x 1.
    LogSumExpRows(NodeId),
    /// Row sums; output B x 1.
    SumRows(NodeId),
    /// Sum of all elements; output 1 x 1.
    SumAll(NodeId),
    /// Mean cross-entropy of row-wise softmax vs integer labels; output 1 x 1.
    SoftmaxCrossEntropy(NodeId, Vec<usize>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar node. Only leaf gradients remain readable after
/// the sweep; interior gradients are consumed as they propagate.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.grads[id.0].as_ref()
    }

    /// Gradient for `id`, zeros if the node does not influence the loss.
    pub fn get_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> Array2<f64> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(shape),
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.dim()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "add: shape mismatch");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "sub: shape mismatch");
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "mul: shape mismatch");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        assert_eq!(self.shape(row).0, 1, "add_row: bias must be 1 x n");
        assert_eq!(self.shape(a).1, self.shape(row).1, "add_row: width mismatch");
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn affine(&mut self, a: NodeId, mul: f64, add: f64) -> NodeId {
        let v = self.value(a).mapv(|x| mul * x + add);
        self.push(v, Op::Affine(a, mul, add))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.affine(a, k, 0.0)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut v = Array2::zeros((rows, total));
        let mut at = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            assert_eq!(r, rows, "concat_cols: row mismatch");
            v.slice_mut(ndarray::s![.., at..at + c]).assign(self.value(p));
            at += c;
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        assert!(start < end && end <= self.shape(a).1, "slice_cols: bad range");
        let v = self.value(a).slice(ndarray::s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    pub fn gather_rows(&mut self, table: NodeId, indices: &[usize]) -> NodeId {
        let (rows, cols) = self.shape(table);
        let mut v = Array2::zeros((indices.len(), cols));
        for (r, &i) in indices.iter().enumerate() {
            assert!(i < rows, "gather_rows: index out of range");
            v.row_mut(r).assign(&self.value(table).row(i));
        }
        self.push(v, Op::GatherRows(table, indices.to_vec()))
    }

    pub fn pairwise_sqdist(&mut self, a: NodeId, table: NodeId) -> NodeId {
        let (b_rows, k) = self.shape(a);
        let (m_rows, k2) = self.shape(table);
        assert_eq!(k, k2, "pairwise_sqdist: dim mismatch");
        let av = self.value(a);
        let tv = self.value(table);
        let mut v = Array2::zeros((b_rows, m_rows));
        for b in 0..b_rows {
            for m in 0..m_rows {
                let mut acc = 0.0;
                for d in 0..k {
                    let diff = av[[b, d]] - tv[[m, d]];
                    acc += diff * diff;
                }
                v[[b, m]] = acc;
            }
        }
        self.push(v, Op::PairwiseSqDist(a, table))
    }

    pub fn logsumexp_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut v = Array2::zeros((av.nrows(), 1));
        for (r, row) in av.rows().into_iter().enumerate() {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|&x| (x - mx).exp()).sum();
            v[[r, 0]] = mx + s.ln();
        }
        self.push(v, Op::LogSumExpRows(a))
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let v = self
            .value(a)
            .sum_axis(Axis(1))
            .insert_axis(Axis(1))
            .to_owned();
        self.push(v, Op::SumRows(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Mean over rows of -log softmax(logits)[label].
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), labels.len(), "softmax_ce: label count mismatch");
        let mut total = 0.0;
        for (r, row) in lv.rows().into_iter().enumerate() {
            assert!(labels[r] < lv.ncols(), "softmax_ce: label out of range");
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse: f64 = row.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln() + mx;
            total += lse - row[labels[r]];
        }
        let v = Array2::from_elem((1, 1), total / labels.len() as f64);
        self.push(v, Op::SoftmaxCrossEntropy(logits, labels.to_vec()))
    }

    /// Reverse sweep from a scalar (1 x 1) node.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward: loss must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            // Leaf gradients stay available to callers; interior gradients
            // are consumed as they propagate.
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.nodes[b.0].value.t());
                    let db = self.nodes[a.0].value.t().dot(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, -&g);
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, &g * &self.nodes[b.0].value);
                    accumulate(&mut grads, *b, &g * &self.nodes[a.0].value);
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut grads, *a, g.clone());
                    let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0)).to_owned();
                    accumulate(&mut grads, *row, dr);
                }
                Op::Sigmoid(a) => {
                    let s = &node.value;
                    accumulate(&mut grads, *a, &g * &(s * &(1.0 - s)));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, &g * &(1.0 - y * y));
                }
                Op::Exp(a) => {
                    accumulate(&mut grads, *a, &g * &node.value);
                }
                Op::Affine(a, mul, _) => {
                    accumulate(&mut grads, *a, &g * *mul);
                }
                Op::Clamp(a, lo, hi) => {
                    let inside = self.nodes[a.0]
                        .value
                        .mapv(|x| if x > *lo && x < *hi { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *a, &g * &inside);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let c = self.nodes[p.0].value.ncols();
                        let gp = g.slice(ndarray::s![.., at..at + c]).to_owned();
                        accumulate(&mut grads, p, gp);
                        at += c;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let (rows, cols) = self.nodes[a.0].value.dim();
                    let mut da = Array2::zeros((rows, cols));
                    da.slice_mut(ndarray::s![.., *start..*end]).assign(&g);
                    accumulate(&mut grads, *a, da);
                }
                Op::GatherRows(table, indices) => {
                    let (rows, cols) = self.nodes[table.0].value.dim();
                    let mut dt = Array2::zeros((rows, cols));
                    for (r, &i) in indices.iter().enumerate() {
                        let mut target = dt.row_mut(i);
                        target += &g.row(r);
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::PairwiseSqDist(a, table) => {
                    let av = &self.nodes[a.0].value;
                    let tv = &self.nodes[table.0].value;
                    let row_sums = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let col_sums = g.sum_axis(Axis(0)).insert_axis(Axis(1));
                    let da = 2.0 * (av * &row_sums - g.dot(tv));
                    let dt = 2.0 * (tv * &col_sums - g.t().dot(av));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *table, dt);
                }
                Op::LogSumExpRows(a) => {
                    let av = &self.nodes[a.0].value;
                    let mut da = Array2::zeros(av.dim());
                    for r in 0..av.nrows() {
                        let lse = node.value[[r, 0]];
                        for c in 0..av.ncols() {
                            da[[r, c]] = (av[[r, c]] - lse).exp() * g[[r, 0]];
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SumRows(a) => {
                    let (rows, cols) = self.nodes[a.0].value.dim();
                    let mut da = Array2::zeros((rows, cols));
                    for r in 0..rows {
                        for c in 0..cols {
                            da[[r, c]] = g[[r, 0]];
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SumAll(a) => {
                    let da = Array2::from_elem(self.nodes[a.0].value.dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, da);
                }
                Op::SoftmaxCrossEntropy(logits, labels) => {
                    let lv = &self.nodes[logits.0].value;
                    let scale = g[[0, 0]] / labels.len() as f64;
                    let mut dl = Array2::zeros(lv.dim());
                    for (r, row) in lv.rows().into_iter().enumerate() {
                        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|&x| (x - mx).exp()).sum();
                        for c in 0..lv.ncols() {
                            let p = (lv[[r, c]] - mx).exp() / denom;
                            let target = if c == labels[r] { 1.0 } else { 0.0 };
                            dl[[r, c]] = scale * (p - target);
                        }
                    }
                    accumulate(&mut grads, *logits, dl);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], id: NodeId, g: Array2<f64>) {
    match &mut grads[id.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}
