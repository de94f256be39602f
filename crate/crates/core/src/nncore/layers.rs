//! Dense and LSTM layers expressed over the autodiff graph, plus parameter
//! initialization. Parameters live in a [`ParamSet`] keyed by path-like
//! names so optimizers and checkpoints can address them uniformly.

use super::graph::{Graph, NodeId};
use super::{NnError, NnResult};
use ndarray::Array2;
use rand::Rng;
use std::collections::BTreeMap;

/// Named f64 tensors; iteration order is the sorted name order, which keeps
/// every consumer (Adam, clipping, checkpoints, grad checks) deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Array2<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) {
        self.entries.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> NnResult<&Array2<f64>> {
        self.entries
            .get(name)
            .ok_or_else(|| NnError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> NnResult<&mut Array2<f64>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| NnError::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|v| v.len()).sum()
    }

    /// Registers every parameter as a graph leaf.
    pub fn register(&self, graph: &mut Graph) -> ParamNodes {
        let mut nodes = BTreeMap::new();
        for (name, value) in &self.entries {
            nodes.insert(name.clone(), graph.leaf(value.clone()));
        }
        ParamNodes { nodes }
    }

    pub fn to_map(&self) -> BTreeMap<String, Array2<f64>> {
        self.entries.clone()
    }

    pub fn from_map(entries: BTreeMap<String, Array2<f64>>) -> Self {
        ParamSet { entries }
    }
}

/// Graph leaves for a registered [`ParamSet`].
pub struct ParamNodes {
    nodes: BTreeMap<String, NodeId>,
}

impl ParamNodes {
    pub fn node(&self, name: &str) -> NodeId {
        *self
            .nodes
            .get(name)
            .unwrap_or_else(|| panic!("unregistered parameter '{name}'"))
    }

    /// Extracts per-parameter gradients after a backward sweep.
    pub fn grads(
        &self,
        graph: &Graph,
        grads: &super::graph::Gradients,
    ) -> BTreeMap<String, Array2<f64>> {
        self.nodes
            .iter()
            .map(|(name, &id)| (name.clone(), grads.get_or_zeros(id, graph.shape(id))))
            .collect()
    }
}

/// Xavier-uniform weight matrix.
pub fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// Adds `{prefix}/w` (in x out) and `{prefix}/b` (1 x out).
pub fn init_dense<R: Rng>(
    params: &mut ParamSet,
    prefix: &str,
    input_dim: usize,
    output_dim: usize,
    rng: &mut R,
) {
    params.insert(&format!("{prefix}/w"), xavier(input_dim, output_dim, rng));
    params.insert(&format!("{prefix}/b"), Array2::zeros((1, output_dim)));
}

/// x @ w + b.
pub fn dense(graph: &mut Graph, nodes: &ParamNodes, prefix: &str, x: NodeId) -> NodeId {
    let w = nodes.node(&format!("{prefix}/w"));
    let b = nodes.node(&format!("{prefix}/b"));
    let xw = graph.matmul(x, w);
    graph.add_row(xw, b)
}

/// Gate packing order in the 4H-wide LSTM weights: input, forget, cell
/// candidate, output.
const GATES: usize = 4;

/// Adds stacked-LSTM parameters: per layer `{prefix}/l{i}/wx` (in x 4H),
/// `{prefix}/l{i}/wh` (H x 4H), `{prefix}/l{i}/b` (1 x 4H). Forget-gate
/// biases start at 1.
pub fn init_lstm<R: Rng>(
    params: &mut ParamSet,
    prefix: &str,
    input_dim: usize,
    hidden: &[usize],
    rng: &mut R,
) {
    let mut in_dim = input_dim;
    for (i, &h) in hidden.iter().enumerate() {
        params.insert(&format!("{prefix}/l{i}/wx"), xavier(in_dim, GATES * h, rng));
        params.insert(&format!("{prefix}/l{i}/wh"), xavier(h, GATES * h, rng));
        let mut bias = Array2::zeros((1, GATES * h));
        for c in h..2 * h {
            bias[[0, c]] = 1.0;
        }
        params.insert(&format!("{prefix}/l{i}/b"), bias);
        in_dim = h;
    }
}

/// Runs a stacked LSTM over `inputs` (one B x D node per time step).
/// Returns the top layer's hidden state at every step.
pub fn lstm(
    graph: &mut Graph,
    nodes: &ParamNodes,
    prefix: &str,
    inputs: &[NodeId],
    hidden: &[usize],
) -> Vec<NodeId> {
    assert!(!inputs.is_empty() && !hidden.is_empty());
    let batch = graph.shape(inputs[0]).0;
    let mut layer_inputs: Vec<NodeId> = inputs.to_vec();
    for (i, &h) in hidden.iter().enumerate() {
        let wx = nodes.node(&format!("{prefix}/l{i}/wx"));
        let wh = nodes.node(&format!("{prefix}/l{i}/wh"));
        let b = nodes.node(&format!("{prefix}/l{i}/b"));
        let mut h_prev = graph.leaf(Array2::zeros((batch, h)));
        let mut c_prev = graph.leaf(Array2::zeros((batch, h)));
        let mut outputs = Vec::with_capacity(layer_inputs.len());
        for &x in &layer_inputs {
            let xg = graph.matmul(x, wx);
            let hg = graph.matmul(h_prev, wh);
            let sum = graph.add(xg, hg);
            let gates = graph.add_row(sum, b);
            let i_gate = graph.slice_cols(gates, 0, h);
            let f_gate = graph.slice_cols(gates, h, 2 * h);
            let g_gate = graph.slice_cols(gates, 2 * h, 3 * h);
            let o_gate = graph.slice_cols(gates, 3 * h, 4 * h);
            let i_act = graph.sigmoid(i_gate);
            let f_act = graph.sigmoid(f_gate);
            let g_act = graph.tanh(g_gate);
            let o_act = graph.sigmoid(o_gate);
            let keep = graph.mul(f_act, c_prev);
            let write = graph.mul(i_act, g_act);
            let c_new = graph.add(keep, write);
            let c_tanh = graph.tanh(c_new);
            let h_new = graph.mul(o_act, c_tanh);
            outputs.push(h_new);
            h_prev = h_new;
            c_prev = c_new;
        }
        layer_inputs = outputs;
    }
    layer_inputs
}

/// Standalone LSTM forward pass over one sequence (l x D): returns the top
/// layer's hidden states as an l x H matrix.
pub fn lstm_forward(
    inputs: &Array2<f64>,
    params: &ParamSet,
    prefix: &str,
    hidden: &[usize],
) -> NnResult<Array2<f64>> {
    if inputs.nrows() == 0 {
        return Err(NnError::ShapeMismatch {
            op: "lstm_forward",
            detail: "empty input sequence".into(),
        });
    }
    let expected_in = params.get(&format!("{prefix}/l0/wx"))?.nrows();
    if inputs.ncols() != expected_in {
        return Err(NnError::ShapeMismatch {
            op: "lstm_forward",
            detail: format!("input dim {} != weight dim {}", inputs.ncols(), expected_in),
        });
    }
    let mut graph = Graph::new();
    let nodes = params.register(&mut graph);
    let steps: Vec<NodeId> = (0..inputs.nrows())
        .map(|t| {
            let row = inputs.row(t).insert_axis(ndarray::Axis(0)).to_owned();
            graph.leaf(row)
        })
        .collect();
    let outs = lstm(&mut graph, &nodes, prefix, &steps, hidden);
    let h_top = *hidden.last().unwrap();
    let mut result = Array2::zeros((inputs.nrows(), h_top));
    for (t, &o) in outs.iter().enumerate() {
        result.row_mut(t).assign(&graph.value(o).row(0));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_give_zero_hiddens() {
        let mut params = ParamSet::new();
        params.insert("net/l0/wx", Array2::zeros((3, 8)));
        params.insert("net/l0/wh", Array2::zeros((2, 8)));
        params.insert("net/l0/b", Array2::zeros((1, 8)));
        let inputs = Array2::zeros((4, 3));
        let out = lstm_forward(&inputs, &params, "net", &[2]).unwrap();
        assert_eq!(out.dim(), (4, 2));
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_unit_step_matches_hand_computation() {
        // One layer, one unit, one step. Gates: i
        // = sigmoid(0.5*x + 0.1), f = sigmoid(-0.3*x + 0.2),
        // g = tanh(0.8*x - 0.1), o = sigmoid(1.2*x + 0.3); h0 = c0 = 0.
        let x = 0.7f64;
        let mut params = ParamSet::new();
        params.insert(
            "net/l0/wx",
            Array2::from_shape_vec((1, 4), vec![0.5, -0.3, 0.8, 1.2]).unwrap(),
        );
        params.insert("net/l0/wh", Array2::zeros((1, 4)));
        params.insert(
            "net/l0/b",
            Array2::from_shape_vec((1, 4), vec![0.1, 0.2, -0.1, 0.3]).unwrap(),
        );
        let inputs = Array2::from_elem((1, 1), x);
        let out = lstm_forward(&inputs, &params, "net", &[1]).unwrap();

        let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sigmoid(0.5 * x + 0.1);
        let g = (0.8 * x - 0.1).tanh();
        let o = sigmoid(1.2 * x + 0.3);
        let c = i * g; // f * c0 = 0
        let expected = o * c.tanh();
        assert!((out[[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn two_layer_lstm_grads_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut params = ParamSet::new();
        init_lstm(&mut params, "net", 2, &[3, 3], &mut rng);
        let inputs =
            Array2::from_shape_fn((2, 2), |(r, c)| 0.5 * (r as f64 + 1.0) - 0.3 * c as f64);

        let loss = |p: &ParamSet| -> f64 {
            let mut g = Graph::new();
            let nodes = p.register(&mut g);
            let steps: Vec<NodeId> = (0..2)
                .map(|t| g.leaf(inputs.row(t).insert_axis(ndarray::Axis(0)).to_owned()))
                .collect();
            let outs = lstm(&mut g, &nodes, "net", &steps, &[3, 3]);
            let last = *outs.last().unwrap();
            let sq = g.mul(last, last);
            let l = g.sum_all(sq);
            g.value(l)[[0, 0]]
        };

        // Analytic gradients.
        let mut g = Graph::new();
        let nodes = params.register(&mut g);
        let steps: Vec<NodeId> = (0..2)
            .map(|t| g.leaf(inputs.row(t).insert_axis(ndarray::Axis(0)).to_owned()))
            .collect();
        let outs = lstm(&mut g, &nodes, "net", &steps, &[3, 3]);
        let last = *outs.last().unwrap();
        let sq = g.mul(last, last);
        let l = g.sum_all(sq);
        let grads = g.backward(l);
        let by_name = nodes.grads(&g, &grads);

        let h = 1e-5;
        for (name, grad) in &by_name {
            let base = params.get(name).unwrap().clone();
            for idx in 0..base.len() {
                let (r, c) = (idx / base.ncols(), idx % base.ncols());
                let mut p_plus = params.clone();
                p_plus.get_mut(name).unwrap()[[r, c]] += h;
                let mut p_minus = params.clone();
                p_minus.get_mut(name).unwrap()[[r, c]] -= h;
                let fd = (loss(&p_plus) - loss(&p_minus)) / (2.0 * h);
                let ad = grad[[r, c]];
                let denom = ad.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (ad - fd).abs() / denom < 1e-4,
                    "{name}[{r},{c}]: autodiff {ad} vs fd {fd}"
                );
            }
        }
    }
}
