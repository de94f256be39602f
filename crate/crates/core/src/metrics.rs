//! Clustering and classification quality measures used to validate learned
//! representations against synthetic ground truth.

use crate::nncore::{
    adam_step, init_dense, AdamConfig, AdamState, Graph, NodeId, ParamSet,
};
use ndarray::Array2;
use rand::SeedableRng;

fn choose2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

fn contingency(a: &[usize], b: &[usize]) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), b.len(), "label sequences must align");
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = Array2::zeros((ka, kb));
    for (&x, &y) in a.iter().zip(b) {
        table[[x, y]] += 1.0;
    }
    let rows = table.rows().into_iter().map(|r| r.sum()).collect();
    let cols = table.columns().into_iter().map(|c| c.sum()).collect();
    (table, rows, cols)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 1.0;
    }
    let (table, rows, cols) = contingency(a, b);
    let sum_ij: f64 = table.iter().map(|&v| choose2(v)).sum();
    let sum_a: f64 = rows.iter().map(|&v| choose2(v)).sum();
    let sum_b: f64 = cols.iter().map(|&v| choose2(v)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}

/// Normalized mutual information with arithmetic-mean normalization.
pub fn normalized_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 1.0;
    }
    let (table, rows, cols) = contingency(a, b);
    let mut mi = 0.0;
    for (i, &ri) in rows.iter().enumerate() {
        for (j, &cj) in cols.iter().enumerate() {
            let nij = table[[i, j]];
            if nij > 0.0 {
                mi += (nij / n) * ((nij * n) / (ri * cj)).ln();
            }
        }
    }
    let h = |marginals: &[f64]| -> f64 {
        marginals
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| -(v / n) * (v / n).ln())
            .sum()
    };
    let (ha, hb) = (h(&rows), h(&cols));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let denom = 0.5 * (ha + hb);
    if denom == 0.0 {
        0.0
    } else {
        (mi / denom).clamp(0.0, 1.0)
    }
}

/// Fits one centroid per class and reports the fraction of rows classified
/// back to their own class. Ties break toward the lower class index.
pub fn nearest_centroid_accuracy(features: &Array2<f64>, labels: &[usize]) -> f64 {
    assert_eq!(features.nrows(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    let k = labels.iter().max().unwrap() + 1;
    let dim = features.ncols();
    let mut centroids = Array2::<f64>::zeros((k, dim));
    let mut counts = vec![0.0f64; k];
    for (row, &l) in features.rows().into_iter().zip(labels) {
        for d in 0..dim {
            centroids[[l, d]] += row[d];
        }
        counts[l] += 1.0;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0.0 {
            for d in 0..dim {
                centroids[[c, d]] /= count;
            }
        }
    }
    let mut correct = 0usize;
    for (row, &l) in features.rows().into_iter().zip(labels) {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            if counts[c] == 0.0 {
                continue;
            }
            let d2: f64 = (0..dim)
                .map(|d| (row[d] - centroids[[c, d]]).powi(2))
                .sum();
            if d2 < best_d {
                best_d = d2;
                best = c;
            }
        }
        if best == l {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

/// Trains a multinomial logistic probe (full-batch Adam) and reports the
/// training accuracy. Deterministic given the seed.
pub fn linear_probe_accuracy(
    features: &Array2<f64>,
    labels: &[usize],
    epochs: usize,
    seed: u64,
) -> f64 {
    assert_eq!(features.nrows(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    let k = labels.iter().max().unwrap() + 1;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    init_dense(&mut params, "probe", features.ncols(), k, &mut rng);
    let mut state = AdamState::new();
    let cfg = AdamConfig {
        learning_rate: 0.05,
        beta1: 0.9,
        ..AdamConfig::default()
    };
    for _ in 0..epochs {
        let mut graph = Graph::new();
        let nodes = params.register(&mut graph);
        let x = graph.leaf(features.clone());
        let logits = crate::nncore::dense(&mut graph, &nodes, "probe", x);
        let loss = graph.softmax_cross_entropy(logits, labels);
        let grads = graph.backward(loss);
        let by_name = nodes.grads(&graph, &grads);
        adam_step(&mut params, &by_name, &mut state, &cfg).expect("probe diverged");
    }
    let mut graph = Graph::new();
    let nodes = params.register(&mut graph);
    let x = graph.leaf(features.clone());
    let logits: NodeId = crate::nncore::dense(&mut graph, &nodes, "probe", x);
    let values = graph.value(logits);
    let mut correct = 0usize;
    for (row, &l) in values.rows().into_iter().zip(labels) {
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (c, &v) in row.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        if best == l {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}
