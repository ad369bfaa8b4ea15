//! Shared test oracles, kept independent of the library's attribution path.

use haulcast_core::gbrt::{Node, Tree, TreeEnsemble};

/// Cover-weighted conditional expectation of one tree given the features in
/// `subset_mask`: conditioned features follow the row, the rest distribute by
/// child cover proportion.
fn tree_subset_value(tree: &Tree<f64>, row: &[f64], subset_mask: u64, idx: usize) -> f64 {
    match tree.nodes[idx] {
        Node::Leaf { weight, .. } => weight,
        Node::Split { feature, threshold, left, right, cover } => {
            if subset_mask & (1 << feature) != 0 {
                let child = if row[feature] < threshold { left } else { right };
                tree_subset_value(tree, row, subset_mask, child as usize)
            } else {
                let lc = tree.nodes[left as usize].cover();
                let rc = tree.nodes[right as usize].cover();
                (lc * tree_subset_value(tree, row, subset_mask, left as usize)
                    + rc * tree_subset_value(tree, row, subset_mask, right as usize))
                    / cover
            }
        }
    }
}

/// Ensemble value function v(S) for the Shapley game.
pub fn subset_value(ensemble: &TreeEnsemble<f64>, row: &[f64], subset_mask: u64) -> f64 {
    let sum: f64 = ensemble
        .trees
        .iter()
        .map(|t| tree_subset_value(t, row, subset_mask, 0))
        .sum();
    ensemble.base_score + ensemble.learning_rate * sum
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Exact Shapley values by full subset enumeration (feasible for <= ~16
/// features). Returns (phi, expected_value).
pub fn brute_force_shap(ensemble: &TreeEnsemble<f64>, row: &[f64]) -> (Vec<f64>, f64) {
    let n = ensemble.feature_names.len();
    assert!(n <= 16, "subset enumeration oracle limited to 16 features");
    let full = factorial(n);
    let mut phi = vec![0.0_f64; n];
    for j in 0..n {
        let bit = 1u64 << j;
        for mask in 0u64..(1 << n) {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = factorial(s) * factorial(n - s - 1) / full;
            let with = subset_value(ensemble, row, mask | bit);
            let without = subset_value(ensemble, row, mask);
            phi[j] += weight * (with - without);
        }
    }
    (phi, subset_value(ensemble, row, 0))
}

/// Deterministic xorshift stream for test data generation.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0xD1B54A32D192ED03))
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_f64() * n as f64) as usize % n
    }
}
