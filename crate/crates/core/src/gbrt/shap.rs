//! Exact Shapley attribution for tree ensembles under the cover-weighted
//! conditional expectation: descending a tree, features in the conditioning
//! set follow the row while the rest distribute by child cover proportion.
//! The polynomial-time path recursion tracks, for every feature on the path
//! from the root, the proportion of subsets flowing down with the feature
//! present (`one_fraction`) and absent (`zero_fraction`), so each leaf
//! contributes its Shapley-weighted marginal in one pass.

use super::{GbrtError, Node, Tree, TreeEnsemble};
use crate::scalar::Scalar;

/// Additive decomposition of a single prediction:
/// `sum(phi) + expected_value == prediction`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapAttribution<S> {
    pub phi: Vec<S>,
    pub expected_value: S,
}

#[derive(Debug, Clone, Copy)]
struct PathElement<S> {
    /// `usize::MAX` marks the root sentinel.
    feature: usize,
    zero_fraction: S,
    one_fraction: S,
    pweight: S,
}

/// Append one split to the path and refresh the subset-permutation weights.
fn extend_path<S: Scalar>(
    path: &mut Vec<PathElement<S>>,
    zero_fraction: S,
    one_fraction: S,
    feature: usize,
) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { S::one() } else { S::zero() },
    });
    let inv = S::one() / S::lit((depth + 1) as f64);
    for i in (0..depth).rev() {
        path[i + 1].pweight =
            path[i + 1].pweight + one_fraction * path[i].pweight * S::lit((i + 1) as f64) * inv;
        path[i].pweight = zero_fraction * path[i].pweight * S::lit((depth - i) as f64) * inv;
    }
}

/// Remove the split at `path_index`, restoring the weights to the state they
/// would have had without it.
fn unwind_path<S: Scalar>(path: &mut Vec<PathElement<S>>, path_index: usize) {
    let unique_depth = path.len() - 1;
    let one_fraction = path[path_index].one_fraction;
    let zero_fraction = path[path_index].zero_fraction;
    let mut next_one_portion = path[unique_depth].pweight;
    for i in (0..unique_depth).rev() {
        if one_fraction != S::zero() {
            let tmp = path[i].pweight;
            path[i].pweight = next_one_portion * S::lit((unique_depth + 1) as f64)
                / (S::lit((i + 1) as f64) * one_fraction);
            next_one_portion = tmp
                - path[i].pweight * zero_fraction * S::lit((unique_depth - i) as f64)
                    / S::lit((unique_depth + 1) as f64);
        } else {
            path[i].pweight = path[i].pweight * S::lit((unique_depth + 1) as f64)
                / (zero_fraction * S::lit((unique_depth - i) as f64));
        }
    }
    for i in path_index..unique_depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

/// Total permutation weight of the path with element `path_index` unwound,
/// without mutating the path.
fn unwound_path_sum<S: Scalar>(path: &[PathElement<S>], path_index: usize) -> S {
    let unique_depth = path.len() - 1;
    let one_fraction = path[path_index].one_fraction;
    let zero_fraction = path[path_index].zero_fraction;
    let mut next_one_portion = path[unique_depth].pweight;
    let mut total = S::zero();
    for i in (0..unique_depth).rev() {
        if one_fraction != S::zero() {
            let tmp = next_one_portion * S::lit((unique_depth + 1) as f64)
                / (S::lit((i + 1) as f64) * one_fraction);
            total += tmp;
            next_one_portion = path[i].pweight
                - tmp * zero_fraction * S::lit((unique_depth - i) as f64)
                    / S::lit((unique_depth + 1) as f64);
        } else if zero_fraction != S::zero() {
            total += path[i].pweight * S::lit((unique_depth + 1) as f64)
                / (zero_fraction * S::lit((unique_depth - i) as f64));
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse<S: Scalar>(
    tree: &Tree<S>,
    node_index: usize,
    row: &[S],
    phi: &mut [S],
    parent_path: &[PathElement<S>],
    parent_zero_fraction: S,
    parent_one_fraction: S,
    parent_feature: usize,
) {
    let mut path = parent_path.to_vec();
    extend_path(&mut path, parent_zero_fraction, parent_one_fraction, parent_feature);

    match tree.nodes[node_index] {
        Node::Leaf { weight, .. } => {
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let el = &path[i];
                phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * weight;
            }
        }
        Node::Split { feature, threshold, left, right, cover } => {
            let (hot, cold) = if row[feature] < threshold {
                (left as usize, right as usize)
            } else {
                (right as usize, left as usize)
            };
            let hot_zero = tree.nodes[hot].cover() / cover;
            let cold_zero = tree.nodes[cold].cover() / cover;

            let mut incoming_zero = S::one();
            let mut incoming_one = S::one();
            if let Some(k) = (1..path.len()).find(|&i| path[i].feature == feature) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            recurse(tree, hot, row, phi, &path, incoming_zero * hot_zero, incoming_one, feature);
            recurse(tree, cold, row, phi, &path, incoming_zero * cold_zero, S::zero(), feature);
        }
    }
}

/// Exact per-feature Shapley values for one row. Additive across trees;
/// `sum(phi) + expected_value` reproduces the ensemble prediction.
pub fn tree_shap<S: Scalar>(
    ensemble: &TreeEnsemble<S>,
    row: &[S],
) -> Result<ShapAttribution<S>, GbrtError> {
    if row.len() != ensemble.n_features() {
        return Err(GbrtError::DimensionMismatch {
            expected: ensemble.n_features(),
            got: row.len(),
        });
    }
    if row.iter().any(|v| !v.is_finite()) {
        return Err(GbrtError::NonFinite("features"));
    }
    let mut phi = vec![S::zero(); ensemble.n_features()];
    let mut expected = ensemble.base_score;
    for tree in &ensemble.trees {
        if !(tree.nodes[0].cover() > S::zero()) {
            return Err(GbrtError::MissingCover);
        }
        recurse(tree, 0, row, &mut phi, &[], S::one(), S::one(), usize::MAX);
        expected += ensemble.learning_rate * tree.expected_weight();
    }
    for p in &mut phi {
        *p = *p * ensemble.learning_rate;
    }
    Ok(ShapAttribution { phi, expected_value: expected })
}
