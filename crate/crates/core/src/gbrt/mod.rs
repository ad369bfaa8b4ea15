//! Gradient-boosted regression trees with a squared-error objective,
//! second-order split gain, and exact tree Shapley attribution.
//!
//! Training is exact greedy: every feature and every midpoint between
//! consecutive distinct sorted values is evaluated, gain
//! `0.5 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)) - gamma`,
//! leaf weight `-G/(H+lambda)`. Squared error makes every hessian 1, so node
//! cover equals the training row count reaching it. Ties break toward the
//! lowest feature index, then the lowest threshold, making training fully
//! deterministic.

mod shap;

pub use shap::{tree_shap, ShapAttribution};

use crate::scalar::Scalar;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GbrtError {
    #[error("invalid gbrt config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("row has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training MSE increased at round {round}: {prev} -> {new}")]
    MseIncreased { round: usize, prev: f64, new: f64 },
    #[error("ensemble has no cover data at the root")]
    MissingCover,
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("model file {path}: {message}")]
    Format { path: String, message: String },
    #[error("no attributions to summarize")]
    EmptyAttributions,
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbrtConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub lambda_reg: f64,
    /// Gain threshold subtracted from every candidate split.
    pub gamma: f64,
    /// Minimum hessian sum (row count) per child.
    pub min_child_weight: f64,
}

impl Default for GbrtConfig {
    fn default() -> Self {
        Self {
            n_estimators: 1000,
            learning_rate: 0.01,
            max_depth: 3,
            lambda_reg: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
        }
    }
}

impl GbrtConfig {
    pub fn validate(&self) -> Result<(), GbrtError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(GbrtError::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_depth < 1 {
            return Err(GbrtError::InvalidConfig("max_depth must be >= 1".into()));
        }
        for (name, v) in [
            ("lambda_reg", self.lambda_reg),
            ("gamma", self.gamma),
            ("min_child_weight", self.min_child_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GbrtError::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Tree node in a flat arena; the root is index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node<S> {
    Split {
        feature: usize,
        /// Route left iff `x[feature] < threshold`.
        threshold: S,
        left: u32,
        right: u32,
        cover: S,
    },
    Leaf {
        weight: S,
        cover: S,
    },
}

impl<S: Scalar> Node<S> {
    pub fn cover(&self) -> S {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<S> {
    pub nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tree<S> {
    /// Leaf weight reached by routing `row` from the root.
    pub fn leaf_weight(&self, row: &[S]) -> S {
        let mut idx = 0usize;
        loop {
            match self.nodes[idx] {
                Node::Leaf { weight, .. } => return weight,
                Node::Split { feature, threshold, left, right, .. } => {
                    idx = if row[feature] < threshold { left as usize } else { right as usize };
                }
            }
        }
    }

    /// Cover-weighted expectation of the leaf weights.
    pub fn expected_weight(&self) -> S {
        fn walk<S: Scalar>(nodes: &[Node<S>], idx: usize) -> S {
            match nodes[idx] {
                Node::Leaf { weight, cover } => weight * cover,
                Node::Split { left, right, .. } => {
                    walk(nodes, left as usize) + walk(nodes, right as usize)
                }
            }
        }
        walk(&self.nodes, 0) / self.nodes[0].cover()
    }
}

/// Boosted ensemble: `prediction = base_score + learning_rate * sum of leaf
/// weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble<S> {
    pub base_score: S,
    pub learning_rate: S,
    pub trees: Vec<Tree<S>>,
    pub feature_names: Vec<String>,
}

impl<S: Scalar> TreeEnsemble<S> {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

/// Train an ensemble. Deterministic; returns the per-round training MSE
/// alongside the model and errors out if it ever increases.
pub fn train_gbrt_traced<S: Scalar>(
    rows: &[Vec<S>],
    targets: &[S],
    feature_names: &[String],
    config: &GbrtConfig,
) -> Result<(TreeEnsemble<S>, Vec<f64>), GbrtError> {
    config.validate()?;
    if rows.is_empty() || targets.is_empty() {
        return Err(GbrtError::EmptyDataset);
    }
    assert_eq!(rows.len(), targets.len(), "rows/targets misaligned");
    let n_features = feature_names.len();
    for row in rows {
        if row.len() != n_features {
            return Err(GbrtError::DimensionMismatch { expected: n_features, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GbrtError::NonFinite("features"));
        }
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(GbrtError::NonFinite("targets"));
    }

    let n = rows.len();
    // Column-major copy plus one global value-sorted row order per feature.
    let columns: Vec<Vec<S>> = (0..n_features)
        .map(|f| rows.iter().map(|r| r[f]).collect())
        .collect();
    let sorted_order: Vec<Vec<u32>> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                col[a as usize].partial_cmp(&col[b as usize]).unwrap().then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let base_score = targets.iter().fold(S::zero(), |acc, &t| acc + t) / S::lit(n as f64);
    let learning_rate = S::lit(config.learning_rate);
    let mut predictions = vec![base_score; n];
    let mut gradients = vec![S::zero(); n];
    let mut in_node = vec![false; n];
    let mut trees = Vec::with_capacity(config.n_estimators);
    let mut mse_history = Vec::with_capacity(config.n_estimators + 1);
    let mse = |preds: &[S]| -> f64 {
        let acc = preds
            .iter()
            .zip(targets)
            .fold(S::zero(), |acc, (&p, &y)| acc + (p - y) * (p - y));
        (acc / S::lit(n as f64)).to_f64().unwrap()
    };
    mse_history.push(mse(&predictions));

    for round in 0..config.n_estimators {
        for i in 0..n {
            gradients[i] = predictions[i] - targets[i];
        }
        let mut builder = TreeBuilder {
            columns: &columns,
            sorted_order: &sorted_order,
            gradients: &gradients,
            config,
            lambda: S::lit(config.lambda_reg),
            gamma: S::lit(config.gamma),
            min_child_weight: S::lit(config.min_child_weight),
            nodes: Vec::new(),
            in_node: &mut in_node,
        };
        let all_rows: Vec<u32> = (0..n as u32).collect();
        builder.grow(all_rows, 0);
        let tree = Tree { nodes: builder.nodes };
        for (i, row) in rows.iter().enumerate() {
            predictions[i] += learning_rate * tree.leaf_weight(row);
        }
        trees.push(tree);
        let m = mse(&predictions);
        let prev = *mse_history.last().unwrap();
        if m > prev * (1.0 + 1e-12) + 1e-12 {
            return Err(GbrtError::MseIncreased { round, prev, new: m });
        }
        mse_history.push(m);
    }

    Ok((
        TreeEnsemble {
            base_score,
            learning_rate,
            trees,
            feature_names: feature_names.to_vec(),
        },
        mse_history,
    ))
}

/// Train an ensemble, discarding the MSE trace.
pub fn train_gbrt<S: Scalar>(
    rows: &[Vec<S>],
    targets: &[S],
    feature_names: &[String],
    config: &GbrtConfig,
) -> Result<TreeEnsemble<S>, GbrtError> {
    train_gbrt_traced(rows, targets, feature_names, config).map(|(e, _)| e)
}

struct TreeBuilder<'a, S: Scalar> {
    columns: &'a [Vec<S>],
    sorted_order: &'a [Vec<u32>],
    gradients: &'a [S],
    config: &'a GbrtConfig,
    lambda: S,
    gamma: S,
    min_child_weight: S,
    nodes: Vec<Node<S>>,
    in_node: &'a mut [bool],
}

struct SplitChoice<S> {
    gain: S,
    feature: usize,
    threshold: S,
}

impl<S: Scalar> TreeBuilder<'_, S> {
    fn grow(&mut self, rows: Vec<u32>, depth: usize) -> u32 {
        let g_sum = rows.iter().fold(S::zero(), |acc, &r| acc + self.gradients[r as usize]);
        let h_sum = S::lit(rows.len() as f64);
        let index = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { weight: S::zero(), cover: h_sum });

        let split = if depth < self.config.max_depth {
            self.best_split(&rows, g_sum, h_sum)
        } else {
            None
        };
        match split {
            Some(choice) => {
                let feature_col = &self.columns[choice.feature];
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
                    .into_iter()
                    .partition(|&r| feature_col[r as usize] < choice.threshold);
                let left = self.grow(left_rows, depth + 1);
                let right = self.grow(right_rows, depth + 1);
                self.nodes[index as usize] = Node::Split {
                    feature: choice.feature,
                    threshold: choice.threshold,
                    left,
                    right,
                    cover: h_sum,
                };
            }
            None => {
                self.nodes[index as usize] = Node::Leaf {
                    weight: -g_sum / (h_sum + self.lambda),
                    cover: h_sum,
                };
            }
        }
        index
    }

    /// Exact greedy split search over all features and midpoints between
    /// consecutive distinct values. Returns the best positive-gain split.
    fn best_split(&mut self, rows: &[u32], g_sum: S, h_sum: S) -> Option<SplitChoice<S>> {
        for &r in rows {
            self.in_node[r as usize] = true;
        }
        let half = S::lit(0.5);
        let parent_term = g_sum * g_sum / (h_sum + self.lambda);
        let mut best: Option<SplitChoice<S>> = None;
        for (feature, order) in self.sorted_order.iter().enumerate() {
            let col = &self.columns[feature];
            let mut g_left = S::zero();
            let mut h_left = S::zero();
            let mut prev_value: Option<S> = None;
            for &r in order {
                let r = r as usize;
                if !self.in_node[r] {
                    continue;
                }
                let value = col[r];
                if let Some(prev) = prev_value {
                    if value > prev {
                        let threshold = half * (prev + value);
                        // Guard against midpoints collapsing onto the lower
                        // value for adjacent floats.
                        if threshold > prev {
                            let g_right = g_sum - g_left;
                            let h_right = h_sum - h_left;
                            if h_left >= self.min_child_weight && h_right >= self.min_child_weight
                            {
                                let gain = half
                                    * (g_left * g_left / (h_left + self.lambda)
                                        + g_right * g_right / (h_right + self.lambda)
                                        - parent_term)
                                    - self.gamma;
                                let improves = match &best {
                                    Some(b) => gain > b.gain,
                                    None => gain > S::zero(),
                                };
                                if improves {
                                    best = Some(SplitChoice { gain, feature, threshold });
                                }
                            }
                        }
                    }
                }
                g_left += self.gradients[r];
                h_left += S::one();
                prev_value = Some(value);
            }
        }
        for &r in rows {
            self.in_node[r as usize] = false;
        }
        best
    }
}

/// Evaluate one feature row: strict less-than routing at every split.
pub fn predict<S: Scalar>(ensemble: &TreeEnsemble<S>, row: &[S]) -> Result<S, GbrtError> {
    if row.len() != ensemble.n_features() {
        return Err(GbrtError::DimensionMismatch {
            expected: ensemble.n_features(),
            got: row.len(),
        });
    }
    if row.iter().any(|v| !v.is_finite()) {
        return Err(GbrtError::NonFinite("features"));
    }
    let mut acc = S::zero();
    for tree in &ensemble.trees {
        acc += tree.leaf_weight(row);
    }
    Ok(ensemble.base_score + ensemble.learning_rate * acc)
}

/// Evaluate many rows.
pub fn predict_batch<S: Scalar>(
    ensemble: &TreeEnsemble<S>,
    rows: &[Vec<S>],
) -> Result<Vec<S>, GbrtError> {
    rows.iter().map(|r| predict(ensemble, r)).collect()
}

/// Per-feature mean absolute attribution, sorted descending (stable on ties).
pub fn summarize_shap<S: Scalar>(
    attributions: &[ShapAttribution<S>],
) -> Result<Vec<(usize, S)>, GbrtError> {
    let first = attributions.first().ok_or(GbrtError::EmptyAttributions)?;
    let n_features = first.phi.len();
    let mut means = vec![S::zero(); n_features];
    for att in attributions {
        for (m, &p) in means.iter_mut().zip(&att.phi) {
            *m += p.abs();
        }
    }
    let count = S::lit(attributions.len() as f64);
    let mut ranked: Vec<(usize, S)> =
        means.into_iter().map(|m| m / count).enumerate().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    Ok(ranked)
}

const MODEL_FORMAT: &str = "haulcast-gbrt";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct EnsembleFile<S> {
    format: String,
    version: u32,
    config: GbrtConfig,
    base_score: S,
    learning_rate: S,
    feature_names: Vec<String>,
    trees: Vec<Tree<S>>,
}

/// Persist the ensemble as self-describing JSON. Floats are written in the
/// shortest form that parses back to the identical bit pattern, so a
/// save/load/save round trip is byte-exact.
pub fn save_model<S: Scalar + Serialize>(
    path: impl AsRef<Path>,
    ensemble: &TreeEnsemble<S>,
    config: &GbrtConfig,
) -> Result<(), GbrtError> {
    let path = path.as_ref();
    let file = EnsembleFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        config: config.clone(),
        base_score: ensemble.base_score,
        learning_rate: ensemble.learning_rate,
        feature_names: ensemble.feature_names.clone(),
        trees: ensemble.trees.clone(),
    };
    let body = serde_json::to_string_pretty(&file).expect("ensemble serializes");
    let mut out = File::create(path).map_err(|source| GbrtError::Io {
        path: path.display().to_string(),
        source,
    })?;
    out.write_all(body.as_bytes()).map_err(|source| GbrtError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load a persisted ensemble and its training config.
pub fn load_model<S: Scalar + DeserializeOwned>(
    path: impl AsRef<Path>,
) -> Result<(TreeEnsemble<S>, GbrtConfig), GbrtError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| GbrtError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parsed: EnsembleFile<S> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| GbrtError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    if parsed.format != MODEL_FORMAT || parsed.version != MODEL_VERSION {
        return Err(GbrtError::Format {
            path: path.display().to_string(),
            message: format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                parsed.format, parsed.version
            ),
        });
    }
    Ok((
        TreeEnsemble {
            base_score: parsed.base_score,
            learning_rate: parsed.learning_rate,
            trees: parsed.trees,
            feature_names: parsed.feature_names,
        },
        parsed.config,
    ))
}
