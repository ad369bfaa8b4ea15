//! Recurrent payload regressor: a single LSTM layer with additive attention
//! over the hidden states, inverted dropout on the context vector, and a
//! dense scalar head. Trained from scratch by backpropagation through time
//! with Adam and element-wise gradient clipping; every analytic gradient is
//! checked against central finite differences in the test suite.

mod net;
mod train;

pub use net::{backward, forward, ForwardCache};
pub use train::{adam_step, predict_lstm, train_lstm, AdamState, EpochStats};

use crate::scalar::Scalar;
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("invalid lstm config: {0}")]
    InvalidConfig(String),
    #[error("dimensions must be at least 1 (input_dim {input_dim}, hidden {hidden})")]
    InvalidDims { input_dim: usize, hidden: usize },
    #[error("window has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dropout mask must be supplied exactly when training with dropout_rate > 0")]
    MaskMismatch,
    #[error("need at least 2 sequences after the validation split, got {train} train / {val} validation")]
    TooFewSequences { train: usize, val: usize },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("model file {path}: {message}")]
    Format { path: String, message: String },
}

/// Weights of one gate: input projection, recurrent projection, bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateWeights<S> {
    /// hidden x input_dim
    pub w: Array2<S>,
    /// hidden x hidden
    pub u: Array2<S>,
    pub b: Array1<S>,
}

/// Full parameter set of the regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams<S> {
    pub input: GateWeights<S>,
    pub forget: GateWeights<S>,
    pub output: GateWeights<S>,
    pub candidate: GateWeights<S>,
    /// Attention score matrix, hidden x hidden.
    pub attn_w: Array2<S>,
    /// Attention score vector.
    pub attn_v: Array1<S>,
    /// Dense head weights.
    pub head_w: Array1<S>,
    /// Dense head bias (single element).
    pub head_b: Array1<S>,
}

impl<S: Scalar> LstmParams<S> {
    pub fn hidden_size(&self) -> usize {
        self.input.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input.w.ncols()
    }

    /// All-zero parameters with the given shape.
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let gate = || GateWeights {
            w: Array2::zeros((hidden, input_dim)),
            u: Array2::zeros((hidden, hidden)),
            b: Array1::zeros(hidden),
        };
        Self {
            input: gate(),
            forget: gate(),
            output: gate(),
            candidate: gate(),
            attn_w: Array2::zeros((hidden, hidden)),
            attn_v: Array1::zeros(hidden),
            head_w: Array1::zeros(hidden),
            head_b: Array1::zeros(1),
        }
    }

    /// Zero tensors shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_size())
    }

    /// Flat views over every parameter tensor in a fixed order, for the
    /// optimizer and for gradient checking.
    pub fn flat_slices_mut(&mut self) -> Vec<(&'static str, &mut [S])> {
        let Self { input, forget, output, candidate, attn_w, attn_v, head_w, head_b } = self;
        let mut out: Vec<(&'static str, &mut [S])> = Vec::with_capacity(16);
        for (name, gate) in [
            ("input", input),
            ("forget", forget),
            ("output", output),
            ("candidate", candidate),
        ] {
            let GateWeights { w, u, b } = gate;
            out.push((name, w.as_slice_mut().expect("standard layout")));
            out.push((name, u.as_slice_mut().expect("standard layout")));
            out.push((name, b.as_slice_mut().expect("standard layout")));
        }
        out.push(("attn_w", attn_w.as_slice_mut().expect("standard layout")));
        out.push(("attn_v", attn_v.as_slice_mut().expect("standard layout")));
        out.push(("head_w", head_w.as_slice_mut().expect("standard layout")));
        out.push(("head_b", head_b.as_slice_mut().expect("standard layout")));
        out
    }

    pub fn all_finite(&self) -> bool {
        let mut clone = self.clone();
        clone
            .flat_slices_mut()
            .iter()
            .all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmTrainConfig {
    pub hidden_size: usize,
    pub learning_rate: f64,
    /// Element-wise gradient clip bound.
    pub clip_value: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for LstmTrainConfig {
    fn default() -> Self {
        Self {
            hidden_size: 64,
            learning_rate: 0.001,
            clip_value: 0.5,
            dropout_rate: 0.2,
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            validation_fraction: 0.1,
            seed: 42,
        }
    }
}

impl LstmTrainConfig {
    pub fn validate(&self) -> Result<(), LstmError> {
        if self.hidden_size == 0 {
            return Err(LstmError::InvalidConfig("hidden_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(LstmError::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.clip_value.is_finite() && self.clip_value > 0.0) {
            return Err(LstmError::InvalidConfig(format!(
                "clip_value must be > 0, got {}",
                self.clip_value
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(LstmError::InvalidConfig(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(LstmError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(LstmError::InvalidConfig("patience must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(LstmError::InvalidConfig(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Glorot-uniform initialization; gate biases zero except the forget gate,
/// which starts at 1. Deterministic given the random stream.
pub fn init_params<S: Scalar>(
    input_dim: usize,
    hidden: usize,
    rng: &mut impl Rng,
) -> Result<LstmParams<S>, LstmError> {
    if input_dim == 0 || hidden == 0 {
        return Err(LstmError::InvalidDims { input_dim, hidden });
    }
    let glorot = |rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut dyn rand::RngCore| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| {
            S::lit((rng.gen::<f64>() * 2.0 - 1.0) * limit)
        })
    };
    let gate = |forget: bool, rng: &mut dyn rand::RngCore| GateWeights {
        w: glorot(hidden, input_dim, input_dim, hidden, rng),
        u: glorot(hidden, hidden, hidden, hidden, rng),
        b: if forget { Array1::from_elem(hidden, S::one()) } else { Array1::zeros(hidden) },
    };
    let input = gate(false, rng);
    let forget = gate(true, rng);
    let output = gate(false, rng);
    let candidate = gate(false, rng);
    let attn_w = glorot(hidden, hidden, hidden, hidden, rng);
    let attn_v = glorot(1, hidden, hidden, 1, rng).row(0).to_owned();
    let head_w = glorot(1, hidden, hidden, 1, rng).row(0).to_owned();
    Ok(LstmParams {
        input,
        forget,
        output,
        candidate,
        attn_w,
        attn_v,
        head_w,
        head_b: Array1::zeros(1),
    })
}

const MODEL_FORMAT: &str = "haulcast-lstm";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: serde::de::DeserializeOwned"))]
struct LstmFile<S> {
    format: String,
    version: u32,
    input_dim: usize,
    hidden_size: usize,
    params: LstmParams<S>,
}

/// Persist parameters as versioned JSON; floats round-trip bit-exactly.
pub fn save_params<S: Scalar + Serialize>(
    path: impl AsRef<Path>,
    params: &LstmParams<S>,
) -> Result<(), LstmError> {
    let path = path.as_ref();
    let file = LstmFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        input_dim: params.input_dim(),
        hidden_size: params.hidden_size(),
        params: params.clone(),
    };
    let body = serde_json::to_string_pretty(&file).expect("params serialize");
    let mut out = File::create(path).map_err(|source| LstmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    out.write_all(body.as_bytes()).map_err(|source| LstmError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load parameters persisted by [`save_params`].
pub fn load_params<S: Scalar + DeserializeOwned>(
    path: impl AsRef<Path>,
) -> Result<LstmParams<S>, LstmError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| LstmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parsed: LstmFile<S> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| LstmError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    if parsed.format != MODEL_FORMAT || parsed.version != MODEL_VERSION {
        return Err(LstmError::Format {
            path: path.display().to_string(),
            message: format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                parsed.format, parsed.version
            ),
        });
    }
    if parsed.params.input_dim() != parsed.input_dim
        || parsed.params.hidden_size() != parsed.hidden_size
    {
        return Err(LstmError::Format {
            path: path.display().to_string(),
            message: "declared dims do not match tensors".to_string(),
        });
    }
    Ok(parsed.params)
}

/// Write per-epoch loss history as `epoch,train_mse,val_mse`.
pub fn save_history_csv(
    path: impl AsRef<Path>,
    history: &[EpochStats],
) -> Result<(), LstmError> {
    let path = path.as_ref();
    let mut out = String::from("epoch,train_mse,val_mse\n");
    for (epoch, stats) in history.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", epoch, stats.train_mse, stats.val_mse));
    }
    let mut file = File::create(path).map_err(|source| LstmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| LstmError::Io {
        path: path.display().to_string(),
        source,
    })
}
