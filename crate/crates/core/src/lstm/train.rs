//! Adam optimization with element-wise gradient clipping, the mini-batch
//! training loop with early stopping, and inference helpers.

use super::net::{backward, forward};
use super::{LstmError, LstmParams, LstmTrainConfig};
use crate::features::ValueScaler;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// First/second moment accumulators shaped like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub m: LstmParams<S>,
    pub v: LstmParams<S>,
    pub step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &LstmParams<S>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// One optimizer step: clip each gradient component to
/// `[-clip_value, clip_value]`, then apply the bias-corrected Adam update.
pub fn adam_step<S: Scalar>(
    state: &mut AdamState<S>,
    params: &mut LstmParams<S>,
    gradients: &LstmParams<S>,
    config: &LstmTrainConfig,
) -> Result<(), LstmError> {
    if params.hidden_size() != gradients.hidden_size()
        || params.input_dim() != gradients.input_dim()
    {
        return Err(LstmError::DimensionMismatch {
            expected: params.hidden_size(),
            got: gradients.hidden_size(),
        });
    }
    state.step += 1;
    let clip = S::lit(config.clip_value);
    let lr = S::lit(config.learning_rate);
    let beta1 = S::lit(BETA1);
    let beta2 = S::lit(BETA2);
    let eps = S::lit(EPSILON);
    let bias1 = S::one() - S::lit(BETA1.powi(state.step as i32));
    let bias2 = S::one() - S::lit(BETA2.powi(state.step as i32));

    let mut grads = gradients.clone();
    let mut p = params.flat_slices_mut();
    let mut g = grads.flat_slices_mut();
    let mut m = state.m.flat_slices_mut();
    let mut v = state.v.flat_slices_mut();
    for idx in 0..p.len() {
        let ps = &mut p[idx].1;
        let gs = &mut g[idx].1;
        let ms = &mut m[idx].1;
        let vs = &mut v[idx].1;
        for k in 0..ps.len() {
            let clipped = gs[k].max(-clip).min(clip);
            ms[k] = beta1 * ms[k] + (S::one() - beta1) * clipped;
            vs[k] = beta2 * vs[k] + (S::one() - beta2) * clipped * clipped;
            let m_hat = ms[k] / bias1;
            let v_hat = vs[k] / bias2;
            ps[k] = ps[k] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Per-epoch loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_mse: f64,
    pub val_mse: f64,
}

fn mean_squared_error<S: Scalar>(
    params: &LstmParams<S>,
    sequences: &[(Array2<S>, S)],
) -> Result<f64, LstmError> {
    let mut acc = S::zero();
    for (window, target) in sequences {
        let (pred, _) = forward(params, window.view(), false, None)?;
        acc += (pred - *target) * (pred - *target);
    }
    Ok((acc / S::lit(sequences.len() as f64)).to_f64().unwrap())
}

/// Train on scaled sequences. The last `ceil(validation_fraction * n)`
/// windows are held out chronologically; each epoch shuffles the remaining
/// windows with the seeded stream, draws a fresh dropout mask per sequence,
/// averages gradients within each mini-batch, and applies one Adam step per
/// batch. Stops after `patience` epochs without validation improvement and
/// returns the parameters of the best epoch. Deterministic given the seed.
pub fn train_lstm<S: Scalar>(
    sequences: &[(Array2<S>, S)],
    config: &LstmTrainConfig,
) -> Result<(LstmParams<S>, Vec<EpochStats>), LstmError> {
    config.validate()?;
    let n = sequences.len();
    let n_val = ((config.validation_fraction * n as f64).ceil() as usize).max(1);
    let n_train = n.saturating_sub(n_val);
    if n_train == 0 || n_val == 0 {
        return Err(LstmError::TooFewSequences { train: n_train, val: n_val });
    }
    let input_dim = sequences[0].0.ncols();
    for (window, target) in sequences {
        if window.ncols() != input_dim {
            return Err(LstmError::DimensionMismatch {
                expected: input_dim,
                got: window.ncols(),
            });
        }
        if !target.is_finite() {
            return Err(LstmError::NonFinite("targets"));
        }
    }
    let (train_set, val_set) = sequences.split_at(n_train);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params: LstmParams<S> = super::init_params(input_dim, config.hidden_size, &mut rng)?;
    if config.max_epochs == 0 {
        return Ok((params, Vec::new()));
    }
    let mut adam = AdamState::new(&params);
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut epochs_since_best = 0usize;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..n_train).collect();

    for _epoch in 0..config.max_epochs {
        // Fisher-Yates shuffle from the shared stream.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = S::zero();
        for batch in order.chunks(config.batch_size) {
            // Masks are drawn before the forward passes, in batch order.
            let masks: Vec<Option<Array1<S>>> = batch
                .iter()
                .map(|_| {
                    if config.dropout_rate > 0.0 {
                        Some(Array1::from_shape_fn(config.hidden_size, |_| {
                            if rng.gen::<f64>() < config.dropout_rate {
                                S::zero()
                            } else {
                                S::one()
                            }
                        }))
                    } else {
                        None
                    }
                })
                .collect();
            let inv_batch = S::lit(1.0 / batch.len() as f64);
            let mut batch_grads = params.zeros_like();
            for (&seq_idx, mask) in batch.iter().zip(&masks) {
                let (window, target) = &train_set[seq_idx];
                let dropout = mask.as_ref().map(|m| (m, config.dropout_rate));
                let (pred, cache) = forward(&params, window.view(), true, dropout)?;
                let err = pred - *target;
                epoch_loss += err * err;
                let loss_gradient = S::lit(2.0) * err * inv_batch;
                let grads = backward(&params, &cache, loss_gradient)?;
                accumulate(&mut batch_grads, &grads);
            }
            adam_step(&mut adam, &mut params, &batch_grads, config)?;
        }
        let train_mse = (epoch_loss / S::lit(n_train as f64)).to_f64().unwrap();
        let val_mse = mean_squared_error(&params, val_set)?;
        history.push(EpochStats { train_mse, val_mse });

        if val_mse < best_val {
            best_val = val_mse;
            best_params = params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= config.patience {
                break;
            }
        }
    }
    Ok((best_params, history))
}

fn accumulate<S: Scalar>(acc: &mut LstmParams<S>, delta: &LstmParams<S>) {
    let mut d = delta.clone();
    let mut a = acc.flat_slices_mut();
    let ds = d.flat_slices_mut();
    for (dst, src) in a.iter_mut().zip(ds) {
        for (x, y) in dst.1.iter_mut().zip(src.1.iter()) {
            *x += *y;
        }
    }
}

/// Inference over scaled windows, inverse-transforming the scalar output back
/// to original units.
pub fn predict_lstm<S: Scalar>(
    params: &LstmParams<S>,
    windows: &[Array2<S>],
    target_scaler: &ValueScaler<S>,
) -> Result<Vec<S>, LstmError> {
    windows
        .iter()
        .map(|window| {
            let (pred, _) = forward(params, window.view(), false, None)?;
            Ok(target_scaler.unscale(pred))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> LstmTrainConfig {
        LstmTrainConfig {
            hidden_size: 8,
            learning_rate: 0.01,
            clip_value: 0.5,
            dropout_rate: 0.0,
            batch_size: 16,
            max_epochs: 40,
            patience: 40,
            validation_fraction: 0.2,
            seed: 21,
        }
    }

    /// Noiseless linear task over the last window row.
    fn synthetic_sequences(n: usize) -> Vec<(Array2<f64>, f64)> {
        let mut state = 0x853C49E6748FEA9Bu64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..n)
            .map(|_| {
                let window = Array2::from_shape_fn((5, 3), |_| next());
                let last = window.row(4);
                let target = 0.2 * last[0] + 0.5 * last[1] + 0.3 * last[2];
                (window, target)
            })
            .collect()
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let params: LstmParams<f64> = super::super::init_params(
            3,
            4,
            &mut ChaCha8Rng::seed_from_u64(31),
        )
        .unwrap();
        let mut updated = params.clone();
        let mut adam = AdamState::new(&params);
        let zeros = params.zeros_like();
        adam_step(&mut adam, &mut updated, &zeros, &LstmTrainConfig::default()).unwrap();
        assert_eq!(updated, params);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn gradients_are_clipped_elementwise() {
        let mut params = LstmParams::<f64>::zeros(1, 1);
        let mut grads = params.zeros_like();
        // Raw gradient 2.0 must act like 0.5 under clip_value 0.5.
        grads.head_b[0] = 2.0;
        let mut grads_clipped = params.zeros_like();
        grads_clipped.head_b[0] = 0.5;
        let config = LstmTrainConfig::default();

        let mut adam_a = AdamState::new(&params);
        let mut p_a = params.clone();
        adam_step(&mut adam_a, &mut p_a, &grads, &config).unwrap();

        let mut adam_b = AdamState::new(&params);
        adam_step(&mut adam_b, &mut params, &grads_clipped, &config).unwrap();
        assert_eq!(p_a, params);
    }

    /// Single-step trace computed by hand beforehand: theta0 = 1, raw
    /// gradient 2 clipped to 0.5, lr 0.001 -> theta1 = 0.99900000002.
    #[test]
    fn first_step_matches_hand_computed_trace() {
        let mut params = LstmParams::<f64>::zeros(1, 1);
        params.head_b[0] = 1.0;
        let mut grads = params.zeros_like();
        grads.head_b[0] = 2.0;
        let mut adam = AdamState::new(&params);
        adam_step(&mut adam, &mut params, &grads, &LstmTrainConfig::default()).unwrap();
        assert!(
            (params.head_b[0] - 0.99900000002).abs() < 1e-12,
            "theta {}",
            params.head_b[0]
        );
        assert!((adam.m.head_b[0] - 0.05).abs() < 1e-15);
        assert!((adam.v.head_b[0] - 0.00025).abs() < 1e-18);
    }

    #[test]
    fn zero_epochs_returns_initial_params_and_empty_history() {
        let sequences = synthetic_sequences(20);
        let config = LstmTrainConfig { max_epochs: 0, ..tiny_config() };
        let (params, history) = train_lstm(&sequences, &config).unwrap();
        assert!(history.is_empty());
        let expected: LstmParams<f64> = super::super::init_params(
            3,
            config.hidden_size,
            &mut ChaCha8Rng::seed_from_u64(config.seed),
        )
        .unwrap();
        assert_eq!(params, expected);
    }

    #[test]
    fn learns_noiseless_linear_task() {
        let sequences = synthetic_sequences(120);
        let (params, history) = train_lstm(&sequences, &tiny_config()).unwrap();
        assert!(!history.is_empty());
        let first = history[0].val_mse;
        let best = history.iter().map(|h| h.val_mse).fold(f64::INFINITY, f64::min);
        assert!(
            best < 0.5 * first,
            "validation MSE did not halve: first {first}, best {best}"
        );
        assert!(params.all_finite());
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let sequences = synthetic_sequences(60);
        let config = LstmTrainConfig { max_epochs: 6, dropout_rate: 0.2, ..tiny_config() };
        let (pa, ha) = train_lstm(&sequences, &config).unwrap();
        let (pb, hb) = train_lstm(&sequences, &config).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(ha, hb);
    }

    #[test]
    fn rejects_too_few_sequences() {
        let sequences = synthetic_sequences(1);
        assert!(matches!(
            train_lstm(&sequences, &tiny_config()),
            Err(LstmError::TooFewSequences { .. })
        ));
    }

    #[test]
    fn predict_applies_inverse_scaling() {
        let params = LstmParams::<f64>::zeros(3, 4);
        let windows = vec![Array2::zeros((5, 3)), Array2::ones((5, 3))];
        // Raw output of the zero network is 0; identity scaler passes it.
        let identity = ValueScaler { min: 0.0, max: 1.0 };
        let preds = predict_lstm(&params, &windows, &identity).unwrap();
        assert_eq!(preds, vec![0.0, 0.0]);
        // A scaler over [0, 20000] maps raw 0.5 to 10000.
        let scaler = ValueScaler { min: 0.0, max: 20_000.0 };
        let mut biased = LstmParams::<f64>::zeros(3, 4);
        biased.head_b[0] = 0.5;
        let preds = predict_lstm(&biased, &windows, &scaler).unwrap();
        assert!(preds.iter().all(|&p| (p - 10_000.0).abs() < 1e-9));
    }

    #[test]
    fn repeated_inference_is_identical() {
        let sequences = synthetic_sequences(30);
        let config = LstmTrainConfig { max_epochs: 3, ..tiny_config() };
        let (params, _) = train_lstm(&sequences, &config).unwrap();
        let windows: Vec<Array2<f64>> = sequences.iter().map(|(w, _)| w.clone()).collect();
        let identity = ValueScaler { min: 0.0, max: 1.0 };
        let a = predict_lstm(&params, &windows, &identity).unwrap();
        let b = predict_lstm(&params, &windows, &identity).unwrap();
        assert_eq!(a, b);
    }
}
