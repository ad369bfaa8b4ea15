//! Forward evaluation and backpropagation through time.
//!
//! Gate recurrences use logistic gates and tanh squashing with h_0 = c_0 = 0.
//! Attention scores are `s_t = v . tanh(W_a h_t)`, softmaxed into weights
//! whose convex combination of hidden states forms the context vector; in
//! training mode the context passes through an inverted dropout mask before
//! the dense head.

use super::{LstmError, LstmParams};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, ArrayView2};

fn sigmoid<S: Scalar>(z: S) -> S {
    S::one() / (S::one() + (-z).exp())
}

/// Every activation needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    window: Array2<S>,
    gate_i: Array2<S>,
    gate_f: Array2<S>,
    gate_o: Array2<S>,
    gate_g: Array2<S>,
    cell: Array2<S>,
    cell_tanh: Array2<S>,
    hidden: Array2<S>,
    attn_tanh: Array2<S>,
    alpha: Array1<S>,
    context: Array1<S>,
    dropout: Option<(Array1<S>, S)>,
    pub prediction: S,
}

impl<S: Scalar> ForwardCache<S> {
    /// Attention weights of the cached pass (non-negative, sum to one).
    pub fn attention_weights(&self) -> &Array1<S> {
        &self.alpha
    }

    pub fn hidden_states(&self) -> &Array2<S> {
        &self.hidden
    }
}

/// Run the network over one window (lookback x input_dim). In training mode
/// with a positive dropout rate a per-unit 0/1 mask must be supplied and the
/// context is rescaled by 1/(1-rate); inference takes no mask and is
/// deterministic.
pub fn forward<S: Scalar>(
    params: &LstmParams<S>,
    window: ArrayView2<'_, S>,
    train_mode: bool,
    dropout: Option<(&Array1<S>, f64)>,
) -> Result<(S, ForwardCache<S>), LstmError> {
    let hidden = params.hidden_size();
    let steps = window.nrows();
    if window.ncols() != params.input_dim() {
        return Err(LstmError::DimensionMismatch {
            expected: params.input_dim(),
            got: window.ncols(),
        });
    }
    if steps == 0 {
        return Err(LstmError::InvalidConfig("window must have at least one step".into()));
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(LstmError::NonFinite("window"));
    }
    match (train_mode, &dropout) {
        (true, Some((mask, rate))) => {
            if mask.len() != hidden || !(*rate > 0.0 && *rate < 1.0) {
                return Err(LstmError::MaskMismatch);
            }
        }
        (true, None) | (false, None) => {}
        (false, Some(_)) => return Err(LstmError::MaskMismatch),
    }

    // Input projections for all steps at once: (T x D) . (D x H).
    let wx_i = window.dot(&params.input.w.t());
    let wx_f = window.dot(&params.forget.w.t());
    let wx_o = window.dot(&params.output.w.t());
    let wx_g = window.dot(&params.candidate.w.t());

    let mut gate_i = Array2::zeros((steps, hidden));
    let mut gate_f = Array2::zeros((steps, hidden));
    let mut gate_o = Array2::zeros((steps, hidden));
    let mut gate_g = Array2::zeros((steps, hidden));
    let mut cell = Array2::zeros((steps, hidden));
    let mut cell_tanh = Array2::zeros((steps, hidden));
    let mut hidden_states = Array2::zeros((steps, hidden));

    let mut h_prev: Array1<S> = Array1::zeros(hidden);
    let mut c_prev: Array1<S> = Array1::zeros(hidden);
    for t in 0..steps {
        let uh_i = params.input.u.dot(&h_prev);
        let uh_f = params.forget.u.dot(&h_prev);
        let uh_o = params.output.u.dot(&h_prev);
        let uh_g = params.candidate.u.dot(&h_prev);
        for k in 0..hidden {
            let i = sigmoid(wx_i[[t, k]] + uh_i[k] + params.input.b[k]);
            let f = sigmoid(wx_f[[t, k]] + uh_f[k] + params.forget.b[k]);
            let o = sigmoid(wx_o[[t, k]] + uh_o[k] + params.output.b[k]);
            let g = (wx_g[[t, k]] + uh_g[k] + params.candidate.b[k]).tanh();
            let c = f * c_prev[k] + i * g;
            let ct = c.tanh();
            let h = o * ct;
            gate_i[[t, k]] = i;
            gate_f[[t, k]] = f;
            gate_o[[t, k]] = o;
            gate_g[[t, k]] = g;
            cell[[t, k]] = c;
            cell_tanh[[t, k]] = ct;
            hidden_states[[t, k]] = h;
            debug_assert!(h.abs() <= S::one(), "hidden state left [-1, 1]");
        }
        h_prev.assign(&hidden_states.row(t));
        c_prev.assign(&cell.row(t));
    }

    // Additive attention over the hidden states.
    let mut attn_tanh = Array2::zeros((steps, hidden));
    let mut scores = Array1::zeros(steps);
    for t in 0..steps {
        let a = params.attn_w.dot(&hidden_states.row(t));
        let mut s = S::zero();
        for k in 0..hidden {
            let u = a[k].tanh();
            attn_tanh[[t, k]] = u;
            s += params.attn_v[k] * u;
        }
        scores[t] = s;
    }
    let max_score = scores.iter().cloned().fold(S::neg_infinity(), S::max);
    let mut alpha: Array1<S> = scores.mapv(|s| (s - max_score).exp());
    let norm = alpha.sum();
    alpha.mapv_inplace(|a| a / norm);

    let mut context_raw: Array1<S> = Array1::zeros(hidden);
    for t in 0..steps {
        context_raw.scaled_add(alpha[t], &hidden_states.row(t));
    }

    let (context, dropout_cache) = match (train_mode, dropout) {
        (true, Some((mask, rate))) => {
            let keep_scale = S::lit(1.0 / (1.0 - rate));
            let ctx = Array1::from_shape_fn(hidden, |k| context_raw[k] * mask[k] * keep_scale);
            (ctx, Some((mask.clone(), keep_scale)))
        }
        _ => (context_raw, None),
    };

    let prediction = params.head_w.dot(&context) + params.head_b[0];
    let cache = ForwardCache {
        window: window.to_owned(),
        gate_i,
        gate_f,
        gate_o,
        gate_g,
        cell,
        cell_tanh,
        hidden: hidden_states,
        attn_tanh,
        alpha,
        context,
        dropout: dropout_cache,
        prediction,
    };
    Ok((prediction, cache))
}

/// Exact gradients of the loss with respect to every parameter, given
/// `loss_gradient = dL/dprediction` for the cached forward pass.
pub fn backward<S: Scalar>(
    params: &LstmParams<S>,
    cache: &ForwardCache<S>,
    loss_gradient: S,
) -> Result<LstmParams<S>, LstmError> {
    let hidden = params.hidden_size();
    let steps = cache.window.nrows();
    if cache.hidden.ncols() != hidden || cache.window.ncols() != params.input_dim() {
        return Err(LstmError::DimensionMismatch {
            expected: hidden,
            got: cache.hidden.ncols(),
        });
    }
    let mut grads = params.zeros_like();

    // Dense head.
    grads.head_b[0] = loss_gradient;
    grads.head_w.scaled_add(loss_gradient, &cache.context);
    let mut d_context: Array1<S> = params.head_w.mapv(|w| w * loss_gradient);
    if let Some((mask, keep_scale)) = &cache.dropout {
        for k in 0..hidden {
            d_context[k] = d_context[k] * mask[k] * *keep_scale;
        }
    }

    // Attention: context = sum_t alpha_t h_t.
    let mut d_alpha: Array1<S> = Array1::zeros(steps);
    let mut d_hidden: Array2<S> = Array2::zeros((steps, hidden));
    for t in 0..steps {
        d_alpha[t] = cache.hidden.row(t).dot(&d_context);
        d_hidden.row_mut(t).scaled_add(cache.alpha[t], &d_context);
    }
    // Softmax backward: ds = alpha .* (d_alpha - <alpha, d_alpha>).
    let dot = cache.alpha.dot(&d_alpha);
    let d_scores: Array1<S> = Array1::from_shape_fn(steps, |t| cache.alpha[t] * (d_alpha[t] - dot));
    // Score backward: s_t = v . tanh(W_a h_t).
    for t in 0..steps {
        let ds = d_scores[t];
        let mut d_a: Array1<S> = Array1::zeros(hidden);
        for k in 0..hidden {
            let u = cache.attn_tanh[[t, k]];
            grads.attn_v[k] += ds * u;
            d_a[k] = ds * params.attn_v[k] * (S::one() - u * u);
        }
        for k in 0..hidden {
            grads.attn_w.row_mut(k).scaled_add(d_a[k], &cache.hidden.row(t));
        }
        let back = params.attn_w.t().dot(&d_a);
        d_hidden.row_mut(t).scaled_add(S::one(), &back);
    }

    // Backpropagation through time.
    let mut d_h_next: Array1<S> = Array1::zeros(hidden);
    let mut d_c_next: Array1<S> = Array1::zeros(hidden);
    for t in (0..steps).rev() {
        let mut d_z_i: Array1<S> = Array1::zeros(hidden);
        let mut d_z_f: Array1<S> = Array1::zeros(hidden);
        let mut d_z_o: Array1<S> = Array1::zeros(hidden);
        let mut d_z_g: Array1<S> = Array1::zeros(hidden);
        let mut d_c_prev: Array1<S> = Array1::zeros(hidden);
        for k in 0..hidden {
            let dh = d_hidden[[t, k]] + d_h_next[k];
            let i = cache.gate_i[[t, k]];
            let f = cache.gate_f[[t, k]];
            let o = cache.gate_o[[t, k]];
            let g = cache.gate_g[[t, k]];
            let ct = cache.cell_tanh[[t, k]];
            let c_prev = if t == 0 { S::zero() } else { cache.cell[[t - 1, k]] };

            let d_o = dh * ct;
            let d_c = dh * o * (S::one() - ct * ct) + d_c_next[k];
            let d_i = d_c * g;
            let d_g = d_c * i;
            let d_f = d_c * c_prev;
            d_c_prev[k] = d_c * f;

            d_z_i[k] = d_i * i * (S::one() - i);
            d_z_f[k] = d_f * f * (S::one() - f);
            d_z_o[k] = d_o * o * (S::one() - o);
            d_z_g[k] = d_g * (S::one() - g * g);
        }

        let x_t = cache.window.row(t);
        let h_prev = if t == 0 { None } else { Some(cache.hidden.row(t - 1)) };
        for (gate_grads, d_z) in [
            (&mut grads.input, &d_z_i),
            (&mut grads.forget, &d_z_f),
            (&mut grads.output, &d_z_o),
            (&mut grads.candidate, &d_z_g),
        ] {
            for k in 0..hidden {
                gate_grads.w.row_mut(k).scaled_add(d_z[k], &x_t);
                if let Some(hp) = h_prev {
                    gate_grads.u.row_mut(k).scaled_add(d_z[k], &hp);
                }
                gate_grads.b[k] += d_z[k];
            }
        }

        let mut d_h_prev = params.input.u.t().dot(&d_z_i);
        d_h_prev += &params.forget.u.t().dot(&d_z_f);
        d_h_prev += &params.output.u.t().dot(&d_z_o);
        d_h_prev += &params.candidate.u.t().dot(&d_z_g);
        d_h_next = d_h_prev;
        d_c_next = d_c_prev;
    }

    Ok(grads)
}
