//! Next-shift fleet composition: least-squares point predictions for truck
//! and shovel counts plus Monte-Carlo scenarios generated by resampling the
//! regression residuals with replacement.
//!
//! The point prediction feeds the `predicted_*_next` model features; scenario
//! sets quantify the surrounding uncertainty.

use crate::ingest::ShiftRecord;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("need at least {needed} usable rows after lag construction, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("model has no stored residuals to resample")]
    Unfitted,
    #[error("n_draws must be at least 1")]
    NoDraws,
}

/// Regression inputs for one target: current count, lag-1 count, mean of the
/// last four counts (intercept implied).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetState {
    pub current: f64,
    pub lag1: f64,
    pub mean4: f64,
}

/// Least-squares fit for one count series, with the full training residuals
/// retained for bootstrap resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModel {
    /// Coefficients over (current, lag1, mean4, intercept).
    pub coefficients: [f64; 4],
    pub residuals: Vec<f64>,
}

impl TargetModel {
    pub fn predict(&self, state: &FleetState) -> f64 {
        let [a, b, c, d] = self.coefficients;
        a * state.current + b * state.lag1 + c * state.mean4 + d
    }
}

/// Fleet regressor: one model per target series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetRegressor {
    pub trucks: TargetModel,
    pub shovels: TargetModel,
}

/// Point predictions plus resampled integer scenarios for one shift.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetMonteCarlo {
    pub point: (f64, f64),
    pub scenarios: Vec<(u32, u32)>,
}

const PIVOT_RELATIVE_TOLERANCE: f64 = 1e-12;
const RIDGE_EPS: f64 = 1e-8;

/// Solve a 4x4 linear system by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot degenerates (singular system).
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    let scale = a
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
        .max(1.0);
    for col in 0..4 {
        let pivot_row = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() <= scale * PIVOT_RELATIVE_TOLERANCE {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Ordinary least squares over (current, lag1, mean4) with intercept, via the
/// normal equations. When the design matrix is singular the slope block gets
/// a ridge penalty (the intercept stays unpenalized), which collapses to an
/// intercept-only fit on degenerate data.
pub fn ols_fit(xs: &[[f64; 3]], ys: &[f64]) -> [f64; 4] {
    assert_eq!(xs.len(), ys.len());
    let mut a = [[0.0_f64; 4]; 4];
    let mut b = [0.0_f64; 4];
    for (x, &y) in xs.iter().zip(ys) {
        let row = [x[0], x[1], x[2], 1.0];
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * y;
        }
    }
    if let Some(beta) = solve4(a, b) {
        return beta;
    }
    let slope_scale = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let eps = RIDGE_EPS * (1.0 + slope_scale);
    let mut ridged = a;
    for (i, row) in ridged.iter_mut().enumerate().take(3) {
        row[i] += eps;
    }
    solve4(ridged, b).expect("ridged normal equations are nonsingular")
}

fn series_state(counts: &[f64], t: usize) -> FleetState {
    let lag1 = counts[t.saturating_sub(1)];
    let lo = t.saturating_sub(3);
    let window = &counts[lo..=t];
    let mean4 = window.iter().sum::<f64>() / window.len() as f64;
    FleetState { current: counts[t], lag1, mean4 }
}

fn fit_target(counts: &[f64]) -> Result<TargetModel, FleetError> {
    let n = counts.len();
    let usable = n.saturating_sub(4);
    if usable < 10 {
        return Err(FleetError::TooFewRows { needed: 10, got: usable });
    }
    let mut xs = Vec::with_capacity(usable);
    let mut ys = Vec::with_capacity(usable);
    for t in 3..n - 1 {
        let s = series_state(counts, t);
        xs.push([s.current, s.lag1, s.mean4]);
        ys.push(counts[t + 1]);
    }
    let coefficients = ols_fit(&xs, &ys);
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(x, &y)| {
            y - (coefficients[0] * x[0]
                + coefficients[1] * x[1]
                + coefficients[2] * x[2]
                + coefficients[3])
        })
        .collect();
    Ok(TargetModel { coefficients, residuals })
}

/// Fit both count regressions on chronological history.
pub fn fit_fleet_regressor(history: &[ShiftRecord]) -> Result<FleetRegressor, FleetError> {
    let trucks: Vec<f64> = history.iter().map(|r| r.working_trucks as f64).collect();
    let shovels: Vec<f64> = history.iter().map(|r| r.working_shovels as f64).collect();
    Ok(FleetRegressor {
        trucks: fit_target(&trucks)?,
        shovels: fit_target(&shovels)?,
    })
}

/// Point prediction plus `n_draws` bootstrap scenarios for the next shift.
/// Each scenario adds a uniformly resampled training residual to the point
/// prediction, clips at zero, and rounds to a whole count. Deterministic
/// given the random stream.
pub fn simulate_next_fleet(
    model: &FleetRegressor,
    trucks_state: &FleetState,
    shovels_state: &FleetState,
    n_draws: usize,
    rng: &mut impl Rng,
) -> Result<FleetMonteCarlo, FleetError> {
    if n_draws == 0 {
        return Err(FleetError::NoDraws);
    }
    if model.trucks.residuals.is_empty() || model.shovels.residuals.is_empty() {
        return Err(FleetError::Unfitted);
    }
    let point = (model.trucks.predict(trucks_state), model.shovels.predict(shovels_state));
    let mut scenarios = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let rt = model.trucks.residuals[rng.gen_range(0..model.trucks.residuals.len())];
        let rs = model.shovels.residuals[rng.gen_range(0..model.shovels.residuals.len())];
        let t = (point.0 + rt).max(0.0).round().min(u32::MAX as f64) as u32;
        let s = (point.1 + rs).max(0.0).round().min(u32::MAX as f64) as u32;
        scenarios.push((t, s));
    }
    Ok(FleetMonteCarlo { point, scenarios })
}

/// Point predictions aligned with the history: entry t predicts shift t+1.
/// Early entries (t < 3) use lag windows clamped to the available prefix.
pub fn predict_series(model: &FleetRegressor, history: &[ShiftRecord]) -> Vec<(f64, f64)> {
    let trucks: Vec<f64> = history.iter().map(|r| r.working_trucks as f64).collect();
    let shovels: Vec<f64> = history.iter().map(|r| r.working_shovels as f64).collect();
    (0..history.len())
        .map(|t| {
            (
                model.trucks.predict(&series_state(&trucks, t)),
                model.shovels.predict(&series_state(&shovels, t)),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ShiftKind;
    use chrono::NaiveDate;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn history_from_counts(counts: &[u32]) -> Vec<ShiftRecord> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| ShiftRecord {
                shift_index: i as u64,
                date: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap()
                    + chrono::Duration::days((i / 2) as i64),
                shift_kind: if i % 2 == 0 { ShiftKind::Day } else { ShiftKind::Night },
                crew: "A".to_string(),
                working_trucks: c,
                working_shovels: c / 3 + 1,
                cycle_count: 150,
                payload: 13000.0,
                cycle_time: 64.0,
                precipitation: 0.0,
            })
            .collect()
    }

    #[test]
    fn perfectly_linear_data_recovers_unit_coefficient() {
        // y equals the current count exactly: OLS must find (1, 0, 0, 0).
        let xs = [
            [10.0, 12.0, 18.0],
            [14.0, 9.0, 6.0],
            [8.0, 13.0, 15.0],
            [16.0, 15.0, 9.0],
            [11.0, 10.0, 12.0],
        ];
        let ys: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        let beta = ols_fit(&xs, &ys);
        assert!((beta[0] - 1.0).abs() < 1e-9, "beta {beta:?}");
        for b in &beta[1..] {
            assert!(b.abs() < 1e-9, "beta {beta:?}");
        }
        for (x, y) in xs.iter().zip(&ys) {
            let fitted = beta[0] * x[0] + beta[1] * x[1] + beta[2] * x[2] + beta[3];
            assert!((fitted - y).abs() < 1e-9);
        }
    }

    /// Oracle solved exactly in rational arithmetic beforehand:
    /// beta = (21/16, -5/28, 13/56, -121/56).
    #[test]
    fn hand_solved_normal_equations() {
        let xs = [
            [10.0, 12.0, 18.0],
            [14.0, 9.0, 6.0],
            [8.0, 13.0, 15.0],
            [16.0, 15.0, 9.0],
        ];
        let ys = [13.0, 16.0, 9.5, 18.25];
        let beta = ols_fit(&xs, &ys);
        let expected = [21.0 / 16.0, -5.0 / 28.0, 13.0 / 56.0, -121.0 / 56.0];
        for (b, e) in beta.iter().zip(&expected) {
            assert!((b - e).abs() < 1e-9, "got {beta:?}, expected {expected:?}");
        }
    }

    #[test]
    fn constant_series_falls_back_to_intercept_only() {
        let history = history_from_counts(&[10; 20]);
        let model = fit_fleet_regressor(&history).unwrap();
        for state in [
            FleetState { current: 10.0, lag1: 10.0, mean4: 10.0 },
            FleetState { current: 20.0, lag1: 3.0, mean4: 7.5 },
            FleetState { current: 0.0, lag1: 0.0, mean4: 0.0 },
        ] {
            let p = model.trucks.predict(&state);
            assert!((p - 10.0).abs() < 1e-6, "prediction {p} for {state:?}");
        }
    }

    #[test]
    fn residual_mean_is_zero_on_training_data() {
        let config = crate::simdata::SimConfig { n_shifts: 500, ..Default::default() };
        let history = crate::simdata::simulate_shifts(&config).unwrap();
        let model = fit_fleet_regressor(&history).unwrap();
        for target in [&model.trucks, &model.shovels] {
            let mean = target.residuals.iter().sum::<f64>() / target.residuals.len() as f64;
            assert!(mean.abs() < 1e-9, "residual mean {mean}");
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        let history = history_from_counts(&[10, 11, 12, 13, 12, 11, 10, 12, 13, 11, 12, 10, 11]);
        assert!(matches!(
            fit_fleet_regressor(&history),
            Err(FleetError::TooFewRows { .. })
        ));
    }

    #[test]
    fn zero_residuals_give_deterministic_scenarios() {
        let model = FleetRegressor {
            trucks: TargetModel { coefficients: [1.0, 0.0, 0.0, 0.0], residuals: vec![0.0; 8] },
            shovels: TargetModel { coefficients: [1.0, 0.0, 0.0, 0.0], residuals: vec![0.0; 8] },
        };
        let state = FleetState { current: 13.4, lag1: 12.0, mean4: 13.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mc = simulate_next_fleet(&model, &state, &state, 100, &mut rng).unwrap();
        assert!(mc.scenarios.iter().all(|&(t, s)| t == 13 && s == 13));
    }

    #[test]
    fn scenarios_stay_on_resampling_support() {
        let model = FleetRegressor {
            trucks: TargetModel {
                coefficients: [0.0, 0.0, 0.0, 14.0],
                residuals: vec![-1.0, 1.0],
            },
            shovels: TargetModel {
                coefficients: [0.0, 0.0, 0.0, 5.0],
                residuals: vec![0.0],
            },
        };
        let state = FleetState { current: 0.0, lag1: 0.0, mean4: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mc = simulate_next_fleet(&model, &state, &state, 1000, &mut rng).unwrap();
        assert_eq!(mc.point.0, 14.0);
        let mut seen = std::collections::BTreeSet::new();
        for &(t, _) in &mc.scenarios {
            seen.insert(t);
            assert!(t == 13 || t == 15, "scenario {t} outside support");
        }
        assert_eq!(seen.len(), 2, "both support points should appear in 1000 draws");
    }

    #[test]
    fn scenarios_clip_at_zero() {
        let model = FleetRegressor {
            trucks: TargetModel {
                coefficients: [0.0, 0.0, 0.0, 0.4],
                residuals: vec![-2.0],
            },
            shovels: TargetModel {
                coefficients: [0.0, 0.0, 0.0, 5.0],
                residuals: vec![0.0],
            },
        };
        let state = FleetState { current: 0.0, lag1: 0.0, mean4: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mc = simulate_next_fleet(&model, &state, &state, 10, &mut rng).unwrap();
        assert!(mc.scenarios.iter().all(|&(t, _)| t == 0));
    }

    #[test]
    fn bootstrap_statistics_match_direct_oracle() {
        let config = crate::simdata::SimConfig { n_shifts: 400, ..Default::default() };
        let history = crate::simdata::simulate_shifts(&config).unwrap();
        let model = fit_fleet_regressor(&history).unwrap();
        let state = FleetState { current: 14.0, lag1: 13.0, mean4: 13.5 };
        let point = model.trucks.predict(&state);

        // Direct oracle over the residual list.
        let support: Vec<f64> = model
            .trucks
            .residuals
            .iter()
            .map(|r| (point + r).max(0.0).round())
            .collect();
        let expected_mean = support.iter().sum::<f64>() / support.len() as f64;
        let res_mean =
            model.trucks.residuals.iter().sum::<f64>() / model.trucks.residuals.len() as f64;
        let res_std = (model
            .trucks
            .residuals
            .iter()
            .map(|r| (r - res_mean).powi(2))
            .sum::<f64>()
            / (model.trucks.residuals.len() - 1) as f64)
            .sqrt();

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mc = simulate_next_fleet(&model, &state, &state, 10_000, &mut rng).unwrap();
        let draws: Vec<f64> = mc.scenarios.iter().map(|&(t, _)| t as f64).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let std = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>()
            / (draws.len() - 1) as f64)
            .sqrt();
        assert!(
            (mean - expected_mean).abs() / expected_mean < 0.01,
            "mean {mean} vs oracle {expected_mean}"
        );
        assert!((std - res_std).abs() / res_std < 0.05, "std {std} vs residual std {res_std}");
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let config = crate::simdata::SimConfig { n_shifts: 200, ..Default::default() };
        let history = crate::simdata::simulate_shifts(&config).unwrap();
        let model = fit_fleet_regressor(&history).unwrap();
        let state = FleetState { current: 14.0, lag1: 13.0, mean4: 13.5 };
        let a = simulate_next_fleet(&model, &state, &state, 50, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        let b = simulate_next_fleet(&model, &state, &state, 50, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scenario_fluctuation_matches_reported_band() {
        // Shift-to-shift relative fluctuation of one-scenario truck draws on
        // default simulated data: mean(|delta|) / mean in [15%, 30%].
        let config = crate::simdata::SimConfig { n_shifts: 2000, ..Default::default() };
        let history = crate::simdata::simulate_shifts(&config).unwrap();
        let model = fit_fleet_regressor(&history).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let trucks: Vec<f64> = history.iter().map(|r| r.working_trucks as f64).collect();
        let mut series = Vec::new();
        for t in 3..history.len() - 1 {
            let state = series_state(&trucks, t);
            let mc = simulate_next_fleet(&model, &state, &state, 1, &mut rng).unwrap();
            series.push(mc.scenarios[0].0 as f64);
        }
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let mean_abs_delta = series
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .sum::<f64>()
            / (series.len() - 1) as f64;
        let fluctuation = mean_abs_delta / mean;
        assert!(
            (0.15..=0.30).contains(&fluctuation),
            "fluctuation {fluctuation} outside [0.15, 0.30]"
        );
    }
}
