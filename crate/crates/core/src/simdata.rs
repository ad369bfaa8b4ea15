//! Synthetic shift-level operational data, calibrated to published fleet
//! statistics: ~13.8 working trucks (std 3.1), 4.7 shovels (std 1.4),
//! 158 cycles (std 71), 13 795 t payload (std 6 393), 64 min cycle time
//! (std 17), with a January–March wet season and breakdown-driven fleet
//! fluctuation.
//!
//! The generative story per shift: a truck/shovel availability draw loses a
//! binomial number of breakdowns; cycle throughput is the fleet-time budget
//! `trucks * shift_minutes / cycle_time`, scaled by a calibration constant, a
//! rain degradation factor, a night-shift boost, and multiplicative noise;
//! payload is cycles times tons-per-cycle with its own noise. Everything is a
//! pure function of the config (seed included).

use crate::ingest::{ShiftKind, ShiftRecord};
use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: field `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },
}

/// Calendar year the first simulated shift falls in.
const ANCHOR_YEAR: i32 = 2022;
/// Day of year at the middle of the wet season (mid February).
const WET_SEASON_PEAK_DAY: f64 = 45.0;
const DAYS_PER_YEAR: f64 = 365.25;
/// Probability that a shift sees no rain at all.
const DRY_SHIFT_PROB: f64 = 0.5;
/// Probability that a wet draw is an extreme event, and its scale factor.
const STORM_PROB: f64 = 0.04;
const STORM_MULTIPLIER: f64 = 4.0;
/// Cycle-time draws are floored at this fraction of the mean.
const CYCLE_TIME_FLOOR_FRAC: f64 = 0.25;

/// Simulator configuration. Defaults reproduce the published operational
/// statistics over a long run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub n_shifts: usize,
    /// 1..=366; day of year of the first shift.
    pub start_day_of_year: u32,
    pub trucks_mean: f64,
    pub trucks_std: f64,
    pub shovels_mean: f64,
    pub shovels_std: f64,
    pub cycle_time_mean: f64,
    pub cycle_time_std: f64,
    pub tons_per_cycle: f64,
    pub cycle_rate_calibration: f64,
    pub shift_minutes: f64,
    /// Mean rain per shift at the height of the wet season (mm).
    pub rain_wet_season_peak: f64,
    /// Mean rain per shift in the depth of the dry season (mm).
    pub rain_dry_season_level: f64,
    /// Fractional cycle loss at saturating rain, in [0, 1].
    pub rain_sensitivity: f64,
    /// Rain amount (mm) beyond which degradation no longer grows.
    pub rain_saturation: f64,
    /// Per-truck (and per-shovel) breakdown probability per shift.
    pub breakdown_prob: f64,
    pub crew_ids: Vec<String>,
    /// Multiplicative noise scale on cycle count.
    pub cycle_noise_scale: f64,
    /// Multiplicative noise scale on payload.
    pub payload_noise_scale: f64,
    /// Cycle-count multiplier applied to night shifts.
    pub night_cycle_multiplier: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_shifts: 2000,
            start_day_of_year: 1,
            trucks_mean: 13.8,
            trucks_std: 3.1,
            shovels_mean: 4.7,
            shovels_std: 1.4,
            cycle_time_mean: 64.0,
            cycle_time_std: 17.0,
            tons_per_cycle: 87.3,
            cycle_rate_calibration: 1.16,
            shift_minutes: 630.0,
            rain_wet_season_peak: 6.0,
            rain_dry_season_level: 0.3,
            rain_sensitivity: 0.3,
            rain_saturation: 40.0,
            breakdown_prob: 0.005,
            crew_ids: vec!["A".into(), "B".into(), "C".into(), "D".into()],
            cycle_noise_scale: 0.11,
            payload_noise_scale: 0.10,
            night_cycle_multiplier: 1.03,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        fn non_negative(field: &'static str, v: f64) -> Result<(), SimError> {
            if !v.is_finite() || v < 0.0 {
                return Err(SimError::InvalidConfig {
                    field,
                    message: format!("must be finite and >= 0, got {v}"),
                });
            }
            Ok(())
        }
        if self.n_shifts == 0 {
            return Err(SimError::InvalidConfig {
                field: "n_shifts",
                message: "must be >= 1".into(),
            });
        }
        if !(1..=366).contains(&self.start_day_of_year) {
            return Err(SimError::InvalidConfig {
                field: "start_day_of_year",
                message: format!("must be in 1..=366, got {}", self.start_day_of_year),
            });
        }
        non_negative("trucks_mean", self.trucks_mean)?;
        non_negative("trucks_std", self.trucks_std)?;
        non_negative("shovels_mean", self.shovels_mean)?;
        non_negative("shovels_std", self.shovels_std)?;
        non_negative("cycle_time_std", self.cycle_time_std)?;
        non_negative("tons_per_cycle", self.tons_per_cycle)?;
        non_negative("cycle_rate_calibration", self.cycle_rate_calibration)?;
        non_negative("rain_wet_season_peak", self.rain_wet_season_peak)?;
        non_negative("rain_dry_season_level", self.rain_dry_season_level)?;
        non_negative("rain_saturation", self.rain_saturation)?;
        non_negative("cycle_noise_scale", self.cycle_noise_scale)?;
        non_negative("payload_noise_scale", self.payload_noise_scale)?;
        non_negative("night_cycle_multiplier", self.night_cycle_multiplier)?;
        if !self.cycle_time_mean.is_finite() || self.cycle_time_mean <= 0.0 {
            return Err(SimError::InvalidConfig {
                field: "cycle_time_mean",
                message: format!("must be finite and > 0, got {}", self.cycle_time_mean),
            });
        }
        if !self.shift_minutes.is_finite() || self.shift_minutes <= 0.0 {
            return Err(SimError::InvalidConfig {
                field: "shift_minutes",
                message: format!("must be finite and > 0, got {}", self.shift_minutes),
            });
        }
        if !self.rain_sensitivity.is_finite() || !(0.0..=1.0).contains(&self.rain_sensitivity) {
            return Err(SimError::InvalidConfig {
                field: "rain_sensitivity",
                message: format!("must be in [0, 1], got {}", self.rain_sensitivity),
            });
        }
        if !self.breakdown_prob.is_finite() || !(0.0..=1.0).contains(&self.breakdown_prob) {
            return Err(SimError::InvalidConfig {
                field: "breakdown_prob",
                message: format!("must be in [0, 1], got {}", self.breakdown_prob),
            });
        }
        if self.crew_ids.is_empty() {
            return Err(SimError::InvalidConfig {
                field: "crew_ids",
                message: "at least one crew label required".into(),
            });
        }
        Ok(())
    }

    fn anchor_date(&self) -> NaiveDate {
        NaiveDate::from_yo_opt(ANCHOR_YEAR, self.start_day_of_year.min(365))
            .expect("valid day of year")
    }
}

/// Seasonal mean rain per shift (mm) for a given day of the year: a sharpened
/// sinusoid peaking in the wet season and flattening out over the dry months.
fn rain_envelope(day_of_year: u32, config: &SimConfig) -> f64 {
    let phase = 2.0 * std::f64::consts::PI * (day_of_year as f64 - WET_SEASON_PEAK_DAY)
        / DAYS_PER_YEAR;
    let shape = ((1.0 + phase.cos()) / 2.0).powi(2);
    config.rain_dry_season_level
        + (config.rain_wet_season_peak - config.rain_dry_season_level) * shape
}

/// Draw one shift's rainfall (mm). Zero with a fixed dry-shift probability,
/// otherwise exponential with the seasonal envelope as the shift mean;
/// occasional draws are scaled up to model extreme events. The expected value
/// over draws equals the envelope.
pub fn seasonal_rain(day_of_year: u32, config: &SimConfig, rng: &mut impl Rng) -> f64 {
    let envelope = rain_envelope(day_of_year, config);
    if envelope <= 0.0 {
        return 0.0;
    }
    let u: f64 = rng.gen();
    if u < DRY_SHIFT_PROB {
        return 0.0;
    }
    let storm_mean = 1.0 - STORM_PROB + STORM_PROB * STORM_MULTIPLIER;
    let wet_mean = envelope / ((1.0 - DRY_SHIFT_PROB) * storm_mean);
    let base = Exp::new(1.0 / wet_mean).expect("positive rate").sample(rng);
    let storm: f64 = rng.gen();
    if storm < STORM_PROB {
        base * STORM_MULTIPLIER
    } else {
        base
    }
}

/// Jensen correction `E[mean / max(draw, floor)]` for a normal cycle-time
/// draw, so that the expected cycle budget matches `shift_minutes / mean`
/// exactly. Evaluated by Simpson quadrature; exact (1.0) when std is zero.
fn harmonic_rate_correction(mean: f64, std: f64) -> f64 {
    if std <= 0.0 {
        return 1.0;
    }
    let floor = mean * CYCLE_TIME_FLOOR_FRAC;
    let n = 4000; // even interval count over z in [-8, 8]
    let lo = -8.0_f64;
    let hi = 8.0_f64;
    let h = (hi - lo) / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..=n {
        let z = lo + h * k as f64;
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let pdf = (-0.5 * z * z).exp();
        let ct = (mean + std * z).max(floor);
        num += w * pdf * (mean / ct);
        den += w * pdf;
    }
    num / den
}

fn rain_factor(rain: f64, config: &SimConfig) -> f64 {
    if config.rain_saturation <= 0.0 || config.rain_sensitivity <= 0.0 {
        return 1.0;
    }
    1.0 - config.rain_sensitivity * rain.min(config.rain_saturation) / config.rain_saturation
}

/// Cycle count for one shift given the already-drawn stochastic parts. Kept
/// separate so the rain-monotonicity invariant can be checked with the random
/// draws held fixed.
fn cycle_count_from_parts(
    trucks: u32,
    cycle_time: f64,
    rain: f64,
    cycle_noise: f64,
    is_night: bool,
    harmonic_correction: f64,
    config: &SimConfig,
) -> u32 {
    let night = if is_night { config.night_cycle_multiplier } else { 1.0 };
    let budget = config.cycle_rate_calibration
        * trucks as f64
        * (config.shift_minutes / cycle_time)
        / harmonic_correction
        * rain_factor(rain, config)
        * night;
    let noisy = budget * (1.0 + cycle_noise);
    noisy.max(0.0).round().min(u32::MAX as f64) as u32
}

fn payload_from_parts(cycle_count: u32, payload_noise: f64, config: &SimConfig) -> f64 {
    cycle_count as f64 * config.tons_per_cycle * (1.0 + payload_noise).max(0.0)
}

fn fleet_draw(
    mean: f64,
    std: f64,
    breakdown_prob: f64,
    rng: &mut ChaCha8Rng,
) -> u32 {
    let base = Normal::new(mean, std).expect("valid normal").sample(rng);
    let avail = base.max(0.0).round().min(u32::MAX as f64) as u32;
    let breakdowns = Binomial::new(avail as u64, breakdown_prob)
        .expect("valid binomial")
        .sample(rng) as u32;
    avail - breakdowns
}

/// Generate `n_shifts` chronological shift records: day/night alternation,
/// round-robin crews, seasonal rain, and the structural cycle/payload model.
/// Bit-identical output for identical configs.
pub fn simulate_shifts(config: &SimConfig) -> Result<Vec<ShiftRecord>, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let harmonic = harmonic_rate_correction(config.cycle_time_mean, config.cycle_time_std);
    let ct_floor = config.cycle_time_mean * CYCLE_TIME_FLOOR_FRAC;
    let anchor = config.anchor_date();

    let mut records = Vec::with_capacity(config.n_shifts);
    for i in 0..config.n_shifts {
        let date = anchor + Duration::days((i / 2) as i64);
        let kind = if i % 2 == 0 { ShiftKind::Day } else { ShiftKind::Night };
        let crew = config.crew_ids[i % config.crew_ids.len()].clone();

        let trucks = fleet_draw(config.trucks_mean, config.trucks_std, config.breakdown_prob, &mut rng);
        let shovels = fleet_draw(config.shovels_mean, config.shovels_std, config.breakdown_prob, &mut rng);
        let cycle_time = Normal::new(config.cycle_time_mean, config.cycle_time_std)
            .expect("valid normal")
            .sample(&mut rng)
            .max(ct_floor);
        let rain = seasonal_rain(date.ordinal(), config, &mut rng);
        let cycle_noise = Normal::new(0.0, config.cycle_noise_scale)
            .expect("valid normal")
            .sample(&mut rng);
        let payload_noise = Normal::new(0.0, config.payload_noise_scale)
            .expect("valid normal")
            .sample(&mut rng);

        let cycle_count = cycle_count_from_parts(
            trucks,
            cycle_time,
            rain,
            cycle_noise,
            kind == ShiftKind::Night,
            harmonic,
            config,
        );
        let payload = payload_from_parts(cycle_count, payload_noise, config);

        records.push(ShiftRecord {
            shift_index: i as u64,
            date,
            shift_kind: kind,
            crew,
            working_trucks: trucks,
            working_shovels: shovels,
            cycle_count,
            payload,
            cycle_time,
            precipitation: rain,
        });
    }
    Ok(records)
}
