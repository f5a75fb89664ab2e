//! Synthetic consumer populations. The study's weather, occupancy and load
//! data are not redistributable, so trajectories come from parameterized
//! generators matched to the published model coefficients and moments.

use crate::mpc::{solve_mpc, MpcOptions, MpcSolution};
use crate::thermal::{
    comfort_bounds, ConsumerType, DomainError, PriceSignal, ThermalParams, TimeGrid,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("could not sample a feasible consumer after {0} retries (comfort band too tight for the configured climate)")]
    RetryLimit(usize),
    #[error("invalid scenario config: {0}")]
    Invalid(String),
}

/// One row of the thermal-coefficient table plus its average occupancy load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub thermal: ThermalParams,
    pub q_avg: f64,
}

/// Diurnal sinusoid for outside temperature.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeatherModel {
    pub mean: f64,
    pub amplitude: f64,
    /// Clock minute of the daily maximum.
    pub peak_clock_min: u32,
    pub noise_sd: f64,
}

impl Default for WeatherModel {
    fn default() -> Self {
        // Manila-like diurnal profile
        WeatherModel {
            mean: 28.0,
            amplitude: 4.0,
            peak_clock_min: 14 * 60,
            noise_sd: 0.5,
        }
    }
}

/// Two-level home/away occupancy schedule with linear transitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccupancyModel {
    /// Relative level while occupants are home (evening and night).
    pub home_level: f64,
    /// Relative level while away (midday).
    pub away_level: f64,
    pub away_start_min: u32,
    pub away_end_min: u32,
    pub ramp_minutes: u32,
    pub noise_sd: f64,
}

impl Default for OccupancyModel {
    fn default() -> Self {
        // mild away-dip: the published q magnitudes carry most of the thermal
        // input, so a deep midday dip would move the cooling peak into the
        // occupied evening instead of the hot afternoon
        OccupancyModel {
            home_level: 1.0,
            away_level: 0.9,
            away_start_min: 8 * 60,
            away_end_min: 18 * 60,
            ramp_minutes: 60,
            noise_sd: 0.1,
        }
    }
}

/// Constant base plus morning and evening bumps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaseLoadModel {
    pub base: f64,
    pub morning_amp: f64,
    pub morning_peak_min: u32,
    pub evening_amp: f64,
    pub evening_peak_min: u32,
    pub bump_width_min: f64,
    pub noise_sd: f64,
}

impl Default for BaseLoadModel {
    fn default() -> Self {
        BaseLoadModel {
            base: 0.3,
            morning_amp: 0.4,
            morning_peak_min: 7 * 60 + 30,
            evening_amp: 0.6,
            evening_peak_min: 19 * 60 + 30,
            bump_width_min: 90.0,
            noise_sd: 0.05,
        }
    }
}

/// Everything needed to sample a consumer population.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub room_table: Vec<RoomSpec>,
    pub p_flexible: f64,
    pub t_d: f64,
    /// Comfort-cost tradeoff weight range, sampled uniformly. Not stated in
    /// the study; calibrated so consumers respond visibly to price changes.
    pub gamma_range: (f64, f64),
    pub u_max: f64,
    pub p: f64,
    pub weather: WeatherModel,
    pub occupancy: OccupancyModel,
    pub base_load: BaseLoadModel,
    pub retry_limit: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            room_table: vec![
                RoomSpec {
                    thermal: ThermalParams {
                        k_r: 0.63,
                        k_c: 2.64,
                        k_w: 0.10,
                        cooling_sign: -1.0,
                    },
                    q_avg: 6.78,
                },
                RoomSpec {
                    thermal: ThermalParams {
                        k_r: 0.43,
                        k_c: 1.95,
                        k_w: 0.18,
                        cooling_sign: -1.0,
                    },
                    q_avg: 9.44,
                },
            ],
            p_flexible: 0.2,
            t_d: 24.0,
            // large enough that the piecewise-linear surrogate controller is
            // price-responsive: below gamma*c*(1-k_r)/k_c = kappa the
            // linearized tracking slope dominates and demand never moves
            gamma_range: (1.2, 2.2),
            u_max: 3.0,
            p: 1.0,
            weather: WeatherModel::default(),
            occupancy: OccupancyModel::default(),
            base_load: BaseLoadModel::default(),
            retry_limit: 32,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(0.0..=1.0).contains(&self.p_flexible) {
            return Err(ScenarioError::Invalid(format!(
                "p_flexible {} outside [0,1]",
                self.p_flexible
            )));
        }
        if self.room_table.is_empty() {
            return Err(ScenarioError::Invalid("room_table is empty".into()));
        }
        for room in &self.room_table {
            room.thermal.validate()?;
        }
        for (name, sd) in [
            ("weather", self.weather.noise_sd),
            ("occupancy", self.occupancy.noise_sd),
            ("base_load", self.base_load.noise_sd),
        ] {
            if sd < 0.0 {
                return Err(ScenarioError::Invalid(format!("{name} noise sd negative")));
            }
        }
        if self.gamma_range.0 < 0.0 || self.gamma_range.1 < self.gamma_range.0 {
            return Err(ScenarioError::Invalid("bad gamma_range".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sd).unwrap().sample(rng)
}

fn weather_trajectory(model: &WeatherModel, grid: &TimeGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..grid.n_steps)
        .map(|n| {
            let t_min = grid.clock_of_step(n) as f64;
            let phase = 2.0 * std::f64::consts::PI * (t_min - model.peak_clock_min as f64 + 360.0)
                / 1440.0;
            model.mean + model.amplitude * phase.sin() + gaussian(rng, model.noise_sd)
        })
        .collect()
}

fn occupancy_shape(model: &OccupancyModel, clock_min: f64) -> f64 {
    let ramp = model.ramp_minutes.max(1) as f64;
    let (a0, a1) = (model.away_start_min as f64, model.away_end_min as f64);
    if clock_min < a0 - ramp || clock_min >= a1 + ramp {
        model.home_level
    } else if clock_min >= a0 && clock_min < a1 {
        model.away_level
    } else if clock_min < a0 {
        // leaving home
        let frac = (clock_min - (a0 - ramp)) / ramp;
        model.home_level + frac * (model.away_level - model.home_level)
    } else {
        // coming back
        let frac = (clock_min - a1) / ramp;
        model.away_level + frac * (model.home_level - model.away_level)
    }
}

fn occupancy_trajectory(
    model: &OccupancyModel,
    grid: &TimeGrid,
    q_avg: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let shape: Vec<f64> = (0..grid.n_steps)
        .map(|n| occupancy_shape(model, grid.clock_of_step(n) as f64))
        .collect();
    let mean = shape.iter().sum::<f64>() / shape.len() as f64;
    let scale = q_avg / mean;
    shape
        .iter()
        .map(|s| (s * scale + gaussian(rng, model.noise_sd)).max(0.0))
        .collect()
}

fn base_load_trajectory(model: &BaseLoadModel, grid: &TimeGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bump = |t: f64, peak: f64, amp: f64| {
        let d = (t - peak) / model.bump_width_min;
        amp * (-0.5 * d * d).exp()
    };
    (0..grid.n_steps)
        .map(|n| {
            let t = grid.clock_of_step(n) as f64;
            let v = model.base
                + bump(t, model.morning_peak_min as f64, model.morning_amp)
                + bump(t, model.evening_peak_min as f64, model.evening_amp)
                + gaussian(rng, model.noise_sd);
            v.max(0.0)
        })
        .collect()
}

/// Samples one consumer type; resamples until the comfort band is dynamically
/// feasible (the MPC feasible set does not depend on prices).
pub fn sample_type(
    config: &ScenarioConfig,
    grid: &TimeGrid,
    rng: &mut ChaCha8Rng,
) -> Result<ConsumerType, ScenarioError> {
    config.validate()?;
    grid.validate()?;
    for _ in 0..config.retry_limit.max(1) {
        let room = &config.room_table[rng.random_range(0..config.room_table.len())];
        let flexible = rng.random_bool(config.p_flexible);
        let gamma = if config.gamma_range.1 > config.gamma_range.0 {
            rng.random_range(config.gamma_range.0..config.gamma_range.1)
        } else {
            config.gamma_range.0
        };
        let (t_lo, t_hi) = comfort_bounds(config.t_d, flexible);
        let theta = ConsumerType {
            thermal: room.thermal,
            w: weather_trajectory(&config.weather, grid, rng),
            q: occupancy_trajectory(&config.occupancy, grid, room.q_avg, rng),
            b: base_load_trajectory(&config.base_load, grid, rng),
            gamma,
            t_d: config.t_d,
            t_lo,
            t_hi,
            u_max: config.u_max,
            flexible,
        };
        theta.validate()?;
        if crate::mpc::check_feasibility(&theta, config.t_d).is_ok() {
            return Ok(theta);
        }
    }
    Err(ScenarioError::RetryLimit(config.retry_limit))
}

/// Samples a whole population with per-sample derived seeds, so any prefix of
/// the population does not depend on the total count.
pub fn sample_population(
    config: &ScenarioConfig,
    grid: &TimeGrid,
    count: usize,
) -> Result<Vec<ConsumerType>, ScenarioError> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let seed = config
            .seed
            .wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.push(sample_type(config, grid, &mut rng)?);
    }
    Ok(out)
}

/// Feasibility and flat-rate behavior of one consumer.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasibility: Option<String>,
    /// Steps where the flat-rate optimal input sits at a bound.
    pub binding_input_steps: usize,
    /// Steps where the flat-rate temperature touches the comfort band.
    pub binding_temperature_steps: usize,
    /// Flat-rate mean input `m(theta)`.
    pub mean_input: f64,
    pub max_input: f64,
    pub flat_cost: f64,
}

/// Solves the flat-rate MPC and summarizes it; infeasibility is carried in
/// the report rather than raised.
pub fn check_scenario(theta: &ConsumerType, flat_price: f64) -> ScenarioReport {
    let n = theta.n_steps();
    let price = PriceSignal::flat(flat_price, n);
    match solve_mpc(theta, &price, &MpcOptions::default()) {
        Ok(sol) => summarize(theta, &sol),
        Err(e) => ScenarioReport {
            feasible: false,
            infeasibility: Some(e.to_string()),
            binding_input_steps: 0,
            binding_temperature_steps: 0,
            mean_input: 0.0,
            max_input: 0.0,
            flat_cost: f64::NAN,
        },
    }
}

fn summarize(theta: &ConsumerType, sol: &MpcSolution) -> ScenarioReport {
    let tol = 1e-7;
    let binding_input_steps = sol
        .u_star
        .iter()
        .filter(|&&u| u <= tol || u >= theta.u_max - tol)
        .count();
    let binding_temperature_steps = sol
        .t
        .iter()
        .filter(|&&t| t <= theta.t_lo + tol || t >= theta.t_hi - tol)
        .count();
    let n = theta.n_steps() as f64;
    ScenarioReport {
        feasible: true,
        infeasibility: None,
        binding_input_steps,
        binding_temperature_steps,
        mean_input: sol.u_star.iter().sum::<f64>() / n,
        max_input: sol.u_star.iter().fold(0.0f64, |a, &b| a.max(b)),
        flat_cost: sol.j,
    }
}

/// Aggregates a consumer onto a grid `factor` times coarser. Holding the
/// input constant over a block gives the exact block dynamics
/// `T' = k_r^f T + g*(k_c u + k_w w + q)` with `g = 1 + k_r + ... + k_r^(f-1)`,
/// so the coarse model is a faithful aggregate of the fine one up to
/// within-block variation of the disturbances, which are averaged.
pub fn coarsen_consumer(theta: &ConsumerType, factor: usize) -> Result<ConsumerType, DomainError> {
    let n = theta.n_steps();
    if factor == 0 || n % factor != 0 || n / factor < 2 {
        return Err(DomainError::Invalid {
            what: "coarsening factor",
            detail: format!("{factor} does not divide horizon {n} into at least 2 steps"),
        });
    }
    if factor == 1 {
        return Ok(theta.clone());
    }
    let p = &theta.thermal;
    let g: f64 = (0..factor).map(|i| p.k_r.powi(i as i32)).sum();
    let block_mean = |v: &[f64]| -> Vec<f64> {
        v.chunks(factor)
            .map(|c| c.iter().sum::<f64>() / factor as f64)
            .collect()
    };
    let coarse = ConsumerType {
        thermal: ThermalParams {
            k_r: p.k_r.powi(factor as i32),
            k_c: p.k_c * g,
            k_w: (p.k_w * g).min(1.0),
            cooling_sign: p.cooling_sign,
        },
        w: block_mean(&theta.w),
        q: block_mean(&theta.q).iter().map(|q| q * g).collect(),
        b: block_mean(&theta.b),
        gamma: theta.gamma,
        t_d: theta.t_d,
        t_lo: theta.t_lo,
        t_hi: theta.t_hi,
        u_max: theta.u_max,
        flexible: theta.flexible,
    };
    coarse.validate()?;
    Ok(coarse)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quarter_grid() -> TimeGrid {
        TimeGrid::daily(15).unwrap()
    }

    #[test]
    fn deterministic_for_equal_seeds() {
        let config = ScenarioConfig::default();
        let grid = quarter_grid();
        let mut rng1 = ChaCha8Rng::seed_from_u64(7);
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let a = sample_type(&config, &grid, &mut rng1).unwrap();
        let b = sample_type(&config, &grid, &mut rng2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_bernoulli_yields_inflexible_only() {
        let config = ScenarioConfig {
            p_flexible: 0.0,
            ..ScenarioConfig::default()
        };
        let grid = quarter_grid();
        let pop = sample_population(&config, &grid, 20).unwrap();
        assert!(pop.iter().all(|t| !t.flexible));
        assert!(pop
            .iter()
            .all(|t| (t.t_lo, t.t_hi) == (config.t_d - 2.0, config.t_d + 2.0)));
    }

    #[test]
    fn occupancy_mean_matches_room_average() {
        let config = ScenarioConfig::default();
        let grid = quarter_grid();
        let pop = sample_population(&config, &grid, 40).unwrap();
        for theta in &pop {
            let mean_q = theta.q.iter().sum::<f64>() / theta.q.len() as f64;
            let q_avg = config
                .room_table
                .iter()
                .find(|r| (r.thermal.k_r - theta.thermal.k_r).abs() < 1e-12)
                .unwrap()
                .q_avg;
            assert!(
                (mean_q - q_avg).abs() <= 0.1 * q_avg,
                "mean q {mean_q} vs table {q_avg}"
            );
        }
    }

    #[test]
    fn flexibility_fraction_close_to_configured() {
        let config = ScenarioConfig::default();
        // coarse grid keeps this cheap; only the statistics matter here
        let grid = TimeGrid::daily(60).unwrap();
        let pop = sample_population(&config, &grid, 10_000).unwrap();
        let frac = pop.iter().filter(|t| t.flexible).count() as f64 / pop.len() as f64;
        assert!(
            (frac - config.p_flexible).abs() <= 0.02,
            "flexible fraction {frac}"
        );
    }

    #[test]
    fn weather_peaks_near_configured_time_without_noise() {
        let config = ScenarioConfig {
            weather: WeatherModel {
                noise_sd: 0.0,
                ..WeatherModel::default()
            },
            ..ScenarioConfig::default()
        };
        let grid = quarter_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = weather_trajectory(&config.weather, &grid, &mut rng);
        let argmax = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let peak_step = (config.weather.peak_clock_min / grid.step_minutes) as i64;
        assert!(
            (argmax as i64 - peak_step).abs() <= 2,
            "weather peak at step {argmax}, expected near {peak_step}"
        );
    }

    #[test]
    fn sampled_types_are_feasible_and_valid() {
        let config = ScenarioConfig::default();
        let grid = quarter_grid();
        let pop = sample_population(&config, &grid, 30).unwrap();
        for theta in &pop {
            theta.validate().unwrap();
            crate::mpc::check_feasibility(theta, theta.t_d).unwrap();
            let report = check_scenario(theta, 10.0);
            assert!(report.feasible);
            assert!(report.mean_input >= 0.0);
        }
    }

    #[test]
    fn check_scenario_flags_impossible_band() {
        let mut theta = sample_type(
            &ScenarioConfig::default(),
            &quarter_grid(),
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        theta.w = vec![60.0; theta.n_steps()];
        theta.u_max = 0.05;
        let report = check_scenario(&theta, 10.0);
        assert!(!report.feasible);
        assert!(report.infeasibility.is_some());
    }

    #[test]
    fn check_scenario_mean_input_is_flat_rate_mean() {
        let config = ScenarioConfig::default();
        let grid = TimeGrid::daily(60).unwrap();
        let theta = sample_population(&config, &grid, 1).unwrap().remove(0);
        let report = check_scenario(&theta, 10.0);
        let sol = solve_mpc(
            &theta,
            &PriceSignal::flat(10.0, theta.n_steps()),
            &MpcOptions::default(),
        )
        .unwrap();
        let mean = sol.u_star.iter().sum::<f64>() / theta.n_steps() as f64;
        assert!((report.mean_input - mean).abs() < 1e-12);
    }

    #[test]
    fn coarsening_matches_block_dynamics() {
        let config = ScenarioConfig::default();
        let grid = quarter_grid();
        let theta = sample_population(&config, &grid, 1).unwrap().remove(0);
        let coarse = coarsen_consumer(&theta, 4).unwrap();
        assert_eq!(coarse.n_steps(), 24);
        // constant-input rollout agrees with the fine model at block edges
        // when the disturbances are frozen at their block means
        let mut fine_frozen = theta.clone();
        for blk in 0..24 {
            let wm: f64 = theta.w[blk * 4..(blk + 1) * 4].iter().sum::<f64>() / 4.0;
            let qm: f64 = theta.q[blk * 4..(blk + 1) * 4].iter().sum::<f64>() / 4.0;
            for k in 0..4 {
                fine_frozen.w[blk * 4 + k] = wm;
                fine_frozen.q[blk * 4 + k] = qm;
            }
        }
        let u_level = 0.4;
        let fine_t =
            crate::thermal::simulate_trajectory(&fine_frozen, &vec![u_level; 96], 24.0).unwrap();
        let coarse_t =
            crate::thermal::simulate_trajectory(&coarse, &vec![u_level; 24], 24.0).unwrap();
        for blk in 0..24 {
            assert!(
                (fine_t[blk * 4] - coarse_t[blk]).abs() < 1e-9,
                "block {blk}: fine {} vs coarse {}",
                fine_t[blk * 4],
                coarse_t[blk]
            );
        }
    }
}
