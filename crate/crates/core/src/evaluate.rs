//! Exact-oracle evaluation of tariffs against a population, CSV export, and
//! a brute-force design oracle for acceptance testing. Everything here uses
//! the quadratic MPC, never the surrogates.

use crate::mpc::{evaluate_cost, solve_mpc, MpcError, MpcOptions};
use crate::reformulate::{DesignSpec, ObjectiveMode};
use crate::thermal::{ConsumerType, GlobalConstants, PriceKind, PriceSignal, TimeGrid};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty population")]
    EmptyPopulation,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("oracle failure on scenario {index}: {source}")]
    Oracle { index: usize, source: MpcError },
    #[error("failed writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Shared evaluation inputs: price box, peak window (0-based inclusive on the
/// evaluation grid), the reference flat price and the grid itself.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub constants: GlobalConstants,
    pub window: (usize, usize),
    pub flat_price: f64,
    pub grid: TimeGrid,
}

/// Aggregates over one comfort class.
#[derive(Debug, Clone, Serialize)]
pub struct ClassMetrics {
    pub count: usize,
    /// Mean over the class of the in-window input sum.
    pub peak_load: f64,
    /// Mean over the class of the per-consumer load variance `var_n(b + u)`.
    pub load_variance: f64,
    /// Mean over the class of `sum(f u*(f) - c u*(c))`.
    pub revenue_loss: f64,
    /// Exact participation margin `J(f) - J(c)` per scenario (>= 0 means the
    /// consumer is no worse off under the designed tariff).
    pub participation_margins: Vec<f64>,
    pub mean_u: Vec<f64>,
    pub mean_total_load: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub tariff: String,
    pub price: PriceSignal,
    pub window: (usize, usize),
    pub inflexible: ClassMetrics,
    pub flexible: ClassMetrics,
    /// Population-wide mean of `b + p*u` per step.
    pub mean_total_load: Vec<f64>,
    /// Indices of scenarios skipped as infeasible under this tariff.
    pub infeasible_scenarios: Vec<usize>,
}

struct ScenarioEval {
    flexible: bool,
    peak: f64,
    variance: f64,
    revenue_loss: f64,
    margin: f64,
    u: Vec<f64>,
    total_load: Vec<f64>,
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Solves every scenario exactly under `price` (and under the flat reference)
/// and aggregates by comfort class.
pub fn evaluate_rates(
    name: &str,
    price: &PriceSignal,
    population: &[ConsumerType],
    ctx: &EvalContext,
) -> Result<EvaluationReport, EvalError> {
    if population.is_empty() {
        return Err(EvalError::EmptyPopulation);
    }
    let n = ctx.grid.n_steps;
    if price.n_steps() != n {
        return Err(EvalError::Parameter(format!(
            "price has {} steps, grid has {n}",
            price.n_steps()
        )));
    }
    let (t1, t2) = ctx.window;
    if t1 > t2 || t2 >= n {
        return Err(EvalError::Parameter(format!(
            "window ({t1},{t2}) out of range"
        )));
    }
    let flat = PriceSignal::flat(ctx.flat_price, n);
    let opts = MpcOptions::default();
    let results: Vec<(usize, Result<ScenarioEval, MpcError>)> = population
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let run = || -> Result<ScenarioEval, MpcError> {
                let under_c = solve_mpc(theta, price, &opts)?;
                let under_f = solve_mpc(theta, &flat, &opts)?;
                let peak = under_c.u_star[t1..=t2].iter().sum::<f64>();
                let load: Vec<f64> = theta
                    .b
                    .iter()
                    .zip(&under_c.u_star)
                    .map(|(b, u)| b + u)
                    .collect();
                let revenue_loss = under_f
                    .u_star
                    .iter()
                    .map(|u| ctx.flat_price * u)
                    .sum::<f64>()
                    - price
                        .c
                        .iter()
                        .zip(&under_c.u_star)
                        .map(|(c, u)| c * u)
                        .sum::<f64>();
                let margin = under_f.j - under_c.j;
                let total_load: Vec<f64> = theta
                    .b
                    .iter()
                    .zip(&under_c.u_star)
                    .map(|(b, u)| b + ctx.constants.p * u)
                    .collect();
                Ok(ScenarioEval {
                    flexible: theta.flexible,
                    peak,
                    variance: variance(&load),
                    revenue_loss,
                    margin,
                    u: under_c.u_star.clone(),
                    total_load,
                })
            };
            (i, run())
        })
        .collect();

    let mut infeasible = Vec::new();
    let mut per_class: [Vec<ScenarioEval>; 2] = [Vec::new(), Vec::new()];
    for (i, res) in results {
        match res {
            Ok(ev) => per_class[usize::from(ev.flexible)].push(ev),
            Err(MpcError::Infeasible { .. }) => infeasible.push(i),
            Err(source) => return Err(EvalError::Oracle { index: i, source }),
        }
    }

    let aggregate = |evals: &[ScenarioEval]| -> ClassMetrics {
        let count = evals.len();
        if count == 0 {
            return ClassMetrics {
                count: 0,
                peak_load: 0.0,
                load_variance: 0.0,
                revenue_loss: 0.0,
                participation_margins: Vec::new(),
                mean_u: vec![0.0; n],
                mean_total_load: vec![0.0; n],
            };
        }
        let cf = count as f64;
        let mut mean_u = vec![0.0; n];
        let mut mean_total = vec![0.0; n];
        for ev in evals {
            for k in 0..n {
                mean_u[k] += ev.u[k] / cf;
                mean_total[k] += ev.total_load[k] / cf;
            }
        }
        ClassMetrics {
            count,
            peak_load: evals.iter().map(|e| e.peak).sum::<f64>() / cf,
            load_variance: evals.iter().map(|e| e.variance).sum::<f64>() / cf,
            revenue_loss: evals.iter().map(|e| e.revenue_loss).sum::<f64>() / cf,
            participation_margins: evals.iter().map(|e| e.margin).collect(),
            mean_u,
            mean_total_load: mean_total,
        }
    };

    let inflexible = aggregate(&per_class[0]);
    let flexible = aggregate(&per_class[1]);
    let total_count = (inflexible.count + flexible.count) as f64;
    let mean_total_load: Vec<f64> = (0..n)
        .map(|k| {
            (inflexible.mean_total_load[k] * inflexible.count as f64
                + flexible.mean_total_load[k] * flexible.count as f64)
                / total_count.max(1.0)
        })
        .collect();
    Ok(EvaluationReport {
        tariff: name.to_string(),
        price: price.clone(),
        window: ctx.window,
        inflexible,
        flexible,
        mean_total_load,
        infeasible_scenarios: infeasible,
    })
}

/// Files written by [`export_report`].
#[derive(Debug, Clone, Serialize)]
pub struct ExportManifest {
    pub files: Vec<PathBuf>,
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn clock_hhmm(grid: &TimeGrid, step: usize) -> String {
    let m = grid.clock_of_step(step);
    format!("{:02}:{:02}", m / 60, m % 60)
}

/// Writes the metrics table (one row per class and tariff) plus one mean-load
/// trajectory CSV per tariff. Output is deterministic byte-for-byte.
pub fn export_report(
    reports: &[EvaluationReport],
    grid: &TimeGrid,
    out_dir: &Path,
) -> Result<ExportManifest, EvalError> {
    let io_err = |path: &Path| {
        let p = path.to_path_buf();
        move |source: std::io::Error| EvalError::Io {
            path: p.clone(),
            source,
        }
    };
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut files = Vec::new();

    let metrics_path = out_dir.join("metrics.csv");
    {
        let mut out = String::from("type_class,tariff,peak_load,load_variance,revenue_loss\n");
        for report in reports {
            for (class, m) in [("inflexible", &report.inflexible), ("flexible", &report.flexible)]
            {
                out.push_str(&format!(
                    "{class},{},{},{},{}\n",
                    report.tariff,
                    fmt6(m.peak_load),
                    fmt6(m.load_variance),
                    fmt6(m.revenue_loss)
                ));
            }
        }
        let mut f = std::fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?;
        f.write_all(out.as_bytes()).map_err(io_err(&metrics_path))?;
    }
    files.push(metrics_path);

    for report in reports {
        let path = out_dir.join(format!("trajectory_{}.csv", report.tariff));
        let mut out =
            String::from("step,clock_time,price,mean_u_inflexible,mean_u_flexible,mean_total_load\n");
        for k in 0..grid.n_steps {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                k,
                clock_hhmm(grid, k),
                fmt6(report.price.c[k]),
                fmt6(report.inflexible.mean_u[k]),
                fmt6(report.flexible.mean_u[k]),
                fmt6(report.mean_total_load[k]),
            ));
        }
        let mut f = std::fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(out.as_bytes()).map_err(io_err(&path))?;
        files.push(path);
    }
    Ok(ExportManifest { files })
}

/// True bilevel objective of a candidate tariff by exact oracle solves:
/// the demand-response term plus lambda times the revenue loss. `None` when
/// some scenario rejects the tariff (exact participation violated).
pub fn true_objective(
    spec: &DesignSpec,
    price: &PriceSignal,
) -> Result<Option<f64>, EvalError> {
    let opts = MpcOptions::default();
    let s_count = spec.scenarios.len() as f64;
    let (t1, t2) = spec.peak_window;
    let mut total = 0.0;
    for (i, theta) in spec.scenarios.iter().enumerate() {
        let flat = PriceSignal::flat(spec.flat_price, theta.n_steps());
        let under_f = solve_mpc(theta, &flat, &opts).map_err(|source| EvalError::Oracle {
            index: i,
            source,
        })?;
        let under_c = match solve_mpc(theta, price, &opts) {
            Ok(s) => s,
            Err(MpcError::Infeasible { .. }) => return Ok(None),
            Err(source) => return Err(EvalError::Oracle { index: i, source }),
        };
        if under_c.j > under_f.j + 1e-9 {
            return Ok(None);
        }
        let v_term = match spec.objective_mode {
            ObjectiveMode::Peak => under_c.u_star[t1..=t2].iter().sum::<f64>(),
            ObjectiveMode::Variance => {
                let load: Vec<f64> = theta
                    .b
                    .iter()
                    .zip(&under_c.u_star)
                    .map(|(b, u)| b + u)
                    .collect();
                variance(&load)
            }
        };
        let revenue_loss = under_f
            .u_star
            .iter()
            .map(|u| spec.flat_price * u)
            .sum::<f64>()
            - price
                .c
                .iter()
                .zip(&under_c.u_star)
                .map(|(c, u)| c * u)
                .sum::<f64>();
        total += v_term + spec.lambda * revenue_loss;
    }
    Ok(Some(total / s_count))
}

/// Exhaustive design oracle on a price grid. PP enumerates the two levels;
/// RP (horizons of at most 5 steps) enumerates full grid vectors under the
/// ramp and endpoint rows. Candidates violating the exact participation
/// constraint are discarded.
pub fn brute_force_design(
    spec: &DesignSpec,
    price_grid_step: f64,
    enumeration_cap: usize,
) -> Result<(PriceSignal, f64), EvalError> {
    spec.validate()
        .map_err(|e| EvalError::Parameter(e.to_string()))?;
    let (c_lo, c_hi) = (spec.constants.c_lo, spec.constants.c_hi);
    let span = c_hi - c_lo;
    let steps = span / price_grid_step;
    if (steps - steps.round()).abs() > 1e-9 {
        return Err(EvalError::Parameter(format!(
            "grid step {price_grid_step} does not divide [{c_lo}, {c_hi}]"
        )));
    }
    let levels: Vec<f64> = (0..=steps.round() as usize)
        .map(|k| c_lo + k as f64 * price_grid_step)
        .collect();
    let n = spec.grid.n_steps;

    let mut candidates: Vec<PriceSignal> = Vec::new();
    match spec.structure {
        PriceKind::Pp => {
            if levels.len() * levels.len() > enumeration_cap {
                return Err(EvalError::Parameter(format!(
                    "{} PP candidates exceed cap {enumeration_cap}",
                    levels.len() * levels.len()
                )));
            }
            for &off in &levels {
                for &on in &levels {
                    candidates.push(PriceSignal::peak(off, on, spec.peak_window, n));
                }
            }
        }
        PriceKind::Rp => {
            if n > 5 {
                return Err(EvalError::Parameter(format!(
                    "RP brute force supports N <= 5, got {n}"
                )));
            }
            let free = n - 1; // last price equals the first
            let total = levels.len().pow(free as u32);
            if total > enumeration_cap {
                return Err(EvalError::Parameter(format!(
                    "{total} RP candidates exceed cap {enumeration_cap}"
                )));
            }
            for idx in 0..total {
                let mut rem = idx;
                let mut c = Vec::with_capacity(n);
                for _ in 0..free {
                    c.push(levels[rem % levels.len()]);
                    rem /= levels.len();
                }
                c.push(c[0]);
                let signal = PriceSignal::real_time(c);
                if signal.validate(spec.constants.rho).is_ok() {
                    candidates.push(signal);
                }
            }
        }
        PriceKind::Flat => {
            for &level in &levels {
                candidates.push(PriceSignal::flat(level, n));
            }
        }
    }
    // the incumbent flat rate is always an admissible fallback
    candidates.push(PriceSignal::peak(
        spec.flat_price,
        spec.flat_price,
        spec.peak_window,
        n,
    ));

    let mut best: Option<(PriceSignal, f64)> = None;
    for cand in candidates {
        if let Some(obj) = true_objective(spec, &cand)? {
            match &best {
                Some((_, b)) if obj >= *b - 1e-12 => {}
                _ => best = Some((cand, obj)),
            }
        }
    }
    best.ok_or_else(|| EvalError::Parameter("no admissible candidate".into()))
}

/// Mean consumption in the hour before, inside, and the hour after the peak
/// window, per comfort class.
#[derive(Debug, Clone, Serialize)]
pub struct ReboundProfile {
    pub pre: (f64, f64),
    pub inside: (f64, f64),
    pub post: (f64, f64),
    /// Set when the window sits at a horizon edge and a segment is truncated.
    pub truncated: bool,
}

pub fn rebound_profile(
    report: &EvaluationReport,
    window: (usize, usize),
    grid: &TimeGrid,
) -> ReboundProfile {
    let steps_per_hour = (60 / grid.step_minutes).max(1) as usize;
    let n = grid.n_steps;
    let (t1, t2) = window;
    let pre_start = t1.saturating_sub(steps_per_hour);
    let post_end = (t2 + 1 + steps_per_hour).min(n);
    let truncated = t1 < steps_per_hour || t2 + 1 + steps_per_hour > n;
    let segment_mean = |u: &[f64], a: usize, b: usize| -> f64 {
        if a >= b {
            return 0.0;
        }
        u[a..b].iter().sum::<f64>() / (b - a) as f64
    };
    let per_class = |m: &ClassMetrics| {
        (
            segment_mean(&m.mean_u, pre_start, t1),
            segment_mean(&m.mean_u, t1, t2 + 1),
            segment_mean(&m.mean_u, t2 + 1, post_end),
        )
    };
    let (pre_i, in_i, post_i) = per_class(&report.inflexible);
    let (pre_f, in_f, post_f) = per_class(&report.flexible);
    ReboundProfile {
        pre: (pre_i, pre_f),
        inside: (in_i, in_f),
        post: (post_i, post_f),
        truncated,
    }
}

/// Oracle cross-check used by tests: the evaluation's per-scenario cost
/// equals `evaluate_cost` at the oracle input.
pub fn cost_consistency(
    theta: &ConsumerType,
    price: &PriceSignal,
) -> Result<f64, EvalError> {
    let sol = solve_mpc(theta, price, &MpcOptions::default()).map_err(|source| {
        EvalError::Oracle { index: 0, source }
    })?;
    let j = evaluate_cost(theta, price, &sol.u_star).map_err(|source| EvalError::Oracle {
        index: 0,
        source,
    })?;
    Ok((j - sol.j).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_population, ScenarioConfig};
    use crate::thermal::test_support::*;

    fn small_ctx(grid: TimeGrid) -> EvalContext {
        EvalContext {
            constants: GlobalConstants::default(),
            window: grid.steps_in_clock_window(13 * 60, 16 * 60).unwrap(),
            flat_price: 10.0,
            grid,
        }
    }

    fn small_population(count: usize) -> (Vec<ConsumerType>, EvalContext) {
        let grid = TimeGrid::daily(60).unwrap();
        let config = ScenarioConfig::default();
        let pop = sample_population(&config, &grid, count).unwrap();
        (pop, small_ctx(grid))
    }

    #[test]
    fn zero_consumption_population_reports_zero_peak() {
        // exact-tracking consumers never cool, so peak load is zero and the
        // load variance is the variance of b alone
        let grid = TimeGrid::daily(60).unwrap();
        let room = room1();
        let t_d = 24.0;
        let w = 30.0;
        let q = t_d * (1.0 - room.k_r) - room.k_w * w;
        let mut theta = consumer_with(room, 24, w, q, 0.3, t_d, false, 3.0);
        theta.b = (0..24).map(|k| 0.3 + 0.01 * k as f64).collect();
        let ctx = small_ctx(grid);
        let price = PriceSignal::flat(12.0, 24);
        let report = evaluate_rates("flat12", &price, &[theta.clone()], &ctx).unwrap();
        assert!(report.inflexible.peak_load.abs() < 1e-9);
        let vb = variance(&theta.b);
        assert!((report.inflexible.load_variance - vb).abs() < 1e-9);
    }

    #[test]
    fn peak_load_matches_hand_sum() {
        let (pop, ctx) = small_population(1);
        let price = PriceSignal::flat(10.0, 24);
        let report = evaluate_rates("flat", &price, &pop, &ctx).unwrap();
        let sol = solve_mpc(&pop[0], &price, &MpcOptions::default()).unwrap();
        let (t1, t2) = ctx.window;
        let hand: f64 = sol.u_star[t1..=t2].iter().sum();
        let m = if pop[0].flexible {
            &report.flexible
        } else {
            &report.inflexible
        };
        assert!((m.peak_load - hand).abs() < 1e-9);
        // flat-rate evaluation has zero revenue loss and zero margin
        assert!(m.revenue_loss.abs() < 1e-9);
        assert!(m.participation_margins.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn empty_population_is_an_error() {
        let grid = TimeGrid::daily(60).unwrap();
        let ctx = small_ctx(grid);
        let price = PriceSignal::flat(10.0, 24);
        assert!(matches!(
            evaluate_rates("flat", &price, &[], &ctx),
            Err(EvalError::EmptyPopulation)
        ));
    }

    #[test]
    fn export_writes_deterministic_files() {
        let (pop, ctx) = small_population(3);
        let price = PriceSignal::flat(10.0, 24);
        let report = evaluate_rates("flat", &price, &pop, &ctx).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_report(&[report.clone()], &ctx.grid, dir.path()).unwrap();
        assert_eq!(manifest.files.len(), 2);
        for f in &manifest.files {
            assert!(f.exists());
            assert!(std::fs::metadata(f).unwrap().len() > 0);
        }
        let metrics = std::fs::read_to_string(&manifest.files[0]).unwrap();
        assert_eq!(metrics.lines().count(), 1 + 2); // header + 2 classes x 1 tariff
        let traj = std::fs::read_to_string(&manifest.files[1]).unwrap();
        assert_eq!(traj.lines().count(), 1 + 24);
        // byte-identical re-export
        let first: Vec<Vec<u8>> = manifest
            .files
            .iter()
            .map(|f| std::fs::read(f).unwrap())
            .collect();
        let manifest2 = export_report(&[report], &ctx.grid, dir.path()).unwrap();
        for (f, bytes) in manifest2.files.iter().zip(first) {
            assert_eq!(std::fs::read(f).unwrap(), bytes);
        }
    }

    #[test]
    fn brute_force_grid_counts_and_dominance() {
        use crate::reformulate::test_support::micro_spec;
        let spec = micro_spec(4, 2, PriceKind::Pp);
        // 27 levels at step 0.5 over [7, 20]
        let levels = ((20.0f64 - 7.0) / 0.5).round() as usize + 1;
        assert_eq!(levels, 27);
        let (best, best_obj) = brute_force_design(&spec, 0.5, 1_000_000).unwrap();
        best.validate(spec.constants.rho).unwrap();
        // enumeration dominance: any hand-picked feasible candidate is no
        // better than the brute-force optimum
        for cand in [
            PriceSignal::peak(10.0, 10.0, spec.peak_window, 4),
            PriceSignal::peak(8.0, 14.0, spec.peak_window, 4),
            PriceSignal::peak(9.5, 20.0, spec.peak_window, 4),
        ] {
            if let Some(obj) = true_objective(&spec, &cand).unwrap() {
                assert!(best_obj <= obj + 1e-9, "{best_obj} vs {obj}");
            }
        }
    }

    #[test]
    fn brute_force_rejects_bad_grid() {
        use crate::reformulate::test_support::micro_spec;
        let spec = micro_spec(4, 1, PriceKind::Pp);
        assert!(matches!(
            brute_force_design(&spec, 0.7, 1_000_000),
            Err(EvalError::Parameter(_))
        ));
        let spec_rp = micro_spec(4, 1, PriceKind::Rp);
        assert!(matches!(
            brute_force_design(&spec_rp, 0.5, 10),
            Err(EvalError::Parameter(_))
        ));
    }

    #[test]
    fn rebound_profile_shapes() {
        let (pop, ctx) = small_population(4);
        let price = PriceSignal::flat(10.0, 24);
        let report = evaluate_rates("flat", &price, &pop, &ctx).unwrap();
        let profile = rebound_profile(&report, ctx.window, &ctx.grid);
        assert!(!profile.truncated);
        // all-zero consumption edge case
        let mut zero = report.clone();
        zero.inflexible.mean_u = vec![0.0; 24];
        zero.flexible.mean_u = vec![0.0; 24];
        let p0 = rebound_profile(&zero, ctx.window, &ctx.grid);
        assert_eq!(p0.pre, (0.0, 0.0));
        assert_eq!(p0.inside, (0.0, 0.0));
        assert_eq!(p0.post, (0.0, 0.0));
        // window at the horizon edge is flagged
        let edge = rebound_profile(&report, (0, 2), &ctx.grid);
        assert!(edge.truncated);
    }

    #[test]
    fn evaluation_cost_identity() {
        let (pop, _ctx) = small_population(3);
        for theta in &pop {
            let price = PriceSignal::flat(11.0, theta.n_steps());
            assert!(cost_consistency(theta, &price).unwrap() < 1e-9);
        }
    }
}
