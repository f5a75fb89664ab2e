//! Consistency suites behind the `verify` CLI command, plus the random-model
//! and enumeration helpers they are built from. Each suite cross-checks one
//! piece of machinery against an independent route and reports pass/fail.

use crate::milp::{
    solve_lp, solve_milp, LpOptions, LpOutcome, MilpModel, MilpParams, MilpStatus, Sense,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Outcome of one verification suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub pass: bool,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport {
            name,
            pass: true,
            cases: 0,
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        self.pass = false;
        if self.failures.len() < 16 {
            self.failures.push(msg);
        }
    }
}

/// Random bounded MILP with `nb` binaries, `nc` continuous variables and
/// `n_rows` sparse rows. All variables carry finite bounds so the model is
/// never unbounded.
pub fn random_milp(rng: &mut ChaCha8Rng, nb: usize, nc: usize, n_rows: usize) -> MilpModel {
    let mut m = MilpModel::new();
    let mut vars = Vec::new();
    for i in 0..nb {
        vars.push(m.add_binary(format!("b{i}")));
    }
    for i in 0..nc {
        let lo = rng.random_range(-2.0..0.0);
        let up = lo + rng.random_range(0.5..4.0);
        vars.push(m.add_var(format!("x{i}"), lo, up));
    }
    for _ in 0..n_rows {
        let mut terms = Vec::new();
        for &v in &vars {
            if rng.random_bool(0.7) {
                let coeff: f64 = rng.random_range(-3.0..3.0);
                if coeff.abs() > 0.05 {
                    terms.push((v, coeff));
                }
            }
        }
        if terms.is_empty() {
            continue;
        }
        let sense = match rng.random_range(0..3) {
            0 => Sense::Le,
            1 => Sense::Ge,
            _ => Sense::Eq,
        };
        // bias equality rows toward satisfiable right-hand sides
        let rhs = match sense {
            Sense::Eq => rng.random_range(-1.0..1.5),
            _ => rng.random_range(-2.0..4.0),
        };
        m.add_row(terms, sense, rhs);
    }
    let obj: Vec<_> = vars
        .iter()
        .map(|&v| (v, rng.random_range(-2.0..2.0)))
        .collect();
    m.set_objective(obj);
    m
}

/// Exhaustive oracle: solves one LP per binary pattern and returns the best
/// objective, or `None` when every pattern is infeasible.
pub fn enumerate_binaries(model: &MilpModel) -> Option<f64> {
    let binaries: Vec<usize> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| matches!(v.kind, crate::milp::VarKind::Binary))
        .map(|(j, _)| j)
        .collect();
    let mut lo: Vec<f64> = model.variables.iter().map(|v| v.lo).collect();
    let mut up: Vec<f64> = model.variables.iter().map(|v| v.up).collect();
    let mut best: Option<f64> = None;
    for pattern in 0u64..(1u64 << binaries.len()) {
        for (k, &j) in binaries.iter().enumerate() {
            let bit = ((pattern >> k) & 1) as f64;
            lo[j] = bit;
            up[j] = bit;
        }
        let outcome =
            crate::milp::solve_lp_with_bounds(model, &lo, &up, &LpOptions::default());
        if let Ok(LpOutcome::Optimal(sol)) = outcome {
            best = Some(best.map_or(sol.objective, |b: f64| b.min(sol.objective)));
        }
    }
    best
}

/// MILP engine vs exhaustive binary enumeration on seeded random models.
pub fn milp_enumeration_suite(n_cases: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("milp-vs-enumeration");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..n_cases {
        let nb = 2 + (case % 11); // up to 12 binaries
        let nc = case % 4;
        let n_rows = 3 + (case % 5);
        let model = random_milp(&mut rng, nb, nc, n_rows);
        report.cases += 1;
        let milp = match solve_milp(&model, &MilpParams::default()) {
            Ok(s) => s,
            Err(e) => {
                report.fail(format!("case {case}: solver error {e}"));
                continue;
            }
        };
        match enumerate_binaries(&model) {
            Some(value) => {
                if milp.status != MilpStatus::Optimal {
                    report.fail(format!(
                        "case {case}: enumeration feasible ({value:.6}) but status {:?}",
                        milp.status
                    ));
                    continue;
                }
                let got = milp.objective_value.unwrap();
                if (got - value).abs() > 1e-6 * (1.0 + value.abs()) {
                    report.fail(format!("case {case}: value {got:.9} vs enumeration {value:.9}"));
                }
            }
            None => {
                if milp.status != MilpStatus::Infeasible {
                    report.fail(format!(
                        "case {case}: enumeration infeasible but status {:?}",
                        milp.status
                    ));
                }
            }
        }
    }
    report
}

/// Direct numeric check of the four-row bilinear envelope on random boxes.
pub fn mccormick_point_suite(n_cases: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("mccormick-envelope");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..n_cases {
        report.cases += 1;
        let c_lo = rng.random_range(1.0..10.0);
        let c_hi = c_lo + rng.random_range(0.5..15.0);
        let u_hi = rng.random_range(0.5..5.0);
        // sample either an interior point or a facet point
        let on_facet = case % 2 == 0;
        let (c, u): (f64, f64) = if on_facet {
            match case % 4 {
                0 => (c_lo, rng.random_range(0.0..u_hi)),
                2 => (rng.random_range(c_lo..c_hi), u_hi),
                _ => unreachable!(),
            }
        } else {
            (rng.random_range(c_lo..c_hi), rng.random_range(0.0..u_hi))
        };
        let product = c * u;
        let lower = (c_lo * u).max(c_hi * u + u_hi * c - c_hi * u_hi);
        let upper = (c_hi * u).min(c_lo * u + u_hi * c - c_lo * u_hi);
        if lower > product + 1e-9 || upper < product - 1e-9 {
            report.fail(format!(
                "case {case}: product {product} outside envelope [{lower}, {upper}]"
            ));
        }
        if on_facet && (upper - lower).abs() > 1e-7 {
            report.fail(format!(
                "case {case}: envelope not tight on facet, width {}",
                upper - lower
            ));
        }
    }
    report
}

/// LP duals sanity: reduced-cost certificates on random feasible LPs.
pub fn lp_optimality_suite(n_cases: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("lp-reduced-costs");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..n_cases {
        let model = random_milp(&mut rng, 0, 4 + case % 4, 3 + case % 4);
        report.cases += 1;
        match solve_lp(&model, &LpOptions::default()) {
            Ok(LpOutcome::Optimal(sol)) => {
                // verify d_j = c_j - y^T A_j by recomputation
                let nv = model.n_vars();
                let mut d = vec![0.0; nv];
                for &(crate::milp::VarId(j), coeff) in &model.objective {
                    d[j] += coeff;
                }
                for (i, row) in model.constraints.iter().enumerate() {
                    for &(crate::milp::VarId(j), coeff) in &row.terms {
                        d[j] -= sol.row_duals[i] * coeff;
                    }
                }
                for j in 0..nv {
                    if (d[j] - sol.reduced_costs[j]).abs() > 1e-6 {
                        report.fail(format!(
                            "case {case}: reduced cost mismatch on var {j}: {} vs {}",
                            d[j], sol.reduced_costs[j]
                        ));
                        break;
                    }
                }
                if model.max_violation(&sol.x) > 1e-6 {
                    report.fail(format!("case {case}: optimal point infeasible"));
                }
            }
            Ok(_) => {} // infeasible/unbounded random instances are fine
            Err(e) => report.fail(format!("case {case}: {e}")),
        }
    }
    report
}
