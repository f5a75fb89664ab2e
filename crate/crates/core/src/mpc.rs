//! The consumer's model-predictive controller, solved exactly.
//!
//! The tracking-plus-price objective is strictly convex in the inputs (the
//! input-to-temperature map is invertible lower-triangular), so the minimizer
//! is unique. We solve the QP with a primal active-set method in input space
//! and recover the structured multipliers (costates and bound multipliers)
//! from the working set, which makes this module the ground-truth oracle for
//! every reformulation downstream.

use crate::thermal::{simulate_trajectory, ConsumerType, DomainError, PriceSignal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("instance infeasible at step {step}: {detail}")]
    Infeasible { step: usize, detail: String },
    #[error("input trajectory violates constraints: {}", violations.join("; "))]
    InfeasibleInput { violations: Vec<String> },
    #[error("active-set solver stalled after {iterations} iterations (residual {residual:.3e})")]
    Stalled { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone)]
pub struct MpcOptions {
    /// KKT residual tolerance the returned solution is checked against.
    pub tol: f64,
    /// Initial room temperature; defaults to the desired temperature.
    pub t_init: Option<f64>,
}

impl Default for MpcOptions {
    fn default() -> Self {
        MpcOptions {
            tol: 1e-6,
            t_init: None,
        }
    }
}

/// Exact solution of the consumer's MPC problem with its KKT certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpcSolution {
    pub u_star: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    #[serde(rename = "J")]
    pub j: f64,
    /// Costates of the dynamics rows; `nu[k]` pairs with `T_{k+2} = ...`.
    pub nu: Vec<f64>,
    pub mu_hi: Vec<f64>,
    pub mu_lo: Vec<f64>,
    pub xi_hi: Vec<f64>,
    pub xi_lo: Vec<f64>,
}

/// Max-norm residuals of the KKT blocks at a candidate solution.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KktResidual {
    pub stationarity_u: f64,
    pub stationarity_t: f64,
    pub primal: f64,
    /// Complementary slackness plus any multiplier negativity.
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity_u
            .max(self.stationarity_t)
            .max(self.primal)
            .max(self.complementarity)
    }
}

/// Feasibility analysis by forward interval propagation: the set of
/// temperatures reachable while respecting the band shrinks step by step;
/// an empty intersection pinpoints the first impossible step.
fn reach_intervals(theta: &ConsumerType, t_init: f64) -> Result<Vec<(f64, f64)>, MpcError> {
    let n = theta.n_steps();
    let p = &theta.thermal;
    let cooling = p.cooling_sign < 0.0;
    if t_init < theta.t_lo - 1e-12 || t_init > theta.t_hi + 1e-12 {
        return Err(MpcError::Infeasible {
            step: 0,
            detail: format!(
                "initial temperature {t_init} outside comfort band [{}, {}]",
                theta.t_lo, theta.t_hi
            ),
        });
    }
    let mut iv = Vec::with_capacity(n);
    iv.push((t_init, t_init));
    for k in 0..n - 1 {
        let a = p.k_w * theta.w[k] + theta.q[k];
        let (lo_prev, hi_prev) = iv[k];
        let swing = p.k_c * theta.u_max;
        let (reach_lo, reach_hi) = if cooling {
            (p.k_r * lo_prev + a - swing, p.k_r * hi_prev + a)
        } else {
            (p.k_r * lo_prev + a, p.k_r * hi_prev + a + swing)
        };
        let lo = reach_lo.max(theta.t_lo);
        let hi = reach_hi.min(theta.t_hi);
        if lo > hi + 1e-12 {
            let detail = if reach_hi < theta.t_lo {
                format!("temperature cannot be kept above {} at step {}", theta.t_lo, k + 1)
            } else {
                format!("temperature cannot be kept below {} at step {}", theta.t_hi, k + 1)
            };
            return Err(MpcError::Infeasible { step: k + 1, detail });
        }
        iv.push((lo, hi));
    }
    Ok(iv)
}

/// Checks whether any admissible input keeps the temperature inside the
/// comfort band over the whole horizon.
pub fn check_feasibility(theta: &ConsumerType, t_init: f64) -> Result<(), MpcError> {
    reach_intervals(theta, t_init).map(|_| ())
}

/// A feasible input trajectory, built by backward selection through the
/// reintersection intervals, aiming at the setpoint where possible.
fn feasible_input(theta: &ConsumerType, t_init: f64) -> Result<Vec<f64>, MpcError> {
    let n = theta.n_steps();
    let p = &theta.thermal;
    let cooling = p.cooling_sign < 0.0;
    let iv = reach_intervals(theta, t_init)?;
    let mut t = vec![0.0; n];
    let (lo, hi) = iv[n - 1];
    t[n - 1] = theta.t_d.clamp(lo, hi);
    for k in (0..n - 1).rev() {
        let a = p.k_w * theta.w[k] + theta.q[k];
        let swing = p.k_c * theta.u_max;
        // T_k values from which t[k+1] is reachable
        let (need_lo, need_hi) = if cooling {
            ((t[k + 1] - a) / p.k_r, (t[k + 1] + swing - a) / p.k_r)
        } else {
            ((t[k + 1] - swing - a) / p.k_r, (t[k + 1] - a) / p.k_r)
        };
        let mut lo = need_lo.max(iv[k].0);
        let mut hi = need_hi.min(iv[k].1);
        if lo > hi {
            // roundoff can pinch the mathematically nonempty intersection;
            // snap to a point of the forward interval so the excursion does
            // not get amplified by 1/k_r on the next backward step
            debug_assert!(lo - hi < 1e-6, "backward interval empty by {}", lo - hi);
            let mid = (0.5 * (lo + hi)).clamp(iv[k].0, iv[k].1);
            lo = mid;
            hi = mid;
        }
        t[k] = theta.t_d.clamp(lo, hi);
    }
    let mut u = vec![0.0; n];
    for k in 0..n - 1 {
        let a = p.k_w * theta.w[k] + theta.q[k];
        let free = p.k_r * t[k] + a;
        let raw = if cooling {
            (free - t[k + 1]) / p.k_c
        } else {
            (t[k + 1] - free) / p.k_c
        };
        u[k] = raw.clamp(0.0, theta.u_max);
    }
    Ok(u)
}

/// Dense LU with partial pivoting; solves in place. Returns false on a
/// numerically singular matrix.
fn lu_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> bool {
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot_row = col;
        let mut best = a[perm[col] * n + col].abs();
        for (r, &pr) in perm.iter().enumerate().skip(col + 1) {
            let v = a[pr * n + col].abs();
            if v > best {
                best = v;
                pivot_row = r;
            }
        }
        if best < 1e-12 {
            return false;
        }
        perm.swap(col, pivot_row);
        let prow = perm[col];
        let pivot = a[prow * n + col];
        for &row in perm.iter().skip(col + 1) {
            let factor = a[row * n + col] / pivot;
            if factor != 0.0 {
                a[row * n + col] = factor;
                for j in col + 1..n {
                    a[row * n + j] -= factor * a[prow * n + j];
                }
            }
        }
    }
    // forward substitution on permuted rows
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = b[perm[i]];
        for j in 0..i {
            v -= a[perm[i] * n + j] * y[j];
        }
        y[i] = v;
    }
    for i in (0..n).rev() {
        let mut v = y[i];
        for j in i + 1..n {
            v -= a[perm[i] * n + j] * b[j];
        }
        b[i] = v / a[perm[i] * n + i];
    }
    true
}

struct QpData {
    /// Number of free inputs (horizon minus the inert last step).
    m: usize,
    h: Vec<f64>,
    g: Vec<f64>,
    /// Constraint rows `a . x <= rhs`, in a fixed order.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Maps constraint index to its multiplier slot.
    kinds: Vec<ConstraintKind>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ConstraintKind {
    MuLo(usize),
    MuHi(usize),
    XiHi(usize),
    XiLo(usize),
}

fn build_qp(theta: &ConsumerType, c: &[f64], t_init: f64) -> QpData {
    let n = theta.n_steps();
    let m = n - 1;
    let p = &theta.thermal;
    let sc = p.cooling_sign;
    // sensitivity of T_row (1..n-1) to u_col (0..m-1): sc*k_c*k_r^(row-1-col)
    let mut sens = vec![vec![0.0; m]; n];
    let base = {
        let mut b = vec![0.0; n];
        b[0] = t_init;
        for k in 0..n - 1 {
            b[k + 1] = p.k_r * b[k] + p.k_w * theta.w[k] + theta.q[k];
        }
        b
    };
    for row in 1..n {
        for col in 0..row.min(m) {
            sens[row][col] = sc * p.k_c * p.k_r.powi((row - 1 - col) as i32);
        }
    }
    let mut h = vec![0.0; m * m];
    let mut g = vec![0.0; m];
    for row in 1..n {
        for pcol in 0..row.min(m) {
            let sp = sens[row][pcol];
            g[pcol] += 2.0 * sp * (base[row] - theta.t_d);
            for qcol in 0..row.min(m) {
                h[pcol * m + qcol] += 2.0 * sp * sens[row][qcol];
            }
        }
    }
    for (idx, slot) in g.iter_mut().enumerate() {
        *slot += theta.gamma * c[idx];
    }
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut kinds = Vec::new();
    for j in 0..m {
        let mut a = vec![0.0; m];
        a[j] = -1.0;
        rows.push(a);
        rhs.push(0.0);
        kinds.push(ConstraintKind::MuLo(j));
    }
    for j in 0..m {
        let mut a = vec![0.0; m];
        a[j] = 1.0;
        rows.push(a);
        rhs.push(theta.u_max);
        kinds.push(ConstraintKind::MuHi(j));
    }
    for row in 1..n {
        rows.push(sens[row].clone());
        rhs.push(theta.t_hi - base[row]);
        kinds.push(ConstraintKind::XiHi(row));
        rows.push(sens[row].iter().map(|v| -v).collect());
        rhs.push(base[row] - theta.t_lo);
        kinds.push(ConstraintKind::XiLo(row));
    }
    QpData {
        m,
        h,
        g,
        rows,
        rhs,
        kinds,
    }
}

/// Primal active-set method for the strictly convex QP
/// `min 0.5 x'Hx + g'x  s.t.  rows.x <= rhs`, warm-started from a feasible
/// point. Returns the minimizer and the working-set multipliers.
fn active_set_qp(qp: &QpData, x0: Vec<f64>) -> Result<(Vec<f64>, Vec<f64>), MpcError> {
    let m = qp.m;
    let n_con = qp.rows.len();
    let mut x = x0;
    let mut working: Vec<usize> = Vec::new();
    let mut multipliers = vec![0.0; n_con];
    let max_iterations = 60 * (m + 2).max(40);
    for iteration in 0..max_iterations {
        // EQP on the working set: [H A'; A 0][p; lam] = [-(Hx+g); 0]
        let k = working.len();
        let dim = m + k;
        let mut kkt = vec![0.0; dim * dim];
        for i in 0..m {
            for j in 0..m {
                kkt[i * dim + j] = qp.h[i * m + j];
            }
        }
        for (wi, &ci) in working.iter().enumerate() {
            for j in 0..m {
                kkt[(m + wi) * dim + j] = qp.rows[ci][j];
                kkt[j * dim + m + wi] = qp.rows[ci][j];
            }
        }
        let mut rhs_vec = vec![0.0; dim];
        for i in 0..m {
            let mut v = qp.g[i];
            for j in 0..m {
                v += qp.h[i * m + j] * x[j];
            }
            rhs_vec[i] = -v;
        }
        if !lu_solve(&mut kkt, dim, &mut rhs_vec) {
            // dependent working set; drop the most recent addition
            if working.pop().is_none() {
                return Err(MpcError::Stalled {
                    iterations: iteration,
                    residual: f64::NAN,
                });
            }
            continue;
        }
        let p_dir = &rhs_vec[..m];
        let lambda = &rhs_vec[m..];
        let p_norm = p_dir.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let x_scale = 1.0 + x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if p_norm <= 1e-11 * x_scale {
            // stationary on the working set; check signs
            let mut worst = (-1e-9, usize::MAX);
            for (wi, &ci) in working.iter().enumerate() {
                if lambda[wi] < worst.0 {
                    worst = (lambda[wi], wi);
                    let _ = ci;
                }
            }
            if worst.1 == usize::MAX {
                for (wi, &ci) in working.iter().enumerate() {
                    multipliers[ci] = lambda[wi].max(0.0);
                }
                return Ok((x, multipliers));
            }
            working.remove(worst.1);
            continue;
        }
        // ratio test against constraints outside the working set
        let mut alpha = 1.0f64;
        let mut blocker: Option<usize> = None;
        for ci in 0..n_con {
            if working.contains(&ci) {
                continue;
            }
            let ap: f64 = qp.rows[ci].iter().zip(p_dir).map(|(a, p)| a * p).sum();
            if ap > 1e-12 {
                let ax: f64 = qp.rows[ci].iter().zip(&x).map(|(a, xv)| a * xv).sum();
                let room = ((qp.rhs[ci] - ax) / ap).max(0.0);
                if room < alpha - 1e-12 {
                    alpha = room;
                    blocker = Some(ci);
                }
            }
        }
        for (xi, pi) in x.iter_mut().zip(p_dir) {
            *xi += alpha * pi;
        }
        if let Some(ci) = blocker {
            working.push(ci);
        }
    }
    Err(MpcError::Stalled {
        iterations: max_iterations,
        residual: f64::NAN,
    })
}

/// Solves the consumer MPC exactly; the result carries multipliers with
/// KKT residuals below `opts.tol`.
pub fn solve_mpc(
    theta: &ConsumerType,
    c: &PriceSignal,
    opts: &MpcOptions,
) -> Result<MpcSolution, MpcError> {
    theta.validate()?;
    let n = theta.n_steps();
    if c.n_steps() != n {
        return Err(DomainError::LengthMismatch {
            what: "price signal",
            expected: n,
            got: c.n_steps(),
        }
        .into());
    }
    let t_init = opts.t_init.unwrap_or(theta.t_d);
    let seed_full = feasible_input(theta, t_init)?;
    let qp = build_qp(theta, &c.c, t_init);
    let x0 = seed_full[..qp.m].to_vec();
    let (x, multipliers) = active_set_qp(&qp, x0)?;

    let mut u = x;
    u.push(0.0); // last input is inert and settles at zero
    for v in u.iter_mut() {
        *v = v.clamp(0.0, theta.u_max);
    }
    let t = simulate_trajectory(theta, &u, t_init)?;
    let j = objective(theta, &c.c, &u, &t);

    let mut mu_lo = vec![0.0; n];
    let mut mu_hi = vec![0.0; n];
    let mut xi_hi = vec![0.0; n];
    let mut xi_lo = vec![0.0; n];
    for (ci, &lam) in multipliers.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        match qp.kinds[ci] {
            ConstraintKind::MuLo(jx) => mu_lo[jx] = lam,
            ConstraintKind::MuHi(jx) => mu_hi[jx] = lam,
            ConstraintKind::XiHi(row) => xi_hi[row] = lam,
            ConstraintKind::XiLo(row) => xi_lo[row] = lam,
        }
    }
    // bookkeeping for the inert final input: stationarity gives mu_lo = gamma*c
    mu_lo[n - 1] = theta.gamma * c.c[n - 1];
    // costates from the temperature stationarity chain, backward
    let p = &theta.thermal;
    let mut nu = vec![0.0; n - 1];
    nu[n - 2] = -(2.0 * (t[n - 1] - theta.t_d) + xi_hi[n - 1] - xi_lo[n - 1]);
    for row in (1..n - 1).rev() {
        nu[row - 1] = p.k_r * nu[row] - 2.0 * (t[row] - theta.t_d) - xi_hi[row] + xi_lo[row];
    }
    let sol = MpcSolution {
        u_star: u,
        t,
        j,
        nu,
        mu_hi,
        mu_lo,
        xi_hi,
        xi_lo,
    };
    let res = kkt_residual(theta, c, &sol);
    if res.max() > opts.tol {
        return Err(MpcError::Stalled {
            iterations: 0,
            residual: res.max(),
        });
    }
    Ok(sol)
}

fn objective(theta: &ConsumerType, c: &[f64], u: &[f64], t: &[f64]) -> f64 {
    let mut j = 0.0;
    for n in 0..theta.n_steps() {
        let e = t[n] - theta.t_d;
        j += e * e + theta.gamma * c[n] * u[n];
    }
    j
}

/// Objective value of a given input trajectory, which must be feasible.
pub fn evaluate_cost(theta: &ConsumerType, c: &PriceSignal, u: &[f64]) -> Result<f64, MpcError> {
    theta.validate()?;
    let n = theta.n_steps();
    if u.len() != n || c.n_steps() != n {
        return Err(DomainError::LengthMismatch {
            what: "input or price trajectory",
            expected: n,
            got: if u.len() != n { u.len() } else { c.n_steps() },
        }
        .into());
    }
    let t = simulate_trajectory(theta, u, theta.t_d)?;
    let tol = 1e-7;
    let mut violations = Vec::new();
    for k in 0..n {
        if u[k] < -tol || u[k] > theta.u_max + tol {
            violations.push(format!("u[{k}]={} outside [0, {}]", u[k], theta.u_max));
        }
        if t[k] < theta.t_lo - tol || t[k] > theta.t_hi + tol {
            violations.push(format!(
                "T[{k}]={:.4} outside [{}, {}]",
                t[k], theta.t_lo, theta.t_hi
            ));
        }
    }
    if !violations.is_empty() {
        return Err(MpcError::InfeasibleInput { violations });
    }
    Ok(objective(theta, &c.c, u, &t))
}

/// Max-norm KKT residuals of a candidate solution; all blocks vanish exactly
/// at the optimum by convexity.
pub fn kkt_residual(theta: &ConsumerType, c: &PriceSignal, sol: &MpcSolution) -> KktResidual {
    let n = theta.n_steps();
    let p = &theta.thermal;
    let sc = p.cooling_sign;
    let (u, t) = (&sol.u_star, &sol.t);
    let mut stat_u = 0.0f64;
    for k in 0..n - 1 {
        let r = theta.gamma * c.c[k] - sc * p.k_c * sol.nu[k] + sol.mu_hi[k] - sol.mu_lo[k];
        stat_u = stat_u.max(r.abs());
    }
    stat_u = stat_u.max((theta.gamma * c.c[n - 1] + sol.mu_hi[n - 1] - sol.mu_lo[n - 1]).abs());
    let mut stat_t = 0.0f64;
    for row in 1..n {
        let downstream = if row <= n - 2 { p.k_r * sol.nu[row] } else { 0.0 };
        let r = 2.0 * (t[row] - theta.t_d) + sol.nu[row - 1] - downstream + sol.xi_hi[row]
            - sol.xi_lo[row];
        stat_t = stat_t.max(r.abs());
    }
    let mut primal = 0.0f64;
    for k in 0..n - 1 {
        let pred = p.k_r * t[k] + sc * p.k_c * u[k] + p.k_w * theta.w[k] + theta.q[k];
        primal = primal.max((t[k + 1] - pred).abs());
    }
    for k in 0..n {
        primal = primal
            .max(-u[k])
            .max(u[k] - theta.u_max)
            .max(theta.t_lo - t[k])
            .max(t[k] - theta.t_hi);
    }
    let mut comp = 0.0f64;
    for k in 0..n {
        comp = comp
            .max((sol.mu_hi[k] * (theta.u_max - u[k])).abs())
            .max((sol.mu_lo[k] * u[k]).abs())
            .max((sol.xi_hi[k] * (theta.t_hi - t[k])).abs())
            .max((sol.xi_lo[k] * (t[k] - theta.t_lo)).abs());
        // dual feasibility folded in
        comp = comp
            .max(-sol.mu_hi[k])
            .max(-sol.mu_lo[k])
            .max(-sol.xi_hi[k])
            .max(-sol.xi_lo[k]);
    }
    KktResidual {
        stationarity_u: stat_u,
        stationarity_t: stat_t,
        primal,
        complementarity: comp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::test_support::*;
    use crate::thermal::{comfort_bounds, GlobalConstants, ThermalParams};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn exact_tracking_consumer(n: usize) -> ConsumerType {
        // q chosen so the free response sits exactly at T_d
        let t_d = 24.0;
        let room = room1();
        let w = 30.0;
        let q = t_d * (1.0 - room.k_r) - room.k_w * w;
        assert!(q > 0.0);
        consumer_with(room, n, w, q, 0.1, t_d, false, 3.0)
    }

    #[test]
    fn exact_tracking_needs_no_input() {
        let theta = exact_tracking_consumer(12);
        let c = PriceSignal::flat(10.0, 12);
        let sol = solve_mpc(&theta, &c, &MpcOptions::default()).unwrap();
        assert!(sol.u_star.iter().all(|&v| v.abs() < 1e-9));
        assert!(sol.j.abs() < 1e-12);
        let res = kkt_residual(&theta, &c, &sol);
        assert!(res.max() < 1e-6, "{res:?}");
    }

    #[test]
    fn gamma_zero_reaches_pure_tracking() {
        let mut theta = consumer_with(room1(), 16, 30.0, 6.78, 0.0, 24.0, false, 3.0);
        theta.gamma = 0.0;
        let c = PriceSignal::flat(15.0, 16);
        let sol = solve_mpc(&theta, &c, &MpcOptions::default()).unwrap();
        // perfect tracking is reachable after the first step here
        for k in 1..16 {
            assert!(
                (sol.t[k] - 24.0).abs() < 1e-8,
                "T[{k}] = {} should track",
                sol.t[k]
            );
        }
        assert!(sol.j < 1e-12);
    }

    #[test]
    fn n2_matches_brute_force_grid() {
        let theta = consumer_with(room1(), 2, 30.0, 6.78, 0.1, 24.0, false, 3.0);
        let c = PriceSignal::flat(10.0, 2);
        let sol = solve_mpc(&theta, &c, &MpcOptions::default()).unwrap();
        // brute force over a 0.001 grid on (u_1, u_2)
        let mut best = f64::INFINITY;
        let mut best_u = (0.0, 0.0);
        let steps = 3000;
        for i in 0..=steps {
            let u1 = i as f64 * 0.001;
            for j2 in 0..=steps {
                let u2 = j2 as f64 * 0.001;
                if let Ok(j) = evaluate_cost(&theta, &c, &[u1, u2]) {
                    if j < best {
                        best = j;
                        best_u = (u1, u2);
                    }
                }
            }
        }
        assert!(
            (sol.j - best).abs() < 1e-3,
            "solver {} vs grid {} at {:?}",
            sol.j,
            best,
            best_u
        );
        assert!(sol.j <= best + 1e-9);
    }

    #[test]
    fn infeasible_instance_names_first_violated_step() {
        // scorching outside air and a weak unit: free response exits the band
        let room = ThermalParams::new(0.63, 2.64, 0.10).unwrap();
        let mut theta = consumer_with(room, 8, 60.0, 9.0, 0.1, 24.0, false, 3.0);
        theta.u_max = 0.1;
        let (lo, hi) = comfort_bounds(24.0, false);
        theta.t_lo = lo;
        theta.t_hi = hi;
        let err = solve_mpc(&theta, &PriceSignal::flat(10.0, 8), &MpcOptions::default());
        match err {
            Err(MpcError::Infeasible { step, .. }) => assert!(step >= 1),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn evaluate_cost_consistency_and_hand_value() {
        let theta = consumer_with(room1(), 8, 30.0, 6.78, 0.1, 24.0, false, 3.0);
        let c = PriceSignal::flat(10.0, 8);
        let sol = solve_mpc(&theta, &c, &MpcOptions::default()).unwrap();
        let j = evaluate_cost(&theta, &c, &sol.u_star).unwrap();
        assert!((j - sol.j).abs() < 1e-9);

        // single-step hand evaluation: T_1 = T_d + 1 via t_init is not
        // reachable through the public API (t_init defaults to T_d), so check
        // the objective arithmetic directly on a 2-step instance instead:
        // J = (T_1-T_d)^2 + gamma*c_1*u_1 + (T_2-T_d)^2 + gamma*c_2*u_2.
        let theta2 = exact_tracking_consumer(2);
        let c2 = PriceSignal::flat(5.0, 2);
        let mut theta2g = theta2.clone();
        theta2g.gamma = 1.0;
        let u = [0.5, 0.0];
        let t = simulate_trajectory(&theta2g, &u, 24.0).unwrap();
        let expect = (t[0] - 24.0).powi(2) + 1.0 * 5.0 * 0.5 + (t[1] - 24.0).powi(2);
        let got = evaluate_cost(&theta2g, &c2, &u).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn evaluate_cost_rejects_infeasible_input() {
        let theta = consumer_with(room1(), 4, 30.0, 6.78, 0.1, 24.0, false, 3.0);
        let c = PriceSignal::flat(10.0, 4);
        let err = evaluate_cost(&theta, &c, &[5.0, 0.0, 0.0, 0.0]);
        assert!(matches!(err, Err(MpcError::InfeasibleInput { .. })));
    }

    #[test]
    fn kkt_residual_flags_perturbed_solution() {
        let theta = consumer_with(room1(), 6, 30.0, 6.78, 0.1, 24.0, false, 3.0);
        let c = PriceSignal::flat(10.0, 6);
        let sol = solve_mpc(&theta, &c, &MpcOptions::default()).unwrap();
        assert!(kkt_residual(&theta, &c, &sol).max() <= 1e-6);
        let mut bad = sol.clone();
        bad.u_star[0] += 0.1;
        bad.t = simulate_trajectory(&theta, &bad.u_star, 24.0).unwrap();
        let res = kkt_residual(&theta, &c, &bad);
        assert!(
            res.max() > 1e-4,
            "perturbed point should violate KKT: {res:?}"
        );
    }

    fn random_feasible_instance(rng: &mut ChaCha8Rng, n: usize) -> (ConsumerType, PriceSignal) {
        let room = if rng.random_bool(0.5) { room1() } else { room2() };
        let w = rng.random_range(26.0..33.0);
        // cooling-only input: the free response must not sink below the band
        let q_min = 22.0 * (1.0 - room.k_r) - room.k_w * w + 0.3;
        let q = rng.random_range(q_min..q_min + 4.0);
        let gamma = rng.random_range(0.0..0.8);
        let flexible = rng.random_bool(0.3);
        let theta = consumer_with(room, n, w, q, gamma, 24.0, flexible, 3.0);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(7.0..20.0)).collect();
        (theta, PriceSignal::real_time(c))
    }

    #[test]
    fn oracle_beats_random_feasible_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut instances = 0;
        while instances < 200 {
            let n = rng.random_range(3..=8);
            let (theta, c) = random_feasible_instance(&mut rng, n);
            let Ok(sol) = solve_mpc(&theta, &c, &MpcOptions::default()) else {
                continue;
            };
            instances += 1;
            let mut tried = 0;
            let mut sampled = 0;
            while tried < 1000 && sampled < 50 {
                tried += 1;
                let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..theta.u_max)).collect();
                if let Ok(j) = evaluate_cost(&theta, &c, &u) {
                    sampled += 1;
                    assert!(
                        sol.j <= j + 1e-8,
                        "oracle {} beaten by random candidate {}",
                        sol.j,
                        j
                    );
                }
            }
        }
    }

    #[test]
    fn j_is_concave_and_monotone_in_prices() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..40 {
            let n = rng.random_range(3..=6);
            let (theta, _) = random_feasible_instance(&mut rng, n);
            let c1: Vec<f64> = (0..n).map(|_| rng.random_range(7.0..20.0)).collect();
            let c2: Vec<f64> = (0..n).map(|_| rng.random_range(7.0..20.0)).collect();
            let mid: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| (a + b) / 2.0).collect();
            let j = |c: &[f64]| {
                solve_mpc(
                    &theta,
                    &PriceSignal::real_time(c.to_vec()),
                    &MpcOptions::default(),
                )
                .unwrap()
                .j
            };
            let (j1, j2, jm) = (j(&c1), j(&c2), j(&mid));
            assert!(
                jm >= (j1 + j2) / 2.0 - 1e-8,
                "concavity violated: {jm} < avg of {j1}, {j2}"
            );
            // raising one coordinate never decreases J
            let mut up = c1.clone();
            let idx = rng.random_range(0..n);
            up[idx] += 1.5;
            assert!(j(&up) >= j1 - 1e-8);
        }
    }

    #[test]
    fn uniform_price_increase_never_increases_total_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..30 {
            let n = rng.random_range(3..=6);
            let (theta, c) = random_feasible_instance(&mut rng, n);
            let sol = solve_mpc(&theta, &c, &MpcOptions::default()).unwrap();
            let delta = rng.random_range(0.5..4.0);
            let c_up = PriceSignal::real_time(c.c.iter().map(|v| v + delta).collect());
            let sol_up = solve_mpc(&theta, &c_up, &MpcOptions::default()).unwrap();
            let sum: f64 = sol.u_star.iter().sum();
            let sum_up: f64 = sol_up.u_star.iter().sum();
            assert!(sum_up <= sum + 1e-8, "sum u grew from {sum} to {sum_up}");
        }
    }

    #[test]
    fn solution_serializes_for_the_cli() {
        let theta = exact_tracking_consumer(4);
        let c = PriceSignal::flat(10.0, 4);
        let sol = solve_mpc(&theta, &c, &MpcOptions::default()).unwrap();
        let json = serde_json::to_value(&sol).unwrap();
        assert!(json.get("J").is_some());
        assert!(json.get("T").is_some());
        let _ = GlobalConstants::default();
    }
}
