//! Dense bounded-variable primal simplex, two phases, with Bland's rule as a
//! cycling fallback. Sized for desk-scale models; robustness over speed.

use super::{MilpModel, Sense, VarId};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct LpOptions {
    /// Primal feasibility tolerance.
    pub feas_tol: f64,
    /// Reduced-cost optimality tolerance.
    pub opt_tol: f64,
    pub max_pivots: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_threshold: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_tol: 1e-7,
            opt_tol: 1e-9,
            max_pivots: 200_000,
            bland_threshold: 60,
        }
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("simplex stalled after {pivots} pivots in {phase}: {detail}")]
    Stall {
        pivots: usize,
        phase: &'static str,
        detail: String,
    },
    #[error("model error: {0}")]
    Model(#[from] super::ModelError),
}

/// Optimal basic point of the LP relaxation.
#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Structural variable values.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Simplex multipliers `y` with `reduced_costs[j] = c_j - y . A_j`.
    /// The Lagrange multiplier of a `<=` row (nonnegative at optimality when
    /// the row binds) is `-row_duals[i]`; for a `>=` row it is `+row_duals[i]`.
    pub row_duals: Vec<f64>,
    /// Reduced costs of structural variables; the multiplier of an active
    /// lower (upper) variable bound is `+d_j` (`-d_j`).
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

/// Farkas-style certificate: `y . b - max_box(y . (A x + s)) = gap > 0`.
#[derive(Debug, Clone)]
pub struct InfeasibilityCertificate {
    pub row_multipliers: Vec<f64>,
    pub gap: f64,
    pub verified: bool,
}

impl InfeasibilityCertificate {
    /// Re-derives the certificate gap by inner products against the model.
    pub fn verify(&self, model: &MilpModel, lo: &[f64], up: &[f64]) -> f64 {
        let y = &self.row_multipliers;
        let nv = model.n_vars();
        let mut z = vec![0.0; nv];
        let mut ytb = 0.0;
        for (i, row) in model.constraints.iter().enumerate() {
            for &(VarId(j), coeff) in &row.terms {
                z[j] += y[i] * coeff;
            }
            ytb += y[i] * row.rhs;
        }
        let mut sup = 0.0;
        for j in 0..nv {
            sup += box_max(z[j], lo[j], up[j]);
        }
        for (i, row) in model.constraints.iter().enumerate() {
            let (slo, sup_b) = slack_bounds(row.sense);
            sup += box_max(y[i], slo, sup_b);
        }
        ytb - sup
    }
}

/// Feasible point plus an improving direction along which the LP is unbounded.
#[derive(Debug, Clone)]
pub struct UnboundedRay {
    pub point: Vec<f64>,
    pub direction: Vec<f64>,
    pub verified: bool,
}

impl UnboundedRay {
    /// Checks the direction is feasible for all row senses/bounds and improving.
    pub fn verify(&self, model: &MilpModel, lo: &[f64], up: &[f64], tol: f64) -> bool {
        let r = &self.direction;
        for row in &model.constraints {
            let rate: f64 = row.terms.iter().map(|&(VarId(j), c)| c * r[j]).sum();
            let ok = match row.sense {
                Sense::Le => rate <= tol,
                Sense::Ge => rate >= -tol,
                Sense::Eq => rate.abs() <= tol,
            };
            if !ok {
                return false;
            }
        }
        for (j, &rj) in r.iter().enumerate() {
            if rj > tol && up[j].is_finite() {
                return false;
            }
            if rj < -tol && lo[j].is_finite() {
                return false;
            }
        }
        let drop: f64 = model.objective.iter().map(|&(VarId(j), c)| c * r[j]).sum();
        drop < -tol
    }
}

#[derive(Debug)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible(InfeasibilityCertificate),
    Unbounded(UnboundedRay),
}

impl LpOutcome {
    pub fn expect_optimal(self) -> LpSolution {
        match self {
            LpOutcome::Optimal(s) => s,
            LpOutcome::Infeasible(_) => panic!("LP unexpectedly infeasible"),
            LpOutcome::Unbounded(_) => panic!("LP unexpectedly unbounded"),
        }
    }
}

fn box_max(coef: f64, lo: f64, up: f64) -> f64 {
    if coef == 0.0 {
        return 0.0;
    }
    if coef > 0.0 {
        coef * up
    } else {
        coef * lo
    }
}

fn slack_bounds(sense: Sense) -> (f64, f64) {
    match sense {
        Sense::Le => (0.0, f64::INFINITY),
        Sense::Ge => (f64::NEG_INFINITY, 0.0),
        Sense::Eq => (0.0, 0.0),
    }
}

/// Solves the LP relaxation of `model` (integrality dropped, declared bounds
/// kept).
pub fn solve_lp(model: &MilpModel, opts: &LpOptions) -> Result<LpOutcome, LpError> {
    let lo: Vec<f64> = model.variables.iter().map(|v| v.lo).collect();
    let up: Vec<f64> = model.variables.iter().map(|v| v.up).collect();
    solve_lp_with_bounds(model, &lo, &up, opts)
}

/// LP relaxation with overridden structural bounds (used by branch and bound).
pub fn solve_lp_with_bounds(
    model: &MilpModel,
    lo_struct: &[f64],
    up_struct: &[f64],
    opts: &LpOptions,
) -> Result<LpOutcome, LpError> {
    model.validate()?;
    let mut t = Tableau::new(model, lo_struct, up_struct);
    t.run(opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic(usize),
    AtLower,
    AtUpper,
    FreeZero,
}

struct Tableau<'a> {
    model: &'a MilpModel,
    m: usize,
    nv: usize,
    ncols: usize,
    /// Row-major `B^-1 A`, m x ncols; slack block doubles as `B^-1`.
    tab: Vec<f64>,
    /// Values of basic variables per row.
    xb: Vec<f64>,
    basic: Vec<usize>,
    state: Vec<ColState>,
    /// Values of nonbasic columns (at a bound or zero for free).
    nbval: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    /// Phase-2 reduced costs, maintained incrementally.
    d: Vec<f64>,
    rhs: Vec<f64>,
    pivots: usize,
    degenerate_streak: usize,
}

enum Step {
    Flip {
        col: usize,
        t: f64,
        dir: f64,
    },
    Pivot {
        row: usize,
        col: usize,
        t: f64,
        dir: f64,
        /// Which bound the leaving variable rests at.
        leave_at_upper: bool,
    },
    NoBlock,
}

impl<'a> Tableau<'a> {
    fn new(model: &'a MilpModel, lo_struct: &[f64], up_struct: &[f64]) -> Self {
        let m = model.n_rows();
        let nv = model.n_vars();
        let ncols = nv + m;
        let mut tab = vec![0.0; m * ncols];
        let mut lo = vec![0.0; ncols];
        let mut up = vec![0.0; ncols];
        lo[..nv].copy_from_slice(lo_struct);
        up[..nv].copy_from_slice(up_struct);
        let mut rhs = vec![0.0; m];
        for (i, row) in model.constraints.iter().enumerate() {
            let base = i * ncols;
            for &(VarId(j), coeff) in &row.terms {
                tab[base + j] += coeff;
            }
            tab[base + nv + i] = 1.0;
            let (slo, sup) = slack_bounds(row.sense);
            lo[nv + i] = slo;
            up[nv + i] = sup;
            rhs[i] = row.rhs;
        }
        // nonbasic start: finite bound nearest zero, or zero for free columns
        let mut state = vec![ColState::AtLower; ncols];
        let mut nbval = vec![0.0; ncols];
        for j in 0..nv {
            let (l, u) = (lo[j], up[j]);
            if l.is_finite() && (!u.is_finite() || l.abs() <= u.abs()) {
                state[j] = ColState::AtLower;
                nbval[j] = l;
            } else if u.is_finite() {
                state[j] = ColState::AtUpper;
                nbval[j] = u;
            } else {
                state[j] = ColState::FreeZero;
                nbval[j] = 0.0;
            }
        }
        let mut basic = Vec::with_capacity(m);
        let mut xb = vec![0.0; m];
        for i in 0..m {
            state[nv + i] = ColState::Basic(i);
            basic.push(nv + i);
        }
        // xb = b - A_N x_N   (initial basis is the slack identity)
        for i in 0..m {
            let mut v = rhs[i];
            let base = i * ncols;
            for (j, &val) in nbval.iter().enumerate().take(nv) {
                if val != 0.0 {
                    v -= tab[base + j] * val;
                }
            }
            xb[i] = v;
        }
        let mut cost = vec![0.0; ncols];
        for &(VarId(j), coeff) in &model.objective {
            cost[j] += coeff;
        }
        Tableau {
            model,
            m,
            nv,
            ncols,
            tab,
            xb,
            basic,
            state,
            nbval,
            lo,
            up,
            cost,
            d: vec![0.0; ncols],
            rhs,
            pivots: 0,
            degenerate_streak: 0,
        }
    }


    fn infeasibility(&self, feas_tol: f64) -> (f64, Vec<i8>) {
        let mut f = 0.0;
        let mut g = vec![0i8; self.m];
        for i in 0..self.m {
            let j = self.basic[i];
            if self.xb[i] > self.up[j] + feas_tol {
                f += self.xb[i] - self.up[j];
                g[i] = 1;
            } else if self.xb[i] < self.lo[j] - feas_tol {
                f += self.lo[j] - self.xb[i];
                g[i] = -1;
            }
        }
        (f, g)
    }

    fn run(&mut self, opts: &LpOptions) -> Result<LpOutcome, LpError> {
        if let Some(outcome) = self.phase1(opts)? {
            return Ok(outcome);
        }
        self.phase2(opts)
    }

    /// Drives the total bound violation of the basis to zero. Returns an
    /// infeasibility certificate if it bottoms out above tolerance.
    fn phase1(&mut self, opts: &LpOptions) -> Result<Option<LpOutcome>, LpError> {
        loop {
            let (f, g) = self.infeasibility(opts.feas_tol);
            if f == 0.0 {
                return Ok(None);
            }
            if self.pivots >= opts.max_pivots {
                return Err(LpError::Stall {
                    pivots: self.pivots,
                    phase: "phase 1",
                    detail: format!("residual infeasibility {f:.3e}"),
                });
            }
            // d1[j] = -(g^T B^-1 A)_j, summed over infeasible rows only
            let mut d1 = vec![0.0; self.ncols];
            for (i, &gi) in g.iter().enumerate() {
                if gi != 0 {
                    let s = gi as f64;
                    let base = i * self.ncols;
                    for (jj, slot) in d1.iter_mut().enumerate() {
                        *slot -= s * self.tab[base + jj];
                    }
                }
            }
            let bland = self.degenerate_streak >= opts.bland_threshold;
            let Some((col, dir)) = self.choose_entering(&d1, opts.opt_tol, bland) else {
                // phase-1 optimum with positive violation: infeasible
                let y = self.farkas_multipliers(&g);
                let cert = InfeasibilityCertificate {
                    gap: f,
                    verified: false,
                    row_multipliers: y,
                };
                let gap = cert.verify(self.model, &self.lo[..self.nv], &self.up[..self.nv]);
                let verified = gap > opts.feas_tol * 0.5;
                return Ok(Some(LpOutcome::Infeasible(InfeasibilityCertificate {
                    verified,
                    ..cert
                })));
            };
            match self.ratio_test(col, dir, true, &g, opts, bland) {
                Step::NoBlock => {
                    return Err(LpError::Stall {
                        pivots: self.pivots,
                        phase: "phase 1",
                        detail: "no blocking bound for improving direction".to_string(),
                    });
                }
                step => self.apply(step, false),
            }
        }
    }

    fn phase2(&mut self, opts: &LpOptions) -> Result<LpOutcome, LpError> {
        self.recompute_reduced_costs();
        self.degenerate_streak = 0;
        loop {
            if self.pivots >= opts.max_pivots {
                return Err(LpError::Stall {
                    pivots: self.pivots,
                    phase: "phase 2",
                    detail: format!("objective {:.6e}", self.current_objective()),
                });
            }
            let bland = self.degenerate_streak >= opts.bland_threshold;
            let d = std::mem::take(&mut self.d);
            let picked = self.choose_entering(&d, opts.opt_tol, bland);
            self.d = d;
            let Some((col, dir)) = picked else {
                return Ok(LpOutcome::Optimal(self.extract_solution()));
            };
            match self.ratio_test(col, dir, false, &[], opts, bland) {
                Step::NoBlock => {
                    let ray = self.extract_ray(col, dir, opts);
                    return Ok(LpOutcome::Unbounded(ray));
                }
                step => self.apply(step, true),
            }
        }
    }

    fn choose_entering(&self, d: &[f64], opt_tol: f64, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols {
            let gap = self.up[j] - self.lo[j];
            let dir = match self.state[j] {
                ColState::Basic(_) => continue,
                ColState::AtLower => {
                    if gap <= 0.0 || d[j] >= -opt_tol {
                        continue;
                    }
                    1.0
                }
                ColState::AtUpper => {
                    if gap <= 0.0 || d[j] <= opt_tol {
                        continue;
                    }
                    -1.0
                }
                ColState::FreeZero => {
                    if d[j] < -opt_tol {
                        1.0
                    } else if d[j] > opt_tol {
                        -1.0
                    } else {
                        continue;
                    }
                }
            };
            if bland {
                return Some((j, dir));
            }
            let score = d[j].abs();
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Max step for `col` moving in `dir`; in phase 1 infeasible basics block
    /// at the bound they currently violate.
    fn ratio_test(
        &self,
        col: usize,
        dir: f64,
        phase1: bool,
        g: &[i8],
        opts: &LpOptions,
        bland: bool,
    ) -> Step {
        let own_gap = self.up[col] - self.lo[col];
        let mut t_best = if own_gap.is_finite() { own_gap } else { f64::INFINITY };
        let mut blocker: Option<(usize, f64, bool)> = None; // (row, |pivot|, at_upper)
        let ratio_tol = 1e-9;
        for i in 0..self.m {
            let a = self.tab[i * self.ncols + col];
            if a.abs() < 1e-11 {
                continue;
            }
            let rate = -dir * a; // d xb_i / d t
            let j = self.basic[i];
            let infeas = phase1 && g[i] != 0;
            let (limit, at_upper) = if infeas {
                // moving back toward the violated bound
                if g[i] > 0 && rate < 0.0 {
                    ((self.xb[i] - self.up[j]) / -rate, true)
                } else if g[i] < 0 && rate > 0.0 {
                    ((self.lo[j] - self.xb[i]) / rate, false)
                } else {
                    continue;
                }
            } else if rate > 0.0 {
                if !self.up[j].is_finite() {
                    continue;
                }
                ((self.up[j] - self.xb[i]) / rate, true)
            } else {
                if !self.lo[j].is_finite() {
                    continue;
                }
                ((self.xb[i] - self.lo[j]) / -rate, false)
            };
            let limit = limit.max(0.0);
            let take = if bland {
                // Bland: smallest eligible basic index among minimal ratios
                limit < t_best - ratio_tol
                    || (limit <= t_best + ratio_tol
                        && blocker.map_or(true, |(r, _, _)| self.basic[i] < self.basic[r]))
            } else {
                limit < t_best - ratio_tol
                    || (limit <= t_best + ratio_tol
                        && blocker.map_or(true, |(_, p, _)| a.abs() > p))
            };
            if take {
                t_best = t_best.min(limit);
                blocker = Some((i, a.abs(), at_upper));
            }
        }
        let _ = opts;
        match blocker {
            None if t_best.is_finite() => Step::Flip {
                col,
                t: t_best,
                dir,
            },
            None => Step::NoBlock,
            Some((row, _, leave_at_upper)) => {
                if own_gap.is_finite() && own_gap < t_best - ratio_tol {
                    Step::Flip {
                        col,
                        t: own_gap,
                        dir,
                    }
                } else {
                    Step::Pivot {
                        row,
                        col,
                        t: t_best,
                        dir,
                        leave_at_upper,
                    }
                }
            }
        }
    }

    fn apply(&mut self, step: Step, update_d: bool) {
        match step {
            Step::NoBlock => unreachable!(),
            Step::Flip { col, t, dir } => {
                let delta = dir * t;
                self.shift_nonbasic(col, delta);
                self.state[col] = if dir > 0.0 { ColState::AtUpper } else { ColState::AtLower };
                self.nbval[col] = if dir > 0.0 { self.up[col] } else { self.lo[col] };
                self.track_degeneracy(t);
            }
            Step::Pivot {
                row,
                col,
                t,
                dir,
                leave_at_upper,
            } => {
                let delta = dir * t;
                self.shift_nonbasic(col, delta); // also advances nbval[col]
                let entering_val = self.nbval[col];
                let leaving = self.basic[row];
                // leaving variable rests at the bound it blocked on
                let (leave_state, leave_val) = if leave_at_upper {
                    (ColState::AtUpper, self.up[leaving])
                } else {
                    (ColState::AtLower, self.lo[leaving])
                };
                self.eliminate(row, col, update_d);
                self.state[leaving] = leave_state;
                self.nbval[leaving] = leave_val;
                self.state[col] = ColState::Basic(row);
                self.basic[row] = col;
                self.xb[row] = entering_val;
                self.pivots += 1;
                self.track_degeneracy(t);
                if self.pivots % 512 == 0 {
                    self.refresh_basics();
                }
            }
        }
    }

    /// Recomputes basic values from the tableau to shed accumulated drift:
    /// `xb = B^-1 b - B^-1 A_N x_N`, with `B^-1` read off the slack block.
    fn refresh_basics(&mut self) {
        let mut fresh = vec![0.0; self.m];
        for (i, slot) in fresh.iter_mut().enumerate() {
            let base = i * self.ncols;
            let mut v = 0.0;
            for (k, &bk) in self.rhs.iter().enumerate() {
                if bk != 0.0 {
                    v += self.tab[base + self.nv + k] * bk;
                }
            }
            for j in 0..self.nv {
                if !matches!(self.state[j], ColState::Basic(_)) && self.nbval[j] != 0.0 {
                    v -= self.tab[base + j] * self.nbval[j];
                }
            }
            *slot = v;
        }
        self.xb = fresh;
    }

    fn track_degeneracy(&mut self, t: f64) {
        if t <= 1e-10 {
            self.degenerate_streak += 1;
        } else {
            self.degenerate_streak = 0;
        }
    }

    /// Moves nonbasic `col` by `delta`, updating basic values.
    fn shift_nonbasic(&mut self, col: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        for i in 0..self.m {
            self.xb[i] -= self.tab[i * self.ncols + col] * delta;
        }
        self.nbval[col] += delta;
    }

    /// Gauss-Jordan elimination on the pivot (row, col).
    fn eliminate(&mut self, prow: usize, pcol: usize, update_d: bool) {
        let ncols = self.ncols;
        let pivot = self.tab[prow * ncols + pcol];
        debug_assert!(pivot.abs() > 1e-12, "tiny pivot {pivot}");
        let inv = 1.0 / pivot;
        {
            let r = &mut self.tab[prow * ncols..(prow + 1) * ncols];
            for v in r.iter_mut() {
                *v *= inv;
            }
            r[pcol] = 1.0; // keep unit pivot exact
        }
        // basic VALUES are tracked separately in xb; only B^-1 A is eliminated
        let (before, rest) = self.tab.split_at_mut(prow * ncols);
        let (prow_slice, after) = rest.split_at_mut(ncols);
        let apply_row = |chunk: &mut [f64]| {
            let factor = chunk[pcol];
            if factor != 0.0 {
                for (v, &p) in chunk.iter_mut().zip(prow_slice.iter()) {
                    *v -= factor * p;
                }
                chunk[pcol] = 0.0;
            }
        };
        for chunk in before.chunks_mut(ncols) {
            apply_row(chunk);
        }
        for chunk in after.chunks_mut(ncols) {
            apply_row(chunk);
        }
        if update_d {
            let factor = self.d[pcol];
            if factor != 0.0 {
                for (v, &p) in self.d.iter_mut().zip(prow_slice.iter()) {
                    *v -= factor * p;
                }
                self.d[pcol] = 0.0;
            }
        }
    }

    fn recompute_reduced_costs(&mut self) {
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basic[i]];
            if cb != 0.0 {
                let base = i * self.ncols;
                for (j, slot) in self.d.iter_mut().enumerate() {
                    *slot -= cb * self.tab[base + j];
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basic[i]] = 0.0;
        }
    }

    fn current_objective(&self) -> f64 {
        let mut obj = self.model.objective_offset;
        for j in 0..self.nv {
            obj += self.cost[j] * self.value_of(j);
        }
        obj
    }

    fn value_of(&self, j: usize) -> f64 {
        match self.state[j] {
            ColState::Basic(i) => self.xb[i],
            _ => self.nbval[j],
        }
    }

    fn extract_solution(&self) -> LpSolution {
        let x: Vec<f64> = (0..self.nv).map(|j| self.value_of(j)).collect();
        let mut row_duals = Vec::with_capacity(self.m);
        for i in 0..self.m {
            row_duals.push(-self.d[self.nv + i]);
        }
        let reduced_costs: Vec<f64> = self.d[..self.nv].to_vec();
        let objective = self.model.objective_offset
            + self
                .model
                .objective
                .iter()
                .map(|&(VarId(j), c)| c * x[j])
                .sum::<f64>();
        LpSolution {
            x,
            objective,
            row_duals,
            reduced_costs,
            pivots: self.pivots,
        }
    }

    fn farkas_multipliers(&self, g: &[i8]) -> Vec<f64> {
        // y = g^T B^-1, read from the slack block of the tableau
        let mut y = vec![0.0; self.m];
        for (i, &gi) in g.iter().enumerate() {
            if gi != 0 {
                let s = gi as f64;
                let base = i * self.ncols;
                for (k, slot) in y.iter_mut().enumerate() {
                    *slot += s * self.tab[base + self.nv + k];
                }
            }
        }
        y
    }

    fn extract_ray(&self, col: usize, dir: f64, opts: &LpOptions) -> UnboundedRay {
        let point: Vec<f64> = (0..self.nv).map(|j| self.value_of(j)).collect();
        let mut direction = vec![0.0; self.nv];
        if col < self.nv {
            direction[col] = dir;
        }
        for i in 0..self.m {
            let j = self.basic[i];
            if j < self.nv {
                direction[j] = -dir * self.tab[i * self.ncols + col];
            }
        }
        let verified = {
            let ray = UnboundedRay {
                point: point.clone(),
                direction: direction.clone(),
                verified: false,
            };
            ray.verify(
                self.model,
                &self.lo[..self.nv],
                &self.up[..self.nv],
                opts.feas_tol.max(1e-9),
            )
        };
        UnboundedRay {
            point,
            direction,
            verified,
        }
    }
}
