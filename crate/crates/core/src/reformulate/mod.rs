//! Single-level MILP reformulation of the utility's bilevel pricing problem.
//!
//! Each sampled consumer contributes one embedded KKT system of the surrogate
//! MPC (its quadratic tracking term replaced by `kappa|T - T_d|`, keeping
//! every row linear), with complementarity switched by big-M binaries. The
//! bilinear revenue terms `c_n * u_n` are relaxed with McCormick envelopes,
//! prices carry their structural rows, and the sample average approximation
//! of the objective ties the blocks together.

mod oracle;
mod search;

pub use oracle::{solve_surrogate, surrogate_kkt_residual, SurrogateKktResidual, SurrogateSolution};
pub use search::{design_tariff, DesignOutcome, SearchOptions};

use crate::milp::{MilpError, MilpModel, MilpSolution, Sense, VarId};
use crate::mpc::{solve_mpc, MpcError, MpcOptions};
use crate::thermal::{ConsumerType, DomainError, GlobalConstants, PriceKind, PriceSignal, TimeGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReformulateError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("scenario {index} rejected: not feasible under the flat rate ({source})")]
    ScenarioRejected { index: usize, source: MpcError },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("oracle failure: {0}")]
    Oracle(MpcError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    Peak,
    Variance,
}

/// How the complementarity big-M constants are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BigMPolicy {
    /// One fixed constant for every multiplier family.
    Fixed(f64),
    /// Closed-form costate majorization scaled by a safety factor.
    Derived { safety: f64 },
}

impl Default for BigMPolicy {
    fn default() -> Self {
        BigMPolicy::Derived { safety: 2.0 }
    }
}

/// Everything the reformulation needs to build one design MILP.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub objective_mode: ObjectiveMode,
    /// `pp` or `rp`.
    pub structure: PriceKind,
    /// Revenue-loss weight.
    pub lambda: f64,
    pub constants: GlobalConstants,
    /// Inclusive 0-based step indices of the anticipated peak window.
    pub peak_window: (usize, usize),
    pub flat_price: f64,
    pub scenarios: Vec<ConsumerType>,
    /// Comfort-surrogate slope; must dominate every scenario's band width.
    pub kappa: f64,
    pub big_m_policy: BigMPolicy,
    pub grid: TimeGrid,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<(), ReformulateError> {
        self.grid.validate()?;
        self.constants.validate()?;
        let n = self.grid.n_steps;
        let (t1, t2) = self.peak_window;
        if t1 > t2 || t2 >= n {
            return Err(ReformulateError::Parameter(format!(
                "peak window ({t1},{t2}) out of range for N={n}"
            )));
        }
        if self.flat_price < self.constants.c_lo || self.flat_price > self.constants.c_hi {
            return Err(ReformulateError::Parameter(format!(
                "flat price {} outside [{}, {}]",
                self.flat_price, self.constants.c_lo, self.constants.c_hi
            )));
        }
        if self.scenarios.is_empty() {
            return Err(ReformulateError::Parameter("no scenarios".into()));
        }
        if self.lambda < 0.0 {
            return Err(ReformulateError::Parameter("lambda must be >= 0".into()));
        }
        if !matches!(self.structure, PriceKind::Pp | PriceKind::Rp) {
            return Err(ReformulateError::Parameter(
                "designable structures are pp and rp".into(),
            ));
        }
        for (i, theta) in self.scenarios.iter().enumerate() {
            theta.validate()?;
            if theta.n_steps() != n {
                return Err(ReformulateError::Parameter(format!(
                    "scenario {i} has {} steps, grid has {n}",
                    theta.n_steps()
                )));
            }
            if self.kappa < theta.comfort_half_width() {
                return Err(ReformulateError::Parameter(format!(
                    "kappa {} below comfort half-width of scenario {i}",
                    self.kappa
                )));
            }
        }
        Ok(())
    }
}

/// Big-M constants per multiplier family.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BigM {
    pub nu: f64,
    pub mu: f64,
    pub xi: f64,
    /// Slack bound of the epigraph-tightness rows (a primal quantity).
    pub s_slack: f64,
}

/// Dual-magnitude majorization for one scenario.
///
/// A unit perturbation of the state decays geometrically at rate `k_r` and
/// at each step costs at most `kappa` in tracking subgradient plus
/// `gamma*c_hi/k_c` in forced-input marginal, which bounds the costates:
/// `nu_max = (kappa + gamma*c_hi/k_c) * (1 - k_r^N) / (1 - k_r)`. The u- and
/// T-stationarity rows then bound the bound multipliers in turn.
pub fn compute_big_m(
    theta: &ConsumerType,
    constants: &GlobalConstants,
    kappa: f64,
    policy: BigMPolicy,
) -> Result<BigM, ReformulateError> {
    let p = &theta.thermal;
    let n = theta.n_steps() as i32;
    let s_slack = 2.0 * theta.comfort_half_width() + 1.0;
    match policy {
        BigMPolicy::Fixed(m) => {
            if m <= 0.0 {
                return Err(ReformulateError::Parameter(format!(
                    "fixed big-M {m} must be positive"
                )));
            }
            Ok(BigM {
                nu: m,
                mu: m,
                xi: m,
                s_slack,
            })
        }
        BigMPolicy::Derived { safety } => {
            if safety <= 0.0 {
                return Err(ReformulateError::Parameter(format!(
                    "big-M safety factor {safety} must be positive"
                )));
            }
            let geom = (1.0 - p.k_r.powi(n)) / (1.0 - p.k_r);
            let nu_max = (kappa + theta.gamma * constants.c_hi / p.k_c) * geom;
            let mu = theta.gamma * constants.c_hi + p.k_c * nu_max;
            let xi = (1.0 + p.k_r) * nu_max + kappa;
            Ok(BigM {
                nu: safety * nu_max,
                mu: safety * mu,
                xi: safety * xi,
                s_slack,
            })
        }
    }
}

/// Variable handles of one embedded scenario block. Index conventions:
/// `u`, `t`, `s`, `alpha`, `beta`, `a_bin`, `b_bin`, `r` run over steps
/// `0..N`; `nu`, `mu_*`, `eta`, `zeta` over `0..N-1` (input rows);
/// `xi_*`, `x_bin`, `y_bin` over steps `1..N` stored from index 0.
#[derive(Debug, Clone)]
pub struct ScenarioHandles {
    pub u: Vec<VarId>,
    pub t: Vec<VarId>,
    pub s: Vec<VarId>,
    pub nu: Vec<VarId>,
    pub mu_hi: Vec<VarId>,
    pub mu_lo: Vec<VarId>,
    pub xi_hi: Vec<VarId>,
    pub xi_lo: Vec<VarId>,
    pub alpha: Vec<VarId>,
    pub beta: Vec<VarId>,
    pub eta: Vec<VarId>,
    pub zeta: Vec<VarId>,
    pub x_bin: Vec<VarId>,
    pub y_bin: Vec<VarId>,
    pub a_bin: Vec<VarId>,
    pub b_bin: Vec<VarId>,
    pub r: Vec<VarId>,
    /// Load-deviation epigraphs (variance mode only).
    pub dev: Vec<VarId>,
}

/// Embeds the surrogate-MPC KKT system of `theta` into `model`, coupled to
/// the shared price variables. Complementarity is switched by big-M binaries;
/// the tracking term enters the temperature stationarity rows through the
/// epigraph subgradient `alpha - beta`.
pub fn embed_kkt(
    model: &mut MilpModel,
    theta: &ConsumerType,
    c_vars: &[VarId],
    big_m: &BigM,
    kappa: f64,
    t_init: f64,
    tag: usize,
) -> Result<ScenarioHandles, ReformulateError> {
    if big_m.nu <= 0.0 || big_m.mu <= 0.0 || big_m.xi <= 0.0 {
        return Err(ReformulateError::Parameter(
            "big-M values must be positive".into(),
        ));
    }
    let n = theta.n_steps();
    let p = &theta.thermal;
    let sc = p.cooling_sign;
    let gamma = theta.gamma;

    let u: Vec<VarId> = (0..n)
        .map(|k| {
            let hi = if k == n - 1 { 0.0 } else { theta.u_max };
            model.add_var(format!("u_{tag}_{k}"), 0.0, hi)
        })
        .collect();
    let t: Vec<VarId> = (0..n)
        .map(|k| {
            if k == 0 {
                model.add_var(format!("T_{tag}_0"), t_init, t_init)
            } else {
                model.add_var(format!("T_{tag}_{k}"), theta.t_lo, theta.t_hi)
            }
        })
        .collect();
    let s: Vec<VarId> = (0..n)
        .map(|k| model.add_var(format!("s_{tag}_{k}"), 0.0, f64::INFINITY))
        .collect();
    let nu: Vec<VarId> = (0..n - 1)
        .map(|k| model.add_var(format!("nu_{tag}_{k}"), -big_m.nu, big_m.nu))
        .collect();
    let mu_hi: Vec<VarId> = (0..n - 1)
        .map(|k| model.add_var(format!("muH_{tag}_{k}"), 0.0, big_m.mu))
        .collect();
    let mu_lo: Vec<VarId> = (0..n - 1)
        .map(|k| model.add_var(format!("muL_{tag}_{k}"), 0.0, big_m.mu))
        .collect();
    let xi_hi: Vec<VarId> = (1..n)
        .map(|k| model.add_var(format!("xiH_{tag}_{k}"), 0.0, big_m.xi))
        .collect();
    let xi_lo: Vec<VarId> = (1..n)
        .map(|k| model.add_var(format!("xiL_{tag}_{k}"), 0.0, big_m.xi))
        .collect();
    let alpha: Vec<VarId> = (0..n)
        .map(|k| model.add_var(format!("al_{tag}_{k}"), 0.0, kappa))
        .collect();
    let beta: Vec<VarId> = (0..n)
        .map(|k| model.add_var(format!("be_{tag}_{k}"), 0.0, kappa))
        .collect();
    let eta: Vec<VarId> = (0..n - 1)
        .map(|k| model.add_binary(format!("eta_{tag}_{k}")))
        .collect();
    let zeta: Vec<VarId> = (0..n - 1)
        .map(|k| model.add_binary(format!("zeta_{tag}_{k}")))
        .collect();
    let x_bin: Vec<VarId> = (1..n)
        .map(|k| model.add_binary(format!("x_{tag}_{k}")))
        .collect();
    let y_bin: Vec<VarId> = (1..n)
        .map(|k| model.add_binary(format!("y_{tag}_{k}")))
        .collect();
    let a_bin: Vec<VarId> = (0..n)
        .map(|k| model.add_binary(format!("a_{tag}_{k}")))
        .collect();
    let b_bin: Vec<VarId> = (0..n)
        .map(|k| model.add_binary(format!("b_{tag}_{k}")))
        .collect();

    // dynamics
    for k in 0..n - 1 {
        let a = p.k_w * theta.w[k] + theta.q[k];
        model.add_row(
            vec![(t[k + 1], 1.0), (t[k], -p.k_r), (u[k], -sc * p.k_c)],
            Sense::Eq,
            a,
        );
    }
    // input stationarity: gamma*c_k - sc*k_c*nu_k + muH_k - muL_k = 0
    for k in 0..n - 1 {
        model.add_row(
            vec![
                (c_vars[k], gamma),
                (nu[k], -sc * p.k_c),
                (mu_hi[k], 1.0),
                (mu_lo[k], -1.0),
            ],
            Sense::Eq,
            0.0,
        );
    }
    // temperature stationarity with the surrogate subgradient
    for k in 1..n {
        let mut terms = vec![
            (alpha[k], 1.0),
            (beta[k], -1.0),
            (nu[k - 1], 1.0),
            (xi_hi[k - 1], 1.0),
            (xi_lo[k - 1], -1.0),
        ];
        if k <= n - 2 {
            terms.push((nu[k], -p.k_r));
        }
        model.add_row(terms, Sense::Eq, 0.0);
    }
    // epigraph stationarity and primal epigraph rows
    for k in 0..n {
        model.add_row(vec![(alpha[k], 1.0), (beta[k], 1.0)], Sense::Eq, kappa);
        model.add_row(vec![(s[k], 1.0), (t[k], -1.0)], Sense::Ge, -theta.t_d);
        model.add_row(vec![(s[k], 1.0), (t[k], 1.0)], Sense::Ge, theta.t_d);
    }
    // input-bound complementarity
    for k in 0..n - 1 {
        model.add_row(vec![(mu_hi[k], 1.0), (eta[k], -big_m.mu)], Sense::Le, 0.0);
        model.add_row(vec![(mu_lo[k], 1.0), (zeta[k], -big_m.mu)], Sense::Le, 0.0);
        model.add_row(vec![(u[k], 1.0), (eta[k], -theta.u_max)], Sense::Ge, 0.0);
        model.add_row(
            vec![(u[k], 1.0), (zeta[k], theta.u_max)],
            Sense::Le,
            theta.u_max,
        );
    }
    // temperature-bound complementarity
    let band = theta.t_hi - theta.t_lo;
    for k in 1..n {
        model.add_row(
            vec![(xi_hi[k - 1], 1.0), (x_bin[k - 1], -big_m.xi)],
            Sense::Le,
            0.0,
        );
        model.add_row(
            vec![(xi_lo[k - 1], 1.0), (y_bin[k - 1], -big_m.xi)],
            Sense::Le,
            0.0,
        );
        model.add_row(
            vec![(t[k], 1.0), (x_bin[k - 1], -band)],
            Sense::Ge,
            theta.t_lo,
        );
        model.add_row(
            vec![(t[k], 1.0), (y_bin[k - 1], band)],
            Sense::Le,
            theta.t_hi,
        );
    }
    // epigraph complementarity: positive alpha forces its row tight
    for k in 0..n {
        model.add_row(vec![(alpha[k], 1.0), (a_bin[k], -kappa)], Sense::Le, 0.0);
        model.add_row(
            vec![(s[k], 1.0), (t[k], -1.0), (a_bin[k], big_m.s_slack)],
            Sense::Le,
            big_m.s_slack - theta.t_d,
        );
        model.add_row(vec![(beta[k], 1.0), (b_bin[k], -kappa)], Sense::Le, 0.0);
        model.add_row(
            vec![(s[k], 1.0), (t[k], 1.0), (b_bin[k], big_m.s_slack)],
            Sense::Le,
            big_m.s_slack + theta.t_d,
        );
    }
    // bilinear revenue surrogates
    let r: Vec<VarId> = (0..n)
        .map(|k| {
            add_mccormick(
                model,
                c_vars[k],
                u[k],
                (0.0, theta.u_max),
                (f64::NAN, f64::NAN),
                tag,
                k,
            )
        })
        .collect();

    Ok(ScenarioHandles {
        u,
        t,
        s,
        nu,
        mu_hi,
        mu_lo,
        xi_hi,
        xi_lo,
        alpha,
        beta,
        eta,
        zeta,
        x_bin,
        y_bin,
        a_bin,
        b_bin,
        r,
        dev: Vec::new(),
    })
}

/// Four-row McCormick envelope of `r = c * u` over the box
/// `[c_lo, c_hi] x [u_lo, u_hi]`; the price bounds are read from the price
/// variable when not supplied.
pub fn add_mccormick(
    model: &mut MilpModel,
    c_var: VarId,
    u_var: VarId,
    u_bounds: (f64, f64),
    c_bounds: (f64, f64),
    tag: usize,
    step: usize,
) -> VarId {
    let (u_lo, u_hi) = u_bounds;
    let (mut c_lo, mut c_hi) = c_bounds;
    if !c_lo.is_finite() {
        c_lo = model.variables[c_var.0].lo;
    }
    if !c_hi.is_finite() {
        c_hi = model.variables[c_var.0].up;
    }
    let corners = [c_lo * u_lo, c_lo * u_hi, c_hi * u_lo, c_hi * u_hi];
    let r_lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
    let r_hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let r = model.add_var(format!("r_{tag}_{step}"), r_lo, r_hi);
    // r >= c_lo*u + u_lo*c - u_lo*c_lo
    model.add_row(
        vec![(r, 1.0), (u_var, -c_lo), (c_var, -u_lo)],
        Sense::Ge,
        -u_lo * c_lo,
    );
    // r >= c_hi*u + u_hi*c - c_hi*u_hi
    model.add_row(
        vec![(r, 1.0), (u_var, -c_hi), (c_var, -u_hi)],
        Sense::Ge,
        -c_hi * u_hi,
    );
    // r <= c_hi*u + u_lo*c - c_hi*u_lo
    model.add_row(
        vec![(r, 1.0), (u_var, -c_hi), (c_var, -u_lo)],
        Sense::Le,
        -c_hi * u_lo,
    );
    // r <= c_lo*u + u_hi*c - c_lo*u_hi
    model.add_row(
        vec![(r, 1.0), (u_var, -c_lo), (c_var, -u_hi)],
        Sense::Le,
        -c_lo * u_hi,
    );
    r
}

/// Structural rows of the price family: PP pins every step to one of two
/// levels around the window; RP bounds the per-step ramp and ties the
/// endpoint prices together.
pub fn add_price_structure(
    model: &mut MilpModel,
    c_vars: &[VarId],
    structure: PriceKind,
    constants: &GlobalConstants,
    peak_window: (usize, usize),
) {
    let n = c_vars.len();
    match structure {
        PriceKind::Flat => {
            for k in 1..n {
                model.add_row(vec![(c_vars[k], 1.0), (c_vars[0], -1.0)], Sense::Eq, 0.0);
            }
        }
        PriceKind::Pp => {
            let (t1, t2) = peak_window;
            for k in t1..=t2 {
                if k != t1 {
                    model.add_row(vec![(c_vars[k], 1.0), (c_vars[t1], -1.0)], Sense::Eq, 0.0);
                }
            }
            let anchor = if t1 > 0 {
                Some(0)
            } else if t2 + 1 < n {
                Some(t2 + 1)
            } else {
                None
            };
            if let Some(anchor) = anchor {
                for k in 0..n {
                    if (k < t1 || k > t2) && k != anchor {
                        model.add_row(
                            vec![(c_vars[k], 1.0), (c_vars[anchor], -1.0)],
                            Sense::Eq,
                            0.0,
                        );
                    }
                }
            }
        }
        PriceKind::Rp => {
            model.add_row(
                vec![(c_vars[0], 1.0), (c_vars[n - 1], -1.0)],
                Sense::Eq,
                0.0,
            );
            for k in 0..n - 1 {
                model.add_row(
                    vec![(c_vars[k + 1], 1.0), (c_vars[k], -1.0)],
                    Sense::Le,
                    constants.rho,
                );
                model.add_row(
                    vec![(c_vars[k], 1.0), (c_vars[k + 1], -1.0)],
                    Sense::Le,
                    constants.rho,
                );
            }
        }
    }
}

/// Participation row: the scenario's surrogate cost under the designed price
/// (with `r` standing in for `c*u`) must not exceed its flat-rate surrogate
/// cost.
pub fn add_participation(
    model: &mut MilpModel,
    handles: &ScenarioHandles,
    gamma: f64,
    kappa: f64,
    j_flat_surrogate: f64,
) {
    let mut terms: Vec<(VarId, f64)> = handles.s.iter().map(|&v| (v, kappa)).collect();
    for &rv in &handles.r {
        terms.push((rv, gamma));
    }
    model.add_row(terms, Sense::Le, j_flat_surrogate);
}

/// The assembled design MILP plus the per-scenario bookkeeping needed to
/// interpret and repair its solutions.
#[derive(Debug, Clone)]
pub struct ReformulatedModel {
    pub model: MilpModel,
    pub c_vars: Vec<VarId>,
    pub handles: Vec<ScenarioHandles>,
    /// Flat-rate mean input per scenario (variance-surrogate center).
    pub m_theta: Vec<f64>,
    /// Flat-rate surrogate cost per scenario (participation right-hand side).
    pub j_flat_surrogate: Vec<f64>,
    /// Exact flat-rate cost per scenario, kept for reporting.
    pub j_flat_exact: Vec<f64>,
    pub spec: DesignSpec,
}

/// Builds the single-level design MILP from a spec: per scenario one KKT
/// block, McCormick revenue surrogates, a participation row and (in variance
/// mode) deviation epigraphs around the flat-rate mean; shared price
/// variables with their structure rows; SAA objective.
pub fn build_design_milp(spec: &DesignSpec) -> Result<ReformulatedModel, ReformulateError> {
    spec.validate()?;
    let n = spec.grid.n_steps;
    let s_count = spec.scenarios.len();
    let flat = PriceSignal::flat(spec.flat_price, n);

    let mut m_theta = Vec::with_capacity(s_count);
    let mut j_flat_surrogate = Vec::with_capacity(s_count);
    let mut j_flat_exact = Vec::with_capacity(s_count);
    for (i, theta) in spec.scenarios.iter().enumerate() {
        let exact = solve_mpc(theta, &flat, &MpcOptions::default())
            .map_err(|source| ReformulateError::ScenarioRejected { index: i, source })?;
        m_theta.push(exact.u_star.iter().sum::<f64>() / n as f64);
        j_flat_exact.push(exact.j);
        let surr = solve_surrogate(theta, &flat.c, spec.kappa, theta.t_d, false)
            .map_err(ReformulateError::Oracle)?;
        j_flat_surrogate.push(surr.j);
    }

    let mut model = MilpModel::new();
    let c_vars: Vec<VarId> = (0..n)
        .map(|k| model.add_var(format!("c_{k}"), spec.constants.c_lo, spec.constants.c_hi))
        .collect();
    add_price_structure(
        &mut model,
        &c_vars,
        spec.structure,
        &spec.constants,
        spec.peak_window,
    );

    let mut handles = Vec::with_capacity(s_count);
    let mut objective: Vec<(VarId, f64)> = Vec::new();
    let inv_s = 1.0 / s_count as f64;
    for (i, theta) in spec.scenarios.iter().enumerate() {
        let big_m = compute_big_m(theta, &spec.constants, spec.kappa, spec.big_m_policy)?;
        let mut h = embed_kkt(
            &mut model,
            theta,
            &c_vars,
            &big_m,
            spec.kappa,
            theta.t_d,
            i,
        )?;
        add_participation(&mut model, &h, theta.gamma, spec.kappa, j_flat_surrogate[i]);
        match spec.objective_mode {
            ObjectiveMode::Peak => {
                let (t1, t2) = spec.peak_window;
                for k in t1..=t2 {
                    objective.push((h.u[k], inv_s));
                }
            }
            ObjectiveMode::Variance => {
                let m_i = m_theta[i];
                let coeff = inv_s / n as f64;
                for k in 0..n {
                    let dev = model.add_var(format!("dev_{i}_{k}"), 0.0, f64::INFINITY);
                    // dev >= +-(b_k + u_k - m_i)
                    model.add_row(
                        vec![(dev, 1.0), (h.u[k], -1.0)],
                        Sense::Ge,
                        theta.b[k] - m_i,
                    );
                    model.add_row(
                        vec![(dev, 1.0), (h.u[k], 1.0)],
                        Sense::Ge,
                        m_i - theta.b[k],
                    );
                    objective.push((dev, coeff));
                    h.dev.push(dev);
                }
            }
        }
        for &rv in &h.r {
            objective.push((rv, -spec.lambda * inv_s));
        }
        handles.push(h);
    }
    model.set_objective(objective);
    model
        .validate()
        .map_err(|e| ReformulateError::Parameter(e.to_string()))?;
    Ok(ReformulatedModel {
        model,
        c_vars,
        handles,
        m_theta,
        j_flat_surrogate,
        j_flat_exact,
        spec: spec.clone(),
    })
}

impl ReformulatedModel {
    /// Surrogate SAA objective (the MILP objective with `r = c*u` exact) of a
    /// price vector, via fresh oracle solves. `None` if the price violates a
    /// scenario's participation constraint.
    pub fn surrogate_objective(&self, price: &[f64]) -> Result<Option<f64>, ReformulateError> {
        let mut total = 0.0;
        let s_count = self.spec.scenarios.len();
        for (i, theta) in self.spec.scenarios.iter().enumerate() {
            let sol = solve_surrogate(theta, price, self.spec.kappa, theta.t_d, false)
                .map_err(ReformulateError::Oracle)?;
            if sol.j > self.j_flat_surrogate[i] + 1e-9 {
                return Ok(None);
            }
            total += self.scenario_term(i, theta, price, &sol);
        }
        Ok(Some(total / s_count as f64))
    }

    fn scenario_term(
        &self,
        i: usize,
        theta: &ConsumerType,
        price: &[f64],
        sol: &SurrogateSolution,
    ) -> f64 {
        let n = theta.n_steps();
        let v_term = match self.spec.objective_mode {
            ObjectiveMode::Peak => {
                let (t1, t2) = self.spec.peak_window;
                sol.u[t1..=t2].iter().sum::<f64>()
            }
            ObjectiveMode::Variance => {
                let m_i = self.m_theta[i];
                sol.u
                    .iter()
                    .zip(&theta.b)
                    .map(|(&u, &b)| (b + u - m_i).abs())
                    .sum::<f64>()
                    / n as f64
            }
        };
        let revenue: f64 = price.iter().zip(&sol.u).map(|(c, u)| c * u).sum();
        v_term - self.spec.lambda * revenue
    }

    /// Builds a fully feasible MILP assignment for a given structure-feasible
    /// price vector: primal and dual values from the per-scenario oracles,
    /// binaries from the activity pattern, `r = c*u` exactly. Returns `None`
    /// when a scenario's participation constraint rejects the price or the
    /// assembled point fails the model's own feasibility check.
    pub fn assemble_assignment(&self, price: &[f64]) -> Option<Vec<f64>> {
        let mut x = vec![0.0; self.model.n_vars()];
        for (k, &cv) in self.c_vars.iter().enumerate() {
            x[cv.0] = price[k];
        }
        let act = 1e-9;
        for (i, theta) in self.spec.scenarios.iter().enumerate() {
            let sol = solve_surrogate(theta, price, self.spec.kappa, theta.t_d, false).ok()?;
            if sol.j > self.j_flat_surrogate[i] + 1e-9 {
                return None;
            }
            let h = &self.handles[i];
            let n = theta.n_steps();
            for k in 0..n {
                x[h.u[k].0] = sol.u[k];
                x[h.t[k].0] = sol.t[k];
                x[h.s[k].0] = sol.s[k];
                x[h.alpha[k].0] = sol.alpha[k];
                x[h.beta[k].0] = sol.beta[k];
                x[h.a_bin[k].0] = if sol.s[k] - (sol.t[k] - theta.t_d) <= act {
                    1.0
                } else {
                    0.0
                };
                x[h.b_bin[k].0] = if sol.s[k] + (sol.t[k] - theta.t_d) <= act {
                    1.0
                } else {
                    0.0
                };
                x[h.r[k].0] = price[k] * sol.u[k];
            }
            for k in 0..n - 1 {
                x[h.nu[k].0] = sol.nu[k];
                x[h.mu_hi[k].0] = sol.mu_hi[k];
                x[h.mu_lo[k].0] = sol.mu_lo[k];
                x[h.eta[k].0] = if sol.u[k] >= theta.u_max - act { 1.0 } else { 0.0 };
                x[h.zeta[k].0] = if sol.u[k] <= act { 1.0 } else { 0.0 };
            }
            for k in 1..n {
                x[h.xi_hi[k - 1].0] = sol.xi_hi[k];
                x[h.xi_lo[k - 1].0] = sol.xi_lo[k];
                x[h.x_bin[k - 1].0] = if sol.t[k] >= theta.t_hi - act { 1.0 } else { 0.0 };
                x[h.y_bin[k - 1].0] = if sol.t[k] <= theta.t_lo + act { 1.0 } else { 0.0 };
            }
            if !h.dev.is_empty() {
                let m_i = self.m_theta[i];
                for k in 0..n {
                    x[h.dev[k].0] = (theta.b[k] + sol.u[k] - m_i).abs();
                }
            }
        }
        if self.model.max_violation(&x) > 1e-7 {
            return None;
        }
        Some(x)
    }

    /// Reads the price vector out of a full assignment.
    pub fn price_of(&self, x: &[f64]) -> Vec<f64> {
        self.c_vars.iter().map(|&v| x[v.0]).collect()
    }
}

/// Oracle-evaluated metrics of a designed tariff, filled by the evaluation
/// harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrueMetrics {
    pub peak_load: f64,
    pub load_variance: f64,
    pub revenue_loss: f64,
}

/// Serializable summary of the MILP solve behind a design.
#[derive(Debug, Clone, Serialize)]
pub struct MilpSummary {
    pub status: crate::milp::MilpStatus,
    pub objective_value: Option<f64>,
    pub best_bound: Option<f64>,
    pub gap: Option<f64>,
    pub nodes: usize,
    pub lp_pivots: u64,
}

impl From<&MilpSolution> for MilpSummary {
    fn from(sol: &MilpSolution) -> Self {
        MilpSummary {
            status: sol.status,
            objective_value: sol.objective_value,
            best_bound: sol.best_bound,
            gap: sol.gap,
            nodes: sol.stats.nodes,
            lp_pivots: sol.stats.lp_pivots,
        }
    }
}

/// A designed tariff with its solver diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct DesignResult {
    pub price: PriceSignal,
    pub milp: MilpSummary,
    /// Surrogate SAA objective at the returned price (V-term minus
    /// lambda-weighted revenue, oracle-evaluated).
    pub surrogate_objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_metrics: Option<TrueMetrics>,
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::thermal::comfort_bounds;

    /// Deterministic micro design spec used across the reformulation tests.
    pub fn micro_spec(n: usize, scenario_count: usize, structure: PriceKind) -> DesignSpec {
        let mut scenarios = Vec::new();
        for i in 0..scenario_count {
            let room = if i % 2 == 0 {
                crate::thermal::test_support::room1()
            } else {
                crate::thermal::test_support::room2()
            };
            let flexible = i % 3 == 2;
            let w = 29.0 + i as f64;
            let q = 23.0 * (1.0 - room.k_r) - room.k_w * w + 0.8 + 0.2 * i as f64;
            let t_d = 24.0;
            let (t_lo, t_hi) = comfort_bounds(t_d, flexible);
            scenarios.push(ConsumerType {
                thermal: room,
                w: vec![w; n],
                q: vec![q; n],
                b: vec![0.4; n],
                gamma: 0.4 + 0.1 * i as f64,
                t_d,
                t_lo,
                t_hi,
                u_max: 3.0,
                flexible,
            });
        }
        DesignSpec {
            objective_mode: ObjectiveMode::Peak,
            structure,
            lambda: 1.0,
            constants: GlobalConstants::default(),
            peak_window: (n / 3, n / 2),
            flat_price: 10.0,
            scenarios,
            kappa: 3.0,
            big_m_policy: BigMPolicy::default(),
            grid: TimeGrid {
                n_steps: n,
                step_minutes: (1440 / n as u32).max(1),
                start_clock_time: 0,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::micro_spec;
    use super::*;
    use crate::milp::{solve_milp, LpOptions, LpOutcome, MilpParams};

    #[test]
    fn big_m_examples() {
        let theta = {
            let mut t = micro_spec(24, 1, PriceKind::Pp).scenarios.remove(0);
            t.gamma = 0.0;
            t
        };
        let constants = GlobalConstants::default();
        let m = compute_big_m(&theta, &constants, 3.0, BigMPolicy::Derived { safety: 1.0 }).unwrap();
        // gamma = 0: nu bound is the pure geometric tracking majorization
        let expect = 3.0 * (1.0 - 0.63f64.powi(24)) / (1.0 - 0.63);
        assert!((m.nu - expect).abs() < 1e-9, "nu {} vs {}", m.nu, expect);
        assert!(m.xi >= 3.0);

        // two-step horizon: the xi bound still dominates kappa
        let theta2 = micro_spec(2, 1, PriceKind::Pp).scenarios.remove(0);
        let m2 = compute_big_m(&theta2, &constants, 3.0, BigMPolicy::default()).unwrap();
        assert!(m2.xi >= 3.0);

        // doubling c_hi never decreases the mu bound
        let wide = GlobalConstants {
            c_hi: 40.0,
            ..constants
        };
        let theta3 = micro_spec(8, 1, PriceKind::Pp).scenarios.remove(0);
        let m_narrow = compute_big_m(&theta3, &constants, 3.0, BigMPolicy::default()).unwrap();
        let m_wide = compute_big_m(&theta3, &wide, 3.0, BigMPolicy::default()).unwrap();
        assert!(m_wide.mu >= m_narrow.mu);

        assert!(matches!(
            compute_big_m(&theta3, &constants, 3.0, BigMPolicy::Fixed(-1.0)),
            Err(ReformulateError::Parameter(_))
        ));
    }

    #[test]
    fn mccormick_rows_match_hand_evaluation() {
        // c_lo=7, c_hi=20, u_max=3, c=13.5, u=1.5: bounds from the four rows
        let mut model = MilpModel::new();
        let c = model.add_var("c", 13.5, 13.5);
        let u = model.add_var("u", 1.5, 1.5);
        let r = add_mccormick(&mut model, c, u, (0.0, 3.0), (7.0, 20.0), 0, 0);
        model.set_objective(vec![(r, 1.0)]);
        let lo = crate::milp::solve_lp(&model, &LpOptions::default())
            .unwrap()
            .expect_optimal()
            .x[r.0];
        model.set_objective(vec![(r, -1.0)]);
        let hi = crate::milp::solve_lp(&model, &LpOptions::default())
            .unwrap()
            .expect_optimal()
            .x[r.0];
        assert!((lo - 10.5).abs() < 1e-9, "lower envelope {lo}");
        assert!((hi - 30.0).abs() < 1e-9, "upper envelope {hi}");
        let product = 13.5 * 1.5;
        assert!(lo <= product && product <= hi);

        // envelope is exact on the c = c_lo facet
        let mut model = MilpModel::new();
        let c = model.add_var("c", 7.0, 7.0);
        let u = model.add_var("u", 1.2, 1.2);
        let r = add_mccormick(&mut model, c, u, (0.0, 3.0), (7.0, 20.0), 0, 0);
        model.set_objective(vec![(r, 1.0)]);
        let lo = crate::milp::solve_lp(&model, &LpOptions::default())
            .unwrap()
            .expect_optimal()
            .x[r.0];
        model.set_objective(vec![(r, -1.0)]);
        let hi = crate::milp::solve_lp(&model, &LpOptions::default())
            .unwrap()
            .expect_optimal()
            .x[r.0];
        assert!((lo - 8.4).abs() < 1e-9 && (hi - 8.4).abs() < 1e-9);
    }

    #[test]
    fn price_structure_pp_leaves_two_free_levels() {
        let mut model = MilpModel::new();
        let c: Vec<VarId> = (0..4).map(|k| model.add_var(format!("c{k}"), 7.0, 20.0)).collect();
        add_price_structure(
            &mut model,
            &c,
            PriceKind::Pp,
            &GlobalConstants::default(),
            (1, 2),
        );
        // N=4, window {1,2}: c2=c1 and c3=c0 -> exactly two equality rows
        assert_eq!(model.n_rows(), 2);
    }

    #[test]
    fn price_structure_rp_ramp_rows() {
        let constants = GlobalConstants::default();
        let check = |values: [f64; 3]| {
            let mut model = MilpModel::new();
            let c: Vec<VarId> = values
                .iter()
                .enumerate()
                .map(|(k, &v)| model.add_var(format!("c{k}"), v, v))
                .collect();
            add_price_structure(&mut model, &c, PriceKind::Rp, &constants, (0, 0));
            matches!(
                crate::milp::solve_lp(&model, &LpOptions::default()).unwrap(),
                LpOutcome::Optimal(_)
            )
        };
        assert!(check([7.0, 8.0, 7.0]));
        assert!(!check([7.0, 9.0, 7.0]));
    }

    #[test]
    fn kkt_block_recovers_oracle_input_under_fixed_price() {
        let spec = micro_spec(6, 1, PriceKind::Pp);
        let theta = &spec.scenarios[0];
        let price = vec![9.0, 9.0, 16.0, 16.0, 9.0, 9.0];
        let mut model = MilpModel::new();
        let c_vars: Vec<VarId> = price
            .iter()
            .enumerate()
            .map(|(k, &v)| model.add_var(format!("c{k}"), v, v))
            .collect();
        let big_m = compute_big_m(theta, &spec.constants, spec.kappa, spec.big_m_policy).unwrap();
        let h = embed_kkt(&mut model, theta, &c_vars, &big_m, spec.kappa, theta.t_d, 0).unwrap();
        // minimum-energy selection mirrors the oracle's tie-break
        model.set_objective(h.u.iter().map(|&v| (v, 1.0)).collect());
        let sol = solve_milp(&model, &MilpParams::default()).unwrap();
        let x = sol.incumbent.expect("KKT system must be feasible");
        let oracle = solve_surrogate(theta, &price, spec.kappa, theta.t_d, true).unwrap();
        for k in 0..6 {
            assert!(
                (x[h.u[k].0] - oracle.u[k]).abs() < 1e-4,
                "u[{k}]: milp {} vs oracle {}",
                x[h.u[k].0],
                oracle.u[k]
            );
        }
    }

    #[test]
    fn build_design_milp_counts_and_assignment() {
        let spec = micro_spec(6, 2, PriceKind::Pp);
        let rm = build_design_milp(&spec).unwrap();
        let n = 6;
        let s = 2;
        // binaries: 4(N-1) + 2N per scenario
        assert_eq!(rm.model.n_binaries(), s * (4 * (n - 1) + 2 * n));
        // flat price must always assemble into a feasible assignment
        let flat = vec![spec.flat_price; n];
        let x = rm.assemble_assignment(&flat).expect("flat assembles");
        assert!(rm.model.max_violation(&x) <= 1e-7);
        assert!(rm.model.max_integrality_violation(&x) <= 1e-9);
        // participation at flat holds with equality-ish slack
        let obj = rm.surrogate_objective(&flat).unwrap();
        assert!(obj.is_some());
    }

    #[test]
    fn scenario_rejection_names_the_culprit() {
        let mut spec = micro_spec(6, 2, PriceKind::Pp);
        // overheat scenario 1 beyond its cooling capacity
        spec.scenarios[1].w = vec![60.0; 6];
        spec.scenarios[1].q = vec![20.0; 6];
        spec.scenarios[1].u_max = 0.05;
        match build_design_milp(&spec) {
            Err(ReformulateError::ScenarioRejected { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected scenario rejection, got {other:?}"),
        }
    }

    #[test]
    fn lambda_zero_peak_objective_touches_only_window_inputs() {
        let mut spec = micro_spec(6, 1, PriceKind::Pp);
        spec.lambda = 0.0;
        let rm = build_design_milp(&spec).unwrap();
        let (t1, t2) = spec.peak_window;
        let window_u: Vec<usize> = (t1..=t2).map(|k| rm.handles[0].u[k].0).collect();
        for &(VarId(j), coeff) in &rm.model.objective {
            if coeff != 0.0 {
                assert!(
                    window_u.contains(&j),
                    "objective touches non-window variable {}",
                    rm.model.variables[j].name
                );
            }
        }
    }
}
