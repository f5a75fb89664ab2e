//! Consumer-side domain types and the deterministic room-temperature dynamics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by domain-type validation and the trajectory operations.
#[derive(Debug, Error)]
pub enum DomainError {
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
}

fn invalid(what: &'static str, detail: impl Into<String>) -> DomainError {
    DomainError::Invalid {
        what,
        detail: detail.into(),
    }
}

/// Uniform time discretization of the design horizon.
///
/// Step indices are 0-based throughout the crate; `start_clock_time` is
/// minutes since midnight of the first step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub n_steps: usize,
    pub step_minutes: u32,
    #[serde(default)]
    pub start_clock_time: u32,
}

impl TimeGrid {
    /// Grid spanning exactly 24 h starting at midnight. `step_minutes` must
    /// divide a day.
    pub fn daily(step_minutes: u32) -> Result<Self, DomainError> {
        if step_minutes == 0 || 1440 % step_minutes != 0 {
            return Err(invalid(
                "TimeGrid",
                format!("step_minutes {step_minutes} does not divide 1440"),
            ));
        }
        let grid = TimeGrid {
            n_steps: (1440 / step_minutes) as usize,
            step_minutes,
            start_clock_time: 0,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.n_steps < 2 {
            return Err(invalid("TimeGrid", "n_steps must be at least 2"));
        }
        if self.step_minutes == 0 {
            return Err(invalid("TimeGrid", "step_minutes must be positive"));
        }
        Ok(())
    }

    pub fn span_minutes(&self) -> u64 {
        self.n_steps as u64 * self.step_minutes as u64
    }

    /// Clock time (minutes since midnight, wrapped to a day) at which step `n` starts.
    pub fn clock_of_step(&self, n: usize) -> u32 {
        ((self.start_clock_time as u64 + n as u64 * self.step_minutes as u64) % 1440) as u32
    }

    /// Inclusive 0-based index pair of the steps whose start times fall in the
    /// clock window `[start_min, end_min)`. Returns `None` if no step does.
    pub fn steps_in_clock_window(&self, start_min: u32, end_min: u32) -> Option<(usize, usize)> {
        let mut first = None;
        let mut last = None;
        for n in 0..self.n_steps {
            let t = self.clock_of_step(n);
            if t >= start_min && t < end_min {
                if first.is_none() {
                    first = Some(n);
                }
                last = Some(n);
            }
        }
        Some((first?, last?))
    }
}

/// Coefficients of the linear room-temperature model
/// `T' = k_r*T + cooling_sign*k_c*u + k_w*w + q`.
///
/// `k_c` is stored as a magnitude; `cooling_sign = -1` makes the input cool
/// the room (the published coefficients are magnitudes from a cooling
/// climate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalParams {
    pub k_r: f64,
    pub k_c: f64,
    pub k_w: f64,
    #[serde(default = "default_cooling_sign")]
    pub cooling_sign: f64,
}

fn default_cooling_sign() -> f64 {
    -1.0
}

impl ThermalParams {
    pub fn new(k_r: f64, k_c: f64, k_w: f64) -> Result<Self, DomainError> {
        let p = ThermalParams {
            k_r,
            k_c,
            k_w,
            cooling_sign: -1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.k_r > 0.0 && self.k_r < 1.0) {
            return Err(invalid("ThermalParams", format!("k_r {} not in (0,1)", self.k_r)));
        }
        if !(self.k_c > 0.0) {
            return Err(invalid("ThermalParams", format!("k_c {} not positive", self.k_c)));
        }
        if !(0.0..=1.0).contains(&self.k_w) {
            return Err(invalid("ThermalParams", format!("k_w {} not in [0,1]", self.k_w)));
        }
        if self.cooling_sign != 1.0 && self.cooling_sign != -1.0 {
            return Err(invalid(
                "ThermalParams",
                format!("cooling_sign {} must be +1 or -1", self.cooling_sign),
            ));
        }
        Ok(())
    }
}

/// Comfort band around the desired temperature: +/-2 C for an inflexible
/// consumer, +/-3 C for a flexible one.
pub fn comfort_bounds(t_d: f64, flexible: bool) -> (f64, f64) {
    let half = if flexible { 3.0 } else { 2.0 };
    (t_d - half, t_d + half)
}

/// The consumer's private type: thermal coefficients, disturbance and load
/// trajectories, comfort band and cost tradeoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumerType {
    pub thermal: ThermalParams,
    /// Outside temperature per step, deg C.
    pub w: Vec<f64>,
    /// Occupancy heat load per step, deg C equivalent.
    pub q: Vec<f64>,
    /// Nondeferrable electric load per step.
    pub b: Vec<f64>,
    /// Comfort-vs-cost tradeoff weight, >= 0.
    pub gamma: f64,
    #[serde(rename = "T_d")]
    pub t_d: f64,
    #[serde(rename = "T_lo")]
    pub t_lo: f64,
    #[serde(rename = "T_hi")]
    pub t_hi: f64,
    /// Maximum control input.
    pub u_max: f64,
    pub flexible: bool,
}

impl ConsumerType {
    pub fn n_steps(&self) -> usize {
        self.w.len()
    }

    /// Comfort half-width of this consumer's band.
    pub fn comfort_half_width(&self) -> f64 {
        if self.flexible {
            3.0
        } else {
            2.0
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        self.thermal.validate()?;
        let n = self.w.len();
        if n < 2 {
            return Err(invalid("ConsumerType", "horizon must have at least 2 steps"));
        }
        if self.q.len() != n {
            return Err(DomainError::LengthMismatch {
                what: "ConsumerType.q",
                expected: n,
                got: self.q.len(),
            });
        }
        if self.b.len() != n {
            return Err(DomainError::LengthMismatch {
                what: "ConsumerType.b",
                expected: n,
                got: self.b.len(),
            });
        }
        if self.b.iter().any(|&x| x < 0.0) {
            return Err(invalid("ConsumerType", "b must be nonnegative elementwise"));
        }
        if self.gamma < 0.0 {
            return Err(invalid("ConsumerType", "gamma must be nonnegative"));
        }
        if !(self.u_max > 0.0) {
            return Err(invalid("ConsumerType", "u_max must be positive"));
        }
        let (lo, hi) = comfort_bounds(self.t_d, self.flexible);
        if (self.t_lo - lo).abs() > 1e-9 || (self.t_hi - hi).abs() > 1e-9 {
            return Err(invalid(
                "ConsumerType",
                format!(
                    "comfort band [{}, {}] does not match {} band around T_d={}",
                    self.t_lo,
                    self.t_hi,
                    if self.flexible { "+/-3" } else { "+/-2" },
                    self.t_d
                ),
            ));
        }
        Ok(())
    }
}

/// Structural kind of a tariff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceKind {
    Flat,
    Pp,
    Rp,
}

impl std::fmt::Display for PriceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PriceKind::Flat => write!(f, "flat"),
            PriceKind::Pp => write!(f, "pp"),
            PriceKind::Rp => write!(f, "rp"),
        }
    }
}

/// A length-N tariff with its structural kind.
///
/// `peak_window` is an inclusive 0-based step index pair and is present only
/// for `pp` signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSignal {
    pub c: Vec<f64>,
    pub kind: PriceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_window: Option<(usize, usize)>,
}

const STRUCTURE_TOL: f64 = 1e-9;

impl PriceSignal {
    pub fn flat(value: f64, n: usize) -> Self {
        PriceSignal {
            c: vec![value; n],
            kind: PriceKind::Flat,
            peak_window: None,
        }
    }

    pub fn peak(off_peak: f64, on_peak: f64, window: (usize, usize), n: usize) -> Self {
        let mut c = vec![off_peak; n];
        for entry in c.iter_mut().take(window.1 + 1).skip(window.0) {
            *entry = on_peak;
        }
        PriceSignal {
            c,
            kind: PriceKind::Pp,
            peak_window: Some(window),
        }
    }

    pub fn real_time(c: Vec<f64>) -> Self {
        PriceSignal {
            c,
            kind: PriceKind::Rp,
            peak_window: None,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.c.len()
    }

    /// Checks the structural invariant of `kind`; `rho` is the RP ramp bound.
    pub fn validate(&self, rho: f64) -> Result<(), DomainError> {
        let n = self.c.len();
        if n == 0 {
            return Err(invalid("PriceSignal", "empty price vector"));
        }
        match self.kind {
            PriceKind::Flat => {
                if self.c.iter().any(|&v| (v - self.c[0]).abs() > STRUCTURE_TOL) {
                    return Err(invalid("PriceSignal", "flat tariff has unequal entries"));
                }
            }
            PriceKind::Pp => {
                let (t1, t2) = self
                    .peak_window
                    .ok_or_else(|| invalid("PriceSignal", "pp tariff without peak_window"))?;
                if t1 > t2 || t2 >= n {
                    return Err(invalid(
                        "PriceSignal",
                        format!("peak_window ({t1},{t2}) out of range for N={n}"),
                    ));
                }
                let on = self.c[t1];
                let off_anchor = if t1 > 0 { self.c[0] } else { *self.c.last().unwrap() };
                for (i, &v) in self.c.iter().enumerate() {
                    let want = if i >= t1 && i <= t2 { on } else { off_anchor };
                    if (v - want).abs() > STRUCTURE_TOL {
                        return Err(invalid(
                            "PriceSignal",
                            format!("pp structure violated at step {i}"),
                        ));
                    }
                }
            }
            PriceKind::Rp => {
                if (self.c[0] - self.c[n - 1]).abs() > STRUCTURE_TOL {
                    return Err(invalid("PriceSignal", "rp tariff must have c_1 = c_N"));
                }
                for i in 0..n - 1 {
                    if (self.c[i + 1] - self.c[i]).abs() > rho + STRUCTURE_TOL {
                        return Err(invalid(
                            "PriceSignal",
                            format!("rp ramp bound exceeded between steps {i} and {}", i + 1),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks `c` lies inside `[c_lo, c_hi]`.
    pub fn validate_bounds(&self, c_lo: f64, c_hi: f64) -> Result<(), DomainError> {
        for (i, &v) in self.c.iter().enumerate() {
            if v < c_lo - STRUCTURE_TOL || v > c_hi + STRUCTURE_TOL {
                return Err(invalid(
                    "PriceSignal",
                    format!("price {v} at step {i} outside [{c_lo}, {c_hi}]"),
                ));
            }
        }
        Ok(())
    }

    /// Refines the signal onto a grid `factor` times finer by repeating each
    /// price. Structure is preserved: a PP window maps onto the covered fine
    /// steps, and RP ramps only shrink.
    pub fn lift(&self, factor: usize) -> PriceSignal {
        assert!(factor >= 1);
        let mut c = Vec::with_capacity(self.c.len() * factor);
        for &v in &self.c {
            for _ in 0..factor {
                c.push(v);
            }
        }
        PriceSignal {
            c,
            kind: self.kind,
            peak_window: self
                .peak_window
                .map(|(t1, t2)| (t1 * factor, (t2 + 1) * factor - 1)),
        }
    }
}

/// Constants known to every party.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalConstants {
    /// Input-to-energy conversion constant.
    pub p: f64,
    /// RP ramp bound, price units per step.
    pub rho: f64,
    pub c_lo: f64,
    pub c_hi: f64,
}

impl GlobalConstants {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.p > 0.0) {
            return Err(invalid("GlobalConstants", "p must be positive"));
        }
        if !(self.rho > 0.0) {
            return Err(invalid("GlobalConstants", "rho must be positive"));
        }
        if !(self.c_lo > 0.0 && self.c_lo < self.c_hi) {
            return Err(invalid("GlobalConstants", "need 0 < c_lo < c_hi"));
        }
        Ok(())
    }
}

impl Default for GlobalConstants {
    fn default() -> Self {
        // 7..20 PhP price box from the study setting; p and rho are
        // calibration defaults.
        GlobalConstants {
            p: 1.0,
            rho: 1.0,
            c_lo: 7.0,
            c_hi: 20.0,
        }
    }
}

/// One step of the room-temperature recursion.
pub fn step_temperature(t: f64, u: f64, w: f64, q: f64, params: &ThermalParams) -> f64 {
    params.k_r * t + params.cooling_sign * params.k_c * u + params.k_w * w + q
}

/// Rolls the dynamics over the horizon. `out[0] = t_init`, no comfort
/// clamping.
pub fn simulate_trajectory(
    theta: &ConsumerType,
    u: &[f64],
    t_init: f64,
) -> Result<Vec<f64>, DomainError> {
    let n = theta.n_steps();
    if u.len() != n {
        return Err(DomainError::LengthMismatch {
            what: "input trajectory",
            expected: n,
            got: u.len(),
        });
    }
    let mut t = Vec::with_capacity(n);
    t.push(t_init);
    for k in 0..n - 1 {
        let next = step_temperature(t[k], u[k], theta.w[k], theta.q[k], &theta.thermal);
        t.push(next);
    }
    Ok(t)
}

/// Total energy over the horizon, `sum(b_n + p*u_n)`.
pub fn total_energy(
    theta: &ConsumerType,
    u: &[f64],
    constants: &GlobalConstants,
) -> Result<f64, DomainError> {
    let n = theta.n_steps();
    if u.len() != n {
        return Err(DomainError::LengthMismatch {
            what: "input trajectory",
            expected: n,
            got: u.len(),
        });
    }
    Ok(theta
        .b
        .iter()
        .zip(u)
        .map(|(&b, &u)| b + constants.p * u)
        .sum())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Room 1 coefficients from the published model table.
    pub fn room1() -> ThermalParams {
        ThermalParams::new(0.63, 2.64, 0.10).unwrap()
    }

    /// Room 2 coefficients from the published model table.
    pub fn room2() -> ThermalParams {
        ThermalParams::new(0.43, 1.95, 0.18).unwrap()
    }

    pub fn consumer_with(
        thermal: ThermalParams,
        n: usize,
        w: f64,
        q: f64,
        gamma: f64,
        t_d: f64,
        flexible: bool,
        u_max: f64,
    ) -> ConsumerType {
        let (t_lo, t_hi) = comfort_bounds(t_d, flexible);
        ConsumerType {
            thermal,
            w: vec![w; n],
            q: vec![q; n],
            b: vec![0.5; n],
            gamma,
            t_d,
            t_lo,
            t_hi,
            u_max,
            flexible,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_matches_hand_evaluation() {
        // Room 1: 0.63*25 - 2.64*1 + 0.10*30 + 6.78
        let t = step_temperature(25.0, 1.0, 30.0, 6.78, &room1());
        assert!((t - 22.89).abs() < 1e-12, "got {t}");
        // zero case
        assert_eq!(step_temperature(0.0, 0.0, 0.0, 0.0, &room1()), 0.0);
        // Room 2 free response: 0.43*25 + 0.18*30 + 9.44
        let t = step_temperature(25.0, 0.0, 30.0, 9.44, &room2());
        assert!((t - 25.59).abs() < 1e-12, "got {t}");
    }

    #[test]
    fn trajectory_starts_at_t_init_and_approaches_fixed_point() {
        let theta = consumer_with(room1(), 200, 30.0, 6.78, 0.0, 24.0, false, 3.0);
        let u = vec![0.0; 200];
        let t = simulate_trajectory(&theta, &u, 25.0).unwrap();
        assert_eq!(t.len(), 200);
        assert_eq!(t[0], 25.0);
        assert!((t[1] - 25.53).abs() < 1e-9, "T_2 = {}", t[1]);
        let limit: f64 = (0.10 * 30.0 + 6.78) / (1.0 - 0.63);
        assert!((limit - 26.432432432432435).abs() < 1e-12);
        assert!((t[199] - limit).abs() < 1e-9);
        // monotone approach from below the fixed point
        for k in 1..199 {
            assert!(t[k] <= t[k + 1] + 1e-12);
        }
    }

    #[test]
    fn trajectory_length_two_is_definitional() {
        let theta = consumer_with(room2(), 2, 28.0, 9.44, 0.1, 24.0, true, 3.0);
        let t = simulate_trajectory(&theta, &[1.0, 0.0], 23.0).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0], 23.0);
    }

    #[test]
    fn trajectory_rejects_length_mismatch() {
        let theta = consumer_with(room1(), 4, 30.0, 6.78, 0.0, 24.0, false, 3.0);
        assert!(matches!(
            simulate_trajectory(&theta, &[0.0; 3], 24.0),
            Err(DomainError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn superposition_of_input_perturbations() {
        let theta = consumer_with(room1(), 24, 30.0, 6.78, 0.0, 24.0, false, 3.0);
        let base = vec![0.4; 24];
        let mut da = vec![0.0; 24];
        let mut db = vec![0.0; 24];
        da[3] = 0.2;
        db[10] = 0.5;
        let t0 = simulate_trajectory(&theta, &base, 24.0).unwrap();
        let ua: Vec<f64> = base.iter().zip(&da).map(|(a, b)| a + b).collect();
        let ub: Vec<f64> = base.iter().zip(&db).map(|(a, b)| a + b).collect();
        let uab: Vec<f64> = base.iter().zip(&da).zip(&db).map(|((a, b), c)| a + b + c).collect();
        let ta = simulate_trajectory(&theta, &ua, 24.0).unwrap();
        let tb = simulate_trajectory(&theta, &ub, 24.0).unwrap();
        let tab = simulate_trajectory(&theta, &uab, 24.0).unwrap();
        for n in 0..24 {
            let sum_dev = (ta[n] - t0[n]) + (tb[n] - t0[n]);
            assert!((tab[n] - t0[n] - sum_dev).abs() < 1e-9);
        }
    }

    #[test]
    fn total_energy_examples() {
        let mut theta = consumer_with(room1(), 2, 30.0, 6.78, 0.0, 24.0, false, 3.0);
        theta.b = vec![1.0, 1.0];
        let constants = GlobalConstants {
            p: 1.0,
            ..GlobalConstants::default()
        };
        assert_eq!(total_energy(&theta, &[2.0, 0.0], &constants).unwrap(), 4.0);
        assert_eq!(total_energy(&theta, &[0.0, 0.0], &constants).unwrap(), 2.0);

        let mut theta4 = consumer_with(room1(), 4, 30.0, 6.78, 0.0, 24.0, false, 3.0);
        theta4.b = vec![0.0; 4];
        let constants = GlobalConstants {
            p: 2.0,
            ..GlobalConstants::default()
        };
        assert_eq!(total_energy(&theta4, &[1.0; 4], &constants).unwrap(), 8.0);
    }

    #[test]
    fn comfort_bounds_examples() {
        assert_eq!(comfort_bounds(24.0, false), (22.0, 26.0));
        assert_eq!(comfort_bounds(24.0, true), (21.0, 27.0));
        assert_eq!(comfort_bounds(0.0, false), (-2.0, 2.0));
    }

    #[test]
    fn price_signal_structures() {
        let flat = PriceSignal::flat(10.0, 4);
        flat.validate(1.0).unwrap();

        let pp = PriceSignal::peak(8.0, 15.0, (1, 2), 4);
        pp.validate(1.0).unwrap();
        assert_eq!(pp.c, vec![8.0, 15.0, 15.0, 8.0]);

        let rp_ok = PriceSignal::real_time(vec![7.0, 8.0, 7.0]);
        rp_ok.validate(1.0).unwrap();
        let rp_bad = PriceSignal::real_time(vec![7.0, 9.0, 7.0]);
        assert!(rp_bad.validate(1.0).is_err());
        // rho = 0 collapses rp to flat
        let rp_flat = PriceSignal::real_time(vec![7.0, 7.0, 7.0]);
        rp_flat.validate(f64::MIN_POSITIVE).unwrap();
    }

    #[test]
    fn price_lift_preserves_structure() {
        let pp = PriceSignal::peak(8.0, 15.0, (1, 2), 4);
        let fine = pp.lift(4);
        assert_eq!(fine.n_steps(), 16);
        assert_eq!(fine.peak_window, Some((4, 11)));
        fine.validate(1.0).unwrap();

        let rp = PriceSignal::real_time(vec![7.0, 8.0, 8.5, 8.0, 7.0]);
        rp.validate(1.0).unwrap();
        rp.lift(4).validate(1.0).unwrap();
    }

    #[test]
    fn consumer_type_json_round_trip_uses_spec_field_names() {
        let theta = consumer_with(room1(), 3, 30.0, 6.78, 0.05, 24.0, false, 3.0);
        let json = serde_json::to_value(&theta).unwrap();
        for key in ["thermal", "w", "q", "b", "gamma", "T_d", "T_lo", "T_hi", "u_max", "flexible"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        let back: ConsumerType = serde_json::from_value(json).unwrap();
        assert_eq!(back, theta);
        back.validate().unwrap();
    }

    #[test]
    fn consumer_type_validation_rejects_bad_band() {
        let mut theta = consumer_with(room1(), 3, 30.0, 6.78, 0.05, 24.0, false, 3.0);
        theta.t_hi = 27.0;
        assert!(theta.validate().is_err());
    }

    #[test]
    fn clock_window_mapping() {
        let hourly = TimeGrid::daily(60).unwrap();
        // 1pm-4pm on the hourly grid
        assert_eq!(hourly.steps_in_clock_window(780, 960), Some((13, 15)));
        let quarter = TimeGrid::daily(15).unwrap();
        assert_eq!(quarter.steps_in_clock_window(780, 960), Some((52, 63)));
        assert_eq!(quarter.clock_of_step(52), 780);
    }

    proptest! {
        #[test]
        fn total_energy_monotone_in_u(
            base in proptest::collection::vec(0.0f64..2.0, 8),
            bump in 0.0f64..1.0,
            idx in 0usize..8
        ) {
            let theta = consumer_with(room1(), 8, 30.0, 6.78, 0.0, 24.0, false, 3.0);
            let constants = GlobalConstants::default();
            let e0 = total_energy(&theta, &base, &constants).unwrap();
            let mut up = base.clone();
            up[idx] += bump;
            let e1 = total_energy(&theta, &up, &constants).unwrap();
            prop_assert!(e1 >= e0 - 1e-12);
        }

        #[test]
        fn free_response_converges_monotonically(
            w in 0.0f64..40.0,
            q in 0.0f64..10.0,
            t0 in 0.0f64..40.0
        ) {
            let theta = consumer_with(room2(), 64, w, q, 0.0, 24.0, false, 3.0);
            let t = simulate_trajectory(&theta, &vec![0.0; 64], t0).unwrap();
            let limit = (0.18 * w + q) / (1.0 - 0.43);
            let below = t0 <= limit;
            for k in 0..63 {
                if below {
                    prop_assert!(t[k + 1] >= t[k] - 1e-9);
                    prop_assert!(t[k + 1] <= limit + 1e-9);
                } else {
                    prop_assert!(t[k + 1] <= t[k] + 1e-9);
                    prop_assert!(t[k + 1] >= limit - 1e-9);
                }
            }
        }
    }
}
