//! PID position control of a linear actuator.
//!
//! The controller output is a rod velocity. [`actuate`] integrates it after
//! limiting it to the actuator slew rate, and clamps the rod to its stroke.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains {
            kp: 8.0,
            ki: 2.0,
            kd: 0.1,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("gain must be finite and non-negative, got {v}"),
                });
            }
        }
        if self.kp == 0.0 && self.ki == 0.0 && self.kd == 0.0 {
            return Err(Error::InvalidParameter {
                name: "kp",
                reason: "at least one PID gain must be non-zero".into(),
            });
        }
        Ok(())
    }

    /// Default bound on the accumulated error: `l_total / ki`, or unbounded
    /// without an integral term.
    pub fn integral_cap(&self, l_total: f64) -> f64 {
        if self.ki > 0.0 {
            l_total / self.ki
        } else {
            f64::INFINITY
        }
    }
}

/// Default actuator speed limit, m/s.
pub const DEFAULT_SLEW_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PistonState {
    /// Current rod extension.
    pub length: f64,
    pub target: f64,
    /// Accumulated error, meter-seconds.
    pub integral: f64,
    pub prev_error: f64,
    pub l_total: f64,
    pub slew_limit: f64,
    pub integral_cap: f64,
}

impl PistonState {
    pub fn new(length: f64, l_total: f64, slew_limit: f64, integral_cap: f64) -> Result<Self> {
        ensure_positive("l_total", l_total)?;
        ensure_positive("slew_limit", slew_limit)?;
        if !(integral_cap > 0.0) {
            return Err(Error::InvalidParameter {
                name: "integral_cap",
                reason: format!("must be positive, got {integral_cap}"),
            });
        }
        if !(0.0..=l_total).contains(&length) {
            return Err(Error::InvalidState(format!(
                "piston length {length} outside stroke [0, {l_total}]"
            )));
        }
        Ok(PistonState {
            length,
            target: length,
            integral: 0.0,
            prev_error: 0.0,
            l_total,
            slew_limit,
            integral_cap,
        })
    }

    pub fn error(&self) -> f64 {
        self.target - self.length
    }
}

/// Output of one controller evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidOutput {
    /// Commanded rod velocity, m/s.
    pub command: f64,
    /// The integrator held its value because the command was saturating
    /// in the direction of the error.
    pub integral_held: bool,
}

/// Evaluates `kp*e + ki*integral(e) + kd*de/dt` and updates the controller
/// memory.
///
/// The integral is clamped to `integral_cap`. It is also held while the
/// command already exceeds the slew limit in the direction of the error,
/// so the slew-limited transient does not wind it up.
pub fn pid_step(state: &mut PistonState, gains: &PidGains, dt: f64) -> Result<PidOutput> {
    ensure_positive("dt", dt)?;
    let e = state.target - state.length;
    let derivative = (e - state.prev_error) / dt;
    let cap = state.integral_cap;
    let integral = (state.integral + e * dt).clamp(-cap, cap);
    let command = gains.kp * e + gains.ki * integral + gains.kd * derivative;

    let winding = command.abs() > state.slew_limit && command * e > 0.0;
    let out = if winding {
        PidOutput {
            command: gains.kp * e + gains.ki * state.integral + gains.kd * derivative,
            integral_held: true,
        }
    } else {
        state.integral = integral;
        PidOutput {
            command,
            integral_held: false,
        }
    };
    state.prev_error = e;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuateFlags {
    pub slew_clamped: bool,
    pub stroke_clamped: bool,
}

/// Moves the rod at the commanded velocity for `dt`, honoring the slew
/// limit and the stroke.
pub fn actuate(state: &mut PistonState, u: f64, dt: f64) -> Result<ActuateFlags> {
    ensure_positive("dt", dt)?;
    if !u.is_finite() {
        return Err(Error::InvalidState(format!("piston command must be finite, got {u}")));
    }
    let rate = u.clamp(-state.slew_limit, state.slew_limit);
    let next = state.length + rate * dt;
    let clamped = next.clamp(0.0, state.l_total);
    state.length = clamped;
    Ok(ActuateFlags {
        slew_clamped: rate != u,
        stroke_clamped: clamped != next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L_TOTAL: f64 = 0.25;
    const DT: f64 = 0.02;

    fn piston(length: f64) -> PistonState {
        PistonState::new(length, L_TOTAL, DEFAULT_SLEW_LIMIT, PidGains::default().integral_cap(L_TOTAL)).unwrap()
    }

    #[test]
    fn zero_error_zero_command() {
        let mut s = piston(0.1);
        let out = pid_step(&mut s, &PidGains::default(), DT).unwrap();
        assert_eq!(out.command, 0.0);
    }

    #[test]
    fn proportional_only() {
        let mut s = piston(0.0);
        s.target = 0.05;
        s.prev_error = 0.05;
        let out = pid_step(&mut s, &PidGains { kp: 2.0, ki: 0.0, kd: 0.0 }, DT).unwrap();
        assert!((out.command - 0.1).abs() < 1e-15);
    }

    #[test]
    fn unsaturated_update_matches_formula() {
        let gains = PidGains::default();
        let mut s = piston(0.12);
        s.target = 0.1205;
        s.integral = 0.001;
        s.prev_error = 0.0004;
        let e: f64 = 0.1205 - 0.12;
        let integral = 0.001 + e * DT;
        let expected = gains.kp * e + gains.ki * integral + gains.kd * (e - 0.0004) / DT;
        let out = pid_step(&mut s, &gains, DT).unwrap();
        assert!(!out.integral_held);
        assert!((out.command - expected).abs() < 1e-15);
        assert!((s.integral - integral).abs() < 1e-18);
        assert_eq!(s.prev_error, e);
    }

    #[test]
    fn integral_respects_cap() {
        let gains = PidGains { kp: 0.0, ki: 1.0, kd: 0.0 };
        let mut s = PistonState::new(0.0, L_TOTAL, 1e9, 0.01).unwrap();
        s.target = 0.2;
        for _ in 0..1000 {
            pid_step(&mut s, &gains, DT).unwrap();
        }
        assert!(s.integral <= 0.01);
    }

    #[test]
    fn actuate_examples() {
        let mut s = piston(0.1);
        actuate(&mut s, 0.0, DT).unwrap();
        assert_eq!(s.length, 0.1);

        let mut s = piston(0.124);
        let f = actuate(&mut s, 1.0, DT).unwrap();
        assert!((s.length - 0.125).abs() < 1e-15);
        assert!(f.slew_clamped && !f.stroke_clamped);

        let mut s = piston(L_TOTAL);
        let f = actuate(&mut s, 0.01, DT).unwrap();
        assert_eq!(s.length, L_TOTAL);
        assert!(f.stroke_clamped);
    }

    #[test]
    fn rejects_bad_state() {
        assert!(PistonState::new(0.3, L_TOTAL, 0.05, 1.0).is_err());
        assert!(PistonState::new(0.1, 0.0, 0.05, 1.0).is_err());
        assert!(PidGains { kp: 0.0, ki: 0.0, kd: 0.0 }.validate().is_err());
        assert!(PidGains { kp: -1.0, ki: 0.0, kd: 0.0 }.validate().is_err());
    }

    /// Closed-loop trace of (pid_step, actuate) from `start` towards `target`.
    fn trace(gains: PidGains, start: f64, target: f64, seconds: f64) -> Vec<f64> {
        let mut s = piston(start);
        s.target = target;
        let mut out = Vec::new();
        for _ in 0..(seconds / DT).round() as usize {
            let u = pid_step(&mut s, &gains, DT).unwrap().command;
            actuate(&mut s, u, DT).unwrap();
            out.push(s.length);
        }
        out
    }

    /// First time after which the trace stays within `band` of `target`.
    fn settling_time(trace: &[f64], target: f64, band: f64) -> f64 {
        let last_out = trace.iter().rposition(|l| (l - target).abs() > band);
        match last_out {
            Some(i) => (i + 1) as f64 * DT,
            None => 0.0,
        }
    }

    /// Independent scalar re-statement of the loop used to freeze the
    /// expected settling time.
    fn oracle_step_response(seconds: f64) -> Vec<f64> {
        let (kp, ki, kd) = (8.0, 2.0, 0.1);
        let (mut x, mut i, mut pe) = (0.0f64, 0.0f64, 0.0f64);
        let cap = L_TOTAL / ki;
        let mut out = Vec::new();
        for _ in 0..(seconds / DT).round() as usize {
            let e = 0.125 - x;
            let i_try = (i + e * DT).max(-cap).min(cap);
            let mut u = kp * e + ki * i_try + kd * (e - pe) / DT;
            if u.abs() > DEFAULT_SLEW_LIMIT && u * e > 0.0 {
                u = kp * e + ki * i + kd * (e - pe) / DT;
            } else {
                i = i_try;
            }
            pe = e;
            let v = u.max(-DEFAULT_SLEW_LIMIT).min(DEFAULT_SLEW_LIMIT);
            x = (x + v * DT).max(0.0).min(L_TOTAL);
            out.push(x);
        }
        out
    }

    #[test]
    fn step_response_settles() {
        let t = trace(PidGains::default(), 0.0, 0.125, 20.0);
        let oracle = oracle_step_response(20.0);
        let ts = settling_time(&t, 0.125, 0.02 * 0.125);
        let ts_oracle = settling_time(&oracle, 0.125, 0.02 * 0.125);
        assert_eq!(ts, ts_oracle);
        // Slew-limited ramp of 0.125 m at 0.05 m/s takes 2.5 s.
        assert!(ts > 2.4 && ts < 3.5, "settling time {ts}");
        // Zero steady-state error: inside 0.1% of stroke and staying there.
        let tight = settling_time(&t, 0.125, 0.001 * L_TOTAL);
        assert!(tight < 10.0, "tight settling {tight}");
        assert!(t.iter().all(|l| (0.0..=L_TOTAL).contains(l)));
    }

    #[test]
    fn proportional_path_does_not_overshoot() {
        let gains = PidGains { ki: 0.0, kd: 0.0, ..PidGains::default() };
        for &(a, b) in &[(0.0, 0.125), (0.25, 0.01), (0.1, 0.1004)] {
            let t = trace(gains, a, b, 10.0);
            let sign = (b - a).signum();
            assert!(t.iter().all(|l| (b - l) * sign >= 0.0), "overshoot {a} -> {b}");
        }
    }

    #[test]
    fn anti_windup_recovery() {
        let gains = PidGains::default();
        let nominal = settling_time(&trace(gains, 0.0, 0.125, 20.0), 0.125, 0.0025);

        let mut s = piston(0.125);
        s.target = 0.4;
        for _ in 0..(10.0 / DT) as usize {
            let u = pid_step(&mut s, &gains, DT).unwrap().command;
            actuate(&mut s, u, DT).unwrap();
        }
        assert_eq!(s.length, L_TOTAL);
        s.target = 0.125;
        let mut t = Vec::new();
        for _ in 0..(20.0 / DT) as usize {
            let u = pid_step(&mut s, &gains, DT).unwrap().command;
            actuate(&mut s, u, DT).unwrap();
            t.push(s.length);
        }
        let recovery = settling_time(&t, 0.125, 0.0025);
        assert!(recovery <= 2.0 * nominal, "recovery {recovery} vs nominal {nominal}");
    }

    proptest! {
        #[test]
        fn stroke_holds_for_any_command(start in 0.0f64..0.25, u in prop::collection::vec(-1e6f64..1e6, 1..50)) {
            let mut s = piston(start);
            for v in u {
                actuate(&mut s, v, DT).unwrap();
                prop_assert!((0.0..=L_TOTAL).contains(&s.length));
            }
        }
    }
}
