//! Baseline feedforward steering law: kinematic angle, a first-order
//! understeer term, a first-order longitudinal-acceleration compensation and
//! a static offset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A2rlParams {
    /// Understeer gradient [rad·s²/m].
    pub k_us: f64,
    /// Understeer filter time constant [s].
    pub t_us: f64,
    /// Longitudinal compensation gain [s²/m].
    pub k_ax: f64,
    /// Longitudinal compensation time constant [s].
    pub t_ax: f64,
    /// Static offset [rad].
    pub delta_off: f64,
    /// Sampling time [s].
    pub dt: f64,
    /// Wheelbase [m].
    pub wheelbase: f64,
}

impl A2rlParams {
    /// Pure kinematic steering with filters at their fastest stable setting.
    pub fn kinematic(dt: f64, wheelbase: f64) -> Self {
        Self { k_us: 0.0, t_us: dt, k_ax: 0.0, t_ax: dt, delta_off: 0.0, dt, wheelbase }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.k_us, self.t_us, self.k_ax, self.t_ax, self.delta_off, self.dt, self.wheelbase]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Argument("A2RL parameters must be finite".into()));
        }
        if !(self.t_us > 0.0 && self.t_ax > 0.0 && self.dt > 0.0 && self.wheelbase > 0.0) {
            return Err(Error::Argument("A2RL time constants, dt and wheelbase must be positive".into()));
        }
        if self.dt > self.t_us || self.dt > self.t_ax {
            return Err(Error::Argument(format!(
                "filter unstable: dt = {} s exceeds a time constant (T_us = {}, T_ax = {})",
                self.dt, self.t_us, self.t_ax
            )));
        }
        Ok(())
    }
}

/// Filter memories, zero at the start of every sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct A2rlState {
    /// Previous understeer term `δ_us,k-1` [rad].
    pub delta_us_prev: f64,
    /// Previous filtered longitudinal gain, before multiplication by `a_y`.
    pub ax_filter_prev: f64,
}

/// One controller step. Returns the steering angle and the updated state.
pub fn a2rl_step(
    a_y: f64,
    a_x: f64,
    v_x: f64,
    params: &A2rlParams,
    state: A2rlState,
    vx_min: f64,
) -> Result<(f64, A2rlState)> {
    if !(v_x >= vx_min) {
        return Err(Error::Domain(format!("v_x = {v_x} m/s is below vx_min = {vx_min} m/s")));
    }
    let kinematic = a_y * params.wheelbase / (v_x * v_x);
    let us = state.delta_us_prev + (params.k_us * a_y - state.delta_us_prev) * params.dt / params.t_us;
    let f = state.ax_filter_prev + (params.k_ax * a_x - state.ax_filter_prev) * params.dt / params.t_ax;
    let delta = kinematic + us + f * a_y + params.delta_off;
    Ok((delta, A2rlState { delta_us_prev: us, ax_filter_prev: f }))
}

/// Runs the controller over one contiguous sequence starting from rest.
pub fn a2rl_sequence(a_y: &[f64], a_x: &[f64], v_x: &[f64], params: &A2rlParams, vx_min: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if a_y.len() != a_x.len() || a_y.len() != v_x.len() {
        return Err(Error::Argument("A2RL input sequences differ in length".into()));
    }
    let mut state = A2rlState::default();
    let mut out = Vec::with_capacity(a_y.len());
    for k in 0..a_y.len() {
        let (d, s) = a2rl_step(a_y[k], a_x[k], v_x[k], params, state, vx_min)?;
        out.push(d);
        state = s;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_kinematic() {
        let p = A2rlParams::kinematic(0.05, 3.0);
        let (d, s) = a2rl_step(10.0, 2.0, 50.0, &p, A2rlState::default(), 5.0).unwrap();
        assert!((d - 0.012).abs() < 1e-15);
        assert_eq!(s, A2rlState::default());
    }

    #[test]
    fn one_understeer_filter_step() {
        let p = A2rlParams { k_us: 0.01, t_us: 0.25, ..A2rlParams::kinematic(0.05, 3.0) };
        let (_, s) = a2rl_step(10.0, 0.0, 50.0, &p, A2rlState::default(), 5.0).unwrap();
        assert!((s.delta_us_prev - 0.02).abs() < 1e-15);
    }

    #[test]
    fn filter_reaches_fixed_point() {
        let p = A2rlParams { k_us: 0.003, t_us: 0.4, k_ax: 0.001, t_ax: 0.3, ..A2rlParams::kinematic(0.05, 3.0) };
        let mut s = A2rlState::default();
        for _ in 0..2000 {
            s = a2rl_step(8.0, -2.0, 40.0, &p, s, 5.0).unwrap().1;
        }
        assert!((s.delta_us_prev - 0.024).abs() < 1e-12);
        assert!((s.ax_filter_prev + 0.002).abs() < 1e-12);
    }

    #[test]
    fn rejects_low_speed_and_unstable_filters() {
        let p = A2rlParams::kinematic(0.05, 3.0);
        assert!(a2rl_step(1.0, 0.0, 4.0, &p, A2rlState::default(), 5.0).is_err());
        let bad = A2rlParams { t_us: 0.01, ..p };
        assert!(bad.validate().is_err());
    }
}
