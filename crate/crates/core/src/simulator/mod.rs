//! Nonlinear single-track vehicle model used to synthesize telemetry.
//!
//! Lateral axle forces follow a simplified magic formula
//! `F = μ F_z sin(C atan(B α))` with normal loads that include static weight,
//! longitudinal load transfer and a speed-squared aerodynamic downforce. The
//! front force acts laterally (small steering angle), so in steady state the
//! handling-diagram identity `δ - a_y L / v_x² = α_1 - α_2` holds exactly.

pub mod handling;
pub mod track;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use handling::{fit_hd_polynomial, handling_points_from_records, run_handling_sweep, HandlingPoint, HdFit};
pub use track::{generate_laps, GenerationReport, LapConfig, SyntheticLaps};

pub const GRAVITY: f64 = 9.81;
/// Slip angle beyond which the vehicle is considered spun out [rad].
pub const SPIN_OUT_SLIP: f64 = 30.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireParams {
    /// Stiffness factor [1/rad].
    pub b: f64,
    /// Shape factor [-].
    pub c: f64,
    /// Friction coefficient [-].
    pub mu: f64,
}

impl TireParams {
    pub fn force(&self, fz: f64, alpha: f64) -> f64 {
        self.mu * fz * (self.c * (self.b * alpha).atan()).sin()
    }

    /// `dF/dα`.
    pub fn force_slope(&self, fz: f64, alpha: f64) -> f64 {
        let ba = self.b * alpha;
        self.mu * fz * (self.c * ba.atan()).cos() * self.c * self.b / (1.0 + ba * ba)
    }

    /// Slip angle of peak force.
    pub fn peak_slip(&self) -> f64 {
        (std::f64::consts::FRAC_PI_2 / self.c).tan() / self.b
    }

    /// Slip angle on the rising branch producing `ratio = F / (μ F_z)` in `[0, 1]`.
    pub fn slip_for_force_ratio(&self, ratio: f64) -> f64 {
        let ratio = ratio.clamp(-1.0, 1.0);
        // sin(C atan(Bα)) = ratio on the rising branch
        let alpha = (ratio.abs().asin() / self.c).tan() / self.b;
        alpha.copysign(ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Mass [kg].
    pub mass: f64,
    /// Wheelbase [m].
    pub wheelbase: f64,
    /// Distance from the center of gravity to the front axle [m].
    pub front_axle: f64,
    /// Yaw inertia [kg·m²].
    pub yaw_inertia: f64,
    /// Center-of-gravity height for longitudinal load transfer [m].
    pub cog_height: f64,
    pub front_tire: TireParams,
    pub rear_tire: TireParams,
    /// Downforce coefficient, `F_aero = k_aero v_x²` [N·s²/m²].
    pub k_aero: f64,
    /// Fraction of the downforce carried by the front axle.
    pub aero_front_share: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 800.0,
            wheelbase: 3.0,
            front_axle: 1.4,
            yaw_inertia: 1000.0,
            cog_height: 0.3,
            front_tire: TireParams { b: 11.0, c: 1.5, mu: 1.6 },
            rear_tire: TireParams { b: 13.0, c: 1.5, mu: 1.6 },
            k_aero: 2.5,
            aero_front_share: 0.4,
        }
    }
}

impl VehicleParams {
    pub fn rear_axle(&self) -> f64 {
        self.wheelbase - self.front_axle
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Argument(format!("invalid vehicle parameter: {what}")));
        if !(self.mass > 0.0 && self.wheelbase > 0.0 && self.yaw_inertia > 0.0) {
            return bad("mass, wheelbase and yaw inertia must be positive");
        }
        if !(self.front_axle > 0.0 && self.front_axle < self.wheelbase) {
            return bad("front axle distance must lie strictly inside the wheelbase");
        }
        for t in [self.front_tire, self.rear_tire] {
            if !(t.mu > 0.0 && t.mu < 3.0) {
                return bad("friction coefficient must lie in (0, 3)");
            }
            if !(t.c > 1.0 && t.c < 2.0) {
                return bad("tire shape factor must lie in (1, 2)");
            }
            if !(t.b > 0.0) {
                return bad("tire stiffness factor must be positive");
            }
        }
        if !(self.k_aero >= 0.0) || !(0.0..=1.0).contains(&self.aero_front_share) || !(self.cog_height >= 0.0) {
            return bad("aero coefficient, aero share or CoG height out of range");
        }
        Ok(())
    }

    /// Scales both axles' friction coefficients.
    pub fn with_grip_scale(mut self, scale: f64) -> Self {
        self.front_tire.mu *= scale;
        self.rear_tire.mu *= scale;
        self
    }

    /// Front and rear normal loads [N].
    pub fn normal_loads(&self, v_x: f64, a_x: f64) -> (f64, f64) {
        let m = self.mass;
        let l = self.wheelbase;
        let transfer = m * a_x * self.cog_height / l;
        let aero = self.k_aero * v_x * v_x;
        let front = m * GRAVITY * self.rear_axle() / l - transfer + self.aero_front_share * aero;
        let rear = m * GRAVITY * self.front_axle / l + transfer + (1.0 - self.aero_front_share) * aero;
        (front.max(0.0), rear.max(0.0))
    }

    /// Linearized cornering stiffnesses `μ F_z B C` [N/rad].
    pub fn cornering_stiffness(&self, v_x: f64) -> (f64, f64) {
        let (f, r) = self.normal_loads(v_x, 0.0);
        (
            self.front_tire.mu * f * self.front_tire.b * self.front_tire.c,
            self.rear_tire.mu * r * self.rear_tire.b * self.rear_tire.c,
        )
    }

    /// Largest steady-state lateral acceleration at `v_x` with `a_x = 0`: the
    /// first axle to reach its peak force limits the vehicle.
    pub fn max_lateral_accel(&self, v_x: f64) -> f64 {
        self.max_lateral_accel_with(v_x, 0.0)
    }

    /// As [`Self::max_lateral_accel`] under longitudinal load transfer.
    pub fn max_lateral_accel_with(&self, v_x: f64, a_x: f64) -> f64 {
        let (f, r) = self.normal_loads(v_x, a_x);
        let m = self.mass;
        let l = self.wheelbase;
        let front = self.front_tire.mu * f * l / (m * self.rear_axle());
        let rear = self.rear_tire.mu * r * l / (m * self.front_axle);
        front.min(rear)
    }

    /// Slip angles and lateral forces at the given state and inputs.
    fn axle_forces(&self, state: &SimState, delta: f64, a_x: f64) -> Result<AxleForces> {
        let alpha_front = delta - (state.v_y + self.front_axle * state.r) / state.v_x;
        let alpha_rear = -(state.v_y - self.rear_axle() * state.r) / state.v_x;
        if alpha_front.abs() > SPIN_OUT_SLIP || alpha_rear.abs() > SPIN_OUT_SLIP || !alpha_front.is_finite() {
            return Err(Error::Instability(format!(
                "slip angles {:.1}° / {:.1}° at v_x = {:.1} m/s",
                alpha_front.to_degrees(),
                alpha_rear.to_degrees(),
                state.v_x
            )));
        }
        let (fz1, fz2) = self.normal_loads(state.v_x, a_x);
        Ok(AxleForces { front: self.front_tire.force(fz1, alpha_front), rear: self.rear_tire.force(fz2, alpha_rear) })
    }

    /// Lateral acceleration `(F_1 + F_2) / m` [m/s²].
    pub fn lateral_accel(&self, state: &SimState, delta: f64, a_x: f64) -> Result<f64> {
        let f = self.axle_forces(state, delta, a_x)?;
        Ok((f.front + f.rear) / self.mass)
    }
}

#[derive(Debug, Clone, Copy)]
struct AxleForces {
    front: f64,
    rear: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Longitudinal speed [m/s].
    pub v_x: f64,
    /// Lateral speed [m/s].
    pub v_y: f64,
    /// Yaw rate [rad/s].
    pub r: f64,
}

impl SimState {
    pub fn straight(v_x: f64) -> Self {
        Self { v_x, v_y: 0.0, r: 0.0 }
    }
}

/// One semi-implicit Euler step: `v_y` first, then `r` with the updated
/// lateral speed; `v_x` integrates the commanded acceleration.
pub fn step(state: &SimState, delta: f64, a_x_cmd: f64, params: &VehicleParams, dt: f64) -> Result<SimState> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::Argument(format!("integration step {dt} s outside (0, 0.01]")));
    }
    let m = params.mass;
    let f = params.axle_forces(state, delta, a_x_cmd)?;
    let v_y = state.v_y + dt * ((f.front + f.rear) / m - state.v_x * state.r);
    let mid = SimState { v_y, ..*state };
    let f = params.axle_forces(&mid, delta, a_x_cmd)?;
    let r = state.r + dt * (params.front_axle * f.front - params.rear_axle() * f.rear) / params.yaw_inertia;
    let v_x = state.v_x + dt * a_x_cmd;
    if !(v_x > 0.0) {
        return Err(Error::Instability(format!("longitudinal speed dropped to {v_x} m/s")));
    }
    Ok(SimState { v_x, v_y, r })
}

/// Steady cornering solution at constant speed and steering angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub delta: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub r: f64,
    /// `(F_1 + F_2) / m` at the solution [m/s²].
    pub a_y: f64,
    pub alpha_front: f64,
    pub alpha_rear: f64,
}

/// Solves `v̇_y = 0`, `ṙ = 0` for `(v_y, r)` by damped Newton iteration,
/// starting from `guess` (or from rest).
pub fn steady_state(params: &VehicleParams, v_x: f64, delta: f64, guess: Option<(f64, f64)>) -> Result<SteadyState> {
    let m = params.mass;
    let a = params.front_axle;
    let b = params.rear_axle();
    let (fz1, fz2) = params.normal_loads(v_x, 0.0);
    let (mut v_y, mut r) = guess.unwrap_or((0.0, 0.0));

    let residual = |v_y: f64, r: f64| {
        let a1 = delta - (v_y + a * r) / v_x;
        let a2 = -(v_y - b * r) / v_x;
        let f1 = params.front_tire.force(fz1, a1);
        let f2 = params.rear_tire.force(fz2, a2);
        ([(f1 + f2) / m - v_x * r, (a * f1 - b * f2) / m], a1, a2, f1, f2)
    };
    let norm = |res: [f64; 2]| res[0].abs() + res[1].abs();

    for _ in 0..200 {
        let (res, a1, a2, _, _) = residual(v_y, r);
        if norm(res) < 1e-13 {
            break;
        }
        let d1 = params.front_tire.force_slope(fz1, a1) / m;
        let d2 = params.rear_tire.force_slope(fz2, a2) / m;
        // ∂α1/∂v_y = -1/v_x, ∂α1/∂r = -a/v_x, ∂α2/∂v_y = -1/v_x, ∂α2/∂r = b/v_x
        let j11 = -(d1 + d2) / v_x;
        let j12 = (-a * d1 + b * d2) / v_x - v_x;
        let j21 = (-a * d1 + b * d2) / v_x;
        let j22 = (-a * a * d1 - b * b * d2) / v_x;
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 || !det.is_finite() {
            return Err(Error::Instability(format!("singular steady-state Jacobian at δ = {delta}")));
        }
        let dv = (res[0] * j22 - res[1] * j12) / det;
        let dr = (j11 * res[1] - j21 * res[0]) / det;
        let mut t = 1.0;
        let current = norm(res);
        loop {
            let (trial, _, _, _, _) = residual(v_y - t * dv, r - t * dr);
            if norm(trial) < current || t < 1e-6 {
                break;
            }
            t *= 0.5;
        }
        v_y -= t * dv;
        r -= t * dr;
    }
    let (res, a1, a2, f1, f2) = residual(v_y, r);
    if norm(res) > 1e-9 {
        return Err(Error::Instability(format!(
            "no steady state found at v_x = {v_x} m/s, δ = {delta} rad (residual {:e})",
            norm(res)
        )));
    }
    Ok(SteadyState { delta, v_x, v_y, r, a_y: (f1 + f2) / m, alpha_front: a1, alpha_rear: a2 })
}

/// Closed-form steady state reaching `a_y` at `v_x` on the rising branch of
/// both tire curves.
pub fn steady_state_for_lateral_accel(params: &VehicleParams, v_x: f64, a_y: f64) -> Result<SteadyState> {
    steady_state_inverse(params, v_x, a_y, 0.0)
}

/// Closed-form quasi steady state with normal loads taken at `a_x`.
pub fn steady_state_inverse(params: &VehicleParams, v_x: f64, a_y: f64, a_x: f64) -> Result<SteadyState> {
    let max = params.max_lateral_accel_with(v_x, a_x);
    if a_y.abs() > max {
        return Err(Error::Saturation { requested: a_y, v_x, max });
    }
    let m = params.mass;
    let l = params.wheelbase;
    let a = params.front_axle;
    let b = params.rear_axle();
    let (fz1, fz2) = params.normal_loads(v_x, a_x);
    let f1 = m * a_y * b / l;
    let f2 = m * a_y * a / l;
    let alpha_front = params.front_tire.slip_for_force_ratio(f1 / (params.front_tire.mu * fz1));
    let alpha_rear = params.rear_tire.slip_for_force_ratio(f2 / (params.rear_tire.mu * fz2));
    let r = a_y / v_x;
    let v_y = b * r - alpha_rear * v_x;
    let delta = alpha_front + (v_y + a * r) / v_x;
    Ok(SteadyState { delta, v_x, v_y, r, a_y, alpha_front, alpha_rear })
}
