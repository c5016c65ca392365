//! Two-lap synthetic telemetry over a three-sector curvature profile.
//!
//! The speed profile uses a fixed share of the (aero-dependent) grip limit
//! with acceleration and braking passes. A driver model follows the
//! curvature profile with a previewed steady-state feedforward, a yaw-rate PI
//! loop and a first-order steering actuator. The recorded steering angle is
//! the command plus Gaussian measurement noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{steady_state_inverse, step, SimState, VehicleParams};
use crate::error::{Error, Result};
use crate::telemetry::TelemetryRecord;

/// One constant-curvature piece of the track; `radius = 0` is a straight.
/// Positive radius turns left. `pace` scales the grip usage in this piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPiece {
    pub length: f64,
    pub radius: f64,
    pub pace: f64,
}

impl TrackPiece {
    const fn straight(length: f64) -> Self {
        Self { length, radius: 0.0, pace: 1.0 }
    }
    const fn arc(length: f64, radius: f64, pace: f64) -> Self {
        Self { length, radius, pace }
    }
    fn curvature(&self) -> f64 {
        if self.radius == 0.0 {
            0.0
        } else {
            1.0 / self.radius
        }
    }
}

fn default_sectors() -> Vec<Vec<TrackPiece>> {
    use TrackPiece as P;
    vec![
        vec![
            P::straight(350.0),
            P::arc(220.0, 250.0, 1.0),
            P::straight(150.0),
            P::arc(150.0, -90.0, 0.8),
            P::straight(120.0),
            P::arc(110.0, 45.0, 1.0),
            P::straight(200.0),
            P::arc(180.0, -160.0, 0.7),
            P::straight(150.0),
            P::arc(140.0, 120.0, 0.9),
            P::straight(200.0),
            P::arc(90.0, -55.0, 0.75),
            P::straight(140.0),
        ],
        vec![
            P::straight(500.0),
            P::arc(300.0, -400.0, 1.0),
            P::straight(200.0),
            P::arc(130.0, 70.0, 0.85),
            P::straight(150.0),
            P::arc(180.0, -130.0, 1.0),
            P::straight(150.0),
            P::arc(150.0, 200.0, 0.7),
            P::straight(150.0),
            P::arc(100.0, -40.0, 0.9),
            P::straight(190.0),
        ],
        vec![
            P::straight(150.0),
            P::arc(110.0, 60.0, 0.7),
            P::straight(150.0),
            P::arc(90.0, -35.0, 1.0),
            P::straight(400.0),
            P::arc(180.0, -220.0, 1.0),
            P::arc(120.0, -150.0, 0.85),
            P::straight(150.0),
            P::arc(120.0, 110.0, 0.8),
            P::arc(100.0, 80.0, 0.95),
            P::straight(150.0),
            P::arc(150.0, -300.0, 1.0),
            P::straight(120.0),
            P::arc(80.0, 50.0, 0.85),
            P::straight(130.0),
        ],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LapConfig {
    /// Pieces of sectors 1, 2 and 3.
    pub sectors: Vec<Vec<TrackPiece>>,
    /// Length of the linear curvature transitions [m].
    pub transition: f64,
    /// Fraction of the steady-state grip limit used in corners.
    pub grip_usage: f64,
    /// Top speed before scaling [m/s].
    pub top_speed: f64,
    /// Peak traction acceleration [m/s²].
    pub max_accel: f64,
    /// Traction power per unit mass [W/kg].
    pub power_per_mass: f64,
    /// Braking deceleration [m/s²].
    pub max_brake: f64,
    /// Speed and grip scales of laps 1 and 2.
    pub lap_speed_scale: [f64; 2],
    pub lap_grip_scale: [f64; 2],
    /// Integration step [s].
    pub sim_dt: f64,
    /// Telemetry sampling period [s].
    pub sample_time: f64,
    /// Standard deviation of the steering measurement noise [rad].
    pub steer_noise_std: f64,
    /// Feedforward preview time [s].
    pub preview: f64,
    /// Steering actuator time constant [s].
    pub actuator_lag: f64,
    /// Yaw-rate PI gains.
    pub yaw_kp: f64,
    pub yaw_ki: f64,
    /// Speed tracking gain [1/s].
    pub speed_kp: f64,
    /// Speed-scale reduction applied when a lap turns unstable.
    pub retry_factor: f64,
    pub max_retries: usize,
}

impl Default for LapConfig {
    fn default() -> Self {
        Self {
            sectors: default_sectors(),
            transition: 60.0,
            grip_usage: 0.75,
            top_speed: 80.0,
            max_accel: 8.0,
            power_per_mass: 375.0,
            max_brake: 8.0,
            lap_speed_scale: [1.0, 1.05],
            lap_grip_scale: [1.0, 0.97],
            sim_dt: 0.001,
            sample_time: 0.05,
            steer_noise_std: 0.02f64.to_radians(),
            preview: 0.1,
            actuator_lag: 0.05,
            yaw_kp: 0.02,
            yaw_ki: 0.1,
            speed_kp: 2.0,
            retry_factor: 0.95,
            max_retries: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapReport {
    pub lap: u32,
    /// Speed scale finally used.
    pub speed_scale: f64,
    pub grip_scale: f64,
    /// Number of regenerations after instability.
    pub retries: usize,
    pub messages: Vec<String>,
    pub records: usize,
    pub mean_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub seed: u64,
    pub laps: Vec<LapReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLaps {
    pub records: Vec<TelemetryRecord>,
    pub report: GenerationReport,
}

/// Curvature, sector label and reference speed sampled every `ds` metres.
struct Profile {
    ds: f64,
    curvature: Vec<f64>,
    sector: Vec<u8>,
    speed: Vec<f64>,
}

impl Profile {
    fn length(&self) -> f64 {
        self.ds * (self.curvature.len() - 1) as f64
    }

    fn index(&self, s: f64) -> (usize, f64) {
        let x = (s / self.ds).clamp(0.0, (self.curvature.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.curvature.len() - 2);
        (i, x - i as f64)
    }

    fn lerp(v: &[f64], i: usize, w: f64) -> f64 {
        v[i] + (v[i + 1] - v[i]) * w
    }

    fn curvature_at(&self, s: f64) -> f64 {
        let (i, w) = self.index(s);
        Self::lerp(&self.curvature, i, w)
    }

    fn speed_at(&self, s: f64) -> f64 {
        let (i, w) = self.index(s);
        Self::lerp(&self.speed, i, w)
    }

    /// `v dv/ds` along the profile.
    fn accel_at(&self, s: f64) -> f64 {
        let (i, _) = self.index(s);
        (self.speed[i + 1].powi(2) - self.speed[i].powi(2)) / (2.0 * self.ds)
    }

    fn sector_at(&self, s: f64) -> u8 {
        let (i, w) = self.index(s);
        self.sector[if w < 0.5 { i } else { i + 1 }]
    }
}

const PROFILE_STEP: f64 = 1.0;

fn build_profile(config: &LapConfig, params: &VehicleParams, speed_scale: f64) -> Result<Profile> {
    if config.sectors.len() != 3 {
        return Err(Error::Argument(format!("track needs 3 sectors, got {}", config.sectors.len())));
    }
    let ds = PROFILE_STEP;
    let mut raw = Vec::new();
    let mut pace = Vec::new();
    let mut sector = Vec::new();
    for (k, pieces) in config.sectors.iter().enumerate() {
        for p in pieces {
            if !(p.length > 0.0) || !(p.pace > 0.0 && p.pace <= 1.0) {
                return Err(Error::Argument("track pieces need positive length and pace in (0, 1]".into()));
            }
            let n = (p.length / ds).round() as usize;
            raw.extend(std::iter::repeat_n(p.curvature(), n));
            pace.extend(std::iter::repeat_n(p.pace, n));
            sector.extend(std::iter::repeat_n(k as u8 + 1, n));
        }
    }
    raw.push(*raw.last().unwrap_or(&0.0));
    pace.push(*pace.last().unwrap_or(&1.0));
    sector.push(3);

    // Box filtering a piecewise-constant curvature gives linear (clothoid) ramps.
    let half = ((config.transition / ds / 2.0).round() as usize).max(1);
    let n = raw.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + raw[i];
    }
    let curvature: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();

    // Grip-limited speed: v² |κ| = usage · a_max(v), with a_max affine in v².
    let a0 = params.max_lateral_accel(0.0);
    let slope = (params.max_lateral_accel(10.0) - a0) / 100.0;
    let top = config.top_speed * speed_scale;
    let mut speed: Vec<f64> = curvature
        .iter()
        .zip(&pace)
        .map(|(&k, &p)| {
            let usage = config.grip_usage * p;
            let denom = k.abs() - usage * slope;
            let v = if denom > 0.0 { (usage * a0 / denom).sqrt() } else { f64::INFINITY };
            (v * speed_scale).min(top)
        })
        .collect();
    for i in 1..n {
        let v = speed[i - 1];
        let a = config.max_accel.min(config.power_per_mass / v.max(1.0));
        speed[i] = speed[i].min((v * v + 2.0 * a * ds).sqrt());
    }
    for i in (0..n - 1).rev() {
        let v = speed[i + 1];
        speed[i] = speed[i].min((v * v + 2.0 * config.max_brake * ds).sqrt());
    }
    Ok(Profile { ds, curvature, sector, speed })
}

struct LapRun {
    records: Vec<TelemetryRecord>,
    mean_speed: f64,
}

fn drive_lap(
    config: &LapConfig,
    params: &VehicleParams,
    profile: &Profile,
    lap: u32,
    t0: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LapRun> {
    let dt = config.sim_dt;
    let decimation = (config.sample_time / dt).round() as usize;
    if decimation == 0 || ((decimation as f64) * dt - config.sample_time).abs() > 1e-9 {
        return Err(Error::Argument("sample time must be a multiple of the integration step".into()));
    }
    let noise =
        Normal::new(0.0, config.steer_noise_std).map_err(|e| Error::Argument(format!("steering noise: {e}")))?;
    let lag = config.actuator_lag;

    let feedforward = |s: f64, v: f64, a_x: f64| -> Result<f64> {
        let k = profile.curvature_at(s);
        let a_y = v * v * k;
        let max = 0.98 * params.max_lateral_accel_with(v, a_x);
        Ok(steady_state_inverse(params, v, a_y.clamp(-max, max), a_x)?.delta)
    };

    let mut s = 0.0;
    let mut state = SimState::straight(profile.speed_at(0.0));
    let mut steer = feedforward(0.0, state.v_x, 0.0)?;
    let mut integral = 0.0;
    let mut records = Vec::new();
    let mut speed_sum = 0.0;
    let length = profile.length();
    let mut k = 0usize;

    while s < length {
        let v = state.v_x;
        let a_x = (profile.accel_at(s) + config.speed_kp * (profile.speed_at(s) - v))
            .clamp(-config.max_brake - 1.0, config.max_accel + 1.0);
        let r_ref = v * profile.curvature_at(s);
        let err = r_ref - state.r;
        let command = feedforward(s + v * config.preview, v, a_x)? + config.yaw_kp * err + config.yaw_ki * integral;

        if k.is_multiple_of(decimation) {
            let a_y = params.lateral_accel(&state, steer, a_x)?;
            records.push(TelemetryRecord {
                t: t0 + (k / decimation) as f64 * config.sample_time,
                v_x: v,
                a_x,
                a_y,
                delta: command + noise.sample(rng),
                sector: profile.sector_at(s),
                lap,
            });
            speed_sum += v;
        }

        integral += err * dt;
        steer += (command - steer) * dt / lag;
        state = step(&state, steer, a_x, params, dt)?;
        if !(state.v_x >= 5.0) {
            return Err(Error::Instability(format!("speed fell to {:.2} m/s at s = {s:.0} m", state.v_x)));
        }
        s += state.v_x * dt;
        k += 1;
    }
    let mean_speed = speed_sum / records.len().max(1) as f64;
    Ok(LapRun { records, mean_speed })
}

/// Generates two laps of telemetry. Deterministic in `seed`.
pub fn generate_laps(params: &VehicleParams, config: &LapConfig, seed: u64) -> Result<SyntheticLaps> {
    params.validate()?;
    if !(config.sim_dt > 0.0 && config.sim_dt <= 0.01) || !(config.actuator_lag >= config.sim_dt) {
        return Err(Error::Argument("integration step must lie in (0, 0.01] and not exceed the actuator lag".into()));
    }
    if !(config.grip_usage > 0.0 && config.grip_usage < 1.0) {
        return Err(Error::Argument("grip usage must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut laps = Vec::new();
    let mut t0 = 0.0;
    for lap in 0..2 {
        let grip = config.lap_grip_scale[lap];
        let lap_params = params.with_grip_scale(grip);
        let mut scale = config.lap_speed_scale[lap];
        let mut messages = Vec::new();
        let mut retries = 0;
        let run = loop {
            let profile = build_profile(config, &lap_params, scale)?;
            // Each attempt draws its noise from a fresh stream so retries stay reproducible.
            let mut lap_rng = ChaCha8Rng::seed_from_u64(rand::Rng::random(&mut rng));
            match drive_lap(config, &lap_params, &profile, lap as u32 + 1, t0, &mut lap_rng) {
                Ok(run) => break run,
                Err(Error::Instability(msg)) if retries < config.max_retries => {
                    messages.push(format!("speed scale {scale:.4}: {msg}"));
                    scale *= config.retry_factor;
                    retries += 1;
                }
                Err(e) => return Err(e),
            }
        };
        t0 = run.records.last().map_or(t0, |r| r.t) + config.sample_time;
        laps.push(LapReport {
            lap: lap as u32 + 1,
            speed_scale: scale,
            grip_scale: grip,
            retries,
            messages,
            records: run.records.len(),
            mean_speed: run.mean_speed,
        });
        records.extend(run.records);
    }
    Ok(SyntheticLaps { records, report: GenerationReport { seed, laps } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::segments;

    #[test]
    fn profile_is_grip_limited_in_corners() {
        let p = VehicleParams::default();
        let c = LapConfig::default();
        let prof = build_profile(&c, &p, 1.0).unwrap();
        for (i, &k) in prof.curvature.iter().enumerate() {
            let v = prof.speed[i];
            assert!(v * v * k.abs() <= c.grip_usage * p.max_lateral_accel(v) + 1e-6);
        }
        assert!((prof.length() - 6600.0).abs() < 2.0);
    }

    #[test]
    fn laps_have_expected_structure() {
        let out = generate_laps(&VehicleParams::default(), &LapConfig::default(), 3).unwrap();
        let segs = segments(&out.records);
        assert_eq!(segs.len(), 6);
        for seg in &segs {
            assert!(seg.len() >= 600, "segment of {} records", seg.len());
        }
        let lap = |n: u32| out.report.laps[n as usize - 1].mean_speed;
        assert!(lap(2) > lap(1));
        assert!(out.records.windows(2).all(|w| w[1].t > w[0].t));
    }
}
