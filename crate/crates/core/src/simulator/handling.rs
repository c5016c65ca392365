//! Handling-diagram points `δ - a_y L / v_x²` and their per-speed cubic fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{steady_state, steady_state_for_lateral_accel, VehicleParams};
use crate::error::{Error, Result};
use crate::telemetry::TelemetryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandlingPoint {
    pub v_x: f64,
    pub a_y: f64,
    /// `δ - a_y L / v_x²` [rad].
    pub hd_ordinate: f64,
}

/// Tolerance on the achieved lateral acceleration during the sweep [m/s²].
const SWEEP_AY_TOL: f64 = 1e-10;

/// Steady-state handling points for every `(speed, a_y)` pair, found by
/// bisection on the steering angle.
pub fn run_handling_sweep(params: &VehicleParams, speeds: &[f64], ay_targets: &[f64]) -> Result<Vec<HandlingPoint>> {
    params.validate()?;
    let l = params.wheelbase;
    let mut out = Vec::with_capacity(speeds.len() * ay_targets.len());
    for &v in speeds {
        let max = params.max_lateral_accel(v);
        for &target in ay_targets {
            if target.abs() >= max {
                return Err(Error::Saturation { requested: target, v_x: v, max });
            }
            if target == 0.0 {
                out.push(HandlingPoint { v_x: v, a_y: 0.0, hd_ordinate: 0.0 });
                continue;
            }
            // Steering angle at the grip limit bounds the rising branch.
            let limit = steady_state_for_lateral_accel(params, v, max.copysign(target) * (1.0 - 1e-9))?;
            let (mut lo, mut hi) = if target > 0.0 { (0.0, limit.delta) } else { (limit.delta, 0.0) };
            let mut guess = None;
            let mut solution = None;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let ss = steady_state(params, v, mid, guess)?;
                guess = Some((ss.v_y, ss.r));
                let err = ss.a_y - target;
                solution = Some(ss);
                if err.abs() < SWEEP_AY_TOL {
                    break;
                }
                if err < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let ss = solution.expect("at least one bisection step");
            if (ss.a_y - target).abs() > 1e-6 {
                return Err(Error::Instability(format!(
                    "bisection stalled at a_y = {} (target {target}) for v_x = {v}",
                    ss.a_y
                )));
            }
            out.push(HandlingPoint { v_x: v, a_y: ss.a_y, hd_ordinate: ss.delta - ss.a_y * l / (v * v) });
        }
    }
    Ok(out)
}

/// Handling points from telemetry, folded onto `a_y ≥ 0` using the odd
/// symmetry of the diagram.
pub fn handling_points_from_records(records: &[TelemetryRecord], wheelbase: f64) -> Vec<HandlingPoint> {
    records
        .iter()
        .map(|r| {
            let hd = r.delta - r.a_y * wheelbase / (r.v_x * r.v_x);
            let s = if r.a_y < 0.0 { -1.0 } else { 1.0 };
            HandlingPoint { v_x: r.v_x, a_y: r.a_y.abs(), hd_ordinate: s * hd }
        })
        .collect()
}

/// Least-squares polynomial in `a_y` for one speed bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdFit {
    /// `coefficients[k]` multiplies `a_y^k`.
    pub coefficients: Vec<f64>,
    /// Root-mean-square residual [rad].
    pub rmse: f64,
    pub n_points: usize,
}

impl HdFit {
    pub fn eval(&self, a_y: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * a_y + c)
    }
}

/// Fits `hd_ordinate ≈ Σ c_k a_y^k` by least squares (SVD on a column-scaled
/// design matrix).
pub fn fit_hd_polynomial(points: &[HandlingPoint], degree: usize) -> Result<HdFit> {
    let n = points.len();
    if n < degree + 2 {
        return Err(Error::DegenerateFit(format!("{n} points are too few for a degree-{degree} fit")));
    }
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.a_y.abs()));
    if !(scale > 0.0) {
        return Err(Error::DegenerateFit("all points have a_y = 0".into()));
    }
    let design = DMatrix::from_fn(n, degree + 1, |i, k| (points[i].a_y / scale).powi(k as i32));
    let rhs = DVector::from_iterator(n, points.iter().map(|p| p.hd_ordinate));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-12) {
        return Err(Error::DegenerateFit(format!(
            "design matrix is rank deficient (singular values {smax:e} .. {smin:e})"
        )));
    }
    let scaled = svd.solve(&rhs, 0.0).map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let residual = &design * &scaled - &rhs;
    let rmse = (residual.norm_squared() / n as f64).sqrt();
    let coefficients = scaled.iter().enumerate().map(|(k, c)| c / scale.powi(k as i32)).collect();
    Ok(HdFit { coefficients, rmse, n_points: n })
}

/// Splits points into speed bins at the tercile boundaries of `v_x`.
pub fn speed_terciles(points: &[HandlingPoint]) -> Vec<(f64, f64, Vec<HandlingPoint>)> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut speeds: Vec<f64> = points.iter().map(|p| p.v_x).collect();
    speeds.sort_by(f64::total_cmp);
    let at = |q: f64| speeds[((speeds.len() - 1) as f64 * q).round() as usize];
    let edges = [speeds[0], at(1.0 / 3.0), at(2.0 / 3.0), speeds[speeds.len() - 1]];
    (0..3)
        .map(|b| {
            let (lo, hi) = (edges[b], edges[b + 1]);
            let members =
                points.iter().filter(|p| p.v_x >= lo && (p.v_x < hi || (b == 2 && p.v_x <= hi))).copied().collect();
            (lo, hi, members)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(c: [f64; 4], xs: &[f64]) -> Vec<HandlingPoint> {
        xs.iter()
            .map(|&x| HandlingPoint {
                v_x: 30.0,
                a_y: x,
                hd_ordinate: c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x,
            })
            .collect()
    }

    #[test]
    fn exact_cubic_is_recovered() {
        let c = [1e-3, 2e-3, -4e-5, 3e-6];
        let xs: Vec<f64> = (0..30).map(|k| 0.8 * k as f64).collect();
        let fit = fit_hd_polynomial(&cubic(c, &xs), 3).unwrap();
        for (a, b) in fit.coefficients.iter().zip(c) {
            assert!((a - b).abs() < 1e-9, "{:?}", fit.coefficients);
        }
        assert!(fit.rmse < 1e-12);
    }

    #[test]
    fn too_few_or_degenerate_points() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!(fit_hd_polynomial(&cubic([0.0; 4], &xs), 3).is_err());
        let same: Vec<f64> = vec![2.0; 10];
        assert!(matches!(fit_hd_polynomial(&cubic([0.0; 4], &same), 3), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn neutral_vehicle_has_flat_diagram() {
        // equal tires and an aero split equal to the static split keep α1 = α2
        let mut p = VehicleParams::default();
        p.rear_tire = p.front_tire;
        p.aero_front_share = p.rear_axle() / p.wheelbase;
        let targets: Vec<f64> = (1..=10).map(|k| 0.5 * k as f64).collect();
        let pts = run_handling_sweep(&p, &[30.0], &targets).unwrap();
        assert!(pts.iter().all(|h| h.hd_ordinate.abs() < 1e-4));
        let fit = fit_hd_polynomial(&pts, 3).unwrap();
        assert!(fit.coefficients.iter().all(|c| c.abs() < 1e-6));
    }

    #[test]
    fn unreachable_target_reports_limit() {
        let p = VehicleParams::default();
        match run_handling_sweep(&p, &[20.0], &[40.0]) {
            Err(Error::Saturation { max, .. }) => assert!((max - p.max_lateral_accel(20.0)).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn telemetry_points_are_folded() {
        let r = TelemetryRecord { t: 0.0, v_x: 20.0, a_x: 0.0, a_y: -4.0, delta: -0.04, sector: 1, lap: 1 };
        let p = handling_points_from_records(&[r], 3.0);
        assert_eq!(p[0].a_y, 4.0);
        assert!((p[0].hd_ordinate - (0.04 - 4.0 * 3.0 / 400.0)).abs() < 1e-15);
    }

    #[test]
    fn terciles_partition_points() {
        let pts: Vec<HandlingPoint> =
            (0..30).map(|k| HandlingPoint { v_x: k as f64, a_y: 1.0, hd_ordinate: 0.0 }).collect();
        let bins = speed_terciles(&pts);
        assert_eq!(bins.len(), 3);
        assert_eq!(bins.iter().map(|b| b.2.len()).sum::<usize>(), 30);
    }
}
