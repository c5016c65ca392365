//! Four-way controller comparison. Training ([`train_controllers`]) and
//! reporting ([`report`]) are separate, so a report can be regenerated from
//! stored parameters without retraining.

use std::fmt;
use std::io::Write;
use std::path::Path;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{error_stats, ErrorStats, Metrics};
use crate::error::{Error, Result};
use crate::grad::{predict, ParamVector};
use crate::models::a2rl::{a2rl_sequence, A2rlParams};
use crate::models::{ModelKind, ModelSpec, Network, WindowInput};
use crate::telemetry::{make_windows, segments, TelemetryRecord, WindowedSample};
use crate::training::{train, TrainConfig, TrainResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Controller {
    MsnnSteer,
    MsnnBase,
    Gnn,
    A2rl,
}

impl Controller {
    pub const ALL: [Controller; 4] = [Controller::MsnnSteer, Controller::MsnnBase, Controller::Gnn, Controller::A2rl];

    pub fn name(self) -> &'static str {
        match self {
            Controller::MsnnSteer => "msnn-steer",
            Controller::MsnnBase => "msnn-base",
            Controller::Gnn => "gnn",
            Controller::A2rl => "a2rl",
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A trained network with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNetwork {
    pub network: Network,
    pub params: ParamVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSet {
    pub msnn_steer: TrainedNetwork,
    pub msnn_base: TrainedNetwork,
    pub gnn: TrainedNetwork,
    pub a2rl: A2rlParams,
}

#[derive(Debug, Clone)]
pub struct TrainedControllers {
    pub set: ControllerSet,
    /// Training records of the three networks, in `steer, base, gnn` order.
    pub runs: Vec<(ModelKind, TrainResult)>,
    /// Training RMSE of the fitted A2RL controller [deg].
    pub a2rl_fit_rmse: f64,
}

/// Window-start sample indices into `records` and the windows themselves.
fn windows(records: &[TelemetryRecord], q: usize, sample_time: f64) -> Result<Vec<WindowedSample>> {
    let w = make_windows(records, q, sample_time)?;
    if w.is_empty() {
        return Err(Error::EmptySplit(format!("no window of length {} fits the data", q + 1)));
    }
    Ok(w)
}

/// A2RL output for every record, filters restarted at each contiguous segment.
pub fn a2rl_predict(records: &[TelemetryRecord], params: &A2rlParams, vx_min: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(records.len());
    for seg in segments(records) {
        let r = &records[seg];
        let ay: Vec<f64> = r.iter().map(|x| x.a_y).collect();
        let ax: Vec<f64> = r.iter().map(|x| x.a_x).collect();
        let vx: Vec<f64> = r.iter().map(|x| x.v_x).collect();
        out.extend(a2rl_sequence(&ay, &ax, &vx, params, vx_min)?);
    }
    Ok(out)
}

#[derive(Clone, Copy)]
struct A2rlObjective<'a> {
    records: &'a [TelemetryRecord],
    template: A2rlParams,
    vx_min: f64,
}

impl A2rlObjective<'_> {
    /// Time constants are `dt + exp(θ)`, which keeps both filters stable.
    fn params(&self, theta: &[f64]) -> A2rlParams {
        let dt = self.template.dt;
        A2rlParams {
            k_us: theta[0],
            t_us: dt + theta[1].exp(),
            k_ax: theta[2],
            t_ax: dt + theta[3].exp(),
            delta_off: theta[4],
            ..self.template
        }
    }

    fn rmse_deg(&self, theta: &[f64]) -> f64 {
        let p = self.params(theta);
        match a2rl_predict(self.records, &p, self.vx_min) {
            Ok(pred) => {
                let sse: f64 = pred.iter().zip(self.records).map(|(d, r)| (d - r.delta).powi(2)).sum();
                let v = (sse / pred.len() as f64).sqrt().to_degrees();
                if v.is_finite() {
                    v
                } else {
                    f64::MAX
                }
            }
            Err(_) => f64::MAX,
        }
    }
}

impl CostFunction for A2rlObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.rmse_deg(theta))
    }
}

pub const A2RL_RESTARTS: usize = 5;

/// Fits the five A2RL parameters to measured steering by Nelder-Mead on the
/// RMSE, from a least-squares start plus seeded random restarts.
pub fn fit_a2rl(
    records: &[TelemetryRecord],
    wheelbase: f64,
    dt: f64,
    vx_min: f64,
    seed: u64,
) -> Result<(A2rlParams, f64)> {
    if records.is_empty() {
        return Err(Error::EmptySplit("no records to fit the A2RL controller".into()));
    }
    // Static least squares of the non-kinematic residual on [a_y, 1].
    let (mut s_yy, mut s_y, mut s_1, mut s_ry, mut s_r) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in records {
        let res = r.delta - r.a_y * wheelbase / (r.v_x * r.v_x);
        s_yy += r.a_y * r.a_y;
        s_y += r.a_y;
        s_1 += 1.0;
        s_ry += res * r.a_y;
        s_r += res;
    }
    let det = s_yy * s_1 - s_y * s_y;
    let (k_us0, off0) = if det.abs() > 1e-12 {
        ((s_ry * s_1 - s_r * s_y) / det, (s_yy * s_r - s_y * s_ry) / det)
    } else {
        (0.0, s_r / s_1)
    };

    let objective = A2rlObjective { records, template: A2rlParams::kinematic(dt, wheelbase), vx_min };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for restart in 0..A2RL_RESTARTS {
        let start = if restart == 0 {
            vec![k_us0, (0.1f64).ln(), 0.0, (0.1f64).ln(), off0]
        } else {
            vec![
                k_us0 * rng.random_range(0.5..1.5),
                rng.random_range((0.01f64).ln()..(1.0f64).ln()),
                rng.random_range(-2e-4..2e-4),
                rng.random_range((0.01f64).ln()..(1.0f64).ln()),
                off0 + rng.random_range(-1e-3..1e-3),
            ]
        };
        let steps = [k_us0.abs().max(1e-4) * 0.3, 0.7, 1e-4, 0.7, 5e-4];
        let mut simplex = vec![start.clone()];
        for (k, h) in steps.iter().enumerate() {
            let mut v = start.clone();
            v[k] += h;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-12)
            .map_err(|e| Error::Argument(format!("Nelder-Mead setup: {e}")))?;
        let res = Executor::new(objective, solver)
            .configure(|s| s.max_iters(3000))
            .run()
            .map_err(|e| Error::Argument(format!("A2RL fit failed: {e}")))?;
        let state = res.state();
        if let Some(theta) = state.best_param.clone() {
            let cost = state.best_cost;
            if best.as_ref().is_none_or(|(_, c)| cost < *c) {
                best = Some((theta, cost));
            }
        }
    }
    let (theta, cost) = best.ok_or_else(|| Error::Argument("A2RL fit produced no candidate".into()))?;
    Ok((objective.params(&theta), cost))
}

/// Trains MS-NN-steer, MS-NN-base and G-NN on the training records (early
/// stopping on the validation records) and fits the A2RL controller.
/// `spec` supplies the shared window length and sizes; its kind is ignored.
pub fn train_controllers(
    spec: &ModelSpec,
    train_records: &[TelemetryRecord],
    valid_records: &[TelemetryRecord],
    tc: &TrainConfig,
) -> Result<TrainedControllers> {
    let tr = windows(train_records, spec.q, spec.sample_time)?;
    let va = windows(valid_records, spec.q, spec.sample_time)?;
    let kinds = [ModelKind::MsNnSteer, ModelKind::MsNnBase, ModelKind::Gnn];
    let mut runs: Vec<Result<(TrainedNetwork, TrainResult)>> = kinds
        .par_iter()
        .map(|&kind| {
            let s = ModelSpec { kind, ..spec.clone() };
            let run = train(&s, &tr, &va, tc).map_err(|e| Error::Argument(format!("training {kind} failed: {e}")))?;
            Ok((TrainedNetwork { network: run.network, params: run.result.best_params.clone() }, run.result))
        })
        .collect();
    let (a2rl, a2rl_fit_rmse) = fit_a2rl(train_records, spec.wheelbase, spec.sample_time, spec.vx_min, tc.seed)?;
    let (gnn, gnn_run) = runs.pop().expect("three runs")?;
    let (base, base_run) = runs.pop().expect("three runs")?;
    let (steer, steer_run) = runs.pop().expect("three runs")?;
    Ok(TrainedControllers {
        set: ControllerSet { msnn_steer: steer, msnn_base: base, gnn, a2rl },
        runs: vec![(ModelKind::MsNnSteer, steer_run), (ModelKind::MsNnBase, base_run), (ModelKind::Gnn, gnn_run)],
        a2rl_fit_rmse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub controller: Controller,
    pub split: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub delta_meas: f64,
    pub delta_msnn_steer: f64,
    pub delta_msnn_base: f64,
    pub delta_gnn: f64,
    pub delta_a2rl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<MetricRow>,
    /// Validation error statistics per controller.
    pub stats: Vec<(Controller, ErrorStats)>,
    pub trace: Vec<TraceRow>,
    pub a2rl: A2rlParams,
}

impl CompareReport {
    pub fn metrics(&self, controller: Controller, split: &str) -> Option<Metrics> {
        self.rows.iter().find(|r| r.controller == controller && r.split == split).map(|r| r.metrics)
    }

    /// CSV `controller,split,rmse_deg,fvu`.
    pub fn write_table<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["controller", "split", "rmse_deg", "fvu"])?;
        for r in &self.rows {
            w.write_record([
                r.controller.name().to_string(),
                r.split.clone(),
                r.metrics.rmse.to_string(),
                r.metrics.fvu.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV `t,delta_meas,delta_msnn_steer,delta_msnn_base,delta_gnn,delta_a2rl` [rad].
    pub fn write_trace<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "delta_meas", "delta_msnn_steer", "delta_msnn_base", "delta_gnn", "delta_a2rl"])?;
        for r in &self.trace {
            w.write_record(
                [r.t, r.delta_meas, r.delta_msnn_steer, r.delta_msnn_base, r.delta_gnn, r.delta_a2rl]
                    .map(|x| x.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.write_table(std::fs::File::create(dir.join("table.csv"))?)?;
        self.write_trace(std::fs::File::create(dir.join("trace.csv"))?)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Predictions of all four controllers at the window-start records of one split.
pub fn predict_all(
    set: &ControllerSet,
    records: &[TelemetryRecord],
    sample_time: f64,
    vx_min: f64,
) -> Result<(Vec<WindowedSample>, [Vec<f64>; 4])> {
    let q = set.msnn_steer.network.q();
    if set.msnn_base.network.q() != q || set.gnn.network.q() != q {
        return Err(Error::Argument("controllers were trained with different window lengths".into()));
    }
    let samples = windows(records, q, sample_time)?;
    let inputs: Vec<&WindowInput> = samples.iter().map(|s| &s.input).collect();
    let run = |n: &TrainedNetwork| predict(&n.network, &n.params, &inputs);
    let a2rl_all = a2rl_predict(records, &set.a2rl, vx_min)?;
    let a2rl = samples.iter().map(|s| a2rl_all[s.index]).collect();
    Ok((samples.clone(), [run(&set.msnn_steer)?, run(&set.msnn_base)?, run(&set.gnn)?, a2rl]))
}

/// Metrics on both splits, validation error statistics and the validation
/// steering trace. Pure in its inputs.
pub fn report(
    set: &ControllerSet,
    train_records: &[TelemetryRecord],
    valid_records: &[TelemetryRecord],
    sample_time: f64,
    vx_min: f64,
) -> Result<CompareReport> {
    let mut rows = Vec::new();
    let mut stats = Vec::new();
    let mut trace = Vec::new();
    for (split, records) in [("train", train_records), ("valid", valid_records)] {
        let (samples, preds) = predict_all(set, records, sample_time, vx_min)?;
        let target: Vec<f64> = samples.iter().map(|s| s.target).collect();
        for (c, pred) in Controller::ALL.iter().zip(&preds) {
            rows.push(MetricRow { controller: *c, split: split.into(), metrics: Metrics::compute(pred, &target)? });
            if split == "valid" {
                stats.push((*c, error_stats(pred, &target)?));
            }
        }
        if split == "valid" {
            trace = samples
                .iter()
                .enumerate()
                .map(|(k, s)| TraceRow {
                    t: records[s.index].t,
                    delta_meas: s.target,
                    delta_msnn_steer: preds[0][k],
                    delta_msnn_base: preds[1][k],
                    delta_gnn: preds[2][k],
                    delta_a2rl: preds[3][k],
                })
                .collect();
        }
    }
    Ok(CompareReport { rows, stats, trace, a2rl: set.a2rl })
}
