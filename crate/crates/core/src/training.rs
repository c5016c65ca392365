//! Mini-batch Adam on the MSE with full-set validation every epoch and
//! early stopping that restores the best parameters.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{eval_loss, eval_loss_and_grad_with, Differentiable, ParamVector, Tape};
use crate::models::{ModelSpec, Network};
use crate::telemetry::WindowedSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian dense-layer initialization.
    pub init_std: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Start the MS-NN mixer at the window average (`1/(q+1)` per weight).
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 8000,
            batch_size: 1000,
            patience: 1500,
            seed: 0,
            init_std: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            warm_start: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Argument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Argument(format!(
                "patience ({}) exceeds max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Argument("Adam betas must lie in [0, 1) and epsilon must be positive".into()));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::Argument("init_std must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub best_params: ParamVector,
    /// Per-epoch training RMSE over the epoch's batches [rad].
    pub train_rmse: Vec<f64>,
    /// Per-epoch full validation RMSE [rad].
    pub valid_rmse: Vec<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
    /// 1-based epoch of the best validation RMSE; 0 if no epoch ran.
    pub best_epoch: usize,
    /// Validation RMSE of `best_params` [rad].
    pub best_valid_rmse: f64,
    pub seed: u64,
}

impl TrainResult {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Loss curves as CSV `epoch,train_rmse,valid_rmse`.
    pub fn write_curves<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_rmse", "valid_rmse"])?;
        for (e, (tr, va)) in self.train_rmse.iter().zip(&self.valid_rmse).enumerate() {
            w.write_record([(e + 1).to_string(), tr.to_string(), va.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_curves(&self, path: &Path) -> Result<()> {
        self.write_curves(std::fs::File::create(path)?)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], tc: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - tc.beta1.powi(self.t);
        let c2 = 1.0 - tc.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = tc.beta1 * self.m[k] + (1.0 - tc.beta1) * g;
            self.v[k] = tc.beta2 * self.v[k] + (1.0 - tc.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= tc.learning_rate * m_hat / (v_hat.sqrt() + tc.epsilon);
        }
    }
}

/// Trains `model` from `init`. The returned parameters are those of the best
/// validation epoch (or `init` when `max_epochs == 0`).
pub fn train_from<M: Differentiable>(
    model: &M,
    init: ParamVector,
    train: &[WindowedSample],
    valid: &[WindowedSample],
    tc: &TrainConfig,
) -> Result<TrainResult> {
    tc.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Argument("training and validation sets must be non-empty".into()));
    }
    let mut params = init;
    let mut best = params.clone();
    let mut best_rmse = f64::INFINITY;
    let mut best_epoch = 0;
    let mut train_curve = Vec::new();
    let mut valid_curve = Vec::new();
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch: Vec<WindowedSample> = Vec::with_capacity(tc.batch_size.min(train.len()));
    let mut tape = Tape::new();
    let mut stopped_early = false;

    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let res = match eval_loss_and_grad_with(&mut tape, model, &params, &batch) {
                Ok(r) => r,
                Err(Error::Numeric { .. }) => return Err(Error::Diverged { epoch, batch: b, loss: f64::NAN }),
                Err(e) => return Err(e),
            };
            if !res.loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss: res.loss });
            }
            sse += res.loss * chunk.len() as f64;
            adam.update(&mut params.values, &res.gradient, tc);
        }
        let valid_mse = match eval_loss(model, &params, valid) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => return Err(Error::Diverged { epoch, batch: usize::MAX, loss: v }),
            Err(Error::Numeric { .. }) => return Err(Error::Diverged { epoch, batch: usize::MAX, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        let valid_rmse = valid_mse.sqrt();
        train_curve.push((sse / train.len() as f64).sqrt());
        valid_curve.push(valid_rmse);
        if valid_rmse < best_rmse {
            best_rmse = valid_rmse;
            best_epoch = epoch;
            best.values.copy_from_slice(&params.values);
        } else if epoch - best_epoch >= tc.patience {
            stopped_early = true;
            break;
        }
    }
    if best_epoch == 0 {
        best_rmse = eval_loss(model, &best, valid)?.sqrt();
    }
    Ok(TrainResult {
        best_params: best,
        epochs_run: train_curve.len(),
        train_rmse: train_curve,
        valid_rmse: valid_curve,
        stopped_early,
        best_epoch,
        best_valid_rmse: best_rmse,
        seed: tc.seed,
    })
}

/// A trained network together with its training record.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub result: TrainResult,
}

/// Builds the network described by `spec` on the training samples,
/// initializes it from `tc.seed` and trains it.
pub fn train(
    spec: &ModelSpec,
    train: &[WindowedSample],
    valid: &[WindowedSample],
    tc: &TrainConfig,
) -> Result<TrainedModel> {
    let network = spec.build(train)?;
    let init = network.init_params(tc.seed, tc.init_std, tc.warm_start);
    let result = train_from(&network, init, train, valid, tc)?;
    Ok(TrainedModel { network, result })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub seed: u64,
    pub learning_rate: f64,
    /// Best validation RMSE [rad].
    pub valid_rmse: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Independent training runs that differ only in seed. Runs execute on the
/// current rayon pool; results keep the order of `seeds`.
pub fn seed_sweep(
    spec: &ModelSpec,
    train_set: &[WindowedSample],
    valid: &[WindowedSample],
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<SweepEntry>> {
    if seeds.len() < 2 {
        return Err(Error::Argument("a seed sweep needs at least two seeds".into()));
    }
    let configs: Vec<TrainConfig> = seeds.iter().map(|&seed| TrainConfig { seed, ..base.clone() }).collect();
    sweep(spec, train_set, valid, &configs)
}

/// Independent runs over the given learning rates with a fixed seed.
pub fn learning_rate_sweep(
    spec: &ModelSpec,
    train_set: &[WindowedSample],
    valid: &[WindowedSample],
    base: &TrainConfig,
    rates: &[f64],
) -> Result<Vec<SweepEntry>> {
    let configs: Vec<TrainConfig> =
        rates.iter().map(|&learning_rate| TrainConfig { learning_rate, ..base.clone() }).collect();
    sweep(spec, train_set, valid, &configs)
}

fn sweep(
    spec: &ModelSpec,
    train_set: &[WindowedSample],
    valid: &[WindowedSample],
    configs: &[TrainConfig],
) -> Result<Vec<SweepEntry>> {
    configs
        .par_iter()
        .map(|tc| {
            let run = train(spec, train_set, valid, tc).map_err(|e| {
                Error::Argument(format!("run with seed {} and learning rate {}: {e}", tc.seed, tc.learning_rate))
            })?;
            Ok(SweepEntry {
                seed: tc.seed,
                learning_rate: tc.learning_rate,
                valid_rmse: run.result.best_valid_rmse,
                best_epoch: run.result.best_epoch,
                epochs_run: run.result.epochs_run,
            })
        })
        .collect()
}

/// Sample variance (divisor `n - 1`).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}
