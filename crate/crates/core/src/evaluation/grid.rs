//! AIC grid search over `(q, n_y, n_x, n_v)` for MS-NN-steer.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{aic, mse};
use crate::error::{Error, Result};
use crate::grad::predict;
use crate::models::{ModelKind, ModelSpec, WindowInput};
use crate::telemetry::{make_windows, TelemetryRecord, WindowedSample};
use crate::training::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q: Vec<usize>,
    pub n_y: Vec<usize>,
    pub n_x: Vec<usize>,
    pub n_v: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { q: vec![4, 9, 14], n_y: vec![3, 5, 7], n_x: (3..=7).collect(), n_v: (3..=7).collect() }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.q.is_empty() || self.n_y.is_empty() || self.n_x.is_empty() || self.n_v.is_empty() {
            return Err(Error::Argument("every grid axis needs at least one value".into()));
        }
        Ok(())
    }

    /// All cells in lexicographic `(q, n_y, n_x, n_v)` order.
    pub fn cells(&self) -> Vec<[usize; 4]> {
        let mut out = Vec::new();
        for &q in &self.q {
            for &ny in &self.n_y {
                for &nx in &self.n_x {
                    for &nv in &self.n_v {
                        out.push([q, ny, nx, nv]);
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub q: usize,
    pub n_y: usize,
    pub n_x: usize,
    pub n_v: usize,
    pub n_params: usize,
    pub seed: u64,
    /// `None` when training failed.
    pub aic: Option<f64>,
    /// Validation RMSE [deg].
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the selected configuration.
    pub best: Option<usize>,
    /// Number of validation samples every cell was scored on.
    pub n_samples: usize,
}

impl GridResult {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }

    /// CSV `q,n_y,n_x,n_v,aic,rmse,n_params`; failed cells carry `NaN`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["q", "n_y", "n_x", "n_v", "aic", "rmse", "n_params"])?;
        for c in &self.cells {
            w.write_record([
                c.q.to_string(),
                c.n_y.to_string(),
                c.n_x.to_string(),
                c.n_v.to_string(),
                c.aic.unwrap_or(f64::NAN).to_string(),
                c.rmse.unwrap_or(f64::NAN).to_string(),
                c.n_params.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Seed of cell `index` derived from the base seed.
pub fn cell_seed(base: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64 + 1);
    rng.next_u64()
}

/// Index of the lowest AIC; ties go to fewer parameters, then to the
/// lexicographically smaller `(q, n_y, n_x, n_v)`.
pub fn select_best(cells: &[GridCell]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.aic.filter(|a| a.is_finite()).map(|a| (i, a, c)))
        .min_by(|(_, a, c), (_, b, d)| {
            a.total_cmp(b)
                .then(c.n_params.cmp(&d.n_params))
                .then([c.q, c.n_y, c.n_x, c.n_v].cmp(&[d.q, d.n_y, d.n_x, d.n_v]))
        })
        .map(|(i, _, _)| i)
}

/// Trains one MS-NN-steer per cell and scores it by validation AIC. All cells
/// are scored on the validation windows whose start index admits the largest
/// `q` of the grid, so the sample count is the same everywhere.
pub fn grid_search(
    base: &ModelSpec,
    grid: &GridSpec,
    train_records: &[TelemetryRecord],
    valid_records: &[TelemetryRecord],
    tc: &TrainConfig,
) -> Result<GridResult> {
    grid.validate()?;
    let sample_time = base.sample_time;
    let q_max = *grid.q.iter().max().expect("validated non-empty");
    let common: HashSet<usize> =
        make_windows(valid_records, q_max, sample_time)?.into_iter().map(|s| s.index).collect();
    if common.is_empty() {
        return Err(Error::EmptySplit(format!("validation data has no window of length {}", q_max + 1)));
    }

    let mut windows: BTreeMap<usize, (Vec<WindowedSample>, Vec<WindowedSample>)> = BTreeMap::new();
    for &q in &grid.q {
        let tr = make_windows(train_records, q, sample_time)?;
        let va: Vec<WindowedSample> =
            make_windows(valid_records, q, sample_time)?.into_iter().filter(|s| common.contains(&s.index)).collect();
        windows.insert(q, (tr, va));
    }

    let cells = grid.cells();
    let results: Vec<GridCell> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &[q, n_y, n_x, n_v])| {
            let spec = ModelSpec { kind: ModelKind::MsNnSteer, q, n_y, n_x, n_v, ..base.clone() };
            let seed = cell_seed(tc.seed, idx);
            let mut cell =
                GridCell { q, n_y, n_x, n_v, n_params: spec.param_count(), seed, aic: None, rmse: None, error: None };
            let (tr, va) = &windows[&q];
            let outcome = (|| -> Result<(f64, f64)> {
                let run = train(&spec, tr, va, &TrainConfig { seed, ..tc.clone() })?;
                let inputs: Vec<&WindowInput> = va.iter().map(|s| &s.input).collect();
                let pred = predict(&run.network, &run.result.best_params, &inputs)?;
                let target: Vec<f64> = va.iter().map(|s| s.target).collect();
                let m = mse(&pred, &target)?;
                Ok((aic(va.len(), m, spec.param_count())?, m.sqrt().to_degrees()))
            })();
            match outcome {
                Ok((a, r)) => {
                    cell.aic = Some(a);
                    cell.rmse = Some(r);
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cell
        })
        .collect();
    let best = select_best(&results);
    Ok(GridResult { cells: results, best, n_samples: common.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(q: usize, n_params: usize, aic: Option<f64>) -> GridCell {
        GridCell { q, n_y: 3, n_x: 3, n_v: 3, n_params, seed: 0, aic, rmse: aic, error: None }
    }

    #[test]
    fn single_cell_is_argmin() {
        assert_eq!(select_best(&[cell(4, 10, Some(-5.0))]), Some(0));
    }

    #[test]
    fn ties_prefer_fewer_parameters() {
        let cells = [cell(9, 20, Some(-5.0)), cell(9, 10, Some(-5.0)), cell(4, 10, None)];
        assert_eq!(select_best(&cells), Some(1));
        let cells = [cell(9, 10, Some(-5.0)), cell(4, 10, Some(-5.0))];
        assert_eq!(select_best(&cells), Some(1));
    }

    #[test]
    fn failed_cells_are_excluded() {
        assert_eq!(select_best(&[cell(4, 1, None), cell(9, 100, Some(3.0))]), Some(1));
        assert_eq!(select_best(&[cell(4, 1, None)]), None);
    }

    #[test]
    fn cells_are_lexicographic_and_complete() {
        let cells = GridSpec::default().cells();
        assert_eq!(cells.len(), 225);
        assert!(cells.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cell_seeds_differ() {
        let seeds: HashSet<u64> = (0..225).map(|i| cell_seed(7, i)).collect();
        assert_eq!(seeds.len(), 225);
        assert_eq!(cell_seed(7, 3), cell_seed(7, 3));
    }
}
