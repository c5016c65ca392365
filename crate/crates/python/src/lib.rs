//! Python bindings: `import msnn`.

use std::path::PathBuf;

use msnn_core::evaluation::Metrics;
use msnn_core::grad::{predict, ParamVector};
use msnn_core::models::{
    a2rl_step as step, A2rlParams, A2rlState, ModelDocument, ModelKind, ModelSpec, Network, WindowInput, VX_MIN,
};
use msnn_core::simulator::{generate_laps, LapConfig, VehicleParams};
use msnn_core::telemetry::{load_csv, make_windows, save_csv, select_split, DatasetSplit, TelemetryRecord};
use msnn_core::training::{train as fit, TrainConfig};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: msnn_core::Error) -> PyErr {
    if e.is_numeric_error() {
        PyArithmeticError::new_err(e.to_string())
    } else if matches!(e, msnn_core::Error::Io(_)) {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse<T: serde::de::DeserializeOwned + Default>(json: Option<&str>, what: &str) -> PyResult<T> {
    match json {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("{what}: {e}"))),
    }
}

fn kind_of(name: &str) -> PyResult<ModelKind> {
    name.parse().map_err(|e: msnn_core::Error| PyValueError::new_err(e.to_string()))
}

/// Two synthetic laps as a dict of columns. Configuration overrides are JSON
/// objects; `path` also writes the telemetry CSV.
#[pyfunction]
#[pyo3(signature = (seed=0, vehicle=None, laps=None, path=None))]
fn simulate<'py>(
    py: Python<'py>,
    seed: u64,
    vehicle: Option<&str>,
    laps: Option<&str>,
    path: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let vehicle: VehicleParams = parse(vehicle, "vehicle")?;
    let laps: LapConfig = parse(laps, "laps")?;
    let out = py.detach(|| generate_laps(&vehicle, &laps, seed)).map_err(to_py)?;
    if let Some(p) = path {
        save_csv(&p, &out.records).map_err(to_py)?;
    }
    let r = &out.records;
    let d = PyDict::new(py);
    let col = |f: fn(&TelemetryRecord) -> f64| r.iter().map(f).collect::<Vec<f64>>();
    d.set_item("t", col(|x| x.t))?;
    d.set_item("v_x", col(|x| x.v_x))?;
    d.set_item("a_x", col(|x| x.a_x))?;
    d.set_item("a_y", col(|x| x.a_y))?;
    d.set_item("delta", col(|x| x.delta))?;
    d.set_item("sector", r.iter().map(|x| x.sector).collect::<Vec<u8>>())?;
    d.set_item("lap", r.iter().map(|x| x.lap).collect::<Vec<u32>>())?;
    Ok(d)
}

/// Trainable parameter count of a model structure.
#[pyfunction]
#[pyo3(signature = (kind, q=9, n_y=5, n_x=3, n_v=3))]
fn param_count(kind: &str, q: usize, n_y: usize, n_x: usize, n_v: usize) -> PyResult<usize> {
    Ok(ModelSpec { kind: kind_of(kind)?, q, n_y, n_x, n_v, ..ModelSpec::default() }.param_count())
}

/// RMSE in degrees and fraction of variance unexplained; inputs in radians.
#[pyfunction]
fn metrics<'py>(py: Python<'py>, pred: Vec<f64>, target: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let m = Metrics::compute(&pred, &target).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("rmse", m.rmse)?;
    d.set_item("fvu", m.fvu)?;
    d.set_item("n_samples", m.n_samples)?;
    Ok(d)
}

/// One step of the A2RL baseline. Returns `(delta, state)` where `state` is
/// `(delta_us, a_x_filtered)` to pass to the next call.
#[pyfunction]
#[pyo3(signature = (a_y, a_x, v_x, k_us, t_us, k_ax, t_ax, delta_off, dt=0.05, wheelbase=3.0, state=(0.0, 0.0), vx_min=VX_MIN))]
#[allow(clippy::too_many_arguments)]
fn a2rl_step(
    a_y: f64,
    a_x: f64,
    v_x: f64,
    k_us: f64,
    t_us: f64,
    k_ax: f64,
    t_ax: f64,
    delta_off: f64,
    dt: f64,
    wheelbase: f64,
    state: (f64, f64),
    vx_min: f64,
) -> PyResult<(f64, (f64, f64))> {
    let params = A2rlParams { k_us, t_us, k_ax, t_ax, delta_off, dt, wheelbase };
    params.validate().map_err(to_py)?;
    let state = A2rlState { delta_us_prev: state.0, ax_filter_prev: state.1 };
    let (delta, next) = step(a_y, a_x, v_x, &params, state, vx_min).map_err(to_py)?;
    Ok((delta, (next.delta_us_prev, next.ax_filter_prev)))
}

/// A trained model with its parameters.
#[pyclass(module = "msnn")]
struct Model {
    network: Network,
    params: ParamVector,
    /// Best validation RMSE in degrees, when trained in this session.
    #[pyo3(get)]
    valid_rmse: Option<f64>,
    #[pyo3(get)]
    best_epoch: Option<usize>,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (network, params) = ModelDocument::load(&path).and_then(ModelDocument::into_parts).map_err(to_py)?;
        Ok(Self { network, params, valid_rmse: None, best_epoch: None })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        ModelDocument::new(self.network.clone(), &self.params).and_then(|d| d.save(&path)).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> String {
        self.network.kind().to_string()
    }

    #[getter]
    fn q(&self) -> usize {
        self.network.q()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.network.param_count()
    }

    /// Steering angle [rad] for each window. Each argument is a list of
    /// windows of length q + 1.
    fn predict(&self, a_y: Vec<Vec<f64>>, a_x: Vec<Vec<f64>>, v_x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        if a_y.len() != a_x.len() || a_y.len() != v_x.len() {
            return Err(PyValueError::new_err("a_y, a_x and v_x need the same number of windows"));
        }
        let windows = a_y
            .into_iter()
            .zip(a_x)
            .zip(v_x)
            .map(|((y, x), v)| WindowInput::new(y, x, v))
            .collect::<msnn_core::Result<Vec<_>>>()
            .map_err(to_py)?;
        let refs: Vec<&WindowInput> = windows.iter().collect();
        predict(&self.network, &self.params, &refs).map_err(to_py)
    }

    /// Metrics on one split of a telemetry CSV.
    #[pyo3(signature = (telemetry, split="validation"))]
    fn evaluate<'py>(&self, py: Python<'py>, telemetry: PathBuf, split: &str) -> PyResult<Bound<'py, PyDict>> {
        let split: DatasetSplit = split.parse().map_err(to_py)?;
        let records = load_csv(&telemetry, VX_MIN).map_err(to_py)?;
        let samples =
            make_windows(&select_split(&records, split).map_err(to_py)?, self.q(), ModelSpec::default().sample_time)
                .map_err(to_py)?;
        let refs: Vec<&WindowInput> = samples.iter().map(|s| &s.input).collect();
        let pred = predict(&self.network, &self.params, &refs).map_err(to_py)?;
        let target: Vec<f64> = samples.iter().map(|s| s.target).collect();
        metrics(py, pred, target)
    }

    fn __repr__(&self) -> String {
        format!("Model(kind='{}', q={}, params={})", self.kind(), self.q(), self.param_count())
    }
}

/// Trains a model on a telemetry CSV. `model` and `config` are JSON overrides
/// of the model structure and training settings.
#[pyfunction]
#[pyo3(signature = (kind, telemetry, split="large", epochs=None, seed=None, model=None, config=None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    kind: &str,
    telemetry: PathBuf,
    split: &str,
    epochs: Option<usize>,
    seed: Option<u64>,
    model: Option<&str>,
    config: Option<&str>,
) -> PyResult<Model> {
    let mut spec: ModelSpec = parse(model, "model")?;
    spec.kind = kind_of(kind)?;
    let mut tc: TrainConfig = parse(config, "config")?;
    if let Some(e) = epochs {
        tc.max_epochs = e;
        tc.patience = tc.patience.min(e);
    }
    if let Some(s) = seed {
        tc.seed = s;
    }
    let split: DatasetSplit = split.parse().map_err(to_py)?;
    let run = py
        .detach(|| {
            let records = load_csv(&telemetry, spec.vx_min)?;
            let tr = make_windows(&select_split(&records, split)?, spec.q, spec.sample_time)?;
            let va = make_windows(&select_split(&records, DatasetSplit::Validation)?, spec.q, spec.sample_time)?;
            fit(&spec, &tr, &va, &tc)
        })
        .map_err(to_py)?;
    Ok(Model {
        valid_rmse: Some(run.result.best_valid_rmse.to_degrees()),
        best_epoch: Some(run.result.best_epoch),
        network: run.network,
        params: run.result.best_params,
    })
}

#[pymodule]
pub fn msnn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("VX_MIN", VX_MIN)?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(param_count, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(a2rl_step, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
