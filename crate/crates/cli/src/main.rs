//! `msnn` command-line tool: synthetic data, training, evaluation, grid
//! search, handling diagrams, seed sweeps and the controller comparison.

mod config;
mod manifest;
mod plots;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use msnn_core::evaluation::{
    error_stats, grid_search, report, train_controllers, Controller, ErrorStats, GridResult, Metrics,
};
use msnn_core::grad::predict;
use msnn_core::models::{ModelDocument, ModelKind, Network, WindowInput};
use msnn_core::simulator::handling::speed_terciles;
use msnn_core::simulator::{
    fit_hd_polynomial, generate_laps, handling_points_from_records, run_handling_sweep, HandlingPoint,
};
use msnn_core::telemetry::{load_csv, make_windows, save_csv, select_split, DatasetSplit, TelemetryRecord};
use msnn_core::training::{learning_rate_sweep, seed_sweep, train, SweepEntry};
use serde::Serialize;

use config::{load_vehicle, RunConfig};
use manifest::Recorder;
use plots::{Series, Style};

pub const TELEMETRY_FILE: &str = "telemetry.csv";
const OUT_ENV: &str = "MSNN_OUT";

/// Error in the invocation or configuration rather than in the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "msnn", version, about = "Structured neural steering controllers on synthetic race telemetry")]
struct Cli {
    /// Worker threads for training runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also write SVG figures.
    #[arg(long, global = true)]
    plots: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: $MSNN_OUT/<command> or runs/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the training runs.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Future window length.
    #[arg(long)]
    q: Option<usize>,
    /// Membership functions along |a_y|.
    #[arg(long)]
    n_y: Option<usize>,
    /// Membership functions along a_x.
    #[arg(long)]
    n_x: Option<usize>,
    /// Membership functions along v_x.
    #[arg(long)]
    n_v: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate two laps of synthetic telemetry.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Vehicle parameters as JSON.
        #[arg(long)]
        vehicle: Option<PathBuf>,
    },
    /// Train one model on a training split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: ModelKind,
        /// Telemetry CSV or a directory containing telemetry.csv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "large")]
        split: DatasetSplit,
    },
    /// Metrics of a saved model on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// model.json written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "validation")]
        split: DatasetSplit,
    },
    /// AIC grid search over (q, n_y, n_x, n_v) for MS-NN-steer.
    Gridsearch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "large")]
        split: DatasetSplit,
        #[arg(long = "grid-q", value_delimiter = ',')]
        grid_q: Option<Vec<usize>>,
        #[arg(long = "grid-ny", value_delimiter = ',')]
        grid_ny: Option<Vec<usize>>,
        #[arg(long = "grid-nx", value_delimiter = ',')]
        grid_nx: Option<Vec<usize>>,
        #[arg(long = "grid-nv", value_delimiter = ',')]
        grid_nv: Option<Vec<usize>>,
    },
    /// Handling diagram with one polynomial fit per speed tercile.
    Hd {
        #[command(flatten)]
        common: Common,
        /// Telemetry to extract points from; without it the vehicle is swept
        /// through steady states.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        vehicle: Option<PathBuf>,
        /// Lap of the telemetry to use.
        #[arg(long, default_value_t = 1)]
        lap: u32,
        #[arg(long, default_value_t = 3)]
        degree: usize,
    },
    /// Validation RMSE over seeds (and optionally learning rates).
    Seedsweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "large")]
        split: DatasetSplit,
        /// Number of seeds, 0..N.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_value = "msnn-steer,gnn")]
        models: Vec<ModelKind>,
        /// Also sweep these learning rates at the base seed.
        #[arg(long, value_delimiter = ',')]
        lrs: Option<Vec<f64>>,
    },
    /// Train all four controllers and tabulate RMSE and FVU on both splits.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "large")]
        split: DatasetSplit,
    },
}

struct Ctx {
    config: RunConfig,
    out: PathBuf,
    plots: bool,
}

fn name_of(command: &Command) -> &'static str {
    match command {
        Command::Simulate { .. } => "simulate",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Gridsearch { .. } => "gridsearch",
        Command::Hd { .. } => "hd",
        Command::Seedsweep { .. } => "seedsweep",
        Command::Compare { .. } => "compare",
    }
}

fn common_of(command: &Command) -> &Common {
    match command {
        Command::Simulate { common, .. }
        | Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Gridsearch { common, .. }
        | Command::Hd { common, .. }
        | Command::Seedsweep { common, .. }
        | Command::Compare { common, .. } => common,
    }
}

fn build_ctx(name: &str, common: &Common, plots: bool) -> anyhow::Result<Ctx> {
    let mut config = RunConfig::load(common.config.as_deref())?;
    let t = &mut config.train;
    if let Some(v) = common.seed {
        t.seed = v;
    }
    if let Some(v) = common.epochs {
        t.max_epochs = v;
        t.patience = t.patience.min(v);
    }
    if let Some(v) = common.lr {
        t.learning_rate = v;
    }
    if let Some(v) = common.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = common.patience {
        t.patience = v;
    }
    let m = &mut config.model;
    for (field, flag) in
        [(&mut m.q, common.q), (&mut m.n_y, common.n_y), (&mut m.n_x, common.n_x), (&mut m.n_v, common.n_v)]
    {
        if let Some(v) = flag {
            *field = v;
        }
    }
    config.train.validate().map_err(|e| UsageError(format!("training configuration: {e}")))?;
    let m = &config.model;
    if m.q == 0 || m.n_y == 0 || m.n_x == 0 || m.n_v == 0 || m.n_neur == 0 {
        return Err(UsageError("q, n_y, n_x, n_v and n_neur must be at least 1".into()).into());
    }
    let out = match &common.out {
        Some(p) => p.clone(),
        None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| "runs".into()).join(name),
    };
    Ok(Ctx { config, out, plots })
}

fn telemetry_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(TELEMETRY_FILE)
    } else {
        data.to_path_buf()
    }
}

fn load_records(rec: &mut Recorder, data: &Path, vx_min: f64) -> anyhow::Result<Vec<TelemetryRecord>> {
    let path = telemetry_path(data);
    rec.input(&path);
    load_csv(&path, vx_min).with_context(|| format!("loading {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn write_svg(rec: &mut Recorder, name: &str, svg: String) -> anyhow::Result<()> {
    std::fs::write(rec.output(name), svg)?;
    Ok(())
}

fn simulate(ctx: &Ctx, vehicle: Option<&Path>, seed: u64) -> anyhow::Result<()> {
    let mut config = ctx.config.clone();
    if let Some(p) = vehicle {
        config.vehicle = load_vehicle(p)?;
    }
    let mut rec = Recorder::new("simulate", &config, seed, &ctx.out)?;
    if let Some(p) = vehicle {
        rec.input(p);
    }
    let laps = generate_laps(&config.vehicle, &config.laps, seed)?;
    save_csv(&rec.output(TELEMETRY_FILE), &laps.records)?;
    write_json(&rec.output("generation.json"), &laps.report)?;
    rec.summary("records", laps.records.len());
    rec.summary("retries", laps.report.laps.iter().map(|l| l.retries).collect::<Vec<_>>());
    if ctx.plots {
        let series = [1u32, 2]
            .iter()
            .map(|&lap| Series {
                name: format!("lap {lap}"),
                points: laps.records.iter().filter(|r| r.lap == lap).map(|r| (r.t, r.v_x)).collect(),
                style: Style::Line,
            })
            .collect::<Vec<_>>();
        write_svg(&mut rec, "speed.svg", plots::chart("Speed", "t [s]", "v_x [m/s]", &series))?;
    }
    finish(rec)
}

#[derive(Serialize)]
struct SplitMetrics {
    split: String,
    metrics: Metrics,
    error_stats: ErrorStats,
}

fn evaluate(
    network: &Network,
    params: &msnn_core::grad::ParamVector,
    records: &[TelemetryRecord],
    split: DatasetSplit,
    sample_time: f64,
) -> anyhow::Result<SplitMetrics> {
    let samples = make_windows(&select_split(records, split)?, network.q(), sample_time)?;
    if samples.is_empty() {
        bail!(msnn_core::Error::EmptySplit(format!("{} has no window of length {}", split.name(), network.q() + 1)));
    }
    let inputs: Vec<&WindowInput> = samples.iter().map(|s| &s.input).collect();
    let pred = predict(network, params, &inputs)?;
    let target: Vec<f64> = samples.iter().map(|s| s.target).collect();
    Ok(SplitMetrics {
        split: split.name().into(),
        metrics: Metrics::compute(&pred, &target)?,
        error_stats: error_stats(&pred, &target)?,
    })
}

fn train_cmd(ctx: &Ctx, kind: ModelKind, data: &Path, split: DatasetSplit) -> anyhow::Result<()> {
    let config = &ctx.config;
    let spec = msnn_core::models::ModelSpec { kind, ..config.model.clone() };
    let mut rec = Recorder::new("train", config, config.train.seed, &ctx.out)?;
    let records = load_records(&mut rec, data, spec.vx_min)?;
    let tr = make_windows(&select_split(&records, split)?, spec.q, spec.sample_time)?;
    let va = make_windows(&select_split(&records, DatasetSplit::Validation)?, spec.q, spec.sample_time)?;
    let run = train(&spec, &tr, &va, &config.train)?;
    ModelDocument::new(run.network.clone(), &run.result.best_params)?.save(&rec.output("model.json"))?;
    run.result.save_json(&rec.output("train_result.json"))?;
    run.result.save_curves(&rec.output("curves.csv"))?;
    let metrics = vec![
        evaluate(&run.network, &run.result.best_params, &records, split, spec.sample_time)?,
        evaluate(&run.network, &run.result.best_params, &records, DatasetSplit::Validation, spec.sample_time)?,
    ];
    write_json(&rec.output("metrics.json"), &metrics)?;
    rec.summary("model", kind.name());
    rec.summary("split", split.name());
    rec.summary("param_count", run.network.param_count());
    rec.summary("best_epoch", run.result.best_epoch);
    rec.summary("valid_rmse_deg", run.result.best_valid_rmse.to_degrees());
    if ctx.plots {
        let curve = |v: &[f64]| v.iter().enumerate().map(|(e, r)| ((e + 1) as f64, r.to_degrees())).collect();
        let series = [
            Series { name: "train".into(), points: curve(&run.result.train_rmse), style: Style::Line },
            Series { name: "validation".into(), points: curve(&run.result.valid_rmse), style: Style::Line },
        ];
        write_svg(&mut rec, "curves.svg", plots::chart("Loss curves", "epoch", "RMSE [deg]", &series))?;
    }
    println!(
        "{}: {} parameters, best validation RMSE {:.4} deg at epoch {}",
        kind,
        run.network.param_count(),
        run.result.best_valid_rmse.to_degrees(),
        run.result.best_epoch
    );
    finish(rec)
}

fn eval_cmd(ctx: &Ctx, model: &Path, data: &Path, split: DatasetSplit) -> anyhow::Result<()> {
    let mut rec = Recorder::new("eval", &ctx.config, ctx.config.train.seed, &ctx.out)?;
    rec.input(model);
    let (network, params) = ModelDocument::load(model)?.into_parts()?;
    let vx_min = match &network {
        Network::MsNn(m) => m.config.vx_min,
        Network::Gnn(_) => ctx.config.model.vx_min,
    };
    let records = load_records(&mut rec, data, vx_min)?;
    let m = evaluate(&network, &params, &records, split, ctx.config.model.sample_time)?;
    write_json(&rec.output("metrics.json"), &m)?;
    println!("{} on {}: RMSE {:.4} deg, FVU {:.4}", network.kind(), m.split, m.metrics.rmse, m.metrics.fvu);
    rec.summary("rmse_deg", m.metrics.rmse);
    rec.summary("fvu", m.metrics.fvu);
    finish(rec)
}

fn grid_heatmaps(rec: &mut Recorder, result: &GridResult) -> anyhow::Result<()> {
    let mut pairs: Vec<(usize, usize)> = result.cells.iter().map(|c| (c.q, c.n_y)).collect();
    pairs.dedup();
    for (q, n_y) in pairs {
        let cells: Vec<_> = result.cells.iter().filter(|c| c.q == q && c.n_y == n_y).collect();
        let mut nx: Vec<usize> = cells.iter().map(|c| c.n_x).collect();
        let mut nv: Vec<usize> = cells.iter().map(|c| c.n_v).collect();
        nx.dedup();
        nv.sort();
        nv.dedup();
        let values: Vec<Vec<f64>> = nx
            .iter()
            .map(|&x| {
                nv.iter()
                    .map(|&v| cells.iter().find(|c| c.n_x == x && c.n_v == v).and_then(|c| c.aic).unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        let svg = plots::heatmap(&format!("AIC, q = {q}, n_y = {n_y}"), "n_x", "n_v", &nx, &nv, &values);
        write_svg(rec, &format!("aic_q{q}_ny{n_y}.svg"), svg)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gridsearch_cmd(
    ctx: &Ctx,
    data: &Path,
    split: DatasetSplit,
    q: Option<Vec<usize>>,
    n_y: Option<Vec<usize>>,
    n_x: Option<Vec<usize>>,
    n_v: Option<Vec<usize>>,
) -> anyhow::Result<()> {
    let mut config = ctx.config.clone();
    let g = &mut config.grid;
    for (axis, flag) in [(&mut g.q, q), (&mut g.n_y, n_y), (&mut g.n_x, n_x), (&mut g.n_v, n_v)] {
        if let Some(v) = flag {
            *axis = v;
        }
    }
    config.grid.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut rec = Recorder::new("gridsearch", &config, config.train.seed, &ctx.out)?;
    let records = load_records(&mut rec, data, config.model.vx_min)?;
    let result = grid_search(
        &config.model,
        &config.grid,
        &select_split(&records, split)?,
        &select_split(&records, DatasetSplit::Validation)?,
        &config.train,
    )?;
    result.save_csv(&rec.output("grid.csv"))?;
    write_json(&rec.output("grid.json"), &result)?;
    let failed = result.cells.iter().filter(|c| c.error.is_some()).count();
    rec.summary("cells", result.cells.len());
    rec.summary("failed_cells", failed);
    rec.summary("best", result.best_cell());
    if ctx.plots {
        grid_heatmaps(&mut rec, &result)?;
    }
    match result.best_cell() {
        Some(b) => println!(
            "best cell q={} n_y={} n_x={} n_v={}: AIC {:.1}, RMSE {:.4} deg, {} parameters ({} of {} cells failed)",
            b.q,
            b.n_y,
            b.n_x,
            b.n_v,
            b.aic.unwrap_or(f64::NAN),
            b.rmse.unwrap_or(f64::NAN),
            b.n_params,
            failed,
            result.cells.len()
        ),
        None => println!("every cell failed to train"),
    }
    finish(rec)
}

fn hd_cmd(ctx: &Ctx, data: Option<&Path>, vehicle: Option<&Path>, lap: u32, degree: usize) -> anyhow::Result<()> {
    let mut config = ctx.config.clone();
    if let Some(p) = vehicle {
        config.vehicle = load_vehicle(p)?;
    }
    let mut rec = Recorder::new("hd", &config, 0, &ctx.out)?;
    let points: Vec<HandlingPoint> = match data {
        Some(d) => {
            let records = load_records(&mut rec, d, config.model.vx_min)?;
            let lap_records: Vec<TelemetryRecord> = records.into_iter().filter(|r| r.lap == lap).collect();
            if lap_records.is_empty() {
                bail!(msnn_core::Error::EmptySplit(format!("lap {lap}")));
            }
            handling_points_from_records(&lap_records, config.vehicle.wheelbase)
        }
        None => {
            if let Some(p) = vehicle {
                rec.input(p);
            }
            let speeds: Vec<f64> = (0..=30).map(|k| 20.0 + 2.0 * k as f64).collect();
            let top = 0.95 * config.vehicle.max_lateral_accel(speeds[0]);
            let targets: Vec<f64> = (1..=30).map(|k| top * k as f64 / 30.0).collect();
            run_handling_sweep(&config.vehicle, &speeds, &targets)?
        }
    };
    let mut w = csv::Writer::from_path(rec.output("hd_points.csv"))?;
    w.write_record(["v_x", "a_y", "hd_ordinate"])?;
    for p in &points {
        w.write_record([p.v_x.to_string(), p.a_y.to_string(), p.hd_ordinate.to_string()])?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct BinFit {
        v_lo: f64,
        v_hi: f64,
        fit: msnn_core::simulator::HdFit,
    }
    let mut series = vec![Series {
        name: "points".into(),
        points: points.iter().map(|p| (p.a_y, p.hd_ordinate.to_degrees())).collect(),
        style: Style::Points,
    }];
    let a_max = points.iter().fold(0.0f64, |m, p| m.max(p.a_y));
    for (k, (lo, hi, pts)) in speed_terciles(&points).into_iter().enumerate() {
        let fit = fit_hd_polynomial(&pts, degree)?;
        println!("speed bin {:.1}-{:.1} m/s: {} points, fit RMSE {:.2e} rad", lo, hi, fit.n_points, fit.rmse);
        series.push(Series {
            name: format!("{lo:.0}-{hi:.0} m/s"),
            points: (0..=50).map(|i| a_max * i as f64 / 50.0).map(|a| (a, fit.eval(a).to_degrees())).collect(),
            style: Style::Line,
        });
        write_json(&rec.output(&format!("hd_bin_{}.json", k + 1)), &BinFit { v_lo: lo, v_hi: hi, fit })?;
    }
    rec.summary("points", points.len());
    if ctx.plots {
        write_svg(
            &mut rec,
            "hd.svg",
            plots::chart("Handling diagram", "|a_y| [m/s²]", "δ - a_y L / v_x² [deg]", &series),
        )?;
    }
    finish(rec)
}

fn write_sweep(path: &Path, entries: &[SweepEntry]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "learning_rate", "valid_rmse_deg", "best_epoch", "epochs_run"])?;
    for e in entries {
        w.write_record([
            e.seed.to_string(),
            e.learning_rate.to_string(),
            e.valid_rmse.to_degrees().to_string(),
            e.best_epoch.to_string(),
            e.epochs_run.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn five_numbers(xs: &[f64]) -> [f64; 5] {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| msnn_core::evaluation::metrics::quantile_sorted(&s, p);
    [s[0], q(0.25), q(0.5), q(0.75), s[s.len() - 1]]
}

fn seedsweep_cmd(
    ctx: &Ctx,
    data: &Path,
    split: DatasetSplit,
    n_seeds: u64,
    models: &[ModelKind],
    lrs: Option<&[f64]>,
) -> anyhow::Result<()> {
    if n_seeds < 2 {
        return Err(UsageError("--seeds needs at least 2".into()).into());
    }
    let config = &ctx.config;
    let mut rec = Recorder::new("seedsweep", config, config.train.seed, &ctx.out)?;
    let records = load_records(&mut rec, data, config.model.vx_min)?;
    let (q, dt) = (config.model.q, config.model.sample_time);
    let tr = make_windows(&select_split(&records, split)?, q, dt)?;
    let va = make_windows(&select_split(&records, DatasetSplit::Validation)?, q, dt)?;
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let mut boxes = Vec::new();
    for &kind in models {
        let spec = msnn_core::models::ModelSpec { kind, ..config.model.clone() };
        let entries = seed_sweep(&spec, &tr, &va, &config.train, &seeds)?;
        write_sweep(&rec.output(&format!("seedsweep_{kind}.csv")), &entries)?;
        let rmse: Vec<f64> = entries.iter().map(|e| e.valid_rmse.to_degrees()).collect();
        let var = msnn_core::training::sample_variance(&rmse);
        println!("{kind}: validation RMSE over {n_seeds} seeds, variance {var:.3e} deg²");
        rec.summary(&format!("variance_{kind}"), var);
        boxes.push((kind.name().to_string(), five_numbers(&rmse)));
        if let Some(rates) = lrs {
            let entries = learning_rate_sweep(&spec, &tr, &va, &config.train, rates)?;
            write_sweep(&rec.output(&format!("lrsweep_{kind}.csv")), &entries)?;
        }
    }
    if ctx.plots {
        write_svg(&mut rec, "seedsweep.svg", plots::boxplot("Validation RMSE over seeds", "RMSE [deg]", &boxes))?;
    }
    finish(rec)
}

fn compare_cmd(ctx: &Ctx, data: &Path, split: DatasetSplit) -> anyhow::Result<()> {
    let config = &ctx.config;
    let spec = &config.model;
    let mut rec = Recorder::new("compare", config, config.train.seed, &ctx.out)?;
    let records = load_records(&mut rec, data, spec.vx_min)?;
    let train_records = select_split(&records, split)?;
    let valid_records = select_split(&records, DatasetSplit::Validation)?;
    let trained = train_controllers(spec, &train_records, &valid_records, &config.train)?;
    let rep = report(&trained.set, &train_records, &valid_records, spec.sample_time, spec.vx_min)?;
    rep.save(&ctx.out)?;
    for name in ["table.csv", "trace.csv", "report.json"] {
        rec.output(name);
    }
    write_json(&rec.output("controllers.json"), &trained.set)?;
    println!("{:<12} {:>10} {:>10} {:>10}", "controller", "split", "RMSE[deg]", "FVU");
    for r in &rep.rows {
        println!("{:<12} {:>10} {:>10.4} {:>10.4}", r.controller.name(), r.split, r.metrics.rmse, r.metrics.fvu);
    }
    for c in Controller::ALL {
        if let Some(m) = rep.metrics(c, "valid") {
            rec.summary(&format!("valid_rmse_{}", c.name()), m.rmse);
        }
    }
    if ctx.plots {
        let boxes: Vec<(String, [f64; 5])> = rep
            .stats
            .iter()
            .map(|(c, s)| (c.name().to_string(), [s.whisker_low, s.q1, s.median, s.q3, s.whisker_high]))
            .collect();
        write_svg(&mut rec, "errors.svg", plots::boxplot("Validation steering errors", "error [deg]", &boxes))?;
        let pick = |f: fn(&msnn_core::evaluation::compare::TraceRow) -> f64| {
            rep.trace.iter().map(|r| (r.t, f(r).to_degrees())).collect::<Vec<_>>()
        };
        let series = [
            Series { name: "measured".into(), points: pick(|r| r.delta_meas), style: Style::Line },
            Series { name: "msnn-steer".into(), points: pick(|r| r.delta_msnn_steer), style: Style::Line },
            Series { name: "msnn-base".into(), points: pick(|r| r.delta_msnn_base), style: Style::Line },
            Series { name: "gnn".into(), points: pick(|r| r.delta_gnn), style: Style::Line },
            Series { name: "a2rl".into(), points: pick(|r| r.delta_a2rl), style: Style::Line },
        ];
        write_svg(&mut rec, "trace.svg", plots::chart("Validation steering", "t [s]", "δ [deg]", &series))?;
    }
    finish(rec)
}

fn finish(rec: Recorder) -> anyhow::Result<()> {
    let path = rec.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let name = name_of(&cli.command);
    let common = common_of(&cli.command).clone();
    let ctx = build_ctx(name, &common, cli.plots)?;
    match &cli.command {
        Command::Simulate { vehicle, .. } => simulate(&ctx, vehicle.as_deref(), common.seed.unwrap_or(0)),
        Command::Train { model, data, split, .. } => train_cmd(&ctx, *model, data, *split),
        Command::Eval { model, data, split, .. } => eval_cmd(&ctx, model, data, *split),
        Command::Gridsearch { data, split, grid_q, grid_ny, grid_nx, grid_nv, .. } => {
            gridsearch_cmd(&ctx, data, *split, grid_q.clone(), grid_ny.clone(), grid_nx.clone(), grid_nv.clone())
        }
        Command::Hd { data, vehicle, lap, degree, .. } => {
            hd_cmd(&ctx, data.as_deref(), vehicle.as_deref(), *lap, *degree)
        }
        Command::Seedsweep { data, split, seeds, models, lrs, .. } => {
            seedsweep_cmd(&ctx, data, *split, *seeds, models, lrs.as_deref())
        }
        Command::Compare { data, split, .. } => compare_cmd(&ctx, data, *split),
    }
}

/// 2 usage, 3 data, 4 numeric, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<msnn_core::Error>() {
            if e.is_numeric_error() {
                return 4;
            }
            if e.is_data_error() || matches!(e, msnn_core::Error::Io(_)) {
                return 3;
            }
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<csv::Error>().is_some() {
            return 3;
        }
    }
    1
}

/// The error chain joined by ": ", skipping causes already quoted by the
/// message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !parts.last().is_some_and(|p| p.ends_with(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
