//! Command-line front end. Every command writes into `--out` and leaves a
//! `run.json` manifest with the resolved configuration and SHA-256 hashes
//! of its inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dataset::{build_dataset, Dataset, DatasetOptions, Regime};
use crate::error::{Error, Result};
use crate::experiment::{
    dataset_options, desk_flow, evaluate_model, spread_starts, train_config, train_model, CaseId, CaseSummary,
    Direction, ModelCard, TrainedModel, DESK_OBSTACLES,
};
use crate::field::{read_npy, rotate90_cw, write_npy, FieldSeries, GridSpec, ScalarField2D};
use crate::flow::{run_simulation, FlowConfig};
use crate::fno::{FnoConfig, FnoParameters, Preset, TrainConfig};
use crate::geometry::{
    compute_sdf, normalize_sdf, parse_stl, rasterize_footprint_with, BuildingMask, SdfGrid, SliceRule,
};
use crate::metrics::EvalOptions;
use crate::rollout::{predict_series, write_forecast, ForecastSidecar, RolloutPlan};

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Parser)]
#[command(name = "urbanwind", version, about = "Urban wind fields: simulation, FNO training and evaluation")]
pub struct Cli {
    /// JSON configuration for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seeds of the solver, the split and the trainer.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run the thread pool with a single worker.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true, default_value = "desk")]
    pub preset: Preset,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the flow solver; `--config` is a flow configuration.
    Simulate(SimulateArgs),
    /// Signed distance function of a mask or an STL footprint.
    Sdf(SdfArgs),
    /// Windowed, normalized training samples from a speed series.
    MakeDataset(DatasetArgs),
    /// Train an FNO; `--config` is a training configuration.
    Train(TrainArgs),
    /// Forecast a test case and score it.
    Evaluate(EvaluateArgs),
    /// Train and evaluate a case matrix; `--config` is the matrix.
    Matrix,
    /// Collect every `report.json` under `--out` into summary tables.
    Report,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 64)]
    pub nx: usize,
    #[arg(long, default_value_t = 64)]
    pub ny: usize,
    #[arg(long, default_value_t = 1.0)]
    pub dx: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Building mask `.npy` (H, W) of 0/1; default is the desk layout.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 600)]
    pub steps: usize,
    #[arg(long, default_value_t = 2)]
    pub record_every: usize,
    /// Recorded frames to drop from the start.
    #[arg(long, default_value_t = 0)]
    pub spin_up: usize,
    /// `W` or `N`.
    #[arg(long, default_value = "W")]
    pub direction: String,
}

#[derive(Debug, Args)]
pub struct SdfArgs {
    #[arg(long, conflicts_with = "stl")]
    pub mask: Option<PathBuf>,
    /// Binary STL rasterized at `--slice-height`.
    #[arg(long)]
    pub stl: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    pub slice_height: f64,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    /// Cell size in meters; defaults to the series' JSON sidecar.
    #[arg(long)]
    pub series_dx: Option<f64>,
    /// Frame interval in seconds; defaults to the series' JSON sidecar.
    #[arg(long)]
    pub series_dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Speed series `.npy` (T, H, W).
    #[arg(long)]
    pub series: PathBuf,
    /// Raw SDF `.npy` (H, W); SDF regimes only.
    #[arg(long)]
    pub sdf: Option<PathBuf>,
    #[arg(long)]
    pub regime: Regime,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub coverage: f64,
    #[command(flatten)]
    pub series_meta: SeriesArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Parameter file; its model card is the `.json` beside it.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub case: CaseId,
    /// Truth speed series `.npy` (T, H, W), before the case transform.
    #[arg(long)]
    pub truth: PathBuf,
    /// Raw SDF of the truth geometry, before the case transform.
    #[arg(long)]
    pub sdf: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    pub horizon: usize,
    /// Number of evenly spread forecast starts.
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    /// Evaluation time in seconds after the last input frame.
    #[arg(long, default_value_t = 5.0)]
    pub at_time: f64,
    #[arg(long, default_value_t = 64)]
    pub rms_patch: usize,
    #[command(flatten)]
    pub series_meta: SeriesArgs,
}

pub fn run(cli: &Cli) -> Result<()> {
    if cli.deterministic {
        // the pool may already exist when called from a test harness
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Sdf(a) => cmd_sdf(cli, a),
        Command::MakeDataset(a) => cmd_make_dataset(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
        Command::Matrix => cmd_matrix(cli),
        Command::Report => cmd_report(&cli.out).map(|_| ()),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(fs::write(path, s)?)
}

fn write_manifest(cli: &Cli, command: &str, inputs: &[(&str, &Path)], config: Value) -> Result<()> {
    let mut hashes = BTreeMap::new();
    for (name, path) in inputs {
        hashes.insert(
            name.to_string(),
            json!({ "path": path.display().to_string(), "sha256": sha256_file(path)? }),
        );
    }
    write_json(
        &cli.out.join(RUN_MANIFEST),
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "preset": cli.preset,
            "seed": cli.seed,
            "deterministic": cli.deterministic,
            "inputs": hashes,
            "config": config,
        }),
    )
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let key = msg.split('`').nth(1).unwrap_or("config").to_string();
        Error::config(key, msg)
    })
}

fn read_field(path: &Path, dx: f64) -> Result<ScalarField2D> {
    let arr = read_npy(path)?;
    let [h, w] = arr.shape[..] else {
        return Err(Error::Shape(format!(
            "{}: expected a 2D array, got {:?}",
            path.display(),
            arr.shape
        )));
    };
    ScalarField2D::new(GridSpec::new(w, h, dx)?, arr.values)
}

fn write_field(path: &Path, f: &ScalarField2D) -> Result<()> {
    write_npy(path, &[f.spec().ny, f.spec().nx], f.values())
}

/// Metadata kept beside every series file as `<name>.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub dx: f64,
    pub dt: f64,
}

pub fn write_series(path: &Path, series: &FieldSeries) -> Result<()> {
    let arr = series.to_array();
    write_npy(path, &arr.shape, &arr.values)?;
    write_json(
        &path.with_extension("json"),
        &SeriesMeta {
            dx: series.spec().dx,
            dt: series.dt(),
        },
    )
}

pub fn read_series(path: &Path, meta: &SeriesArgs) -> Result<FieldSeries> {
    let side = path.with_extension("json");
    let stored: Option<SeriesMeta> = if side.exists() {
        serde_json::from_str(&fs::read_to_string(&side)?).ok()
    } else {
        None
    };
    let pick = |flag: Option<f64>, stored: Option<f64>, key: &str| {
        flag.or(stored).ok_or_else(|| {
            Error::config(
                key,
                format!("no `{key}` sidecar beside {}; pass --{key}", path.display()),
            )
        })
    };
    let dx = pick(meta.series_dx, stored.as_ref().map(|m| m.dx), "series-dx")?;
    let dt = pick(meta.series_dt, stored.as_ref().map(|m| m.dt), "series-dt")?;
    FieldSeries::from_array(&read_npy(path)?, dx, dt)
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => FlowConfig::from_json(&read_text(p)?)?,
        None => desk_flow(0),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mask = match &a.mask {
        Some(p) => BuildingMask::from_field(&read_field(p, a.grid.dx)?),
        None => BuildingMask::from_rects(GridSpec::new(a.grid.nx, a.grid.ny, a.grid.dx)?, &DESK_OBSTACLES),
    };
    let direction = match a.direction.as_str() {
        "W" => Direction::West,
        "N" => Direction::North,
        other => return Err(Error::config("direction", format!("`{other}` is not W or N"))),
    };
    let sim_mask = match direction {
        Direction::West => mask.clone(),
        Direction::North => mask.rotate90_ccw(),
    };
    let out = run_simulation(&sim_mask, &cfg, a.steps, a.record_every)?;
    if a.spin_up >= out.magnitude.len() {
        return Err(Error::config("spin-up", "drops every recorded frame"));
    }
    let keep = a.spin_up..out.magnitude.len();
    let mut series = out.magnitude.slice(keep.start, keep.end)?;
    if direction == Direction::North {
        series = series.map_frames(rotate90_cw)?;
    } else {
        // raw components in solver orientation
        let (h, w) = (mask.spec().ny, mask.spec().nx);
        let n = keep.len();
        let mut u = Vec::with_capacity(n * h * w);
        let mut v = Vec::with_capacity(n * h * w);
        for vel in &out.velocity[keep.clone()] {
            u.extend_from_slice(vel.u());
            v.extend_from_slice(vel.v());
        }
        write_npy(cli.out.join("velocity_u.npy"), &[n, h, w], &u)?;
        write_npy(cli.out.join("velocity_v.npy"), &[n, h, w], &v)?;
    }
    write_series(&cli.out.join("magnitude.npy"), &series)?;
    write_field(&cli.out.join("mask.npy"), &mask.to_field())?;
    write_json(&cli.out.join("diagnostics.json"), &out.diagnostics)?;
    let config_hash = hex::encode(Sha256::digest(cfg.to_json()));
    let mut inputs = Vec::new();
    if let Some(p) = &a.mask {
        inputs.push(("mask", p.as_path()));
    }
    write_manifest(
        cli,
        "simulate",
        &inputs,
        json!({
            "flow": serde_json::to_value(&cfg)?,
            "flow_sha256": config_hash,
            "steps": a.steps,
            "record_every": a.record_every,
            "spin_up": a.spin_up,
            "direction": direction,
            "frames": series.len(),
        }),
    )?;
    log::info!("wrote {} frames to {}", series.len(), cli.out.display());
    Ok(())
}

fn cmd_sdf(cli: &Cli, a: &SdfArgs) -> Result<()> {
    let (mask, input) = match (&a.mask, &a.stl) {
        (Some(p), _) => (BuildingMask::from_field(&read_field(p, a.grid.dx)?), p),
        (None, Some(p)) => {
            let mesh = parse_stl(&fs::read(p)?)?;
            let spec = GridSpec::new(a.grid.nx, a.grid.ny, a.grid.dx)?;
            let m = rasterize_footprint_with(&mesh, spec, a.slice_height, SliceRule::AtOrAbove);
            write_field(&cli.out.join("mask.npy"), &m.to_field())?;
            (m, p)
        }
        (None, None) => return Err(Error::config("mask", "pass --mask or --stl")),
    };
    let sdf = compute_sdf(&mask);
    write_field(&cli.out.join("sdf.npy"), &sdf.to_field())?;
    write_field(&cli.out.join("sdf_normalized.npy"), &normalize_sdf(&sdf))?;
    write_manifest(
        cli,
        "sdf",
        &[("geometry", input.as_path())],
        json!({ "slice_height": a.slice_height, "cells_inside": mask.count_inside() }),
    )
}

fn read_sdf(path: &Path, dx: f64) -> Result<SdfGrid> {
    Ok(SdfGrid::from_field(&read_field(path, dx)?))
}

fn cmd_make_dataset(cli: &Cli, a: &DatasetArgs) -> Result<()> {
    let series = read_series(&a.series, &a.series_meta)?;
    let sdf = a.sdf.as_deref().map(|p| read_sdf(p, series.spec().dx)).transpose()?;
    let mut opts = DatasetOptions {
        coverage: a.coverage,
        ..dataset_options(cli.preset)
    };
    if let Some(p) = a.patch {
        opts.patch = p;
    }
    if let Some(s) = cli.seed {
        opts.split_seed = s;
    }
    let mut ds = build_dataset(&series, sdf.as_ref(), a.regime, &opts)?;
    ds.manifest.source.path = Some(a.series.display().to_string());
    ds.save(&cli.out)?;
    let mut inputs = vec![("series", a.series.as_path())];
    if let Some(p) = &a.sdf {
        inputs.push(("sdf", p.as_path()));
    }
    write_manifest(
        cli,
        "make-dataset",
        &inputs,
        json!({ "regime": a.regime, "options": serde_json::to_value(opts)?, "samples": ds.manifest.count }),
    )
}

fn resolve_train_config(cli: &Cli, epochs: Option<usize>) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => parse_json::<TrainConfig>(&read_text(p)?)?,
        None => train_config(cli.preset),
    };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parameter file, model card beside it, and the JSON-lines training log.
pub fn save_model(dir: &Path, model: &TrainedModel) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("model.fno");
    model.params.save(&path)?;
    write_json(&path.with_extension("json"), &model.card)?;
    let mut log = String::new();
    for e in &model.log {
        let _ = writeln!(log, "{}", serde_json::to_string(e)?);
    }
    fs::write(dir.join("train_log.jsonl"), log)?;
    Ok(path)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let card: ModelCard = serde_json::from_str(&fs::read_to_string(path.with_extension("json"))?)?;
    let params = FnoParameters::load_for(path, &card.model)?;
    Ok(TrainedModel {
        params,
        card,
        log: Vec::new(),
    })
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(cli, a.epochs)?;
    let data = Dataset::load(&a.dataset)?;
    let model = FnoConfig::preset(cli.preset, data.store.channels);
    let trained = train_model(&data, model, &cfg, |e| {
        log::info!("epoch {} train {:.5} val {:.5}", e.epoch, e.train_loss, e.val_loss)
    })?;
    save_model(&cli.out, &trained)?;
    let manifest = a.dataset.join(crate::dataset::MANIFEST_FILE);
    write_manifest(
        cli,
        "train",
        &[("dataset_manifest", manifest.as_path())],
        json!({ "train": serde_json::to_value(&cfg)?, "model": serde_json::to_value(model)? }),
    )
}

/// Applies the case transform to truth and SDF, checks the regime, and
/// scores forecasts from `starts` evenly spread frames.
pub fn evaluate_case(
    model: &TrainedModel,
    case: &CaseId,
    truth: &FieldSeries,
    sdf: Option<&SdfGrid>,
    horizon: usize,
    starts: usize,
    opts: &EvalOptions,
) -> Result<CaseSummary> {
    if let Some(r) = case.regime {
        if r != model.card.regime {
            return Err(Error::Contract(format!(
                "case {case} names regime {r}, model was trained on {}",
                model.card.regime
            )));
        }
    }
    let truth = case.transform.apply_series(truth)?;
    let sdf = sdf.map(|s| case.transform.apply_sdf(s));
    let history = model.card.model.in_channels - usize::from(model.card.regime.uses_sdf()) - 2;
    let starts = spread_starts(truth.len(), history, horizon, starts)?;
    evaluate_model(model, &truth, sdf.as_ref(), &case.to_string(), &starts, horizon, opts)
}

fn write_case(dir: &Path, summary: &CaseSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), summary)?;
    let first = &summary.reports[0];
    let mut mae = String::from("step,time_s,mae_mean_over_starts\n");
    for (i, m) in summary.mae_curve.iter().enumerate() {
        let _ = writeln!(mae, "{},{},{}", i + 1, (i + 1) as f64 * first.dt, m);
    }
    fs::write(dir.join("mae.csv"), mae)?;
    fs::write(dir.join("spectrum.csv"), first.spectrum_csv())?;
    Ok(())
}

fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let truth = read_series(&a.truth, &a.series_meta)?;
    let sdf = a.sdf.as_deref().map(|p| read_sdf(p, truth.spec().dx)).transpose()?;
    let opts = EvalOptions {
        at_time: a.at_time,
        rms_patch: a.rms_patch,
        wave_numbers: None,
    };
    let summary = evaluate_case(&model, &a.case, &truth, sdf.as_ref(), a.horizon, a.starts, &opts)?;
    write_case(&cli.out, &summary)?;
    // the forecast from the first start, in the transformed frame
    let t_truth = a.case.transform.apply_series(&truth)?;
    let mut plan = RolloutPlan::new(a.horizon, model.card.regime, model.card.scale);
    plan.patch = model.card.patch;
    plan.sdf = sdf.map(|s| a.case.transform.apply_sdf(&s));
    if !model.card.regime.uses_sdf() {
        plan.sdf = None;
    }
    let start = summary.starts[0];
    let (forecast, _) = predict_series(&model.params, &t_truth, &plan, start)?;
    write_forecast(
        &cli.out.join("forecast.npy"),
        &forecast,
        &ForecastSidecar {
            scale: model.card.scale,
            regime: model.card.regime,
            horizon: a.horizon,
            model_hash: model.params.content_hash(),
            dt: forecast.dt(),
            start_index: start,
        },
    )?;
    let mut inputs = vec![("model", a.model.as_path()), ("truth", a.truth.as_path())];
    if let Some(p) = &a.sdf {
        inputs.push(("sdf", p.as_path()));
    }
    write_manifest(
        cli,
        "evaluate",
        &inputs,
        json!({ "case": a.case, "horizon": a.horizon, "starts": a.starts, "eval": serde_json::to_value(&opts)? }),
    )
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixTrain {
    pub name: String,
    pub series: PathBuf,
    #[serde(default)]
    pub sdf: Option<PathBuf>,
    pub regime: Regime,
    #[serde(default)]
    pub patch: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixTest {
    pub case: CaseId,
    /// Name of a `train` entry.
    pub model: String,
    pub truth: PathBuf,
    #[serde(default)]
    pub sdf: Option<PathBuf>,
}

fn default_horizon() -> usize {
    25
}
fn default_starts() -> usize {
    4
}
fn default_at_time() -> f64 {
    5.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    #[serde(default)]
    pub train: Vec<MatrixTrain>,
    #[serde(default)]
    pub tests: Vec<MatrixTest>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_at_time")]
    pub at_time: f64,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub rms_patch: Option<usize>,
}

/// One line of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub case: String,
    pub mae_at_time: Option<f64>,
    pub max_rms: Option<f64>,
    pub mean_rms: Option<f64>,
    pub ssim: Option<f64>,
    pub spectrum_abs_diff: Vec<f64>,
    pub threshold_exceeded: Option<bool>,
    pub error: Option<String>,
}

impl SummaryRow {
    fn from_summary(s: &CaseSummary) -> Self {
        SummaryRow {
            case: s.case.clone(),
            mae_at_time: Some(s.mae_at_time),
            max_rms: Some(s.max_rms),
            mean_rms: Some(s.mean_rms),
            ssim: Some(s.ssim),
            spectrum_abs_diff: s.spectrum_abs_diff.clone(),
            threshold_exceeded: Some(s.threshold_exceeded),
            error: None,
        }
    }

    fn failed(case: String, e: &Error) -> Self {
        SummaryRow {
            case,
            mae_at_time: None,
            max_rms: None,
            mean_rms: None,
            ssim: None,
            spectrum_abs_diff: Vec::new(),
            threshold_exceeded: None,
            error: Some(e.to_string()),
        }
    }
}

fn write_summary(dir: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_json(&dir.join("summary.json"), &rows)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut csv = String::from("case,mae_at_time,max_rms,mean_rms,ssim,spectrum_abs_diff,threshold_exceeded,error\n");
    for r in rows {
        let spec: Vec<String> = r.spectrum_abs_diff.iter().map(f64::to_string).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.case,
            opt(r.mae_at_time),
            opt(r.max_rms),
            opt(r.mean_rms),
            opt(r.ssim),
            spec.join(";"),
            r.threshold_exceeded.map_or(String::new(), |b| b.to_string()),
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    Ok(fs::write(dir.join("summary.csv"), csv)?)
}

fn cmd_matrix(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("config", "matrix needs --config"))?;
    let cfg: MatrixConfig = parse_json(&read_text(path)?)?;
    let rows = run_matrix(cli, &cfg, path.parent().unwrap_or(Path::new(".")))?;
    write_summary(&cli.out, &rows)?;
    write_manifest(cli, "matrix", &[("matrix", path.as_path())], json!({ "cases": rows.len() }))
}

/// Trains (or reuses) every model and evaluates every test. A failing
/// case becomes an error row instead of aborting the matrix.
pub fn run_matrix(cli: &Cli, cfg: &MatrixConfig, base: &Path) -> Result<Vec<SummaryRow>> {
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let mut train_cfg = cfg.train_config.clone().unwrap_or_else(|| train_config(cli.preset));
    if let Some(s) = cli.seed {
        train_cfg.seed = s;
    }
    train_cfg.validate()?;
    let no_meta = SeriesArgs {
        series_dx: None,
        series_dt: None,
    };
    let mut models: BTreeMap<String, Result<TrainedModel>> = BTreeMap::new();
    for t in &cfg.train {
        let trained = (|| {
            let series_path = resolve(&t.series);
            let sdf_path = t.sdf.as_deref().map(resolve);
            let mut key = Sha256::new();
            key.update(fs::read(&series_path)?);
            if let Some(p) = &sdf_path {
                key.update(fs::read(p)?);
            }
            let mut opts = dataset_options(cli.preset);
            if let Some(p) = t.patch {
                opts.patch = p;
            }
            key.update(serde_json::to_vec(&json!({
                "regime": t.regime,
                "options": opts,
                "train": train_cfg,
                "preset": cli.preset,
                "version": env!("CARGO_PKG_VERSION"),
            }))?);
            let dir = cli.out.join("models").join(hex::encode(key.finalize()));
            let model_path = dir.join("model.fno");
            if model_path.exists() {
                log::info!("reusing model {}", model_path.display());
                return load_model(&model_path);
            }
            let series = read_series(&series_path, &no_meta)?;
            let sdf = sdf_path.as_deref().map(|p| read_sdf(p, series.spec().dx)).transpose()?;
            let data = build_dataset(&series, sdf.as_ref(), t.regime, &opts)?;
            let model = FnoConfig::preset(cli.preset, data.store.channels);
            let trained = train_model(&data, model, &train_cfg, |_| {})?;
            save_model(&dir, &trained)?;
            Ok(trained)
        })();
        models.insert(t.name.clone(), trained);
    }
    let opts = EvalOptions {
        at_time: cfg.at_time,
        rms_patch: cfg.rms_patch.unwrap_or(64),
        wave_numbers: None,
    };
    let mut rows = Vec::with_capacity(cfg.tests.len());
    for t in &cfg.tests {
        let id = t.case.to_string();
        let result = (|| {
            let model = match models.get(&t.model) {
                Some(Ok(m)) => m,
                Some(Err(e)) => return Err(Error::Contract(format!("model `{}` failed: {e}", t.model))),
                None => return Err(Error::config("model", format!("no train entry named `{}`", t.model))),
            };
            let truth = read_series(&resolve(&t.truth), &no_meta)?;
            let sdf = t
                .sdf
                .as_deref()
                .map(|p| read_sdf(&resolve(p), truth.spec().dx))
                .transpose()?;
            let summary = evaluate_case(model, &t.case, &truth, sdf.as_ref(), cfg.horizon, cfg.starts, &opts)?;
            write_case(&cli.out.join("cases").join(&id), &summary)?;
            Ok(summary)
        })();
        rows.push(match result {
            Ok(s) => SummaryRow::from_summary(&s),
            Err(e) => {
                log::warn!("case {id} failed: {e}");
                SummaryRow::failed(id, &e)
            }
        });
    }
    Ok(rows)
}

/// Rebuilds `summary.json` / `summary.csv` from the reports under `dir`.
pub fn cmd_report(dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut found = Vec::new();
    collect_reports(dir, &mut found)?;
    found.sort();
    let rows = found
        .iter()
        .map(|p| {
            let s: CaseSummary = serde_json::from_str(&fs::read_to_string(p)?)?;
            Ok(SummaryRow::from_summary(&s))
        })
        .collect::<Result<Vec<_>>>()?;
    write_summary(dir, &rows)?;
    Ok(rows)
}

fn collect_reports(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_reports(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "report.json") {
            out.push(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
