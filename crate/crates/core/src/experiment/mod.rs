//! End-to-end pipeline pieces shared by the command line and the
//! acceptance suite: desk-scale scenes, model training with a model card,
//! and multi-start evaluation.

mod case;

pub use case::{CaseId, Direction, Transform};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_dataset, Dataset, DatasetOptions, Regime};
use crate::error::{Error, Result};
use crate::field::{rotate90_cw, FieldSeries, GridSpec};
use crate::flow::{run_simulation, FlowConfig, RunDiagnostics};
use crate::fno::{train_with, EpochLog, FnoConfig, FnoParameters, Preset, TrainConfig};
use crate::geometry::{compute_sdf, BuildingMask, SdfGrid};
use crate::metrics::{evaluate, EvalOptions, EvaluationReport};
use crate::rollout::{persistence, predict_series, RolloutPlan};

/// `(x0, y0, width, height)` in cells.
pub type Rect = (usize, usize, usize, usize);

/// Four blocks on the 64x64 desk grid.
pub const DESK_OBSTACLES: [Rect; 4] = [(12, 14, 8, 8), (14, 40, 6, 10), (34, 26, 6, 8), (44, 48, 8, 6)];

/// Solver settings of the desk experiments: 1 m cells, uniform 7.8 m/s
/// inflow, 0.1 s steps.
pub fn desk_flow(seed: u64) -> FlowConfig {
    FlowConfig {
        inflow_exponent: 0.0,
        seed,
        ..FlowConfig::default()
    }
}

/// `count` non-overlapping blocks clear of the inflow and outflow columns.
pub fn random_obstacles(grid: GridSpec, count: usize, seed: u64) -> Vec<Rect> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Rect> = Vec::with_capacity(count);
    let (lo, hi) = (grid.nx / 8, grid.nx - grid.nx / 8);
    let max_side = (grid.nx / 8).max(2);
    for _ in 0..1000 {
        if out.len() == count {
            break;
        }
        let (w, h) = (rng.gen_range(max_side / 2..=max_side), rng.gen_range(max_side / 2..=max_side + 2));
        let x0 = rng.gen_range(lo..hi - w);
        let y0 = rng.gen_range(2..grid.ny - h - 2);
        let clear = out.iter().all(|&(a, b, c, d)| {
            x0 + w + 2 <= a || a + c + 2 <= x0 || y0 + h + 2 <= b || b + d + 2 <= y0
        });
        if clear {
            out.push((x0, y0, w, h));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub mask: BuildingMask,
    pub flow: FlowConfig,
    pub steps: usize,
    pub record_every: usize,
    /// Leading recorded frames dropped as start-up transient.
    pub spin_up: usize,
}

impl Scene {
    /// 64x64 grid, 600 steps recorded every second step, first 100 frames dropped.
    pub fn desk(obstacles: &[Rect], seed: u64) -> Self {
        let grid = GridSpec::new(64, 64, 1.0).expect("valid grid");
        Scene {
            mask: BuildingMask::from_rects(grid, obstacles),
            flow: desk_flow(seed),
            steps: 600,
            record_every: 2,
            spin_up: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SceneRun {
    /// Speed frames after the spin-up.
    pub series: FieldSeries,
    pub mask: BuildingMask,
    pub sdf: SdfGrid,
    pub diagnostics: RunDiagnostics,
}

/// West wind runs the solver directly. North wind runs it on the mask
/// turned a quarter counter-clockwise and turns the frames back, so the
/// flow enters across the other face of the original layout.
pub fn simulate_scene(scene: &Scene, direction: Direction) -> Result<SceneRun> {
    let sim_mask = match direction {
        Direction::West => scene.mask.clone(),
        Direction::North => scene.mask.rotate90_ccw(),
    };
    let out = run_simulation(&sim_mask, &scene.flow, scene.steps, scene.record_every)?;
    if out.magnitude.len() <= scene.spin_up {
        return Err(Error::Contract(format!(
            "spin-up of {} frames leaves nothing of {}",
            scene.spin_up,
            out.magnitude.len()
        )));
    }
    let mut series = out.magnitude.slice(scene.spin_up, out.magnitude.len())?;
    if direction == Direction::North {
        series = series.map_frames(rotate90_cw)?;
    }
    Ok(SceneRun {
        series,
        sdf: compute_sdf(&scene.mask),
        mask: scene.mask.clone(),
        diagnostics: out.diagnostics,
    })
}

/// Patch edge per preset: 32 cells at desk scale, 64 at full scale.
pub fn dataset_options(preset: Preset) -> DatasetOptions {
    DatasetOptions {
        patch: match preset {
            Preset::Desk => 32,
            Preset::Paper => 64,
        },
        ..DatasetOptions::default()
    }
}

pub fn train_config(preset: Preset) -> TrainConfig {
    match preset {
        Preset::Desk => TrainConfig::desk(),
        Preset::Paper => TrainConfig::default(),
    }
}

/// Everything needed to run a trained model on new data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub regime: Regime,
    pub scale: f64,
    pub patch: Option<usize>,
    pub model: FnoConfig,
    pub train: TrainConfig,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub params: FnoParameters,
    pub card: ModelCard,
    pub log: Vec<EpochLog>,
}

pub fn train_model(
    data: &Dataset,
    model: FnoConfig,
    cfg: &TrainConfig,
    observer: impl FnMut(&EpochLog),
) -> Result<TrainedModel> {
    let store = &data.store;
    if store.channels != model.in_channels || store.out_len != model.out_channels {
        return Err(Error::Shape(format!(
            "dataset has {} input / {} target channels, model expects {} / {}",
            store.channels, store.out_len, model.in_channels, model.out_channels
        )));
    }
    let init = FnoParameters::init(model, cfg.seed)?;
    let out = train_with(init, data, cfg, observer)?;
    let m = &data.manifest;
    Ok(TrainedModel {
        card: ModelCard {
            regime: m.regime,
            scale: m.scale,
            patch: m.source.patch,
            model,
            train: cfg.clone(),
            best_epoch: out.best_epoch,
            best_val_loss: out.log[out.best_epoch - 1].val_loss,
        },
        params: out.model,
        log: out.log,
    })
}

/// Builds the regime's dataset from a scene run and trains on it.
pub fn train_on_run(
    run: &SceneRun,
    regime: Regime,
    preset: Preset,
    cfg: &TrainConfig,
    observer: impl FnMut(&EpochLog),
) -> Result<TrainedModel> {
    let sdf = regime.uses_sdf().then_some(&run.sdf);
    let data = build_dataset(&run.series, sdf, regime, &dataset_options(preset))?;
    let model = FnoConfig::preset(preset, regime.in_channels(data.manifest.source.in_len));
    train_model(&data, model, cfg, observer)
}

/// `count` forecast start frames spread evenly over the series.
pub fn spread_starts(len: usize, history: usize, horizon: usize, count: usize) -> Result<Vec<usize>> {
    let span = history + horizon;
    if span > len || count == 0 {
        return Err(Error::Range(format!(
            "{count} forecasts of {span} frames do not fit {len} frames"
        )));
    }
    let last = len - span;
    Ok(if count == 1 {
        vec![0]
    } else {
        let mut v: Vec<usize> = (0..count).map(|i| i * last / (count - 1)).collect();
        v.dedup();
        v
    })
}

/// Metrics over several forecast starts of one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: String,
    pub starts: Vec<usize>,
    /// Mean over starts of the error at the evaluation time.
    pub mae_at_time: f64,
    /// Mean over starts of the per-step error curve.
    pub mae_curve: Vec<f64>,
    pub max_rms: f64,
    pub mean_rms: f64,
    pub ssim: f64,
    pub spectrum_abs_diff: Vec<f64>,
    pub threshold_exceeded: bool,
    pub reports: Vec<EvaluationReport>,
}

impl CaseSummary {
    fn from_reports(case: &str, starts: Vec<usize>, reports: Vec<EvaluationReport>) -> Self {
        let n = reports.len() as f64;
        let mean = |f: &dyn Fn(&EvaluationReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let horizon = reports[0].mae_curve.len();
        let mae_curve = (0..horizon).map(|t| mean(&|r| r.mae_curve[t])).collect();
        let k = reports[0].spectrum_abs_diff.len();
        let spectrum_abs_diff = (0..k).map(|i| mean(&|r| r.spectrum_abs_diff[i])).collect();
        let mae_at_time = mean(&|r| r.mae_at_time);
        CaseSummary {
            case: case.to_string(),
            starts,
            mae_at_time,
            mae_curve,
            max_rms: mean(&|r| r.rms.max_rms),
            mean_rms: mean(&|r| r.rms.mean_rms),
            ssim: mean(&|r| r.ssim),
            spectrum_abs_diff,
            threshold_exceeded: mae_at_time > crate::metrics::ERROR_THRESHOLD,
            reports,
        }
    }
}

/// Forecasts `truth` from each start and scores every forecast.
pub fn evaluate_model(
    model: &TrainedModel,
    truth: &FieldSeries,
    sdf: Option<&SdfGrid>,
    case: &str,
    starts: &[usize],
    horizon: usize,
    opts: &EvalOptions,
) -> Result<CaseSummary> {
    let card = &model.card;
    let mut plan = RolloutPlan::new(horizon, card.regime, card.scale);
    plan.patch = card.patch;
    if card.regime.uses_sdf() {
        let s = sdf.ok_or_else(|| Error::Contract(format!("regime {} needs an SDF", card.regime)))?;
        plan.sdf = Some(s.clone());
    }
    let reports = starts
        .iter()
        .map(|&s| {
            let (pred, aligned) = predict_series(&model.params, truth, &plan, s)?;
            evaluate(case, &pred, &aligned, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseSummary::from_reports(case, starts.to_vec(), reports))
}

/// Scores the repeat-the-last-frame forecast from the same starts.
pub fn evaluate_persistence(
    truth: &FieldSeries,
    history: usize,
    starts: &[usize],
    horizon: usize,
    opts: &EvalOptions,
) -> Result<CaseSummary> {
    let reports = starts
        .iter()
        .map(|&s| {
            let (pred, aligned) = persistence(truth, s, history, horizon)?;
            evaluate("persistence", &pred, &aligned, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseSummary::from_reports("persistence", starts.to_vec(), reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_obstacles_are_separated_and_seeded() {
        let grid = GridSpec::new(64, 64, 1.0).unwrap();
        let a = random_obstacles(grid, 4, 3);
        assert_eq!(a.len(), 4);
        assert_eq!(a, random_obstacles(grid, 4, 3));
        assert_ne!(a, random_obstacles(grid, 4, 4));
        for &(x, y, w, h) in &a {
            assert!(x >= 8 && x + w <= 56 && y >= 2 && y + h <= 62);
        }
        let mask = BuildingMask::from_rects(grid, &a);
        assert_eq!(mask.count_inside(), a.iter().map(|r| r.2 * r.3).sum::<usize>());
    }

    #[test]
    fn starts_are_spread() {
        assert_eq!(spread_starts(100, 5, 25, 3).unwrap(), vec![0, 35, 70]);
        assert_eq!(spread_starts(30, 5, 25, 4).unwrap(), vec![0]);
        assert!(spread_starts(29, 5, 25, 1).is_err());
    }

    #[test]
    fn north_wind_is_the_turned_west_run() {
        let grid = GridSpec::new(16, 16, 1.0).unwrap();
        let mut scene = Scene::desk(&[], 1);
        scene.mask = BuildingMask::from_rects(grid, &[(5, 3, 3, 6)]);
        scene.steps = 8;
        scene.spin_up = 1;
        let north = simulate_scene(&scene, Direction::North).unwrap();
        let mut turned = scene.clone();
        turned.mask = scene.mask.rotate90_ccw();
        let west = simulate_scene(&turned, Direction::West).unwrap();
        for (n, w) in north.series.frames().iter().zip(west.series.frames()) {
            assert_eq!(crate::field::rotate90_ccw(n), *w);
        }
        assert_eq!(north.series.len(), 3);
        assert_eq!(north.mask, scene.mask);
    }
}
