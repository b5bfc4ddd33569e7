//! Autoregressive forecasting. Each model call maps the last five frames
//! (plus static SDF and coordinate channels) to the next ten; the last five
//! emitted frames feed the next call. Patch regimes roll every patch out on
//! its own and stitch frame by frame, with no halo exchange.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{assemble_input, DatasetManifest, PatchLayout, Regime, COORD_CHANNELS};
use crate::error::{Error, Result};
use crate::field::{write_npy, FieldSeries, GridSpec, ScalarField2D};
use crate::fno::FnoParameters;
use crate::geometry::{normalize_sdf, SdfGrid};

#[derive(Clone, Debug)]
pub struct RolloutPlan {
    /// Frames to produce.
    pub horizon: usize,
    pub regime: Regime,
    /// Training normalization scale in m/s.
    pub scale: f64,
    /// Raw signed distances on the full grid; required by SDF regimes.
    pub sdf: Option<SdfGrid>,
    /// Patch edge length for P regimes.
    pub patch: Option<usize>,
}

impl RolloutPlan {
    pub fn new(horizon: usize, regime: Regime, scale: f64) -> Self {
        RolloutPlan {
            horizon,
            regime,
            scale,
            sdf: None,
            patch: None,
        }
    }

    /// Regime, scale and patch size as recorded for the training data.
    pub fn from_manifest(manifest: &DatasetManifest, horizon: usize, sdf: Option<SdfGrid>) -> Self {
        RolloutPlan {
            horizon,
            regime: manifest.regime,
            scale: manifest.scale,
            sdf,
            patch: manifest.source.patch,
        }
    }

    pub fn with_sdf(mut self, sdf: SdfGrid) -> Self {
        self.sdf = Some(sdf);
        self
    }

    pub fn with_patch(mut self, patch: usize) -> Self {
        self.patch = Some(patch);
        self
    }

    /// Number of model calls for the horizon.
    pub fn model_calls(&self, out_len: usize) -> usize {
        self.horizon.div_ceil(out_len)
    }

    fn history_len(&self, params: &FnoParameters) -> Result<usize> {
        let extra = COORD_CHANNELS + usize::from(self.regime.uses_sdf());
        let cin = params.config.in_channels;
        if cin <= extra {
            return Err(Error::Contract(format!(
                "model takes {cin} channels, too few for regime {}",
                self.regime
            )));
        }
        let n = cin - extra;
        if params.config.out_channels < n {
            return Err(Error::Contract(format!(
                "model emits {} frames but consumes {n}",
                params.config.out_channels
            )));
        }
        Ok(n)
    }

    fn layout(&self, grid: GridSpec) -> Result<Option<PatchLayout>> {
        match (self.regime.patched(), self.patch) {
            (true, Some(p)) => PatchLayout::new(grid, p).map(Some),
            (true, None) => Err(Error::Contract(format!("regime {} needs a patch size", self.regime))),
            (false, _) => Ok(None),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Rollout {
    /// Forecast frames in m/s.
    pub forecast: FieldSeries,
    pub model_calls: usize,
}

/// Rolls the model forward from `initial` (physical units, oldest first).
pub fn rollout(params: &FnoParameters, initial: &[ScalarField2D], dt: f64, plan: &RolloutPlan) -> Result<Rollout> {
    if plan.horizon == 0 {
        return Err(Error::Contract("rollout horizon must be at least 1".into()));
    }
    if !(plan.scale > 0.0 && plan.scale.is_finite()) {
        return Err(Error::Contract(format!("scale must be positive, got {}", plan.scale)));
    }
    let n_hist = plan.history_len(params)?;
    if initial.len() != n_hist {
        return Err(Error::Contract(format!(
            "model consumes {n_hist} frames, got {}",
            initial.len()
        )));
    }
    let grid = *initial[0].spec();
    if initial.iter().any(|f| !f.spec().same_shape(&grid)) {
        return Err(Error::Shape("initial frames differ in shape".into()));
    }
    let sdf = match (plan.regime.uses_sdf(), &plan.sdf) {
        (true, Some(s)) if s.spec().same_shape(&grid) => Some(normalize_sdf(s).into_values()),
        (true, Some(_)) => return Err(Error::Contract("SDF grid does not match the frames".into())),
        (true, None) => return Err(Error::Contract(format!("regime {} needs an SDF", plan.regime))),
        (false, _) => None,
    };
    let layout = plan.layout(grid)?;
    let regions = layout.as_ref().map_or(1, PatchLayout::count);
    let (h, w) = layout.as_ref().map_or((grid.ny, grid.nx), |l| (l.patch, l.patch));
    let extract = |values: &[f64], r: usize| -> Vec<f64> {
        match &layout {
            Some(l) => {
                let mut buf = vec![0.0; h * w];
                l.extract_into(values, r, &mut buf);
                buf
            }
            None => values.to_vec(),
        }
    };
    let out_len = params.config.out_channels;
    let calls = plan.model_calls(out_len);
    let per_region: Vec<Result<Vec<Vec<f64>>>> = (0..regions)
        .into_par_iter()
        .map(|r| {
            let mut history: Vec<Vec<f64>> = initial
                .iter()
                .map(|f| extract(f.values(), r).into_iter().map(|v| v / plan.scale).collect())
                .collect();
            let static_sdf = sdf.as_ref().map(|s| extract(s, r));
            let mut frames = Vec::with_capacity(plan.horizon);
            let mut input = Vec::new();
            for _ in 0..calls {
                input.clear();
                let refs: Vec<&[f64]> = history.iter().map(Vec::as_slice).collect();
                assemble_input(&refs, static_sdf.as_deref(), h, w, &mut input);
                let out = params.forward(&input, h, w)?;
                let emitted: Vec<Vec<f64>> = out.chunks_exact(h * w).map(<[f64]>::to_vec).collect();
                history = emitted[out_len - n_hist..].to_vec();
                let take = (plan.horizon - frames.len()).min(out_len);
                frames.extend(emitted.into_iter().take(take));
            }
            Ok(frames)
        })
        .collect();
    let per_region = per_region.into_iter().collect::<Result<Vec<_>>>()?;
    let frames = (0..plan.horizon)
        .map(|t| {
            let values = match &layout {
                Some(l) => {
                    let mut full = vec![0.0; grid.len()];
                    for (r, region) in per_region.iter().enumerate() {
                        l.insert(&region[t], r, &mut full);
                    }
                    full
                }
                None => per_region[0][t].clone(),
            };
            ScalarField2D::new(grid, values.into_iter().map(|v| v * plan.scale).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Rollout {
        forecast: FieldSeries::new(dt, frames)?,
        model_calls: calls,
    })
}

/// Forecast from `truth[start..start + 5]` and the truth frames it predicts.
pub fn predict_series(
    params: &FnoParameters,
    truth: &FieldSeries,
    plan: &RolloutPlan,
    start: usize,
) -> Result<(FieldSeries, FieldSeries)> {
    let n_hist = plan.history_len(params)?;
    let first = start + n_hist;
    let end = first + plan.horizon;
    if end > truth.len() {
        return Err(Error::Range(format!(
            "forecast needs frames up to {end}, truth has {}",
            truth.len()
        )));
    }
    let run = rollout(params, &truth.frames()[start..first], truth.dt(), plan)?;
    Ok((run.forecast, truth.slice(first, end)?))
}

/// Baseline that repeats the last input frame over the horizon.
pub fn persistence(truth: &FieldSeries, start: usize, history: usize, horizon: usize) -> Result<(FieldSeries, FieldSeries)> {
    let first = start + history;
    let end = first + horizon;
    if history == 0 || horizon == 0 || end > truth.len() {
        return Err(Error::Range(format!(
            "persistence needs frames up to {end}, truth has {}",
            truth.len()
        )));
    }
    let last = truth.frame(first - 1).clone();
    Ok((
        FieldSeries::new(truth.dt(), vec![last; horizon])?,
        truth.slice(first, end)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastSidecar {
    pub scale: f64,
    pub regime: Regime,
    pub horizon: usize,
    pub model_hash: String,
    pub dt: f64,
    pub start_index: usize,
}

pub fn write_forecast(path: &Path, forecast: &FieldSeries, sidecar: &ForecastSidecar) -> Result<()> {
    let arr = forecast.to_array();
    write_npy(path, &arr.shape, &arr.values)?;
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fno::FnoConfig;
    use crate::geometry::{compute_sdf, BuildingMask};

    fn config(regime: Regime, modes: usize) -> FnoConfig {
        FnoConfig {
            modes,
            width: 3,
            in_channels: regime.in_channels(5),
            out_channels: 10,
            proj_hidden: 4,
        }
    }

    fn series(n: usize, len: usize, f: impl Fn(usize, usize, usize) -> f64) -> FieldSeries {
        let spec = GridSpec::new(n, n, 1.0).unwrap();
        let frames = (0..len)
            .map(|t| ScalarField2D::from_fn(spec, |x, y| f(t, x, y)).unwrap())
            .collect();
        FieldSeries::new(0.2, frames).unwrap()
    }

    #[test]
    fn call_budget() {
        let p = FnoParameters::init(config(Regime::Total, 2), 0).unwrap();
        let truth = series(8, 40, |t, x, y| 1.0 + 0.1 * ((t + x + y) as f64).sin());
        for (horizon, calls) in [(1, 1), (10, 1), (25, 3), (30, 3), (31, 4)] {
            let plan = RolloutPlan::new(horizon, Regime::Total, 2.0);
            let run = rollout(&p, &truth.frames()[..5], 0.2, &plan).unwrap();
            assert_eq!(run.model_calls, calls);
            assert_eq!(run.forecast.len(), horizon);
        }
        // a 150-frame horizon at 0.1 s spans 15 s
        assert_eq!(RolloutPlan::new(150, Regime::Total, 1.0).model_calls(10), 15);
    }

    #[test]
    fn truncated_call_is_a_prefix() {
        let p = FnoParameters::init(config(Regime::Total, 2), 1).unwrap();
        let truth = series(8, 5, |t, x, y| 1.0 + 0.3 * ((t * x + y) as f64).cos());
        let long = rollout(&p, truth.frames(), 0.2, &RolloutPlan::new(30, Regime::Total, 1.5)).unwrap();
        let short = rollout(&p, truth.frames(), 0.2, &RolloutPlan::new(25, Regime::Total, 1.5)).unwrap();
        assert_eq!(short.forecast.frames(), &long.forecast.frames()[..25]);
    }

    #[test]
    fn feedback_uses_last_emitted_frames() {
        // first call of a second rollout seeded with frames 5..10 of the
        // first one must reproduce frames 10..20
        let p = FnoParameters::init(config(Regime::Total, 2), 2).unwrap();
        let truth = series(8, 5, |t, x, y| 0.5 + 0.1 * (t as f64) * ((x + 2 * y) as f64).sin());
        let plan = RolloutPlan::new(20, Regime::Total, 1.0);
        let run = rollout(&p, truth.frames(), 0.2, &plan).unwrap();
        let again = rollout(&p, &run.forecast.frames()[5..10], 0.2, &RolloutPlan::new(10, Regime::Total, 1.0)).unwrap();
        for (a, b) in again.forecast.frames().iter().zip(&run.forecast.frames()[10..]) {
            for (u, v) in a.values().iter().zip(b.values()) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_model_forecasts_zero() {
        let p = FnoParameters::zeros(config(Regime::Total, 2)).unwrap();
        let truth = series(8, 20, |_, _, _| 0.0);
        let (f, t) = predict_series(&p, &truth, &RolloutPlan::new(10, Regime::Total, 1.0), 0).unwrap();
        assert_eq!(f.len(), 10);
        assert_eq!(t.len(), 10);
        assert!(f.max_abs() == 0.0);
    }

    #[test]
    fn truth_length_is_checked() {
        let p = FnoParameters::zeros(config(Regime::Total, 2)).unwrap();
        let truth = series(8, 15, |_, _, _| 1.0);
        assert!(predict_series(&p, &truth, &RolloutPlan::new(10, Regime::Total, 1.0), 0).is_ok());
        assert!(matches!(
            predict_series(&p, &truth, &RolloutPlan::new(11, Regime::Total, 1.0), 0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn contract_errors() {
        let p = FnoParameters::zeros(config(Regime::Total, 2)).unwrap();
        let truth = series(8, 15, |_, _, _| 1.0);
        let zero = RolloutPlan::new(0, Regime::Total, 1.0);
        assert!(matches!(rollout(&p, &truth.frames()[..5], 0.2, &zero), Err(Error::Contract(_))));
        // an SDF regime expects one more channel than this model has
        let sdf_plan = RolloutPlan::new(5, Regime::TotalSdf, 1.0)
            .with_sdf(compute_sdf(&BuildingMask::empty(*truth.spec())));
        assert!(matches!(rollout(&p, &truth.frames()[..5], 0.2, &sdf_plan), Err(Error::Contract(_))));
        let p_sdf = FnoParameters::zeros(config(Regime::TotalSdf, 2)).unwrap();
        let missing = RolloutPlan::new(5, Regime::TotalSdf, 1.0);
        assert!(matches!(rollout(&p_sdf, &truth.frames()[..5], 0.2, &missing), Err(Error::Contract(_))));
    }

    /// Affine maps that act identically on every channel and a spectral
    /// branch restricted to the mean mode commute with translation, so a
    /// constant field yields the same forecast patch-wise and whole.
    #[test]
    fn patches_agree_with_whole_field_on_constants() {
        let regime_cfg = config(Regime::Patch, 2);
        let mut p = FnoParameters::init(regime_cfg, 5).unwrap();
        // zero coordinate-channel weights so the local ramps do not matter
        let cin = regime_cfg.in_channels;
        for o in 0..regime_cfg.width {
            p.tensors_mut()[0][o * cin + 5] = 0.0;
            p.tensors_mut()[0][o * cin + 6] = 0.0;
        }
        let truth = series(16, 5, |t, _, _| 1.0 + 0.1 * t as f64);
        let whole = rollout(&p, truth.frames(), 0.2, &RolloutPlan::new(12, Regime::Total, 2.0)).unwrap();
        let patched =
            rollout(&p, truth.frames(), 0.2, &RolloutPlan::new(12, Regime::Patch, 2.0).with_patch(8)).unwrap();
        for (a, b) in whole.forecast.frames().iter().zip(patched.forecast.frames()) {
            for (u, v) in a.values().iter().zip(b.values()) {
                assert!((u - v).abs() <= 1e-12, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn deterministic_and_sidecar() {
        let cfg = config(Regime::PatchSdf, 2);
        let p = FnoParameters::init(cfg, 3).unwrap();
        let truth = series(16, 5, |t, x, y| 2.0 + ((x * y + t) as f64).sin());
        let mask = BuildingMask::from_rects(*truth.spec(), &[(3, 3, 4, 2)]);
        let plan = RolloutPlan::new(12, Regime::PatchSdf, 3.0).with_sdf(compute_sdf(&mask)).with_patch(8);
        let a = rollout(&p, truth.frames(), 0.2, &plan).unwrap();
        let b = rollout(&p, truth.frames(), 0.2, &plan).unwrap();
        assert_eq!(a.forecast, b.forecast);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forecast.npy");
        let side = ForecastSidecar {
            scale: 3.0,
            regime: Regime::PatchSdf,
            horizon: 12,
            model_hash: p.content_hash(),
            dt: 0.2,
            start_index: 0,
        };
        write_forecast(&path, &a.forecast, &side).unwrap();
        let arr = crate::field::read_npy(&path).unwrap();
        assert_eq!(arr.shape, vec![12, 16, 16]);
        let back: ForecastSidecar =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("forecast.json")).unwrap()).unwrap();
        assert_eq!(back, side);
    }

    #[test]
    fn persistence_repeats_last_frame() {
        let truth = series(4, 20, |t, _, _| t as f64);
        let (f, t) = persistence(&truth, 2, 5, 10).unwrap();
        assert!(f.frames().iter().all(|fr| fr.values().iter().all(|&v| v == 6.0)));
        assert_eq!(t.frame(0).get(0, 0), 7.0);
        assert!(persistence(&truth, 10, 5, 10).is_err());
    }
}
