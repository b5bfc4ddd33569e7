//! Training samples from field series: sliding windows, patch tiling, SDF
//! and coordinate channels, normalization and the train/validation split.
//!
//! A sample's input tensor is `C x h x w` with channels ordered as the five
//! input frames, the normalized SDF (SDF regimes only), then the x and y
//! coordinate ramps. Targets are `10 x h x w`.

mod patches;

pub use patches::{stitch_patches, tile_patches, PatchLayout};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{read_npy, write_npy, FieldSeries, GridSpec, ScalarField2D};
use crate::geometry::{normalize_sdf, SdfGrid};

pub const DEFAULT_SPLIT_SEED: u64 = 42;
pub const TRAIN_FRACTION: f64 = 0.8;
pub const COORD_CHANNELS: usize = 2;

/// The four train/test variants: whole domain or patches, with or without SDF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "T")]
    Total,
    #[serde(rename = "T-SDF")]
    TotalSdf,
    #[serde(rename = "P")]
    Patch,
    #[serde(rename = "P-SDF")]
    PatchSdf,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Total, Regime::TotalSdf, Regime::Patch, Regime::PatchSdf];

    pub fn tag(self) -> &'static str {
        match self {
            Regime::Total => "T",
            Regime::TotalSdf => "T-SDF",
            Regime::Patch => "P",
            Regime::PatchSdf => "P-SDF",
        }
    }

    pub fn patched(self) -> bool {
        matches!(self, Regime::Patch | Regime::PatchSdf)
    }

    pub fn uses_sdf(self) -> bool {
        matches!(self, Regime::TotalSdf | Regime::PatchSdf)
    }

    pub fn in_channels(self, in_len: usize) -> usize {
        in_len + usize::from(self.uses_sdf()) + COORD_CHANNELS
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.tag() == s)
            .ok_or_else(|| Error::config("regime", format!("unknown regime `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub in_len: usize,
    pub out_len: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            in_len: 5,
            out_len: 10,
            stride: 2,
        }
    }
}

impl WindowSpec {
    pub fn span(&self) -> usize {
        self.in_len + self.out_len
    }

    /// Start indices `0, stride, 2 stride, ...` with `start + span <= len`.
    pub fn starts(&self, len: usize) -> Result<Vec<usize>> {
        if self.in_len == 0 || self.out_len == 0 || self.stride == 0 {
            return Err(Error::Contract("window lengths and stride must be positive".into()));
        }
        if len < self.span() {
            return Err(Error::EmptyDataset(format!(
                "{len} frames cannot hold a {}-frame window",
                self.span()
            )));
        }
        Ok((0..=len - self.span()).step_by(self.stride).collect())
    }
}

pub type Window = (Vec<ScalarField2D>, Vec<ScalarField2D>);

pub fn slide_windows(series: &FieldSeries, spec: WindowSpec) -> Result<Vec<Window>> {
    let frames = series.frames();
    Ok(spec
        .starts(series.len())?
        .into_iter()
        .map(|s| {
            (
                frames[s..s + spec.in_len].to_vec(),
                frames[s + spec.in_len..s + spec.span()].to_vec(),
            )
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub window: WindowSpec,
    /// Patch side for the P regimes.
    pub patch: usize,
    pub split_seed: u64,
    /// Fraction of windows kept (seeded selection).
    pub coverage: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            window: WindowSpec::default(),
            patch: 64,
            split_seed: DEFAULT_SPLIT_SEED,
            coverage: 1.0,
        }
    }
}

/// Sample counts implied by a series shape, computed without touching data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetPlan {
    pub windows: usize,
    pub kept_windows: usize,
    pub patches_per_frame: usize,
    pub samples: usize,
    pub train: usize,
}

impl DatasetPlan {
    pub fn new(frames: usize, grid: GridSpec, regime: Regime, opts: &DatasetOptions) -> Result<Self> {
        let windows = opts.window.starts(frames)?.len();
        let kept_windows = kept_count(windows, opts.coverage)?;
        let patches_per_frame = if regime.patched() {
            PatchLayout::new(grid, opts.patch)?.count()
        } else {
            1
        };
        let samples = kept_windows * patches_per_frame;
        Ok(DatasetPlan {
            windows,
            kept_windows,
            patches_per_frame,
            samples,
            train: train_count(samples),
        })
    }
}

fn kept_count(windows: usize, coverage: f64) -> Result<usize> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::config("coverage", format!("must lie in (0, 1], got {coverage}")));
    }
    Ok(((windows as f64 * coverage).round() as usize).clamp(1, windows))
}

pub fn train_count(samples: usize) -> usize {
    (samples as f64 * TRAIN_FRACTION).round() as usize
}

/// Seeded 80/20 partition of `0..n`; both halves come back sorted.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = train_count(n);
    let mut train = order[..k].to_vec();
    let mut val = order[k..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Ramps `(x + 0.5) / w` and `(y + 0.5) / h` over local patch coordinates.
pub fn coordinate_channels(h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(h * w);
    let mut ys = Vec::with_capacity(h * w);
    for iy in 0..h {
        for ix in 0..w {
            xs.push((ix as f64 + 0.5) / w as f64);
            ys.push((iy as f64 + 0.5) / h as f64);
        }
    }
    (xs, ys)
}

/// Appends one `C x h x w` input tensor: normalized frames, optional SDF,
/// coordinates.
pub fn assemble_input(frames: &[&[f64]], sdf: Option<&[f64]>, h: usize, w: usize, out: &mut Vec<f64>) {
    for f in frames {
        debug_assert_eq!(f.len(), h * w);
        out.extend_from_slice(f);
    }
    if let Some(s) = sdf {
        out.extend_from_slice(s);
    }
    let (xs, ys) = coordinate_channels(h, w);
    out.extend(xs);
    out.extend(ys);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub path: Option<String>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub dx: f64,
    pub dt: f64,
    pub in_len: usize,
    pub out_len: usize,
    pub stride: usize,
    pub patch: Option<usize>,
    pub coverage: f64,
    pub window_starts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub count: usize,
    /// Normalization scale in m/s.
    pub scale: f64,
    pub regime: Regime,
    pub split_seed: u64,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub source: SourceInfo,
}

/// Dense sample tensors, `N x C x h x w` inputs and `N x T x h x w` targets.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStore {
    pub count: usize,
    pub channels: usize,
    pub out_len: usize,
    pub height: usize,
    pub width: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl SampleStore {
    pub fn input(&self, i: usize) -> &[f64] {
        let n = self.channels * self.height * self.width;
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        let n = self.out_len * self.height * self.width;
        &self.targets[i * n..(i + 1) * n]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub store: SampleStore,
}

pub fn build_dataset(
    series: &FieldSeries,
    sdf: Option<&SdfGrid>,
    regime: Regime,
    opts: &DatasetOptions,
) -> Result<Dataset> {
    let grid = *series.spec();
    match (regime.uses_sdf(), sdf) {
        (true, None) => {
            return Err(Error::Contract(format!("regime {regime} needs an SDF")));
        }
        (false, Some(_)) => {
            return Err(Error::Contract(format!("regime {regime} takes no SDF")));
        }
        (_, Some(s)) if !s.spec().same_shape(&grid) => {
            return Err(Error::Contract(format!(
                "SDF grid {}x{} does not match frames {}x{}",
                s.spec().nx,
                s.spec().ny,
                grid.nx,
                grid.ny
            )));
        }
        _ => {}
    }
    let win = opts.window;
    let all_starts = win.starts(series.len())?;
    let kept = kept_count(all_starts.len(), opts.coverage)?;
    let starts = if kept == all_starts.len() {
        all_starts
    } else {
        let mut pick = all_starts;
        pick.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.split_seed ^ 0x5eed_c0fe));
        pick.truncate(kept);
        pick.sort_unstable();
        pick
    };
    let layout = if regime.patched() {
        PatchLayout::new(grid, opts.patch)?
    } else {
        PatchLayout {
            patch: 0,
            grid_rows: 1,
            grid_cols: 1,
            origins: vec![(0, 0)],
            parent: grid,
        }
    };
    let (h, w) = if regime.patched() {
        (opts.patch, opts.patch)
    } else {
        (grid.ny, grid.nx)
    };
    let per_frame = layout.count();
    let count = starts.len() * per_frame;
    let (train, val) = split_indices(count, opts.split_seed);

    // per (frame, patch) views of the data
    let patch_values = |frame: &[f64], p: usize| -> Vec<f64> {
        if regime.patched() {
            let mut buf = vec![0.0; h * w];
            layout.extract_into(frame, p, &mut buf);
            buf
        } else {
            frame.to_vec()
        }
    };
    let mut scale = 0.0_f64;
    for &i in &train {
        let (s, p) = (starts[i / per_frame], i % per_frame);
        for f in &series.frames()[s..s + win.span()] {
            let m = patch_values(f.values(), p).iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            scale = scale.max(m);
        }
    }
    if scale == 0.0 {
        scale = 1.0;
    }
    let sdf_norm = sdf.map(|s| normalize_sdf(s).into_values());
    let channels = regime.in_channels(win.in_len);
    let mut inputs = Vec::with_capacity(count * channels * h * w);
    let mut targets = Vec::with_capacity(count * win.out_len * h * w);
    for &s in &starts {
        for p in 0..per_frame {
            let frames: Vec<Vec<f64>> = series.frames()[s..s + win.span()]
                .iter()
                .map(|f| patch_values(f.values(), p).into_iter().map(|x| x / scale).collect())
                .collect();
            let sdf_patch = sdf_norm.as_ref().map(|v| patch_values(v, p));
            let refs: Vec<&[f64]> = frames[..win.in_len].iter().map(|f| f.as_slice()).collect();
            assemble_input(&refs, sdf_patch.as_deref(), h, w, &mut inputs);
            for f in &frames[win.in_len..] {
                targets.extend_from_slice(f);
            }
        }
    }
    let manifest = DatasetManifest {
        count,
        scale,
        regime,
        split_seed: opts.split_seed,
        train_indices: train,
        val_indices: val,
        source: SourceInfo {
            path: None,
            frames: series.len(),
            height: grid.ny,
            width: grid.nx,
            dx: grid.dx,
            dt: series.dt(),
            in_len: win.in_len,
            out_len: win.out_len,
            stride: win.stride,
            patch: regime.patched().then_some(opts.patch),
            coverage: opts.coverage,
            window_starts: starts,
        },
    };
    Ok(Dataset {
        manifest,
        store: SampleStore {
            count,
            channels,
            out_len: win.out_len,
            height: h,
            width: w,
            inputs,
            targets,
        },
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INPUTS_FILE: &str = "inputs.npy";
pub const TARGETS_FILE: &str = "targets.npy";

impl Dataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let s = &self.store;
        write_npy(
            dir.join(INPUTS_FILE),
            &[s.count, s.channels, s.height, s.width],
            &s.inputs,
        )?;
        write_npy(
            dir.join(TARGETS_FILE),
            &[s.count, s.out_len, s.height, s.width],
            &s.targets,
        )?;
        std::fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let inputs = read_npy(dir.join(INPUTS_FILE))?;
        let targets = read_npy(dir.join(TARGETS_FILE))?;
        let [n, c, h, w] = inputs.shape[..] else {
            return Err(Error::Shape(format!("inputs must be 4D, got {:?}", inputs.shape)));
        };
        let [nt, t, ht, wt] = targets.shape[..] else {
            return Err(Error::Shape(format!("targets must be 4D, got {:?}", targets.shape)));
        };
        if (n, h, w) != (nt, ht, wt) || n != manifest.count {
            return Err(Error::Shape(format!(
                "inputs {:?}, targets {:?} and manifest count {} disagree",
                inputs.shape, targets.shape, manifest.count
            )));
        }
        Ok(Dataset {
            manifest,
            store: SampleStore {
                count: n,
                channels: c,
                out_len: t,
                height: h,
                width: w,
                inputs: inputs.values,
                targets: targets.values,
            },
        })
    }
}
