//! Forecast evaluation: per-step mean absolute error, patch RMS statistics,
//! the radially binned energy spectrum and global SSIM.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::PatchLayout;
use crate::error::{Error, Result};
use crate::fft::{fft2_real, signed_frequency};
use crate::field::{FieldSeries, ScalarField2D};

/// Forecast error level, in m/s, that the report flags.
pub const ERROR_THRESHOLD: f64 = 0.5;

/// Energy per integer wave-number bin of width one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialSpectrum {
    pub bin_energy: Vec<f64>,
}

impl RadialSpectrum {
    pub fn n_bins(&self) -> usize {
        self.bin_energy.len()
    }

    pub fn total(&self) -> f64 {
        self.bin_energy.iter().sum()
    }
}

/// Bins `|X(k)|^2` by `floor(|k|)` with `k` measured from the centre of the
/// shifted spectrum; `n/2` bins, corner wave numbers fold into the last bin.
pub fn radial_spectrum(field: &ScalarField2D) -> Result<RadialSpectrum> {
    let s = field.spec();
    if s.nx != s.ny {
        return Err(Error::Contract(format!(
            "radial spectrum needs a square field, got {}x{}",
            s.nx, s.ny
        )));
    }
    let n = s.nx;
    if n < 2 {
        return Err(Error::Contract("radial spectrum needs at least 2x2 cells".into()));
    }
    let coef = fft2_real(field.values(), n, n)?;
    let n_bins = n / 2;
    let mut bins = vec![0.0; n_bins];
    for r in 0..n {
        let ky = signed_frequency(r, n) as f64;
        for c in 0..n {
            let kx = signed_frequency(c, n) as f64;
            let b = ((kx * kx + ky * ky).sqrt().floor() as usize).min(n_bins - 1);
            bins[b] += coef[r * n + c].norm_sqr();
        }
    }
    Ok(RadialSpectrum { bin_energy: bins })
}

/// `|a - b|` at each wave number. Wave number `n_bins` (the Nyquist radius)
/// reads the last bin, where it was folded.
pub fn spectrum_abs_diff(a: &RadialSpectrum, b: &RadialSpectrum, wave_numbers: &[usize]) -> Result<Vec<f64>> {
    if a.n_bins() != b.n_bins() {
        return Err(Error::Shape(format!(
            "spectra have {} and {} bins",
            a.n_bins(),
            b.n_bins()
        )));
    }
    let n = a.n_bins();
    wave_numbers
        .iter()
        .map(|&k| {
            if k > n {
                return Err(Error::Range(format!("wave number {k} beyond {n} bins")));
            }
            let i = k.min(n - 1);
            Ok((a.bin_energy[i] - b.bin_energy[i]).abs())
        })
        .collect()
}

/// Four evenly spaced wave numbers ending at the Nyquist radius.
pub fn default_wave_numbers(n_bins: usize) -> Vec<usize> {
    (1..=4).map(|q| q * n_bins / 4).filter(|&k| k > 0).collect()
}

fn check_aligned(pred: &FieldSeries, truth: &FieldSeries) -> Result<()> {
    if pred.len() != truth.len() || !pred.spec().same_shape(truth.spec()) {
        return Err(Error::Shape(format!(
            "forecast ({} frames of {}x{}) and truth ({} frames of {}x{}) are not aligned",
            pred.len(),
            pred.spec().nx,
            pred.spec().ny,
            truth.len(),
            truth.spec().nx,
            truth.spec().ny
        )));
    }
    Ok(())
}

pub fn mean_abs_error(a: &ScalarField2D, b: &ScalarField2D) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.values().len() as f64
}

/// Mean absolute error of every forecast step, in m/s.
pub fn accumulated_abs_error(pred: &FieldSeries, truth: &FieldSeries) -> Result<Vec<f64>> {
    check_aligned(pred, truth)?;
    Ok(pred
        .frames()
        .iter()
        .zip(truth.frames())
        .map(|(p, t)| mean_abs_error(p, t))
        .collect())
}

/// Running sum of a per-step error curve.
pub fn running_sum(curve: &[f64]) -> Vec<f64> {
    curve
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsStats {
    pub max_rms: f64,
    pub mean_rms: f64,
}

/// RMS of `pred - truth` per patch at one frame; max and mean over patches.
pub fn rms_stats(pred: &FieldSeries, truth: &FieldSeries, layout: &PatchLayout, at_frame: usize) -> Result<RmsStats> {
    check_aligned(pred, truth)?;
    if at_frame >= pred.len() {
        return Err(Error::Range(format!("frame {at_frame} of {}", pred.len())));
    }
    if !layout.parent.same_shape(pred.spec()) {
        return Err(Error::Shape("patch layout does not match the series grid".into()));
    }
    let diff: Vec<f64> = pred
        .frame(at_frame)
        .values()
        .iter()
        .zip(truth.frame(at_frame).values())
        .map(|(p, t)| p - t)
        .collect();
    let mut buf = vec![0.0; layout.patch * layout.patch];
    let rms: Vec<f64> = (0..layout.count())
        .map(|i| {
            layout.extract_into(&diff, i, &mut buf);
            (buf.iter().map(|d| d * d).sum::<f64>() / buf.len() as f64).sqrt()
        })
        .collect();
    Ok(RmsStats {
        max_rms: rms.iter().fold(0.0, |m: f64, &r| m.max(r)),
        mean_rms: rms.iter().sum::<f64>() / rms.len() as f64,
    })
}

/// Global SSIM with `L` the joint value range of both fields.
pub fn ssim(a: &ScalarField2D, b: &ScalarField2D) -> Result<f64> {
    if !a.spec().same_shape(b.spec()) {
        return Err(Error::Shape("SSIM needs fields of equal shape".into()));
    }
    let (x, y) = (a.values(), b.values());
    let n = x.len() as f64;
    let mu_x = x.iter().sum::<f64>() / n;
    let mu_y = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (p, q) in x.iter().zip(y) {
        let (dp, dq) = (p - mu_x, q - mu_y);
        sxx += dp * dp;
        syy += dq * dq;
        sxy += dp * dq;
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let (lo, hi) = x
        .iter()
        .chain(y)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let l = (hi - lo).max(1e-12);
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    Ok(((2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Forecast time, in seconds after the last input frame, at which RMS,
    /// spectrum and SSIM are taken.
    pub at_time: f64,
    /// Edge of the tiles the RMS statistics run over.
    pub rms_patch: usize,
    /// Defaults to [`default_wave_numbers`].
    pub wave_numbers: Option<Vec<usize>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            at_time: 5.0,
            rms_patch: 64,
            wave_numbers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub case: String,
    pub dt: f64,
    pub horizon: usize,
    pub at_time: f64,
    pub at_frame: usize,
    pub mae_curve: Vec<f64>,
    pub mae_running_sum: Vec<f64>,
    pub mae_at_time: f64,
    pub mean_mae: f64,
    pub rms_patch: usize,
    pub rms: RmsStats,
    pub wave_numbers: Vec<usize>,
    pub spectrum_abs_diff: Vec<f64>,
    pub spectrum_pred: RadialSpectrum,
    pub spectrum_truth: RadialSpectrum,
    pub ssim: f64,
    pub threshold: f64,
    pub threshold_exceeded: bool,
    /// Interpretation notes carried with every report.
    pub notes: Vec<String>,
}

/// Index of the forecast frame at `at_time`; frame `i` lies `(i + 1) dt`
/// after the last input.
pub fn frame_at(at_time: f64, dt: f64, len: usize) -> Result<usize> {
    let k = (at_time / dt).round();
    if !(k >= 1.0) || k as usize > len {
        return Err(Error::Range(format!(
            "time {at_time} s is outside a {len}-frame forecast at dt {dt} s"
        )));
    }
    Ok(k as usize - 1)
}

pub fn evaluate(case: &str, pred: &FieldSeries, truth: &FieldSeries, opts: &EvalOptions) -> Result<EvaluationReport> {
    check_aligned(pred, truth)?;
    if pred.frames().iter().any(|f| f.values().iter().any(|v| !v.is_finite())) {
        return Err(Error::Range("forecast contains non-finite values".into()));
    }
    let at_frame = frame_at(opts.at_time, pred.dt(), pred.len())?;
    let mae_curve = accumulated_abs_error(pred, truth)?;
    let grid = *pred.spec();
    let rms_patch = opts.rms_patch.min(grid.nx).min(grid.ny);
    let layout = PatchLayout::new(grid, rms_patch)?;
    let rms = rms_stats(pred, truth, &layout, at_frame)?;
    let spectrum_pred = radial_spectrum(pred.frame(at_frame))?;
    let spectrum_truth = radial_spectrum(truth.frame(at_frame))?;
    let wave_numbers = opts
        .wave_numbers
        .clone()
        .unwrap_or_else(|| default_wave_numbers(spectrum_pred.n_bins()));
    let spectrum_abs_diff = spectrum_abs_diff(&spectrum_pred, &spectrum_truth, &wave_numbers)?;
    let ssim = ssim(pred.frame(at_frame), truth.frame(at_frame))?;
    let mae_at_time = mae_curve[at_frame];
    Ok(EvaluationReport {
        case: case.to_string(),
        dt: pred.dt(),
        horizon: pred.len(),
        at_time: opts.at_time,
        at_frame,
        mae_running_sum: running_sum(&mae_curve),
        mean_mae: mae_curve.iter().sum::<f64>() / mae_curve.len() as f64,
        mae_curve,
        mae_at_time,
        rms_patch,
        rms,
        wave_numbers,
        spectrum_abs_diff,
        spectrum_pred,
        spectrum_truth,
        ssim,
        threshold: ERROR_THRESHOLD,
        threshold_exceeded: mae_at_time > ERROR_THRESHOLD,
        notes: vec![
            format!("max/mean RMS are taken over {rms_patch}x{rms_patch} tiles of the error field"),
            "mae_curve is the per-step mean absolute error; mae_running_sum accumulates it".into(),
            "ssim is the global (single-window) index".into(),
        ],
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `step,time_s,mae,mae_running_sum`
    pub fn mae_csv(&self) -> String {
        let mut s = String::from("step,time_s,mae,mae_running_sum\n");
        for (i, (m, r)) in self.mae_curve.iter().zip(&self.mae_running_sum).enumerate() {
            let _ = writeln!(s, "{},{},{},{}", i + 1, (i + 1) as f64 * self.dt, m, r);
        }
        s
    }

    /// `wave_number,pred,truth,abs_diff`
    pub fn spectrum_csv(&self) -> String {
        let mut s = String::from("wave_number,pred,truth,abs_diff\n");
        for (k, (p, t)) in self
            .spectrum_pred
            .bin_energy
            .iter()
            .zip(&self.spectrum_truth.bin_energy)
            .enumerate()
        {
            let _ = writeln!(s, "{k},{p},{t},{}", (p - t).abs());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{rotate90_ccw, GridSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(n: usize, seed: u64) -> ScalarField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField2D::from_fn(GridSpec::new(n, n, 1.0).unwrap(), |_, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    fn series(frames: Vec<ScalarField2D>) -> FieldSeries {
        FieldSeries::new(0.2, frames).unwrap()
    }

    #[test]
    fn constant_field_spectrum_is_dc() {
        let f = ScalarField2D::constant(GridSpec::new(16, 16, 1.0).unwrap(), 3.0);
        let s = radial_spectrum(&f).unwrap();
        assert_eq!(s.n_bins(), 8);
        assert!((s.bin_energy[0] - (256.0 * 3.0f64).powi(2)).abs() < 1e-6);
        assert!(s.bin_energy[1..].iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn pure_sine_lands_in_its_bin() {
        for k in 1..8 {
            let spec = GridSpec::new(16, 16, 1.0).unwrap();
            let f = ScalarField2D::from_fn(spec, |x, _| (2.0 * PI * k as f64 * x as f64 / 16.0).sin()).unwrap();
            let s = radial_spectrum(&f).unwrap();
            let total = s.total();
            assert!((s.bin_energy[k] - total).abs() <= 1e-9 * total, "k = {k}");
        }
        let sq = GridSpec::new(64, 64, 1.0).unwrap();
        assert_eq!(radial_spectrum(&ScalarField2D::zeros(sq)).unwrap().n_bins(), 32);
    }

    #[test]
    fn bins_preserve_energy() {
        let f = random_field(16, 4);
        // direct DFT oracle
        let mut direct = 0.0;
        for l1 in 0..16 {
            for l2 in 0..16 {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..16 {
                    for x in 0..16 {
                        let ph = -2.0 * PI * ((l1 * y + l2 * x) as f64) / 16.0;
                        re += f.get(x, y) * ph.cos();
                        im += f.get(x, y) * ph.sin();
                    }
                }
                direct += re * re + im * im;
            }
        }
        let s = radial_spectrum(&f).unwrap();
        assert!((s.total() - direct).abs() <= 1e-10 * direct);
    }

    #[test]
    fn non_square_spectrum_rejected() {
        let f = ScalarField2D::zeros(GridSpec::new(16, 8, 1.0).unwrap());
        assert!(matches!(radial_spectrum(&f), Err(Error::Contract(_))));
    }

    #[test]
    fn abs_diff_requests() {
        let a = radial_spectrum(&random_field(256, 1)).unwrap();
        let b = radial_spectrum(&random_field(256, 2)).unwrap();
        assert_eq!(a.n_bins(), 128);
        assert!(spectrum_abs_diff(&a, &a, &[0, 5, 127]).unwrap().iter().all(|&d| d == 0.0));
        let d = spectrum_abs_diff(&a, &b, &[32, 64, 96, 128]).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d[3], (a.bin_energy[127] - b.bin_energy[127]).abs());
        assert_eq!(default_wave_numbers(128), vec![32, 64, 96, 128]);
        assert!(matches!(spectrum_abs_diff(&a, &b, &[129]), Err(Error::Range(_))));
        let c = radial_spectrum(&random_field(16, 2)).unwrap();
        assert!(matches!(spectrum_abs_diff(&a, &c, &[1]), Err(Error::Shape(_))));
    }

    #[test]
    fn rms_examples() {
        let f = random_field(8, 3);
        let truth = series(vec![f.clone(), f.clone()]);
        let layout = PatchLayout::new(*f.spec(), 4).unwrap();
        let same = rms_stats(&truth, &truth, &layout, 1).unwrap();
        assert_eq!((same.max_rms, same.mean_rms), (0.0, 0.0));
        let shifted = truth.map_frames(|fr| fr.map(|v| v + 1.0).unwrap()).unwrap();
        let s = rms_stats(&shifted, &truth, &layout, 0).unwrap();
        assert!((s.max_rms - 1.0).abs() < 1e-12 && (s.mean_rms - 1.0).abs() < 1e-12);
        // one 2x2 patch with errors (3, 4, 0, 0)
        let spec = GridSpec::new(2, 2, 1.0).unwrap();
        let p = series(vec![ScalarField2D::new(spec, vec![3.0, 4.0, 0.0, 0.0]).unwrap()]);
        let t = series(vec![ScalarField2D::zeros(spec)]);
        let r = rms_stats(&p, &t, &PatchLayout::new(spec, 2).unwrap(), 0).unwrap();
        assert_eq!(r.max_rms, 2.5);
        assert!(rms_stats(&p, &t, &PatchLayout::new(spec, 2).unwrap(), 1).is_err());
    }

    #[test]
    fn mae_examples() {
        let f = random_field(8, 5);
        let truth = series(vec![f.clone(); 3]);
        assert_eq!(accumulated_abs_error(&truth, &truth).unwrap(), vec![0.0; 3]);
        let off = truth.map_frames(|fr| fr.map(|v| v - 0.7).unwrap()).unwrap();
        for m in accumulated_abs_error(&off, &truth).unwrap() {
            assert!((m - 0.7).abs() < 1e-12);
        }
        assert_eq!(running_sum(&[1.0, 2.0, 3.0]), vec![1.0, 3.0, 6.0]);
        let short = series(vec![f]);
        assert!(matches!(accumulated_abs_error(&short, &truth), Err(Error::Shape(_))));
    }

    #[test]
    fn ssim_examples() {
        let x = random_field(64, 7);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y = random_field(64, 8);
        assert_eq!(ssim(&x, &y).unwrap(), ssim(&y, &x).unwrap());
        // independent zero-mean fields
        for seed in 0..100 {
            let a = random_field(64, 1000 + 2 * seed);
            let b = random_field(64, 1001 + 2 * seed);
            assert!(ssim(&a, &b).unwrap().abs() <= 0.2);
        }
    }

    #[test]
    fn ssim_scale_invariance() {
        let x = random_field(32, 9);
        let y = random_field(32, 10).map(|v| 0.5 * v + 0.3).unwrap();
        let base = ssim(&x, &y).unwrap();
        for alpha in [0.01, 0.5, 3.0, 1e3] {
            let s = ssim(&x.map(|v| alpha * v).unwrap(), &y.map(|v| alpha * v).unwrap()).unwrap();
            assert!((s - base).abs() <= 1e-9);
        }
        // a common offset moves the luminance term
        let shifted = ssim(&x.map(|v| v + 5.0).unwrap(), &y.map(|v| v + 5.0).unwrap()).unwrap();
        assert!((shifted - base).abs() > 1e-6);
    }

    #[test]
    fn report_threshold_flag() {
        let spec = GridSpec::new(8, 8, 1.0).unwrap();
        let truth = series((0..25).map(|t| ScalarField2D::constant(spec, t as f64)).collect());
        for (offset, flagged) in [(0.5, false), (0.5 + 1e-9, true), (0.2, false), (2.0, true)] {
            let pred = truth.map_frames(|f| f.map(|v| v + offset).unwrap()).unwrap();
            let r = evaluate("x", &pred, &truth, &EvalOptions::default()).unwrap();
            assert_eq!(r.at_frame, 24);
            assert_eq!(r.threshold_exceeded, flagged, "offset {offset}");
        }
    }

    #[test]
    fn report_serializes_and_exports() {
        let truth = series((0..25).map(|t| random_field(16, t)).collect());
        let pred = series((0..25).map(|t| random_field(16, t + 100)).collect());
        let opts = EvalOptions {
            at_time: 1.0,
            rms_patch: 8,
            wave_numbers: None,
        };
        let r = evaluate("W-Nii-P-SDF", &pred, &truth, &opts).unwrap();
        assert_eq!(r.at_frame, 4);
        assert_eq!(r.wave_numbers, vec![2, 4, 6, 8]);
        assert_eq!(r.to_json().unwrap(), evaluate("W-Nii-P-SDF", &pred, &truth, &opts).unwrap().to_json().unwrap());
        assert_eq!(r.mae_csv().lines().count(), 26);
        assert_eq!(r.spectrum_csv().lines().count(), 9);
        assert!(matches!(
            evaluate("x", &pred, &truth, &EvalOptions { at_time: 6.0, ..opts }),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn quarter_turns_keep_the_spectrum() {
        for seed in 0..5 {
            let f = random_field(32, seed);
            let a = radial_spectrum(&f).unwrap();
            let b = radial_spectrum(&rotate90_ccw(&f)).unwrap();
            for (x, y) in a.bin_energy.iter().zip(&b.bin_energy) {
                assert!((x - y).abs() <= 1e-10 * x.max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn errors_vanish_only_on_equality(seed in any::<u64>(), c in -5.0f64..5.0, cell in 0usize..64) {
            let a = random_field(8, seed);
            let mut v = a.values().to_vec();
            v[cell] += 0.25;
            let b = ScalarField2D::new(*a.spec(), v).unwrap();
            prop_assert_eq!(mean_abs_error(&a, &a), 0.0);
            prop_assert!(mean_abs_error(&a, &b) > 0.0);
            let ta = series(vec![a.clone()]);
            let tb = series(vec![b.clone()]);
            let layout = PatchLayout::new(*a.spec(), 4).unwrap();
            prop_assert!(rms_stats(&ta, &tb, &layout, 0).unwrap().max_rms > 0.0);
            prop_assert_eq!(rms_stats(&ta, &ta, &layout, 0).unwrap().max_rms, 0.0);
            // adding a constant to both leaves the errors unchanged
            let (ac, bc) = (a.map(|x| x + c).unwrap(), b.map(|x| x + c).unwrap());
            prop_assert!((mean_abs_error(&ac, &bc) - mean_abs_error(&a, &b)).abs() < 1e-12);
        }
    }
}
