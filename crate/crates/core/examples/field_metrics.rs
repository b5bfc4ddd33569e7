//! Error metrics on synthetic fields: MAE, patch RMS, radial spectrum and SSIM.

use std::f64::consts::TAU;

use urbanwind::field::{FieldSeries, GridSpec, ScalarField2D};
use urbanwind::metrics::{evaluate, EvalOptions};

fn wave(spec: GridSpec, k: f64, phase: f64, amp: f64) -> ScalarField2D {
    ScalarField2D::from_fn(spec, |x, y| 5.0 + amp * (TAU * k * (x as f64 + 0.5 * y as f64) / 64.0 + phase).sin())
        .expect("grid")
}

fn main() -> urbanwind::Result<()> {
    let spec = GridSpec::new(64, 64, 1.0)?;
    let truth = FieldSeries::new(0.2, (0..25).map(|t| wave(spec, 3.0, 0.1 * t as f64, 1.0)).collect())?;
    for (name, amp, lag) in [("exact", 1.0, 0.0), ("damped", 0.6, 0.0), ("lagging", 1.0, 0.4)] {
        let pred = FieldSeries::new(0.2, (0..25).map(|t| wave(spec, 3.0, 0.1 * t as f64 - lag, amp)).collect())?;
        let r = evaluate(name, &pred, &truth, &EvalOptions { rms_patch: 32, ..EvalOptions::default() })?;
        println!(
            "{name:8} MAE@{}s {:.4}  max RMS {:.4}  SSIM {:.4}  spectrum |diff| {:?}  over 0.5 m/s: {}",
            r.at_time,
            r.mae_at_time,
            r.rms.max_rms,
            r.ssim,
            r.spectrum_abs_diff.iter().map(|d| format!("{d:.1}")).collect::<Vec<_>>(),
            r.threshold_exceeded
        );
    }
    Ok(())
}
