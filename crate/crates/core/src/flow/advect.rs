use super::BoundaryMode;
use crate::error::{Error, Result};
use crate::field::{ScalarField2D, VectorField2D};

/// Backtracks every cell center by `velocity * dt` and samples `field`
/// bilinearly there. Departure points wrap in periodic mode and are clamped
/// to the span of cell centers in channel mode.
pub fn semi_lagrangian_advect(
    field: &ScalarField2D,
    velocity: &VectorField2D,
    dt: f64,
    mode: BoundaryMode,
) -> Result<ScalarField2D> {
    let spec = *field.spec();
    if !spec.same_shape(velocity.spec()) {
        return Err(Error::Shape("field and velocity grids differ".into()));
    }
    let mut out = vec![0.0; spec.len()];
    advect_into(
        field.values(),
        velocity.u(),
        velocity.v(),
        dt / spec.dx,
        spec.nx,
        spec.ny,
        mode,
        &mut out,
    );
    Ok(ScalarField2D::from_parts_unchecked(spec, out))
}

/// `scale` is `dt / dx`, converting velocity to a displacement in cells.
#[allow(clippy::too_many_arguments)]
pub(crate) fn advect_into(
    q: &[f64],
    u: &[f64],
    v: &[f64],
    scale: f64,
    nx: usize,
    ny: usize,
    mode: BoundaryMode,
    out: &mut [f64],
) {
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let x = i as f64 - u[k] * scale;
            let y = j as f64 - v[k] * scale;
            out[k] = sample(q, x, y, nx, ny, mode);
        }
    }
}

#[inline]
fn sample(q: &[f64], x: f64, y: f64, nx: usize, ny: usize, mode: BoundaryMode) -> f64 {
    let (i0, i1, fx) = axis(x, nx, mode);
    let (j0, j1, fy) = axis(y, ny, mode);
    let a = q[j0 * nx + i0] * (1.0 - fx) + q[j0 * nx + i1] * fx;
    let b = q[j1 * nx + i0] * (1.0 - fx) + q[j1 * nx + i1] * fx;
    a * (1.0 - fy) + b * fy
}

/// Lower index, upper index and weight of the upper index along one axis.
#[inline]
fn axis(x: f64, n: usize, mode: BoundaryMode) -> (usize, usize, f64) {
    match mode {
        BoundaryMode::Periodic => {
            let w = x.rem_euclid(n as f64);
            let f = w.floor();
            let i0 = (f as usize).min(n - 1);
            (i0, (i0 + 1) % n, w - f)
        }
        BoundaryMode::Channel => {
            let c = x.clamp(0.0, (n - 1) as f64);
            let f = c.floor();
            let i0 = f as usize;
            (i0, (i0 + 1).min(n - 1), c - f)
        }
    }
}
