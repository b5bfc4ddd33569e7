use super::BoundaryMode;
use crate::field::{ScalarField2D, VectorField2D};

/// Smagorinsky eddy viscosity `(cs dx)^2 sqrt(2 S_ij S_ij)`.
///
/// Strain rates use central differences inside the grid and one-sided
/// differences on the outermost cells.
pub fn eddy_viscosity(velocity: &VectorField2D, cs: f64, dx: f64) -> ScalarField2D {
    eddy_viscosity_mode(velocity, cs, dx, BoundaryMode::Channel)
}

/// As [`eddy_viscosity`], wrapping the stencil in periodic mode.
pub fn eddy_viscosity_mode(
    velocity: &VectorField2D,
    cs: f64,
    dx: f64,
    mode: BoundaryMode,
) -> ScalarField2D {
    let spec = *velocity.spec();
    let mut out = vec![0.0; spec.len()];
    eddy_into(velocity.u(), velocity.v(), spec.nx, spec.ny, cs, dx, mode, &mut out);
    ScalarField2D::from_parts_unchecked(spec, out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn eddy_into(
    u: &[f64],
    v: &[f64],
    nx: usize,
    ny: usize,
    cs: f64,
    dx: f64,
    mode: BoundaryMode,
    out: &mut [f64],
) {
    let coef = (cs * dx).powi(2);
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let (dudx, dvdx) = diff(u, v, nx, ny, i, j, true, dx, mode);
            let (dudy, dvdy) = diff(u, v, nx, ny, i, j, false, dx, mode);
            let sxy = 0.5 * (dudy + dvdx);
            let s2 = dudx * dudx + dvdy * dvdy + 2.0 * sxy * sxy;
            out[k] = coef * (2.0 * s2).sqrt();
        }
    }
}

/// Derivatives of `(u, v)` along x (`along_x`) or y at cell `(i, j)`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn diff(
    u: &[f64],
    v: &[f64],
    nx: usize,
    ny: usize,
    i: usize,
    j: usize,
    along_x: bool,
    dx: f64,
    mode: BoundaryMode,
) -> (f64, f64) {
    let (pos, n, stride) = if along_x { (i, nx, 1) } else { (j, ny, nx) };
    let k = j * nx + i;
    if n == 1 {
        return (0.0, 0.0);
    }
    let (lo, hi, span) = match mode {
        BoundaryMode::Periodic => {
            let lo = if pos == 0 { k + (n - 1) * stride } else { k - stride };
            let hi = if pos == n - 1 { k - (n - 1) * stride } else { k + stride };
            (lo, hi, 2.0)
        }
        BoundaryMode::Channel => {
            if pos == 0 {
                (k, k + stride, 1.0)
            } else if pos == n - 1 {
                (k - stride, k, 1.0)
            } else {
                (k - stride, k + stride, 2.0)
            }
        }
    };
    let h = 1.0 / (span * dx);
    ((u[hi] - u[lo]) * h, (v[hi] - v[lo]) * h)
}
