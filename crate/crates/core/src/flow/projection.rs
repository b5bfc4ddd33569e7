//! Pressure projection onto discretely divergence-free velocity fields.
//!
//! Periodic grids without obstacles use an exact spectral solve with the
//! modified wavenumber `sin(2 pi k / n) / dx` of the central difference.
//! Everything else solves `G^T Z G p = -D(u)` by conjugate gradients, where
//! `Z` zeroes building cells; the operator is symmetric because the ghost
//! rules make `D` the negative transpose of `G`.

use num_complex::Complex64;

use super::domain::Domain;
use super::{inflow_profile, BoundaryMode, FlowConfig};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::VectorField2D;
use crate::geometry::BuildingMask;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectionReport {
    pub iterations: usize,
    /// Max-norm of the discrete divergence after projection (1/s).
    pub max_divergence: f64,
    pub converged: bool,
}

/// Stand-alone projection with a zero initial pressure guess.
pub fn project_divergence_free(
    velocity: &VectorField2D,
    mask: &BuildingMask,
    cfg: &FlowConfig,
) -> Result<VectorField2D> {
    Ok(project_with_report(velocity, mask, cfg)?.0)
}

pub fn project_with_report(
    velocity: &VectorField2D,
    mask: &BuildingMask,
    cfg: &FlowConfig,
) -> Result<(VectorField2D, ProjectionReport)> {
    let spec = *velocity.spec();
    if !spec.same_shape(mask.spec()) {
        return Err(Error::Shape("velocity and mask grids differ".into()));
    }
    let inflow = inflow_profile(&spec, cfg);
    let domain = Domain {
        nx: spec.nx,
        ny: spec.ny,
        dx: spec.dx,
        mode: cfg.boundary_mode,
        inflow: &inflow,
    };
    let (mut u, mut v) = velocity.clone().into_components();
    let mut p = vec![0.0; spec.len()];
    let report = project_in_place(&domain, mask.cells(), &mut u, &mut v, &mut p, cfg);
    Ok((VectorField2D::from_parts_unchecked(spec, u, v), report))
}

/// Max-norm of the central-difference divergence including inflow ghosts.
pub fn max_divergence(velocity: &VectorField2D, cfg: &FlowConfig) -> f64 {
    let spec = *velocity.spec();
    let inflow = inflow_profile(&spec, cfg);
    let domain = Domain {
        nx: spec.nx,
        ny: spec.ny,
        dx: spec.dx,
        mode: cfg.boundary_mode,
        inflow: &inflow,
    };
    let mut div = vec![0.0; spec.len()];
    domain.divergence(velocity.u(), velocity.v(), true, &mut div);
    max_abs(&div)
}

pub(crate) fn project_in_place(
    domain: &Domain<'_>,
    solid: &[bool],
    u: &mut [f64],
    v: &mut [f64],
    pressure: &mut [f64],
    cfg: &FlowConfig,
) -> ProjectionReport {
    zero_solid(solid, u);
    zero_solid(solid, v);
    let spectral = domain.mode == BoundaryMode::Periodic
        && !solid.iter().any(|&s| s)
        && domain.nx.is_power_of_two()
        && domain.ny.is_power_of_two();
    let (iterations, converged) = if spectral {
        spectral_project(domain, u, v);
        (1, true)
    } else {
        let (it, ok) = conjugate_gradient(domain, solid, u, v, pressure, cfg);
        let n = u.len();
        let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
        domain.gradient(pressure, &mut gx, &mut gy);
        for k in 0..n {
            if !solid[k] {
                u[k] -= gx[k];
                v[k] -= gy[k];
            }
        }
        (it, ok)
    };
    let mut div = vec![0.0; u.len()];
    domain.divergence(u, v, true, &mut div);
    ProjectionReport {
        iterations,
        max_divergence: max_abs(&div),
        converged,
    }
}

fn spectral_project(domain: &Domain<'_>, u: &mut [f64], v: &mut [f64]) {
    let (nx, ny) = (domain.nx, domain.ny);
    let fft = Fft2::new(ny, nx).expect("power-of-two grid checked by caller");
    let mut uh: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut vh: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.forward(&mut uh);
    fft.forward(&mut vh);
    let two_pi = 2.0 * std::f64::consts::PI;
    for r in 0..ny {
        let sy = (two_pi * r as f64 / ny as f64).sin() / domain.dx;
        for c in 0..nx {
            let sx = (two_pi * c as f64 / nx as f64).sin() / domain.dx;
            let k2 = sx * sx + sy * sy;
            if k2 < 1e-24 {
                continue;
            }
            let k = r * nx + c;
            let dot = uh[k] * sx + vh[k] * sy;
            uh[k] -= dot * (sx / k2);
            vh[k] -= dot * (sy / k2);
        }
    }
    fft.inverse(&mut uh);
    fft.inverse(&mut vh);
    for (dst, z) in u.iter_mut().zip(&uh) {
        *dst = z.re;
    }
    for (dst, z) in v.iter_mut().zip(&vh) {
        *dst = z.re;
    }
}

/// Solves `G^T Z G p = -D(u)` from the warm start in `p`. Stops when the
/// residual max-norm, which equals the post-projection divergence, drops
/// below the tolerance.
fn conjugate_gradient(
    domain: &Domain<'_>,
    solid: &[bool],
    u: &[f64],
    v: &[f64],
    p: &mut [f64],
    cfg: &FlowConfig,
) -> (usize, bool) {
    let n = u.len();
    let mut scratch = Scratch::new(n);
    let mut r = vec![0.0; n];
    domain.divergence(u, v, true, &mut r);
    let mut ap = vec![0.0; n];
    apply_operator(domain, solid, p, &mut ap, &mut scratch);
    for k in 0..n {
        r[k] = -r[k] - ap[k];
    }
    if max_abs(&r) <= cfg.projection_tol {
        return (0, true);
    }
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    for it in 1..=cfg.projection_iters {
        apply_operator(domain, solid, &d, &mut ap, &mut scratch);
        let dad = dot(&d, &ap);
        if dad <= 0.0 || !dad.is_finite() {
            return (it, false);
        }
        let alpha = rr / dad;
        for k in 0..n {
            p[k] += alpha * d[k];
            r[k] -= alpha * ap[k];
        }
        if max_abs(&r) <= cfg.projection_tol {
            return (it, true);
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            d[k] = r[k] + beta * d[k];
        }
    }
    (cfg.projection_iters, false)
}

struct Scratch {
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            gx: vec![0.0; n],
            gy: vec![0.0; n],
        }
    }
}

/// `out = G^T Z G q = -D0(Z G q)`.
fn apply_operator(domain: &Domain<'_>, solid: &[bool], q: &[f64], out: &mut [f64], s: &mut Scratch) {
    domain.gradient(q, &mut s.gx, &mut s.gy);
    zero_solid(solid, &mut s.gx);
    zero_solid(solid, &mut s.gy);
    domain.divergence(&s.gx, &s.gy, false, out);
    for x in out.iter_mut() {
        *x = -*x;
    }
}

fn zero_solid(solid: &[bool], x: &mut [f64]) {
    for (value, &s) in x.iter_mut().zip(solid) {
        if s {
            *value = 0.0;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn periodic() -> FlowConfig {
        FlowConfig {
            boundary_mode: BoundaryMode::Periodic,
            inflow_speed_ref: 0.0,
            ..FlowConfig::default()
        }
    }

    fn random_field(spec: GridSpec, seed: u64) -> VectorField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorField2D::from_fn(spec, |_, _| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).unwrap()
    }

    #[test]
    fn periodic_ramp_becomes_divergence_free() {
        let spec = GridSpec::new(32, 32, 1.0).unwrap();
        let ramp = VectorField2D::from_fn(spec, |x, _| (x as f64 * 0.25, 0.0)).unwrap();
        let cfg = periodic();
        assert!(max_divergence(&ramp, &cfg) > 0.1);
        let out = project_divergence_free(&ramp, &BuildingMask::empty(spec), &cfg).unwrap();
        assert!(max_divergence(&out, &cfg) <= 1e-8);
    }

    #[test]
    fn constant_field_unchanged() {
        let spec = GridSpec::new(16, 8, 2.0).unwrap();
        let cfg = periodic();
        let f = VectorField2D::uniform(spec, 1.5, -0.5);
        let out = project_divergence_free(&f, &BuildingMask::empty(spec), &cfg).unwrap();
        for (a, b) in out.u().iter().zip(f.u()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_projection_is_idempotent() {
        let spec = GridSpec::new(32, 16, 1.0).unwrap();
        let cfg = periodic();
        let mask = BuildingMask::empty(spec);
        let once = project_divergence_free(&random_field(spec, 4), &mask, &cfg).unwrap();
        let twice = project_divergence_free(&once, &mask, &cfg).unwrap();
        let gap = once.u().iter().zip(twice.u()).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(gap <= 1e-10);
    }

    #[test]
    fn channel_projection_with_obstacle() {
        let spec = GridSpec::new(32, 24, 2.0).unwrap();
        let mask = BuildingMask::from_rects(spec, &[(10, 8, 4, 6)]);
        let cfg = FlowConfig {
            projection_iters: 2000,
            ..FlowConfig::default()
        };
        let (out, report) = project_with_report(&random_field(spec, 9), &mask, &cfg).unwrap();
        assert!(report.converged, "{report:?}");
        assert!(report.max_divergence <= cfg.projection_tol);
        assert!((max_divergence(&out, &cfg) - report.max_divergence).abs() < 1e-12);
        for (k, &s) in mask.cells().iter().enumerate() {
            if s {
                assert_eq!((out.u()[k], out.v()[k]), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn periodic_with_obstacle_uses_iterative_solve() {
        let spec = GridSpec::new(16, 16, 1.0).unwrap();
        let mask = BuildingMask::from_rects(spec, &[(5, 5, 3, 3)]);
        let cfg = FlowConfig {
            projection_iters: 2000,
            ..periodic()
        };
        let (_, report) = project_with_report(&random_field(spec, 1), &mask, &cfg).unwrap();
        assert!(report.converged && report.iterations > 1);
    }
}
