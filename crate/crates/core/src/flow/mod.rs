//! Desk-scale 2D incompressible solver used to generate wind fields.
//!
//! One step is a fractional step on a collocated grid: semi-Lagrangian
//! advection, explicit diffusion with Smagorinsky eddy viscosity, optional
//! Boussinesq buoyancy, boundary conditions, pressure projection and
//! obstacle masking. Lengths are meters and times seconds; the molecular
//! viscosity is `1 / reynolds` in m²/s.

mod advect;
mod domain;
mod eddy;
mod projection;

pub use advect::semi_lagrangian_advect;
pub use domain::BoundaryMode;
pub use eddy::{eddy_viscosity, eddy_viscosity_mode};
pub use projection::{max_divergence, project_divergence_free, project_with_report, ProjectionReport};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSeries, GridSpec, ScalarField2D, VectorField2D};
use crate::geometry::BuildingMask;
use domain::Domain;

/// Turbulent Prandtl number closing `alpha_t = nu_t / PR_T`.
pub const TURBULENT_PRANDTL: f64 = 0.9;

/// Amplitude of the seeded start-up perturbation, relative to the inflow speed.
const INITIAL_NOISE: f64 = 0.05;

/// Diffusion substep budget; needing more means the step has blown up.
const MAX_SUBSTEPS: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub reynolds: f64,
    pub grashof: f64,
    pub prandtl: f64,
    pub smagorinsky_cs: f64,
    pub dt: f64,
    pub inflow_speed_ref: f64,
    pub inflow_exponent: f64,
    pub boundary_mode: BoundaryMode,
    pub projection_iters: usize,
    pub projection_tol: f64,
    pub seed: u64,
    /// Lifts the `[0.1, 0.24]` range check on `smagorinsky_cs`.
    #[serde(skip)]
    pub cs_override: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            reynolds: 1.0e5,
            grashof: 0.0,
            prandtl: 0.71,
            smagorinsky_cs: 0.1,
            dt: 0.1,
            inflow_speed_ref: 7.8,
            inflow_exponent: 0.25,
            boundary_mode: BoundaryMode::Channel,
            projection_iters: 1000,
            projection_tol: 1e-3,
            seed: 0,
            cs_override: false,
        }
    }
}

impl FlowConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: FlowConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let key = msg.split('`').nth(1).unwrap_or("config").to_string();
            Error::config(key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {x}")))
            }
        };
        positive("reynolds", self.reynolds)?;
        positive("prandtl", self.prandtl)?;
        positive("dt", self.dt)?;
        positive("projection_tol", self.projection_tol)?;
        if !self.grashof.is_finite() {
            return Err(Error::config("grashof", "must be finite"));
        }
        if !(self.inflow_speed_ref >= 0.0 && self.inflow_speed_ref.is_finite()) {
            return Err(Error::config("inflow_speed_ref", "must be non-negative and finite"));
        }
        if !(self.inflow_exponent >= 0.0 && self.inflow_exponent.is_finite()) {
            return Err(Error::config("inflow_exponent", "must be non-negative and finite"));
        }
        if self.projection_iters == 0 {
            return Err(Error::config("projection_iters", "must be at least 1"));
        }
        let cs = self.smagorinsky_cs;
        if !(cs >= 0.0 && cs.is_finite()) {
            return Err(Error::config("smagorinsky_cs", format!("must be non-negative, got {cs}")));
        }
        if !self.cs_override && !(0.1..=0.24).contains(&cs) {
            return Err(Error::config(
                "smagorinsky_cs",
                format!("{cs} is outside [0.1, 0.24]"),
            ));
        }
        Ok(())
    }

    pub fn thermal(&self) -> bool {
        self.grashof != 0.0
    }
}

/// West-face inflow speed per row: `U_ref (z / z_ref)^alpha` with `z` the
/// distance of the row center from the south wall and `z_ref` the domain
/// height. Empty in periodic mode.
pub fn inflow_profile(spec: &GridSpec, cfg: &FlowConfig) -> Vec<f64> {
    if cfg.boundary_mode == BoundaryMode::Periodic {
        return Vec::new();
    }
    let z_ref = spec.ny as f64 * spec.dx;
    (0..spec.ny)
        .map(|j| {
            let z = (j as f64 + 0.5) * spec.dx;
            if cfg.inflow_exponent == 0.0 {
                cfg.inflow_speed_ref
            } else {
                cfg.inflow_speed_ref * (z / z_ref).powf(cfg.inflow_exponent)
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub velocity: VectorField2D,
    /// Non-dimensional temperature, present when buoyancy is enabled.
    pub theta: Option<ScalarField2D>,
    pub time: f64,
    /// Number of steps taken so far.
    pub step: usize,
    /// Last pressure solution, reused as the next initial guess.
    pressure: Vec<f64>,
}

impl FlowState {
    pub fn new(velocity: VectorField2D, theta: Option<ScalarField2D>) -> Self {
        let n = velocity.spec().len();
        FlowState {
            velocity,
            theta,
            time: 0.0,
            step: 0,
            pressure: vec![0.0; n],
        }
    }

    pub fn at_rest(spec: GridSpec) -> Self {
        Self::new(VectorField2D::zeros(spec), None)
    }

    /// Start-up state: the inflow profile everywhere (channel mode) plus a
    /// seeded perturbation, projected; buildings hold `theta = 1` when
    /// buoyancy is on.
    pub fn initial(mask: &BuildingMask, cfg: &FlowConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = *mask.spec();
        spec.require_solver_size()?;
        let profile = inflow_profile(&spec, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let amp = INITIAL_NOISE * cfg.inflow_speed_ref;
        let mut noise = || if amp > 0.0 { rng.gen_range(-amp..amp) } else { 0.0 };
        let velocity = VectorField2D::from_fn(spec, |_, iy| {
            let base = profile.get(iy).copied().unwrap_or(0.0);
            (base + noise(), noise())
        })?;
        let theta = cfg
            .thermal()
            .then(|| ScalarField2D::from_parts_unchecked(spec, mask.to_field().into_values()));
        let mut state = FlowState::new(velocity, theta);
        let domain = Domain {
            nx: spec.nx,
            ny: spec.ny,
            dx: spec.dx,
            mode: cfg.boundary_mode,
            inflow: &profile,
        };
        let (u, v) = state.velocity.components_mut();
        projection::project_in_place(&domain, mask.cells(), u, v, &mut state.pressure, cfg);
        Ok(state)
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self
            .velocity
            .u()
            .iter()
            .zip(self.velocity.v())
            .map(|(u, v)| u * u + v * v)
            .sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub projection: ProjectionReport,
    pub diffusion_substeps: usize,
    pub max_eddy_viscosity: f64,
}

pub fn step(state: &FlowState, mask: &BuildingMask, cfg: &FlowConfig) -> Result<FlowState> {
    Ok(step_with_diagnostics(state, mask, cfg)?.0)
}

pub fn step_with_diagnostics(
    state: &FlowState,
    mask: &BuildingMask,
    cfg: &FlowConfig,
) -> Result<(FlowState, StepDiagnostics)> {
    let spec = *state.velocity.spec();
    if !spec.same_shape(mask.spec()) {
        return Err(Error::Shape("flow state and mask grids differ".into()));
    }
    spec.require_solver_size()?;
    let (nx, ny, dx, n) = (spec.nx, spec.ny, spec.dx, spec.len());
    let solid = mask.cells();
    let profile = inflow_profile(&spec, cfg);
    let domain = Domain {
        nx,
        ny,
        dx,
        mode: cfg.boundary_mode,
        inflow: &profile,
    };
    let conserve_momentum = cfg.boundary_mode == BoundaryMode::Periodic && !solid.iter().any(|&s| s);
    let (u0, v0) = (state.velocity.u(), state.velocity.v());
    let mean_before = (mean(u0), mean(v0));

    // advection
    let scale = cfg.dt / dx;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    advect::advect_into(u0, u0, v0, scale, nx, ny, cfg.boundary_mode, &mut u);
    advect::advect_into(v0, u0, v0, scale, nx, ny, cfg.boundary_mode, &mut v);
    let mut theta = state.theta.as_ref().map(|t| {
        let mut out = vec![0.0; n];
        advect::advect_into(t.values(), u0, v0, scale, nx, ny, cfg.boundary_mode, &mut out);
        out
    });
    zero_solid(solid, &mut u);
    zero_solid(solid, &mut v);

    // diffusion
    let mut nu_t = vec![0.0; n];
    eddy::eddy_into(&u, &v, nx, ny, cfg.smagorinsky_cs, dx, cfg.boundary_mode, &mut nu_t);
    let nu_mol = 1.0 / cfg.reynolds;
    let kappa_mol = 1.0 / (cfg.reynolds * cfg.prandtl);
    let nu_max = nu_mol + projection::max_abs(&nu_t);
    let kappa_max = kappa_mol + projection::max_abs(&nu_t) / TURBULENT_PRANDTL;
    let limit = dx * dx / (4.0 * nu_max.max(if theta.is_some() { kappa_max } else { 0.0 }));
    let substeps = (cfg.dt / limit).ceil().max(1.0);
    if !(substeps <= MAX_SUBSTEPS) {
        return Err(Error::SimulationDiverged {
            step: state.step + 1,
        });
    }
    let substeps = substeps as usize;
    if substeps > 1 {
        warn!(
            "step {}: diffusion limit {limit:.3e} s < dt {}; using {substeps} substeps",
            state.step + 1,
            cfg.dt
        );
    }
    let h = cfg.dt / substeps as f64;
    let mut lap = vec![0.0; n];
    for _ in 0..substeps {
        domain.laplacian(&u, |i, j| domain.u_at(&u, i, j, true), &mut lap);
        for k in 0..n {
            u[k] += h * (nu_mol + nu_t[k]) * lap[k];
        }
        domain.laplacian(&v, |i, j| domain.v_at(&v, i, j), &mut lap);
        for k in 0..n {
            v[k] += h * (nu_mol + nu_t[k]) * lap[k];
        }
        zero_solid(solid, &mut u);
        zero_solid(solid, &mut v);
        if let Some(t) = theta.as_mut() {
            domain.laplacian(t, |i, j| domain.s_at(t, i, j, 0.0), &mut lap);
            for k in 0..n {
                t[k] += h * (kappa_mol + nu_t[k] / TURBULENT_PRANDTL) * lap[k];
            }
        }
    }
    if conserve_momentum {
        // bilinear backtracking and variable-coefficient diffusion do not
        // conserve the mean exactly; the continuous equations do
        let (du, dv) = (mean_before.0 - mean(&u), mean_before.1 - mean(&v));
        u.iter_mut().for_each(|x| *x += du);
        v.iter_mut().for_each(|x| *x += dv);
    }

    // buoyancy
    if let Some(t) = theta.as_mut() {
        let g = cfg.grashof / (cfg.reynolds * cfg.reynolds);
        for k in 0..n {
            if !solid[k] {
                v[k] -= cfg.dt * g * t[k];
            } else {
                t[k] = 1.0;
            }
        }
    }

    // boundaries
    if cfg.boundary_mode == BoundaryMode::Channel {
        for (j, &speed) in profile.iter().enumerate() {
            let k = domain.idx(0, j);
            if !solid[k] {
                u[k] = speed;
                v[k] = 0.0;
            }
        }
    }

    let mut pressure = state.pressure.clone();
    let report = projection::project_in_place(&domain, solid, &mut u, &mut v, &mut pressure, cfg);
    zero_solid(solid, &mut u);
    zero_solid(solid, &mut v);

    let finite = u.iter().chain(&v).all(|x| x.is_finite())
        && theta.as_ref().is_none_or(|t| t.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(Error::SimulationDiverged {
            step: state.step + 1,
        });
    }
    let next = FlowState {
        velocity: VectorField2D::from_parts_unchecked(spec, u, v),
        theta: theta.map(|t| ScalarField2D::from_parts_unchecked(spec, t)),
        time: state.time + cfg.dt,
        step: state.step + 1,
        pressure,
    };
    Ok((
        next,
        StepDiagnostics {
            projection: report,
            diffusion_substeps: substeps,
            max_eddy_viscosity: nu_max - nu_mol,
        },
    ))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub max_divergence: f64,
    pub unconverged_projections: usize,
    pub max_projection_iterations: usize,
    /// Smallest Pearson correlation between consecutive recorded frames.
    pub min_frame_correlation: f64,
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub magnitude: FieldSeries,
    pub velocity: Vec<VectorField2D>,
    pub final_state: FlowState,
    pub diagnostics: RunDiagnostics,
}

/// Runs from [`FlowState::initial`] and records every `record_every`-th step.
pub fn run_simulation(
    mask: &BuildingMask,
    cfg: &FlowConfig,
    n_steps: usize,
    record_every: usize,
) -> Result<SimulationOutput> {
    let state = FlowState::initial(mask, cfg)?;
    simulate_from(state, mask, cfg, n_steps, record_every)
}

pub fn simulate_from(
    mut state: FlowState,
    mask: &BuildingMask,
    cfg: &FlowConfig,
    n_steps: usize,
    record_every: usize,
) -> Result<SimulationOutput> {
    cfg.validate()?;
    if n_steps == 0 || record_every == 0 {
        return Err(Error::Contract("n_steps and record_every must be at least 1".into()));
    }
    if n_steps < record_every {
        return Err(Error::Contract(format!(
            "{n_steps} steps record no frame at every {record_every} steps"
        )));
    }
    let mut velocity = Vec::with_capacity(n_steps / record_every);
    let mut diag = RunDiagnostics {
        min_frame_correlation: 1.0,
        ..RunDiagnostics::default()
    };
    for i in 1..=n_steps {
        let (next, d) = step_with_diagnostics(&state, mask, cfg)?;
        state = next;
        diag.steps += 1;
        diag.max_divergence = diag.max_divergence.max(d.projection.max_divergence);
        diag.max_projection_iterations = diag.max_projection_iterations.max(d.projection.iterations);
        if !d.projection.converged {
            diag.unconverged_projections += 1;
        }
        if i % record_every == 0 {
            velocity.push(state.velocity.clone());
        }
    }
    if diag.unconverged_projections > 0 {
        warn!(
            "{} of {} projections hit the iteration budget",
            diag.unconverged_projections, diag.steps
        );
    }
    let frames: Vec<ScalarField2D> = velocity.iter().map(|v| v.magnitude()).collect();
    for pair in frames.windows(2) {
        diag.min_frame_correlation = diag
            .min_frame_correlation
            .min(pearson(pair[0].values(), pair[1].values()));
    }
    Ok(SimulationOutput {
        magnitude: FieldSeries::new(cfg.dt * record_every as f64, frames)?,
        velocity,
        final_state: state,
        diagnostics: diag,
    })
}

fn zero_solid(solid: &[bool], x: &mut [f64]) {
    for (value, &s) in x.iter_mut().zip(solid) {
        if s {
            *value = 0.0;
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        1.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
