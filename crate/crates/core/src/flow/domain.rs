//! Boundary-aware stencil access shared by the solver kernels.
//!
//! Channel mode ghost rules:
//!
//! | side   | u                   | v          | p            |
//! |--------|---------------------|------------|--------------|
//! | west   | `2 U_in(y) - u_0`   | `-v_0`     | `p_0`        |
//! | east   | `u_{n-1}`           | `v_{n-1}`  | `-p_{n-1}`   |
//! | south  | `u_0`               | `-v_0`     | `p_0`        |
//! | north  | `u_{n-1}`           | `-v_{n-1}` | `p_{n-1}`    |
//!
//! The pressure rules are paired with the homogeneous velocity rules so that
//! the discrete divergence is exactly minus the transpose of the discrete
//! gradient, which keeps the projection operator symmetric.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Periodic,
    Channel,
}

#[derive(Clone, Debug)]
pub(crate) struct Domain<'a> {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub mode: BoundaryMode,
    /// West-face inflow speed per row; empty in periodic mode.
    pub inflow: &'a [f64],
}

impl Domain<'_> {
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    fn wrap(i: isize, n: usize) -> usize {
        i.rem_euclid(n as isize) as usize
    }

    #[inline]
    fn clamp(i: isize, n: usize) -> usize {
        i.clamp(0, n as isize - 1) as usize
    }

    /// x-velocity with ghost values; `with_inflow = false` gives the
    /// homogeneous (zero-inflow) rule.
    #[inline]
    pub fn u_at(&self, u: &[f64], i: isize, j: isize, with_inflow: bool) -> f64 {
        match self.mode {
            BoundaryMode::Periodic => u[self.idx(Self::wrap(i, self.nx), Self::wrap(j, self.ny))],
            BoundaryMode::Channel => {
                let jc = Self::clamp(j, self.ny);
                if i < 0 {
                    let inner = u[self.idx(0, jc)];
                    if with_inflow {
                        2.0 * self.inflow[jc] - inner
                    } else {
                        -inner
                    }
                } else {
                    u[self.idx(Self::clamp(i, self.nx), jc)]
                }
            }
        }
    }

    #[inline]
    pub fn v_at(&self, v: &[f64], i: isize, j: isize) -> f64 {
        match self.mode {
            BoundaryMode::Periodic => v[self.idx(Self::wrap(i, self.nx), Self::wrap(j, self.ny))],
            BoundaryMode::Channel => {
                let mut sign = 1.0;
                if i < 0 {
                    sign = -sign;
                }
                if j < 0 || j >= self.ny as isize {
                    sign = -sign;
                }
                sign * v[self.idx(Self::clamp(i, self.nx), Self::clamp(j, self.ny))]
            }
        }
    }

    #[inline]
    pub fn p_at(&self, p: &[f64], i: isize, j: isize) -> f64 {
        match self.mode {
            BoundaryMode::Periodic => p[self.idx(Self::wrap(i, self.nx), Self::wrap(j, self.ny))],
            BoundaryMode::Channel => {
                let sign = if i >= self.nx as isize { -1.0 } else { 1.0 };
                sign * p[self.idx(Self::clamp(i, self.nx), Self::clamp(j, self.ny))]
            }
        }
    }

    /// Scalar with zero-gradient walls and outlet; the west face holds
    /// `west_value` (Dirichlet) in channel mode.
    #[inline]
    pub fn s_at(&self, s: &[f64], i: isize, j: isize, west_value: f64) -> f64 {
        match self.mode {
            BoundaryMode::Periodic => s[self.idx(Self::wrap(i, self.nx), Self::wrap(j, self.ny))],
            BoundaryMode::Channel => {
                let jc = Self::clamp(j, self.ny);
                if i < 0 {
                    2.0 * west_value - s[self.idx(0, jc)]
                } else {
                    s[self.idx(Self::clamp(i, self.nx), jc)]
                }
            }
        }
    }

    /// Central-difference divergence. `with_inflow = false` evaluates the
    /// homogeneous operator, the exact negative transpose of [`Self::gradient`].
    pub fn divergence(&self, u: &[f64], v: &[f64], with_inflow: bool, out: &mut [f64]) {
        let h = 0.5 / self.dx;
        for j in 0..self.ny {
            let jj = j as isize;
            for i in 0..self.nx {
                let ii = i as isize;
                let interior = i > 0 && i + 1 < self.nx && j > 0 && j + 1 < self.ny;
                let k = self.idx(i, j);
                out[k] = if interior {
                    h * (u[k + 1] - u[k - 1] + v[k + self.nx] - v[k - self.nx])
                } else {
                    h * (self.u_at(u, ii + 1, jj, with_inflow) - self.u_at(u, ii - 1, jj, with_inflow)
                        + self.v_at(v, ii, jj + 1)
                        - self.v_at(v, ii, jj - 1))
                };
            }
        }
    }

    pub fn gradient(&self, p: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        let h = 0.5 / self.dx;
        for j in 0..self.ny {
            let jj = j as isize;
            for i in 0..self.nx {
                let ii = i as isize;
                let interior = i > 0 && i + 1 < self.nx && j > 0 && j + 1 < self.ny;
                let k = self.idx(i, j);
                if interior {
                    gx[k] = h * (p[k + 1] - p[k - 1]);
                    gy[k] = h * (p[k + self.nx] - p[k - self.nx]);
                } else {
                    gx[k] = h * (self.p_at(p, ii + 1, jj) - self.p_at(p, ii - 1, jj));
                    gy[k] = h * (self.p_at(p, ii, jj + 1) - self.p_at(p, ii, jj - 1));
                }
            }
        }
    }

    /// Five-point Laplacian of a field whose neighbors come from `at`.
    pub fn laplacian(&self, q: &[f64], at: impl Fn(isize, isize) -> f64, out: &mut [f64]) {
        let r = 1.0 / (self.dx * self.dx);
        for j in 0..self.ny {
            let jj = j as isize;
            for i in 0..self.nx {
                let ii = i as isize;
                let k = self.idx(i, j);
                let interior = i > 0 && i + 1 < self.nx && j > 0 && j + 1 < self.ny;
                let sum = if interior {
                    q[k + 1] + q[k - 1] + q[k + self.nx] + q[k - self.nx]
                } else {
                    at(ii + 1, jj) + at(ii - 1, jj) + at(ii, jj + 1) + at(ii, jj - 1)
                };
                out[k] = r * (sum - 4.0 * q[k]);
            }
        }
    }
}
