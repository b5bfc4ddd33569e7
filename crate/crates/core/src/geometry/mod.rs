//! Building geometry: binary STL input, footprint rasterization, and the
//! signed distance function used as an extra network input channel.

mod raster;
mod sdf;
mod stl;

pub use raster::{rasterize_footprint, rasterize_footprint_with, SliceRule};
pub use sdf::{compute_sdf, normalize_sdf, SdfGrid};
pub use stl::{parse_stl, parse_stl_with, Affine, Triangle, TriangleMesh};

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField2D};

/// Obstacle occupancy on a grid, `true` = building cell.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildingMask {
    spec: GridSpec,
    inside: Vec<bool>,
}

impl BuildingMask {
    pub fn new(spec: GridSpec, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != spec.len() {
            return Err(Error::Shape(format!(
                "mask of {}x{} needs {} cells, got {}",
                spec.nx,
                spec.ny,
                spec.len(),
                inside.len()
            )));
        }
        Ok(BuildingMask { spec, inside })
    }

    pub fn empty(spec: GridSpec) -> Self {
        BuildingMask {
            spec,
            inside: vec![false; spec.len()],
        }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut inside = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                inside.push(f(ix, iy));
            }
        }
        BuildingMask { spec, inside }
    }

    /// Axis-aligned rectangles given as `(x0, y0, width, height)` in cells.
    pub fn from_rects(spec: GridSpec, rects: &[(usize, usize, usize, usize)]) -> Self {
        Self::from_fn(spec, |ix, iy| {
            rects
                .iter()
                .any(|&(x0, y0, w, h)| ix >= x0 && ix < x0 + w && iy >= y0 && iy < y0 + h)
        })
    }

    /// Cells with value > 0.5 are inside (masks persist as 0/1 floats).
    pub fn from_field(field: &ScalarField2D) -> Self {
        BuildingMask {
            spec: *field.spec(),
            inside: field.values().iter().map(|&v| v > 0.5).collect(),
        }
    }

    pub fn to_field(&self) -> ScalarField2D {
        ScalarField2D::from_parts_unchecked(
            self.spec,
            self.inside.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[bool] {
        &self.inside
    }

    #[inline]
    pub fn is_inside(&self, ix: usize, iy: usize) -> bool {
        self.inside[self.spec.index(ix, iy)]
    }

    pub fn count_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn rotate90_ccw(&self) -> Self {
        Self::from_field(&crate::field::rotate90_ccw(&self.to_field()))
    }

    pub fn flip_vertical(&self) -> Self {
        Self::from_field(&crate::field::flip_vertical(&self.to_field()))
    }
}
