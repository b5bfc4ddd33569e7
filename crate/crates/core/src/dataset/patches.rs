use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField2D};

/// Exact non-overlapping tiling of a grid into square patches, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub patch: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// `(ix, iy)` cell offset of each patch's lower-left corner.
    pub origins: Vec<(usize, usize)>,
    pub parent: GridSpec,
}

impl PatchLayout {
    pub fn new(parent: GridSpec, patch: usize) -> Result<Self> {
        if patch == 0 {
            return Err(Error::Contract("patch size must be positive".into()));
        }
        if !parent.nx.is_multiple_of(patch) {
            return Err(Error::Tiling {
                dimension: "width (nx)",
                size: parent.nx,
                patch,
            });
        }
        if !parent.ny.is_multiple_of(patch) {
            return Err(Error::Tiling {
                dimension: "height (ny)",
                size: parent.ny,
                patch,
            });
        }
        let (grid_rows, grid_cols) = (parent.ny / patch, parent.nx / patch);
        let origins = (0..grid_rows)
            .flat_map(|r| (0..grid_cols).map(move |c| (c * patch, r * patch)))
            .collect();
        Ok(PatchLayout {
            patch,
            grid_rows,
            grid_cols,
            origins,
            parent,
        })
    }

    /// The whole grid as one patch (square grids only).
    pub fn whole(parent: GridSpec) -> Result<Self> {
        if parent.nx != parent.ny {
            return Err(Error::Contract("single-patch layouts need a square grid".into()));
        }
        Self::new(parent, parent.nx)
    }

    pub fn count(&self) -> usize {
        self.origins.len()
    }

    pub fn patch_spec(&self, index: usize) -> GridSpec {
        let (ox, oy) = self.origins[index];
        let p = &self.parent;
        GridSpec {
            nx: self.patch,
            ny: self.patch,
            dx: p.dx,
            origin: (p.origin.0 + ox as f64 * p.dx, p.origin.1 + oy as f64 * p.dx),
        }
    }

    /// Copies patch `index` of a full-grid value slice into `out`.
    pub fn extract_into(&self, values: &[f64], index: usize, out: &mut [f64]) {
        let (ox, oy) = self.origins[index];
        let nx = self.parent.nx;
        for (r, row) in out.chunks_exact_mut(self.patch).enumerate() {
            let start = (oy + r) * nx + ox;
            row.copy_from_slice(&values[start..start + self.patch]);
        }
    }

    pub fn insert(&self, patch_values: &[f64], index: usize, values: &mut [f64]) {
        let (ox, oy) = self.origins[index];
        let nx = self.parent.nx;
        for (r, row) in patch_values.chunks_exact(self.patch).enumerate() {
            let start = (oy + r) * nx + ox;
            values[start..start + self.patch].copy_from_slice(row);
        }
    }
}

pub fn tile_patches(frame: &ScalarField2D, patch: usize) -> Result<(Vec<ScalarField2D>, PatchLayout)> {
    let layout = PatchLayout::new(*frame.spec(), patch)?;
    let patches = (0..layout.count())
        .map(|i| {
            let mut buf = vec![0.0; patch * patch];
            layout.extract_into(frame.values(), i, &mut buf);
            ScalarField2D::from_parts_unchecked(layout.patch_spec(i), buf)
        })
        .collect();
    Ok((patches, layout))
}

pub fn stitch_patches(patches: &[ScalarField2D], layout: &PatchLayout) -> Result<ScalarField2D> {
    if patches.len() != layout.count() {
        return Err(Error::Contract(format!(
            "layout holds {} patches, got {}",
            layout.count(),
            patches.len()
        )));
    }
    let mut values = vec![0.0; layout.parent.len()];
    for (i, p) in patches.iter().enumerate() {
        if p.spec().nx != layout.patch || p.spec().ny != layout.patch {
            return Err(Error::Shape(format!(
                "patch {i} is {}x{}, layout expects {}",
                p.spec().nx,
                p.spec().ny,
                layout.patch
            )));
        }
        layout.insert(p.values(), i, &mut values);
    }
    Ok(ScalarField2D::from_parts_unchecked(layout.parent, values))
}
