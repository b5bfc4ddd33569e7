//! Uniform-grid 2D fields and the geometric transforms used by the
//! generalization experiments.
//!
//! Storage is row-major with `y` as the outer index: the value at column
//! `ix`, row `iy` lives at `iy * nx + ix`. Every module in the crate uses
//! this convention.

mod npy;

pub use npy::{read_npy, read_npy_from, write_npy, write_npy_to, NpyArray};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid geometry shared by every field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Cell size in meters.
    pub dx: f64,
    /// Lower-left corner of the grid in meters.
    pub origin: (f64, f64),
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64) -> Result<Self> {
        Self::with_origin(nx, ny, dx, (0.0, 0.0))
    }

    pub fn with_origin(nx: usize, ny: usize, dx: f64, origin: (f64, f64)) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Contract(format!("grid must be non-empty, got {nx}x{ny}")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::Contract(format!("cell size must be positive, got {dx}")));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::Contract("grid origin must be finite".into()));
        }
        Ok(GridSpec { nx, ny, dx, origin })
    }

    /// Checks the size requirement of the flow solver (at least 4 cells per axis).
    pub fn require_solver_size(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::Contract(format!(
                "solver grids need at least 4x4 cells, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Cell-center coordinates in meters.
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + (ix as f64 + 0.5) * self.dx,
            self.origin.1 + (iy as f64 + 0.5) * self.dx,
        )
    }

    /// Same spacing and origin, dimensions swapped.
    pub fn transposed(&self) -> GridSpec {
        GridSpec {
            nx: self.ny,
            ny: self.nx,
            ..*self
        }
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("{what} has a non-finite value at {i}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField2D {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField2D {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "field of {}x{} needs {} values, got {}",
                spec.nx,
                spec.ny,
                spec.len(),
                values.len()
            )));
        }
        check_finite(&values, "scalar field")?;
        Ok(ScalarField2D { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        ScalarField2D {
            spec,
            values: vec![value; spec.len()],
        }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                values.push(f(ix, iy));
            }
        }
        Self::new(spec, values)
    }

    /// Builds a field from nested rows (`rows[iy][ix]`) with unit spacing.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ny = rows.len();
        let nx = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nx) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let spec = GridSpec::new(nx, ny, 1.0)?;
        Self::new(spec, rows.concat())
    }

    pub(crate) fn from_parts_unchecked(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        ScalarField2D { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.spec.index(ix, iy)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.spec.nx).map(<[f64]>::to_vec).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.spec, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Same values on a grid with a different spacing / origin but equal shape.
    pub fn with_spec(mut self, spec: GridSpec) -> Result<Self> {
        if !spec.same_shape(&self.spec) {
            return Err(Error::Shape("respec must keep the grid shape".into()));
        }
        self.spec = spec;
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField2D {
    spec: GridSpec,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl VectorField2D {
    pub fn new(spec: GridSpec, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != spec.len() || v.len() != spec.len() {
            return Err(Error::Shape(format!(
                "vector field of {}x{} needs {} values per component, got {} and {}",
                spec.nx,
                spec.ny,
                spec.len(),
                u.len(),
                v.len()
            )));
        }
        check_finite(&u, "u component")?;
        check_finite(&v, "v component")?;
        Ok(VectorField2D { spec, u, v })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        VectorField2D {
            spec,
            u: vec![0.0; spec.len()],
            v: vec![0.0; spec.len()],
        }
    }

    pub fn uniform(spec: GridSpec, u: f64, v: f64) -> Self {
        VectorField2D {
            spec,
            u: vec![u; spec.len()],
            v: vec![v; spec.len()],
        }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Result<Self> {
        let mut u = Vec::with_capacity(spec.len());
        let mut v = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                let (a, b) = f(ix, iy);
                u.push(a);
                v.push(b);
            }
        }
        Self::new(spec, u, v)
    }

    pub(crate) fn from_parts_unchecked(spec: GridSpec, u: Vec<f64>, v: Vec<f64>) -> Self {
        VectorField2D { spec, u, v }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub(crate) fn components_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.u, &mut self.v)
    }

    pub fn into_components(self) -> (Vec<f64>, Vec<f64>) {
        (self.u, self.v)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn max_speed(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b)))
    }

    pub fn magnitude(&self) -> ScalarField2D {
        magnitude(self)
    }
}

/// Time-ordered frames on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSeries {
    spec: GridSpec,
    dt: f64,
    frames: Vec<ScalarField2D>,
}

impl FieldSeries {
    pub fn new(dt: f64, frames: Vec<ScalarField2D>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Contract(format!("frame interval must be positive, got {dt}")));
        }
        let spec = *frames
            .first()
            .ok_or_else(|| Error::Contract("a series needs at least one frame".into()))?
            .spec();
        if frames.iter().any(|f| !f.spec().same_shape(&spec)) {
            return Err(Error::Shape("all frames of a series must share the grid".into()));
        }
        Ok(FieldSeries { spec, dt, frames })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[ScalarField2D] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &ScalarField2D {
        &self.frames[t]
    }

    pub fn into_frames(self) -> Vec<ScalarField2D> {
        self.frames
    }

    /// Frames `[start, end)` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Range(format!(
                "frame range {start}..{end} outside series of length {}",
                self.len()
            )));
        }
        FieldSeries::new(self.dt, self.frames[start..end].to_vec())
    }

    pub fn map_frames(&self, f: impl Fn(&ScalarField2D) -> ScalarField2D) -> Result<Self> {
        FieldSeries::new(self.dt, self.frames.iter().map(f).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.frames.iter().fold(0.0_f64, |m, f| m.max(f.max_abs()))
    }

    /// Shape `(T, H, W)` and the flattened values, as stored in `.npy` files.
    pub fn to_array(&self) -> NpyArray {
        let mut values = Vec::with_capacity(self.len() * self.spec.len());
        for f in &self.frames {
            values.extend_from_slice(f.values());
        }
        NpyArray {
            shape: vec![self.len(), self.spec.ny, self.spec.nx],
            values,
        }
    }

    /// Inverse of [`FieldSeries::to_array`]; `spec` supplies the spacing.
    pub fn from_array(array: &NpyArray, dx: f64, dt: f64) -> Result<Self> {
        let (t, h, w) = match array.shape.as_slice() {
            [t, h, w] => (*t, *h, *w),
            [h, w] => (1, *h, *w),
            other => {
                return Err(Error::Shape(format!(
                    "series arrays are (T, H, W), got shape {other:?}"
                )))
            }
        };
        let spec = GridSpec::new(w, h, dx)?;
        let frames = array
            .values
            .chunks(h * w)
            .take(t)
            .map(|c| ScalarField2D::new(spec, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        FieldSeries::new(dt, frames)
    }
}

/// Quarter turn counter-clockwise in matrix orientation (row 0 drawn on top),
/// the same convention as `numpy.rot90`: `out[r][c] = in[c][nx - 1 - r]`.
/// Rectangular grids come back with `nx` and `ny` swapped.
pub fn rotate90_ccw(field: &ScalarField2D) -> ScalarField2D {
    let s = field.spec();
    let out_spec = s.transposed();
    let mut out = Vec::with_capacity(s.len());
    // out has s.nx rows of s.ny columns
    for r in 0..s.nx {
        for c in 0..s.ny {
            out.push(field.get(s.nx - 1 - r, c));
        }
    }
    ScalarField2D::from_parts_unchecked(out_spec, out)
}

/// Three quarter turns, the inverse of [`rotate90_ccw`].
pub fn rotate90_cw(field: &ScalarField2D) -> ScalarField2D {
    rotate90_ccw(&rotate90_ccw(&rotate90_ccw(field)))
}

/// Reverses the row order.
pub fn flip_vertical(field: &ScalarField2D) -> ScalarField2D {
    let s = field.spec();
    let mut out = Vec::with_capacity(s.len());
    for row in field.values().chunks(s.nx).rev() {
        out.extend_from_slice(row);
    }
    ScalarField2D::from_parts_unchecked(*s, out)
}

pub fn magnitude(vec: &VectorField2D) -> ScalarField2D {
    let values = vec.u().iter().zip(vec.v()).map(|(a, b)| a.hypot(*b)).collect();
    ScalarField2D::from_parts_unchecked(*vec.spec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f2(rows: &[&[f64]]) -> ScalarField2D {
        ScalarField2D::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rotate_two_by_two() {
        let (a, b, c, d) = (1.0, 2.0, 3.0, 4.0);
        let x = f2(&[&[a, b], &[c, d]]);
        assert_eq!(rotate90_ccw(&x).rows(), vec![vec![b, d], vec![a, c]]);
    }

    #[test]
    fn rotate_rectangular_swaps_dims() {
        let x = ScalarField2D::from_fn(GridSpec::new(5, 3, 2.0).unwrap(), |i, j| (i * 10 + j) as f64)
            .unwrap();
        let r = rotate90_ccw(&x);
        assert_eq!((r.spec().nx, r.spec().ny), (3, 5));
        assert_eq!(r.spec().dx, 2.0);
        assert_eq!(rotate90_cw(&r), x);
    }

    #[test]
    fn rotate_constant_is_constant() {
        let x = ScalarField2D::constant(GridSpec::new(6, 6, 1.0).unwrap(), 7.5);
        assert_eq!(rotate90_ccw(&x), x);
    }

    #[test]
    fn flip_two_by_two() {
        let x = f2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(flip_vertical(&x).rows(), vec![vec![3.0, 4.0], vec![1.0, 2.0]]);
    }

    #[test]
    fn flip_symmetric_unchanged() {
        let x = f2(&[&[1.0, 2.0], &[5.0, 6.0], &[1.0, 2.0]]);
        assert_eq!(flip_vertical(&x), x);
    }

    #[test]
    fn magnitude_examples() {
        let spec = GridSpec::new(4, 4, 2.0).unwrap();
        let m = magnitude(&VectorField2D::uniform(spec, 3.0, 4.0));
        assert!(m.values().iter().all(|&x| x == 5.0));
        let m = magnitude(&VectorField2D::zeros(spec));
        assert!(m.values().iter().all(|&x| x == 0.0));
        let m = magnitude(&VectorField2D::uniform(spec, 7.8, 0.0));
        assert!(m.values().iter().all(|&x| x == 7.8));
    }

    #[test]
    fn rejects_non_finite() {
        let spec = GridSpec::new(2, 1, 1.0).unwrap();
        assert!(ScalarField2D::new(spec, vec![0.0, f64::NAN]).is_err());
        assert!(ScalarField2D::new(spec, vec![0.0]).is_err());
    }

    fn field_strategy() -> impl Strategy<Value = ScalarField2D> {
        (1usize..7, 1usize..7).prop_flat_map(|(nx, ny)| {
            prop::collection::vec(-100.0f64..100.0, nx * ny).prop_map(move |v| {
                ScalarField2D::new(GridSpec::new(nx, ny, 1.0).unwrap(), v).unwrap()
            })
        })
    }

    fn sorted(v: &[f64]) -> Vec<f64> {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    proptest! {
        #[test]
        fn rotation_group_and_flip_involution(x in field_strategy()) {
            let r4 = rotate90_ccw(&rotate90_ccw(&rotate90_ccw(&rotate90_ccw(&x))));
            prop_assert_eq!(&r4, &x);
            prop_assert_eq!(&flip_vertical(&flip_vertical(&x)), &x);
            prop_assert_eq!(sorted(rotate90_ccw(&x).values()), sorted(x.values()));
            prop_assert_eq!(sorted(flip_vertical(&x).values()), sorted(x.values()));
        }

        #[test]
        fn magnitude_bounds(u in prop::collection::vec(-50.0f64..50.0, 16),
                            v in prop::collection::vec(-50.0f64..50.0, 16)) {
            let spec = GridSpec::new(4, 4, 1.0).unwrap();
            let vf = VectorField2D::new(spec, u.clone(), v.clone()).unwrap();
            let m = magnitude(&vf);
            for i in 0..16 {
                let s = m.values()[i];
                prop_assert!(s >= 0.0);
                prop_assert!(s >= u[i].abs().max(v[i].abs()) / 2f64.sqrt());
            }
        }
    }
}
