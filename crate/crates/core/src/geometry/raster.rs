use super::{BuildingMask, Triangle, TriangleMesh};
use crate::field::GridSpec;

/// Which triangles take part in a horizontal slice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SliceRule {
    /// Triangles whose z-range contains the slice height.
    #[default]
    Spanning,
    /// Triangles reaching up to or above the slice height. Suits closed
    /// building meshes standing on the ground, whose walls project to
    /// zero-area footprints and whose roofs sit above the slice.
    AtOrAbove,
}

pub fn rasterize_footprint(mesh: &TriangleMesh, spec: GridSpec, slice_height: f64) -> BuildingMask {
    rasterize_footprint_with(mesh, spec, slice_height, SliceRule::Spanning)
}

pub fn rasterize_footprint_with(
    mesh: &TriangleMesh,
    spec: GridSpec,
    slice_height: f64,
    rule: SliceRule,
) -> BuildingMask {
    let active: Vec<&Triangle> = mesh
        .triangles
        .iter()
        .filter(|t| {
            let (lo, hi) = t.z_range();
            match rule {
                SliceRule::Spanning => lo <= slice_height && slice_height <= hi,
                SliceRule::AtOrAbove => hi >= slice_height,
            }
        })
        .filter(|t| projected_area2(t) != 0.0)
        .collect();
    BuildingMask::from_fn(spec, |ix, iy| {
        let p = spec.cell_center(ix, iy);
        active.iter().any(|t| contains_xy(t, p))
    })
}

fn edge(a: [f64; 3], b: [f64; 3], p: (f64, f64)) -> f64 {
    (b[0] - a[0]) * (p.1 - a[1]) - (b[1] - a[1]) * (p.0 - a[0])
}

fn projected_area2(t: &Triangle) -> f64 {
    let [a, b, c] = t.vertices;
    edge(a, b, (c[0], c[1]))
}

/// Sign-consistent edge functions; points on an edge count as inside.
fn contains_xy(t: &Triangle, p: (f64, f64)) -> bool {
    let [a, b, c] = t.vertices;
    let e0 = edge(a, b, p);
    let e1 = edge(b, c, p);
    let e2 = edge(c, a, p);
    (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0)
}
