//! Two box buildings as a binary STL, sliced at 2 m, then turned into a
//! signed distance field.

use urbanwind::field::GridSpec;
use urbanwind::geometry::{compute_sdf, normalize_sdf, parse_stl, rasterize_footprint_with, SliceRule, Triangle, TriangleMesh};

fn cuboid(x0: f64, y0: f64, x1: f64, y1: f64, height: f64) -> Vec<Triangle> {
    let c = |i: usize| -> [f64; 3] {
        [if i & 1 == 0 { x0 } else { x1 }, if i & 2 == 0 { y0 } else { y1 }, if i & 4 == 0 { 0.0 } else { height }]
    };
    let faces = [[0, 1, 3, 2], [4, 5, 7, 6], [0, 1, 5, 4], [2, 3, 7, 6], [0, 2, 6, 4], [1, 3, 7, 5]];
    faces
        .iter()
        .flat_map(|f| {
            [
                Triangle { vertices: [c(f[0]), c(f[1]), c(f[2])] },
                Triangle { vertices: [c(f[0]), c(f[2]), c(f[3])] },
            ]
        })
        .collect()
}

fn main() -> urbanwind::Result<()> {
    let mut tris = cuboid(6.0, 8.0, 14.0, 16.0, 12.0);
    tris.extend(cuboid(20.0, 18.0, 26.0, 28.0, 25.0));
    let bytes = TriangleMesh::new(tris)?.to_binary_stl();
    let mesh = parse_stl(&bytes)?;
    let spec = GridSpec::new(32, 32, 1.0)?;
    let mask = rasterize_footprint_with(&mesh, spec, 2.0, SliceRule::AtOrAbove);
    let sdf = compute_sdf(&mask);
    let norm = normalize_sdf(&sdf);
    println!("{} triangles, {} building cells", mesh.triangles.len(), mask.count_inside());
    for y in (0..32).rev().step_by(2) {
        let row: String = (0..32)
            .map(|x| {
                let d = sdf.to_field().get(x, y);
                match d {
                    d if d < 0.0 => '#',
                    d if d <= 2.0 => '+',
                    d if d <= 5.0 => '.',
                    _ => ' ',
                }
            })
            .collect();
        println!("{row}");
    }
    println!("normalized range [{:.3}, {:.3}]", norm.values().iter().cloned().fold(f64::MAX, f64::min), norm.max_abs());
    Ok(())
}
