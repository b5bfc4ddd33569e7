//! Exact signed Euclidean distance transform.
//!
//! Distances are measured cell center to cell center. Outside cells get
//! `+min |p - q|` over inside cells `q`; inside cells get `-min |p - q|` over
//! outside cells. The transform runs the lower-envelope-of-parabolas pass
//! along rows and then along columns on squared distances, which is exact
//! for integer lattice offsets.

use super::BuildingMask;
use crate::field::{GridSpec, ScalarField2D};

#[derive(Clone, Debug, PartialEq)]
pub struct SdfGrid {
    spec: GridSpec,
    distance: Vec<f64>,
}

impl SdfGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn distance(&self) -> &[f64] {
        &self.distance
    }

    /// Magnitude assigned when no boundary exists, and the normalization scale.
    pub fn cap(&self) -> f64 {
        distance_cap(&self.spec)
    }

    pub fn to_field(&self) -> ScalarField2D {
        ScalarField2D::from_parts_unchecked(self.spec, self.distance.clone())
    }

    pub fn from_field(field: &ScalarField2D) -> Self {
        SdfGrid {
            spec: *field.spec(),
            distance: field.values().to_vec(),
        }
    }
}

pub fn distance_cap(spec: &GridSpec) -> f64 {
    spec.nx.max(spec.ny) as f64 * spec.dx
}

pub fn compute_sdf(mask: &BuildingMask) -> SdfGrid {
    let spec = *mask.spec();
    let cap = distance_cap(&spec);
    let to_inside = squared_edt(&spec, |i| mask.cells()[i]);
    let to_outside = squared_edt(&spec, |i| !mask.cells()[i]);
    let distance = mask
        .cells()
        .iter()
        .enumerate()
        .map(|(i, &inside)| {
            if inside {
                let d2 = to_outside[i];
                if d2.is_finite() {
                    -spec.dx * d2.sqrt()
                } else {
                    -cap
                }
            } else {
                let d2 = to_inside[i];
                if d2.is_finite() {
                    spec.dx * d2.sqrt()
                } else {
                    cap
                }
            }
        })
        .collect();
    SdfGrid { spec, distance }
}

/// Distance divided by the cap, clamped to `[-1, 1]`.
pub fn normalize_sdf(sdf: &SdfGrid) -> ScalarField2D {
    let cap = sdf.cap();
    ScalarField2D::from_parts_unchecked(
        sdf.spec,
        sdf.distance.iter().map(|d| (d / cap).clamp(-1.0, 1.0)).collect(),
    )
}

/// Squared distance (in cell units) from every cell to the nearest feature cell;
/// `INFINITY` when there are no features.
fn squared_edt(spec: &GridSpec, is_feature: impl Fn(usize) -> bool) -> Vec<f64> {
    let (nx, ny) = (spec.nx, spec.ny);
    let mut grid: Vec<f64> = (0..nx * ny)
        .map(|i| if is_feature(i) { 0.0 } else { f64::INFINITY })
        .collect();

    let n = nx.max(ny);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut env = Envelope::with_capacity(n);

    for row in grid.chunks_exact_mut(nx) {
        f[..nx].copy_from_slice(row);
        env.transform(&f[..nx], &mut d[..nx]);
        row.copy_from_slice(&d[..nx]);
    }
    for ix in 0..nx {
        for iy in 0..ny {
            f[iy] = grid[iy * nx + ix];
        }
        env.transform(&f[..ny], &mut d[..ny]);
        for iy in 0..ny {
            grid[iy * nx + ix] = d[iy];
        }
    }
    grid
}

/// Scratch space for the 1D lower envelope of parabolas `f(q) + (p - q)^2`.
struct Envelope {
    vertex: Vec<usize>,
    bound: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            vertex: Vec::with_capacity(n),
            bound: Vec::with_capacity(n + 1),
        }
    }

    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        self.vertex.clear();
        self.bound.clear();
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            loop {
                let Some(&v) = self.vertex.last() else {
                    self.vertex.push(q);
                    self.bound.push(f64::NEG_INFINITY);
                    break;
                };
                let s = intersection(f, v, q);
                if s <= *self.bound.last().expect("bound per vertex") {
                    self.vertex.pop();
                    self.bound.pop();
                } else {
                    self.vertex.push(q);
                    self.bound.push(s);
                    break;
                }
            }
        }
        if self.vertex.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (p, slot) in out.iter_mut().enumerate() {
            while k + 1 < self.vertex.len() && self.bound[k + 1] < p as f64 {
                k += 1;
            }
            let v = self.vertex[k];
            let off = p as f64 - v as f64;
            *slot = f[v] + off * off;
        }
    }
}

fn intersection(f: &[f64], a: usize, b: usize) -> f64 {
    let (af, bf) = (a as f64, b as f64);
    ((f[b] + bf * bf) - (f[a] + af * af)) / (2.0 * (bf - af))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// All-pairs scan, independent of the envelope passes.
    fn brute_force(mask: &BuildingMask) -> Vec<f64> {
        let s = *mask.spec();
        let cap = distance_cap(&s);
        let mut out = Vec::with_capacity(s.len());
        for iy in 0..s.ny {
            for ix in 0..s.nx {
                let me = mask.is_inside(ix, iy);
                let mut best = f64::INFINITY;
                for jy in 0..s.ny {
                    for jx in 0..s.nx {
                        if mask.is_inside(jx, jy) != me {
                            let dx = (ix as f64 - jx as f64) * s.dx;
                            let dy = (iy as f64 - jy as f64) * s.dx;
                            best = best.min((dx * dx + dy * dy).sqrt());
                        }
                    }
                }
                let d = if best.is_finite() { best } else { cap };
                out.push(if me { -d } else { d });
            }
        }
        out
    }

    #[test]
    fn single_cell_neighbors() {
        let spec = GridSpec::new(5, 5, 1.0).unwrap();
        let mask = BuildingMask::from_fn(spec, |x, y| x == 2 && y == 2);
        let sdf = compute_sdf(&mask);
        let at = |x: usize, y: usize| sdf.distance()[spec.index(x, y)];
        for (x, y) in [(1, 2), (3, 2), (2, 1), (2, 3)] {
            assert_eq!(at(x, y), 1.0);
        }
        for (x, y) in [(1, 1), (3, 3), (1, 3), (3, 1)] {
            assert!((at(x, y) - 2f64.sqrt()).abs() < 1e-15);
        }
        // the inside cell has four outside neighbors at distance 1
        assert_eq!(at(2, 2), -1.0);
    }

    #[test]
    fn empty_and_full_masks_use_cap() {
        let spec = GridSpec::new(6, 4, 2.0).unwrap();
        let sdf = compute_sdf(&BuildingMask::empty(spec));
        assert!(sdf.distance().iter().all(|&d| d == 12.0));
        let full = BuildingMask::from_fn(spec, |_, _| true);
        assert!(compute_sdf(&full).distance().iter().all(|&d| d == -12.0));
    }

    #[test]
    fn inside_cell_with_one_outside_neighbor() {
        let spec = GridSpec::new(4, 4, 1.0).unwrap();
        let mask = BuildingMask::from_fn(spec, |x, y| !(x == 1 && y == 0));
        let sdf = compute_sdf(&mask);
        assert_eq!(sdf.distance()[spec.index(1, 1)], -1.0);
        assert_eq!(sdf.distance()[spec.index(1, 0)], 1.0);
    }

    #[test]
    fn normalization() {
        let spec = GridSpec::new(4, 4, 1.0).unwrap();
        let sdf = SdfGrid {
            spec,
            distance: vec![4.0, 0.0, -2.0, 9.0, -9.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        };
        let n = normalize_sdf(&sdf);
        assert_eq!(&n.values()[..6], &[1.0, 0.0, -0.5, 1.0, -1.0, 0.25]);
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let nx = rng.gen_range(1..20);
            let ny = rng.gen_range(1..20);
            let density = rng.gen_range(0.0..1.0);
            let spec = GridSpec::new(nx, ny, 0.5 + trial as f64 * 0.1).unwrap();
            let mask = BuildingMask::from_fn(spec, |_, _| rng.gen_bool(density));
            let fast = compute_sdf(&mask);
            let slow = brute_force(&mask);
            for (a, b) in fast.distance().iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12, "trial {trial}: {a} vs {b}");
            }
        }
    }

    fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> BuildingMask {
        let spec = GridSpec::new(n, n, 1.0).unwrap();
        let density = rng.gen_range(0.0..1.0);
        BuildingMask::from_fn(spec, |_, _| rng.gen_bool(density))
    }

    #[test]
    fn sign_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let mask = random_mask(&mut rng, 12);
            let sdf = compute_sdf(&mask);
            for (&inside, &d) in mask.cells().iter().zip(sdf.distance()) {
                assert!(if inside { d < 0.0 } else { d > 0.0 });
            }
        }
    }

    /// Same-sign pairs are exactly 1-Lipschitz. Pairs straddling the boundary
    /// jump by up to one extra cell, since both sides sit at least one cell
    /// center away from the opposite region.
    #[test]
    fn lipschitz_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let mask = random_mask(&mut rng, 14);
            let s = *mask.spec();
            let sdf = compute_sdf(&mask);
            let d = sdf.distance();
            for a in 0..s.len() {
                for b in 0..s.len() {
                    let (ax, ay) = ((a % s.nx) as f64, (a / s.nx) as f64);
                    let (bx, by) = ((b % s.nx) as f64, (b / s.nx) as f64);
                    let dist = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
                    let jump = (d[a] - d[b]).abs();
                    if mask.cells()[a] == mask.cells()[b] {
                        assert!(jump <= dist + 1e-12);
                    } else {
                        assert!(jump <= dist + 1.0 + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn neighbor_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mask = random_mask(&mut rng, 16);
        let s = *mask.spec();
        let sdf = compute_sdf(&mask);
        let d = sdf.distance();
        for iy in 0..s.ny {
            for ix in 0..s.nx {
                for (jx, jy) in [(ix + 1, iy), (ix, iy + 1), (ix + 1, iy + 1)] {
                    if jx < s.nx && jy < s.ny {
                        let (p, q) = (d[s.index(ix, iy)].abs(), d[s.index(jx, jy)].abs());
                        assert!(p <= q + 2f64.sqrt() + 1e-12);
                        assert!(q <= p + 2f64.sqrt() + 1e-12);
                    }
                }
            }
        }
    }
}
