use crate::error::{Error, Result};

const HEADER_LEN: usize = 80;
const RECORD_LEN: usize = 50;

pub type Vertex = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub vertices: [Vertex; 3],
}

impl Triangle {
    pub fn z_range(&self) -> (f64, f64) {
        let z = self.vertices.map(|v| v[2]);
        (z[0].min(z[1]).min(z[2]), z[0].max(z[1]).max(z[2]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub triangles: Vec<Triangle>,
}

impl TriangleMesh {
    pub fn new(triangles: Vec<Triangle>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::Format("mesh has no triangles".into()));
        }
        if triangles
            .iter()
            .flat_map(|t| t.vertices.iter().flatten())
            .any(|c| !c.is_finite())
        {
            return Err(Error::Format("mesh has non-finite vertex coordinates".into()));
        }
        Ok(TriangleMesh { triangles })
    }

    pub fn transformed(&self, affine: &Affine) -> TriangleMesh {
        TriangleMesh {
            triangles: self
                .triangles
                .iter()
                .map(|t| Triangle {
                    vertices: t.vertices.map(|v| affine.apply(v)),
                })
                .collect(),
        }
    }

    /// Serializes to binary STL with zero normals; used for fixtures and round trips.
    pub fn to_binary_stl(&self) -> Vec<u8> {
        let mut out = vec![0u8; HEADER_LEN];
        out.extend((self.triangles.len() as u32).to_le_bytes());
        for t in &self.triangles {
            out.extend([0u8; 12]);
            for v in &t.vertices {
                for c in v {
                    out.extend((*c as f32).to_le_bytes());
                }
            }
            out.extend([0u8; 2]);
        }
        out
    }
}

/// Projected-coordinate step reduced to `v' = scale * v + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub translation: [f64; 3],
    pub scale: f64,
}

impl Default for Affine {
    fn default() -> Self {
        Affine {
            translation: [0.0; 3],
            scale: 1.0,
        }
    }
}

impl Affine {
    pub fn apply(&self, v: Vertex) -> Vertex {
        [
            self.scale * v[0] + self.translation[0],
            self.scale * v[1] + self.translation[1],
            self.scale * v[2] + self.translation[2],
        ]
    }
}

/// Parses a little-endian binary STL. ASCII STL is not accepted.
pub fn parse_stl(bytes: &[u8]) -> Result<TriangleMesh> {
    parse_stl_with(bytes, None)
}

pub fn parse_stl_with(bytes: &[u8], affine: Option<&Affine>) -> Result<TriangleMesh> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::Format(format!(
            "binary STL needs at least 84 bytes, got {}",
            bytes.len()
        )));
    }
    let count = u32::from_le_bytes(bytes[HEADER_LEN..HEADER_LEN + 4].try_into().expect("4 bytes"))
        as usize;
    let expected = HEADER_LEN + 4 + count * RECORD_LEN;
    if bytes.len() != expected {
        let hint = if bytes.starts_with(b"solid") {
            " (ASCII STL is not supported)"
        } else {
            ""
        };
        return Err(Error::Format(format!(
            "STL declares {count} triangles ({expected} bytes) but holds {} bytes{hint}",
            bytes.len()
        )));
    }
    let read_f32 = |off: usize| -> f64 {
        f32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes")) as f64
    };
    let mut triangles = Vec::with_capacity(count);
    for i in 0..count {
        // skip the 12-byte facet normal
        let base = HEADER_LEN + 4 + i * RECORD_LEN + 12;
        let mut vertices = [[0.0; 3]; 3];
        for (k, v) in vertices.iter_mut().enumerate() {
            for (c, slot) in v.iter_mut().enumerate() {
                *slot = read_f32(base + 12 * k + 4 * c);
            }
            if let Some(a) = affine {
                *v = a.apply(*v);
            }
        }
        triangles.push(Triangle { vertices });
    }
    TriangleMesh::new(triangles)
}
