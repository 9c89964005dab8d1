//! Triangle meshes and isosurface extraction.
//!
//! Isosurfaces use marching tetrahedra on the Kuhn split of every lattice
//! cell (six tetrahedra around the main diagonal). The split is conforming
//! between neighbouring cells, so the output is watertight with no
//! ambiguous configurations to resolve.

use std::collections::HashMap;
use std::path::Path;

use crate::{Result, Vec3};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Edges not shared by exactly two oppositely oriented triangles.
    pub fn boundary_edge_count(&self) -> usize {
        let mut edges: HashMap<(u32, u32), (u32, i32)> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let (key, sign) = if a < b { ((a, b), 1) } else { ((b, a), -1) };
                let e = edges.entry(key).or_insert((0, 0));
                e.0 += 1;
                e.1 += sign;
            }
        }
        edges.values().filter(|&&(n, s)| n != 2 || s != 0).count()
    }

    pub fn is_closed(&self) -> bool {
        !self.triangles.is_empty() && self.boundary_edge_count() == 0
    }

    /// Signed volume (positive for outward orientation) by tetrahedra
    /// against the vertex centroid.
    pub fn signed_volume(&self) -> f64 {
        let c = self.centroid();
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, d] = self.corners(t);
                (a - c).dot(&(b - c).cross(&(d - c))) / 6.0
            })
            .sum()
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.triangle_area(t)).sum()
    }

    /// `(|signed volume|, area)`.
    pub fn volume_area(&self) -> (f64, f64) {
        (self.signed_volume().abs(), self.area())
    }

    pub fn triangle_area(&self, t: &[u32; 3]) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    #[inline]
    pub fn corners(&self, t: &[u32; 3]) -> [Vec3; 3] {
        t.map(|i| self.vertices[i as usize])
    }

    pub fn centroid(&self) -> Vec3 {
        if self.vertices.is_empty() {
            return Vec3::zeros();
        }
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Largest vertex distance from the vertex centroid.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(0.0, f64::max)
    }

    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::with_capacity(40 * (self.vertices.len() + self.triangles.len()));
        for v in &self.vertices {
            out.push_str(&format!("v {:?} {:?} {:?}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }

    pub fn to_stl(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(84 + 50 * self.triangles.len());
        let mut header = [0u8; 80];
        let tag = b"binary STL";
        header[..tag.len()].copy_from_slice(tag);
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for t in &self.triangles {
            let [a, b, c] = self.corners(t);
            let n = (b - a).cross(&(c - a));
            let n = if n.norm() > 0.0 { n.normalize() } else { n };
            for v in [n, a, b, c] {
                for x in v.iter() {
                    out.extend_from_slice(&(*x as f32).to_le_bytes());
                }
            }
            out.extend_from_slice(&0u16.to_le_bytes());
        }
        out
    }

    /// Writes OBJ for `.obj` paths, binary STL otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some("obj") => self.to_obj().into_bytes(),
            _ => self.to_stl(),
        };
        crate::fsutil::write_atomic(path, &bytes)
    }
}

/// Values sampled on a cubic lattice, x fastest.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn position(&self, index: usize) -> Vec3 {
        let [nx, ny, _] = self.dims;
        let (x, y, z) = (index % nx, (index / nx) % ny, index / (nx * ny));
        self.origin + self.spacing * Vec3::new(x as f64, y as f64, z as f64)
    }
}

// Kuhn split: each tetrahedron walks from corner 0 to corner 7 adding one
// axis at a time. Corner bit 0 is +x, bit 1 is +y, bit 2 is +z.
const TETRAHEDRA: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

// Keeps interpolated vertices off lattice points so no triangle collapses.
const EDGE_PARAM_CLAMP: f64 = 1e-4;

/// Watertight triangulation of `{value = iso}`; samples with `value >= iso`
/// are inside and triangles face away from them.
pub fn isosurface(grid: &ScalarGrid, iso: f64) -> TriangleMesh {
    let [nx, ny, nz] = grid.dims;
    let mut mesh = TriangleMesh::default();
    if nx < 2 || ny < 2 || nz < 2 {
        return mesh;
    }
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();

    let mut vertex_on = |mesh: &mut TriangleMesh, a: usize, b: usize| -> u32 {
        let key = if a < b { (a, b) } else { (b, a) };
        *edge_vertex.entry(key).or_insert_with(|| {
            let (fa, fb) = (grid.values[key.0], grid.values[key.1]);
            let t = ((iso - fa) / (fb - fa)).clamp(EDGE_PARAM_CLAMP, 1.0 - EDGE_PARAM_CLAMP);
            let (pa, pb) = (grid.position(key.0), grid.position(key.1));
            mesh.vertices.push(pa + t * (pb - pa));
            (mesh.vertices.len() - 1) as u32
        })
    };

    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let corner = |c: usize| idx(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
                let ids: [usize; 8] = std::array::from_fn(corner);
                let inside = ids.map(|i| grid.values[i] >= iso);
                if inside.iter().all(|&v| v) || inside.iter().all(|&v| !v) {
                    continue;
                }
                for tet in TETRAHEDRA {
                    let v = tet.map(|c| ids[c]);
                    let ins: Vec<usize> = v.iter().copied().filter(|&i| grid.values[i] >= iso).collect();
                    let outs: Vec<usize> = v.iter().copied().filter(|&i| grid.values[i] < iso).collect();
                    let anchor = match ins.first() {
                        Some(&a) if !outs.is_empty() => grid.position(a),
                        _ => continue,
                    };
                    match (ins.len(), outs.len()) {
                        (1, 3) => {
                            let t = [0, 1, 2].map(|j| vertex_on(&mut mesh, ins[0], outs[j]));
                            push_oriented(&mut mesh, t, anchor);
                        }
                        (3, 1) => {
                            let t = [0, 1, 2].map(|j| vertex_on(&mut mesh, ins[j], outs[0]));
                            push_oriented(&mut mesh, t, anchor);
                        }
                        (2, 2) => {
                            let ac = vertex_on(&mut mesh, ins[0], outs[0]);
                            let ad = vertex_on(&mut mesh, ins[0], outs[1]);
                            let bd = vertex_on(&mut mesh, ins[1], outs[1]);
                            let bc = vertex_on(&mut mesh, ins[1], outs[0]);
                            push_oriented(&mut mesh, [ac, ad, bd], anchor);
                            push_oriented(&mut mesh, [ac, bd, bc], anchor);
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
    }
    mesh
}

fn push_oriented(mesh: &mut TriangleMesh, t: [u32; 3], inside: Vec3) {
    let [a, b, c] = mesh.corners(&t);
    let n = (b - a).cross(&(c - a));
    if n.dot(&(inside - a)) > 0.0 {
        mesh.triangles.push([t[0], t[2], t[1]]);
    } else {
        mesh.triangles.push(t);
    }
}

/// Axis-aligned unit-edge cube `[0,1]^3` as 12 outward triangles.
pub fn unit_cube() -> TriangleMesh {
    let vertices = (0..8)
        .map(|c| Vec3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64))
        .collect();
    let triangles = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    TriangleMesh {
        vertices,
        triangles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_grid(n: usize, r: f64) -> ScalarGrid {
        let h = 2.6 * r / (n - 1) as f64;
        let origin = Vec3::repeat(-1.3 * r);
        let mut values = Vec::new();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let p = origin + h * Vec3::new(x as f64, y as f64, z as f64);
                    values.push(r * r - p.norm_squared());
                }
            }
        }
        ScalarGrid {
            dims: [n; 3],
            origin,
            spacing: h,
            values,
        }
    }

    #[test]
    fn unit_cube_is_closed_and_exact() {
        let cube = unit_cube();
        assert!(cube.is_closed());
        assert_eq!(cube.signed_volume(), 1.0);
        assert_eq!(cube.area(), 6.0);
    }

    #[test]
    fn isosurface_is_watertight_and_outward() {
        let mesh = isosurface(&sphere_grid(21, 1.0), 0.0);
        assert!(mesh.is_closed());
        assert!(mesh.signed_volume() > 0.0);
        let r = mesh.bounding_radius();
        let min_area = mesh
            .triangles
            .iter()
            .map(|t| mesh.triangle_area(t))
            .fold(f64::INFINITY, f64::min);
        assert!(min_area > 1e-12 * r * r);
    }

    #[test]
    fn removing_a_triangle_opens_the_mesh() {
        let mut mesh = isosurface(&sphere_grid(15, 1.0), 0.0);
        mesh.triangles.pop();
        assert_eq!(mesh.boundary_edge_count(), 3);
    }

    #[test]
    fn exact_lattice_hits_do_not_degenerate() {
        // Sphere of radius exactly 2 lattice steps: many samples sit on the surface.
        let n = 9;
        let mut values = Vec::new();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let p = Vec3::new(x as f64 - 4.0, y as f64 - 4.0, z as f64 - 4.0);
                    values.push(4.0 - p.norm_squared());
                }
            }
        }
        let grid = ScalarGrid {
            dims: [n; 3],
            origin: Vec3::zeros(),
            spacing: 1.0,
            values,
        };
        let mesh = isosurface(&grid, 0.0);
        assert!(mesh.is_closed());
        assert!(mesh.triangles.iter().all(|t| mesh.triangle_area(t) > 1e-12 * 4.0));
    }

    #[test]
    fn stl_layout() {
        let stl = unit_cube().to_stl();
        assert_eq!(stl.len(), 84 + 12 * 50);
        assert_eq!(u32::from_le_bytes(stl[80..84].try_into().unwrap()), 12);
        let obj = unit_cube().to_obj();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 8);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 12);
    }
}
