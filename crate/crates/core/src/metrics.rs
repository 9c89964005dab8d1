//! Morphological indicators of a particle: volume, area, Corey shape
//! factor, equivalent diameters, sphericity and circularity.
//!
//! Everything is computed from a closed triangle mesh. Models are meshed
//! with [`mesh_surface`]; voxel grids are blurred with a unit Gaussian and
//! meshed at the half level, which removes the staircase that would
//! otherwise inflate the area.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::mesh::{isosurface, ScalarGrid, TriangleMesh};
use crate::metaball::{mesh_surface, MetaballModel};
use crate::voxel::VoxelGrid;
use crate::{Error, Result, Vec3};

/// Silhouette pixels per bounding radius.
pub const SILHOUETTE_PIXELS_PER_RADIUS: f64 = 256.0;
/// Coverage samples per pixel side.
const SUPERSAMPLE: usize = 4;
/// Relative eigenvalue gap below which two covariance axes are treated as
/// interchangeable.
const EIGEN_TIE: f64 = 1e-6;
const GRID_BLUR_SIGMA: f64 = 1.0;

pub const CSV_HEADER: &str = "id,V,A,CSF,Dn,Ds,Dns,phi,C";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalExtents {
    pub l_s: f64,
    pub l_i: f64,
    pub l_l: f64,
    /// Unit axes in the order shortest, intermediate, longest.
    pub axes: [Vec3; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMetrics {
    pub v: f64,
    pub a: f64,
    pub csf: f64,
    pub d_n: f64,
    pub d_s: f64,
    pub d_ns: f64,
    pub phi: f64,
    pub c: f64,
    pub a_p: f64,
    pub p_p: f64,
}

impl ShapeMetrics {
    /// Values in CSV column order, after the id.
    pub fn csv_values(&self) -> [f64; 8] {
        [self.v, self.a, self.csf, self.d_n, self.d_s, self.d_ns, self.phi, self.c]
    }

    pub fn csv_row(&self, id: &str) -> String {
        let mut row = id.to_string();
        for v in self.csv_values() {
            let _ = write!(row, ",{v:?}");
        }
        row
    }
}

/// Header plus one row per `(id, metrics)`.
pub fn metrics_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a ShapeMetrics)>) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for (id, m) in rows {
        out.push_str(&m.csv_row(id));
        out.push('\n');
    }
    out
}

/// Extents along the covariance eigenvectors of a point set.
///
/// When two eigenvalues tie (square cross-sections, for instance) the
/// eigenvectors are arbitrary inside their plane; that pair is replaced by
/// the minimum-width direction of the projected convex hull and its
/// perpendicular. A triple tie is left as the solver returns it.
pub fn principal_extents(points: &[Vec3]) -> Result<PrincipalExtents> {
    if points.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, found: points.len() });
    }
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    extents_along(points, c, cov)
}

/// Extents of the mesh vertices along the eigenvectors of the
/// area-weighted surface covariance. Raw vertex covariance is skewed by the
/// lattice: vertex density depends on the surface orientation.
pub fn mesh_extents(mesh: &TriangleMesh) -> Result<PrincipalExtents> {
    if mesh.vertices.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, found: mesh.vertices.len() });
    }
    let mut area = 0.0;
    let mut first = Vec3::zeros();
    let mut second = Matrix3::zeros();
    for t in &mesh.triangles {
        let [a, b, c] = mesh.corners(t);
        let w = 0.5 * (b - a).cross(&(c - a)).norm();
        let s = a + b + c;
        area += w;
        first += s * (w / 3.0);
        second += (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose()) * (w / 12.0);
    }
    if !(area > 0.0) {
        return Err(Error::Degenerate("mesh has no area".into()));
    }
    let c = first / area;
    let cov = second / area - c * c.transpose();
    extents_along(&mesh.vertices, c, cov)
}

fn extents_along(points: &[Vec3], c: Vec3, cov: Matrix3<f64>) -> Result<PrincipalExtents> {
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda = order.map(|i| eig.eigenvalues[i]);
    if !(lambda[0] > 0.0) || lambda[2] <= 1e-12 * lambda[0] {
        return Err(Error::Degenerate("point set is coplanar or collinear".into()));
    }
    let mut axes = order.map(|i| eig.eigenvectors.column(i).into_owned());

    let tie = |a: f64, b: f64| (a - b).abs() <= EIGEN_TIE * lambda[0];
    let pair = match (tie(lambda[0], lambda[1]), tie(lambda[1], lambda[2])) {
        (true, true) => None,
        (true, false) => Some((0, 1)),
        (false, true) => Some((1, 2)),
        (false, false) => None,
    };
    if let Some((i, j)) = pair {
        let (e1, e2) = (axes[i], axes[j]);
        let planar: Vec<[f64; 2]> = points
            .iter()
            .map(|p| {
                let d = p - c;
                [d.dot(&e1), d.dot(&e2)]
            })
            .collect();
        if let Some([wx, wy]) = min_width_direction(&planar) {
            axes[i] = e1 * wx + e2 * wy;
            axes[j] = e1 * -wy + e2 * wx;
        }
    }

    let mut sized: Vec<(f64, Vec3)> = axes
        .iter()
        .map(|a| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let t = p.dot(a);
                (lo.min(t), hi.max(t))
            });
            (hi - lo, *a)
        })
        .collect();
    sized.sort_by(|a, b| a.0.total_cmp(&b.0));
    if !(sized[0].0 > 0.0) {
        return Err(Error::Degenerate("zero extent".into()));
    }
    Ok(PrincipalExtents {
        l_s: sized[0].0,
        l_i: sized[1].0,
        l_l: sized[2].0,
        axes: [sized[0].1, sized[1].1, sized[2].1],
    })
}

/// Unit normal of the narrowest strip containing the points (rotating
/// calipers over the convex hull).
fn min_width_direction(points: &[[f64; 2]]) -> Option<[f64; 2]> {
    let hull = convex_hull(points);
    let h = hull.len();
    if h < 3 {
        return None;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut best: Option<(f64, [f64; 2])> = None;
    let mut j = 1;
    for i in 0..h {
        let (a, b) = (hull[i], hull[(i + 1) % h]);
        while cross(a, b, hull[(j + 1) % h]) > cross(a, b, hull[j]) {
            j = (j + 1) % h;
        }
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if len == 0.0 {
            continue;
        }
        let width = cross(a, b, hull[j]) / len;
        if best.map_or(true, |(w, _)| width < w) {
            best = Some((width, [-(b[1] - a[1]) / len, (b[0] - a[0]) / len]));
        }
    }
    best.map(|(_, n)| n)
}

/// Counter-clockwise hull without collinear points (monotone chain).
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn corey_shape_factor(e: &PrincipalExtents) -> f64 {
    e.l_s / (e.l_i * e.l_l).sqrt()
}

/// `(V, A)` of a closed mesh.
pub fn mesh_volume_area(mesh: &TriangleMesh) -> Result<(f64, f64)> {
    let open = mesh.boundary_edge_count();
    if mesh.triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    if open > 0 {
        return Err(Error::OpenMesh(open));
    }
    Ok(mesh.volume_area())
}

/// Area and perimeter of the mesh silhouette seen along `direction`.
///
/// Triangles are rasterized with 4×4 coverage samples per pixel and the
/// perimeter is the marching-squares contour of the coverage at one half.
pub fn projected_area_perimeter(mesh: &TriangleMesh, direction: Vec3) -> Result<(f64, f64)> {
    let norm = direction.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidParameter("projection direction must be non-zero".into()));
    }
    let mut d = direction / norm;
    // d and -d see mirror images; rasterize both in the same frame.
    let first = d.iter().copied().find(|c| *c != 0.0).unwrap_or(1.0);
    if first < 0.0 {
        d = -d;
    }
    let helper = if d.x.abs() <= d.y.abs() && d.x.abs() <= d.z.abs() {
        Vec3::x()
    } else if d.y.abs() <= d.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let u = d.cross(&helper).normalize();
    let v = d.cross(&u);

    let radius = mesh.bounding_radius();
    if mesh.triangles.is_empty() || !(radius > 0.0) {
        return Err(Error::Degenerate("empty silhouette".into()));
    }
    let pitch = radius / SILHOUETTE_PIXELS_PER_RADIUS;
    let projected: Vec<[f64; 2]> = mesh.vertices.iter().map(|p| [p.dot(&u), p.dot(&v)]).collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &projected {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    const MARGIN: f64 = 2.0;
    let origin = [lo[0] - MARGIN * pitch, lo[1] - MARGIN * pitch];
    let width = ((hi[0] - lo[0]) / pitch).ceil() as usize + 2 * MARGIN as usize + 1;
    let height = ((hi[1] - lo[1]) / pitch).ceil() as usize + 2 * MARGIN as usize + 1;

    let s = SUPERSAMPLE;
    let (sw, sh) = (width * s, height * s);
    let sub = pitch / s as f64;
    let mut covered = vec![false; sw * sh];
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| {
            let p = projected[i as usize];
            [(p[0] - origin[0]) / sub - 0.5, (p[1] - origin[1]) / sub - 0.5]
        });
        rasterize_triangle(a, b, c, sw, sh, &mut covered);
    }

    let filled = covered.iter().filter(|&&c| c).count();
    if filled == 0 {
        return Err(Error::Degenerate("empty silhouette".into()));
    }
    let area = filled as f64 * sub * sub;

    let mut coverage = vec![0.0; width * height];
    for y in 0..sh {
        for x in 0..sw {
            if covered[x + sw * y] {
                coverage[x / s + width * (y / s)] += 1.0;
            }
        }
    }
    let full = (s * s) as f64;
    coverage.iter_mut().for_each(|c| *c /= full);
    let perimeter = contour_length(&coverage, width, height, 0.5) * pitch;
    Ok((area, perimeter))
}

/// Marks samples at integer coordinates inside or on the triangle.
fn rasterize_triangle(a: [f64; 2], b: [f64; 2], c: [f64; 2], w: usize, h: usize, out: &mut [bool]) {
    let edge = |p: [f64; 2], q: [f64; 2], x: f64, y: f64| (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0]);
    let twice_area = edge(a, b, c[0], c[1]);
    if twice_area == 0.0 {
        return;
    }
    let sign = twice_area.signum();
    let x0 = a[0].min(b[0]).min(c[0]).ceil().max(0.0) as usize;
    let y0 = a[1].min(b[1]).min(c[1]).ceil().max(0.0) as usize;
    let x1 = (a[0].max(b[0]).max(c[0]).floor() as usize).min(w - 1);
    let y1 = (a[1].max(b[1]).max(c[1]).floor() as usize).min(h - 1);
    for y in y0..=y1 {
        let fy = y as f64;
        for x in x0..=x1 {
            let fx = x as f64;
            if sign * edge(a, b, fx, fy) >= 0.0 && sign * edge(b, c, fx, fy) >= 0.0 && sign * edge(c, a, fx, fy) >= 0.0 {
                out[x + w * y] = true;
            }
        }
    }
}

/// Total length, in pixel units, of the `iso` contour of a field sampled at
/// pixel centers. Saddles are split by the cell-center average.
fn contour_length(values: &[f64], w: usize, h: usize, iso: f64) -> f64 {
    let mut total = 0.0;
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let corner = [
                (0.0, 0.0, values[x + w * y]),
                (1.0, 0.0, values[x + 1 + w * y]),
                (1.0, 1.0, values[x + 1 + w * (y + 1)]),
                (0.0, 1.0, values[x + w * (y + 1)]),
            ];
            let inside = corner.map(|c| c.2 >= iso);
            if inside.iter().all(|&i| i) || inside.iter().all(|&i| !i) {
                continue;
            }
            // Crossing on edge e runs from corner e to corner e+1.
            let mut cross: [Option<[f64; 2]>; 4] = [None; 4];
            for e in 0..4 {
                let (p, q) = (corner[e], corner[(e + 1) % 4]);
                if inside[e] != inside[(e + 1) % 4] {
                    let t = (iso - p.2) / (q.2 - p.2);
                    cross[e] = Some([p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)]);
                }
            }
            let len = |a: Option<[f64; 2]>, b: Option<[f64; 2]>| match (a, b) {
                (Some(a), Some(b)) => (a[0] - b[0]).hypot(a[1] - b[1]),
                _ => 0.0,
            };
            let found: Vec<[f64; 2]> = cross.iter().flatten().copied().collect();
            if found.len() == 2 {
                total += (found[0][0] - found[1][0]).hypot(found[0][1] - found[1][1]);
            } else {
                let center = corner.iter().map(|c| c.2).sum::<f64>() / 4.0 >= iso;
                if inside[0] == center {
                    total += len(cross[0], cross[1]) + len(cross[2], cross[3]);
                } else {
                    total += len(cross[3], cross[0]) + len(cross[1], cross[2]);
                }
            }
        }
    }
    total
}

/// All indicators of a closed mesh.
pub fn mesh_metrics(mesh: &TriangleMesh) -> Result<ShapeMetrics> {
    let (v, a) = mesh_volume_area(mesh)?;
    let extents = mesh_extents(mesh)?;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for axis in extents.axes {
        let (ap, pp) = projected_area_perimeter(mesh, axis)?;
        if ap > best.0 {
            best = (ap, pp);
        }
    }
    let (a_p, p_p) = best;
    let d_n = (6.0 * v / PI).cbrt();
    let d_s = (4.0 * a_p / PI).sqrt();
    let a_ve = PI.cbrt() * (6.0 * v).powf(2.0 / 3.0);
    let m = ShapeMetrics {
        v,
        a,
        csf: corey_shape_factor(&extents),
        d_n,
        d_s,
        d_ns: d_n / d_s,
        phi: a_ve / a,
        c: PI * d_s / p_p,
        a_p,
        p_p,
    };
    if m.csv_values().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("shape metrics".into()));
    }
    Ok(m)
}

pub fn shape_metrics(model: &MetaballModel, resolution: usize) -> Result<ShapeMetrics> {
    mesh_metrics(&mesh_surface(model, resolution)?)
}

/// Closed surface of a voxel grid: the half level of the occupancy blurred
/// with a Gaussian of one voxel.
pub fn grid_surface(grid: &VoxelGrid) -> Result<TriangleMesh> {
    if grid.occupied_count() == 0 {
        return Err(Error::EmptySurface);
    }
    let radius = (3.0 * GRID_BLUR_SIGMA).ceil() as usize;
    let pad = radius + 1;
    let [nx, ny, nz] = grid.dims();
    let dims = [nx + 2 * pad, ny + 2 * pad, nz + 2 * pad];
    let mut values = vec![0.0; dims[0] * dims[1] * dims[2]];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if grid.get(x, y, z) {
                    values[(x + pad) + dims[0] * ((y + pad) + dims[1] * (z + pad))] = 1.0;
                }
            }
        }
    }
    let kernel: Vec<f64> = {
        let raw: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let t = i as f64 - radius as f64;
                (-0.5 * t * t / (GRID_BLUR_SIGMA * GRID_BLUR_SIGMA)).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / sum).collect()
    };
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut scratch = vec![0.0; values.len()];
    for axis in 0..3 {
        let (n, stride) = (dims[axis], strides[axis]);
        for (i, out) in scratch.iter_mut().enumerate() {
            let pos = (i / stride) % n;
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let p = pos as isize + k as isize - radius as isize;
                if p >= 0 && (p as usize) < n {
                    acc += w * values[(i as isize + (k as isize - radius as isize) * stride as isize) as usize];
                }
            }
            *out = acc;
        }
        std::mem::swap(&mut values, &mut scratch);
    }
    let h = grid.voxel_size();
    let field = ScalarGrid {
        dims,
        origin: grid.origin().add_scalar(-(pad as f64) * h),
        spacing: h,
        values,
    };
    let mesh = isosurface(&field, 0.5);
    if mesh.triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(mesh)
}

pub fn grid_metrics(grid: &VoxelGrid) -> Result<ShapeMetrics> {
    mesh_metrics(&grid_surface(grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_cube;
    use nalgebra::Rotation3;

    fn box_vertices(size: [f64; 3]) -> Vec<Vec3> {
        (0..8)
            .map(|i| Vec3::new(size[0] * (i & 1) as f64, size[1] * ((i >> 1) & 1) as f64, size[2] * (i >> 2) as f64))
            .collect()
    }

    #[test]
    fn box_extents() {
        let e = principal_extents(&box_vertices([2.0, 1.0, 1.0])).unwrap();
        assert_eq!((e.l_s, e.l_i, e.l_l), (1.0, 1.0, 2.0));
    }

    #[test]
    fn rotated_box_extents() {
        let r = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let pts: Vec<Vec3> = box_vertices([2.0, 1.0, 1.0]).iter().map(|p| r * p + Vec3::new(5.0, -2.0, 1.0)).collect();
        let e = principal_extents(&pts).unwrap();
        for (got, want) in [(e.l_s, 1.0), (e.l_i, 1.0), (e.l_l, 2.0)] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot = e.axes[i].dot(&e.axes[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_points_are_degenerate() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, (i * i) as f64, 0.0)).collect();
        assert!(matches!(principal_extents(&pts), Err(Error::Degenerate(_))));
        assert!(matches!(principal_extents(&pts[..3]), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn csf_examples() {
        let e = |l_s, l_i, l_l| PrincipalExtents { l_s, l_i, l_l, axes: [Vec3::x(), Vec3::y(), Vec3::z()] };
        assert_eq!(corey_shape_factor(&e(1.0, 1.0, 1.0)), 1.0);
        assert_eq!(corey_shape_factor(&e(1.0, 2.0, 2.0)), 0.5);
        assert_eq!(corey_shape_factor(&e(1.0, 1.0, 4.0)), 0.5);
    }

    #[test]
    fn cube_volume_area_and_silhouette() {
        let cube = unit_cube();
        assert_eq!(mesh_volume_area(&cube).unwrap(), (1.0, 6.0));
        let (a, p) = projected_area_perimeter(&cube, Vec3::z()).unwrap();
        assert!((a - 1.0).abs() < 0.01, "{a}");
        assert!((p - 4.0).abs() < 0.08, "{p}");
        let mut open = cube.clone();
        open.triangles.pop();
        assert!(matches!(mesh_volume_area(&open), Err(Error::OpenMesh(_))));
    }

    #[test]
    fn ball_silhouette_is_a_disc() {
        let mesh = mesh_surface(&MetaballModel::sphere(Vec3::zeros(), 1.0), 64).unwrap();
        for d in [Vec3::x(), Vec3::new(0.3, -0.5, 0.8), Vec3::new(-1.0, 2.0, 0.5)] {
            let (a, p) = projected_area_perimeter(&mesh, d).unwrap();
            assert!((a / PI - 1.0).abs() < 0.01, "area {a}");
            assert!((p / (2.0 * PI) - 1.0).abs() < 0.02, "perimeter {p}");
            assert_eq!(projected_area_perimeter(&mesh, -d).unwrap(), (a, p));
        }
    }

    #[test]
    fn single_ball_is_the_reference_shape() {
        let m = shape_metrics(&MetaballModel::sphere(Vec3::new(0.2, 0.0, -1.0), 1.0), 64).unwrap();
        for (name, x) in [("phi", m.phi), ("C", m.c), ("CSF", m.csf), ("Dns", m.d_ns)] {
            assert!((x - 1.0).abs() < 0.02, "{name} = {x}");
        }
        assert!((PI / 6.0 * m.d_n.powi(3) / m.v - 1.0).abs() < 1e-14);
        assert_eq!(m.d_ns, m.d_n / m.d_s);
    }

    #[test]
    fn csv_layout() {
        assert_eq!(metrics_csv(std::iter::empty()), "id,V,A,CSF,Dn,Ds,Dns,phi,C\n");
        let m = shape_metrics(&MetaballModel::sphere(Vec3::zeros(), 1.0), 32).unwrap();
        let csv = metrics_csv([("p0", &m)]);
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row.split(',').count(), 9);
        assert!(row.starts_with("p0,"));
    }
}
