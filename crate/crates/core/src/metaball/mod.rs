//! Inverse-square metaball descriptor.
//!
//! `f(p) = sum_i k_i / |p - x_i|^2`; the particle is `{p : f(p) >= 1}`.
//! A lone control point with weight `k` describes a sphere of radius `sqrt(k)`.

mod io;

pub use io::{load_model, parse_model, save_model, write_model};

use crate::mesh::{isosurface, ScalarGrid, TriangleMesh};
use crate::voxel::VoxelGrid;
use crate::{Error, Result, Vec3};

/// Relative distance below which evaluation is treated as singular.
pub const SINGULARITY_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoint {
    /// Weight, in squared length units. Negative weights indent the surface.
    pub k: f64,
    pub x: Vec3,
}

impl ControlPoint {
    pub fn new(k: f64, x: Vec3) -> Self {
        Self { k, x }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaballModel {
    points: Vec<ControlPoint>,
    scale: f64,
}

impl MetaballModel {
    pub fn new(points: Vec<ControlPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter(
                "a metaball model needs at least one control point".into(),
            ));
        }
        if points
            .iter()
            .any(|c| !c.k.is_finite() || !c.x.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite("control point parameters".into()));
        }
        let scale = model_scale(&points);
        Ok(Self { points, scale })
    }

    /// Single control point: a sphere of radius `radius` around `center`.
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Self::new(vec![ControlPoint::new(radius * radius, center)]).expect("finite sphere")
    }

    pub fn control_points(&self) -> &[ControlPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Characteristic size used for the singularity guard: spread of the
    /// control points plus the largest single-point radius.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn evaluate(&self, p: Vec3) -> Result<f64> {
        let guard = SINGULARITY_GUARD * self.scale;
        let mut f = 0.0;
        for (index, c) in self.points.iter().enumerate() {
            let r2 = (p - c.x).norm_squared();
            if r2 < guard * guard {
                return Err(Error::Singularity {
                    index,
                    distance: r2.sqrt(),
                });
            }
            f += c.k / r2;
        }
        Ok(f)
    }

    /// Field value with singular distances clamped to the guard radius, so a
    /// sample on top of a positive point reads as deep inside.
    pub fn evaluate_clamped(&self, p: Vec3) -> f64 {
        let guard = SINGULARITY_GUARD * self.scale;
        let g2 = guard * guard;
        self.points
            .iter()
            .map(|c| c.k / (p - c.x).norm_squared().max(g2))
            .sum()
    }

    /// `f(p) >= 1`; the surface itself counts as inside.
    pub fn contains(&self, p: Vec3) -> Result<bool> {
        Ok(self.evaluate(p)? >= 1.0)
    }

    pub fn translated(&self, t: Vec3) -> Self {
        let points = self
            .points
            .iter()
            .map(|c| ControlPoint::new(c.k, c.x + t))
            .collect();
        Self::new(points).expect("translation keeps parameters finite")
    }

    /// Geometric scaling by `s`: positions by `s`, weights by `s^2`.
    pub fn scaled(&self, s: f64) -> Self {
        let points = self
            .points
            .iter()
            .map(|c| ControlPoint::new(c.k * s * s, c.x * s))
            .collect();
        Self::new(points).expect("scaling keeps parameters finite")
    }

    pub fn rotated(&self, rotation: &nalgebra::Rotation3<f64>) -> Self {
        let points = self
            .points
            .iter()
            .map(|c| ControlPoint::new(c.k, rotation * c.x))
            .collect();
        Self::new(points).expect("rotation keeps parameters finite")
    }

    /// Control points of `self` followed by those of `other`.
    pub fn union(&self, other: &MetaballModel) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        Self::new(points).expect("both models are valid")
    }

    /// Axis-aligned box guaranteed to contain the level set, or `None` when no
    /// weight is positive (the set is then empty).
    ///
    /// With `m` positive points, outside the ball of radius `sqrt(m k_i)`
    /// around each one every term is below `1/m`. Independently, beyond
    /// `rho + sqrt(sum k)` from the centroid of the positive points (`rho`
    /// their spread) the whole sum is below one. The result is the
    /// intersection of both bounds.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let positive: Vec<&ControlPoint> = self.points.iter().filter(|c| c.k > 0.0).collect();
        if positive.is_empty() {
            return None;
        }
        let m = positive.len() as f64;
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for c in &positive {
            let h = (m * c.k).sqrt();
            lo = lo.inf(&c.x.add_scalar(-h));
            hi = hi.sup(&c.x.add_scalar(h));
        }
        let center = positive.iter().fold(Vec3::zeros(), |a, c| a + c.x) / m;
        let spread = positive
            .iter()
            .map(|c| (c.x - center).norm())
            .fold(0.0, f64::max);
        let total: f64 = positive.iter().map(|c| c.k).sum();
        let reach = spread + total.sqrt();
        lo = lo.sup(&center.add_scalar(-reach));
        hi = hi.inf(&center.add_scalar(reach));
        Some((lo, hi))
    }
}

fn model_scale(points: &[ControlPoint]) -> f64 {
    let n = points.len() as f64;
    let center = points.iter().fold(Vec3::zeros(), |a, c| a + c.x) / n;
    let spread = points
        .iter()
        .map(|c| (c.x - center).norm())
        .fold(0.0, f64::max);
    let radius = points
        .iter()
        .map(|c| c.k.abs().sqrt())
        .fold(0.0, f64::max);
    let s = spread + radius;
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Samples the clamped field on a lattice of spacing `h` covering
/// `[lo, hi]` plus `margin` cells on every side. With an `anchor`, the
/// lattice contains that point.
pub(crate) fn sample_field(
    model: &MetaballModel,
    lo: Vec3,
    hi: Vec3,
    h: f64,
    margin: usize,
    anchor: Option<Vec3>,
) -> ScalarGrid {
    let lo = match anchor {
        Some(a) => a + h * ((lo - a) / h).map(f64::floor),
        None => lo,
    };
    let origin = lo.add_scalar(-(margin as f64) * h);
    let extent = hi - lo;
    let dims = [0, 1, 2].map(|a| (extent[a] / h).ceil() as usize + 1 + 2 * margin);
    let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = origin + h * Vec3::new(x as f64, y as f64, z as f64);
                values.push(model.evaluate_clamped(p));
            }
        }
    }
    ScalarGrid {
        dims,
        origin,
        spacing: h,
        values,
    }
}

/// Tight box of the lattice samples with `f >= 1`, grown by one cell.
fn inside_extent(grid: &ScalarGrid) -> Option<(Vec3, Vec3)> {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for (i, &v) in grid.values.iter().enumerate() {
        if v >= 1.0 {
            let p = grid.position(i);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
            any = true;
        }
    }
    any.then(|| (lo.add_scalar(-grid.spacing), hi.add_scalar(grid.spacing)))
}

/// Closed, outward-oriented triangulation of `f = 1`.
///
/// `resolution` is the number of cells along the longest edge of the level
/// set's bounding box. A first pass over the analytic bounding box locates
/// the set; the second pass meshes its tight box with a two-cell margin.
pub fn mesh_surface(model: &MetaballModel, resolution: usize) -> Result<TriangleMesh> {
    if resolution < 16 {
        return Err(Error::InvalidParameter(format!(
            "mesh resolution must be at least 16, got {resolution}"
        )));
    }
    let (lo, hi) = model.bounding_box().ok_or(Error::EmptySurface)?;
    let coarse_h = (hi - lo).max() / resolution as f64;
    if !(coarse_h > 0.0) {
        return Err(Error::EmptySurface);
    }
    let coarse = sample_field(model, lo, hi, coarse_h, 2, None);
    let (lo, hi) = inside_extent(&coarse).ok_or(Error::EmptySurface)?;
    let h = (hi - lo).max() / resolution as f64;
    let fine = sample_field(model, lo, hi, h, 2, None);
    let mesh = isosurface(&fine, 1.0);
    if mesh.triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(mesh)
}

/// Voxelization at `voxel_size` on a lattice through the first control
/// point, so translating the model translates the samples. The grid is
/// cropped to the occupied voxels plus a two-voxel margin.
pub fn voxelize(model: &MetaballModel, voxel_size: f64) -> Result<VoxelGrid> {
    if !(voxel_size > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "voxel size must be positive, got {voxel_size}"
        )));
    }
    let (lo, hi) = model.bounding_box().ok_or(Error::EmptySurface)?;
    let anchor = model.control_points()[0].x;
    let field = sample_field(model, lo, hi, voxel_size, 0, Some(anchor));
    let [nx, ny, nz] = field.dims;
    let mut min = [usize::MAX; 3];
    let mut max = [0usize; 3];
    for (i, &v) in field.values.iter().enumerate() {
        if v >= 1.0 {
            let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
            for a in 0..3 {
                min[a] = min[a].min(c[a]);
                max[a] = max[a].max(c[a]);
            }
        }
    }
    if min[0] == usize::MAX {
        return Err(Error::EmptySurface);
    }
    const MARGIN: usize = 2;
    let dims = [0, 1, 2].map(|a| max[a] - min[a] + 1 + 2 * MARGIN);
    let origin = field.origin
        + voxel_size
            * Vec3::new(
                min[0] as f64 - MARGIN as f64,
                min[1] as f64 - MARGIN as f64,
                min[2] as f64 - MARGIN as f64,
            );
    VoxelGrid::from_fn(dims, voxel_size, origin, |x, y, z| {
        let (sx, sy, sz) = (
            (x + min[0]).checked_sub(MARGIN),
            (y + min[1]).checked_sub(MARGIN),
            (z + min[2]).checked_sub(MARGIN),
        );
        match (sx, sy, sz) {
            (Some(sx), Some(sy), Some(sz)) if sx < nx && sy < ny && sz < nz => {
                field.values[sx + nx * (sy + ny * sz)] >= 1.0
            }
            _ => false,
        }
    })
}

/// Voxelization on the lattice of `template`; the model lives in a frame
/// where `physical = model_point + offset`.
pub fn voxelize_like(model: &MetaballModel, template: &VoxelGrid, offset: Vec3) -> VoxelGrid {
    let [nx, ny, nz] = template.dims();
    VoxelGrid::from_fn(
        template.dims(),
        template.voxel_size(),
        template.origin(),
        |x, y, z| model.evaluate_clamped(template.center(x, y, z) - offset) >= 1.0,
    )
    .unwrap_or_else(|_| unreachable!("template {nx}x{ny}x{nz} is a valid grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn one(k: f64, x: [f64; 3]) -> MetaballModel {
        MetaballModel::new(vec![ControlPoint::new(k, Vec3::from(x))]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(one(1.0, [0.0; 3]).evaluate(Vec3::new(1.0, 0.0, 0.0)).unwrap(), 1.0);
        let pair = MetaballModel::new(vec![
            ControlPoint::new(1.0, Vec3::new(1.0, 0.0, 0.0)),
            ControlPoint::new(1.0, Vec3::new(-1.0, 0.0, 0.0)),
        ])
        .unwrap();
        assert_eq!(pair.evaluate(Vec3::zeros()).unwrap(), 2.0);
        assert_eq!(one(2.0, [0.0; 3]).evaluate(Vec3::new(0.0, 2.0, 0.0)).unwrap(), 0.5);
    }

    #[test]
    fn evaluate_at_control_point_is_singular() {
        let m = one(1.0, [1.0, 2.0, 3.0]);
        assert!(matches!(
            m.evaluate(Vec3::new(1.0, 2.0, 3.0)),
            Err(Error::Singularity { index: 0, .. })
        ));
        assert!(m.evaluate_clamped(Vec3::new(1.0, 2.0, 3.0)) > 1e20);
    }

    #[test]
    fn contains_counts_the_boundary() {
        let m = one(4.0, [0.0; 3]);
        assert!(m.contains(Vec3::new(0.0, 0.0, 1.0)).unwrap());
        assert!(m.contains(Vec3::new(0.0, 0.0, 2.0)).unwrap());
        assert!(!m.contains(Vec3::new(0.0, 0.0, 3.0)).unwrap());
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(MetaballModel::new(vec![]).is_err());
        assert!(MetaballModel::new(vec![ControlPoint::new(f64::NAN, Vec3::zeros())]).is_err());
    }

    #[test]
    fn sphere_mesh_volume_and_area() {
        let mesh = mesh_surface(&one(1.0, [0.0; 3]), 64).unwrap();
        assert_eq!(mesh.boundary_edge_count(), 0);
        let (v, a) = mesh.volume_area();
        assert!((v - 4.0 * PI / 3.0).abs() / (4.0 * PI / 3.0) < 0.01, "V = {v}");
        assert!((a - 4.0 * PI).abs() / (4.0 * PI) < 0.02, "A = {a}");
        // Outward orientation gives positive signed volume.
        assert!(mesh.signed_volume() > 0.0);
    }

    #[test]
    fn mesh_rejects_low_resolution_and_empty_sets() {
        assert!(mesh_surface(&one(1.0, [0.0; 3]), 8).is_err());
        assert!(matches!(
            mesh_surface(&one(-1.0, [0.0; 3]), 32),
            Err(Error::EmptySurface)
        ));
        assert!(matches!(
            mesh_surface(&one(0.0, [0.0; 3]), 32),
            Err(Error::EmptySurface)
        ));
        // A coincident negative point cancels the positive one everywhere.
        let cancelled = MetaballModel::new(vec![
            ControlPoint::new(1.0, Vec3::zeros()),
            ControlPoint::new(-2.0, Vec3::zeros()),
        ])
        .unwrap();
        assert!(matches!(
            mesh_surface(&cancelled, 32),
            Err(Error::EmptySurface)
        ));
    }

    #[test]
    fn voxelized_ball_count() {
        let g = voxelize(&one(1.0, [0.0; 3]), 0.1).unwrap();
        let expected = (4.0 * PI / 3.0) / 0.001;
        let count = g.occupied_count() as f64;
        assert!((count - expected).abs() / expected < 0.02, "{count} vs {expected}");
    }

    #[test]
    fn voxelize_is_translation_invariant_in_count() {
        let m = MetaballModel::new(vec![
            ControlPoint::new(1.0, Vec3::zeros()),
            ControlPoint::new(0.5, Vec3::new(1.2, 0.3, 0.0)),
        ])
        .unwrap();
        let a = voxelize(&m, 0.1).unwrap().occupied_count();
        let b = voxelize(&m.translated(Vec3::new(3.25, -1.7, 0.4)), 0.1)
            .unwrap()
            .occupied_count();
        assert_eq!(a, b);
    }

    #[test]
    fn far_apart_balls_voxelize_additively() {
        // Offset is a whole number of voxels so both share one lattice; radii
        // avoid integer voxel counts, where many centers sit exactly on f = 1.
        let a = one(1.0937, [0.0; 3]);
        let b = one(0.7213, [50.0, 0.0, 0.0]);
        let sum = voxelize(&a, 0.1).unwrap().occupied_count()
            + voxelize(&b, 0.1).unwrap().occupied_count();
        let both = voxelize(&a.union(&b), 0.1).unwrap().occupied_count();
        // The far ball adds ~4e-4 to f near the near one and vice versa.
        let rel = (both as f64 - sum as f64).abs() / sum as f64;
        assert!(rel < 2e-3, "{both} vs {sum}");
    }

    #[test]
    fn bounding_box_contains_level_set_of_clusters() {
        let m = MetaballModel::new(
            (0..10)
                .map(|i| ControlPoint::new(0.05, Vec3::new(i as f64 * 0.1, 0.0, 0.0)))
                .collect(),
        )
        .unwrap();
        let (lo, hi) = m.bounding_box().unwrap();
        let g = voxelize(&m, 0.02).unwrap();
        for i in 0..g.len() {
            if g.occupancy()[i] != 0 {
                let [x, y, z] = g.coords(i);
                let p = g.center(x, y, z);
                assert!((0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a]));
            }
        }
    }
}
