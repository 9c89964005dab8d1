//! Principal outer contour by greedy maximum inscribed spheres.

use crate::voxel::{carve_sphere_in_place, squared_distance_transform, PointHull, VoxelGrid};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InscribedSphere {
    /// Physical units.
    pub radius: f64,
    /// Physical units, in the hull-centered frame.
    pub center: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereClustering {
    /// Discovery order; radii are non-increasing.
    pub spheres: Vec<InscribedSphere>,
    /// The grid was fully carved before the requested count was reached.
    pub exhausted: bool,
    /// Voxel indices carved by each sphere, disjoint across spheres.
    pub supports: Vec<Vec<usize>>,
}

/// Centroid of the surface voxel centers; the origin of the hull frame.
pub fn hull_frame_origin(grid: &VoxelGrid) -> Option<Vec3> {
    let [nx, ny, nz] = grid.dims();
    let mut points = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if grid.is_surface(x, y, z) {
                    points.push(grid.center(x, y, z));
                }
            }
        }
    }
    PointHull::from_points(points).ok().map(|h| h.centroid())
}

/// `n` rounds of: exact distance transform of the working grid, pick the
/// deepest voxel (lowest linear index on ties), record it, carve it out.
pub fn sphere_clustering(grid: &VoxelGrid, n: usize) -> Result<SphereClustering> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sphere".into()));
    }
    let occupied = grid.occupied_count();
    if occupied < n {
        return Err(Error::TooFewPoints {
            needed: n,
            found: occupied,
        });
    }
    let frame = hull_frame_origin(grid).unwrap_or_else(Vec3::zeros);
    let mut work = grid.clone();
    let mut spheres = Vec::with_capacity(n);
    let mut supports = Vec::with_capacity(n);
    let mut exhausted = false;
    for _ in 0..n {
        let sq = squared_distance_transform(&work);
        let (best, &max_sq) = sq
            .iter()
            .enumerate()
            .fold((0, &0.0), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
        if max_sq == 0.0 {
            exhausted = true;
            break;
        }
        let [x, y, z] = work.coords(best);
        let voxel_center = Vec3::new(x as f64, y as f64, z as f64);
        let radius_vox = max_sq.sqrt();
        let before: Vec<u8> = work.occupancy().to_vec();
        carve_sphere_in_place(&mut work, voxel_center, radius_vox);
        supports.push(
            before
                .iter()
                .zip(work.occupancy())
                .enumerate()
                .filter(|(_, (&a, &b))| a != 0 && b == 0)
                .map(|(i, _)| i)
                .collect(),
        );
        spheres.push(InscribedSphere {
            radius: radius_vox * grid.voxel_size(),
            center: grid.center(x, y, z) - frame,
        });
    }
    Ok(SphereClustering {
        spheres,
        exhausted,
        supports,
    })
}
