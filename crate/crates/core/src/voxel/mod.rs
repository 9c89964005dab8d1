//! Binary voxel masks and the operations the fitting pipeline needs on them.
//!
//! Voxel `(x, y, z)` is stored at linear index `x + nx * (y + ny * z)`
//! (x fastest). Physical position of a voxel center is
//! `origin + voxel_size * (x, y, z)`.

mod edt;
mod io;

pub use edt::{distance_transform, squared_distance_transform, DistanceField};
pub use io::{load_voxel_grid, save_voxel_grid, GridFormat};

use crate::{Error, Result, Vec3};

/// Binary occupancy grid with isotropic voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    voxel_size: f64,
    origin: Vec3,
    occupancy: Vec<u8>,
}

impl VoxelGrid {
    /// Empty grid.
    pub fn new(dims: [usize; 3], voxel_size: f64, origin: Vec3) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive, got {dims:?}"
            )));
        }
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "voxel size must be positive, got {voxel_size}"
            )));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("origin must be finite".into()));
        }
        let len = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::InvalidParameter(format!("grid {dims:?} is too large")))?;
        Ok(Self {
            dims,
            voxel_size,
            origin,
            occupancy: vec![0; len],
        })
    }

    /// Grid whose occupancy is taken from `occupancy`; any non-zero byte
    /// counts as occupied.
    pub fn from_occupancy(
        dims: [usize; 3],
        voxel_size: f64,
        origin: Vec3,
        occupancy: Vec<u8>,
    ) -> Result<Self> {
        let mut grid = Self::new(dims, voxel_size, origin)?;
        if occupancy.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                found: occupancy.len(),
            });
        }
        grid.occupancy = occupancy.into_iter().map(|v| u8::from(v != 0)).collect();
        Ok(grid)
    }

    /// Grid occupied wherever `inside(x, y, z)` holds.
    pub fn from_fn(
        dims: [usize; 3],
        voxel_size: f64,
        origin: Vec3,
        mut inside: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let mut grid = Self::new(dims, voxel_size, origin)?;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    if inside(x, y, z) {
                        let i = grid.index(x, y, z);
                        grid.occupancy[i] = 1;
                    }
                }
            }
        }
        Ok(grid)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn occupancy(&self) -> &[u8] {
        &self.occupancy
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[self.index(x, y, z)] != 0
    }

    /// Occupancy at signed coordinates; out of bounds reads as empty.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64, z: i64) -> bool {
        if x < 0 || y < 0 || z < 0 {
            return false;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        x < self.dims[0] && y < self.dims[1] && z < self.dims[2] && self.get(x, y, z)
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, occupied: bool) {
        let i = self.index(x, y, z);
        self.occupancy[i] = u8::from(occupied);
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v != 0).count()
    }

    /// Physical position of a voxel center.
    pub fn center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin + self.voxel_size * Vec3::new(x as f64, y as f64, z as f64)
    }

    /// Physical position of a point given in (fractional) voxel coordinates.
    pub fn to_physical(&self, voxel: Vec3) -> Vec3 {
        self.origin + self.voxel_size * voxel
    }

    /// Voxel coordinates of a physical point.
    pub fn to_voxel(&self, physical: Vec3) -> Vec3 {
        (physical - self.origin) / self.voxel_size
    }

    /// Voxels in `self` and `other` (same lattice) that are both occupied,
    /// divided by those occupied in either.
    pub fn iou(&self, other: &VoxelGrid) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::InvalidParameter(format!(
                "cannot compare grids of dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.occupancy.iter().zip(&other.occupancy) {
            inter += usize::from(a != 0 && b != 0);
            union += usize::from(a != 0 || b != 0);
        }
        Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
    }

    /// Whether an occupied voxel touches the background through one of its
    /// six faces (the grid border counts as background).
    pub fn is_surface(&self, x: usize, y: usize, z: usize) -> bool {
        if !self.get(x, y, z) {
            return false;
        }
        let (x, y, z) = (x as i64, y as i64, z as i64);
        FACE_NEIGHBORS
            .iter()
            .any(|[dx, dy, dz]| !self.get_signed(x + dx, y + dy, z + dz))
    }
}

const FACE_NEIGHBORS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Surface point cloud translated so that its centroid is the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PointHull {
    points: Vec<Vec3>,
    /// Translation that was removed: `physical = point + centroid`.
    centroid: Vec3,
}

impl PointHull {
    /// Centers `points` on their centroid.
    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooFewPoints { needed: 1, found: 0 });
        }
        let mut points = points;
        let mut centroid = Vec3::zeros();
        // Second pass removes the rounding residue of the first.
        for _ in 0..2 {
            let mean = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64;
            points.iter_mut().for_each(|p| *p -= mean);
            centroid += mean;
        }
        Ok(Self { points, centroid })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        self.centroid
    }

    /// Largest distance of a hull point from the origin.
    pub fn bounding_radius(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| p * factor).collect(),
            centroid: self.centroid * factor,
        }
    }
}

/// Centers of the occupied surface voxels, in physical units, centered on
/// their centroid.
pub fn extract_point_hull(grid: &VoxelGrid) -> Result<PointHull> {
    let occupied = grid.occupied_count();
    if occupied < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            found: occupied,
        });
    }
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
    if points.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            found: points.len(),
        });
    }
    PointHull::from_points(points)
}

/// Copy of `grid` with every voxel whose center lies within `radius` of
/// `center` (both in voxel units) cleared.
pub fn carve_sphere(grid: &VoxelGrid, center: Vec3, radius: f64) -> VoxelGrid {
    let mut out = grid.clone();
    carve_sphere_in_place(&mut out, center, radius);
    out
}

/// In-place variant of [`carve_sphere`]; returns the number of voxels cleared.
pub fn carve_sphere_in_place(grid: &mut VoxelGrid, center: Vec3, radius: f64) -> usize {
    if !(radius > 0.0) {
        return 0;
    }
    let r2 = radius * radius;
    let mut cleared = 0;
    let range = |c: f64, n: usize| -> Option<(usize, usize)> {
        let lo = (c - radius).ceil().max(0.0);
        let hi = (c + radius).floor().min(n as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    };
    let [nx, ny, nz] = grid.dims();
    let (Some((x0, x1)), Some((y0, y1)), Some((z0, z1))) =
        (range(center.x, nx), range(center.y, ny), range(center.z, nz))
    else {
        return 0;
    };
    for z in z0..=z1 {
        let dz = z as f64 - center.z;
        for y in y0..=y1 {
            let dy = y as f64 - center.y;
            for x in x0..=x1 {
                let dx = x as f64 - center.x;
                if dx * dx + dy * dy + dz * dz <= r2 {
                    let i = grid.index(x, y, z);
                    cleared += usize::from(grid.occupancy[i] != 0);
                    grid.occupancy[i] = 0;
                }
            }
        }
    }
    cleared
}
