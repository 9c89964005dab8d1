//! Deterministic synthetic particles: voxel grids with known geometry, and
//! a random five-ball model set for training.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::metaball::{ControlPoint, MetaballModel};
use crate::rng;
use crate::voxel::VoxelGrid;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FixtureKind {
    Ball,
    TwoBalls,
    Ellipsoid,
    Angular,
    Concave,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 5] = [
        FixtureKind::Ball,
        FixtureKind::TwoBalls,
        FixtureKind::Ellipsoid,
        FixtureKind::Angular,
        FixtureKind::Concave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::Ball => "ball",
            FixtureKind::TwoBalls => "two_balls",
            FixtureKind::Ellipsoid => "ellipsoid",
            FixtureKind::Angular => "angular",
            FixtureKind::Concave => "concave",
        }
    }
}

impl std::str::FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown fixture kind {s:?}")))
    }
}

/// Size and shape of a fixture. Lengths are in voxels, the shape
/// parameters relative to `radius`; the grid is centered on the physical
/// origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    pub radius: f64,
    pub voxel_size: f64,
    /// Second ball (two balls) or bite (concave) radius.
    pub ratio: f64,
    /// Distance from the main center to the second ball or bite center.
    pub offset: f64,
    /// Edge rounding of the angular polytope.
    pub rounding: f64,
    pub seed: u64,
    /// Grid size; by default the shape's extent plus three voxels a side.
    pub dims: Option<[usize; 3]>,
}

impl FixtureSpec {
    /// Default proportions for `kind`.
    pub fn new(kind: FixtureKind, radius: f64) -> Self {
        let (ratio, offset) = match kind {
            FixtureKind::Concave => (0.5, 1.25),
            _ => (0.7, 0.8),
        };
        Self { kind, radius, voxel_size: 1.0, ratio, offset, rounding: 0.2, seed: 0, dims: None }
    }
}

/// Ground-truth ball of a fixture, in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub grid: VoxelGrid,
    /// Balls whose union (ball, two balls) or difference (concave: first
    /// minus second) is the particle; empty for the other kinds.
    pub balls: Vec<Ball>,
}

/// Half-space `n·p <= d`.
#[derive(Debug, Clone, Copy)]
struct Plane {
    n: Vec3,
    d: f64,
}

pub fn build_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    let r = spec.radius;
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("fixture radius {r} must be at least one voxel")));
    }
    if !(spec.voxel_size > 0.0) || !spec.voxel_size.is_finite() {
        return Err(Error::InvalidParameter("voxel size must be positive".into()));
    }
    // Everything below is in voxel units around the grid center.
    let (half, balls, inside): ([f64; 3], Vec<Ball>, Box<dyn Fn(Vec3) -> bool>) = match spec.kind {
        FixtureKind::Ball => {
            let b = Ball { center: Vec3::zeros(), radius: r };
            ([r; 3], vec![b], Box::new(move |p: Vec3| p.norm_squared() <= r * r))
        }
        FixtureKind::TwoBalls => {
            let r2 = spec.ratio * r;
            let sep = spec.offset * r;
            if !(r2 > 0.0) || !(sep >= 0.0) {
                return Err(Error::InvalidParameter("second ball needs positive radius and offset".into()));
            }
            // Union centered on its bounding box along x.
            let (lo, hi) = ((-r).min(sep - r2), r.max(sep + r2));
            let shift = 0.5 * (lo + hi);
            let a = Ball { center: Vec3::new(-shift, 0.0, 0.0), radius: r };
            let b = Ball { center: Vec3::new(sep - shift, 0.0, 0.0), radius: r2 };
            let half = [0.5 * (hi - lo), r.max(r2), r.max(r2)];
            let inside = move |p: Vec3| {
                (p - a.center).norm_squared() <= a.radius * a.radius || (p - b.center).norm_squared() <= b.radius * b.radius
            };
            (half, vec![a, b], Box::new(inside))
        }
        FixtureKind::Ellipsoid => {
            let axes = Vec3::new(r, 0.5 * r, 0.5 * r);
            let inside = move |p: Vec3| p.component_div(&axes).norm_squared() <= 1.0;
            ([axes.x, axes.y, axes.z], Vec::new(), Box::new(inside))
        }
        FixtureKind::Angular => {
            let planes = polytope_planes(spec.seed, r);
            let rho = spec.rounding * r;
            if !(0.0..0.75).contains(&spec.rounding) {
                return Err(Error::InvalidParameter("rounding must lie in [0, 0.75)".into()));
            }
            // Distance-like measure to the planes pulled in by rho; its rho
            // sublevel set is the polytope with edges and corners rounded.
            let inside = move |p: Vec3| {
                let s: f64 = planes.iter().map(|pl| (pl.n.dot(&p) - pl.d + rho).max(0.0).powi(2)).sum();
                s <= rho * rho
            };
            ([r; 3], Vec::new(), Box::new(inside))
        }
        FixtureKind::Concave => {
            let outer = Ball { center: Vec3::zeros(), radius: r };
            let bite = Ball { center: Vec3::new(spec.offset * r, 0.0, 0.0), radius: spec.ratio * r };
            let inside = move |p: Vec3| {
                p.norm_squared() <= r * r && (p - bite.center).norm_squared() > bite.radius * bite.radius
            };
            ([r; 3], vec![outer, bite], Box::new(inside))
        }
    };

    const MARGIN: usize = 3;
    let needed = half.map(|h| 2 * h.ceil() as usize + 1);
    let dims = match spec.dims {
        None => half.map(|h| 2 * (h.ceil() as usize + MARGIN) + 1),
        Some(d) if d.iter().zip(&needed).all(|(a, b)| a >= b) => d,
        Some(d) => {
            return Err(Error::InvalidParameter(format!("grid {d:?} cannot hold the shape, need at least {needed:?}")))
        }
    };
    let h = spec.voxel_size;
    let center = Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64).add_scalar(-1.0) * 0.5;
    let origin = -center * h;
    let grid = VoxelGrid::from_fn(dims, h, origin, |x, y, z| {
        inside(Vec3::new(x as f64, y as f64, z as f64) - center)
    })?;
    let balls = balls
        .into_iter()
        .map(|b| Ball { center: b.center * h, radius: b.radius * h })
        .collect();
    Ok(Fixture { grid, balls })
}

/// Bounding planes of a random convex polytope with inradius about `r`:
/// jittered Fibonacci normals at distances in `[0.75 r, r]`.
fn polytope_planes(seed: u64, r: f64) -> Vec<Plane> {
    const FACES: usize = 14;
    let mut rng = rng::stream(seed, rng::FIXTURE);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..FACES)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / FACES as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let jitter = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
            let n = (Vec3::new(rho * phi.cos(), rho * phi.sin(), z) + jitter).normalize();
            Plane { n, d: r * rng.random_range(0.75..1.0) }
        })
        .collect()
}

/// `count` random models of `points` control points each, centered on the
/// origin: weights uniform in `[0.5, 1.5]`, positions normal with standard
/// deviation 0.6.
pub fn synthetic_models(count: usize, points: usize, seed: u64) -> Result<Vec<MetaballModel>> {
    if points == 0 {
        return Err(Error::InvalidParameter("models need at least one control point".into()));
    }
    let mut rng = rng::stream(seed, rng::FIXTURE);
    let normal = Normal::new(0.0, 0.6).expect("valid normal");
    (0..count)
        .map(|_| {
            let mut pts: Vec<ControlPoint> = (0..points)
                .map(|_| {
                    let k = rng.random_range(0.5..1.5);
                    let x = Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
                    ControlPoint::new(k, x)
                })
                .collect();
            let c = pts.iter().map(|p| p.x).sum::<Vec3>() / points as f64;
            pts.iter_mut().for_each(|p| p.x -= c);
            MetaballModel::new(pts)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_count_matches_brute_force() {
        for dims in [None, Some([16; 3])] {
            let f = build_fixture(&FixtureSpec { dims, ..FixtureSpec::new(FixtureKind::Ball, 5.0) }).unwrap();
            let g = &f.grid;
            let [nx, ny, nz] = g.dims();
            let c = Vec3::new(nx as f64 - 1.0, ny as f64 - 1.0, nz as f64 - 1.0) / 2.0;
            let mut brute = 0;
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        let d = Vec3::new(x as f64, y as f64, z as f64) - c;
                        if d.norm() <= 5.0 {
                            brute += 1;
                        }
                    }
                }
            }
            assert_eq!(g.occupied_count(), brute);
        }
        let small = FixtureSpec { dims: Some([10; 3]), ..FixtureSpec::new(FixtureKind::Ball, 5.0) };
        assert!(build_fixture(&small).is_err());
    }

    #[test]
    fn concave_has_background_inside_outer_ball() {
        let f = build_fixture(&FixtureSpec::new(FixtureKind::Concave, 10.0)).unwrap();
        let g = &f.grid;
        let outer = f.balls[0];
        let hole = (0..g.len()).any(|i| {
            let [x, y, z] = g.coords(i);
            !g.get(x, y, z) && (g.center(x, y, z) - outer.center).norm() < outer.radius - 1.0
        });
        assert!(hole);
    }

    #[test]
    fn fixtures_are_deterministic_and_nonempty() {
        for kind in FixtureKind::ALL {
            let spec = FixtureSpec { voxel_size: 0.5, seed: 3, ..FixtureSpec::new(kind, 8.0) };
            let a = build_fixture(&spec).unwrap();
            let b = build_fixture(&spec).unwrap();
            assert_eq!(a.grid, b.grid);
            assert!(a.grid.occupied_count() > 100, "{}", kind.name());
            assert_eq!(kind.name().parse::<FixtureKind>().unwrap(), kind);
        }
    }

    #[test]
    fn synthetic_models_are_centered() {
        let models = synthetic_models(4, 5, 1).unwrap();
        assert_eq!(models.len(), 4);
        for m in &models {
            let c = m.control_points().iter().map(|p| p.x).sum::<Vec3>() / 5.0;
            assert!(c.norm() < 1e-12);
        }
        assert_ne!(models[0], models[1]);
    }
}
