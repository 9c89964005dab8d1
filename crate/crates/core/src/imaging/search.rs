//! Gradient search: Adam for the first part of the budget, then plain
//! full-batch gradient descent, keeping the best model seen.

use super::clustering::{sphere_clustering, InscribedSphere};
use super::loss::{flatten, unflatten, LossWorkspace};
use crate::metaball::{ControlPoint, MetaballModel, SINGULARITY_GUARD};
use crate::optim::{sgd_step, Adam};
use crate::voxel::{extract_point_hull, PointHull, VoxelGrid};
use crate::{Error, Result, Vec3};

/// Lower bound applied to every weight after each update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KFloor {
    /// Multiple of the squared hull bounding radius.
    Relative(f64),
    Absolute(f64),
}

impl KFloor {
    pub fn resolve(self, hull_radius: f64) -> f64 {
        match self {
            KFloor::Relative(r) => r * hull_radius * hull_radius,
            KFloor::Absolute(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GSConfig {
    pub generations: usize,
    pub learning_rate: f64,
    /// Fraction of generations run with Adam before switching to descent.
    pub adam_fraction: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub k_floor: KFloor,
    pub seed: u64,
}

impl Default for GSConfig {
    fn default() -> Self {
        Self {
            generations: 2000,
            learning_rate: 0.001,
            adam_fraction: 0.8,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            k_floor: KFloor::Relative(1e-8),
            seed: 0,
        }
    }
}

impl GSConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.generations == 0 {
            return bad("generations must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.adam_fraction) {
            return bad(format!("adam fraction must lie in [0, 1], got {}", self.adam_fraction));
        }
        let (b1, b2) = self.adam_betas;
        if !(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0) {
            return bad(format!("adam betas must lie in (0, 1), got {:?}", self.adam_betas));
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam eps must be positive, got {}", self.adam_eps));
        }
        Ok(())
    }

    /// Generations run with Adam.
    pub fn adam_generations(&self) -> usize {
        (self.adam_fraction * self.generations as f64).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Loss after each generation (shorter than the budget on divergence).
    pub loss_history: Vec<f64>,
    /// Best model seen, in the hull-centered frame.
    pub model: MetaballModel,
    pub generations: usize,
    pub n: usize,
    pub seed: u64,
    /// A step produced a non-finite loss or gradient; `model` is the best
    /// finite one before that.
    pub diverged: bool,
    /// Sphere clustering ran out of voxels before reaching `n`.
    pub exhausted: bool,
    /// `physical = model frame + frame_offset`.
    pub frame_offset: Vec3,
}

pub fn gradient_search(
    initial: &MetaballModel,
    hull: &PointHull,
    config: &GSConfig,
) -> Result<FitReport> {
    config.validate()?;
    if hull.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            found: hull.len(),
        });
    }
    // Work in units of the hull radius: the loss is invariant under the
    // geometric scaling, and fixed-size optimizer steps become meaningful.
    let radius = hull.bounding_radius();
    if !(radius > 0.0) {
        return Err(Error::Degenerate("hull has zero extent".into()));
    }
    let to_unit = 1.0 / radius;
    let unit_hull: Vec<Vec3> = hull.points().iter().map(|p| p * to_unit).collect();
    let floor = config.k_floor.resolve(radius) * to_unit * to_unit;
    let guard = SINGULARITY_GUARD * initial.scale() * to_unit;

    let mut params = flatten(initial.scaled(to_unit).control_points());
    let n = initial.len();
    let m = unit_hull.len() as f64;
    let mut ws = LossWorkspace::new(n, unit_hull.len());

    let initial_loss = ws.evaluate(&params, &unit_hull, guard)?;
    let mut best = (initial_loss, params.clone());
    let mut history = Vec::with_capacity(config.generations);
    let mut adam = Adam::new(
        params.len(),
        config.learning_rate,
        config.adam_betas.0,
        config.adam_betas.1,
        config.adam_eps,
    );
    let adam_gens = config.adam_generations();
    let mut diverged = false;
    let mut grad = ws.gradient.clone();

    for generation in 0..config.generations {
        if generation < adam_gens {
            adam.update(&mut params, &grad);
        } else {
            // Descend the per-point mean so the step does not grow with the hull size.
            grad.iter_mut().for_each(|g| *g /= m);
            sgd_step(&mut params, &grad, config.learning_rate);
        }
        for k in params.iter_mut().step_by(4) {
            *k = k.max(floor);
        }
        match ws.evaluate(&params, &unit_hull, guard) {
            Ok(loss) => {
                history.push(loss);
                if loss < best.0 {
                    best = (loss, params.clone());
                }
                grad.copy_from_slice(&ws.gradient);
            }
            Err(e) if e.is_numeric() => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let model = unflatten(&best.1)?.scaled(radius);
    Ok(FitReport {
        initial_loss,
        final_loss: best.0,
        loss_history: history,
        model,
        generations: config.generations,
        n,
        seed: config.seed,
        diverged,
        exhausted: false,
        frame_offset: hull.centroid(),
    })
}

/// Inscribed spheres as control points with `k = r^2`.
pub fn spheres_to_model(spheres: &[InscribedSphere]) -> Result<MetaballModel> {
    MetaballModel::new(
        spheres
            .iter()
            .map(|s| ControlPoint::new(s.radius * s.radius, s.center))
            .collect(),
    )
}

/// Full characterization of one voxel mask: surface hull, sphere clustering
/// for the initial model, gradient search for the refinement.
pub fn metaball_image(grid: &VoxelGrid, n: usize, config: &GSConfig) -> Result<FitReport> {
    config.validate()?;
    let hull = extract_point_hull(grid)?;
    let clustering = sphere_clustering(grid, n)?;
    let initial = spheres_to_model(&clustering.spheres)?;
    let mut report = gradient_search(&initial, &hull, config)?;
    report.exhausted = clustering.exhausted;
    Ok(report)
}
