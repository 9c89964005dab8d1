//! Piecewise surface loss over a point hull and its exact gradient.
//!
//! Per hull point with field value `f`:
//!
//! | range        | value                   | slope d/df             |
//! |--------------|-------------------------|------------------------|
//! | `f >= 2`     | `(f-1)^2`               | `2(f-1)` (1 at `f=2`)  |
//! | `1 <= f < 2` | `f - 1`                 | `1`                    |
//! | `0 < f < 1`  | `(f-1)^2 + 1/f - 1`     | `2(f-1) - 1/f^2`       |
//!
//! The branches agree in value at `f = 1` and `f = 2`; both boundaries take
//! the middle slope.

use crate::metaball::{ControlPoint, MetaballModel, SINGULARITY_GUARD};
use crate::voxel::PointHull;
use crate::{Error, Result, Vec3};

#[inline]
pub fn branch_value(f: f64) -> f64 {
    if f >= 2.0 {
        (f - 1.0) * (f - 1.0)
    } else if f >= 1.0 {
        f - 1.0
    } else {
        (f - 1.0) * (f - 1.0) + 1.0 / f - 1.0
    }
}

#[inline]
pub fn branch_slope(f: f64) -> f64 {
    if f > 2.0 {
        2.0 * (f - 1.0)
    } else if f >= 1.0 {
        1.0
    } else {
        2.0 * (f - 1.0) - 1.0 / (f * f)
    }
}

pub fn metaball_loss(model: &MetaballModel, hull: &PointHull) -> Result<f64> {
    let mut total = 0.0;
    for p in hull.points() {
        let f = model.evaluate(*p)?;
        total += checked_value(f)?;
    }
    Ok(total)
}

fn checked_value(f: f64) -> Result<f64> {
    if f > 0.0 && f.is_finite() {
        Ok(branch_value(f))
    } else {
        Err(Error::NonFinite(format!(
            "field value {f} at a hull point is outside (0, inf)"
        )))
    }
}

/// Gradient with respect to the flat parameters `[k_0, x_0, y_0, z_0, k_1, ...]`.
pub fn loss_gradient(model: &MetaballModel, hull: &PointHull) -> Result<Vec<f64>> {
    let mut ws = LossWorkspace::new(model.len(), hull.len());
    let params = flatten(model.control_points());
    ws.evaluate(&params, hull.points(), SINGULARITY_GUARD * model.scale())?;
    Ok(ws.gradient)
}

pub(crate) fn flatten(points: &[ControlPoint]) -> Vec<f64> {
    points
        .iter()
        .flat_map(|c| [c.k, c.x.x, c.x.y, c.x.z])
        .collect()
}

pub(crate) fn unflatten(params: &[f64]) -> Result<MetaballModel> {
    MetaballModel::new(
        params
            .chunks_exact(4)
            .map(|c| ControlPoint::new(c[0], Vec3::new(c[1], c[2], c[3])))
            .collect(),
    )
}

/// Reusable buffers for repeated loss/gradient evaluation.
pub(crate) struct LossWorkspace {
    inv_r2: Vec<f64>,
    pub gradient: Vec<f64>,
}

impl LossWorkspace {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            inv_r2: vec![0.0; n * m],
            gradient: vec![0.0; 4 * n],
        }
    }

    /// Loss at `params`; fills `self.gradient`.
    pub fn evaluate(&mut self, params: &[f64], hull: &[Vec3], guard: f64) -> Result<f64> {
        let n = params.len() / 4;
        let m = hull.len();
        debug_assert_eq!(self.inv_r2.len(), n * m);
        let g2 = guard * guard;
        self.gradient.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for (j, h) in hull.iter().enumerate() {
            let row = &mut self.inv_r2[j * n..(j + 1) * n];
            let mut f = 0.0;
            for (i, inv) in row.iter_mut().enumerate() {
                let c = &params[4 * i..4 * i + 4];
                let d = Vec3::new(h.x - c[1], h.y - c[2], h.z - c[3]);
                let r2 = d.norm_squared();
                if r2 < g2 {
                    return Err(Error::Singularity {
                        index: i,
                        distance: r2.sqrt(),
                    });
                }
                *inv = 1.0 / r2;
                f += c[0] * *inv;
            }
            total += checked_value(f)?;
            let slope = branch_slope(f);
            for (i, &inv) in row.iter().enumerate() {
                let c = &params[4 * i..4 * i + 4];
                let g = &mut self.gradient[4 * i..4 * i + 4];
                g[0] += slope * inv;
                // d(1/r^2)/dx_i = 2 (h - x_i) / r^4
                let w = slope * c[0] * 2.0 * inv * inv;
                g[1] += w * (h.x - c[1]);
                g[2] += w * (h.y - c[2]);
                g[3] += w * (h.z - c[3]);
            }
        }
        if !total.is_finite() || self.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("loss or gradient".into()));
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn single(k: f64) -> MetaballModel {
        MetaballModel::new(vec![ControlPoint::new(k, Vec3::zeros())]).unwrap()
    }

    fn hull_of(points: Vec<Vec3>) -> PointHull {
        // Loss tests need raw positions, so undo the centering.
        let h = PointHull::from_points(points.clone()).unwrap();
        let c = h.centroid();
        assert!(c.norm() < 1e-12, "test hull must already be centered");
        h
    }

    #[test]
    fn worked_examples() {
        let on_surface = hull_of(vec![
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(-1.0, 3f64.sqrt(), 0.0),
            Vec3::new(-1.0, -(3f64.sqrt()), 0.0),
        ]);
        assert!(metaball_loss(&single(4.0), &on_surface).unwrap().abs() < 1e-15);

        let inner = PointHull::from_points(vec![Vec3::new(2f64.sqrt(), 0.0, 0.0)]).unwrap();
        let m = single(4.0).translated(-inner.centroid());
        assert!((metaball_loss(&m, &inner).unwrap() - 1.0).abs() < 1e-12);

        let outer = PointHull::from_points(vec![Vec3::new(8f64.sqrt(), 0.0, 0.0)]).unwrap();
        let m = single(4.0).translated(-outer.centroid());
        assert!((metaball_loss(&m, &outer).unwrap() - 1.25).abs() < 1e-12);
    }

    #[test]
    fn branches_meet_at_the_boundaries() {
        assert_eq!(branch_value(1.0), 0.0);
        let below1 = 1.0 - 1e-12;
        assert!((branch_value(below1) - 0.0).abs() < 1e-11);
        assert_eq!(branch_value(2.0), 1.0);
        let below2 = 2.0f64.next_down();
        assert!((branch_value(below2) - 1.0).abs() <= 4.0 * f64::EPSILON);
        assert_eq!(branch_slope(1.0), 1.0);
        assert_eq!(branch_slope(2.0), 1.0);
    }

    #[test]
    fn zero_loss_gradient_is_inverse_square_sum() {
        let pts = vec![
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(-1.0, 3f64.sqrt(), 0.0),
            Vec3::new(-1.0, -(3f64.sqrt()), 0.0),
        ];
        let hull = hull_of(pts.clone());
        let g = loss_gradient(&single(4.0), &hull).unwrap();
        let expected: f64 = pts.iter().map(|p| 1.0 / p.norm_squared()).sum();
        assert!((g[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn symmetric_hull_has_no_position_gradient() {
        let mut pts = Vec::new();
        for s in [-1.0, 1.0] {
            pts.push(Vec3::new(1.5 * s, 0.0, 0.0));
            pts.push(Vec3::new(0.0, 1.5 * s, 0.0));
            pts.push(Vec3::new(0.0, 0.0, 1.5 * s));
        }
        let hull = hull_of(pts);
        let g = loss_gradient(&single(4.0), &hull).unwrap();
        assert!(g[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn non_positive_field_is_rejected() {
        let m = MetaballModel::new(vec![ControlPoint::new(-1.0, Vec3::zeros())]).unwrap();
        let hull = hull_of(vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)]);
        assert!(matches!(metaball_loss(&m, &hull), Err(Error::NonFinite(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let model = unflatten(
            &(0..5)
                .flat_map(|_| {
                    [
                        rng.random_range(0.2..0.6),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    ]
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let hull = PointHull::from_points(
            (0..50)
                .map(|_| {
                    let d = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    d.normalize() * rng.random_range(0.8..2.5)
                })
                .collect(),
        )
        .unwrap();
        let g = loss_gradient(&model, &hull).unwrap();
        let base = flatten(model.control_points());
        for p in 0..base.len() {
            let h = 1e-6 * base[p].abs().max(1e-2);
            let at = |delta: f64| {
                let mut q = base.clone();
                q[p] += delta;
                metaball_loss(&unflatten(&q).unwrap(), &hull).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let rel = (fd - g[p]).abs() / g[p].abs().max(1e-8);
            assert!(rel < 1e-5, "param {p}: analytic {} vs fd {fd}", g[p]);
        }
    }
}
