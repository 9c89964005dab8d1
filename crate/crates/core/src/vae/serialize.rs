//! Flat-vector packing of metaball models and training-set augmentation.

use nalgebra::{Quaternion, UnitQuaternion};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::metaball::{ControlPoint, MetaballModel};
use crate::rng;
use crate::{Error, Result, Vec3};

/// Normalization between physical models and network vectors. Positions
/// are divided by `coordinate_scale` and weights by `k_scale`, its square,
/// so that the scaling law of the field keeps shapes intact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaler {
    pub coordinate_scale: f64,
    pub k_scale: f64,
}

impl Scaler {
    pub fn new(coordinate_scale: f64) -> Result<Self> {
        if !(coordinate_scale > 0.0) || !coordinate_scale.is_finite() {
            return Err(Error::InvalidParameter(format!("scale {coordinate_scale} must be positive")));
        }
        Ok(Self { coordinate_scale, k_scale: coordinate_scale * coordinate_scale })
    }

    /// Maps the dataset bounding radius to `target_radius`.
    pub fn fit(models: &[MetaballModel], target_radius: f64) -> Result<Self> {
        if !(target_radius > 0.0) || !target_radius.is_finite() {
            return Err(Error::InvalidParameter("target radius must be positive".into()));
        }
        let radius = dataset_radius(models);
        if !(radius > 0.0) {
            return Err(Error::Degenerate("dataset has zero extent".into()));
        }
        Self::new(radius / target_radius)
    }
}

/// Radius of the origin-centered ball holding every control sphere of every
/// model.
pub fn dataset_radius(models: &[MetaballModel]) -> f64 {
    models
        .iter()
        .flat_map(|m| m.control_points())
        .map(|c| c.x.norm() + c.k.max(0.0).sqrt())
        .fold(0.0, f64::max)
}

/// `[k, x, y, z]` per control point, scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct SerializedParticle {
    pub values: Vec<f64>,
}

impl SerializedParticle {
    pub fn n(&self) -> usize {
        self.values.len() / 4
    }
}

pub fn serialize(model: &MetaballModel, scaler: &Scaler, n: usize) -> Result<SerializedParticle> {
    if model.len() != n {
        return Err(Error::ShapeMismatch { expected: n, found: model.len() });
    }
    let cs = scaler.coordinate_scale;
    let values = model
        .control_points()
        .iter()
        .flat_map(|c| [c.k / scaler.k_scale, c.x.x / cs, c.x.y / cs, c.x.z / cs])
        .collect();
    Ok(SerializedParticle { values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deserialized {
    pub model: MetaballModel,
    /// Control points whose weight was raised to the floor.
    pub clamped: usize,
}

/// Inverse of [`serialize`]; weights below `k_floor` (physical units) are
/// raised to it.
pub fn deserialize(values: &[f64], scaler: &Scaler, k_floor: f64) -> Result<Deserialized> {
    if values.is_empty() || values.len() % 4 != 0 {
        return Err(Error::Format(format!("serialized length {} is not a positive multiple of 4", values.len())));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("serialized entry {i}")));
    }
    let cs = scaler.coordinate_scale;
    let mut clamped = 0;
    let points = values
        .chunks_exact(4)
        .map(|c| {
            let mut k = c[0] * scaler.k_scale;
            if k < k_floor {
                k = k_floor;
                clamped += 1;
            }
            ControlPoint::new(k, Vec3::new(c[1] * cs, c[2] * cs, c[3] * cs))
        })
        .collect();
    Ok(Deserialized { model: MetaballModel::new(points)?, clamped })
}

/// Rotation and permutation copies of every particle: the original plus
/// `rotations` uniformly random orientations, each emitted in `shuffles`
/// control-point orders. The first order of each orientation is the
/// identity, so `rotations = 0, shuffles = 1` returns the input.
pub fn augment(
    dataset: &[SerializedParticle],
    rotations: usize,
    shuffles: usize,
    seed: u64,
) -> Result<Vec<SerializedParticle>> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("cannot augment an empty dataset".into()));
    }
    if shuffles == 0 {
        return Err(Error::InvalidParameter("shuffles must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, rng::AUGMENT);
    let mut out = Vec::with_capacity(dataset.len() * (1 + rotations) * shuffles);
    for particle in dataset {
        let n = particle.n();
        let mut order: Vec<usize> = (0..n).collect();
        for variant in 0..=rotations {
            let rotated = if variant == 0 {
                particle.values.clone()
            } else {
                let q = Quaternion::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                let r = UnitQuaternion::from_quaternion(q);
                particle
                    .values
                    .chunks_exact(4)
                    .flat_map(|c| {
                        let p = r * Vec3::new(c[1], c[2], c[3]);
                        [c[0], p.x, p.y, p.z]
                    })
                    .collect()
            };
            for s in 0..shuffles {
                order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
                if s > 0 {
                    order.shuffle(&mut rng);
                }
                let values = order.iter().flat_map(|&i| rotated[4 * i..4 * i + 4].iter().copied()).collect();
                out.push(SerializedParticle { values });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn model(points: &[(f64, [f64; 3])]) -> MetaballModel {
        MetaballModel::new(points.iter().map(|&(k, x)| ControlPoint::new(k, Vec3::from(x))).collect()).unwrap()
    }

    #[test]
    fn serialize_examples() {
        let m = model(&[(4.0, [1.0, 2.0, 3.0])]);
        assert_eq!(serialize(&m, &Scaler::new(1.0).unwrap(), 1).unwrap().values, vec![4.0, 1.0, 2.0, 3.0]);
        assert_eq!(serialize(&m, &Scaler::new(2.0).unwrap(), 1).unwrap().values, vec![1.0, 0.5, 1.0, 1.5]);
        assert!(matches!(serialize(&m, &Scaler::new(1.0).unwrap(), 2), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn deserialize_examples() {
        let s = Scaler::new(1.0).unwrap();
        let d = deserialize(&[4.0, 1.0, 2.0, 3.0], &s, 1e-8).unwrap();
        assert_eq!(d.model, model(&[(4.0, [1.0, 2.0, 3.0])]));
        assert_eq!(d.clamped, 0);
        let d = deserialize(&[-0.5, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0], &s, 1e-3).unwrap();
        assert_eq!(d.clamped, 1);
        assert_eq!(d.model.control_points()[0].k, 1e-3);
        assert!(matches!(deserialize(&[1.0; 5], &s, 0.0), Err(Error::Format(_))));
        assert!(matches!(deserialize(&[1.0, f64::NAN, 0.0, 0.0], &s, 0.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn round_trip_is_tight() {
        let m = model(&[(2.5, [0.1, -3.0, 7.25]), (0.3, [1e-3, 2.0, -0.5])]);
        let s = Scaler::new(3.7).unwrap();
        let back = deserialize(&serialize(&m, &s, 2).unwrap().values, &s, 0.0).unwrap().model;
        for (a, b) in m.control_points().iter().zip(back.control_points()) {
            assert!((a.k - b.k).abs() <= 1e-9 * a.k.abs());
            assert!((a.x - b.x).norm() <= 1e-9 * a.x.norm());
        }
    }

    #[test]
    fn augmentation_counts_and_identity() {
        let m = model(&[(1.0, [0.0, 0.0, 0.0]), (0.5, [1.0, 0.0, 0.0])]);
        let p = serialize(&m, &Scaler::new(1.0).unwrap(), 2).unwrap();
        assert_eq!(augment(&[p.clone()], 5, 50, 0).unwrap().len(), 300);
        assert_eq!(augment(&[p.clone()], 0, 1, 9).unwrap(), vec![p.clone()]);
        assert_eq!(augment(&[p.clone()], 2, 3, 4).unwrap(), augment(&[p], 2, 3, 4).unwrap());
    }

    #[test]
    fn shuffled_and_rotated_copies_keep_the_field() {
        let m = model(&[(1.0, [0.0, 0.0, 0.0]), (0.5, [1.0, 0.2, 0.0]), (0.7, [-0.4, 0.9, 0.3])]);
        let s = Scaler::new(1.0).unwrap();
        let p = serialize(&m, &s, 3).unwrap();
        let copies = augment(&[p], 1, 6, 11).unwrap();
        let mut rng = rng::stream(0, "test");
        let probes: Vec<Vec3> = (0..100)
            .map(|_| Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        // Shuffles of the unrotated variant agree with the original.
        for c in &copies[..6] {
            let back = deserialize(&c.values, &s, 0.0).unwrap().model;
            for &q in &probes {
                let (a, b) = (m.evaluate(q).unwrap(), back.evaluate(q).unwrap());
                assert!((a - b).abs() <= 1e-14 * a.abs(), "{a} vs {b}");
            }
        }
        // Rotated copies keep the pairwise distances.
        let rotated = deserialize(&copies[6].values, &s, 0.0).unwrap().model;
        let d = |m: &MetaballModel| {
            let mut v: Vec<f64> = m.control_points().iter().flat_map(|a| m.control_points().iter().map(move |b| (a.x - b.x).norm())).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        for (a, b) in d(&m).iter().zip(d(&rotated)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
