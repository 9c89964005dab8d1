//! Sampling new particles from a trained autoencoder and editing them in
//! latent space.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal, StandardNormal};

use crate::fsutil::write_atomic;
use crate::imaging::KFloor;
use crate::metaball::MetaballModel;
use crate::rng;
use crate::vae::{deserialize, load_weights, serialize, Network, Scaler, Trained};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    values: Vec<f64>,
}

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("latent vector is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("latent entry {i}")));
        }
        Ok(Self { values })
    }

    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len.max(1)] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One value per line, printed so that parsing restores every bit.
    pub fn to_text(&self) -> String {
        self.values.iter().fold(String::new(), |mut s, v| {
            let _ = writeln!(s, "{v:?}");
            s
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let values = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .map(|(i, l)| l.parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }
}

pub fn load_latent(path: &Path) -> Result<LatentVector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LatentVector::parse(&text)
}

pub fn save_latent(z: &LatentVector, path: &Path) -> Result<()> {
    write_atomic(path, z.to_text().as_bytes())
}

/// A trained network with the normalization of its training set.
#[derive(Debug, Clone)]
pub struct GeneratorModel {
    pub network: Network,
    pub scaler: Scaler,
    /// Resolved against the coordinate scale.
    pub k_floor: KFloor,
}

/// A decoded particle in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub model: MetaballModel,
    /// Control points whose weight was raised to the floor.
    pub clamped: usize,
    pub z: LatentVector,
}

impl GeneratorModel {
    pub fn new(network: Network, scaler: Scaler) -> Self {
        Self { network, scaler, k_floor: KFloor::Relative(1e-8) }
    }

    pub fn from_trained(trained: &Trained) -> Self {
        Self::new(trained.network.clone(), trained.scaler)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (network, scaler) = load_weights(path)?;
        Ok(Self::new(network, scaler))
    }

    /// Control points per particle.
    pub fn n(&self) -> usize {
        self.network.input_dim() / 4
    }

    pub fn latent_dim(&self) -> usize {
        self.network.latent_dim()
    }

    fn floor(&self) -> f64 {
        self.k_floor.resolve(self.scaler.coordinate_scale)
    }

    /// Posterior mean of `model`.
    pub fn encode(&self, model: &MetaballModel) -> Result<LatentVector> {
        let x = serialize(model, &self.scaler, self.n())?;
        LatentVector::new(self.network.encode(&x.values)?.0)
    }

    pub fn decode(&self, z: &LatentVector) -> Result<Generated> {
        let values = self.network.decode(z.values())?;
        let d = deserialize(&values, &self.scaler, self.floor())?;
        Ok(Generated { model: d.model, clamped: d.clamped, z: z.clone() })
    }
}

/// `count` standard-normal latent vectors.
pub fn sample_latents(latent_dim: usize, count: usize, seed: u64) -> Vec<LatentVector> {
    let mut rng = rng::stream(seed, rng::GENERATE);
    (0..count)
        .map(|_| LatentVector { values: (0..latent_dim).map(|_| StandardNormal.sample(&mut rng)).collect() })
        .collect()
}

pub fn sample_particles(generator: &GeneratorModel, count: usize, seed: u64) -> Result<Vec<Generated>> {
    sample_latents(generator.latent_dim(), count, seed).iter().map(|z| generator.decode(z)).collect()
}

/// `z + δ` with `δ ~ N(0, sigma²)` per entry.
pub fn perturb(z: &LatentVector, sigma: f64, seed: u64) -> Result<LatentVector> {
    let bad = || Error::InvalidParameter(format!("noise level {sigma} must be finite and non-negative"));
    if !(sigma >= 0.0) {
        return Err(bad());
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| bad())?;
    let mut rng = rng::stream(seed, rng::PERTURB);
    LatentVector::new(z.values.iter().map(|v| v + normal.sample(&mut rng)).collect())
}

/// `(1 − alpha)·z1 + alpha·z2`, which returns the endpoints exactly.
pub fn interpolate(z1: &LatentVector, z2: &LatentVector, alpha: f64) -> Result<LatentVector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    let a = scaled(z1, 1.0 - alpha);
    let b = scaled(z2, alpha);
    latent_arithmetic(&[(Sign::Plus, &a), (Sign::Plus, &b)])
}

fn scaled(z: &LatentVector, s: f64) -> LatentVector {
    LatentVector { values: z.values.iter().map(|v| s * v).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Signed elementwise sum, accumulated left to right.
pub fn latent_arithmetic(terms: &[(Sign, &LatentVector)]) -> Result<LatentVector> {
    let (&(sign, first), rest) =
        terms.split_first().ok_or_else(|| Error::InvalidParameter("no latent terms".into()))?;
    let mut out: Vec<f64> = match sign {
        Sign::Plus => first.values.clone(),
        Sign::Minus => first.values.iter().map(|v| -v).collect(),
    };
    for &(sign, z) in rest {
        if z.len() != out.len() {
            return Err(Error::ShapeMismatch { expected: out.len(), found: z.len() });
        }
        for (o, v) in out.iter_mut().zip(&z.values) {
            match sign {
                Sign::Plus => *o += v,
                Sign::Minus => *o -= v,
            }
        }
    }
    LatentVector::new(out)
}

pub const INDEX_HEADER: &str = "id,seed,edit_expression";

/// One generated file and how it was made.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexRow {
    pub id: String,
    pub seed: u64,
    pub edit: String,
}

pub fn index_csv(rows: &[IndexRow]) -> String {
    let field = |s: &str| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    let mut out = format!("{INDEX_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", field(&r.id), r.seed, field(&r.edit));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::Architecture;

    fn z(v: &[f64]) -> LatentVector {
        LatentVector::new(v.to_vec()).unwrap()
    }

    fn generator() -> GeneratorModel {
        let arch = Architecture { input: 8, encoder: vec![6], latent: 3, decoder: vec![6] };
        GeneratorModel::new(Network::glorot(arch, 0.01, 9).unwrap(), Scaler::new(2.0).unwrap())
    }

    #[test]
    fn sampling_is_seeded() {
        let g = generator();
        assert!(sample_particles(&g, 0, 1).unwrap().is_empty());
        let a = sample_particles(&g, 5, 1).unwrap();
        assert_eq!(a, sample_particles(&g, 5, 1).unwrap());
        assert_ne!(a, sample_particles(&g, 5, 2).unwrap());
        assert!(a.iter().all(|p| p.model.len() == 2));
    }

    #[test]
    fn perturb_examples() {
        let base = z(&[0.5, -1.0, 2.0]);
        assert_eq!(perturb(&base, 0.0, 3).unwrap(), base);
        assert_eq!(perturb(&base, 0.4, 3).unwrap(), perturb(&base, 0.4, 3).unwrap());
        assert_ne!(perturb(&base, 0.4, 3).unwrap(), perturb(&base, 0.4, 4).unwrap());
        assert!(perturb(&base, -1.0, 3).is_err());
    }

    #[test]
    fn interpolation_examples() {
        let (a, b) = (z(&[1.0, -3.0, 0.1]), z(&[0.3, 7.0, -2.0]));
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), b);
        assert_eq!(interpolate(&a, &b, 0.5).unwrap(), z(&[0.65, 2.0, -0.95]));
        assert!(interpolate(&a, &b, 1.5).is_err());
        let alpha = 0.3;
        let direct = latent_arithmetic(&[(Sign::Plus, &scaled(&a, 1.0 - alpha)), (Sign::Plus, &scaled(&b, alpha))]);
        assert_eq!(interpolate(&a, &b, alpha).unwrap(), direct.unwrap());
    }

    #[test]
    fn arithmetic_examples() {
        let (a, b, c) = (z(&[1.5, -2.0]), z(&[0.25, 4.0]), z(&[3.0, 1.0]));
        assert_eq!(latent_arithmetic(&[(Sign::Plus, &a)]).unwrap(), a);
        assert_eq!(latent_arithmetic(&[(Sign::Plus, &a), (Sign::Minus, &a)]).unwrap(), z(&[0.0, 0.0]));
        let sum = latent_arithmetic(&[(Sign::Plus, &a), (Sign::Plus, &b), (Sign::Minus, &c)]).unwrap();
        assert_eq!(sum, z(&[1.5 + 0.25 - 3.0, -2.0 + 4.0 - 1.0]));
        assert!(latent_arithmetic(&[(Sign::Plus, &a), (Sign::Plus, &z(&[1.0]))]).is_err());
        assert!(latent_arithmetic(&[]).is_err());
    }

    #[test]
    fn latent_text_round_trip() {
        let v = z(&[0.1, -1e-300, 123456.789, std::f64::consts::PI]);
        assert_eq!(LatentVector::parse(&v.to_text()).unwrap(), v);
        assert!(LatentVector::parse("1.0\nnope\n").is_err());
        assert!(LatentVector::parse("NaN\n").is_err());
        assert!(LatentVector::parse("").is_err());
    }

    #[test]
    fn encode_decode_shapes() {
        let g = generator();
        let m = g.decode(&z(&[0.1, 0.2, 0.3])).unwrap().model;
        assert_eq!(g.encode(&m).unwrap().len(), 3);
        assert!(g.decode(&z(&[0.1])).is_err());
        assert!(g.encode(&MetaballModel::sphere(crate::Vec3::zeros(), 1.0)).is_err());
    }

    #[test]
    fn index_layout() {
        let rows = [
            IndexRow { id: "g0".into(), seed: 4, edit: "sample".into() },
            IndexRow { id: "g1".into(), seed: 4, edit: "a,b".into() },
        ];
        assert_eq!(index_csv(&rows), "id,seed,edit_expression\ng0,4,sample\ng1,4,\"a,b\"\n");
    }
}
