//! Metaball descriptors for 3D granular particles.
//!
//! The crate covers the whole pipeline from a segmented voxel mask to a
//! generated population of style-similar particles:
//!
//! * [`voxel`]: voxel grids, surface point hulls, exact Euclidean distance
//!   transform and sphere carving.
//! * [`metaball`]: the inverse-square implicit surface, its meshing and
//!   voxelization.
//! * [`imaging`]: fitting a metaball model to a voxel mask by sphere
//!   clustering followed by gradient search.
//! * [`metrics`]: volume, area, Corey shape factor, sphericity, circularity
//!   and equivalent diameters.
//! * [`vae`]: serialization of models and the variational autoencoder that
//!   learns their distribution.
//! * [`generate`]: sampling and latent-space edits on a trained model.

pub mod error;
pub mod fixtures;
pub mod fsutil;
pub mod generate;
pub mod imaging;
pub mod mesh;
pub mod metaball;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod vae;
pub mod voxel;

pub use error::{Error, Result};

/// Physical-space point or displacement.
pub type Vec3 = nalgebra::Vector3<f64>;
