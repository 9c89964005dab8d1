//! Variational autoencoder over serialized metaball models.

mod io;
mod loss;
mod network;
mod serialize;
mod train;

pub use io::{decode_weights, encode_weights, load_weights, save_weights, WEIGHTS_MAGIC};
pub use loss::{anneal_weight, vae_loss, AnnealSchedule, LossParts};
pub use network::{reparameterize, Architecture, ForwardPass, Network, OutputGradients};
pub use serialize::{augment, dataset_radius, deserialize, serialize, Deserialized, Scaler, SerializedParticle};
pub use train::{
    latent_moments, log_csv, loss_and_gradient, loss_and_gradient_into, train, train_serialized, LogRow, TrainConfig, Trained, DEFAULT_TARGET_RADIUS, LOG_HEADER,
};
