//! Toy conditional flow matching with one velocity field per ear.

mod checkpoint;
mod condition;
mod net;
mod objective;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC, VERSION};
pub use condition::{
    layer_norm, spatial_condition, timestep_embedding, upsample, upsampled_len, ConditioningBundle, LatentSequence,
    SpatialProjection, DEFAULT_LATENT_DIM, DEFAULT_LATENT_FPS, LAYER_NORM_EPS,
};
pub use net::{
    BinauralModel, ChannelField, Dense, NetShape, VelocityField, VelocityFieldNet, WeightSharing, LEFT_FLAG,
    RIGHT_FLAG,
};
pub use objective::{
    backward, binaural_cfm_loss, cfm_loss, interpolate, split_channels, target_velocity, BinauralSample, CfmSample,
};
pub use train::{
    binaural_backward, constant_task, draw_batch, evaluate, sample_binaural, sample_euler, train, Adam, PairedExample,
    TrainConfig, TrainReport,
};
