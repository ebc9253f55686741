//! Segmentation network: layers, the U-Net assembly, and checkpointing.

pub mod checkpoint;
pub mod layers;
pub mod param;
pub mod unet;

pub use checkpoint::{CheckpointError, CheckpointMeta};
pub use layers::BnStats;
pub use unet::{patch_to_input, predict_tile, ModelError, NetConfig, UNet};
