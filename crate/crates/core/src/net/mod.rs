//! The image-to-image network: tensor plumbing, layer ops, the U-Net
//! itself, Adam, the training loops and checkpointing.

pub mod adam;
pub mod checkpoint;
pub mod ops;
pub mod tensor;
pub mod train;
pub mod unet;

pub use adam::Adam;
pub use checkpoint::{load_model, save_model};
pub use tensor::Tensor4;
pub use train::{train, train_supervised, EarlyStopper, EpochStats, TrainConfig, TrainedModel};
pub use unet::{build_unet, param_count, UNet, UNetConfig};
