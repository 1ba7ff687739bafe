//! The image-to-image learning model and its SGD trainer.

pub mod init;
pub mod layers;
pub mod model;
pub mod train;

pub use init::kaiming_init;
pub use layers::{mse_loss, relu, BatchNorm};
pub use model::{parameter_count, ModelConfig, Network, Params};
pub use train::{evaluate, report_header, sgd_train, Dataset, TrainOutcome, TrainReport};
