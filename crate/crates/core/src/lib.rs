pub mod app_trainer;
pub mod autograd;
pub mod cli;
pub mod error;
pub mod image;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod seg_trainer;
pub mod silhouette_pool;
pub mod synth_data;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
