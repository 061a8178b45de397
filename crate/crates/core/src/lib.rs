pub mod analysis;
pub mod cli;
pub mod data;
pub mod embedding;
pub mod error;
pub mod gat;
pub mod gradcheck;
pub mod model;
mod init;
pub mod sscan;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{no_grad, ParamStore, Tensor};
