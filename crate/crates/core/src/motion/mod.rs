//! Motion models: an exactly invertible warp between observed time and a
//! canonical frame, and the scene-flow field it is distilled from.

mod checkpoint;
mod encoding;
mod flow;
mod invertible;
mod nn;


use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use encoding::{encode_time, TIME_ENCODING_DIM};
pub use flow::SceneFlowField;
pub use invertible::{CouplingBlock, InvertibleMotionNet};

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint manifest error: {0}")]
    Manifest(String),
    #[error("checkpoint does not match the model ({0})")]
    Mismatch(String),
    #[error(transparent)]
    Tape(#[from] crate::autodiff::TapeError),
}
