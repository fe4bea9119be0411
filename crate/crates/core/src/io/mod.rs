//! Serialization of event streams, pose labels, masks, frames and tensors.

mod events;
mod labels;
mod pnm;
mod tensor;

use thiserror::Error;

use crate::event::StreamError;

pub use events::{
    decode_events, encode_events, sniff_format, Evb1Decoder, Evb1Writer, accumulate_evb1_counts, write_synthetic_evb1, EventFormat, EVB1_HEADER_LEN,
    EVB1_MAGIC, EVB1_RECORD_LEN,
};
pub use labels::{read_pose_labels, write_pose_labels, PoseLabel};
pub use pnm::{read_mask, read_pgm, write_frame_pnm, write_pgm, GrayImage, Mask};
pub use tensor::{read_tensor, write_tensor, TensorFile, ETF1_MAGIC};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: String, found: String },
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("byte offset {offset}: {msg}")]
    Record { offset: u64, msg: String },
    #[error("truncated input: {0}")]
    Truncated(String),
    #[error("invalid event stream: {0}")]
    Validation(#[from] StreamError),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}
