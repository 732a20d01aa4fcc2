//! Truncated signatures of piecewise-linear paths.
//!
//! A path is folded segment by segment with Chen's identity, so the result
//! is exact for polylines up to floating-point rounding.

mod path;
mod signature;
mod tensor;

pub use path::{basepoint_augment, time_augment, Augment, Path};
pub use signature::{
    build_design_matrix, sig_length, signature, signature_tensor, word_index, SigVector,
};
pub use tensor::{chen_concat, segment_signature, TensorSeq};
