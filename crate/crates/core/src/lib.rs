//! Statistical discovery and manipulation of gaze-relevant chunks in
//! GAN-inversion latent codes, plus a latent-only gaze regressor and a small
//! affine encoder/generator pipeline for gaze-preserving domain shift.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the
//! command-line driver live in `latentgaze-cli`.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod gaze;
pub mod layout;
pub mod manipulate;
pub mod mask;
pub mod numeric;
pub mod regressor;
pub mod shiftsim;
pub mod statedit;
pub mod synth;

pub use error::{Error, Result};
pub use gaze::{angles_to_vector, angular_error, gaze_to_vector, GazeLabel, Vec3};
pub use layout::{chunk_means, LatentCode, LatentDataset, LatentLayout, Sample};
pub use mask::SelectionMask;
