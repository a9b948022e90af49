//! Shared embeddings for two modalities learned from mostly unpaired data.
//!
//! The pipeline builds an adaptive-kernel kNN graph per modality, takes its
//! spectral embedding, aligns the two embeddings linearly with CCA fitted on
//! a handful of known pairs, and closes the remaining distribution gap with a
//! residual network trained on MMD. See [`align::fit_sue`].

pub mod align;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};

/// Independent child seed for stream `stream` of a run seeded with `base`
/// (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
