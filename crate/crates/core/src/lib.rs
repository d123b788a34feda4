//! Identity-preserving compositing of layered design elements.
//!
//! Foreground elements are composed onto a background canvas one at a time
//! in layer order. For each element the generative conditioning tokens are
//! corrected with identity tokens on the indices whose cross-attention peaks
//! in the foreground or background region, and denoising starts from a
//! partially noised encoding of the current canvas.

pub mod backend;
pub mod compositor;
pub mod design;
pub mod digest;
pub mod error;
pub mod flow;
pub mod identity;
pub mod injection;
pub mod mask;
pub mod pipeline;
pub mod raster;
pub mod relevance;

pub use error::{Error, Result};
