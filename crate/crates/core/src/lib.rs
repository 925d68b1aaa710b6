//! Scale-consistent positional encodings for padding-free convolutional
//! image generators.
//!
//! The crate is `no_std` (with `alloc`) and purely computational:
//!
//! - [`field`]: a procedural continuous image space used as data and as
//!   ground truth for geometry tests.
//! - [`posgrid`]: pixel-centered positional-encoding grids, their
//!   transformations and tile layouts.
//! - [`net`]: shape planning, the pad-free modulated generator, noise
//!   policies and tile stitching.
//! - [`augment`]: CutMix / ChannelMix between renderings at two scales.
//! - [`metrics`]: SSIM, SelfSSIM and the resize-transitivity audit.
//! - [`train`]: toy adversarial training, losses, R1 and W+ projection.
//!
//! File formats, the CLI and the HTTP service live in the `padfree` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod augment;
pub mod error;
pub mod field;
pub mod metrics;
pub mod net;
pub mod posgrid;
pub mod real;
pub mod resample;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use field::{ContinuousField, ImagePatch, SampleSpec};
pub use posgrid::{EncodingGrid, GeoTransform, GridMode};
pub use tensor::Tensor;

/// Extent of the full frame along each axis in continuous-space units.
pub const FULL_FRAME_EXTENT: f64 = 2.0;
