//! The padding-free generator: shape planning, parameters, modulated
//! convolutions, noise, synthesis and tile stitching.

pub mod generator;
pub mod modconv;
pub mod noise;
pub mod params;
pub mod plan;
pub mod stitch;

pub use generator::{generate, generate_with_styles, latent_from_seed, map_latent, synthesize, Styles};
pub use noise::{NoiseKind, NoisePolicy};
pub use params::{GeneratorConfig, GeneratorParams};
pub use plan::{plan_shapes, ShapePlan};
pub use stitch::{stitch_tiles, Stitched};
