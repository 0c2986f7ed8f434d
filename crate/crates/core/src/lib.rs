pub mod asset;
pub mod bake;
pub mod cli;
pub mod curation;
pub mod diffusion;
pub mod fixtures;
pub mod metrics;
pub mod render;
pub mod strength;
