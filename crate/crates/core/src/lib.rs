//! Regionalization of gridded study areas into contiguous, homogeneous
//! planning regions.
//!
//! The pipeline embeds standardized cell features with an autoencoder,
//! clusters them with a spatially constrained self-organizing map whose
//! neurons are anchored at representative cells, and grows the resulting
//! patches into exactly `k` rook-connected regions.

pub mod advisor;
pub mod embedding;
pub mod error;
pub mod geo_grid;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod scsom;
pub mod synthetic;
pub mod variogram;

pub use error::{Error, FieldError, Result};
pub use geo_grid::{haversine_km, AdjacencyIndex, AdjacencyScheme, GeoPoint, GridRaster};
pub use pipeline::{run_pipeline, run_pipeline_to, PipelineConfig, RunArtifacts, Stage};
pub use refine::RegionPartition;
