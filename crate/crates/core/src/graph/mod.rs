//! Graph-based parsing: arc-factored and sibling scoring with exact
//! decoders.

mod decode;
mod model;

pub use decode::{cle_decode, eisner2_decode, eisner_decode, inner_siblings, sibling_range, ArcScores, SiblingScores};
pub use model::{
    distance_bucket, DecoderKind, GraphConfig, GraphModel, Order, Projections, ScoringContext, SurfaceFeatures,
    DIST_BUCKETS,
};
