//! Hedonic house-price models for Dublin: listing ingestion and text mining,
//! geodesic features, penalized additive models with spline and
//! Gaussian-process smooths, a nearest-neighbour baseline, cross-validated
//! evaluation, location-value surfaces and a synthetic data generator.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod error;
pub mod eval;
pub mod fit;
pub mod geo;
pub mod knn;
pub mod linalg;
pub mod smooth;
pub mod svt;
pub mod synth;
pub mod textmine;

pub use dataio::{Ber, FeatureContext, Postcode, PropertyRecord, PropertyType, RawListing};
pub use error::{Error, Result};
pub use eval::{kfold_cv, metrics, morans_i, EvalReport, Metrics, SpatialWeights};
pub use fit::{FitMethod, FittedModel, ModelName, ModelSpec, PostcodeMode, Prediction};
pub use geo::{LatLon, PlanarCoord};
pub use knn::{knn_estimate, KnnEstimate};
pub use textmine::{Feature, MinedFeatures};
