//! Design assembly, penalized fitting, prediction and coefficient reporting.

pub mod design;
pub mod model;
pub mod penalized;
pub mod spec;

pub use design::{build_design, Design, DesignMatrix, Term};
pub use model::{premium, BBox, FittedModel, Interval, Prediction, Scaling, TermSummary};
pub use penalized::{fit_penalized, FitMethod, GcvOptions, PenalizedFit, Penalty};
pub use spec::{Factor, ModelName, ModelSpec, PostcodeMode, SmoothSpec, SpatialSpec, Variable};
