//! Shot-noise simulation of stable, layered stable and mixed stable Lévy
//! processes, with characteristic-function, tail and change-of-measure
//! diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod girsanov;
pub mod harness;
pub mod limits;
pub mod parallel;
pub mod qfunc;
pub mod quad;
pub mod series;
pub mod special;
pub mod spherical;
pub mod stats;

pub use error::{Error, Result};
pub use qfunc::{Blend, DerivedSphericalPair, LayeredQ, QKind, RadialDensity};
pub use spherical::{SphericalKind, SphericalMeasure};
pub use series::{
    draw_for_path, draw_shot_noise, layered_path_canonical, layered_path_general, layered_path_rejection,
    mixed_path, stable_path, uniform_grid, DrawFeatures, Mixture, RejectionBase, SamplePath, ShotNoiseDraw,
};
pub use stats::CfTarget;
pub use limits::{LimitMode, LimitSpec, LimitTarget};
pub use girsanov::{DensityRatio, MeasureTag, WeightedPathSample};
