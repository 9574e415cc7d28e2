//! Texture-based skin classification.
//!
//! An RGB patch is summarized by a 13-element descriptor — entropy,
//! energy, contrast, and homogeneity of a gray-level co-occurrence
//! matrix, plus mean, standard deviation, and skewness of each color
//! plane — and classified skin/non-skin by a 13-50-1 tanh network
//! trained with adaptive-rate full-batch gradient descent on a
//! sum-of-squared-errors criterion.
//!
//! The numeric core ([`features`] and [`mlp`]) is generic over the
//! scalar type via [`Scalar`]; the aliases below fix the double
//! precision used by the pipeline, the CLI, and the model file format.
//!
//! ```
//! use skintex_core::features::Displacement;
//! use skintex_core::image::RgbImage;
//!
//! let img = RgbImage::filled(8, 8, [205, 150, 125]).unwrap();
//! let d = Displacement::new(1, 0).unwrap();
//! let v = skintex_core::features::extract_features::<f64>(&img, d, 256).unwrap();
//! assert_eq!(v.as_slice().len(), 13);
//! ```

pub mod features;
pub mod image;
pub mod mlp;
pub mod num;
pub mod pipeline;

pub use num::Scalar;

/// Double-precision color moments.
pub type ColorMoments64 = features::ColorMoments<f64>;
/// Double-precision co-occurrence matrix.
pub type Glcm64 = features::Glcm<f64>;
/// Double-precision texture metrics.
pub type TextureMetrics64 = features::TextureMetrics<f64>;
/// Double-precision 13-element descriptor.
pub type FeatureVector64 = features::FeatureVector<f64>;
/// Double-precision per-feature min/max ranges.
pub type NormalizationRanges64 = features::NormalizationRanges<f64>;
/// The production network: double precision, serializable.
pub type MlpModel64 = mlp::MlpModel<f64>;
/// Double-precision trainer settings.
pub type TrainConfig64 = mlp::TrainConfig<f64>;
/// Double-precision training trace.
pub type TrainTrace64 = mlp::TrainTrace<f64>;
/// Double-precision training sample.
pub type TrainSample64 = mlp::TrainSample<f64>;
/// Double-precision SSE gradient.
pub type Gradient64 = mlp::Gradient<f64>;
