//! The 13-element texture descriptor: four gray-level co-occurrence
//! metrics plus three color moments per RGB channel, and the min/max
//! normalization applied before the network.
//!
//! Fixed feature order: entropy, energy, contrast, homogeneity, then
//! (mean, std, skew) for R, G, B. The order is frozen because model files
//! depend on it; see [`FEATURE_ORDER`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Channel, GrayImage, ImageError, RgbImage};
use crate::num::{from_f64, from_usize, to_f64, Scalar};

pub const FEATURE_LEN: usize = 13;

/// Tag recorded in model files so a file is rejected if the descriptor
/// layout ever changes.
pub const FEATURE_ORDER: &str =
    "entropy,energy,contrast,homogeneity,r_mean,r_std,r_skew,g_mean,g_std,g_skew,b_mean,b_std,b_skew";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("displacement must not be (0, 0)")]
    ZeroDisplacement,
    #[error("no pixel pairs: a {width}x{height} image cannot host displacement ({dx}, {dy})")]
    NoPixelPairs {
        width: usize,
        height: usize,
        dx: i32,
        dy: i32,
    },
    #[error("feature set is empty")]
    EmptyFeatureSet,
    #[error("invalid co-occurrence matrix: {0}")]
    InvalidGlcm(String),
    #[error("invalid normalization range at feature {index}: ({min}, {max})")]
    InvalidRange { index: usize, min: f64, max: f64 },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Pixel offset (dx columns, dy rows) defining which pairs the
/// co-occurrence matrix counts. Must be nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "(i32, i32)", into = "(i32, i32)")]
pub struct Displacement {
    dx: i32,
    dy: i32,
}

impl Displacement {
    pub fn new(dx: i32, dy: i32) -> Result<Self, FeatureError> {
        if dx == 0 && dy == 0 {
            return Err(FeatureError::ZeroDisplacement);
        }
        Ok(Self { dx, dy })
    }

    pub fn dx(&self) -> i32 {
        self.dx
    }

    pub fn dy(&self) -> i32 {
        self.dy
    }
}

impl From<Displacement> for (i32, i32) {
    fn from(d: Displacement) -> Self {
        (d.dx, d.dy)
    }
}

impl TryFrom<(i32, i32)> for Displacement {
    type Error = FeatureError;

    fn try_from((dx, dy): (i32, i32)) -> Result<Self, FeatureError> {
        Displacement::new(dx, dy)
    }
}

impl std::fmt::Display for Displacement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.dx, self.dy)
    }
}

/// First three moments of one color plane: mean, standard deviation, and
/// the signed cube root of the third central moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorMoments<T> {
    pub mean: T,
    pub std_dev: T,
    pub skewness: T,
}

pub fn color_moments<T: Scalar>(img: &RgbImage, channel: Channel) -> ColorMoments<T> {
    let n = from_usize::<T>(img.pixel_count());
    let mut sum = T::zero();
    for v in img.channel_values(channel) {
        sum += from_f64(f64::from(v));
    }
    let mean = sum / n;
    let mut m2 = T::zero();
    let mut m3 = T::zero();
    for v in img.channel_values(channel) {
        let d = from_f64::<T>(f64::from(v)) - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
    }
    ColorMoments {
        mean,
        std_dev: (m2 / n).sqrt(),
        // cbrt is the real cube root, so a negative third moment keeps its sign
        skewness: (m3 / n).cbrt(),
    }
}

/// Normalized gray-level co-occurrence matrix for one displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm<T> {
    levels: usize,
    entries: Vec<T>,
    pair_count: u64,
}

impl<T: Scalar> Glcm<T> {
    /// Build from raw entries; mostly useful for tests and tooling.
    /// Entries must be nonnegative, finite, and sum to one when
    /// `pair_count > 0`.
    pub fn from_entries(
        levels: usize,
        entries: Vec<T>,
        pair_count: u64,
    ) -> Result<Self, FeatureError> {
        if levels == 0 || entries.len() != levels * levels {
            return Err(FeatureError::InvalidGlcm(format!(
                "{} entries do not form a {levels}x{levels} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite() || *e < T::zero()) {
            return Err(FeatureError::InvalidGlcm(
                "entries must be finite and nonnegative".into(),
            ));
        }
        if pair_count > 0 {
            let sum: T = entries.iter().copied().sum();
            // Double-precision tolerance; wider for coarser scalars.
            let tol = from_f64::<T>(1e-12).max(T::epsilon() * from_f64(64.0));
            if (sum - T::one()).abs() > tol {
                return Err(FeatureError::InvalidGlcm(format!(
                    "entries sum to {}, expected 1",
                    to_f64(sum)
                )));
            }
        }
        Ok(Self {
            levels,
            entries,
            pair_count,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn pair_count(&self) -> u64 {
        self.pair_count
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        self.entries[i * self.levels + j]
    }
}

/// Count ordered pixel pairs `(r, c) -> (r + dy, c + dx)` and normalize by
/// the number of in-bounds positions.
pub fn glcm<T: Scalar>(img: &GrayImage, d: Displacement) -> Result<Glcm<T>, FeatureError> {
    let (width, height) = (img.width(), img.height());
    let dx = i64::from(d.dx());
    let dy = i64::from(d.dy());
    let span_cols = width as i64 - dx.abs();
    let span_rows = height as i64 - dy.abs();
    if span_cols <= 0 || span_rows <= 0 {
        return Err(FeatureError::NoPixelPairs {
            width,
            height,
            dx: d.dx(),
            dy: d.dy(),
        });
    }
    let pair_count = (span_cols * span_rows) as u64;
    let levels = img.levels();
    let mut counts = vec![0u64; levels * levels];
    let row0 = (-dy).max(0);
    let col0 = (-dx).max(0);
    for r in row0..row0 + span_rows {
        for c in col0..col0 + span_cols {
            let i = img.pixel(r as usize, c as usize) as usize;
            let j = img.pixel((r + dy) as usize, (c + dx) as usize) as usize;
            counts[i * levels + j] += 1;
        }
    }
    let denom = from_f64::<T>(pair_count as f64);
    let entries = counts
        .iter()
        .map(|&c| from_f64::<T>(c as f64) / denom)
        .collect();
    Ok(Glcm {
        levels,
        entries,
        pair_count,
    })
}

/// The four co-occurrence statistics. Entropy is the raw sum
/// `ΣΣ C·ln(C)` (with `0·ln 0 = 0`), hence nonpositive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureMetrics<T> {
    pub entropy: T,
    pub energy: T,
    pub contrast: T,
    pub homogeneity: T,
}

pub fn texture_metrics<T: Scalar>(g: &Glcm<T>) -> TextureMetrics<T> {
    let levels = g.levels();
    let mut entropy = T::zero();
    let mut energy = T::zero();
    let mut contrast = T::zero();
    let mut homogeneity = T::zero();
    for i in 0..levels {
        for j in 0..levels {
            let c = g.entry(i, j);
            // Zero entries contribute nothing to any metric; skipping them
            // also realizes the 0·ln(0) = 0 convention.
            if c > T::zero() {
                entropy += c * c.ln();
                energy += c * c;
                let diff = from_f64::<T>(i as f64 - j as f64);
                contrast += diff * diff * c;
                homogeneity += c / (T::one() + diff.abs());
            }
        }
    }
    TextureMetrics {
        entropy,
        energy,
        contrast,
        homogeneity,
    }
}

/// The 13-element descriptor in the fixed order of [`FEATURE_ORDER`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector<T>(pub [T; FEATURE_LEN]);

impl<T: Scalar> FeatureVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// Full descriptor of one image: texture metrics from the quantized gray
/// image, color moments from the raw RGB planes.
pub fn extract_features<T: Scalar>(
    img: &RgbImage,
    d: Displacement,
    levels: usize,
) -> Result<FeatureVector<T>, FeatureError> {
    let quantized = img.to_gray().quantize(levels)?;
    let tex = texture_metrics(&glcm::<T>(&quantized, d)?);
    let [r, g, b] = Channel::ALL.map(|ch| color_moments::<T>(img, ch));
    Ok(FeatureVector([
        tex.entropy,
        tex.energy,
        tex.contrast,
        tex.homogeneity,
        r.mean,
        r.std_dev,
        r.skewness,
        g.mean,
        g.std_dev,
        g.skewness,
        b.mean,
        b.std_dev,
        b.skewness,
    ]))
}

/// Per-feature (min, max) pairs learned from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationRanges<T> {
    pairs: Vec<(T, T)>,
}

impl<T: Scalar> NormalizationRanges<T> {
    pub fn new(pairs: Vec<(T, T)>) -> Result<Self, FeatureError> {
        for (index, &(min, max)) in pairs.iter().enumerate() {
            if !(min.is_finite() && max.is_finite() && min <= max) {
                return Err(FeatureError::InvalidRange {
                    index,
                    min: to_f64(min),
                    max: to_f64(max),
                });
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(T, T)] {
        &self.pairs
    }

    /// Affine map sending min to -1 and max to +1; values outside the
    /// range extrapolate linearly. A degenerate range maps to 0.
    pub fn normalize_slice(&self, input: &[T]) -> Vec<T> {
        assert_eq!(
            input.len(),
            self.pairs.len(),
            "input length must match the fitted ranges"
        );
        let two = from_f64::<T>(2.0);
        input
            .iter()
            .zip(&self.pairs)
            .map(|(&v, &(min, max))| {
                if max > min {
                    two * (v - min) / (max - min) - T::one()
                } else {
                    T::zero()
                }
            })
            .collect()
    }
}

/// Per-feature min/max over a non-empty batch of descriptors.
pub fn fit_ranges<T: Scalar>(
    vectors: &[FeatureVector<T>],
) -> Result<NormalizationRanges<T>, FeatureError> {
    let first = vectors.first().ok_or(FeatureError::EmptyFeatureSet)?;
    let mut pairs: Vec<(T, T)> = first.0.iter().map(|&v| (v, v)).collect();
    for vector in &vectors[1..] {
        for (pair, &v) in pairs.iter_mut().zip(vector.0.iter()) {
            if v < pair.0 {
                pair.0 = v;
            }
            if v > pair.1 {
                pair.1 = v;
            }
        }
    }
    NormalizationRanges::new(pairs)
}

/// Apply fitted ranges to one descriptor.
pub fn normalize<T: Scalar>(
    v: &FeatureVector<T>,
    ranges: &NormalizationRanges<T>,
) -> FeatureVector<T> {
    assert_eq!(ranges.len(), FEATURE_LEN, "ranges must cover all features");
    let out = ranges.normalize_slice(v.as_slice());
    FeatureVector(out.try_into().expect("length preserved"))
}
