//! Feed-forward tanh network and its trainer.
//!
//! The production model is 13-50-1 with tanh on both layers, trained by
//! full-batch gradient descent on the sum of squared errors with an
//! adaptive learning rate: steps that grow the SSE beyond a tolerance are
//! rejected and shrink the rate, improving steps grow it. The math is
//! dimension-agnostic so small instances stay testable; the model file
//! format pins 13-50-1.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    Displacement, FeatureError, FeatureVector, NormalizationRanges, FEATURE_LEN, FEATURE_ORDER,
};
use crate::num::{from_f64, Scalar};

pub const INPUT_DIM: usize = 13;
pub const HIDDEN_DIM: usize = 50;
pub const MODEL_FORMAT_VERSION: u32 = 1;

const ACTIVATION: &str = "tanh";

/// Classifier output classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Skin,
    NonSkin,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Skin => "skin",
            Label::NonSkin => "non-skin",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification<T> {
    pub label: Label,
    pub score: T,
}

/// Extraction settings and descriptor layout stored alongside the
/// weights, so classification always reproduces the training-time
/// conditioning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub displacement: Displacement,
    pub levels: usize,
    pub feature_order: String,
}

impl Default for ModelMetadata {
    fn default() -> Self {
        Self {
            displacement: Displacement::new(1, 0).expect("nonzero"),
            levels: 256,
            feature_order: FEATURE_ORDER.to_owned(),
        }
    }
}

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("sample {index} has {got} inputs, model expects {expected}")]
    SampleDimension {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("inconsistent model shape: {0}")]
    Shape(String),
    #[error("non-finite parameter in {field}")]
    NonFiniteParam { field: &'static str },
    #[error("invalid train config: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum TrainError<T: Scalar> {
    #[error("training diverged at epoch {epoch}: {quantity} is not finite")]
    Diverged {
        epoch: usize,
        quantity: &'static str,
        trace: TrainTrace<T>,
    },
    #[error(transparent)]
    Invalid(#[from] MlpError),
}

/// One training example: inputs already normalized, target +1 or -1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T> {
    pub input: Vec<T>,
    pub target: T,
}

/// Hyperparameters of the adaptive-rate trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    /// Stop once the batch SSE is at or below this.
    pub sse_goal: T,
    pub max_epochs: usize,
    pub lr_initial: T,
    /// Rate multiplier after a strictly improving step.
    pub lr_increase: T,
    /// Rate multiplier after a rejected step.
    pub lr_decrease: T,
    /// A step is rejected when SSE grows beyond this factor.
    pub max_sse_growth: T,
    pub lr_min: T,
    pub lr_max: T,
    /// Weight-initialization seed.
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            sse_goal: from_f64(1e-6),
            max_epochs: 50_000,
            lr_initial: from_f64(0.01),
            lr_increase: from_f64(1.05),
            lr_decrease: from_f64(0.7),
            max_sse_growth: from_f64(1.04),
            lr_min: from_f64(1e-9),
            lr_max: from_f64(10.0),
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<(), MlpError> {
        let fin = [
            self.sse_goal,
            self.lr_initial,
            self.lr_increase,
            self.lr_decrease,
            self.max_sse_growth,
            self.lr_min,
            self.lr_max,
        ];
        if fin.iter().any(|v| !v.is_finite()) {
            return Err(MlpError::Config("all rates must be finite".into()));
        }
        if !(self.lr_decrease < T::one() && T::one() < self.lr_increase) {
            return Err(MlpError::Config(
                "need lr_decrease < 1 < lr_increase".into(),
            ));
        }
        if self.max_sse_growth <= T::one() {
            return Err(MlpError::Config("need max_sse_growth > 1".into()));
        }
        if !(self.lr_min < self.lr_initial && self.lr_initial < self.lr_max) {
            return Err(MlpError::Config("need lr_min < lr_initial < lr_max".into()));
        }
        if self.lr_min <= T::zero() {
            return Err(MlpError::Config("need lr_min > 0".into()));
        }
        if self.sse_goal <= T::zero() {
            return Err(MlpError::Config("need sse_goal > 0".into()));
        }
        Ok(())
    }
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GoalReached,
    MaxEpochs,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::GoalReached => "goal reached",
            StopReason::MaxEpochs => "max epochs",
        })
    }
}

/// Per-epoch record: the SSE of the model state after the accept/reject
/// decision and the learning rate the step was attempted with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord<T> {
    pub epoch: usize,
    pub sse: T,
    pub lr: T,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace<T> {
    pub records: Vec<EpochRecord<T>>,
    pub stop: StopReason,
}

impl<T: Scalar> TrainTrace<T> {
    pub fn epochs_run(&self) -> usize {
        self.records.len()
    }

    pub fn accepted_steps(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }

    pub fn final_sse(&self) -> Option<T> {
        self.records.last().map(|r| r.sse)
    }
}

/// SSE gradient with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub hidden_weights: Vec<T>,
    pub hidden_biases: Vec<T>,
    pub output_weights: Vec<T>,
    pub output_bias: T,
}

impl<T: Scalar> Gradient<T> {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            hidden_weights: vec![T::zero(); input_dim * hidden_dim],
            hidden_biases: vec![T::zero(); hidden_dim],
            output_weights: vec![T::zero(); hidden_dim],
            output_bias: T::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.hidden_weights.iter().all(|v| v.is_finite())
            && self.hidden_biases.iter().all(|v| v.is_finite())
            && self.output_weights.iter().all(|v| v.is_finite())
            && self.output_bias.is_finite()
    }
}

/// Network weights plus the feature conditioning they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    input_dim: usize,
    hidden_dim: usize,
    /// hidden_dim rows of input_dim weights, row-major.
    hidden_weights: Vec<T>,
    hidden_biases: Vec<T>,
    output_weights: Vec<T>,
    output_bias: T,
    ranges: NormalizationRanges<T>,
    metadata: ModelMetadata,
}

/// Fresh 13-50-1 model with zero biases and weights drawn i.i.d. uniform
/// on `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
///
/// The draw order is fixed (hidden rows first, then output weights) and
/// the generator is ChaCha8 seeded with `seed`, so a given seed always
/// produces bit-identical models.
pub fn init_model<T: Scalar>(
    seed: u64,
    ranges: NormalizationRanges<T>,
    metadata: ModelMetadata,
) -> MlpModel<T> {
    assert_eq!(
        ranges.len(),
        INPUT_DIM,
        "initialization requires one range per input feature"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden_bound = 1.0 / (INPUT_DIM as f64).sqrt();
    let output_bound = 1.0 / (HIDDEN_DIM as f64).sqrt();
    let hidden_weights = (0..INPUT_DIM * HIDDEN_DIM)
        .map(|_| from_f64(rng.random_range(-hidden_bound..=hidden_bound)))
        .collect();
    let output_weights = (0..HIDDEN_DIM)
        .map(|_| from_f64(rng.random_range(-output_bound..=output_bound)))
        .collect();
    MlpModel {
        input_dim: INPUT_DIM,
        hidden_dim: HIDDEN_DIM,
        hidden_weights,
        hidden_biases: vec![T::zero(); HIDDEN_DIM],
        output_weights,
        output_bias: T::zero(),
        ranges,
        metadata,
    }
}

impl<T: Scalar> MlpModel<T> {
    /// Assemble a model from explicit parameters. Dimensions are inferred
    /// from the buffer lengths; all parameters must be finite.
    pub fn from_parts(
        hidden_weights: Vec<T>,
        hidden_biases: Vec<T>,
        output_weights: Vec<T>,
        output_bias: T,
        ranges: NormalizationRanges<T>,
        metadata: ModelMetadata,
    ) -> Result<Self, MlpError> {
        let hidden_dim = hidden_biases.len();
        if hidden_dim == 0 {
            return Err(MlpError::Shape("need at least one hidden unit".into()));
        }
        if output_weights.len() != hidden_dim {
            return Err(MlpError::Shape(format!(
                "{} output weights for {hidden_dim} hidden units",
                output_weights.len()
            )));
        }
        if hidden_weights.is_empty() || !hidden_weights.len().is_multiple_of(hidden_dim) {
            return Err(MlpError::Shape(format!(
                "{} hidden weights do not tile {hidden_dim} rows",
                hidden_weights.len()
            )));
        }
        let input_dim = hidden_weights.len() / hidden_dim;
        if ranges.len() != input_dim {
            return Err(MlpError::Shape(format!(
                "{} normalization ranges for {input_dim} inputs",
                ranges.len()
            )));
        }
        for (field, values) in [
            ("hidden_weights", &hidden_weights),
            ("hidden_biases", &hidden_biases),
            ("output_weights", &output_weights),
        ] {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(MlpError::NonFiniteParam { field });
            }
        }
        if !output_bias.is_finite() {
            return Err(MlpError::NonFiniteParam {
                field: "output_bias",
            });
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            hidden_weights,
            hidden_biases,
            output_weights,
            output_bias,
            ranges,
            metadata,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn hidden_weights(&self) -> &[T] {
        &self.hidden_weights
    }

    pub fn hidden_biases(&self) -> &[T] {
        &self.hidden_biases
    }

    pub fn output_weights(&self) -> &[T] {
        &self.output_weights
    }

    pub fn output_bias(&self) -> T {
        self.output_bias
    }

    pub fn ranges(&self) -> &NormalizationRanges<T> {
        &self.ranges
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    /// `tanh(W2 · tanh(W1 x + b1) + b2)` for an already-normalized input.
    pub fn forward(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.input_dim, "input width mismatch");
        let mut out = self.output_bias;
        for j in 0..self.hidden_dim {
            let row = &self.hidden_weights[j * self.input_dim..(j + 1) * self.input_dim];
            let mut z = self.hidden_biases[j];
            for (w, v) in row.iter().zip(x) {
                z += *w * *v;
            }
            out += self.output_weights[j] * z.tanh();
        }
        out.tanh()
    }

    /// Sum of squared errors over the batch.
    pub fn sse(&self, batch: &[TrainSample<T>]) -> Result<T, MlpError> {
        self.check_batch(batch)?;
        Ok(self.sse_unchecked(batch))
    }

    /// Analytic SSE gradient for every weight and bias.
    pub fn gradient(&self, batch: &[TrainSample<T>]) -> Result<Gradient<T>, MlpError> {
        self.check_batch(batch)?;
        Ok(self.gradient_unchecked(batch))
    }

    /// Normalize a raw descriptor with the stored ranges and threshold the
    /// network output at zero (a score of exactly zero counts as skin).
    pub fn classify(&self, features: &FeatureVector<T>) -> Classification<T> {
        assert_eq!(
            self.input_dim, FEATURE_LEN,
            "classification requires a {FEATURE_LEN}-input model"
        );
        let x = self.ranges.normalize_slice(features.as_slice());
        let score = self.forward(&x);
        let label = if score >= T::zero() {
            Label::Skin
        } else {
            Label::NonSkin
        };
        Classification { label, score }
    }

    /// Full-batch gradient descent with adaptive learning rate.
    ///
    /// Per epoch the tentative step is `θ' = θ - lr·∇SSE(θ)`. A step whose
    /// SSE exceeds `max_sse_growth` times the current SSE is rejected and
    /// the rate shrinks; otherwise the step is kept, and a strict
    /// improvement grows the rate. Stops at `sse_goal` or `max_epochs`.
    pub fn train(
        self,
        batch: &[TrainSample<T>],
        cfg: &TrainConfig<T>,
    ) -> Result<(Self, TrainTrace<T>), TrainError<T>> {
        cfg.validate()?;
        self.check_batch(batch)?;
        let mut trace = TrainTrace {
            records: Vec::new(),
            stop: StopReason::MaxEpochs,
        };
        let mut model = self;
        let mut sse_current = model.sse_unchecked(batch);
        if !sse_current.is_finite() {
            return Err(TrainError::Diverged {
                epoch: 0,
                quantity: "sse",
                trace,
            });
        }
        if sse_current <= cfg.sse_goal {
            trace.stop = StopReason::GoalReached;
            return Ok((model, trace));
        }
        let mut lr = cfg.lr_initial;
        // The gradient of a rejected epoch is still the gradient of the
        // unchanged parameters, so keep it for the retry.
        let mut retry_gradient: Option<Gradient<T>> = None;
        for epoch in 1..=cfg.max_epochs {
            let gradient = match retry_gradient.take() {
                Some(g) => g,
                None => model.gradient_unchecked(batch),
            };
            if !gradient.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    quantity: "gradient",
                    trace,
                });
            }
            let candidate = model.stepped(&gradient, lr);
            let sse_new = candidate.sse_unchecked(batch);
            if !sse_new.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    quantity: "sse",
                    trace,
                });
            }
            let step_lr = lr;
            let accepted = sse_new <= cfg.max_sse_growth * sse_current;
            if accepted {
                if sse_new < sse_current {
                    lr = (lr * cfg.lr_increase).min(cfg.lr_max);
                }
                model = candidate;
                sse_current = sse_new;
            } else {
                lr = (lr * cfg.lr_decrease).max(cfg.lr_min);
                retry_gradient = Some(gradient);
            }
            trace.records.push(EpochRecord {
                epoch,
                sse: sse_current,
                lr: step_lr,
                accepted,
            });
            if sse_current <= cfg.sse_goal {
                trace.stop = StopReason::GoalReached;
                break;
            }
        }
        Ok((model, trace))
    }

    fn check_batch(&self, batch: &[TrainSample<T>]) -> Result<(), MlpError> {
        if batch.is_empty() {
            return Err(MlpError::EmptyBatch);
        }
        for (index, sample) in batch.iter().enumerate() {
            if sample.input.len() != self.input_dim {
                return Err(MlpError::SampleDimension {
                    index,
                    got: sample.input.len(),
                    expected: self.input_dim,
                });
            }
        }
        Ok(())
    }

    fn sse_unchecked(&self, batch: &[TrainSample<T>]) -> T {
        batch
            .iter()
            .map(|s| {
                let e = s.target - self.forward(&s.input);
                e * e
            })
            .sum()
    }

    fn gradient_unchecked(&self, batch: &[TrainSample<T>]) -> Gradient<T> {
        let mut g = Gradient::zeros(self.input_dim, self.hidden_dim);
        let mut hidden = vec![T::zero(); self.hidden_dim];
        let two = from_f64::<T>(2.0);
        for sample in batch {
            let mut z2 = self.output_bias;
            for (j, slot) in hidden.iter_mut().enumerate() {
                let row = &self.hidden_weights[j * self.input_dim..(j + 1) * self.input_dim];
                let mut z = self.hidden_biases[j];
                for (w, v) in row.iter().zip(&sample.input) {
                    z += *w * *v;
                }
                let h = z.tanh();
                *slot = h;
                z2 += self.output_weights[j] * h;
            }
            let y = z2.tanh();
            // d/dz2 of (t - tanh(z2))^2, with tanh' = 1 - tanh^2
            let delta_out = -two * (sample.target - y) * (T::one() - y * y);
            g.output_bias += delta_out;
            for (j, &h) in hidden.iter().enumerate() {
                g.output_weights[j] += delta_out * h;
                let delta_h = delta_out * self.output_weights[j] * (T::one() - h * h);
                g.hidden_biases[j] += delta_h;
                let row = &mut g.hidden_weights[j * self.input_dim..(j + 1) * self.input_dim];
                for (gw, v) in row.iter_mut().zip(&sample.input) {
                    *gw += delta_h * *v;
                }
            }
        }
        g
    }

    fn stepped(&self, g: &Gradient<T>, lr: T) -> Self {
        let mut next = self.clone();
        for (w, gw) in next.hidden_weights.iter_mut().zip(&g.hidden_weights) {
            *w -= lr * *gw;
        }
        for (b, gb) in next.hidden_biases.iter_mut().zip(&g.hidden_biases) {
            *b -= lr * *gb;
        }
        for (w, gw) in next.output_weights.iter_mut().zip(&g.output_weights) {
            *w -= lr * *gw;
        }
        next.output_bias -= lr * g.output_bias;
        next
    }
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("malformed model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("non-finite value in {field}")]
    NonFinite { field: &'static str },
    #[error("unsupported activation {found:?} (expected {ACTIVATION:?})")]
    Activation { found: String },
    #[error("unexpected feature order tag {found:?}")]
    FeatureOrder { found: String },
    #[error("invalid metadata: {0}")]
    Metadata(String),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    dims: Vec<usize>,
    activation: String,
    hidden_weights: Vec<f64>,
    hidden_biases: Vec<f64>,
    output_weights: Vec<f64>,
    output_bias: f64,
    ranges: Vec<(f64, f64)>,
    metadata: ModelMetadata,
}

/// JSON formatter that writes every real with 17 significant digits, so a
/// reloaded double is bit-identical to the one saved.
struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }
}

impl MlpModel<f64> {
    /// Serialize as the versioned JSON model document.
    pub fn save(&self) -> Vec<u8> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            dims: vec![self.input_dim, self.hidden_dim, 1],
            activation: ACTIVATION.to_owned(),
            hidden_weights: self.hidden_weights.clone(),
            hidden_biases: self.hidden_biases.clone(),
            output_weights: self.output_weights.clone(),
            output_bias: self.output_bias,
            ranges: self.ranges.pairs().to_vec(),
            metadata: self.metadata.clone(),
        };
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitFormatter);
        file.serialize(&mut ser)
            .expect("in-memory model serialization cannot fail");
        buf.push(b'\n');
        buf
    }

    /// Parse and validate a model document. Only 13-50-1 tanh models with
    /// the frozen feature order are accepted.
    pub fn load(bytes: &[u8]) -> Result<Self, ModelFileError> {
        let value: serde_json::Value = serde_json::from_slice(bytes)?;
        if let Some(found) = value.get("format_version").and_then(|v| v.as_u64()) {
            if found != u64::from(MODEL_FORMAT_VERSION) {
                return Err(ModelFileError::Version {
                    found,
                    expected: MODEL_FORMAT_VERSION,
                });
            }
        }
        let file: ModelFile = serde_json::from_value(value)?;
        if file.dims != [INPUT_DIM, HIDDEN_DIM, 1] {
            return Err(ModelFileError::Dimensions(format!(
                "file declares {:?}, expected [{INPUT_DIM}, {HIDDEN_DIM}, 1]",
                file.dims
            )));
        }
        if file.activation != ACTIVATION {
            return Err(ModelFileError::Activation {
                found: file.activation,
            });
        }
        let expect_len = |field: &'static str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(ModelFileError::Dimensions(format!(
                    "{field} holds {got} values, expected {want}"
                )))
            }
        };
        expect_len(
            "hidden_weights",
            file.hidden_weights.len(),
            INPUT_DIM * HIDDEN_DIM,
        )?;
        expect_len("hidden_biases", file.hidden_biases.len(), HIDDEN_DIM)?;
        expect_len("output_weights", file.output_weights.len(), HIDDEN_DIM)?;
        expect_len("ranges", file.ranges.len(), INPUT_DIM)?;
        for (field, values) in [
            ("hidden_weights", &file.hidden_weights),
            ("hidden_biases", &file.hidden_biases),
            ("output_weights", &file.output_weights),
        ] {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(ModelFileError::NonFinite { field });
            }
        }
        if !file.output_bias.is_finite() {
            return Err(ModelFileError::NonFinite {
                field: "output_bias",
            });
        }
        if file
            .ranges
            .iter()
            .any(|(lo, hi)| !lo.is_finite() || !hi.is_finite())
        {
            return Err(ModelFileError::NonFinite { field: "ranges" });
        }
        if file.metadata.feature_order != FEATURE_ORDER {
            return Err(ModelFileError::FeatureOrder {
                found: file.metadata.feature_order,
            });
        }
        if !(2..=256).contains(&file.metadata.levels) {
            return Err(ModelFileError::Metadata(format!(
                "gray level count {} outside 2..=256",
                file.metadata.levels
            )));
        }
        let ranges = NormalizationRanges::new(file.ranges)
            .map_err(|e: FeatureError| ModelFileError::Metadata(e.to_string()))?;
        MlpModel::from_parts(
            file.hidden_weights,
            file.hidden_biases,
            file.output_weights,
            file.output_bias,
            ranges,
            file.metadata,
        )
        .map_err(|e| ModelFileError::Metadata(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ranges(n: usize) -> NormalizationRanges<f64> {
        NormalizationRanges::new(vec![(-1.0, 1.0); n]).unwrap()
    }

    /// Minimal 1-1-1 network: y = tanh(w2 * tanh(w1 * x + b1) + b2).
    fn tiny(w1: f64, b1: f64, w2: f64, b2: f64) -> MlpModel<f64> {
        MlpModel::from_parts(
            vec![w1],
            vec![b1],
            vec![w2],
            b2,
            unit_ranges(1),
            ModelMetadata::default(),
        )
        .unwrap()
    }

    fn zero_13_50_1() -> MlpModel<f64> {
        MlpModel::from_parts(
            vec![0.0; INPUT_DIM * HIDDEN_DIM],
            vec![0.0; HIDDEN_DIM],
            vec![0.0; HIDDEN_DIM],
            0.0,
            unit_ranges(INPUT_DIM),
            ModelMetadata::default(),
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init_model::<f64>(42, unit_ranges(INPUT_DIM), ModelMetadata::default());
        let b = init_model::<f64>(42, unit_ranges(INPUT_DIM), ModelMetadata::default());
        assert_eq!(a, b);
        let c = init_model::<f64>(43, unit_ranges(INPUT_DIM), ModelMetadata::default());
        assert_ne!(a.hidden_weights(), c.hidden_weights());
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let m = init_model::<f64>(7, unit_ranges(INPUT_DIM), ModelMetadata::default());
        let hb = 1.0 / (INPUT_DIM as f64).sqrt();
        let ob = 1.0 / (HIDDEN_DIM as f64).sqrt();
        assert!(m.hidden_weights().iter().all(|w| w.abs() <= hb));
        assert!(m.output_weights().iter().all(|w| w.abs() <= ob));
        assert!(m.hidden_biases().iter().all(|&b| b == 0.0));
        assert_eq!(m.output_bias(), 0.0);
    }

    #[test]
    fn forward_of_zero_model_is_zero() {
        let m = zero_13_50_1();
        assert_eq!(m.forward(&[0.3; INPUT_DIM]), 0.0);
    }

    #[test]
    fn forward_composes_tanh_layers() {
        let m = tiny(0.5, 0.0, 1.0, 0.0);
        let want = 0.5f64.tanh().tanh();
        assert!((m.forward(&[1.0]) - want).abs() < 1e-15);
        assert!((want - 0.43181).abs() < 1e-5);
    }

    #[test]
    fn forward_stays_inside_the_open_unit_interval() {
        let m = init_model::<f64>(3, unit_ranges(INPUT_DIM), ModelMetadata::default());
        for k in 0..50 {
            let x = [(k as f64 - 25.0) / 5.0; INPUT_DIM];
            let y = m.forward(&x);
            assert!(y > -1.0 && y < 1.0);
        }
    }

    #[test]
    fn sse_counts_unit_errors() {
        let m = zero_13_50_1();
        let one = TrainSample {
            input: vec![0.0; INPUT_DIM],
            target: 1.0,
        };
        assert_eq!(m.sse(std::slice::from_ref(&one)).unwrap(), 1.0);
        let batch: Vec<_> = (0..6)
            .map(|i| TrainSample {
                input: vec![0.0; INPUT_DIM],
                target: if i % 2 == 0 { 1.0 } else { -1.0 },
            })
            .collect();
        assert_eq!(m.sse(&batch).unwrap(), 6.0);
    }

    #[test]
    fn sse_is_zero_when_outputs_match_targets() {
        // Saturated output: tanh(100) is exactly 1.0 in double precision.
        let m = tiny(0.0, 0.0, 0.0, 100.0);
        let batch = [TrainSample {
            input: vec![0.0],
            target: 1.0,
        }];
        assert_eq!(m.sse(&batch).unwrap(), 0.0);
        let g = m.gradient(&batch).unwrap();
        assert!(g.hidden_weights.iter().all(|&v| v == 0.0));
        assert_eq!(g.output_bias, 0.0);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let m = zero_13_50_1();
        assert!(matches!(m.sse(&[]), Err(MlpError::EmptyBatch)));
        assert!(matches!(m.gradient(&[]), Err(MlpError::EmptyBatch)));
    }

    #[test]
    fn duplicating_the_batch_doubles_the_gradient() {
        let m = init_model::<f64>(5, unit_ranges(INPUT_DIM), ModelMetadata::default());
        let sample = TrainSample {
            input: (0..INPUT_DIM).map(|i| (i as f64) / 13.0 - 0.5).collect(),
            target: 1.0,
        };
        let single = m.gradient(std::slice::from_ref(&sample)).unwrap();
        let double = m.gradient(&[sample.clone(), sample]).unwrap();
        for (s, d) in single.hidden_weights.iter().zip(&double.hidden_weights) {
            assert_eq!(*d, 2.0 * *s);
        }
        assert_eq!(double.output_bias, 2.0 * single.output_bias);
    }

    #[test]
    fn gradient_matches_finite_differences_on_a_tiny_model() {
        let m = tiny(0.4, -0.1, 0.8, 0.2);
        let batch = [
            TrainSample {
                input: vec![0.7],
                target: 1.0,
            },
            TrainSample {
                input: vec![-0.3],
                target: -1.0,
            },
        ];
        let g = m.gradient(&batch).unwrap();
        let eps = 1e-6;
        let f = |w1: f64| tiny(w1, -0.1, 0.8, 0.2).sse(&batch).unwrap();
        let fd = (f(0.4 + eps) - f(0.4 - eps)) / (2.0 * eps);
        assert!(
            (g.hidden_weights[0] - fd).abs() <= 1e-7 * fd.abs().max(1.0),
            "{} vs {fd}",
            g.hidden_weights[0]
        );
    }

    #[test]
    fn classify_breaks_ties_toward_skin() {
        let m = zero_13_50_1();
        let c = m.classify(&FeatureVector([0.0; FEATURE_LEN]));
        assert_eq!(c.score, 0.0);
        assert_eq!(c.label, Label::Skin);
    }

    #[test]
    fn classify_follows_the_score_sign() {
        let pos = MlpModel::from_parts(
            vec![0.0; INPUT_DIM * HIDDEN_DIM],
            vec![0.0; HIDDEN_DIM],
            vec![0.0; HIDDEN_DIM],
            1.2,
            unit_ranges(INPUT_DIM),
            ModelMetadata::default(),
        )
        .unwrap();
        let c = pos.classify(&FeatureVector([0.0; FEATURE_LEN]));
        assert_eq!(c.label, Label::Skin);
        assert!(c.score > 0.0);

        let neg = MlpModel::from_parts(
            vec![0.0; INPUT_DIM * HIDDEN_DIM],
            vec![0.0; HIDDEN_DIM],
            vec![0.0; HIDDEN_DIM],
            -1.5,
            unit_ranges(INPUT_DIM),
            ModelMetadata::default(),
        )
        .unwrap();
        assert_eq!(
            neg.classify(&FeatureVector([0.0; FEATURE_LEN])).label,
            Label::NonSkin
        );
    }

    #[test]
    fn scaling_the_output_layer_keeps_the_label() {
        let m = init_model::<f64>(11, unit_ranges(INPUT_DIM), ModelMetadata::default());
        let features = FeatureVector([0.25; FEATURE_LEN]);
        let base = m.classify(&features).label;
        for lambda in [0.01, 0.5, 3.0, 250.0] {
            let scaled = MlpModel::from_parts(
                m.hidden_weights().to_vec(),
                m.hidden_biases().to_vec(),
                m.output_weights().iter().map(|w| w * lambda).collect(),
                m.output_bias() * lambda,
                unit_ranges(INPUT_DIM),
                ModelMetadata::default(),
            )
            .unwrap();
            assert_eq!(scaled.classify(&features).label, base);
        }
    }

    #[test]
    fn train_returns_immediately_at_the_goal() {
        let m = tiny(0.0, 0.0, 0.0, 100.0);
        let batch = [TrainSample {
            input: vec![0.0],
            target: 1.0,
        }];
        let (_, trace) = m.train(&batch, &TrainConfig::default()).unwrap();
        assert_eq!(trace.stop, StopReason::GoalReached);
        assert_eq!(trace.epochs_run(), 0);
        assert_eq!(trace.accepted_steps(), 0);
    }

    #[test]
    fn train_solves_a_two_sample_separable_batch() {
        let ranges = unit_ranges(INPUT_DIM);
        let m = init_model::<f64>(1, ranges, ModelMetadata::default());
        let mut a = vec![0.0; INPUT_DIM];
        let mut b = vec![0.0; INPUT_DIM];
        a[0] = 0.9;
        b[0] = -0.9;
        let batch = [
            TrainSample {
                input: a,
                target: 1.0,
            },
            TrainSample {
                input: b,
                target: -1.0,
            },
        ];
        let cfg = TrainConfig::default();
        let (model, trace) = m.train(&batch, &cfg).unwrap();
        assert_eq!(trace.stop, StopReason::GoalReached);
        assert!(model.sse(&batch).unwrap() <= 1e-6);
        assert!(trace.epochs_run() <= 50_000);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let batch: Vec<TrainSample<f64>> = (0..8)
            .map(|i| TrainSample {
                input: (0..INPUT_DIM)
                    .map(|k| ((i * 13 + k * 7) % 19) as f64 / 19.0 - 0.5)
                    .collect(),
                target: if i % 2 == 0 { 1.0 } else { -1.0 },
            })
            .collect();
        let cfg = TrainConfig {
            max_epochs: 500,
            ..TrainConfig::default()
        };
        let run = || {
            init_model::<f64>(9, unit_ranges(INPUT_DIM), ModelMetadata::default())
                .train(&batch, &cfg)
                .unwrap()
        };
        let (m1, t1) = run();
        let (m2, t2) = run();
        assert_eq!(t1, t2);
        let bits = |m: &MlpModel<f64>| {
            m.hidden_weights()
                .iter()
                .chain(m.hidden_biases())
                .chain(m.output_weights())
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&m1), bits(&m2));
        assert_eq!(m1.output_bias().to_bits(), m2.output_bias().to_bits());
    }

    #[test]
    fn trace_respects_rate_bounds_and_growth_gate() {
        let batch: Vec<TrainSample<f64>> = (0..6)
            .map(|i| TrainSample {
                input: (0..INPUT_DIM)
                    .map(|k| ((i * 5 + k * 3) % 11) as f64 / 11.0 - 0.5)
                    .collect(),
                target: if i % 2 == 0 { 1.0 } else { -1.0 },
            })
            .collect();
        let cfg = TrainConfig {
            max_epochs: 2_000,
            lr_initial: 0.5,
            ..TrainConfig::default()
        };
        let (_, trace) = init_model::<f64>(4, unit_ranges(INPUT_DIM), ModelMetadata::default())
            .train(&batch, &cfg)
            .unwrap();
        let mut last_sse = f64::INFINITY;
        for record in &trace.records {
            assert!(record.lr >= cfg.lr_min && record.lr <= cfg.lr_max);
            assert!(record.sse >= 0.0);
            if last_sse.is_finite() {
                assert!(record.sse <= cfg.max_sse_growth * last_sse + 1e-12);
            }
            last_sse = record.sse;
        }
        // At least one step of each kind shows the adaptive rule fired.
        assert!(trace.accepted_steps() > 0);
    }

    #[test]
    fn train_reports_divergence_with_the_trace() {
        let m = tiny(0.5, 0.0, 1.0, 0.0);
        let batch = [
            TrainSample {
                input: vec![0.0],
                target: 1.0,
            },
            TrainSample {
                input: vec![1.0],
                target: -1.0,
            },
        ];
        let cfg = TrainConfig {
            lr_initial: 1e308,
            lr_max: f64::MAX,
            max_sse_growth: 1e30,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        match m.train(&batch, &cfg) {
            Err(TrainError::Diverged { quantity, .. }) => {
                assert!(quantity == "sse" || quantity == "gradient");
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_rates() {
        let bad = [
            TrainConfig::<f64> {
                lr_increase: 0.9,
                ..TrainConfig::default()
            },
            TrainConfig::<f64> {
                max_sse_growth: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig::<f64> {
                lr_initial: 20.0,
                ..TrainConfig::default()
            },
            TrainConfig::<f64> {
                sse_goal: 0.0,
                ..TrainConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(MlpError::Config(_))));
        }
        assert!(TrainConfig::<f64>::default().validate().is_ok());
    }

    #[test]
    fn forward_works_in_single_precision() {
        let m = MlpModel::<f32>::from_parts(
            vec![0.5],
            vec![0.0],
            vec![1.0],
            0.0,
            NormalizationRanges::new(vec![(-1.0f32, 1.0)]).unwrap(),
            ModelMetadata::default(),
        )
        .unwrap();
        let want = 0.5f32.tanh().tanh();
        assert!((m.forward(&[1.0]) - want).abs() < 1e-6);
    }

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let m = init_model::<f64>(123, unit_ranges(INPUT_DIM), ModelMetadata::default());
        let loaded = MlpModel::load(&m.save()).unwrap();
        assert_eq!(loaded, m);
        for k in 0..20 {
            let v = FeatureVector([(k as f64) / 7.0 - 1.3; FEATURE_LEN]);
            let a = m.classify(&v);
            let b = loaded.classify(&v);
            assert_eq!(a.score.to_bits(), b.score.to_bits());
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn load_rejects_wrong_version() {
        let m = init_model::<f64>(1, unit_ranges(INPUT_DIM), ModelMetadata::default());
        let mut doc: serde_json::Value = serde_json::from_slice(&m.save()).unwrap();
        doc["format_version"] = serde_json::json!(99);
        let bytes = serde_json::to_vec(&doc).unwrap();
        assert!(matches!(
            MlpModel::load(&bytes),
            Err(ModelFileError::Version { found: 99, .. })
        ));
    }

    #[test]
    fn load_rejects_wrong_hidden_size() {
        let m = init_model::<f64>(1, unit_ranges(INPUT_DIM), ModelMetadata::default());
        let mut doc: serde_json::Value = serde_json::from_slice(&m.save()).unwrap();
        doc["dims"] = serde_json::json!([13, 49, 1]);
        let bytes = serde_json::to_vec(&doc).unwrap();
        assert!(matches!(
            MlpModel::load(&bytes),
            Err(ModelFileError::Dimensions(_))
        ));
    }

    #[test]
    fn load_rejects_wrong_feature_order() {
        let m = init_model::<f64>(1, unit_ranges(INPUT_DIM), ModelMetadata::default());
        let mut doc: serde_json::Value = serde_json::from_slice(&m.save()).unwrap();
        doc["metadata"]["feature_order"] = serde_json::json!("something,else");
        let bytes = serde_json::to_vec(&doc).unwrap();
        assert!(matches!(
            MlpModel::load(&bytes),
            Err(ModelFileError::FeatureOrder { .. })
        ));
    }

    #[test]
    fn load_rejects_non_finite_values() {
        let m = init_model::<f64>(1, unit_ranges(INPUT_DIM), ModelMetadata::default());
        let text = String::from_utf8(m.save()).unwrap();
        // Out-of-range literals overflow to infinity when parsed back.
        let poisoned = text.replacen(
            "\"output_bias\":0.0000000000000000e0",
            "\"output_bias\":1e999",
            1,
        );
        assert_ne!(text, poisoned, "fixture must actually replace the bias");
        match MlpModel::load(poisoned.as_bytes()) {
            Err(ModelFileError::NonFinite { field }) => assert_eq!(field, "output_bias"),
            Err(ModelFileError::Parse(_)) => {} // also acceptable: parser refuses the literal
            other => panic!("expected a rejection, got {other:?}"),
        }
    }

    #[test]
    fn model_file_is_valid_json_with_17_digit_reals() {
        let m = init_model::<f64>(6, unit_ranges(INPUT_DIM), ModelMetadata::default());
        let bytes = m.save();
        let doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(doc["activation"], "tanh");
        let text = String::from_utf8(bytes).unwrap();
        // Spot-check the fixed-width mantissa format.
        assert!(text.contains("e-"), "expected scientific notation: {text}");
        let w = doc["hidden_weights"][0].as_f64().unwrap();
        assert_eq!(w, m.hidden_weights()[0]);
    }
}
