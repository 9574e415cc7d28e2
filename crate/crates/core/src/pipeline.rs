//! Dataset ingestion, training orchestration, evaluation, and the
//! deterministic synthetic corpus.
//!
//! A dataset is a directory with `skin/*.ppm` and `nonskin/*.ppm`
//! subdirectories. Everything here runs in double precision and is
//! deterministic: samples are processed in lexicographic path order and
//! all randomness is seeded.

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::features::{extract_features, fit_ranges, Displacement, FeatureError, FEATURE_ORDER};
use crate::image::{decode_ppm, encode_ppm, RgbImage};
use crate::mlp::{init_model, Label, ModelMetadata, TrainError};
use crate::num::Scalar;
use crate::{FeatureVector64, MlpModel64, TrainConfig64, TrainSample64, TrainTrace64};

/// Library patches are conventionally 80x80; other sizes are accepted
/// with a warning.
pub const EXPECTED_PATCH: usize = 80;

/// Reddish base color of the synthetic skin-like class.
pub const SYNTH_SKIN_BASE: [f64; 3] = [205.0, 150.0, 125.0];
/// Bluish base color of the synthetic non-skin class.
pub const SYNTH_NONSKIN_BASE: [f64; 3] = [125.0, 150.0, 205.0];
/// Per-pixel Gaussian noise level of the synthetic corpus.
pub const SYNTH_NOISE_SIGMA: f64 = 12.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing class directory {0}")]
    MissingClassDir(PathBuf),
    #[error("no usable images under {0}")]
    NoUsableImages(PathBuf),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set holds only {0} samples; both classes are required")]
    SingleClass(Label),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("per-class image count must be at least 1")]
    BadCorpusCount,
    #[error("corpus image size must be at least 8 pixels (got {0})")]
    BadCorpusSize(usize),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError<f64>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How images are turned into descriptors; recorded in trained models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractionParams {
    pub displacement: Displacement,
    pub levels: usize,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            displacement: Displacement::new(1, 0).expect("nonzero"),
            levels: 256,
        }
    }
}

impl ExtractionParams {
    pub fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            displacement: self.displacement,
            levels: self.levels,
            feature_order: FEATURE_ORDER.to_owned(),
        }
    }

    /// Extraction settings a trained model was built with.
    pub fn from_metadata(metadata: &ModelMetadata) -> Self {
        Self {
            displacement: metadata.displacement,
            levels: metadata.levels,
        }
    }
}

/// One ingested image: origin, class, and descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub path: PathBuf,
    pub label: Label,
    pub features: FeatureVector64,
}

/// Non-fatal ingestion findings; callers decide where to report them.
#[derive(Debug, Clone, PartialEq)]
pub enum IngestWarning {
    Skipped {
        path: PathBuf,
        reason: String,
    },
    UnexpectedSize {
        path: PathBuf,
        width: usize,
        height: usize,
    },
}

impl std::fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IngestWarning::Skipped { path, reason } => {
                write!(f, "skipped {}: {reason}", path.display())
            }
            IngestWarning::UnexpectedSize {
                path,
                width,
                height,
            } => write!(
                f,
                "{}: {width}x{height} image accepted (library patches are {EXPECTED_PATCH}x{EXPECTED_PATCH})",
                path.display()
            ),
        }
    }
}

fn class_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if !dir.is_dir() {
        return Err(PipelineError::MissingClassDir(dir.to_owned()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Load every decodable PPM under `<root>/skin` and `<root>/nonskin` and
/// extract its descriptor. Unusable files become warnings; an entirely
/// unusable class is an error. The result is sorted by path.
pub fn ingest(
    root: &Path,
    params: &ExtractionParams,
) -> Result<(Vec<LabeledSample>, Vec<IngestWarning>), PipelineError> {
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    for (subdir, label) in [("skin", Label::Skin), ("nonskin", Label::NonSkin)] {
        let dir = root.join(subdir);
        let files = class_files(&dir)?;
        let before = samples.len();
        for path in files {
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) => {
                    warnings.push(IngestWarning::Skipped {
                        path,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let img = match decode_ppm(&bytes) {
                Ok(img) => img,
                Err(e) => {
                    warnings.push(IngestWarning::Skipped {
                        path,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            if img.width() != EXPECTED_PATCH || img.height() != EXPECTED_PATCH {
                warnings.push(IngestWarning::UnexpectedSize {
                    path: path.clone(),
                    width: img.width(),
                    height: img.height(),
                });
            }
            match extract_features(&img, params.displacement, params.levels) {
                Ok(features) => samples.push(LabeledSample {
                    path,
                    label,
                    features,
                }),
                Err(e) => warnings.push(IngestWarning::Skipped {
                    path,
                    reason: e.to_string(),
                }),
            }
        }
        if samples.len() == before {
            return Err(PipelineError::NoUsableImages(dir));
        }
    }
    samples.sort_by(|a, b| a.path.cmp(&b.path));
    Ok((samples, warnings))
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_owned()
    }
}

/// Render ingested samples as a feature dump: a header line naming the
/// columns, then one record per image with its path, label, and the 13
/// descriptor values as 17-significant-digit decimals.
pub fn render_feature_dump(samples: &[LabeledSample]) -> String {
    let mut out = format!("path,label,{FEATURE_ORDER}\n");
    for sample in samples {
        out.push_str(&csv_field(&sample.path.display().to_string()));
        out.push(',');
        out.push_str(&sample.label.to_string());
        for value in sample.features.as_slice() {
            out.push_str(&format!(",{value:.16e}"));
        }
        out.push('\n');
    }
    out
}

/// Network target coding: skin trains toward +1, non-skin toward -1.
pub fn label_target<T: Scalar>(label: Label) -> T {
    match label {
        Label::Skin => T::one(),
        Label::NonSkin => -T::one(),
    }
}

/// Fit normalization ranges on the training samples, map labels to ±1
/// targets, and run the adaptive-rate trainer from a seeded start.
pub fn train_pipeline(
    samples: &[LabeledSample],
    params: &ExtractionParams,
    cfg: &TrainConfig64,
) -> Result<(MlpModel64, TrainTrace64), PipelineError> {
    if samples.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    let first = samples[0].label;
    if samples.iter().all(|s| s.label == first) {
        return Err(PipelineError::SingleClass(first));
    }
    let features: Vec<FeatureVector64> = samples.iter().map(|s| s.features).collect();
    let ranges = fit_ranges(&features)?;
    let batch: Vec<TrainSample64> = samples
        .iter()
        .map(|s| TrainSample64 {
            input: ranges.normalize_slice(s.features.as_slice()),
            target: label_target(s.label),
        })
        .collect();
    let model = init_model(cfg.seed, ranges, params.metadata());
    let (model, trace) = model.train(&batch, cfg)?;
    Ok((model, trace))
}

/// Confusion counts over an evaluation set. Skin is the positive class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub accuracy: f64,
    pub misclassified: Vec<PathBuf>,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.true_positive + self.true_negative + self.false_positive + self.false_negative
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("samples:         {}\n", self.total()));
        out.push_str(&format!("true positives:  {}\n", self.true_positive));
        out.push_str(&format!("false negatives: {}\n", self.false_negative));
        out.push_str(&format!("true negatives:  {}\n", self.true_negative));
        out.push_str(&format!("false positives: {}\n", self.false_positive));
        out.push_str(&format!("accuracy:        {:.4}\n", self.accuracy));
        if self.misclassified.is_empty() {
            out.push_str("misclassified:   none\n");
        } else {
            out.push_str("misclassified:\n");
            for path in &self.misclassified {
                out.push_str(&format!("  {}\n", path.display()));
            }
        }
        out
    }
}

/// Classify every sample and tally the confusion counts.
pub fn evaluate(
    model: &MlpModel64,
    samples: &[LabeledSample],
) -> Result<EvalReport, PipelineError> {
    if samples.is_empty() {
        return Err(PipelineError::EmptyTestSet);
    }
    let mut report = EvalReport {
        true_positive: 0,
        true_negative: 0,
        false_positive: 0,
        false_negative: 0,
        accuracy: 0.0,
        misclassified: Vec::new(),
    };
    for sample in samples {
        let predicted = model.classify(&sample.features).label;
        match (sample.label, predicted) {
            (Label::Skin, Label::Skin) => report.true_positive += 1,
            (Label::Skin, Label::NonSkin) => report.false_negative += 1,
            (Label::NonSkin, Label::NonSkin) => report.true_negative += 1,
            (Label::NonSkin, Label::Skin) => report.false_positive += 1,
        }
        if sample.label != predicted {
            report.misclassified.push(sample.path.clone());
        }
    }
    report.accuracy = (report.true_positive + report.true_negative) as f64 / samples.len() as f64;
    Ok(report)
}

/// Write a deterministic two-class corpus under `<root>/skin` and
/// `<root>/nonskin`: a reddish and a bluish base color, both with seeded
/// per-pixel Gaussian noise. Returns the number of files written.
pub fn synth_corpus(
    root: &Path,
    seed: u64,
    n_per_class: usize,
    size: usize,
) -> Result<usize, PipelineError> {
    if n_per_class == 0 {
        return Err(PipelineError::BadCorpusCount);
    }
    if size < 8 {
        return Err(PipelineError::BadCorpusSize(size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, SYNTH_NOISE_SIGMA).expect("valid sigma");
    let mut written = 0;
    for (subdir, base) in [("skin", SYNTH_SKIN_BASE), ("nonskin", SYNTH_NONSKIN_BASE)] {
        let dir = root.join(subdir);
        fs::create_dir_all(&dir)?;
        for index in 0..n_per_class {
            let pixels = (0..size * size)
                .map(|_| {
                    let mut px = [0u8; 3];
                    for (v, b) in px.iter_mut().zip(base) {
                        *v = (b + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
                    }
                    px
                })
                .collect();
            let img = RgbImage::new(size, size, pixels).expect("size validated");
            fs::write(
                dir.join(format!("{subdir}_{index:04}.ppm")),
                encode_ppm(&img),
            )?;
            written += 1;
        }
    }
    Ok(written)
}
