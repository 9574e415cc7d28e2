//! `skintex` — feature extraction, training, classification, evaluation,
//! and synthetic-corpus generation for skin texture recognition.
//!
//! Machine-readable output (feature vectors, classifications, reports)
//! goes to stdout; warnings and errors go to stderr. Exit codes: 0 on
//! success, 1 on a processing failure, 2 on a usage error (bad flags or
//! a nonexistent input path).

use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skintex_core::features::{extract_features, Displacement};
use skintex_core::image::decode_ppm;
use skintex_core::mlp::{Classification, MlpError, MlpModel, TrainError};
use skintex_core::pipeline::{
    evaluate, ingest, render_feature_dump, synth_corpus, train_pipeline, ExtractionParams,
    PipelineError,
};
use skintex_core::{FeatureVector64, MlpModel64, TrainConfig64};

#[derive(Parser)]
#[command(
    name = "skintex",
    version,
    about = "Skin/non-skin texture classification from color and co-occurrence statistics",
    after_help = "Exit codes: 0 success, 1 processing failure, 2 usage error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExtractionFlags {
    /// Co-occurrence displacement as "dx,dy"
    #[arg(long, default_value = "1,0", value_parser = parse_displacement)]
    displacement: Displacement,
    /// Gray levels for the co-occurrence matrix (2..=256)
    #[arg(long, default_value_t = 256, value_parser = parse_levels)]
    levels: usize,
}

impl ExtractionFlags {
    fn params(&self) -> ExtractionParams {
        ExtractionParams {
            displacement: self.displacement,
            levels: self.levels,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the 13-element feature vector of a PPM image
    Extract {
        image: PathBuf,
        #[command(flatten)]
        extraction: ExtractionFlags,
    },
    /// Train a model on a dataset with skin/ and nonskin/ subdirectories
    Train {
        /// Dataset root
        #[arg(long)]
        data: PathBuf,
        /// Where to write the model file
        #[arg(long)]
        out: PathBuf,
        /// Weight-initialization seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop once the batch SSE reaches this goal
        #[arg(long, default_value_t = 1e-6)]
        goal: f64,
        #[arg(long, default_value_t = 50_000)]
        max_epochs: usize,
        /// Initial learning rate
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        /// Rate multiplier after an improving step
        #[arg(long, default_value_t = 1.05)]
        lr_increase: f64,
        /// Rate multiplier after a rejected step
        #[arg(long, default_value_t = 0.7)]
        lr_decrease: f64,
        /// Reject steps growing the SSE beyond this factor
        #[arg(long, default_value_t = 1.04)]
        max_sse_growth: f64,
        #[arg(long, default_value_t = 1e-9)]
        lr_min: f64,
        #[arg(long, default_value_t = 10.0)]
        lr_max: f64,
        /// Also write the training-set features as a CSV dump
        #[arg(long)]
        dump_features: Option<PathBuf>,
        #[command(flatten)]
        extraction: ExtractionFlags,
    },
    /// Classify images with a trained model (one line per image)
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Evaluate a model on a labeled dataset and print the confusion report
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Emit the report as JSON instead of text
        #[arg(long)]
        json: bool,
    },
    /// Generate a deterministic synthetic two-class corpus
    Synth {
        /// Corpus root; skin/ and nonskin/ are created beneath it
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "per-class", default_value_t = 50)]
        per_class: usize,
        /// Square patch edge in pixels
        #[arg(long, default_value_t = 80)]
        size: usize,
    },
}

enum Failure {
    /// Bad flags or a nonexistent input path: exit 2.
    Usage(String),
    /// Valid request that could not be processed: exit 1.
    Runtime(String),
    /// Diagnostics already on stderr; just carry the code.
    Reported(u8),
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Usage(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            Failure::Runtime(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
            Failure::Reported(code) => ExitCode::from(code),
        }
    }
}

fn parse_displacement(s: &str) -> Result<Displacement, String> {
    let (dx, dy) = s
        .split_once(',')
        .ok_or_else(|| format!("expected \"dx,dy\", got {s:?}"))?;
    let dx: i32 = dx.trim().parse().map_err(|e| format!("bad dx: {e}"))?;
    let dy: i32 = dy.trim().parse().map_err(|e| format!("bad dy: {e}"))?;
    Displacement::new(dx, dy).map_err(|e| e.to_string())
}

fn parse_levels(s: &str) -> Result<usize, String> {
    let levels: usize = s.parse().map_err(|e| format!("{e}"))?;
    if (2..=256).contains(&levels) {
        Ok(levels)
    } else {
        Err(format!("gray levels must lie in 2..=256 (got {levels})"))
    }
}

/// Read a user-supplied path; a missing file is a usage error.
fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        if e.kind() == ErrorKind::NotFound {
            Failure::Usage(msg)
        } else {
            Failure::Runtime(msg)
        }
    })
}

fn load_model(path: &Path) -> Result<MlpModel64, Failure> {
    let bytes = read_input(path)?;
    MlpModel::load(&bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn pipeline_failure(err: PipelineError) -> Failure {
    match err {
        PipelineError::MissingClassDir(_)
        | PipelineError::BadCorpusCount
        | PipelineError::BadCorpusSize(_) => Failure::Usage(err.to_string()),
        PipelineError::Train(TrainError::Invalid(MlpError::Config(_))) => {
            Failure::Usage(err.to_string())
        }
        other => Failure::Runtime(other.to_string()),
    }
}

fn format_features(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn extract_one(params: &ExtractionParams, path: &Path) -> Result<FeatureVector64, Failure> {
    let bytes = read_input(path)?;
    let img =
        decode_ppm(&bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    extract_features(&img, params.displacement, params.levels)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_extract(image: &Path, extraction: &ExtractionFlags) -> Result<(), Failure> {
    let features = extract_one(&extraction.params(), image)?;
    println!("{}", format_features(features.as_slice()));
    Ok(())
}

fn cmd_train(
    data: &Path,
    out: &Path,
    cfg: TrainConfig64,
    dump_features: Option<&Path>,
    extraction: &ExtractionFlags,
) -> Result<(), Failure> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let params = extraction.params();
    let (samples, warnings) = ingest(data, &params).map_err(pipeline_failure)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = dump_features {
        std::fs::write(path, render_feature_dump(&samples))
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    }
    let (model, trace) = train_pipeline(&samples, &params, &cfg).map_err(pipeline_failure)?;
    std::fs::write(out, model.save())
        .map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    let final_sse = match trace.final_sse() {
        Some(sse) => format!("{sse:.6e}"),
        None => "at goal before the first step".into(),
    };
    println!(
        "trained on {} samples: {} epochs ({}), {} accepted steps, final sse {}",
        samples.len(),
        trace.epochs_run(),
        trace.stop,
        trace.accepted_steps(),
        final_sse
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_classify(model_path: &Path, images: &[PathBuf]) -> Result<(), Failure> {
    let model = load_model(model_path)?;
    let params = ExtractionParams::from_metadata(model.metadata());
    let mut saw_usage = false;
    let mut saw_runtime = false;
    for image in images {
        match extract_one(&params, image) {
            Ok(features) => {
                let Classification { label, score } = model.classify(&features);
                println!("{}\t{}\t{:.16e}", image.display(), label, score);
            }
            Err(Failure::Usage(msg)) => {
                eprintln!("error: {msg}");
                saw_usage = true;
            }
            Err(Failure::Runtime(msg)) => {
                eprintln!("error: {msg}");
                saw_runtime = true;
            }
            Err(reported) => return Err(reported),
        }
    }
    if saw_usage {
        Err(Failure::Reported(2))
    } else if saw_runtime {
        Err(Failure::Reported(1))
    } else {
        Ok(())
    }
}

fn cmd_evaluate(model_path: &Path, data: &Path, json: bool) -> Result<(), Failure> {
    let model = load_model(model_path)?;
    let params = ExtractionParams::from_metadata(model.metadata());
    let (samples, warnings) = ingest(data, &params).map_err(pipeline_failure)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let report = evaluate(&model, &samples).map_err(pipeline_failure)?;
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.render_text());
    }
    Ok(())
}

fn cmd_synth(out: &Path, seed: u64, per_class: usize, size: usize) -> Result<(), Failure> {
    let written = synth_corpus(out, seed, per_class, size).map_err(pipeline_failure)?;
    println!("wrote {written} images under {}", out.display());
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Extract { image, extraction } => cmd_extract(&image, &extraction),
        Command::Train {
            data,
            out,
            seed,
            goal,
            max_epochs,
            lr,
            lr_increase,
            lr_decrease,
            max_sse_growth,
            lr_min,
            lr_max,
            dump_features,
            extraction,
        } => {
            let cfg = TrainConfig64 {
                sse_goal: goal,
                max_epochs,
                lr_initial: lr,
                lr_increase,
                lr_decrease,
                max_sse_growth,
                lr_min,
                lr_max,
                seed,
            };
            cmd_train(&data, &out, cfg, dump_features.as_deref(), &extraction)
        }
        Command::Classify { model, images } => cmd_classify(&model, &images),
        Command::Evaluate { model, data, json } => cmd_evaluate(&model, &data, json),
        Command::Synth {
            out,
            seed,
            per_class,
            size,
        } => cmd_synth(&out, seed, per_class, size),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => failure.exit(),
    }
}
