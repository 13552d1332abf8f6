//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 bad user input.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{self, load_directory_dataset, synth, Dataset};
use crate::error::{Error, Result};
use crate::nn::ModelSpec;
use crate::report::{self, PredictionRecord};
use crate::rng::Rng;
use crate::train::{evaluate, TrainConfig};
use crate::transfer::{self, load_checkpoint, save_checkpoint, FreezeMode, RunOutput};

#[derive(Debug, Parser)]
#[command(
    name = "signcraft",
    version,
    about = "Train and fine-tune traffic-sign CNNs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the canonical network from scratch.
    Train {
        #[command(flatten)]
        common: TrainArgs,
    },
    /// Fine-tune a pretrained checkpoint on a new dataset.
    Finetune {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, value_enum, default_value_t = FreezeArg::None)]
        freeze: FreezeArg,
        #[command(flatten)]
        common: TrainArgs,
    },
    /// Evaluate a checkpoint on a dataset directory.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Writes PREFIX_confusion.csv and PREFIX_predictions.csv.
        #[arg(long)]
        report: Option<String>,
    },
    /// Classify one PPM image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
    },
    /// Print the layer table of a checkpoint or of the canonical architecture.
    Summary {
        #[arg(
            long,
            conflicts_with = "arch_for_classes",
            required_unless_present = "arch_for_classes"
        )]
        model: Option<PathBuf>,
        #[arg(long)]
        arch_for_classes: Option<usize>,
    },
    /// Generate a synthetic sign dataset directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = DomainArg::A)]
        domain: DomainArg,
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    #[arg(long, default_value = "model.ckpt")]
    out: PathBuf,
    #[arg(long, default_value = "metrics.csv")]
    metrics: PathBuf,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed: self.seed,
            val_fraction: self.val_fraction,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FreezeArg {
    None,
    Conv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DomainArg {
    A,
    B,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return if code == 0 { 0 } else { 2 };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "data directory not found"),
        ));
    }
    Ok(())
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train { common } => cmd_train(&common, out),
        Command::Finetune {
            base,
            freeze,
            common,
        } => {
            let mode = match freeze {
                FreezeArg::None => FreezeMode::None,
                FreezeArg::Conv => FreezeMode::Conv,
            };
            cmd_finetune(&base, mode, &common, out)
        }
        Command::Evaluate {
            model,
            data,
            report,
        } => cmd_evaluate(&model, &data, report.as_deref(), out),
        Command::Predict {
            model,
            image,
            top_k,
        } => cmd_predict(&model, &image, top_k, out),
        Command::Summary {
            model,
            arch_for_classes,
        } => cmd_summary(model.as_deref(), arch_for_classes, out),
        Command::Synth {
            out: dir,
            domain,
            per_class,
            seed,
        } => {
            let classes = match domain {
                DomainArg::A => synth::domain_a(),
                DomainArg::B => synth::domain_b(),
            };
            synth::synth_generate(&classes, per_class, &mut Rng::new(seed), &dir)?;
            writeln!(
                out,
                "wrote {} images in {} classes to {}",
                classes.len() * per_class,
                classes.len(),
                dir.display()
            )
            .map_err(out_err)
        }
    }
}

fn load_data(dir: &Path) -> Result<Dataset> {
    require_dir(dir)?;
    let ds = load_directory_dataset(dir)?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(ds)
}

fn finish_run(run: RunOutput, args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    save_checkpoint(&run.checkpoint, &args.out)?;
    report::write_metrics_csv(&run.history, &args.metrics)?;
    writeln!(out, "checkpoint: {}", args.out.display()).map_err(out_err)?;
    writeln!(out, "metrics: {}", args.metrics.display()).map_err(out_err)
}

fn print_epoch(out: &mut dyn Write, m: &crate::train::EpochMetrics) {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    let _ = writeln!(
        out,
        "epoch {:>3}  loss {:.6}  acc {:.6}  val_loss {}  val_acc {}",
        m.epoch,
        m.train_loss,
        m.train_acc,
        opt(m.val_loss),
        opt(m.val_acc)
    );
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "seed: {}", args.seed).map_err(out_err)?;
    let config = args.config();
    config.validate()?;
    let ds = load_data(&args.data)?;
    writeln!(
        out,
        "loaded {} images in {} classes",
        ds.len(),
        ds.class_count()
    )
    .map_err(out_err)?;
    let run = transfer::train_from_scratch(&ds, &config, |m| print_epoch(out, m))?;
    for w in &run.split_warnings {
        writeln!(out, "warning: {w}").map_err(out_err)?;
    }
    finish_run(run, args, out)
}

fn cmd_finetune(
    base: &Path,
    freeze: FreezeMode,
    args: &TrainArgs,
    out: &mut dyn Write,
) -> Result<()> {
    writeln!(out, "seed: {}", args.seed).map_err(out_err)?;
    let config = args.config();
    config.validate()?;
    let base = load_checkpoint(base)?;
    let ds = load_data(&args.data)?;
    writeln!(
        out,
        "base head: {} classes; target: {} images in {} classes",
        base.class_names.len(),
        ds.len(),
        ds.class_count()
    )
    .map_err(out_err)?;
    let run = transfer::fine_tune(base, &ds, &config, freeze, |m| print_epoch(out, m))?;
    // frozen flags are not stored in the checkpoint, so re-apply them for display
    let mut model = run.checkpoint.model.clone();
    let selector = match freeze {
        FreezeMode::None => transfer::LayerSelector::None,
        FreezeMode::Conv => transfer::LayerSelector::ConvOnly,
    };
    transfer::set_frozen(&mut model, &selector, true)?;
    writeln!(out, "{}", model.summary()?).map_err(out_err)?;
    for w in &run.split_warnings {
        writeln!(out, "warning: {w}").map_err(out_err)?;
    }
    finish_run(run, args, out)
}

/// Lists names only in one side, or reports an ordering difference.
fn class_diff(model: &[String], data: &[String]) -> Option<String> {
    if model == data {
        return None;
    }
    let missing: Vec<&String> = model.iter().filter(|c| !data.contains(c)).collect();
    let extra: Vec<&String> = data.iter().filter(|c| !model.contains(c)).collect();
    Some(if missing.is_empty() && extra.is_empty() {
        "same classes in a different order".to_string()
    } else {
        format!("only in checkpoint: {missing:?}; only in data: {extra:?}")
    })
}

fn cmd_evaluate(
    model: &Path,
    data: &Path,
    prefix: Option<&str>,
    out: &mut dyn Write,
) -> Result<()> {
    let ckpt = load_checkpoint(model)?;
    let ds = load_data(data)?;
    if let Some(diff) = class_diff(&ckpt.class_names, &ds.class_names) {
        return Err(Error::ClassMismatch(diff));
    }
    let r = evaluate(&ckpt.model, &ds)?;
    writeln!(out, "loss: {:.6}", r.loss).map_err(out_err)?;
    writeln!(out, "accuracy: {:.6}", r.accuracy).map_err(out_err)?;
    if let Some(prefix) = prefix {
        let records: Vec<PredictionRecord> = r
            .predictions
            .iter()
            .zip(&ds.paths)
            .map(|(p, path)| {
                PredictionRecord::new(
                    path.clone(),
                    ds.class_names[p.true_label].clone(),
                    ds.class_names[p.predicted].clone(),
                    p.confidence as f64,
                )
            })
            .collect();
        let conf_path = format!("{prefix}_confusion.csv");
        let pred_path = format!("{prefix}_predictions.csv");
        std::fs::write(
            &conf_path,
            report::confusion_csv(&r.confusion, &ds.class_names)?,
        )
        .map_err(|e| Error::io(&conf_path, e))?;
        report::write_prediction_report(&records, &pred_path)?;
        writeln!(out, "report: {conf_path}, {pred_path}").map_err(out_err)?;
    }
    Ok(())
}

fn cmd_predict(model: &Path, image: &Path, top_k: usize, out: &mut dyn Write) -> Result<()> {
    let ckpt = load_checkpoint(model)?;
    let bytes = std::fs::read(image).map_err(|e| Error::io(image, e))?;
    let img = data::decode_ppm(&bytes).map_err(|e| e.in_file(image))?;
    let x = data::preprocess(&img)?;
    let [c, h, w] = ckpt.model.spec.input_shape;
    let probs = ckpt.model.predict(&x.reshape(&[1, c, h, w])?)?;
    let mut ranked: Vec<(usize, f32)> = probs.data().iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let k = top_k.clamp(1, ranked.len());
    for (rank, (class, p)) in ranked.iter().take(k).enumerate() {
        writeln!(out, "{}\t{}\t{:.6}", rank + 1, ckpt.class_names[*class], p).map_err(out_err)?;
    }
    Ok(())
}

fn cmd_summary(model: Option<&Path>, classes: Option<usize>, out: &mut dyn Write) -> Result<()> {
    let summary = match (model, classes) {
        (Some(path), _) => load_checkpoint(path)?.model.summary()?,
        (None, Some(k)) if k >= 1 => ModelSpec::canonical(k).summary()?,
        _ => {
            return Err(Error::InvalidParameter(
                "--arch-for-classes must be >= 1".into(),
            ))
        }
    };
    writeln!(out, "{summary}").map_err(out_err)
}
