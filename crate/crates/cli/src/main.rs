//! `mmc`: train, evaluate and run the completion model from the shell.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use mmc_core::corpus::{build_corpus, BuildOptions, ComponentTaxonomy, ExternalTextBackend, RecordingBackend, ReplayBackend, StubTextBackend, TextBackend};
use mmc_core::data::{synth_generate, SYNTH_CATEGORIES};
use mmc_core::encoders::RenderedImage;
use mmc_core::external::ExternalPolicy;
use mmc_core::fusion::Checkpoint;
use mmc_core::geometry::{PointCloud, DEFAULT_FSCORE_TAU};
use mmc_core::harness::{
    ablate, checkpoint_train_config, complete_with_image, evaluate, image_from_bytes, read_image, scatter_plot, train, CompleteRequest,
    EvalOptions, HarnessError, TrainConfig, TrainOptions,
};

#[derive(Parser)]
#[command(name = "mmc", version, about = "Text- and image-guided point cloud completion")]
struct Cli {
    /// Log filter used when RUST_LOG is unset.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Stub,
    Replay,
    External,
}

#[derive(Subcommand)]
enum Command {
    /// Print a config preset as key = value text.
    Config {
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model; MMC_SEED overrides the config seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run directory for the ledger and checkpoints.
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Continue from a checkpoint written by the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        split: String,
        /// CSV report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dataset root; defaults to the one the checkpoint was trained on.
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// F-Score distance threshold.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Train and evaluate every ablation row of a config.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Complete one partial cloud.
    Complete {
        #[arg(long)]
        ckpt: PathBuf,
        /// XYZ file, one point per line.
        #[arg(long)]
        partial: PathBuf,
        /// PNG, JPEG, binary PGM/PPM or a dataset .img render.
        #[arg(long)]
        image: PathBuf,
        /// Free-form text; cut to the prompt token budget.
        #[arg(long)]
        prompt: Option<String>,
        /// Category for the template prompt when --prompt is absent.
        #[arg(long)]
        category: Option<String>,
        #[arg(long, default_value = "completed.xyz")]
        out: PathBuf,
        /// Also write an orthographic scatter plot (PNG or PPM).
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Generate a procedural dataset.
    SynthGen {
        #[arg(long)]
        root: PathBuf,
        /// Models per category.
        #[arg(long, default_value_t = 8)]
        models: usize,
        #[arg(long, value_delimiter = ',', default_values_t = SYNTH_CATEGORIES.iter().map(|c| c.to_string()))]
        categories: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Text corpus tools.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Question every model of a dataset and write the JSONL corpus.
    Build {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "stub")]
        backend: Backend,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep existing entries in --out and add only missing models.
        #[arg(long)]
        resume: bool,
        /// Component taxonomy file; the built-in one otherwise.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Replay source for `replay`, recording target for the other backends.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Command run by the `external` backend.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// Stop after this many new entries.
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log)).init();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Config { preset, out } => {
            let config = match preset {
                Preset::Desk => TrainConfig::desk(),
                Preset::Full => TrainConfig::full(),
            };
            match out {
                Some(path) => std::fs::write(&path, config.to_text()).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", config.to_text()),
            }
        }
        Command::Train { config, out, resume } => {
            let config = TrainConfig::load(&config)?;
            let run = train(&config, &out, &TrainOptions { resume, stop_after: None })?;
            if let Some((epoch, loss)) = run.ledger.epoch_losses().last() {
                println!("epoch {epoch}: mean loss {loss:.6}");
            }
            if let Some(ck) = run.last_checkpoint {
                println!("checkpoint {}", ck.display());
            }
        }
        Command::Eval { ckpt, split, out, root, corpus, tau, workers } => {
            let stored = checkpoint_train_config(&Checkpoint::load(&ckpt)?);
            let root = match root.or_else(|| stored.as_ref().map(|c| c.data_root.clone())) {
                Some(r) => r,
                None => bail!("{} records no dataset root; pass --root", ckpt.display()),
            };
            let mut options = EvalOptions::new(root, split);
            options.corpus = corpus.or_else(|| stored.as_ref().and_then(|c| c.corpus.clone()));
            options.tau = tau.or_else(|| stored.as_ref().map(|c| c.eval_tau)).unwrap_or(DEFAULT_FSCORE_TAU);
            if let Some(w) = workers {
                options.workers = w.max(1);
            }
            let report = evaluate(&ckpt, &options)?;
            let mean = report.mean();
            eprintln!("mean CD x1e3 {:.4}, F-Score@{} {:.4} over {} models", mean.mean_cd_e3, options.tau, mean.fscore, mean.n);
            match out {
                Some(path) => std::fs::write(&path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", report.to_csv()),
            }
        }
        Command::Ablate { config, out } => {
            let config = TrainConfig::load(&config)?;
            let table = ablate(&config, &out)?;
            print!("{}", table.to_csv());
        }
        Command::Complete { ckpt, partial, image, prompt, category, out, plot } => {
            let request = CompleteRequest { checkpoint: ckpt, partial, image, prompt, category, out, embedder: None };
            for p in [&request.checkpoint, &request.partial, &request.image] {
                if !p.is_file() {
                    return Err(HarnessError::FileNotFound(p.clone()).into());
                }
            }
            let cloud = complete_with_image(&request, load_image(&request.image)?)?;
            println!("wrote {} points to {}", cloud.len(), request.out.display());
            if let Some(path) = plot {
                write_plot(&cloud, &path)?;
                println!("plot {}", path.display());
            }
        }
        Command::SynthGen { root, models, categories, seed } => {
            let cats: Vec<&str> = categories.iter().map(String::as_str).collect();
            let entries = synth_generate(&root, models, &cats, seed)?;
            println!("generated {} models under {}", entries.len(), root.display());
        }
        Command::Corpus { command: CorpusCommand::Build { root, out, backend, seed, resume, taxonomy, transcript, endpoint, workers, limit } } => {
            let taxonomy = match taxonomy {
                Some(path) => ComponentTaxonomy::load(&path)?,
                None => ComponentTaxonomy::default(),
            };
            let options = BuildOptions { seed, resume, workers: workers.max(1), limit };
            let summary = match backend {
                Backend::Replay => {
                    let Some(path) = transcript else { bail!("--backend replay needs --transcript") };
                    build_corpus(&root, &out, &taxonomy, &ReplayBackend::load(&path)?, &options)?
                }
                Backend::Stub => build_recorded(&root, &out, &taxonomy, StubTextBackend, &options, transcript.as_deref())?,
                Backend::External => {
                    let Some(endpoint) = endpoint else { bail!("--backend external needs --endpoint") };
                    let backend = ExternalTextBackend::new(endpoint, ExternalPolicy::default());
                    build_recorded(&root, &out, &taxonomy, backend, &options, transcript.as_deref())?
                }
            };
            println!("{} written, {} kept, {} skipped", summary.written, summary.kept, summary.skipped.len());
            for (id, reason) in &summary.skipped {
                log::warn!("skipped {id}: {reason}");
            }
        }
    }
    Ok(())
}

fn build_recorded<B: TextBackend>(
    root: &Path,
    out: &Path,
    taxonomy: &ComponentTaxonomy,
    backend: B,
    options: &BuildOptions,
    transcript: Option<&Path>,
) -> Result<mmc_core::corpus::BuildSummary> {
    let Some(path) = transcript else {
        return Ok(build_corpus(root, out, taxonomy, &backend, options)?);
    };
    let recorder = RecordingBackend::new(backend);
    let summary = build_corpus(root, out, taxonomy, &recorder, options)?;
    recorder.write_transcript(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(summary)
}

fn is_raster(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(), Some("png" | "jpg" | "jpeg"))
}

/// Decodes PNG and JPEG with the `image` crate, resizing to 224x224;
/// everything else goes through the dataset reader.
fn load_image(path: &Path) -> Result<RenderedImage> {
    if !is_raster(path) {
        return Ok(read_image(path)?);
    }
    let mut rgb = image::open(path).with_context(|| format!("decoding {}", path.display()))?.to_rgb8();
    if rgb.dimensions() != (224, 224) {
        log::warn!("resizing {}x{} image to 224x224", rgb.width(), rgb.height());
        rgb = image::imageops::resize(&rgb, 224, 224, image::imageops::FilterType::Triangle);
    }
    Ok(image_from_bytes(224, 224, 3, rgb.as_raw())?)
}

fn write_plot(cloud: &PointCloud, path: &Path) -> Result<()> {
    let plot = scatter_plot(cloud, 256);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
        std::fs::write(path, plot.to_ppm())?;
        return Ok(());
    }
    let img = image::RgbImage::from_raw(plot.width as u32, plot.height as u32, plot.rgb).context("plot buffer size")?;
    img.save(path).with_context(|| format!("writing {}", path.display()))
}
