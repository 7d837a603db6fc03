use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use faceauth::auth::{self, AuthService, MasterKey};
use faceauth::config::AppConfig;
use faceauth::pipeline::{self, ImageStatus, MultiFacePolicy};

#[derive(Parser)]
#[command(name = "faceauth", version, about = "Face recognition authentication toolkit")]
struct Cli {
    /// Overrides the split and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    output: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a folder-per-identity dataset of synthetic face photos.
    Synth {
        root: PathBuf,
        #[arg(long, default_value_t = 10)]
        identities: usize,
        #[arg(long, default_value_t = 10)]
        images: usize,
        #[arg(long, default_value_t = 160)]
        canvas: u32,
    },
    /// Detect and crop faces of a folder-per-identity dataset into <output>.
    Ingest {
        root: PathBuf,
        /// Skip images with several faces instead of keeping the most confident.
        #[arg(long)]
        skip_multi: bool,
    },
    /// Embed an ingested archive into <output>/embeddings.json.
    Embed { archive: PathBuf },
    /// Train on an archive or embeddings file; writes <output>/model.fagm.
    Train { input: PathBuf },
    /// Hold-out evaluation with cross-validation; writes reports to <output>.
    Evaluate { input: PathBuf },
    /// k-fold cross-validation over the whole input.
    CrossValidate { input: PathBuf },
    /// Compare the same procedure on two datasets.
    BiasAudit {
        dataset_a: PathBuf,
        dataset_b: PathBuf,
        #[arg(long, default_value = "Dataset A")]
        name_a: String,
        #[arg(long, default_value = "Dataset B")]
        name_b: String,
    },
    /// Dump a model file as JSON to <output>/model.json.
    ExportModel { model: PathBuf },
    /// Print a fresh random master key in hex.
    GenKey,
    /// Run the authentication HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<AppConfig> {
    let mut cfg = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.split.seed = seed;
    }
    Ok(cfg)
}

fn dataset(cfg: &AppConfig, input: &Path) -> Result<faceauth::LabeledDataset> {
    let embedder = cfg.backends.embedder();
    pipeline::load_dataset(input, embedder.as_ref()).with_context(|| format!("loading {}", input.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let out = &cli.output;

    match &cli.command {
        Command::Synth {
            root,
            identities,
            images,
            canvas,
        } => {
            pipeline::write_synthetic_dataset(root, *identities, *images, *canvas, cli.seed.unwrap_or(0))?;
            println!("wrote {} images to {}", identities * images, root.display());
        }
        Command::Ingest { root, skip_multi } => {
            let detector = cfg.backends.face_detector(&cfg.detector)?;
            let policy = if *skip_multi {
                MultiFacePolicy::Skip
            } else {
                MultiFacePolicy::Highest
            };
            let m = pipeline::ingest(root, out, detector.as_ref(), policy)?;
            println!(
                "{} images, {} labels: {} ok, {} no_face, {} multi_face, {} decode_error",
                m.images.len(),
                m.labels.len(),
                m.count(ImageStatus::Ok),
                m.count(ImageStatus::NoFace),
                m.count(ImageStatus::MultiFace),
                m.count(ImageStatus::DecodeError)
            );
        }
        Command::Embed { archive } => {
            let embedder = cfg.backends.embedder();
            let records = pipeline::embed_archive(archive, embedder.as_ref())?;
            let path = out.join("embeddings.json");
            pipeline::write_embeddings(&path, &records)?;
            println!("{} embeddings written to {}", records.len(), path.display());
        }
        Command::Train { input } => {
            let data = dataset(&cfg, input)?;
            let path = out.join("model.fagm");
            let model = pipeline::train_model(&data, &cfg.train, &path)?;
            println!(
                "trained {} classes on {} samples -> {}",
                model.classes().len(),
                data.len(),
                path.display()
            );
        }
        Command::Evaluate { input } => {
            let data = dataset(&cfg, input)?;
            let report = pipeline::run_experiment(&data, &cfg.split, &cfg.train, out)?;
            print!(
                "{}",
                faceauth::evaluation::report::metrics_table(&[("LinearSVC", &report.metrics)])
            );
            if let Some(cv) = &report.cross_validation {
                println!(
                    "{}-fold cross-validation mean accuracy: {:.4}",
                    cv.folds_used, cv.result.mean_accuracy
                );
            }
        }
        Command::CrossValidate { input } => {
            let data = dataset(&cfg, input)?;
            let cv = pipeline::run_cross_validation(&data, &cfg.split, &cfg.train, out)?;
            print!("{}", faceauth::evaluation::report::cross_validation_csv(&cv));
        }
        Command::BiasAudit {
            dataset_a,
            dataset_b,
            name_a,
            name_b,
        } => {
            let a = dataset(&cfg, dataset_a)?;
            let b = dataset(&cfg, dataset_b)?;
            let report = pipeline::run_bias_audit(&a, &b, (name_a, name_b), &cfg.split, &cfg.train, out)?;
            print!("{}", faceauth::evaluation::report::bias_table(&report, name_a, name_b));
        }
        Command::ExportModel { model } => {
            let path = out.join("model.json");
            let export = pipeline::export_model(model, &path)?;
            println!("{} classes exported to {}", export.classes.len(), path.display());
        }
        Command::GenKey => println!("{}", MasterKey::generate()?.to_hex()),
        Command::Serve { listen, store } => {
            let mut svc_cfg = cfg.service.clone();
            if let Some(l) = listen {
                svc_cfg.listen = l.clone();
            }
            if let Some(s) = store {
                svc_cfg.store_dir = s.clone();
            }
            let addr: SocketAddr = svc_cfg
                .listen
                .parse()
                .with_context(|| format!("invalid listen address {}", svc_cfg.listen))?;
            let key = MasterKey::from_env(&svc_cfg.master_key_env)?;
            let service = AuthService::open(
                &svc_cfg,
                cfg.train.clone(),
                cfg.backends.face_detector(&cfg.detector)?,
                cfg.backends.embedder(),
                key,
            )?;
            if service.model().is_none() && service.user_count() >= 2 {
                service.retrain()?;
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(auth::http::serve(Arc::new(service), addr, svc_cfg.max_body_bytes))?;
        }
    }
    Ok(())
}
