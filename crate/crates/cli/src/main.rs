//! `galvae`: run the generative active-learning experiment or any of its
//! phases from the command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or format
//! error, 3 numerical failure. Failures print one line to stderr of the form
//! `error[<exit code>:<tag>] <message>`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use galvae::imaging::{preprocess_dataset, read_pnm, write_pnm, Image};
use galvae::pipeline::{
    classify_run_dir, read_report, run_experiment, write_report, write_sessions, ExperimentConfig,
    Report,
};
use galvae::synthdata::{make_dataset, write_dataset, DatasetSpec};
use galvae::vae::vae_train;
use galvae::{Error, Result};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "galvae",
    version,
    about = "Generative active learning with VAE-latent query filtering on synthetic radiographs"
)]
struct Cli {
    /// Master seed; overrides the config file's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel steps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a labeled phantom dataset (PGM/PPM plus manifest.csv).
    Synth {
        /// Output directory.
        #[arg(long, env = "GALVAE_OUT", default_value = "galvae-out")]
        out: PathBuf,
        /// Phantoms per label.
        #[arg(long, default_value_t = 100)]
        n_per_label: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Mask green strokes, inpaint, convert to grayscale, crop and resize.
    Preprocess {
        /// Directory of .pgm/.ppm images.
        #[arg(long)]
        input: PathBuf,
        /// Output directory for preprocessed .pgm images.
        #[arg(long, env = "GALVAE_OUT", default_value = "galvae-out")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train the VAE on a directory of preprocessed grayscale images.
    TrainVae {
        /// Directory of same-sized grayscale .pgm images.
        #[arg(long)]
        input: PathBuf,
        /// Output parameter file.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the full experiment and write all reports.
    Run {
        /// Output directory; overrides the config file's `out_dir`.
        #[arg(long, env = "GALVAE_OUT")]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Retrain the classification sessions from a run directory's saved images.
    Classify {
        /// Directory written by `run`.
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Print the FID and classification tables of a run directory.
    Report {
        /// Directory written by `run`.
        #[arg(long)]
        run_dir: PathBuf,
    },
}

/// A JSON config file plus per-key overrides. Flags take precedence over
/// the file, which takes precedence over the built-in defaults.
#[derive(Debug, Args, Serialize)]
struct ConfigArgs {
    /// JSON config file with experiment keys; unknown keys are errors.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,

    /// Side of the preprocessed square images.
    #[arg(long)]
    side: Option<usize>,
    /// Side of the synthesized raw phantoms.
    #[arg(long)]
    raw_side: Option<usize>,
    /// Real disease images in the original session.
    #[arg(long)]
    initial_real_count: Option<usize>,
    /// GAN training-set size that ends the cycle loop.
    #[arg(long)]
    target_size: Option<usize>,
    /// Images generated per cycle for the query.
    #[arg(long)]
    gen_per_cycle: Option<usize>,
    /// Fraction of generated images kept per cycle.
    #[arg(long)]
    keep_fraction: Option<f64>,
    /// Normal-class classifier training images.
    #[arg(long)]
    normal_count: Option<usize>,
    /// Held-out real test images per label.
    #[arg(long)]
    test_per_label: Option<usize>,
    /// Fraction of raw phantoms carrying a green stroke.
    #[arg(long)]
    annotate_frac: Option<f64>,
    /// Gaussian pixel noise of the phantoms.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// GAN epochs per cycle.
    #[arg(long)]
    gan_epochs: Option<usize>,
    /// Epochs between FID evaluations.
    #[arg(long)]
    gan_eval_every: Option<usize>,
    /// Images per FID evaluation (default: reference size).
    #[arg(long)]
    gan_eval_n: Option<usize>,
    /// Generator noise dimension.
    #[arg(long)]
    gan_d_noise: Option<usize>,
    /// Generator hidden width.
    #[arg(long)]
    gan_hidden_g: Option<usize>,
    /// Discriminator hidden width.
    #[arg(long)]
    gan_hidden_d: Option<usize>,
    /// GAN mini-batch size.
    #[arg(long)]
    gan_batch: Option<usize>,
    /// Generator learning rate.
    #[arg(long)]
    gan_lr_g: Option<f64>,
    /// Discriminator learning rate.
    #[arg(long)]
    gan_lr_d: Option<f64>,
    /// Adam beta1 for both GAN networks.
    #[arg(long)]
    gan_beta1: Option<f64>,
    /// Re-initialize the GAN every cycle instead of resuming.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    reinit_per_cycle: Option<bool>,
    /// VAE latent dimension.
    #[arg(long)]
    vae_d_z: Option<usize>,
    /// VAE hidden width.
    #[arg(long)]
    vae_hidden: Option<usize>,
    /// VAE training epochs.
    #[arg(long)]
    vae_epochs: Option<usize>,
    /// VAE mini-batch size.
    #[arg(long)]
    vae_batch: Option<usize>,
    /// VAE learning rate.
    #[arg(long)]
    vae_lr: Option<f64>,
    /// Classifier hidden width.
    #[arg(long)]
    clf_hidden: Option<usize>,
    /// Classifier epochs per session.
    #[arg(long)]
    clf_epochs: Option<usize>,
    /// Classifier mini-batch size.
    #[arg(long)]
    clf_batch: Option<usize>,
    /// Classifier learning rate.
    #[arg(long)]
    clf_lr: Option<f64>,
    /// FID features: `pixel` or `vae-latent`.
    #[arg(long)]
    feature_mode: Option<String>,
    /// Downsampled side of pixel FID features.
    #[arg(long)]
    feature_side: Option<usize>,
    /// Query aggregation over the real set: `mean` or `max`.
    #[arg(long)]
    aggregation: Option<String>,
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags, then the global seed.
    fn resolve(&self, seed: Option<u64>) -> Result<ExperimentConfig> {
        let mut merged = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => serde_json::Value::Object(Default::default()),
        };
        let serde_json::Value::Object(map) = &mut merged else {
            return Err(Error::Config("config file must hold a JSON object".into()));
        };
        let serde_json::Value::Object(flags) = serde_json::to_value(self)? else {
            unreachable!("ConfigArgs serializes to an object");
        };
        for (k, v) in flags {
            if !v.is_null() {
                map.insert(k, v);
            }
        }
        if let Some(s) = seed {
            map.insert("seed".into(), s.into());
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pnm_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })? {
        let path = entry
            .map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .path();
        if path
            .extension()
            .is_some_and(|x| x == "pgm" || x == "ppm")
        {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no .pgm or .ppm images in {}",
            dir.display()
        )));
    }
    Ok(paths)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn print_report(r: &Report) {
    println!("cycle  size  optimal_fid  worst_fid  saved_epoch");
    for c in &r.cycles {
        println!(
            "{:>5}  {:>4}  {:>11.4}  {:>9.4}  {:>11}",
            c.cycle, c.size, c.optimal_fid, c.worst_fid, c.saved_epoch
        );
    }
    println!();
    println!("session   tp   fp   fn   tn  accuracy  precision  recall      f1");
    for s in &r.sessions {
        println!(
            "{:>7}  {:>3}  {:>3}  {:>3}  {:>3}  {:>8.4}  {:>9.4}  {:>6.4}  {:>6.4}",
            s.session, s.cm.tp, s.cm.fp, s.cm.fn_, s.cm.tn, s.accuracy, s.precision, s.recall, s.f1
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Synth {
            out,
            n_per_label,
            config,
        } => {
            let cfg = config.resolve(cli.seed)?;
            let phantoms = make_dataset(&DatasetSpec {
                n_per_label,
                side: cfg.raw_side,
                annotate_frac: cfg.annotate_frac,
                noise_sigma: cfg.noise_sigma,
                seed: cfg.seed,
            })?;
            write_dataset(&out, &phantoms)?;
            println!("wrote {} phantoms to {}", phantoms.len(), out.display());
        }
        Command::Preprocess { input, out, config } => {
            let cfg = config.resolve(cli.seed)?;
            let paths = pnm_paths(&input)?;
            let imgs = paths.iter().map(read_pnm).collect::<Result<Vec<Image>>>()?;
            let prepared = preprocess_dataset(&imgs, &cfg.preprocess())?;
            create_dir(&out)?;
            for (path, img) in paths.iter().zip(&prepared) {
                let stem = path.file_stem().expect("listed files have names");
                write_pnm(img, out.join(stem).with_extension("pgm"))?;
            }
            println!("preprocessed {} images into {}", prepared.len(), out.display());
        }
        Command::TrainVae { input, out, config } => {
            let cfg = config.resolve(cli.seed)?;
            let imgs = pnm_paths(&input)?
                .iter()
                .map(read_pnm)
                .collect::<Result<Vec<Image>>>()?;
            let (params, losses) = vae_train(&cfg.vae(cfg.seed), &imgs)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            params.save(&out)?;
            for (epoch, loss) in losses.iter().enumerate() {
                println!("epoch {:>3}  loss {loss:.4}", epoch + 1);
            }
            println!("saved VAE parameters to {}", out.display());
        }
        Command::Run { out, config } => {
            let mut cfg = config.resolve(cli.seed)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let ex = run_experiment(&cfg)?;
            write_report(&cfg.out_dir, &ex)?;
            for c in &ex.cycles {
                eprintln!("cycle {} took {} ms", c.cycle, c.wall_ms);
            }
            print_report(&read_report(&cfg.out_dir)?);
            println!();
            println!("reports written to {}", cfg.out_dir.display());
        }
        Command::Classify { run_dir } => {
            let sessions = classify_run_dir(&run_dir, cli.seed)?;
            let out = run_dir.join("classify");
            write_sessions(&out, &sessions)?;
            for s in &sessions {
                println!(
                    "session {}: accuracy {:.4}, f1 {:.4}",
                    s.session, s.scores.accuracy, s.scores.f1
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Report { run_dir } => print_report(&read_report(&run_dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let mut lines = text.lines();
            let first = lines.next().unwrap_or_default();
            eprintln!("error[1:usage] {}", first.trim_start_matches("error: "));
            for line in lines.filter(|l| !l.trim().is_empty()) {
                eprintln!("{line}");
            }
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.kind().exit_code();
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{code}:{}] {msg}", e.tag());
            ExitCode::from(code as u8)
        }
    }
}
