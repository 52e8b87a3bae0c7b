use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fnssl::checkpoint::Checkpoint;
use fnssl::config::{Mode, RunConfig, Target};
use fnssl::evaluate::{evaluate, write_metrics_csv, Predictor};
use fnssl::infer::{infer_trajectory, write_trajectory_csv};
use fnssl::manifest::Manifest;
use fnssl::simulate::simulate;
use fnssl::train::train;
use fnssl::{Error, Result};

/// Two-microphone sound source localization with a full-band/narrow-band
/// recurrent network.
#[derive(Debug, Parser)]
#[command(name = "fnssl", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Configuration overrides such as `train.epochs=3`.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PredictorKind {
    Network,
    Labels,
    Baseline,
    Fixed,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample and render scenes, writing WAVs, labels and a manifest.
    Simulate {
        /// Number of scenes to render.
        #[arg(long)]
        count: usize,
        /// Prefix of the recording ids.
        #[arg(long, default_value = "scene")]
        prefix: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train a network on a manifest.
    Train {
        /// Manifest of the training recordings.
        #[arg(long)]
        manifest: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Number of full-narrow blocks.
        #[arg(long)]
        blocks: Option<usize>,
        /// Online (causal) or offline network.
        #[arg(long)]
        causal: Option<Mode>,
        /// Learning target and output head.
        #[arg(long)]
        target: Option<Target>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate MAE and ACC over a manifest.
    Eval {
        /// Manifest of the recordings to score.
        #[arg(long)]
        manifest: PathBuf,
        /// Checkpoint for the network predictor.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Source of the direction estimates.
        #[arg(long, value_enum, default_value = "network")]
        predictor: PredictorKind,
        /// Azimuth of the fixed predictor in degrees.
        #[arg(long, default_value_t = 90.0)]
        azimuth: f64,
        /// Candidate grid resolution in degrees.
        #[arg(long)]
        grid: Option<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Estimate the DOA trajectory of one recording.
    Infer {
        /// Trained checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Two-channel 16-bit WAV at the configured sample rate.
        #[arg(long)]
        wav: PathBuf,
        /// Causal streaming or whole-clip inference.
        #[arg(long, value_enum, default_value = "online")]
        mode: Mode,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load_config(cli: &Cli, overrides: &Overrides, extra: &[String]) -> Result<RunConfig> {
    let mut all = overrides.set.clone();
    all.extend_from_slice(extra);
    if let Some(seed) = cli.seed {
        all.push(format!("seed={seed}"));
    }
    RunConfig::load(cli.config.as_deref(), &all)
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))
}

fn echo_config(out: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { count, prefix, overrides } => {
            let cfg = load_config(cli, overrides, &[])?;
            let out = require_out(cli)?;
            echo_config(out, &cfg)?;
            let m = simulate(&cfg, *count, cfg.seed, out, prefix)?;
            println!("wrote {} scenes to {}", m.entries.len(), out.display());
        }
        Command::Train { manifest, resume, blocks, causal, target, overrides } => {
            let mut extra = Vec::new();
            if let Some(b) = blocks {
                extra.push(format!("network.blocks={b}"));
            }
            if let Some(m) = causal {
                extra.push(format!("network.mode=\"{}\"", m.to_possible_value().unwrap().get_name()));
            }
            if let Some(t) = target {
                extra.push(format!("network.target=\"{}\"", t.to_possible_value().unwrap().get_name()));
            }
            let cfg = load_config(cli, overrides, &extra)?;
            let out = require_out(cli)?;
            echo_config(out, &cfg)?;
            let manifest = Manifest::load(manifest)?;
            let summary = train(&cfg, &manifest, out, resume.as_deref())?;
            for (i, l) in summary.epoch_losses.iter().enumerate() {
                println!("epoch loss {i}: {l:.6}");
            }
            println!("checkpoint: {}", summary.checkpoint.display());
        }
        Command::Eval { manifest, checkpoint, predictor, azimuth, grid, overrides } => {
            let mut extra = Vec::new();
            if let Some(g) = grid {
                extra.push(format!("eval.grid_resolution={g}"));
            }
            let cfg = load_config(cli, overrides, &extra)?;
            let predictor = match predictor {
                PredictorKind::Network => {
                    let path = checkpoint
                        .as_deref()
                        .ok_or_else(|| Error::Config("--checkpoint is required for the network predictor".into()))?;
                    Predictor::Network(Box::new(Checkpoint::load(path)?))
                }
                PredictorKind::Labels => Predictor::Labels,
                PredictorKind::Baseline => Predictor::Baseline,
                PredictorKind::Fixed => Predictor::Fixed(*azimuth),
            };
            let manifest = Manifest::load(manifest)?;
            let report = evaluate(&cfg, &manifest, &predictor)?;
            if let Some(out) = &cli.out {
                echo_config(out, &cfg)?;
                write_metrics_csv(&out.join("metrics.csv"), &report)?;
            }
            let a = report.all;
            println!(
                "frames {} mae_deg {:.4} acc5 {:.2} acc10 {:.2} acc15 {:.2}",
                a.frames, a.mae_deg, a.acc5, a.acc10, a.acc15
            );
        }
        Command::Infer { checkpoint, wav, mode, overrides } => {
            let cfg = load_config(cli, overrides, &[])?;
            let ck = Checkpoint::load(checkpoint)?;
            let points = infer_trajectory(
                &ck,
                wav,
                *mode,
                &cfg.stft_config(),
                cfg.eval.grid_resolution,
                cfg.scene.mic_spacing,
            )?;
            match &cli.out {
                Some(out) => {
                    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
                    write_trajectory_csv(&out.join("trajectory.csv"), &points)?;
                }
                None => {
                    println!("time_s,est_azimuth_deg");
                    for p in &points {
                        println!("{:.6},{:.6}", p.time_s, p.azimuth_deg);
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
