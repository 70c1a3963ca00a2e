use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod run;

const EXIT_HELP: &str = "Exit codes: 0 success, 2 usage error or missing input file, 3 domain error \
(invalid data, topology, geometry or training failure).";

#[derive(Parser)]
#[command(name = "dare", version, about = "Stereo-pair feature fusion and tree-topology classification", after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Precomputed Multi-FM rows (.dfmv).
    Fmv,
    /// Stereo PPM/PGM pairs listed in a manifest.
    Image,
}

#[derive(Args, Clone, Debug)]
pub struct BackboneArgs {
    /// Backbone config: `mininet`, `alexconv` or a JSON file.
    #[arg(long, default_value = "mininet")]
    pub backbone: String,
    /// Frozen convolution weights; random Glorot weights from --backbone-seed when absent.
    #[arg(long)]
    pub backbone_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub backbone_seed: u64,
}

#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    /// Tree topology: `dare20`, `mini2`, `flat` or a JSON file.
    #[arg(long, default_value = "dare20")]
    pub topology: String,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hidden layer widths of every node head, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Synth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long, value_enum, default_value_t = Mode::Fmv)]
        mode: Mode,
        /// Multi-FM dimension (fmv mode).
        #[arg(long, default_value_t = 16)]
        dim: usize,
        /// Minimum centroid distance (fmv mode).
        #[arg(long, default_value_t = 4.0)]
        margin: f64,
        /// Per-coordinate noise std (fmv mode).
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        /// Image side in pixels (image mode).
        #[arg(long, default_value_t = 32)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a tree classifier and write an archive.
    Train {
        /// A .dfmv file (fmv mode) or a manifest CSV (image mode); a directory holding either also works.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Fmv)]
        mode: Mode,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        backbone: BackboneArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a dataset by k-fold cross validation or against a trained archive.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Fmv)]
        mode: Mode,
        #[arg(long, default_value_t = 5)]
        kfold: usize,
        /// Holdout evaluation of this archive instead of cross validation.
        #[arg(long, conflicts_with = "stub_class")]
        archive: Option<PathBuf>,
        /// Replace training with a classifier that always answers this class.
        #[arg(long)]
        stub_class: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        backbone: BackboneArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify one stereo pair.
    Predict {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        archive: PathBuf,
        /// Directory for run.json; nothing is written when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time per-pair prediction with a per-stage breakdown.
    Bench {
        #[arg(long)]
        archive: PathBuf,
        /// Image manifest whose pairs are cycled through.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Directory for bench.csv and run.json; nothing is written when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { classes, per_class, mode, dim, margin, noise, side, seed, out } => {
            commands::synth(classes, per_class, mode, dim, margin, noise, side, seed, &out)
        }
        Command::Train { data, mode, train, backbone, out } => commands::train(&data, mode, &train, &backbone, &out),
        Command::Eval { data, mode, kfold, archive, stub_class, train, backbone, out } => {
            commands::eval(&data, mode, kfold, archive.as_deref(), stub_class, &train, &backbone, &out)
        }
        Command::Predict { left, right, archive, out } => commands::predict(&left, &right, &archive, out.as_deref()),
        Command::Bench { archive, data, reps, out } => commands::bench(&archive, &data, reps, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let debug = format!("{e:?}");
            let kind = debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error");
            eprintln!("error ({kind}): {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
