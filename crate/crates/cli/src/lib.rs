//! Command-line front end: one subcommand per pipeline stage.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{load_config, parse_config, Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "treeseg", version, about = "TreeSegNet pipeline stages")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long = "tile-size", global = true)]
    pub tile_size: Option<usize>,
    #[arg(long, global = true)]
    pub margin: Option<usize>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Width of the first convolution (16, 32 or 64).
    #[arg(long = "K", global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub passes: Option<usize>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stack RGB/IR/DSM inputs into one 5-channel F32R image.
    Fuse {
        #[arg(long)]
        rgb: Option<PathBuf>,
        #[arg(long)]
        irrg: Option<PathBuf>,
        #[arg(long)]
        rgbir: Option<PathBuf>,
        #[arg(long)]
        dsm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the 36 rotated crops of an image and its labels.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut an image into overlap tiles plus a plan.json.
    Tile {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blend tiles back into one image following plan.json.
    Stitch {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        tiles: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the class tree cut from a confusion matrix or its lower-triangular fold.
    Treecut {
        #[arg(long)]
        matrix: PathBuf,
        /// Also print every split with the edges removed.
        #[arg(long)]
        trace: bool,
    },
    /// Score a prediction against reference labels.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "error-map")]
        error_map: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate synthetic scenes with labels.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
    },
    /// Run the structure iteration and write a run directory.
    Train {
        #[arg(long)]
        out: PathBuf,
        /// Directory of Potsdam-named patches; synthetic scenes when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from the latest checkpoint in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Label an image with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        color: Option<PathBuf>,
    },
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            tile_size: self.tile_size,
            margin: self.margin,
            sigma: self.sigma,
            k: self.k,
            depth: self.depth,
            epochs: self.epochs,
            passes: self.passes,
            workers: self.workers,
        }
    }

    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

/// Parses `args`, runs the command, writes its report to `out` and returns the exit code.
/// Errors go to `err` as a single `error[<code>]: <message>` line.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            let _ = writeln!(err, "error[1]: usage: {first}");
            return 1;
        }
    };
    match commands::execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            let _ = writeln!(err, "error[{code}]: {}", e.one_line());
            code
        }
    }
}
