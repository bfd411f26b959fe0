//! `pdlearn`: persistence diagrams to sparse linear models and back.
//!
//! Every subcommand writes into an output directory and leaves a
//! `manifest.json` there. Failures print one JSON object on stderr,
//! `{"error": {"kind", "message", "file"}}`, and exit nonzero.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod io;
mod manifest;
mod plot;

/// Marks the file an error is about.
#[derive(Debug, Clone)]
pub struct Located(pub PathBuf);

impl fmt::Display for Located {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.display())
    }
}

/// An error raised by the tool itself, with a machine-readable kind.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn err(kind: &'static str, message: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(Failure { kind, message: message.into() })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

#[derive(Parser)]
#[command(
    name = "pdlearn",
    version,
    about = "Persistence diagrams, persistence images, sparse linear models and inverse analysis"
)]
struct Cli {
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Where the experiment configuration comes from.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// TOML config: a full experiment, or `preset = "<id>"` plus overrides.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in experiment: easy-images, hard-images, ppp-gpp, lattices, linreg-images.
    #[arg(long)]
    pub preset: Option<String>,
    /// With --preset, use the reduced sample counts.
    #[arg(long, requires = "preset")]
    pub desk: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Scale {
    Radius,
    SquaredRadius,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the inputs of an experiment.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Persistence diagrams of images (.txt, .png) and point clouds (.csv).
    Pd {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Highest homology degree (default: from the config, else 1).
        #[arg(long)]
        degree: Option<usize>,
        /// Units of point-cloud filtration values (default: from the config, else radius).
        #[arg(long, value_enum)]
        value_scale: Option<Scale>,
        /// Input files or directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Persistence-image vectors of diagram files.
    Pi {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// PI parameters as JSON (a parameter object or a vector sidecar).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Homology degree to vectorize (default: from the config).
        #[arg(long)]
        degree: Option<usize>,
        /// Fit the grid range to the diagrams with the given resolution, e.g. 50x50.
        /// The experiments use fixed ranges instead.
        #[arg(long, value_name = "NBxND")]
        fit_grid: Option<String>,
        /// Diagram CSV files or directories.
        #[arg(required = true)]
        diagrams: Vec<PathBuf>,
    },
    /// Fit the configured model to the training rows of a sample table.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Sample table written by `gen`.
        #[arg(long)]
        samples: PathBuf,
        /// Directory of vectors named after the samples.
        #[arg(long)]
        vectors: PathBuf,
    },
    /// Dual diagram, significant regions and the pairs that fall in them.
    Inverse {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Model written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Region threshold as a fraction of the largest magnitude (default: from the config).
        #[arg(long)]
        frac: Option<f64>,
        /// Sample table, for prediction decompositions of test samples.
        #[arg(long, requires = "vectors")]
        samples: Option<PathBuf>,
        /// Vector directory, for prediction decompositions.
        #[arg(long, requires = "samples")]
        vectors: Option<PathBuf>,
        /// Diagram files or directories whose pairs are selected.
        diagrams: Vec<PathBuf>,
    },
    /// Render artifacts as PNG.
    Plot {
        /// Dual diagrams, vectors, diagrams, pair files, point clouds or images.
        #[arg(required = true)]
        artifacts: Vec<PathBuf>,
    },
    /// Run a whole experiment and write its report.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn kind_of(err: &anyhow::Error) -> &'static str {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.kind;
    }
    if let Some(e) = err.downcast_ref::<pdlearn::Error>() {
        return match e {
            pdlearn::Error::InvalidInput(_) => "invalid_input",
            pdlearn::Error::DuplicatePoint(..) => "duplicate_point",
            pdlearn::Error::Unsupported(_) => "unsupported",
            pdlearn::Error::MalformedComplex(_) => "malformed_complex",
            pdlearn::Error::InfiniteDeath { .. } => "infinite_death",
            pdlearn::Error::DimensionMismatch { .. } => "dimension_mismatch",
            pdlearn::Error::SingleClass => "single_class",
            pdlearn::Error::TooLarge { .. } => "too_large",
            pdlearn::Error::Parse { .. } => "parse",
            pdlearn::Error::Io(_) => "io",
            pdlearn::Error::Json(_) => "json",
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return "io";
    }
    if err.downcast_ref::<toml::de::Error>().is_some() {
        return "config";
    }
    if err.downcast_ref::<image::ImageError>().is_some() {
        return "image";
    }
    "error"
}

fn file_of(err: &anyhow::Error) -> Option<PathBuf> {
    if let Some(l) = err.downcast_ref::<Located>() {
        return Some(l.0.clone());
    }
    match err.downcast_ref::<pdlearn::Error>() {
        Some(pdlearn::Error::Parse { path, .. }) => Some(path.clone()),
        _ => None,
    }
}

fn report(kind: &str, message: String, file: Option<PathBuf>) {
    let body = serde_json::json!({
        "error": { "kind": kind, "message": message, "file": file.map(|f| f.display().to_string()) }
    });
    eprintln!("{body}");
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::err("usage", "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let g = commands::Globals { seed: cli.seed, out: cli.out };
    match cli.command {
        Command::Gen { cfg } => commands::gen(&g, &cfg),
        Command::Pd { cfg, degree, value_scale, inputs } => commands::pd(&g, &cfg, degree, value_scale, &inputs),
        Command::Pi { cfg, params, degree, fit_grid, diagrams } => {
            commands::pi(&g, &cfg, params.as_deref(), degree, fit_grid.as_deref(), &diagrams)
        }
        Command::Train { cfg, samples, vectors } => commands::train(&g, &cfg, &samples, &vectors),
        Command::Inverse { cfg, model, frac, samples, vectors, diagrams } => {
            let decomp = samples.zip(vectors);
            commands::inverse(
                &g,
                &cfg,
                &model,
                frac,
                decomp.as_ref().map(|(s, v)| (s.as_path(), v.as_path())),
                &diagrams,
            )
        }
        Command::Plot { artifacts } => commands::plot(&g, &artifacts),
        Command::Experiment { cfg } => commands::experiment(&g, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.render().to_string().trim().to_string(), None);
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report(kind_of(&err), format!("{err:#}"), file_of(&err));
            ExitCode::FAILURE
        }
    }
}
