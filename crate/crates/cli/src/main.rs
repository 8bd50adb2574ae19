mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use motionstyle::ErrorCategory;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Lib(motionstyle::Error),
}

impl From<motionstyle::Error> for CliError {
    fn from(e: motionstyle::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn category(&self) -> ErrorCategory {
        match self {
            CliError::Usage(_) => ErrorCategory::Usage,
            CliError::Data(_) => ErrorCategory::Data,
            CliError::Lib(e) => e.category(),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m.clone(),
            CliError::Lib(e) => e.to_string(),
        }
    }
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Usage => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::ModeMismatch => 4,
        ErrorCategory::Diverged => 5,
    }
}

fn category_name(category: ErrorCategory) -> &'static str {
    match category {
        ErrorCategory::Usage => "usage",
        ErrorCategory::Data => "data",
        ErrorCategory::ModeMismatch => "mode_mismatch",
        ErrorCategory::Diverged => "diverged",
    }
}

#[derive(Parser, Debug)]
#[command(name = "motionstyle", version, about = "Latent-space motion stylization")]
pub struct Cli {
    /// Worker cap. The library runs on one thread, so every value is bit-deterministic.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Default root for corpora and checkpoints.
    #[arg(long, global = true, env = "MOTIONSTYLE_DATA", default_value = "data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Supervised,
    Unsupervised,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StylizeMode {
    Motion,
    Label,
    Prior,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ContactsArg {
    Recompute,
    Decoded,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic style x content corpus.
    GenCorpus {
        #[arg(long)]
        styles: Option<usize>,
        #[arg(long)]
        contents: Option<usize>,
        #[arg(long)]
        per_cell: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to <data-dir>/corpus.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the motion autoencoder.
    TrainCodec {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// vae, ae or none.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        latent_dim: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
    },
    /// Train the global motion predictor.
    TrainGmp {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Codec directory whose normalization statistics to reuse.
        #[arg(long)]
        codec: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
    },
    /// Train the stylizer and write a complete model bundle.
    TrainStylizer {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        codec: Option<PathBuf>,
        #[arg(long)]
        gmp: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Repeatable: no_latent, no_prob_style, no_homo_style, no_autoencoding, no_cycle, prob_content, end_to_end.
        #[arg(long)]
        ablation: Vec<String>,
    },
    /// Stylize one content motion.
    Stylize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        mode: StylizeMode,
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        style: Option<PathBuf>,
        #[arg(long)]
        label: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Motion mode: sample the style distribution instead of using its mean.
        #[arg(long)]
        sample: bool,
        /// Motion mode: interpolate toward the style of this motion.
        #[arg(long, requires = "alpha")]
        style_b: Option<PathBuf>,
        #[arg(long, requires = "style_b")]
        alpha: Option<f64>,
        /// Copy root velocity from the content instead of predicting it.
        #[arg(long)]
        no_gmp: bool,
        #[arg(long, value_enum, default_value = "recompute")]
        contacts: ContactsArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a content motion with a blend of two example styles.
    Interpolate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        style_a: PathBuf,
        #[arg(long)]
        style_b: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        label: Option<usize>,
        #[arg(long)]
        no_gmp: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the repeated evaluation protocol.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Corpus whose test split is stylized (and whose train split trains missing classifiers).
        #[arg(long)]
        test: Option<PathBuf>,
        /// Corpus whose test split supplies style motions; defaults to --test.
        #[arg(long)]
        styles: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory with style_clf/content_clf; trained and saved beside the report when absent.
        #[arg(long)]
        classifiers: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        no_gmp: bool,
        /// Penultimate style features of real and stylized clips, for external plots.
        #[arg(long)]
        dump_features: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the single-clip forward pass.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 160)]
        frames: usize,
        #[arg(long, default_value_t = 30)]
        repeats: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        /// Also time a pose-space model of the same widths.
        #[arg(long)]
        no_latent_baseline: bool,
        #[arg(long)]
        clip: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print checkpoint, corpus or motion metadata as JSON.
    Inspect { path: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            eprintln!("error: category={} message={}", category_name(category), e.message().replace('\n', " "));
            ExitCode::from(exit_code(category))
        }
    }
}
