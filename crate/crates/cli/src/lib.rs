//! The `auditmatch` command line.
//!
//! Every subcommand is a plain function in [`commands`] that returns the
//! text it would print, so tests drive the CLI without spawning processes.

pub mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{CliError, MatchConfig, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "auditmatch",
    version,
    about = "Match report segments to disclosure requirements"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Global {
    /// Run configuration (JSON) for `match` and `prompt-study`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides any seed in the configuration or subcommand defaults.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate corpus files and print a summary.
    Ingest(IngestArgs),
    /// Embed segments and requirements into a vector store.
    Embed(EmbedArgs),
    /// Build a retrieval index from a vector store.
    Index(IndexArgs),
    /// Run retrieval, optionally followed by re-ranking.
    Match(MatchArgs),
    /// Score a run against gold annotations.
    Evaluate(EvaluateArgs),
    /// Tabulate several evaluated runs side by side.
    Compare(CompareArgs),
    /// Print the prompt a template produces for one requirement.
    RenderPrompt(RenderPromptArgs),
    /// Compare prompt templates on a seeded sample of requirements.
    PromptStudy(PromptStudyArgs),
    /// Write a synthetic corpus, vector store and run configuration.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub requirements: PathBuf,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// Seeded hash embeddings; offline, for testing.
    Hash,
    /// HTTP encoder service.
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub requirements: PathBuf,
    #[arg(long, value_enum, default_value_t = ProviderKind::Hash)]
    pub provider: ProviderKind,
    /// Vector size for the hash provider.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Endpoint for the remote provider.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndexKindArg {
    Exact,
    Clustered,
}

#[derive(Debug, Clone, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Segment file; assigns segments to reports.
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long, value_enum, default_value_t = IndexKindArg::Exact)]
    pub kind: IndexKindArg,
    /// Index one report.
    #[arg(long, conflicts_with_all = ["all", "per_report"])]
    pub namespace: Option<String>,
    /// Index every segment together (the default).
    #[arg(long, conflicts_with = "per_report")]
    pub all: bool,
    /// One index file per report, written into `--out` as a directory.
    #[arg(long)]
    pub per_report: bool,
    /// Cluster count; `ceil(sqrt(N))` per namespace when absent.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    RetrievalOnly,
    TwoStage,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MatchArgs {
    /// Output directory; must not exist unless `--force`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub index_kind: Option<IndexKindArg>,
    /// mock-oracle, mock-scripted or remote.
    #[arg(long)]
    pub client: Option<String>,
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    /// A directory written by `match`.
    pub run: PathBuf,
    /// Gold annotations; defaults to the run's configured file.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Cutoff; defaults to the run's k.
    #[arg(long)]
    pub k: Option<usize>,
    /// Where to write reports; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CompareArgs {
    /// Run directories or report.json files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Emit a Markdown table.
    #[arg(long)]
    pub markdown: bool,
    /// Top-left header cell.
    #[arg(long)]
    pub corner: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderPromptArgs {
    #[arg(long)]
    pub template: String,
    #[arg(long)]
    pub requirement_id: String,
    #[arg(long)]
    pub requirements: PathBuf,
    /// JSON lines of `{"id": ..., "text": ...}` in retriever order.
    #[arg(long)]
    pub candidates: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PromptStudyArgs {
    /// Comma-separated template ids.
    #[arg(long, default_value = "A,B,C,D", value_delimiter = ',')]
    pub templates: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub sample_size: usize,
    #[arg(long)]
    pub markdown: bool,
    /// Also write each report as `<dir>/<template>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// 10 reports x 20 segments, 20 requirements.
    Small,
    /// 7097 segments in 10 reports, 1214 requirements.
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Scale::Small)]
    pub scale: Scale,
    #[arg(long)]
    pub out: PathBuf,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("AUDITMATCH_LOG")
        .format_timestamp(None)
        .try_init();
}

/// Dispatch a parsed command line and return what it prints.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest(a) => commands::cmd_ingest(a),
        Command::Embed(a) => commands::cmd_embed(a, g),
        Command::Index(a) => commands::cmd_index(a, g),
        Command::Match(a) => commands::cmd_match(a, g),
        Command::Evaluate(a) => commands::cmd_evaluate(a),
        Command::Compare(a) => commands::cmd_compare(a),
        Command::RenderPrompt(a) => commands::cmd_render_prompt(a),
        Command::PromptStudy(a) => commands::cmd_prompt_study(a, g),
        Command::Synth(a) => commands::cmd_synth(a, g),
    }
}

/// Parse, run and report; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    init_logging(cli.global.verbose);
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
