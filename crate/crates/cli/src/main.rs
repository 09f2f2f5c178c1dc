//! `feedmatch`: batch pipeline over JSONL files.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 backend or runtime error.

mod commands;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use setup::{BackendArgs, ClassifyArgs};

#[derive(Parser)]
#[command(
    name = "feedmatch",
    version,
    about = "Match app-store problem reports to bug reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a tracker or store export to normalized JSONL.
    Import(ImportArgs),
    /// Rank bug reports for every problem report.
    Match(MatchArgs),
    /// MAP, hit ratio and coder agreement for annotated matches.
    Evaluate(EvaluateArgs),
    /// Noun vocabulary overlap between reviews and bug summaries, per app.
    Overlap(OverlapArgs),
    /// Problem reports whose best match scores below a threshold.
    Unmatched(UnmatchedArgs),
    /// Days between a review and the relevant bug report filed after it.
    Datestats(DatestatsArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Print the token, tag and span table for a text as TSV.
    Tokens(TokensArgs),
    /// Train a part-of-speech model from tagged sentences.
    TrainTagger(TrainTaggerArgs),
}

#[derive(Args)]
pub struct ImportArgs {
    #[arg(long, value_parser = [
        "github-json", "bugzilla-json", "trac-csv", "google-play-csv", "normalized-jsonl",
    ])]
    pub format: String,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// App name for formats that don't carry one.
    #[arg(long)]
    pub app: Option<String>,
    /// Record kind; only needed for normalized-jsonl.
    #[arg(long, value_parser = ["bugs", "reviews"])]
    pub kind: Option<String>,
}

#[derive(Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub reviews: PathBuf,
    #[arg(long)]
    pub bugs: PathBuf,
    #[arg(long, default_value_t = feedmatch::matcher::DEFAULT_K)]
    pub k: usize,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Results file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the selected problem reports as JSONL.
    #[arg(long)]
    pub problem_reports_out: Option<PathBuf>,
    #[command(flatten)]
    pub classify: ClassifyArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long, required_unless_present = "aggregate")]
    pub matches: Option<PathBuf>,
    #[arg(long, required_unless_present = "aggregate")]
    pub annotations: Option<PathBuf>,
    /// Per-app `{map, hit_ratio}` values to average instead of evaluating matches.
    #[arg(long, conflicts_with_all = ["matches", "annotations"])]
    pub aggregate: Option<PathBuf>,
    #[arg(long, default_value_t = feedmatch::matcher::DEFAULT_K)]
    pub k: usize,
    /// Problem report ids left out of MAP.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    #[arg(long, default_value = "macro", value_parser = ["macro", "micro"])]
    pub averaging: String,
    /// Reviews file used to group reports by app.
    #[arg(long)]
    pub reviews: Option<PathBuf>,
    /// Write judged scores as CSV for plotting.
    #[arg(long)]
    pub distribution_csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct OverlapArgs {
    /// Review texts: normalized reviews, or one plain text per line.
    #[arg(long)]
    pub reviews: PathBuf,
    /// Bug summaries: normalized bugs, or one plain summary per line.
    #[arg(long)]
    pub bugs: PathBuf,
    #[arg(long)]
    pub tagger_model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct UnmatchedArgs {
    #[arg(long)]
    pub reviews: PathBuf,
    #[arg(long)]
    pub bugs: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub classify: ClassifyArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Args)]
pub struct DatestatsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub reviews: PathBuf,
    #[arg(long)]
    pub bugs: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured bind address.
    #[arg(long)]
    pub bind: Option<String>,
    /// Use the deterministic hashing backend.
    #[arg(long)]
    pub test_backend: bool,
}

#[derive(Args)]
pub struct TokensArgs {
    /// Text to analyse; standard input when absent.
    #[arg(long)]
    pub text: Option<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Args)]
pub struct TrainTaggerArgs {
    /// Tagged sentence files, `word/TAG` tokens.
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    /// Word to tag lexicon used for features.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, default_value = "en")]
    pub name: String,
    #[arg(long, default_value_t = 8)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Hold out every n-th sentence and report accuracy on it.
    #[arg(long)]
    pub heldout_every: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments; usage errors always end with the usage line.
fn parse() -> Cli {
    Cli::try_parse().unwrap_or_else(|e| {
        if !e.use_stderr() {
            e.exit();
        }
        let rendered = e.render().to_string();
        eprint!("{rendered}");
        if !rendered.contains("Usage:") {
            let mut cmd = Cli::command();
            cmd.build();
            let sub = std::env::args().nth(1).unwrap_or_default();
            let usage = match cmd.find_subcommand_mut(&sub) {
                Some(c) => c.render_usage(),
                None => cmd.render_usage(),
            };
            eprintln!("\n{usage}");
        }
        std::process::exit(2)
    })
}

fn main() -> ExitCode {
    let cli = parse();
    let result = match cli.command {
        Command::Import(a) => commands::import(a),
        Command::Match(a) => commands::run_match(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Overlap(a) => commands::overlap(a),
        Command::Unmatched(a) => commands::unmatched(a),
        Command::Datestats(a) => commands::datestats(a),
        Command::Serve(a) => commands::serve(a),
        Command::Tokens(a) => commands::tokens(a),
        Command::TrainTagger(a) => commands::train_tagger(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
