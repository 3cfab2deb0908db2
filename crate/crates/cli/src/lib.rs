//! The `lyralign` command: align, train, eval, triage, synth, bench and serve.
//!
//! Every subcommand reads its settings from built-in defaults, then the
//! matching table of an optional TOML file (`--config`), then flags.

pub mod align;
pub mod bench;
pub mod config;
pub mod eval;
mod inputs;
pub mod serve;
mod svg;
pub mod synth;
pub mod train;
pub mod triage;

use clap::{Parser, Subcommand};
use lyralign::par::Exec;
use std::ffi::OsString;
use std::path::PathBuf;

pub use inputs::{load_predictions, load_references, Reference, FAILURES_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lyralign", version, about = "Lyrics-to-audio alignment toolkit")]
pub struct Cli {
    /// TOML file with one table per subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-song work (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align lyrics to audio with the two-stage cascade.
    Align(align::AlignArgs),
    /// Train a sentence- or word-level model.
    Train(train::TrainArgs),
    /// Score predicted alignments against reference labels.
    Eval(eval::EvalArgs),
    /// Split predictions into accepted and rejected sets by confidence.
    Triage(triage::TriageArgs),
    /// Generate a synthetic corpus with known onsets.
    Synth(synth::SynthArgs),
    /// Time each stage of the cascade.
    Bench(bench::BenchArgs),
    /// Start the review HTTP service.
    Serve(serve::ServeArgs),
}

/// How a subcommand finished when it did not hit a fatal error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some songs failed; the rest were written.
    Partial,
}

impl Cli {
    pub fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }
}

/// Parses `args` and runs the subcommand, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::Partial) => EXIT_PARTIAL,
        Err(e) => {
            let msg = render_error(&e);
            tracing::error!("{msg}");
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

/// Joins the error chain with ": ", skipping causes whose text the previous
/// message already ends with (library errors often embed their source).
pub fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn dispatch(cli: &Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.jobs {
        anyhow::ensure!(n > 0, "--jobs must be at least 1");
        if !lyralign::par::set_threads(n) {
            tracing::warn!(jobs = n, "worker pool already initialised; --jobs ignored");
        }
    }
    let file = config::FileConfig::load(cli.config.as_deref())?;
    let exec = cli.exec();
    match &cli.command {
        Command::Align(a) => {
            let cfg = a.resolve(file.align)?;
            config::log_resolved("align", &cfg);
            let report = align::cmd_align(&cfg, exec)?;
            Ok(report.outcome())
        }
        Command::Train(a) => {
            let cfg = a.resolve(file.train)?;
            config::log_resolved("train", &cfg);
            let summary = train::cmd_train(&cfg, exec)?;
            println!("{}", summary.line());
            Ok(Outcome::Success)
        }
        Command::Eval(a) => {
            let cfg = a.resolve(file.eval)?;
            config::log_resolved("eval", &cfg);
            let report = eval::cmd_eval(&cfg, exec)?;
            print!("{}", eval::summary_table(&report.metrics));
            Ok(report.outcome())
        }
        Command::Triage(a) => {
            let cfg = a.resolve(file.triage)?;
            config::log_resolved("triage", &cfg);
            let report = triage::cmd_triage(&cfg)?;
            println!("{}", report.line());
            Ok(Outcome::Success)
        }
        Command::Synth(a) => {
            let cfg = a.resolve(file.synth)?;
            config::log_resolved("synth", &cfg);
            let manifest = synth::cmd_synth(&cfg)?;
            println!("{}", manifest.display());
            Ok(Outcome::Success)
        }
        Command::Bench(a) => {
            let cfg = a.resolve(file.bench)?;
            config::log_resolved("bench", &cfg);
            let report = bench::cmd_bench(&cfg, exec)?;
            print!("{}", report.table());
            Ok(Outcome::Success)
        }
        Command::Serve(a) => {
            let cfg = a.resolve(file.serve)?;
            config::log_resolved("serve", &cfg);
            serve::cmd_serve(&cfg)?;
            Ok(Outcome::Success)
        }
    }
}
