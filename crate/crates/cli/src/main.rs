//! `libiq` command-line entry point.
//!
//! Exit codes: 0 on success, 1 for user errors (bad flags, unreadable or
//! malformed inputs), 2 for internal failures. Errors are printed to stderr
//! as a single JSON object.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "libiq", version, about = "I/Q analysis, RFI classification and streaming tools")]
struct Cli {
    /// JSON file with default settings; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Where to write the run manifest (defaults to beside the output).
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled capture corpus.
    Gen(commands::GenArgs),
    /// Build a feature dataset from captures or a corpus.
    Dataset(commands::DatasetArgs),
    /// Train the CNN classifier.
    Train(commands::TrainArgs),
    /// Evaluate a model on a dataset or corpus bins.
    Eval(commands::EvalArgs),
    /// Label the series in a capture file.
    Classify(commands::ClassifyArgs),
    /// Stream capture vectors as frames over TCP.
    Serve(commands::ServeArgs),
    /// Classify a live frame stream.
    Stream(commands::StreamArgs),
    /// Render a spectrogram of a capture.
    Spectrogram(commands::SpectrogramArgs),
    /// Scatter plot of one capture vector.
    Plot(commands::PlotArgs),
}

/// Marks an error as caused by the invocation rather than the tool.
#[derive(Debug)]
pub struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(format!("{e:#}")))
}

#[macro_export]
macro_rules! bail_usage {
    ($($arg:tt)*) => {
        return Err($crate::usage(anyhow::anyhow!($($arg)*)))
    };
}

/// `(exit code, kind)` for an error chain.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return (1, "usage");
        }
        if let Some(e) = cause.downcast_ref::<libiq::Error>() {
            return (1, e.kind());
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (1, "io");
        }
    }
    (2, "internal")
}

fn report(code: u8, kind: &str, message: &str) -> ExitCode {
    let err = json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{err}");
    ExitCode::from(code)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = commands::Context {
        file,
        manifest: cli.manifest,
    };
    match cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::Dataset(a) => commands::dataset(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Classify(a) => commands::classify(&ctx, a),
        Command::Serve(a) => commands::serve(&ctx, a),
        Command::Stream(a) => commands::stream(&ctx, a),
        Command::Spectrogram(a) => commands::spectrogram(&ctx, a),
        Command::Plot(a) => commands::plot(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return report(1, "usage", e.kind().as_str().unwrap_or("invalid arguments"));
        }
    };

    std::panic::set_hook(Box::new(|info| {
        let msg = match info.payload().downcast_ref::<&str>() {
            Some(s) => s.to_string(),
            None => info.payload().downcast_ref::<String>().cloned().unwrap_or_default(),
        };
        let at = info.location().map(|l| format!(" at {l}")).unwrap_or_default();
        report(2, "internal", &format!("panic: {msg}{at}"));
    }));

    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            let (code, kind) = classify(&e);
            report(code, kind, &format!("{e:#}"))
        }
        Err(_) => ExitCode::from(2),
    }
}
