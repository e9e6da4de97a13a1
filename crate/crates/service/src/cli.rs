//! `viva-cbt` subcommands.
//!
//! Exit codes: 0 success, 1 validation or evaluation failure, 2 usage error.

use std::fs::File;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use viva_cbt_core::evaluation::{
    compare_with_reference, evaluate, load_dataset, load_reference, render_chart_csv, render_table, Strategy,
};
use viva_cbt_core::normalizer::{normalize_answer, HomophoneTable, Transcript};
use viva_cbt_core::question_bank::{load_bank, parse_bank, validate_bank, Bank};

use crate::api::{router, AppState};

pub const BANK_ENV: &str = "VIVA_CBT_BANK";

#[derive(Debug, Parser)]
#[command(name = "viva-cbt", version, about = "Audio-first computer-based test service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP exam service.
    Serve(ServeArgs),
    /// Check a bank file and list every problem found.
    ValidateBank {
        #[arg(env = BANK_ENV)]
        file: PathBuf,
    },
    /// Per-label precision/recall/F1 of a normalization strategy over a
    /// labeled transcript dataset.
    Eval(EvalArgs),
    /// Show how a transcript is matched against one question.
    Normalize(NormalizeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = BANK_ENV)]
    pub bank: PathBuf,
    /// Session log (JSONL); created if missing, replayed on start.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Homophone/filler table (JSON); the built-in table is used otherwise.
    #[arg(long)]
    pub homophones: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StrategyArg {
    Exact,
    Homophone,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Exact => Strategy::ExactLetter,
            StrategyArg::Homophone => Strategy::Homophone,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with header `person,response,label`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Reference metrics CSV (`label,tp,fp,fn,n,precision,recall,f1`) to
    /// compare against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Write `label,precision,recall,f1` chart data here.
    #[arg(long)]
    pub chart: Option<PathBuf>,
    #[arg(long)]
    pub homophones: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[arg(long)]
    pub question: u32,
    #[arg(long, env = BANK_ENV)]
    pub bank: PathBuf,
    /// Exam to use; defaults to the first exam in the bank.
    #[arg(long)]
    pub exam: Option<String>,
    #[arg(long)]
    pub homophones: Option<PathBuf>,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn failed(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Failed(format!("{}: {e}", path.display()))
}

fn load_table(path: Option<&Path>) -> Result<HomophoneTable, CliError> {
    match path {
        None => Ok(HomophoneTable::default()),
        Some(p) => HomophoneTable::from_reader(open(p)?).map_err(|e| failed(p, e)),
    }
}

fn load_valid_bank(path: &Path) -> Result<Bank, CliError> {
    load_bank(open(path)?).map_err(|e| failed(path, e))
}

/// Runs every subcommand except `serve`, writing its output to `out`.
pub fn run(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Serve(_) => Err(CliError::Usage("serve must be run through serve()".into())),
        Command::ValidateBank { file } => validate(file, out),
        Command::Eval(args) => eval(args, out),
        Command::Normalize(args) => normalize(args, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Failed(format!("cannot write output: {e}")))
}

fn validate(file: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let bank = parse_bank(open(file)?).map_err(|e| failed(file, e))?;
    let violations = validate_bank(&bank);
    if violations.is_empty() {
        return write_out(out, "OK\n");
    }
    let mut text = String::new();
    for v in &violations {
        text.push_str(&format!("{v}\n"));
    }
    write_out(out, &text)?;
    Err(CliError::Failed(format!(
        "{} problem(s) in {}",
        violations.len(),
        file.display()
    )))
}

fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let table = load_table(args.homophones.as_deref())?;
    let records = load_dataset(open(&args.dataset)?).map_err(|e| failed(&args.dataset, e))?;
    let mut report = evaluate(&records, args.strategy.into(), &table);
    if let Some(path) = &args.reference {
        let reference = load_reference(open(path)?).map_err(|e| failed(path, e))?;
        report.discrepancies = compare_with_reference(&report, &reference);
    }
    if let Some(path) = &args.chart {
        std::fs::write(path, render_chart_csv(&report)).map_err(|e| failed(path, e))?;
    }
    if args.json {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_out(out, &format!("{json}\n"))
    } else {
        write_out(out, &render_table(&report))
    }
}

fn normalize(args: &NormalizeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bank = load_valid_bank(&args.bank)?;
    let table = load_table(args.homophones.as_deref())?;
    let exam = match &args.exam {
        Some(id) => bank.exam(id),
        None => bank.exams.first(),
    }
    .ok_or_else(|| CliError::Failed("no such exam in bank".into()))?;
    let question = exam
        .question(args.question)
        .ok_or_else(|| CliError::Failed(format!("exam {:?} has no question {}", exam.exam_id, args.question)))?;
    let result = normalize_answer(&Transcript::new(args.text.clone()), question, &table);
    write_out(out, &format!("{result}\n"))
}

/// Loads the bank, recovers sessions from the log, and serves until Ctrl-C.
pub async fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let bank = load_valid_bank(&args.bank)?;
    let table = load_table(args.homophones.as_deref())?;
    let state = AppState::open(bank, table, &args.log).map_err(|e| failed(&args.log, e))?;
    tracing::info!(sessions = state.session_count(), "recovered session log");
    let listener = tokio::net::TcpListener::bind(args.listen)
        .await
        .map_err(|e| CliError::Failed(format!("cannot listen on {}: {e}", args.listen)))?;
    tracing::info!("listening on {}", args.listen);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Failed(format!("server error: {e}")))
}
