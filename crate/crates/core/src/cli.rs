//! Command-line surface: `run`, `report`, `classify`, `validate`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::corpus::{check_file_name, load_corpus, read_problem_files, validate_problem};
use crate::generation::{Generator, LiveClient, ReplayStore, ENDPOINT_ENV};
use crate::healing::{run_matrix, HealingConfig, MatrixOutcome, MatrixSpec, RunManifest};
use crate::metrics::{emit_report, ReportFormat};
use crate::prompting::Strategy;
use crate::toolchain::{DafnyCli, Toolchain, DAFNY_ENV};
use crate::verification::{classify, OutcomeCategory, VerifierReport};

#[derive(Debug, Parser)]
#[command(name = "vforge", version, about = "Synthesize verified Dafny programs and report verify@k")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the synthesis matrix and append episodes to <out>/manifest.jsonl
    Run(Box<RunArgs>),
    /// Write summary and error tables for a run directory
    Report(ReportArgs),
    /// Classify a saved verifier transcript
    Classify(ClassifyArgs),
    /// Check a corpus directory against the problem schema
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Directory of problem JSON files
    #[arg(long)]
    pub corpus: PathBuf,
    /// Run directory for the manifest and per-episode artifacts
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated model identifiers
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<String>,
    /// Comma-separated sampling temperatures in [0, 1]
    #[arg(long, value_delimiter = ',', default_value = "0.0,0.2,0.4,0.6,0.8")]
    pub temps: Vec<f64>,
    /// Prompting strategy; repeat for several (default: all four)
    #[arg(long = "strategy")]
    pub strategies: Vec<Strategy>,
    /// Independent attempts per cell
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Repair rounds allowed after the first generation
    #[arg(long, default_value_t = 10)]
    pub max_repairs: usize,
    /// Seconds to wait for one model response
    #[arg(long, default_value_t = 180)]
    pub llm_timeout_secs: u64,
    /// Seconds allowed for one verifier run
    #[arg(long, default_value_t = 120)]
    pub verify_timeout_secs: u64,
    /// Seconds allowed per functional test case
    #[arg(long, default_value_t = 10)]
    pub case_timeout_secs: u64,
    /// Concurrent episodes
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
    /// Base URL of an OpenAI-compatible chat-completions server
    #[arg(long, env = ENDPOINT_ENV)]
    pub endpoint: Option<String>,
    /// Directory of recorded responses to serve instead of a live model
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Path to the dafny executable (default: PATH lookup)
    #[arg(long, env = DAFNY_ENV)]
    pub dafny_path: Option<PathBuf>,
    /// Optional cap on generated tokens per response
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run directory containing manifest.jsonl; tables are written here
    #[arg(long)]
    pub out: PathBuf,
    /// markdown or csv
    #[arg(long, default_value = "markdown")]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    /// File holding the verifier's combined output
    pub file: PathBuf,
    /// Exit code the verifier returned
    #[arg(long, allow_negative_numbers = true)]
    pub exit_code: Option<i32>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Directory of problem JSON files
    #[arg(long)]
    pub corpus: PathBuf,
}

impl RunArgs {
    pub fn strategies(&self) -> Vec<Strategy> {
        if self.strategies.is_empty() {
            Strategy::ALL.to_vec()
        } else {
            let mut s = self.strategies.clone();
            s.sort();
            s.dedup();
            s
        }
    }

    pub fn healing_config(&self) -> HealingConfig {
        HealingConfig {
            max_repairs: self.max_repairs,
            llm_timeout: Duration::from_secs(self.llm_timeout_secs),
            verify_timeout: Duration::from_secs(self.verify_timeout_secs),
            case_timeout: Duration::from_secs(self.case_timeout_secs),
            max_tokens: self.max_tokens,
        }
    }

    pub fn matrix_spec(&self) -> MatrixSpec {
        MatrixSpec {
            models: self.models.clone(),
            temperatures: self.temps.clone(),
            strategies: self.strategies(),
            k: self.k,
            jobs: self.jobs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.endpoint, &self.replay) {
            (None, None) => bail!("one of --endpoint (or {ENDPOINT_ENV}) and --replay is required"),
            (Some(_), Some(_)) => bail!("--endpoint and --replay are mutually exclusive"),
            _ => {}
        }
        if self.models.iter().any(|m| m.trim().is_empty()) {
            bail!("--models contains an empty name");
        }
        if let Some(t) = self.temps.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            bail!("temperature {t} is outside [0, 1]");
        }
        for (name, v) in [
            ("--k", self.k as u64),
            ("--jobs", self.jobs as u64),
            ("--llm-timeout-secs", self.llm_timeout_secs),
            ("--verify-timeout-secs", self.verify_timeout_secs),
            ("--case-timeout-secs", self.case_timeout_secs),
        ] {
            if v == 0 {
                bail!("{name} must be at least 1");
            }
        }
        Ok(())
    }

    pub fn generator(&self) -> Box<dyn Generator> {
        match (&self.replay, &self.endpoint) {
            (Some(dir), _) => Box::new(ReplayStore::new(dir)),
            (None, Some(url)) => Box::new(LiveClient::new(url.clone(), self.jobs)),
            (None, None) => unreachable!("validated"),
        }
    }
}

/// Runs the matrix with the given backends, streaming one progress line per
/// finished episode to `progress`.
pub fn cmd_run(
    args: &RunArgs,
    generator: &dyn Generator,
    toolchain: &dyn Toolchain,
    progress: &mut dyn Write,
) -> Result<MatrixOutcome> {
    args.validate()?;
    let corpus = load_corpus(&args.corpus).with_context(|| format!("loading corpus {}", args.corpus.display()))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut done = 0usize;
    let outcome = run_matrix(
        &args.matrix_spec(),
        &corpus,
        &args.healing_config(),
        generator,
        toolchain,
        &args.out,
        &mut |e| {
            done += 1;
            let _ = writeln!(
                progress,
                "[{done}] {} {} t={} {} #{}: {} after {} round(s)",
                e.problem_id,
                e.model,
                e.temperature,
                e.strategy,
                e.attempt,
                e.final_category,
                e.rounds.len()
            );
        },
    )?;
    for (problem, strategy) in &outcome.skipped_cells {
        writeln!(progress, "note: skipped {strategy} for {problem} (no signature)")?;
    }
    if outcome.new_episodes == 0 {
        writeln!(progress, "0 new episodes ({} already recorded)", outcome.already_recorded)?;
    } else {
        writeln!(progress, "{} new episodes written to {}", outcome.new_episodes, RunManifest::in_dir(&args.out).path().display())?;
    }
    Ok(outcome)
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::in_dir(&args.out);
    if !manifest.path().is_file() {
        bail!("no manifest at {}", manifest.path().display());
    }
    let episodes = manifest.load()?;
    let files = emit_report(&episodes, &args.out, args.format)?;
    for f in &files {
        writeln!(out, "wrote {}", f.display())?;
    }
    Ok(files)
}

/// Classifies a saved transcript. A blank transcript with exit code 0 is
/// taken as a clean verifier run.
pub fn classify_transcript(text: &str, exit_code: Option<i32>) -> (VerifierReport, OutcomeCategory) {
    let report = VerifierReport::from_output(exit_code, text.to_string(), String::new(), Duration::ZERO, false);
    let category = if text.trim().is_empty() && exit_code == Some(0) {
        OutcomeCategory::Verified
    } else {
        classify(&report, true)
    };
    (report, category)
}

pub fn cmd_classify(args: &ClassifyArgs, out: &mut dyn Write) -> Result<OutcomeCategory> {
    let text = fs::read_to_string(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let (report, category) = classify_transcript(&text, args.exit_code);
    for d in &report.diagnostics {
        let loc = match (d.line, d.column) {
            (Some(l), Some(c)) => format!("{}({l},{c})", d.file),
            _ => d.file.clone(),
        };
        writeln!(out, "{loc} [{:?}/{:?}] {}", d.severity, d.phase_hint, d.message)?;
    }
    writeln!(out, "{category}")?;
    Ok(category)
}

/// Prints one line per problem; returns whether every problem is clean.
pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<bool> {
    let files = read_problem_files(&args.corpus)?;
    let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut clean = true;
    for (file, problem) in &files {
        let mut problems: Vec<String> = validate_problem(problem).violations.iter().map(|v| v.to_string()).collect();
        if let Err(e) = check_file_name(file, problem) {
            problems.push(e.to_string());
        }
        if let Some(first) = seen.insert(problem.id.clone(), file.clone()) {
            problems.push(format!("duplicate id, also defined in {}", first.display()));
        }
        if problems.is_empty() {
            let note = if problem.has_signature() { "" } else { " (no signature: signature strategies will skip it)" };
            writeln!(out, "{}: ok{note}", problem.id)?;
        } else {
            clean = false;
            for p in problems {
                writeln!(out, "{}: {p}", problem.id)?;
            }
        }
    }
    writeln!(out, "{} problem file(s) checked", files.len())?;
    Ok(clean)
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            args.validate()?;
            let toolchain = DafnyCli::discover(args.dafny_path.as_deref(), args.out.join("work"))?;
            let generator = args.generator();
            cmd_run(&args, generator.as_ref(), &toolchain, err)?;
            Ok(true)
        }
        Command::Report(args) => cmd_report(&args, out).map(|_| true),
        Command::Classify(args) => cmd_classify(&args, out).map(|_| true),
        Command::Validate(args) => cmd_validate(&args, out),
    }
}

/// Parses `argv` and executes; returns the process exit code.
pub fn main_with_args<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            2
        }
    }
}

/// Manifest path for a run directory.
pub fn manifest_path(run_dir: &Path) -> PathBuf {
    RunManifest::in_dir(run_dir).path().to_path_buf()
}
