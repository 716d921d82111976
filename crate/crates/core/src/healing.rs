//! Episodes: initial generation, the verifier-feedback repair loop, and the
//! batch matrix over problems, models, temperatures and strategies.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Problem};
use crate::functional::{self, FunctionalReport, DEFAULT_CASE_TIMEOUT};
use crate::generation::{extract_code, ChatMessage, GenerationError, GenerationRequest, Generator, DEFAULT_LLM_TIMEOUT};
use crate::prompting::{render_repair, PromptError, PromptText, Strategy};
use crate::toolchain::{Toolchain, DEFAULT_VERIFY_TIMEOUT};
use crate::verification::{classify, OutcomeCategory, VerifierReport};

pub const DEFAULT_MAX_REPAIRS: usize = 10;

/// Fed back in place of verifier output when a response held no code.
pub const NO_CODE_FEEDBACK: &str = "No Dafny code could be found in the previous response.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub index: usize,
    pub prompt: PromptText,
    pub raw_response: Option<String>,
    pub extracted: Option<String>,
    pub report: Option<VerifierReport>,
    pub category: OutcomeCategory,
    pub generation_ms: u64,
    pub verify_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Verified,
    SingleShot,
    RepairBudgetExhausted,
    RepeatedExtractionFailure,
    BackendFailure,
    ToolchainFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub problem_id: String,
    pub model: String,
    pub temperature: f64,
    pub strategy: Strategy,
    pub attempt: usize,
    pub rounds: Vec<Round>,
    #[serde(rename = "final")]
    pub final_category: OutcomeCategory,
    pub stop_reason: StopReason,
    #[serde(default)]
    pub functional: Option<FunctionalReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Episode {
    pub fn verified(&self) -> bool {
        self.final_category == OutcomeCategory::Verified
    }

    pub fn cell(&self) -> CellId {
        CellId {
            problem_id: self.problem_id.clone(),
            model: self.model.clone(),
            temperature_bits: self.temperature.to_bits(),
            strategy: self.strategy,
        }
    }

    /// Copy with every wall-clock measurement zeroed, for comparing runs.
    pub fn without_timings(&self) -> Episode {
        let mut e = self.clone();
        for r in &mut e.rounds {
            r.generation_ms = 0;
            r.verify_ms = 0;
            if let Some(report) = &mut r.report {
                report.wall_time = Duration::ZERO;
            }
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub problem_id: String,
    pub model: String,
    pub temperature_bits: u64,
    pub strategy: Strategy,
}

impl CellId {
    pub fn temperature(&self) -> f64 {
        f64::from_bits(self.temperature_bits)
    }

    /// Directory name for per-episode artifacts.
    pub fn dir_name(&self) -> String {
        let model: String =
            self.model.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect();
        format!("{}__{}__t{}__{}", self.problem_id, model, self.temperature(), self.strategy)
    }
}

#[derive(Debug, Clone)]
pub struct HealingConfig {
    pub max_repairs: usize,
    pub llm_timeout: Duration,
    pub verify_timeout: Duration,
    pub case_timeout: Duration,
    pub max_tokens: Option<u32>,
}

impl Default for HealingConfig {
    fn default() -> Self {
        HealingConfig {
            max_repairs: DEFAULT_MAX_REPAIRS,
            llm_timeout: DEFAULT_LLM_TIMEOUT,
            verify_timeout: DEFAULT_VERIFY_TIMEOUT,
            case_timeout: DEFAULT_CASE_TIMEOUT,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum HealingError {
    #[error("strategy {strategy} needs a method signature, but problem {problem} has none")]
    StrategyRequiresSignature { problem: String, strategy: Strategy },
    #[error("problem {problem}: {source}")]
    Prompt {
        problem: String,
        #[source]
        source: PromptError,
    },
}

/// Which cell and attempt an episode belongs to.
#[derive(Debug, Clone)]
pub struct EpisodeSpec<'a> {
    pub problem: &'a Problem,
    pub model: &'a str,
    pub temperature: f64,
    pub strategy: Strategy,
    pub attempt: usize,
}

/// Runs one episode to completion.
///
/// Round 0 uses the strategy's base prompt. Self-healing strategies then
/// append the model's response and a repair request built from the
/// verifier output, until a round verifies, two rounds in a row yield no
/// code, or `max_repairs` repairs have been made. Backend failures end the
/// episode with a recorded round. `artifacts`, when given, receives each
/// round's response, program and verifier output.
pub fn run_episode(
    spec: &EpisodeSpec<'_>,
    cfg: &HealingConfig,
    generator: &dyn Generator,
    toolchain: &dyn Toolchain,
    artifacts: Option<&Path>,
) -> Result<Episode, HealingError> {
    let problem = spec.problem;
    if spec.strategy.requires_signature() && !problem.has_signature() {
        return Err(HealingError::StrategyRequiresSignature { problem: problem.id.clone(), strategy: spec.strategy });
    }
    let initial = spec
        .strategy
        .initial_prompt(problem)
        .map_err(|source| HealingError::Prompt { problem: problem.id.clone(), source })?;

    let mut messages = vec![ChatMessage::system(&initial.system), ChatMessage::user(&initial.user)];
    let mut prompt = initial;
    let mut rounds: Vec<Round> = Vec::new();
    let mut no_code_streak = 0;
    let last_index = if spec.strategy.is_self_healing() { cfg.max_repairs } else { 0 };
    let mut stop_reason = StopReason::RepairBudgetExhausted;

    for index in 0..=last_index {
        let request = GenerationRequest {
            model: spec.model.to_string(),
            temperature: spec.temperature,
            messages: messages.clone(),
            timeout: cfg.llm_timeout,
            max_tokens: cfg.max_tokens,
        };
        let round_dir = artifacts.map(|d| d.join(format!("round-{index:02}")));

        let response = match generator.complete(&request) {
            Ok(r) => r,
            Err(e) => {
                let category =
                    if matches!(e, GenerationError::Timeout(_)) { OutcomeCategory::Timeout } else { OutcomeCategory::ToolError };
                rounds.push(Round {
                    index,
                    prompt: prompt.clone(),
                    raw_response: None,
                    extracted: None,
                    report: None,
                    category,
                    generation_ms: 0,
                    verify_ms: 0,
                    note: Some(e.to_string()),
                });
                stop_reason = StopReason::BackendFailure;
                break;
            }
        };
        let raw = response.raw_text;
        let generation_ms = response.latency.as_millis() as u64;
        write_artifact(round_dir.as_deref(), "response.txt", &raw);

        let (extracted, report, category, feedback, note) = match extract_code(&raw) {
            Err(_) => {
                no_code_streak += 1;
                (None, None, OutcomeCategory::ExtractionFailure, NO_CODE_FEEDBACK.to_string(), None)
            }
            Ok(code) => {
                no_code_streak = 0;
                write_artifact(round_dir.as_deref(), "program.dfy", &code);
                match toolchain.verify(&code, cfg.verify_timeout, round_dir.as_deref()) {
                    Ok(report) => {
                        let category = classify(&report, true);
                        let mut feedback = report.feedback_text();
                        if feedback.trim().is_empty() {
                            feedback = format!("The verifier exited with code {:?} and printed nothing.", report.exit_code);
                        }
                        write_artifact(round_dir.as_deref(), "verifier.txt", &feedback);
                        (Some(code), Some(report), category, feedback, None)
                    }
                    Err(e) => (Some(code), None, OutcomeCategory::ToolError, String::new(), Some(e.to_string())),
                }
            }
        };
        let verify_ms = report.as_ref().map_or(0, |r| r.wall_time.as_millis() as u64);
        let toolchain_failed = report.is_none() && extracted.is_some();
        rounds.push(Round {
            index,
            prompt: prompt.clone(),
            raw_response: Some(raw.clone()),
            extracted: extracted.clone(),
            report,
            category,
            generation_ms,
            verify_ms,
            note,
        });

        if category == OutcomeCategory::Verified {
            stop_reason = StopReason::Verified;
            break;
        }
        if toolchain_failed {
            stop_reason = StopReason::ToolchainFailure;
            break;
        }
        if no_code_streak >= 2 {
            stop_reason = StopReason::RepeatedExtractionFailure;
            break;
        }
        if !spec.strategy.is_self_healing() {
            stop_reason = StopReason::SingleShot;
            break;
        }
        if index == last_index {
            break;
        }
        let repair = render_repair(extracted.as_deref().unwrap_or(&raw), &feedback)
            .expect("feedback text is never empty");
        messages.push(ChatMessage::assistant(raw));
        messages.push(ChatMessage::user(&repair.user));
        prompt = repair;
    }

    let final_category = rounds.last().map(|r| r.category).unwrap_or(OutcomeCategory::ToolError);
    let mut episode = Episode {
        problem_id: problem.id.clone(),
        model: spec.model.to_string(),
        temperature: spec.temperature,
        strategy: spec.strategy,
        attempt: spec.attempt,
        rounds,
        final_category,
        stop_reason,
        functional: None,
        warnings: Vec::new(),
    };
    if episode.verified() {
        let code = episode.rounds.last().and_then(|r| r.extracted.clone()).unwrap_or_default();
        if let Some(w) = functional::weak_spec_warning(&code, problem.signature.as_deref()) {
            episode.warnings.push(w);
        }
        if !problem.tests.is_empty() {
            episode.functional = functional::run_suite(toolchain, &code, &problem.tests, cfg.case_timeout).ok();
        }
    }
    Ok(episode)
}

fn write_artifact(dir: Option<&Path>, name: &str, contents: &str) {
    if let Some(dir) = dir {
        // artifacts are best-effort forensics; the manifest is the record
        if fs::create_dir_all(dir).is_ok() {
            let _ = fs::write(dir.join(name), contents);
        }
    }
}

/// Append-only JSONL file with one episode per line.
#[derive(Debug, Clone)]
pub struct RunManifest {
    path: PathBuf,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error on manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path} line {line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl RunManifest {
    pub const FILE_NAME: &'static str = "manifest.jsonl";

    pub fn new(path: impl Into<PathBuf>) -> Self {
        RunManifest { path: path.into() }
    }

    pub fn in_dir(dir: &Path) -> Self {
        RunManifest::new(dir.join(Self::FILE_NAME))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: std::io::Error) -> ManifestError {
        ManifestError::Io { path: self.path.clone(), source }
    }

    /// All recorded episodes; a missing file reads as empty.
    pub fn load(&self) -> Result<Vec<Episode>, ManifestError> {
        let file = match fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.io(e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| self.io(e))?;
            if line.trim().is_empty() {
                continue;
            }
            let episode = serde_json::from_str(&line)
                .map_err(|source| ManifestError::Parse { path: self.path.clone(), line: i + 1, source })?;
            out.push(episode);
        }
        Ok(out)
    }

    pub fn append(&self, episode: &Episode) -> Result<(), ManifestError> {
        if let Some(parent) = self.path.parent() {
            fs::create_dir_all(parent).map_err(|e| self.io(e))?;
        }
        let mut line = serde_json::to_string(episode).expect("episode serializes");
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(|e| self.io(e))?;
        f.write_all(line.as_bytes()).map_err(|e| self.io(e))
    }
}

#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub models: Vec<String>,
    pub temperatures: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub k: usize,
    pub jobs: usize,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct MatrixOutcome {
    pub new_episodes: usize,
    pub already_recorded: usize,
    /// Cells skipped because the strategy needs a signature the problem lacks.
    pub skipped_cells: Vec<(String, Strategy)>,
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("invalid matrix configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Healing(#[from] HealingError),
}

struct Job<'a> {
    problem: &'a Problem,
    model: &'a str,
    temperature: f64,
    strategy: Strategy,
    attempt: usize,
}

/// Runs `k` independent episodes for every (problem, model, temperature,
/// strategy) cell on a pool of `jobs` workers, appending each finished
/// episode to the manifest in `out_dir`. Attempts already in the manifest
/// are not re-run.
pub fn run_matrix(
    spec: &MatrixSpec,
    corpus: &Corpus,
    cfg: &HealingConfig,
    generator: &dyn Generator,
    toolchain: &dyn Toolchain,
    out_dir: &Path,
    on_episode: &mut dyn FnMut(&Episode),
) -> Result<MatrixOutcome, MatrixError> {
    if spec.k == 0 {
        return Err(MatrixError::InvalidConfig("k must be at least 1".into()));
    }
    if spec.jobs == 0 {
        return Err(MatrixError::InvalidConfig("jobs must be at least 1".into()));
    }
    if let Some(t) = spec.temperatures.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(MatrixError::InvalidConfig(format!("temperature {t} outside [0, 1]")));
    }
    let manifest = RunManifest::in_dir(out_dir);
    let done: HashSet<(CellId, usize)> = manifest.load()?.iter().map(|e| (e.cell(), e.attempt)).collect();

    let mut outcome = MatrixOutcome::default();
    let mut jobs = Vec::new();
    for problem in corpus.problems() {
        for strategy in &spec.strategies {
            if strategy.requires_signature() && !problem.has_signature() {
                outcome.skipped_cells.push((problem.id.clone(), *strategy));
                continue;
            }
            for model in &spec.models {
                for &temperature in &spec.temperatures {
                    for attempt in 0..spec.k {
                        let cell = CellId {
                            problem_id: problem.id.clone(),
                            model: model.clone(),
                            temperature_bits: temperature.to_bits(),
                            strategy: *strategy,
                        };
                        if done.contains(&(cell, attempt)) {
                            outcome.already_recorded += 1;
                        } else {
                            jobs.push(Job { problem, model, temperature, strategy: *strategy, attempt });
                        }
                    }
                }
            }
        }
    }

    let next = AtomicUsize::new(0);
    let episodes_dir = out_dir.join("episodes");
    let (tx, rx) = mpsc::channel::<Result<Episode, HealingError>>();
    let mut first_error: Option<MatrixError> = None;
    std::thread::scope(|scope| {
        for _ in 0..spec.jobs.min(jobs.len()) {
            let tx = tx.clone();
            let (jobs, next, episodes_dir) = (&jobs, &next, &episodes_dir);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let spec = EpisodeSpec {
                    problem: job.problem,
                    model: job.model,
                    temperature: job.temperature,
                    strategy: job.strategy,
                    attempt: job.attempt,
                };
                let cell = CellId {
                    problem_id: job.problem.id.clone(),
                    model: job.model.to_string(),
                    temperature_bits: job.temperature.to_bits(),
                    strategy: job.strategy,
                };
                let dir = episodes_dir.join(cell.dir_name()).join(job.attempt.to_string());
                if tx.send(run_episode(&spec, cfg, generator, toolchain, Some(&dir))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // single writer
        for result in rx {
            match result {
                Ok(episode) => match manifest.append(&episode) {
                    Ok(()) => {
                        outcome.new_episodes += 1;
                        on_episode(&episode);
                    }
                    Err(e) => {
                        first_error.get_or_insert(e.into());
                    }
                },
                Err(e) => {
                    first_error.get_or_insert(e.into());
                }
            }
        }
    });
    match first_error {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TestCase;
    use crate::generation::ReplayStore;
    use crate::testing::ScriptedToolchain;

    const GOOD: &str = "method Solve(a: int) returns (r: int)\n  ensures r == a\n{\n  r := a;\n}";
    const BROKEN: &str = "method Solve(a: int) returns (r: int)\n{\n  r := a\n}";

    fn problem() -> Problem {
        Problem {
            id: "p1".into(),
            title: "Echo".into(),
            description: "Return the input.".into(),
            signature: Some("method Solve(a: int) returns (r: int)".into()),
            tags: vec![],
            source: None,
            tests: vec![],
        }
    }

    fn spec(p: &Problem, strategy: Strategy) -> EpisodeSpec<'_> {
        EpisodeSpec { problem: p, model: "m", temperature: 0.0, strategy, attempt: 0 }
    }

    fn script(store: &ReplayStore, p: &Problem, strategy: Strategy, responses: &[&str]) {
        let prompt = strategy.initial_prompt(p).unwrap();
        let mut req = GenerationRequest::new(
            "m",
            0.0,
            vec![ChatMessage::system(prompt.system), ChatMessage::user(prompt.user)],
        );
        for (i, r) in responses.iter().enumerate() {
            fs::write(store.scripted_path(&req), r).unwrap();
            req.messages.push(ChatMessage::assistant(*r));
            req.messages.push(ChatMessage::user(format!("feedback {i}")));
        }
    }

    fn toolchain() -> ScriptedToolchain {
        let tc = ScriptedToolchain::new();
        tc.verifies(GOOD);
        tc.on_verify(BROKEN, 2, "program.dfy(3,9): Error: rbrace expected\n1 parse errors detected in program.dfy");
        tc
    }

    #[test]
    fn single_shot_strategies_make_one_round() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let p = problem();
        script(&store, &p, Strategy::Contextless, &[BROKEN, GOOD]);
        let e = run_episode(&spec(&p, Strategy::Contextless), &HealingConfig::default(), &store, &toolchain(), None).unwrap();
        assert_eq!(e.rounds.len(), 1);
        assert_eq!(e.final_category, OutcomeCategory::SyntaxError);
        assert_eq!(e.stop_reason, StopReason::SingleShot);
    }

    #[test]
    fn repair_loop_stops_on_verified() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let p = problem();
        script(&store, &p, Strategy::SelfHealSignature, &[BROKEN, BROKEN, GOOD]);
        let tc = toolchain();
        let e = run_episode(&spec(&p, Strategy::SelfHealSignature), &HealingConfig::default(), &store, &tc, None).unwrap();
        assert_eq!(e.rounds.len(), 3);
        assert!(e.verified());
        assert_eq!(tc.verify_calls(), 3);
        // the repair message carries the verifier text, not the code
        assert!(e.rounds[1].prompt.user.contains("rbrace expected"));
        assert!(!e.rounds[1].prompt.user.contains("r := a"));
    }

    #[test]
    fn budget_bounds_rounds() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let p = problem();
        script(&store, &p, Strategy::SelfHealContextless, &[BROKEN; 12]);
        let cfg = HealingConfig { max_repairs: 3, ..Default::default() };
        let tc = toolchain();
        let e = run_episode(&spec(&p, Strategy::SelfHealContextless), &cfg, &store, &tc, None).unwrap();
        assert_eq!(e.rounds.len(), 4);
        assert_eq!(tc.verify_calls(), 4);
        assert_eq!(e.stop_reason, StopReason::RepairBudgetExhausted);
        assert_eq!(e.final_category, OutcomeCategory::SyntaxError);
    }

    #[test]
    fn two_empty_responses_stop_early() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let p = problem();
        script(&store, &p, Strategy::SelfHealSignature, &["I cannot help.", "Still no.", GOOD]);
        let e = run_episode(&spec(&p, Strategy::SelfHealSignature), &HealingConfig::default(), &store, &toolchain(), None).unwrap();
        assert_eq!(e.rounds.len(), 2);
        assert_eq!(e.stop_reason, StopReason::RepeatedExtractionFailure);
        assert!(e.rounds.iter().all(|r| r.extracted.is_none()));
        assert!(e.rounds[1].prompt.user.contains(NO_CODE_FEEDBACK));
    }

    #[test]
    fn one_empty_response_is_recoverable() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let p = problem();
        script(&store, &p, Strategy::SelfHealSignature, &["Thinking...", GOOD]);
        let e = run_episode(&spec(&p, Strategy::SelfHealSignature), &HealingConfig::default(), &store, &toolchain(), None).unwrap();
        assert_eq!(e.rounds.len(), 2);
        assert_eq!(e.rounds[0].category, OutcomeCategory::ExtractionFailure);
        assert!(e.verified());
    }

    #[test]
    fn replay_miss_is_a_tool_error_round() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let p = problem();
        let e = run_episode(&spec(&p, Strategy::SelfHealSignature), &HealingConfig::default(), &store, &toolchain(), None).unwrap();
        assert_eq!(e.rounds.len(), 1);
        assert_eq!(e.final_category, OutcomeCategory::ToolError);
        assert_eq!(e.stop_reason, StopReason::BackendFailure);
        assert!(e.rounds[0].note.as_ref().unwrap().contains("replay"));
    }

    #[test]
    fn signature_strategies_need_a_signature() {
        let mut p = problem();
        p.signature = None;
        let store = ReplayStore::new("/nonexistent");
        let err = run_episode(&spec(&p, Strategy::Signature), &HealingConfig::default(), &store, &toolchain(), None);
        assert!(matches!(err, Err(HealingError::StrategyRequiresSignature { .. })));
    }

    #[test]
    fn verified_episodes_get_functional_reports_and_warnings() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let mut p = problem();
        p.tests = vec![TestCase { input: "3".into(), expected_output: "3".into(), label: None }];
        let weak = "method Solve(a: int) returns (r: int)\n{\n  r := 0;\n}";
        script(&store, &p, Strategy::Signature, &[weak]);
        let tc = toolchain();
        tc.verifies(weak);
        tc.on_run(weak, |_| crate::functional::ExecutionResult {
            exit_code: Some(0),
            stdout: "0\n".into(),
            stderr: String::new(),
            wall_time: Duration::ZERO,
            timed_out: false,
        });
        let e = run_episode(&spec(&p, Strategy::Signature), &HealingConfig::default(), &store, &tc, None).unwrap();
        assert!(e.verified());
        assert_eq!(e.warnings.len(), 1);
        assert!(!e.functional.unwrap().passed);
    }

    #[test]
    fn artifacts_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path().join("replay"));
        fs::create_dir_all(store.dir()).unwrap();
        let p = problem();
        script(&store, &p, Strategy::SelfHealSignature, &[BROKEN, GOOD]);
        let out = dir.path().join("artifacts");
        run_episode(&spec(&p, Strategy::SelfHealSignature), &HealingConfig::default(), &store, &toolchain(), Some(&out)).unwrap();
        assert_eq!(fs::read_to_string(out.join("round-00/response.txt")).unwrap(), BROKEN);
        assert!(fs::read_to_string(out.join("round-00/verifier.txt")).unwrap().contains("rbrace"));
        assert!(out.join("round-01/program.dfy").exists());
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let p = problem();
        script(&store, &p, Strategy::SelfHealSignature, &[BROKEN, GOOD]);
        let e = run_episode(&spec(&p, Strategy::SelfHealSignature), &HealingConfig::default(), &store, &toolchain(), None).unwrap();
        let m = RunManifest::in_dir(&dir.path().join("run"));
        assert!(m.load().unwrap().is_empty());
        m.append(&e).unwrap();
        m.append(&e).unwrap();
        assert_eq!(m.load().unwrap(), vec![e.clone(), e]);
    }

    #[test]
    fn matrix_cardinality_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path().join("replay"));
        let corpus = Corpus::from_problems(vec![problem()]).unwrap();
        let spec = MatrixSpec {
            models: vec!["m".into()],
            temperatures: vec![0.0, 0.2],
            strategies: vec![Strategy::Signature],
            k: 3,
            jobs: 2,
        };
        let out = dir.path().join("run");
        let tc = toolchain();
        let first = run_matrix(&spec, &corpus, &HealingConfig::default(), &store, &tc, &out, &mut |_| {}).unwrap();
        assert_eq!(first.new_episodes, 6);
        let before = fs::read_to_string(out.join(RunManifest::FILE_NAME)).unwrap();
        let second = run_matrix(&spec, &corpus, &HealingConfig::default(), &store, &tc, &out, &mut |_| {}).unwrap();
        assert_eq!(second.new_episodes, 0);
        assert_eq!(second.already_recorded, 6);
        assert_eq!(fs::read_to_string(out.join(RunManifest::FILE_NAME)).unwrap(), before);

        let bigger = MatrixSpec { k: 4, ..spec };
        let third = run_matrix(&bigger, &corpus, &HealingConfig::default(), &store, &tc, &out, &mut |_| {}).unwrap();
        assert_eq!(third.new_episodes, 2);
    }

    #[test]
    fn matrix_skips_signature_cells_without_signature() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let mut p = problem();
        p.signature = None;
        let corpus = Corpus::from_problems(vec![p]).unwrap();
        let spec = MatrixSpec {
            models: vec!["m".into()],
            temperatures: vec![0.0],
            strategies: vec![Strategy::Contextless, Strategy::SelfHealSignature],
            k: 1,
            jobs: 1,
        };
        let out = run_matrix(&spec, &corpus, &HealingConfig::default(), &store, &toolchain(), dir.path(), &mut |_| {}).unwrap();
        assert_eq!(out.new_episodes, 1);
        assert_eq!(out.skipped_cells, vec![("p1".to_string(), Strategy::SelfHealSignature)]);
    }

    #[test]
    fn matrix_rejects_bad_config() {
        let corpus = Corpus::default();
        let store = ReplayStore::new("/nonexistent");
        let spec = MatrixSpec { models: vec![], temperatures: vec![], strategies: vec![], k: 0, jobs: 1 };
        let r = run_matrix(&spec, &corpus, &HealingConfig::default(), &store, &toolchain(), Path::new("/tmp"), &mut |_| {});
        assert!(matches!(r, Err(MatrixError::InvalidConfig(_))));
    }
}
