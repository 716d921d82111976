#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use vforge::corpus::load_corpus;
use vforge::functional::ExecutionResult;
use vforge::generation::{ChatMessage, GenerationRequest, ReplayStore};
use vforge::healing::{Episode, Round, StopReason};
use vforge::testing::ScriptedToolchain;
use vforge::{Corpus, OutcomeCategory, PromptText, Strategy};

/// Set to regenerate derived fixture files instead of checking them.
pub const BLESS_ENV: &str = "VFORGE_BLESS";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn corpus() -> Corpus {
    load_corpus(&fixtures().join("corpus")).expect("fixture corpus loads")
}

pub fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

pub fn dafny_fixture(name: &str) -> String {
    read(&fixtures().join("dafny").join(name))
}

/// Compares `actual` with the file at `path`, or rewrites the file when
/// blessing.
pub fn check_or_bless(path: &Path, actual: &str) -> Result<(), String> {
    if std::env::var_os(BLESS_ENV).is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, actual).unwrap();
        return Ok(());
    }
    match fs::read_to_string(path) {
        Ok(expected) if expected == actual => Ok(()),
        Ok(expected) => Err(format!(
            "{} differs from generated output\n--- expected\n{expected}\n--- actual\n{actual}",
            path.display()
        )),
        Err(e) => Err(format!("{}: {e} (run with {BLESS_ENV}=1 to create)", path.display())),
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Script {
    pub name: String,
    pub problem: String,
    pub strategy: Strategy,
    pub model: String,
    pub temperature: f64,
    pub responses: Vec<String>,
}

pub fn scripts() -> Vec<Script> {
    serde_json::from_str(&read(&fixtures().join("replay/scripts.json"))).unwrap()
}

pub fn script(name: &str) -> Script {
    scripts().into_iter().find(|s| s.name == name).unwrap()
}

pub fn replay_dir() -> PathBuf {
    fixtures().join("replay/store")
}

/// Store file path and contents for every scripted response.
pub fn expected_replay_files() -> Vec<(PathBuf, String)> {
    let corpus = corpus();
    let store = ReplayStore::new(replay_dir());
    let mut out = Vec::new();
    for s in scripts() {
        let prompt = s.strategy.initial_prompt(corpus.get(&s.problem).unwrap()).unwrap();
        let mut req = GenerationRequest::new(
            s.model.clone(),
            s.temperature,
            vec![ChatMessage::system(prompt.system), ChatMessage::user(prompt.user)],
        );
        for response in &s.responses {
            let text = read(&fixtures().join("replay/responses").join(response));
            out.push((store.scripted_path(&req), text));
            req.messages.push(ChatMessage::assistant("(earlier response)"));
            req.messages.push(ChatMessage::user("(earlier feedback)"));
        }
    }
    out
}

/// Verifier transcripts for the fixture programs, in the toolchain's format.
pub fn scripted_toolchain() -> ScriptedToolchain {
    let tc = ScriptedToolchain::new();
    tc.verifies(&dafny_fixture("relational.dfy"));
    tc.verifies(&dafny_fixture("relational_vacuous.dfy"));
    tc.verifies(&dafny_fixture("magic_formula.dfy"));
    tc.on_verify(
        &dafny_fixture("relational_syntax.dfy"),
        2,
        "program.dfy(8,10): Error: lbrace expected\n1 parse errors detected in program.dfy\n",
    );
    tc.on_verify(
        &dafny_fixture("relational_unproved.dfy"),
        4,
        "program.dfy(12,2): Error: a postcondition could not be proved on this return path\n\
         program.dfy(6,10): Related location: this is the postcondition that could not be proved\n\n\
         Dafny program verifier finished with 1 verified, 1 error\n",
    );
    tc.on_verify(
        &dafny_fixture("hashmat_syntax.dfy"),
        2,
        "program.dfy(8,2): Error: semicolon expected\n1 parse errors detected in program.dfy\n",
    );
    tc.on_run(&dafny_fixture("relational.dfy"), |stdin| {
        let xs: Vec<i64> = stdin.split_whitespace().map(|t| t.parse().unwrap()).collect();
        let op = match xs[0].cmp(&xs[1]) {
            std::cmp::Ordering::Less => "<",
            std::cmp::Ordering::Greater => ">",
            std::cmp::Ordering::Equal => "=",
        };
        ok(format!("{op}\n"))
    });
    tc.on_run(&dafny_fixture("relational_vacuous.dfy"), |_| ok("=\n".into()));
    tc
}

fn ok(stdout: String) -> ExecutionResult {
    ExecutionResult { exit_code: Some(0), stdout, stderr: String::new(), wall_time: Duration::ZERO, timed_out: false }
}

#[derive(Debug, Clone, Deserialize)]
pub struct TableCell {
    pub model: String,
    pub strategy: Strategy,
    pub temperature: f64,
    /// Problems (out of 11) verified within the first k attempts.
    pub verified_within: BTreeMap<String, usize>,
}

pub const TABLE_PROBLEMS: usize = 11;
pub const TABLE_ATTEMPTS: usize = 5;

pub fn table_cells() -> Vec<TableCell> {
    serde_json::from_str(&read(&fixtures().join("tables/cells.json"))).unwrap()
}

pub fn bare_round(index: usize, category: OutcomeCategory) -> Round {
    Round {
        index,
        prompt: PromptText { system: String::new(), user: String::new() },
        raw_response: None,
        extracted: None,
        report: None,
        category,
        generation_ms: 0,
        verify_ms: 0,
        note: None,
    }
}

pub fn bare_episode(
    problem: &str,
    model: &str,
    strategy: Strategy,
    temperature: f64,
    attempt: usize,
    categories: &[OutcomeCategory],
) -> Episode {
    let rounds: Vec<Round> = categories.iter().enumerate().map(|(i, &c)| bare_round(i, c)).collect();
    let final_category = *categories.last().unwrap();
    Episode {
        problem_id: problem.to_string(),
        model: model.to_string(),
        temperature,
        strategy,
        attempt,
        rounds,
        final_category,
        stop_reason: if final_category == OutcomeCategory::Verified {
            StopReason::Verified
        } else {
            StopReason::SingleShot
        },
        functional: None,
        warnings: Vec::new(),
    }
}

/// Episodes realising each cell's counts: the first `v1` problems verify on
/// attempt 0, the next `v3 - v1` on attempt 2, the next `v5 - v3` on attempt 4.
pub fn table_episodes() -> Vec<Episode> {
    let mut out = Vec::new();
    for cell in table_cells() {
        let within = |k: &str| cell.verified_within[k];
        let (v1, v3, v5) = (within("1"), within("3"), within("5"));
        assert!(v1 <= v3 && v3 <= v5 && v5 <= TABLE_PROBLEMS, "cell counts must be nested");
        for p in 0..TABLE_PROBLEMS {
            let first_success = if p < v1 {
                Some(0)
            } else if p < v3 {
                Some(2)
            } else if p < v5 {
                Some(4)
            } else {
                None
            };
            for attempt in 0..TABLE_ATTEMPTS {
                let category = if first_success == Some(attempt) {
                    OutcomeCategory::Verified
                } else {
                    OutcomeCategory::VerificationError
                };
                out.push(bare_episode(
                    &format!("p{:02}", p + 1),
                    &cell.model,
                    cell.strategy,
                    cell.temperature,
                    attempt,
                    &[category],
                ));
            }
        }
    }
    out
}

pub fn manifest_text(episodes: &[Episode]) -> String {
    episodes.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect()
}
