mod common;

use std::path::Path;

use clap::Parser;
use common::*;
use vforge::cli::{cmd_run, Cli, Command, RunArgs};
use vforge::generation::ReplayStore;
use vforge::healing::{Episode, RunManifest, StopReason};
use vforge::testing::ScriptedToolchain;
use vforge::OutcomeCategory;

fn run_args(out: &Path, extra: &[&str]) -> RunArgs {
    let corpus = fixtures().join("corpus");
    let replay = replay_dir();
    let mut argv = vec![
        "vforge".to_string(),
        "run".into(),
        "--corpus".into(),
        corpus.display().to_string(),
        "--out".into(),
        out.display().to_string(),
        "--replay".into(),
        replay.display().to_string(),
    ];
    argv.extend(extra.iter().map(|s| s.to_string()));
    match Cli::try_parse_from(argv).unwrap().command {
        Command::Run(mut a) => {
            a.endpoint = None;
            *a
        }
        _ => unreachable!(),
    }
}

fn run(args: &RunArgs, tc: &ScriptedToolchain) -> (Vec<Episode>, String) {
    let mut progress = Vec::new();
    cmd_run(args, &ReplayStore::new(args.replay.clone().unwrap()), tc, &mut progress).unwrap();
    (RunManifest::in_dir(&args.out).load().unwrap(), String::from_utf8(progress).unwrap())
}

fn single_cell(out: &Path, model: &str) -> RunArgs {
    run_args(out, &["--models", model, "--temps", "0.0", "--strategy", "self-heal-signature", "--k", "1"])
}

#[test]
fn three_response_script_heals_and_passes_tests() {
    let dir = tempfile::tempdir().unwrap();
    let tc = scripted_toolchain();
    let (episodes, progress) = run(&single_cell(dir.path(), "fixture-coder"), &tc);
    // one episode per problem in the corpus
    assert_eq!(episodes.len(), 3);
    let e = episodes.iter().find(|e| e.problem_id == "uva-11172").unwrap();
    let cats: Vec<_> = e.rounds.iter().map(|r| r.category).collect();
    assert_eq!(
        cats,
        [OutcomeCategory::SyntaxError, OutcomeCategory::VerificationError, OutcomeCategory::Verified]
    );
    assert_eq!(e.stop_reason, StopReason::Verified);
    let functional = e.functional.as_ref().expect("verified episodes are tested");
    assert!(functional.passed, "{functional:?}");
    assert_eq!(functional.verdicts.len(), 6);
    assert!(e.warnings.is_empty());
    // feedback of round n is the verifier output of round n-1
    assert!(e.rounds[1].prompt.user.contains("lbrace expected"));
    assert!(e.rounds[2].prompt.user.contains("a postcondition could not be proved"));
    assert!(progress.contains("uva-11172 fixture-coder t=0 self-heal-signature #0: Verified after 3 round(s)"));

    // problems without scripted responses record a replay miss, not a crash
    let other = episodes.iter().find(|e| e.problem_id == "uva-10055").unwrap();
    assert_eq!(other.final_category, OutcomeCategory::ToolError);

    let artifacts = dir.path().join("episodes");
    let cell = std::fs::read_dir(&artifacts)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().contains("uva-11172"))
        .unwrap();
    assert!(cell.join("0/round-02/program.dfy").is_file());
}

#[test]
fn eleven_broken_responses_use_the_whole_budget() {
    let dir = tempfile::tempdir().unwrap();
    let tc = scripted_toolchain();
    let (episodes, _) = run(&single_cell(dir.path(), "fixture-stubborn"), &tc);
    let e = episodes.iter().find(|e| e.problem_id == "uva-10055").unwrap();
    assert_eq!(e.rounds.len(), 11);
    assert!(e.rounds.iter().all(|r| r.category == OutcomeCategory::SyntaxError));
    assert_eq!(e.stop_reason, StopReason::RepairBudgetExhausted);
    assert!(e.functional.is_none());
}

#[test]
fn rerun_reports_no_new_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let tc = scripted_toolchain();
    let args = single_cell(dir.path(), "fixture-coder");
    let (first, _) = run(&args, &tc);
    let before = std::fs::read_to_string(RunManifest::in_dir(dir.path()).path()).unwrap();
    let (second, progress) = run(&args, &tc);
    assert_eq!(first, second);
    assert!(progress.contains("0 new episodes"));
    assert_eq!(std::fs::read_to_string(RunManifest::in_dir(dir.path()).path()).unwrap(), before);
}

fn sorted_normalized(mut episodes: Vec<Episode>) -> Vec<String> {
    let mut lines: Vec<String> =
        episodes.drain(..).map(|e| serde_json::to_string(&e.without_timings()).unwrap()).collect();
    lines.sort();
    lines
}

#[test]
fn worker_count_does_not_change_results() {
    let tc = scripted_toolchain();
    let extra = |jobs: &'static str| {
        vec![
            "--models",
            "fixture-coder,fixture-stubborn",
            "--temps",
            "0.0,0.4",
            "--k",
            "3",
            "--jobs",
            jobs,
        ]
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (one, _) = run(&run_args(a.path(), &extra("1")), &tc);
    let (eight, _) = run(&run_args(b.path(), &extra("8")), &tc);
    // 3 problems x 4 strategies x 2 models x 2 temperatures x 3 attempts
    assert_eq!(one.len(), 144);
    assert_eq!(sorted_normalized(one), sorted_normalized(eight));
}
