//! Functional validation: run verified programs against judge-style test
//! suites, so that code verified against a weak specification is caught.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TestCase;
use crate::toolchain::{Toolchain, ToolchainError};
use crate::verification::duration_ms;

pub const DEFAULT_CASE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    #[serde(with = "duration_ms")]
    pub wall_time: Duration,
    pub timed_out: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    WrongAnswer,
    RuntimeError,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub case_index: usize,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub verdicts: Vec<CaseVerdict>,
    pub passed: bool,
}

impl FunctionalReport {
    pub fn new(verdicts: Vec<CaseVerdict>) -> Self {
        let passed = !verdicts.is_empty() && verdicts.iter().all(|v| v.verdict == Verdict::Pass);
        FunctionalReport { verdicts, passed }
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.verdicts.iter().filter(|v| v.verdict == verdict).count()
    }
}

#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error("test suite is empty")]
    EmptySuite,
}

/// CRLF to LF, trailing whitespace stripped per line, trailing blank lines
/// dropped.
pub fn normalize_output(text: &str) -> String {
    let unified = text.replace("\r\n", "\n");
    let mut lines: Vec<&str> = unified.split('\n').map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

pub fn judge(result: &ExecutionResult, expected: &str) -> (Verdict, Option<String>) {
    if result.timed_out {
        return (Verdict::TimeLimit, None);
    }
    if result.exit_code != Some(0) {
        let tail = result.stderr.lines().last().unwrap_or("").trim();
        return (Verdict::RuntimeError, Some(format!("exit code {:?}: {tail}", result.exit_code)));
    }
    let got = normalize_output(&result.stdout);
    let want = normalize_output(expected);
    if got == want {
        return (Verdict::Pass, None);
    }
    let got_lines: Vec<&str> = got.split('\n').collect();
    let want_lines: Vec<&str> = want.split('\n').collect();
    let at = got_lines.iter().zip(&want_lines).position(|(g, w)| g != w).unwrap_or(got_lines.len().min(want_lines.len()));
    let summary = format!(
        "line {}: expected {:?}, got {:?}",
        at + 1,
        want_lines.get(at).copied().unwrap_or("<end of output>"),
        got_lines.get(at).copied().unwrap_or("<end of output>")
    );
    (Verdict::WrongAnswer, Some(summary))
}

/// Builds `src` (cached per source) and runs it once on `stdin_text`.
pub fn compile_and_run(
    toolchain: &dyn Toolchain,
    src: &str,
    stdin_text: &str,
    timeout: Duration,
) -> Result<ExecutionResult, ToolchainError> {
    let program = toolchain.build(src)?;
    toolchain.run(&program, stdin_text, timeout)
}

/// Runs every case in order; nothing short-circuits. A failed build marks
/// every case as a runtime error carrying the build diagnostics.
pub fn run_suite(
    toolchain: &dyn Toolchain,
    src: &str,
    tests: &[TestCase],
    timeout: Duration,
) -> Result<FunctionalReport, FunctionalError> {
    if tests.is_empty() {
        return Err(FunctionalError::EmptySuite);
    }
    let program = match toolchain.build(src) {
        Ok(p) => p,
        Err(e) => {
            let message = e.to_string();
            let verdicts = (0..tests.len())
                .map(|case_index| CaseVerdict {
                    case_index,
                    verdict: Verdict::RuntimeError,
                    diff_summary: Some(message.clone()),
                })
                .collect();
            return Ok(FunctionalReport::new(verdicts));
        }
    };
    let verdicts = tests
        .iter()
        .enumerate()
        .map(|(case_index, case)| match toolchain.run(&program, &case.input, timeout) {
            Ok(result) => {
                let (verdict, diff_summary) = judge(&result, &case.expected_output);
                CaseVerdict { case_index, verdict, diff_summary }
            }
            Err(e) => CaseVerdict { case_index, verdict: Verdict::RuntimeError, diff_summary: Some(e.to_string()) },
        })
        .collect();
    Ok(FunctionalReport::new(verdicts))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("divisor must be positive, got {0}")]
    NonPositiveDivisor(i64),
    #[error("upper bound must be non-negative, got {0}")]
    NegativeBound(i64),
    #[error("arithmetic overflow evaluating the quadratic")]
    Overflow,
}

/// Number of integers `x` in `0..=l` with `a*x^2 + b*x + c` divisible by
/// `d`, by direct enumeration.
pub fn oracle_magic_formula(a: i64, b: i64, c: i64, d: i64, l: i64) -> Result<u64, OracleError> {
    if d <= 0 {
        return Err(OracleError::NonPositiveDivisor(d));
    }
    if l < 0 {
        return Err(OracleError::NegativeBound(l));
    }
    let (a, b, c, d) = (a as i128, b as i128, c as i128, d as i128);
    let mut count = 0;
    for x in 0..=l as i128 {
        let value = a
            .checked_mul(x)
            .and_then(|v| v.checked_mul(x))
            .and_then(|v| v.checked_add(b.checked_mul(x)?))
            .and_then(|v| v.checked_add(c))
            .ok_or(OracleError::Overflow)?;
        if value.rem_euclid(d) == 0 {
            count += 1;
        }
    }
    Ok(count)
}

static DECL_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(?:method|function|lemma|predicate)\s+(?:\{:[^}]*\}\s*)*([A-Za-z_][\w']*)").unwrap());

/// Flags an entry method that carries no `ensures` clause.
///
/// The entry method is the one named in `signature`, or else the first
/// method not called `Main`. Returns the warning text when flagged.
pub fn weak_spec_warning(src: &str, signature: Option<&str>) -> Option<String> {
    let wanted = signature.and_then(|s| DECL_NAME.captures(s)).map(|c| c[1].to_string());
    let decl = DECL_NAME.captures_iter(src).find(|c| match &wanted {
        Some(name) => &c[1] == name,
        None => &c[0][..6] == "method" && &c[1] != "Main",
    })?;
    let name = decl[1].to_string();
    let after = &src[decl.get(0).unwrap().end()..];
    let mut depth = 0i32;
    let mut header_end = after.len();
    for (i, ch) in after.char_indices() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            '{' if depth == 0 && !after[i..].starts_with("{:") => {
                header_end = i;
                break;
            }
            _ => {}
        }
    }
    static ENSURES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bensures\b").unwrap());
    let header = &after[..header_end];
    let clauses = header.lines().map(|l| l.split("//").next().unwrap_or("")).filter(|l| ENSURES.is_match(l)).count();
    (clauses == 0).then(|| format!("entry method {name} has no ensures clause; verification may be vacuous"))
}
