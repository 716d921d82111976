//! Dafny diagnostics: parsing verifier output and classifying each round
//! into the error taxonomy.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseHint {
    Parse,
    Resolve,
    Verify,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub line: Option<u32>,
    pub column: Option<u32>,
    pub severity: Severity,
    pub message: String,
    pub phase_hint: PhaseHint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeCategory {
    Verified,
    SyntaxError,
    SemanticTypeError,
    VerificationError,
    Timeout,
    ExtractionFailure,
    ToolError,
}

impl OutcomeCategory {
    pub fn name(self) -> &'static str {
        match self {
            OutcomeCategory::Verified => "Verified",
            OutcomeCategory::SyntaxError => "SyntaxError",
            OutcomeCategory::SemanticTypeError => "SemanticTypeError",
            OutcomeCategory::VerificationError => "VerificationError",
            OutcomeCategory::Timeout => "Timeout",
            OutcomeCategory::ExtractionFailure => "ExtractionFailure",
            OutcomeCategory::ToolError => "ToolError",
        }
    }
}

impl std::fmt::Display for OutcomeCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierReport {
    /// `None` when the process was killed.
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(with = "duration_ms")]
    pub wall_time: Duration,
    pub verified: bool,
    #[serde(default)]
    pub timed_out: bool,
}

impl VerifierReport {
    /// Assembles a report from raw process output. `verified` requires exit
    /// code 0, a success summary line, and no error-severity diagnostics.
    pub fn from_output(
        exit_code: Option<i32>,
        stdout: String,
        stderr: String,
        wall_time: Duration,
        timed_out: bool,
    ) -> Self {
        let diagnostics = parse_diagnostics(&stdout, &stderr, exit_code.unwrap_or(-1));
        let summary_ok = [&stdout, &stderr].iter().any(|t| t.lines().any(success_summary));
        let verified = !timed_out
            && exit_code == Some(0)
            && summary_ok
            && !diagnostics.iter().any(|d| d.severity == Severity::Error);
        VerifierReport { exit_code, stdout, stderr, diagnostics, wall_time, verified, timed_out }
    }

    /// Verifier output as fed back to the model: stdout, then stderr.
    pub fn feedback_text(&self) -> String {
        let mut text = self.stdout.trim_end().to_string();
        let err = self.stderr.trim_end();
        if !err.is_empty() {
            if !text.is_empty() {
                text.push('\n');
            }
            text.push_str(err);
        }
        if self.timed_out {
            if !text.is_empty() {
                text.push('\n');
            }
            text.push_str(&format!("Verification was stopped after {} seconds.", self.wall_time.as_secs()));
        }
        text
    }
}

pub(crate) mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

static LOCATED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<file>.+?)\((?P<line>\d+),(?P<col>\d+)\):\s*(?P<sev>Error|Warning|error|warning)(?:\s+[A-Z]+\d+)?\s*:\s*(?P<msg>.*)$")
        .unwrap()
});

static SUMMARY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"Dafny program verifier finished with (\d+) verified, (\d+) errors?(?P<rest>.*)$").unwrap()
});

static COCO_EXPECTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\S+ expected$").unwrap());

/// Message fragments seen from the verifier stage (proof obligations).
const VERIFY_PATTERNS: &[&str] = &[
    "could not be proved",
    "might not hold",
    "might not be maintained",
    "might not decrease",
    "cannot prove termination",
    "decreases clause",
    "index out of range",
    "division by zero",
    "might violate",
    "might not satisfy",
    "does not satisfy the subset constraints",
    "might be null",
    "might be uninitialized",
    "out of resource",
    "timed out",
    "not proved",
];

/// Message fragments seen from the parser.
const PARSE_PATTERNS: &[&str] = &[
    "this symbol not expected",
    "invalid ",
    "unexpected",
    "parse error",
    "must be given a name",
    "not a valid",
];

/// Message fragments seen from name resolution and type checking.
const RESOLVE_PATTERNS: &[&str] = &[
    "unresolved identifier",
    "type mismatch",
    "incorrect type",
    "incorrect argument type",
    "not assignable",
    "does not exist",
    "undeclared",
    "wrong number of",
    "arguments must",
    "expected type",
    "is not a type",
    "ambiguous",
    "duplicate",
    "cannot be",
    "not allowed",
    "must be of type",
    "must have type",
    "underspecified",
    "not declared",
    "not found in",
    "no method",
    "no function",
    "is not a member",
    "cannot assign",
    "ghost",
    "types of",
    "not a method",
    "is not defined",
];

fn success_summary(line: &str) -> bool {
    SUMMARY.captures(line).is_some_and(|c| &c[2] == "0" && !c["rest"].chars().any(|ch| ch.is_ascii_digit() && ch != '0'))
}

/// Phase from the message text alone.
pub fn phase_of_message(message: &str) -> PhaseHint {
    let lower = message.to_lowercase();
    if VERIFY_PATTERNS.iter().any(|p| lower.contains(p)) {
        PhaseHint::Verify
    } else if COCO_EXPECTED.is_match(message.trim()) || PARSE_PATTERNS.iter().any(|p| lower.contains(p)) {
        PhaseHint::Parse
    } else if RESOLVE_PATTERNS.iter().any(|p| lower.contains(p)) {
        PhaseHint::Resolve
    } else {
        PhaseHint::Unknown
    }
}

/// Phase evidence from the toolchain's own summary lines and exit code.
fn phase_from_summary(text: &str, exit_code: i32) -> PhaseHint {
    let lower = text.to_lowercase();
    if lower.contains("parse errors detected") {
        PhaseHint::Parse
    } else if lower.contains("resolution/type errors detected") {
        PhaseHint::Resolve
    } else if exit_code == 4 || text.lines().any(|l| SUMMARY.is_match(l) && !success_summary(l)) {
        PhaseHint::Verify
    } else {
        PhaseHint::Unknown
    }
}

/// One diagnostic per `<file>(<line>,<col>): <severity>: <message>` line,
/// plus a location-free diagnostic for every other line mentioning an error.
pub fn parse_diagnostics(stdout: &str, stderr: &str, exit_code: i32) -> Vec<Diagnostic> {
    let combined = format!("{stdout}\n{stderr}");
    let fallback = phase_from_summary(&combined, exit_code);
    let mut out = Vec::new();
    for raw in stdout.lines().chain(stderr.lines()) {
        let line = raw.trim_end();
        if let Some(c) = LOCATED.captures(line) {
            let severity = if c["sev"].eq_ignore_ascii_case("error") { Severity::Error } else { Severity::Warning };
            let mut message = c["msg"].trim().to_string();
            if message.is_empty() {
                message = line.trim().to_string();
            }
            let mut phase_hint = phase_of_message(&message);
            if phase_hint == PhaseHint::Unknown && severity == Severity::Error {
                phase_hint = fallback;
            }
            out.push(Diagnostic {
                file: c["file"].trim().to_string(),
                line: c["line"].parse().ok(),
                column: c["col"].parse().ok(),
                severity,
                message,
                phase_hint,
            });
        } else if is_error_line(line) {
            let message = line.trim().to_string();
            out.push(Diagnostic {
                file: String::new(),
                line: None,
                column: None,
                severity: Severity::Error,
                phase_hint: phase_of_message(&message),
                message,
            });
        }
    }
    out
}

fn is_error_line(line: &str) -> bool {
    if line.contains("Error") {
        return true;
    }
    let t = line.trim_start().to_lowercase();
    t.starts_with("error:") || t.starts_with("fatal:") || t.starts_with("unhandled exception")
}

/// Total classification of one round.
///
/// Precedence after `Verified`: ExtractionFailure, Timeout, SyntaxError,
/// SemanticTypeError, VerificationError, ToolError.
pub fn classify(report: &VerifierReport, extraction_ok: bool) -> OutcomeCategory {
    if report.verified {
        return OutcomeCategory::Verified;
    }
    if !extraction_ok {
        return OutcomeCategory::ExtractionFailure;
    }
    if report.timed_out {
        return OutcomeCategory::Timeout;
    }
    let has = |phase| report.diagnostics.iter().any(|d| d.severity == Severity::Error && d.phase_hint == phase);
    if has(PhaseHint::Parse) {
        OutcomeCategory::SyntaxError
    } else if has(PhaseHint::Resolve) {
        OutcomeCategory::SemanticTypeError
    } else if has(PhaseHint::Verify) {
        OutcomeCategory::VerificationError
    } else {
        OutcomeCategory::ToolError
    }
}
