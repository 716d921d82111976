//! Problem dataset: one JSON file per problem, validated on load.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected_output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// One generalized task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub title: String,
    pub description: String,
    pub signature: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
    pub source: Option<String>,
    pub tests: Vec<TestCase>,
}

impl Problem {
    pub fn has_signature(&self) -> bool {
        self.signature.as_deref().is_some_and(|s| !s.trim().is_empty())
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("problem serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the per-problem invariants. Uniqueness of ids is a corpus-level
/// property and is enforced by [`load_corpus`].
pub fn validate_problem(p: &Problem) -> ValidationReport {
    let mut violations = Vec::new();
    if p.id.trim().is_empty() {
        violations.push(Violation { field: "id", rule: "must be non-empty".into() });
    }
    if p.description.trim().is_empty() {
        violations.push(Violation { field: "description", rule: "must be non-empty".into() });
    }
    if let Some(sig) = &p.signature {
        if sig.trim().is_empty() {
            violations.push(Violation { field: "signature", rule: "if present, must be non-empty".into() });
        } else if !contains_word(sig, "method") && !contains_word(sig, "function") {
            violations.push(Violation {
                field: "signature",
                rule: "must contain the token \"method\" or \"function\"".into(),
            });
        }
    }
    if p.tests.is_empty() {
        violations.push(Violation { field: "tests", rule: "must contain at least one test case".into() });
    } else if p.tests.iter().all(|t| crate::functional::normalize_output(&t.expected_output).is_empty()) {
        violations.push(Violation {
            field: "tests",
            rule: "at least one test case needs a non-empty expected_output".into(),
        });
    }
    ValidationReport { violations }
}

fn contains_word(text: &str, word: &str) -> bool {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_')).any(|w| w == word)
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("malformed problem file {file}: {reason}")]
    MalformedProblem { file: PathBuf, reason: String },
    #[error("duplicate problem id: {0}")]
    DuplicateId(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Immutable, id-sorted problem set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    problems: Vec<Problem>,
}

impl Corpus {
    /// Builds a corpus from already-parsed problems, applying the same checks
    /// as [`load_corpus`] except the file-name rule.
    pub fn from_problems(mut problems: Vec<Problem>) -> Result<Self, CorpusError> {
        problems.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in problems.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(CorpusError::DuplicateId(pair[0].id.clone()));
            }
        }
        Ok(Corpus { problems })
    }

    pub fn problems(&self) -> &[Problem] {
        &self.problems
    }

    pub fn get(&self, id: &str) -> Option<&Problem> {
        self.problems.binary_search_by(|p| p.id.as_str().cmp(id)).ok().map(|i| &self.problems[i])
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Reads every `*.json` file in `path`. Each must hold one problem whose id
/// matches the file stem, and must pass [`validate_problem`].
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let files = read_problem_files(path)?;
    let mut by_id: BTreeMap<String, (PathBuf, Problem)> = BTreeMap::new();
    for (file, problem) in files {
        if by_id.contains_key(&problem.id) {
            return Err(CorpusError::DuplicateId(problem.id));
        }
        by_id.insert(problem.id.clone(), (file, problem));
    }
    let mut problems = Vec::with_capacity(by_id.len());
    for (file, problem) in by_id.into_values() {
        check_file_name(&file, &problem)?;
        let report = validate_problem(&problem);
        if !report.is_empty() {
            let reason = report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return Err(CorpusError::MalformedProblem { file, reason });
        }
        problems.push(problem);
    }
    Ok(Corpus { problems })
}

pub fn check_file_name(file: &Path, problem: &Problem) -> Result<(), CorpusError> {
    let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    if stem == problem.id {
        Ok(())
    } else {
        Err(CorpusError::MalformedProblem {
            file: file.to_path_buf(),
            reason: format!("file name must be \"{}.json\"", problem.id),
        })
    }
}

/// Parses problem files in file-name order without checking invariants.
pub fn read_problem_files(path: &Path) -> Result<Vec<(PathBuf, Problem)>, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingPath(path.to_path_buf()));
    }
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();

    let mut out = Vec::with_capacity(files.len());
    for file in files {
        let text = fs::read_to_string(&file).map_err(|source| CorpusError::Io { path: file.clone(), source })?;
        let problem: Problem = serde_json::from_str(&text)
            .map_err(|e| CorpusError::MalformedProblem { file: file.clone(), reason: e.to_string() })?;
        out.push((file, problem));
    }
    Ok(out)
}
