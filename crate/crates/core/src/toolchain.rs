//! The Dafny command-line toolchain: verify, build and run.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::functional::ExecutionResult;
use crate::process::run_with_limit;
use crate::verification::{Diagnostic, PhaseHint, Severity, VerifierReport};

pub const DAFNY_ENV: &str = "VFORGE_DAFNY";
pub const DEFAULT_VERIFY_TIMEOUT: Duration = Duration::from_secs(120);
pub const PROGRAM_FILE: &str = "program.dfy";

/// C# implementation of the `StdIn` extern module that programs use to read
/// whitespace-separated integers from standard input.
pub const STDIN_EXTERN_CS: &str = include_str!("../support/StdIn.cs");
/// Dafny declaration matching [`STDIN_EXTERN_CS`].
pub const STDIN_EXTERN_DFY: &str = include_str!("../support/StdIn.dfy");

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error("dafny binary not found ({0})")]
    DafnyNotFound(String),
    #[error("failed to start {program}: {source}")]
    SpawnFailure {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("build failed: {}", summarize(.0))]
    BuildFailure(Vec<Diagnostic>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.message.as_str()).collect::<Vec<_>>().join("; ")
}

impl Clone for ToolchainError {
    fn clone(&self) -> Self {
        match self {
            ToolchainError::DafnyNotFound(s) => ToolchainError::DafnyNotFound(s.clone()),
            ToolchainError::SpawnFailure { program, source } => ToolchainError::SpawnFailure {
                program: program.clone(),
                source: std::io::Error::new(source.kind(), source.to_string()),
            },
            ToolchainError::BuildFailure(d) => ToolchainError::BuildFailure(d.clone()),
            ToolchainError::Io(e) => ToolchainError::Io(std::io::Error::new(e.kind(), e.to_string())),
        }
    }
}

/// A compiled program ready to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltProgram {
    /// Hash of the source it was built from.
    pub key: String,
    pub artifact: PathBuf,
}

pub fn source_key(src: &str) -> String {
    hex::encode(&Sha256::digest(src.as_bytes())[..16])
}

/// Verification and execution backend. Implementations must be safe to
/// call from several worker threads.
pub trait Toolchain: Send + Sync {
    /// `forensics` names a directory that receives the program when it fails
    /// to verify.
    fn verify(&self, src: &str, timeout: Duration, forensics: Option<&Path>) -> Result<VerifierReport, ToolchainError>;

    fn build(&self, src: &str) -> Result<BuiltProgram, ToolchainError>;

    fn run(&self, program: &BuiltProgram, stdin_text: &str, timeout: Duration) -> Result<ExecutionResult, ToolchainError>;
}

/// Resolves the Dafny binary: explicit path, then `VFORGE_DAFNY`, then
/// `dafny` on `PATH`.
pub fn locate_dafny(explicit: Option<&Path>) -> Result<PathBuf, ToolchainError> {
    if let Some(p) = explicit {
        return if p.is_file() {
            Ok(p.to_path_buf())
        } else {
            Err(ToolchainError::DafnyNotFound(format!("--dafny-path {} is not a file", p.display())))
        };
    }
    if let Some(p) = std::env::var_os(DAFNY_ENV).filter(|v| !v.is_empty()) {
        let p = PathBuf::from(p);
        return if p.is_file() {
            Ok(p)
        } else {
            Err(ToolchainError::DafnyNotFound(format!("{DAFNY_ENV}={} is not a file", p.display())))
        };
    }
    find_on_path("dafny").ok_or_else(|| {
        ToolchainError::DafnyNotFound(format!("no `dafny` on PATH; pass --dafny-path or set {DAFNY_ENV}"))
    })
}

fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|dir| dir.join(name)).find(|candidate| candidate.is_file())
}

type BuildSlot = Arc<Mutex<Option<Result<BuiltProgram, ToolchainError>>>>;

/// Drives the `dafny` executable. Builds target C# and run under `dotnet`.
pub struct DafnyCli {
    dafny: PathBuf,
    dotnet: PathBuf,
    work_root: PathBuf,
    verify_args: Vec<String>,
    builds: Mutex<HashMap<String, BuildSlot>>,
}

impl DafnyCli {
    pub fn new(dafny: PathBuf, work_root: PathBuf) -> Self {
        DafnyCli {
            dafny,
            dotnet: find_on_path("dotnet").unwrap_or_else(|| PathBuf::from("dotnet")),
            work_root,
            verify_args: vec!["--allow-warnings".into()],
            builds: Mutex::new(HashMap::new()),
        }
    }

    pub fn discover(explicit: Option<&Path>, work_root: PathBuf) -> Result<Self, ToolchainError> {
        Ok(DafnyCli::new(locate_dafny(explicit)?, work_root))
    }

    pub fn dafny_path(&self) -> &Path {
        &self.dafny
    }

    fn scratch(&self, prefix: &str) -> Result<tempfile::TempDir, ToolchainError> {
        fs::create_dir_all(&self.work_root)?;
        Ok(tempfile::Builder::new().prefix(prefix).tempdir_in(&self.work_root)?)
    }

    fn spawn_err(&self, source: std::io::Error) -> ToolchainError {
        if source.kind() == std::io::ErrorKind::NotFound {
            ToolchainError::DafnyNotFound(self.dafny.display().to_string())
        } else {
            ToolchainError::SpawnFailure { program: self.dafny.display().to_string(), source }
        }
    }

    fn build_uncached(&self, src: &str, key: &str) -> Result<BuiltProgram, ToolchainError> {
        if !has_entry_point(src) {
            return Err(ToolchainError::BuildFailure(vec![Diagnostic {
                file: PROGRAM_FILE.into(),
                line: None,
                column: None,
                severity: Severity::Error,
                message: "program has no Main method".into(),
                phase_hint: PhaseHint::Unknown,
            }]));
        }
        let dir = self.work_root.join("build-cache").join(key);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(PROGRAM_FILE), src)?;
        fs::write(dir.join("StdIn.cs"), STDIN_EXTERN_CS)?;
        fs::write(dir.join("StdIn.dfy"), STDIN_EXTERN_DFY)?;
        let mut cmd = Command::new(&self.dafny);
        cmd.current_dir(&dir).args([
            "build",
            "--target",
            "cs",
            "--no-verify",
            "--allow-warnings",
            "--output",
            "program",
            PROGRAM_FILE,
            "StdIn.cs",
        ]);
        let out = run_with_limit(&mut cmd, "", DEFAULT_VERIFY_TIMEOUT).map_err(|e| self.spawn_err(e))?;
        let artifact = dir.join("program.dll");
        if out.exit_code != Some(0) || !artifact.is_file() {
            let mut diags = crate::verification::parse_diagnostics(&out.stdout, &out.stderr, out.exit_code.unwrap_or(-1));
            if diags.is_empty() {
                let text = format!("{}\n{}", out.stdout, out.stderr).trim().to_string();
                diags.push(Diagnostic {
                    file: PROGRAM_FILE.into(),
                    line: None,
                    column: None,
                    severity: Severity::Error,
                    message: if out.timed_out {
                        "build timed out".into()
                    } else if text.is_empty() {
                        format!("build exited with {:?}", out.exit_code)
                    } else {
                        text
                    },
                    phase_hint: PhaseHint::Unknown,
                });
            }
            return Err(ToolchainError::BuildFailure(diags));
        }
        Ok(BuiltProgram { key: key.to_string(), artifact })
    }
}

/// Whether the source declares an executable entry point.
pub fn has_entry_point(src: &str) -> bool {
    static MAIN: std::sync::LazyLock<regex::Regex> =
        std::sync::LazyLock::new(|| regex::Regex::new(r"\bmethod\s+(\{:[^}]*\}\s*)*Main\s*\(|\{:main\}").unwrap());
    MAIN.is_match(src)
}

impl Toolchain for DafnyCli {
    fn verify(&self, src: &str, timeout: Duration, forensics: Option<&Path>) -> Result<VerifierReport, ToolchainError> {
        let scratch = self.scratch("verify-")?;
        fs::write(scratch.path().join(PROGRAM_FILE), src)?;
        fs::write(scratch.path().join("StdIn.dfy"), STDIN_EXTERN_DFY)?;
        let mut cmd = Command::new(&self.dafny);
        cmd.current_dir(scratch.path()).arg("verify").args(&self.verify_args).arg(PROGRAM_FILE);
        let out = run_with_limit(&mut cmd, "", timeout).map_err(|e| self.spawn_err(e))?;
        let report = VerifierReport::from_output(out.exit_code, out.stdout, out.stderr, out.wall_time, out.timed_out);
        if !report.verified {
            if let Some(dir) = forensics {
                fs::create_dir_all(dir)?;
                fs::copy(scratch.path().join(PROGRAM_FILE), dir.join(PROGRAM_FILE))?;
            }
        }
        Ok(report)
    }

    /// Cached per source hash; concurrent callers for one source wait for a
    /// single build.
    fn build(&self, src: &str) -> Result<BuiltProgram, ToolchainError> {
        let key = source_key(src);
        let slot = self.builds.lock().unwrap().entry(key.clone()).or_default().clone();
        let mut guard = slot.lock().unwrap();
        if let Some(result) = guard.as_ref() {
            return result.clone();
        }
        let result = self.build_uncached(src, &key);
        *guard = Some(result.clone());
        result
    }

    fn run(&self, program: &BuiltProgram, stdin_text: &str, timeout: Duration) -> Result<ExecutionResult, ToolchainError> {
        let sandbox = self.scratch("run-")?;
        let mut cmd = Command::new(&self.dotnet);
        cmd.current_dir(sandbox.path()).arg(&program.artifact);
        let out = run_with_limit(&mut cmd, stdin_text, timeout)
            .map_err(|source| ToolchainError::SpawnFailure { program: self.dotnet.display().to_string(), source })?;
        Ok(ExecutionResult {
            exit_code: out.exit_code,
            stdout: out.stdout,
            stderr: out.stderr,
            wall_time: out.wall_time,
            timed_out: out.timed_out,
        })
    }
}
