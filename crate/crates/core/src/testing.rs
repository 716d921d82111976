//! In-process toolchain double for exercising orchestration without a
//! Dafny install. Programs are looked up by exact (trimmed) source text.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::functional::ExecutionResult;
use crate::toolchain::{has_entry_point, source_key, BuiltProgram, Toolchain, ToolchainError};
use crate::verification::{Diagnostic, PhaseHint, Severity, VerifierReport};

type RunFn = Arc<dyn Fn(&str) -> ExecutionResult + Send + Sync>;

#[derive(Default)]
pub struct ScriptedToolchain {
    outputs: Mutex<HashMap<String, (i32, String)>>,
    programs: Mutex<HashMap<String, RunFn>>,
    verify_calls: AtomicUsize,
}

pub const VERIFIED_SUMMARY: &str = "\nDafny program verifier finished with 1 verified, 0 errors\n";

impl ScriptedToolchain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the verifier transcript for `src`.
    pub fn on_verify(&self, src: &str, exit_code: i32, stdout: &str) {
        self.outputs.lock().unwrap().insert(src.trim().to_string(), (exit_code, stdout.to_string()));
    }

    pub fn verifies(&self, src: &str) {
        self.on_verify(src, 0, VERIFIED_SUMMARY);
    }

    /// Registers runtime behaviour for `src`; unregistered sources fail to
    /// build.
    pub fn on_run(&self, src: &str, f: impl Fn(&str) -> ExecutionResult + Send + Sync + 'static) {
        self.programs.lock().unwrap().insert(source_key(src.trim()), Arc::new(f));
    }

    pub fn verify_calls(&self) -> usize {
        self.verify_calls.load(Ordering::SeqCst)
    }
}

impl Toolchain for ScriptedToolchain {
    fn verify(&self, src: &str, _timeout: Duration, _forensics: Option<&Path>) -> Result<VerifierReport, ToolchainError> {
        self.verify_calls.fetch_add(1, Ordering::SeqCst);
        let (exit, stdout) = self
            .outputs
            .lock()
            .unwrap()
            .get(src.trim())
            .cloned()
            .unwrap_or((1, "Error: no scripted verifier output for this program".to_string()));
        Ok(VerifierReport::from_output(Some(exit), stdout, String::new(), Duration::ZERO, false))
    }

    fn build(&self, src: &str) -> Result<BuiltProgram, ToolchainError> {
        let key = source_key(src.trim());
        if !has_entry_point(src) && !self.programs.lock().unwrap().contains_key(&key) {
            return Err(ToolchainError::BuildFailure(vec![Diagnostic {
                file: "program.dfy".into(),
                line: None,
                column: None,
                severity: Severity::Error,
                message: "program has no Main method".into(),
                phase_hint: PhaseHint::Unknown,
            }]));
        }
        if !self.programs.lock().unwrap().contains_key(&key) {
            return Err(ToolchainError::BuildFailure(vec![Diagnostic {
                file: "program.dfy".into(),
                line: None,
                column: None,
                severity: Severity::Error,
                message: "no scripted behaviour for this program".into(),
                phase_hint: PhaseHint::Unknown,
            }]));
        }
        Ok(BuiltProgram { artifact: PathBuf::from(&key), key })
    }

    fn run(&self, program: &BuiltProgram, stdin_text: &str, _timeout: Duration) -> Result<ExecutionResult, ToolchainError> {
        let f = self.programs.lock().unwrap().get(&program.key).cloned();
        match f {
            Some(f) => Ok(f(stdin_text)),
            None => Err(ToolchainError::BuildFailure(Vec::new())),
        }
    }
}
