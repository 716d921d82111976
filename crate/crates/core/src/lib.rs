//! Batch orchestration for synthesizing formally verified Dafny programs.
//!
//! The pipeline runs problem descriptions through tiered prompts, asks a
//! chat-completions model (or a replay store) for code, checks the result
//! with the Dafny verifier, feeds verifier errors back for repair, and runs
//! verified programs against judge-style test suites. Recorded episodes are
//! aggregated into verify@k and error-taxonomy tables.

pub mod cli;
pub mod corpus;
pub mod functional;
pub mod generation;
pub mod healing;
pub mod metrics;
pub mod process;
pub mod prompting;
pub mod testing;
pub mod toolchain;
pub mod verification;

pub use corpus::{Corpus, Problem, TestCase};
pub use generation::{extract_code, ChatMessage, GenerationRequest, GenerationResponse, Generator};
pub use healing::{Episode, Round, RunManifest};
pub use prompting::{PromptText, Strategy};
pub use toolchain::Toolchain;
pub use verification::{Diagnostic, OutcomeCategory, VerifierReport};
