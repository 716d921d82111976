//! Prompt templates for the contextless, signature and repair tiers.
//!
//! Rendering is a pure function of its inputs. Descriptions, signatures and
//! verifier output are substituted verbatim.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Problem;

pub const SYSTEM_LINE: &str = "You are an expert in Dafny. Output ONLY raw Dafny code.";
pub const TASK_HEADER: &str = "Generate one Dafny source file for the following task.";
pub const REPAIR_PREAMBLE: &str = "The previous Dafny code failed verification with the following errors:";
pub const REPAIR_CLOSING: &str =
    "Please repair the code to satisfy all specifications. Output ONLY the raw fixed Dafny code.";

/// Verifier output longer than this many lines is elided in the middle.
pub const MAX_FEEDBACK_LINES: usize = 200;
pub const FEEDBACK_HEAD_LINES: usize = 150;
pub const FEEDBACK_TAIL_LINES: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub system: String,
    pub user: String,
}

impl PromptText {
    /// System line followed by the user body, as one text block.
    pub fn transcript(&self) -> String {
        format!("{}\n{}\n", self.system, self.user)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Contextless,
    Signature,
    SelfHealContextless,
    SelfHealSignature,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::Contextless, Strategy::Signature, Strategy::SelfHealContextless, Strategy::SelfHealSignature];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Contextless => "contextless",
            Strategy::Signature => "signature",
            Strategy::SelfHealContextless => "self-heal-contextless",
            Strategy::SelfHealSignature => "self-heal-signature",
        }
    }

    pub fn is_self_healing(self) -> bool {
        matches!(self, Strategy::SelfHealContextless | Strategy::SelfHealSignature)
    }

    pub fn requires_signature(self) -> bool {
        matches!(self, Strategy::Signature | Strategy::SelfHealSignature)
    }

    /// The first-round prompt for this strategy.
    pub fn initial_prompt(self, p: &Problem) -> Result<PromptText, PromptError> {
        if self.requires_signature() {
            render_signature(p)
        } else {
            render_contextless(p)
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}; expected one of contextless, signature, self-heal-contextless, self-heal-signature"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("problem description is empty")]
    EmptyDescription,
    #[error("problem has no method signature")]
    MissingSignature,
    #[error("verifier output is empty")]
    EmptyVerifierOutput,
}

fn contextless_body(p: &Problem) -> Result<String, PromptError> {
    if p.description.is_empty() {
        return Err(PromptError::EmptyDescription);
    }
    Ok(format!("{TASK_HEADER}\n\nProblem ID: {}\nTask Description: {}", p.id, p.description))
}

pub fn render_contextless(p: &Problem) -> Result<PromptText, PromptError> {
    Ok(PromptText { system: SYSTEM_LINE.to_string(), user: contextless_body(p)? })
}

pub fn render_signature(p: &Problem) -> Result<PromptText, PromptError> {
    let signature = match p.signature.as_deref() {
        Some(s) if !s.is_empty() => s,
        _ => return Err(PromptError::MissingSignature),
    };
    let body = contextless_body(p)?;
    Ok(PromptText {
        system: SYSTEM_LINE.to_string(),
        user: format!("{body}\n\nMethod Signature Prompt: {signature}"),
    })
}

/// Builds the repair message. The previous code is not repeated here; it is
/// already in the conversation as the assistant's last turn.
pub fn render_repair(_previous_code: &str, verifier_output: &str) -> Result<PromptText, PromptError> {
    if verifier_output.trim().is_empty() {
        return Err(PromptError::EmptyVerifierOutput);
    }
    let feedback = truncate_feedback(verifier_output);
    Ok(PromptText {
        system: SYSTEM_LINE.to_string(),
        user: format!("{REPAIR_PREAMBLE}\n{feedback}\n\n{REPAIR_CLOSING}"),
    })
}

/// Keeps the first 150 and last 50 lines of output over 200 lines.
pub fn truncate_feedback(output: &str) -> String {
    let lines: Vec<&str> = output.lines().collect();
    if lines.len() <= MAX_FEEDBACK_LINES {
        return output.trim_end_matches(['\r', '\n']).to_string();
    }
    let omitted = lines.len() - FEEDBACK_HEAD_LINES - FEEDBACK_TAIL_LINES;
    let mut out = lines[..FEEDBACK_HEAD_LINES].join("\n");
    out.push_str(&format!("\n... [{omitted} lines omitted] ...\n"));
    out.push_str(&lines[lines.len() - FEEDBACK_TAIL_LINES..].join("\n"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TestCase;

    fn problem() -> Problem {
        Problem {
            id: "uva-11172".into(),
            title: "Relational Operator".into(),
            description: "Given two integers, print the relation between them.".into(),
            signature: Some("method RelationalOperator(a: int, b: int) returns (result: char)".into()),
            tags: vec![],
            source: None,
            tests: vec![TestCase { input: "1 2".into(), expected_output: "<".into(), label: None }],
        }
    }

    #[test]
    fn contextless_matches_template() {
        let p = render_contextless(&problem()).unwrap();
        assert_eq!(p.system, SYSTEM_LINE);
        assert_eq!(
            p.user,
            "Generate one Dafny source file for the following task.\n\nProblem ID: uva-11172\nTask Description: Given two integers, print the relation between them."
        );
    }

    #[test]
    fn rendering_is_pure() {
        assert_eq!(render_contextless(&problem()), render_contextless(&problem()));
        assert_eq!(render_signature(&problem()), render_signature(&problem()));
    }

    #[test]
    fn empty_description_is_rejected() {
        let mut p = problem();
        p.description.clear();
        assert_eq!(render_contextless(&p), Err(PromptError::EmptyDescription));
        assert_eq!(render_signature(&p), Err(PromptError::EmptyDescription));
    }

    #[test]
    fn signature_extends_contextless_body() {
        let p = problem();
        let base = render_contextless(&p).unwrap().user;
        let sig = render_signature(&p).unwrap().user;
        assert_eq!(sig, format!("{base}\n\nMethod Signature Prompt: {}", p.signature.unwrap()));
    }

    #[test]
    fn missing_signature_is_rejected() {
        let mut p = problem();
        p.signature = None;
        assert_eq!(render_signature(&p), Err(PromptError::MissingSignature));
        assert_eq!(Strategy::SelfHealSignature.initial_prompt(&p), Err(PromptError::MissingSignature));
        assert!(Strategy::SelfHealContextless.initial_prompt(&p).is_ok());
    }

    #[test]
    fn multiline_signature_is_verbatim() {
        let mut p = problem();
        let sig = "method M(a: int)\n  returns (r: int)\n  ensures r >= 0";
        p.signature = Some(sig.into());
        assert!(render_signature(&p).unwrap().user.ends_with(&format!("Method Signature Prompt: {sig}")));
    }

    #[test]
    fn template_like_descriptions_survive() {
        let mut p = problem();
        p.description = "Problem ID: <Problem_ID>\nTask Description: {description}".into();
        let user = render_contextless(&p).unwrap().user;
        assert!(user.contains(&p.description));
    }

    #[test]
    fn repair_embeds_output() {
        let r = render_repair("method M( {", "error: rbrace expected").unwrap();
        assert_eq!(
            r.user,
            "The previous Dafny code failed verification with the following errors:\nerror: rbrace expected\n\nPlease repair the code to satisfy all specifications. Output ONLY the raw fixed Dafny code."
        );
        assert!(!r.user.contains("method M("));
    }

    #[test]
    fn empty_feedback_is_rejected() {
        assert_eq!(render_repair("x", ""), Err(PromptError::EmptyVerifierOutput));
        assert_eq!(render_repair("x", " \n"), Err(PromptError::EmptyVerifierOutput));
    }

    #[test]
    fn two_hundred_lines_are_kept() {
        let out: Vec<String> = (1..=200).map(|i| format!("line {i}")).collect();
        let r = render_repair("", &out.join("\n")).unwrap();
        for l in &out {
            assert!(r.user.contains(&format!("{l}\n")), "{l} missing");
        }
        assert!(!r.user.contains("omitted"));
    }

    #[test]
    fn long_feedback_keeps_head_and_tail() {
        let out: Vec<String> = (1..=260).map(|i| format!("line {i}")).collect();
        let t = truncate_feedback(&out.join("\n"));
        let kept: Vec<&str> = t.lines().collect();
        assert_eq!(kept.len(), 201);
        assert_eq!(kept[149], "line 150");
        assert_eq!(kept[150], "... [60 lines omitted] ...");
        assert_eq!(kept[151], "line 211");
        assert_eq!(kept[200], "line 260");
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.as_str()));
        }
        assert!("rq1".parse::<Strategy>().is_err());
    }
}
