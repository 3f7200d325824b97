use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CandidateSet, ChatMessage, RerankError, Role};

pub const REQUIREMENT_PLACEHOLDER: &str = "{requirement}";
pub const DOCUMENT_PLACEHOLDER: &str = "{document}";

const AUDITOR_SYSTEM: &str = "You are an expert auditor with perfect knowledge of the IFRS accounting standard.";

const BODY_A: &str = "Out of all document segments provided below which ones are the 5 most relevant for fulfilling the IFRS requirement? IFRS requirement: {requirement} document segments: {document} Your answer should only contain the ids of the relevant document segments. Example: ['1129', '1139','1159', '1161', '829']. Your answer needs to be machine readable. Do not add any additional text.";

const BODY_B: &str = "Out of all document segments provided below which ones are the 5 most relevant for fulfilling the IFRS requirement? Think step by step. IFRS requirement: {requirement} document segments: {document} Your answer should only contain the ids of the relevant document segments. Example: ['1129', '1139','1159', '1161', '829']. Your answer needs to be machine readable. Do not add any additional text.";

const BODY_C: &str = "Out of all document segments provided below which ones are the 5 most relevant for fulfilling the IFRS requirement? Explain for each requirement why you selected the 5 most relevant requirements. Think step by step: IFRS requirement: {requirement} document segments: {document} Format your output complying to the following json schema: {'explanation': 'The most relevant document segments ...', 'answer': ['1129', '1139','1159', '1161', '829']}. Ensure that 'answer' is its own key in the json schema. Your answer needs to be machine readable.";

const BODY_D: &str = "Out of all document segments provided below which ones are the 5 most relevant for fulfilling the IFRS requirement? Explain for each requirement why you selected the 5 most relevant requirements. Each should only be a sentence long. Think step by step: IFRS requirement: {requirement} document segments: {document} Format your output complying to the following json schema: {'explanation': 'The most relevant document segments ...', 'answer': ['1129', '1139','1159', '1161', '829']}. Ensure that 'answer' is its own key in the json schema. Your answer needs to be machine readable.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    A,
    B,
    C,
    D,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [Self::A, Self::B, Self::C, Self::D];
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for TemplateId {
    type Err = RerankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Self::A),
            "B" | "b" => Ok(Self::B),
            "C" | "c" => Ok(Self::C),
            "D" | "d" => Ok(Self::D),
            other => Err(RerankError::UnknownTemplate(other.to_owned())),
        }
    }
}

/// Closed prompts ask for ids only; open prompts ask for a JSON object with
/// an explanation and an answer list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: TemplateId,
    output_format: OutputFormat,
    system: Option<String>,
    body: String,
}

impl PromptTemplate {
    /// One of the four built-in templates.
    pub fn builtin(id: TemplateId) -> Self {
        let (format, system, body) = match id {
            TemplateId::A => (OutputFormat::Closed, None, BODY_A),
            TemplateId::B => (OutputFormat::Closed, Some(AUDITOR_SYSTEM), BODY_B),
            TemplateId::C => (OutputFormat::Open, Some(AUDITOR_SYSTEM), BODY_C),
            TemplateId::D => (OutputFormat::Open, Some(AUDITOR_SYSTEM), BODY_D),
        };
        Self {
            id,
            output_format: format,
            system: system.map(str::to_owned),
            body: body.to_owned(),
        }
    }

    /// A custom body; must contain each placeholder exactly once.
    pub fn new(
        id: TemplateId,
        output_format: OutputFormat,
        system: Option<String>,
        body: String,
    ) -> Result<Self, RerankError> {
        for ph in [REQUIREMENT_PLACEHOLDER, DOCUMENT_PLACEHOLDER] {
            let n = body.matches(ph).count();
            if n != 1 {
                return Err(RerankError::Placeholder {
                    placeholder: ph,
                    count: n,
                });
            }
        }
        Ok(Self {
            id,
            output_format,
            system,
            body,
        })
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn output_format(&self) -> OutputFormat {
        self.output_format
    }

    pub fn system(&self) -> Option<&str> {
        self.system.as_deref()
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Fill the body. Substitution is single-pass: placeholder-like text
    /// inside the requirement or candidates is left alone.
    fn fill(&self, cs: &CandidateSet) -> Result<String, RerankError> {
        let req_at = self.body.find(REQUIREMENT_PLACEHOLDER);
        let doc_at = self.body.find(DOCUMENT_PLACEHOLDER);
        let (Some(req_at), Some(doc_at)) = (req_at, doc_at) else {
            let missing = if req_at.is_none() {
                REQUIREMENT_PLACEHOLDER
            } else {
                DOCUMENT_PLACEHOLDER
            };
            return Err(RerankError::Placeholder {
                placeholder: missing,
                count: 0,
            });
        };
        let document = cs.document_block();
        let mut parts = [
            (req_at, REQUIREMENT_PLACEHOLDER.len(), cs.requirement.text.as_str()),
            (doc_at, DOCUMENT_PLACEHOLDER.len(), document.as_str()),
        ];
        parts.sort_by_key(|p| p.0);
        let mut out = String::with_capacity(self.body.len() + document.len() + 64);
        let mut cursor = 0;
        for (at, len, value) in parts {
            out.push_str(&self.body[cursor..at]);
            out.push_str(value);
            cursor = at + len;
        }
        out.push_str(&self.body[cursor..]);
        Ok(out)
    }
}

/// The prompt as one text, with any system instruction prepended as
/// `System: ...`.
pub fn render_prompt(template: &PromptTemplate, cs: &CandidateSet) -> Result<String, RerankError> {
    let body = template.fill(cs)?;
    Ok(match template.system() {
        Some(system) => format!("System: {system} {body}"),
        None => body,
    })
}

/// The prompt as chat messages. With role support the system instruction
/// becomes its own message; otherwise everything goes in one user message.
pub fn render_messages(
    template: &PromptTemplate,
    cs: &CandidateSet,
    supports_roles: bool,
) -> Result<Vec<ChatMessage>, RerankError> {
    if !supports_roles {
        return Ok(vec![ChatMessage::new(Role::User, render_prompt(template, cs)?)]);
    }
    let mut messages = Vec::with_capacity(2);
    if let Some(system) = template.system() {
        messages.push(ChatMessage::new(Role::System, system));
    }
    messages.push(ChatMessage::new(Role::User, template.fill(cs)?));
    Ok(messages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Requirement;
    use crate::rerank::Candidate;

    fn cs() -> CandidateSet {
        CandidateSet::new(
            Requirement {
                id: "r1".into(),
                standard_ref: "IAS 1.10".into(),
                text: "Disclose X".into(),
            },
            vec![
                Candidate::new("1129", "Revenue is recognised when control passes."),
                Candidate::new("829", "Leases are presented separately."),
            ],
        )
        .unwrap()
    }

    #[test]
    fn closed_and_open_formats() {
        assert_eq!(
            PromptTemplate::builtin(TemplateId::A).output_format(),
            OutputFormat::Closed
        );
        assert_eq!(
            PromptTemplate::builtin(TemplateId::B).output_format(),
            OutputFormat::Closed
        );
        assert_eq!(
            PromptTemplate::builtin(TemplateId::C).output_format(),
            OutputFormat::Open
        );
        assert_eq!(
            PromptTemplate::builtin(TemplateId::D).output_format(),
            OutputFormat::Open
        );
    }

    #[test]
    fn builtins_have_each_placeholder_once() {
        for id in TemplateId::ALL {
            let t = PromptTemplate::builtin(id);
            assert!(PromptTemplate::new(id, t.output_format(), None, t.body().to_owned()).is_ok());
        }
    }

    #[test]
    fn render_a_starts_verbatim_and_lists_candidates() {
        let out = render_prompt(&PromptTemplate::builtin(TemplateId::A), &cs()).unwrap();
        assert!(out.starts_with(
            "Out of all document segments provided below which ones are the 5 most relevant for fulfilling the IFRS requirement? IFRS requirement: Disclose X document segments: "
        ));
        assert!(out.contains("[1129] Revenue is recognised when control passes.\n[829] Leases"));
    }

    #[test]
    fn d_has_sentence_limit_c_does_not() {
        let c = render_prompt(&PromptTemplate::builtin(TemplateId::C), &cs()).unwrap();
        let d = render_prompt(&PromptTemplate::builtin(TemplateId::D), &cs()).unwrap();
        assert!(d.contains("Each should only be a sentence long."));
        assert!(!c.contains("Each should only be a sentence long."));
        assert!(c.contains("json schema"));
    }

    #[test]
    fn rendering_is_pure() {
        let t = PromptTemplate::builtin(TemplateId::B);
        assert_eq!(render_prompt(&t, &cs()).unwrap(), render_prompt(&t, &cs()).unwrap());
    }

    #[test]
    fn placeholder_text_in_inputs_is_not_expanded() {
        let mut set = cs();
        set.requirement.text = "see {document}".into();
        let out = render_prompt(&PromptTemplate::builtin(TemplateId::A), &set).unwrap();
        assert!(out.contains("IFRS requirement: see {document} document segments: [1129]"));
    }

    #[test]
    fn missing_placeholder_rejected() {
        let err =
            PromptTemplate::new(TemplateId::A, OutputFormat::Closed, None, "{requirement} only".into()).unwrap_err();
        assert!(matches!(
            err,
            RerankError::Placeholder {
                placeholder: "{document}",
                count: 0
            }
        ));
    }

    #[test]
    fn role_split() {
        let t = PromptTemplate::builtin(TemplateId::B);
        let msgs = render_messages(&t, &cs(), true).unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, Role::System);
        assert!(msgs[1].content.starts_with("Out of all"));
        let flat = render_messages(&t, &cs(), false).unwrap();
        assert_eq!(flat.len(), 1);
        assert!(flat[0].content.starts_with("System: You are an expert auditor"));
        let a = render_messages(&PromptTemplate::builtin(TemplateId::A), &cs(), true).unwrap();
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn unknown_template_id() {
        assert!("E".parse::<TemplateId>().is_err());
        assert_eq!("c".parse::<TemplateId>().unwrap(), TemplateId::C);
    }
}
