//! Second-stage selection by a chat model.
//!
//! A candidate set (the retriever's top segments for one requirement) is
//! rendered into one of four prompt templates, sent to a [`ChatClient`],
//! and the response is parsed and repaired into exactly
//! `min(k, |candidates|)` distinct candidate ids.

mod client;
mod parse;
mod template;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use client::{
    ChatClient, ChatError, ChatMessage, ChatRequest, OracleClient, RemoteChatClient, RemoteChatConfig, RequestTag,
    Role, ScriptedClient,
};
pub use parse::{parse_closed_response, parse_open_response, ParseError};
pub use template::{
    render_messages, render_prompt, OutputFormat, PromptTemplate, TemplateId, DOCUMENT_PLACEHOLDER,
    REQUIREMENT_PLACEHOLDER,
};

use crate::corpus::Requirement;

#[derive(Debug, thiserror::Error)]
pub enum RerankError {
    #[error("template placeholder {placeholder} occurs {count} times, expected once")]
    Placeholder { placeholder: &'static str, count: usize },
    #[error("unknown template \"{0}\" (expected A, B, C or D)")]
    UnknownTemplate(String),
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("duplicate candidate \"{0}\"")]
    DuplicateCandidate(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("chat client failed for requirement \"{requirement_id}\": {source}")]
    Client {
        requirement_id: String,
        #[source]
        source: ChatError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub segment_id: String,
    pub text: String,
}

impl Candidate {
    pub fn new(segment_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            segment_id: segment_id.into(),
            text: text.into(),
        }
    }
}

/// A requirement and its stage-one candidates, in retriever order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub requirement: Requirement,
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(requirement: Requirement, candidates: Vec<Candidate>) -> Result<Self, RerankError> {
        if candidates.is_empty() {
            return Err(RerankError::NoCandidates);
        }
        let mut seen = HashSet::new();
        for c in &candidates {
            if !seen.insert(c.segment_id.as_str()) {
                return Err(RerankError::DuplicateCandidate(c.segment_id.clone()));
            }
        }
        Ok(Self {
            requirement,
            candidates,
        })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn ids(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.segment_id.clone()).collect()
    }

    /// One `[id] text` line per candidate.
    pub fn document_block(&self) -> String {
        self.candidates
            .iter()
            .map(|c| format!("[{}] {}", c.segment_id, c.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// A fix applied to the model's answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Repair {
    DuplicatesRemoved,
    ForeignIdsDropped,
    Truncated,
    PaddedFromRetriever,
    ParseFallback,
}

impl fmt::Display for Repair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::DuplicatesRemoved => "duplicates_removed",
            Self::ForeignIdsDropped => "foreign_ids_dropped",
            Self::Truncated => "truncated",
            Self::PaddedFromRetriever => "padded_from_retriever",
            Self::ParseFallback => "parse_fallback",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankResult {
    pub chosen: Vec<String>,
    pub raw_response: String,
    pub explanation: Option<String>,
    pub repairs: Vec<Repair>,
}

/// Turn parsed ids into a valid selection: dedupe, drop ids that are not
/// candidates, truncate to `k`, then pad in retriever order.
pub fn repair_selection(parsed: Vec<String>, candidate_ids: &[String], k: usize) -> (Vec<String>, Vec<Repair>) {
    let mut repairs = Vec::new();
    let target = k.min(candidate_ids.len());

    let mut seen = HashSet::new();
    let before = parsed.len();
    let mut chosen: Vec<String> = parsed.into_iter().filter(|id| seen.insert(id.clone())).collect();
    if chosen.len() < before {
        repairs.push(Repair::DuplicatesRemoved);
    }

    let allowed: HashSet<&str> = candidate_ids.iter().map(String::as_str).collect();
    let before = chosen.len();
    chosen.retain(|id| allowed.contains(id.as_str()));
    if chosen.len() < before {
        repairs.push(Repair::ForeignIdsDropped);
    }

    if chosen.len() > target {
        chosen.truncate(target);
        repairs.push(Repair::Truncated);
    }

    if chosen.len() < target {
        let have: HashSet<String> = chosen.iter().cloned().collect();
        let pad: Vec<String> = candidate_ids
            .iter()
            .filter(|id| !have.contains(*id))
            .take(target - chosen.len())
            .cloned()
            .collect();
        chosen.extend(pad);
        repairs.push(Repair::PaddedFromRetriever);
    }
    (chosen, repairs)
}

/// Ask `client` to pick the `k` best candidates.
///
/// Unparseable output falls back to the retriever's top `k`; only a client
/// failure is an error.
pub fn rerank(
    client: &dyn ChatClient,
    template: &PromptTemplate,
    cs: &CandidateSet,
    k: usize,
) -> Result<RerankResult, RerankError> {
    if k == 0 {
        return Err(RerankError::ZeroK);
    }
    let candidate_ids = cs.ids();
    let request = ChatRequest {
        messages: render_messages(template, cs, client.supports_roles())?,
        temperature: 0.0,
        tag: RequestTag {
            requirement_id: cs.requirement.id.clone(),
            candidate_ids: candidate_ids.clone(),
            k,
            output_format: template.output_format(),
        },
    };
    let raw = client.complete(&request).map_err(|source| RerankError::Client {
        requirement_id: cs.requirement.id.clone(),
        source,
    })?;

    let parsed = match template.output_format() {
        OutputFormat::Closed => parse_closed_response(&raw).map(|ids| (None, ids)),
        OutputFormat::Open => parse_open_response(&raw).map(|(e, ids)| (Some(e), ids)),
    };
    let result = match parsed {
        Ok((explanation, ids)) => {
            let (chosen, repairs) = repair_selection(ids, &candidate_ids, k);
            RerankResult {
                chosen,
                raw_response: raw,
                explanation,
                repairs,
            }
        }
        Err(e) => {
            log::debug!("unparseable answer for requirement \"{}\": {e}", cs.requirement.id);
            RerankResult {
                chosen: candidate_ids.into_iter().take(k).collect(),
                raw_response: raw,
                explanation: None,
                repairs: vec![Repair::ParseFallback],
            }
        }
    };
    Ok(result)
}
