//! Line-delimited JSON form of per-query results.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::QueryResult;
use crate::metrics::QueryKey;
use crate::rerank::RerankResult;
use crate::retrieval::{RankedEntry, RankedList};

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    #[serde(flatten)]
    pub key: QueryKey,
    pub ranked: Vec<RankedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1: Option<Vec<RankedEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank: Option<RerankResult>,
}

impl QueryRecord {
    pub fn from_result(r: &QueryResult) -> Self {
        Self {
            key: r.key.clone(),
            ranked: r.final_list.entries().to_vec(),
            stage1: r.stage1.as_ref().map(|l| l.entries().to_vec()),
            rerank: r.rerank.clone(),
        }
    }

    pub fn final_list(&self) -> Result<RankedList, crate::retrieval::RetrievalError> {
        RankedList::new(self.key.requirement_id.clone(), self.ranked.clone())
    }
}

pub fn write_results<W: Write>(mut w: W, results: &[QueryResult]) -> io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, &QueryRecord::from_result(r))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Parse `results.jsonl`. Blank lines are skipped; errors name the line.
pub fn read_results<R: BufRead>(r: R) -> io::Result<Vec<QueryRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
