//! Corpus loading and validation.
//!
//! A corpus is three line-delimited JSON files: report segments, the
//! requirement catalog, and gold annotations linking requirements to
//! segments. Everything is validated on load; a loaded [`Corpus`] is
//! immutable.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate id \"{id}\"")]
    DuplicateId { path: PathBuf, line: usize, id: String },
    #[error("{path}:{line}: record \"{id}\" has empty text")]
    EmptyText { path: PathBuf, line: usize, id: String },
    #[error("{path}:{line}: segment \"{id}\" reuses position {position} in report \"{report_id}\"")]
    DuplicatePosition {
        path: PathBuf,
        line: usize,
        id: String,
        report_id: String,
        position: u64,
    },
    #[error("{path}:{line}: unknown requirement \"{requirement_id}\"")]
    DanglingRequirement {
        path: PathBuf,
        line: usize,
        requirement_id: String,
    },
    #[error("{path}:{line}: requirement \"{requirement_id}\" references unknown segment \"{segment_id}\"")]
    DanglingSegment {
        path: PathBuf,
        line: usize,
        requirement_id: String,
        segment_id: String,
    },
    #[error("id \"{0}\" is used by both a segment and a requirement")]
    IdCollision(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// One text unit of a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub report_id: String,
    pub position: u64,
    pub text: String,
}

/// One checklist item of an accounting standard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub standard_ref: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub name: String,
    pub segment_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct AnnotationRecord {
    requirement_id: String,
    segment_ids: Vec<String>,
}

/// Gold links: requirement id to the set of relevant segment ids.
///
/// A requirement absent from the annotations file has no entry, which is
/// distinct from an entry with an empty set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    links: BTreeMap<String, BTreeSet<String>>,
    warnings: Vec<String>,
}

impl AnnotationSet {
    pub fn new(links: BTreeMap<String, BTreeSet<String>>) -> Self {
        Self {
            links,
            warnings: Vec::new(),
        }
    }

    pub fn get(&self, requirement_id: &str) -> Option<&BTreeSet<String>> {
        self.links.get(requirement_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.links.iter()
    }

    /// Number of requirement entries, including empty ones.
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Total number of (requirement, segment) links.
    pub fn link_count(&self) -> usize {
        self.links.values().map(BTreeSet::len).sum()
    }

    /// Requirements that are present but have no gold segment.
    pub fn empty_requirements(&self) -> impl Iterator<Item = &String> {
        self.links.iter().filter(|(_, set)| set.is_empty()).map(|(id, _)| id)
    }

    /// Non-fatal issues found while loading (deduplicated ids, empty sets).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, record));
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for record in records {
        let line = serde_json::to_string(&record).expect("corpus records serialize");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Load the segments file, in file order.
pub fn load_segments(path: &Path) -> Result<Vec<Segment>> {
    let records: Vec<(usize, Segment)> = read_jsonl(path)?;
    let mut ids = HashSet::new();
    let mut positions = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (line, seg) in records {
        if seg.id.is_empty() || seg.report_id.is_empty() {
            return Err(CorpusError::Malformed {
                path: path.to_path_buf(),
                line,
                message: "id and report_id must be non-empty".into(),
            });
        }
        if !ids.insert(seg.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                line,
                id: seg.id,
            });
        }
        if seg.text.trim().is_empty() {
            return Err(CorpusError::EmptyText {
                path: path.to_path_buf(),
                line,
                id: seg.id,
            });
        }
        if !positions.insert((seg.report_id.clone(), seg.position)) {
            return Err(CorpusError::DuplicatePosition {
                path: path.to_path_buf(),
                line,
                id: seg.id,
                report_id: seg.report_id,
                position: seg.position,
            });
        }
        out.push(seg);
    }
    Ok(out)
}

pub fn load_requirements(path: &Path) -> Result<Vec<Requirement>> {
    let records: Vec<(usize, Requirement)> = read_jsonl(path)?;
    let mut ids = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (line, req) in records {
        if req.id.is_empty() {
            return Err(CorpusError::Malformed {
                path: path.to_path_buf(),
                line,
                message: "id must be non-empty".into(),
            });
        }
        if !ids.insert(req.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                line,
                id: req.id,
            });
        }
        if req.text.trim().is_empty() {
            return Err(CorpusError::EmptyText {
                path: path.to_path_buf(),
                line,
                id: req.id,
            });
        }
        out.push(req);
    }
    Ok(out)
}

/// Load gold annotations and resolve every reference against the corpus.
///
/// Repeated lines for one requirement are merged. Duplicate segment ids
/// collapse to set semantics and are reported as warnings.
pub fn load_annotations(path: &Path, segments: &[Segment], requirements: &[Requirement]) -> Result<AnnotationSet> {
    let records: Vec<(usize, AnnotationRecord)> = read_jsonl(path)?;
    let seg_ids: HashSet<&str> = segments.iter().map(|s| s.id.as_str()).collect();
    let req_ids: HashSet<&str> = requirements.iter().map(|r| r.id.as_str()).collect();

    let mut set = AnnotationSet::default();
    for (line, rec) in records {
        if !req_ids.contains(rec.requirement_id.as_str()) {
            return Err(CorpusError::DanglingRequirement {
                path: path.to_path_buf(),
                line,
                requirement_id: rec.requirement_id,
            });
        }
        if rec.segment_ids.is_empty() {
            set.warnings.push(format!(
                "{}:{line}: requirement \"{}\" has no gold segments",
                path.display(),
                rec.requirement_id
            ));
        }
        let entry = set.links.entry(rec.requirement_id.clone()).or_default();
        for seg in rec.segment_ids {
            if !seg_ids.contains(seg.as_str()) {
                return Err(CorpusError::DanglingSegment {
                    path: path.to_path_buf(),
                    line,
                    requirement_id: rec.requirement_id,
                    segment_id: seg,
                });
            }
            if !entry.insert(seg.clone()) {
                set.warnings.push(format!(
                    "{}:{line}: duplicate segment \"{seg}\" for requirement \"{}\" ignored",
                    path.display(),
                    rec.requirement_id
                ));
            }
        }
    }
    for w in &set.warnings {
        log::warn!("{w}");
    }
    Ok(set)
}

pub fn write_segments(path: &Path, segments: &[Segment]) -> Result<()> {
    write_jsonl(path, segments)
}

pub fn write_requirements(path: &Path, requirements: &[Requirement]) -> Result<()> {
    write_jsonl(path, requirements)
}

/// Writes one line per requirement entry, segment ids in sorted order.
pub fn write_annotations(path: &Path, annotations: &AnnotationSet) -> Result<()> {
    write_jsonl(
        path,
        annotations.iter().map(|(req, segs)| AnnotationRecord {
            requirement_id: req.clone(),
            segment_ids: segs.iter().cloned().collect(),
        }),
    )
}

/// A validated, immutable corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    segments: Vec<Segment>,
    requirements: Vec<Requirement>,
    reports: Vec<Report>,
    annotations: AnnotationSet,
    segment_index: HashMap<String, usize>,
    requirement_index: HashMap<String, usize>,
}

impl Corpus {
    /// Assemble a corpus from already-validated parts.
    ///
    /// Segment and requirement ids share one embedding keyspace, so a
    /// collision between the two kinds is rejected.
    pub fn new(segments: Vec<Segment>, requirements: Vec<Requirement>, annotations: AnnotationSet) -> Result<Self> {
        let segment_index: HashMap<String, usize> =
            segments.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        let requirement_index: HashMap<String, usize> = requirements
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i))
            .collect();
        if let Some(r) = requirements.iter().find(|r| segment_index.contains_key(&r.id)) {
            return Err(CorpusError::IdCollision(r.id.clone()));
        }

        // Reports in order of first appearance.
        let mut reports: Vec<Report> = Vec::new();
        let mut report_pos: HashMap<&str, usize> = HashMap::new();
        for seg in &segments {
            let idx = *report_pos.entry(seg.report_id.as_str()).or_insert_with(|| {
                reports.push(Report {
                    id: seg.report_id.clone(),
                    name: seg.report_id.clone(),
                    segment_count: 0,
                });
                reports.len() - 1
            });
            reports[idx].segment_count += 1;
        }

        Ok(Self {
            segments,
            requirements,
            reports,
            annotations,
            segment_index,
            requirement_index,
        })
    }

    pub fn load(segments: &Path, requirements: &Path, annotations: Option<&Path>) -> Result<Self> {
        let segs = load_segments(segments)?;
        let reqs = load_requirements(requirements)?;
        let ann = match annotations {
            Some(p) => load_annotations(p, &segs, &reqs)?,
            None => AnnotationSet::default(),
        };
        Self::new(segs, reqs, ann)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn requirements(&self) -> &[Requirement] {
        &self.requirements
    }

    pub fn reports(&self) -> &[Report] {
        &self.reports
    }

    pub fn annotations(&self) -> &AnnotationSet {
        &self.annotations
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segment_index.get(id).map(|&i| &self.segments[i])
    }

    pub fn requirement(&self, id: &str) -> Option<&Requirement> {
        self.requirement_index.get(id).map(|&i| &self.requirements[i])
    }

    /// Segments of one report, in file order.
    pub fn report_segments<'a>(&'a self, report_id: &'a str) -> impl Iterator<Item = &'a Segment> {
        self.segments.iter().filter(move |s| s.report_id == report_id)
    }

    /// Gold segments for a requirement, optionally restricted to one report.
    pub fn gold(&self, requirement_id: &str, report_id: Option<&str>) -> BTreeSet<String> {
        let Some(all) = self.annotations.get(requirement_id) else {
            return BTreeSet::new();
        };
        match report_id {
            None => all.clone(),
            Some(report) => all
                .iter()
                .filter(|id| self.segment(id).is_some_and(|s| s.report_id == report))
                .cloned()
                .collect(),
        }
    }
}
