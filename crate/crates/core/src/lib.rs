//! Zero-shot matching of report segments to accounting-standard requirements.
//!
//! Stage one ranks a report's segments by embedding cosine similarity to a
//! requirement; stage two asks a chat model to pick the best few among the
//! top candidates. The [`metrics`] module scores either stage against gold
//! annotations and [`pipeline`] ties the pieces together.

mod binfmt;
pub mod corpus;
pub mod embedding;
pub mod metrics;
pub mod pipeline;
pub mod rerank;
pub mod retrieval;
pub mod synth;

pub use binfmt::FormatError;
pub use corpus::{AnnotationSet, Corpus, Report, Requirement, Segment};
pub use embedding::{EmbeddingStore, Vector};
pub use metrics::{AggregateReport, QueryKey};
pub use pipeline::{MatchRun, PipelineConfig};
pub use rerank::{ChatClient, TemplateId};
pub use retrieval::{Namespace, RankedEntry, RankedList};
