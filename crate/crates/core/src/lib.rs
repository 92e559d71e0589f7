//! Classification of heterogeneous tourist-event records into a hierarchical
//! taxonomy, from raw source payloads to a filterable catalog.

pub mod catalog;
pub mod classifier;
pub mod corpus;
pub mod encoder;
pub mod evaluation;
pub mod hash;
pub mod ingestion;
pub mod jsonl;
pub mod pipeline;
pub mod taxonomy;
pub mod textprep;
