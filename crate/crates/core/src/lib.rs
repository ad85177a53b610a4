//! Topic clusters and topical diversity in hashtag streams.
//!
//! The crate turns a stream of tagged messages into:
//!
//! - a thresholded, weighted hashtag co-occurrence network ([`cooccurrence`]),
//! - a Louvain partition hierarchy whose communities act as topics ([`topics`]),
//! - entropy-based topical diversity of users and hashtags ([`diversity`]),
//! - early-window virality prediction for emergent hashtags, evaluated with ROC/AUC
//!   ([`emergent`], [`prediction`]),
//! - user-level influence statistics: z-scored OLS, binned Spearman correlations and
//!   heatmap grids ([`influence`]).
//!
//! [`synth`] generates corpora with planted ground truth together with brute-force
//! oracles, and [`pipeline`] wires the stages into a cached, resumable run.

pub mod cooccurrence;
pub mod diversity;
pub mod emergent;
pub mod ingest;
pub mod influence;
pub mod pipeline;
pub mod prediction;
pub mod synth;
pub mod topics;

mod stats;
mod tsv;

pub use cooccurrence::{build_graph, graph_stats, tally_usage, CoOccurrenceGraph, GraphStats, TagTable};
pub use diversity::{cotag_diversity, entropy, topic_histogram, user_diversity, TopicHistogram};
pub use emergent::{detect_emergent, EmergentSet, HashtagTimeline};
pub use ingest::{corpus_stats, normalize_hashtag, parse_stream, split_periods, CorpusStats, MessageRecord, PeriodSplit};
pub use topics::{louvain_detect, modularity, Partition, TopicId, TopicModel};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;
