//! Message stream ingestion.
//!
//! Input is newline-delimited JSON with one message per line:
//!
//! ```text
//! {"id":"m1","user":"u1","ts":1357000000,"tags":["LOL","ff"],"rt_of":"u9"}
//! ```
//!
//! `id`, `user`, `ts` and `tags` are required, `rt_of` is optional. Lines that fail to
//! parse are skipped and counted; only an unreadable source is fatal.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::Timestamp;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("read failed at byte offset {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("write failed: {0}")]
    Write(#[source] std::io::Error),
    #[error("invalid period split: {0}")]
    InvalidSplit(String),
    #[error("could not read split config {path}: {message}")]
    SplitConfig { path: String, message: String },
}

/// One post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub message_id: String,
    pub author_id: String,
    pub timestamp: Timestamp,
    /// Normalized, deduplicated, in first-occurrence order.
    pub hashtags: Vec<String>,
    /// Author of the original post when this message is a repost.
    pub repost_of: Option<String>,
}

impl MessageRecord {
    pub fn has_hashtags(&self) -> bool {
        !self.hashtags.is_empty()
    }

    pub fn is_repost(&self) -> bool {
        self.repost_of.is_some()
    }
}

/// Normalize a token found after a `#`.
///
/// Applies NFKC compatibility normalization and lowercasing, strips leading `#` and
/// trailing punctuation. Returns `None` when nothing is left.
pub fn normalize_hashtag(raw: &str) -> Option<String> {
    let folded: String = raw.nfkc().collect::<String>().to_lowercase().nfkc().collect();
    let trimmed = folded
        .trim_start_matches(|c: char| c == '#' || c.is_whitespace())
        .trim_end_matches(|c: char| !(c.is_alphanumeric() || c == '_'));
    if trimmed.is_empty() || trimmed.chars().all(char::is_whitespace) {
        None
    } else {
        Some(trimmed.to_string())
    }
}

#[derive(Deserialize)]
struct WireIn {
    id: String,
    user: String,
    ts: i64,
    tags: Vec<String>,
    #[serde(default)]
    rt_of: Option<String>,
}

#[derive(Serialize)]
struct WireOut<'a> {
    id: &'a str,
    user: &'a str,
    ts: i64,
    tags: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    rt_of: Option<&'a str>,
}

fn record_from_line(line: &[u8]) -> Option<MessageRecord> {
    let wire: WireIn = serde_json::from_slice(line).ok()?;
    if wire.ts <= 0 || wire.id.is_empty() || wire.user.is_empty() {
        return None;
    }
    let mut seen = HashSet::new();
    let hashtags = wire
        .tags
        .iter()
        .filter_map(|t| normalize_hashtag(t))
        .filter(|t| seen.insert(t.clone()))
        .collect();
    Some(MessageRecord {
        message_id: wire.id,
        author_id: wire.user,
        timestamp: wire.ts,
        hashtags,
        repost_of: wire.rt_of.filter(|s| !s.is_empty()),
    })
}

/// Streaming reader over newline-delimited records.
///
/// Yields `Err` only for I/O failures; malformed lines bump [`RecordReader::skipped`].
pub struct RecordReader<R> {
    inner: R,
    offset: u64,
    skipped: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            offset: 0,
            skipped: 0,
            buf: Vec::new(),
        }
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<MessageRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            let n = match self.inner.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(n) => n,
                Err(source) => {
                    return Some(Err(IngestError::Io {
                        offset: self.offset,
                        source,
                    }))
                }
            };
            self.offset += n as u64;
            match record_from_line(&self.buf) {
                Some(rec) => return Some(Ok(rec)),
                None => self.skipped += 1,
            }
        }
    }
}

/// Parsed records plus the number of lines that were skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedStream {
    pub records: Vec<MessageRecord>,
    pub skipped: usize,
}

pub fn parse_stream<R: BufRead>(source: R) -> Result<ParsedStream, IngestError> {
    let mut reader = RecordReader::new(source);
    let mut records = Vec::new();
    for rec in reader.by_ref() {
        records.push(rec?);
    }
    Ok(ParsedStream {
        records,
        skipped: reader.skipped(),
    })
}

pub fn read_records(path: &Path) -> Result<ParsedStream, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io { offset: 0, source })?;
    parse_stream(std::io::BufReader::new(file))
}

pub fn write_records<'a, W, I>(records: I, mut out: W) -> Result<(), IngestError>
where
    W: Write,
    I: IntoIterator<Item = &'a MessageRecord>,
{
    for rec in records {
        let wire = WireOut {
            id: &rec.message_id,
            user: &rec.author_id,
            ts: rec.timestamp,
            tags: &rec.hashtags,
            rt_of: rec.repost_of.as_deref(),
        };
        serde_json::to_writer(&mut out, &wire).map_err(|e| IngestError::Write(e.into()))?;
        out.write_all(b"\n").map_err(IngestError::Write)?;
    }
    out.flush().map_err(IngestError::Write)
}

/// How reposts contribute to hashtag usage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepostPolicy {
    /// Reposts are messages of the reposter and their hashtags count as its usage.
    #[default]
    Include,
    /// Reposts stay in the stream (they still count toward the original author's
    /// retweets) but carry no hashtag usage.
    Ignore,
}

pub fn apply_repost_policy(records: &mut [MessageRecord], policy: RepostPolicy) {
    if policy == RepostPolicy::Ignore {
        for rec in records.iter_mut().filter(|r| r.is_repost()) {
            rec.hashtags.clear();
        }
    }
}

/// Observation and test period boundaries.
///
/// The observation period is `[observation_start, observation_end)`, the test period is
/// `[test_start, test_end]`. Emergent hashtags must be born before `first_week_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSplit {
    pub observation_start: Timestamp,
    pub observation_end: Timestamp,
    pub test_start: Timestamp,
    pub first_week_end: Timestamp,
    pub test_end: Timestamp,
}

impl PeriodSplit {
    pub fn validate(&self) -> Result<(), IngestError> {
        let ok = self.observation_start < self.observation_end
            && self.observation_end <= self.test_start
            && self.test_start < self.first_week_end
            && self.first_week_end <= self.test_end;
        if ok {
            Ok(())
        } else {
            Err(IngestError::InvalidSplit(format!(
                "need observation_start < observation_end <= test_start < first_week_end <= test_end, got {self:?}"
            )))
        }
    }

    pub fn in_observation(&self, ts: Timestamp) -> bool {
        ts >= self.observation_start && ts < self.observation_end
    }

    pub fn in_test(&self, ts: Timestamp) -> bool {
        ts >= self.test_start && ts <= self.test_end
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, IngestError> {
        let err = |message: String| IngestError::SplitConfig {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let split: PeriodSplit = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        split.validate()?;
        Ok(split)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitOutcome {
    pub observation: Vec<MessageRecord>,
    pub test: Vec<MessageRecord>,
    pub dropped: usize,
}

pub fn split_periods<I>(records: I, split: &PeriodSplit) -> SplitOutcome
where
    I: IntoIterator<Item = MessageRecord>,
{
    let mut out = SplitOutcome::default();
    for rec in records {
        if split.in_observation(rec.timestamp) {
            out.observation.push(rec);
        } else if split.in_test(rec.timestamp) {
            out.test.push(rec);
        } else {
            out.dropped += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_messages: u64,
    pub n_messages_with_hashtags: u64,
    pub n_distinct_hashtags: u64,
    pub n_distinct_users: u64,
}

pub fn corpus_stats<'a, I>(records: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a MessageRecord>,
{
    let mut tags: HashSet<&str> = HashSet::new();
    let mut users: HashSet<&str> = HashSet::new();
    let mut stats = CorpusStats::default();
    for rec in records {
        stats.n_messages += 1;
        if rec.has_hashtags() {
            stats.n_messages_with_hashtags += 1;
        }
        users.insert(&rec.author_id);
        tags.extend(rec.hashtags.iter().map(String::as_str));
    }
    stats.n_distinct_hashtags = tags.len() as u64;
    stats.n_distinct_users = users.len() as u64;
    stats
}

pub fn write_stats_tsv<W: Write>(rows: &[(&str, CorpusStats)], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "period\tn_messages\tn_messages_with_hashtags\tn_distinct_hashtags\tn_distinct_users"
    )?;
    for (period, s) in rows {
        writeln!(
            out,
            "{period}\t{}\t{}\t{}\t{}",
            s.n_messages, s.n_messages_with_hashtags, s.n_distinct_hashtags, s.n_distinct_users
        )?;
    }
    out.flush()
}
