//! Topical diversity as the base-2 entropy of hashtag occurrences across topics.
//!
//! For a user the occurrences are every hashtag they used (with repetition); for a
//! hashtag they are the other hashtags that appeared alongside it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::ingest::MessageRecord;
use crate::topics::{TopicAssigner, TopicId};
use crate::tsv;
use crate::Timestamp;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiversityError {
    #[error("entropy is undefined for an empty histogram")]
    EmptyHistogram,
}

/// Occurrence counts per topic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopicHistogram {
    counts: BTreeMap<TopicId, u64>,
    total: u64,
}

impl TopicHistogram {
    pub fn add(&mut self, topic: TopicId, count: u64) {
        if count > 0 {
            *self.counts.entry(topic).or_insert(0) += count;
            self.total += count;
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct topics.
    pub fn n_topics(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count(&self, topic: &TopicId) -> u64 {
        self.counts.get(topic).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> impl Iterator<Item = (&TopicId, u64)> {
        self.counts.iter().map(|(t, c)| (t, *c))
    }

    /// Folds topic `from` into topic `into`.
    pub fn merge_topics(&mut self, from: &TopicId, into: TopicId) {
        if let Some(c) = self.counts.remove(from) {
            *self.counts.entry(into).or_insert(0) += c;
        }
    }
}

impl FromIterator<(TopicId, u64)> for TopicHistogram {
    fn from_iter<I: IntoIterator<Item = (TopicId, u64)>>(iter: I) -> Self {
        let mut h = TopicHistogram::default();
        for (t, c) in iter {
            h.add(t, c);
        }
        h
    }
}

pub fn topic_histogram<'a, I, A>(tags: I, model: &A) -> TopicHistogram
where
    I: IntoIterator<Item = &'a str>,
    A: TopicAssigner + ?Sized,
{
    let mut h = TopicHistogram::default();
    for tag in tags {
        h.add(model.assign_topic(tag), 1);
    }
    h
}

/// Entropy in bits. Terms are summed in count order, so relabelling topics gives a
/// bit-identical result.
pub fn entropy(h: &TopicHistogram) -> Result<f64, DiversityError> {
    if h.total == 0 {
        return Err(DiversityError::EmptyHistogram);
    }
    let n = h.total as f64;
    let mut counts: Vec<u64> = h.counts.values().copied().collect();
    counts.sort_unstable();
    let sum: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum();
    Ok(if sum == 0.0 { 0.0 } else { -sum })
}

/// H1 of one user over their hashtag occurrences in `records`; `None` if they used none.
pub fn user_diversity<A: TopicAssigner + ?Sized>(user_id: &str, records: &[MessageRecord], model: &A) -> Option<f64> {
    let tags = records
        .iter()
        .filter(|r| r.author_id == user_id)
        .flat_map(|r| r.hashtags.iter().map(String::as_str));
    entropy(&topic_histogram(tags, model)).ok()
}

/// Per-user diversity summary.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDiversity {
    pub n_usages: u64,
    pub n_topics: usize,
    pub n_distinct_tags: usize,
    pub h1: Option<f64>,
}

/// Diversity of every author in `records`, users without hashtags included with `h1 = None`.
pub fn user_diversity_table<A: TopicAssigner + ?Sized>(
    records: &[MessageRecord],
    model: &A,
) -> BTreeMap<String, UserDiversity> {
    let mut per_user: HashMap<&str, (TopicHistogram, HashSet<&str>)> = HashMap::new();
    for rec in records {
        let entry = per_user.entry(&rec.author_id).or_default();
        for tag in &rec.hashtags {
            entry.0.add(model.assign_topic(tag), 1);
            entry.1.insert(tag);
        }
    }
    per_user
        .into_iter()
        .map(|(user, (hist, tags))| {
            (
                user.to_string(),
                UserDiversity {
                    n_usages: hist.total(),
                    n_topics: hist.n_topics(),
                    n_distinct_tags: tags.len(),
                    h1: entropy(&hist).ok(),
                },
            )
        })
        .collect()
}

pub fn write_user_table(table: &BTreeMap<String, UserDiversity>, path: &Path) -> std::io::Result<()> {
    let mut out = String::from("user_id\tn_usages\tn_topics\tH1\n");
    for (user, d) in table {
        let _ = writeln!(out, "{user}\t{}\t{}\t{}", d.n_usages, d.n_topics, tsv::fixed(d.h1, 4));
    }
    tsv::write_file(path, &out)
}

/// Half-open time window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    pub fn contains(&self, ts: Timestamp) -> bool {
        ts >= self.start && ts < self.end
    }
}

/// H2 of `hashtag`: entropy of the other hashtags in the messages that contain it.
pub fn cotag_diversity<A: TopicAssigner + ?Sized>(
    hashtag: &str,
    records: &[MessageRecord],
    model: &A,
    window: Option<Window>,
) -> Option<f64> {
    let cotags = records
        .iter()
        .filter(|r| window.is_none_or(|w| w.contains(r.timestamp)))
        .filter(|r| r.hashtags.iter().any(|t| t == hashtag))
        .flat_map(|r| r.hashtags.iter().map(String::as_str).filter(|t| *t != hashtag));
    entropy(&topic_histogram(cotags, model)).ok()
}
