//! Emergent hashtags of the test period and their adoption timelines.
//!
//! A hashtag is emergent when it never appears in the observation period, is used by
//! at least `min_adopters` distinct users in the test period, and is born (first
//! message) before the end of the test period's first week. Early windows are
//! half-open: `[birth, birth + t)`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::ingest::{MessageRecord, PeriodSplit};
use crate::tsv::{self, Table, TsvError};
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adoption {
    pub timestamp: Timestamp,
    pub user_id: String,
    pub message_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoMention {
    pub timestamp: Timestamp,
    pub hashtag: String,
}

/// Every use of one hashtag, sorted by `(timestamp, message_id)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashtagTimeline {
    pub hashtag: String,
    pub adoptions: Vec<Adoption>,
    pub comentions: Vec<CoMention>,
}

impl HashtagTimeline {
    pub fn birth(&self) -> Timestamp {
        self.adoptions[0].timestamp
    }

    pub fn birth_message(&self) -> &str {
        &self.adoptions[0].message_id
    }
}

/// Timelines of every hashtag in `records` accepted by `keep`.
pub fn build_timelines<F>(records: &[MessageRecord], keep: F) -> BTreeMap<String, HashtagTimeline>
where
    F: Fn(&str) -> bool,
{
    let mut ordered: Vec<&MessageRecord> = records.iter().filter(|r| r.has_hashtags()).collect();
    ordered.sort_by(|a, b| (a.timestamp, &a.message_id).cmp(&(b.timestamp, &b.message_id)));
    let mut timelines: BTreeMap<String, HashtagTimeline> = BTreeMap::new();
    for rec in ordered {
        for tag in rec.hashtags.iter().filter(|t| keep(t)) {
            let t = timelines.entry(tag.clone()).or_insert_with(|| HashtagTimeline {
                hashtag: tag.clone(),
                adoptions: Vec::new(),
                comentions: Vec::new(),
            });
            t.adoptions.push(Adoption {
                timestamp: rec.timestamp,
                user_id: rec.author_id.clone(),
                message_id: rec.message_id.clone(),
            });
            t.comentions.extend(rec.hashtags.iter().filter(|o| *o != tag).map(|o| CoMention {
                timestamp: rec.timestamp,
                hashtag: o.clone(),
            }));
        }
    }
    timelines
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmergentTag {
    pub timeline: HashtagTimeline,
    /// Distinct adopters over the whole test period.
    pub final_popularity: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmergentSet {
    /// Sorted by hashtag.
    pub members: Vec<EmergentTag>,
}

impl EmergentSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn get(&self, hashtag: &str) -> Option<&EmergentTag> {
        self.members
            .binary_search_by(|m| m.timeline.hashtag.as_str().cmp(hashtag))
            .ok()
            .map(|i| &self.members[i])
    }

    pub fn write_tsv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::from("tag\tbirth_ts\tfinal_adopters\n");
        for m in &self.members {
            let _ = writeln!(out, "{}\t{}\t{}", m.timeline.hashtag, m.timeline.birth(), m.final_popularity);
        }
        tsv::write_file(path, &out)
    }
}

/// One row of an emergent-hashtag table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmergentRow {
    pub hashtag: String,
    pub birth: Timestamp,
    pub final_adopters: usize,
}

pub fn read_emergent_tsv(path: &Path) -> Result<Vec<EmergentRow>, TsvError> {
    let table = Table::read(path)?;
    let (c_tag, c_birth, c_final) = (
        table.column("tag")?,
        table.column("birth_ts")?,
        table.column("final_adopters")?,
    );
    table
        .rows
        .iter()
        .map(|row| {
            Ok(EmergentRow {
                hashtag: table.cell(row, c_tag)?.to_string(),
                birth: table.parse(row, c_birth)?,
                final_adopters: table.parse(row, c_final)?,
            })
        })
        .collect()
}

/// Rebuilds the timelines of previously detected hashtags from the test records.
/// Rows whose hashtag no longer appears are dropped with a warning.
pub fn restore_emergent(test: &[MessageRecord], rows: &[EmergentRow]) -> EmergentSet {
    let wanted: HashSet<&str> = rows.iter().map(|r| r.hashtag.as_str()).collect();
    let mut timelines = build_timelines(test, |t| wanted.contains(t));
    let mut members = rows
        .iter()
        .filter_map(|row| {
            let Some(timeline) = timelines.remove(&row.hashtag) else {
                log::warn!("emergent hashtag `{}` not found in test records", row.hashtag);
                return None;
            };
            let final_popularity = final_popularity(&timeline);
            if final_popularity != row.final_adopters {
                log::warn!(
                    "emergent hashtag `{}`: table says {} adopters, records give {final_popularity}",
                    row.hashtag,
                    row.final_adopters
                );
            }
            Some(EmergentTag {
                timeline,
                final_popularity,
            })
        })
        .collect::<Vec<_>>();
    members.sort_by(|a, b| a.timeline.hashtag.cmp(&b.timeline.hashtag));
    EmergentSet { members }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmergenceRules {
    pub min_adopters: usize,
    /// Births at or after this instant are excluded; `None` disables the cutoff.
    pub born_before: Option<Timestamp>,
}

pub fn detect_emergent(
    observation: &[MessageRecord],
    test: &[MessageRecord],
    split: &PeriodSplit,
    min_adopters: usize,
) -> EmergentSet {
    detect_emergent_with(
        observation,
        test,
        EmergenceRules {
            min_adopters,
            born_before: Some(split.first_week_end),
        },
    )
}

pub fn detect_emergent_with(
    observation: &[MessageRecord],
    test: &[MessageRecord],
    rules: EmergenceRules,
) -> EmergentSet {
    let seen: HashSet<&str> = observation
        .iter()
        .flat_map(|r| r.hashtags.iter().map(String::as_str))
        .collect();
    let timelines = build_timelines(test, |t| !seen.contains(t));
    let members = timelines
        .into_values()
        .filter(|t| rules.born_before.is_none_or(|cut| t.birth() < cut))
        .filter_map(|timeline| {
            let final_popularity = final_popularity(&timeline);
            (final_popularity >= rules.min_adopters).then_some(EmergentTag {
                timeline,
                final_popularity,
            })
        })
        .collect();
    EmergentSet { members }
}

fn in_window(birth: Timestamp, ts: Timestamp, window_hours: f64) -> bool {
    ts >= birth && ((ts - birth) as f64) < window_hours * 3600.0
}

/// Distinct users adopting within `[birth, birth + window)`, in order of first adoption.
pub fn early_adopters(t: &HashtagTimeline, window_hours: f64) -> Vec<String> {
    let birth = t.birth();
    let mut seen = HashSet::new();
    t.adoptions
        .iter()
        .take_while(|a| in_window(birth, a.timestamp, window_hours))
        .filter(|a| seen.insert(a.user_id.as_str()))
        .map(|a| a.user_id.clone())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EarlyCotags {
    /// Co-tag occurrences with repetition, in time order.
    pub sequence: Vec<String>,
    /// Number of distinct co-tags.
    pub distinct: usize,
}

pub fn early_cotags(t: &HashtagTimeline, window_hours: f64) -> EarlyCotags {
    let birth = t.birth();
    let sequence: Vec<String> = t
        .comentions
        .iter()
        .take_while(|c| in_window(birth, c.timestamp, window_hours))
        .map(|c| c.hashtag.clone())
        .collect();
    let distinct = sequence.iter().collect::<HashSet<_>>().len();
    EarlyCotags { sequence, distinct }
}

pub fn final_popularity(t: &HashtagTimeline) -> usize {
    t.adoptions.iter().map(|a| a.user_id.as_str()).collect::<HashSet<_>>().len()
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: i64 = 3600;

    fn msg(id: &str, user: &str, ts: i64, tags: &[&str]) -> MessageRecord {
        MessageRecord {
            message_id: id.into(),
            author_id: user.into(),
            timestamp: ts,
            hashtags: tags.iter().map(|s| s.to_string()).collect(),
            repost_of: None,
        }
    }

    fn split() -> PeriodSplit {
        PeriodSplit {
            observation_start: 1,
            observation_end: 100 * H,
            test_start: 100 * H,
            first_week_end: 100 * H + 7 * 24 * H,
            test_end: 100 * H + 30 * 24 * H,
        }
    }

    #[test]
    fn emergence_rules() {
        let s = split();
        let day = 24 * H;
        let obs = vec![msg("o1", "u1", 5, &["old"])];
        let mut test = Vec::new();
        for (i, u) in ["a", "b", "c"].iter().enumerate() {
            test.push(msg(&format!("t{i}"), u, s.test_start + day + i as i64, &["old", "fresh"]));
        }
        for i in 0..100 {
            test.push(msg(&format!("late{i}"), &format!("v{i}"), s.test_start + 10 * day + i, &["late"]));
        }
        test.push(msg("x1", "a", s.test_start + 1, &["few"]));
        test.push(msg("x2", "b", s.test_start + 2, &["few"]));
        let set = detect_emergent(&obs, &test, &s, 3);
        let tags: Vec<_> = set.members.iter().map(|m| m.timeline.hashtag.as_str()).collect();
        assert_eq!(tags, ["fresh"]);
        assert_eq!(set.get("fresh").unwrap().final_popularity, 3);
    }

    #[test]
    fn without_cutoff_returns_test_only_tags() {
        let obs = vec![msg("o1", "u1", 5, &["a", "b"])];
        let test = vec![
            msg("t1", "u1", 10, &["a", "c"]),
            msg("t2", "u2", 11, &["d"]),
            msg("t3", "u3", 9_999_999, &["e"]),
        ];
        let set = detect_emergent_with(&obs, &test, EmergenceRules { min_adopters: 1, born_before: None });
        let tags: Vec<_> = set.members.iter().map(|m| m.timeline.hashtag.as_str()).collect();
        assert_eq!(tags, ["c", "d", "e"]);
    }

    fn timeline() -> HashtagTimeline {
        let recs = vec![
            msg("m1", "u1", 1000, &["h", "a"]),
            msg("m2", "u2", 1000 + 30 * 60, &["h", "a"]),
            msg("m3", "u1", 1000 + 40 * 60, &["h", "b"]),
            msg("m4", "u3", 1000 + 2 * H, &["h"]),
        ];
        build_timelines(&recs, |t| t == "h").remove("h").unwrap()
    }

    #[test]
    fn early_adopter_windows() {
        let t = timeline();
        assert_eq!(early_adopters(&t, 1.0), vec!["u1", "u2"]);
        assert_eq!(early_adopters(&t, 24.0), vec!["u1", "u2", "u3"]);
        // boundary is exclusive
        assert_eq!(early_adopters(&t, 2.0), vec!["u1", "u2"]);
        assert_eq!(final_popularity(&t), 3);
    }

    #[test]
    fn early_cotag_windows() {
        let t = timeline();
        let c = early_cotags(&t, 1.0);
        assert_eq!(c.sequence, vec!["a", "a", "b"]);
        assert_eq!(c.distinct, 2);
        let recs = vec![msg("m1", "u1", 5, &["h"])];
        let lonely = build_timelines(&recs, |_| true).remove("h").unwrap();
        assert_eq!(early_cotags(&lonely, 24.0), EarlyCotags::default());
    }

    #[test]
    fn birth_tie_takes_smallest_message_id() {
        let recs = vec![msg("m9", "u9", 50, &["h"]), msg("m2", "u2", 50, &["h"])];
        let t = build_timelines(&recs, |_| true).remove("h").unwrap();
        assert_eq!(t.birth(), 50);
        assert_eq!(t.birth_message(), "m2");
        assert_eq!(early_adopters(&t, 1.0), vec!["u2", "u9"]);
    }

    #[test]
    fn emergent_tsv_round_trip() {
        let s = split();
        let test = vec![
            msg("a", "u1", s.test_start, &["z"]),
            msg("b", "u2", s.test_start + 5, &["z"]),
            msg("c", "u3", s.test_start + 9, &["z"]),
        ];
        let set = detect_emergent(&[], &test, &s, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emergent.tsv");
        set.write_tsv(&path).unwrap();
        let rows = read_emergent_tsv(&path).unwrap();
        assert_eq!(
            rows,
            vec![EmergentRow {
                hashtag: "z".into(),
                birth: s.test_start,
                final_adopters: 3
            }]
        );
    }
}
