//! Synthetic corpora with planted ground truth, and brute-force oracles.
//!
//! The corpus generator has two layers. Agents post vocabulary hashtags drawn from a
//! personal mixture over planted topics (focused agents use one or two topics, diverse
//! agents three or more), and emergent hashtags are injected in the test period with
//! adopter pools whose diversity tracks the tag's final popularity. Every planted
//! quantity lands in a [`GroundTruthLedger`].
//!
//! The oracles recompute results the slow, obvious way and share no code with the
//! main path.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
use thiserror::Error;

use crate::cooccurrence::CoOccurrenceGraph;
use crate::influence::{interestingness, UserProfile};
use crate::ingest::{MessageRecord, PeriodSplit};
use crate::Timestamp;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("oracle refuses {what}: {reason}")]
    Refused { what: &'static str, reason: String },
}

const HOUR: i64 = 3600;
const DAY: i64 = 24 * HOUR;

/// Linear model for how often a user is reposted, over z-scored followers, messages,
/// latent interestingness and diversity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InfluenceModel {
    pub intercept: f64,
    pub b_fol: f64,
    pub b_twt: f64,
    pub b_beta: f64,
    pub b_h1: f64,
    /// Log-scale sd of the multiplicative noise.
    pub noise_sigma: f64,
}

impl Default for InfluenceModel {
    fn default() -> Self {
        Self {
            intercept: 4.0,
            b_fol: 2.0,
            b_twt: 1.0,
            b_beta: 0.5,
            b_h1: -0.8,
            noise_sigma: 0.3,
        }
    }
}

impl InfluenceModel {
    /// Mean-one lognormal noise around the clamped linear predictor.
    fn draw(&self, rng: &mut ChaCha8Rng, z: [f64; 4]) -> u64 {
        let linear = self.intercept + self.b_fol * z[0] + self.b_twt * z[1] + self.b_beta * z[2] + self.b_h1 * z[3];
        let noise = if self.noise_sigma > 0.0 {
            LogNormal::new(-self.noise_sigma * self.noise_sigma / 2.0, self.noise_sigma)
                .expect("positive sigma")
                .sample(rng)
        } else {
            1.0
        };
        (linear.max(0.0) * noise).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub vocab_size: usize,
    pub n_topics: usize,
    /// Edge probability inside a planted block of [`gen_planted_graph`].
    pub p_in: f64,
    /// Edge probability between planted blocks of [`gen_planted_graph`].
    pub p_out: f64,
    /// Chance that a corpus hashtag comes from a topic other than the message's.
    pub cross_topic_prob: f64,
    pub n_agents: usize,
    pub focused_fraction: f64,
    pub mean_messages: f64,
    /// Test-period background activity relative to the observation period.
    pub test_activity: f64,
    pub followers_log_mean: f64,
    pub followers_log_sd: f64,
    pub n_emergent: usize,
    /// Emergent tags born after the first test week; they must not be detected.
    pub n_late: usize,
    pub popularity_log_mean: f64,
    pub popularity_log_sd: f64,
    /// Correlation between a tag's latent virality and its adopters' diversity.
    pub rho_plant: f64,
    /// Spread of adopters around their target diversity quantile.
    pub pool_spread: f64,
    pub adoption_delay_hours: f64,
    /// Upper bound of the per-tag chance that an adoption message carries extra
    /// vocabulary hashtags; each injected tag draws its own chance uniformly below it.
    pub cotag_prob: f64,
    /// Most topics an injected tag's co-tags span; the span grows with the tag's
    /// diversity latent.
    pub max_cotag_topics: usize,
    pub start: Timestamp,
    pub observation_days: i64,
    pub test_days: i64,
    pub first_week_days: i64,
    pub influence: InfluenceModel,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            vocab_size: 400,
            n_topics: 10,
            p_in: 0.3,
            p_out: 0.02,
            cross_topic_prob: 0.03,
            n_agents: 2000,
            focused_fraction: 0.5,
            mean_messages: 12.0,
            test_activity: 0.5,
            followers_log_mean: 5.0,
            followers_log_sd: 1.0,
            n_emergent: 2000,
            n_late: 200,
            popularity_log_mean: 2.3,
            popularity_log_sd: 0.7,
            rho_plant: 0.6,
            pool_spread: 0.08,
            adoption_delay_hours: 48.0,
            cotag_prob: 1.0,
            max_cotag_topics: 4,
            start: 1_356_998_400,
            observation_days: 28,
            test_days: 28,
            first_week_days: 7,
            influence: InfluenceModel::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, SynthError> {
        let cfg: Self = toml::from_str(s).map_err(|e| SynthError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("generator config serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        for (name, p) in [
            ("p_in", self.p_in),
            ("p_out", self.p_out),
            ("cross_topic_prob", self.cross_topic_prob),
            ("focused_fraction", self.focused_fraction),
            ("cotag_prob", self.cotag_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(-1.0..=1.0).contains(&self.rho_plant) {
            return bad(format!("rho_plant = {} outside [-1, 1]", self.rho_plant));
        }
        if self.n_topics == 0 || self.vocab_size < 3 * self.n_topics {
            return bad(format!(
                "need at least 3 tags per topic ({} tags, {} topics)",
                self.vocab_size, self.n_topics
            ));
        }
        if self.n_agents < 10 {
            return bad(format!("n_agents = {} is too small", self.n_agents));
        }
        if self.first_week_days <= 0 || self.first_week_days >= self.test_days || self.observation_days <= 0 {
            return bad("period lengths must satisfy 0 < first_week_days < test_days and observation_days > 0".into());
        }
        if !(self.mean_messages > 0.0 && self.adoption_delay_hours > 0.0 && self.pool_spread > 0.0) {
            return bad("mean_messages, adoption_delay_hours and pool_spread must be positive".into());
        }
        if !(self.followers_log_sd >= 0.0 && self.popularity_log_sd >= 0.0 && self.influence.noise_sigma >= 0.0) {
            return bad("log-scale spreads must be nonnegative".into());
        }
        Ok(())
    }

    pub fn split(&self) -> PeriodSplit {
        let obs_end = self.start + self.observation_days * DAY;
        PeriodSplit {
            observation_start: self.start,
            observation_end: obs_end,
            test_start: obs_end,
            first_week_end: obs_end + self.first_week_days * DAY,
            test_end: obs_end + self.test_days * DAY - 1,
        }
    }

    fn tags_per_topic(&self) -> usize {
        self.vocab_size / self.n_topics
    }
}

pub fn vocabulary_tag(topic: usize, index: usize) -> String {
    format!("t{topic:02}w{index:03}")
}

/// Edge list of a planted-partition graph plus the block of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedGraph {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize, u64)>,
    pub truth: Vec<usize>,
}

impl PlantedGraph {
    pub fn graph(&self) -> CoOccurrenceGraph {
        CoOccurrenceGraph::from_edge_list(self.n_nodes, &self.edges).expect("planted edges are simple")
    }
}

/// `n_topics` blocks of `vocab_size / n_topics` nodes; each pair is linked with `p_in`
/// inside a block and `p_out` across, with weights uniform in `[min_weight, 4 * min_weight]`.
pub fn gen_planted_graph(cfg: &GeneratorConfig, min_weight: u64) -> Result<PlantedGraph, SynthError> {
    if !(cfg.p_in > cfg.p_out) {
        return Err(SynthError::InvalidConfig(format!("p_in {} must exceed p_out {}", cfg.p_in, cfg.p_out)));
    }
    let size = cfg.tags_per_topic();
    let n = size * cfg.n_topics;
    let truth: Vec<usize> = (0..n).map(|i| i / size).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let min_weight = min_weight.max(1);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if truth[i] == truth[j] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j, rng.random_range(min_weight..=4 * min_weight)));
            }
        }
    }
    Ok(PlantedGraph { n_nodes: n, edges, truth })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTruth {
    pub user_id: String,
    pub focused: bool,
    /// Topic mixture, one weight per planted topic.
    pub topic_weights: Vec<f64>,
    /// Entropy of `topic_weights` in bits.
    pub planted_h1: f64,
    pub followers: u64,
    pub latent_beta: f64,
    pub reposted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergentTruth {
    pub tag: String,
    pub birth: Timestamp,
    pub virality: f64,
    pub diversity_latent: f64,
    pub popularity: usize,
    /// Topics its co-tags are drawn from.
    pub cotag_topics: Vec<usize>,
    pub cotag_prob: f64,
    /// Adopters in adoption order; the first one creates the tag.
    pub adopters: Vec<String>,
    pub adoption_times: Vec<Timestamp>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmissionCounts {
    pub observation_messages: usize,
    pub test_messages: usize,
    pub reposts: usize,
    pub emergent_adoptions: usize,
    pub late_adoptions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLedger {
    pub config: GeneratorConfig,
    pub split: PeriodSplit,
    pub tag_topics: BTreeMap<String, usize>,
    pub agents: Vec<AgentTruth>,
    pub emergent: Vec<EmergentTruth>,
    pub late: Vec<EmergentTruth>,
    pub counts: EmissionCounts,
}

impl GroundTruthLedger {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SynthError> {
        serde_json::from_str(s).map_err(|e| SynthError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    /// Sorted by timestamp; message ids follow that order.
    pub records: Vec<MessageRecord>,
    pub followers: BTreeMap<String, u64>,
    pub ledger: GroundTruthLedger,
}

fn entropy_bits(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    -weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| {
            let p = w / total;
            p * p.log2()
        })
        .sum::<f64>()
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    values
        .iter()
        .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
        .collect()
}

struct Vocabulary {
    per_topic: usize,
    n_topics: usize,
    within: WeightedIndex<f64>,
}

impl Vocabulary {
    fn new(cfg: &GeneratorConfig) -> Self {
        let per_topic = cfg.tags_per_topic();
        let weights: Vec<f64> = (0..per_topic).map(|j| 1.0 / (j as f64 + 1.0).powf(0.8)).collect();
        Self {
            per_topic,
            n_topics: cfg.n_topics,
            within: WeightedIndex::new(weights).expect("positive weights"),
        }
    }

    /// `count` distinct hashtags of `topic`, each swapped for a random topic's hashtag
    /// with probability `cross`.
    fn draw(&self, rng: &mut ChaCha8Rng, topic: usize, count: usize, cross: f64) -> Vec<String> {
        let mut tags: Vec<String> = Vec::with_capacity(count);
        let mut attempts = 0;
        while tags.len() < count.min(self.per_topic) && attempts < 20 * count {
            attempts += 1;
            let t = if rng.random::<f64>() < cross {
                rng.random_range(0..self.n_topics)
            } else {
                topic
            };
            let tag = vocabulary_tag(t, self.within.sample(rng));
            if !tags.contains(&tag) {
                tags.push(tag);
            }
        }
        tags
    }
}

struct Agent {
    truth: AgentTruth,
    mixture: WeightedIndex<f64>,
    observation_messages: usize,
}

fn gen_agents(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<Agent> {
    let k = cfg.n_topics;
    let followers = LogNormal::new(cfg.followers_log_mean, cfg.followers_log_sd).expect("valid lognormal");
    let messages = Poisson::new(cfg.mean_messages).expect("positive mean");
    let beta = LogNormal::new(0.0, 0.5).expect("valid lognormal");
    (0..cfg.n_agents)
        .map(|i| {
            let focused = rng.random::<f64>() < cfg.focused_fraction;
            let n_chosen = if focused {
                rng.random_range(1..=2.min(k))
            } else {
                rng.random_range(3.min(k)..=k)
            };
            let chosen = rand::seq::index::sample_weighted(rng, k, topic_popularity, n_chosen)
                .expect("positive topic weights")
                .into_vec();
            let mut weights = vec![0.0; k];
            if focused && n_chosen == 2 {
                let major = rng.random_range(0.6..0.9);
                weights[chosen[0]] = major;
                weights[chosen[1]] = 1.0 - major;
            } else {
                for &t in &chosen {
                    weights[t] = if focused { 1.0 } else { rng.random_range(0.5..1.5) };
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            let truth = AgentTruth {
                user_id: format!("u{i:05}"),
                focused,
                planted_h1: entropy_bits(&weights),
                followers: followers.sample(rng).round() as u64,
                latent_beta: beta.sample(rng),
                topic_weights: weights.clone(),
                reposted: 0,
            };
            Agent {
                mixture: WeightedIndex::new(&weights).expect("mixture has mass"),
                observation_messages: 1 + messages.sample(rng) as usize,
                truth,
            }
        })
        .collect()
}

/// Relative share of agents drawn to each topic.
fn topic_popularity(topic: usize) -> f64 {
    1.0 / (topic as f64 + 1.0)
}

fn tag_count(rng: &mut ChaCha8Rng) -> usize {
    match rng.random::<f64>() {
        x if x < 0.5 => 1,
        x if x < 0.8 => 2,
        _ => 3,
    }
}

struct Draft {
    timestamp: Timestamp,
    author: usize,
    hashtags: Vec<String>,
    repost_of: Option<usize>,
}

/// Emergent-style hashtags born uniformly in `[from, to)`.
#[allow(clippy::too_many_arguments)]
fn gen_injected(
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
    agents: &[Agent],
    by_diversity: &[usize],
    vocab: &Vocabulary,
    prefix: &str,
    count: usize,
    (from, to): (Timestamp, Timestamp),
    test_end: Timestamp,
    drafts: &mut Vec<Draft>,
) -> Vec<EmergentTruth> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let spread = Normal::new(0.0, cfg.pool_spread).expect("positive spread");
    let delay = Exp::new(1.0 / cfg.adoption_delay_hours).expect("positive delay");
    let phi = StdNormal::new(0.0, 1.0).expect("unit normal");
    let rho = cfg.rho_plant;
    let n = agents.len();
    let max_pop = (n / 2).max(3);
    (0..count)
        .map(|e| {
            let virality: f64 = std_normal.sample(rng);
            let diversity_latent = rho * virality + (1.0 - rho * rho).sqrt() * std_normal.sample(rng);
            let extra = (cfg.popularity_log_mean + cfg.popularity_log_sd * virality).exp().floor() as usize;
            let popularity = (3 + extra).min(max_pop);
            let target = phi.cdf(diversity_latent);
            let mut chosen: Vec<usize> = Vec::with_capacity(popularity);
            let mut used = HashSet::new();
            let mut attempts = 0;
            while chosen.len() < popularity {
                attempts += 1;
                let idx = if attempts <= 50 * popularity {
                    let u = (target + spread.sample(rng)).clamp(0.0, 1.0 - 1e-12);
                    by_diversity[(u * n as f64) as usize]
                } else {
                    rng.random_range(0..n)
                };
                if used.insert(idx) {
                    chosen.push(idx);
                }
            }
            let birth = rng.random_range(from..to);
            let mut times: Vec<Timestamp> = std::iter::once(birth)
                .chain((1..popularity).map(|_| {
                    let dt = (delay.sample(rng) * HOUR as f64) as i64;
                    (birth + dt).min(test_end)
                }))
                .collect();
            times[1..].sort_unstable();
            let tag = format!("{prefix}{e:05}");
            let cotag_prob = rng.random::<f64>() * cfg.cotag_prob;
            let max_breadth = cfg.max_cotag_topics.clamp(1, vocab.n_topics);
            let breadth = (1 + (target * max_breadth as f64) as usize).min(max_breadth);
            let mut cotag_topics = rand::seq::index::sample(rng, vocab.n_topics, breadth).into_vec();
            cotag_topics.sort_unstable();
            for (&a, &ts) in chosen.iter().zip(&times) {
                let mut hashtags = vec![tag.clone()];
                if rng.random::<f64>() < cotag_prob {
                    for _ in 0..rng.random_range(1..=3) {
                        let topic = cotag_topics[rng.random_range(0..breadth)];
                        let t = vocabulary_tag(topic, rng.random_range(0..vocab.per_topic));
                        if !hashtags.contains(&t) {
                            hashtags.push(t);
                        }
                    }
                }
                drafts.push(Draft {
                    timestamp: ts,
                    author: a,
                    hashtags,
                    repost_of: None,
                });
            }
            EmergentTruth {
                tag,
                birth,
                virality,
                diversity_latent,
                popularity,
                cotag_topics,
                cotag_prob,
                adopters: chosen.iter().map(|&a| agents[a].truth.user_id.clone()).collect(),
                adoption_times: times,
            }
        })
        .collect()
}

/// Generates a corpus and its ledger; the same config always yields the same output.
pub fn gen_corpus(cfg: &GeneratorConfig) -> Result<SyntheticCorpus, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let split = cfg.split();
    let vocab = Vocabulary::new(cfg);
    let mut agents = gen_agents(cfg, &mut rng);
    let mut drafts: Vec<Draft> = Vec::new();
    let mut counts = EmissionCounts::default();

    let background = |rng: &mut ChaCha8Rng, agent: &Agent, from: Timestamp, to: Timestamp| {
        let topic = agent.mixture.sample(rng);
        let n_tags = tag_count(rng);
        (rng.random_range(from..to), vocab.draw(rng, topic, n_tags, cfg.cross_topic_prob))
    };
    let test_messages = Poisson::new(cfg.mean_messages * cfg.test_activity.max(1e-9)).expect("positive mean");
    for (i, agent) in agents.iter().enumerate() {
        for _ in 0..agent.observation_messages {
            let (timestamp, hashtags) = background(&mut rng, agent, split.observation_start, split.observation_end);
            drafts.push(Draft {
                timestamp,
                author: i,
                hashtags,
                repost_of: None,
            });
        }
        counts.observation_messages += agent.observation_messages;
        let n_test = if cfg.test_activity > 0.0 { test_messages.sample(&mut rng) as usize } else { 0 };
        for _ in 0..n_test {
            let (timestamp, hashtags) = background(&mut rng, agent, split.test_start, split.test_end);
            drafts.push(Draft {
                timestamp,
                author: i,
                hashtags,
                repost_of: None,
            });
        }
        counts.test_messages += n_test;
    }

    let column = |f: &dyn Fn(&Agent) -> f64| standardize(&agents.iter().map(f).collect::<Vec<_>>());
    let z = [
        column(&|a| a.truth.followers as f64),
        column(&|a| a.observation_messages as f64),
        column(&|a| a.truth.latent_beta),
        column(&|a| a.truth.planted_h1),
    ];
    let n = agents.len();
    for i in 0..n {
        let rt = cfg.influence.draw(&mut rng, [z[0][i], z[1][i], z[2][i], z[3][i]]);
        agents[i].truth.reposted = rt;
        for _ in 0..rt {
            let mut reposter = rng.random_range(0..n - 1);
            if reposter >= i {
                reposter += 1;
            }
            drafts.push(Draft {
                timestamp: rng.random_range(split.observation_start..split.observation_end),
                author: reposter,
                hashtags: Vec::new(),
                repost_of: Some(i),
            });
        }
        counts.reposts += rt as usize;
    }

    let mut by_diversity: Vec<usize> = (0..n).collect();
    by_diversity.sort_by(|&a, &b| agents[a].truth.planted_h1.total_cmp(&agents[b].truth.planted_h1).then(a.cmp(&b)));
    let before = drafts.len();
    let emergent = gen_injected(
        cfg,
        &mut rng,
        &agents,
        &by_diversity,
        &vocab,
        "new",
        cfg.n_emergent,
        (split.test_start, split.first_week_end),
        split.test_end,
        &mut drafts,
    );
    counts.emergent_adoptions = drafts.len() - before;
    let before = drafts.len();
    let late = gen_injected(
        cfg,
        &mut rng,
        &agents,
        &by_diversity,
        &vocab,
        "late",
        cfg.n_late,
        (split.first_week_end, split.test_end - 3 * DAY),
        split.test_end,
        &mut drafts,
    );
    counts.late_adoptions = drafts.len() - before;

    drafts.sort_by_key(|d| d.timestamp);
    let records = drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| MessageRecord {
            message_id: format!("m{i:08}"),
            author_id: agents[d.author].truth.user_id.clone(),
            timestamp: d.timestamp,
            hashtags: d.hashtags,
            repost_of: d.repost_of.map(|s| agents[s].truth.user_id.clone()),
        })
        .collect();
    let tag_topics = (0..cfg.n_topics)
        .flat_map(|t| (0..vocab.per_topic).map(move |j| (vocabulary_tag(t, j), t)))
        .collect();
    let followers = agents.iter().map(|a| (a.truth.user_id.clone(), a.truth.followers)).collect();
    Ok(SyntheticCorpus {
        records,
        followers,
        ledger: GroundTruthLedger {
            config: cfg.clone(),
            split,
            tag_topics,
            agents: agents.into_iter().map(|a| a.truth).collect(),
            emergent,
            late,
            counts,
        },
    })
}

/// Users drawn directly from the influence model: log-normal followers and message
/// counts, diversity uniform on `[0, log2(10)]`, and `beta` measured from the drawn RT.
pub fn gen_user_profiles(model: &InfluenceModel, n_users: usize, seed: u64) -> Vec<UserProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fol_dist = LogNormal::<f64>::new(5.0, 1.0).expect("valid lognormal");
    let twt_dist = LogNormal::<f64>::new(2.5, 0.8).expect("valid lognormal");
    let beta_dist = LogNormal::new(0.0, 0.5).expect("valid lognormal");
    let max_h1 = 10f64.log2();
    let raw: Vec<(u64, u64, f64, f64)> = (0..n_users)
        .map(|_| {
            (
                fol_dist.sample(&mut rng).round() as u64,
                1 + twt_dist.sample(&mut rng).round() as u64,
                beta_dist.sample(&mut rng),
                rng.random_range(0.0..max_h1),
            )
        })
        .collect();
    let z = [
        standardize(&raw.iter().map(|r| r.0 as f64).collect::<Vec<_>>()),
        standardize(&raw.iter().map(|r| r.1 as f64).collect::<Vec<_>>()),
        standardize(&raw.iter().map(|r| r.2).collect::<Vec<_>>()),
        standardize(&raw.iter().map(|r| r.3).collect::<Vec<_>>()),
    ];
    raw.iter()
        .enumerate()
        .map(|(i, &(fol, twt, _, h1))| {
            let rt = model.draw(&mut rng, [z[0][i], z[1][i], z[2][i], z[3][i]]);
            UserProfile {
                user_id: format!("p{i:06}"),
                rt,
                fol,
                twt,
                h1: Some(h1),
                beta: interestingness(rt, twt, fol),
            }
        })
        .collect()
}

/// Co-occurrence counts by direct scan: keep tags with at least `min_users` distinct
/// users, count every pair of kept tags per message, keep pairs with at least
/// `min_edge` messages. Pairs are keyed in lexicographic order.
pub fn oracle_pair_counts(
    records: &[MessageRecord],
    min_users: u64,
    min_edge: u64,
) -> (BTreeSet<String>, BTreeMap<(String, String), u64>) {
    let mut users: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        for t in &r.hashtags {
            users.entry(t).or_default().insert(&r.author_id);
        }
    }
    let kept: BTreeSet<String> = users
        .iter()
        .filter(|(_, u)| u.len() as u64 >= min_users)
        .map(|(t, _)| t.to_string())
        .collect();
    let mut pairs: BTreeMap<(String, String), u64> = BTreeMap::new();
    for r in records {
        let mut tags: Vec<&String> = Vec::new();
        for t in &r.hashtags {
            if kept.contains(t) && !tags.contains(&t) {
                tags.push(t);
            }
        }
        for a in &tags {
            for b in &tags {
                if a < b {
                    *pairs.entry(((*a).clone(), (*b).clone())).or_insert(0) += 1;
                }
            }
        }
    }
    pairs.retain(|_, w| *w >= min_edge);
    (kept, pairs)
}

/// Probability that a random positive outscores a random negative, ties counted half.
pub fn oracle_auc(scores: &[f64], labels: &[bool]) -> Result<f64, SynthError> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| !**l).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(SynthError::Refused {
            what: "auc",
            reason: "both classes are required".into(),
        });
    }
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

pub const ORACLE_PARTITION_LIMIT: usize = 10;

/// Modularity from the double sum over node pairs of a dense adjacency matrix.
pub fn oracle_modularity(adjacency: &[Vec<f64>], assignment: &[usize]) -> f64 {
    let degree: Vec<f64> = adjacency.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = degree.iter().sum();
    let mut q = 0.0;
    for i in 0..adjacency.len() {
        for j in 0..adjacency.len() {
            if assignment[i] == assignment[j] {
                q += adjacency[i][j] - degree[i] * degree[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Best partition by enumerating every set partition (restricted growth strings).
pub fn oracle_best_partition(g: &CoOccurrenceGraph) -> Result<(Vec<usize>, f64), SynthError> {
    let n = g.node_count();
    if n == 0 || g.edge_count() == 0 {
        return Err(SynthError::Refused {
            what: "partition search",
            reason: "graph has no edges".into(),
        });
    }
    if n > ORACLE_PARTITION_LIMIT {
        return Err(SynthError::Refused {
            what: "partition search",
            reason: format!("{n} nodes exceeds the limit of {ORACLE_PARTITION_LIMIT}"),
        });
    }
    let mut adjacency = vec![vec![0.0; n]; n];
    for e in g.edges() {
        adjacency[e.source][e.target] += e.weight as f64;
        adjacency[e.target][e.source] += e.weight as f64;
    }
    let mut rgs = vec![0usize; n];
    let mut best = (rgs.clone(), oracle_modularity(&adjacency, &rgs));
    loop {
        // next restricted growth string: a[i] <= 1 + max(a[..i])
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(best);
            }
            let prefix_max = rgs[..i].iter().copied().max().unwrap_or(0);
            if rgs[i] <= prefix_max {
                rgs[i] += 1;
                rgs[i + 1..].iter_mut().for_each(|v| *v = 0);
                break;
            }
            i -= 1;
        }
        let q = oracle_modularity(&adjacency, &rgs);
        if q > best.1 + 1e-12 {
            best = (rgs.clone(), q);
        }
    }
}

/// Normalized mutual information, `2 I(a; b) / (H(a) + H(b))`; 1 when both are trivial.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions cover different node sets");
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0 / n;
        *pa.entry(x).or_insert(0.0) += 1.0 / n;
        *pb.entry(y).or_insert(0.0) += 1.0 / n;
    }
    let h = |p: &BTreeMap<usize, f64>| -p.values().map(|v| v * v.ln()).sum::<f64>();
    let (ha, hb) = (h(&pa), h(&pb));
    if ha + hb == 0.0 {
        return 1.0;
    }
    let mi: f64 = joint.iter().map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln()).sum();
    (2.0 * mi / (ha + hb)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n_agents: 200,
            n_emergent: 50,
            n_late: 10,
            vocab_size: 60,
            n_topics: 4,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        let a = gen_corpus(&small()).unwrap();
        let b = gen_corpus(&small()).unwrap();
        assert_eq!(a, b);
        let c = gen_corpus(&GeneratorConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn ledger_matches_corpus() {
        let c = gen_corpus(&small()).unwrap();
        let total = c.ledger.counts.observation_messages
            + c.ledger.counts.test_messages
            + c.ledger.counts.reposts
            + c.ledger.counts.emergent_adoptions
            + c.ledger.counts.late_adoptions;
        assert_eq!(c.records.len(), total);
        assert!(c.records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        let split = &c.ledger.split;
        for e in &c.ledger.emergent {
            assert!(e.birth >= split.test_start && e.birth < split.first_week_end);
            assert_eq!(e.adopters.len(), e.popularity);
            let users: HashSet<_> = c
                .records
                .iter()
                .filter(|r| r.hashtags.contains(&e.tag))
                .map(|r| r.author_id.as_str())
                .collect();
            assert_eq!(users.len(), e.popularity);
        }
        let rt: u64 = c.ledger.agents.iter().map(|a| a.reposted).sum();
        assert_eq!(rt as usize, c.records.iter().filter(|r| r.is_repost()).count());
        assert_eq!(GroundTruthLedger::from_json(&c.ledger.to_json()).unwrap(), c.ledger);
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = small();
        assert_eq!(GeneratorConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
        assert!(GeneratorConfig::from_toml_str("seed = 3\nbogus = 1\n").is_err());
        assert!(GeneratorConfig::from_toml_str("p_in = 1.5\n").is_err());
        assert_eq!(GeneratorConfig::from_toml_str("seed = 9\n").unwrap().seed, 9);
    }

    #[test]
    fn planted_graph_blocks() {
        let cfg = GeneratorConfig {
            vocab_size: 100,
            n_topics: 4,
            p_out: 0.0,
            ..GeneratorConfig::default()
        };
        let g = gen_planted_graph(&cfg, 3).unwrap();
        assert!(g.edges.iter().all(|&(a, b, w)| g.truth[a] == g.truth[b] && w >= 3));
        assert_eq!(g, gen_planted_graph(&cfg, 3).unwrap());
        assert!(gen_planted_graph(&GeneratorConfig { p_in: 0.0, ..cfg }, 3).is_err());
    }

    #[test]
    fn planted_within_block_edge_count() {
        let cfg = GeneratorConfig {
            vocab_size: 100,
            n_topics: 4,
            ..GeneratorConfig::default()
        };
        let g = gen_planted_graph(&cfg, 3).unwrap();
        let within = g.edges.iter().filter(|&&(a, b, _)| g.truth[a] == g.truth[b]).count() as f64;
        // 4 * C(25, 2) * 0.3 = 360, sd = sqrt(1200 * 0.3 * 0.7)
        let sd = (1200.0f64 * 0.3 * 0.7).sqrt();
        assert!((within - 360.0).abs() <= 3.0 * sd, "{within}");
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> CoOccurrenceGraph {
        let e: Vec<_> = edges.iter().map(|&(a, b)| (a, b, 1)).collect();
        CoOccurrenceGraph::from_edge_list(n, &e).unwrap()
    }

    fn clique(offset: usize, k: usize) -> Vec<(usize, usize)> {
        (0..k).flat_map(|i| (i + 1..k).map(move |j| (offset + i, offset + j))).collect()
    }

    #[test]
    fn best_partition_examples() {
        let mut e = clique(0, 4);
        e.extend(clique(4, 4));
        let (p, q) = oracle_best_partition(&graph(8, &e)).unwrap();
        assert_eq!(p, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        assert!((q - 0.5).abs() < 1e-12);
        let (p, q) = oracle_best_partition(&graph(3, &clique(0, 3))).unwrap();
        assert_eq!(p, vec![0, 0, 0]);
        assert!(q.abs() < 1e-12);
        assert!(oracle_best_partition(&graph(0, &[])).is_err());
        assert!(oracle_best_partition(&graph(11, &clique(0, 11))).is_err());
    }

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[5, 5, 7, 7]), 1.0);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]), 1.0);
    }

    #[test]
    fn oracle_auc_examples() {
        assert_eq!(oracle_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(oracle_auc(&[1.0, 1.0], &[true, false]).unwrap(), 0.5);
        assert!(oracle_auc(&[1.0], &[true]).is_err());
    }

    #[test]
    fn oracle_pairs_count_messages_once() {
        let rec = |user: &str, tags: &[&str]| MessageRecord {
            message_id: user.into(),
            author_id: user.into(),
            timestamp: 1,
            hashtags: tags.iter().map(|s| s.to_string()).collect(),
            repost_of: None,
        };
        let recs = vec![rec("a", &["x", "y", "x"]), rec("b", &["x", "y"]), rec("c", &["y", "z"])];
        let (kept, pairs) = oracle_pair_counts(&recs, 1, 1);
        assert_eq!(kept.len(), 3);
        assert_eq!(pairs[&("x".to_string(), "y".to_string())], 2);
        assert_eq!(pairs[&("y".to_string(), "z".to_string())], 1);
        let (kept, pairs) = oracle_pair_counts(&recs, 2, 1);
        assert_eq!(kept.into_iter().collect::<Vec<_>>(), ["x", "y"]);
        assert_eq!(pairs.len(), 1);
    }
}
