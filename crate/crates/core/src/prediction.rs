//! Early-window virality prediction for emergent hashtags.
//!
//! Every emergent hashtag becomes one instance per early window, described by adopter
//! features (`n`, `fol`, `twt`, `H1`) and co-tag features (`m`, `T`, `A`, `H2`).
//! Instances are ranked by one feature or by a least-squares combination of several,
//! and the ranking is scored against percentile-based viral labels with ROC/AUC.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cooccurrence::TagTable;
use crate::diversity::{entropy, topic_histogram};
use crate::emergent::{early_adopters, early_cotags, EmergentSet, HashtagTimeline};
use crate::influence::UserProfile;
use crate::stats;
use crate::topics::TopicAssigner;
use crate::tsv;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictionError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("empty feature specification")]
    EmptySpec,
    #[error("only one class present ({positives} positive, {negatives} negative)")]
    OneClass { positives: usize, negatives: usize },
    #[error("feature `{0}` has zero variance in the training set")]
    ZeroVariance(String),
    #[error("feature `{0}` is collinear with earlier features")]
    Collinear(String),
    #[error("{got} training instances cannot fit {needed} coefficients")]
    TooFew { needed: usize, got: usize },
    #[error("threshold percentile {0} outside (0, 100)")]
    InvalidThreshold(f64),
    #[error("window {0} h must be positive")]
    InvalidWindow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    /// Early adopter count.
    N,
    /// Mean followers of early adopters.
    Fol,
    /// Mean observation-period messages of early adopters.
    Twt,
    /// Mean topical diversity of early adopters.
    H1,
    /// Distinct early co-tags.
    M,
    /// Observation-period messages containing the early co-tags.
    T,
    /// Observation-period adopters of the early co-tags.
    A,
    /// Topical diversity of the early co-tag sequence.
    H2,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Self::N,
        Self::Fol,
        Self::Twt,
        Self::H1,
        Self::M,
        Self::T,
        Self::A,
        Self::H2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::N => "n",
            Self::Fol => "fol",
            Self::Twt => "twt",
            Self::H1 => "H1",
            Self::M => "m",
            Self::T => "T",
            Self::A => "A",
            Self::H2 => "H2",
        }
    }
}

impl FromStr for Feature {
    type Err = PredictionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "n" => Ok(Self::N),
            "fol" => Ok(Self::Fol),
            "twt" => Ok(Self::Twt),
            "H1" | "h1" => Ok(Self::H1),
            "m" => Ok(Self::M),
            "T" => Ok(Self::T),
            "A" => Ok(Self::A),
            "H2" | "h2" => Ok(Self::H2),
            other => Err(PredictionError::UnknownFeature(other.to_string())),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One ranking rule: a single feature, or `+`-joined features combined linearly.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureSpec(Vec<Feature>);

impl FeatureSpec {
    pub fn new(features: Vec<Feature>) -> Result<Self, PredictionError> {
        if features.is_empty() {
            return Err(PredictionError::EmptySpec);
        }
        let mut seen = HashSet::new();
        Ok(Self(features.into_iter().filter(|f| seen.insert(*f)).collect()))
    }

    pub fn features(&self) -> &[Feature] {
        &self.0
    }

    pub fn is_single(&self) -> bool {
        self.0.len() == 1
    }

    /// Parses a comma-separated list such as `n,fol,n+H1`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>, PredictionError> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
    }
}

impl FromStr for FeatureSpec {
    type Err = PredictionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s.split('+').map(str::parse).collect::<Result<_, _>>()?)
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, feat) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            f.write_str(feat.name())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdopterFeatures {
    pub n: usize,
    pub mean_fol: Option<f64>,
    pub mean_twt: Option<f64>,
    pub mean_h1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CotagFeatures {
    pub m: usize,
    pub t: u64,
    pub a: u64,
    pub h2: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Means over the early adopters that have a profile; adopters without hashtag history
/// drop out of `mean_h1` only.
pub fn adopter_features(
    t: &HashtagTimeline,
    window_hours: f64,
    profiles: &HashMap<&str, &UserProfile>,
) -> AdopterFeatures {
    let adopters = early_adopters(t, window_hours);
    let known: Vec<&UserProfile> = adopters.iter().filter_map(|u| profiles.get(u.as_str()).copied()).collect();
    AdopterFeatures {
        n: adopters.len(),
        mean_fol: mean_of(known.iter().map(|p| p.fol as f64)),
        mean_twt: mean_of(known.iter().map(|p| p.twt as f64)),
        mean_h1: mean_of(known.iter().filter_map(|p| p.h1)),
    }
}

/// `T` and `A` sum the observation-period usage and distinct users of each distinct
/// early co-tag; co-tags unseen in observation contribute zero.
pub fn cotag_features<A: TopicAssigner + ?Sized>(
    t: &HashtagTimeline,
    window_hours: f64,
    observation_tags: &TagTable,
    model: &A,
) -> CotagFeatures {
    let early = early_cotags(t, window_hours);
    let distinct: HashSet<&str> = early.sequence.iter().map(String::as_str).collect();
    let (mut total, mut adopters) = (0, 0);
    for tag in &distinct {
        if let Some(id) = observation_tags.id(tag) {
            total += observation_tags.usage(id);
            adopters += observation_tags.distinct_users(id);
        }
    }
    CotagFeatures {
        m: early.distinct,
        t: total,
        a: adopters,
        h2: entropy(&topic_histogram(early.sequence.iter().map(String::as_str), model)).ok(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub hashtag: String,
    pub window_hours: f64,
    pub adopters: AdopterFeatures,
    pub cotags: CotagFeatures,
    pub final_popularity: usize,
}

impl LabeledInstance {
    /// Raw feature value; absent means (no profiled adopters, no co-tags) read as 0.
    pub fn value(&self, feature: Feature) -> f64 {
        match feature {
            Feature::N => self.adopters.n as f64,
            Feature::Fol => self.adopters.mean_fol.unwrap_or(0.0),
            Feature::Twt => self.adopters.mean_twt.unwrap_or(0.0),
            Feature::H1 => self.adopters.mean_h1.unwrap_or(0.0),
            Feature::M => self.cotags.m as f64,
            Feature::T => self.cotags.t as f64,
            Feature::A => self.cotags.a as f64,
            Feature::H2 => self.cotags.h2.unwrap_or(0.0),
        }
    }

    pub fn values(&self, spec: &FeatureSpec) -> Vec<f64> {
        spec.features().iter().map(|f| self.value(*f)).collect()
    }
}

/// Read-only inputs shared by every instance.
pub struct FeatureContext<'a, A: ?Sized> {
    profiles: HashMap<&'a str, &'a UserProfile>,
    observation_tags: &'a TagTable,
    model: &'a A,
}

impl<'a, A: TopicAssigner + Sync + ?Sized> FeatureContext<'a, A> {
    pub fn new(profiles: &'a [UserProfile], observation_tags: &'a TagTable, model: &'a A) -> Self {
        Self {
            profiles: profiles.iter().map(|p| (p.user_id.as_str(), p)).collect(),
            observation_tags,
            model,
        }
    }

    pub fn instance(&self, t: &HashtagTimeline, final_popularity: usize, window_hours: f64) -> LabeledInstance {
        LabeledInstance {
            hashtag: t.hashtag.clone(),
            window_hours,
            adopters: adopter_features(t, window_hours, &self.profiles),
            cotags: cotag_features(t, window_hours, self.observation_tags, self.model),
            final_popularity,
        }
    }

    /// Instances for every emergent hashtag, in hashtag order.
    pub fn instances(&self, emergent: &EmergentSet, window_hours: f64) -> Vec<LabeledInstance> {
        emergent
            .members
            .par_iter()
            .map(|m| self.instance(&m.timeline, m.final_popularity, window_hours))
            .collect()
    }
}

/// Popularity cutoff for the top `threshold_pct` percent: the `ceil(θN/100)`-th largest
/// popularity (nearest rank). Every instance at or above it is viral, so ties at the
/// cutoff can push the positive share above θ.
pub fn viral_cutoff(popularities: &[usize], threshold_pct: f64) -> Result<Option<usize>, PredictionError> {
    if !(threshold_pct > 0.0 && threshold_pct < 100.0) {
        return Err(PredictionError::InvalidThreshold(threshold_pct));
    }
    if popularities.is_empty() {
        return Ok(None);
    }
    let n = popularities.len();
    let k = ((threshold_pct * n as f64 / 100.0).ceil() as usize).clamp(1, n);
    let mut sorted = popularities.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    Ok(Some(sorted[k - 1]))
}

pub fn viral_labels(popularities: &[usize], threshold_pct: f64) -> Result<Vec<bool>, PredictionError> {
    Ok(match viral_cutoff(popularities, threshold_pct)? {
        Some(c) => popularities.iter().map(|p| *p >= c).collect(),
        None => Vec::new(),
    })
}

/// Linear scoring rule over z-scored features.
#[derive(Debug, Clone, PartialEq)]
pub struct Combiner {
    pub spec: FeatureSpec,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl Combiner {
    pub fn score(&self, values: &[f64]) -> f64 {
        self.intercept
            + values
                .iter()
                .zip(&self.means)
                .zip(&self.sds)
                .zip(&self.weights)
                .map(|(((x, m), s), w)| w * (x - m) / s)
                .sum::<f64>()
    }
}

/// Least squares of the 0/1 label on the z-scored features of `spec`.
pub fn fit_combiner(training: &[(&LabeledInstance, bool)], spec: &FeatureSpec) -> Result<Combiner, PredictionError> {
    let positives = training.iter().filter(|(_, l)| *l).count();
    let negatives = training.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(PredictionError::OneClass { positives, negatives });
    }
    let k = spec.features().len();
    if training.len() <= k + 1 {
        return Err(PredictionError::TooFew {
            needed: k + 2,
            got: training.len(),
        });
    }
    let mut columns = Vec::with_capacity(k);
    let (mut means, mut sds) = (Vec::with_capacity(k), Vec::with_capacity(k));
    for feat in spec.features() {
        let raw: Vec<f64> = training.iter().map(|(inst, _)| inst.value(*feat)).collect();
        let (m, s) = (stats::mean(&raw), stats::sample_sd(&raw));
        if !(s > 1e-12 * m.abs().max(1.0)) {
            return Err(PredictionError::ZeroVariance(feat.name().to_string()));
        }
        columns.push(raw.iter().map(|v| (v - m) / s).collect::<Vec<_>>());
        means.push(m);
        sds.push(s);
    }
    let y: Vec<f64> = training.iter().map(|(_, l)| if *l { 1.0 } else { 0.0 }).collect();
    let fit = stats::least_squares(&columns, &y)
        .map_err(|stats::Collinear(i)| PredictionError::Collinear(spec.features()[i].name().to_string()))?;
    Ok(Combiner {
        spec: spec.clone(),
        means,
        sds,
        intercept: fit.coefs[0],
        weights: fit.coefs[1..].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    pub hashtag: String,
    pub score: f64,
    pub viral: bool,
}

/// Sorts by descending score, breaking ties by hashtag.
pub fn rank_and_label(mut items: Vec<RankedItem>) -> Vec<RankedItem> {
    items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.hashtag.cmp(&b.hashtag)));
    items
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    /// `(false positive rate, true positive rate)`, starting at `(0, 0)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// ROC over a ranked list. Items with equal scores form one diagonal step, so the
/// trapezoid area equals the tie-corrected rank statistic.
pub fn roc_auc(ranked: &[RankedItem]) -> Result<RocResult, PredictionError> {
    let positives = ranked.iter().filter(|r| r.viral).count();
    let negatives = ranked.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(PredictionError::OneClass { positives, negatives });
    }
    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < ranked.len() {
        let (prev_tp, prev_fp) = (tp, fp);
        let mut j = i;
        while j < ranked.len() && ranked[j].score.total_cmp(&ranked[i].score).is_eq() {
            if ranked[j].viral {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        // exact in integers: area units of 1/(2PN)
        area += ((fp - prev_fp) * (tp + prev_tp)) as f64;
        points.push((fp as f64 / n, tp as f64 / p));
        i = j;
    }
    Ok(RocResult {
        points,
        auc: area / (2.0 * p * n),
        positives,
        negatives,
    })
}

/// AUC of `scores` against `labels` without building the ranked list by hand.
pub fn auc_of(scores: &[f64], labels: &[bool]) -> Result<f64, PredictionError> {
    let items = scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (s, l))| RankedItem {
            hashtag: format!("{i:08}"),
            score: *s,
            viral: *l,
        })
        .collect();
    Ok(roc_auc(&rank_and_label(items))?.auc)
}

/// Deterministic half assignment from the SHA-256 of the hashtag.
pub fn in_evaluation_half(hashtag: &str) -> bool {
    Sha256::digest(hashtag.as_bytes())[0] & 1 == 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub windows: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub features: Vec<FeatureSpec>,
    /// Fit and evaluate fitted combiners on all instances instead of disjoint halves.
    pub in_sample: bool,
}

pub const DEFAULT_WINDOWS: [f64; 3] = [1.0, 6.0, 24.0];
pub const DEFAULT_THRESHOLDS: [f64; 4] = [50.0, 10.0, 1.0, 0.1];
pub const DEFAULT_FEATURES: &str = "n,fol,twt,H1,n+fol,n+H1,m,T,A,H2,m+H2";

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            windows: DEFAULT_WINDOWS.to_vec(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            features: FeatureSpec::parse_list(DEFAULT_FEATURES).expect("default feature list parses"),
            in_sample: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub feature: String,
    pub window_hours: f64,
    pub threshold_pct: f64,
    pub auc: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub error: Option<PredictionError>,
}

/// AUC for one (window, threshold, feature) cell over prebuilt instances.
pub fn evaluate_cell(
    instances: &[LabeledInstance],
    labels: &[bool],
    spec: &FeatureSpec,
    in_sample: bool,
) -> (Result<f64, PredictionError>, usize, usize) {
    let (train, eval): (Vec<usize>, Vec<usize>) = if in_sample {
        ((0..instances.len()).collect(), (0..instances.len()).collect())
    } else {
        (0..instances.len()).partition(|&i| !in_evaluation_half(&instances[i].hashtag))
    };
    let n_pos = eval.iter().filter(|&&i| labels[i]).count();
    let n_neg = eval.len() - n_pos;
    let result = (|| {
        let scorer: Box<dyn Fn(&LabeledInstance) -> f64> = if spec.is_single() {
            let f = spec.features()[0];
            Box::new(move |inst| inst.value(f))
        } else {
            let training: Vec<(&LabeledInstance, bool)> = train.iter().map(|&i| (&instances[i], labels[i])).collect();
            let c = fit_combiner(&training, spec)?;
            Box::new(move |inst| c.score(&inst.values(&c.spec)))
        };
        let items = eval
            .iter()
            .map(|&i| RankedItem {
                hashtag: instances[i].hashtag.clone(),
                score: scorer(&instances[i]),
                viral: labels[i],
            })
            .collect();
        Ok(roc_auc(&rank_and_label(items))?.auc)
    })();
    (result, n_pos, n_neg)
}

/// Every (window, threshold, feature) cell, in that nesting order.
pub fn run_grid<A: TopicAssigner + Sync + ?Sized>(
    emergent: &EmergentSet,
    ctx: &FeatureContext<'_, A>,
    config: &GridConfig,
) -> Result<Vec<GridCell>, PredictionError> {
    for &w in &config.windows {
        if !(w > 0.0) {
            return Err(PredictionError::InvalidWindow(w));
        }
    }
    for &th in &config.thresholds {
        if !(th > 0.0 && th < 100.0) {
            return Err(PredictionError::InvalidThreshold(th));
        }
    }
    let popularity: Vec<usize> = emergent.members.iter().map(|m| m.final_popularity).collect();
    let labels: Vec<Vec<bool>> = config
        .thresholds
        .iter()
        .map(|&th| viral_labels(&popularity, th))
        .collect::<Result<_, _>>()?;
    let mut cells = Vec::new();
    for &w in &config.windows {
        let instances = ctx.instances(emergent, w);
        let jobs: Vec<(usize, &FeatureSpec)> = (0..config.thresholds.len())
            .flat_map(|t| config.features.iter().map(move |f| (t, f)))
            .collect();
        let evaluated: Vec<GridCell> = jobs
            .par_iter()
            .map(|&(t, spec)| {
                let (result, n_pos, n_neg) = evaluate_cell(&instances, &labels[t], spec, config.in_sample);
                GridCell {
                    feature: spec.to_string(),
                    window_hours: w,
                    threshold_pct: config.thresholds[t],
                    auc: result.as_ref().ok().copied(),
                    n_pos,
                    n_neg,
                    error: result.err(),
                }
            })
            .collect();
        cells.extend(evaluated);
    }
    Ok(cells)
}

pub fn write_grid_tsv(cells: &[GridCell], path: &Path) -> std::io::Result<()> {
    let mut out = String::from("feature\twindow_h\tthreshold_pct\tauc\tn_pos\tn_neg\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            c.feature,
            c.window_hours,
            c.threshold_pct,
            tsv::fixed(c.auc, 4),
            c.n_pos,
            c.n_neg
        );
    }
    tsv::write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emergent::Adoption;
    use proptest::prelude::*;

    fn items(scores: &[f64], labels: &[bool]) -> Vec<RankedItem> {
        scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (s, l))| RankedItem {
                hashtag: format!("t{i:03}"),
                score: *s,
                viral: *l,
            })
            .collect()
    }

    fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut pairs) = (0.0, 0.0);
        for (i, si) in scores.iter().enumerate() {
            for (j, sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    num += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_of(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auc_of(&[0.1, 0.8, 0.9], &[true, true, false]).unwrap(), 0.0);
        assert_eq!(auc_of(&[3.0; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(matches!(auc_of(&[1.0, 2.0], &[true, true]), Err(PredictionError::OneClass { .. })));
    }

    #[test]
    fn roc_points_are_monotone_and_end_at_one() {
        let roc = roc_auc(&rank_and_label(items(&[0.3, 0.3, 0.9, 0.1, 0.5], &[true, false, true, false, false]))).unwrap();
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        assert!(roc.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn ties_ranked_by_hashtag() {
        let ranked = rank_and_label(items(&[1.0, 1.0, 1.0], &[false, true, false]));
        let tags: Vec<_> = ranked.iter().map(|r| r.hashtag.as_str()).collect();
        assert_eq!(tags, ["t000", "t001", "t002"]);
    }

    #[test]
    fn viral_cutoff_examples() {
        let pops: Vec<usize> = (1..=10).collect();
        assert_eq!(viral_labels(&pops, 10.0).unwrap().iter().filter(|l| **l).count(), 1);
        assert_eq!(viral_labels(&pops, 50.0).unwrap().iter().filter(|l| **l).count(), 5);
        // 0.1% of 10 still labels the single most popular instance
        assert_eq!(viral_labels(&pops, 0.1).unwrap().iter().filter(|l| **l).count(), 1);
        let tied = [5, 9, 9, 9, 1, 2, 3, 4, 6, 7];
        assert_eq!(viral_labels(&tied, 10.0).unwrap().iter().filter(|l| **l).count(), 3);
        assert!(viral_cutoff(&pops, 100.0).is_err());
    }

    fn instance(tag: &str, n: usize, fol: f64, pop: usize) -> LabeledInstance {
        LabeledInstance {
            hashtag: tag.into(),
            window_hours: 24.0,
            adopters: AdopterFeatures {
                n,
                mean_fol: Some(fol),
                mean_twt: Some(fol),
                mean_h1: None,
            },
            cotags: CotagFeatures {
                m: 0,
                t: 0,
                a: 0,
                h2: None,
            },
            final_popularity: pop,
        }
    }

    #[test]
    fn duplicate_features_are_collinear() {
        let insts: Vec<_> = (0..20).map(|i| instance(&format!("h{i}"), i % 7, (i * 3 % 11) as f64, i)).collect();
        let training: Vec<_> = insts.iter().map(|i| (i, i.final_popularity > 14)).collect();
        let spec: FeatureSpec = "fol+twt".parse().unwrap();
        assert_eq!(fit_combiner(&training, &spec), Err(PredictionError::Collinear("twt".into())));
    }

    #[test]
    fn combiner_weights_the_informative_feature() {
        let insts: Vec<_> = (0..200)
            .map(|i| instance(&format!("h{i}"), i % 50, ((i * 7919) % 13) as f64, i))
            .collect();
        let training: Vec<_> = insts.iter().map(|i| (i, i.adopters.n >= 40)).collect();
        let c = fit_combiner(&training, &"fol+n".parse().unwrap()).unwrap();
        assert!(c.weights[1].abs() > 5.0 * c.weights[0].abs());
    }

    #[test]
    fn feature_spec_round_trip() {
        let specs = FeatureSpec::parse_list(DEFAULT_FEATURES).unwrap();
        let joined: Vec<String> = specs.iter().map(ToString::to_string).collect();
        assert_eq!(joined.join(","), DEFAULT_FEATURES);
        assert!("n+bogus".parse::<FeatureSpec>().is_err());
    }

    #[test]
    fn adopter_and_cotag_features() {
        let t = HashtagTimeline {
            hashtag: "new".into(),
            adoptions: vec![
                Adoption {
                    timestamp: 0,
                    user_id: "a".into(),
                    message_id: "1".into(),
                },
                Adoption {
                    timestamp: 10,
                    user_id: "b".into(),
                    message_id: "2".into(),
                },
            ],
            comentions: vec![crate::emergent::CoMention {
                timestamp: 10,
                hashtag: "old".into(),
            }],
        };
        let profile = |id: &str, fol, h1| UserProfile {
            user_id: id.into(),
            rt: 0,
            fol,
            twt: 1,
            h1,
            beta: None,
        };
        let profiles = [profile("a", 100, Some(0.0)), profile("b", 200, Some(2.0))];
        let index: HashMap<&str, &UserProfile> = profiles.iter().map(|p| (p.user_id.as_str(), p)).collect();
        let f = adopter_features(&t, 1.0, &index);
        assert_eq!((f.n, f.mean_fol, f.mean_h1), (2, Some(150.0), Some(1.0)));

        let obs: Vec<crate::ingest::MessageRecord> = (0..5)
            .map(|i| crate::ingest::MessageRecord {
                message_id: format!("o{i}"),
                author_id: format!("u{}", i % 4),
                timestamp: 1,
                hashtags: vec!["old".into()],
                repost_of: None,
            })
            .collect();
        let table = crate::cooccurrence::tally_usage(&obs);
        let model: HashMap<String, usize> = HashMap::new();
        let c = cotag_features(&t, 1.0, &table, &model);
        assert_eq!((c.m, c.t, c.a, c.h2), (1, 5, 4, Some(0.0)));
        let none = cotag_features(&t, 10.0 / 3600.0, &table, &model);
        assert_eq!((none.m, none.t, none.a, none.h2), (0, 0, 0, None));
    }

    proptest! {
        #[test]
        fn trapezoid_matches_pairwise(data in prop::collection::vec((0u8..8, any::<bool>()), 2..120)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let auc = auc_of(&scores, &labels).unwrap();
            prop_assert!((auc - pairwise_auc(&scores, &labels)).abs() < 1e-9);
            let shifted: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() - 4.0).collect();
            prop_assert_eq!(auc, auc_of(&shifted, &labels).unwrap());
        }

        #[test]
        fn negation_complements(labels in prop::collection::vec(any::<bool>(), 2..60)) {
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let scores: Vec<f64> = (0..labels.len()).map(|i| i as f64).collect();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let sum = auc_of(&scores, &labels).unwrap() + auc_of(&neg, &labels).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
