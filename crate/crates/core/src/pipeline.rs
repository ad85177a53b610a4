//! Full pipeline: `ingest → graph → topics → diversity → emergent → predict / influence`.
//!
//! Every stage reads its inputs from files and writes its outputs under the output
//! directory. `manifest.json` records, per stage, a key over the stage's settings and
//! the SHA-256 of its inputs, plus the SHA-256 of every output. A stage is skipped when
//! its key is unchanged, its outputs still hash to the recorded values and none of its
//! upstream stages ran.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cooccurrence::{build_graph, graph_stats, tally_usage, CoOccurrenceGraph, GraphThresholds};
use crate::diversity::{user_diversity_table, write_user_table};
use crate::emergent::{detect_emergent, read_emergent_tsv, restore_emergent};
use crate::influence::{
    binned_correlation, build_profiles, heatmap_grid, read_followers, read_profiles, regress_profiles,
    write_profiles, Binning, ProfileField, RegressionOptions, MIN_BIN_USERS,
};
use crate::ingest::{
    apply_repost_policy, corpus_stats, read_records, split_periods, write_records, write_stats_tsv, MessageRecord,
    PeriodSplit, RepostPolicy,
};
use crate::prediction::{run_grid, write_grid_tsv, FeatureContext, FeatureSpec, GridConfig, DEFAULT_FEATURES};
use crate::topics::{louvain_detect, TopicModel, DEFAULT_LEVEL};
use crate::tsv;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("cannot write manifest {path}: {source}")]
    Manifest { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub corpus: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followers: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub repost_policy: RepostPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub min_users: u64,
    pub min_edge: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        let d = GraphThresholds::default();
        Self {
            min_users: d.min_users,
            min_edge: d.min_edge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopicsConfig {
    pub seed: u64,
    pub level: usize,
    pub resolution: f64,
}

impl Default for TopicsConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            level: DEFAULT_LEVEL,
            resolution: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmergentConfig {
    pub min_adopters: usize,
}

impl Default for EmergentConfig {
    fn default() -> Self {
        Self { min_adopters: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub windows: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub features: Vec<String>,
    pub in_sample: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        let g = GridConfig::default();
        Self {
            windows: g.windows,
            thresholds: g.thresholds,
            features: DEFAULT_FEATURES.split(',').map(str::to_string).collect(),
            in_sample: false,
        }
    }
}

impl PredictConfig {
    pub fn grid(&self) -> Result<GridConfig, PipelineError> {
        Ok(GridConfig {
            windows: self.windows.clone(),
            thresholds: self.thresholds.clone(),
            features: self
                .features
                .iter()
                .map(|f| f.parse::<FeatureSpec>())
                .collect::<Result<_, _>>()
                .map_err(|e| PipelineError::Config(e.to_string()))?,
            in_sample: self.in_sample,
        })
    }
}

/// Spearman correlation of `x` and `y` within log bins of `by`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinnedSpec {
    pub by: ProfileField,
    pub x: ProfileField,
    pub y: ProfileField,
}

impl BinnedSpec {
    fn file_name(&self) -> String {
        format!("binned_{}_{}_{}.tsv", self.by.name(), self.x.name(), self.y.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InfluenceConfig {
    pub sample_frac: f64,
    pub seed: u64,
    pub heatmap_h1_bins: usize,
    pub binned: Vec<BinnedSpec>,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        Self {
            sample_frac: 1.0,
            seed: 42,
            heatmap_h1_bins: 10,
            binned: vec![
                BinnedSpec {
                    by: ProfileField::Twt,
                    x: ProfileField::Fol,
                    y: ProfileField::H1,
                },
                BinnedSpec {
                    by: ProfileField::Fol,
                    x: ProfileField::H1,
                    y: ProfileField::Rt,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub split: PeriodSplit,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub topics: TopicsConfig,
    #[serde(default)]
    pub emergent: EmergentConfig,
    #[serde(default)]
    pub predict: PredictConfig,
    #[serde(default)]
    pub influence: InfluenceConfig,
}

impl PipelineConfig {
    pub fn new(corpus: PathBuf, followers: Option<PathBuf>, split: PeriodSplit, output_dir: PathBuf) -> Self {
        Self {
            input: InputConfig { corpus, followers },
            split,
            output_dir,
            ingest: IngestConfig::default(),
            graph: GraphConfig::default(),
            topics: TopicsConfig::default(),
            emergent: EmergentConfig::default(),
            predict: PredictConfig::default(),
            influence: InfluenceConfig::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text =
            fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Canonical text form; parsing it gives back an identical config.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.split.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut paths = vec![&self.input.corpus, &self.output_dir];
        paths.extend(self.input.followers.as_ref());
        for (i, a) in paths.iter().enumerate() {
            if paths[i + 1..].contains(a) {
                return Err(PipelineError::Config(format!("path {} is used twice", a.display())));
            }
        }
        if self.graph.min_users == 0 || self.graph.min_edge == 0 {
            return Err(PipelineError::Config("graph thresholds must be at least 1".into()));
        }
        if !(self.topics.resolution > 0.0) {
            return Err(PipelineError::Config("topics.resolution must be positive".into()));
        }
        if !(self.influence.sample_frac > 0.0 && self.influence.sample_frac <= 1.0) {
            return Err(PipelineError::Config("influence.sample_frac must be in (0, 1]".into()));
        }
        self.predict.grid()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Graph,
    Topics,
    Diversity,
    Emergent,
    Predict,
    Influence,
}

const OBS: &str = "ingest/observation.ndjson";
const TEST: &str = "ingest/test.ndjson";
const CORPUS_STATS: &str = "ingest/stats.tsv";
const NODES: &str = "graph/nodes.tsv";
const EDGES: &str = "graph/edges.tsv";
const GRAPH_STATS: &str = "graph/stats.tsv";
const TOPICS: &str = "topics/topics.tsv";
const USERS: &str = "diversity/users.tsv";
const PROFILES: &str = "diversity/profiles.tsv";
const EMERGENT: &str = "emergent/emergent.tsv";
const PREDICT: &str = "predict/table.tsv";
const REGRESSION: &str = "influence/regression.tsv";

impl Stage {
    pub const ALL: [Stage; 7] = [
        Self::Ingest,
        Self::Graph,
        Self::Topics,
        Self::Diversity,
        Self::Emergent,
        Self::Predict,
        Self::Influence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ingest => "ingest",
            Self::Graph => "graph",
            Self::Topics => "topics",
            Self::Diversity => "diversity",
            Self::Emergent => "emergent",
            Self::Predict => "predict",
            Self::Influence => "influence",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Self::Ingest => &[],
            Self::Graph => &[Self::Ingest],
            Self::Topics => &[Self::Graph],
            Self::Diversity => &[Self::Ingest, Self::Topics],
            Self::Emergent => &[Self::Ingest],
            Self::Predict => &[Self::Ingest, Self::Topics, Self::Diversity, Self::Emergent],
            Self::Influence => &[Self::Diversity],
        }
    }

    /// Files read by the stage as `(manifest name, path)`. Pipeline files live under the
    /// output directory, external inputs are named by their config key.
    fn inputs(self, cfg: &PipelineConfig) -> Vec<(String, PathBuf)> {
        let dir = &cfg.output_dir;
        let rel = |names: &[&str]| names.iter().map(|n| (n.to_string(), dir.join(n))).collect::<Vec<_>>();
        match self {
            Self::Ingest => vec![("input.corpus".into(), cfg.input.corpus.clone())],
            Self::Graph => rel(&[OBS]),
            Self::Topics => rel(&[NODES, EDGES]),
            Self::Diversity => {
                let mut v = rel(&[OBS, TOPICS]);
                v.extend(cfg.input.followers.clone().map(|p| ("input.followers".into(), p)));
                v
            }
            Self::Emergent => rel(&[OBS, TEST]),
            Self::Predict => rel(&[OBS, TEST, TOPICS, PROFILES, EMERGENT]),
            Self::Influence => rel(&[PROFILES]),
        }
    }

    /// Stage settings that change its outputs.
    fn settings(self, cfg: &PipelineConfig) -> String {
        let json = match self {
            Self::Ingest => serde_json::json!({ "split": cfg.split, "ingest": cfg.ingest }),
            Self::Graph => serde_json::json!(cfg.graph),
            Self::Topics => serde_json::json!(cfg.topics),
            Self::Diversity => serde_json::json!({}),
            Self::Emergent => serde_json::json!({ "split": cfg.split, "emergent": cfg.emergent }),
            Self::Predict => serde_json::json!(cfg.predict),
            Self::Influence => serde_json::json!(cfg.influence),
        };
        json.to_string()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageState {
    Completed,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub state: StageState,
    pub key: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: Vec<StageRecord>,
}

pub const MANIFEST: &str = "manifest.json";

impl Manifest {
    pub fn read(dir: &Path) -> Option<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        let path = dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        tsv::write_file(&path, &text).map_err(|source| PipelineError::Manifest { path, source })
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Computed,
    Cached,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub stages: Vec<(Stage, StageOutcome)>,
    pub manifest: Manifest,
}

impl RunReport {
    pub fn outcome(&self, stage: Stage) -> Option<StageOutcome> {
        self.stages.iter().find(|(s, _)| *s == stage).map(|(_, o)| *o)
    }

    pub fn computed(&self) -> usize {
        self.stages.iter().filter(|(_, o)| *o == StageOutcome::Computed).count()
    }

    pub fn succeeded(&self) -> bool {
        self.stages.iter().all(|(_, o)| matches!(o, StageOutcome::Computed | StageOutcome::Cached))
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Output files of a stage, relative to the output directory.
fn stage_outputs(stage: Stage, cfg: &PipelineConfig) -> Vec<String> {
    let v = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    match stage {
        Stage::Ingest => v(&[OBS, TEST, CORPUS_STATS]),
        Stage::Graph => v(&[NODES, EDGES, GRAPH_STATS]),
        Stage::Topics => v(&[TOPICS]),
        Stage::Diversity => v(&[USERS, PROFILES]),
        Stage::Emergent => v(&[EMERGENT]),
        Stage::Predict => v(&[PREDICT]),
        Stage::Influence => {
            let mut out = v(&[REGRESSION]);
            out.extend(cfg.influence.binned.iter().map(|b| format!("influence/{}", b.file_name())));
            out.extend(
                crate::influence::HeatStat::ALL
                    .iter()
                    .map(|s| format!("influence/{}", s.file_name())),
            );
            out
        }
    }
}

fn stage_err(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Stage { stage, message }
}

fn load_records(path: &Path) -> Result<Vec<MessageRecord>, String> {
    let parsed = read_records(path).map_err(|e| e.to_string())?;
    if parsed.skipped > 0 {
        log::warn!("{}: skipped {} malformed line(s)", path.display(), parsed.skipped);
    }
    Ok(parsed.records)
}

fn save_records(records: &[MessageRecord], path: &Path) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| e.to_string())?;
    }
    let file = fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    write_records(records, BufWriter::new(file)).map_err(|e| e.to_string())
}

fn execute(stage: Stage, cfg: &PipelineConfig) -> Result<(), String> {
    let dir = &cfg.output_dir;
    let at = |p: &str| dir.join(p);
    let io = |e: std::io::Error| e.to_string();
    match stage {
        Stage::Ingest => {
            let mut records = load_records(&cfg.input.corpus)?;
            apply_repost_policy(&mut records, cfg.ingest.repost_policy);
            let all = corpus_stats(&records);
            let split = split_periods(records, &cfg.split);
            if split.dropped > 0 {
                log::info!("{} record(s) fall outside both periods", split.dropped);
            }
            save_records(&split.observation, &at(OBS))?;
            save_records(&split.test, &at(TEST))?;
            let mut buf = Vec::new();
            write_stats_tsv(
                &[
                    ("all", all),
                    ("observation", corpus_stats(&split.observation)),
                    ("test", corpus_stats(&split.test)),
                ],
                &mut buf,
            )
            .map_err(io)?;
            tsv::write_file(&at(CORPUS_STATS), &String::from_utf8_lossy(&buf)).map_err(io)
        }
        Stage::Graph => {
            let obs = load_records(&at(OBS))?;
            let table = tally_usage(&obs);
            let thresholds = GraphThresholds {
                min_users: cfg.graph.min_users,
                min_edge: cfg.graph.min_edge,
            };
            let g = build_graph(&obs, &table, thresholds).map_err(|e| e.to_string())?;
            g.write_dir(&at("graph")).map_err(|e| e.to_string())?;
            let s = graph_stats(&g);
            let opt = |v: Option<f64>| tsv::fixed(v, 4);
            let text = format!(
                "metric\tvalue\nnodes\t{}\nedges\t{}\nisolated_nodes\t{}\ntotal_weight\t{}\nmin_weight\t{}\nmedian_weight\t{}\nmax_weight\t{}\nmean_weight\t{}\n",
                s.nodes,
                s.edges,
                s.isolated_nodes,
                s.total_weight,
                s.min_weight.map_or("NA".into(), |w| w.to_string()),
                opt(s.median_weight),
                s.max_weight.map_or("NA".into(), |w| w.to_string()),
                opt(s.mean_weight)
            );
            tsv::write_file(&at(GRAPH_STATS), &text).map_err(io)
        }
        Stage::Topics => {
            let g = CoOccurrenceGraph::read_dir(&at("graph")).map_err(|e| e.to_string())?;
            let mut model = louvain_detect(&g, cfg.topics.seed, cfg.topics.resolution).map_err(|e| e.to_string())?;
            model.select_level(cfg.topics.level);
            model.write_tsv(&at(TOPICS)).map_err(|e| e.to_string())
        }
        Stage::Diversity => {
            let obs = load_records(&at(OBS))?;
            let model = TopicModel::read_tsv(&at(TOPICS)).map_err(|e| e.to_string())?;
            let table = user_diversity_table(&obs, &model);
            write_user_table(&table, &at(USERS)).map_err(io)?;
            let followers = match &cfg.input.followers {
                Some(p) => read_followers(p).map_err(|e| e.to_string())?,
                None => HashMap::new(),
            };
            write_profiles(&build_profiles(&obs, &followers, &table), &at(PROFILES)).map_err(io)
        }
        Stage::Emergent => {
            let obs = load_records(&at(OBS))?;
            let test = load_records(&at(TEST))?;
            let set = detect_emergent(&obs, &test, &cfg.split, cfg.emergent.min_adopters);
            log::info!("{} emergent hashtag(s)", set.len());
            set.write_tsv(&at(EMERGENT)).map_err(io)
        }
        Stage::Predict => {
            let obs = load_records(&at(OBS))?;
            let test = load_records(&at(TEST))?;
            let model = TopicModel::read_tsv(&at(TOPICS)).map_err(|e| e.to_string())?;
            let profiles = read_profiles(&at(PROFILES)).map_err(|e| e.to_string())?;
            let rows = read_emergent_tsv(&at(EMERGENT)).map_err(|e| e.to_string())?;
            let set = restore_emergent(&test, &rows);
            let table = tally_usage(&obs);
            let ctx = FeatureContext::new(&profiles, &table, &model);
            let grid = cfg.predict.grid().map_err(|e| e.to_string())?;
            let cells = run_grid(&set, &ctx, &grid).map_err(|e| e.to_string())?;
            for c in cells.iter().filter(|c| c.error.is_some()) {
                log::warn!(
                    "{} at {} h / {}%: {}",
                    c.feature,
                    c.window_hours,
                    c.threshold_pct,
                    c.error.as_ref().expect("filtered on error")
                );
            }
            write_grid_tsv(&cells, &at(PREDICT)).map_err(io)
        }
        Stage::Influence => {
            let profiles = read_profiles(&at(PROFILES)).map_err(|e| e.to_string())?;
            let options = RegressionOptions {
                sample_frac: cfg.influence.sample_frac,
                seed: cfg.influence.seed,
            };
            let (fit, report) = regress_profiles(&profiles, options).map_err(|e| e.to_string())?;
            let comments = [
                format!("n={}", fit.n),
                format!("users={} sampled={} excluded={}", report.total, report.sampled, report.excluded),
                format!("r_squared={:.4}", fit.r_squared),
            ];
            fit.write_tsv(&at(REGRESSION), &comments).map_err(io)?;
            for spec in &cfg.influence.binned {
                let series = binned_correlation(&profiles, spec.by, spec.x, spec.y, Binning::Log10, MIN_BIN_USERS);
                series.write_tsv(&at(&format!("influence/{}", spec.file_name()))).map_err(io)?;
            }
            heatmap_grid(&profiles, cfg.influence.heatmap_h1_bins)
                .write_dir(&at("influence"))
                .map_err(io)
        }
    }
}

fn digest_key(stage: Stage, settings: &str, inputs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    h.update(stage.name().as_bytes());
    h.update([0]);
    h.update(settings.as_bytes());
    for (path, hash) in inputs {
        h.update([0]);
        h.update(path.as_bytes());
        h.update([0]);
        h.update(hash.as_bytes());
    }
    hex::encode(h.finalize())
}

fn cached_outputs_valid(dir: &Path, previous: &StageRecord) -> bool {
    previous.state == StageState::Completed
        && previous
            .outputs
            .iter()
            .all(|(path, hash)| sha256_file(&dir.join(path)).is_ok_and(|h| &h == hash))
}

/// Runs every stage in order. Stages at or after `from` are recomputed even when their
/// cache is valid. The manifest is rewritten after each stage.
pub fn run_pipeline(cfg: &PipelineConfig, from: Option<Stage>) -> Result<RunReport, (PipelineError, RunReport)> {
    let dir = &cfg.output_dir;
    let previous = Manifest::read(dir).unwrap_or_default();
    let mut manifest = Manifest::default();
    let mut outcomes: Vec<(Stage, StageOutcome)> = Vec::new();
    let mut failure: Option<PipelineError> = None;

    if let Err(e) = cfg.validate().and_then(|_| {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))
    }) {
        let report = RunReport {
            stages: Stage::ALL.iter().map(|s| (*s, StageOutcome::NotRun)).collect(),
            manifest,
        };
        return Err((e, report));
    }

    for stage in Stage::ALL {
        let blocked = failure.is_some()
            || stage.upstream().iter().any(|u| {
                outcomes
                    .iter()
                    .any(|(s, o)| s == u && matches!(o, StageOutcome::Failed | StageOutcome::NotRun))
            });
        if blocked {
            outcomes.push((stage, StageOutcome::NotRun));
            manifest.stages.push(StageRecord {
                stage: stage.name().into(),
                state: StageState::NotRun,
                key: String::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                error: None,
            });
            if let Err(e) = manifest.write(dir) {
                return Err((e, RunReport { stages: outcomes, manifest }));
            }
            continue;
        }
        let inputs: Result<BTreeMap<String, String>, String> = stage
            .inputs(cfg)
            .into_iter()
            .map(|(name, path)| {
                sha256_file(&path)
                    .map(|h| (name, h))
                    .map_err(|e| format!("{}: {e}", path.display()))
            })
            .collect();
        let result = inputs.and_then(|inputs| {
            let key = digest_key(stage, &stage.settings(cfg), &inputs);
            let upstream_ran = stage
                .upstream()
                .iter()
                .any(|u| outcomes.iter().any(|(s, o)| s == u && *o == StageOutcome::Computed));
            let forced = from.is_some_and(|f| stage >= f);
            let reuse = !forced
                && !upstream_ran
                && previous
                    .stage(stage)
                    .is_some_and(|p| p.key == key && cached_outputs_valid(dir, p));
            if reuse {
                log::info!("{stage}: cached");
                let record = previous.stage(stage).expect("checked above").clone();
                return Ok((StageOutcome::Cached, record));
            }
            log::info!("{stage}: running");
            execute(stage, cfg)?;
            let outputs = stage_outputs(stage, cfg)
                .into_iter()
                .map(|p| {
                    let h = sha256_file(&dir.join(&p)).map_err(|e| format!("{p}: {e}"))?;
                    Ok((p, h))
                })
                .collect::<Result<_, String>>()?;
            Ok((
                StageOutcome::Computed,
                StageRecord {
                    stage: stage.name().into(),
                    state: StageState::Completed,
                    key,
                    inputs,
                    outputs,
                    error: None,
                },
            ))
        });
        match result {
            Ok((outcome, record)) => {
                outcomes.push((stage, outcome));
                manifest.stages.push(record);
            }
            Err(message) => {
                log::error!("{stage}: {message}");
                outcomes.push((stage, StageOutcome::Failed));
                manifest.stages.push(StageRecord {
                    stage: stage.name().into(),
                    state: StageState::Failed,
                    key: String::new(),
                    inputs: BTreeMap::new(),
                    outputs: BTreeMap::new(),
                    error: Some(message.clone()),
                });
                failure = Some(stage_err(stage)(message));
            }
        }
        if let Err(e) = manifest.write(dir) {
            let report = RunReport {
                stages: outcomes,
                manifest,
            };
            return Err((e, report));
        }
    }
    let report = RunReport {
        stages: outcomes,
        manifest,
    };
    match failure {
        Some(e) => Err((e, report)),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split() -> PeriodSplit {
        PeriodSplit {
            observation_start: 0,
            observation_end: 100,
            test_start: 100,
            first_week_end: 150,
            test_end: 300,
        }
    }

    #[test]
    fn canonical_round_trip() {
        let cfg = PipelineConfig::new("corpus.ndjson".into(), Some("followers.tsv".into()), split(), "out".into());
        let text = cfg.to_canonical_toml();
        let back = PipelineConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_canonical_toml(), text);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let text = r#"
output_dir = "out"
[input]
corpus = "c.ndjson"
[split]
observation_start = 0
observation_end = 100
test_start = 100
first_week_end = 150
test_end = 300
[predict]
features = ["n", "m+H2"]
[[influence.binned]]
by = "twt"
x = "fol"
y = "H1"
"#;
        let cfg = PipelineConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.topics.level, DEFAULT_LEVEL);
        assert_eq!(cfg.predict.windows, vec![1.0, 6.0, 24.0]);
        assert_eq!(cfg.influence.binned.len(), 1);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = PipelineConfig::new("same".into(), None, split(), "same".into());
        assert!(cfg.validate().is_err());
        cfg.output_dir = "out".into();
        cfg.validate().unwrap();
        cfg.predict.features = vec!["n+nope".into()];
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::from_toml_str("output_dir = 1").is_err());
    }

    #[test]
    fn stage_order_respects_dependencies() {
        for s in Stage::ALL {
            assert!(s.upstream().iter().all(|u| *u < s));
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
    }
}
