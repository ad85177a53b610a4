use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topicflow::cooccurrence::{build_graph, tally_usage, CoOccurrenceGraph, GraphThresholds};
use topicflow::diversity::{entropy, topic_histogram, user_diversity_table, write_user_table};
use topicflow::emergent::{detect_emergent, read_emergent_tsv, restore_emergent};
use topicflow::influence::{
    binned_correlation, build_profiles, heatmap_grid, read_followers, read_profiles, regress_profiles,
    write_followers, write_profiles, Binning, ProfileField, RegressionOptions, MIN_BIN_USERS,
};
use topicflow::ingest::{
    apply_repost_policy, corpus_stats, read_records, split_periods, write_records, write_stats_tsv, MessageRecord,
    PeriodSplit, RepostPolicy,
};
use topicflow::pipeline::{run_pipeline, PipelineConfig, Stage, StageOutcome};
use topicflow::prediction::{auc_of, run_grid, write_grid_tsv, FeatureContext, FeatureSpec, GridConfig};
use topicflow::synth::{
    gen_corpus, gen_planted_graph, nmi, oracle_auc, oracle_best_partition, oracle_pair_counts, GeneratorConfig,
};
use topicflow::topics::{louvain_detect, TopicModel, DEFAULT_LEVEL};

#[derive(Parser)]
#[command(name = "topicflow", version, about = "Topic clusters and topical diversity in hashtag streams")]
struct Cli {
    /// Worker thread cap for parallel stages.
    #[arg(long, global = true, env = "TOPICFLOW_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a corpus, split it into periods and report counts.
    Ingest(IngestArgs),
    /// Build the hashtag co-occurrence network.
    Graph(GraphArgs),
    /// Detect topic clusters with Louvain.
    Topics(TopicsArgs),
    /// Per-user topical diversity.
    Diversity(DiversityArgs),
    /// Find emergent hashtags in the test period.
    Emergent(EmergentArgs),
    /// Evaluate early-window virality predictors.
    Predict(PredictArgs),
    /// User-level regression, binned correlations and heatmaps.
    Influence(InfluenceArgs),
    /// Generate a synthetic corpus with planted ground truth.
    Synth(SynthArgs),
    /// Run the full cached pipeline.
    Run(RunArgs),
    /// Run the built-in verification checks against brute-force oracles.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// TOML file with the period boundaries.
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    stats: PathBuf,
    /// Drop hashtag usage carried by reposts.
    #[arg(long)]
    ignore_reposts: bool,
    /// Write observation-period records here.
    #[arg(long)]
    obs_out: Option<PathBuf>,
    /// Write test-period records here.
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    min_users: u64,
    #[arg(long, default_value_t = 3)]
    min_edge: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TopicsArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: usize,
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiversityArgs {
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    users: PathBuf,
    /// `user_id \t followers` table used for the profile output.
    #[arg(long)]
    followers: Option<PathBuf>,
    /// Write per-user RT/fol/twt/H1/beta profiles here.
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Args)]
struct EmergentArgs {
    #[arg(long)]
    obs: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, default_value_t = 3)]
    min_adopters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    emergent: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    /// Observation-period records, for co-tag network membership.
    #[arg(long)]
    obs: PathBuf,
    /// Test-period records, for adoption timelines.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,6,24")]
    windows: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "50,10,1,0.1")]
    thresholds: Vec<f64>,
    #[arg(long, default_value = topicflow::prediction::DEFAULT_FEATURES)]
    features: String,
    /// Fit and evaluate combiners on all hashtags.
    #[arg(long)]
    in_sample: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InfluenceArgs {
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    regression: PathBuf,
    #[arg(long, default_value = "twt")]
    binned_by: ProfileField,
    /// Pair of fields to correlate within each bin, e.g. `fol,H1`.
    #[arg(long, value_delimiter = ',')]
    corr: Option<Vec<ProfileField>>,
    /// Where to write the binned correlation table.
    #[arg(long)]
    binned_out: Option<PathBuf>,
    /// Directory for the heatmap grids.
    #[arg(long)]
    heatmaps: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    heatmap_bins: usize,
    #[arg(long, default_value_t = 1.0)]
    sample_frac: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator TOML; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ledger: Option<PathBuf>,
    #[arg(long)]
    followers: Option<PathBuf>,
    /// Write the period boundaries of the generated corpus as TOML.
    #[arg(long)]
    split_out: Option<PathBuf>,
    /// Override the generator seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Recompute this stage and everything after it.
    #[arg(long)]
    from: Option<Stage>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    followers: Option<PathBuf>,
    #[arg(long)]
    ignore_reposts: bool,
    #[arg(long)]
    min_users: Option<u64>,
    #[arg(long)]
    min_edge: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long)]
    min_adopters: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    in_sample: bool,
    #[arg(long)]
    sample_frac: Option<f64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Random instances per check.
    #[arg(long, default_value_t = 20)]
    cases: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn load(path: &Path) -> Result<Vec<MessageRecord>> {
    let parsed = read_records(path).with_context(|| format!("reading {}", path.display()))?;
    if parsed.skipped > 0 {
        log::warn!("{}: skipped {} malformed line(s)", path.display(), parsed.skipped);
    }
    Ok(parsed.records)
}

fn save(records: &[MessageRecord], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_records(records, BufWriter::new(file))?;
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let split = PeriodSplit::from_toml_file(&a.split)?;
    let mut records = load(&a.input)?;
    let policy = if a.ignore_reposts {
        RepostPolicy::Ignore
    } else {
        RepostPolicy::Include
    };
    apply_repost_policy(&mut records, policy);
    let all = corpus_stats(&records);
    let parts = split_periods(records, &split);
    let rows = [
        ("all", all),
        ("observation", corpus_stats(&parts.observation)),
        ("test", corpus_stats(&parts.test)),
    ];
    write_stats_tsv(&rows, BufWriter::new(fs::File::create(&a.stats)?))?;
    if let Some(p) = &a.obs_out {
        save(&parts.observation, p)?;
    }
    if let Some(p) = &a.test_out {
        save(&parts.test, p)?;
    }
    Ok(())
}

fn cmd_graph(a: GraphArgs) -> Result<()> {
    let obs = load(&a.input)?;
    let table = tally_usage(&obs);
    let thresholds = GraphThresholds {
        min_users: a.min_users,
        min_edge: a.min_edge,
    };
    let g = build_graph(&obs, &table, thresholds)?;
    log::info!("{} nodes, {} edges", g.node_count(), g.edge_count());
    g.write_dir(&a.out)?;
    Ok(())
}

fn cmd_topics(a: TopicsArgs) -> Result<()> {
    let g = CoOccurrenceGraph::read_dir(&a.graph)?;
    let mut model = louvain_detect(&g, a.seed, a.resolution)?;
    model.select_level(a.level);
    log::info!(
        "{} level(s); level {} has {} topic(s), Q = {:.4}",
        model.depth(),
        model.selected_level(),
        model.partition().n_communities(),
        model.partition().modularity()
    );
    model.write_tsv(&a.out)?;
    Ok(())
}

fn cmd_diversity(a: DiversityArgs) -> Result<()> {
    let obs = load(&a.input)?;
    let model = TopicModel::read_tsv(&a.topics)?;
    let table = user_diversity_table(&obs, &model);
    write_user_table(&table, &a.users)?;
    if let Some(out) = &a.profiles {
        let followers = match &a.followers {
            Some(p) => read_followers(p)?,
            None => HashMap::new(),
        };
        write_profiles(&build_profiles(&obs, &followers, &table), out)?;
    }
    Ok(())
}

fn cmd_emergent(a: EmergentArgs) -> Result<()> {
    let split = PeriodSplit::from_toml_file(&a.split)?;
    let obs = load(&a.obs)?;
    let test = load(&a.test)?;
    let set = detect_emergent(&obs, &test, &split, a.min_adopters);
    log::info!("{} emergent hashtag(s)", set.len());
    set.write_tsv(&a.out)?;
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let obs = load(&a.obs)?;
    let test = load(&a.test)?;
    let model = TopicModel::read_tsv(&a.topics)?;
    let profiles = read_profiles(&a.profiles)?;
    let set = restore_emergent(&test, &read_emergent_tsv(&a.emergent)?);
    let table = tally_usage(&obs);
    let ctx = FeatureContext::new(&profiles, &table, &model);
    let config = GridConfig {
        windows: a.windows,
        thresholds: a.thresholds,
        features: FeatureSpec::parse_list(&a.features)?,
        in_sample: a.in_sample,
    };
    let cells = run_grid(&set, &ctx, &config)?;
    for c in &cells {
        if let Some(e) = &c.error {
            log::warn!("{} at {} h / {}%: {e}", c.feature, c.window_hours, c.threshold_pct);
        }
    }
    write_grid_tsv(&cells, &a.out)?;
    Ok(())
}

fn cmd_influence(a: InfluenceArgs) -> Result<()> {
    let profiles = read_profiles(&a.profiles)?;
    let options = RegressionOptions {
        sample_frac: a.sample_frac,
        seed: a.seed,
    };
    let (fit, report) = regress_profiles(&profiles, options)?;
    let comments = [
        format!("n={}", fit.n),
        format!("users={} sampled={} excluded={}", report.total, report.sampled, report.excluded),
        format!("r_squared={:.4}", fit.r_squared),
    ];
    fit.write_tsv(&a.regression, &comments)?;
    if let Some(pair) = &a.corr {
        if pair.len() != 2 {
            bail!("--corr takes exactly two fields, got {}", pair.len());
        }
        let series = binned_correlation(&profiles, a.binned_by, pair[0], pair[1], Binning::Log10, MIN_BIN_USERS);
        let path = match (&a.binned_out, &a.heatmaps) {
            (Some(p), _) => p.clone(),
            (None, Some(dir)) => dir.join(format!(
                "binned_{}_{}_{}.tsv",
                a.binned_by.name(),
                pair[0].name(),
                pair[1].name()
            )),
            (None, None) => bail!("--corr needs --binned-out or --heatmaps"),
        };
        series.write_tsv(&path)?;
    }
    if let Some(dir) = &a.heatmaps {
        heatmap_grid(&profiles, a.heatmap_bins).write_dir(dir)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => GeneratorConfig::from_toml_str(&fs::read_to_string(p).with_context(|| p.display().to_string())?)?,
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let corpus = gen_corpus(&cfg)?;
    save(&corpus.records, &a.out)?;
    if let Some(p) = &a.ledger {
        fs::write(p, corpus.ledger.to_json())?;
    }
    if let Some(p) = &a.followers {
        write_followers(&corpus.followers, p)?;
    }
    if let Some(p) = &a.split_out {
        fs::write(p, toml::to_string(&cfg.split())?)?;
    }
    log::info!("{} records", corpus.records.len());
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<bool> {
    let mut cfg = PipelineConfig::from_file(&a.config)?;
    if let Some(v) = a.output_dir {
        cfg.output_dir = v;
    }
    if let Some(v) = a.input {
        cfg.input.corpus = v;
    }
    if let Some(v) = a.followers {
        cfg.input.followers = Some(v);
    }
    if a.ignore_reposts {
        cfg.ingest.repost_policy = RepostPolicy::Ignore;
    }
    if let Some(v) = a.min_users {
        cfg.graph.min_users = v;
    }
    if let Some(v) = a.min_edge {
        cfg.graph.min_edge = v;
    }
    if let Some(v) = a.seed {
        cfg.topics.seed = v;
    }
    if let Some(v) = a.level {
        cfg.topics.level = v;
    }
    if let Some(v) = a.resolution {
        cfg.topics.resolution = v;
    }
    if let Some(v) = a.min_adopters {
        cfg.emergent.min_adopters = v;
    }
    if let Some(v) = a.windows {
        cfg.predict.windows = v;
    }
    if let Some(v) = a.thresholds {
        cfg.predict.thresholds = v;
    }
    if let Some(v) = a.features {
        cfg.predict.features = v;
    }
    if a.in_sample {
        cfg.predict.in_sample = true;
    }
    if let Some(v) = a.sample_frac {
        cfg.influence.sample_frac = v;
    }
    cfg.validate()?;
    if a.print_config {
        print!("{}", cfg.to_canonical_toml());
        return Ok(true);
    }
    let (report, err) = match run_pipeline(&cfg, a.from) {
        Ok(r) => (r, None),
        Err((e, r)) => (r, Some(e)),
    };
    for (stage, outcome) in &report.stages {
        let word = match outcome {
            StageOutcome::Computed => "computed",
            StageOutcome::Cached => "cached",
            StageOutcome::Failed => "FAILED",
            StageOutcome::NotRun => "not run",
        };
        println!("{stage:<10} {word}");
    }
    if let Some(e) = err {
        eprintln!("error: {e}");
        return Ok(false);
    }
    Ok(true)
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn random_tagged_corpus(rng: &mut ChaCha8Rng, n_messages: usize) -> Vec<MessageRecord> {
    let n_tags = rng.random_range(3..30);
    let n_users = rng.random_range(2..40);
    (0..n_messages)
        .map(|i| {
            let k = rng.random_range(0..5);
            let mut tags: Vec<String> = (0..k).map(|_| format!("h{}", rng.random_range(0..n_tags))).collect();
            tags.sort();
            tags.dedup();
            MessageRecord {
                message_id: format!("m{i}"),
                author_id: format!("u{}", rng.random_range(0..n_users)),
                timestamp: i as i64,
                hashtags: tags,
                repost_of: None,
            }
        })
        .collect()
}

fn run_oracles(a: &OracleArgs) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);

    let model: HashMap<String, usize> = (0..10).map(|i| (format!("a{i}"), usize::from(i > 0))).collect();
    let counts = [1, 11, 1, 1, 1, 1, 1, 1, 1, 1];
    let tags_a: Vec<String> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(format!("a{i}"), c))
        .collect();
    let h = entropy(&topic_histogram(tags_a.iter().map(String::as_str), &model)).unwrap_or(f64::NAN);
    let expect = -(0.05f64 * 0.05f64.log2() + 0.95 * 0.95f64.log2());
    checks.push(Check {
        name: "entropy of a 1/19 split",
        passed: (h - expect).abs() < 1e-12,
        detail: format!("{h:.6} vs {expect:.6}"),
    });

    let mut graph_ok = true;
    for _ in 0..a.cases {
        let n = rng.random_range(0..2000);
        let recs = random_tagged_corpus(&mut rng, n);
        let (mu, me) = (rng.random_range(1..5), rng.random_range(1..5));
        let table = tally_usage(&recs);
        let Ok(g) = build_graph(&recs, &table, GraphThresholds { min_users: mu, min_edge: me }) else {
            graph_ok = false;
            break;
        };
        let (kept, pairs) = oracle_pair_counts(&recs, mu, me);
        let nodes: std::collections::BTreeSet<String> = g.nodes().iter().map(|n| n.tag.clone()).collect();
        let edges: std::collections::BTreeMap<(String, String), u64> = g.edge_map();
        graph_ok &= nodes == kept && edges == pairs;
    }
    checks.push(Check {
        name: "co-occurrence graph vs pair counting",
        passed: graph_ok,
        detail: format!("{} corpora", a.cases),
    });

    let mut edges = Vec::new();
    for block in [0, 4] {
        for i in 0..4 {
            for j in i + 1..4 {
                edges.push((block + i, block + j, 1));
            }
        }
    }
    edges.push((3, 4, 1));
    let (louvain_q, oracle_q) = match CoOccurrenceGraph::from_edge_list(8, &edges) {
        Ok(g) => {
            let q = louvain_detect(&g, a.seed, 1.0).map(|m| {
                let mut m = m;
                let last = m.depth() - 1;
                m.select_level(last);
                m.partition().modularity()
            });
            let o = oracle_best_partition(&g).map(|(_, q)| q);
            (q.unwrap_or(f64::NAN), o.unwrap_or(f64::NAN))
        }
        Err(_) => (f64::NAN, f64::NAN),
    };
    checks.push(Check {
        name: "Louvain vs exhaustive partition search",
        passed: (louvain_q - oracle_q).abs() < 1e-9,
        detail: format!("Q {louvain_q:.6} vs {oracle_q:.6}"),
    });

    let mut scores: Vec<f64> = (0..5)
        .map(|i| {
            let cfg = GeneratorConfig {
                n_topics: 4,
                vocab_size: 100,
                p_in: 0.3,
                p_out: 0.02,
                seed: a.seed + i,
                ..GeneratorConfig::default()
            };
            let Ok(planted) = gen_planted_graph(&cfg, 1) else {
                return f64::NAN;
            };
            match louvain_detect(&planted.graph(), cfg.seed, 1.0) {
                Ok(mut m) => {
                    let last = m.depth() - 1;
                    m.select_level(last);
                    nmi(m.partition().assignment(), &planted.truth)
                }
                Err(_) => f64::NAN,
            }
        })
        .collect();
    scores.sort_by(f64::total_cmp);
    let score = scores[2];
    checks.push(Check {
        name: "Louvain recovers planted blocks",
        passed: score >= 0.9,
        detail: format!("median NMI over 5 seeds {score:.4}"),
    });

    let mut auc_ok = true;
    for _ in 0..a.cases {
        let n = rng.random_range(2..200);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        match (auc_of(&scores, &labels), oracle_auc(&scores, &labels)) {
            (Ok(x), Ok(y)) => auc_ok &= (x - y).abs() < 1e-9,
            _ => auc_ok = false,
        }
    }
    checks.push(Check {
        name: "ROC AUC vs pairwise concordance",
        passed: auc_ok,
        detail: format!("{} instances", a.cases),
    });
    checks
}

fn cmd_oracle(a: OracleArgs) -> bool {
    let start = Instant::now();
    let checks = run_oracles(&a);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{:.2}s", start.elapsed().as_secs_f64());
    checks.iter().all(|c| c.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a).map(|_| true),
        Command::Graph(a) => cmd_graph(a).map(|_| true),
        Command::Topics(a) => cmd_topics(a).map(|_| true),
        Command::Diversity(a) => cmd_diversity(a).map(|_| true),
        Command::Emergent(a) => cmd_emergent(a).map(|_| true),
        Command::Predict(a) => cmd_predict(a).map(|_| true),
        Command::Influence(a) => cmd_influence(a).map(|_| true),
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::Run(a) => cmd_run(a),
        Command::Oracle(a) => Ok(cmd_oracle(a)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
