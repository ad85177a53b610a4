use std::collections::{BTreeSet, HashMap};

use topicflow::cooccurrence::{build_graph, tally_usage, GraphThresholds};
use topicflow::diversity::user_diversity_table;
use topicflow::emergent::detect_emergent;
use topicflow::ingest::split_periods;
use topicflow::synth::{gen_corpus, GeneratorConfig, GroundTruthLedger};
use topicflow::topics::louvain_detect;

fn config(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        n_agents: 600,
        n_emergent: 300,
        n_late: 30,
        ..GeneratorConfig::default()
    }
}

#[test]
fn focused_agents_are_less_diverse() {
    let corpus = gen_corpus(&config(4)).unwrap();
    let split = corpus.ledger.split;
    let parts = split_periods(corpus.records, &split);
    let table = tally_usage(&parts.observation);
    let g = build_graph(&parts.observation, &table, GraphThresholds::default()).unwrap();
    let model = louvain_detect(&g, 42, 1.0).unwrap();
    let diversity = user_diversity_table(&parts.observation, &model);
    let mean = |focused: bool| {
        let values: Vec<f64> = corpus
            .ledger
            .agents
            .iter()
            .filter(|a| a.focused == focused)
            .filter_map(|a| diversity.get(&a.user_id).and_then(|d| d.h1))
            .collect();
        values.iter().sum::<f64>() / values.len() as f64
    };
    let (focused, diverse) = (mean(true), mean(false));
    assert!(focused + 0.3 < diverse, "focused {focused:.3} vs diverse {diverse:.3}");
}

#[test]
fn injected_tags_are_detected_and_late_ones_are_not() {
    let corpus = gen_corpus(&config(5)).unwrap();
    let ledger = &corpus.ledger;
    let parts = split_periods(corpus.records.clone(), &ledger.split);
    let set = detect_emergent(&parts.observation, &parts.test, &ledger.split, 3);
    let detected: BTreeSet<&str> = set.members.iter().map(|m| m.timeline.hashtag.as_str()).collect();
    for truth in &ledger.emergent {
        assert!(detected.contains(truth.tag.as_str()), "{} missed", truth.tag);
        assert_eq!(set.get(&truth.tag).unwrap().final_popularity, truth.popularity);
    }
    assert!(ledger.late.iter().all(|t| !detected.contains(t.tag.as_str())));
    assert_eq!(detected.len(), ledger.emergent.len());
}

#[test]
fn generation_is_deterministic_and_ledger_round_trips() {
    let a = gen_corpus(&config(6)).unwrap();
    let b = gen_corpus(&config(6)).unwrap();
    assert_eq!(a, b);
    let back = GroundTruthLedger::from_json(&a.ledger.to_json()).unwrap();
    assert_eq!(back, a.ledger);
    let c = gen_corpus(&config(7)).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn reposts_credit_the_source_author() {
    let corpus = gen_corpus(&config(8)).unwrap();
    let mut reposted: HashMap<&str, u64> = HashMap::new();
    let authors: HashMap<&str, &str> = corpus
        .records
        .iter()
        .map(|r| (r.message_id.as_str(), r.author_id.as_str()))
        .collect();
    for r in &corpus.records {
        if let Some(src) = &r.repost_of {
            assert!(r.hashtags.is_empty());
            let author = authors.get(src.as_str()).copied().unwrap_or(src.as_str());
            *reposted.entry(author).or_default() += 1;
        }
    }
    assert!(!reposted.is_empty());
}
