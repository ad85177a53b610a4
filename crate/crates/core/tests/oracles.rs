use proptest::prelude::*;

use topicflow::cooccurrence::{build_graph, tally_usage, CoOccurrenceGraph, GraphThresholds};
use topicflow::influence::spearman;
use topicflow::ingest::MessageRecord;
use topicflow::prediction::auc_of;
use topicflow::synth::{oracle_auc, oracle_best_partition, oracle_modularity, oracle_pair_counts};
use topicflow::topics::louvain_detect;

fn records(spec: &[(u8, Vec<u8>)]) -> Vec<MessageRecord> {
    spec.iter()
        .enumerate()
        .map(|(i, (user, tags))| {
            let mut hashtags: Vec<String> = tags.iter().map(|t| format!("t{t}")).collect();
            hashtags.sort();
            hashtags.dedup();
            MessageRecord {
                message_id: i.to_string(),
                author_id: format!("u{user}"),
                timestamp: i as i64,
                hashtags,
                repost_of: None,
            }
        })
        .collect()
}

fn small_graph() -> impl Strategy<Value = CoOccurrenceGraph> {
    (2usize..=8).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        prop::collection::vec(prop::option::weighted(0.5, 1u64..4), pairs.len()).prop_map(move |ws| {
            let edges: Vec<(usize, usize, u64)> = pairs
                .iter()
                .zip(ws)
                .filter_map(|(&(i, j), w)| w.map(|w| (i, j, w)))
                .collect();
            CoOccurrenceGraph::from_edge_list(n, &edges).expect("simple graph")
        })
    })
}

fn adjacency(g: &CoOccurrenceGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for (u, row) in a.iter_mut().enumerate() {
        for &(v, w) in g.neighbors(u) {
            row[v] = w as f64;
        }
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_matches_pair_counting(
        spec in prop::collection::vec((0u8..12, prop::collection::vec(0u8..15, 0..5)), 0..300),
        min_users in 1u64..5,
        min_edge in 1u64..5,
    ) {
        let recs = records(&spec);
        let g = build_graph(&recs, &tally_usage(&recs), GraphThresholds { min_users, min_edge }).unwrap();
        let (kept, pairs) = oracle_pair_counts(&recs, min_users, min_edge);
        let nodes: std::collections::BTreeSet<String> = g.nodes().iter().map(|n| n.tag.clone()).collect();
        prop_assert_eq!(nodes, kept);
        prop_assert_eq!(g.edge_map(), pairs);
    }

    #[test]
    fn louvain_never_beats_exhaustive_optimum(g in small_graph(), seed in 0u64..1000) {
        prop_assume!(g.edge_count() > 0);
        let (best, q_opt) = oracle_best_partition(&g).unwrap();
        prop_assert!((oracle_modularity(&adjacency(&g), &best) - q_opt).abs() < 1e-12);
        let model = louvain_detect(&g, seed, 1.0).unwrap();
        for level in model.levels() {
            let q = level.modularity();
            prop_assert!(q <= q_opt + 1e-12, "Q {} above optimum {}", q, q_opt);
            prop_assert!((q - oracle_modularity(&adjacency(&g), level.assignment())).abs() < 1e-9);
        }
    }

    #[test]
    fn auc_matches_concordance(pairs in prop::collection::vec((0u8..6, any::<bool>()), 2..150)) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        match (auc_of(&scores, &labels), oracle_auc(&scores, &labels)) {
            (Ok(a), Ok(o)) => prop_assert!((a - o).abs() < 1e-9),
            (Err(_), Err(_)) => {}
            (a, o) => prop_assert!(false, "disagree on validity: {:?} vs {:?}", a, o),
        }
    }

    #[test]
    fn spearman_matches_pearson_of_midranks(pairs in prop::collection::vec((0u8..5, 0u8..5), 3..80)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let midrank = |v: &[f64], a: f64| {
            let below = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        };
        let rx: Vec<f64> = x.iter().map(|&a| midrank(&x, a)).collect();
        let ry: Vec<f64> = y.iter().map(|&a| midrank(&y, a)).collect();
        let n = rx.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        match spearman(&x, &y) {
            Ok(c) => prop_assert!((c.rho - sxy / (sxx * syy).sqrt()).abs() < 1e-9),
            Err(_) => prop_assert!(sxx == 0.0 || syy == 0.0),
        }
    }
}

#[test]
fn bridged_cliques_match_exhaustive_search() {
    let mut edges = Vec::new();
    for block in [0, 4] {
        for i in 0..4 {
            for j in i + 1..4 {
                edges.push((block + i, block + j, 1));
            }
        }
    }
    let disjoint = CoOccurrenceGraph::from_edge_list(8, &edges).unwrap();
    let (_, q) = oracle_best_partition(&disjoint).unwrap();
    assert!((q - 0.5).abs() < 1e-12);

    edges.push((3, 4, 1));
    let g = CoOccurrenceGraph::from_edge_list(8, &edges).unwrap();
    let (best, q_opt) = oracle_best_partition(&g).unwrap();
    assert_eq!(best, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    for seed in 0..20 {
        let model = louvain_detect(&g, seed, 1.0).unwrap();
        let last = model.levels().last().unwrap();
        assert!((last.modularity() - q_opt).abs() < 1e-9, "seed {seed}");
    }
}
