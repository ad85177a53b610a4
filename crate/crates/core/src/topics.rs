//! Topic clusters as Louvain communities of the co-occurrence network.
//!
//! [`louvain_detect`] alternates local moving and aggregation and records the
//! partition of the original nodes after every pass that moved at least one node.
//! Level 0 is the finest partition. A hashtag that is a node of the graph belongs to
//! its community at the selected level; any other hashtag is a topic of its own
//! ([`TopicId::Singleton`]).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cooccurrence::CoOccurrenceGraph;
use crate::tsv::{self, Table, TsvError};

/// Level used when none is requested.
pub const DEFAULT_LEVEL: usize = 2;

#[derive(Debug, Error)]
pub enum TopicsError {
    #[error("cannot detect communities on an empty graph")]
    EmptyGraph,
    #[error("partition covers {got} nodes, graph has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("topic table: {0}")]
    Format(String),
    #[error(transparent)]
    Tsv(#[from] TsvError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Community of each node, ids dense in `0..n_communities`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<usize>,
    n_communities: usize,
    modularity: f64,
}

impl Partition {
    /// Renumbers communities by first appearance and scores the result on `g`.
    pub fn new(g: &CoOccurrenceGraph, assignment: &[usize]) -> Result<Self, TopicsError> {
        if assignment.len() != g.node_count() {
            return Err(TopicsError::SizeMismatch {
                expected: g.node_count(),
                got: assignment.len(),
            });
        }
        let (assignment, n_communities) = renumber(assignment);
        let modularity = modularity(g, &assignment);
        Ok(Self {
            assignment,
            n_communities,
            modularity,
        })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn community(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn n_communities(&self) -> usize {
        self.n_communities
    }

    pub fn modularity(&self) -> f64 {
        self.modularity
    }

    /// True when every community of `self` lies inside a single community of `coarser`.
    pub fn is_refined_by(&self, coarser: &Partition) -> bool {
        if self.assignment.len() != coarser.assignment.len() {
            return false;
        }
        let mut image: Vec<Option<usize>> = vec![None; self.n_communities];
        for (fine, coarse) in self.assignment.iter().zip(&coarser.assignment) {
            match image[*fine] {
                None => image[*fine] = Some(*coarse),
                Some(c) if c != *coarse => return false,
                _ => {}
            }
        }
        true
    }
}

fn renumber(assignment: &[usize]) -> (Vec<usize>, usize) {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let out = assignment
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Weighted Newman-Girvan modularity; 0 for a graph without edges.
pub fn modularity(g: &CoOccurrenceGraph, assignment: &[usize]) -> f64 {
    modularity_with_resolution(g, assignment, 1.0)
}

pub fn modularity_with_resolution(g: &CoOccurrenceGraph, assignment: &[usize], resolution: f64) -> f64 {
    let m = g.total_weight() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = assignment.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for e in g.edges() {
        let (a, b) = (assignment[e.source], assignment[e.target]);
        degree[a] += e.weight as f64;
        degree[b] += e.weight as f64;
        if a == b {
            internal[a] += e.weight as f64;
        }
    }
    internal
        .iter()
        .zip(&degree)
        .map(|(l, d)| l / m - resolution * (d / (2.0 * m)).powi(2))
        .sum()
}

/// Weighted graph used during optimization; supernodes carry self-loops.
#[derive(Debug, Clone)]
struct WorkGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
    total: f64,
}

impl WorkGraph {
    fn from_graph(g: &CoOccurrenceGraph) -> Self {
        let n = g.node_count();
        let adj: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| g.neighbors(i).iter().map(|&(j, w)| (j, w as f64)).collect())
            .collect();
        let degree = adj.iter().map(|a| a.iter().map(|&(_, w)| w).sum()).collect();
        Self {
            adj,
            self_loop: vec![0.0; n],
            degree,
            total: g.total_weight() as f64,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Local moving until a full sweep changes nothing. Returns the community of every
    /// node and the number of moves made.
    fn local_moves(&self, order: &[usize], resolution: f64) -> (Vec<usize>, usize) {
        let n = self.len();
        let mut community: Vec<usize> = (0..n).collect();
        let mut tot = self.degree.clone();
        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moves = 0;
        if self.total == 0.0 {
            return (community, 0);
        }
        let two_m = 2.0 * self.total;
        loop {
            let mut sweep_moves = 0;
            for &node in order {
                let current = community[node];
                let k = self.degree[node];
                for &(nb, w) in &self.adj[node] {
                    let c = community[nb];
                    if link[c] == 0.0 {
                        touched.push(c);
                    }
                    link[c] += w;
                }
                tot[current] -= k;
                let score = |c: usize, link: &[f64]| link[c] - resolution * tot[c] * k / two_m;
                let mut best = current;
                let mut best_score = score(current, &link);
                let eps = 1e-12 * (1.0 + k);
                touched.sort_unstable();
                for &c in &touched {
                    if c != current {
                        let s = score(c, &link);
                        if s > best_score + eps {
                            best = c;
                            best_score = s;
                        }
                    }
                }
                tot[best] += k;
                if best != current {
                    community[node] = best;
                    sweep_moves += 1;
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
                touched.clear();
            }
            moves += sweep_moves;
            if sweep_moves == 0 {
                break;
            }
        }
        (community, moves)
    }

    /// Quotient graph over dense community ids.
    fn aggregate(&self, community: &[usize], k: usize) -> WorkGraph {
        let mut links: Vec<HashMap<usize, f64>> = vec![HashMap::new(); k];
        let mut self_loop = vec![0.0; k];
        let mut degree = vec![0.0; k];
        for i in 0..self.len() {
            let ci = community[i];
            degree[ci] += self.degree[i];
            self_loop[ci] += self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                if j <= i {
                    continue;
                }
                let cj = community[j];
                if ci == cj {
                    self_loop[ci] += w;
                } else {
                    *links[ci].entry(cj).or_insert(0.0) += w;
                    *links[cj].entry(ci).or_insert(0.0) += w;
                }
            }
        }
        let adj = links
            .into_iter()
            .map(|m| {
                let mut v: Vec<(usize, f64)> = m.into_iter().collect();
                v.sort_by_key(|&(j, _)| j);
                v
            })
            .collect();
        WorkGraph {
            adj,
            self_loop,
            degree,
            total: self.total,
        }
    }
}

/// Partition hierarchy plus the level used for topic assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    tags: Vec<String>,
    index: HashMap<String, usize>,
    levels: Vec<Partition>,
    selected: usize,
}

/// Outcome of a level request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelSelection {
    pub level: usize,
    pub clamped: bool,
}

/// Topic of a hashtag occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TopicId {
    /// Community id at the selected level.
    Cluster(usize),
    /// A hashtag outside the co-occurrence network is its own topic.
    Singleton(String),
}

/// Anything that maps a hashtag to its topic.
pub trait TopicAssigner {
    fn assign_topic(&self, hashtag: &str) -> TopicId;
}

/// Fixed tag-to-cluster table; tags not listed become singletons.
impl TopicAssigner for HashMap<String, usize> {
    fn assign_topic(&self, hashtag: &str) -> TopicId {
        match self.get(hashtag) {
            Some(&c) => TopicId::Cluster(c),
            None => TopicId::Singleton(hashtag.to_string()),
        }
    }
}

impl TopicAssigner for TopicModel {
    fn assign_topic(&self, hashtag: &str) -> TopicId {
        TopicModel::assign_topic(self, hashtag)
    }
}

/// Runs Louvain on `g`. Nodes are visited in an order shuffled by `seed`, and each
/// node moves to the neighbouring community with the largest strictly positive
/// modularity gain, ties going to the smallest community id.
pub fn louvain_detect(g: &CoOccurrenceGraph, seed: u64, resolution: f64) -> Result<TopicModel, TopicsError> {
    if g.is_empty() {
        return Err(TopicsError::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = WorkGraph::from_graph(g);
    // community of each original node in terms of current supernodes
    let mut membership: Vec<usize> = (0..g.node_count()).collect();
    let mut levels: Vec<Partition> = Vec::new();
    loop {
        let mut order: Vec<usize> = (0..work.len()).collect();
        order.shuffle(&mut rng);
        let (community, moves) = work.local_moves(&order, resolution);
        if moves == 0 {
            break;
        }
        let (community, k) = renumber(&community);
        for m in membership.iter_mut() {
            *m = community[*m];
        }
        let (assignment, n_communities) = renumber(&membership);
        levels.push(Partition {
            modularity: modularity_with_resolution(g, &assignment, resolution),
            assignment,
            n_communities,
        });
        if k == 1 {
            break;
        }
        work = work.aggregate(&community, k);
    }
    if levels.is_empty() {
        let (assignment, n_communities) = renumber(&membership);
        levels.push(Partition {
            modularity: modularity_with_resolution(g, &assignment, resolution),
            assignment,
            n_communities,
        });
    }
    let tags: Vec<String> = g.nodes().iter().map(|n| n.tag.clone()).collect();
    let index = tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let selected = DEFAULT_LEVEL.min(levels.len() - 1);
    Ok(TopicModel {
        tags,
        index,
        levels,
        selected,
    })
}

impl TopicModel {
    pub fn levels(&self) -> &[Partition] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn selected_level(&self) -> usize {
        self.selected
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.index.contains_key(tag)
    }

    /// Selects `level`, clamping to the coarsest level (with a warning) when the
    /// hierarchy is shallower.
    pub fn select_level(&mut self, level: usize) -> LevelSelection {
        let coarsest = self.levels.len() - 1;
        let clamped = level > coarsest;
        if clamped {
            log::warn!("requested topic level {level} but hierarchy has {} level(s); using level {coarsest}", self.levels.len());
        }
        self.selected = level.min(coarsest);
        LevelSelection {
            level: self.selected,
            clamped,
        }
    }

    pub fn partition(&self) -> &Partition {
        &self.levels[self.selected]
    }

    pub fn assign_topic(&self, hashtag: &str) -> TopicId {
        match self.index.get(hashtag) {
            Some(&node) => TopicId::Cluster(self.partition().community(node)),
            None => TopicId::Singleton(hashtag.to_string()),
        }
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), TopicsError> {
        let mut out = String::new();
        let _ = writeln!(out, "# selected_level={}", self.selected);
        let q: Vec<String> = self.levels.iter().map(|p| format!("{:.6}", p.modularity)).collect();
        let _ = writeln!(out, "# modularity={}", q.join(","));
        out.push_str("tag");
        for l in 0..self.levels.len() {
            let _ = write!(out, "\tlevel{l}");
        }
        out.push_str("\tselected_topic\n");
        for (node, tag) in self.tags.iter().enumerate() {
            out.push_str(tag);
            for p in &self.levels {
                let _ = write!(out, "\t{}", p.community(node));
            }
            let _ = writeln!(out, "\t{}", self.partition().community(node));
        }
        tsv::write_file(path, &out)?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self, TopicsError> {
        let table = Table::read(path)?;
        let meta = |key: &str| {
            table
                .comments
                .iter()
                .find_map(|c| c.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| TopicsError::Format(format!("missing `# {key}=` line")))
        };
        let selected: usize = meta("selected_level")?
            .parse()
            .map_err(|_| TopicsError::Format("bad selected_level".into()))?;
        let q: Vec<f64> = meta("modularity")?
            .split(',')
            .map(|s| s.parse().map_err(|_| TopicsError::Format(format!("bad modularity `{s}`"))))
            .collect::<Result<_, _>>()?;
        let depth = q.len();
        let tag_col = table.column("tag")?;
        let level_cols: Vec<usize> = (0..depth)
            .map(|l| table.column(&format!("level{l}")))
            .collect::<Result<_, _>>()?;
        let mut tags = Vec::with_capacity(table.rows.len());
        let mut columns = vec![Vec::with_capacity(table.rows.len()); depth];
        for row in &table.rows {
            tags.push(table.cell(row, tag_col)?.to_string());
            for (l, &c) in level_cols.iter().enumerate() {
                columns[l].push(table.parse::<usize>(row, c)?);
            }
        }
        if depth == 0 || selected >= depth {
            return Err(TopicsError::Format(format!("selected level {selected} out of {depth}")));
        }
        let levels = columns
            .into_iter()
            .zip(q)
            .map(|(assignment, modularity)| {
                let n_communities = assignment.iter().copied().max().map_or(0, |c| c + 1);
                Partition {
                    assignment,
                    n_communities,
                    modularity,
                }
            })
            .collect();
        let index = tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self {
            tags,
            index,
            levels,
            selected,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique_edges(nodes: &[usize]) -> Vec<(usize, usize, u64)> {
        let mut e = Vec::new();
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                e.push((a, b, 1));
            }
        }
        e
    }

    fn two_cliques(bridge: bool) -> CoOccurrenceGraph {
        let mut e = clique_edges(&[0, 1, 2, 3]);
        e.extend(clique_edges(&[4, 5, 6, 7]));
        if bridge {
            e.push((3, 4, 1));
        }
        CoOccurrenceGraph::from_edge_list(8, &e).unwrap()
    }

    #[test]
    fn modularity_all_in_one_is_zero() {
        let g = two_cliques(true);
        assert!(modularity(&g, &[0; 8]).abs() < 1e-15);
    }

    #[test]
    fn modularity_triangle_singletons() {
        let g = CoOccurrenceGraph::from_edge_list(3, &clique_edges(&[0, 1, 2])).unwrap();
        assert!((modularity(&g, &[0, 1, 2]) + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn modularity_disjoint_cliques() {
        let g = two_cliques(false);
        assert!((modularity(&g, &[0, 0, 0, 0, 1, 1, 1, 1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn modularity_empty_graph_is_zero() {
        let g = CoOccurrenceGraph::from_edge_list(3, &[]).unwrap();
        assert_eq!(modularity(&g, &[0, 1, 2]), 0.0);
    }

    #[test]
    fn five_clique_is_one_community() {
        let g = CoOccurrenceGraph::from_edge_list(5, &clique_edges(&[0, 1, 2, 3, 4])).unwrap();
        let model = louvain_detect(&g, 7, 1.0).unwrap();
        for level in model.levels() {
            assert_eq!(level.n_communities(), 1);
        }
    }

    #[test]
    fn bridged_cliques_are_recovered() {
        let g = two_cliques(true);
        for seed in 0..20 {
            let model = louvain_detect(&g, seed, 1.0).unwrap();
            let p = model.levels().last().unwrap();
            assert_eq!(p.n_communities(), 2, "seed {seed}");
            assert_eq!(p.assignment(), &[0, 0, 0, 0, 1, 1, 1, 1]);
        }
    }

    #[test]
    fn empty_graph_is_an_error() {
        let g = CoOccurrenceGraph::from_edge_list(0, &[]).unwrap();
        assert!(matches!(louvain_detect(&g, 0, 1.0), Err(TopicsError::EmptyGraph)));
    }

    #[test]
    fn isolated_nodes_stay_singletons() {
        let g = CoOccurrenceGraph::from_edge_list(4, &[(0, 1, 2)]).unwrap();
        let model = louvain_detect(&g, 1, 1.0).unwrap();
        let p = &model.levels()[0];
        assert_eq!(p.n_communities(), 3);
        assert_eq!(p.community(0), p.community(1));
        assert_ne!(p.community(2), p.community(3));
    }

    #[test]
    fn edgeless_graph_has_singleton_level() {
        let g = CoOccurrenceGraph::from_edge_list(3, &[]).unwrap();
        let model = louvain_detect(&g, 1, 1.0).unwrap();
        assert_eq!(model.depth(), 1);
        assert_eq!(model.levels()[0].n_communities(), 3);
    }

    #[test]
    fn select_level_clamps() {
        let g = CoOccurrenceGraph::from_edge_list(5, &clique_edges(&[0, 1, 2, 3, 4])).unwrap();
        let mut model = louvain_detect(&g, 7, 1.0).unwrap();
        assert_eq!(model.depth(), 1);
        assert_eq!(model.select_level(2), LevelSelection { level: 0, clamped: true });
        assert_eq!(model.select_level(0), LevelSelection { level: 0, clamped: false });
    }

    #[test]
    fn assign_topic_rule() {
        let g = two_cliques(true);
        let model = louvain_detect(&g, 3, 1.0).unwrap();
        assert_eq!(model.assign_topic("n0"), model.assign_topic("n1"));
        assert_ne!(model.assign_topic("n0"), model.assign_topic("n7"));
        assert_eq!(
            model.assign_topic("tipfortheday"),
            TopicId::Singleton("tipfortheday".into())
        );
    }

    #[test]
    fn lookup_table_assigner() {
        let table: HashMap<String, usize> = [("gemini".to_string(), 139)].into_iter().collect();
        assert_eq!(table.assign_topic("gemini"), TopicId::Cluster(139));
        assert_eq!(table.assign_topic("tipfortheday"), TopicId::Singleton("tipfortheday".into()));
    }

    #[test]
    fn tsv_round_trip() {
        let g = two_cliques(true);
        let model = louvain_detect(&g, 3, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topics.tsv");
        model.write_tsv(&path).unwrap();
        let back = TopicModel::read_tsv(&path).unwrap();
        assert_eq!(back.tags(), model.tags());
        assert_eq!(back.selected_level(), model.selected_level());
        for (a, b) in back.levels().iter().zip(model.levels()) {
            assert_eq!(a.assignment(), b.assignment());
            assert!((a.modularity() - b.modularity()).abs() < 1e-6);
        }
    }

    #[test]
    fn refinement_check() {
        let g = two_cliques(true);
        let fine = Partition::new(&g, &[0, 0, 1, 1, 2, 2, 3, 3]).unwrap();
        let coarse = Partition::new(&g, &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        assert!(fine.is_refined_by(&coarse));
        assert!(!coarse.is_refined_by(&fine));
    }
}
