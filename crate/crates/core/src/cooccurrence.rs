//! Thresholded, weighted hashtag co-occurrence network.
//!
//! Nodes are hashtags used by at least `min_users` distinct users. For every message,
//! each unordered pair of distinct surviving hashtags adds 1 to the pair's edge weight;
//! edges lighter than `min_edge` are dropped after counting. Surviving nodes without
//! edges stay in the graph.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::MessageRecord;
use crate::tsv::{self, Table, TsvError};

pub type TagId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("thresholds must be at least 1 (min_users={min_users}, min_edge={min_edge})")]
    InvalidThreshold { min_users: u64, min_edge: u64 },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) references a missing node")]
    MissingNode(usize, usize),
    #[error("unknown tag `{0}` in edge list")]
    UnknownTag(String),
    #[error(transparent)]
    Tsv(#[from] TsvError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Hashtag interning table with per-tag usage statistics.
///
/// Ids are assigned in lexicographic order of the tag strings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagTable {
    tags: Vec<String>,
    index: HashMap<String, TagId>,
    distinct_users: Vec<u64>,
    usage: Vec<u64>,
}

impl TagTable {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn id(&self, tag: &str) -> Option<TagId> {
        self.index.get(tag).copied()
    }

    pub fn tag(&self, id: TagId) -> &str {
        &self.tags[id as usize]
    }

    pub fn distinct_users(&self, id: TagId) -> u64 {
        self.distinct_users[id as usize]
    }

    /// Number of messages containing the tag.
    pub fn usage(&self, id: TagId) -> u64 {
        self.usage[id as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (TagId, &str)> {
        self.tags.iter().enumerate().map(|(i, t)| (i as TagId, t.as_str()))
    }
}

pub fn tally_usage<'a, I>(records: I) -> TagTable
where
    I: IntoIterator<Item = &'a MessageRecord>,
{
    let mut per_tag: BTreeMap<&str, (HashSet<&str>, u64)> = BTreeMap::new();
    for rec in records {
        for tag in &rec.hashtags {
            let entry = per_tag.entry(tag).or_default();
            entry.0.insert(&rec.author_id);
            entry.1 += 1;
        }
    }
    let mut table = TagTable::default();
    for (i, (tag, (users, usage))) in per_tag.into_iter().enumerate() {
        table.tags.push(tag.to_string());
        table.index.insert(tag.to_string(), i as TagId);
        table.distinct_users.push(users.len() as u64);
        table.usage.push(usage);
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphThresholds {
    pub min_users: u64,
    pub min_edge: u64,
}

impl Default for GraphThresholds {
    fn default() -> Self {
        Self {
            min_users: 3,
            min_edge: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo {
    pub tag: String,
    pub distinct_users: u64,
    pub usage: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: u64,
}

/// Undirected weighted graph over hashtags. Edges are stored once with
/// `source < target`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoOccurrenceGraph {
    nodes: Vec<NodeInfo>,
    index: HashMap<String, usize>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, u64)>>,
}

impl CoOccurrenceGraph {
    /// Builds a graph from node attributes and an undirected edge list. Endpoint
    /// order within an edge does not matter.
    pub fn from_parts(nodes: Vec<NodeInfo>, edges: impl IntoIterator<Item = Edge>) -> Result<Self, GraphError> {
        let n = nodes.len();
        let mut normalized: Vec<Edge> = Vec::new();
        for e in edges {
            let (s, t) = (e.source.min(e.target), e.source.max(e.target));
            if t >= n {
                return Err(GraphError::MissingNode(e.source, e.target));
            }
            if s == t {
                return Err(GraphError::SelfLoop(s));
            }
            normalized.push(Edge {
                source: s,
                target: t,
                weight: e.weight,
            });
        }
        normalized.sort();
        if let Some(w) = normalized
            .windows(2)
            .find(|w| (w[0].source, w[0].target) == (w[1].source, w[1].target))
        {
            return Err(GraphError::DuplicateEdge(w[0].source, w[0].target));
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in &normalized {
            adjacency[e.source].push((e.target, e.weight));
            adjacency[e.target].push((e.source, e.weight));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let index = nodes.iter().enumerate().map(|(i, n)| (n.tag.clone(), i)).collect();
        Ok(Self {
            nodes,
            index,
            edges: normalized,
            adjacency,
        })
    }

    /// Graph with unit node attributes, mainly for fixtures.
    pub fn from_edge_list(n_nodes: usize, edges: &[(usize, usize, u64)]) -> Result<Self, GraphError> {
        let width = n_nodes.to_string().len();
        let nodes = (0..n_nodes)
            .map(|i| NodeInfo {
                tag: format!("n{i:0width$}"),
                distinct_users: 0,
                usage: 0,
            })
            .collect();
        Self::from_parts(
            nodes,
            edges.iter().map(|&(source, target, weight)| Edge { source, target, weight }),
        )
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeInfo] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_index(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, u64)] {
        &self.adjacency[node]
    }

    pub fn weighted_degree(&self, node: usize) -> u64 {
        self.adjacency[node].iter().map(|&(_, w)| w).sum()
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Weight between two tags, 0 when not adjacent.
    pub fn weight_between(&self, a: &str, b: &str) -> u64 {
        match (self.node_index(a), self.node_index(b)) {
            (Some(i), Some(j)) => self.adjacency[i]
                .binary_search_by_key(&j, |&(k, _)| k)
                .map(|pos| self.adjacency[i][pos].1)
                .unwrap_or(0),
            _ => 0,
        }
    }

    /// Edges as `(tag_i, tag_j) -> weight` with `tag_i < tag_j` lexicographically.
    pub fn edge_map(&self) -> BTreeMap<(String, String), u64> {
        self.edges
            .iter()
            .map(|e| {
                let (a, b) = (&self.nodes[e.source].tag, &self.nodes[e.target].tag);
                let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                (key, e.weight)
            })
            .collect()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), GraphError> {
        let mut nodes = String::from("tag\tdistinct_users\tusage_count\n");
        for n in &self.nodes {
            let _ = writeln!(nodes, "{}\t{}\t{}", n.tag, n.distinct_users, n.usage);
        }
        let mut edges = String::from("tag_i\ttag_j\tweight\n");
        for e in &self.edges {
            let _ = writeln!(edges, "{}\t{}\t{}", self.nodes[e.source].tag, self.nodes[e.target].tag, e.weight);
        }
        tsv::write_file(&dir.join("nodes.tsv"), &nodes)?;
        tsv::write_file(&dir.join("edges.tsv"), &edges)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, GraphError> {
        let node_table = Table::read(&dir.join("nodes.tsv"))?;
        let (c_tag, c_users, c_usage) = (
            node_table.column("tag")?,
            node_table.column("distinct_users")?,
            node_table.column("usage_count")?,
        );
        let mut nodes = Vec::with_capacity(node_table.rows.len());
        for row in &node_table.rows {
            nodes.push(NodeInfo {
                tag: node_table.cell(row, c_tag)?.to_string(),
                distinct_users: node_table.parse(row, c_users)?,
                usage: node_table.parse(row, c_usage)?,
            });
        }
        let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.tag.as_str(), i)).collect();
        let edge_table = Table::read(&dir.join("edges.tsv"))?;
        let (c_i, c_j, c_w) = (
            edge_table.column("tag_i")?,
            edge_table.column("tag_j")?,
            edge_table.column("weight")?,
        );
        let mut edges = Vec::with_capacity(edge_table.rows.len());
        for row in &edge_table.rows {
            let lookup = |col| -> Result<usize, GraphError> {
                let tag = edge_table.cell(row, col)?;
                index.get(tag).copied().ok_or_else(|| GraphError::UnknownTag(tag.to_string()))
            };
            edges.push(Edge {
                source: lookup(c_i)?,
                target: lookup(c_j)?,
                weight: edge_table.parse(row, c_w)?,
            });
        }
        Self::from_parts(nodes, edges)
    }
}

const SHARD: usize = 4096;

pub fn build_graph(
    records: &[MessageRecord],
    table: &TagTable,
    thresholds: GraphThresholds,
) -> Result<CoOccurrenceGraph, GraphError> {
    if thresholds.min_users == 0 || thresholds.min_edge == 0 {
        return Err(GraphError::InvalidThreshold {
            min_users: thresholds.min_users,
            min_edge: thresholds.min_edge,
        });
    }
    let mut node_of_tag: Vec<Option<u32>> = vec![None; table.len()];
    let mut nodes = Vec::new();
    for (id, tag) in table.iter() {
        if table.distinct_users(id) >= thresholds.min_users {
            node_of_tag[id as usize] = Some(nodes.len() as u32);
            nodes.push(NodeInfo {
                tag: tag.to_string(),
                distinct_users: table.distinct_users(id),
                usage: table.usage(id),
            });
        }
    }

    let counts = records
        .par_chunks(SHARD)
        .map(|shard| {
            let mut local: HashMap<(u32, u32), u64> = HashMap::new();
            let mut ids = Vec::new();
            for rec in shard {
                ids.clear();
                ids.extend(
                    rec.hashtags
                        .iter()
                        .filter_map(|t| table.id(t))
                        .filter_map(|id| node_of_tag[id as usize]),
                );
                ids.sort_unstable();
                ids.dedup();
                for (k, &a) in ids.iter().enumerate() {
                    for &b in &ids[k + 1..] {
                        *local.entry((a, b)).or_insert(0) += 1;
                    }
                }
            }
            local
        })
        .reduce(HashMap::new, |mut acc, part| {
            for (k, v) in part {
                *acc.entry(k).or_insert(0) += v;
            }
            acc
        });

    let edges = counts
        .into_iter()
        .filter(|&(_, w)| w >= thresholds.min_edge)
        .map(|((a, b), weight)| Edge {
            source: a as usize,
            target: b as usize,
            weight,
        });
    CoOccurrenceGraph::from_parts(nodes, edges)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub isolated_nodes: usize,
    pub total_weight: u64,
    pub min_weight: Option<u64>,
    pub median_weight: Option<f64>,
    pub max_weight: Option<u64>,
    pub mean_weight: Option<f64>,
}

pub fn graph_stats(g: &CoOccurrenceGraph) -> GraphStats {
    let mut weights: Vec<u64> = g.edges.iter().map(|e| e.weight).collect();
    weights.sort_unstable();
    let total: u64 = weights.iter().sum();
    let median = (!weights.is_empty()).then(|| {
        let mid = weights.len() / 2;
        if weights.len() % 2 == 1 {
            weights[mid] as f64
        } else {
            (weights[mid - 1] + weights[mid]) as f64 / 2.0
        }
    });
    GraphStats {
        nodes: g.node_count(),
        edges: g.edge_count(),
        isolated_nodes: g.adjacency.iter().filter(|a| a.is_empty()).count(),
        total_weight: total,
        min_weight: weights.first().copied(),
        median_weight: median,
        max_weight: weights.last().copied(),
        mean_weight: (!weights.is_empty()).then(|| total as f64 / weights.len() as f64),
    }
}
