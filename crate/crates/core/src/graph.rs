//! Undirected labeled graphs and their module (connected component) structure.
//!
//! A [`LabeledGraph`] is a simple undirected graph whose nodes carry a
//! [`Modality`] tag. Group graphs use dense ids `0..p`; induced subgraphs keep
//! the original ids of the nodes they retain. A "module" is a connected
//! component: two nodes share a module exactly when some path joins them.
//!
//! Graphs are plain values: construction may mutate, everything afterwards is
//! read-only, and all operations here are pure functions, so shared references
//! can be used freely across threads.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node identifier. Internally 0-based; file formats and reports are 1-based.
pub type NodeId = usize;

/// Short tag naming the data modality a node belongs to (e.g. "A", "FA").
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Modality(String);

impl Modality {
    pub fn new(label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::invalid_input("modality label must be non-empty"));
        }
        Ok(Modality(label))
    }

    /// Conventional label for the i-th block of a generated graph: `A`, `B`,
    /// ... `Z`, then `M26`, `M27`, ...
    pub fn block_label(i: usize) -> Self {
        if i < 26 {
            Modality(((b'A' + i as u8) as char).to_string())
        } else {
            Modality(format!("M{i}"))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Modality {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Modality::new(value)
    }
}

impl From<Modality> for String {
    fn from(m: Modality) -> String {
        m.0
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An undirected edge, stored canonically with `u < v`.
///
/// Serializes as a 1-based pair `[u+1, v+1]`, matching the file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct Edge {
    u: NodeId,
    v: NodeId,
}

impl Edge {
    pub fn new(a: NodeId, b: NodeId) -> Result<Self> {
        if a == b {
            return Err(Error::invalid_input(format!("self-loop at node {a}")));
        }
        Ok(Edge {
            u: a.min(b),
            v: a.max(b),
        })
    }

    pub fn endpoints(&self) -> (NodeId, NodeId) {
        (self.u, self.v)
    }

    pub fn u(&self) -> NodeId {
        self.u
    }

    pub fn v(&self) -> NodeId {
        self.v
    }
}

impl TryFrom<[usize; 2]> for Edge {
    type Error = Error;
    fn try_from([a, b]: [usize; 2]) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(Error::invalid_input(format!(
                "edge [{a},{b}] uses 1-based node ids"
            )));
        }
        Edge::new(a - 1, b - 1)
    }
}

impl From<Edge> for [usize; 2] {
    fn from(e: Edge) -> [usize; 2] {
        [e.u + 1, e.v + 1]
    }
}

impl fmt::Display for Edge {
    /// 1-based rendering, matching the file formats.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.u + 1, self.v + 1)
    }
}

/// Simple undirected graph with one modality label per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    nodes: BTreeMap<NodeId, Modality>,
    edges: BTreeSet<Edge>,
}

impl LabeledGraph {
    /// Graph with dense node ids `0..modalities.len()` and no edges.
    pub fn new(modalities: Vec<Modality>) -> Self {
        LabeledGraph {
            nodes: modalities.into_iter().enumerate().collect(),
            edges: BTreeSet::new(),
        }
    }

    /// Graph over an explicit node set (used for induced subgraphs).
    pub fn from_parts(
        nodes: BTreeMap<NodeId, Modality>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self> {
        let mut g = LabeledGraph {
            nodes,
            edges: BTreeSet::new(),
        };
        for e in edges {
            g.insert_edge(e)?;
        }
        Ok(g)
    }

    /// Convenience constructor: `p` nodes all tagged with one modality plus a
    /// 0-based edge list.
    pub fn from_edges(p: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let modality = Modality::new("A")?;
        let mut g = LabeledGraph::new(vec![modality; p]);
        for &(a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn modality(&self, id: NodeId) -> Option<&Modality> {
        self.nodes.get(&id)
    }

    pub fn modalities(&self) -> &BTreeMap<NodeId, Modality> {
        &self.nodes
    }

    /// True when node ids are exactly `0..p`, as required for group graphs.
    pub fn is_dense(&self) -> bool {
        self.nodes.keys().copied().eq(0..self.nodes.len())
    }

    pub fn contains_edge(&self, a: NodeId, b: NodeId) -> bool {
        Edge::new(a, b).map(|e| self.edges.contains(&e)).unwrap_or(false)
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_set(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    fn insert_edge(&mut self, e: Edge) -> Result<bool> {
        for id in [e.u, e.v] {
            if !self.nodes.contains_key(&id) {
                return Err(Error::invalid_input(format!(
                    "edge {e} references unknown node {}",
                    id + 1
                )));
            }
        }
        Ok(self.edges.insert(e))
    }

    /// Adds the undirected edge `(a, b)`. Returns false if already present.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> Result<bool> {
        let e = Edge::new(a, b)?;
        self.insert_edge(e)
    }

    /// Removes the undirected edge `(a, b)`. Returns false if absent.
    pub fn remove_edge(&mut self, a: NodeId, b: NodeId) -> bool {
        match Edge::new(a, b) {
            Ok(e) => self.edges.remove(&e),
            Err(_) => false,
        }
    }

    /// Both graphs cover the same node ids.
    pub fn same_node_ids(&self, other: &LabeledGraph) -> bool {
        self.nodes.keys().eq(other.nodes.keys())
    }

    /// Both graphs cover the same node ids with the same modality tags.
    pub fn same_node_space(&self, other: &LabeledGraph) -> bool {
        self.nodes == other.nodes
    }

    fn adjacency(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> =
            self.nodes.keys().map(|&id| (id, Vec::new())).collect();
        for e in &self.edges {
            adj.get_mut(&e.u).unwrap().push(e.v);
            adj.get_mut(&e.v).unwrap().push(e.u);
        }
        adj
    }

    /// Partition of the nodes into modules (maximal connected node sets).
    ///
    /// Modules are ordered by smallest member id, so the result is fully
    /// deterministic. An empty graph yields an empty partition.
    pub fn components(&self) -> ModulePartition {
        let adj = self.adjacency();
        let mut node_to_module = BTreeMap::new();
        let mut modules: Vec<BTreeSet<NodeId>> = Vec::new();
        for &start in self.nodes.keys() {
            if node_to_module.contains_key(&start) {
                continue;
            }
            let idx = modules.len();
            let mut members = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            node_to_module.insert(start, idx);
            members.insert(start);
            while let Some(at) = queue.pop_front() {
                for &next in &adj[&at] {
                    if let std::collections::btree_map::Entry::Vacant(slot) =
                        node_to_module.entry(next)
                    {
                        slot.insert(idx);
                        members.insert(next);
                        queue.push_back(next);
                    }
                }
            }
            modules.push(members);
        }
        ModulePartition {
            modules,
            node_to_module,
        }
    }

    /// Subgraph on `nodes`: ids are preserved and exactly the edges with both
    /// endpoints in `nodes` are kept.
    pub fn induced_subgraph(&self, nodes: &BTreeSet<NodeId>) -> Result<LabeledGraph> {
        let mut kept = BTreeMap::new();
        for &id in nodes {
            match self.nodes.get(&id) {
                Some(m) => {
                    kept.insert(id, m.clone());
                }
                None => {
                    return Err(Error::invalid_input(format!(
                        "node {} is not in the graph",
                        id + 1
                    )))
                }
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| nodes.contains(&e.u) && nodes.contains(&e.v))
            .copied()
            .collect::<Vec<_>>();
        LabeledGraph::from_parts(kept, edges)
    }
}

/// `E(a) \ E(b)` for two graphs over the same node-id space.
pub fn edge_difference(a: &LabeledGraph, b: &LabeledGraph) -> Result<BTreeSet<Edge>> {
    if !a.same_node_ids(b) {
        return Err(Error::NodeSpaceMismatch(format!(
            "edge difference over {} vs {} nodes",
            a.node_count(),
            b.node_count()
        )));
    }
    Ok(a.edges.difference(&b.edges).copied().collect())
}

/// Partition of a graph's nodes into its modules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModulePartition {
    modules: Vec<BTreeSet<NodeId>>,
    node_to_module: BTreeMap<NodeId, usize>,
}

impl ModulePartition {
    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn modules(&self) -> &[BTreeSet<NodeId>] {
        &self.modules
    }

    pub fn module(&self, idx: usize) -> &BTreeSet<NodeId> {
        &self.modules[idx]
    }

    /// Index of the module containing `id`, if the node is covered.
    pub fn module_of(&self, id: NodeId) -> Option<usize> {
        self.node_to_module.get(&id).copied()
    }

    pub fn covered_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_to_module.keys().copied()
    }

    pub fn same_node_space(&self, other: &ModulePartition) -> bool {
        self.node_to_module.keys().eq(other.node_to_module.keys())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The worked two-modality pair used throughout: healthy modules
    /// {1..6} and {7,8}, patient modules {1,2,3,5}, {4}, {6,7,8} (1-based).
    pub(crate) fn two_modality_pair() -> (LabeledGraph, LabeledGraph) {
        let modalities: Vec<Modality> = "AAAABBBB"
            .chars()
            .map(|c| Modality::new(c.to_string()).unwrap())
            .collect();
        let mut healthy = LabeledGraph::new(modalities.clone());
        // 1-based: (1,2),(2,3),(2,5),(2,6),(3,5),(4,5),(7,8)
        for (a, b) in [(0, 1), (1, 2), (1, 4), (1, 5), (2, 4), (3, 4), (6, 7)] {
            healthy.add_edge(a, b).unwrap();
        }
        let mut patient = LabeledGraph::new(modalities);
        // 1-based: (1,2),(2,3),(3,5),(7,8) plus the added (6,7)
        for (a, b) in [(0, 1), (1, 2), (2, 4), (6, 7), (5, 6)] {
            patient.add_edge(a, b).unwrap();
        }
        (healthy, patient)
    }

    fn ids(sets: &[BTreeSet<NodeId>]) -> Vec<Vec<NodeId>> {
        sets.iter().map(|s| s.iter().copied().collect()).collect()
    }

    #[test]
    fn edge_is_canonical() {
        let e = Edge::new(5, 2).unwrap();
        assert_eq!(e.endpoints(), (2, 5));
        assert_eq!(e, Edge::new(2, 5).unwrap());
        assert!(Edge::new(3, 3).is_err());
    }

    #[test]
    fn components_of_worked_example() {
        let (healthy, patient) = two_modality_pair();
        let hp = healthy.components();
        assert_eq!(ids(hp.modules()), vec![vec![0, 1, 2, 3, 4, 5], vec![6, 7]]);
        let pp = patient.components();
        assert_eq!(
            ids(pp.modules()),
            vec![vec![0, 1, 2, 4], vec![3], vec![5, 6, 7]]
        );
        assert_eq!(pp.module_of(3), Some(1));
        assert_eq!(pp.module_of(5), Some(2));
    }

    #[test]
    fn edgeless_graph_gives_singletons() {
        let g = LabeledGraph::from_edges(4, &[]).unwrap();
        let p = g.components();
        assert_eq!(p.len(), 4);
        assert!(p.modules().iter().all(|m| m.len() == 1));
    }

    #[test]
    fn path_graph_is_one_module() {
        let g = LabeledGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let p = g.components();
        assert_eq!(p.len(), 1);
        assert_eq!(ids(p.modules()), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn empty_graph_empty_partition() {
        let g = LabeledGraph::new(Vec::new());
        assert!(g.components().is_empty());
    }

    #[test]
    fn induced_subgraph_on_worked_example() {
        let (healthy, _) = two_modality_pair();
        // 1-based {1,2,3,4,5} = 0-based {0,1,2,3,4}
        let n: BTreeSet<NodeId> = (0..5).collect();
        let h = healthy.induced_subgraph(&n).unwrap();
        assert_eq!(h.node_count(), 5);
        let expect: BTreeSet<Edge> = [(0, 1), (1, 2), (1, 4), (2, 4), (3, 4)]
            .into_iter()
            .map(|(a, b)| Edge::new(a, b).unwrap())
            .collect();
        assert_eq!(*h.edge_set(), expect);
    }

    #[test]
    fn induced_subgraph_edge_cases() {
        let (healthy, _) = two_modality_pair();
        let empty = healthy.induced_subgraph(&BTreeSet::new()).unwrap();
        assert_eq!(empty.node_count(), 0);
        assert_eq!(empty.edge_count(), 0);

        let all: BTreeSet<NodeId> = healthy.node_ids().collect();
        assert_eq!(healthy.induced_subgraph(&all).unwrap(), healthy);

        let bad: BTreeSet<NodeId> = [0, 99].into_iter().collect();
        assert!(healthy.induced_subgraph(&bad).is_err());
    }

    #[test]
    fn edge_difference_on_worked_example() {
        let (healthy, patient) = two_modality_pair();
        let n: BTreeSet<NodeId> = (0..5).collect();
        let h = healthy.induced_subgraph(&n).unwrap();
        let p = patient.induced_subgraph(&n).unwrap();
        let diff = edge_difference(&h, &p).unwrap();
        let expect: BTreeSet<Edge> = [(1, 4), (3, 4)]
            .into_iter()
            .map(|(a, b)| Edge::new(a, b).unwrap())
            .collect();
        assert_eq!(diff, expect); // 1-based {(2,5),(4,5)}
    }

    #[test]
    fn edge_difference_empty_cases() {
        let (healthy, patient) = two_modality_pair();
        assert!(edge_difference(&healthy, &healthy).unwrap().is_empty());

        // Patient modules 2 and 3 (1-based {4} and {6,7,8}): empty difference.
        let n: BTreeSet<NodeId> = [3, 5, 6, 7].into_iter().collect();
        let h = healthy.induced_subgraph(&n).unwrap();
        let p = patient.induced_subgraph(&n).unwrap();
        assert!(edge_difference(&h, &p).unwrap().is_empty());
    }

    #[test]
    fn edge_difference_rejects_mismatched_spaces() {
        let a = LabeledGraph::from_edges(3, &[]).unwrap();
        let b = LabeledGraph::from_edges(4, &[]).unwrap();
        assert!(matches!(
            edge_difference(&a, &b),
            Err(Error::NodeSpaceMismatch(_))
        ));
    }

    #[test]
    fn add_edge_validates_nodes() {
        let mut g = LabeledGraph::from_edges(3, &[]).unwrap();
        assert!(g.add_edge(0, 3).is_err());
        assert!(g.add_edge(1, 1).is_err());
        assert!(g.add_edge(0, 1).unwrap());
        assert!(!g.add_edge(1, 0).unwrap()); // same undirected edge
        assert_eq!(g.edge_count(), 1);
    }
}
