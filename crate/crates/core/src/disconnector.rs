//! The three-step modularity comparison between a healthy and a patient graph.
//!
//! Step 1 finds the modules of both graphs. Step 2 flags every healthy module
//! whose nodes spread over two or more patient modules. Step 3 walks all
//! 2-combinations of those patient modules, induces the subgraphs on the union
//! of the pair's nodes, and subtracts the patient edges from the healthy
//! edges: a surviving edge whose endpoints lie in two different patient
//! modules and inside the current healthy module is a *direct disconnector*;
//! a pair with an empty difference set has become disconnected *indirectly*
//! through other modules.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{edge_difference, Edge, LabeledGraph, ModulePartition, NodeId};

/// A healthy module whose node set intersects two or more patient modules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRecord {
    /// Index into the healthy partition.
    pub healthy_module: usize,
    /// Indices of all patient modules with non-empty intersection (the set
    /// the pairwise pass runs over).
    pub patient_modules: BTreeSet<usize>,
}

/// Outcome of the edge subtraction for one pair of patient modules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairOutcome {
    /// Patient module indices, `pair.0 < pair.1`.
    pub pair: (usize, usize),
    /// Missing edges accepted as disconnectors for this pair.
    pub direct: BTreeSet<Edge>,
    /// Missing edges not accepted for this pair (endpoints share a patient
    /// module, or fall outside the healthy module under analysis). Kept for
    /// inspection.
    pub rejected: BTreeSet<Edge>,
    /// True when the edge difference was empty: the pair separated through
    /// other module(s).
    pub indirect: bool,
}

/// All pairwise findings for one split healthy module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitFindings {
    pub record: SplitRecord,
    pub pairs: Vec<PairOutcome>,
}

impl SplitFindings {
    /// Union of the direct disconnectors over all pairs of this split.
    pub fn direct_union(&self) -> BTreeSet<Edge> {
        self.pairs.iter().flat_map(|p| p.direct.iter().copied()).collect()
    }
}

/// Full result of comparing a healthy graph against a patient graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisconnectorReport {
    pub healthy_partition: ModulePartition,
    pub patient_partition: ModulePartition,
    pub splits: Vec<SplitFindings>,
}

impl DisconnectorReport {
    /// No healthy module split apart.
    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    /// Union of all direct disconnector edges.
    pub fn direct_edges(&self) -> BTreeSet<Edge> {
        self.splits.iter().flat_map(|s| s.direct_union()).collect()
    }

    /// Direct disconnectors keyed by patient module pair, merged over splits.
    pub fn direct_by_pair(&self) -> BTreeMap<(usize, usize), BTreeSet<Edge>> {
        let mut map: BTreeMap<(usize, usize), BTreeSet<Edge>> = BTreeMap::new();
        for split in &self.splits {
            for pair in &split.pairs {
                if !pair.direct.is_empty() {
                    map.entry(pair.pair).or_default().extend(pair.direct.iter().copied());
                }
            }
        }
        map
    }

    /// Patient module pairs that separated indirectly.
    pub fn indirect_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.splits
            .iter()
            .flat_map(|s| s.pairs.iter())
            .filter(|p| p.indirect)
            .map(|p| p.pair)
            .collect()
    }

    /// Union of all rejected edges.
    pub fn rejected_edges(&self) -> BTreeSet<Edge> {
        self.splits
            .iter()
            .flat_map(|s| s.pairs.iter())
            .flat_map(|p| p.rejected.iter().copied())
            .collect()
    }

    /// Human-readable summary; node ids and module numbers are 1-based.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let set = |s: &BTreeSet<NodeId>| {
            let items: Vec<String> = s.iter().map(|n| (n + 1).to_string()).collect();
            format!("{{{}}}", items.join(", "))
        };
        let edges = |es: &BTreeSet<Edge>| -> String {
            if es.is_empty() {
                "none".to_string()
            } else {
                es.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
            }
        };
        writeln!(out, "healthy modules: {}", self.healthy_partition.len()).unwrap();
        for (i, m) in self.healthy_partition.modules().iter().enumerate() {
            writeln!(out, "  healthy_module_{}: {}", i + 1, set(m)).unwrap();
        }
        writeln!(out, "patient modules: {}", self.patient_partition.len()).unwrap();
        for (i, m) in self.patient_partition.modules().iter().enumerate() {
            writeln!(out, "  patient_module_{}: {}", i + 1, set(m)).unwrap();
        }
        if self.splits.is_empty() {
            writeln!(out, "no disconnectivity detected").unwrap();
            return out;
        }
        for split in &self.splits {
            let targets: Vec<String> = split
                .record
                .patient_modules
                .iter()
                .map(|i| (i + 1).to_string())
                .collect();
            writeln!(
                out,
                "healthy_module_{} spreads into patient modules {{{}}}",
                split.record.healthy_module + 1,
                targets.join(", ")
            )
            .unwrap();
            for pair in &split.pairs {
                let label = format!(
                    "(patient_module_{}, patient_module_{})",
                    pair.pair.0 + 1,
                    pair.pair.1 + 1
                );
                if pair.indirect {
                    writeln!(out, "  {label}: indirectly disconnected through other module(s)")
                        .unwrap();
                } else {
                    writeln!(out, "  {label}: direct disconnector(s) {}", edges(&pair.direct))
                        .unwrap();
                    if !pair.rejected.is_empty() {
                        writeln!(out, "    rejected (not between the pair): {}", edges(&pair.rejected))
                            .unwrap();
                    }
                }
            }
            writeln!(
                out,
                "  all direct disconnectors for this split: {}",
                edges(&split.direct_union())
            )
            .unwrap();
        }
        writeln!(
            out,
            "missing edges associated with disconnectivity: {}",
            edges(&self.direct_edges())
        )
        .unwrap();
        out
    }
}

/// Healthy modules whose node sets intersect two or more patient modules.
///
/// Modules intersecting exactly one patient module show no disconnectivity
/// and are omitted.
pub fn detect_splits(
    healthy: &ModulePartition,
    patient: &ModulePartition,
) -> Result<Vec<SplitRecord>> {
    if !healthy.same_node_space(patient) {
        return Err(Error::NodeSpaceMismatch(
            "partitions cover different node sets".into(),
        ));
    }
    let mut splits = Vec::new();
    for (h_idx, members) in healthy.modules().iter().enumerate() {
        let touched: BTreeSet<usize> = members
            .iter()
            .map(|&n| patient.module_of(n).expect("partitions cover the same nodes"))
            .collect();
        if touched.len() >= 2 {
            splits.push(SplitRecord {
                healthy_module: h_idx,
                patient_modules: touched,
            });
        }
    }
    Ok(splits)
}

/// Runs the full three-step comparison of `healthy` against `patient`.
pub fn find_disconnectors(
    healthy: &LabeledGraph,
    patient: &LabeledGraph,
) -> Result<DisconnectorReport> {
    if !healthy.same_node_space(patient) {
        return Err(Error::NodeSpaceMismatch(
            "healthy and patient graphs must share nodes and modalities".into(),
        ));
    }
    let healthy_partition = healthy.components();
    let patient_partition = patient.components();
    let splits = detect_splits(&healthy_partition, &patient_partition)?;

    let mut findings = Vec::with_capacity(splits.len());
    for record in splits {
        let h_members = healthy_partition.module(record.healthy_module);
        let indices: Vec<usize> = record.patient_modules.iter().copied().collect();
        let mut pairs = Vec::new();
        for (a_pos, &a) in indices.iter().enumerate() {
            for &b in &indices[a_pos + 1..] {
                let union: BTreeSet<NodeId> = patient_partition
                    .module(a)
                    .iter()
                    .chain(patient_partition.module(b).iter())
                    .copied()
                    .collect();
                let h_sub = healthy.induced_subgraph(&union)?;
                let p_sub = patient.induced_subgraph(&union)?;
                let missing = edge_difference(&h_sub, &p_sub)?;
                let indirect = missing.is_empty();
                let mut direct = BTreeSet::new();
                let mut rejected = BTreeSet::new();
                for e in missing {
                    let (u, v) = e.endpoints();
                    let crosses = patient_partition.module_of(u) != patient_partition.module_of(v);
                    let inside = h_members.contains(&u) && h_members.contains(&v);
                    if crosses && inside {
                        direct.insert(e);
                    } else {
                        rejected.insert(e);
                    }
                }
                pairs.push(PairOutcome {
                    pair: (a, b),
                    direct,
                    rejected,
                    indirect,
                });
            }
        }
        findings.push(SplitFindings { record, pairs });
    }
    Ok(DisconnectorReport {
        healthy_partition,
        patient_partition,
        splits: findings,
    })
}

/// Path existence check used only by the oracle, independent of
/// [`LabeledGraph::components`].
fn reachable(g: &LabeledGraph, from: NodeId, to: NodeId) -> bool {
    if from == to {
        return true;
    }
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for e in g.edges() {
        let (u, v) = e.endpoints();
        adj.entry(u).or_default().push(v);
        adj.entry(v).or_default().push(u);
    }
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(at) = queue.pop_front() {
        if let Some(next) = adj.get(&at) {
            for &n in next {
                if n == to {
                    return true;
                }
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
    }
    false
}

/// Brute-force reference: every edge present in the healthy graph and absent
/// in the patient graph whose endpoints share a healthy module but lie in
/// different patient modules. Checked edge by edge with a direct path search,
/// so it stays independent of [`find_disconnectors`].
pub fn disconnector_oracle(
    healthy: &LabeledGraph,
    patient: &LabeledGraph,
) -> Result<BTreeSet<Edge>> {
    if !healthy.same_node_space(patient) {
        return Err(Error::NodeSpaceMismatch(
            "healthy and patient graphs must share nodes and modalities".into(),
        ));
    }
    let mut out = BTreeSet::new();
    for e in edge_difference(healthy, patient)? {
        let (u, v) = e.endpoints();
        if reachable(healthy, u, v) && !reachable(patient, u, v) {
            out.insert(e);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Modality;

    fn edge(a: NodeId, b: NodeId) -> Edge {
        Edge::new(a, b).unwrap()
    }

    fn edge_set(pairs: &[(NodeId, NodeId)]) -> BTreeSet<Edge> {
        pairs.iter().map(|&(a, b)| edge(a, b)).collect()
    }

    /// Two-modality worked example; see `graph::tests::two_modality_pair`.
    fn two_modality_pair() -> (LabeledGraph, LabeledGraph) {
        let modalities: Vec<Modality> = "AAAABBBB"
            .chars()
            .map(|c| Modality::new(c.to_string()).unwrap())
            .collect();
        let mut healthy = LabeledGraph::new(modalities.clone());
        for (a, b) in [(0, 1), (1, 2), (1, 4), (1, 5), (2, 4), (3, 4), (6, 7)] {
            healthy.add_edge(a, b).unwrap();
        }
        let mut patient = LabeledGraph::new(modalities);
        for (a, b) in [(0, 1), (1, 2), (2, 4), (6, 7), (5, 6)] {
            patient.add_edge(a, b).unwrap();
        }
        (healthy, patient)
    }

    /// Three-modality worked example: healthy modules {1,..,7,9,10,11} and
    /// {8}; removing (2,5),(6,7),(10,11) and adding (8,9) splits the big
    /// module into {1,2,3,6}, {4,5,8,9}, {7,10}, {11} (all 1-based).
    pub(crate) fn three_modality_pair() -> (LabeledGraph, LabeledGraph) {
        let modalities: Vec<Modality> = "AAABBBBCCCC"
            .chars()
            .map(|c| Modality::new(c.to_string()).unwrap())
            .collect();
        let mut healthy = LabeledGraph::new(modalities);
        // 1-based: (1,2),(2,3),(2,5),(2,6),(4,5),(5,9),(6,7),(7,10),(10,11)
        for (a, b) in [
            (0, 1),
            (1, 2),
            (1, 4),
            (1, 5),
            (3, 4),
            (4, 8),
            (5, 6),
            (6, 9),
            (9, 10),
        ] {
            healthy.add_edge(a, b).unwrap();
        }
        let mut patient = healthy.clone();
        for (a, b) in [(1, 4), (5, 6), (9, 10)] {
            assert!(patient.remove_edge(a, b));
        }
        patient.add_edge(7, 8).unwrap(); // 1-based (8,9)
        (healthy, patient)
    }

    #[test]
    fn detect_splits_worked_example() {
        let (healthy, patient) = two_modality_pair();
        let hp = healthy.components();
        let pp = patient.components();
        let splits = detect_splits(&hp, &pp).unwrap();
        // Only healthy module 1 splits, into patient modules 1, 2 and 3.
        assert_eq!(splits.len(), 1);
        assert_eq!(splits[0].healthy_module, 0);
        assert_eq!(
            splits[0].patient_modules,
            [0usize, 1, 2].into_iter().collect()
        );
        // Intersections behind the record: {1,2,3,5}, {4}, {6} (1-based).
        let h1 = hp.module(0);
        let inter: Vec<BTreeSet<NodeId>> = (0..3)
            .map(|i| h1.intersection(pp.module(i)).copied().collect())
            .collect();
        assert_eq!(inter[0], [0usize, 1, 2, 4].into_iter().collect());
        assert_eq!(inter[1], [3usize].into_iter().collect());
        assert_eq!(inter[2], [5usize].into_iter().collect());
    }

    #[test]
    fn identical_partitions_have_no_splits() {
        let (healthy, _) = two_modality_pair();
        let hp = healthy.components();
        assert!(detect_splits(&hp, &hp).unwrap().is_empty());
    }

    #[test]
    fn detect_splits_rejects_mismatched_spaces() {
        let (healthy, _) = two_modality_pair();
        let other = LabeledGraph::from_edges(3, &[]).unwrap();
        assert!(detect_splits(&healthy.components(), &other.components()).is_err());
    }

    #[test]
    fn find_disconnectors_two_modality_golden() {
        let (healthy, patient) = two_modality_pair();
        let report = find_disconnectors(&healthy, &patient).unwrap();

        // Direct: (4,5) for pair (P1,P2) and (2,6) for pair (P1,P3).
        let by_pair = report.direct_by_pair();
        assert_eq!(by_pair[&(0, 1)], edge_set(&[(3, 4)]));
        assert_eq!(by_pair[&(0, 2)], edge_set(&[(1, 5)]));
        assert_eq!(report.direct_edges(), edge_set(&[(3, 4), (1, 5)]));

        // (P2,P3) separated indirectly; (2,5) rejected (same patient module).
        assert_eq!(report.indirect_pairs(), [(1usize, 2usize)].into_iter().collect());
        assert!(report.rejected_edges().contains(&edge(1, 4)));
    }

    #[test]
    fn find_disconnectors_three_modality_golden() {
        let (healthy, patient) = three_modality_pair();
        let report = find_disconnectors(&healthy, &patient).unwrap();

        // The ten-node healthy module splits into four patient modules.
        assert_eq!(report.splits.len(), 1);
        assert_eq!(report.splits[0].record.patient_modules.len(), 4);

        let by_pair = report.direct_by_pair();
        assert_eq!(by_pair[&(0, 1)], edge_set(&[(1, 4)])); // (2,5) for (M1,M2)
        assert_eq!(by_pair[&(0, 2)], edge_set(&[(5, 6)])); // (6,7) for (M1,M3)
        assert_eq!(by_pair[&(2, 3)], edge_set(&[(9, 10)])); // (10,11) for (M3,M4)
        assert_eq!(
            report.indirect_pairs(),
            [(0usize, 3usize), (1, 2), (1, 3)].into_iter().collect()
        );
        // Union over the split reproduces all three planted removals.
        assert_eq!(
            report.splits[0].direct_union(),
            edge_set(&[(1, 4), (5, 6), (9, 10)])
        );
        // The edge added only in the patient graph is never reported.
        let added = edge(7, 8);
        assert!(!report.direct_edges().contains(&added));
        assert!(!report.rejected_edges().contains(&added));
    }

    #[test]
    fn identical_graphs_give_empty_report() {
        let (healthy, _) = two_modality_pair();
        let report = find_disconnectors(&healthy, &healthy).unwrap();
        assert!(report.is_empty());
        assert!(report.direct_edges().is_empty());
        assert!(report.indirect_pairs().is_empty());
    }

    #[test]
    fn mismatched_modalities_rejected() {
        let (healthy, _) = two_modality_pair();
        let other = LabeledGraph::from_edges(8, &[]).unwrap(); // all modality "A"
        assert!(matches!(
            find_disconnectors(&healthy, &other),
            Err(Error::NodeSpaceMismatch(_))
        ));
    }

    #[test]
    fn oracle_on_worked_examples() {
        let (healthy, patient) = two_modality_pair();
        assert_eq!(
            disconnector_oracle(&healthy, &patient).unwrap(),
            edge_set(&[(3, 4), (1, 5)])
        );
        assert!(disconnector_oracle(&healthy, &healthy).unwrap().is_empty());

        let (h3, p3) = three_modality_pair();
        assert_eq!(
            disconnector_oracle(&h3, &p3).unwrap(),
            edge_set(&[(1, 4), (5, 6), (9, 10)])
        );
    }

    #[test]
    fn text_rendering_mentions_key_facts() {
        let (healthy, patient) = two_modality_pair();
        let text = find_disconnectors(&healthy, &patient).unwrap().render_text();
        assert!(text.contains("healthy_module_1 spreads into patient modules {1, 2, 3}"));
        assert!(text.contains("(4,5)"));
        assert!(text.contains("(2,6)"));
        assert!(text.contains("indirectly disconnected"));
    }
}
