//! File formats shared by the library, the command-line tool and the demo.
//!
//! All node ids and module numbers are 1-based on disk and in JSON, matching
//! the report rendering; the in-memory structures are 0-based. Serialization
//! is canonical: nodes sorted by id, edges lexicographic, so identical inputs
//! produce byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::disconnector::DisconnectorReport;
use crate::error::{Error, Result};
use crate::graph::{Edge, LabeledGraph, Modality};
use crate::rng::RNG_ALGORITHM;
use crate::synth::{SampleSet, Snr};

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: usize,
    modality: Modality,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<NodeJson>,
    edges: Vec<[usize; 2]>,
}

impl Serialize for LabeledGraph {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let nodes = self
            .modalities()
            .iter()
            .map(|(&id, m)| NodeJson {
                id: id + 1,
                modality: m.clone(),
            })
            .collect();
        let edges = self.edges().map(<[usize; 2]>::from).collect();
        GraphJson { nodes, edges }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabeledGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = GraphJson::deserialize(d)?;
        let p = raw.nodes.len();
        let mut nodes: BTreeMap<usize, Modality> = BTreeMap::new();
        for node in raw.nodes {
            if node.id == 0 || node.id > p {
                return Err(D::Error::custom(format!(
                    "node ids must be 1..={p}, got {}",
                    node.id
                )));
            }
            if nodes.insert(node.id - 1, node.modality).is_some() {
                return Err(D::Error::custom(format!("duplicate node id {}", node.id)));
            }
        }
        let mut g = LabeledGraph::from_parts(nodes, []).map_err(D::Error::custom)?;
        for pair in raw.edges {
            let e = Edge::try_from(pair).map_err(D::Error::custom)?;
            let (u, v) = e.endpoints();
            g.add_edge(u, v).map_err(D::Error::custom)?;
        }
        Ok(g)
    }
}

/// A graph parsed from disk plus any non-fatal warnings (e.g. ignored edge
/// weights).
#[derive(Debug)]
pub struct ParsedGraph {
    pub graph: LabeledGraph,
    pub warnings: Vec<String>,
}

/// Reads a graph file. `.json` files use the canonical JSON format; anything
/// else is treated as a plain edge list (`u v` per line, 1-based, `#`
/// comments allowed) with the node set and tags taken from a sidecar
/// modality map `<stem>.modalities.json` next to it. A third column of edge
/// weights is ignored with a warning.
pub fn read_graph(path: &Path) -> Result<ParsedGraph> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let graph = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        return Ok(ParsedGraph {
            graph,
            warnings: Vec::new(),
        });
    }

    let sidecar = path.with_file_name(format!(
        "{}.modalities.json",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("graph")
    ));
    let map_text = std::fs::read_to_string(&sidecar).map_err(|e| {
        Error::Parse(format!(
            "edge-list graphs need a modality sidecar at {}: {e}",
            sidecar.display()
        ))
    })?;
    let raw_map: BTreeMap<String, Modality> = serde_json::from_str(&map_text)
        .map_err(|e| Error::Parse(format!("{}: {e}", sidecar.display())))?;
    let p = raw_map.len();
    let mut nodes: BTreeMap<usize, Modality> = BTreeMap::new();
    for (key, modality) in raw_map {
        let id: usize = key
            .parse()
            .map_err(|_| Error::Parse(format!("modality map key {key:?} is not a node id")))?;
        if id == 0 || id > p {
            return Err(Error::Parse(format!(
                "modality map ids must be 1..={p}, got {id}"
            )));
        }
        nodes.insert(id - 1, modality);
    }

    let mut graph = LabeledGraph::from_parts(nodes, [])?;
    let mut warnings = Vec::new();
    let mut warned_weights = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::Parse(format!(
                "{}:{}: expected `u v` or `u v w`, got {line:?}",
                path.display(),
                lineno + 1
            )));
        }
        if fields.len() == 3 && !warned_weights {
            warnings.push(format!(
                "{}: edge weights present; graphs are unweighted, weights ignored",
                path.display()
            ));
            warned_weights = true;
        }
        let parse = |s: &str| -> Result<usize> {
            let id: usize = s
                .parse()
                .map_err(|_| Error::Parse(format!("invalid node id {s:?}")))?;
            if id == 0 {
                return Err(Error::Parse("node ids are 1-based".into()));
            }
            Ok(id - 1)
        };
        graph.add_edge(parse(fields[0])?, parse(fields[1])?)?;
    }
    Ok(ParsedGraph { graph, warnings })
}

/// Writes a graph in the canonical JSON format.
pub fn write_graph(path: &Path, graph: &LabeledGraph) -> Result<()> {
    let text = serde_json::to_string_pretty(graph)
        .map_err(|e| Error::Parse(format!("graph serialization failed: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

impl Serialize for DisconnectorReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        fn module_ids(sets: &[std::collections::BTreeSet<usize>]) -> Vec<Vec<usize>> {
            sets.iter()
                .map(|m| m.iter().map(|n| n + 1).collect())
                .collect()
        }

        #[derive(Serialize)]
        struct PairJson {
            patient_pair: [usize; 2],
            direct: Vec<Edge>,
            rejected: Vec<Edge>,
            indirect: bool,
        }

        #[derive(Serialize)]
        struct SplitJson {
            healthy_module: usize,
            patient_modules: Vec<usize>,
            pairs: Vec<PairJson>,
            direct_union: Vec<Edge>,
        }

        let splits: Vec<SplitJson> = self
            .splits
            .iter()
            .map(|split| SplitJson {
                healthy_module: split.record.healthy_module + 1,
                patient_modules: split.record.patient_modules.iter().map(|i| i + 1).collect(),
                pairs: split
                    .pairs
                    .iter()
                    .map(|pair| PairJson {
                        patient_pair: [pair.pair.0 + 1, pair.pair.1 + 1],
                        direct: pair.direct.iter().copied().collect(),
                        rejected: pair.rejected.iter().copied().collect(),
                        indirect: pair.indirect,
                    })
                    .collect(),
                direct_union: split.direct_union().into_iter().collect(),
            })
            .collect();

        let mut state = s.serialize_struct("DisconnectorReport", 6)?;
        state.serialize_field("healthy_modules", &module_ids(self.healthy_partition.modules()))?;
        state.serialize_field("patient_modules", &module_ids(self.patient_partition.modules()))?;
        state.serialize_field("splits", &splits)?;
        state.serialize_field("direct", &self.direct_edges().into_iter().collect::<Vec<_>>())?;
        state.serialize_field(
            "indirect",
            &self
                .indirect_pairs()
                .into_iter()
                .map(|(a, b)| [a + 1, b + 1])
                .collect::<Vec<_>>(),
        )?;
        state.serialize_field(
            "rejected",
            &self.rejected_edges().into_iter().collect::<Vec<_>>(),
        )?;
        state.end()
    }
}

/// Writes a matrix as bare CSV: one row per line, full-precision floats.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("{}:{}: bad number {f:?}", path.display(), lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "{}:{}: ragged row",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: empty matrix", path.display())));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Metadata written next to every sample CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub group: String,
    pub seed: u64,
    pub snr: Snr,
    pub n: usize,
    pub p: usize,
    pub modalities: Vec<Modality>,
    pub model_var: Vec<f64>,
    pub rng: String,
}

/// Writes samples as CSV (rows = subjects, header = 1-based node ids) plus a
/// JSON sidecar carrying group, seed, SNR and modalities.
pub fn write_samples(csv_path: &Path, sidecar_path: &Path, s: &SampleSet) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (1..=s.p()).map(|j| j.to_string()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in 0..s.n_subjects() {
        let cells: Vec<String> = (0..s.p()).map(|j| s.data[(row, j)].to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(csv_path, out)?;

    let sidecar = SampleSidecar {
        group: s.group.clone(),
        seed: s.seed,
        snr: s.snr,
        n: s.n_subjects(),
        p: s.p(),
        modalities: s.modalities.clone(),
        model_var: s.model_var.clone(),
        rng: RNG_ALGORITHM.to_string(),
    };
    let text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Parse(format!("sidecar serialization failed: {e}")))?;
    std::fs::write(sidecar_path, text + "\n")?;
    Ok(())
}

/// Reads a sample CSV and its sidecar back into a [`SampleSet`].
pub fn read_samples(csv_path: &Path, sidecar_path: &Path) -> Result<SampleSet> {
    let sidecar: SampleSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", sidecar_path.display())))?;
    let text = std::fs::read_to_string(csv_path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", csv_path.display())))?;
    let p = header.split(',').count();
    if p != sidecar.p {
        return Err(Error::Parse(format!(
            "{}: {p} columns but sidecar says p = {}",
            csv_path.display(),
            sidecar.p
        )));
    }
    let mut values: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("{}:{}: bad number {f:?}", csv_path.display(), lineno + 2))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != p {
            return Err(Error::Parse(format!(
                "{}:{}: ragged row",
                csv_path.display(),
                lineno + 2
            )));
        }
        values.extend(row);
        n += 1;
    }
    if n != sidecar.n {
        return Err(Error::Parse(format!(
            "{}: {n} rows but sidecar says n = {}",
            csv_path.display(),
            sidecar.n
        )));
    }
    let data = DMatrix::from_fn(n, p, |i, j| values[i * p + j]);
    Ok(SampleSet {
        data,
        group: sidecar.group,
        seed: sidecar.seed,
        snr: sidecar.snr,
        model_var: sidecar.model_var,
        modalities: sidecar.modalities,
    })
}
