//! Scoring and experiment orchestration: disconnector precision / recall /
//! F-measure, precision-matrix MSE, and the SNR sweep over an ensemble of
//! generated graph pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::config::{PlantMode, SimulationConfig};
use crate::disconnector::{disconnector_oracle, find_disconnectors};
use crate::error::{Error, Result};
use crate::estimator::{joint_estimate_auto, precision_to_pcorr, significance_adjacency};
use crate::graph::{Edge, LabeledGraph, Modality};
use crate::rng::{index, label, stream_seed};
use crate::synth::{
    add_noise_for_snr, generate_sbm, plant_disconnectivity, pcorr_to_cov_model, random_partial_corr,
    random_plant, sample_gaussian, CovModel, PlantConfig, SampleSet, Snr,
};

/// Precision, recall and F-measure of an estimated disconnector set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub true_count: usize,
    pub estimated_count: usize,
    pub hit_count: usize,
}

/// Compares an estimated disconnector edge set against the ground truth.
///
/// Edges match as unordered pairs; module attributions play no role. Empty
/// sets: estimating nothing when nothing is true is a perfect score, while
/// estimating nothing against a non-empty truth (or anything against an
/// empty truth) scores zero.
pub fn score_disconnectors(estimated: &BTreeSet<Edge>, truth: &BTreeSet<Edge>) -> Score {
    let hit_count = estimated.intersection(truth).count();
    let (true_count, estimated_count) = (truth.len(), estimated.len());
    if true_count == 0 && estimated_count == 0 {
        return Score {
            precision: 1.0,
            recall: 1.0,
            f_measure: 1.0,
            true_count,
            estimated_count,
            hit_count,
        };
    }
    let precision = if estimated_count == 0 {
        0.0
    } else {
        hit_count as f64 / estimated_count as f64
    };
    let recall = if true_count == 0 {
        0.0
    } else {
        hit_count as f64 / true_count as f64
    };
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Score {
        precision,
        recall,
        f_measure,
        true_count,
        estimated_count,
        hit_count,
    }
}

/// Mean of squared entrywise differences over all `p^2` entries.
pub fn precision_mse(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(Error::invalid_input(format!(
            "shape mismatch: {:?} vs {:?}",
            est.shape(),
            truth.shape()
        )));
    }
    let n = (est.nrows() * est.ncols()) as f64;
    Ok(est
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Five-number summary with type-7 (linear interpolation) quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNum {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn five_number(values: &[f64]) -> Option<FiveNum> {
    if values.is_empty() {
        return None;
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let quantile = |q: f64| -> f64 {
        let pos = q * (xs.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        if lo + 1 < xs.len() {
            xs[lo] * (1.0 - frac) + xs[lo + 1] * frac
        } else {
            xs[lo]
        }
    };
    Some(FiveNum {
        min: xs[0],
        q1: quantile(0.25),
        median: quantile(0.5),
        q3: quantile(0.75),
        max: *xs.last().unwrap(),
    })
}

/// One fixed graph pair of the ensemble with its models, ground truth and
/// clean samples. Independent of SNR, so a sweep generates these once.
#[derive(Debug, Clone)]
pub struct GraphInstance {
    pub id: usize,
    pub healthy: LabeledGraph,
    pub patient: LabeledGraph,
    pub plant: PlantConfig,
    /// Ground-truth disconnectors from the brute-force oracle on the fixed
    /// graphs; never touches the estimation path.
    pub truth: BTreeSet<Edge>,
    pub healthy_model: CovModel,
    pub patient_model: CovModel,
    pub clean_healthy: SampleSet,
    pub clean_patient: SampleSet,
}

/// Outcome of one (graph, SNR) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellScore {
    pub graph_id: usize,
    /// Noise sub-stream seed used for this cell.
    pub seed: u64,
    pub lambda_sparse: Option<f64>,
    pub lambda_joint: Option<f64>,
    pub score: Option<Score>,
    pub error: Option<String>,
}

/// All cells of one SNR point plus aggregate quartiles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub snr: Snr,
    pub cells: Vec<CellScore>,
    pub f_measure: Option<FiveNum>,
    pub precision: Option<FiveNum>,
    pub recall: Option<FiveNum>,
}

impl SweepRecord {
    pub fn scores(&self) -> impl Iterator<Item = (usize, &Score)> + '_ {
        self.cells
            .iter()
            .filter_map(|c| c.score.as_ref().map(|s| (c.graph_id, s)))
    }

    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| c.score.is_none())
    }
}

/// Full sweep result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutput {
    pub config_digest: String,
    pub master_seed: u64,
    pub rng: String,
    pub records: Vec<SweepRecord>,
    /// Frequencies of true disconnector-set sizes over the ensemble.
    pub truth_histogram: BTreeMap<usize, usize>,
    /// True when some SNR point lost every cell to estimation failures.
    pub partial: bool,
}

/// Generates the fixed part of the ensemble: graphs, planted patient
/// counterparts, ground truths, models and clean samples.
pub fn generate_instances(cfg: &SimulationConfig) -> Result<Vec<GraphInstance>> {
    cfg.validate()?;
    let master = cfg.master_seed;
    let build = |i: usize| -> Result<GraphInstance> {
        let graph_idx = index(i as u64);
        let sbm_seed = stream_seed(master, &[label("graph"), graph_idx, label("sbm")]);
        let healthy = generate_sbm(&cfg.sbm_for_graph(sbm_seed))?;
        let plant = match cfg.plant.mode {
            PlantMode::Explicit => cfg.plant.explicit_config(),
            PlantMode::Random => {
                let plant_seed = stream_seed(master, &[label("graph"), graph_idx, label("plant")]);
                random_plant(&healthy, cfg.plant.remove_count, cfg.plant.add_count, plant_seed)?
            }
        };
        let patient = plant_disconnectivity(&healthy, &plant)?;
        let truth = disconnector_oracle(&healthy, &patient)?;

        // One shared per-pair value stream: the groups differ only where
        // their graphs differ.
        let pcorr_seed = stream_seed(master, &[label("graph"), graph_idx, label("pcorr")]);
        let healthy_model = pcorr_to_cov_model(&random_partial_corr(&healthy, pcorr_seed))?;
        let patient_model = pcorr_to_cov_model(&random_partial_corr(&patient, pcorr_seed))?;

        let modalities: Vec<Modality> = healthy
            .node_ids()
            .map(|id| healthy.modality(id).expect("dense graph").clone())
            .collect();
        let clean_healthy = sample_gaussian(
            &healthy_model,
            cfg.n_healthy,
            "healthy",
            &modalities,
            stream_seed(master, &[label("graph"), graph_idx, label("samples"), label("healthy")]),
        )?;
        let clean_patient = sample_gaussian(
            &patient_model,
            cfg.n_patient,
            "patient",
            &modalities,
            stream_seed(master, &[label("graph"), graph_idx, label("samples"), label("patient")]),
        )?;
        Ok(GraphInstance {
            id: i,
            healthy,
            patient,
            plant,
            truth,
            healthy_model,
            patient_model,
            clean_healthy,
            clean_patient,
        })
    };

    let ids: Vec<usize> = (0..cfg.graphs).collect();
    #[cfg(feature = "parallel")]
    let out: Result<Vec<GraphInstance>> = ids.par_iter().map(|&i| build(i)).collect();
    #[cfg(not(feature = "parallel"))]
    let out: Result<Vec<GraphInstance>> = ids.iter().map(|&i| build(i)).collect();
    out
}

/// Runs one (graph, SNR) cell: noise injection, joint estimation,
/// significance adjacency and disconnector scoring against the instance's
/// ground truth.
pub fn run_cell(cfg: &SimulationConfig, instance: &GraphInstance, snr: Snr) -> CellScore {
    let snr_tag = snr.to_string();
    let noise = |group: &str| {
        stream_seed(
            cfg.master_seed,
            &[
                label("graph"),
                index(instance.id as u64),
                label("noise"),
                label(group),
                label(&snr_tag),
            ],
        )
    };
    let seed = noise("healthy");
    let run = || -> Result<(Score, f64, f64)> {
        let noisy_healthy = add_noise_for_snr(&instance.clean_healthy, snr, seed)?;
        let noisy_patient = add_noise_for_snr(&instance.clean_patient, snr, noise("patient"))?;
        let groups = [noisy_healthy, noisy_patient];
        let est = &cfg.estimation;
        let fit = joint_estimate_auto(&groups, est.lambda_sparse, est.lambda_joint)?;
        let modalities = &instance.clean_healthy.modalities;
        let mut graphs = Vec::with_capacity(2);
        for (m, &n) in fit.matrices.iter().zip(&fit.sample_counts) {
            let pc = precision_to_pcorr(m)?;
            let adj = significance_adjacency(&pc, n, est.alpha, est.correction)?;
            graphs.push(adj.to_graph(modalities)?);
        }
        let report = find_disconnectors(&graphs[0], &graphs[1])?;
        let score = score_disconnectors(&report.direct_edges(), &instance.truth);
        Ok((score, fit.lambda_sparse, fit.lambda_joint))
    };
    match run() {
        Ok((score, ls, lj)) => CellScore {
            graph_id: instance.id,
            seed,
            lambda_sparse: Some(ls),
            lambda_joint: Some(lj),
            score: Some(score),
            error: None,
        },
        Err(e) => CellScore {
            graph_id: instance.id,
            seed,
            lambda_sparse: None,
            lambda_joint: None,
            score: None,
            error: Some(e.to_string()),
        },
    }
}

fn summarize(cells: &[CellScore]) -> SweepRecord {
    let take = |f: fn(&Score) -> f64| -> Vec<f64> {
        cells.iter().filter_map(|c| c.score.as_ref().map(f)).collect()
    };
    SweepRecord {
        snr: Snr::Clean, // overwritten by caller
        f_measure: five_number(&take(|s| s.f_measure)),
        precision: five_number(&take(|s| s.precision)),
        recall: five_number(&take(|s| s.recall)),
        cells: cells.to_vec(),
    }
}

/// Runs the full sweep: the fixed ensemble is generated once, then every
/// (graph, SNR) cell is estimated and scored. Cells are independent and run
/// concurrently; the output order is fixed by (SNR, graph id), so results do
/// not depend on scheduling. Per-cell estimation failures are recorded, not
/// fatal.
pub fn run_snr_sweep(cfg: &SimulationConfig) -> Result<SweepOutput> {
    let instances = generate_instances(cfg)?;
    let mut truth_histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for inst in &instances {
        *truth_histogram.entry(inst.truth.len()).or_insert(0) += 1;
    }

    let mut records = Vec::new();
    for snr in cfg.snr_points() {
        #[cfg(feature = "parallel")]
        let cells: Vec<CellScore> = instances
            .par_iter()
            .map(|inst| run_cell(cfg, inst, snr))
            .collect();
        #[cfg(not(feature = "parallel"))]
        let cells: Vec<CellScore> = instances.iter().map(|inst| run_cell(cfg, inst, snr)).collect();
        let mut record = summarize(&cells);
        record.snr = snr;
        records.push(record);
    }

    let partial = records.iter().any(|r| r.all_failed());
    Ok(SweepOutput {
        config_digest: cfg.digest(),
        master_seed: cfg.master_seed,
        rng: crate::rng::RNG_ALGORITHM.to_string(),
        records,
        truth_histogram,
        partial,
    })
}

/// Writes the plot-ready report files into `dir`:
///
/// * `scores.csv` — one row per scored (graph, SNR) cell, long format;
/// * `aggregates.json` — quartile summaries per SNR point;
/// * `histogram.csv` — frequencies of true disconnector-set sizes.
///
/// Returns the written paths. Output is byte-deterministic for a given
/// sweep result.
pub fn write_reports(out: &SweepOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    if out.records.is_empty() {
        return Err(Error::invalid_input("no records to report"));
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let scores_path = dir.join("scores.csv");
    let mut csv = String::from("snr_db,graph_id,precision,recall,f_measure,true_count,est_count\n");
    for record in &out.records {
        for (graph_id, s) in record.scores() {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                record.snr, graph_id, s.precision, s.recall, s.f_measure, s.true_count, s.estimated_count
            ));
        }
    }
    std::fs::write(&scores_path, csv)?;
    written.push(scores_path);

    #[derive(Serialize)]
    struct SnrAggregate<'a> {
        snr: Snr,
        graphs: usize,
        failed: usize,
        f_measure: &'a Option<FiveNum>,
        precision: &'a Option<FiveNum>,
        recall: &'a Option<FiveNum>,
    }
    #[derive(Serialize)]
    struct Aggregates<'a> {
        config_digest: &'a str,
        master_seed: u64,
        partial: bool,
        snr_points: Vec<SnrAggregate<'a>>,
    }
    let aggregates = Aggregates {
        config_digest: &out.config_digest,
        master_seed: out.master_seed,
        partial: out.partial,
        snr_points: out
            .records
            .iter()
            .map(|r| SnrAggregate {
                snr: r.snr,
                graphs: r.cells.len(),
                failed: r.cells.iter().filter(|c| c.score.is_none()).count(),
                f_measure: &r.f_measure,
                precision: &r.precision,
                recall: &r.recall,
            })
            .collect(),
    };
    let agg_path = dir.join("aggregates.json");
    let text = serde_json::to_string_pretty(&aggregates)
        .map_err(|e| Error::Parse(format!("aggregate serialization failed: {e}")))?;
    std::fs::write(&agg_path, text + "\n")?;
    written.push(agg_path);

    let hist_path = dir.join("histogram.csv");
    let mut hist = String::from("true_disconnectors,graphs\n");
    for (count, freq) in &out.truth_histogram {
        hist.push_str(&format!("{count},{freq}\n"));
    }
    std::fs::write(&hist_path, hist)?;
    written.push(hist_path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(pairs: &[(usize, usize)]) -> BTreeSet<Edge> {
        pairs.iter().map(|&(a, b)| Edge::new(a, b).unwrap()).collect()
    }

    #[test]
    fn score_worked_examples() {
        let s = score_disconnectors(&edges(&[(1, 4)]), &edges(&[(1, 4)]));
        assert_eq!((s.precision, s.recall, s.f_measure), (1.0, 1.0, 1.0));

        let s = score_disconnectors(&edges(&[(0, 1), (2, 3)]), &edges(&[(0, 1), (4, 5)]));
        assert_eq!((s.precision, s.recall, s.f_measure), (0.5, 0.5, 0.5));
        assert_eq!((s.true_count, s.estimated_count, s.hit_count), (2, 2, 1));

        let s = score_disconnectors(&BTreeSet::new(), &edges(&[(0, 1)]));
        assert_eq!((s.precision, s.recall, s.f_measure), (0.0, 0.0, 0.0));

        let s = score_disconnectors(&BTreeSet::new(), &BTreeSet::new());
        assert_eq!((s.precision, s.recall, s.f_measure), (1.0, 1.0, 1.0));

        let s = score_disconnectors(&edges(&[(0, 1)]), &BTreeSet::new());
        assert_eq!((s.precision, s.recall, s.f_measure), (0.0, 0.0, 0.0));
    }

    #[test]
    fn score_identities_hold_on_random_sets() {
        use rand::Rng;
        let mut rng = crate::rng::stream(5, &[label("score-prop")]);
        for _ in 0..200 {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> BTreeSet<Edge> {
                let k = rng.gen_range(0..6);
                (0..k)
                    .map(|_| {
                        let a = rng.gen_range(0..8usize);
                        let b = (a + rng.gen_range(1..8usize)) % 9;
                        Edge::new(a.min(b), a.max(b).max(a.min(b) + 1)).unwrap()
                    })
                    .collect()
            };
            let est = draw(&mut rng);
            let truth = draw(&mut rng);
            let s = score_disconnectors(&est, &truth);
            for v in [s.precision, s.recall, s.f_measure] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert!(s.hit_count <= s.true_count.min(s.estimated_count).max(s.hit_count));
            assert!(s.hit_count <= s.estimated_count || s.estimated_count == 0);
            assert!(s.f_measure <= 2.0 * s.precision + 1e-12);
            assert!(s.f_measure <= 2.0 * s.recall + 1e-12);
            if !est.is_empty() || !truth.is_empty() {
                let perfect = s.precision == 1.0 && s.recall == 1.0;
                assert_eq!(perfect, est == truth);
            }
        }
    }

    #[test]
    fn mse_examples() {
        let a = DMatrix::<f64>::identity(4, 4);
        assert_eq!(precision_mse(&a, &a).unwrap(), 0.0);
        let b = a.map(|x| x + 0.1);
        let mse = precision_mse(&b, &a).unwrap();
        assert!((mse - 0.01).abs() < 1e-12);
        let c = DMatrix::<f64>::identity(3, 3);
        assert!(precision_mse(&a, &c).is_err());
    }

    #[test]
    fn five_number_known_values() {
        let f = five_number(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(f.min, 1.0);
        assert!((f.q1 - 1.75).abs() < 1e-12);
        assert!((f.median - 2.5).abs() < 1e-12);
        assert!((f.q3 - 3.25).abs() < 1e-12);
        assert_eq!(f.max, 4.0);
        assert!(five_number(&[]).is_none());
    }

    fn tiny_config() -> SimulationConfig {
        SimulationConfig {
            block_sizes: vec![3, 4],
            graphs: 2,
            n_healthy: 150,
            n_patient: 150,
            snr_grid_db: vec![10.0],
            include_clean: true,
            plant: crate::config::PlantSpec {
                remove_count: 1,
                add_count: 0,
                ..Default::default()
            },
            estimation: crate::config::EstimationConfig {
                lambda_sparse: Some(0.1),
                lambda_joint: Some(0.05),
                ..Default::default()
            },
            master_seed: 11,
            // Guarantee some within-block edges at this small size.
            p_within: Some(0.6),
            p_between: 0.1,
        }
    }

    #[test]
    fn instances_are_deterministic_and_truthful() {
        let cfg = tiny_config();
        let a = generate_instances(&cfg).unwrap();
        let b = generate_instances(&cfg).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.healthy, y.healthy);
            assert_eq!(x.patient, y.patient);
            assert_eq!(x.truth, y.truth);
            assert_eq!(x.clean_healthy.data, y.clean_healthy.data);
        }
        // Planted removals split modules, so the truth is non-empty.
        for inst in &a {
            assert!(!inst.truth.is_empty());
            // Truth edges are healthy-only edges.
            for e in &inst.truth {
                let (u, v) = e.endpoints();
                assert!(inst.healthy.contains_edge(u, v));
                assert!(!inst.patient.contains_edge(u, v));
            }
        }
    }

    #[test]
    fn sweep_smoke_and_determinism() {
        let cfg = tiny_config();
        let out = run_snr_sweep(&cfg).unwrap();
        assert_eq!(out.records.len(), 2); // 10 dB + clean
        assert_eq!(out.records[0].snr, Snr::Db(10.0));
        assert_eq!(out.records[1].snr, Snr::Clean);
        for record in &out.records {
            assert_eq!(record.cells.len(), 2);
            for cell in &record.cells {
                assert!(cell.error.is_none(), "cell failed: {:?}", cell.error);
            }
        }
        assert!(!out.partial);
        assert_eq!(out.truth_histogram.values().sum::<usize>(), 2);

        let again = run_snr_sweep(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&out).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn reports_are_byte_deterministic() {
        let cfg = tiny_config();
        let out = run_snr_sweep(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let first = write_reports(&out, dir.path()).unwrap();
        assert_eq!(first.len(), 3);
        let scores = std::fs::read(dir.path().join("scores.csv")).unwrap();
        let header = String::from_utf8(scores.clone()).unwrap();
        assert!(header.starts_with("snr_db,graph_id,precision,recall,f_measure,true_count,est_count"));
        // SNR axis is monotone: finite points ascending, clean last.
        let lines: Vec<&str> = header.lines().skip(1).collect();
        assert!(!lines.is_empty());
        write_reports(&out, dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join("scores.csv")).unwrap(), scores);

        let empty = SweepOutput {
            config_digest: String::new(),
            master_seed: 0,
            rng: String::new(),
            records: vec![],
            truth_histogram: BTreeMap::new(),
            partial: false,
        };
        assert!(write_reports(&empty, dir.path()).is_err());
    }
}
