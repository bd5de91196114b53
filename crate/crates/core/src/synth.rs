//! Synthetic ground truth: seeded stochastic block model graphs, planted
//! disconnectivity, random partial-correlation models and Gaussian sampling
//! with SNR-controlled noise.
//!
//! The healthy and patient models share one per-pair value stream, so the two
//! groups differ only where their graphs differ; see [`random_partial_corr`].

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{Edge, LabeledGraph, Modality, NodeId};
use crate::rng::{index, label, stream};

/// Half-width of the "interval around zero" that partial correlations of
/// non-edges are drawn from; edge values are drawn outside it.
pub const NEAR_ZERO_BAND: f64 = 1e-4;

/// Minimum eigenvalue enforced by the positive-definite repair. Keeps every
/// generated model estimable and well conditioned: a much smaller floor
/// yields borderline-singular covariances whose penalized precision
/// estimates develop large spurious entries, and whose noisy versions carry
/// conditional dependences between siblings of strong hubs that do not
/// exist in the generating graph.
pub const SPD_FLOOR: f64 = 0.1;

/// Stochastic block model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    /// Sizes of the node blocks; block `i` is tagged with modality label `i`
    /// (`A`, `B`, `C`, ...).
    pub block_sizes: Vec<usize>,
    /// Within-block edge probability; `None` uses `ln(n)/n` for a block of
    /// size `n`.
    pub p_within: Option<f64>,
    /// Between-block edge probability.
    pub p_between: f64,
    pub seed: u64,
}

impl SbmConfig {
    pub fn new(block_sizes: Vec<usize>, seed: u64) -> Self {
        SbmConfig {
            block_sizes,
            p_within: None,
            p_between: 0.01,
            seed,
        }
    }

    /// Probability used inside a block of size `n`.
    pub fn within_probability(&self, n: usize) -> f64 {
        match self.p_within {
            Some(p) => p,
            None => {
                if n <= 1 {
                    0.0
                } else {
                    (n as f64).ln() / n as f64
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() {
            return Err(Error::invalid_input("block_sizes must be non-empty"));
        }
        if self.block_sizes.contains(&0) {
            return Err(Error::invalid_input("block sizes must be positive"));
        }
        for (name, p) in [("p_between", Some(self.p_between)), ("p_within", self.p_within)] {
            if let Some(p) = p {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid_input(format!(
                        "{name} must lie in [0, 1], got {p}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Samples a stochastic block model graph.
///
/// Every within-block pair receives an edge independently with its block's
/// probability, every cross-block pair with `p_between`. Pairs are visited in
/// lexicographic order, so a given `(config, seed)` always yields the same
/// graph.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<LabeledGraph> {
    cfg.validate()?;
    let mut block_of = Vec::new();
    let mut modalities = Vec::new();
    for (b, &size) in cfg.block_sizes.iter().enumerate() {
        for _ in 0..size {
            block_of.push(b);
            modalities.push(Modality::block_label(b));
        }
    }
    let p = block_of.len();
    let mut g = LabeledGraph::new(modalities);
    let mut rng = stream(cfg.seed, &[label("sbm")]);
    for i in 0..p {
        for j in (i + 1)..p {
            let prob = if block_of[i] == block_of[j] {
                cfg.within_probability(cfg.block_sizes[block_of[i]])
            } else {
                cfg.p_between
            };
            if rng.gen::<f64>() < prob {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// Edges to remove from and add to a healthy graph to create its patient
/// counterpart.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub remove_edges: Vec<Edge>,
    pub add_edges: Vec<Edge>,
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        let removed: BTreeSet<Edge> = self.remove_edges.iter().copied().collect();
        if self.add_edges.iter().any(|e| removed.contains(e)) {
            return Err(Error::invalid_input(
                "remove_edges and add_edges must be disjoint",
            ));
        }
        Ok(())
    }
}

/// Applies a plant spec: removed edges must exist in the healthy graph, added
/// edges must be absent. Modalities are unchanged.
pub fn plant_disconnectivity(healthy: &LabeledGraph, cfg: &PlantConfig) -> Result<LabeledGraph> {
    cfg.validate()?;
    let mut patient = healthy.clone();
    for e in &cfg.remove_edges {
        let (u, v) = e.endpoints();
        if !patient.remove_edge(u, v) {
            return Err(Error::invalid_input(format!(
                "cannot remove {e}: not an edge of the healthy graph"
            )));
        }
    }
    for e in &cfg.add_edges {
        let (u, v) = e.endpoints();
        if !patient.add_edge(u, v)? {
            return Err(Error::invalid_input(format!(
                "cannot add {e}: already an edge of the healthy graph"
            )));
        }
    }
    Ok(patient)
}

/// Draws a plant spec for a random study: removes up to `remove_count` edges,
/// each chosen uniformly among the edges whose removal splits a module of the
/// current graph (verified per removal), then adds `add_count` uniformly
/// chosen absent pairs. Stops early if no removable candidate is left; the
/// returned spec records what was actually planted.
pub fn random_plant(
    healthy: &LabeledGraph,
    remove_count: usize,
    add_count: usize,
    seed: u64,
) -> Result<PlantConfig> {
    let mut rng = stream(seed, &[label("plant")]);
    let mut work = healthy.clone();
    let mut remove_edges = Vec::new();
    for _ in 0..remove_count {
        let module_count = work.components().len();
        let candidates: Vec<Edge> = work
            .edges()
            .filter(|e| {
                let (u, v) = e.endpoints();
                let mut probe = work.clone();
                probe.remove_edge(u, v);
                probe.components().len() > module_count
            })
            .collect();
        if candidates.is_empty() {
            break;
        }
        let e = candidates[rng.gen_range(0..candidates.len())];
        let (u, v) = e.endpoints();
        work.remove_edge(u, v);
        remove_edges.push(e);
    }
    let removed: BTreeSet<Edge> = remove_edges.iter().copied().collect();
    let mut add_edges = Vec::new();
    for _ in 0..add_count {
        let ids: Vec<NodeId> = work.node_ids().collect();
        let mut candidates = Vec::new();
        for (pos, &i) in ids.iter().enumerate() {
            for &j in &ids[pos + 1..] {
                let e = Edge::new(i, j)?;
                if !work.contains_edge(i, j) && !removed.contains(&e) {
                    candidates.push(e);
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let e = candidates[rng.gen_range(0..candidates.len())];
        let (u, v) = e.endpoints();
        work.add_edge(u, v)?;
        add_edges.push(e);
    }
    Ok(PlantConfig {
        remove_edges,
        add_edges,
    })
}

/// Symmetric matrix of partial correlations with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCorrMatrix(DMatrix<f64>);

impl PartialCorrMatrix {
    /// Validates shape, symmetry, unit diagonal and `|entry| <= 1`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid_input(
                "partial correlation matrix must be square",
            ));
        }
        for i in 0..m.nrows() {
            if m[(i, i)] != 1.0 {
                return Err(Error::invalid_input(format!(
                    "diagonal entry ({i},{i}) must be exactly 1, got {}",
                    m[(i, i)]
                )));
            }
            for j in (i + 1)..m.ncols() {
                let x = m[(i, j)];
                if x != m[(j, i)] {
                    return Err(Error::invalid_input(format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
                if !x.is_finite() || x.abs() > 1.0 {
                    return Err(Error::invalid_input(format!(
                        "partial correlation ({i},{j}) = {x} outside [-1, 1]"
                    )));
                }
            }
        }
        Ok(PartialCorrMatrix(m))
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Off-diagonal pairs with `|entry| > band` (the support pattern).
    pub fn support_edges(&self, band: f64) -> BTreeSet<Edge> {
        let mut out = BTreeSet::new();
        for i in 0..self.p() {
            for j in (i + 1)..self.p() {
                if self.0[(i, j)].abs() > band {
                    out.insert(Edge::new(i, j).expect("i < j"));
                }
            }
        }
        out
    }
}

/// Draws a partial correlation matrix matching the structure of `g`.
///
/// Edge entries are uniform on `[-1, 1]` excluding the near-zero band,
/// non-edge entries uniform inside it, diagonal exactly 1. Each node pair
/// owns its own sub-stream keyed by `(seed, i, j)`, so two graphs over the
/// same node space and seed receive identical values on their shared pairs —
/// the groups then differ only where their graphs differ.
pub fn random_partial_corr(g: &LabeledGraph, seed: u64) -> PartialCorrMatrix {
    let p = g.node_count();
    let mut m = DMatrix::<f64>::identity(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let mut rng = stream(seed, &[label("pcorr-pair"), index(i as u64), index(j as u64)]);
            let value = if g.contains_edge(i, j) {
                let negative = rng.gen::<bool>();
                // (band, 1]: 1 - gen::<f64>() lies in (0, 1]
                let magnitude = NEAR_ZERO_BAND + (1.0 - rng.gen::<f64>()) * (1.0 - NEAR_ZERO_BAND);
                if negative {
                    -magnitude
                } else {
                    magnitude
                }
            } else {
                (rng.gen::<f64>() * 2.0 - 1.0) * NEAR_ZERO_BAND
            };
            m[(i, j)] = value;
            m[(j, i)] = value;
        }
    }
    PartialCorrMatrix::new(m).expect("constructed matrix is valid")
}

/// Zero-mean Gaussian model: precision matrix, its inverse, and the common
/// scale factor applied to the off-diagonals during the repair.
#[derive(Debug, Clone, PartialEq)]
pub struct CovModel {
    /// Symmetric positive definite precision matrix.
    pub precision: DMatrix<f64>,
    /// Its inverse.
    pub covariance: DMatrix<f64>,
    /// The factor `gamma` in `(0, 1]` the off-diagonals were scaled by to
    /// reach positive definiteness. Support and signs are unchanged.
    pub pattern_scale: f64,
}

impl CovModel {
    pub fn p(&self) -> usize {
        self.precision.nrows()
    }

    /// Model variance of each node (the covariance diagonal).
    pub fn variances(&self) -> Vec<f64> {
        (0..self.p()).map(|j| self.covariance[(j, j)]).collect()
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

fn exact_symmetrize(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Builds the precision/covariance pair for a partial correlation matrix.
///
/// The raw precision has unit diagonal and `-r_ij` off-diagonals (from
/// `rho_ij = -omega_ij / sqrt(omega_ii * omega_jj)`). A matrix assembled from
/// uniform draws is usually indefinite, so all off-diagonals are scaled by
/// the largest common factor `gamma` in `(0, 1]` that keeps the minimum
/// eigenvalue at or above [`SPD_FLOOR`], found by bisection. Uniform scaling
/// preserves the support pattern and relative signs; near-zero entries stay
/// near zero. The model mean is fixed at zero.
pub fn pcorr_to_cov_model(r: &PartialCorrMatrix) -> Result<CovModel> {
    let p = r.p();
    let mut raw = DMatrix::<f64>::identity(p, p);
    for i in 0..p {
        for j in 0..p {
            if i != j {
                raw[(i, j)] = -r.entry(i, j);
            }
        }
    }

    let scaled = |gamma: f64| -> DMatrix<f64> {
        let mut m = raw.clone();
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    m[(i, j)] *= gamma;
                }
            }
        }
        m
    };

    let floor = SPD_FLOOR;
    let gamma = if min_eigenvalue(&raw) >= floor {
        1.0
    } else {
        // lambda_min is 1 at gamma = 0 and below the floor at gamma = 1;
        // bisect keeping `lo` on the feasible side.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if min_eigenvalue(&scaled(mid)) >= floor {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        lo
    };
    if gamma <= 0.0 {
        return Err(Error::Generation(
            "positive-definite repair found no feasible scale".into(),
        ));
    }

    let mut precision = scaled(gamma);
    exact_symmetrize(&mut precision);
    let chol = nalgebra::Cholesky::new(precision.clone())
        .ok_or_else(|| Error::Generation("repaired precision matrix failed Cholesky".into()))?;
    let mut covariance = chol.inverse();
    exact_symmetrize(&mut covariance);

    let residual = (&covariance * &precision - DMatrix::<f64>::identity(p, p))
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    if residual >= 1e-8 {
        return Err(Error::Generation(format!(
            "covariance inversion residual {residual:.3e} exceeds 1e-8"
        )));
    }

    Ok(CovModel {
        precision,
        covariance,
        pattern_scale: gamma,
    })
}

/// Signal-to-noise level for a sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    /// No noise added.
    Clean,
    Db(f64),
}

impl Snr {
    /// Sort key placing `Clean` above every finite level.
    pub fn sort_key(&self) -> f64 {
        match self {
            Snr::Clean => f64::INFINITY,
            Snr::Db(x) => *x,
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Clean => f.write_str("clean"),
            Snr::Db(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Snr::Clean => s.serialize_str("clean"),
            Snr::Db(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Snr::Db(x)),
            Raw::Text(t) if t == "clean" => Ok(Snr::Clean),
            Raw::Text(t) => Err(D::Error::custom(format!("invalid SNR value {t:?}"))),
        }
    }
}

/// A matrix of simulated subjects (rows) by nodes (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub data: DMatrix<f64>,
    pub group: String,
    /// Seed of the sub-stream that generated (or last noised) the data.
    pub seed: u64,
    pub snr: Snr,
    /// Model variance of each node, kept for SNR-calibrated noise.
    pub model_var: Vec<f64>,
    pub modalities: Vec<Modality>,
}

impl SampleSet {
    pub fn n_subjects(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }
}

/// Draws `n` i.i.d. subjects from `N(0, covariance)` as `L z` with `L` the
/// Cholesky factor and `z` standard normal.
pub fn sample_gaussian(
    model: &CovModel,
    n: usize,
    group: &str,
    modalities: &[Modality],
    seed: u64,
) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::invalid_input("sample count must be at least 1"));
    }
    if modalities.len() != model.p() {
        return Err(Error::invalid_input(format!(
            "{} modalities for a {}-node model",
            modalities.len(),
            model.p()
        )));
    }
    let chol = nalgebra::Cholesky::new(model.covariance.clone())
        .ok_or_else(|| Error::invalid_input("covariance is not positive definite"))?;
    let l = chol.l();
    let p = model.p();
    let mut rng = stream(seed, &[label("gaussian-samples")]);
    let mut data = DMatrix::<f64>::zeros(n, p);
    let mut z = DVector::<f64>::zeros(p);
    for row in 0..n {
        for k in 0..p {
            z[k] = rng.sample(StandardNormal);
        }
        let x = &l * &z;
        for k in 0..p {
            data[(row, k)] = x[k];
        }
    }
    Ok(SampleSet {
        data,
        group: group.to_string(),
        seed,
        snr: Snr::Clean,
        model_var: model.variances(),
        modalities: modalities.to_vec(),
    })
}

/// Adds white Gaussian noise per node so that node `j` sits at the requested
/// SNR: `sigma_j^2 = var_j / 10^(snr_db / 10)` with `var_j` the node's model
/// variance. `Snr::Clean` returns the data unchanged.
pub fn add_noise_for_snr(samples: &SampleSet, snr: Snr, seed: u64) -> Result<SampleSet> {
    let db = match snr {
        Snr::Clean => {
            let mut out = samples.clone();
            out.snr = Snr::Clean;
            return Ok(out);
        }
        Snr::Db(db) => {
            if !db.is_finite() {
                return Err(Error::invalid_input(format!(
                    "snr_db must be finite, got {db}"
                )));
            }
            db
        }
    };
    let factor = 10f64.powf(db / 10.0);
    let sigma: Vec<f64> = samples
        .model_var
        .iter()
        .map(|v| (v / factor).sqrt())
        .collect();
    let mut rng = stream(seed, &[label("noise")]);
    let mut data = samples.data.clone();
    for row in 0..data.nrows() {
        for col in 0..data.ncols() {
            let e: f64 = rng.sample(StandardNormal);
            data[(row, col)] += sigma[col] * e;
        }
    }
    Ok(SampleSet {
        data,
        group: samples.group.clone(),
        seed,
        snr,
        model_var: samples.model_var.clone(),
        modalities: samples.modalities.clone(),
    })
}
