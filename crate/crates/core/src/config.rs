//! Declarative experiment configuration.
//!
//! One JSON or TOML document fully determines a run: graph generation,
//! planted disconnectivity, sample counts, the SNR grid, estimation settings
//! and the master seed. The SHA-256 digest of the canonical JSON encoding
//! names the run and keys all caching.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::Correction;
use crate::graph::Edge;
use crate::synth::{PlantConfig, SbmConfig, Snr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PlantMode {
    /// Remove `remove_count` module-splitting edges chosen at random, then
    /// add `add_count` random absent pairs.
    #[default]
    Random,
    /// Apply exactly `remove_edges` / `add_edges`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantSpec {
    pub mode: PlantMode,
    pub remove_count: usize,
    pub add_count: usize,
    /// 1-based node pairs, used in explicit mode.
    pub remove_edges: Vec<Edge>,
    pub add_edges: Vec<Edge>,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            mode: PlantMode::Random,
            remove_count: 3,
            add_count: 1,
            remove_edges: Vec::new(),
            add_edges: Vec::new(),
        }
    }
}

impl PlantSpec {
    pub fn explicit_config(&self) -> PlantConfig {
        PlantConfig {
            remove_edges: self.remove_edges.clone(),
            add_edges: self.add_edges.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationConfig {
    /// Fixed sparsity penalty; `None` selects from the default grid by
    /// extended BIC.
    pub lambda_sparse: Option<f64>,
    /// Fixed cross-group penalty; `None` selects from the default grid.
    pub lambda_joint: Option<f64>,
    pub alpha: f64,
    pub correction: Correction,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            lambda_sparse: None,
            lambda_joint: None,
            alpha: 0.05,
            correction: Correction::BenjaminiHochberg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub block_sizes: Vec<usize>,
    /// Within-block edge probability; `None` means `ln(n)/n` per block.
    pub p_within: Option<f64>,
    pub p_between: f64,
    pub plant: PlantSpec,
    pub n_healthy: usize,
    pub n_patient: usize,
    /// Number of healthy/patient graph pairs in the ensemble.
    pub graphs: usize,
    pub snr_grid_db: Vec<f64>,
    /// Append a no-noise point to the grid.
    pub include_clean: bool,
    pub master_seed: u64,
    pub estimation: EstimationConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            block_sizes: vec![3, 3, 11],
            p_within: None,
            p_between: 0.01,
            plant: PlantSpec::default(),
            n_healthy: 1000,
            n_patient: 1000,
            graphs: 50,
            snr_grid_db: vec![-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            include_clean: true,
            master_seed: 0,
            estimation: EstimationConfig::default(),
        }
    }
}

impl SimulationConfig {
    /// Loads a config from a `.json` or `.toml` file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SimulationConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?,
            Some("toml") => toml::from_str(&text)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?,
            other => {
                return Err(Error::invalid_input(format!(
                    "config must be .json or .toml, got {other:?}"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn node_count(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Field-level validation; messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::InvalidInput(format!("{field}: {msg}")));
        if self.block_sizes.is_empty() {
            return fail("block_sizes", "must be non-empty".into());
        }
        if self.block_sizes.contains(&0) {
            return fail("block_sizes", "block sizes must be positive".into());
        }
        if let Some(p) = self.p_within {
            if !(0.0..=1.0).contains(&p) {
                return fail("p_within", format!("must lie in [0, 1], got {p}"));
            }
        }
        if !(0.0..=1.0).contains(&self.p_between) {
            return fail("p_between", format!("must lie in [0, 1], got {}", self.p_between));
        }
        let p = self.node_count();
        for (field, n) in [("n_healthy", self.n_healthy), ("n_patient", self.n_patient)] {
            if n <= p + 3 {
                return fail(field, format!("must exceed p + 3 = {} (got {n})", p + 3));
            }
        }
        if self.graphs == 0 {
            return fail("graphs", "at least one graph is required".into());
        }
        if self.snr_grid_db.iter().any(|x| !x.is_finite()) {
            return fail("snr_grid_db", "levels must be finite".into());
        }
        if self.snr_grid_db.is_empty() && !self.include_clean {
            return fail("snr_grid_db", "grid is empty and include_clean is false".into());
        }
        match self.plant.mode {
            PlantMode::Explicit => {
                for e in self
                    .plant
                    .remove_edges
                    .iter()
                    .chain(self.plant.add_edges.iter())
                {
                    let (u, v) = e.endpoints();
                    if v >= p {
                        return fail("plant", format!("edge {e} is outside the {p}-node graph"));
                    }
                    let _ = u;
                }
                self.plant
                    .explicit_config()
                    .validate()
                    .map_err(|e| Error::InvalidInput(format!("plant: {e}")))?;
            }
            PlantMode::Random => {
                if self.plant.remove_count == 0 {
                    return fail("plant.remove_count", "random mode needs at least 1".into());
                }
            }
        }
        let est = &self.estimation;
        if !(est.alpha > 0.0 && est.alpha <= 1.0) {
            return fail("estimation.alpha", format!("must lie in (0, 1], got {}", est.alpha));
        }
        for (field, l) in [
            ("estimation.lambda_sparse", est.lambda_sparse),
            ("estimation.lambda_joint", est.lambda_joint),
        ] {
            if let Some(l) = l {
                if !(l.is_finite() && l >= 0.0) {
                    return fail(field, format!("must be a non-negative number, got {l}"));
                }
            }
        }
        Ok(())
    }

    /// The SNR points of the sweep, ascending, clean point last.
    pub fn snr_points(&self) -> Vec<Snr> {
        let mut db = self.snr_grid_db.clone();
        db.sort_by(f64::total_cmp);
        db.dedup();
        let mut points: Vec<Snr> = db.into_iter().map(Snr::Db).collect();
        if self.include_clean {
            points.push(Snr::Clean);
        }
        points
    }

    /// SBM settings for one graph of the ensemble.
    pub fn sbm_for_graph(&self, seed: u64) -> SbmConfig {
        SbmConfig {
            block_sizes: self.block_sizes.clone(),
            p_within: self.p_within,
            p_between: self.p_between,
            seed,
        }
    }

    /// SHA-256 digest of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}
