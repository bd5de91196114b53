//! Command-line front end for the disconnector pipeline.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numerical or
//! solver failure, 4 I/O failure.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use disconnector_core::config::SimulationConfig;
use disconnector_core::disconnector::find_disconnectors;
use disconnector_core::error::{Error, Result};
use disconnector_core::estimator::{
    joint_estimate_auto, precision_to_pcorr, significance_adjacency, Correction,
};
use disconnector_core::eval::{generate_instances, run_snr_sweep, write_reports, SweepOutput};
use disconnector_core::io;

use manifest::ManifestBuilder;

#[derive(Parser)]
#[command(
    name = "disconnector",
    version,
    about = "Detects disconnector edges between group graphs and runs the synthetic evaluation pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate graph pairs, ground-truth disconnectors and sample CSVs.
    Simulate {
        /// Experiment configuration (.json or .toml).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: $DISCONNECTOR_OUT or ./runs, plus a
        /// digest-named subdirectory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Jointly estimate precision matrices and significance-tested
    /// adjacency graphs from a directory of group sample sets.
    Estimate {
        /// Directory containing `<name>.samples.csv` / `.samples.json`
        /// pairs for at least two groups.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sparsity penalty; omitted = grid search by extended BIC.
        #[arg(long)]
        lambda_sparse: Option<f64>,
        /// Cross-group penalty; omitted = grid search by extended BIC.
        #[arg(long)]
        lambda_joint: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// benjamini-hochberg, bonferroni or none.
        #[arg(long, default_value_t = Correction::BenjaminiHochberg)]
        correction: Correction,
    },
    /// Compare two graph files and report disconnectors.
    Disconnect {
        #[arg(long)]
        healthy: PathBuf,
        #[arg(long)]
        patient: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full SNR sweep and write score reports.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the (graph x SNR) cells; 0 = all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Regenerate score reports from a sweep's records.json.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::NodeSpaceMismatch(_) | Error::Parse(_) => 2,
        Error::Generation(_) | Error::NoConvergence { .. } | Error::DegenerateCovariance(_) => 3,
        Error::Io(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Output root: explicit flag, else $DISCONNECTOR_OUT, else ./runs.
fn resolve_out(out: Option<PathBuf>, command: &str, digest: &str) -> PathBuf {
    match out {
        Some(dir) => dir,
        None => {
            let root = std::env::var_os("DISCONNECTOR_OUT")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"));
            root.join(format!("{command}-{}", &digest[..digest.len().min(12)]))
        }
    }
}

fn digest_of_files(paths: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    for p in paths {
        hasher.update(manifest::sha256_file(p)?.as_bytes());
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out } => cmd_simulate(&config, out),
        Command::Estimate {
            data,
            out,
            lambda_sparse,
            lambda_joint,
            alpha,
            correction,
        } => cmd_estimate(&data, out, lambda_sparse, lambda_joint, alpha, correction),
        Command::Disconnect {
            healthy,
            patient,
            out,
        } => cmd_disconnect(&healthy, &patient, out),
        Command::Sweep { config, out, jobs } => cmd_sweep(&config, out, jobs),
        Command::Report { records, out } => cmd_report(&records, out),
    }
}

/// Writes the effective config next to the outputs so a run is self-describing.
fn echo_config(dir: &Path, cfg: &SimulationConfig) -> Result<PathBuf> {
    let path = dir.join("config.json");
    let text = serde_json::to_string_pretty(cfg)
        .map_err(|e| Error::Parse(format!("config echo: {e}")))?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

fn cmd_simulate(config_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = SimulationConfig::from_path(config_path)?;
    let digest = cfg.digest();
    let dir = resolve_out(out, "simulate", &digest);
    std::fs::create_dir_all(&dir)?;

    let mut mb = ManifestBuilder::new("simulate", &dir, digest);
    mb.master_seed(cfg.master_seed);
    mb.record_input(config_path)?;

    mb.begin_stage("generate");
    let instances = generate_instances(&cfg)?;

    mb.begin_stage("write");
    let mut written = vec![echo_config(&dir, &cfg)?];
    for inst in &instances {
        let gdir = dir.join(format!("g{:03}", inst.id));
        std::fs::create_dir_all(&gdir)?;
        let healthy_path = gdir.join("healthy.graph.json");
        io::write_graph(&healthy_path, &inst.healthy)?;
        let patient_path = gdir.join("patient.graph.json");
        io::write_graph(&patient_path, &inst.patient)?;

        #[derive(serde::Serialize)]
        struct Truth<'a> {
            plant: &'a disconnector_core::synth::PlantConfig,
            disconnectors: Vec<disconnector_core::Edge>,
        }
        let truth_path = gdir.join("truth.json");
        let text = serde_json::to_string_pretty(&Truth {
            plant: &inst.plant,
            disconnectors: inst.truth.iter().copied().collect(),
        })
        .map_err(|e| Error::Parse(format!("truth: {e}")))?;
        std::fs::write(&truth_path, text + "\n")?;

        let hs_csv = gdir.join("healthy.samples.csv");
        let hs_json = gdir.join("healthy.samples.json");
        io::write_samples(&hs_csv, &hs_json, &inst.clean_healthy)?;
        let ps_csv = gdir.join("patient.samples.csv");
        let ps_json = gdir.join("patient.samples.json");
        io::write_samples(&ps_csv, &ps_json, &inst.clean_patient)?;

        written.extend([healthy_path, patient_path, truth_path, hs_csv, hs_json, ps_csv, ps_json]);
    }
    for path in &written {
        mb.record_output(path)?;
    }
    mb.finish()?;
    println!("simulated {} graph pairs into {}", instances.len(), dir.display());
    Ok(())
}

/// Group sample sets discovered in a data directory.
fn discover_groups(data: &Path) -> Result<Vec<disconnector_core::synth::SampleSet>> {
    let mut sidecars: Vec<PathBuf> = std::fs::read_dir(data)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".samples.json")))
        .collect();
    sidecars.sort();
    let mut groups = Vec::new();
    for sidecar in sidecars {
        let csv = sidecar.with_extension("csv");
        if !csv.exists() {
            return Err(Error::invalid_input(format!(
                "{} has no matching .samples.csv",
                sidecar.display()
            )));
        }
        groups.push(io::read_samples(&csv, &sidecar)?);
    }
    if groups.len() < 2 {
        return Err(Error::invalid_input(format!(
            "{} holds {} group sample set(s); at least 2 are required",
            data.display(),
            groups.len()
        )));
    }
    Ok(groups)
}

fn cmd_estimate(
    data: &Path,
    out: Option<PathBuf>,
    lambda_sparse: Option<f64>,
    lambda_joint: Option<f64>,
    alpha: f64,
    correction: Correction,
) -> Result<()> {
    let groups = discover_groups(data)?;
    if groups[0].p() < 2 {
        return Err(Error::invalid_input("at least 2 nodes are required"));
    }

    let mut input_paths = Vec::new();
    for g in &groups {
        input_paths.push(data.join(format!("{}.samples.csv", g.group)));
        input_paths.push(data.join(format!("{}.samples.json", g.group)));
    }
    let path_refs: Vec<&Path> = input_paths.iter().map(|p| p.as_path()).collect();
    let digest = digest_of_files(&path_refs)?;
    let dir = resolve_out(out, "estimate", &digest);
    std::fs::create_dir_all(&dir)?;

    let mut mb = ManifestBuilder::new("estimate", &dir, digest);
    for p in &input_paths {
        if p.exists() {
            mb.record_input(p)?;
        }
    }

    mb.begin_stage("estimate");
    let fit = joint_estimate_auto(&groups, lambda_sparse, lambda_joint)?;

    mb.begin_stage("write");
    let mut written = Vec::new();
    let mut warnings = Vec::new();
    for (group, matrix) in groups.iter().zip(&fit.matrices) {
        let name = &group.group;
        let precision_path = dir.join(format!("{name}.precision.csv"));
        io::write_matrix_csv(&precision_path, matrix)?;
        let pc = precision_to_pcorr(matrix)?;
        let pcorr_path = dir.join(format!("{name}.pcorr.csv"));
        io::write_matrix_csv(&pcorr_path, pc.matrix())?;
        let adj = significance_adjacency(&pc, group.n_subjects(), alpha, correction)?;
        warnings.extend(adj.warnings.iter().cloned());
        let graph = adj.to_graph(&group.modalities)?;
        let adjacency_path = dir.join(format!("{name}.adjacency.json"));
        io::write_graph(&adjacency_path, &graph)?;
        written.extend([precision_path, pcorr_path, adjacency_path]);
    }

    #[derive(serde::Serialize)]
    struct EstimateInfo<'a> {
        groups: Vec<&'a str>,
        sample_counts: &'a [usize],
        lambda_sparse: f64,
        lambda_joint: f64,
        alpha: f64,
        correction: String,
        diagnostics: disconnector_core::estimator::SolveDiagnostics,
        warnings: Vec<String>,
    }
    let info_path = dir.join("estimate.json");
    let text = serde_json::to_string_pretty(&EstimateInfo {
        groups: groups.iter().map(|g| g.group.as_str()).collect(),
        sample_counts: &fit.sample_counts,
        lambda_sparse: fit.lambda_sparse,
        lambda_joint: fit.lambda_joint,
        alpha,
        correction: correction.to_string(),
        diagnostics: fit.diagnostics,
        warnings,
    })
    .map_err(|e| Error::Parse(format!("estimate info: {e}")))?;
    std::fs::write(&info_path, text + "\n")?;
    written.push(info_path);

    for path in &written {
        mb.record_output(path)?;
    }
    mb.finish()?;
    println!(
        "estimated {} groups (lambda_sparse={}, lambda_joint={}) into {}",
        groups.len(),
        fit.lambda_sparse,
        fit.lambda_joint,
        dir.display()
    );
    Ok(())
}

fn cmd_disconnect(healthy: &Path, patient: &Path, out: Option<PathBuf>) -> Result<()> {
    let digest = digest_of_files(&[healthy, patient])?;
    let dir = resolve_out(out, "disconnect", &digest);
    std::fs::create_dir_all(&dir)?;

    let mut mb = ManifestBuilder::new("disconnect", &dir, digest);
    mb.record_input(healthy)?;
    mb.record_input(patient)?;

    mb.begin_stage("read");
    let h = io::read_graph(healthy)?;
    let p = io::read_graph(patient)?;
    for w in h.warnings.iter().chain(p.warnings.iter()) {
        eprintln!("warning: {w}");
    }

    mb.begin_stage("analyze");
    let report = find_disconnectors(&h.graph, &p.graph)?;

    mb.begin_stage("write");
    let json_path = dir.join("report.json");
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Parse(format!("report: {e}")))?;
    std::fs::write(&json_path, text + "\n")?;
    let text_path = dir.join("report.txt");
    let rendered = report.render_text();
    std::fs::write(&text_path, &rendered)?;
    mb.record_output(&json_path)?;
    mb.record_output(&text_path)?;
    mb.finish()?;

    print!("{rendered}");
    println!("report written to {}", dir.display());
    Ok(())
}

fn cmd_sweep(config_path: &Path, out: Option<PathBuf>, jobs: usize) -> Result<()> {
    if jobs > 0 {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let cfg = SimulationConfig::from_path(config_path)?;
    let digest = cfg.digest();
    let dir = resolve_out(out, "sweep", &digest);
    std::fs::create_dir_all(&dir)?;

    let mut mb = ManifestBuilder::new("sweep", &dir, digest);
    mb.master_seed(cfg.master_seed);
    mb.record_input(config_path)?;

    mb.begin_stage("sweep");
    let output = run_snr_sweep(&cfg)?;

    mb.begin_stage("write");
    let mut written = vec![echo_config(&dir, &cfg)?];
    let records_path = dir.join("records.json");
    let text = serde_json::to_string_pretty(&output)
        .map_err(|e| Error::Parse(format!("records: {e}")))?;
    std::fs::write(&records_path, text + "\n")?;
    written.push(records_path);
    written.extend(write_reports(&output, &dir)?);
    for path in &written {
        mb.record_output(path)?;
    }
    mb.partial(output.partial);
    mb.finish()?;

    let total_failures: usize = output
        .records
        .iter()
        .map(|r| r.cells.iter().filter(|c| c.score.is_none()).count())
        .sum();
    if output.records.iter().all(|r| r.all_failed()) {
        return Err(Error::Generation(
            "every cell of the sweep failed estimation".into(),
        ));
    }
    if output.partial {
        eprintln!("warning: some SNR points lost all cells; sweep marked partial");
    } else if total_failures > 0 {
        eprintln!("warning: {total_failures} cell(s) failed estimation; see records.json");
    }
    println!("sweep written to {}", dir.display());
    Ok(())
}

fn cmd_report(records: &Path, out: Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(records)?;
    let output: SweepOutput =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", records.display())))?;
    let digest = output.config_digest.clone();
    let dir = resolve_out(out, "report", &digest);
    std::fs::create_dir_all(&dir)?;

    let mut mb = ManifestBuilder::new("report", &dir, digest);
    mb.record_input(records)?;
    mb.begin_stage("write");
    let written = write_reports(&output, &dir)?;
    for path in &written {
        mb.record_output(path)?;
    }
    mb.partial(output.partial);
    mb.finish()?;
    println!("reports written to {}", dir.display());
    Ok(())
}
