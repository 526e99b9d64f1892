//! Replication engine for VAR(1) experiments.
//!
//! Each replication simulates a pilot chain, selects batch sizes with every
//! configured method, simulates a final chain and scores every estimator
//! against the closed-form Σ and against coverage of the true mean `θ = 0`.
//!
//! Replication `r` at grid index `g` draws from the ChaCha20 streams
//! `stream_rng(seed, g·replications + r, Pilot | Final)`; the coefficient
//! matrix `Φ₀` comes from `stream_rng(seed, 0, Coefficients)` and is shared by
//! every `ρ`. Outputs are aggregated in replication order, so they do not
//! depend on the worker count.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::ChainMatrix;
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::inference::confidence_region;
use crate::select::{
    ar_pilot, clamp_batch_size, lag_based_batchsize, nonparametric_pilot, optimal_batchsize,
    power_batchsize, PilotEstimates, SelectionMethod,
};
use crate::var1::{stream_rng, StreamPurpose, Var1Spec};
use crate::window::WindowKind;

/// Experiment description, read from a TOML key-value file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: usize,
    pub n_pilot: usize,
    pub n_final: usize,
    pub replications: usize,
    pub rho_grid: Vec<f64>,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub methods: Vec<SelectionMethod>,
    pub level: f64,
    /// Maximum AR order for the pilot fit; `⌊10·log10 n⌋` when absent.
    pub max_order: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            p: 3,
            n_pilot: 10_000,
            n_final: 100_000,
            replications: 200,
            rho_grid: vec![0.80, 0.82, 0.84, 0.86, 0.88, 0.90],
            seed: 20_180_101,
            estimators: Estimator::ALL.to_vec(),
            methods: SelectionMethod::ALL.to_vec(),
            level: 0.9,
            max_order: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.p == 0 {
            return fail("p must be >= 1".into());
        }
        if self.replications == 0 {
            return fail("replications must be >= 1".into());
        }
        if self.n_pilot < 100 {
            return fail(format!("n_pilot must be >= 100, got {}", self.n_pilot));
        }
        if self.n_final < 100 {
            return fail(format!("n_final must be >= 100, got {}", self.n_final));
        }
        if self.rho_grid.is_empty() {
            return fail("rho_grid is empty".into());
        }
        if let Some(rho) = self.rho_grid.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return fail(format!("rho values must lie in (0, 1), got {rho}"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return fail(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.estimators.is_empty() || self.methods.is_empty() {
            return fail("estimators and methods must be non-empty".into());
        }
        if self.methods.contains(&SelectionMethod::Fixed) {
            return fail("method \"fixed\" is not available in experiments".into());
        }
        Ok(())
    }
}

/// One estimator × batch-method outcome within a replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub estimator: Estimator,
    pub method: SelectionMethod,
    pub b: Option<usize>,
    /// Mean over all `p²` entries of `(Σ̂_ij - Σ_ij)²`.
    pub sq_error: Option<f64>,
    pub covered: Option<bool>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub rho: f64,
    pub replication: usize,
    /// Stream index passed to [`stream_rng`].
    pub stream: u64,
    pub ar_coefficient: Option<f64>,
    pub np_coefficient: Option<f64>,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientSummary {
    pub mean: Option<f64>,
    pub mse: Option<f64>,
    /// `√mse / true coefficient`.
    pub relative_rmse: Option<f64>,
    pub evaluated: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub mean_mse: Option<f64>,
    pub mean_b: Option<f64>,
    pub coverage: Option<f64>,
    pub covered: usize,
    pub evaluated: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoSummary {
    pub rho: f64,
    pub spectral_radius: f64,
    pub true_coefficient: f64,
    pub coefficients: BTreeMap<String, CoefficientSummary>,
    /// estimator → method → summary.
    pub estimators: BTreeMap<String, BTreeMap<String, CellSummary>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub version: String,
    pub config: ExperimentConfig,
    /// Keyed by `ρ` as written in the config.
    pub rho: BTreeMap<String, RhoSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub records: Vec<ReplicationRecord>,
    pub summary: Summary,
}

fn rho_key(rho: f64) -> String {
    format!("{rho:.4}")
}

fn pilot_cell_b(
    pilot: &std::result::Result<PilotEstimates, String>,
    n_final: usize,
    estimator: Estimator,
) -> std::result::Result<usize, String> {
    let pilot = pilot.as_ref().map_err(Clone::clone)?;
    let kind = if estimator.is_flat_top() {
        WindowKind::FlatTop
    } else {
        WindowKind::Bartlett
    };
    optimal_batchsize(pilot, n_final, kind, estimator.family(), estimator.is_flat_top())
        .map(|r| r.b)
        .map_err(|e| e.code().to_string())
}

/// Runs one replication at grid index `grid`.
pub fn run_replication(
    config: &ExperimentConfig,
    spec: &Var1Spec,
    rho: f64,
    grid: usize,
    replication: usize,
) -> Result<ReplicationRecord> {
    let stream = (grid * config.replications + replication) as u64;
    let mut pilot_rng = stream_rng(config.seed, stream, StreamPurpose::Pilot);
    let pilot_chain = spec.simulate_with_rng(config.n_pilot, &mut pilot_rng)?;
    let wants = |m: SelectionMethod| config.methods.contains(&m);
    let code = |e: Error| e.code().to_string();

    let ar = if wants(SelectionMethod::Ar) {
        Some(ar_pilot(&pilot_chain, config.max_order).map_err(code))
    } else {
        None
    };
    let np = if wants(SelectionMethod::Np) {
        Some(nonparametric_pilot(&pilot_chain).map_err(code))
    } else {
        None
    };
    let lag = if wants(SelectionMethod::Lag) {
        Some(lag_based_batchsize(&pilot_chain, true).map(|r| r.b).map_err(code))
    } else {
        None
    };
    let coef = |p: &Option<std::result::Result<PilotEstimates, String>>| {
        p.as_ref()
            .and_then(|r| r.as_ref().ok())
            .and_then(|p| p.coefficient().ok())
    };
    let ar_coefficient = coef(&ar);
    let np_coefficient = coef(&np);

    let mut final_rng = stream_rng(config.seed, stream, StreamPurpose::Final);
    let chain = spec.simulate_with_rng(config.n_final, &mut final_rng)?;
    let mean = chain.mean_vector();
    let n = config.n_final;

    let mut cells = Vec::with_capacity(config.estimators.len() * config.methods.len());
    for &estimator in &config.estimators {
        for &method in &config.methods {
            let b = match method {
                SelectionMethod::Ar => pilot_cell_b(ar.as_ref().expect("ar pilot"), n, estimator),
                SelectionMethod::Np => pilot_cell_b(np.as_ref().expect("np pilot"), n, estimator),
                SelectionMethod::Lag => lag
                    .clone()
                    .expect("lag rule")
                    .map(|b| clamp_batch_size(b, n, true)),
                SelectionMethod::CubeRoot | SelectionMethod::SquareRoot => {
                    power_batchsize(n, method, estimator.is_flat_top())
                        .map(|r| r.b)
                        .map_err(code)
                }
                SelectionMethod::Fixed => unreachable!("rejected by validation"),
            };
            cells.push(score_cell(&chain, &mean, spec, estimator, method, b, config.level));
        }
    }
    Ok(ReplicationRecord {
        rho,
        replication,
        stream,
        ar_coefficient,
        np_coefficient,
        cells,
    })
}

fn score_cell(
    chain: &ChainMatrix,
    mean: &[f64],
    spec: &Var1Spec,
    estimator: Estimator,
    method: SelectionMethod,
    b: std::result::Result<usize, String>,
    level: f64,
) -> CellRecord {
    let mut cell = CellRecord {
        estimator,
        method,
        b: None,
        sq_error: None,
        covered: None,
        failure: None,
    };
    let b = match b {
        Ok(b) => b,
        Err(reason) => {
            cell.failure = Some(reason);
            return cell;
        }
    };
    cell.b = Some(b);
    let est = match estimator.estimate(chain, b) {
        Ok(e) => e,
        Err(e) => {
            cell.failure = Some(e.code().to_string());
            return cell;
        }
    };
    let p = spec.p();
    let diff = &est.sigma - &spec.sigma_true;
    cell.sq_error = Some(diff.iter().map(|d| d * d).sum::<f64>() / (p * p) as f64);
    match confidence_region(mean, &est, chain.n(), level) {
        Ok(region) => {
            let origin = vec![0.0; p];
            cell.covered = Some(region.contains(&origin).expect("dimension matches"));
        }
        Err(e) => cell.failure = Some(e.code().to_string()),
    }
    cell
}

fn summarize(config: &ExperimentConfig, specs: &[Var1Spec], records: &[ReplicationRecord]) -> Summary {
    let mut rho_map = BTreeMap::new();
    for (g, (&rho, spec)) in config.rho_grid.iter().zip(specs).enumerate() {
        let recs = &records[g * config.replications..(g + 1) * config.replications];
        let truth = spec.true_bopt_coefficient();

        let mut coefficients = BTreeMap::new();
        let pilot_methods: [(SelectionMethod, fn(&ReplicationRecord) -> Option<f64>); 2] = [
            (SelectionMethod::Ar, |r| r.ar_coefficient),
            (SelectionMethod::Np, |r| r.np_coefficient),
        ];
        for (method, get) in pilot_methods {
            if !config.methods.contains(&method) {
                continue;
            }
            let values: Vec<f64> = recs.iter().filter_map(get).collect();
            let k = values.len();
            let mean = (k > 0).then(|| values.iter().sum::<f64>() / k as f64);
            let mse = (k > 0).then(|| values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / k as f64);
            coefficients.insert(
                method.name().to_string(),
                CoefficientSummary {
                    mean,
                    mse,
                    relative_rmse: mse.map(|m| m.sqrt() / truth),
                    evaluated: k,
                    failures: recs.len() - k,
                },
            );
        }

        let mut estimators = BTreeMap::new();
        for (ei, &estimator) in config.estimators.iter().enumerate() {
            let mut by_method = BTreeMap::new();
            for (mi, &method) in config.methods.iter().enumerate() {
                let idx = ei * config.methods.len() + mi;
                let cells: Vec<&CellRecord> = recs.iter().map(|r| &r.cells[idx]).collect();
                let mses: Vec<f64> = cells.iter().filter_map(|c| c.sq_error).collect();
                let bs: Vec<f64> = cells.iter().filter_map(|c| c.b.map(|b| b as f64)).collect();
                let covered = cells.iter().filter(|c| c.covered == Some(true)).count();
                let evaluated = cells.iter().filter(|c| c.covered.is_some()).count();
                let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
                by_method.insert(
                    method.name().to_string(),
                    CellSummary {
                        mean_mse: avg(&mses),
                        mean_b: avg(&bs),
                        coverage: (evaluated > 0).then(|| covered as f64 / evaluated as f64),
                        covered,
                        evaluated,
                        failures: cells.len() - evaluated,
                    },
                );
            }
            estimators.insert(estimator.name().to_string(), by_method);
        }

        rho_map.insert(
            rho_key(rho),
            RhoSummary {
                rho,
                spectral_radius: spec.spectral_radius,
                true_coefficient: truth,
                coefficients,
                estimators,
            },
        );
    }
    Summary {
        version: crate::VERSION.to_string(),
        config: config.clone(),
        rho: rho_map,
    }
}

/// Runs the full experiment on `workers` threads (all cores when `None`).
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResults> {
    config.validate()?;
    let specs = config
        .rho_grid
        .iter()
        .map(|&rho| Var1Spec::from_rho(config.p, rho, config.seed))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..config.rho_grid.len())
        .flat_map(|g| (0..config.replications).map(move |r| (g, r)))
        .collect();
    let run = || {
        tasks
            .par_iter()
            .map(|&(g, r)| run_replication(config, &specs[g], config.rho_grid[g], g, r))
            .collect::<Result<Vec<_>>>()
    };
    let records = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let summary = summarize(config, &specs, &records);
    Ok(ExperimentResults { records, summary })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Long-format CSV, one row per replication × estimator × method.
pub fn write_results_csv<W: Write>(records: &[ReplicationRecord], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "rho,replication,stream,estimator,method,b,coefficient,sq_error,covered,failure"
    )?;
    for rec in records {
        for cell in &rec.cells {
            let coefficient = match cell.method {
                SelectionMethod::Ar => rec.ar_coefficient,
                SelectionMethod::Np => rec.np_coefficient,
                _ => None,
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                rec.rho,
                rec.replication,
                rec.stream,
                cell.estimator,
                cell.method,
                opt(&cell.b),
                opt(&coefficient),
                opt(&cell.sq_error),
                cell.covered.map(|c| if c { "1" } else { "0" }).unwrap_or(""),
                cell.failure.as_deref().unwrap_or(""),
            )?;
        }
    }
    Ok(())
}

/// Writes `results.csv` and `summary.json` into `dir`.
pub fn write_outputs(results: &ExperimentResults, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("results.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_results_csv(&results.records, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&csv_path, e))?;
    let json_path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&results.summary)?;
    text.push('\n');
    std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}
