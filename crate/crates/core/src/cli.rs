//! Command implementations behind the `mcbatch` binary. Each returns the JSON
//! document the binary prints on stdout.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde_json::{json, Value};

use crate::chain::ChainMatrix;
use crate::error::{Error, Result};
use crate::estimators::{generalized_obm, matrix_rows, CovEstimate, Estimator};
use crate::harness::{run_experiment, write_outputs, ExperimentConfig};
use crate::inference::ess_univariate;
use crate::select::{
    ar_pilot, clamp_batch_size, lag_based_batchsize, nonparametric_pilot, optimal_batchsize,
    power_batchsize, BatchSizeResult, SelectionMethod,
};
use crate::var1::{stream_rng, StreamPurpose, Var1Spec};
use crate::window::{Family, LagWindow, WindowKind};
use crate::VERSION;

/// `--estimator` values: the four batch-means variants, or `gobm` for the
/// generalized overlapping estimator with an explicit lag window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorChoice {
    Batch(Estimator),
    Generalized(WindowKind),
}

impl EstimatorChoice {
    pub fn parse(name: &str, window: Option<WindowKind>) -> Result<Self> {
        if name.eq_ignore_ascii_case("gobm") {
            return Ok(EstimatorChoice::Generalized(window.unwrap_or(WindowKind::Bartlett)));
        }
        if window.is_some() {
            return Err(Error::InvalidArgument(
                "--window only applies to --estimator gobm".into(),
            ));
        }
        Ok(EstimatorChoice::Batch(Estimator::from_str(name)?))
    }

    fn kind(self) -> WindowKind {
        match self {
            EstimatorChoice::Batch(e) if e.is_flat_top() => WindowKind::FlatTop,
            EstimatorChoice::Batch(_) => WindowKind::Bartlett,
            EstimatorChoice::Generalized(kind) => kind,
        }
    }

    fn family(self) -> Family {
        match self {
            EstimatorChoice::Batch(e) => e.family(),
            EstimatorChoice::Generalized(_) => Family::Obm,
        }
    }

    fn flat_top(self) -> bool {
        self.kind() == WindowKind::FlatTop
    }

    fn estimate(self, chain: &ChainMatrix, b: usize) -> Result<CovEstimate> {
        match self {
            EstimatorChoice::Batch(e) => e.estimate(chain, b),
            EstimatorChoice::Generalized(kind) => generalized_obm(chain, &LagWindow::new(kind, b)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchChoice {
    Fixed(usize),
    Method(SelectionMethod),
}

/// Batch size for `chain` itself, the chain doubling as its own pilot.
pub fn select_batch_size(
    chain: &ChainMatrix,
    method: SelectionMethod,
    kind: WindowKind,
    family: Family,
    flat_top: bool,
    max_order: Option<usize>,
) -> Result<BatchSizeResult> {
    let n = chain.n();
    match method {
        SelectionMethod::Ar => optimal_batchsize(&ar_pilot(chain, max_order)?, n, kind, family, flat_top),
        SelectionMethod::Np => optimal_batchsize(&nonparametric_pilot(chain)?, n, kind, family, flat_top),
        SelectionMethod::Lag => {
            let mut res = lag_based_batchsize(chain, flat_top)?;
            res.b = clamp_batch_size(res.b, n, flat_top);
            Ok(res)
        }
        SelectionMethod::CubeRoot | SelectionMethod::SquareRoot => power_batchsize(n, method, flat_top),
        SelectionMethod::Fixed => Err(Error::InvalidArgument("use --b for a fixed batch size".into())),
    }
}

fn error_json(e: &Error) -> Value {
    json!({ "error": e.code(), "message": e.to_string() })
}

pub fn estimate(
    chain: &ChainMatrix,
    choice: EstimatorChoice,
    batch: BatchChoice,
    max_order: Option<usize>,
) -> Result<Value> {
    let start = Instant::now();
    let selection = match batch {
        BatchChoice::Fixed(b) => BatchSizeResult {
            b,
            coefficient: None,
            family_constant: None,
            method: SelectionMethod::Fixed,
            n: chain.n(),
        },
        BatchChoice::Method(m) => {
            select_batch_size(chain, m, choice.kind(), choice.family(), choice.flat_top(), max_order)?
        }
    };
    let est = choice.estimate(chain, selection.b)?;
    let ess = match ar_pilot(chain, max_order).and_then(|p| ess_univariate(chain, &p)) {
        Ok(v) => json!(v),
        Err(e) => error_json(&e),
    };
    Ok(json!({
        "version": VERSION,
        "n": chain.n(),
        "p": chain.p(),
        "estimator": est.method.name(),
        "window": est.window.map(WindowKind::name),
        "b": est.b,
        "batch_size": {
            "method": selection.method.name(),
            "coefficient": selection.coefficient,
            "family_constant": selection.family_constant,
        },
        "mean": chain.mean_vector(),
        "sigma": matrix_rows(&est.sigma),
        "ess": ess,
        "elapsed_seconds": start.elapsed().as_secs_f64(),
    }))
}

pub fn batchsize(chain: &ChainMatrix, methods: &[SelectionMethod], family: Family, flat_top: bool, max_order: Option<usize>) -> Value {
    let kind = if flat_top { WindowKind::FlatTop } else { WindowKind::Bartlett };
    let results: serde_json::Map<String, Value> = methods
        .iter()
        .map(|&m| {
            let value = match select_batch_size(chain, m, kind, family, flat_top, max_order) {
                Ok(r) => json!({
                    "b": r.b,
                    "coefficient": r.coefficient,
                    "family_constant": r.family_constant,
                }),
                Err(e) => error_json(&e),
            };
            (m.name().to_string(), value)
        })
        .collect();
    json!({
        "version": VERSION,
        "n": chain.n(),
        "p": chain.p(),
        "family": family.name(),
        "flat_top": flat_top,
        "results": results,
    })
}

/// Path of the ground-truth sidecar written next to a simulated chain.
pub fn truth_path(out: &Path) -> std::path::PathBuf {
    out.with_extension("truth.json")
}

/// Simulates a VAR(1) chain into `out` (CSV) and writes its ground truth to
/// [`truth_path`].
pub fn simulate(p: usize, rho: f64, n: usize, seed: u64, out: &Path, header: bool) -> Result<Value> {
    let spec = Var1Spec::from_rho(p, rho, seed)?;
    let mut rng = stream_rng(seed, 0, StreamPurpose::Final);
    let chain = spec.simulate_with_rng(n, &mut rng)?;
    chain.save_csv(out, header)?;
    let truth = json!({
        "version": VERSION,
        "p": p,
        "rho": rho,
        "n": n,
        "seed": seed,
        "phi": matrix_rows(&spec.phi),
        "v": matrix_rows(&spec.v),
        "sigma": matrix_rows(&spec.sigma_true),
        "gamma": matrix_rows(&spec.gamma_true),
        "spectral_radius": spec.spectral_radius,
        "true_coefficient": spec.true_bopt_coefficient(),
    });
    let sidecar = truth_path(out);
    let mut text = serde_json::to_string_pretty(&truth)?;
    text.push('\n');
    std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    Ok(json!({
        "chain": out,
        "truth": sidecar,
        "n": n,
        "p": p,
    }))
}

pub fn replicate(config: &Path, out_dir: &Path, workers: Option<usize>) -> Result<Value> {
    let start = Instant::now();
    let config = ExperimentConfig::load(config)?;
    let results = run_experiment(&config, workers)?;
    write_outputs(&results, out_dir)?;
    Ok(json!({
        "version": VERSION,
        "results": out_dir.join("results.csv"),
        "summary": out_dir.join("summary.json"),
        "replications": results.records.len(),
        "elapsed_seconds": start.elapsed().as_secs_f64(),
    }))
}
