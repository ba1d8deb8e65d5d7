//! Command execution and result envelopes.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use gibbscal::asymptotics::{
    bvm_approx, bvm_distance, estimate_risk_hessian, estimate_score_outer, oracle_learning_rate, sandwich_cov,
};
use gibbscal::gpc::gpc_calibrate_with;
use gibbscal::optim::erm_fit;
use gibbscal::regions::{elliptical_region, hpd_interval};
use gibbscal::sampler::sample_gibbs;
use gibbscal::seed::derive_seed;
use gibbscal::sim::{coverage_vs_eta_curve, crossing_eta, gen_dataset, run_coverage_study_with, study_csv_rows};
use gibbscal::{DataSet, GibbsSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::canonical::{canonical_string, sha256_hex, to_canonical_value};
use crate::config::{Command, RunConfig};
use crate::dataset::load_for_loss;
use crate::error::CliError;

/// Everything a command produces.
pub struct Outcome {
    pub payload: Value,
    /// Optional flat table: header and rows.
    pub table: Option<(Vec<String>, Vec<Vec<String>>)>,
}

fn value<T: Serialize>(v: &T) -> Value {
    to_canonical_value(v).expect("payload serializes")
}

/// Observed data: the file, or a simulated set drawn with a seed derived from
/// the root seed.
fn observed_data(cfg: &RunConfig) -> Result<DataSet, CliError> {
    match (&cfg.dataset_path, &cfg.dgp) {
        (Some(p), _) => load_for_loss(Path::new(p), cfg.has_header, &cfg.loss_model()),
        (None, Some(d)) => Ok(gen_dataset(d, cfg.n, derive_seed(cfg.seed, &[0]))?),
        (None, None) => unreachable!("validated config"),
    }
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let loss = cfg.loss_model();
    let prior = cfg.prior();
    let table = None;
    let payload = match cfg.command {
        Command::Fit => {
            let data = observed_data(cfg)?;
            let fit = erm_fit(&loss, &data, &cfg.optimizer)?;
            json!({ "n": data.len(), "estimate": value(&fit) })
        }
        Command::Sample => {
            let data = observed_data(cfg)?;
            let n = data.len();
            let spec = GibbsSpec::new(loss, prior, cfg.eta, data)?;
            let draws = sample_gibbs(&spec, &cfg.sampler, derive_seed(cfg.seed, &[1]))?;
            let alpha = cfg.gpc.alpha;
            let hpd = (0..draws.dim())
                .map(|j| hpd_interval(&draws.column(j), alpha))
                .collect::<Result<Vec<_>, _>>()?;
            let ellipse = if draws.len() > draws.dim() + 1 { Some(elliptical_region(&draws, alpha)?) } else { None };
            json!({
                "n": n,
                "eta": cfg.eta,
                "n_draws": draws.len(),
                "accept_rate": draws.accept_rate(),
                "mean": draws.mean(),
                "covariance": matrix_rows(&draws.covariance()),
                "marginal_hpd": value(&hpd),
                "elliptical": value(&ellipse),
            })
        }
        Command::Calibrate => {
            let data = observed_data(cfg)?;
            let res = gpc_calibrate_with(&data, &loss, &prior, &cfg.gpc, derive_seed(cfg.seed, &[2]), |e| {
                eprintln!("{}", canonical_string(&json!({ "progress": "calibrate", "step": value(e) })));
            })?;
            json!({ "n": data.len(), "calibration": value(&res) })
        }
        Command::Simulate => {
            let dgp = cfg.dgp.expect("validated");
            let reps = cfg.study.reps;
            let done = AtomicUsize::new(0);
            let res = run_coverage_study_with(
                &dgp,
                cfg.n,
                &cfg.gpc,
                reps,
                derive_seed(cfg.seed, &[3]),
                cfg.study.calibrate,
                &|_| {
                    let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                    eprintln!("{{\"progress\":\"simulate\",\"completed\":{k},\"reps\":{reps}}}");
                },
            )?;
            return Ok(Outcome { payload: json!({ "study": value(&res) }), table: Some(study_csv_rows(&res)) });
        }
        Command::Curve => {
            let dgp = cfg.dgp.expect("validated");
            let c = &cfg.curve;
            let rows = coverage_vs_eta_curve(&dgp, &c.n_list, &c.eta_grid, c.reps, &cfg.gpc, derive_seed(cfg.seed, &[4]))?;
            let level = 1.0 - cfg.gpc.alpha;
            let crossings: Vec<Value> =
                c.n_list.iter().map(|&n| json!({ "n": n, "eta": crossing_eta(&rows, n, level) })).collect();
            let header = ["n", "eta", "reps_completed", "coverage", "fitted"].map(String::from).to_vec();
            let fmt = |v: f64| if v.is_finite() { format!("{v:?}") } else { String::new() };
            let body = rows
                .iter()
                .map(|r| vec![r.n.to_string(), fmt(r.eta), r.reps_completed.to_string(), fmt(r.coverage), fmt(r.fitted)])
                .collect();
            return Ok(Outcome {
                payload: json!({ "rows": value(&rows), "crossings": crossings, "level": level }),
                table: Some((header, body)),
            });
        }
        Command::Diagnose => {
            let data = observed_data(cfg)?;
            let theta = match &cfg.diagnose.theta {
                Some(t) => t.clone(),
                None => erm_fit(&loss, &data, &cfg.optimizer)?.theta.into_vec(),
            };
            let hess = estimate_risk_hessian(&loss, &data, &theta, &cfg.diagnose.hessian)?;
            let s = estimate_score_outer(&loss, &data, &theta)?;
            let sandwich = sandwich_cov(&hess.matrix, &s)?;
            let oracle = oracle_learning_rate(&sandwich.sigma, &hess.matrix)?;
            let approx = bvm_approx(cfg.eta, &theta, &theta, &hess.matrix, data.len())?;
            let spec = GibbsSpec::new(loss, prior, cfg.eta, data)?;
            let draws = sample_gibbs(&spec, &cfg.sampler, derive_seed(cfg.seed, &[5]))?;
            json!({
                "theta": theta,
                "hessian": value(&hess),
                "sandwich": value(&sandwich),
                "oracle_eta": oracle,
                "bvm": { "eta": cfg.eta, "approx": value(&approx), "ks_distance": bvm_distance(&draws, &approx)? },
            })
        }
    };
    Ok(Outcome { payload, table })
}

/// The document written to the output path.
pub fn envelope(cfg: &RunConfig, payload: &Value, seconds: f64) -> Value {
    let payload_text = canonical_string(payload);
    json!({
        "config": value(cfg),
        "payload": payload,
        "payload_sha256": sha256_hex(&payload_text),
        "seed": cfg.seed,
        "timing": { "wall_seconds": seconds },
        "versions": { "gibbscal": env!("CARGO_PKG_VERSION"), "format": 1 },
    })
}

/// Path of the CSV side table next to the JSON output.
pub fn table_path(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Runs `cfg` on a pool of `cfg.workers` threads and writes the envelope.
/// Returns the canonical envelope text.
pub fn run(cfg: &RunConfig) -> Result<String, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Data(format!("worker pool: {e}")))?;
    let start = Instant::now();
    let outcome = pool.install(|| execute(cfg))?;
    let text = canonical_string(&envelope(cfg, &outcome.payload, start.elapsed().as_secs_f64()));
    match &cfg.output_path {
        Some(p) => {
            let path = Path::new(p);
            std::fs::write(path, format!("{text}\n")).map_err(|e| CliError::Data(format!("{p}: {e}")))?;
            if let Some((h, rows)) = &outcome.table {
                write_table(&table_path(path), h, rows)?;
            }
        }
        None => println!("{text}"),
    }
    Ok(text)
}
