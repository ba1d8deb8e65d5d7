//! Monte Carlo studies over simulated data sets.

use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::gibbs::GibbsSpec;
use crate::gpc::{bootstrap_resample, gpc_calibrate, GpcConfig};
use crate::loss::LossModel;
use crate::optim::{erm_fit, OptimizerConfig};
use crate::par::map_indexed;
use crate::regions::{elliptical_region_from_rows, hpd_interval, CredibleRegion, EllipticalRegion};
use crate::sampler::{sample_gibbs, SamplerConfig};
use crate::seed::derive_seed;
use crate::stats::{mean, sample_sd};

use super::dgp::{gen_dataset, Dgp};

/// One replication of a coverage study. Failed replications carry `error`
/// and NaN / empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub eta: f64,
    pub iterations: usize,
    /// Marginal HPD interval for each coordinate contains the truth.
    pub marginal_contains: Vec<bool>,
    /// The configured region contains the truth.
    pub region_contains: bool,
    /// Interval length, ellipse volume proxy or band radius.
    pub region_size: Option<f64>,
    pub accept_rate: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub dgp: Dgp,
    pub n: usize,
    pub reps: usize,
    pub reps_completed: usize,
    pub failed: usize,
    pub calibrate: bool,
    pub true_theta: Vec<f64>,
    /// Per-coordinate coverage of the marginal HPD intervals.
    pub coverage: Vec<f64>,
    /// Coverage of the configured region.
    pub joint_coverage: f64,
    pub mean_eta_hat: f64,
    pub sd_eta_hat: f64,
    pub mean_region_size: Option<f64>,
    pub per_rep_records: Vec<RepRecord>,
}

fn region_size(r: &CredibleRegion) -> Option<f64> {
    match r {
        CredibleRegion::Interval(i) => Some(i.length()),
        CredibleRegion::Elliptical(e) => Some(e.volume_proxy()),
        CredibleRegion::UniformBand(b) => Some(b.radius),
        CredibleRegion::DensityLevel(_) => None,
    }
}

fn run_rep(dgp: &Dgp, n: usize, cfg: &GpcConfig, calibrate: bool, seed: u64, truth: &[f64]) -> Result<RepRecord> {
    let loss = dgp.loss();
    let prior = dgp.default_prior();
    let data = gen_dataset(dgp, n, derive_seed(seed, &[0]))?;
    let (eta, iterations) = if calibrate {
        let res = gpc_calibrate(&data, &loss, &prior, cfg, derive_seed(seed, &[1]))?;
        (res.eta_hat, res.trace.len())
    } else {
        (cfg.eta0, 0)
    };
    let spec = GibbsSpec::new(loss, prior, eta, data)?;
    let draws = sample_gibbs(&spec, &cfg.sampler, derive_seed(seed, &[2]))?;
    let rs = cfg.region_spec().resolve(&loss)?;
    let region = rs.build(&spec, &draws)?;
    let region_contains = rs.covers(&region, &spec, truth)?;
    let marginal_contains = (0..draws.dim())
        .map(|j| Ok(hpd_interval(&draws.column(j), cfg.alpha)?.contains(truth[j])))
        .collect::<Result<Vec<_>>>()?;
    Ok(RepRecord {
        rep: 0,
        seed,
        eta,
        iterations,
        marginal_contains,
        region_contains,
        region_size: region_size(&region),
        accept_rate: draws.accept_rate(),
        error: None,
    })
}

fn sd_or_zero(v: &[f64]) -> f64 {
    if v.len() < 2 {
        0.0
    } else {
        sample_sd(v)
    }
}

/// Repeats "simulate, optionally calibrate, sample, build region, check
/// containment of `θ*`" `reps` times.
///
/// Without calibration the posterior uses `cfg.eta0`. Replications run in
/// parallel with seeds derived from `(seed, rep)`; failures are recorded and
/// excluded from the proportions.
pub fn run_coverage_study(
    dgp: &Dgp,
    n: usize,
    cfg: &GpcConfig,
    reps: usize,
    seed: u64,
    calibrate: bool,
) -> Result<StudyResult> {
    run_coverage_study_with(dgp, n, cfg, reps, seed, calibrate, &|_| {})
}

/// [`run_coverage_study`] reporting each finished replication to `on_rep`,
/// in completion order.
pub fn run_coverage_study_with(
    dgp: &Dgp,
    n: usize,
    cfg: &GpcConfig,
    reps: usize,
    seed: u64,
    calibrate: bool,
    on_rep: &(dyn Fn(&RepRecord) + Sync),
) -> Result<StudyResult> {
    if reps == 0 {
        return Err(Error::Contract("reps must be at least 1".into()));
    }
    dgp.validate()?;
    cfg.validate()?;
    cfg.region_spec().resolve(&dgp.loss())?;
    let truth = dgp.true_theta();
    let q = truth.len();
    let records: Vec<RepRecord> = map_indexed(reps, |r| {
        let s = derive_seed(seed, &[r as u64]);
        let rec = match run_rep(dgp, n, cfg, calibrate, s, &truth) {
            Ok(rec) => RepRecord { rep: r, ..rec },
            Err(e) => {
                log::warn!("replication {r} failed: {e}");
                RepRecord {
                    rep: r,
                    seed: s,
                    eta: f64::NAN,
                    iterations: 0,
                    marginal_contains: Vec::new(),
                    region_contains: false,
                    region_size: None,
                    accept_rate: f64::NAN,
                    error: Some(e.to_string()),
                }
            }
        };
        on_rep(&rec);
        rec
    });
    let ok: Vec<&RepRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let done = ok.len();
    let prop = |hits: usize| if done == 0 { f64::NAN } else { hits as f64 / done as f64 };
    let coverage = (0..q).map(|j| prop(ok.iter().filter(|r| r.marginal_contains[j]).count())).collect();
    let etas: Vec<f64> = ok.iter().map(|r| r.eta).collect();
    let sizes: Option<Vec<f64>> = ok.iter().map(|r| r.region_size).collect();
    Ok(StudyResult {
        dgp: *dgp,
        n,
        reps,
        reps_completed: done,
        failed: reps - done,
        calibrate,
        true_theta: truth,
        coverage,
        joint_coverage: prop(ok.iter().filter(|r| r.region_contains).count()),
        mean_eta_hat: if done == 0 { f64::NAN } else { mean(&etas) },
        sd_eta_hat: sd_or_zero(&etas),
        mean_region_size: sizes.filter(|s| !s.is_empty()).map(|s| mean(&s)),
        per_rep_records: records,
    })
}

/// Header and rows of the flat per-replication table.
pub fn study_csv_rows(result: &StudyResult) -> (Vec<String>, Vec<Vec<String>>) {
    let q = result.true_theta.len();
    let mut header: Vec<String> = ["rep", "seed", "eta", "iterations", "region_contains", "region_size", "accept_rate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..q).map(|j| format!("contains_theta{j}")));
    header.push("error".into());
    let num = |v: f64| if v.is_finite() { format!("{v:?}") } else { String::new() };
    let rows = result
        .per_rep_records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.rep.to_string(),
                r.seed.to_string(),
                num(r.eta),
                r.iterations.to_string(),
                r.region_contains.to_string(),
                r.region_size.map(num).unwrap_or_default(),
                num(r.accept_rate),
            ];
            row.extend((0..q).map(|j| r.marginal_contains.get(j).map(|b| b.to_string()).unwrap_or_default()));
            row.push(r.error.clone().unwrap_or_default());
            row
        })
        .collect();
    (header, rows)
}

/// Best non-increasing least-squares fit (pool adjacent violators).
pub fn isotonic_decreasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("nonempty");
            *last = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    blocks.into_iter().flat_map(|(v, k)| std::iter::repeat_n(v, k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: usize,
    pub eta: f64,
    pub reps_completed: usize,
    pub coverage: f64,
    /// Isotonic (non-increasing in η) fit within this `n`.
    pub fitted: f64,
}

/// Monte Carlo coverage of the configured region on an `(n, η)` grid.
///
/// Each replication reuses its data set and sampler seed across the η grid,
/// so differences between cells reflect η alone.
pub fn coverage_vs_eta_curve(
    dgp: &Dgp,
    n_list: &[usize],
    eta_grid: &[f64],
    reps: usize,
    cfg: &GpcConfig,
    seed: u64,
) -> Result<Vec<CurveRow>> {
    if n_list.is_empty() || eta_grid.is_empty() || reps == 0 {
        return Err(Error::Contract("n_list, eta_grid and reps must be nonempty".into()));
    }
    if eta_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Domain("learning rates must be positive".into()));
    }
    dgp.validate()?;
    cfg.sampler.validate()?;
    let loss = dgp.loss();
    let rs = cfg.region_spec().resolve(&loss)?;
    let truth = dgp.true_theta();
    let mut out = Vec::new();
    for &n in n_list {
        let cells = map_indexed(reps * eta_grid.len(), |k| {
            let (r, e) = (k / eta_grid.len(), k % eta_grid.len());
            let s = derive_seed(seed, &[n as u64, r as u64]);
            let run = || -> Result<bool> {
                let data = gen_dataset(dgp, n, derive_seed(s, &[0]))?;
                let spec = GibbsSpec::new(loss, dgp.default_prior(), eta_grid[e], data)?;
                let draws = sample_gibbs(&spec, &cfg.sampler, derive_seed(s, &[2]))?;
                let region = rs.build(&spec, &draws)?;
                rs.covers(&region, &spec, &truth)
            };
            run().map_err(|err| log::warn!("curve cell n={n} rep={r} eta={}: {err}", eta_grid[e])).ok()
        });
        let cov: Vec<(usize, f64)> = (0..eta_grid.len())
            .map(|e| {
                let hits: Vec<bool> = (0..reps).filter_map(|r| cells[r * eta_grid.len() + e]).collect();
                let c = hits.iter().filter(|&&h| h).count();
                (hits.len(), if hits.is_empty() { f64::NAN } else { c as f64 / hits.len() as f64 })
            })
            .collect();
        let fitted = isotonic_decreasing(&cov.iter().map(|c| c.1).collect::<Vec<_>>());
        out.extend(eta_grid.iter().zip(cov).zip(fitted).map(|((&eta, (k, c)), f)| CurveRow {
            n,
            eta,
            reps_completed: k,
            coverage: c,
            fitted: f,
        }));
    }
    Ok(out)
}

/// First η at which the fitted curve for `n` falls below `level`, linearly
/// interpolated between grid points. `None` if it never does.
pub fn crossing_eta(rows: &[CurveRow], n: usize, level: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.n == n).map(|r| (r.eta, r.fitted)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.first()?.1 < level {
        return Some(pts[0].0);
    }
    pts.windows(2).find(|w| w[1].1 < level).map(|w| {
        let (e0, c0) = w[0];
        let (e1, c1) = w[1];
        e0 + (c0 - level) / (c0 - c1) * (e1 - e0)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub reps_completed: usize,
    /// Average posterior probability of `‖θ − θ*‖ > eps`.
    pub prob: f64,
}

/// Posterior mass outside the `eps`-ball around `θ*`, averaged over
/// replications, for each sample size.
pub fn consistency_diagnostic(
    dgp: &Dgp,
    n_list: &[usize],
    eps: f64,
    eta: f64,
    reps: usize,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<Vec<ConsistencyRow>> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if reps == 0 || n_list.is_empty() {
        return Err(Error::Contract("reps and n_list must be nonempty".into()));
    }
    dgp.validate()?;
    sampler.validate()?;
    let truth = dgp.true_theta();
    n_list
        .iter()
        .map(|&n| {
            let probs: Vec<f64> = map_indexed(reps, |r| {
                let s = derive_seed(seed, &[n as u64, r as u64]);
                let run = || -> Result<f64> {
                    let data = gen_dataset(dgp, n, derive_seed(s, &[0]))?;
                    let spec = GibbsSpec::new(dgp.loss(), dgp.default_prior(), eta, data)?;
                    let draws = sample_gibbs(&spec, sampler, derive_seed(s, &[2]))?;
                    Ok(outside_fraction(draws.values(), draws.dim(), &truth, eps))
                };
                run().map_err(|e| log::warn!("consistency n={n} rep={r}: {e}")).ok()
            })
            .into_iter()
            .flatten()
            .collect();
            if probs.is_empty() {
                return Err(Error::DegeneratePosterior(format!("every replication failed at n={n}")));
            }
            Ok(ConsistencyRow { n, reps_completed: probs.len(), prob: mean(&probs) })
        })
        .collect()
}

/// Fraction of row-major points farther than `eps` from `center`.
pub fn outside_fraction(values: &[f64], dim: usize, center: &[f64], eps: f64) -> f64 {
    let m = values.len() / dim;
    let far = values
        .chunks_exact(dim)
        .filter(|row| row.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() > eps)
        .count();
    far as f64 / m as f64
}

/// Elliptical confidence region from ERMs on `b` bootstrap resamples.
pub fn bootstrap_m_region(data: &DataSet, loss: &LossModel, b: usize, alpha: f64, seed: u64) -> Result<EllipticalRegion> {
    let q = loss.param_dim();
    if b < q + 2 {
        return Err(Error::Precondition(format!("need B >= {} resamples, got {b}", q + 2)));
    }
    let theta_hat = erm_fit(loss, data, &OptimizerConfig::default())?.theta.into_vec();
    let opt = OptimizerConfig { random_starts: 0, warm_start: Some(theta_hat), ..Default::default() };
    let fits = map_indexed(b, |k| {
        let resample = bootstrap_resample(data, derive_seed(seed, &[k as u64]));
        erm_fit(loss, &resample, &opt).map(|e| e.theta.into_vec())
    });
    let mut values = Vec::with_capacity(b * q);
    for f in fits {
        values.extend(f?);
    }
    elliptical_region_from_rows(&values, q, alpha)
}
