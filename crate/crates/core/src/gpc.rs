//! General posterior calibration: bootstrap estimates of the coverage of a
//! Gibbs credible region, and a Robbins–Monro search for the learning rate at
//! which that coverage equals the nominal level.

use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::gibbs::{GibbsSpec, Prior};
use crate::loss::{basis_eval, LossModel};
use crate::optim::{erm_fit, OptimizerConfig};
use crate::par::map_indexed;
use crate::regions::{elliptical_region, hpd_density_region, hpd_interval, uniform_band, CredibleRegion};
use crate::sampler::{sample_gibbs, PosteriorDraws, SamplerConfig, SamplerInit};
use crate::seed::{derive_seed, rng_from_seed};

use rand::Rng;

/// Which credible region the calibration targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    /// Marginal HPD interval for one coordinate.
    HpdInterval,
    Elliptical,
    /// Density level set.
    HpdDensity,
    /// Sup-norm band for the curve `x ↦ θᵀf(x)` on a grid.
    UniformBand,
}

/// Evenly spaced grid `lo, …, hi` with `points` entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl BandGrid {
    pub fn points(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points.max(2) - 1) as f64;
        (0..self.points).map(|k| self.lo + step * k as f64).collect()
    }
}

/// A region constructor together with what it needs beyond the draws.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub kind: RegionKind,
    pub feature: Option<usize>,
    pub band_grid: Option<BandGrid>,
    pub alpha: f64,
}

impl RegionSpec {
    /// Checks this region description against a loss and fills in the feature for scalar parameters.
    pub fn resolve(mut self, loss: &LossModel) -> Result<Self> {
        let q = loss.param_dim();
        match self.kind {
            RegionKind::HpdInterval => {
                let f = match (self.feature, q) {
                    (Some(f), _) => f,
                    (None, 1) => 0,
                    (None, _) => {
                        return Err(Error::Contract("a marginal interval needs a feature index".into()));
                    }
                };
                if f >= q {
                    return Err(Error::Contract(format!("feature {f} out of range for dimension {q}")));
                }
                self.feature = Some(f);
            }
            RegionKind::UniformBand => {
                let grid = self
                    .band_grid
                    .ok_or_else(|| Error::Contract("a uniform band needs a grid".into()))?;
                if grid.points < 2 || !(grid.hi > grid.lo) {
                    return Err(Error::Contract("band grid needs two or more points on a proper range".into()));
                }
                match loss.basis() {
                    Some(b) if b.input_dim() == 1 => {}
                    _ => return Err(Error::Contract("uniform bands need a basis over a scalar covariate".into())),
                }
            }
            RegionKind::Elliptical | RegionKind::HpdDensity => {}
        }
        Ok(self)
    }

    /// Basis features at the band grid points, row-major `points × q`.
    fn grid_features(&self, loss: &LossModel) -> Result<Vec<f64>> {
        let grid = self.band_grid.ok_or_else(|| Error::Contract("no band grid".into()))?;
        let basis = loss.basis().ok_or_else(|| Error::Contract("loss has no basis".into()))?;
        let mut out = Vec::with_capacity(grid.points * basis.output_dim());
        for x in grid.points() {
            out.extend(basis_eval(basis, &[x])?);
        }
        Ok(out)
    }

    /// Values of the curve `θᵀf(x)` on the band grid.
    pub fn curve(&self, loss: &LossModel, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(curve_from_features(&self.grid_features(loss)?, theta))
    }

    pub fn build(&self, spec: &GibbsSpec, draws: &PosteriorDraws) -> Result<CredibleRegion> {
        Ok(match self.kind {
            RegionKind::HpdInterval => {
                CredibleRegion::Interval(hpd_interval(&draws.column(self.feature.unwrap_or(0)), self.alpha)?)
            }
            RegionKind::Elliptical => CredibleRegion::Elliptical(elliptical_region(draws, self.alpha)?),
            RegionKind::HpdDensity => CredibleRegion::DensityLevel(hpd_density_region(draws, self.alpha)?),
            RegionKind::UniformBand => {
                let grid = self.band_grid.expect("resolved").points();
                let features = self.grid_features(spec.loss())?;
                let mut curves = Vec::with_capacity(draws.len() * grid.len());
                for row in draws.rows() {
                    curves.extend(curve_from_features(&features, row));
                }
                CredibleRegion::UniformBand(uniform_band(&curves, &grid, self.alpha)?)
            }
        })
    }

    /// Whether `region` contains the parameter `theta` (or its feature / curve).
    pub fn covers(&self, region: &CredibleRegion, spec: &GibbsSpec, theta: &[f64]) -> Result<bool> {
        match self.kind {
            RegionKind::HpdInterval => region.contains(&[theta[self.feature.unwrap_or(0)]]),
            RegionKind::UniformBand => region.contains(&self.curve(spec.loss(), theta)?),
            RegionKind::Elliptical | RegionKind::HpdDensity => region.contains_with(theta, spec),
        }
    }
}

fn curve_from_features(features: &[f64], theta: &[f64]) -> Vec<f64> {
    features.chunks_exact(theta.len()).map(|f| f.iter().zip(theta).map(|(a, b)| a * b).sum()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpcConfig {
    pub alpha: f64,
    /// Bootstrap replicates per coverage estimate.
    #[serde(rename = "B")]
    pub b: usize,
    pub eta0: f64,
    pub kappa0: f64,
    /// Step sizes are `kappa0·(1+s)^{-gamma_exp}`.
    pub gamma_exp: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub eta_bounds: (f64, f64),
    pub region_kind: RegionKind,
    pub feature: Option<usize>,
    pub band_grid: Option<BandGrid>,
    /// Sampler settings for every bootstrap posterior.
    pub sampler: SamplerConfig,
}

impl Default for GpcConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            b: 300,
            eta0: 1.0,
            kappa0: 1.0,
            gamma_exp: 0.75,
            max_iter: 15,
            tol: 0.01,
            eta_bounds: (1e-4, 1e4),
            region_kind: RegionKind::HpdInterval,
            feature: None,
            band_grid: None,
            sampler: SamplerConfig::default(),
        }
    }
}

impl GpcConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.eta_bounds;
        let bad = |m: &str| Err(Error::Contract(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.b == 0 || self.max_iter == 0 {
            return bad("B and max_iter must be positive");
        }
        if !(self.kappa0 > 0.0 && self.tol > 0.0) {
            return bad("kappa0 and tol must be positive");
        }
        if !(self.gamma_exp > 0.5 && self.gamma_exp <= 1.0) {
            return bad("gamma_exp must lie in (0.5, 1]");
        }
        if !(lo > 0.0 && lo < self.eta0 && self.eta0 < hi && hi.is_finite()) {
            return bad("need 0 < eta_min < eta0 < eta_max");
        }
        self.sampler.validate()
    }

    pub fn region_spec(&self) -> RegionSpec {
        RegionSpec { kind: self.region_kind, feature: self.feature, band_grid: self.band_grid, alpha: self.alpha }
    }

    pub fn step_size(&self, s: usize) -> f64 {
        self.kappa0 * (1.0 + s as f64).powf(-self.gamma_exp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub eta: f64,
    pub c_hat: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    /// Replicates counted as non-covering after a failed retry.
    pub failed: usize,
    pub posterior_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub s: usize,
    /// `η_{s−1}`, where the coverage was estimated.
    pub eta: f64,
    pub c_hat: f64,
    pub kappa: f64,
    /// `η_{s−1} + κ_s{ĉ − (1−α)}` before clamping.
    pub eta_next_raw: f64,
    /// `η_s`, clamped to the bounds.
    pub eta_next: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Tolerance,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub eta_hat: f64,
    pub trace: Vec<TraceEntry>,
    pub terminated_by: Termination,
    pub total_posterior_samples_run: usize,
}

/// `n` records drawn uniformly with replacement; deterministic in `seed`.
pub fn bootstrap_resample(data: &DataSet, seed: u64) -> DataSet {
    let n = data.len();
    let mut rng = rng_from_seed(seed);
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    data.select(&idx)
}

struct Replicate {
    covered: bool,
    failed: bool,
    runs: usize,
}

/// Observed data, loss, prior and target `θ̂_n`, shared by every coverage
/// estimate in one calibration.
pub struct CoverageProblem {
    data: DataSet,
    loss: LossModel,
    prior: Prior,
    region: RegionSpec,
    sampler: SamplerConfig,
    theta_hat: Vec<f64>,
}

impl CoverageProblem {
    pub fn new(data: &DataSet, loss: &LossModel, prior: &Prior, cfg: &GpcConfig) -> Result<Self> {
        cfg.validate()?;
        prior.validate(Some(loss.param_dim()))?;
        let region = cfg.region_spec().resolve(loss)?;
        let theta_hat = erm_fit(loss, data, &OptimizerConfig::default())?.theta.into_vec();
        Ok(Self {
            data: data.clone(),
            loss: *loss,
            prior: prior.clone(),
            region,
            sampler: cfg.sampler.clone(),
            theta_hat,
        })
    }

    /// The bootstrap target, the ERM on the observed data.
    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    fn attempt(&self, eta: f64, seed: u64) -> Result<bool> {
        let resample = bootstrap_resample(&self.data, derive_seed(seed, &[0]));
        let opt = OptimizerConfig { random_starts: 0, warm_start: Some(self.theta_hat.clone()), ..Default::default() };
        let init = erm_fit(&self.loss, &resample, &opt)?.theta.into_vec();
        let spec = GibbsSpec::new(self.loss, self.prior.clone(), eta, resample)?;
        let sampler = SamplerConfig { init: SamplerInit::Point(init), ..self.sampler.clone() };
        let draws = sample_gibbs(&spec, &sampler, derive_seed(seed, &[1]))?;
        let region = self.region.build(&spec, &draws)?;
        self.region.covers(&region, &spec, &self.theta_hat)
    }

    fn replicate(&self, eta: f64, seed: u64, b: usize) -> Replicate {
        let base = derive_seed(seed, &[b as u64]);
        let mut runs = 0;
        for attempt in 0..2u64 {
            runs += 1;
            match self.attempt(eta, derive_seed(base, &[attempt])) {
                Ok(covered) => return Replicate { covered, failed: false, runs },
                Err(e) => log::warn!("bootstrap replicate {b} attempt {attempt} at eta={eta}: {e}"),
            }
        }
        log::warn!("bootstrap replicate {b} at eta={eta} failed twice; counted as non-covering");
        Replicate { covered: false, failed: true, runs }
    }

    /// Containment flag of replicate `b`; the unit of parallel work.
    pub fn replicate_covers(&self, eta: f64, seed: u64, b: usize) -> bool {
        self.replicate(eta, seed, b).covered
    }

    /// `ĉ_boot(η)` from `b_count` replicates.
    pub fn estimate(&self, eta: f64, b_count: usize, seed: u64) -> Result<CoverageEstimate> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Contract(format!("learning rate must be positive, got {eta}")));
        }
        let reps = map_indexed(b_count, |b| self.replicate(eta, seed, b));
        let covered = reps.iter().filter(|r| r.covered).count();
        Ok(CoverageEstimate {
            eta,
            c_hat: covered as f64 / b_count as f64,
            b: b_count,
            seed,
            failed: reps.iter().filter(|r| r.failed).count(),
            posterior_runs: reps.iter().map(|r| r.runs).sum(),
        })
    }
}

/// Bootstrap estimate of the coverage of the configured credible region at `eta`.
pub fn estimate_coverage_boot(
    eta: f64,
    data: &DataSet,
    loss: &LossModel,
    prior: &Prior,
    cfg: &GpcConfig,
    seed: u64,
) -> Result<CoverageEstimate> {
    CoverageProblem::new(data, loss, prior, cfg)?.estimate(eta, cfg.b, seed)
}

/// Robbins–Monro iteration `η_s = clamp(η_{s−1} + κ_s{c(η_{s−1}) − (1−α)})`
/// driven by an arbitrary coverage oracle `coverage(η, s)`.
///
/// Returns the result and the number of posterior runs reported by the oracle.
pub fn robbins_monro<C, O>(cfg: &GpcConfig, mut coverage: C, mut on_step: O) -> Result<CalibrationResult>
where
    C: FnMut(f64, usize) -> Result<(f64, usize)>,
    O: FnMut(&TraceEntry),
{
    cfg.validate()?;
    let target = 1.0 - cfg.alpha;
    let (lo, hi) = cfg.eta_bounds;
    let mut eta = cfg.eta0;
    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut runs = 0;
    let mut terminated_by = Termination::MaxIter;
    for s in 1..=cfg.max_iter {
        let (c_hat, used) = coverage(eta, s)?;
        runs += used;
        let kappa = cfg.step_size(s);
        let eta_next_raw = eta + kappa * (c_hat - target);
        let eta_next = eta_next_raw.clamp(lo, hi);
        let entry = TraceEntry { s, eta, c_hat, kappa, eta_next_raw, eta_next };
        on_step(&entry);
        trace.push(entry);
        let moved = (eta_next - eta).abs();
        eta = eta_next;
        if moved < cfg.tol {
            terminated_by = Termination::Tolerance;
            break;
        }
    }
    Ok(CalibrationResult { eta_hat: eta, trace, terminated_by, total_posterior_samples_run: runs })
}

/// Calibrates the learning rate so the bootstrap coverage of the configured
/// region matches `1 − α`.
pub fn gpc_calibrate(data: &DataSet, loss: &LossModel, prior: &Prior, cfg: &GpcConfig, seed: u64) -> Result<CalibrationResult> {
    gpc_calibrate_with(data, loss, prior, cfg, seed, |_| {})
}

/// [`gpc_calibrate`] reporting each iteration to `on_step`.
pub fn gpc_calibrate_with<O: FnMut(&TraceEntry)>(
    data: &DataSet,
    loss: &LossModel,
    prior: &Prior,
    cfg: &GpcConfig,
    seed: u64,
    on_step: O,
) -> Result<CalibrationResult> {
    let problem = CoverageProblem::new(data, loss, prior, cfg)?;
    robbins_monro(
        cfg,
        |eta, s| {
            let est = problem.estimate(eta, cfg.b, derive_seed(seed, &[s as u64]))?;
            Ok((est.c_hat, est.posterior_runs))
        },
        on_step,
    )
}
