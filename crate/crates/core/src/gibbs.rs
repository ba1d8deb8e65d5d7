//! Priors, the Gibbs posterior `π_n^(η)(θ) ∝ exp{−η n R_n(θ)} π(θ)`, and the
//! discrete-grid form of the variational characterization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossModel, RiskEvaluator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Prior {
    /// Improper, `log π ≡ 0`.
    Flat,
    /// Independent normal coordinates.
    Gaussian { mean: Vec<f64>, sd: Vec<f64> },
}

impl Prior {
    pub fn gaussian(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        let p = Prior::Gaussian { mean, sd };
        p.validate(None)?;
        Ok(p)
    }

    /// Same mean and sd on each of `dim` coordinates.
    pub fn isotropic(dim: usize, mean: f64, sd: f64) -> Result<Self> {
        Self::gaussian(vec![mean; dim], vec![sd; dim])
    }

    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        if let Prior::Gaussian { mean, sd } = self {
            if mean.len() != sd.len() {
                return Err(Error::Contract("prior mean and sd lengths differ".into()));
            }
            if sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::Contract("prior sd must be positive and finite".into()));
            }
            if let Some(d) = dim {
                if mean.len() != d {
                    return Err(Error::Contract(format!("prior has dimension {}, loss has {d}", mean.len())));
                }
            }
        }
        Ok(())
    }

    /// Diagonal precision; zero for the flat prior.
    pub(crate) fn precision_diag(&self, dim: usize) -> Vec<f64> {
        match self {
            Prior::Flat => vec![0.0; dim],
            Prior::Gaussian { sd, .. } => sd.iter().map(|s| 1.0 / (s * s)).collect(),
        }
    }
}

/// `log π(θ)` with additive constants dropped.
pub fn log_prior(prior: &Prior, theta: &[f64]) -> Result<f64> {
    match prior {
        Prior::Flat => Ok(0.0),
        Prior::Gaussian { mean, sd } => {
            if theta.len() != mean.len() {
                return Err(Error::Contract(format!(
                    "theta has dimension {}, prior has {}",
                    theta.len(),
                    mean.len()
                )));
            }
            Ok(theta
                .iter()
                .zip(mean.iter().zip(sd))
                .map(|(t, (m, s))| {
                    let z = (t - m) / s;
                    -0.5 * z * z
                })
                .sum())
        }
    }
}

/// Loss, prior, learning rate and data defining one Gibbs posterior.
#[derive(Debug, Clone)]
pub struct GibbsSpec {
    prior: Prior,
    eta: f64,
    data: DataSet,
    risk: RiskEvaluator,
}

impl GibbsSpec {
    /// Validates the pieces and, for a flat prior, that the posterior is proper.
    pub fn new(loss: LossModel, prior: Prior, eta: f64, data: DataSet) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Contract(format!("learning rate must be positive, got {eta}")));
        }
        prior.validate(Some(loss.param_dim()))?;
        let risk = RiskEvaluator::new(&loss, &data)?;
        if prior == Prior::Flat {
            check_flat_prior_integrable(&risk)?;
        }
        Ok(Self { prior, eta, data, risk })
    }

    pub fn loss(&self) -> &LossModel {
        self.risk.loss()
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn param_dim(&self) -> usize {
        self.risk.param_dim()
    }

    pub fn risk(&self) -> &RiskEvaluator {
        &self.risk
    }

    /// `η·c` for a loss `c·ℓ`; every density evaluation goes through this
    /// product so `(c·ℓ, η/c)` and `(ℓ, η)` agree whenever the products do.
    pub fn effective_rate(&self) -> f64 {
        self.eta * self.risk.loss().scale()
    }

    /// Same loss and prior with another learning rate.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Contract(format!("learning rate must be positive, got {eta}")));
        }
        Ok(Self { eta, ..self.clone() })
    }

    /// Unchecked hot-path density used by the sampler.
    pub(crate) fn log_density(&self, theta: &[f64]) -> f64 {
        let lp = -(self.effective_rate() * self.n() as f64) * self.risk.base_risk(theta);
        match &self.prior {
            Prior::Flat => lp,
            Prior::Gaussian { mean, sd } => {
                lp + theta
                    .iter()
                    .zip(mean.iter().zip(sd))
                    .map(|(t, (m, s))| {
                        let z = (t - m) / s;
                        -0.5 * z * z
                    })
                    .sum::<f64>()
            }
        }
    }
}

/// `−η n R_n(θ) + log π(θ)`.
pub fn log_post_unnorm(spec: &GibbsSpec, theta: &[f64]) -> Result<f64> {
    if theta.len() != spec.param_dim() {
        return Err(Error::Contract(format!(
            "theta has dimension {}, posterior has {}",
            theta.len(),
            spec.param_dim()
        )));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("non-finite theta".into()));
    }
    let v = spec.log_density(theta);
    if !v.is_finite() {
        return Err(Error::Domain(format!("log posterior is not finite at {theta:?}")));
    }
    Ok(v)
}

/// A flat prior needs `R_n → ∞` along every ray from the origin.
///
/// Quantile losses always qualify and bounded losses never do. Losses of a
/// linear predictor need a full-rank design; the hinge loss additionally
/// needs the two classes not to be linearly separable, which is screened with
/// a bounded perceptron run.
fn check_flat_prior_integrable(risk: &RiskEvaluator) -> Result<()> {
    match risk.loss().kind() {
        LossKind::Quantile { .. } => Ok(()),
        LossKind::Mcid => Err(Error::ImproperPosterior(
            "the MCID loss is bounded, so a flat prior gives an improper posterior; use a proper prior".into(),
        )),
        LossKind::CheckRegression { .. } | LossKind::SquaredError { .. } | LossKind::Hinge { .. } => {
            let (design, y, q) = risk.design().expect("linear loss");
            let n = y.len();
            let x = DMatrix::from_row_slice(n, q, design);
            let gram = x.transpose() * &x;
            let eig = gram.symmetric_eigenvalues();
            let max = eig.iter().copied().fold(0.0, f64::max);
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min > 1e-12 * max.max(1e-300)) {
                return Err(Error::ImproperPosterior(
                    "design matrix is rank deficient; the risk is flat along some direction".into(),
                ));
            }
            if matches!(risk.loss().kind(), LossKind::Hinge { .. }) && perceptron_separates(design, y, q) {
                return Err(Error::ImproperPosterior(
                    "classes are linearly separable; the hinge risk is bounded along some ray".into(),
                ));
            }
            Ok(())
        }
    }
}

fn perceptron_separates(design: &[f64], y: &[f64], q: usize) -> bool {
    const EPOCHS: usize = 100;
    let mut w = vec![0.0; q];
    for _ in 0..EPOCHS {
        let mut mistakes = 0;
        for (f, &yi) in design.chunks_exact(q).zip(y) {
            let s: f64 = w.iter().zip(f).map(|(a, b)| a * b).sum();
            if yi * s <= 0.0 {
                mistakes += 1;
                for (wj, fj) in w.iter_mut().zip(f) {
                    *wj += yi * fj;
                }
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

/// A finitely supported candidate measure: points, prior weights and risks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGrid {
    pub points: Vec<Vec<f64>>,
    pub prior_weights: Vec<f64>,
    pub risk_values: Vec<f64>,
}

impl DiscreteGrid {
    pub fn new(points: Vec<Vec<f64>>, prior_weights: Vec<f64>, risk_values: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != prior_weights.len() || points.len() != risk_values.len() {
            return Err(Error::Contract("grid points, weights and risks must have equal, positive length".into()));
        }
        check_simplex(&prior_weights, "prior weights")?;
        if risk_values.iter().any(|r| !r.is_finite()) {
            return Err(Error::Domain("non-finite risk value".into()));
        }
        Ok(Self { points, prior_weights, risk_values })
    }

    /// Grid whose risks are the empirical risks of `loss` on `data`.
    pub fn from_loss(points: Vec<Vec<f64>>, prior_weights: Vec<f64>, loss: &LossModel, data: &DataSet) -> Result<Self> {
        let eval = RiskEvaluator::new(loss, data)?;
        let risks = points.iter().map(|p| eval.risk(p)).collect::<Result<Vec<_>>>()?;
        Self::new(points, prior_weights, risks)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_simplex(w: &[f64], what: &str) -> Result<()> {
    if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("{what} must be finite and nonnegative")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("{what} sum to {s}, not 1")));
    }
    Ok(())
}

/// `Σ_j w_j R_n(θ_j) + (ηn)⁻¹ Σ_j w_j log(w_j / p_j)` with `0·log 0 = 0`.
pub fn bissiri_objective(grid: &DiscreteGrid, weights: &[f64], eta: f64, n: usize) -> Result<f64> {
    if weights.len() != grid.len() {
        return Err(Error::Contract("weights do not match the grid".into()));
    }
    if !(eta > 0.0) || n == 0 {
        return Err(Error::Contract("eta and n must be positive".into()));
    }
    check_simplex(weights, "weights")?;
    let mut expected_risk = 0.0;
    let mut kl = 0.0;
    for ((&w, &p), &r) in weights.iter().zip(&grid.prior_weights).zip(&grid.risk_values) {
        if w == 0.0 {
            continue;
        }
        if p == 0.0 {
            return Err(Error::Domain("positive weight where the prior has none (infinite KL)".into()));
        }
        expected_risk += w * r;
        kl += w * (w / p).ln();
    }
    Ok(expected_risk + kl / (eta * n as f64))
}

/// The discrete Gibbs posterior `w_j ∝ p_j exp(−ηn R_n(θ_j))`, normalized
/// through a max shift so it never underflows to NaN.
pub fn gibbs_weights_discrete(grid: &DiscreteGrid, eta: f64, n: usize) -> Result<Vec<f64>> {
    if !(eta > 0.0) || n == 0 {
        return Err(Error::Contract("eta and n must be positive".into()));
    }
    if grid.prior_weights.iter().all(|&p| p == 0.0) {
        return Err(Error::Domain("prior puts no mass on the grid".into()));
    }
    let rate = eta * n as f64;
    let logs: Vec<f64> = grid
        .prior_weights
        .iter()
        .zip(&grid.risk_values)
        .map(|(&p, &r)| if p > 0.0 { p.ln() - rate * r } else { f64::NEG_INFINITY })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|u| u / total).collect())
}
