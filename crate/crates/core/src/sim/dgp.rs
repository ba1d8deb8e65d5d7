//! Data-generating processes for the worked examples.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist, StudentsT};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::gibbs::Prior;
use crate::gpc::{BandGrid, RegionKind};
use crate::loss::{Basis, LossModel};
use crate::optim::nelder_mead;
use crate::seed::rng_from_seed;
use crate::stats::std_normal_cdf;

/// Coefficients of the cubic regression function, constant term first.
pub const CUBIC_TRUTH: [f64; 4] = [-1.2, 15.2, -34.0, 20.0];

/// Coefficients `(1, −1)` entering the t₃ link of the classification example.
pub const HINGE_LINK: [f64; 2] = [1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Dgp {
    /// `T ~ Gamma(shape 5, scale 1)`; target is the `tau` quantile.
    GammaQuantile {
        #[serde(default = "default_gamma_tau")]
        tau: f64,
    },
    /// `X ~ N(0,1)`, `P(Y=+1 | x) = Φ(x)`.
    Mcid,
    /// `X = C − 2` with `C ~ χ²₄`, `Y | x ~ N(2 + x, 2²)`.
    QuantileRegression {
        #[serde(default = "default_median")]
        tau: f64,
    },
    /// `X ~ N(1,1)`, `P(Y=+1 | x) = F_t3(1 − x)`, features `(1, x)`.
    HingeClassification,
    /// `X ~ U(0,1)`, `Y | x ~ N(20x³ − 34x² + 15.2x − 1.2, 0.2²)`.
    NonlinearRegression,
}

fn default_gamma_tau() -> f64 {
    0.7
}

fn default_median() -> f64 {
    0.5
}

impl Dgp {
    pub fn gamma_quantile() -> Self {
        Dgp::GammaQuantile { tau: 0.7 }
    }

    pub fn quantile_regression() -> Self {
        Dgp::QuantileRegression { tau: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Dgp::GammaQuantile { tau } | Dgp::QuantileRegression { tau } if !(tau > 0.0 && tau < 1.0) => {
                Err(Error::Domain(format!("tau must lie in (0, 1), got {tau}")))
            }
            _ => Ok(()),
        }
    }

    /// The loss whose risk minimizer is the inferential target.
    pub fn loss(&self) -> LossModel {
        match *self {
            Dgp::GammaQuantile { tau } => LossModel::quantile(tau).expect("validated tau"),
            Dgp::Mcid => LossModel::mcid(),
            Dgp::QuantileRegression { tau } => {
                LossModel::check_regression(tau, Basis::Affine { input_dim: 1 }).expect("validated tau")
            }
            Dgp::HingeClassification => LossModel::hinge(Basis::Affine { input_dim: 1 }).expect("valid basis"),
            Dgp::NonlinearRegression => {
                LossModel::squared_error(Basis::Polynomial { degree: 3 }).expect("valid basis")
            }
        }
    }

    /// Population risk minimizer `θ*`.
    pub fn true_theta(&self) -> Vec<f64> {
        match *self {
            Dgp::GammaQuantile { tau } => {
                vec![GammaDist::new(5.0, 1.0).expect("valid gamma").inverse_cdf(tau)]
            }
            Dgp::Mcid => vec![0.0],
            Dgp::QuantileRegression { tau } => {
                vec![2.0 + 2.0 * statrs::function::erf::erf_inv(2.0 * tau - 1.0) * std::f64::consts::SQRT_2, 1.0]
            }
            Dgp::HingeClassification => hinge_risk_minimizer().to_vec(),
            Dgp::NonlinearRegression => CUBIC_TRUTH.to_vec(),
        }
    }

    /// Prior used in studies. The MCID Gibbs posterior is improper under a
    /// flat prior (the risk is constant beyond the data range).
    pub fn default_prior(&self) -> Prior {
        match self {
            Dgp::Mcid => Prior::isotropic(1, 0.0, 2.0).expect("valid prior"),
            _ => Prior::Flat,
        }
    }

    /// Credible region whose coverage studies report as "joint".
    pub fn default_region(&self) -> (RegionKind, Option<BandGrid>) {
        match self {
            Dgp::GammaQuantile { .. } | Dgp::Mcid => (RegionKind::HpdInterval, None),
            Dgp::QuantileRegression { .. } | Dgp::HingeClassification => (RegionKind::Elliptical, None),
            Dgp::NonlinearRegression => {
                (RegionKind::UniformBand, Some(BandGrid { lo: 0.0, hi: 1.0, points: 50 }))
            }
        }
    }
}

/// Simulates `n` records from `dgp`; deterministic in `seed`.
pub fn gen_dataset(dgp: &Dgp, n: usize, seed: u64) -> Result<DataSet> {
    dgp.validate()?;
    if n == 0 {
        return Err(Error::Contract("n must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let label = |p: f64, rng: &mut rand_chacha::ChaCha8Rng| if rng.random::<f64>() < p { 1.0 } else { -1.0 };
    let data = match dgp {
        Dgp::GammaQuantile { .. } => {
            let g = Gamma::new(5.0, 1.0).expect("valid gamma");
            DataSet::from_scalars((0..n).map(|_| g.sample(&mut rng)).collect())?
        }
        Dgp::Mcid => {
            let mut v = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let x = normal(&mut rng);
                v.extend([x, label(std_normal_cdf(x), &mut rng)]);
            }
            DataSet::new(v, 2, Some(1))?
        }
        Dgp::QuantileRegression { .. } => {
            let c = ChiSquared::new(4.0).expect("valid chi-squared");
            let mut v = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let x = c.sample(&mut rng) - 2.0;
                v.extend([x, 2.0 + x + 2.0 * normal(&mut rng)]);
            }
            DataSet::new(v, 2, Some(1))?
        }
        Dgp::HingeClassification => {
            let t3 = StudentsT::new(0.0, 1.0, 3.0).expect("valid t");
            let mut v = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let x = 1.0 + normal(&mut rng);
                let p = t3.cdf(HINGE_LINK[0] + HINGE_LINK[1] * x);
                v.extend([x, label(p, &mut rng)]);
            }
            DataSet::new(v, 2, Some(1))?
        }
        Dgp::NonlinearRegression => {
            let u = Uniform::new(0.0, 1.0).expect("valid range");
            let mut v = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let x = u.sample(&mut rng);
                v.extend([x, cubic(x) + 0.2 * normal(&mut rng)]);
            }
            DataSet::new(v, 2, Some(1))?
        }
    };
    Ok(data)
}

/// The true regression function of the nonlinear example.
pub fn cubic(x: f64) -> f64 {
    CUBIC_TRUTH.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Population hinge risk `E max(0, 1 − Y θᵀ(1,X))` under the classification
/// model, by trapezoid quadrature over `X`.
pub fn hinge_population_risk(theta: &[f64]) -> f64 {
    let t3 = StudentsT::new(0.0, 1.0, 3.0).expect("valid t");
    let (lo, hi, k) = (1.0 - 9.0, 1.0 + 9.0, 6000);
    let step = (hi - lo) / k as f64;
    let mut total = 0.0;
    for i in 0..=k {
        let x = lo + step * i as f64;
        let w = if i == 0 || i == k { 0.5 } else { 1.0 };
        let dens = (-(x - 1.0).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let p = t3.cdf(HINGE_LINK[0] + HINGE_LINK[1] * x);
        let s = theta[0] + theta[1] * x;
        total += w * dens * (p * (1.0 - s).max(0.0) + (1.0 - p) * (1.0 + s).max(0.0));
    }
    total * step
}

/// Minimizer of [`hinge_population_risk`], computed once.
pub fn hinge_risk_minimizer() -> [f64; 2] {
    static CELL: OnceLock<[f64; 2]> = OnceLock::new();
    *CELL.get_or_init(|| {
        let res = nelder_mead(&hinge_population_risk, &HINGE_LINK, 4000, 1e-14);
        [res.point[0], res.point[1]]
    })
}
