//! Sandwich and Hessian estimates, the oracle learning rate, and Gaussian
//! (Bernstein–von Mises) approximations to the Gibbs posterior.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::loss::{loss_subgradient, LossModel, RiskEvaluator};
use crate::sampler::PosteriorDraws;
use crate::stats::{sample_sd, std_normal_cdf};

/// Row-major JSON form `{rows, cols, data}` for `DMatrix<f64>`.
pub mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct RowMajor {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        RowMajor { rows: m.nrows(), cols: m.ncols(), data }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r = RowMajor::deserialize(d)?;
        if r.rows * r.cols != r.data.len() {
            return Err(serde::de::Error::custom("matrix data length does not match its dimensions"));
        }
        Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichEstimate {
    /// Risk Hessian.
    #[serde(with = "matrix_serde")]
    pub v: DMatrix<f64>,
    /// Mean outer product of subgradients.
    #[serde(with = "matrix_serde")]
    pub s: DMatrix<f64>,
    /// `V⁻¹ S V⁻¹`.
    #[serde(with = "matrix_serde")]
    pub sigma: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianApprox {
    pub mean: Vec<f64>,
    #[serde(with = "matrix_serde")]
    pub cov: DMatrix<f64>,
    pub eta: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HessianConfig {
    /// Fixed smoothing bandwidth; by default `sd(residuals)·n^{-1/5}`.
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianEstimate {
    #[serde(with = "matrix_serde")]
    pub matrix: DMatrix<f64>,
    /// Set when the symmetrized estimate is not positive definite.
    pub indefinite: bool,
    /// Bandwidth of the smoothed surrogate, `None` on the plain-difference fallback.
    pub bandwidth: Option<f64>,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn is_pd(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && symmetrize(m).cholesky().is_some()
}

/// `n⁻¹ Σ ℓ̇_θ(T_i) ℓ̇_θ(T_i)ᵀ`.
pub fn estimate_score_outer(loss: &LossModel, data: &DataSet, theta: &[f64]) -> Result<DMatrix<f64>> {
    if !loss.has_subgradient() {
        return Err(Error::Unsupported("loss has no subgradient".into()));
    }
    loss.check_data(data)?;
    let q = loss.param_dim();
    let mut acc = DMatrix::<f64>::zeros(q, q);
    for r in data.records() {
        let g = DVector::from_vec(loss_subgradient(loss, theta, r)?);
        acc += &g * g.transpose();
    }
    Ok(acc / data.len() as f64)
}

fn central_hessian<F: Fn(&[f64]) -> f64>(g: F, theta: &[f64], steps: &[f64]) -> DMatrix<f64> {
    let q = theta.len();
    let f0 = g(theta);
    let mut h = DMatrix::zeros(q, q);
    let mut p = theta.to_vec();
    for j in 0..q {
        let dj = steps[j];
        p[j] = theta[j] + dj;
        let up = g(&p);
        p[j] = theta[j] - dj;
        let dn = g(&p);
        p[j] = theta[j];
        h[(j, j)] = (up - 2.0 * f0 + dn) / (dj * dj);
        for k in 0..j {
            let dk = steps[k];
            let mut corner = |sj: f64, sk: f64| {
                p[j] = theta[j] + sj * dj;
                p[k] = theta[k] + sk * dk;
                let v = g(&p);
                p[j] = theta[j];
                p[k] = theta[k];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * dj * dk);
            h[(j, k)] = v;
            h[(k, j)] = v;
        }
    }
    h
}

/// Hessian of the unscaled empirical risk through its smoothed surrogate,
/// or of `R_n` itself with step `n^{-1/4}` when no surrogate exists.
pub(crate) fn risk_hessian(eval: &RiskEvaluator, theta: &[f64], bandwidth: Option<f64>) -> (DMatrix<f64>, Option<f64>) {
    let n = eval.n() as f64;
    let scales = eval.feature_scales();
    if eval.has_smoothed_surrogate() {
        let h = bandwidth.unwrap_or_else(|| {
            let h0 = sample_sd(&eval.residuals(theta));
            let h0 = if h0 > 0.0 { h0 } else { 1.0 };
            h0 * n.powf(-0.2)
        });
        let steps: Vec<f64> = scales.iter().map(|s| 0.02 * h / s.max(1e-12)).collect();
        let m = central_hessian(|t| eval.smoothed_base_risk(t, h).expect("surrogate"), theta, &steps);
        (symmetrize(&m), Some(h))
    } else {
        let step = n.powf(-0.25);
        let steps: Vec<f64> = scales.iter().map(|s| step / s.max(1e-12)).collect();
        let m = central_hessian(|t| eval.base_risk(t), theta, &steps);
        (symmetrize(&m), None)
    }
}

/// Finite-difference estimate of the risk Hessian `V` at `theta`.
///
/// Kinked losses are differenced through their Gaussian-smoothed surrogate of
/// bandwidth `h0·n^{-1/5}`, `h0` being the sample sd of the residuals.
pub fn estimate_risk_hessian(
    loss: &LossModel,
    data: &DataSet,
    theta: &[f64],
    cfg: &HessianConfig,
) -> Result<HessianEstimate> {
    let eval = RiskEvaluator::new(loss, data)?;
    eval.risk(theta)?;
    if let Some(h) = cfg.bandwidth {
        if !(h > 0.0) {
            return Err(Error::Contract("bandwidth must be positive".into()));
        }
    }
    let (base, bandwidth) = risk_hessian(&eval, theta, cfg.bandwidth);
    let matrix = base * loss.scale();
    let indefinite = !is_pd(&matrix);
    if indefinite {
        log::warn!("risk Hessian estimate at {theta:?} is not positive definite");
    }
    Ok(HessianEstimate { matrix, indefinite, bandwidth })
}

/// `Σ = V⁻¹ S V⁻¹`.
pub fn sandwich_cov(v: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<SandwichEstimate> {
    if !v.is_square() || v.shape() != s.shape() {
        return Err(Error::Contract("V and S must be square matrices of the same size".into()));
    }
    let v_inv = v.clone().try_inverse().filter(|m| m.iter().all(|x| x.is_finite())).ok_or_else(|| {
        Error::SingularHessian("V is not invertible".into())
    })?;
    let sigma = symmetrize(&(&v_inv * s * &v_inv));
    Ok(SandwichEstimate { v: v.clone(), s: s.clone(), sigma })
}

/// Symmetric PSD square root with eigenvalues floored at `1e-12`.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(1e-12).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// `{λ_min(Σ^{1/2} V Σ^{1/2})}^{-1/3}`.
pub fn oracle_learning_rate(sigma: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    if !sigma.is_square() || sigma.shape() != v.shape() {
        return Err(Error::Contract("Sigma and V must be square matrices of the same size".into()));
    }
    if !is_pd(sigma) || !is_pd(v) {
        return Err(Error::Domain("Sigma and V must be positive definite".into()));
    }
    let root = sym_sqrt(sigma);
    let m = symmetrize(&(&root * v * &root));
    let lambda_min = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if !(lambda_min > 0.0) {
        return Err(Error::Domain("Σ^{1/2} V Σ^{1/2} is not positive definite".into()));
    }
    Ok(lambda_min.powf(-1.0 / 3.0))
}

/// Mean `η θ̂ + (1−η) θ*`, covariance `(η n V)⁻¹`.
pub fn bvm_approx(eta: f64, theta_hat: &[f64], theta_star: &[f64], v: &DMatrix<f64>, n: usize) -> Result<GaussianApprox> {
    let q = theta_hat.len();
    if theta_star.len() != q || v.shape() != (q, q) {
        return Err(Error::Contract("dimension mismatch in bvm_approx".into()));
    }
    if !(eta > 0.0) || n == 0 {
        return Err(Error::Contract("eta and n must be positive".into()));
    }
    if !is_pd(v) {
        return Err(Error::Domain("V must be positive definite".into()));
    }
    let mean = theta_hat.iter().zip(theta_star).map(|(h, s)| eta * h + (1.0 - eta) * s).collect();
    let cov = symmetrize(v)
        .try_inverse()
        .ok_or_else(|| Error::SingularHessian("V is not invertible".into()))?
        / (eta * n as f64);
    Ok(GaussianApprox { mean, cov: symmetrize(&cov), eta, n })
}

/// One-sample Kolmogorov–Smirnov distance to `N(0, 1)`.
pub fn ks_to_std_normal(mut z: Vec<f64>) -> f64 {
    z.sort_by(f64::total_cmp);
    let m = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &zi)| {
            let c = std_normal_cdf(zi);
            ((i as f64 + 1.0) / m - c).max(c - i as f64 / m)
        })
        .fold(0.0, f64::max)
}

/// KS distance between the draws, whitened by the approximation's mean and
/// Cholesky factor, and the standard normal; the maximum over coordinates.
///
/// A surrogate for the total-variation distance, which draws alone cannot
/// estimate.
pub fn bvm_distance(draws: &PosteriorDraws, approx: &GaussianApprox) -> Result<f64> {
    let q = draws.dim();
    if approx.mean.len() != q || approx.cov.shape() != (q, q) {
        return Err(Error::Contract("draws and approximation dimensions differ".into()));
    }
    let chol = symmetrize(&approx.cov)
        .cholesky()
        .ok_or_else(|| Error::Domain("approximation covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut coords: Vec<Vec<f64>> = vec![Vec::with_capacity(draws.len()); q];
    let mut centered = DVector::zeros(q);
    for row in draws.rows() {
        for j in 0..q {
            centered[j] = row[j] - approx.mean[j];
        }
        let z = l.solve_lower_triangular(&centered).expect("nonsingular Cholesky factor");
        for j in 0..q {
            coords[j].push(z[j]);
        }
    }
    Ok(coords.into_iter().map(ks_to_std_normal).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::Basis;
    use approx::assert_relative_eq;

    #[test]
    fn sandwich_examples() {
        let i = DMatrix::<f64>::identity(2, 2);
        assert_eq!(sandwich_cov(&i, &i).unwrap().sigma, i);
        let phi0 = crate::stats::std_normal_pdf(0.0);
        let s = sandwich_cov(&DMatrix::from_element(1, 1, phi0), &DMatrix::from_element(1, 1, 0.25)).unwrap();
        assert_relative_eq!(s.sigma[(0, 0)], std::f64::consts::FRAC_PI_2, max_relative = 1e-12);
        assert!(matches!(sandwich_cov(&DMatrix::zeros(2, 2), &i), Err(Error::SingularHessian(_))));
    }

    #[test]
    fn oracle_examples() {
        let v = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let sigma = v.clone().try_inverse().unwrap() * 1.25;
        assert_relative_eq!(oracle_learning_rate(&sigma, &v).unwrap(), 1.25f64.powf(-1.0 / 3.0), max_relative = 1e-12);
        assert_relative_eq!(oracle_learning_rate(&v.clone().try_inverse().unwrap(), &v).unwrap(), 1.0, max_relative = 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        assert_relative_eq!(
            oracle_learning_rate(&DMatrix::identity(2, 2), &d).unwrap(),
            4f64.powf(-1.0 / 3.0),
            max_relative = 1e-12
        );
        assert!(matches!(oracle_learning_rate(&-DMatrix::<f64>::identity(2, 2), &d), Err(Error::Domain(_))));
    }

    #[test]
    fn score_outer_single_record_is_rank_one() {
        let loss = LossModel::check_regression(0.3, Basis::Affine { input_dim: 1 }).unwrap();
        let d = DataSet::from_pairs(&[(2.0, 5.0)]).unwrap();
        let s = estimate_score_outer(&loss, &d, &[0.0, 0.0]).unwrap();
        let g = [-0.3, -0.6];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(s[(i, j)], g[i] * g[j], max_relative = 1e-14);
            }
        }
        assert!(s.determinant().abs() < 1e-14);
        assert!(matches!(estimate_score_outer(&LossModel::mcid(), &DataSet::from_pairs(&[(0.0, 1.0)]).unwrap(), &[0.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn squared_error_hessian_is_two() {
        let loss = LossModel::squared_error(Basis::Identity { dim: 1 }).unwrap();
        let d = DataSet::from_pairs(&[(1.0, 0.3), (1.0, -2.0), (1.0, 5.0)]).unwrap();
        let h = estimate_risk_hessian(&loss, &d, &[0.7], &HessianConfig::default()).unwrap();
        assert_relative_eq!(h.matrix[(0, 0)], 2.0, max_relative = 1e-6);
        assert!(!h.indefinite);
    }

    #[test]
    fn bvm_approx_examples() {
        let v = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = bvm_approx(1.0, &[1.0, 2.0], &[0.0, 0.0], &v, 10).unwrap();
        assert_eq!(a.mean, vec![1.0, 2.0]);
        let expected = (v.clone() * 10.0).try_inverse().unwrap();
        assert_relative_eq!(a.cov, expected, max_relative = 1e-12);
        let half = bvm_approx(0.5, &[1.0, 2.0], &[0.0, 0.0], &v, 10).unwrap();
        assert_relative_eq!(half.cov, a.cov.clone() * 2.0, max_relative = 1e-12);
        let same = bvm_approx(0.3, &[4.0, 5.0], &[4.0, 5.0], &v, 10).unwrap();
        assert_relative_eq!(same.mean[0], 4.0, max_relative = 1e-15);
        assert_relative_eq!(same.mean[1], 5.0, max_relative = 1e-15);
    }

    #[test]
    fn ks_shifted_normal() {
        // Quantiles of N(3, 1) against N(0, 1): sup |Φ(z-3) - Φ(z)| = 2Φ(1.5) - 1.
        let m = 20_000;
        let z: Vec<f64> = (0..m)
            .map(|i| 3.0 + statrs_inv((i as f64 + 0.5) / m as f64))
            .collect();
        let d = ks_to_std_normal(z);
        assert!((d - (2.0 * std_normal_cdf(1.5) - 1.0)).abs() < 1e-3, "{d}");
    }

    fn statrs_inv(p: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
    }
}
