//! Empirical risk minimization.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DataSet, Theta};
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossModel, RiskEvaluator};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Random perturbations of the least-squares seed, on top of the origin
    /// and the seed itself.
    pub random_starts: usize,
    /// Simplex iterations per start.
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Extra starting point tried first.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { random_starts: 3, max_iter: 2000, tol: 1e-10, seed: 0x5eed, warm_start: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta: Theta,
    pub risk_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Minimizes `R_n`.
///
/// Scalar quantile and MCID losses are solved exactly, squared error by least
/// squares; the remaining losses use a multi-start Nelder–Mead search.
pub fn erm_fit(loss: &LossModel, data: &DataSet, cfg: &OptimizerConfig) -> Result<ThetaEstimate> {
    let eval = RiskEvaluator::new(loss, data)?;
    if data.len() < loss.param_dim() {
        return Err(Error::Precondition(format!(
            "need at least {} records to fit {} parameters, got {}",
            loss.param_dim(),
            loss.param_dim(),
            data.len()
        )));
    }
    match loss.kind() {
        LossKind::Quantile { tau } => {
            let mut t = data.column(0);
            t.sort_by(f64::total_cmp);
            let k = ((data.len() as f64) * tau).ceil() as usize;
            let theta = vec![t[k.clamp(1, t.len()) - 1]];
            finish(&eval, theta, true, 0)
        }
        LossKind::Mcid => finish(&eval, mcid_scan(&eval, data), true, 0),
        LossKind::SquaredError { .. } => {
            let theta = least_squares(&eval).ok_or_else(|| {
                Error::SingularHessian("design matrix is rank deficient".into())
            })?;
            finish(&eval, theta, true, 0)
        }
        _ => multi_start(&eval, cfg),
    }
}

fn finish(eval: &RiskEvaluator, theta: Vec<f64>, converged: bool, iterations: usize) -> Result<ThetaEstimate> {
    let risk_value = eval.risk(&theta)?;
    Ok(ThetaEstimate { theta: Theta::new(theta)?, risk_value, converged, iterations })
}

/// Exact MCID minimizer: scans the cut points between sorted `x` values and
/// returns the midpoint of the first optimal gap.
fn mcid_scan(eval: &RiskEvaluator, data: &DataSet) -> Vec<f64> {
    let mut xs = data.column(0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut candidates = Vec::with_capacity(xs.len() + 1);
    candidates.push(xs[0] - 1.0);
    for w in xs.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    candidates.push(xs[xs.len() - 1] + 1.0);
    let mut best = (f64::INFINITY, candidates[0]);
    for c in candidates {
        let r = eval.base_risk(&[c]);
        if r < best.0 {
            best = (r, c);
        }
    }
    vec![best.1]
}

/// Least-squares fit of the response on the features; `None` when singular.
pub(crate) fn least_squares(eval: &RiskEvaluator) -> Option<Vec<f64>> {
    let (design, y, q) = eval.design()?;
    let n = y.len();
    let x = DMatrix::from_row_slice(n, q, design);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * DVector::from_column_slice(y);
    let chol = xtx.cholesky()?;
    let sol = chol.solve(&xty);
    sol.iter().all(|v| v.is_finite()).then(|| sol.iter().copied().collect())
}

fn multi_start(eval: &RiskEvaluator, cfg: &OptimizerConfig) -> Result<ThetaEstimate> {
    let q = eval.param_dim();
    let objective = |t: &[f64]| eval.base_risk(t);
    let ls = least_squares(eval).unwrap_or_else(|| vec![0.0; q]);
    let mut starts = Vec::new();
    if let Some(w) = &cfg.warm_start {
        if w.len() != q {
            return Err(Error::Contract(format!("warm start has dimension {}, expected {q}", w.len())));
        }
        starts.push(w.clone());
    }
    starts.push(vec![0.0; q]);
    starts.push(ls.clone());
    let mut rng = rng_from_seed(cfg.seed);
    for _ in 0..cfg.random_starts {
        starts.push(
            ls.iter()
                .map(|&v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + z * (0.5 * v.abs()).max(0.5)
                })
                .collect(),
        );
    }
    let mut best: Option<NelderMeadResult> = None;
    let mut iterations = 0;
    for start in starts {
        let res = nelder_mead(&objective, &start, cfg.max_iter, cfg.tol);
        iterations += res.iterations;
        if best.as_ref().is_none_or(|b| res.value < b.value) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");
    finish(eval, best.point, best.converged, iterations)
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Nelder–Mead with standard coefficients, restarted from the incumbent until
/// a restart no longer improves it.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], max_iter: usize, tol: f64) -> NelderMeadResult {
    let mut res = nelder_mead_once(f, start, max_iter, tol);
    for _ in 0..4 {
        let again = nelder_mead_once(f, &res.point, max_iter, tol);
        let improved = again.value < res.value - tol * (1.0 + res.value.abs());
        let iterations = res.iterations + again.iterations;
        if again.value <= res.value {
            res = NelderMeadResult { iterations, ..again };
        } else {
            res.iterations = iterations;
        }
        if !improved {
            break;
        }
    }
    res
}

fn nelder_mead_once<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], max_iter: usize, tol: f64) -> NelderMeadResult {
    let q = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(q + 1);
    simplex.push(start.to_vec());
    for j in 0..q {
        let mut p = start.to_vec();
        p[j] += 0.1 * start[j].abs().max(1.0);
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut converged = false;
    let mut iter = 0;
    while iter < max_iter {
        iter += 1;
        let mut order: Vec<usize> = (0..=q).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread_f = values[q] - values[0];
        let spread_x = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread_f <= tol * (1.0 + values[0].abs()) && spread_x <= tol.sqrt() {
            converged = true;
            break;
        }

        let centroid: Vec<f64> =
            (0..q).map(|j| simplex[..q].iter().map(|p| p[j]).sum::<f64>() / q as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[q]).map(|(c, w)| c + t * (w - c)).collect()
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[q] = expanded;
                values[q] = fe;
            } else {
                simplex[q] = reflected;
                values[q] = fr;
            }
        } else if fr < values[q - 1] {
            simplex[q] = reflected;
            values[q] = fr;
        } else {
            let (contracted, fc) = if fr < values[q] {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < values[q].min(fr) {
                simplex[q] = contracted;
                values[q] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=q {
                    for j in 0..q {
                        simplex[i][j] = best[j] + 0.5 * (simplex[i][j] - best[j]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=q).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    NelderMeadResult { point: simplex[best].clone(), value: values[best], converged, iterations: iter }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{empirical_risk, Basis};

    #[test]
    fn quantile_erm_is_order_statistic() {
        let loss = LossModel::quantile(0.5).unwrap();
        let d = DataSet::from_scalars(vec![3.0, 1.0, 2.0]).unwrap();
        let est = erm_fit(&loss, &d, &OptimizerConfig::default()).unwrap();
        assert_eq!(est.theta.to_vec(), vec![2.0]);
        assert!(est.converged);
    }

    #[test]
    fn squared_error_identity_gives_mean() {
        let loss = LossModel::squared_error(Basis::Identity { dim: 1 }).unwrap();
        let d = DataSet::from_pairs(&[(1.0, 2.0), (1.0, 5.0), (1.0, -1.0), (1.0, 4.0)]).unwrap();
        let est = erm_fit(&loss, &d, &OptimizerConfig::default()).unwrap();
        assert!((est.theta[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn risk_value_matches_reevaluation() {
        let loss = LossModel::check_regression(0.5, Basis::Affine { input_dim: 1 }).unwrap();
        let pairs: Vec<(f64, f64)> = (0..30).map(|i| (i as f64 * 0.1, (i as f64 * 0.37).sin() + i as f64 * 0.2)).collect();
        let d = DataSet::from_pairs(&pairs).unwrap();
        let est = erm_fit(&loss, &d, &OptimizerConfig::default()).unwrap();
        let r = empirical_risk(&loss, &est.theta, &d).unwrap();
        assert!((r - est.risk_value).abs() <= 1e-12 * r.abs());
    }

    #[test]
    fn mcid_scan_finds_perfect_split() {
        let d = DataSet::from_pairs(&[(-2.0, -1.0), (-1.0, -1.0), (0.5, 1.0), (3.0, 1.0)]).unwrap();
        let est = erm_fit(&LossModel::mcid(), &d, &OptimizerConfig::default()).unwrap();
        assert_eq!(est.risk_value, 0.0);
        assert!(est.theta[0] > -1.0 && est.theta[0] <= 0.5);
    }

    #[test]
    fn too_few_records() {
        let loss = LossModel::hinge(Basis::Affine { input_dim: 1 }).unwrap();
        let d = DataSet::from_pairs(&[(1.0, 1.0)]).unwrap();
        assert!(matches!(erm_fit(&loss, &d, &OptimizerConfig::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn nelder_mead_on_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let r = nelder_mead(&f, &[0.0, 0.0], 5000, 1e-14);
        assert!(r.converged);
        assert!((r.point[0] - 1.0).abs() < 1e-6 && (r.point[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn scaled_loss_equivariance() {
        let base = LossModel::check_regression(0.3, Basis::Affine { input_dim: 1 }).unwrap();
        let pairs: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 * 0.05, ((i * 7 % 11) as f64) * 0.3)).collect();
        let d = DataSet::from_pairs(&pairs).unwrap();
        let cfg = OptimizerConfig::default();
        let a = erm_fit(&base, &d, &cfg).unwrap();
        let b = erm_fit(&base.scaled(3.7).unwrap(), &d, &cfg).unwrap();
        let ra = empirical_risk(&base, &a.theta, &d).unwrap();
        let rb = empirical_risk(&base, &b.theta, &d).unwrap();
        assert!((ra - rb).abs() < 1e-8, "{ra} vs {rb}");

        let q = LossModel::quantile(0.3).unwrap();
        let s = DataSet::from_scalars(pairs.iter().map(|p| p.1).collect()).unwrap();
        assert_eq!(erm_fit(&q, &s, &cfg).unwrap().theta, erm_fit(&q.scaled(5.0).unwrap(), &s, &cfg).unwrap().theta);
    }
}
