//! Loss families, feature bases and empirical risk.
//!
//! Every loss is evaluated through a small set of per-record kernels so that
//! [`eval_loss`], [`empirical_risk`] and [`RiskEvaluator`] agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::stats::{compensated_sum, std_normal_cdf, std_normal_pdf};

/// Feature map `x ↦ f(x)` for the regression and classification losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Basis {
    /// `f(x) = (1, x_1, …, x_d)`.
    Affine { input_dim: usize },
    /// `f(x) = (1, x, x², …, x^degree)` for scalar `x`.
    Polynomial { degree: usize },
    /// `f(x) = x`.
    Identity { dim: usize },
}

impl Basis {
    pub fn input_dim(&self) -> usize {
        match *self {
            Basis::Affine { input_dim } => input_dim,
            Basis::Polynomial { .. } => 1,
            Basis::Identity { dim } => dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            Basis::Affine { input_dim } => input_dim + 1,
            Basis::Polynomial { degree } => degree + 1,
            Basis::Identity { dim } => dim,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.output_dim() == 0 {
            return Err(Error::Contract("basis has zero output dimension".into()));
        }
        Ok(())
    }

    /// Writes `f(x)` into `out`; both lengths are assumed checked.
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            Basis::Affine { .. } => {
                out[0] = 1.0;
                out[1..].copy_from_slice(x);
            }
            Basis::Polynomial { .. } => {
                let mut p = 1.0;
                for o in out.iter_mut() {
                    *o = p;
                    p *= x[0];
                }
            }
            Basis::Identity { .. } => out.copy_from_slice(x),
        }
    }
}

/// Evaluates the basis at `x`.
pub fn basis_eval(basis: &Basis, x: &[f64]) -> Result<Vec<f64>> {
    basis.validate()?;
    if x.len() != basis.input_dim() {
        return Err(Error::Contract(format!(
            "basis expects input of dimension {}, got {}",
            basis.input_dim(),
            x.len()
        )));
    }
    let mut out = vec![0.0; basis.output_dim()];
    basis.eval_into(x, &mut out);
    Ok(out)
}

/// The loss families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossKind {
    /// `(t − θ)(τ − 1{t ≤ θ})` on scalar records `t`.
    Quantile { tau: f64 },
    /// `½{1 − y·sign(x − θ)}` on records `(x, y)`, `y ∈ {−1, +1}`.
    Mcid,
    /// Check loss of the residual `y − θᵀf(x)`.
    CheckRegression { tau: f64, basis: Basis },
    /// `max(0, 1 − y·θᵀf(x))`, `y ∈ {−1, +1}`.
    Hinge { basis: Basis },
    /// `(y − θᵀf(x))²`.
    SquaredError { basis: Basis },
}

/// A loss `c·ℓ_θ` with `c > 0` (`c = 1` unless built through [`LossModel::scaled`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossModel {
    kind: LossKind,
    #[serde(default = "unit_scale")]
    scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("tau must lie in (0, 1), got {tau}")))
    }
}

impl LossModel {
    pub fn new(kind: LossKind) -> Result<Self> {
        let model = Self { kind, scale: 1.0 };
        model.validate()?;
        Ok(model)
    }

    pub fn quantile(tau: f64) -> Result<Self> {
        Self::new(LossKind::Quantile { tau })
    }

    pub fn mcid() -> Self {
        Self { kind: LossKind::Mcid, scale: 1.0 }
    }

    pub fn check_regression(tau: f64, basis: Basis) -> Result<Self> {
        Self::new(LossKind::CheckRegression { tau, basis })
    }

    pub fn hinge(basis: Basis) -> Result<Self> {
        Self::new(LossKind::Hinge { basis })
    }

    pub fn squared_error(basis: Basis) -> Result<Self> {
        Self::new(LossKind::SquaredError { basis })
    }

    /// The loss `c·ℓ`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Contract(format!("loss scale must be positive, got {c}")));
        }
        Ok(Self { kind: self.kind, scale: self.scale * c })
    }

    /// Re-checks invariants; needed after deserialization.
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Contract(format!("loss scale must be positive, got {}", self.scale)));
        }
        match self.kind {
            LossKind::Quantile { tau } => check_tau(tau),
            LossKind::Mcid => Ok(()),
            LossKind::CheckRegression { tau, basis } => {
                check_tau(tau)?;
                basis.validate()
            }
            LossKind::Hinge { basis } | LossKind::SquaredError { basis } => basis.validate(),
        }
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn basis(&self) -> Option<&Basis> {
        match &self.kind {
            LossKind::CheckRegression { basis, .. }
            | LossKind::Hinge { basis }
            | LossKind::SquaredError { basis } => Some(basis),
            _ => None,
        }
    }

    pub fn param_dim(&self) -> usize {
        self.basis().map_or(1, Basis::output_dim)
    }

    pub fn has_subgradient(&self) -> bool {
        !matches!(self.kind, LossKind::Mcid)
    }

    /// `true` when labels must be ±1.
    pub fn is_classification(&self) -> bool {
        matches!(self.kind, LossKind::Mcid | LossKind::Hinge { .. })
    }

    pub fn record_width(&self) -> usize {
        match self.kind {
            LossKind::Quantile { .. } => 1,
            LossKind::Mcid => 2,
            _ => self.basis().map_or(1, Basis::input_dim) + 1,
        }
    }

    /// Checks that `data` has the record layout this loss reads.
    pub fn check_data(&self, data: &DataSet) -> Result<()> {
        if data.record_width() != self.record_width() {
            return Err(Error::Contract(format!(
                "loss expects records of width {}, data has width {}",
                self.record_width(),
                data.record_width()
            )));
        }
        if self.is_classification() {
            let y = self.record_width() - 1;
            if let Some(i) = data.records().position(|r| r[y] != 1.0 && r[y] != -1.0) {
                return Err(Error::Domain(format!("record {i} has label {} (expected ±1)", data.record(i)[y])));
            }
        }
        Ok(())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::Contract(format!(
                "theta has dimension {}, loss expects {}",
                theta.len(),
                self.param_dim()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite theta".into()));
        }
        Ok(())
    }

    fn check_datum(&self, datum: &[f64]) -> Result<()> {
        if datum.len() != self.record_width() {
            return Err(Error::Contract(format!(
                "datum has width {}, loss expects {}",
                datum.len(),
                self.record_width()
            )));
        }
        if datum.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite datum".into()));
        }
        Ok(())
    }
}

#[inline]
fn check_kernel(u: f64, tau: f64) -> f64 {
    u * (tau - if u < 0.0 { 1.0 } else { 0.0 })
}

#[inline]
fn hinge_kernel(margin_gap: f64) -> f64 {
    margin_gap.max(0.0)
}

#[inline]
fn mcid_kernel(x: f64, y: f64, theta: f64) -> f64 {
    let sign = if x - theta >= 0.0 { 1.0 } else { -1.0 };
    0.5 * (1.0 - y * sign)
}

#[inline]
fn smoothed_check(u: f64, tau: f64, h: f64) -> f64 {
    u * (tau - std_normal_cdf(-u / h)) + h * std_normal_pdf(u / h)
}

#[inline]
fn smoothed_hinge(m: f64, h: f64) -> f64 {
    m * std_normal_cdf(m / h) + h * std_normal_pdf(m / h)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ℓ_θ(t)` for one record.
///
/// MCID uses `sign(0) = +1`.
pub fn eval_loss(loss: &LossModel, theta: &[f64], datum: &[f64]) -> Result<f64> {
    loss.check_theta(theta)?;
    loss.check_datum(datum)?;
    let base = match loss.kind {
        LossKind::Quantile { tau } => check_kernel(datum[0] - theta[0], tau),
        LossKind::Mcid => mcid_kernel(datum[0], datum[1], theta[0]),
        LossKind::CheckRegression { tau, basis } => {
            let f = basis_eval(&basis, &datum[..datum.len() - 1])?;
            check_kernel(datum[datum.len() - 1] - dot(theta, &f), tau)
        }
        LossKind::Hinge { basis } => {
            let f = basis_eval(&basis, &datum[..datum.len() - 1])?;
            hinge_kernel(1.0 - datum[datum.len() - 1] * dot(theta, &f))
        }
        LossKind::SquaredError { basis } => {
            let f = basis_eval(&basis, &datum[..datum.len() - 1])?;
            let r = datum[datum.len() - 1] - dot(theta, &f);
            r * r
        }
    };
    Ok(loss.scale * base)
}

/// Subgradient `ℓ̇_θ(t)`.
///
/// At a kink the first case of the piecewise formula is used: `(1−τ)f(x)` when
/// `y = θᵀf(x)` for the check loss, `−y f(x)` when `y θᵀf(x) = 1` for the hinge.
pub fn loss_subgradient(loss: &LossModel, theta: &[f64], datum: &[f64]) -> Result<Vec<f64>> {
    loss.check_theta(theta)?;
    loss.check_datum(datum)?;
    let c = loss.scale;
    let grad = match loss.kind {
        LossKind::Quantile { tau } => {
            vec![c * if datum[0] <= theta[0] { 1.0 - tau } else { -tau }]
        }
        LossKind::Mcid => {
            return Err(Error::Unsupported("the MCID loss has no subgradient".into()));
        }
        LossKind::CheckRegression { tau, basis } => {
            let f = basis_eval(&basis, &datum[..datum.len() - 1])?;
            let y = datum[datum.len() - 1];
            let w = if y <= dot(theta, &f) { 1.0 - tau } else { -tau };
            f.iter().map(|fj| c * w * fj).collect()
        }
        LossKind::Hinge { basis } => {
            let f = basis_eval(&basis, &datum[..datum.len() - 1])?;
            let y = datum[datum.len() - 1];
            if 1.0 - y * dot(theta, &f) >= 0.0 {
                f.iter().map(|fj| -c * y * fj).collect()
            } else {
                vec![0.0; f.len()]
            }
        }
        LossKind::SquaredError { basis } => {
            let f = basis_eval(&basis, &datum[..datum.len() - 1])?;
            let r = datum[datum.len() - 1] - dot(theta, &f);
            f.iter().map(|fj| -2.0 * c * r * fj).collect()
        }
    };
    Ok(grad)
}

/// `R_n(θ) = n⁻¹ Σ ℓ_θ(T_i)` with compensated summation.
pub fn empirical_risk(loss: &LossModel, theta: &[f64], data: &DataSet) -> Result<f64> {
    RiskEvaluator::new(loss, data)?.risk(theta)
}

#[derive(Debug, Clone, Copy)]
enum LinearLoss {
    Check(f64),
    Hinge,
    Squared,
}

#[derive(Debug, Clone)]
enum Layout {
    Scalar { tau: f64, t: Vec<f64> },
    Mcid { x: Vec<f64>, y: Vec<f64> },
    Linear { loss: LinearLoss, q: usize, design: Vec<f64>, y: Vec<f64> },
}

/// Empirical risk bound to one data set, with the features precomputed.
#[derive(Debug, Clone)]
pub struct RiskEvaluator {
    loss: LossModel,
    layout: Layout,
    n: usize,
}

impl RiskEvaluator {
    pub fn new(loss: &LossModel, data: &DataSet) -> Result<Self> {
        loss.validate()?;
        loss.check_data(data)?;
        let n = data.len();
        let layout = match loss.kind {
            LossKind::Quantile { tau } => Layout::Scalar { tau, t: data.column(0) },
            LossKind::Mcid => Layout::Mcid { x: data.column(0), y: data.column(1) },
            LossKind::CheckRegression { basis, .. }
            | LossKind::Hinge { basis }
            | LossKind::SquaredError { basis } => {
                let q = basis.output_dim();
                let w = data.record_width();
                let mut design = vec![0.0; n * q];
                let mut y = Vec::with_capacity(n);
                for (i, r) in data.records().enumerate() {
                    basis.eval_into(&r[..w - 1], &mut design[i * q..(i + 1) * q]);
                    y.push(r[w - 1]);
                }
                let kind = match loss.kind {
                    LossKind::CheckRegression { tau, .. } => LinearLoss::Check(tau),
                    LossKind::Hinge { .. } => LinearLoss::Hinge,
                    _ => LinearLoss::Squared,
                };
                Layout::Linear { loss: kind, q, design, y }
            }
        };
        Ok(Self { loss: *loss, layout, n })
    }

    pub fn loss(&self) -> &LossModel {
        &self.loss
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn param_dim(&self) -> usize {
        self.loss.param_dim()
    }

    /// `R_n(θ)` including the loss scale.
    pub fn risk(&self, theta: &[f64]) -> Result<f64> {
        self.loss.check_theta(theta)?;
        Ok(self.loss.scale * self.base_risk(theta))
    }

    /// Risk of the unscaled loss; `theta` is assumed to have the right length.
    pub fn base_risk(&self, theta: &[f64]) -> f64 {
        let total = match &self.layout {
            Layout::Scalar { tau, t } => compensated_sum(t.iter().map(|&ti| check_kernel(ti - theta[0], *tau))),
            Layout::Mcid { x, y } => {
                compensated_sum(x.iter().zip(y).map(|(&xi, &yi)| mcid_kernel(xi, yi, theta[0])))
            }
            Layout::Linear { loss, q, design, y } => {
                let rows = design.chunks_exact(*q).zip(y);
                match *loss {
                    LinearLoss::Check(tau) => {
                        compensated_sum(rows.map(|(f, &yi)| check_kernel(yi - dot(theta, f), tau)))
                    }
                    LinearLoss::Hinge => compensated_sum(rows.map(|(f, &yi)| hinge_kernel(1.0 - yi * dot(theta, f)))),
                    LinearLoss::Squared => compensated_sum(rows.map(|(f, &yi)| {
                        let r = yi - dot(theta, f);
                        r * r
                    })),
                }
            }
        };
        total / self.n as f64
    }

    /// Residuals whose kinks the smoothed surrogate rounds off: `t − θ`,
    /// `y − θᵀf(x)`, `1 − yθᵀf(x)` or `x − θ`.
    pub fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        match &self.layout {
            Layout::Scalar { t, .. } => t.iter().map(|ti| ti - theta[0]).collect(),
            Layout::Mcid { x, .. } => x.iter().map(|xi| xi - theta[0]).collect(),
            Layout::Linear { loss, q, design, y } => design
                .chunks_exact(*q)
                .zip(y)
                .map(|(f, &yi)| match loss {
                    LinearLoss::Hinge => 1.0 - yi * dot(theta, f),
                    _ => yi - dot(theta, f),
                })
                .collect(),
        }
    }

    /// Whether a Gaussian-smoothed surrogate is registered for this loss.
    pub fn has_smoothed_surrogate(&self) -> bool {
        !matches!(self.layout, Layout::Mcid { .. })
    }

    /// Unscaled risk with each kink replaced by its convolution with
    /// `N(0, h²)`; `None` when no surrogate is registered.
    pub fn smoothed_base_risk(&self, theta: &[f64], h: f64) -> Option<f64> {
        let total = match &self.layout {
            Layout::Scalar { tau, t } => compensated_sum(t.iter().map(|&ti| smoothed_check(ti - theta[0], *tau, h))),
            Layout::Mcid { .. } => return None,
            Layout::Linear { loss, q, design, y } => {
                let rows = design.chunks_exact(*q).zip(y);
                match *loss {
                    LinearLoss::Check(tau) => {
                        compensated_sum(rows.map(|(f, &yi)| smoothed_check(yi - dot(theta, f), tau, h)))
                    }
                    LinearLoss::Hinge => {
                        compensated_sum(rows.map(|(f, &yi)| smoothed_hinge(1.0 - yi * dot(theta, f), h)))
                    }
                    LinearLoss::Squared => compensated_sum(rows.map(|(f, &yi)| {
                        let r = yi - dot(theta, f);
                        r * r
                    })),
                }
            }
        };
        Some(total / self.n as f64)
    }

    /// Root-mean-square of each feature column; `1` for the scalar losses.
    pub fn feature_scales(&self) -> Vec<f64> {
        match &self.layout {
            Layout::Linear { q, design, .. } => (0..*q)
                .map(|j| {
                    let ss: f64 = design.chunks_exact(*q).map(|f| f[j] * f[j]).sum();
                    (ss / self.n as f64).sqrt()
                })
                .collect(),
            _ => vec![1.0],
        }
    }

    /// Feature rows and responses for the linear-predictor losses.
    pub fn design(&self) -> Option<(&[f64], &[f64], usize)> {
        match &self.layout {
            Layout::Linear { q, design, y, .. } => Some((design, y, *q)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn affine() -> Basis {
        Basis::Affine { input_dim: 1 }
    }

    #[test]
    fn basis_examples() {
        assert_eq!(basis_eval(&affine(), &[3.0]).unwrap(), vec![1.0, 3.0]);
        assert_eq!(basis_eval(&Basis::Polynomial { degree: 3 }, &[2.0]).unwrap(), vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(basis_eval(&Basis::Identity { dim: 2 }, &[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
        assert!(matches!(basis_eval(&affine(), &[1.0, 2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn eval_loss_examples() {
        let q = LossModel::quantile(0.7).unwrap();
        assert!((eval_loss(&q, &[0.0], &[1.0]).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(eval_loss(&q, &[0.0], &[0.0]).unwrap(), 0.0);
        let h = LossModel::hinge(affine()).unwrap();
        assert_eq!(eval_loss(&h, &[1.0, -1.0], &[-1.0, 1.0]).unwrap(), 0.0);
        let m = LossModel::mcid();
        assert_eq!(eval_loss(&m, &[0.0], &[0.5, 1.0]).unwrap(), 0.0);
        assert_eq!(eval_loss(&m, &[0.0], &[0.5, -1.0]).unwrap(), 1.0);
        // sign(0) = +1
        assert_eq!(eval_loss(&m, &[0.5], &[0.5, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn eval_loss_errors() {
        let h = LossModel::hinge(affine()).unwrap();
        assert!(matches!(eval_loss(&h, &[1.0], &[0.0, 1.0]), Err(Error::Contract(_))));
        assert!(matches!(eval_loss(&h, &[1.0, 0.0], &[f64::NAN, 1.0]), Err(Error::Domain(_))));
        assert!(LossModel::quantile(1.0).is_err());
        assert!(LossModel::quantile(0.0).is_err());
    }

    #[test]
    fn subgradient_examples() {
        let c = LossModel::check_regression(0.5, affine()).unwrap();
        assert_eq!(loss_subgradient(&c, &[0.0, 0.0], &[1.0, 2.0]).unwrap(), vec![-0.5, -0.5]);
        let h = LossModel::hinge(affine()).unwrap();
        assert_eq!(loss_subgradient(&h, &[1.0, -1.0], &[2.0, 1.0]).unwrap(), vec![-1.0, -2.0]);
        let s = LossModel::squared_error(affine()).unwrap();
        assert_eq!(loss_subgradient(&s, &[0.0, 0.0], &[1.0, 1.0]).unwrap(), vec![-2.0, -2.0]);
        assert!(matches!(loss_subgradient(&LossModel::mcid(), &[0.0], &[1.0, 1.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn empirical_risk_examples() {
        let q = LossModel::quantile(0.5).unwrap();
        let d = DataSet::from_scalars(vec![1.0, 2.0, 3.0]).unwrap();
        assert!((empirical_risk(&q, &[2.0], &d).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let one = DataSet::from_scalars(vec![4.2]).unwrap();
        assert_eq!(empirical_risk(&q, &[1.0], &one).unwrap(), eval_loss(&q, &[1.0], &[4.2]).unwrap());
        let h = LossModel::hinge(affine()).unwrap();
        let cls = DataSet::from_pairs(&[(0.3, 1.0), (-2.0, -1.0), (5.0, 1.0)]).unwrap();
        assert_eq!(empirical_risk(&h, &[0.0, 0.0], &cls).unwrap(), 1.0);
        assert!(matches!(empirical_risk(&h, &[0.0, 0.0], &DataSet::from_pairs(&[(0.0, 0.5)]).unwrap()), Err(Error::Domain(_))));
    }

    #[test]
    fn smoothed_squared_error_is_exact() {
        let s = LossModel::squared_error(affine()).unwrap();
        let d = DataSet::from_pairs(&[(0.1, 1.0), (0.7, -0.3)]).unwrap();
        let ev = RiskEvaluator::new(&s, &d).unwrap();
        assert_eq!(ev.smoothed_base_risk(&[0.2, 0.4], 0.3), Some(ev.base_risk(&[0.2, 0.4])));
    }

    fn all_losses() -> Vec<LossModel> {
        vec![
            LossModel::quantile(0.3).unwrap(),
            LossModel::check_regression(0.7, affine()).unwrap(),
            LossModel::hinge(affine()).unwrap(),
            LossModel::squared_error(Basis::Polynomial { degree: 2 }).unwrap(),
        ]
    }

    fn datum_for(loss: &LossModel, x: f64, y: f64) -> Vec<f64> {
        match loss.kind() {
            LossKind::Quantile { .. } => vec![y],
            LossKind::Hinge { .. } | LossKind::Mcid => vec![x, if y >= 0.0 { 1.0 } else { -1.0 }],
            _ => vec![x, y],
        }
    }

    fn near_kink(loss: &LossModel, theta: &[f64], datum: &[f64]) -> bool {
        let d = DataSet::from_records(&[datum.to_vec()], loss.basis().map(|b| b.input_dim())).unwrap();
        let ev = RiskEvaluator::new(loss, &d).unwrap();
        let r = ev.residuals(theta)[0];
        match loss.kind() {
            LossKind::SquaredError { .. } => false,
            _ => r.abs() < 1e-3,
        }
    }

    proptest! {
        #[test]
        fn subgradient_matches_finite_differences(
            which in 0usize..4, x in -3.0f64..3.0, y in -3.0f64..3.0,
            t0 in -2.0f64..2.0, t1 in -2.0f64..2.0, t2 in -2.0f64..2.0,
        ) {
            let loss = all_losses()[which];
            let theta: Vec<f64> = [t0, t1, t2][..loss.param_dim()].to_vec();
            let datum = datum_for(&loss, x, y);
            prop_assume!(!near_kink(&loss, &theta, &datum));
            let g = loss_subgradient(&loss, &theta, &datum).unwrap();
            let step = 1e-6;
            for j in 0..theta.len() {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[j] += step;
                dn[j] -= step;
                let fd = (eval_loss(&loss, &up, &datum).unwrap() - eval_loss(&loss, &dn, &datum).unwrap()) / (2.0 * step);
                prop_assert!((fd - g[j]).abs() < 1e-4, "coordinate {j}: fd {fd} vs {}", g[j]);
            }
        }

        #[test]
        fn duplicated_data_has_the_same_risk(
            ts in proptest::collection::vec(-10.0f64..10.0, 1..40), theta in -5.0f64..5.0,
        ) {
            let loss = LossModel::quantile(0.3).unwrap();
            let d = DataSet::from_scalars(ts).unwrap();
            let r1 = empirical_risk(&loss, &[theta], &d).unwrap();
            let r2 = empirical_risk(&loss, &[theta], &d.concat(&d).unwrap()).unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-12 * r1.abs().max(1e-300));
        }

        #[test]
        fn loss_ranges(x in -3.0f64..3.0, y in -3.0f64..3.0, t0 in -2.0f64..2.0, t1 in -2.0f64..2.0) {
            let lbl = if y >= 0.0 { 1.0 } else { -1.0 };
            let m = eval_loss(&LossModel::mcid(), &[t0], &[x, lbl]).unwrap();
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert!(eval_loss(&LossModel::quantile(0.2).unwrap(), &[t0], &[y]).unwrap() >= 0.0);
            prop_assert!(eval_loss(&LossModel::hinge(affine()).unwrap(), &[t0, t1], &[x, lbl]).unwrap() >= 0.0);
        }
    }
}
