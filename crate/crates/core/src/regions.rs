//! Credible regions built from posterior draws.
//!
//! Empirical quantiles use the inclusive order statistic `k = ⌈p·m⌉`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::asymptotics::matrix_serde;
use crate::error::{Error, Result};
use crate::gibbs::{log_post_unnorm, GibbsSpec};
use crate::sampler::{covariance_rows, mean_rows, PosteriorDraws};
use crate::stats::order_statistic_index;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `{θ : (θ − center)ᵀ shape⁻¹ (θ − center) ≤ threshold}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticalRegion {
    pub center: Vec<f64>,
    #[serde(with = "matrix_serde")]
    pub shape: DMatrix<f64>,
    pub threshold: f64,
    pub level: f64,
}

impl EllipticalRegion {
    /// Squared Mahalanobis distance of `theta` from the center.
    pub fn mahalanobis(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.center.len() {
            return Err(Error::Contract(format!(
                "point has dimension {}, region has {}",
                theta.len(),
                self.center.len()
            )));
        }
        let chol = self
            .shape
            .clone()
            .cholesky()
            .ok_or_else(|| Error::DegeneratePosterior("region shape is not positive definite".into()))?;
        let diff = DVector::from_iterator(theta.len(), theta.iter().zip(&self.center).map(|(t, c)| t - c));
        let z = chol.l().solve_lower_triangular(&diff).expect("nonsingular factor");
        Ok(z.norm_squared())
    }

    pub fn contains(&self, theta: &[f64]) -> Result<bool> {
        Ok(self.mahalanobis(theta)? <= self.threshold)
    }

    /// `det(threshold·shape)^{1/2}`, proportional to the volume.
    pub fn volume_proxy(&self) -> f64 {
        (self.shape.determinant() * self.threshold.powi(self.center.len() as i32)).sqrt()
    }
}

/// `{θ : log π_n^(η)(θ) ≥ log_cut}` (highest posterior density).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityLevelRegion {
    pub log_cut: f64,
    pub level: f64,
    /// Defining draws at or above the cut.
    pub retained: usize,
    pub n_draws: usize,
}

impl DensityLevelRegion {
    pub fn contains_log_density(&self, log_post: f64) -> bool {
        log_post >= self.log_cut
    }

    /// Membership of `theta` under the posterior that produced the draws.
    pub fn contains(&self, spec: &GibbsSpec, theta: &[f64]) -> Result<bool> {
        Ok(self.contains_log_density(log_post_unnorm(spec, theta)?))
    }

    pub fn retained_fraction(&self) -> f64 {
        self.retained as f64 / self.n_draws as f64
    }
}

/// Sup-norm ball `{g : max_k |g(x_k) − center_k| ≤ radius}` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBand {
    pub grid: Vec<f64>,
    pub center_curve: Vec<f64>,
    pub radius: f64,
    pub level: f64,
}

impl UniformBand {
    pub fn sup_distance(&self, curve: &[f64]) -> Result<f64> {
        if curve.len() != self.center_curve.len() {
            return Err(Error::Contract(format!(
                "curve has {} grid values, band has {}",
                curve.len(),
                self.center_curve.len()
            )));
        }
        Ok(curve.iter().zip(&self.center_curve).map(|(c, m)| (c - m).abs()).fold(0.0, f64::max))
    }

    pub fn contains(&self, curve: &[f64]) -> Result<bool> {
        Ok(self.sup_distance(curve)? <= self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CredibleRegion {
    Interval(Interval),
    Elliptical(EllipticalRegion),
    DensityLevel(DensityLevelRegion),
    UniformBand(UniformBand),
}

impl CredibleRegion {
    /// Membership of a point (interval, ellipse) or grid curve (band).
    ///
    /// Density-level regions need the posterior; see [`CredibleRegion::contains_with`].
    pub fn contains(&self, target: &[f64]) -> Result<bool> {
        match self {
            CredibleRegion::Interval(i) => match target {
                [x] => Ok(i.contains(*x)),
                _ => Err(Error::Contract(format!("interval membership needs a scalar, got {} values", target.len()))),
            },
            CredibleRegion::Elliptical(e) => e.contains(target),
            CredibleRegion::UniformBand(b) => b.contains(target),
            CredibleRegion::DensityLevel(_) => Err(Error::Contract(
                "density-level membership needs the posterior density".into(),
            )),
        }
    }

    pub fn contains_with(&self, target: &[f64], spec: &GibbsSpec) -> Result<bool> {
        match self {
            CredibleRegion::DensityLevel(d) => d.contains(spec, target),
            other => other.contains(target),
        }
    }

    pub fn level(&self) -> f64 {
        match self {
            CredibleRegion::Interval(r) => r.level,
            CredibleRegion::Elliptical(r) => r.level,
            CredibleRegion::DensityLevel(r) => r.level,
            CredibleRegion::UniformBand(r) => r.level,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Shortest interval holding `⌈(1−α)m⌉` of the sorted draws; ties go to the
/// smallest lower end.
pub fn hpd_interval(draws: &[f64], alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    let m = draws.len();
    if m < 10 {
        return Err(Error::Domain(format!("need at least 10 draws for an HPD interval, got {m}")));
    }
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::Domain("non-finite draw".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (((1.0 - alpha) * m as f64).ceil() as usize).clamp(1, m);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=(m - k) {
        let w = sorted[i + k - 1] - sorted[i];
        if w < best_width {
            best_width = w;
            best = i;
        }
    }
    Ok(Interval { lo: sorted[best], hi: sorted[best + k - 1], level: 1.0 - alpha })
}

/// Elliptical region from the draw mean and covariance, with the empirical
/// `1−α` quantile of the Mahalanobis distances as threshold.
pub fn elliptical_region(draws: &PosteriorDraws, alpha: f64) -> Result<EllipticalRegion> {
    elliptical_region_from_rows(draws.values(), draws.dim(), alpha)
}

/// As [`elliptical_region`], for a row-major `m × dim` matrix of points.
pub fn elliptical_region_from_rows(values: &[f64], dim: usize, alpha: f64) -> Result<EllipticalRegion> {
    check_alpha(alpha)?;
    if dim == 0 || values.len() % dim != 0 {
        return Err(Error::Contract("points do not form a matrix with the given dimension".into()));
    }
    let m = values.len() / dim;
    if m <= dim + 1 {
        return Err(Error::Precondition(format!("need more than {} points, got {m}", dim + 1)));
    }
    let center = mean_rows(values, dim);
    let shape = covariance_rows(values, dim);
    let chol = shape
        .clone()
        .cholesky()
        .filter(|c| (0..dim).all(|i| c.l()[(i, i)] > 1e-150))
        .ok_or_else(|| Error::DegeneratePosterior("sample covariance is singular".into()))?;
    let l = chol.l();
    let mut dist: Vec<f64> = values
        .chunks_exact(dim)
        .map(|row| {
            let diff = DVector::from_iterator(dim, row.iter().zip(&center).map(|(t, c)| t - c));
            l.solve_lower_triangular(&diff).expect("nonsingular factor").norm_squared()
        })
        .collect();
    dist.sort_by(f64::total_cmp);
    let threshold = dist[order_statistic_index(1.0 - alpha, m)];
    Ok(EllipticalRegion { center, shape, threshold, level: 1.0 - alpha })
}

/// Level set of the posterior density at the empirical `α` quantile of the
/// draws' log densities. Ties at the cut are retained.
pub fn hpd_density_region(draws: &PosteriorDraws, alpha: f64) -> Result<DensityLevelRegion> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let m = draws.len();
    if m == 0 {
        return Err(Error::Domain("no draws".into()));
    }
    let mut lp = draws.log_post().to_vec();
    lp.sort_by(f64::total_cmp);
    let log_cut = lp[order_statistic_index(alpha, m)];
    let retained = draws.log_post().iter().filter(|&&v| v >= log_cut).count();
    Ok(DensityLevelRegion { log_cut, level: 1.0 - alpha, retained, n_draws: m })
}

/// Constant-radius band around the pointwise mean curve; `curve_draws` is
/// row-major `m × grid.len()`.
pub fn uniform_band(curve_draws: &[f64], grid: &[f64], alpha: f64) -> Result<UniformBand> {
    check_alpha(alpha)?;
    let g = grid.len();
    if g < 2 {
        return Err(Error::Domain("a band needs at least two grid points".into()));
    }
    if curve_draws.is_empty() || curve_draws.len() % g != 0 {
        return Err(Error::Contract("curve draws do not match the grid".into()));
    }
    let m = curve_draws.len() / g;
    let center_curve = mean_rows(curve_draws, g);
    let mut sup: Vec<f64> = curve_draws
        .chunks_exact(g)
        .map(|c| c.iter().zip(&center_curve).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    sup.sort_by(f64::total_cmp);
    let radius = sup[order_statistic_index(1.0 - alpha, m)];
    Ok(UniformBand { grid: grid.to_vec(), center_curve, radius, level: 1.0 - alpha })
}
