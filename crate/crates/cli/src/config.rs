//! Run configuration: a JSON document, optionally overridden by flags.

use std::path::Path;

use gibbscal::asymptotics::HessianConfig;
use gibbscal::gpc::GpcConfig;
use gibbscal::loss::LossKind;
use gibbscal::optim::OptimizerConfig;
use gibbscal::sampler::SamplerConfig;
use gibbscal::sim::Dgp;
use gibbscal::{LossModel, Prior};
use serde::{Deserialize, Serialize};

use crate::canonical::to_canonical_string;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Fit,
    Sample,
    Calibrate,
    Simulate,
    Curve,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Sample => "sample",
            Command::Calibrate => "calibrate",
            Command::Simulate => "simulate",
            Command::Curve => "curve",
            Command::Diagnose => "diagnose",
        }
    }

    fn needs_dgp(self) -> bool {
        matches!(self, Command::Simulate | Command::Curve)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyOptions {
    pub reps: usize,
    pub calibrate: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { reps: 100, calibrate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveOptions {
    pub n_list: Vec<usize>,
    pub eta_grid: Vec<f64>,
    pub reps: usize,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self { n_list: vec![50, 100, 200], eta_grid: vec![0.1, 0.2, 0.4, 0.8, 1.6, 3.2], reps: 100 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseOptions {
    /// Point at which to evaluate `V` and `S`; the ERM when absent.
    pub theta: Option<Vec<f64>>,
    pub hessian: HessianConfig,
}

fn default_eta() -> f64 {
    1.0
}

fn default_n() -> usize {
    50
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub dataset_path: Option<String>,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default)]
    pub dgp: Option<Dgp>,
    /// Sample size of simulated data.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub loss: Option<LossModel>,
    #[serde(default)]
    pub prior: Option<Prior>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub gpc: GpcConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub study: StudyOptions,
    #[serde(default)]
    pub curve: CurveOptions,
    #[serde(default)]
    pub diagnose: DiagnoseOptions,
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<String>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub b: Option<usize>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub tau: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical JSON text; parsing it back yields an equal config.
    pub fn to_canonical_json(&self) -> String {
        to_canonical_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(p) = &o.out {
            self.output_path = Some(p.clone());
        }
        if let Some(e) = o.eta {
            self.eta = e;
            self.gpc.eta0 = e;
        }
        if let Some(a) = o.alpha {
            self.gpc.alpha = a;
        }
        if let Some(b) = o.b {
            self.gpc.b = b;
        }
        if let Some(n) = o.n {
            self.n = n;
        }
        if let Some(r) = o.reps {
            self.study.reps = r;
            self.curve.reps = r;
        }
        if let Some(t) = o.tau {
            self.set_tau(t)?;
        }
        self.validate()
    }

    fn set_tau(&mut self, tau: f64) -> Result<(), CliError> {
        let mut touched = false;
        if let Some(Dgp::GammaQuantile { tau: t } | Dgp::QuantileRegression { tau: t }) = &mut self.dgp {
            *t = tau;
            touched = true;
        }
        if let Some(loss) = self.loss {
            let kind = match *loss.kind() {
                LossKind::Quantile { .. } => Some(LossKind::Quantile { tau }),
                LossKind::CheckRegression { basis, .. } => Some(LossKind::CheckRegression { tau, basis }),
                _ => None,
            };
            if let Some(k) = kind {
                self.loss = Some(LossModel::new(k)?.scaled(loss.scale())?);
                touched = true;
            }
        }
        if touched {
            Ok(())
        } else {
            Err(CliError::Usage("--tau applies only to quantile losses and DGPs".into()))
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.dataset_path, &self.dgp) {
            (Some(_), Some(_)) => {
                return Err(CliError::Data("conflict: give either `dataset_path` or `dgp`, not both".into()));
            }
            (None, None) => return Err(CliError::Data("missing field `dgp` or `dataset_path`".into())),
            (Some(_), None) if self.command.needs_dgp() => {
                return Err(CliError::Data(format!("`{}` needs a `dgp`", self.command.name())));
            }
            (Some(_), None) if self.loss.is_none() => {
                return Err(CliError::Data("missing field `loss` (required with `dataset_path`)".into()));
            }
            _ => {}
        }
        if let Some(d) = &self.dgp {
            d.validate()?;
        }
        let loss = self.loss_model();
        loss.validate()?;
        self.prior().validate(Some(loss.param_dim()))?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(CliError::Data(format!("eta must be positive, got {}", self.eta)));
        }
        if self.n == 0 || self.workers == 0 {
            return Err(CliError::Data("n and workers must be positive".into()));
        }
        self.sampler.validate()?;
        self.gpc.validate()?;
        if self.study.reps == 0 || self.curve.reps == 0 {
            return Err(CliError::Data("reps must be positive".into()));
        }
        if let Some(t) = &self.diagnose.theta {
            if t.len() != loss.param_dim() {
                return Err(CliError::Data("diagnose.theta has the wrong dimension".into()));
            }
        }
        Ok(())
    }

    /// The configured loss, or the DGP's own.
    pub fn loss_model(&self) -> LossModel {
        self.loss.unwrap_or_else(|| self.dgp.expect("validated").loss())
    }

    pub fn prior(&self) -> Prior {
        match (&self.prior, &self.dgp) {
            (Some(p), _) => p.clone(),
            (None, Some(d)) => d.default_prior(),
            (None, None) => Prior::Flat,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"command":"sample","dgp":{"kind":"gamma-quantile","tau":0.7},"eta":1.0,"seed":1}"#;

    #[test]
    fn minimal_config_parses() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.loss_model(), LossModel::quantile(0.7).unwrap());
        assert_eq!(c.n, 50);
    }

    #[test]
    fn dataset_and_dgp_conflict() {
        let text = r#"{"command":"fit","dgp":{"kind":"mcid"},"dataset_path":"x.csv","seed":1}"#;
        let e = RunConfig::from_json(text).unwrap_err().to_string();
        assert!(e.contains("conflict"), "{e}");
    }

    #[test]
    fn missing_and_unknown_keys_are_named() {
        let e = RunConfig::from_json(r#"{"command":"fit","dgp":{"kind":"mcid"}}"#).unwrap_err().to_string();
        assert!(e.contains("seed"), "{e}");
        let e = RunConfig::from_json(r#"{"command":"fit","dgp":{"kind":"mcid"},"seed":1,"sede":2}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("sede"), "{e}");
    }

    #[test]
    fn canonical_round_trip() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        let a = c.to_canonical_json();
        let b = RunConfig::from_json(&a).unwrap().to_canonical_json();
        assert_eq!(a, b);
    }

    #[test]
    fn tau_override() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.apply(&Overrides { tau: Some(0.3), ..Default::default() }).unwrap();
        assert_eq!(c.loss_model(), LossModel::quantile(0.3).unwrap());
        let mut m = RunConfig::from_json(r#"{"command":"fit","dgp":{"kind":"mcid"},"seed":1}"#).unwrap();
        assert!(m.apply(&Overrides { tau: Some(0.3), ..Default::default() }).is_err());
    }
}
