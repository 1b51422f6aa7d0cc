//! Experiment configuration read from a TOML file.

use std::path::PathBuf;
use std::sync::Arc;

use mlmc_core::model::{DriftModel, Payoff, PayoffKind, ProblemSpec};
use mlmc_core::LevelPlan;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<mlmc_core::Error> for ConfigError {
    fn from(e: mlmc_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub m: u32,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    pub problem: ProblemConfig,
    pub payoff: PayoffConfig,
    #[serde(default)]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub validate: ValidateConfig,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub x0: Vec<f64>,
    pub t: f64,
    pub drift: DriftConfig,
    /// Replacements for the regularity constants of the drift family.
    #[serde(default)]
    pub constants: ConstantOverrides,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    Constant {
        c: Vec<f64>,
    },
    Affine {
        /// Row-major rows of `A`.
        a: Vec<Vec<f64>>,
        c: Vec<f64>,
    },
    LinearDecay {
        k: f64,
    },
    SmoothSine {
        amplitude: f64,
    },
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    pub lip_grad: Option<f64>,
    pub lap_growth: Option<f64>,
    pub hess_bound: Option<f64>,
    pub grad_lap_growth: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffConfig {
    /// `u·x + offset`.
    Linear {
        u: Vec<f64>,
        #[serde(default)]
        offset: f64,
        /// Defaults to `|u|`.
        lip: Option<f64>,
        /// Defaults to `lip`.
        grad_lip: Option<f64>,
    },
    /// `sin(u·x)`, with `lip = |u|` and `grad_lip = |u|²`.
    Sine { u: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    /// Explicit `N_0, ..., N_L`; excludes `eps`.
    pub counts: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub strong: Option<StrongConfig>,
    pub mse: Option<ReplicationConfig>,
    pub mgf_u: Option<MgfUConfig>,
    pub mgf_malliavin: Option<MgfMalliavinConfig>,
    pub mgf_estimator: Option<MgfEstimatorConfig>,
    pub tail: Option<TailConfig>,
    pub orlicz: Option<ReplicationConfig>,
    pub appendix: Option<AppendixConfig>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StrongConfig {
    pub n: Vec<u64>,
    pub paths: u64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationConfig {
    pub replications: u64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MgfUConfig {
    pub n: u64,
    pub rho_fractions: Vec<f64>,
    #[serde(default)]
    pub x: f64,
    pub paths: u64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MgfMalliavinConfig {
    pub n: u64,
    pub r: Vec<f64>,
    /// Zero-based direction of the perturbation.
    #[serde(default)]
    pub j: usize,
    pub rho_fractions: Vec<f64>,
    pub paths: u64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MgfEstimatorConfig {
    pub lambda_fractions: Vec<f64>,
    pub replications: u64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    /// Explicit deviation levels; by default `points` equally spaced values up
    /// to the admissible maximum.
    pub alpha: Option<Vec<f64>>,
    #[serde(default = "default_points")]
    pub points: usize,
    pub replications: u64,
}

fn default_points() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AppendixConfig {
    pub mu_fractions: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub t: f64,
    pub paths: u64,
    pub grid_steps: u64,
}

fn default_horizon() -> f64 {
    1.0
}

/// What the estimator should run with.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Plan(LevelPlan),
    Eps { eps: f64, beta: Option<f64> },
}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

fn non_empty<T>(v: &[T], name: &str) -> Result<(), ConfigError> {
    if v.is_empty() {
        Err(err(format!("{name} must not be empty")))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| err(format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.m < 2 {
            return Err(err("m must be >= 2"));
        }
        if self.workers == Some(0) {
            return Err(err("workers must be >= 1"));
        }
        self.problem()?;
        self.payoff()?;
        if let Some(t) = &self.target {
            self.target_from(t)?;
        }
        let v = &self.validate;
        if let Some(s) = &v.strong {
            non_empty(&s.n, "validate.strong.n")?;
        }
        if let Some(s) = &v.mgf_u {
            non_empty(&s.rho_fractions, "validate.mgf_u.rho_fractions")?;
        }
        if let Some(s) = &v.mgf_malliavin {
            non_empty(&s.r, "validate.mgf_malliavin.r")?;
            non_empty(&s.rho_fractions, "validate.mgf_malliavin.rho_fractions")?;
        }
        if let Some(s) = &v.mgf_estimator {
            non_empty(&s.lambda_fractions, "validate.mgf_estimator.lambda_fractions")?;
        }
        if let Some(s) = &v.tail {
            if let Some(a) = &s.alpha {
                non_empty(a, "validate.tail.alpha")?;
            }
            if s.points == 0 {
                return Err(err("validate.tail.points must be >= 1"));
            }
        }
        if let Some(s) = &v.appendix {
            non_empty(&s.mu_fractions, "validate.appendix.mu_fractions")?;
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemSpec, ConfigError> {
        let p = &self.problem;
        let d = p.x0.len();
        let mut drift = match &p.drift {
            DriftConfig::Constant { c } => DriftModel::constant(c.clone())?,
            DriftConfig::Affine { a, c } => {
                if a.iter().any(|row| row.len() != a.len()) {
                    return Err(err("problem.drift.a must be square"));
                }
                let flat: Vec<f64> = a.iter().flatten().copied().collect();
                DriftModel::affine(DMatrix::from_row_slice(a.len(), a.len(), &flat), c.clone())?
            }
            DriftConfig::LinearDecay { k } => DriftModel::linear_decay(*k, d)?,
            DriftConfig::SmoothSine { amplitude } => DriftModel::smooth_sine(*amplitude, d)?,
        };
        let o = &p.constants;
        if let Some(v) = o.lip_grad {
            drift = drift.with_lip_grad(v)?;
        }
        if let Some(v) = o.lap_growth {
            drift = drift.with_lap_growth(v)?;
        }
        if let Some(v) = o.hess_bound {
            drift = drift.with_hess_bound(v)?;
        }
        if let Some(v) = o.grad_lap_growth {
            drift = drift.with_grad_lap_growth(v)?;
        }
        Ok(ProblemSpec::new(p.x0.clone(), p.t, drift)?)
    }

    pub fn payoff(&self) -> Result<Payoff, ConfigError> {
        let d = self.problem.x0.len();
        let payoff = match &self.payoff {
            PayoffConfig::Linear { u, offset, lip, grad_lip } => {
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let lip = lip.unwrap_or(norm);
                if lip < norm {
                    return Err(err(format!("payoff.lip = {lip} is below |u| = {norm}")));
                }
                let kind = PayoffKind::Linear {
                    u: u.clone(),
                    offset: *offset,
                };
                Payoff::new(kind, lip, grad_lip.unwrap_or(lip))?
            }
            PayoffConfig::Sine { u } => {
                let norm2 = u.iter().map(|v| v * v).sum::<f64>();
                let (uf, ug) = (u.clone(), u.clone());
                let kind = PayoffKind::User {
                    name: "sine".into(),
                    f: Arc::new(move |x: &[f64]| uf.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().sin()),
                    grad: Arc::new(move |x: &[f64], out: &mut [f64]| {
                        let c = ug.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().cos();
                        for (o, a) in out.iter_mut().zip(&ug) {
                            *o = c * a;
                        }
                    }),
                };
                Payoff::new(kind, norm2.sqrt(), norm2)?
            }
        };
        let len = match &self.payoff {
            PayoffConfig::Linear { u, .. } | PayoffConfig::Sine { u } => u.len(),
        };
        if len != d {
            return Err(err(format!("payoff.u has length {len}, problem dimension is {d}")));
        }
        Ok(payoff)
    }

    fn target_from(&self, t: &TargetConfig) -> Result<Target, ConfigError> {
        match (t.eps, &t.counts) {
            (Some(_), Some(_)) => Err(err("target: give either eps or counts, not both")),
            (None, None) => Err(err("target: one of eps or counts is required")),
            (None, Some(counts)) => {
                if t.beta.is_some() {
                    return Err(err("target.beta needs target.eps"));
                }
                Ok(Target::Plan(LevelPlan::new(self.m, counts.clone())?))
            }
            (Some(eps), None) => {
                if !(eps > 0.0 && eps.is_finite()) {
                    return Err(err("target.eps must be finite and > 0"));
                }
                if let Some(b) = t.beta {
                    if !(b > 1.0) {
                        return Err(err("target.beta must be > 1"));
                    }
                }
                Ok(Target::Eps { eps, beta: t.beta })
            }
        }
    }

    pub fn target(&self) -> Result<Target, ConfigError> {
        let t = self.target.as_ref().ok_or_else(|| err("this command needs a [target] section"))?;
        self.target_from(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7
m = 2
[problem]
x0 = [1.0]
t = 1.0
[problem.drift]
kind = "linear_decay"
k = 1.0
[payoff]
kind = "linear"
u = [1.0]
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.seed, 7);
        let p = cfg.payoff().unwrap();
        assert_eq!((p.lip, p.grad_lip), (1.0, 1.0));
        assert!(cfg.target().is_err());
    }

    #[test]
    fn seed_is_mandatory() {
        let text = BASE.replace("seed = 7\n", "");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn rejects_bad_targets_and_dimensions() {
        let both = format!("{BASE}[target]\neps = 0.1\ncounts = [10]\n");
        assert!(ExperimentConfig::parse(&both).is_err());
        let dim = BASE.replace("u = [1.0]", "u = [1.0, 2.0]");
        assert!(ExperimentConfig::parse(&dim).is_err());
        let beta = format!("{BASE}[target]\neps = 0.1\nbeta = 0.5\n");
        assert!(ExperimentConfig::parse(&beta).is_err());
        let grid = format!("{BASE}[validate.strong]\nn = []\npaths = 1000\n");
        assert!(ExperimentConfig::parse(&grid).is_err());
    }

    #[test]
    fn overrides_apply() {
        let text = BASE.replace("[payoff]", "[problem.constants]\nhess_bound = 1.0\n[payoff]");
        let p = ExperimentConfig::parse(&text).unwrap().problem().unwrap();
        assert_eq!(p.drift.constants.hess_bound, 1.0);
    }
}
