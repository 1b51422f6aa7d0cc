//! Command execution and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mlmc_core::constants::{constants_bundle, ConstantsOptions, LevelFactor};
use mlmc_core::model::{validate_assumptions, Payoff, ProblemSpec, DEFAULT_ASSUMPTION_SAMPLES, DEFAULT_RADIUS};
use mlmc_core::optimize::{boosted_plan_from, cost_functionals, optimal_plan_from, BoostedPlan, OptimalPlan};
use mlmc_core::simulate::mlmc_estimate;
use mlmc_core::validate::{
    check_estimator_mgf, check_malliavin_formula, check_mgf_malliavin, check_mgf_u, check_mse, check_orlicz_bounds,
    check_strong_error, check_sup_integral_mgf, concentration_report, default_alpha_grid, oracle_mean,
    replicate_errors, BoundCheckReport, DeviationSetup,
};
use mlmc_core::{EstimatorOutput, LevelPlan};
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    Strong,
    Mse,
    MgfU,
    MgfMalliavin,
    MgfEstimator,
    Tail,
    Orlicz,
    Appendix,
}

impl Bound {
    pub fn name(self) -> &'static str {
        match self {
            Bound::Strong => "strong",
            Bound::Mse => "mse",
            Bound::MgfU => "mgf-u",
            Bound::MgfMalliavin => "mgf-malliavin",
            Bound::MgfEstimator => "mgf-estimator",
            Bound::Tail => "tail",
            Bound::Orlicz => "orlicz",
            Bound::Appendix => "appendix",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Constants,
    Optimize,
    Estimate,
    Validate(Bound),
}

impl Command {
    pub fn name(self) -> String {
        match self {
            Command::Constants => "constants".into(),
            Command::Optimize => "optimize".into(),
            Command::Estimate => "estimate".into(),
            Command::Validate(b) => format!("validate {}", b.name()),
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    /// Exit status 2.
    Config(String),
    /// Exit status 3.
    Io(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.0)
    }
}

impl From<mlmc_core::Error> for RunError {
    fn from(e: mlmc_core::Error) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Files written so far, relative to the output directory.
pub struct Artifacts {
    dir: PathBuf,
    pub written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| RunError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// `grid_value,empirical,std_error,bound,verdict`, one row per point.
    pub fn csv(&mut self, name: &str, report: &BoundCheckReport) -> Result<(), RunError> {
        let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(|e| RunError::Io(e.to_string()))?;
        w.write_record(["grid_value", "empirical", "std_error", "bound", "verdict"])
            .map_err(|e| RunError::Io(e.to_string()))?;
        for p in &report.points {
            let verdict = serde_json::to_value(p.verdict).map_err(|e| RunError::Io(e.to_string()))?;
            w.write_record([
                p.grid_value.to_string(),
                p.empirical.to_string(),
                p.std_error.to_string(),
                p.theoretical.to_string(),
                verdict.as_str().unwrap_or_default().to_string(),
            ])
            .map_err(|e| RunError::Io(e.to_string()))?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Bound names with a counted violation; empty when everything passed.
pub type Violations = Vec<String>;

#[derive(Serialize)]
struct ConstantsArtifact<'a> {
    problem: ProblemEcho<'a>,
    #[serde(flatten)]
    bundle: mlmc_core::ConstantsBundle,
}

#[derive(Serialize)]
struct ProblemEcho<'a> {
    drift: &'a str,
    d: usize,
    t: f64,
    lip_grad: f64,
    lap_growth: f64,
    hess_bound: f64,
    grad_lap_growth: f64,
    payoff: &'a str,
    payoff_lip: f64,
    payoff_grad_lip: f64,
}

fn echo<'a>(p: &'a ProblemSpec, f: &'a Payoff) -> ProblemEcho<'a> {
    let c = p.drift.constants;
    ProblemEcho {
        drift: p.drift.kind_name(),
        d: p.d,
        t: p.t,
        lip_grad: c.lip_grad,
        lap_growth: c.lap_growth,
        hess_bound: c.hess_bound,
        grad_lap_growth: c.grad_lap_growth,
        payoff: f.kind_name(),
        payoff_lip: f.lip,
        payoff_grad_lip: f.grad_lip,
    }
}

#[derive(Serialize)]
struct PlanArtifact {
    optimal: OptimalPlan,
    #[serde(skip_serializing_if = "Option::is_none")]
    boosted: Option<BoostedPlan>,
}

#[derive(Serialize)]
struct EstimateArtifact {
    m: u32,
    #[serde(rename = "N_l")]
    counts: Vec<u64>,
    #[serde(flatten)]
    output: EstimatorOutput,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_mean: Option<f64>,
}

/// Exponent used for `c_5` when the target has no `beta`.
pub const DEFAULT_BETA: f64 = 1.5;

fn eps_target(cfg: &ExperimentConfig) -> Result<(f64, Option<f64>), RunError> {
    match cfg.target()? {
        Target::Eps { eps, beta } => Ok((eps, beta)),
        Target::Plan(_) => Err(RunError::Config("this command needs target.eps".into())),
    }
}

fn plan_for(cfg: &ExperimentConfig, problem: &ProblemSpec, payoff: &Payoff) -> Result<LevelPlan, RunError> {
    Ok(match cfg.target()? {
        Target::Plan(p) => p,
        Target::Eps { eps, beta } => {
            let cf = cost_functionals(problem, payoff, cfg.m, eps)?;
            match beta {
                Some(b) => boosted_plan_from(&cf, b)?.level_plan(),
                None => optimal_plan_from(&cf)?.level_plan(),
            }
        }
    })
}

fn section<T>(s: &Option<T>, bound: Bound) -> Result<&T, RunError> {
    s.as_ref().ok_or_else(|| {
        RunError::Config(format!("validate {} needs a [validate.{}] section", bound.name(), bound.name().replace('-', "_")))
    })
}

/// Runs `command`, writing artifacts into `arts`.
pub fn run(cfg: &ExperimentConfig, command: Command, arts: &mut Artifacts) -> Result<Violations, RunError> {
    let problem = cfg.problem()?;
    let payoff = cfg.payoff()?;
    let seed = cfg.seed;
    match command {
        Command::Constants => {
            let eps_beta = match &cfg.target {
                Some(t) => t.eps.map(|e| (e, t.beta.unwrap_or(DEFAULT_BETA))),
                None => None,
            };
            let bundle = constants_bundle(
                &problem,
                &payoff,
                LevelFactor::finite(cfg.m)?,
                eps_beta,
                ConstantsOptions::default(),
            )?;
            arts.json(
                "constants.json",
                &ConstantsArtifact {
                    problem: echo(&problem, &payoff),
                    bundle,
                },
            )?;
            let assumptions = validate_assumptions(&problem, DEFAULT_ASSUMPTION_SAMPLES, DEFAULT_RADIUS, seed);
            for v in &assumptions.violations {
                eprintln!("warning: sampled assumption check failed: {v}");
            }
            arts.json("assumptions.json", &assumptions)?;
            Ok(Vec::new())
        }
        Command::Optimize => {
            let (eps, beta) = eps_target(cfg)?;
            let cf = cost_functionals(&problem, &payoff, cfg.m, eps)?;
            let artifact = PlanArtifact {
                optimal: optimal_plan_from(&cf)?,
                boosted: beta.map(|b| boosted_plan_from(&cf, b)).transpose()?,
            };
            arts.json("plan.json", &artifact)?;
            Ok(Vec::new())
        }
        Command::Estimate => {
            let plan = plan_for(cfg, &problem, &payoff)?;
            let output = mlmc_estimate(&problem, &payoff, &plan, seed)?;
            arts.json(
                "estimate.json",
                &EstimateArtifact {
                    m: plan.m,
                    counts: plan.counts.clone(),
                    output,
                    oracle_mean: oracle_mean(&problem, &payoff).ok(),
                },
            )?;
            Ok(Vec::new())
        }
        Command::Validate(bound) => {
            let report = validate(cfg, bound, &problem, &payoff)?;
            let base = format!("validate_{}", bound.name().replace('-', "_"));
            arts.json(&format!("{base}.json"), &report)?;
            for (i, r) in report.flatten().into_iter().enumerate() {
                arts.csv(&format!("{base}_{i}_{}.csv", r.bound_name), r)?;
            }
            Ok(report.violations())
        }
    }
}

fn chain(mut reports: Vec<BoundCheckReport>) -> BoundCheckReport {
    let mut head = reports.remove(0);
    head.companions.extend(reports);
    head
}

fn validate(
    cfg: &ExperimentConfig,
    bound: Bound,
    problem: &ProblemSpec,
    payoff: &Payoff,
) -> Result<BoundCheckReport, RunError> {
    let v = &cfg.validate;
    let (m, seed) = (cfg.m, cfg.seed);
    Ok(match bound {
        Bound::Strong => {
            let s = section(&v.strong, bound)?;
            check_strong_error(problem, m, &s.n, s.paths, seed)?
        }
        Bound::Mse => {
            let s = section(&v.mse, bound)?;
            let (eps, _) = eps_target(cfg)?;
            check_mse(problem, payoff, m, eps, s.replications, seed)?
        }
        Bound::MgfU => {
            let s = section(&v.mgf_u, bound)?;
            check_mgf_u(problem, m, s.n, &s.rho_fractions, s.x, s.paths, seed)?
        }
        Bound::MgfMalliavin => {
            let s = section(&v.mgf_malliavin, bound)?;
            let mut reports = Vec::new();
            for &r in &s.r {
                reports.push(check_mgf_malliavin(problem, m, s.n, r, s.j, &s.rho_fractions, s.paths, seed)?);
            }
            reports.push(check_malliavin_formula(problem, s.n, &s.r, s.j, 100, seed)?);
            chain(reports)
        }
        Bound::MgfEstimator => {
            let s = section(&v.mgf_estimator, bound)?;
            let plan = plan_for(cfg, problem, payoff)?;
            check_estimator_mgf(problem, payoff, &plan, &s.lambda_fractions, s.replications, seed)?
        }
        Bound::Tail => {
            let s = section(&v.tail, bound)?;
            let (eps, beta) = eps_target(cfg)?;
            oracle_mean(problem, payoff)?;
            let setup = DeviationSetup::new(problem, payoff, m, eps, beta)?;
            let grid = match &s.alpha {
                Some(a) => a.clone(),
                None => default_alpha_grid(setup.alpha_max(), s.points),
            };
            let errors = replicate_errors(problem, payoff, &setup.plan, seed, s.replications)?;
            concentration_report(&setup, payoff, problem.t, &errors, &grid, seed)?
        }
        Bound::Orlicz => {
            let s = section(&v.orlicz, bound)?;
            let (eps, _) = eps_target(cfg)?;
            check_orlicz_bounds(problem, payoff, m, eps, s.replications, seed)?
        }
        Bound::Appendix => {
            let s = section(&v.appendix, bound)?;
            check_sup_integral_mgf(&s.mu_fractions, s.t, s.paths, s.grid_steps, seed)?
        }
    })
}
