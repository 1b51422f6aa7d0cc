//! Monte Carlo checks of the bounds against simulated data.
//!
//! Every check produces a [`BoundCheckReport`]: a grid of evaluation points,
//! the empirical value with its standard error, the theoretical bound and a
//! per-point verdict. A point is satisfied when `empirical - 3 SE <= bound`;
//! tail probabilities use a Clopper–Pearson upper confidence bound instead.

pub mod orlicz;
pub mod stats;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

pub use orlicz::{orlicz_norm, psi_e};
use stats::{clopper_pearson_upper, empirical_mgf, mean_se, ols_slope};

use crate::constants::{
    cn_constants, deviation_from, estimator_mgf_constants, strong_error_constants, LevelConstants, LevelFactor,
};
use crate::error::{invalid, Error, Result};
use crate::model::{DriftKind, Payoff, PayoffKind, ProblemSpec};
use crate::optimize::{boosted_plan_from, cost_functionals, mse_bound_with, optimal_plan_from};
use crate::rng::{derive_seed, StreamKey};
use crate::simulate::{
    euler_path, malliavin_coupled_gap, malliavin_derivative, replicate_estimates, run_coupled, LevelPlan,
    PathBuffers,
};

pub const SE_MULTIPLIER: f64 = 3.0;
pub const TAIL_CONFIDENCE: f64 = 0.99;
pub const MIN_STRONG_PATHS: u64 = 1000;
/// Relative tolerance of the product formula against finite differences.
pub const MALLIAVIN_FD_TOLERANCE: f64 = 1e-6;
pub const ORLICZ_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    ViolatedBeyond3se,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub grid_value: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub theoretical: f64,
    pub verdict: Verdict,
    /// Upper confidence bound used for the verdict of tail checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_confidence: Option<f64>,
    /// A companion value for reading the result (not part of the verdict).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

impl GridPoint {
    pub fn new(grid_value: f64, empirical: f64, std_error: f64, theoretical: f64) -> Self {
        let ok = empirical - SE_MULTIPLIER * std_error <= theoretical;
        Self {
            grid_value,
            empirical,
            std_error,
            theoretical,
            verdict: if ok { Verdict::Satisfied } else { Verdict::ViolatedBeyond3se },
            upper_confidence: None,
            reference: None,
        }
    }

    /// Verdict from an upper confidence bound rather than `3 SE`.
    pub fn with_upper(grid_value: f64, empirical: f64, std_error: f64, theoretical: f64, upper: f64) -> Self {
        Self {
            verdict: if upper <= theoretical { Verdict::Satisfied } else { Verdict::ViolatedBeyond3se },
            upper_confidence: Some(upper),
            ..Self::new(grid_value, empirical, std_error, theoretical)
        }
    }

    pub fn reference(mut self, value: f64) -> Self {
        self.reference = Some(value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckReport {
    pub bound_name: String,
    /// What the grid values are (`n`, `rho`, `lambda`, `alpha`, ...).
    pub grid_label: String,
    pub points: Vec<GridPoint>,
    pub replications: u64,
    pub seed: u64,
    /// Run outside its validity window; violations do not count.
    pub informational: bool,
    pub summary: BTreeMap<String, f64>,
    pub flags: Vec<String>,
    pub companions: Vec<BoundCheckReport>,
}

impl BoundCheckReport {
    pub fn new(bound_name: &str, grid_label: &str, replications: u64, seed: u64) -> Self {
        Self {
            bound_name: bound_name.to_string(),
            grid_label: grid_label.to_string(),
            points: Vec::new(),
            replications,
            seed,
            informational: false,
            summary: BTreeMap::new(),
            flags: Vec::new(),
            companions: Vec::new(),
        }
    }

    pub fn all_satisfied(&self) -> bool {
        self.points.iter().all(|p| p.verdict == Verdict::Satisfied)
    }

    /// All non-informational points here and in the companions are satisfied.
    pub fn passed(&self) -> bool {
        (self.informational || self.all_satisfied()) && self.companions.iter().all(|c| c.passed())
    }

    /// Names of the bounds with a counted violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.informational && !self.all_satisfied() {
            out.push(self.bound_name.clone());
        }
        for c in &self.companions {
            out.extend(c.violations());
        }
        out
    }

    /// This report followed by its companions, depth first.
    pub fn flatten(&self) -> Vec<&BoundCheckReport> {
        let mut out = vec![self];
        for c in &self.companions {
            out.extend(c.flatten());
        }
        out
    }
}

fn par_map<T: Send>(count: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..count).into_par_iter().map(f).collect()
}

fn affine_parts(problem: &ProblemSpec) -> Option<(DMatrix<f64>, DVector<f64>)> {
    match &problem.drift.kind {
        DriftKind::Affine { a, c } => Some((a.clone(), c.clone())),
        DriftKind::Constant { c } => Some((DMatrix::zeros(problem.d, problem.d), c.clone())),
        _ => None,
    }
}

fn linear_parts(payoff: &Payoff) -> Option<(&[f64], f64)> {
    match &payoff.kind {
        PayoffKind::Linear { u, offset } => Some((u.as_slice(), *offset)),
        _ => None,
    }
}

/// Closed-form `E f(X_T)` for affine drift and linear payoff:
/// `u·(e^{AT} x0 + ∫_0^T e^{As} c ds) + offset`.
pub fn oracle_mean(problem: &ProblemSpec, payoff: &Payoff) -> Result<f64> {
    let (a, c) = affine_parts(problem).ok_or(Error::OracleUnavailable("drift is not affine"))?;
    let (u, offset) = linear_parts(payoff).ok_or(Error::OracleUnavailable("payoff is not linear"))?;
    let d = problem.d;
    // exp of [[A T, c T], [0, 0]] carries e^{AT} and ∫_0^T e^{As} ds c.
    let mut aug = DMatrix::zeros(d + 1, d + 1);
    aug.view_mut((0, 0), (d, d)).copy_from(&(&a * problem.t));
    aug.view_mut((0, d), (d, 1)).copy_from(&(&c * problem.t));
    let e = aug.exp();
    let mean: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|k| e[(i, k)] * problem.x0[k]).sum::<f64>() + e[(i, d)])
        .collect();
    Ok(offset + u.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>())
}

/// Exact `E f(X^n_T)` of the `n`-step Euler scheme for affine drift and
/// linear payoff, from the mean recursion `μ ← μ + h (A μ + c)`.
pub fn euler_mean(problem: &ProblemSpec, payoff: &Payoff, n: u64) -> Result<f64> {
    let (a, c) = affine_parts(problem).ok_or(Error::OracleUnavailable("drift is not affine"))?;
    let (u, offset) = linear_parts(payoff).ok_or(Error::OracleUnavailable("payoff is not linear"))?;
    let h = problem.t / n as f64;
    let mut mu = DVector::from_column_slice(&problem.x0);
    for _ in 0..n {
        let drift = &a * &mu + &c;
        mu += drift * h;
    }
    Ok(offset + u.iter().zip(mu.iter()).map(|(a, b)| a * b).sum::<f64>())
}

/// Mean of `f(X^n_T)` over `samples` independent Euler paths, with its SE.
pub fn auxiliary_mean(problem: &ProblemSpec, payoff: &Payoff, n: u64, samples: u64, seed: u64) -> Result<stats::Estimate> {
    if samples < 2 {
        return Err(invalid("samples", "need at least 2"));
    }
    let key = StreamKey::new(seed, n);
    let d = problem.d;
    let h = problem.t / n as f64;
    let values = par_map(samples, |k| {
        let mut rng = key.stream(k);
        let mut x = problem.x0.clone();
        let mut b = vec![0.0; d];
        for _ in 0..n {
            problem.drift.drift_into(&x, &mut b);
            for i in 0..d {
                x[i] = x[i] + h * b[i] + h.sqrt() * rng.standard_normal();
            }
        }
        payoff.eval(&x)
    });
    Ok(mean_se(&values))
}

/// `E|U_T|²` and `E (U*_T)²` against the strong-error bounds, with the slope
/// of `log E|U_T|²` against `log n` in the summary.
pub fn check_strong_error(
    problem: &ProblemSpec,
    m: u32,
    n_list: &[u64],
    paths: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    if paths < MIN_STRONG_PATHS {
        return Err(invalid("paths", format!("need at least {MIN_STRONG_PATHS}")));
    }
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(invalid("n_list", "must be non-empty with entries >= 1"));
    }
    let sc = strong_error_constants(problem, LevelFactor::finite(m)?)?;
    let mf = m as f64;
    let t2 = problem.t * problem.t;
    let mut main = BoundCheckReport::new("strong_error_terminal", "n", paths, seed);
    let mut sup = BoundCheckReport::new("strong_error_max_gap", "n", paths, seed);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &n in n_list {
        let key = StreamKey::new(seed, n);
        let pairs = par_map(paths, |k| {
            let mut buf = PathBuffers::new(problem.d);
            let gap = run_coupled(problem, m, n, &mut key.stream(k), &mut buf, None);
            let u2: f64 = buf.xf.iter().zip(&buf.xc).map(|(a, b)| (a - b) * (a - b)).sum();
            (u2, gap * gap)
        });
        let (u2, g2): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let scale = (mf - 1.0) * t2 / (mf * (n as f64).powi(2));
        let e = mean_se(&u2);
        main.points.push(GridPoint::new(n as f64, e.mean, e.std_error, sc.k1m * scale));
        let e2 = mean_se(&g2);
        sup.points.push(GridPoint::new(n as f64, e2.mean, e2.std_error, sc.k2m * scale));
        if e.mean > 0.0 {
            xs.push((n as f64).ln());
            ys.push(e.mean.ln());
        }
    }
    if xs.len() >= 2 {
        main.summary.insert("slope".into(), ols_slope(&xs, &ys));
    }
    main.companions.push(sup);
    Ok(main)
}

fn check_fractions(fractions: &[f64], lo: f64, name: &'static str) -> Result<()> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f >= lo && *f <= 1.0)) {
        return Err(invalid(name, format!("must be a non-empty subset of [{lo}, 1]")));
    }
    Ok(())
}

fn mgf_points(report: &mut BoundCheckReport, ys: &[f64], grid: &[(f64, f64, f64)]) {
    for &(g, rho, bound) in grid {
        let est = empirical_mgf(ys, rho);
        if est.heavy_tailed {
            report.flags.push(format!("heavy-tailed MGF estimate at {g}: increase paths"));
        }
        report.points.push(GridPoint::new(g, est.value, est.std_error, bound));
    }
}

/// MGF of `((m-1)T² x/(2mn) + max_k |X^{mn}_{t_k} - X^n_{t_k}|)²` at
/// `ρ = fraction · ρ_17 n²`.
pub fn check_mgf_u(
    problem: &ProblemSpec,
    m: u32,
    n: u64,
    rho_fractions: &[f64],
    x: f64,
    paths: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    check_fractions(rho_fractions, 0.0, "rho_fractions")?;
    if n == 0 || x < 0.0 {
        return Err(invalid("n, x", "need n >= 1 and x >= 0"));
    }
    let cn = cn_constants(problem, LevelFactor::finite(m)?)?;
    let mf = m as f64;
    let shift = (mf - 1.0) * problem.t * problem.t * x / (2.0 * mf * n as f64);
    let key = StreamKey::new(seed, n);
    let ys = par_map(paths, |k| {
        let mut buf = PathBuffers::new(problem.d);
        let gap = run_coupled(problem, m, n, &mut key.stream(k), &mut buf, None);
        (shift + gap).powi(2)
    });
    let threshold = cn.rho_max(n);
    let mut report = BoundCheckReport::new("max_gap_mgf", "rho_fraction", paths, seed);
    report.summary.insert("rho_threshold".into(), threshold);
    let mut grid = Vec::new();
    for &f in rho_fractions {
        let rho = f * threshold;
        grid.push((f, rho, cn.max_gap_mgf_bound(n, rho, x)?));
    }
    mgf_points(&mut report, &ys, &grid);
    Ok(report)
}

/// MGF of `max_k |D^j_r X^{mn}_{t_k} - D^j_r X^n_{t_k}|²` at
/// `ρ = fraction · e^{-2 bd (T-r)} ρ̂(r) n²`.
#[allow(clippy::too_many_arguments)]
pub fn check_mgf_malliavin(
    problem: &ProblemSpec,
    m: u32,
    n: u64,
    r: f64,
    j: usize,
    rho_fractions: &[f64],
    paths: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    check_fractions(rho_fractions, 0.0, "rho_fractions")?;
    let cn = cn_constants(problem, LevelFactor::finite(m)?)?;
    let threshold = cn.malliavin_threshold(r, n)?;
    let d = problem.d;
    let key = StreamKey::new(seed, n);
    let ys: Vec<f64> = par_map(paths, |k| {
        let mut rng = key.stream(k);
        let mut inc = vec![0.0; m as usize * n as usize * d];
        rng.fill_normal(problem.t / (m as u64 * n) as f64, &mut inc);
        malliavin_coupled_gap(problem, m, &inc, r, j).map(|g| g * g)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut report = BoundCheckReport::new("malliavin_gap_mgf", "rho_fraction", paths, seed);
    report.summary.insert("rho_threshold".into(), threshold);
    report.summary.insert("r".into(), r);
    let mut grid = Vec::new();
    for &f in rho_fractions {
        let rho = f * threshold;
        grid.push((f, rho, cn.malliavin_mgf_bound(r, n, rho)?));
    }
    mgf_points(&mut report, &ys, &grid);
    Ok(report)
}

/// Product-formula derivative `D^j_r X^n_T` against central finite
/// differences in the increment containing `r`, and against the a-priori
/// bound `|D^j_r X^n_T| <= e^{bd (T-r)}`.
pub fn check_malliavin_formula(
    problem: &ProblemSpec,
    n: u64,
    r_list: &[f64],
    j: usize,
    paths: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    let d = problem.d;
    let bd = problem.drift.constants.lip_grad;
    let mut fd = BoundCheckReport::new("malliavin_finite_difference", "r", paths, seed);
    let mut apriori = BoundCheckReport::new("malliavin_a_priori", "r", paths, seed);
    let delta = 1e-5;
    for &r in r_list {
        let key = StreamKey::new(derive_seed(seed, r.to_bits()), n);
        let idx = crate::simulate::increment_index(problem.t, n, r) as usize;
        let rows: Vec<(f64, f64)> = par_map(paths, |k| {
            let mut inc = vec![0.0; n as usize * d];
            key.stream(k).fill_normal(problem.t / n as f64, &mut inc);
            let dx = malliavin_derivative(problem, &inc, r, j)?;
            let terminal = |shift: f64| -> Result<Vec<f64>> {
                let mut p = inc.clone();
                p[idx * d + j] += shift;
                let path = euler_path(problem, &p)?;
                Ok(path[path.len() - d..].to_vec())
            };
            let (up, down) = (terminal(delta)?, terminal(-delta)?);
            let mut err2 = 0.0;
            let mut norm2 = 0.0;
            for i in 0..d {
                let fd = (up[i] - down[i]) / (2.0 * delta);
                err2 += (fd - dx[i]).powi(2);
                norm2 += dx[i] * dx[i];
            }
            Ok(((err2 / norm2).sqrt(), norm2.sqrt()))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let max_rel = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        let max_norm = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        fd.points.push(GridPoint::new(r, max_rel, 0.0, MALLIAVIN_FD_TOLERANCE));
        apriori
            .points
            .push(GridPoint::new(r, max_norm, 0.0, (bd * (problem.t - r)).exp()));
    }
    fd.companions.push(apriori);
    Ok(fd)
}

/// Empirical RMSE of replicated `Q̂_ε` around the exact mean against `ε`,
/// and the mean squared error against the MSE bound of the plan.
pub fn check_mse(
    problem: &ProblemSpec,
    payoff: &Payoff,
    m: u32,
    eps: f64,
    replications: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    let truth = oracle_mean(problem, payoff)?;
    let cf = cost_functionals(problem, payoff, m, eps)?;
    let plan = optimal_plan_from(&cf)?.level_plan();
    let q = replicate_estimates(problem, payoff, &plan, seed, replications)?;
    let sq: Vec<f64> = q.iter().map(|v| (v - truth).powi(2)).collect();
    let e = mean_se(&sq);
    let rmse = e.mean.sqrt();
    // Delta method for the square root.
    let rmse_se = if rmse > 0.0 { e.std_error / (2.0 * rmse) } else { 0.0 };
    let mut report = BoundCheckReport::new("rmse", "eps", replications, seed);
    report.points.push(GridPoint::new(eps, rmse, rmse_se, eps));
    report.summary.insert("L".into(), plan.max_level() as f64);
    report.summary.insert("cost".into(), plan.cost());
    let mut mse = BoundCheckReport::new("mse_plan", "eps", replications, seed);
    mse.points.push(GridPoint::new(eps, e.mean, e.std_error, mse_bound_with(&cf.lc, payoff.lip, problem.t, &plan)));
    report.companions.push(mse);
    Ok(report)
}

/// `min_ℓ N_ℓ m^ℓ` over `ℓ = 1..L`, or `N_0` when `L = 0`.
pub fn min_weighted_count(plan: &LevelPlan) -> f64 {
    let m = plan.m as f64;
    let it = plan.counts.iter().enumerate().map(|(l, &n)| n as f64 * m.powi(l as i32));
    if plan.counts.len() == 1 {
        plan.counts[0] as f64
    } else {
        it.skip(1).fold(f64::INFINITY, f64::min)
    }
}

/// `[ḟ]² (T/(2N_0) + Σ C_50 (m-1) T²/(N_ℓ m^{2ℓ-1}))`.
pub fn estimator_variance_proxy(c50: f64, finf: f64, t: f64, plan: &LevelPlan) -> f64 {
    let m = plan.m as f64;
    let mut s = t / (2.0 * plan.counts[0] as f64);
    for (l, &n) in plan.counts.iter().enumerate().skip(1) {
        s += c50 * (m - 1.0) * t * t / (n as f64 * m.powi(2 * l as i32 - 1));
    }
    finf * finf * s
}

/// Empirical MGF of `Q̂ - E f(X^{m^L}_T)` at `λ = fraction · 𝒞 min N_ℓ m^ℓ`.
///
/// The centre is exact for affine drift with linear payoff; otherwise it is
/// estimated from `10 × replications` Euler paths and its standard error is
/// added to the margin.
pub fn check_estimator_mgf(
    problem: &ProblemSpec,
    payoff: &Payoff,
    plan: &LevelPlan,
    lambda_fractions: &[f64],
    replications: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    if lambda_fractions.is_empty() || lambda_fractions.iter().any(|f| !(-1.0..=1.0).contains(f)) {
        return Err(invalid("lambda_fractions", "must be a non-empty subset of [-1, 1]"));
    }
    let est = estimator_mgf_constants(problem, payoff, LevelFactor::finite(plan.m)?)?;
    let script_c = est.script_c.expect("finite m");
    let n_fine = (plan.m as u64).pow(plan.max_level());
    let (centre, centre_se) = match euler_mean(problem, payoff, n_fine) {
        Ok(v) => (v, 0.0),
        Err(_) => {
            let e = auxiliary_mean(problem, payoff, n_fine, 10 * replications, derive_seed(seed, u64::MAX))?;
            (e.mean, e.std_error)
        }
    };
    let q = replicate_estimates(problem, payoff, plan, seed, replications)?;
    let ys: Vec<f64> = q.iter().map(|v| v - centre).collect();
    let scale = script_c * min_weighted_count(plan);
    let proxy = estimator_variance_proxy(est.c50, payoff.lip, problem.t, plan);
    let mut report = BoundCheckReport::new("estimator_mgf", "lambda_fraction", replications, seed);
    report.summary.insert("lambda_scale".into(), scale);
    report.summary.insert("centre".into(), centre);
    report.summary.insert("centre_std_error".into(), centre_se);
    report.summary.insert("C_50".into(), est.c50);
    for &f in lambda_fractions {
        let lambda = f * scale;
        let mgf = empirical_mgf(&ys, lambda);
        let centring = lambda.abs() * mgf.value * centre_se;
        if mgf.heavy_tailed {
            report.flags.push(format!("heavy-tailed MGF estimate at {f}: increase replications"));
        }
        if centring > mgf.std_error {
            report.flags.push(format!("centring uncertainty dominates at {f}"));
        }
        let bound = (lambda * lambda * proxy).exp();
        report
            .points
            .push(GridPoint::new(f, mgf.value, mgf.std_error + centring, bound).reference(lambda));
    }
    Ok(report)
}

/// `Q̂ - E f(X_T)` for `count` replications of the plan.
pub fn replicate_errors(
    problem: &ProblemSpec,
    payoff: &Payoff,
    plan: &LevelPlan,
    seed: u64,
    count: u64,
) -> Result<Vec<f64>> {
    let truth = oracle_mean(problem, payoff)?;
    Ok(replicate_estimates(problem, payoff, plan, seed, count)?
        .into_iter()
        .map(|q| q - truth)
        .collect())
}

/// `points` equally spaced values `upper · i / points`, `i = 1..=points`.
pub fn default_alpha_grid(upper: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|i| upper * i as f64 / points as f64).collect()
}

/// Plan used by the deviation checks: optimal, or boosted with exponent `β`.
#[derive(Debug, Clone)]
pub struct DeviationSetup {
    pub plan: LevelPlan,
    pub eps: f64,
    pub beta: Option<f64>,
    pub c50: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c6p: f64,
    pub c7: f64,
    pub c1: f64,
    pub bias: f64,
    pub k1m: f64,
}

impl DeviationSetup {
    pub fn new(problem: &ProblemSpec, payoff: &Payoff, m: u32, eps: f64, boosted: Option<f64>) -> Result<Self> {
        let est = estimator_mgf_constants(problem, payoff, LevelFactor::finite(m)?)?;
        let dev = deviation_from(problem, payoff, m, eps, boosted.unwrap_or(1.5), &est)?;
        let cf = cost_functionals(problem, payoff, m, eps)?;
        let plan = match boosted {
            Some(beta) => boosted_plan_from(&cf, beta)?.level_plan(),
            None => optimal_plan_from(&cf)?.level_plan(),
        };
        let lc = LevelConstants::new(problem, m)?;
        let bias = payoff.lip * problem.t * lc.k1_inf.sqrt() * (m as f64).powi(-(plan.max_level() as i32));
        Ok(Self {
            plan,
            eps,
            beta: boosted,
            c50: est.c50,
            c1: dev.c1,
            c2: dev.c2,
            c3: dev.c3,
            c4: dev.c4,
            c5: dev.c5_of_eps,
            c6: dev.c6,
            c6p: dev.c6p,
            c7: dev.c7,
            bias,
            k1m: lc.k1m,
        })
    }

    /// Upper end of the admissible deviation range.
    pub fn alpha_max(&self) -> f64 {
        match self.beta {
            Some(_) => self.c5,
            None => self.c2 * self.eps.powf(2.0 / 3.0),
        }
    }

    /// `2 e^{-α²/(c_3 ε²)} e^{min(2/c_3, c_4 ε^{2/3})}`.
    pub fn simplified_tail(&self, alpha: f64) -> f64 {
        let e2 = self.eps * self.eps;
        2.0 * (-alpha * alpha / (self.c3 * e2)).exp() * (2.0 / self.c3).min(self.c4 * self.eps.powf(2.0 / 3.0)).exp()
    }

    /// Tail bound with the level sums of the plan.
    pub fn level_tail(&self, finf: f64, t: f64, alpha: f64) -> f64 {
        let m = self.plan.m as f64;
        let mut s = t / self.plan.counts[0] as f64;
        for (l, &n) in self.plan.counts.iter().enumerate().skip(1) {
            s += 2.0 * self.c50 * (m - 1.0) * t * t / (n as f64 * m.powi(2 * l as i32 - 1));
        }
        let x = (alpha - self.bias).max(0.0);
        2.0 * (-x * x / (2.0 * finf * finf * s)).exp()
    }

    /// `ε <= (c_6' c_7)³ ∧ c_1`.
    pub fn orlicz_window(&self) -> f64 {
        (self.c6p * self.c7).powi(3).min(self.c1)
    }
}

/// Tail frequencies `P(|Q̂ - E f(X_T)| >= α)` of replicated errors against
/// the simplified tail bound (main) and the level-sum bound (companion).
pub fn concentration_report(
    setup: &DeviationSetup,
    payoff: &Payoff,
    t: f64,
    errors: &[f64],
    alpha_grid: &[f64],
    seed: u64,
) -> Result<BoundCheckReport> {
    if alpha_grid.is_empty() || alpha_grid.iter().any(|a| !(*a > 0.0)) {
        return Err(invalid("alpha_grid", "must be non-empty and positive"));
    }
    let n = errors.len() as u64;
    if n == 0 {
        return Err(invalid("replications", "must be >= 1"));
    }
    let mut main = BoundCheckReport::new("tail_simplified", "alpha", n, seed);
    let mut levels = BoundCheckReport::new("tail_level_sums", "alpha", n, seed);
    let alpha_max = setup.alpha_max();
    main.summary.insert("alpha_max".into(), alpha_max);
    main.summary.insert("c_3".into(), setup.c3);
    main.summary.insert("c_4".into(), setup.c4);
    if alpha_grid.iter().any(|a| *a > alpha_max) {
        main.flags.push(format!("alpha grid exceeds the admissible range {alpha_max}"));
    }
    if setup.eps >= setup.c1 {
        main.flags.push("eps >= c_1".into());
    }
    for &alpha in alpha_grid {
        let k = errors.iter().filter(|e| e.abs() >= alpha).count() as u64;
        let p = k as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let upper = clopper_pearson_upper(k, n, TAIL_CONFIDENCE);
        main.points
            .push(GridPoint::with_upper(alpha, p, se, setup.simplified_tail(alpha), upper));
        levels
            .points
            .push(GridPoint::with_upper(alpha, p, se, setup.level_tail(payoff.lip, t, alpha), upper));
    }
    main.companions.push(levels);
    Ok(main)
}

#[allow(clippy::too_many_arguments)]
pub fn check_concentration(
    problem: &ProblemSpec,
    payoff: &Payoff,
    m: u32,
    eps: f64,
    alpha_grid: Option<&[f64]>,
    replications: u64,
    boosted: Option<f64>,
    seed: u64,
) -> Result<BoundCheckReport> {
    oracle_mean(problem, payoff)?;
    let setup = DeviationSetup::new(problem, payoff, m, eps, boosted)?;
    let grid = match alpha_grid {
        Some(g) => g.to_vec(),
        None => default_alpha_grid(setup.alpha_max(), 8),
    };
    let errors = replicate_errors(problem, payoff, &setup.plan, seed, replications)?;
    concentration_report(&setup, payoff, problem.t, &errors, &grid, seed)
}

/// Orlicz norm with a batch-means standard error.
fn orlicz_with_se(xs: &[f64]) -> (f64, f64) {
    let norm = orlicz_norm(xs);
    let size = xs.len() / ORLICZ_BATCHES;
    if size < 2 {
        return (norm, 0.0);
    }
    let batches: Vec<f64> = xs.chunks_exact(size).take(ORLICZ_BATCHES).map(orlicz_norm).collect();
    let e = mean_se(&batches);
    (norm, e.std_error * ((size * ORLICZ_BATCHES) as f64 / xs.len() as f64).sqrt())
}

/// Orlicz norms of replicated errors: `c_6 ε` (main), the plan bound
/// `c_6 √(MSE bound)`, and the single-level estimator of matched cost against
/// its upper envelope (lower envelope in `reference`).
pub fn orlicz_report(
    problem: &ProblemSpec,
    payoff: &Payoff,
    setup: &DeviationSetup,
    errors: &[f64],
    seed: u64,
) -> Result<BoundCheckReport> {
    let n = errors.len() as u64;
    let (norm, se) = orlicz_with_se(errors);
    let mut main = BoundCheckReport::new("orlicz_eps", "eps", n, seed);
    let window = setup.orlicz_window();
    main.summary.insert("validity_window".into(), window);
    main.summary.insert("c_6".into(), setup.c6);
    if setup.eps > window {
        main.informational = true;
        main.flags.push(format!("eps = {} outside the validity window {window:e}", setup.eps));
    }
    main.points.push(GridPoint::new(setup.eps, norm, se, setup.c6 * setup.eps));

    let lc = LevelConstants::new(problem, setup.plan.m)?;
    let mut plan_bound = BoundCheckReport::new("orlicz_plan", "eps", n, seed);
    plan_bound.informational = main.informational;
    let mse = mse_bound_with(&lc, payoff.lip, problem.t, &setup.plan);
    plan_bound.points.push(GridPoint::new(setup.eps, norm, se, setup.c6 * mse.sqrt()));
    main.companions.push(plan_bound);

    // Single-level estimator at L = 0 with as many samples as the MLMC cost.
    let n0 = setup.plan.cost().ceil() as u64;
    let single = LevelPlan::new(setup.plan.m, vec![n0])?;
    let single_errors = replicate_errors(problem, payoff, &single, derive_seed(seed, u64::MAX - 1), n)?;
    let (sn, sse) = orlicz_with_se(&single_errors);
    let bias0 = payoff.lip * problem.t * lc.k1_inf.sqrt();
    let c22 = crate::constants::c22(problem, payoff, setup.plan.m, 0)?;
    let core = bias0 * bias0 + 2.0 * c22 / n0 as f64;
    let mut sl = BoundCheckReport::new("orlicz_standard_mc", "N_0", n, seed);
    sl.points.push(
        GridPoint::new(n0 as f64, sn, sse, ((3.0 + 3f64.sqrt()) / 4.0 * core).sqrt()).reference((core / 2.0).sqrt()),
    );
    main.companions.push(sl);
    Ok(main)
}

pub fn check_orlicz_bounds(
    problem: &ProblemSpec,
    payoff: &Payoff,
    m: u32,
    eps: f64,
    replications: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    oracle_mean(problem, payoff)?;
    let setup = DeviationSetup::new(problem, payoff, m, eps, None)?;
    let errors = replicate_errors(problem, payoff, &setup.plan, seed, replications)?;
    orlicz_report(problem, payoff, &setup, &errors, seed)
}

/// `E e^{μ sup_t |W_t|²}` over a grid of `grid_steps` steps of `[0, T]`, at
/// `μ = fraction/(8T)`, against `e^{4 μ T ln 2}` (main) and `(1 - 4μT)^{-1/2}`
/// (companion). The reference column holds `E e^{μ W_T²} = (1 - 2μT)^{-1/2}`.
pub fn check_sup_integral_mgf(
    mu_fractions: &[f64],
    t: f64,
    paths: u64,
    grid_steps: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    check_fractions(mu_fractions, 0.0, "mu_fractions")?;
    if !(t > 0.0) || grid_steps == 0 || paths < 2 {
        return Err(invalid("t, grid_steps, paths", "need T > 0, grid_steps >= 1, paths >= 2"));
    }
    let key = StreamKey::new(seed, grid_steps);
    let sd = (t / grid_steps as f64).sqrt();
    let sups = par_map(paths, |k| {
        let mut rng = key.stream(k);
        let mut w: f64 = 0.0;
        let mut s: f64 = 0.0;
        for _ in 0..grid_steps {
            w += sd * rng.standard_normal();
            s = s.max(w * w);
        }
        s
    });
    let mut main = BoundCheckReport::new("sup_integral_mgf_simplified", "mu_fraction", paths, seed);
    let mut exact = BoundCheckReport::new("sup_integral_mgf", "mu_fraction", paths, seed);
    for &f in mu_fractions {
        let mu = f / (8.0 * t);
        let mgf = empirical_mgf(&sups, mu);
        let lower = 1.0 / (1.0 - 2.0 * mu * t).sqrt();
        main.points.push(
            GridPoint::new(f, mgf.value, mgf.std_error, (4.0 * mu * t * std::f64::consts::LN_2).exp())
                .reference(lower),
        );
        exact
            .points
            .push(GridPoint::new(f, mgf.value, mgf.std_error, 1.0 / (1.0 - 4.0 * mu * t).sqrt()).reference(lower));
    }
    main.companions.push(exact);
    Ok(main)
}
