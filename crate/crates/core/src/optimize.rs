//! Bias and MSE bounds, the cost functional, and selection of the level and
//! sample sizes for a target root mean square error.

use serde::Serialize;

use crate::constants::LevelConstants;
use crate::error::{invalid, Error, Result};
use crate::model::{Payoff, ProblemSpec};
use crate::simulate::LevelPlan;

/// `[ḟ]_∞ T √K_{1,∞} m^{-L}`.
pub fn bias_bound(problem: &ProblemSpec, payoff: &Payoff, m: u32, level: u32) -> Result<f64> {
    let lc = LevelConstants::new(problem, m)?;
    Ok(payoff.lip * problem.t * lc.k1_inf.sqrt() * (m as f64).powi(-(level as i32)))
}

/// `[ḟ]² (K_{1,∞} T²/m^{2L} + T/N_0 + Σ K_{1,m}(m-1)T²/(N_ℓ m^{2ℓ-1}))`.
pub fn mse_bound(problem: &ProblemSpec, payoff: &Payoff, plan: &LevelPlan) -> Result<f64> {
    let lc = LevelConstants::new(problem, plan.m)?;
    Ok(mse_bound_with(&lc, payoff.lip, problem.t, plan))
}

pub fn mse_bound_with(lc: &LevelConstants, finf: f64, t: f64, plan: &LevelPlan) -> f64 {
    let m = plan.m as f64;
    let l = plan.max_level() as i32;
    let mut s = lc.k1_inf * t * t * m.powi(-2 * l) + t / plan.counts[0] as f64;
    for (ell, &n) in plan.counts.iter().enumerate().skip(1) {
        s += lc.k1m * (m - 1.0) * t * t / (n as f64 * m.powi(2 * ell as i32 - 1));
    }
    finf * finf * s
}

/// Variance part `T/N_0 + Σ K_{1,m}(m-1)T²/(N_ℓ m^{2ℓ-1})` with `K_{1,m}`
/// replaced by `k`.
pub fn variance_sum(k: f64, t: f64, plan: &LevelPlan) -> f64 {
    let m = plan.m as f64;
    let mut s = t / plan.counts[0] as f64;
    for (ell, &n) in plan.counts.iter().enumerate().skip(1) {
        s += k * (m - 1.0) * t * t / (n as f64 * m.powi(2 * ell as i32 - 1));
    }
    s
}

/// `Cost(m, x)`, `g` and `h` for one target `eps`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostFunctionals {
    pub m: u32,
    pub eps: f64,
    pub finf: f64,
    pub t: f64,
    pub lc: LevelConstants,
    /// `√α = 1 + θ`.
    pub alpha: f64,
    pub beta_eps: f64,
}

pub fn cost_functionals(problem: &ProblemSpec, payoff: &Payoff, m: u32, eps: f64) -> Result<CostFunctionals> {
    let lc = LevelConstants::new(problem, m)?;
    CostFunctionals::new(lc, payoff.lip, problem.t, eps)
}

impl CostFunctionals {
    pub fn new(lc: LevelConstants, finf: f64, t: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid("eps", "must be finite and > 0"));
        }
        let sqrt_alpha = 1.0 + lc.theta;
        Ok(Self {
            m: lc.m,
            eps,
            finf,
            t,
            lc,
            alpha: sqrt_alpha * sqrt_alpha,
            beta_eps: eps / (finf * t * lc.k1_inf.sqrt()),
        })
    }

    fn prefactor(&self) -> f64 {
        let m = self.m as f64;
        self.lc.k1m * m * m * (m - 1.0) * self.finf * self.finf * self.t * self.t / (m + 1.0)
    }

    /// `Cost(m, x)`; infinite where the bias alone exceeds `eps`.
    pub fn cost(&self, x: f64) -> f64 {
        let m = self.m as f64;
        let first = self.lc.c13 + (m + 1.0) / m * (1.0 - x.sqrt()) / (m.sqrt() - 1.0);
        let denom = self.eps * self.eps
            - self.finf * self.finf * self.t * self.t * self.lc.k1_inf * x * x;
        if denom <= 0.0 {
            f64::INFINITY
        } else {
            first * first * self.prefactor() / denom
        }
    }

    pub fn g(&self, x: f64) -> Result<f64> {
        if x >= self.beta_eps {
            return Err(invalid("x", format!("g has a pole at beta_eps = {}", self.beta_eps)));
        }
        let s = self.alpha.sqrt() - x.sqrt();
        Ok(s * s / (self.beta_eps * self.beta_eps - x * x))
    }

    pub fn h(&self, x: f64) -> f64 {
        let b2 = self.beta_eps * self.beta_eps;
        2.0 * self.alpha.sqrt() * x - x.powf(1.5) - b2 / x.sqrt()
    }

    /// `2√α - 1 - β²_ε`; when non-positive, `L = 0` is optimal.
    pub fn discriminant(&self) -> f64 {
        2.0 * self.alpha.sqrt() - 1.0 - self.beta_eps * self.beta_eps
    }

    /// The interval known to contain the root of `h`.
    pub fn root_bracket(&self) -> (f64, f64) {
        let sa = self.alpha.sqrt();
        let lo = self.beta_eps.powf(4.0 / 3.0) / (2f64.powf(2.0 / 3.0) * self.alpha.powf(1.0 / 3.0));
        let hi = lo + self.beta_eps * self.beta_eps / (2.0 * sa * (2.0 * sa - 1.5));
        (lo, hi)
    }

    /// `[ḟ]_∞ T √K_{1,∞}`.
    pub fn bias_scale(&self) -> f64 {
        self.finf * self.t * self.lc.k1_inf.sqrt()
    }

    /// Lower envelope of `m^{-L^ε}`, valid for `eps < c_1`.
    pub fn lower_envelope(&self) -> f64 {
        let m = self.m as f64;
        self.eps.powf(4.0 / 3.0)
            / (2f64.powf(2.0 / 3.0) * m * self.bias_scale().powf(4.0 / 3.0) * (1.0 + self.lc.theta).powf(2.0 / 3.0))
    }

    /// Upper envelope of `m^{-L^ε}`, valid for `eps < c_1`.
    pub fn upper_envelope(&self) -> f64 {
        let m = self.m as f64;
        let th = self.lc.theta;
        let env = (1.0 + th).powf(1.0 / 3.0) / 2f64.powf(2.0 / 3.0)
            + (1.0 + 2.0 * th).powf(1.0 / 3.0) / (1.0 + 4.0 * th);
        m * self.eps.powf(4.0 / 3.0) / ((1.0 + th) * self.bias_scale().powf(4.0 / 3.0)) * env
    }

    /// `c_1`, the threshold below which the envelopes apply.
    pub fn c1(&self) -> f64 {
        self.bias_scale() * (1.0 + 2.0 * self.lc.theta).sqrt()
    }

    /// Real-valued total `N` for level `L`.
    pub fn total_samples(&self, level: u32) -> Result<f64> {
        let m = self.m as f64;
        let l = level as i32;
        let sum: f64 = (1..=l).map(|ell| m.powf(-1.5 * ell as f64)).sum();
        let denom = self.eps * self.eps
            - self.finf * self.finf * self.t * self.t * self.lc.k1_inf * m.powi(-2 * l);
        if denom <= 0.0 {
            return Err(invalid("L", "bias bound alone exceeds eps"));
        }
        let second = self.lc.c13 + (m + 1.0) / m * (1.0 - m.powf(-0.5 * l as f64)) / (m.sqrt() - 1.0);
        Ok((self.lc.c13 + sum) * second * self.prefactor() / denom)
    }

    /// Real-valued `N_0, ..., N_L`.
    pub fn allocation(&self, level: u32) -> Result<Vec<f64>> {
        let m = self.m as f64;
        let n = self.total_samples(level)?;
        let weights: Vec<f64> = std::iter::once(self.lc.c13)
            .chain((1..=level).map(|ell| m.powf(-1.5 * ell as f64)))
            .collect();
        let total: f64 = weights.iter().sum();
        Ok(weights.iter().map(|w| n * w / total).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalPlan {
    pub eps: f64,
    pub m: u32,
    #[serde(rename = "L_eps")]
    pub l_eps: u32,
    /// Real-valued total from the closed form.
    #[serde(rename = "N_eps")]
    pub n_eps: f64,
    /// Real-valued `N_ℓ` before rounding up.
    pub allocation_real: Vec<f64>,
    #[serde(rename = "N_l")]
    pub counts: Vec<u64>,
    pub alpha_param: f64,
    pub beta_eps: f64,
    pub x_star: Option<f64>,
    pub root_bracket: Option<(f64, f64)>,
    pub predicted_cost: f64,
    /// `2√α - 1 - β² <= 0`: the level is zero without root finding.
    pub level_zero_branch: bool,
    /// `eps >= c_1`.
    pub eps_out_of_range: bool,
    /// Right side minus left side of the statistical-error budget, after
    /// rounding; non-negative.
    pub budget_slack: f64,
}

impl OptimalPlan {
    pub fn level_plan(&self) -> LevelPlan {
        LevelPlan {
            m: self.m,
            counts: self.counts.clone(),
        }
    }
}

/// Root of the increasing function `h` by bisection, to relative `1e-12`.
pub fn h_root(cf: &CostFunctionals) -> Result<(f64, (f64, f64))> {
    let (lo0, hi0) = cf.root_bracket();
    let cap = cf.beta_eps.min(1.0);
    let (mut lo, mut hi) = (lo0, hi0.min(cap));
    if !(cf.h(lo) < 0.0 && cf.h(hi) > 0.0) {
        return Err(Error::Internal(format!(
            "h does not change sign on [{lo}, {hi}]: h(lo) = {}, h(hi) = {}",
            cf.h(lo),
            cf.h(hi)
        )));
    }
    while hi - lo > 1e-12 * lo {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cf.h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), (lo0, hi0)))
}

fn budget_lhs(cf: &CostFunctionals, counts: &[u64]) -> f64 {
    let m = cf.m as f64;
    let mut s = cf.lc.c13 * cf.lc.c13 / counts[0] as f64;
    for (ell, &n) in counts.iter().enumerate().skip(1) {
        s += (m + 1.0) / (n as f64 * m.powi(2 * ell as i32 + 1));
    }
    s
}

fn budget_rhs(cf: &CostFunctionals, level: u32) -> f64 {
    let m = cf.m as f64;
    (m + 1.0) / (cf.lc.k1m * m * m * (m - 1.0))
        * (cf.eps * cf.eps / (cf.finf * cf.finf * cf.t * cf.t) - cf.lc.k1_inf * m.powi(-2 * level as i32))
}

/// Chooses `L` from the floor/ceiling candidates around `x*`.
#[allow(clippy::type_complexity)]
pub fn choose_level(cf: &CostFunctionals) -> Result<(u32, Option<f64>, Option<(f64, f64)>)> {
    if cf.discriminant() <= 0.0 {
        return Ok((0, None, None));
    }
    let (x_star, bracket) = h_root(cf)?;
    let m = cf.m as f64;
    let l_real = -x_star.ln() / m.ln();
    let mut best: Option<(u32, f64)> = None;
    for l in [l_real.floor(), l_real.ceil()] {
        let l = l.max(0.0) as u32;
        let x = m.powi(-(l as i32));
        if x >= cf.beta_eps {
            continue;
        }
        let g = cf.g(x)?;
        match best {
            Some((bl, bg)) if g > bg || (g == bg && l >= bl) => {}
            _ => best = Some((l, g)),
        }
    }
    let (l, _) = best.ok_or_else(|| Error::Internal("no feasible level candidate".into()))?;
    Ok((l, Some(x_star), Some(bracket)))
}

pub fn optimal_plan(problem: &ProblemSpec, payoff: &Payoff, m: u32, eps: f64) -> Result<OptimalPlan> {
    let cf = cost_functionals(problem, payoff, m, eps)?;
    optimal_plan_from(&cf)
}

pub fn optimal_plan_from(cf: &CostFunctionals) -> Result<OptimalPlan> {
    let (l, x_star, bracket) = choose_level(cf)?;
    let alloc = cf.allocation(l)?;
    let counts: Vec<u64> = alloc.iter().map(|v| v.ceil().max(1.0) as u64).collect();
    let m = cf.m as f64;
    Ok(OptimalPlan {
        eps: cf.eps,
        m: cf.m,
        l_eps: l,
        n_eps: cf.total_samples(l)?,
        budget_slack: budget_rhs(cf, l) - budget_lhs(cf, &counts),
        allocation_real: alloc,
        counts,
        alpha_param: cf.alpha,
        beta_eps: cf.beta_eps,
        x_star,
        root_bracket: bracket,
        predicted_cost: cf.cost(m.powi(-(l as i32))),
        level_zero_branch: x_star.is_none(),
        eps_out_of_range: cf.eps >= cf.c1(),
    })
}

/// Exhaustive minimization of `Cost(m, m^{-L})` over feasible `L <= max_level`;
/// ties go to the smaller level.
pub fn brute_force_level(cf: &CostFunctionals, max_level: u32) -> Option<u32> {
    let m = cf.m as f64;
    let mut best: Option<(u32, f64)> = None;
    for l in 0..=max_level {
        let x = m.powi(-(l as i32));
        if x >= cf.beta_eps {
            continue;
        }
        let c = cf.cost(x);
        if best.is_none_or(|(_, bc)| c < bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, _)| l)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoostedPlan {
    pub beta: f64,
    pub base: OptimalPlan,
    #[serde(rename = "N_l")]
    pub counts: Vec<u64>,
    pub cost: f64,
    pub cost_ratio: f64,
}

impl BoostedPlan {
    pub fn level_plan(&self) -> LevelPlan {
        LevelPlan {
            m: self.base.m,
            counts: self.counts.clone(),
        }
    }
}

/// `N_ℓ m^{(ℓ-1)/2} / min(m^{(ℓ-1)/2}, ℓ^β)` on top of the optimal allocation.
pub fn boosted_plan(problem: &ProblemSpec, payoff: &Payoff, m: u32, eps: f64, beta: f64) -> Result<BoostedPlan> {
    let cf = cost_functionals(problem, payoff, m, eps)?;
    boosted_plan_from(&cf, beta)
}

pub fn boost_factor(m: u32, level: u32, beta: f64) -> f64 {
    let a = (m as f64).powf((level as f64 - 1.0) / 2.0);
    a / a.min((level as f64).powf(beta))
}

pub fn boosted_plan_from(cf: &CostFunctionals, beta: f64) -> Result<BoostedPlan> {
    if !(beta > 1.0) {
        return Err(invalid("beta", "must be > 1"));
    }
    let base = optimal_plan_from(cf)?;
    let mut counts = base.counts.clone();
    for (ell, c) in counts.iter_mut().enumerate().skip(1) {
        let boosted = base.allocation_real[ell] * boost_factor(cf.m, ell as u32, beta);
        *c = boosted.ceil().max(1.0) as u64;
    }
    let plan = LevelPlan::new(cf.m, counts.clone())?;
    let cost = plan.cost();
    let cost_ratio = cost / base.level_plan().cost();
    Ok(BoostedPlan {
        beta,
        base,
        counts,
        cost,
        cost_ratio,
    })
}
