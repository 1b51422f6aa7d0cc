//! Explicit constants and thresholds of the strong-error, MGF, concentration
//! and Orlicz estimates.
//!
//! Everything is expressed through the ratios `r1 = (m-1)/m` and
//! `r2 = (2m-1)/m`, which take the values 1 and 2 when `m` is infinite.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

use crate::error::{guard, invalid, Error, Result};
use crate::model::{Payoff, ProblemSpec};
use crate::quadrature::{integrate, Tolerance};

/// Refinement factor `m`, possibly infinite (comparison against the exact
/// solution).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelFactor {
    Finite(u32),
    Infinite,
}

impl LevelFactor {
    pub fn finite(m: u32) -> Result<Self> {
        if m < 2 {
            return Err(invalid("m", format!("must be >= 2, got {m}")));
        }
        Ok(Self::Finite(m))
    }

    /// `(m-1)/m`.
    pub fn r1(self) -> f64 {
        match self {
            Self::Finite(m) => (m as f64 - 1.0) / m as f64,
            Self::Infinite => 1.0,
        }
    }

    /// `(2m-1)/m`.
    pub fn r2(self) -> f64 {
        match self {
            Self::Finite(m) => (2.0 * m as f64 - 1.0) / m as f64,
            Self::Infinite => 2.0,
        }
    }

    pub fn value(self) -> Option<u32> {
        match self {
            Self::Finite(m) => Some(m),
            Self::Infinite => None,
        }
    }

    fn require_finite(self) -> Result<f64> {
        match self {
            Self::Finite(m) => Ok(m as f64),
            Self::Infinite => Err(invalid("m", "a finite refinement factor is required")),
        }
    }
}

/// Default cap applied to `rho_42`, which grows like `1/[b̈]²`.
pub const DEFAULT_RHO42_CAP: f64 = 1e12;
pub const DEFAULT_SUP_GRID: usize = 4096;

#[derive(Debug, Clone, Copy)]
pub struct ConstantsOptions {
    pub rho42_cap: f64,
    pub sup_grid: usize,
    pub tolerance: Tolerance,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        Self {
            rho42_cap: DEFAULT_RHO42_CAP,
            sup_grid: DEFAULT_SUP_GRID,
            tolerance: Tolerance::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongErrorConstants {
    #[serde(rename = "C_9")]
    pub c9: f64,
    #[serde(rename = "K_1m")]
    pub k1m: f64,
    #[serde(rename = "K_2m")]
    pub k2m: f64,
    #[serde(rename = "C_31")]
    pub c_maju2: f64,
}

/// `∫_0^T e^{b(T-t)} √t dt`.
fn exp_sqrt_integral(bd: f64, t: f64, tol: Tolerance) -> Result<f64> {
    Ok(integrate(|s| (bd * (t - s)).exp() * s.sqrt(), 0.0, t, tol)?.value)
}

pub fn strong_error_constants(problem: &ProblemSpec, m: LevelFactor) -> Result<StrongErrorConstants> {
    strong_error_constants_with(problem, m, Tolerance::default())
}

fn strong_error_constants_with(
    problem: &ProblemSpec,
    m: LevelFactor,
    tol: Tolerance,
) -> Result<StrongErrorConstants> {
    let c = problem.drift.constants;
    let (bd, a, t, b0) = (c.lip_grad, c.lap_growth, problem.t, problem.b_at_x0);
    let d = problem.d as f64;
    let (r1, r2) = (m.r1(), m.r2());
    let c9 = guard("C_9", t.sqrt() + bd * exp_sqrt_integral(bd, t, tol)?)?;
    let ebt = guard("C_31", (bd * t).exp())?;
    let bt = bd * t;
    // bdT - 1 + e^{-bdT}, accurate for small bdT.
    let tail = bt + (-bt).exp_m1();
    let inner = b0 / 2.0 * (a * tail / (bd * bd) + bt)
        + a * (-(-bt).exp_m1()) / bd
        + 2.0 / 3.0 * d.sqrt() * (bd * bd + a) * t.powf(1.5);
    let common = ebt * r1.sqrt() * inner;
    let coef = bd * (d * r2 / 6.0).sqrt();
    let sqrt_k1 = c9 * coef + common;
    let sqrt_k2 = (c9 + t.sqrt()) * coef + common;
    Ok(StrongErrorConstants {
        c9,
        k1m: guard("K_1m", sqrt_k1 * sqrt_k1)?,
        k2m: guard("K_2m", sqrt_k2 * sqrt_k2)?,
        c_maju2: guard("C_31", ebt * (bd * bd + a))?,
    })
}

/// Constants of the MGF estimates for the max-gap and for the Malliavin gap,
/// with evaluators for the time-dependent quantities.
#[derive(Debug, Clone)]
pub struct CnConstants {
    pub m: LevelFactor,
    pub d: f64,
    pub t: f64,
    pub bd: f64,
    pub lap_growth: f64,
    pub bdd: f64,
    pub grad_lap_growth: f64,
    pub b0: f64,
    pub strong: StrongErrorConstants,
    /// `C_9 bd √(3 d r2) + C_31 T^{3/2} √(2 r1)`.
    pub s17: f64,
    pub rho17: f64,
    pub c_maj_du3: f64,
    pub rho41: f64,
    pub rho42: f64,
    /// Uncapped value, reported for transparency.
    pub rho42_raw: f64,
    pub c_dub2: f64,
    /// `C_18(0)`, cached.
    pub c18_zero: f64,
    tol: Tolerance,
}

pub fn cn_constants(problem: &ProblemSpec, m: LevelFactor) -> Result<CnConstants> {
    CnConstants::new(problem, m, ConstantsOptions::default())
}

impl CnConstants {
    pub fn new(problem: &ProblemSpec, m: LevelFactor, opts: ConstantsOptions) -> Result<Self> {
        let c = problem.drift.constants;
        let strong = strong_error_constants_with(problem, m, opts.tolerance)?;
        let (bd, t) = (c.lip_grad, problem.t);
        let d = problem.d as f64;
        let (r1, r2) = (m.r1(), m.r2());
        let s17 = strong.c9 * bd * (3.0 * d * r2).sqrt() + strong.c_maju2 * t.powf(1.5) * (2.0 * r1).sqrt();
        let rho17 = guard("rho_17", 9.0 / (4.0 * t * t * r1 * s17 * s17))?;
        let c_maj_du3 = (d.sqrt() * bd * c.hess_bound).max(bd * bd) + c.grad_lap_growth;
        let rho41 = guard(
            "rho_41",
            1.0 / (2.0 * c_maj_du3 * c_maj_du3 * t * t * r1 * r1),
        )?;
        let rho42_raw = 3.0 / (4.0 * t * t * d * c.hess_bound * c.hess_bound * r2 * r1);
        if !(opts.rho42_cap > 0.0) {
            return Err(invalid("rho42_cap", "must be > 0"));
        }
        let rho42 = rho42_raw.min(opts.rho42_cap);
        let c_dub2 = 2.0 / 3.0 * LN_2 * d * c.hess_bound * c.hess_bound * r2;
        let mut out = Self {
            m,
            d,
            t,
            bd,
            lap_growth: c.lap_growth,
            bdd: c.hess_bound,
            grad_lap_growth: c.grad_lap_growth,
            b0: problem.b_at_x0,
            strong,
            s17,
            rho17,
            c_maj_du3,
            rho41,
            rho42,
            rho42_raw,
            c_dub2,
            c18_zero: 0.0,
            tol: opts.tolerance,
        };
        out.c18_zero = out.c18(0.0)?;
        Ok(out)
    }

    /// Largest admissible `ρ` for the max-gap MGF bound with `n` coarse steps.
    pub fn rho_max(&self, n: u64) -> f64 {
        self.rho17 * (n as f64) * (n as f64)
    }

    /// `C_18(x)`.
    pub fn c18(&self, x: f64) -> Result<f64> {
        let (bd, t, d) = (self.bd, self.t, self.d);
        let (r1, r2) = (self.m.r1(), self.m.r2());
        let c31 = self.strong.c_maju2;
        let x_tilde = bd * (-bd * t).exp() * x / (bd * bd + self.lap_growth);
        let z = self.b0 + bd + x_tilde;
        let bracket = (3.0 * d + 1.0) * z * z / (4.0 * bd * bd)
            + 4.0 * d * t.sqrt() * z / (3.0 * PI.sqrt() * bd)
            + 4.0 * d * t * LN_2 / 9.0;
        let second = self.strong.c9 * bd * (2.0 * LN_2 / (3.0 * 3f64.sqrt())) * (d * r2).sqrt()
            + c31 * (r1 * t / 2.0).sqrt() * bracket;
        guard("C_18", self.s17 * second)
    }

    fn check_r(&self, r: f64) -> Result<()> {
        if r.is_nan() || r < 0.0 || r >= self.t {
            return Err(Error::TimeOutOfRange { r, horizon: self.t });
        }
        Ok(())
    }

    pub fn phi1(&self, r: f64) -> Result<f64> {
        self.check_r(r)?;
        Ok(self.d.sqrt() * self.bdd / self.bd * (self.bd * (self.t - r)).exp_m1())
    }

    /// `∫_r^T e^{bd s} √s ds`.
    pub fn phi2(&self, r: f64) -> Result<f64> {
        self.check_r(r)?;
        let bd = self.bd;
        let v = integrate(|s| (bd * s).exp() * s.sqrt(), r, self.t, self.tol)?.value;
        guard("Phi2", v)
    }

    /// Closed form; the integral term equals `(atanh V - V)/bd` with
    /// `V = √(1 - e^{-2 bd (T-r)})`.
    pub fn phi3(&self, r: f64) -> Result<f64> {
        self.check_r(r)?;
        let bd = self.bd;
        let tau = self.t - r;
        let v2 = -(-2.0 * bd * tau).exp_m1();
        let v = v2.sqrt();
        // atanh V = ln(1 + V) + bd τ since 1 - V² = e^{-2 bd τ}.
        let atanh_minus_v = if v < 1e-3 {
            // Series: V³/3 + V⁵/5 + V⁷/7.
            let v3 = v * v2;
            v3 / 3.0 + v3 * v2 / 5.0 + v3 * v2 * v2 / 7.0
        } else {
            v.ln_1p() + bd * tau - v
        };
        Ok((v2 / (2.0 * bd)).sqrt() + (bd / 2.0).sqrt() * atanh_minus_v / bd)
    }

    /// `1/√ρ̂(r) = Φ1/√ρ17 + Φ2/√ρ41 + Φ3/√ρ42`, with the three terms.
    fn inv_sqrt_rho_hat(&self, r: f64) -> Result<Parts> {
        let (p1, p2, p3) = (self.phi1(r)?, self.phi2(r)?, self.phi3(r)?);
        let sum = p1 / self.rho17.sqrt() + p2 / self.rho41.sqrt() + p3 / self.rho42.sqrt();
        Ok(Parts { p1, p2, p3, sum })
    }

    pub fn rho_hat(&self, r: f64) -> Result<f64> {
        let s = self.inv_sqrt_rho_hat(r)?.sum;
        guard("rho_hat", 1.0 / (s * s))
    }

    /// Small `φ2(r, x)`.
    pub fn phi2_small(&self, r: f64, x: f64) -> Result<f64> {
        let p2 = self.phi2(r)?;
        Ok(self.phi2_small_with(r, x, p2))
    }

    fn phi2_small_with(&self, r: f64, x: f64, p2: f64) -> f64 {
        let (bd, d, c) = (self.bd, self.d, self.c_maj_du3);
        let y = c * (self.b0 + bd) / (2.0 * bd * bd) * ((bd * self.t).exp() - (bd * r).exp()) + x;
        self.m.r1()
            * ((3.0 * d + 1.0) * y * y
                + 4.0 * d * c * p2 * y / PI.sqrt()
                + d * LN_2 * c * c * p2 * p2)
    }

    /// `Φ(r, x)`, rearranged as `(1/√ρ̂)(√ρ42 Φ3 C_DUB2 + √ρ41 φ2/Φ2 + √ρ17 Φ1 C_18(0))`.
    pub fn big_phi(&self, r: f64, x: f64) -> Result<f64> {
        let parts = self.inv_sqrt_rho_hat(r)?;
        guard("Phi", parts.sum * self.big_phi_inner(r, x, &parts))
    }

    /// `Φ(r, x) √ρ̂(r)`, finite as `r → T`.
    fn big_phi_inner(&self, r: f64, x: f64, parts: &Parts) -> f64 {
        let small = self.phi2_small_with(r, x, parts.p2);
        let ratio = if parts.p2 > 0.0 { small / parts.p2 } else { 0.0 };
        self.rho42.sqrt() * parts.p3 * self.c_dub2
            + self.rho41.sqrt() * ratio
            + self.rho17.sqrt() * parts.p1 * self.c18_zero
    }

    /// Largest admissible `ρ` for the Malliavin-gap MGF bound at time `r`.
    pub fn malliavin_threshold(&self, r: f64, n: u64) -> Result<f64> {
        let rh = self.rho_hat(r)?;
        Ok((-2.0 * self.bd * (self.t - r)).exp() * rh * (n as f64) * (n as f64))
    }

    /// Right-hand side of the Malliavin-gap MGF bound.
    pub fn malliavin_mgf_bound(&self, r: f64, n: u64, rho: f64) -> Result<f64> {
        let phi = self.big_phi(r, self.bd)?;
        let n = n as f64;
        Ok((rho * (2.0 * self.bd * (self.t - r)).exp() * phi * self.m.r1() * self.t * self.t / (n * n)).exp())
    }

    /// Right-hand side of the max-gap MGF bound at shift `x`.
    pub fn max_gap_mgf_bound(&self, n: u64, rho: f64, x: f64) -> Result<f64> {
        let n = n as f64;
        Ok((rho * self.c18(x)? * self.m.r1() * self.t * self.t / (n * n)).exp())
    }
}

struct Parts {
    p1: f64,
    p2: f64,
    p3: f64,
    sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorMgfConstants {
    #[serde(rename = "C_50")]
    pub c50: f64,
    /// `None` for infinite `m`, where the admissible range degenerates.
    #[serde(rename = "script_C")]
    pub script_c: Option<f64>,
    /// `∫_0^T e^{2 bd (T-t)} (√ρ17/√ρ̂(t) + [ḟ]_lip/[ḟ]_∞)² dt`.
    pub integral: f64,
    pub sup: f64,
    pub sup_argmax: f64,
}

pub fn estimator_mgf_constants(
    problem: &ProblemSpec,
    payoff: &Payoff,
    m: LevelFactor,
) -> Result<EstimatorMgfConstants> {
    let cn = cn_constants(problem, m)?;
    cn.estimator_mgf(payoff, DEFAULT_SUP_GRID)
}

impl CnConstants {
    pub fn estimator_mgf(&self, payoff: &Payoff, sup_grid: usize) -> Result<EstimatorMgfConstants> {
        if sup_grid < 3 {
            return Err(invalid("sup_grid", "need at least 3 points"));
        }
        let (finf, flip) = (payoff.lip, payoff.grad_lip);
        let q = flip / finf;
        let (t, bd) = (self.t, self.bd);
        let sqrt_rho17 = self.rho17.sqrt();

        // Quadrature error inside the integrand surfaces as NaN and then as a
        // quadrature failure of the outer integral.
        let integrand = |s: f64| {
            if s >= t {
                return q * q;
            }
            match self.inv_sqrt_rho_hat(s) {
                Ok(p) => {
                    let w = sqrt_rho17 * p.sum + q;
                    (2.0 * bd * (t - s)).exp() * w * w
                }
                Err(_) => f64::NAN,
            }
        };
        let integral = guard("C_50", integrate(integrand, 0.0, t, self.tol)?.value)?;

        let x_star = 2.0 * bd * finf / (t * flip);
        let c18_star = self.c18(x_star)?;
        let ratio = |r: f64| -> Result<f64> {
            let p = self.inv_sqrt_rho_hat(r)?;
            let inner = self.big_phi_inner(r, 0.0, &p);
            Ok((flip * c18_star + finf * inner / sqrt_rho17) / (finf * sqrt_rho17 * p.sum + flip))
        };
        let r_hi = t * (1.0 - (2f64).powi(-20));
        let step = r_hi / (sup_grid - 1) as f64;
        let mut best = (c18_star, t);
        let mut best_idx = None;
        for i in 0..sup_grid {
            let r = step * i as f64;
            let v = ratio(r)?;
            if v > best.0 {
                best = (v, r);
                best_idx = Some(i);
            }
        }
        if let Some(i) = best_idx {
            let lo = step * i.saturating_sub(1) as f64;
            let hi = (step * (i + 1) as f64).min(r_hi);
            let (v, r) = golden_max(&ratio, lo, hi)?;
            if v > best.0 {
                best = (v, r);
            }
        }
        let sup = best.0;
        let c50 = guard("C_50", self.d * t * integral * sup)?;
        let script_c = match self.m {
            LevelFactor::Finite(m) => {
                let m = m as f64;
                Some(guard(
                    "script_C",
                    (self.rho17 / (2.0 * self.d * m * m * t * finf * finf * integral)).sqrt(),
                )?)
            }
            LevelFactor::Infinite => None,
        };
        Ok(EstimatorMgfConstants {
            c50,
            script_c,
            integral,
            sup,
            sup_argmax: best.1,
        })
    }
}

fn golden_max<F: Fn(f64) -> Result<f64>>(f: &F, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..80 {
        if (b - a).abs() <= 1e-14 * (1.0 + b.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc > fd { (fc, c) } else { (fd, d) })
}

/// Deviation and Orlicz constants for a target RMSE `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationConstants {
    pub eps: f64,
    pub beta: f64,
    #[serde(rename = "K_1inf")]
    pub k1_inf: f64,
    #[serde(rename = "C_13")]
    pub c_varconst: f64,
    /// `m (√m - 1) C_13 / (m + 1)`.
    pub theta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    #[serde(rename = "c5_eps")]
    pub c5_of_eps: f64,
    pub c6: f64,
    pub c6p: f64,
    pub c7: f64,
    /// `eps >= c1`: the optimal-parameter statements do not apply.
    pub eps_out_of_range: bool,
}

/// Strong-error constants at `m` and at infinity together, the inputs of the
/// bias and variance bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelConstants {
    pub m: u32,
    #[serde(rename = "K_1m")]
    pub k1m: f64,
    #[serde(rename = "K_1inf")]
    pub k1_inf: f64,
    #[serde(rename = "C_13")]
    pub c13: f64,
    pub theta: f64,
}

impl LevelConstants {
    pub fn new(problem: &ProblemSpec, m: u32) -> Result<Self> {
        let lf = LevelFactor::finite(m)?;
        let k1m = strong_error_constants(problem, lf)?.k1m;
        let k1_inf = strong_error_constants(problem, LevelFactor::Infinite)?.k1m;
        let mf = m as f64;
        let c13 = ((mf + 1.0) / (k1m * (mf - 1.0) * problem.t)).sqrt() / mf;
        let theta = mf * (mf.sqrt() - 1.0) * c13 / (mf + 1.0);
        Ok(Self {
            m,
            k1m,
            k1_inf,
            c13,
            theta,
        })
    }
}

pub fn deviation_constants(
    problem: &ProblemSpec,
    payoff: &Payoff,
    m: u32,
    eps: f64,
    beta: f64,
) -> Result<DeviationConstants> {
    let cn = cn_constants(problem, LevelFactor::finite(m)?)?;
    let est = cn.estimator_mgf(payoff, DEFAULT_SUP_GRID)?;
    deviation_from(problem, payoff, m, eps, beta, &est)
}

/// Assembles the deviation constants from precomputed estimator constants.
pub fn deviation_from(
    problem: &ProblemSpec,
    payoff: &Payoff,
    m: u32,
    eps: f64,
    beta: f64,
    est: &EstimatorMgfConstants,
) -> Result<DeviationConstants> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid("eps", "must be finite and > 0"));
    }
    if !(beta > 1.0) {
        return Err(invalid("beta", "must be > 1"));
    }
    let lc = LevelConstants::new(problem, m)?;
    let script_c = est
        .script_c
        .ok_or_else(|| invalid("m", "a finite refinement factor is required"))?;
    let mf = LevelFactor::Finite(m).require_finite()?;
    let (finf, t) = (payoff.lip, problem.t);
    let (k1m, k1_inf, c13, theta) = (lc.k1m, lc.k1_inf, lc.c13, lc.theta);
    let bias0 = finf * t * k1_inf.sqrt();
    let ratio = est.c50 / k1m;

    let c1 = bias0 * (1.0 + 2.0 * theta).sqrt();
    let c2 = script_c * finf * finf * t
        / (2f64.powf(1.0 / 3.0) * c13 * mf.sqrt() * bias0.powf(2.0 / 3.0) * (1.0 + theta).powf(1.0 / 3.0));
    let c3 = (8.0 * ratio).max(4.0);
    let env = (1.0 + theta).powf(1.0 / 3.0) / 2f64.powf(2.0 / 3.0)
        + (1.0 + 2.0 * theta).powf(1.0 / 3.0) / (1.0 + 4.0 * theta);
    let c4 = 2.0 / c3 * (mf / ((1.0 + theta) * bias0.powf(1.0 / 3.0)) * env).powi(2);
    let log_arg = finf * t * (2.0 * k1_inf * (1.0 + theta)).sqrt() / eps;
    let c5 = script_c * finf * finf * t / (c13 * mf.sqrt())
        * (1.0 + 4.0 / (3.0 * mf.ln()) * log_arg.ln()).powf(-beta);
    let c6 = ((3.0 + 3f64.sqrt()) / 4.0 * (2.0 * ratio).max(1.0)).sqrt();
    let c6p = ratio.min(0.5).sqrt();
    let c7 = script_c * c13 * k1m * mf.powf(1.5) * (mf - 1.0) * (finf * t).powf(4.0 / 3.0)
        / (2f64.powf(1.0 / 3.0) * (mf + 1.0) * k1_inf.powf(1.0 / 3.0) * (1.0 + theta).powf(1.0 / 3.0));
    Ok(DeviationConstants {
        eps,
        beta,
        k1_inf,
        c_varconst: c13,
        theta,
        c1: guard("c1", c1)?,
        c2: guard("c2", c2)?,
        c3: guard("c3", c3)?,
        c4: guard("c4", c4)?,
        c5_of_eps: guard("c5", c5)?,
        c6: guard("c6", c6)?,
        c6p: guard("c6p", c6p)?,
        c7: guard("c7", c7)?,
        eps_out_of_range: eps >= c1,
    })
}

/// `C_22(L) = (T [ḟ]²/(2 m^L)) Σ_{k=1}^{m^L} e^{2 bd (T - T k/m^L)}`, summed in
/// closed form.
pub fn c22(problem: &ProblemSpec, payoff: &Payoff, m: u32, level: u32) -> Result<f64> {
    let bd = problem.drift.constants.lip_grad;
    let t = problem.t;
    let big_m = (m as f64).powi(level as i32);
    let a = 2.0 * bd * t;
    // Σ_{k=1}^{M} e^{a(1 - k/M)} = Σ_{j=0}^{M-1} e^{a j/M} = expm1(a)/expm1(a/M).
    let sum = if a / big_m == 0.0 {
        big_m
    } else {
        a.exp_m1() / (a / big_m).exp_m1()
    };
    guard("C_22", t * payoff.lip * payoff.lip / (2.0 * big_m) * sum)
}

/// The full set of constants keyed by their labels.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsBundle {
    pub m: LevelFactor,
    #[serde(rename = "C_9")]
    pub c9: f64,
    #[serde(rename = "K_1m")]
    pub k1m: f64,
    #[serde(rename = "K_2m")]
    pub k2m: f64,
    #[serde(rename = "K_1inf")]
    pub k1_inf: f64,
    #[serde(rename = "C_31")]
    pub c_maju2: f64,
    pub rho_17: f64,
    #[serde(rename = "C_18_at_0")]
    pub c18_zero: f64,
    #[serde(rename = "C_39")]
    pub c_maj_du3: f64,
    pub rho_41: f64,
    pub rho_42: f64,
    pub rho_42_uncapped: f64,
    #[serde(rename = "C_42")]
    pub c_dub2: f64,
    #[serde(rename = "Phi1_at_0")]
    pub phi1_zero: f64,
    #[serde(rename = "Phi2_at_0")]
    pub phi2_zero: f64,
    #[serde(rename = "Phi3_at_0")]
    pub phi3_zero: f64,
    pub rho_hat_at_0: f64,
    #[serde(flatten)]
    pub estimator: Option<EstimatorMgfConstants>,
    #[serde(rename = "C_22_at_0")]
    pub c22_zero: Option<f64>,
    pub deviation: Option<DeviationConstants>,
}

pub fn constants_bundle(
    problem: &ProblemSpec,
    payoff: &Payoff,
    m: LevelFactor,
    eps_beta: Option<(f64, f64)>,
    opts: ConstantsOptions,
) -> Result<ConstantsBundle> {
    let cn = CnConstants::new(problem, m, opts)?;
    let k1_inf = strong_error_constants(problem, LevelFactor::Infinite)?.k1m;
    let est = cn.estimator_mgf(payoff, opts.sup_grid)?;
    let (c22_zero, deviation) = match (m, eps_beta) {
        (LevelFactor::Finite(mm), Some((eps, beta))) => (
            Some(c22(problem, payoff, mm, 0)?),
            Some(deviation_from(problem, payoff, mm, eps, beta, &est)?),
        ),
        (LevelFactor::Finite(mm), None) => (Some(c22(problem, payoff, mm, 0)?), None),
        (LevelFactor::Infinite, _) => (None, None),
    };
    Ok(ConstantsBundle {
        m,
        c9: cn.strong.c9,
        k1m: cn.strong.k1m,
        k2m: cn.strong.k2m,
        k1_inf,
        c_maju2: cn.strong.c_maju2,
        rho_17: cn.rho17,
        c18_zero: cn.c18_zero,
        c_maj_du3: cn.c_maj_du3,
        rho_41: cn.rho41,
        rho_42: cn.rho42,
        rho_42_uncapped: cn.rho42_raw,
        c_dub2: cn.c_dub2,
        phi1_zero: cn.phi1(0.0)?,
        phi2_zero: cn.phi2(0.0)?,
        phi3_zero: cn.phi3(0.0)?,
        rho_hat_at_0: cn.rho_hat(0.0)?,
        estimator: Some(est),
        c22_zero,
        deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriftModel, Payoff};
    use proptest::prelude::*;
    use statrs::function::gamma::gamma_li;

    fn unit() -> ProblemSpec {
        ProblemSpec::ou(0.0, 1.0).unwrap()
    }

    /// Unit setting with `[b̈] = 1`, used where the Hessian bound matters.
    fn unit_bdd() -> ProblemSpec {
        let drift = DriftModel::linear_decay(1.0, 1).unwrap().with_hess_bound(1.0).unwrap();
        ProblemSpec::new(vec![0.0], 1.0, drift).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    // e γ(3/2, 1) = ∫_0^1 e^{1-t} √t dt.
    fn gamma_oracle() -> f64 {
        std::f64::consts::E * gamma_li(1.5, 1.0)
    }

    #[test]
    fn c9_matches_incomplete_gamma() {
        let s = strong_error_constants(&unit(), LevelFactor::Infinite).unwrap();
        assert!((s.c9 - (1.0 + gamma_oracle())).abs() < 1e-9);
        assert!((s.c9 - 2.0301).abs() < 1e-4);
    }

    // Independent transcription with literal m in place of the ratios.
    fn sqrt_k1_oracle(c9: f64, m: Option<f64>) -> f64 {
        let e = std::f64::consts::E;
        let (a, b) = match m {
            Some(m) => ((2.0 * m - 1.0) / (6.0 * m), (m - 1.0) / m),
            None => (2.0 / 6.0, 1.0),
        };
        c9 * a.sqrt() + e * b.sqrt() * (2.0 / 3.0)
    }

    #[test]
    fn k1_unit_values() {
        let inf = strong_error_constants(&unit(), LevelFactor::Infinite).unwrap();
        let two = strong_error_constants(&unit(), LevelFactor::Finite(2)).unwrap();
        assert!((inf.k1m.sqrt() - 2.9843).abs() < 1e-4);
        assert!((inf.k1m - 8.906).abs() < 1e-3);
        assert!((two.k1m.sqrt() - 2.2964).abs() < 1e-4);
        assert!((two.k1m - 5.274).abs() < 1e-3);
        assert!(rel(inf.k1m.sqrt(), sqrt_k1_oracle(inf.c9, None)) < 1e-14);
        assert!(rel(two.k1m.sqrt(), sqrt_k1_oracle(two.c9, Some(2.0))) < 1e-14);
        // K2 adds √T to C_9 in the first term only.
        let expected = two.k1m.sqrt() + 1.0 * (3.0f64 / 12.0).sqrt();
        assert!(rel(two.k2m.sqrt(), expected) < 1e-14);
    }

    #[test]
    fn k1_with_nonzero_drift_at_x0() {
        // bd = 1, a = 0.5, b0 = 2, T = 1, d = 1, m = inf.
        let drift = DriftModel::linear_decay(1.0, 1).unwrap().with_lap_growth(0.5).unwrap();
        let p = ProblemSpec::new(vec![-2.0], 1.0, drift).unwrap();
        let s = strong_error_constants(&p, LevelFactor::Infinite).unwrap();
        let e = std::f64::consts::E;
        let inner = 1.0 * (0.5 * (1.0 / e) + 1.0) + 0.5 * (1.0 - 1.0 / e) + 2.0 / 3.0 * 1.5;
        let expected = s.c9 * (1.0f64 / 3.0).sqrt() + e * inner;
        assert!(rel(s.k1m.sqrt(), expected) < 1e-14);
    }

    #[test]
    fn rho17_unit_value_and_n_scaling() {
        let cn = cn_constants(&unit(), LevelFactor::Infinite).unwrap();
        let c9 = 1.0 + gamma_oracle();
        let e = std::f64::consts::E;
        let oracle = 9.0 / (4.0 * (c9 * 6f64.sqrt() + e * 2f64.sqrt()).powi(2));
        assert!(rel(cn.rho_max(1), oracle) < 1e-9);
        assert!((cn.rho_max(1) - 0.0289).abs() < 1e-4);
        for n in [1u64, 3, 16] {
            assert_eq!(cn.rho_max(2 * n), 4.0 * cn.rho_max(n));
        }
    }

    #[test]
    fn c18_increasing() {
        let cn = cn_constants(&unit(), LevelFactor::Finite(2)).unwrap();
        let mut prev = cn.c18(0.0).unwrap();
        for x in [0.1, 1.0, 10.0] {
            let v = cn.c18(x).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn phi_values_and_limits() {
        let cn = cn_constants(&unit_bdd(), LevelFactor::Finite(2)).unwrap();
        assert!((cn.phi1(0.0).unwrap() - (std::f64::consts::E - 1.0)).abs() < 1e-14);
        // ∫_0^1 e^s √s ds = Σ_k 1/(k! (k + 3/2)); this is not the C_9 integral,
        // whose weight is e^{1-s}.
        let series: f64 = (0..30)
            .scan(1.0, |fact, k| {
                if k > 0 {
                    *fact *= k as f64;
                }
                Some(1.0 / (*fact * (k as f64 + 1.5)))
            })
            .sum();
        assert!((cn.phi2(0.0).unwrap() - series).abs() < 1e-8);
        assert!((cn.phi2(0.0).unwrap() - 1.2556).abs() < 1e-4);
        let r = 1.0 - 1e-9;
        assert!(cn.phi1(r).unwrap() < 1e-8);
        assert!(cn.phi2(r).unwrap() < 1e-8);
        assert!(cn.phi3(r).unwrap() < 1e-4);
        assert!(matches!(cn.phi1(1.0), Err(Error::TimeOutOfRange { .. })));
        assert!(cn.rho_hat(r).unwrap() > cn.rho_hat(0.5).unwrap());
    }

    #[test]
    fn phi3_closed_form_matches_quadrature() {
        for bd in [0.01, 1.0, 7.5] {
            let drift = DriftModel::linear_decay(bd, 1).unwrap();
            let p = ProblemSpec::new(vec![0.0], 2.0, drift).unwrap();
            let cn = cn_constants(&p, LevelFactor::Finite(2)).unwrap();
            for r in [0.0, 0.7, 1.9, 2.0 - 1e-6] {
                let int = integrate(
                    |t| (-(-2.0 * bd * (t - r)).exp_m1()).sqrt(),
                    r,
                    2.0,
                    Tolerance::default(),
                )
                .unwrap()
                .value;
                let oracle = (-(-2.0 * bd * (2.0 - r)).exp_m1() / (2.0 * bd)).sqrt()
                    + (bd / 2.0).sqrt() * int;
                assert!(rel(cn.phi3(r).unwrap(), oracle) < 1e-9, "bd={bd} r={r}");
            }
        }
    }

    #[test]
    fn c22_level_zero_and_direct_sum() {
        let p = unit();
        let f = Payoff::linear(vec![1.0], 1.0).unwrap();
        assert!((c22(&p, &f, 2, 0).unwrap() - 0.5).abs() < 1e-15);
        let direct: f64 = (1..=8).map(|k| (2.0 * (1.0 - k as f64 / 8.0)).exp()).sum::<f64>() / 16.0;
        assert!(rel(c22(&p, &f, 2, 3).unwrap(), direct) < 1e-13);
    }

    #[test]
    fn script_c_halves_when_payoff_doubles() {
        let p = unit_bdd();
        let f = Payoff::linear(vec![1.0], 1.0).unwrap();
        let a = estimator_mgf_constants(&p, &f, LevelFactor::Finite(2)).unwrap();
        let b = estimator_mgf_constants(&p, &f.scaled(2.0).unwrap(), LevelFactor::Finite(2)).unwrap();
        assert!(rel(b.script_c.unwrap(), a.script_c.unwrap() / 2.0) < 1e-10);
        assert!(rel(a.c50, b.c50) < 1e-10);
    }

    #[test]
    fn c50_grid_convergence() {
        let p = unit_bdd();
        let f = Payoff::linear(vec![1.0], 1.0).unwrap();
        let cn = cn_constants(&p, LevelFactor::Finite(2)).unwrap();
        let a = cn.estimator_mgf(&f, 2000).unwrap().c50;
        let b = cn.estimator_mgf(&f, 4000).unwrap().c50;
        assert!(rel(a, b) < 1e-4);
    }

    #[test]
    fn large_m_approaches_infinite_m() {
        let p = unit_bdd();
        let f = Payoff::linear(vec![1.0], 1.0).unwrap();
        let inf = cn_constants(&p, LevelFactor::Infinite).unwrap();
        let big = cn_constants(&p, LevelFactor::Finite(1_000_000)).unwrap();
        let m64 = cn_constants(&p, LevelFactor::Finite(64)).unwrap();
        let pairs = |a: &CnConstants, b: &CnConstants| {
            vec![
                (a.strong.k1m, b.strong.k1m),
                (a.strong.k2m, b.strong.k2m),
                (a.rho17, b.rho17),
                (a.rho41, b.rho41),
                (a.rho42, b.rho42),
                (a.c_dub2, b.c_dub2),
                (a.c18_zero, b.c18_zero),
                (a.rho_hat(0.3).unwrap(), b.rho_hat(0.3).unwrap()),
                (a.big_phi(0.3, 1.0).unwrap(), b.big_phi(0.3, 1.0).unwrap()),
            ]
        };
        for (x, y) in pairs(&big, &inf) {
            assert!(rel(x, y) < 1e-4, "{x} vs {y}");
        }
        for (x, y) in pairs(&m64, &inf) {
            assert!(rel(x, y) < 0.05, "{x} vs {y}");
        }
        let c_inf = inf.estimator_mgf(&f, 512).unwrap().c50;
        assert!(rel(big.estimator_mgf(&f, 512).unwrap().c50, c_inf) < 1e-4);
        assert!(rel(m64.estimator_mgf(&f, 512).unwrap().c50, c_inf) < 0.05);
    }

    #[test]
    fn c3_floor_is_exactly_four() {
        let p = unit_bdd();
        let f = Payoff::linear(vec![1.0], 1.0).unwrap();
        let mut est = estimator_mgf_constants(&p, &f, LevelFactor::Finite(2)).unwrap();
        let k1m = strong_error_constants(&p, LevelFactor::Finite(2)).unwrap().k1m;
        est.c50 = 0.25 * k1m;
        let dc = deviation_from(&p, &f, 2, 0.1, 1.5, &est).unwrap();
        assert_eq!(dc.c3, 4.0);
        assert_eq!(dc.c6p, 0.5f64.sqrt().min(0.25f64.sqrt()));
    }

    #[test]
    fn c5_decreases_like_log_power() {
        let p = unit_bdd();
        let f = Payoff::linear(vec![1.0], 1.0).unwrap();
        let est = estimator_mgf_constants(&p, &f, LevelFactor::Finite(2)).unwrap();
        let beta = 1.5;
        let eps = [1e-1, 1e-2, 1e-3];
        let c5: Vec<f64> = eps
            .iter()
            .map(|&e| deviation_from(&p, &f, 2, e, beta, &est).unwrap().c5_of_eps)
            .collect();
        assert!(c5[0] > c5[1] && c5[1] > c5[2]);
        // Local log-log slope against ln(1/ε) tends to -β.
        let far = [1e-30, 1e-60];
        let v: Vec<f64> = far
            .iter()
            .map(|&e| deviation_from(&p, &f, 2, e, beta, &est).unwrap().c5_of_eps)
            .collect();
        let slope = (v[1].ln() - v[0].ln()) / ((1.0 / far[1]).ln().ln() - (1.0 / far[0]).ln().ln());
        assert!((slope + beta).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn deviation_requires_finite_m_script_c() {
        let p = unit_bdd();
        let f = Payoff::linear(vec![1.0], 1.0).unwrap();
        let est = estimator_mgf_constants(&p, &f, LevelFactor::Infinite).unwrap();
        assert!(est.script_c.is_none());
        assert!(deviation_from(&p, &f, 2, 0.1, 1.5, &est).is_err());
    }

    #[test]
    fn overflow_reported_as_range_error() {
        let drift = DriftModel::linear_decay(400.0, 1).unwrap();
        let p = ProblemSpec::new(vec![0.0], 2.0, drift).unwrap();
        let err = strong_error_constants(&p, LevelFactor::Finite(2)).unwrap_err();
        assert!(matches!(err, Error::Range { .. } | Error::Quadrature { .. }), "{err:?}");
    }

    #[test]
    fn rho42_capped() {
        let cn = cn_constants(&unit(), LevelFactor::Finite(2)).unwrap();
        assert_eq!(cn.rho42, DEFAULT_RHO42_CAP);
        assert!(cn.rho42_raw > DEFAULT_RHO42_CAP);
    }

    fn sine_problem(amp: f64, d: usize, t: f64) -> ProblemSpec {
        ProblemSpec::new(vec![0.3; d], t, DriftModel::smooth_sine(amp, d).unwrap()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn rho_hat_identity(frac in 0.0f64..0.999, amp in 0.2f64..2.0, t in 0.3f64..2.0, d in 1usize..4, m in 2u32..9) {
            let p = sine_problem(amp, d, t);
            let cn = cn_constants(&p, LevelFactor::Finite(m)).unwrap();
            let r = frac * t;
            let a = cn.rho17.sqrt() / cn.phi1(r).unwrap();
            let b = cn.rho41.sqrt() / cn.phi2(r).unwrap();
            let c = cn.rho42.sqrt() / cn.phi3(r).unwrap();
            let product = (a * b * c).powi(2);
            let pairs = a * b + a * c + b * c;
            let rh = cn.rho_hat(r).unwrap();
            prop_assert!(rel(rh * pairs * pairs, product) < 1e-12);
            // Φ(r, x) in the original pairwise form.
            let x = 0.7;
            let phi = pairs * (cn.phi3(r).unwrap().powi(2) * cn.c_dub2 / (a * b)
                + cn.phi2_small(r, x).unwrap() / (a * c)
                + cn.phi1(r).unwrap().powi(2) * cn.c18_zero / (b * c));
            prop_assert!(rel(cn.big_phi(r, x).unwrap(), phi) < 1e-12);
        }

        #[test]
        fn rho_max_monotone(t1 in 0.2f64..2.0, dt in 0.0f64..1.0, b1 in 0.2f64..2.0, db in 0.0f64..1.0, d in 1usize..4) {
            let rho = |amp: f64, dim: usize, t: f64| {
                cn_constants(&sine_problem(amp, dim, t), LevelFactor::Finite(2)).unwrap().rho17
            };
            let base = rho(b1, d, t1);
            prop_assert!(rho(b1, d, t1 + dt) <= base * (1.0 + 1e-12));
            prop_assert!(rho(b1 + db, d, t1) <= base * (1.0 + 1e-12));
            prop_assert!(rho(b1, d + 1, t1) <= base * (1.0 + 1e-12));
        }

        #[test]
        fn c18_monotone_in_x(x in 0.0f64..50.0, dx in 0.0f64..10.0, amp in 0.2f64..2.0) {
            let cn = cn_constants(&sine_problem(amp, 2, 1.0), LevelFactor::Finite(3)).unwrap();
            prop_assert!(cn.c18(x + dx).unwrap() >= cn.c18(x).unwrap());
        }
    }
}
