//! Coupled Euler–Maruyama paths, the multilevel estimator, and pathwise
//! Malliavin derivatives of the scheme.
//!
//! Fine and coarse schemes share one Brownian path: the coarse increment over
//! a coarse step is the sum, taken left to right, of the `m` fine increments
//! it covers.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{DriftKind, Payoff, ProblemSpec};
use crate::rng::{derive_seed, SampleRng, StreamKey};
#[cfg(test)]
use crate::rng::sample_stream;

/// Samples per work unit. Fixed so that merge order does not depend on the
/// number of workers.
pub const CHUNK: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelPlan {
    pub m: u32,
    /// `N_0, ..., N_L`.
    pub counts: Vec<u64>,
}

impl LevelPlan {
    pub fn new(m: u32, counts: Vec<u64>) -> Result<Self> {
        if m < 2 {
            return Err(invalid("m", format!("must be >= 2, got {m}")));
        }
        if counts.is_empty() {
            return Err(invalid("N", "at least one level is required"));
        }
        if counts.contains(&0) {
            return Err(invalid("N", "every level needs at least one sample"));
        }
        if counts.len() > 64 {
            return Err(invalid("L", "more than 63 levels"));
        }
        Ok(Self { m, counts })
    }

    pub fn max_level(&self) -> u32 {
        (self.counts.len() - 1) as u32
    }

    /// `N_0 + Σ_ℓ N_ℓ (m+1) m^{ℓ-1}`.
    pub fn cost(&self) -> f64 {
        let m = self.m as f64;
        let mut cost = self.counts[0] as f64;
        for (l, &n) in self.counts.iter().enumerate().skip(1) {
            cost += n as f64 * (m + 1.0) * m.powi(l as i32 - 1);
        }
        cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledSample {
    pub level: u32,
    pub fine_terminal: Vec<f64>,
    /// Absent at level zero.
    pub coarse_terminal: Option<Vec<f64>>,
    /// `max_k |X^{mn}_{t_k} - X^n_{t_k}|` over the coarse grid.
    pub max_grid_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: u32,
    pub samples: u64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorOutput {
    pub q_hat: f64,
    pub levels: Vec<LevelStats>,
    pub total_cost: f64,
    pub seed: u64,
}

/// Scratch buffers for one worker.
#[derive(Debug, Clone)]
pub struct PathBuffers {
    d: usize,
    pub xf: Vec<f64>,
    pub xc: Vec<f64>,
    bf: Vec<f64>,
    bc: Vec<f64>,
    dw: Vec<f64>,
    acc: Vec<f64>,
}

impl PathBuffers {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            xf: vec![0.0; d],
            xc: vec![0.0; d],
            bf: vec![0.0; d],
            bc: vec![0.0; d],
            dw: vec![0.0; d],
            acc: vec![0.0; d],
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Advances fine (`m n` steps) and coarse (`n` steps) schemes on one path.
/// Terminals are left in `buf.xf` and `buf.xc`; returns the max grid gap.
/// When `record` is given, the fine increments are appended to it.
pub fn run_coupled(
    problem: &ProblemSpec,
    m: u32,
    n_coarse: u64,
    rng: &mut SampleRng,
    buf: &mut PathBuffers,
    mut record: Option<&mut Vec<f64>>,
) -> f64 {
    let d = buf.d;
    let hc = problem.t / n_coarse as f64;
    let hf = problem.t / (n_coarse * m as u64) as f64;
    let sd = hf.sqrt();
    buf.xf.copy_from_slice(&problem.x0);
    buf.xc.copy_from_slice(&problem.x0);
    let mut gap: f64 = 0.0;
    for _ in 0..n_coarse {
        problem.drift.drift_into(&buf.xc, &mut buf.bc);
        buf.acc.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..m {
            problem.drift.drift_into(&buf.xf, &mut buf.bf);
            for i in 0..d {
                let dw = sd * rng.standard_normal();
                buf.dw[i] = dw;
                buf.acc[i] += dw;
                buf.xf[i] = buf.xf[i] + hf * buf.bf[i] + dw;
            }
            if let Some(r) = record.as_deref_mut() {
                r.extend_from_slice(&buf.dw);
            }
        }
        for i in 0..d {
            buf.xc[i] = buf.xc[i] + hc * buf.bc[i] + buf.acc[i];
        }
        gap = gap.max(dist(&buf.xf, &buf.xc));
    }
    gap
}

/// Sums each group of `m` fine increments (left to right), the coarse
/// increments used by [`run_coupled`].
pub fn coarse_increments(fine: &[f64], m: u32, d: usize) -> Vec<f64> {
    let m = m as usize;
    let n = fine.len() / (m * d);
    let mut out = vec![0.0; n * d];
    for k in 0..n {
        for s in 0..m {
            for i in 0..d {
                out[k * d + i] += fine[(k * m + s) * d + i];
            }
        }
    }
    out
}

/// Euler scheme driven by given increments (`n * d` values); returns the path
/// at every grid node, `(n + 1) * d` values.
pub fn euler_path(problem: &ProblemSpec, increments: &[f64]) -> Result<Vec<f64>> {
    let d = problem.d;
    if !increments.len().is_multiple_of(d) || increments.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: increments.len(),
        });
    }
    let n = increments.len() / d;
    let h = problem.t / n as f64;
    let mut path = Vec::with_capacity((n + 1) * d);
    path.extend_from_slice(&problem.x0);
    let mut b = vec![0.0; d];
    for k in 0..n {
        let x = &path[k * d..(k + 1) * d];
        problem.drift.drift_into(x, &mut b);
        for i in 0..d {
            let next = path[k * d + i] + h * b[i] + increments[k * d + i];
            path.push(next);
        }
    }
    Ok(path)
}

pub fn simulate_coupled_terminal(
    problem: &ProblemSpec,
    m: u32,
    n_coarse: u64,
    rng: &mut SampleRng,
) -> Result<CoupledSample> {
    if m < 2 {
        return Err(invalid("m", "must be >= 2"));
    }
    if n_coarse == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let mut buf = PathBuffers::new(problem.d);
    let gap = run_coupled(problem, m, n_coarse, rng, &mut buf, None);
    Ok(CoupledSample {
        level: 0,
        fine_terminal: buf.xf,
        coarse_terminal: Some(buf.xc),
        max_grid_gap: gap,
    })
}

/// Same as [`simulate_coupled_terminal`] but also returns the `m n d` fine
/// increments.
pub fn simulate_coupled_recorded(
    problem: &ProblemSpec,
    m: u32,
    n_coarse: u64,
    rng: &mut SampleRng,
) -> Result<(CoupledSample, Vec<f64>)> {
    if m < 2 || n_coarse == 0 {
        return Err(invalid("m, n", "need m >= 2 and n >= 1"));
    }
    let mut buf = PathBuffers::new(problem.d);
    let mut inc = Vec::with_capacity(m as usize * n_coarse as usize * problem.d);
    let gap = run_coupled(problem, m, n_coarse, rng, &mut buf, Some(&mut inc));
    Ok((
        CoupledSample {
            level: 0,
            fine_terminal: buf.xf,
            coarse_terminal: Some(buf.xc),
            max_grid_gap: gap,
        },
        inc,
    ))
}

/// One sample of level `ℓ`: the one-step scheme at `ℓ = 0`, otherwise the
/// pair (`m^ℓ`, `m^{ℓ-1}` steps).
pub fn level_sample(
    problem: &ProblemSpec,
    m: u32,
    level: u32,
    rng: &mut SampleRng,
) -> Result<CoupledSample> {
    if level == 0 {
        let mut buf = PathBuffers::new(problem.d);
        one_step(problem, rng, &mut buf);
        return Ok(CoupledSample {
            level: 0,
            fine_terminal: buf.xf,
            coarse_terminal: None,
            max_grid_gap: 0.0,
        });
    }
    let mut s = simulate_coupled_terminal(problem, m, (m as u64).pow(level - 1), rng)?;
    s.level = level;
    Ok(s)
}

fn one_step(problem: &ProblemSpec, rng: &mut SampleRng, buf: &mut PathBuffers) {
    let sd = problem.t.sqrt();
    problem.drift.drift_into(&problem.x0, &mut buf.bf);
    for i in 0..buf.d {
        buf.xf[i] = problem.x0[i] + problem.t * buf.bf[i] + sd * rng.standard_normal();
    }
}

/// Running mean and sum of squared deviations, merged with Chan's formula.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, y: f64) {
        self.n += 1;
        let delta = y - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (y - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    /// Unbiased sample variance (zero for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// `f(fine) - f(coarse)` of sample `k` at `level` (just `f(X^1_T)` at level 0).
fn level_difference(
    problem: &ProblemSpec,
    payoff: &Payoff,
    m: u32,
    level: u32,
    key: &StreamKey,
    k: u64,
    buf: &mut PathBuffers,
) -> f64 {
    let mut rng = key.stream(k);
    if level == 0 {
        one_step(problem, &mut rng, buf);
        payoff.eval(&buf.xf)
    } else {
        run_coupled(problem, m, (m as u64).pow(level - 1), &mut rng, buf, None);
        payoff.eval(&buf.xf) - payoff.eval(&buf.xc)
    }
}

fn level_moments(
    problem: &ProblemSpec,
    payoff: &Payoff,
    m: u32,
    level: u32,
    count: u64,
    key: &StreamKey,
    parallel: bool,
) -> Moments {
    let chunks = count.div_ceil(CHUNK);
    let run_chunk = |c: u64| {
        let mut buf = PathBuffers::new(problem.d);
        let mut mom = Moments::default();
        for k in c * CHUNK..((c + 1) * CHUNK).min(count) {
            mom.push(level_difference(problem, payoff, m, level, key, k, &mut buf));
        }
        mom
    };
    let parts: Vec<Moments> = if parallel && chunks > 1 {
        (0..chunks).into_par_iter().map(run_chunk).collect()
    } else {
        (0..chunks).map(run_chunk).collect()
    };
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

fn estimate(
    problem: &ProblemSpec,
    payoff: &Payoff,
    plan: &LevelPlan,
    seed: u64,
    parallel: bool,
) -> EstimatorOutput {
    let mut q_hat = 0.0;
    let mut levels = Vec::with_capacity(plan.counts.len());
    for (l, &n) in plan.counts.iter().enumerate() {
        let key = StreamKey::new(seed, l as u64);
        let mom = level_moments(problem, payoff, plan.m, l as u32, n, &key, parallel);
        q_hat += mom.mean;
        levels.push(LevelStats {
            level: l as u32,
            samples: n,
            mean: mom.mean,
            variance: mom.variance(),
        });
    }
    EstimatorOutput {
        q_hat,
        levels,
        total_cost: plan.cost(),
        seed,
    }
}

/// The multilevel estimator, parallel over samples within each level.
pub fn mlmc_estimate(
    problem: &ProblemSpec,
    payoff: &Payoff,
    plan: &LevelPlan,
    seed: u64,
) -> Result<EstimatorOutput> {
    check_payoff_dim(problem, payoff)?;
    Ok(estimate(problem, payoff, plan, seed, true))
}

/// Single-threaded variant for callers that parallelize over replications.
pub fn mlmc_estimate_serial(
    problem: &ProblemSpec,
    payoff: &Payoff,
    plan: &LevelPlan,
    seed: u64,
) -> Result<EstimatorOutput> {
    check_payoff_dim(problem, payoff)?;
    Ok(estimate(problem, payoff, plan, seed, false))
}

fn check_payoff_dim(problem: &ProblemSpec, payoff: &Payoff) -> Result<()> {
    if let crate::model::PayoffKind::Linear { u, .. } = &payoff.kind {
        if u.len() != problem.d {
            return Err(Error::DimensionMismatch {
                expected: problem.d,
                got: u.len(),
            });
        }
    }
    Ok(())
}

/// Seed of replication `r`, so that replications are independent estimators.
pub fn replication_seed(master: u64, r: u64) -> u64 {
    derive_seed(master, r)
}

/// `Q̂ - centre` for `count` independent replications, in replication order.
pub fn replicate_estimates(
    problem: &ProblemSpec,
    payoff: &Payoff,
    plan: &LevelPlan,
    master_seed: u64,
    count: u64,
) -> Result<Vec<f64>> {
    check_payoff_dim(problem, payoff)?;
    Ok((0..count)
        .into_par_iter()
        .map(|r| estimate(problem, payoff, plan, replication_seed(master_seed, r), false).q_hat)
        .collect())
}

/// Increment of `r` on an `n`-step grid of `[0, T]`: `floor(r n / T)`,
/// clamped to the last step.
pub fn increment_index(t: f64, n: u64, r: f64) -> u64 {
    (((r * n as f64) / t).floor() as u64).min(n - 1)
}

/// `D^j_r X^n_{t_k}` for every grid node `k = 0..=n`, `(n + 1) * d` values.
/// Zero at nodes `t_k <= r`; afterwards the product of step Jacobians
/// `I + h ∇b(X_i)` over the steps strictly after the one containing `r`.
pub fn malliavin_along_path(
    problem: &ProblemSpec,
    increments: &[f64],
    r: f64,
    j: usize,
) -> Result<Vec<f64>> {
    let d = problem.d;
    if j >= d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: j + 1,
        });
    }
    if !(0.0..=problem.t).contains(&r) {
        return Err(Error::TimeOutOfRange {
            r,
            horizon: problem.t,
        });
    }
    let path = euler_path(problem, increments)?;
    let n = (increments.len() / d) as u64;
    let h = problem.t / n as f64;
    let idx = increment_index(problem.t, n, r) as usize;
    let mut out = vec![0.0; (n as usize + 1) * d];
    let mut v = vec![0.0; d];
    v[j] = 1.0;
    let mut jac = vec![0.0; d * d];
    let mut next = vec![0.0; d];
    out[(idx + 1) * d..(idx + 2) * d].copy_from_slice(&v);
    for k in idx + 1..n as usize {
        let x = &path[k * d..(k + 1) * d];
        problem.drift.jacobian_into(x, &mut jac)?;
        for a in 0..d {
            let mut s = v[a];
            for b in 0..d {
                s += h * jac[a * d + b] * v[b];
            }
            next[a] = s;
        }
        std::mem::swap(&mut v, &mut next);
        out[(k + 1) * d..(k + 2) * d].copy_from_slice(&v);
    }
    Ok(out)
}

/// `D^j_r X^n_T` from recorded increments (`n * d` values).
pub fn malliavin_derivative(
    problem: &ProblemSpec,
    increments: &[f64],
    r: f64,
    j: usize,
) -> Result<Vec<f64>> {
    let all = malliavin_along_path(problem, increments, r, j)?;
    let d = problem.d;
    Ok(all[all.len() - d..].to_vec())
}

/// `max_k |D^j_r X^{mn}_{t_k} - D^j_r X^n_{t_k}|` over coarse nodes, with the
/// coarse increments formed from the `m n d` fine ones.
pub fn malliavin_coupled_gap(
    problem: &ProblemSpec,
    m: u32,
    fine_increments: &[f64],
    r: f64,
    j: usize,
) -> Result<f64> {
    let d = problem.d;
    let coarse = coarse_increments(fine_increments, m, d);
    let df = malliavin_along_path(problem, fine_increments, r, j)?;
    let dc = malliavin_along_path(problem, &coarse, r, j)?;
    let n = coarse.len() / d;
    let m = m as usize;
    let mut gap: f64 = 0.0;
    for k in 0..=n {
        let a = &df[k * m * d..(k * m + 1) * d];
        let b = &dc[k * d..(k + 1) * d];
        gap = gap.max(dist(a, b));
    }
    Ok(gap)
}

/// Exact solution sampled jointly with an Euler scheme on the same path.
#[derive(Debug, Clone)]
pub enum ExactReference {
    /// Symmetric affine drift, diagonalized as `A = Q Λ Qᵀ`.
    Affine {
        q: DMatrix<f64>,
        lambda: Vec<f64>,
        c_rot: Vec<f64>,
    },
    /// Euler scheme with `factor * n` steps as the reference.
    Surrogate { factor: u32 },
}

pub const SURROGATE_FACTOR: u32 = 512;

impl ExactReference {
    pub fn for_problem(problem: &ProblemSpec) -> Self {
        let (a, c) = match &problem.drift.kind {
            DriftKind::Affine { a, c } => (a.clone(), c.clone()),
            DriftKind::Constant { c } => (DMatrix::zeros(problem.d, problem.d), c.clone()),
            _ => {
                return Self::Surrogate {
                    factor: SURROGATE_FACTOR,
                }
            }
        };
        if (&a - a.transpose()).amax() > 1e-14 * (1.0 + a.amax()) {
            return Self::Surrogate {
                factor: SURROGATE_FACTOR,
            };
        }
        let eig = SymmetricEigen::new(a);
        let q = eig.eigenvectors;
        let c_rot = (q.transpose() * c).iter().copied().collect();
        Self::Affine {
            lambda: eig.eigenvalues.iter().copied().collect(),
            q,
            c_rot,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Self::Affine { .. })
    }
}

/// `(e^{λh} - 1)/λ`, equal to `h` at `λ = 0`.
fn phi_h(lambda: f64, h: f64) -> f64 {
    if lambda == 0.0 {
        h
    } else {
        (lambda * h).exp_m1() / lambda
    }
}

/// Samples the `n`-step Euler scheme and the reference solution on one path.
/// The reference goes in `fine_terminal`; the gap is over the `n`-step grid.
pub fn simulate_reference_coupled(
    problem: &ProblemSpec,
    reference: &ExactReference,
    n: u64,
    rng: &mut SampleRng,
) -> Result<CoupledSample> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    match reference {
        ExactReference::Surrogate { factor } => {
            let mut s = simulate_coupled_terminal(problem, *factor, n, rng)?;
            s.level = 0;
            Ok(s)
        }
        ExactReference::Affine { q, lambda, c_rot } => {
            let d = problem.d;
            let h = problem.t / n as f64;
            let mut y = q.transpose() * nalgebra::DVector::from_column_slice(&problem.x0);
            let mut xe = problem.x0.clone();
            let mut b = vec![0.0; d];
            let mut dw_rot = nalgebra::DVector::zeros(d);
            let mut gap: f64 = 0.0;
            for _ in 0..n {
                problem.drift.drift_into(&xe, &mut b);
                for i in 0..d {
                    let l = lambda[i];
                    // Joint law of (ΔW, ∫ e^{λ(t_{k+1}-u)} dW_u) over one step.
                    let v11 = h;
                    let v12 = phi_h(l, h);
                    let v22 = phi_h(2.0 * l, h);
                    let z1 = rng.standard_normal();
                    let z2 = rng.standard_normal();
                    let dw = v11.sqrt() * z1;
                    let a = v12 / v11.sqrt();
                    let rest = (v22 - a * a).max(0.0).sqrt();
                    let integral = a * z1 + rest * z2;
                    dw_rot[i] = dw;
                    y[i] = (l * h).exp() * y[i] + phi_h(l, h) * c_rot[i] + integral;
                }
                let dw = q * &dw_rot;
                for i in 0..d {
                    xe[i] += h * b[i] + dw[i];
                }
                let x = q * &y;
                gap = gap.max(dist(x.as_slice(), &xe));
            }
            let x = q * &y;
            Ok(CoupledSample {
                level: 0,
                fine_terminal: x.iter().copied().collect(),
                coarse_terminal: Some(xe),
                max_grid_gap: gap,
            })
        }
    }
}
