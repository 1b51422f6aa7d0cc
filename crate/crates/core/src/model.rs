//! SDE problems `dX = b(X) dt + dW`, drift families and payoffs.
//!
//! Built-in drift families carry their regularity constants in closed form.
//! User drifts declare them and can be screened with [`validate_assumptions`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::{sample_stream, AUX_LEVEL};

/// Stand-in for a regularity constant whose true value is zero but which must
/// be declared strictly positive.
pub const TINY_CONSTANT: f64 = 1e-8;

/// `out = f(x)` for a vector-valued map.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `out = f(x)` for a `d x d` matrix-valued map, row-major.
pub type MatrixFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct UserDrift {
    pub name: String,
    pub b: VectorFn,
    pub grad: Option<MatrixFn>,
    pub laplacian: Option<VectorFn>,
    pub grad_laplacian: Option<MatrixFn>,
}

impl fmt::Debug for UserDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserDrift")
            .field("name", &self.name)
            .field("grad", &self.grad.is_some())
            .field("laplacian", &self.laplacian.is_some())
            .field("grad_laplacian", &self.grad_laplacian.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum DriftKind {
    /// `b(x) = c`.
    Constant { c: DVector<f64> },
    /// `b(x) = A x + c`.
    Affine { a: DMatrix<f64>, c: DVector<f64> },
    /// `b_i(x) = amplitude * sin(x_i)`.
    SmoothSine { amplitude: f64, dim: usize },
    User(UserDrift),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftOrder {
    B,
    Grad,
    Laplacian,
    GradLaplacian,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriftValue {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

impl DriftValue {
    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self {
            DriftValue::Vector(v) => Some(v),
            DriftValue::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            DriftValue::Matrix(m) => Some(m),
            DriftValue::Vector(_) => None,
        }
    }
}

/// Regularity constants of a drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftConstants {
    /// Bound on the operator norm of the Jacobian.
    pub lip_grad: f64,
    /// Affine-growth coefficient of the Laplacian.
    pub lap_growth: f64,
    /// Bound on the operator norm of each Hessian slice.
    pub hess_bound: f64,
    /// Affine-growth coefficient of the gradient of the Laplacian.
    pub grad_lap_growth: f64,
}

impl DriftConstants {
    fn check(&self) -> Result<()> {
        let pos = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        let nonneg = |name, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and >= 0, got {v}")))
            }
        };
        pos("lip_grad", self.lip_grad)?;
        pos("hess_bound", self.hess_bound)?;
        nonneg("lap_growth", self.lap_growth)?;
        nonneg("grad_lap_growth", self.grad_lap_growth)
    }
}

#[derive(Debug, Clone)]
pub struct DriftModel {
    pub kind: DriftKind,
    pub constants: DriftConstants,
}

impl DriftModel {
    /// Constant drift. The Jacobian vanishes, so both positive bounds take
    /// [`TINY_CONSTANT`].
    pub fn constant(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(invalid("c", "empty drift vector"));
        }
        Ok(Self {
            kind: DriftKind::Constant {
                c: DVector::from_vec(c),
            },
            constants: DriftConstants {
                lip_grad: TINY_CONSTANT,
                lap_growth: 0.0,
                hess_bound: TINY_CONSTANT,
                grad_lap_growth: 0.0,
            },
        })
    }

    /// Affine drift `A x + c` with `lip_grad = ||A||_2` (floored at
    /// [`TINY_CONSTANT`]) and `hess_bound = TINY_CONSTANT`.
    pub fn affine(a: DMatrix<f64>, c: Vec<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(invalid("A", "matrix must be square"));
        }
        if a.nrows() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: c.len(),
            });
        }
        if a.nrows() == 0 {
            return Err(invalid("A", "empty matrix"));
        }
        let lip = operator_norm(&a).max(TINY_CONSTANT);
        Ok(Self {
            kind: DriftKind::Affine {
                a,
                c: DVector::from_vec(c),
            },
            constants: DriftConstants {
                lip_grad: lip,
                lap_growth: 0.0,
                hess_bound: TINY_CONSTANT,
                grad_lap_growth: 0.0,
            },
        })
    }

    /// `b(x) = -k x`, i.e. `A = -k I`.
    pub fn linear_decay(k: f64, dim: usize) -> Result<Self> {
        Self::affine(DMatrix::from_diagonal_element(dim, dim, -k), vec![0.0; dim])
    }

    pub fn smooth_sine(amplitude: f64, dim: usize) -> Result<Self> {
        if amplitude == 0.0 || !amplitude.is_finite() {
            return Err(invalid("amplitude", "must be finite and non-zero"));
        }
        if dim == 0 {
            return Err(invalid("d", "must be >= 1"));
        }
        let a = amplitude.abs();
        let half = a * (dim as f64).sqrt() / 2.0;
        Ok(Self {
            kind: DriftKind::SmoothSine { amplitude, dim },
            constants: DriftConstants {
                lip_grad: a,
                lap_growth: half,
                hess_bound: a,
                grad_lap_growth: half,
            },
        })
    }

    pub fn user(drift: UserDrift, constants: DriftConstants) -> Result<Self> {
        constants.check()?;
        Ok(Self {
            kind: DriftKind::User(drift),
            constants,
        })
    }

    pub fn with_constants(mut self, constants: DriftConstants) -> Result<Self> {
        constants.check()?;
        self.constants = constants;
        Ok(self)
    }

    pub fn with_lip_grad(mut self, v: f64) -> Result<Self> {
        self.constants.lip_grad = v;
        self.constants.check()?;
        Ok(self)
    }

    pub fn with_hess_bound(mut self, v: f64) -> Result<Self> {
        self.constants.hess_bound = v;
        self.constants.check()?;
        Ok(self)
    }

    pub fn with_lap_growth(mut self, v: f64) -> Result<Self> {
        self.constants.lap_growth = v;
        self.constants.check()?;
        Ok(self)
    }

    pub fn with_grad_lap_growth(mut self, v: f64) -> Result<Self> {
        self.constants.grad_lap_growth = v;
        self.constants.check()?;
        Ok(self)
    }

    /// Dimension fixed by the family, if any.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            DriftKind::Constant { c } => Some(c.len()),
            DriftKind::Affine { c, .. } => Some(c.len()),
            DriftKind::SmoothSine { dim, .. } => Some(*dim),
            DriftKind::User(_) => None,
        }
    }

    pub fn kind_name(&self) -> &str {
        match &self.kind {
            DriftKind::Constant { .. } => "constant",
            DriftKind::Affine { .. } => "affine",
            DriftKind::SmoothSine { .. } => "smooth-sine",
            DriftKind::User(u) => &u.name,
        }
    }

    /// True when the Jacobian is constant, so every step Jacobian is the same.
    pub fn is_affine(&self) -> bool {
        matches!(
            self.kind,
            DriftKind::Constant { .. } | DriftKind::Affine { .. }
        )
    }

    /// `out = b(x)`.
    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            DriftKind::Constant { c } => out.copy_from_slice(c.as_slice()),
            DriftKind::Affine { a, c } => {
                let d = x.len();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut s = c[i];
                    for j in 0..d {
                        s += a[(i, j)] * x[j];
                    }
                    *o = s;
                }
            }
            DriftKind::SmoothSine { amplitude, .. } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = amplitude * xi.sin();
                }
            }
            DriftKind::User(u) => (u.b)(x, out),
        }
    }

    /// `out = ∇b(x)` row-major, `out[i*d + j] = ∂b_i/∂x_j`.
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = x.len();
        match &self.kind {
            DriftKind::Constant { .. } => out.iter_mut().for_each(|v| *v = 0.0),
            DriftKind::Affine { a, .. } => {
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = a[(i, j)];
                    }
                }
            }
            DriftKind::SmoothSine { amplitude, .. } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..d {
                    out[i * d + i] = amplitude * x[i].cos();
                }
            }
            DriftKind::User(u) => match &u.grad {
                Some(g) => g(x, out),
                None => return Err(Error::UnsupportedOrder("grad")),
            },
        }
        Ok(())
    }

    fn laplacian_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.kind {
            DriftKind::Constant { .. } | DriftKind::Affine { .. } => {
                out.iter_mut().for_each(|v| *v = 0.0)
            }
            DriftKind::SmoothSine { amplitude, .. } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -amplitude * xi.sin();
                }
            }
            DriftKind::User(u) => match &u.laplacian {
                Some(g) => g(x, out),
                None => return Err(Error::UnsupportedOrder("laplacian")),
            },
        }
        Ok(())
    }

    fn grad_laplacian_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = x.len();
        match &self.kind {
            DriftKind::Constant { .. } | DriftKind::Affine { .. } => {
                out.iter_mut().for_each(|v| *v = 0.0)
            }
            DriftKind::SmoothSine { amplitude, .. } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..d {
                    out[i * d + i] = -amplitude * x[i].cos();
                }
            }
            DriftKind::User(u) => match &u.grad_laplacian {
                Some(g) => g(x, out),
                None => return Err(Error::UnsupportedOrder("grad_laplacian")),
            },
        }
        Ok(())
    }

    /// Hessian slice `∂∇b/∂x_j`, row-major. User drifts fall back to central
    /// differences of the Jacobian.
    fn hessian_slice_into(&self, x: &[f64], j: usize, out: &mut [f64]) -> Result<()> {
        let d = x.len();
        match &self.kind {
            DriftKind::Constant { .. } | DriftKind::Affine { .. } => {
                out.iter_mut().for_each(|v| *v = 0.0)
            }
            DriftKind::SmoothSine { amplitude, .. } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[j * d + j] = -amplitude * x[j].sin();
            }
            DriftKind::User(_) => {
                let h = 1e-5 * (1.0 + x[j].abs());
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                let mut gp = vec![0.0; d * d];
                let mut gm = vec![0.0; d * d];
                self.jacobian_into(&xp, &mut gp)?;
                self.jacobian_into(&xm, &mut gm)?;
                for k in 0..d * d {
                    out[k] = (gp[k] - gm[k]) / (2.0 * h);
                }
            }
        }
        Ok(())
    }
}

/// Evaluates `b`, `∇b`, `Δb` or `∇Δb` at `x`.
pub fn eval_drift(model: &DriftModel, x: &[f64], order: DriftOrder) -> Result<DriftValue> {
    let d = x.len();
    if let Some(expected) = model.dim() {
        if expected != d {
            return Err(Error::DimensionMismatch { expected, got: d });
        }
    }
    if d == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    match order {
        DriftOrder::B => {
            let mut out = vec![0.0; d];
            model.drift_into(x, &mut out);
            Ok(DriftValue::Vector(DVector::from_vec(out)))
        }
        DriftOrder::Laplacian => {
            let mut out = vec![0.0; d];
            model.laplacian_into(x, &mut out)?;
            Ok(DriftValue::Vector(DVector::from_vec(out)))
        }
        DriftOrder::Grad => {
            let mut out = vec![0.0; d * d];
            model.jacobian_into(x, &mut out)?;
            Ok(DriftValue::Matrix(DMatrix::from_row_slice(d, d, &out)))
        }
        DriftOrder::GradLaplacian => {
            let mut out = vec![0.0; d * d];
            model.grad_laplacian_into(x, &mut out)?;
            Ok(DriftValue::Matrix(DMatrix::from_row_slice(d, d, &out)))
        }
    }
}

/// Spectral norm.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.singular_values().max()
}

fn operator_norm_row_major(d: usize, data: &[f64]) -> f64 {
    if d == 1 {
        return data[0].abs();
    }
    operator_norm(&DMatrix::from_row_slice(d, d, data))
}

#[derive(Clone)]
pub enum PayoffKind {
    /// `f(x) = u · x + offset`.
    Linear { u: Vec<f64>, offset: f64 },
    /// `f(x) = |x|²`; not globally Lipschitz, only for closed-form checks.
    SquaredNorm,
    User {
        name: String,
        f: ScalarFn,
        grad: VectorFn,
    },
}

impl fmt::Debug for PayoffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoffKind::Linear { u, offset } => f
                .debug_struct("Linear")
                .field("u", u)
                .field("offset", offset)
                .finish(),
            PayoffKind::SquaredNorm => f.write_str("SquaredNorm"),
            PayoffKind::User { name, .. } => f.debug_struct("User").field("name", name).finish(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Payoff {
    pub kind: PayoffKind,
    /// Lipschitz constant of `f`.
    pub lip: f64,
    /// Lipschitz constant of `∇f`.
    pub grad_lip: f64,
}

impl Payoff {
    /// Linear payoff with `lip = |u|`. The gradient is constant, so any
    /// positive `grad_lip` is valid and the caller picks it.
    pub fn linear(u: Vec<f64>, grad_lip: f64) -> Result<Self> {
        let lip = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self::new(PayoffKind::Linear { u, offset: 0.0 }, lip, grad_lip)
    }

    pub fn new(kind: PayoffKind, lip: f64, grad_lip: f64) -> Result<Self> {
        if !(lip.is_finite() && lip > 0.0) {
            return Err(invalid("lip", format!("must be finite and > 0, got {lip}")));
        }
        if !(grad_lip.is_finite() && grad_lip > 0.0) {
            return Err(invalid(
                "grad_lip",
                format!("must be finite and > 0, got {grad_lip}"),
            ));
        }
        Ok(Self {
            kind,
            lip,
            grad_lip,
        })
    }

    /// The same payoff multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let kind = match &self.kind {
            PayoffKind::Linear { u, offset } => PayoffKind::Linear {
                u: u.iter().map(|v| v * s).collect(),
                offset: offset * s,
            },
            PayoffKind::SquaredNorm => {
                return Err(invalid("payoff", "squared-norm payoff cannot be rescaled"))
            }
            PayoffKind::User { name, f, grad } => {
                let (f, grad) = (f.clone(), grad.clone());
                PayoffKind::User {
                    name: name.clone(),
                    f: Arc::new(move |x| s * f(x)),
                    grad: Arc::new(move |x, out| {
                        grad(x, out);
                        out.iter_mut().for_each(|v| *v *= s);
                    }),
                }
            }
        };
        Self::new(kind, self.lip * s, self.grad_lip * s)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PayoffKind::Linear { u, offset } => {
                offset + u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            }
            PayoffKind::SquaredNorm => x.iter().map(|v| v * v).sum(),
            PayoffKind::User { f, .. } => f(x),
        }
    }

    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            PayoffKind::Linear { u, .. } => out.copy_from_slice(u),
            PayoffKind::SquaredNorm => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 2.0 * v;
                }
            }
            PayoffKind::User { grad, .. } => grad(x, out),
        }
    }

    pub fn kind_name(&self) -> &str {
        match &self.kind {
            PayoffKind::Linear { .. } => "linear",
            PayoffKind::SquaredNorm => "squared-norm",
            PayoffKind::User { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub d: usize,
    pub x0: Vec<f64>,
    pub t: f64,
    pub drift: DriftModel,
    /// `|b(x0)|`, cached at construction.
    pub b_at_x0: f64,
}

impl ProblemSpec {
    pub fn new(x0: Vec<f64>, t: f64, drift: DriftModel) -> Result<Self> {
        let d = x0.len();
        if d == 0 {
            return Err(invalid("d", "must be >= 1"));
        }
        if let Some(expected) = drift.dim() {
            if expected != d {
                return Err(Error::DimensionMismatch { expected, got: d });
            }
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(invalid("T", format!("must be finite and > 0, got {t}")));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("x0", "entries must be finite"));
        }
        drift.constants.check()?;
        let mut b0 = vec![0.0; d];
        drift.drift_into(&x0, &mut b0);
        let b_at_x0 = b0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !b_at_x0.is_finite() {
            return Err(invalid("drift", "b(x0) is not finite"));
        }
        Ok(Self {
            d,
            x0,
            t,
            drift,
            b_at_x0,
        })
    }

    /// `b(x) = -x` in dimension one on `[0, t]`.
    pub fn ou(x0: f64, t: f64) -> Result<Self> {
        Self::new(vec![x0], t, DriftModel::linear_decay(1.0, 1)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    /// Worst observed / allowed.
    pub max_ratio: f64,
    pub worst_point: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<InequalityCheck>,
    pub violations: Vec<String>,
    pub n_samples: usize,
    pub radius: f64,
    pub seed: u64,
}

impl AssumptionReport {
    pub fn ratio(&self, name: &str) -> Option<f64> {
        self.checks
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.max_ratio)
    }
}

pub const DEFAULT_RADIUS: f64 = 10.0;
pub const DEFAULT_ASSUMPTION_SAMPLES: usize = 10_000;

/// Tolerance of the Jacobian-vs-central-difference check, relative.
const FD_TOL: f64 = 1e-6;

/// Samples points uniformly in the ball of `radius` around `x0` and records
/// the worst observed/allowed ratio of every regularity inequality. Orders a
/// user drift does not provide are skipped.
pub fn validate_assumptions(
    problem: &ProblemSpec,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> AssumptionReport {
    let d = problem.d;
    let c = problem.drift.constants;
    let names = ["grad_norm", "laplacian", "grad_laplacian", "hessian", "grad_fd"];
    let mut worst: Vec<(f64, Vec<f64>, bool)> =
        names.iter().map(|_| (0.0, problem.x0.clone(), false)).collect();
    let mut record = |idx: usize, ratio: f64, x: &[f64]| {
        let w = &mut worst[idx];
        w.2 = true;
        if ratio > w.0 || ratio.is_nan() {
            w.0 = ratio;
            w.1 = x.to_vec();
        }
    };

    let mut x = vec![0.0; d];
    let mut vec_buf = vec![0.0; d];
    let mut mat = vec![0.0; d * d];
    let mut mat2 = vec![0.0; d * d];
    for k in 0..n_samples.max(1) as u64 {
        let mut rng = sample_stream(seed, AUX_LEVEL, k);
        let mut norm = 0.0;
        for v in x.iter_mut() {
            *v = rng.standard_normal();
            norm += *v * *v;
        }
        let norm = norm.sqrt().max(f64::MIN_POSITIVE);
        let rad = radius * rng.uniform().powf(1.0 / d as f64);
        for (v, x0) in x.iter_mut().zip(&problem.x0) {
            *v = x0 + *v / norm * rad;
        }
        let dist = x
            .iter()
            .zip(&problem.x0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let growth = 2.0 * (1.0 + dist);

        if problem.drift.jacobian_into(&x, &mut mat).is_ok() {
            record(0, operator_norm_row_major(d, &mat) / c.lip_grad, &x);

            // Central differences of b against the analytic Jacobian.
            let mut err: f64 = 0.0;
            let scale = mat.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            let mut bp = vec![0.0; d];
            for j in 0..d {
                let h = 1e-5;
                let mut xp = x.clone();
                xp[j] += h;
                problem.drift.drift_into(&xp, &mut bp);
                xp[j] -= 2.0 * h;
                problem.drift.drift_into(&xp, &mut vec_buf);
                for i in 0..d {
                    let fd = (bp[i] - vec_buf[i]) / (2.0 * h);
                    err = err.max((fd - mat[i * d + j]).abs());
                }
            }
            record(4, err / (FD_TOL * scale), &x);

            for j in 0..d {
                if problem.drift.hessian_slice_into(&x, j, &mut mat2).is_ok() {
                    record(3, operator_norm_row_major(d, &mat2) / c.hess_bound, &x);
                }
            }
        }
        if problem.drift.laplacian_into(&x, &mut vec_buf).is_ok() {
            let lap = vec_buf.iter().map(|v| v * v).sum::<f64>().sqrt();
            record(1, ratio_growth(lap, c.lap_growth * growth), &x);
        }
        if problem.drift.grad_laplacian_into(&x, &mut mat2).is_ok() {
            let g = operator_norm_row_major(d, &mat2);
            record(2, ratio_growth(g, c.grad_lap_growth * growth), &x);
        }
    }

    let mut checks = Vec::new();
    let mut violations = Vec::new();
    for (name, (ratio, point, seen)) in names.iter().zip(worst) {
        if !seen {
            continue;
        }
        if !(ratio <= 1.0) {
            violations.push(format!("{name}: observed/allowed ratio {ratio:.6e} > 1"));
        }
        checks.push(InequalityCheck {
            name,
            max_ratio: ratio,
            worst_point: point,
        });
    }
    AssumptionReport {
        checks,
        violations,
        n_samples: n_samples.max(1),
        radius,
        seed,
    }
}

fn ratio_growth(observed: f64, allowed: f64) -> f64 {
    if observed == 0.0 {
        0.0
    } else if allowed == 0.0 {
        f64::INFINITY
    } else {
        observed / allowed
    }
}
