//! Regularized least squares on database contents and confidence radii.
//!
//! Two radius families are provided. The clean radius bounds the estimation
//! error when the stored data is trustworthy. The attacked radii add the
//! poisoning terms: an oracle form that needs the realized attack matrices,
//! and an a priori form that only needs the budget `Λ`, the running state
//! bound and the gain bound. The self-correcting controller uses the latter.
//!
//! All determinant ratios go through Cholesky log-determinants; raw
//! determinants overflow long before `t ≈ 8000` in more than one dimension.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lqr::SystemParams;

/// Stored regression rows `Z̄` (t × (n+m)) and targets `X̄` (t × n).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInputs {
    pub zbar: DMatrix<f64>,
    pub xbar: DMatrix<f64>,
    pub lambda: f64,
}

impl RegressionInputs {
    pub fn new(zbar: DMatrix<f64>, xbar: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if zbar.nrows() != xbar.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "Z̄ has {} rows but X̄ has {}",
                zbar.nrows(),
                xbar.nrows()
            )));
        }
        check_lambda(lambda)?;
        Ok(Self { zbar, xbar, lambda })
    }

    /// No data yet: `Θ̂ = 0`, `V = λI`.
    pub fn empty(n: usize, m: usize, lambda: f64) -> Self {
        Self {
            zbar: DMatrix::zeros(0, n + m),
            xbar: DMatrix::zeros(0, n),
            lambda,
        }
    }

    pub fn rows(&self) -> usize {
        self.zbar.nrows()
    }

    /// `λI + Z̄ᵀZ̄`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let p = self.zbar.ncols();
        self.zbar.transpose() * &self.zbar + DMatrix::identity(p, p) * self.lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceEllipsoid {
    /// `Θ̂`, (n+m) × n.
    pub center: DMatrix<f64>,
    /// `V`, (n+m) × (n+m).
    pub shape: DMatrix<f64>,
    /// `β`.
    pub radius: f64,
    pub delta: f64,
}

impl ConfidenceEllipsoid {
    pub fn new(center: DMatrix<f64>, shape: DMatrix<f64>, radius: f64, delta: f64) -> Result<Self> {
        if shape.nrows() != center.nrows() || !shape.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "shape {}x{} does not match center {}x{}",
                shape.nrows(),
                shape.ncols(),
                center.nrows(),
                center.ncols()
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument {
                name: "radius",
                reason: format!("must be positive, got {radius}"),
            });
        }
        if shape.clone().cholesky().is_none() {
            return Err(Error::NonPositiveDefinite("ellipsoid shape"));
        }
        Ok(Self {
            center,
            shape,
            radius,
            delta,
        })
    }

    pub fn n(&self) -> usize {
        self.center.ncols()
    }

    pub fn m(&self) -> usize {
        self.center.nrows() - self.center.ncols()
    }

    /// `Tr((Θ̂−Θ)ᵀV(Θ̂−Θ))`.
    pub fn quadratic(&self, theta: &DMatrix<f64>) -> f64 {
        linalg::weighted_trace(&(theta - &self.center), &self.shape)
    }

    /// Membership with a `1e-12` relative tie allowance for round-off.
    pub fn contains_theta(&self, theta: &DMatrix<f64>) -> bool {
        self.quadratic(theta) <= self.radius * (1.0 + 1e-12)
    }
}

/// Attack and noise constants consumed by the radius formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackBudget {
    /// `Λ`, bound on `‖η_t‖` and `‖ζ_t‖`. Zero means no attack is assumed.
    pub lambda_budget: f64,
    /// `X_{a,t}`, running max of `‖x^a_s‖`.
    pub state_bound: f64,
    /// `C`, bound on `‖K(Θ)‖` over the admissible set.
    pub gain_bound: f64,
    /// Sub-Gaussian constant `L`.
    pub sub_gaussian: f64,
    /// Trace-ball radius `s`.
    pub s: f64,
}

impl AttackBudget {
    pub fn clean(sub_gaussian: f64, s: f64) -> Self {
        Self {
            lambda_budget: 0.0,
            state_bound: 0.0,
            gain_bound: 0.0,
            sub_gaussian,
            s,
        }
    }

    /// `ρ_z = √(1+C²)·X_{a,t} + Λ`, a bound on every stored row norm.
    pub fn row_norm_bound(&self) -> f64 {
        (1.0 + self.gain_bound * self.gain_bound).sqrt() * self.state_bound + self.lambda_budget
    }
}

/// `Θ̂ = (Z̄ᵀZ̄ + λI)⁻¹ Z̄ᵀX̄` by a Cholesky solve.
pub fn least_squares_estimate(inputs: &RegressionInputs) -> Result<DMatrix<f64>> {
    check_lambda(inputs.lambda)?;
    if inputs.zbar.nrows() != inputs.xbar.nrows() {
        return Err(Error::DimensionMismatch("Z̄ and X̄ row counts differ".into()));
    }
    let p = inputs.zbar.ncols();
    let n = inputs.xbar.ncols();
    if inputs.rows() == 0 {
        return Ok(DMatrix::zeros(p, n));
    }
    let rhs = inputs.zbar.transpose() * &inputs.xbar;
    linalg::solve_spd(&inputs.covariance(), &rhs)
}

/// `λI + Σ z zᵀ` kept incrementally by rank-one updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    v: DMatrix<f64>,
    lambda: f64,
    count: usize,
}

impl Covariance {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            v: DMatrix::identity(dim, dim) * lambda,
            lambda,
            count: 0,
        })
    }

    pub fn push(&mut self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.v.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "row has length {}, covariance is {}x{}",
                z.len(),
                self.v.nrows(),
                self.v.nrows()
            )));
        }
        self.v.ger(1.0, z, z, 1.0);
        self.count += 1;
        Ok(())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn log_det(&self) -> Result<f64> {
        linalg::log_det_spd(&self.v)
    }
}

/// Batch form of [`Covariance`].
pub fn covariance(rows: &[DVector<f64>], dim: usize, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    let mut v = DMatrix::identity(dim, dim) * lambda;
    for z in rows {
        if z.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "row has length {}, expected {dim}",
                z.len()
            )));
        }
        v += z * z.transpose();
    }
    Ok(v)
}

/// `log(det(V)^{1/2} det(λI)^{−1/2})`.
pub fn half_log_det_ratio(shape: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let p = shape.nrows() as f64;
    Ok(0.5 * (linalg::log_det_spd(shape)? - p * lambda.ln()))
}

/// `nL√(2 log(det(V)^{1/2} det(λI)^{−1/2} / δ))`, the noise part shared by every radius.
fn noise_term(shape: &DMatrix<f64>, sub_gaussian: f64, delta: f64, lambda: f64, n: usize) -> Result<f64> {
    check_delta(delta)?;
    check_lambda(lambda)?;
    let log_arg = half_log_det_ratio(shape, lambda)? - delta.ln();
    Ok(n as f64 * sub_gaussian * (2.0 * log_arg.max(0.0)).sqrt())
}

/// `β(δ) = (nL√(2 log(det(V)^{1/2}det(λI)^{−1/2}/δ)) + λ^{1/2}s)²`.
pub fn clean_radius(
    shape: &DMatrix<f64>,
    budget: &AttackBudget,
    delta: f64,
    lambda: f64,
    n: usize,
) -> Result<f64> {
    let root = noise_term(shape, budget.sub_gaussian, delta, lambda, n)? + lambda.sqrt() * budget.s;
    Ok(root * root)
}

/// Spectral norms `‖Z̄ᵀH‖` and `‖Z̄ᵀY‖`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttackNorms {
    pub zh: f64,
    pub zy: f64,
}

impl AttackNorms {
    pub fn from_matrices(zbar: &DMatrix<f64>, h: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        if zbar.nrows() != h.nrows() || zbar.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch("attack matrices row counts differ".into()));
        }
        let zt = zbar.transpose();
        Ok(Self {
            zh: linalg::spectral_norm(&(&zt * h)),
            zy: linalg::spectral_norm(&(&zt * y)),
        })
    }
}

/// `β^a` from the realized attack matrices. Diagnostic only: a defender never
/// observes `H` and `Y`.
pub fn attacked_radius_oracle(
    shape: &DMatrix<f64>,
    norms: AttackNorms,
    budget: &AttackBudget,
    delta: f64,
    lambda: f64,
    n: usize,
) -> Result<f64> {
    let inv_sqrt = 1.0 / lambda.sqrt();
    let root = noise_term(shape, budget.sub_gaussian, delta, lambda, n)?
        + inv_sqrt * norms.zh
        + (lambda.sqrt() + inv_sqrt * norms.zy) * budget.s;
    Ok(root * root)
}

/// A priori upper bound on `β^a` that needs only `Λ`, `X_{a,t}`, `C` and `t`.
///
/// With `p = n+m` and `ρ_z = √(1+C²)X_{a,t} + Λ`:
///
/// `(nL√(p log((pλ + 2t((1+C²)X² + Λ²))/(pδλ))) + ρ_zΛt/√λ + (√λ + ρ_zΛt/√λ)s)²`
pub fn attacked_radius_apriori(
    budget: &AttackBudget,
    t: usize,
    delta: f64,
    lambda: f64,
    n: usize,
    m: usize,
) -> f64 {
    let p = (n + m) as f64;
    let t = t as f64;
    let c2 = budget.gain_bound * budget.gain_bound;
    let x2 = budget.state_bound * budget.state_bound;
    let lam2 = budget.lambda_budget * budget.lambda_budget;
    let ratio = (p * lambda + 2.0 * t * ((1.0 + c2) * x2 + lam2)) / (p * delta * lambda);
    let noise = n as f64 * budget.sub_gaussian * (p * ratio.ln().max(0.0)).sqrt();
    let attack = budget.row_norm_bound() * budget.lambda_budget * t / lambda.sqrt();
    let root = noise + attack + (lambda.sqrt() + attack) * budget.s;
    root * root
}

/// `((pλ + 2Σ(‖z_k‖² + ‖ζ_k‖²))/p)^p`, an upper bound on `det(V̄)`.
pub fn det_upper_bound(z_norms: &[f64], zeta_norms: &[f64], lambda: f64, p: usize) -> Result<f64> {
    Ok(log_det_upper_bound(z_norms, zeta_norms, lambda, p)?.exp())
}

/// Logarithm of [`det_upper_bound`].
pub fn log_det_upper_bound(z_norms: &[f64], zeta_norms: &[f64], lambda: f64, p: usize) -> Result<f64> {
    if z_norms.len() != zeta_norms.len() {
        return Err(Error::LengthMismatch {
            expected: z_norms.len(),
            found: zeta_norms.len(),
        });
    }
    let sum: f64 = z_norms
        .iter()
        .zip(zeta_norms)
        .map(|(z, e)| z * z + e * e)
        .sum();
    let pf = p as f64;
    Ok(pf * ((pf * lambda + 2.0 * sum) / pf).ln())
}

pub fn membership(ellipsoid: &ConfidenceEllipsoid, candidate: &SystemParams) -> Result<bool> {
    let theta = candidate.theta();
    if theta.shape() != ellipsoid.center.shape() {
        return Err(Error::DimensionMismatch(format!(
            "candidate is {}x{}, ellipsoid center is {}x{}",
            theta.nrows(),
            theta.ncols(),
            ellipsoid.center.nrows(),
            ellipsoid.center.ncols()
        )));
    }
    Ok(ellipsoid.contains_theta(&theta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfNormalized {
    /// `‖Z̄ᵀW‖²_{V̄⁻¹}`; the largest column value when `W` has several columns.
    pub weighted_norm_sq: f64,
    /// `2L² log(det(V̄)^{1/2} det(λI)^{−1/2} / δ)`.
    pub bound: f64,
}

impl SelfNormalized {
    pub fn holds(&self) -> bool {
        self.weighted_norm_sq <= self.bound
    }
}

/// Evaluates both sides of the vector-martingale self-normalized inequality.
/// Test and oracle use only: it needs the true noise realizations `W`.
pub fn self_normalized_check(
    zbar: &DMatrix<f64>,
    w: &DMatrix<f64>,
    shape: &DMatrix<f64>,
    sub_gaussian: f64,
    delta: f64,
    lambda: f64,
) -> Result<SelfNormalized> {
    if zbar.nrows() != w.nrows() || shape.nrows() != zbar.ncols() {
        return Err(Error::DimensionMismatch("self-normalized inputs".into()));
    }
    check_delta(delta)?;
    let s = zbar.transpose() * w;
    let vs = linalg::solve_spd(shape, &s)?;
    let weighted_norm_sq = (0..s.ncols())
        .map(|j| s.column(j).dot(&vs.column(j)))
        .fold(0.0_f64, f64::max);
    let bound = 2.0 * sub_gaussian * sub_gaussian * (half_log_det_ratio(shape, lambda)? - delta.ln());
    Ok(SelfNormalized {
        weighted_norm_sq,
        bound,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name: "lambda",
            reason: format!("must be positive, got {lambda}"),
        })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name: "delta",
            reason: format!("must lie in (0, 1), got {delta}"),
        })
    }
}
