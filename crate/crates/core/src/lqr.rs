//! Discrete-time LQR: Riccati solution, optimal gain and admissibility.
//!
//! The parameter matrix packs the dynamics as `Θᵀ = (A, B)`, so `Θ` is
//! `(n+m) × n` and the one-step prediction is `x' = Θᵀ z` with `z = (x, u)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Relative slack used when comparing against the trace ball `trace(ΘᵀΘ) ≤ s²`.
pub const BALL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl SystemParams {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {}xm, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn scalar(a: f64, b: f64) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
        }
    }

    /// Unpacks `Θ` ((n+m) × n) into `A = Θ[0..n]ᵀ`, `B = Θ[n..]ᵀ`.
    pub fn from_theta(theta: &DMatrix<f64>, n: usize) -> Result<Self> {
        if theta.ncols() != n || theta.nrows() <= n {
            return Err(Error::DimensionMismatch(format!(
                "theta must be (n+m)x{n}, got {}x{}",
                theta.nrows(),
                theta.ncols()
            )));
        }
        let m = theta.nrows() - n;
        let a = theta.rows(0, n).transpose();
        let b = theta.rows(n, m).transpose();
        Ok(Self { a, b })
    }

    pub fn theta(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut theta = DMatrix::zeros(n + m, n);
        theta.rows_mut(0, n).copy_from(&self.a.transpose());
        theta.rows_mut(n, m).copy_from(&self.b.transpose());
        theta
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `trace(ΘᵀΘ)`.
    pub fn trace_norm_sq(&self) -> f64 {
        self.a.norm_squared() + self.b.norm_squared()
    }

    pub fn in_trace_ball(&self, s: f64) -> bool {
        self.trace_norm_sq() <= s * s * (1.0 + BALL_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r)] {
            if !linalg::is_symmetric(m, 1e-12) {
                return Err(Error::InvalidArgument {
                    name: "weights",
                    reason: format!("{name} must be symmetric"),
                });
            }
            let min_eig = m
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &v| a.min(v));
            if min_eig <= 0.0 {
                return Err(Error::InvalidArgument {
                    name: "weights",
                    reason: format!("{name} must be positive definite (min eigenvalue {min_eig})"),
                });
            }
        }
        Ok(Self { q, r })
    }

    pub fn scalar(q: f64, r: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, q), DMatrix::from_element(1, 1, r))
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    fn check_dims(&self, params: &SystemParams) -> Result<()> {
        if self.q.nrows() != params.n() || self.r.nrows() != params.m() {
            return Err(Error::DimensionMismatch(format!(
                "weights are Q {0}x{0}, R {1}x{1} but system has n={2}, m={3}",
                self.q.nrows(),
                self.r.nrows(),
                params.n(),
                params.m()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DareOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// `trace(P)`.
    pub cost: f64,
    pub iterations: usize,
    /// Operator 2-norm of `A + BK`.
    pub closed_loop_norm: f64,
    pub closed_loop_radius: f64,
}

impl RiccatiSolution {
    /// The literal stability condition `‖A + BK‖ < 1`. Reported, not enforced.
    pub fn norm_stable(&self) -> bool {
        self.closed_loop_norm < 1.0
    }
}

/// Iterates `P ← Q + AᵀPA − AᵀPB(BᵀPB+R)⁻¹BᵀPA` from `P₀ = Q`.
pub fn solve_dare(
    params: &SystemParams,
    weights: &CostWeights,
    tol: f64,
    max_iter: usize,
) -> Result<RiccatiSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument {
            name: "tol",
            reason: "must be positive".into(),
        });
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument {
            name: "max_iter",
            reason: "must be at least 1".into(),
        });
    }
    weights.check_dims(params)?;
    if params.n() == 1 && params.m() == 1 {
        return solve_scalar(params, weights, tol, max_iter);
    }

    let (a, b) = (params.a(), params.b());
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = weights.q.clone();
    let mut last = f64::INFINITY;
    for it in 1..=max_iter {
        let btp = &bt * &p;
        let g = &btp * b + &weights.r;
        let btpa = &btp * a;
        let x = linalg::solve_spd(&g, &btpa)?;
        let mut next = &weights.q + &at * &p * a - btpa.transpose() * x;
        next = (&next + next.transpose()) * 0.5;
        let diff = linalg::max_abs(&(&next - &p));
        p = next;
        if !diff.is_finite() || linalg::max_abs(&p) > 1e15 {
            return Err(Error::NonConvergent {
                iterations: it,
                residual: diff,
            });
        }
        last = diff;
        if diff < tol {
            return Ok(finish(params, weights, p, it));
        }
    }
    Err(Error::NonConvergent {
        iterations: max_iter,
        residual: last,
    })
}

fn solve_scalar(
    params: &SystemParams,
    weights: &CostWeights,
    tol: f64,
    max_iter: usize,
) -> Result<RiccatiSolution> {
    let (a, b) = (params.a[(0, 0)], params.b[(0, 0)]);
    let (q, r) = (weights.q[(0, 0)], weights.r[(0, 0)]);
    let mut p = q;
    let mut last = f64::INFINITY;
    for it in 1..=max_iter {
        let apb = a * p * b;
        let next = q + a * a * p - apb * apb / (b * b * p + r);
        let diff = (next - p).abs();
        p = next;
        if !diff.is_finite() || p > 1e15 {
            return Err(Error::NonConvergent {
                iterations: it,
                residual: diff,
            });
        }
        last = diff;
        if diff < tol {
            return Ok(finish(params, weights, DMatrix::from_element(1, 1, p), it));
        }
    }
    Err(Error::NonConvergent {
        iterations: max_iter,
        residual: last,
    })
}

fn finish(
    params: &SystemParams,
    weights: &CostWeights,
    p: DMatrix<f64>,
    iterations: usize,
) -> RiccatiSolution {
    let k = optimal_gain(params, weights, &p);
    let acl = params.a() + params.b() * &k;
    RiccatiSolution {
        cost: p.trace(),
        closed_loop_norm: linalg::spectral_norm(&acl),
        closed_loop_radius: linalg::spectral_radius(&acl),
        p,
        k,
        iterations,
    }
}

/// `K = −(BᵀPB+R)⁻¹BᵀPA`.
pub fn optimal_gain(params: &SystemParams, weights: &CostWeights, p: &DMatrix<f64>) -> DMatrix<f64> {
    let btp = params.b().transpose() * p;
    let g = &btp * params.b() + weights.r();
    let btpa = &btp * params.a();
    // R is positive definite so g is too.
    let chol = g.cholesky().expect("BᵀPB + R is positive definite");
    -chol.solve(&btpa)
}

/// `J(Θ) = trace(P(Θ))` with the default solver settings.
pub fn average_cost(params: &SystemParams, weights: &CostWeights) -> Result<f64> {
    let o = DareOptions::default();
    Ok(solve_dare(params, weights, o.tol, o.max_iter)?.cost)
}

/// `[B, AB, …, A^{n−1}B]`.
pub fn controllability_matrix(params: &SystemParams) -> DMatrix<f64> {
    let (n, m) = (params.n(), params.m());
    let mut c = DMatrix::zeros(n, n * m);
    let mut block = params.b().clone();
    for i in 0..n {
        c.columns_mut(i * m, m).copy_from(&block);
        block = params.a() * block;
    }
    c
}

/// `[M; MA; …; MA^{n−1}]` with `M` the symmetric square root of `Q`.
pub fn observability_matrix(params: &SystemParams, weights: &CostWeights) -> DMatrix<f64> {
    let n = params.n();
    let m_factor = linalg::sym_sqrt(weights.q());
    let rows = m_factor.nrows();
    let mut o = DMatrix::zeros(n * rows, n);
    let mut block = m_factor;
    for i in 0..n {
        o.rows_mut(i * rows, rows).copy_from(&block);
        block *= params.a();
    }
    o
}

/// Trace-ball membership plus controllability of `(A, B)` and observability of `(A, M)`.
pub fn check_admissible(params: &SystemParams, weights: &CostWeights, s: f64) -> bool {
    if weights.check_dims(params).is_err() || !params.in_trace_ball(s) {
        return false;
    }
    let n = params.n();
    linalg::rank(&controllability_matrix(params)) == n
        && linalg::rank(&observability_matrix(params, weights)) == n
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Positive root of `b²p² + p(r − qb² − a²r) − qr = 0`.
    fn scalar_oracle(a: f64, b: f64, q: f64, r: f64) -> f64 {
        let lin = r - q * b * b - a * a * r;
        let root = (lin * lin + 4.0 * b * b * q * r).sqrt();
        if lin > 0.0 {
            2.0 * q * r / (lin + root)
        } else {
            (root - lin) / (2.0 * b * b)
        }
    }

    #[test]
    fn scalar_example() {
        let sol = solve_dare(
            &SystemParams::scalar(0.9, 1.0),
            &CostWeights::scalar(1.0, 1.0).unwrap(),
            1e-12,
            10_000,
        )
        .unwrap();
        let p = scalar_oracle(0.9, 1.0, 1.0, 1.0);
        assert!((sol.p[(0, 0)] - p).abs() < 1e-10);
        assert!((sol.p[(0, 0)] - 1.4839).abs() < 1e-4);
        let k = -(0.9 * p) / (p + 1.0);
        assert!((sol.k[(0, 0)] - k).abs() < 1e-10);
        assert!((sol.k[(0, 0)] + 0.53766).abs() < 1e-4);
        assert!((0.9 + sol.k[(0, 0)] - 0.36234).abs() < 1e-4);
        assert!(sol.norm_stable());
    }

    #[test]
    fn zero_drift_gives_q() {
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::from_row_slice(2, 1, &[0.3, -1.2]);
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let w = CostWeights::new(q.clone(), DMatrix::from_element(1, 1, 0.7)).unwrap();
        let sol = solve_dare(&SystemParams::new(a, b).unwrap(), &w, 1e-10, 100).unwrap();
        assert_eq!(sol.p, q);
        assert!(sol.k.iter().all(|&v| v == 0.0));
        assert_eq!(sol.cost, 3.0);
    }

    #[test]
    fn paper_system_fixture() {
        // Oracle value for a = b = 0.001, q = 1, r = 0.1.
        let sol = solve_dare(
            &SystemParams::scalar(0.001, 0.001),
            &CostWeights::scalar(1.0, 0.1).unwrap(),
            1e-12,
            10_000,
        )
        .unwrap();
        let oracle = scalar_oracle(0.001, 0.001, 1.0, 0.1);
        assert!((sol.cost - oracle).abs() < 1e-12);
        assert!((sol.cost - 1.000_000_999_991).abs() < 1e-11);
    }

    #[test]
    fn average_cost_examples() {
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let w = CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
        assert_eq!(average_cost(&SystemParams::new(a, b).unwrap(), &w).unwrap(), 2.0);
        let j = average_cost(&SystemParams::scalar(0.9, 1.0), &CostWeights::scalar(1.0, 1.0).unwrap())
            .unwrap();
        assert!((j - scalar_oracle(0.9, 1.0, 1.0, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn multivariable_residual_and_stability() {
        let a = DMatrix::from_row_slice(2, 2, &[1.1, 0.3, 0.0, 0.8]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let params = SystemParams::new(a.clone(), b.clone()).unwrap();
        let w = CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
        let sol = solve_dare(&params, &w, 1e-10, 10_000).unwrap();
        let p = &sol.p;
        let btp = b.transpose() * p;
        let g = &btp * &b + w.r();
        let rhs = w.q() + a.transpose() * p * &a
            - (&btp * &a).transpose() * g.try_inverse().unwrap() * (&btp * &a);
        assert!(linalg::max_abs(&(p - rhs)) < 1e-9);
        assert!(sol.closed_loop_radius < 1.0);
    }

    #[test]
    fn non_stabilizable_is_reported() {
        let err = solve_dare(
            &SystemParams::scalar(1.5, 0.0),
            &CostWeights::scalar(1.0, 1.0).unwrap(),
            1e-10,
            10_000,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvergent { .. }));
    }

    #[test]
    fn dimension_and_argument_errors() {
        let w = CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
        assert!(matches!(
            solve_dare(&SystemParams::scalar(0.5, 1.0), &w, 1e-10, 10),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(SystemParams::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)).is_err());
        let ws = CostWeights::scalar(1.0, 1.0).unwrap();
        assert!(solve_dare(&SystemParams::scalar(0.5, 1.0), &ws, 0.0, 10).is_err());
        assert!(solve_dare(&SystemParams::scalar(0.5, 1.0), &ws, 1e-10, 0).is_err());
        assert!(CostWeights::scalar(-1.0, 1.0).is_err());
        assert!(CostWeights::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]),
            DMatrix::identity(1, 1)
        )
        .is_err());
    }

    #[test]
    fn admissibility_examples() {
        let w = CostWeights::scalar(1.0, 1.0).unwrap();
        assert!(check_admissible(&SystemParams::scalar(0.9, 1.0), &w, 2.0));
        assert!(!check_admissible(&SystemParams::scalar(0.9, 0.0), &w, 2.0));
        // trace(ΘᵀΘ) = 0.81 + 0.81 = 1.62 > 1
        assert!(!check_admissible(&SystemParams::scalar(0.9, 0.9), &w, 1.0));
    }

    #[test]
    fn theta_packing_round_trips() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 1, &[5.0, 6.0]);
        let p = SystemParams::new(a.clone(), b.clone()).unwrap();
        let theta = p.theta();
        assert_eq!(theta.shape(), (3, 2));
        assert_eq!(theta[(0, 1)], 3.0);
        assert_eq!(theta[(2, 1)], 6.0);
        assert_eq!(SystemParams::from_theta(&theta, 2).unwrap(), p);
        assert_eq!(p.trace_norm_sq(), theta.norm_squared());
    }

    #[test]
    fn scaling_q_increases_p() {
        let params = SystemParams::scalar(0.7, 0.4);
        let o = DareOptions::default();
        let base = solve_dare(&params, &CostWeights::scalar(1.0, 0.5).unwrap(), o.tol, o.max_iter)
            .unwrap()
            .cost;
        for c in [1.5, 2.0, 10.0] {
            let scaled =
                solve_dare(&params, &CostWeights::scalar(c, 0.5).unwrap(), o.tol, o.max_iter)
                    .unwrap()
                    .cost;
            assert!(scaled >= base);
        }
    }
}
