//! Optimistic parameter selection: minimize `J(Θ) = trace(P(Θ))` over the
//! confidence ellipsoid intersected with the admissible set.
//!
//! The objective is non-convex in general, so the solver runs projected
//! Newton descent from several starts and keeps the cheapest end point.
//! Derivatives come from central finite differences of `J`. Iterates are
//! pulled back into the feasible set by the closed-form `V`-metric
//! projection onto the ellipsoid followed by the trace-ball constraint; when
//! those two disagree we fall back to the last feasible point on the segment
//! from an interior anchor.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimator::ConfidenceEllipsoid;
use crate::lqr::{self, CostWeights, DareOptions, SystemParams, BALL_SLACK};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfuConfig {
    /// Newton steps per restart.
    pub steps: usize,
    /// Initial step size `α`; halved on every rejected step.
    pub step_size: f64,
    pub restarts: usize,
    /// Central-difference step for the gradient.
    pub fd_eps: f64,
    /// Step for the second differences of the Hessian.
    pub hessian_eps: f64,
    /// `μ = hessian_regularization · ‖H‖_max` is added to the diagonal.
    pub hessian_regularization: f64,
    pub max_halvings: usize,
    /// Riccati tolerance used inside the solver (tighter than the default
    /// so that second differences stay meaningful).
    pub dare_tol: f64,
    pub dare_max_iter: usize,
}

impl Default for OfuConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            step_size: 0.1,
            restarts: 4,
            fd_eps: 1e-5,
            hessian_eps: 1e-4,
            hessian_regularization: 1e-6,
            max_halvings: 20,
            dare_tol: 1e-12,
            dare_max_iter: 10_000,
        }
    }
}

impl OfuConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidArgument {
                name,
                reason: reason.to_string(),
            })
        };
        if self.steps == 0 {
            return bad("steps", "must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts", "must be at least 1");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size", "must be positive");
        }
        if !(self.fd_eps > 0.0) || !(self.hessian_eps > 0.0) {
            return bad("fd_eps", "must be positive");
        }
        if !(self.dare_tol > 0.0) || self.dare_max_iter == 0 {
            return bad("dare_tol", "Riccati settings must be positive");
        }
        Ok(())
    }

    fn dare(&self) -> DareOptions {
        DareOptions {
            tol: self.dare_tol,
            max_iter: self.dare_max_iter,
        }
    }
}

/// Where each restart started and ended.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome {
    pub start_cost: f64,
    pub end_cost: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfuOutcome {
    pub params: SystemParams,
    pub cost: f64,
    pub restarts: Vec<RestartOutcome>,
}

struct Objective<'a> {
    weights: &'a CostWeights,
    n: usize,
    opts: DareOptions,
}

impl Objective<'_> {
    fn eval(&self, theta: &DMatrix<f64>) -> Result<f64> {
        let params = SystemParams::from_theta(theta, self.n)?;
        Ok(lqr::solve_dare(&params, self.weights, self.opts.tol, self.opts.max_iter)?.cost)
    }

    fn gradient(&self, theta: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
        match self.gradient_once(theta, eps) {
            Err(Error::NonConvergent { .. }) => self.gradient_once(theta, eps / 10.0),
            other => other,
        }
    }

    fn gradient_once(&self, theta: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
        let mut grad = DMatrix::zeros(theta.nrows(), theta.ncols());
        let mut probe = theta.clone();
        for i in 0..theta.len() {
            let x0 = theta[i];
            probe[i] = x0 + eps;
            let up = self.eval(&probe)?;
            probe[i] = x0 - eps;
            let down = self.eval(&probe)?;
            probe[i] = x0;
            grad[i] = (up - down) / (2.0 * eps);
        }
        Ok(grad)
    }

    /// Hessian over the column-major vectorization of `Θ`.
    fn hessian(&self, theta: &DMatrix<f64>, center: f64, h: f64) -> Result<DMatrix<f64>> {
        let d = theta.len();
        let mut hess = DMatrix::zeros(d, d);
        let mut probe = theta.clone();
        for i in 0..d {
            let xi = theta[i];
            probe[i] = xi + h;
            let up = self.eval(&probe)?;
            probe[i] = xi - h;
            let down = self.eval(&probe)?;
            probe[i] = xi;
            hess[(i, i)] = (up - 2.0 * center + down) / (h * h);
            for j in 0..i {
                let xj = theta[j];
                let mut corner = |si: f64, sj: f64| {
                    probe[i] = xi + si * h;
                    probe[j] = xj + sj * h;
                    let v = self.eval(&probe);
                    probe[i] = xi;
                    probe[j] = xj;
                    v
                };
                let pp = corner(1.0, 1.0)?;
                let pm = corner(1.0, -1.0)?;
                let mp = corner(-1.0, 1.0)?;
                let mm = corner(-1.0, -1.0)?;
                let v = (pp - pm - mp + mm) / (4.0 * h * h);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Ok(hess)
    }
}

/// Central finite-difference gradient of `trace(P(Θ))` with respect to `Θ`.
///
/// A Riccati failure at a perturbed point retries once with `fd_eps / 10`.
pub fn trace_p_gradient(params: &SystemParams, weights: &CostWeights, fd_eps: f64) -> Result<DMatrix<f64>> {
    if !(fd_eps > 0.0) {
        return Err(Error::InvalidArgument {
            name: "fd_eps",
            reason: "must be positive".into(),
        });
    }
    let cfg = OfuConfig::default();
    Objective {
        weights,
        n: params.n(),
        opts: cfg.dare(),
    }
    .gradient(&params.theta(), fd_eps)
}

/// Finite-difference Hessian of `trace(P(Θ))` over the column-major entries of `Θ`.
pub fn trace_p_hessian(params: &SystemParams, weights: &CostWeights, eps: f64) -> Result<DMatrix<f64>> {
    let obj = Objective {
        weights,
        n: params.n(),
        opts: OfuConfig::default().dare(),
    };
    let theta = params.theta();
    let center = obj.eval(&theta)?;
    obj.hessian(&theta, center, eps)
}

/// Closed-form projection in the `V`-weighted metric: exterior points are
/// scaled toward the center until `Tr(ΔᵀVΔ) = β`.
pub fn project_to_confidence(candidate: &SystemParams, ellipsoid: &ConfidenceEllipsoid) -> SystemParams {
    let theta = project_theta_to_confidence(&candidate.theta(), ellipsoid);
    SystemParams::from_theta(&theta, candidate.n()).expect("shape preserved")
}

fn project_theta_to_confidence(theta: &DMatrix<f64>, ellipsoid: &ConfidenceEllipsoid) -> DMatrix<f64> {
    let q = ellipsoid.quadratic(theta);
    if q <= ellipsoid.radius {
        return theta.clone();
    }
    let delta = theta - &ellipsoid.center;
    &ellipsoid.center + delta / (q / ellipsoid.radius).sqrt()
}

fn scale_to_ball(theta: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
    let norm_sq = theta.norm_squared();
    if norm_sq > s * s {
        theta * (s / norm_sq.sqrt())
    } else {
        theta.clone()
    }
}

/// Rescales into the trace ball, then repairs controllability/observability
/// failures by nudging every entry of `B` by `1e-8` once.
pub fn project_to_admissible(candidate: &SystemParams, s: f64, weights: &CostWeights) -> Result<SystemParams> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument {
            name: "s",
            reason: "must be positive".into(),
        });
    }
    let n = candidate.n();
    let scaled = SystemParams::from_theta(&scale_to_ball(&candidate.theta(), s), n)?;
    if lqr::check_admissible(&scaled, weights, s) {
        return Ok(scaled);
    }
    let b = scaled.b().map(|v| if v >= 0.0 { v + 1e-8 } else { v - 1e-8 });
    let nudged = SystemParams::new(scaled.a().clone(), b)?;
    let nudged = SystemParams::from_theta(&scale_to_ball(&nudged.theta(), s), n)?;
    if lqr::check_admissible(&nudged, weights, s) {
        Ok(nudged)
    } else {
        Err(Error::Inadmissible(
            "controllability or observability fails after perturbing B".into(),
        ))
    }
}

/// The intersection of a confidence ellipsoid with the trace ball, with one
/// known feasible anchor point.
#[derive(Debug, Clone)]
pub struct FeasibleRegion<'a> {
    ellipsoid: &'a ConfidenceEllipsoid,
    s: f64,
    anchor: DMatrix<f64>,
}

impl<'a> FeasibleRegion<'a> {
    /// Finds an anchor on the curve `Θ(μ) = (I + μV)⁻¹μVΘ̂`, which runs from the
    /// origin to the center and contains the minimum-norm point of the
    /// ellipsoid. The intersection is empty exactly when that point lies
    /// outside the ball.
    pub fn new(ellipsoid: &'a ConfidenceEllipsoid, s: f64) -> Result<Self> {
        let c = &ellipsoid.center;
        if c.norm_squared() <= s * s {
            return Ok(Self {
                ellipsoid,
                s,
                anchor: c.clone(),
            });
        }
        let eig = ellipsoid.shape.clone().symmetric_eigen();
        let v = eig.eigenvalues.clone();
        let rotated = eig.eigenvectors.transpose() * c;
        let weights: Vec<f64> = (0..rotated.nrows()).map(|i| rotated.row(i).norm_squared()).collect();
        let gap = |mu: f64| -> f64 {
            v.iter()
                .zip(&weights)
                .map(|(vi, w)| vi / (1.0 + mu * vi).powi(2) * w)
                .sum()
        };
        let norm_sq = |mu: f64| -> f64 {
            v.iter()
                .zip(&weights)
                .map(|(vi, w)| (mu * vi / (1.0 + mu * vi)).powi(2) * w)
                .sum()
        };
        let beta = ellipsoid.radius;
        let mu_beta = if gap(0.0) <= beta {
            0.0
        } else {
            log_bisect(|mu| gap(mu) <= beta)
        };
        let mu_s = log_bisect(|mu| norm_sq(mu) > s * s);
        if mu_beta > mu_s * (1.0 + 1e-9) {
            return Err(Error::NoFeasiblePoint);
        }
        let mu = if mu_beta == 0.0 {
            0.5 * mu_s
        } else {
            (mu_beta * mu_s).sqrt().min(mu_s)
        };
        let diag = v.map(|vi| mu * vi / (1.0 + mu * vi));
        let anchor = &eig.eigenvectors * DMatrix::from_diagonal(&diag) * rotated;
        Ok(Self { ellipsoid, s, anchor })
    }

    pub fn anchor(&self) -> &DMatrix<f64> {
        &self.anchor
    }

    pub fn contains(&self, theta: &DMatrix<f64>) -> bool {
        self.ellipsoid.contains_theta(theta) && theta.norm_squared() <= self.s * self.s * (1.0 + BALL_SLACK)
    }

    /// Maps any point into the intersection.
    pub fn project(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        let inside = project_theta_to_confidence(theta, self.ellipsoid);
        if inside.norm_squared() <= self.s * self.s {
            return inside;
        }
        let radial = scale_to_ball(&inside, self.s);
        if self.ellipsoid.contains_theta(&radial) {
            return radial;
        }
        // The segment anchor → inside stays in the ellipsoid by convexity; cut it at the ball.
        let d = &inside - &self.anchor;
        let dd = d.norm_squared();
        if dd == 0.0 {
            return self.anchor.clone();
        }
        let ad = self.anchor.dot(&d);
        let aa = self.anchor.norm_squared();
        let disc = (ad * ad - dd * (aa - self.s * self.s)).max(0.0);
        let tau = ((-ad + disc.sqrt()) / dd).clamp(0.0, 1.0);
        &self.anchor + d * tau
    }
}

/// Smallest `μ > 0` (to bisection accuracy) at which a monotone predicate flips to true.
fn log_bisect(pred: impl Fn(f64) -> bool) -> f64 {
    let (mut lo, mut hi) = (1e-300_f64, 1.0_f64);
    while !pred(hi) {
        lo = hi;
        hi *= 4.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    if pred(lo) {
        return lo;
    }
    for _ in 0..200 {
        let mid = if lo < 1e-200 { (lo.ln() * 0.5 + hi.ln() * 0.5).exp() } else { 0.5 * (lo + hi) };
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

/// Uniform draw from the ellipsoid.
fn sample_in_ellipsoid<R: Rng + ?Sized>(ellipsoid: &ConfidenceEllipsoid, rng: &mut R) -> DMatrix<f64> {
    let (p, n) = ellipsoid.center.shape();
    let d = p * n;
    let mut u = DMatrix::<f64>::from_fn(p, n, |_, _| StandardNormal.sample(rng));
    let norm = u.norm();
    if norm > 0.0 {
        let r: f64 = rng.random::<f64>().powf(1.0 / d as f64);
        u *= r * ellipsoid.radius.sqrt() / norm;
    }
    // Δ = L⁻ᵀu gives Tr(ΔᵀVΔ) = ‖u‖².
    let chol = ellipsoid.shape.clone().cholesky().expect("shape is positive definite");
    let lt = chol.l().transpose();
    let delta = lt.solve_upper_triangular(&u).expect("triangular factor is invertible");
    &ellipsoid.center + delta
}

/// Returns the cheapest admissible end point of projected Newton descent over
/// `restarts` starts: the ellipsoid center, `warm_start` when given, and
/// random draws from the ellipsoid.
///
/// `t` is the current step; the intended accuracy is `1/√t` above the
/// infimum. The solver does not certify it; it runs `cfg.steps` iterations
/// or until no step decreases `J`.
pub fn select_optimistic<R: Rng + ?Sized>(
    ellipsoid: &ConfidenceEllipsoid,
    weights: &CostWeights,
    s: f64,
    t: usize,
    cfg: &OfuConfig,
    warm_start: Option<&SystemParams>,
    rng: &mut R,
) -> Result<OfuOutcome> {
    let _ = t;
    cfg.validate()?;
    let n = ellipsoid.n();
    let region = FeasibleRegion::new(ellipsoid, s)?;
    let objective = Objective {
        weights,
        n,
        opts: cfg.dare(),
    };

    let mut starts = vec![ellipsoid.center.clone()];
    if let Some(w) = warm_start {
        starts.push(w.theta());
    }
    while starts.len() < cfg.restarts {
        starts.push(sample_in_ellipsoid(ellipsoid, rng));
    }
    starts.truncate(cfg.restarts);

    let mut best: Option<(SystemParams, f64)> = None;
    let mut outcomes = Vec::with_capacity(starts.len());
    for start in starts {
        let Some(x0) = admissible_start(&region, &start, s, weights, n) else {
            continue;
        };
        let Ok(j0) = objective.eval(&x0) else {
            continue;
        };
        let (x, j, steps) = descend(&objective, &region, x0, j0, cfg);
        outcomes.push(RestartOutcome {
            start_cost: j0,
            end_cost: j,
            steps,
        });
        let Ok(params) = SystemParams::from_theta(&x, n) else {
            continue;
        };
        if !lqr::check_admissible(&params, weights, s) {
            continue;
        }
        if best.as_ref().is_none_or(|(_, bj)| j < *bj) {
            best = Some((params, j));
        }
    }
    let (params, cost) = best.ok_or(Error::NoFeasiblePoint)?;
    Ok(OfuOutcome {
        params,
        cost,
        restarts: outcomes,
    })
}

fn admissible_start(
    region: &FeasibleRegion<'_>,
    start: &DMatrix<f64>,
    s: f64,
    weights: &CostWeights,
    n: usize,
) -> Option<DMatrix<f64>> {
    let x = region.project(start);
    let params = SystemParams::from_theta(&x, n).ok()?;
    if lqr::check_admissible(&params, weights, s) {
        return Some(x);
    }
    let fixed = project_to_admissible(&params, s, weights).ok()?.theta();
    region.contains(&fixed).then_some(fixed)
}

fn descend(
    objective: &Objective<'_>,
    region: &FeasibleRegion<'_>,
    mut x: DMatrix<f64>,
    mut jx: f64,
    cfg: &OfuConfig,
) -> (DMatrix<f64>, f64, usize) {
    let d = x.len();
    let mut taken = 0;
    for _ in 0..cfg.steps {
        let Ok(grad) = objective.gradient(&x, cfg.fd_eps) else {
            break;
        };
        let g = DMatrix::from_column_slice(d, 1, grad.as_slice());
        let direction = match objective.hessian(&x, jx, cfg.hessian_eps) {
            Ok(mut h) => {
                let mu = cfg.hessian_regularization * h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                for i in 0..d {
                    h[(i, i)] += mu;
                }
                match h.cholesky() {
                    Some(chol) => -chol.solve(&g),
                    None => -g.clone(),
                }
            }
            Err(_) => -g.clone(),
        };
        let direction = DMatrix::from_column_slice(x.nrows(), x.ncols(), direction.as_slice());

        let mut alpha = cfg.step_size;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let candidate = region.project(&(&x + &direction * alpha));
            if let Ok(jc) = objective.eval(&candidate) {
                if jc < jx {
                    accepted = Some((candidate, jc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((candidate, jc)) = accepted else {
            break;
        };
        taken += 1;
        let moved = (&candidate - &x).amax();
        x = candidate;
        jx = jc;
        if moved < 1e-13 {
            break;
        }
    }
    (x, jx, taken)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn weights() -> CostWeights {
        CostWeights::scalar(1.0, 0.1).unwrap()
    }

    fn p_scalar(a: f64, b: f64, q: f64, r: f64) -> f64 {
        let lin = r - q * b * b - a * a * r;
        let root = (lin * lin + 4.0 * b * b * q * r).sqrt();
        if lin > 0.0 {
            2.0 * q * r / (lin + root)
        } else {
            (root - lin) / (2.0 * b * b)
        }
    }

    /// Dense grid over the bounding box of a 2-D (a, b) ellipsoid.
    fn grid_infimum(e: &ConfidenceEllipsoid, s: f64, q: f64, r: f64, res: usize) -> f64 {
        let vinv = e.shape.clone().try_inverse().unwrap();
        let ha = (e.radius * vinv[(0, 0)]).sqrt();
        let hb = (e.radius * vinv[(1, 1)]).sqrt();
        let mut best = f64::INFINITY;
        for i in 0..res {
            for j in 0..res {
                let a = e.center[(0, 0)] - ha + 2.0 * ha * i as f64 / (res - 1) as f64;
                let b = e.center[(1, 0)] - hb + 2.0 * hb * j as f64 / (res - 1) as f64;
                let theta = DMatrix::from_column_slice(2, 1, &[a, b]);
                if b == 0.0 || a * a + b * b > s * s || !e.contains_theta(&theta) {
                    continue;
                }
                best = best.min(p_scalar(a, b, q, r));
            }
        }
        best
    }

    #[test]
    fn tiny_ellipsoid_returns_truth() {
        let truth = SystemParams::scalar(0.5, 0.4);
        let e = ConfidenceEllipsoid::new(truth.theta(), DMatrix::identity(2, 2), 1e-8, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = select_optimistic(&e, &weights(), 1.0, 10, &OfuConfig::default(), None, &mut rng).unwrap();
        let j_true = lqr::average_cost(&truth, &weights()).unwrap();
        assert!((out.cost - j_true).abs() <= 1e-4);
        assert!(e.contains_theta(&out.params.theta()));
    }

    #[test]
    fn matches_grid_on_boundary_optimum() {
        // Center far from a = 0, so the optimum sits on the boundary.
        let center = DMatrix::from_column_slice(2, 1, &[0.8, 0.3]);
        let shape = DMatrix::from_row_slice(2, 2, &[40.0, 5.0, 5.0, 10.0]);
        let e = ConfidenceEllipsoid::new(center, shape, 2.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = select_optimistic(&e, &weights(), 1.0, 50, &OfuConfig::default(), None, &mut rng).unwrap();
        let grid = grid_infimum(&e, 1.0, 1.0, 0.1, 200);
        assert!(out.cost <= grid + 1.0 / 50.0_f64.sqrt(), "solver {} grid {}", out.cost, grid);
        assert!(out.cost <= grid + 1e-3, "solver {} grid {}", out.cost, grid);
        assert!(e.contains_theta(&out.params.theta()));
        assert!(lqr::check_admissible(&out.params, &weights(), 1.0));
        for r in &out.restarts {
            assert!(out.cost <= r.start_cost);
            assert!(r.end_cost <= r.start_cost);
        }
    }

    #[test]
    fn single_point_intersection() {
        // Center on the ball boundary with a vanishing radius.
        let c = DMatrix::from_column_slice(2, 1, &[0.6, 0.8]);
        let e = ConfidenceEllipsoid::new(c.clone(), DMatrix::identity(2, 2), 1e-14, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = select_optimistic(&e, &weights(), 1.0, 5, &OfuConfig::default(), None, &mut rng).unwrap();
        assert!((out.params.theta() - c).amax() < 1e-6);
    }

    #[test]
    fn disjoint_sets_report_no_feasible_point() {
        let c = DMatrix::from_column_slice(2, 1, &[3.0, 0.0]);
        let e = ConfidenceEllipsoid::new(c, DMatrix::identity(2, 2), 1.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = select_optimistic(&e, &weights(), 1.0, 5, &OfuConfig::default(), None, &mut rng).unwrap_err();
        assert_eq!(err, Error::NoFeasiblePoint);
    }

    #[test]
    fn anchor_is_feasible_when_center_is_outside_ball() {
        let c = DMatrix::from_column_slice(2, 1, &[1.3, 0.2]);
        let shape = DMatrix::from_row_slice(2, 2, &[9.0, 1.0, 1.0, 2.0]);
        let e = ConfidenceEllipsoid::new(c, shape, 1.0, 0.1).unwrap();
        let region = FeasibleRegion::new(&e, 1.0).unwrap();
        assert!(region.contains(region.anchor()));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let y = DMatrix::from_fn(2, 1, |_, _| rng.random_range(-4.0..4.0));
            assert!(region.contains(&region.project(&y)));
        }
    }

    #[test]
    fn gradient_examples() {
        let w = CostWeights::scalar(1.0, 1.0).unwrap();
        let g = trace_p_gradient(&SystemParams::scalar(0.9, 1.0), &w, 1e-6).unwrap();
        let fine = trace_p_gradient(&SystemParams::scalar(0.9, 1.0), &w, 1e-8).unwrap();
        assert!(((g[(0, 0)] - fine[(0, 0)]) / g[(0, 0)]).abs() < 1e-4);
        let h = 1e-6;
        let oracle = (p_scalar(0.9 + h, 1.0, 1.0, 1.0) - p_scalar(0.9 - h, 1.0, 1.0, 1.0)) / (2.0 * h);
        assert!(((g[(0, 0)] - oracle) / oracle).abs() < 1e-4);

        let at_zero = trace_p_gradient(&SystemParams::scalar(0.0, 0.7), &w, 1e-5).unwrap();
        assert!(at_zero[(0, 0)].abs() < 1e-6);

        // With A = 0 the gain is zero, so R does not enter to first order.
        let a0 = SystemParams::new(DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 1, &[1.0, 0.5])).unwrap();
        let w1 = CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
        let w2 = CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1) * 3.0).unwrap();
        let g1 = trace_p_gradient(&a0, &w1, 1e-5).unwrap();
        let g2 = trace_p_gradient(&a0, &w2, 1e-5).unwrap();
        assert!((g1 - g2).amax() < 1e-6);
        assert!(trace_p_gradient(&a0, &w1, 0.0).is_err());
    }

    #[test]
    fn hessian_is_symmetric_and_matches_second_difference() {
        let w = CostWeights::scalar(1.0, 1.0).unwrap();
        let params = SystemParams::scalar(0.6, 0.8);
        let h = trace_p_hessian(&params, &w, 1e-4).unwrap();
        assert!((h[(0, 1)] - h[(1, 0)]).abs() < 1e-12);
        let e = 1e-3;
        let oracle = (p_scalar(0.6 + e, 0.8, 1.0, 1.0) - 2.0 * p_scalar(0.6, 0.8, 1.0, 1.0)
            + p_scalar(0.6 - e, 0.8, 1.0, 1.0))
            / (e * e);
        assert!(((h[(0, 0)] - oracle) / oracle).abs() < 1e-3);
    }

    #[test]
    fn confidence_projection_examples() {
        let e = ConfidenceEllipsoid::new(DMatrix::zeros(2, 1), DMatrix::identity(2, 2), 1.0, 0.1).unwrap();
        let inside = SystemParams::scalar(0.3, 0.2);
        assert_eq!(project_to_confidence(&inside, &e), inside);
        let out = project_to_confidence(&SystemParams::scalar(3.0, 0.0), &e);
        assert!((out.a()[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(out.b()[(0, 0)], 0.0);
    }

    #[test]
    fn admissible_projection_examples() {
        let w = CostWeights::scalar(1.0, 1.0).unwrap();
        let s = 0.5;
        let big = SystemParams::scalar(0.6, 0.8); // trace = 1 = 4 s²
        let out = project_to_admissible(&big, s, &w).unwrap();
        assert!((out.trace_norm_sq() - s * s).abs() < 1e-15);
        let fine = SystemParams::scalar(0.2, 0.3);
        assert_eq!(project_to_admissible(&fine, s, &w).unwrap(), fine);
        let dead = project_to_admissible(&SystemParams::scalar(0.2, 0.0), s, &w).unwrap();
        assert_eq!(dead.b()[(0, 0)].abs(), 1e-8);
        assert!(lqr::check_admissible(&dead, &w, s));
        // A = I with one input can never be controlled in two dimensions.
        let w2 = CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
        let stuck = SystemParams::new(DMatrix::identity(2, 2) * 0.3, DMatrix::from_row_slice(2, 1, &[0.1, 0.1])).unwrap();
        assert!(matches!(project_to_admissible(&stuck, 1.0, &w2), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn two_dimensional_state_runs() {
        let w = CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
        let truth = SystemParams::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]),
            DMatrix::from_row_slice(2, 1, &[0.2, 0.5]),
        )
        .unwrap();
        let e = ConfidenceEllipsoid::new(truth.theta(), DMatrix::identity(3, 3) * 50.0, 0.5, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = OfuConfig {
            steps: 40,
            ..OfuConfig::default()
        };
        let out = select_optimistic(&e, &w, 2.0, 100, &cfg, Some(&truth), &mut rng).unwrap();
        let j_true = lqr::average_cost(&truth, &w).unwrap();
        assert!(out.cost <= j_true + 1e-9);
        assert!(e.contains_theta(&out.params.theta()));
    }
}
