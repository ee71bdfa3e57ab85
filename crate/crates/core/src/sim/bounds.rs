use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lqr::{self, CostWeights, SystemParams};

pub const RHO_CAP: f64 = 0.99;

/// Constants of the regret and state bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// `D ≥ ‖P(Θ)‖` over the admissible set.
    pub d: f64,
    /// `C ≥ ‖K(Θ)‖` over the admissible set.
    pub c: f64,
    /// Contraction of `Ã + B̃K(Θ̃)`, capped below one.
    pub rho: f64,
    /// Bound on `‖A* + B*K(Θ)‖`.
    pub eta_spec: f64,
    pub nu: f64,
    pub m_const: f64,
    pub u0: f64,
    pub hc: f64,
    pub g: f64,
    /// `S`, the trace-ball radius.
    pub s: f64,
    /// Sub-Gaussian constant `L`.
    pub sub_gaussian: f64,
    pub method: String,
}

impl BoundConstants {
    /// Sweeps `samples` uniform draws from the trace ball plus `Θ*` itself,
    /// keeping the largest `‖P‖`, `‖K‖` and closed-loop norms among the
    /// admissible ones.
    pub fn estimate(
        truth: &SystemParams,
        weights: &CostWeights,
        s: f64,
        sub_gaussian: f64,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let (n, m) = (truth.n(), truth.m());
        let p = n + m;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut d, mut c, mut rho, mut eta) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        let mut used = 0;
        let mut visit = |theta: &SystemParams| {
            if !lqr::check_admissible(theta, weights, s) {
                return;
            }
            let Ok(sol) = lqr::solve_dare(theta, weights, 1e-10, 10_000) else {
                return;
            };
            d = d.max(linalg::spectral_norm(&sol.p));
            c = c.max(linalg::spectral_norm(&sol.k));
            rho = rho.max(sol.closed_loop_norm);
            eta = eta.max(linalg::spectral_norm(&(truth.a() + truth.b() * &sol.k)));
            used += 1;
        };
        visit(truth);
        let dim = p * n;
        for _ in 0..samples {
            let g = DMatrix::<f64>::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
            let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64) * s;
            let theta = g.clone() * (r / g.norm());
            if let Ok(params) = SystemParams::from_theta(&theta, n) {
                visit(&params);
            }
        }
        if used == 0 {
            return Err(Error::InvalidConstants("no admissible sample in the trace ball".into()));
        }
        let m_const = s;
        let (u0, hc, g) = auxiliary(s, m_const, p);
        let consts = Self {
            d,
            c,
            rho: rho.min(RHO_CAP),
            eta_spec: eta,
            nu: 1.0,
            m_const,
            u0,
            hc,
            g,
            s,
            sub_gaussian,
            method: format!("sampled({samples})"),
        };
        consts.validate()?;
        Ok(consts)
    }

    /// Recomputes `U0`, `H` and `G` after `s` or `m_const` changed.
    pub fn refresh_auxiliary(&mut self, p: usize) {
        let (u0, hc, g) = auxiliary(self.s, self.m_const, p);
        self.u0 = u0;
        self.hc = hc;
        self.g = g;
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("D", self.d), ("C", self.c), ("eta", self.eta_spec), ("nu", self.nu)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConstants(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if !(self.d > 0.0) {
            return Err(Error::InvalidConstants("D must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConstants(format!("rho = {} must lie in (0, 1)", self.rho)));
        }
        Ok(())
    }
}

/// `U0 = 1/(16^{p−2}(1 ∨ S^{2(p−2)}))`, `H = 16 ∨ 4S²M²/(pU0)`,
/// `G = 2(2S p^{p+1/2}/U^{1/2})^{1/(p+1)}` with `U = U0/H`.
pub fn auxiliary(s: f64, m_const: f64, p: usize) -> (f64, f64, f64) {
    let pf = p as f64;
    let e = pf - 2.0;
    let u0 = 1.0 / (16f64.powf(e) * 1f64.max(s.powf(2.0 * e)));
    let hc = 16f64.max(4.0 * s * s * m_const * m_const / (pf * u0));
    let u = u0 / hc;
    let g = 2.0 * (2.0 * s * pf.powf(pf + 0.5) / u.sqrt()).powf(1.0 / (pf + 1.0));
    (u0, hc, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Clean,
    Attacked,
}

/// Realized (or a priori) quantities from one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedQuantities {
    /// `X_T` (or `X_{a,T}`).
    pub state_bound: f64,
    /// `Λ`; ignored for the clean kind.
    pub lambda_budget: f64,
    /// `log(det V̄_T / det λI)`, realized or from the determinant bound.
    pub log_det_ratio: f64,
    /// `β_T(δ/4)`.
    pub beta: f64,
    /// `Σ (‖ζ_s‖²_{V̄_s⁻¹} ∧ ½)`; `None` falls back to `T/2`.
    pub zeta_weighted: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    pub noise: f64,
    pub martingale: f64,
    pub switching: f64,
    pub prediction: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.noise + self.martingale + self.switching + self.prediction
    }
}

/// The four terms of the regret bound. The clean bound is the attacked one
/// with `Λ = 0` and no `ζ` contribution.
#[allow(clippy::too_many_arguments)]
pub fn bound_terms(
    kind: BoundKind,
    consts: &BoundConstants,
    realized: &RealizedQuantities,
    horizon: usize,
    delta: f64,
    lambda: f64,
    n: usize,
    m: usize,
) -> BoundTerms {
    let t = horizon as f64;
    let nf = n as f64;
    let p = (n + m) as f64;
    let (lam_budget, zeta) = match kind {
        BoundKind::Clean => (0.0, 0.0),
        BoundKind::Attacked => (realized.lambda_budget, realized.zeta_weighted.unwrap_or(t / 2.0)),
    };
    let d = consts.d;
    let c2 = consts.c * consts.c;
    let x2 = realized.state_bound * realized.state_bound;
    let s = consts.s;

    let w = consts.sub_gaussian * nf * (2.0 * nf * (8.0 * nf * t / delta).ln()).sqrt();
    let noise = 2.0 * d * w * w * (2.0 * t * (8.0 / delta).ln()).sqrt();

    let inner = consts.nu + t * d * d * s * s * x2 * (1.0 + c2);
    let b_prime = inner * (4.0 * nf / (consts.nu.sqrt() * delta) * inner.sqrt()).ln();
    let martingale = nf * b_prime.max(0.0).sqrt();

    let growth = x2 * (1.0 + c2) + lam_budget * lam_budget;
    let switching = 2.0 * d * x2 * p * (1.0 + 2.0 * t / lambda * growth).log2();

    let prediction = 8.0 / lambda.sqrt() * growth * s * d * realized.beta.sqrt()
        * (2.0 * realized.log_det_ratio.max(0.0) + zeta).sqrt()
        * t.sqrt();

    BoundTerms {
        noise,
        martingale,
        switching,
        prediction,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn theoretical_bound(
    kind: BoundKind,
    consts: &BoundConstants,
    realized: &RealizedQuantities,
    horizon: usize,
    delta: f64,
    lambda: f64,
    n: usize,
    m: usize,
) -> f64 {
    bound_terms(kind, consts, realized, horizon, delta, lambda, n, m).total()
}

/// `α^a_t = (1/(1−ρ))(η/ρ)^p · (2sΛ + G(Z+Λ)^{p/(p+1)}β^{1/(2(p+1))} + 2L√(n log(4nt(t+1)/δ)))`.
#[allow(clippy::too_many_arguments)]
pub fn state_bound_alpha(
    consts: &BoundConstants,
    beta: f64,
    z_max: f64,
    lambda_budget: f64,
    t: usize,
    delta: f64,
    n: usize,
    m: usize,
) -> Result<f64> {
    if !(consts.rho < 1.0) || !(consts.rho > 0.0) {
        return Err(Error::InvalidConstants(format!("rho = {} must lie in (0, 1)", consts.rho)));
    }
    let p = (n + m) as f64;
    let nf = n as f64;
    let t = t.max(1) as f64;
    let prefactor = (consts.eta_spec / consts.rho).powf(p) / (1.0 - consts.rho);
    let attack = 2.0 * consts.s * lambda_budget;
    let model = consts.g * (z_max + lambda_budget).powf(p / (p + 1.0)) * beta.powf(1.0 / (2.0 * (p + 1.0)));
    let noise = 2.0 * consts.sub_gaussian * (nf * (4.0 * nf * t * (t + 1.0) / delta).ln()).sqrt();
    Ok(prefactor * (attack + model + noise))
}
