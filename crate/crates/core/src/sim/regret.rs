use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lqr::SystemParams;
use crate::sim::episode::EpisodeTrace;

/// Cross-episode estimate of `Σ_{s=1}^{t} (E[c_s] − J*)`.
///
/// Traces are folded in seed order, so the result does not depend on the
/// order they are passed in.
pub fn empirical_regret(traces: &[&EpisodeTrace], j_star: f64) -> Result<Vec<f64>> {
    let Some(first) = traces.first() else {
        return Ok(Vec::new());
    };
    let len = first.steps.len();
    if let Some(bad) = traces.iter().find(|t| t.steps.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            found: bad.steps.len(),
        });
    }
    let mut sorted: Vec<&EpisodeTrace> = traces.to_vec();
    sorted.sort_by_key(|t| t.seed);
    let k = sorted.len() as f64;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        if t > 0 {
            let mean = sorted.iter().map(|tr| tr.steps[t].cost).sum::<f64>() / k;
            acc += mean - j_star;
        }
        out.push(acc);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretDecomposition {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

/// `R1`, `R2`, `R3` with conditional expectations replaced by the
/// noise-free prediction `μ_t = Θ*ᵀz_t`. The policy after the last step is
/// taken to be the last one in force.
pub fn regret_decomposition(trace: &EpisodeTrace, truth: &SystemParams) -> Result<RegretDecomposition> {
    let snapshot = |t: usize| -> Result<&DMatrix<f64>> {
        let idx = trace.steps[t].policy;
        trace.switches.get(idx).map(|s| &s.p).ok_or(Error::MissingSnapshot(t))
    };
    let tilde = |t: usize| -> Result<&SystemParams> {
        let idx = trace.steps[t].policy;
        trace
            .switches
            .get(idx)
            .map(|s| &s.theta_tilde)
            .ok_or(Error::MissingSnapshot(t))
    };
    let quad = |v: &DVector<f64>, p: &DMatrix<f64>| v.dot(&(p * v));
    let (mut r1, mut r2, mut r3) = (0.0, 0.0, 0.0);
    let last = trace.steps.len().saturating_sub(1);
    for (t, step) in trace.steps.iter().enumerate() {
        let p_now = snapshot(t)?;
        let p_next = snapshot((t + 1).min(last))?;
        let mu = truth.a() * &step.x + truth.b() * &step.u;
        let th = tilde(t)?;
        let opt = th.a() * &step.x + th.b() * &step.u;
        let mu_next = quad(&mu, p_next);
        r1 += quad(&step.x, p_now) - mu_next;
        r2 += quad(&mu, p_now) - mu_next;
        r3 += quad(&opt, p_now) - mu_next;
    }
    Ok(RegretDecomposition { r1, r2, r3 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    /// `p` in `R_t ≈ c·t^p`.
    pub exponent: f64,
    pub coefficient: f64,
    pub points: usize,
}

/// Least squares of `log R_t` on `log t` over `t > burn_in·T`, where
/// `curve[t]` is the regret after step `t`.
pub fn fit_regret_exponent(curve: &[f64], burn_in: f64) -> Result<ExponentFit> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::InvalidArgument {
            name: "burn_in",
            reason: "must lie in [0, 1)".into(),
        });
    }
    let horizon = curve.len().saturating_sub(1);
    let start = ((burn_in * horizon as f64).floor() as usize + 1).max(1);
    let window = curve.get(start..).unwrap_or(&[]);
    let positive: Vec<(f64, f64)> = window
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > 0.0 && r.is_finite())
        .map(|(i, &r)| (((start + i) as f64).ln(), r.ln()))
        .collect();
    let nonpositive = window.len() - positive.len();
    if positive.len() < 2 || nonpositive > positive.len() {
        return Err(Error::DegenerateCurve(format!(
            "{} of {} points after burn-in are nonpositive",
            nonpositive,
            window.len()
        )));
    }
    let k = positive.len() as f64;
    let mx = positive.iter().map(|p| p.0).sum::<f64>() / k;
    let my = positive.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = positive.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = positive.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateCurve("a single abscissa".into()));
    }
    let exponent = sxy / sxx;
    Ok(ExponentFit {
        exponent,
        coefficient: (my - exponent * mx).exp(),
        points: positive.len(),
    })
}
