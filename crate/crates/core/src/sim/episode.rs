use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{splitmix64, AttackMode, AttackPlan, LearningDatabase};
use crate::controller::{ControllerMode, ControllerSettings, ControllerState, SwitchRecord};
use crate::error::{Error, Result};
use crate::estimator::{self, Covariance};
use crate::linalg;
use crate::lqr::{self, SystemParams};
use crate::sim::noise::NoiseModel;

pub const DEFAULT_STATE_GUARD: f64 = 1e6;

const SOLVER_SALT: u64 = 0x0f0_5eed;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub truth: SystemParams,
    pub settings: ControllerSettings,
    pub mode: ControllerMode,
    pub attack: AttackPlan,
    /// `T`; the episode records steps `0..=T`.
    pub horizon: usize,
    pub noise: NoiseModel,
    /// Abort once `‖x‖` exceeds this.
    pub state_guard: f64,
    /// Check `Θ* ∈ C_t` at every step, not only at switches.
    pub track_coverage: bool,
    pub keep_database: bool,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument {
                name: "horizon",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.settings.delta > 0.0 && self.settings.delta < 1.0) {
            return Err(Error::InvalidArgument {
                name: "delta",
                reason: "must lie in (0, 1)".into(),
            });
        }
        if !(self.settings.lambda > 0.0) {
            return Err(Error::InvalidArgument {
                name: "lambda",
                reason: "must be positive".into(),
            });
        }
        if !(self.settings.s > 0.0) {
            return Err(Error::InvalidArgument {
                name: "s",
                reason: "must be positive".into(),
            });
        }
        self.attack.validate(self.truth.n())?;
        self.settings.ofu.validate()
    }

    /// Optimal average cost `σ²·trace(P(Θ*))` under noise covariance `σ²I`.
    pub fn j_star(&self) -> Result<f64> {
        let sigma = self.noise.sigma();
        Ok(sigma * sigma * lqr::average_cost(&self.truth, &self.settings.weights)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub cost: f64,
    pub switched: bool,
    pub held: bool,
    pub radius: f64,
    /// Index into [`EpisodeTrace::switches`] of the policy in force.
    pub policy: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub mode: String,
    pub steps: Vec<StepRecord>,
    pub switches: Vec<SwitchRecord>,
    pub j_star: f64,
    pub aborted: Option<Error>,
    /// `X_{a,T}`.
    pub max_state_norm: f64,
    /// `Z^a_T`, the largest true extended-state norm.
    pub max_ext_norm: f64,
    pub max_gain_norm: f64,
    /// Steps at which a due switch was skipped for lack of a feasible point.
    pub held_steps: Vec<usize>,
    /// `Θ* ∈ C_t` at every step; `None` when not tracked.
    pub covered: Option<bool>,
    pub covered_at_switches: bool,
    /// Least-squares estimate on the controller's data after the last step.
    pub terminal_estimate: Option<DMatrix<f64>>,
    /// `log det V̄_T` of the data the controller regresses on.
    pub log_det_v: f64,
    /// `‖z^a_s‖` per stored row.
    pub z_norms: Vec<f64>,
    /// `‖ζ_s‖` per stored row.
    pub zeta_norms: Vec<f64>,
    /// `Σ (‖ζ_s‖²_{V̄_s⁻¹} ∧ ½)`.
    pub zeta_weighted: f64,
    pub database: Option<LearningDatabase>,
}

impl EpisodeTrace {
    pub fn completed(&self) -> bool {
        self.aborted.is_none()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cost).collect()
    }

    /// `Σ_{s=1}^{t} (c_s − J*)`, zero at `t = 0`.
    pub fn cumulative_regret(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.steps
            .iter()
            .map(|s| {
                if s.t > 0 {
                    acc += s.cost - self.j_star;
                }
                acc
            })
            .collect()
    }

    pub fn terminal_regret(&self) -> f64 {
        self.cumulative_regret().last().copied().unwrap_or(0.0)
    }

    pub fn switch_count(&self) -> usize {
        self.switches.len()
    }

    /// The optimistic parameter in force after the last step.
    pub fn terminal_theta_tilde(&self) -> Option<&SystemParams> {
        self.switches.last().map(|s| &s.theta_tilde)
    }
}

/// `x' = A*x + B*u + ω`.
pub fn simulate_step<R: rand::Rng + ?Sized>(
    truth: &SystemParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
    noise: &NoiseModel,
    rng: &mut R,
) -> DVector<f64> {
    truth.a() * x + truth.b() * u + noise.sample(truth.n(), rng)
}

fn stage_cost(cfg: &EpisodeConfig, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let w = &cfg.settings.weights;
    (x.transpose() * w.q() * x)[(0, 0)] + (u.transpose() * w.r() * u)[(0, 0)]
}

fn extended(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
}

/// Tracks `Θ* ∈ C_t` step by step.
struct CoverageTracker {
    incremental: bool,
    cov: Covariance,
    zx: DMatrix<f64>,
    all: bool,
}

impl CoverageTracker {
    fn new(cfg: &EpisodeConfig) -> Result<Self> {
        let (n, m) = (cfg.truth.n(), cfg.truth.m());
        let clean_source = matches!(cfg.mode, ControllerMode::OracleClean) || cfg.attack.mode == AttackMode::None;
        Ok(Self {
            incremental: clean_source,
            cov: Covariance::new(n + m, cfg.settings.lambda)?,
            zx: DMatrix::zeros(n + m, n),
            all: true,
        })
    }

    fn check(&mut self, cfg: &EpisodeConfig, ctrl: &ControllerState, db: &LearningDatabase) -> Result<()> {
        let (shape, estimate) = if self.incremental || db.is_empty() {
            let v = self.cov.matrix().clone();
            let est = linalg::solve_spd(&v, &self.zx)?;
            (v, est)
        } else {
            let inputs = db.materialize(cfg.settings.lambda)?;
            (inputs.covariance(), estimator::least_squares_estimate(&inputs)?)
        };
        let radius = ctrl.confidence_radius(&cfg.mode, &cfg.settings, &shape)?;
        let delta = estimate - cfg.truth.theta();
        if linalg::weighted_trace(&delta, &shape) > radius * (1.0 + 1e-12) {
            self.all = false;
        }
        Ok(())
    }

    fn push(&mut self, z: &DVector<f64>, x_next: &DVector<f64>) -> Result<()> {
        if self.incremental {
            self.cov.push(z)?;
            self.zx.ger(1.0, z, x_next, 1.0);
        }
        Ok(())
    }
}

/// Runs one closed-loop episode from `x_0 = 0`. Aborts (no feasible point,
/// Riccati failure, state blow-up) end the trace early and are reported in
/// [`EpisodeTrace::aborted`].
pub fn run_episode(cfg: &EpisodeConfig, seed: u64) -> Result<EpisodeTrace> {
    cfg.validate()?;
    let (n, m) = (cfg.truth.n(), cfg.truth.m());
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solver_rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ SOLVER_SALT));
    let mut ctrl = ControllerState::new(n, m, cfg.settings.lambda)?;
    let mut db = LearningDatabase::new(n, m);
    let mut coverage = if cfg.track_coverage {
        Some(CoverageTracker::new(cfg)?)
    } else {
        None
    };
    let mut trace = EpisodeTrace {
        seed,
        mode: cfg.mode.label().to_string(),
        steps: Vec::with_capacity(cfg.horizon + 1),
        switches: Vec::new(),
        j_star: cfg.j_star()?,
        aborted: None,
        max_state_norm: 0.0,
        max_ext_norm: 0.0,
        max_gain_norm: 0.0,
        held_steps: Vec::new(),
        covered: None,
        covered_at_switches: true,
        terminal_estimate: None,
        log_det_v: 0.0,
        z_norms: Vec::new(),
        zeta_norms: Vec::new(),
        zeta_weighted: 0.0,
        database: None,
    };

    let mut x = DVector::zeros(n);
    for t in 0..=cfg.horizon {
        db.apply_attack(&cfg.attack, t)?;
        let out = match ctrl.step(&db, &cfg.mode, &x, &cfg.settings, &mut solver_rng) {
            Ok(out) => out,
            Err(e) => {
                trace.aborted = Some(e);
                break;
            }
        };
        if out.switched {
            let record = ctrl.current().expect("switch recorded").clone();
            let inside = record.ellipsoid(cfg.settings.delta)?.contains_theta(&cfg.truth.theta());
            trace.covered_at_switches &= inside;
            trace.switches.push(record);
        }
        if let Some(cov) = coverage.as_mut() {
            cov.check(cfg, &ctrl, &db)?;
        }
        let cost = stage_cost(cfg, &x, &out.u);
        let z = extended(&x, &out.u);
        trace.max_state_norm = trace.max_state_norm.max(x.norm());
        trace.max_ext_norm = trace.max_ext_norm.max(z.norm());
        trace.steps.push(StepRecord {
            t,
            x: x.clone(),
            u: out.u.clone(),
            cost,
            switched: out.switched,
            held: out.held,
            radius: out.radius,
            policy: trace.switches.len() - 1,
        });

        let next = simulate_step(&cfg.truth, &x, &out.u, &cfg.noise, &mut noise_rng);
        let norm = next.norm();
        if !norm.is_finite() || norm > cfg.state_guard {
            trace.aborted = Some(Error::StateBlowUp {
                step: t + 1,
                norm,
                guard: cfg.state_guard,
            });
            break;
        }
        db.append(&z, &next)?;
        ctrl.record(&z)?;
        if let Some(cov) = coverage.as_mut() {
            cov.push(&z, &next)?;
        }
        x = next;
    }
    trace.max_gain_norm = ctrl.max_gain_norm();
    trace.held_steps = ctrl.held_log().to_vec();
    trace.covered = coverage.map(|c| c.all);
    finish(cfg, &mut trace, &db)?;
    if cfg.keep_database {
        trace.database = Some(db);
    }
    Ok(trace)
}

/// Terminal data statistics used by the bounds.
fn finish(cfg: &EpisodeConfig, trace: &mut EpisodeTrace, db: &LearningDatabase) -> Result<()> {
    let lambda = cfg.settings.lambda;
    let p = cfg.truth.n() + cfg.truth.m();
    trace.z_norms = db.rows().iter().map(|r| r.z_true().norm()).collect();
    trace.zeta_norms = db.oracle().zeta_norms();
    let mut v = Covariance::new(p, lambda)?;
    let mut weighted = 0.0;
    for r in db.rows() {
        let zeta = &r.z_stored - r.z_true();
        if zeta.iter().any(|&e| e != 0.0) {
            let vz = linalg::solve_spd(v.matrix(), &DMatrix::from_column_slice(p, 1, zeta.as_slice()))?;
            weighted += zeta.dot(&vz.column(0)).min(0.5);
        }
        v.push(&r.z_stored)?;
    }
    trace.zeta_weighted = weighted;
    if db.is_empty() {
        trace.log_det_v = p as f64 * lambda.ln();
        return Ok(());
    }
    let inputs = match cfg.mode {
        ControllerMode::OracleClean => db.oracle().true_inputs(lambda)?,
        _ => db.materialize(lambda)?,
    };
    trace.log_det_v = linalg::log_det_spd(&inputs.covariance())?;
    trace.terminal_estimate = Some(estimator::least_squares_estimate(&inputs)?);
    Ok(())
}

/// Baseline with a fixed policy `K(θ)` and no learning, on the same noise
/// stream as [`run_episode`] for the same seed.
pub fn run_fixed_policy(cfg: &EpisodeConfig, theta: &SystemParams, seed: u64) -> Result<EpisodeTrace> {
    cfg.validate()?;
    let n = cfg.truth.n();
    let sol = lqr::solve_dare(theta, &cfg.settings.weights, cfg.settings.ofu.dare_tol, cfg.settings.ofu.dare_max_iter)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    let p = n + cfg.truth.m();
    let record = SwitchRecord {
        step: 0,
        theta_hat: theta.theta(),
        shape: DMatrix::identity(p, p) * cfg.settings.lambda,
        radius: 0.0,
        theta_tilde: theta.clone(),
        cost: sol.cost,
        p: sol.p.clone(),
        gain: sol.k.clone(),
    };
    let mut trace = EpisodeTrace {
        seed,
        mode: "fixed".to_string(),
        steps: Vec::with_capacity(cfg.horizon + 1),
        switches: vec![record],
        j_star: cfg.j_star()?,
        aborted: None,
        max_state_norm: 0.0,
        max_ext_norm: 0.0,
        max_gain_norm: linalg::spectral_norm(&sol.k),
        held_steps: Vec::new(),
        covered: None,
        covered_at_switches: true,
        terminal_estimate: None,
        log_det_v: p as f64 * cfg.settings.lambda.ln(),
        z_norms: Vec::new(),
        zeta_norms: Vec::new(),
        zeta_weighted: 0.0,
        database: None,
    };
    let mut x = DVector::zeros(n);
    for t in 0..=cfg.horizon {
        let u = &sol.k * &x;
        let z = extended(&x, &u);
        trace.max_state_norm = trace.max_state_norm.max(x.norm());
        trace.max_ext_norm = trace.max_ext_norm.max(z.norm());
        trace.z_norms.push(z.norm());
        trace.steps.push(StepRecord {
            t,
            x: x.clone(),
            u: u.clone(),
            cost: stage_cost(cfg, &x, &u),
            switched: t == 0,
            held: false,
            radius: 0.0,
            policy: 0,
        });
        let next = simulate_step(&cfg.truth, &x, &u, &cfg.noise, &mut noise_rng);
        if !next.norm().is_finite() || next.norm() > cfg.state_guard {
            trace.aborted = Some(Error::StateBlowUp {
                step: t + 1,
                norm: next.norm(),
                guard: cfg.state_guard,
            });
            break;
        }
        x = next;
    }
    Ok(trace)
}
