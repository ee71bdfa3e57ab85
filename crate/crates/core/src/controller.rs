//! The adaptive loop: re-estimate when the data covariance has doubled,
//! build a mode-dependent confidence set, pick the optimistic parameter and
//! act with its Riccati gain until the next switch.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::attack::LearningDatabase;
use crate::error::{Error, Result};
use crate::estimator::{self, AttackBudget, ConfidenceEllipsoid, Covariance, RegressionInputs};
use crate::linalg;
use crate::lqr::{self, CostWeights, SystemParams};
use crate::ofu::{self, OfuConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerMode {
    /// Clean radius on the stored, possibly poisoned data.
    Naive,
    /// Inflated a priori radius for the given budget. `state_bound` and
    /// `gain_bound` act as floors under the running maxima.
    SelfCorrecting(AttackBudget),
    /// Clean radius on the true shadow data. Baseline only.
    OracleClean,
}

impl ControllerMode {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::SelfCorrecting(_) => "self_correcting",
            Self::OracleClean => "oracle_clean",
        }
    }
}

/// What to do when the confidence set and the admissible set do not meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    /// Fail the step with [`crate::Error::NoFeasiblePoint`].
    #[default]
    Abort,
    /// Keep the current policy until the next determinant doubling.
    Hold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings {
    pub weights: CostWeights,
    pub s: f64,
    pub delta: f64,
    pub lambda: f64,
    /// Sub-Gaussian constant `L`.
    pub sub_gaussian: f64,
    pub ofu: OfuConfig,
    pub on_infeasible: InfeasiblePolicy,
}

/// Everything decided at one policy switch.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRecord {
    pub step: usize,
    pub theta_hat: DMatrix<f64>,
    pub shape: DMatrix<f64>,
    pub radius: f64,
    pub theta_tilde: SystemParams,
    /// `J(Θ̃)`.
    pub cost: f64,
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
}

impl SwitchRecord {
    pub fn ellipsoid(&self, delta: f64) -> Result<ConfidenceEllipsoid> {
        ConfidenceEllipsoid::new(self.theta_hat.clone(), self.shape.clone(), self.radius, delta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub u: DVector<f64>,
    pub switched: bool,
    /// A switch was due but no feasible parameter existed; the policy was held.
    pub held: bool,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    n: usize,
    m: usize,
    t: usize,
    v_now: Covariance,
    log_det_at_switch: f64,
    current: Option<SwitchRecord>,
    switch_log: Vec<usize>,
    held_log: Vec<usize>,
    max_state_norm: f64,
    max_gain_norm: f64,
}

impl ControllerState {
    pub fn new(n: usize, m: usize, lambda: f64) -> Result<Self> {
        let v_now = Covariance::new(n + m, lambda)?;
        let log_det_at_switch = v_now.log_det()?;
        Ok(Self {
            n,
            m,
            t: 0,
            v_now,
            log_det_at_switch,
            current: None,
            switch_log: Vec::new(),
            held_log: Vec::new(),
            max_state_norm: 0.0,
            max_gain_norm: 0.0,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn switch_log(&self) -> &[usize] {
        &self.switch_log
    }

    /// Steps at which a due switch found no feasible parameter.
    pub fn held_log(&self) -> &[usize] {
        &self.held_log
    }

    pub fn current(&self) -> Option<&SwitchRecord> {
        self.current.as_ref()
    }

    pub fn v_now(&self) -> &Covariance {
        &self.v_now
    }

    pub fn log_det_at_switch(&self) -> f64 {
        self.log_det_at_switch
    }

    /// Largest `‖K‖` applied so far.
    pub fn max_gain_norm(&self) -> f64 {
        self.max_gain_norm
    }

    pub fn max_state_norm(&self) -> f64 {
        self.max_state_norm
    }

    /// True at the first step or once `det(V)` has more than doubled since the last switch.
    pub fn should_switch(&self) -> Result<bool> {
        if self.t == 0 || self.current.is_none() {
            return Ok(true);
        }
        Ok(self.v_now.log_det()? > std::f64::consts::LN_2 + self.log_det_at_switch)
    }

    /// Computes `u_t = K x_t`, switching policy first if due.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        db: &LearningDatabase,
        mode: &ControllerMode,
        x: &DVector<f64>,
        settings: &ControllerSettings,
        rng: &mut R,
    ) -> Result<StepOutput> {
        self.max_state_norm = self.max_state_norm.max(x.norm());
        let mut switched = false;
        let mut held = false;
        if self.should_switch()? {
            match self.switch(db, mode, settings, rng) {
                Ok(record) => {
                    self.max_gain_norm = self.max_gain_norm.max(linalg::spectral_norm(&record.gain));
                    self.switch_log.push(self.t);
                    self.current = Some(record);
                    switched = true;
                }
                Err(Error::NoFeasiblePoint)
                    if settings.on_infeasible == InfeasiblePolicy::Hold && self.current.is_some() =>
                {
                    self.held_log.push(self.t);
                    held = true;
                }
                Err(e) => return Err(e),
            }
            self.log_det_at_switch = self.v_now.log_det()?;
        }
        let current = self.current.as_ref().expect("policy set at first step");
        Ok(StepOutput {
            u: &current.gain * x,
            switched,
            held,
            radius: current.radius,
        })
    }

    /// Adds the row written for this step to the switch statistic and advances time.
    pub fn record(&mut self, z: &DVector<f64>) -> Result<()> {
        self.v_now.push(z)?;
        self.t += 1;
        Ok(())
    }

    /// The radius the controller would use now for covariance `shape`.
    pub fn confidence_radius(
        &self,
        mode: &ControllerMode,
        settings: &ControllerSettings,
        shape: &DMatrix<f64>,
    ) -> Result<f64> {
        match mode {
            ControllerMode::Naive | ControllerMode::OracleClean => estimator::clean_radius(
                shape,
                &AttackBudget::clean(settings.sub_gaussian, settings.s),
                settings.delta,
                settings.lambda,
                self.n,
            ),
            ControllerMode::SelfCorrecting(budget) => {
                let effective = AttackBudget {
                    state_bound: budget.state_bound.max(self.max_state_norm),
                    gain_bound: budget.gain_bound.max(self.max_gain_norm),
                    sub_gaussian: settings.sub_gaussian,
                    s: settings.s,
                    ..*budget
                };
                Ok(estimator::attacked_radius_apriori(
                    &effective,
                    self.t,
                    settings.delta,
                    settings.lambda,
                    self.n,
                    self.m,
                ))
            }
        }
    }

    fn switch<R: Rng + ?Sized>(
        &self,
        db: &LearningDatabase,
        mode: &ControllerMode,
        settings: &ControllerSettings,
        rng: &mut R,
    ) -> Result<SwitchRecord> {
        let (n, m) = (self.n, self.m);
        let lambda = settings.lambda;
        let inputs = if db.is_empty() {
            RegressionInputs::empty(n, m, lambda)
        } else {
            match mode {
                ControllerMode::OracleClean => db.oracle().true_inputs(lambda)?,
                _ => db.materialize(lambda)?,
            }
        };
        let theta_hat = estimator::least_squares_estimate(&inputs)?;
        let shape = inputs.covariance();
        let radius = self.confidence_radius(mode, settings, &shape)?;
        let ellipsoid = ConfidenceEllipsoid::new(theta_hat.clone(), shape.clone(), radius, settings.delta)?;
        let warm = self.current.as_ref().map(|c| &c.theta_tilde);
        let outcome = ofu::select_optimistic(
            &ellipsoid,
            &settings.weights,
            settings.s,
            self.t,
            &settings.ofu,
            warm,
            rng,
        )?;
        let sol = lqr::solve_dare(
            &outcome.params,
            &settings.weights,
            settings.ofu.dare_tol,
            settings.ofu.dare_max_iter,
        )?;
        Ok(SwitchRecord {
            step: self.t,
            theta_hat,
            shape,
            radius,
            theta_tilde: outcome.params,
            cost: sol.cost,
            p: sol.p,
            gain: sol.k,
        })
    }
}
