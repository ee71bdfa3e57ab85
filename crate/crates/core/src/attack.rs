//! The learning database: rows are trusted when written, but every stored
//! state except the freshest one may later be rewritten by an attacker.
//!
//! Each row keeps a shadow copy of the true values. The controller only
//! reads through [`LearningDatabase::materialize`]; the shadow copies are
//! reachable through [`LearningDatabase::oracle`] for diagnostics and tests.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::RegressionInputs;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: usize,
    pub z_stored: DVector<f64>,
    pub x_next_stored: DVector<f64>,
    z_true: DVector<f64>,
    x_next_true: DVector<f64>,
}

impl Record {
    pub fn z_true(&self) -> &DVector<f64> {
        &self.z_true
    }

    pub fn x_next_true(&self) -> &DVector<f64> {
        &self.x_next_true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    #[default]
    None,
    ConstantBias,
    Sinusoid,
    RandomBounded,
}

impl std::str::FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "none" => Ok(Self::None),
            "constant" | "constant_bias" => Ok(Self::ConstantBias),
            "sinusoid" => Ok(Self::Sinusoid),
            "random" | "random_bounded" => Ok(Self::RandomBounded),
            other => Err(Error::InvalidArgument {
                name: "attack",
                reason: format!("unknown attack mode `{other}`"),
            }),
        }
    }
}

/// How the poisoning signal `η_s` is generated. `η_s` depends only on the
/// plan and `s`, which makes [`LearningDatabase::apply_attack`] idempotent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub mode: AttackMode,
    /// `Λ`, the bound on `‖η_s‖`.
    pub lambda_budget: f64,
    /// Direction for the bias modes; normalized on use. Empty means `(1, 0, …)`.
    #[serde(default)]
    pub direction: Vec<f64>,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_frequency() -> f64 {
    0.05
}

impl Default for AttackPlan {
    fn default() -> Self {
        Self::none()
    }
}

impl AttackPlan {
    pub fn none() -> Self {
        Self {
            mode: AttackMode::None,
            lambda_budget: 0.0,
            direction: Vec::new(),
            frequency: default_frequency(),
            phase: 0.0,
            seed: 0,
        }
    }

    pub fn constant_bias(lambda_budget: f64) -> Self {
        Self {
            mode: AttackMode::ConstantBias,
            lambda_budget,
            ..Self::none()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.lambda_budget >= 0.0) || !self.lambda_budget.is_finite() {
            return Err(Error::InvalidArgument {
                name: "lambda_budget",
                reason: "must be finite and nonnegative".into(),
            });
        }
        if !self.direction.is_empty() {
            if self.direction.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "attack direction has {} entries, state has {n}",
                    self.direction.len()
                )));
            }
            if self.direction.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidArgument {
                    name: "direction",
                    reason: "must be nonzero".into(),
                });
            }
        }
        Ok(())
    }

    fn unit_direction(&self, n: usize) -> DVector<f64> {
        if self.direction.is_empty() {
            let mut d = DVector::zeros(n);
            d[0] = 1.0;
            d
        } else {
            let d = DVector::from_column_slice(&self.direction);
            let norm = d.norm();
            d / norm
        }
    }

    /// The poisoning offset for stored state `x_s`.
    pub fn eta(&self, s: usize, n: usize) -> DVector<f64> {
        let lam = self.lambda_budget;
        let raw = match self.mode {
            AttackMode::None => return DVector::zeros(n),
            AttackMode::ConstantBias => self.unit_direction(n) * lam,
            AttackMode::Sinusoid => self.unit_direction(n) * (lam * (self.frequency * s as f64 + self.phase).sin()),
            AttackMode::RandomBounded => {
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(s as u64)));
                let g = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let norm = g.norm();
                if norm == 0.0 {
                    return DVector::zeros(n);
                }
                let u: f64 = rand::Rng::random(&mut rng);
                g * (lam * u.powf(1.0 / n as f64) / norm)
            }
        };
        clip(raw, lam)
    }
}

fn clip(v: DVector<f64>, budget: f64) -> DVector<f64> {
    let norm = v.norm();
    if norm > budget {
        v * (budget / norm)
    } else {
        v
    }
}

/// The splitmix64 finalizer, used to derive independent seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningDatabase {
    n: usize,
    m: usize,
    rows: Vec<Record>,
    /// Plan and first untouched row of the last attack, for incremental rewrites.
    applied: Option<(AttackPlan, usize)>,
}

impl LearningDatabase {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            rows: Vec::new(),
            applied: None,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    /// Stores `(z_t, x_{t+1})` exactly as observed.
    pub fn append(&mut self, z: &DVector<f64>, x_next: &DVector<f64>) -> Result<()> {
        if z.len() != self.n + self.m || x_next.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "expected z of length {} and x of length {}, got {} and {}",
                self.n + self.m,
                self.n,
                z.len(),
                x_next.len()
            )));
        }
        self.rows.push(Record {
            step: self.rows.len(),
            z_stored: z.clone(),
            x_next_stored: x_next.clone(),
            z_true: z.clone(),
            x_next_true: x_next.clone(),
        });
        Ok(())
    }

    /// Rewrites stored states `x_1 … x_{now−1}` to `x_s + η_s`, wherever they
    /// appear. `x_0`, `x_now` and all control inputs are left alone.
    pub fn apply_attack(&mut self, plan: &AttackPlan, now: usize) -> Result<()> {
        if now != self.rows.len() {
            return Err(Error::InvalidArgument {
                name: "now",
                reason: format!("database holds states up to {}, got {now}", self.rows.len()),
            });
        }
        plan.validate(self.n)?;
        let start = match &self.applied {
            Some((last, through)) if last == plan => (*through).min(now),
            _ => 1,
        };
        if plan.mode == AttackMode::None && start == 1 {
            // Restore everything in case an earlier plan poisoned rows.
            for r in &mut self.rows {
                r.z_stored.copy_from(&r.z_true);
                r.x_next_stored.copy_from(&r.x_next_true);
            }
        } else {
            let n = self.n;
            for s in start.max(1)..now {
                let eta = plan.eta(s, n);
                let norm = eta.norm();
                if norm > plan.lambda_budget * (1.0 + 1e-12) {
                    return Err(Error::BudgetViolation {
                        norm,
                        budget: plan.lambda_budget,
                    });
                }
                // x_s is the target of row s−1 and the state block of row s.
                let target = &mut self.rows[s - 1];
                target.x_next_stored = &target.x_next_true + &eta;
                let row = &mut self.rows[s];
                let mut z = row.z_true.clone();
                z.rows_mut(0, n).zip_apply(&eta, |a, e| *a += e);
                row.z_stored = z;
            }
        }
        self.applied = Some((plan.clone(), now));
        Ok(())
    }

    /// The stored (possibly poisoned) regression matrices. This is the only
    /// view the controller gets.
    pub fn materialize(&self, lambda: f64) -> Result<RegressionInputs> {
        if self.rows.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let (zbar, xbar) = self.stack(|r| &r.z_stored, |r| &r.x_next_stored);
        RegressionInputs::new(zbar, xbar, lambda)
    }

    pub fn oracle(&self) -> OracleView<'_> {
        OracleView { db: self }
    }

    fn stack<'a>(
        &'a self,
        z: impl Fn(&'a Record) -> &'a DVector<f64>,
        x: impl Fn(&'a Record) -> &'a DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let t = self.rows.len();
        let p = self.n + self.m;
        let zm = DMatrix::from_fn(t, p, |i, j| z(&self.rows[i])[j]);
        let xm = DMatrix::from_fn(t, self.n, |i, j| x(&self.rows[i])[j]);
        (zm, xm)
    }

    /// One CSV line per row: step, stored z, stored target, true z, true target.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let p = self.n + self.m;
        let mut header = vec!["step".to_string()];
        header.extend((0..p).map(|j| format!("z_stored_{j}")));
        header.extend((0..self.n).map(|j| format!("x_next_stored_{j}")));
        header.extend((0..p).map(|j| format!("z_true_{j}")));
        header.extend((0..self.n).map(|j| format!("x_next_true_{j}")));
        writeln!(out, "{}", header.join(","))?;
        for r in &self.rows {
            let mut line = r.step.to_string();
            for v in r
                .z_stored
                .iter()
                .chain(r.x_next_stored.iter())
                .chain(r.z_true.iter())
                .chain(r.x_next_true.iter())
            {
                line.push(',');
                line.push_str(&format!("{v:.16e}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Read access to the true shadow copies.
#[derive(Debug, Clone, Copy)]
pub struct OracleView<'a> {
    db: &'a LearningDatabase,
}

impl OracleView<'_> {
    /// Regression matrices built from the true trajectory.
    pub fn true_inputs(&self, lambda: f64) -> Result<RegressionInputs> {
        if self.db.rows.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let (z, x) = self.db.stack(|r| &r.z_true, |r| &r.x_next_true);
        RegressionInputs::new(z, x, lambda)
    }

    /// `(H, Y) = (X̄ − X, Z̄ − Z)`.
    pub fn attack_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (zs, xs) = self.db.stack(|r| &r.z_stored, |r| &r.x_next_stored);
        let (zt, xt) = self.db.stack(|r| &r.z_true, |r| &r.x_next_true);
        (xs - xt, zs - zt)
    }

    /// `‖ζ_s‖` per row, the norm of the regressor perturbation.
    pub fn zeta_norms(&self) -> Vec<f64> {
        self.db
            .rows
            .iter()
            .map(|r| (&r.z_stored - &r.z_true).norm())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db3() -> LearningDatabase {
        // x_0..x_3 = 0, 1, 2, 3 with u_s = 10 s.
        let mut db = LearningDatabase::new(1, 1);
        for s in 0..3 {
            let z = DVector::from_column_slice(&[s as f64, 10.0 * s as f64]);
            db.append(&z, &DVector::from_element(1, s as f64 + 1.0)).unwrap();
        }
        db
    }

    #[test]
    fn append_stores_true_copies() {
        let mut db = LearningDatabase::new(1, 1);
        db.append(&DVector::from_column_slice(&[1.0, 2.0]), &DVector::from_element(1, 3.0))
            .unwrap();
        db.append(&DVector::from_column_slice(&[3.0, 4.0]), &DVector::from_element(1, 5.0))
            .unwrap();
        assert_eq!(db.rows().iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 1]);
        for r in db.rows() {
            assert_eq!(&r.z_stored, r.z_true());
            assert_eq!(&r.x_next_stored, r.x_next_true());
        }
        let err = db.append(&DVector::from_element(1, 1.0), &DVector::from_element(1, 1.0));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn constant_bias_hand_trace() {
        let mut db = db3();
        db.apply_attack(&AttackPlan::constant_bias(0.5), 3).unwrap();
        let (h, y) = db.oracle().attack_matrices();
        assert_eq!(h.as_slice(), &[0.5, 0.5, 0.0]);
        assert_eq!(y.column(0).as_slice(), &[0.0, 0.5, 0.5]);
        assert_eq!(y.column(1).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(db.rows()[1].z_stored[0], 1.5);
        assert_eq!(db.rows()[2].x_next_stored[0], 3.0);
    }

    #[test]
    fn attack_is_idempotent_and_none_is_identity() {
        let mut once = db3();
        once.apply_attack(&AttackPlan::constant_bias(0.5), 3).unwrap();
        let mut twice = once.clone();
        twice.apply_attack(&AttackPlan::constant_bias(0.5), 3).unwrap();
        assert_eq!(once.rows(), twice.rows());

        let mut clean = db3();
        clean.apply_attack(&AttackPlan::none(), 3).unwrap();
        assert_eq!(clean.rows(), db3().rows());
        let (h, y) = clean.oracle().attack_matrices();
        assert!(h.iter().chain(y.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn append_after_attack_leaves_history_alone() {
        let mut db = db3();
        db.apply_attack(&AttackPlan::constant_bias(0.5), 3).unwrap();
        let before = db.rows().to_vec();
        db.append(&DVector::from_column_slice(&[3.0, 30.0]), &DVector::from_element(1, 4.0))
            .unwrap();
        assert_eq!(&db.rows()[..3], &before[..]);
        let last = db.rows().last().unwrap();
        assert_eq!(&last.z_stored, last.z_true());
    }

    #[test]
    fn incremental_matches_full_rewrite() {
        let plan = AttackPlan {
            mode: AttackMode::RandomBounded,
            lambda_budget: 0.3,
            seed: 9,
            ..AttackPlan::none()
        };
        let mut inc = LearningDatabase::new(2, 1);
        for t in 0..20 {
            inc.apply_attack(&plan, t).unwrap();
            let z = DVector::from_fn(3, |i, _| (t * 3 + i) as f64 * 0.1);
            inc.append(&z, &DVector::from_fn(2, |i, _| (t + i) as f64)).unwrap();
        }
        inc.apply_attack(&plan, 20).unwrap();
        let mut full = inc.clone();
        full.applied = None;
        full.apply_attack(&plan, 20).unwrap();
        assert_eq!(inc.rows(), full.rows());
    }

    #[test]
    fn materialize_and_reversibility() {
        let mut db = db3();
        assert_eq!(
            db.materialize(1.0).unwrap(),
            db.oracle().true_inputs(1.0).unwrap()
        );
        db.apply_attack(&AttackPlan::constant_bias(0.5), 3).unwrap();
        let stored = db.materialize(1.0).unwrap();
        let truth = db.oracle().true_inputs(1.0).unwrap();
        let (h, y) = db.oracle().attack_matrices();
        assert_eq!(stored.zbar - y, truth.zbar);
        assert_eq!(stored.xbar - h, truth.xbar);
        assert_eq!(LearningDatabase::new(1, 1).materialize(1.0).unwrap_err(), Error::EmptyDatabase);

        let mut one = LearningDatabase::new(1, 1);
        one.append(&DVector::from_column_slice(&[1.0, 2.0]), &DVector::from_element(1, 3.0))
            .unwrap();
        let m = one.materialize(1.0).unwrap();
        assert_eq!(m.zbar.shape(), (1, 2));
        assert_eq!(m.xbar.shape(), (1, 1));
    }

    #[test]
    fn eta_respects_budget_in_every_mode() {
        for mode in [AttackMode::ConstantBias, AttackMode::Sinusoid, AttackMode::RandomBounded] {
            let plan = AttackPlan {
                mode,
                lambda_budget: 0.7,
                direction: vec![3.0, 4.0],
                ..AttackPlan::none()
            };
            for s in 0..500 {
                assert!(plan.eta(s, 2).norm() <= 0.7 * (1.0 + 1e-15));
            }
        }
    }

    #[test]
    fn now_must_match_latest_state() {
        let mut db = db3();
        assert!(db.apply_attack(&AttackPlan::constant_bias(0.5), 2).is_err());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let db = db3();
        let mut buf = Vec::new();
        db.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "step,z_stored_0,z_stored_1,x_next_stored_0,z_true_0,z_true_1,x_next_true_0"
        );
        assert_eq!(lines.len(), 4);
    }
}
