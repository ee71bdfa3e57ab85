//! TOML experiment description, presets and `key=value` overrides.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackMode, AttackPlan};
use crate::controller::{ControllerMode, ControllerSettings, InfeasiblePolicy};
use crate::error::{Error, Result};
use crate::estimator::AttackBudget;
use crate::lqr::{CostWeights, SystemParams};
use crate::ofu::OfuConfig;
use crate::sim::bounds::BoundConstants;
use crate::sim::episode::{EpisodeConfig, DEFAULT_STATE_GUARD};
use crate::sim::noise::NoiseModel;

pub const PRESETS: &[(&str, &str)] = &[
    ("paper-clean", include_str!("../../presets/paper-clean.toml")),
    ("paper-naive-attacked", include_str!("../../presets/paper-naive-attacked.toml")),
    ("paper-self-correcting", include_str!("../../presets/paper-self-correcting.toml")),
];

/// Keys every config must set.
pub const REQUIRED_KEYS: &[&str] = &["horizon", "system.a", "system.b", "weights.q", "weights.r"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Naive,
    SelfCorrecting,
    OracleClean,
}

impl std::str::FromStr for ModeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "naive" => Ok(Self::Naive),
            "self_correcting" => Ok(Self::SelfCorrecting),
            "oracle_clean" => Ok(Self::OracleClean),
            other => Err(Error::ConfigInvalid {
                key: "mode".into(),
                reason: format!("unknown mode `{other}`"),
            }),
        }
    }
}

impl ModeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::SelfCorrecting => "self_correcting",
            Self::OracleClean => "oracle_clean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Rows of `A*`.
    pub a: Vec<Vec<f64>>,
    /// Rows of `B*`.
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub sigma: f64,
    pub sub_gaussian: f64,
    /// Allow `sub_gaussian < sigma`.
    pub allow_small_l: bool,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            sub_gaussian: 0.1,
            allow_small_l: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfCorrectingSection {
    /// `Λ` assumed by the controller. Defaults to the attack budget.
    pub lambda_budget: Option<f64>,
    /// Floor under the running state maximum.
    pub state_bound: f64,
    /// Floor under the running gain maximum. Defaults to the bound constant `C`.
    pub gain_bound: Option<f64>,
}

impl Default for SelfCorrectingSection {
    fn default() -> Self {
        Self {
            lambda_budget: None,
            state_bound: 0.0,
            gain_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfuSection {
    pub steps: usize,
    pub step_size: f64,
    pub restarts: usize,
    pub fd_eps: f64,
    pub hessian_eps: f64,
    pub hessian_regularization: f64,
    pub max_halvings: usize,
    pub dare_tol: f64,
    pub dare_max_iter: usize,
    pub on_infeasible: InfeasiblePolicy,
}

impl Default for OfuSection {
    fn default() -> Self {
        let d = OfuConfig::default();
        Self {
            steps: d.steps,
            step_size: d.step_size,
            restarts: d.restarts,
            fd_eps: d.fd_eps,
            hessian_eps: d.hessian_eps,
            hessian_regularization: d.hessian_regularization,
            max_halvings: d.max_halvings,
            dare_tol: d.dare_tol,
            dare_max_iter: d.dare_max_iter,
            on_infeasible: InfeasiblePolicy::default(),
        }
    }
}

impl OfuSection {
    pub fn to_config(&self) -> OfuConfig {
        OfuConfig {
            steps: self.steps,
            step_size: self.step_size,
            restarts: self.restarts,
            fd_eps: self.fd_eps,
            hessian_eps: self.hessian_eps,
            hessian_regularization: self.hessian_regularization,
            max_halvings: self.max_halvings,
            dare_tol: self.dare_tol,
            dare_max_iter: self.dare_max_iter,
        }
    }
}

/// Bound constants. Any unset entry is estimated by sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub samples: usize,
    pub seed: u64,
    pub d: Option<f64>,
    pub c: Option<f64>,
    pub rho: Option<f64>,
    pub eta_spec: Option<f64>,
    pub nu: Option<f64>,
    pub m_const: Option<f64>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            d: None,
            c: None,
            rho: None,
            eta_spec: None,
            nu: None,
            m_const: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub traces: bool,
    pub plots: bool,
    pub database_dump: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            traces: true,
            plots: true,
            database_dump: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub horizon: usize,
    /// Defaults to `1/horizon`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub s: f64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_mode")]
    pub mode: ModeKind,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_guard")]
    pub state_guard: f64,
    #[serde(default)]
    pub track_coverage: bool,
    pub system: SystemSection,
    pub weights: WeightsSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub attack: AttackPlan,
    #[serde(default)]
    pub self_correcting: SelfCorrectingSection,
    #[serde(default)]
    pub ofu: OfuSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> f64 {
    1.0
}

fn default_runs() -> usize {
    50
}

fn default_mode() -> ModeKind {
    ModeKind::OracleClean
}

fn default_guard() -> f64 {
    DEFAULT_STATE_GUARD
}

fn invalid(key: &str, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn matrix(rows: &[Vec<f64>], key: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(invalid(key, "must be a nonempty rectangular array of rows"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Parses `value` as a TOML literal, falling back to a bare string.
fn parse_literal(value: &str) -> toml::Value {
    let wrapped = format!("v = {value}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.to_string())),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Applies `a.b.c=value` to a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, value) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(assignment, "override must look like key=value"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(invalid(assignment, "empty key"));
    }
    let keys: Vec<&str> = path.split('.').collect();
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(path, format!("`{k}` is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_literal(value.trim()));
    Ok(())
}

fn has_key(table: &toml::Table, dotted: &str) -> bool {
    let mut cur = table;
    let keys: Vec<&str> = dotted.split('.').collect();
    for (i, k) in keys.iter().enumerate() {
        match cur.get(*k) {
            Some(toml::Value::Table(t)) if i + 1 < keys.len() => cur = t,
            Some(_) if i + 1 == keys.len() => return true,
            _ => return false,
        }
    }
    false
}

fn key_from_message(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("<config>").to_string()
}

impl ExperimentConfig {
    /// Parses TOML text, applies overrides, and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid("<toml>", e.message()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        for key in REQUIRED_KEYS {
            if !has_key(&table, key) {
                return Err(invalid(key, "required key is missing"));
            }
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            invalid(&key_from_message(&msg), msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn preset(name: &str, overrides: &[String]) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| invalid("preset", format!("unknown preset `{name}`")))?;
        Self::from_toml_str(text, overrides)
    }

    /// A preset name or a path to a TOML file.
    pub fn load(source: &str, overrides: &[String]) -> Result<Self> {
        if PRESETS.iter().any(|(n, _)| *n == source) {
            Self::preset(source, overrides)
        } else {
            Self::from_path(Path::new(source), overrides)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(invalid("delta", "must lie in (0, 1)"));
            }
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda", "must be positive"));
        }
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(invalid("s", "must be positive"));
        }
        if self.runs < 1 {
            return Err(invalid("runs", "must be at least 1"));
        }
        if !(self.state_guard > 0.0) {
            return Err(invalid("state_guard", "must be positive"));
        }
        self.truth()?;
        self.weights()?;
        self.noise_model()?;
        self.attack
            .validate(self.system.a.len())
            .map_err(|e| invalid("attack", e.to_string()))?;
        if let Some(l) = self.self_correcting.lambda_budget {
            if !(l >= 0.0) {
                return Err(invalid("self_correcting.lambda_budget", "must be nonnegative"));
            }
        }
        self.ofu
            .to_config()
            .validate()
            .map_err(|e| invalid("ofu", e.to_string()))?;
        if self.bounds.samples == 0 && [self.bounds.d, self.bounds.c, self.bounds.rho, self.bounds.eta_spec].contains(&None) {
            return Err(invalid("bounds.samples", "must be positive unless every constant is given"));
        }
        if let Some(rho) = self.bounds.rho {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(invalid("bounds.rho", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn truth(&self) -> Result<SystemParams> {
        let a = matrix(&self.system.a, "system.a")?;
        let b = matrix(&self.system.b, "system.b")?;
        SystemParams::new(a, b).map_err(|e| invalid("system", e.to_string()))
    }

    pub fn weights(&self) -> Result<CostWeights> {
        let q = matrix(&self.weights.q, "weights.q")?;
        let r = matrix(&self.weights.r, "weights.r")?;
        let w = CostWeights::new(q, r).map_err(|e| invalid("weights", e.to_string()))?;
        let truth = self.truth()?;
        if w.q().nrows() != truth.n() || w.r().nrows() != truth.m() {
            return Err(invalid("weights", "Q must be n×n and R m×m"));
        }
        Ok(w)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let n = &self.noise;
        let built = if n.allow_small_l {
            NoiseModel::unchecked(n.sigma, n.sub_gaussian)
        } else {
            NoiseModel::new(n.sigma, n.sub_gaussian)
        };
        built.map_err(|e| invalid("noise", e.to_string()))
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(1.0 / self.horizon as f64)
    }

    /// Fills every defaulted quantity (δ, bound constants, self-correcting
    /// budget) so that the result re-parses to itself.
    pub fn resolve(&self) -> Result<(Self, BoundConstants)> {
        let mut out = self.clone();
        out.delta = Some(self.delta());
        let consts = self.bound_constants()?;
        out.bounds = BoundsSection {
            samples: self.bounds.samples,
            seed: self.bounds.seed,
            d: Some(consts.d),
            c: Some(consts.c),
            rho: Some(consts.rho),
            eta_spec: Some(consts.eta_spec),
            nu: Some(consts.nu),
            m_const: Some(consts.m_const),
        };
        let sc = &mut out.self_correcting;
        sc.lambda_budget = Some(sc.lambda_budget.unwrap_or(default_controller_budget(&self.attack)));
        sc.gain_bound = Some(sc.gain_bound.unwrap_or(consts.c));
        Ok((out, consts))
    }

    pub fn bound_constants(&self) -> Result<BoundConstants> {
        let truth = self.truth()?;
        let weights = self.weights()?;
        let b = &self.bounds;
        let all_given = b.d.is_some() && b.c.is_some() && b.rho.is_some() && b.eta_spec.is_some();
        let mut consts = if all_given {
            BoundConstants {
                d: 0.0,
                c: 0.0,
                rho: 0.5,
                eta_spec: 0.0,
                nu: 1.0,
                m_const: self.s,
                u0: 0.0,
                hc: 0.0,
                g: 0.0,
                s: self.s,
                sub_gaussian: self.noise.sub_gaussian,
                method: "given".into(),
            }
        } else {
            BoundConstants::estimate(&truth, &weights, self.s, self.noise.sub_gaussian, b.samples, b.seed)?
        };
        if let Some(v) = b.d {
            consts.d = v;
        }
        if let Some(v) = b.c {
            consts.c = v;
        }
        if let Some(v) = b.rho {
            consts.rho = v;
        }
        if let Some(v) = b.eta_spec {
            consts.eta_spec = v;
        }
        if let Some(v) = b.nu {
            consts.nu = v;
        }
        if let Some(v) = b.m_const {
            consts.m_const = v;
        }
        consts.refresh_auxiliary(truth.n() + truth.m());
        consts.validate()?;
        Ok(consts)
    }

    /// Controller mode with the budget resolved against `consts`.
    pub fn controller_mode(&self, mode: ModeKind, consts: &BoundConstants) -> ControllerMode {
        match mode {
            ModeKind::Naive => ControllerMode::Naive,
            ModeKind::OracleClean => ControllerMode::OracleClean,
            ModeKind::SelfCorrecting => ControllerMode::SelfCorrecting(AttackBudget {
                lambda_budget: self
                    .self_correcting
                    .lambda_budget
                    .unwrap_or(default_controller_budget(&self.attack)),
                state_bound: self.self_correcting.state_bound,
                gain_bound: self.self_correcting.gain_bound.unwrap_or(consts.c),
                sub_gaussian: self.noise.sub_gaussian,
                s: self.s,
            }),
        }
    }

    pub fn episode_config(&self, mode: ModeKind, consts: &BoundConstants) -> Result<EpisodeConfig> {
        Ok(EpisodeConfig {
            truth: self.truth()?,
            settings: ControllerSettings {
                weights: self.weights()?,
                s: self.s,
                delta: self.delta(),
                lambda: self.lambda,
                sub_gaussian: self.noise.sub_gaussian,
                ofu: self.ofu.to_config(),
                on_infeasible: self.ofu.on_infeasible,
            },
            mode: self.controller_mode(mode, consts),
            attack: self.attack.clone(),
            horizon: self.horizon,
            noise: self.noise_model()?,
            state_guard: self.state_guard,
            track_coverage: self.track_coverage,
            keep_database: self.output.database_dump,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// `n + m`.
    pub fn dimension(&self) -> usize {
        self.system.a.len() + self.system.b.first().map_or(0, Vec::len)
    }
}

fn default_controller_budget(attack: &AttackPlan) -> f64 {
    if attack.mode == AttackMode::None {
        0.5
    } else {
        attack.lambda_budget
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_with_paper_parameters() {
        for (name, _) in PRESETS {
            let cfg = ExperimentConfig::preset(name, &[]).unwrap();
            assert_eq!(cfg.horizon, 8000);
            assert_eq!(cfg.runs, 50);
            assert_eq!(cfg.lambda, 1.0);
            assert_eq!(cfg.s, 1.0);
            assert_eq!(cfg.noise.sub_gaussian, 0.1);
            assert_eq!(cfg.delta(), 1.0 / 8000.0);
            assert_eq!(cfg.system.a, vec![vec![0.001]]);
            assert_eq!(cfg.system.b, vec![vec![0.001]]);
        }
        assert_eq!(ExperimentConfig::preset("paper-clean", &[]).unwrap().mode, ModeKind::OracleClean);
        let naive = ExperimentConfig::preset("paper-naive-attacked", &[]).unwrap();
        assert_eq!(naive.mode, ModeKind::Naive);
        assert_eq!(naive.attack.mode, AttackMode::ConstantBias);
        assert_eq!(naive.attack.lambda_budget, 0.5);
    }

    #[test]
    fn missing_horizon_is_named() {
        let text = ExperimentConfig::preset("paper-clean", &[]).unwrap().to_toml().unwrap();
        let without: String = text.lines().filter(|l| !l.starts_with("horizon")).collect::<Vec<_>>().join("\n");
        match ExperimentConfig::from_toml_str(&without, &[]) {
            Err(Error::ConfigInvalid { key, .. }) => assert_eq!(key, "horizon"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overrides_and_validation_name_keys() {
        let cfg = ExperimentConfig::preset("paper-clean", &["horizon=100".into(), "attack.mode=\"sinusoid\"".into()]).unwrap();
        assert_eq!(cfg.horizon, 100);
        assert_eq!(cfg.attack.mode, AttackMode::Sinusoid);
        let bare = ExperimentConfig::preset("paper-clean", &["mode=naive".into()]).unwrap();
        assert_eq!(bare.mode, ModeKind::Naive);
        for (o, key) in [
            ("delta=1.5", "delta"),
            ("lambda=0", "lambda"),
            ("runs=0", "runs"),
            ("bogus=1", "bogus"),
            ("noise.sigma=1.0", "noise"),
        ] {
            match ExperimentConfig::preset("paper-clean", &[o.to_string()]) {
                Err(Error::ConfigInvalid { key: k, .. }) => assert_eq!(k, key, "override {o}"),
                other => panic!("{o}: unexpected {other:?}"),
            }
        }
        assert!(ExperimentConfig::preset("nope", &[]).is_err());
        assert!(ExperimentConfig::preset("paper-clean", &["novalue".into()]).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::preset("paper-self-correcting", &["bounds.samples=50".into()]).unwrap();
        let (resolved, consts) = cfg.resolve().unwrap();
        let text = resolved.to_toml().unwrap();
        let back = ExperimentConfig::from_toml_str(&text, &[]).unwrap();
        assert_eq!(back, resolved);
        let (again, consts2) = back.resolve().unwrap();
        assert_eq!(again, resolved);
        assert_eq!(consts.d, consts2.d);
        assert_eq!(consts.g, consts2.g);
    }
}
