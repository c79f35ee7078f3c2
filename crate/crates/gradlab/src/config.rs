//! JSON configuration of solves and studies.
//!
//! Parsing fills every documented default, so a parsed config serializes to
//! a complete document and parses back to the same value. Validation reports
//! every violation it finds, not just the first.

use std::collections::BTreeMap;

use gradlab_core::calculus::{DiffusionSpec, HamiltonianSpec, InitialDatum, ProblemSpec};
use gradlab_core::experiments::{elliptic_gates, parabolic_gates, ConservationCase, Slack};
use gradlab_core::exponents::growth_threshold;
use gradlab_core::mesh::{BoxDomain, Grid};
use gradlab_core::registry::{Profile, PROFILE_NAMES};
use gradlab_core::solver::SolveConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn violations(&self) -> &[String] {
        match self {
            ConfigError::Invalid(v) => v,
            ConfigError::Syntax { .. } => &[],
        }
    }
}

/// Something a config file can hold.
pub trait Checked {
    /// Fills defaults that depend on other fields and returns every
    /// violation.
    fn check(&mut self) -> Vec<String>;
}

/// Parses and validates a config document.
pub fn parse_config<T: DeserializeOwned + Checked>(text: &str) -> Result<T, ConfigError> {
    let mut cfg: T = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        match e.classify() {
            serde_json::error::Category::Data => ConfigError::Invalid(vec![message]),
            _ => ConfigError::Syntax { line: e.line(), column: e.column(), message },
        }
    })?;
    let violations = cfg.check();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

/// Canonical serialization; the config hash of manifests is taken over it.
pub fn to_canonical_json<T: Serialize>(cfg: &T) -> String {
    serde_json::to_string_pretty(cfg).expect("configs serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// A registry entry by name with numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl ProfileConfig {
    pub fn named(name: &str) -> Self {
        Self { name: name.to_string(), params: BTreeMap::new() }
    }

    /// Resolves the entry. Missing parameters take the registry defaults.
    pub fn profile(&self, dim: usize) -> Result<Profile, Vec<String>> {
        let mut profile = Profile::from_name(&self.name)
            .map_err(|_| vec![format!("unknown profile `{}` (known: {})", self.name, PROFILE_NAMES.join(", "))])?;
        let mut errs = Vec::new();
        let allowed: &[&str] = match profile {
            Profile::Zero => &[],
            Profile::Constant { .. } => &["value"],
            Profile::Cosine { .. } => &["amplitude", "k", "time_power"],
            Profile::GaussianBump { .. } => &["amplitude", "center", "width"],
            Profile::SingularPower { .. } => &["amplitude", "center", "sigma", "eps_f"],
        };
        for key in self.params.keys() {
            if !allowed.contains(&key.as_str()) {
                errs.push(format!("profile `{}` has no parameter `{key}`", self.name));
            }
        }
        let mut num = |key: &str, slot: &mut f64| {
            if let Some(v) = self.params.get(key) {
                match v.as_f64() {
                    Some(x) => *slot = x,
                    None => errs.push(format!("parameter `{key}` of `{}` must be a number", self.name)),
                }
            }
        };
        match &mut profile {
            Profile::Zero => {}
            Profile::Constant { value } => num("value", value),
            Profile::Cosine { amplitude, time_power, .. } => {
                num("amplitude", amplitude);
                num("time_power", time_power);
            }
            Profile::GaussianBump { amplitude, width, .. } => {
                num("amplitude", amplitude);
                num("width", width);
            }
            Profile::SingularPower { amplitude, sigma, eps_f, .. } => {
                num("amplitude", amplitude);
                num("sigma", sigma);
                num("eps_f", eps_f);
            }
        }
        match &mut profile {
            Profile::Cosine { k, .. } => {
                if let Some(v) = self.params.get("k") {
                    match v.as_array().map(|a| a.iter().map(Value::as_u64).collect::<Option<Vec<_>>>()) {
                        Some(Some(list)) if list.len() <= dim && list.iter().all(|x| *x <= u64::from(u32::MAX)) => {
                            *k = [0; 3];
                            for (slot, x) in k.iter_mut().zip(&list) {
                                *slot = *x as u32;
                            }
                        }
                        _ => errs.push(format!("parameter `k` must list at most {dim} non-negative wave numbers")),
                    }
                }
            }
            Profile::GaussianBump { center, .. } | Profile::SingularPower { center, .. } => {
                if let Some(v) = self.params.get("center") {
                    match v.as_array().map(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>()) {
                        Some(Some(list)) if list.len() == dim => {
                            *center = [0.0; 3];
                            center[..dim].copy_from_slice(&list);
                        }
                        _ => errs.push(format!("parameter `center` must list {dim} coordinates")),
                    }
                }
            }
            _ => {}
        }
        if let Err(e) = profile.validate() {
            errs.push(format!("profile `{}`: {e}", self.name));
        }
        if errs.is_empty() {
            Ok(profile)
        } else {
            Err(errs)
        }
    }

    /// The config with every parameter spelled out.
    fn filled(profile: &Profile, dim: usize) -> Self {
        let mut params = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            params.insert(k.to_string(), v);
        };
        match *profile {
            Profile::Zero => {}
            Profile::Constant { value } => put("value", value.into()),
            Profile::Cosine { amplitude, k, time_power } => {
                put("amplitude", amplitude.into());
                put("k", k[..dim].iter().map(|&x| Value::from(x)).collect());
                put("time_power", time_power.into());
            }
            Profile::GaussianBump { amplitude, center, width } => {
                put("amplitude", amplitude.into());
                put("center", center[..dim].iter().map(|&x| Value::from(x)).collect());
                put("width", width.into());
            }
            Profile::SingularPower { amplitude, center, sigma, eps_f } => {
                put("amplitude", amplitude.into());
                put("center", center[..dim].iter().map(|&x| Value::from(x)).collect());
                put("sigma", sigma.into());
                put("eps_f", eps_f.into());
            }
        }
        Self { name: profile.name().to_string(), params }
    }

    fn check(&mut self, what: &str, dim: Option<usize>, errs: &mut Vec<String>) -> Option<Profile> {
        let dim = dim?;
        match self.profile(dim) {
            Ok(profile) => {
                *self = Self::filled(&profile, dim);
                Some(profile)
            }
            Err(list) => {
                errs.extend(list.into_iter().map(|e| format!("{what}: {e}")));
                None
            }
        }
    }
}

fn zero_profile() -> ProfileConfig {
    ProfileConfig::named("zero")
}
fn default_cfl() -> f64 {
    0.9
}
fn default_stride() -> usize {
    1
}
fn default_max_steps() -> usize {
    2_000_000
}
fn default_steady_tol() -> f64 {
    1e-8
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// One regularized problem and the solver settings for it. Keys follow the
/// usual notation: `N` is the dimension, `T` the horizon, `box` the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub p: f64,
    #[serde(default)]
    pub gamma: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(rename = "N")]
    pub dim: usize,
    /// Defaults to the unit box.
    #[serde(rename = "box", default)]
    pub domain: Option<BoxConfig>,
    pub grid_n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_cfl")]
    pub cfl_fraction: f64,
    #[serde(default = "zero_profile")]
    pub forcing: ProfileConfig,
    #[serde(default = "zero_profile")]
    pub u0: ProfileConfig,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_steady_tol")]
    pub steady_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ProblemConfig {
    fn dim_ok(&self) -> Option<usize> {
        (1..=3).contains(&self.dim).then_some(self.dim)
    }

    pub fn box_domain(&self) -> BoxDomain {
        match &self.domain {
            Some(b) => BoxDomain::new(&b.lower, &b.upper).expect("validated box"),
            None => BoxDomain::unit(self.dim).expect("validated dimension"),
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::uniform(self.box_domain(), self.grid_n).expect("validated grid")
    }

    pub fn forcing_profile(&self) -> Profile {
        self.forcing.profile(self.dim).expect("validated profile")
    }

    pub fn initial_profile(&self) -> Profile {
        self.u0.profile(self.dim).expect("validated profile")
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let domain = self.box_domain();
        ProblemSpec {
            diffusion: DiffusionSpec::power(self.p).expect("validated p"),
            hamiltonian: HamiltonianSpec::new(self.gamma, self.forcing_profile().build(&domain)),
            epsilon: self.epsilon,
            domain,
            horizon: self.horizon,
            initial: InitialDatum::Function(self.initial_profile().build(&domain)),
            lambda: self.lambda,
        }
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig::new(self.grid())
            .with_cfl(self.cfl_fraction)
            .with_stride(self.snapshot_stride)
            .with_max_steps(self.max_steps)
            .with_steady_tol(self.steady_tol)
    }

    /// Violations of everything except the growth condition, which depends
    /// on whether the problem is stationary.
    fn check_common(&mut self, errs: &mut Vec<String>) {
        if !(self.p > 1.0) {
            errs.push(format!("p must exceed 1 (got {})", self.p));
        }
        if !(self.gamma >= 0.0) {
            errs.push(format!("gamma must be non-negative (got {})", self.gamma));
        }
        if !(self.epsilon > 0.0) {
            errs.push(format!("epsilon must be positive (got {})", self.epsilon));
        }
        if !(self.lambda >= 0.0) {
            errs.push(format!("lambda must be non-negative (got {})", self.lambda));
        }
        if self.dim_ok().is_none() {
            errs.push(format!("N must be 1, 2 or 3 (got {})", self.dim));
        }
        if !(self.horizon > 0.0) {
            errs.push(format!("T must be positive (got {})", self.horizon));
        }
        if self.grid_n < 3 {
            errs.push(format!("grid_n must be at least 3 (got {})", self.grid_n));
        }
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            errs.push(format!("cfl_fraction must lie in (0, 1] (got {})", self.cfl_fraction));
        }
        if self.max_steps == 0 {
            errs.push("max_steps must be at least 1".to_string());
        }
        if !(self.steady_tol > 0.0) {
            errs.push(format!("steady_tol must be positive (got {})", self.steady_tol));
        }
        if let Some(dim) = self.dim_ok() {
            match &self.domain {
                None => {
                    self.domain = Some(BoxConfig { lower: vec![0.0; dim], upper: vec![1.0; dim] });
                }
                Some(b) if b.lower.len() != dim || b.upper.len() != dim => {
                    errs.push(format!("box.lower and box.upper must have N = {dim} entries"));
                }
                Some(b) => {
                    if let Err(e) = BoxDomain::new(&b.lower, &b.upper) {
                        errs.push(format!("box: {e}"));
                    }
                }
            }
        }
        self.forcing.check("forcing", self.dim_ok(), errs);
        if let Some(u0) = self.u0.check("u0", self.dim_ok(), errs) {
            if !u0.is_neumann_compatible() {
                errs.push(format!("u0: profile `{}` does not satisfy the Neumann condition", u0.name()));
            }
        }
    }

    fn check_growth(&self, errs: &mut Vec<String>) {
        if !(self.p > 1.0 && self.gamma >= 0.0) || self.dim_ok().is_none() {
            return;
        }
        if self.lambda > 0.0 {
            let threshold = self.p - 1.0;
            if self.gamma >= threshold {
                errs.push(format!(
                    "gamma = {} must be strictly below p - 1 = {threshold}: the stationary growth condition is a strict inequality",
                    self.gamma
                ));
            }
        } else {
            let ell = growth_threshold(&self.p, self.dim as u32).expect("p > 1 and N >= 1");
            if self.gamma >= ell {
                errs.push(format!(
                    "gamma = {} must be strictly below the growth threshold l(p, N) = {ell}: the growth condition gamma < l is a strict inequality",
                    self.gamma
                ));
            }
        }
    }
}

impl Checked for ProblemConfig {
    fn check(&mut self) -> Vec<String> {
        let mut errs = Vec::new();
        self.check_common(&mut errs);
        self.check_growth(&mut errs);
        errs
    }
}

/// Tolerances of the study checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlackConfig {
    pub slope: f64,
    pub constant_factor: f64,
    pub linear: f64,
    pub stabilization: f64,
    pub conservation: f64,
}

impl Default for SlackConfig {
    fn default() -> Self {
        let s = Slack::default();
        Self {
            slope: s.slope,
            constant_factor: s.constant_factor,
            linear: s.linear,
            stabilization: s.stabilization,
            conservation: s.conservation,
        }
    }
}

impl From<SlackConfig> for Slack {
    fn from(s: SlackConfig) -> Self {
        Slack {
            slope: s.slope,
            constant_factor: s.constant_factor,
            linear: s.linear,
            stabilization: s.stabilization,
            conservation: s.conservation,
        }
    }
}

impl SlackConfig {
    fn check(&self, errs: &mut Vec<String>) {
        for (name, v) in [
            ("slope", self.slope),
            ("constant_factor", self.constant_factor),
            ("linear", self.linear),
            ("stabilization", self.stabilization),
            ("conservation", self.conservation),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("slack.{name} must be positive (got {v})"));
            }
        }
    }
}

fn check_scalings(scalings: &[f64], errs: &mut Vec<String>) {
    if scalings.len() < 4 {
        errs.push(format!("scalings needs at least 4 rungs (got {})", scalings.len()));
    }
    if scalings.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        errs.push("scalings must be positive".to_string());
    }
    if scalings.windows(2).any(|w| !(w[1] > w[0])) {
        errs.push("scalings must be strictly increasing".to_string());
    }
}

/// `scaling`: forcing-amplitude ladder of the evolution problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub problem: ProblemConfig,
    pub scalings: Vec<f64>,
    pub m: f64,
    #[serde(default)]
    pub slack: SlackConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Checked for ScalingConfig {
    fn check(&mut self) -> Vec<String> {
        let mut errs = Vec::new();
        let pr = &mut self.problem;
        pr.check_common(&mut errs);
        if pr.lambda != 0.0 {
            errs.push("problem.lambda must be 0 for the evolution ladder".to_string());
        }
        pr.check_growth(&mut errs);
        if errs.is_empty() {
            if let Err(e) = parabolic_gates(pr.p, pr.dim as u32, self.m, pr.gamma) {
                errs.push(e.to_string());
            }
        }
        check_scalings(&self.scalings, &mut errs);
        self.slack.check(&mut errs);
        errs
    }
}

/// `elliptic`: forcing-amplitude ladder of the stationary problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticConfig {
    pub problem: ProblemConfig,
    pub scalings: Vec<f64>,
    pub m: f64,
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub slack: SlackConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Checked for EllipticConfig {
    fn check(&mut self) -> Vec<String> {
        let mut errs = Vec::new();
        let pr = &mut self.problem;
        pr.check_common(&mut errs);
        if !(pr.lambda > 0.0) {
            errs.push(format!("problem.lambda must be positive for the stationary ladder (got {})", pr.lambda));
        }
        pr.check_growth(&mut errs);
        if errs.is_empty() {
            if let Err(e) = elliptic_gates(pr.p, pr.dim as u32, self.m, pr.gamma) {
                errs.push(e.to_string());
            }
        }
        check_scalings(&self.scalings, &mut errs);
        self.slack.check(&mut errs);
        errs
    }
}

fn default_p_values() -> Vec<f64> {
    vec![1.1, 1.5, 2.0, 3.0, 4.0]
}
fn default_m_values() -> Vec<f64> {
    vec![3.0, 4.0, 8.0, 16.0, 32.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub forcing: ProfileConfig,
    pub u0: ProfileConfig,
}

/// `conserve`: gradient conservation ratios over a corpus. The problem's
/// `p`, forcing and `u0` are replaced per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConserveConfig {
    pub problem: ProblemConfig,
    #[serde(default = "default_p_values")]
    pub p_values: Vec<f64>,
    #[serde(default = "default_m_values")]
    pub m_values: Vec<f64>,
    /// Defaults to the built-in corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<Vec<CaseConfig>>,
    #[serde(default)]
    pub slack: SlackConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl ConserveConfig {
    pub fn corpus(&self) -> Option<Vec<ConservationCase>> {
        let domain = self.problem.box_domain();
        let dim = self.problem.dim;
        self.cases.as_ref().map(|cases| {
            cases
                .iter()
                .map(|c| ConservationCase {
                    name: c.name.clone(),
                    forcing: c.forcing.profile(dim).expect("validated").build(&domain),
                    initial: c.u0.profile(dim).expect("validated").build(&domain),
                })
                .collect()
        })
    }
}

impl Checked for ConserveConfig {
    fn check(&mut self) -> Vec<String> {
        let mut errs = Vec::new();
        let pr = &mut self.problem;
        pr.check_common(&mut errs);
        if pr.gamma != 0.0 {
            errs.push(format!("problem.gamma must be 0 for the conservation study (got {})", pr.gamma));
        }
        if pr.lambda != 0.0 {
            errs.push("problem.lambda must be 0 for the conservation study".to_string());
        }
        if self.p_values.is_empty() || self.p_values.iter().any(|p| !(*p > 1.0)) {
            errs.push("p_values must be non-empty and every p must exceed 1".to_string());
        }
        if self.m_values.is_empty() || self.m_values.iter().any(|m| !(*m > 2.0)) {
            errs.push("m_values must be non-empty and every m must exceed 2".to_string());
        }
        if let (Some(cases), Some(dim)) = (self.cases.as_mut(), self.problem.dim_ok()) {
            if cases.is_empty() {
                errs.push("cases must not be empty".to_string());
            }
            for c in cases.iter_mut() {
                let name = c.name.clone();
                c.forcing.check(&format!("case `{name}` forcing"), Some(dim), &mut errs);
                if let Some(u0) = c.u0.check(&format!("case `{name}` u0"), Some(dim), &mut errs) {
                    if !u0.is_neumann_compatible() {
                        errs.push(format!("case `{name}` u0: profile `{}` does not satisfy the Neumann condition", u0.name()));
                    }
                }
            }
        }
        self.slack.check(&mut errs);
        errs
    }
}

fn default_snapshots() -> usize {
    40
}

/// `linf-check`: singular forcing with `m > N+2` on a refinement ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinfConfig {
    pub problem: ProblemConfig,
    pub m: f64,
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_sigma: Option<f64>,
    pub grids: Vec<usize>,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default)]
    pub slack: SlackConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl LinfConfig {
    pub fn center_point(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        c[..self.center.len()].copy_from_slice(&self.center);
        c
    }
}

impl Checked for LinfConfig {
    fn check(&mut self) -> Vec<String> {
        let mut errs = Vec::new();
        let pr = &mut self.problem;
        pr.check_common(&mut errs);
        pr.check_growth(&mut errs);
        if !(pr.p >= 2.0) {
            errs.push(format!("the bounded-gradient study needs p >= 2 (got {})", pr.p));
        }
        if pr.lambda != 0.0 {
            errs.push("problem.lambda must be 0 for the bounded-gradient study".to_string());
        }
        let critical = pr.dim as f64 + 2.0;
        if !(self.m > critical) {
            errs.push(format!("m = {} must exceed N+2 = {critical}", self.m));
        }
        if !(self.sigma >= 0.0) {
            errs.push(format!("sigma must be non-negative (got {})", self.sigma));
        }
        if let Some(s) = self.control_sigma {
            if !(s >= 0.0) {
                errs.push(format!("control_sigma must be non-negative (got {s})"));
            }
        }
        if self.center.len() != pr.dim {
            errs.push(format!("center must have N = {} coordinates", pr.dim));
        }
        if self.grids.len() < 2 || self.grids.iter().any(|n| *n < 3) || self.grids.windows(2).any(|w| w[1] <= w[0]) {
            errs.push("grids must list at least 2 increasing node counts, each at least 3".to_string());
        }
        if self.snapshots < 2 {
            errs.push("snapshots must be at least 2".to_string());
        }
        self.slack.check(&mut errs);
        errs
    }
}
