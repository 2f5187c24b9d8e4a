//! The experiment file: one TOML document, every section optional except `[scheme]`.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub coding: CodingConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub decompose: DecomposeConfig,
    #[serde(default)]
    pub laws: LawsConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub statistics: StatisticsConfig,
    #[serde(default)]
    pub moments: MomentsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Doubling,
    Lsv,
    PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Truncation depth of the return-time alphabet.
    #[serde(default)]
    pub depth: Option<u32>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Branch masses as `"p/q"` strings (piecewise linear only).
    #[serde(default)]
    pub masses: Option<Vec<String>>,
    #[serde(default)]
    pub taus: Option<Vec<u32>>,
    /// Letters kept (and renormalized) for the finite tower.
    #[serde(default = "defaults::tower_alphabet")]
    pub tower_alphabet: usize,
    /// Replaces the declared expansion constant, for negative controls.
    #[serde(default)]
    pub lambda_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub samples: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { samples: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodingConfig {
    pub exact_depth: usize,
    pub pushforward_samples: usize,
    pub lipschitz_pairs: usize,
    pub lipschitz_depth: usize,
    pub semiconjugacy_points: usize,
    pub semiconjugacy_steps: usize,
    pub semiconjugacy_depth: usize,
    pub semiconjugacy_tolerance: f64,
}

impl Default for CodingConfig {
    fn default() -> Self {
        CodingConfig {
            exact_depth: 3,
            pushforward_samples: 20_000,
            lipschitz_pairs: 100_000,
            lipschitz_depth: 12,
            semiconjugacy_points: 1000,
            semiconjugacy_steps: 50,
            semiconjugacy_depth: 40,
            semiconjugacy_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub xi: Option<String>,
    #[serde(rename = "N")]
    pub n: Option<u64>,
    pub eps: Option<String>,
    pub xi_denominator: i64,
    pub eps_denominator: i64,
    pub max_n: u64,
    pub tail_horizon: u64,
    pub p_sequence_len: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            r: Some(0.05),
            xi: None,
            n: None,
            eps: None,
            xi_denominator: 100,
            eps_denominator: 100,
            max_n: 32,
            tail_horizon: 100,
            p_sequence_len: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeConfig {
    pub mass_resolution: f64,
    pub max_clock: u64,
    pub prop_e_levels: u64,
    pub export_cutoff: u64,
    pub bridge_max: u64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig { mass_resolution: 1e-4, max_clock: 4000, prop_e_levels: 20, export_cutoff: 10, bridge_max: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LawsConfig {
    pub theta_m: Vec<f64>,
    pub theta_x: Vec<f64>,
    pub table_max: u64,
    /// Support of the brute-force convolution; the law's tail beyond it is compared too.
    pub oracle_n_max: u64,
    /// `r_law` is compared with word enumeration up to this many multiples of `N`.
    pub enumerate_multiples: u64,
}

impl Default for LawsConfig {
    fn default() -> Self {
        LawsConfig { theta_m: vec![0.2, 0.8], theta_x: vec![0.1, 0.3, 0.5, 0.7, 0.9], table_max: 20, oracle_n_max: 200, enumerate_multiples: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Defaults to the renewal parameter of the exported law.
    pub theta: Option<f64>,
    pub length: usize,
    pub words: usize,
    pub level_samples: usize,
    /// Levels pass if the Kolmogorov distance to the tower measure is below `c / sqrt(samples)`.
    pub level_ks_coefficient: f64,
    pub replicates: usize,
    pub p: f64,
    pub k_max: i64,
    pub r2_min: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            theta: None,
            length: 1000,
            words: 4,
            level_samples: 100_000,
            level_ks_coefficient: 1.63,
            replicates: 10_000,
            p: 3.0,
            k_max: 20,
            r2_min: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatisticsConfig {
    pub trajectories: usize,
    pub length: usize,
    pub checkpoints: usize,
    pub gk_length: usize,
    pub gk_lag: usize,
    pub ks_max: f64,
    pub slope_tolerance: f64,
    pub height_samples: usize,
}

impl Default for StatisticsConfig {
    fn default() -> Self {
        StatisticsConfig {
            trajectories: 10_000,
            length: 10_000,
            checkpoints: 10,
            gk_length: 1_000_000,
            gk_lag: 20,
            ks_max: 0.02,
            slope_tolerance: 0.1,
            height_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsConfig {
    pub enabled: bool,
    pub gamma: f64,
    pub depth: u32,
    pub samples: usize,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        MomentsConfig { enabled: true, gamma: 0.5, depth: 1000, samples: 1_000_000 }
    }
}

mod defaults {
    pub fn seed() -> u64 {
        1
    }
    pub fn tower_alphabet() -> usize {
        3
    }
}

/// A schema violation, located by its dotted key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config: {}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = toml::Deserializer::new(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        err(&path, inner.message().trim().to_string())
    })?;
    check(&cfg)?;
    Ok(cfg)
}

fn positive(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(err(path, format!("must be positive, got {x}")))
    }
}

fn unit(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(err(path, format!("must lie in (0, 1), got {x}")))
    }
}

fn rational(path: &str, s: &str) -> Result<(), ConfigError> {
    bytower_core::rational::parse(s).map(|_| ()).map_err(|e| err(path, e.to_string()))
}

/// Semantic checks that the schema alone cannot express.
pub fn check(c: &ExperimentConfig) -> Result<(), ConfigError> {
    let s = &c.scheme;
    match s.kind {
        SchemeKind::Doubling => {
            if let Some(d) = s.depth {
                if !(1..=52).contains(&d) {
                    return Err(err("scheme.depth", "doubling depth must lie in 1..=52"));
                }
            }
        }
        SchemeKind::Lsv => {
            let g = s.gamma.ok_or_else(|| err("scheme.gamma", "required for kind = \"lsv\""))?;
            unit("scheme.gamma", g)?;
        }
        SchemeKind::PiecewiseLinear => {
            let m = s.masses.as_ref().ok_or_else(|| err("scheme.masses", "required for kind = \"piecewise_linear\""))?;
            let t = s.taus.as_ref().ok_or_else(|| err("scheme.taus", "required for kind = \"piecewise_linear\""))?;
            for (i, x) in m.iter().enumerate() {
                rational(&format!("scheme.masses[{i}]"), x)?;
            }
            if m.len() != t.len() {
                return Err(err("scheme.taus", "must have the same length as scheme.masses"));
            }
        }
    }
    if s.tower_alphabet == 0 {
        return Err(err("scheme.tower_alphabet", "must be at least 1"));
    }
    if let Some(l) = s.lambda_override {
        positive("scheme.lambda_override", l)?;
    }
    if let Some(r) = c.plan.r {
        positive("plan.R", r)?;
    }
    if let Some(x) = &c.plan.xi {
        rational("plan.xi", x)?;
    }
    if let Some(x) = &c.plan.eps {
        rational("plan.eps", x)?;
    }
    if c.plan.n == Some(0) {
        return Err(err("plan.N", "must be at least 1"));
    }
    if c.plan.xi_denominator <= 0 || c.plan.eps_denominator <= 0 {
        return Err(err("plan", "denominators must be positive"));
    }
    unit("decompose.mass_resolution", c.decompose.mass_resolution)?;
    if c.decompose.export_cutoff == 0 {
        return Err(err("decompose.export_cutoff", "must be at least 1"));
    }
    for (i, x) in c.laws.theta_m.iter().enumerate() {
        if !(*x > 0.0 && *x <= 1.0) {
            return Err(err(&format!("laws.theta_m[{i}]"), "must lie in (0, 1]"));
        }
    }
    for (i, x) in c.laws.theta_x.iter().enumerate() {
        if !(*x > 0.0 && *x <= 1.0) {
            return Err(err(&format!("laws.theta_x[{i}]"), "must lie in (0, 1]"));
        }
    }
    if let Some(t) = c.sampler.theta {
        unit("sampler.theta", t)?;
    }
    if c.sampler.p <= 2.0 {
        return Err(err("sampler.p", "must exceed 2"));
    }
    if c.sampler.replicates < 100 {
        return Err(err("sampler.replicates", "must be at least 100"));
    }
    if c.sampler.k_max < 4 {
        return Err(err("sampler.k_max", "must be at least 4"));
    }
    if c.statistics.trajectories < 2 {
        return Err(err("statistics.trajectories", "must be at least 2"));
    }
    positive("statistics.ks_max", c.statistics.ks_max)?;
    if c.moments.enabled {
        unit("moments.gamma", c.moments.gamma)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse("[scheme]\nkind = \"doubling\"\n").unwrap();
        assert_eq!(c.seed, 1);
        assert_eq!(c.decompose.mass_resolution, 1e-4);
        assert_eq!(c.scheme.tower_alphabet, 3);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let e = parse("[scheme]\nkind = \"doubling\"\n[sampler]\nthetta = 0.5\n").unwrap_err();
        assert!(e.path.starts_with("sampler"), "{e}");
        assert!(e.message.contains("thetta"), "{e}");
    }

    #[test]
    fn wrong_type_names_its_path() {
        let e = parse("[scheme]\nkind = \"doubling\"\n[decompose]\nmass_resolution = \"small\"\n").unwrap_err();
        assert_eq!(e.path, "decompose.mass_resolution");
    }

    #[test]
    fn semantic_errors() {
        let e = parse("[scheme]\nkind = \"lsv\"\n").unwrap_err();
        assert_eq!(e.path, "scheme.gamma");
        let e = parse("[scheme]\nkind = \"piecewise_linear\"\nmasses = [\"1/2\", \"x\"]\ntaus = [1, 1]\n").unwrap_err();
        assert_eq!(e.path, "scheme.masses[1]");
    }
}
