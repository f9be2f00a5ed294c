//! Declarative run configuration.
//!
//! One TOML file describes the whole design — aims, grid, scenarios,
//! estimand, margin, analysis methods, performance targets, sample-size
//! search, interim settings, Monte Carlo controls — so a run is a reviewed,
//! versioned artifact rather than a pile of flags. Parsing is strict:
//! unknown keys are rejected, every invariant is checked at load time, and
//! the resolved configuration (defaults filled in) is echoed into every
//! manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use roci_core::error::{Error, Result};
use roci_core::fp::FitControls;
use roci_core::inference::{DecisionRule, Method};
use roci_core::trial::{
    flat_scenario, margin_scenarios, ArmGrid, EstimandSpec, IntercurrentHandling, Margin,
    Preference, Scenario, SummaryScale,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub aims: AimsSection,
    pub grid: GridSection,
    pub estimand: EstimandSection,
    pub margin: MarginSection,
    pub scenarios: Vec<ScenarioSection>,
    #[serde(default)]
    pub methods: MethodsSection,
    #[serde(default)]
    pub performance: PerformanceSection,
    #[serde(default)]
    pub samplesize: SampleSizeSection,
    pub interim: Option<InterimSection>,
    pub mc: McSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AimsSection {
    /// Free text stating what the simulation study is for; echoed verbatim.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub arms: Vec<f64>,
    pub control_index: usize,
    pub preference: Preference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimandSection {
    pub treatment: String,
    pub population: String,
    pub variable: String,
    #[serde(default)]
    pub summary_measure: SummaryScale,
    #[serde(default)]
    pub intercurrent_handling: IntercurrentHandling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginSection {
    pub rr: f64,
    pub alpha: f64,
}

/// One scenario request; `margin_family` expands to `count` scenarios named
/// `margin_k1..margin_k<count>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSection {
    Flat {
        #[serde(default = "default_flat_name")]
        name: String,
        pi0: f64,
    },
    MarginFamily {
        pi0: f64,
        count: usize,
    },
    Explicit {
        name: String,
        probs: Vec<f64>,
    },
}

fn default_flat_name() -> String {
    "flat".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodsSection {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_bootstrap_b")]
    pub bootstrap_b: usize,
    #[serde(default = "default_rule")]
    pub rule: DecisionRule,
    #[serde(default)]
    pub fp: FpSection,
}

impl Default for MethodsSection {
    fn default() -> Self {
        MethodsSection {
            method: default_method(),
            bootstrap_b: default_bootstrap_b(),
            rule: default_rule(),
            fp: FpSection::default(),
        }
    }
}

fn default_method() -> Method {
    Method::Delta
}
fn default_bootstrap_b() -> usize {
    1000
}
fn default_rule() -> DecisionRule {
    DecisionRule::MaxPreferredPassing
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpSection {
    /// Basis divisor; omitted means the grid maximum.
    pub scale: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_rel_deviance_tol")]
    pub rel_deviance_tol: f64,
    #[serde(default = "default_beta_bound")]
    pub beta_bound: f64,
    #[serde(default = "default_tie_epsilon")]
    pub tie_epsilon: f64,
}

impl Default for FpSection {
    fn default() -> Self {
        FpSection {
            scale: None,
            max_iterations: default_max_iterations(),
            rel_deviance_tol: default_rel_deviance_tol(),
            beta_bound: default_beta_bound(),
            tie_epsilon: default_tie_epsilon(),
        }
    }
}

fn default_max_iterations() -> usize {
    FitControls::default().max_iterations
}
fn default_rel_deviance_tol() -> f64 {
    FitControls::default().rel_deviance_tol
}
fn default_beta_bound() -> f64 {
    FitControls::default().beta_bound
}
fn default_tie_epsilon() -> f64 {
    FitControls::default().tie_epsilon
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceSection {
    #[serde(default = "default_target_power")]
    pub target_power: f64,
    #[serde(default = "default_type1_cap")]
    pub type1_cap: f64,
}

impl Default for PerformanceSection {
    fn default() -> Self {
        PerformanceSection {
            target_power: default_target_power(),
            type1_cap: default_type1_cap(),
        }
    }
}

fn default_target_power() -> f64 {
    0.80
}
fn default_type1_cap() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSizeSection {
    #[serde(default = "default_n_start")]
    pub n_start: u64,
    #[serde(default = "default_n_stop")]
    pub n_stop: u64,
    #[serde(default = "default_n_step")]
    pub n_step: u64,
    #[serde(default = "default_loess_span")]
    pub loess_span: f64,
    #[serde(default = "default_dense_step")]
    pub dense_step: u64,
    #[serde(default = "default_inflation_step")]
    pub inflation_step: f64,
    #[serde(default = "default_max_inflations")]
    pub max_inflations: usize,
    /// Monte Carlo replicates for the bootstrap validation stage.
    #[serde(default = "default_validation_nsim")]
    pub validation_nsim: u64,
    /// Scenario driving the power search.
    #[serde(default = "default_flat_name")]
    pub scenario: String,
}

impl Default for SampleSizeSection {
    fn default() -> Self {
        SampleSizeSection {
            n_start: default_n_start(),
            n_stop: default_n_stop(),
            n_step: default_n_step(),
            loess_span: default_loess_span(),
            dense_step: default_dense_step(),
            inflation_step: default_inflation_step(),
            max_inflations: default_max_inflations(),
            validation_nsim: default_validation_nsim(),
            scenario: default_flat_name(),
        }
    }
}

fn default_n_start() -> u64 {
    1000
}
fn default_n_stop() -> u64 {
    2000
}
fn default_n_step() -> u64 {
    50
}
fn default_loess_span() -> f64 {
    0.75
}
fn default_dense_step() -> u64 {
    10
}
fn default_inflation_step() -> f64 {
    0.10
}
fn default_max_inflations() -> usize {
    1
}
fn default_validation_nsim() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterimSection {
    pub p0: f64,
    pub p1: f64,
    pub alpha: f64,
    pub sided: roci_core::interim::Sided,
    pub power: f64,
    #[serde(default = "default_allocation")]
    pub allocation: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Replicates for the log-rank oracle column; 0 skips it.
    #[serde(default = "default_oracle_nsim")]
    pub oracle_nsim: u64,
    /// Externally planned interim size, if any; reported against both
    /// sidedness conventions.
    pub reference_n: Option<u64>,
    #[serde(default)]
    pub grids: InterimGridsSection,
}

fn default_allocation() -> f64 {
    0.5
}
fn default_tau() -> f64 {
    18.0
}
fn default_oracle_nsim() -> u64 {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterimGridsSection {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_p0_values")]
    pub p0_values: Vec<f64>,
    #[serde(default = "default_p1_values")]
    pub p1_values: Vec<f64>,
    #[serde(default = "default_power_values")]
    pub power_values: Vec<f64>,
}

impl Default for InterimGridsSection {
    fn default() -> Self {
        InterimGridsSection {
            alphas: default_alphas(),
            p0_values: default_p0_values(),
            p1_values: default_p1_values(),
            power_values: default_power_values(),
        }
    }
}

fn default_alphas() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 100.0).collect()
}
fn default_p0_values() -> Vec<f64> {
    vec![0.35, 0.40, 0.45, 0.50, 0.55, 0.60]
}
fn default_p1_values() -> Vec<f64> {
    vec![0.20, 0.25, 0.30, 0.35, 0.40]
}
fn default_power_values() -> Vec<f64> {
    vec![0.70, 0.75, 0.80, 0.85, 0.90]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub nsim: u64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_output_dir")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_output_dir(),
        }
    }
}

fn default_output_dir() -> String {
    "runs".to_string()
}

/// A loaded configuration together with the domain objects it resolves to.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub raw: RunConfig,
    pub grid: ArmGrid,
    pub estimand: EstimandSpec,
    pub margin: Margin,
    pub scenarios: Vec<Scenario>,
    pub fit: FitControls,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("config serialise error: {e}")))
    }

    /// Validate every section and build the domain objects.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let grid = ArmGrid::new(
            &self.grid.arms,
            self.grid.control_index,
            self.grid.preference,
        )?;
        let margin = Margin::new(self.margin.rr, self.margin.alpha)?;
        let estimand = EstimandSpec {
            treatment: self.estimand.treatment.clone(),
            population: self.estimand.population.clone(),
            variable: self.estimand.variable.clone(),
            summary_measure: self.estimand.summary_measure,
            intercurrent_handling: self.estimand.intercurrent_handling,
        };
        estimand.validate()?;

        let mut scenarios: Vec<Scenario> = Vec::new();
        for section in &self.scenarios {
            match section {
                ScenarioSection::Flat { name, pi0 } => {
                    let mut s = flat_scenario(&grid, *pi0)?;
                    s.name = name.clone();
                    scenarios.push(s);
                }
                ScenarioSection::MarginFamily { pi0, count } => {
                    scenarios.extend(margin_scenarios(&grid, *pi0, margin.rr, *count)?);
                }
                ScenarioSection::Explicit { name, probs } => {
                    if probs.len() != grid.len() {
                        return Err(Error::Validation(format!(
                            "scenarios: explicit scenario '{name}' has {} probabilities for a \
                             {}-arm grid",
                            probs.len(),
                            grid.len()
                        )));
                    }
                    scenarios.push(Scenario::new(name.clone(), probs.clone())?);
                }
            }
        }
        if scenarios.is_empty() {
            return Err(Error::Validation(
                "scenarios: at least one scenario is required".to_string(),
            ));
        }
        let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation(
                "scenarios: names must be unique (they key the random streams)".to_string(),
            ));
        }

        if !(self.performance.target_power > 0.0 && self.performance.target_power < 1.0) {
            return Err(Error::Validation(format!(
                "performance.target_power must lie in (0,1), got {}",
                self.performance.target_power
            )));
        }
        if self.samplesize.n_start >= self.samplesize.n_stop || self.samplesize.n_step == 0 {
            return Err(Error::Validation(
                "samplesize: need n_start < n_stop and a positive n_step".to_string(),
            ));
        }
        if !(self.samplesize.loess_span > 0.0 && self.samplesize.loess_span <= 1.0) {
            return Err(Error::Validation(format!(
                "samplesize.loess_span must lie in (0,1], got {}",
                self.samplesize.loess_span
            )));
        }
        if self.samplesize.inflation_step <= 0.0 {
            return Err(Error::Validation(format!(
                "samplesize.inflation_step must be positive, got {}",
                self.samplesize.inflation_step
            )));
        }
        if self.mc.nsim == 0 {
            return Err(Error::Validation("mc.nsim must be positive".to_string()));
        }

        let fit = FitControls {
            max_iterations: self.methods.fp.max_iterations,
            rel_deviance_tol: self.methods.fp.rel_deviance_tol,
            beta_bound: self.methods.fp.beta_bound,
            tie_epsilon: self.methods.fp.tie_epsilon,
        };

        if let Some(interim) = &self.interim {
            self.interim_spec_of(interim).validate()?;
        }

        Ok(ResolvedConfig {
            raw: self.clone(),
            grid,
            estimand,
            margin,
            scenarios,
            fit,
        })
    }

    fn interim_spec_of(&self, section: &InterimSection) -> roci_core::interim::InterimSpec {
        roci_core::interim::InterimSpec {
            p0: section.p0,
            p1: section.p1,
            alpha: section.alpha,
            sided: section.sided,
            power: section.power,
            allocation: section.allocation,
            tau: section.tau,
        }
    }
}

impl ResolvedConfig {
    pub fn scenario(&self, name: &str) -> Result<&Scenario> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Validation(format!("unknown scenario '{name}'")))
    }

    pub fn n_grid(&self) -> Vec<u64> {
        let s = &self.raw.samplesize;
        let mut out = Vec::new();
        let mut n = s.n_start;
        while n <= s.n_stop {
            out.push(n);
            n += s.n_step;
        }
        out
    }

    pub fn interim_spec(&self) -> Option<roci_core::interim::InterimSpec> {
        self.raw
            .interim
            .as_ref()
            .map(|s| self.raw.interim_spec_of(s))
    }
}
