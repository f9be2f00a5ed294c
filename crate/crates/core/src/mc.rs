//! Monte Carlo replication of whole trials under a scenario, and the
//! operating characteristics derived from the selection counts.
//!
//! Replicates are embarrassingly parallel. Each replicate draws its data and
//! its bootstrap streams from substreams keyed on
//! `(master_seed, scenario id, N, replicate)`, so the aggregate is identical
//! whatever the worker count or execution order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::{FitControls, TrialDataset};
use crate::inference::{analyze, AnalysisOptions, DecisionRule, Method};
use crate::rng::{derive_seed, stream};
use crate::stats::{fnv1a64, mc_interval};
use crate::trial::{classify_arms, ArmGrid, Margin, Scenario};

/// Patient allocation across arms. Only equal split is supported; the
/// remainder goes to the arms nearest the control, deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    #[default]
    Equal,
}

/// Monte Carlo run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub nsim: u64,
    pub method: Method,
    /// Bootstrap resamples per replicate; ignored under [`Method::Delta`].
    pub bootstrap_b: usize,
    pub rule: DecisionRule,
    pub allocation: Allocation,
    pub master_seed: u64,
    pub fit: FitControls,
    /// FP basis divisor; `None` means the grid maximum.
    pub scale: Option<f64>,
}

impl MCConfig {
    pub fn delta(nsim: u64, rule: DecisionRule, master_seed: u64) -> Self {
        MCConfig {
            nsim,
            method: Method::Delta,
            bootstrap_b: 0,
            rule,
            allocation: Allocation::Equal,
            master_seed,
            fit: FitControls::default(),
            scale: None,
        }
    }

    pub fn bootstrap(nsim: u64, b: usize, rule: DecisionRule, master_seed: u64) -> Self {
        MCConfig {
            nsim,
            method: Method::Bootstrap,
            bootstrap_b: b,
            rule,
            allocation: Allocation::Equal,
            master_seed,
            fit: FitControls::default(),
            scale: None,
        }
    }

    /// Check the floor on `nsim` required before any performance measure is
    /// reported. [`run_replicates`] itself accepts any `nsim >= 1`.
    pub fn validate(&self) -> Result<()> {
        if self.nsim < 100 {
            return Err(Error::validation(format!(
                "nsim = {} is below the floor of 100 required for reported \
                 performance measures",
                self.nsim
            )));
        }
        if self.method == Method::Bootstrap && self.bootstrap_b < 100 {
            return Err(Error::validation(format!(
                "bootstrap needs at least 100 resamples, got {}",
                self.bootstrap_b
            )));
        }
        Ok(())
    }
}

/// Equal split of `n_total` across arms; the remainder is handed to the arms
/// nearest the control (by |x - x_control|, ties to the lower index).
pub fn equal_allocation(grid: &ArmGrid, n_total: u64) -> Result<Vec<u64>> {
    let arms = grid.len() as u64;
    if n_total < arms {
        return Err(Error::validation(format!(
            "N = {n_total} is smaller than the number of arms ({arms})"
        )));
    }
    let base = n_total / arms;
    let remainder = (n_total % arms) as usize;
    let mut n = vec![base; grid.len()];
    let xc = grid.control_value();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| {
        let da = (grid.values()[a] - xc).abs();
        let db = (grid.values()[b] - xc).abs();
        da.partial_cmp(&db).expect("finite").then(a.cmp(&b))
    });
    for &j in order.iter().take(remainder) {
        n[j] += 1;
    }
    Ok(n)
}

/// Draw one trial dataset under a scenario: equal allocation, per-arm
/// binomial event counts from the supplied stream.
pub fn simulate_dataset(
    scenario: &Scenario,
    grid: &ArmGrid,
    n_total: u64,
    rng: &mut impl rand::Rng,
) -> Result<TrialDataset> {
    use rand_distr::{Binomial, Distribution};
    if scenario.probs().len() != grid.len() {
        return Err(Error::validation(format!(
            "scenario '{}' has {} arms but the grid has {}",
            scenario.name,
            scenario.probs().len(),
            grid.len()
        )));
    }
    let n = equal_allocation(grid, n_total)?;
    let mut events = vec![0u64; grid.len()];
    for j in 0..grid.len() {
        let p = scenario.probs()[j];
        events[j] = Binomial::new(n[j], p).expect("p in (0,1)").sample(rng);
    }
    TrialDataset::new(grid.clone(), n, events)
}

/// Per-arm selection counts from a batch of simulated trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCounts {
    /// Times each arm (control included) was recommended. Sums to `nsim`.
    pub counts: Vec<u64>,
    /// Replicates whose analysis produced no converged curve (counted as
    /// control selections in `counts`).
    pub failures: u64,
    pub nsim: u64,
}

/// Stable numeric id for a scenario, used in stream derivation.
pub fn scenario_id(scenario: &Scenario) -> u64 {
    fnv1a64(scenario.name.as_bytes())
}

/// Simulate `nsim` whole trials and record which arm each one recommends.
///
/// Analysis failures inside a replicate never abort the run: the replicate
/// counts as a control selection and is tallied in `failures`.
pub fn run_replicates(
    scenario: &Scenario,
    grid: &ArmGrid,
    n_total: u64,
    margin: &Margin,
    mc: &MCConfig,
) -> Result<SelectionCounts> {
    if scenario.probs().len() != grid.len() {
        return Err(Error::validation(format!(
            "scenario '{}' has {} arms but the grid has {}",
            scenario.name,
            scenario.probs().len(),
            grid.len()
        )));
    }
    equal_allocation(grid, n_total)?;
    let sid = scenario_id(scenario);
    let control = grid.control_index();
    let opts_template = AnalysisOptions {
        method: mc.method,
        rule: mc.rule,
        bootstrap_b: mc.bootstrap_b,
        seed: 0,
        scale: mc.scale,
        fit: mc.fit.clone(),
    };

    let selections: Vec<(usize, bool)> = (0..mc.nsim)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(mc.master_seed, &[sid, n_total, rep, 0]);
            let data = match simulate_dataset(scenario, grid, n_total, &mut rng) {
                Ok(d) => d,
                Err(_) => return (control, true),
            };
            let mut opts = opts_template.clone();
            opts.seed = derive_seed(mc.master_seed, &[sid, n_total, rep, 1]);
            match analyze(&data, margin, &opts) {
                Ok(rec) if !rec.model.fallback => (rec.decision.selected_index, false),
                _ => (control, true),
            }
        })
        .collect();

    let mut counts = vec![0u64; grid.len()];
    let mut failures = 0u64;
    for (selected, failed) in selections {
        counts[selected] += 1;
        if failed {
            failures += 1;
        }
    }
    Ok(SelectionCounts {
        counts,
        failures,
        nsim: mc.nsim,
    })
}

/// A simulated probability with its 95% Monte Carlo interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl McEstimate {
    fn from_share(hits: u64, nsim: u64) -> Self {
        let value = hits as f64 / nsim as f64;
        let (lo, hi) = mc_interval(value, nsim);
        McEstimate { value, lo, hi }
    }
}

/// Monte Carlo selection distribution and the derived performance measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    /// Share of replicates recommending each arm (control included).
    pub selection_dist: Vec<f64>,
    /// P(recommend exactly the optimal arm).
    pub optimal_power: McEstimate,
    /// P(recommend any truly acceptable non-control arm).
    pub acceptable_power: McEstimate,
    /// P(recommend an arm at or beyond the margin).
    pub type1_error: McEstimate,
    /// For each preference rank k >= 1: P(recommended arm has rank >= k).
    pub intermediate_powers: Vec<(usize, f64)>,
    pub diag_failures: u64,
    pub nsim: u64,
}

/// Derive the performance measures from selection counts under the true
/// classification of the scenario's arms.
pub fn performance(
    counts: &SelectionCounts,
    scenario: &Scenario,
    grid: &ArmGrid,
    margin: &Margin,
) -> Result<PerfReport> {
    if counts.counts.len() != grid.len() {
        return Err(Error::validation(format!(
            "{} selection counts for a {}-arm grid",
            counts.counts.len(),
            grid.len()
        )));
    }
    let total: u64 = counts.counts.iter().sum();
    if total != counts.nsim || counts.nsim == 0 {
        return Err(Error::validation(format!(
            "selection counts sum to {total}, expected nsim = {}",
            counts.nsim
        )));
    }
    let class = classify_arms(scenario, grid, margin)?;
    let nsim = counts.nsim;

    let optimal_hits = counts.counts[class.optimal_index];
    let acceptable_hits: u64 = class.acceptable.iter().map(|&j| counts.counts[j]).sum();
    let type1_hits: u64 = class.unacceptable.iter().map(|&j| counts.counts[j]).sum();

    let mut intermediate_powers = Vec::with_capacity(grid.len() - 1);
    for k in 1..grid.len() {
        let hits: u64 = (0..grid.len())
            .filter(|&j| grid.preference_rank(j) >= k)
            .map(|j| counts.counts[j])
            .sum();
        intermediate_powers.push((k, hits as f64 / nsim as f64));
    }

    Ok(PerfReport {
        selection_dist: counts
            .counts
            .iter()
            .map(|&c| c as f64 / nsim as f64)
            .collect(),
        optimal_power: McEstimate::from_share(optimal_hits, nsim),
        acceptable_power: McEstimate::from_share(acceptable_hits, nsim),
        type1_error: McEstimate::from_share(type1_hits, nsim),
        intermediate_powers,
        diag_failures: counts.failures,
        nsim,
    })
}
