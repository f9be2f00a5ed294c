//! Risk-ratio inference against the control arm and the rule that turns
//! per-arm bounds into a recommendation.
//!
//! Two ways to get a one-sided lower confidence limit for each arm's risk
//! ratio of predicted risks:
//!
//! - delta method: first-order propagation of the fitted coefficient
//!   covariance to `log RR`;
//! - stratified non-parametric bootstrap: resample events within each arm,
//!   rerun the full curve selection on every resample, take the empirical
//!   alpha-quantile of the resampled risk ratios.
//!
//! The bootstrap pays for model-selection variability that the delta method
//! ignores; it is the expensive, honest check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::{select_best, FPModel, FitControls, TrialDataset};
use crate::rng::stream;
use crate::stats::{log_expit, quantile_type7, z_quantile};
use crate::trial::{ArmGrid, Margin};

/// How per-arm uncertainty is quantified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Delta,
    Bootstrap,
}

/// How the recommended arm is chosen from the passing set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Most-preferred non-control arm whose bound clears the margin.
    MaxPreferredPassing,
    /// Most-preferred arm reachable from the control through arms that all
    /// pass; a single failing arm breaks the chain.
    ContiguousFromControl,
}

/// One arm's risk-ratio inference against the control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmInference {
    pub arm_index: usize,
    /// Predicted-risk ratio `pi_hat(x_j) / pi_hat(x_control)`.
    pub rr_hat: f64,
    /// One-sided `1 - alpha` lower confidence limit for the risk ratio.
    pub lower_bound: f64,
    pub method: Method,
}

/// Outcome of applying a decision rule to per-arm bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Recommended arm; the control index when no non-control arm passes.
    pub selected_index: usize,
    /// Per-arm pass flags (`lower_bound > margin`); the control always passes.
    pub passing: Vec<bool>,
    pub rule: DecisionRule,
}

/// Delta-method lower bounds for every arm.
///
/// For arm `j` with design row `z_j`: `log RR_j = log pi_j - log pi_c`,
/// gradient `g_j = (1-pi_j) z_j - (1-pi_c) z_c`, variance `g' cov g`, and
/// `lower = exp(log RR - z_{1-alpha} * sqrt(var))`.
pub fn rr_delta(model: &FPModel, grid: &ArmGrid, alpha: f64) -> Result<Vec<ArmInference>> {
    if !model.converged {
        return Err(Error::Numerical(
            "delta-method inference needs a converged model".to_string(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let c = grid.control_index();
    let z_c = model.design_row(grid.control_value())?;
    let eta_c = model.linear_predictor(grid.control_value())?;
    let q_c = crate::stats::expit(-eta_c); // 1 - pi_c, stable
    let z_crit = z_quantile(1.0 - alpha);

    let mut out = Vec::with_capacity(grid.len());
    for (j, &x) in grid.values().iter().enumerate() {
        if j == c {
            out.push(ArmInference {
                arm_index: j,
                rr_hat: 1.0,
                lower_bound: 1.0,
                method: Method::Delta,
            });
            continue;
        }
        let z_j = model.design_row(x)?;
        let eta_j = model.linear_predictor(x)?;
        let q_j = crate::stats::expit(-eta_j);
        let log_rr = log_expit(eta_j) - log_expit(eta_c);

        let mut g = [0.0; 3];
        for r in 0..3 {
            g[r] = q_j * z_j[r] - q_c * z_c[r];
        }
        let mut var = 0.0;
        for r in 0..3 {
            for s in 0..3 {
                var += g[r] * model.cov[r][s] * g[s];
            }
        }
        if var <= 0.0 {
            return Err(Error::Inference {
                arm: j,
                why: format!("non-positive delta-method variance {var}"),
            });
        }
        out.push(ArmInference {
            arm_index: j,
            rr_hat: log_rr.exp(),
            lower_bound: (log_rr - z_crit * var.sqrt()).exp(),
            method: Method::Delta,
        });
    }
    Ok(out)
}

/// Risk ratios of the model's predicted risks at the arm points; 1.0
/// everywhere for a fallback (flat) curve.
fn predicted_rr(model: &FPModel, grid: &ArmGrid) -> Result<Vec<f64>> {
    if model.fallback {
        return Ok(vec![1.0; grid.len()]);
    }
    let log_pi_c = log_expit(model.linear_predictor(grid.control_value())?);
    grid.values()
        .iter()
        .map(|&x| Ok((log_expit(model.linear_predictor(x)?) - log_pi_c).exp()))
        .collect()
}

/// Stratified non-parametric bootstrap lower bounds.
///
/// Each of the `b` resamples redraws every arm's event count as
/// `Binomial(n_j, events_j/n_j)` — identical in law to resampling patients
/// with replacement within the arm — then reruns the full 36-candidate
/// selection. Resamples whose fit falls back to the flat curve contribute
/// `RR* = 1`, so `b` is fixed and hard resamples are never dropped. The
/// reported bound is the type-7 `alpha`-quantile per arm; `rr_hat` comes
/// from the original-data fit.
///
/// Reproducibility: identical `(data, b, alpha, seed)` give bitwise-identical
/// output, independent of thread count.
pub fn bootstrap_bounds(
    data: &TrialDataset,
    b: usize,
    alpha: f64,
    scale: f64,
    controls: &FitControls,
    seed: u64,
) -> Result<Vec<ArmInference>> {
    let original = select_best(data, scale, controls)?;
    bootstrap_bounds_with_model(data, &original, b, alpha, scale, controls, seed)
}

pub(crate) fn bootstrap_bounds_with_model(
    data: &TrialDataset,
    original: &FPModel,
    b: usize,
    alpha: f64,
    scale: f64,
    controls: &FitControls,
    seed: u64,
) -> Result<Vec<ArmInference>> {
    if b < 100 {
        return Err(Error::validation(format!(
            "bootstrap needs at least 100 resamples, got {b}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let grid = &data.grid;
    let arms = grid.len();
    let props = data.proportions();
    let rr_hat = predicted_rr(original, grid)?;

    let replicates: Vec<Vec<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(seed, &[rep]);
            let mut events = vec![0u64; arms];
            for j in 0..arms {
                events[j] = draw_binomial(&mut rng, data.n[j], props[j]);
            }
            let resample = TrialDataset {
                grid: grid.clone(),
                n: data.n.clone(),
                events,
            };
            match select_best(&resample, scale, controls) {
                Ok(model) => predicted_rr(&model, grid).unwrap_or_else(|_| vec![1.0; arms]),
                Err(_) => vec![1.0; arms],
            }
        })
        .collect();

    let mut out = Vec::with_capacity(arms);
    for j in 0..arms {
        if j == grid.control_index() {
            out.push(ArmInference {
                arm_index: j,
                rr_hat: 1.0,
                lower_bound: 1.0,
                method: Method::Bootstrap,
            });
            continue;
        }
        let mut draws: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).expect("finite risk ratios"));
        out.push(ArmInference {
            arm_index: j,
            rr_hat: rr_hat[j],
            lower_bound: quantile_type7(&draws, alpha),
            method: Method::Bootstrap,
        });
    }
    Ok(out)
}

fn draw_binomial(rng: &mut impl rand::Rng, n: u64, p: f64) -> u64 {
    use rand_distr::{Binomial, Distribution};
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Apply a decision rule: an arm passes iff its lower bound strictly clears
/// the margin; the control is returned when nothing passes.
pub fn decide(
    inferences: &[ArmInference],
    grid: &ArmGrid,
    margin: &Margin,
    rule: DecisionRule,
) -> Result<Decision> {
    if inferences.len() != grid.len() {
        return Err(Error::validation(format!(
            "{} inferences for a {}-arm grid",
            inferences.len(),
            grid.len()
        )));
    }
    let mut passing = vec![false; grid.len()];
    for inf in inferences {
        if inf.arm_index >= grid.len() {
            return Err(Error::validation(format!(
                "inference for unknown arm index {}",
                inf.arm_index
            )));
        }
        passing[inf.arm_index] = inf.lower_bound > margin.rr;
    }
    let control = grid.control_index();
    passing[control] = true;

    let order = grid.preference_order();
    let selected_index = match rule {
        DecisionRule::MaxPreferredPassing => order
            .iter()
            .rev()
            .copied()
            .find(|&j| j != control && passing[j])
            .unwrap_or(control),
        DecisionRule::ContiguousFromControl => {
            let mut selected = control;
            for &j in order.iter().skip(1) {
                if passing[j] {
                    selected = j;
                } else {
                    break;
                }
            }
            selected
        }
    };
    Ok(Decision {
        selected_index,
        passing,
        rule,
    })
}

/// Everything needed to run one trial analysis end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub method: Method,
    pub rule: DecisionRule,
    /// Bootstrap resamples; ignored under [`Method::Delta`].
    pub bootstrap_b: usize,
    /// Seed for the bootstrap streams; ignored under [`Method::Delta`].
    pub seed: u64,
    /// Preliminary x divisor for the FP basis; `None` means the grid maximum,
    /// which keeps `u` in `(0, 1]` and every transform well-conditioned.
    pub scale: Option<f64>,
    pub fit: FitControls,
}

impl AnalysisOptions {
    pub fn delta(rule: DecisionRule) -> Self {
        AnalysisOptions {
            method: Method::Delta,
            rule,
            bootstrap_b: 0,
            seed: 0,
            scale: None,
            fit: FitControls::default(),
        }
    }

    pub fn bootstrap(rule: DecisionRule, b: usize, seed: u64) -> Self {
        AnalysisOptions {
            method: Method::Bootstrap,
            rule,
            bootstrap_b: b,
            seed,
            scale: None,
            fit: FitControls::default(),
        }
    }

    pub fn resolve_scale(&self, grid: &ArmGrid) -> f64 {
        self.scale.unwrap_or_else(|| grid.max_value())
    }
}

/// Full record of one trial analysis: the selected curve, the per-arm
/// inference table and the decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub model: FPModel,
    pub inferences: Vec<ArmInference>,
    pub decision: Decision,
    pub warnings: Vec<String>,
}

/// Analyse one trial dataset: select the response curve, bound each arm's
/// risk ratio, and recommend an arm.
///
/// When no curve converges at all the record carries the flat fallback,
/// recommends the control and says so in `warnings`.
pub fn analyze(
    data: &TrialDataset,
    margin: &Margin,
    opts: &AnalysisOptions,
) -> Result<AnalysisRecord> {
    let scale = opts.resolve_scale(&data.grid);
    let model = select_best(data, scale, &opts.fit)?;
    let grid = &data.grid;

    if model.fallback {
        let control = grid.control_index();
        let inferences: Vec<ArmInference> = (0..grid.len())
            .map(|j| ArmInference {
                arm_index: j,
                rr_hat: 1.0,
                lower_bound: if j == control { 1.0 } else { 0.0 },
                method: opts.method,
            })
            .collect();
        let decision = decide(&inferences, grid, margin, opts.rule)?;
        return Ok(AnalysisRecord {
            model,
            inferences,
            decision,
            warnings: vec![
                "no fractional-polynomial candidate converged; flat fallback curve used and \
                 the control arm recommended"
                    .to_string(),
            ],
        });
    }

    let inferences = match opts.method {
        Method::Delta => rr_delta(&model, grid, margin.alpha)?,
        Method::Bootstrap => bootstrap_bounds_with_model(
            data,
            &model,
            opts.bootstrap_b,
            margin.alpha,
            scale,
            &opts.fit,
            opts.seed,
        )?,
    };
    let decision = decide(&inferences, grid, margin, opts.rule)?;
    Ok(AnalysisRecord {
        model,
        inferences,
        decision,
        warnings: Vec::new(),
    })
}
