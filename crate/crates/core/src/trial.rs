//! Domain types for the trial design: arm grids, treatment-response scenarios,
//! non-inferiority margins and the true classification of arms.
//!
//! Everything here is a pure value type, immutable after construction and safe
//! to share across worker threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction in which non-control arms are preferred.
///
/// `PreferHigh` ranks larger treatment-intensity values as more desirable
/// (e.g. longer gaps between doses); `PreferLow` ranks smaller values first
/// (e.g. shorter treatment durations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    PreferHigh,
    PreferLow,
}

/// The randomisation grid: ordered treatment-intensity points plus the
/// position of the standard-of-care arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmGrid {
    values: Vec<f64>,
    control_index: usize,
    preference: Preference,
}

impl ArmGrid {
    /// Validate and build a grid. `values` may arrive unsorted; they are
    /// sorted ascending and `control_index` is remapped to follow its value.
    ///
    /// The control must sit at the preference-consistent extreme: the minimum
    /// value under [`Preference::PreferHigh`], the maximum under
    /// [`Preference::PreferLow`].
    pub fn new(values: &[f64], control_index: usize, preference: Preference) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::validation(format!(
                "arm grid needs at least 2 arms, got {}",
                values.len()
            )));
        }
        if control_index >= values.len() {
            return Err(Error::validation(format!(
                "control index {} out of range for {} arms",
                control_index,
                values.len()
            )));
        }
        for &v in values {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::validation(format!(
                    "arm values must be positive and finite, got {v}"
                )));
            }
        }
        let control_value = values[control_index];
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite arm values"));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation(
                "arm values must be strictly increasing (duplicate value found)".to_string(),
            ));
        }
        let control_index = sorted
            .iter()
            .position(|&v| v == control_value)
            .expect("control value survives sorting");

        let expected = match preference {
            Preference::PreferHigh => 0,
            Preference::PreferLow => sorted.len() - 1,
        };
        if control_index != expected {
            return Err(Error::validation(format!(
                "control arm {} is not at the preference-consistent extreme (expected arm {})",
                sorted[control_index], sorted[expected]
            )));
        }

        Ok(ArmGrid {
            values: sorted,
            control_index,
            preference,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn control_index(&self) -> usize {
        self.control_index
    }

    pub fn control_value(&self) -> f64 {
        self.values[self.control_index]
    }

    pub fn preference(&self) -> Preference {
        self.preference
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    pub fn max_value(&self) -> f64 {
        *self.values.last().expect("non-empty grid")
    }

    /// Arm indices ordered from the control toward the preferred extreme.
    /// The control is always first.
    pub fn preference_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        if self.preference == Preference::PreferLow {
            order.reverse();
        }
        order
    }

    /// Rank of an arm in preference order: control = 0, most-preferred arm
    /// = `len() - 1`.
    pub fn preference_rank(&self, index: usize) -> usize {
        match self.preference {
            Preference::PreferHigh => index,
            Preference::PreferLow => self.len() - 1 - index,
        }
    }

    /// Most-preferred index among `candidates`, or `None` when empty.
    pub fn most_preferred(&self, candidates: &[usize]) -> Option<usize> {
        candidates
            .iter()
            .copied()
            .max_by_key(|&j| self.preference_rank(j))
    }

    /// Non-fatal design warnings (fewer arms than the curve model wants).
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.len() < 5 {
            out.push(format!(
                "grid has {} arms; at least 5 are needed to support a two-power \
                 fractional-polynomial response curve",
                self.len()
            ));
        }
        out
    }
}

/// Validated arm-grid construction; see [`ArmGrid::new`].
pub fn make_arm_grid(
    values: &[f64],
    control_index: usize,
    preference: Preference,
) -> Result<ArmGrid> {
    ArmGrid::new(values, control_index, preference)
}

/// A data-generating mechanism: the true event probability of each arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    probs: Vec<f64>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, probs: Vec<f64>) -> Result<Self> {
        for &p in &probs {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::validation(format!(
                    "scenario probabilities must lie strictly in (0,1), got {p}"
                )));
            }
        }
        if probs.is_empty() {
            return Err(Error::validation("scenario has no arms".to_string()));
        }
        Ok(Scenario {
            name: name.into(),
            probs,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// True per-arm risk ratio against the control arm of `grid`.
    pub fn true_risk_ratios(&self, grid: &ArmGrid) -> Vec<f64> {
        let pc = self.probs[grid.control_index()];
        self.probs.iter().map(|&p| p / pc).collect()
    }
}

/// Non-inferiority boundary on the risk-ratio scale, with the one-sided
/// significance level used to test it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub rr: f64,
    pub alpha: f64,
    #[serde(default)]
    pub scale: SummaryScale,
}

/// Population-level summary measure. Only the risk ratio is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryScale {
    #[default]
    RiskRatio,
}

impl Margin {
    pub fn new(rr: f64, alpha: f64) -> Result<Self> {
        if !(rr > 0.0 && rr < 1.0) {
            return Err(Error::validation(format!(
                "margin risk ratio must lie in (0,1), got {rr}"
            )));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::validation(format!(
                "one-sided significance level must lie in (0,0.5), got {alpha}"
            )));
        }
        Ok(Margin {
            rr,
            alpha,
            scale: SummaryScale::RiskRatio,
        })
    }
}

/// Estimand description carried verbatim into every output manifest.
/// Documentation metadata; nothing here enters a computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub treatment: String,
    pub population: String,
    pub variable: String,
    pub summary_measure: SummaryScale,
    pub intercurrent_handling: IntercurrentHandling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntercurrentHandling {
    #[default]
    TreatmentPolicy,
}

impl EstimandSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("treatment", &self.treatment),
            ("population", &self.population),
            ("variable", &self.variable),
        ] {
            if value.trim().is_empty() {
                return Err(Error::validation(format!("estimand.{field} is empty")));
            }
        }
        Ok(())
    }
}

/// True classification of the non-control arms under a scenario and margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmClassification {
    /// Non-control arms with true risk ratio strictly above the margin.
    pub acceptable: Vec<usize>,
    /// Non-control arms at or beyond the margin. An arm exactly on the
    /// margin is unacceptable: the margin is the non-inferiority null.
    pub unacceptable: Vec<usize>,
    /// Most-preferred acceptable arm, or the control index when none is.
    pub optimal_index: usize,
}

/// Flat treatment-response scenario: every arm at `pi0`.
pub fn flat_scenario(grid: &ArmGrid, pi0: f64) -> Result<Scenario> {
    if !(pi0 > 0.0 && pi0 < 1.0) {
        return Err(Error::validation(format!(
            "flat scenario probability must lie in (0,1), got {pi0}"
        )));
    }
    Scenario::new("flat", vec![pi0; grid.len()])
}

/// Plateau-then-decline scenario family used to probe type I error.
///
/// Scenario `k` (k = 1..=count) keeps the first `k` arms in preference order
/// from the control at `pi0`, then lets the probability decline linearly in
/// the treatment-intensity value down to `margin_rr * pi0` at the far
/// (most-preferred) extreme — which therefore sits exactly on the margin in
/// every generated scenario.
pub fn margin_scenarios(
    grid: &ArmGrid,
    pi0: f64,
    margin_rr: f64,
    count: usize,
) -> Result<Vec<Scenario>> {
    if grid.len() < 3 {
        return Err(Error::validation(format!(
            "margin scenario family needs at least 3 arms, got {}",
            grid.len()
        )));
    }
    if !(pi0 > 0.0 && pi0 < 1.0) {
        return Err(Error::validation(format!(
            "control probability must lie in (0,1), got {pi0}"
        )));
    }
    let floor = margin_rr * pi0;
    if !(floor > 0.0 && floor < pi0) {
        return Err(Error::validation(format!(
            "margin probability {floor} must lie strictly between 0 and pi0 = {pi0}"
        )));
    }
    if count < 1 || count > grid.len() - 1 {
        return Err(Error::validation(format!(
            "scenario count must lie in 1..={}, got {count}",
            grid.len() - 1
        )));
    }

    let order = grid.preference_order();
    let xs = grid.values();
    let far = *order.last().expect("non-empty order");
    let x_far = xs[far];

    let mut out = Vec::with_capacity(count);
    for k in 1..=count {
        let plateau_end = order[k - 1];
        let x_plateau = xs[plateau_end];
        let mut probs = vec![0.0; grid.len()];
        for (pos, &j) in order.iter().enumerate() {
            probs[j] = if pos < k {
                pi0
            } else if j == far {
                // exact margin at the far extreme, immune to interpolation noise
                floor
            } else {
                pi0 + (xs[j] - x_plateau) * (floor - pi0) / (x_far - x_plateau)
            };
        }
        out.push(Scenario::new(format!("margin_k{k}"), probs)?);
    }
    Ok(out)
}

/// Classify arms by their true risk ratio against the control.
pub fn classify_arms(
    scenario: &Scenario,
    grid: &ArmGrid,
    margin: &Margin,
) -> Result<ArmClassification> {
    if scenario.probs().len() != grid.len() {
        return Err(Error::validation(format!(
            "scenario '{}' has {} arms but the grid has {}",
            scenario.name,
            scenario.probs().len(),
            grid.len()
        )));
    }
    let pi_c = scenario.probs()[grid.control_index()];
    let mut acceptable = Vec::new();
    let mut unacceptable = Vec::new();
    for j in 0..grid.len() {
        if j == grid.control_index() {
            continue;
        }
        // compare pi_j against rr * pi_c rather than pi_j/pi_c against rr:
        // the cross-multiplied form classifies an arm constructed as
        // margin_rr * pi0 as exactly on the margin, with no division noise
        if scenario.probs()[j] > margin.rr * pi_c {
            acceptable.push(j);
        } else {
            unacceptable.push(j);
        }
    }
    let optimal_index = grid
        .most_preferred(&acceptable)
        .unwrap_or_else(|| grid.control_index());
    Ok(ArmClassification {
        acceptable,
        unacceptable,
        optimal_index,
    })
}
