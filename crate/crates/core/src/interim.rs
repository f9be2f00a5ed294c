//! Design of the two-arm interim survival comparison: required events by the
//! Schoenfeld formula, the sample size delivering them, and a log-rank
//! simulation oracle that checks the formula end to end.
//!
//! The interim compares the control schedule against one reduced-intensity
//! arm on progression-free survival. With a binary arm indicator the score
//! test of the proportional-hazards model is the log-rank test, so the
//! oracle simulates exponential survival with administrative censoring and
//! applies the standard two-sample log-rank statistic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats::z_quantile;

/// Sidedness of the interim test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    One,
    Two,
}

/// Parameters of the interim comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterimSpec {
    /// Control-arm event probability by the follow-up horizon.
    pub p0: f64,
    /// Experimental-arm event probability by the horizon.
    pub p1: f64,
    pub alpha: f64,
    pub sided: Sided,
    pub power: f64,
    /// Fraction allocated to the control arm.
    pub allocation: f64,
    /// Follow-up horizon; only the simulation oracle uses its units.
    pub tau: f64,
}

impl InterimSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p0", self.p0), ("p1", self.p1)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::validation(format!(
                    "interim {name} must lie in (0,1), got {p}"
                )));
            }
        }
        if self.p0 == self.p1 {
            return Err(Error::validation(
                "interim needs p0 != p1: equal rates leave no effect to detect".to_string(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::validation(format!(
                "interim alpha must lie in (0,0.5), got {}",
                self.alpha
            )));
        }
        if !(self.power >= 0.5 && self.power < 1.0) {
            return Err(Error::validation(format!(
                "interim power must lie in [0.5,1), got {}",
                self.power
            )));
        }
        if !(self.allocation > 0.0 && self.allocation < 1.0) {
            return Err(Error::validation(format!(
                "interim allocation must lie in (0,1), got {}",
                self.allocation
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::validation(format!(
                "interim tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    fn alpha_star(&self) -> f64 {
        match self.sided {
            Sided::One => self.alpha,
            Sided::Two => self.alpha / 2.0,
        }
    }
}

/// Sized interim design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterimResult {
    pub hr: f64,
    pub events_required: u64,
    pub n_total: u64,
    /// Expected control-arm events at the analysis (expectation, not a
    /// stopping rule).
    pub control_events: u64,
    pub sim_power: Option<f64>,
}

/// Hazard ratio implied by the two event probabilities under proportional
/// hazards with exponential margins and a common horizon:
/// `hr = ln(1-p1) / ln(1-p0)`.
pub fn hr_from_rates(p0: f64, p1: f64) -> Result<f64> {
    for (name, p) in [("p0", p0), ("p1", p1)] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::validation(format!(
                "{name} must lie in (0,1), got {p}"
            )));
        }
    }
    Ok((1.0 - p1).ln() / (1.0 - p0).ln())
}

/// Required-events value before rounding:
/// `(z_{1-alpha*} + z_{power})^2 / (a(1-a) (ln hr)^2)`.
pub fn schoenfeld_events_exact(spec: &InterimSpec) -> Result<f64> {
    spec.validate()?;
    let hr = hr_from_rates(spec.p0, spec.p1)?;
    if hr == 1.0 {
        return Err(Error::validation(
            "hazard ratio 1: no effect to detect".to_string(),
        ));
    }
    let z_a = z_quantile(1.0 - spec.alpha_star());
    let z_b = z_quantile(spec.power);
    let a = spec.allocation;
    Ok((z_a + z_b).powi(2) / (a * (1.0 - a) * hr.ln().powi(2)))
}

/// Required events, rounded up to an integer.
pub fn schoenfeld_events(spec: &InterimSpec) -> Result<u64> {
    Ok(schoenfeld_events_exact(spec)?.ceil() as u64)
}

/// Patients needed for `d` expected events by the horizon, and the expected
/// control-arm share of them. `n_total` is rounded up, then up to even under
/// 1:1 allocation.
pub fn events_to_n(d: u64, p0: f64, p1: f64, allocation: f64) -> (u64, u64) {
    let a = allocation;
    let event_rate = a * p0 + (1.0 - a) * p1;
    let mut n_total = (d as f64 / event_rate).ceil() as u64;
    if a == 0.5 && n_total % 2 == 1 {
        n_total += 1;
    }
    let control_events = (a * n_total as f64 * p0).round() as u64;
    (n_total, control_events)
}

/// Size the interim from its spec: hazard ratio, required events, total N.
pub fn size_interim(spec: &InterimSpec) -> Result<InterimResult> {
    let d = schoenfeld_events(spec)?;
    let hr = hr_from_rates(spec.p0, spec.p1)?;
    let (n_total, control_events) = events_to_n(d, spec.p0, spec.p1, spec.allocation);
    Ok(InterimResult {
        hr,
        events_required: d,
        n_total,
        control_events,
        sim_power: None,
    })
}

/// Observation for the log-rank pass: `(time, event, control-arm flag)`.
type Obs = (f64, bool, bool);

/// Two-sample log-rank Z statistic, oriented so that positive values mean
/// the control arm saw more events than expected under the null (i.e. the
/// experimental arm looks better).
///
/// Uses the standard hypergeometric variance over distinct event times.
/// Returns `None` when no event time carries information (V = 0).
pub fn logrank_z(obs: &mut [Obs]) -> Option<f64> {
    obs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
    let mut at_risk_ctrl = obs.iter().filter(|o| o.2).count() as f64;
    let mut at_risk_exp = obs.len() as f64 - at_risk_ctrl;

    let mut observed = 0.0;
    let mut expected = 0.0;
    let mut variance = 0.0;

    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut d_total = 0.0;
        let mut d_ctrl = 0.0;
        let mut removed_ctrl = 0.0;
        let mut removed_exp = 0.0;
        while i < obs.len() && obs[i].0 == t {
            let (_, event, is_ctrl) = obs[i];
            if event {
                d_total += 1.0;
                if is_ctrl {
                    d_ctrl += 1.0;
                }
            }
            if is_ctrl {
                removed_ctrl += 1.0;
            } else {
                removed_exp += 1.0;
            }
            i += 1;
        }
        let n_risk = at_risk_ctrl + at_risk_exp;
        if d_total > 0.0 && n_risk > 1.0 {
            let share = at_risk_ctrl / n_risk;
            observed += d_ctrl;
            expected += d_total * share;
            variance += d_total * share * (1.0 - share) * (n_risk - d_total) / (n_risk - 1.0);
        }
        at_risk_ctrl -= removed_ctrl;
        at_risk_exp -= removed_exp;
    }

    if variance > 0.0 {
        Some((observed - expected) / variance.sqrt())
    } else {
        None
    }
}

/// Simulated log-rank rejection fraction plus the count of degenerate
/// replicates (no usable event time), which contribute non-rejections.
pub fn simulate_logrank_power_detailed(
    spec: &InterimSpec,
    n_total: u64,
    nsim: u64,
    seed: u64,
) -> Result<(f64, u64)> {
    spec.validate()?;
    if n_total < 10 {
        return Err(Error::validation(format!(
            "log-rank simulation needs n_total >= 10, got {n_total}"
        )));
    }
    let n_ctrl = (spec.allocation * n_total as f64).round() as u64;
    let n_exp = n_total - n_ctrl;
    let lambda0 = -(1.0 - spec.p0).ln() / spec.tau;
    let lambda1 = -(1.0 - spec.p1).ln() / spec.tau;
    let z_crit = z_quantile(1.0 - spec.alpha_star());
    let tau = spec.tau;
    let sided = spec.sided;

    let outcomes: Vec<(bool, bool)> = (0..nsim)
        .into_par_iter()
        .map(|rep| {
            use rand::Rng;
            let mut rng = stream(seed, &[rep]);
            let mut obs: Vec<Obs> = Vec::with_capacity(n_total as usize);
            for (count, lambda, is_ctrl) in [(n_ctrl, lambda0, true), (n_exp, lambda1, false)] {
                for _ in 0..count {
                    let u: f64 = rng.gen::<f64>();
                    let t = -(1.0 - u).ln() / lambda;
                    obs.push((t.min(tau), t < tau, is_ctrl));
                }
            }
            match logrank_z(&mut obs) {
                Some(z) => {
                    let reject = match sided {
                        Sided::Two => z.abs() > z_crit,
                        Sided::One => z > z_crit,
                    };
                    (reject, false)
                }
                None => (false, true),
            }
        })
        .collect();

    let rejections = outcomes.iter().filter(|o| o.0).count() as f64;
    let degenerate = outcomes.iter().filter(|o| o.1).count() as u64;
    Ok((rejections / nsim as f64, degenerate))
}

/// Simulated log-rank rejection fraction at `n_total` patients.
pub fn simulate_logrank_power(
    spec: &InterimSpec,
    n_total: u64,
    nsim: u64,
    seed: u64,
) -> Result<f64> {
    Ok(simulate_logrank_power_detailed(spec, n_total, nsim, seed)?.0)
}

/// Which design parameter varies against significance level in a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridAxis {
    /// Vary the control event rate (power and p1 fixed).
    AlphaByP0,
    /// Vary the experimental event rate (power and p0 fixed).
    AlphaByP1,
    /// Vary the target power (p0 and p1 fixed).
    AlphaByPower,
}

/// One cell of an interim design grid. A cell whose parameters admit no
/// design (e.g. p0 = p1) carries the error text instead of a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterimGridCell {
    pub alpha: f64,
    pub sided: Sided,
    pub power: f64,
    pub p0: f64,
    pub p1: f64,
    pub result: Option<InterimResult>,
    pub error: Option<String>,
}

/// Tabulate interim sample sizes over `alphas x values`, where `values`
/// feeds the axis chosen by `axis` and everything else comes from `base`.
/// Cells that cannot be sized record their error; the grid always completes.
pub fn interim_grid(
    axis: GridAxis,
    base: &InterimSpec,
    alphas: &[f64],
    values: &[f64],
    sim: Option<(u64, u64)>,
) -> Vec<InterimGridCell> {
    let mut cells = Vec::with_capacity(alphas.len() * values.len());
    for &alpha in alphas {
        for &v in values {
            let mut spec = *base;
            spec.alpha = alpha;
            match axis {
                GridAxis::AlphaByP0 => spec.p0 = v,
                GridAxis::AlphaByP1 => spec.p1 = v,
                GridAxis::AlphaByPower => spec.power = v,
            }
            let outcome = size_interim(&spec).and_then(|mut r| {
                if let Some((nsim, seed)) = sim {
                    r.sim_power = Some(simulate_logrank_power(&spec, r.n_total, nsim, seed)?);
                }
                Ok(r)
            });
            let (result, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            cells.push(InterimGridCell {
                alpha,
                sided: spec.sided,
                power: spec.power,
                p0: spec.p0,
                p1: spec.p1,
                result,
                error,
            });
        }
    }
    cells
}
