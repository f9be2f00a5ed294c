//! Fractional-polynomial (FP2) logistic regression on grouped binomial data.
//!
//! The treatment-response curve is `logit pi(x) = b0 + b1*h1(x) + b2*h2(x)`
//! where `(h1, h2)` are power transforms of `u = x/scale` drawn from the
//! standard fractional-polynomial power set
//! `S = {-2, -1, -0.5, 0, 0.5, 1, 2, 3}`, with `u^0 = ln u` and the
//! repeated-power rule `h2 = h1 * ln u`. That gives 8 repeated-power pairs
//! plus C(8,2) = 28 distinct pairs: 36 candidate curves.
//!
//! Fitting is maximum likelihood by iteratively reweighted least squares on
//! the per-arm binomial sufficient statistics. Working with grouped counts
//! instead of patient-level rows leaves the likelihood unchanged and makes
//! bootstrap-within-Monte-Carlo runs tractable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stats::{expit, log_expit};
use crate::trial::ArmGrid;

/// The fractional-polynomial power set.
pub const FP_POWERS: [f64; 8] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0];

/// Canonical ordered pair of FP powers, `p1 <= p2`, both from [`FP_POWERS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPair {
    p1: f64,
    p2: f64,
}

impl PowerPair {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        let in_set = |p: f64| FP_POWERS.contains(&p);
        if !in_set(p1) || !in_set(p2) {
            return Err(Error::validation(format!(
                "powers ({p1}, {p2}) are not both in the FP power set"
            )));
        }
        let (p1, p2) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        Ok(PowerPair { p1, p2 })
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    pub fn is_repeated(&self) -> bool {
        self.p1 == self.p2
    }
}

impl std::fmt::Display for PowerPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.p1, self.p2)
    }
}

/// All 36 FP2 candidates in lexicographic order, `(-2,-2)` first.
pub fn enumerate_fp2() -> Vec<PowerPair> {
    let mut out = Vec::with_capacity(36);
    for (i, &p1) in FP_POWERS.iter().enumerate() {
        for &p2 in &FP_POWERS[i..] {
            out.push(PowerPair { p1, p2 });
        }
    }
    out
}

/// Single FP transform: `u^p` with the convention `u^0 = ln u`.
fn fp_term(u: f64, p: f64) -> f64 {
    if p == 0.0 {
        u.ln()
    } else {
        u.powf(p)
    }
}

/// Two-term FP2 basis at `x` with preliminary divisor `scale`.
///
/// The repeated-power rule multiplies the first transform by `ln u`, so
/// `(p, p)` yields `(u^p, u^p ln u)` and `(0, 0)` yields `(ln u, (ln u)^2)`.
pub fn fp_basis(x: f64, powers: PowerPair, scale: f64) -> Result<[f64; 2]> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::validation(format!(
            "FP transforms need positive x, got {x}"
        )));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::validation(format!(
            "FP scale must be positive, got {scale}"
        )));
    }
    let u = x / scale;
    let h1 = fp_term(u, powers.p1);
    let h2 = if powers.is_repeated() {
        h1 * u.ln()
    } else {
        fp_term(u, powers.p2)
    };
    Ok([h1, h2])
}

/// Grouped binomial sufficient statistics: per-arm patient and event counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    pub grid: ArmGrid,
    pub n: Vec<u64>,
    pub events: Vec<u64>,
}

impl TrialDataset {
    pub fn new(grid: ArmGrid, n: Vec<u64>, events: Vec<u64>) -> Result<Self> {
        if n.len() != grid.len() || events.len() != grid.len() {
            return Err(Error::data(format!(
                "dataset has {} count rows and {} event rows for a {}-arm grid",
                n.len(),
                events.len(),
                grid.len()
            )));
        }
        for j in 0..n.len() {
            if events[j] > n[j] {
                return Err(Error::data(format!(
                    "arm {} has {} events out of {} patients",
                    grid.values()[j],
                    events[j],
                    n[j]
                )));
            }
        }
        Ok(TrialDataset { grid, n, events })
    }

    /// Parse the `arm_value,n,events` CSV interface. Arm values must match
    /// the grid within 1e-9, one row per arm, in any order.
    pub fn from_csv_str(text: &str, grid: &ArmGrid) -> Result<Self> {
        let mut n = vec![None; grid.len()];
        let mut events = vec![0u64; grid.len()];
        let mut lines = text.lines().enumerate();

        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::data("dataset file is empty".to_string()))?;
        let header: Vec<&str> = header.split(',').map(str::trim).collect();
        if header != ["arm_value", "n", "events"] {
            return Err(Error::data(format!(
                "line 1: expected header 'arm_value,n,events', got '{}'",
                header.join(",")
            )));
        }

        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::data(format!(
                    "line {lineno}: expected 3 fields, got {}",
                    fields.len()
                )));
            }
            let arm_value: f64 = fields[0]
                .parse()
                .map_err(|_| Error::data(format!("line {lineno}: bad arm_value '{}'", fields[0])))?;
            let n_j: u64 = fields[1]
                .parse()
                .map_err(|_| Error::data(format!("line {lineno}: bad n '{}'", fields[1])))?;
            let e_j: u64 = fields[2]
                .parse()
                .map_err(|_| Error::data(format!("line {lineno}: bad events '{}'", fields[2])))?;
            let arm = grid
                .values()
                .iter()
                .position(|&v| (v - arm_value).abs() <= 1e-9)
                .ok_or_else(|| {
                    Error::data(format!(
                        "line {lineno}: arm_value {arm_value} does not match any grid arm"
                    ))
                })?;
            if n[arm].is_some() {
                return Err(Error::data(format!(
                    "line {lineno}: duplicate row for arm {arm_value}"
                )));
            }
            n[arm] = Some(n_j);
            events[arm] = e_j;
        }

        let n: Vec<u64> = n
            .into_iter()
            .enumerate()
            .map(|(j, v)| {
                v.ok_or_else(|| Error::data(format!("no row for arm {}", grid.values()[j])))
            })
            .collect::<Result<_>>()?;
        TrialDataset::new(grid.clone(), n, events)
    }

    pub fn total_patients(&self) -> u64 {
        self.n.iter().sum()
    }

    /// Per-arm observed proportions (`0` where an arm has no patients).
    pub fn proportions(&self) -> Vec<f64> {
        self.n
            .iter()
            .zip(&self.events)
            .map(|(&n, &e)| if n == 0 { 0.0 } else { e as f64 / n as f64 })
            .collect()
    }
}

/// Convergence and selection settings for the IRLS fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitControls {
    /// Maximum IRLS iterations.
    pub max_iterations: usize,
    /// Stop when |dev - dev_prev| / (|dev| + 0.1) falls below this.
    pub rel_deviance_tol: f64,
    /// Any |beta| at or beyond this bound (on the scaled-logit basis) is
    /// treated as separation.
    pub beta_bound: f64,
    /// Deviances within this of the incumbent are ties; the earlier candidate
    /// in enumeration order wins.
    pub tie_epsilon: f64,
}

impl Default for FitControls {
    fn default() -> Self {
        FitControls {
            max_iterations: 50,
            rel_deviance_tol: 1e-10,
            beta_bound: 50.0,
            tie_epsilon: 1e-9,
        }
    }
}

/// Why a fit did not converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFailure {
    /// The weighted normal equations were singular.
    Singular,
    /// A coefficient ran past the divergence bound (data separation).
    Separation,
    /// No deviance convergence within the iteration budget.
    MaxIterations,
}

/// Raw output of the IRLS core for an arbitrary design matrix.
#[derive(Debug, Clone)]
pub struct GlmFit {
    pub beta: Vec<f64>,
    /// Inverse Fisher information at the final beta, row-major p x p.
    /// All zeros when the fit did not converge.
    pub cov: Vec<f64>,
    pub deviance: f64,
    pub converged: bool,
    pub iterations: usize,
    pub failure: Option<FitFailure>,
}

/// Log likelihood (up to binomial constants) of grouped data at fitted
/// probabilities given by `eta`.
fn loglik(design: &[Vec<f64>], n: &[u64], events: &[u64], beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for j in 0..design.len() {
        if n[j] == 0 {
            continue;
        }
        let eta: f64 = design[j].iter().zip(beta).map(|(z, b)| z * b).sum();
        let e = events[j] as f64;
        let f = (n[j] - events[j]) as f64;
        if e > 0.0 {
            ll += e * log_expit(eta);
        }
        if f > 0.0 {
            ll += f * log_expit(-eta);
        }
    }
    ll
}

/// Saturated log likelihood (fitted = observed proportions), `0 ln 0 = 0`.
fn saturated_loglik(n: &[u64], events: &[u64]) -> f64 {
    let mut ll = 0.0;
    for j in 0..n.len() {
        if n[j] == 0 {
            continue;
        }
        let e = events[j] as f64;
        let f = (n[j] - events[j]) as f64;
        let nj = n[j] as f64;
        if e > 0.0 {
            ll += e * (e / nj).ln();
        }
        if f > 0.0 {
            ll += f * (f / nj).ln();
        }
    }
    ll
}

/// Maximum-likelihood logistic fit of grouped binomial data to an arbitrary
/// design matrix (one row per arm), by iteratively reweighted least squares.
///
/// Never errors: non-convergence is reported through `converged`/`failure`.
pub fn fit_logistic(design: &[Vec<f64>], n: &[u64], events: &[u64], c: &FitControls) -> GlmFit {
    let rows = design.len();
    let p = design.first().map_or(0, Vec::len);
    let mut beta = vec![0.0; p];
    let sat = saturated_loglik(n, events);
    let mut deviance = f64::INFINITY;
    let mut failure = None;
    let mut converged = false;
    let mut iterations = 0;

    let mut xtwx = vec![0.0; p * p];
    let mut xtwz = vec![0.0; p];
    for iter in 1..=c.max_iterations {
        iterations = iter;
        xtwx.iter_mut().for_each(|v| *v = 0.0);
        xtwz.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..rows {
            if n[j] == 0 {
                continue;
            }
            let z = &design[j];
            let eta: f64 = z.iter().zip(&beta).map(|(zi, b)| zi * b).sum();
            let pi = expit(eta);
            let q = expit(-eta);
            let nj = n[j] as f64;
            let w = nj * pi * q;
            // fold the working response: w*z_work = w*eta + n*(y - pi)
            let wz = w * eta + (events[j] as f64 - nj * pi);
            for r in 0..p {
                xtwz[r] += z[r] * wz;
                for s in 0..p {
                    xtwx[r * p + s] += z[r] * w * z[s];
                }
            }
        }
        match linalg::solve(&xtwx, &xtwz, p) {
            None => {
                failure = Some(FitFailure::Singular);
                break;
            }
            Some(nb) => beta = nb,
        }
        if beta.iter().any(|b| b.abs() >= c.beta_bound) {
            failure = Some(FitFailure::Separation);
            break;
        }
        let dev = 2.0 * (sat - loglik(design, n, events, &beta));
        let rel = (dev - deviance).abs() / (dev.abs() + 0.1);
        deviance = dev;
        if rel < c.rel_deviance_tol {
            converged = true;
            break;
        }
    }
    if !converged && failure.is_none() {
        failure = Some(FitFailure::MaxIterations);
    }
    if converged {
        // boundary fits: a deviance that has converged with fitted
        // probabilities numerically at 0 or 1 means the MLE sits at the
        // boundary (separation), not at an interior optimum
        for j in 0..rows {
            if n[j] == 0 {
                continue;
            }
            let eta: f64 = design[j].iter().zip(&beta).map(|(zi, b)| zi * b).sum();
            let pi = expit(eta);
            if !(1e-10..=1.0 - 1e-10).contains(&pi) {
                converged = false;
                failure = Some(FitFailure::Separation);
                break;
            }
        }
    }
    if !deviance.is_finite() {
        deviance = f64::INFINITY;
    } else if deviance < 0.0 && deviance > -1e-8 {
        deviance = 0.0;
    }

    let cov = if converged {
        // expected information at the final beta
        xtwx.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..rows {
            if n[j] == 0 {
                continue;
            }
            let z = &design[j];
            let eta: f64 = z.iter().zip(&beta).map(|(zi, b)| zi * b).sum();
            let w = n[j] as f64 * expit(eta) * expit(-eta);
            for r in 0..p {
                for s in 0..p {
                    xtwx[r * p + s] += z[r] * w * z[s];
                }
            }
        }
        match linalg::invert(&xtwx, p) {
            Some(inv) => inv,
            None => {
                converged = false;
                failure = Some(FitFailure::Singular);
                vec![0.0; p * p]
            }
        }
    } else {
        vec![0.0; p * p]
    };

    GlmFit {
        beta,
        cov,
        deviance,
        converged,
        iterations,
        failure,
    }
}

/// A fitted fractional-polynomial logistic response curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FPModel {
    pub powers: PowerPair,
    /// Preliminary x divisor used when building the basis.
    pub scale: f64,
    /// `(b0, b1, b2)` on the logit scale.
    pub beta: [f64; 3],
    /// Covariance of `beta` (inverse Fisher information at the fit).
    pub cov: [[f64; 3]; 3],
    pub deviance: f64,
    pub converged: bool,
    pub iterations: usize,
    pub failure: Option<FitFailure>,
    /// True when this is the intercept-only flat curve returned because no
    /// FP2 candidate converged.
    pub fallback: bool,
    /// Range of arm values seen at fit time; predictions outside it are
    /// extrapolations.
    pub x_min: f64,
    pub x_max: f64,
}

impl FPModel {
    /// Design row `(1, h1(x), h2(x))` for this model's powers and scale.
    pub fn design_row(&self, x: f64) -> Result<[f64; 3]> {
        let [h1, h2] = fp_basis(x, self.powers, self.scale)?;
        Ok([1.0, h1, h2])
    }

    pub fn linear_predictor(&self, x: f64) -> Result<f64> {
        let z = self.design_row(x)?;
        Ok(z.iter().zip(&self.beta).map(|(zi, b)| zi * b).sum())
    }

    fn check_usable(&self) -> Result<()> {
        if !self.converged && !self.fallback {
            return Err(Error::Numerical(
                "model did not converge and is not a fallback".to_string(),
            ));
        }
        Ok(())
    }

    /// Predicted event probability at `x`. Refuses to extrapolate outside
    /// the fitted arm range; see [`FPModel::predict_risk_extrapolated`].
    pub fn predict_risk(&self, x: f64) -> Result<f64> {
        if x < self.x_min || x > self.x_max {
            return Err(Error::validation(format!(
                "x = {x} lies outside the fitted range [{}, {}]; extrapolation must be \
                 requested explicitly",
                self.x_min, self.x_max
            )));
        }
        self.predict_risk_extrapolated(x)
    }

    /// Predicted event probability at `x` without the range check.
    pub fn predict_risk_extrapolated(&self, x: f64) -> Result<f64> {
        self.check_usable()?;
        Ok(expit(self.linear_predictor(x)?))
    }
}

fn design_matrix(grid: &ArmGrid, powers: PowerPair, scale: f64) -> Result<Vec<Vec<f64>>> {
    grid.values()
        .iter()
        .map(|&x| {
            let [h1, h2] = fp_basis(x, powers, scale)?;
            Ok(vec![1.0, h1, h2])
        })
        .collect()
}

/// Fit a single FP2 candidate to a dataset. Non-convergence is reported in
/// the returned model, never as an error.
pub fn fit_glm(
    data: &TrialDataset,
    powers: PowerPair,
    scale: f64,
    controls: &FitControls,
) -> Result<FPModel> {
    let design = design_matrix(&data.grid, powers, scale)?;
    let fit = fit_logistic(&design, &data.n, &data.events, controls);
    let mut beta = [0.0; 3];
    beta.copy_from_slice(&fit.beta);
    let mut cov = [[0.0; 3]; 3];
    for r in 0..3 {
        for s in 0..3 {
            cov[r][s] = fit.cov[r * 3 + s];
        }
    }
    Ok(FPModel {
        powers,
        scale,
        beta,
        cov,
        deviance: fit.deviance,
        converged: fit.converged,
        iterations: fit.iterations,
        failure: fit.failure,
        fallback: false,
        x_min: data.grid.min_value(),
        x_max: data.grid.max_value(),
    })
}

/// Intercept-only flat curve, used when no FP2 candidate converges.
pub fn intercept_only(data: &TrialDataset, scale: f64, controls: &FitControls) -> FPModel {
    let design: Vec<Vec<f64>> = vec![vec![1.0]; data.grid.len()];
    let fit = fit_logistic(&design, &data.n, &data.events, controls);
    let mut cov = [[0.0; 3]; 3];
    cov[0][0] = fit.cov[0];
    FPModel {
        powers: enumerate_fp2()[0],
        scale,
        beta: [fit.beta[0], 0.0, 0.0],
        cov,
        deviance: fit.deviance,
        converged: fit.converged,
        iterations: fit.iterations,
        failure: fit.failure,
        fallback: true,
        x_min: data.grid.min_value(),
        x_max: data.grid.max_value(),
    }
}

/// Fit all 36 FP2 candidates and return the converged one with the smallest
/// deviance; ties go to the earlier candidate in enumeration order. Falls
/// back to the intercept-only flat curve when nothing converges.
pub fn select_best(data: &TrialDataset, scale: f64, controls: &FitControls) -> Result<FPModel> {
    if data.total_patients() == 0 {
        return Err(Error::validation(
            "dataset has zero patients in every arm".to_string(),
        ));
    }
    let mut best: Option<FPModel> = None;
    for powers in enumerate_fp2() {
        let model = fit_glm(data, powers, scale, controls)?;
        if !model.converged {
            continue;
        }
        match &best {
            None => best = Some(model),
            Some(b) if model.deviance < b.deviance - controls.tie_epsilon => best = Some(model),
            _ => {}
        }
    }
    Ok(best.unwrap_or_else(|| intercept_only(data, scale, controls)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::Preference;

    fn refine_grid() -> ArmGrid {
        ArmGrid::new(&[6.0, 9.0, 12.0, 15.0, 18.0], 0, Preference::PreferHigh).unwrap()
    }

    fn flat_dataset() -> TrialDataset {
        TrialDataset::new(refine_grid(), vec![20; 5], vec![13; 5]).unwrap()
    }

    // Independent Newton-Raphson solver used as an oracle: explicit score and
    // observed information, its own convergence rule (gradient norm).
    fn newton_fit(design: &[Vec<f64>], n: &[u64], events: &[u64]) -> Option<Vec<f64>> {
        let p = design[0].len();
        let mut beta = vec![0.0; p];
        for _ in 0..200 {
            let mut grad = vec![0.0; p];
            let mut info = vec![0.0; p * p];
            for j in 0..design.len() {
                let eta: f64 = design[j].iter().zip(&beta).map(|(z, b)| z * b).sum();
                let pi = expit(eta);
                let w = n[j] as f64 * pi * (1.0 - pi);
                let resid = events[j] as f64 - n[j] as f64 * pi;
                for r in 0..p {
                    grad[r] += design[j][r] * resid;
                    for s in 0..p {
                        info[r * p + s] += design[j][r] * w * design[j][s];
                    }
                }
            }
            let gnorm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < 1e-12 {
                return Some(beta);
            }
            let step = crate::linalg::solve(&info, &grad, p)?;
            for r in 0..p {
                beta[r] += step[r];
            }
        }
        None
    }

    #[test]
    fn enumeration_has_36_pairs_lexicographic() {
        let pairs = enumerate_fp2();
        assert_eq!(pairs.len(), 36);
        assert_eq!(pairs[0], PowerPair::new(-2.0, -2.0).unwrap());
        let repeated = pairs.iter().filter(|p| p.is_repeated()).count();
        assert_eq!(repeated, 8);
        for w in pairs.windows(2) {
            assert!((w[0].p1(), w[0].p2()) < (w[1].p1(), w[1].p2()));
        }
    }

    #[test]
    fn basis_at_u_equals_one() {
        let pp = PowerPair::new(0.0, 1.0).unwrap();
        assert_eq!(fp_basis(12.0, pp, 12.0).unwrap(), [0.0, 1.0]);
        let rep = PowerPair::new(2.0, 2.0).unwrap();
        assert_eq!(fp_basis(12.0, rep, 12.0).unwrap(), [1.0, 0.0]);
    }

    #[test]
    fn basis_direct_arithmetic() {
        let pp = PowerPair::new(-1.0, 0.0).unwrap();
        let [h1, h2] = fp_basis(10.0, pp, 5.0).unwrap();
        assert!((h1 - 0.5).abs() < 1e-15);
        assert!((h2 - 2.0f64.ln()).abs() < 1e-15);
        assert!((h2 - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn basis_repeated_zero_power_is_log_squared() {
        let pp = PowerPair::new(0.0, 0.0).unwrap();
        let [h1, h2] = fp_basis(6.0, pp, 18.0).unwrap();
        let lnu = (6.0f64 / 18.0).ln();
        assert!((h1 - lnu).abs() < 1e-15);
        assert!((h2 - lnu * lnu).abs() < 1e-15);
    }

    #[test]
    fn basis_rejects_nonpositive_x() {
        let pp = PowerPair::new(1.0, 2.0).unwrap();
        assert!(fp_basis(0.0, pp, 18.0).is_err());
        assert!(fp_basis(-3.0, pp, 18.0).is_err());
    }

    #[test]
    fn powers_canonicalised_and_checked() {
        let pp = PowerPair::new(3.0, -2.0).unwrap();
        assert_eq!((pp.p1(), pp.p2()), (-2.0, 3.0));
        assert!(PowerPair::new(1.5, 2.0).is_err());
    }

    #[test]
    fn flat_data_fits_saturated_for_any_powers() {
        // oracle: equal observed proportions make the constant curve the
        // pooled MLE, so fitted probability is 13/20 = 0.65 everywhere and
        // the deviance is 0
        let data = flat_dataset();
        let c = FitControls::default();
        for powers in [
            PowerPair::new(-2.0, -2.0).unwrap(),
            PowerPair::new(0.0, 3.0).unwrap(),
            PowerPair::new(0.5, 1.0).unwrap(),
        ] {
            let m = fit_glm(&data, powers, 18.0, &c).unwrap();
            assert!(m.converged, "powers {powers}");
            assert!(m.deviance.abs() < 1e-8, "deviance {}", m.deviance);
            for &x in data.grid.values() {
                let pi = m.predict_risk(x).unwrap();
                assert!((pi - 0.65).abs() < 1e-7, "powers {powers}, x {x}: {pi}");
            }
        }
    }

    #[test]
    fn two_informative_arms_saturate_single_term_model() {
        // 2 params on 2 informative arms: fitted == observed proportions
        let design = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let n = vec![30, 40];
        let events = vec![12, 30];
        let fit = fit_logistic(&design, &n, &events, &FitControls::default());
        assert!(fit.converged);
        let p0 = expit(fit.beta[0]);
        let p1 = expit(fit.beta[0] + fit.beta[1]);
        assert!((p0 - 0.4).abs() < 1e-9);
        assert!((p1 - 0.75).abs() < 1e-9);
    }

    #[test]
    fn all_zero_events_flags_separation() {
        let data = TrialDataset::new(refine_grid(), vec![20; 5], vec![0; 5]).unwrap();
        let c = FitControls::default();
        let m = fit_glm(&data, PowerPair::new(0.0, 1.0).unwrap(), 18.0, &c).unwrap();
        assert!(!m.converged);
        assert_eq!(m.failure, Some(FitFailure::Separation));
    }

    #[test]
    fn select_best_flat_ties_to_first_pair() {
        let data = flat_dataset();
        let m = select_best(&data, 18.0, &FitControls::default()).unwrap();
        assert_eq!(m.powers, PowerPair::new(-2.0, -2.0).unwrap());
        assert!(!m.fallback);
        for &x in data.grid.values() {
            assert!((m.predict_risk(x).unwrap() - 0.65).abs() < 1e-7);
        }
    }

    #[test]
    fn select_best_all_zero_falls_back() {
        let data = TrialDataset::new(refine_grid(), vec![20; 5], vec![0; 5]).unwrap();
        let m = select_best(&data, 18.0, &FitControls::default()).unwrap();
        assert!(m.fallback);
        assert!(!m.converged);
    }

    #[test]
    fn select_best_zero_patients_errors() {
        let data = TrialDataset::new(refine_grid(), vec![0; 5], vec![0; 5]).unwrap();
        assert!(select_best(&data, 18.0, &FitControls::default()).is_err());
    }

    #[test]
    fn select_best_beats_every_candidate_on_monotone_data() {
        // oracle: exhaustive refit comparison
        let data = TrialDataset::new(
            refine_grid(),
            vec![200; 5],
            vec![180, 160, 130, 100, 80],
        )
        .unwrap();
        let c = FitControls::default();
        let best = select_best(&data, 18.0, &c).unwrap();
        assert!(best.converged);
        for powers in enumerate_fp2() {
            let m = fit_glm(&data, powers, 18.0, &c).unwrap();
            if m.converged {
                assert!(
                    best.deviance <= m.deviance + 1e-8,
                    "candidate {powers} beats selection: {} < {}",
                    m.deviance,
                    best.deviance
                );
            }
        }
    }

    #[test]
    fn selection_never_fits_worse_than_intercept_only() {
        let datasets = [
            vec![130u64, 131, 128, 133, 127],
            vec![180, 160, 130, 100, 80],
            vec![100, 140, 150, 148, 120],
        ];
        let c = FitControls::default();
        for events in datasets {
            let data = TrialDataset::new(refine_grid(), vec![200; 5], events).unwrap();
            let best = select_best(&data, 18.0, &c).unwrap();
            let flat = intercept_only(&data, 18.0, &c);
            assert!(best.deviance <= flat.deviance + 1e-8);
        }
    }

    #[test]
    fn deviance_and_predictions_invariant_under_scaling() {
        let data = TrialDataset::new(refine_grid(), vec![200; 5], vec![180, 160, 130, 100, 80])
            .unwrap();
        let c = FitControls::default();
        for powers in enumerate_fp2() {
            let a = fit_glm(&data, powers, 18.0, &c).unwrap();
            let b = fit_glm(&data, powers, 4.5, &c).unwrap();
            if !(a.converged && b.converged) {
                continue;
            }
            assert!(
                (a.deviance - b.deviance).abs() < 1e-6,
                "powers {powers}: {} vs {}",
                a.deviance,
                b.deviance
            );
            for &x in data.grid.values() {
                let pa = a.predict_risk(x).unwrap();
                let pb = b.predict_risk(x).unwrap();
                assert!((pa - pb).abs() < 1e-6, "powers {powers}, x {x}");
            }
        }
    }

    #[test]
    fn score_equations_hold_at_fit() {
        let data = TrialDataset::new(refine_grid(), vec![200; 5], vec![180, 160, 130, 100, 80])
            .unwrap();
        let c = FitControls::default();
        let m = select_best(&data, 18.0, &c).unwrap();
        let mut score = [0.0; 3];
        for (j, &x) in data.grid.values().iter().enumerate() {
            let z = m.design_row(x).unwrap();
            let pi = m.predict_risk(x).unwrap();
            let resid = data.events[j] as f64 - data.n[j] as f64 * pi;
            for r in 0..3 {
                score[r] += z[r] * resid;
            }
        }
        for (r, s) in score.iter().enumerate() {
            assert!(s.abs() < 1e-8, "score[{r}] = {s}");
        }
    }

    #[test]
    fn covariance_matches_independent_fisher_inverse() {
        let data = TrialDataset::new(refine_grid(), vec![200; 5], vec![180, 160, 130, 100, 80])
            .unwrap();
        let m = select_best(&data, 18.0, &FitControls::default()).unwrap();
        // recompute I(beta-hat) = sum n pi (1-pi) z z' and invert independently
        let mut info = [[0.0f64; 3]; 3];
        for (j, &x) in data.grid.values().iter().enumerate() {
            let z = m.design_row(x).unwrap();
            let pi = m.predict_risk(x).unwrap();
            let w = data.n[j] as f64 * pi * (1.0 - pi);
            for r in 0..3 {
                for s in 0..3 {
                    info[r][s] += z[r] * w * z[s];
                }
            }
        }
        let flat: Vec<f64> = info.iter().flatten().copied().collect();
        let inv = crate::linalg::invert(&flat, 3).unwrap();
        for r in 0..3 {
            for s in 0..3 {
                assert!(
                    (m.cov[r][s] - inv[r * 3 + s]).abs() < 1e-6,
                    "cov[{r}][{s}]: {} vs {}",
                    m.cov[r][s],
                    inv[r * 3 + s]
                );
            }
        }
    }

    #[test]
    fn irls_matches_independent_newton_on_saturated_three_arm_fits() {
        let grid = ArmGrid::new(&[6.0, 12.0, 18.0], 0, Preference::PreferHigh).unwrap();
        let cases = [
            (vec![50u64, 50, 50], vec![30u64, 25, 20]),
            (vec![40, 80, 60], vec![10, 50, 45]),
            (vec![100, 100, 100], vec![65, 64, 66]),
        ];
        let c = FitControls::default();
        for (n, events) in cases {
            let data = TrialDataset::new(grid.clone(), n.clone(), events.clone()).unwrap();
            let powers = PowerPair::new(0.0, 1.0).unwrap();
            let m = fit_glm(&data, powers, 18.0, &c).unwrap();
            assert!(m.converged);
            let design = design_matrix(&grid, powers, 18.0).unwrap();
            let newton = newton_fit(&design, &n, &events).expect("newton converged");
            for r in 0..3 {
                assert!(
                    (m.beta[r] - newton[r]).abs() < 1e-8,
                    "beta[{r}]: {} vs {}",
                    m.beta[r],
                    newton[r]
                );
            }
        }
    }

    #[test]
    fn predict_refuses_extrapolation() {
        let m = select_best(&flat_dataset(), 18.0, &FitControls::default()).unwrap();
        assert!(m.predict_risk(20.0).is_err());
        assert!(m.predict_risk_extrapolated(20.0).is_ok());
    }

    #[test]
    fn zero_beta_predicts_half() {
        let mut m = select_best(&flat_dataset(), 18.0, &FitControls::default()).unwrap();
        m.beta = [0.0, 0.0, 0.0];
        for x in [6.0, 11.4, 18.0] {
            assert_eq!(m.predict_risk(x).unwrap(), 0.5);
        }
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let grid = refine_grid();
        let text = "arm_value,n,events\n6,350,227\n9,350,230\n12,350,220\n15,350,235\n18,350,228\n";
        let data = TrialDataset::from_csv_str(text, &grid).unwrap();
        assert_eq!(data.n, vec![350; 5]);
        assert_eq!(data.events[0], 227);

        let bad = "arm_value,n,events\n6,350\n";
        let err = TrialDataset::from_csv_str(bad, &grid).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let unknown_arm = "arm_value,n,events\n7,350,227\n";
        assert!(TrialDataset::from_csv_str(unknown_arm, &grid).is_err());

        let missing = "arm_value,n,events\n6,350,227\n";
        assert!(TrialDataset::from_csv_str(missing, &grid).is_err());
    }

    #[test]
    fn dataset_validates_events_le_n() {
        assert!(TrialDataset::new(refine_grid(), vec![10; 5], vec![11; 5]).is_err());
    }
}
