//! Sample-size determination: optimal power over a grid of N, loess
//! smoothing of the raw Monte Carlo points, minimal-N recommendation, and
//! bootstrap validation with a single inflation round.
//!
//! The workflow follows the two-stage plan: scan the N grid with the cheap
//! delta method, smooth, read off the smallest N that reaches the target,
//! then re-check that single N with the bootstrap (which carries model
//! selection variability) and inflate once if it falls short.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{performance, run_replicates, McEstimate, MCConfig};
use crate::trial::{ArmGrid, Margin, Scenario};

/// One Monte Carlo power estimate on the N grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub n: u64,
    pub power: f64,
    pub mc_se: f64,
}

/// Raw power points plus their loess smooth on a dense grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub points: Vec<PowerPoint>,
    /// `(N, smoothed power)` on the dense output grid, clamped to [0,1].
    pub smoothed: Vec<(u64, f64)>,
    pub span: f64,
}

/// Result of the recommend-then-validate pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeResult {
    /// Smallest N whose smoothed delta-method power reaches the target.
    pub recommended_n: u64,
    /// Whether the bootstrap check at `recommended_n` met the target.
    pub validated: bool,
    /// Bootstrap power at `recommended_n`.
    pub validation_power: McEstimate,
    /// `recommended_n` when validated, otherwise the inflated N.
    pub final_n: u64,
    /// Bootstrap power at `final_n` (equals `validation_power` when no
    /// inflation was needed).
    pub final_power: McEstimate,
    pub inflation_step: f64,
}

/// Estimate optimal power at each N in `n_values` (one full Monte Carlo run
/// per N). Points come back sorted by N.
pub fn power_grid(
    scenario: &Scenario,
    grid: &ArmGrid,
    margin: &Margin,
    n_values: &[u64],
    mc: &MCConfig,
) -> Result<Vec<PowerPoint>> {
    if n_values.is_empty() {
        return Err(Error::validation("empty N grid".to_string()));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation(
            "N grid must be strictly increasing".to_string(),
        ));
    }
    mc.validate()?;
    let points: Result<Vec<PowerPoint>> = n_values
        .par_iter()
        .map(|&n| {
            let counts = run_replicates(scenario, grid, n, margin, mc)?;
            let perf = performance(&counts, scenario, grid, margin)?;
            let p = perf.optimal_power.value;
            Ok(PowerPoint {
                n,
                power: p,
                mc_se: (p * (1.0 - p) / mc.nsim as f64).sqrt(),
            })
        })
        .collect();
    points
}

/// Tricube-weighted local linear regression (loess, degree 1).
///
/// At each output point the `ceil(span * k)` nearest input points (floored at
/// 3 so a line is always identified) are fit by weighted least squares with
/// tricube weights `(1 - (d/d_max)^3)^3`. Neighbourhoods that collapse to a
/// single x (d_max = 0) or a singular fit fall back to the weighted mean.
/// Output is clamped to [0, 1].
pub fn loess_smooth(points: &[(f64, f64)], span: f64, out_grid: &[f64]) -> Result<Vec<f64>> {
    if points.len() < 4 {
        return Err(Error::validation(format!(
            "loess needs at least 4 points, got {}; report the raw points instead",
            points.len()
        )));
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(Error::validation(format!(
            "loess span must lie in (0,1], got {span}"
        )));
    }
    let k = points.len();
    let q = ((span * k as f64).ceil() as usize).clamp(3, k);

    let mut out = Vec::with_capacity(out_grid.len());
    for &x0 in out_grid {
        let mut nearest: Vec<usize> = (0..k).collect();
        nearest.sort_by(|&a, &b| {
            let da = (points[a].0 - x0).abs();
            let db = (points[b].0 - x0).abs();
            da.partial_cmp(&db).expect("finite").then(a.cmp(&b))
        });
        nearest.truncate(q);
        let d_max = nearest
            .iter()
            .map(|&i| (points[i].0 - x0).abs())
            .fold(0.0f64, f64::max);

        let value = if d_max == 0.0 {
            let ys: f64 = nearest.iter().map(|&i| points[i].1).sum();
            ys / q as f64
        } else {
            let mut sw = 0.0;
            let mut swx = 0.0;
            let mut swy = 0.0;
            let mut swxx = 0.0;
            let mut swxy = 0.0;
            for &i in &nearest {
                let (x, y) = points[i];
                let w = tricube((x - x0).abs() / d_max);
                sw += w;
                swx += w * x;
                swy += w * y;
                swxx += w * x * x;
                swxy += w * x * y;
            }
            let det = sw * swxx - swx * swx;
            if det.abs() <= 1e-12 * sw * swxx.max(1.0) {
                swy / sw
            } else {
                let slope = (sw * swxy - swx * swy) / det;
                let intercept = (swy - slope * swx) / sw;
                intercept + slope * x0
            }
        };
        out.push(value.clamp(0.0, 1.0));
    }
    Ok(out)
}

fn tricube(u: f64) -> f64 {
    let t = 1.0 - u * u * u;
    t * t * t
}

/// Build a [`PowerCurve`]: smooth `points` onto a dense grid spanning their
/// N range with step `dense_step`.
pub fn smooth_curve(points: &[PowerPoint], span: f64, dense_step: u64) -> Result<PowerCurve> {
    if dense_step == 0 {
        return Err(Error::validation("dense grid step must be positive"));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.power)).collect();
    let lo = points.first().expect("non-empty").n;
    let hi = points.last().expect("non-empty").n;
    let mut dense = Vec::new();
    let mut n = lo;
    while n < hi {
        dense.push(n);
        n += dense_step;
    }
    dense.push(hi);
    let out_grid: Vec<f64> = dense.iter().map(|&n| n as f64).collect();
    let smooth = loess_smooth(&xy, span, &out_grid)?;
    Ok(PowerCurve {
        points: points.to_vec(),
        smoothed: dense.into_iter().zip(smooth).collect(),
        span,
    })
}

fn round_up_to(n: u64, granularity: u64) -> u64 {
    if granularity <= 1 {
        n
    } else {
        n.div_ceil(granularity) * granularity
    }
}

/// Smallest N on the dense grid whose smoothed power reaches `target`,
/// rounded up to the design granularity (the N-grid step).
pub fn recommend_n(curve: &PowerCurve, target: f64, granularity: u64) -> Result<u64> {
    if curve.smoothed.is_empty() {
        return Err(Error::validation(
            "power curve has no smoothed values".to_string(),
        ));
    }
    let hit = curve.smoothed.iter().find(|&&(_, p)| p >= target);
    match hit {
        Some(&(n, _)) => Ok(round_up_to(n, granularity)),
        None => {
            let max_power = curve
                .smoothed
                .iter()
                .map(|&(_, p)| p)
                .fold(f64::NEG_INFINITY, f64::max);
            Err(Error::InsufficientRange { target, max_power })
        }
    }
}

/// Bootstrap check of a candidate N, with at most `max_inflations` inflation
/// rounds of `inflation_step` (rounded up to the granularity) when the point
/// estimate misses the target.
#[allow(clippy::too_many_arguments)]
pub fn validate_bootstrap(
    scenario: &Scenario,
    grid: &ArmGrid,
    margin: &Margin,
    n: u64,
    target: f64,
    inflation_step: f64,
    granularity: u64,
    max_inflations: usize,
    mc: &MCConfig,
) -> Result<SampleSizeResult> {
    if inflation_step <= 0.0 {
        return Err(Error::validation(format!(
            "inflation step must be positive, got {inflation_step}"
        )));
    }
    mc.validate()?;

    let run = |n_run: u64| -> Result<McEstimate> {
        let counts = run_replicates(scenario, grid, n_run, margin, mc)?;
        Ok(performance(&counts, scenario, grid, margin)?.optimal_power)
    };

    let validation_power = run(n)?;
    if validation_power.value >= target {
        return Ok(SampleSizeResult {
            recommended_n: n,
            validated: true,
            validation_power,
            final_n: n,
            final_power: validation_power,
            inflation_step,
        });
    }

    let mut final_n = n;
    let mut final_power = validation_power;
    for _ in 0..max_inflations {
        final_n = round_up_to(
            ((final_n as f64) * (1.0 + inflation_step)).ceil() as u64,
            granularity,
        );
        final_power = run(final_n)?;
        if final_power.value >= target {
            break;
        }
    }
    Ok(SampleSizeResult {
        recommended_n: n,
        validated: false,
        validation_power,
        final_n,
        final_power,
        inflation_step,
    })
}
