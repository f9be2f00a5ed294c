//! The four run commands: simulate, samplesize, interim, analyze.
//! Each one dispatches into the engine, writes plot-ready CSVs plus a JSON
//! result where useful, and leaves manifest writing to the caller.

use std::fmt::Write as _;

use serde::Serialize;

use roci_core::error::{Error, Result};
use roci_core::fp::TrialDataset;
use roci_core::inference::{analyze, AnalysisOptions, DecisionRule, Method};
use roci_core::interim::{
    interim_grid, schoenfeld_events_exact, simulate_logrank_power, size_interim, GridAxis,
    InterimGridCell, InterimResult, InterimSpec, Sided,
};
use roci_core::mc::{performance, run_replicates, MCConfig, PerfReport};
use roci_core::samplesize::{
    power_grid, recommend_n, smooth_curve, validate_bootstrap, SampleSizeResult,
};
use roci_core::trial::Scenario;

use crate::config::ResolvedConfig;
use crate::manifest::RunRecorder;

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Delta => "delta",
        Method::Bootstrap => "bootstrap",
    }
}

fn rule_name(r: DecisionRule) -> &'static str {
    match r {
        DecisionRule::MaxPreferredPassing => "max_preferred_passing",
        DecisionRule::ContiguousFromControl => "contiguous_from_control",
    }
}

fn sided_name(s: Sided) -> &'static str {
    match s {
        Sided::One => "one",
        Sided::Two => "two",
    }
}

/// Arm value as a column label: integral values drop the trailing ".0".
fn arm_label(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn mc_config(cfg: &ResolvedConfig, nsim: u64, method: Method, master_seed: u64) -> MCConfig {
    MCConfig {
        nsim,
        method,
        bootstrap_b: cfg.raw.methods.bootstrap_b,
        rule: cfg.raw.methods.rule,
        allocation: Default::default(),
        master_seed,
        fit: cfg.fit.clone(),
        scale: cfg.raw.methods.fp.scale,
    }
}

// ── simulate ────────────────────────────────────────────────────────────────

/// Operating characteristics for the requested scenarios at each N; one CSV
/// per scenario, one row per N.
pub fn cmd_simulate(
    cfg: &ResolvedConfig,
    scenario_names: &[String],
    n_values: &[u64],
    rec: &mut RunRecorder,
) -> Result<Vec<(String, u64, PerfReport)>> {
    if scenario_names.is_empty() {
        return Err(Error::Validation(
            "simulate: no scenarios requested".to_string(),
        ));
    }
    if n_values.is_empty() {
        return Err(Error::Validation(
            "simulate: no sample sizes requested (pass --n)".to_string(),
        ));
    }
    let method = cfg.raw.methods.method;
    let mc = mc_config(cfg, cfg.raw.mc.nsim, method, cfg.raw.mc.master_seed);
    mc.validate()?;

    for w in cfg.grid.warnings() {
        rec.note(w);
    }

    let mut results = Vec::new();
    for name in scenario_names {
        let scenario = cfg.scenario(name)?;
        let mut csv = String::new();
        let shares: Vec<String> = cfg
            .grid
            .values()
            .iter()
            .map(|&v| format!("share_{}", arm_label(v)))
            .collect();
        writeln!(
            csv,
            "scenario,N,method,rule,nsim,{},optimal_power,opt_lo,opt_hi,acceptable_power,type1_error,diag_failures",
            shares.join(",")
        )
        .expect("write to string");

        for &n in n_values {
            let counts = run_replicates(scenario, &cfg.grid, n, &cfg.margin, &mc)?;
            let perf = performance(&counts, scenario, &cfg.grid, &cfg.margin)?;
            let share_cols: Vec<String> =
                perf.selection_dist.iter().map(|s| format!("{s}")).collect();
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                scenario.name,
                n,
                method_name(mc.method),
                rule_name(mc.rule),
                perf.nsim,
                share_cols.join(","),
                perf.optimal_power.value,
                perf.optimal_power.lo,
                perf.optimal_power.hi,
                perf.acceptable_power.value,
                perf.type1_error.value,
                perf.diag_failures
            )
            .expect("write to string");
            if perf.type1_error.value > cfg.raw.performance.type1_cap {
                rec.note(format!(
                    "scenario {} at N={n}: type I error {:.4} exceeds the configured cap {}",
                    scenario.name, perf.type1_error.value, cfg.raw.performance.type1_cap
                ));
            }
            results.push((scenario.name.clone(), n, perf));
        }
        rec.write_file(&format!("simulate_{}.csv", scenario.name), &csv)?;
    }
    Ok(results)
}

// ── samplesize ──────────────────────────────────────────────────────────────

#[derive(Debug, Serialize)]
pub struct SampleSizeRun {
    pub target_power: f64,
    pub granularity: u64,
    pub recommended_n: u64,
    pub result: SampleSizeResult,
}

/// The full two-stage pipeline: delta-method power over the N grid, loess
/// smooth, minimal-N recommendation, bootstrap validation with inflation.
pub fn cmd_samplesize(cfg: &ResolvedConfig, rec: &mut RunRecorder) -> Result<SampleSizeRun> {
    let ss = &cfg.raw.samplesize;
    let scenario = cfg.scenario(&ss.scenario)?;
    let n_values = cfg.n_grid();
    let target = cfg.raw.performance.target_power;

    let mc_delta = mc_config(cfg, cfg.raw.mc.nsim, Method::Delta, cfg.raw.mc.master_seed);
    let points = power_grid(scenario, &cfg.grid, &cfg.margin, &n_values, &mc_delta)?;

    let mut curve_csv = String::from("N,power,mc_se\n");
    for p in &points {
        writeln!(curve_csv, "{},{},{}", p.n, p.power, p.mc_se).expect("write to string");
    }
    rec.write_file("power_curve.csv", &curve_csv)?;

    let curve = smooth_curve(&points, ss.loess_span, ss.dense_step)?;
    let mut smooth_csv = String::from("N,power_smooth\n");
    for (n, p) in &curve.smoothed {
        writeln!(smooth_csv, "{n},{p}").expect("write to string");
    }
    rec.write_file("power_smooth.csv", &smooth_csv)?;

    let recommended = recommend_n(&curve, target, ss.n_step)?;
    rec.note(format!(
        "delta-method stage recommends N = {recommended} for {target} optimal power"
    ));

    let mc_boot = mc_config(
        cfg,
        ss.validation_nsim,
        Method::Bootstrap,
        cfg.raw.mc.master_seed,
    );
    let result = validate_bootstrap(
        scenario,
        &cfg.grid,
        &cfg.margin,
        recommended,
        target,
        ss.inflation_step,
        ss.n_step,
        ss.max_inflations,
        &mc_boot,
    )?;
    if result.validated {
        rec.note(format!(
            "bootstrap validation passed at N = {} (power {:.4})",
            result.final_n, result.final_power.value
        ));
    } else {
        rec.note(format!(
            "bootstrap validation at N = {} gave power {:.4} [{:.4},{:.4}], below target {target}; \
             inflated to N = {} (power {:.4} [{:.4},{:.4}])",
            recommended,
            result.validation_power.value,
            result.validation_power.lo,
            result.validation_power.hi,
            result.final_n,
            result.final_power.value,
            result.final_power.lo,
            result.final_power.hi,
        ));
    }

    let run = SampleSizeRun {
        target_power: target,
        granularity: ss.n_step,
        recommended_n: recommended,
        result,
    };
    let json = serde_json::to_string_pretty(&run)
        .map_err(|e| Error::Data(format!("result serialise error: {e}")))?;
    rec.write_file("samplesize_result.json", &json)?;
    Ok(run)
}

// ── interim ─────────────────────────────────────────────────────────────────

#[derive(Debug, Serialize)]
pub struct InterimRun {
    pub spec: InterimSpec,
    pub one_sided: InterimResult,
    pub two_sided: InterimResult,
    pub notes: Vec<String>,
}

/// Size the interim comparison under both sidedness conventions and emit the
/// three design grids (alpha x p0, alpha x p1, alpha x power) as one CSV.
pub fn cmd_interim(cfg: &ResolvedConfig, rec: &mut RunRecorder) -> Result<InterimRun> {
    let section = cfg
        .raw
        .interim
        .as_ref()
        .ok_or_else(|| Error::Validation("config has no [interim] section".to_string()))?;
    let spec = cfg.interim_spec().expect("checked above");

    let mut notes = Vec::new();
    let mut sized = |sided: Sided| -> Result<InterimResult> {
        let mut s = spec;
        s.sided = sided;
        let mut r = size_interim(&s)?;
        let raw = schoenfeld_events_exact(&s)?;
        if (raw - raw.round()).abs() < 0.05 && raw.ceil() != raw.round() {
            notes.push(format!(
                "{}-sided events requirement {raw:.4} sits just above an integer; the \
                 ceiling rounds it to {}",
                sided_name(sided),
                r.events_required
            ));
        }
        if section.oracle_nsim > 0 {
            r.sim_power = Some(simulate_logrank_power(
                &s,
                r.n_total,
                section.oracle_nsim,
                cfg.raw.mc.master_seed,
            )?);
        }
        Ok(r)
    };

    let one_sided = sized(Sided::One)?;
    let two_sided = sized(Sided::Two)?;

    if let Some(reference) = section.reference_n {
        let lo = one_sided.n_total.min(two_sided.n_total);
        let hi = one_sided.n_total.max(two_sided.n_total);
        if (lo..=hi).contains(&reference) {
            notes.push(format!(
                "reference interim size {reference} lies between the one-sided ({}) and \
                 two-sided ({}) conventions; neither reproduces it exactly",
                one_sided.n_total, two_sided.n_total
            ));
        } else {
            notes.push(format!(
                "reference interim size {reference} is outside the one-sided ({}) to \
                 two-sided ({}) bracket",
                one_sided.n_total, two_sided.n_total
            ));
        }
    }

    let sim = if section.oracle_nsim > 0 {
        Some((section.oracle_nsim, cfg.raw.mc.master_seed))
    } else {
        None
    };
    let grids = &section.grids;
    let mut cells: Vec<InterimGridCell> = Vec::new();
    cells.extend(interim_grid(
        GridAxis::AlphaByP0,
        &spec,
        &grids.alphas,
        &grids.p0_values,
        sim,
    ));
    cells.extend(interim_grid(
        GridAxis::AlphaByP1,
        &spec,
        &grids.alphas,
        &grids.p1_values,
        sim,
    ));
    cells.extend(interim_grid(
        GridAxis::AlphaByPower,
        &spec,
        &grids.alphas,
        &grids.power_values,
        sim,
    ));

    let with_sim = sim.is_some();
    let mut csv = String::from("alpha,sided,power,p0,p1,hr,events,n_total,control_events");
    if with_sim {
        csv.push_str(",sim_power");
    }
    csv.push('\n');
    for cell in &cells {
        match (&cell.result, &cell.error) {
            (Some(r), _) => {
                write!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    cell.alpha,
                    sided_name(cell.sided),
                    cell.power,
                    cell.p0,
                    cell.p1,
                    r.hr,
                    r.events_required,
                    r.n_total,
                    r.control_events
                )
                .expect("write to string");
                if with_sim {
                    match r.sim_power {
                        Some(p) => write!(csv, ",{p}").expect("write to string"),
                        None => csv.push(','),
                    }
                }
                csv.push('\n');
            }
            (None, Some(err)) => {
                rec.note(format!(
                    "interim grid cell (alpha={}, p0={}, p1={}, power={}) skipped: {err}",
                    cell.alpha, cell.p0, cell.p1, cell.power
                ));
            }
            (None, None) => unreachable!("cell carries a result or an error"),
        }
    }
    rec.write_file("interim_grid.csv", &csv)?;

    for n in &notes {
        rec.note(n.clone());
    }
    let run = InterimRun {
        spec,
        one_sided,
        two_sided,
        notes,
    };
    let json = serde_json::to_string_pretty(&run)
        .map_err(|e| Error::Data(format!("result serialise error: {e}")))?;
    rec.write_file("interim_result.json", &json)?;
    Ok(run)
}

// ── analyze ─────────────────────────────────────────────────────────────────

#[derive(Debug, Serialize)]
pub struct AnalyzeRun {
    pub record: roci_core::inference::AnalysisRecord,
    pub selected_arm_value: f64,
}

/// Analyse a real dataset file against the configured design.
pub fn cmd_analyze(
    cfg: &ResolvedConfig,
    dataset_text: &str,
    rec: &mut RunRecorder,
) -> Result<AnalyzeRun> {
    let data = TrialDataset::from_csv_str(dataset_text, &cfg.grid)?;
    let opts = AnalysisOptions {
        method: cfg.raw.methods.method,
        rule: cfg.raw.methods.rule,
        bootstrap_b: cfg.raw.methods.bootstrap_b,
        seed: cfg.raw.mc.master_seed,
        scale: cfg.raw.methods.fp.scale,
        fit: cfg.fit.clone(),
    };
    let record = analyze(&data, &cfg.margin, &opts)?;

    let mut csv = String::from("arm_value,n,events,rr_hat,lower_bound,passes\n");
    for inf in &record.inferences {
        let j = inf.arm_index;
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            arm_label(cfg.grid.values()[j]),
            data.n[j],
            data.events[j],
            inf.rr_hat,
            inf.lower_bound,
            record.decision.passing[j]
        )
        .expect("write to string");
    }
    rec.write_file("analysis.csv", &csv)?;

    for w in &record.warnings {
        rec.note(w.clone());
    }
    let selected_arm_value = cfg.grid.values()[record.decision.selected_index];
    rec.note(format!(
        "recommended arm: {} (index {})",
        arm_label(selected_arm_value),
        record.decision.selected_index
    ));

    let run = AnalyzeRun {
        record,
        selected_arm_value,
    };
    let json = serde_json::to_string_pretty(&run)
        .map_err(|e| Error::Data(format!("result serialise error: {e}")))?;
    rec.write_file("analysis.json", &json)?;
    Ok(run)
}

/// Expose the simulate CSV schema for a scenario run; used by tests.
pub fn simulate_csv_name(scenario: &Scenario) -> String {
    format!("simulate_{}.csv", scenario.name)
}
