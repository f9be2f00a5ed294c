//! Acceptance suite for the REFINE-Lung design reproduction.
//!
//! Eight checks gate a release. Each prints one PASS line when it holds
//! (visible with `--nocapture`) and fails with the measured values when it
//! does not. Monte Carlo checks fix their seeds, so every run reproduces the
//! same numbers; the windows below already include the Monte Carlo and
//! reconstruction uncertainty they were derived under.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use roci_core::fp::{enumerate_fp2, fit_glm, fit_logistic, select_best, FitControls, TrialDataset};
use roci_core::inference::{rr_delta, DecisionRule};
use roci_core::interim::{
    events_to_n, logrank_z, schoenfeld_events, schoenfeld_events_exact, simulate_logrank_power,
    InterimSpec, Sided,
};
use roci_core::mc::{performance, run_replicates, MCConfig};
use roci_core::samplesize::loess_smooth;
use roci_core::stats::expit;
use roci_core::trial::{flat_scenario, margin_scenarios, ArmGrid, Margin, Preference};

fn refine_grid() -> ArmGrid {
    ArmGrid::new(&[6.0, 9.0, 12.0, 15.0, 18.0], 0, Preference::PreferHigh).unwrap()
}

fn refine_margin() -> Margin {
    Margin::new(0.88, 0.05).unwrap()
}

fn refine_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/refine_lung.cfg")
}

/// Collects sub-check outcomes so one criterion reports everything at once.
struct Check {
    label: &'static str,
    failures: Vec<String>,
    details: Vec<String>,
}

impl Check {
    fn new(label: &'static str) -> Self {
        Check {
            label,
            failures: Vec::new(),
            details: Vec::new(),
        }
    }

    fn assert(&mut self, ok: bool, detail: String) {
        if ok {
            self.details.push(detail);
        } else {
            self.failures.push(detail);
        }
    }

    fn finish(self) {
        if self.failures.is_empty() {
            println!("{}: PASS ({})", self.label, self.details.join("; "));
        } else {
            let mut msg = format!("{}: FAIL\n", self.label);
            for f in &self.failures {
                writeln!(msg, "  failed: {f}").unwrap();
            }
            for d in &self.details {
                writeln!(msg, "  ok:     {d}").unwrap();
            }
            panic!("{msg}");
        }
    }
}

// ── 1. FP2 enumeration ──────────────────────────────────────────────────────

#[test]
fn c1_fp2_enumeration() {
    let started = Instant::now();
    let mut check = Check::new("criterion 1 (FP2 enumeration)");
    let pairs = enumerate_fp2();
    check.assert(pairs.len() == 36, format!("{} candidate pairs", pairs.len()));
    let repeated = pairs.iter().filter(|p| p.is_repeated()).count();
    check.assert(repeated == 8, format!("{repeated} repeated-power pairs"));
    check.assert(
        started.elapsed().as_secs_f64() < 1.0,
        format!("{:.4}s", started.elapsed().as_secs_f64()),
    );
    check.finish();
}

// ── 2. Delta-method power point ─────────────────────────────────────────────

#[test]
fn c2_refine_delta_power_at_1550() {
    let started = Instant::now();
    let mut check = Check::new("criterion 2 (delta power at N=1550)");
    let grid = refine_grid();
    let flat = flat_scenario(&grid, 0.65).unwrap();
    let mc = MCConfig::delta(1000, DecisionRule::MaxPreferredPassing, 47);
    let counts = run_replicates(&flat, &grid, 1550, &refine_margin(), &mc).unwrap();
    let perf = performance(&counts, &flat, &grid, &refine_margin()).unwrap();
    let p = perf.optimal_power.value;
    check.assert(
        (0.76..=0.84).contains(&p),
        format!("optimal power {p:.4} in [0.76, 0.84]"),
    );
    let secs = started.elapsed().as_secs_f64();
    check.assert(secs < 300.0, format!("{secs:.1}s (< 5 min)"));
    check.finish();
}

// ── 3. Bootstrap validation at the delta-stage N ────────────────────────────

#[test]
fn c3_refine_bootstrap_power_at_1550() {
    let started = Instant::now();
    let mut check = Check::new("criterion 3 (bootstrap power at N=1550)");
    let grid = refine_grid();
    let flat = flat_scenario(&grid, 0.65).unwrap();
    let mc = MCConfig::bootstrap(500, 1000, DecisionRule::MaxPreferredPassing, 47);
    let counts = run_replicates(&flat, &grid, 1550, &refine_margin(), &mc).unwrap();
    let perf = performance(&counts, &flat, &grid, &refine_margin()).unwrap();
    let p = perf.optimal_power.value;
    check.assert(
        (0.66..=0.79).contains(&p),
        format!(
            "optimal power {p:.4} [{:.4},{:.4}] in [0.66, 0.79]",
            perf.optimal_power.lo, perf.optimal_power.hi
        ),
    );
    let secs = started.elapsed().as_secs_f64();
    check.assert(secs < 3600.0, format!("measured wall time {secs:.1}s (< 60 min)"));
    check.finish();
}

// ── 4. Final sample size ────────────────────────────────────────────────────

#[test]
fn c4_refine_final_sample_size() {
    let mut check = Check::new("criterion 4 (final N)");
    let grid = refine_grid();
    let flat = flat_scenario(&grid, 0.65).unwrap();

    // power at the design's final N of 1750 under the bootstrap analysis
    let mc = MCConfig::bootstrap(500, 1000, DecisionRule::MaxPreferredPassing, 47);
    let counts = run_replicates(&flat, &grid, 1750, &refine_margin(), &mc).unwrap();
    let perf = performance(&counts, &flat, &grid, &refine_margin()).unwrap();
    let p = perf.optimal_power.value;
    check.assert(
        (0.73..=0.86).contains(&p),
        format!("bootstrap optimal power at N=1750: {p:.4} in [0.73, 0.86]"),
    );

    // full pipeline on the shipped design: grid -> loess -> recommend ->
    // bootstrap validate -> inflate 10% -> round up on the 50-grid
    let cfg = roci_cli::config::RunConfig::load(&refine_config_path()).unwrap();
    let resolved = cfg.resolve().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut rec = roci_cli::manifest::RunRecorder::new(dir.path(), "samplesize").unwrap();
    let run = roci_cli::commands::cmd_samplesize(&resolved, &mut rec).unwrap();
    check.assert(
        (1500..=1600).contains(&run.recommended_n),
        format!(
            "pipeline recommendation {} in [1500, 1600] (smoothed delta curve reaches the \
             0.80 target near N=1620 in this engine, so the recommendation lands at 1650; \
             the documented inflate-and-round arithmetic maps 1550 -> 1750)",
            run.recommended_n
        ),
    );
    check.assert(
        run.result.final_n == 1750,
        format!(
            "pipeline final N {} == 1750 (validation power {:.4}, inflated power {:.4})",
            run.result.final_n, run.result.validation_power.value, run.result.final_power.value
        ),
    );
    check.finish();
}

// ── 5. Type I error on the margin scenarios ─────────────────────────────────

#[test]
fn c5_type_i_error_margin_scenarios() {
    let mut check = Check::new("criterion 5 (type I error at N=1750)");
    let grid = refine_grid();
    let margin = refine_margin();
    for scenario in margin_scenarios(&grid, 0.65, 0.88, 4).unwrap() {
        let mc = MCConfig::bootstrap(500, 1000, DecisionRule::MaxPreferredPassing, 47);
        let counts = run_replicates(&scenario, &grid, 1750, &margin, &mc).unwrap();
        let perf = performance(&counts, &scenario, &grid, &margin).unwrap();
        let t1 = perf.type1_error.value;
        let note = if scenario.name == "margin_k4" && t1 > 0.07 {
            " (step-shaped truth: the smooth curve pulls the fitted extreme-arm risk ratio \
             above its true on-margin value, inflating the error rate; the unsmoothed \
             two-sample test on the same data holds 5%)"
        } else {
            ""
        };
        check.assert(
            t1 <= 0.07,
            format!("{}: type I error {t1:.4} <= 0.07{note}", scenario.name),
        );
    }
    check.finish();
}

// ── 6. Interim formula and simulation ───────────────────────────────────────

#[test]
fn c6_interim_events_and_power() {
    let mut check = Check::new("criterion 6 (interim design)");
    let base = InterimSpec {
        p0: 0.5,
        p1: 0.3,
        alpha: 0.05,
        sided: Sided::Two,
        power: 0.8,
        allocation: 0.5,
        tau: 18.0,
    };
    let one = InterimSpec {
        sided: Sided::One,
        ..base
    };

    let d_two = schoenfeld_events(&base).unwrap();
    let (n_two, _) = events_to_n(d_two, 0.5, 0.3, 0.5);
    check.assert(
        d_two == 72 && n_two == 180,
        format!("two-sided: D={d_two} (want 72), n={n_two} (want 180)"),
    );

    let d_one = schoenfeld_events(&one).unwrap();
    let (n_one, _) = events_to_n(d_one, 0.5, 0.3, 0.5);
    let raw_one = schoenfeld_events_exact(&one).unwrap();
    check.assert(
        d_one == 56 && n_one == 140,
        format!(
            "one-sided: D={d_one}, n={n_one} (documented design values are D=56/n=140, but \
             the stated formula evaluates to {raw_one:.4}, whose ceiling is {}; the \
             documented 56 traces to an arithmetic slip — (ln 0.514573)^2 is 0.441451, \
             not the 0.441664 used to derive it)",
            raw_one.ceil() as u64
        ),
    );

    // simulated log-rank power at the documented sizes
    let p_two = simulate_logrank_power(&base, 180, 4000, 61).unwrap();
    check.assert(
        (p_two - 0.80).abs() <= 0.03,
        format!("simulated two-sided power at n=180: {p_two:.4} within 0.80 +/- 0.03"),
    );
    let p_one = simulate_logrank_power(&one, 140, 4000, 61).unwrap();
    check.assert(
        (p_one - 0.80).abs() <= 0.03,
        format!("simulated one-sided power at n=140: {p_one:.4} within 0.80 +/- 0.03"),
    );

    // null calibration
    let null = InterimSpec {
        p1: 0.5 + 1e-12,
        ..base
    };
    let p_null = simulate_logrank_power(&null, 180, 4000, 62).unwrap();
    check.assert(
        (p_null - 0.05).abs() <= 0.015,
        format!("null rejection rate {p_null:.4} within 0.05 +/- 0.015"),
    );

    // the planned ~150 interim size must fall between the two conventions,
    // and the interim command must say so on the shipped design
    let bracket = (n_one.min(n_two)..=n_one.max(n_two)).contains(&150);
    check.assert(
        bracket,
        format!("planned 150 bracketed by one-sided {n_one} and two-sided {n_two}"),
    );
    let cfg_text = std::fs::read_to_string(refine_config_path())
        .unwrap()
        .replace("oracle_nsim = 4000", "oracle_nsim = 0");
    let cfg = roci_cli::config::RunConfig::from_toml_str(&cfg_text).unwrap();
    let resolved = cfg.resolve().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut rec = roci_cli::manifest::RunRecorder::new(dir.path(), "interim").unwrap();
    let run = roci_cli::commands::cmd_interim(&resolved, &mut rec).unwrap();
    check.assert(
        run.notes.iter().any(|n| n.contains("150")),
        format!("interim command documents the discrepancy: {:?}", run.notes),
    );
    check.finish();
}

// ── 7. Oracle equivalences ──────────────────────────────────────────────────

#[test]
fn c7_oracle_equivalences() {
    let mut check = Check::new("criterion 7 (oracle equivalences)");
    let controls = FitControls::default();

    // IRLS vs an independent Newton solver on a saturated 3-arm problem
    {
        let grid = ArmGrid::new(&[6.0, 12.0, 18.0], 0, Preference::PreferHigh).unwrap();
        let data = TrialDataset::new(grid, vec![50, 50, 50], vec![30, 25, 20]).unwrap();
        let powers = roci_core::fp::PowerPair::new(0.0, 1.0).unwrap();
        let model = fit_glm(&data, powers, 18.0, &controls).unwrap();
        let design: Vec<Vec<f64>> = data
            .grid
            .values()
            .iter()
            .map(|&x| model.design_row(x).unwrap().to_vec())
            .collect();
        let mut beta = vec![0.0f64; 3];
        for _ in 0..100 {
            let mut grad = vec![0.0f64; 3];
            let mut info = vec![0.0f64; 9];
            for j in 0..3 {
                let eta: f64 = design[j].iter().zip(&beta).map(|(z, b)| z * b).sum();
                let pi = expit(eta);
                let w = data.n[j] as f64 * pi * (1.0 - pi);
                let r = data.events[j] as f64 - data.n[j] as f64 * pi;
                for a in 0..3 {
                    grad[a] += design[j][a] * r;
                    for b in 0..3 {
                        info[a * 3 + b] += design[j][a] * w * design[j][b];
                    }
                }
            }
            // solve info * step = grad by elimination
            let mut m = [[0.0f64; 4]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    m[a][b] = info[a * 3 + b];
                }
                m[a][3] = grad[a];
            }
            for col in 0..3 {
                let piv = (col..3).max_by(|&i, &j| {
                    m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()
                }).unwrap();
                m.swap(col, piv);
                for row in (col + 1)..3 {
                    let f = m[row][col] / m[col][col];
                    for k in col..4 {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
            let mut step = [0.0f64; 3];
            for i in (0..3).rev() {
                let mut s = m[i][3];
                for j in (i + 1)..3 {
                    s -= m[i][j] * step[j];
                }
                step[i] = s / m[i][i];
            }
            for a in 0..3 {
                beta[a] += step[a];
            }
            if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-13 {
                break;
            }
        }
        let max_diff = (0..3)
            .map(|r| (model.beta[r] - beta[r]).abs())
            .fold(0.0f64, f64::max);
        check.assert(
            model.converged && max_diff <= 1e-8,
            format!("IRLS vs Newton max |beta diff| = {max_diff:.2e} (<= 1e-8)"),
        );
    }

    // delta-method variance vs the closed-form two-sample log-RR variance
    {
        let design = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let fit = fit_logistic(&design, &[20, 20], &[13, 13], &controls);
        let pi = 0.65;
        let g = [(1.0 - pi) - (1.0 - pi), 1.0 - pi];
        let mut var = 0.0;
        for r in 0..2 {
            for s in 0..2 {
                var += g[r] * fit.cov[r * 2 + s] * g[s];
            }
        }
        let closed = 2.0 * (1.0 - pi) / (20.0 * pi);
        let rel = ((var - closed) / closed).abs();
        check.assert(
            fit.converged && rel <= 1e-6,
            format!("delta vs two-sample variance: relative diff {rel:.2e} (<= 1e-6)"),
        );
    }

    // deviance invariance under x-scaling
    {
        let grid = refine_grid();
        let data =
            TrialDataset::new(grid, vec![200; 5], vec![180, 160, 130, 100, 80]).unwrap();
        let mut worst = 0.0f64;
        for powers in enumerate_fp2() {
            let a = fit_glm(&data, powers, 18.0, &controls).unwrap();
            let b = fit_glm(&data, powers, 6.0, &controls).unwrap();
            if a.converged && b.converged {
                worst = worst.max((a.deviance - b.deviance).abs());
            }
        }
        check.assert(
            worst <= 1e-6,
            format!("deviance x-scaling invariance: max |diff| = {worst:.2e} (<= 1e-6)"),
        );
    }

    // score equations at the fitted optimum
    {
        let grid = refine_grid();
        let data =
            TrialDataset::new(grid, vec![200; 5], vec![180, 160, 130, 100, 80]).unwrap();
        let model = select_best(&data, 18.0, &controls).unwrap();
        let mut worst = 0.0f64;
        let mut score = [0.0f64; 3];
        for (j, &x) in data.grid.values().iter().enumerate() {
            let z = model.design_row(x).unwrap();
            let pi = model.predict_risk(x).unwrap();
            let r = data.events[j] as f64 - data.n[j] as f64 * pi;
            for a in 0..3 {
                score[a] += z[a] * r;
            }
        }
        for s in score {
            worst = worst.max(s.abs());
        }
        check.assert(
            worst <= 1e-8,
            format!("score equations at the optimum: max |score| = {worst:.2e} (<= 1e-8)"),
        );
    }

    // loess linear reproduction
    {
        let points: Vec<(f64, f64)> = (0..21)
            .map(|i| {
                let x = 1000.0 + 50.0 * i as f64;
                (x, 0.0003 * x + 0.1)
            })
            .collect();
        let out: Vec<f64> = (0..101).map(|i| 1000.0 + 10.0 * i as f64).collect();
        let mut worst = 0.0f64;
        for span in [0.3, 0.75, 1.0] {
            let smooth = loess_smooth(&points, span, &out).unwrap();
            for (x, y) in out.iter().zip(&smooth) {
                worst = worst.max((y - (0.0003 * x + 0.1)).abs());
            }
        }
        check.assert(
            worst <= 1e-10,
            format!("loess linear reproduction: max |err| = {worst:.2e} (<= 1e-10)"),
        );
    }

    // log-rank hand example: control events at t=1,2; experimental at t=3,4
    {
        let mut obs = vec![
            (1.0, true, true),
            (2.0, true, true),
            (3.0, true, false),
            (4.0, true, false),
        ];
        let z = logrank_z(&mut obs).unwrap();
        let hand = 7.0 / 17.0f64.sqrt();
        check.assert(
            (z - hand).abs() <= 1e-12,
            format!("log-rank hand example: |Z - 7/sqrt(17)| = {:.2e} (<= 1e-12)", (z - hand).abs()),
        );
    }

    check.finish();
}

// ── 8. Determinism ──────────────────────────────────────────────────────────

#[test]
fn c8_fingerprint_determinism() {
    let mut check = Check::new("criterion 8 (determinism)");
    let smoke = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.cfg");
    let max_workers = std::thread::available_parallelism().map_or(4, |n| n.get());

    let run_simulate = |workers: usize| {
        let dir = tempfile::tempdir().unwrap();
        let cli = roci_cli::Cli {
            command: roci_cli::Command::Simulate {
                common: roci_cli::CommonOpts {
                    config: smoke.clone(),
                    out: Some(dir.path().to_path_buf()),
                    workers: Some(workers),
                    seed: None,
                },
                scenarios: None,
                n: vec![400, 600],
            },
        };
        roci_cli::run(&cli).unwrap().fingerprint
    };
    let a = run_simulate(1);
    let b = run_simulate(max_workers);
    let c = run_simulate(max_workers);
    check.assert(
        a == b && b == c,
        format!("simulate fingerprints identical across reruns and 1 vs {max_workers} workers"),
    );

    let run_samplesize = |workers: usize| {
        let dir = tempfile::tempdir().unwrap();
        let cli = roci_cli::Cli {
            command: roci_cli::Command::Samplesize {
                common: roci_cli::CommonOpts {
                    config: smoke.clone(),
                    out: Some(dir.path().to_path_buf()),
                    workers: Some(workers),
                    seed: None,
                },
            },
        };
        roci_cli::run(&cli).unwrap().fingerprint
    };
    let a = run_samplesize(1);
    let b = run_samplesize(max_workers);
    check.assert(
        a == b,
        "samplesize fingerprints identical across 1 vs max workers".to_string(),
    );
    check.finish();
}
