use roci_core::inference::DecisionRule;
use roci_core::mc::{performance, run_replicates, MCConfig};
use roci_core::trial::{flat_scenario, margin_scenarios, ArmGrid, Margin, Preference};
use std::time::Instant;

fn main() {
    let grid = ArmGrid::new(&[6.0, 9.0, 12.0, 15.0, 18.0], 0, Preference::PreferHigh).unwrap();
    let margin = Margin::new(0.88, 0.05).unwrap();
    let flat = flat_scenario(&grid, 0.65).unwrap();
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("delta");

    match mode {
        "delta" => {
            // delta power across N grid, nsim=1000
            for seed in [20260811u64, 1, 2] {
                let t = Instant::now();
                let mut line = format!("seed {seed}: ");
                for n in [1000u64, 1200, 1400, 1500, 1550, 1600, 1750, 2000] {
                    let mc = MCConfig::delta(1000, DecisionRule::MaxPreferredPassing, seed);
                    let counts = run_replicates(&flat, &grid, n, &margin, &mc).unwrap();
                    let perf = performance(&counts, &flat, &grid, &margin).unwrap();
                    line += &format!("{n}:{:.3} ", perf.optimal_power.value);
                }
                println!("{line} [{:.1?}]", t.elapsed());
            }
        }
        "boot" => {
            let n: u64 = args[2].parse().unwrap();
            let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(20260811);
            let t = Instant::now();
            let mc = MCConfig::bootstrap(500, 1000, DecisionRule::MaxPreferredPassing, seed);
            let counts = run_replicates(&flat, &grid, n, &margin, &mc).unwrap();
            let perf = performance(&counts, &flat, &grid, &margin).unwrap();
            println!(
                "bootstrap N={n} seed={seed}: optimal={:.4} [{:.4},{:.4}] failures={} [{:.1?}]",
                perf.optimal_power.value,
                perf.optimal_power.lo,
                perf.optimal_power.hi,
                perf.diag_failures,
                t.elapsed()
            );
        }
        "type1" => {
            let n: u64 = args[2].parse().unwrap();
            let seed: u64 = 20260811;
            for s in margin_scenarios(&grid, 0.65, 0.88, 4).unwrap() {
                let t = Instant::now();
                let mc = MCConfig::bootstrap(500, 1000, DecisionRule::MaxPreferredPassing, seed);
                let counts = run_replicates(&s, &grid, n, &margin, &mc).unwrap();
                let perf = performance(&counts, &s, &grid, &margin).unwrap();
                println!(
                    "{}: type1={:.4} optimal={:.4} [{:.1?}]",
                    s.name, perf.type1_error.value, perf.optimal_power.value, t.elapsed()
                );
            }
        }

        "dist" => {
            let n: u64 = args[2].parse().unwrap();
            let scens = {
                let mut v = vec![flat.clone()];
                v.extend(margin_scenarios(&grid, 0.65, 0.88, 4).unwrap());
                v
            };
            for s in &scens {
                let mc = MCConfig::delta(1000, DecisionRule::MaxPreferredPassing, 20260811);
                let counts = run_replicates(&s, &grid, n, &margin, &mc).unwrap();
                let perf = performance(&counts, &s, &grid, &margin).unwrap();
                println!(
                    "{:10} N={} delta dist={:?} type1={:.3} acc={:.3}",
                    s.name, n, perf.selection_dist, perf.type1_error.value, perf.acceptable_power.value
                );
            }
        }

        "k4diag" => {
            use roci_core::inference::{rr_delta, AnalysisOptions, Method};
            use roci_core::fp::{select_best, FitControls};
            use roci_core::mc::simulate_dataset;
            use roci_core::rng::stream;
            let n: u64 = args[2].parse().unwrap();
            let s = margin_scenarios(&grid, 0.65, 0.88, 4).unwrap().into_iter().last().unwrap();
            let c = FitControls::default();
            let mut rrs = Vec::new();
            let mut bounds = Vec::new();
            let mut devs = Vec::new();
            let mut hits2samp = 0;
            for rep in 0..1000u64 {
                let mut rng = stream(42, &[rep]);
                let data = simulate_dataset(&s, &grid, n, &mut rng).unwrap();
                let model = select_best(&data, 18.0, &c).unwrap();
                let inf = rr_delta(&model, &grid, 0.05).unwrap();
                rrs.push(inf[4].rr_hat);
                bounds.push(inf[4].lower_bound);
                devs.push(model.deviance);
                // two-sample oracle test on raw proportions
                let y18 = data.events[4] as f64 / data.n[4] as f64;
                let y6 = data.events[0] as f64 / data.n[0] as f64;
                let rr2 = y18 / y6;
                let se2 = ((1.0-y18)/(data.n[4] as f64*y18) + (1.0-y6)/(data.n[0] as f64*y6)).sqrt();
                if rr2 * (-1.6448536269514722*se2).exp() > 0.88 { hits2samp += 1; }
            }
            let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
            let sd = |v: &Vec<f64>| { let m = mean(v); (v.iter().map(|x| (x-m)*(x-m)).sum::<f64>()/(v.len() as f64-1.0)).sqrt() };
            let size = bounds.iter().filter(|&&b| b > 0.88).count() as f64 / 1000.0;
            println!("k4 N={n}: rr_hat(18) mean={:.4} sd={:.4}; bound mean={:.4} sd={:.4}; model size={:.3}; 2-sample size={:.3}; mean dev={:.2}",
                mean(&rrs), sd(&rrs), mean(&bounds), sd(&bounds), size, hits2samp as f64/1000.0, mean(&devs));
        }

        "suite" => {
            use roci_core::samplesize::{power_grid, recommend_n, smooth_curve};
            let seed: u64 = args[2].parse().unwrap();
            let n_values: Vec<u64> = (1000..=2000).step_by(50).collect();
            let mc = MCConfig::delta(1000, DecisionRule::MaxPreferredPassing, seed);
            let points = power_grid(&flat, &grid, &margin, &n_values, &mc).unwrap();
            let curve = smooth_curve(&points, 0.75, 10).unwrap();
            let rec = recommend_n(&curve, 0.80, 50);
            let p1550 = points.iter().find(|p| p.n == 1550).unwrap().power;
            let bmc = |n: u64| {
                let mc = MCConfig::bootstrap(500, 1000, DecisionRule::MaxPreferredPassing, seed);
                let counts = run_replicates(&flat, &grid, n, &margin, &mc).unwrap();
                performance(&counts, &flat, &grid, &margin).unwrap().optimal_power.value
            };
            let b1550 = bmc(1550);
            let b1750 = bmc(1750);
            println!("seed {seed}: delta1550={p1550:.3} recommend={rec:?} boot1550={b1550:.3} boot1750={b1750:.3}");
        }

        "crossing" => {
            use roci_core::samplesize::{power_grid, recommend_n, smooth_curve};
            let nsim: u64 = args[2].parse().unwrap();
            let seed: u64 = args[3].parse().unwrap();
            let n_values: Vec<u64> = (1000..=2000).step_by(50).collect();
            let mc = MCConfig::delta(nsim, DecisionRule::MaxPreferredPassing, seed);
            let points = power_grid(&flat, &grid, &margin, &n_values, &mc).unwrap();
            let raw: Vec<String> = points.iter().map(|p| format!("{}:{:.3}", p.n, p.power)).collect();
            println!("nsim={nsim} seed={seed} raw: {}", raw.join(" "));
            for span in [0.5, 0.75, 1.0] {
                let curve = smooth_curve(&points, span, 10).unwrap();
                let rec = recommend_n(&curve, 0.80, 50);
                let s1550 = curve.smoothed.iter().find(|(n, _)| *n == 1550).unwrap().1;
                let cross = curve.smoothed.iter().find(|(_, p)| *p >= 0.80).map(|(n, _)| *n);
                println!("  span {span}: smooth(1550)={s1550:.4} dense crossing={cross:?} recommend={rec:?}");
            }
        }

        "se1550" => {
            use roci_core::inference::rr_delta;
            use roci_core::fp::{select_best, FitControls};
            use roci_core::mc::simulate_dataset;
            use roci_core::rng::stream;
            let c = FitControls::default();
            let mut rrs = Vec::new();
            let mut ses = Vec::new();
            for rep in 0..2000u64 {
                let mut rng = stream(1234, &[rep]);
                let data = simulate_dataset(&flat, &grid, 1550, &mut rng).unwrap();
                let model = select_best(&data, 18.0, &c).unwrap();
                if !model.converged { continue; }
                let inf = rr_delta(&model, &grid, 0.05).unwrap();
                let lr = inf[4].rr_hat.ln();
                rrs.push(lr);
                // back out sigma from bound: lb = exp(lr - 1.6449 sigma)
                let sigma = (lr - inf[4].lower_bound.ln()) / 1.6448536269514722;
                ses.push(sigma);
            }
            let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
            let sd = |v: &Vec<f64>| { let m = mean(v); (v.iter().map(|x| (x-m)*(x-m)).sum::<f64>()/(v.len() as f64-1.0)).sqrt() };
            println!("flat N=1550: E[logRR18]={:.5} SD[logRR18]={:.5} E[SE18]={:.5}", mean(&rrs), sd(&rrs), mean(&ses));
            println!("two-sample SE would be {:.5}", (2.0f64*0.35/(310.0*0.65)).sqrt());
            println!("z needed: ln(1/0.88)={:.5}", (1.0f64/0.88).ln());
        }

        "type1seed" => {
            let n: u64 = args[2].parse().unwrap();
            let seed: u64 = args[3].parse().unwrap();
            for s in margin_scenarios(&grid, 0.65, 0.88, 4).unwrap() {
                let mc = MCConfig::bootstrap(500, 1000, DecisionRule::MaxPreferredPassing, seed);
                let counts = run_replicates(&s, &grid, n, &margin, &mc).unwrap();
                let perf = performance(&counts, &s, &grid, &margin).unwrap();
                println!("seed {seed} {}: type1={:.4}", s.name, perf.type1_error.value);
            }
        }
        _ => eprintln!("unknown mode"),
    }
}
