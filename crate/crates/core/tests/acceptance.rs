//! Acceptance suite. Each criterion runs at its stated tolerance and prints
//! one PASS/FAIL line; the process fails if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use scorescope::blocked::{analyze_blocked, simulate_blocked, BlockedDesign, BlockedSimConfig};
use scorescope::construction::{bias_severity, BiasConfig, Severity};
use scorescope::experiments::{
    disagreement, impacted_traffic_curve, impacted_traffic_curve_exact, max_disagreement,
    max_disagreement_in, monte_carlo_power, parse_grid_exact, replicate_paired_experiment,
    required_sample_size, JointCorrectness, PairedSimConfig,
};
use scorescope::ingest::{PairedPrediction, ScoreRecord};
use scorescope::monitor::{windowed_rdcs, MonitorConfig};
use scorescope::rdc::{build_rdc, diagnose, DiagnosisConfig, Pattern};
use scorescope::stats::seeded_rng;
use scorescope::synth::{self, Family};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Best P(exactly one correct) over joint distributions with marginals a, b,
/// searching P(both correct) on a 1e-4 lattice in integer units.
fn brute_force_disagreement(a: f64, b: f64) -> f64 {
    let (au, bu) = ((a * 1e4).round() as i64, (b * 1e4).round() as i64);
    let lo = (au + bu - 10_000).max(0);
    let hi = au.min(bu);
    (lo..=hi).map(|both| au + bu - 2 * both).max().expect("feasible") as f64 / 1e4
}

/// Exact value of a finite double in (0, 1].
fn exact_ratio(x: f64) -> Ratio<i128> {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let mantissa = (bits & ((1 << 52) - 1)) as i128 | (1 << 52);
    // x = mantissa * 2^(exp - 1075)
    let shift = 1075 - exp;
    assert!(exp > 0 && (0..=120).contains(&shift), "{x}");
    Ratio::new(mantissa, 1i128 << shift)
}

fn c1_worked_example() -> Check {
    let exact = max_disagreement_in(Ratio::new(8i64, 10), Ratio::new(9, 10));
    if exact != Ratio::new(3, 10) {
        return Err(format!("exact bound {exact}"));
    }
    // Counted from predictions: A right on 800 of 1000, B fixes all 200 of
    // A's errors and breaks 100 of its successes.
    let pairs: Vec<PairedPrediction> = (0..1000)
        .map(|i| {
            let y = i % 2 == 0;
            let (a_ok, b_ok) = match i {
                i if i < 200 => (false, true),
                i if i < 300 => (true, false),
                _ => (true, true),
            };
            let s = |ok: bool| if ok == y { 0.9 } else { 0.1 };
            PairedPrediction {
                entity_id: i.to_string(),
                pred_a: s(a_ok),
                pred_b: s(b_ok),
                true_label: Some(y),
            }
        })
        .collect();
    let r = disagreement(&pairs, 0.5).map_err(|e| e.to_string())?;
    let from_counts = r.max_disagreement == Some(0.3) && r.n_disagree == 300;
    // The f64 entry point must equal the correctly rounded exact bound of
    // the binary inputs it actually receives.
    let (a, b) = (0.8f64, 0.9f64);
    let exact_binary = max_disagreement_in(
        exact_ratio(a),
        exact_ratio(b),
    );
    let f = max_disagreement(a, b).map_err(|e| e.to_string())?;
    let rounded = f == exact_binary.to_f64().unwrap();
    ensure(
        from_counts && rounded,
        format!(
            "rational 3/10; from counts {:?} (n_disagree {}); f64 {f} correctly rounded: {rounded}",
            r.max_disagreement, r.n_disagree
        ),
    )
}

fn c2_oracle_equivalence() -> Check {
    let mut worst = 0.0f64;
    for i in 50..=100 {
        for j in 50..=100 {
            let (a, b) = (i as f64 / 100.0, j as f64 / 100.0);
            let d = max_disagreement(a, b).map_err(|e| e.to_string())?;
            worst = worst.max((d - brute_force_disagreement(a, b)).abs());
        }
    }
    ensure(worst <= 1e-12, format!("2601 grid points, max |diff| = {worst:e}"))
}

fn c3_curve_monotone() -> Check {
    let mut checked = 0;
    for i in 50..=100 {
        let baseline = Ratio::new(i as i64, 100);
        let grid = parse_grid_exact(&format!("{}:1:0.01", i as f64 / 100.0)).map_err(|e| e.to_string())?;
        let exact = impacted_traffic_curve_exact(baseline, &grid).map_err(|e| e.to_string())?;
        let floats: Vec<f64> = grid.iter().map(|g| g.to_f64().unwrap()).collect();
        let plain = impacted_traffic_curve(i as f64 / 100.0, &floats).map_err(|e| e.to_string())?;
        for curve in [&exact, &plain] {
            if !curve.windows(2).all(|w| w[1].upper_bound < w[0].upper_bound) {
                return Err(format!("not strictly decreasing for baseline {baseline}"));
            }
        }
        checked += exact.len();
    }
    let end = impacted_traffic_curve(1.0, &[1.0]).map_err(|e| e.to_string())?[0].upper_bound;
    ensure(end == 0.0, format!("{checked} points strictly decreasing; bound at (1, 1) = {end}"))
}

fn family_hits(family: Family, n: usize, want: Pattern) -> usize {
    let cfg = DiagnosisConfig::default();
    (1..=50u64)
        .into_par_iter()
        .filter(|&seed| {
            let rdc = build_rdc(&synth::scores(family, n, seed), 100).unwrap();
            diagnose(&rdc, &cfg).unwrap().pattern == want
        })
        .count()
}

fn c4_pathology_suite() -> Check {
    let cases = [
        ("bimodal", Family::Bimodal, 10_000, Pattern::HealthyBimodal),
        ("beta(5,5)", Family::Central, 10_000, Pattern::CentralUnimodal),
        ("spike", Family::Spike, 10_000, Pattern::ExtremeSpike),
        ("noise200", Family::Noise, 200, Pattern::Noisy),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, family, n, want) in cases {
        let hits = family_hits(family, n, want);
        ok &= hits * 100 >= 95 * 50;
        parts.push(format!("{name} {hits}/50"));
    }
    ensure(ok, parts.join(", "))
}

fn c5_threshold_band() -> Check {
    let cfg = DiagnosisConfig::default();
    let inside = (1..=50u64)
        .into_par_iter()
        .filter(|&seed| {
            let rdc = build_rdc(&synth::scores(Family::Bimodal, 10_000, seed), 100).unwrap();
            diagnose(&rdc, &cfg)
                .unwrap()
                .threshold_band
                .is_some_and(|b| (0.45..=0.55).contains(&b.recommended))
        })
        .count();
    ensure(inside * 100 >= 95 * 50, format!("recommended in [0.45, 0.55] for {inside}/50 seeds"))
}

fn bias_fixture(seed: u64, median_split: bool) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = seeded_rng(seed);
    let rows: Vec<Vec<f64>> = (0..2000)
        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>() * 10.0 - 5.0])
        .collect();
    let has_label = if median_split {
        let mut x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        x.sort_by(f64::total_cmp);
        let median = 0.5 * (x[999] + x[1000]);
        rows.iter().map(|r| u8::from(r[0] > median)).collect()
    } else {
        (0..2000).map(|_| u8::from(rng.random_bool(0.5))).collect()
    };
    (rows, has_label)
}

fn c6_bias_calibration() -> Check {
    let severities = |median_split: bool| -> Vec<Severity> {
        (1..=50u64)
            .map(|seed| {
                let (rows, y) = bias_fixture(seed, median_split);
                let cfg = BiasConfig {
                    seed,
                    ..BiasConfig::default()
                };
                bias_severity(&rows, &y, &cfg).unwrap().severity
            })
            .collect()
    };
    let none = severities(false).iter().filter(|s| **s == Severity::None).count();
    let severe = severities(true).iter().filter(|s| **s == Severity::Severe).count();
    ensure(
        none * 100 >= 95 * 50 && severe == 50,
        format!("independent: NONE {none}/50; median split: SEVERE {severe}/50"),
    )
}

fn c7_power_monte_carlo() -> Check {
    let r = required_sample_size(0.10, 0.02, 0.05, 0.8, 1.0).map_err(|e| e.to_string())?;
    let reps = 20_000;
    let p = monte_carlo_power(0.10, 0.12, 0.05, r.n_per_arm, reps, 20_240_601).map_err(|e| e.to_string())?;
    ensure(
        (p - 0.8).abs() <= 0.02,
        format!("n_per_arm {}; simulated power {p:.4} over {reps} replications", r.n_per_arm),
    )
}

fn c8_routing_simulator() -> Check {
    let (only_a, only_b, n_users, runs) = (0.1, 0.2, 20_000u64, 1000usize);
    let config = PairedSimConfig {
        n_users,
        joint: JointCorrectness {
            both: 0.65,
            only_a,
            only_b,
            neither: 0.05,
        },
        cvr_correct: 0.11,
        cvr_wrong: 0.11,
        alpha: 0.05,
        seed: 7_000,
    };
    let out = replicate_paired_experiment(&config, runs).map_err(|e| e.to_string())?;
    let rejected = out.iter().filter(|o| o.rejected_null).count() as f64 / runs as f64;
    let p = only_a + only_b;
    let total_users = (n_users * runs as u64) as f64;
    let enrolled: u64 = out.iter().map(|o| o.enrolled).sum();
    let frac = enrolled as f64 / total_users;
    let sigma = (p * (1.0 - p) / total_users).sqrt();
    let per_run_sigma = (p * (1.0 - p) / n_users as f64).sqrt();
    let worst_run = out
        .iter()
        .map(|o| (o.enrolled as f64 / n_users as f64 - p).abs() / per_run_sigma)
        .fold(0.0, f64::max);
    ensure(
        (rejected - 0.05).abs() <= 0.02 && (frac - p).abs() <= 3.0 * sigma,
        format!(
            "type-I {rejected:.3} over {runs} runs; enrolled fraction {frac:.5} vs {p} ({:.2} sigma; worst single run {worst_run:.2} sigma)",
            (frac - p) / sigma
        ),
    )
}

fn c9_blocked_coverage() -> Check {
    let (penalty, effect, runs) = (-0.005, 0.010, 1000u64);
    let results: Vec<(bool, bool, bool)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let cfg = BlockedSimConfig {
                n_users: 100_000,
                base_cvr: 0.10,
                latency_penalty: penalty,
                feature_effect: effect,
                design: BlockedDesign::default(),
                seed: 90_000 + i,
            };
            let a = analyze_blocked(&simulate_blocked(&cfg).unwrap()).unwrap();
            let additive = a.total_effect.estimate - (a.perf_effect.estimate + a.feature_effect.estimate) == 0.0;
            (a.perf_effect.covers(penalty), a.feature_effect.covers(effect), additive)
        })
        .collect();
    let perf = results.iter().filter(|r| r.0).count() as f64 / runs as f64;
    let feat = results.iter().filter(|r| r.1).count() as f64 / runs as f64;
    let additive = results.iter().all(|r| r.2);
    ensure(
        (perf - 0.95).abs() <= 0.02 && (feat - 0.95).abs() <= 0.02 && additive,
        format!("coverage perf {perf:.3}, feature {feat:.3}; additivity exact on all runs: {additive}"),
    )
}

fn c10_streaming_batch() -> Check {
    // two interleaved models, 100 000 records in total
    let a = synth::records("a", Family::Bimodal, 59_950, 1);
    let b = synth::records("b", Family::Central, 40_050, 2);
    let mut stream: Vec<ScoreRecord> = a.into_iter().chain(b).collect();
    stream.shuffle(&mut seeded_rng(3));
    let config = MonitorConfig::default();
    let run = windowed_rdcs(&stream, &config).map_err(|e| e.to_string())?;

    let mut compared = 0;
    for model in ["a", "b"] {
        let scores: Vec<f64> = stream.iter().filter(|r| r.model_id == model).map(|r| r.score).collect();
        let windows: Vec<_> = run.windows.iter().filter(|w| w.model_id == model).collect();
        let chunks: Vec<&[f64]> = scores
            .chunks(config.window_size)
            .filter(|c| c.len() as u64 >= config.diagnosis.min_samples)
            .collect();
        if windows.len() != chunks.len() {
            return Err(format!("model {model}: {} windows vs {} chunks", windows.len(), chunks.len()));
        }
        for (w, chunk) in windows.iter().zip(chunks) {
            let rdc = build_rdc(chunk, config.bins).map_err(|e| e.to_string())?;
            let d = diagnose(&rdc, &config.diagnosis).map_err(|e| e.to_string())?;
            if w.rdc != rdc || w.diagnosis != d {
                return Err(format!("model {model} window {} differs", w.window_index));
            }
            compared += 1;
        }
        let covered: u64 = windows.iter().map(|w| w.size).sum::<u64>() + run.dropped[model];
        if covered != scores.len() as u64 {
            return Err(format!("model {model}: partition covers {covered} of {}", scores.len()));
        }
    }
    ensure(compared > 0, format!("{compared} windows identical to batch diagnosis"))
}

fn run_cli(args: &[&str], dir: &Path) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_scorescope"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn write_fixtures(dir: &Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut log = std::fs::File::create(dir.join("scores.jsonl"))?;
    let mut recs = synth::records("m1", Family::Bimodal, 3000, 5);
    recs.extend(synth::records("m2", Family::Central, 2500, 6));
    for r in &recs {
        writeln!(log, "{}", serde_json::to_string(r).unwrap())?;
    }

    let mut rng = seeded_rng(8);
    let mut table = String::from("x1,x2,target,available\n");
    for i in 0..300 {
        let (x1, x2): (f64, f64) = (rng.random(), rng.random());
        let available = u8::from(x1 > 0.3);
        let target = if available == 1 { u8::from(x2 + 0.3 * rng.random::<f64>() > 0.6).to_string() } else { String::new() };
        table.push_str(&format!("{x1},{x2},{target},{available}\n"));
        let _ = i;
    }
    std::fs::write(dir.join("table.csv"), table)?;

    let mut paired = String::from("entity_id,pred_a,pred_b,label\n");
    for i in 0..500 {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        paired.push_str(&format!("e{i},{a},{b},{}\n", u8::from(rng.random_bool(0.5))));
    }
    std::fs::write(dir.join("paired.csv"), paired)?;
    Ok(())
}

fn c11_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_fixtures(dir.path()).map_err(|e| e.to_string())?;
    let (code, _) = run_cli(
        &["blocked", "simulate", "--n-users", "3000", "--outcomes", "outcomes.csv", "--seed", "3"],
        dir.path(),
    )?;
    if code != 0 {
        return Err(format!("fixture generation exited {code}"));
    }
    let commands: Vec<Vec<&str>> = vec![
        vec!["rdc", "--input", "scores.jsonl", "--svg", "chart.svg"],
        vec!["bias", "--input", "table.csv", "--availability-column", "available", "--exclude", "target", "--permutations", "30"],
        vec!["setup", "--input", "table.csv", "--target", "target", "--availability-column", "available", "--permutations", "30"],
        vec!["disagree", "--input", "paired.csv"],
        vec!["power", "--p-control", "0.1", "--mde", "0.02", "--disagreement", "0.3", "--monte-carlo", "500"],
        vec!["curve", "--baseline", "0.8", "--grid", "0.8:1.0:0.01", "--svg", "curve.svg"],
        vec!["blocked", "simulate", "--n-users", "5000", "--latency-penalty", "-0.01"],
        vec!["blocked", "analyze", "--input", "outcomes.csv"],
        vec!["watch", "--input", "scores.jsonl", "--window-size", "500"],
        vec!["synth", "--family", "spike", "--n", "1000"],
    ];
    let mut names = Vec::new();
    for cmd in &commands {
        let mut args = cmd.clone();
        args.extend(["--seed", "11"]);
        let (c1, first) = run_cli(&args, dir.path())?;
        let svg1 = std::fs::read(dir.path().join("chart-m1.svg")).unwrap_or_default();
        let (c2, second) = run_cli(&args, dir.path())?;
        let svg2 = std::fs::read(dir.path().join("chart-m1.svg")).unwrap_or_default();
        if c1 != c2 || first != second || svg1 != svg2 {
            return Err(format!("{} differs between runs", cmd.join(" ")));
        }
        if c1 != 0 {
            return Err(format!("{} exited {c1}", cmd.join(" ")));
        }
        if first.is_empty() {
            return Err(format!("{} produced no output", cmd.join(" ")));
        }
        names.push(if cmd[0] == "blocked" { format!("blocked {}", cmd[1]) } else { cmd[0].to_string() });
    }
    ensure(true, format!("byte-identical across two runs: {}", names.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Check, Duration); 11] = [
        ("1 disagreement bound worked example (exact)", c1_worked_example, Duration::from_secs(1)),
        ("2 bound equals brute-force oracle on 0.01 grid", c2_oracle_equivalence, Duration::from_secs(5)),
        ("3 impacted-traffic curve strictly decreasing, 0 at (1, 1)", c3_curve_monotone, Duration::from_secs(1)),
        ("4 pathology suite >= 95% per family", c4_pathology_suite, Duration::from_secs(30)),
        ("5 threshold band around 0.5", c5_threshold_band, Duration::from_secs(10)),
        ("6 bias probe calibration", c6_bias_calibration, Duration::from_secs(120)),
        ("7 power calculator vs Monte Carlo", c7_power_monte_carlo, Duration::from_secs(60)),
        ("8 disagreement-routing simulator", c8_routing_simulator, Duration::from_secs(120)),
        ("9 blocked experiment coverage and additivity", c9_blocked_coverage, Duration::from_secs(120)),
        ("10 streaming equals batch on 1e5 records", c10_streaming_batch, Duration::from_secs(10)),
        ("11 CLI reports byte-identical per seed", c11_determinism, Duration::from_secs(120)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let id = name.split(' ').next().unwrap();
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let over = if took > budget { format!(", over {}s budget", budget.as_secs()) } else { String::new() };
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{:.2}s{over}]", took.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{:.2}s{over}]", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
