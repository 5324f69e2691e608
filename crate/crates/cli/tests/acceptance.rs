use std::f64::consts::{E, PI};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use quantpol::bounds::{
    discounted_gap_bound, ergodicity_constants_bounded_gaussian, slb_constant, Entropy, SystemConstants,
};
use quantpol::mdp::{ActionBox, StateVector};
use quantpol::measures::{tv_distance, BinnedMeasure, Grid};
use quantpol::quantizer::{build_uniform_net, cells_per_axis, nearest_level};
use quantpol_cli::report::{ExperimentReport, FAIL};
use quantpol_cli::{
    parse_config, run_bounds_check, run_convergence, run_ergodicity, run_tvcheck, Metadata, RunOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_quantpol");
const FUZZ_CASES: usize = 10_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> (quantpol_cli::ExperimentConfig, Metadata) {
    let (cfg, text) = parse_config(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    let meta = Metadata::new(&cfg, &text);
    (cfg, meta)
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn failed_rows(r: &ExperimentReport) -> Vec<usize> {
    r.rows.iter().filter(|row| row.verdict == FAIL).map(|row| row.k).collect()
}

fn closed_form_constants() -> Outcome {
    let c = SystemConstants { alpha: 1.0, beta: 0.9, k1: 1.0, k2: 0.5, m: 1.0, c: None, kappa: None, d: 1 };
    let k = discounted_gap_bound(&c, 1).map_err(|e| e.to_string())?.details["K"];
    // 1/(1-0.9) * (1 - 0.45 + 9) = 95.5
    ensure(rel(k, 95.5) <= 1e-9, format!("K = {k}, expected 95.5"))?;

    let (cc, kappa, eps) = ergodicity_constants_bounded_gaussian(1.0, 1.0).map_err(|e| e.to_string())?;
    let eps_oracle = 1.0 / (E * E * (2.0 * PI).sqrt());
    ensure(cc == 2.0, format!("C = {cc}"))?;
    ensure(rel(eps, eps_oracle) <= 1e-9, format!("eps = {eps}, expected {eps_oracle}"))?;
    ensure(rel(kappa, 1.0 - eps_oracle) <= 1e-9, format!("kappa = {kappa}"))?;
    ensure((eps - 0.053991).abs() < 5e-7 && (kappa - 0.946009).abs() < 5e-7, "rounded eps/kappa mismatch")?;

    let h_nats = 0.5 * (2.0 * PI * E).ln();
    let l = slb_constant(1, Entropy::nats(h_nats));
    let l_oracle = (2.0 * PI * E).sqrt() / 4.0;
    ensure(rel(l, l_oracle) <= 1e-9, format!("L = {l}, expected {l_oracle}"))?;
    ensure((l - 1.03318).abs() < 5e-6, format!("L = {l}"))?;
    Ok(format!("K = {k}, C = {cc}, eps = {eps:.6}, kappa = {kappa:.6}, L = {l:.5}"))
}

fn sandwich() -> Outcome {
    let (cfg, meta) = load("sandwich_d1.toml");
    let r = run_bounds_check(&cfg, meta, RunOptions::default()).map_err(|e| e.to_string())?;
    let bad = failed_rows(&r);
    ensure(bad.is_empty(), format!("rows outside [SLB - 3CI, bound + 3CI] at k = {bad:?}"))?;
    ensure(r.rows.iter().all(|row| row.lower_bound.is_some() && row.upper_bound.is_some()), "missing bound")?;
    let slope = r.slope.ok_or("no slope fitted")?;
    ensure((-1.3..=-0.7).contains(&slope), format!("slope {slope} outside [-1.3, -0.7]"))?;
    Ok(format!("{} rows inside the sandwich, slope {slope:.4}", r.rows.len()))
}

fn convergence() -> Outcome {
    let mut notes = Vec::new();
    for name in ["convergence_identity.toml", "convergence_mixture.toml"] {
        let (cfg, meta) = load(name);
        let r = run_convergence(&cfg, meta, RunOptions::default()).map_err(|e| e.to_string())?;
        let last = r.rows.last().ok_or("empty schedule")?;
        ensure(last.k == 256, format!("{name}: schedule ends at {}", last.k))?;
        ensure(last.gap.abs() < 1e-2, format!("{name}: gap {} at k = 256", last.gap))?;
        let bad = failed_rows(&r);
        ensure(bad.is_empty(), format!("{name}: gap grew beyond 3 CI at k = {bad:?}"))?;
        notes.push(format!("{}: gap(256) = {:.2e}", r.policy, last.gap));
    }
    Ok(notes.join(", "))
}

fn marginal_tv() -> Outcome {
    let (cfg, meta) = load("tvcheck_linear.toml");
    let r = run_tvcheck(&cfg, meta).map_err(|e| e.to_string())?;
    ensure(r.rows.len() == 6, format!("{} rows, expected 6", r.rows.len()))?;
    let bad: Vec<_> = r.rows.iter().filter(|row| row.verdict == FAIL).map(|row| (row.k, row.n)).collect();
    ensure(bad.is_empty(), format!("TV above bound + 3 floor at (k, n) = {bad:?}"))?;
    let worst = r.rows.iter().map(|row| row.tv).fold(0.0, f64::max);
    Ok(format!("max TV {worst:.4} over 6 (k, n) pairs"))
}

fn ergodicity() -> Outcome {
    let (cfg, meta) = load("ergodicity_tanh.toml");
    let r = run_ergodicity(&cfg, meta).map_err(|e| e.to_string())?;
    ensure(r.rows.len() == 40, format!("{} rows, expected 40", r.rows.len()))?;
    ensure(r.c == 2.0 && (r.kappa - 0.946009).abs() < 5e-7, format!("C = {}, kappa = {}", r.c, r.kappa))?;
    let bad: Vec<_> = r.rows.iter().filter(|row| row.tv > row.bound + row.noise_floor).map(|row| row.n).collect();
    ensure(bad.is_empty(), format!("TV above 2 kappa^n + floor at n = {bad:?}"))?;
    Ok(format!("TV(1) = {:.3}, floor {:.3}", r.rows[0].tv, r.noise_floor))
}

fn average_bound() -> Outcome {
    let (cfg, meta) = load("average_tanh.toml");
    let r = run_bounds_check(&cfg, meta, RunOptions::default()).map_err(|e| e.to_string())?;
    let ks: Vec<_> = r.rows.iter().map(|row| row.k).collect();
    ensure(ks == [16, 64, 256], format!("schedule {ks:?}"))?;
    let bad: Vec<_> = r
        .rows
        .iter()
        .filter(|row| row.upper_bound.is_none_or(|u| row.gap.abs() > u + 3.0 * row.gap_ci95))
        .map(|row| row.k)
        .collect();
    ensure(bad.is_empty() && r.pass, format!("gap above bound + 3 CI at k = {bad:?}"))?;
    let last = r.rows.last().unwrap();
    Ok(format!("gap(256) = {:.4} <= {:.4}", last.gap, last.upper_bound.unwrap()))
}

fn fuzz_quantizer(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for case in 0..FUZZ_CASES {
        let d = rng.random_range(1..=3usize);
        let lo: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.01..10.0)).collect();
        let b = ActionBox::new(lo.clone(), hi.clone()).map_err(|e| e.to_string())?;
        let k = rng.random_range(1..600usize);
        let cb = build_uniform_net(&b, k).map_err(|e| e.to_string())?;

        let m = cells_per_axis(k, d);
        ensure(m.pow(d as u32) <= k && (m + 1).pow(d as u32) > k, format!("case {case}: m = {m} for k = {k}"))?;
        ensure(cb.len() == m.pow(d as u32), format!("case {case}: {} levels", cb.len()))?;
        ensure((cb.rate_bits() - (cb.len() as f64).log2()).abs() < 1e-12, format!("case {case}: rate"))?;

        let a: Vec<f64> = lo.iter().zip(&hi).map(|(&l, &h)| rng.random_range(l..=h)).collect();
        let (idx, level) = nearest_level(&cb, &a).map_err(|e| e.to_string())?;
        let alpha = (d as f64).sqrt() * b.max_side();
        ensure(
            level.distance(&a) <= alpha / (2.0 * m as f64) * (1.0 + 1e-12),
            format!("case {case}: distance {} beyond alpha/(2m)", level.distance(&a)),
        )?;
        let dists: Vec<f64> = cb.levels().iter().map(|l| l.distance(&a)).collect();
        let best = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let first = dists.iter().position(|&x| x == best).unwrap();
        ensure(idx == first, format!("case {case}: index {idx}, first minimizer {first}"))?;

        // dyadic 1-D net with an exact midpoint between levels j and j + 1
        let k1 = rng.random_range(2..200usize);
        let cb1 = build_uniform_net(&ActionBox::new(vec![0.0], vec![k1 as f64]).unwrap(), k1).unwrap();
        let j = rng.random_range(0..k1 - 1);
        let (tie, _) = nearest_level(&cb1, &[(j + 1) as f64]).unwrap();
        ensure(tie == j, format!("case {case}: tie at {} resolved to {tie}, expected {j}", j + 1))?;
    }
    Ok(())
}

fn fuzz_measures(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let grid = Grid::interval(5.0, 20).map_err(|e| e.to_string())?;
    let random_measure = |rng: &mut ChaCha8Rng| {
        let mut w: Vec<f64> = (0..=grid.cells()).map(|_| rng.random::<f64>().powi(3)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        BinnedMeasure::from_masses(grid.clone(), w).unwrap()
    };
    for case in 0..FUZZ_CASES {
        let (p, q, r) = (random_measure(rng), random_measure(rng), random_measure(rng));
        let tv = |a: &BinnedMeasure, b: &BinnedMeasure| tv_distance(a, b).unwrap();
        ensure(tv(&p, &p) == 0.0, format!("case {case}: TV(p, p) != 0"))?;
        ensure(tv(&p, &q) == tv(&q, &p), format!("case {case}: asymmetric"))?;
        ensure(tv(&p, &r) <= tv(&p, &q) + tv(&q, &r) + 1e-12, format!("case {case}: triangle"))?;
        ensure((0.0..=2.0 + 1e-12).contains(&tv(&p, &q)), format!("case {case}: range"))?;
    }
    for case in 0..200 {
        let n = rng.random_range(1..5000usize);
        let states: Vec<StateVector> =
            (0..n).map(|_| StateVector::new(vec![rng.random_range(-8.0..8.0)]).unwrap()).collect();
        let m = BinnedMeasure::from_states(grid.clone(), &states).map_err(|e| e.to_string())?;
        ensure((m.total_mass() - 1.0).abs() <= 1e-12, format!("case {case}: mass {}", m.total_mass()))?;
        let outside = states.iter().filter(|x| x.as_slice()[0].abs() >= 5.0).count();
        ensure(
            (m.overflow() - outside as f64 / n as f64).abs() <= 1e-12,
            format!("case {case}: overflow {}", m.overflow()),
        )?;
    }
    Ok(())
}

const DETERMINISM_CONFIG: &str = r#"
codebook_schedule = [4, 16]

[system]
kind = "linear_tracking"
a = 0.0
b = 0.5
sigma = 1.0
action_box = { half_width = 8.0 }

[policy]
name = "identity"

[mc]
n_rollouts = 5000

[seeds]
root = 7
replications = 2
"#;

fn run_bin(config: &Path, threads: usize) -> Result<(Vec<u8>, Vec<u8>), String> {
    let out = Command::new(BIN)
        .args(["bounds", "--config"])
        .arg(config)
        .args(["--format", "json"])
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.code() == Some(0), String::from_utf8_lossy(&out.stderr).into_owned())?;
    let csv = Command::new(BIN)
        .args(["bounds", "--config"])
        .arg(config)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    Ok((out.stdout, csv.stdout))
}

fn determinism() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("det.toml");
    std::fs::write(&path, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let a = run_bin(&path, 1)?;
    let b = run_bin(&path, 1)?;
    let c = run_bin(&path, 4)?;
    ensure(a == b, "two single-thread runs differ")?;
    ensure(a == c, "1-thread and 4-thread runs differ")?;
    ensure(!a.0.is_empty() && !a.1.is_empty(), "empty report")
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    fuzz_quantizer(&mut rng)?;
    fuzz_measures(&mut rng)?;
    determinism()?;
    Ok(format!("{FUZZ_CASES} quantizer cases, {FUZZ_CASES} TV cases, reports byte-identical"))
}

fn falsification() -> Outcome {
    let out = Command::new(BIN)
        .args(["bounds", "--config"])
        .arg(config_path("falsification.toml"))
        .output()
        .map_err(|e| e.to_string())?;
    let csv = String::from_utf8_lossy(&out.stdout);
    let fails = csv.lines().skip(1).filter(|l| l.ends_with(",FAIL")).count();
    ensure(out.status.code() == Some(1), format!("exit code {:?}", out.status.code()))?;
    ensure(fails >= 1, "no FAIL row")?;
    Ok(format!("exit 1 with {fails} FAIL rows"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("closed-form constants", closed_form_constants),
        ("order-optimality sandwich", sandwich),
        ("deterministic and randomized convergence", convergence),
        ("marginal TV bound", marginal_tv),
        ("geometric ergodicity", ergodicity),
        ("average-cost bound", average_bound),
        ("property suites", property_suites),
        ("falsification self-test", falsification),
    ];
    let mut all = true;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                all = false;
                println!("FAIL criterion {} {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
