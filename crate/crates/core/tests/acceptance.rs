//! Acceptance criteria. Runs as a plain binary (`harness = false`) so that
//! each criterion prints its own PASS/FAIL line; exits non-zero if any fail.
//!
//! `cargo test -p vcsd --test acceptance -- <substring>` runs only the
//! criteria whose label contains the substring.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vcsd::detector::{noiseless_breakpoint, run_stream, Detector, DetectorConfig};
use vcsd::experiment::{simulate, ExperimentConfig};
use vcsd::geometry::{incremental_volume_factor, log_volume, principal_angles, volume, volume_correlation};
use vcsd::scenario::{make_scenario, random_subspace, trial_rng};
use vcsd::theory::{sample_bound_target_absent, sample_bound_target_present, tau, BoundInputs};
use vcsd::{Hypothesis, ScenarioConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Criterion {
    label: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn noiseless(n: usize, d1: usize, d2: usize, seed: u64, hypothesis: Hypothesis) -> vcsd::Scenario {
    make_scenario(&ScenarioConfig {
        n,
        d1,
        d2,
        snr_db: f64::INFINITY,
        seed,
        hypothesis,
    })
    .expect("scenario")
}

fn tracing_noiseless(sc: &vcsd::Scenario, m: usize) -> DetectorConfig {
    DetectorConfig::new(sc.target_basis.clone())
        .with_noise_variance(0.0)
        .with_max_samples(m)
        .tracing()
}

fn sine_product_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=64);
        let da = rng.gen_range(1..n);
        let db = rng.gen_range(1..=n - da);
        let a = random_subspace(n, da, &mut rng).unwrap();
        let b = random_subspace(n, db, &mut rng).unwrap();
        let vc = volume_correlation(&a, &b).unwrap();
        let sines = principal_angles(&a, &b).unwrap().sine_product();
        worst = worst.max((vc - sines).abs());
    }
    outcome(
        worst < 1e-10,
        format!("200 pairs, max |Corr_vol - prod sin| = {worst:.2e} (< 1e-10)"),
    )
}

fn volume_definitions_agree() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let rows = rng.gen_range(1..=24);
        let cols = rng.gen_range(1..=rows);
        let x = gaussian(rows, cols, &mut rng);
        let by_svd = volume(&x, cols).unwrap();
        let by_gram = x.tr_mul(&x).determinant().sqrt();
        worst = worst.max((by_svd - by_gram).abs() / by_gram);
    }
    outcome(
        worst < 1e-9,
        format!("200 matrices, max relative error {worst:.2e} (< 1e-9)"),
    )
}

fn incremental_recursion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(14..=40);
        let d2 = rng.gen_range(1..=4);
        let target = random_subspace(n, d2, &mut rng).unwrap();
        let chain = gaussian(n, 10, &mut rng);
        let mut log_product = 0.0;
        for j in 0..10 {
            let prev = chain.columns(0, j).into_owned();
            let y: DVector<f64> = chain.column(j).into_owned();
            log_product += incremental_volume_factor(target.matrix(), &prev, &y).unwrap().ln();
        }
        let mut stacked = DMatrix::zeros(n, d2 + 10);
        stacked.columns_mut(0, d2).copy_from(target.matrix());
        stacked.columns_mut(d2, 10).copy_from(&chain);
        let direct = log_volume(&stacked, d2 + 10).unwrap();
        worst = worst.max((log_product - direct).exp_m1().abs());
    }
    outcome(
        worst < 1e-8,
        format!("100 chains of 10, max relative error {worst:.2e} (< 1e-8)"),
    )
}

fn noiseless_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for s in 0..100 {
        let n = rng.gen_range(16..=64);
        let d1 = rng.gen_range(2..=10);
        let d2 = rng.gen_range(1..=4);
        for h in [Hypothesis::Present, Hypothesis::Absent] {
            let sc = noiseless(n, d1, d2, 400 + s, h);
            let out = run_stream(&tracing_noiseless(&sc, d1), sc.samples(trial_rng(s, 0, h))).unwrap();
            for w in out.trajectory.windows(2) {
                worst = worst.max((w[0].inv_t - w[1].inv_t) / w[0].inv_t);
            }
            runs += 1;
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{runs} runs, largest relative decrease of 1/T over m = 1..d1: {worst:.2e} (<= 1e-12)"),
    )
}

fn breakpoint_exactness() -> Outcome {
    let (mut runs, mut failures) = (0, Vec::new());
    for n in [32, 64] {
        for d1 in 3..=10 {
            for d2 in 1..=4 {
                for seed in 0..10u64 {
                    for h in [Hypothesis::Present, Hypothesis::Absent] {
                        let sc = noiseless(n, d1, d2, 1000 * n as u64 + 100 * d1 as u64 + 10 * d2 as u64 + seed, h);
                        let samples = sc.samples(trial_rng(seed, 0, h)).take(d1 + d2 + 2);
                        let out = noiseless_breakpoint(&sc.target_basis, samples, 1e-8).unwrap();
                        runs += 1;
                        if out.breakpoint != Some(d1 + 1) || out.target_present != h.is_present() {
                            failures.push(format!(
                                "(n={n}, d1={d1}, d2={d2}, seed={seed}, {}) -> {:?}, {}",
                                h.as_str(),
                                out.breakpoint,
                                out.target_present
                            ));
                        }
                    }
                }
            }
        }
    }
    let detail = match failures.first() {
        None => format!("{runs}/{runs} runs: breakpoint d1+1 and correct hypothesis"),
        Some(f) => format!("{} of {runs} runs wrong, first {f}", failures.len()),
    };
    outcome(failures.is_empty(), detail)
}

fn plateau_equals_tau() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for s in 0..50 {
        let n = rng.gen_range(16..=64);
        let d1 = rng.gen_range(2..=10);
        let d2 = rng.gen_range(1..=4);
        let sc = noiseless(n, d1, d2, 600 + s, Hypothesis::Absent);
        let out = run_stream(
            &tracing_noiseless(&sc, d1),
            sc.samples(trial_rng(s, 0, Hypothesis::Absent)),
        )
        .unwrap();
        let t = out.trajectory[d1 - 1].t;
        worst = worst.max((t - tau(&sc.target_basis, &sc.clutter_basis).unwrap()).abs());
    }
    outcome(
        worst < 1e-8,
        format!("50 scenarios, max |T(d1) - tau| = {worst:.2e} (< 1e-8)"),
    )
}

fn figure_desk() -> Outcome {
    let cfg = ExperimentConfig::preset("fig1_desk").unwrap();
    let out = simulate(&cfg).unwrap();
    let s = out.summary();
    let trials = cfg.trials as f64;
    let present_rate = s.present.decisions.target_present as f64 / trials;
    let absent_rate = s.absent.decisions.target_absent as f64 / trials;
    let ratio = s.present.final_inv_t_median / s.absent.final_inv_t_median;
    let pass = present_rate >= 0.9 && absent_rate >= 0.9 && ratio >= 10.0;
    outcome(
        pass,
        format!(
            "fig1_desk: TargetPresent {:.0}% (>= 90%), TargetAbsent {:.0}% (>= 90%), \
             median final 1/T present/absent = {:.3}/{:.3} = {ratio:.2} (>= 10); 1/tau = {:.3}",
            100.0 * present_rate,
            100.0 * absent_rate,
            s.present.final_inv_t_median,
            s.absent.final_inv_t_median,
            s.tau.map_or(f64::NAN, |t| 1.0 / t),
        ),
    )
}

fn figure_full_completes() -> Outcome {
    let cfg = ExperimentConfig::preset("fig1_full").unwrap();
    let out = simulate(&cfg).unwrap();
    let s = out.summary();
    let records: usize = out.trials.iter().map(|t| t.trajectory.len()).sum();
    let complete = out.trials.len() == 2 * cfg.trials && s.present.trials == cfg.trials;
    outcome(
        complete,
        format!(
            "fig1_full: {} trajectories, {records} records; median final 1/T present {:.3}, absent {:.3}",
            out.trials.len(),
            s.present.final_inv_t_median,
            s.absent.final_inv_t_median
        ),
    )
}

fn bound_calculators() -> Outcome {
    let worked = BoundInputs::new(vec![3.0, 2.0], 1.0, 10, 0.1, 0.5).unwrap();
    // 1.5 / (sqrt(1.1) - 1)^2 * (2 * 6 / 1 + 8 * (3/4 + 2/1)) = 21407.85...
    let m = sample_bound_target_present(&worked).unwrap().m_required;
    let mut violations = 0;
    let mut checks = 0;
    let eigs = [vec![3.0, 2.0], vec![3.0, 2.0, 1.5], vec![7.0, 4.0, 2.5, 1.2]];
    for e in &eigs {
        for calc in [sample_bound_target_present, sample_bound_target_absent] {
            let m_of = |n: usize, delta: f64, eps: f64| {
                calc(&BoundInputs::new(e.clone(), 1.0, n, delta, eps).unwrap())
                    .unwrap()
                    .m_required
            };
            let deltas: Vec<f64> = (0..40).map(|j| 0.01 * 1.2f64.powi(j)).collect();
            for w in deltas.windows(2) {
                checks += 1;
                violations += usize::from(m_of(20, w[1], 0.5) > m_of(20, w[0], 0.5));
            }
            let epss: Vec<f64> = (1..40).map(|j| j as f64 / 40.0).collect();
            for w in epss.windows(2) {
                checks += 1;
                violations += usize::from(m_of(20, 0.1, w[1]) < m_of(20, 0.1, w[0]));
            }
            for n in e.len()..200 {
                checks += 1;
                violations += usize::from(m_of(n + 1, 0.1, 0.5) < m_of(n, 0.1, 0.5));
            }
        }
    }
    outcome(
        m == 21408 && violations == 0,
        format!("worked instance m_required = {m} (expected 21408); {violations} violations in {checks} sweep steps"),
    )
}

fn covariance_recursion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 8;
    let target = random_subspace(n, 2, &mut rng).unwrap();
    let mut det = Detector::new(DetectorConfig::new(target).tracing().with_max_samples(50)).unwrap();
    let mut batch = DMatrix::zeros(n, n);
    for _ in 0..50 {
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        batch += &y * y.transpose();
        det.ingest(&y).unwrap();
    }
    batch /= 50.0;
    let rel = (det.covariance() - &batch).norm() / batch.norm();
    outcome(
        rel < 1e-10,
        format!("n = 8, 50 ingests, relative error {rel:.2e} (< 1e-10)"),
    )
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, parallelism: &str| -> Vec<u8> {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_vcsd"))
            .args([
                "simulate",
                "--config",
                "fig1_desk",
                "--trials",
                "5",
                "--parallelism",
                parallelism,
                "--out",
            ])
            .arg(&path)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(&path).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "1");
    let c = run("c.csv", "4");
    outcome(
        a == b && a == c,
        format!(
            "fig1_desk, 5 trials: repeat identical = {}, parallelism 1 vs 4 identical = {} ({} bytes)",
            a == b,
            a == c,
            a.len()
        ),
    )
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        label: "1 sine-product identity",
        limit: Duration::from_secs(5),
        run: sine_product_identity,
    },
    Criterion {
        label: "2 volume definitions",
        limit: Duration::from_secs(5),
        run: volume_definitions_agree,
    },
    Criterion {
        label: "3 incremental recursion",
        limit: Duration::from_secs(5),
        run: incremental_recursion,
    },
    Criterion {
        label: "4 noiseless monotonicity",
        limit: Duration::from_secs(10),
        run: noiseless_monotone,
    },
    Criterion {
        label: "5 breakpoint exactness",
        limit: Duration::from_secs(30),
        run: breakpoint_exactness,
    },
    Criterion {
        label: "6 noiseless plateau equals tau",
        limit: Duration::from_secs(10),
        run: plateau_equals_tau,
    },
    Criterion {
        label: "7 desk-scale detection",
        limit: Duration::from_secs(600),
        run: figure_desk,
    },
    Criterion {
        label: "7 full-scale run completes",
        limit: Duration::MAX,
        run: figure_full_completes,
    },
    Criterion {
        label: "8 bound calculators",
        limit: Duration::from_secs(1),
        run: bound_calculators,
    },
    Criterion {
        label: "9 covariance recursion",
        limit: Duration::from_secs(1),
        run: covariance_recursion,
    },
    Criterion {
        label: "10 simulate determinism",
        limit: Duration::from_secs(60),
        run: cli_determinism,
    },
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| c.label.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= c.limit, o.detail),
            Err(_) => (false, "panicked".to_string()),
        };
        let limit = if c.limit == Duration::MAX {
            String::new()
        } else {
            format!(", limit {:.0?}", c.limit)
        };
        println!(
            "[{}] criterion {}: {detail} [{:.2?}{limit}]",
            if pass { "PASS" } else { "FAIL" },
            c.label,
            elapsed
        );
        failed += usize::from(!pass);
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
