//! Acceptance run: one PASS/FAIL line per criterion, then a single assertion
//! over all of them. The lines go straight to stderr so they show without
//! `--nocapture`.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ovo_core::calibration::nll_gradient;
use ovo_core::coupling::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use ovo_core::eval::{
    accuracy, class_reports, gen_synthetic, metrics, run_benchmark, BenchmarkConfig, ClassMetrics, ConfusionCounts,
    EvalReport, Strategy, SyntheticConfig,
};
use ovo_core::seed::derive_seed;
use ovo_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn matrix(k: usize, r: Vec<f64>) -> PairwiseScoreMatrix {
    PairwiseScoreMatrix::from_calibrated(ClassSet::indexed(k).unwrap(), r).unwrap()
}

fn coupling_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for n in 0..1000 {
        let k = 2 + n % 9;
        let p = ProbabilityVector::repaired(oracles::random_simplex(&mut rng, k)).unwrap();
        let m = PairwiseScoreMatrix::from_probabilities(ClassSet::indexed(k).unwrap(), &p).unwrap();
        let s = solve_coupling(&m).map_err(|e| e.to_string())?;
        for (a, b) in s.p.values().iter().zip(p.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-8 && elapsed < Duration::from_secs(10),
        format!("max error {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn qp_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let start = Instant::now();
    let (mut worst_pg, mut worst_grid) = (0.0f64, 0.0f64);
    for n in 0..200 {
        let k = 2 + n % 4;
        let upper = oracles::random_upper(&mut rng, k);
        let m = matrix(k, upper.clone());
        let kkt = solve_coupling(&m).map_err(|e| e.to_string())?;
        let pg = projected_gradient_coupling(&m, DEFAULT_MAX_ITER, DEFAULT_TOL).map_err(|e| e.to_string())?;
        worst_pg = worst_pg.max((kkt.quadratic_objective - pg.quadratic_objective).abs());
        if k <= 4 {
            let (grid, _) = oracles::brute_force_minimum(&oracles::dense_from_upper(k, &upper), 1e-3);
            worst_grid = worst_grid
                .max((kkt.quadratic_objective - grid).abs())
                .max((pg.quadratic_objective - grid).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        worst_pg <= 1e-8 && worst_grid <= 1e-6 && elapsed < Duration::from_secs(60),
        format!(
            "|kkt-pg| {worst_pg:.2e}, |qp-grid| {worst_grid:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn two_class_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let r: f64 = rng.gen_range(1e-9..1.0 - 1e-9);
        let s = solve_coupling(&matrix(2, vec![r])).map_err(|e| e.to_string())?;
        worst = worst.max((s.p.get(0) - r).abs()).max((s.p.get(1) - (1.0 - r)).abs());
    }
    check(worst <= 1e-12, format!("max error {worst:.2e}"))
}

#[allow(clippy::approx_constant)]
fn calibration() -> Outcome {
    let fixture = CalibrationFitData::new((0, 1), vec![(1.0, true), (0.0, false)]);
    let fit = fit_calibration(&fixture, &FitOptions::default()).map_err(|e| e.to_string())?;
    let fixture_err = (fit.eta + 1.386294).abs().max((fit.tau - 0.693147).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let random_data = |rng: &mut ChaCha8Rng, n: usize| {
        let shift: f64 = rng.gen_range(0.0..0.5);
        let samples = (0..n)
            .map(|k| {
                let pos = k % 2 == 0;
                let s: f64 = if pos {
                    rng.gen_range(shift..1.0)
                } else {
                    rng.gen_range(0.0..1.0 - shift)
                };
                (s, pos)
            })
            .collect();
        CalibrationFitData::new((0, 1), samples)
    };

    let mut worst_grad = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..40);
        let data = random_data(&mut rng, n);
        let (eta, tau) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let analytic = nll_gradient(&CalibrationParams::with_values((0, 1), eta, tau), &data).unwrap();
        let f = |x: &[f64]| nll(&CalibrationParams::with_values((0, 1), x[0], x[1]), &data).unwrap();
        let numeric = oracles::fd_gradient(f, &[eta, tau], 1e-6);
        for d in 0..2 {
            let err = (analytic[d] - numeric[d]).abs() / analytic[d].abs().max(numeric[d].abs()).max(1e-3);
            worst_grad = worst_grad.max(err);
        }
    }

    let mut beaten = 0;
    for fixture in 0..20 {
        let data = random_data(&mut rng, 10 + 5 * fixture);
        let fitted = fit_calibration(&data, &FitOptions::default()).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let cand = CalibrationParams::with_values((0, 1), rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            if nll(&cand, &data).unwrap() < fitted.final_nll {
                beaten += 1;
            }
        }
    }
    check(
        fixture_err <= 1e-6 && worst_grad <= 1e-5 && beaten == 0,
        format!(
            "eta {:.6} tau {:.6} (err {fixture_err:.1e}), gradient rel err {worst_grad:.1e}, random draws beating fit {beaten}",
            fit.eta, fit.tau
        ),
    )
}

fn voting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let mut mismatches = 0;
    let mut ties = 0;
    for n in 0..1000 {
        let k = 2 + n % 7;
        let raw: Vec<f64> = (0..k * (k - 1) / 2)
            .map(|_| [0.1, 0.5, 0.9][rng.gen_range(0..3)])
            .collect();
        let m = PairwiseScoreMatrix::new(ClassSet::indexed(k).unwrap(), raw).unwrap();
        let dense: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| m.raw(i, j)).collect()).collect();
        let (label, wins) = oracles::brute_vote(&dense);
        let top = *wins.iter().max().unwrap();
        if wins.iter().filter(|&&w| w == top).count() > 1 {
            ties += 1;
        }
        let v = vote_label(&m);
        if (v.label, v.votes) != (label, wins) {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0 && ties > 0,
        format!("{mismatches} mismatches, {ties} tied matrices"),
    )
}

fn metric_identities() -> Outcome {
    let fixtures = [
        (
            ConfusionCounts {
                tp: 3,
                fp: 1,
                fn_: 1,
                tn: 5,
            },
            [Some(0.75), Some(0.75), Some(5.0 / 6.0), Some(0.75)],
        ),
        (
            ConfusionCounts {
                tp: 0,
                fp: 0,
                fn_: 2,
                tn: 4,
            },
            [None, Some(0.0), Some(1.0), None],
        ),
        (
            ConfusionCounts {
                tp: 7,
                fp: 0,
                fn_: 0,
                tn: 9,
            },
            [Some(1.0); 4],
        ),
        (
            ConfusionCounts {
                tp: 2,
                fp: 2,
                fn_: 0,
                tn: 0,
            },
            [Some(0.5), Some(1.0), Some(0.0), Some(2.0 / 3.0)],
        ),
    ];
    let mut fixture_fail = 0;
    for (c, want) in &fixtures {
        let ClassMetrics {
            precision,
            recall,
            specificity,
            f1,
        } = metrics(c);
        if [precision, recall, specificity, f1] != *want {
            fixture_fail += 1;
        }
    }
    let classes = ClassSet::indexed(3).unwrap();
    let pred = vec![vec![0], vec![0], vec![1], vec![2]];
    let truth = vec![vec![0], vec![1], vec![1], vec![2]];
    let reports = class_reports(&classes, &pred, &truth).map_err(|e| e.to_string())?;
    if reports[0].counts
        != (ConfusionCounts {
            tp: 1,
            fp: 1,
            fn_: 0,
            tn: 2,
        })
        || accuracy(&[0, 0, 1, 2], &[0, 1, 1, 2]) != Ok(0.75)
    {
        fixture_fail += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let mut identity_fail = 0;
    for _ in 0..1000 {
        let c = ConfusionCounts {
            tp: rng.gen_range(0..30),
            fp: rng.gen_range(0..30),
            fn_: rng.gen_range(0..30),
            tn: rng.gen_range(0..30),
        };
        let m = metrics(&c);
        if let (Some(p), Some(r), Some(f)) = (m.precision, m.recall, m.f1) {
            let h = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            if (f - h).abs() > 1e-12 {
                identity_fail += 1;
            }
        }
    }
    check(
        fixture_fail == 0 && identity_fail == 0,
        format!("{fixture_fail} fixture failures, {identity_fail} F1 identity failures"),
    )
}

fn seeds(base: u64, n: u64) -> Vec<u64> {
    (0..n).map(|i| derive_seed(base, "acceptance", i)).collect()
}

fn directional_benchmark() -> Outcome {
    let start = Instant::now();
    let cfg = BenchmarkConfig {
        k: 3,
        per_class: 300,
        dim: 2,
        separation: 2.0,
        train_fraction: 0.5,
        strategies: vec![Strategy::Proposed, Strategy::Voting, Strategy::Ova],
        seeds: seeds(7, 20),
        hyper: LogisticHyper::default(),
        refine: RefineHyper::default(),
        fit: FitOptions::default(),
        calib_holdout: 0.0,
    };
    let report = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    let mean = |s| report.strategy(s).unwrap().mean_accuracy;
    let (proposed, voting, ova) = (mean(Strategy::Proposed), mean(Strategy::Voting), mean(Strategy::Ova));
    let elapsed = start.elapsed();
    check(
        proposed >= voting - 0.005 && proposed >= ova - 0.02 && elapsed < Duration::from_secs(300),
        format!(
            "proposed {proposed:.4}, voting {voting:.4}, ova {ova:.4}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn refinement() -> Outcome {
    let cfg = BenchmarkConfig {
        k: 3,
        per_class: 100,
        dim: 2,
        separation: 8.0,
        train_fraction: 0.5,
        strategies: vec![Strategy::Ova, Strategy::Refined],
        seeds: seeds(8, 10),
        hyper: LogisticHyper::default(),
        refine: RefineHyper::default(),
        fit: FitOptions::default(),
        calib_holdout: 0.0,
    };
    let report = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    let ova = report.seed_accuracies(Strategy::Ova);
    let refined = report.seed_accuracies(Strategy::Refined);
    let worst_gap = ova
        .iter()
        .zip(&refined)
        .map(|(o, r)| o - r)
        .fold(f64::NEG_INFINITY, f64::max);
    check(
        worst_gap <= 0.02,
        format!(
            "mean ova {:.4}, mean refined {:.4}, worst per-seed shortfall {worst_gap:.4}",
            report.strategy(Strategy::Ova).unwrap().mean_accuracy,
            report.strategy(Strategy::Refined).unwrap().mean_accuracy
        ),
    )
}

fn write_dataset(path: &Path, seed: u64) {
    let ds = gen_synthetic(&SyntheticConfig {
        k: 3,
        per_class: 50,
        dim: 2,
        separation: 3.0,
        seed,
    })
    .unwrap();
    let mut text = String::from("id,f0,f1,label\n");
    for (n, (x, l)) in ds.features().iter().zip(ds.labels()).enumerate() {
        text.push_str(&format!("r{n},{},{},{}\n", x[0], x[1], ds.classes().name(l[0])));
    }
    std::fs::write(path, text).unwrap();
}

fn pipeline_run(dir: &Path, train: &Path, test: &Path) -> std::result::Result<Vec<Vec<u8>>, String> {
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let out = |name: &str| s(&dir.join(name));
    let steps: Vec<Vec<String>> = vec![
        vec![
            "train".into(),
            "--input".into(),
            s(train),
            "--out".into(),
            out("suite.json"),
        ],
        vec![
            "calibrate".into(),
            "--suite".into(),
            out("suite.json"),
            "--input".into(),
            s(train),
            "--out".into(),
            out("calib.json"),
        ],
        vec![
            "predict".into(),
            "--suite".into(),
            out("suite.json"),
            "--calib".into(),
            out("calib.json"),
            "--input".into(),
            s(test),
            "--out".into(),
            out("pred.json"),
            "--threshold".into(),
            "0.4".into(),
        ],
        vec![
            "evaluate".into(),
            "--predictions".into(),
            out("pred.json"),
            "--truth".into(),
            s(test),
            "--out".into(),
            out("eval.json"),
        ],
        vec![
            "train".into(),
            "--input".into(),
            s(train),
            "--out".into(),
            out("refined.json"),
            "--mode".into(),
            "refine".into(),
        ],
        vec![
            "benchmark".into(),
            "--out".into(),
            out("bench.json"),
            "--per-class".into(),
            "40".into(),
            "--seeds".into(),
            "3".into(),
            "--strategies".into(),
            "proposed,voting,ova,refined".into(),
        ],
    ];
    for args in steps {
        let o = Command::new(env!("CARGO_BIN_EXE_ovo"))
            .args(&args)
            .arg("--seed")
            .arg("11")
            .output()
            .unwrap();
        if !o.status.success() {
            return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    [
        "suite.json",
        "calib.json",
        "pred.json",
        "eval.json",
        "refined.json",
        "bench.json",
    ]
    .iter()
    .map(|n| std::fs::read(dir.join(n)).map_err(|e| e.to_string()))
    .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    write_dataset(&train, 1);
    write_dataset(&test, 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let first = pipeline_run(&a, &train, &test)?;
    let second = pipeline_run(&b, &train, &test)?;
    let report: EvalReport = serde_json::from_slice(&first[3]).map_err(|e| e.to_string())?;
    let differing = first.iter().zip(&second).filter(|(x, y)| x != y).count();
    check(
        differing == 0,
        format!(
            "{differing} of {} output files differ (pipeline accuracy {:?})",
            first.len(),
            report.accuracy
        ),
    )
}

fn report(line: String) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 9] = [
        ("coupling recovery", coupling_recovery),
        ("QP oracle equivalence", qp_oracle_equivalence),
        ("K=2 closed form", two_class_closed_form),
        ("calibration fixture, gradient and optimality", calibration),
        ("voting correctness", voting),
        ("metric identities", metric_identities),
        ("directional benchmark", directional_benchmark),
        ("refinement analogue", refinement),
        ("CLI determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (n, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => report(format!("criterion {}: PASS {name}: {detail}", n + 1)),
            Err(detail) => {
                report(format!("criterion {}: FAIL {name}: {detail}", n + 1));
                failed.push(n + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
