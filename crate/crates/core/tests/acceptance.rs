//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use cosegment::cli::{self, RunResult};
use cosegment::detect::{self, PeakConfig};
use cosegment::ingest;
use cosegment::metrics::{self, BoundarySet, LabelSequence};
use cosegment::selfexpr::{self, DifferenceMatrix, SelfExprMatrix};
use cosegment::train::{self, Hyperparams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let inst = common::random_instance(&mut rng);
        worst = worst.max(common::max_gradient_error(&inst, 1e-5));
    }
    outcome(worst <= 1e-4, format!("20 instances, max relative error {worst:.2e} (limit 1e-4)"))
}

fn algebraic_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut identity_ok = true;
    let mut worst_l1 = 0.0f64;
    let mut worst_l12 = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let raw = Array2::from_shape_simple_fn((n, n), || rng.random_range(-2.0..2.0));
        let theta = SelfExprMatrix::from_array(raw.clone(), false).unwrap();
        let r = DifferenceMatrix::build(n).unwrap();
        let m = r.apply(raw.view()).unwrap();
        for j in 0..n - 1 {
            for i in 0..n {
                identity_ok &= m[[i, j]] == raw[[i, j + 1]] - raw[[i, j]];
            }
        }

        let mut l1_oracle = 0.0;
        for v in raw.iter() {
            l1_oracle += v.abs();
        }
        let (l1, _) = selfexpr::l1_value_and_subgrad(&theta);
        worst_l1 = worst_l1.max((l1 - l1_oracle).abs());

        let mut l12_oracle = 0.0;
        for j in 0..n - 1 {
            let mut sq = 0.0;
            for i in 0..n {
                let d = raw[[i, j + 1]] - raw[[i, j]];
                sq += d * d;
            }
            l12_oracle += sq.sqrt();
        }
        let (l12, _) = selfexpr::l12_value_and_subgrad(m.view(), selfexpr::DEFAULT_EPSILON);
        worst_l12 = worst_l12.max((l12 - l12_oracle).abs());
    }

    let mut flat_ok = true;
    for n in 2..=10 {
        let column: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let raw = Array2::from_shape_fn((n, n), |(i, _)| column[i]);
        let theta = SelfExprMatrix::from_array(raw, false).unwrap();
        let y = detect::boundary_scores(&theta, &DifferenceMatrix::build(n).unwrap()).unwrap();
        flat_ok &= y.y.iter().all(|&v| v == 0.0);
    }

    let pass = identity_ok && worst_l1 <= 1e-12 && worst_l12 <= 1e-12 && flat_ok;
    outcome(
        pass,
        format!(
            "difference identity exact: {identity_ok}, l1 err {worst_l1:.1e}, l12 err {worst_l12:.1e}, equal columns give zero scores: {flat_ok}"
        ),
    )
}

fn block_diagonal_recovery() -> Outcome {
    let sizes = [5, 7, 4];
    let n: usize = sizes.iter().sum();
    let mut block = Vec::with_capacity(n);
    for (b, &s) in sizes.iter().enumerate() {
        block.extend(std::iter::repeat_n(b, s));
    }
    let raw = Array2::from_shape_fn((n, n), |(i, j)| {
        if block[i] == block[j] {
            1.0 / sizes[block[j]] as f64
        } else {
            0.0
        }
    });
    let theta = SelfExprMatrix::from_array(raw, false).unwrap();
    let y = detect::boundary_scores(&theta, &DifferenceMatrix::build(n).unwrap()).unwrap();
    let cfg = PeakConfig {
        threshold_k: 1.0,
        ..PeakConfig::default()
    };
    let found = detect::find_peaks(&y, &cfg).boundaries;
    outcome(found == vec![4, 11], format!("boundaries {found:?}, expected [4, 11]"))
}

fn run_cli(args: &[&str]) -> i32 {
    cli::run(std::iter::once("cosegment").chain(args.iter().copied()))
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn synthetic_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut f1 = Vec::new();
    let mut ari = Vec::new();
    for seed in 1..=10u64 {
        let csv = dir.path().join(format!("s{seed}.csv"));
        let truth = dir.path().join(format!("s{seed}.truth.json"));
        let out = dir.path().join(format!("r{seed}.json"));
        let seed_arg = seed.to_string();
        let code = run_cli(&["synth", "--out", path_str(&csv), "--truth", path_str(&truth), "--seed", &seed_arg]);
        assert_eq!(code, 0, "synth failed for seed {seed}");
        let code = run_cli(&["segment", "--input", path_str(&csv), "--out", path_str(&out), "--truth", path_str(&truth)]);
        assert_eq!(code, 0, "segment failed for seed {seed}");
        let result: RunResult = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let m = result.metrics.expect("metrics present with --truth");
        f1.push(m.f1);
        ari.push(m.ari);
    }
    let mean_f1 = f1.iter().sum::<f64>() / 10.0;
    let mean_ari = ari.iter().sum::<f64>() / 10.0;
    let per_seed: Vec<String> = f1.iter().zip(&ari).map(|(f, a)| format!("{f:.2}/{a:.2}")).collect();
    outcome(
        mean_f1 >= 0.8 && mean_ari >= 0.6,
        format!(
            "mean F1 {mean_f1:.3} (>= 0.8), mean ARI {mean_ari:.3} (>= 0.6); per seed F1/ARI {}",
            per_seed.join(" ")
        ),
    )
}

fn training_sanity() -> Outcome {
    let (_, data) = common::synthetic(1);
    let w = ingest::prepare(&data.series, &ingest::WindowConfig::default()).unwrap();
    let report = train::fit(&w, &Hyperparams::default()).unwrap();
    let initial = report.loss_history[0].total;
    let last = report.final_losses.total();
    let finite = report.loss_history.iter().all(|e| e.total.is_finite()) && last.is_finite();
    let terms = report
        .loss_history
        .iter()
        .map(|e| e.terms)
        .chain(std::iter::once(report.final_losses));
    let nonnegative = terms
        .clone()
        .all(|t| t.recon >= 0.0 && t.l1 >= 0.0 && t.selfexpr >= 0.0 && t.smooth >= 0.0);
    outcome(
        last <= 0.5 * initial && finite && nonnegative,
        format!("initial {initial:.3}, final {last:.3}, all finite: {finite}, terms nonnegative: {nonnegative}"),
    )
}

fn labels(v: &[usize]) -> LabelSequence {
    LabelSequence { labels: v.to_vec() }
}

fn metric_oracles() -> Outcome {
    let ari = |a: &[usize], b: &[usize]| metrics::adjusted_rand_index(&labels(a), &labels(b)).unwrap();
    let contingency = ari(&[0, 0, 1, 1], &[0, 1, 0, 1]);
    let identical = ari(&[0, 0, 1, 1], &[0, 0, 1, 1]);
    let permuted = ari(&[0, 0, 1, 1], &[1, 1, 0, 0]);
    let oracle = common::ari_by_pairs(&[0, 0, 1, 1], &[0, 1, 0, 1]);

    let f1 = |p: &[usize], t: &[usize], tol: usize| {
        metrics::boundary_f1(&BoundarySet::new(p.to_vec()), &BoundarySet::new(t.to_vec()), tol)
    };
    let a = f1(&[11, 20], &[10, 20], 2);
    let b = f1(&[11, 25], &[10, 20], 2);
    let c = f1(&[3, 17, 40], &[3, 17, 40], 0);

    let pass = contingency == -0.5
        && (oracle + 0.5).abs() < 1e-12
        && identical == 1.0
        && permuted == 1.0
        && (a.precision, a.recall, a.f1) == (1.0, 1.0, 1.0)
        && (b.precision, b.recall, b.f1) == (0.5, 0.5, 0.5)
        && c.f1 == 1.0;
    outcome(
        pass,
        format!(
            "ARI {contingency} / {identical} / {permuted}; F1 {} / {} / {}",
            a.f1, b.f1, c.f1
        ),
    )
}

fn bits(a: &Array2<f64>) -> Vec<u64> {
    a.iter().map(|v| v.to_bits()).collect()
}

fn params_bits(p: &cosegment::net::MlpParams) -> Vec<u64> {
    p.layers()
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    assert_eq!(run_cli(&["synth", "--out", path_str(&csv), "--seed", "3"]), 0);
    let outs = ["a.json", "b.json"].map(|name| dir.path().join(name));
    for out in &outs {
        let code = run_cli(&["segment", "--input", path_str(&csv), "--out", path_str(out), "--seed", "11"]);
        assert_eq!(code, 0);
    }
    let same_json = std::fs::read(&outs[0]).unwrap() == std::fs::read(&outs[1]).unwrap();

    let (_, data) = common::synthetic(3);
    let w = ingest::prepare(&data.series, &ingest::WindowConfig::default()).unwrap();
    let hp = Hyperparams {
        seed: 11,
        ..Hyperparams::default()
    };
    let r1 = train::fit(&w, &hp).unwrap();
    let r2 = train::fit(&w, &hp).unwrap();
    let same_params = bits(r1.theta.theta()) == bits(r2.theta.theta())
        && params_bits(&r1.encoder) == params_bits(&r2.encoder)
        && params_bits(&r1.decoder) == params_bits(&r2.decoder)
        && r1.loss_history == r2.loss_history;
    outcome(
        same_json && same_params,
        format!("byte-identical JSON: {same_json}, bitwise-identical parameters: {same_params}"),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 gradient correctness", Duration::from_secs(10), gradient_correctness),
        ("2 algebraic identities", Duration::from_secs(5), algebraic_identities),
        ("3 block-diagonal recovery", Duration::from_secs(1), block_diagonal_recovery),
        ("4 synthetic end-to-end", Duration::from_secs(300), synthetic_end_to_end),
        ("5 training sanity", Duration::from_secs(30), training_sanity),
        ("6 metric oracles", Duration::from_secs(1), metric_oracles),
        ("7 determinism", Duration::from_secs(60), determinism),
    ];
    let mut failures = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= limit;
        failures += usize::from(!pass);
        println!(
            "criterion {name}: {} ({}; {:.2}s of {}s allowed)",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
