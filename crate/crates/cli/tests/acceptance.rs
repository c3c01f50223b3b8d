//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use pkt_core::gradcheck::{self, GradcheckConfig};
use pkt_core::synthetic::{
    corrupt_teacher, gaussian_blobs, random_binary_embeddings, BlobConfig, TransferProblem,
};
use pkt_core::trainer::epoch_means;
use pkt_core::{
    average_precision_11pt, conditional_probabilities, evaluate, information_potentials, io,
    kernel_eval, kl_loss, potential_equality_check, train, FeatureMatrix, KernelSpec,
    ProbabilityMatrix, RetrievalIndex, StudentModel, TrainConfig,
};
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

fn random_features(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> FeatureMatrix {
    FeatureMatrix::new(Array2::from_shape_simple_fn((n, dim), || {
        rng.random_range(-3.0..3.0)
    }))
    .unwrap()
}

/// Column-stochastic matrix with a zero diagonal.
fn random_probability(rng: &mut ChaCha8Rng, n: usize) -> ProbabilityMatrix {
    let mut m = Array2::from_shape_simple_fn((n, n), || rng.random_range(0.01..1.0));
    for j in 0..n {
        m[[j, j]] = 0.0;
        let s: f64 = m.column(j).sum();
        m.column_mut(j).mapv_inplace(|v| v / s);
    }
    ProbabilityMatrix::new(m).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let summary = gradcheck::run(&GradcheckConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let n_ok = summary
        .instances
        .iter()
        .all(|r| (4..=12).contains(&r.n) && (2..=8).contains(&r.dim));
    let pass = summary.instances.len() >= 20
        && n_ok
        && summary.passed()
        && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "{} instances, both kernels, max rel error {:.2e}, {:.2?}",
            summary.instances.len(),
            summary.max_rel_error,
            elapsed
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let n = rng.random_range(2..=40);
        let dim = rng.random_range(2..=10);
        let feats = random_features(&mut rng, n, dim);
        let spec = if t % 2 == 0 {
            KernelSpec::Cosine
        } else {
            KernelSpec::Gaussian {
                width: rng.random_range(0.1..20.0),
            }
        };
        let p = conditional_probabilities(&feats, &spec).unwrap();
        for s in p.slot_sums() {
            worst = worst.max((s - 1.0).abs());
        }
    }
    outcome(
        worst <= 1e-9,
        format!("100 matrices, worst slot-sum deviation {worst:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut self_worst: f64 = 0.0;
    let mut min_kl = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(2..=12);
        let p = random_probability(&mut rng, n);
        let q = random_probability(&mut rng, n);
        self_worst = self_worst.max(kl_loss(&p, &p).unwrap().abs());
        min_kl = min_kl.min(kl_loss(&p, &q).unwrap());
    }
    let p = ProbabilityMatrix::new(ndarray::array![
        [0.0, 0.5, 0.5],
        [0.7, 0.0, 0.5],
        [0.3, 0.5, 0.0]
    ])
    .unwrap();
    let q = ProbabilityMatrix::new(ndarray::array![
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [0.5, 0.5, 0.0]
    ])
    .unwrap();
    let hand = kl_loss(&p, &q).unwrap();
    let pass = self_worst <= 1e-12 && min_kl >= -1e-9 && (hand - 0.082282).abs() <= 1e-6;
    outcome(pass, format!("|KL(P,P)| <= {self_worst:.1e}, min KL over 1000 pairs {min_kl:.3e}, hand case {hand:.6}"))
}

/// Potentials transcribed literally: a loop over classes and both sample indices.
fn naive_potentials(feats: &FeatureMatrix, labels: &[usize], spec: &KernelSpec) -> [f64; 4] {
    let n = feats.rows();
    let nf = n as f64;
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let (mut v_in, mut v_all, mut v_btw) = (0.0, 0.0, 0.0);
    for &c in &classes {
        let jc = labels.iter().filter(|&&l| l == c).count() as f64;
        for i in 0..n {
            for j in 0..n {
                let k = kernel_eval(feats.row(i), feats.row(j), spec).unwrap();
                if labels[i] == c && labels[j] == c {
                    v_in += k;
                }
                v_all += (jc / nf) * (jc / nf) * k;
                if labels[i] == c {
                    v_btw += (jc / nf) * k;
                }
            }
        }
    }
    let norm = 1.0 / (nf * nf);
    let (v_in, v_all, v_btw) = (norm * v_in, norm * v_all, norm * v_btw);
    [v_in, v_all, v_btw, v_in + v_all - 2.0 * v_btw]
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for t in 0..40 {
        let n = rng.random_range(2..=50);
        let dim = rng.random_range(1..=8);
        let feats = random_features(&mut rng, n, dim);
        let n_classes = rng.random_range(1..=5);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
        let spec = if t % 2 == 0 {
            KernelSpec::Cosine
        } else {
            KernelSpec::Gaussian {
                width: rng.random_range(0.5..10.0),
            }
        };
        let got = information_potentials(&feats, &labels, &spec).unwrap();
        let want = naive_potentials(&feats, &labels, &spec);
        for (a, b) in [got.v_in, got.v_all, got.v_btw, got.qmi].iter().zip(want) {
            worst = worst.max((a - b).abs());
        }
    }
    let feats = random_features(&mut rng, 30, 4);
    let single = information_potentials(&feats, &[7; 30], &KernelSpec::Cosine)
        .unwrap()
        .qmi;
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && single.abs() <= 1e-12 && elapsed < Duration::from_secs(5);
    outcome(pass, format!("40 instances, worst deviation {worst:.2e}, single-class qmi {single:.1e}, {elapsed:.2?}"))
}

fn criterion_5() -> Outcome {
    let problem = gaussian_blobs(&BlobConfig::default()).unwrap();
    let teacher = problem.train_teacher.select(&(0..120).collect::<Vec<_>>());
    let labels = &problem.train_labels[..120];
    let copy = teacher.clone();
    let scaled = FeatureMatrix::new(teacher.as_array() * 3.0).unwrap();
    let c = KernelSpec::Cosine;

    let pt = information_potentials(&teacher, labels, &c).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for (name, student) in [("copy", &copy), ("x3", &scaled)] {
        let report = potential_equality_check(&teacher, student, &c, &c, 1e-12).unwrap();
        let ps = information_potentials(student, labels, &c).unwrap();
        let gap = [
            pt.v_in - ps.v_in,
            pt.v_all - ps.v_all,
            pt.v_btw - ps.v_btw,
            pt.qmi - ps.qmi,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
        pass &= report.within_tol && gap <= 1e-12;
        if name == "copy" {
            pass &= report.max_deviation == 0.0 && gap == 0.0;
        }
        details.push(format!(
            "{name}: kernel deviation {:.1e}, potential gap {gap:.1e}",
            report.max_deviation
        ));
    }
    outcome(pass, details.join("; "))
}

fn criterion_6() -> Outcome {
    let cases = [
        (average_precision_11pt(&[true, true], 2).unwrap(), 1.0),
        (average_precision_11pt(&[false, true], 1).unwrap(), 0.5),
        (
            average_precision_11pt(&[true, false, true, false], 2).unwrap(),
            (6.0 + 5.0 * (2.0 / 3.0)) / 11.0,
        ),
    ];
    let hand_ok = cases.iter().all(|(got, want)| (got - want).abs() <= 1e-9);
    let (db, db_labels) = random_binary_embeddings(2000, 16, 60).unwrap();
    let (queries, query_labels) = random_binary_embeddings(200, 16, 61).unwrap();
    let index = RetrievalIndex::new(db, db_labels).unwrap();
    let map = evaluate(&index, &queries, &query_labels, &[]).unwrap().map;
    outcome(
        hand_ok && (map - 0.5).abs() <= 0.05,
        format!(
            "hand cases {:.4}/{:.4}/{:.4}, random balanced binary mAP {map:.4} over 200 queries",
            cases[0].0, cases[1].0, cases[2].0
        ),
    )
}

const STUDENT_DIMS: [usize; 3] = [16, 32, 8];
const INIT_SEED: u64 = 1;

fn suite_config(sup_weight: f64) -> TrainConfig {
    TrainConfig {
        epochs: 200,
        batch_size: 64,
        lr: 1e-4,
        sup_weight,
        seed: 3,
        ..Default::default()
    }
}

fn student_map(model: &StudentModel, p: &TransferProblem) -> f64 {
    let db = model.forward(&p.train_inputs).unwrap();
    let q = model.forward(&p.query_inputs).unwrap();
    let index = RetrievalIndex::new(db, p.train_labels.clone()).unwrap();
    evaluate(&index, &q, &p.query_labels, &[]).unwrap().map
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let p = gaussian_blobs(&BlobConfig::default()).unwrap();
    let init = StudentModel::new(&STUDENT_DIMS, INIT_SEED).unwrap();
    let init_map = student_map(&init, &p);
    let (trained, trace) = train(
        init,
        &p.train_inputs,
        &p.train_teacher,
        None,
        &suite_config(0.0),
    )
    .unwrap();
    let means = epoch_means(&trace);
    let ratio = means[means.len() - 1] / means[0];
    let trained_map = student_map(&trained, &p);
    let elapsed = start.elapsed();
    let gain = 100.0 * (trained_map - init_map);
    let pass = ratio < 0.5 && gain >= 10.0 && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "loss ratio {ratio:.3}, mAP {:.2} -> {:.2} (+{gain:.2} points), {elapsed:.2?}",
            100.0 * init_map,
            100.0 * trained_map
        ),
    )
}

/// mAP (in points) of unsupervised and supervised runs against a teacher
/// with the given corruption fraction.
fn supervised_pair(corruption: f64) -> (f64, f64) {
    let p = gaussian_blobs(&BlobConfig::default()).unwrap();
    let teacher = corrupt_teacher(&p.train_teacher, corruption, 99).unwrap();
    let run = |w: f64| {
        let init = StudentModel::new(&STUDENT_DIMS, INIT_SEED).unwrap();
        let (m, _) = train(
            init,
            &p.train_inputs,
            &teacher,
            Some(&p.train_labels),
            &suite_config(w),
        )
        .unwrap();
        100.0 * student_map(&m, &p)
    };
    (run(0.0), run(0.001))
}

fn criterion_8a() -> Outcome {
    let (unsup, sup) = supervised_pair(0.5);
    outcome(
        sup >= unsup - 0.5,
        format!("half-noise teacher: unsupervised {unsup:.2}, sup_weight 0.001 {sup:.2}"),
    )
}

fn criterion_8b() -> Outcome {
    let (unsup, sup) = supervised_pair(1.0);
    outcome(
        sup >= unsup + 5.0,
        format!("pure-noise teacher: unsupervised {unsup:.2}, sup_weight 0.001 {sup:.2}, gain {:+.2} (need >= 5)", sup - unsup),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let p = gaussian_blobs(&BlobConfig {
        train_per_class: 40,
        ..Default::default()
    })
    .unwrap();
    let path = |name: &str| dir.path().join(name);
    io::save_features(&path("x.txt"), &p.train_inputs).unwrap();
    io::save_features(&path("t.txt"), &p.train_teacher).unwrap();
    io::save_labels(&path("l.txt"), &p.train_labels).unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_owned();

    let invoke = |tag: &str| -> Option<(Vec<u8>, Vec<u8>)> {
        let model = path(&format!("model_{tag}.txt"));
        let log = path(&format!("loss_{tag}.txt"));
        let status = Command::new(env!("CARGO_BIN_EXE_pkt"))
            .args([
                "transfer",
                "--input",
                &s(&path("x.txt")),
                "--teacher",
                &s(&path("t.txt")),
            ])
            .args([
                "--labels",
                &s(&path("l.txt")),
                "--sup-weight",
                "0.001",
                "--arch",
                "32,8",
            ])
            .args([
                "--epochs",
                "10",
                "--batch-size",
                "64",
                "--lr",
                "1e-4",
                "--seed",
                "5",
            ])
            .args(["--out", &s(&model), "--loss-log", &s(&log)])
            .status()
            .ok()?;
        status
            .success()
            .then(|| (std::fs::read(model).unwrap(), std::fs::read(log).unwrap()))
    };
    match (invoke("a"), invoke("b")) {
        (Some(a), Some(b)) => {
            let same = a == b;
            outcome(
                same,
                format!(
                    "model {} bytes, loss log {} bytes, identical: {same}",
                    a.0.len(),
                    a.1.len()
                ),
            )
        }
        _ => outcome(false, "transfer exited with an error"),
    }
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1", "gradient fidelity", criterion_1),
        ("2", "probability normalization", criterion_2),
        ("3", "KL correctness", criterion_3),
        ("4", "QMI oracle", criterion_4),
        ("5", "potential equality", criterion_5),
        ("6", "retrieval metrics", criterion_6),
        ("7", "end-to-end transfer", criterion_7),
        ("8a", "supervised non-inferiority", criterion_8a),
        (
            "8b",
            "supervised gain over pure-noise teacher",
            criterion_8b,
        ),
        ("9", "determinism", criterion_9),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        let o = run();
        println!(
            "criterion {id:<2} {} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
