//! Acceptance suite. Each test prints one line,
//! `criterion N: PASS|FAIL <detail>`, and fails when the criterion does.
//!
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1`
//! to see the lines in order.

use std::time::{Duration, Instant};

use nc_ood::datagen::{generate, OodKind, SyntheticData, SyntheticSpec};
use nc_ood::ddu::{GaussianMixtureDensity, SpaceTag};
use nc_ood::eval::{auroc, svd_spectrum_projection, ScoreSource, ScoredPopulations};
use nc_ood::harness::{
    evaluate, report, run_experiment, ExperimentConfig, ExperimentKind, InterventionSettings,
    CORRELATION_SUMMARY_FILE, SCHEMA_VERSION,
};
use nc_ood::linalg::{dot, l2_normalize_rows, norm, RealMatrix};
use nc_ood::metrics::{nc_report, simplex_etf};
use nc_ood::model::{
    cross_entropy, cross_entropy_grad, intervene_observed, l2_normalize_backward, measure, nc_loss,
    nc_loss_grad, train, train_observed, Arm, LossMode, MlpClassifier, ModelSpec, TrainConfig,
};
use nc_ood::rng::Stream;
use nc_ood::FeatureBank;

fn verdict(n: u32, pass: bool, elapsed: Duration, limit: Option<Duration>, detail: String) {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = pass && in_time;
    println!(
        "criterion {n}: {} {detail} ({:.2}s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

fn desk_spec(seed: u64, separation: f64, spread: f64, ood_kind: OodKind) -> SyntheticSpec {
    SyntheticSpec {
        seed,
        num_classes: 8,
        input_dim: 16,
        samples_per_class: 100,
        cluster_spread: spread,
        class_separation: separation,
        ood_kind,
        ood_samples: 400,
    }
}

fn ce_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        seed,
        epochs,
        batch_size: 64,
        initial_lr: 0.1,
        lr_milestones: vec![],
        lr_decay: 0.1,
        loss_mode: LossMode::CrossEntropy,
        class_balanced_batches: false,
    }
}

fn model_spec(l2: bool) -> ModelSpec {
    ModelSpec {
        l2_normalize_features: l2,
        ..ModelSpec::default()
    }
}

fn trained(data: &SyntheticData, l2: bool, seed: u64, epochs: usize) -> MlpClassifier {
    let m = MlpClassifier::init(&model_spec(l2), 16, 8, seed).unwrap();
    train(&m, &data.train, &ce_config(seed, epochs)).unwrap().0
}

#[test]
fn criterion_01_etf_fixed_point() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for c in 2..=10 {
        let etf = simplex_etf(c);
        let per_class = 3;
        let rows: Vec<Vec<f64>> = (0..c * per_class).map(|i| etf.row(i / per_class).to_vec()).collect();
        let labels = (0..c * per_class).map(|i| i / per_class).collect();
        let bank = FeatureBank::new(RealMatrix::from_rows(&rows).unwrap(), labels, c).unwrap();
        let r = nc_report(&bank, &etf).unwrap();
        worst = worst.max(r.max_value());
    }
    verdict(
        1,
        worst <= 1e-9,
        t.elapsed(),
        Some(Duration::from_secs(1)),
        format!("largest metric over C=2..10 is {worst:.3e}"),
    );
}

#[test]
fn criterion_02_equiangularity_target() {
    let t = Instant::now();
    let etf = simplex_etf(10);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            if i != j {
                let cos = dot(etf.row(i), etf.row(j)) / (norm(etf.row(i)) * norm(etf.row(j)));
                worst = worst.max((cos + 1.0 / 9.0).abs());
            }
        }
    }
    verdict(
        2,
        worst <= 1e-12,
        t.elapsed(),
        None,
        format!("max |cos + 1/9| = {worst:.3e}"),
    );
}

fn central_difference(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[test]
fn criterion_03_gradient_oracle() {
    let t = Instant::now();
    let (c, d, b) = (3, 4, 12);
    let mut rng = Stream::derive(3, "acceptance-gradients");
    let labels: Vec<usize> = (0..b).map(|i| i % c).collect();
    let raw = RealMatrix::from_fn(b, d, |i, j| rng.standard_normal() * 0.5 + if j == labels[i] { 2.0 } else { 0.0 });
    let w = RealMatrix::from_fn(c, d, |_, _| rng.standard_normal());
    let eps = 1e-12;

    // cross-entropy against logits
    let logits = raw.matmul_t(&w);
    let (_, d_logits) = cross_entropy_grad(&logits, &labels).unwrap();
    let fd = central_difference(logits.as_slice(), |x| {
        cross_entropy(&RealMatrix::new(b, c, x.to_vec()).unwrap(), &labels).unwrap()
    });
    let ce_err = relative_error(d_logits.as_slice(), &fd);

    // collapse loss plus cross-entropy, both through the normalization layer
    let objective = |x: &[f64]| {
        let z = l2_normalize_rows(&RealMatrix::new(b, d, x.to_vec()).unwrap(), eps);
        nc_loss(&z, &labels, &w).unwrap() + cross_entropy(&z.matmul_t(&w), &labels).unwrap()
    };
    let z = l2_normalize_rows(&raw, eps);
    let g = nc_loss_grad(&z, &labels, &w).unwrap();
    let (_, d_logits) = cross_entropy_grad(&z.matmul_t(&w), &labels).unwrap();
    let d_z = g.d_features.add(&d_logits.matmul(&w));
    let analytic = l2_normalize_backward(&raw, &z, &d_z, eps);
    let through_err = relative_error(analytic.as_slice(), &central_difference(raw.as_slice(), objective));

    // collapse loss against the classifier
    let fd_w = central_difference(w.as_slice(), |x| {
        nc_loss(&z, &labels, &RealMatrix::new(c, d, x.to_vec()).unwrap()).unwrap()
    });
    let w_err = relative_error(g.d_classifier.as_slice(), &fd_w);

    let worst = ce_err.max(through_err).max(w_err);
    verdict(
        3,
        worst < 1e-4,
        t.elapsed(),
        Some(Duration::from_secs(5)),
        format!("relative errors: ce {ce_err:.2e}, through L2 {through_err:.2e}, classifier {w_err:.2e}"),
    );
}

#[test]
fn criterion_04_auroc_oracle() {
    let t = Instant::now();
    let mut rng = Stream::derive(4, "acceptance-auroc");
    let mut mismatches = 0;
    for _ in 0..50 {
        // a coarse grid forces many ties
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.below(40) as f64 * 0.25).collect() };
        let id = draw(200);
        let ood = draw(100);
        let mut doubled_wins: u64 = 0;
        for a in &id {
            for b in &ood {
                doubled_wins += if a > b { 2 } else if a == b { 1 } else { 0 };
            }
        }
        let oracle = doubled_wins as f64 / (2 * 200 * 100) as f64;
        let got = auroc(&ScoredPopulations::new(id, ood, ScoreSource::GmmFeature).unwrap());
        if got.to_bits() != oracle.to_bits() {
            mismatches += 1;
        }
    }
    verdict(
        4,
        mismatches == 0,
        t.elapsed(),
        Some(Duration::from_secs(1)),
        format!("{mismatches}/50 populations differ from the pairwise count"),
    );
}

fn gauss_jordan_inverse(a: &RealMatrix) -> (RealMatrix, f64) {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        let p = m[col][col];
        det *= p;
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                m[r].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    (RealMatrix::from_fn(n, n, |i, j| m[i][n + j]), det)
}

fn naive_log_density(means: &RealMatrix, covs: &[RealMatrix], priors: &[f64], z: &[f64]) -> f64 {
    let d = z.len() as f64;
    let terms: Vec<f64> = covs
        .iter()
        .enumerate()
        .map(|(y, cov)| {
            let (inv, det) = gauss_jordan_inverse(cov);
            let diff: Vec<f64> = z.iter().zip(means.row(y)).map(|(a, b)| a - b).collect();
            let maha = dot(&diff, &inv.mat_vec(&diff));
            priors[y].ln() - 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + det.ln() + maha)
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[test]
fn criterion_05_gmm_density_oracle() {
    let t = Instant::now();
    let mut rng = Stream::derive(5, "acceptance-gmm");
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c = 1 + rng.below(5);
        let d = 1 + rng.below(8);
        let means = RealMatrix::from_fn(c, d, |_, _| 2.0 * rng.standard_normal());
        let covs: Vec<RealMatrix> = (0..c)
            .map(|_| {
                let a = RealMatrix::from_fn(d, d, |_, _| rng.standard_normal());
                a.matmul_t(&a).add(&RealMatrix::identity(d).scaled(0.5))
            })
            .collect();
        let raw: Vec<f64> = (0..c).map(|_| 0.1 + rng.uniform()).collect();
        let total: f64 = raw.iter().sum();
        let mut priors: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let drift: f64 = 1.0 - priors.iter().sum::<f64>();
        priors[0] += drift;
        let gmm = GaussianMixtureDensity::from_parameters(means.clone(), covs.clone(), &priors, 0.0, SpaceTag::FeatureSpace)
            .unwrap();
        for _ in 0..5 {
            let z: Vec<f64> = (0..d).map(|_| 3.0 * rng.standard_normal()).collect();
            let got = gmm.log_density(&z).unwrap();
            let want = naive_log_density(&means, &covs, &priors, &z);
            worst = worst.max((got - want).abs());
        }
    }
    let standard = GaussianMixtureDensity::from_parameters(
        RealMatrix::zeros(1, 2),
        vec![RealMatrix::identity(2)],
        &[1.0],
        0.0,
        SpaceTag::FeatureSpace,
    )
    .unwrap();
    let mode_err = (standard.log_density(&[0.0, 0.0]).unwrap() + (2.0 * std::f64::consts::PI).ln()).abs();
    verdict(
        5,
        worst <= 1e-9 && mode_err <= 1e-12,
        t.elapsed(),
        Some(Duration::from_secs(1)),
        format!("max |log q − oracle| = {worst:.2e}, standard-normal mode error {mode_err:.2e}"),
    );
}

fn first_epoch_below(data: &SyntheticData, l2: bool, seed: u64, threshold: f64, max_epochs: usize) -> Option<usize> {
    let mut m = MlpClassifier::init(&model_spec(l2), 16, 8, seed).unwrap();
    let mut first = None;
    train_observed(&mut m, &data.train, &ce_config(seed, max_epochs), |r, _| {
        if first.is_none() && r.nc.nc1 < threshold {
            first = Some(r.epoch);
        }
        Ok(())
    })
    .unwrap();
    first
}

#[test]
fn criterion_06_faster_collapse_with_l2() {
    let t = Instant::now();
    let mut passes = 0;
    let mut firsts = Vec::new();
    for seed in 0..5 {
        let data = generate(&desk_spec(seed, 2.4, 0.8, OodKind::IsotropicShell { radius: 6.0 })).unwrap();
        let plain = first_epoch_below(&data, false, seed, 0.5, 200);
        let l2 = first_epoch_below(&data, true, seed, 0.5, 200);
        if let (Some(p), Some(q)) = (plain, l2) {
            if 2 * q <= p {
                passes += 1;
            }
        }
        firsts.push(format!("{plain:?}/{l2:?}"));
    }
    verdict(
        6,
        passes >= 4,
        t.elapsed(),
        Some(Duration::from_secs(120)),
        format!("{passes}/5 seeds; first epoch with NC1 < 0.5, plain/L2: {}", firsts.join(" ")),
    );
}

#[test]
fn criterion_07_scorer_ordering() {
    let t = Instant::now();
    let mut sums = [0.0; 3];
    for seed in 0..5 {
        let data = generate(&desk_spec(seed, 4.0, 1.0, OodKind::ShiftedClusters { shift: 10.0 })).unwrap();
        let model = trained(&data, false, seed, 60);
        let s = evaluate(&model, &data).unwrap().summary;
        for (acc, source) in sums.iter_mut().zip(ScoreSource::ALL) {
            *acc += s.auroc(source) / 5.0;
        }
    }
    let [feature, logit, softmax] = sums;
    verdict(
        7,
        feature - softmax >= 0.01 && feature - logit >= 0.01,
        t.elapsed(),
        Some(Duration::from_secs(120)),
        format!("mean AUROC gmm-feature {feature:.4}, gmm-logit {logit:.4}, softmax-max {softmax:.4}"),
    );
}

#[test]
fn criterion_08_intervention() {
    let t = Instant::now();
    let (total, arm_epochs, lr_factor) = (60, 20, 2.0);
    let mut passes = 0;
    let mut details = Vec::new();
    for seed in 0..5 {
        let data = generate(&desk_spec(seed, 4.0, 1.0, OodKind::ShiftedClusters { shift: 10.0 })).unwrap();
        let full = ce_config(seed, total);
        let checkpoint = trained(&data, false, seed, total / 2);
        let (_, _, start) = measure(&checkpoint, &data.train).unwrap();
        let control = full.continuation(total / 2, LossMode::CrossEntropy, 5, lr_factor);
        let nc_arm = full.continuation(total / 2, LossMode::NcLoss, arm_epochs, lr_factor);
        let mut false_positives = Vec::new();
        let outcome = intervene_observed(&checkpoint, &data.train, &control, &nc_arm, |arm, _, m| {
            if arm == Arm::Intervention {
                false_positives.push(evaluate(m, &data)?.summary.false_positives);
            }
            Ok(())
        })
        .unwrap();
        let halved = outcome.intervention.records[..5].iter().any(|r| r.nc.nc1 <= start.nc1 / 2.0);
        let control_change = outcome
            .control
            .records
            .iter()
            .map(|r| (r.nc.nc1 - start.nc1).abs() / start.nc1)
            .fold(0.0, f64::max);
        let last = *false_positives.last().unwrap();
        let min = *false_positives.iter().min().unwrap();
        let ok = halved && control_change < 0.2 && last > min;
        passes += ok as usize;
        details.push(format!(
            "seed {seed}: halved={halved} ce-change={control_change:.3} fp {min}->{last}"
        ));
    }
    verdict(
        8,
        passes >= 4,
        t.elapsed(),
        Some(Duration::from_secs(180)),
        format!("{passes}/5 seeds [{}]", details.join("; ")),
    );
}

#[test]
fn criterion_09_correlation() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment_kind: ExperimentKind::TrainEval,
        data: desk_spec(0, 4.0, 1.0, OodKind::IsotropicShell { radius: 6.0 }),
        model: model_spec(false),
        train: ce_config(0, 60),
        seeds: (0..5).collect(),
        checkpoint_epochs: (1..12).map(|k| 5 * k).collect(),
        output_dir: dir.path().join("run"),
        intervention: InterventionSettings::default(),
    };
    let outcome = run_experiment(&config, 4).unwrap();
    let report_dir = dir.path().join("report");
    report(&outcome.manifest_path, &report_dir).unwrap();
    let summary = std::fs::read_to_string(report_dir.join(CORRELATION_SUMMARY_FILE)).unwrap();
    let row: Vec<&str> = summary
        .lines()
        .find(|l| l.starts_with("all,ea_means,auroc_gmm_feature,"))
        .unwrap()
        .split(',')
        .collect();
    let points: usize = row[3].parse().unwrap();
    let r: f64 = row[4].parse().unwrap();
    verdict(
        9,
        r < -0.5 && points == 60 && outcome.manifest.failures.is_empty(),
        t.elapsed(),
        Some(Duration::from_secs(120)),
        format!("Pearson r(ea_means, gmm-feature AUROC) = {r:.3} over {points} points"),
    );
}

#[test]
fn criterion_10_spectrum_tail() {
    let t = Instant::now();
    let mut passes = 0;
    let mut details = Vec::new();
    for seed in 0..5 {
        let data = generate(&desk_spec(seed, 4.0, 1.0, OodKind::IsotropicShell { radius: 6.0 })).unwrap();
        let model = trained(&data, true, seed, 60);
        let features = |x: &RealMatrix| model.forward(x).unwrap().0;
        let train_z = features(data.train.features());
        let id = svd_spectrum_projection(&train_z, &features(data.id_test.features())).unwrap();
        let ood = svd_spectrum_projection(&train_z, &features(&data.ood_test)).unwrap();
        let (id_tail, ood_tail) = (id.probe_tail(8), ood.probe_tail(8));
        passes += (ood_tail > id_tail) as usize;
        details.push(format!("{ood_tail:.2}>{id_tail:.2}"));
    }
    verdict(
        10,
        passes == 5,
        t.elapsed(),
        Some(Duration::from_secs(60)),
        format!("{passes}/5 seeds; OoD vs ID tail beyond index 8: {}", details.join(" ")),
    );
}

fn artifact_bytes(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let manifest = nc_ood::harness::Manifest::load(&root.join("manifest.json")).unwrap();
    let mut out: Vec<(String, Vec<u8>)> = manifest
        .artifacts
        .iter()
        .map(|a| (a.path.clone(), std::fs::read(root.join(&a.path)).unwrap()))
        .collect();
    out.push(("manifest.json".into(), std::fs::read(root.join("manifest.json")).unwrap()));
    out
}

#[test]
fn criterion_11_determinism() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let base = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment_kind: ExperimentKind::AblationGrid,
        data: SyntheticSpec {
            samples_per_class: 30,
            ood_samples: 60,
            ..desk_spec(0, 4.0, 1.0, OodKind::ShiftedClusters { shift: 10.0 })
        },
        model: ModelSpec {
            hidden_dims: vec![16, 8],
            ..ModelSpec::default()
        },
        train: TrainConfig {
            lr_milestones: vec![4],
            ..ce_config(0, 6)
        },
        seeds: vec![11, 12, 13],
        checkpoint_epochs: vec![2, 4],
        output_dir: dir.path().into(),
        intervention: InterventionSettings {
            arm_epochs: 3,
            lr_factor: 2.0,
        },
    };
    let mut identical = true;
    let mut kinds = Vec::new();
    let mut counted = 0;
    for kind in [ExperimentKind::AblationGrid, ExperimentKind::Intervention] {
        let runs: Vec<Vec<(String, Vec<u8>)>> = [(1, "a"), (4, "b"), (4, "c")]
            .into_iter()
            .map(|(jobs, tag)| {
                let config = ExperimentConfig {
                    experiment_kind: kind,
                    output_dir: dir.path().join(format!("{}-{tag}", kind.as_str())),
                    ..base.clone()
                };
                run_experiment(&config, jobs).unwrap();
                artifact_bytes(&config.output_dir)
            })
            .collect();
        identical &= runs.windows(2).all(|w| w[0] == w[1]);
        counted += runs[0].len();
        for ext in ["csv", "json", "ncfb", "ncck"] {
            if !runs[0].iter().any(|(p, _)| p.ends_with(ext)) {
                identical = false;
            }
        }
        kinds.push(kind.as_str());
    }
    verdict(
        11,
        identical,
        t.elapsed(),
        None,
        format!(
            "{} runs with --jobs 1 and 4 (twice): {counted} files each, byte-identical={identical}",
            kinds.join(" and ")
        ),
    );
}
