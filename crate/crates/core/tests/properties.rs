use proptest::prelude::*;

use nc_ood::datagen::{generate, OodKind, SyntheticSpec};
use nc_ood::ddu::{fit_gmm, SpaceTag};
use nc_ood::eval::{auroc, false_positive_count, svd_spectrum_projection, ScoreSource, ScoredPopulations};
use nc_ood::linalg::{l2_normalize_rows, norm, pseudo_inverse, svd, RealMatrix};
use nc_ood::metrics::{equiangularity, equinormality, nc1, ncc_error, simplex_etf};
use nc_ood::rng::Stream;
use nc_ood::stats::class_statistics;
use nc_ood::FeatureBank;

fn gaussian(rows: usize, cols: usize, seed: u64) -> RealMatrix {
    let mut rng = Stream::derive(seed, "prop");
    RealMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

fn orthonormality_gap(q: &RealMatrix) -> f64 {
    q.t_matmul(q).max_abs_diff(&RealMatrix::identity(q.cols()))
}

fn check_svd(a: &RealMatrix) {
    let dec = svd(a).unwrap();
    let rel = dec.reconstruct().sub(a).frobenius_norm() / a.frobenius_norm().max(f64::MIN_POSITIVE);
    assert!(rel < 1e-10, "reconstruction {rel}");
    assert!(orthonormality_gap(&dec.u) < 1e-10);
    assert!(orthonormality_gap(&dec.v) < 1e-10);
    assert!(dec.singular_values.windows(2).all(|w| w[0] >= w[1]));
    assert!(dec.singular_values.iter().all(|&s| s >= 0.0));
}

/// Random clustered bank with every class present.
fn bank(c: usize, d: usize, per_class: usize, seed: u64) -> FeatureBank {
    let mut rng = Stream::derive(seed, "bank");
    let centers = RealMatrix::from_fn(c, d, |_, _| 4.0 * rng.standard_normal());
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for y in 0..c {
        for _ in 0..per_class {
            rows.push(centers.row(y).iter().map(|m| m + rng.standard_normal()).collect());
            labels.push(y);
        }
    }
    FeatureBank::new(RealMatrix::from_rows(&rows).unwrap(), labels, c).unwrap()
}

fn scores(seed: u64, n: usize, levels: u64) -> Vec<f64> {
    let mut rng = Stream::derive(seed, "scores");
    (0..n).map(|_| (rng.next_u64() % levels) as f64 * 0.25).collect()
}

#[test]
fn svd_holds_at_512() {
    check_svd(&gaussian(512, 512, 7));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_reconstructs(rows in 1usize..40, cols in 1usize..40, seed: u64) {
        check_svd(&gaussian(rows, cols, seed));
    }

    #[test]
    fn pinv_satisfies_penrose(rows in 1usize..12, cols in 1usize..12, rank in 1usize..6, seed: u64) {
        let rank = rank.min(rows).min(cols);
        let a = gaussian(rows, rank, seed).matmul(&gaussian(rank, cols, seed ^ 1));
        let p = pseudo_inverse(&a).unwrap();
        let ap = a.matmul(&p);
        let pa = p.matmul(&a);
        prop_assert!(ap.matmul(&a).max_abs_diff(&a) < 1e-8);
        prop_assert!(pa.matmul(&p).max_abs_diff(&p) < 1e-8);
        prop_assert!(ap.max_abs_diff(&ap.transpose()) < 1e-8);
        prop_assert!(pa.max_abs_diff(&pa.transpose()) < 1e-8);
    }

    #[test]
    fn pinv_is_an_involution_on_full_rank(n in 1usize..10, seed: u64) {
        let a = gaussian(n, n, seed).add(&RealMatrix::identity(n).scaled(n as f64));
        let back = pseudo_inverse(&pseudo_inverse(&a).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&a) < 1e-6);
    }

    #[test]
    fn l2_normalization_is_idempotent(rows in 1usize..30, cols in 1usize..10, seed: u64) {
        let once = l2_normalize_rows(&gaussian(rows, cols, seed), 1e-12);
        for r in once.row_iter() {
            prop_assert!((norm(r) - 1.0).abs() <= 1e-12);
        }
        prop_assert!(l2_normalize_rows(&once, 1e-12).max_abs_diff(&once) <= 1e-12);
    }

    #[test]
    fn statistics_follow_translation(c in 2usize..6, d in 1usize..6, seed: u64) {
        let b = bank(c, d, 5, seed);
        let shift: Vec<f64> = (0..d).map(|k| k as f64 * 3.5 - 2.0).collect();
        let moved = b.with_features(b.features().center_rows(&shift.iter().map(|t| -t).collect::<Vec<_>>())).unwrap();
        let (s0, s1) = (class_statistics(&b).unwrap(), class_statistics(&moved).unwrap());
        prop_assert!(s1.class_means.max_abs_diff(&s0.class_means.center_rows(&shift.iter().map(|t| -t).collect::<Vec<_>>())) < 1e-10);
        prop_assert!(s1.within_cov.max_abs_diff(&s0.within_cov) < 1e-10);
        prop_assert!(s1.between_cov.max_abs_diff(&s0.between_cov) < 1e-10);
    }

    #[test]
    fn statistics_follow_rotation(c in 2usize..6, d in 1usize..6, seed: u64) {
        let b = bank(c, d, 5, seed);
        let q = svd(&gaussian(d, d, seed ^ 9)).unwrap().u;
        let rotated = b.with_features(b.features().matmul_t(&q)).unwrap();
        let (s0, s1) = (class_statistics(&b).unwrap(), class_statistics(&rotated).unwrap());
        let conj = |m: &RealMatrix| q.matmul(m).matmul_t(&q);
        prop_assert!(s1.within_cov.max_abs_diff(&conj(&s0.within_cov)) < 1e-10);
        prop_assert!(s1.between_cov.max_abs_diff(&conj(&s0.between_cov)) < 1e-10);
    }

    #[test]
    fn covariances_are_symmetric_psd(c in 2usize..6, d in 1usize..6, seed: u64) {
        let s = class_statistics(&bank(c, d, 4, seed)).unwrap();
        for cov in [&s.within_cov, &s.between_cov] {
            prop_assert!(cov.max_abs_diff(&cov.transpose()) <= 1e-12);
            let min_eig = svd(cov).unwrap().singular_values;
            // symmetric PSD: x·Σ·x ≥ 0 along every singular direction
            let v = svd(cov).unwrap().v;
            for k in 0..min_eig.len() {
                let col: Vec<f64> = (0..v.rows()).map(|i| v[(i, k)]).collect();
                let q: f64 = cov.mat_vec(&col).iter().zip(&col).map(|(a, b)| a * b).sum();
                prop_assert!(q >= -1e-10);
            }
        }
        let mean = s.class_means.column_mean();
        prop_assert!(mean.iter().zip(&s.global_mean).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn metrics_are_scale_invariant(c in 2usize..6, seed: u64, scale in 0.01f64..100.0) {
        let d = c + 1;
        let b = bank(c, d, 6, seed);
        let scaled = b.with_features(b.features().scaled(scale)).unwrap();
        let (s0, s1) = (class_statistics(&b).unwrap(), class_statistics(&scaled).unwrap());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs());
        prop_assert!(close(nc1(&s0, c).unwrap(), nc1(&s1, c).unwrap()));
        prop_assert!(close(
            equinormality(&s0.class_means, Some(&s0.global_mean)).unwrap(),
            equinormality(&s1.class_means, Some(&s1.global_mean)).unwrap()
        ));
        prop_assert!(close(
            equiangularity(&s0.class_means, Some(&s0.global_mean)).unwrap(),
            equiangularity(&s1.class_means, Some(&s1.global_mean)).unwrap()
        ));
        prop_assert_eq!(ncc_error(&b, &s0).unwrap(), ncc_error(&scaled, &s1).unwrap());
    }

    #[test]
    fn ncc_error_ignores_relabeling(c in 2usize..6, seed: u64) {
        let b = bank(c, 3, 6, seed);
        let mut perm: Vec<usize> = (0..c).collect();
        Stream::derive(seed, "perm").shuffle(&mut perm);
        let relabeled = FeatureBank::new(
            b.features().clone(),
            b.labels().iter().map(|&y| perm[y]).collect(),
            c,
        ).unwrap();
        prop_assert_eq!(
            ncc_error(&b, &class_statistics(&b).unwrap()).unwrap(),
            ncc_error(&relabeled, &class_statistics(&relabeled).unwrap()).unwrap()
        );
    }

    #[test]
    fn auroc_depends_only_on_order(n in 1usize..60, m in 1usize..60, seed: u64, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let id = scores(seed, n, 12);
        let ood = scores(seed ^ 3, m, 12);
        let base = auroc(&ScoredPopulations::new(id.clone(), ood.clone(), ScoreSource::GmmFeature).unwrap());
        let map = |v: &[f64]| v.iter().map(|x| (a * x + b).exp()).collect::<Vec<_>>();
        let mapped = auroc(&ScoredPopulations::new(map(&id), map(&ood), ScoreSource::GmmFeature).unwrap());
        prop_assert_eq!(base, mapped);
        let pop = ScoredPopulations::new(id, ood, ScoreSource::GmmFeature).unwrap();
        prop_assert!((auroc(&pop) + auroc(&pop.swapped()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn false_positives_grow_as_ood_rises(n in 1usize..50, m in 1usize..50, seed: u64, lift in 0.0f64..3.0) {
        let id = scores(seed, n, 10);
        let ood = scores(seed ^ 5, m, 10);
        let lifted: Vec<f64> = ood.iter().map(|x| x + lift).collect();
        let fp = |o: Vec<f64>| false_positive_count(&ScoredPopulations::new(id.clone(), o, ScoreSource::GmmFeature).unwrap());
        let (before, after) = (fp(ood), fp(lifted));
        prop_assert!(before <= after);
        prop_assert!(after <= n.min(m));
    }

    #[test]
    fn spectrum_of_training_set_projects_onto_itself(rows in 2usize..40, cols in 1usize..10, seed: u64) {
        let a = gaussian(rows, cols, seed);
        let p = svd_spectrum_projection(&a, &a).unwrap();
        for (s, m) in p.train_singular_values.iter().zip(&p.probe_magnitudes) {
            prop_assert!((s - m).abs() <= 1e-9 * (1.0 + s));
        }
    }

    #[test]
    fn simplex_etf_is_collapsed(c in 2usize..=10) {
        let etf = simplex_etf(c);
        prop_assert!(equinormality(&etf, None).unwrap() <= 1e-9);
        prop_assert!(equiangularity(&etf, None).unwrap() <= 1e-9);
    }

    #[test]
    fn generated_banks_have_requested_counts(c in 2usize..7, extra in 0usize..4, per in 1usize..20, ood in 1usize..30, seed: u64) {
        let spec = SyntheticSpec {
            seed,
            num_classes: c,
            input_dim: c - 1 + extra,
            samples_per_class: per,
            cluster_spread: 0.5,
            class_separation: 3.0,
            ood_kind: OodKind::IsotropicShell { radius: 5.0 },
            ood_samples: ood,
        };
        let data = generate(&spec).unwrap();
        prop_assert_eq!(data.train.class_counts(), vec![per; c]);
        prop_assert_eq!(data.id_test.class_counts(), vec![per; c]);
        prop_assert_eq!(data.ood_test.shape(), (ood, spec.input_dim));
        for r in data.ood_test.row_iter() {
            prop_assert!((norm(r) - 5.0).abs() < 1e-9);
        }
        prop_assert_eq!(generate(&spec).unwrap(), data);
    }

    #[test]
    fn gmm_ignores_component_order(c in 2usize..5, seed: u64) {
        let b = bank(c, 3, 8, seed);
        let gmm = fit_gmm(&b, SpaceTag::FeatureSpace).unwrap();
        let flipped = FeatureBank::new(
            b.features().clone(),
            b.labels().iter().map(|&y| c - 1 - y).collect(),
            c,
        ).unwrap();
        let gmm_flipped = fit_gmm(&flipped, SpaceTag::FeatureSpace).unwrap();
        let probe = gaussian(10, 3, seed ^ 11).scaled(4.0);
        for r in probe.row_iter() {
            let (a, b) = (gmm.log_density(r).unwrap(), gmm_flipped.log_density(r).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn gmm_follows_translation(c in 2usize..5, seed: u64) {
        let b = bank(c, 3, 8, seed);
        let t = [5.0, -3.0, 0.5];
        let neg = [-5.0, 3.0, -0.5];
        let moved = b.with_features(b.features().center_rows(&neg)).unwrap();
        let g0 = fit_gmm(&b, SpaceTag::FeatureSpace).unwrap();
        let g1 = fit_gmm(&moved, SpaceTag::FeatureSpace).unwrap();
        let probe = gaussian(10, 3, seed ^ 13).scaled(3.0);
        for r in probe.row_iter() {
            let shifted: Vec<f64> = r.iter().zip(&t).map(|(x, s)| x + s).collect();
            let (a, b) = (g0.log_density(r).unwrap(), g1.log_density(&shifted).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}
