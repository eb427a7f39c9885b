mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use unoqa::clustering::{assign_grades, gmm_fit, hierarchy_fit, kmeans_fit, ClusterMethod, ClusterModel, Linkage};
use unoqa::dataset::QualityGrade;
use unoqa::evaluation::{accuracy, cohen_kappa, confusion, ConfusionMatrix, EvalReport, PipelineReport};
use unoqa::fdr::{fit_nmf, fit_pca, NmfConfig};
use unoqa::scoring::{calibrate_threshold, f1_at, otsu_threshold};

fn points(max_n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), 2..=max_n)
}

fn grade() -> impl Strategy<Value = QualityGrade> {
    (0usize..3).prop_map(|i| QualityGrade::from_index(i).unwrap())
}

// ------------------------------------------------------------------ threshold

proptest! {
    #[test]
    fn f1_threshold_is_exhaustively_optimal(
        pairs in prop::collection::vec((0u8..8, any::<bool>()), 2..=12)
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let pos: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(pos.iter().any(|&p| p) && !pos.iter().all(|&p| p));
        let m = calibrate_threshold(&scores, &pos).unwrap();
        prop_assert_eq!(m.f1.unwrap(), exhaustive_best_f1(&scores, &pos));
        prop_assert_eq!(f1_at(&scores, &pos, m.tau), m.f1.unwrap());
    }

    #[test]
    fn split_is_exhaustive_and_disjoint(
        scores in prop::collection::vec(-10.0f64..10.0, 2..40),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let pos: Vec<bool> = scores.iter().map(|_| r.gen()).collect();
        let m = calibrate_threshold(&scores, &pos).unwrap();
        let outstanding: Vec<usize> = (0..scores.len()).filter(|&i| !m.is_non_outstanding(scores[i])).collect();
        let flagged: Vec<usize> = (0..scores.len()).filter(|&i| m.is_non_outstanding(scores[i])).collect();
        prop_assert_eq!(outstanding.len() + flagged.len(), scores.len());
        for &i in &outstanding {
            prop_assert!(scores[i] <= m.tau);
        }
        for &i in &flagged {
            prop_assert!(scores[i] > m.tau);
        }
    }

    #[test]
    fn otsu_matches_bin_edge_argmax(scores in prop::collection::vec(0.0f64..100.0, 2..60)) {
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(hi > lo);
        let width = (hi - lo) / 256.0;
        let n = scores.len() as f64;
        let between: Vec<f64> = (1..256)
            .map(|t| {
                let (low, high): (Vec<f64>, Vec<f64>) = scores.iter().partition(|&&s| ((s - lo) / width).floor() < t as f64);
                if low.is_empty() || high.is_empty() {
                    return f64::NEG_INFINITY;
                }
                let m0 = low.iter().sum::<f64>() / low.len() as f64;
                let m1 = high.iter().sum::<f64>() / high.len() as f64;
                (low.len() as f64 / n) * (high.len() as f64 / n) * (m0 - m1).powi(2)
            })
            .collect();
        let best = between.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let hits: Vec<usize> = (0..between.len()).filter(|&i| between[i] >= best - best.abs() * 1e-9).map(|i| i + 1).collect();
        let lo_tau = lo + *hits.first().unwrap() as f64 * width;
        let hi_tau = lo + *hits.last().unwrap() as f64 * width;
        let tau = otsu_threshold(&scores).unwrap().tau;
        prop_assert!(tau >= lo_tau - 1e-9 && tau <= hi_tau + 1e-9, "tau {} outside [{}, {}]", tau, lo_tau, hi_tau);
    }
}

// ------------------------------------------------------------------------ PCA

proptest! {
    #[test]
    fn pca_eigenvalues_match_dense_eigensolver(rows in points(25, 5)) {
        prop_assume!(rows.len() >= 3);
        let d = 5.min(rows.len() - 1);
        let model = fit_pca(&rows, d).unwrap();
        let truth = jacobi_eigenvalues(covariance(&rows));
        let ev = model.explained_variance();
        for (a, b) in ev.iter().zip(&truth) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{} vs {}", a, b);
        }
        for w in ev.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for (i, a) in model.components.iter().enumerate() {
            for (j, b) in model.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                prop_assert!((dot - f64::from(u8::from(i == j))).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pca_full_rank_reconstruction(rows in points(8, 10)) {
        prop_assume!(rows.len() >= 2);
        let model = fit_pca(&rows, rows.len() - 1).unwrap();
        for r in &rows {
            let back = model.inverse_transform(&model.transform(r));
            for (a, b) in r.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}

// ------------------------------------------------------------------------ NMF

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn nmf_objective_non_increasing_and_factors_non_negative(rows in points(12, 6), seed in any::<u64>()) {
        prop_assume!(rows.len() >= 3);
        let fit = fit_nmf(&rows, 2, &NmfConfig { max_iter: 200, tol: 0.0, seed }).unwrap();
        for w in fit.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10 * w[0].max(1.0), "{} -> {}", w[0], w[1]);
        }
        prop_assert!(fit.model.basis.iter().all(|&v| v >= 0.0));
        prop_assert!(fit.coefficients.iter().all(|&v| v >= 0.0));
        prop_assert!(fit.model.transform(&rows[0]).iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn nmf_seeds_agree_on_rank_three_data() {
    let mut r = rng(9);
    let w: Vec<Vec<f64>> = (0..3).map(|_| (0..12).map(|_| r.gen_range(0.0..1.0)).collect()).collect();
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let h: Vec<f64> = (0..3).map(|_| r.gen_range(0.0..1.0)).collect();
            (0..12).map(|j| (0..3).map(|k| h[k] * w[k][j]).sum()).collect()
        })
        .collect();
    let cfg = |seed| NmfConfig { max_iter: 10_000, tol: 1e-5, seed };
    let a = fit_nmf(&rows, 3, &cfg(1)).unwrap();
    let b = fit_nmf(&rows, 3, &cfg(2)).unwrap();
    assert_eq!(fit_nmf(&rows, 3, &cfg(1)).unwrap(), a);
    let (oa, ob) = (*a.objective.last().unwrap(), *b.objective.last().unwrap());
    let total: f64 = rows.iter().flatten().map(|v| v * v).sum();
    // Both near-zero residuals count as agreement.
    assert!((oa - ob).abs() <= 0.05 * oa.max(ob).max(1e-6 * total), "{oa} vs {ob}");
}

// ----------------------------------------------------------------- clustering

proptest! {
    #[test]
    fn ward_matches_naive_agglomeration(pts in points(7, 2)) {
        let fit = hierarchy_fit(&pts, 2, Linkage::Ward).unwrap();
        prop_assert_eq!(fit.labels, naive_ward_labels(&pts, 2));
    }

    #[test]
    fn ward_merge_costs_non_decreasing(pts in points(20, 3)) {
        let fit = hierarchy_fit(&pts, 1, Linkage::Ward).unwrap();
        for w in fit.merges.windows(2) {
            prop_assert!(w[1].cost >= w[0].cost - 1e-9 * w[0].cost.max(1.0));
        }
    }

    #[test]
    fn kmeans_never_beats_exhaustive_and_log_non_increasing(pts in points(8, 2), seed in any::<u64>()) {
        let fit = kmeans_fit(&pts, 2, seed).unwrap();
        let best = exhaustive_two_partition_wcss(&pts);
        prop_assert!(fit.wcss >= best - 1e-9 * best.max(1.0));
        for w in fit.wcss_log.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].max(1.0));
        }
    }

    #[test]
    fn kmeans_finds_exhaustive_optimum_on_separated_groups(
        a in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..=4),
        b in prop::collection::vec(prop::collection::vec(9.0f64..11.0, 2), 1..=4),
        seed in any::<u64>(),
    ) {
        let pts: Vec<Vec<f64>> = a.into_iter().chain(b).collect();
        let fit = kmeans_fit(&pts, 2, seed).unwrap();
        let best = exhaustive_two_partition_wcss(&pts);
        prop_assert!((fit.wcss - best).abs() <= 1e-12 * best.max(1.0));
    }

    #[test]
    fn kmeans_duplicated_data_same_centroids(pts in points(8, 2), seed in any::<u64>()) {
        let doubled: Vec<Vec<f64>> = pts.iter().chain(&pts).cloned().collect();
        let a = kmeans_fit(&pts, 2, seed).unwrap();
        let b = kmeans_fit(&doubled, 2, seed).unwrap();
        // Doubling scales every partition's WCSS by 2, so the optima coincide.
        let best = exhaustive_two_partition_wcss(&pts);
        if (a.wcss - best).abs() <= 1e-12 * best.max(1.0) && (b.wcss - 2.0 * best).abs() <= 1e-12 * best.max(1.0) {
            let mut ca = a.centroids.clone();
            let mut cb = b.centroids.clone();
            ca.sort_by(|x, y| x[0].total_cmp(&y[0]).then(x[1].total_cmp(&y[1])));
            cb.sort_by(|x, y| x[0].total_cmp(&y[0]).then(x[1].total_cmp(&y[1])));
            for (x, y) in ca.iter().flatten().zip(cb.iter().flatten()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn gmm_log_likelihood_non_decreasing(pts in points(40, 2), seed in any::<u64>()) {
        prop_assume!(pts.len() >= 6);
        let fit = gmm_fit(&pts, 2, seed).unwrap();
        for w in fit.ll_log.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        for r in &fit.responsibilities {
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn every_method_partitions_into_two(pts in points(30, 3), seed in any::<u64>(), m in 0usize..3) {
        prop_assume!(pts.len() >= 4);
        let method = [ClusterMethod::Kmeans, ClusterMethod::Hierarchy, ClusterMethod::Gmm][m];
        match ClusterModel::fit(method, Linkage::Ward, &pts, seed) {
            Ok(model) => {
                prop_assert_eq!(model.labels().len(), pts.len());
                prop_assert!(model.labels().iter().all(|&l| l < 2));
            }
            Err(e) => prop_assert!(matches!(e, unoqa::Error::Assignment(_) | unoqa::Error::Numeric(_)), "{e}"),
        }
    }

    #[test]
    fn grades_ignore_cluster_numbering(pts in points(20, 2), seed in any::<u64>()) {
        let mut r = rng(seed);
        let labels: Vec<usize> = (0..pts.len()).map(|i| if i < 2 { i } else { r.gen_range(0..2) }).collect();
        let scores: Vec<f64> = (0..pts.len()).map(|_| r.gen_range(0.0..10.0)).collect();
        let ids: Vec<String> = (0..pts.len()).map(|i| format!("s{i}")).collect();
        let swapped: Vec<usize> = labels.iter().map(|l| 1 - l).collect();
        let a = assign_grades(&labels, &pts, &ids, &scores).unwrap();
        let b = assign_grades(&swapped, &pts, &ids, &scores).unwrap();
        let ga: Vec<QualityGrade> = a.entries.iter().map(|e| e.grade).collect();
        let gb: Vec<QualityGrade> = b.entries.iter().map(|e| e.grade).collect();
        prop_assert_eq!(ga, gb);
    }
}

#[test]
fn gmm_recovers_separated_gaussians() {
    use rand_distr::{Distribution, Normal};
    let mut r = rng(21);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let truth: Vec<usize> = (0..200).map(|i| i % 2).collect();
    let pts: Vec<Vec<f64>> = truth.iter().map(|&t| (0..2).map(|_| normal.sample(&mut r) + 8.0 * t as f64).collect()).collect();
    let fit = gmm_fit(&pts, 2, 3).unwrap();
    let agree = fit.labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
    let acc = agree.max(200 - agree) as f64 / 200.0;
    assert!(acc >= 0.99, "{acc}");
}

#[test]
fn ward_and_kmeans_agree_on_separated_clouds() {
    let pts: Vec<Vec<f64>> = [0.0, 0.1, 10.0, 10.1].iter().map(|&v| vec![v]).collect();
    let w = hierarchy_fit(&pts, 2, Linkage::Ward).unwrap();
    let k = kmeans_fit(&pts, 2, 0).unwrap();
    assert_eq!(canonical(&w.labels), canonical(&k.labels));
}

// ----------------------------------------------------------------- evaluation

proptest! {
    #[test]
    fn kappa_dual_formula(counts in prop::collection::vec(prop::collection::vec(0u64..30, 3), 3)) {
        let cm = ConfusionMatrix { classes: vec!["a".into(), "b".into(), "c".into()], counts: counts.clone() };
        prop_assume!(cm.total() > 0);
        let rows = cm.row_sums();
        let cols = cm.col_sums();
        let n = cm.total() as f64;
        let p_e: f64 = rows.iter().zip(&cols).map(|(&r, &c)| r as f64 * c as f64).sum::<f64>() / (n * n);
        prop_assume!(p_e < 1.0);
        let k = cohen_kappa(&cm).unwrap();
        prop_assert!((k - kappa_by_disagreement(&counts)).abs() <= 1e-10 * 100.0);
        prop_assert!(k <= 100.0 + 1e-9);
        let diagonal = (0..3).all(|i| (0..3).all(|j| i == j || counts[i][j] == 0));
        prop_assert_eq!((k - 100.0).abs() < 1e-9, diagonal);
    }

    #[test]
    fn metrics_invariant_under_label_permutation(
        pairs in prop::collection::vec((grade(), grade()), 1..60),
        perm in Just([0usize, 1, 2]).prop_shuffle(),
    ) {
        let truth: Vec<QualityGrade> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<QualityGrade> = pairs.iter().map(|p| p.1).collect();
        let map = |g: &QualityGrade| QualityGrade::from_index(perm[g.index()]).unwrap();
        let a = confusion(&truth, &pred).unwrap();
        let b = confusion(&truth.iter().map(map).collect::<Vec<_>>(), &pred.iter().map(map).collect::<Vec<_>>()).unwrap();
        prop_assert!((cohen_kappa(&a).unwrap() - cohen_kappa(&b).unwrap()).abs() < 1e-9);
        prop_assert_eq!(accuracy(&a).unwrap(), accuracy(&b).unwrap());
    }

    #[test]
    fn report_text_round_trips(
        pairs in prop::collection::vec((grade(), grade()), 1..60),
        seed in any::<u32>(),
    ) {
        let truth: Vec<QualityGrade> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<QualityGrade> = pairs.iter().map(|p| p.1).collect();
        let t1: Vec<bool> = truth.iter().map(|g| !g.is_outstanding()).collect();
        let p1: Vec<bool> = pred.iter().map(|g| !g.is_outstanding()).collect();
        let report = PipelineReport {
            metadata: vec![("seed".into(), seed.to_string())],
            triage: EvalReport::from_confusion(confusion(&truth, &pred).unwrap()).unwrap(),
            stage1: EvalReport::from_confusion(unoqa::evaluation::confusion_stage1(&t1, &p1).unwrap()).unwrap(),
        };
        prop_assert_eq!(PipelineReport::from_text(&report.to_text()).unwrap(), report);
    }
}
