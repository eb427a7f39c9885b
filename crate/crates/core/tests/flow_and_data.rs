mod common;

use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

use common::rng;
use unoqa::checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint};
use unoqa::dataset::{decode_image, generate_synthetic_corpus, GrayImage, QualityGrade, SynthCorpusSpec};
use unoqa::encoder::{extract_stat_pyramid, PyramidConfig};
use unoqa::flow::{FlowArch, FlowModel, PositionSet, PositionalEncodingConfig, ScaleDecoder, TrainConfig};
use unoqa::representation::{build_representation, build_single_scale};
use unoqa::scoring::likelihood_grids;

fn gaussian_set(seed: u64, n: usize, dim: usize) -> PositionSet {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    // Correlated, shifted Gaussian: x_j = 2 + z_0 + 0.5 z_j.
    let features = (0..n)
        .flat_map(|_| {
            let z: Vec<f64> = (0..dim).map(|_| normal.sample(&mut r)).collect();
            (0..dim).map(move |j| 2.0 + z[0] + 0.5 * z[j]).collect::<Vec<_>>()
        })
        .collect();
    PositionSet { dim, cond_dim: 2, features, cond_table: vec![0.0, 0.0], cond_index: vec![0; n] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn forward_inverse_round_trip(dim_idx in 0usize..3, seed in any::<u64>(), scale in 0.1f64..4.0) {
        let dim = [2, 4, 8][dim_idx];
        let arch = FlowArch { blocks: 4, hidden: None, clamp: 1.9 };
        let mut r = rng(seed);
        let dec = ScaleDecoder::random_with_std(dim, 3, &arch, 0.5, &mut r);
        let normal = Normal::new(0.0, scale).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..dim).map(|_| normal.sample(&mut r)).collect();
            let c: Vec<f64> = (0..3).map(|_| normal.sample(&mut r)).collect();
            let (u, _) = dec.forward(&x, &c).unwrap();
            let back = dec.inverse(&u, &c).unwrap();
            let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-6, "{}", err);
        }
    }

    #[test]
    fn zero_weights_give_permuted_standard_normal(seed in any::<u64>(), x in prop::collection::vec(-3.0f64..3.0, 4)) {
        let dec = ScaleDecoder::zeroed(4, 2, &FlowArch::default(), &mut rng(seed));
        let ll = dec.log_likelihood_standardized(&x, &[0.3, -0.1]).unwrap();
        let expect = -2.0 * (2.0 * std::f64::consts::PI).ln() - 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        prop_assert!((ll - expect).abs() < 1e-12);
        let (u, logdet) = dec.forward(&x, &[0.3, -0.1]).unwrap();
        prop_assert_eq!(logdet, 0.0);
        let mut a = u.clone();
        let mut b = x.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn training_nll_settles_and_beats_untrained() {
    let set = gaussian_set(1, 3000, 4);
    let held_out = gaussian_set(2, 3000, 4);
    let arch = FlowArch { blocks: 4, hidden: Some(16), clamp: 1.9 };
    let mut dec = ScaleDecoder::random(4, 2, &arch, &mut rng(0));
    dec.fit_standardization(&set).unwrap();
    let untrained = dec.clone();
    let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
    let log = dec.train(&set, &cfg, 1).unwrap();
    for w in log.epoch_nll[3..].windows(2) {
        assert!(w[1] <= w[0] + 1e-3, "{:?}", log.epoch_nll);
    }
    let mean_nll = |d: &ScaleDecoder| {
        -(0..held_out.len()).map(|i| d.log_density_raw(held_out.feature(i), held_out.cond(i)).unwrap()).sum::<f64>()
            / held_out.len() as f64
    };
    // Both are cross-entropies against the same data, so the difference is a KL difference.
    assert!(mean_nll(&dec) < mean_nll(&untrained), "{} vs {}", mean_nll(&dec), mean_nll(&untrained));
}

fn small_model() -> (FlowModel, Vec<unoqa::encoder::FeaturePyramid>) {
    let (images, _) = generate_synthetic_corpus(
        &SynthCorpusSpec::new(4, 5).with_image_size(64).with_grades(&[QualityGrade::Outstanding]),
    )
    .unwrap();
    let pc = PyramidConfig::stat(64, vec![8, 16]);
    let pyramids: Vec<_> = images.iter().map(|i| extract_stat_pyramid(i, &pc).unwrap()).collect();
    let pe = PositionalEncodingConfig::default();
    let cfg = TrainConfig { epochs: 2, batch_size: 32, ..TrainConfig::default() };
    let (model, _) = FlowModel::train(&pyramids, &pc, &pe, &FlowArch::default(), &cfg).unwrap();
    (model, pyramids)
}

#[test]
fn checkpoint_round_trip_scores_bit_identically() {
    let (model, pyramids) = small_model();
    let bytes = encode_checkpoint(&Checkpoint { config_hash: "h".into(), flow: Some(model.clone()), reduction: None }).unwrap();
    let loaded = decode_checkpoint(&bytes).unwrap().flow.unwrap();
    for p in &pyramids {
        let a = likelihood_grids(p, &model).unwrap();
        let b = likelihood_grids(p, &loaded).unwrap();
        for (ga, gb) in a.iter().zip(&b) {
            let bits = |g: &unoqa::scoring::LikelihoodGrid| g.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(ga), bits(gb));
        }
    }
}

#[test]
fn single_scale_is_a_slice_of_the_full_representation() {
    let (model, pyramids) = small_model();
    for p in &pyramids {
        let grids = likelihood_grids(p, &model).unwrap();
        let full = build_representation("x", &grids, &model).unwrap();
        let mut start = 0;
        for k in 1..=grids.len() {
            let one = build_single_scale("x", &grids, &model, k).unwrap();
            assert_eq!(one.values[..], full.values[start..start + one.values.len()]);
            start += one.values.len();
        }
        assert_eq!(start, full.values.len());
    }
    let grids: Vec<_> = pyramids.iter().map(|p| likelihood_grids(p, &model).unwrap()).collect();
    let reps: Vec<_> = grids.iter().map(|g| build_representation("x", g, &model).unwrap().values).collect();
    for i in 0..reps.len() {
        for j in i + 1..reps.len() {
            assert_ne!(reps[i], reps[j]);
        }
    }
}

/// Mean absolute response of the 4-neighbour Laplacian over interior pixels.
fn laplacian_energy(img: &GrayImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    let px = img.pixels();
    let mut total = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = px[y * w + x];
            total += (px[y * w + x - 1] + px[y * w + x + 1] + px[(y - 1) * w + x] + px[(y + 1) * w + x] - 4.0 * c).abs();
        }
    }
    total / ((w - 2) * (h - 2)) as f64
}

#[test]
fn synthetic_sharpness_is_grade_ordered() {
    let (images, manifest) = generate_synthetic_corpus(&SynthCorpusSpec::new(10, 1).with_image_size(128)).unwrap();
    let mean = |g: QualityGrade| {
        let v: Vec<f64> = images
            .iter()
            .zip(manifest.entries())
            .filter(|(_, e)| e.label == Some(g))
            .map(|(i, _)| laplacian_energy(i))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (o, g, u) = (mean(QualityGrade::Outstanding), mean(QualityGrade::Gradable), mean(QualityGrade::Ungradable));
    assert!(o > g && g > u, "{o} {g} {u}");
}

#[test]
fn loading_a_target_size_image_is_idempotent() {
    let (images, _) = generate_synthetic_corpus(&SynthCorpusSpec::new(1, 3).with_image_size(48)).unwrap();
    for img in &images {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        let once = decode_image(&std::fs::read(&path).unwrap(), 48).unwrap();
        once.save_png(&path).unwrap();
        let twice = decode_image(&std::fs::read(&path).unwrap(), 48).unwrap();
        for (a, b) in once.pixels().iter().zip(twice.pixels()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
}
