use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vecfuse::encode::{knn_classify, sign_codes};
use vecfuse::{
    evaluate, fit_dccm, fit_dnccm, hash, project, Distance, EvalOptions, FusionRule,
    MultiModalDataset, Ridge,
};

fn random_dataset(seed: u64, counts: &[usize], m: usize, p: usize) -> MultiModalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(d, &n)| std::iter::repeat_n(d, n))
        .collect();
    let n = labels.len();
    let cx = DMatrix::from_fn(counts.len(), m, |_, _| rng.random_range(-2.0..2.0));
    let cy = DMatrix::from_fn(counts.len(), p, |_, _| rng.random_range(-2.0..2.0));
    let x = DMatrix::from_fn(n, m, |i, j| cx[(labels[i], j)] + rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(n, p, |i, j| cy[(labels[i], j)] + rng.random_range(-1.0..1.0));
    MultiModalDataset::from_parts(x, y, &labels).unwrap()
}

fn orthonormal_basis(w: &DMatrix<f64>) -> DMatrix<f64> {
    w.clone().qr().q()
}

/// Sine of the largest principal angle between two column spaces.
fn max_principal_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let residual = &qb - &qa * (qa.transpose() * &qb);
    residual.singular_values().max()
}

#[test]
fn identical_modalities_share_a_subspace() {
    for seed in 0..5 {
        let base = random_dataset(seed, &[6, 7, 5, 8], 4, 1);
        let ds = MultiModalDataset::from_parts(base.x().clone(), base.x().clone(), base.labels()).unwrap();
        let model = fit_dccm(&ds, Some(3), Ridge::Auto).unwrap();
        let sine = max_principal_sine(&model.w_x, &model.w_y);
        assert!(sine.asin() < 1e-6, "seed {seed}: angle {}", sine.asin());
    }
}

#[test]
fn single_dnccm_step_is_collinear_with_dccm() {
    for seed in 0..10 {
        let ds = random_dataset(100 + seed, &[5, 6, 4], 3, 4);
        let a = fit_dccm(&ds, Some(1), Ridge::Auto).unwrap();
        let b = fit_dnccm(&ds, Some(1), Ridge::Auto).unwrap();
        let stack = |m: &vecfuse::ProjectionModel| {
            let mut v: Vec<f64> = m.w_x.column(0).iter().copied().collect();
            v.extend(m.w_y.column(0).iter());
            DVector::from_vec(v)
        };
        let (u, v) = (stack(&a), stack(&b));
        let cosine = u.dot(&v) / (u.norm() * v.norm());
        assert!(cosine >= 1.0 - 1e-8, "seed {seed}: cosine {cosine}");
        // The dccm pair is normalized to N, the dnccm pair to 1.
        let ratio = u.norm() / v.norm();
        assert!((ratio - (ds.n_samples() as f64).sqrt()).abs() < 1e-6 * ratio);
    }
}

#[test]
fn evaluation_is_independent_of_thread_count() {
    let train = random_dataset(7, &[30, 25, 35], 5, 3);
    let test = random_dataset(8, &[10, 12, 9], 5, 3);
    let model = fit_dnccm(&train, Some(3), Ridge::Auto).unwrap();
    for distance in [Distance::Euclidean, Distance::Hamming] {
        let opts = EvalOptions {
            fusion: FusionRule::Concat,
            k: 3,
            distance,
        };
        let in_pool = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| evaluate(&model, &train, &test, &opts).unwrap())
        };
        let single = in_pool(1);
        assert_eq!(single, in_pool(4));
        assert_eq!(single, in_pool(7));
    }
}

#[test]
fn positive_column_rescaling_keeps_hash_codes() {
    let ds = random_dataset(3, &[8, 8, 8], 4, 4);
    let model = fit_dccm(&ds, Some(2), Ridge::Auto).unwrap();
    let (zx, zy) = project(&model, ds.x(), ds.y()).unwrap();
    let codes = hash(&zx, &zy);
    let mut scaled = model.clone();
    for (j, s) in [0.001, 250.0].into_iter().enumerate() {
        scaled.w_x.column_mut(j).scale_mut(s);
        scaled.w_y.column_mut(j).scale_mut(s * 3.0);
    }
    let (sx, sy) = project(&scaled, ds.x(), ds.y()).unwrap();
    assert_eq!(hash(&sx, &sy), codes);
    assert_eq!(sign_codes(&sx), codes.codes_x);
}

fn gaussian_pair(rng: &mut ChaCha8Rng, per_class: usize) -> MultiModalDataset {
    let labels: Vec<usize> = (0..2 * per_class).map(|i| i / per_class).collect();
    let mut sample = |i: usize, _: usize| {
        let mean = if labels[i] == 0 { -5.0 } else { 5.0 };
        mean + rng.sample::<f64, _>(StandardNormal)
    };
    let x = DMatrix::from_fn(labels.len(), 2, &mut sample);
    let y = DMatrix::from_fn(labels.len(), 2, &mut sample);
    MultiModalDataset::from_parts(x, y, &labels).unwrap()
}

#[test]
fn well_separated_gaussians_are_classified_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let train = gaussian_pair(&mut rng, 20);
    let test = gaussian_pair(&mut rng, 20);

    // Oracle: raw 1-NN on concatenated features already separates the classes.
    let raw = |ds: &MultiModalDataset| {
        let mut m = DMatrix::zeros(ds.n_samples(), 4);
        m.columns_mut(0, 2).copy_from(ds.x());
        m.columns_mut(2, 2).copy_from(ds.y());
        m
    };
    let predicted = knn_classify(&raw(&train), train.labels(), &raw(&test), 1, Distance::Euclidean).unwrap();
    assert_eq!(predicted, test.labels());

    for model in [
        fit_dccm(&train, None, Ridge::Auto).unwrap(),
        fit_dnccm(&train, Some(1), Ridge::Auto).unwrap(),
    ] {
        let report = evaluate(&model, &train, &test, &EvalOptions::default()).unwrap();
        assert_eq!(report.accuracy, 1.0, "{}", model.method);
        assert_eq!(report.confusion, vec![vec![20, 0], vec![0, 20]]);
    }
}

#[test]
fn within_class_row_order_does_not_change_fits() {
    // Four features but only three classes: Rxx is singular and the fit is
    // badly conditioned, so any order-dependent rounding would show up.
    let ds = random_dataset(11, &[9, 12, 7], 4, 3);
    let mut order: Vec<usize> = (0..ds.n_samples()).collect();
    order[0..9].reverse();
    order[9..21].rotate_left(5);
    order[21..28].swap(0, 6);
    let x = DMatrix::from_fn(order.len(), 4, |i, j| ds.x()[(order[i], j)]);
    let y = DMatrix::from_fn(order.len(), 3, |i, j| ds.y()[(order[i], j)]);
    let shuffled = MultiModalDataset::from_parts(x, y, ds.labels()).unwrap();
    assert_eq!(
        fit_dccm(&ds, Some(2), Ridge::Auto).unwrap().to_bytes(),
        fit_dccm(&shuffled, Some(2), Ridge::Auto).unwrap().to_bytes()
    );
    assert_eq!(
        fit_dnccm(&ds, None, Ridge::Auto).unwrap().to_bytes(),
        fit_dnccm(&shuffled, None, Ridge::Auto).unwrap().to_bytes()
    );
}
