mod common;

use common::*;
use dsokr::kernels::KernelKind;
use dsokr::{fit_basis, fit_basis_with_gram, gram, GramMatrix, KernelSpec, SketchKind, SketchMatrix, StructuredOutput};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const KINDS: [SketchKind; 3] =
    [SketchKind::SubSample, SketchKind::Gaussian, SketchKind::PSparsified { q: 0.3 }];

fn orthonormality_error(basis: &dsokr::SketchedBasis, k: &GramMatrix) -> f64 {
    let kt = basis.sketch().sketch_gram(k).unwrap();
    let g = basis.omega() * kt * basis.omega().transpose();
    (g - DMatrix::<f64>::identity(basis.rank(), basis.rank())).amax()
}

fn random_psd(n: usize, rank: usize, seed: u64) -> GramMatrix {
    let a = random_matrix(n, rank, &mut rng(seed));
    let k = &a * a.transpose();
    GramMatrix::from_matrix((&k + k.transpose()) * 0.5).unwrap()
}

fn dense_outputs(n: usize) -> Vec<StructuredOutput> {
    (0..n).map(|i| StructuredOutput::Dense(vec![i as f64])).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sketch_is_linear(kind in 0usize..3, seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let r = SketchMatrix::draw(KINDS[kind], 25, 9, seed).unwrap();
        let mut g = rng(seed ^ 77);
        let u = DVector::from_fn(25, |_, _| normal(&mut g));
        let v = DVector::from_fn(25, |_, _| normal(&mut g));
        let lhs = r.apply_to_vector(&(&u * a + &v * b)).unwrap();
        let rhs = r.apply_to_vector(&u).unwrap() * a + r.apply_to_vector(&v).unwrap() * b;
        prop_assert!((lhs - rhs).amax() < 1e-12);
        let dense = r.to_dense() * &u;
        prop_assert!((dense - r.apply_to_vector(&u).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn sketches_are_reproducible(kind in 0usize..3, seed in 0u64..1000) {
        let a = SketchMatrix::draw(KINDS[kind], 40, 12, seed).unwrap();
        let b = SketchMatrix::draw(KINDS[kind], 40, 12, seed).unwrap();
        prop_assert_eq!(a.to_dense(), b.to_dense());
        let json = serde_json::to_string(&a).unwrap();
        let c: SketchMatrix = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(a.to_dense(), c.to_dense());
    }

    #[test]
    fn sketch_gram_matches_dense_product(kind in 0usize..3, seed in 0u64..1000) {
        let k = random_psd(20, 6, seed);
        let r = SketchMatrix::draw(KINDS[kind], 20, 8, seed).unwrap();
        let dense = r.to_dense();
        let expected = &dense * k.matrix() * dense.transpose();
        let got = r.sketch_gram(&k).unwrap();
        prop_assert!(max_abs_diff(&got, &expected) < 1e-10);
        if let Some(idx) = r.indices() {
            let gathered = DMatrix::from_fn(8, 8, |i, j| k.matrix()[(idx[i], idx[j])]);
            prop_assert_eq!(got, gathered);
        }
    }

    #[test]
    fn basis_is_orthonormal_and_matches_jacobi(kind in 0usize..3, seed in 0u64..1000) {
        let k = random_psd(20, 20, seed);
        let r = SketchMatrix::draw(KINDS[kind], 20, 10, seed).unwrap();
        let basis = fit_basis_with_gram(&KernelSpec::linear(), &dense_outputs(20), &r, &k, 1e-10).unwrap();
        prop_assert!(orthonormality_error(&basis, &k) < 1e-8);
        let (vals, _) = jacobi_eigen(&r.sketch_gram(&k).unwrap());
        prop_assert_eq!(basis.rank(), vals.iter().filter(|&&s| s > 1e-10 * vals[0]).count());
        for (a, b) in basis.eigenvalues().iter().zip(&vals) {
            prop_assert!((a - b).abs() < 1e-9 * vals[0]);
        }
    }

    #[test]
    fn projection_matches_pinv_oracle_and_loewner_order(kind in 0usize..3, seed in 0u64..500, rank in 3usize..30) {
        let n = 30;
        let k = random_psd(n, rank, seed);
        let r = SketchMatrix::draw(KINDS[kind], n, 12, seed).unwrap();
        let basis = fit_basis_with_gram(&KernelSpec::linear(), &dense_outputs(n), &r, &k, 1e-10).unwrap();
        let phi = basis.feature_matrix_from_training_kernel(k.matrix()).unwrap();
        let approx = &phi * phi.transpose();
        let rd = r.to_dense();
        let kt = &rd * k.matrix() * rd.transpose();
        let oracle = k.matrix() * rd.transpose() * psd_pinv(&kt, 1e-10) * &rd * k.matrix();
        prop_assert!(max_abs_diff(&approx, &oracle) < 1e-8 * k.matrix().amax().max(1.0));
        let (gap, _) = jacobi_eigen(&(k.matrix() - &approx));
        prop_assert!(*gap.last().unwrap() >= -1e-6);
    }

    #[test]
    fn features_invariant_to_sketch_scaling(kind in 0usize..3, seed in 0u64..500, c in 0.01f64..100.0) {
        let ys = random_vectors(25, 6, &mut rng(seed));
        let spec = KernelSpec::gaussian(0.2);
        let r = SketchMatrix::draw(KINDS[kind], 25, 10, seed).unwrap();
        let a = fit_basis(&spec, &ys, &r, 1e-10).unwrap();
        let b = fit_basis(&spec, &ys, &r.scaled(c), 1e-10).unwrap();
        prop_assert_eq!(a.rank(), b.rank());
        let fa = a.feature_matrix(&ys).unwrap();
        let fb = b.feature_matrix(&ys).unwrap();
        prop_assert!(max_abs_diff(&fa, &fb) < 1e-8);
    }

    #[test]
    fn reduced_loss_identity(seed in 0u64..500, kind in 0usize..3) {
        let mut g = rng(seed);
        let ys = random_graphs(30, 3, 7, &mut g);
        let spec = KernelSpec::normalized(KernelKind::WlSubtree { iterations: 2 });
        let r = SketchMatrix::draw(KINDS[kind], 30, 12, seed).unwrap();
        let basis = fit_basis(&spec, &ys, &r, 1e-10).unwrap();
        let y = &random_graphs(1, 3, 7, &mut g)[0];
        let z = DVector::from_fn(basis.rank(), |_, _| normal(&mut g));
        let psi = basis.feature_map(y).unwrap();
        // e_j = Σ_a A_{ja} ψ(anchor_a) with A = Ω R restricted to anchors
        let anchors = basis.anchors();
        let a_map = anchor_map(&basis);
        let w = a_map.transpose() * &z; // Σ z_j e_j = Σ_a w_a ψ(anchor_a)
        let k_aa = gram(&spec, anchors).unwrap().into_matrix();
        let k_ay = dsokr::cross_gram(&spec, anchors, std::slice::from_ref(y)).unwrap();
        let kyy = dsokr::eval(&spec, y, y).unwrap();
        let h_loss = (w.transpose() * &k_aa * &w)[(0, 0)] - 2.0 * (w.transpose() * &k_ay)[(0, 0)] + kyy;
        let coef_loss = (&z - &psi).norm_squared();
        prop_assert!((h_loss - coef_loss - (kyy - psi.norm_squared())).abs() < 1e-8);
    }
}

/// Recovers `Ω R` on the anchors from unit kernel vectors.
fn anchor_map(basis: &dsokr::SketchedBasis) -> DMatrix<f64> {
    let m = basis.anchors().len();
    let n = basis.sketch().n();
    let mut k_train = DMatrix::zeros(n, m);
    match basis.sketch().indices() {
        Some(idx) => {
            for (a, &i) in idx.iter().enumerate() {
                k_train[(i, a)] = 1.0;
            }
        }
        None => k_train = DMatrix::identity(n, m),
    }
    basis.feature_matrix_from_training_kernel(&k_train).unwrap().transpose()
}

#[test]
fn full_sketch_is_lossless() {
    let n = 40;
    let ys = random_vectors(n, 12, &mut rng(5));
    let spec = KernelSpec::gaussian(0.05);
    let k = gram(&spec, &ys).unwrap();
    let r = SketchMatrix::subsample((0..n).collect(), n).unwrap();
    let basis = fit_basis(&spec, &ys, &r, 1e-10).unwrap();
    assert_eq!(basis.rank(), n);
    let phi = basis.feature_matrix(&ys).unwrap();
    assert!(max_abs_diff(&(&phi * phi.transpose()), k.matrix()) < 1e-8);
}

#[test]
fn batch_features_match_loop() {
    let ys = random_fingerprints(30, 24, 0.3, &mut rng(8));
    let spec = KernelSpec::new(KernelKind::Tanimoto);
    let r = SketchMatrix::draw(SketchKind::Gaussian, 30, 10, 1).unwrap();
    let basis = fit_basis(&spec, &ys, &r, 1e-10).unwrap();
    let batch = basis.feature_matrix(&ys).unwrap();
    for (i, y) in ys.iter().enumerate() {
        let single = basis.feature_map(y).unwrap();
        assert!((batch.row(i).transpose() - single).amax() < 1e-12);
    }
    assert_eq!(basis.feature_matrix(&[]).unwrap().shape(), (0, basis.rank()));
}

#[test]
fn linear_reconstruction_projects_onto_training_span() {
    let n = 30;
    let d_y = 5;
    let ys = random_vectors(n, d_y, &mut rng(12));
    let r = SketchMatrix::subsample((0..n).collect(), n).unwrap();
    let basis = fit_basis(&KernelSpec::linear(), &ys, &r, 1e-10).unwrap();
    assert_eq!(basis.rank(), d_y);
    for y in ys.iter().take(5) {
        let back = basis.reconstruct_linear(&basis.feature_map(y).unwrap()).unwrap();
        let y = DVector::from_column_slice(y.as_dense().unwrap());
        assert!((back - y).amax() < 1e-10);
    }
    let zero = basis.reconstruct_linear(&DVector::zeros(d_y)).unwrap();
    assert_eq!(zero, DVector::zeros(d_y));
    let rows = basis.reconstruct_linear_rows(&basis.feature_matrix(&ys).unwrap()).unwrap();
    assert!((rows[(3, 2)] - ys[3].as_dense().unwrap()[2]).abs() < 1e-10);
}

#[test]
fn basis_round_trips_through_json() {
    let ys = random_graphs(20, 3, 6, &mut rng(4));
    let spec = KernelSpec::normalized(KernelKind::ShortestPath);
    let ys: Vec<_> = ys.into_iter().filter(|y| !y.as_graph().unwrap().edges().is_empty()).collect();
    let r = SketchMatrix::draw(SketchKind::PSparsified { q: 0.2 }, ys.len(), 8, 3).unwrap();
    let basis = fit_basis(&spec, &ys, &r, 1e-10).unwrap();
    let back: dsokr::SketchedBasis = serde_json::from_str(&serde_json::to_string(&basis).unwrap()).unwrap();
    let a = basis.feature_matrix(&ys).unwrap();
    let b = back.feature_matrix(&ys).unwrap();
    assert!(max_abs_diff(&a, &b) < 1e-12);
}
