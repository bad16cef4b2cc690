//! The sketched output basis.
//!
//! Given training outputs `y_1..y_n` with Gram matrix `K` and a sketch `R`,
//! the eigendecomposition `R K Rᵀ = Ṽ D̃ Ṽᵀ` (truncated to its numerical rank
//! `p`) yields `Ω = D̃^{-1/2} Ṽᵀ`. The functions `ẽ_j = Σ_i (Ω R)_{ji} ψ(y_i)`
//! form an orthonormal family in the output feature space, and the finite
//! feature map is
//!
//! ```text
//! ψ̃(y) = Ω R k^y,   k^y = (k(y, y_1), …, k(y, y_n))
//! ```
//!
//! The basis keeps only the outputs the sketch actually touches (the `m`
//! selected rows for sub-sampling, all `n` for dense sketches) together with
//! the precomputed `p × n_anchor` map `Ω R`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{self, GramMatrix, KernelKind, KernelSpec};
use crate::linalg::sorted_symmetric_eigen;
use crate::output::StructuredOutput;
use crate::sketch::SketchMatrix;

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "BasisRecord", try_from = "BasisRecord")]
pub struct SketchedBasis {
    kernel: KernelSpec,
    sketch: SketchMatrix,
    omega: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    anchors: Vec<StructuredOutput>,
    anchor_map: DMatrix<f64>,
}

/// Builds the basis, computing only the kernel entries the sketch needs.
pub fn fit_basis(
    kernel: &KernelSpec,
    ys: &[StructuredOutput],
    sketch: &SketchMatrix,
    rank_tol: f64,
) -> Result<SketchedBasis> {
    check_inputs(ys, sketch, rank_tol)?;
    match sketch.indices() {
        Some(idx) => {
            let anchors: Vec<StructuredOutput> = idx.iter().map(|&i| ys[i].clone()).collect();
            let k_sub = kernels::gram(kernel, &anchors)?;
            let scale = sketch.scale();
            let sketched = k_sub.into_matrix() * (scale * scale);
            SketchedBasis::from_sketched_gram(kernel, sketch, sketched, anchors, rank_tol)
        }
        None => {
            let k = kernels::gram(kernel, ys)?;
            fit_basis_with_gram(kernel, ys, sketch, &k, rank_tol)
        }
    }
}

/// Builds the basis from a precomputed training Gram matrix.
pub fn fit_basis_with_gram(
    kernel: &KernelSpec,
    ys: &[StructuredOutput],
    sketch: &SketchMatrix,
    k: &GramMatrix,
    rank_tol: f64,
) -> Result<SketchedBasis> {
    check_inputs(ys, sketch, rank_tol)?;
    if k.n() != ys.len() {
        return Err(Error::DimensionMismatch { expected: ys.len(), found: k.n() });
    }
    let sketched = sketch.sketch_gram(k)?;
    let anchors = match sketch.indices() {
        Some(idx) => idx.iter().map(|&i| ys[i].clone()).collect(),
        None => ys.to_vec(),
    };
    SketchedBasis::from_sketched_gram(kernel, sketch, sketched, anchors, rank_tol)
}

fn check_inputs(ys: &[StructuredOutput], sketch: &SketchMatrix, rank_tol: f64) -> Result<()> {
    if sketch.n() != ys.len() {
        return Err(Error::DimensionMismatch { expected: sketch.n(), found: ys.len() });
    }
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(invalid(format!("rank tolerance must lie in (0, 1), got {rank_tol}")));
    }
    Ok(())
}

impl SketchedBasis {
    fn from_sketched_gram(
        kernel: &KernelSpec,
        sketch: &SketchMatrix,
        sketched: DMatrix<f64>,
        anchors: Vec<StructuredOutput>,
        rank_tol: f64,
    ) -> Result<Self> {
        if sketched.amax() == 0.0 {
            return Err(Error::EmptyBasis);
        }
        let (values, vectors) = sorted_symmetric_eigen(sketched);
        let top = values[0];
        if !(top > 0.0) {
            return Err(Error::EmptyBasis);
        }
        let p = values.iter().take_while(|&&s| s > rank_tol * top && s > 0.0).count();
        let eigenvalues = values[..p].to_vec();
        let mut omega = vectors.columns(0, p).transpose();
        for (j, &s) in eigenvalues.iter().enumerate() {
            omega.row_mut(j).scale_mut(1.0 / s.sqrt());
        }
        let anchor_map = anchor_map(sketch, &omega, anchors.len())?;
        Ok(SketchedBasis { kernel: *kernel, sketch: sketch.clone(), omega, eigenvalues, anchors, anchor_map })
    }

    /// Number of basis functions `p`.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn sketch(&self) -> &SketchMatrix {
        &self.sketch
    }

    /// `Ω = D̃_p^{-1/2} Ṽ_pᵀ`, shape `p × m`.
    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Retained eigenvalues of `R K Rᵀ`, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Training outputs referenced by the sketch.
    pub fn anchors(&self) -> &[StructuredOutput] {
        &self.anchors
    }

    /// `ψ̃(y)`.
    pub fn feature_map(&self, y: &StructuredOutput) -> Result<DVector<f64>> {
        let k = kernels::cross_gram(&self.kernel, &self.anchors, std::slice::from_ref(y))?;
        Ok(&self.anchor_map * k.column(0))
    }

    /// Row `i` is `ψ̃(ys[i])`; shape `|ys| × p`.
    pub fn feature_matrix(&self, ys: &[StructuredOutput]) -> Result<DMatrix<f64>> {
        let k = kernels::cross_gram(&self.kernel, &self.anchors, ys)?;
        Ok((&self.anchor_map * k).transpose())
    }

    /// Features from a precomputed `n_train × N` kernel block between the
    /// full training set and `N` outputs.
    pub fn feature_matrix_from_training_kernel(&self, k_train: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let anchored = match self.sketch.indices() {
            Some(idx) => {
                if k_train.nrows() != self.sketch.n() {
                    return Err(Error::DimensionMismatch {
                        expected: self.sketch.n(),
                        found: k_train.nrows(),
                    });
                }
                k_train.select_rows(idx)
            }
            None => k_train.clone(),
        };
        if anchored.nrows() != self.anchor_map.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.anchor_map.ncols(),
                found: anchored.nrows(),
            });
        }
        Ok((&self.anchor_map * anchored).transpose())
    }

    fn check_linear(&self) -> Result<()> {
        if self.kernel.kind != KernelKind::Linear || self.kernel.normalize {
            return Err(invalid(format!(
                "linear reconstruction needs an unnormalized linear kernel, basis uses {}",
                self.kernel
            )));
        }
        Ok(())
    }

    /// For a linear output kernel, maps coefficients back to the output
    /// space: `Yᵀ Rᵀ Ωᵀ z`.
    pub fn reconstruct_linear(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_linear()?;
        if z.len() != self.rank() {
            return Err(Error::DimensionMismatch { expected: self.rank(), found: z.len() });
        }
        let weights = self.anchor_map.tr_mul(z);
        let dim = self.anchors.first().and_then(|a| a.as_dense()).map_or(0, <[f64]>::len);
        let mut out = DVector::zeros(dim);
        for (w, a) in weights.iter().zip(&self.anchors) {
            let a = a.as_dense().ok_or(Error::VariantMismatch {
                kernel: "linear",
                found: a.variant_name(),
            })?;
            for (o, x) in out.iter_mut().zip(a) {
                *o += w * x;
            }
        }
        Ok(out)
    }

    /// Row-wise [`Self::reconstruct_linear`] over a `N × p` coefficient matrix.
    pub fn reconstruct_linear_rows(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_linear()?;
        if z.ncols() != self.rank() {
            return Err(Error::DimensionMismatch { expected: self.rank(), found: z.ncols() });
        }
        // (Z Ω R) Y_anchor
        let coef = z * &self.anchor_map;
        let y = anchor_matrix(&self.anchors)?;
        Ok(coef * y)
    }
}

fn anchor_matrix(anchors: &[StructuredOutput]) -> Result<DMatrix<f64>> {
    let dim = anchors.first().and_then(|a| a.as_dense()).map_or(0, <[f64]>::len);
    let mut y = DMatrix::zeros(anchors.len(), dim);
    for (i, a) in anchors.iter().enumerate() {
        let a = a.as_dense().ok_or(Error::VariantMismatch {
            kernel: "linear",
            found: a.variant_name(),
        })?;
        if a.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: a.len() });
        }
        y.row_mut(i).copy_from_slice(a);
    }
    Ok(y)
}

fn anchor_map(sketch: &SketchMatrix, omega: &DMatrix<f64>, n_anchors: usize) -> Result<DMatrix<f64>> {
    match sketch.indices() {
        Some(idx) => {
            if n_anchors != idx.len() {
                return Err(Error::DimensionMismatch { expected: idx.len(), found: n_anchors });
            }
            // R restricted to the selected columns is scale · I_m
            Ok(omega * sketch.scale())
        }
        None => {
            if n_anchors != sketch.n() {
                return Err(Error::DimensionMismatch { expected: sketch.n(), found: n_anchors });
            }
            Ok(omega * sketch.to_dense())
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BasisRecord {
    kernel: KernelSpec,
    sketch: SketchMatrix,
    omega: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    anchors: Vec<StructuredOutput>,
}

impl From<SketchedBasis> for BasisRecord {
    fn from(b: SketchedBasis) -> Self {
        let omega = b.omega.row_iter().map(|r| r.iter().copied().collect()).collect();
        BasisRecord {
            kernel: b.kernel,
            sketch: b.sketch,
            omega,
            eigenvalues: b.eigenvalues,
            anchors: b.anchors,
        }
    }
}

impl TryFrom<BasisRecord> for SketchedBasis {
    type Error = Error;

    fn try_from(rec: BasisRecord) -> Result<Self> {
        let p = rec.omega.len();
        let m = rec.sketch.m();
        if p != rec.eigenvalues.len() {
            return Err(Error::DimensionMismatch { expected: rec.eigenvalues.len(), found: p });
        }
        if let Some(row) = rec.omega.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, found: row.len() });
        }
        let flat: Vec<f64> = rec.omega.into_iter().flatten().collect();
        let omega = DMatrix::from_row_slice(p, m, &flat);
        let anchor_map = anchor_map(&rec.sketch, &omega, rec.anchors.len())?;
        Ok(SketchedBasis {
            kernel: rec.kernel,
            sketch: rec.sketch,
            omega,
            eigenvalues: rec.eigenvalues,
            anchors: rec.anchors,
            anchor_map,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use crate::sketch::SketchKind;

    fn basis_vectors(n: usize) -> Vec<StructuredOutput> {
        (0..n)
            .map(|i| {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                StructuredOutput::Dense(v)
            })
            .collect()
    }

    #[test]
    fn identity_gram_full_sketch() {
        let ys = basis_vectors(5);
        let r = SketchMatrix::subsample((0..5).collect(), 5).unwrap();
        let b = fit_basis(&KernelSpec::linear(), &ys, &r, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(b.rank(), 5);
        assert!(b.eigenvalues().iter().all(|&s| (s - 1.0).abs() < 1e-14));
        // sign convention makes each row a positive unit vector
        assert!((b.omega() - DMatrix::<f64>::identity(5, 5)).abs().iter().all(|&x| x < 1e-12
            || (x - 1.0).abs() < 1e-12));
        assert!((b.omega().transpose() * b.omega() - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn identical_outputs_collapse_to_rank_one() {
        let ys = vec![StructuredOutput::Dense(vec![1.0, 2.0]); 6];
        for kind in [SketchKind::SubSample, SketchKind::Gaussian] {
            let r = SketchMatrix::draw(kind, 6, 4, 1).unwrap();
            let b = fit_basis(&KernelSpec::linear(), &ys, &r, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(b.rank(), 1);
        }
    }

    #[test]
    fn zero_outputs_give_empty_basis() {
        let ys = vec![StructuredOutput::Dense(vec![0.0, 0.0]); 4];
        let r = SketchMatrix::draw(SketchKind::SubSample, 4, 2, 1).unwrap();
        assert!(matches!(
            fit_basis(&KernelSpec::linear(), &ys, &r, DEFAULT_RANK_TOL),
            Err(Error::EmptyBasis)
        ));
    }

    #[test]
    fn zero_kernel_vector_maps_to_zero() {
        let ys = basis_vectors(3);
        let r = SketchMatrix::draw(SketchKind::Gaussian, 3, 2, 4).unwrap();
        let b = fit_basis(&KernelSpec::linear(), &ys, &r, DEFAULT_RANK_TOL).unwrap();
        let f = b.feature_map(&StructuredOutput::Dense(vec![0.0; 3])).unwrap();
        assert_eq!(f, DVector::zeros(b.rank()));
        assert_eq!(b.reconstruct_linear(&DVector::zeros(b.rank())).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn feature_matrix_empty_and_loop() {
        let mut rng = random::rng(8);
        let ys: Vec<StructuredOutput> = (0..12)
            .map(|_| StructuredOutput::Dense((0..3).map(|_| random::normal(&mut rng)).collect()))
            .collect();
        let spec = KernelSpec::gaussian(0.4);
        let r = SketchMatrix::draw(SketchKind::PSparsified { q: 0.4 }, 12, 5, 2).unwrap();
        let b = fit_basis(&spec, &ys, &r, DEFAULT_RANK_TOL).unwrap();
        let empty = b.feature_matrix(&[]).unwrap();
        assert_eq!(empty.shape(), (0, b.rank()));
        let batch = b.feature_matrix(&ys[..4]).unwrap();
        for (i, y) in ys[..4].iter().enumerate() {
            let single = b.feature_map(y).unwrap();
            assert!((batch.row(i).transpose() - single).amax() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let ys = basis_vectors(3);
        let r = SketchMatrix::draw(SketchKind::Gaussian, 4, 2, 0).unwrap();
        assert!(fit_basis(&KernelSpec::linear(), &ys, &r, DEFAULT_RANK_TOL).is_err());
        let r = SketchMatrix::draw(SketchKind::Gaussian, 3, 2, 0).unwrap();
        assert!(fit_basis(&KernelSpec::linear(), &ys, &r, 0.0).is_err());
        let b = fit_basis(&KernelSpec::gaussian(1.0), &ys, &r, DEFAULT_RANK_TOL).unwrap();
        assert!(b.reconstruct_linear(&DVector::zeros(b.rank())).is_err());
    }

    #[test]
    fn json_round_trip() {
        let ys = basis_vectors(6);
        for kind in [SketchKind::SubSample, SketchKind::Gaussian] {
            let r = SketchMatrix::draw(kind, 6, 3, 9).unwrap();
            let b = fit_basis(&KernelSpec::linear(), &ys, &r, DEFAULT_RANK_TOL).unwrap();
            let back: SketchedBasis = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
            assert_eq!(back.anchors().len(), if kind.is_subsampling() { 3 } else { 6 });
            assert!((back.anchor_map.clone() - b.anchor_map.clone()).amax() < 1e-14);
        }
    }
}
