//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TlmError};

pub type C64 = Complex<f64>;
pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance for structural identities (idempotency, partitions, symmetry).
pub const STRUCTURAL_TOL: f64 = 1e-12;

/// Which operator norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// Induced Euclidean norm (largest singular value).
    Sup,
    /// Largest eigenvalue modulus.
    #[default]
    SpectralRadius,
}

pub fn operator_norm(a: &Mat, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Sup => Ok(largest_singular_value(a)),
        NormKind::SpectralRadius => spectral_radius(a),
    }
}

pub fn largest_singular_value(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn spectral_radius(a: &Mat) -> Result<f64> {
    if !a.is_square() {
        return Err(TlmError::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max))
}

/// Smallest singular value of a (possibly complex) matrix.
pub fn min_singular_value<T>(a: &DMatrix<T>) -> f64
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    if a.is_empty() {
        return f64::INFINITY;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric square root of a positive semidefinite matrix.
///
/// Eigenvalues down to `-1e-12 * max(1, |A|)` are clamped to zero.
pub fn matrix_sqrt_psd(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(TlmError::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let scale = a.amax().max(1.0);
    let asym = (a - a.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(TlmError::NotPsd {
            min_eigenvalue: f64::NAN,
        });
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min < -STRUCTURAL_TOL * scale {
        return Err(TlmError::NotPsd {
            min_eigenvalue: min,
        });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Moore-Penrose pseudo-inverse together with the numerical rank.
pub fn pseudo_inverse(a: &Mat, rel_tol: f64) -> (Mat, usize) {
    if a.is_empty() {
        return (Mat::zeros(a.ncols(), a.nrows()), 0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = rel_tol * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    let pinv = svd
        .pseudo_inverse(cut)
        .unwrap_or_else(|_| Mat::zeros(a.ncols(), a.nrows()));
    (pinv, rank)
}

pub fn complexify(a: &Mat) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

pub fn complexify_vec(v: &Vector) -> CVector {
    v.map(|x| C64::new(x, 0.0))
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}

/// Block-diagonal direct sum of two matrices.
pub fn direct_sum(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn is_finite(a: &Mat) -> bool {
    a.iter().all(|x| x.is_finite())
}
