//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues of a symmetric matrix (unsorted).
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().symmetric_eigenvalues()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).min()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).max()
}

/// Condition number of a symmetric positive definite matrix.
pub fn cond_spd(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    ev.max() / ev.min()
}

/// Whether a symmetric matrix is positive semidefinite within `tol`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    lambda_min(m) >= -tol
}

/// Replace `m` by its symmetric part (m + mᵀ)/2.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let mt = m.transpose();
    *m += mt;
    *m *= 0.5;
}

/// Orthonormal basis of the subspace orthogonal to the common translations
/// Span(1ₙ ⊗ I_d), returned as an nd × (n−1)d matrix. Built from the Helmert
/// basis of 1ₙ⊥ so the result is deterministic.
pub fn translation_complement(n: usize, d: usize) -> DMatrix<f64> {
    assert!(n >= 2);
    // Helmert columns: w_j = (1, …, 1, −j, 0, …) / sqrt(j(j+1)), j = 1..n−1.
    let mut w = DMatrix::zeros(n, n - 1);
    for j in 1..n {
        let scale = 1.0 / ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            w[(i, j - 1)] = scale;
        }
        w[(j, j - 1)] = -(j as f64) * scale;
    }
    w.kronecker(&DMatrix::identity(d, d))
}

/// Largest `mu` such that `a ⪰ mu·b` on the subspace spanned by the columns
/// of `basis`, computed as the smallest generalized eigenvalue of the
/// restricted pencil (a, b). `b` must be positive definite on that subspace.
pub fn min_generalized_eigenvalue(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    basis: &DMatrix<f64>,
) -> Option<f64> {
    let a_v = basis.transpose() * a * basis;
    let b_v = basis.transpose() * b * basis;
    let chol = b_v.cholesky()?;
    // mu = λ_min(L⁻¹ A_v L⁻ᵀ) where B_v = L Lᵀ.
    let l = chol.l();
    let t = l.solve_lower_triangular(&a_v)?;
    let w = l.solve_lower_triangular(&t.transpose())?;
    let mut sym = w.transpose();
    symmetrize(&mut sym);
    Some(lambda_min(&sym))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn translation_complement_is_orthonormal_and_orthogonal_to_ones() {
        for (n, d) in [(2usize, 2usize), (4, 3), (7, 2)] {
            let b = translation_complement(n, d);
            assert_eq!(b.shape(), (n * d, (n - 1) * d));
            let gram = b.transpose() * &b;
            assert_relative_eq!(
                gram,
                DMatrix::identity((n - 1) * d, (n - 1) * d),
                epsilon = 1e-12
            );
            let ones = DMatrix::from_element(n, 1, 1.0).kronecker(&DMatrix::identity(d, d));
            assert_relative_eq!(
                b.transpose() * ones,
                DMatrix::zeros((n - 1) * d, d),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn generalized_eigenvalue_matches_scaled_identity() {
        // a = 3·b on the complement ⇒ mu = 3.
        let n = 4;
        let d = 2;
        let basis = translation_complement(n, d);
        let b = &basis * basis.transpose() + DMatrix::identity(n * d, n * d) * 1e-9;
        let a = &b * 3.0;
        let mu = min_generalized_eigenvalue(&a, &b, &basis).unwrap();
        assert_relative_eq!(mu, 3.0, epsilon = 1e-6);
    }

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let mut m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        symmetrize(&mut m);
        assert_relative_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 3.0]));
    }
}
