//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Every inverse in the crate is a linear solve against a symmetrized
//! matrix: Gram-type matrices are replaced by `(M + M^T) / 2` first.

use nalgebra::{DMatrix, DVector};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Solves `S X = rhs` for symmetric `S`. Cholesky first, LU as fallback.
pub fn solve_sym(s: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let s = symmetrize(s);
    if let Some(ch) = s.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let x = s.lu().solve(rhs)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Returns `M S^{-1}` for symmetric `S`.
pub fn right_solve_sym(m: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    solve_sym(s, &m.transpose()).map(|x| x.transpose())
}

/// Inverse of a symmetric matrix, symmetrized on the way out.
pub fn inverse_sym(s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = s.nrows();
    solve_sym(s, &DMatrix::identity(n, n)).map(|x| symmetrize(&x))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::NEG_INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().max()
}

/// Operator 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    assert!(a.is_square(), "spectral radius needs a square matrix");
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Log-determinant of a symmetric positive-definite matrix.
pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let ch = symmetrize(m).cholesky()?;
    Some(2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Schur complement `C - B^T A^{-1} B` of the block matrix `[[A, B], [B^T, C]]`
/// where `A` is the leading `split x split` block.
pub fn schur_complement(x: &DMatrix<f64>, split: usize) -> Option<DMatrix<f64>> {
    let d = x.nrows();
    let a = x.view((0, 0), (split, split)).into_owned();
    let b = x.view((0, split), (split, d - split)).into_owned();
    let c = x.view((split, split), (d - split, d - split)).into_owned();
    let ainv_b = solve_sym(&a, &b)?;
    Some(symmetrize(&(c - b.transpose() * ainv_b)))
}

/// Stacks `x` on top of `u`.
pub fn stack(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

/// Horizontal concatenation `(left right)`.
pub fn hcat(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(left.nrows(), right.nrows());
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    out
}

/// Assembles `[[a, b], [c, d]]`.
pub fn block2(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    assert_eq!(b.shape(), (r1, c2));
    assert_eq!(c.shape(), (r2, c1));
    let mut out = DMatrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_identity_and_nilpotent() {
        assert_eq!(spectral_radius(&DMatrix::identity(3, 3)), 1.0);
        let n = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(spectral_radius(&n), 0.0);
    }

    #[test]
    fn spectral_radius_matches_characteristic_roots() {
        // Roots of s^2 - tr s + det for [[0.5, 0.2], [0.1, 0.3]].
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.1, 0.3]);
        let (tr, det) = (0.8_f64, 0.5 * 0.3 - 0.2 * 0.1);
        let disc = tr * tr - 4.0 * det;
        let root = (tr + disc.sqrt()) / 2.0;
        assert!((spectral_radius(&a) - root).abs() < 1e-10);
    }

    #[test]
    fn spectral_radius_of_rotation_uses_modulus() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert!((spectral_radius(&a) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn schur_complement_of_diagonal_block() {
        let x = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 5.0]);
        let s = schur_complement(&x, 1).unwrap();
        assert!((s[(0, 0)] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn solve_sym_detects_singular() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(solve_sym(&s, &DMatrix::identity(2, 2)).is_none());
    }
}
