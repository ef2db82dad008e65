//! Small dense linear-algebra helpers shared by the control modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Normwise relative difference `max|a - b| / max|b|`.
///
/// Falls back to the absolute difference when `b` is identically zero.
pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape(), "rel_diff shape mismatch");
    let diff = (a - b).amax();
    let scale = b.amax();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

pub fn rel_diff_vec(a: &Vector, b: &Vector) -> f64 {
    assert_eq!(a.len(), b.len(), "rel_diff_vec length mismatch");
    let diff = (a - b).amax();
    let scale = b.amax();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn check_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(
            what,
            format!("square matrix, {} rows", m.nrows()),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn check_symmetric(m: &Mat, what: &str) -> Result<()> {
    check_square(m, what)?;
    let tol = 1e-10 * m.amax().max(1.0);
    if (m - m.transpose()).amax() > tol {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    Ok(())
}

/// Eigenvalue-based condition estimate of a symmetric matrix.
pub fn sym_condition(m: &Mat) -> f64 {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &Mat, what: &str) -> Result<Cholesky<f64, Dyn>> {
    check_square(m, what)?;
    Cholesky::new(m.clone()).ok_or_else(|| Error::Singular {
        what: format!("{what} (Cholesky failed)"),
        condition: sym_condition(m),
    })
}

pub fn require_pd(m: &Mat, what: &str) -> Result<()> {
    check_symmetric(m, what)?;
    if Cholesky::new(m.clone()).is_none() {
        return Err(Error::NotPositiveDefinite { what: what.into() });
    }
    Ok(())
}

pub fn require_psd(m: &Mat, what: &str) -> Result<()> {
    check_symmetric(m, what)?;
    if m.nrows() == 0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let tol = 1e-12 * m.amax().max(f64::MIN_POSITIVE);
    if eig.iter().any(|&v| v < -tol) {
        return Err(Error::InvalidArgument(format!(
            "{what} is not positive semidefinite"
        )));
    }
    Ok(())
}

/// Symmetric square root `S` with `S S^T = m` for a PSD matrix.
pub fn psd_sqrt(m: &Mat, what: &str) -> Result<Mat> {
    require_psd(m, what)?;
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Mat::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(m: &Mat) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Stacks the matrices vertically; all must have the same column count.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.view_mut((r, 0), b.shape()).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn concat(vectors: &[Vector]) -> Vector {
    let len = vectors.iter().map(|v| v.len()).sum();
    let mut out = Vector::zeros(len);
    let mut r = 0;
    for v in vectors {
        out.rows_mut(r, v.len()).copy_from(v);
        r += v.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_diag_places_blocks() {
        let a = Mat::from_element(1, 1, 2.0);
        let b = Mat::identity(2, 2);
        let d = block_diag(&[&a, &b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(2, 2)], 1.0);
        assert_eq!(d[(0, 2)], 0.0);
    }

    #[test]
    fn psd_sqrt_reconstructs() {
        let m = Mat::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 0.25]);
        let s = psd_sqrt(&m, "m").unwrap();
        assert!(rel_diff(&(&s * s.transpose()), &m) < 1e-12);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(psd_sqrt(&m, "m").is_err());
    }

    #[test]
    fn rel_diff_zero_reference_is_absolute() {
        let z = Mat::zeros(2, 2);
        let a = Mat::from_element(2, 2, 1e-3);
        assert_eq!(rel_diff(&a, &z), 1e-3);
    }
}
