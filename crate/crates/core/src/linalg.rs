//! Small dense linear-algebra helpers shared by the certificate checks, the
//! barrier terms and the exporters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Cholesky factorization of a symmetric matrix, `None` unless it is
/// numerically positive definite.
pub fn cholesky(m: &Mat) -> Option<Cholesky<f64, Dyn>> {
    if m.nrows() != m.ncols() || !all_finite(m) {
        return None;
    }
    Cholesky::new(m.clone())
}

pub fn is_positive_definite(m: &Mat) -> bool {
    cholesky(m).is_some()
}

/// `log det(m)` for a positive definite `m`.
pub fn logdet_pd(m: &Mat) -> Option<f64> {
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        acc += l[(i, i)].ln();
    }
    Some(2.0 * acc)
}

/// Inverse of a positive definite matrix through its Cholesky factor.
pub fn inverse_pd(m: &Mat) -> Option<Mat> {
    let inv = cholesky(m)?.inverse();
    Some(symmetrize(&inv))
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry relative to the largest entry.
pub fn relative_asymmetry(m: &Mat) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() / scale
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `X^{-1/2}` for a symmetric positive definite `X`. Eigenvalues in
/// `[-1e-12, 0]` are treated as zero drift, which still makes `X` singular.
pub fn inv_sqrt_spd(x: &Mat) -> Result<Mat> {
    let eig = SymmetricEigen::new(symmetrize(x));
    let n = x.nrows();
    let mut d = Mat::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let lam = if (-1e-12..0.0).contains(&lam) { 0.0 } else { lam };
        if lam <= 0.0 {
            return Err(Error::Singular(format!("eigenvalue {lam:e} is not positive")));
        }
        d[(i, i)] = 1.0 / lam.sqrt();
    }
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Solves `X · a = b` for `X` given `a` symmetric positive definite, i.e.
/// returns `b · a^{-1}`.
pub fn right_solve_pd(b: &Mat, a: &Mat) -> Result<Mat> {
    let chol = cholesky(a).ok_or_else(|| Error::Singular("P".into()))?;
    // (b a^-1)^T = a^-1 b^T
    Ok(chol.solve(&b.transpose()).transpose())
}

pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<Mat> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Serde adapter storing a matrix as an array of rows.
pub mod rows {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Mat;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        super::from_rows(&rows, ncols).map_err(D::Error::custom)
    }
}

/// Serde adapter for a vector stored as a plain array.
pub mod vector {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Vector;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::deserialize(d)?))
    }
}
