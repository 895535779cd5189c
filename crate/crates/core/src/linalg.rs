//! Dense eigenvalue helpers backed by `faer`.

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{LabError, Result};

pub type RealMat = Mat<f64>;
pub type ComplexMat = Mat<Complex64>;

pub fn eigenvalues_real(m: &RealMat) -> Result<Vec<Complex64>> {
    m.eigenvalues()
        .map_err(|e| LabError::Eigen(format!("{e:?}")))
}

pub fn eigenvalues_complex(m: &ComplexMat) -> Result<Vec<Complex64>> {
    m.eigenvalues()
        .map_err(|e| LabError::Eigen(format!("{e:?}")))
}

pub fn symmetric_eigenvalues(m: &RealMat) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LabError::Eigen(format!("{e:?}")))
}

pub fn frobenius(m: &RealMat) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s.sqrt()
}
