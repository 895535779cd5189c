//! Row-stochastic-like coupling matrices: mean-field and ring families,
//! spectra, structural checks and CSV I/O.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{self, RealMat};

pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyTag {
    MeanField,
    Ring,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub matrix: RealMat,
    pub family: FamilyTag,
}

impl CouplingMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Wrap an arbitrary square matrix whose rows sum to one.
    pub fn general(matrix: RealMat) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(LabError::Validation(
                "coupling matrix must be square and non-empty".into(),
            ));
        }
        if (0..matrix.nrows()).any(|j| row(&matrix, j).iter().any(|v| !v.is_finite())) {
            return Err(LabError::Validation(
                "coupling matrix has non-finite entries".into(),
            ));
        }
        if let Some(j) = bad_row(&matrix) {
            return Err(LabError::Validation(format!(
                "row {j} sums to {}, expected 1",
                row(&matrix, j).iter().sum::<f64>()
            )));
        }
        Ok(CouplingMatrix {
            matrix,
            family: FamilyTag::General,
        })
    }

    pub fn identity(n: usize) -> Self {
        CouplingMatrix {
            matrix: RealMat::identity(n, n),
            family: FamilyTag::General,
        }
    }

    /// Re-check the row-sum invariant (the matrix field is public).
    pub fn check_row_sums(&self) -> Result<()> {
        match bad_row(&self.matrix) {
            Some(j) => Err(LabError::Domain(format!(
                "row {j} of the coupling matrix does not sum to 1"
            ))),
            None => Ok(()),
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|j| row(&self.matrix, j)).collect()
    }
}

fn row(m: &RealMat, j: usize) -> Vec<f64> {
    (0..m.ncols()).map(|k| m[(j, k)]).collect()
}

fn bad_row(m: &RealMat) -> Option<usize> {
    (0..m.nrows()).find(|&j| (row(m, j).iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOL)
}

/// `(1 - (n-1) kappa / n)` on the diagonal, `kappa / n` elsewhere.
pub fn mean_field(n: usize, kappa: f64) -> Result<CouplingMatrix> {
    if n < 2 {
        return Err(LabError::Domain(format!(
            "mean-field coupling needs n >= 2, got {n}"
        )));
    }
    if !kappa.is_finite() {
        return Err(LabError::Domain("kappa must be finite".into()));
    }
    let off = kappa / n as f64;
    let diag = 1.0 - (n as f64 - 1.0) * off;
    let matrix = RealMat::from_fn(n, n, |j, k| if j == k { diag } else { off });
    Ok(CouplingMatrix {
        matrix,
        family: FamilyTag::MeanField,
    })
}

/// Ring with weight `kappa1/2` to the next node and `kappa2/2` to the previous one.
pub fn ring(n: usize, kappa1: f64, kappa2: f64) -> Result<CouplingMatrix> {
    if n < 3 {
        return Err(LabError::Domain(format!(
            "ring coupling needs n >= 3, got {n}"
        )));
    }
    if !(kappa1.is_finite() && kappa2.is_finite()) {
        return Err(LabError::Domain("ring weights must be finite".into()));
    }
    let matrix = RealMat::from_fn(n, n, |j, k| {
        let mut v = 0.0;
        if j == k {
            v += 1.0 - 0.5 * (kappa1 + kappa2);
        }
        if (j + 1) % n == k {
            v += 0.5 * kappa1;
        }
        if (k + 1) % n == j {
            v += 0.5 * kappa2;
        }
        v
    });
    Ok(CouplingMatrix {
        matrix,
        family: FamilyTag::Ring,
    })
}

/// Closed-form ring eigenvalues `z_j`, `j = 0..n`.
pub fn ring_spectrum(n: usize, kappa1: f64, kappa2: f64) -> Vec<Complex64> {
    (0..n)
        .map(|j| {
            let th = 2.0 * PI * j as f64 / n as f64;
            Complex64::new(
                1.0 - 0.5 * (kappa1 + kappa2) * (1.0 - th.cos()),
                0.5 * (kappa1 - kappa2) * th.sin(),
            )
        })
        .collect()
}

/// Ring weights placing `z_j` at `target`.
pub fn solve_ring_kappa(n: usize, j: usize, target: Complex64) -> Result<(f64, f64)> {
    if n < 3 || j == 0 || j >= n {
        return Err(LabError::Domain(format!(
            "need n >= 3 and 0 < j < n, got n={n}, j={j}"
        )));
    }
    let th = 2.0 * PI * j as f64 / n as f64;
    let sum = 2.0 * (1.0 - target.re) / (1.0 - th.cos());
    let sin = th.sin();
    let diff = if sin.abs() < 1e-14 {
        if target.im.abs() > 1e-14 {
            return Err(LabError::Domain(format!(
                "z_{j} is real for n = {n}; target has imaginary part"
            )));
        }
        0.0
    } else {
        2.0 * target.im / sin
    };
    Ok((0.5 * (sum + diff), 0.5 * (sum - diff)))
}

pub fn eigenvalues(m: &RealMat) -> Result<Vec<Complex64>> {
    linalg::eigenvalues_real(m)
}

/// Spectrum with one copy of the eigenvalue one removed when it is simple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaMinusOne {
    pub all: Vec<Complex64>,
    pub rest: Vec<Complex64>,
    pub one_is_simple: bool,
}

pub fn sigma_minus_one(g: &CouplingMatrix) -> Result<SigmaMinusOne> {
    let all = eigenvalues(&g.matrix)?;
    let tol = 1e-8 * linalg::frobenius(&g.matrix).max(1.0);
    let near: Vec<usize> = (0..all.len())
        .filter(|&i| (all[i] - 1.0).norm() <= tol)
        .collect();
    let one_is_simple = near.len() == 1;
    let rest = if one_is_simple {
        all.iter()
            .enumerate()
            .filter(|(i, _)| *i != near[0])
            .map(|(_, v)| *v)
            .collect()
    } else {
        all.clone()
    };
    Ok(SigmaMinusOne {
        all,
        rest,
        one_is_simple,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub row_sum_ok: bool,
    pub irreducible: bool,
    pub nonneg_entries: bool,
    pub symmetric: bool,
    /// Judged on the symmetric part `(G + G^T)/2`.
    pub positive_semidefinite: bool,
    pub positive_definite: bool,
    pub min_symmetric_eigenvalue: f64,
    pub warnings: Vec<String>,
}

fn strongly_connected(m: &RealMat) -> bool {
    let n = m.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(j) = stack.pop() {
            for k in 0..n {
                let w = if forward { m[(j, k)] } else { m[(k, j)] };
                if k != j && w != 0.0 && !seen[k] {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
        seen.into_iter().all(|v| v)
    };
    n == 1 || (reach(true) && reach(false))
}

pub fn structure_check(g: &CouplingMatrix) -> Result<StructureReport> {
    let m = &g.matrix;
    let n = m.nrows();
    let scale = linalg::frobenius(m).max(1.0);
    let tol = 1e-12 * scale;
    let sym = RealMat::from_fn(n, n, |j, k| 0.5 * (m[(j, k)] + m[(k, j)]));
    let symmetric = (0..n).all(|j| (0..n).all(|k| (m[(j, k)] - m[(k, j)]).abs() <= tol));
    let min_eig = linalg::symmetric_eigenvalues(&sym)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let mut warnings = Vec::new();
    if !symmetric {
        warnings.push("matrix is not symmetric; definiteness refers to (G + G^T)/2".to_string());
    }
    Ok(StructureReport {
        row_sum_ok: bad_row(m).is_none(),
        irreducible: strongly_connected(m),
        nonneg_entries: (0..n).all(|j| row(m, j).iter().all(|&v| v >= 0.0)),
        symmetric,
        positive_semidefinite: min_eig >= -tol,
        positive_definite: min_eig > tol,
        min_symmetric_eigenvalue: min_eig,
        warnings,
    })
}

pub fn read_matrix_csv(path: &Path) -> Result<CouplingMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| LabError::Validation(format!("bad entry {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(LabError::Validation(
            "coupling CSV must be a square table".into(),
        ));
    }
    CouplingMatrix::general(RealMat::from_fn(n, n, |j, k| rows[j][k]))
}

pub fn write_matrix_csv(g: &CouplingMatrix, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in g.rows() {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn mean_field_spectrum() {
        let g = mean_field(5, 0.3).unwrap();
        let s = sigma_minus_one(&g).unwrap();
        assert!(s.one_is_simple);
        assert_eq!(s.rest.len(), 4);
        for z in s.rest {
            assert_abs_diff_eq!(z.re, 0.7, epsilon = 1e-12);
        }
        assert!(mean_field(1, 0.3).is_err());
    }

    #[test]
    fn ring_needs_three_nodes() {
        assert!(ring(2, 0.1, 0.1).is_err());
        let g = ring(3, 0.2, 0.1).unwrap();
        assert_eq!(g.matrix[(0, 1)], 0.1);
        assert_eq!(g.matrix[(1, 0)], 0.05);
        assert_abs_diff_eq!(g.matrix[(0, 0)], 0.85, epsilon = 1e-15);
    }

    #[test]
    fn kappa_inversion_examples() {
        let (k1, k2) = solve_ring_kappa(3, 1, Complex64::new(0.99325, 0.0)).unwrap();
        assert_abs_diff_eq!(k1, 0.0045, epsilon = 1e-12);
        assert_abs_diff_eq!(k2, 0.0045, epsilon = 1e-12);
        let (k1, k2) = solve_ring_kappa(3, 1, Complex64::new(0.8, 0.2)).unwrap();
        assert_abs_diff_eq!(k1, 0.364273, epsilon = 1e-6);
        assert_abs_diff_eq!(k2, -0.097607, epsilon = 1e-6);
        assert!(solve_ring_kappa(4, 2, Complex64::new(0.5, 0.1)).is_err());
    }

    #[test]
    fn identity_has_no_simple_one() {
        let s = sigma_minus_one(&CouplingMatrix::identity(3)).unwrap();
        assert!(!s.one_is_simple);
        assert_eq!(s.rest.len(), 3);
    }

    #[test]
    fn structure_flags() {
        let r = structure_check(&mean_field(4, 0.5).unwrap()).unwrap();
        assert!(r.row_sum_ok && r.irreducible && r.nonneg_entries && r.symmetric);
        assert!(r.positive_definite);
        let r = structure_check(&mean_field(4, 1.0).unwrap()).unwrap();
        assert!(r.positive_semidefinite && !r.positive_definite);
        let r = structure_check(&CouplingMatrix::identity(3)).unwrap();
        assert!(!r.irreducible);
        let r = structure_check(&ring(4, 0.4, 0.0).unwrap()).unwrap();
        assert!(!r.symmetric && !r.warnings.is_empty() && r.irreducible);
    }

    #[test]
    fn rejects_bad_rows() {
        let v = [0.5, 0.6, 0.5, 0.5];
        let m = RealMat::from_fn(2, 2, |j, k| v[2 * j + k]);
        assert!(CouplingMatrix::general(m).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("coupling_csv_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("g.csv");
        let g = ring(5, 0.3, 0.1).unwrap();
        write_matrix_csv(&g, &path).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        assert_eq!(back.matrix, g.matrix);
        std::fs::write(&path, "1,0.5\n0,1\n").unwrap();
        assert!(read_matrix_csv(&path).is_err());
    }

    proptest! {
        #[test]
        fn ring_closed_form_matches_eigensolver(n in 3usize..12, k1 in -1.0..1.0f64, k2 in -1.0..1.0f64) {
            let g = ring(n, k1, k2).unwrap();
            let num = sorted(eigenvalues(&g.matrix).unwrap());
            let exact = sorted(ring_spectrum(n, k1, k2));
            for z in &exact {
                let d = num.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(d < 1e-9, "{z} missing from {num:?}");
            }
        }

        #[test]
        fn rows_sum_to_one(n in 3usize..20, k1 in -2.0..2.0f64, k2 in -2.0..2.0f64, kappa in -2.0..2.0f64) {
            for m in [ring(n, k1, k2).unwrap().matrix, mean_field(n, kappa).unwrap().matrix] {
                for j in 0..n {
                    prop_assert!((row(&m, j).iter().sum::<f64>() - 1.0).abs() < 1e-13);
                }
            }
        }

        #[test]
        fn kappa_round_trip(n in 3usize..12, j in 1usize..11, k1 in -1.0..1.0f64, k2 in -1.0..1.0f64) {
            prop_assume!(j < n && (2.0 * PI * j as f64 / n as f64).sin().abs() > 1e-3);
            let z = ring_spectrum(n, k1, k2)[j];
            let (a, b) = solve_ring_kappa(n, j, z).unwrap();
            prop_assert!((a - k1).abs() < 1e-9 && (b - k2).abs() < 1e-9);
        }
    }
}
