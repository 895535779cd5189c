//! Discretized monodromy operators of the extended and coupled variational
//! equations, their spectra, and the block-decomposition check.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{sigma_minus_one, CouplingMatrix};
use crate::ddesolve::{hat_history, integrate_coupled_variational, integrate_variational};
use crate::error::{LabError, Result};
use crate::limitcore::make_profile;
use crate::linalg::{eigenvalues_complex, eigenvalues_real, ComplexMat, RealMat};
use crate::sops::Sops;

pub const DEFAULT_FLOOR: f64 = 1e-4;
pub const MAX_COUPLED_SIZE: usize = 2000;
const DOMINANCE_GAP: f64 = 1e-6;

/// Default start phase `-q1/2`, inside the window where the eigenfunctions are smooth.
pub fn default_start_phase(s: &Sops) -> Result<f64> {
    Ok(-0.5 * make_profile(s.alpha, s.feedback.a, s.feedback.b)?.q1)
}

fn check_m(m: usize) -> Result<()> {
    if m < 16 {
        return Err(LabError::Domain(format!(
            "need m >= 16 collocation cells, got {m}"
        )));
    }
    Ok(())
}

/// Matrix of the period map of the extended variational equation on the hat
/// basis over `theta_i = -1 + i/m`; size `(m + 1) x (m + 1)`.
pub fn monodromy_matrix(
    lambda: Complex64,
    s: &Sops,
    m: usize,
    start_phase: Option<f64>,
) -> Result<ComplexMat> {
    check_m(m)?;
    let phase = match start_phase {
        Some(v) => v,
        None => default_start_phase(s)?,
    };
    let reference = |t: f64| s.value(t);
    let lin = s.linearization(&reference);
    let one = Complex64::new(1.0, 0.0);
    let t_end = phase + s.omega;
    let columns: Vec<Vec<Complex64>> = (0..=m)
        .into_par_iter()
        .map(|j| {
            let tr = integrate_variational(
                lambda,
                &lin,
                hat_history(m, j, one, 1, 0),
                phase,
                t_end,
                s.h,
            )?;
            Ok((0..=m)
                .map(|i| tr.value(t_end - 1.0 + i as f64 / m as f64)[0])
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(ComplexMat::from_fn(m + 1, m + 1, |i, j| columns[j][i]))
}

/// Period map of the coupled variational equation on `n (m + 1)` hat functions,
/// indexed component-major.
pub fn coupled_monodromy(
    g: &CouplingMatrix,
    s: &Sops,
    m: usize,
    start_phase: Option<f64>,
) -> Result<RealMat> {
    check_m(m)?;
    let n = g.n();
    let size = n * (m + 1);
    if size > MAX_COUPLED_SIZE {
        return Err(LabError::Config(format!(
            "coupled matrix size {size} exceeds {MAX_COUPLED_SIZE}"
        )));
    }
    let phase = match start_phase {
        Some(v) => v,
        None => default_start_phase(s)?,
    };
    let reference = |t: f64| s.value(t);
    let lin = s.linearization(&reference);
    let t_end = phase + s.omega;
    let columns: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|col| {
            let (c, j) = (col / (m + 1), col % (m + 1));
            let tr = integrate_coupled_variational(
                g,
                &lin,
                hat_history(m, j, 1.0, n, c),
                phase,
                t_end,
                s.h,
            )?;
            let mut out = vec![0.0; size];
            for i in 0..=m {
                let y = tr.value(t_end - 1.0 + i as f64 / m as f64);
                for (comp, v) in y.iter().enumerate() {
                    out[comp * (m + 1) + i] = *v;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(RealMat::from_fn(size, size, |i, j| columns[j][i]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Eigenvalues with modulus at least `floor`, by decreasing modulus.
    pub eigenvalues: Vec<Complex64>,
    /// How many eigenvalues fell below the floor.
    pub truncated: usize,
    pub spectral_radius: f64,
    /// Present when the leading modulus beats the next by a relative `1e-6`.
    pub dominant: Option<Complex64>,
    /// The two leading eigenvalues when there is no dominant one.
    pub leading_pair: Option<(Complex64, Complex64)>,
}

pub fn report_from_eigenvalues(mut all: Vec<Complex64>, floor: f64) -> SpectrumReport {
    all.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    let spectral_radius = all.first().map_or(0.0, |v| v.norm());
    let (dominant, leading_pair) = match all.as_slice() {
        [] => (None, None),
        [only] => (Some(*only), None),
        [a, b, ..] if a.norm() > (1.0 + DOMINANCE_GAP) * b.norm() => (Some(*a), None),
        [a, b, ..] => (None, Some((*a, *b))),
    };
    let total = all.len();
    let eigenvalues: Vec<Complex64> = all.into_iter().filter(|v| v.norm() >= floor).collect();
    SpectrumReport {
        truncated: total - eigenvalues.len(),
        eigenvalues,
        spectral_radius,
        dominant,
        leading_pair,
    }
}

pub fn spectrum(mat: &ComplexMat, floor: f64) -> Result<SpectrumReport> {
    Ok(report_from_eigenvalues(eigenvalues_complex(mat)?, floor))
}

pub fn spectrum_real(mat: &RealMat, floor: f64) -> Result<SpectrumReport> {
    Ok(report_from_eigenvalues(eigenvalues_real(mat)?, floor))
}

/// Dominant Floquet multiplier of the extended variational equation.
pub fn dominant_multiplier(
    lambda: Complex64,
    s: &Sops,
    m: usize,
    start_phase: Option<f64>,
) -> Result<Complex64> {
    let rep = spectrum(&monodromy_matrix(lambda, s, m, start_phase)?, 0.0)?;
    match (rep.dominant, rep.leading_pair) {
        (Some(d), _) => Ok(d),
        (None, Some((a, b))) => Err(LabError::NoDominant(format!("leading pair {a} and {b}"))),
        (None, None) => Err(LabError::NoDominant("empty spectrum".into())),
    }
}

/// Spectral radius of the extended monodromy.
pub fn multiplier_radius(
    lambda: Complex64,
    s: &Sops,
    m: usize,
    start_phase: Option<f64>,
) -> Result<f64> {
    Ok(spectrum(&monodromy_matrix(lambda, s, m, start_phase)?, 0.0)?.spectral_radius)
}

/// Hausdorff distance between the parts of `a` and `b` above `floor`. Each
/// retained point is matched against the whole opposite set, so points that
/// straddle the floor do not count as missing.
pub fn hausdorff_above(a: &[Complex64], b: &[Complex64], floor: f64) -> f64 {
    let one_way = |x: &[Complex64], y: &[Complex64]| {
        x.iter()
            .filter(|v| v.norm() >= floor)
            .map(|v| {
                y.iter()
                    .map(|w| (v - w).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub distance: f64,
    pub pass: bool,
    pub coupled: Vec<Complex64>,
    pub union: Vec<Complex64>,
}

/// Compare the coupled spectrum with the union of extended spectra over `sigma(G)`.
pub fn decomposition_check(
    g: &CouplingMatrix,
    s: &Sops,
    m: usize,
    floor: f64,
    tol: f64,
    start_phase: Option<f64>,
) -> Result<DecompositionReport> {
    let coupled = eigenvalues_real(&coupled_monodromy(g, s, m, start_phase)?)?;
    let mut union = Vec::new();
    for lambda in sigma_minus_one(g)?.all {
        union.extend(eigenvalues_complex(&monodromy_matrix(
            lambda,
            s,
            m,
            start_phase,
        )?)?);
    }
    let distance = hausdorff_above(&coupled, &union, floor);
    let keep = |v: Vec<Complex64>| report_from_eigenvalues(v, floor).eigenvalues;
    Ok(DecompositionReport {
        distance,
        pass: distance < tol,
        coupled: keep(coupled),
        union: keep(union),
    })
}

/// Long-format CSV `row,col,re,im`.
pub fn write_matrix_csv(mat: &ComplexMat, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "row,col,re,im")?;
    for j in 0..mat.ncols() {
        for i in 0..mat.nrows() {
            let v = mat[(i, j)];
            writeln!(w, "{i},{j},{:e},{:e}", v.re, v.im)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<ComplexMat> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut entries = Vec::new();
    let (mut rows, mut cols) = (0, 0);
    for rec in rdr.deserialize() {
        let (i, j, re, im): (usize, usize, f64, f64) = rec?;
        rows = rows.max(i + 1);
        cols = cols.max(j + 1);
        entries.push((i, j, Complex64::new(re, im)));
    }
    let mut mat = ComplexMat::zeros(rows, cols);
    for (i, j, v) in entries {
        mat[(i, j)] = v;
    }
    Ok(mat)
}

/// CSV `re,im,modulus`.
pub fn write_spectrum_csv(values: &[Complex64], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "re,im,modulus")?;
    for v in values {
        writeln!(w, "{:e},{:e},{:e}", v.re, v.im, v.norm())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spectrum_csv(path: &Path) -> Result<Vec<Complex64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let (re, im, _m): (f64, f64, f64) = rec?;
        out.push(Complex64::new(re, im));
    }
    Ok(out)
}
