//! Stability verdicts for the synchronous SOPS of a coupled system.
//!
//! The asymptotic classifiers only look at spectra and the limit constants;
//! their verdicts hold for all sufficiently large gains. The empirical
//! classifier computes spectral radii of extended monodromy matrices at the
//! gain of a concrete SOPS.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{self, sigma_minus_one, structure_check, CouplingMatrix};
use crate::error::{LabError, Result};
use crate::floquet::multiplier_radius;
use crate::limitcore::{nu_star, LimitProfile};
use crate::linalg::{self, RealMat};
use crate::sops::Sops;

pub const ASYMPTOTIC_CAVEAT: &str = "asymptotic in beta";
/// Eigenvalues closer than this are treated as one witness.
pub const DEDUP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    Unstable,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub value: f64,
}

impl Witness {
    fn new(lambda: Complex64, value: f64) -> Self {
        Witness {
            lambda_re: lambda.re,
            lambda_im: lambda.im,
            value,
        }
    }

    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.lambda_re, self.lambda_im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub rule: String,
    pub witnesses: Vec<Witness>,
    pub caveat: String,
}

impl StabilityVerdict {
    fn asymptotic(verdict: Verdict, rule: impl Into<String>, witnesses: Vec<Witness>) -> Self {
        StabilityVerdict {
            verdict,
            rule: rule.into(),
            witnesses,
            caveat: ASYMPTOTIC_CAVEAT.into(),
        }
    }

    pub fn is_decisive(&self) -> bool {
        self.verdict != Verdict::Indeterminate
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Drop repeated eigenvalues and conjugate partners, keeping `Im >= 0`.
/// Spectral quantities used here are conjugation-invariant for real `G`.
pub fn dedupe(values: &[Complex64], tol: f64) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::new();
    for v in values {
        let v = if v.im < 0.0 { v.conj() } else { *v };
        if !out.iter().any(|u| (u - v).norm() <= tol) {
            out.push(v);
        }
    }
    out
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LabError::Config(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(())
}

/// Cassini-oval test on `sigma(G)`: stable when 1 is simple and every other
/// eigenvalue has `|nu*| < 1 - delta`; unstable when some eigenvalue has
/// `|nu*| > 1 + delta`.
pub fn classify_general(
    p: &LimitProfile,
    g: &CouplingMatrix,
    delta: f64,
) -> Result<StabilityVerdict> {
    check_delta(delta)?;
    g.check_row_sums()?;
    let sigma = sigma_minus_one(g)?;
    let score = |l: &Complex64| Witness::new(*l, nu_star(p, *l).norm());
    let violators: Vec<Witness> = dedupe(&sigma.all, DEDUP_TOL)
        .iter()
        .map(score)
        .filter(|w| w.value > 1.0 + delta)
        .collect();
    if !violators.is_empty() {
        return Ok(StabilityVerdict::asymptotic(
            Verdict::Unstable,
            "general: |nu*| > 1 + delta",
            violators,
        ));
    }
    let rest: Vec<Witness> = dedupe(&sigma.rest, DEDUP_TOL).iter().map(score).collect();
    if !sigma.one_is_simple {
        return Ok(StabilityVerdict::asymptotic(
            Verdict::Indeterminate,
            "general: eigenvalue 1 is not simple",
            rest,
        ));
    }
    if rest.iter().all(|w| w.value < 1.0 - delta) {
        Ok(StabilityVerdict::asymptotic(
            Verdict::Stable,
            "general: |nu*| < 1 - delta off the eigenvalue 1",
            rest,
        ))
    } else {
        Ok(StabilityVerdict::asymptotic(
            Verdict::Indeterminate,
            "general: spectrum inside the delta collar",
            rest,
        ))
    }
}

/// Spectrum of a row-sum-zero matrix with one copy of 0 removed when simple.
fn sigma_minus_zero(h: &RealMat) -> Result<(Vec<Complex64>, Vec<Complex64>, bool, f64)> {
    if h.nrows() < 2 || h.nrows() != h.ncols() {
        return Err(LabError::Domain(
            "perturbation matrix must be square with n >= 2".into(),
        ));
    }
    let scale = linalg::frobenius(h).max(1.0);
    for j in 0..h.nrows() {
        let s: f64 = (0..h.ncols()).map(|k| h[(j, k)]).sum();
        if !s.is_finite() || s.abs() > coupling::ROW_SUM_TOL * scale {
            return Err(LabError::Domain(format!(
                "row {j} of H sums to {s}, expected 0"
            )));
        }
    }
    let all = linalg::eigenvalues_real(h)?;
    let tol = 1e-8 * scale;
    let zeros: Vec<usize> = (0..all.len()).filter(|&i| all[i].norm() <= tol).collect();
    let simple = zeros.len() == 1;
    let rest = if simple {
        all.iter()
            .enumerate()
            .filter(|(i, _)| *i != zeros[0])
            .map(|(_, v)| *v)
            .collect()
    } else {
        all.clone()
    };
    Ok((all, rest, simple, tol))
}

fn check_sign(sign: i32) -> Result<f64> {
    match sign {
        1 => Ok(1.0),
        -1 => Ok(-1.0),
        _ => Err(LabError::Config(format!(
            "sign must be +1 or -1, got {sign}"
        ))),
    }
}

/// Shared sign test: stable when 0 is simple and `want * Re(sign * mu) > 0`
/// on the rest of the spectrum, unstable when some eigenvalue has the
/// opposite strict sign.
fn sign_rule(h: &RealMat, sign: f64, want: f64, rule: &str) -> Result<StabilityVerdict> {
    let (all, rest, simple, tol) = sigma_minus_zero(h)?;
    let score = |l: &Complex64| Witness::new(*l, (sign * l).re);
    let violators: Vec<Witness> = dedupe(&all, DEDUP_TOL)
        .iter()
        .map(score)
        .filter(|w| want * w.value < -tol)
        .collect();
    if !violators.is_empty() {
        return Ok(StabilityVerdict::asymptotic(
            Verdict::Unstable,
            format!("{rule}: wrong-sign real part"),
            violators,
        ));
    }
    let rest: Vec<Witness> = dedupe(&rest, DEDUP_TOL).iter().map(score).collect();
    if simple && rest.iter().all(|w| want * w.value > tol) {
        Ok(StabilityVerdict::asymptotic(
            Verdict::Stable,
            format!("{rule}: real parts strictly signed"),
            rest,
        ))
    } else {
        let why = if simple {
            "eigenvalue on the imaginary axis"
        } else {
            "eigenvalue 0 is not simple"
        };
        Ok(StabilityVerdict::asymptotic(
            Verdict::Indeterminate,
            format!("{rule}: {why}"),
            rest,
        ))
    }
}

/// Coupling `I + sign * eta * H` for small `eta > 0`.
pub fn classify_weak(h: &RealMat, sign: i32) -> Result<StabilityVerdict> {
    let s = check_sign(sign)?;
    sign_rule(h, s, -1.0, "weak coupling")
}

/// Coupling `J_n + sign * eta * H` for small `eta > 0`.
pub fn classify_near_uniform(p: &LimitProfile, h: &RealMat, sign: i32) -> Result<StabilityVerdict> {
    let s = check_sign(sign)?;
    if p.alpha > 0.0 {
        sigma_minus_zero(h)?;
        return Ok(StabilityVerdict::asymptotic(
            Verdict::Stable,
            "near-uniform: alpha > 0",
            Vec::new(),
        ));
    }
    sign_rule(h, s, 1.0, "near-uniform, alpha = 0")
}

/// Band test around `r0` for real-spectrum, doubly nonnegative coupling.
/// `all` is the full spectrum and `rest` the spectrum without the eigenvalue 1.
fn band_rule(
    p: &LimitProfile,
    all: &[Complex64],
    rest: &[Complex64],
    eps: f64,
    rule: &str,
) -> Result<StabilityVerdict> {
    let score = |l: &Complex64| Witness::new(*l, nu_star(p, *l).norm());
    let rest_w: Vec<Witness> = dedupe(rest, DEDUP_TOL).iter().map(score).collect();
    let d = p.delta_disc;
    if d < 0.0 {
        return Ok(StabilityVerdict::asymptotic(
            Verdict::Stable,
            format!("{rule}: Delta < 0"),
            rest_w,
        ));
    }
    if d == 0.0 {
        return Ok(StabilityVerdict::asymptotic(
            Verdict::Indeterminate,
            format!("{rule}: Delta = 0"),
            rest_w,
        ));
    }
    let sd = d.sqrt();
    if !(eps > 0.0 && eps < sd.min(p.r0 - sd)) {
        return Err(LabError::Config(format!(
            "{rule}: eps must satisfy 0 < eps < min(sqrt(Delta), r0 - sqrt(Delta)) = {}, got {eps}",
            sd.min(p.r0 - sd)
        )));
    }
    let violators: Vec<Witness> = dedupe(all, DEDUP_TOL)
        .iter()
        .filter(|l| (*l - p.r0).norm() < sd - eps)
        .map(score)
        .collect();
    if !violators.is_empty() {
        return Ok(StabilityVerdict::asymptotic(
            Verdict::Unstable,
            format!("{rule}: |lambda - r0| < sqrt(Delta) - eps"),
            violators,
        ));
    }
    if rest.iter().all(|l| (l - p.r0).norm() > sd + eps) {
        Ok(StabilityVerdict::asymptotic(
            Verdict::Stable,
            format!("{rule}: |lambda - r0| > sqrt(Delta) + eps"),
            rest_w,
        ))
    } else {
        Ok(StabilityVerdict::asymptotic(
            Verdict::Indeterminate,
            format!("{rule}: eigenvalue in the eps collar"),
            rest_w,
        ))
    }
}

/// Irreducible doubly nonnegative coupling (positive definite when alpha = 0).
pub fn classify_doubly_nonneg(
    p: &LimitProfile,
    g: &CouplingMatrix,
    eps: f64,
) -> Result<StabilityVerdict> {
    g.check_row_sums()?;
    let rep = structure_check(g)?;
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(LabError::Precondition(format!(
                "doubly nonnegative rule: matrix is not {what}"
            )))
        }
    };
    need(rep.symmetric, "symmetric")?;
    need(rep.irreducible, "irreducible")?;
    need(rep.nonneg_entries, "entrywise nonnegative")?;
    need(rep.positive_semidefinite, "positive semidefinite")?;
    if p.alpha == 0.0 {
        need(
            rep.positive_definite,
            "positive definite (required when alpha = 0)",
        )?;
    }
    let sigma = sigma_minus_one(g)?;
    band_rule(p, &sigma.all, &sigma.rest, eps, "doubly nonnegative")
}

/// Mean-field coupling `M_{n,kappa}`, `kappa` in (0, 1] (strictly below 1 when alpha = 0).
pub fn classify_mean_field(
    p: &LimitProfile,
    n: usize,
    kappa: f64,
    eps: f64,
) -> Result<StabilityVerdict> {
    if n < 2 {
        return Err(LabError::Domain(format!(
            "mean-field coupling needs n >= 2, got {n}"
        )));
    }
    let upper_ok = if p.alpha == 0.0 {
        kappa < 1.0
    } else {
        kappa <= 1.0
    };
    if !(kappa > 0.0 && upper_ok) {
        let window = if p.alpha == 0.0 { "(0, 1)" } else { "(0, 1]" };
        return Err(LabError::Precondition(format!(
            "mean-field rule: kappa must lie in {window}, got {kappa}"
        )));
    }
    let z = Complex64::new(1.0 - kappa, 0.0);
    band_rule(p, &[Complex64::new(1.0, 0.0), z], &[z], eps, "mean-field")
}

/// Symmetric ring `R_{n,(kappa,kappa)}` with `kappa` in (0, 1].
///
/// The strong-coupling clause fires when the most negative ring eigenvalue
/// `1 - kappa c` (with `c = max_j (1 - cos(2 pi j / n))`) satisfies
/// `kappa c > (1 - r0)(1 + sqrt(1 + delta))`, which forces `|nu*| > 1 + delta`.
/// Otherwise the doubly nonnegative bands apply for `kappa <= 1/2`
/// (strict when alpha = 0).
pub fn classify_ring_symmetric(
    p: &LimitProfile,
    n: usize,
    kappa: f64,
    eps: f64,
    delta: f64,
) -> Result<StabilityVerdict> {
    if n < 3 {
        return Err(LabError::Domain(format!(
            "ring coupling needs n >= 3, got {n}"
        )));
    }
    check_delta(delta)?;
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(LabError::Precondition(format!(
            "symmetric ring rule: kappa must lie in (0, 1], got {kappa}"
        )));
    }
    let c = 1.0 - (2.0 * PI * (n / 2) as f64 / n as f64).cos();
    if kappa * c > (1.0 - p.r0) * (1.0 + (1.0 + delta).sqrt()) {
        let z = Complex64::new(1.0 - kappa * c, 0.0);
        return Ok(StabilityVerdict::asymptotic(
            Verdict::Unstable,
            "symmetric ring: strong-coupling clause",
            vec![Witness::new(z, nu_star(p, z).norm())],
        ));
    }
    let in_window = if p.alpha == 0.0 {
        kappa < 0.5
    } else {
        kappa <= 0.5
    };
    let spectrum = coupling::ring_spectrum(n, kappa, kappa);
    if !in_window {
        let rest: Vec<Witness> = dedupe(&spectrum[1..], DEDUP_TOL)
            .iter()
            .map(|l| Witness::new(*l, nu_star(p, *l).norm()))
            .collect();
        return Ok(StabilityVerdict::asymptotic(
            Verdict::Indeterminate,
            "symmetric ring: kappa outside the doubly nonnegative window and strong-coupling clause not met",
            rest,
        ));
    }
    band_rule(p, &spectrum, &spectrum[1..], eps, "symmetric ring")
}

/// Spectral radii of the extended monodromy at the SOPS gain, one per
/// distinct eigenvalue of `sigma_{-1}(G)`.
pub fn classify_empirical(
    s: &Sops,
    g: &CouplingMatrix,
    m: usize,
    margin: f64,
) -> Result<StabilityVerdict> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(LabError::Config(format!(
            "margin must be finite and nonnegative, got {margin}"
        )));
    }
    g.check_row_sums()?;
    let sigma = sigma_minus_one(g)?;
    let lambdas = dedupe(&sigma.rest, DEDUP_TOL);
    let witnesses = lambdas
        .par_iter()
        .map(|&l| Ok(Witness::new(l, multiplier_radius(l, s, m, None)?)))
        .collect::<Result<Vec<_>>>()?;
    let caveat = format!("empirical at beta = {}", s.beta);
    let violators: Vec<Witness> = witnesses
        .iter()
        .filter(|w| w.value > 1.0 + margin)
        .cloned()
        .collect();
    let (verdict, rule, witnesses) = if !violators.is_empty() {
        (
            Verdict::Unstable,
            "empirical: rho(M_lambda) > 1 + margin",
            violators,
        )
    } else if witnesses.iter().all(|w| w.value < 1.0 - margin) {
        (
            Verdict::Stable,
            "empirical: rho(M_lambda) < 1 - margin",
            witnesses,
        )
    } else {
        (
            Verdict::Indeterminate,
            "empirical: rho(M_lambda) within the margin of 1",
            witnesses,
        )
    };
    Ok(StabilityVerdict {
        verdict,
        rule: rule.into(),
        witnesses,
        caveat,
    })
}
