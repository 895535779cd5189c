//! Numerical slowly oscillating periodic solutions of the scalar equation,
//! phase-fixed so that `p(-1) = 0` with `p'(-1) > 0`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ddesolve::{scalar_rhs, steps_per_delay, HistorySegment, Linearization, Trajectory};
use crate::error::{LabError, Result};
use crate::feedback::FeedbackFunction;
use crate::limitcore::{hopf_beta, make_profile, pbar_star, pbar_star_dot, LimitProfile};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_TRANSIENT: f64 = 50.0;
pub const DEFAULT_MAX_TIME: f64 = 500.0;

#[derive(Debug, Clone)]
pub struct Sops {
    pub alpha: f64,
    pub beta: f64,
    pub feedback: FeedbackFunction,
    pub omega: f64,
    /// First downward zero after `-1`.
    pub z1: f64,
    /// Next upward zero, `omega - 1`.
    pub z2: f64,
    pub h: f64,
    /// `p` and `p'` at `-1 + i h`, covering slightly more than one period.
    pub p: Vec<f64>,
    pub pdot: Vec<f64>,
    /// `sup |x(t + omega) - x(t)|` over the last checked period.
    pub residual: f64,
}

impl Sops {
    pub fn time(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.h
    }

    /// Number of grid samples inside one period `[-1, -1 + omega)`.
    pub fn period_samples(&self) -> usize {
        ((self.omega / self.h).floor() as usize + 1).min(self.p.len())
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let u = (t + 1.0).rem_euclid(self.omega) / self.h;
        let i = (u.floor() as usize).min(self.p.len() - 2);
        (i, u - i as f64)
    }

    /// Periodic extension of `p` by cubic Hermite interpolation.
    pub fn value(&self, t: f64) -> f64 {
        let (i, u) = self.locate(t);
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        h00 * self.p[i]
            + self.h * h10 * self.pdot[i]
            + h01 * self.p[i + 1]
            + self.h * h11 * self.pdot[i + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (i, u) = self.locate(t);
        let d00 = 6.0 * u * (u - 1.0) / self.h;
        let d10 = (1.0 - u) * (1.0 - 3.0 * u);
        let d01 = 6.0 * u * (1.0 - u) / self.h;
        let d11 = u * (3.0 * u - 2.0);
        d00 * self.p[i] + d10 * self.pdot[i] + d01 * self.p[i + 1] + d11 * self.pdot[i + 1]
    }

    /// `p` on `[-1, 0]` as a Hermite history starting at `t = 0`.
    pub fn unit_history(&self) -> HistorySegment<f64> {
        let n = (1.0 / self.h).round() as usize;
        HistorySegment::Hermite {
            values: (0..=n).map(|i| vec![self.p[i]]).collect(),
            derivs: (0..=n).map(|i| vec![self.pdot[i]]).collect(),
        }
    }

    pub fn linearization<'a>(
        &'a self,
        reference: &'a (dyn Fn(f64) -> f64 + Sync),
    ) -> Linearization<'a> {
        Linearization {
            alpha: self.alpha,
            beta: self.beta,
            feedback: &self.feedback,
            reference,
        }
    }

    pub fn sidecar(&self) -> SopsSidecar {
        SopsSidecar {
            omega: self.omega,
            z1: self.z1,
            z2: self.z2,
            residual: self.residual,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SopsSidecar {
    pub omega: f64,
    pub z1: f64,
    pub z2: f64,
    pub residual: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Normalized samples `p / beta` and `p' / beta` on the SOPS grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSops {
    pub t: Vec<f64>,
    pub pbar: Vec<f64>,
    pub pbar_dot: Vec<f64>,
    pub omega: f64,
}

pub fn normalize_sops(s: &Sops) -> NormalizedSops {
    NormalizedSops {
        t: (0..s.p.len()).map(|i| s.time(i)).collect(),
        pbar: s.p.iter().map(|v| v / s.beta).collect(),
        pbar_dot: s.pdot.iter().map(|v| v / s.beta).collect(),
        omega: s.omega,
    }
}

/// Zero of the Hermite interpolant on `[t_k, t_k + h]`, by bisection.
fn refine_zero(tr: &Trajectory<f64>, k: usize) -> f64 {
    let (mut lo, mut hi) = (tr.time(k), tr.time(k + 1));
    let f_lo = tr.node(k)[0];
    let mut buf = [0.0];
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        tr.value_at(mid, &mut buf);
        if (buf[0] < 0.0) == (f_lo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn crossings(tr: &Trajectory<f64>, from: usize, upward: bool) -> Vec<f64> {
    (from..tr.len() - 1)
        .filter(|&k| {
            let (a, b) = (tr.node(k)[0], tr.node(k + 1)[0]);
            if upward {
                a < 0.0 && b >= 0.0
            } else {
                a > 0.0 && b <= 0.0
            }
        })
        .map(|k| refine_zero(tr, k))
        .collect()
}

/// Locate a stable SOPS by forward integration from `phi = 1`.
pub fn find_sops(
    alpha: f64,
    beta: f64,
    f: &FeedbackFunction,
    h: f64,
    tol: f64,
    transient: f64,
    max_time: f64,
) -> Result<Sops> {
    let threshold = hopf_beta(alpha, f.fprime0)?;
    if !(beta > threshold) {
        return Err(LabError::Precondition(format!(
            "gain {beta} does not exceed the Hopf threshold {threshold}"
        )));
    }
    steps_per_delay(h)?;
    if !(tol > 0.0 && transient >= 0.0 && max_time > transient) {
        return Err(LabError::Config(
            "need tol > 0 and max_time > transient >= 0".into(),
        ));
    }
    let rhs = scalar_rhs(alpha, beta, f);
    let one = |_t: f64| 1;
    let mut tr = Trajectory::start(HistorySegment::Constant(vec![1.0]), 0.0, h)?;
    tr.extend(&rhs, transient, &one)?;
    let first = tr.len() - 1;
    let mut best = f64::INFINITY;
    let mut buf = [0.0];
    loop {
        let t_next = (tr.t_end() + 10.0).min(max_time);
        tr.extend(&rhs, t_next, &one)?;
        let up = crossings(&tr, first, true);
        if up.len() >= 5 {
            let c = &up[up.len() - 4..];
            let omega = (c[3] - c[0]) / 3.0;
            let k0 = ((c[1] - tr.t0) / h).ceil() as usize;
            let k1 = ((c[2] - tr.t0) / h).floor() as usize;
            let mut residual: f64 = 0.0;
            for k in k0..=k1 {
                tr.value_at(tr.time(k) + omega, &mut buf);
                residual = residual.max((buf[0] - tr.node(k)[0]).abs());
            }
            best = best.min(residual);
            if residual < tol {
                return build(&tr, alpha, beta, f, c[0], omega, residual);
            }
        }
        if tr.t_end() >= max_time - 0.5 * h {
            return Err(LabError::NonConvergence {
                best_residual: best,
                message: format!("no periodic orbit within tolerance {tol:e} by t = {max_time}"),
            });
        }
    }
}

fn build(
    tr: &Trajectory<f64>,
    alpha: f64,
    beta: f64,
    f: &FeedbackFunction,
    tc: f64,
    omega: f64,
    residual: f64,
) -> Result<Sops> {
    let h = tr.h;
    let count = (omega / h).ceil() as usize + 3;
    let mut p = Vec::with_capacity(count);
    let mut pdot = Vec::with_capacity(count);
    let mut buf = [0.0];
    for i in 0..count {
        let t = tc + i as f64 * h;
        tr.value_at(t, &mut buf);
        let v = buf[0];
        tr.value_at(t - 1.0, &mut buf);
        p.push(v);
        pdot.push(-alpha * v + beta * f.eval(buf[0]));
    }
    let k_start = ((tc - tr.t0) / h).floor() as usize;
    let down = crossings(tr, k_start, false);
    let Some(&td) = down.iter().find(|&&t| t > tc) else {
        return Err(LabError::NonConvergence {
            best_residual: residual,
            message: "no downward zero".into(),
        });
    };
    let z1 = td - tc - 1.0;
    let z2 = omega - 1.0;
    if !(z1 > 0.0 && z2 - z1 > 1.0) {
        return Err(LabError::NonConvergence {
            best_residual: residual,
            message: format!("orbit is not slowly oscillating (z1 = {z1}, z2 = {z2})"),
        });
    }
    Ok(Sops {
        alpha,
        beta,
        feedback: f.clone(),
        omega,
        z1,
        z2,
        h,
        p,
        pdot,
        residual,
    })
}

/// Distances between the numerical orbit and the limiting profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitResiduals {
    pub z1: f64,
    pub z2: f64,
    pub omega: f64,
    /// `sup |p/beta - pbar_star|` over one period.
    pub profile: f64,
    /// `sup |p'/beta - pbar_star'|` over one period, away from the jump times.
    pub derivative: f64,
}

/// Limiting profile in the orbit's own phase convention, `(value, slope, z1_star)`.
fn limit_in_phase(
    pr: &LimitProfile,
) -> (
    Box<dyn Fn(f64) -> f64 + '_>,
    Box<dyn Fn(f64) -> f64 + '_>,
    f64,
) {
    if pr.swapped {
        // Mirror image: the normalized profile crosses upward where this one crosses downward.
        let shift = pr.q2 + 1.0;
        (
            Box::new(move |t| -pbar_star(pr, t - shift)),
            Box::new(move |t| -pbar_star_dot(pr, t - shift)),
            pr.q2,
        )
    } else {
        (
            Box::new(move |t| pbar_star(pr, t)),
            Box::new(move |t| pbar_star_dot(pr, t)),
            pr.q1,
        )
    }
}

pub fn limit_residuals(s: &Sops, eps: f64) -> Result<LimitResiduals> {
    let pr = make_profile(s.alpha, s.feedback.a, s.feedback.b)?;
    if !(eps > 0.0 && eps < 0.5 * pr.q1) {
        return Err(LabError::Domain(format!(
            "eps must lie in (0, q1/2) = (0, {})",
            0.5 * pr.q1
        )));
    }
    let (value, slope, z1_star) = limit_in_phase(&pr);
    let jumps = [0.0, z1_star + 1.0];
    let near_jump = |t: f64| {
        jumps.iter().any(|&j| {
            let d = (t - j).rem_euclid(pr.omega_star);
            d.min(pr.omega_star - d) < eps
        })
    };
    let mut profile: f64 = 0.0;
    let mut derivative: f64 = 0.0;
    for i in 0..s.period_samples() {
        let t = s.time(i);
        profile = profile.max((s.p[i] / s.beta - value(t)).abs());
        if !near_jump(t) {
            derivative = derivative.max((s.pdot[i] / s.beta - slope(t)).abs());
        }
    }
    Ok(LimitResiduals {
        z1: (s.z1 - z1_star).abs(),
        z2: (s.z2 - (pr.omega_star - 1.0)).abs(),
        omega: (s.omega - pr.omega_star).abs(),
        profile,
        derivative,
    })
}

/// Write `t,p,pdot` to `csv_path` and the sidecar JSON to `json_path`.
pub fn export_sops(s: &Sops, csv_path: &Path, json_path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
    writeln!(w, "t,p,pdot")?;
    for i in 0..s.p.len() {
        writeln!(w, "{:e},{:e},{:e}", s.time(i), s.p[i], s.pdot[i])?;
    }
    w.flush()?;
    std::fs::write(json_path, serde_json::to_string_pretty(&s.sidecar())?)?;
    Ok(())
}

/// Rebuild an orbit from exported files.
pub fn import_sops(csv_path: &Path, json_path: &Path, f: &FeedbackFunction) -> Result<Sops> {
    let side: SopsSidecar = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let (mut t, mut p, mut pdot) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.deserialize() {
        let (a, b, c): (f64, f64, f64) = rec?;
        t.push(a);
        p.push(b);
        pdot.push(c);
    }
    if t.len() < 3 {
        return Err(LabError::Validation("orbit table too short".into()));
    }
    let h = t[1] - t[0];
    Ok(Sops {
        alpha: side.alpha,
        beta: side.beta,
        feedback: f.clone(),
        omega: side.omega,
        z1: side.z1,
        z2: side.z2,
        h,
        p,
        pdot,
        residual: side.residual,
    })
}
