//! Closed-form large-gain limit of a slowly oscillating periodic solution.
//!
//! Everything here is analytic: the limiting profile and its derivative, the
//! limiting measure, the characteristic map `nu_star`, its stability regions,
//! the limiting variational solution and the Hopf threshold.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Constants of the limiting solution for decay rate `alpha` and feedback
/// tails `a` (high side) and `b` (low side), normalized so that `a >= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitProfile {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    /// True when the inputs arrived with `a < b` and were exchanged.
    pub swapped: bool,
    pub q1: f64,
    pub q2: f64,
    pub omega_star: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub r0: f64,
    /// Discriminant `((rho1 - rho2)/2)^2 - (1 - rho1)(1 - rho2)`.
    pub delta_disc: f64,
}

impl LimitProfile {
    /// `(1 - rho1)(1 - rho2)`.
    pub fn denom(&self) -> f64 {
        (1.0 - self.rho1) * (1.0 - self.rho2)
    }

    /// Weight of the atom at `-1 + k omega_star`.
    pub fn weight_low(&self) -> f64 {
        -(1.0 + self.a / self.b)
    }

    /// Weight of the atom at `q1 + k omega_star`.
    pub fn weight_high(&self) -> f64 {
        -(1.0 + self.b / self.a)
    }
}

pub fn make_profile(alpha: f64, a: f64, b: f64) -> Result<LimitProfile> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(LabError::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return Err(LabError::Domain(format!(
            "tails must be positive, got a={a}, b={b}"
        )));
    }
    let (a, b, swapped) = if a < b { (b, a, true) } else { (a, b, false) };
    let decay = (-alpha).exp();
    let (q1, q2) = if alpha == 0.0 {
        (b / a, a / b)
    } else {
        let g = -(-alpha).exp_m1();
        ((b / a * g).ln_1p() / alpha, (a / b * g).ln_1p() / alpha)
    };
    let rho1 = a / (a + b) * decay;
    let rho2 = b / (a + b) * decay;
    let half_gap = 0.5 * (rho1 - rho2);
    Ok(LimitProfile {
        alpha,
        a,
        b,
        swapped,
        q1,
        q2,
        omega_star: q1 + q2 + 2.0,
        rho1,
        rho2,
        r0: 0.5 * decay,
        delta_disc: half_gap * half_gap - (1.0 - rho1) * (1.0 - rho2),
    })
}

/// Limiting characteristic map `(l - rho1)(l - rho2) / ((1 - rho1)(1 - rho2))`.
pub fn nu_star(p: &LimitProfile, lambda: Complex64) -> Complex64 {
    (lambda - p.rho1) * (lambda - p.rho2) / p.denom()
}

pub fn nu_star_prime(p: &LimitProfile, lambda: Complex64) -> Complex64 {
    (2.0 * lambda - p.rho1 - p.rho2) / p.denom()
}

/// Centered form on the real axis, `-1 - (Delta - (r - r0)^2) / ((1 - rho1)(1 - rho2))`.
pub fn nu_star_real_form(p: &LimitProfile, r: f64) -> f64 {
    let w = r - p.r0;
    -1.0 - (p.delta_disc - w * w) / p.denom()
}

/// Largest real `r` with `nu*(r) = level`; `None` when the level lies below
/// the real minimum of `nu*`.
pub fn real_level_root(p: &LimitProfile, level: f64) -> Option<f64> {
    let half_gap = 0.5 * (p.rho1 - p.rho2);
    let disc = half_gap * half_gap + level * p.denom();
    (disc >= 0.0).then(|| p.r0 + disc.sqrt())
}

/// Reduce `t` into `[start, start + period)`.
fn wrap(t: f64, start: f64, period: f64) -> f64 {
    let u = (t - start).rem_euclid(period);
    start + u
}

/// Limiting normalized profile, extended with period `omega_star`.
pub fn pbar_star(p: &LimitProfile, t: f64) -> f64 {
    let (a, b, al) = (p.a, p.b, p.alpha);
    let t = wrap(t, -p.q2 - 1.0, p.omega_star);
    if t <= 0.0 {
        if al == 0.0 {
            -a + b * (t + p.q2 + 1.0)
        } else {
            -(b / al) * (-al * (t + 1.0)).exp_m1()
        }
    } else if al == 0.0 {
        b - a * t
    } else {
        (a / al) * (-al * (t - p.q1)).exp_m1()
    }
}

/// Right-continuous derivative of [`pbar_star`].
pub fn pbar_star_dot(p: &LimitProfile, t: f64) -> f64 {
    let t = wrap(t, -p.q2 - 1.0, p.omega_star);
    if t < 0.0 {
        p.b * (-p.alpha * (t + 1.0)).exp()
    } else {
        -p.a * (-p.alpha * (t - p.q1)).exp()
    }
}

/// Limiting delayed feedback: `-a` on `[-1, q1)`, `b` on `[q1, q1 + q2 + 1)`.
pub fn h_star(p: &LimitProfile, t: f64) -> f64 {
    let t = wrap(t, -1.0, p.omega_star);
    if t < p.q1 {
        -p.a
    } else {
        p.b
    }
}

/// Atoms `(time, weight)` of the limiting measure lying in `(t0, t1]`, sorted by time.
pub fn mu_star_atoms(p: &LimitProfile, t0: f64, t1: f64) -> Vec<(f64, f64)> {
    let mut atoms = Vec::new();
    if !(t1 > t0) {
        return atoms;
    }
    for (base, w) in [(-1.0, p.weight_low()), (p.q1, p.weight_high())] {
        let mut k = ((t0 - base) / p.omega_star).floor() as i64;
        loop {
            let u = base + k as f64 * p.omega_star;
            if u > t1 {
                break;
            }
            if u > t0 {
                atoms.push((u, w));
            }
            k += 1;
        }
    }
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    atoms
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CassiniTag {
    StableRegion,
    UnstableRegion,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CassiniVerdict {
    pub tag: CassiniTag,
    /// `|nu_star(lambda)|`.
    pub modulus: f64,
    /// Distance from the modulus to the nearest band edge `1 -/+ delta`.
    pub margin: f64,
}

pub fn cassini_classify(p: &LimitProfile, lambda: Complex64, delta: f64) -> CassiniVerdict {
    let modulus = nu_star(p, lambda).norm();
    let lo = 1.0 - delta;
    let hi = 1.0 + delta;
    let tag = if modulus < lo {
        CassiniTag::StableRegion
    } else if modulus > hi {
        CassiniTag::UnstableRegion
    } else {
        CassiniTag::Indeterminate
    };
    let margin = (modulus - lo).abs().min((modulus - hi).abs());
    CassiniVerdict {
        tag,
        modulus,
        margin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub lambda: Complex64,
    pub center: f64,
    pub angle: f64,
    /// `| |nu_star(lambda)| - (1 - delta) |`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayFailure {
    pub center: f64,
    pub angle: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassiniBoundary {
    pub level: f64,
    /// Ray-fan centers: `r0` for a single oval, the two foci for two lobes.
    pub centers: Vec<f64>,
    pub points: Vec<BoundaryPoint>,
    pub failures: Vec<RayFailure>,
}

const RAY_SCAN: usize = 4000;
const RAY_RESIDUAL: f64 = 1e-10;

/// Level curve `|nu_star| = 1 - delta`, traced by ray bisection.
pub fn cassini_boundary(p: &LimitProfile, delta: f64, nsamples: usize) -> Result<CassiniBoundary> {
    if nsamples < 8 {
        return Err(LabError::Domain(format!(
            "nsamples must be >= 8, got {nsamples}"
        )));
    }
    if !(delta.is_finite() && (0.0..1.0).contains(&delta)) {
        return Err(LabError::Domain(format!(
            "delta must lie in [0, 1), got {delta}"
        )));
    }
    let level = 1.0 - delta;
    let half_gap = 0.5 * (p.rho1 - p.rho2);
    let centers = if half_gap * half_gap < level * p.denom() {
        vec![p.r0]
    } else {
        vec![p.rho1, p.rho2]
    };
    // Beyond this radius from r0 the modulus exceeds the level.
    let outer = (level * p.denom() + half_gap * half_gap).sqrt();
    let gap = |l: Complex64| nu_star(p, l).norm() - level;

    let mut points = Vec::with_capacity(nsamples * centers.len());
    let mut failures = Vec::new();
    for &c in &centers {
        let rmax = 1.01 * (outer + (c - p.r0).abs());
        for k in 0..nsamples {
            let angle = 2.0 * PI * k as f64 / nsamples as f64;
            let dir = Complex64::from_polar(1.0, angle);
            let at = |r: f64| Complex64::new(c, 0.0) + dir * r;
            let mut bracket = None;
            let mut prev = 0.0;
            for i in 1..=RAY_SCAN {
                let r = rmax * i as f64 / RAY_SCAN as f64;
                if gap(at(r)) >= 0.0 {
                    bracket = Some((prev, r));
                    break;
                }
                prev = r;
            }
            let Some((mut lo, mut hi)) = bracket else {
                failures.push(RayFailure {
                    center: c,
                    angle,
                    reason: "no sign change".into(),
                });
                continue;
            };
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if gap(at(mid)) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let (rl, rh) = (gap(at(lo)).abs(), gap(at(hi)).abs());
            let r = if rl < rh { lo } else { hi };
            let residual = rl.min(rh);
            if residual < RAY_RESIDUAL {
                points.push(BoundaryPoint {
                    lambda: at(r),
                    center: c,
                    angle,
                    residual,
                });
            } else {
                failures.push(RayFailure {
                    center: c,
                    angle,
                    reason: format!("bisection residual {residual:e}"),
                });
            }
        }
    }
    Ok(CassiniBoundary {
        level,
        centers,
        points,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionTag {
    /// Stable side of a critical point (`A_{<1}` or `A_{>0}`).
    StableSide,
    /// Unstable side (`A_{>1}` or `A_{<0}`).
    UnstableSide,
    Neither,
}

/// Neighborhood constants around a critical point of `nu_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegion {
    pub center: f64,
    pub eps: f64,
    pub inf_modulus: f64,
    pub sup_modulus: f64,
    pub d: f64,
    pub delta: f64,
    pub big_n: f64,
    pub c: f64,
    /// `+1` near one (growth to the right), `-1` near zero.
    orientation: f64,
}

const DISK_RADII: usize = 100;
const DISK_ANGLES: usize = 100;

fn disk_extrema(p: &LimitProfile, center: f64, radius: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for i in 0..DISK_RADII {
        let r = radius * i as f64 / (DISK_RADII - 1) as f64;
        for k in 0..DISK_ANGLES {
            let th = 2.0 * PI * k as f64 / DISK_ANGLES as f64;
            let m = nu_star(
                p,
                Complex64::new(center, 0.0) + Complex64::from_polar(r, th),
            )
            .norm();
            lo = lo.min(m);
            hi = hi.max(m);
        }
    }
    (lo, hi)
}

impl CriticalRegion {
    fn build(p: &LimitProfile, center: f64, eps: f64, d: f64, orientation: f64) -> Self {
        let (inf_modulus, sup_modulus) = disk_extrema(p, center, eps);
        let delta = inf_modulus.min(d);
        let big_n = sup_modulus + delta;
        CriticalRegion {
            center,
            eps,
            inf_modulus,
            sup_modulus,
            d,
            delta,
            big_n,
            c: eps * eps / (4.0 * big_n),
            orientation,
        }
    }

    pub fn near_one(p: &LimitProfile) -> Self {
        let d = 0.5 * nu_star_prime(p, Complex64::new(1.0, 0.0)).re;
        Self::build(p, 1.0, 0.5 * (1.0 - p.rho1), d, 1.0)
    }

    pub fn near_zero(p: &LimitProfile) -> Result<Self> {
        if p.alpha != 0.0 {
            return Err(LabError::Domain(
                "the region near zero requires alpha = 0".into(),
            ));
        }
        let d = -0.5 * nu_star_prime(p, Complex64::new(0.0, 0.0)).re;
        Ok(Self::build(p, 0.0, 0.5 * p.rho2, d, -1.0))
    }

    /// Lower-bound test function (`g1`).
    pub fn g1(&self, lambda: Complex64) -> f64 {
        let w = lambda - self.center;
        let lin = Complex64::new(1.0 + self.orientation * self.d * w.re, 3.0 * self.d * w.im);
        lin.norm() + w.norm_sqr() / self.c
    }

    /// Upper-bound test function (`g2`).
    pub fn g2(&self, lambda: Complex64) -> f64 {
        let w = lambda - self.center;
        let lin = Complex64::new(1.0 + self.orientation * self.d * w.re, self.d * w.im);
        lin.norm() - w.norm_sqr() / self.c
    }

    pub fn classify(&self, lambda: Complex64) -> RegionTag {
        let w = lambda - self.center;
        if w.norm() >= 0.5 * self.eps {
            return RegionTag::Neither;
        }
        // Stable side is left of one, right of zero.
        let toward_stable = self.orientation * w.re < 0.0;
        let toward_unstable = self.orientation * w.re > 0.0;
        if toward_stable && self.g1(lambda) < 1.0 {
            RegionTag::StableSide
        } else if toward_unstable && self.g2(lambda) > 1.0 {
            RegionTag::UnstableSide
        } else {
            RegionTag::Neither
        }
    }
}

pub fn region_a1(p: &LimitProfile, lambda: Complex64) -> RegionTag {
    CriticalRegion::near_one(p).classify(lambda)
}

pub fn region_a0(p: &LimitProfile, lambda: Complex64) -> Result<RegionTag> {
    Ok(CriticalRegion::near_zero(p)?.classify(lambda))
}

fn check_phase(p: &LimitProfile, s: f64) -> Result<()> {
    if !(s > -p.q1 && s < 0.0) {
        return Err(LabError::Domain(format!(
            "start phase {s} outside (-q1, 0) = ({}, 0)",
            -p.q1
        )));
    }
    Ok(())
}

/// Limiting variational solution `y(t)` started at phase `s` from history
/// `psi` on `[-1, 0]`; jumps occur one delay after each atom.
pub fn limiting_variational_solve(
    p: &LimitProfile,
    lambda: Complex64,
    psi: &dyn Fn(f64) -> Complex64,
    s: f64,
    t: f64,
) -> Result<Complex64> {
    check_phase(p, s)?;
    if !(t >= s - 1.0 && t <= s + p.omega_star) {
        return Err(LabError::Domain(format!(
            "t = {t} outside [s - 1, s + omega_star]"
        )));
    }
    Ok(limit_eval(p, lambda, psi, s, t))
}

fn limit_eval(
    p: &LimitProfile,
    lambda: Complex64,
    psi: &dyn Fn(f64) -> Complex64,
    s: f64,
    t: f64,
) -> Complex64 {
    if t <= s {
        return psi(t - s);
    }
    let al = p.alpha;
    let mut y = psi(0.0) * (-al * (t - s)).exp();
    for (u, w) in mu_star_atoms(p, s - 1.0, t - 1.0) {
        y += lambda * w * (-al * (t - 1.0 - u)).exp() * limit_eval(p, lambda, psi, s, u);
    }
    y
}

/// Coefficient of the rank-one limiting monodromy:
/// `[U psi](theta) = F(s, lambda, psi(0), psi(-1-s)) exp(-alpha theta)`.
pub fn monodromy_coefficient(
    p: &LimitProfile,
    s: f64,
    lambda: Complex64,
    z1: Complex64,
    z2: Complex64,
) -> Complex64 {
    let al = p.alpha;
    let head = z1 - lambda * z2 * (1.0 + p.a / p.b) * (-al * s).exp();
    -head * (lambda - p.rho1) / (1.0 - p.rho2) * (-al * (p.q2 + 1.0)).exp()
}

/// Nonzero eigenvalue of the rank-one limiting monodromy, evaluated on its
/// range `exp(-alpha theta)`.
pub fn limiting_monodromy_dominant(
    p: &LimitProfile,
    lambda: Complex64,
    s: f64,
) -> Result<Complex64> {
    check_phase(p, s)?;
    let g = |th: f64| Complex64::new((-p.alpha * th).exp(), 0.0);
    Ok(monodromy_coefficient(p, s, lambda, g(0.0), g(-1.0 - s)))
}

/// Growth bound `[1 + |l|(1 + a/b)] [1 + |l|(1 + b/a)]` for the limiting solution.
pub fn q_bound(p: &LimitProfile, lambda: Complex64) -> f64 {
    let m = lambda.norm();
    (1.0 + m * (1.0 + p.a / p.b)) * (1.0 + m * (1.0 + p.b / p.a))
}

/// Gain at which the zero solution of the scalar equation loses stability.
pub fn hopf_beta(alpha: f64, fprime0: f64) -> Result<f64> {
    if !(fprime0.is_finite() && fprime0 < 0.0) {
        return Err(LabError::Domain(format!(
            "f'(0) must be negative, got {fprime0}"
        )));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(LabError::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    let theta = if alpha == 0.0 {
        FRAC_PI_2
    } else {
        // theta cos(theta) + alpha sin(theta) changes sign once on (pi/2, pi).
        let k = |th: f64| th * th.cos() + alpha * th.sin();
        let (mut lo, mut hi) = (FRAC_PI_2, PI);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if k(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Ok(theta / theta.sin() / fprime0.abs())
}
