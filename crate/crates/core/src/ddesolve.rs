//! Fixed-step RK4 for equations with a unit delay.
//!
//! Delayed values at grid nodes are exact; half-step values come from the
//! cubic Hermite interpolant built from stored states and derivatives. Inside
//! the first delay interval the history is evaluated directly, and steps are
//! split at its kinks so piecewise-linear histories are integrated accurately.

use std::io::Write;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::path::Path;

use num_complex::Complex64;

use crate::coupling::{CouplingMatrix, ROW_SUM_TOL};
use crate::error::{LabError, Result};
use crate::feedback::FeedbackFunction;

/// State scalar: `f64` or `Complex64`.
pub trait Field:
    Copy
    + Send
    + Sync
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
{
    fn zero() -> Self;
    fn is_finite_value(&self) -> bool;
    fn modulus(&self) -> f64;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
    fn modulus(&self) -> f64 {
        self.abs()
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn modulus(&self) -> f64 {
        self.norm()
    }
}

/// Initial function on `[-1, 0]` (relative to the start time).
#[derive(Debug, Clone, PartialEq)]
pub enum HistorySegment<T> {
    Constant(Vec<T>),
    /// `at_zero + slope * theta`.
    Ramp {
        at_zero: Vec<T>,
        slope: Vec<T>,
    },
    /// Piecewise linear through samples at `-1 + i / (len - 1)`.
    Tabulated(Vec<Vec<T>>),
    /// Cubic Hermite through values and derivatives at `-1 + i / (len - 1)`.
    Hermite {
        values: Vec<Vec<T>>,
        derivs: Vec<Vec<T>>,
    },
}

fn hermite<T: Field>(y0: T, d0: T, y1: T, d1: T, h: f64, u: f64) -> T {
    let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
    let h10 = u * (1.0 - u) * (1.0 - u);
    let h01 = u * u * (3.0 - 2.0 * u);
    let h11 = u * u * (u - 1.0);
    y0 * h00 + d0 * (h * h10) + y1 * h01 + d1 * (h * h11)
}

fn hermite_slope<T: Field>(y0: T, d0: T, y1: T, d1: T, h: f64, u: f64) -> T {
    let d00 = 6.0 * u * (u - 1.0) / h;
    let d10 = (1.0 - u) * (1.0 - 3.0 * u);
    let d01 = 6.0 * u * (1.0 - u) / h;
    let d11 = u * (3.0 * u - 2.0);
    y0 * d00 + d0 * d10 + y1 * d01 + d1 * d11
}

/// Cell index and local coordinate of `theta` on a uniform grid over `[-1, 0]`.
fn cell(theta: f64, cells: usize) -> (usize, f64) {
    let x = ((theta + 1.0) * cells as f64).clamp(0.0, cells as f64);
    let i = (x.floor() as usize).min(cells - 1);
    (i, x - i as f64)
}

impl<T: Field> HistorySegment<T> {
    pub fn dim(&self) -> usize {
        match self {
            HistorySegment::Constant(v) => v.len(),
            HistorySegment::Ramp { at_zero, .. } => at_zero.len(),
            HistorySegment::Tabulated(s) => s[0].len(),
            HistorySegment::Hermite { values, .. } => values[0].len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            HistorySegment::Constant(v) => !v.is_empty(),
            HistorySegment::Ramp { at_zero, slope } => {
                !at_zero.is_empty() && at_zero.len() == slope.len()
            }
            HistorySegment::Tabulated(s) => {
                s.len() >= 2 && !s[0].is_empty() && s.iter().all(|r| r.len() == s[0].len())
            }
            HistorySegment::Hermite { values, derivs } => {
                values.len() >= 2
                    && values.len() == derivs.len()
                    && !values[0].is_empty()
                    && values
                        .iter()
                        .chain(derivs.iter())
                        .all(|r| r.len() == values[0].len())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(LabError::Config("malformed history segment".into()))
        }
    }

    pub fn eval(&self, theta: f64, out: &mut [T]) {
        match self {
            HistorySegment::Constant(v) => out.copy_from_slice(v),
            HistorySegment::Ramp { at_zero, slope } => {
                for (o, (z, s)) in out.iter_mut().zip(at_zero.iter().zip(slope)) {
                    *o = *z + *s * theta;
                }
            }
            HistorySegment::Tabulated(s) => {
                let (i, u) = cell(theta, s.len() - 1);
                for (c, o) in out.iter_mut().enumerate() {
                    *o = s[i][c] * (1.0 - u) + s[i + 1][c] * u;
                }
            }
            HistorySegment::Hermite { values, derivs } => {
                let cells = values.len() - 1;
                let (i, u) = cell(theta, cells);
                let h = 1.0 / cells as f64;
                for (c, o) in out.iter_mut().enumerate() {
                    *o = hermite(
                        values[i][c],
                        derivs[i][c],
                        values[i + 1][c],
                        derivs[i + 1][c],
                        h,
                        u,
                    );
                }
            }
        }
    }

    /// Derivative on the cell containing `theta` (left cell at `theta = 0`).
    pub fn slope(&self, theta: f64, out: &mut [T]) {
        match self {
            HistorySegment::Constant(_) => out.iter_mut().for_each(|o| *o = T::zero()),
            HistorySegment::Ramp { slope, .. } => out.copy_from_slice(slope),
            HistorySegment::Tabulated(s) => {
                let cells = s.len() - 1;
                let (i, _) = cell(theta, cells);
                for (c, o) in out.iter_mut().enumerate() {
                    *o = (s[i + 1][c] - s[i][c]) * cells as f64;
                }
            }
            HistorySegment::Hermite { values, derivs } => {
                let cells = values.len() - 1;
                let (i, u) = cell(theta, cells);
                let h = 1.0 / cells as f64;
                for (c, o) in out.iter_mut().enumerate() {
                    *o = hermite_slope(
                        values[i][c],
                        derivs[i][c],
                        values[i + 1][c],
                        derivs[i + 1][c],
                        h,
                        u,
                    );
                }
            }
        }
    }

    /// Interior points of `(-1, 0)` where the history is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            HistorySegment::Tabulated(s) => {
                let cells = s.len() - 1;
                (1..cells).map(|i| -1.0 + i as f64 / cells as f64).collect()
            }
            _ => Vec::new(),
        }
    }
}

/// Hat function on the grid `-1 + i/m` peaking at node `j`.
pub fn hat_history<T: Field>(
    m: usize,
    j: usize,
    one: T,
    dim: usize,
    component: usize,
) -> HistorySegment<T> {
    let samples = (0..=m)
        .map(|i| {
            let mut row = vec![T::zero(); dim];
            if i == j {
                row[component] = one;
            }
            row
        })
        .collect();
    HistorySegment::Tabulated(samples)
}

/// States and derivatives on the grid `t0 + k h`, plus the history on `[t0 - 1, t0]`.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub t0: f64,
    pub h: f64,
    pub dim: usize,
    pub history: HistorySegment<T>,
    values: Vec<T>,
    derivs: Vec<T>,
}

impl<T: Field> Trajectory<T> {
    /// Number of computed nodes (including `t0`).
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn node(&self, k: usize) -> &[T] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn node_deriv(&self, k: usize) -> &[T] {
        &self.derivs[k * self.dim..(k + 1) * self.dim]
    }

    /// State at any `t` in `[t0 - 1, t_end]`.
    pub fn value_at(&self, t: f64, out: &mut [T]) {
        if t <= self.t0 {
            self.history.eval(t - self.t0, out);
            return;
        }
        let last = self.len() - 1;
        let x = ((t - self.t0) / self.h).min(last as f64);
        let k = (x.floor() as usize).min(last.saturating_sub(1));
        let u = x - k as f64;
        if last == 0 {
            out.copy_from_slice(self.node(0));
            return;
        }
        let (y0, y1) = (self.node(k), self.node(k + 1));
        let (d0, d1) = (self.node_deriv(k), self.node_deriv(k + 1));
        for c in 0..self.dim {
            out[c] = hermite(y0[c], d0[c], y1[c], d1[c], self.h, u);
        }
    }

    pub fn value(&self, t: f64) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        self.value_at(t, &mut out);
        out
    }

    /// Derivative at `t > t0` from the Hermite interpolant.
    pub fn slope_at(&self, t: f64, out: &mut [T]) {
        if t <= self.t0 {
            self.history.slope(t - self.t0, out);
            return;
        }
        let last = self.len() - 1;
        let x = ((t - self.t0) / self.h).min(last as f64);
        let k = (x.floor() as usize).min(last.saturating_sub(1));
        let u = x - k as f64;
        let (y0, y1) = (self.node(k), self.node(k + 1));
        let (d0, d1) = (self.node_deriv(k), self.node_deriv(k + 1));
        for c in 0..self.dim {
            out[c] = hermite_slope(y0[c], d0[c], y1[c], d1[c], self.h, u);
        }
    }
}

impl Trajectory<f64> {
    /// CSV with header `t,x1..xn` and, optionally, `dx1..dxn`.
    pub fn write_csv(&self, path: &Path, with_derivs: bool) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|c| format!("x{c}")));
        if with_derivs {
            header.extend((1..=self.dim).map(|c| format!("dx{c}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![format!("{:e}", self.time(k))];
            row.extend(self.node(k).iter().map(|v| format!("{v:e}")));
            if with_derivs {
                row.extend(self.node_deriv(k).iter().map(|v| format!("{v:e}")));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Read back the columns of a trajectory CSV: `(times, rows)`.
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| LabError::Validation(format!("bad number {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Check that `h = 1/N` for an integer `N >= 1`; returns `N`.
pub fn steps_per_delay(h: f64) -> Result<usize> {
    if !(h.is_finite() && h > 0.0 && h <= 1.0) {
        return Err(LabError::Config(format!(
            "step must lie in (0, 1], got {h}"
        )));
    }
    let n = (1.0 / h).round();
    if ((1.0 / n) - h).abs() > 1e-12 * h {
        return Err(LabError::Config(format!(
            "step {h} is not 1/N for an integer N"
        )));
    }
    Ok(n as usize)
}

/// `min(1e-3, 1/(4 ceil(beta)))`.
pub fn default_step(beta: f64) -> f64 {
    let n = (4.0 * beta.abs().max(1.0).ceil()).max(1000.0);
    1.0 / n
}

/// Right-hand side `(t, x(t), x(t-1), out)`.
pub type Rhs<'a, T> = dyn Fn(f64, &[T], &[T], &mut [T]) + Sync + 'a;

/// Number of RK4 sub-steps to use on `[t, t + h]`.
pub type Substeps<'a> = dyn Fn(f64) -> usize + Sync + 'a;

struct Work<T> {
    k: [Vec<T>; 4],
    tmp: Vec<T>,
    del: Vec<T>,
}

impl<T: Field> Trajectory<T> {
    pub fn start(history: HistorySegment<T>, t0: f64, h: f64) -> Result<Self> {
        history.validate()?;
        steps_per_delay(h)?;
        let dim = history.dim();
        let mut x0 = vec![T::zero(); dim];
        history.eval(0.0, &mut x0);
        Ok(Trajectory {
            t0,
            h,
            dim,
            history,
            values: x0,
            derivs: Vec::new(),
        })
    }

    fn rk4(&self, rhs: &Rhs<'_, T>, t: f64, dt: f64, x: &mut [T], w: &mut Work<T>) {
        let dim = self.dim;
        let stages = [(0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)];
        for s in 0..4 {
            let (cs, a) = stages[s];
            for c in 0..dim {
                w.tmp[c] = if s == 0 {
                    x[c]
                } else {
                    x[c] + w.k[s - 1][c] * (a * dt)
                };
            }
            self.value_at(t + cs * dt - 1.0, &mut w.del);
            let (tmp, del) = (&w.tmp, &w.del);
            rhs(t + cs * dt, tmp, del, &mut w.k[s]);
        }
        for c in 0..dim {
            x[c] += (w.k[0][c] + w.k[1][c] * 2.0 + w.k[2][c] * 2.0 + w.k[3][c]) * (dt / 6.0);
        }
    }

    /// Advance the grid until it reaches `t_end`.
    pub fn extend(&mut self, rhs: &Rhs<'_, T>, t_end: f64, substeps: &Substeps<'_>) -> Result<()> {
        let dim = self.dim;
        let mut w = Work {
            k: [
                vec![T::zero(); dim],
                vec![T::zero(); dim],
                vec![T::zero(); dim],
                vec![T::zero(); dim],
            ],
            tmp: vec![T::zero(); dim],
            del: vec![T::zero(); dim],
        };
        if self.derivs.is_empty() {
            let x0 = self.node(0).to_vec();
            self.value_at(self.t0 - 1.0, &mut w.del);
            let mut d0 = vec![T::zero(); dim];
            rhs(self.t0, &x0, &w.del, &mut d0);
            self.derivs = d0;
        }
        let kinks: Vec<f64> = self
            .history
            .breakpoints()
            .iter()
            .map(|b| self.t0 + 1.0 + b)
            .collect();
        let target = ((t_end - self.t0) / self.h - 1e-9).ceil().max(0.0) as usize;
        let mut x = self.node(self.len() - 1).to_vec();
        while self.len() - 1 < target {
            let k = self.len() - 1;
            let t = self.time(k);
            let t1 = self.time(k + 1);
            let mut cuts = vec![t];
            cuts.extend(
                kinks
                    .iter()
                    .copied()
                    .filter(|&b| b > t + 1e-12 * self.h && b < t1 - 1e-12 * self.h),
            );
            cuts.push(t1);
            let sub = substeps(t).max(1);
            for piece in cuts.windows(2) {
                let dt = (piece[1] - piece[0]) / sub as f64;
                for i in 0..sub {
                    self.rk4(rhs, piece[0] + i as f64 * dt, dt, &mut x, &mut w);
                }
            }
            if x.iter().any(|v| !v.is_finite_value()) {
                return Err(LabError::Integration {
                    time: t1,
                    message: "non-finite state".into(),
                });
            }
            self.value_at(t1 - 1.0, &mut w.del);
            let mut d = vec![T::zero(); dim];
            rhs(t1, &x, &w.del, &mut d);
            if d.iter().any(|v| !v.is_finite_value()) {
                return Err(LabError::Integration {
                    time: t1,
                    message: "non-finite derivative".into(),
                });
            }
            self.values.extend_from_slice(&x);
            self.derivs.extend_from_slice(&d);
        }
        Ok(())
    }
}

fn single_step(_: f64) -> usize {
    1
}

pub fn integrate<T: Field>(
    rhs: &Rhs<'_, T>,
    history: HistorySegment<T>,
    t0: f64,
    t_end: f64,
    h: f64,
    substeps: &Substeps<'_>,
) -> Result<Trajectory<T>> {
    let mut tr = Trajectory::start(history, t0, h)?;
    tr.extend(rhs, t_end, substeps)?;
    Ok(tr)
}

/// `x' = -alpha x + beta f(x(t-1))` from `t = 0`.
pub fn integrate_scalar(
    alpha: f64,
    beta: f64,
    f: &FeedbackFunction,
    history: HistorySegment<f64>,
    t_end: f64,
    h: f64,
) -> Result<Trajectory<f64>> {
    if history.dim() != 1 {
        return Err(LabError::Config(
            "scalar equation needs a one-dimensional history".into(),
        ));
    }
    let rhs = scalar_rhs(alpha, beta, f);
    integrate(&rhs, history, 0.0, t_end, h, &single_step)
}

pub fn scalar_rhs(
    alpha: f64,
    beta: f64,
    f: &FeedbackFunction,
) -> impl Fn(f64, &[f64], &[f64], &mut [f64]) + Sync + '_ {
    move |_t, x, xd, out| out[0] = -alpha * x[0] + beta * f.eval(xd[0])
}

/// `x^j' = -alpha x^j + beta sum_k G^{jk} f(x^k(t-1))` from `t = 0`.
pub fn integrate_coupled(
    alpha: f64,
    beta: f64,
    f: &FeedbackFunction,
    g: &CouplingMatrix,
    history: HistorySegment<f64>,
    t_end: f64,
    h: f64,
) -> Result<Trajectory<f64>> {
    let n = g.n();
    if history.dim() != n {
        return Err(LabError::Config(format!(
            "history has {} components, network has {n}",
            history.dim()
        )));
    }
    for j in 0..n {
        let s: f64 = (0..n).map(|k| g.matrix[(j, k)]).sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(LabError::Config(format!(
                "row {j} of the coupling sums to {s}"
            )));
        }
    }
    let m = &g.matrix;
    let rhs = move |_t: f64, x: &[f64], xd: &[f64], out: &mut [f64]| {
        let fx: Vec<f64> = xd.iter().map(|&v| f.eval(v)).collect();
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += m[(j, k)] * fx[k];
            }
            out[j] = -alpha * x[j] + beta * acc;
        }
    };
    integrate(&rhs, history, 0.0, t_end, h, &single_step)
}

/// Coefficient data for a linearization around a periodic reference `p`.
pub struct Linearization<'a> {
    pub alpha: f64,
    pub beta: f64,
    pub feedback: &'a FeedbackFunction,
    /// `t -> p(t)`.
    pub reference: &'a (dyn Fn(f64) -> f64 + Sync),
}

impl Linearization<'_> {
    /// `beta f'(p(t - 1))`.
    pub fn coefficient(&self, t: f64) -> f64 {
        self.beta * self.feedback.deriv((self.reference)(t - 1.0))
    }

    /// Sub-steps on `[t, t + h]`: refined where `|p(t-1)| < 5a`, i.e. inside a feedback spike.
    pub fn substeps(&self, t: f64, h: f64) -> usize {
        let width = 5.0 * self.feedback.a.max(self.feedback.b);
        let (p0, p1) = ((self.reference)(t - 1.0), (self.reference)(t - 1.0 + h));
        let inside = p0.abs() < width || p1.abs() < width || p0.signum() != p1.signum();
        if inside {
            ((self.beta * h * self.feedback.max_abs_deriv / 0.1).ceil() as usize).max(1)
        } else {
            1
        }
    }
}

/// `y' = -alpha y + lambda beta f'(p(t-1)) y(t-1)` from `t = s`.
pub fn integrate_variational(
    lambda: Complex64,
    lin: &Linearization<'_>,
    history: HistorySegment<Complex64>,
    s: f64,
    t_end: f64,
    h: f64,
) -> Result<Trajectory<Complex64>> {
    if history.dim() != 1 {
        return Err(LabError::Config(
            "variational equation needs a one-dimensional history".into(),
        ));
    }
    let alpha = lin.alpha;
    let rhs = move |t: f64, y: &[Complex64], yd: &[Complex64], out: &mut [Complex64]| {
        out[0] = -alpha * y[0] + lambda * lin.coefficient(t) * yd[0];
    };
    let sub = |t: f64| lin.substeps(t, h);
    integrate(&rhs, history, s, t_end, h, &sub)
}

/// `y^j' = -alpha y^j + beta f'(p(t-1)) sum_k G^{jk} y^k(t-1)` from `t = s`.
pub fn integrate_coupled_variational(
    g: &CouplingMatrix,
    lin: &Linearization<'_>,
    history: HistorySegment<f64>,
    s: f64,
    t_end: f64,
    h: f64,
) -> Result<Trajectory<f64>> {
    let n = g.n();
    if history.dim() != n {
        return Err(LabError::Config(format!(
            "history has {} components, network has {n}",
            history.dim()
        )));
    }
    let alpha = lin.alpha;
    let m = &g.matrix;
    let rhs = move |t: f64, y: &[f64], yd: &[f64], out: &mut [f64]| {
        let c = lin.coefficient(t);
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += m[(j, k)] * yd[k];
            }
            out[j] = -alpha * y[j] + c * acc;
        }
    };
    let sub = |t: f64| lin.substeps(t, h);
    integrate(&rhs, history, s, t_end, h, &sub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{mean_field, ring};
    use crate::feedback::tanh_feedback;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn step_validation() {
        assert_eq!(steps_per_delay(1e-3).unwrap(), 1000);
        assert_eq!(steps_per_delay(0.25).unwrap(), 4);
        assert!(steps_per_delay(0.3).is_err());
        assert!(steps_per_delay(0.0).is_err());
        assert_eq!(default_step(100.0), 1e-3);
        assert_eq!(default_step(1000.0), 1.0 / 4000.0);
    }

    #[test]
    fn zero_gain_is_pure_decay() {
        let f = tanh_feedback(2.0, 1.0).unwrap();
        let tr =
            integrate_scalar(0.7, 0.0, &f, HistorySegment::Constant(vec![1.3]), 5.0, 1e-2).unwrap();
        for k in 0..tr.len() {
            assert!((tr.node(k)[0] - 1.3 * (-0.7 * tr.time(k)).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn richardson_order_four() {
        // Equal tails keep f smooth at zero so the error constant is regular.
        let f = tanh_feedback(1.0, 1.0).unwrap();
        let run = |h: f64| {
            integrate_scalar(0.5, 2.0, &f, HistorySegment::Constant(vec![0.5]), 4.0, h)
                .unwrap()
                .value(4.0)[0]
        };
        let (a, b, c) = (run(1.0 / 20.0), run(1.0 / 40.0), run(1.0 / 80.0));
        let ratio = (a - b) / (b - c);
        assert!((ratio - 16.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn identity_coupling_decouples() {
        let f = tanh_feedback(2.0, 1.0).unwrap();
        let g = CouplingMatrix::identity(2);
        let hist = HistorySegment::Ramp {
            at_zero: vec![0.3, -0.8],
            slope: vec![1.0, 0.5],
        };
        let tr = integrate_coupled(0.2, 3.0, &f, &g, hist, 6.0, 1e-2).unwrap();
        let a = integrate_scalar(
            0.2,
            3.0,
            &f,
            HistorySegment::Ramp {
                at_zero: vec![0.3],
                slope: vec![1.0],
            },
            6.0,
            1e-2,
        )
        .unwrap();
        let b = integrate_scalar(
            0.2,
            3.0,
            &f,
            HistorySegment::Ramp {
                at_zero: vec![-0.8],
                slope: vec![0.5],
            },
            6.0,
            1e-2,
        )
        .unwrap();
        for k in 0..tr.len() {
            assert_eq!(tr.node(k)[0], a.node(k)[0]);
            assert_eq!(tr.node(k)[1], b.node(k)[0]);
        }
    }

    #[test]
    fn synchronous_start_stays_synchronous() {
        let f = tanh_feedback(2.0, 1.0).unwrap();
        let g = ring(4, 0.3, 0.3).unwrap();
        let tr = integrate_coupled(
            0.1,
            5.0,
            &f,
            &g,
            HistorySegment::Constant(vec![0.4; 4]),
            10.0,
            1e-2,
        )
        .unwrap();
        let sc = integrate_scalar(
            0.1,
            5.0,
            &f,
            HistorySegment::Constant(vec![0.4]),
            10.0,
            1e-2,
        )
        .unwrap();
        for k in 0..tr.len() {
            for j in 0..4 {
                assert!((tr.node(k)[j] - sc.node(k)[0]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_coupling_matches_scalar_mean() {
        let f = tanh_feedback(2.0, 1.0).unwrap();
        let g = mean_field(2, 1.0).unwrap();
        let tr = integrate_coupled(
            0.0,
            4.0,
            &f,
            &g,
            HistorySegment::Constant(vec![0.7, 0.7]),
            8.0,
            1e-2,
        )
        .unwrap();
        let sc =
            integrate_scalar(0.0, 4.0, &f, HistorySegment::Constant(vec![0.7]), 8.0, 1e-2).unwrap();
        for k in 0..tr.len() {
            assert!((tr.node(k)[0] - sc.node(k)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_rows_and_blowup() {
        let f = tanh_feedback(2.0, 1.0).unwrap();
        let g = CouplingMatrix {
            matrix: crate::linalg::RealMat::identity(2, 2) * 1.5,
            family: crate::coupling::FamilyTag::General,
        };
        assert!(integrate_coupled(
            0.0,
            1.0,
            &f,
            &g,
            HistorySegment::Constant(vec![0.0, 0.0]),
            1.0,
            0.1
        )
        .is_err());
        let grow = |_t: f64, x: &[f64], _xd: &[f64], out: &mut [f64]| out[0] = x[0] * x[0];
        let err = integrate(
            &grow,
            HistorySegment::Constant(vec![1.0]),
            0.0,
            5.0,
            0.1,
            &single_step,
        )
        .unwrap_err();
        match err {
            LabError::Integration { time, .. } => assert!(time > 0.0 && time < 5.0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn history_kinks_are_resolved() {
        // y' = y(t-1) with a hat history; exact on [0, 1] by quadrature of the hat.
        let rhs = |_t: f64, _y: &[f64], yd: &[f64], out: &mut [f64]| out[0] = yd[0];
        let hist = hat_history(7, 3, 1.0, 1, 0);
        let tr = integrate(&rhs, hist, 0.0, 1.0, 0.1, &single_step).unwrap();
        assert_abs_diff_eq!(tr.node(tr.len() - 1)[0], 1.0 / 7.0, epsilon = 1e-14);
    }

    #[test]
    fn csv_round_trip() {
        let f = tanh_feedback(2.0, 1.0).unwrap();
        let tr =
            integrate_scalar(0.1, 2.0, &f, HistorySegment::Constant(vec![1.0]), 2.0, 0.05).unwrap();
        let path = std::env::temp_dir().join(format!("traj_{}.csv", std::process::id()));
        tr.write_csv(&path, true).unwrap();
        let (header, rows) = read_trajectory_csv(&path).unwrap();
        assert_eq!(header, vec!["t", "x1", "dx1"]);
        assert_eq!(rows.len(), tr.len());
        for (k, r) in rows.iter().enumerate() {
            assert_eq!(r[1], tr.node(k)[0]);
            assert_eq!(r[2], tr.node_deriv(k)[0]);
        }
    }

    fn test_reference(t: f64) -> f64 {
        20.0 * (1.6 * t).sin()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn variational_is_linear(ar in -1.0..1.0f64, ai in -1.0..1.0f64, lr in -1.5..1.5f64, li in -1.5..1.5f64, j in 0usize..9, k in 0usize..9) {
            let f = tanh_feedback(2.0, 1.0).unwrap();
            let lin = Linearization { alpha: 0.3, beta: 8.0, feedback: &f, reference: &test_reference };
            let lam = Complex64::new(lr, li);
            let one = Complex64::new(1.0, 0.0);
            let run = |hist| integrate_variational(lam, &lin, hist, -0.2, 3.0, 0.02).unwrap();
            let a = Complex64::new(ar, ai);
            let h1 = hat_history(8, j, one, 1, 0);
            let h2 = hat_history(8, k, one, 1, 0);
            let combo = match (&h1, &h2) {
                (HistorySegment::Tabulated(x), HistorySegment::Tabulated(y)) => HistorySegment::Tabulated(
                    x.iter().zip(y).map(|(u, v)| vec![u[0] * a + v[0]]).collect()),
                _ => unreachable!(),
            };
            let (y1, y2, yc) = (run(h1), run(h2), run(combo));
            for n in 0..yc.len() {
                prop_assert!((yc.node(n)[0] - (y1.node(n)[0] * a + y2.node(n)[0])).norm() < 1e-10);
            }
        }

        #[test]
        fn real_data_stays_real(lr in -1.5..1.5f64, c in -1.0..1.0f64) {
            let f = tanh_feedback(2.0, 1.0).unwrap();
            let lin = Linearization { alpha: 0.3, beta: 8.0, feedback: &f, reference: &test_reference };
            let hist = HistorySegment::Ramp { at_zero: vec![Complex64::new(1.0, 0.0)], slope: vec![Complex64::new(c, 0.0)] };
            let tr = integrate_variational(Complex64::new(lr, 0.0), &lin, hist, 0.0, 3.0, 0.02).unwrap();
            for n in 0..tr.len() {
                prop_assert!(tr.node(n)[0].im.abs() < 1e-13);
            }
        }
    }
}
