//! Negative feedback nonlinearities and a numerical check of the standing
//! assumptions (sign condition, negative slope at zero, finite tails,
//! integrable derivative, decaying `xi f'(xi)`).

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Tanh,
    Table(Table),
    Custom { f: ScalarFn, df: ScalarFn },
}

/// A feedback function with its tail magnitudes `a` (as `xi -> +inf`, limit `-a`)
/// and `b` (as `xi -> -inf`, limit `b`).
#[derive(Clone)]
pub struct FeedbackFunction {
    kind: Kind,
    pub a: f64,
    pub b: f64,
    pub fprime0: f64,
    /// Largest `|f'|`, used to size sub-steps in spike windows.
    pub max_abs_deriv: f64,
}

impl fmt::Debug for FeedbackFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            Kind::Tanh => "tanh",
            Kind::Table(_) => "table",
            Kind::Custom { .. } => "custom",
        };
        fm.debug_struct("FeedbackFunction")
            .field("kind", &kind)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("fprime0", &self.fprime0)
            .finish()
    }
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}

impl FeedbackFunction {
    pub fn eval(&self, xi: f64) -> f64 {
        match &self.kind {
            Kind::Tanh => {
                if xi >= 0.0 {
                    -self.a * (xi / self.a).tanh()
                } else {
                    -self.b * (xi / self.b).tanh()
                }
            }
            Kind::Table(t) => t.eval(xi, self.a, self.b),
            Kind::Custom { f, .. } => f(xi),
        }
    }

    pub fn deriv(&self, xi: f64) -> f64 {
        match &self.kind {
            Kind::Tanh => {
                let s = if xi >= 0.0 { self.a } else { self.b };
                -sech2(xi / s)
            }
            Kind::Table(t) => t.deriv(xi),
            Kind::Custom { df, .. } => df(xi),
        }
    }

    /// Arbitrary function with declared tails, mainly for testing the validator.
    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        a: f64,
        b: f64,
    ) -> Self {
        let df: ScalarFn = Arc::new(df);
        let fprime0 = df(0.0);
        let max_abs_deriv = sampled_max_abs(&*df, a.max(b));
        FeedbackFunction {
            kind: Kind::Custom { f: Arc::new(f), df },
            a,
            b,
            fprime0,
            max_abs_deriv,
        }
    }
}

fn sampled_max_abs(df: &dyn Fn(f64) -> f64, scale: f64) -> f64 {
    let scale = if scale.is_finite() && scale > 0.0 {
        scale
    } else {
        1.0
    };
    (0..=4000)
        .map(|i| df(scale * 20.0 * (i as f64 / 2000.0 - 1.0)).abs())
        .fold(0.0, f64::max)
}

/// `-a tanh(xi/a)` for `xi >= 0` and `-b tanh(xi/b)` for `xi < 0`.
pub fn tanh_feedback(a: f64, b: f64) -> Result<FeedbackFunction> {
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return Err(LabError::Domain(format!(
            "tails must be positive, got a={a}, b={b}"
        )));
    }
    Ok(FeedbackFunction {
        kind: Kind::Tanh,
        a,
        b,
        fprime0: -1.0,
        max_abs_deriv: 1.0,
    })
}

/// Monotone piecewise-cubic table (Fritsch-Carlson limited slopes).
#[derive(Debug, Clone)]
struct Table {
    xi: Vec<f64>,
    f: Vec<f64>,
    slope: Vec<f64>,
}

impl Table {
    fn locate(&self, x: f64) -> usize {
        let i = self.xi.partition_point(|&v| v <= x);
        i.clamp(1, self.xi.len() - 1) - 1
    }

    fn eval(&self, x: f64, a: f64, b: f64) -> f64 {
        let n = self.xi.len();
        if x >= self.xi[n - 1] {
            return -a;
        }
        if x <= self.xi[0] {
            return b;
        }
        let i = self.locate(x);
        let h = self.xi[i + 1] - self.xi[i];
        let u = (x - self.xi[i]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u),
            u * (1.0 - u) * (1.0 - u),
            u * u * (3.0 - 2.0 * u),
            u * u * (u - 1.0),
        );
        h00 * self.f[i]
            + h10 * h * self.slope[i]
            + h01 * self.f[i + 1]
            + h11 * h * self.slope[i + 1]
    }

    fn deriv(&self, x: f64) -> f64 {
        let n = self.xi.len();
        if x >= self.xi[n - 1] || x <= self.xi[0] {
            return 0.0;
        }
        let i = self.locate(x);
        let h = self.xi[i + 1] - self.xi[i];
        let u = (x - self.xi[i]) / h;
        let (d00, d10, d01, d11) = (
            6.0 * u * (u - 1.0),
            (1.0 - u) * (1.0 - 3.0 * u),
            6.0 * u * (1.0 - u),
            u * (3.0 * u - 2.0),
        );
        (d00 * self.f[i] + d01 * self.f[i + 1]) / h + d10 * self.slope[i] + d11 * self.slope[i + 1]
    }
}

#[derive(Debug, Deserialize)]
struct TableRow {
    xi: f64,
    f: f64,
    fprime: f64,
}

/// Build a tabulated feedback from rows `(xi, f, f')`; tails clamp to the end values.
pub fn tabulated_feedback(rows: &[(f64, f64, f64)]) -> Result<FeedbackFunction> {
    if rows.len() < 3 {
        return Err(LabError::Validation(
            "feedback table needs at least 3 rows".into(),
        ));
    }
    if rows
        .iter()
        .any(|r| !(r.0.is_finite() && r.1.is_finite() && r.2.is_finite()))
    {
        return Err(LabError::Validation(
            "feedback table has non-finite entries".into(),
        ));
    }
    if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(LabError::Validation(
            "feedback table xi must be strictly increasing".into(),
        ));
    }
    let xi: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let f: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mut slope: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let n = xi.len();
    let secant: Vec<f64> = (0..n - 1)
        .map(|i| (f[i + 1] - f[i]) / (xi[i + 1] - xi[i]))
        .collect();
    // Fritsch-Carlson: zero slopes at extrema, then cap to keep each cell monotone.
    for i in 0..n {
        let left = if i > 0 { Some(secant[i - 1]) } else { None };
        let right = if i < n - 1 { Some(secant[i]) } else { None };
        for s in [left, right].into_iter().flatten() {
            if s == 0.0 || s.signum() != slope[i].signum() {
                slope[i] = 0.0;
            }
        }
    }
    for (i, &s) in secant.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let (al, be) = (slope[i] / s, slope[i + 1] / s);
        let r = al.hypot(be);
        if r > 3.0 {
            slope[i] = 3.0 * al / r * s;
            slope[i + 1] = 3.0 * be / r * s;
        }
    }
    let table = Table { xi, f, slope };
    let a = -table.f[n - 1];
    let b = table.f[0];
    let fprime0 = table.deriv(0.0);
    let max_abs_deriv = table
        .xi
        .windows(2)
        .flat_map(|w| (0..=8).map(move |k| w[0] + (w[1] - w[0]) * k as f64 / 8.0))
        .map(|x| table.deriv(x).abs())
        .fold(0.0, f64::max);
    Ok(FeedbackFunction {
        kind: Kind::Table(table),
        a,
        b,
        fprime0,
        max_abs_deriv,
    })
}

/// Read a CSV table with header `xi,f,fprime`.
pub fn read_feedback_csv(path: &Path) -> Result<FeedbackFunction> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let r: TableRow = rec?;
        rows.push((r.xi, r.f, r.fprime));
    }
    tabulated_feedback(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `int |f'|` over `[-r, r]`, split into logarithmic panels so that narrow
/// features near the origin are not skipped.
fn total_variation(fb: &FeedbackFunction, r: f64, tol: f64) -> f64 {
    let g = |x: f64| fb.deriv(x).abs();
    let mut edges = vec![0.0];
    let mut e = 1e-3;
    while e < r {
        edges.push(e);
        e *= 2.0;
    }
    edges.push(r);
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += adaptive(&g, w[0], w[1], tol) + adaptive(&g, -w[1], -w[0], tol);
    }
    total
}

/// Check the standing assumptions on a feedback function numerically.
pub fn validate_assumption(
    fb: &FeedbackFunction,
    grid_half_width: f64,
    tol: f64,
) -> ValidationReport {
    let w = grid_half_width;
    let mut checks = Vec::new();

    let mut worst: Option<f64> = None;
    let mut x = 1e-6;
    while x <= w {
        for xi in [x, -x] {
            let v = xi * fb.eval(xi);
            if !(v < 0.0) {
                worst = Some(xi);
            }
        }
        x *= 1.1;
    }
    let f0 = fb.eval(0.0);
    checks.push(Check {
        name: "sign".into(),
        pass: worst.is_none() && f0.abs() <= tol,
        detail: match worst {
            Some(xi) => format!("xi f(xi) >= 0 at xi = {xi:e}"),
            None => format!("f(0) = {f0:e}"),
        },
    });

    let d0 = fb.deriv(0.0);
    checks.push(Check {
        name: "slope_at_zero".into(),
        pass: d0 < 0.0,
        detail: format!("f'(0) = {d0}"),
    });

    let hi = fb.eval(w);
    let lo = fb.eval(-w);
    let tails_ok = (hi + fb.a).abs() <= tol && (lo - fb.b).abs() <= tol;
    checks.push(Check {
        name: "tails".into(),
        pass: tails_ok,
        detail: format!(
            "f({w:e}) = {hi}, f(-{w:e}) = {lo}, expected {} and {}",
            -fb.a, fb.b
        ),
    });

    let inner = total_variation(fb, 1e5, 1e-10);
    let outer = total_variation(fb, 1e6, 1e-10);
    let tv_ok = outer.is_finite() && (outer - inner).abs() <= tol.max(1e-8) * (1.0 + outer);
    checks.push(Check {
        name: "integrable_derivative".into(),
        pass: tv_ok,
        detail: format!("int |f'| on [-1e5, 1e5] = {inner}, on [-1e6, 1e6] = {outer}"),
    });

    let tail_decay = (w * fb.deriv(w)).abs().max((w * fb.deriv(-w)).abs());
    checks.push(Check {
        name: "derivative_tail_decay".into(),
        pass: tail_decay <= tol,
        detail: format!("max |xi f'(xi)| at |xi| = {w:e}: {tail_decay:e}"),
    });

    ValidationReport { checks }
}
