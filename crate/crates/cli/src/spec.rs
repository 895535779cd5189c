//! Experiment specification: JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sopslab_core::coupling::{mean_field, read_matrix_csv, ring, CouplingMatrix};
use sopslab_core::ddesolve::{default_step, steps_per_delay, HistorySegment};
use sopslab_core::feedback::{read_feedback_csv, tanh_feedback, FeedbackFunction};
use sopslab_core::limitcore::{make_profile, LimitProfile};
use sopslab_core::linalg::RealMat;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSpec {
    /// Only `tanh` is built in; use `table` for anything else.
    pub family: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// CSV with header `xi,f,fprime`.
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    /// `mean-field`, `ring`, `identity` or `matrix`.
    pub family: Option<String>,
    pub n: Option<usize>,
    pub kappa: Option<f64>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    /// Headerless square CSV.
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// `constant`, `ramp_plus_perturbation` or `tabulated`.
    pub kind: String,
    pub value: Option<Vec<f64>>,
    pub perturbation: Option<Vec<f64>>,
    /// Headerless CSV, one row per sample, uniformly spaced on `[-1, 0]`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub feedback: Option<FeedbackSpec>,
    pub coupling: Option<CouplingSpec>,
    pub initial: Option<InitialSpec>,
    pub horizon: Option<f64>,
    pub h: Option<f64>,
    pub m: Option<usize>,
    pub tol: Option<f64>,
    pub delta: Option<f64>,
    pub eps: Option<f64>,
    pub margin: Option<f64>,
    pub samples: Option<usize>,
    /// Multiplier parameters as `[re, im]` pairs.
    pub lambdas: Option<Vec<[f64; 2]>>,
    pub rule: Option<String>,
    pub sign: Option<i32>,
    pub levels: Option<Vec<f64>>,
    /// Headerless CSV for the row-sum-zero matrix of the weak and near-uniform rules.
    pub perturbation_matrix: Option<PathBuf>,
}

/// Flags shared by every subcommand; each one overrides the spec file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Experiment spec JSON.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory for CSV and JSON files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa2: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Classifier name.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub sign: Option<i32>,
    /// Multiplier parameter `re` or `re,im`; repeatable.
    #[arg(long = "lambda", allow_hyphen_values = true)]
    pub lambdas: Vec<String>,
    /// Coupling family: mean-field, ring, identity or matrix.
    #[arg(long)]
    pub family: Option<String>,
    /// Coupling matrix CSV (sets the coupling family to `matrix`).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Row-sum-zero perturbation matrix CSV for the weak and near-uniform rules.
    #[arg(long)]
    pub perturbation_matrix: Option<PathBuf>,
    /// Level of `nu*` targeted by the figure command; repeatable.
    #[arg(long = "level")]
    pub levels: Vec<f64>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn parse_lambda(s: &str) -> Result<[f64; 2], CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| {
        t.parse::<f64>()
            .map_err(|_| invalid(format!("bad --lambda value {s:?}")))
    };
    match parts.as_slice() {
        [re] => Ok([num(re)?, 0.0]),
        [re, im] => Ok([num(re)?, num(im)?]),
        _ => Err(invalid(format!(
            "bad --lambda value {s:?}, expected re or re,im"
        ))),
    }
}

impl ExperimentSpec {
    /// Read a spec file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read spec {}: {e}", path.display())))?;
        let mut spec: ExperimentSpec = serde_json::from_str(&text)
            .map_err(|e| invalid(format!("bad spec {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(f) = spec.feedback.as_mut() {
            resolve(base, &mut f.table);
        }
        if let Some(c) = spec.coupling.as_mut() {
            resolve(base, &mut c.matrix);
        }
        if let Some(i) = spec.initial.as_mut() {
            resolve(base, &mut i.path);
        }
        resolve(base, &mut spec.perturbation_matrix);
        Ok(spec)
    }

    /// Spec file (if any) with flags applied on top, checked for range errors.
    pub fn from_flags(flags: &Flags) -> Result<Self, CliError> {
        let mut s = match &flags.spec {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $( if flags.$field.is_some() { s.$field = flags.$field.clone(); } )* };
        }
        set!(
            alpha,
            beta,
            horizon,
            h,
            m,
            tol,
            delta,
            eps,
            margin,
            samples,
            rule,
            sign,
            perturbation_matrix
        );
        if flags.a.is_some() || flags.b.is_some() {
            let f = s.feedback.get_or_insert_with(Default::default);
            f.a = flags.a.or(f.a);
            f.b = flags.b.or(f.b);
        }
        if flags.kappa.is_some()
            || flags.kappa1.is_some()
            || flags.kappa2.is_some()
            || flags.n.is_some()
            || flags.family.is_some()
        {
            let c = s.coupling.get_or_insert_with(Default::default);
            c.family = flags.family.clone().or(c.family.take());
            c.kappa = flags.kappa.or(c.kappa);
            c.kappa1 = flags.kappa1.or(c.kappa1);
            c.kappa2 = flags.kappa2.or(c.kappa2);
            c.n = flags.n.or(c.n);
        }
        if let Some(path) = &flags.matrix {
            let c = s.coupling.get_or_insert_with(Default::default);
            c.family = Some("matrix".into());
            c.matrix = Some(path.clone());
        }
        if !flags.lambdas.is_empty() {
            s.lambdas = Some(
                flags
                    .lambdas
                    .iter()
                    .map(|l| parse_lambda(l))
                    .collect::<Result<_, _>>()?,
            );
        }
        if !flags.levels.is_empty() {
            s.levels = Some(flags.levels.clone());
        }
        s.validate()?;
        Ok(s)
    }

    /// Range checks that need no computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => {
                Err(invalid(format!("{name} must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a >= 0.0) {
                return Err(invalid(format!("alpha must be >= 0, got {a}")));
            }
        }
        positive("beta", self.beta)?;
        positive("horizon", self.horizon)?;
        positive("tol", self.tol)?;
        positive("margin", self.margin)?;
        if let Some(f) = &self.feedback {
            positive("a", f.a)?;
            positive("b", f.b)?;
            if let Some(fam) = &f.family {
                if fam != "tanh" {
                    return Err(invalid(format!(
                        "unknown feedback family {fam:?}; use \"tanh\" or a table"
                    )));
                }
            }
            if let Some(t) = &f.table {
                if !t.is_file() {
                    return Err(invalid(format!(
                        "feedback table {} does not exist",
                        t.display()
                    )));
                }
            }
        }
        if let Some(h) = self.h {
            steps_per_delay(h)?;
        }
        if let Some(d) = self.delta {
            if !(d.is_finite() && (0.0..1.0).contains(&d)) {
                return Err(invalid(format!("delta must lie in [0, 1), got {d}")));
            }
        }
        if let Some(e) = self.eps {
            if !(e.is_finite() && e >= 0.0) {
                return Err(invalid(format!("eps must be >= 0, got {e}")));
            }
        }
        if let Some(m) = self.m {
            if m < 2 {
                return Err(invalid(format!("m must be >= 2, got {m}")));
            }
        }
        if let Some(sign) = self.sign {
            if sign != 1 && sign != -1 {
                return Err(invalid(format!("sign must be 1 or -1, got {sign}")));
            }
        }
        if let Some(c) = &self.coupling {
            if let Some(fam) = &c.family {
                if !["mean-field", "ring", "identity", "matrix"].contains(&fam.as_str()) {
                    return Err(invalid(format!("unknown coupling family {fam:?}")));
                }
            }
            if let Some(p) = &c.matrix {
                if !p.is_file() {
                    return Err(invalid(format!(
                        "coupling matrix {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        if let Some(p) = &self.perturbation_matrix {
            if !p.is_file() {
                return Err(invalid(format!(
                    "perturbation matrix {} does not exist",
                    p.display()
                )));
            }
        }
        if let Some(i) = &self.initial {
            if !["constant", "ramp_plus_perturbation", "tabulated"].contains(&i.kind.as_str()) {
                return Err(invalid(format!(
                    "unknown initial condition kind {:?}",
                    i.kind
                )));
            }
            if let Some(p) = &i.path {
                if !p.is_file() {
                    return Err(invalid(format!(
                        "initial condition file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> Result<f64, CliError> {
        self.alpha.ok_or_else(|| invalid("alpha is required"))
    }

    pub fn beta(&self) -> Result<f64, CliError> {
        self.beta.ok_or_else(|| invalid("beta is required"))
    }

    /// Integration step, defaulting to the gain-dependent choice.
    pub fn step(&self, beta: f64) -> f64 {
        self.h.unwrap_or_else(|| default_step(beta))
    }

    pub fn feedback_function(&self) -> Result<FeedbackFunction, CliError> {
        let f = self.feedback.clone().unwrap_or_default();
        if let Some(t) = &f.table {
            return Ok(read_feedback_csv(t)?);
        }
        match (f.a, f.b) {
            (Some(a), Some(b)) => Ok(tanh_feedback(a, b)?),
            _ => Err(invalid("feedback needs both tails a and b, or a table")),
        }
    }

    pub fn profile(&self) -> Result<LimitProfile, CliError> {
        let f = self.feedback_function()?;
        Ok(make_profile(self.alpha()?, f.a, f.b)?)
    }

    pub fn coupling_spec(&self) -> CouplingSpec {
        self.coupling.clone().unwrap_or_default()
    }

    /// Node count, defaulting to 3.
    pub fn nodes(&self) -> usize {
        self.coupling.as_ref().and_then(|c| c.n).unwrap_or(3)
    }

    pub fn kappa(&self) -> Result<f64, CliError> {
        self.coupling
            .as_ref()
            .and_then(|c| c.kappa)
            .ok_or_else(|| invalid("kappa is required"))
    }

    pub fn coupling_matrix(&self) -> Result<CouplingMatrix, CliError> {
        let c = self.coupling_spec();
        let n = self.nodes();
        let family = match (&c.family, &c.matrix) {
            (Some(f), _) => f.clone(),
            (None, Some(_)) => "matrix".into(),
            (None, None) if c.kappa.is_some() || c.kappa1.is_some() || c.kappa2.is_some() => {
                return Err(invalid("coupling family is required when kappa is set"))
            }
            (None, None) => "identity".into(),
        };
        match family.as_str() {
            "identity" => Ok(CouplingMatrix::identity(n)),
            "mean-field" => Ok(mean_field(n, self.kappa()?)?),
            "ring" => {
                let k1 = c
                    .kappa1
                    .or(c.kappa)
                    .ok_or_else(|| invalid("ring coupling needs kappa1 or kappa"))?;
                let k2 = c
                    .kappa2
                    .or(c.kappa)
                    .ok_or_else(|| invalid("ring coupling needs kappa2 or kappa"))?;
                Ok(ring(n, k1, k2)?)
            }
            "matrix" => {
                let p = c
                    .matrix
                    .as_ref()
                    .ok_or_else(|| invalid("matrix coupling needs a matrix path"))?;
                Ok(read_matrix_csv(p)?)
            }
            other => Err(invalid(format!("unknown coupling family {other:?}"))),
        }
    }

    /// Square matrix with no row-sum constraint.
    pub fn perturbation(&self) -> Result<RealMat, CliError> {
        let p = self
            .perturbation_matrix
            .as_ref()
            .ok_or_else(|| invalid("this rule needs --perturbation-matrix"))?;
        let rows = read_rows(p)?;
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(invalid(format!("{} must be a square table", p.display())));
        }
        Ok(RealMat::from_fn(n, n, |j, k| rows[j][k]))
    }

    /// Initial function for an `n`-node run at gain `beta`.
    pub fn history(&self, n: usize, beta: f64) -> Result<HistorySegment<f64>, CliError> {
        let init = self.initial.clone().unwrap_or_else(|| InitialSpec {
            kind: "ramp_plus_perturbation".into(),
            ..Default::default()
        });
        let broadcast = |v: Vec<f64>, what: &str| -> Result<Vec<f64>, CliError> {
            match v.len() {
                1 => Ok(vec![v[0]; n]),
                k if k == n => Ok(v),
                k => Err(invalid(format!(
                    "{what} has {k} entries, network has {n} nodes"
                ))),
            }
        };
        match init.kind.as_str() {
            "constant" => {
                let v = init
                    .value
                    .ok_or_else(|| invalid("constant initial condition needs value"))?;
                Ok(HistorySegment::Constant(broadcast(v, "value")?))
            }
            "ramp_plus_perturbation" => {
                let at_zero = match init.perturbation {
                    Some(v) => broadcast(v, "perturbation")?,
                    None => default_perturbation(n),
                };
                Ok(HistorySegment::Ramp {
                    at_zero,
                    slope: vec![beta; n],
                })
            }
            "tabulated" => {
                let p = init
                    .path
                    .as_ref()
                    .ok_or_else(|| invalid("tabulated initial condition needs path"))?;
                let rows = read_rows(p)?;
                if rows.len() < 2 || rows.iter().any(|r| r.len() != n) {
                    return Err(invalid(format!(
                        "{} needs at least 2 rows of {n} values",
                        p.display()
                    )));
                }
                Ok(HistorySegment::Tabulated(rows))
            }
            other => Err(invalid(format!("unknown initial condition kind {other:?}"))),
        }
    }
}

/// `(0, e, -e, 0, ...)` with `e = 1/(10 sqrt 2)`; two nodes get `(0, e)`.
pub fn default_perturbation(n: usize) -> Vec<f64> {
    let e = 1.0 / (10.0 * 2f64.sqrt());
    (0..n)
        .map(|i| match i {
            1 => e,
            2 => -e,
            _ => 0.0,
        })
        .collect()
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| invalid(format!("{}: bad entry {s:?}", path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}
