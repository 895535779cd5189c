//! One function per subcommand. Each returns the JSON summary printed on
//! stdout and, when an output directory is given, writes its CSV/JSON files.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sopslab_core::classify::{
    classify_doubly_nonneg, classify_empirical, classify_general, classify_mean_field,
    classify_near_uniform, classify_ring_symmetric, classify_weak, StabilityVerdict,
};
use sopslab_core::ddesolve::integrate_coupled;
use sopslab_core::experiment::{
    figure_experiment, log_slope, sync_measure, write_figure_csv, RingExperiment,
};
use sopslab_core::feedback::tanh_feedback;
use sopslab_core::floquet::{monodromy_matrix, spectrum, DEFAULT_FLOOR};
use sopslab_core::limitcore::{cassini_boundary, hopf_beta, nu_star, LimitProfile};
use sopslab_core::sops::{
    export_sops, find_sops, limit_residuals, Sops, DEFAULT_MAX_TIME, DEFAULT_TOL, DEFAULT_TRANSIENT,
};

use crate::spec::{default_perturbation, ExperimentSpec};
use crate::CliError;

/// Default delta for the general classifier.
pub const DEFAULT_DELTA: f64 = 0.1;
/// Default margin for the empirical classifier.
pub const DEFAULT_MARGIN: f64 = 0.1;
/// Default collocation grid size.
pub const DEFAULT_M: usize = 128;

fn out_file(out: Option<&Path>, name: &str) -> Result<Option<std::path::PathBuf>, CliError> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Ok(Some(dir.join(name)))
        }
        None => Ok(None),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(sopslab_core::LabError::from)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(sopslab_core::LabError::from)?;
    w.write_record(header)
        .map_err(sopslab_core::LabError::from)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:e}")))
            .map_err(sopslab_core::LabError::from)?;
    }
    w.flush()?;
    Ok(())
}

fn find(spec: &ExperimentSpec) -> Result<Sops, CliError> {
    let f = spec.feedback_function()?;
    let beta = spec.beta()?;
    let tol = spec.tol.unwrap_or(DEFAULT_TOL);
    Ok(find_sops(
        spec.alpha()?,
        beta,
        &f,
        spec.step(beta),
        tol,
        DEFAULT_TRANSIENT,
        DEFAULT_MAX_TIME,
    )?)
}

/// Half the admissible band width, or 0 when the bands do not apply.
pub fn default_eps(p: &LimitProfile) -> f64 {
    if p.delta_disc > 0.0 {
        let root = p.delta_disc.sqrt();
        0.5 * root.min(p.r0 - root)
    } else {
        0.0
    }
}

pub fn profile(spec: &ExperimentSpec, out: Option<&Path>) -> Result<Value, CliError> {
    let f = spec.feedback_function()?;
    let p = spec.profile()?;
    let hopf = hopf_beta(p.alpha, f.fprime0)?;
    let mut summary = serde_json::to_value(p).map_err(sopslab_core::LabError::from)?;
    summary["hopf_beta"] = json!(hopf);
    if let Some(path) = out_file(out, "profile.json")? {
        write_json(&path, &summary)?;
        let n = spec.samples.unwrap_or(201).max(2);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let r = -2.0 + 4.0 * i as f64 / (n - 1) as f64;
                let v = nu_star(&p, Complex64::new(r, 0.0));
                vec![r, v.re, v.im, v.norm()]
            })
            .collect();
        write_rows(
            &out.unwrap().join("nu_star.csv"),
            &["lambda", "nu_re", "nu_im", "nu_abs"],
            &rows,
        )?;
    }
    Ok(summary)
}

pub fn sops(spec: &ExperimentSpec, out: Option<&Path>) -> Result<Value, CliError> {
    let p = spec.profile()?;
    let s = find(spec)?;
    let eps = spec.eps.unwrap_or(0.01_f64.min(0.25 * p.q1));
    let residuals = limit_residuals(&s, eps)?;
    let summary = json!({
        "sops": s.sidecar(),
        "residuals": residuals,
        "h": s.h,
        "tol": spec.tol.unwrap_or(DEFAULT_TOL),
    });
    if let Some(csv) = out_file(out, "sops.csv")? {
        export_sops(&s, &csv, &out.unwrap().join("sops.json"))?;
        write_json(&out.unwrap().join("residuals.json"), &summary)?;
    }
    Ok(summary)
}

#[derive(Serialize)]
struct FloquetRow {
    lambda: Complex64,
    dominant: Option<Complex64>,
    spectral_radius: f64,
    nu_star: Complex64,
}

pub fn floquet(spec: &ExperimentSpec, out: Option<&Path>) -> Result<Value, CliError> {
    let p = spec.profile()?;
    let s = find(spec)?;
    let m = spec.m.unwrap_or(DEFAULT_M);
    let lambdas: Vec<Complex64> = spec
        .lambdas
        .clone()
        .unwrap_or_else(|| vec![[1.0, 0.0]])
        .iter()
        .map(|l| Complex64::new(l[0], l[1]))
        .collect();
    let rows = lambdas
        .par_iter()
        .map(|&l| {
            let rep = spectrum(&monodromy_matrix(l, &s, m, None)?, DEFAULT_FLOOR)?;
            Ok(FloquetRow {
                lambda: l,
                dominant: rep.dominant,
                spectral_radius: rep.spectral_radius,
                nu_star: nu_star(&p, l),
            })
        })
        .collect::<Result<Vec<_>, sopslab_core::LabError>>()?;
    if let Some(path) = out_file(out, "floquet.csv")? {
        let table: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let d = r.dominant.unwrap_or(Complex64::new(f64::NAN, f64::NAN));
                vec![
                    r.lambda.re,
                    r.lambda.im,
                    d.re,
                    d.im,
                    r.spectral_radius,
                    r.nu_star.re,
                    r.nu_star.im,
                ]
            })
            .collect();
        let header = [
            "lambda_re",
            "lambda_im",
            "dominant_re",
            "dominant_im",
            "spectral_radius",
            "nu_star_re",
            "nu_star_im",
        ];
        write_rows(&path, &header, &table)?;
    }
    Ok(json!({ "beta": s.beta, "m": m, "multipliers": rows }))
}

pub fn classify(spec: &ExperimentSpec, out: Option<&Path>) -> Result<Value, CliError> {
    let rule = spec.rule.clone().unwrap_or_else(|| "general".into());
    let sign = spec.sign.unwrap_or(1);
    let delta = spec.delta.unwrap_or(DEFAULT_DELTA);
    let verdict: StabilityVerdict = match rule.as_str() {
        "weak" => classify_weak(&spec.perturbation()?, sign)?,
        "near-uniform" => classify_near_uniform(&spec.profile()?, &spec.perturbation()?, sign)?,
        "general" => classify_general(&spec.profile()?, &spec.coupling_matrix()?, delta)?,
        "doubly-nonneg" => {
            let p = spec.profile()?;
            classify_doubly_nonneg(&p, &spec.coupling_matrix()?, spec.eps.unwrap_or_else(|| default_eps(&p)))?
        }
        "mean-field" => {
            let p = spec.profile()?;
            classify_mean_field(&p, spec.nodes(), spec.kappa()?, spec.eps.unwrap_or_else(|| default_eps(&p)))?
        }
        "ring" => {
            let p = spec.profile()?;
            let c = spec.coupling_spec();
            let k1 = c.kappa1.or(c.kappa);
            let k2 = c.kappa2.or(c.kappa);
            let kappa = match (k1, k2) {
                (Some(a), Some(b)) if a == b => a,
                (Some(_), Some(_)) => {
                    return Err(CliError::Invalid("symmetric ring rule: kappa1 and kappa2 must be equal".into()))
                }
                _ => return Err(CliError::Invalid("symmetric ring rule: kappa is required".into())),
            };
            let eps = spec.eps.unwrap_or_else(|| default_eps(&p));
            classify_ring_symmetric(&p, spec.nodes(), kappa, eps, delta)?
        }
        "empirical" => {
            let g = spec.coupling_matrix()?;
            let s = find(spec)?;
            classify_empirical(&s, &g, spec.m.unwrap_or(DEFAULT_M), spec.margin.unwrap_or(DEFAULT_MARGIN))?
        }
        other => {
            return Err(CliError::Invalid(format!(
                "unknown rule {other:?}; expected general, weak, near-uniform, doubly-nonneg, mean-field, ring or empirical"
            )))
        }
    };
    if let Some(path) = out_file(out, "verdict.json")? {
        verdict.write_json(&path)?;
    }
    Ok(serde_json::to_value(&verdict).map_err(sopslab_core::LabError::from)?)
}

/// Real parts of boundary points lying on the real axis.
fn real_crossings(points: &[Complex64]) -> Vec<f64> {
    let mut xs: Vec<f64> = points
        .iter()
        .filter(|z| z.im.abs() <= 1e-12 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    xs
}

pub fn region(spec: &ExperimentSpec, out: Option<&Path>) -> Result<Value, CliError> {
    let p = spec.profile()?;
    let delta = spec.delta.unwrap_or(0.0);
    let boundary = cassini_boundary(&p, delta, spec.samples.unwrap_or(256))?;
    let lambdas: Vec<Complex64> = boundary.points.iter().map(|b| b.lambda).collect();
    let summary = json!({
        "level": boundary.level,
        "centers": boundary.centers,
        "points": boundary.points.len(),
        "failures": boundary.failures.len(),
        "real_crossings": real_crossings(&lambdas),
    });
    if let Some(path) = out_file(out, "region.csv")? {
        let rows: Vec<Vec<f64>> = boundary
            .points
            .iter()
            .map(|b| vec![b.lambda.re, b.lambda.im, b.center, b.angle, b.residual])
            .collect();
        write_rows(
            &path,
            &["lambda_re", "lambda_im", "center", "angle", "residual"],
            &rows,
        )?;
        write_json(&out.unwrap().join("region.json"), &boundary)?;
    }
    Ok(summary)
}

pub fn simulate(spec: &ExperimentSpec, out: Option<&Path>) -> Result<Value, CliError> {
    let f = spec.feedback_function()?;
    let p = spec.profile()?;
    let beta = spec.beta()?;
    let g = spec.coupling_matrix()?;
    let n = g.n();
    if n < 2 {
        return Err(CliError::Invalid("simulate needs at least 2 nodes".into()));
    }
    let history = spec.history(n, beta)?;
    let horizon = spec.horizon.unwrap_or(80.0);
    let h = spec.step(beta);
    let traj = integrate_coupled(p.alpha, beta, &f, &g, history, horizon, h)?;
    let count = spec
        .samples
        .unwrap_or((horizon / 0.1).round() as usize)
        .max(1);
    let times: Vec<f64> = (0..=count)
        .map(|i| horizon * i as f64 / count as f64)
        .collect();
    let sync = sync_measure(&traj, p.omega_star, &times)?;
    let slope = log_slope(&sync, horizon / 8.0, horizon).ok();
    if let Some(path) = out_file(out, "trajectory.csv")? {
        traj.write_csv(&path, false)?;
        let rows: Vec<Vec<f64>> = sync
            .times
            .iter()
            .zip(&sync.g)
            .map(|(&t, &v)| vec![t, v])
            .collect();
        write_rows(&out.unwrap().join("sync.csv"), &["t", "g"], &rows)?;
    }
    Ok(json!({
        "n": n,
        "beta": beta,
        "h": h,
        "horizon": horizon,
        "omega_star": p.omega_star,
        "final_g": sync.g.last().copied(),
        "max_g": sync.g.iter().copied().fold(0.0, f64::max),
        "log_slope": slope,
    }))
}

pub fn figure(spec: &ExperimentSpec, out: Option<&Path>) -> Result<Value, CliError> {
    let levels = spec.levels.clone().unwrap_or_else(|| vec![0.9, 1.1]);
    let fb = spec.feedback.clone().unwrap_or_default();
    let f = match (&fb.table, fb.a, fb.b) {
        (None, None, None) => tanh_feedback(24.0, 1.0)?,
        _ => spec.feedback_function()?,
    };
    let base = RingExperiment::three_node(0.0);
    let n = spec.coupling.as_ref().and_then(|c| c.n).unwrap_or(base.n);
    let horizon = spec.horizon.unwrap_or(base.horizon);
    let runs: Vec<RingExperiment> = levels
        .iter()
        .map(|&level| RingExperiment {
            alpha: spec.alpha.unwrap_or(base.alpha),
            a: f.a,
            b: f.b,
            n,
            level,
            beta: spec.beta,
            perturbation: if n == base.n {
                base.perturbation.clone()
            } else {
                default_perturbation(n)
            },
            horizon,
            h: spec.h.unwrap_or(base.h),
            fit_window: if spec.horizon.is_some() {
                (horizon / 8.0, horizon)
            } else {
                base.fit_window
            },
            ..base.clone()
        })
        .collect();
    let outcomes = runs
        .par_iter()
        .map(|r| figure_experiment(r, &f))
        .collect::<Result<Vec<_>, sopslab_core::LabError>>()?;
    let mut rows = Vec::new();
    for (r, o) in runs.iter().zip(&outcomes) {
        if let Some(path) = out_file(out, &format!("figure_level_{}.csv", r.level))? {
            write_figure_csv(o, &path)?;
        }
        rows.push(json!({
            "level": r.level,
            "beta": o.beta,
            "target": o.target,
            "kappa1": o.kappa.0,
            "kappa2": o.kappa.1,
            "omega_star": o.omega_star,
            "fit_window": [r.fit_window.0, r.fit_window.1],
            "log_slope": o.slope,
        }));
    }
    let summary = json!({ "runs": rows });
    if let Some(path) = out_file(out, "figure.json")? {
        write_json(&path, &summary)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sopslab_core::limitcore::make_profile;

    #[test]
    fn crossings_keep_only_real_points() {
        let pts = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.3),
            Complex64::new(-0.2, 1e-14),
            Complex64::new(1.0, 0.0),
        ];
        assert_eq!(real_crossings(&pts), vec![-0.2, 1.0]);
    }

    #[test]
    fn default_eps_sits_inside_the_admissible_band() {
        let p = make_profile(0.125, 24.0, 1.0).unwrap();
        assert!(p.delta_disc > 0.0);
        let root = p.delta_disc.sqrt();
        let e = default_eps(&p);
        assert!(e > 0.0 && e < root.min(p.r0 - root));
        let q = make_profile(2.0, 2.0, 1.0).unwrap();
        assert_eq!(default_eps(&q), 0.0);
    }
}
