//! Synchrony measure and the three-node ring experiment.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::{ring, solve_ring_kappa};
use crate::ddesolve::{integrate_coupled, steps_per_delay, HistorySegment, Trajectory};
use crate::error::{LabError, Result};
use crate::feedback::FeedbackFunction;
use crate::limitcore::{hopf_beta, make_profile, real_level_root};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncSeries {
    pub times: Vec<f64>,
    pub g: Vec<f64>,
    pub window: f64,
}

fn spread(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

/// Largest pairwise component gap over `[max(t - window, 0), t]` for each
/// sample time. Grid nodes inside the window are used, plus both window ends.
pub fn sync_measure(
    traj: &Trajectory<f64>,
    window: f64,
    sample_times: &[f64],
) -> Result<SyncSeries> {
    if traj.dim < 2 {
        return Err(LabError::Domain(
            "synchrony needs at least two components".into(),
        ));
    }
    if !(window.is_finite() && window > 0.0) {
        return Err(LabError::Domain(format!(
            "window must be positive, got {window}"
        )));
    }
    if traj.t0 > 0.0 {
        return Err(LabError::Domain(format!(
            "trajectory starts at {} > 0",
            traj.t0
        )));
    }
    let t_end = traj.t_end();
    let nodes: Vec<f64> = (0..traj.len()).map(|k| spread(traj.node(k))).collect();
    let mut buf = vec![0.0; traj.dim];
    let mut g = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        if !(t >= 0.0 && t <= t_end + 1e-12) {
            return Err(LabError::Domain(format!(
                "sample time {t} outside the computed range [0, {t_end}]"
            )));
        }
        let s0 = (t - window).max(0.0);
        traj.value_at(s0, &mut buf);
        let mut best = spread(&buf);
        traj.value_at(t, &mut buf);
        best = best.max(spread(&buf));
        let k0 = ((s0 - traj.t0) / traj.h).ceil().max(0.0) as usize;
        let k1 = (((t - traj.t0) / traj.h).floor() as usize).min(traj.len() - 1);
        for v in nodes.iter().take(k1 + 1).skip(k0) {
            best = best.max(*v);
        }
        g.push(best);
    }
    Ok(SyncSeries {
        times: sample_times.to_vec(),
        g,
        window,
    })
}

/// Least-squares slope of `ln g` against `t` over samples in `[t_lo, t_hi]`.
pub fn log_slope(series: &SyncSeries, t_lo: f64, t_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = series
        .times
        .iter()
        .zip(&series.g)
        .filter(|(t, _)| **t >= t_lo && **t <= t_hi)
        .map(|(t, g)| (*t, *g))
        .collect();
    if pts.len() < 2 {
        return Err(LabError::Domain(format!(
            "fewer than two samples in [{t_lo}, {t_hi}]"
        )));
    }
    if pts.iter().any(|(_, g)| !(*g > 0.0)) {
        return Err(LabError::Domain(
            "log slope needs g > 0 on the fit interval".into(),
        ));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, g) in &pts {
        sxy += (t - mt) * (g.ln() - ml);
        sxx += (t - mt) * (t - mt);
    }
    Ok(sxy / sxx)
}

/// Ring experiment: `n`-node ring whose eigenvalue `z_j` is placed on the
/// real axis where `nu*` equals `level`, started from
/// `beta * theta * 1 + perturbation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingExperiment {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub j: usize,
    pub level: f64,
    /// Gain; `None` means `beta_Hopf + 0.01`.
    pub beta: Option<f64>,
    pub perturbation: Vec<f64>,
    pub horizon: f64,
    pub h: f64,
    pub sample_dt: f64,
    pub fit_window: (f64, f64),
}

impl RingExperiment {
    /// Three-node ring with `alpha = 1/8`, tails 24 and 1, just above the Hopf gain.
    pub fn three_node(level: f64) -> Self {
        let e = 1.0 / (10.0 * 2f64.sqrt());
        RingExperiment {
            alpha: 0.125,
            a: 24.0,
            b: 1.0,
            n: 3,
            j: 1,
            level,
            beta: None,
            perturbation: vec![0.0, e, -e],
            horizon: 80.0,
            h: 1e-3,
            sample_dt: 0.1,
            fit_window: (10.0, 80.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RingOutcome {
    pub beta: f64,
    pub target: f64,
    pub kappa: (f64, f64),
    pub omega_star: f64,
    pub trajectory: Trajectory<f64>,
    pub sync: SyncSeries,
    pub slope: f64,
}

pub fn figure_experiment(spec: &RingExperiment, f: &FeedbackFunction) -> Result<RingOutcome> {
    steps_per_delay(spec.h)?;
    if spec.perturbation.len() != spec.n {
        return Err(LabError::Config(format!(
            "perturbation has {} entries, ring has {} nodes",
            spec.perturbation.len(),
            spec.n
        )));
    }
    if !(spec.sample_dt > 0.0 && spec.horizon > 0.0) {
        return Err(LabError::Config(
            "horizon and sample spacing must be positive".into(),
        ));
    }
    let (lo, hi) = spec.fit_window;
    if !(0.0 <= lo && lo < hi && hi <= spec.horizon) {
        return Err(LabError::Config(format!(
            "fit window [{lo}, {hi}] must lie inside [0, {}]",
            spec.horizon
        )));
    }
    let p = make_profile(spec.alpha, spec.a, spec.b)?;
    let beta = match spec.beta {
        Some(b) => b,
        None => hopf_beta(spec.alpha, f.fprime0)? + 0.01,
    };
    let target = real_level_root(&p, spec.level).ok_or_else(|| {
        LabError::Domain(format!("nu* never reaches {} on the real axis", spec.level))
    })?;
    let kappa = solve_ring_kappa(spec.n, spec.j, Complex64::new(target, 0.0))?;
    let g = ring(spec.n, kappa.0, kappa.1)?;
    let history = HistorySegment::Ramp {
        at_zero: spec.perturbation.clone(),
        slope: vec![beta; spec.n],
    };
    let trajectory = integrate_coupled(spec.alpha, beta, f, &g, history, spec.horizon, spec.h)?;
    let count = (spec.horizon / spec.sample_dt).floor() as usize;
    let times: Vec<f64> = (0..=count).map(|i| i as f64 * spec.sample_dt).collect();
    let sync = sync_measure(&trajectory, p.omega_star, &times)?;
    let slope = log_slope(&sync, lo, hi)?;
    Ok(RingOutcome {
        beta,
        target,
        kappa,
        omega_star: p.omega_star,
        trajectory,
        sync,
        slope,
    })
}

/// Columns `t, x1..xn, g, log_g` at the sample times.
pub fn write_figure_csv(out: &RingOutcome, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n = out.trajectory.dim;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("g".into());
    header.push("log_g".into());
    writeln!(w, "{}", header.join(","))?;
    for (t, g) in out.sync.times.iter().zip(&out.sync.g) {
        let x = out.trajectory.value(*t);
        let mut row = vec![format!("{t:e}")];
        row.extend(x.iter().map(|v| format!("{v:e}")));
        row.push(format!("{g:e}"));
        row.push(format!("{:e}", g.ln()));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
