//! Acceptance suite: one line per criterion, then a single verdict.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sopslab_core::classify::{classify_empirical, classify_general, Verdict};
use sopslab_core::coupling::{eigenvalues, mean_field, ring, ring_spectrum, CouplingMatrix};
use sopslab_core::experiment::{figure_experiment, RingExperiment};
use sopslab_core::feedback::{tanh_feedback, FeedbackFunction};
use sopslab_core::floquet::{decomposition_check, dominant_multiplier};
use sopslab_core::limitcore::{
    hopf_beta, limiting_monodromy_dominant, limiting_variational_solve, make_profile, nu_star,
    nu_star_real_form,
};
use sopslab_core::sops::{
    find_sops, limit_residuals, Sops, DEFAULT_MAX_TIME, DEFAULT_TOL, DEFAULT_TRANSIENT,
};

const LADDER: [f64; 3] = [10.0, 30.0, 100.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn sops(alpha: f64, beta: f64, f: &FeedbackFunction, h: f64) -> Sops {
    find_sops(
        alpha,
        beta,
        f,
        h,
        DEFAULT_TOL,
        DEFAULT_TRANSIENT,
        DEFAULT_MAX_TIME,
    )
    .expect("SOPS search")
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn criterion_1() -> Outcome {
    let _ = hopf_beta(0.125, -1.0);
    let t = Instant::now();
    let beta = hopf_beta(0.125, -1.0).unwrap();
    let dt = t.elapsed();
    outcome(
        (beta - 1.65).abs() <= 0.01 && dt < Duration::from_millis(1),
        format!("beta_Hopf(1/8, -1) = {beta:.12} in {dt:?}"),
    )
}

/// Ladder at `h = 1e-3` shared by criteria 2 and 3.
fn ladder_sops(f: &FeedbackFunction) -> Vec<(Sops, Duration)> {
    LADDER
        .iter()
        .map(|&beta| {
            let t = Instant::now();
            let s = sops(0.0, beta, f, 1e-3);
            (s, t.elapsed())
        })
        .collect()
}

fn criterion_2(ladder: &[(Sops, Duration)]) -> Outcome {
    let omega_err: Vec<f64> = ladder.iter().map(|(s, _)| (s.omega - 4.5).abs()).collect();
    let top = &ladder[2].0;
    let profile = limit_residuals(top, 0.01).unwrap().profile;
    let slowest = ladder.iter().map(|(_, d)| *d).max().unwrap();
    let pass = strictly_decreasing(&omega_err)
        && omega_err[2] < 0.15
        && profile < 0.1
        && slowest < Duration::from_secs(30);
    outcome(
        pass,
        format!(
            "|omega - 4.5| = {}; sup profile gap at beta=100 = {profile:.3e}; slowest {slowest:?}",
            sci(&omega_err)
        ),
    )
}

fn criterion_3(ladder: &[(Sops, Duration)]) -> Outcome {
    let (s, found) = &ladder[2];
    let t = Instant::now();
    let d = dominant_multiplier(c(1.0, 0.0), s, 128, None).unwrap();
    let total = *found + t.elapsed();
    outcome(
        (d - 1.0).norm() <= 5e-3 && total < Duration::from_secs(60),
        format!(
            "dominant multiplier at lambda = 1: {d:.9} (|d - 1| = {:.3e}) in {total:?}",
            (d - 1.0).norm()
        ),
    )
}

fn criterion_4(f: &FeedbackFunction) -> Outcome {
    // Step fine enough that discretization error at beta = 100 sits below the
    // finite-gain gap at beta = 30.
    let h = 1.0 / 8000.0;
    let p = make_profile(0.0, 2.0, 1.0).unwrap();
    let lambdas = [c(0.3, 0.0), c(0.6, 0.0), c(0.5, 0.9)];
    let runs: Vec<Sops> = LADDER.iter().map(|&b| sops(0.0, b, f, h)).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for l in lambdas {
        let nu = nu_star(&p, l);
        let errs: Vec<f64> = runs
            .iter()
            .map(|s| (dominant_multiplier(l, s, 128, None).unwrap() - nu).norm())
            .collect();
        let allowed = (0.25 * nu.norm()).max(0.05);
        let ok = strictly_decreasing(&errs) && errs[2] <= allowed;
        pass &= ok;
        parts.push(format!(
            "lambda {l}: errors {} (allowed {allowed:.3e})",
            sci(&errs)
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_5(ladder: &[(Sops, Duration)]) -> Outcome {
    let s = &ladder[1].0;
    let g = ring(3, 0.2, 0.2).unwrap();
    let t = Instant::now();
    let rep = decomposition_check(&g, s, 64, 0.05, 1e-8, None).unwrap();
    let dt = t.elapsed();
    outcome(
        rep.distance < 1e-8 && dt < Duration::from_secs(300),
        format!(
            "Hausdorff distance above 0.05 = {:.3e} in {dt:?}",
            rep.distance
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = make_profile(0.125, 2.0, 1.0).unwrap();
    let s = -0.4 * p.q1;
    let mut worst_dom: f64 = 0.0;
    for _ in 0..100 {
        let l = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let dom = limiting_monodromy_dominant(&p, l, s).unwrap();
        worst_dom = worst_dom.max((dom - nu_star(&p, l)).norm());
    }
    let mut worst_jump: f64 = 0.0;
    for _ in 0..100 {
        let l = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let (k1, k2, k3) = (
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.0..3.0),
        );
        let psi = move |th: f64| c(k1 + k2 * th, (k3 * th).sin());
        let y0 = limiting_variational_solve(&p, l, &psi, s, 0.0).unwrap();
        let want0 = psi(0.0) * (p.alpha * s).exp() - l * psi(-1.0 - s) * (1.0 + p.a / p.b);
        let y1 = limiting_variational_solve(&p, l, &psi, s, p.q1 + 1.0).unwrap();
        let want1 = -want0 * (l - p.rho1) / (1.0 - p.rho2);
        worst_jump = worst_jump.max((y0 - want0).norm()).max((y1 - want1).norm());
    }
    outcome(
        worst_dom < 1e-12 && worst_jump < 1e-12,
        format!(
            "max |dominant - nu*| = {worst_dom:.3e}; max jump-formula deviation = {worst_jump:.3e}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let f = tanh_feedback(24.0, 1.0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (level, want_negative) in [(0.9, true), (1.1, false)] {
        let t = Instant::now();
        let out = figure_experiment(&RingExperiment::three_node(level), &f).unwrap();
        let dt = t.elapsed();
        let ok =
            (out.slope < 0.0) == want_negative && out.slope != 0.0 && dt < Duration::from_secs(120);
        pass &= ok;
        parts.push(format!(
            "level {level}: kappa {:.6}, log-g slope {:+.4e} in {dt:?}",
            out.kappa.0, out.slope
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_ring: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(3..=12);
        let (k1, k2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let mut num = eigenvalues(&ring(n, k1, k2).unwrap().matrix).unwrap();
        for z in ring_spectrum(n, k1, k2) {
            let (i, d) = num
                .iter()
                .enumerate()
                .map(|(i, v)| (i, (v - z).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            worst_ring = worst_ring.max(d);
            num.swap_remove(i);
        }
    }
    let mut worst_form: f64 = 0.0;
    for alpha in [0.0, 0.125, 0.5, 1.0, 2.0] {
        for (a, b) in [(1.0, 1.0), (2.0, 1.0), (24.0, 1.0), (1.0, 5.0)] {
            let p = make_profile(alpha, a, b).unwrap();
            for i in 0..=200 {
                let r = -3.0 + 6.0 * i as f64 / 200.0;
                worst_form =
                    worst_form.max((nu_star(&p, c(r, 0.0)).re - nu_star_real_form(&p, r)).abs());
            }
        }
    }
    let cut = ((1.0 + 2f64.sqrt()) / 2.0).ln();
    let mut all_negative = true;
    for _ in 0..1000 {
        let alpha = cut + rng.gen_range(1e-9..5.0);
        let a = 10f64.powf(rng.gen_range(-2.0..2.0));
        let b = 10f64.powf(rng.gen_range(-2.0..2.0));
        all_negative &= make_profile(alpha, a, b).unwrap().delta_disc < 0.0;
    }
    outcome(
        worst_ring < 1e-9 && worst_form < 1e-12 && all_negative,
        format!(
            "ring closed form vs eigensolve {worst_ring:.3e}; two-form identity {worst_form:.3e}; Delta < 0 on all 1000 draws: {all_negative}"
        ),
    )
}

fn criterion_9(f: &FeedbackFunction) -> Outcome {
    let mut decisive = 0;
    let mut disagreements = Vec::new();
    for alpha in [0.0, 0.125, 1.0] {
        let p = make_profile(alpha, f.a, f.b).unwrap();
        // At h = 1e-3 the periodicity residual of the alpha > 0 orbits stalls
        // just above 1e-6; halving the step clears it.
        let s = sops(alpha, 100.0, f, 5e-4);
        for i in 1..=20 {
            let kappa = i as f64 / 20.0;
            let families: [(&str, CouplingMatrix); 2] = [
                ("mean-field", mean_field(3, kappa).unwrap()),
                ("ring", ring(3, kappa, kappa).unwrap()),
            ];
            for (name, g) in families {
                let asym = classify_general(&p, &g, 0.1).unwrap();
                let emp = classify_empirical(&s, &g, 128, 0.1).unwrap();
                if asym.verdict != Verdict::Indeterminate && emp.verdict != Verdict::Indeterminate {
                    decisive += 1;
                    if asym.verdict != emp.verdict {
                        disagreements.push(format!("alpha {alpha} {name} kappa {kappa}"));
                    }
                }
            }
        }
    }
    outcome(
        disagreements.is_empty() && decisive > 0,
        format!("{decisive} of 120 cases decisive for both; disagreements: {disagreements:?}"),
    )
}

#[test]
fn acceptance() {
    let f = tanh_feedback(2.0, 1.0).unwrap();
    let ladder = ladder_sops(&f);
    let results = [
        criterion_1(),
        criterion_2(&ladder),
        criterion_3(&ladder),
        criterion_4(&f),
        criterion_5(&ladder),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(&f),
    ];
    let mut failed = Vec::new();
    for (i, r) in results.iter().enumerate() {
        println!(
            "criterion {}: {} | {}",
            i + 1,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        if !r.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
