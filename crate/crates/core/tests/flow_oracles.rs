mod common;

use starflow_core::body::BodyPreset;
use starflow_core::flow::{
    normalized_time, rescale_to_normalized, run_flow, FlowSpec, Mode, RunOptions, Termination,
};
use starflow_core::geometry::Ambient;
use starflow_core::manifold::GridSpec;
use starflow_core::numeric::linear_fit;
use starflow_core::symfun::CurvatureFunctionSpec;

fn spec(ambient: Ambient, alpha: f64, beta: f64, mode: Mode, body: BodyPreset, nt: usize, t_end: f64) -> FlowSpec {
    FlowSpec {
        ambient,
        alpha,
        beta,
        f: CurvatureFunctionSpec::Ratio { l: 1, k: 0 },
        mode,
        grid: GridSpec::Sphere { n_theta: nt, n_phi: 2 * nt },
        body,
        t_end,
        safety: 0.5,
        allow_out_of_range: false,
    }
}

/// Radius samples `(t, mean ρ)` at every step.
fn sphere_trajectory(s: &FlowSpec) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let options = RunOptions { cadence: 1, stop_on_convergence: false, ..Default::default() };
    run_flow(s, options, |st, r| {
        assert_eq!(r.rho_min, r.rho_max, "sphere lost its symmetry at t = {}", st.t);
        out.push((st.t, r.rho_min));
        Ok(())
    })
    .unwrap();
    out
}

fn check_against_ode(s: &FlowSpec, r0: f64, rhs: impl Fn(f64) -> f64 + Copy) {
    let traj = sphere_trajectory(s);
    assert_eq!(traj.last().unwrap().0, s.t_end);
    let stride = (traj.len() / 20).max(1);
    let mut worst = 0.0f64;
    for &(t, r) in traj.iter().step_by(stride).chain(traj.last()) {
        let exact = common::rk4(|_, y| rhs(y), r0, t, 4000);
        worst = worst.max((r / exact - 1.0).abs());
    }
    assert!(worst <= 1e-6, "{:?} {} alpha={} beta={}: {worst:e}", s.ambient, s.mode, s.alpha, s.beta);
}

#[test]
fn sphere_flows_follow_their_radial_odes() {
    let eta = 0.5f64;
    for (alpha, beta) in [(0.0, 1.0), (-1.0, 1.0), (0.0, 0.5), (-0.5, 1.0)] {
        let e = eta.powf(beta);
        let r0 = 0.8;
        let s = spec(Ambient::Euclidean, alpha, beta, Mode::Unnormalized, BodyPreset::Sphere { r: r0 }, 32, 2.0);
        check_against_ode(&s, r0, move |r| e * r.powf(alpha + beta));
        let r0 = 1.3;
        let s = spec(Ambient::Euclidean, alpha, beta, Mode::Normalized, BodyPreset::Sphere { r: r0 }, 32, 2.0);
        check_against_ode(&s, r0, move |r| e * (r.powf(alpha + beta) - r));
    }
    for (alpha, beta, r0) in [(0.0, 0.5, 1.0), (-0.5, 0.5, 0.4), (-1.0, 1.5, 1.2)] {
        let e = eta.powf(beta);
        let s = spec(Ambient::Hyperbolic, alpha, beta, Mode::Normalized, BodyPreset::Sphere { r: r0 }, 32, 2.0);
        check_against_ode(&s, r0, move |r: f64| {
            e * r.sinh() * (r.sinh().powf(alpha + beta - 1.0) * r.cosh().powf(-beta) - 1.0)
        });
    }
}

#[test]
fn gradient_decays_exponentially() {
    let mut s = spec(
        Ambient::Euclidean,
        0.0,
        1.0,
        Mode::Normalized,
        BodyPreset::Bumpy { r0: 1.0, eps: 0.1, modes: 4, seed: Some(5) },
        20,
        3.0,
    );
    s.f = CurvatureFunctionSpec::Ratio { l: 2, k: 1 };
    let out = run_flow(&s, RunOptions { cadence: 5, ..Default::default() }, |_, _| Ok(())).unwrap();
    let half = out.reports.len() / 2;
    let (t, y): (Vec<f64>, Vec<f64>) = out.reports[half..].iter().map(|r| (r.t, r.dgamma_sq_max.ln())).unzip();
    let fit = linear_fit(&t, &y).unwrap();
    assert!(fit.slope < 0.0, "{fit:?}");
    let range = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - y.iter().copied().fold(f64::INFINITY, f64::min);
    let worst = t.iter().zip(&y).map(|(t, y)| (y - fit.intercept - fit.slope * t).abs()).fold(0.0, f64::max);
    assert!(worst <= 0.05 * range, "residual {worst} over range {range}");
}

#[test]
fn rescaled_unnormalized_matches_normalized() {
    let body = BodyPreset::Bumpy { r0: 1.0, eps: 0.1, modes: 4, seed: Some(2) };
    let (alpha, beta) = (-0.5, 1.0);
    let tau_end = 0.3;
    let mut un = spec(Ambient::Euclidean, alpha, beta, Mode::Unnormalized, body.clone(), 64, 1.0);
    // Solve τ(t) = τ_end for the unnormalized horizon: t = (e^{(1−α−β)ητ} − 1)/((1−α−β)η).
    let gap = 1.0 - alpha - beta;
    let eta = un.eta();
    un.t_end = ((gap * eta * tau_end).exp() - 1.0) / (gap * eta);
    assert!((normalized_time(&un, un.t_end).unwrap() - tau_end).abs() < 1e-14);
    let nm = spec(Ambient::Euclidean, alpha, beta, Mode::Normalized, body, 64, tau_end);
    let a = run_flow(&un, RunOptions::default(), |_, _| Ok(())).unwrap();
    let b = run_flow(&nm, RunOptions { stop_on_convergence: false, ..Default::default() }, |_, _| Ok(())).unwrap();
    let (tau, rescaled) = rescale_to_normalized(a.final_state.t, a.final_state.rho(), &un).unwrap();
    assert!((tau - b.final_state.t).abs() < 1e-12);
    let diff = rescaled.iter().zip(b.final_state.rho()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-4, "{diff:e}");
}

#[test]
fn runs_are_bitwise_deterministic() {
    let s = spec(
        Ambient::Euclidean,
        -0.5,
        1.0,
        Mode::Normalized,
        BodyPreset::Bumpy { r0: 1.0, eps: 0.15, modes: 5, seed: None },
        16,
        0.5,
    );
    let run = || {
        let options = RunOptions { cadence: 3, seed: 42, ..Default::default() };
        let out = run_flow(&s, options, |_, _| Ok(())).unwrap();
        let rho: Vec<u64> = out.final_state.rho().iter().map(|v| v.to_bits()).collect();
        (format!("{:?}", out.reports), rho)
    };
    assert_eq!(run(), run());
}

#[test]
fn stationary_sphere_terminates_as_converged() {
    let s = spec(Ambient::Euclidean, 0.0, 0.5, Mode::Normalized, BodyPreset::Sphere { r: 1.0 }, 16, 10.0);
    let out = run_flow(&s, RunOptions::default(), |_, _| Ok(())).unwrap();
    assert_eq!(out.termination, Termination::Converged);
    assert_eq!(out.final_state.step, 0);
}
