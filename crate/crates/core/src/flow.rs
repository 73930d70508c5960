//! Time integration of `∂_t ρ = (u^α f^{-β} − η u) ω` (normalized) or
//! `∂_t ρ = u^α f^{-β} ω` (unnormalized), with CFL-controlled Heun steps,
//! rescaling to the normalized picture and runtime bound monitors.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::body::BodyPreset;
use crate::error::{Error, Result};
use crate::geometry::{geometry_from_values, Ambient, GeometryFields};
use crate::manifold::{GridSpec, SphereGrid};
use crate::numeric::pow;
use crate::symfun::{cone_violation, eta_of, CurvatureFunctionSpec};

/// Threshold for treating `α + β` as exactly one.
pub const EXPONENT_SUM_TOL: f64 = 1e-12;
/// Convergence threshold on `max |Dγ|²`.
pub const CONVERGED_DGAMMA_SQ: f64 = 1e-12;
/// Convergence threshold on `ρ_max/ρ_min − 1` (normalized Euclidean runs).
pub const CONVERGED_SPREAD: f64 = 1e-10;
/// Convergence threshold on `max |∂_t ρ| / ρ`.
pub const CONVERGED_RATE: f64 = 1e-10;
/// Absolute slack (scaled by the bound's magnitude) on the envelope monitors.
pub const ENVELOPE_SLACK: f64 = 1e-8;
/// Allowed per-step increase of `max |Dγ|²`.
pub const DGAMMA_STEP_TOL: f64 = 1e-12;
/// Maximum number of step halvings when the predictor leaves the cone.
pub const MAX_HALVINGS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mode {
    Unnormalized,
    Normalized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Unnormalized => "unnormalized",
            Mode::Normalized => "normalized",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normalized" => Ok(Mode::Normalized),
            "unnormalized" => Ok(Mode::Unnormalized),
            other => Err(Error::parse(format!("unknown mode `{other}` (expected normalized or unnormalized)"))),
        }
    }
}

/// Everything needed to set up and integrate one flow.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub ambient: Ambient,
    pub alpha: f64,
    pub beta: f64,
    pub f: CurvatureFunctionSpec,
    pub mode: Mode,
    pub grid: GridSpec,
    pub body: BodyPreset,
    pub t_end: f64,
    pub safety: f64,
    pub allow_out_of_range: bool,
}

impl FlowSpec {
    pub fn n(&self) -> usize {
        self.grid.dim()
    }

    /// `η = f(1, …, 1)^{-β}`.
    pub fn eta(&self) -> f64 {
        eta_of(&self.f, self.beta, self.n())
    }

    /// `1 − α − β`.
    pub fn exponent_gap(&self) -> f64 {
        1.0 - self.alpha - self.beta
    }

    pub fn exponent_sum_is_one(&self) -> bool {
        self.exponent_gap().abs() <= EXPONENT_SUM_TOL
    }

    /// Structural checks plus the convergence-theorem parameter ranges
    /// (waived by `allow_out_of_range`).
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.f.validate(self.n())?;
        self.body.validate()?;
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta = {} violates β > 0", self.beta)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite".into()));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end = {} must be finite and >= 0", self.t_end)));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::Config(format!("safety = {} must lie in (0, 1]", self.safety)));
        }
        if self.allow_out_of_range {
            return Ok(());
        }
        if self.alpha > 0.0 {
            return Err(Error::Config(format!("alpha = {} violates α ≤ 0", self.alpha)));
        }
        match self.ambient {
            Ambient::Euclidean => {
                if self.beta > 1.0 - self.alpha + EXPONENT_SUM_TOL {
                    return Err(Error::Config(format!(
                        "beta = {} violates β ≤ 1 − α = {} in the Euclidean range",
                        self.beta,
                        1.0 - self.alpha
                    )));
                }
            }
            Ambient::Hyperbolic => {
                if self.mode != Mode::Normalized {
                    return Err(Error::Config("the hyperbolic flow is only supported in normalized mode".into()));
                }
                if self.beta >= 1.0 - self.alpha - EXPONENT_SUM_TOL {
                    return Err(Error::Config(format!(
                        "beta = {} violates β < 1 − α = {} in the hyperbolic range",
                        self.beta,
                        1.0 - self.alpha
                    )));
                }
            }
        }
        Ok(())
    }

    /// The out-of-range override never permits unnormalized hyperbolic runs.
    fn check_mode(&self) -> Result<()> {
        if self.ambient == Ambient::Hyperbolic && self.mode == Mode::Unnormalized {
            return Err(Error::Config("unnormalized mode is Euclidean-only".into()));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<SphereGrid>> {
        Ok(Arc::new(SphereGrid::new(self.grid)?))
    }
}

/// Nodewise flow speeds derived from the current geometry.
#[derive(Clone, Debug)]
pub struct SpeedFields {
    /// `f(κ)`.
    pub f: Vec<f64>,
    /// `max_i ∂f/∂κ_i`.
    pub df_max: Vec<f64>,
    /// Normal speed `𝒻` (including `−ηu` in normalized mode).
    pub speed: Vec<f64>,
    /// `∂_t ρ = 𝒻 ω`.
    pub drho: Vec<f64>,
}

/// Flow time, geometry and speeds at one instant.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub step: usize,
    pub geometry: GeometryFields,
    pub speeds: SpeedFields,
}

impl FlowState {
    /// Builds the state for nodal radii `rho`, failing if the geometry is
    /// degenerate or leaves the admissibility cone.
    pub fn new(spec: &FlowSpec, grid: &Arc<SphereGrid>, rho: &[f64], t: f64, step: usize) -> Result<Self> {
        let geometry = geometry_from_values(grid, rho, spec.ambient)?;
        let speeds = speeds(&geometry, spec, t)?;
        Ok(FlowState { t, step, geometry, speeds })
    }

    /// Initial state from the body preset of `spec`.
    pub fn initial(spec: &FlowSpec, grid: &Arc<SphereGrid>, seed: u64) -> Result<Self> {
        let rho = spec.body.with_default_seed(seed).rho_values(grid)?;
        Self::new(spec, grid, &rho, 0.0, 0)
    }

    pub fn rho(&self) -> &[f64] {
        &self.geometry.rho
    }
}

fn speeds(geom: &GeometryFields, spec: &FlowSpec, t: f64) -> Result<SpeedFields> {
    let n = geom.node_count();
    let dim = geom.n();
    let eta = spec.eta();
    let cones = spec.f.cones();
    let mut out = SpeedFields {
        f: vec![0.0; n],
        df_max: vec![0.0; n],
        speed: vec![0.0; n],
        drho: vec![0.0; n],
    };
    let mut grad = [0.0; 2];
    for k in 0..n {
        let kap = geom.kappa_at(k);
        for &cone in &cones {
            if let Some(why) = cone_violation(kap, cone) {
                return Err(Error::Monitor {
                    t,
                    reason: format!("node {k}: kappa = {kap:?} left cone {cone}: {why}"),
                });
            }
        }
        let fv = spec.f.eval_into(kap, &mut grad[..dim]);
        let u = geom.u[k];
        let mut s = pow(u, spec.alpha) * pow(fv, -spec.beta);
        if spec.mode == Mode::Normalized {
            s -= eta * u;
        }
        out.f[k] = fv;
        out.df_max[k] = grad[..dim].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.speed[k] = s;
        out.drho[k] = s * geom.omega[k];
    }
    Ok(out)
}

/// `∂_t ρ` at every node.
pub fn rhs(state: &FlowState, spec: &FlowSpec) -> Result<Vec<f64>> {
    Ok(speeds(&state.geometry, spec, state.t)?.drho)
}

/// `safety · min_node ℓ_min² / (2 · dim · D)` with `D = β u^α f^{-β-1} max_i ∂f/∂κ_i`,
/// further capped by `safety/η` in normalized mode.
pub fn dt_cfl(state: &FlowState, spec: &FlowSpec) -> Result<f64> {
    let geom = &state.geometry;
    let grid = &geom.grid;
    let dim = grid.dim();
    let mut best = f64::INFINITY;
    for k in 0..geom.node_count() {
        let g = geom.g[k];
        let row = grid.row_of(k);
        let l2 = if dim == 1 {
            g[0] * grid.dphi() * grid.dphi()
        } else {
            let lt = g[0] * grid.dtheta() * grid.dtheta();
            let dp = grid.dphi_effective(row);
            lt.min(g[2] * dp * dp)
        };
        let d = spec.beta
            * pow(geom.u[k], spec.alpha)
            * pow(state.speeds.f[k], -spec.beta - 1.0)
            * state.speeds.df_max[k];
        if d > 0.0 {
            best = best.min(l2 / (2.0 * dim as f64 * d));
        }
    }
    let mut dt = spec.safety * best;
    if spec.mode == Mode::Normalized {
        dt = dt.min(spec.safety / spec.eta());
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Monitor {
            t: state.t,
            reason: format!("time step {dt:e} is not positive and finite"),
        });
    }
    Ok(dt)
}

fn axpy_filtered(grid: &SphereGrid, base: &[f64], dt: f64, dir: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = base.iter().zip(dir).map(|(r, d)| r + dt * d).collect();
    grid.polar_filter(&mut out);
    out
}

/// Heun step of size `dt`, halving on cone exits up to [`MAX_HALVINGS`] times.
pub fn step_rk2_with_dt(state: &FlowState, spec: &FlowSpec, dt: f64) -> Result<FlowState> {
    let grid = &state.geometry.grid;
    let rho = state.rho();
    let k1 = &state.speeds.drho;
    let mut dt = dt;
    let mut last_err = None;
    for _ in 0..=MAX_HALVINGS {
        let pred = axpy_filtered(grid, rho, dt, k1);
        let attempt = FlowState::new(spec, grid, &pred, state.t + dt, state.step + 1).and_then(|p| {
            let avg: Vec<f64> = k1.iter().zip(&p.speeds.drho).map(|(a, b)| 0.5 * (a + b)).collect();
            let next = axpy_filtered(grid, rho, dt, &avg);
            FlowState::new(spec, grid, &next, state.t + dt, state.step + 1)
        });
        match attempt {
            Ok(s) => return Ok(s),
            Err(e @ (Error::Monitor { .. } | Error::Degenerate { .. } | Error::Domain(_))) => {
                last_err = Some(e);
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Monitor {
        t: state.t,
        reason: format!(
            "step failed after {MAX_HALVINGS} halvings: {}",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        ),
    })
}

/// Heun step with `Δt = dt_cfl`.
pub fn step_rk2(state: &FlowState, spec: &FlowSpec) -> Result<FlowState> {
    step_rk2_with_dt(state, spec, dt_cfl(state, spec)?)
}

/// Scale factor `φ(t)` relating the unnormalized surface to the normalized one.
pub fn rescale_factor(spec: &FlowSpec, t: f64) -> Result<f64> {
    let eta = spec.eta();
    if spec.exponent_sum_is_one() {
        return Ok((eta * t).exp());
    }
    let gap = spec.exponent_gap();
    let base = 1.0 + gap * eta * t;
    if !(base > 0.0) {
        return Err(Error::Domain(format!("(1−α−β)ηt + 1 = {base} is not positive")));
    }
    Ok(base.powf(1.0 / gap))
}

/// One Heun step of `φ' = η φ^{α+β}`, the ODE solved by [`rescale_factor`].
fn heun_scale_step(spec: &FlowSpec, phi: f64, h: f64) -> f64 {
    let eta = spec.eta();
    let s = spec.alpha + spec.beta;
    let k1 = eta * pow(phi, s);
    let k2 = eta * pow(phi + h * k1, s);
    phi + 0.5 * h * (k1 + k2)
}

/// Normalized time `τ(t)`.
pub fn normalized_time(spec: &FlowSpec, t: f64) -> Result<f64> {
    if spec.exponent_sum_is_one() {
        return Ok(t);
    }
    let eta = spec.eta();
    let gap = spec.exponent_gap();
    let base = 1.0 + gap * eta * t;
    if !(base > 0.0) {
        return Err(Error::Domain(format!("(1−α−β)ηt + 1 = {base} is not positive")));
    }
    Ok(base.ln() / (gap * eta))
}

/// Maps an unnormalized Euclidean state at time `t` to `(τ, ρ/φ(t))`.
pub fn rescale_to_normalized(t: f64, rho: &[f64], spec: &FlowSpec) -> Result<(f64, Vec<f64>)> {
    if spec.ambient != Ambient::Euclidean || spec.mode != Mode::Unnormalized {
        return Err(Error::Domain("rescaling applies to unnormalized Euclidean runs".into()));
    }
    let scale = rescale_factor(spec, t)?;
    Ok((normalized_time(spec, t)?, rho.iter().map(|r| r / scale).collect()))
}

/// Radius of the stationary sphere of the normalized flow, if any:
/// 1 in Euclidean space when `α + β < 1`, and the root of
/// `φ^{α+β−1} = φ'^β` in hyperbolic space.
pub fn stationary_radius(ambient: Ambient, alpha: f64, beta: f64) -> Option<f64> {
    match ambient {
        Ambient::Euclidean => (alpha + beta < 1.0 - EXPONENT_SUM_TOL).then_some(1.0),
        Ambient::Hyperbolic => {
            if alpha + beta >= 1.0 || alpha > 0.0 {
                return None;
            }
            let g = |r: f64| (alpha + beta - 1.0) * r.sinh().ln() - beta * r.cosh().ln();
            let (mut lo, mut hi) = (1e-8, 1.0);
            while g(hi) > 0.0 {
                hi *= 2.0;
                if hi > 700.0 {
                    return None;
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(0.5 * (lo + hi))
        }
    }
}

/// Extrema and diagnostics at one instant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorReport {
    pub step: usize,
    pub t: f64,
    /// Normalized time (NaN when undefined).
    pub tau: f64,
    pub dt: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub dgamma_sq_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub kappa_max: f64,
    pub cone_ok: bool,
    pub area: f64,
    /// `|ΔA/Δt − ½(R_prev + R_now)| / A` with `R = ∫ 𝒻 H dμ`; NaN on the first record.
    pub area_rate_residual: f64,
    /// `∫ 𝒻 H dμ`.
    pub area_rate: f64,
    /// `max |∂_t ρ| / ρ`.
    pub max_rel_rate: f64,
}

impl MonitorReport {
    /// Scaled copy of the extrema seen on the normalized surface
    /// (`ρ/φ`, `u/φ`, `f φ`, `Q φ^{1−α−β}`).
    fn rescaled(&self, spec: &FlowSpec, scale: f64) -> (f64, f64, f64, f64, f64, f64, f64, f64) {
        let qs = scale.powf(spec.exponent_gap());
        (
            self.rho_min / scale,
            self.rho_max / scale,
            self.q_min * qs,
            self.q_max * qs,
            self.u_min / scale,
            self.u_max / scale,
            self.f_min * scale,
            self.f_max * scale,
        )
    }
}

/// Builds the report for `state`; `prev` supplies the area-rate baseline.
pub fn monitors(state: &FlowState, spec: &FlowSpec, prev: Option<&MonitorReport>) -> MonitorReport {
    let g = &state.geometry;
    let sp = &state.speeds;
    let mm = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (rho_min, rho_max) = mm(&g.rho);
    let (u_min, u_max) = mm(&g.u);
    let (f_min, f_max) = mm(&sp.f);
    let q: Vec<f64> = g
        .u
        .iter()
        .zip(&sp.f)
        .map(|(&u, &f)| pow(u, spec.alpha - 1.0) * pow(f, -spec.beta))
        .collect();
    let (q_min, q_max) = mm(&q);
    let dgamma_sq_max = g.dgamma_sq.iter().copied().fold(0.0, f64::max);
    let kappa_max = (0..g.node_count())
        .flat_map(|k| g.kappa_at(k).iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let area = g.area();
    let fh: Vec<f64> = sp.speed.iter().zip(&g.mean).map(|(s, h)| s * h).collect();
    let area_rate = g.integrate(&fh);
    let area_rate_residual = match prev {
        Some(p) if state.t > p.t => {
            ((area - p.area) / (state.t - p.t) - 0.5 * (p.area_rate + area_rate)).abs() / area
        }
        _ => f64::NAN,
    };
    let max_rel_rate = sp.drho.iter().zip(&g.rho).map(|(d, r)| (d / r).abs()).fold(0.0, f64::max);
    let tau = match spec.mode {
        Mode::Normalized => state.t,
        Mode::Unnormalized if spec.ambient == Ambient::Euclidean => normalized_time(spec, state.t).unwrap_or(f64::NAN),
        Mode::Unnormalized => f64::NAN,
    };
    MonitorReport {
        step: state.step,
        t: state.t,
        tau,
        dt: prev.map_or(0.0, |p| state.t - p.t),
        rho_min,
        rho_max,
        dgamma_sq_max,
        q_min,
        q_max,
        u_min,
        u_max,
        f_min,
        f_max,
        kappa_max,
        cone_ok: true,
        area,
        area_rate_residual,
        area_rate,
        max_rel_rate,
    }
}

/// A-priori bounds implied by the initial data, checked on the normalized surface.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Envelope {
    pub rho: (f64, f64),
    pub q: (f64, f64),
    pub u: (f64, f64),
    pub f: (f64, f64),
}

impl Envelope {
    /// Envelope for a run starting from `initial` (an unscaled report at `t = 0`).
    pub fn from_initial(initial: &MonitorReport, spec: &FlowSpec) -> Envelope {
        let eta = spec.eta();
        let (mut rho_lo, mut rho_hi) = (initial.rho_min, initial.rho_max);
        if let Some(r) = stationary_radius(spec.ambient, spec.alpha, spec.beta) {
            rho_lo = rho_lo.min(r);
            rho_hi = rho_hi.max(r);
        }
        let q = (initial.q_min.min(eta), initial.q_max.max(eta));
        let amb = spec.ambient;
        let u = (amb.phi(rho_lo) / (1.0 + initial.dgamma_sq_max).sqrt(), amb.phi(rho_hi));
        let e = 1.0 - spec.alpha;
        let f = (
            (q.1 * u.1.powf(e)).powf(-1.0 / spec.beta),
            (q.0 * u.0.powf(e)).powf(-1.0 / spec.beta),
        );
        Envelope { rho: (rho_lo, rho_hi), q, u, f }
    }

    /// First violated bound of `report` (rescaled by `scale`), if any.
    pub fn violation(&self, report: &MonitorReport, spec: &FlowSpec, scale: f64) -> Option<String> {
        let (r0, r1, q0, q1, u0, u1, f0, f1) = report.rescaled(spec, scale);
        let check = |name: &str, lo: f64, hi: f64, (blo, bhi): (f64, f64)| {
            let slack = |b: f64| ENVELOPE_SLACK * b.abs().max(1.0);
            if lo < blo - slack(blo) {
                Some(format!("{name}_min = {lo:.15e} below bound {blo:.15e}"))
            } else if hi > bhi + slack(bhi) {
                Some(format!("{name}_max = {hi:.15e} above bound {bhi:.15e}"))
            } else {
                None
            }
        };
        check("rho", r0, r1, self.rho)
            .or_else(|| check("Q", q0, q1, self.q))
            .or_else(|| check("u", u0, u1, self.u))
            .or_else(|| check("f", f0, f1, self.f))
    }
}

/// Why integration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Termination {
    Converged,
    ReachedEnd,
    StepLimit,
}

/// Integration controls that are not part of the flow itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    /// Steps between emitted reports (initial and final states are always emitted).
    pub cadence: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Stop early once the convergence criterion holds (normalized runs only).
    pub stop_on_convergence: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            cadence: 10,
            max_steps: usize::MAX,
            seed: 0,
            stop_on_convergence: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub reports: Vec<MonitorReport>,
    pub final_state: FlowState,
    pub termination: Termination,
    pub envelope: Envelope,
}

/// True when the normalized flow has reached its round limit.
pub fn is_converged(report: &MonitorReport, spec: &FlowSpec) -> bool {
    if spec.mode != Mode::Normalized {
        return false;
    }
    let spread_ok = spec.ambient != Ambient::Euclidean || report.rho_max / report.rho_min - 1.0 < CONVERGED_SPREAD;
    report.dgamma_sq_max < CONVERGED_DGAMMA_SQ && spread_ok && report.max_rel_rate < CONVERGED_RATE
}

/// Integrates `spec` from its initial body, calling `observer` on every
/// emitted report. Monitor violations abort with [`Error::Monitor`] unless the
/// spec allows out-of-range parameters.
pub fn run_flow(
    spec: &FlowSpec,
    options: RunOptions,
    mut observer: impl FnMut(&FlowState, &MonitorReport) -> Result<()>,
) -> Result<RunOutcome> {
    spec.validate()?;
    spec.check_mode()?;
    let grid = spec.build_grid()?;
    let mut state = FlowState::initial(spec, &grid, options.seed)?;
    let first = monitors(&state, spec, None);
    let envelope = Envelope::from_initial(&first, spec);
    let enforce = !spec.allow_out_of_range;
    observer(&state, &first)?;
    let mut reports = vec![first.clone()];
    let mut prev = first;
    let cadence = options.cadence.max(1);
    // Unnormalized runs are monitored in the normalized frame. The scale factor is
    // advanced with the same Heun steps as ρ so that the integrator's error on the
    // self-similar part cancels instead of registering as an envelope breach.
    let mut scale = 1.0;

    let termination = loop {
        if options.stop_on_convergence && is_converged(&prev, spec) {
            break Termination::Converged;
        }
        if state.t >= spec.t_end {
            break Termination::ReachedEnd;
        }
        if state.step >= options.max_steps {
            break Termination::StepLimit;
        }
        let dt = dt_cfl(&state, spec)?.min(spec.t_end - state.t);
        let next = step_rk2_with_dt(&state, spec, dt)?;
        // Land exactly on t_end despite rounding in the accumulated time.
        let next = if (spec.t_end - next.t).abs() <= 1e-12 * spec.t_end.max(1.0) {
            FlowState { t: spec.t_end, ..next }
        } else {
            next
        };
        let report = monitors(&next, spec, Some(&prev));
        if enforce {
            if report.dgamma_sq_max > prev.dgamma_sq_max + DGAMMA_STEP_TOL {
                return Err(Error::Monitor {
                    t: report.t,
                    reason: format!(
                        "max |Dγ|² increased from {:.15e} to {:.15e}",
                        prev.dgamma_sq_max, report.dgamma_sq_max
                    ),
                });
            }
            if spec.mode == Mode::Unnormalized {
                scale = heun_scale_step(spec, scale, next.t - state.t);
            }
            if let Some(why) = envelope.violation(&report, spec, scale) {
                return Err(Error::Monitor { t: report.t, reason: why });
            }
        }
        state = next;
        let done = state.t >= spec.t_end
            || state.step >= options.max_steps
            || (options.stop_on_convergence && is_converged(&report, spec));
        if state.step % cadence == 0 || done {
            observer(&state, &report)?;
            reports.push(report.clone());
        }
        prev = report;
    };

    Ok(RunOutcome {
        reports,
        final_state: state,
        termination,
        envelope,
    })
}
