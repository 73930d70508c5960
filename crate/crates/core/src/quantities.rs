//! Weighted curvature integrals, their predicted evolution along the
//! normalized flow, monotonicity bookkeeping and the inequality suite.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{FlowSpec, FlowState, Mode};
use crate::geometry::{Ambient, GeometryFields};
use crate::numeric::{pow, rel_diff};
use crate::symfun::{binomial, cone_violation_with_margin, p_k_partials, ConeLabel, CurvatureFunctionSpec};

/// Cone-membership margin used to classify bodies.
pub const CLASSIFY_MARGIN: f64 = 1e-10;
/// Default exponent sweep for the inequality suite.
pub const DEFAULT_IOTAS: [f64; 7] = [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0];
/// Allowed violation between consecutive samples of a monotone series (relative).
pub const PER_STEP_TOL: f64 = 1e-8;
/// Allowed total violation or drift over a series (relative).
pub const CUMULATIVE_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum QuantityKey {
    /// `∫ u^ι p_k dμ`.
    S { iota: f64, k: usize },
    /// `∫ p_k^ι dμ`.
    T { iota: f64, k: usize },
    Area,
    Volume,
    /// `∫ u σ_m dμ`.
    Quermass { m: usize },
}

impl fmt::Display for QuantityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantityKey::S { iota, k } => write!(f, "S({iota},{k})"),
            QuantityKey::T { iota, k } => write!(f, "T({iota},{k})"),
            QuantityKey::Area => f.write_str("Area"),
            QuantityKey::Volume => f.write_str("Volume"),
            QuantityKey::Quermass { m } => write!(f, "Quermass({m})"),
        }
    }
}

impl FromStr for QuantityKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cur = crate::symfun::Cursor::new(s);
        let name = cur.ident()?;
        let mut args = Vec::new();
        if cur.try_eat('(') {
            args.push(cur.number()?);
            while cur.try_eat(',') {
                args.push(cur.number()?);
            }
            cur.eat(')')?;
        }
        cur.skip_ws();
        if !cur.at_end() {
            return Err(Error::parse(format!("trailing input in quantity key `{s}`")));
        }
        let index = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::parse(format!("index in `{s}` must be a nonnegative integer")))
            }
        };
        match (name, args.as_slice()) {
            ("S", [iota, k]) => Ok(QuantityKey::S { iota: *iota, k: index(*k)? }),
            ("T", [iota, k]) => Ok(QuantityKey::T { iota: *iota, k: index(*k)? }),
            ("Area", []) => Ok(QuantityKey::Area),
            ("Volume", []) => Ok(QuantityKey::Volume),
            ("Quermass", [m]) => Ok(QuantityKey::Quermass { m: index(*m)? }),
            _ => Err(Error::parse(format!(
                "unknown quantity `{s}` (expected S(iota,k), T(iota,k), Area, Volume or Quermass(m))"
            ))),
        }
    }
}

fn check_k(fields: &GeometryFields, k: usize) -> Result<()> {
    if k > fields.n() {
        Err(Error::Domain(format!("index {k} exceeds dimension {}", fields.n())))
    } else {
        Ok(())
    }
}

/// `p_k^ι` nodewise, rejecting nonpositive bases where the power is undefined.
fn p_power(p: &[f64], iota: f64, k: usize) -> Result<Vec<f64>> {
    let needs_positive = iota < 0.0 || iota.fract() != 0.0;
    p.iter()
        .enumerate()
        .map(|(node, &v)| {
            if needs_positive && !(v > 0.0) {
                Err(Error::Domain(format!("p_{k} = {v:e} at node {node} cannot be raised to {iota}")))
            } else {
                Ok(pow(v, iota))
            }
        })
        .collect()
}

/// Quadrature of the quantity's density over the current surface.
pub fn evaluate(key: QuantityKey, fields: &GeometryFields) -> Result<f64> {
    match key {
        QuantityKey::S { iota, k } => {
            check_k(fields, k)?;
            let p = fields.p_field(k)?;
            let density: Vec<f64> = fields.u.iter().zip(&p).map(|(&u, &pk)| pow(u, iota) * pk).collect();
            Ok(fields.integrate(&density))
        }
        QuantityKey::T { iota, k } => {
            check_k(fields, k)?;
            let p = fields.p_field(k)?;
            Ok(fields.integrate(&p_power(&p, iota, k)?))
        }
        QuantityKey::Area => Ok(fields.area()),
        QuantityKey::Volume => fields.volume(),
        QuantityKey::Quermass { m } => {
            check_k(fields, m)?;
            let s = fields.sigma_field(m)?;
            let density: Vec<f64> = fields.u.iter().zip(&s).map(|(u, s)| u * s).collect();
            Ok(fields.integrate(&density))
        }
    }
}

/// `∫ u p_k^ι dμ`, with `p_{-1}` never needed here.
fn u_weighted_power(fields: &GeometryFields, iota: f64, k: usize) -> Result<f64> {
    let p = fields.p_field(k)?;
    let pw = p_power(&p, iota, k)?;
    let density: Vec<f64> = fields.u.iter().zip(&pw).map(|(u, v)| u * v).collect();
    Ok(fields.integrate(&density))
}

/// `∫ p_j dμ` with the convention `p_{-1} = u`.
fn p_integral(fields: &GeometryFields, j: isize) -> Result<f64> {
    if j < 0 {
        Ok(fields.integrate(&fields.u))
    } else {
        evaluate(QuantityKey::T { iota: 1.0, k: j as usize }, fields)
    }
}

/// Area of the unit sphere on `fields`' grid.
pub fn unit_sphere_area(fields: &GeometryFields) -> f64 {
    fields.grid.integrate(&vec![1.0; fields.node_count()])
}

/// Flow speed data needed by the predicted-rate formulas.
#[derive(Clone, Debug)]
pub struct RateContext {
    /// `𝒻 = u^α f^{-β}` at each node (without the `−ηu` normalization).
    pub speed: Vec<f64>,
    pub eta: f64,
}

impl RateContext {
    /// Builds the context for a normalized flow with `α + β = 1`.
    pub fn from_state(state: &FlowState, spec: &FlowSpec) -> Result<Self> {
        if !spec.exponent_sum_is_one() || spec.mode != Mode::Normalized || spec.ambient != Ambient::Euclidean {
            return Err(Error::Domain(
                "predicted rates need a normalized Euclidean flow with α + β = 1".into(),
            ));
        }
        let speed = state
            .geometry
            .u
            .iter()
            .zip(&state.speeds.f)
            .map(|(&u, &f)| pow(u, spec.alpha) * pow(f, -spec.beta))
            .collect();
        Ok(RateContext { speed, eta: spec.eta() })
    }
}

/// `(e_i · D v)` for each principal direction at `node`.
fn frame_components(fields: &GeometryFields, node: usize, dv: [f64; 2]) -> [f64; 2] {
    let fr = fields.frames[node];
    [fr[0][0] * dv[0] + fr[0][1] * dv[1], fr[1][0] * dv[0] + fr[1][1] * dv[1]]
}

fn g_inner(fields: &GeometryFields, node: usize, a: [f64; 2], b: [f64; 2]) -> f64 {
    let gi = fields.g_inv[node];
    if fields.n() == 1 {
        gi[0] * a[0] * b[0]
    } else {
        gi[0] * a[0] * b[0] + gi[1] * (a[0] * b[1] + a[1] * b[0]) + gi[2] * a[1] * b[1]
    }
}

fn check_rate_inputs(fields: &GeometryFields, ctx: &RateContext, k: usize) -> Result<()> {
    if fields.ambient != Ambient::Euclidean {
        return Err(Error::Domain("predicted rates are Euclidean-only".into()));
    }
    if ctx.speed.len() != fields.node_count() {
        return Err(Error::Domain("speed field does not match the geometry".into()));
    }
    check_k(fields, k)
}

/// Right-hand side of the evolution of `∫ u^ι p_k dμ` along the normalized
/// flow, with `p_k^{ij}` contractions taken in the principal frame.
pub fn predicted_rate_s(fields: &GeometryFields, ctx: &RateContext, iota: f64, k: usize) -> Result<f64> {
    check_rate_inputs(fields, ctx, k)?;
    let n = fields.n();
    let nf = n as f64;
    let kf = k as f64;
    let grid = &fields.grid;
    let du = grid.grad(&fields.u);
    let p = fields.p_field(k)?;
    let p_next = if k < n { fields.p_field(k + 1)? } else { vec![0.0; fields.node_count()] };
    let mut density = vec![0.0; fields.node_count()];
    for node in 0..fields.node_count() {
        let u = fields.u[node];
        let f = ctx.speed[node] / ctx.eta;
        let mut d = iota * (nf - kf + 1.0) * pow(u, iota - 1.0) * p[node] * f
            + (1.0 - iota) * (nf - kf) * pow(u, iota) * p_next[node] * f
            - (nf - kf + iota) * pow(u, iota) * p[node];
        if iota != 0.0 && iota != 1.0 {
            let phi = fields.phi[node];
            let dg = fields.dgamma[node];
            let dphi_big = [phi * phi * dg[0], phi * phi * dg[1]];
            let cross = g_inner(fields, node, du[node], dphi_big) * p[node];
            let partials = p_k_partials(fields.kappa_at(node), k)?;
            let comps = frame_components(fields, node, du[node]);
            let quad: f64 = partials.iter().zip(comps).map(|(dp, c)| dp * c * c).sum();
            d += iota * (iota - 1.0) * pow(u, iota - 2.0) * f * (cross - quad);
        }
        density[node] = d;
    }
    Ok(ctx.eta * fields.integrate(&density))
}

/// Right-hand side of the evolution of `∫ p_k^ι dμ` along the normalized flow;
/// `∇p_k` and `∇𝒻` are differentiated directly on the grid.
pub fn predicted_rate_t(fields: &GeometryFields, ctx: &RateContext, iota: f64, k: usize) -> Result<f64> {
    check_rate_inputs(fields, ctx, k)?;
    let n = fields.n();
    let nf = n as f64;
    let kf = k as f64;
    let grid = &fields.grid;
    let p = fields.p_field(k)?;
    let p_next = if k < n { fields.p_field(k + 1)? } else { vec![0.0; fields.node_count()] };
    let pw = p_power(&p, iota, k)?;
    let scaled: Vec<f64> = ctx.speed.iter().map(|s| s / ctx.eta).collect();
    let (dp, df) = if iota != 0.0 && iota != 1.0 && k > 0 {
        (grid.grad(&p), grid.grad(&scaled))
    } else {
        (Vec::new(), Vec::new())
    };
    let mut density = vec![0.0; fields.node_count()];
    for node in 0..fields.node_count() {
        let f = scaled[node];
        let pk = p[node];
        let mut d = -(nf - kf * iota) * pw[node] + (1.0 - iota) * pw[node] * f * fields.mean[node];
        if k < n {
            d += (nf - kf) * iota * pow(pk, iota - 1.0) * p_next[node] * f;
        }
        if !dp.is_empty() {
            let partials = p_k_partials(fields.kappa_at(node), k)?;
            let a = frame_components(fields, node, dp[node]);
            let b = frame_components(fields, node, df[node]);
            let contraction: f64 = partials.iter().zip(a.iter().zip(b)).map(|(d, (x, y))| d * x * y).sum();
            d += iota * (iota - 1.0) * pow(pk, iota - 2.0) * contraction;
        }
        density[node] = d;
    }
    Ok(ctx.eta * fields.integrate(&density))
}

/// Closed-form rate of `∫ u^ι p_n dμ` along the normalized flow with speed
/// `η p_{n-m-1}/(u^m p_n)`.
pub fn predicted_rate_s_weighted_gauss(fields: &GeometryFields, eta: f64, iota: f64, m: usize) -> Result<f64> {
    let n = fields.n();
    if m + 1 > n {
        return Err(Error::Domain(format!("m = {m} needs m <= n - 1 = {}", n as isize - 1)));
    }
    let pn = fields.p_field(n)?;
    let pl = fields.p_field(n - m - 1)?;
    let density: Vec<f64> = (0..fields.node_count())
        .map(|i| {
            let u = fields.u[i];
            pow(u, iota - 1.0 - m as f64) * pl[i] - pow(u, iota) * pn[i]
        })
        .collect();
    Ok(eta * iota * fields.integrate(&density))
}

/// Relative spreads of the Minkowski-related triples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuermassRelations {
    /// `(k, S(1,k+1), S(0,k), T(1,k), max pairwise relative difference)`.
    pub rows: Vec<(usize, f64, f64, f64, f64)>,
}

impl QuermassRelations {
    pub fn max_difference(&self) -> f64 {
        self.rows.iter().map(|r| r.4).fold(0.0, f64::max)
    }
}

/// Checks `S(1,k+1) = S(0,k) = T(1,k)` for `k = 0..n-1`.
pub fn quermass_relations_check(fields: &GeometryFields) -> Result<QuermassRelations> {
    if fields.ambient != Ambient::Euclidean {
        return Err(Error::Domain("quermass relations are Euclidean-only".into()));
    }
    let mut rows = Vec::new();
    for k in 0..fields.n() {
        let a = evaluate(QuantityKey::S { iota: 1.0, k: k + 1 }, fields)?;
        let b = evaluate(QuantityKey::S { iota: 0.0, k }, fields)?;
        let c = evaluate(QuantityKey::T { iota: 1.0, k }, fields)?;
        let d = rel_diff(a, b).max(rel_diff(b, c)).max(rel_diff(a, c));
        rows.push((k, a, b, c, d));
    }
    Ok(QuermassRelations { rows })
}

/// Convexity class of a body, decided with strict cone membership.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BodyClass {
    /// Largest `k` with `κ ∈ Γ_k^+` at every node (0 if none).
    pub k_convex: usize,
    pub convex: bool,
}

pub fn classify_body(fields: &GeometryFields) -> BodyClass {
    let n = fields.n();
    let all_in = |cone| (0..fields.node_count()).all(|i| cone_violation_with_margin(fields.kappa_at(i), cone, CLASSIFY_MARGIN).is_none());
    let k_convex = (1..=n).take_while(|&k| all_in(ConeLabel::Garding(k))).last().unwrap_or(0);
    BodyClass {
        k_convex,
        convex: all_in(ConeLabel::Positive),
    }
}

/// One evaluated inequality.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub id: String,
    /// `name=value` pairs joined by `;`.
    pub params: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Nonnegative when the inequality holds, normalized by `max(|lhs|, |rhs|)`.
    pub margin: f64,
    pub applicable: bool,
}

impl InequalityReport {
    /// `id[params]` label used in series headers.
    pub fn label(&self) -> String {
        format!("{}[{}]", self.id, self.params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sense {
    /// `lhs >= rhs`.
    Ge,
    /// `lhs <= rhs`.
    Le,
}

fn fmt_params(params: &[(&str, f64)]) -> String {
    params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn report(id: &str, params: &[(&str, f64)], sense: Sense, applicable: bool, sides: Result<(f64, f64)>) -> InequalityReport {
    let (lhs, rhs) = sides.unwrap_or((f64::NAN, f64::NAN));
    let finite = lhs.is_finite() && rhs.is_finite();
    let scale = lhs.abs().max(rhs.abs());
    let diff = match sense {
        Sense::Ge => lhs - rhs,
        Sense::Le => rhs - lhs,
    };
    let margin = if !finite {
        f64::NAN
    } else if scale == 0.0 {
        0.0
    } else {
        diff / scale
    };
    InequalityReport {
        id: id.to_string(),
        params: fmt_params(params),
        lhs,
        rhs,
        margin,
        applicable: applicable && finite,
    }
}

/// Evaluates every inequality of the catalog over the exponent sweep `iotas`.
/// Reports whose hypotheses fail (or whose sides are undefined) are kept but
/// marked inapplicable.
pub fn inequality_suite(fields: &GeometryFields, iotas: &[f64]) -> Result<Vec<InequalityReport>> {
    if fields.ambient != Ambient::Euclidean {
        return Err(Error::Domain("the inequality suite is Euclidean-only".into()));
    }
    let n = fields.n();
    let nf = n as f64;
    let class = classify_body(fields);
    let omega = unit_sphere_area(fields);
    let area = fields.area();
    let volume = fields.volume()?;
    let pint = |j: isize| p_integral(fields, j);
    let s = |iota: f64, k: usize| evaluate(QuantityKey::S { iota, k }, fields);
    let t = |iota: f64, k: usize| evaluate(QuantityKey::T { iota, k }, fields);
    let mut out = Vec::new();

    for m in 0..n {
        let sides = (|| {
            let a = evaluate(QuantityKey::Quermass { m }, fields)? / (binomial(n, m) * omega);
            let b = evaluate(QuantityKey::Quermass { m: m + 1 }, fields)? / (binomial(n, m + 1) * omega);
            Ok((pow(a, 1.0 / (nf + 1.0 - m as f64)), pow(b, 1.0 / (nf - m as f64))))
        })();
        out.push(report("quermass_ratio", &[("m", m as f64)], Sense::Le, m <= class.k_convex, sides));
    }

    // At ι = 1 several entries reduce to the Minkowski identity ∫ u p_k = ∫ p_{k-1}
    // (equality for every body); those points are left to quermass_relations_check.
    for &iota in iotas {
        let p = [("iota", iota)];
        if iota > 1.0 {
            let sides = (|| Ok((pow(s(iota, n)?, 1.0 / iota), pow(omega, 1.0 / iota - 1.0) * pint(n as isize - 1)?)))();
            out.push(report("weighted_pn_vs_pn1_ge", &p, Sense::Ge, class.convex, sides));
        }
        if iota > 0.0 && iota < 1.0 {
            let sides = (|| Ok((pow(s(iota, n)?, 1.0 / iota), pow(omega, 1.0 / iota - 1.0) * pint(n as isize - 1)?)))();
            out.push(report("weighted_pn_vs_pn1_le", &p, Sense::Le, class.convex, sides));
        }
        if (0.0..1.0).contains(&iota) {
            let e = 1.0 / (nf - nf * iota);
            let sides = (|| Ok((pow(t(iota, n)?, e), pow(omega, (1.0 - nf + nf * iota) * e) * pint(n as isize - 1)?)))();
            out.push(report("power_pn_vs_pn1", &p, Sense::Le, class.convex, sides));
        }
    }

    for k in 1..n {
        for l in 1..=k {
            let (lf, kf) = (l as f64, k as f64);
            let sides = (|| Ok((pint(l as isize)?, pow(omega, (lf - kf) / (nf - kf)) * pow(pint(k as isize)?, (nf - lf) / (nf - kf)))))();
            out.push(report("pl_vs_pk_power", &[("l", lf), ("k", kf)], Sense::Le, k <= class.k_convex, sides));
        }
    }

    for k in 1..=n {
        let kf = k as f64;
        let kc = k <= class.k_convex;
        for &iota in iotas {
            let p = [("k", kf), ("iota", iota)];
            // k = n with ι = 0 (and ι = 1 below) reduces to ∫ p_n dμ = ω_n.
            let gauss_identity = k == n && (iota == 0.0 || iota == 1.0);
            if iota <= 0.0 && !gauss_identity {
                let sides = (|| {
                    let d = nf - kf + 1.0;
                    Ok((s(iota, k)?, pow(omega, (1.0 - iota) / d) * pow(pint(k as isize - 1)?, (nf + iota - kf) / d)))
                })();
                out.push(report("weighted_pk_vs_pk1_neg_iota", &p, Sense::Ge, kc, sides));
            }
            if iota >= 1.0 && !gauss_identity {
                let sides = (|| Ok((t(iota, k)?, pow(area, (nf - kf * iota) / nf) * pow(omega, kf * iota / nf))))();
                out.push(report("power_pk_vs_area", &p, Sense::Ge, kc, sides));
            }
            let holder = (|| Ok((s(iota, k)?, pow(pint(k as isize - 1)?, iota) * pow(pint(k as isize)?, 1.0 - iota))))();
            let power = (|| Ok((t(iota, k)?, pow(pint(k as isize)?, iota) * pow(area, 1.0 - iota))))();
            let upower = (|| {
                Ok((u_weighted_power(fields, iota, k)?, pow(pint(k as isize - 1)?, iota) * pow((nf + 1.0) * volume, 1.0 - iota)))
            })();
            let minkowski_identity = iota == 1.0;
            if iota >= 1.0 || iota <= 0.0 {
                if !minkowski_identity {
                    out.push(report("weighted_pk_holder_ge", &p, Sense::Ge, kc, holder.as_ref().map(|v| *v).map_err(clone_err)));
                    out.push(report("u_power_pk_holder_ge", &p, Sense::Ge, kc, upower.as_ref().map(|v| *v).map_err(clone_err)));
                }
                out.push(report("power_pk_holder_ge", &p, Sense::Ge, kc, power.as_ref().map(|v| *v).map_err(clone_err)));
            }
            if (0.0..=1.0).contains(&iota) {
                if !minkowski_identity {
                    out.push(report("weighted_pk_holder_le", &p, Sense::Le, kc, holder));
                    out.push(report("u_power_pk_holder_le", &p, Sense::Le, kc, upower));
                }
                out.push(report("power_pk_holder_le", &p, Sense::Le, kc, power));
            }
        }
    }

    for k in 0..n {
        let kf = k as f64;
        let sides = (|| Ok((pint(n as isize - 1)? / omega, pow(pint(k as isize)? / omega, 1.0 / (nf - kf)))))();
        out.push(report("pn1_vs_pk_chain", &[("k", kf)], Sense::Ge, class.convex, sides));
        for &iota in iotas.iter().filter(|&&i| i > 1.0 || (i == 1.0 && k + 1 < n)) {
            let sides = (|| {
                Ok((
                    pow(s(iota, n)?, 1.0 / iota),
                    pow(omega, 1.0 / iota - 1.0 / (nf - kf)) * pow(pint(k as isize)?, 1.0 / (nf - kf)),
                ))
            })();
            out.push(report("weighted_pn_chain_lower", &[("k", kf), ("iota", iota)], Sense::Ge, class.convex, sides));
        }
    }

    for &r in iotas.iter().filter(|&&r| r >= 1.0) {
        for &sx in iotas.iter().filter(|&&v| v > 0.0 && v <= 1.0) {
            let sides = (|| Ok((pow(s(r, n)?, 1.0 / r), pow(omega, (sx - r) / (r * sx)) * pow(s(sx, n)?, 1.0 / sx))))();
            out.push(report("weighted_pn_interpolation", &[("r", r), ("s", sx)], Sense::Ge, class.convex, sides));
        }
    }
    Ok(out)
}

fn clone_err(e: &Error) -> Error {
    Error::Domain(e.to_string())
}

/// Writes reports as `id,params,lhs,rhs,margin,applicable`.
pub fn write_inequality_csv(reports: &[InequalityReport], mut out: impl std::io::Write) -> Result<()> {
    writeln!(out, "id,params,lhs,rhs,margin,applicable")?;
    for r in reports {
        writeln!(out, "{},{},{:.17e},{:.17e},{:.17e},{}", r.id, r.params, r.lhs, r.rhs, r.margin, r.applicable)?;
    }
    Ok(())
}

/// Fixed-width summary table of the applicable reports.
pub fn inequality_summary(reports: &[InequalityReport]) -> String {
    let mut s = format!("{:<30} {:<18} {:>14} {:>14} {:>12}\n", "id", "params", "lhs", "rhs", "margin");
    for r in reports.iter().filter(|r| r.applicable) {
        s.push_str(&format!("{:<30} {:<18} {:>14.6e} {:>14.6e} {:>12.3e}\n", r.id, r.params, r.lhs, r.rhs, r.margin));
    }
    s
}

/// Expected time behaviour of one quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Trend {
    Invariant,
    NonIncreasing,
    NonDecreasing,
    /// Constant at the given value.
    Equals(f64),
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trend::Invariant => f.write_str("invariant"),
            Trend::NonIncreasing => f.write_str("non-increasing"),
            Trend::NonDecreasing => f.write_str("non-decreasing"),
            Trend::Equals(v) => write!(f, "equals {v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendVerdict {
    pub holds: bool,
    /// Worst violation between consecutive samples, relative to the first value.
    pub worst_step: f64,
    /// Summed violations (monotone trends) or largest drift (invariants).
    pub cumulative: f64,
}

/// Checks `values` against `trend` with the given per-step and cumulative tolerances.
pub fn check_trend(values: &[f64], trend: Trend, per_step: f64, cumulative: f64) -> TrendVerdict {
    let Some(&first) = values.first() else {
        return TrendVerdict { holds: true, worst_step: 0.0, cumulative: 0.0 };
    };
    let scale = first.abs().max(f64::MIN_POSITIVE);
    let sign = match trend {
        Trend::NonIncreasing => 1.0,
        Trend::NonDecreasing => -1.0,
        Trend::Invariant | Trend::Equals(_) => 0.0,
    };
    if sign == 0.0 {
        let target = match trend {
            Trend::Equals(v) => v,
            _ => first,
        };
        let tscale = target.abs().max(f64::MIN_POSITIVE);
        let drift = values.iter().map(|v| (v - target).abs() / tscale).fold(0.0, f64::max);
        let worst = values.windows(2).map(|w| (w[1] - w[0]).abs() / tscale).fold(0.0, f64::max);
        return TrendVerdict {
            holds: drift <= cumulative,
            worst_step: worst,
            cumulative: drift,
        };
    }
    let mut worst = 0.0f64;
    let mut total = 0.0;
    for w in values.windows(2) {
        let violation = (sign * (w[1] - w[0])).max(0.0) / scale;
        worst = worst.max(violation);
        total += violation;
    }
    TrendVerdict {
        holds: worst <= per_step && total <= cumulative,
        worst_step: worst,
        cumulative: total,
    }
}

/// The three special flow families with monotone quantities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SpecialFlow {
    /// Speed `p_{k-1}/p_k`.
    MonotoneS { k: usize },
    /// Speed `p_k^{-1/k}`.
    PowerT { k: usize },
    /// Speed `p_{n-m-1}/(u^m p_n)`.
    WeightedGauss { m: usize },
}

impl SpecialFlow {
    /// `(α, β, f)` realizing the family in dimension `n`.
    pub fn parameters(&self, n: usize) -> Result<(f64, f64, CurvatureFunctionSpec)> {
        match *self {
            SpecialFlow::MonotoneS { k } if (1..=n).contains(&k) => Ok((0.0, 1.0, CurvatureFunctionSpec::Ratio { l: k, k: k - 1 })),
            SpecialFlow::PowerT { k } if (1..=n).contains(&k) => Ok((0.0, 1.0, CurvatureFunctionSpec::Ratio { l: k, k: 0 })),
            SpecialFlow::WeightedGauss { m } if m < n => {
                Ok((-(m as f64), m as f64 + 1.0, CurvatureFunctionSpec::Ratio { l: n, k: n - m - 1 }))
            }
            other => Err(Error::Config(format!("{other:?} is not defined in dimension {n}"))),
        }
    }

    /// Body class the monotonicity statements assume.
    pub fn required_class(&self, n: usize) -> BodyClass {
        match *self {
            SpecialFlow::MonotoneS { k } | SpecialFlow::PowerT { k } => BodyClass { k_convex: k, convex: false },
            SpecialFlow::WeightedGauss { .. } => BodyClass { k_convex: n, convex: true },
        }
    }

    /// Tabulated trends for the normalized flow in dimension `n`, with
    /// exponents drawn from `iotas`. `omega` is the unit-sphere area.
    pub fn claims(&self, n: usize, iotas: &[f64], omega: f64) -> Vec<(QuantityKey, Trend)> {
        use QuantityKey::{Area, S, T};
        let mut c = Vec::new();
        match *self {
            SpecialFlow::MonotoneS { k } => {
                c.push((S { iota: 1.0, k }, Trend::Invariant));
                if k < n {
                    c.push((S { iota: 1.0, k: k + 1 }, Trend::NonIncreasing));
                    c.push((S { iota: 0.0, k }, Trend::NonIncreasing));
                }
                for l in 0..k {
                    c.push((S { iota: 1.0, k: l }, Trend::NonDecreasing));
                }
                c.push((S { iota: 0.0, k: k - 1 }, Trend::Invariant));
                c.push((S { iota: 0.0, k: n }, Trend::Equals(omega)));
                for &iota in iotas.iter().filter(|&&i| i < 0.0) {
                    c.push((S { iota, k }, Trend::NonIncreasing));
                }
                if k == n {
                    for &iota in iotas {
                        if iota > 1.0 {
                            c.push((S { iota, k: n }, Trend::NonIncreasing));
                        } else if iota > 0.0 && iota < 1.0 {
                            c.push((S { iota, k: n }, Trend::NonDecreasing));
                        }
                    }
                }
            }
            SpecialFlow::PowerT { k } => {
                for &iota in iotas.iter().filter(|&&i| i >= 1.0) {
                    c.push((T { iota, k }, Trend::NonIncreasing));
                }
                if k > 1 {
                    c.push((T { iota: 1.0, k: k - 1 }, Trend::NonIncreasing));
                    c.push((Area, Trend::NonDecreasing));
                } else {
                    c.push((Area, Trend::Invariant));
                }
                if k == n {
                    for &iota in iotas.iter().filter(|&&i| i > 0.0 && i < 1.0) {
                        c.push((T { iota, k: n }, Trend::NonDecreasing));
                    }
                }
            }
            SpecialFlow::WeightedGauss { m } => {
                for k in m..n {
                    c.push((T { iota: 1.0, k }, Trend::NonDecreasing));
                }
                for &iota in iotas {
                    if iota >= m as f64 + 1.0 || iota < 0.0 {
                        c.push((S { iota, k: n }, Trend::NonIncreasing));
                    } else if iota > 0.0 && iota <= 1.0 {
                        c.push((S { iota, k: n }, Trend::NonDecreasing));
                    }
                }
                c.push((S { iota: 0.0, k: n }, Trend::Equals(omega)));
            }
        }
        c
    }
}
