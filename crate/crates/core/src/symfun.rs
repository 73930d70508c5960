//! Elementary symmetric functions, Gårding cones and the admissible curvature
//! functions `f(κ)` driving the flow.
//!
//! All routines work on plain `&[f64]` slices so that the per-node hot loops of
//! the flow never allocate; [`KappaVector`] is the validated owned form used at
//! API boundaries.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::pow;

/// Principal curvatures at a point, in no particular order.
#[derive(Clone, Debug, PartialEq)]
pub struct KappaVector(Vec<f64>);

impl KappaVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("curvature vector must have n >= 1 entries".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("kappa[{i}] = {} is not finite", values[i])));
        }
        Ok(KappaVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for KappaVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Binomial coefficient `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

/// Writes `σ_0..=σ_m` of `kappa` into `out[..=m]` using the recurrence
/// `e_k(κ_1..κ_j) = e_k(κ_1..κ_{j-1}) + κ_j e_{k-1}(κ_1..κ_{j-1})`.
fn sigma_upto(kappa: &[f64], skip: Option<usize>, out: &mut [f64]) {
    let m = out.len() - 1;
    out.fill(0.0);
    out[0] = 1.0;
    let mut count = 0usize;
    for (j, &x) in kappa.iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        count += 1;
        let top = count.min(m);
        for k in (1..=top).rev() {
            out[k] += x * out[k - 1];
        }
    }
}

fn check_order(n: usize, k: usize) -> Result<()> {
    if k > n {
        Err(Error::Domain(format!("symmetric function order k = {k} outside 0..={n}")))
    } else {
        Ok(())
    }
}

/// `σ_k(κ)`; `σ_0 = 1`.
pub fn sigma_k(kappa: &[f64], k: usize) -> Result<f64> {
    check_order(kappa.len(), k)?;
    Ok(sigma_unchecked(kappa, None, k))
}

fn sigma_unchecked(kappa: &[f64], skip: Option<usize>, k: usize) -> f64 {
    with_buf(k + 1, |buf| {
        sigma_upto(kappa, skip, buf);
        buf[k]
    })
}

/// Runs `f` on a zeroed scratch slice of length `len`, on the stack when small.
fn with_buf<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    if len <= 17 {
        let mut stack = [0.0; 17];
        f(&mut stack[..len])
    } else {
        let mut heap = vec![0.0; len];
        f(&mut heap)
    }
}

/// Normalized symmetric function `p_k = σ_k / C(n, k)`.
pub fn p_k(kappa: &[f64], k: usize) -> Result<f64> {
    Ok(sigma_k(kappa, k)? / binomial(kappa.len(), k))
}

/// `∂σ_k/∂κ_i = σ_{k-1}(κ | i)`, the (k-1)-th symmetric function with entry `i` removed.
pub fn sigma_k_partials(kappa: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = kappa.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("partials need 1 <= k <= {n}, got {k}")));
    }
    Ok((0..n).map(|i| sigma_unchecked(kappa, Some(i), k - 1)).collect())
}

/// `∂p_k/∂κ_i` for all `i`; zero vector for `k = 0`.
pub fn p_k_partials(kappa: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = kappa.len();
    check_order(n, k)?;
    if k == 0 {
        return Ok(vec![0.0; n]);
    }
    let c = binomial(n, k);
    Ok(sigma_k_partials(kappa, k)?.into_iter().map(|s| s / c).collect())
}

/// Convex cones of curvature vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeLabel {
    /// `Γ_k^+ = {p_1 > 0, ..., p_k > 0}`.
    Garding(usize),
    /// All `κ_i > 0`.
    Positive,
}

impl fmt::Display for ConeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConeLabel::Garding(k) => write!(f, "Garding({k})"),
            ConeLabel::Positive => write!(f, "Positive"),
        }
    }
}

/// Describes the first defining inequality of `cone` that `kappa` violates.
pub fn cone_violation(kappa: &[f64], cone: ConeLabel) -> Option<String> {
    cone_violation_with_margin(kappa, cone, 0.0)
}

/// Like [`cone_violation`] but requires each defining quantity to exceed `margin`
/// (scaled by the matching power of `max |κ_i|`).
pub fn cone_violation_with_margin(kappa: &[f64], cone: ConeLabel, margin: f64) -> Option<String> {
    let n = kappa.len();
    let scale = if margin == 0.0 {
        1.0
    } else {
        kappa.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE)
    };
    match cone {
        ConeLabel::Positive => kappa.iter().enumerate().find_map(|(i, &v)| {
            (v <= margin * scale).then(|| format!("kappa_{} = {v:e} is not > 0", i + 1))
        }),
        ConeLabel::Garding(m) => {
            if m > n {
                return Some(format!("Garding({m}) undefined for n = {n}"));
            }
            with_buf(m + 1, |sig| {
                sigma_upto(kappa, None, sig);
                (1..=m).find_map(|i| {
                    let threshold = if margin == 0.0 { 0.0 } else { margin * scale.powi(i as i32) };
                    let p = sig[i] / binomial(n, i);
                    (p <= threshold).then(|| format!("p_{i} = {p:e} is not > 0"))
                })
            })
        }
    }
}

pub fn cone_contains(kappa: &[f64], cone: ConeLabel) -> bool {
    cone_violation(kappa, cone).is_none()
}

/// Admissible curvature functions: positive, symmetric, homogeneous of degree one.
#[derive(Clone, Debug, PartialEq)]
pub enum CurvatureFunctionSpec {
    /// `(σ_l/σ_k)^{1/(l-k)}` with `0 <= k < l <= n`.
    Ratio { l: usize, k: usize },
    /// `(Σ κ_i^p)^{1/p}`, `p != 0`.
    PowerMean(f64),
    /// `Π f_j^{w_j}` with `w_j >= 0`, `Σ w_j = 1`.
    Product(Vec<(CurvatureFunctionSpec, f64)>),
}

/// Value and gradient of a curvature function.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureEval {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl CurvatureFunctionSpec {
    /// Checks the structural constraints for dimension `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            CurvatureFunctionSpec::Ratio { l, k } => {
                if !(k < l && *l <= n) {
                    return Err(Error::Config(format!(
                        "ratio({l},{k}) needs 0 <= k < l <= n = {n}"
                    )));
                }
            }
            CurvatureFunctionSpec::PowerMean(p) => {
                if *p == 0.0 || !p.is_finite() {
                    return Err(Error::Config(format!("powermean exponent must be finite and nonzero, got {p}")));
                }
            }
            CurvatureFunctionSpec::Product(factors) => {
                if factors.is_empty() {
                    return Err(Error::Config("product needs at least one factor".into()));
                }
                let mut total = 0.0;
                for (f, w) in factors {
                    if !(*w >= 0.0) || !w.is_finite() {
                        return Err(Error::Config(format!("product weight {w} must be >= 0")));
                    }
                    total += w;
                    f.validate(n)?;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!("product weights sum to {total}, expected 1")));
                }
            }
        }
        Ok(())
    }

    /// Cones whose intersection is the admissibility domain.
    pub fn cones(&self) -> Vec<ConeLabel> {
        let mut out = Vec::new();
        self.collect_cones(&mut out);
        out
    }

    fn collect_cones(&self, out: &mut Vec<ConeLabel>) {
        let c = match self {
            CurvatureFunctionSpec::Ratio { l, .. } => ConeLabel::Garding(*l),
            CurvatureFunctionSpec::PowerMean(p) if *p == 1.0 => ConeLabel::Garding(1),
            CurvatureFunctionSpec::PowerMean(_) => ConeLabel::Positive,
            CurvatureFunctionSpec::Product(factors) => {
                for (f, _) in factors {
                    f.collect_cones(out);
                }
                return;
            }
        };
        if !out.contains(&c) {
            out.push(c);
        }
    }

    /// `Ok(())` if `kappa` lies in the admissibility cone, otherwise an error
    /// naming the violated inequality.
    pub fn check_admissible(&self, kappa: &[f64]) -> Result<()> {
        for cone in self.cones() {
            if let Some(why) = cone_violation(kappa, cone) {
                return Err(Error::Admissibility(format!("{why} (cone {cone} of {self})")));
            }
        }
        Ok(())
    }

    /// Evaluates `f` and writes `∂f/∂κ_i` into `grad`. Does not check the cone.
    pub fn eval_into(&self, kappa: &[f64], grad: &mut [f64]) -> f64 {
        let n = kappa.len();
        match self {
            CurvatureFunctionSpec::Ratio { l, k } => {
                let (l, k) = (*l, *k);
                let (sl, sk) = with_buf(l + 1, |sig| {
                    sigma_upto(kappa, None, sig);
                    (sig[l], sig[k])
                });
                let inv = 1.0 / (l - k) as f64;
                let value = pow(sl / sk, inv);
                if n <= 2 {
                    // σ_j(κ | i) for two curvatures is just the other curvature.
                    for (i, g) in grad.iter_mut().enumerate().take(n) {
                        let other = if n == 2 { kappa[1 - i] } else { 0.0 };
                        let dsig = |j: usize| match j {
                            0 => 1.0,
                            1 => other,
                            _ => 0.0,
                        };
                        let dk = if k == 0 { 0.0 } else { dsig(k - 1) };
                        *g = value * inv * (dsig(l - 1) / sl - dk / sk);
                    }
                    return value;
                }
                for (i, g) in grad.iter_mut().enumerate().take(n) {
                    let (dl, dk) = with_buf(l, |sig| {
                        sigma_upto(kappa, Some(i), sig);
                        (sig[l - 1], if k == 0 { 0.0 } else { sig[k - 1] })
                    });
                    *g = value * inv * (dl / sl - dk / sk);
                }
                value
            }
            CurvatureFunctionSpec::PowerMean(p) => {
                let p = *p;
                let s: f64 = kappa.iter().map(|x| pow(*x, p)).sum();
                let value = pow(s, 1.0 / p);
                for (g, x) in grad.iter_mut().zip(kappa) {
                    *g = pow(x / value, p - 1.0);
                }
                value
            }
            CurvatureFunctionSpec::Product(factors) => {
                grad[..n].fill(0.0);
                let mut log_value = 0.0;
                with_buf(n, |fg| {
                    for (f, w) in factors {
                        let v = f.eval_into(kappa, fg);
                        log_value += w * v.ln();
                        for (g, d) in grad.iter_mut().zip(fg.iter()) {
                            *g += w * d / v;
                        }
                    }
                });
                let value = log_value.exp();
                for g in grad[..n].iter_mut() {
                    *g *= value;
                }
                value
            }
        }
    }

    /// Value only.
    pub fn value(&self, kappa: &[f64]) -> f64 {
        with_buf(kappa.len(), |g| self.eval_into(kappa, g))
    }
}

/// Evaluates `f(κ)` and its analytic gradient after checking admissibility.
pub fn eval_curvature_function(spec: &CurvatureFunctionSpec, kappa: &[f64]) -> Result<CurvatureEval> {
    spec.check_admissible(kappa)?;
    let mut gradient = vec![0.0; kappa.len()];
    let value = spec.eval_into(kappa, &mut gradient);
    Ok(CurvatureEval { value, gradient })
}

/// `η = f(1, ..., 1)^{-β}`, the speed scale making the unit sphere stationary.
pub fn eta_of(spec: &CurvatureFunctionSpec, beta: f64, n: usize) -> f64 {
    spec.value(&vec![1.0; n]).powf(-beta)
}

/// Margins of the Newton–MacLaurin inequalities at one curvature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonMaclaurinReport {
    /// Largest `m` with `κ ∈ Γ_m^+` (0 if not even in `Γ_1^+`).
    pub level: usize,
    /// `(k, m, p_k p_m - p_{m+1} p_{k-1})` for `1 <= k <= m <= min(level, n - 1)`.
    pub product_margins: Vec<(usize, usize, f64)>,
    /// `p_i^{1/i} - p_{i+1}^{1/(i+1)}` for `1 <= i < level`.
    pub chain_margins: Vec<f64>,
    /// All curvatures equal within relative spread `1e-9`.
    pub equality_case: bool,
}

impl NewtonMaclaurinReport {
    /// True when every margin is `>= -tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.product_margins.iter().all(|&(_, _, m)| m >= -tol) && self.chain_margins.iter().all(|&m| m >= -tol)
    }
}

pub fn newton_maclaurin_check(kappa: &[f64]) -> NewtonMaclaurinReport {
    let n = kappa.len();
    let mut sig = vec![0.0; n + 1];
    sigma_upto(kappa, None, &mut sig);
    let p: Vec<f64> = (0..=n).map(|i| sig[i] / binomial(n, i)).chain(std::iter::once(0.0)).collect();
    let level = (1..=n).take_while(|&i| p[i] > 0.0).count();

    let mut product_margins = Vec::new();
    // p_{n+1} = 0, so the product inequality is only sharp for m < n.
    for m in 1..=level.min(n - 1) {
        for k in 1..=m {
            product_margins.push((k, m, p[k] * p[m] - p[m + 1] * p[k - 1]));
        }
    }
    let chain_margins = (1..level)
        .map(|i| p[i].powf(1.0 / i as f64) - p[i + 1].powf(1.0 / (i + 1) as f64))
        .collect();

    let (lo, hi) = kappa.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let scale = lo.abs().max(hi.abs());
    let equality_case = hi - lo <= 1e-9 * scale;

    NewtonMaclaurinReport {
        level,
        product_margins,
        chain_margins,
        equality_case,
    }
}

impl fmt::Display for CurvatureFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurvatureFunctionSpec::Ratio { l, k } => write!(f, "ratio({l},{k})"),
            CurvatureFunctionSpec::PowerMean(p) => write!(f, "powermean({p:?})"),
            CurvatureFunctionSpec::Product(factors) => {
                write!(f, "product([")?;
                for (i, (spec, w)) in factors.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "({spec},{w:?})")?;
                }
                write!(f, "])")
            }
        }
    }
}

impl FromStr for CurvatureFunctionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cur = Cursor::new(s);
        let spec = parse_spec(&mut cur)?;
        cur.skip_ws();
        if !cur.at_end() {
            return Err(Error::parse(format!("trailing input in curvature spec `{s}` at offset {}", cur.pos)));
        }
        Ok(spec)
    }
}

/// Minimal cursor for the small call-syntax grammars (`name(args)`).
pub(crate) struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    pub(crate) fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    pub(crate) fn eat(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(Error::parse(format!(
                "expected `{c}` at offset {} in `{}`",
                self.pos, self.src
            )))
        }
    }

    pub(crate) fn try_eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    pub(crate) fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(Error::parse(format!("expected a name at offset {} in `{}`", self.pos, self.src)));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    pub(crate) fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(rest.len());
        let tok = &rest[..len];
        let v = tok
            .parse::<f64>()
            .map_err(|_| Error::parse(format!("expected a number at offset {} in `{}`", self.pos, self.src)))?;
        self.pos += len;
        Ok(v)
    }

    pub(crate) fn integer(&mut self) -> Result<usize> {
        let start = self.pos;
        let v = self.number()?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::parse(format!(
                "expected a nonnegative integer at offset {start} in `{}`",
                self.src
            )));
        }
        Ok(v as usize)
    }
}

fn parse_spec(cur: &mut Cursor<'_>) -> Result<CurvatureFunctionSpec> {
    let name = cur.ident()?;
    cur.eat('(')?;
    let spec = match name.to_ascii_lowercase().as_str() {
        "ratio" => {
            let l = cur.integer()?;
            cur.eat(',')?;
            let k = cur.integer()?;
            if k >= l {
                return Err(Error::parse(format!("ratio({l},{k}) needs k < l")));
            }
            CurvatureFunctionSpec::Ratio { l, k }
        }
        "powermean" => {
            let p = cur.number()?;
            if p == 0.0 {
                return Err(Error::parse("powermean exponent must be nonzero"));
            }
            CurvatureFunctionSpec::PowerMean(p)
        }
        "product" => {
            cur.eat('[')?;
            let mut factors = Vec::new();
            loop {
                cur.eat('(')?;
                let f = parse_spec(cur)?;
                cur.eat(',')?;
                let w = cur.number()?;
                cur.eat(')')?;
                factors.push((f, w));
                if !cur.try_eat(',') {
                    break;
                }
            }
            cur.eat(']')?;
            CurvatureFunctionSpec::Product(factors)
        }
        other => return Err(Error::parse(format!("unknown curvature function `{other}`"))),
    };
    cur.eat(')')?;
    Ok(spec)
}
