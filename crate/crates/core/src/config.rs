//! TOML run configuration with key-path and line-numbered diagnostics.
//!
//! ```toml
//! [flow]
//! ambient = "euclidean"      # or "hyperbolic"
//! alpha = 0.0
//! beta = 1.0
//! f = "ratio(1,0)"           # ratio(l,k) | powermean(p) | product([(f,w),...])
//! mode = "normalized"        # or "unnormalized"
//! t_end = 10.0
//! safety = 0.5
//! allow_out_of_range = false
//!
//! [grid]
//! dim = 2                    # n_theta/n_phi for dim 2, n_points for dim 1
//! n_theta = 64
//! n_phi = 128
//!
//! [body]
//! preset = "bumpy(1.0,0.1,4)"
//!
//! [run]
//! out_dir = "out"
//! cadence = 10
//! snapshot_interval = 0      # 0 disables snapshots
//! seed = 0
//! max_steps = 1000000        # optional
//! stop_on_convergence = true
//!
//! [quantities]
//! iotas = [1.0]              # S(ι,k) and T(ι,k) for every ι × k
//! ks = [1]
//! extra = ["Area"]
//! inequalities = true
//! inequality_iotas = [-1.0, 0.0, 1.0, 2.0]
//! ```

use std::fmt::Write as _;
use std::ops::Range;
use std::path::PathBuf;

use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::body::BodyPreset;
use crate::error::{Error, Result};
use crate::flow::{FlowSpec, Mode};
use crate::geometry::Ambient;
use crate::manifold::GridSpec;
use crate::quantities::{QuantityKey, DEFAULT_IOTAS};
use crate::symfun::CurvatureFunctionSpec;

pub const DEFAULT_SAFETY: f64 = 0.5;
pub const DEFAULT_CADENCE: usize = 10;
pub const DEFAULT_SPHERE_GRID: (usize, usize) = (64, 128);
pub const DEFAULT_CIRCLE_POINTS: usize = 256;

/// A validated batch run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub flow: FlowSpec,
    pub out_dir: PathBuf,
    /// Steps between series rows.
    pub cadence: usize,
    /// Steps between snapshots; 0 disables them.
    pub snapshot_interval: usize,
    pub seed: u64,
    pub max_steps: Option<usize>,
    pub stop_on_convergence: bool,
    pub iotas: Vec<f64>,
    pub ks: Vec<usize>,
    pub extra_quantities: Vec<QuantityKey>,
    pub inequalities: bool,
    pub inequality_iotas: Vec<f64>,
}

impl RunConfig {
    /// Swept keys: `S(ι,k)` then `T(ι,k)` for each `(k, ι)`, then the extras.
    pub fn quantity_keys(&self) -> Vec<QuantityKey> {
        let mut keys = Vec::new();
        for &k in &self.ks {
            for &iota in &self.iotas {
                keys.push(QuantityKey::S { iota, k });
                keys.push(QuantityKey::T { iota, k });
            }
        }
        keys.extend(self.extra_quantities.iter().copied());
        keys
    }

    /// Canonical TOML text; parsing it reproduces `self` exactly.
    pub fn to_toml(&self) -> String {
        let f = &self.flow;
        let mut s = String::new();
        let q = |v: &str| toml::Value::String(v.to_owned()).to_string();
        let floats = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "[flow]");
        let _ = writeln!(s, "ambient = {}", q(&f.ambient.to_string()));
        let _ = writeln!(s, "alpha = {:?}", f.alpha);
        let _ = writeln!(s, "beta = {:?}", f.beta);
        let _ = writeln!(s, "f = {}", q(&f.f.to_string()));
        let _ = writeln!(s, "mode = {}", q(&f.mode.to_string()));
        let _ = writeln!(s, "t_end = {:?}", f.t_end);
        let _ = writeln!(s, "safety = {:?}", f.safety);
        let _ = writeln!(s, "allow_out_of_range = {}", f.allow_out_of_range);
        let _ = writeln!(s, "\n[grid]");
        match f.grid {
            GridSpec::Circle { n_points } => {
                let _ = writeln!(s, "dim = 1\nn_points = {n_points}");
            }
            GridSpec::Sphere { n_theta, n_phi } => {
                let _ = writeln!(s, "dim = 2\nn_theta = {n_theta}\nn_phi = {n_phi}");
            }
        }
        let _ = writeln!(s, "\n[body]\npreset = {}", q(&f.body.to_string()));
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "out_dir = {}", q(&self.out_dir.to_string_lossy()));
        let _ = writeln!(s, "cadence = {}", self.cadence);
        let _ = writeln!(s, "snapshot_interval = {}", self.snapshot_interval);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(m) = self.max_steps {
            let _ = writeln!(s, "max_steps = {m}");
        }
        let _ = writeln!(s, "stop_on_convergence = {}", self.stop_on_convergence);
        let _ = writeln!(s, "\n[quantities]");
        let _ = writeln!(s, "iotas = [{}]", floats(&self.iotas));
        let ks: Vec<String> = self.ks.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(s, "ks = [{}]", ks.join(", "));
        let extra: Vec<String> = self.extra_quantities.iter().map(|k| q(&k.to_string())).collect();
        let _ = writeln!(s, "extra = [{}]", extra.join(", "));
        let _ = writeln!(s, "inequalities = {}", self.inequalities);
        let _ = writeln!(s, "inequality_iotas = [{}]", floats(&self.inequality_iotas));
        s
    }
}

type Entry<'i> = (&'i Spanned<std::borrow::Cow<'i, str>>, &'i Spanned<DeValue<'i>>);

struct Ctx<'i> {
    text: &'i str,
}

impl Ctx<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err(&self, key: &str, span: Range<usize>, message: impl Into<String>) -> Error {
        Error::Parse {
            message: message.into(),
            line: Some(self.line(span)),
            key: Some(key.to_owned()),
        }
    }
}

/// One `[section]` with lookups that remember which keys were consumed.
struct Section<'i> {
    name: &'static str,
    entries: Vec<Entry<'i>>,
    used: Vec<bool>,
    span: Range<usize>,
}

impl<'i> Section<'i> {
    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn take(&mut self, key: &str) -> Option<(&'i DeValue<'i>, Range<usize>)> {
        let i = self.entries.iter().position(|(k, _)| k.get_ref().as_ref() == key)?;
        self.used[i] = true;
        let v = self.entries[i].1;
        Some((v.get_ref(), v.span()))
    }

    fn finish(&self, ctx: &Ctx<'_>) -> Result<()> {
        for (i, (k, _)) in self.entries.iter().enumerate() {
            if !self.used[i] {
                return Err(ctx.err(&self.path(k.get_ref()), k.span(), format!("unknown key `{}`", k.get_ref())));
            }
        }
        Ok(())
    }
}

fn type_error(ctx: &Ctx<'_>, path: &str, span: Range<usize>, expected: &str, got: &DeValue<'_>) -> Error {
    ctx.err(path, span, format!("expected {expected}, found {}", got.type_str()))
}

fn as_f64(ctx: &Ctx<'_>, path: &str, v: &DeValue<'_>, span: Range<usize>) -> Result<f64> {
    match v {
        DeValue::Float(x) => x
            .as_str()
            .parse::<f64>()
            .map_err(|_| ctx.err(path, span, format!("invalid float `{}`", x.as_str()))),
        DeValue::Integer(i) => i64::from_str_radix(i.as_str(), i.radix())
            .map(|x| x as f64)
            .map_err(|_| ctx.err(path, span, format!("invalid integer `{}`", i.as_str()))),
        other => Err(type_error(ctx, path, span, "a number", other)),
    }
}

fn as_u64(ctx: &Ctx<'_>, path: &str, v: &DeValue<'_>, span: Range<usize>) -> Result<u64> {
    match v {
        DeValue::Integer(i) => u64::from_str_radix(i.as_str(), i.radix())
            .map_err(|_| ctx.err(path, span, format!("expected a nonnegative integer, found `{}`", i.as_str()))),
        other => Err(type_error(ctx, path, span, "an integer", other)),
    }
}

fn as_str<'a>(ctx: &Ctx<'_>, path: &str, v: &'a DeValue<'_>, span: Range<usize>) -> Result<&'a str> {
    match v {
        DeValue::String(s) => Ok(s.as_ref()),
        other => Err(type_error(ctx, path, span, "a string", other)),
    }
}

fn as_bool(ctx: &Ctx<'_>, path: &str, v: &DeValue<'_>, span: Range<usize>) -> Result<bool> {
    match v {
        DeValue::Boolean(b) => Ok(*b),
        other => Err(type_error(ctx, path, span, "a boolean", other)),
    }
}

fn as_array<'a, 'i>(
    ctx: &Ctx<'_>,
    path: &str,
    v: &'a DeValue<'i>,
    span: Range<usize>,
) -> Result<Vec<(&'a DeValue<'i>, Range<usize>)>> {
    match v {
        DeValue::Array(a) => Ok(a.iter().map(|e| (e.get_ref(), e.span())).collect()),
        other => Err(type_error(ctx, path, span, "an array", other)),
    }
}

/// Re-labels a parse error from a value-level parser with this key's location.
fn relabel(ctx: &Ctx<'_>, path: &str, span: Range<usize>, e: Error) -> Error {
    let message = match e {
        Error::Parse { message, .. } => message,
        Error::Config(m) | Error::Domain(m) => m,
        other => other.to_string(),
    };
    ctx.err(path, span, message)
}

fn parsed<T: std::str::FromStr<Err = Error>>(ctx: &Ctx<'_>, sec: &mut Section<'_>, key: &str) -> Result<Option<(T, Range<usize>)>> {
    let path = sec.path(key);
    match sec.take(key) {
        None => Ok(None),
        Some((v, span)) => {
            let s = as_str(ctx, &path, v, span.clone())?;
            let value = s.parse::<T>().map_err(|e| relabel(ctx, &path, span.clone(), e))?;
            Ok(Some((value, span)))
        }
    }
}

fn required<T>(ctx: &Ctx<'_>, sec: &Section<'_>, key: &str, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| ctx.err(&sec.path(key), sec.span.clone(), format!("missing required key `{key}`")))
}

/// Parses and validates a run configuration. Every FlowSpec constraint is
/// checked here, before anything is computed.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, false)
}

/// As [`parse_config`], with `force_out_of_range` acting like
/// `flow.allow_out_of_range = true`.
pub fn parse_config_with(text: &str, force_out_of_range: bool) -> Result<RunConfig> {
    let ctx = Ctx { text };
    let doc = DeTable::parse(text).map_err(|e| Error::Parse {
        message: e.message().to_owned(),
        line: e.span().map(|s| ctx.line(s)),
        key: None,
    })?;
    let root = doc.get_ref();

    const SECTIONS: [&str; 5] = ["flow", "grid", "body", "run", "quantities"];
    let mut sections: Vec<Section<'_>> = Vec::new();
    for (k, v) in root.iter() {
        let name = k.get_ref().as_ref();
        let Some(&known) = SECTIONS.iter().find(|s| **s == name) else {
            return Err(ctx.err(name, k.span(), format!("unknown section `{name}`")));
        };
        let DeValue::Table(t) = v.get_ref() else {
            return Err(type_error(&ctx, name, v.span(), "a table", v.get_ref()));
        };
        let entries: Vec<Entry<'_>> = t.iter().collect();
        let used = vec![false; entries.len()];
        sections.push(Section { name: known, entries, used, span: k.span() });
    }
    let mut section = |name: &'static str| -> Section<'_> {
        match sections.iter().position(|s| s.name == name) {
            Some(i) => sections.remove(i),
            None => Section { name, entries: Vec::new(), used: Vec::new(), span: 0..0 },
        }
    };
    let mut flow = section("flow");
    let mut grid = section("grid");
    let mut body = section("body");
    let mut run = section("run");
    let mut quant = section("quantities");

    // [flow]
    let ambient: Option<(Ambient, _)> = parsed(&ctx, &mut flow, "ambient")?;
    let (ambient, _) = required(&ctx, &flow, "ambient", ambient)?;
    let alpha = take_f64(&ctx, &mut flow, "alpha")?;
    let (alpha, alpha_span) = required(&ctx, &flow, "alpha", alpha)?;
    let beta = take_f64(&ctx, &mut flow, "beta")?;
    let (beta, beta_span) = required(&ctx, &flow, "beta", beta)?;
    let f: Option<(CurvatureFunctionSpec, _)> = parsed(&ctx, &mut flow, "f")?;
    let (f, f_span) = required(&ctx, &flow, "f", f)?;
    let mode: Option<(Mode, _)> = parsed(&ctx, &mut flow, "mode")?;
    let (mode, mode_span) = match mode {
        Some(m) => m,
        None => (Mode::Normalized, flow.span.clone()),
    };
    let (t_end, t_end_span) = take_f64(&ctx, &mut flow, "t_end")?.unwrap_or((10.0, flow.span.clone()));
    let (safety, safety_span) = take_f64(&ctx, &mut flow, "safety")?.unwrap_or((DEFAULT_SAFETY, flow.span.clone()));
    let allow_out_of_range = take_bool(&ctx, &mut flow, "allow_out_of_range")?.unwrap_or(false) || force_out_of_range;
    flow.finish(&ctx)?;

    // [grid]
    let dim = take_u64(&ctx, &mut grid, "dim")?;
    let (dim, dim_span) = dim.unwrap_or((2, grid.span.clone()));
    let grid_spec = match dim {
        1 => {
            let n_points = take_u64(&ctx, &mut grid, "n_points")?.map_or(DEFAULT_CIRCLE_POINTS, |v| v.0 as usize);
            GridSpec::Circle { n_points }
        }
        2 => {
            let n_theta = take_u64(&ctx, &mut grid, "n_theta")?.map_or(DEFAULT_SPHERE_GRID.0, |v| v.0 as usize);
            let n_phi = take_u64(&ctx, &mut grid, "n_phi")?.map_or(DEFAULT_SPHERE_GRID.1, |v| v.0 as usize);
            GridSpec::Sphere { n_theta, n_phi }
        }
        other => return Err(ctx.err("grid.dim", dim_span, format!("dim must be 1 or 2, got {other}"))),
    };
    grid.finish(&ctx)?;
    grid_spec
        .validate()
        .map_err(|e| relabel(&ctx, "grid", grid.span.clone(), e))?;

    // [body]
    let preset: Option<(BodyPreset, _)> = parsed(&ctx, &mut body, "preset")?;
    let (preset, preset_span) = required(&ctx, &body, "preset", preset)?;
    body.finish(&ctx)?;
    preset
        .validate()
        .map_err(|e| relabel(&ctx, "body.preset", preset_span.clone(), e))?;

    // [run]
    let out_dir = match run.take("out_dir") {
        Some((v, span)) => PathBuf::from(as_str(&ctx, "run.out_dir", v, span)?),
        None => PathBuf::from("out"),
    };
    let cadence = take_u64(&ctx, &mut run, "cadence")?;
    let cadence = match cadence {
        Some((0, span)) => return Err(ctx.err("run.cadence", span, "cadence must be >= 1")),
        Some((c, _)) => c as usize,
        None => DEFAULT_CADENCE,
    };
    let snapshot_interval = take_u64(&ctx, &mut run, "snapshot_interval")?.map_or(0, |v| v.0 as usize);
    let seed = take_u64(&ctx, &mut run, "seed")?.map_or(0, |v| v.0);
    let max_steps = take_u64(&ctx, &mut run, "max_steps")?.map(|v| v.0 as usize);
    let stop_on_convergence = take_bool(&ctx, &mut run, "stop_on_convergence")?.unwrap_or(true);
    run.finish(&ctx)?;

    // [quantities]
    let n = grid_spec.dim();
    let iotas = take_f64_list(&ctx, &mut quant, "iotas")?.unwrap_or_else(|| vec![1.0]);
    let ks = match quant.take("ks") {
        Some((v, span)) => {
            let mut out = Vec::new();
            for (e, es) in as_array(&ctx, "quantities.ks", v, span)? {
                let k = as_u64(&ctx, "quantities.ks", e, es.clone())? as usize;
                if k > n {
                    return Err(ctx.err("quantities.ks", es, format!("k = {k} exceeds the dimension {n}")));
                }
                out.push(k);
            }
            out
        }
        None => Vec::new(),
    };
    let extra_quantities = match quant.take("extra") {
        Some((v, span)) => {
            let mut out = Vec::new();
            for (e, es) in as_array(&ctx, "quantities.extra", v, span)? {
                let s = as_str(&ctx, "quantities.extra", e, es.clone())?;
                out.push(
                    s.parse::<QuantityKey>()
                        .map_err(|err| relabel(&ctx, "quantities.extra", es.clone(), err))?,
                );
            }
            out
        }
        None => vec![QuantityKey::Area, QuantityKey::Volume],
    };
    let inequalities = take_bool(&ctx, &mut quant, "inequalities")?.unwrap_or(true);
    let inequality_iotas = take_f64_list(&ctx, &mut quant, "inequality_iotas")?.unwrap_or_else(|| DEFAULT_IOTAS.to_vec());
    quant.finish(&ctx)?;

    let spec = FlowSpec {
        ambient,
        alpha,
        beta,
        f,
        mode,
        grid: grid_spec,
        body: preset,
        t_end,
        safety,
        allow_out_of_range,
    };

    // Field-level ranges first so each error names its own key.
    if !(beta > 0.0) {
        return Err(ctx.err("flow.beta", beta_span, format!("beta = {beta} violates β > 0")));
    }
    spec.f
        .validate(n)
        .map_err(|e| relabel(&ctx, "flow.f", f_span.clone(), e))?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(ctx.err("flow.t_end", t_end_span, format!("t_end = {t_end} must be finite and >= 0")));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(ctx.err("flow.safety", safety_span, format!("safety = {safety} must lie in (0, 1]")));
    }
    if ambient == Ambient::Hyperbolic && mode == Mode::Unnormalized {
        return Err(ctx.err("flow.mode", mode_span, "unnormalized mode is Euclidean-only"));
    }
    spec.validate().map_err(|e| {
        let (key, span) = if alpha > 0.0 && !allow_out_of_range {
            ("flow.alpha", alpha_span.clone())
        } else {
            ("flow.beta", beta_span.clone())
        };
        relabel(&ctx, key, span, e)
    })?;

    Ok(RunConfig {
        flow: spec,
        out_dir,
        cadence,
        snapshot_interval,
        seed,
        max_steps,
        stop_on_convergence,
        iotas,
        ks,
        extra_quantities,
        inequalities,
        inequality_iotas,
    })
}

fn take_f64(ctx: &Ctx<'_>, sec: &mut Section<'_>, key: &str) -> Result<Option<(f64, Range<usize>)>> {
    let path = sec.path(key);
    sec.take(key)
        .map(|(v, span)| as_f64(ctx, &path, v, span.clone()).map(|x| (x, span)))
        .transpose()
}

fn take_u64(ctx: &Ctx<'_>, sec: &mut Section<'_>, key: &str) -> Result<Option<(u64, Range<usize>)>> {
    let path = sec.path(key);
    sec.take(key)
        .map(|(v, span)| as_u64(ctx, &path, v, span.clone()).map(|x| (x, span)))
        .transpose()
}

fn take_bool(ctx: &Ctx<'_>, sec: &mut Section<'_>, key: &str) -> Result<Option<bool>> {
    let path = sec.path(key);
    sec.take(key).map(|(v, span)| as_bool(ctx, &path, v, span)).transpose()
}

fn take_f64_list(ctx: &Ctx<'_>, sec: &mut Section<'_>, key: &str) -> Result<Option<Vec<f64>>> {
    let path = sec.path(key);
    match sec.take(key) {
        None => Ok(None),
        Some((v, span)) => {
            let items = as_array(ctx, &path, v, span)?;
            let mut out = Vec::with_capacity(items.len());
            for (e, es) in items {
                let x = as_f64(ctx, &path, e, es.clone())?;
                if !x.is_finite() {
                    return Err(ctx.err(&path, es, "entries must be finite"));
                }
                out.push(x);
            }
            Ok(Some(out))
        }
    }
}
