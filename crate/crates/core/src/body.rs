//! Initial-body presets given as radial functions over the parameter sphere.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::SphereGrid;
use crate::symfun::Cursor;

/// Largest admissible bump amplitude.
pub const MAX_BUMP_EPS: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub enum BodyPreset {
    /// `ρ ≡ r`.
    Sphere { r: f64 },
    /// `ρ = r0 (1 + ε Σ_j a_j (w_j·z)^{d_j})` with random unit `w_j`, degrees
    /// `d_j ∈ {1, 2, 3}` and `Σ |a_j| = 1`. `seed = None` defers to the run seed.
    Bumpy { r0: f64, eps: f64, modes: usize, seed: Option<u64> },
    /// `ρ(z) = (Σ z_i² / a_i²)^{-1/2}`; `c` is ignored on the circle.
    Ellipsoid { a: f64, b: f64, c: f64 },
}

impl BodyPreset {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("body parameter {name} = {v} must be positive")))
            }
        };
        match *self {
            BodyPreset::Sphere { r } => positive("r", r),
            BodyPreset::Bumpy { r0, eps, modes, .. } => {
                positive("r0", r0)?;
                if !(0.0..=MAX_BUMP_EPS).contains(&eps) {
                    return Err(Error::Config(format!("bumpy eps = {eps} must lie in [0, {MAX_BUMP_EPS}]")));
                }
                if modes == 0 {
                    return Err(Error::Config("bumpy needs at least one mode".into()));
                }
                Ok(())
            }
            BodyPreset::Ellipsoid { a, b, c } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("c", c)
            }
        }
    }

    /// Fills in the run seed if the preset does not carry its own.
    pub fn with_default_seed(&self, seed: u64) -> BodyPreset {
        match self {
            BodyPreset::Bumpy { r0, eps, modes, seed: None } => BodyPreset::Bumpy {
                r0: *r0,
                eps: *eps,
                modes: *modes,
                seed: Some(seed),
            },
            other => other.clone(),
        }
    }

    /// Nodal radial values on `grid`.
    pub fn rho_values(&self, grid: &SphereGrid) -> Result<Vec<f64>> {
        self.validate()?;
        let dirs = (0..grid.node_count()).map(|k| grid.direction(k));
        let values: Vec<f64> = match *self {
            BodyPreset::Sphere { r } => vec![r; grid.node_count()],
            BodyPreset::Ellipsoid { a, b, c } => dirs
                .map(|z| (z[0] * z[0] / (a * a) + z[1] * z[1] / (b * b) + z[2] * z[2] / (c * c)).powf(-0.5))
                .collect(),
            BodyPreset::Bumpy { r0, eps, modes, seed } => {
                let bumps = bump_modes(grid.dim(), modes, seed.unwrap_or(0));
                dirs.map(|z| {
                    let s: f64 = bumps
                        .iter()
                        .map(|(a, w, d)| a * (w[0] * z[0] + w[1] * z[1] + w[2] * z[2]).powi(*d))
                        .sum();
                    r0 * (1.0 + eps * s)
                })
                .collect()
            }
        };
        if let Some(i) = values.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Domain(format!("preset {self} gives rho = {} at node {i}", values[i])));
        }
        Ok(values)
    }
}

fn bump_modes(dim: usize, modes: usize, seed: u64) -> Vec<(f64, [f64; 3], i32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(f64, [f64; 3], i32)> = (0..modes)
        .map(|_| {
            let w = if dim == 1 {
                let t = rng.random::<f64>() * std::f64::consts::TAU;
                [t.cos(), t.sin(), 0.0]
            } else {
                let z = 2.0 * rng.random::<f64>() - 1.0;
                let t = rng.random::<f64>() * std::f64::consts::TAU;
                let s = (1.0 - z * z).sqrt();
                [s * t.cos(), s * t.sin(), z]
            };
            let d = rng.random_range(1..=3);
            let a = 2.0 * rng.random::<f64>() - 1.0;
            (a, w, d)
        })
        .collect();
    let total: f64 = out.iter().map(|m| m.0.abs()).sum();
    if total > 0.0 {
        for m in &mut out {
            m.0 /= total;
        }
    }
    out
}

impl fmt::Display for BodyPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyPreset::Sphere { r } => write!(f, "sphere({r:?})"),
            BodyPreset::Bumpy { r0, eps, modes, seed: None } => write!(f, "bumpy({r0:?},{eps:?},{modes})"),
            BodyPreset::Bumpy { r0, eps, modes, seed: Some(s) } => write!(f, "bumpy({r0:?},{eps:?},{modes},{s})"),
            BodyPreset::Ellipsoid { a, b, c } => write!(f, "ellipsoid({a:?},{b:?},{c:?})"),
        }
    }
}

impl FromStr for BodyPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cur = Cursor::new(s);
        let name = cur.ident()?.to_ascii_lowercase();
        cur.eat('(')?;
        let mut args = vec![cur.number()?];
        while cur.try_eat(',') {
            args.push(cur.number()?);
        }
        cur.eat(')')?;
        cur.skip_ws();
        if !cur.at_end() {
            return Err(Error::parse(format!("trailing input in body preset `{s}`")));
        }
        let as_count = |v: f64, what: &str| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(Error::parse(format!("{what} must be a nonnegative integer, got {v}")))
            }
        };
        let body = match (name.as_str(), args.as_slice()) {
            ("sphere", [r]) => BodyPreset::Sphere { r: *r },
            ("bumpy", [r0, eps, modes]) => BodyPreset::Bumpy {
                r0: *r0,
                eps: *eps,
                modes: as_count(*modes, "modes")? as usize,
                seed: None,
            },
            ("bumpy", [r0, eps, modes, seed]) => BodyPreset::Bumpy {
                r0: *r0,
                eps: *eps,
                modes: as_count(*modes, "modes")? as usize,
                seed: Some(as_count(*seed, "seed")?),
            },
            ("ellipsoid", [a, b]) => BodyPreset::Ellipsoid { a: *a, b: *b, c: 1.0 },
            ("ellipsoid", [a, b, c]) => BodyPreset::Ellipsoid { a: *a, b: *b, c: *c },
            _ => {
                return Err(Error::parse(format!(
                    "unknown body preset `{s}` (expected sphere(r), bumpy(r0,eps,modes[,seed]) or ellipsoid(a,b[,c]))"
                )))
            }
        };
        Ok(body)
    }
}
