//! Parameter grids on S¹ and S², derivatives with respect to the round metric,
//! quadrature and the polar longitude filter.
//!
//! Nodes are stored row-major: node `i * n_phi + j` sits at colatitude row `i`
//! and longitude `j`. The circle is a single row (`n_theta = 1`) whose only
//! coordinate is the angle φ. Covectors are `[f64; 2]` in coordinate order
//! `(θ, φ)` on S² and `(φ, -)` on S¹; symmetric tensors are `[f64; 3]` holding
//! the `(11, 12, 22)` components.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Rows with `sin θ` below this value are low-pass filtered in longitude.
pub const POLAR_FILTER_SIN: f64 = 0.7;
/// Longitude modes up to this index are never filtered.
pub const POLAR_FILTER_MIN_MODE: usize = 3;

/// Resolution of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridSpec {
    Circle { n_points: usize },
    Sphere { n_theta: usize, n_phi: usize },
}

impl GridSpec {
    pub fn dim(&self) -> usize {
        match self {
            GridSpec::Circle { .. } => 1,
            GridSpec::Sphere { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GridSpec::Circle { n_points } if n_points < 16 => {
                Err(Error::Config(format!("circle grid needs n_points >= 16, got {n_points}")))
            }
            GridSpec::Sphere { n_theta, .. } if n_theta < 16 => {
                Err(Error::Config(format!("sphere grid needs n_theta >= 16, got {n_theta}")))
            }
            GridSpec::Sphere { n_phi, .. } if n_phi < 32 || n_phi % 2 != 0 => Err(Error::Config(format!(
                "sphere grid needs an even n_phi >= 32, got {n_phi}"
            ))),
            _ => Ok(()),
        }
    }

    /// The same grid with every resolution parameter multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> GridSpec {
        match *self {
            GridSpec::Circle { n_points } => GridSpec::Circle { n_points: n_points * factor },
            GridSpec::Sphere { n_theta, n_phi } => GridSpec::Sphere {
                n_theta: n_theta * factor,
                n_phi: n_phi * factor,
            },
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Circle { n_points } => write!(f, "dim=1 n_points={n_points}"),
            GridSpec::Sphere { n_theta, n_phi } => write!(f, "dim=2 n_theta={n_theta} n_phi={n_phi}"),
        }
    }
}

struct RowFilter {
    row: usize,
    keep: usize,
}

/// Longitude low-pass filter on the rows nearest the poles. Removes the modes
/// that would otherwise force a time step proportional to `sin²θ_0`.
struct PolarFilter {
    rows: Vec<RowFilter>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Immutable latitude–longitude (or circle) grid with precomputed tables.
pub struct SphereGrid {
    spec: GridSpec,
    n_theta: usize,
    n_phi: usize,
    dtheta: f64,
    dphi: f64,
    theta: Vec<f64>,
    sin_theta: Vec<f64>,
    cos_theta: Vec<f64>,
    phi: Vec<f64>,
    weights: Vec<f64>,
    dphi_eff: Vec<f64>,
    filter: Option<PolarFilter>,
}

impl fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereGrid").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl PartialEq for SphereGrid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

/// Fejér's first rule in `x = cos θ` on the offset nodes `θ_i = (i + ½)π/N`.
fn fejer_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let th = (i as f64 + 0.5) * PI / n as f64;
            let mut acc = CompensatedSum::new();
            for j in 1..=n / 2 {
                acc.add((2.0 * j as f64 * th).cos() / (4.0 * (j * j) as f64 - 1.0));
            }
            2.0 / n as f64 * (1.0 - 2.0 * acc.value())
        })
        .collect()
}

/// Sixth-order central first derivative from the offsets `±1, ±2, ±3`.
#[inline]
fn stencil_d1(f: [f64; 7], h: f64) -> f64 {
    (45.0 * (f[4] - f[2]) - 9.0 * (f[5] - f[1]) + (f[6] - f[0])) / (60.0 * h)
}

/// Sixth-order central second derivative, written on differences from the
/// centre so that a constant gives exactly zero.
#[inline]
fn stencil_d2(f: [f64; 7], h: f64) -> f64 {
    let c = f[3];
    let d1 = (f[4] - c) + (f[2] - c);
    let d2 = (f[5] - c) + (f[1] - c);
    let d3 = (f[6] - c) + (f[0] - c);
    (270.0 * d1 - 27.0 * d2 + 2.0 * d3) / (180.0 * h * h)
}

/// Half-width of the derivative stencils.
const W: usize = 3;

/// `max_k |symbol of stencil_d2| · h²`, attained at the Nyquist mode.
pub const STENCIL_D2_BOUND: f64 = 1088.0 / 180.0;

impl SphereGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let (n_theta, n_phi) = match spec {
            GridSpec::Circle { n_points } => (1, n_points),
            GridSpec::Sphere { n_theta, n_phi } => (n_theta, n_phi),
        };
        let dphi = 2.0 * PI / n_phi as f64;
        let phi: Vec<f64> = (0..n_phi).map(|j| j as f64 * dphi).collect();
        let (theta, dtheta) = match spec {
            GridSpec::Circle { .. } => (vec![PI / 2.0], 0.0),
            GridSpec::Sphere { .. } => {
                let h = PI / n_theta as f64;
                ((0..n_theta).map(|i| (i as f64 + 0.5) * h).collect(), h)
            }
        };
        let sin_theta: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
        let cos_theta: Vec<f64> = theta.iter().map(|t| t.cos()).collect();

        let weights = match spec {
            GridSpec::Circle { n_points } => vec![dphi; n_points],
            GridSpec::Sphere { .. } => {
                let w = fejer_weights(n_theta);
                let mut out = Vec::with_capacity(n_theta * n_phi);
                for wi in &w {
                    out.extend(std::iter::repeat_n(wi * dphi, n_phi));
                }
                out
            }
        };

        let mut dphi_eff = vec![dphi; n_theta];
        let filter = match spec {
            GridSpec::Circle { .. } => None,
            GridSpec::Sphere { .. } => {
                let mut rows = Vec::new();
                for (i, &s) in sin_theta.iter().enumerate() {
                    if s < POLAR_FILTER_SIN {
                        let keep = (((n_phi / 2) as f64 * s / POLAR_FILTER_SIN).floor() as usize)
                            .max(POLAR_FILTER_MIN_MODE)
                            .min(n_phi / 2);
                        if keep < n_phi / 2 {
                            rows.push(RowFilter { row: i, keep });
                            // Spacing whose stencil bound matches the largest kept mode.
                            dphi_eff[i] = STENCIL_D2_BOUND.sqrt() / keep as f64;
                        }
                    }
                }
                let mut planner = FftPlanner::new();
                Some(PolarFilter {
                    rows,
                    forward: planner.plan_fft_forward(n_phi),
                    inverse: planner.plan_fft_inverse(n_phi),
                })
            }
        };

        Ok(SphereGrid {
            spec,
            n_theta,
            n_phi,
            dtheta,
            dphi,
            theta,
            sin_theta,
            cos_theta,
            phi,
            weights,
            dphi_eff,
            filter,
        })
    }

    /// Convenience constructor matching the `(dim, resolution)` form.
    pub fn build(dim: usize, resolution: &[usize]) -> Result<Self> {
        match (dim, resolution) {
            (1, [n]) => Self::new(GridSpec::Circle { n_points: *n }),
            (2, [nt, np]) => Self::new(GridSpec::Sphere { n_theta: *nt, n_phi: *np }),
            _ => Err(Error::Config(format!(
                "grid needs dim 1 with one resolution or dim 2 with two, got dim {dim} and {resolution:?}"
            ))),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn node_count(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    pub fn dphi(&self) -> f64 {
        self.dphi
    }

    /// Longitude spacing used for the time-step bound on row `i` (larger than
    /// `dphi` on filtered rows).
    pub fn dphi_effective(&self, row: usize) -> f64 {
        self.dphi_eff[row]
    }

    #[inline]
    pub fn row_of(&self, node: usize) -> usize {
        node / self.n_phi
    }

    /// `(θ, φ)` of a node; θ is π/2 on the circle.
    pub fn coords(&self, node: usize) -> (f64, f64) {
        (self.theta[node / self.n_phi], self.phi[node % self.n_phi])
    }

    pub fn sin_theta(&self, row: usize) -> f64 {
        self.sin_theta[row]
    }

    pub fn cos_theta(&self, row: usize) -> f64 {
        self.cos_theta[row]
    }

    /// Unit direction of a node in the ambient space (`z = 0` on the circle).
    pub fn direction(&self, node: usize) -> [f64; 3] {
        let (th, ph) = self.coords(node);
        match self.spec {
            GridSpec::Circle { .. } => [ph.cos(), ph.sin(), 0.0],
            GridSpec::Sphere { .. } => [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()],
        }
    }

    /// Quadrature weights; they integrate against the round measure.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Round metric `e_ij` at a node as `(11, 12, 22)`.
    pub fn metric(&self, node: usize) -> [f64; 3] {
        match self.spec {
            GridSpec::Circle { .. } => [1.0, 0.0, 0.0],
            GridSpec::Sphere { .. } => {
                let s = self.sin_theta[node / self.n_phi];
                [1.0, 0.0, s * s]
            }
        }
    }

    /// Inverse round metric `e^ij` at a node.
    pub fn inverse_metric(&self, node: usize) -> [f64; 3] {
        match self.spec {
            GridSpec::Circle { .. } => [1.0, 0.0, 0.0],
            GridSpec::Sphere { .. } => {
                let s = self.sin_theta[node / self.n_phi];
                [1.0, 0.0, 1.0 / (s * s)]
            }
        }
    }

    /// `e^ij v_i v_j`.
    pub fn norm_sq_e(&self, v: [f64; 2], node: usize) -> f64 {
        let ei = self.inverse_metric(node);
        ei[0] * v[0] * v[0] + 2.0 * ei[1] * v[0] * v[1] + ei[2] * v[1] * v[1]
    }

    /// Copy of `values` with `W` wrapped columns on each side of every row and,
    /// if `ghost_rows`, `W` reflected rows beyond each pole (shifted by half a
    /// turn in longitude). Row stride is `n_phi + 2W`.
    fn padded(&self, values: &[f64], ghost_rows: bool) -> Vec<f64> {
        let np = self.n_phi;
        let nt = self.n_theta as isize;
        let stride = np + 2 * W;
        let extra = if ghost_rows { W } else { 0 };
        let mut out = vec![0.0; (self.n_theta + 2 * extra) * stride];
        for (pi, out_row) in out.chunks_exact_mut(stride).enumerate() {
            let i = pi as isize - extra as isize;
            let (row, shift) = if i < 0 {
                ((-1 - i) as usize, np / 2)
            } else if i >= nt {
                ((2 * nt - 1 - i) as usize, np / 2)
            } else {
                (i as usize, 0)
            };
            let src = &values[row * np..(row + 1) * np];
            for (c, v) in out_row.iter_mut().enumerate() {
                *v = src[(c + np + shift - W) % np];
            }
        }
        out
    }

    #[inline]
    fn window(padded: &[f64], start: usize) -> [f64; 7] {
        padded[start..start + 7].try_into().expect("stencil window")
    }

    #[inline]
    fn col_window(padded: &[f64], start: usize, stride: usize) -> [f64; 7] {
        std::array::from_fn(|o| padded[start + o * stride])
    }

    /// Longitude derivative of nodal values.
    pub fn d_phi(&self, values: &[f64]) -> Vec<f64> {
        let np = self.n_phi;
        let stride = np + 2 * W;
        let pad = self.padded(values, false);
        let mut out = vec![0.0; values.len()];
        for i in 0..self.n_theta {
            for j in 0..np {
                out[i * np + j] = stencil_d1(Self::window(&pad, i * stride + j), self.dphi);
            }
        }
        out
    }

    /// Colatitude derivative of nodal values (zero on the circle).
    pub fn d_theta(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        if self.dim() == 1 {
            return out;
        }
        let np = self.n_phi;
        let stride = np + 2 * W;
        let pad = self.padded(values, true);
        for i in 0..self.n_theta {
            for j in 0..np {
                out[i * np + j] = stencil_d1(Self::col_window(&pad, i * stride + j + W, stride), self.dtheta);
            }
        }
        out
    }

    /// Coordinate gradient `D_i f`.
    pub fn grad(&self, values: &[f64]) -> Vec<[f64; 2]> {
        self.derivatives(values).0
    }

    /// Covariant Hessian `D_i D_j f` of the round metric.
    pub fn hess(&self, values: &[f64]) -> Vec<[f64; 3]> {
        self.derivatives(values).1
    }

    /// Gradient and covariant Hessian in one pass.
    pub fn derivatives(&self, values: &[f64]) -> (Vec<[f64; 2]>, Vec<[f64; 3]>) {
        assert_eq!(values.len(), self.node_count(), "field does not match grid");
        let np = self.n_phi;
        let n = values.len();
        let mut grad = vec![[0.0; 2]; n];
        let mut hess = vec![[0.0; 3]; n];

        let stride = np + 2 * W;
        if self.dim() == 1 {
            let pad = self.padded(values, false);
            for j in 0..np {
                let st = Self::window(&pad, j);
                grad[j][0] = stencil_d1(st, self.dphi);
                hess[j][0] = stencil_d2(st, self.dphi);
            }
            return (grad, hess);
        }

        let pad = self.padded(values, true);
        let f_theta = self.d_theta(values);
        let pad_t = self.padded(&f_theta, false);
        for i in 0..self.n_theta {
            let (s, c) = (self.sin_theta[i], self.cos_theta[i]);
            let cot = c / s;
            for j in 0..np {
                let st = Self::window(&pad, (i + W) * stride + j);
                let f_p = stencil_d1(st, self.dphi);
                let f_pp = stencil_d2(st, self.dphi);
                let f_tp = stencil_d1(Self::window(&pad_t, i * stride + j), self.dphi);
                let f_tt = stencil_d2(Self::col_window(&pad, i * stride + j + W, stride), self.dtheta);
                let k = i * np + j;
                let f_t = f_theta[k];
                grad[k] = [f_t, f_p];
                hess[k] = [f_tt, f_tp - cot * f_p, f_pp + s * c * f_t];
            }
        }
        (grad, hess)
    }

    /// `∫ density` against the round measure, compensated, in node order.
    pub fn integrate(&self, density: &[f64]) -> f64 {
        assert_eq!(density.len(), self.node_count(), "density does not match grid");
        let mut acc = CompensatedSum::new();
        for (d, w) in density.iter().zip(&self.weights) {
            acc.add(d * w);
        }
        acc.value()
    }

    /// `Σ density_i weight_i` with caller-supplied per-node weights (already
    /// including the round-measure factor).
    pub fn sum_weighted(&self, density: &[f64], weights: &[f64]) -> f64 {
        let mut acc = CompensatedSum::new();
        for (d, w) in density.iter().zip(weights) {
            acc.add(d * w);
        }
        acc.value()
    }

    /// Low-passes the polar rows in longitude in place. Rows that are exactly
    /// constant are left untouched so that round spheres stay bit-exact.
    pub fn polar_filter(&self, values: &mut [f64]) {
        let Some(filter) = &self.filter else { return };
        let np = self.n_phi;
        let mut buf = vec![Complex::new(0.0, 0.0); np];
        let mut scratch = vec![Complex::new(0.0, 0.0); filter.forward.get_inplace_scratch_len()];
        for rf in &filter.rows {
            let row = &mut values[rf.row * np..(rf.row + 1) * np];
            if row.iter().all(|&v| v == row[0]) {
                continue;
            }
            for (b, &v) in buf.iter_mut().zip(row.iter()) {
                *b = Complex::new(v, 0.0);
            }
            filter.forward.process_with_scratch(&mut buf, &mut scratch);
            for (m, b) in buf.iter_mut().enumerate() {
                let wavenumber = m.min(np - m);
                if wavenumber > rf.keep {
                    *b = Complex::new(0.0, 0.0);
                }
            }
            filter.inverse.process_with_scratch(&mut buf, &mut scratch);
            let scale = 1.0 / np as f64;
            for (v, b) in row.iter_mut().zip(&buf) {
                *v = b.re * scale;
            }
        }
    }

    /// Number of filtered rows (zero on the circle).
    pub fn filtered_rows(&self) -> usize {
        self.filter.as_ref().map_or(0, |f| f.rows.len())
    }
}

/// Values of a function on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Arc<SphereGrid>,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<SphereGrid>, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.node_count() {
            return Err(Error::Domain(format!(
                "field has {} values but the grid has {} nodes",
                data.len(),
                grid.node_count()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("field value at node {i} is not finite")));
        }
        Ok(ScalarField { grid, data })
    }

    pub fn from_fn(grid: Arc<SphereGrid>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let data = (0..grid.node_count())
            .map(|k| {
                let (t, p) = grid.coords(k);
                f(t, p)
            })
            .collect();
        Self::new(grid, data)
    }

    pub fn constant(grid: Arc<SphereGrid>, value: f64) -> Result<Self> {
        let n = grid.node_count();
        Self::new(grid, vec![value; n])
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Vec<[f64; 2]> {
        self.grid.grad(&self.data)
    }

    pub fn hess(&self) -> Vec<[f64; 3]> {
        self.grid.hess(&self.data)
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.data)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `(node, value)` CSV preceded by a `# grid ...` header line.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "# grid {}", self.grid.spec())?;
        writeln!(out, "node,value")?;
        for (k, v) in self.data.iter().enumerate() {
            writeln!(out, "{k},{v:?}")?;
        }
        Ok(())
    }

    /// Reads the format written by [`ScalarField::write_csv`], rebuilding the grid.
    pub fn read_csv(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse("empty field file"))?;
        let header = header?;
        let spec = parse_grid_header(&header).map_err(|e| with_line(e, 1))?;
        let grid = Arc::new(SphereGrid::new(spec)?);
        let mut data = Vec::with_capacity(grid.node_count());
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if lineno == 2 {
                if line.trim() != "node,value" {
                    return Err(with_line(Error::parse("expected `node,value` column header"), 2));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (node, value) = line
                .split_once(',')
                .ok_or_else(|| with_line(Error::parse("expected `node,value`"), lineno))?;
            let node: usize = node
                .trim()
                .parse()
                .map_err(|_| with_line(Error::parse(format!("bad node index `{node}`")), lineno))?;
            if node != data.len() {
                return Err(with_line(Error::parse(format!("node {node} out of order")), lineno));
            }
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| with_line(Error::parse(format!("bad value `{value}`")), lineno))?;
            data.push(value);
        }
        Self::new(grid, data)
    }
}

fn with_line(e: Error, line: usize) -> Error {
    match e {
        Error::Parse { message, key, .. } => Error::Parse {
            message,
            line: Some(line),
            key,
        },
        other => other,
    }
}

fn parse_grid_header(line: &str) -> Result<GridSpec> {
    let rest = line
        .strip_prefix("# grid ")
        .ok_or_else(|| Error::parse("expected `# grid ...` header"))?;
    let mut dim = None;
    let mut n_points = None;
    let mut n_theta = None;
    let mut n_phi = None;
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("bad header token `{tok}`")))?;
        let v: usize = v
            .parse()
            .map_err(|_| Error::parse(format!("bad header value `{tok}`")))?;
        match k {
            "dim" => dim = Some(v),
            "n_points" => n_points = Some(v),
            "n_theta" => n_theta = Some(v),
            "n_phi" => n_phi = Some(v),
            _ => return Err(Error::parse(format!("unknown header key `{k}`"))),
        }
    }
    match (dim, n_points, n_theta, n_phi) {
        (Some(1), Some(n_points), None, None) => Ok(GridSpec::Circle { n_points }),
        (Some(2), None, Some(n_theta), Some(n_phi)) => Ok(GridSpec::Sphere { n_theta, n_phi }),
        _ => Err(Error::parse(format!("incomplete grid header `{line}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(nt: usize, np: usize) -> Arc<SphereGrid> {
        Arc::new(SphereGrid::new(GridSpec::Sphere { n_theta: nt, n_phi: np }).unwrap())
    }

    fn circle(n: usize) -> Arc<SphereGrid> {
        Arc::new(SphereGrid::new(GridSpec::Circle { n_points: n }).unwrap())
    }

    #[test]
    fn grid_construction() {
        let g = sphere(16, 32);
        assert_eq!(g.node_count(), 512);
        assert!((g.weights().iter().sum::<f64>() - 4.0 * PI).abs() < 1e-14 * 4.0 * PI);
        let c = circle(64);
        assert_eq!(c.node_count(), 64);
        assert!(c.weights().iter().all(|&w| w == 2.0 * PI / 64.0));
        assert!(matches!(
            SphereGrid::new(GridSpec::Sphere { n_theta: 16, n_phi: 33 }),
            Err(Error::Config(_))
        ));
        assert!(SphereGrid::new(GridSpec::Circle { n_points: 8 }).is_err());
        assert!(SphereGrid::build(2, &[16]).is_err());
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        let g = sphere(16, 32);
        let (gr, he) = g.derivatives(&vec![2.7; g.node_count()]);
        assert!(gr.iter().all(|v| v == &[0.0, 0.0]));
        assert!(he.iter().all(|v| v == &[0.0, 0.0, 0.0]));
    }

    #[test]
    fn circle_derivative_of_cos() {
        let g = circle(64);
        let f = ScalarField::from_fn(g.clone(), |_, p| p.cos()).unwrap();
        let gr = f.grad();
        let err = (0..64).map(|k| (gr[k][0] + g.coords(k).1.sin()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn cos_theta_derivatives() {
        let g = sphere(32, 64);
        let f = ScalarField::from_fn(g.clone(), |t, _| t.cos()).unwrap();
        let (gr, he) = g.derivatives(f.values());
        for k in 0..g.node_count() {
            let (t, _) = g.coords(k);
            assert!((gr[k][0] + t.sin()).abs() < 1e-5);
            assert!(gr[k][1].abs() < 1e-14);
            let s2 = t.sin().powi(2);
            assert!((he[k][0] + t.cos()).abs() < 1e-4);
            assert!(he[k][1].abs() < 1e-12);
            assert!((he[k][2] + t.cos() * s2).abs() < 1e-4);
            assert!((g.norm_sq_e(gr[k], k) - s2).abs() < 1e-5);
        }
    }

    #[test]
    fn norm_sq_e_examples() {
        let g = sphere(16, 32);
        assert_eq!(g.norm_sq_e([0.0, 0.0], 0), 0.0);
        // No node sits exactly on the equator for even n_theta, so use an odd grid.
        let g = sphere(17, 32);
        let eq = 8 * 32;
        assert!((g.norm_sq_e([0.0, 1.0], eq) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_examples() {
        let g = sphere(32, 64);
        let one = vec![1.0; g.node_count()];
        assert!((g.integrate(&one) - 4.0 * PI).abs() < 1e-14 * 4.0 * PI);
        let f = ScalarField::from_fn(g.clone(), |t, _| t.cos().powi(2)).unwrap();
        assert!((f.integrate() - 4.0 * PI / 3.0).abs() < 1e-13);
        let c = circle(64);
        let s = ScalarField::from_fn(c, |_, p| p.sin()).unwrap();
        assert!(s.integrate().abs() < 1e-14);
    }

    #[test]
    fn polar_filter_preserves_low_modes_and_constants() {
        let g = sphere(32, 64);
        assert!(g.filtered_rows() > 0);
        let mut c = vec![1.25; g.node_count()];
        g.polar_filter(&mut c);
        assert!(c.iter().all(|&v| v == 1.25));
        let smooth = ScalarField::from_fn(g.clone(), |t, p| 1.0 + 0.1 * t.sin() * p.cos() + 0.05 * t.cos()).unwrap();
        let mut v = smooth.values().to_vec();
        g.polar_filter(&mut v);
        let err = v.iter().zip(smooth.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-14, "{err}");
        let mut rough: Vec<f64> = (0..g.node_count()).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        g.polar_filter(&mut rough);
        assert!(rough[..64].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn field_csv_roundtrip() {
        let g = sphere(16, 32);
        let f = ScalarField::from_fn(g, |t, p| t.sin() * p.cos() + 0.1).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = ScalarField::read_csv(&buf[..]).unwrap();
        assert_eq!(back, f);
        let err = ScalarField::read_csv(&b"# grid dim=3\nnode,value\n"[..]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(1), .. }), "{err}");
    }
}
