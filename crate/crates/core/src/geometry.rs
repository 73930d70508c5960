//! Ambient profile functions and the extrinsic geometry of a radial graph
//! `ρ(z)` over the unit sphere.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::manifold::{ScalarField, SphereGrid};
use crate::symfun::{self, KappaVector};

/// Space form containing the hypersurface.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ambient {
    Euclidean,
    Hyperbolic,
}

impl Ambient {
    /// Sectional curvature `K`.
    pub fn curvature(self) -> f64 {
        match self {
            Ambient::Euclidean => 0.0,
            Ambient::Hyperbolic => -1.0,
        }
    }

    /// Warping function `φ(ρ)`.
    #[inline]
    pub fn phi(self, r: f64) -> f64 {
        match self {
            Ambient::Euclidean => r,
            Ambient::Hyperbolic => r.sinh(),
        }
    }

    /// `φ'(ρ)`.
    #[inline]
    pub fn dphi(self, r: f64) -> f64 {
        match self {
            Ambient::Euclidean => 1.0,
            Ambient::Hyperbolic => r.cosh(),
        }
    }

    /// `φ''(ρ)`.
    #[inline]
    pub fn ddphi(self, r: f64) -> f64 {
        match self {
            Ambient::Euclidean => 0.0,
            Ambient::Hyperbolic => r.sinh(),
        }
    }

    /// Antiderivative `Φ` of `φ` (`∇Φ = φ∇ρ`).
    #[inline]
    pub fn big_phi(self, r: f64) -> f64 {
        match self {
            Ambient::Euclidean => 0.5 * r * r,
            Ambient::Hyperbolic => r.cosh(),
        }
    }

    /// `γ(ρ)` with `dγ/dρ = 1/φ`.
    #[inline]
    pub fn gamma(self, r: f64) -> f64 {
        match self {
            Ambient::Euclidean => r.ln(),
            Ambient::Hyperbolic => (0.5 * r).tanh().ln(),
        }
    }
}

impl fmt::Display for Ambient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ambient::Euclidean => "euclidean",
            Ambient::Hyperbolic => "hyperbolic",
        })
    }
}

impl FromStr for Ambient {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Ambient::Euclidean),
            "hyperbolic" => Ok(Ambient::Hyperbolic),
            other => Err(Error::parse(format!("unknown ambient `{other}` (expected euclidean or hyperbolic)"))),
        }
    }
}

/// Nodewise `γ(ρ)`.
pub fn gamma_of_rho(rho: &ScalarField, ambient: Ambient) -> Result<ScalarField> {
    check_positive(rho.values())?;
    let data = rho.values().iter().map(|&r| ambient.gamma(r)).collect();
    ScalarField::new(rho.grid().clone(), data)
}

fn check_positive(rho: &[f64]) -> Result<()> {
    match rho.iter().position(|&r| !(r > 0.0)) {
        Some(i) => Err(Error::Domain(format!("rho = {} at node {i} is not positive", rho[i]))),
        None => Ok(()),
    }
}

/// Full extrinsic geometry of a radial graph, stored per node. Tensors use the
/// coordinate conventions of [`crate::manifold`].
#[derive(Clone, Debug)]
pub struct GeometryFields {
    pub grid: Arc<SphereGrid>,
    pub ambient: Ambient,
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `D_i γ`.
    pub dgamma: Vec<[f64; 2]>,
    /// `|Dγ|²` with respect to the round metric.
    pub dgamma_sq: Vec<f64>,
    pub omega: Vec<f64>,
    /// Support function `u = φ/ω`.
    pub u: Vec<f64>,
    /// `φ(ρ)` and `φ'(ρ)`.
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub g: Vec<[f64; 3]>,
    pub g_inv: Vec<[f64; 3]>,
    pub h: Vec<[f64; 3]>,
    /// Weingarten map `h^i_j` as `[h^1_1, h^1_2, h^2_1, h^2_2]`.
    pub shape: Vec<[f64; 4]>,
    /// Principal curvatures, ascending (first entry only on the circle).
    pub kappa: Vec<[f64; 2]>,
    /// g-orthonormal principal directions (contravariant components), paired with `kappa`.
    pub frames: Vec<[[f64; 2]; 2]>,
    /// Mean curvature `H = Σ κ_i`.
    pub mean: Vec<f64>,
    /// Quadrature weight times `√det g / √det e`, so `Σ f_i w_i ≈ ∫_M f dμ`.
    pub measure: Vec<f64>,
}

/// Degeneracy threshold for `ω`, `u` and the metric pivots.
const DEGENERATE_EPS: f64 = 1e-12;

/// Symmetric 2×2 eigen-decomposition: `(low, high, c, s)` where `(c, s)` is
/// the unit eigenvector of `high`.
fn sym_eig2(a11: f64, a12: f64, a22: f64) -> (f64, f64, f64, f64) {
    let m = 0.5 * (a11 + a22);
    let half = 0.5 * (a11 - a22);
    let d = (half * half + a12 * a12).sqrt();
    // Eigenvector of the larger eigenvalue, from whichever row is better conditioned.
    let (v0, v1) = if half >= 0.0 {
        (half + d, a12)
    } else if a12 >= 0.0 {
        (a12, d - half)
    } else {
        (-a12, half - d)
    };
    let norm = (v0 * v0 + v1 * v1).sqrt();
    let (c, s) = if norm > 0.0 { (v0 / norm, v1 / norm) } else { (1.0, 0.0) };
    (m - d, m + d, c, s)
}

/// Lower Cholesky factor inverse of `[[a, b], [b, c]]` as `(i11, i21, i22)`.
fn chol_inv2(a: f64, b: f64, c: f64) -> Option<(f64, f64, f64)> {
    if !(a > 0.0) {
        return None;
    }
    let l11 = a.sqrt();
    let l21 = b / l11;
    let piv = c - l21 * l21;
    if !(piv > 0.0) {
        return None;
    }
    let l22 = piv.sqrt();
    Some((1.0 / l11, -l21 / (l11 * l22), 1.0 / l22))
}

/// Computes the geometry of the graph `ρ` in `ambient` on `ρ`'s grid.
pub fn geometry_from_rho(rho: &ScalarField, ambient: Ambient) -> Result<GeometryFields> {
    geometry_from_values(rho.grid(), rho.values(), ambient)
}

/// As [`geometry_from_rho`] on raw nodal values.
pub fn geometry_from_values(grid: &Arc<SphereGrid>, rho: &[f64], ambient: Ambient) -> Result<GeometryFields> {
    check_positive(rho)?;
    let n_nodes = grid.node_count();
    if rho.len() != n_nodes {
        return Err(Error::Domain(format!("rho has {} values, grid has {n_nodes} nodes", rho.len())));
    }
    let dim = grid.dim();
    let gamma: Vec<f64> = rho.iter().map(|&r| ambient.gamma(r)).collect();
    let (dg, d2g) = grid.derivatives(&gamma);
    let weights = grid.weights();

    let mut out = GeometryFields {
        grid: grid.clone(),
        ambient,
        rho: rho.to_vec(),
        gamma,
        dgamma: dg,
        dgamma_sq: vec![0.0; n_nodes],
        omega: vec![0.0; n_nodes],
        u: vec![0.0; n_nodes],
        phi: vec![0.0; n_nodes],
        dphi: vec![0.0; n_nodes],
        g: vec![[0.0; 3]; n_nodes],
        g_inv: vec![[0.0; 3]; n_nodes],
        h: vec![[0.0; 3]; n_nodes],
        shape: vec![[0.0; 4]; n_nodes],
        kappa: vec![[0.0; 2]; n_nodes],
        frames: vec![[[0.0; 2]; 2]; n_nodes],
        mean: vec![0.0; n_nodes],
        measure: vec![0.0; n_nodes],
    };

    for k in 0..n_nodes {
        let r = rho[k];
        let (p, dp) = (ambient.phi(r), ambient.dphi(r));
        let gi = out.dgamma[k];
        let hs = d2g[k];
        let e = grid.metric(k);
        let ei = grid.inverse_metric(k);
        let dsq = grid.norm_sq_e(gi, k);
        let w2 = 1.0 + dsq;
        let w = w2.sqrt();
        let u = p / w;
        if !(w > DEGENERATE_EPS) || !(u > DEGENERATE_EPS) || !u.is_finite() {
            return Err(Error::Degenerate {
                node: k,
                reason: format!("omega = {w:e}, u = {u:e}"),
            });
        }
        let p2 = p * p;
        let inv_pw = 1.0 / (p * w);

        if dim == 1 {
            let gh = 1.0 + gi[0] * gi[0];
            let a = hs[0] / gh;
            let kap = (dp - a) * inv_pw;
            let g11 = p2 * gh;
            out.g[k] = [g11, 0.0, 0.0];
            out.g_inv[k] = [1.0 / g11, 0.0, 0.0];
            out.h[k] = [kap * g11, 0.0, 0.0];
            out.shape[k] = [kap, 0.0, 0.0, 0.0];
            out.kappa[k] = [kap, 0.0];
            out.frames[k] = [[1.0 / g11.sqrt(), 0.0], [0.0, 0.0]];
            out.mean[k] = kap;
            out.measure[k] = p * w * weights[k];
        } else {
            // Ĝ = e + DγDγ; g = φ² Ĝ.
            let gh = [e[0] + gi[0] * gi[0], e[1] + gi[0] * gi[1], e[2] + gi[1] * gi[1]];
            let (i11, i21, i22) = chol_inv2(gh[0], gh[1], gh[2]).ok_or_else(|| Error::Degenerate {
                node: k,
                reason: "induced metric is not positive definite".into(),
            })?;
            let a11 = i11 * i11 * hs[0];
            let a12 = i11 * (i21 * hs[0] + i22 * hs[1]);
            let a22 = i21 * i21 * hs[0] + 2.0 * i21 * i22 * hs[1] + i22 * i22 * hs[2];
            let (mu_lo, mu_hi, c, s) = sym_eig2(a11, a12, a22);
            let k_lo = (dp - mu_hi) * inv_pw;
            let k_hi = (dp - mu_lo) * inv_pw;
            let frame = |v0: f64, v1: f64| [(i11 * v0 + i21 * v1) / p, i22 * v1 / p];
            out.frames[k] = [frame(c, s), frame(-s, c)];
            out.kappa[k] = [k_lo, k_hi];
            out.mean[k] = k_lo + k_hi;

            out.g[k] = [p2 * gh[0], p2 * gh[1], p2 * gh[2]];
            // g^{ij} = φ^{-2}(e^{ij} - γ^i γ^j / ω²)
            let up = [ei[0] * gi[0] + ei[1] * gi[1], ei[1] * gi[0] + ei[2] * gi[1]];
            out.g_inv[k] = [
                (ei[0] - up[0] * up[0] / w2) / p2,
                (ei[1] - up[0] * up[1] / w2) / p2,
                (ei[2] - up[1] * up[1] / w2) / p2,
            ];
            let pw = p / w;
            let hh = [
                pw * (-hs[0] + dp * gh[0]),
                pw * (-hs[1] + dp * gh[1]),
                pw * (-hs[2] + dp * gh[2]),
            ];
            out.h[k] = hh;
            let gv = out.g_inv[k];
            out.shape[k] = [
                gv[0] * hh[0] + gv[1] * hh[1],
                gv[0] * hh[1] + gv[1] * hh[2],
                gv[1] * hh[0] + gv[2] * hh[1],
                gv[1] * hh[1] + gv[2] * hh[2],
            ];
            out.measure[k] = p2 * w * weights[k];
        }
        out.dgamma_sq[k] = dsq;
        out.omega[k] = w;
        out.u[k] = u;
        out.phi[k] = p;
        out.dphi[k] = dp;
    }
    Ok(out)
}

/// Ascending eigenvalues of the pencil `(h, g)` for `n ≤ 2`, with `h`, `g`
/// given as `(11, 12, 22)` (only the first entry is used for `n = 1`).
pub fn principal_curvatures(h: [f64; 3], g: [f64; 3], n: usize) -> Result<KappaVector> {
    match n {
        1 => {
            if !(g[0] > 0.0) {
                return Err(Error::Degenerate {
                    node: 0,
                    reason: "metric is not positive definite".into(),
                });
            }
            KappaVector::new(vec![h[0] / g[0]])
        }
        2 => {
            let (i11, i21, i22) = chol_inv2(g[0], g[1], g[2]).ok_or_else(|| Error::Degenerate {
                node: 0,
                reason: "metric is not positive definite".into(),
            })?;
            let m11 = i11 * i11 * h[0];
            let m12 = i11 * (i21 * h[0] + i22 * h[1]);
            let m22 = i21 * i21 * h[0] + 2.0 * i21 * i22 * h[1] + i22 * i22 * h[2];
            let (lo, hi, _, _) = sym_eig2(m11, m12, m22);
            KappaVector::new(vec![lo, hi])
        }
        _ => Err(Error::Domain(format!("closed-form principal curvatures need n <= 2, got {n}"))),
    }
}

impl GeometryFields {
    pub fn n(&self) -> usize {
        self.grid.dim()
    }

    pub fn node_count(&self) -> usize {
        self.rho.len()
    }

    #[inline]
    pub fn kappa_at(&self, node: usize) -> &[f64] {
        &self.kappa[node][..self.grid.dim()]
    }

    /// `∫_M density dμ`.
    pub fn integrate(&self, density: &[f64]) -> f64 {
        self.grid.sum_weighted(density, &self.measure)
    }

    pub fn area(&self) -> f64 {
        self.integrate(&vec![1.0; self.node_count()])
    }

    /// Enclosed volume `(1/(n+1)) ∫ u dμ` (Euclidean only).
    pub fn volume(&self) -> Result<f64> {
        if self.ambient != Ambient::Euclidean {
            return Err(Error::Domain("enclosed volume is only implemented for the Euclidean ambient".into()));
        }
        Ok(self.integrate(&self.u) / (self.n() + 1) as f64)
    }

    /// Nodewise `p_k(κ)`.
    pub fn p_field(&self, k: usize) -> Result<Vec<f64>> {
        (0..self.node_count()).map(|i| symfun::p_k(self.kappa_at(i), k)).collect()
    }

    /// Nodewise `σ_k(κ)`.
    pub fn sigma_field(&self, k: usize) -> Result<Vec<f64>> {
        (0..self.node_count()).map(|i| symfun::sigma_k(self.kappa_at(i), k)).collect()
    }

    /// Writes the columnar snapshot CSV.
    pub fn write_snapshot(&self, mut out: impl Write) -> Result<()> {
        let n = self.n();
        write!(out, "node,theta,phi,rho,u,omega")?;
        for i in 1..=n {
            write!(out, ",kappa_{i}")?;
        }
        writeln!(out, ",H,weight")?;
        for k in 0..self.node_count() {
            let (t, p) = self.grid.coords(k);
            write!(out, "{k},{t:?},{p:?},{:?},{:?},{:?}", self.rho[k], self.u[k], self.omega[k])?;
            for kap in self.kappa_at(k) {
                write!(out, ",{kap:?}")?;
            }
            writeln!(out, ",{:?},{:?}", self.mean[k], self.measure[k])?;
        }
        Ok(())
    }
}

/// The support function as a field.
pub fn support_function(fields: &GeometryFields) -> ScalarField {
    ScalarField::new(fields.grid.clone(), fields.u.clone()).expect("support function is finite on a valid geometry")
}

/// `(∫ u p_k dμ − ∫ φ' p_{k−1} dμ) / ∫ φ' p_{k−1} dμ`.
pub fn minkowski_residual(fields: &GeometryFields, k: usize) -> Result<f64> {
    let n = fields.n();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("Minkowski residual needs 1 <= k <= {n}, got {k}")));
    }
    let pk = fields.p_field(k)?;
    let pk1 = fields.p_field(k - 1)?;
    let lhs_density: Vec<f64> = fields.u.iter().zip(&pk).map(|(u, p)| u * p).collect();
    let rhs_density: Vec<f64> = fields.dphi.iter().zip(&pk1).map(|(d, p)| d * p).collect();
    let lhs = fields.integrate(&lhs_density);
    let rhs = fields.integrate(&rhs_density);
    if rhs.abs() < 1e-300 {
        return Err(Error::Degenerate {
            node: 0,
            reason: format!("Minkowski denominator for k = {k} vanishes"),
        });
    }
    Ok((lhs - rhs) / rhs)
}

/// g-norm of a symmetric 2-tensor `(11, 12, 22)`.
fn tensor_norm_g(t: [f64; 3], gi: [f64; 3], dim: usize) -> f64 {
    if dim == 1 {
        return (gi[0] * t[0]).abs();
    }
    // |T|² = g^{ik} g^{jl} T_ij T_kl via the mixed tensor A = g^{-1} T.
    let a11 = gi[0] * t[0] + gi[1] * t[1];
    let a12 = gi[0] * t[1] + gi[1] * t[2];
    let a21 = gi[1] * t[0] + gi[2] * t[1];
    let a22 = gi[1] * t[1] + gi[2] * t[2];
    (a11 * a11 + 2.0 * a12 * a21 + a22 * a22).max(0.0).sqrt()
}

/// Recomputes `h_ij` from `ω^{-1} h = −∇²ρ + (φ'/φ)(g − dρ⊗dρ)`, with `∇` the
/// Levi-Civita connection of `g`, and returns the largest g-norm discrepancy
/// relative to `|h|_g` over all nodes.
pub fn cross_check_h(fields: &GeometryFields) -> f64 {
    let grid = &fields.grid;
    let dim = grid.dim();
    let (dr, d2r) = grid.derivatives(&fields.rho);
    let mut worst = 0.0f64;
    for k in 0..fields.node_count() {
        let (p, dp) = (fields.phi[k], fields.dphi[k]);
        let rho_i = dr[k];
        let gi = fields.g_inv[k];
        let g = fields.g[k];
        let e = grid.metric(k);
        // ρ^l with the index raised by g.
        let up = [gi[0] * rho_i[0] + gi[1] * rho_i[1], gi[1] * rho_i[0] + gi[2] * rho_i[1]];
        let hess = d2r[k];
        let idx = |i: usize, j: usize| if i == j { 2 * i } else { 1 };
        let mut h_rho = [0.0; 3];
        let comps: &[(usize, usize)] = if dim == 1 { &[(0, 0)] } else { &[(0, 0), (0, 1), (1, 1)] };
        for &(i, j) in comps {
            let eij = e[idx(i, j)];
            let rij = hess[idx(i, j)];
            // C^k_ij ρ_k = ρ^l [φφ'(ρ_i e_jl + ρ_j e_il − ρ_l e_ij) + ρ_ij ρ_l]
            let mut corr = 0.0;
            for (l, &ul) in up.iter().enumerate().take(dim) {
                let ejl = e[idx(j, l)];
                let eil = e[idx(i, l)];
                corr += ul * (p * dp * (rho_i[i] * ejl + rho_i[j] * eil - rho_i[l] * eij) + rij * rho_i[l]);
            }
            let cov = rij - corr;
            h_rho[idx(i, j)] =
                fields.omega[k] * (-cov + dp / p * (g[idx(i, j)] - rho_i[i] * rho_i[j]));
        }
        let h = fields.h[k];
        let diff = [h_rho[0] - h[0], h_rho[1] - h[1], h_rho[2] - h[2]];
        let rel = tensor_norm_g(diff, gi, dim) / tensor_norm_g(h, gi, dim).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    worst
}

/// Largest nodewise `| |∇ρ|²_g − (1 − 1/ω²) |`.
pub fn gradient_identity_residual(fields: &GeometryFields) -> f64 {
    let dr = fields.grid.grad(&fields.rho);
    (0..fields.node_count())
        .map(|k| {
            let gi = fields.g_inv[k];
            let v = dr[k];
            let lhs = gi[0] * v[0] * v[0] + 2.0 * gi[1] * v[0] * v[1] + gi[2] * v[1] * v[1];
            let w2 = fields.omega[k] * fields.omega[k];
            (lhs - (1.0 - 1.0 / w2)).abs()
        })
        .fold(0.0, f64::max)
}

/// Checks `∇_i u = g^{kl} h_{ik} ∇_l Φ` with both sides assembled from finite
/// differences; returns `max_node |lhs − rhs|_g / max_node |rhs|_g`.
pub fn support_gradient_residual(fields: &GeometryFields) -> f64 {
    let grid = &fields.grid;
    let du = grid.grad(&fields.u);
    let dr = grid.grad(&fields.rho);
    let dim = grid.dim();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for k in 0..fields.node_count() {
        let gi = fields.g_inv[k];
        let h = fields.h[k];
        let dphi_big = [fields.phi[k] * dr[k][0], fields.phi[k] * dr[k][1]];
        let rhs = if dim == 1 {
            [gi[0] * h[0] * dphi_big[0], 0.0]
        } else {
            // g^{kl} ∇_l Φ, then contract with h_ik.
            let up = [
                gi[0] * dphi_big[0] + gi[1] * dphi_big[1],
                gi[1] * dphi_big[0] + gi[2] * dphi_big[1],
            ];
            [h[0] * up[0] + h[1] * up[1], h[1] * up[0] + h[2] * up[1]]
        };
        let diff = [du[k][0] - rhs[0], du[k][1] - rhs[1]];
        let norm = |v: [f64; 2]| (gi[0] * v[0] * v[0] + 2.0 * gi[1] * v[0] * v[1] + gi[2] * v[1] * v[1]).max(0.0).sqrt();
        num = num.max(norm(diff));
        den = den.max(norm(rhs));
    }
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// `∫ σ_n dμ`, which equals the area of the unit n-sphere for closed
/// Euclidean hypersurfaces (Gauss–Bonnet / degree of the Gauss map).
pub fn total_gauss_curvature(fields: &GeometryFields) -> Result<f64> {
    let s = fields.sigma_field(fields.n())?;
    Ok(fields.integrate(&s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::GridSpec;
    use approx::assert_relative_eq;
    
    fn sphere_grid(nt: usize, np: usize) -> Arc<SphereGrid> {
        Arc::new(SphereGrid::new(GridSpec::Sphere { n_theta: nt, n_phi: np }).unwrap())
    }

    #[test]
    fn ambient_profiles() {
        for amb in [Ambient::Euclidean, Ambient::Hyperbolic] {
            for r in [0.3, 1.0, 2.5] {
                let lhs = amb.ddphi(r) * amb.phi(r) + 1.0;
                assert_relative_eq!(lhs, amb.dphi(r).powi(2), max_relative = 1e-14);
            }
        }
        assert_eq!("Hyperbolic".parse::<Ambient>().unwrap(), Ambient::Hyperbolic);
        assert!("spherical".parse::<Ambient>().is_err());
    }

    #[test]
    fn gamma_examples() {
        let grid = sphere_grid(16, 32);
        let one = ScalarField::constant(grid.clone(), 1.0).unwrap();
        assert!(gamma_of_rho(&one, Ambient::Euclidean).unwrap().values().iter().all(|&v| v == 0.0));
        let e = ScalarField::constant(grid.clone(), std::f64::consts::E).unwrap();
        assert!(gamma_of_rho(&e, Ambient::Euclidean).unwrap().values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let bad = ScalarField::constant(grid, 0.0).unwrap();
        assert!(matches!(gamma_of_rho(&bad, Ambient::Euclidean), Err(Error::Domain(_))));
    }

    #[test]
    fn round_spheres_are_exact() {
        let grid = sphere_grid(16, 32);
        for (amb, r) in [(Ambient::Euclidean, 1.7), (Ambient::Hyperbolic, 0.9)] {
            let rho = ScalarField::constant(grid.clone(), r).unwrap();
            let f = geometry_from_rho(&rho, amb).unwrap();
            let kap = amb.dphi(r) / amb.phi(r);
            for k in 0..f.node_count() {
                assert_eq!(f.omega[k], 1.0);
                assert_eq!(f.u[k], amb.phi(r));
                assert_eq!(f.kappa[k][0], f.kappa[k][1]);
                assert_relative_eq!(f.kappa[k][0], kap, max_relative = 1e-15);
            }
            assert!(cross_check_h(&f) < 1e-13);
            assert!(minkowski_residual(&f, 1).unwrap().abs() < 1e-14);
            assert!(minkowski_residual(&f, 2).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn principal_curvature_examples() {
        let k = principal_curvatures([1.0, 0.2, 3.0], [1.0, 0.2, 3.0], 2).unwrap();
        assert_relative_eq!(k.as_slice()[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(k.as_slice()[1], 1.0, max_relative = 1e-14);
        let k = principal_curvatures([3.0, 0.0, 2.0], [1.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(k.as_slice(), &[2.0, 3.0]);
        assert!(principal_curvatures([1.0, 0.0, 1.0], [1.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn metric_inverse_and_shape_consistent() {
        let grid = sphere_grid(24, 48);
        let rho = ScalarField::from_fn(grid, |t, p| 1.0 + 0.15 * t.sin() * p.cos() + 0.1 * t.cos().powi(2)).unwrap();
        let f = geometry_from_rho(&rho, Ambient::Euclidean).unwrap();
        for k in 0..f.node_count() {
            let (g, gi) = (f.g[k], f.g_inv[k]);
            let id = [g[0] * gi[0] + g[1] * gi[1], g[0] * gi[1] + g[1] * gi[2], g[1] * gi[1] + g[2] * gi[2]];
            assert!((id[0] - 1.0).abs() < 1e-12 && id[1].abs() < 1e-12 && (id[2] - 1.0).abs() < 1e-12);
            let direct = principal_curvatures(f.h[k], g, 2).unwrap();
            for a in 0..2 {
                assert_relative_eq!(direct.as_slice()[a], f.kappa[k][a], max_relative = 1e-10);
            }
            // Frames are g-orthonormal eigenvectors of the Weingarten map.
            for a in 0..2 {
                let v = f.frames[k][a];
                let n2 = g[0] * v[0] * v[0] + 2.0 * g[1] * v[0] * v[1] + g[2] * v[1] * v[1];
                assert!((n2 - 1.0).abs() < 1e-12);
                let s = f.shape[k];
                let sv = [s[0] * v[0] + s[1] * v[1], s[2] * v[0] + s[3] * v[1]];
                assert!((sv[0] - f.kappa[k][a] * v[0]).abs() < 1e-10 && (sv[1] - f.kappa[k][a] * v[1]).abs() < 1e-10);
            }
        }
    }
}
