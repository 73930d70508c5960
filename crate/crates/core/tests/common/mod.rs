//! Oracles shared by the integration tests. Nothing here calls into the
//! library's own evaluation paths.
#![allow(dead_code)]

use nalgebra::{Matrix2, Vector3};

/// `σ_k` by summing products over all k-subsets.
pub fn sigma_enum(kappa: &[f64], k: usize) -> f64 {
    let n = kappa.len();
    if k > n {
        return 0.0;
    }
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| kappa[i]).product::<f64>())
        .sum()
}

pub fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

pub fn p_enum(kappa: &[f64], k: usize) -> f64 {
    sigma_enum(kappa, k) / choose(kappa.len(), k)
}

/// `σ_k(κ | i)`.
pub fn sigma_without(kappa: &[f64], k: usize, i: usize) -> f64 {
    let rest: Vec<f64> = kappa.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
    sigma_enum(&rest, k)
}

pub fn in_garding(kappa: &[f64], l: usize, margin: f64) -> bool {
    (1..=l).all(|j| p_enum(kappa, j) > margin)
}

/// Classical fourth-order Runge–Kutta for a scalar ODE, with `steps` steps.
pub fn rk4(f: impl Fn(f64, f64) -> f64, y0: f64, t_end: f64, steps: usize) -> f64 {
    let h = t_end / steps as f64;
    let mut y = y0;
    for s in 0..steps {
        let t = s as f64 * h;
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

/// Principal curvatures of the surface `X(θ, φ) = ρ(θ, φ) z(θ, φ)` in R³,
/// from analytic first and second derivatives of `X` supplied by `x`, as the
/// generalized eigenvalues of `(II, I)`. Sorted ascending.
pub fn principal_curvatures_r3(
    x: Vector3<f64>,
    x_t: Vector3<f64>,
    x_p: Vector3<f64>,
    x_tt: Vector3<f64>,
    x_tp: Vector3<f64>,
    x_pp: Vector3<f64>,
) -> [f64; 2] {
    let mut nrm = x_t.cross(&x_p).normalize();
    if nrm.dot(&x) < 0.0 {
        nrm = -nrm;
    }
    let first = Matrix2::new(x_t.dot(&x_t), x_t.dot(&x_p), x_t.dot(&x_p), x_p.dot(&x_p));
    // Outward normal; curvatures positive on convex bodies.
    let second = Matrix2::new(-x_tt.dot(&nrm), -x_tp.dot(&nrm), -x_tp.dot(&nrm), -x_pp.dot(&nrm));
    let shape = first.try_inverse().expect("regular parametrization") * second;
    let ev = shape.complex_eigenvalues();
    let mut k = [ev[0].re, ev[1].re];
    k.sort_by(f64::total_cmp);
    k
}
