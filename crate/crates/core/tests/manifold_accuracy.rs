use nalgebra::{Matrix3, Vector3};
use starflow_core::manifold::{GridSpec, SphereGrid};

/// Smooth ambient function with analytic gradient and Hessian.
struct Ambient3 {
    f: fn(Vector3<f64>) -> f64,
    grad: fn(Vector3<f64>) -> Vector3<f64>,
    hess: fn(Vector3<f64>) -> Matrix3<f64>,
}

fn smooth() -> Ambient3 {
    Ambient3 {
        f: |p| (0.3 * p.x).exp() + p.y * p.z + 0.5 * p.z.powi(3) + 0.2 * p.x * p.y,
        grad: |p| Vector3::new(0.3 * (0.3 * p.x).exp() + 0.2 * p.y, p.z + 0.2 * p.x, p.y + 1.5 * p.z * p.z),
        hess: |p| Matrix3::new(0.09 * (0.3 * p.x).exp(), 0.2, 0.0, 0.2, 0.0, 1.0, 0.0, 1.0, 3.0 * p.z),
    }
}

fn linear() -> Ambient3 {
    Ambient3 {
        f: |p| 0.4 * p.x - 0.7 * p.y + 0.9 * p.z,
        grad: |_| Vector3::new(0.4, -0.7, 0.9),
        hess: |_| Matrix3::zeros(),
    }
}

/// Exact `(grad, covariant hess)` in orthonormal components at `(θ, φ)`.
fn exact(a: &Ambient3, th: f64, ph: f64) -> ([f64; 2], [f64; 3]) {
    let (st, ct, sp, cp) = (th.sin(), th.cos(), ph.sin(), ph.cos());
    let z = Vector3::new(st * cp, st * sp, ct);
    let z_t = Vector3::new(ct * cp, ct * sp, -st);
    let z_p = Vector3::new(-st * sp, st * cp, 0.0);
    let z_tt = -z;
    let z_tp = Vector3::new(-ct * sp, ct * cp, 0.0);
    let z_pp = Vector3::new(-st * cp, -st * sp, 0.0);
    let g = (a.grad)(z);
    let h = (a.hess)(z);
    let f_t = g.dot(&z_t);
    let f_p = g.dot(&z_p);
    let f_tt = z_t.dot(&(h * z_t)) + g.dot(&z_tt);
    let f_tp = z_t.dot(&(h * z_p)) + g.dot(&z_tp);
    let f_pp = z_p.dot(&(h * z_p)) + g.dot(&z_pp);
    let d_tp = f_tp - ct / st * f_p;
    let d_pp = f_pp + st * ct * f_t;
    ([f_t, f_p / st], [f_tt, d_tp / st, d_pp / (st * st)])
}

struct Errors {
    grad: Vec<f64>,
    hess: Vec<f64>,
}

/// Per-row max errors of grad and hess in orthonormal components.
fn row_errors(a: &Ambient3, nt: usize) -> Errors {
    let grid = SphereGrid::new(GridSpec::Sphere { n_theta: nt, n_phi: 2 * nt }).unwrap();
    let values: Vec<f64> = (0..grid.node_count())
        .map(|k| {
            let d = grid.direction(k);
            (a.f)(Vector3::new(d[0], d[1], d[2]))
        })
        .collect();
    let (grad, hess) = grid.derivatives(&values);
    let mut out = Errors { grad: vec![0.0; nt], hess: vec![0.0; nt] };
    for k in 0..grid.node_count() {
        let (th, ph) = grid.coords(k);
        let s = th.sin();
        let (eg, eh) = exact(a, th, ph);
        let row = grid.row_of(k);
        let dg = (grad[k][0] - eg[0]).hypot(grad[k][1] / s - eg[1]);
        let dh = [hess[k][0] - eh[0], hess[k][1] / s - eh[1], hess[k][2] / (s * s) - eh[2]];
        let dh = (dh[0] * dh[0] + 2.0 * dh[1] * dh[1] + dh[2] * dh[2]).sqrt();
        out.grad[row] = out.grad[row].max(dg);
        out.hess[row] = out.hess[row].max(dh);
    }
    out
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

#[test]
fn refinement_reduces_derivative_error_eightfold() {
    let a = smooth();
    for nt in [16, 32] {
        let coarse = row_errors(&a, nt);
        let fine = row_errors(&a, 2 * nt);
        let rg = max(&coarse.grad) / max(&fine.grad);
        let rh = max(&coarse.hess) / max(&fine.hess);
        assert!(rg >= 8.0, "grad ratio {rg} at {nt}");
        assert!(rh >= 8.0, "hess ratio {rh} at {nt}");
    }
}

#[test]
fn pole_gradient_error_bounded_by_mid_latitude() {
    for a in [linear(), smooth()] {
        for nt in [16, 32, 64] {
            let e = row_errors(&a, nt);
            let pole = e.grad[0].max(e.grad[1]).max(e.grad[nt - 1]).max(e.grad[nt - 2]);
            let mid = e.grad[nt / 2 - 1].max(e.grad[nt / 2]);
            assert!(pole <= 5.0 * mid, "nt {nt}: pole {pole:e} vs mid {mid:e}");
        }
    }
}

#[test]
fn odd_longitude_densities_integrate_to_zero() {
    for (nt, np) in [(16, 32), (33, 64), (64, 128)] {
        let grid = SphereGrid::new(GridSpec::Sphere { n_theta: nt, n_phi: np }).unwrap();
        let densities: [fn(f64, f64) -> f64; 3] = [
            |t, p| p.sin() * (1.0 + t.cos()),
            |t, p| (3.0 * p).sin() * t.sin().powi(3) + (p.sin() * 2.0).sin() * t.cos().exp(),
            |t, p| (p - std::f64::consts::PI).sin() * (5.0 * t).cos(),
        ];
        for d in densities {
            let values: Vec<f64> = (0..grid.node_count()).map(|k| {
                let (t, p) = grid.coords(k);
                d(t, p)
            }).collect();
            let total = grid.integrate(&values);
            assert!(total.abs() <= 1e-12, "{total:e}");
        }
    }
    let circle = SphereGrid::new(GridSpec::Circle { n_points: 64 }).unwrap();
    let values: Vec<f64> = (0..64).map(|k| circle.coords(k).1.sin().powi(3)).collect();
    assert!(circle.integrate(&values).abs() <= 1e-12);
}

#[test]
fn quadrature_matches_polynomial_moments() {
    let grid = SphereGrid::new(GridSpec::Sphere { n_theta: 24, n_phi: 48 }).unwrap();
    // ∫ z_3^{2m} over S² is 4π/(2m+1).
    for m in 0..6 {
        let values: Vec<f64> = (0..grid.node_count()).map(|k| grid.direction(k)[2].powi(2 * m)).collect();
        let expect = 4.0 * std::f64::consts::PI / (2 * m + 1) as f64;
        assert!((grid.integrate(&values) - expect).abs() <= 1e-13 * expect, "m = {m}");
    }
}
