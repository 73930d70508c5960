mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;
use starflow_core::body::BodyPreset;
use starflow_core::geometry::{
    cross_check_h, geometry_from_values, gradient_identity_residual, support_gradient_residual, total_gauss_curvature,
    Ambient, GeometryFields,
};
use starflow_core::manifold::{GridSpec, SphereGrid};

fn grid(nt: usize) -> Arc<SphereGrid> {
    Arc::new(SphereGrid::new(GridSpec::Sphere { n_theta: nt, n_phi: 2 * nt }).unwrap())
}

fn body(preset: &str, nt: usize, ambient: Ambient) -> GeometryFields {
    let g = grid(nt);
    let rho = preset.parse::<BodyPreset>().unwrap().rho_values(&g).unwrap();
    geometry_from_values(&g, &rho, ambient).unwrap()
}

/// `ρ = 1 + 0.15 sinθ cosφ + 0.1 cos²θ` with analytic coordinate derivatives
/// `(ρ, ρ_θ, ρ_φ, ρ_θθ, ρ_θφ, ρ_φφ)`.
fn wobble(t: f64, p: f64) -> [f64; 6] {
    let (st, ct, sp, cp) = (t.sin(), t.cos(), p.sin(), p.cos());
    [
        1.0 + 0.15 * st * cp + 0.1 * ct * ct,
        0.15 * ct * cp - 0.2 * st * ct,
        -0.15 * st * sp,
        -0.15 * st * cp - 0.2 * (ct * ct - st * st),
        -0.15 * ct * sp,
        -0.15 * st * cp,
    ]
}

fn wobble_fields(nt: usize) -> GeometryFields {
    let g = grid(nt);
    let rho: Vec<f64> = (0..g.node_count()).map(|k| {
        let (t, p) = g.coords(k);
        wobble(t, p)[0]
    }).collect();
    geometry_from_values(&g, &rho, Ambient::Euclidean).unwrap()
}

/// Largest relative error of the mean and Gauss curvatures of the
/// ellipsoid, against the closed forms in terms of the position vector.
fn ellipsoid_curvature_error(nt: usize) -> f64 {
    let (a, b, c): (f64, f64, f64) = (1.0, 1.2, 1.5);
    let f = body("ellipsoid(1.0,1.2,1.5)", nt, Ambient::Euclidean);
    let mut worst = 0.0f64;
    for k in 0..f.node_count() {
        let z = f.grid.direction(k);
        let x = [f.rho[k] * z[0], f.rho[k] * z[1], f.rho[k] * z[2]];
        let s = x[0] * x[0] / a.powi(4) + x[1] * x[1] / b.powi(4) + x[2] * x[2] / c.powi(4);
        let gauss = 1.0 / ((a * b * c).powi(2) * s * s);
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let mean = (a * a + b * b + c * c - r2) / ((a * b * c).powi(2) * s.powf(1.5));
        let (k1, k2) = (f.kappa[k][0], f.kappa[k][1]);
        worst = worst.max(((k1 + k2) / mean - 1.0).abs()).max((k1 * k2 / gauss - 1.0).abs());
    }
    worst
}

#[test]
fn ellipsoid_curvatures_match_closed_form() {
    let coarse = ellipsoid_curvature_error(64);
    let fine = ellipsoid_curvature_error(128);
    assert!(coarse <= 1e-5, "{coarse:e}");
    assert!(coarse / fine >= 8.0, "{coarse:e} -> {fine:e}");
}

#[test]
fn generic_body_curvatures_match_fundamental_forms() {
    let f = wobble_fields(64);
    let mut worst = 0.0f64;
    for k in 0..f.node_count() {
        let (t, p) = f.grid.coords(k);
        let (st, ct, sp, cp) = (t.sin(), t.cos(), p.sin(), p.cos());
        let z = Vector3::new(st * cp, st * sp, ct);
        let z_t = Vector3::new(ct * cp, ct * sp, -st);
        let z_p = Vector3::new(-st * sp, st * cp, 0.0);
        let z_tp = Vector3::new(-ct * sp, ct * cp, 0.0);
        let z_pp = Vector3::new(-st * cp, -st * sp, 0.0);
        let [r, r_t, r_p, r_tt, r_tp, r_pp] = wobble(t, p);
        let x = r * z;
        let x_t = r_t * z + r * z_t;
        let x_p = r_p * z + r * z_p;
        let x_tt = r_tt * z + 2.0 * r_t * z_t - r * z;
        let x_tp = r_tp * z + r_t * z_p + r_p * z_t + r * z_tp;
        let x_pp = r_pp * z + 2.0 * r_p * z_p + r * z_pp;
        let exact = common::principal_curvatures_r3(x, x_t, x_p, x_tt, x_tp, x_pp);
        let scale = exact[0].abs().max(exact[1].abs());
        for i in 0..2 {
            worst = worst.max((f.kappa[k][i] - exact[i]).abs() / scale);
        }
    }
    assert!(worst <= 1e-6, "max relative curvature error {worst:e}");
}

#[test]
fn hyperbolic_gamma_profile() {
    let amb = Ambient::Hyperbolic;
    let r = 2.0 * (-1f64).exp().atanh();
    assert!((amb.gamma(r) + 1.0).abs() < 1e-14);
    for r in [0.2, 0.7, 1.5, 3.0] {
        let h = 1e-5;
        let fd = (amb.gamma(r + h) - amb.gamma(r - h)) / (2.0 * h);
        assert!((fd * r.sinh() - 1.0).abs() < 1e-9, "r = {r}");
        let fd = (amb.big_phi(r + h) - amb.big_phi(r - h)) / (2.0 * h);
        assert!((fd / r.sinh() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn radial_gradient_identity() {
    for (preset, amb) in [
        ("bumpy(1.0,0.15,5,3)", Ambient::Euclidean),
        ("ellipsoid(1.0,1.2,1.5)", Ambient::Euclidean),
        ("bumpy(0.8,0.1,4,1)", Ambient::Hyperbolic),
    ] {
        let f = body(preset, 64, amb);
        let r = gradient_identity_residual(&f);
        assert!(r <= 1e-6, "{preset} {amb}: {r:e}");
    }
}

#[test]
fn support_gradient_identity_converges() {
    for preset in ["bumpy(1.0,0.15,5,3)", "ellipsoid(1.0,1.2,1.5)"] {
        let coarse = support_gradient_residual(&body(preset, 64, Ambient::Euclidean));
        let fine = support_gradient_residual(&body(preset, 128, Ambient::Euclidean));
        assert!(coarse <= 1e-2, "{preset}: {coarse:e}");
        assert!(coarse / fine >= 4.0 || fine <= 1e-12, "{preset}: {coarse:e} -> {fine:e}");
    }
}

#[test]
fn second_fundamental_form_cross_check() {
    for (preset, amb) in [("bumpy(1.0,0.15,5,3)", Ambient::Euclidean), ("bumpy(0.8,0.1,4,1)", Ambient::Hyperbolic)] {
        let coarse = cross_check_h(&body(preset, 32, amb));
        let fine = cross_check_h(&body(preset, 64, amb));
        assert!(fine <= 1e-4 && fine < coarse, "{preset}: {coarse:e} -> {fine:e}");
    }
}

#[test]
fn gauss_bonnet_on_smooth_bodies() {
    let fields = [
        body("bumpy(1.0,0.15,5,3)", 64, Ambient::Euclidean),
        body("ellipsoid(1.0,1.2,1.5)", 64, Ambient::Euclidean),
        body("sphere(0.5)", 64, Ambient::Euclidean),
        wobble_fields(64),
    ];
    for f in &fields {
        let total = total_gauss_curvature(f).unwrap();
        assert!((total / (4.0 * PI) - 1.0).abs() <= 1e-6, "{total}");
    }
}
