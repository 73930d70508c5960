mod common;

use common::{choose, in_garding, p_enum, sigma_enum, sigma_without};
use proptest::prelude::*;
use starflow_core::symfun::{
    eval_curvature_function, newton_maclaurin_check, p_k, p_k_partials, sigma_k, sigma_k_partials, CurvatureFunctionSpec,
};

const REL: f64 = 1e-10;

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= REL * scale.max(1.0)
}

fn kappa_strategy() -> impl Strategy<Value = Vec<f64>> {
    (2usize..=6).prop_flat_map(|n| prop::collection::vec(-2.0f64..2.0, n))
}

/// Points concentrated near and inside the positive cone.
fn cone_kappa(n: usize) -> impl Strategy<Value = Vec<f64>> {
    (0.2f64..3.0, prop::collection::vec(-1.0f64..1.0, n)).prop_map(|(c, x)| x.iter().map(|v| c + v).collect())
}

fn concave_specs(n: usize) -> Vec<CurvatureFunctionSpec> {
    let mut specs = Vec::new();
    for l in 1..=n {
        for k in 0..l {
            specs.push(CurvatureFunctionSpec::Ratio { l, k });
        }
    }
    specs.push(CurvatureFunctionSpec::PowerMean(1.0));
    specs.push(CurvatureFunctionSpec::PowerMean(-1.0));
    specs.push(CurvatureFunctionSpec::PowerMean(0.5));
    specs.push(CurvatureFunctionSpec::Product(vec![
        (CurvatureFunctionSpec::Ratio { l: n, k: 0 }, 0.3),
        (CurvatureFunctionSpec::Ratio { l: 1, k: 0 }, 0.7),
    ]));
    specs
}

fn admissible(spec: &CurvatureFunctionSpec, kappa: &[f64]) -> bool {
    let positive = kappa.iter().all(|&v| v > 1e-3);
    match spec {
        CurvatureFunctionSpec::Ratio { l, .. } => in_garding(kappa, *l, 1e-6),
        CurvatureFunctionSpec::PowerMean(_) => positive,
        CurvatureFunctionSpec::Product(_) => positive,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn sigma_matches_subset_enumeration(kappa in kappa_strategy()) {
        for k in 0..=kappa.len() {
            let e = sigma_enum(&kappa, k);
            prop_assert!(close(sigma_k(&kappa, k).unwrap(), e, e.abs()));
            prop_assert!(close(p_k(&kappa, k).unwrap(), e / choose(kappa.len(), k), e.abs()));
        }
    }

    #[test]
    fn normalized_derivative_identities(kappa in kappa_strategy()) {
        let n = kappa.len();
        let nf = n as f64;
        for m in 1..=n {
            let d = p_k_partials(&kappa, m).unwrap();
            let pm = p_enum(&kappa, m);
            let pm1 = p_enum(&kappa, m - 1);
            let pm_next = if m < n { p_enum(&kappa, m + 1) } else { 0.0 };
            let euler: f64 = kappa.iter().zip(&d).map(|(k, g)| k * g).sum();
            let trace: f64 = d.iter().sum();
            let second: f64 = kappa.iter().zip(&d).map(|(k, g)| k * k * g).sum();
            let scale = kappa.iter().map(|v| v.abs()).fold(1.0, f64::max).powi(m as i32 + 1);
            prop_assert!(close(euler, m as f64 * pm, scale), "euler m={}", m);
            prop_assert!(close(trace, m as f64 * pm1, scale), "trace m={}", m);
            let rhs = nf * p_enum(&kappa, 1) * pm - (nf - m as f64) * pm_next;
            prop_assert!(close(second, rhs, scale * nf), "second m={}", m);
        }
    }

    #[test]
    fn elementary_partial_identities(kappa in kappa_strategy()) {
        let n = kappa.len();
        let scale = kappa.iter().map(|v| v.abs()).fold(1.0, f64::max).powi(n as i32 + 1) * choose(n, n / 2);
        for k in 0..n {
            let s_k1 = sigma_enum(&kappa, k + 1);
            let partials = sigma_k_partials(&kappa, k + 1).unwrap();
            let mut contract = 0.0;
            let mut contract2 = 0.0;
            for i in 0..n {
                let s_ki = partials[i];
                prop_assert!(close(s_ki, sigma_without(&kappa, k, i), scale));
                prop_assert!(close(s_k1, sigma_without(&kappa, k + 1, i) + kappa[i] * s_ki, scale));
                contract += kappa[i] * s_ki;
                contract2 += kappa[i] * kappa[i] * s_ki;
            }
            prop_assert!(close(contract, (k + 1) as f64 * s_k1, scale));
            let s_k2 = sigma_enum(&kappa, k + 2);
            prop_assert!(close(contract2, sigma_enum(&kappa, 1) * s_k1 - (k + 2) as f64 * s_k2, scale * n as f64));
        }
    }

    #[test]
    fn gradients_match_central_differences(kappa in (2usize..=5).prop_flat_map(cone_kappa)) {
        let n = kappa.len();
        for spec in concave_specs(n) {
            if !admissible(&spec, &kappa) {
                continue;
            }
            let ev = eval_curvature_function(&spec, &kappa).unwrap();
            let gmax = ev.gradient.iter().map(|g| g.abs()).fold(0.0, f64::max);
            for i in 0..n {
                let h = 1e-6;
                let mut kp = kappa.clone();
                let mut km = kappa.clone();
                kp[i] += h;
                km[i] -= h;
                let fd = (spec.value(&kp) - spec.value(&km)) / (2.0 * h);
                prop_assert!((fd - ev.gradient[i]).abs() <= 1e-5 * gmax.max(1e-300), "{} at {:?}: {} vs {}", spec, kappa, fd, ev.gradient[i]);
            }
        }
    }

    #[test]
    fn gradients_positive_on_cone(kappa in (2usize..=6).prop_flat_map(cone_kappa)) {
        let n = kappa.len();
        for spec in concave_specs(n).into_iter().chain([CurvatureFunctionSpec::PowerMean(3.0)]) {
            if !admissible(&spec, &kappa) {
                continue;
            }
            let ev = eval_curvature_function(&spec, &kappa).unwrap();
            prop_assert!(ev.gradient.iter().all(|&g| g > 0.0), "{} at {:?}: {:?}", spec, kappa, ev.gradient);
        }
    }

    #[test]
    fn midpoint_concavity(a in (2usize..=6).prop_flat_map(cone_kappa), b in prop::collection::vec(0.0f64..1.0, 6), c in 0.2f64..3.0) {
        let n = a.len();
        let b: Vec<f64> = b.iter().take(n).map(|v| c + v).collect();
        for spec in concave_specs(n) {
            if !admissible(&spec, &a) || !admissible(&spec, &b) {
                continue;
            }
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let lhs = spec.value(&mid);
            let rhs = 0.5 * (spec.value(&a) + spec.value(&b));
            prop_assert!(lhs >= rhs - 1e-12 * rhs.abs().max(1.0), "{} {:?} {:?}", spec, a, b);
        }
    }

    #[test]
    fn newton_maclaurin_on_cone(kappa in (2usize..=6).prop_flat_map(cone_kappa)) {
        let report = newton_maclaurin_check(&kappa);
        let scale = kappa.iter().map(|v| v.abs()).fold(1.0, f64::max).powi(2 * kappa.len() as i32);
        prop_assert!(report.holds(1e-12 * scale), "{:?} {:?}", kappa, report);
        let level = (1..=kappa.len()).take_while(|&j| p_enum(&kappa, j) > 0.0).count();
        prop_assert_eq!(report.level, level);
    }
}

#[test]
fn newton_maclaurin_equality_on_umbilic_points() {
    for n in 2..=6 {
        let report = newton_maclaurin_check(&vec![1.7; n]);
        assert!(report.equality_case);
        assert!(report.product_margins.iter().all(|m| m.2.abs() < 1e-12));
        assert!(report.chain_margins.iter().all(|m| m.abs() < 1e-12));
    }
}
