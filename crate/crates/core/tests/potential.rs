use num_complex::Complex64;
use proptest::prelude::*;
use qp2loc::potential::{
    classify_symmetry, g_exact, g_fourier_lower, parseval_fourier, parseval_quadrature, FourierPotential,
    SegmentParams, SymmetryKind, DEFAULT_SYMMETRY_TOL,
};

const PRESETS: [&str; 5] = ["sin", "cos", "sin+sin4", "cos+sin6", "cos+0.5cos4"];

fn trig_poly() -> impl Strategy<Value = FourierPotential> {
    prop::collection::vec((1i64..6, -1.0f64..1.0, -1.0f64..1.0), 1..4).prop_filter_map("degenerate", |m| {
        let mut modes: Vec<(i64, Complex64)> = Vec::new();
        for (n, re, im) in m {
            if modes.iter().all(|(k, _)| *k != n) && re.hypot(im) > 1e-3 {
                modes.push((n, Complex64::new(re, im)));
            }
        }
        FourierPotential::new(&modes).ok()
    })
}

#[test]
fn preset_kinds() {
    let kind = |name| classify_symmetry(&FourierPotential::preset(name).unwrap(), DEFAULT_SYMMETRY_TOL).kind;
    assert_eq!(kind("sin"), SymmetryKind::Both);
    assert_eq!(kind("sin+sin4"), SymmetryKind::TypeI);
    assert_eq!(kind("cos+sin6"), SymmetryKind::TypeII);
    assert_eq!(kind("cos+0.5cos4"), SymmetryKind::Asymmetric);
    assert_eq!(kind("cos"), SymmetryKind::Both);
}

#[test]
fn sine_lower_bound_at_half() {
    let v = FourierPotential::preset("sin").unwrap();
    assert!((g_fourier_lower(&v, -1, 0.5) - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn presets_satisfy_gradient_bound_on_grid() {
    for name in PRESETS {
        let v = FourierPotential::preset(name).unwrap();
        for i in 0..=100 {
            let b = i as f64 / 100.0;
            for sign in [-1, 1] {
                let g = g_exact(&v, SegmentParams::new(sign as f64, b).unwrap());
                assert!(g >= g_fourier_lower(&v, sign, b) - 1e-8, "{name} sign {sign} b {b}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lower_bound_holds(v in trig_poly(), b in 0.0f64..1.0, neg in any::<bool>()) {
        let sign = if neg { -1 } else { 1 };
        let g = g_exact(&v, SegmentParams::new(sign as f64, b).unwrap());
        prop_assert!(g >= g_fourier_lower(&v, sign, b) - 1e-8);
    }

    #[test]
    fn parseval_agrees(v in trig_poly(), b in 0.0f64..1.0) {
        let q = parseval_quadrature(&v, b);
        let f = parseval_fourier(&v, b);
        prop_assert!((q - f).abs() <= 1e-8 * f.max(1e-12), "{q} vs {f}");
    }

    #[test]
    fn kind_is_shift_invariant(v in trig_poly(), s in 0.0f64..1.0) {
        let a = classify_symmetry(&v, DEFAULT_SYMMETRY_TOL);
        let b = classify_symmetry(&v.shifted(s), DEFAULT_SYMMETRY_TOL);
        prop_assume!(!a.ambiguous && !b.ambiguous);
        prop_assert_eq!(a.kind, b.kind);
        if let (Some(t0), Some(t1)) = (a.theta_sym, b.theta_sym) {
            // centres of Type I symmetry repeat with period 1/2
            let d = (t1 - (t0 - s)).rem_euclid(0.5);
            prop_assert!(d.min(0.5 - d) < 1e-7, "{t0} {t1} {s}");
        }
    }

    #[test]
    fn swapping_coordinates_keeps_g(v in trig_poly(), b in 0.0f64..1.0) {
        // theta2 = theta1 + b is theta1 = theta2 - b
        let g0 = g_exact(&v, SegmentParams::new(1.0, b).unwrap());
        let g1 = g_exact(&v, SegmentParams::new(1.0, 1.0 - b).unwrap());
        prop_assert!((g0 - g1).abs() <= 1e-9 * g0.max(1.0));
    }

    #[test]
    fn sup_norm_is_at_most_one(v in trig_poly(), t in 0.0f64..1.0) {
        prop_assert!(v.eval(t).abs() <= 1.0 + 1e-12);
    }
}
