use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qp2loc::arithmetic::{frac_mult, GOLDEN};
use qp2loc::green::{GoodBadParams, OperatorFamily};
use qp2loc::interaction::InteractionPotential;
use qp2loc::linalg::dense_eigenvalues;
use qp2loc::localization::{
    double_resonance_scan, eigensolve, poisson_check, zero_mode_check, zero_mode_phases, ResonanceConfig,
};
use qp2loc::operator::{Rect, Region};
use qp2loc::potential::FourierPotential;

fn chain(lambda: f64, theta: f64, lo: i64, len: usize, v: &FourierPotential) -> Vec<f64> {
    let mut a = DMatrix::zeros(len, len);
    for i in 0..len {
        a[(i, i)] = lambda * v.eval(frac_mult(lo + i as i64, GOLDEN) + theta);
        if i + 1 < len {
            a[(i, i + 1)] = 1.0;
            a[(i + 1, i)] = 1.0;
        }
    }
    dense_eigenvalues(&a)
}

#[test]
fn separable_spectrum_is_a_tensor_sum() {
    let v = FourierPotential::preset("cos+sin6").unwrap();
    for (lam, th) in [(0.5, (0.2, 0.7)), (5.0, (0.13, 0.41)), (30.0, (0.9, 0.05))] {
        let f = OperatorFamily::new(lam, GOLDEN, v.clone(), InteractionPotential::zero());
        let r = Region::rect(Rect::new((-3, 12), (2, 14))).unwrap();
        let ev: Vec<f64> = eigensolve(&f.assemble(&r, th).unwrap(), None, 0).unwrap().iter().map(|p| p.value).collect();
        let (e1, e2) = (chain(lam, th.0, -3, 16, &v), chain(lam, th.1, 2, 13, &v));
        let mut sums: Vec<f64> = e1.iter().flat_map(|a| e2.iter().map(move |b| a + b)).collect();
        sums.sort_by(f64::total_cmp);
        let dev = ev.iter().zip(&sums).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-10 * lam.max(1.0), "lambda {lam}: {dev}");
    }
}

#[test]
fn poisson_identity_on_random_pairs() {
    let f = OperatorFamily::new(8.0, GOLDEN, FourierPotential::preset("cos").unwrap(), InteractionPotential::hubbard(1.0));
    let r = Region::rect(Rect::new((0, 15), (0, 15))).unwrap();
    let h = f.assemble(&r, (0.13, 0.41)).unwrap();
    let pairs = eigensolve(&h, None, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let j = rng.random_range(0..pairs.len());
        let c = (rng.random_range(4..=11), rng.random_range(4..=11));
        let m = (c.0 + rng.random_range(-2..=2), c.1 + rng.random_range(-2..=2));
        let res = poisson_check(&h, &pairs[j].vector, pairs[j].value, &Region::cube(c, 3), m).unwrap();
        assert!(res < 1e-9, "{res}");
    }
}

#[test]
fn diagonal_phases_leave_a_residual() {
    let v = FourierPotential::preset("sin").unwrap();
    let r = zero_mode_check(&v, 1.0, GOLDEN, (0.1, 0.1), 10).unwrap();
    assert!(r > 0.1);
    let asym = FourierPotential::preset("cos+0.5cos4").unwrap();
    assert!(zero_mode_check(&asym, 1.0, GOLDEN, (0.1, 0.6), 10).is_err());
}

#[test]
fn looser_thresholds_shrink_the_bad_set() {
    let f = OperatorFamily::new(10.0, GOLDEN, FourierPotential::preset("cos").unwrap(), InteractionPotential::zero());
    let scan = |relax: f64| {
        let cfg = ResonanceConfig {
            theta_ref: (0.13, 0.41),
            n: 4,
            m: 2,
            k: 6,
            c1: 0.9,
            c2: 1.0,
            gp: GoodBadParams::new(1.0, 0.9).relaxed(relax),
        };
        double_resonance_scan(&f, &cfg).unwrap()
    };
    let mut prev = f64::INFINITY;
    let mut prev_pairs: Option<Vec<_>> = None;
    for relax in [0.1, 1.0, 10.0, 100.0] {
        let s = scan(relax);
        assert!(s.bad_fraction() <= prev);
        if let Some(p) = &prev_pairs {
            assert!(s.bad_pairs.iter().all(|x| p.contains(x)));
        }
        prev = s.bad_fraction();
        prev_pairs = Some(s.bad_pairs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_mode_is_exact(t in 0.0f64..1.0, lam in 0.1f64..100.0, name in prop::sample::select(vec!["sin", "cos", "cos+sin6"])) {
        let v = FourierPotential::preset(name).unwrap();
        let r = zero_mode_check(&v, lam, GOLDEN, zero_mode_phases(t), 10).unwrap();
        prop_assert!(r <= 1e-12 * lam.max(1.0), "{r}");
    }
}
