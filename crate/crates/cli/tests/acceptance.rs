//! Acceptance suite: one line per criterion with its measured values and
//! runtime. Exits nonzero when any criterion fails or overruns its limit.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qp2loc::arithmetic::{frac_mult, growth_exponent, lattice_points_in_band, shrinking_band, ThinBand, GOLDEN};
use qp2loc::green::{neumann_verify, perturb_verify, vlevel_check, GoodBadParams, OperatorFamily};
use qp2loc::interaction::InteractionPotential;
use qp2loc::levelset::find_level_segment;
use qp2loc::linalg::dense_eigenvalues;
use qp2loc::localization::{
    decay_profile, double_resonance_scan, eigensolve, mid_spectrum_states, poisson_check, zero_mode_check,
    zero_mode_phases, ResonanceConfig,
};
use qp2loc::operator::{laplacian_norm, BoxHamiltonian, Metric, OperatorParams, Rect, Region};
use qp2loc::potential::{
    classify_symmetry, g_exact, g_fourier_lower, parseval_fourier, parseval_quadrature, verify_two_sided,
    FourierPotential, SegmentParams, SymmetryKind, DEFAULT_SYMMETRY_TOL,
};
use qp2loc::stats::median;
use qp2loc::Error;

type Check = Result<String, String>;

fn pass_if(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn preset(name: &str) -> FourierPotential {
    FourierPotential::preset(name).unwrap()
}

fn rect(x: (i64, i64), y: (i64, i64)) -> Region {
    Region::rect(Rect::new(x, y)).unwrap()
}

fn hopping_norm() -> Check {
    let mut regions = vec![rect((0, 0), (0, 0)), rect((0, 9), (0, 0)), rect((0, 19), (0, 6)), rect((-7, 7), (-7, 7))];
    for (w, h, c) in [(10, 10, (3, 4)), (16, 9, (-5, 2)), (20, 20, (19, 1)), (7, 13, (0, 6))] {
        regions.push(Region::elementary(Rect::new((0, w - 1), (0, h - 1)), Some(c)).unwrap());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let k = rng.random_range(5..150);
        let sites: Vec<(i64, i64)> = (0..k).map(|_| (rng.random_range(-8..8), rng.random_range(-8..8))).collect();
        regions.push(Region::from_sites(sites).unwrap());
    }
    let worst = regions.iter().map(laplacian_norm).fold(0.0, f64::max);
    let big = laplacian_norm(&rect((0, 49), (0, 49)));
    pass_if(
        worst <= 4.0 + 1e-12 && big <= 4.0 + 1e-12 && big >= 3.95,
        format!("max over {} regions {worst:.15}, 50x50 square {big:.15}", regions.len()),
    )
}

fn symmetry_classes() -> Check {
    let expect = [
        ("sin", SymmetryKind::Both),
        ("sin+sin4", SymmetryKind::TypeI),
        ("cos+sin6", SymmetryKind::TypeII),
        ("cos+0.5cos4", SymmetryKind::Asymmetric),
    ];
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, kind) in expect {
        let got = classify_symmetry(&preset(name), DEFAULT_SYMMETRY_TOL).kind;
        ok &= got == kind;
        detail.push(format!("{name}={got:?}"));
    }
    pass_if(ok, detail.join(", "))
}

fn gradient_bound() -> Check {
    let mut min_slack = f64::INFINITY;
    let mut max_rel = 0.0f64;
    let mut fits = Vec::new();
    let grid: Vec<(f64, f64)> =
        (0..=100).flat_map(|i| (0..=100).map(move |j| (-1.0 + i as f64 / 50.0, j as f64 / 100.0))).collect();
    for name in ["sin", "sin+sin4", "cos+sin6", "cos+0.5cos4"] {
        let v = preset(name);
        for j in 0..=100 {
            let b = j as f64 / 100.0;
            for sign in [-1, 1] {
                let g = g_exact(&v, SegmentParams::new(sign as f64, b).unwrap());
                min_slack = min_slack.min(g - g_fourier_lower(&v, sign, b));
            }
            let (q, f) = (parseval_quadrature(&v, b), parseval_fourier(&v, b));
            // both vanish on a symmetry segment, where only roundoff is left
            max_rel = max_rel.max((q - f).abs() / f.max(1e-12));
        }
        match verify_two_sided(&v, &grid) {
            Ok(fit) => fits.push(format!("{name} C-={:.3}", fit.c_minus)),
            Err(e) => fits.push(format!("{name} ({e})")),
        }
    }
    pass_if(
        min_slack >= -1e-8 && max_rel <= 1e-8,
        format!("min g - lower = {min_slack:.3e}, Parseval rel. error {max_rel:.3e}; two-sided: {}", fits.join(", ")),
    )
}

fn level_segments() -> Check {
    let v = preset("sin");
    let sup = (0..100_000)
        .map(|i| {
            let t2 = i as f64 / 100_000.0;
            (v.eval(t2 + 0.5) + v.eval(t2)).abs()
        })
        .fold(0.0, f64::max);
    let search = find_level_segment(&v, 0.5, 1e-12).map_err(|e| e.to_string())?;
    let smin = search.search_min.unwrap_or(0.0);
    pass_if(
        sup < 1e-12 && search.segments.is_empty() && smin > 1e-3,
        format!("sup on theta1 = theta2 + 1/2: {sup:.3e}; E = 0.5 segments {}, search min {smin:.4}", search.segments.len()),
    )
}

/// Neumann trials and perturbation trials, 500 each.
fn neumann_and_perturbation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = preset("cos");
    let u = InteractionPotential::zero();
    let (mut n_ok, mut n_skip, mut n_bad) = (0, 0, 0);
    for _ in 0..500 {
        let lam = 10f64.powf(rng.random_range(4.0..8.0));
        let (w, h) = (rng.random_range(1..=11), rng.random_range(1..=11));
        let c = (rng.random_range(-50..50), rng.random_range(-50..50));
        let r = rect((c.0, c.0 + w - 1), (c.1, c.1 + h - 1));
        let p = OperatorParams::new(lam, GOLDEN, (rng.random(), rng.random()));
        let e = lam * rng.random_range(-2.5..2.5);
        let margin = vlevel_check(&r, &p, &v, &u, e, 1e-300).unwrap().min_margin;
        let delta = margin * rng.random_range(0.1..0.99);
        if 16.0 / (lam * delta) >= 1.0 {
            n_skip += 1;
            continue;
        }
        match neumann_verify(&r, &p, &v, &u, e, delta) {
            Ok(rep) if rep.holds() => n_ok += 1,
            Ok(_) => n_bad += 1,
            Err(_) => n_skip += 1,
        }
    }
    let (mut p_ok, mut p_skip, mut p_bad) = (0, 0, 0);
    for trial in 0..500 {
        let lam = 10f64.powf(rng.random_range(4.0..8.0));
        let th = (rng.random(), rng.random());
        // alternate the default scale with gamma near 1, where the
        // admissible perturbation survives rounding
        let (r, gp, e) = if trial % 2 == 0 {
            let (w, h) = (rng.random_range(6..=11), rng.random_range(6..=11));
            let r = rect((0, w - 1), (0, h - 1));
            let e = lam * rng.random_range(-3.0..3.0);
            (r, GoodBadParams::new(0.5 * lam.ln(), 0.5), e)
        } else {
            let gamma: f64 = rng.random_range(1.0..1.1);
            // largest b with N^b <= gamma N / 10 at N = 10
            let b = gamma.ln().max(0.0) / 10f64.ln();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (rect((0, 10), (0, 10)), GoodBadParams::new(gamma, b), sign * lam * rng.random_range(2.4..3.0))
        };
        let h1 = BoxHamiltonian::assemble(&r, &OperatorParams::new(lam, GOLDEN, th), &v, &u).unwrap();
        let n = r.diameter() as f64;
        let limit = (-3.0 * gp.gamma.max(1.0) * n).exp();
        let delta: Vec<f64> = (0..r.len()).map(|_| lam * limit * rng.random_range(-0.5..0.5)).collect();
        let h2 = h1.perturbed(&delta).unwrap();
        match perturb_verify(&h1, &h2, e, &gp) {
            Ok(rep) if rep.holds => p_ok += 1,
            Ok(_) => p_bad += 1,
            Err(Error::NotGood(_) | Error::ScaleCondition { .. } | Error::ResonantEnergy { .. }) => p_skip += 1,
            Err(e) => return Err(format!("unexpected error {e}")),
        }
    }
    pass_if(
        n_bad == 0 && p_bad == 0 && n_ok > 0 && p_ok > 0,
        format!(
            "Neumann: {n_ok} verified, {n_bad} violations, {n_skip} preconditions unmet; \
             perturbation: {p_ok} verified, {p_bad} violations, {p_skip} preconditions unmet"
        ),
    )
}

fn poisson() -> Check {
    let f = OperatorFamily::new(10.0, GOLDEN, preset("cos"), InteractionPotential::hubbard(1.0));
    let r = rect((0, 24), (0, 24));
    let h = f.assemble(&r, (0.13, 0.41)).map_err(|e| e.to_string())?;
    let pairs = eigensolve(&h, None, 3).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let j = rng.random_range(0..pairs.len());
        let s = rng.random_range(1..=5);
        let c = (rng.random_range(s + 1..=23 - s), rng.random_range(s + 1..=23 - s));
        let m = (c.0 + rng.random_range(-s..=s), c.1 + rng.random_range(-s..=s));
        let res = poisson_check(&h, &pairs[j].vector, pairs[j].value, &Region::cube(c, s), m).map_err(|e| e.to_string())?;
        worst = worst.max(res);
    }
    pass_if(worst < 1e-9, format!("max residual over 100 pairs {worst:.3e}"))
}

fn chain_spectrum(lam: f64, theta: f64, lo: i64, len: usize, v: &FourierPotential) -> Vec<f64> {
    let mut a = DMatrix::zeros(len, len);
    for i in 0..len {
        a[(i, i)] = lam * v.eval(frac_mult(lo + i as i64, GOLDEN) + theta);
        if i + 1 < len {
            a[(i, i + 1)] = 1.0;
            a[(i + 1, i)] = 1.0;
        }
    }
    dense_eigenvalues(&a)
}

fn tensor_sum() -> Check {
    let mut worst = 0.0f64;
    for (name, lam, th) in [("cos", 5.0, (0.13, 0.41)), ("sin+sin4", 0.7, (0.3, 0.9)), ("cos+sin6", 12.0, (0.0, 0.5))] {
        let v = preset(name);
        let f = OperatorFamily::new(lam, GOLDEN, v.clone(), InteractionPotential::zero());
        let h = f.assemble(&rect((0, 29), (0, 29)), th).map_err(|e| e.to_string())?;
        let ev: Vec<f64> = eigensolve(&h, None, 0).map_err(|e| e.to_string())?.iter().map(|p| p.value).collect();
        let (e1, e2) = (chain_spectrum(lam, th.0, 0, 30, &v), chain_spectrum(lam, th.1, 0, 30, &v));
        let mut sums: Vec<f64> = e1.iter().flat_map(|a| e2.iter().map(move |b| a + b)).collect();
        sums.sort_by(f64::total_cmp);
        worst = ev.iter().zip(&sums).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    pass_if(worst <= 1e-10, format!("max deviation on three 30x30 boxes {worst:.3e}"))
}

/// Lyapunov exponent of `u(n+1) + u(n-1) + lam v(n omega + theta) u(n) = E u(n)`
/// from a renormalized transfer-matrix product.
fn lyapunov(lam: f64, v: &FourierPotential, theta: f64, e: f64, steps: usize) -> f64 {
    let (mut a, mut b) = (1.0f64, 0.0f64);
    let mut acc = 0.0;
    for n in 0..steps {
        let next = (e - lam * v.eval(frac_mult(n as i64, GOLDEN) + theta)) * a - b;
        b = a;
        a = next;
        let s = a.hypot(b);
        acc += s.ln();
        a /= s;
        b /= s;
    }
    acc / steps as f64
}

fn median_decay(lam: f64) -> Result<(f64, usize), String> {
    let f = OperatorFamily::new(lam, GOLDEN, preset("cos"), InteractionPotential::zero());
    let r = rect((-40, 40), (-40, 40));
    let h = f.assemble(&r, (0.13, 0.41)).map_err(|e| e.to_string())?;
    let states = mid_spectrum_states(&h, &[0.0], 20, 7).map_err(|e| e.to_string())?;
    let rates = states
        .iter()
        .map(|s| decay_profile(s.value, &s.vector, &r, Metric::Max).map(|p| p.raw_rate))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok((median(&rates), rates.len()))
}

fn decay_rates() -> Check {
    let v = preset("cos");
    let mut ok = true;
    let mut detail = Vec::new();
    for lam in [8.0f64, 20.0] {
        let target = (lam / 2.0).ln();
        // oracle: the one-dimensional factor at energies inside its spectrum
        let levels = chain_spectrum(lam, 0.13, 0, 400, &v);
        let probes: Vec<f64> = (1..=5).map(|i| levels[i * levels.len() / 6]).collect();
        let lyap = median(&probes.iter().map(|&e| lyapunov(lam, &v, 0.13, e, 200_000)).collect::<Vec<_>>());
        let (med, count) = median_decay(lam)?;
        let oracle_ok = (lyap - target).abs() <= 0.02 * target;
        let rate_ok = (med - target).abs() <= 0.25 * target && count == 20;
        ok &= oracle_ok && rate_ok;
        detail.push(format!("lambda {lam}: median {med:.3}, log(lambda/2) {target:.3}, Lyapunov {lyap:.3}"));
    }
    pass_if(ok, detail.join("; "))
}

fn brute_band_count(band: &ThinBand, omega: f64, n: i64) -> usize {
    let fr: Vec<f64> = (-n..=n).map(|k| (k as f64 * omega).rem_euclid(1.0)).collect();
    let mut count = 0;
    for &t2 in &fr {
        for &t1 in &fr {
            count += band.contains(t1, t2) as usize;
        }
    }
    count
}

fn arithmetic_counts() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    let mut total = 0;
    for _ in 0..20 {
        let n = rng.random_range(100..=2000);
        let x_lo: f64 = rng.random_range(0.0..0.5);
        let band = ThinBand::parabola_arc(
            rng.random_range(0.5..3.0),
            rng.random_range(0.0..1.0),
            10f64.powf(rng.random_range(-4.0..-2.0)),
            x_lo,
            x_lo + rng.random_range(0.1..0.5),
        );
        let fast = lattice_points_in_band(&band, GOLDEN, n).map_err(|e| e.to_string())?.len();
        let slow = brute_band_count(&band, GOLDEN, n);
        total += fast;
        mismatches += (fast != slow) as usize;
    }
    let ns = [250i64, 500, 1000, 2000, 4000];
    let counts: Vec<usize> = ns
        .iter()
        .map(|&n| lattice_points_in_band(&shrinking_band(n, 0.01, 0.05, 1.0, 4), GOLDEN, n).map(|h| h.len()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let exponent = growth_exponent(&ns, &counts);
    let shrink_ok = exponent.is_none_or(|e| e <= 0.85);
    pass_if(
        mismatches == 0 && shrink_ok,
        format!(
            "20 bands, {total} hits, {mismatches} mismatches; shrinking band counts {counts:?}, exponent {}",
            exponent.map_or("undefined (fewer than two nonzero counts)".into(), |e| format!("{e:.3}"))
        ),
    )
}

fn zero_modes() -> Check {
    let mut worst = 0.0f64;
    for name in ["sin", "cos", "cos+sin6"] {
        for t in [0.0, 0.13, 0.25, 0.77] {
            let r = zero_mode_check(&preset(name), 1.0, GOLDEN, zero_mode_phases(t), 10).map_err(|e| e.to_string())?;
            worst = worst.max(r);
        }
    }
    let diag = zero_mode_check(&preset("sin"), 1.0, GOLDEN, (0.13, 0.13), 10).map_err(|e| e.to_string())?;
    pass_if(
        worst < 1e-12 && diag > 0.1,
        format!("max residual at theta2 = theta1 + 1/2: {worst:.3e}; at theta2 = theta1: {diag:.3}"),
    )
}

fn monotone_localization() -> Check {
    let mut meds = Vec::new();
    for lam in [5.0, 10.0, 20.0, 50.0] {
        meds.push(median_decay(lam)?.0);
    }
    let monotone = meds.windows(2).all(|w| w[1] >= w[0]);
    let mut fractions = Vec::new();
    for lam in [50.0, 5.0] {
        let f = OperatorFamily::new(lam, GOLDEN, preset("cos"), InteractionPotential::zero());
        let cfg = ResonanceConfig {
            theta_ref: (0.13, 0.41),
            n: 10,
            m: 4,
            k: 40,
            c1: 0.9,
            c2: 1.0,
            gp: GoodBadParams::new(1.0, 0.9).relaxed(100.0),
        };
        fractions.push(double_resonance_scan(&f, &cfg).map_err(|e| e.to_string())?.bad_fraction());
    }
    pass_if(
        monotone && fractions[0] < fractions[1],
        format!(
            "medians {:?} for lambda 5, 10, 20, 50; bad fraction {:.4} at lambda 50, {:.4} at lambda 5",
            meds.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>(),
            fractions[0],
            fractions[1]
        ),
    )
}

const CONFIGS: [(&str, &str); 11] = [
    ("symmetry", "potential = \"sin+sin4\"\ngradient_grid = 11\n"),
    ("levelset", "potential = \"sin\"\nenergy = 0.2\ndeltas = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]\nsegments = [[1.0, 0.5]]\nrandom_segments = 2\n"),
    (
        "green-scan",
        "lambda = 20.0\nregion = { rect = [[0, 5], [0, 5]] }\nenergy = 0.7\ngrid = 6\nrelax = 100.0\n\
         line = { start = [0.0, 0.2], end = [1.0, 0.7], samples = 1000 }\n",
    ),
    ("arith-count", "n = 300\nband = { type = \"parabola_family\", kappa = 1.0, half_width = 0.001, copies = 3 }\neta_probes = 200\n"),
    ("spectrum", "lambda = 5.0\ntheta = [0.13, 0.41]\nregion = { rect = [[0, 11], [0, 11]], cut = [4, 3] }\n"),
    ("decay", "lambda = 20.0\ntheta = [0.13, 0.41]\nregion = { rect = [[-7, 7], [-7, 7]] }\ncount = 5\n"),
    ("poisson", "lambda = 10.0\ninteraction = { type = \"hubbard\", u = 1.0 }\nregion = { rect = [[0, 11], [0, 11]] }\npairs = 20\n"),
    ("double-resonance", "lambda = 20.0\ntheta = [0.13, 0.41]\nn = 4\nm = 2\nk = 6\n"),
    ("annulus", "lambda = 50.0\ntheta = [0.13, 0.41]\nenergy = 3.0\nn = 4\nr0 = 1.0\ntranslations = [[0, 0], [1, 2]]\n"),
    ("multiscale", "lambda = 50.0\ntheta = [0.13, 0.41]\nscales = [3, 5]\nenergy = 3.0\nboxes = 4\n"),
    ("decay", "lambda = 20.0\ntheta = [0.13, 0.41]\nregion = { rect = [[-5, 5], [-5, 5]] }\ncount = 4\n[sweep]\nlambda = [5.0, 50.0]\n"),
];

fn run_cli(cmd: &str, config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_qp2loc"))
        .args([cmd, "--config"])
        .arg(config)
        .args(["--seed", "42", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("{cmd} failed: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .filter(|(name, _)| name.ends_with(".csv") || name.ends_with(".json"))
        .collect()
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for (i, (cmd, text)) in CONFIGS.iter().enumerate() {
        let cfg = tmp.path().join(format!("c{i}.toml"));
        std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let (a, b) = (tmp.path().join(format!("a{i}")), tmp.path().join(format!("b{i}")));
        run_cli(cmd, &cfg, &a)?;
        run_cli(cmd, &cfg, &b)?;
        let (fa, fb) = (read_outputs(&a), read_outputs(&b));
        if fa.is_empty() || fa != fb {
            return Err(format!("{cmd}: outputs differ between runs"));
        }
        files += fa.len();
    }
    pass_if(true, format!("{} runs, {files} CSV/JSON files identical across reruns", CONFIGS.len()))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 12] = [
        ("hopping norm", Duration::from_secs(5), hopping_norm),
        ("symmetry classes", Duration::from_secs(1), symmetry_classes),
        ("gradient lower bound", Duration::from_secs(30), gradient_bound),
        ("level segments", Duration::from_secs(10), level_segments),
        ("Neumann and perturbation bounds", Duration::from_secs(120), neumann_and_perturbation),
        ("Poisson identity", Duration::from_secs(60), poisson),
        ("tensor-sum spectrum", Duration::from_secs(60), tensor_sum),
        ("decay rate vs log(lambda/2)", Duration::from_secs(600), decay_rates),
        ("lattice counts", Duration::from_secs(300), arithmetic_counts),
        ("zero modes", Duration::from_secs(1), zero_modes),
        ("monotone localization", Duration::from_secs(900), monotone_localization),
        ("CLI determinism", Duration::from_secs(600), determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let in_time = took <= *limit;
        let (ok, detail) = match result {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        failed += !ok as usize;
        println!(
            "[{}] {:>2} {name}: {detail} ({:.2}s, limit {}s{})",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over limit" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
