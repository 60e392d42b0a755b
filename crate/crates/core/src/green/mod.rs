//! Green's functions `G_Lambda(E) = (H_Lambda - E)^{-1}` and the good/bad
//! classification of boxes.
//!
//! A box is good at energy `E` when
//!
//! ```text
//! ||G_Lambda(E)|| < f * lambda^{-1} exp(sigma^b)
//! |G_Lambda(E)(m,n)| < f * exp(-gamma |m-n|)    for |m-n| >= sigma/4
//! ```
//!
//! with `sigma` the diameter, `|.|` the max metric and `f` a relaxation factor
//! (1 unless a scan loosens the thresholds). The norm is the spectral norm.

mod bounds;
mod sampling;

pub use bounds::*;
pub use sampling::*;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inertia_below, BandLu, BandMatrix, LinalgError};
use crate::operator::{BoxHamiltonian, Metric, Region};
use crate::stats::linear_fit;

/// Solves whose condition number exceeds this are refused as resonant.
pub const RESONANCE_CAP: f64 = 1e14;

/// Entries below this fraction of `max |G|` are left out of decay fits.
pub const FIT_NOISE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodBadParams {
    pub gamma: f64,
    pub b: f64,
    /// Multiplies both thresholds; 1 for the strict definition.
    #[serde(default = "one")]
    pub relax: f64,
}

fn one() -> f64 {
    1.0
}

impl GoodBadParams {
    pub fn new(gamma: f64, b: f64) -> Self {
        Self { gamma, b, relax: 1.0 }
    }

    pub fn relaxed(self, relax: f64) -> Self {
        Self { relax, ..self }
    }

    pub fn norm_threshold(&self, lambda: f64, sigma: i64) -> f64 {
        self.relax * (sigma as f64).powf(self.b).exp() / lambda
    }

    pub fn decay_threshold(&self, d: i64) -> f64 {
        self.relax * (-self.gamma * d as f64).exp()
    }

    /// Pairs at distance `>= sigma / 4` are subject to the decay condition.
    pub fn in_decay_range(d: i64, sigma: i64) -> bool {
        4 * d >= sigma
    }
}

/// Distance from `e` to the spectrum of `a` and the nearest eigenvalue, by
/// inertia bisection to relative accuracy about `1e-12` of the distance.
pub fn nearest_eigenvalue(a: &BandMatrix, e: f64) -> (f64, f64) {
    let n = a.dim();
    let r = a.norm_inf() + e.abs() + 1.0;
    let c = inertia_below(a, e);
    let refine = |mut lo: f64, mut hi: f64, target: usize| {
        // smallest x with #(eig < x) >= target lies in (lo, hi]
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if inertia_below(a, mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
            let gap = (e - lo).abs().min((e - hi).abs());
            if hi - lo <= 1e-13 * gap.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let below = (c > 0).then(|| refine(-r, e, c));
    let above = (c < n).then(|| refine(e, r, c + 1));
    match (below, above) {
        (Some(x), Some(y)) if e - x <= y - e => (x, e - x),
        (_, Some(y)) => (y, y - e),
        (Some(x), None) => (x, e - x),
        (None, None) => unreachable!("nonempty matrix"),
    }
}

/// `||G(E)||_2 = 1 / dist(E, spec H)`.
pub fn green_norm(h: &BoxHamiltonian, e: f64) -> f64 {
    1.0 / nearest_eigenvalue(h.band(), e).1
}

/// Dense Green's function of a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Green {
    pub energy: f64,
    /// Symmetrized `(G + G^T)/2`, indexed like the region's sites.
    pub matrix: DMatrix<f64>,
    pub spectral_norm: f64,
    pub nearest_eigenvalue: f64,
    /// `||(H - E) G - I||_inf` before symmetrization.
    pub residual: f64,
}

impl Green {
    pub fn hilbert_schmidt(&self) -> f64 {
        self.matrix.norm()
    }
}

fn factor_or_resonant(h: &BoxHamiltonian, e: f64) -> Result<(BandLu, f64, f64)> {
    let (nearest, dist) = nearest_eigenvalue(h.band(), e);
    let scale = h.band().norm_inf() + e.abs();
    if dist <= 0.0 || scale / dist > RESONANCE_CAP {
        return Err(Error::ResonantEnergy { energy: e, nearest_eigenvalue: nearest });
    }
    match BandLu::factor(h.band(), e) {
        Ok(lu) => Ok((lu, nearest, dist)),
        Err(LinalgError::Singular { .. }) => Err(Error::ResonantEnergy { energy: e, nearest_eigenvalue: nearest }),
        Err(other) => Err(other.into()),
    }
}

/// `(H_Lambda - E)^{-1}` via a banded LU factorization.
pub fn green(h: &BoxHamiltonian, e: f64) -> Result<Green> {
    let (lu, nearest, dist) = factor_or_resonant(h, e)?;
    let n = h.dim();
    let mut g = DMatrix::zeros(n, n);
    let mut row_res = vec![0.0; n];
    let mut hx = vec![0.0; n];
    for j in 0..n {
        let col = lu.inverse_column(j);
        h.matvec(&col, &mut hx);
        for i in 0..n {
            let r = hx[i] - e * col[i] - if i == j { 1.0 } else { 0.0 };
            row_res[i] += r.abs();
            g[(i, j)] = col[i];
        }
    }
    let residual = row_res.iter().fold(0.0, |m: f64, v| m.max(*v));
    let sym = (&g + g.transpose()) * 0.5;
    Ok(Green { energy: e, matrix: sym, spectral_norm: 1.0 / dist, nearest_eigenvalue: nearest, residual })
}

/// Selected columns of `G(E)`, unsymmetrized.
pub fn green_columns(h: &BoxHamiltonian, e: f64, cols: &[usize]) -> Result<Vec<Vec<f64>>> {
    let (lu, _, _) = factor_or_resonant(h, e)?;
    Ok(cols.iter().map(|&j| lu.inverse_column(j)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub r2: f64,
    pub pairs: usize,
}

/// Least-squares fit of `log |G(m,n)|` against `-dist(m,n)` over pairs with
/// `dist >= sigma/4` (distance in `metric`), skipping entries below the noise
/// floor `FIT_NOISE_FLOOR * max |G|`.
pub fn fit_green_decay(g: &DMatrix<f64>, region: &Region, metric: Metric) -> Option<DecayFit> {
    let sigma = region.diameter();
    let floor = FIT_NOISE_FLOOR * g.amax();
    let sites = region.sites();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for j in 0..sites.len() {
        for i in 0..j {
            let d = metric.dist(sites[i], sites[j]);
            let v = g[(i, j)].abs();
            if GoodBadParams::in_decay_range(Metric::Max.dist(sites[i], sites[j]), sigma) && v > floor && d > 0 {
                xs.push(-(d as f64));
                ys.push(v.ln());
            }
        }
    }
    linear_fit(&xs, &ys).map(|f| DecayFit { rate: f.slope.max(0.0), r2: f.r2, pairs: f.n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenReport {
    pub energy: f64,
    pub sigma: i64,
    /// Spectral norm of `G`.
    pub norm: f64,
    pub hs_norm: f64,
    pub gamma_fit: Option<f64>,
    pub fit_r2: Option<f64>,
    pub good_norm: bool,
    pub good_decay: bool,
    pub params: GoodBadParams,
    pub residual: f64,
}

impl GreenReport {
    pub fn good(&self) -> bool {
        self.good_norm && self.good_decay
    }
}

/// Full classification from the dense Green's function.
pub fn classify(h: &BoxHamiltonian, e: f64, gp: &GoodBadParams) -> Result<GreenReport> {
    classify_with_metric(h, e, gp, Metric::Max)
}

/// As [`classify`], with the decay-rate fit measured in `fit_metric`.
/// The good/bad flags always use the max metric.
pub fn classify_with_metric(h: &BoxHamiltonian, e: f64, gp: &GoodBadParams, fit_metric: Metric) -> Result<GreenReport> {
    let g = green(h, e)?;
    let region = h.region();
    let sigma = region.diameter();
    let good_norm = g.spectral_norm < gp.norm_threshold(h.lambda(), sigma);
    let sites = region.sites();
    let mut good_decay = true;
    'outer: for j in 0..sites.len() {
        for i in 0..sites.len() {
            let d = Metric::Max.dist(sites[i], sites[j]);
            if GoodBadParams::in_decay_range(d, sigma) && g.matrix[(i, j)].abs() >= gp.decay_threshold(d) {
                good_decay = false;
                break 'outer;
            }
        }
    }
    let fit = fit_green_decay(&g.matrix, region, fit_metric);
    Ok(GreenReport {
        energy: e,
        sigma,
        norm: g.spectral_norm,
        hs_norm: g.hilbert_schmidt(),
        gamma_fit: fit.map(|f| f.rate),
        fit_r2: fit.map(|f| f.r2),
        good_norm,
        good_decay,
        params: *gp,
        residual: g.residual,
    })
}

/// Classification of every stored translation of `U`: good only if good for
/// all of them.
pub fn classify_translations(hs: &[BoxHamiltonian], e: f64, gp: &GoodBadParams) -> Result<Vec<GreenReport>> {
    hs.iter().map(|h| classify(h, e, gp)).collect()
}

/// Good/bad decision without forming the dense Green's function.
///
/// Columns are solved one at a time and the decay test exits on the first
/// violation. The norm test uses `max |G_ij| <= ||G||_2 <= ||G||_inf`
/// (symmetric `G`) and falls back to the exact spectral norm only when these
/// bounds straddle the threshold. Resonant energies count as bad.
pub fn quick_good(h: &BoxHamiltonian, e: f64, gp: &GoodBadParams) -> bool {
    let lu = match BandLu::factor(h.band(), e) {
        Ok(lu) => lu,
        Err(_) => return false,
    };
    let region = h.region();
    let sites = region.sites();
    let sigma = region.diameter();
    let thresholds: Vec<f64> = (0..=sigma).map(|d| gp.decay_threshold(d)).collect();
    let n = sites.len();
    let mut row_sum = vec![0.0; n];
    let mut max_abs: f64 = 0.0;
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[j] = 1.0;
        lu.solve_in_place(&mut col);
        let sj = sites[j];
        for (i, &c) in col.iter().enumerate() {
            if !c.is_finite() {
                return false;
            }
            let d = Metric::Max.dist(sites[i], sj);
            let a = c.abs();
            if GoodBadParams::in_decay_range(d, sigma) && a >= thresholds[d as usize] {
                return false;
            }
            row_sum[i] += a;
            max_abs = max_abs.max(a);
        }
    }
    let thr = gp.norm_threshold(h.lambda(), sigma);
    if max_abs >= thr {
        return false;
    }
    if row_sum.iter().all(|&s| s < thr) {
        return true;
    }
    green_norm(h, e) < thr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Rect;

    fn diag_box(diag: Vec<f64>, side: i64) -> BoxHamiltonian {
        let r = Region::rect(Rect::new((0, side - 1), (0, side - 1))).unwrap();
        BoxHamiltonian::from_diagonal(&r, 1.0, diag).unwrap()
    }

    #[test]
    fn one_site_green() {
        let h = diag_box(vec![2.5], 1);
        let g = green(&h, 0.5).unwrap();
        assert!((g.matrix[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((g.spectral_norm - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_eigenvalue_is_resonant() {
        let h = diag_box(vec![0.0; 9], 3);
        // eigenvalues of the 3x3 grid are 2cos(pi j/4) + 2cos(pi k/4)
        let e = 2.0 * (std::f64::consts::PI / 4.0).cos();
        assert!(matches!(green(&h, e), Err(Error::ResonantEnergy { .. })));
        assert!(matches!(green(&h, 0.0), Err(Error::ResonantEnergy { .. })));
    }

    #[test]
    fn nearest_eigenvalue_matches_dense() {
        let diag: Vec<f64> = (0..25).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let h = diag_box(diag, 5);
        let ev = crate::linalg::dense_eigenvalues(&h.dense());
        for e in [-7.3, -0.2, 0.77, 3.1, 9.0] {
            let want = ev.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min);
            let (_, got) = nearest_eigenvalue(h.band(), e);
            assert!((got - want).abs() < 1e-10 * want.max(1.0), "{e}: {got} vs {want}");
        }
    }

    #[test]
    fn green_residual_and_symmetry() {
        let diag: Vec<f64> = (0..36).map(|i| ((i * 5) % 13) as f64 * 0.7 - 4.0).collect();
        let h = diag_box(diag, 6);
        let g = green(&h, 0.123).unwrap();
        assert!(g.residual < 1e-9 * g.spectral_norm.max(1.0));
        assert_eq!(g.matrix, g.matrix.transpose());
    }

    #[test]
    fn quick_classifier_agrees_with_dense() {
        let gp = GoodBadParams::new(1.0, 0.9);
        for seed in 0..40u64 {
            let diag: Vec<f64> = (0..49).map(|i| (((i as u64 * 2654435761 + seed * 97) % 1000) as f64 / 50.0) - 10.0).collect();
            let h = diag_box(diag, 7);
            let e = (seed as f64 * 0.37).sin() * 3.0;
            let dense = classify(&h, e, &gp).map(|r| r.good()).unwrap_or(false);
            assert_eq!(quick_good(&h, e, &gp), dense, "seed {seed}");
        }
    }
}
