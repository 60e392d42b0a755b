//! Sublevel sets of `w(theta1, theta2) = v(theta1) + v(theta2)` along lines,
//! detection of line segments inside the zero level set, and a Harnack-type
//! sublevel measurement for analytic functions of one variable.

use std::f64::consts::{E as EULER, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{classify_symmetry, grid_max, FourierPotential, SegmentParams, SymmetryKind, DEFAULT_SYMMETRY_TOL};
use crate::stats::linear_fit;

/// Number of bisections allowed below each initial cell.
pub const REFINE_DEPTH: u32 = 48;

/// Smallest grid accepted by [`sublevel_measure`].
pub const MIN_RESOLUTION: usize = 1 << 12;

const EVAL_BUDGET: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeasureResult {
    pub a: f64,
    pub b: f64,
    /// The parameter interval is `[offset, offset + length]`.
    pub offset: f64,
    pub length: f64,
    pub energy: f64,
    pub delta: f64,
    /// Lebesgue measure in the parameter `theta`.
    pub measure: f64,
    pub resolution: usize,
    pub evaluations: usize,
}

/// Measure of `{x in [lo, hi] : |g(x)| <= delta}`.
///
/// `g` returns the value and derivative; `curvature` bounds `|g''|`. Each cell
/// is certified all-in or all-out from the midpoint Taylor bound
/// `|g(x) - g(m)| <= |g'(m)| h/2 + curvature h^2/8`, and bisected otherwise,
/// down to `REFINE_DEPTH` levels where the midpoint decides.
pub fn adaptive_sublevel(
    g: impl Fn(f64) -> (f64, f64) + Sync,
    curvature: f64,
    lo: f64,
    hi: f64,
    delta: f64,
    cells: usize,
) -> (f64, usize) {
    if !(hi > lo) || cells == 0 {
        return (0.0, 0);
    }
    let h0 = (hi - lo) / cells as f64;
    let per_cell = EVAL_BUDGET / cells;
    let parts: Vec<(f64, usize)> = (0..cells)
        .into_par_iter()
        .map(|i| {
            let mut stack = vec![(lo + h0 * i as f64, h0, 0u32)];
            let mut measure = 0.0;
            let mut evals = 0usize;
            while let Some((x, h, depth)) = stack.pop() {
                let (val, der) = g(x + 0.5 * h);
                evals += 1;
                let r = der.abs() * 0.5 * h + curvature * h * h / 8.0;
                let m = val.abs();
                if m + r <= delta {
                    measure += h;
                } else if m - r > delta {
                } else if depth >= REFINE_DEPTH || evals >= per_cell.max(4 * REFINE_DEPTH as usize) {
                    if m <= delta {
                        measure += h;
                    }
                } else {
                    stack.push((x + 0.5 * h, 0.5 * h, depth + 1));
                    stack.push((x, 0.5 * h, depth + 1));
                }
            }
            (measure, evals)
        })
        .collect();
    parts.iter().fold((0.0, 0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
}

/// `w(theta) = v(theta) + v(a theta + b)` with its derivative.
fn segment_fn(v: &FourierPotential, p: SegmentParams) -> impl Fn(f64) -> (f64, f64) + Sync + '_ {
    move |t| {
        let s = p.a * t + p.b;
        (v.eval(t) + v.eval(s), v.derivative(t) + p.a * v.derivative(s))
    }
}

/// `sup |v''|` bound from the coefficients.
fn second_derivative_bound(v: &FourierPotential) -> f64 {
    v.modes().iter().map(|&(n, c)| 2.0 * (TAU * n as f64).powi(2) * c.norm()).sum()
}

/// Measure of `{theta in [0,1] : |v(theta) + v(a theta + b) - E| <= delta}`.
pub fn sublevel_measure(
    v: &FourierPotential,
    p: SegmentParams,
    e: f64,
    delta: f64,
    resolution: usize,
) -> Result<SegmentMeasureResult> {
    sublevel_measure_on(v, p, 0.0, 1.0, e, delta, resolution)
}

/// As [`sublevel_measure`] on the parameter interval `[offset, offset + length]`.
pub fn sublevel_measure_on(
    v: &FourierPotential,
    p: SegmentParams,
    offset: f64,
    length: f64,
    e: f64,
    delta: f64,
    resolution: usize,
) -> Result<SegmentMeasureResult> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidInput(format!("resolution must be at least {MIN_RESOLUTION}")));
    }
    if !(delta >= 0.0) || !(length >= 0.0) {
        return Err(Error::InvalidInput("delta and length must be nonnegative".into()));
    }
    let w = segment_fn(v, p);
    let curvature = second_derivative_bound(v) * (1.0 + p.a * p.a);
    let (measure, evaluations) =
        adaptive_sublevel(|t| { let (x, d) = w(t); (x - e, d) }, curvature, offset, offset + length, delta, resolution);
    Ok(SegmentMeasureResult {
        a: p.a,
        b: p.b,
        offset,
        length,
        energy: e,
        delta,
        measure: measure.min(length),
        resolution,
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    /// Log-log slope of measure against delta; `+inf` when every measure is 0.
    pub alpha: f64,
    pub r2: Option<f64>,
    pub measures: Vec<f64>,
}

/// Fits `|{|w - E| <= delta}| ~ C delta^alpha` over the given deltas.
pub fn fit_alpha(v: &FourierPotential, p: SegmentParams, e: f64, deltas: &[f64], resolution: usize) -> Result<AlphaFit> {
    let lo = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = deltas.iter().copied().fold(0.0, f64::max);
    if !(lo > 0.0) || hi / lo < 1e4 * (1.0 - 1e-9) {
        return Err(Error::InvalidInput("deltas must be positive and span at least four decades".into()));
    }
    let measures: Vec<f64> = deltas
        .iter()
        .map(|&d| sublevel_measure(v, p, e, d, resolution).map(|r| r.measure))
        .collect::<Result<_>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        deltas.iter().zip(&measures).filter(|(_, &m)| m > 0.0).map(|(&d, &m)| (d.ln(), m.ln())).unzip();
    if xs.is_empty() {
        return Ok(AlphaFit { alpha: f64::INFINITY, r2: None, measures });
    }
    if xs.len() == 1 {
        return Ok(AlphaFit { alpha: 0.0, r2: None, measures });
    }
    let fit = linear_fit(&xs, &ys).ok_or_else(|| Error::InvalidInput("degenerate delta list".into()))?;
    Ok(AlphaFit { alpha: fit.slope, r2: Some(fit.r2), measures })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSegment {
    /// `TypeI` or `TypeII`: the symmetry that produces the segment.
    pub kind: SymmetryKind,
    pub params: SegmentParams,
    /// `sup |v(theta) + v(a theta + b) - E|` along the segment.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSegmentSearch {
    pub segments: Vec<LevelSegment>,
    /// Smallest sup-residual over the coarse `(a, b)` grid; computed only when
    /// no predicted segment verified.
    pub search_min: Option<f64>,
    pub search_argmin: Option<SegmentParams>,
}

/// Grid sizes of the coarse search over full-length segments.
const SEARCH_A: usize = 41;
const SEARCH_B: usize = 200;
const SEARCH_THETA: usize = 256;

/// Looks for a line segment inside `{w = E}`.
///
/// The candidates are `theta2 = 2 theta_sym - theta1` for Type I and
/// `theta1 = theta2 + 1/2` for Type II; a candidate is kept when its sup
/// residual is at most `tol`. When none is kept a coarse search over `(a, b)`
/// reports the smallest sup residual found.
pub fn find_level_segment(v: &FourierPotential, e: f64, tol: f64) -> Result<LevelSegmentSearch> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let report = classify_symmetry(v, DEFAULT_SYMMETRY_TOL);
    let mut candidates = Vec::new();
    if matches!(report.kind, SymmetryKind::TypeII | SymmetryKind::Both) {
        candidates.push((SymmetryKind::TypeII, SegmentParams { a: 1.0, b: 0.5 }));
    }
    if let Some(s) = report.theta_sym {
        candidates.push((SymmetryKind::TypeI, SegmentParams { a: -1.0, b: 2.0 * s }));
    }
    let mut segments = Vec::new();
    for (kind, params) in candidates {
        let residual = segment_residual(v, params, e, 4096);
        if residual <= tol {
            segments.push(LevelSegment { kind, params, residual });
        }
    }
    if !segments.is_empty() {
        return Ok(LevelSegmentSearch { segments, search_min: None, search_argmin: None });
    }
    let grid: Vec<SegmentParams> = (0..SEARCH_A)
        .flat_map(|i| {
            let a = -1.0 + 2.0 * i as f64 / (SEARCH_A - 1) as f64;
            (0..SEARCH_B).map(move |j| SegmentParams { a, b: j as f64 / SEARCH_B as f64 })
        })
        .collect();
    let best = grid
        .par_iter()
        .map(|&p| (coarse_residual(v, p, e), p))
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.a.total_cmp(&y.1.a)).then(x.1.b.total_cmp(&y.1.b)))
        .expect("grid is nonempty");
    Ok(LevelSegmentSearch { segments, search_min: Some(best.0), search_argmin: Some(best.1) })
}

fn segment_residual(v: &FourierPotential, p: SegmentParams, e: f64, m: usize) -> f64 {
    grid_max(|t| (v.eval(t) + v.eval(p.a * t + p.b) - e).abs(), 0.0, 1.0, m)
}

fn coarse_residual(v: &FourierPotential, p: SegmentParams, e: f64) -> f64 {
    (0..=SEARCH_THETA)
        .map(|i| {
            let t = i as f64 / SEARCH_THETA as f64;
            (v.eval(t) + v.eval(p.a * t + p.b) - e).abs()
        })
        .fold(0.0, f64::max)
}

/// Number of monotonicity intervals of `theta -> w(theta)` on `[0, 1]`:
/// one more than the number of sign changes of `w'`, isolated on a grid of
/// `cells` and bisected.
pub fn monotonicity_intervals(v: &FourierPotential, p: SegmentParams, cells: usize) -> usize {
    let w = segment_fn(v, p);
    let d = |t: f64| w(t).1;
    let mut changes = 0;
    let mut prev = d(0.0);
    for i in 1..=cells {
        let cur = d(i as f64 / cells as f64);
        if prev != 0.0 && cur != 0.0 && (prev < 0.0) != (cur < 0.0) {
            changes += 1;
        }
        if cur != 0.0 {
            prev = cur;
        }
    }
    changes + 1
}

/// Analytic test function `f(z) = sum_k c_k z^k` with `f(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
}

impl PowerSeries {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.first() != Some(&1.0) {
            return Err(Error::InvalidInput("f(0) must equal 1".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for &c in self.coeffs.iter().rev() {
            d = d * x + v;
            v = v * x + c;
        }
        (v, d)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// `sup_{[-1,1]} |f''|` bound.
    fn curvature(&self) -> f64 {
        self.coeffs.iter().enumerate().skip(2).map(|(k, c)| (k * (k - 1)) as f64 * c.abs()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    /// `|{x in [-1,1] : |f(x)| <= lam}|`.
    pub measured: f64,
    /// `exp(2 log(lam) / log(M))`.
    pub reference: f64,
    pub ratio: f64,
    /// `max |f|` sampled on `|z| = 2e`.
    pub boundary_max: f64,
}

/// Measures the sublevel set `{|f| <= lam}` on `[-1, 1]` and compares it
/// with `exp(2 log lam / log M)`. The bound `|f| <= M` on `|z| <= 2e` is
/// checked on 4096 boundary points.
pub fn harnack_sublevel(f: &PowerSeries, m: f64, lam: f64) -> Result<HarnackReport> {
    if !(m > 1.0) || !(lam > 0.0 && lam < 1.0) {
        return Err(Error::InvalidInput("need M > 1 and 0 < lam < 1".into()));
    }
    let boundary_max = (0..4096)
        .map(|i| f.eval_complex(Complex64::from_polar(2.0 * EULER, TAU * i as f64 / 4096.0)).norm())
        .fold(0.0, f64::max);
    if boundary_max > m * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("|f| reaches {boundary_max} on |z| = 2e, above M = {m}")));
    }
    let (measured, _) = adaptive_sublevel(|x| f.eval(x), f.curvature(), -1.0, 1.0, lam, 1 << 14);
    let reference = (2.0 * lam.ln() / m.ln()).exp();
    Ok(HarnackReport { measured, reference, ratio: measured / reference, boundary_max })
}
