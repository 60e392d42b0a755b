//! Real-analytic 1-periodic potentials stored by Fourier coefficients.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 2.0 * PI;
const SUP_GRID: usize = 1 << 14;
const G_GRID: usize = 4096;

/// `v(theta) = sum_n c_n e^{2 pi i n theta}` with `c_{-n} = conj(c_n)` and
/// `c_0 = 0`. Only the coefficients with `n > 0` are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierPotential {
    modes: Vec<(u32, Complex64)>,
    strip_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub n: i64,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub modes: Vec<ModeSpec>,
    #[serde(default)]
    pub raw: bool,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl FourierPotential {
    /// Builds a potential from `(n, c_n)` pairs and rescales it so that
    /// `sup |v| <= 1`.
    ///
    /// Either sign of `n` may be given; when both `n` and `-n` appear they must
    /// be conjugate.
    pub fn new(modes: &[(i64, Complex64)]) -> Result<Self> {
        let mut v = Self::new_raw(modes)?;
        let sup = v.sup_norm();
        if sup > 1.0 {
            v = v.scaled(1.0 / sup);
        }
        Ok(v)
    }

    /// Same validation as [`FourierPotential::new`] but without rescaling.
    pub fn new_raw(modes: &[(i64, Complex64)]) -> Result<Self> {
        let mut pos: Vec<(u32, Complex64)> = Vec::new();
        for &(n, c) in modes {
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::InvalidPotential(format!("non-finite coefficient at n={n}")));
            }
            if n == 0 {
                if c != Complex64::new(0.0, 0.0) {
                    return Err(Error::InvalidPotential("c_0 must vanish".into()));
                }
                continue;
            }
            let (k, ck) = if n > 0 { (n as u32, c) } else { ((-n) as u32, c.conj()) };
            match pos.iter_mut().find(|(m, _)| *m == k) {
                Some((_, existing)) => {
                    let scale = existing.norm().max(ck.norm()).max(1.0);
                    if (*existing - ck).norm() > 1e-12 * scale {
                        return Err(Error::InvalidPotential(format!(
                            "c_{{-{k}}} is not the conjugate of c_{k}"
                        )));
                    }
                }
                None => pos.push((k, ck)),
            }
        }
        pos.retain(|(_, c)| c.norm() > 0.0);
        pos.sort_by_key(|(n, _)| *n);
        if pos.is_empty() {
            return Err(Error::InvalidPotential("zero potential".into()));
        }
        let g = pos.iter().fold(0, |g, (n, _)| gcd(g, *n));
        if g != 1 {
            return Err(Error::InvalidPotential(format!("smallest period is 1/{g}, not 1")));
        }
        Ok(Self { modes: pos, strip_width: f64::INFINITY })
    }

    pub fn from_spec(spec: &PotentialSpec) -> Result<Self> {
        let modes: Vec<(i64, Complex64)> =
            spec.modes.iter().map(|m| (m.n, Complex64::new(m.re, m.im))).collect();
        if spec.raw {
            Self::new_raw(&modes)
        } else {
            Self::new(&modes)
        }
    }

    pub fn to_spec(&self) -> PotentialSpec {
        PotentialSpec {
            modes: self.modes.iter().map(|&(n, c)| ModeSpec { n: n as i64, re: c.re, im: c.im }).collect(),
            raw: true,
        }
    }

    /// Named presets: `sin`, `cos`, `sin+sin4`, `cos+sin6`, `cos+0.5cos4`.
    pub fn preset(name: &str) -> Result<Self> {
        let i = Complex64::new(0.0, 1.0);
        let sin = |n: i64, amp: f64| (n, -i * (amp / 2.0));
        let cos = |n: i64, amp: f64| (n, Complex64::new(amp / 2.0, 0.0));
        match name {
            "sin" => Self::new(&[sin(1, 1.0)]),
            "cos" => Self::new(&[cos(1, 1.0)]),
            "sin+sin4" => Self::new(&[sin(1, 1.0), sin(2, 1.0)]),
            "cos+sin6" => Self::new(&[cos(1, 1.0), sin(3, 1.0)]),
            "cos+0.5cos4" => Self::new(&[cos(1, 1.0), cos(2, 0.5)]),
            _ => Err(Error::InvalidInput(format!("unknown potential preset {name:?}"))),
        }
    }

    pub fn with_strip_width(mut self, width: f64) -> Self {
        self.strip_width = width;
        self
    }

    pub fn strip_width(&self) -> f64 {
        self.strip_width
    }

    /// Highest stored mode.
    pub fn order(&self) -> u32 {
        self.modes.last().map_or(0, |m| m.0)
    }

    /// `(n, c_n)` for `n > 0`, ascending.
    pub fn modes(&self) -> &[(u32, Complex64)] {
        &self.modes
    }

    /// `c_n` for any integer `n`.
    pub fn coeff(&self, n: i64) -> Complex64 {
        let k = n.unsigned_abs() as u32;
        let c = self.modes.iter().find(|(m, _)| *m == k).map_or(Complex64::new(0.0, 0.0), |m| m.1);
        if n < 0 {
            c.conj()
        } else {
            c
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { modes: self.modes.iter().map(|&(n, c)| (n, c * s)).collect(), strip_width: self.strip_width }
    }

    /// `v(. + s)`.
    pub fn shifted(&self, s: f64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|&(n, c)| (n, c * Complex64::from_polar(1.0, TAU * n as f64 * s)))
            .collect();
        Self { modes, strip_width: self.strip_width }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut acc = 0.0;
        for &(n, c) in &self.modes {
            let (s, co) = (TAU * n as f64 * theta).sin_cos();
            acc += c.re * co - c.im * s;
        }
        2.0 * acc
    }

    pub fn derivative(&self, theta: f64) -> f64 {
        let mut acc = 0.0;
        for &(n, c) in &self.modes {
            let (s, co) = (TAU * n as f64 * theta).sin_cos();
            // Re(i 2 pi n c e^{i x}) = -2 pi n (re sin + im cos)
            acc -= TAU * n as f64 * (c.re * s + c.im * co);
        }
        2.0 * acc
    }

    /// `sup |v|`, from a dense grid refined by golden-section search.
    pub fn sup_norm(&self) -> f64 {
        let f = |t: f64| self.eval(t).abs();
        grid_max(f, 0.0, 1.0, SUP_GRID)
    }
}

/// Maximum of `f` on `[lo, hi]`: dense grid of `m` cells, then golden-section
/// refinement around the three largest grid values.
pub(crate) fn grid_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, m: usize) -> f64 {
    let h = (hi - lo) / m as f64;
    let vals: Vec<f64> = (0..=m).map(|i| f(lo + h * i as f64)).collect();
    let mut idx: Vec<usize> = (0..=m).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut best = vals[idx[0]];
    for &i in idx.iter().take(3) {
        let a = lo + h * (i as f64 - 1.0);
        let b = lo + h * (i as f64 + 1.0);
        best = best.max(golden_max(&f, a.max(lo), b.min(hi)));
    }
    best
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
        if b - a < 1e-15 {
            break;
        }
    }
    f1.max(f2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetryKind {
    Asymmetric,
    TypeI,
    TypeII,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub kind: SymmetryKind,
    pub theta_sym: Option<f64>,
    pub residual_i: f64,
    pub residual_ii: f64,
    /// True when a residual lies within a factor 10 of the tolerance on
    /// either side, so the classification is sensitive to `tol`.
    pub ambiguous: bool,
}

pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-9;

/// Type II: `v(theta + 1/2) = -v(theta)`, i.e. every even mode vanishes.
/// Type I: `v(s + theta) = -v(s - theta)`, i.e. `c_n e^{4 pi i n s} = -conj(c_n)`.
pub fn classify_symmetry(v: &FourierPotential, tol: f64) -> SymmetryReport {
    assert!(tol > 0.0, "tolerance must be positive");
    let residual_ii =
        v.modes.iter().filter(|(n, _)| n % 2 == 0).map(|(_, c)| c.norm()).fold(0.0, f64::max);

    let (n0, c0) = v.modes[0];
    let base = (PI - 2.0 * c0.arg()) / (4.0 * PI * n0 as f64);
    let mut best_s = 0.0;
    let mut residual_i = f64::INFINITY;
    for j in 0..n0 {
        let s = normalize_half(base + j as f64 / (2.0 * n0 as f64));
        let r = type_i_residual(v, s);
        if r < residual_i {
            residual_i = r;
            best_s = s;
        }
    }

    let is_i = residual_i <= tol;
    let is_ii = residual_ii <= tol;
    let kind = match (is_i, is_ii) {
        (true, true) => SymmetryKind::Both,
        (true, false) => SymmetryKind::TypeI,
        (false, true) => SymmetryKind::TypeII,
        (false, false) => SymmetryKind::Asymmetric,
    };
    let near = |r: f64| r > tol / 10.0 && r < tol * 10.0;
    SymmetryReport {
        kind,
        theta_sym: is_i.then_some(best_s),
        residual_i,
        residual_ii,
        ambiguous: near(residual_i) || near(residual_ii),
    }
}

fn type_i_residual(v: &FourierPotential, s: f64) -> f64 {
    v.modes
        .iter()
        .map(|&(n, c)| (c * Complex64::from_polar(1.0, 2.0 * TAU * n as f64 * s) + c.conj()).norm())
        .fold(0.0, f64::max)
}

/// Reduces `s` modulo 1/2 into `[0, 1/2)`, snapping values within rounding
/// of 1/2 to 0.
fn normalize_half(s: f64) -> f64 {
    let r = s.rem_euclid(0.5);
    if (0.5 - r).abs() < 1e-12 || r.abs() < 1e-12 {
        0.0
    } else {
        r
    }
}

/// Line `theta -> (theta, a theta + b)` on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub a: f64,
    pub b: f64,
}

impl SegmentParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.abs() <= 1.0) || !b.is_finite() {
            return Err(Error::InvalidInput(format!("segment needs |a| <= 1, got a={a}, b={b}")));
        }
        Ok(Self { a, b })
    }
}

/// `g(v,a,b) = max_{|theta| <= 1/2} |v'(theta) + a v'(a theta + b)|`.
pub fn g_exact(v: &FourierPotential, p: SegmentParams) -> f64 {
    let f = |t: f64| (v.derivative(t) + p.a * v.derivative(p.a * t + p.b)).abs();
    grid_max(f, -0.5, 0.5, G_GRID)
}

/// Fourier lower bound on `g(v, sign, b)`.
///
/// For `sign = -1` this is `sqrt(sum_n 4 n^2 Re(c_n e^{i pi n b})^2)`, which
/// reduces to `sqrt(sum_n 4 n^2 |c_n|^2 sin^2(pi n b))` when `v` is odd. For
/// `sign = +1` it is `sqrt(sum_n 4 n^2 |c_n|^2 cos^2(pi n b))`. Sums run over
/// all `n != 0`. The mean square of the derivative combination equals
/// `4 pi^2` times the squared value, so `g >= 2 pi * g_fourier_lower`.
pub fn g_fourier_lower(v: &FourierPotential, sign: i32, b: f64) -> f64 {
    assert!(sign == 1 || sign == -1, "sign must be +1 or -1");
    let mut acc = 0.0;
    for &(n, c) in &v.modes {
        let nf = n as f64;
        let term = if sign == -1 {
            (c * Complex64::from_polar(1.0, PI * nf * b)).re.powi(2)
        } else {
            c.norm_sqr() * (PI * nf * b).cos().powi(2)
        };
        acc += 2.0 * 4.0 * nf * nf * term;
    }
    acc.sqrt()
}

/// `int_0^1 |v'(theta) - v'(b - theta)|^2 d theta` by periodic trapezoid
/// quadrature, which is exact for trigonometric polynomials once the node
/// count exceeds twice the order.
pub fn parseval_quadrature(v: &FourierPotential, b: f64) -> f64 {
    let m = (4 * v.order() as usize + 64).next_power_of_two();
    let h = 1.0 / m as f64;
    (0..m)
        .map(|i| {
            let t = i as f64 * h;
            (v.derivative(t) - v.derivative(b - t)).powi(2)
        })
        .sum::<f64>()
        * h
}

/// Closed form of [`parseval_quadrature`]: `4 pi^2 * g_fourier_lower(v,-1,b)^2`.
pub fn parseval_fourier(v: &FourierPotential, b: f64) -> f64 {
    4.0 * PI * PI * g_fourier_lower(v, -1, b).powi(2)
}

/// Which comparison form bounds `g` for a given symmetry class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwoSidedCase {
    /// `|a+1| + b(1-b)`
    TypeIOnly,
    /// `|a-1| + |b-1/2|`
    TypeIIOnly,
    /// `|a^2-1| + b(1-b)|b-1/2|`
    Both,
    /// no symmetry: `g` is bounded below by a constant
    Asymmetric,
}

impl TwoSidedCase {
    pub fn form(self, a: f64, b: f64) -> f64 {
        match self {
            Self::TypeIOnly => (a + 1.0).abs() + b * (1.0 - b),
            Self::TypeIIOnly => (a - 1.0).abs() + (b - 0.5).abs(),
            Self::Both => (a * a - 1.0).abs() + b * (1.0 - b) * (b - 0.5).abs(),
            Self::Asymmetric => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedFit {
    pub case: TwoSidedCase,
    /// Largest `C-` with `C- * form <= g` on the grid (for the asymmetric case,
    /// the uniform minimum of `g`).
    pub c_minus: f64,
    /// Smallest `C+` with `g <= C+ * form` over grid points where the form is
    /// positive.
    pub c_plus: f64,
    /// Grid point attaining `C-`.
    pub argmin: (f64, f64),
}

/// Fits the two-sided comparison constants of `g(v,a,b)` on a grid.
///
/// A Type I potential is first shifted so its symmetry centre sits at 0.
/// Fails when the fitted lower constant is not positive.
pub fn verify_two_sided(v: &FourierPotential, grid: &[(f64, f64)]) -> Result<TwoSidedFit> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty (a,b) grid".into()));
    }
    let rep = classify_symmetry(v, DEFAULT_SYMMETRY_TOL);
    let (case, w) = match rep.kind {
        SymmetryKind::TypeI => (TwoSidedCase::TypeIOnly, v.shifted(rep.theta_sym.unwrap_or(0.0))),
        SymmetryKind::Both => (TwoSidedCase::Both, v.shifted(rep.theta_sym.unwrap_or(0.0))),
        SymmetryKind::TypeII => (TwoSidedCase::TypeIIOnly, v.clone()),
        SymmetryKind::Asymmetric => (TwoSidedCase::Asymmetric, v.clone()),
    };
    let mut c_minus = f64::INFINITY;
    let mut c_plus: f64 = 0.0;
    let mut argmin = grid[0];
    for &(a, b) in grid {
        let g = g_exact(&w, SegmentParams { a, b });
        let f = case.form(a, b);
        if f <= 0.0 {
            continue;
        }
        let r = g / f;
        if r < c_minus {
            c_minus = r;
            argmin = (a, b);
        }
        c_plus = c_plus.max(r);
    }
    if !(c_minus > 0.0) || !c_minus.is_finite() {
        return Err(Error::InvalidInput(format!("no positive lower constant on the grid ({case:?})")));
    }
    Ok(TwoSidedFit { case, c_minus, c_plus, argmin })
}

/// Truncation to modes `|n| <= d` together with the C^1 tail bound
/// `sum_{|n|>d} (1 + 2 pi |n|) |c_n|`. No rescaling is applied.
pub fn truncate(v: &FourierPotential, d: u32) -> Result<(FourierPotential, f64)> {
    if d == 0 {
        return Err(Error::InvalidPotential("truncation to order 0 leaves only c_0".into()));
    }
    let kept: Vec<(i64, Complex64)> =
        v.modes.iter().filter(|(n, _)| *n <= d).map(|&(n, c)| (n as i64, c)).collect();
    let tail: f64 = v
        .modes
        .iter()
        .filter(|(n, _)| *n > d)
        .map(|&(n, c)| 2.0 * (1.0 + TAU * n as f64) * c.norm())
        .sum();
    let w = FourierPotential::new_raw(&kept)?.with_strip_width(v.strip_width);
    Ok((w, tail))
}
