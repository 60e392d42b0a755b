//! Continued fractions, torus norms, finite-scale Diophantine checks and
//! lattice-orbit counting in thin planar sets.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::linear_fit;

pub const GOLDEN: f64 = 0.618_033_988_749_894_9;
pub const SQRT2_MINUS_1: f64 = 0.414_213_562_373_095_03;

/// Largest lattice range accepted by the enumerations.
pub const MAX_N: i64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyData {
    pub omega: f64,
    /// `a_1, a_2, ...` with `omega = [0; a_1, a_2, ...]`.
    pub partial_quotients: Vec<u64>,
    /// `(p_k, q_k)` for `k = 1, 2, ...`.
    pub convergents: Vec<(u64, u64)>,
    /// The expansion stopped because the last convergent reproduces `omega`
    /// to double precision.
    pub terminated: bool,
}

/// Continued fraction of `omega` in `(0,1)` to at most `depth` terms.
pub fn continued_fraction(omega: f64, depth: usize) -> Result<FrequencyData> {
    if !(omega > 0.0 && omega < 1.0) || depth == 0 {
        return Err(Error::InvalidInput(format!("need 0 < omega < 1 and depth >= 1, got {omega}, {depth}")));
    }
    let mut pq = Vec::new();
    let mut conv = Vec::new();
    let (mut p2, mut q2, mut p1, mut q1) = (1u64, 0u64, 0u64, 1u64);
    let mut x = omega;
    let mut terminated = false;
    for _ in 0..depth {
        let inv = 1.0 / x;
        let a = inv.floor();
        if !(a.is_finite()) || a >= 1e15 {
            terminated = true;
            break;
        }
        let a = a as u64;
        let (p, q) = (a * p1 + p2, a * q1 + q2);
        pq.push(a);
        conv.push((p, q));
        (p2, q2, p1, q1) = (p1, q1, p, q);
        if (omega * q as f64 - p as f64).abs() <= 2.0 * f64::EPSILON * q as f64 {
            terminated = true;
            break;
        }
        x = inv - a as f64;
        if x <= 0.0 {
            terminated = true;
            break;
        }
    }
    Ok(FrequencyData { omega, partial_quotients: pq, convergents: conv, terminated })
}

/// Signed distance from `k omega` to the nearest integer, in `[-1/2, 1/2]`,
/// using an error-free product so large `k` keep full precision.
pub fn signed_torus_dist(k: i64, omega: f64) -> f64 {
    let kf = k as f64;
    let p = kf * omega;
    let e = kf.mul_add(omega, -p);
    (p - p.round()) + e
}

/// `||k omega||`, the distance to the nearest integer.
pub fn torus_norm(k: i64, omega: f64) -> f64 {
    signed_torus_dist(k, omega).abs().min(0.5)
}

/// Fractional part `{k omega}` in `[0,1)`.
pub fn frac_mult(k: i64, omega: f64) -> f64 {
    let d = signed_torus_dist(k, omega);
    if d >= 0.0 {
        d
    } else {
        // largest double below 1 when d is below rounding of 1
        (1.0 + d).min(1.0 - f64::EPSILON / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DioCheck {
    pub passes: bool,
    /// Minimizer of `||k omega|| |k|^{1+delta}` over `1 <= k <= N`.
    pub worst_k: i64,
    pub worst_value: f64,
}

/// Checks `||k omega|| >= c |k|^{-1-delta}` for all `1 <= |k| <= n`.
pub fn diophantine_check(omega: f64, n: i64, c: f64, delta: f64) -> DioCheck {
    let (worst_k, worst_value) = worst_multiple(omega, n, delta);
    DioCheck { passes: worst_value >= c, worst_k, worst_value }
}

/// Largest `C` for which [`diophantine_check`] passes at scale `n`.
pub fn best_dio_constant(omega: f64, n: i64, delta: f64) -> f64 {
    worst_multiple(omega, n, delta).1
}

fn worst_multiple(omega: f64, n: i64, delta: f64) -> (i64, f64) {
    assert!((1..=MAX_N).contains(&n), "scale out of range");
    (1..=n)
        .map(|k| (k, torus_norm(k, omega) * (k as f64).powf(1.0 + delta)))
        .fold((1, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// A subset of the unit square with an (estimated or known) longest
/// contained segment length `eta`.
#[derive(Clone)]
pub struct ThinBand {
    membership: Arc<dyn Fn(f64, f64) -> bool + Send + Sync>,
    pub eta: f64,
    pub description: String,
}

impl fmt::Debug for ThinBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThinBand").field("eta", &self.eta).field("description", &self.description).finish()
    }
}

impl ThinBand {
    pub fn from_predicate(
        eta: f64,
        description: impl Into<String>,
        pred: impl Fn(f64, f64) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self { membership: Arc::new(pred), eta, description: description.into() }
    }

    pub fn contains(&self, t1: f64, t2: f64) -> bool {
        (self.membership)(t1, t2)
    }

    pub fn full() -> Self {
        Self::from_predicate(2f64.sqrt(), "full square", |_, _| true)
    }

    pub fn empty() -> Self {
        Self::from_predicate(0.0, "empty", |_, _| false)
    }

    /// `{ |t2 - kappa t1^2 / 2 - offset| <= half_width, x_lo <= t1 <= x_hi }`.
    ///
    /// A chord of the parabola of length `l` has sagitta about
    /// `kappa l^2 / 8`, so the longest segment fitting in the band has length
    /// about `sqrt(16 half_width / kappa)`, capped by the arc length.
    pub fn parabola_arc(kappa: f64, offset: f64, half_width: f64, x_lo: f64, x_hi: f64) -> Self {
        let eta = (16.0 * half_width / kappa).sqrt().min((x_hi - x_lo) * (1.0 + kappa));
        Self::from_predicate(
            eta,
            format!("|t2 - {kappa} t1^2/2 - {offset}| <= {half_width}, t1 in [{x_lo}, {x_hi}]"),
            move |t1, t2| t1 >= x_lo && t1 <= x_hi && (t2 - 0.5 * kappa * t1 * t1 - offset).abs() <= half_width,
        )
    }

    /// Union of `copies` parallel parabolic bands
    /// `|t2 - kappa t1^2/2 - j/copies| <= half_width`, `j = 0..copies`.
    pub fn parabola_family(kappa: f64, half_width: f64, copies: usize) -> Self {
        let eta = (16.0 * half_width / kappa).sqrt();
        let c = copies as f64;
        Self::from_predicate(
            eta,
            format!("{copies} parabolic bands of half-width {half_width}, curvature {kappa}"),
            move |t1, t2| {
                let y = (t2 - 0.5 * kappa * t1 * t1) * c;
                (y - y.round()).abs() <= half_width * c
            },
        )
    }

    /// Band between two graphs, `lower(t1) <= t2 <= upper(t1)`.
    pub fn between_graphs(
        eta: f64,
        lower: impl Fn(f64) -> f64 + Send + Sync + 'static,
        upper: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::from_predicate(eta, "between graphs", move |t1, t2| t2 >= lower(t1) && t2 <= upper(t1))
    }

    /// Longest segment inside the band estimated by random probing: segments
    /// through random band points in random directions, extended while the
    /// sampled points stay inside. This is an estimate, not a bound.
    pub fn estimate_eta(&self, probes: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut best: f64 = 0.0;
        for _ in 0..probes {
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            if !self.contains(x, y) {
                continue;
            }
            let ang = rng.random::<f64>() * std::f64::consts::PI;
            let (dx, dy) = (ang.cos(), ang.sin());
            let reach = |sgn: f64| {
                let mut lo = 0.0;
                let mut step = 1e-6;
                while step < 2.0 {
                    let t = lo + step;
                    let (px, py) = (x + sgn * t * dx, y + sgn * t * dy);
                    if !(0.0..=1.0).contains(&px) || !(0.0..=1.0).contains(&py) || !self.contains(px, py) {
                        break;
                    }
                    lo = t;
                    step *= 2.0;
                }
                lo
            };
            best = best.max(reach(1.0) + reach(-1.0));
        }
        best
    }
}

/// Table of `{k omega}` for `k = -n ..= n`, indexed by `k + n`.
pub fn frac_table(omega: f64, n: i64) -> Vec<f64> {
    (-n..=n).map(|k| frac_mult(k, omega)).collect()
}

/// All `(k1, k2)` with `|k1|, |k2| <= n` and `({k1 omega}, {k2 omega})` in the
/// band, in lexicographic order.
pub fn lattice_points_in_band(band: &ThinBand, omega: f64, n: i64) -> Result<Vec<(i64, i64)>> {
    if !(1..=MAX_N).contains(&n) {
        return Err(Error::InvalidInput(format!("lattice range must be in [1, {MAX_N}], got {n}")));
    }
    let fr = frac_table(omega, n);
    let hits: Vec<Vec<(i64, i64)>> = (-n..=n)
        .into_par_iter()
        .map(|k1| {
            let t1 = fr[(k1 + n) as usize];
            (-n..=n).filter(|k2| band.contains(t1, fr[(k2 + n) as usize])).map(|k2| (k1, k2)).collect()
        })
        .collect();
    Ok(hits.into_iter().flatten().collect())
}

/// Reference envelope `C N^{3/4 + 3 delta}` with `C = 1`.
pub fn counting_envelope(n: i64, delta: f64) -> f64 {
    (n as f64).powf(0.75 + 3.0 * delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortVectorCount {
    pub n: i64,
    pub radius: f64,
    pub count: usize,
    /// Some `1 <= |j| <= 2N` has `||j omega|| = 0`.
    pub degenerate: bool,
}

/// Counts nonzero `(j1, j2)` with `|j_i| <= 2N` whose torus displacement
/// `(d(j1 omega), d(j2 omega))` has Euclidean length at most `2 N^{-3/4}`,
/// where `d` is the signed distance to the nearest integer.
pub fn short_distance_vectors(omega: f64, n: i64) -> Result<ShortVectorCount> {
    if !(16..=MAX_N / 2).contains(&n) {
        return Err(Error::InvalidInput(format!("short vector scale must be >= 16, got {n}")));
    }
    let r = 2.0 * (n as f64).powf(-0.75);
    let mut small: Vec<f64> = Vec::new();
    let mut degenerate = false;
    for j in -2 * n..=2 * n {
        let d = signed_torus_dist(j, omega);
        if j != 0 && d.abs() <= 1e-15 {
            degenerate = true;
        }
        if d.abs() <= r {
            small.push(d);
        }
    }
    let mut count = 0usize;
    for &d1 in &small {
        for &d2 in &small {
            if d1 * d1 + d2 * d2 <= r * r {
                count += 1;
            }
        }
    }
    // (0, 0) is always counted above
    Ok(ShortVectorCount { n, radius: r, count: count - 1, degenerate })
}

/// Envelope `c1^2 N^{1/2 + 2 delta}`.
pub fn short_vector_envelope(n: i64, c1: f64, delta: f64) -> f64 {
    c1 * c1 * (n as f64).powf(0.5 + 2.0 * delta)
}

/// Least-squares growth exponent of `count(N)` in `N`, skipping zero counts.
pub fn growth_exponent(ns: &[i64], counts: &[usize]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&n, &c)| ((n as f64).ln(), (c as f64).ln()))
        .unzip();
    linear_fit(&xs, &ys).map(|f| f.slope)
}

/// Band of the shrinking family at scale `n`: `copies` parabolic bands whose
/// longest segment is `eta = n^{-1-delta-eps}`.
pub fn shrinking_band(n: i64, delta: f64, eps: f64, kappa: f64, copies: usize) -> ThinBand {
    let eta = (n as f64).powf(-1.0 - delta - eps);
    let half_width = kappa * eta * eta / 16.0;
    ThinBand::parabola_family(kappa, half_width, copies)
}

/// Serializable band description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BandSpec {
    Full,
    Empty,
    ParabolaArc { kappa: f64, offset: f64, half_width: f64, x_lo: f64, x_hi: f64 },
    ParabolaFamily { kappa: f64, half_width: f64, copies: usize },
    Shrinking { delta: f64, eps: f64, kappa: f64, copies: usize },
}

impl BandSpec {
    pub fn build(&self, n: i64) -> ThinBand {
        match *self {
            Self::Full => ThinBand::full(),
            Self::Empty => ThinBand::empty(),
            Self::ParabolaArc { kappa, offset, half_width, x_lo, x_hi } => {
                ThinBand::parabola_arc(kappa, offset, half_width, x_lo, x_hi)
            }
            Self::ParabolaFamily { kappa, half_width, copies } => {
                ThinBand::parabola_family(kappa, half_width, copies)
            }
            Self::Shrinking { delta, eps, kappa, copies } => shrinking_band(n, delta, eps, kappa, copies),
        }
    }
}
