//! Sampling of bad phases along lines and across scales.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify_with_metric, quick_good, GoodBadParams};
use crate::error::{Error, Result};
use crate::interaction::InteractionPotential;
use crate::operator::{BoxHamiltonian, Metric, OperatorParams, Rect, Region};
use crate::potential::FourierPotential;
use crate::stats::median;

/// Straight segment in phase space from `start` to `end`. Phases are read
/// mod 1 by the potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSegment {
    pub start: (f64, f64),
    pub end: (f64, f64),
}

impl PhaseSegment {
    pub fn length(&self) -> f64 {
        (self.end.0 - self.start.0).hypot(self.end.1 - self.start.1)
    }

    pub fn point(&self, t: f64) -> (f64, f64) {
        (
            self.start.0 + t * (self.end.0 - self.start.0),
            self.start.1 + t * (self.end.1 - self.start.1),
        )
    }
}

/// Everything that fixes the operator except the phases.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorFamily {
    pub lambda: f64,
    pub omega: f64,
    pub m_int: f64,
    pub v: FourierPotential,
    pub u: InteractionPotential,
}

impl OperatorFamily {
    pub fn new(lambda: f64, omega: f64, v: FourierPotential, u: InteractionPotential) -> Self {
        Self { lambda, omega, m_int: crate::operator::DEFAULT_M_INT, v, u }
    }

    pub fn params(&self, theta: (f64, f64)) -> OperatorParams {
        OperatorParams { lambda: self.lambda, omega: self.omega, theta, m_int: self.m_int }
    }

    pub fn assemble(&self, region: &Region, theta: (f64, f64)) -> Result<BoxHamiltonian> {
        BoxHamiltonian::assemble(region, &self.params(theta), &self.v, &self.u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub samples: usize,
    pub bad: usize,
    /// `length * bad / samples`.
    pub measure: f64,
    /// 95% Wilson interval for the measure.
    pub ci_low: f64,
    pub ci_high: f64,
    pub length: f64,
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Stratified estimate of the length of `{theta in L : region bad at (theta, E)}`.
///
/// The segment is cut into `n_samples` equal strata and each stratum is
/// sampled once at its midpoint plus a seeded jitter.
pub fn badset_measure_on_line(
    line: &PhaseSegment,
    region: &Region,
    family: &OperatorFamily,
    e: f64,
    gp: &GoodBadParams,
    n_samples: usize,
    seed: u64,
) -> Result<MeasureEstimate> {
    if n_samples < 1000 {
        return Err(Error::InvalidInput(format!("need at least 1000 samples, got {n_samples}")));
    }
    let length = line.length();
    if length == 0.0 {
        return Ok(MeasureEstimate { samples: n_samples, bad: 0, measure: 0.0, ci_low: 0.0, ci_high: 0.0, length });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 1.0 / n_samples as f64;
    let ts: Vec<f64> = (0..n_samples)
        .map(|i| (i as f64 + 0.5 + rng.random_range(-0.5..0.5)) * width)
        .collect();
    let flags: Vec<bool> = ts
        .par_iter()
        .map(|&t| family.assemble(region, line.point(t)).map(|h| !quick_good(&h, e, gp)))
        .collect::<Result<_>>()?;
    let bad = flags.iter().filter(|&&b| b).count();
    let (lo, hi) = wilson_interval(bad, n_samples, 1.96);
    Ok(MeasureEstimate {
        samples: n_samples,
        bad,
        measure: length * bad as f64 / n_samples as f64,
        ci_low: length * lo,
        ci_high: length * hi,
        length,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleConfig {
    /// Diameters `N_0 < N_1 < ...`; boxes are squares of side `N + 1`.
    pub scales: Vec<i64>,
    pub boxes_per_scale: usize,
    /// Box corners are drawn uniformly from `[-spread, spread]^2`.
    pub spread: i64,
    pub theta: (f64, f64),
    pub energy: f64,
    pub gp: GoodBadParams,
    /// Allowed drop `N_j^{-delta'}` of the fitted rate between scales.
    pub drift_delta: f64,
    pub fit_metric: Metric,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub scale: i64,
    pub boxes: usize,
    pub bad: usize,
    pub bad_fraction: f64,
    /// Median of the fitted decay rates over boxes where a fit exists.
    pub gamma_fit: Option<f64>,
    /// `gamma_fit(N_j) >= gamma_fit(N_{j-1}) - N_{j-1}^{-delta'}`; absent on
    /// the first row or when either rate is missing.
    pub drift_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleResult {
    pub rows: Vec<ScaleRow>,
    pub warnings: Vec<String>,
}

/// Classifies random boxes at each scale of the ladder and tracks the fitted
/// decay rate from one scale to the next.
pub fn multiscale_sweep(family: &OperatorFamily, cfg: &MultiscaleConfig) -> Result<MultiscaleResult> {
    if cfg.scales.is_empty() {
        return Err(Error::InvalidInput("empty scale ladder".into()));
    }
    if cfg.scales.windows(2).any(|w| w[1] <= w[0]) || cfg.scales[0] < 1 {
        return Err(Error::InvalidInput("scales must be positive and increasing".into()));
    }
    let mut warnings = Vec::new();
    for w in cfg.scales.windows(2) {
        let sq = (w[0] * w[0]) as f64;
        if (w[1] as f64 - sq).abs() > 0.5 * sq {
            warnings.push(format!("scale {} is far from {}^2 = {}", w[1], w[0], w[0] * w[0]));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows: Vec<ScaleRow> = Vec::with_capacity(cfg.scales.len());
    for &n in &cfg.scales {
        let corners: Vec<(i64, i64)> = (0..cfg.boxes_per_scale)
            .map(|_| (rng.random_range(-cfg.spread..=cfg.spread), rng.random_range(-cfg.spread..=cfg.spread)))
            .collect();
        let reports: Vec<(bool, Option<f64>)> = corners
            .par_iter()
            .map(|&c| {
                let region = Region::rect(Rect::new((c.0, c.0 + n), (c.1, c.1 + n)))?;
                let h = family.assemble(&region, cfg.theta)?;
                Ok(match classify_with_metric(&h, cfg.energy, &cfg.gp, cfg.fit_metric) {
                    Ok(r) => (r.good(), r.gamma_fit),
                    Err(Error::ResonantEnergy { .. }) => (false, None),
                    Err(e) => return Err(e),
                })
            })
            .collect::<Result<_>>()?;
        let bad = reports.iter().filter(|r| !r.0).count();
        let rates: Vec<f64> = reports.iter().filter_map(|r| r.1).collect();
        let gamma_fit = if rates.is_empty() { None } else { Some(median(&rates)) };
        let drift_ok = rows.last().and_then(|prev| {
            let (g0, g1) = (prev.gamma_fit?, gamma_fit?);
            Some(g1 >= g0 - (prev.scale as f64).powf(-cfg.drift_delta))
        });
        rows.push(ScaleRow {
            scale: n,
            boxes: reports.len(),
            bad,
            bad_fraction: if reports.is_empty() { 0.0 } else { bad as f64 / reports.len() as f64 },
            gamma_fit,
            drift_ok,
        });
    }
    Ok(MultiscaleResult { rows, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(lambda: f64) -> OperatorFamily {
        OperatorFamily::new(
            lambda,
            crate::arithmetic::GOLDEN,
            FourierPotential::preset("cos").unwrap(),
            InteractionPotential::zero(),
        )
    }

    #[test]
    fn wilson_brackets_proportion() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 10, 1.96).0, 0.0);
    }

    #[test]
    fn far_energy_has_no_bad_phases() {
        let f = family(1e8);
        let r = Region::cube((0, 0), 2);
        let line = PhaseSegment { start: (0.0, 0.0), end: (1.0, 0.3) };
        let gp = GoodBadParams::new(0.5 * 1e8f64.ln(), 0.9);
        let m = badset_measure_on_line(&line, &r, &f, 3e8, &gp, 1000, 1).unwrap();
        assert_eq!(m.bad, 0);
        assert_eq!(m.measure, 0.0);
    }

    #[test]
    fn zero_length_segment() {
        let f = family(2.0);
        let r = Region::cube((0, 0), 2);
        let line = PhaseSegment { start: (0.2, 0.2), end: (0.2, 0.2) };
        let m = badset_measure_on_line(&line, &r, &f, 0.0, &GoodBadParams::new(1.0, 0.9), 1000, 1).unwrap();
        assert_eq!(m.measure, 0.0);
    }

    #[test]
    fn single_scale_ladder() {
        let cfg = MultiscaleConfig {
            scales: vec![6],
            boxes_per_scale: 4,
            spread: 50,
            theta: (0.13, 0.41),
            energy: 0.3,
            gp: GoodBadParams::new(1.0, 0.9),
            drift_delta: 0.5,
            fit_metric: Metric::Max,
            seed: 3,
        };
        let res = multiscale_sweep(&family(50.0), &cfg).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert!(res.rows[0].drift_ok.is_none());
    }
}
