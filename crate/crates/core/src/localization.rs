//! Eigenstates of boxes and the localization diagnostics built on them:
//! decay profiles, the Poisson identity, annuli of good boxes, double
//! resonance scans and the exact zero mode of Type II potentials.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{green_columns, quick_good, GoodBadParams, OperatorFamily};
use crate::interaction::InteractionPotential;
use crate::linalg::{dense_eigenpairs, inertia_below, window_eigenpairs, EigenPair, LinalgError};
use crate::operator::{outer_boundary_pairs, BoxHamiltonian, Metric, OperatorParams, Region, Site};
use crate::potential::{classify_symmetry, FourierPotential, SymmetryKind, DEFAULT_SYMMETRY_TOL};
use crate::stats::linear_fit;

/// Boxes up to this many sites are diagonalized densely.
pub const DENSE_MAX_SITES: usize = 2500;
/// Largest box accepted by [`eigensolve`].
pub const MAX_SITES: usize = 40_000;
/// Largest number of eigenpairs a window may hold.
pub const WINDOW_LIMIT: usize = 2000;
/// `|psi|` below this is left out of decay fits.
pub const PSI_FLOOR: f64 = 1e-14;
/// Fits with `r2` below this are reported as unfit.
pub const MIN_FIT_R2: f64 = 0.8;

/// Eigenpairs of `h`, ascending, restricted to `window` when given.
///
/// Small boxes use a dense solver; larger ones need a window and use
/// shift-invert Lanczos.
pub fn eigensolve(h: &BoxHamiltonian, window: Option<(f64, f64)>, seed: u64) -> Result<Vec<EigenPair>> {
    let n = h.dim();
    if n > MAX_SITES {
        return Err(Error::InvalidInput(format!("box has {n} sites, above the cap {MAX_SITES}")));
    }
    if let Some((lo, hi)) = window {
        if !(lo <= hi) {
            return Err(Error::InvalidInput(format!("empty window [{lo}, {hi}]")));
        }
    }
    if n <= DENSE_MAX_SITES {
        let all = dense_eigenpairs(&h.dense());
        let out: Vec<EigenPair> = match window {
            Some((lo, hi)) => all.into_iter().filter(|p| p.value >= lo && p.value <= hi).collect(),
            None => all,
        };
        if out.len() > WINDOW_LIMIT {
            return Err(LinalgError::WindowTooLarge {
                lo: window.map_or(f64::NEG_INFINITY, |w| w.0),
                hi: window.map_or(f64::INFINITY, |w| w.1),
                count: out.len(),
                limit: WINDOW_LIMIT,
            }
            .into());
        }
        return Ok(out);
    }
    let (lo, hi) = window.ok_or_else(|| {
        Error::InvalidInput(format!("box has {n} sites; give an energy window for sparse extraction"))
    })?;
    Ok(window_eigenpairs(h.band(), lo, hi, WINDOW_LIMIT, seed)?)
}

/// Half-width `lambda exp(-sqrt(log lambda))` of the energy windows removed
/// around each interaction value.
pub fn exclusion_halfwidth(lambda: f64) -> f64 {
    if lambda > 1.0 {
        lambda * (-lambda.ln().sqrt()).exp()
    } else {
        0.0
    }
}

/// Allowed mid-spectrum energies: `[-lambda/2, lambda/2]` minus
/// `(U_j - w, U_j + w)` for every interaction value, as sorted closed
/// intervals. When the exclusions swallow the whole window no exclusion
/// is applied.
pub fn mid_spectrum_intervals(lambda: f64, u_values: &[f64]) -> Vec<(f64, f64)> {
    let half = 0.5 * lambda;
    let w = exclusion_halfwidth(lambda);
    let mut out = vec![(-half, half)];
    if w <= 0.0 || w >= half {
        return out;
    }
    for &u in u_values {
        let (a, b) = (u - w, u + w);
        out = out
            .into_iter()
            .flat_map(|(lo, hi)| {
                let mut parts = Vec::new();
                if lo < a {
                    parts.push((lo, hi.min(a)));
                }
                if hi > b {
                    parts.push((lo.max(b), hi));
                }
                parts
            })
            .filter(|(lo, hi)| hi > lo)
            .collect();
    }
    out
}

/// The `count` eigenpairs closest to the midpoints of the allowed
/// mid-spectrum intervals, sorted by eigenvalue.
pub fn mid_spectrum_states(h: &BoxHamiltonian, u_values: &[f64], count: usize, seed: u64) -> Result<Vec<EigenPair>> {
    let intervals = mid_spectrum_intervals(h.lambda(), u_values);
    let mut cands: Vec<(f64, EigenPair)> = Vec::new();
    for &(lo, hi) in &intervals {
        let c = 0.5 * (lo + hi);
        let (wlo, whi) = if h.dim() <= DENSE_MAX_SITES {
            (lo, hi)
        } else {
            nearest_window(h, c, lo, hi, count)
        };
        for p in eigensolve(h, Some((wlo, whi)), seed)? {
            cands.push(((p.value - c).abs(), p));
        }
    }
    cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.value.total_cmp(&y.1.value)));
    let mut out: Vec<EigenPair> = cands.into_iter().take(count).map(|c| c.1).collect();
    out.sort_by(|x, y| x.value.total_cmp(&y.value));
    Ok(out)
}

/// Smallest window `[c - r, c + r] \cap [lo, hi]` holding at least `count`
/// eigenvalues (or the whole interval).
fn nearest_window(h: &BoxHamiltonian, c: f64, lo: f64, hi: f64, count: usize) -> (f64, f64) {
    let scale = (hi - lo).max(1e-12);
    let mut r = scale / 1024.0;
    loop {
        let (a, b) = ((c - r).max(lo), (c + r).min(hi));
        let n = inertia_below(h.band(), b).saturating_sub(inertia_below(h.band(), a));
        if n >= count || (a <= lo && b >= hi) {
            return (a, b);
        }
        r *= 2.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub eigenvalue: f64,
    /// Site of the largest `|psi|`.
    pub center: Site,
    /// Fitted decay rate when the fit has `r2 >= 0.8`; `+inf` for a state
    /// supported on one site.
    pub rate: Option<f64>,
    pub raw_rate: f64,
    pub r2: f64,
    pub ipr: f64,
    pub sites_used: usize,
}

/// Fits `log |psi(n)| ~ c - rate * dist(n, center)` over sites with
/// `|psi| >= 1e-14`.
pub fn decay_profile(eigenvalue: f64, psi: &[f64], region: &Region, metric: Metric) -> Result<DecayProfile> {
    if psi.len() != region.len() || psi.is_empty() {
        return Err(Error::InvalidInput("state length differs from region size".into()));
    }
    let norm2: f64 = psi.iter().map(|x| x * x).sum();
    if !(norm2 > 0.0) {
        return Err(Error::InvalidInput("zero state".into()));
    }
    let ipr = psi.iter().map(|x| x.powi(4)).sum::<f64>() / (norm2 * norm2);
    let (imax, _) = psi
        .iter()
        .enumerate()
        .fold((0, 0.0), |best, (i, &x)| if x.abs() > best.1 { (i, x.abs()) } else { best });
    let sites = region.sites();
    let center = sites[imax];
    let scale = norm2.sqrt();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, &x) in psi.iter().enumerate() {
        let a = x.abs() / scale;
        if a >= PSI_FLOOR {
            xs.push(-(metric.dist(sites[i], center) as f64));
            ys.push(a.ln());
        }
    }
    if xs.len() == 1 {
        return Ok(DecayProfile {
            eigenvalue,
            center,
            rate: Some(f64::INFINITY),
            raw_rate: f64::INFINITY,
            r2: 1.0,
            ipr,
            sites_used: 1,
        });
    }
    let (raw_rate, r2) = match linear_fit(&xs, &ys) {
        Some(f) => (f.slope, f.r2),
        None => (0.0, 0.0),
    };
    let rate = (r2 >= MIN_FIT_R2 && raw_rate >= 0.0).then_some(raw_rate);
    Ok(DecayProfile { eigenvalue, center, rate, raw_rate, r2, ipr, sites_used: xs.len() })
}

/// Residual of the Poisson identity
/// `psi(m) = -sum_{n in Lambda, n' outside, |n - n'| = 1} G_Lambda(m, n) psi(n')`
/// for an eigenvector `psi` of the box `big` with eigenvalue `e`.
pub fn poisson_check(big: &BoxHamiltonian, psi: &[f64], e: f64, sub: &Region, m: Site) -> Result<f64> {
    let outer = big.region();
    if psi.len() != outer.len() {
        return Err(Error::InvalidInput("state length differs from box size".into()));
    }
    let pairs = outer_boundary_pairs(sub);
    if sub.sites().iter().any(|s| !outer.contains(*s)) || pairs.iter().any(|(_, np)| !outer.contains(*np)) {
        return Err(Error::InvalidInput("sub-region and its outer neighbours must lie inside the box".into()));
    }
    let im = sub.index(m).ok_or_else(|| Error::InvalidInput(format!("site {m:?} not in the sub-region")))?;
    let h = big.restrict(sub)?;
    let col = green_columns(&h, e, &[im])?.remove(0);
    let idx = |s: Site| outer.index(s).expect("checked above");
    let sum: f64 = pairs.iter().map(|&(n, np)| col[sub.index(n).expect("inside")] * psi[idx(np)]).sum();
    Ok((psi[idx(m)] + sum).abs())
}

/// Inputs of an annulus scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusConfig {
    pub theta: (f64, f64),
    pub energy: f64,
    /// Half-side of the boxes `[-N, N]^2 + n`.
    pub n: i64,
    pub r0: f64,
    pub gp: GoodBadParams,
    /// Translations of `U` that every box must be good for.
    pub translations: Vec<Site>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusResult {
    pub radius: Option<i64>,
    /// `N^{r0/4}`.
    pub width: f64,
    pub candidates: (i64, i64),
    pub boxes_checked: usize,
    /// Radii tried in order, with the first bad centre found for each.
    pub rejected: Vec<(i64, Site)>,
}

/// Smallest `R in [N^{r0/2}, N^{r0}]` such that every box `[-N,N]^2 + n`
/// with `n` in `[-R-w, R+w]^2 \ [-R+w, R-w]^2`, `w = N^{r0/4}`, is good.
pub fn annulus_scan(family: &OperatorFamily, cfg: &AnnulusConfig) -> Result<AnnulusResult> {
    if cfg.n < 1 || !(cfg.r0 > 0.0) {
        return Err(Error::InvalidInput("need N >= 1 and r0 > 0".into()));
    }
    let nf = cfg.n as f64;
    let width = nf.powf(cfg.r0 / 4.0);
    let r_lo = nf.powf(cfg.r0 / 2.0).ceil() as i64;
    let r_hi = nf.powf(cfg.r0).floor() as i64;
    let translations = if cfg.translations.is_empty() { vec![(0, 0)] } else { cfg.translations.clone() };
    let families: Vec<OperatorFamily> = translations
        .iter()
        .map(|&t| OperatorFamily { u: family.u.translate(t), ..family.clone() })
        .collect();
    let mut cache: HashMap<Site, bool> = HashMap::new();
    let mut rejected = Vec::new();
    for r in r_lo..=r_hi {
        let outer = (r as f64 + width).floor() as i64;
        let inner = r as f64 - width;
        let ring: Vec<Site> = (-outer..=outer)
            .flat_map(|a| (-outer..=outer).map(move |b| (a, b)))
            .filter(|&(a, b)| a.abs().max(b.abs()) as f64 > inner)
            .collect();
        let todo: Vec<Site> = ring.iter().copied().filter(|s| !cache.contains_key(s)).collect();
        let fresh: Vec<(Site, bool)> = todo
            .par_iter()
            .map(|&c| {
                let region = Region::cube(c, cfg.n);
                let mut good = true;
                for f in &families {
                    if !quick_good(&f.assemble(&region, cfg.theta)?, cfg.energy, &cfg.gp) {
                        good = false;
                        break;
                    }
                }
                Ok((c, good))
            })
            .collect::<Result<_>>()?;
        cache.extend(fresh);
        if let Some(&bad) = ring.iter().find(|s| !cache[s]) {
            rejected.push((r, bad));
        } else {
            return Ok(AnnulusResult {
                radius: Some(r),
                width,
                candidates: (r_lo, r_hi),
                boxes_checked: cache.len(),
                rejected,
            });
        }
    }
    Ok(AnnulusResult { radius: None, width, candidates: (r_lo, r_hi), boxes_checked: cache.len(), rejected })
}

/// Inputs of a double-resonance scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceConfig {
    pub theta_ref: (f64, f64),
    /// Half-side of the large boxes.
    pub n: i64,
    /// Half-side of the reference and small boxes.
    pub m: i64,
    pub k: i64,
    /// `c1 K <= |k| <= c2 K` in the max norm.
    pub c1: f64,
    pub c2: f64,
    pub gp: GoodBadParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceRow {
    pub k: Site,
    pub ej: f64,
    pub mbox_good: bool,
    /// Evaluated only when the small box is bad.
    pub nbox_good: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceScan {
    pub omega: f64,
    pub lambda: f64,
    pub n: i64,
    pub m: i64,
    pub k_range: (i64, i64),
    pub energies: Vec<f64>,
    /// Ordered by `(j, k)`.
    pub rows: Vec<ResonanceRow>,
    /// `(k, j)` where both boxes are bad.
    pub bad_pairs: Vec<(Site, usize)>,
}

impl ResonanceScan {
    /// Fraction of `(E_j, k)` pairs with both boxes bad.
    pub fn bad_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.bad_pairs.len() as f64 / self.rows.len() as f64
        }
    }
}

/// Lattice vectors with `c1 K <= |k|_inf <= c2 K`, lexicographic.
pub fn annulus_vectors(k: i64, c1: f64, c2: f64) -> Vec<Site> {
    let lo = (c1 * k as f64).ceil() as i64;
    let hi = (c2 * k as f64).floor() as i64;
    if lo > hi || hi < 0 {
        return Vec::new();
    }
    (-hi..=hi)
        .flat_map(|a| (-hi..=hi).map(move |b| (a, b)))
        .filter(|&(a, b)| a.abs().max(b.abs()) >= lo)
        .collect()
}

/// For every eigenvalue `E_j` of the reference box `[-M,M]^2` at
/// `theta_ref` and every `k` in the annulus, classifies the boxes
/// `[-M,M]^2` and `[-N,N]^2` at phases `theta_ref + k omega` and collects
/// the pairs where both are bad.
pub fn double_resonance_scan(family: &OperatorFamily, cfg: &ResonanceConfig) -> Result<ResonanceScan> {
    if cfg.m >= cfg.n || cfg.m < 0 {
        return Err(Error::InvalidInput(format!("need 0 <= M < N, got M={}, N={}", cfg.m, cfg.n)));
    }
    let reference = family.assemble(&Region::cube((0, 0), cfg.m), cfg.theta_ref)?;
    let energies: Vec<f64> = eigensolve(&reference, None, 0)?.into_iter().map(|p| p.value).collect();
    let ks = annulus_vectors(cfg.k, cfg.c1, cfg.c2);
    let (mbox, nbox) = (Region::cube((0, 0), cfg.m), Region::cube((0, 0), cfg.n));
    let per_k: Vec<Vec<ResonanceRow>> = ks
        .par_iter()
        .map(|&k| {
            let theta = (
                cfg.theta_ref.0 + (k.0 as f64 * family.omega).rem_euclid(1.0),
                cfg.theta_ref.1 + (k.1 as f64 * family.omega).rem_euclid(1.0),
            );
            let hm = family.assemble(&mbox, theta)?;
            let mut hn: Option<BoxHamiltonian> = None;
            let mut rows = Vec::with_capacity(energies.len());
            for &e in &energies {
                let mbox_good = quick_good(&hm, e, &cfg.gp);
                let nbox_good = if mbox_good {
                    None
                } else {
                    if hn.is_none() {
                        hn = Some(family.assemble(&nbox, theta)?);
                    }
                    Some(quick_good(hn.as_ref().expect("just built"), e, &cfg.gp))
                };
                rows.push(ResonanceRow { k, ej: e, mbox_good, nbox_good });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(ks.len() * energies.len());
    let mut bad_pairs = Vec::new();
    for j in 0..energies.len() {
        for (ik, k_rows) in per_k.iter().enumerate() {
            let row = k_rows[j];
            if !row.mbox_good && row.nbox_good == Some(false) {
                bad_pairs.push((ks[ik], j));
            }
            rows.push(row);
        }
    }
    Ok(ResonanceScan {
        omega: family.omega,
        lambda: family.lambda,
        n: cfg.n,
        m: cfg.m,
        k_range: ((cfg.c1 * cfg.k as f64).ceil() as i64, (cfg.c2 * cfg.k as f64).floor() as i64),
        energies,
        rows,
        bad_pairs,
    })
}

/// Phases `(theta1, theta1 + 1/2)` that make the zero mode exact.
pub fn zero_mode_phases(theta1: f64) -> (f64, f64) {
    (theta1, theta1 + 0.5)
}

/// `max |(H psi)(n)|` over the interior of `[-w, w]^2` for
/// `psi(n, n) = (-1)^n`, `psi = 0` off the diagonal, with `U = 0`.
pub fn zero_mode_check(v: &FourierPotential, lambda: f64, omega: f64, theta: (f64, f64), w: i64) -> Result<f64> {
    let report = classify_symmetry(v, DEFAULT_SYMMETRY_TOL);
    if !matches!(report.kind, SymmetryKind::TypeII | SymmetryKind::Both) {
        return Err(Error::NotTypeII { residual: report.residual_ii });
    }
    if w < 1 {
        return Err(Error::InvalidInput("window radius must be at least 1".into()));
    }
    let p = OperatorParams::new(lambda, omega, theta);
    let zero = InteractionPotential::zero();
    let psi = |a: i64, b: i64| if a == b { if a.rem_euclid(2) == 0 { 1.0 } else { -1.0 } } else { 0.0 };
    let mut worst: f64 = 0.0;
    for a in -(w - 1)..=(w - 1) {
        for b in -(w - 1)..=(w - 1) {
            let hop = psi(a + 1, b) + psi(a - 1, b) + psi(a, b + 1) + psi(a, b - 1);
            let diag = if a == b { crate::operator::diagonal_value((a, b), &p, v, &zero) * psi(a, b) } else { 0.0 };
            worst = worst.max((hop + diag).abs());
        }
    }
    Ok(worst)
}
