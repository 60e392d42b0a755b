//! Checks of the classical resolvent bounds against computed Green's
//! functions: the Neumann-series bound away from the level set, stability
//! under tiny diagonal perturbations, and pasting of local bounds.

use serde::{Deserialize, Serialize};

use super::{green, green_norm, GoodBadParams};
use crate::error::{Error, Result};
use crate::interaction::InteractionPotential;
use crate::operator::{internal_boundary, BoxHamiltonian, Metric, OperatorParams, Region, Site};
use crate::potential::FourierPotential;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VLevelReport {
    pub holds: bool,
    /// `min_{n, j} |v(theta1 + n1 omega) + v(theta2 + n2 omega) - (E - U_j)/lambda|`.
    pub min_margin: f64,
    pub worst_site: Site,
}

/// Whether `|v(theta1+n1 omega) + v(theta2+n2 omega) - (E-U_j)/lambda| > delta`
/// for every site of the region and every value `U_j` of the interaction.
pub fn vlevel_check(
    region: &Region,
    p: &OperatorParams,
    v: &FourierPotential,
    u: &InteractionPotential,
    e: f64,
    delta: f64,
) -> Result<VLevelReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let values = u.value_set();
    let zero = InteractionPotential::zero();
    let mut min_margin = f64::INFINITY;
    let mut worst_site = region.sites()[0];
    for &s in region.sites() {
        let w = crate::operator::diagonal_value(s, p, v, &zero) / p.lambda;
        for &uj in &values {
            let m = (w - (e - uj) / p.lambda).abs();
            if m < min_margin {
                min_margin = m;
                worst_site = s;
            }
        }
    }
    Ok(VLevelReport { holds: min_margin > delta, min_margin, worst_site })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeumannReport {
    /// `16 / (lambda delta)`.
    pub ratio: f64,
    /// `max (|G(m,n)| - (1-r)^{-1} r^{|m-n|+1})` over all pairs; `<= 0` when
    /// the entrywise bound holds.
    pub entry_violation: f64,
    /// `||G|| - 8 / (lambda delta)`.
    pub norm_violation: f64,
    pub norm: f64,
    pub predicted_norm: f64,
}

impl NeumannReport {
    pub fn holds(&self) -> bool {
        self.entry_violation <= 0.0 && self.norm_violation <= 0.0
    }
}

/// Compares `G_Lambda(E)` with the Neumann-series bounds
/// `|G(m,n)| <= (1-r)^{-1} r^{|m-n|+1}`, `r = 16/(lambda delta)`, and
/// `||G|| <= 8/(lambda delta)`, valid when every diagonal entry stays
/// `lambda delta` away from `E`.
pub fn neumann_verify(
    region: &Region,
    p: &OperatorParams,
    v: &FourierPotential,
    u: &InteractionPotential,
    e: f64,
    delta: f64,
) -> Result<NeumannReport> {
    let lv = vlevel_check(region, p, v, u, e, delta)?;
    if !lv.holds {
        return Err(Error::LevelSetHit { site: lv.worst_site, margin: lv.min_margin });
    }
    let ratio = 16.0 / (p.lambda * delta);
    if ratio >= 1.0 {
        return Err(Error::NeumannRatio { ratio });
    }
    let h = BoxHamiltonian::assemble(region, p, v, u)?;
    let g = green(&h, e)?;
    let sites = region.sites();
    let mut entry_violation = f64::NEG_INFINITY;
    let pref = 1.0 / (1.0 - ratio);
    for j in 0..sites.len() {
        for i in 0..sites.len() {
            let d = Metric::Max.dist(sites[i], sites[j]);
            let predicted = pref * ratio.powi(d as i32 + 1);
            entry_violation = entry_violation.max(g.matrix[(i, j)].abs() - predicted);
        }
    }
    let predicted_norm = 8.0 / (p.lambda * delta);
    Ok(NeumannReport {
        ratio,
        entry_violation,
        norm_violation: g.spectral_norm - predicted_norm,
        norm: g.spectral_norm,
        predicted_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub holds: bool,
    /// `2 lambda^{-1} e^{sigma^b} - ||G_2||`.
    pub norm_slack: f64,
    /// `min (2 e^{-gamma d} - |G_2(m,n)|)` over the decay range; `+inf` when
    /// the range is empty.
    pub decay_slack: f64,
    pub perturbation: f64,
    pub limit: f64,
}

/// Verifies the doubled bounds for `H2` given that `H1` is good, with
/// `||V1 - V2|| <= exp(-3 gamma_1 N)`, `gamma_1 = max(gamma, 1)`,
/// `N = sigma(Lambda)`, `N^b <= gamma_1 N / 10` and `V_i = diag(H_i)/lambda`.
pub fn perturb_verify(h1: &BoxHamiltonian, h2: &BoxHamiltonian, e: f64, gp: &GoodBadParams) -> Result<PerturbReport> {
    if h1.region() != h2.region() || h1.lambda() != h2.lambda() {
        return Err(Error::InvalidInput("both operators must live on the same region with the same lambda".into()));
    }
    let lambda = h1.lambda();
    let region = h1.region();
    let n = region.diameter();
    let gamma1 = gp.gamma.max(1.0);
    let size = h1
        .diagonal()
        .iter()
        .zip(h2.diagonal())
        .map(|(a, b)| (a - b).abs() / lambda)
        .fold(0.0, f64::max);
    let limit = (-3.0 * gamma1 * n as f64).exp();
    if size > limit {
        return Err(Error::PerturbationTooLarge { size, limit });
    }
    let lhs = (n as f64).powf(gp.b);
    let rhs = gamma1 * n as f64 / 10.0;
    if lhs > rhs {
        return Err(Error::ScaleCondition { lhs, rhs });
    }
    let strict = GoodBadParams { relax: 1.0, ..*gp };
    let g1 = green(h1, e)?;
    if g1.spectral_norm >= strict.norm_threshold(lambda, n) {
        return Err(Error::NotGood(format!("norm {} above threshold", g1.spectral_norm)));
    }
    let sites = region.sites();
    for j in 0..sites.len() {
        for i in 0..sites.len() {
            let d = Metric::Max.dist(sites[i], sites[j]);
            if GoodBadParams::in_decay_range(d, n) && g1.matrix[(i, j)].abs() >= strict.decay_threshold(d) {
                return Err(Error::NotGood(format!("decay fails at {:?}, {:?}", sites[i], sites[j])));
            }
        }
    }
    let g2 = green(h2, e)?;
    let norm_slack = 2.0 * strict.norm_threshold(lambda, n) - g2.spectral_norm;
    let mut decay_slack = f64::INFINITY;
    for j in 0..sites.len() {
        for i in 0..sites.len() {
            let d = Metric::Max.dist(sites[i], sites[j]);
            if GoodBadParams::in_decay_range(d, n) {
                decay_slack = decay_slack.min(2.0 * strict.decay_threshold(d) - g2.matrix[(i, j)].abs());
            }
        }
    }
    Ok(PerturbReport { holds: norm_slack > 0.0 && decay_slack > 0.0, norm_slack, decay_slack, perturbation: size, limit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PasteReport {
    pub holds: bool,
    pub norm: f64,
    pub bound: f64,
    /// Largest `||G_{W(m)}||` over the cover.
    pub max_window_norm: f64,
    /// Largest `|G_{W(m)}(m, n)|` over `n` in the internal boundary.
    pub max_boundary_entry: f64,
}

/// Checks the pasting bound `||G_Lambda|| <= 2 N^2 A` from local windows.
///
/// `covers` maps every site `m` of `lambda` to a window `W(m)`; each must
/// contain `m`, lie in `lambda`, have diameter `<= n`, satisfy
/// `||G_W|| < A` and `|G_W(m, k)| <= e^{-tN}` on its internal boundary
/// relative to `lambda`. Requires `4 N^2 e^{-tN} <= 1/2`.
pub fn paste_norm(
    h: &BoxHamiltonian,
    covers: &[(Site, Region)],
    e: f64,
    a: f64,
    t: f64,
    n: i64,
) -> Result<PasteReport> {
    let lambda = h.region();
    let nf = n as f64;
    let tail = (-t * nf).exp();
    if 4.0 * nf * nf * tail > 0.5 {
        return Err(Error::InvalidInput(format!("4 N^2 e^(-tN) = {} exceeds 1/2", 4.0 * nf * nf * tail)));
    }
    for &m in lambda.sites() {
        if !covers.iter().any(|(c, _)| *c == m) {
            return Err(Error::CoverHypothesis { site: m, reason: "no window".into() });
        }
    }
    let mut max_window_norm: f64 = 0.0;
    let mut max_boundary_entry: f64 = 0.0;
    for (m, w) in covers {
        let fail = |reason: String| Error::CoverHypothesis { site: *m, reason };
        if !w.contains(*m) {
            return Err(fail("window does not contain its site".into()));
        }
        if w.diameter() > n {
            return Err(fail(format!("window diameter {} exceeds N = {n}", w.diameter())));
        }
        let hw = h.restrict(w).map_err(|e| fail(e.to_string()))?;
        let gw = green(&hw, e).map_err(|e| fail(e.to_string()))?;
        if gw.spectral_norm >= a {
            return Err(fail(format!("window norm {} is not below A = {a}", gw.spectral_norm)));
        }
        max_window_norm = max_window_norm.max(gw.spectral_norm);
        let im = w.index(*m).expect("checked above");
        for k in internal_boundary(w, lambda)? {
            let v = gw.matrix[(im, w.index(k).expect("boundary lies in window"))].abs();
            if v > tail {
                return Err(fail(format!("boundary entry {v} at {k:?} exceeds e^(-tN) = {tail}")));
            }
            max_boundary_entry = max_boundary_entry.max(v);
        }
    }
    let norm = green_norm(h, e);
    let bound = 2.0 * nf * nf * a;
    Ok(PasteReport { holds: norm <= bound, norm, bound, max_window_norm, max_boundary_entry })
}

/// Windows `W(m) = [m - r, m + r]^2 \cap lambda` for every site.
pub fn cube_covers(lambda: &Region, r: i64) -> Vec<(Site, Region)> {
    lambda
        .sites()
        .iter()
        .map(|&m| {
            let w = Region::from_sites(
                lambda.sites().iter().copied().filter(|s| (s.0 - m.0).abs() <= r && (s.1 - m.1).abs() <= r),
            )
            .expect("window contains m");
            (m, w)
        })
        .collect()
}
