//! Finite regions of Z^2 and the restricted Hamiltonians on them.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::arithmetic::frac_mult;
use crate::error::{Error, Result};
use crate::interaction::InteractionPotential;
use crate::linalg::{inertia_below, BandMatrix};
use crate::potential::FourierPotential;

pub type Site = (i64, i64);

/// Lattice distance used for decay thresholds and fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `max(|a1-b1|, |a2-b2|)`, the metric of the region diameter.
    #[default]
    Max,
    /// `|a1-b1| + |a2-b2|`, the lattice path length.
    L1,
}

impl Metric {
    pub fn dist(self, a: Site, b: Site) -> i64 {
        let (d1, d2) = ((a.0 - b.0).abs(), (a.1 - b.1).abs());
        match self {
            Self::Max => d1.max(d2),
            Self::L1 => d1 + d2,
        }
    }
}

/// Closed integer rectangle `[a1,b1] x [a2,b2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: (i64, i64),
    pub y: (i64, i64),
}

impl Rect {
    pub fn new(x: (i64, i64), y: (i64, i64)) -> Self {
        Self { x, y }
    }

    /// `[c1-r, c1+r] x [c2-r, c2+r]`.
    pub fn centered(c: Site, r: i64) -> Self {
        Self { x: (c.0 - r, c.0 + r), y: (c.1 - r, c.1 + r) }
    }

    pub fn is_empty(&self) -> bool {
        self.x.0 > self.x.1 || self.y.0 > self.y.1
    }

    pub fn contains(&self, s: Site) -> bool {
        s.0 >= self.x.0 && s.0 <= self.x.1 && s.1 >= self.y.0 && s.1 <= self.y.1
    }

    pub fn width(&self) -> i64 {
        self.x.1 - self.x.0 + 1
    }

    pub fn height(&self) -> i64 {
        self.y.1 - self.y.0 + 1
    }

    pub fn area(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.width() * self.height()) as usize
        }
    }

    pub fn intersect(&self, o: &Rect) -> Rect {
        Rect { x: (self.x.0.max(o.x.0), self.x.1.min(o.x.1)), y: (self.y.0.max(o.y.0), self.y.1.min(o.y.1)) }
    }

    pub fn translate(&self, t: Site) -> Rect {
        Rect { x: (self.x.0 + t.0, self.x.1 + t.0), y: (self.y.0 + t.1, self.y.1 + t.1) }
    }
}

/// How a region was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionShape {
    /// `rect \ (rect + cut)`, or the rectangle itself when `cut` is `None`.
    Elementary { rect: Rect, cut: Option<Site> },
    General,
}

/// Finite set of lattice sites in canonical row-major order (`n1` major,
/// `n2` minor) with constant-time index lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    shape: RegionShape,
    sites: Vec<Site>,
    bbox: Rect,
    lookup: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl Region {
    fn from_sorted(shape: RegionShape, sites: Vec<Site>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let bbox = Rect {
            x: (sites.iter().map(|s| s.0).min().unwrap(), sites.iter().map(|s| s.0).max().unwrap()),
            y: (sites.iter().map(|s| s.1).min().unwrap(), sites.iter().map(|s| s.1).max().unwrap()),
        };
        let mut lookup = vec![ABSENT; bbox.area()];
        for (i, &s) in sites.iter().enumerate() {
            let k = ((s.0 - bbox.x.0) * bbox.height() + (s.1 - bbox.y.0)) as usize;
            lookup[k] = i as u32;
        }
        Ok(Self { shape, sites, bbox, lookup })
    }

    /// Elementary region `rect \ (rect + cut)`.
    pub fn elementary(rect: Rect, cut: Option<Site>) -> Result<Self> {
        if rect.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if cut == Some((0, 0)) {
            return Err(Error::ZeroCut);
        }
        let removed = cut.map(|t| rect.translate(t));
        let mut sites = Vec::with_capacity(rect.area());
        for n1 in rect.x.0..=rect.x.1 {
            for n2 in rect.y.0..=rect.y.1 {
                if removed.is_some_and(|r| r.contains((n1, n2))) {
                    continue;
                }
                sites.push((n1, n2));
            }
        }
        Self::from_sorted(RegionShape::Elementary { rect, cut }, sites)
    }

    pub fn rect(rect: Rect) -> Result<Self> {
        Self::elementary(rect, None)
    }

    /// `[-n, n]^2` translated to `center`.
    pub fn cube(center: Site, n: i64) -> Self {
        Self::rect(Rect::centered(center, n)).expect("nonempty cube")
    }

    pub fn from_sites(sites: impl IntoIterator<Item = Site>) -> Result<Self> {
        let mut v: Vec<Site> = sites.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self::from_sorted(RegionShape::General, v)
    }

    pub fn shape(&self) -> RegionShape {
        self.shape
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn index(&self, s: Site) -> Option<usize> {
        if !self.bbox.contains(s) {
            return None;
        }
        let k = ((s.0 - self.bbox.x.0) * self.bbox.height() + (s.1 - self.bbox.y.0)) as usize;
        let i = self.lookup[k];
        (i != ABSENT).then_some(i as usize)
    }

    pub fn contains(&self, s: Site) -> bool {
        self.index(s).is_some()
    }

    /// Diameter in the max metric.
    pub fn diameter(&self) -> i64 {
        (self.bbox.x.1 - self.bbox.x.0).max(self.bbox.y.1 - self.bbox.y.0)
    }

    /// Nearest-neighbour pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::with_capacity(2 * self.len());
        for (i, &(a, b)) in self.sites.iter().enumerate() {
            for nb in [(a + 1, b), (a, b + 1)] {
                if let Some(j) = self.index(nb) {
                    e.push((i, j));
                }
            }
        }
        e
    }

    pub fn half_bandwidth(&self) -> usize {
        self.edges().iter().map(|&(i, j)| j - i).max().unwrap_or(0)
    }

    pub fn translate(&self, t: Site) -> Region {
        let sites = self.sites.iter().map(|s| (s.0 + t.0, s.1 + t.1)).collect();
        let shape = match self.shape {
            RegionShape::Elementary { rect, cut } => RegionShape::Elementary { rect: rect.translate(t), cut },
            RegionShape::General => RegionShape::General,
        };
        Self::from_sorted(shape, sites).expect("translation keeps sites")
    }

    /// Whether the site set is a rectangle or a rectangle minus a translate
    /// of itself.
    pub fn is_elementary(&self) -> bool {
        let r = self.bbox;
        if self.len() == r.area() {
            return true;
        }
        let removed: Vec<Site> = (r.x.0..=r.x.1)
            .flat_map(|a| (r.y.0..=r.y.1).map(move |b| (a, b)))
            .filter(|s| !self.contains(*s))
            .collect();
        let hole = Rect {
            x: (removed.iter().map(|s| s.0).min().unwrap(), removed.iter().map(|s| s.0).max().unwrap()),
            y: (removed.iter().map(|s| s.1).min().unwrap(), removed.iter().map(|s| s.1).max().unwrap()),
        };
        if hole.area() != removed.len() {
            return false;
        }
        let axis = |(c, d): (i64, i64), (a, b): (i64, i64)| -> Option<i64> {
            if c == a && d == b {
                Some(0)
            } else if d == b && c > a {
                Some(c - a)
            } else if c == a && d < b {
                Some(d - b)
            } else {
                None
            }
        };
        matches!((axis(hole.x, r.x), axis(hole.y, r.y)), (Some(t1), Some(t2)) if (t1, t2) != (0, 0))
    }
}

/// Sites of `w` with a nearest neighbour in `lambda \ w`.
pub fn internal_boundary(w: &Region, lambda: &Region) -> Result<Vec<Site>> {
    if w.sites().iter().any(|s| !lambda.contains(*s)) {
        return Err(Error::InvalidInput("W must be contained in Lambda".into()));
    }
    Ok(w.sites()
        .iter()
        .copied()
        .filter(|&(a, b)| {
            [(a + 1, b), (a - 1, b), (a, b + 1), (a, b - 1)]
                .iter()
                .any(|nb| lambda.contains(*nb) && !w.contains(*nb))
        })
        .collect())
}

/// Pairs `(n, n')` with `n` in `lambda`, `n'` outside, `|n - n'| = 1`.
pub fn outer_boundary_pairs(lambda: &Region) -> Vec<(Site, Site)> {
    let mut out = Vec::new();
    for &(a, b) in lambda.sites() {
        for nb in [(a - 1, b), (a, b - 1), (a, b + 1), (a + 1, b)] {
            if !lambda.contains(nb) {
                out.push(((a, b), nb));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// `(alpha, Lambda_alpha)` for nonempty pieces, `alpha` ascending.
    pub pieces: Vec<(Site, Region)>,
    pub non_elementary: usize,
}

/// Cover of `lambda0` by `Q_alpha \cap lambda0` with
/// `Q_alpha = [-m0, m0]^2 + 2 m0 alpha` (closed cubes, so neighbouring pieces
/// share boundary lines).
pub fn partition(lambda0: &Region, m0: i64) -> Result<Partition> {
    if m0 < 1 {
        return Err(Error::InvalidInput("partition scale must be >= 1".into()));
    }
    let r = lambda0.bbox();
    let span = |lo: i64, hi: i64| {
        let a = (lo - m0).div_euclid(2 * m0);
        let b = (hi + m0).div_euclid(2 * m0) + 1;
        a..=b
    };
    let mut pieces = Vec::new();
    for a1 in span(r.x.0, r.x.1) {
        for a2 in span(r.y.0, r.y.1) {
            let q = Rect::centered((2 * m0 * a1, 2 * m0 * a2), m0).intersect(&r);
            if q.is_empty() {
                continue;
            }
            let sites: Vec<Site> = lambda0.sites().iter().copied().filter(|s| q.contains(*s)).collect();
            if sites.is_empty() {
                continue;
            }
            pieces.push(((a1, a2), Region::from_sites(sites)?));
        }
    }
    let non_elementary = pieces.iter().filter(|(_, p)| !p.is_elementary()).count();
    Ok(Partition { pieces, non_elementary })
}

/// Physical parameters of `H(theta1, theta2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub lambda: f64,
    pub omega: f64,
    pub theta: (f64, f64),
    /// `|U| <= m_int * lambda` is required at assembly.
    pub m_int: f64,
}

pub const DEFAULT_M_INT: f64 = 10.0;

impl OperatorParams {
    pub fn new(lambda: f64, omega: f64, theta: (f64, f64)) -> Self {
        Self { lambda, omega, theta, m_int: DEFAULT_M_INT }
    }
}

/// Potential part `lambda (v(n1 omega + theta1) + v(n2 omega + theta2)) + U(n1, n2)`.
pub fn diagonal_value(
    site: Site,
    p: &OperatorParams,
    v: &FourierPotential,
    u: &InteractionPotential,
) -> f64 {
    let t1 = frac_mult(site.0, p.omega) + p.theta.0;
    let t2 = frac_mult(site.1, p.omega) + p.theta.1;
    p.lambda * (v.eval(t1) + v.eval(t2)) + u.eval(site.0, site.1)
}

/// `H_Lambda = 1_Lambda H 1_Lambda` stored as a symmetric band matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxHamiltonian {
    region: Region,
    lambda: f64,
    params: Option<OperatorParams>,
    diag: Vec<f64>,
    band: BandMatrix,
}

impl BoxHamiltonian {
    pub fn assemble(
        region: &Region,
        p: &OperatorParams,
        v: &FourierPotential,
        u: &InteractionPotential,
    ) -> Result<Self> {
        if !(p.lambda > 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {}", p.lambda)));
        }
        let max_abs = u.max_abs();
        if max_abs > p.m_int * p.lambda {
            return Err(Error::InteractionTooLarge { max_abs, m_int: p.m_int, lambda: p.lambda });
        }
        let diag: Vec<f64> = region.sites().iter().map(|&s| diagonal_value(s, p, v, u)).collect();
        let mut h = Self::from_diagonal(region, p.lambda, diag)?;
        h.params = Some(*p);
        Ok(h)
    }

    /// Hopping plus an explicit diagonal.
    pub fn from_diagonal(region: &Region, lambda: f64, diag: Vec<f64>) -> Result<Self> {
        if diag.len() != region.len() {
            return Err(Error::InvalidInput("diagonal length differs from region size".into()));
        }
        let edges = region.edges();
        let kd = edges.iter().map(|&(i, j)| j - i).max().unwrap_or(0);
        let mut band = BandMatrix::zeros(region.len(), kd);
        for (i, &d) in diag.iter().enumerate() {
            band.set_sym(i, i, d);
        }
        for (i, j) in edges {
            band.set_sym(i, j, 1.0);
        }
        Ok(Self { region: region.clone(), lambda, params: None, diag, band })
    }

    /// Same region and hopping with `diag + delta`.
    pub fn perturbed(&self, delta: &[f64]) -> Result<Self> {
        let diag = self.diag.iter().zip(delta).map(|(a, b)| a + b).collect();
        let mut h = Self::from_diagonal(&self.region, self.lambda, diag)?;
        h.params = self.params;
        Ok(h)
    }

    /// Restriction `1_W H 1_W` to a subregion `W`.
    pub fn restrict(&self, w: &Region) -> Result<Self> {
        let mut diag = Vec::with_capacity(w.len());
        for s in w.sites() {
            let i = self
                .region
                .index(*s)
                .ok_or_else(|| Error::InvalidInput(format!("site {s:?} outside the region")))?;
            diag.push(self.diag[i]);
        }
        let mut h = Self::from_diagonal(w, self.lambda, diag)?;
        h.params = self.params;
        Ok(h)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn params(&self) -> Option<&OperatorParams> {
        self.params.as_ref()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn band(&self) -> &BandMatrix {
        &self.band
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        self.band.to_dense()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        self.band.matvec(x, y);
    }
}

/// Hopping operator `Delta_Lambda` alone.
pub fn laplacian(region: &Region) -> BandMatrix {
    BoxHamiltonian::from_diagonal(region, 1.0, vec![0.0; region.len()]).expect("sizes agree").band
}

/// Largest and smallest eigenvalue of a symmetric band matrix by inertia
/// bisection, to absolute accuracy `tol`.
pub fn extreme_eigenvalues(a: &BandMatrix, tol: f64) -> (f64, f64) {
    let n = a.dim();
    let r = a.norm_inf() + 1.0;
    let bisect = |target: usize| {
        // smallest x with #(eig < x) >= target
        let (mut lo, mut hi) = (-r, r);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if inertia_below(a, mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    (bisect(1), bisect(n))
}

/// `||Delta_Lambda||` from the extreme eigenvalues of the hopping matrix.
pub fn laplacian_norm(region: &Region) -> f64 {
    let (lo, hi) = extreme_eigenvalues(&laplacian(region), 1e-14);
    lo.abs().max(hi.abs())
}

/// Number of hopping eigenvalues above `threshold` or below `-threshold`.
pub fn laplacian_count_beyond(region: &Region, threshold: f64) -> usize {
    let l = laplacian(region);
    let n = l.dim();
    let above = n - inertia_below(&l, threshold);
    let below = inertia_below(&l, -threshold);
    above + below
}

/// Helper for tests and configs: all sites of a set as a hash set.
pub fn site_set(r: &Region) -> HashSet<Site> {
    r.sites().iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_examples() {
        let sq = Region::rect(Rect::new((0, 4), (0, 4))).unwrap();
        assert_eq!(sq.len(), 25);
        assert_eq!(sq.diameter(), 4);
        let l = Region::elementary(Rect::new((0, 4), (0, 4)), Some((2, 2))).unwrap();
        assert_eq!(l.len(), 16);
        assert!(l.is_elementary());
        assert_eq!(Region::elementary(Rect::new((0, 0), (0, 0)), Some((0, 0))), Err(Error::ZeroCut));
        assert_eq!(Region::elementary(Rect::new((0, 1), (0, 1)), Some((0, 0))), Err(Error::ZeroCut));
    }

    #[test]
    fn canonical_order_and_lookup() {
        let r = Region::elementary(Rect::new((-1, 1), (-1, 1)), Some((1, 1))).unwrap();
        assert_eq!(r.sites(), &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (1, -1)]);
        for (i, s) in r.sites().iter().enumerate() {
            assert_eq!(r.index(*s), Some(i));
        }
        assert_eq!(r.index((0, 0)), None);
    }

    #[test]
    fn elementary_detection() {
        let plus = Region::from_sites([(0, 1), (1, 0), (1, 1), (1, 2), (2, 1)]).unwrap();
        assert!(!plus.is_elementary());
        let band = Region::from_sites([(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        assert!(band.is_elementary());
        let notch = Region::elementary(Rect::new((0, 5), (0, 3)), Some((-2, 0))).unwrap();
        assert!(Region::from_sites(notch.sites().iter().copied()).unwrap().is_elementary());
    }

    #[test]
    fn boundary_examples() {
        let lam = Region::rect(Rect::new((0, 4), (0, 4))).unwrap();
        assert!(internal_boundary(&lam, &lam).unwrap().is_empty());
        let single = Region::from_sites([(2, 2)]).unwrap();
        assert_eq!(internal_boundary(&single, &lam).unwrap(), vec![(2, 2)]);
        let left = Region::rect(Rect::new((0, 4), (0, 1))).unwrap();
        let rect = Region::rect(Rect::new((0, 4), (0, 3))).unwrap();
        let b = internal_boundary(&left, &rect).unwrap();
        assert_eq!(b, (0..=4).map(|a| (a, 1)).collect::<Vec<_>>());
    }

    #[test]
    fn partition_examples() {
        let sq = Region::cube((0, 0), 4);
        let p = partition(&sq, 2).unwrap();
        assert_eq!(p.pieces.len(), 9);
        assert_eq!(p.non_elementary, 0);
        let small = Region::cube((0, 0), 1);
        assert_eq!(partition(&small, 2).unwrap().pieces.len(), 1);
        let l = Region::elementary(Rect::new((-5, 5), (-5, 5)), Some((3, 3))).unwrap();
        let pl = partition(&l, 2).unwrap();
        assert!(pl.non_elementary <= 5);
        let covered: HashSet<Site> = pl.pieces.iter().flat_map(|(_, r)| r.sites().to_vec()).collect();
        assert_eq!(covered, site_set(&l));
    }

    #[test]
    fn assemble_diagonal_and_hopping() {
        let v = FourierPotential::preset("sin").unwrap();
        let u = InteractionPotential::zero();
        let p = OperatorParams::new(1.0, crate::arithmetic::GOLDEN, (0.0, 0.0));
        let r = Region::rect(Rect::new((0, 2), (0, 2))).unwrap();
        let h = BoxHamiltonian::assemble(&r, &p, &v, &u).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        for (i, &(a, b)) in r.sites().iter().enumerate() {
            let want = (tau * a as f64 * p.omega).sin() + (tau * b as f64 * p.omega).sin();
            assert!((h.diagonal()[i] - want).abs() < 1e-12);
        }
        let d = h.dense();
        assert_eq!(d, d.transpose());
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(0, 3)], 1.0);
        assert_eq!(d[(0, 4)], 0.0);
    }

    #[test]
    fn interaction_bound_is_enforced() {
        let v = FourierPotential::preset("sin").unwrap();
        let mut p = OperatorParams::new(1.0, 0.3, (0.0, 0.0));
        p.m_int = 2.0;
        let r = Region::cube((0, 0), 1);
        let err = BoxHamiltonian::assemble(&r, &p, &v, &InteractionPotential::hubbard(3.0)).unwrap_err();
        assert!(matches!(err, Error::InteractionTooLarge { .. }));
        assert!(BoxHamiltonian::assemble(&r, &p, &v, &InteractionPotential::hubbard(1.5)).is_ok());
    }

    #[test]
    fn small_laplacian_norms() {
        let r = Region::rect(Rect::new((0, 1), (0, 1))).unwrap();
        assert!((laplacian_norm(&r) - 2.0).abs() < 1e-12);
        let line = Region::rect(Rect::new((0, 0), (0, 9))).unwrap();
        let exact = 2.0 * (std::f64::consts::PI / 11.0).cos();
        assert!((laplacian_norm(&line) - exact).abs() < 1e-12);
    }
}
