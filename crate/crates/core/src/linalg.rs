//! Banded symmetric matrices and the solvers the rest of the crate builds on.
//!
//! Box Hamiltonians ordered row-major over their bounding rectangle are banded
//! with half-bandwidth equal to the column height, so factorizations cost
//! `O(n kd^2)` instead of `O(n^3)`. Three kernels live here:
//!
//! * [`BandLu`]: LU with partial pivoting of `A - sigma I`, used for Green's
//!   function columns and shift-invert iterations;
//! * [`inertia_below`]: Sylvester inertia through a symmetric `LDL^T`, which
//!   counts eigenvalues below a shift;
//! * [`window_eigenpairs`]: spectrum slicing plus shift-invert Lanczos with
//!   locking, returning every eigenpair inside an energy window.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is numerically singular at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("energy window [{lo}, {hi}] contains {count} eigenvalues (limit {limit}); narrow the window")]
    WindowTooLarge { lo: f64, hi: f64, count: usize, limit: usize },
    #[error("shift-invert Lanczos found {found} of {expected} eigenvalues in [{lo}, {hi}]")]
    NotConverged { lo: f64, hi: f64, found: usize, expected: usize },
}

/// Real symmetric band matrix with half-bandwidth `kd`.
///
/// Row `i` stores columns `i - kd ..= i + kd`; entries outside the matrix are
/// kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self { n, kd, data: vec![0.0; n * (2 * kd + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.kd
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || i.abs_diff(j) > self.kd {
            return None;
        }
        Some(i * (2 * self.kd + 1) + (j + self.kd - i))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.offset(i, j).map_or(0.0, |o| self.data[o])
    }

    /// Sets both `(i, j)` and `(j, i)`.
    ///
    /// Panics when the pair lies outside the band.
    pub fn set_sym(&mut self, i: usize, j: usize, value: f64) {
        let a = self.offset(i, j).expect("entry outside band");
        let b = self.offset(j, i).expect("entry outside band");
        self.data[a] = value;
        self.data[b] = value;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let w = 2 * self.kd + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            let hi = (i + self.kd).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += row[j + self.kd - i] * x[j];
            }
            y[i] = acc;
        }
    }

    /// Maximum absolute row sum, an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        let w = 2 * self.kd + 1;
        (0..self.n)
            .map(|i| self.data[i * w..(i + 1) * w].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// LU factorization with partial pivoting of `A - shift I` for a symmetric
/// band matrix `A`. Fill-in from row swaps widens the upper band to `2 kd`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kd: usize,
    width: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &BandMatrix, shift: f64) -> Result<Self, LinalgError> {
        let n = a.n;
        let kd = a.kd;
        let width = 3 * kd + 1;
        let mut lu = vec![0.0; n * width];
        for i in 0..n {
            let lo = i.saturating_sub(kd);
            let hi = (i + kd).min(n.saturating_sub(1));
            for j in lo..=hi {
                let mut v = a.get(i, j);
                if i == j {
                    v -= shift;
                }
                lu[i * width + (j + kd - i)] = v;
            }
        }
        let mut f = Self { n, kd, width, lu, piv: vec![0; n] };
        f.eliminate()?;
        Ok(f)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kd >= i && j <= i + 2 * self.kd);
        i * self.width + (j + self.kd - i)
    }

    fn eliminate(&mut self) -> Result<(), LinalgError> {
        let n = self.n;
        let kd = self.kd;
        let scale = self.lu.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kd).min(n - 1);
            let last_col = (k + 2 * kd).min(n - 1);
            let mut p = k;
            let mut best = self.lu[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.lu[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= scale * f64::EPSILON * 1e-3 || best == 0.0 {
                return Err(LinalgError::Singular { pivot: k });
            }
            self.piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.lu.swap(a, b);
                }
            }
            let pivot = self.lu[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.lu[ik] / pivot;
                self.lu[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=last_col {
                    let kj = self.lu[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.lu[ij] -= l * kj;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `(A - shift I) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let kd = self.kd;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kd).min(n - 1) {
                    b[i] -= self.lu[self.idx(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + 2 * kd).min(n - 1) {
                acc -= self.lu[self.idx(i, j)] * b[j];
            }
            b[i] = acc / self.lu[self.idx(i, i)];
        }
    }

    /// Column `j` of `(A - shift I)^{-1}`.
    pub fn inverse_column(&self, j: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.n];
        e[j] = 1.0;
        self.solve_in_place(&mut e);
        e
    }
}

/// Number of eigenvalues of `a` strictly below `shift`, from the signs of the
/// pivots of an unpivoted symmetric `LDL^T` of `a - shift I`.
///
/// Zero pivots are nudged to a tiny positive value, which places an
/// eigenvalue sitting exactly on the shift above it.
pub fn inertia_below(a: &BandMatrix, shift: f64) -> usize {
    let n = a.n;
    let kd = a.kd;
    // lower band: row i stores columns i-kd..=i at offsets 0..=kd
    let w = kd + 1;
    let mut l = vec![0.0; n * w];
    for i in 0..n {
        for j in i.saturating_sub(kd)..=i {
            let mut v = a.get(i, j);
            if i == j {
                v -= shift;
            }
            l[i * w + (j + kd - i)] = v;
        }
    }
    let tiny = f64::EPSILON * a.norm_inf().max(shift.abs()).max(1.0) * 1e-3;
    let mut negatives = 0;
    let mut col = vec![0.0; kd];
    for k in 0..n {
        let mut d = l[k * w + kd];
        if d.abs() < tiny {
            d = tiny;
        }
        if d < 0.0 {
            negatives += 1;
        }
        let last = (k + kd).min(n - 1);
        let m = last - k;
        for (t, i) in (k + 1..=last).enumerate() {
            col[t] = l[i * w + (k + kd - i)];
        }
        for ti in 0..m {
            let i = k + 1 + ti;
            let li = col[ti] / d;
            if li == 0.0 {
                continue;
            }
            for tj in 0..=ti {
                let j = k + 1 + tj;
                l[i * w + (j + kd - i)] -= li * col[tj];
            }
        }
    }
    negatives
}

/// An eigenvalue with its unit eigenvector, sign-fixed so the
/// largest-magnitude component is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Full dense symmetric eigendecomposition, eigenvalues ascending.
pub fn dense_eigenpairs(a: &DMatrix<f64>) -> Vec<EigenPair> {
    let eig = SymmetricEigen::new(a.clone());
    let mut pairs: Vec<EigenPair> = (0..a.nrows())
        .map(|k| {
            let mut vector: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            fix_sign(&mut vector);
            EigenPair { value: eig.eigenvalues[k], vector }
        })
        .collect();
    pairs.sort_by(|x, y| x.value.total_cmp(&y.value));
    pairs
}

/// Dense symmetric eigenvalues, ascending.
pub fn dense_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn normalize(v: &mut [f64]) -> f64 {
    let nrm = dot(v, v).sqrt();
    if nrm > 0.0 {
        v.iter_mut().for_each(|x| *x /= nrm);
    }
    nrm
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            axpy(-c, q, v);
        }
    }
}

/// Slices larger than this are bisected before Lanczos runs on them.
const SLICE_TARGET: usize = 48;

/// Every eigenpair of `a` with eigenvalue in `[lo, hi]`, ascending.
///
/// `limit` caps the number of eigenvalues the window may contain; the count
/// is known exactly beforehand from inertia. `seed` fixes the Lanczos start
/// vectors so results are reproducible.
pub fn window_eigenpairs(
    a: &BandMatrix,
    lo: f64,
    hi: f64,
    limit: usize,
    seed: u64,
) -> Result<Vec<EigenPair>, LinalgError> {
    assert!(lo <= hi, "empty window");
    let below_lo = inertia_below(a, lo);
    let below_hi = inertia_below(a, next_up(hi));
    let count = below_hi.saturating_sub(below_lo);
    if count > limit {
        return Err(LinalgError::WindowTooLarge { lo, hi, count, limit });
    }
    let mut out = Vec::with_capacity(count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    slice_recursive(a, lo, hi, below_lo, below_hi, &mut rng, &mut out)?;
    out.sort_by(|x, y| x.value.total_cmp(&y.value));
    Ok(out)
}

fn next_up(x: f64) -> f64 {
    x + x.abs().max(1.0) * 4.0 * f64::EPSILON
}

fn slice_recursive(
    a: &BandMatrix,
    lo: f64,
    hi: f64,
    below_lo: usize,
    below_hi: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<EigenPair>,
) -> Result<(), LinalgError> {
    let count = below_hi - below_lo;
    if count == 0 {
        return Ok(());
    }
    if count > SLICE_TARGET && hi - lo > 1e-9 * hi.abs().max(lo.abs()).max(1.0) {
        let mid = 0.5 * (lo + hi);
        let below_mid = inertia_below(a, mid);
        // [lo, mid) and [mid, hi]
        slice_recursive(a, lo, prev_down(mid), below_lo, below_mid, rng, out)?;
        return slice_recursive(a, mid, hi, below_mid, below_hi, rng, out);
    }
    let pairs = lanczos_slice(a, lo, hi, count, rng)?;
    out.extend(pairs);
    Ok(())
}

fn prev_down(x: f64) -> f64 {
    x - x.abs().max(1.0) * 4.0 * f64::EPSILON
}

fn lanczos_slice(
    a: &BandMatrix,
    lo: f64,
    hi: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EigenPair>, LinalgError> {
    let n = a.dim();
    let width = (hi - lo).max(1e-12);
    let mut sigma = 0.5 * (lo + hi);
    let mut lu = None;
    for attempt in 0..8 {
        match BandLu::factor(a, sigma) {
            Ok(f) => {
                lu = Some(f);
                break;
            }
            Err(_) => sigma += width * 1e-3 * (attempt as f64 + 1.0),
        }
    }
    let lu = lu.ok_or(LinalgError::NotConverged { lo, hi, found: 0, expected: count })?;
    let tol = 1e-10 * a.norm_inf().max(1.0);

    let mut locked: Vec<EigenPair> = Vec::new();
    let mut locked_vecs: Vec<Vec<f64>> = Vec::new();
    let mut krylov = (2 * count + 30).min(n);
    let mut hx = vec![0.0; n];
    for _round in 0..40 {
        if locked.len() >= count {
            break;
        }
        let remaining_dim = n - locked_vecs.len();
        if remaining_dim == 0 {
            break;
        }
        let m = krylov.min(remaining_dim);
        let mut q0: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(&mut q0, &locked_vecs);
        if normalize(&mut q0) == 0.0 {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![q0];
        let mut alpha: Vec<f64> = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        for j in 0..m {
            let mut w = basis[j].clone();
            lu.solve_in_place(&mut w);
            let aj = dot(&w, &basis[j]);
            axpy(-aj, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            orthogonalize(&mut w, &locked_vecs);
            orthogonalize(&mut w, &basis);
            alpha.push(aj);
            let bj = normalize(&mut w);
            if j + 1 == m || bj <= 1e-13 * aj.abs().max(1e-300) {
                break;
            }
            beta.push(bj);
            basis.push(w);
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].abs().total_cmp(&eig.eigenvalues[x].abs()));
        for idx in order {
            if locked.len() >= count {
                break;
            }
            let theta = eig.eigenvalues[idx];
            if theta == 0.0 {
                continue;
            }
            let approx = sigma + 1.0 / theta;
            if approx < lo - tol || approx > hi + tol {
                continue;
            }
            let s: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
            let mut x = vec![0.0; n];
            for (c, q) in s.iter().zip(&basis) {
                axpy(*c, q, &mut x);
            }
            orthogonalize(&mut x, &locked_vecs);
            if normalize(&mut x) < 0.5 {
                continue;
            }
            a.matvec(&x, &mut hx);
            let value = dot(&x, &hx);
            if value < lo || value > hi {
                continue;
            }
            let res = hx.iter().zip(&x).map(|(h, xi)| (h - value * xi).powi(2)).sum::<f64>().sqrt();
            if res <= tol {
                let mut vector = x;
                locked_vecs.push(vector.clone());
                fix_sign(&mut vector);
                locked.push(EigenPair { value, vector });
            }
        }
        krylov = (krylov * 3 / 2).min(n);
    }
    if locked.len() != count {
        return Err(LinalgError::NotConverged { lo, hi, found: locked.len(), expected: count });
    }
    Ok(locked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_band(n: usize, kd: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandMatrix::zeros(n, kd);
        for i in 0..n {
            for j in i..(i + kd + 1).min(n) {
                a.set_sym(i, j, rng.random::<f64>() * 2.0 - 1.0);
            }
        }
        a
    }

    #[test]
    fn band_lu_matches_dense_solve() {
        let a = random_band(40, 5, 1);
        let lu = BandLu::factor(&a, 0.3).unwrap();
        let mut dense = a.to_dense();
        for i in 0..40 {
            dense[(i, i)] -= 0.3;
        }
        let inv = dense.try_inverse().unwrap();
        for j in [0, 7, 39] {
            let col = lu.inverse_column(j);
            for i in 0..40 {
                assert!((col[i] - inv[(i, j)]).abs() < 1e-9 * (1.0 + inv[(i, j)].abs()));
            }
        }
    }

    #[test]
    fn singular_shift_is_reported() {
        let mut a = BandMatrix::zeros(3, 1);
        a.set_sym(0, 0, 1.0);
        a.set_sym(1, 1, 2.0);
        a.set_sym(2, 2, 3.0);
        assert!(matches!(BandLu::factor(&a, 2.0), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn inertia_agrees_with_dense_eigenvalues() {
        let a = random_band(60, 6, 7);
        let ev = dense_eigenvalues(&a.to_dense());
        for shift in [-3.0, -0.71, 0.0, 0.4, 2.5] {
            let expected = ev.iter().filter(|&&e| e < shift).count();
            assert_eq!(inertia_below(&a, shift), expected, "shift {shift}");
        }
    }

    #[test]
    fn window_solver_recovers_dense_spectrum_slice() {
        let a = random_band(120, 4, 3);
        let ev = dense_eigenvalues(&a.to_dense());
        let pairs = window_eigenpairs(&a, -0.5, 0.8, 500, 11).unwrap();
        let expected: Vec<f64> = ev.iter().copied().filter(|&e| (-0.5..=0.8).contains(&e)).collect();
        assert_eq!(pairs.len(), expected.len());
        for (p, e) in pairs.iter().zip(&expected) {
            assert!((p.value - e).abs() < 1e-9, "{} vs {}", p.value, e);
        }
    }

    #[test]
    fn window_solver_handles_exact_degeneracy() {
        // direct sum of two identical blocks: every eigenvalue is double
        let block = random_band(30, 2, 5);
        let mut a = BandMatrix::zeros(60, 2);
        for i in 0..30 {
            for j in i..(i + 3).min(30) {
                a.set_sym(i, j, block.get(i, j));
                a.set_sym(i + 30, j + 30, block.get(i, j));
            }
        }
        let pairs = window_eigenpairs(&a, -1.0, 1.0, 100, 2).unwrap();
        let single = dense_eigenvalues(&block.to_dense());
        let inside = single.iter().filter(|&&e| (-1.0..=1.0).contains(&e)).count();
        assert_eq!(pairs.len(), 2 * inside);
    }

    #[test]
    fn window_limit_is_enforced() {
        let a = random_band(50, 3, 9);
        let err = window_eigenpairs(&a, -100.0, 100.0, 10, 0).unwrap_err();
        assert!(matches!(err, LinalgError::WindowTooLarge { count: 50, .. }));
    }
}
