//! Low-complexity background potentials `U` on Z^2.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::linear_fit;

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    Zero,
    /// `U(n1,n2) = f(n1 - n2)` with `f` finitely supported.
    FiniteRange { kernel: BTreeMap<i64, f64> },
    /// `U(n1,n2) = table[n1 mod p1][n2 mod p2]`.
    Periodic { table: Vec<Vec<f64>> },
    /// `U(n1,n2) = values[s(n1 - n2)]` with the Sturmian word
    /// `s(k) = floor((k+1) phi) - floor(k phi)`, `phi = (sqrt 5 - 1)/2`.
    Fibonacci { values: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionPotential {
    variant: Variant,
    translation: (i64, i64),
}

pub fn sturmian(k: i64) -> usize {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    (((k + 1) as f64 * phi).floor() - (k as f64 * phi).floor()) as usize
}

/// Canonical bit pattern: `-0.0` and `0.0` compare equal.
fn canon_bits(x: f64) -> u64 {
    (x + 0.0).to_bits()
}

/// Number of distinct restricted translates, and whether the count is exact
/// or only a lower bound over a finite translation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCount {
    pub count: usize,
    pub lower_bound: bool,
}

impl InteractionPotential {
    pub fn zero() -> Self {
        Self { variant: Variant::Zero, translation: (0, 0) }
    }

    /// `U = u * delta_{n1 n2}`.
    pub fn hubbard(u: f64) -> Self {
        Self::finite_range(BTreeMap::from([(0, u)]))
    }

    pub fn finite_range(kernel: BTreeMap<i64, f64>) -> Self {
        Self { variant: Variant::FiniteRange { kernel }, translation: (0, 0) }
    }

    pub fn periodic(table: Vec<Vec<f64>>) -> Result<Self> {
        let p2 = table.first().map_or(0, Vec::len);
        if p2 == 0 || table.iter().any(|r| r.len() != p2) {
            return Err(Error::InvalidInput("periodic table must be a nonempty rectangle".into()));
        }
        Ok(Self { variant: Variant::Periodic { table }, translation: (0, 0) })
    }

    pub fn fibonacci(values: [f64; 2]) -> Self {
        Self { variant: Variant::Fibonacci { values }, translation: (0, 0) }
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn translation(&self) -> (i64, i64) {
        self.translation
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.variant, Variant::Zero)
    }

    /// Diagonal range `r` for finite-range kernels.
    pub fn radius(&self) -> Option<i64> {
        match &self.variant {
            Variant::FiniteRange { kernel } => Some(kernel.keys().map(|d| d.abs()).max().unwrap_or(0)),
            _ => None,
        }
    }

    /// `translate(U, t).eval(n) = U.eval(n - t)`.
    pub fn translate(&self, t: (i64, i64)) -> Self {
        let translation = match self.variant {
            Variant::Zero => (0, 0),
            _ => (self.translation.0 + t.0, self.translation.1 + t.1),
        };
        Self { variant: self.variant.clone(), translation }
    }

    pub fn eval(&self, n1: i64, n2: i64) -> f64 {
        let (m1, m2) = (n1 - self.translation.0, n2 - self.translation.1);
        match &self.variant {
            Variant::Zero => 0.0,
            Variant::FiniteRange { kernel } => kernel.get(&(m1 - m2)).copied().unwrap_or(0.0),
            Variant::Periodic { table } => {
                let p1 = table.len() as i64;
                let p2 = table[0].len() as i64;
                table[m1.rem_euclid(p1) as usize][m2.rem_euclid(p2) as usize]
            }
            Variant::Fibonacci { values } => values[sturmian(m1 - m2)],
        }
    }

    /// Sorted distinct values `U_1 < ... < U_{N_int}`.
    pub fn value_set(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = match &self.variant {
            Variant::Zero => vec![0.0],
            Variant::FiniteRange { kernel } => std::iter::once(0.0).chain(kernel.values().copied()).collect(),
            Variant::Periodic { table } => table.iter().flatten().copied().collect(),
            Variant::Fibonacci { values } => values.to_vec(),
        };
        vals.iter_mut().for_each(|x| *x += 0.0);
        vals.sort_by(f64::total_cmp);
        vals.dedup_by(|a, b| a.to_bits() == b.to_bits());
        vals
    }

    pub fn max_abs(&self) -> f64 {
        self.value_set().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn pattern(&self, x: i64, y: i64, n: usize) -> Vec<u64> {
        let mut p = Vec::with_capacity(n * n);
        for i in 0..n as i64 {
            for j in 0..n as i64 {
                p.push(canon_bits(self.eval(x + i, y + j)));
            }
        }
        p
    }

    /// Number of distinct patterns `1_{[0,N-1]^2} (T_x U)` over all
    /// translations `x`.
    ///
    /// Zero, finite-range and periodic potentials are enumerated over a
    /// fundamental domain and the count is exact. For the Fibonacci variant the
    /// diagonal offsets `|d| <= window` are scanned and the result is flagged
    /// as a lower bound.
    pub fn complexity_count(&self, n: usize, window: i64) -> Result<ComplexityCount> {
        if n < 2 {
            return Err(Error::InvalidInput("complexity window size must be at least 2".into()));
        }
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        let (t1, t2) = self.translation;
        let lower_bound = match &self.variant {
            Variant::Zero => {
                seen.insert(self.pattern(0, 0, n));
                false
            }
            Variant::FiniteRange { .. } => {
                // the pattern only depends on x - y; beyond the reach of the
                // kernel every pattern is identically zero
                let reach = n as i64 + self.radius().unwrap_or(0) + 1;
                for d in -reach..=reach {
                    seen.insert(self.pattern(t1 + d, t2, n));
                }
                false
            }
            Variant::Periodic { table } => {
                for x in 0..table.len() as i64 {
                    for y in 0..table[0].len() as i64 {
                        seen.insert(self.pattern(t1 + x, t2 + y, n));
                    }
                }
                false
            }
            Variant::Fibonacci { .. } => {
                for d in -window..=window {
                    seen.insert(self.pattern(t1 + d, t2, n));
                }
                true
            }
        };
        Ok(ComplexityCount { count: seen.len(), lower_bound })
    }

    /// Least-squares slope of `log count` against `log N`.
    pub fn fit_complexity_exponent(&self, ns: &[usize], window: i64) -> Result<f64> {
        if ns.len() < 3 {
            return Err(Error::InvalidInput("need at least three window sizes".into()));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &n in ns {
            let c = self.complexity_count(n, window)?;
            xs.push((n as f64).ln());
            ys.push((c.count as f64).ln());
        }
        linear_fit(&xs, &ys)
            .map(|f| f.slope)
            .ok_or_else(|| Error::InvalidInput("window sizes must differ".into()))
    }

    pub fn to_spec(&self) -> InteractionSpec {
        let translation = [self.translation.0, self.translation.1];
        match &self.variant {
            Variant::Zero => InteractionSpec::Zero {},
            Variant::FiniteRange { kernel } => InteractionSpec::FiniteRange {
                kernel: kernel.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                translation,
            },
            Variant::Periodic { table } => InteractionSpec::Periodic { table: table.clone(), translation },
            Variant::Fibonacci { values } => InteractionSpec::Fibonacci { values: *values, translation },
        }
    }
}

/// Serialized description, e.g.
/// `{"type":"finite_range","kernel":{"0":3.0,"1":-0.5},"translation":[0,0]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionSpec {
    Zero {},
    Hubbard {
        u: f64,
        #[serde(default)]
        translation: [i64; 2],
    },
    FiniteRange {
        kernel: BTreeMap<String, f64>,
        #[serde(default)]
        translation: [i64; 2],
    },
    Periodic {
        table: Vec<Vec<f64>>,
        #[serde(default)]
        translation: [i64; 2],
    },
    Fibonacci {
        values: [f64; 2],
        #[serde(default)]
        translation: [i64; 2],
    },
}

impl Default for InteractionSpec {
    fn default() -> Self {
        Self::Zero {}
    }
}

impl InteractionSpec {
    pub fn build(&self) -> Result<InteractionPotential> {
        let (u, t) = match self {
            Self::Zero {} => return Ok(InteractionPotential::zero()),
            Self::Hubbard { u, translation } => (InteractionPotential::hubbard(*u), translation),
            Self::FiniteRange { kernel, translation } => {
                let mut k = BTreeMap::new();
                for (key, val) in kernel {
                    let d: i64 = key
                        .trim()
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("kernel offset {key:?} is not an integer")))?;
                    k.insert(d, *val);
                }
                (InteractionPotential::finite_range(k), translation)
            }
            Self::Periodic { table, translation } => (InteractionPotential::periodic(table.clone())?, translation),
            Self::Fibonacci { values, translation } => (InteractionPotential::fibonacci(*values), translation),
        };
        Ok(u.translate((t[0], t[1])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        assert_eq!(InteractionPotential::zero().eval(4, -9), 0.0);
        assert_eq!(InteractionPotential::hubbard(2.5).eval(3, 3), 2.5);
        let p = InteractionPotential::periodic(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(p.eval(5, 7), 4.0);
    }

    #[test]
    fn translation_examples() {
        let h = InteractionPotential::hubbard(3.0).translate((1, 0));
        assert_eq!(h.eval(4, 3), 3.0);
        assert_eq!(h.eval(3, 3), 0.0);
        assert!(InteractionPotential::zero().translate((5, 2)).is_zero());
        let p = InteractionPotential::periodic(vec![vec![1.0, 2.0, 0.5], vec![3.0, 4.0, -1.0]]).unwrap();
        let q = p.translate((2, 3));
        for n1 in -5..5 {
            for n2 in -5..5 {
                assert_eq!(p.eval(n1, n2), q.eval(n1, n2));
            }
        }
    }

    #[test]
    fn value_sets() {
        assert_eq!(InteractionPotential::zero().value_set(), vec![0.0]);
        assert_eq!(InteractionPotential::hubbard(3.0).value_set(), vec![0.0, 3.0]);
        assert_eq!(InteractionPotential::fibonacci([2.0, 1.0]).value_set(), vec![1.0, 2.0]);
        assert_eq!(InteractionPotential::hubbard(-0.0).value_set(), vec![0.0]);
    }

    #[test]
    fn sturmian_word_is_binary_with_golden_density() {
        let ones: usize = (0..10_000).map(sturmian).sum();
        assert!((0..10_000).all(|k| sturmian(k) <= 1));
        let density = ones as f64 / 10_000.0;
        assert!((density - 0.6180339887).abs() < 1e-3);
    }

    #[test]
    fn complexity_examples() {
        assert_eq!(InteractionPotential::zero().complexity_count(5, 0).unwrap().count, 1);
        assert_eq!(InteractionPotential::hubbard(1.0).complexity_count(3, 0).unwrap().count, 6);
        let p = InteractionPotential::periodic(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(p.complexity_count(4, 0).unwrap().count <= 4);
        let f = InteractionPotential::fibonacci([1.0, 2.0]).complexity_count(4, 500).unwrap();
        assert!(f.lower_bound);
        assert_eq!(f.count, 8);
        assert!(InteractionPotential::zero().complexity_count(1, 0).is_err());
    }

    #[test]
    fn complexity_exponents() {
        let ns = [3, 4, 6, 8, 12];
        let h = InteractionPotential::hubbard(1.0).fit_complexity_exponent(&ns, 0).unwrap();
        assert!((h - 1.0).abs() < 0.05, "{h}");
        let z = InteractionPotential::zero().fit_complexity_exponent(&ns, 0).unwrap();
        assert_eq!(z, 0.0);
        let f = InteractionPotential::fibonacci([1.0, 2.0]).fit_complexity_exponent(&ns, 2000).unwrap();
        assert!((f - 1.0).abs() < 0.05, "{f}");
    }

    #[test]
    fn spec_roundtrip() {
        let json = r#"{"type":"finite_range","kernel":{"0":3.0,"1":-0.5},"translation":[2,0]}"#;
        let spec: InteractionSpec = serde_json::from_str(json).unwrap();
        let u = spec.build().unwrap();
        assert_eq!(u.eval(2, 0), 3.0);
        assert_eq!(u.eval(3, 0), -0.5);
        assert_eq!(u.to_spec().build().unwrap(), u);
        let bad = r#"{"type":"zero","extra":1}"#;
        assert!(serde_json::from_str::<InteractionSpec>(bad).is_err());
    }
}
