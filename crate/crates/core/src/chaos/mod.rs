//! Truncated Hermite chaos and Wick calculus.
//!
//! An expansion `F = sum_a c_a H_a` is stored against the Hermite-function
//! basis `h~_k` after `M_H` has been applied, so the Wick algebra here knows
//! nothing about `H`; all `H` dependence sits in [`basis`]. Expansions are
//! per constant-volatility scenario (unit volatility unless scaled); sup/inf
//! over a band is taken afterwards by the callers.

pub mod basis;
pub mod calculus;
pub mod clark_ocone;

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use basis::{
    fgbm_chaos, gnoise_coeffs, inverse_coeffs, integrated_coeffs, HermiteSpectral, NoiseBasis,
    MAX_BASIS,
};
pub use calculus::{
    malliavin_derivative, malliavin_gradient, pairing, verify_fractional_ito, wick_ito_integral,
    ItoFunction, ItoReport, McCheck, ProcessExpansion, ScenarioResidual, TimeIndexed,
};
pub use clark_ocone::{
    clark_ocone_integrand, clark_ocone_polynomial, quasi_conditional, ClarkOconeResult, Kernel,
    WickPolynomial,
};

/// Finite multi-index: sorted `(basis index >= 1, multiplicity >= 1)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, u32)>", into = "Vec<(usize, u32)>")]
pub struct MultiIndex(Vec<(usize, u32)>);

impl MultiIndex {
    pub fn zero() -> Self {
        Self(Vec::new())
    }

    /// `epsilon^(k)`.
    pub fn unit(k: usize) -> Self {
        assert!(k >= 1, "basis indices start at 1");
        Self(vec![(k, 1)])
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Result<Self> {
        let mut m: BTreeMap<usize, u32> = BTreeMap::new();
        for (k, e) in pairs {
            if k == 0 {
                return Err(invalid("basis indices start at 1"));
            }
            *m.entry(k).or_default() += e;
        }
        Ok(Self(m.into_iter().filter(|&(_, e)| e > 0).collect()))
    }

    pub fn pairs(&self) -> &[(usize, u32)] {
        &self.0
    }

    /// `|a|`.
    pub fn order(&self) -> u32 {
        self.0.iter().map(|p| p.1).sum()
    }

    /// `a!` as a float.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&(_, e)| factorial(e)).product()
    }

    pub fn max_index(&self) -> usize {
        self.0.last().map_or(0, |p| p.0)
    }

    pub fn multiplicity(&self, k: usize) -> u32 {
        self.0
            .binary_search_by_key(&k, |p| p.0)
            .map_or(0, |i| self.0[i].1)
    }

    pub fn add(&self, other: &Self) -> Self {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                out.push(b[j]);
                j += 1;
            } else {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
        Self(out)
    }

    /// `a - epsilon^(k)`, if `a_k >= 1`.
    pub fn lower(&self, k: usize) -> Option<Self> {
        let pos = self.0.binary_search_by_key(&k, |p| p.0).ok()?;
        let mut v = self.0.clone();
        if v[pos].1 == 1 {
            v.remove(pos);
        } else {
            v[pos].1 -= 1;
        }
        Some(Self(v))
    }
}

impl TryFrom<Vec<(usize, u32)>> for MultiIndex {
    type Error = Error;
    fn try_from(v: Vec<(usize, u32)>) -> Result<Self> {
        Self::from_pairs(v)
    }
}

impl From<MultiIndex> for Vec<(usize, u32)> {
    fn from(m: MultiIndex) -> Self {
        m.0
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|&(k, e)| if e == 1 { format!("e{k}") } else { format!("{e}e{k}") })
            .collect();
        write!(f, "{}", parts.join("+"))
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub max_order: u32,
    /// Largest admissible basis index `K`.
    pub max_basis: usize,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self {
            max_order: 4,
            max_basis: 32,
        }
    }
}

impl TruncationSpec {
    pub fn new(max_order: u32, max_basis: usize) -> Result<Self> {
        if max_basis == 0 {
            return Err(invalid("max_basis must be >= 1"));
        }
        if max_basis > MAX_BASIS {
            return Err(invalid(format!("max_basis {max_basis} exceeds {MAX_BASIS}")));
        }
        Ok(Self {
            max_order,
            max_basis,
        })
    }

    pub fn admits(&self, a: &MultiIndex) -> bool {
        a.order() <= self.max_order && a.max_index() <= self.max_basis
    }

    fn meet(&self, other: &Self) -> Self {
        Self {
            max_order: self.max_order.min(other.max_order),
            max_basis: self.max_basis.min(other.max_basis),
        }
    }
}

/// Finite chaos expansion with scalar coefficients.
///
/// `dropped_mass` accumulates `a! c_a^2` of every term discarded by the
/// truncation while this value was built (including its inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosExpansion {
    #[serde(with = "term_list")]
    coeffs: BTreeMap<MultiIndex, f64>,
    pub truncation: TruncationSpec,
    pub dropped_mass: f64,
}

mod term_list {
    use super::MultiIndex;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Term {
        index: MultiIndex,
        coeff: f64,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<MultiIndex, f64>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Term> = m
            .iter()
            .map(|(k, &c)| Term {
                index: k.clone(),
                coeff: c,
            })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<MultiIndex, f64>, D::Error> {
        let v = Vec::<Term>::deserialize(d)?;
        Ok(v.into_iter().map(|t| (t.index, t.coeff)).collect())
    }
}

impl ChaosExpansion {
    pub fn zero(truncation: TruncationSpec) -> Self {
        Self {
            coeffs: BTreeMap::new(),
            truncation,
            dropped_mass: 0.0,
        }
    }

    pub fn constant(c: f64, truncation: TruncationSpec) -> Self {
        let mut out = Self::zero(truncation);
        out.add_term(MultiIndex::zero(), c);
        out
    }

    /// `sum_k coeffs[k-1] H_{eps(k)}`.
    pub fn first_order(coeffs: &[f64], truncation: TruncationSpec) -> Self {
        let mut out = Self::zero(truncation);
        for (i, &c) in coeffs.iter().enumerate() {
            out.add_term(MultiIndex::unit(i + 1), c);
        }
        out
    }

    pub fn from_terms(
        terms: impl IntoIterator<Item = (MultiIndex, f64)>,
        truncation: TruncationSpec,
    ) -> Self {
        let mut out = Self::zero(truncation);
        for (a, c) in terms {
            out.add_term(a, c);
        }
        out
    }

    /// Add `c H_a`, dropping (and accounting for) it when out of budget.
    pub fn add_term(&mut self, a: MultiIndex, c: f64) {
        if c == 0.0 {
            return;
        }
        if !self.truncation.admits(&a) {
            self.dropped_mass += a.factorial() * c * c;
            return;
        }
        match self.coeffs.entry(a) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn coeff(&self, a: &MultiIndex) -> f64 {
        self.coeffs.get(a).copied().unwrap_or(0.0)
    }

    /// Ordinary expectation (per scenario): the order-0 coefficient.
    pub fn expectation(&self) -> f64 {
        self.coeff(&MultiIndex::zero())
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.coeffs.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest order present (0 for the zero expansion).
    pub fn order(&self) -> u32 {
        self.coeffs.keys().map(MultiIndex::order).max().unwrap_or(0)
    }

    /// Order-`n` part.
    pub fn homogeneous(&self, n: u32) -> Self {
        let mut out = Self::zero(self.truncation);
        for (a, &c) in &self.coeffs {
            if a.order() == n {
                out.coeffs.insert(a.clone(), c);
            }
        }
        out
    }

    /// First-order coefficients `c_{eps(k)}`, `k = 1..=max_basis`.
    pub fn first_order_coeffs(&self) -> Vec<f64> {
        (1..=self.truncation.max_basis)
            .map(|k| self.coeff(&MultiIndex::unit(k)))
            .collect()
    }

    /// `sum_a a! c_a^2`, the second moment under a unit-volatility scenario.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|(a, c)| a.factorial() * c * c).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.values_mut().for_each(|c| *c *= s);
        out.coeffs.retain(|_, c| *c != 0.0);
        out.dropped_mass *= s * s;
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.truncation.meet(&other.truncation));
        out.dropped_mass = self.dropped_mass + other.dropped_mass;
        for (a, &c) in self.coeffs.iter().chain(&other.coeffs) {
            out.add_term(a.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// `sum_a a! (c_a - d_a)^2`.
    pub fn distance_sq(&self, other: &Self) -> f64 {
        let mut d = self.clone();
        d.truncation.max_order = u32::MAX;
        d.truncation.max_basis = usize::MAX;
        for (a, &c) in &other.coeffs {
            d.add_term(a.clone(), -c);
        }
        d.norm_sq()
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .keys()
            .chain(other.coeffs.keys())
            .map(|a| (self.coeff(a) - other.coeff(a)).abs())
            .fold(0.0, f64::max)
    }

    /// Wick product: `(F <> G)_c = sum_{a+b=c} f_a g_b`.
    pub fn wick_product(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.truncation.meet(&other.truncation));
        out.dropped_mass = self.dropped_mass + other.dropped_mass;
        let mut acc: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (a, &ca) in &self.coeffs {
            for (b, &cb) in &other.coeffs {
                *acc.entry(a.add(b)).or_insert(0.0) += ca * cb;
            }
        }
        for (g, c) in acc {
            out.add_term(g, c);
        }
        out
    }

    pub fn wick_power(&self, n: u32) -> Self {
        let mut out = Self::constant(1.0, self.truncation);
        for _ in 0..n {
            out = out.wick_product(self);
        }
        out
    }

    /// Wick exponential of an expansion with terms of order at most one.
    /// Orders above `max_order` are dropped; their mass is known in closed
    /// form, `e^{2 c_0} sum_{n > N} |G|^{2n} / n!`.
    pub fn wick_exp(&self) -> Result<Self> {
        if self.order() > 1 {
            return Err(Error::Unsupported(
                "Wick exponential is only provided for first-order expansions".into(),
            ));
        }
        let c0 = self.expectation();
        let g = self.homogeneous(1);
        let nmax = self.truncation.max_order;
        let mut out = Self::constant(1.0, self.truncation);
        let mut pow = Self::constant(1.0, self.truncation);
        let mut fact = 1.0;
        for n in 1..=nmax {
            pow = pow.wick_product(&g);
            fact *= f64::from(n);
            out = out.add(&pow.scale(1.0 / fact));
        }
        let mut out = out.scale(c0.exp());
        let g2 = g.norm_sq();
        let mut term = 1.0;
        let mut tail = 0.0;
        for n in 1..(nmax + 200) {
            term *= g2 / f64::from(n);
            if n > nmax {
                tail += term;
                if term < 1e-300 || term < tail * 1e-17 {
                    break;
                }
            }
        }
        out.dropped_mass = self.dropped_mass + (2.0 * c0).exp() * tail;
        Ok(out)
    }

    /// Ordinary polynomial `sum_n p[n] X^n` of a first-order `X` with
    /// variance `var`, via `x^n = sum_j n!/(j!(n-2j)! 2^j) var^j x^{<>(n-2j)}`.
    pub fn ordinary_polynomial(&self, p: &[f64], var: f64) -> Result<Self> {
        if self.order() > 1 || self.expectation() != 0.0 {
            return Err(Error::Unsupported(
                "ordinary powers need a centred first-order expansion".into(),
            ));
        }
        let nmax = p.len().saturating_sub(1) as u32;
        // scalar weight of X^{<>m}
        let mut w = vec![0.0; p.len()];
        let mut lost = 0.0;
        for (n, &pn) in p.iter().enumerate() {
            if pn == 0.0 {
                continue;
            }
            let n = n as u32;
            for j in 0..=n / 2 {
                let m = n - 2 * j;
                let c = factorial(n) / (factorial(j) * factorial(m) * 2f64.powi(j as i32))
                    * var.powi(j as i32);
                w[m as usize] += pn * c;
            }
        }
        let mut out = Self::zero(self.truncation);
        let mut pow = Self::constant(1.0, self.truncation);
        let x2 = self.norm_sq();
        for m in 0..=nmax {
            if m > 0 && m <= self.truncation.max_order {
                pow = pow.wick_product(self);
            }
            if m > self.truncation.max_order {
                // |X^{<>m}|^2 = m! |X|^{2m}
                lost += w[m as usize].powi(2) * factorial(m) * x2.powi(m as i32);
                continue;
            }
            out = out.add(&pow.scale(w[m as usize]));
        }
        out.dropped_mass += lost;
        Ok(out)
    }

    /// `F(omega)` given the coordinates `xi_k = <omega, h~_k>`.
    pub fn evaluate(&self, xi: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .map(|(a, c)| {
                c * a
                    .pairs()
                    .iter()
                    .map(|&(k, e)| hermite_poly(e, xi.get(k - 1).copied().unwrap_or(0.0)))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("expansion serializes")
    }
}

/// Probabilists' Hermite polynomial `He_n(x)`.
pub fn hermite_poly(n: u32, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return 1.0;
    }
    for k in 1..n {
        let p2 = x * p1 - f64::from(k) * p0;
        p0 = p1;
        p1 = p2;
    }
    p1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tr() -> TruncationSpec {
        TruncationSpec::new(6, 8).unwrap()
    }

    fn mi(p: &[(usize, u32)]) -> MultiIndex {
        MultiIndex::from_pairs(p.iter().copied()).unwrap()
    }

    #[test]
    fn multi_index_arithmetic() {
        let a = mi(&[(1, 2), (3, 1)]);
        assert_eq!(a.order(), 3);
        assert_eq!(a.factorial(), 2.0);
        assert_eq!(a.add(&mi(&[(2, 1), (3, 2)])), mi(&[(1, 2), (2, 1), (3, 3)]));
        assert_eq!(a.lower(1), Some(mi(&[(1, 1), (3, 1)])));
        assert_eq!(a.lower(3), Some(mi(&[(1, 2)])));
        assert_eq!(a.lower(2), None);
        assert!(MultiIndex::from_pairs([(0, 1)]).is_err());
        assert_eq!(mi(&[(4, 0)]), MultiIndex::zero());
        assert_eq!(format!("{a}"), "2e1+e3");
    }

    #[test]
    fn unit_and_square() {
        let f = ChaosExpansion::first_order(&[1.5, -2.0], tr());
        let one = ChaosExpansion::constant(1.0, tr());
        assert_eq!(f.wick_product(&one), f);
        let e1 = ChaosExpansion::from_terms([(MultiIndex::unit(1), 1.0)], tr());
        let sq = e1.wick_product(&e1);
        assert_eq!(sq.len(), 1);
        assert_eq!(sq.coeff(&mi(&[(1, 2)])), 1.0);
    }

    #[test]
    fn drops_are_recorded() {
        let t = TruncationSpec::new(2, 8).unwrap();
        let x = ChaosExpansion::first_order(&[1.0, 1.0], t);
        let x3 = x.wick_power(3);
        assert!(x3.is_empty());
        // |X^{<>3}|^2 = 3! |X|^6 = 48
        assert!((x3.dropped_mass - 48.0).abs() < 1e-12);
        let mut y = ChaosExpansion::zero(t);
        y.add_term(MultiIndex::unit(9), 2.0);
        assert_eq!(y.dropped_mass, 4.0);
    }

    #[test]
    fn wick_exp_examples() {
        let t = TruncationSpec::new(12, 4).unwrap();
        let z = ChaosExpansion::zero(t).wick_exp().unwrap();
        assert_eq!(z, ChaosExpansion::constant(1.0, t));
        let f = ChaosExpansion::first_order(&[0.3, 0.1], t);
        let g = ChaosExpansion::first_order(&[0.0, -0.2, 0.4], t);
        let lhs = f.add(&g).wick_exp().unwrap();
        let rhs = f.wick_exp().unwrap().wick_product(&g.wick_exp().unwrap());
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        assert_eq!(f.wick_exp().unwrap().expectation(), 1.0);
        // |exp<>(G)|^2 = exp(|G|^2) once the tail is counted
        let e = f.wick_exp().unwrap();
        assert!((e.norm_sq() + e.dropped_mass - (f.norm_sq()).exp()).abs() < 1e-14);
        assert!(f.wick_product(&g).wick_exp().is_err());
    }

    #[test]
    fn ordinary_square_adds_variance() {
        let t = tr();
        let x = ChaosExpansion::first_order(&[0.6, 0.8], t);
        let sq = x.ordinary_polynomial(&[0.0, 0.0, 1.0], 1.0).unwrap();
        let expect = x.wick_power(2).add(&ChaosExpansion::constant(1.0, t));
        assert!(sq.max_abs_diff(&expect) < 1e-15);
        let xi = [0.7, -1.3];
        let v = x.evaluate(&xi);
        assert!((sq.evaluate(&xi) - v * v).abs() < 1e-12);
        let cube = x.ordinary_polynomial(&[0.0, 0.0, 0.0, 1.0], 1.0).unwrap();
        assert!((cube.evaluate(&xi) - v.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip() {
        let f = ChaosExpansion::from_terms([(mi(&[(1, 2), (4, 1)]), 0.25), (MultiIndex::zero(), 1.0)], tr());
        let s = f.to_json();
        let g: ChaosExpansion = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn hermite_poly_orthogonality_weights() {
        // He_n(x) values at x=2: 1, 2, 3, 2, -5
        let v: Vec<f64> = (0..5).map(|n| hermite_poly(n, 2.0)).collect();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 2.0, -5.0]);
    }

    fn sparse() -> impl Strategy<Value = ChaosExpansion> {
        prop::collection::vec(
            (prop::collection::vec((1usize..5, 1u32..3), 0..3), -2.0f64..2.0),
            0..6,
        )
        .prop_map(|terms| {
            let t = TruncationSpec::new(12, 8).unwrap();
            ChaosExpansion::from_terms(
                terms.into_iter().map(|(p, c)| (MultiIndex::from_pairs(p).unwrap(), c)),
                t,
            )
        })
    }

    proptest! {
        #[test]
        fn wick_algebra_laws(f in sparse(), g in sparse(), h in sparse(), s in -3.0f64..3.0) {
            let fg = f.wick_product(&g);
            prop_assert!(fg.max_abs_diff(&g.wick_product(&f)) < 1e-12);
            let lhs = f.wick_product(&g.add(&h.scale(s)));
            let rhs = fg.add(&f.wick_product(&h).scale(s));
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
            let a1 = fg.wick_product(&h);
            let a2 = f.wick_product(&g.wick_product(&h));
            prop_assert!(a1.max_abs_diff(&a2) < 1e-10);
            prop_assert_eq!(a1.dropped_mass, 0.0);
            // brute-force oracle on coefficient convolution
            let mut oracle: BTreeMap<MultiIndex, f64> = BTreeMap::new();
            for (a, ca) in f.terms() {
                for (b, cb) in g.terms() {
                    *oracle.entry(a.add(b)).or_default() += ca * cb;
                }
            }
            for (k, v) in oracle {
                prop_assert!((fg.coeff(&k) - v).abs() < 1e-12);
            }
        }

        #[test]
        fn evaluation_is_multiplicative_for_disjoint_supports(a in -2.0f64..2.0, b in -2.0f64..2.0, x1 in -2.0f64..2.0, x2 in -2.0f64..2.0) {
            let t = TruncationSpec::new(6, 4).unwrap();
            let f = ChaosExpansion::from_terms([(MultiIndex::unit(1), a), (MultiIndex::zero(), 1.0)], t);
            let g = ChaosExpansion::from_terms([(MultiIndex::unit(2), b)], t);
            let xi = [x1, x2];
            prop_assert!((f.wick_product(&g).evaluate(&xi) - f.evaluate(&xi) * g.evaluate(&xi)).abs() < 1e-10);
        }
    }
}
