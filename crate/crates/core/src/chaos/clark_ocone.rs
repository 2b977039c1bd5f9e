//! Wick polynomials of first-order integrals, the quasi conditional
//! expectation and the polynomial Clark-Ocone representation.
//!
//! A variable is `X_i = int_0^T f_i dB_H`. In the discrete model `f_i` is
//! replaced by its cell averages, so `X_i = sum_c f_{i,c} (B(t_{c+1}) - B(t_c))`,
//! and windowing at `t` keeps the cells before `t` plus the part of the
//! current cell up to `t`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::calculus::{wick_ito_integral, ProcessExpansion};
use super::{ChaosExpansion, NoiseBasis, TruncationSpec};
use crate::error::{invalid, Error, Result};
use crate::fracops::SampledFunction;
use crate::numerics::GaussLegendre;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Indicator { a: f64, b: f64 },
    Sampled(SampledFunction),
}

impl Kernel {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Indicator { a, b } => {
                if t >= *a && t < *b {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Sampled(f) => {
                if t < f.support.0 || t > f.support.1 {
                    0.0
                } else {
                    f.eval(t)
                }
            }
        }
    }

    /// Mean of the kernel over `[a, b]`.
    pub fn cell_average(&self, a: f64, b: f64) -> f64 {
        match self {
            Self::Indicator { a: lo, b: hi } => (b.min(*hi) - a.max(*lo)).max(0.0) / (b - a),
            Self::Sampled(_) => GaussLegendre::new(8).integrate(a, b, |t| self.eval(t)) / (b - a),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Self::Indicator { .. } => true,
            Self::Sampled(f) => f.values.iter().all(|v| *v >= 0.0),
        }
    }
}

/// `P(X_1, ..., X_m)` with Wick powers: `sum coef * X_1^{<>e_1} <> ... <> X_m^{<>e_m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WickPolynomial {
    pub kernels: Vec<Kernel>,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl WickPolynomial {
    pub fn new(kernels: Vec<Kernel>, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Result<Self> {
        let m = kernels.len();
        let mut map = BTreeMap::new();
        for (e, c) in terms {
            if e.len() != m {
                return Err(invalid(format!(
                    "exponent vector of length {} for {m} variables",
                    e.len()
                )));
            }
            if !c.is_finite() {
                return Err(invalid("non-finite polynomial coefficient"));
            }
            *map.entry(e).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Ok(Self {
            kernels,
            terms: map,
        })
    }

    /// The single variable `int f dB_H`.
    pub fn variable(kernel: Kernel) -> Self {
        Self::new(vec![kernel], [(vec![1], 1.0)]).expect("well formed")
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Coefficient of the empty monomial.
    pub fn constant_term(&self) -> f64 {
        self.terms
            .iter()
            .find(|(e, _)| e.iter().all(|&x| x == 0))
            .map_or(0.0, |(_, c)| *c)
    }

    /// `d P / d X_i` (Wick calculus obeys the ordinary rules).
    pub fn partial(&self, i: usize) -> Self {
        let terms = self.terms.iter().filter(|(e, _)| e[i] > 0).map(|(e, c)| {
            let mut e2 = e.clone();
            e2[i] -= 1;
            (e2, c * f64::from(e[i]))
        });
        Self::new(self.kernels.clone(), terms).expect("same arity")
    }

    /// First-order expansions of `X_i` windowed at `t` (`None`: whole horizon).
    pub fn variables(
        &self,
        basis: &NoiseBasis,
        trunc: &TruncationSpec,
        t: Option<f64>,
    ) -> Result<Vec<ChaosExpansion>> {
        let g = basis.grid;
        let t = t.unwrap_or(g.t1).min(g.t1);
        if t < 0.0 {
            return Err(Error::OutOfDomain(format!("window end {t} < 0")));
        }
        let k = trunc.max_basis.min(basis.kmax());
        let cur = basis.cell_of(t);
        let partial_inc: Vec<f64> = {
            let bt = basis.coeffs_at(t)?;
            bt.iter().zip(basis.nodal(cur)).map(|(x, a)| x - a).collect()
        };
        self.kernels
            .iter()
            .map(|ker| {
                let mut v = vec![0.0; k];
                for c in 0..cur {
                    let w = ker.cell_average(g.point(c), g.point(c + 1));
                    if w != 0.0 {
                        for (vi, d) in v.iter_mut().zip(basis.increment(c)) {
                            *vi += w * d;
                        }
                    }
                }
                let w = ker.cell_average(g.point(cur), g.point(cur + 1));
                for (vi, d) in v.iter_mut().zip(&partial_inc) {
                    *vi += w * d;
                }
                Ok(ChaosExpansion::first_order(&v, *trunc))
            })
            .collect()
    }

    /// Substitute expansions for the variables.
    pub fn evaluate_on(&self, vars: &[ChaosExpansion], trunc: &TruncationSpec) -> ChaosExpansion {
        let mut out = ChaosExpansion::zero(*trunc);
        for (e, &c) in &self.terms {
            let mut m = ChaosExpansion::constant(c, *trunc);
            for (x, &p) in vars.iter().zip(e) {
                if p > 0 {
                    m = m.wick_product(&x.wick_power(p));
                }
            }
            out = out.add(&m);
        }
        out
    }

    pub fn to_chaos(&self, basis: &NoiseBasis, trunc: &TruncationSpec) -> Result<ChaosExpansion> {
        Ok(self.evaluate_on(&self.variables(basis, trunc, None)?, trunc))
    }
}

/// Quasi conditional expectation given the information up to `t`: every
/// kernel is cut to `(0, t)`. Limited to polynomials of degree at most two.
pub fn quasi_conditional(
    p: &WickPolynomial,
    t: f64,
    basis: &NoiseBasis,
    trunc: &TruncationSpec,
) -> Result<ChaosExpansion> {
    if p.degree() > 2 {
        return Err(Error::Unsupported(format!(
            "quasi conditional expectation is implemented for kernels of order <= 2, got {}",
            p.degree()
        )));
    }
    Ok(p.evaluate_on(&p.variables(basis, trunc, Some(t))?, trunc))
}

/// `psi(t) = E~[D_t F | F_t]` with `D_t F = sum_i f_i(t) (d_i P)(X)`.
pub fn clark_ocone_integrand(
    p: &WickPolynomial,
    t: f64,
    basis: &NoiseBasis,
    trunc: &TruncationSpec,
) -> Result<ChaosExpansion> {
    let g = basis.grid;
    let c = basis.cell_of(t);
    let mut out = ChaosExpansion::zero(*trunc);
    for (i, ker) in p.kernels.iter().enumerate() {
        let w = ker.cell_average(g.point(c), g.point(c + 1));
        if w == 0.0 {
            continue;
        }
        let d = p.partial(i);
        if d.terms.is_empty() {
            continue;
        }
        out = out.add(&quasi_conditional(&d, t, basis, trunc)?.scale(w));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClarkOconeResult {
    pub expectation: f64,
    /// `psi` sampled at the grid nodes (right-continuous in the cell index).
    pub integrand: ProcessExpansion,
    pub reconstruction: ChaosExpansion,
    pub target: ChaosExpansion,
    /// `sqrt(sum a! (target_a - reconstruction_a)^2)`.
    pub residual: f64,
    pub dropped_mass: f64,
}

/// `F = E(F) + int_0^T psi(t) dB_H(t)` for a Wick polynomial of degree <= 3.
pub fn clark_ocone_polynomial(
    p: &WickPolynomial,
    basis: &NoiseBasis,
    trunc: &TruncationSpec,
) -> Result<ClarkOconeResult> {
    if p.degree() > 3 {
        return Err(Error::Unsupported(format!(
            "Clark-Ocone is provided for Wick polynomials of degree <= 3, got {}",
            p.degree()
        )));
    }
    if p.kernels.is_empty() {
        return Err(invalid("polynomial has no variables"));
    }
    let target = p.to_chaos(basis, trunc)?;
    let psi = |t: f64| clark_ocone_integrand(p, t, basis, trunc);
    let integral = wick_ito_integral(&psi, basis, trunc)?;
    let expectation = target.expectation();
    let reconstruction = integral.add(&ChaosExpansion::constant(expectation, *trunc));
    let residual = target.distance_sq(&reconstruction).sqrt();
    let integrand = ProcessExpansion::sample(basis.grid, &psi)?;
    Ok(ClarkOconeResult {
        expectation,
        integrand,
        dropped_mass: reconstruction.dropped_mass.max(target.dropped_mass),
        reconstruction,
        target,
        residual,
    })
}
