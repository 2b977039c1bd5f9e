//! Wick-Itô integral, the fractional Itô formula check, and the
//! stochastic `M_H`-gradient.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ChaosExpansion, MultiIndex, NoiseBasis, TruncationSpec};
use crate::error::{invalid, Error, Result};
use crate::model::{SeedSpec, TimeGrid, VolatilityBand};
use crate::numerics::{mean_stderr, GaussLegendre};
use crate::synth::cholesky_generator;

/// A chaos-valued process `t -> Y(t)`.
pub trait TimeIndexed: Sync {
    fn at(&self, t: f64) -> Result<ChaosExpansion>;

    /// `(1/(b-a)) int_a^b Y(t) dt`; Gauss-Legendre with 8 nodes unless
    /// overridden (exact for Wick polynomials of degree < 16 in a cell).
    fn cell_average(&self, a: f64, b: f64) -> Result<ChaosExpansion> {
        let gl = GaussLegendre::new(8);
        let mut acc: Option<ChaosExpansion> = None;
        for (t, w) in gl.mapped(a, b) {
            let y = self.at(t)?.scale(w / (b - a));
            acc = Some(match acc {
                None => y,
                Some(s) => s.add(&y),
            });
        }
        Ok(acc.expect("rule has nodes"))
    }
}

impl<F: Fn(f64) -> Result<ChaosExpansion> + Sync> TimeIndexed for F {
    fn at(&self, t: f64) -> Result<ChaosExpansion> {
        self(t)
    }
}

/// Process given by its values at grid nodes, linear in between.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessExpansion {
    pub grid: TimeGrid,
    pub values: Vec<ChaosExpansion>,
}

impl ProcessExpansion {
    pub fn new(grid: TimeGrid, values: Vec<ChaosExpansion>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn sample(grid: TimeGrid, y: &dyn TimeIndexed) -> Result<Self> {
        let values = grid
            .points()
            .into_iter()
            .map(|t| y.at(t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }
}

impl TimeIndexed for ProcessExpansion {
    fn at(&self, t: f64) -> Result<ChaosExpansion> {
        let g = &self.grid;
        if t < g.t0 - 1e-12 || t > g.t1 + 1e-12 {
            return Err(Error::OutOfDomain(format!("t={t} outside [{}, {}]", g.t0, g.t1)));
        }
        let x = ((t - g.t0) / g.dt()).max(0.0);
        let i = (x.floor() as usize).min(g.n - 1);
        let u = (x - i as f64).clamp(0.0, 1.0);
        Ok(self.values[i].scale(1.0 - u).add(&self.values[i + 1].scale(u)))
    }
}

/// `int_0^T Y(t) <> W_H(t) dt` in the discrete model of `basis`:
/// the sum over cells of `avg_cell(Y) <> (B(t_{c+1}) - B(t_c))`.
pub fn wick_ito_integral(
    y: &dyn TimeIndexed,
    basis: &NoiseBasis,
    trunc: &TruncationSpec,
) -> Result<ChaosExpansion> {
    check_basis(basis, trunc)?;
    let g = basis.grid;
    let parts: Vec<ChaosExpansion> = (0..g.n)
        .into_par_iter()
        .map(|c| -> Result<ChaosExpansion> {
            let avg = y.cell_average(g.point(c), g.point(c + 1))?;
            Ok(avg.wick_product(&basis.increment_chaos(c, trunc)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ChaosExpansion::zero(*trunc);
    for p in &parts {
        out = out.add(p);
    }
    if out.terms().any(|(_, c)| !c.is_finite()) {
        return Err(Error::Numerical("Wick-Itô quadrature produced a non-finite coefficient".into()));
    }
    Ok(out)
}

fn check_basis(basis: &NoiseBasis, trunc: &TruncationSpec) -> Result<()> {
    if trunc.max_basis > basis.kmax() {
        return Err(invalid(format!(
            "truncation asks for {} basis functions, the noise basis has {}",
            trunc.max_basis,
            basis.kmax()
        )));
    }
    Ok(())
}

/// Test functions `f(t, x)` for the fractional Itô formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ItoFunction {
    Square,
    Cube,
    /// `exp(a x + b0 + b1 t)`.
    Exp { a: f64, b0: f64, b1: f64 },
}

impl std::fmt::Display for ItoFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Square => f.write_str("x^2"),
            Self::Cube => f.write_str("x^3"),
            Self::Exp { a, b0, b1 } => write!(f, "exp({a}x + {b0} + {b1}t)"),
        }
    }
}

impl ItoFunction {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "square" | "x2" | "x^2" => Ok(Self::Square),
            "cube" | "x3" | "x^3" => Ok(Self::Cube),
            "exp" => Ok(Self::Exp {
                a: 1.0,
                b0: 0.0,
                b1: 0.0,
            }),
            other => Err(Error::Unsupported(format!(
                "'{other}' is not in the function catalog (square, cube, exp)"
            ))),
        }
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        match *self {
            Self::Square => x * x,
            Self::Cube => x * x * x,
            Self::Exp { a, b0, b1 } => (a * x + b0 + b1 * t).exp(),
        }
    }

    fn dt(&self, t: f64, x: f64) -> f64 {
        match *self {
            Self::Exp { b1, .. } => b1 * self.value(t, x),
            _ => 0.0,
        }
    }

    fn dxx(&self, t: f64, x: f64) -> f64 {
        match *self {
            Self::Square => 2.0,
            Self::Cube => 6.0 * x,
            Self::Exp { a, .. } => a * a * self.value(t, x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCheck {
    pub band: VolatilityBand,
    pub num_paths: usize,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResidual {
    pub sigma: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoReport {
    pub function: ItoFunction,
    pub hurst: f64,
    pub horizon: f64,
    /// `sqrt(sum a! (lhs_a - rhs_a)^2)` of the coefficient-level identity.
    pub coefficient_residual: f64,
    pub dropped_mass: f64,
    pub scenarios: Vec<ScenarioResidual>,
    /// Sup/inf over scenarios of the mean path residual.
    pub upper: Option<f64>,
    pub lower: Option<f64>,
    /// Every scenario mean lies within three standard errors of zero.
    pub mc_consistent: Option<bool>,
    pub max_residual: f64,
}

/// `int_a^b g(s) s^{2H-1} ds` for `g` linear between `g_a` and `g_b`.
fn power_cell(a: f64, b: f64, h2: f64, ga: f64, gb: f64) -> f64 {
    let i0 = (b.powf(h2) - a.powf(h2)) / h2;
    let i1 = (b.powf(h2 + 1.0) - a.powf(h2 + 1.0)) / (h2 + 1.0) - a * i0;
    let d = b - a;
    ga * (i0 - i1 / d) + gb * i1 / d
}

struct CubeIntegrand<'a> {
    basis: &'a NoiseBasis,
    trunc: TruncationSpec,
    h2: f64,
}

impl TimeIndexed for CubeIntegrand<'_> {
    fn at(&self, t: f64) -> Result<ChaosExpansion> {
        let b = self.basis.fgbm_chaos_at(t, &self.trunc)?;
        b.ordinary_polynomial(&[0.0, 0.0, 3.0], t.powf(self.h2))
    }

    fn cell_average(&self, a: f64, b: f64) -> Result<ChaosExpansion> {
        // Wick part by Gauss-Legendre (exact), deterministic part exactly
        let gl = GaussLegendre::new(8);
        let mut acc = ChaosExpansion::zero(self.trunc);
        for (t, w) in gl.mapped(a, b) {
            let x = self.basis.fgbm_chaos_at(t, &self.trunc)?;
            acc = acc.add(&x.wick_power(2).scale(3.0 * w / (b - a)));
        }
        let h2 = self.h2;
        let det = 3.0 * (b.powf(h2 + 1.0) - a.powf(h2 + 1.0)) / ((h2 + 1.0) * (b - a));
        Ok(acc.add(&ChaosExpansion::constant(det, self.trunc)))
    }
}

/// Check `f(T, B_T) = f(0, 0) + int f_x dB + int f_t ds + H int f_xx s^{2H-1} ds`.
///
/// Polynomials are checked coefficient by coefficient in the discrete model
/// of `basis`. For the exponential, the chaos expansion of `exp(a B_T + b(T))`
/// built from ordinary powers is compared with the Wick-exponential form
/// `exp<>(b(T) + a B_T + a^2 T^{2H}/2)`. With `mc`, the path residual
/// `f(T,X_T) - f(0,0) - int f_t - H sigma^2 int f_xx s^{2H-1}` is averaged
/// along simulated paths for each band edge.
pub fn verify_fractional_ito(
    f: ItoFunction,
    basis: &NoiseBasis,
    trunc: &TruncationSpec,
    mc: Option<&McCheck>,
) -> Result<ItoReport> {
    check_basis(basis, trunc)?;
    let h = basis.h;
    let h2 = 2.0 * h.value();
    let big_t = basis.horizon();
    let g = basis.grid;
    let bt = basis.fgbm_chaos_at(big_t, trunc)?;
    let var_t = big_t.powf(h2);
    let (lhs, rhs) = match f {
        ItoFunction::Square => {
            let lhs = bt.ordinary_polynomial(&[0.0, 0.0, 1.0], var_t)?;
            let y = |t: f64| -> Result<ChaosExpansion> { Ok(basis.fgbm_chaos_at(t, trunc)?.scale(2.0)) };
            let corr = h.value() * 2.0 * (0..g.n)
                .map(|c| power_cell(g.point(c), g.point(c + 1), h2, 1.0, 1.0))
                .sum::<f64>();
            let rhs = wick_ito_integral(&y, basis, trunc)?.add(&ChaosExpansion::constant(corr, *trunc));
            (lhs, rhs)
        }
        ItoFunction::Cube => {
            let lhs = bt.ordinary_polynomial(&[0.0, 0.0, 0.0, 1.0], var_t)?;
            let y = CubeIntegrand {
                basis,
                trunc: *trunc,
                h2,
            };
            let mut corr = ChaosExpansion::zero(*trunc);
            for c in 0..g.n {
                let (a, b) = (g.point(c), g.point(c + 1));
                let wa = power_cell(a, b, h2, 1.0, 0.0);
                let wb = power_cell(a, b, h2, 0.0, 1.0);
                let xa = basis.fgbm_chaos_at(a, trunc)?;
                let xb = basis.fgbm_chaos_at(b, trunc)?;
                corr = corr.add(&xa.scale(6.0 * h.value() * wa)).add(&xb.scale(6.0 * h.value() * wb));
            }
            (lhs, wick_ito_integral(&y, basis, trunc)?.add(&corr))
        }
        ItoFunction::Exp { a, b0, b1 } => {
            let beta = b0 + b1 * big_t;
            let mut p = vec![0.0; 80];
            let mut term = beta.exp();
            for (n, pn) in p.iter_mut().enumerate() {
                if n > 0 {
                    term *= a / n as f64;
                }
                *pn = term;
            }
            let lhs = bt.ordinary_polynomial(&p, var_t)?;
            let arg = bt
                .scale(a)
                .add(&ChaosExpansion::constant(beta + 0.5 * a * a * var_t, *trunc));
            (lhs, arg.wick_exp()?)
        }
    };
    let coefficient_residual = lhs.distance_sq(&rhs).sqrt();
    let dropped_mass = lhs.dropped_mass.max(rhs.dropped_mass);
    let mut report = ItoReport {
        function: f,
        hurst: h.value(),
        horizon: big_t,
        coefficient_residual,
        dropped_mass,
        scenarios: Vec::new(),
        upper: None,
        lower: None,
        mc_consistent: None,
        max_residual: coefficient_residual,
    };
    if let Some(mc) = mc {
        let grid = TimeGrid::new(0.0, big_t, mc.steps)?;
        let mut sigmas = vec![mc.band.sigma_lo];
        if !mc.band.is_degenerate() {
            sigmas.push(mc.band.sigma_hi);
        }
        for sigma in sigmas {
            let gen = cholesky_generator(h, &grid, sigma)?;
            let paths = gen.sample_paths(mc.num_paths, SeedSpec::new(mc.seed));
            let pts = grid.points();
            let d: Vec<f64> = paths
                .par_iter()
                .map(|x| {
                    let mut s = f.value(big_t, x[grid.n]) - f.value(0.0, 0.0);
                    for c in 0..grid.n {
                        let (ta, tb) = (pts[c], pts[c + 1]);
                        s -= 0.5 * (tb - ta) * (f.dt(ta, x[c]) + f.dt(tb, x[c + 1]));
                        s -= h.value()
                            * sigma
                            * sigma
                            * power_cell(ta, tb, h2, f.dxx(ta, x[c]), f.dxx(tb, x[c + 1]));
                    }
                    s
                })
                .collect();
            let (mean, stderr) = mean_stderr(&d);
            report.scenarios.push(ScenarioResidual {
                sigma,
                mean,
                stderr,
            });
        }
        let means = report.scenarios.iter().map(|s| s.mean);
        report.upper = means.clone().reduce(f64::max);
        report.lower = means.reduce(f64::min);
        report.mc_consistent = Some(
            report
                .scenarios
                .iter()
                .all(|s| s.mean.abs() <= 3.0 * s.stderr),
        );
        let worst = report.scenarios.iter().map(|s| s.mean.abs()).fold(0.0, f64::max);
        report.max_residual = report.max_residual.max(worst);
    }
    Ok(report)
}

/// Index-lowered components `G_i = sum_a c_a a_i H_{a - eps(i)}`, so that
/// `D_t F = sum_i G_i e_i(t)`.
pub fn malliavin_gradient(f: &ChaosExpansion) -> Vec<ChaosExpansion> {
    let k = f.truncation.max_basis;
    let mut out = vec![ChaosExpansion::zero(f.truncation); k];
    for (a, c) in f.terms() {
        for &(i, m) in a.pairs() {
            if i <= k {
                let lowered = a.lower(i).expect("index present");
                out[i - 1].add_term(lowered, c * f64::from(m));
            }
        }
    }
    out
}

/// `D_t^H F` with `e_i(t) = M_H^{-1} h~_i(t)`.
pub fn malliavin_derivative(f: &ChaosExpansion, t: f64, basis: &NoiseBasis) -> Result<ChaosExpansion> {
    check_basis(basis, &f.truncation)?;
    let e = basis.inverse(t)?;
    Ok(pairing(f, &e))
}

/// `sum_i G_i g_i`. With `g_i = <h~_i, M_H gamma>` this is the pairing
/// `<D^H F, gamma>_{M_H}`, i.e. the derivative of `F` along `M_H gamma`.
/// For `gamma = 1_[0,T]`, `g_i = int_0^T M_H h~_i`.
pub fn pairing(f: &ChaosExpansion, g: &[f64]) -> ChaosExpansion {
    let mut out = ChaosExpansion::zero(f.truncation);
    for (i, gi) in malliavin_gradient(f).into_iter().enumerate() {
        if let Some(&w) = g.get(i) {
            if w != 0.0 {
                out = out.add(&gi.scale(w));
            }
        }
    }
    out
}

/// `H_{2 eps(k)}` helper for tests and docs.
pub fn double_unit(k: usize) -> MultiIndex {
    MultiIndex::from_pairs([(k, 2)]).expect("k >= 1")
}
