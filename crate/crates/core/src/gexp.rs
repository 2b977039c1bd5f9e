//! Sublinear expectations: scenario Monte Carlo, the G-heat equation and
//! its log-price (Barenblatt) variant, and drift removal.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fracops::{mh_constant, OperatorParams, SampledFunction, SpectralDomain};
use crate::model::{HurstIndex, ScenarioFamily, SeedSpec, TimeGrid, VolatilityBand};
use crate::numerics::{correlation, gamma, linear_fit, mean_stderr};
use crate::synth::GeneratorKind;

/// `G(a) = (sigma_hi^2 a^+ - sigma_lo^2 a^-) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GFunction {
    pub band: VolatilityBand,
}

impl GFunction {
    pub fn new(band: VolatilityBand) -> Self {
        Self { band }
    }

    pub fn eval(&self, a: f64) -> f64 {
        0.5 * self.optimal_variance(a) * a
    }

    /// Variance attaining the sup in `G(a) = sup_s s^2 a / 2`.
    pub fn optimal_variance(&self, a: f64) -> f64 {
        if a >= 0.0 {
            self.band.sigma_hi * self.band.sigma_hi
        } else {
            self.band.sigma_lo * self.band.sigma_lo
        }
    }
}

pub fn g_function(alpha: f64, band: &VolatilityBand) -> f64 {
    GFunction::new(*band).eval(alpha)
}

/// Explicit finite-difference solution; `u[i][j]` at `times[i]`, `x[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSolution {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub dt: f64,
    pub dx: f64,
    pub boundary: String,
}

impl PdeSolution {
    /// Linear interpolation in `x` at time slice `i`.
    pub fn value_at_slice(&self, i: usize, x: f64) -> Result<f64> {
        let (lo, hi) = (self.x[0], *self.x.last().expect("nonempty"));
        if x < lo || x > hi {
            return Err(Error::OutOfDomain(format!("x={x} outside [{lo}, {hi}]")));
        }
        let p = ((x - lo) / self.dx).min((self.x.len() - 1) as f64);
        let j = (p.floor() as usize).min(self.x.len() - 2);
        let w = p - j as f64;
        Ok(self.u[i][j] * (1.0 - w) + self.u[i][j + 1] * w)
    }

    /// Value at the final time.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        self.value_at_slice(self.u.len() - 1, x)
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,u")?;
        for (t, row) in self.times.iter().zip(&self.u) {
            for (x, v) in self.x.iter().zip(row) {
                writeln!(w, "{t},{x},{v}")?;
            }
        }
        Ok(())
    }
}

/// Linear extension `a + b x` fitted to the two outermost samples.
fn edge_line(x0: f64, x1: f64, v0: f64, v1: f64) -> (f64, f64) {
    let b = (v1 - v0) / (x1 - x0);
    (v0 - b * x0, b)
}

/// Solve `u_t = G(u_xx)`, `u(0, .) = phi` on the grid of `phi`, stepping
/// along `tgrid`. Boundary values follow the linear extension of `phi` at
/// each edge. Every `store_every`-th step is kept (the last always is).
pub fn solve_g_heat(
    phi: &SampledFunction,
    band: &VolatilityBand,
    tgrid: &TimeGrid,
) -> Result<PdeSolution> {
    solve_g_heat_stored(phi, band, tgrid, 1)
}

pub fn solve_g_heat_stored(
    phi: &SampledFunction,
    band: &VolatilityBand,
    tgrid: &TimeGrid,
    store_every: usize,
) -> Result<PdeSolution> {
    let xg = phi.grid;
    if xg.n < 2 {
        return Err(invalid("need at least three space nodes"));
    }
    let dx = xg.dt();
    let dt = tgrid.dt();
    let cfl = band.sigma_hi * band.sigma_hi * dt / (dx * dx);
    if cfl > 1.0 + 1e-12 {
        return Err(invalid(format!(
            "CFL condition violated: sigma_hi^2 dt/dx^2 = {cfl:.4} > 1; need dt <= {:.6e} ({} steps)",
            dx * dx / (band.sigma_hi * band.sigma_hi),
            ((tgrid.t1 - tgrid.t0) * band.sigma_hi * band.sigma_hi / (dx * dx)).ceil()
        )));
    }
    let g = GFunction::new(*band);
    let m = xg.len();
    let xs = xg.points();
    let mut u = phi.values.clone();
    let (la, lb) = edge_line(xs[0], xs[1], u[0], u[1]);
    let (ra, rb) = edge_line(xs[m - 2], xs[m - 1], u[m - 2], u[m - 1]);
    let store_every = store_every.max(1);
    let mut times = vec![tgrid.t0];
    let mut out = vec![u.clone()];
    let mut next = u.clone();
    for step in 1..=tgrid.n {
        for j in 1..m - 1 {
            let d2 = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (dx * dx);
            next[j] = u[j] + dt * g.eval(d2);
        }
        next[0] = la + lb * xs[0];
        next[m - 1] = ra + rb * xs[m - 1];
        std::mem::swap(&mut u, &mut next);
        if let Some(j) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value at step {step}, node x={}",
                xs[j]
            )));
        }
        if step % store_every == 0 || step == tgrid.n {
            times.push(tgrid.point(step));
            out.push(u.clone());
        }
    }
    Ok(PdeSolution {
        times,
        x: xs,
        u: out,
        dt,
        dx,
        boundary: "dirichlet: linear extension of the initial data".into(),
    })
}

/// Log-price Barenblatt equation in time to maturity `tau`:
/// `V_tau = sup_s s^2 (V_yy - V_y) / 2 + r V_y - r V`, `V(0, y) = payoff(e^y)`.
/// Boundaries follow `a e^{-r tau} + b e^y`, the linear fit in `S` of the
/// payoff at the two outermost nodes.
pub fn solve_barenblatt_log(
    payoff: &dyn Fn(f64) -> f64,
    band: &VolatilityBand,
    rate: f64,
    maturity: f64,
    ygrid: &TimeGrid,
) -> Result<PdeSolution> {
    let dy = ygrid.dt();
    if dy > 2.0 {
        return Err(invalid("log-price spacing must be <= 2 for a monotone scheme"));
    }
    if !(maturity > 0.0) {
        return Err(invalid("maturity must be > 0"));
    }
    let s2 = band.sigma_hi * band.sigma_hi;
    let dt_max = 1.0 / (s2 / (dy * dy) + rate.abs() / dy + rate.max(0.0) + 1e-300);
    let steps = (maturity / (0.9 * dt_max)).ceil().max(1.0) as usize;
    let dt = maturity / steps as f64;
    let ys = ygrid.points();
    let m = ys.len();
    let mut v: Vec<f64> = ys.iter().map(|y| payoff(y.exp())).collect();
    let (s0, s1) = (ys[0].exp(), ys[1].exp());
    let (la, lb) = edge_line(s0, s1, v[0], v[1]);
    let (t0, t1) = (ys[m - 2].exp(), ys[m - 1].exp());
    let (ra, rb) = edge_line(t0, t1, v[m - 2], v[m - 1]);
    let g = GFunction::new(*band);
    // central differences for the drift keep the scheme monotone when the
    // diffusion dominates the cell Peclet number; otherwise upwind
    let central = [band.sigma_lo, band.sigma_hi]
        .iter()
        .all(|s| dy * (rate - 0.5 * s * s).abs() <= s * s);
    let mut next = v.clone();
    for step in 1..=steps {
        let tau = step as f64 * dt;
        for j in 1..m - 1 {
            let d2 = (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (dy * dy);
            let d1 = (v[j + 1] - v[j - 1]) / (2.0 * dy);
            let gamma_ = d2 - d1;
            let drift = if central {
                rate * d1
            } else if rate >= 0.0 {
                rate * (v[j + 1] - v[j]) / dy
            } else {
                rate * (v[j] - v[j - 1]) / dy
            };
            next[j] = v[j] + dt * (g.eval(gamma_) + drift - rate * v[j]);
        }
        let disc = (-rate * tau).exp();
        next[0] = la * disc + lb * s0;
        next[m - 1] = ra * disc + rb * t1;
        std::mem::swap(&mut v, &mut next);
        if let Some(j) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value at step {step}, node y={}",
                ys[j]
            )));
        }
    }
    Ok(PdeSolution {
        times: vec![maturity],
        x: ys,
        u: vec![v],
        dt,
        dx: dy,
        boundary: "dirichlet: discounted linear fit of the payoff in S".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMean {
    pub scenario: String,
    pub mean: f64,
    pub stderr: f64,
}

/// Scalar upper/lower expectation estimated over a scenario family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McExpectation {
    pub upper: f64,
    pub lower: f64,
    pub upper_stderr: f64,
    pub lower_stderr: f64,
    pub upper_scenario: String,
    pub lower_scenario: String,
    pub per_scenario: Vec<ScenarioMean>,
    /// Fraction of payoff evaluations that hit the clip bounds.
    pub clipped_fraction: f64,
    pub num_paths: usize,
}

/// `E^G[X] ~ max` and `-E^G[-X] ~ min` over the family of per-scenario
/// means of `payoff(path)`, all scenarios sharing the same random numbers.
#[allow(clippy::too_many_arguments)]
pub fn upper_lower_expectation_mc(
    payoff: &(dyn Fn(&[f64]) -> f64 + Sync),
    family: &ScenarioFamily,
    h: HurstIndex,
    grid: &TimeGrid,
    gen: &GeneratorKind,
    num_paths: usize,
    seed: SeedSpec,
    clip: Option<(f64, f64)>,
) -> Result<McExpectation> {
    if family.is_empty() {
        return Err(invalid("empty scenario family"));
    }
    if num_paths < 2 {
        return Err(invalid("need at least two paths"));
    }
    if let Some((lo, hi)) = clip {
        if !(lo < hi) {
            return Err(invalid("clip interval reversed"));
        }
    }
    let mut per = Vec::with_capacity(family.len());
    let mut clipped = 0usize;
    for s in &family.members {
        let e = gen.generate(h, grid, s, num_paths, seed)?;
        let vals: Vec<(f64, bool)> = e
            .paths
            .par_iter()
            .map(|p| {
                let v = payoff(p);
                match clip {
                    Some((lo, _)) if v < lo => (lo, true),
                    Some((_, hi)) if v > hi => (hi, true),
                    _ => (v, false),
                }
            })
            .collect();
        if let Some(v) = vals.iter().find(|v| !v.0.is_finite()) {
            return Err(Error::Numerical(format!(
                "payoff returned {} under scenario {}; pass clip bounds",
                v.0,
                s.label()
            )));
        }
        clipped += vals.iter().filter(|v| v.1).count();
        let xs: Vec<f64> = vals.into_iter().map(|v| v.0).collect();
        let (mean, stderr) = mean_stderr(&xs);
        per.push(ScenarioMean {
            scenario: s.label(),
            mean,
            stderr,
        });
    }
    let up = per
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .expect("nonempty")
        .0;
    let lo = per
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .expect("nonempty")
        .0;
    Ok(McExpectation {
        upper: per[up].mean,
        lower: per[lo].mean,
        upper_stderr: per[up].stderr,
        lower_stderr: per[lo].stderr,
        upper_scenario: per[up].scenario.clone(),
        lower_scenario: per[lo].scenario.clone(),
        clipped_fraction: clipped as f64 / (num_paths * family.len()) as f64,
        num_paths,
        per_scenario: per,
    })
}

/// Fit of `phi` to `a [(T-t)^{1/2-H} + t^{1/2-H}] + b` away from the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFit {
    pub correlation: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Largest `|phi - fit| / |fit|` on the fitted window.
    pub max_rel_deviation: f64,
    /// Amplitude predicted by `M_H^{-1} 1_(0,T)` on the line.
    pub expected_amplitude: f64,
    /// The amplitude as printed alongside the closed form in the source
    /// construction (no `1/(1/2-H)` factor, `M_{1-H}` normalization).
    pub printed_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRemoval {
    pub h: HurstIndex,
    pub horizon: f64,
    pub gprime: SampledFunction,
    pub phi: SampledFunction,
    /// `max |M_H phi - g'|` over the validation window.
    pub roundtrip_residual: f64,
    /// Same with `phi` cut to `[0, T]` before applying `M_H`.
    pub truncated_roundtrip_residual: f64,
    pub validation_window: (f64, f64),
    pub flagged: bool,
    pub shape: Option<ShapeFit>,
}

/// `phi = M_H^{-1} g'` with `g'` extended by zero off `[0, T]`.
///
/// `phi` and the round trip are computed on the same zero-padded periodic
/// window; `phi` is reported on the grid of `g'`.
pub fn girsanov_phi(gprime: &SampledFunction, params: &OperatorParams) -> Result<DriftRemoval> {
    params.validate()?;
    let g = gprime.grid;
    if g.t0 != 0.0 {
        return Err(invalid("g' must be sampled on [0, T]"));
    }
    let h = params.h;
    let big_t = g.t1;
    let len = (g.len() * params.fft_pad_factor).next_power_of_two();
    let dom = SpectralDomain::new(len, g.dt(), params.regularization);
    let hv = h.value();
    let c = mh_constant(h);
    let phi_full = dom.apply_power_symbol(&gprime.values, hv - 0.5, 1.0 / c);
    let back = dom.apply_power_symbol(&phi_full, 0.5 - hv, c);
    let mut cut = phi_full[..g.len()].to_vec();
    cut.resize(len, 0.0);
    let back_cut = dom.apply_power_symbol(&cut, 0.5 - hv, c);
    let delta = 0.05 * big_t;
    let window = (delta, big_t - delta);
    let inside: Vec<usize> = (0..g.len())
        .filter(|&i| {
            let t = g.point(i);
            t >= window.0 && t <= window.1
        })
        .collect();
    let resid = |v: &[f64]| {
        inside
            .iter()
            .map(|&i| (v[i] - gprime.values[i]).abs())
            .fold(0.0, f64::max)
    };
    let roundtrip_residual = resid(&back);
    let truncated_roundtrip_residual = resid(&back_cut);
    let scale = gprime.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let flagged = roundtrip_residual > 1e-8 * scale.max(1.0);
    let phi = SampledFunction::new(g, phi_full[..g.len()].to_vec(), (g.t0, g.t1))?;

    let constant = gprime.values.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-12 * scale.max(1.0));
    let shape = if constant && !h.is_half() && scale > 0.0 {
        let a_level = gprime.values[0];
        let e = 0.5 - hv;
        let fit_idx: Vec<usize> = (0..g.len())
            .filter(|&i| {
                let t = g.point(i);
                t >= 0.1 * big_t && t <= 0.9 * big_t
            })
            .collect();
        let x: Vec<f64> = fit_idx
            .iter()
            .map(|&i| {
                let t = g.point(i);
                (big_t - t).powf(e) + t.powf(e)
            })
            .collect();
        let y: Vec<f64> = fit_idx.iter().map(|&i| phi.values[i]).collect();
        let (b, a, _) = linear_fit(&x, &y);
        let max_rel = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| ((yi - (a * xi + b)) / (a * xi + b)).abs())
            .fold(0.0, f64::max);
        let printed = a_level * ((PI * (1.0 - hv)).sin() * gamma(3.0 - 2.0 * hv)).sqrt()
            / (2.0 * gamma(e) * (0.5 * PI * e).cos());
        let expected = printed / (e * c * mh_constant(HurstIndex::new(1.0 - hv)?));
        Some(ShapeFit {
            correlation: correlation(&x, &y),
            amplitude: a,
            offset: b,
            max_rel_deviation: max_rel,
            expected_amplitude: expected,
            printed_amplitude: printed,
        })
    } else {
        None
    };
    Ok(DriftRemoval {
        h,
        horizon: big_t,
        gprime: gprime.clone(),
        phi,
        roundtrip_residual,
        truncated_roundtrip_residual,
        validation_window: window,
        flagged,
        shape,
    })
}
