//! Geometric fGBm market: bid/ask quotes under volatility uncertainty and
//! Clark-Ocone hedge ratios for Wick-polynomial claims.
//!
//! Naming follows the sublinear-expectation convention: `bid` is the sup
//! over scenarios of the discounted expected payoff (the super-hedging
//! level) and `ask` the inf, so `bid >= ask`. This is the reverse of the
//! usual market usage.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{clark_ocone_polynomial, ChaosExpansion, NoiseBasis, TruncationSpec, WickPolynomial};
use crate::error::{invalid, Error, Result};
use crate::gexp::solve_barenblatt_log;
use crate::model::{HurstIndex, ScenarioFamily, SeedSpec, TimeGrid, VolatilityBand, VolatilityScenario};
use crate::numerics::{mean_stderr, norm_cdf};
use crate::synth::GeneratorKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub spot: f64,
    pub rate: f64,
    /// Physical drift; pricing uses the rate.
    pub drift: f64,
    pub h: HurstIndex,
    pub band: VolatilityBand,
    pub horizon: f64,
}

impl MarketModel {
    pub fn new(spot: f64, rate: f64, h: HurstIndex, band: VolatilityBand, horizon: f64) -> Result<Self> {
        let m = Self {
            spot,
            rate,
            drift: rate,
            h,
            band,
            horizon,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(invalid(format!("spot must be > 0, got {}", self.spot)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("maturity must be > 0, got {}", self.horizon)));
        }
        if !self.rate.is_finite() || !self.drift.is_finite() {
            return Err(invalid("rate and drift must be finite"));
        }
        Ok(())
    }

    /// Total variance `sigma^2 T^{2H}` of the log price under a constant scenario.
    pub fn total_variance(&self, sigma: f64) -> f64 {
        sigma * sigma * self.horizon.powf(2.0 * self.h.value())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payoff {
    Call { strike: f64 },
    Put { strike: f64 },
    /// `sum_i c_i S_T^i`.
    PolynomialInS { coeffs: Vec<f64> },
    PolynomialWick(WickPolynomial),
}

impl Payoff {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Call { strike } | Self::Put { strike } if !(*strike > 0.0) => {
                Err(invalid(format!("strike must be > 0, got {strike}")))
            }
            Self::PolynomialInS { coeffs } if coeffs.is_empty() => Err(invalid("empty polynomial")),
            _ => Ok(()),
        }
    }

    /// Value at a terminal price (not defined for Wick claims).
    pub fn eval(&self, s: f64) -> Result<f64> {
        match self {
            Self::Call { strike } => Ok((s - strike).max(0.0)),
            Self::Put { strike } => Ok((strike - s).max(0.0)),
            Self::PolynomialInS { coeffs } => Ok(coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)),
            Self::PolynomialWick(_) => Err(Error::Unsupported(
                "Wick-polynomial claims are functionals of the noise, not of S_T".into(),
            )),
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            Self::Call { .. } | Self::Put { .. } => true,
            Self::PolynomialInS { coeffs } => coeffs.len() <= 2 || (coeffs.len() == 3 && coeffs[2] >= 0.0),
            Self::PolynomialWick(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Engine {
    /// Monte Carlo per scenario; non-constant scenarios are simulated on a
    /// grid of `grid_n` steps.
    ScenarioMc { num_paths: usize, seed: u64, grid_n: usize },
    /// Barenblatt equation in log price (`H = 1/2` only).
    Pde { space_steps: usize },
    PerScenarioClosedForm,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ScenarioMc { .. } => "scenario_mc",
            Self::Pde { .. } => "pde",
            Self::PerScenarioClosedForm => "closed_form",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceQuote {
    pub bid: f64,
    pub ask: f64,
    pub engine: String,
    pub bid_scenario: String,
    pub ask_scenario: String,
    /// Standard error (MC), grid-refinement difference (PDE) or 0 (closed form).
    pub bid_error: f64,
    pub ask_error: f64,
    pub error_kind: String,
    /// Quotes are sup/inf over a finite family rather than all adapted
    /// scenarios and the payoff is not convex.
    pub family_restricted: bool,
    pub warnings: Vec<String>,
}

/// `S_T = x exp(r T + sigma z T^H - sigma^2 T^{2H} / 2)`.
pub fn terminal_price(model: &MarketModel, sigma: f64, z: f64) -> f64 {
    let t = model.horizon;
    let hv = model.h.value();
    model.spot * (model.rate * t + sigma * z * t.powf(hv) - 0.5 * sigma * sigma * t.powf(2.0 * hv)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsValue {
    pub value: f64,
    /// `v <= 0`: the discounted intrinsic value was returned.
    pub intrinsic: bool,
}

/// Lognormal call value with total log variance `v`.
pub fn bs_closed_form(x: f64, strike: f64, rate: f64, v: f64, t: f64) -> BsValue {
    let df = (-rate * t).exp();
    if !(v > 0.0) {
        return BsValue {
            value: (x - strike * df).max(0.0),
            intrinsic: true,
        };
    }
    let sd = v.sqrt();
    let d1 = ((x / strike).ln() + rate * t + 0.5 * v) / sd;
    let d2 = d1 - sd;
    BsValue {
        value: x * norm_cdf(d1) - strike * df * norm_cdf(d2),
        intrinsic: false,
    }
}

fn bs_put(x: f64, strike: f64, rate: f64, v: f64, t: f64) -> f64 {
    bs_closed_form(x, strike, rate, v, t).value - x + strike * (-rate * t).exp()
}

fn default_family(model: &MarketModel) -> Result<ScenarioFamily> {
    ScenarioFamily::extremes(model.band, &TimeGrid::new(0.0, model.horizon, 1)?)
}

struct Leg {
    value: f64,
    error: f64,
    scenario: String,
}

fn fold_quote(legs: Vec<Leg>, engine: &Engine, error_kind: &str) -> PriceQuote {
    let bid = legs.iter().max_by(|a, b| a.value.total_cmp(&b.value)).expect("nonempty");
    let ask = legs.iter().min_by(|a, b| a.value.total_cmp(&b.value)).expect("nonempty");
    PriceQuote {
        bid: bid.value,
        ask: ask.value,
        engine: engine.name().into(),
        bid_scenario: bid.scenario.clone(),
        ask_scenario: ask.scenario.clone(),
        bid_error: bid.error,
        ask_error: ask.error,
        error_kind: error_kind.into(),
        family_restricted: false,
        warnings: Vec::new(),
    }
}

/// Bid (sup) and ask (inf) of the discounted expected payoff. `family`
/// defaults to the two constant band edges; the PDE engine always uses the
/// full band.
pub fn price_bid_ask(
    model: &MarketModel,
    payoff: &Payoff,
    engine: &Engine,
    family: Option<&ScenarioFamily>,
) -> Result<PriceQuote> {
    model.validate()?;
    payoff.validate()?;
    if let Payoff::PolynomialWick(_) = payoff {
        return Err(Error::Unsupported(
            "Wick-polynomial claims are handled by hedge_ratio, not by the pricing engines".into(),
        ));
    }
    let owned;
    let family = match family {
        Some(f) => f,
        None => {
            owned = default_family(model)?;
            &owned
        }
    };
    if family.is_empty() {
        return Err(invalid("empty scenario family"));
    }
    let df = (-model.rate * model.horizon).exp();
    let mut quote = match *engine {
        Engine::PerScenarioClosedForm => {
            let strike_call = match payoff {
                Payoff::Call { strike } => Ok((*strike, true)),
                Payoff::Put { strike } => Ok((*strike, false)),
                _ => Err(Error::Unsupported("closed form is available for calls and puts only".into())),
            }?;
            let legs = family
                .members
                .iter()
                .map(|s| {
                    let sigma = s.constant_level().ok_or_else(|| {
                        Error::Unsupported(format!(
                            "closed form needs constant scenarios, got {}",
                            s.label()
                        ))
                    })?;
                    let v = model.total_variance(sigma);
                    let (k, call) = strike_call;
                    let value = if call {
                        bs_closed_form(model.spot, k, model.rate, v, model.horizon).value
                    } else {
                        bs_put(model.spot, k, model.rate, v, model.horizon)
                    };
                    Ok(Leg {
                        value,
                        error: 0.0,
                        scenario: s.label(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            fold_quote(legs, engine, "exact")
        }
        Engine::Pde { space_steps } => {
            if !model.h.is_half() {
                return Err(Error::Unsupported(format!(
                    "the PDE engine solves the G-heat (Barenblatt) equation, which is only available for H = 1/2; got H = {}",
                    model.h
                )));
            }
            if space_steps < 20 {
                return Err(invalid("PDE engine needs at least 20 space steps"));
            }
            let solve = |n: usize, sign: f64| -> Result<f64> {
                let sd = model.band.sigma_hi * model.horizon.sqrt();
                let y0 = model.spot.ln();
                let k = match payoff {
                    Payoff::Call { strike } | Payoff::Put { strike } => (strike / model.spot).ln().abs(),
                    _ => 0.0,
                };
                let half = (6.0 * sd).max(k + 4.0 * sd) + model.rate.abs() * model.horizon + 0.5;
                let grid = TimeGrid::new(y0 - half, y0 + half, n)?;
                let f = |s: f64| sign * payoff.eval(s).expect("checked above");
                let sol = solve_barenblatt_log(&f, &model.band, model.rate, model.horizon, &grid)?;
                Ok(sign * sol.value_at(y0)?)
            };
            let bid = solve(space_steps, 1.0)?;
            let ask = solve(space_steps, -1.0)?;
            let bid_coarse = solve(space_steps / 2, 1.0)?;
            let ask_coarse = solve(space_steps / 2, -1.0)?;
            PriceQuote {
                bid,
                ask,
                engine: engine.name().into(),
                bid_scenario: format!("G-optimal in [{}, {}]", model.band.sigma_lo, model.band.sigma_hi),
                ask_scenario: format!("G-optimal in [{}, {}]", model.band.sigma_lo, model.band.sigma_hi),
                bid_error: (bid - bid_coarse).abs(),
                ask_error: (ask - ask_coarse).abs(),
                error_kind: "grid".into(),
                family_restricted: false,
                warnings: Vec::new(),
            }
        }
        Engine::ScenarioMc {
            num_paths,
            seed,
            grid_n,
        } => {
            if num_paths < 2 {
                return Err(invalid("need at least two paths"));
            }
            let seed = SeedSpec::new(seed);
            let mut legs = Vec::with_capacity(family.len());
            for s in &family.members {
                let st = scenario_terminal_prices(model, s, num_paths, seed, grid_n)?;
                let disc: Vec<f64> = st
                    .iter()
                    .map(|&x| df * payoff.eval(x).expect("checked above"))
                    .collect();
                let (m, se) = mean_stderr(&disc);
                legs.push(Leg {
                    value: m,
                    error: se,
                    scenario: s.label(),
                });
            }
            fold_quote(legs, engine, "stderr")
        }
    };
    if !payoff.is_convex() && !matches!(engine, Engine::Pde { .. }) {
        quote.family_restricted = true;
        quote
            .warnings
            .push("non-convex payoff: sup/inf over a finite scenario family is only a bound".into());
    }
    if quote.bid < quote.ask {
        // identical random numbers make this impossible for sup/inf over one
        // family; keep the guard for the grid-based engine
        return Err(Error::Numerical(format!(
            "bid {} below ask {}",
            quote.bid, quote.ask
        )));
    }
    Ok(quote)
}

/// Terminal prices under one scenario, common random numbers across
/// scenarios. Non-constant scenarios use the moving-average generator and
/// its exact discrete variance for the martingale correction.
pub fn scenario_terminal_prices(
    model: &MarketModel,
    scenario: &VolatilityScenario,
    num_paths: usize,
    seed: SeedSpec,
    grid_n: usize,
) -> Result<Vec<f64>> {
    if let Some(sigma) = scenario.constant_level() {
        return Ok((0..num_paths)
            .into_par_iter()
            .map(|i| {
                let z: f64 = seed.rng(SeedSpec::TERMINAL, i as u64).sample(StandardNormal);
                terminal_price(model, sigma, z)
            })
            .collect());
    }
    let grid = TimeGrid::new(0.0, model.horizon, grid_n.max(1))?;
    let e = GeneratorKind::Auto.generate(model.h, &grid, scenario, num_paths, seed)?;
    let var = *e.metadata.variance.last().ok_or_else(|| Error::Numerical("empty variance".into()))?;
    let t = model.horizon;
    Ok(e.paths
        .iter()
        .map(|p| model.spot * (model.rate * t + p[grid.n] - 0.5 * var).exp())
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgeRatio {
    pub t: f64,
    pub sigma: f64,
    /// Chaos expansion of the Clark-Ocone integrand at `t` (w.r.t. the
    /// scenario's fGBm).
    pub integrand: ChaosExpansion,
    pub integrand_value: f64,
    pub spot_at_t: f64,
    /// `e^{-r(T-t)} psi(t) / S(t)` on the sampled noise.
    pub ratio: f64,
    pub expectation: f64,
    pub reconstruction_residual: f64,
    pub label: String,
}

/// Clark-Ocone integrand of a Wick-polynomial claim under the constant
/// scenario `sigma`, evaluated on one draw of the noise coordinates.
///
/// The claim is a polynomial in `X_i = int f_i dB_H` with `B_H` the scenario
/// process; `psi` is the integrand with respect to the same process.
pub fn hedge_ratio(
    model: &MarketModel,
    payoff: &Payoff,
    sigma: f64,
    t: f64,
    basis: &NoiseBasis,
    trunc: &TruncationSpec,
    seed: SeedSpec,
) -> Result<HedgeRatio> {
    let Payoff::PolynomialWick(p) = payoff else {
        return Err(Error::Unsupported(
            "hedge ratios are provided for Wick-polynomial claims only".into(),
        ));
    };
    if !(sigma > 0.0) {
        return Err(invalid("scenario volatility must be > 0"));
    }
    if (basis.horizon() - model.horizon).abs() > 1e-12 {
        return Err(invalid("noise basis horizon differs from the maturity"));
    }
    if !(0.0..=model.horizon).contains(&t) {
        return Err(Error::OutOfDomain(format!("t={t} outside [0, {}]", model.horizon)));
    }
    // P(sigma X~) in terms of the unit process
    let scaled = WickPolynomial::new(
        p.kernels.clone(),
        p.terms
            .iter()
            .map(|(e, c)| (e.clone(), c * sigma.powi(e.iter().sum::<u32>() as i32))),
    )?;
    let co = clark_ocone_polynomial(&scaled, basis, trunc)?;
    let unit_psi = crate::chaos::clark_ocone_integrand(&scaled, t, basis, trunc)?;
    let psi = unit_psi.scale(1.0 / sigma);
    let mut rng = seed.rng(SeedSpec::TERMINAL, 0);
    let xi: Vec<f64> = (0..trunc.max_basis).map(|_| rng.sample(StandardNormal)).collect();
    let bt = basis.fgbm_chaos_at(t, trunc)?.evaluate(&xi);
    let hv = model.h.value();
    let spot_at_t = model.spot * (model.rate * t + sigma * bt - 0.5 * sigma * sigma * t.powf(2.0 * hv)).exp();
    let value = psi.evaluate(&xi);
    Ok(HedgeRatio {
        t,
        sigma,
        integrand_value: value,
        ratio: (-model.rate * (model.horizon - t)).exp() * value / spot_at_t,
        integrand: psi,
        spot_at_t,
        expectation: co.expectation,
        reconstruction_residual: co.residual,
        label: "Clark-Ocone integrand".into(),
    })
}
