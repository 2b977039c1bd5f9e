//! Property suites behind `fgbm verify`. Each check records the measured
//! residual next to its tolerance so reports stay machine-readable.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chaos::{
    clark_ocone_polynomial, gnoise_coeffs, verify_fractional_ito, wick_ito_integral, ChaosExpansion,
    HermiteSpectral, ItoFunction, Kernel, McCheck, NoiseBasis, TruncationSpec, WickPolynomial,
};
use crate::error::{invalid, Result};
use crate::fracops::{
    hermite_function, mh_constant, mh_norm_sq, mh_prime_norm_sq, mh_time_domain, parseval_closed_form,
    OperatorParams, SampledFunction, StepFunction,
};
use crate::gexp::girsanov_phi;
use crate::model::{HurstIndex, ScenarioFamily, SeedSpec, TimeGrid, VolatilityBand};
use crate::synth::stats::{autocorr_closed_form, covariance_closed_form, increment_covariance_upper_lower};
use crate::synth::GeneratorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Operators,
    Noise,
    Wick,
    Ito,
    ClarkOcone,
    Girsanov,
    Lrd,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Operators,
        Suite::Noise,
        Suite::Wick,
        Suite::Ito,
        Suite::ClarkOcone,
        Suite::Girsanov,
        Suite::Lrd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Operators => "operators",
            Self::Noise => "noise",
            Self::Wick => "wick",
            Self::Ito => "ito",
            Self::ClarkOcone => "clark-ocone",
            Self::Girsanov => "girsanov",
            Self::Lrd => "lrd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|x| x.name()).collect();
                invalid(format!("unknown suite '{s}', expected one of {}", names.join(", ")))
            })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One property: passes iff `measured <= tolerance` (NaN fails).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            pass: measured <= tolerance,
        }
    }

    /// Boolean property, reported as 0 (holds) or 1 (violated).
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::at_most(name, if ok { 0.0 } else { 1.0 }, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Paths per scenario for the Monte Carlo checks.
    pub num_paths: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 2024,
            num_paths: 10_000,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<SuiteReport> {
    let start = Instant::now();
    let checks = match suite {
        Suite::Operators => operators()?,
        Suite::Noise => noise()?,
        Suite::Wick => wick()?,
        Suite::Ito => ito(opts)?,
        Suite::ClarkOcone => clark_ocone(opts)?,
        Suite::Girsanov => girsanov()?,
        Suite::Lrd => lrd(opts)?,
    };
    Ok(SuiteReport {
        suite,
        passed: checks.iter().all(|c| c.pass),
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn hi(h: f64) -> Result<HurstIndex> {
    HurstIndex::new(h)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Relative error of the numerical `||M_H' 1_[0,1]||^2` against its closed
/// form, for `H = 0.2, 0.3, ..., 0.8`.
pub fn parseval_errors() -> Result<Vec<(f64, f64)>> {
    let ind = StepFunction::indicator(0.0, 1.0)?;
    (2..=8)
        .map(|i| {
            let h = hi(i as f64 / 10.0)?;
            Ok((h.value(), rel(mh_prime_norm_sq(&ind, h), parseval_closed_form(h, 1.0))))
        })
        .collect()
}

fn operators() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (h, e) in parseval_errors()? {
        out.push(Check::at_most(format!("parseval H={h}"), e, 1e-3));
    }
    out.push(Check::at_most(
        "parseval closed form at H=1/2",
        (parseval_closed_form(hi(0.5)?, 1.0) - 1.0).abs(),
        1e-15,
    ));
    for h in [0.3, 0.7] {
        let hh = hi(h)?;
        let v = mh_norm_sq(&StepFunction::indicator(0.4, 1.9)?, hh);
        out.push(Check::at_most(
            format!("variance of M_H 1_[0.4,1.9] H={h}"),
            rel(v, 1.5f64.powf(2.0 * h)),
            1e-3,
        ));
        // 1_[0,s] + 1_[0,t] with s=0.5, t=1.2
        let two = StepFunction::new(vec![0.0, 0.5, 1.2], vec![2.0, 1.0])?;
        let want = 0.5f64.powf(2.0 * h) + 1.2f64.powf(2.0 * h) + 2.0 * covariance_closed_form(hh, 1.0, 0.5, 1.2);
        out.push(Check::at_most(
            format!("covariance via M_H norms H={h}"),
            rel(mh_norm_sq(&two, hh), want),
            1e-3,
        ));
    }
    Ok(out)
}

fn noise() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let tr = TruncationSpec::new(1, 40)?;
    let v = gnoise_coeffs(0.8, hi(0.5)?, &tr)?;
    let dev = v
        .iter()
        .enumerate()
        .map(|(k, x)| (x - hermite_function(k + 1, 0.8)).abs())
        .fold(0.0, f64::max);
    out.push(Check::at_most("noise is hermite functions at H=1/2", dev, 0.0));
    let tr4 = TruncationSpec::new(1, 4)?;
    for h in [0.3, 0.7] {
        let mut worst = 0.0f64;
        for t in [0.0, 0.5, 1.3] {
            let v = gnoise_coeffs(t, hi(h)?, &tr4)?;
            for k in 1..=4 {
                let f = move |x: f64| hermite_function(k, x);
                let o = mh_time_domain(&f, (-14.0, 14.0), t, hi(h)?);
                worst = worst.max((v[k - 1] - o).abs());
            }
        }
        out.push(Check::at_most(format!("noise vs time-domain operator H={h}"), worst, 1e-5));

        let sp = HermiteSpectral::new(hi(h)?, 32, 2.0)?;
        let d = 1e-4;
        let mut worst = 0.0f64;
        for t in [0.2, 0.9, 1.7] {
            let (up, dn, m) = (sp.integrated(t + d), sp.integrated(t - d), sp.noise(t));
            for k in 0..32 {
                worst = worst.max(((up[k] - dn[k]) / (2.0 * d) - m[k]).abs());
            }
        }
        out.push(Check::at_most(format!("d/dt integrated = noise H={h}"), worst, 1e-6));

        let c = mh_constant(hi(h)?) * mh_constant(hi(1.0 - h)?);
        let dual = HermiteSpectral::new(hi(1.0 - h)?, 12, 1.0)?;
        let sp = HermiteSpectral::new(hi(h)?, 12, 1.0)?;
        let mut worst = 0.0f64;
        for t in [0.0, 0.4, 1.0] {
            let (e, m) = (sp.inverse(t), dual.noise(t));
            for k in 0..12 {
                worst = worst.max((e[k] - m[k] / c).abs());
            }
        }
        out.push(Check::at_most(format!("inverse is the dual operator H={h}"), worst, 1e-12));
    }
    Ok(out)
}

/// `int_0^T B dB` against `B_T^{<>2} / 2` (coefficient distance) and the
/// ordinary form `B_T^2 / 2 - T^{2H} / 2` with `K` basis functions.
pub fn int_b_db_residuals(h: f64, horizon: f64, kmax: usize) -> Result<(f64, f64)> {
    let nb = NoiseBasis::new(hi(h)?, horizon, 16, kmax)?;
    let t = TruncationSpec::new(2, kmax)?;
    let y = |s: f64| nb.fgbm_chaos_at(s, &t);
    let r = wick_ito_integral(&y, &nb, &t)?;
    let bt = nb.fgbm_chaos_at(horizon, &t)?;
    let wick = r.distance_sq(&bt.wick_power(2).scale(0.5)).sqrt();
    let var = horizon.powf(2.0 * h);
    let ordinary = bt
        .ordinary_polynomial(&[0.0, 0.0, 0.5], var)?
        .add(&ChaosExpansion::constant(-0.5 * var, t));
    Ok((wick, r.distance_sq(&ordinary).sqrt()))
}

fn wick() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for h in [0.3, 0.5, 0.7] {
        let (w, o) = int_b_db_residuals(h, 1.0, 64)?;
        out.push(Check::at_most(format!("int B dB = B^<>2/2 H={h} K=64"), w, 1e-10));
        out.push(Check::at_most(format!("int B dB = B^2/2 - T^2H/2 H={h} K=64"), o, 1e-10));
    }
    let t = TruncationSpec::new(12, 4)?;
    let f = ChaosExpansion::first_order(&[0.3, 0.1], t);
    let g = ChaosExpansion::first_order(&[0.0, -0.2, 0.4], t);
    let lhs = f.add(&g).wick_exp()?;
    let rhs = f.wick_exp()?.wick_product(&g.wick_exp()?);
    out.push(Check::at_most("exp<>(F+G) = exp<>F <> exp<>G", lhs.max_abs_diff(&rhs), 1e-12));
    let e = f.wick_exp()?;
    out.push(Check::at_most(
        "|exp<>(F)|^2 = exp(|F|^2)",
        (e.norm_sq() + e.dropped_mass - f.norm_sq().exp()).abs(),
        1e-13,
    ));
    out.push(Check::at_most("E[exp<>(F)] = 1", (e.expectation() - 1.0).abs(), 0.0));
    Ok(out)
}

fn ito(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for h in [0.3, 0.5, 0.7] {
        let nb = NoiseBasis::new(hi(h)?, 1.0, 16, 8)?;
        for f in [ItoFunction::Square, ItoFunction::Cube] {
            let r = verify_fractional_ito(f, &nb, &TruncationSpec::new(4, 8)?, None)?;
            out.push(Check::at_most(format!("ito {f} H={h} coefficients"), r.coefficient_residual, 1e-6));
        }
        let f = ItoFunction::Exp { a: 0.8, b0: 0.2, b1: 0.0 };
        let r = verify_fractional_ito(f, &nb, &TruncationSpec::new(8, 8)?, None)?;
        out.push(Check::at_most(format!("ito {f} H={h} coefficients"), r.coefficient_residual, 1e-6));
    }
    let nb = NoiseBasis::new(hi(0.7)?, 1.0, 8, 4)?;
    let mc = McCheck {
        band: VolatilityBand::new(0.2, 0.5)?,
        num_paths: opts.num_paths.min(4000).max(500),
        steps: 128,
        seed: opts.seed,
    };
    for f in [ItoFunction::Square, ItoFunction::Exp { a: 1.5, b0: 0.1, b1: 0.3 }] {
        let r = verify_fractional_ito(f, &nb, &TruncationSpec::new(6, 4)?, Some(&mc))?;
        let z = r
            .scenarios
            .iter()
            .map(|s| s.mean.abs() / s.stderr.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        out.push(Check::at_most(format!("ito {f} H=0.7 path residual (stderr units)"), z, 3.0));
    }
    Ok(out)
}

/// Clark-Ocone reconstruction residuals for every monomial `X^{<>n}`,
/// `n <= 3`, of `X = B_H(T)` plus random degree-3 polynomials in two
/// variables.
pub fn clark_ocone_residuals(seed: u64, random_cases: usize) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let t = TruncationSpec::new(3, 8)?;
    for h in [0.3, 0.5, 0.7] {
        let nb = NoiseBasis::new(hi(h)?, 1.0, 8, 8)?;
        for n in 0..=3u32 {
            let p = WickPolynomial::new(vec![Kernel::Indicator { a: 0.0, b: 1.0 }], [(vec![n], 1.0)])?;
            let r = clark_ocone_polynomial(&p, &nb, &t)?;
            out.push((format!("clark-ocone B_T^<>{n} H={h}"), r.residual + r.dropped_mass));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = TimeGrid::new(0.0, 1.0, 16)?;
    let f = SampledFunction::on_grid(grid, |s| (4.0 * s).sin() - 0.3)?;
    for case in 0..random_cases {
        let h = rng.random_range(0.2..0.8);
        let lo = rng.random_range(0.0..0.5);
        let terms: Vec<(Vec<u32>, f64)> = (0..rng.random_range(1..6))
            .map(|_| {
                let a = rng.random_range(0..=3u32);
                let b = rng.random_range(0..=3 - a);
                (vec![a, b], rng.random_range(-1.0..1.0))
            })
            .collect();
        let nb = NoiseBasis::new(hi(h)?, 1.0, 8, 8)?;
        let p = WickPolynomial::new(vec![Kernel::Sampled(f.clone()), Kernel::Indicator { a: lo, b: 1.0 }], terms)?;
        let r = clark_ocone_polynomial(&p, &nb, &t)?;
        out.push((format!("clark-ocone random case {case} H={h:.3}"), r.residual + r.dropped_mass));
    }
    Ok(out)
}

fn clark_ocone(opts: &SuiteOptions) -> Result<Vec<Check>> {
    Ok(clark_ocone_residuals(opts.seed, 12)?
        .into_iter()
        .map(|(n, r)| Check::at_most(n, r, 1e-10))
        .collect())
}

fn girsanov() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let g = TimeGrid::new(0.0, 1.0, 256)?;
    let a = SampledFunction::on_grid(g, |_| 1.7)?;
    let r = girsanov_phi(&a, &OperatorParams::new(hi(0.5)?))?;
    let dev = r.phi.values.iter().map(|v| (v - 1.7).abs()).fold(0.0, f64::max);
    out.push(Check::at_most("phi = g' at H=1/2", dev, 1e-12));
    let g = TimeGrid::new(0.0, 1.0, 1024)?;
    let a = SampledFunction::on_grid(g, |_| 1.0)?;
    for h in [0.3, 0.7] {
        let r = girsanov_phi(&a, &OperatorParams::new(hi(h)?).with_pad(32))?;
        out.push(Check::at_most(format!("round trip M_H phi = g' H={h}"), r.roundtrip_residual, 0.02));
        let s = r
            .shape
            .ok_or_else(|| crate::error::Error::Numerical("shape fit missing".into()))?;
        out.push(Check::at_most(format!("shape 1 - correlation H={h}"), 1.0 - s.correlation, 1e-3));
        out.push(Check::at_most(
            format!("shape amplitude vs M_H^-1 1_[0,T] H={h}"),
            rel(s.amplitude, s.expected_amplitude),
            0.02,
        ));
    }
    Ok(out)
}

/// Worst `|MC - closed form| / stderr` over lags `1..=nmax` and both band
/// edges, plus the MC upper estimates.
pub fn lrd_deviation(h: f64, band: VolatilityBand, nmax: usize, num_paths: usize, seed: u64) -> Result<(f64, Vec<f64>)> {
    let hh = hi(h)?;
    let fam = ScenarioFamily::extremes(band, &TimeGrid::new(0.0, 1.0, 1)?)?;
    let st = increment_covariance_upper_lower(&fam, hh, nmax, num_paths, SeedSpec::new(seed), &GeneratorKind::Auto)?;
    let mut worst = 0.0f64;
    for n in 1..=nmax {
        let (up, lo) = autocorr_closed_form(n, hh, &band);
        let i = st.idx(0, n - 1);
        worst = worst
            .max((st.upper[i] - up).abs() / st.upper_stderr[i])
            .max((st.lower[i] - lo).abs() / st.lower_stderr[i]);
    }
    Ok((worst, st.upper.clone()))
}

/// `sum_{n=1}^N` of the unit-variance lag covariances (telescoped).
pub fn lrd_partial_sum(h: HurstIndex, n: u64) -> f64 {
    let e = 2.0 * h.value();
    let nf = n as f64;
    0.5 * ((nf + 1.0).powf(e) - nf.powf(e) - 1.0)
}

fn lrd(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let band = VolatilityBand::new(0.1, 0.3)?;
    for h in [0.3, 0.5, 0.7] {
        let (z, upper) = lrd_deviation(h, band, 10, opts.num_paths, opts.seed)?;
        out.push(Check::at_most(format!("lag covariance MC vs closed form H={h} (stderr units)"), z, 3.0));
        let hh = hi(h)?;
        if h == 0.5 {
            let m = (1..=10).map(|n| autocorr_closed_form(n, hh, &band).0.abs()).fold(0.0, f64::max);
            out.push(Check::at_most("closed form vanishes at H=1/2", m, 0.0));
        } else if h < 0.5 {
            // negative correlations with a finite sum -1/2
            let neg = (1..=10).all(|n| autocorr_closed_form(n, hh, &band).0 < 0.0);
            out.push(Check::holds("anti-persistent: closed-form lags negative", neg));
            out.push(Check::at_most(
                "anti-persistent: partial sums converge to -1/2",
                (lrd_partial_sum(hh, 1_000_000) + 0.5).abs(),
                1e-2,
            ));
            out.push(Check::holds("anti-persistent: MC lag-1 negative", upper[0] < 0.0));
        } else {
            let inc = upper.iter().all(|v| *v > 0.0);
            out.push(Check::holds("long memory: MC partial sums increasing", inc));
            out.push(Check::holds(
                "long memory: closed-form partial sums diverge",
                lrd_partial_sum(hh, 1_000_000) > 10.0 * lrd_partial_sum(hh, 10),
            ));
        }
    }
    Ok(out)
}
