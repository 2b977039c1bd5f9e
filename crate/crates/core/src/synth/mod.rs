//! fGBm path synthesis (moving average, wavelet, dense covariance
//! factorization) and upper/lower statistics over scenario families.
//!
//! Every generator is a fixed linear map `B = A (s .* z)` from i.i.d.
//! standard normals `z` to grid values, where `s` carries the scenario
//! volatility of each noise cell. Path `i` draws `z` from
//! [`SeedSpec::path_rng`], so paths are independent of thread count and
//! scenarios run on the same seed share their random numbers.

pub mod stats;
pub mod wavelet;

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fracops::marchaud_weights;
use crate::model::{HurstIndex, SeedSpec, TimeGrid, VolatilityScenario};
use crate::numerics::gamma;

pub use stats::{
    autocorr_closed_form, covariance_closed_form, estimate_upper_lower_covariance,
    estimate_upper_lower_covariance_with, holder_moment_check, increment_covariance_upper_lower,
    sample_covariance, self_similarity_check, HolderReport, SelfSimilarityEntry,
    SelfSimilarityReport, UpperLowerStat,
};
pub use wavelet::WaveletParams;

/// Moving-average constant `C_H^w`, giving unit variance at `t = 1`.
pub fn moving_average_constant(h: HurstIndex) -> f64 {
    let h = h.value();
    (2.0 * h * (PI * h).sin() * gamma(2.0 * h)).sqrt() / gamma(h + 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    MovingAverage,
    Wavelet,
    CovarianceFactorization,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMetadata {
    pub warnings: Vec<String>,
    /// A-priori bound on the variance missed by truncating the noise history,
    /// relative to `sigma^2 T^{2H}`.
    pub tail_bound: Option<f64>,
    /// Exact variance of the discretized process at each grid node.
    pub variance: Vec<f64>,
    pub noise_dimension: usize,
}

/// Simulated paths on a grid, one row per path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub h: HurstIndex,
    pub grid: TimeGrid,
    pub scenario: VolatilityScenario,
    pub paths: Vec<Vec<f64>>,
    pub seed: SeedSpec,
    pub method: Method,
    pub metadata: EnsembleMetadata,
}

impl PathEnsemble {
    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    /// Values of all paths at grid node `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[i]).collect()
    }

    /// CSV with header `t,path_0,...`, one row per grid node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("t");
        for k in 0..self.paths.len() {
            header.push_str(&format!(",path_{k}"));
        }
        writeln!(w, "{header}")?;
        for (i, t) in self.grid.points().iter().enumerate() {
            let mut row = format!("{t}");
            for p in &self.paths {
                row.push_str(&format!(",{}", p[i]));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Dense linear map from noise to grid values; row 0 (t = t0 = 0) is empty.
#[derive(Debug, Clone)]
pub struct LinearGenerator {
    rows: Vec<Vec<f64>>,
    noise_dim: usize,
}

impl LinearGenerator {
    /// `coeffs[i][c]` already includes the volatility of noise cell `c`.
    pub fn new(coeffs: Vec<Vec<f64>>, noise_dim: usize) -> Self {
        Self {
            rows: coeffs,
            noise_dim,
        }
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn variances(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|a| a * a).sum()).collect()
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.noise_dim).map(|_| rng.sample(StandardNormal)).collect();
        self.apply(&z)
    }

    pub fn sample_paths(&self, num_paths: usize, seed: SeedSpec) -> Vec<Vec<f64>> {
        (0..num_paths)
            .into_par_iter()
            .map(|p| {
                let mut rng = seed.path_rng(p as u64);
                self.sample(&mut rng)
            })
            .collect()
    }
}

fn check_grid_starts_at_zero(grid: &TimeGrid) -> Result<()> {
    if grid.t0 != 0.0 {
        return Err(invalid(format!(
            "path grids start at t=0 (B_H(0)=0), got t0={}",
            grid.t0
        )));
    }
    Ok(())
}

fn check_paths(num_paths: usize) -> Result<()> {
    if num_paths == 0 {
        return Err(invalid("num_paths must be >= 1"));
    }
    Ok(())
}

/// Moving-average settings: sub-cells per grid step and history window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingAverageParams {
    /// Target number of fine noise cells on `[0, T]`.
    pub fine_cells: usize,
    /// History window in units of the horizon.
    pub window: f64,
    /// Growth ratio of the history cells beyond one horizon.
    pub growth: f64,
    /// Relative tail variance above which a warning is attached.
    pub tail_tolerance: f64,
}

impl Default for MovingAverageParams {
    fn default() -> Self {
        Self {
            fine_cells: 1024,
            window: 20.0,
            growth: 1.1,
            tail_tolerance: 0.02,
        }
    }
}

/// Noise cells for the moving-average kernel: uniform on `[-T, T]`, then
/// geometrically growing back to `-window*T`.
fn moving_average_cells(grid: &TimeGrid, p: &MovingAverageParams) -> Vec<(f64, f64)> {
    let t = grid.t1;
    let r = p.fine_cells.div_ceil(grid.n).max(1);
    let m = grid.n * r;
    let delta = t / m as f64;
    let mut cells = Vec::new();
    let mut a = -t;
    let mut w = delta;
    let lo = -p.window * t;
    let mut hist = Vec::new();
    while a > lo + 1e-12 * t {
        w *= p.growth;
        let b = a;
        a = (a - w).max(lo);
        hist.push((a, b));
    }
    hist.reverse();
    cells.extend(hist);
    for k in 0..(2 * m) {
        let a = -t + k as f64 * delta;
        let b = if k + 1 == 2 * m { t } else { -t + (k + 1) as f64 * delta };
        cells.push((a, b));
    }
    cells
}

/// `int_a^b (x - s)_+^g ds` for `g > -1`.
fn power_cell_integral(x: f64, a: f64, b: f64, g: f64) -> f64 {
    let b = b.min(x);
    if b <= a {
        return 0.0;
    }
    ((x - a).powf(g + 1.0) - (x - b).powf(g + 1.0)) / (g + 1.0)
}

fn moving_average_generator(
    h: HurstIndex,
    grid: &TimeGrid,
    scenario: &VolatilityScenario,
    p: &MovingAverageParams,
) -> (LinearGenerator, f64) {
    let hv = h.value();
    let g = hv - 0.5;
    let cw = moving_average_constant(h);
    let cells = moving_average_cells(grid, p);
    let sig: Vec<f64> = cells.iter().map(|c| scenario.value_clamped(c.0)).collect();
    let rows: Vec<Vec<f64>> = grid
        .points()
        .iter()
        .map(|&t| {
            cells
                .iter()
                .zip(&sig)
                .map(|(&(a, b), s)| {
                    let k = power_cell_integral(t, a, b, g) - power_cell_integral(0.0, a, b, g);
                    cw * k / (b - a).sqrt() * s
                })
                .collect()
        })
        .collect();
    let tail = cw * cw * g * g * p.window.powf(2.0 * hv - 2.0) / (2.0 - 2.0 * hv);
    (LinearGenerator::new(rows, cells.len()), tail)
}

/// Moving-average generator with default settings.
pub fn gen_moving_average(
    h: HurstIndex,
    grid: &TimeGrid,
    scenario: &VolatilityScenario,
    num_paths: usize,
    seed: SeedSpec,
) -> Result<PathEnsemble> {
    gen_moving_average_with(h, grid, scenario, num_paths, seed, &MovingAverageParams::default())
}

pub fn gen_moving_average_with(
    h: HurstIndex,
    grid: &TimeGrid,
    scenario: &VolatilityScenario,
    num_paths: usize,
    seed: SeedSpec,
    params: &MovingAverageParams,
) -> Result<PathEnsemble> {
    check_grid_starts_at_zero(grid)?;
    check_paths(num_paths)?;
    if params.window < 20.0 {
        return Err(invalid("moving-average history window must be at least 20 horizons"));
    }
    if !(params.growth >= 1.0) || params.fine_cells == 0 {
        return Err(invalid("moving-average cell settings out of range"));
    }
    let (gen, tail) = moving_average_generator(h, grid, scenario, params);
    let mut meta = EnsembleMetadata {
        tail_bound: Some(tail),
        variance: gen.variances(),
        noise_dimension: gen.noise_dim(),
        ..Default::default()
    };
    if tail > params.tail_tolerance {
        meta.warnings.push(format!(
            "history truncation may miss up to {:.2}% of the terminal variance",
            100.0 * tail
        ));
    }
    if scenario.constant_level().is_none() {
        meta.warnings
            .push("non-constant scenario: increments modulated inside the kernel".into());
    }
    Ok(PathEnsemble {
        h,
        grid: *grid,
        scenario: scenario.clone(),
        paths: gen.sample_paths(num_paths, seed),
        seed,
        method: Method::MovingAverage,
        metadata: meta,
    })
}

/// Linear map of the wavelet method: noise on `[-window*T, T]` expanded in
/// periodized wavelets on unit blocks, kernels projected by the DWT of the
/// Marchaud quadrature weights.
pub fn wavelet_generator(
    h: HurstIndex,
    params: &WaveletParams,
    grid: &TimeGrid,
    scenario: &VolatilityScenario,
) -> Result<LinearGenerator> {
    params.validate()?;
    check_grid_starts_at_zero(grid)?;
    let t_end = grid.t1;
    let finest = 1usize << params.levels;
    if grid.n > finest {
        return Err(invalid(format!(
            "{} levels resolve 2^{} cells per horizon, grid asks for {}",
            params.levels, params.levels, grid.n
        )));
    }
    let alpha = h.value() + 0.5;
    let scale = moving_average_constant(h) * gamma(alpha);
    let blocks: Vec<(i64, usize)> = (-(params.window as i64)..=0)
        .map(|m| {
            let lv = if m >= -1 { params.levels } else { params.far_levels };
            (m, lv)
        })
        .collect();
    let mut sigmas = Vec::new();
    for &(m, lv) in &blocks {
        for idx in 0..(1usize << lv) {
            let (j, k) = wavelet::level_of(idx);
            let pos = if j < 0 {
                m as f64
            } else {
                m as f64 + k as f64 / (1u64 << j) as f64
            };
            sigmas.push(scenario.value_clamped(pos * t_end));
        }
    }
    let points = grid.points();
    let rows: Result<Vec<Vec<f64>>> = points
        .par_iter()
        .map(|&t| {
            let mut row = Vec::with_capacity(sigmas.len());
            for &(m, lv) in &blocks {
                let nf = 1usize << (lv + params.oversample);
                let bg = TimeGrid::new(m as f64 * t_end, (m + 1) as f64 * t_end, nf)?;
                let mut w = marchaud_weights(&bg, alpha, t)?;
                let last = w.pop().unwrap_or(0.0);
                w[0] += last;
                let inv = 1.0 / bg.dt().sqrt();
                w.iter_mut().for_each(|v| *v *= inv);
                let c = wavelet::dwt_periodic(&w, &params.filter);
                row.extend_from_slice(&c[..(1usize << lv)]);
            }
            Ok(row)
        })
        .collect();
    let mut rows = rows?;
    for r in rows.iter_mut() {
        for (a, s) in r.iter_mut().zip(&sigmas) {
            *a *= scale * s;
        }
    }
    Ok(LinearGenerator::new(rows, sigmas.len()))
}

pub fn gen_wavelet(
    h: HurstIndex,
    params: &WaveletParams,
    grid: &TimeGrid,
    scenario: &VolatilityScenario,
    num_paths: usize,
    seed: SeedSpec,
) -> Result<PathEnsemble> {
    check_paths(num_paths)?;
    let gen = wavelet_generator(h, params, grid, scenario)?;
    let mut meta = EnsembleMetadata {
        variance: gen.variances(),
        noise_dimension: gen.noise_dim(),
        ..Default::default()
    };
    if scenario.constant_level().is_none() {
        meta.warnings
            .push("non-constant scenario: coefficient variance taken at dyadic positions".into());
    }
    Ok(PathEnsemble {
        h,
        grid: *grid,
        scenario: scenario.clone(),
        paths: gen.sample_paths(num_paths, seed),
        seed,
        method: Method::Wavelet,
        metadata: meta,
    })
}

/// Lower Cholesky factor rows of the fBm covariance at `t_1..t_n`, padded
/// with an empty row for `t_0 = 0`.
pub fn cholesky_generator(h: HurstIndex, grid: &TimeGrid, sigma: f64) -> Result<LinearGenerator> {
    check_grid_starts_at_zero(grid)?;
    if grid.n > 2048 {
        return Err(invalid(format!(
            "dense factorization limited to 2048 grid points, got {}",
            grid.n
        )));
    }
    if !(sigma >= 0.0) {
        return Err(invalid("sigma must be >= 0"));
    }
    let pts = grid.points();
    let n = grid.n;
    let cov = DMatrix::from_fn(n, n, |i, j| covariance_closed_form(h, 1.0, pts[i + 1], pts[j + 1]));
    let sym = (&cov + cov.transpose()) * 0.5;
    let chol = sym.cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "covariance matrix for H={} on {} points is not numerically positive definite",
            h.value(),
            n
        ))
    })?;
    let l = chol.l();
    let mut rows = vec![vec![0.0; n]];
    for i in 0..n {
        rows.push((0..n).map(|j| l[(i, j)] * sigma).collect());
    }
    Ok(LinearGenerator::new(rows, n))
}

/// Exact Gaussian sampling from the closed-form covariance.
pub fn gen_cholesky_oracle(
    h: HurstIndex,
    grid: &TimeGrid,
    sigma: f64,
    num_paths: usize,
    seed: SeedSpec,
) -> Result<PathEnsemble> {
    check_paths(num_paths)?;
    let gen = cholesky_generator(h, grid, sigma)?;
    let scenario = VolatilityScenario::constant(sigma.max(f64::MIN_POSITIVE), (grid.t0, grid.t1))?;
    Ok(PathEnsemble {
        h,
        grid: *grid,
        scenario,
        paths: gen.sample_paths(num_paths, seed),
        seed,
        method: Method::CovarianceFactorization,
        metadata: EnsembleMetadata {
            variance: gen.variances(),
            noise_dimension: gen.noise_dim(),
            ..Default::default()
        },
    })
}

/// Generator choice for scenario-family estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeneratorKind {
    /// Covariance factorization for constant scenarios, moving average otherwise.
    Auto,
    CovarianceFactorization,
    MovingAverage(MovingAverageParams),
    Wavelet(WaveletParams),
}

impl GeneratorKind {
    pub fn build(
        &self,
        h: HurstIndex,
        grid: &TimeGrid,
        scenario: &VolatilityScenario,
    ) -> Result<LinearGenerator> {
        match self {
            GeneratorKind::Auto => match scenario.constant_level() {
                Some(s) => cholesky_generator(h, grid, s),
                None => Ok(moving_average_generator(h, grid, scenario, &MovingAverageParams::default()).0),
            },
            GeneratorKind::CovarianceFactorization => {
                let s = scenario.constant_level().ok_or_else(|| {
                    invalid("covariance factorization needs a constant scenario")
                })?;
                cholesky_generator(h, grid, s)
            }
            GeneratorKind::MovingAverage(p) => {
                check_grid_starts_at_zero(grid)?;
                Ok(moving_average_generator(h, grid, scenario, p).0)
            }
            GeneratorKind::Wavelet(p) => wavelet_generator(h, p, grid, scenario),
        }
    }

    pub fn method(&self, scenario: &VolatilityScenario) -> Method {
        match self {
            GeneratorKind::Auto if scenario.constant_level().is_some() => {
                Method::CovarianceFactorization
            }
            GeneratorKind::Auto | GeneratorKind::MovingAverage(_) => Method::MovingAverage,
            GeneratorKind::CovarianceFactorization => Method::CovarianceFactorization,
            GeneratorKind::Wavelet(_) => Method::Wavelet,
        }
    }

    pub fn generate(
        &self,
        h: HurstIndex,
        grid: &TimeGrid,
        scenario: &VolatilityScenario,
        num_paths: usize,
        seed: SeedSpec,
    ) -> Result<PathEnsemble> {
        check_paths(num_paths)?;
        let gen = self.build(h, grid, scenario)?;
        Ok(PathEnsemble {
            h,
            grid: *grid,
            scenario: scenario.clone(),
            paths: gen.sample_paths(num_paths, seed),
            seed,
            method: self.method(scenario),
            metadata: EnsembleMetadata {
                variance: gen.variances(),
                noise_dimension: gen.noise_dim(),
                ..Default::default()
            },
        })
    }
}
