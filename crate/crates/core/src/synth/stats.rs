//! Upper/lower statistics and self-similarity / Hölder checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GeneratorKind, PathEnsemble};
use crate::error::{invalid, Result};
use crate::model::{HurstIndex, ScenarioFamily, SeedSpec, TimeGrid, VolatilityBand};
use crate::numerics::{ks_statistic, linear_fit, mean_stderr};

/// `sigma^2/2 (|t|^{2H} + |s|^{2H} - |t-s|^{2H})`.
pub fn covariance_closed_form(h: HurstIndex, sigma: f64, s: f64, t: f64) -> f64 {
    let e = 2.0 * h.value();
    0.5 * sigma * sigma * (s.abs().powf(e) + t.abs().powf(e) - (t - s).abs().powf(e))
}

/// Lag-`n` covariance of unit increments, `(upper, lower)`:
/// `sigma^2/2 [(n+1)^{2H} - 2 n^{2H} + (n-1)^{2H}]` at the band edges.
pub fn autocorr_closed_form(n: usize, h: HurstIndex, band: &VolatilityBand) -> (f64, f64) {
    assert!(n >= 1, "lag must be >= 1");
    if h.is_half() {
        return (0.0, 0.0);
    }
    let e = 2.0 * h.value();
    let nf = n as f64;
    let core = 0.5 * ((nf + 1.0).powf(e) - 2.0 * nf.powf(e) + (nf - 1.0).powf(e));
    let hi = band.sigma_hi * band.sigma_hi * core;
    let lo = band.sigma_lo * band.sigma_lo * core;
    // for H < 1/2 the core is negative: the sup picks the smaller variance
    (hi.max(lo), hi.min(lo))
}

/// Estimates of `E[X]` (upper) and `-E[-X]` (lower) over a scenario family,
/// stored row-major with shape `(rows, cols)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperLowerStat {
    pub shape: (usize, usize),
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper_stderr: Vec<f64>,
    pub lower_stderr: Vec<f64>,
    /// Index into the family of the scenario attaining each entry.
    pub upper_scenario: Vec<usize>,
    pub lower_scenario: Vec<usize>,
    pub scenario_labels: Vec<String>,
    pub warnings: Vec<String>,
}

impl UpperLowerStat {
    /// Fold per-scenario `(mean, stderr)` tables into sup/inf.
    pub fn from_scenarios(
        shape: (usize, usize),
        per_scenario: &[(Vec<f64>, Vec<f64>)],
        labels: Vec<String>,
    ) -> Result<Self> {
        if per_scenario.is_empty() {
            return Err(invalid("empty scenario family"));
        }
        let len = shape.0 * shape.1;
        let mut out = Self {
            shape,
            upper: vec![f64::NEG_INFINITY; len],
            lower: vec![f64::INFINITY; len],
            upper_stderr: vec![0.0; len],
            lower_stderr: vec![0.0; len],
            upper_scenario: vec![0; len],
            lower_scenario: vec![0; len],
            scenario_labels: labels,
            warnings: Vec::new(),
        };
        for (k, (m, se)) in per_scenario.iter().enumerate() {
            for i in 0..len {
                if m[i] > out.upper[i] {
                    out.upper[i] = m[i];
                    out.upper_stderr[i] = se[i];
                    out.upper_scenario[i] = k;
                }
                if m[i] < out.lower[i] {
                    out.lower[i] = m[i];
                    out.lower_stderr[i] = se[i];
                    out.lower_scenario[i] = k;
                }
            }
        }
        Ok(out)
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.shape.1 + j
    }

    pub fn upper_at(&self, i: usize, j: usize) -> f64 {
        self.upper[self.idx(i, j)]
    }

    pub fn lower_at(&self, i: usize, j: usize) -> f64 {
        self.lower[self.idx(i, j)]
    }
}

/// Sample second-moment matrix `mean(B_s B_t)` and its standard errors.
pub fn sample_covariance(e: &PathEnsemble) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = e.grid.len();
    let cells: Vec<(f64, f64)> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let prod: Vec<f64> = e.paths.iter().map(|p| p[i] * p[j]).collect();
            mean_stderr(&prod)
        })
        .collect();
    let mut m = vec![vec![0.0; n]; n];
    let mut s = vec![vec![0.0; n]; n];
    for (k, (a, b)) in cells.into_iter().enumerate() {
        m[k / n][k % n] = a;
        s[k / n][k % n] = if b.is_finite() { b } else { 0.0 };
    }
    (m, s)
}

fn flatten(m: Vec<Vec<f64>>) -> Vec<f64> {
    m.into_iter().flatten().collect()
}

/// Upper/lower covariance over the family, default generator choice.
pub fn estimate_upper_lower_covariance(
    family: &ScenarioFamily,
    h: HurstIndex,
    grid: &TimeGrid,
    num_paths: usize,
    seed: SeedSpec,
) -> Result<UpperLowerStat> {
    estimate_upper_lower_covariance_with(family, h, grid, num_paths, seed, &GeneratorKind::Auto)
}

pub fn estimate_upper_lower_covariance_with(
    family: &ScenarioFamily,
    h: HurstIndex,
    grid: &TimeGrid,
    num_paths: usize,
    seed: SeedSpec,
    gen: &GeneratorKind,
) -> Result<UpperLowerStat> {
    if family.is_empty() {
        return Err(invalid("empty scenario family"));
    }
    let n = grid.len();
    let mut per = Vec::with_capacity(family.len());
    for s in &family.members {
        let e = gen.generate(h, grid, s, num_paths, seed)?;
        let (m, se) = sample_covariance(&e);
        per.push((flatten(m), flatten(se)));
    }
    let labels = family.members.iter().map(|s| s.label()).collect();
    let mut out = UpperLowerStat::from_scenarios((n, n), &per, labels)?;
    if num_paths < 100 {
        out.warnings.push(format!(
            "only {num_paths} paths per scenario; standard errors are unreliable"
        ));
    }
    Ok(out)
}

/// Covariances `E[(B(1)-B(0)) (B(n+1)-B(n))]` for `n = 1..=nmax` on the
/// integer grid `0..=nmax+1`, sup/inf over the family. Shape `(1, nmax)`.
pub fn increment_covariance_upper_lower(
    family: &ScenarioFamily,
    h: HurstIndex,
    nmax: usize,
    num_paths: usize,
    seed: SeedSpec,
    gen: &GeneratorKind,
) -> Result<UpperLowerStat> {
    if nmax == 0 {
        return Err(invalid("need at least one lag"));
    }
    let grid = TimeGrid::new(0.0, (nmax + 1) as f64, nmax + 1)?;
    let mut per = Vec::new();
    for s in &family.members {
        let s = rescale_horizon(s, &grid)?;
        let e = gen.generate(h, &grid, &s, num_paths, seed)?;
        let mut m = Vec::with_capacity(nmax);
        let mut se = Vec::with_capacity(nmax);
        for lag in 1..=nmax {
            let prod: Vec<f64> = e.paths.iter().map(|p| p[1] * (p[lag + 1] - p[lag])).collect();
            let (a, b) = mean_stderr(&prod);
            m.push(a);
            se.push(b);
        }
        per.push((m, se));
    }
    let labels = family.members.iter().map(|s| s.label()).collect();
    UpperLowerStat::from_scenarios((1, nmax), &per, labels)
}

/// Stretch a scenario's horizon onto `grid` (breakpoints scale with it).
fn rescale_horizon(
    s: &crate::model::VolatilityScenario,
    grid: &TimeGrid,
) -> Result<crate::model::VolatilityScenario> {
    use crate::model::ScenarioKind;
    let (a, b) = s.horizon;
    let map = |t: f64| grid.t0 + (t - a) / (b - a) * (grid.t1 - grid.t0);
    let kind = match &s.kind {
        ScenarioKind::PiecewiseConstant {
            breakpoints,
            levels,
        } => ScenarioKind::PiecewiseConstant {
            breakpoints: breakpoints.iter().map(|&t| map(t)).collect(),
            levels: levels.clone(),
        },
        ScenarioKind::BangBang {
            switch_times,
            start_high,
        } => ScenarioKind::BangBang {
            switch_times: switch_times.iter().map(|&t| map(t)).collect(),
            start_high: *start_high,
        },
        k => k.clone(),
    };
    crate::model::VolatilityScenario::new(kind, s.band, (grid.t0, grid.t1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarityEntry {
    pub t: f64,
    pub at: f64,
    pub ks: f64,
    pub variance_ratio: f64,
    pub ratio_stderr: f64,
    pub expected_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarityReport {
    pub a: f64,
    pub scenario: String,
    pub entries: Vec<SelfSimilarityEntry>,
}

/// Compare the law of `B(a t)` with `a^H B(t)` at every grid time `t > 0`
/// for which `a t` is also a grid node.
pub fn self_similarity_check(e: &PathEnsemble, a: f64) -> Result<SelfSimilarityReport> {
    if !(a > 0.0) {
        return Err(invalid("scale factor must be > 0"));
    }
    let hv = e.h.value();
    let scale = a.powf(hv);
    let mut entries = Vec::new();
    for i in 1..e.grid.len() {
        let t = e.grid.point(i);
        let Some(j) = e.grid.index_of(a * t, 1e-9) else {
            continue;
        };
        if j == 0 {
            continue;
        }
        let x = e.column(j);
        let y: Vec<f64> = e.column(i).iter().map(|v| v * scale).collect();
        let ks = ks_statistic(&x, &y);
        let n = x.len() as f64;
        let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
        let y2: Vec<f64> = e.column(i).iter().map(|v| v * v).collect();
        let (mx, _) = mean_stderr(&x2);
        let (my, _) = mean_stderr(&y2);
        let vx = x2.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0);
        let vy = y2.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1.0);
        let cxy = x2.iter().zip(&y2).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / (n - 1.0);
        let r = mx / my;
        // delta method for a ratio of correlated means
        let var_r = (vx / (my * my) + mx * mx * vy / my.powi(4) - 2.0 * mx * cxy / my.powi(3)) / n;
        entries.push(SelfSimilarityEntry {
            t,
            at: a * t,
            ks,
            variance_ratio: r,
            ratio_stderr: var_r.max(0.0).sqrt(),
            expected_ratio: a.powf(2.0 * hv),
        });
    }
    if entries.is_empty() {
        return Err(invalid(format!(
            "no grid time t with a*t on the grid for a={a}"
        )));
    }
    Ok(SelfSimilarityReport {
        a,
        scenario: e.scenario.label(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub lags: Vec<usize>,
    pub log_moments: Vec<f64>,
    pub slope: f64,
    pub ci: (f64, f64),
    pub expected: f64,
    pub covers: bool,
}

/// Regress the log empirical `alpha`-moment of increments on log lag.
/// The confidence interval is `mean ± 3 sd/sqrt(B)` over `B = 10` batches.
pub fn holder_moment_check(e: &PathEnsemble, alpha: f64) -> Result<HolderReport> {
    if ![1.0, 2.0, 4.0].contains(&alpha) {
        return Err(invalid(format!("alpha must be 1, 2 or 4, got {alpha}")));
    }
    let mut lags = Vec::new();
    let mut l = 1;
    while l <= e.grid.n / 2 {
        lags.push(l);
        l *= 2;
    }
    if lags.len() < 3 {
        return Err(invalid(format!(
            "grid with {} steps gives only {} dyadic lags; need 3",
            e.grid.n,
            lags.len()
        )));
    }
    let batches = 10usize;
    if e.num_paths() < batches * 2 {
        return Err(invalid("need at least 20 paths for batch confidence intervals"));
    }
    let dt = e.grid.dt();
    let x: Vec<f64> = lags.iter().map(|&l| (l as f64 * dt).ln()).collect();
    let moment = |paths: &[Vec<f64>], lag: usize| -> f64 {
        let mut s = 0.0;
        let mut c = 0usize;
        for p in paths {
            for i in 0..(p.len() - lag) {
                s += (p[i + lag] - p[i]).abs().powf(alpha);
                c += 1;
            }
        }
        s / c as f64
    };
    let full: Vec<f64> = lags.iter().map(|&l| moment(&e.paths, l).ln()).collect();
    let (_, slope, _) = linear_fit(&x, &full);
    let per = e.num_paths() / batches;
    let slopes: Vec<f64> = (0..batches)
        .map(|b| {
            let chunk = &e.paths[b * per..(b + 1) * per];
            let y: Vec<f64> = lags.iter().map(|&l| moment(chunk, l).ln()).collect();
            linear_fit(&x, &y).1
        })
        .collect();
    let (_, se) = mean_stderr(&slopes);
    let expected = alpha * e.h.value();
    let ci = (slope - 3.0 * se, slope + 3.0 * se);
    Ok(HolderReport {
        alpha,
        lags,
        log_moments: full,
        slope,
        ci,
        expected,
        covers: ci.0 <= expected && expected <= ci.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_scenario_family, VolatilityScenario};
    use crate::synth::gen_cholesky_oracle;

    fn hi(h: f64) -> HurstIndex {
        HurstIndex::new(h).unwrap()
    }

    #[test]
    fn autocorr_examples() {
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        for n in 1..20 {
            assert_eq!(autocorr_closed_form(n, hi(0.5), &band), (0.0, 0.0));
        }
        let unit = VolatilityBand::degenerate(1.0).unwrap();
        let (u, l) = autocorr_closed_form(1, hi(0.7), &unit);
        assert!((u - 0.5 * (2f64.powf(1.4) - 2.0)).abs() < 1e-15);
        assert_eq!(u, l);
        let mut partial = 0.0;
        for n in 1..=100 {
            let (u, _) = autocorr_closed_form(n, hi(0.7), &unit);
            assert!(u > 0.0);
            let next = partial + u;
            assert!(next > partial);
            partial = next;
        }
        // sum grows like N^{2H-1}
        assert!(partial > 3.0);
    }

    #[test]
    fn autocorr_anti_persistent_sup_uses_low_vol() {
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        let (u, l) = autocorr_closed_form(3, hi(0.3), &band);
        assert!(u < 0.0 && l < u);
    }

    #[test]
    fn degenerate_band_upper_equals_lower() {
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let band = VolatilityBand::degenerate(0.2).unwrap();
        let fam = make_scenario_family(band, 2, &grid).unwrap();
        let st = estimate_upper_lower_covariance(&fam, hi(0.7), &grid, 4000, SeedSpec::new(4)).unwrap();
        assert_eq!(st.upper, st.lower);
        for i in 1..5 {
            for j in 1..5 {
                let c = covariance_closed_form(hi(0.7), 0.2, grid.point(i), grid.point(j));
                assert!((st.upper_at(i, j) - c).abs() < 3.0 * st.upper_stderr[st.idx(i, j)]);
            }
        }
    }

    #[test]
    fn band_covariance_at_one() {
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        let fam = make_scenario_family(band, 2, &grid).unwrap();
        let st = estimate_upper_lower_covariance(&fam, hi(0.3), &grid, 10_000, SeedSpec::new(8)).unwrap();
        let k = st.idx(4, 4);
        assert!((st.upper[k] - 0.09).abs() < 3.0 * st.upper_stderr[k]);
        assert!((st.lower[k] - 0.01).abs() < 3.0 * st.lower_stderr[k]);
        assert!(st.upper.iter().zip(&st.lower).all(|(u, l)| u >= l));
        assert_eq!(st.upper_scenario[k], 1);
        assert_eq!(st.lower_scenario[k], 0);
    }

    #[test]
    fn empty_family_rejected() {
        assert!(UpperLowerStat::from_scenarios((1, 1), &[], vec![]).is_err());
    }

    #[test]
    fn self_similarity_examples() {
        let grid = TimeGrid::new(0.0, 4.0, 16).unwrap();
        let e = gen_cholesky_oracle(hi(0.5), &grid, 1.0, 10_000, SeedSpec::new(12)).unwrap();
        let r = self_similarity_check(&e, 1.0).unwrap();
        assert!(r.entries.iter().all(|x| x.ks == 0.0));
        let r = self_similarity_check(&e, 4.0).unwrap();
        for x in &r.entries {
            assert!((x.variance_ratio - 4.0).abs() < 3.0 * x.ratio_stderr, "{x:?}");
        }
        let e = gen_cholesky_oracle(hi(0.7), &grid, 1.0, 10_000, SeedSpec::new(13)).unwrap();
        let r = self_similarity_check(&e, 2.0).unwrap();
        for x in &r.entries {
            assert!((x.expected_ratio - 2f64.powf(1.4)).abs() < 1e-12);
            assert!((x.variance_ratio - x.expected_ratio).abs() < 3.0 * x.ratio_stderr, "{x:?}");
        }
        assert!(self_similarity_check(&e, 100.0).is_err());
        assert!(self_similarity_check(&e, 0.0).is_err());
    }

    #[test]
    fn holder_slopes() {
        let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
        for (h, alpha) in [(0.5, 2.0), (0.7, 2.0), (0.3, 4.0), (0.3, 1.0)] {
            let e = gen_cholesky_oracle(hi(h), &grid, 0.3, 2000, SeedSpec::new(17)).unwrap();
            let r = holder_moment_check(&e, alpha).unwrap();
            assert!(r.covers, "h={h} alpha={alpha} {r:?}");
        }
        let e = gen_cholesky_oracle(hi(0.5), &TimeGrid::new(0.0, 1.0, 4).unwrap(), 1.0, 100, SeedSpec::new(1)).unwrap();
        assert!(holder_moment_check(&e, 2.0).is_err());
        assert!(holder_moment_check(&e, 3.0).is_err());
    }

    #[test]
    fn rescaled_scenario_keeps_shape() {
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        let fam = crate::model::ScenarioFamily::with_breakpoints(band, 3, &grid, 1).unwrap();
        let big = TimeGrid::new(0.0, 10.0, 10).unwrap();
        let s: VolatilityScenario = rescale_horizon(&fam.members[2], &big).unwrap();
        assert_eq!(s.evaluate(4.9).unwrap(), fam.members[2].evaluate(0.49).unwrap());
        assert_eq!(s.evaluate(5.1).unwrap(), fam.members[2].evaluate(0.51).unwrap());
    }
}
