//! Shared value types: Hurst index, volatility band, time grids, scenarios,
//! seeding and the plain-text run configuration.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const HORIZON_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstIndex(f64);

impl HurstIndex {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(invalid(format!("Hurst index must lie in (0,1), got {h}")));
        }
        Ok(Self(h))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_half(self) -> bool {
        (self.0 - 0.5).abs() < 1e-15
    }
}

impl TryFrom<f64> for HurstIndex {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstIndex> for f64 {
    fn from(h: HurstIndex) -> f64 {
        h.0
    }
}

impl fmt::Display for HurstIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Volatility uncertainty band `[sigma_lo, sigma_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityBand {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl VolatilityBand {
    pub fn new(sigma_lo: f64, sigma_hi: f64) -> Result<Self> {
        if !(sigma_lo.is_finite() && sigma_hi.is_finite()) {
            return Err(invalid("volatility band must be finite"));
        }
        if sigma_lo < 0.0 {
            return Err(invalid(format!("sigma_lo must be >= 0, got {sigma_lo}")));
        }
        if sigma_hi <= 0.0 {
            return Err(invalid(format!("sigma_hi must be > 0, got {sigma_hi}")));
        }
        if sigma_lo > sigma_hi {
            return Err(invalid(format!(
                "sigma_lo ({sigma_lo}) exceeds sigma_hi ({sigma_hi})"
            )));
        }
        Ok(Self { sigma_lo, sigma_hi })
    }

    pub fn degenerate(sigma: f64) -> Result<Self> {
        Self::new(sigma, sigma)
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma_lo == self.sigma_hi
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.sigma_lo - 1e-15 && s <= self.sigma_hi + 1e-15
    }
}

/// Uniform grid `t0 < t0+dt < ... < t1` with `n` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t0 >= t1 {
            return Err(invalid(format!("grid needs t0 < t1, got [{t0}, {t1}]")));
        }
        if n == 0 {
            return Err(invalid("grid needs at least one step"));
        }
        Ok(Self { t0, t1, n })
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> f64 {
        if i == self.n {
            self.t1
        } else {
            self.t0 + i as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 - HORIZON_SLACK && t <= self.t1 + HORIZON_SLACK
    }

    /// Index of the grid node equal to `t` (within `tol` steps), if any.
    pub fn index_of(&self, t: f64, tol: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt();
        let i = x.round();
        if i < 0.0 || i > self.n as f64 || (x - i).abs() > tol {
            return None;
        }
        Some(i as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ScenarioKind {
    ConstantLo,
    ConstantHi,
    /// Right-continuous step function: `levels[i]` on `[breakpoints[i-1], breakpoints[i])`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        levels: Vec<f64>,
    },
    /// Alternates between the band edges at each switch time.
    BangBang {
        switch_times: Vec<f64>,
        start_high: bool,
    },
}

/// One adapted volatility path `sigma_t` inside a band, on a finite horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityScenario {
    pub kind: ScenarioKind,
    pub band: VolatilityBand,
    pub horizon: (f64, f64),
}

fn check_times(ts: &[f64], horizon: (f64, f64), what: &str) -> Result<()> {
    for w in ts.windows(2) {
        if w[1] <= w[0] {
            return Err(invalid(format!("{what} must be strictly increasing")));
        }
    }
    if let (Some(&a), Some(&b)) = (ts.first(), ts.last()) {
        if a <= horizon.0 || b >= horizon.1 {
            return Err(invalid(format!(
                "{what} must lie strictly inside the horizon ({}, {})",
                horizon.0, horizon.1
            )));
        }
    }
    Ok(())
}

impl VolatilityScenario {
    pub fn new(kind: ScenarioKind, band: VolatilityBand, horizon: (f64, f64)) -> Result<Self> {
        if !(horizon.0 < horizon.1) {
            return Err(invalid("scenario horizon must satisfy t0 < t1"));
        }
        match &kind {
            ScenarioKind::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                if levels.len() != breakpoints.len() + 1 {
                    return Err(invalid("piecewise scenario needs one more level than breakpoints"));
                }
                check_times(breakpoints, horizon, "breakpoints")?;
                if let Some(l) = levels.iter().find(|l| !band.contains(**l)) {
                    return Err(invalid(format!(
                        "level {l} outside band [{}, {}]",
                        band.sigma_lo, band.sigma_hi
                    )));
                }
            }
            ScenarioKind::BangBang { switch_times, .. } => {
                check_times(switch_times, horizon, "switch times")?;
            }
            _ => {}
        }
        Ok(Self {
            kind,
            band,
            horizon,
        })
    }

    pub fn constant_lo(band: VolatilityBand, horizon: (f64, f64)) -> Result<Self> {
        Self::new(ScenarioKind::ConstantLo, band, horizon)
    }

    pub fn constant_hi(band: VolatilityBand, horizon: (f64, f64)) -> Result<Self> {
        Self::new(ScenarioKind::ConstantHi, band, horizon)
    }

    /// Constant scenario `sigma` on a degenerate band.
    pub fn constant(sigma: f64, horizon: (f64, f64)) -> Result<Self> {
        Self::new(ScenarioKind::ConstantHi, VolatilityBand::degenerate(sigma)?, horizon)
    }

    /// Value at `t`; `t` must lie inside the horizon.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(t >= self.horizon.0 - HORIZON_SLACK && t <= self.horizon.1 + HORIZON_SLACK) {
            return Err(Error::OutOfDomain(format!(
                "t={t} outside scenario horizon [{}, {}]",
                self.horizon.0, self.horizon.1
            )));
        }
        Ok(self.value_clamped(t))
    }

    /// Value at `t` with times before the horizon mapped to its start and
    /// times after it mapped to its end.
    pub fn value_clamped(&self, t: f64) -> f64 {
        let t = t.clamp(self.horizon.0, self.horizon.1);
        match &self.kind {
            ScenarioKind::ConstantLo => self.band.sigma_lo,
            ScenarioKind::ConstantHi => self.band.sigma_hi,
            ScenarioKind::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                let i = breakpoints.partition_point(|&b| b <= t);
                levels[i]
            }
            ScenarioKind::BangBang {
                switch_times,
                start_high,
            } => {
                let n = switch_times.partition_point(|&b| b <= t);
                if start_high ^ (n % 2 == 1) {
                    self.band.sigma_hi
                } else {
                    self.band.sigma_lo
                }
            }
        }
    }

    /// The level if the scenario is constant in time.
    pub fn constant_level(&self) -> Option<f64> {
        match &self.kind {
            ScenarioKind::ConstantLo => Some(self.band.sigma_lo),
            ScenarioKind::ConstantHi => Some(self.band.sigma_hi),
            ScenarioKind::PiecewiseConstant { levels, .. } => {
                if levels.iter().all(|l| *l == levels[0]) {
                    Some(levels[0])
                } else {
                    None
                }
            }
            ScenarioKind::BangBang { switch_times, .. } => {
                if switch_times.is_empty() || self.band.is_degenerate() {
                    Some(self.value_clamped(self.horizon.0))
                } else {
                    None
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ScenarioKind::ConstantLo => format!("const({})", self.band.sigma_lo),
            ScenarioKind::ConstantHi => format!("const({})", self.band.sigma_hi),
            ScenarioKind::PiecewiseConstant { levels, .. } => {
                let l: Vec<String> = levels.iter().map(|x| format!("{x}")).collect();
                format!("steps[{}]", l.join(","))
            }
            ScenarioKind::BangBang {
                switch_times,
                start_high,
            } => format!(
                "bangbang({}, {} switches)",
                if *start_high { "hi" } else { "lo" },
                switch_times.len()
            ),
        }
    }
}

/// Finite scenario family standing in for the sublinear expectation
/// `E[X] = sup_theta E_theta[X]`.
///
/// Members: the two constant extremes, then piecewise-constant scenarios on
/// `breakpoints` equally spaced breakpoints. Level patterns are taken from the
/// lattices `{lo + (hi-lo) j/(q-1)}` for `q = 2, 3, ...`, each enumerated in
/// base-`q` counting order (first segment most significant), skipping the two
/// extremes and patterns already emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFamily {
    pub band: VolatilityBand,
    pub horizon: (f64, f64),
    pub breakpoints: usize,
    pub members: Vec<VolatilityScenario>,
}

/// Family of `m` scenarios with one interior breakpoint.
pub fn make_scenario_family(band: VolatilityBand, m: usize, horizon: &TimeGrid) -> Result<ScenarioFamily> {
    ScenarioFamily::with_breakpoints(band, m, horizon, 1)
}

impl ScenarioFamily {
    pub fn with_breakpoints(
        band: VolatilityBand,
        m: usize,
        horizon: &TimeGrid,
        breakpoints: usize,
    ) -> Result<Self> {
        let band = VolatilityBand::new(band.sigma_lo, band.sigma_hi)?;
        if m < 2 {
            return Err(invalid(format!("scenario family needs m >= 2, got {m}")));
        }
        let hz = (horizon.t0, horizon.t1);
        let mut members = vec![
            VolatilityScenario::constant_lo(band, hz)?,
            VolatilityScenario::constant_hi(band, hz)?,
        ];
        let segs = breakpoints + 1;
        let bps: Vec<f64> = (1..segs)
            .map(|i| hz.0 + (hz.1 - hz.0) * i as f64 / segs as f64)
            .collect();
        let (lo, hi) = (band.sigma_lo, band.sigma_hi);
        if band.is_degenerate() {
            while members.len() < m {
                members.push(VolatilityScenario::new(
                    ScenarioKind::PiecewiseConstant {
                        breakpoints: bps.clone(),
                        levels: vec![lo; segs],
                    },
                    band,
                    hz,
                )?);
            }
            return Ok(Self {
                band,
                horizon: hz,
                breakpoints,
                members,
            });
        }
        let mut seen: Vec<Vec<f64>> = vec![vec![lo; segs], vec![hi; segs]];
        let mut q = 2usize;
        while members.len() < m {
            let total = q.checked_pow(segs as u32).ok_or_else(|| {
                invalid("scenario lattice too large for the requested family size")
            })?;
            for code in 0..total {
                if members.len() >= m {
                    break;
                }
                let mut c = code;
                let mut digits = vec![0usize; segs];
                for d in digits.iter_mut().rev() {
                    *d = c % q;
                    c /= q;
                }
                let levels: Vec<f64> = digits
                    .iter()
                    .map(|&j| {
                        if j == q - 1 {
                            hi
                        } else {
                            lo + (hi - lo) * j as f64 / (q - 1) as f64
                        }
                    })
                    .collect();
                if seen.iter().any(|s| s == &levels) {
                    continue;
                }
                seen.push(levels.clone());
                members.push(VolatilityScenario::new(
                    ScenarioKind::PiecewiseConstant {
                        breakpoints: bps.clone(),
                        levels,
                    },
                    band,
                    hz,
                )?);
            }
            q += 1;
        }
        Ok(Self {
            band,
            horizon: hz,
            breakpoints,
            members,
        })
    }

    /// The two constant extremes only.
    pub fn extremes(band: VolatilityBand, horizon: &TimeGrid) -> Result<Self> {
        Self::with_breakpoints(band, 2, horizon, 0)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

const SEED_GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SEED_GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Master seed plus the per-path derivation rule.
///
/// Path `i` of purpose `p` uses a ChaCha8 generator keyed by
/// `splitmix64(master ^ splitmix64(p))` on stream `i`. A path therefore
/// depends only on `(master, p, i)`, never on generation order or thread
/// count, and scenarios sharing a purpose share their random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub const PATHS: u64 = 1;
    pub const TERMINAL: u64 = 2;
    pub const PAYOFF_SUITE: u64 = 3;

    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn rng(&self, purpose: u64, index: u64) -> ChaCha8Rng {
        let key = splitmix64(self.master_seed ^ splitmix64(purpose));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(index);
        rng
    }

    pub fn path_rng(&self, index: u64) -> ChaCha8Rng {
        self.rng(Self::PATHS, index)
    }
}

/// Resolved run configuration. Documented keys: `hurst`, `sigma_lo`,
/// `sigma_hi`, `grid.n`, `horizon`, `seed`, `scenarios.m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub hurst: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub grid_n: usize,
    pub horizon: f64,
    pub seed: u64,
    pub scenarios_m: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            hurst: 0.7,
            sigma_lo: 0.1,
            sigma_hi: 0.3,
            grid_n: 16,
            horizon: 1.0,
            seed: 42,
            scenarios_m: 2,
        }
    }
}

pub const CONFIG_KEYS: [&str; 7] = [
    "hurst",
    "sigma_lo",
    "sigma_hi",
    "grid.n",
    "horizon",
    "seed",
    "scenarios.m",
];

impl Config {
    /// Parse `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_key_values(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| invalid(format!("config key '{key}': cannot parse '{v}'")))
        }
        match key {
            "hurst" => self.hurst = num(key, value)?,
            "sigma_lo" => self.sigma_lo = num(key, value)?,
            "sigma_hi" => self.sigma_hi = num(key, value)?,
            "grid.n" => self.grid_n = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "scenarios.m" => self.scenarios_m = num(key, value)?,
            _ => return Err(invalid(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        HurstIndex::new(self.hurst)?;
        VolatilityBand::new(self.sigma_lo, self.sigma_hi)?;
        TimeGrid::new(0.0, self.horizon, self.grid_n)?;
        if self.scenarios_m < 2 {
            return Err(invalid("scenarios.m must be >= 2"));
        }
        Ok(())
    }

    pub fn hurst_index(&self) -> Result<HurstIndex> {
        HurstIndex::new(self.hurst)
    }

    pub fn band(&self) -> Result<VolatilityBand> {
        VolatilityBand::new(self.sigma_lo, self.sigma_hi)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.horizon, self.grid_n)
    }
}

/// Raw `key = value` pairs in file order; later duplicates win when folded.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("config line {}: expected key = value", lineno + 1)))?;
        let k = k.trim();
        let v = v.trim().trim_matches('"');
        if k.is_empty() {
            return Err(invalid(format!("config line {}: empty key", lineno + 1)));
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit() -> TimeGrid {
        TimeGrid::new(0.0, 1.0, 100).unwrap()
    }

    #[test]
    fn hurst_rejects_boundaries() {
        assert!(HurstIndex::new(0.0).is_err());
        assert!(HurstIndex::new(1.0).is_err());
        assert!(HurstIndex::new(f64::NAN).is_err());
        assert_eq!(HurstIndex::new(0.3).unwrap().value(), 0.3);
    }

    #[test]
    fn band_validation() {
        assert!(VolatilityBand::new(0.3, 0.1).is_err());
        assert!(VolatilityBand::new(-0.1, 0.1).is_err());
        assert!(VolatilityBand::new(0.0, 0.0).is_err());
        assert!(VolatilityBand::new(0.0, 0.2).is_ok());
    }

    #[test]
    fn extremes_only_family() {
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        let fam = make_scenario_family(band, 2, &unit()).unwrap();
        assert_eq!(fam.len(), 2);
        assert_eq!(fam.members[0].constant_level(), Some(0.1));
        assert_eq!(fam.members[1].constant_level(), Some(0.3));
    }

    #[test]
    fn degenerate_band_family() {
        let band = VolatilityBand::degenerate(0.2).unwrap();
        let fam = make_scenario_family(band, 5, &unit()).unwrap();
        assert_eq!(fam.len(), 5);
        for s in &fam.members {
            for i in 0..=20 {
                assert_eq!(s.evaluate(i as f64 / 20.0).unwrap(), 0.2);
            }
        }
    }

    #[test]
    fn lattice_family_distinct_and_inside_band() {
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        let fam = ScenarioFamily::with_breakpoints(band, 4, &unit(), 2).unwrap();
        assert_eq!(fam.len(), 4);
        let ts: Vec<f64> = (0..=300).map(|i| i as f64 / 300.0).collect();
        let profiles: Vec<Vec<f64>> = fam
            .members
            .iter()
            .map(|s| ts.iter().map(|&t| s.evaluate(t).unwrap()).collect())
            .collect();
        for p in &profiles {
            assert!(p.iter().all(|v| (0.1..=0.3).contains(v)));
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_ne!(profiles[i], profiles[j]);
            }
        }
    }

    #[test]
    fn large_family_uses_finer_lattice() {
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        let fam = ScenarioFamily::with_breakpoints(band, 12, &unit(), 1).unwrap();
        assert_eq!(fam.len(), 12);
        let mut levels: Vec<Vec<f64>> = Vec::new();
        for s in &fam.members[2..] {
            if let ScenarioKind::PiecewiseConstant { levels: l, .. } = &s.kind {
                assert!(!levels.contains(l));
                levels.push(l.clone());
            } else {
                panic!("unexpected kind");
            }
        }
    }

    #[test]
    fn family_rejects_bad_input() {
        assert!(make_scenario_family(
            VolatilityBand { sigma_lo: 0.3, sigma_hi: 0.1 },
            2,
            &unit()
        )
        .is_err());
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        assert!(make_scenario_family(band, 1, &unit()).is_err());
    }

    #[test]
    fn piecewise_is_right_continuous() {
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        let s = VolatilityScenario::new(
            ScenarioKind::PiecewiseConstant {
                breakpoints: vec![0.5],
                levels: vec![0.1, 0.3],
            },
            band,
            (0.0, 1.0),
        )
        .unwrap();
        assert_eq!(s.evaluate(0.5).unwrap(), 0.3);
        assert_eq!(s.evaluate(0.4999).unwrap(), 0.1);
        assert!(s.evaluate(1.5).is_err());
        assert!(s.evaluate(-0.1).is_err());
    }

    #[test]
    fn bang_bang_switches() {
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        let s = VolatilityScenario::new(
            ScenarioKind::BangBang {
                switch_times: vec![0.25, 0.75],
                start_high: true,
            },
            band,
            (0.0, 1.0),
        )
        .unwrap();
        let vals: Vec<f64> = (0..1000).map(|i| s.evaluate(i as f64 / 1000.0).unwrap()).collect();
        let switches = vals.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(switches, 2);
        assert_eq!(s.evaluate(0.1).unwrap(), 0.3);
        assert_eq!(s.evaluate(0.25).unwrap(), 0.1);
        assert_eq!(s.evaluate(0.5).unwrap(), 0.1);
        assert_eq!(s.evaluate(0.75).unwrap(), 0.3);
    }

    #[test]
    fn scenario_rejects_bad_levels_and_breakpoints() {
        let band = VolatilityBand::new(0.1, 0.3).unwrap();
        let bad_level = ScenarioKind::PiecewiseConstant {
            breakpoints: vec![0.5],
            levels: vec![0.1, 0.5],
        };
        assert!(VolatilityScenario::new(bad_level, band, (0.0, 1.0)).is_err());
        let unsorted = ScenarioKind::PiecewiseConstant {
            breakpoints: vec![0.6, 0.4],
            levels: vec![0.1, 0.2, 0.3],
        };
        assert!(VolatilityScenario::new(unsorted, band, (0.0, 1.0)).is_err());
        let outside = ScenarioKind::BangBang {
            switch_times: vec![1.5],
            start_high: false,
        };
        assert!(VolatilityScenario::new(outside, band, (0.0, 1.0)).is_err());
    }

    #[test]
    fn seed_paths_independent_of_order() {
        let seed = SeedSpec::new(7);
        let forward: Vec<u64> = (0..10).map(|i| seed.path_rng(i).random()).collect();
        let backward: Vec<u64> = (0..10).rev().map(|i| seed.path_rng(i).random()).collect();
        let mut b = backward.clone();
        b.reverse();
        assert_eq!(forward, b);
        assert_ne!(forward[0], forward[1]);
        let other: u64 = SeedSpec::new(8).path_rng(0).random();
        assert_ne!(other, forward[0]);
    }

    #[test]
    fn config_parse_and_reject() {
        let cfg = Config::parse("hurst = 0.3\n# comment\ngrid.n=32\nscenarios.m = 4 # trailing\n").unwrap();
        assert_eq!(cfg.hurst, 0.3);
        assert_eq!(cfg.grid_n, 32);
        assert_eq!(cfg.scenarios_m, 4);
        assert_eq!(cfg.sigma_hi, 0.3);
        assert!(Config::parse("bogus = 1").is_err());
        assert!(Config::parse("hurst 0.3").is_err());
        assert!(Config::parse("hurst = abc").is_err());
        let bad = Config::parse("hurst = 1.0").unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_points() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.index_of(0.5, 1e-9), Some(2));
        assert_eq!(g.index_of(0.6, 1e-9), None);
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn family_is_deterministic_and_in_band(lo in 0.0f64..0.5, w in 0.0f64..0.5, m in 2usize..12, bp in 0usize..3) {
            let band = VolatilityBand::new(lo, lo + w + 1e-3).unwrap();
            let a = ScenarioFamily::with_breakpoints(band, m, &unit(), bp).unwrap();
            let b = ScenarioFamily::with_breakpoints(band, m, &unit(), bp).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), m);
            for s in &a.members {
                for i in 0..=50 {
                    let v = s.evaluate(i as f64 / 50.0).unwrap();
                    prop_assert!(band.contains(v));
                }
            }
        }

        #[test]
        fn bang_bang_values_in_band(ts in proptest::collection::vec(0.01f64..0.99, 0..6), hi in any::<bool>(), t in 0.0f64..1.0) {
            let mut ts = ts;
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ts.dedup();
            let band = VolatilityBand::new(0.1, 0.3).unwrap();
            let s = VolatilityScenario::new(ScenarioKind::BangBang { switch_times: ts, start_high: hi }, band, (0.0, 1.0)).unwrap();
            let v = s.evaluate(t).unwrap();
            prop_assert!(v == 0.1 || v == 0.3);
        }
    }
}
