//! Resolved settings: defaults, then the config file, then flags.

use clap::ValueEnum;
use fgbm_core::Error;
use fgbm_core::model::parse_key_values;
use fgbm_core::synth::{GeneratorKind, WaveletParams};
use fgbm_core::{Config, Result};
use serde::Serialize;

use crate::ModelFlags;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    /// Covariance factorization for constant scenarios, moving average otherwise.
    Auto,
    Cholesky,
    Movavg,
    Wavelet,
}

impl MethodChoice {
    pub fn generator(self) -> GeneratorKind {
        match self {
            Self::Auto => GeneratorKind::Auto,
            Self::Cholesky => GeneratorKind::CovarianceFactorization,
            Self::Movavg => GeneratorKind::MovingAverage(Default::default()),
            Self::Wavelet => GeneratorKind::Wavelet(WaveletParams::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffChoice {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineChoice {
    Mc,
    Pde,
    ClosedForm,
}

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    #[serde(flatten)]
    pub core: Config,
    pub paths: usize,
    pub method: MethodChoice,
    pub payoff: PayoffChoice,
    pub strike: f64,
    pub spot: f64,
    pub rate: f64,
    pub engine: EngineChoice,
    pub space_steps: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            core: Config::default(),
            paths: 1000,
            method: MethodChoice::Auto,
            payoff: PayoffChoice::Call,
            strike: 100.0,
            spot: 100.0,
            rate: 0.0,
            engine: EngineChoice::Mc,
            space_steps: 800,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| invalid(format!("config key '{key}': cannot parse '{v}'")))
}

fn choice<T: ValueEnum>(key: &str, v: &str) -> Result<T> {
    T::from_str(v, true).map_err(|_| invalid(format!("config key '{key}': unknown value '{v}'")))
}

impl Settings {
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_key_values(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "paths" => self.paths = num(key, v)?,
            "method" => self.method = choice(key, v)?,
            "payoff" => self.payoff = choice(key, v)?,
            "strike" => self.strike = num(key, v)?,
            "spot" => self.spot = num(key, v)?,
            "rate" => self.rate = num(key, v)?,
            "engine" => self.engine = choice(key, v)?,
            "space_steps" => self.space_steps = num(key, v)?,
            "maturity" => self.core.horizon = num(key, v)?,
            _ => self.core.set(key, v)?,
        }
        Ok(())
    }

    pub fn apply_model_flags(&mut self, f: &ModelFlags) {
        let c = &mut self.core;
        if let Some(v) = f.hurst {
            c.hurst = v;
        }
        if let Some(v) = f.sigma_lo {
            c.sigma_lo = v;
        }
        if let Some(v) = f.sigma_hi {
            c.sigma_hi = v;
        }
        if let Some(v) = f.seed {
            c.seed = v;
        }
        if let Some(v) = f.grid_n {
            c.grid_n = v;
        }
        if let Some(v) = f.scenarios {
            c.scenarios_m = v;
        }
        if let Some(v) = f.paths {
            self.paths = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.core.validate()?;
        if self.paths == 0 {
            return Err(invalid("paths must be >= 1"));
        }
        if !(self.strike > 0.0) || !(self.spot > 0.0) {
            return Err(invalid("strike and spot must be > 0"));
        }
        if !self.rate.is_finite() {
            return Err(invalid("rate must be finite"));
        }
        Ok(())
    }
}
