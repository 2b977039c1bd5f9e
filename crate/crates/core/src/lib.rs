//! Numerical laboratory for fractional G-Brownian motion (fGBm).
//!
//! The sublinear expectation is realized as the sup/inf over a finite family
//! of volatility scenarios. Modules:
//!
//! * [`model`]: shared value types (Hurst index, band, grids, scenarios, seeds, config)
//! * [`fracops`]: the operator `M_H`, fractional integrals, Hermite functions
//! * [`synth`]: path generators and upper/lower statistics
//! * [`chaos`]: truncated Hermite chaos, Wick calculus, Malliavin derivative, Clark-Ocone
//! * [`gexp`]: scenario Monte Carlo, the G-heat equation, drift removal
//! * [`market`]: bid/ask pricing and hedge ratios
//! * [`suites`]: property suites shared by the CLI `verify` command

pub mod chaos;
pub mod error;
pub mod fracops;
pub mod gexp;
pub mod market;
pub mod model;
pub mod numerics;
pub mod suites;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    make_scenario_family, Config, HurstIndex, ScenarioFamily, ScenarioKind, SeedSpec, TimeGrid,
    VolatilityBand, VolatilityScenario,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
