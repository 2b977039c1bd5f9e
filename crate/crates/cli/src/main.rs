//! `fgbm`: path synthesis, property verification and bid/ask pricing.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure or failed
//! verification.

mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use fgbm_core::market::{price_bid_ask, Engine, MarketModel, Payoff};
use fgbm_core::suites::{run_suite, Suite, SuiteOptions};
use fgbm_core::synth::stats::{covariance_closed_form, sample_covariance, UpperLowerStat};
use fgbm_core::{make_scenario_family, Error as CoreError, SeedSpec};
use serde::Serialize;

use manifest::{Outputs, RunManifest, Versions};
use settings::{EngineChoice, MethodChoice, PayoffChoice, Settings};

#[derive(Parser, Debug)]
#[command(name = "fgbm", version, about = "Fractional G-Brownian motion toolkit")]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "FGBM_THREADS")]
    threads: Option<usize>,
    /// `key = value` config file; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate fGBm paths for every scenario of the family.
    Synth(SynthArgs),
    /// Run a property suite and write a pass/fail report.
    Verify(VerifyArgs),
    /// Bid/ask quote for a European claim.
    Price(PriceArgs),
}

#[derive(Args, Debug, Default)]
pub struct ModelFlags {
    #[arg(long)]
    pub hurst: Option<f64>,
    #[arg(long)]
    pub sigma_lo: Option<f64>,
    #[arg(long)]
    pub sigma_hi: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Number of scenarios in the family (2 = band edges only).
    #[arg(long)]
    pub scenarios: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long, value_enum)]
    method: Option<MethodChoice>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// operators, noise, wick, ito, clark-ocone, girsanov, lrd or all
    suite: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PriceArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long, value_enum)]
    payoff: Option<PayoffChoice>,
    #[arg(long)]
    strike: Option<f64>,
    #[arg(long)]
    spot: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    maturity: Option<f64>,
    #[arg(long, value_enum)]
    engine: Option<EngineChoice>,
    /// Space steps of the PDE engine.
    #[arg(long)]
    space_steps: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Numerical(_) | CoreError::Io(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<CoreError>() {
            Ok(c) => c.into(),
            Err(e) => Failure::Numerical(format!("{e:#}")),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let threads = cli.threads.unwrap_or(0);
    if let Some(0) = cli.threads {
        return Err(Failure::Usage("--threads must be >= 1".into()));
    }
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Numerical(e.to_string()))?;
    }
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        settings.apply_file(&text)?;
    }
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ctx = Context {
        args,
        threads: rayon::current_num_threads(),
        started: Instant::now(),
        started_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    match cli.command {
        Command::Synth(a) => synth(settings, a, &ctx),
        Command::Verify(a) => verify(a, &ctx),
        Command::Price(a) => price(settings, a, &ctx),
    }
}

struct Context {
    args: Vec<String>,
    threads: usize,
    started: Instant,
    started_unix: u64,
}

impl Context {
    fn manifest(&self, command: &str, config: &impl Serialize, seed: Option<u64>) -> Result<RunManifest, Failure> {
        Ok(RunManifest {
            command: command.into(),
            args: self.args.clone(),
            config: serde_json::to_value(config).map_err(|e| Failure::Numerical(e.to_string()))?,
            seed,
            threads: self.threads,
            versions: Versions {
                fgbm_cli: env!("CARGO_PKG_VERSION"),
                fgbm_core: fgbm_core::VERSION,
            },
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: Vec::new(),
        })
    }
}

#[derive(Serialize)]
struct ScenarioStats {
    index: usize,
    label: String,
    file: String,
    method: String,
    model_variance: Vec<f64>,
    /// Relative RMS of the sample covariance against the closed form
    /// (constant scenarios only).
    covariance_rms_vs_closed_form: Option<f64>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct SynthStats {
    grid: Vec<f64>,
    scenarios: Vec<ScenarioStats>,
    closed_form_upper: Vec<Vec<f64>>,
    closed_form_lower: Vec<Vec<f64>>,
    sample_upper_lower: UpperLowerStat,
}

fn synth(mut s: Settings, a: SynthArgs, ctx: &Context) -> CmdResult {
    s.apply_model_flags(&a.model);
    if let Some(m) = a.method {
        s.method = m;
    }
    if let Some(t) = a.horizon {
        s.core.horizon = t;
    }
    s.validate()?;
    let h = s.core.hurst_index()?;
    let band = s.core.band()?;
    let grid = s.core.grid()?;
    let fam = make_scenario_family(band, s.core.scenarios_m, &grid)?;
    let gen = s.method.generator();
    let mut out = Outputs::default();
    let mut stats = Vec::new();
    let mut per = Vec::new();
    for (i, sc) in fam.members.iter().enumerate() {
        let e = gen.generate(h, &grid, sc, s.paths, SeedSpec::new(s.core.seed))?;
        let mut csv = Vec::new();
        e.write_csv(&mut csv).map_err(CoreError::from)?;
        let file = format!("paths_s{i}.csv");
        out.add(file.clone(), csv);
        let (cov, se) = sample_covariance(&e);
        let rms = sc.constant_level().map(|sigma| {
            let (mut num, mut den) = (0.0, 0.0);
            for (i, row) in cov.iter().enumerate() {
                for (j, c) in row.iter().enumerate() {
                    let o = covariance_closed_form(h, sigma, grid.point(i), grid.point(j));
                    num += (c - o) * (c - o);
                    den += o * o;
                }
            }
            (num / den).sqrt()
        });
        stats.push(ScenarioStats {
            index: i,
            label: sc.label(),
            file,
            method: format!("{:?}", e.method),
            model_variance: e.metadata.variance.clone(),
            covariance_rms_vs_closed_form: rms,
            warnings: e.metadata.warnings.clone(),
        });
        per.push((cov.concat(), se.concat()));
    }
    let n = grid.len();
    let closed = |sigma: f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| covariance_closed_form(h, sigma, grid.point(i), grid.point(j))).collect())
            .collect()
    };
    let labels = fam.members.iter().map(|m| m.label()).collect();
    let summary = SynthStats {
        grid: grid.points(),
        scenarios: stats,
        closed_form_upper: closed(band.sigma_hi),
        closed_form_lower: closed(band.sigma_lo),
        sample_upper_lower: UpperLowerStat::from_scenarios((n, n), &per, labels)?,
    };
    out.add_json("stats.json", &summary)?;
    let m = ctx.manifest("synth", &s, Some(s.core.seed))?;
    let path = out.commit(&a.out, m)?;
    println!("wrote {} scenario(s) of {} path(s); manifest {}", fam.len(), s.paths, path.display());
    Ok(())
}

#[derive(Serialize)]
struct VerifyConfig {
    suites: Vec<Suite>,
    options: SuiteOptions,
}

fn verify(a: VerifyArgs, ctx: &Context) -> CmdResult {
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(&a.suite)?]
    };
    let mut opts = SuiteOptions::default();
    if let Some(s) = a.seed {
        opts.seed = s;
    }
    if let Some(p) = a.paths {
        if p < 100 {
            return Err(Failure::Usage("--paths must be >= 100 for verification".into()));
        }
        opts.num_paths = p;
    }
    let mut out = Outputs::default();
    let mut all_pass = true;
    for s in &suites {
        let r = run_suite(*s, &opts)?;
        for c in &r.checks {
            println!(
                "{:<12} {} {:<60} measured {:.3e} tolerance {:.1e}",
                s.name(),
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.tolerance
            );
        }
        all_pass &= r.passed;
        out.add_json(&format!("verify_{}.json", s.name()), &r)?;
    }
    let cfg = VerifyConfig { suites, options: opts };
    let m = ctx.manifest("verify", &cfg, Some(opts.seed))?;
    out.commit(&a.out, m)?;
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Numerical("verification failed".into()))
    }
}

#[derive(Serialize)]
struct QuoteReport<'a> {
    bid: f64,
    ask: f64,
    engine: &'a str,
    attaining_scenario_bid: &'a str,
    attaining_scenario_ask: &'a str,
    stderr_or_grid_error: (f64, f64),
    error_kind: &'a str,
    /// Tolerance for comparing bid and ask: 3 combined stderr (MC), the grid
    /// error (PDE) or a relative 1e-12 (closed form).
    tolerance: f64,
    bid_equals_ask_within_tolerance: bool,
    family_restricted: bool,
    warnings: &'a [String],
    note: &'static str,
    config: &'a Settings,
}

fn price(mut s: Settings, a: PriceArgs, ctx: &Context) -> CmdResult {
    s.apply_model_flags(&a.model);
    macro_rules! take {
        ($($f:ident => $dst:expr),*) => {$(if let Some(v) = a.$f { $dst = v; })*};
    }
    take!(payoff => s.payoff, strike => s.strike, spot => s.spot, rate => s.rate,
          maturity => s.core.horizon, engine => s.engine, space_steps => s.space_steps);
    s.validate()?;
    if s.engine == EngineChoice::Mc && s.paths < 2 {
        return Err(Failure::Usage("the mc engine needs at least 2 paths".into()));
    }
    let h = s.core.hurst_index()?;
    if s.engine == EngineChoice::Pde && !h.is_half() {
        return Err(Failure::Usage(format!(
            "the pde engine is only available for H = 1/2 (the G-heat equation has no fractional counterpart here); got --hurst {}",
            h
        )));
    }
    let model = MarketModel::new(s.spot, s.rate, h, s.core.band()?, s.core.horizon)?;
    let payoff = match s.payoff {
        PayoffChoice::Call => Payoff::Call { strike: s.strike },
        PayoffChoice::Put => Payoff::Put { strike: s.strike },
    };
    let engine = match s.engine {
        EngineChoice::Mc => Engine::ScenarioMc {
            num_paths: s.paths,
            seed: s.core.seed,
            grid_n: s.core.grid_n,
        },
        EngineChoice::Pde => Engine::Pde {
            space_steps: s.space_steps,
        },
        EngineChoice::ClosedForm => Engine::PerScenarioClosedForm,
    };
    let family = if s.core.scenarios_m > 2 {
        Some(make_scenario_family(model.band, s.core.scenarios_m, &s.core.grid()?)?)
    } else {
        None
    };
    let q = price_bid_ask(&model, &payoff, &engine, family.as_ref())?;
    let tolerance = match s.engine {
        EngineChoice::Mc => 3.0 * (q.bid_error.powi(2) + q.ask_error.powi(2)).sqrt(),
        EngineChoice::Pde => q.bid_error.max(q.ask_error) + 1e-9,
        EngineChoice::ClosedForm => 1e-12 * q.bid.abs().max(1.0),
    };
    let report = QuoteReport {
        bid: q.bid,
        ask: q.ask,
        engine: &q.engine,
        attaining_scenario_bid: &q.bid_scenario,
        attaining_scenario_ask: &q.ask_scenario,
        stderr_or_grid_error: (q.bid_error, q.ask_error),
        error_kind: &q.error_kind,
        tolerance,
        bid_equals_ask_within_tolerance: (q.bid - q.ask).abs() <= tolerance,
        family_restricted: q.family_restricted,
        warnings: &q.warnings,
        note: "bid = sup over scenarios (super-hedging level), ask = inf; reversed from market usage",
        config: &s,
    };
    if !(q.bid.is_finite() && q.ask.is_finite()) {
        return Err(Failure::Numerical(anyhow!("non-finite quote").to_string()));
    }
    let mut out = Outputs::default();
    out.add_json("quote.json", &report)?;
    let m = ctx.manifest("price", &s, Some(s.core.seed))?;
    out.commit(&a.out, m)?;
    println!("bid {:.6} ask {:.6} ({})", q.bid, q.ask, q.engine);
    Ok(())
}
