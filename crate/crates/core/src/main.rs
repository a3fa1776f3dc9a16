use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hlcp::experiment::{self, Command, ExperimentConfig, Format, SweepSpec};
use hlcp::{Error, Execution, Result};

#[derive(Parser, Debug)]
#[command(name = "hlcp", version, about = "Hybrid liquidity-collateral pool toolkit")]
struct Cli {
    /// Experiment config (TOML or JSON). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Run sweeps and ensembles on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Slippage, price deviation and saturation depth for a pool.
    Geometry,
    /// Step the HLCP trigger through a trade sequence.
    Trigger,
    /// Two-player payoff matrix, Nash check and background sweep.
    Game(GameArgs),
    /// Simulated flash-crash stress test.
    Stress(StressArgs),
    /// Historical yield backtest.
    Backtest(BacktestArgs),
}

#[derive(Args, Debug)]
struct GameArgs {
    /// Background sweep such as `X=1e3..1e12`.
    #[arg(long)]
    sweep: Option<String>,
    /// Grid points for the sweep.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args, Debug)]
struct StressArgs {
    /// Number of independent paths.
    #[arg(long)]
    paths: Option<usize>,
}

#[derive(Args, Debug)]
struct BacktestArgs {
    /// Daily `date,close` CSV.
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    n_ratio: Option<f64>,
    #[arg(long)]
    rc: Option<f64>,
    #[arg(long)]
    vol_window: Option<usize>,
    /// Use one full-sample volatility for every day.
    #[arg(long)]
    constant_vol: bool,
    #[arg(long)]
    compound_fees: bool,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let cmd = cli.command.as_ref().ok_or_else(|| {
                Error::Config("a subcommand or --config is required".into())
            })?;
            ExperimentConfig::new(command_of(cmd))
        }
    };
    if let Some(cmd) = &cli.command {
        let wanted = command_of(cmd);
        if cli.config.is_some() && wanted != cfg.command {
            return Err(Error::Config(format!(
                "config is for `{}` but `{}` was requested",
                cfg.command.name(),
                wanted.name()
            )));
        }
        apply_flags(&mut cfg, cmd)?;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.output.path = cli.out.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    Ok(cfg)
}

fn command_of(cmd: &Cmd) -> Command {
    match cmd {
        Cmd::Geometry => Command::Geometry,
        Cmd::Trigger => Command::Trigger,
        Cmd::Game(_) => Command::Game,
        Cmd::Stress(_) => Command::Stress,
        Cmd::Backtest(_) => Command::Backtest,
    }
}

fn apply_flags(cfg: &mut ExperimentConfig, cmd: &Cmd) -> Result<()> {
    match cmd {
        Cmd::Geometry | Cmd::Trigger => {}
        Cmd::Game(a) => {
            if let Some(s) = &a.sweep {
                let spec = SweepSpec::parse(s, a.points)?;
                cfg.set_param("sweep", serde_json::to_value(spec).expect("json"));
            } else if a.points.is_some() {
                return Err(Error::Config("--points needs --sweep".into()));
            }
        }
        Cmd::Stress(a) => {
            if let Some(p) = a.paths {
                cfg.set_param("paths", json!(p));
            }
        }
        Cmd::Backtest(a) => {
            if let Some(p) = &a.prices {
                cfg.set_param("prices", json!(p));
            }
            if let Some(n) = a.n_ratio {
                cfg.set_nested_param("run", "n_ratio", json!(n));
            }
            if let Some(rc) = a.rc {
                cfg.set_nested_param("run", "rc", json!(rc));
            }
            if let Some(w) = a.vol_window {
                cfg.set_nested_param("run", "vol_window", json!(w));
            }
            if a.constant_vol {
                cfg.set_nested_param("run", "constant_vol", json!(true));
            }
            if a.compound_fees {
                cfg.set_nested_param("run", "compound_fees", json!(true));
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let out = experiment::run(&cfg, exec)?;
    if let Some(bytes) = experiment::write(&cfg, &out)? {
        let mut stdout = std::io::stdout().lock();
        stdout
            .write_all(&bytes)
            .and_then(|_| stdout.flush())
            .map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", experiment::error_record(&e));
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}
