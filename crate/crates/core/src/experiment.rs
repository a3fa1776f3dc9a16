//! Config-driven experiment runner behind the `hlcp` binary.
//!
//! A config names one command and a parameter block for it:
//!
//! ```toml
//! command = "stress"
//! seed = 42
//!
//! [output]
//! path = "out/stress.csv"
//! format = "csv"
//!
//! [params.svj]
//! kappa = 3.0
//! ```
//!
//! Every artifact starts with a metadata block (tool version, command, seed,
//! SHA-256 of the resolved config, and the resolved config itself) so it can
//! be re-run. Output location is not part of that block, and nothing
//! time-dependent is written, so identical inputs give identical bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::amm::{self, PoolState};
use crate::backtest::{self, BacktestConfig, ColumnMap, PoolAggregates};
use crate::error::{Error, Result};
use crate::game::{self, PayoffInputs};
use crate::hlcp::{self, HlcpState, TriggerParams};
use crate::parallel::Execution;
use crate::stress::{self, StressConfig};
use crate::svj::{self, SvjParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Geometry,
    Trigger,
    Game,
    Stress,
    Backtest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Geometry => "geometry",
            Command::Trigger => "trigger",
            Command::Game => "game",
            Command::Stress => "stress",
            Command::Backtest => "backtest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputSpec,
    /// Command-specific block; parsed strictly when the command runs.
    #[serde(default = "empty_object")]
    pub params: Value,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            seed: None,
            output: OutputSpec::default(),
            params: empty_object(),
        }
    }

    /// Parses TOML or JSON; JSON is tried first when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            let t: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            serde_json::to_value(t).map_err(|e| Error::Config(e.to_string()))?
        };
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Sets `params.<key>` (creating the object if needed).
    pub fn set_param(&mut self, key: &str, value: Value) {
        if !self.params.is_object() {
            self.params = empty_object();
        }
        self.params
            .as_object_mut()
            .expect("object")
            .insert(key.to_string(), value);
    }

    /// Sets `params.<table>.<key>`.
    pub fn set_nested_param(&mut self, table: &str, key: &str, value: Value) {
        if !self.params.is_object() {
            self.params = empty_object();
        }
        let obj = self.params.as_object_mut().expect("object");
        let inner = obj.entry(table).or_insert_with(empty_object);
        if !inner.is_object() {
            *inner = empty_object();
        }
        inner
            .as_object_mut()
            .expect("object")
            .insert(key.to_string(), value);
    }
}

fn parse_params<T: for<'de> Deserialize<'de>>(command: Command, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone())
        .map_err(|e| Error::Config(format!("[params] for `{}`: {e}", command.name())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryScenario {
    pub x: f64,
    pub y: f64,
    pub trades: Vec<f64>,
    /// Marginal-utility floor for the saturation depth.
    pub epsilon: f64,
}

impl Default for GeometryScenario {
    fn default() -> Self {
        Self {
            x: 1000.0,
            y: 1000.0,
            trades: vec![0.1, 1.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0],
            epsilon: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriggerScenario {
    pub l_total: f64,
    pub n_ratio: f64,
    pub price: f64,
    pub alpha: f64,
    pub tau: f64,
    pub fee: f64,
    /// X-in trade sizes applied in order.
    pub trades: Vec<f64>,
}

impl Default for TriggerScenario {
    fn default() -> Self {
        let p = TriggerParams::default();
        Self {
            l_total: 1_000_000.0,
            n_ratio: 0.5,
            price: 1.0,
            alpha: p.alpha,
            tau: p.tau,
            fee: p.fee,
            trades: vec![100.0, 1_000.0, 5_000.0, 20_000.0, 100_000.0, 250_000.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl SweepSpec {
    /// Parses `X=lo..hi`; `points` defaults to one per decade plus one.
    pub fn parse(text: &str, points: Option<usize>) -> Result<Self> {
        let bad = || Error::Config(format!("sweep must look like `X=1e3..1e12`, got `{text}`"));
        let (var, range) = text.split_once('=').ok_or_else(bad)?;
        if var.trim() != "X" {
            return Err(Error::Config(format!(
                "only the background liquidity `X` can be swept, got `{}`",
                var.trim()
            )));
        }
        let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
        let from: f64 = lo.trim().parse().map_err(|_| bad())?;
        let to: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !(from > 0.0 && to >= from) {
            return Err(bad());
        }
        let decades = (to / from).log10().round() as usize;
        Ok(Self {
            from,
            to,
            points: points.unwrap_or(decades + 1).max(1),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameScenario {
    pub w: f64,
    pub x_bg: f64,
    pub n_ratio: f64,
    pub sigma: f64,
    pub r_c: f64,
    pub f_max: f64,
    pub t: f64,
    pub sweep: Option<SweepSpec>,
}

impl Default for GameScenario {
    fn default() -> Self {
        Self {
            w: 1e6,
            x_bg: 1e12,
            n_ratio: 0.5,
            sigma: svj::ETH_2025_SIGMA,
            r_c: 0.0,
            f_max: 1e8,
            t: 1.0,
            sweep: None,
        }
    }
}

impl GameScenario {
    pub fn inputs(&self) -> PayoffInputs {
        PayoffInputs {
            w: self.w,
            x_bg: self.x_bg,
            n_ratio: self.n_ratio,
            sigma: self.sigma,
            r_c: self.r_c,
            f_max: self.f_max,
            t: self.t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StressScenario {
    pub svj: SvjParams,
    pub pool: StressConfig,
    /// Number of independent paths. One path emits the full series; more
    /// emit one summary row per path.
    pub paths: usize,
}

impl Default for StressScenario {
    fn default() -> Self {
        Self {
            svj: SvjParams::default(),
            pool: StressConfig::default(),
            paths: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestScenario {
    /// CSV with `date,close` rows.
    pub prices: Option<PathBuf>,
    pub columns: ColumnMap,
    pub aggregates: PoolAggregates,
    pub run: BacktestConfig,
}

impl Default for BacktestScenario {
    fn default() -> Self {
        Self {
            prices: None,
            columns: ColumnMap::default(),
            aggregates: PoolAggregates::USDC_ETH_2025,
            run: BacktestConfig::default(),
        }
    }
}

/// Bytes of one experiment: the main artifact plus an optional summary
/// document written next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub payload: Vec<u8>,
    pub summary: Option<Vec<u8>>,
}

struct Metadata {
    command: Command,
    seed: Option<u64>,
    config: Value,
    hash: String,
}

impl Metadata {
    fn new(command: Command, seed: Option<u64>, params: Value) -> Result<Self> {
        let config = json!({
            "command": command.name(),
            "seed": seed,
            "params": params,
        });
        let canonical = serde_json::to_vec(&config).map_err(|e| Error::Config(e.to_string()))?;
        let hash = hex::encode(Sha256::digest(&canonical));
        Ok(Self {
            command,
            seed,
            config,
            hash,
        })
    }

    fn to_json(&self) -> Value {
        json!({
            "tool": "hlcp",
            "version": VERSION,
            "command": self.command.name(),
            "seed": self.seed,
            "config_sha256": self.hash,
            "config": self.config,
        })
    }

    fn csv_header(&self, summary: Option<&Value>) -> String {
        let mut out = String::new();
        out.push_str(&format!("# tool: hlcp {VERSION}\n"));
        out.push_str(&format!("# command: {}\n", self.command.name()));
        match self.seed {
            Some(s) => out.push_str(&format!("# seed: {s}\n")),
            None => out.push_str("# seed: none\n"),
        }
        out.push_str(&format!("# config_sha256: {}\n", self.hash));
        out.push_str(&format!("# config: {}\n", self.config));
        if let Some(s) = summary {
            out.push_str(&format!("# summary: {s}\n"));
        }
        out
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn render<R: Serialize>(
    meta: &Metadata,
    format: Format,
    rows: &[R],
    summary: Option<Value>,
) -> Result<RunOutput> {
    let payload = match format {
        Format::Csv => {
            let mut out = meta.csv_header(summary.as_ref()).into_bytes();
            {
                let mut w = csv::Writer::from_writer(&mut out);
                for r in rows {
                    w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
                }
                w.flush().map_err(|e| Error::Config(e.to_string()))?;
            }
            out
        }
        Format::Json => {
            let doc = json!({
                "metadata": meta.to_json(),
                "summary": summary,
                "data": rows.iter().map(to_value).collect::<Vec<_>>(),
            });
            let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
            out.push(b'\n');
            out
        }
    };
    let summary = summary.map(|s| {
        let doc = json!({ "metadata": meta.to_json(), "summary": s });
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("json");
        bytes.push(b'\n');
        bytes
    });
    Ok(RunOutput { payload, summary })
}

#[derive(Serialize)]
struct GeometryRow {
    delta_x: f64,
    delta_y: f64,
    p_marginal: f64,
    p_effective: f64,
    p_new: f64,
    slippage: f64,
    price_deviation: f64,
    k_trade: f64,
    saturation_depth: f64,
}

fn run_geometry(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let sc: GeometryScenario = parse_params(cfg.command, &cfg.params)?;
    let pool = PoolState::new(sc.x, sc.y)?;
    let rows = sc
        .trades
        .iter()
        .map(|&dx| {
            let (q, _) = amm::quote_swap(&pool, dx)?;
            let k = pool.trade_constant(dx);
            Ok(GeometryRow {
                delta_x: q.delta_x,
                delta_y: q.delta_y,
                p_marginal: q.p_marginal,
                p_effective: q.p_effective,
                p_new: q.p_new,
                slippage: q.slippage,
                price_deviation: q.price_deviation,
                k_trade: k,
                saturation_depth: amm::saturation_depth(k, sc.epsilon)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = json!({
        "liquidity": pool.liquidity(),
        "marginal_price": pool.marginal_price(),
    });
    let meta = Metadata::new(cfg.command, cfg.seed, to_value(&sc))?;
    render(&meta, cfg.output.format, &rows, Some(summary))
}

#[derive(Serialize)]
struct TriggerRow {
    step: usize,
    delta_x: f64,
    price_before: f64,
    price_after_trade: f64,
    price_deviation: f64,
    phi: f64,
    delta_c: f64,
    collateral: f64,
    l_active: f64,
    l_eff: f64,
    l_eff_post: f64,
    undeployed_share: f64,
}

fn run_trigger(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let sc: TriggerScenario = parse_params(cfg.command, &cfg.params)?;
    let params = TriggerParams::new(sc.alpha, sc.tau, sc.fee)?;
    let mut state = HlcpState::initialize(sc.l_total, sc.n_ratio, sc.price)?;
    let initial = state.snapshot(&params);
    let mut rows = Vec::with_capacity(sc.trades.len());
    for (i, &dx) in sc.trades.iter().enumerate() {
        let out = hlcp::step(&state, dx, &params)?;
        let acc = out.injection.accounting.expect("step fills accounting");
        rows.push(TriggerRow {
            step: i + 1,
            delta_x: dx,
            price_before: out.quote.p_marginal,
            price_after_trade: out.quote.p_new,
            price_deviation: out.price_deviation,
            phi: out.phi,
            delta_c: out.injection.delta_c,
            collateral: out.state.collateral,
            l_active: out.state.l_active(),
            l_eff: acc.l_eff,
            l_eff_post: acc.l_eff_post,
            undeployed_share: out.injection.undeployed_share,
        });
        state = out.state;
    }
    let summary = json!({
        "initial": initial,
        "final": state.snapshot(&params),
    });
    let meta = Metadata::new(cfg.command, cfg.seed, to_value(&sc))?;
    render(&meta, cfg.output.format, &rows, Some(summary))
}

fn run_game(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    let sc: GameScenario = parse_params(cfg.command, &cfg.params)?;
    let inputs = sc.inputs();
    inputs.validate()?;
    let xs = match sc.sweep {
        Some(s) => game::geometric_grid(s.from, s.to, s.points)?,
        None => vec![inputs.x_bg],
    };
    let rows = game::sweep_background(&inputs, &xs, exec)?;
    let summary = json!({
        "nash": game::nash_check(&inputs),
        "limit_condition": game::limit_condition(&inputs),
        "pareto": game::pareto_check(&inputs),
    });
    let meta = Metadata::new(cfg.command, cfg.seed, to_value(&sc))?;
    render(&meta, cfg.output.format, &rows, Some(summary))
}

#[derive(Serialize)]
struct StressRow {
    t_hours: f64,
    price: f64,
    variance: f64,
    phi: f64,
    loss_std: f64,
    loss_hlcp: f64,
    undeployed_share: f64,
}

#[derive(Serialize)]
struct EnsembleRow {
    stream: usize,
    final_loss_std: f64,
    final_loss_hlcp: f64,
    reduction: f64,
    peak_deployment: f64,
    min_buffer_after_step: f64,
    max_phi: f64,
}

fn run_stress_cmd(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    let mut sc: StressScenario = parse_params(cfg.command, &cfg.params)?;
    if let Some(seed) = cfg.seed {
        sc.svj.seed = seed;
    }
    let meta = Metadata::new(cfg.command, Some(sc.svj.seed), to_value(&sc))?;
    if sc.paths == 0 {
        return Err(Error::Config("paths must be >= 1".into()));
    }
    if sc.paths > 1 {
        let sums = stress::stress_ensemble(&sc.svj, &sc.pool, sc.paths, exec)?;
        let rows: Vec<EnsembleRow> = sums
            .iter()
            .enumerate()
            .map(|(k, s)| EnsembleRow {
                stream: k,
                final_loss_std: s.final_loss_std,
                final_loss_hlcp: s.final_loss_hlcp,
                reduction: s.reduction(),
                peak_deployment: s.peak_deployment,
                min_buffer_after_step: s.min_buffer_after_step,
                max_phi: s.max_phi,
            })
            .collect();
        let mean = |f: fn(&EnsembleRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
        let summary = json!({
            "paths": rows.len(),
            "mean_final_loss_std": mean(|r| r.final_loss_std),
            "mean_final_loss_hlcp": mean(|r| r.final_loss_hlcp),
            "mean_reduction": mean(|r| r.reduction),
        });
        return render(&meta, cfg.output.format, &rows, Some(summary));
    }
    let path = svj::simulate_path(&sc.svj)?;
    let result = stress::run_stress(&path, &sc.pool)?;
    let crash = stress::crash_report(&result).ok();
    let forced_shock = path
        .forced_jump_step
        .map(|i| (path.prices[i + 1] / path.prices[i] - 1.0).abs());
    let summary = json!({
        "stress": result.summary,
        "crash": crash,
        "forced_jump_step": path.forced_jump_step,
        "forced_shock": forced_shock,
    });
    let rows: Vec<StressRow> = (0..result.times.len())
        .map(|i| StressRow {
            t_hours: result.times[i],
            price: result.prices[i],
            variance: result.variances[i],
            phi: result.phi_series[i],
            loss_std: result.loss_std[i],
            loss_hlcp: result.loss_hlcp[i],
            undeployed_share: result.undeployed_share[i],
        })
        .collect();
    render(&meta, cfg.output.format, &rows, Some(summary))
}

#[derive(Serialize)]
struct BacktestRow {
    date: String,
    net_yield_std: f64,
    net_yield_hlcp: f64,
    cum_lvr_drag: f64,
    cum_fees: f64,
}

fn run_backtest_cmd(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let sc: BacktestScenario = parse_params(cfg.command, &cfg.params)?;
    let prices = sc
        .prices
        .as_ref()
        .ok_or_else(|| Error::Config("backtest needs `prices` (a date,close CSV)".into()))?;
    let (series, gaps) = backtest::load_series(prices, &sc.columns, sc.aggregates)?;
    let fees = backtest::fee_apr(&series)?;
    let run = backtest::run_backtest(&series, &sc.run)?;
    let rows: Vec<BacktestRow> = (0..run.dates.len())
        .map(|i| BacktestRow {
            date: run.dates[i].to_string(),
            net_yield_std: run.net_yield_std[i],
            net_yield_hlcp: run.net_yield_hlcp[i],
            cum_lvr_drag: run.cum_lvr_drag[i],
            cum_fees: run.cum_fees[i],
        })
        .collect();
    let summary = json!({
        "fee_apr": fees.apr,
        "fee_apy": fees.apy,
        "realized_vol": run.realized_vol,
        "final_net_yield_std": run.final_std(),
        "final_net_yield_hlcp": run.final_hlcp(),
        "final_gap": run.final_gap(),
        "gap_warnings": gaps,
    });
    let meta = Metadata::new(cfg.command, cfg.seed, to_value(&sc))?;
    render(&meta, cfg.output.format, &rows, Some(summary))
}

/// Runs the experiment and returns its bytes without touching the
/// filesystem (the backtest still reads its price file).
pub fn run(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    match cfg.command {
        Command::Geometry => run_geometry(cfg),
        Command::Trigger => run_trigger(cfg),
        Command::Game => run_game(cfg, exec),
        Command::Stress => run_stress_cmd(cfg, exec),
        Command::Backtest => run_backtest_cmd(cfg),
    }
}

/// Path of the summary document written next to `path`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.summary.json"))
}

/// Writes the run output to `cfg.output.path`, or returns the payload for
/// stdout when no path is set. Summaries only go to disk alongside a file
/// artifact.
pub fn write(cfg: &ExperimentConfig, out: &RunOutput) -> Result<Option<Vec<u8>>> {
    let Some(path) = &cfg.output.path else {
        return Ok(Some(out.payload.clone()));
    };
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    std::fs::write(path, &out.payload).map_err(io(path))?;
    if let (Some(summary), Format::Csv) = (&out.summary, cfg.output.format) {
        let sp = summary_path(path);
        std::fs::write(&sp, summary).map_err(io(&sp))?;
    }
    Ok(None)
}

/// Process exit code for an error: 2 for bad input, 3 for numeric failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric { .. } => 3,
        Error::Config(_)
        | Error::Validation(_)
        | Error::Domain { .. }
        | Error::Parse { .. }
        | Error::InsufficientBuffer { .. } => 2,
        Error::Io { .. } => 1,
    }
}

/// Machine-readable error record printed on failure.
pub fn error_record(err: &Error) -> Value {
    let mut rec = json!({
        "error": {
            "kind": err.kind(),
            "message": err.to_string(),
            "exit_code": exit_code(err),
        }
    });
    match err {
        Error::Numeric { step, .. } => rec["error"]["step"] = json!(step),
        Error::Parse { row, .. } => rec["error"]["row"] = json!(row),
        _ => {}
    }
    rec
}
