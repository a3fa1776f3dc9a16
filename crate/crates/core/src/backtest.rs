//! Daily net-yield backtest of a standard pool against the N-scaled design.
//!
//! Both positions earn the same benchmark fee APR. The standard pool pays the
//! full LVR drag `sigma_t^2 / 8` on its capital, the HLCP pays `N` times that
//! and earns `(1 - N) r_c` on the dormant buffer.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, require_ratio, Error, Result};
use crate::lvr::drag_rate;
use crate::parallel::{self, Execution};

pub const DAYS_PER_YEAR: f64 = 365.0;
/// Calendar gap beyond which a warning is raised.
pub const MAX_GAP_DAYS: i64 = 3;
pub const MIN_OBSERVATIONS: usize = 30;
pub const DEFAULT_VOL_WINDOW: usize = 30;

/// Pool-level aggregates that do not vary by day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolAggregates {
    pub tvl: f64,
    pub daily_volume: f64,
    pub fee_rate: f64,
}

impl PoolAggregates {
    /// 2025 Uniswap V2 USDC/ETH averages.
    pub const USDC_ETH_2025: PoolAggregates = PoolAggregates {
        tvl: 31.21e6,
        daily_volume: 3.15e6,
        fee_rate: 0.003,
    };

    pub fn validate(&self) -> Result<()> {
        require_non_negative("tvl", self.tvl)?;
        require_non_negative("daily_volume", self.daily_volume)?;
        if !(self.fee_rate > 0.0 && self.fee_rate <= 0.01) {
            return Err(Error::domain("fee_rate", self.fee_rate, "must lie in (0, 0.01]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
    pub tvl: f64,
    pub daily_volume: f64,
    pub fee_rate: f64,
}

impl MarketSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>, aggregates: PoolAggregates) -> Result<Self> {
        aggregates.validate()?;
        if dates.len() != closes.len() {
            return Err(Error::Validation(format!(
                "{} dates but {} closes",
                dates.len(),
                closes.len()
            )));
        }
        if dates.len() < 2 {
            return Err(Error::Validation("series needs at least two rows".into()));
        }
        for (i, pair) in dates.windows(2).enumerate() {
            if pair[1] == pair[0] {
                return Err(Error::Validation(format!("duplicate date {}", pair[1])));
            }
            if pair[1] < pair[0] {
                return Err(Error::Validation(format!(
                    "dates not increasing at row {}: {} after {}",
                    i + 1,
                    pair[1],
                    pair[0]
                )));
            }
        }
        if let Some(i) = closes.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Validation(format!(
                "close on {} is not positive: {}",
                dates[i], closes[i]
            )));
        }
        Ok(Self {
            dates,
            closes,
            tvl: aggregates.tvl,
            daily_volume: aggregates.daily_volume,
            fee_rate: aggregates.fee_rate,
        })
    }

    pub fn aggregates(&self) -> PoolAggregates {
        PoolAggregates {
            tvl: self.tvl,
            daily_volume: self.daily_volume,
            fee_rate: self.fee_rate,
        }
    }

    pub fn log_returns(&self) -> Vec<f64> {
        self.closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
    }

    /// Consecutive dates further apart than [`MAX_GAP_DAYS`].
    pub fn gaps(&self) -> Vec<GapWarning> {
        self.dates
            .windows(2)
            .filter_map(|w| {
                let days = (w[1] - w[0]).num_days();
                (days > MAX_GAP_DAYS).then_some(GapWarning {
                    from: w[0],
                    to: w[1],
                    days,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GapWarning {
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub days: i64,
}

/// Column names to read from the price CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub date: String,
    pub close: String,
    pub date_format: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            date: "date".into(),
            close: "close".into(),
            date_format: "%Y-%m-%d".into(),
        }
    }
}

/// Reads `date,close` rows. Rows are data rows counted from 1; the header is
/// row 0.
pub fn read_series<R: std::io::Read>(
    reader: R,
    schema: &ColumnMap,
    aggregates: PoolAggregates,
) -> Result<(MarketSeries, Vec<GapWarning>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            detail: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 0,
            detail: format!("missing column `{name}`"),
        })
    };
    let (date_idx, close_idx) = (col(&schema.date)?, col(&schema.close)?);

    let mut dates = Vec::new();
    let mut closes = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            detail: e.to_string(),
        })?;
        let field = |idx: usize| {
            record.get(idx).ok_or_else(|| Error::Parse {
                row,
                detail: "short row".into(),
            })
        };
        let date = NaiveDate::parse_from_str(field(date_idx)?, &schema.date_format).map_err(
            |e| Error::Parse {
                row,
                detail: format!("bad date `{}`: {e}", field(date_idx).unwrap_or("")),
            },
        )?;
        let close: f64 = field(close_idx)?.parse().map_err(|e| Error::Parse {
            row,
            detail: format!("bad close `{}`: {e}", field(close_idx).unwrap_or("")),
        })?;
        dates.push(date);
        closes.push(close);
    }
    let series = MarketSeries::new(dates, closes, aggregates)?;
    let gaps = series.gaps();
    Ok((series, gaps))
}

pub fn load_series(
    path: &Path,
    schema: &ColumnMap,
    aggregates: PoolAggregates,
) -> Result<(MarketSeries, Vec<GapWarning>)> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_series(file, schema, aggregates)
}

/// Sample standard deviation of daily log returns, annualized by `sqrt(365)`.
pub fn realized_vol(series: &MarketSeries) -> Result<f64> {
    if series.closes.len() < MIN_OBSERVATIONS {
        return Err(Error::Validation(format!(
            "realized volatility needs at least {MIN_OBSERVATIONS} observations, got {}",
            series.closes.len()
        )));
    }
    let r = series.log_returns();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((var * DAYS_PER_YEAR).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeeYield {
    pub apr: f64,
    /// Daily compounding of `apr`.
    pub apy: f64,
}

pub fn fee_yield(aggregates: &PoolAggregates) -> Result<FeeYield> {
    require_positive("tvl", aggregates.tvl)?;
    let annual_fees = aggregates.daily_volume * aggregates.fee_rate * DAYS_PER_YEAR;
    let apr = annual_fees / aggregates.tvl;
    Ok(FeeYield {
        apr,
        apy: (1.0 + apr / DAYS_PER_YEAR).powf(DAYS_PER_YEAR) - 1.0,
    })
}

pub fn fee_apr(series: &MarketSeries) -> Result<FeeYield> {
    fee_yield(&series.aggregates())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exposure {
    /// Drag on initial capital throughout.
    #[default]
    Initial,
    /// Drag on the constant-product position value, `sqrt(P_t / P_0)` of
    /// initial capital.
    MarkToMarket,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    pub n_ratio: f64,
    /// Annual collateral yield on the buffer.
    pub rc: f64,
    /// Trailing window (days) of the rolling realized variance.
    pub vol_window: usize,
    /// Use one volatility for the whole sample instead of the rolling one.
    pub constant_vol: bool,
    /// Volatility used with `constant_vol`; full-sample realized vol if absent.
    pub sigma: Option<f64>,
    pub compound_fees: bool,
    pub exposure: Exposure,
    /// Fraction of benchmark fees the HLCP forgoes. 0 under proportional
    /// routing; a router-gap value gives a robustness run.
    pub hlcp_fee_haircut: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            n_ratio: 0.5,
            rc: 0.0,
            vol_window: DEFAULT_VOL_WINDOW,
            constant_vol: false,
            sigma: None,
            compound_fees: false,
            exposure: Exposure::Initial,
            hlcp_fee_haircut: 0.0,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        require_ratio("n_ratio", self.n_ratio)?;
        require_non_negative("rc", self.rc)?;
        if self.vol_window == 0 {
            return Err(Error::Validation("vol_window must be >= 1".into()));
        }
        if let Some(s) = self.sigma {
            require_non_negative("sigma", s)?;
        }
        if !(0.0..=1.0).contains(&self.hlcp_fee_haircut) {
            return Err(Error::domain(
                "hlcp_fee_haircut",
                self.hlcp_fee_haircut,
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestSeries {
    pub dates: Vec<NaiveDate>,
    pub net_yield_std: Vec<f64>,
    pub net_yield_hlcp: Vec<f64>,
    /// Cumulative drag of a fully exposed position.
    pub cum_lvr_drag: Vec<f64>,
    pub cum_fees: Vec<f64>,
    pub fee_apr: f64,
    /// Full-sample realized volatility (or the override under `constant_vol`).
    pub realized_vol: f64,
    pub config: BacktestConfig,
}

impl BacktestSeries {
    pub fn final_std(&self) -> f64 {
        *self.net_yield_std.last().expect("non-empty")
    }

    pub fn final_hlcp(&self) -> f64 {
        *self.net_yield_hlcp.last().expect("non-empty")
    }

    pub fn final_gap(&self) -> f64 {
        self.final_hlcp() - self.final_std()
    }
}

/// Annualized variance from the mean squared log return over the trailing
/// `window` returns ending at `end` (inclusive), shortening the window
/// during warm-up.
fn rolling_variance(returns: &[f64], end: usize, window: usize) -> f64 {
    let start = (end + 1).saturating_sub(window);
    let slice = &returns[start..=end];
    slice.iter().map(|r| r * r).sum::<f64>() / slice.len() as f64 * DAYS_PER_YEAR
}

pub fn run_backtest(series: &MarketSeries, cfg: &BacktestConfig) -> Result<BacktestSeries> {
    cfg.validate()?;
    let fees = fee_apr(series)?;
    let returns = series.log_returns();
    let full_vol = match (cfg.constant_vol, cfg.sigma) {
        (true, Some(s)) => s,
        _ if series.closes.len() >= MIN_OBSERVATIONS => realized_vol(series)?,
        _ => {
            let r2 = returns.iter().map(|r| r * r).sum::<f64>() / returns.len() as f64;
            (r2 * DAYS_PER_YEAR).sqrt()
        }
    };
    let n = cfg.n_ratio;
    let p0 = series.closes[0];

    let len = series.dates.len();
    let mut net_std = Vec::with_capacity(len);
    let mut net_hlcp = Vec::with_capacity(len);
    let mut cum_drag = Vec::with_capacity(len);
    let mut cum_fees = Vec::with_capacity(len);
    net_std.push(0.0);
    net_hlcp.push(0.0);
    cum_drag.push(0.0);
    cum_fees.push(0.0);

    let (mut drag, mut elapsed) = (0.0f64, 0.0f64);
    for i in 1..len {
        let days = (series.dates[i] - series.dates[i - 1]).num_days() as f64;
        let dt = days / DAYS_PER_YEAR;
        elapsed += days;
        let variance = if cfg.constant_vol {
            full_vol * full_vol
        } else {
            rolling_variance(&returns, i - 1, cfg.vol_window)
        };
        let exposure = match cfg.exposure {
            Exposure::Initial => 1.0,
            Exposure::MarkToMarket => (series.closes[i - 1] / p0).sqrt(),
        };
        drag += drag_rate(variance.sqrt()) * exposure * dt;
        let fee = if cfg.compound_fees {
            (1.0 + fees.apr / DAYS_PER_YEAR).powf(elapsed) - 1.0
        } else {
            fees.apr * elapsed / DAYS_PER_YEAR
        };
        let collateral = (1.0 - n) * cfg.rc * elapsed / DAYS_PER_YEAR;
        net_std.push(fee - drag);
        net_hlcp.push(fee * (1.0 - cfg.hlcp_fee_haircut) - n * drag + collateral);
        cum_drag.push(drag);
        cum_fees.push(fee);
    }

    Ok(BacktestSeries {
        dates: series.dates.clone(),
        net_yield_std: net_std,
        net_yield_hlcp: net_hlcp,
        cum_lvr_drag: cum_drag,
        cum_fees,
        fee_apr: fees.apr,
        realized_vol: full_vol,
        config: *cfg,
    })
}

/// Runs the same series under several configurations, in input order.
pub fn sweep(
    series: &MarketSeries,
    configs: &[BacktestConfig],
    exec: Execution,
) -> Result<Vec<BacktestSeries>> {
    parallel::try_map(configs, exec, |c| run_backtest(series, c))
}
