//! Coupled CIR variance and jump-diffusion price paths at block resolution.
//!
//! ```text
//! dV = kappa (theta_t - V) dt + xi sqrt(V) dW^V
//! dS = mu S- dt + sqrt(V) S- dW^S + S- (e^Y - 1) dN
//! dW^S = rho dW^V + sqrt(1 - rho^2) dW^perp
//! ```
//!
//! `theta_t` switches from `theta_base` to `theta_shock` inside the stress
//! window, and one negative jump is forced at the step containing
//! `t_shock_start`. Time is in years; window bounds and horizon are in hours.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::rng::SimRng;

pub const SECONDS_PER_YEAR: f64 = 365.0 * 24.0 * 3600.0;
pub const HOURS_PER_YEAR: f64 = 365.0 * 24.0;
pub const BLOCK_SECONDS: f64 = 12.0;
/// Annualized volatility of the 2025 ETH close series used for calibration.
pub const ETH_2025_SIGMA: f64 = 0.7456;
pub const SHOCK_MULTIPLIER: f64 = 20.0;
pub const DEFAULT_SEED: u64 = 42;
/// Mean log-size of the forced crash jump. Tuned so the default seed realizes
/// a one-step move of about 38.8%.
pub const FORCED_JUMP_MU: f64 = -0.5273;

/// One block in years.
pub fn block_dt() -> f64 {
    BLOCK_SECONDS / SECONDS_PER_YEAR
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CirScheme {
    /// Euler with the negative part of `V` truncated in drift and diffusion.
    #[default]
    FullTruncation,
    /// Drift-implicit Euler on `sqrt(V)`; stays positive whenever
    /// `4 kappa theta > xi^2`.
    ImplicitSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvjParams {
    pub s0: f64,
    /// Initial variance; `theta_base` when absent.
    pub v0: Option<f64>,
    pub mu: f64,
    pub kappa: f64,
    pub theta_base: f64,
    pub theta_shock: f64,
    pub xi: f64,
    pub rho: f64,
    pub lambda_j: f64,
    pub mu_j: f64,
    pub sigma_j: f64,
    /// Step in years.
    pub dt: f64,
    pub t_shock_start: f64,
    pub t_shock_end: f64,
    pub horizon: f64,
    pub seed: u64,
    pub forced_jump: bool,
    /// Mean of the log-mark for the forced jump; the draw is conditioned on
    /// `Y < 0`.
    pub forced_jump_mu: f64,
    pub scheme: CirScheme,
}

impl Default for SvjParams {
    fn default() -> Self {
        Self::from_annual_vol(ETH_2025_SIGMA)
    }
}

impl SvjParams {
    /// Defaults around a baseline annualized volatility: `theta_base =
    /// sigma^2`, `theta_shock = 20 theta_base`, `kappa = 3`, and `xi` at 95%
    /// of the Feller bound.
    pub fn from_annual_vol(sigma_annual: f64) -> Self {
        let theta_base = sigma_annual * sigma_annual;
        let kappa = 3.0;
        Self {
            s0: 1.0,
            v0: None,
            mu: 0.0,
            kappa,
            theta_base,
            theta_shock: SHOCK_MULTIPLIER * theta_base,
            xi: 0.95 * (2.0 * kappa * theta_base).sqrt(),
            rho: -0.5,
            lambda_j: 10.0,
            mu_j: -0.4,
            sigma_j: 0.1,
            dt: block_dt(),
            t_shock_start: 8.0,
            t_shock_end: 16.0,
            horizon: 24.0,
            seed: DEFAULT_SEED,
            forced_jump: true,
            forced_jump_mu: FORCED_JUMP_MU,
            scheme: CirScheme::FullTruncation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("s0", self.s0)?;
        if let Some(v0) = self.v0 {
            require_positive("v0", v0)?;
        }
        if !self.mu.is_finite() {
            return Err(Error::domain("mu", self.mu, "must be finite"));
        }
        require_positive("kappa", self.kappa)?;
        require_positive("theta_base", self.theta_base)?;
        require_positive("theta_shock", self.theta_shock)?;
        require_non_negative("xi", self.xi)?;
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::domain("rho", self.rho, "must lie in [-1, 1]"));
        }
        require_non_negative("lambda_j", self.lambda_j)?;
        if !self.mu_j.is_finite() || !self.forced_jump_mu.is_finite() {
            return Err(Error::Validation("jump means must be finite".into()));
        }
        require_non_negative("sigma_j", self.sigma_j)?;
        require_positive("dt", self.dt)?;
        require_positive("horizon", self.horizon)?;
        require_non_negative("t_shock_start", self.t_shock_start)?;
        if self.t_shock_end.is_nan() || self.t_shock_end < self.t_shock_start {
            return Err(Error::Validation(format!(
                "stress window ends ({}) before it starts ({})",
                self.t_shock_end, self.t_shock_start
            )));
        }
        if self.lambda_j * self.dt > 1.0 {
            return Err(Error::Validation(format!(
                "jump probability per step {} exceeds 1",
                self.lambda_j * self.dt
            )));
        }
        let feller = 2.0 * self.kappa * self.theta_base;
        if feller < self.xi * self.xi {
            return Err(Error::Validation(format!(
                "Feller condition violated: 2 kappa theta_base = {feller} < xi^2 = {}",
                self.xi * self.xi
            )));
        }
        Ok(())
    }

    pub fn v0(&self) -> f64 {
        self.v0.unwrap_or(self.theta_base)
    }

    pub fn dt_hours(&self) -> f64 {
        self.dt * HOURS_PER_YEAR
    }

    /// Per-step volatility at the baseline variance, `sqrt(theta_base dt)`.
    pub fn sigma_step(&self) -> f64 {
        (self.theta_base * self.dt).sqrt()
    }

    pub fn n_steps(&self) -> usize {
        let raw = self.horizon / self.dt_hours();
        let r = raw.round();
        if (raw - r).abs() < 1e-6 {
            r as usize
        } else {
            raw.ceil() as usize
        }
    }

    /// Index `i` of the step `[t_i, t_{i+1})` that contains `hours`.
    pub fn step_containing(&self, hours: f64) -> usize {
        (hours / self.dt_hours() + 1e-9).floor() as usize
    }

    /// Step carrying the forced jump, if it falls inside the horizon.
    pub fn forced_jump_step(&self) -> Option<usize> {
        if !self.forced_jump {
            return None;
        }
        let i = self.step_containing(self.t_shock_start);
        (i < self.n_steps()).then_some(i)
    }

    fn theta_at(&self, hours: f64) -> f64 {
        if hours + 1e-12 >= self.t_shock_start && hours + 1e-12 < self.t_shock_end {
            self.theta_shock
        } else {
            self.theta_base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvjPath {
    /// Step timestamps in hours, `n + 1` entries.
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    pub variances: Vec<f64>,
    /// Per-step flags, `n` entries.
    pub jump_flags: Vec<bool>,
    /// Gross multiplier `e^Y` per step; 1 where no jump fired.
    pub jump_sizes: Vec<f64>,
    /// Standard normal driving the price diffusion at each step.
    pub z_price: Vec<f64>,
    /// Standard normal driving the variance at each step.
    pub z_variance: Vec<f64>,
    pub forced_jump_step: Option<usize>,
}

impl SvjPath {
    pub fn n_steps(&self) -> usize {
        self.jump_flags.len()
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.jump_flags.len();
        let ok = self.times.len() == n + 1
            && self.prices.len() == n + 1
            && self.variances.len() == n + 1
            && self.jump_sizes.len() == n
            && self.z_price.len() == n
            && self.z_variance.len() == n;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "path series lengths disagree: times {}, prices {}, variances {}, jumps {}",
                self.times.len(),
                self.prices.len(),
                self.variances.len(),
                n
            )))
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.check_shape()?;
        if self.times.len() < 2 {
            return Err(Error::Validation("path has no steps".into()));
        }
        Ok(())
    }
}

pub fn simulate_path(params: &SvjParams) -> Result<SvjPath> {
    simulate_path_stream(params, 0)
}

/// Simulates one path on RNG stream `stream` of `params.seed`.
pub fn simulate_path_stream(params: &SvjParams, stream: u64) -> Result<SvjPath> {
    params.validate()?;
    let n = params.n_steps();
    let dt = params.dt;
    let dt_hours = params.dt_hours();
    let sqrt_dt = dt.sqrt();
    let rho_perp = (1.0 - params.rho * params.rho).sqrt();
    let jump_prob = params.lambda_j * dt;
    let forced = params.forced_jump_step();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    // P(Y < 0) for the forced mark, used to invert the truncated law
    let forced_mass = if params.sigma_j > 0.0 {
        std_normal.cdf(-params.forced_jump_mu / params.sigma_j)
    } else {
        1.0
    };

    let mut rng = SimRng::new(params.seed, stream);
    let mut path = SvjPath {
        times: Vec::with_capacity(n + 1),
        prices: Vec::with_capacity(n + 1),
        variances: Vec::with_capacity(n + 1),
        jump_flags: Vec::with_capacity(n),
        jump_sizes: Vec::with_capacity(n),
        z_price: Vec::with_capacity(n),
        z_variance: Vec::with_capacity(n),
        forced_jump_step: forced,
    };
    let mut s = params.s0;
    let mut v = params.v0();
    path.times.push(0.0);
    path.prices.push(s);
    path.variances.push(v);

    for i in 0..n {
        let t_hours = i as f64 * dt_hours;
        let z_v = rng.normal();
        let z_perp = rng.normal();
        let u = rng.open01();
        let z_mark = rng.normal();
        let z_s = params.rho * z_v + rho_perp * z_perp;

        let theta = params.theta_at(t_hours);
        let v_plus = v.max(0.0);
        let v_next = match params.scheme {
            CirScheme::FullTruncation => {
                v + params.kappa * (theta - v_plus) * dt + params.xi * (v_plus * dt).sqrt() * z_v
            }
            CirScheme::ImplicitSqrt => {
                let a = 1.0 + 0.5 * params.kappa * dt;
                let b = v_plus.sqrt() + 0.5 * params.xi * sqrt_dt * z_v;
                let c = (4.0 * params.kappa * theta - params.xi * params.xi) / 8.0 * dt;
                let root = (b + (b * b + 4.0 * a * c).sqrt()) / (2.0 * a);
                root * root
            }
        };

        let mark = if Some(i) == forced {
            let q = if params.sigma_j > 0.0 {
                std_normal.inverse_cdf(u * forced_mass)
            } else {
                0.0
            };
            Some((params.forced_jump_mu + params.sigma_j * q).min(-f64::MIN_POSITIVE))
        } else if u < jump_prob {
            Some(params.mu_j + params.sigma_j * z_mark)
        } else {
            None
        };
        let gross = mark.map_or(1.0, f64::exp);

        let diffusion = params.mu * dt + (v_plus * dt).sqrt() * z_s;
        let s_next = s * (1.0 + diffusion) + s * (gross - 1.0);

        if !(s_next.is_finite() && s_next > 0.0) {
            return Err(Error::Numeric {
                step: i,
                detail: format!("price left (0, inf): {s_next}"),
            });
        }
        if !v_next.is_finite() {
            return Err(Error::Numeric {
                step: i,
                detail: format!("variance not finite: {v_next}"),
            });
        }

        s = s_next;
        v = v_next;
        path.times.push((i + 1) as f64 * dt_hours);
        path.prices.push(s);
        path.variances.push(v);
        path.jump_flags.push(mark.is_some());
        path.jump_sizes.push(gross);
        path.z_price.push(z_s);
        path.z_variance.push(z_v);
    }
    Ok(path)
}
