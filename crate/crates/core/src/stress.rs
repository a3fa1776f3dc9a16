//! Reduced-form stress losses along a simulated crash path.
//!
//! Each step turns the realized price move into a trigger input
//! `phi_t = max(0, |S_{t+1}/S_t - 1| - tau)` and accrues
//!
//! ```text
//! std:   l += K_std phi^2 / 8
//! hlcp:  l += K_act phi^2 / 8 * K_act / (K_act + dC_t)
//! ```
//!
//! with `dC_t` drawn from a buffer that shrinks as it deploys. The
//! `undeployed_share` series is the stateless policy value
//! `1 / (1 + N a phi_t)`, reported separately from that inventory.

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, require_ratio, Error, Result};
use crate::hlcp::{deploy_amount, undeployed_share, DEFAULT_ALPHA, DEFAULT_FEE};
use crate::parallel::{self, Execution};
use crate::svj::{simulate_path_stream, SvjParams, SvjPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StressConfig {
    pub n_ratio: f64,
    pub alpha: f64,
    pub tau: f64,
    /// Benchmark capital exposed by the standard pool.
    pub k_std: f64,
    /// Active capital of the HLCP.
    pub k_act: f64,
    /// Initial buffer.
    pub c0: f64,
    /// Scale exposures by `sqrt(S_t / S_0)`, the value path of a
    /// constant-product position, instead of holding them constant.
    pub mark_to_market: bool,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self::with_ratio(0.5)
    }
}

impl StressConfig {
    /// Unit benchmark capital split into `N` active and `1 - N` buffer.
    pub fn with_ratio(n_ratio: f64) -> Self {
        Self {
            n_ratio,
            alpha: DEFAULT_ALPHA,
            tau: DEFAULT_FEE,
            k_std: 1.0,
            k_act: n_ratio,
            c0: 1.0 - n_ratio,
            mark_to_market: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_ratio("n_ratio", self.n_ratio)?;
        require_positive("alpha", self.alpha)?;
        require_non_negative("tau", self.tau)?;
        require_positive("k_std", self.k_std)?;
        require_positive("k_act", self.k_act)?;
        require_non_negative("c0", self.c0)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressSummary {
    pub final_loss_std: f64,
    pub final_loss_hlcp: f64,
    pub loss_std_16h: Option<f64>,
    pub loss_hlcp_16h: Option<f64>,
    pub loss_std_24h: Option<f64>,
    pub loss_hlcp_24h: Option<f64>,
    /// Largest pointwise deployed share `1 - undeployed_share`.
    pub peak_deployment: f64,
    /// `min_t (C_t - dC_t)` over the stateful inventory.
    pub min_buffer_after_step: f64,
    pub max_phi: f64,
}

impl StressSummary {
    /// `1 - l_hlcp / l_std` at the end of the run; 0 when nothing was lost.
    pub fn reduction(&self) -> f64 {
        reduction_ratio(self.final_loss_std, self.final_loss_hlcp)
    }
}

fn reduction_ratio(std: f64, hlcp: f64) -> f64 {
    if std > 0.0 {
        1.0 - hlcp / std
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressResult {
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    pub variances: Vec<f64>,
    /// `phi` of the step arriving at each timestamp; 0 at `t = 0`.
    pub phi_series: Vec<f64>,
    pub loss_std: Vec<f64>,
    pub loss_hlcp: Vec<f64>,
    /// Stateless policy value `1 / (1 + N a phi_t)`.
    pub undeployed_share: Vec<f64>,
    /// Stateful buffer inventory `C_t`.
    pub buffer: Vec<f64>,
    pub summary: StressSummary,
}

fn index_at(times: &[f64], dt_hours: f64, hours: f64) -> Option<usize> {
    let i = (hours / dt_hours).round() as usize;
    (i < times.len() && (times[i] - hours).abs() < 0.5 * dt_hours).then_some(i)
}

pub fn run_stress(path: &SvjPath, cfg: &StressConfig) -> Result<StressResult> {
    cfg.validate()?;
    path.validate()?;
    let n = path.n_steps();
    let s0 = path.prices[0];

    let mut phi_series = Vec::with_capacity(n + 1);
    let mut loss_std = Vec::with_capacity(n + 1);
    let mut loss_hlcp = Vec::with_capacity(n + 1);
    let mut shares = Vec::with_capacity(n + 1);
    let mut buffer = Vec::with_capacity(n + 1);
    phi_series.push(0.0);
    loss_std.push(0.0);
    loss_hlcp.push(0.0);
    shares.push(1.0);
    buffer.push(cfg.c0);

    let (mut l_std, mut l_hlcp, mut c) = (0.0f64, 0.0f64, cfg.c0);
    let mut min_after = f64::INFINITY;
    let mut max_phi = 0.0f64;
    for i in 0..n {
        let (s, s_next) = (path.prices[i], path.prices[i + 1]);
        let dp = (s_next / s - 1.0).abs();
        let phi = (dp - cfg.tau).max(0.0);
        let scale = if cfg.mark_to_market {
            (s / s0).sqrt()
        } else {
            1.0
        };
        let k_std = cfg.k_std * scale;
        let k_act = cfg.k_act * scale;
        let dc = deploy_amount(c, cfg.n_ratio, cfg.alpha, phi);
        let k_new = k_act + dc;
        let base = phi * phi / 8.0;
        l_std += k_std * base;
        l_hlcp += k_act * base * (k_act / k_new);
        c -= dc;
        min_after = min_after.min(c);
        max_phi = max_phi.max(phi);

        if !(l_std.is_finite() && l_hlcp.is_finite()) {
            return Err(Error::Numeric {
                step: i,
                detail: "loss accumulator not finite".into(),
            });
        }
        phi_series.push(phi);
        loss_std.push(l_std);
        loss_hlcp.push(l_hlcp);
        shares.push(undeployed_share(cfg.n_ratio, cfg.alpha, phi));
        buffer.push(c);
    }

    let dt_hours = path.times[1] - path.times[0];
    let at = |series: &[f64], h: f64| index_at(&path.times, dt_hours, h).map(|i| series[i]);
    let peak_deployment = shares.iter().fold(0.0f64, |m, &u| m.max(1.0 - u));
    let summary = StressSummary {
        final_loss_std: l_std,
        final_loss_hlcp: l_hlcp,
        loss_std_16h: at(&loss_std, 16.0),
        loss_hlcp_16h: at(&loss_hlcp, 16.0),
        loss_std_24h: at(&loss_std, 24.0),
        loss_hlcp_24h: at(&loss_hlcp, 24.0),
        peak_deployment,
        min_buffer_after_step: min_after,
        max_phi,
    };
    Ok(StressResult {
        times: path.times.clone(),
        prices: path.prices.clone(),
        variances: path.variances.clone(),
        phi_series,
        loss_std,
        loss_hlcp,
        undeployed_share: shares,
        buffer,
        summary,
    })
}

/// Headline numbers of the crash scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashReport {
    pub loss_std_16h: f64,
    pub loss_hlcp_16h: f64,
    pub loss_std_24h: f64,
    pub loss_hlcp_24h: f64,
    pub reduction_24h: f64,
    pub peak_deployment: f64,
    pub min_undeployed_share: f64,
    pub max_phi: f64,
    pub min_buffer_after_step: f64,
}

pub fn crash_report(result: &StressResult) -> Result<CrashReport> {
    let s = &result.summary;
    let (Some(std16), Some(h16), Some(std24), Some(h24)) = (
        s.loss_std_16h,
        s.loss_hlcp_16h,
        s.loss_std_24h,
        s.loss_hlcp_24h,
    ) else {
        return Err(Error::Validation(format!(
            "stress horizon {:.3}h is shorter than 24h",
            result.times.last().copied().unwrap_or(0.0)
        )));
    };
    Ok(CrashReport {
        loss_std_16h: std16,
        loss_hlcp_16h: h16,
        loss_std_24h: std24,
        loss_hlcp_24h: h24,
        reduction_24h: reduction_ratio(std24, h24),
        peak_deployment: s.peak_deployment,
        min_undeployed_share: 1.0 - s.peak_deployment,
        max_phi: s.max_phi,
        min_buffer_after_step: s.min_buffer_after_step,
    })
}

/// Runs `paths` independent scenarios, path `k` on RNG stream `k` of
/// `params.seed`, and keeps only their summaries.
pub fn stress_ensemble(
    params: &SvjParams,
    cfg: &StressConfig,
    paths: usize,
    exec: Execution,
) -> Result<Vec<StressSummary>> {
    params.validate()?;
    cfg.validate()?;
    let streams: Vec<u64> = (0..paths as u64).collect();
    parallel::try_map(&streams, exec, |&k| {
        let path = simulate_path_stream(params, k)?;
        Ok(run_stress(&path, cfg)?.summary)
    })
}
