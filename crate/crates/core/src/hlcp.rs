//! N-scaled active pool with a collateral buffer and a deviation-driven
//! injection trigger.
//!
//! The active curve holds `L_active = N * L_total`; the remaining
//! `C = (1 - N) * L_total` sits in the buffer, measured in liquidity units.
//! When a trade moves the tangent price by more than `tau`, the buffer
//! deploys
//!
//! ```text
//! dC = N a phi C / (1 + N a phi),     phi = max(0, |dp| - tau)
//! ```
//!
//! along the current price ray, so the marginal price is untouched and the
//! depth grows to `L_active + dC`.

use serde::{Deserialize, Serialize};

use crate::amm::{self, PoolState, TradeQuote};
use crate::error::{require_non_negative, require_positive, require_ratio, Error, Result};

/// Base fee of the V2 tier; also the default trigger tolerance.
pub const DEFAULT_FEE: f64 = 0.003;
pub const DEFAULT_ALPHA: f64 = 100.0;

/// Largest fraction of the buffer a single deployment may consume.
const MAX_DEPLOY_FRACTION: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerParams {
    pub alpha: f64,
    pub tau: f64,
    pub fee: f64,
}

impl TriggerParams {
    pub fn new(alpha: f64, tau: f64, fee: f64) -> Result<Self> {
        let params = Self { alpha, tau, fee };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("alpha", self.alpha)?;
        require_non_negative("fee", self.fee)?;
        if self.tau.is_nan() || self.tau < self.fee {
            return Err(Error::domain("tau", self.tau, "tolerance must be >= fee"));
        }
        Ok(())
    }
}

impl Default for TriggerParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            tau: DEFAULT_FEE,
            fee: DEFAULT_FEE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlcpState {
    pub active: PoolState,
    pub collateral: f64,
    pub n_ratio: f64,
    pub l_total: f64,
}

impl HlcpState {
    /// Splits benchmark depth `l_total` into an active curve at `price` and
    /// a buffer of `(1 - N) * l_total`.
    pub fn initialize(l_total: f64, n_ratio: f64, price: f64) -> Result<Self> {
        require_positive("l_total", l_total)?;
        require_ratio("n_ratio", n_ratio)?;
        Ok(Self {
            active: PoolState::from_depth_price(n_ratio * l_total, price)?,
            collateral: (1.0 - n_ratio) * l_total,
            n_ratio,
            l_total,
        })
    }

    /// Rebuilds a state from explicit reserves. `l_total` is inferred as
    /// `L_active / N`.
    pub fn from_parts(active: PoolState, collateral: f64, n_ratio: f64) -> Result<Self> {
        require_non_negative("collateral", collateral)?;
        require_ratio("n_ratio", n_ratio)?;
        Ok(Self {
            active,
            collateral,
            n_ratio,
            l_total: active.liquidity() / n_ratio,
        })
    }

    pub fn l_active(&self) -> f64 {
        self.active.liquidity()
    }

    pub fn marginal_price(&self) -> f64 {
        self.active.marginal_price()
    }

    /// State allocation vector `[L_active, C]`.
    pub fn allocation(&self) -> [f64; 2] {
        [self.l_active(), self.collateral]
    }

    pub fn snapshot(&self, params: &TriggerParams) -> HlcpSnapshot {
        HlcpSnapshot {
            x_a: self.active.x(),
            y_a: self.active.y(),
            collateral: self.collateral,
            n_ratio: self.n_ratio,
            alpha: params.alpha,
            tau: params.tau,
            fee: params.fee,
        }
    }
}

/// Serializable scenario state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HlcpSnapshot {
    pub x_a: f64,
    pub y_a: f64,
    pub collateral: f64,
    pub n_ratio: f64,
    pub alpha: f64,
    pub tau: f64,
    pub fee: f64,
}

impl HlcpSnapshot {
    pub fn restore(&self) -> Result<(HlcpState, TriggerParams)> {
        let params = TriggerParams::new(self.alpha, self.tau, self.fee)?;
        let active = PoolState::new(self.x_a, self.y_a)?;
        Ok((HlcpState::from_parts(active, self.collateral, self.n_ratio)?, params))
    }
}

/// Inner-product accounting depths before and after a deployment. Reported
/// only; settlement always happens on `l_new`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountingDepth {
    pub l_eff: f64,
    pub l_eff_post: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionResult {
    pub delta_c: f64,
    pub delta_x: f64,
    pub delta_y: f64,
    pub l_new: f64,
    pub undeployed_share: f64,
    pub accounting: Option<AccountingDepth>,
}

/// Shock value `phi(z) = max(0, |z| - tau)`.
pub fn activation(dp: f64, params: &TriggerParams) -> f64 {
    (dp.abs() - params.tau).max(0.0)
}

/// `L_eff = L_active / N + alpha * phi(dp) * C`.
pub fn effective_depth(state: &HlcpState, dp: f64, params: &TriggerParams) -> f64 {
    let weights = [1.0 / state.n_ratio, params.alpha * activation(dp, params)];
    let alloc = state.allocation();
    weights[0] * alloc[0] + weights[1] * alloc[1]
}

/// Buffer deployment `dC = N a phi C / (1 + N a phi)`, strictly below `C`
/// for any finite `phi`.
pub fn injection_scalar(state: &HlcpState, phi: f64, params: &TriggerParams) -> f64 {
    deploy_amount(state.collateral, state.n_ratio, params.alpha, phi)
}

pub(crate) fn deploy_amount(collateral: f64, n_ratio: f64, alpha: f64, phi: f64) -> f64 {
    if phi.is_nan() || phi <= 0.0 || collateral <= 0.0 {
        return 0.0;
    }
    let gain = n_ratio * alpha * phi;
    let dc = collateral * (gain / (1.0 + gain));
    dc.min(collateral * MAX_DEPLOY_FRACTION)
}

/// Pointwise share of the buffer a trigger with shock `phi` leaves in place.
pub fn undeployed_share(n_ratio: f64, alpha: f64, phi: f64) -> f64 {
    1.0 / (1.0 + n_ratio * alpha * phi.max(0.0))
}

/// Adds `delta_c` of buffer to the active curve in the ratio `dy/dx = P`.
pub fn homothety_inject(state: &HlcpState, delta_c: f64) -> Result<(HlcpState, InjectionResult)> {
    require_non_negative("delta_c", delta_c)?;
    if delta_c > state.collateral {
        return Err(Error::InsufficientBuffer {
            requested: delta_c,
            available: state.collateral,
        });
    }
    let l_active = state.l_active();
    let undeployed_share = if state.collateral > 0.0 {
        (state.collateral - delta_c) / state.collateral
    } else {
        1.0
    };
    if delta_c == 0.0 {
        let result = InjectionResult {
            delta_c,
            delta_x: 0.0,
            delta_y: 0.0,
            l_new: l_active,
            undeployed_share,
            accounting: None,
        };
        return Ok((*state, result));
    }
    let root = state.marginal_price().sqrt();
    let delta_x = delta_c / root;
    let delta_y = delta_c * root;
    let active = PoolState::new(state.active.x() + delta_x, state.active.y() + delta_y)?;
    let next = HlcpState {
        active,
        collateral: state.collateral - delta_c,
        ..*state
    };
    let result = InjectionResult {
        delta_c,
        delta_x,
        delta_y,
        l_new: l_active + delta_c,
        undeployed_share,
        accounting: None,
    };
    Ok((next, result))
}

/// `dS = S(N L_total) - S(L_total)` in closed form.
pub fn router_gap(k_trade: f64, l_total: f64, n_ratio: f64) -> Result<f64> {
    require_positive("K", k_trade)?;
    require_positive("l_total", l_total)?;
    require_ratio("n_ratio", n_ratio)?;
    Ok(k_trade * (1.0 - n_ratio) * l_total
        / ((n_ratio * l_total + k_trade) * (l_total + k_trade)))
}

/// Benchmark depth that is sufficient for `router_gap <= eps_router`.
pub fn min_depth_for_tolerance(k_trade: f64, n_ratio: f64, eps_router: f64) -> Result<f64> {
    require_positive("K", k_trade)?;
    require_ratio("n_ratio", n_ratio)?;
    require_positive("eps_router", eps_router)?;
    Ok(k_trade * (1.0 - n_ratio) / (n_ratio * eps_router))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: HlcpState,
    pub quote: TradeQuote,
    /// Signed tangent-price move of the trade, relative to the pre-trade price.
    pub price_deviation: f64,
    pub phi: f64,
    pub injection: InjectionResult,
}

/// Settles an X-in swap on the active curve, then runs the trigger on the
/// trade's own price deviation.
pub fn step(state: &HlcpState, delta_x: f64, params: &TriggerParams) -> Result<StepOutcome> {
    params.validate()?;
    let (quote, active) = amm::quote_swap(&state.active, delta_x)?;
    let traded = HlcpState { active, ..*state };
    let dp = (quote.p_marginal - quote.p_new) / quote.p_marginal;
    let phi = activation(dp, params);
    let delta_c = injection_scalar(&traded, phi, params);
    let (next, mut injection) = homothety_inject(&traded, delta_c)?;
    injection.accounting = Some(AccountingDepth {
        l_eff: effective_depth(&traded, dp, params),
        l_eff_post: (traded.l_active() + delta_c) / traded.n_ratio
            + params.alpha * phi * (traded.collateral - delta_c),
    });
    Ok(StepOutcome {
        state: next,
        quote,
        price_deviation: dp,
        phi,
        injection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    fn default_params() -> TriggerParams {
        TriggerParams::default()
    }

    #[test]
    fn trigger_params_validation() {
        assert!(TriggerParams::new(100.0, 0.003, 0.003).is_ok());
        assert!(TriggerParams::new(0.0, 0.003, 0.003).is_err());
        assert!(TriggerParams::new(1.0, 0.001, 0.003).is_err());
        assert!(TriggerParams::new(1.0, 0.003, -0.1).is_err());
    }

    #[test]
    fn initialization_split() {
        let s = HlcpState::initialize(1000.0, 0.3, 2500.0).unwrap();
        assert!(close(s.l_active(), 300.0, 1e-12));
        assert!(close(s.collateral, 700.0, 1e-12));
        assert!(close(s.marginal_price(), 2500.0, 1e-12));
        assert!(HlcpState::initialize(1000.0, 0.0, 1.0).is_err());
        assert!(HlcpState::initialize(1000.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn activation_examples() {
        let p = default_params();
        assert_eq!(activation(0.001, &p), 0.0);
        assert!(close(activation(-0.01, &p), 0.007, 1e-12));
        assert!(close(activation(0.388, &p), 0.385, 1e-12));
        assert_eq!(activation(0.003, &p), 0.0);
    }

    #[test]
    fn effective_depth_examples() {
        let p = default_params();
        let s = HlcpState::initialize(200.0, 0.25, 1.0).unwrap();
        assert!(close(effective_depth(&s, 0.0, &p), 200.0, 1e-12));

        let s = HlcpState::from_parts(PoolState::new(50.0, 50.0).unwrap(), 50.0, 0.5).unwrap();
        let p = TriggerParams::new(100.0, 0.003, 0.003).unwrap();
        assert!(close(effective_depth(&s, 0.013, &p), 150.0, 1e-12));

        let weak = TriggerParams::new(1e-300, 0.003, 0.003).unwrap();
        assert!(close(effective_depth(&s, 0.5, &weak), 100.0, 1e-12));
    }

    #[test]
    fn injection_scalar_examples() {
        let p = default_params();
        let s = HlcpState::from_parts(PoolState::new(50.0, 50.0).unwrap(), 100.0, 0.5).unwrap();
        assert_eq!(injection_scalar(&s, 0.0, &p), 0.0);
        assert!(close(injection_scalar(&s, 0.02, &p), 50.0, 1e-12));
        let share = injection_scalar(&s, 0.388, &p) / s.collateral;
        assert!((share - 0.951).abs() < 1e-3);
        let huge = injection_scalar(&s, 1e300, &p);
        assert!(huge < s.collateral);
    }

    #[test]
    fn homothety_examples() {
        let s = HlcpState::from_parts(PoolState::new(100.0, 100.0).unwrap(), 80.0, 0.5).unwrap();
        let (same, r) = homothety_inject(&s, 0.0).unwrap();
        assert_eq!(same, s);
        assert_eq!(r.l_new, s.l_active());

        let (next, r) = homothety_inject(&s, 50.0).unwrap();
        assert!(close(next.active.x(), 150.0, 1e-15));
        assert!(close(next.active.y(), 150.0, 1e-15));
        assert_eq!(next.marginal_price(), 1.0);
        assert!(close(r.l_new, 150.0, 1e-15));
        assert!(close(next.collateral, 30.0, 1e-15));

        let s = HlcpState::from_parts(PoolState::new(50.0, 200.0).unwrap(), 100.0, 0.5).unwrap();
        let (next, r) = homothety_inject(&s, 100.0).unwrap();
        assert!(close(r.delta_x, 50.0, 1e-15));
        assert!(close(r.delta_y, 200.0, 1e-15));
        assert!(close(next.marginal_price(), 4.0, 1e-15));
        assert!(close(next.l_active(), 200.0, 1e-15));
        assert!(close(r.l_new, 200.0, 1e-15));
        assert_eq!(next.collateral, 0.0);
    }

    #[test]
    fn homothety_rejects_overdraw() {
        let s = HlcpState::from_parts(PoolState::new(1.0, 1.0).unwrap(), 1.0, 0.5).unwrap();
        assert!(matches!(
            homothety_inject(&s, 1.5),
            Err(Error::InsufficientBuffer { .. })
        ));
    }

    #[test]
    fn router_gap_examples() {
        assert_eq!(router_gap(1.0, 100.0, 1.0).unwrap(), 0.0);
        let gap = router_gap(1.0, 100.0, 0.5).unwrap();
        assert!(close(gap, 50.0 / 5151.0, 1e-14));
        assert!(close(gap, 1.0 / 51.0 - 1.0 / 101.0, 1e-13));
        assert!(router_gap(1.0, 1e15, 0.5).unwrap() < 1e-14);
    }

    #[test]
    fn min_depth_examples() {
        assert_eq!(min_depth_for_tolerance(1.0, 1.0, 1e-4).unwrap(), 0.0);
        let l = min_depth_for_tolerance(1.0, 0.5, 1e-4).unwrap();
        assert!(close(l, 10_000.0, 1e-12));
        assert!(router_gap(1.0, l, 0.5).unwrap() <= 1e-4);
        assert!(close(min_depth_for_tolerance(2.0, 0.25, 1e-3).unwrap(), 6000.0, 1e-12));
    }

    #[test]
    fn dormant_step_is_plain_swap() {
        let p = default_params();
        let s = HlcpState::initialize(1_000_000.0, 0.5, 1.0).unwrap();
        let out = step(&s, 10.0, &p).unwrap();
        assert!(out.price_deviation <= p.tau);
        assert_eq!(out.injection.delta_c, 0.0);
        assert_eq!(out.state.collateral, s.collateral);
        let (_, pool) = amm::quote_swap(&s.active, 10.0).unwrap();
        assert_eq!(out.state.active, pool);
    }

    #[test]
    fn step_at_twice_tolerance() {
        let p = default_params();
        let s = HlcpState::initialize(1000.0, 0.5, 1.0).unwrap();
        // choose dx so that dp = 2 tau: (1 - S)^2 = 1 - 2 tau
        let target = 2.0 * p.tau;
        let slip = 1.0 - (1.0 - target).sqrt();
        let dx = slip * s.active.x() / (1.0 - slip);
        let out = step(&s, dx, &p).unwrap();
        assert!(close(out.price_deviation, target, 1e-10));
        let g = s.n_ratio * p.alpha * p.tau;
        assert!(close(out.injection.delta_c, g * s.collateral / (1.0 + g), 1e-8));
        assert!(close(out.state.marginal_price(), out.quote.p_new, 1e-12));
        assert!(close(out.injection.l_new, out.state.l_active(), 1e-12));
        // control rule: dC / N = alpha * phi * (C - dC)
        let dc = out.injection.delta_c;
        assert!(close(dc / s.n_ratio, p.alpha * out.phi * (s.collateral - dc), 1e-10));
    }

    #[test]
    fn repeated_shocks_never_exhaust_in_one_step() {
        let p = default_params();
        let mut s = HlcpState::initialize(1000.0, 0.5, 1.0).unwrap();
        for _ in 0..50 {
            let before = s.collateral;
            let out = step(&s, s.active.x() * 0.5, &p).unwrap();
            assert!(out.injection.delta_c < before);
            assert!(out.state.collateral < before);
            assert!(out.state.collateral > 0.0);
            s = out.state;
        }
    }

    #[test]
    fn snapshot_json_field_names() {
        let s = HlcpState::initialize(100.0, 0.5, 4.0).unwrap();
        let snap = s.snapshot(&default_params());
        let v: serde_json::Value = serde_json::to_value(snap).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["alpha", "collateral", "fee", "n_ratio", "tau", "x_a", "y_a"]);
        let (back, params) = snap.restore().unwrap();
        assert_eq!(params, default_params());
        assert!(close(back.l_total, 100.0, 1e-12));
        let bad = r#"{"x_a":1,"y_a":1,"collateral":1,"n_ratio":0.5,"alpha":1,"tau":0.003,"fee":0.003,"extra":1}"#;
        assert!(serde_json::from_str::<HlcpSnapshot>(bad).is_err());
    }
}
