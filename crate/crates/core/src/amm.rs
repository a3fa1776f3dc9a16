//! Constant-product pool geometry.
//!
//! A pool holds reserves `x` and `y` with `x * y = L^2`. Trades are modelled
//! in one direction only (X in, Y out); swap the reserves at the call site for
//! the opposite direction. Fees are not part of the geometry.
//!
//! Two trade-size parameterizations are used throughout:
//!
//! ```text
//! S  = dx / (x + dx)          slippage of the secant price against the tangent
//! K  = dx * sqrt(P)           trade constant, so S(L) = K / (L + K)
//! dp = 1 - P_new / P = S (2 - S)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    x: f64,
    y: f64,
}

impl PoolState {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        require_positive("x", x)?;
        require_positive("y", y)?;
        Ok(Self { x, y })
    }

    /// Builds the pool with depth `l` quoting marginal price `price`,
    /// i.e. `x = L / sqrt(P)`, `y = L * sqrt(P)`.
    pub fn from_depth_price(l: f64, price: f64) -> Result<Self> {
        require_positive("liquidity", l)?;
        require_positive("price", price)?;
        let root = price.sqrt();
        Self::new(l / root, l * root)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    /// Liquidity depth `L = sqrt(x y)`.
    pub fn liquidity(&self) -> f64 {
        (self.x * self.y).sqrt()
    }

    /// Invariant `k = x y = L^2`.
    pub fn k(&self) -> f64 {
        self.x * self.y
    }

    pub fn marginal_price(&self) -> f64 {
        marginal_price(self)
    }

    /// Trade constant `K = dx * sqrt(P)` for an input of `delta_x`.
    pub fn trade_constant(&self, delta_x: f64) -> f64 {
        delta_x * self.marginal_price().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeQuote {
    pub delta_x: f64,
    pub delta_y: f64,
    pub p_marginal: f64,
    pub p_effective: f64,
    pub p_new: f64,
    pub slippage: f64,
    pub price_deviation: f64,
}

/// Tangent price `y / x`.
pub fn marginal_price(pool: &PoolState) -> f64 {
    pool.y / pool.x
}

/// Quotes an X-in swap of `delta_x` and returns the quote with the
/// post-trade pool.
pub fn quote_swap(pool: &PoolState, delta_x: f64) -> Result<(TradeQuote, PoolState)> {
    if !(delta_x.is_finite() && delta_x > 0.0) {
        return Err(Error::domain("delta_x", delta_x, "trade size must be > 0"));
    }
    let x_new = pool.x + delta_x;
    // y - L^2/(x+dx) rearranged to avoid cancellation for small trades.
    let delta_y = pool.y * delta_x / x_new;
    let y_new = pool.y * pool.x / x_new;
    let p_marginal = pool.marginal_price();
    let l = pool.liquidity();
    let k_trade = delta_x * p_marginal.sqrt();
    let lk = l + k_trade;
    let quote = TradeQuote {
        delta_x,
        delta_y,
        p_marginal,
        p_effective: delta_y / delta_x,
        p_new: y_new / x_new,
        slippage: delta_x / x_new,
        price_deviation: k_trade * (2.0 * l + k_trade) / (lk * lk),
    };
    Ok((quote, PoolState { x: x_new, y: y_new }))
}

/// `S(L) = K / (L + K)`.
pub fn slippage_of_depth(k_trade: f64, depth: f64) -> Result<f64> {
    require_positive("K", k_trade)?;
    require_positive("L", depth)?;
    Ok(k_trade / (depth + k_trade))
}

/// Magnitude of `dS/dL = -K / (L + K)^2`.
pub fn slippage_gradient(k_trade: f64, depth: f64) -> f64 {
    let s = depth + k_trade;
    k_trade / (s * s)
}

/// Depth past which one more unit of liquidity improves slippage by less
/// than `epsilon`: `max(0, sqrt(K / eps) - K)`.
pub fn saturation_depth(k_trade: f64, epsilon: f64) -> Result<f64> {
    require_positive("K", k_trade)?;
    require_positive("epsilon", epsilon)?;
    Ok(((k_trade / epsilon).sqrt() - k_trade).max(0.0))
}

/// Tangent-price move implied by slippage `s`: `s (2 - s)`.
pub fn price_deviation_of_slippage(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::domain("slippage", s, "must lie in (0, 1)"));
    }
    Ok(s * (2.0 - s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn marginal_price_examples() {
        assert_eq!(PoolState::new(100.0, 100.0).unwrap().marginal_price(), 1.0);
        assert_eq!(PoolState::new(50.0, 200.0).unwrap().marginal_price(), 4.0);
        let p = PoolState::from_depth_price(1000.0, 4.0).unwrap();
        assert!(close(p.marginal_price(), 4.0, 1e-15));
        assert!(close(p.liquidity(), 1000.0, 1e-15));
    }

    #[test]
    fn rejects_bad_reserves() {
        assert!(PoolState::new(0.0, 1.0).is_err());
        assert!(PoolState::new(1.0, -1.0).is_err());
        assert!(PoolState::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn half_depth_trade() {
        let pool = PoolState::new(100.0, 100.0).unwrap();
        let (q, after) = quote_swap(&pool, 100.0).unwrap();
        assert_eq!(q.slippage, 0.5);
        assert_eq!(q.delta_y, 50.0);
        assert_eq!(q.p_effective, 0.5);
        assert_eq!(q.p_new, 0.25);
        assert!(close(q.price_deviation, 0.75, 1e-15));
        assert!(close(after.k(), pool.k(), 1e-15));
    }

    #[test]
    fn tiny_trade_limit() {
        let pool = PoolState::new(3.0e6, 7.0e6).unwrap();
        let (q, _) = quote_swap(&pool, 1e-9).unwrap();
        assert!(q.slippage < 1e-15);
        assert!(q.price_deviation < 1e-15);
        assert!(close(q.price_deviation, q.slippage * (2.0 - q.slippage), 1e-12));
    }

    #[test]
    fn non_positive_trade_is_domain_error() {
        let pool = PoolState::new(1.0, 1.0).unwrap();
        assert!(matches!(quote_swap(&pool, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(quote_swap(&pool, -3.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn slippage_examples() {
        assert_eq!(slippage_of_depth(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(slippage_of_depth(10.0, 90.0).unwrap(), 0.1);
        assert!(slippage_of_depth(1.0, 1e12).unwrap() < 1e-11);
        assert!(slippage_of_depth(0.0, 1.0).is_err());
        assert!(slippage_of_depth(1.0, -1.0).is_err());
    }

    #[test]
    fn saturation_examples() {
        assert_eq!(saturation_depth(1.0, 1.0).unwrap(), 0.0);
        let l = saturation_depth(1.0, 1e-4).unwrap();
        assert!(close(l, 99.0, 1e-12));
        assert!(close(slippage_gradient(1.0, l), 1e-4, 1e-10));
        let l = saturation_depth(4.0, 1e-4).unwrap();
        assert!(close(l, 196.0, 1e-12));
        assert!(close(slippage_gradient(4.0, l), 1e-4, 1e-10));
        // negative analytic bound clamps to zero
        assert_eq!(saturation_depth(10.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn deviation_of_slippage_examples() {
        assert_eq!(price_deviation_of_slippage(0.5).unwrap(), 0.75);
        let d = price_deviation_of_slippage(0.01).unwrap();
        assert!(close(d, 0.0199, 1e-14));
        assert!(price_deviation_of_slippage(1.0 - 1e-12).unwrap() > 1.0 - 1e-9);
        assert!(price_deviation_of_slippage(0.0).is_err());
        assert!(price_deviation_of_slippage(1.0).is_err());
    }
}
