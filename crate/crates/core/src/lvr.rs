//! Loss-versus-rebalancing accounting.
//!
//! The instantaneous adverse-selection rate of a constant-product position is
//! `sigma^2 / 8` per unit of pool value and year. Volatility is annualized
//! everywhere; per-step quantities use `sigma_step = sigma * sqrt(dt)`.

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Result};

/// Annual drag per unit of exposed capital.
pub fn drag_rate(sigma: f64) -> f64 {
    sigma * sigma / 8.0
}

/// `(sigma^2 / 8) * exposure * dt`.
pub fn lvr_increment(sigma: f64, exposure: f64, dt: f64) -> Result<f64> {
    require_non_negative("sigma", sigma)?;
    require_non_negative("exposure", exposure)?;
    require_positive("dt", dt)?;
    Ok(drag_rate(sigma) * exposure * dt)
}

/// Closed form for constant volatility and constant capital `w` over `t`
/// years.
pub fn lvr_horizon(sigma: f64, w: f64, t: f64) -> f64 {
    debug_assert!(sigma >= 0.0 && w >= 0.0 && t >= 0.0);
    drag_rate(sigma) * w * t
}

/// Running LVR total with compensated summation so long step sequences agree
/// with the closed form.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LvrAccumulator {
    cumulative: f64,
    #[serde(skip)]
    carry: f64,
    exposure: f64,
    clock: f64,
}

impl LvrAccumulator {
    pub fn new(exposure: f64) -> Result<Self> {
        require_non_negative("exposure", exposure)?;
        Ok(Self {
            exposure,
            ..Self::default()
        })
    }

    pub fn cumulative(&self) -> f64 {
        self.cumulative + self.carry
    }

    pub fn exposure(&self) -> f64 {
        self.exposure
    }

    /// Elapsed time in years.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn set_exposure(&mut self, exposure: f64) -> Result<()> {
        require_non_negative("exposure", exposure)?;
        self.exposure = exposure;
        Ok(())
    }

    /// Accrues one step at volatility `sigma` and returns the increment.
    pub fn update(&mut self, sigma: f64, dt: f64) -> Result<f64> {
        let inc = lvr_increment(sigma, self.exposure, dt)?;
        // Neumaier summation
        let t = self.cumulative + inc;
        if self.cumulative.abs() >= inc.abs() {
            self.carry += (self.cumulative - t) + inc;
        } else {
            self.carry += (inc - t) + self.cumulative;
        }
        self.cumulative = t;
        self.clock += dt;
        Ok(inc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn increment_examples() {
        assert_eq!(lvr_increment(0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(close(lvr_increment(0.7456, 1.0, 1.0).unwrap(), 0.06948992, 1e-12));
        assert!(close(lvr_increment(0.7456, 31.21e6, 1.0).unwrap(), 2_168_780.403_2, 1e-12));
    }

    #[test]
    fn increment_rejects_bad_inputs() {
        assert!(lvr_increment(-0.1, 1.0, 1.0).is_err());
        assert!(lvr_increment(0.1, -1.0, 1.0).is_err());
        assert!(lvr_increment(0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(lvr_horizon(0.7456, 1.0, 0.0), 0.0);
        assert!(close(lvr_horizon(0.7456, 1.0, 1.0), 0.06948992, 1e-12));
        assert!(close(
            lvr_horizon(0.5, 0.5 * 8e5, 2.0),
            0.5 * lvr_horizon(0.5, 8e5, 2.0),
            1e-15
        ));
    }

    #[test]
    fn accumulator_tracks_clock_and_total() {
        let mut acc = LvrAccumulator::new(2.0).unwrap();
        acc.update(0.4, 0.25).unwrap();
        acc.set_exposure(1.0).unwrap();
        acc.update(0.2, 0.75).unwrap();
        assert!(close(acc.clock(), 1.0, 1e-15));
        let expect = 0.16 / 8.0 * 2.0 * 0.25 + 0.04 / 8.0 * 0.75;
        assert!(close(acc.cumulative(), expect, 1e-15));
    }

    #[test]
    fn jensen_gap() {
        // equal mean sigma^2 => equal LVR; equal mean sigma, unequal sigma^2 => different
        let run = |sigmas: &[f64]| {
            let mut acc = LvrAccumulator::new(1.0).unwrap();
            for &s in sigmas {
                acc.update(s, 0.5).unwrap();
            }
            acc.cumulative()
        };
        let flat = run(&[0.5, 0.5]);
        let same_var = run(&[0.1, (0.5f64 - 0.01).sqrt()]);
        let same_mean = run(&[0.2, 0.8]);
        assert!(close(flat, same_var, 1e-14));
        assert!(same_mean > flat * 1.1);
    }
}
