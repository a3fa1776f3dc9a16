//! Simulation and analysis toolkit for hybrid liquidity-collateral pools:
//! constant-product geometry, an N-scaled active curve with a collateral
//! buffer, LVR accounting, an adoption game, a crash stress engine and a
//! daily backtester.

pub mod amm;
pub mod backtest;
pub mod error;
pub mod experiment;
pub mod game;
pub mod hlcp;
pub mod lvr;
pub mod parallel;
pub mod rng;
pub mod stress;
pub mod svj;

pub use error::{Error, Result};
pub use parallel::Execution;
