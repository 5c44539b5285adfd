//! Competitiveness metrics for liquidity providers in concentrated-liquidity
//! AMM pools.
//!
//! The crate reconstructs per-position liquidity distributions from pool
//! event logs, integrates the fee-return-on-capital metric (FLAIR) for
//! individual positions, for the whole pool and for hypothetical entrants,
//! and pairs it with an order-flow toxicity axis.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the bottom of this file fix the scalar to `f64`, which is what
//! the file formats and the CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod backtest;
pub mod curve;
pub mod metrics;
pub mod scalar;
pub mod scenarios;
pub mod timeline;
pub mod toxicity;

pub use scalar::Scalar;

pub type Distribution = curve::LiquidityDistribution<f64>;
pub type Curve = curve::CurveSpec<f64>;
pub type Event = timeline::PoolEvent<f64>;
pub type Timeline = timeline::PoolTimeline<f64>;
pub type Report = metrics::MetricReport<f64>;
pub type Toxicity = toxicity::ToxicityReport<f64>;
pub type Strategy = backtest::StrategySpec<f64>;
pub type Backtest = backtest::BacktestResult<f64>;
