//! Bonding curves in price space.
//!
//! A pool state is described by its implied price `p` and a
//! [`LiquidityDistribution`]; the reserve maps turn that pair into the
//! risky-asset and numéraire quantities held by the pool:
//!
//! ```text
//! x*(p) = Σ_{intervals above p} L (1/√lo − 1/√hi) + L_k (1/√p − 1/√hi_k)
//! y*(p) = Σ_{intervals below p} L (√hi − √lo)     + L_k (√p − √lo_k)
//! ```
//!
//! The constant-product curve uses the same maps over a single interval
//! whose ends sit at configurable sentinels; ends at or beyond a sentinel
//! are treated as `0` / `+∞`, giving `x* = L/√p` and `y* = L√p`.

mod distribution;
pub mod tick;

pub use distribution::LiquidityDistribution;
pub use tick::{
    tick_lower, tick_to_price, tick_to_price_fixed, tick_to_price_validated, tick_upper,
    usable_tick_bounds, MAX_TICK, MIN_TICK, TICK_BASE,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("price must be positive and finite, got {price}")]
    InvalidPrice { price: f64 },
    #[error("price {price} lies outside the representable tick range")]
    PriceOutsideTickRange { price: f64 },
    #[error("tick {tick} is outside [{MIN_TICK}, {MAX_TICK}]")]
    TickOutOfRange { tick: i64 },
    #[error("tick spacing must be at least 1")]
    InvalidTickSpacing,
    #[error("tick {tick} is not a multiple of the spacing {spacing}")]
    MisalignedTick { tick: i64, spacing: u32 },
    #[error("tick range [{lower}, {upper}] is empty")]
    EmptyTickRange { lower: i64, upper: i64 },
    #[error("fee rate must lie in [0, 1), got {fee_rate}")]
    InvalidFeeRate { fee_rate: f64 },
    #[error("price sentinels must satisfy 0 < floor < ceiling, got [{floor}, {ceiling}]")]
    InvalidSentinels { floor: f64, ceiling: f64 },
    #[error("invalid liquidity distribution: {0}")]
    InvalidDistribution(String),
    #[error("liquidity level would become negative ({level})")]
    NegativeLevel { level: f64 },
    #[error("reserves are not finite for this distribution")]
    NonFiniteReserves,
    #[error("no price reproduces reserves x = {x}, y = {y}")]
    InconsistentReserves { x: f64, y: f64 },
    #[error("tick {tick}: fast and fixed-point prices differ by {relative_error:e}")]
    TickPrecision { tick: i64, relative_error: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    ConstantProduct,
    ConcentratedV3,
}

/// Bonding-curve family plus its fee and tick parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec<S> {
    pub kind: CurveKind,
    /// Proportional trading fee γ.
    pub fee_rate: S,
    pub tick_spacing: u32,
    /// Lower price sentinel standing in for 0 on constant-product curves.
    pub price_floor: S,
    /// Upper price sentinel standing in for +∞ on constant-product curves.
    pub price_ceiling: S,
}

pub const DEFAULT_PRICE_FLOOR: f64 = 1e-18;
pub const DEFAULT_PRICE_CEILING: f64 = 1e18;

impl<S: Scalar> CurveSpec<S> {
    pub fn constant_product(fee_rate: S) -> Result<Self, CurveError> {
        let spec = Self {
            kind: CurveKind::ConstantProduct,
            fee_rate,
            tick_spacing: 1,
            price_floor: S::lit(DEFAULT_PRICE_FLOOR),
            price_ceiling: S::lit(DEFAULT_PRICE_CEILING),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn concentrated(fee_rate: S, tick_spacing: u32) -> Result<Self, CurveError> {
        let spec = Self {
            kind: CurveKind::ConcentratedV3,
            fee_rate,
            tick_spacing,
            price_floor: S::lit(DEFAULT_PRICE_FLOOR),
            price_ceiling: S::lit(DEFAULT_PRICE_CEILING),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_sentinels(mut self, floor: S, ceiling: S) -> Result<Self, CurveError> {
        self.price_floor = floor;
        self.price_ceiling = ceiling;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CurveError> {
        if !(self.fee_rate >= S::zero() && self.fee_rate < S::one()) {
            return Err(CurveError::InvalidFeeRate {
                fee_rate: self.fee_rate.as_f64(),
            });
        }
        if self.tick_spacing == 0 {
            return Err(CurveError::InvalidTickSpacing);
        }
        if !(self.price_floor > S::zero()
            && self.price_floor < self.price_ceiling
            && self.price_ceiling.is_finite())
        {
            return Err(CurveError::InvalidSentinels {
                floor: self.price_floor.as_f64(),
                ceiling: self.price_ceiling.as_f64(),
            });
        }
        Ok(())
    }

    pub fn is_constant_product(&self) -> bool {
        self.kind == CurveKind::ConstantProduct
    }

    /// Distribution carrying `level` over the widest range the curve allows.
    pub fn full_range(&self, level: S) -> Result<LiquidityDistribution<S>, CurveError> {
        match self.kind {
            CurveKind::ConstantProduct => {
                LiquidityDistribution::interval(self.price_floor, self.price_ceiling, level)
            }
            CurveKind::ConcentratedV3 => {
                let (lo, hi) = usable_tick_bounds(self.tick_spacing)?;
                self.tick_range(lo, hi, level)
            }
        }
    }

    /// Validates a position's tick range against the spacing.
    pub fn check_tick_range(&self, lower: i64, upper: i64) -> Result<(), CurveError> {
        if lower >= upper {
            return Err(CurveError::EmptyTickRange { lower, upper });
        }
        for t in [lower, upper] {
            if !(MIN_TICK..=MAX_TICK).contains(&t) {
                return Err(CurveError::TickOutOfRange { tick: t });
            }
            if t % self.tick_spacing as i64 != 0 {
                return Err(CurveError::MisalignedTick {
                    tick: t,
                    spacing: self.tick_spacing,
                });
            }
        }
        Ok(())
    }

    /// Single-interval distribution over `[1.0001^lower, 1.0001^upper)`.
    /// Constant-product curves have no ticks and always return the full range.
    pub fn tick_range(
        &self,
        lower: i64,
        upper: i64,
        level: S,
    ) -> Result<LiquidityDistribution<S>, CurveError> {
        if self.is_constant_product() {
            return self.full_range(level);
        }
        self.check_tick_range(lower, upper)?;
        LiquidityDistribution::interval(tick_to_price(lower)?, tick_to_price(upper)?, level)
    }

    fn inv_sqrt_upper(&self, upper: S) -> S {
        if self.is_constant_product() && upper >= self.price_ceiling {
            S::zero()
        } else {
            upper.sqrt().recip()
        }
    }

    fn sqrt_lower(&self, lower: S) -> S {
        if self.is_constant_product() && lower <= self.price_floor {
            S::zero()
        } else {
            lower.sqrt()
        }
    }

    fn check_price(price: S) -> Result<(), CurveError> {
        if price > S::zero() && price.is_finite() {
            Ok(())
        } else {
            Err(CurveError::InvalidPrice {
                price: price.as_f64(),
            })
        }
    }

    /// `(x*, y*)` at implied price `price`.
    pub fn reserves(
        &self,
        price: S,
        dist: &LiquidityDistribution<S>,
    ) -> Result<(S, S), CurveError> {
        Self::check_price(price)?;
        let (mut x, mut y) = (S::zero(), S::zero());
        let sp = price.sqrt();
        for (lo, hi, level) in dist.intervals() {
            if level == S::zero() {
                continue;
            }
            if price <= lo {
                x = x + level * (lo.sqrt().recip() - self.inv_sqrt_upper(hi));
            } else if price >= hi {
                y = y + level * (hi.sqrt() - self.sqrt_lower(lo));
            } else {
                x = x + level * (sp.recip() - self.inv_sqrt_upper(hi));
                y = y + level * (sp - self.sqrt_lower(lo));
            }
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(CurveError::NonFiniteReserves);
        }
        Ok((x, y))
    }

    /// Risky-asset reserves x*(p, L).
    pub fn reserves_x(&self, price: S, dist: &LiquidityDistribution<S>) -> Result<S, CurveError> {
        Ok(self.reserves(price, dist)?.0)
    }

    /// Numéraire reserves y*(p, L).
    pub fn reserves_y(&self, price: S, dist: &LiquidityDistribution<S>) -> Result<S, CurveError> {
        Ok(self.reserves(price, dist)?.1)
    }

    /// Market value `p_ext · x*(p_impl) + y*(p_impl)` in numéraire.
    pub fn portfolio_value(
        &self,
        external_price: S,
        implied_price: S,
        dist: &LiquidityDistribution<S>,
    ) -> Result<S, CurveError> {
        Self::check_price(external_price)?;
        let (x, y) = self.reserves(implied_price, dist)?;
        Ok(external_price * x + y)
    }

    /// |∂x*/∂p| at `price`: only the interval containing the price moves.
    pub fn reserves_x_slope(
        &self,
        price: S,
        dist: &LiquidityDistribution<S>,
    ) -> Result<S, CurveError> {
        Self::check_price(price)?;
        Ok(Self::slope_for_level(price, dist.level_at(price)))
    }

    /// |∂x*/∂p| for in-range liquidity `level`: `L / (2 p^{3/2})`.
    pub fn slope_for_level(price: S, level: S) -> S {
        level / (S::two() * price * price.sqrt())
    }

    /// Recovers the implied price from a reserve pair by bisection.
    ///
    /// Accepts the result when both legs match within
    /// `1e-9 · max(1, |x|, |y|)`.
    pub fn implied_price_check(
        &self,
        x: S,
        y: S,
        dist: &LiquidityDistribution<S>,
    ) -> Result<S, CurveError> {
        let inconsistent = || CurveError::InconsistentReserves {
            x: x.as_f64(),
            y: y.as_f64(),
        };
        let Some((lo, hi)) = dist.support() else {
            return Err(inconsistent());
        };
        if dist.is_zero() {
            return Err(inconsistent());
        }
        let tol = S::lit(1e-9) * S::one().max(x.abs()).max(y.abs());
        let mut lo = lo.max(self.price_floor);
        let mut hi = if hi.is_finite() {
            hi
        } else {
            self.price_ceiling
        };
        let (_, y_max) = self.reserves(hi, dist)?;
        // y* is non-decreasing; bisect on it unless it carries no information.
        let use_y = y_max > tol;
        for _ in 0..400 {
            let mid = (lo * hi).sqrt();
            if !(mid > lo && mid < hi) {
                break;
            }
            let (mx, my) = self.reserves(mid, dist)?;
            let go_up = if use_y { my < y } else { mx > x };
            if go_up {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let price = (lo * hi).sqrt();
        let (px, py) = self.reserves(price, dist)?;
        if (px - x).abs() <= tol && (py - y).abs() <= tol {
            Ok(price)
        } else {
            Err(inconsistent())
        }
    }
}
