//! Declarative strategy grids.
//!
//! ```json
//! {"capital": 5.0,
//!  "strategies": [
//!    {"family": "passive_full_range"},
//!    {"family": "tick_tracking", "width": [1, 2, 4], "rebalance_interval": 1.0}
//!  ]}
//! ```
//!
//! Every parameter accepts a scalar or a list; lists expand to their
//! cartesian product. Fixed-range combinations with `tick_lower >=
//! tick_upper` are skipped.

use serde::{Deserialize, Serialize};

use super::{BacktestError, StrategyFamily, StrategySpec};
use crate::toxicity::Volatility;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyGrid<S> {
    PassiveFullRange,
    PassiveFixedRange {
        tick_lower: OneOrMany<i64>,
        tick_upper: OneOrMany<i64>,
    },
    TickTracking {
        width: OneOrMany<u32>,
        rebalance_interval: OneOrMany<S>,
    },
    JustInTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GridConfig<S> {
    pub capital: S,
    pub strategies: Vec<FamilyGrid<S>>,
    /// Volatility for the profitability objective; realized when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<S>,
}

impl<S: Scalar> GridConfig<S> {
    pub fn from_json(text: &str) -> Result<Self, BacktestError> {
        serde_json::from_str(text).map_err(|e| BacktestError::InvalidGrid(e.to_string()))
    }

    pub fn volatility(&self) -> Volatility<S> {
        self.sigma.map_or(Volatility::Realized, Volatility::Fixed)
    }

    /// Every candidate, in declaration order.
    pub fn expand(&self) -> Result<Vec<StrategySpec<S>>, BacktestError> {
        let mut out = Vec::new();
        for g in &self.strategies {
            match g {
                FamilyGrid::PassiveFullRange => out.push(StrategyFamily::PassiveFullRange),
                FamilyGrid::JustInTime => out.push(StrategyFamily::JustInTime),
                FamilyGrid::PassiveFixedRange {
                    tick_lower,
                    tick_upper,
                } => {
                    for lo in tick_lower.values() {
                        for hi in tick_upper.values() {
                            if lo < hi {
                                out.push(StrategyFamily::PassiveFixedRange {
                                    tick_lower: lo,
                                    tick_upper: hi,
                                });
                            }
                        }
                    }
                }
                FamilyGrid::TickTracking {
                    width,
                    rebalance_interval,
                } => {
                    for w in width.values() {
                        for dt in rebalance_interval.values() {
                            out.push(StrategyFamily::TickTracking {
                                width: w,
                                rebalance_interval: dt,
                            });
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(BacktestError::EmptyGrid);
        }
        Ok(out
            .into_iter()
            .map(|f| StrategySpec::new(f, self.capital))
            .collect())
    }
}
