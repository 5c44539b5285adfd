//! Counterfactual entrants: CM and profitability of a new position replayed
//! against a historical timeline.
//!
//! The entrant's liquidity is added on top of the historical aggregate when
//! computing its fee share; recorded fees are held fixed. Capital `c` is
//! matched exactly at `t0`. Later re-ranges are self-financing: the
//! position's marked-to-market value is redeployed into the new range.

mod grid;

pub use grid::{FamilyGrid, GridConfig, OneOrMany};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{tick_lower, tick_upper, CurveError, CurveSpec, LiquidityDistribution};
use crate::timeline::{PoolTimeline, PricePoint, TimelineError, Window};
use crate::toxicity::{lvr_rate, realized_sigma, ToxicityError, Volatility};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BacktestError {
    #[error("capital cannot be deployed: {0}")]
    InfeasibleCapital(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("strategy grid is empty")]
    EmptyGrid,
    #[error("every strategy in a grid must deploy the same capital")]
    NonUniformCapital,
    #[error("no price is known at t = {t}")]
    NoPrice { t: f64 },
    #[error("invalid grid config: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Toxicity(#[from] ToxicityError),
}

/// Liquidity-provision rule of a candidate entrant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StrategyFamily<S> {
    PassiveFullRange,
    PassiveFixedRange {
        tick_lower: i64,
        tick_upper: i64,
    },
    /// `width` spacings around the current tick, re-centred every
    /// `rebalance_interval`.
    TickTracking { width: u32, rebalance_interval: S },
    /// The tightest range around the current price, re-centred at every
    /// event time.
    JustInTime,
}

impl<S> StrategyFamily<S> {
    /// Position in the tie-breaking order.
    pub fn rank(&self) -> u8 {
        match self {
            Self::PassiveFullRange => 0,
            Self::PassiveFixedRange { .. } => 1,
            Self::TickTracking { .. } => 2,
            Self::JustInTime => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PassiveFullRange => "passive_full_range",
            Self::PassiveFixedRange { .. } => "passive_fixed_range",
            Self::TickTracking { .. } => "tick_tracking",
            Self::JustInTime => "just_in_time",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct StrategySpec<S> {
    #[serde(flatten)]
    pub family: StrategyFamily<S>,
    pub capital: S,
}

impl<S: Scalar> StrategySpec<S> {
    pub fn new(family: StrategyFamily<S>, capital: S) -> Self {
        Self { family, capital }
    }

    pub fn validate(&self, curve: &CurveSpec<S>) -> Result<(), BacktestError> {
        if !(self.capital > S::zero()) || !self.capital.is_finite() {
            return Err(BacktestError::InvalidStrategy(
                "capital must be positive".into(),
            ));
        }
        match self.family {
            StrategyFamily::TickTracking {
                width,
                rebalance_interval,
            } => {
                if width == 0 {
                    return Err(BacktestError::InvalidStrategy("width must be at least 1".into()));
                }
                if !(rebalance_interval > S::zero()) || !rebalance_interval.is_finite() {
                    return Err(BacktestError::InvalidStrategy(
                        "rebalance_interval must be positive".into(),
                    ));
                }
            }
            StrategyFamily::PassiveFixedRange {
                tick_lower,
                tick_upper,
            } if !curve.is_constant_product() => {
                curve
                    .check_tick_range(tick_lower, tick_upper)
                    .map_err(|e| BacktestError::InvalidStrategy(e.to_string()))?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Unit-level range the strategy holds when the implied price is `price`.
    fn range(&self, curve: &CurveSpec<S>, price: S) -> Result<(i64, i64), BacktestError> {
        if curve.is_constant_product() {
            return Ok((0, 0));
        }
        let ts = curve.tick_spacing as i64;
        let range = match self.family {
            StrategyFamily::PassiveFullRange => crate::curve::usable_tick_bounds(curve.tick_spacing)?,
            StrategyFamily::PassiveFixedRange {
                tick_lower,
                tick_upper,
            } => (tick_lower, tick_upper),
            StrategyFamily::TickTracking { width, .. } => {
                let lo = tick_lower(price, curve.tick_spacing)? - ((width as i64 - 1) / 2) * ts;
                (lo, lo + width as i64 * ts)
            }
            StrategyFamily::JustInTime => {
                let lo = tick_lower(price, curve.tick_spacing)?;
                let hi = tick_upper(price, curve.tick_spacing)?;
                if lo == hi {
                    (lo - ts, lo + ts)
                } else {
                    (lo, hi)
                }
            }
        };
        let (min, max) = crate::curve::usable_tick_bounds(curve.tick_spacing)?;
        if range.0 < min || range.1 > max {
            return Err(BacktestError::InfeasibleCapital(format!(
                "range [{}, {}] leaves the tick bounds",
                range.0, range.1
            )));
        }
        Ok(range)
    }
}

/// A re-range of the entrant with its value on both sides of the switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Rebalance<S> {
    pub t: S,
    pub tick_lower: i64,
    pub tick_upper: i64,
    pub value_before: S,
    pub value_after: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct StrategyOutcome<S> {
    pub spec: StrategySpec<S>,
    /// CM of the entrant.
    pub cm: S,
    /// Same integral with `fee − ℓ` in place of the fee.
    pub profit: S,
    pub rebalances: usize,
    /// Entrant's value right after deployment; equals the capital.
    pub initial_value: S,
    pub final_value: S,
    pub rebalance_log: Vec<Rebalance<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Competitiveness,
    Profitability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BacktestResult<S> {
    pub window: Window<S>,
    pub sigma: S,
    pub outcomes: Vec<StrategyOutcome<S>>,
    pub best_competitiveness: StrategySpec<S>,
    pub best_profitability: StrategySpec<S>,
    /// Index into `outcomes` of each winner.
    pub best_competitiveness_index: usize,
    pub best_profitability_index: usize,
}

impl<S: Scalar> BacktestResult<S> {
    pub fn best(&self, objective: Objective) -> &StrategyOutcome<S> {
        match objective {
            Objective::Competitiveness => &self.outcomes[self.best_competitiveness_index],
            Objective::Profitability => &self.outcomes[self.best_profitability_index],
        }
    }

    /// Ranking table, best CM first.
    pub fn to_csv(&self) -> String {
        let mut order: Vec<usize> = (0..self.outcomes.len()).collect();
        order.sort_by(|a, b| compare(&self.outcomes, Objective::Competitiveness, *a, *b));
        let mut out = String::from(
            "rank,family,tick_lower,tick_upper,width,rebalance_interval,capital,cm,profit,rebalances\n",
        );
        for (rank, i) in order.iter().enumerate() {
            let o = &self.outcomes[*i];
            let (lo, hi, w, dt) = match o.spec.family {
                StrategyFamily::PassiveFixedRange {
                    tick_lower,
                    tick_upper,
                } => (tick_lower.to_string(), tick_upper.to_string(), String::new(), String::new()),
                StrategyFamily::TickTracking {
                    width,
                    rebalance_interval,
                } => (String::new(), String::new(), width.to_string(), rebalance_interval.to_string()),
                _ => Default::default(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                rank + 1,
                o.spec.family.name(),
                lo,
                hi,
                w,
                dt,
                o.spec.capital,
                o.cm,
                o.profit,
                o.rebalances
            ));
        }
        out
    }
}

/// Orders outcome indices best-first under the stated total order.
fn compare<S: Scalar>(
    outcomes: &[StrategyOutcome<S>],
    objective: Objective,
    a: usize,
    b: usize,
) -> std::cmp::Ordering {
    let score = |i: usize| match objective {
        Objective::Competitiveness => outcomes[i].cm,
        Objective::Profitability => outcomes[i].profit,
    };
    score(b)
        .partial_cmp(&score(a))
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(outcomes[a].rebalances.cmp(&outcomes[b].rebalances))
        .then(outcomes[a].spec.family.rank().cmp(&outcomes[b].spec.family.rank()))
        .then(a.cmp(&b))
}

fn resolve_sigma<S: Scalar>(
    tl: &PoolTimeline<S>,
    vol: Volatility<S>,
    window: Window<S>,
) -> Result<S, BacktestError> {
    Ok(match vol {
        Volatility::Fixed(s) if s >= S::zero() && s.is_finite() => s,
        Volatility::Fixed(_) => return Err(ToxicityError::InvalidVolatility.into()),
        Volatility::Realized => realized_sigma(tl, window)?,
    })
}

struct Deployed<S> {
    range: (i64, i64),
    unit: LiquidityDistribution<S>,
    scale: S,
}

impl<S: Scalar> Deployed<S> {
    fn value(&self, curve: &CurveSpec<S>, price: PricePoint<S>) -> Result<S, CurveError> {
        Ok(self.scale * curve.portfolio_value(price.external, price.implied, &self.unit)?)
    }
}

fn price_of<S: Scalar>(tl: &PoolTimeline<S>, j: usize) -> Result<PricePoint<S>, BacktestError> {
    tl.price_states()[j].ok_or(BacktestError::NoPrice {
        t: tl.times()[j].as_f64(),
    })
}

fn deploy<S: Scalar>(
    curve: &CurveSpec<S>,
    spec: &StrategySpec<S>,
    price: PricePoint<S>,
    value: S,
) -> Result<Deployed<S>, BacktestError> {
    let range = spec.range(curve, price.implied)?;
    let unit = curve.tick_range(range.0, range.1, S::one())?;
    let unit_value = curve.portfolio_value(price.external, price.implied, &unit)?;
    if !(unit_value > S::zero()) || !unit_value.is_finite() {
        return Err(BacktestError::InfeasibleCapital(
            "a unit of liquidity in this range has no value".into(),
        ));
    }
    Ok(Deployed {
        range,
        unit,
        scale: value / unit_value,
    })
}

/// Replays one strategy over `window`.
pub fn evaluate_strategy<S: Scalar>(
    tl: &PoolTimeline<S>,
    spec: &StrategySpec<S>,
    window: Window<S>,
    vol: Volatility<S>,
) -> Result<StrategyOutcome<S>, BacktestError> {
    let sigma = resolve_sigma(tl, vol, window)?;
    evaluate_with_sigma(tl, spec, window, sigma)
}

fn evaluate_with_sigma<S: Scalar>(
    tl: &PoolTimeline<S>,
    spec: &StrategySpec<S>,
    window: Window<S>,
    sigma: S,
) -> Result<StrategyOutcome<S>, BacktestError> {
    let curve = tl.curve();
    spec.validate(curve)?;
    tl.check_window(window)?;
    let times = tl.times();
    let j0 = tl.state_index(window.start)?;
    let mut pos = deploy(curve, spec, price_of(tl, j0)?, spec.capital)?;
    let initial_value = pos.value(curve, price_of(tl, j0)?)?;

    // Decision instants inside (t0, T): event times for JIT, the schedule
    // for tick tracking.
    let mut decisions: Vec<S> = Vec::new();
    match spec.family {
        StrategyFamily::JustInTime => decisions.extend(
            times
                .iter()
                .copied()
                .filter(|t| *t > window.start && *t < window.end),
        ),
        StrategyFamily::TickTracking {
            rebalance_interval, ..
        } => {
            let mut k = 1usize;
            loop {
                let t = window.start + rebalance_interval * S::from_usize(k).expect("count fits");
                if t >= window.end {
                    break;
                }
                decisions.push(t);
                k += 1;
            }
        }
        _ => {}
    }
    let mut cuts: Vec<S> = times
        .iter()
        .copied()
        .filter(|t| *t > window.start && *t < window.end)
        .chain(decisions.iter().copied())
        .collect();
    cuts.push(window.start);
    cuts.push(window.end);
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("times are finite"));
    cuts.dedup();

    let mut cm = S::zero();
    let mut profit = S::zero();
    let mut rebalance_log = Vec::new();
    let mut next_decision = 0usize;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let j = tl.state_index(a)?;
        let price = price_of(tl, j)?;
        while next_decision < decisions.len() && decisions[next_decision] <= a {
            next_decision += 1;
            let value_before = pos.value(curve, price)?;
            let candidate = spec.range(curve, price.implied)?;
            if candidate != pos.range {
                pos = deploy(curve, spec, price, value_before)?;
                rebalance_log.push(Rebalance {
                    t: a,
                    tick_lower: pos.range.0,
                    tick_upper: pos.range.1,
                    value_before,
                    value_after: pos.value(curve, price)?,
                });
            }
        }
        let fee = tl.fee_rates().get(j).copied().unwrap_or_else(S::zero);
        let own = pos.scale * pos.unit.level_at(price.implied);
        if own > S::zero() {
            let total = tl.aggregate_states()[j].level_at(price.implied) + own;
            let share = own / total;
            let value = pos.value(curve, price)?;
            let loss = lvr_rate(sigma, price.external, price.implied, total);
            let dt = b - a;
            cm = cm + fee * share / value * dt;
            profit = profit + (fee - loss) * share / value * dt;
        }
    }
    let final_value = pos.value(curve, price_of(tl, tl.state_index(window.end)?)?)?;
    Ok(StrategyOutcome {
        spec: *spec,
        cm,
        profit,
        rebalances: rebalance_log.len(),
        initial_value,
        final_value,
        rebalance_log,
    })
}

/// Exhaustive search over `grid`; candidates are evaluated in parallel and
/// reduced in a fixed order.
pub fn optimize<S: Scalar>(
    tl: &PoolTimeline<S>,
    grid: &[StrategySpec<S>],
    window: Window<S>,
    vol: Volatility<S>,
) -> Result<BacktestResult<S>, BacktestError> {
    let first = grid.first().ok_or(BacktestError::EmptyGrid)?;
    if grid.iter().any(|s| s.capital != first.capital) {
        return Err(BacktestError::NonUniformCapital);
    }
    let sigma = resolve_sigma(tl, vol, window)?;
    let outcomes = grid
        .par_iter()
        .map(|s| evaluate_with_sigma(tl, s, window, sigma))
        .collect::<Result<Vec<_>, _>>()?;
    let best = |objective| {
        (0..outcomes.len())
            .min_by(|a, b| compare(&outcomes, objective, *a, *b))
            .expect("grid is non-empty")
    };
    let bc = best(Objective::Competitiveness);
    let bp = best(Objective::Profitability);
    Ok(BacktestResult {
        window,
        sigma,
        best_competitiveness: outcomes[bc].spec,
        best_profitability: outcomes[bp].spec,
        best_competitiveness_index: bc,
        best_profitability_index: bp,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::flair_position;
    use crate::timeline::{ingest, PoolEvent};
    use approx::assert_relative_eq;

    fn cfmm_log(c: f64, n: usize) -> Vec<PoolEvent<f64>> {
        let mut events = vec![PoolEvent::price_mark(0.0, Some(1.0), None)];
        for i in 0..n {
            events.push(PoolEvent::mint(0.0, &format!("lp{i}"), -887_220, 887_220, c / 2.0));
        }
        for k in 1..=10 {
            events.push(PoolEvent::swap(k as f64, 1.0, 1.0));
        }
        events
    }

    fn cp() -> CurveSpec<f64> {
        CurveSpec::constant_product(0.003).unwrap()
    }

    #[test]
    fn full_range_entrant_matches_three_lp_pool() {
        let c = 5.0;
        let tl = ingest(cfmm_log(c, 2), cp()).unwrap();
        let w = Window::new(0.0, 10.0);
        let spec = StrategySpec::new(StrategyFamily::PassiveFullRange, c);
        let got = evaluate_strategy(&tl, &spec, w, Volatility::Fixed(0.0)).unwrap();
        // (T - t0) / (3c)
        assert_relative_eq!(got.cm, 10.0 / 15.0, max_relative = 1e-12);
        let three = ingest(cfmm_log(c, 3), cp()).unwrap();
        assert_relative_eq!(
            got.cm,
            flair_position(&three, "lp2", w).unwrap().value,
            max_relative = 1e-12
        );
        assert_relative_eq!(got.initial_value, c, max_relative = 1e-12);
        assert_eq!(got.profit, got.cm);
    }

    #[test]
    fn zero_fee_window_scores_zero() {
        let events = vec![
            PoolEvent::price_mark(0.0, Some(1.0), None),
            PoolEvent::mint(0.0, "a", -600, 600, 10.0),
            PoolEvent::price_mark(5.0, Some(1.01), None),
        ];
        let curve = CurveSpec::concentrated(0.003, 60).unwrap();
        let tl = ingest(events, curve).unwrap();
        for family in [
            StrategyFamily::PassiveFullRange,
            StrategyFamily::JustInTime,
            StrategyFamily::TickTracking {
                width: 2,
                rebalance_interval: 1.0,
            },
        ] {
            let spec = StrategySpec::new(family, 1.0);
            let o = evaluate_strategy(&tl, &spec, Window::new(0.0, 5.0), Volatility::Fixed(0.0)).unwrap();
            assert_eq!(o.cm, 0.0);
        }
    }

    #[test]
    fn tracking_beats_full_range_on_concentrated_pool() {
        let curve = CurveSpec::concentrated(0.003, 60).unwrap();
        let tl = ingest(cfmm_log(5.0, 2), curve).unwrap();
        let grid = vec![
            StrategySpec::new(StrategyFamily::PassiveFullRange, 5.0),
            StrategySpec::new(
                StrategyFamily::TickTracking {
                    width: 1,
                    rebalance_interval: 1.0,
                },
                5.0,
            ),
        ];
        let r = optimize(&tl, &grid, Window::new(0.0, 10.0), Volatility::Fixed(0.0)).unwrap();
        assert!(r.outcomes[1].cm >= r.outcomes[0].cm);
        assert_eq!(r.best_competitiveness_index, 1);
        assert_eq!(r.best_profitability_index, 1);
        assert_eq!(r.outcomes[1].rebalances, 0);
    }

    #[test]
    fn self_financing_rebalances() {
        let curve = CurveSpec::concentrated(0.003, 10).unwrap();
        let mut events = vec![
            PoolEvent::price_mark(0.0, Some(1.0), None),
            PoolEvent::mint(0.0, "a", -2000, 2000, 100.0),
        ];
        let mut p = 1.0;
        for k in 1..=20 {
            p *= if k % 3 == 0 { 0.99 } else { 1.013 };
            events.push(PoolEvent::swap(k as f64, 0.5, p));
        }
        let tl = ingest(events, curve).unwrap();
        let spec = StrategySpec::new(
            StrategyFamily::TickTracking {
                width: 3,
                rebalance_interval: 2.0,
            },
            7.0,
        );
        let o = evaluate_strategy(&tl, &spec, Window::new(0.0, 20.0), Volatility::Fixed(0.2)).unwrap();
        assert!(o.rebalances > 0);
        for r in &o.rebalance_log {
            assert_relative_eq!(r.value_before, r.value_after, max_relative = 1e-9);
        }
        assert!(o.profit < o.cm);
    }

    #[test]
    fn jit_range_is_tightest() {
        let curve = CurveSpec::<f64>::concentrated(0.003, 60).unwrap();
        let spec = StrategySpec::new(StrategyFamily::JustInTime, 1.0);
        assert_eq!(spec.range(&curve, 2.0).unwrap(), (6900, 6960));
        assert_eq!(spec.range(&curve, 1.0).unwrap(), (-60, 60));
        let track = StrategySpec::new(
            StrategyFamily::TickTracking {
                width: 4,
                rebalance_interval: 1.0,
            },
            1.0,
        );
        assert_eq!(track.range(&curve, 2.0).unwrap(), (6840, 7080));
    }

    #[test]
    fn grid_errors_and_ties() {
        let tl = ingest(cfmm_log(5.0, 2), cp()).unwrap();
        let w = Window::new(0.0, 10.0);
        assert_eq!(
            optimize(&tl, &[], w, Volatility::Fixed(0.0)),
            Err(BacktestError::EmptyGrid)
        );
        let mixed = vec![
            StrategySpec::new(StrategyFamily::PassiveFullRange, 5.0),
            StrategySpec::new(StrategyFamily::JustInTime, 6.0),
        ];
        assert_eq!(
            optimize(&tl, &mixed, w, Volatility::Fixed(0.0)),
            Err(BacktestError::NonUniformCapital)
        );
        // On a constant-product pool every family holds the full range, so
        // the family order decides.
        let grid = vec![
            StrategySpec::new(StrategyFamily::JustInTime, 5.0),
            StrategySpec::new(StrategyFamily::PassiveFullRange, 5.0),
        ];
        let r = optimize(&tl, &grid, w, Volatility::Fixed(0.0)).unwrap();
        assert_eq!(r.outcomes[0].cm, r.outcomes[1].cm);
        assert_eq!(r.best_competitiveness.family, StrategyFamily::PassiveFullRange);
        let csv = r.to_csv();
        assert!(csv.lines().nth(1).unwrap().starts_with("1,passive_full_range"));
    }

    #[test]
    fn invalid_strategies() {
        let tl = ingest(cfmm_log(5.0, 1), CurveSpec::concentrated(0.003, 60).unwrap()).unwrap();
        let w = Window::new(0.0, 10.0);
        for family in [
            StrategyFamily::TickTracking {
                width: 0,
                rebalance_interval: 1.0,
            },
            StrategyFamily::TickTracking {
                width: 1,
                rebalance_interval: 0.0,
            },
            StrategyFamily::PassiveFixedRange {
                tick_lower: 60,
                tick_upper: 60,
            },
        ] {
            let spec = StrategySpec::new(family, 1.0);
            assert!(matches!(
                evaluate_strategy(&tl, &spec, w, Volatility::Fixed(0.0)),
                Err(BacktestError::InvalidStrategy(_))
            ));
        }
        let broke = StrategySpec::new(StrategyFamily::PassiveFullRange, 0.0);
        assert!(evaluate_strategy(&tl, &broke, w, Volatility::Fixed(0.0)).is_err());
    }
}
