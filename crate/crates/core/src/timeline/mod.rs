//! Event-log ingestion and the reconstructed pool history.
//!
//! Distinct event timestamps `τ_0 < τ_1 < … < τ_m` cut the log into
//! segments `[τ_j, τ_{j+1})`. State `j` (aggregate liquidity, prices) is the
//! pool after every event stamped `τ_j` has been applied and holds on the
//! whole segment. Fees paid by swaps stamped `τ_{j+1}` are smeared uniformly
//! over segment `j`, so the fee rate is piecewise constant and integrates
//! back to the logged totals.
//!
//! Prices are held at the last observed value. Segments before the first
//! observation take the first observed price.

mod event;
mod snapshot;

pub use event::{parse_csv, parse_jsonl, write_jsonl, EventKind, ParsedLog, PoolEvent, CSV_HEADER};
pub use snapshot::{snapshot_from_json, snapshot_load, snapshot_save, snapshot_to_json, SCHEMA_VERSION};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, CurveSpec, LiquidityDistribution};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimelineError {
    #[error("event {index}: timestamp {timestamp} precedes {previous}")]
    UnsortedLog {
        index: usize,
        timestamp: f64,
        previous: f64,
    },
    #[error("event {index}: burn drives position {position_id} below zero")]
    NegativeLiquidity { index: usize, position_id: String },
    #[error("unknown position {position_id}")]
    UnknownPosition {
        position_id: String,
        index: Option<usize>,
    },
    #[error("event {index}: fee paid at t = {timestamp} with no active liquidity to earn it")]
    OrphanFee { index: usize, timestamp: f64 },
    #[error("event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("time {t} lies outside the log span")]
    OutOfRangeTime { t: f64 },
    #[error("invalid window [{start}, {end}]")]
    InvalidWindow { start: f64, end: f64 },
    #[error("fee accrues at t = {t} while active liquidity is zero")]
    ZeroActiveLiquidityWithFee { t: f64 },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("snapshot schema version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u64, supported: u64 },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

impl TimelineError {
    /// Index of the offending event, for errors raised during ingestion.
    pub fn event_index(&self) -> Option<usize> {
        match self {
            Self::UnsortedLog { index, .. }
            | Self::NegativeLiquidity { index, .. }
            | Self::OrphanFee { index, .. }
            | Self::InvalidEvent { index, .. } => Some(*index),
            Self::UnknownPosition { index, .. } => *index,
            _ => None,
        }
    }
}

/// Implied and external price holding on a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint<S> {
    pub implied: S,
    pub external: S,
}

/// A time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window<S> {
    pub start: S,
    pub end: S,
}

impl<S: Scalar> Window<S> {
    pub fn new(start: S, end: S) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> S {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSegment<S> {
    pub t_start: S,
    pub t_end: S,
    pub distribution: LiquidityDistribution<S>,
}

/// L_i(p; t) for one position, as contiguous segments from its first mint
/// to the end of the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionTimeline<S> {
    pub position_id: String,
    pub segments: Vec<PositionSegment<S>>,
}

impl<S: Scalar> PositionTimeline<S> {
    /// Distribution in force at `t`; `None` before the first mint.
    pub fn distribution_at(&self, t: S) -> Option<&LiquidityDistribution<S>> {
        let idx = self.segments.partition_point(|s| s.t_start <= t);
        idx.checked_sub(1).map(|k| &self.segments[k].distribution)
    }
}

/// A swap as seen by the pool, with the risky-asset change it implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapRecord<S> {
    pub timestamp: S,
    pub fee_amount: S,
    pub price_before: S,
    pub price_after: S,
    /// Change of the pool's risky reserves; the trader received the opposite.
    pub pool_risky_delta: S,
}

/// Reconstructed history of one pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolTimeline<S> {
    pub(crate) curve: CurveSpec<S>,
    pub(crate) times: Vec<S>,
    pub(crate) positions: BTreeMap<String, PositionTimeline<S>>,
    /// State after all events at `times[j]`; one entry per timestamp.
    pub(crate) aggregate: Vec<LiquidityDistribution<S>>,
    /// Fee rate on `[times[j], times[j + 1])`; one fewer than `times`.
    pub(crate) fee_rates: Vec<S>,
    pub(crate) prices: Vec<Option<PricePoint<S>>>,
    pub(crate) swaps: Vec<SwapRecord<S>>,
    pub(crate) event_count: usize,
    pub(crate) zero: LiquidityDistribution<S>,
}

/// One piece of the event-aligned grid, clipped to a query window.
#[derive(Debug, Clone, Copy)]
pub struct SegmentView<'a, S> {
    pub state: usize,
    pub t_start: S,
    pub t_end: S,
    pub fee_rate: S,
    pub price: Option<PricePoint<S>>,
    pub aggregate: &'a LiquidityDistribution<S>,
}

impl<S: Scalar> PoolTimeline<S> {
    pub fn curve(&self) -> &CurveSpec<S> {
        &self.curve
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> Option<Window<S>> {
        Some(Window::new(*self.times.first()?, *self.times.last()?))
    }

    pub fn event_count(&self) -> usize {
        self.event_count
    }

    pub fn positions(&self) -> &BTreeMap<String, PositionTimeline<S>> {
        &self.positions
    }

    pub fn position(&self, id: &str) -> Result<&PositionTimeline<S>, TimelineError> {
        self.positions
            .get(id)
            .ok_or_else(|| TimelineError::UnknownPosition {
                position_id: id.to_owned(),
                index: None,
            })
    }

    pub fn swaps(&self) -> &[SwapRecord<S>] {
        &self.swaps
    }

    pub fn fee_rates(&self) -> &[S] {
        &self.fee_rates
    }

    pub fn aggregate_states(&self) -> &[LiquidityDistribution<S>] {
        &self.aggregate
    }

    pub fn price_states(&self) -> &[Option<PricePoint<S>>] {
        &self.prices
    }

    pub fn total_fees(&self) -> S {
        self.swaps.iter().fold(S::zero(), |a, s| a + s.fee_amount)
    }

    /// Index of the state in force at `t` (right-continuous).
    pub fn state_index(&self, t: S) -> Result<usize, TimelineError> {
        let span = self
            .span()
            .ok_or(TimelineError::OutOfRangeTime { t: t.as_f64() })?;
        if !(t >= span.start && t <= span.end) {
            return Err(TimelineError::OutOfRangeTime { t: t.as_f64() });
        }
        Ok(self.times.partition_point(|x| *x <= t) - 1)
    }

    /// Fee rate in force at `t`; zero at the very end of the log.
    pub fn fee_rate_at(&self, t: S) -> Result<S, TimelineError> {
        let j = self.state_index(t)?;
        Ok(self.fee_rates.get(j).copied().unwrap_or_else(S::zero))
    }

    pub fn price_at(&self, t: S) -> Result<Option<PricePoint<S>>, TimelineError> {
        Ok(self.prices[self.state_index(t)?])
    }

    pub fn aggregate_at(&self, t: S) -> Result<&LiquidityDistribution<S>, TimelineError> {
        Ok(&self.aggregate[self.state_index(t)?])
    }

    /// L_i(p; t) for a position.
    pub fn distribution_at(
        &self,
        position_id: &str,
        t: S,
    ) -> Result<&LiquidityDistribution<S>, TimelineError> {
        let pos = self.position(position_id)?;
        self.state_index(t)?;
        Ok(pos.distribution_at(t).unwrap_or(&self.zero))
    }

    /// L_i(p̃_t; t) / L(p̃_t; t), with 0/0 read as 0.
    pub fn fee_share_at(&self, position_id: &str, t: S) -> Result<S, TimelineError> {
        let j = self.state_index(t)?;
        let dist = self.position(position_id)?.distribution_at(t).unwrap_or(&self.zero);
        let Some(price) = self.prices[j] else {
            return Ok(S::zero());
        };
        let own = dist.level_at(price.implied);
        let total = self.aggregate[j].level_at(price.implied);
        if total == S::zero() {
            let fee = self.fee_rates.get(j).copied().unwrap_or_else(S::zero);
            if fee > S::zero() {
                return Err(TimelineError::ZeroActiveLiquidityWithFee { t: t.as_f64() });
            }
            return Ok(S::zero());
        }
        Ok(own / total)
    }

    /// Checks that `[start, end]` is ordered and inside the log span.
    pub fn check_window(&self, window: Window<S>) -> Result<(), TimelineError> {
        if !(window.start <= window.end) {
            return Err(TimelineError::InvalidWindow {
                start: window.start.as_f64(),
                end: window.end.as_f64(),
            });
        }
        self.state_index(window.start)?;
        self.state_index(window.end)?;
        Ok(())
    }

    /// Event-aligned segments overlapping the window, clipped to it.
    /// Zero-length pieces are skipped.
    pub fn segments_in(&self, window: Window<S>) -> Result<Vec<SegmentView<'_, S>>, TimelineError> {
        self.check_window(window)?;
        let mut out = Vec::new();
        if window.start == window.end {
            return Ok(out);
        }
        let first = self.state_index(window.start)?;
        for j in first..self.fee_rates.len() {
            let t_start = self.times[j].max(window.start);
            let t_end = self.times[j + 1].min(window.end);
            if t_start >= window.end {
                break;
            }
            if t_end > t_start {
                out.push(SegmentView {
                    state: j,
                    t_start,
                    t_end,
                    fee_rate: self.fee_rates[j],
                    price: self.prices[j],
                    aggregate: &self.aggregate[j],
                });
            }
        }
        Ok(out)
    }
}

#[derive(Default)]
struct PriceState<S> {
    implied: Option<S>,
    external: Option<S>,
}

struct PendingSwap<S> {
    index: usize,
    state: usize,
    fee: S,
    implied_after: Option<S>,
}

fn positive_finite<S: Scalar>(v: S) -> bool {
    v > S::zero() && v.is_finite()
}

/// Builds a [`PoolTimeline`] from a time-ordered event stream.
pub fn ingest<S, I>(events: I, curve: CurveSpec<S>) -> Result<PoolTimeline<S>, TimelineError>
where
    S: Scalar,
    I: IntoIterator<Item = PoolEvent<S>>,
{
    curve.validate()?;
    let mut times: Vec<S> = Vec::new();
    let mut aggregate: Vec<LiquidityDistribution<S>> = Vec::new();
    let mut fee_totals: Vec<S> = Vec::new();
    let mut fee_first_index: Vec<Option<usize>> = Vec::new();
    let mut raw_prices: Vec<PriceState<S>> = Vec::new();
    let mut pending_swaps: Vec<PendingSwap<S>> = Vec::new();

    let mut holdings: BTreeMap<String, LiquidityDistribution<S>> = BTreeMap::new();
    let mut positions: BTreeMap<String, PositionTimeline<S>> = BTreeMap::new();
    let mut price = PriceState::<S>::default();
    let mut changed: Vec<String> = Vec::new();
    let mut event_count = 0usize;

    let close_state = |times: &[S],
                           changed: &mut Vec<String>,
                           holdings: &BTreeMap<String, LiquidityDistribution<S>>,
                           positions: &mut BTreeMap<String, PositionTimeline<S>>,
                           aggregate: &mut Vec<LiquidityDistribution<S>>| {
        let t = *times.last().expect("a state is open");
        if changed.is_empty() && !aggregate.is_empty() {
            let prev = aggregate.last().expect("non-empty").clone();
            aggregate.push(prev);
            return;
        }
        for id in changed.drain(..) {
            let dist = holdings[&id].clone();
            let pos = positions.entry(id.clone()).or_insert_with(|| PositionTimeline {
                position_id: id.clone(),
                segments: Vec::new(),
            });
            if let Some(last) = pos.segments.last_mut() {
                last.t_end = t;
            }
            pos.segments.push(PositionSegment {
                t_start: t,
                t_end: t,
                distribution: dist,
            });
        }
        aggregate.push(LiquidityDistribution::sum(holdings.values()));
    };

    for (index, ev) in events.into_iter().enumerate() {
        event_count += 1;
        let invalid = |reason: &str| TimelineError::InvalidEvent {
            index,
            reason: reason.to_owned(),
        };
        let t = ev.timestamp;
        if !t.is_finite() || t < S::zero() {
            return Err(invalid("timestamp must be finite and non-negative"));
        }
        match times.last() {
            Some(prev) if t < *prev => {
                return Err(TimelineError::UnsortedLog {
                    index,
                    timestamp: t.as_f64(),
                    previous: prev.as_f64(),
                })
            }
            Some(prev) if t == *prev => {}
            _ => {
                if !times.is_empty() {
                    close_state(&times, &mut changed, &holdings, &mut positions, &mut aggregate);
                    raw_prices.push(PriceState {
                        implied: price.implied,
                        external: price.external.or(price.implied),
                    });
                }
                times.push(t);
                if times.len() > 1 {
                    fee_totals.push(S::zero());
                    fee_first_index.push(None);
                }
            }
        }

        for p in [ev.implied_price_after, ev.external_price].into_iter().flatten() {
            if !positive_finite(p) {
                return Err(invalid("prices must be positive and finite"));
            }
        }

        match ev.kind {
            EventKind::Mint | EventKind::Burn => {
                let id = ev
                    .position_id
                    .clone()
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| invalid("mint/burn requires a position_id"))?;
                let delta = ev
                    .liquidity_delta
                    .ok_or_else(|| invalid("mint/burn requires liquidity_delta"))?;
                if !delta.is_finite() {
                    return Err(invalid("liquidity_delta must be finite"));
                }
                let is_mint = ev.kind == EventKind::Mint;
                if is_mint && !(delta > S::zero()) {
                    return Err(invalid("mint liquidity_delta must be positive"));
                }
                if !is_mint && !(delta < S::zero()) {
                    return Err(invalid("burn liquidity_delta must be negative"));
                }
                let interval = if curve.is_constant_product() {
                    curve.full_range(S::one())?
                } else {
                    let (lo, hi) = match (ev.tick_lower, ev.tick_upper) {
                        (Some(lo), Some(hi)) => (lo, hi),
                        _ => return Err(invalid("mint/burn requires tick_lower and tick_upper")),
                    };
                    curve
                        .tick_range(lo, hi, S::one())
                        .map_err(|e| invalid(&e.to_string()))?
                };
                let (lo_p, hi_p) = interval.support().expect("interval is non-empty");
                let current = match holdings.get(&id) {
                    Some(d) => d.clone(),
                    None if is_mint => LiquidityDistribution::zero(),
                    None => {
                        return Err(TimelineError::UnknownPosition {
                            position_id: id,
                            index: Some(index),
                        })
                    }
                };
                let updated = current.apply_delta(lo_p, hi_p, delta).map_err(|e| match e {
                    CurveError::NegativeLevel { .. } => TimelineError::NegativeLiquidity {
                        index,
                        position_id: id.clone(),
                    },
                    other => TimelineError::Curve(other),
                })?;
                holdings.insert(id.clone(), updated);
                if !changed.contains(&id) {
                    changed.push(id);
                }
            }
            EventKind::Swap => {
                let fee = ev.fee_amount.unwrap_or_else(S::zero);
                if !(fee >= S::zero()) || !fee.is_finite() {
                    return Err(invalid("fee_amount must be finite and non-negative"));
                }
                let state = times.len() - 1;
                if fee > S::zero() {
                    if state == 0 {
                        return Err(TimelineError::OrphanFee {
                            index,
                            timestamp: t.as_f64(),
                        });
                    }
                    fee_totals[state - 1] = fee_totals[state - 1] + fee;
                    fee_first_index[state - 1].get_or_insert(index);
                }
                pending_swaps.push(PendingSwap {
                    index,
                    state,
                    fee,
                    implied_after: ev.implied_price_after,
                });
            }
            EventKind::PriceMark => {
                if ev.implied_price_after.is_none() && ev.external_price.is_none() {
                    return Err(invalid("price_mark requires a price"));
                }
            }
        }

        if let Some(p) = ev.implied_price_after {
            price.implied = Some(p);
            price.external = None;
        }
        if let Some(p) = ev.external_price {
            price.external = Some(p);
        }
    }

    if times.is_empty() {
        return Ok(PoolTimeline {
            curve,
            times,
            positions,
            aggregate,
            fee_rates: Vec::new(),
            prices: Vec::new(),
            swaps: Vec::new(),
            event_count,
            zero: LiquidityDistribution::zero(),
        });
    }
    close_state(&times, &mut changed, &holdings, &mut positions, &mut aggregate);
    raw_prices.push(PriceState {
        implied: price.implied,
        external: price.external.or(price.implied),
    });
    let end = *times.last().expect("non-empty");
    for pos in positions.values_mut() {
        if let Some(last) = pos.segments.last_mut() {
            last.t_end = end;
        }
    }

    let prices = backfill_prices(&raw_prices);

    let fee_rates: Vec<S> = fee_totals
        .iter()
        .enumerate()
        .map(|(j, total)| *total / (times[j + 1] - times[j]))
        .collect();

    for (j, rate) in fee_rates.iter().enumerate() {
        if *rate > S::zero() {
            let index = fee_first_index[j].expect("fee-bearing segment has a swap");
            let active = prices[j].map(|p| aggregate[j].level_at(p.implied));
            if !matches!(active, Some(l) if l > S::zero()) {
                return Err(TimelineError::OrphanFee {
                    index,
                    timestamp: times[j + 1].as_f64(),
                });
            }
        }
    }

    let mut swaps = Vec::with_capacity(pending_swaps.len());
    let mut last_state = usize::MAX;
    let mut running = None;
    for s in pending_swaps {
        if s.state != last_state {
            last_state = s.state;
            running = if s.state == 0 {
                prices[0].map(|p| p.implied)
            } else {
                prices[s.state - 1].map(|p| p.implied)
            };
        }
        let before = running;
        let after = s.implied_after.or(before);
        let delta = match (before, after) {
            (Some(b), Some(a)) if s.state > 0 => {
                let dist = &aggregate[s.state - 1];
                curve.reserves_x(a, dist)? - curve.reserves_x(b, dist)?
            }
            _ => S::zero(),
        };
        let (Some(before), Some(after)) = (before, after) else {
            if s.fee > S::zero() {
                return Err(TimelineError::OrphanFee {
                    index: s.index,
                    timestamp: times[s.state].as_f64(),
                });
            }
            continue;
        };
        swaps.push(SwapRecord {
            timestamp: times[s.state],
            fee_amount: s.fee,
            price_before: before,
            price_after: after,
            pool_risky_delta: delta,
        });
        running = Some(after);
    }

    Ok(PoolTimeline {
        curve,
        times,
        positions,
        aggregate,
        fee_rates,
        prices,
        swaps,
        event_count,
        zero: LiquidityDistribution::zero(),
    })
}

fn backfill_prices<S: Scalar>(raw: &[PriceState<S>]) -> Vec<Option<PricePoint<S>>> {
    let first_implied = raw.iter().find_map(|p| p.implied);
    let first_external = raw.iter().find_map(|p| p.external);
    raw.iter()
        .map(|p| {
            let implied = p.implied.or(first_implied)?;
            let external = p.external.or(if p.implied.is_none() {
                first_external
            } else {
                None
            });
            Some(PricePoint {
                implied,
                external: external.unwrap_or(implied),
            })
        })
        .collect()
}
