//! Order-flow toxicity: instantaneous LVR and swap markouts.
//!
//! LVR uses the Black-Scholes instantaneous rate
//!
//! ```text
//! ℓ_t = σ² p_t² / 2 · |∂x*/∂p|(p̃_t)
//! ```
//!
//! where only the interval holding the implied price contributes to the
//! slope. σ is either supplied or estimated as the realized variance of
//! log external prices across the window, per unit of log time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, CurveSpec, LiquidityDistribution};
use crate::timeline::{PoolTimeline, TimelineError, Window};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToxicityError {
    #[error("volatility must be finite and non-negative")]
    InvalidVolatility,
    #[error("markout horizon must be finite and non-negative")]
    InvalidHorizon,
    #[error("{dropped} swap(s) lack a forward price within the log")]
    MissingForwardPrices { dropped: usize },
    #[error("pool carries LVR at t = {t} with zero deployed capital")]
    ZeroPoolCapital { t: f64 },
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToxicityKind {
    Lvr,
    Markout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "sigma")]
pub enum Volatility<S> {
    Fixed(S),
    Realized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ToxicitySegment<S> {
    pub t_start: S,
    pub t_end: S,
    /// Loss rate on the segment (LVR) or the swap's markout.
    pub rate: S,
    pub contribution: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ToxicityReport<S> {
    pub window: Window<S>,
    pub kind: ToxicityKind,
    pub value: S,
    /// Each segment divided by the pool's capital.
    pub normalized: bool,
    /// σ used for LVR, whether supplied or estimated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<S>,
    /// Swaps dropped because their forward price fell past the log.
    #[serde(default)]
    pub truncated: usize,
    pub segments: Vec<ToxicitySegment<S>>,
}

impl<S: Scalar> ToxicityReport<S> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_start,cumulative\n");
        let mut acc = S::zero();
        for s in &self.segments {
            out.push_str(&format!("{},{}\n", s.t_start, acc));
            acc = acc + s.contribution;
        }
        out.push_str(&format!("{},{}\n", self.window.end, acc));
        out
    }
}

/// Realized σ of log external prices over the window.
pub fn realized_sigma<S: Scalar>(tl: &PoolTimeline<S>, window: Window<S>) -> Result<S, ToxicityError> {
    tl.check_window(window)?;
    if window.length() == S::zero() {
        return Ok(S::zero());
    }
    let times = tl.times();
    let prices = tl.price_states();
    let mut prev = prices[tl.state_index(window.start)?].map(|p| p.external);
    let mut sum_sq = S::zero();
    for (j, t) in times.iter().enumerate() {
        if *t <= window.start || *t > window.end {
            continue;
        }
        let cur = prices[j].map(|p| p.external);
        if let (Some(a), Some(b)) = (prev, cur) {
            let r = (b / a).ln();
            sum_sq = sum_sq + r * r;
        }
        prev = cur;
    }
    Ok((sum_sq / window.length()).sqrt())
}

/// ℓ = σ² p² / 2 · |∂x*/∂p| for in-range liquidity `level` at implied price
/// `implied`.
pub fn lvr_rate<S: Scalar>(sigma: S, external: S, implied: S, level: S) -> S {
    sigma * sigma * external * external / S::two() * CurveSpec::slope_for_level(implied, level)
}

pub fn lvr<S: Scalar>(
    tl: &PoolTimeline<S>,
    vol: Volatility<S>,
    window: Window<S>,
    normalized: bool,
) -> Result<ToxicityReport<S>, ToxicityError> {
    let sigma = match vol {
        Volatility::Fixed(s) if s >= S::zero() && s.is_finite() => s,
        Volatility::Fixed(_) => return Err(ToxicityError::InvalidVolatility),
        Volatility::Realized => realized_sigma(tl, window)?,
    };
    let views = tl.segments_in(window)?;
    let mut segments = Vec::with_capacity(views.len());
    for v in &views {
        let mut rate = S::zero();
        if let Some(price) = v.price {
            let level = v.aggregate.level_at(price.implied);
            rate = lvr_rate(sigma, price.external, price.implied, level);
            if normalized && rate > S::zero() {
                rate = rate / pool_value(tl.curve(), price.external, price.implied, v.aggregate, v.t_start)?;
            }
        }
        segments.push(ToxicitySegment {
            t_start: v.t_start,
            t_end: v.t_end,
            rate,
            contribution: rate * (v.t_end - v.t_start),
        });
    }
    Ok(ToxicityReport {
        window,
        kind: ToxicityKind::Lvr,
        value: segments.iter().fold(S::zero(), |a, s| a + s.contribution),
        normalized,
        sigma: Some(sigma),
        horizon: None,
        truncated: 0,
        segments,
    })
}

fn pool_value<S: Scalar>(
    curve: &CurveSpec<S>,
    external: S,
    implied: S,
    dist: &LiquidityDistribution<S>,
    t: S,
) -> Result<S, ToxicityError> {
    let v = curve.portfolio_value(external, implied, dist)?;
    if v > S::zero() {
        Ok(v)
    } else {
        Err(ToxicityError::ZeroPoolCapital { t: t.as_f64() })
    }
}

/// Pool-side markout of every swap with `t0 < t <= T`:
/// `(p_ext(t + h) − p̃_after) · (−Δx_pool)`, positive when the pool lost.
///
/// Swaps whose forward time runs past the log are dropped and counted in
/// `truncated`; with `strict` they are an error instead.
pub fn markout<S: Scalar>(
    tl: &PoolTimeline<S>,
    horizon: S,
    window: Window<S>,
    normalized: bool,
    strict: bool,
) -> Result<ToxicityReport<S>, ToxicityError> {
    if !(horizon >= S::zero()) || !horizon.is_finite() {
        return Err(ToxicityError::InvalidHorizon);
    }
    tl.check_window(window)?;
    let end = tl.span().map(|s| s.end).unwrap_or_else(S::zero);
    let mut segments = Vec::new();
    let mut truncated = 0usize;
    for s in tl.swaps() {
        if !(s.timestamp > window.start && s.timestamp <= window.end) {
            continue;
        }
        let forward = s.timestamp + horizon;
        if forward > end {
            truncated += 1;
            continue;
        }
        let Some(price) = tl.price_at(forward)? else {
            continue;
        };
        let mut value = (price.external - s.price_after) * -s.pool_risky_delta;
        if normalized && value != S::zero() {
            let j = tl.state_index(s.timestamp)?;
            let here = tl.price_states()[j].expect("swap has a price");
            value = value
                / pool_value(
                    tl.curve(),
                    here.external,
                    here.implied,
                    &tl.aggregate_states()[j],
                    s.timestamp,
                )?;
        }
        segments.push(ToxicitySegment {
            t_start: s.timestamp,
            t_end: forward,
            rate: value,
            contribution: value,
        });
    }
    if strict && truncated > 0 {
        return Err(ToxicityError::MissingForwardPrices { dropped: truncated });
    }
    Ok(ToxicityReport {
        window,
        kind: ToxicityKind::Markout,
        value: segments.iter().fold(S::zero(), |a, s| a + s.contribution),
        normalized,
        sigma: None,
        horizon: Some(horizon),
        truncated,
        segments,
    })
}
