//! FLAIR: time-integrated fee return on deployed capital.
//!
//! ```text
//! CM_i(t0, T)   = ∫ fee_t / V_i(t) · L_i(p̃_t; t) / L(p̃_t; t) dt
//! CM_agg(t0, T) = ∫ fee_t / V(t) dt
//! ```
//!
//! Under the timeline's conventions every factor is constant on an
//! event-aligned segment, so the integrals are exact finite sums.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, LiquidityDistribution};
use crate::timeline::{PoolTimeline, SegmentView, TimelineError, Window};
use crate::toxicity::ToxicityReport;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("{subject} earns fees at t = {t} with zero deployed capital")]
    ZeroCapitalWithFeeShare { subject: String, t: f64 },
    #[error("pool earns fees at t = {t} with zero deployed capital")]
    ZeroPoolCapitalWithFee { t: f64 },
    #[error("reports cover different windows")]
    WindowMismatch,
    #[error("empty position group")]
    EmptyGroup,
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MetricSegment<S> {
    pub t_start: S,
    pub t_end: S,
    pub integrand: S,
    pub contribution: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MetricReport<S> {
    pub window: Window<S>,
    pub value: S,
    /// Position id, group name or `"aggregate"`.
    pub subject: String,
    pub segments: Vec<MetricSegment<S>>,
}

impl<S: Scalar> MetricReport<S> {
    fn from_segments(window: Window<S>, subject: String, segments: Vec<MetricSegment<S>>) -> Self {
        let value = segments.iter().fold(S::zero(), |a, s| a + s.contribution);
        Self {
            window,
            value,
            subject,
            segments,
        }
    }

    /// Two-column `(t_start, cumulative)` series: each row is the value
    /// accumulated before that segment, closed by `(T, total)`.
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

pub const AGGREGATE: &str = "aggregate";

/// Integrates `fee_t · share / V` for a fixed set of positions.
fn integrate_group<S: Scalar>(
    tl: &PoolTimeline<S>,
    ids: &[&str],
    subject: &str,
    window: Window<S>,
) -> Result<MetricReport<S>, MetricError> {
    let positions = ids
        .iter()
        .map(|id| tl.position(id))
        .collect::<Result<Vec<_>, _>>()?;
    let views = tl.segments_in(window)?;
    let mut segments = Vec::with_capacity(views.len());
    for v in &views {
        let mut integrand = S::zero();
        if let (Some(price), true) = (v.price, v.fee_rate > S::zero()) {
            let owned: Vec<&LiquidityDistribution<S>> = positions
                .iter()
                .filter_map(|p| p.distribution_at(v.t_start))
                .collect();
            let dist = if owned.len() == 1 {
                owned[0].clone()
            } else {
                LiquidityDistribution::sum(owned)
            };
            let own = dist.level_at(price.implied);
            if own > S::zero() {
                let total = v.aggregate.level_at(price.implied);
                let share = own / total;
                let value = tl
                    .curve()
                    .portfolio_value(price.external, price.implied, &dist)?;
                if !(value > S::zero()) {
                    return Err(MetricError::ZeroCapitalWithFeeShare {
                        subject: subject.to_owned(),
                        t: v.t_start.as_f64(),
                    });
                }
                integrand = v.fee_rate / value * share;
            }
        }
        segments.push(segment(v, integrand));
    }
    Ok(MetricReport::from_segments(
        window,
        subject.to_owned(),
        segments,
    ))
}

fn segment<S: Scalar>(v: &SegmentView<'_, S>, integrand: S) -> MetricSegment<S> {
    MetricSegment {
        t_start: v.t_start,
        t_end: v.t_end,
        integrand,
        contribution: integrand * (v.t_end - v.t_start),
    }
}

/// CM_i for one position.
pub fn flair_position<S: Scalar>(
    tl: &PoolTimeline<S>,
    position_id: &str,
    window: Window<S>,
) -> Result<MetricReport<S>, MetricError> {
    integrate_group(tl, &[position_id], position_id, window)
}

/// CM for an LP owning several positions: their distributions are pooled
/// before taking the fee share and the capital.
pub fn flair_group<S: Scalar>(
    tl: &PoolTimeline<S>,
    owner: &str,
    position_ids: &[String],
    window: Window<S>,
) -> Result<MetricReport<S>, MetricError> {
    if position_ids.is_empty() {
        return Err(MetricError::EmptyGroup);
    }
    let ids: Vec<&str> = position_ids.iter().map(String::as_str).collect();
    integrate_group(tl, &ids, owner, window)
}

/// CM per owner, given a position → owner mapping. Unmapped positions are
/// their own owner.
pub fn flair_by_owner<S: Scalar>(
    tl: &PoolTimeline<S>,
    owners: &BTreeMap<String, String>,
    window: Window<S>,
) -> Result<Vec<MetricReport<S>>, MetricError> {
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for id in tl.positions().keys() {
        let owner = owners.get(id).cloned().unwrap_or_else(|| id.clone());
        groups.entry(owner).or_default().push(id.clone());
    }
    groups
        .iter()
        .map(|(owner, ids)| flair_group(tl, owner, ids, window))
        .collect()
}

/// CM_agg for the whole pool.
pub fn flair_aggregate<S: Scalar>(
    tl: &PoolTimeline<S>,
    window: Window<S>,
) -> Result<MetricReport<S>, MetricError> {
    let views = tl.segments_in(window)?;
    let mut segments = Vec::with_capacity(views.len());
    for v in &views {
        let mut integrand = S::zero();
        if let (Some(price), true) = (v.price, v.fee_rate > S::zero()) {
            let value = tl
                .curve()
                .portfolio_value(price.external, price.implied, v.aggregate)?;
            if !(value > S::zero()) {
                return Err(MetricError::ZeroPoolCapitalWithFee {
                    t: v.t_start.as_f64(),
                });
            }
            integrand = v.fee_rate / value;
        }
        segments.push(segment(v, integrand));
    }
    Ok(MetricReport::from_segments(
        window,
        AGGREGATE.to_owned(),
        segments,
    ))
}

/// A pool's position on the competitiveness/toxicity plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct QuadrantPoint<S> {
    pub cm_agg: S,
    pub toxicity: S,
}

pub fn quadrant_point<S: Scalar>(
    tl: &PoolTimeline<S>,
    toxicity: &ToxicityReport<S>,
    window: Window<S>,
) -> Result<QuadrantPoint<S>, MetricError> {
    if toxicity.window != window {
        return Err(MetricError::WindowMismatch);
    }
    Ok(QuadrantPoint {
        cm_agg: flair_aggregate(tl, window)?.value,
        toxicity: toxicity.value,
    })
}
