//! Versioned JSON snapshot of a reconstructed timeline.
//!
//! Every piecewise series is stored as `[t_start, t_end]` segments; the
//! state after the last event is the zero-length segment at the end.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PoolTimeline, PositionTimeline, PricePoint, SwapRecord, TimelineError};
use crate::curve::{CurveSpec, LiquidityDistribution};
use crate::Scalar;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct Snapshot<S> {
    schema_version: u64,
    curve: CurveSpec<S>,
    positions: Vec<PositionTimeline<S>>,
    aggregate: Vec<AggregateSegment<S>>,
    fee_stream: Vec<FeeSegment<S>>,
    price_path: Vec<PriceSegment<S>>,
    swaps: Vec<SwapRecord<S>>,
    event_count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct AggregateSegment<S> {
    t_start: S,
    t_end: S,
    distribution: LiquidityDistribution<S>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct FeeSegment<S> {
    t_start: S,
    t_end: S,
    rate: S,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct PriceSegment<S> {
    t_start: S,
    t_end: S,
    implied: Option<S>,
    external: Option<S>,
}

fn segment_end<S: Scalar>(times: &[S], j: usize) -> S {
    times.get(j + 1).copied().unwrap_or(times[j])
}

pub fn snapshot_to_json<S: Scalar>(tl: &PoolTimeline<S>) -> String {
    let times = &tl.times;
    let snap = Snapshot {
        schema_version: SCHEMA_VERSION,
        curve: tl.curve.clone(),
        positions: tl.positions.values().cloned().collect(),
        aggregate: tl
            .aggregate
            .iter()
            .enumerate()
            .map(|(j, d)| AggregateSegment {
                t_start: times[j],
                t_end: segment_end(times, j),
                distribution: d.clone(),
            })
            .collect(),
        fee_stream: tl
            .fee_rates
            .iter()
            .enumerate()
            .map(|(j, r)| FeeSegment {
                t_start: times[j],
                t_end: times[j + 1],
                rate: *r,
            })
            .collect(),
        price_path: tl
            .prices
            .iter()
            .enumerate()
            .map(|(j, p)| PriceSegment {
                t_start: times[j],
                t_end: segment_end(times, j),
                implied: p.map(|p| p.implied),
                external: p.map(|p| p.external),
            })
            .collect(),
        swaps: tl.swaps.clone(),
        event_count: tl.event_count,
    };
    serde_json::to_string_pretty(&snap).expect("snapshot serialises")
}

pub fn snapshot_from_json<S: Scalar>(text: &str) -> Result<PoolTimeline<S>, TimelineError> {
    let corrupt = |m: String| TimelineError::CorruptSnapshot(m);
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    let version = raw
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt("missing schema_version".into()))?;
    if version != SCHEMA_VERSION {
        return Err(TimelineError::VersionMismatch {
            found: version,
            supported: SCHEMA_VERSION,
        });
    }
    let snap: Snapshot<S> = serde_json::from_value(raw).map_err(|e| corrupt(e.to_string()))?;
    snap.curve.validate()?;

    let times: Vec<S> = snap.aggregate.iter().map(|a| a.t_start).collect();
    let m = times.len();
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(corrupt("aggregate segments are not increasing".into()));
    }
    let contiguous = |starts: &[(S, S)], expect: usize| {
        starts.len() == expect
            && starts
                .iter()
                .enumerate()
                .all(|(j, (s, e))| *s == times[j] && *e == segment_end(&times, j))
    };
    let agg_spans: Vec<(S, S)> = snap.aggregate.iter().map(|a| (a.t_start, a.t_end)).collect();
    let fee_spans: Vec<(S, S)> = snap.fee_stream.iter().map(|f| (f.t_start, f.t_end)).collect();
    let price_spans: Vec<(S, S)> = snap.price_path.iter().map(|p| (p.t_start, p.t_end)).collect();
    if !contiguous(&agg_spans, m)
        || !contiguous(&fee_spans, m.saturating_sub(1))
        || !contiguous(&price_spans, m)
    {
        return Err(corrupt("segment grids disagree".into()));
    }
    for a in &snap.aggregate {
        a.distribution
            .validate()
            .map_err(|e| corrupt(e.to_string()))?;
    }
    let prices = snap
        .price_path
        .iter()
        .map(|p| match (p.implied, p.external) {
            (Some(implied), Some(external)) => Ok(Some(PricePoint { implied, external })),
            (None, None) => Ok(None),
            _ => Err(corrupt("price segment is half-specified".into())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut positions = std::collections::BTreeMap::new();
    for p in snap.positions {
        for s in &p.segments {
            s.distribution
                .validate()
                .map_err(|e| corrupt(e.to_string()))?;
        }
        if positions.insert(p.position_id.clone(), p).is_some() {
            return Err(corrupt("duplicate position id".into()));
        }
    }
    Ok(PoolTimeline {
        curve: snap.curve,
        times,
        positions,
        aggregate: snap.aggregate.into_iter().map(|a| a.distribution).collect(),
        fee_rates: snap.fee_stream.into_iter().map(|f| f.rate).collect(),
        prices,
        swaps: snap.swaps,
        event_count: snap.event_count,
        zero: LiquidityDistribution::zero(),
    })
}

pub fn snapshot_save<S: Scalar>(tl: &PoolTimeline<S>, path: &Path) -> Result<(), TimelineError> {
    std::fs::write(path, snapshot_to_json(tl)).map_err(|e| TimelineError::Io(e.to_string()))
}

pub fn snapshot_load<S: Scalar>(path: &Path) -> Result<PoolTimeline<S>, TimelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| TimelineError::Io(e.to_string()))?;
    snapshot_from_json(&text)
}
