use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::TimelineError;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Mint,
    Burn,
    Swap,
    PriceMark,
}

/// One line of a pool event log.
///
/// Mint/Burn carry a position id, a tick range and a signed liquidity delta
/// (positive for mints, negative for burns). Swaps carry the total pool fee
/// they paid and the implied price after execution. Any event may carry an
/// external price; when absent it follows the implied price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEvent<S> {
    pub timestamp: S,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick_lower: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick_upper: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liquidity_delta: Option<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fee_amount: Option<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implied_price_after: Option<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_price: Option<S>,
}

impl<S: Scalar> PoolEvent<S> {
    fn bare(timestamp: S, kind: EventKind) -> Self {
        Self {
            timestamp,
            kind,
            position_id: None,
            tick_lower: None,
            tick_upper: None,
            liquidity_delta: None,
            fee_amount: None,
            implied_price_after: None,
            external_price: None,
        }
    }

    pub fn mint(timestamp: S, id: &str, tick_lower: i64, tick_upper: i64, liquidity: S) -> Self {
        Self {
            position_id: Some(id.to_owned()),
            tick_lower: Some(tick_lower),
            tick_upper: Some(tick_upper),
            liquidity_delta: Some(liquidity),
            ..Self::bare(timestamp, EventKind::Mint)
        }
    }

    /// Burn of `liquidity` (given as a positive amount).
    pub fn burn(timestamp: S, id: &str, tick_lower: i64, tick_upper: i64, liquidity: S) -> Self {
        Self {
            position_id: Some(id.to_owned()),
            tick_lower: Some(tick_lower),
            tick_upper: Some(tick_upper),
            liquidity_delta: Some(-liquidity),
            ..Self::bare(timestamp, EventKind::Burn)
        }
    }

    pub fn swap(timestamp: S, fee_amount: S, implied_price_after: S) -> Self {
        Self {
            fee_amount: Some(fee_amount),
            implied_price_after: Some(implied_price_after),
            ..Self::bare(timestamp, EventKind::Swap)
        }
    }

    pub fn price_mark(timestamp: S, implied: Option<S>, external: Option<S>) -> Self {
        Self {
            implied_price_after: implied,
            external_price: external,
            ..Self::bare(timestamp, EventKind::PriceMark)
        }
    }

    pub fn with_external(mut self, external: S) -> Self {
        self.external_price = Some(external);
        self
    }
}

/// Column order of the CSV event format.
pub const CSV_HEADER: [&str; 9] = [
    "timestamp",
    "kind",
    "position_id",
    "tick_lower",
    "tick_upper",
    "liquidity_delta",
    "fee_amount",
    "implied_price_after",
    "external_price",
];

/// Events together with the 1-based source line of each.
#[derive(Debug, Clone)]
pub struct ParsedLog<S> {
    pub events: Vec<PoolEvent<S>>,
    pub lines: Vec<usize>,
}

impl<S> ParsedLog<S> {
    /// Source line of the event at `index`, for diagnostics.
    pub fn line_of(&self, index: usize) -> Option<usize> {
        self.lines.get(index).copied()
    }
}

/// Parses JSON Lines. Blank lines are skipped; unknown fields are ignored.
pub fn parse_jsonl<S: Scalar, R: BufRead>(reader: R) -> Result<ParsedLog<S>, TimelineError> {
    let mut events = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TimelineError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| TimelineError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(event);
        lines.push(i + 1);
    }
    Ok(ParsedLog { events, lines })
}

/// Parses the CSV format; the header must match [`CSV_HEADER`] exactly.
pub fn parse_csv<S: Scalar, R: std::io::Read>(reader: R) -> Result<ParsedLog<S>, TimelineError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| TimelineError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(TimelineError::Parse {
            line: 1,
            message: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut events = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.deserialize() {
        let event: PoolEvent<S> = record.map_err(|e: csv::Error| TimelineError::Parse {
            line: e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(events.len() + 2),
            message: e.to_string(),
        })?;
        events.push(event);
        lines.push(events.len() + 1);
    }
    Ok(ParsedLog { events, lines })
}

pub fn write_jsonl<S: Scalar, W: Write>(events: &[PoolEvent<S>], mut out: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
