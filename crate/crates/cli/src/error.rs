use std::fmt;

use flair_core::backtest::BacktestError;
use flair_core::curve::CurveError;
use flair_core::metrics::MetricError;
use flair_core::scenarios::ScenarioError;
use flair_core::timeline::TimelineError;
use flair_core::toxicity::ToxicityError;

/// A failed command. `User` covers bad input of any kind (exit 2),
/// `Internal` a broken invariant inside the engine (exit 3).
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn user(msg: impl Into<String>) -> Self {
        Self::User(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::User(_) => 2,
            Self::Internal(_) => 3,
        }
    }

    /// Prefixes the message, typically with the offending file.
    pub fn context(self, prefix: impl fmt::Display) -> Self {
        match self {
            Self::User(m) => Self::User(format!("{prefix}: {m}")),
            Self::Internal(m) => Self::Internal(format!("{prefix}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::User(m) => write!(f, "{m}"),
            Self::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn curve_is_internal(e: &CurveError) -> bool {
    matches!(
        e,
        CurveError::InconsistentReserves { .. } | CurveError::TickPrecision { .. }
    )
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        if curve_is_internal(&e) {
            Self::Internal(e.to_string())
        } else {
            Self::User(e.to_string())
        }
    }
}

impl From<TimelineError> for CliError {
    fn from(e: TimelineError) -> Self {
        match e {
            TimelineError::Curve(c) => c.into(),
            other => Self::User(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Curve(c) => c.into(),
            MetricError::Timeline(t) => t.into(),
            // Windows are always produced together by the caller.
            MetricError::WindowMismatch => Self::Internal(e.to_string()),
            other => Self::User(other.to_string()),
        }
    }
}

impl From<ToxicityError> for CliError {
    fn from(e: ToxicityError) -> Self {
        match e {
            ToxicityError::Curve(c) => c.into(),
            ToxicityError::Timeline(t) => t.into(),
            other => Self::User(other.to_string()),
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::Curve(c) => c.into(),
            BacktestError::Timeline(t) => t.into(),
            BacktestError::Toxicity(t) => t.into(),
            other => Self::User(other.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Curve(c) => c.into(),
            other => Self::User(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Internal(format!("serialisation failed: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        let e: CliError = TimelineError::OrphanFee {
            index: 0,
            timestamp: 0.0,
        }
        .into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = MetricError::Curve(CurveError::InconsistentReserves { x: 1.0, y: 2.0 }).into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = MetricError::Timeline(TimelineError::Curve(CurveError::InvalidTickSpacing)).into();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn context_keeps_the_class() {
        let e = CliError::Internal("boom".into()).context("log.jsonl");
        assert_eq!(e.exit_code(), 3);
        assert_eq!(e.to_string(), "internal error: log.jsonl: boom");
    }
}
