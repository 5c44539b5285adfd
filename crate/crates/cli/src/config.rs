//! Run configuration shared by every subcommand.
//!
//! ```json
//! {"curve": {"kind": "concentrated_v3", "fee_rate": 0.003, "tick_spacing": 60},
//!  "window": {"start": 0.0, "end": 10.0},
//!  "toxicity": "lvr", "sigma": 0.2,
//!  "grid": "grid.json", "out": "reports", "formats": ["json", "csv"]}
//! ```
//!
//! Every field is optional; command-line flags take precedence. Relative
//! paths inside the file resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use flair_core::curve::{CurveKind, CurveSpec};
use flair_core::timeline::Window;

use crate::error::CliError;

pub const DEFAULT_FEE_RATE: f64 = 0.003;
pub const DEFAULT_TICK_SPACING: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ToxicityChoice {
    Lvr,
    Markout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CurveChoice {
    ConstantProduct,
    ConcentratedV3,
}

impl From<CurveChoice> for CurveKind {
    fn from(c: CurveChoice) -> Self {
        match c {
            CurveChoice::ConstantProduct => CurveKind::ConstantProduct,
            CurveChoice::ConcentratedV3 => CurveKind::ConcentratedV3,
        }
    }
}

impl From<CurveKind> for CurveChoice {
    fn from(c: CurveKind) -> Self {
        match c {
            CurveKind::ConstantProduct => CurveChoice::ConstantProduct,
            CurveKind::ConcentratedV3 => CurveChoice::ConcentratedV3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<CurveChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fee_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick_spacing: Option<u32>,
}

impl CurveConfig {
    /// Fields set in `self` win over `base`.
    pub fn or(&self, base: &CurveConfig) -> CurveConfig {
        CurveConfig {
            kind: self.kind.or(base.kind),
            fee_rate: self.fee_rate.or(base.fee_rate),
            tick_spacing: self.tick_spacing.or(base.tick_spacing),
        }
    }

    pub fn build(&self) -> Result<CurveSpec<f64>, CliError> {
        let fee = self.fee_rate.unwrap_or(DEFAULT_FEE_RATE);
        let spec = match self.kind.unwrap_or(CurveChoice::ConcentratedV3) {
            CurveChoice::ConstantProduct => CurveSpec::constant_product(fee)?,
            CurveChoice::ConcentratedV3 => {
                CurveSpec::concentrated(fee, self.tick_spacing.unwrap_or(DEFAULT_TICK_SPACING))?
            }
        };
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub curve: CurveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toxicity: Option<ToxicityChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.grid, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(grid) = &cfg.grid {
            if !grid.exists() {
                return Err(CliError::user(format!(
                    "{}: grid {} does not exist",
                    path.display(),
                    grid.display()
                )));
            }
        }
        if let Some(w) = cfg.window {
            check_window(w).map_err(|e| e.context(path.display()))?;
        }
        Ok(cfg)
    }
}

pub fn check_window(w: Window<f64>) -> Result<(), CliError> {
    if !(w.start.is_finite() && w.end.is_finite() && w.start <= w.end) {
        return Err(CliError::user(format!(
            "window [{}, {}] is not well ordered",
            w.start, w.end
        )));
    }
    Ok(())
}
