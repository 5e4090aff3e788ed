//! Whole-experiment orchestration: full two-stage runs and ablation sweeps.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::pipeline::{
    self, MatchData, PrototypeInit, RecognizeData, Stage1Output, Stage2Output,
};
use crate::synth::{self, SyntheticDataset};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub stage1: Stage1Output,
    pub stage2: Stage2Output,
}

/// Runs stage 1 and stage 2 on an already generated dataset.
pub fn run_two_stage(
    dataset: &SyntheticDataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    let match_data = MatchData::from_synthetic(dataset);
    let stage1 = pipeline::stage1_match(&match_data, &cfg.train)?;
    let recognize_data = RecognizeData::from_synthetic(dataset);
    let stage2 = pipeline::stage2_recognize(
        &stage1.encoders,
        &stage1.bank,
        &recognize_data,
        &cfg.recognize_config(),
    )?;
    Ok(ExperimentOutcome { stage1, stage2 })
}

/// The configuration knob an ablation sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Lambda,
    Alpha,
    Filter,
    ProtoInit,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(Self::Lambda),
            "alpha" => Ok(Self::Alpha),
            "filter" => Ok(Self::Filter),
            "proto_init" => Ok(Self::ProtoInit),
            other => Err(Error::InvalidArgument(format!(
                "unknown ablation axis '{other}', expected lambda|alpha|filter|proto_init"
            ))),
        }
    }
}

impl std::fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Lambda => "lambda",
            Self::Alpha => "alpha",
            Self::Filter => "filter",
            Self::ProtoInit => "proto_init",
        };
        write!(f, "{name}")
    }
}

/// Sweep values used when the caller does not supply any.
pub fn default_axis_values(axis: AblationAxis) -> Vec<String> {
    let values: &[&str] = match axis {
        AblationAxis::Lambda => &["0.1", "0.3", "0.5", "0.7", "0.9"],
        AblationAxis::Alpha => &["0.2", "0.4", "0.6", "0.8", "1.0"],
        AblationAxis::Filter => &["on", "off"],
        AblationAxis::ProtoInit => &["anchored", "random"],
    };
    values.iter().map(|v| v.to_string()).collect()
}

fn apply_axis_value(cfg: &mut ExperimentConfig, axis: AblationAxis, value: &str) -> Result<()> {
    match axis {
        AblationAxis::Lambda => {
            cfg.train.loss.lambda = value.parse().map_err(|_| {
                Error::InvalidArgument(format!("invalid lambda value '{value}'"))
            })?;
        }
        AblationAxis::Alpha => {
            cfg.fusion.alpha = value.parse().map_err(|_| {
                Error::InvalidArgument(format!("invalid alpha value '{value}'"))
            })?;
        }
        AblationAxis::Filter => {
            cfg.train.filter_enabled = match value {
                "on" | "true" => true,
                "off" | "false" => false,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "invalid filter value '{other}', expected on|off"
                    )))
                }
            };
        }
        AblationAxis::ProtoInit => {
            cfg.train.prototype_init = value.parse::<PrototypeInit>()?;
        }
    }
    cfg.validate()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub value: String,
    pub report: MetricsReport,
}

/// Runs the full two-stage pipeline once per axis value over a shared
/// dataset and seed, varying only the swept knob. Rows report the fused
/// classifier.
pub fn run_ablation(
    axis: AblationAxis,
    values: &[String],
    base: &ExperimentConfig,
) -> Result<Vec<AblationRow>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    base.validate()?;
    let dataset = synth::generate(&base.data)?;
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = base.clone();
        apply_axis_value(&mut cfg, axis, value)?;
        let outcome = run_two_stage(&dataset, &cfg)?;
        rows.push(AblationRow {
            value: value.clone(),
            report: outcome.stage2.fused,
        });
    }
    Ok(rows)
}

/// Formats an ablation sweep as CSV, axis value in the first column.
pub fn ablation_csv(axis: AblationAxis, rows: &[AblationRow]) -> String {
    let mut out = format!("{axis},{}\n", MetricsReport::csv_header());
    for row in rows {
        out.push_str(&format!("{},{}\n", row.value, row.report.csv_row()));
    }
    out
}
