//! Observed-data transforms that keep the observed table format.

use std::fmt;

use thiserror::Error;

use crate::stats::{self, StatsError};
use crate::tables::{CellPartition, ObservedRow, ObservedTable, PredictorColumn, TableError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("unknown transform `{0}` (expected identity, mean, median, sd, log or q<p>)")]
    Unknown(String),
    #[error("quantile level {0} must lie strictly inside (0, 1)")]
    QuantileLevel(f64),
    #[error("log of non-positive response {value} at row {row}")]
    LogDomain { row: usize, value: f64 },
    #[error("per-cell transform needs a conditioning partition")]
    MissingPartition,
    #[error("sd of a single-row cell {0:?}")]
    SingleRowSd(Vec<String>),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformKind {
    Identity,
    Mean,
    Median,
    Sd,
    Log,
    Quantile(f64),
}

impl TransformKind {
    pub fn parse(text: &str) -> Result<Self, TransformError> {
        Ok(match text {
            "identity" => TransformKind::Identity,
            "mean" => TransformKind::Mean,
            "median" => TransformKind::Median,
            "sd" => TransformKind::Sd,
            "log" => TransformKind::Log,
            _ => {
                let p: f64 = text
                    .strip_prefix('q')
                    .and_then(|p| p.parse().ok())
                    .ok_or_else(|| TransformError::Unknown(text.to_string()))?;
                if !(p > 0.0 && p < 1.0) {
                    return Err(TransformError::QuantileLevel(p));
                }
                TransformKind::Quantile(p)
            }
        })
    }

    pub fn is_aggregate(self) -> bool {
        !matches!(self, TransformKind::Identity | TransformKind::Log)
    }

    /// Aggregate of one scope unit.
    pub fn aggregate(self, values: &[f64]) -> Result<f64, StatsError> {
        match self {
            TransformKind::Mean => stats::mean(values),
            TransformKind::Median => stats::median(values),
            TransformKind::Sd => stats::sample_sd(values),
            TransformKind::Quantile(p) => Ok(stats::quantiles(values, &[p])?[0]),
            TransformKind::Identity | TransformKind::Log => unreachable!("elementwise transform"),
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformKind::Identity => f.write_str("identity"),
            TransformKind::Mean => f.write_str("mean"),
            TransformKind::Median => f.write_str("median"),
            TransformKind::Sd => f.write_str("sd"),
            TransformKind::Log => f.write_str("log"),
            TransformKind::Quantile(p) => write!(f, "q{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Global,
    PerCell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsTransform {
    pub kind: TransformKind,
    pub scope: Scope,
}

impl ObsTransform {
    pub const IDENTITY: ObsTransform = ObsTransform { kind: TransformKind::Identity, scope: Scope::Global };

    pub fn global(kind: TransformKind) -> Self {
        ObsTransform { kind, scope: Scope::Global }
    }

    pub fn per_cell(kind: TransformKind) -> Self {
        ObsTransform { kind, scope: Scope::PerCell }
    }
}

/// Applies `t` to `obs`. Elementwise transforms keep every row; aggregates
/// collapse each scope unit to one row that keeps only the cell columns.
pub fn apply_transform(
    obs: &ObservedTable,
    t: ObsTransform,
    cells: Option<&CellPartition>,
) -> Result<ObservedTable, TransformError> {
    match t.kind {
        TransformKind::Identity => return Ok(obs.clone()),
        TransformKind::Log => {
            let mut logged = Vec::with_capacity(obs.len());
            for (i, row) in obs.rows().iter().enumerate() {
                if row.response <= 0.0 {
                    return Err(TransformError::LogDomain { row: i + 1, value: row.response });
                }
                logged.push(row.response.ln());
            }
            return Ok(obs.with_responses(&logged)?);
        }
        _ => {}
    }
    let whole;
    let partition = match (t.scope, cells) {
        (Scope::PerCell, Some(p)) => p,
        (Scope::PerCell, None) => return Err(TransformError::MissingPartition),
        (Scope::Global, _) => {
            whole = CellPartition::whole(obs.len());
            &whole
        }
    };
    let keep: Vec<usize> = partition
        .vars
        .iter()
        .map(|v| obs.column_index(&v.name).ok_or_else(|| TableError::MissingColumn(v.name.clone())))
        .collect::<Result<_, _>>()?;
    let schema: Vec<PredictorColumn> = keep.iter().map(|&c| obs.schema()[c].clone()).collect();
    let rows = partition
        .cells
        .iter()
        .map(|cell| {
            let values: Vec<f64> = cell.rows.iter().map(|&i| obs.rows()[i].response).collect();
            if t.kind == TransformKind::Sd && values.len() < 2 {
                return Err(TransformError::SingleRowSd(cell.key.clone()));
            }
            let first = &obs.rows()[cell.rows[0]];
            Ok(ObservedRow {
                response: t.kind.aggregate(&values)?,
                predictors: keep.iter().map(|&c| first.predictors[c].clone()).collect(),
            })
        })
        .collect::<Result<Vec<_>, TransformError>>()?;
    Ok(ObservedTable::new(obs.response_name(), schema, rows)?)
}

/// Known quantity/transform pairs that compare different things, e.g. a
/// spread parameter against an observed mean.
pub fn comparability_warning(quantity: &str, kind: TransformKind) -> Option<String> {
    let spread = matches!(quantity, "sigma" | "phi");
    let location = matches!(quantity, "mu" | "lambda");
    let mismatch = match kind {
        TransformKind::Mean | TransformKind::Median | TransformKind::Quantile(_) => spread,
        TransformKind::Sd => location,
        TransformKind::Identity | TransformKind::Log => spread,
    };
    mismatch
        .then(|| format!("quantity `{quantity}` is not on the scale of the `{kind}` transform of the observed data"))
}
