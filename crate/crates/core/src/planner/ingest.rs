use std::collections::BTreeSet;
use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, LinkFunction, OutcomeKind, VarianceFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// One CSV column entering the design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub column: String,
    pub kind: ColumnKind,
    /// Categorical levels in dummy order. Sorted distinct values when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    /// Reference level, required for categorical columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl ColumnSpec {
    pub fn numeric(column: &str) -> Self {
        Self {
            column: column.into(),
            kind: ColumnKind::Numeric,
            levels: None,
            reference: None,
        }
    }

    pub fn categorical(column: &str, levels: &[&str], reference: &str) -> Self {
        Self {
            column: column.into(),
            kind: ColumnKind::Categorical,
            levels: Some(levels.iter().map(|s| s.to_string()).collect()),
            reference: Some(reference.into()),
        }
    }
}

fn default_missing() -> Vec<String> {
    vec![String::new(), "NA".into()]
}

/// Sidecar mapping from CSV columns to the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotMapping {
    pub outcome: String,
    pub outcome_kind: OutcomeKind,
    pub link: LinkFunction,
    pub variance: VarianceFunction,
    pub predictors: Vec<ColumnSpec>,
    #[serde(default)]
    pub adjustors: Vec<ColumnSpec>,
    /// Cell values treated as missing, compared after trimming.
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
}

/// Parsed pilot data with column names for Z (intercept first) and X.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotData {
    pub dataset: Dataset,
    pub z_names: Vec<String>,
    pub x_names: Vec<String>,
    pub rows_read: usize,
    /// Rows dropped for a missing value in any mapped column.
    pub rows_dropped: usize,
}

struct Encoder {
    index: usize,
    kind: ColumnKind,
    /// Non-reference levels, one dummy each.
    dummies: Vec<String>,
    reference: Option<String>,
}

impl Encoder {
    fn width(&self) -> usize {
        match self.kind {
            ColumnKind::Numeric => 1,
            ColumnKind::Categorical => self.dummies.len(),
        }
    }

    fn names(&self, column: &str) -> Vec<String> {
        match self.kind {
            ColumnKind::Numeric => vec![column.to_string()],
            ColumnKind::Categorical => self.dummies.iter().map(|l| format!("{column}={l}")).collect(),
        }
    }

    fn encode(&self, cell: &str, column: &str, line: usize, out: &mut Vec<f64>) -> Result<()> {
        match self.kind {
            ColumnKind::Numeric => {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::InvalidInput(format!("line {line}: column {column}: {cell:?} is not a number"))
                })?;
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "line {line}: column {column}: non-finite value"
                    )));
                }
                out.push(v);
            }
            ColumnKind::Categorical => {
                if self.reference.as_deref() == Some(cell) {
                    out.extend(std::iter::repeat_n(0.0, self.dummies.len()));
                } else if let Some(k) = self.dummies.iter().position(|l| l == cell) {
                    out.extend((0..self.dummies.len()).map(|j| if j == k { 1.0 } else { 0.0 }));
                } else {
                    return Err(Error::InvalidInput(format!(
                        "line {line}: column {column}: unknown level {cell:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn encoder(spec: &ColumnSpec, headers: &[String], rows: &[Vec<String>], missing: &[String]) -> Result<Encoder> {
    let index = headers
        .iter()
        .position(|h| h == &spec.column)
        .ok_or_else(|| Error::InvalidInput(format!("column {:?} not found in CSV header", spec.column)))?;
    match spec.kind {
        ColumnKind::Numeric => Ok(Encoder {
            index,
            kind: ColumnKind::Numeric,
            dummies: Vec::new(),
            reference: None,
        }),
        ColumnKind::Categorical => {
            let reference = spec.reference.clone().ok_or_else(|| {
                Error::InvalidInput(format!("categorical column {:?} needs a reference level", spec.column))
            })?;
            let levels = match &spec.levels {
                Some(l) => l.clone(),
                None => rows
                    .iter()
                    .map(|r| r[index].clone())
                    .filter(|c| !missing.contains(c))
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            };
            if !levels.contains(&reference) {
                return Err(Error::InvalidInput(format!(
                    "reference level {reference:?} is not a level of {:?}",
                    spec.column
                )));
            }
            let dummies: Vec<String> = levels.into_iter().filter(|l| l != &reference).collect();
            if dummies.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "categorical column {:?} has no non-reference level",
                    spec.column
                )));
            }
            Ok(Encoder {
                index,
                kind: ColumnKind::Categorical,
                dummies,
                reference: Some(reference),
            })
        }
    }
}

/// Reads a pilot CSV with a header row and encodes it per `mapping`.
pub fn read_pilot<R: Read>(input: R, mapping: &PilotMapping) -> Result<PilotData> {
    if mapping.predictors.is_empty() {
        return Err(Error::InvalidInput("mapping declares no predictors".into()));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    let missing = &mapping.missing;
    let y_index = headers
        .iter()
        .position(|h| h == &mapping.outcome)
        .ok_or_else(|| Error::InvalidInput(format!("outcome column {:?} not found", mapping.outcome)))?;
    let adj: Vec<Encoder> = mapping
        .adjustors
        .iter()
        .map(|c| encoder(c, &headers, &rows, missing))
        .collect::<Result<_>>()?;
    let pred: Vec<Encoder> = mapping
        .predictors
        .iter()
        .map(|c| encoder(c, &headers, &rows, missing))
        .collect::<Result<_>>()?;
    let r = 1 + adj.iter().map(Encoder::width).sum::<usize>();
    let p = pred.iter().map(Encoder::width).sum::<usize>();

    let used: Vec<usize> = std::iter::once(y_index)
        .chain(adj.iter().map(|e| e.index))
        .chain(pred.iter().map(|e| e.index))
        .collect();
    let (mut y, mut z, mut x) = (Vec::new(), Vec::new(), Vec::new());
    let mut dropped = 0;
    for (i, row) in rows.iter().enumerate() {
        // header is line 1
        let line = i + 2;
        if used.iter().any(|&j| missing.contains(&row[j])) {
            dropped += 1;
            continue;
        }
        let yv: f64 = row[y_index]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {line}: outcome {:?} is not a number", row[y_index])))?;
        y.push(yv);
        z.push(1.0);
        for (e, c) in adj.iter().zip(&mapping.adjustors) {
            e.encode(&row[e.index], &c.column, line, &mut z)?;
        }
        for (e, c) in pred.iter().zip(&mapping.predictors) {
            e.encode(&row[e.index], &c.column, line, &mut x)?;
        }
    }
    let n = y.len();
    let dataset = Dataset::new(
        y,
        DMatrix::from_row_slice(n, r, &z),
        DMatrix::from_row_slice(n, p, &x),
        mapping.outcome_kind,
    )?;
    let mut z_names = vec!["(intercept)".to_string()];
    for (e, c) in adj.iter().zip(&mapping.adjustors) {
        z_names.extend(e.names(&c.column));
    }
    let x_names = pred
        .iter()
        .zip(&mapping.predictors)
        .flat_map(|(e, c)| e.names(&c.column))
        .collect();
    Ok(PilotData {
        dataset,
        z_names,
        x_names,
        rows_read: rows.len(),
        rows_dropped: dropped,
    })
}
