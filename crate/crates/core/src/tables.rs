//! Tidy tables for observed data and long-format model draws.
//!
//! Both tables are immutable once built. Predictor values are stored
//! positionally, aligned with the table's predictor schema.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::sampling::QuantityId;

/// Column names owned by the draws format; never valid predictor names.
pub const RESERVED_COLUMNS: [&str; 3] = [".draw", ".row", ".value"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("empty table")]
    Empty,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("column name `{0}` is reserved")]
    ReservedColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("non-finite value `{value}` in column `{column}` at line {line}")]
    NonFinite { column: String, line: usize, value: String },
    #[error("missing value in column `{column}` at line {line}")]
    MissingCell { column: String, line: usize },
    #[error("duplicate draw/row pair ({draw}, {row})")]
    DuplicateDrawRow { draw: usize, row: usize },
    #[error("non-rectangular draws: {0}")]
    NonRectangular(String),
    #[error("predictor values for row {row} differ between draws")]
    InconsistentPredictors { row: usize },
    #[error("invalid index `{value}` in column `{column}` at line {line}")]
    BadIndex { column: String, line: usize, value: String },
    #[error("predictor `{column}`: {message}")]
    BadPredictor { column: String, message: String },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for TableError {
    fn from(e: csv::Error) -> Self {
        TableError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorValue {
    Numeric(f64),
    Categorical(String),
}

impl PredictorValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PredictorValue::Numeric(v) => Some(*v),
            PredictorValue::Categorical(_) => None,
        }
    }

    pub fn as_level(&self) -> Option<&str> {
        match self {
            PredictorValue::Categorical(s) => Some(s),
            PredictorValue::Numeric(_) => None,
        }
    }
}

impl fmt::Display for PredictorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorValue::Numeric(v) => f.write_str(&format_number(*v)),
            PredictorValue::Categorical(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    /// Levels in first-appearance order.
    Categorical {
        levels: Vec<String>,
    },
}

impl ColumnKind {
    pub fn is_numeric(&self) -> bool {
        matches!(self, ColumnKind::Numeric)
    }

    pub fn levels(&self) -> Option<&[String]> {
        match self {
            ColumnKind::Categorical { levels } => Some(levels),
            ColumnKind::Numeric => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictorColumn {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedRow {
    pub response: f64,
    /// Aligned with the table's predictor schema.
    pub predictors: Vec<PredictorValue>,
}

/// Shortest decimal text that parses back to the identical binary64 value.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

fn check_predictor_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<(), TableError> {
    let mut seen = HashSet::new();
    for name in names {
        if RESERVED_COLUMNS.contains(&name) {
            return Err(TableError::ReservedColumn(name.to_string()));
        }
        if !seen.insert(name) {
            return Err(TableError::DuplicateColumn(name.to_string()));
        }
    }
    Ok(())
}

fn check_row_against_schema(
    schema: &[PredictorColumn],
    predictors: &[PredictorValue],
    row: usize,
) -> Result<(), TableError> {
    if predictors.len() != schema.len() {
        return Err(TableError::BadPredictor {
            column: schema.get(predictors.len()).map(|c| c.name.clone()).unwrap_or_default(),
            message: format!("row {row} has {} values for {} columns", predictors.len(), schema.len()),
        });
    }
    for (col, value) in schema.iter().zip(predictors) {
        match (&col.kind, value) {
            (ColumnKind::Numeric, PredictorValue::Numeric(v)) if v.is_finite() => {}
            (ColumnKind::Categorical { levels }, PredictorValue::Categorical(s)) if levels.contains(s) => {}
            _ => {
                return Err(TableError::BadPredictor {
                    column: col.name.clone(),
                    message: format!("row {row} holds `{value}`, which does not fit the column kind"),
                })
            }
        }
    }
    Ok(())
}

/// Infers a column's kind and parses its cells. `line_offset` is the CSV
/// line of the first cell, used in diagnostics.
fn infer_column(
    name: &str,
    cells: &[&str],
    line_offset: usize,
) -> Result<(ColumnKind, Vec<PredictorValue>), TableError> {
    if let Some(i) = cells.iter().position(|c| is_missing(c)) {
        return Err(TableError::MissingCell { column: name.to_string(), line: line_offset + i });
    }
    let numeric: Option<Vec<f64>> = cells.iter().map(|c| parse_finite(c)).collect();
    match numeric {
        Some(values) => Ok((ColumnKind::Numeric, values.into_iter().map(PredictorValue::Numeric).collect())),
        None => {
            let mut levels: Vec<String> = Vec::new();
            let mut seen = HashSet::new();
            for c in cells {
                if seen.insert(*c) {
                    levels.push(c.to_string());
                }
            }
            let values = cells.iter().map(|c| PredictorValue::Categorical(c.to_string())).collect();
            Ok((ColumnKind::Categorical { levels }, values))
        }
    }
}

struct RawCsv {
    headers: Vec<String>,
    records: Vec<Vec<String>>,
}

fn read_raw(csv_text: &str) -> Result<RawCsv, TableError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut records = Vec::new();
    for record in reader.records() {
        records.push(record?.iter().map(str::to_string).collect());
    }
    Ok(RawCsv { headers, records })
}

impl RawCsv {
    fn column(&self, idx: usize) -> Vec<&str> {
        self.records.iter().map(|r| r[idx].as_str()).collect()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Observed data: one response value plus predictor columns per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTable {
    response_name: String,
    schema: Vec<PredictorColumn>,
    rows: Vec<ObservedRow>,
}

impl ObservedTable {
    pub fn new(
        response_name: impl Into<String>,
        schema: Vec<PredictorColumn>,
        rows: Vec<ObservedRow>,
    ) -> Result<Self, TableError> {
        let response_name = response_name.into();
        if rows.is_empty() {
            return Err(TableError::Empty);
        }
        if RESERVED_COLUMNS.contains(&response_name.as_str()) {
            return Err(TableError::ReservedColumn(response_name));
        }
        check_predictor_names(std::iter::once(response_name.as_str()).chain(schema.iter().map(|c| c.name.as_str())))?;
        for (i, row) in rows.iter().enumerate() {
            if !row.response.is_finite() {
                return Err(TableError::NonFinite {
                    column: response_name,
                    line: i + 2,
                    value: row.response.to_string(),
                });
            }
            check_row_against_schema(&schema, &row.predictors, i + 1)?;
        }
        Ok(ObservedTable { response_name, schema, rows })
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn schema(&self) -> &[PredictorColumn] {
        &self.schema
    }

    pub fn rows(&self) -> &[ObservedRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn responses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.response).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&PredictorColumn> {
        self.schema.iter().find(|c| c.name == name)
    }

    pub fn predictor(&self, row: usize, name: &str) -> Option<&PredictorValue> {
        let idx = self.column_index(name)?;
        self.rows.get(row).map(|r| &r.predictors[idx])
    }

    /// Same rows with new response values.
    pub fn with_responses(&self, responses: &[f64]) -> Result<Self, TableError> {
        if responses.len() != self.rows.len() {
            return Err(TableError::NonRectangular(format!(
                "{} responses for {} rows",
                responses.len(),
                self.rows.len()
            )));
        }
        let rows = self
            .rows
            .iter()
            .zip(responses)
            .map(|(r, &y)| ObservedRow { response: y, predictors: r.predictors.clone() })
            .collect();
        ObservedTable::new(self.response_name.clone(), self.schema.clone(), rows)
    }

    /// Rows selected by index, schema unchanged.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self, TableError> {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        ObservedTable::new(self.response_name.clone(), self.schema.clone(), rows)
    }

    /// Partition of row indices by the given categorical columns.
    pub fn partition(&self, vars: &[CellVar]) -> Result<CellPartition, TableError> {
        let n = self.rows.len();
        CellPartition::build(&self.schema, n, |i| &self.rows[i].predictors, vars)
    }

    pub fn to_csv(&self) -> String {
        write_observed(self)
    }
}

/// Parses observed data from CSV text with a header row.
///
/// A predictor column is numeric iff every cell parses as a finite decimal;
/// otherwise it is categorical with levels in first-appearance order.
pub fn read_observed(csv_text: &str, response_name: &str) -> Result<ObservedTable, TableError> {
    read_observed_with_kinds(csv_text, response_name, &[])
}

/// Like [`read_observed`], but the named columns are always categorical.
pub fn read_observed_with_kinds(
    csv_text: &str,
    response_name: &str,
    force_categorical: &[&str],
) -> Result<ObservedTable, TableError> {
    let raw = read_raw(csv_text)?;
    for h in &raw.headers {
        if RESERVED_COLUMNS.contains(&h.as_str()) {
            return Err(TableError::ReservedColumn(h.clone()));
        }
    }
    let response_idx =
        raw.index_of(response_name).ok_or_else(|| TableError::MissingColumn(response_name.to_string()))?;
    if raw.records.is_empty() {
        return Err(TableError::Empty);
    }
    let mut responses = Vec::with_capacity(raw.records.len());
    for (i, cell) in raw.column(response_idx).into_iter().enumerate() {
        if is_missing(cell) {
            return Err(TableError::MissingCell { column: response_name.to_string(), line: i + 2 });
        }
        let v = parse_finite(cell).ok_or_else(|| TableError::NonFinite {
            column: response_name.to_string(),
            line: i + 2,
            value: cell.to_string(),
        })?;
        responses.push(v);
    }
    let (schema, columns) = read_predictor_columns(&raw, &[response_idx], force_categorical)?;
    let rows = responses
        .into_iter()
        .enumerate()
        .map(|(i, y)| ObservedRow { response: y, predictors: columns.iter().map(|c| c[i].clone()).collect() })
        .collect();
    ObservedTable::new(response_name, schema, rows)
}

/// Reads a predictor-only table (new data for prediction). The response
/// column is optional; when absent every response is 0.
pub fn read_predictors(csv_text: &str, response_name: &str) -> Result<ObservedTable, TableError> {
    let raw = read_raw(csv_text)?;
    if raw.index_of(response_name).is_some() {
        return read_observed(csv_text, response_name);
    }
    if raw.records.is_empty() {
        return Err(TableError::Empty);
    }
    let (schema, columns) = read_predictor_columns(&raw, &[], &[])?;
    let rows = (0..raw.records.len())
        .map(|i| ObservedRow { response: 0.0, predictors: columns.iter().map(|c| c[i].clone()).collect() })
        .collect();
    ObservedTable::new(response_name, schema, rows)
}

#[allow(clippy::type_complexity)]
fn read_predictor_columns(
    raw: &RawCsv,
    skip: &[usize],
    force_categorical: &[&str],
) -> Result<(Vec<PredictorColumn>, Vec<Vec<PredictorValue>>), TableError> {
    let mut schema = Vec::new();
    let mut columns = Vec::new();
    for (idx, name) in raw.headers.iter().enumerate() {
        if skip.contains(&idx) {
            continue;
        }
        if RESERVED_COLUMNS.contains(&name.as_str()) {
            return Err(TableError::ReservedColumn(name.clone()));
        }
        let cells = raw.column(idx);
        let (mut kind, mut values) = infer_column(name, &cells, 2)?;
        if kind.is_numeric() && force_categorical.contains(&name.as_str()) {
            let (k, v) = categorical_from_cells(&cells);
            kind = k;
            values = v;
        }
        schema.push(PredictorColumn { name: name.clone(), kind });
        columns.push(values);
    }
    check_predictor_names(schema.iter().map(|c| c.name.as_str()))?;
    Ok((schema, columns))
}

fn categorical_from_cells(cells: &[&str]) -> (ColumnKind, Vec<PredictorValue>) {
    let mut levels: Vec<String> = Vec::new();
    for c in cells {
        if !levels.iter().any(|l| l == c) {
            levels.push(c.to_string());
        }
    }
    (ColumnKind::Categorical { levels }, cells.iter().map(|c| PredictorValue::Categorical(c.to_string())).collect())
}

/// Writes the response column first, then predictors in schema order.
pub fn write_observed(table: &ObservedTable) -> String {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header = vec![table.response_name.clone()];
    header.extend(table.schema.iter().map(|c| c.name.clone()));
    writer.write_record(&header).expect("in-memory csv write");
    for row in &table.rows {
        let mut record = vec![format_number(row.response)];
        record.extend(row.predictors.iter().map(|p| p.to_string()));
        writer.write_record(&record).expect("in-memory csv write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

/// Borrowed view of one row of a [`DrawsTable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawRow<'a> {
    pub draw: usize,
    pub row: usize,
    pub value: f64,
    pub predictors: &'a [PredictorValue],
}

/// Long-format draws of one quantity: `n_draws x n_rows` values.
///
/// Draw and row indices are 1-based. Predictor values are stored once per
/// row index since they are identical across draws.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsTable {
    quantity: QuantityId,
    n_draws: usize,
    n_rows: usize,
    /// Draw-major: `values[(draw - 1) * n_rows + (row - 1)]`.
    values: Vec<f64>,
    schema: Vec<PredictorColumn>,
    row_predictors: Vec<Vec<PredictorValue>>,
}

impl DrawsTable {
    pub fn new(
        quantity: QuantityId,
        n_draws: usize,
        values: Vec<f64>,
        schema: Vec<PredictorColumn>,
        row_predictors: Vec<Vec<PredictorValue>>,
    ) -> Result<Self, TableError> {
        let n_rows = row_predictors.len();
        if n_draws == 0 || n_rows == 0 {
            return Err(TableError::Empty);
        }
        if values.len() != n_draws * n_rows {
            return Err(TableError::NonRectangular(format!(
                "{} values for {n_draws} draws x {n_rows} rows",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(TableError::NonFinite {
                column: ".value".into(),
                line: pos + 2,
                value: values[pos].to_string(),
            });
        }
        check_predictor_names(schema.iter().map(|c| c.name.as_str()))?;
        for (i, p) in row_predictors.iter().enumerate() {
            check_row_against_schema(&schema, p, i + 1)?;
        }
        Ok(DrawsTable { quantity, n_draws, n_rows, values, schema, row_predictors })
    }

    /// Builds draws whose predictor columns are copied from `predictors`.
    pub fn from_observed_predictors(
        quantity: QuantityId,
        n_draws: usize,
        values: Vec<f64>,
        predictors: &ObservedTable,
    ) -> Result<Self, TableError> {
        let row_predictors = predictors.rows().iter().map(|r| r.predictors.clone()).collect();
        DrawsTable::new(quantity, n_draws, values, predictors.schema().to_vec(), row_predictors)
    }

    pub fn quantity(&self) -> &QuantityId {
        &self.quantity
    }

    pub fn with_quantity(mut self, quantity: QuantityId) -> Self {
        self.quantity = quantity;
        self
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn schema(&self) -> &[PredictorColumn] {
        &self.schema
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// 1-based draw and row.
    pub fn value(&self, draw: usize, row: usize) -> f64 {
        self.values[(draw - 1) * self.n_rows + (row - 1)]
    }

    /// All values of one draw (1-based), in row order.
    pub fn draw_values(&self, draw: usize) -> &[f64] {
        let start = (draw - 1) * self.n_rows;
        &self.values[start..start + self.n_rows]
    }

    /// Predictor values for a 1-based row index.
    pub fn row_predictors(&self, row: usize) -> &[PredictorValue] {
        &self.row_predictors[row - 1]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&PredictorColumn> {
        self.schema.iter().find(|c| c.name == name)
    }

    pub fn rows(&self) -> impl Iterator<Item = DrawRow<'_>> + '_ {
        (1..=self.n_draws).flat_map(move |d| {
            (1..=self.n_rows).map(move |i| DrawRow {
                draw: d,
                row: i,
                value: self.value(d, i),
                predictors: self.row_predictors(i),
            })
        })
    }

    /// Keeps the given 1-based draws, relabelled 1..k in the given order.
    pub fn select_draws(&self, draws: &[usize]) -> Result<Self, TableError> {
        let mut values = Vec::with_capacity(draws.len() * self.n_rows);
        for &d in draws {
            if d == 0 || d > self.n_draws {
                return Err(TableError::NonRectangular(format!("draw {d} outside 1..={}", self.n_draws)));
            }
            values.extend_from_slice(self.draw_values(d));
        }
        DrawsTable::new(self.quantity.clone(), draws.len(), values, self.schema.clone(), self.row_predictors.clone())
    }

    /// Same shape with each value replaced by `f(draw, row, value)`.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Result<Self, TableError> {
        let values = self.rows().map(|r| f(r.draw, r.row, r.value)).collect();
        DrawsTable::new(self.quantity.clone(), self.n_draws, values, self.schema.clone(), self.row_predictors.clone())
    }

    /// Partition of 1-based row indices (returned 0-based) by categorical columns.
    pub fn partition(&self, vars: &[CellVar]) -> Result<CellPartition, TableError> {
        CellPartition::build(&self.schema, self.n_rows, |i| &self.row_predictors[i], vars)
    }

    pub fn to_csv(&self) -> String {
        write_draws(self)
    }
}

/// Serializes draws as `.draw,.row,.value,<predictors...>`, sorted by (draw, row).
pub fn write_draws(draws: &DrawsTable) -> String {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<String> = RESERVED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(draws.schema.iter().map(|c| c.name.clone()));
    writer.write_record(&header).expect("in-memory csv write");
    for r in draws.rows() {
        let mut record = vec![r.draw.to_string(), r.row.to_string(), format_number(r.value)];
        record.extend(r.predictors.iter().map(|p| p.to_string()));
        writer.write_record(&record).expect("in-memory csv write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

/// Parses draws written by [`write_draws`]; the quantity defaults to the response.
pub fn read_draws(csv_text: &str) -> Result<DrawsTable, TableError> {
    read_draws_as(csv_text, QuantityId::Response)
}

/// Parses draws and tags them with `quantity` (the CSV format does not carry it).
pub fn read_draws_as(csv_text: &str, quantity: QuantityId) -> Result<DrawsTable, TableError> {
    let raw = read_raw(csv_text)?;
    let idx: Vec<usize> = RESERVED_COLUMNS
        .iter()
        .map(|c| raw.index_of(c).ok_or_else(|| TableError::MissingColumn(c.to_string())))
        .collect::<Result<_, _>>()?;
    if raw.records.is_empty() {
        return Err(TableError::Empty);
    }
    let parse_index = |col: usize, line: usize, cell: &str| -> Result<usize, TableError> {
        cell.parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(|| TableError::BadIndex {
            column: RESERVED_COLUMNS[col].to_string(),
            line,
            value: cell.to_string(),
        })
    };
    let mut entries = Vec::with_capacity(raw.records.len());
    for (i, rec) in raw.records.iter().enumerate() {
        let line = i + 2;
        let draw = parse_index(0, line, &rec[idx[0]])?;
        let row = parse_index(1, line, &rec[idx[1]])?;
        let cell = &rec[idx[2]];
        if is_missing(cell) {
            return Err(TableError::MissingCell { column: ".value".into(), line });
        }
        let value = parse_finite(cell).ok_or_else(|| TableError::NonFinite {
            column: ".value".into(),
            line,
            value: cell.clone(),
        })?;
        entries.push((draw, row, value, i));
    }
    let (schema, columns) = read_predictor_columns(&raw, &idx, &[])?;

    let mut per_draw: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut seen = HashSet::new();
    for &(draw, row, _, _) in &entries {
        if !seen.insert((draw, row)) {
            return Err(TableError::DuplicateDrawRow { draw, row });
        }
        per_draw.entry(draw).or_default().push(row);
    }
    let n_draws = per_draw.len();
    if (1..=n_draws).any(|d| !per_draw.contains_key(&d)) {
        return Err(TableError::NonRectangular("draw indices are not 1..r".into()));
    }
    let n_rows = per_draw[&1].len();
    for d in 1..=n_draws {
        let rows = &per_draw[&d];
        if rows.len() != n_rows {
            return Err(TableError::NonRectangular(format!("draw 1 has {n_rows} rows, draw {d} has {}", rows.len())));
        }
        if rows.iter().any(|&r| r > n_rows) {
            return Err(TableError::NonRectangular(format!("draw {d} has row indices outside 1..={n_rows}")));
        }
    }

    let mut values = vec![0.0; n_draws * n_rows];
    let mut row_predictors: Vec<Option<Vec<PredictorValue>>> = vec![None; n_rows];
    for &(draw, row, value, rec) in &entries {
        values[(draw - 1) * n_rows + (row - 1)] = value;
        let preds: Vec<PredictorValue> = columns.iter().map(|c| c[rec].clone()).collect();
        match &row_predictors[row - 1] {
            Some(existing) if *existing != preds => return Err(TableError::InconsistentPredictors { row }),
            Some(_) => {}
            None => row_predictors[row - 1] = Some(preds),
        }
    }
    let row_predictors = row_predictors.into_iter().map(|p| p.expect("every row index present")).collect();
    DrawsTable::new(quantity, n_draws, values, schema, row_predictors)
}

/// A categorical column used to split rows into cells, with its level order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellVar {
    pub name: String,
    pub levels: Vec<String>,
}

/// One non-empty combination of cell levels and its 0-based row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub key: Vec<String>,
    pub rows: Vec<usize>,
}

/// Rows grouped by a cross-product of categorical columns. Cells are ordered
/// by level order of each column (first column slowest); empty cells are omitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPartition {
    pub vars: Vec<CellVar>,
    pub cells: Vec<Cell>,
}

impl CellPartition {
    /// A single cell holding every row.
    pub fn whole(n_rows: usize) -> Self {
        CellPartition { vars: Vec::new(), cells: vec![Cell { key: Vec::new(), rows: (0..n_rows).collect() }] }
    }

    fn build<'a>(
        schema: &[PredictorColumn],
        n_rows: usize,
        predictors: impl Fn(usize) -> &'a [PredictorValue],
        vars: &[CellVar],
    ) -> Result<Self, TableError> {
        let mut col_idx = Vec::with_capacity(vars.len());
        for v in vars {
            let idx = schema
                .iter()
                .position(|c| c.name == v.name)
                .ok_or_else(|| TableError::MissingColumn(v.name.clone()))?;
            if schema[idx].kind.is_numeric() {
                return Err(TableError::BadPredictor {
                    column: v.name.clone(),
                    message: "cells require a categorical column".into(),
                });
            }
            col_idx.push(idx);
        }
        let mut keyed: Vec<(Vec<usize>, usize)> = Vec::with_capacity(n_rows);
        for i in 0..n_rows {
            let p = predictors(i);
            let mut key = Vec::with_capacity(vars.len());
            for (v, &c) in vars.iter().zip(&col_idx) {
                let level = p[c].as_level().expect("categorical column");
                let pos = v.levels.iter().position(|l| l == level).ok_or_else(|| TableError::BadPredictor {
                    column: v.name.clone(),
                    message: format!("level `{level}` not in the cell level list"),
                })?;
                key.push(pos);
            }
            keyed.push((key, i));
        }
        keyed.sort();
        let mut cells: Vec<Cell> = Vec::new();
        let mut last: Option<Vec<usize>> = None;
        for (key, i) in keyed {
            if last.as_ref() != Some(&key) {
                let names = key.iter().zip(vars).map(|(&k, v)| v.levels[k].clone()).collect();
                cells.push(Cell { key: names, rows: Vec::new() });
                last = Some(key);
            }
            cells.last_mut().expect("pushed above").rows.push(i);
        }
        Ok(CellPartition { vars: vars.to_vec(), cells })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_categorical_predictor() {
        let t = read_observed("y,x\n1,a\n2,b", "y").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.schema()[0].kind, ColumnKind::Categorical { levels: vec!["a".into(), "b".into()] });
    }

    #[test]
    fn reads_single_column() {
        let t = read_observed("y\n1\n", "y").unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.schema().is_empty());
    }

    #[test]
    fn mixed_cells_make_column_categorical() {
        let t = read_observed("y,x\n1,0.5\n2,oops", "y").unwrap();
        assert_eq!(t.schema()[0].kind, ColumnKind::Categorical { levels: vec!["0.5".into(), "oops".into()] });
        assert_eq!(t.rows()[0].predictors[0], PredictorValue::Categorical("0.5".into()));
    }

    #[test]
    fn rejects_bad_observed_inputs() {
        assert_eq!(read_observed("x\n1\n", "y"), Err(TableError::MissingColumn("y".into())));
        assert!(matches!(read_observed("y\ninf\n", "y"), Err(TableError::NonFinite { .. })));
        assert!(matches!(read_observed("y,.draw\n1,2\n", "y"), Err(TableError::ReservedColumn(_))));
        assert_eq!(read_observed("y\n", "y"), Err(TableError::Empty));
        assert!(matches!(read_observed("y,x\n1,NA\n", "y"), Err(TableError::MissingCell { .. })));
        assert!(matches!(read_observed("y,x\n1,\n", "y"), Err(TableError::MissingCell { .. })));
    }

    #[test]
    fn rfc4180_quoting() {
        let t = read_observed("y,name\n1,\"a,b\"\n2,\"say \"\"hi\"\"\"\n", "y").unwrap();
        assert_eq!(t.predictor(0, "name"), Some(&PredictorValue::Categorical("a,b".into())));
        let back = read_observed(&t.to_csv(), "y").unwrap();
        assert_eq!(back, t);
    }

    fn one_by_one() -> DrawsTable {
        DrawsTable::new(QuantityId::Response, 1, vec![2.0], vec![], vec![vec![]]).unwrap()
    }

    #[test]
    fn writes_minimal_draws() {
        assert_eq!(write_draws(&one_by_one()), ".draw,.row,.value\n1,1,2\n");
    }

    #[test]
    fn writes_r_times_n_lines() {
        let d =
            DrawsTable::new(QuantityId::Response, 2, vec![1.0, 2.0, 3.0, 4.0], vec![], vec![vec![], vec![]]).unwrap();
        let text = write_draws(&d);
        assert_eq!(text.lines().count(), 1 + 4);
        assert_eq!(read_draws(&text).unwrap(), d);
    }

    #[test]
    fn read_draws_errors() {
        let dup = ".draw,.row,.value\n1,1,0\n1,1,2\n";
        let err = read_draws(dup).unwrap_err();
        assert!(err.to_string().contains("duplicate draw/row"), "{err}");
        let ragged = ".draw,.row,.value\n1,1,0\n1,2,0\n2,1,0\n2,2,0\n2,3,0\n";
        let err = read_draws(ragged).unwrap_err();
        assert!(err.to_string().contains("non-rectangular draws"), "{err}");
        assert!(matches!(read_draws(".draw,.value\n1,1\n"), Err(TableError::MissingColumn(_))));
        let inconsistent = ".draw,.row,.value,g\n1,1,0,a\n2,1,0,b\n";
        assert_eq!(read_draws(inconsistent), Err(TableError::InconsistentPredictors { row: 1 }));
    }

    #[test]
    fn read_draws_accepts_unsorted_rows() {
        let text = ".draw,.row,.value,g\n2,1,3,a\n1,2,2,b\n1,1,1,a\n2,2,4,b\n";
        let d = read_draws(text).unwrap();
        assert_eq!(d.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.row_predictors(2), &[PredictorValue::Categorical("b".into())]);
    }

    #[test]
    fn partition_follows_level_order() {
        let t = read_observed("y,g\n1,b\n2,a\n3,b\n", "y").unwrap();
        let var = CellVar { name: "g".into(), levels: vec!["a".into(), "b".into(), "c".into()] };
        let p = t.partition(&[var]).unwrap();
        assert_eq!(p.cells.len(), 2);
        assert_eq!(p.cells[0].key, vec!["a".to_string()]);
        assert_eq!(p.cells[0].rows, vec![1]);
        assert_eq!(p.cells[1].rows, vec![0, 2]);
    }

    #[test]
    fn partition_rejects_numeric_column() {
        let t = read_observed("y,x\n1,2\n", "y").unwrap();
        let var = CellVar { name: "x".into(), levels: vec![] };
        assert!(t.partition(&[var]).is_err());
    }
}
