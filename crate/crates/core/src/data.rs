//! Unit-level tables and analysis windows.
//!
//! A [`UnitFrame`] holds the running variable, the outcome, covariates and the
//! treatment indicator derived from the cutoff. Frames are immutable once
//! built; every transformation (centering, subsetting) returns a new frame.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("non-numeric value {value:?} at row {row}, column `{column}`")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("missing value at row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("frame has no rows")]
    EmptyFrame,
    #[error("column `{column}` has length {found}, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { row: usize, column: String },
    #[error("binary covariate `{column}` has value {value} at row {row}")]
    NotBinary { row: usize, column: String, value: f64 },
    #[error("window has {n_treated} treated and {n_control} control units; at least 2 of each are required")]
    DegenerateWindow { n_treated: usize, n_control: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("frame has no outcome column")]
    NoOutcome,
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Which side of the cutoff receives treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Direction {
    /// `z = 1` iff `r <= cutoff`.
    #[default]
    TreatedAtOrBelow,
    /// `z = 1` iff `r > cutoff`.
    TreatedAbove,
}

impl Direction {
    #[inline]
    pub fn assign(self, r: f64, cutoff: f64) -> bool {
        match self {
            Direction::TreatedAtOrBelow => r <= cutoff,
            Direction::TreatedAbove => r > cutoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
    pub values: Vec<f64>,
}

impl Covariate {
    /// Builds a covariate, inferring the kind when `kind` is `None`: a column
    /// whose values all lie in {0, 1} is binary.
    pub fn new(name: impl Into<String>, values: Vec<f64>, kind: Option<CovariateKind>) -> Self {
        let kind = kind.unwrap_or_else(|| {
            if values.iter().all(|&v| v == 0.0 || v == 1.0) {
                CovariateKind::Binary
            } else {
                CovariateKind::Continuous
            }
        });
        Covariate {
            name: name.into(),
            kind,
            values,
        }
    }
}

/// Validated unit-level data with the treatment indicator derived from `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitFrame {
    r: Vec<f64>,
    y: Option<Vec<f64>>,
    covariates: Vec<Covariate>,
    z: Vec<bool>,
    cutoff: f64,
    direction: Direction,
}

impl UnitFrame {
    pub fn new(
        r: Vec<f64>,
        y: Option<Vec<f64>>,
        covariates: Vec<Covariate>,
        cutoff: f64,
        direction: Direction,
    ) -> Result<Self, DataError> {
        let n = r.len();
        if n == 0 {
            return Err(DataError::EmptyFrame);
        }
        check_finite("running", &r)?;
        if let Some(y) = &y {
            if y.len() != n {
                return Err(DataError::LengthMismatch {
                    column: "outcome".into(),
                    expected: n,
                    found: y.len(),
                });
            }
            check_finite("outcome", y)?;
        }
        for cov in &covariates {
            if cov.values.len() != n {
                return Err(DataError::LengthMismatch {
                    column: cov.name.clone(),
                    expected: n,
                    found: cov.values.len(),
                });
            }
            check_finite(&cov.name, &cov.values)?;
            if cov.kind == CovariateKind::Binary {
                if let Some((row, &value)) = cov.values.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
                    return Err(DataError::NotBinary {
                        row,
                        column: cov.name.clone(),
                        value,
                    });
                }
            }
        }
        if !cutoff.is_finite() {
            return Err(DataError::NonFinite {
                row: 0,
                column: "cutoff".into(),
            });
        }
        let z = r.iter().map(|&ri| direction.assign(ri, cutoff)).collect();
        Ok(UnitFrame {
            r,
            y,
            covariates,
            z,
            cutoff,
            direction,
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn y(&self) -> Result<&[f64], DataError> {
        self.y.as_deref().ok_or(DataError::NoOutcome)
    }

    pub fn has_outcome(&self) -> bool {
        self.y.is_some()
    }

    pub fn z(&self) -> &[bool] {
        &self.z
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Result<&Covariate, DataError> {
        self.covariates
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| DataError::UnknownCovariate(name.to_string()))
    }

    pub fn n_treated(&self) -> usize {
        self.z.iter().filter(|&&t| t).count()
    }

    /// Returns a frame with the cutoff subtracted from `r` and the cutoff reset to 0.
    pub fn centered(&self) -> UnitFrame {
        let c = self.cutoff;
        let r: Vec<f64> = self.r.iter().map(|&v| v - c).collect();
        let z = r.iter().map(|&ri| self.direction.assign(ri, 0.0)).collect();
        UnitFrame {
            r,
            y: self.y.clone(),
            covariates: self.covariates.clone(),
            z,
            cutoff: 0.0,
            direction: self.direction,
        }
    }

    /// Returns a frame restricted to `indices` (in the given order).
    pub fn subset(&self, indices: &[usize]) -> UnitFrame {
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        UnitFrame {
            r: pick(&self.r),
            y: self.y.as_deref().map(pick),
            covariates: self
                .covariates
                .iter()
                .map(|c| Covariate {
                    name: c.name.clone(),
                    kind: c.kind,
                    values: pick(&c.values),
                })
                .collect(),
            z: indices.iter().map(|&i| self.z[i]).collect(),
            cutoff: self.cutoff,
            direction: self.direction,
        }
    }

    /// Replaces the outcome column.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<UnitFrame, DataError> {
        UnitFrame::new(
            self.r.clone(),
            Some(y),
            self.covariates.clone(),
            self.cutoff,
            self.direction,
        )
    }

    /// Checks that `z` agrees with the cutoff rule on every row.
    pub fn assignment_consistent(&self) -> bool {
        self.r
            .iter()
            .zip(&self.z)
            .all(|(&ri, &zi)| self.direction.assign(ri, self.cutoff) == zi)
    }

    /// Smallest positive gap between distinct running-variable values, if
    /// every gap is an integer multiple of it (a lattice). `None` for data
    /// that does not look discrete.
    pub fn lattice_unit(&self) -> Option<f64> {
        lattice_unit(&self.r)
    }
}

fn check_finite(column: &str, values: &[f64]) -> Result<(), DataError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(row) => Err(DataError::NonFinite {
            row,
            column: column.to_string(),
        }),
        None => Ok(()),
    }
}

/// Detects a running variable supported on a regular lattice with repeated
/// values (e.g. GPAs recorded in hundredths).
pub fn lattice_unit(values: &[f64]) -> Option<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 3 || sorted.len() * 4 > values.len() {
        return None;
    }
    let span = sorted[sorted.len() - 1] - sorted[0];
    let unit = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(unit > 1e-12 * span.max(1.0)) {
        return None;
    }
    let aligned = sorted.windows(2).all(|w| {
        let k = (w[1] - w[0]) / unit;
        (k - k.round()).abs() < 1e-6
    });
    aligned.then_some(unit)
}

/// Removal rule applied inside a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Exclusion {
    /// Units whose running variable equals `value` (within the window's tolerance).
    Value { value: f64 },
    /// Units with `lo <= r <= hi`.
    Interval { lo: f64, hi: f64 },
}

impl Exclusion {
    pub fn matches(&self, r: f64, tolerance: f64) -> bool {
        match *self {
            Exclusion::Value { value } => (r - value).abs() <= tolerance,
            Exclusion::Interval { lo, hi } => r >= lo - tolerance && r <= hi + tolerance,
        }
    }
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exclusion::Value { value } => write!(f, "{value}"),
            Exclusion::Interval { lo, hi } => write!(f, "[{lo},{hi}]"),
        }
    }
}

/// Interval around the cutoff with an exclusion set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub left: f64,
    pub right: f64,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
    /// Tolerance for exact-value exclusions; 0 means bitwise equality.
    #[serde(default)]
    pub tolerance: f64,
    #[serde(default)]
    pub label: String,
}

impl WindowSpec {
    pub fn symmetric(bandwidth: f64) -> Self {
        WindowSpec::new(bandwidth, bandwidth)
    }

    pub fn new(left: f64, right: f64) -> Self {
        WindowSpec {
            left,
            right,
            exclusions: Vec::new(),
            tolerance: 0.0,
            label: String::new(),
        }
    }

    /// A window covering every unit.
    pub fn unbounded() -> Self {
        WindowSpec::new(f64::INFINITY, f64::INFINITY)
    }

    pub fn with_exclusions(mut self, exclusions: impl IntoIterator<Item = Exclusion>) -> Self {
        self.exclusions.extend(exclusions);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.left >= 0.0) || !(self.right >= 0.0) {
            return Err(DataError::InvalidWindow(format!(
                "bandwidths must be nonnegative (left={}, right={})",
                self.left, self.right
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(DataError::InvalidWindow("tolerance must be nonnegative".into()));
        }
        for ex in &self.exclusions {
            if let Exclusion::Interval { lo, hi } = ex {
                if !(lo <= hi) {
                    return Err(DataError::InvalidWindow(format!(
                        "exclusion interval [{lo}, {hi}] is empty"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, r: f64, cutoff: f64) -> bool {
        r >= cutoff - self.left
            && r <= cutoff + self.right
            && !self.exclusions.iter().any(|e| e.matches(r, self.tolerance))
    }

    /// Sorted indices of the units inside the window, without the
    /// treated/control guard.
    pub fn members(&self, frame: &UnitFrame) -> Vec<usize> {
        let c = frame.cutoff();
        frame
            .r()
            .iter()
            .enumerate()
            .filter(|(_, &ri)| self.contains(ri, c))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Index set of a window together with its treated/control counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizedWindow {
    pub indices: Vec<usize>,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
}

impl RealizedWindow {
    /// Fails with `DegenerateWindow` unless both arms have at least two units.
    pub fn ensure_testable(&self) -> Result<&Self, DataError> {
        if self.n_treated < 2 || self.n_control < 2 {
            return Err(DataError::DegenerateWindow {
                n_treated: self.n_treated,
                n_control: self.n_control,
            });
        }
        Ok(self)
    }
}

/// Realizes `window` on `frame`, returning sorted indices and arm counts.
pub fn realize_window(frame: &UnitFrame, window: &WindowSpec) -> Result<RealizedWindow, DataError> {
    window.validate()?;
    let indices = window.members(frame);
    let n_treated = indices.iter().filter(|&&i| frame.z()[i]).count();
    Ok(RealizedWindow {
        n: indices.len(),
        n_control: indices.len() - n_treated,
        n_treated,
        indices,
    })
}

/// Realizes the window and applies the two-per-arm guard every downstream
/// test needs.
pub fn testable_window(frame: &UnitFrame, window: &WindowSpec) -> Result<RealizedWindow, DataError> {
    let realized = realize_window(frame, window)?;
    realized.ensure_testable()?;
    Ok(realized)
}

/// Column names used to read a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub running: String,
    pub outcome: Option<String>,
    #[serde(default)]
    pub covariates: Vec<CovariateColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateColumn {
    pub name: String,
    /// Forced kind; inferred from the values when absent.
    pub kind: Option<CovariateKind>,
}

/// A loaded frame plus the number of rows dropped for missing covariates.
#[derive(Debug, Clone)]
pub struct LoadedFrame {
    pub frame: UnitFrame,
    pub rows_dropped: usize,
}

/// Reads a headed UTF-8 CSV file into a [`UnitFrame`].
///
/// Missing running-variable or outcome cells are errors. Rows with a missing
/// covariate are dropped and counted; nothing is imputed.
pub fn load_frame(
    path: impl AsRef<Path>,
    schema: &ColumnSchema,
    cutoff: f64,
    direction: Direction,
    center: bool,
) -> Result<LoadedFrame, DataError> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| DataError::Io(e.to_string()))?;
    load_frame_from_reader(file, schema, cutoff, direction, center)
}

pub fn load_frame_from_reader<R: std::io::Read>(
    reader: R,
    schema: &ColumnSchema,
    cutoff: f64,
    direction: Direction,
    center: bool,
) -> Result<LoadedFrame, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    let lookup: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col = |name: &str| {
        lookup
            .get(name)
            .copied()
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let r_col = col(&schema.running)?;
    let y_col = schema.outcome.as_deref().map(col).transpose()?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| col(&c.name))
        .collect::<Result<Vec<_>, _>>()?;

    let mut r = Vec::new();
    let mut y = Vec::new();
    let mut covs: Vec<Vec<f64>> = vec![Vec::new(); cov_cols.len()];
    let mut rows_dropped = 0;
    for (row_idx, record) in rdr.records().enumerate() {
        // 1-based data row numbers, header excluded
        let row = row_idx + 1;
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let cell = |idx: usize| record.get(idx).unwrap_or("");
        let ri = parse_required(cell(r_col), row, &schema.running)?;
        let yi = match (y_col, &schema.outcome) {
            (Some(idx), Some(name)) => Some(parse_required(cell(idx), row, name)?),
            _ => None,
        };
        let mut row_covs = Vec::with_capacity(cov_cols.len());
        let mut missing = false;
        for (k, &idx) in cov_cols.iter().enumerate() {
            match parse_optional(cell(idx), row, &schema.covariates[k].name)? {
                Some(v) => row_covs.push(v),
                None => {
                    missing = true;
                    break;
                }
            }
        }
        if missing {
            rows_dropped += 1;
            continue;
        }
        r.push(ri);
        if let Some(yi) = yi {
            y.push(yi);
        }
        for (k, v) in row_covs.into_iter().enumerate() {
            covs[k].push(v);
        }
    }
    if r.is_empty() {
        return Err(DataError::EmptyFrame);
    }
    if rows_dropped > 0 {
        log::warn!("dropped {rows_dropped} rows with missing covariate values");
    }
    let covariates = schema
        .covariates
        .iter()
        .zip(covs)
        .map(|(spec, values)| Covariate::new(spec.name.clone(), values, spec.kind))
        .collect();
    let outcome = schema.outcome.as_ref().map(|_| y);
    let mut frame = UnitFrame::new(r, outcome, covariates, cutoff, direction)?;
    if center {
        frame = frame.centered();
    }
    Ok(LoadedFrame { frame, rows_dropped })
}

/// Writes `frame` as CSV with columns `r`, `y` (when present) and one column
/// per covariate. Values are written in shortest round-trip form, so
/// reading the file back reproduces the frame exactly.
pub fn write_frame<W: std::io::Write>(frame: &UnitFrame, writer: W) -> Result<(), DataError> {
    let csv_err = |e: csv::Error| DataError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["r".to_string()];
    if frame.has_outcome() {
        header.push("y".into());
    }
    header.extend(frame.covariates().iter().map(|c| c.name.clone()));
    w.write_record(&header).map_err(csv_err)?;
    let y = frame.y().ok();
    for i in 0..frame.len() {
        let mut row = vec![frame.r()[i].to_string()];
        if let Some(y) = y {
            row.push(y[i].to_string());
        }
        row.extend(frame.covariates().iter().map(|c| c.values[i].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| DataError::Io(e.to_string()))
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL" | ".")
}

fn parse_required(cell: &str, row: usize, column: &str) -> Result<f64, DataError> {
    parse_optional(cell, row, column)?.ok_or_else(|| DataError::MissingValue {
        row,
        column: column.to_string(),
    })
}

fn parse_optional(cell: &str, row: usize, column: &str) -> Result<Option<f64>, DataError> {
    if is_missing(cell) {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(DataError::NonNumericCell {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}
