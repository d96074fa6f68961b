//! Matrix- and scalar-valued paths on a time grid, with CSV/JSON exchange.
//!
//! CSV layout: a header row `t,x_1_1,x_1_2,…,x_m_m` followed by one row per
//! grid node holding the time and the row-major upper triangle of the matrix.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid;
use crate::matrix::SymMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdPath {
    pub grid: Vec<f64>,
    pub values: Vec<SymMatrix>,
}

impl SpdPath {
    pub fn new(grid: Vec<f64>, values: Vec<SymMatrix>) -> Result<Self> {
        grid::validate(&grid)?;
        if grid.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} grid nodes but {} values",
                grid.len(),
                values.len()
            )));
        }
        let dim = values[0].dim();
        if let Some(k) = values.iter().position(|v| v.dim() != dim) {
            return Err(Error::GridMismatch(format!(
                "value {k} has dim {}, expected {dim}",
                values[k].dim()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> SymMatrix) -> Result<Self> {
        let values = grid.iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("validated grid")
    }

    /// Entry `(i, j)` as a scalar path.
    pub fn component(&self, i: usize, j: usize) -> ScalarPath {
        ScalarPath {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.get(i, j)).collect(),
        }
    }

    /// Trace path `t ↦ Tr(φ(t))`.
    pub fn trace(&self) -> ScalarPath {
        ScalarPath {
            grid: self.grid.clone(),
            values: self.values.iter().map(SymMatrix::trace).collect(),
        }
    }

    /// Eigenvalue paths, largest first.
    pub fn eigenvalue_paths(&self) -> Vec<ScalarPath> {
        let m = self.dim();
        let mut out: Vec<ScalarPath> = (0..m)
            .map(|_| ScalarPath {
                grid: self.grid.clone(),
                values: Vec::with_capacity(self.len()),
            })
            .collect();
        for v in &self.values {
            let ev = v.eigenvalues();
            for (i, path) in out.iter_mut().enumerate() {
                path.values.push(ev[m - 1 - i]);
            }
        }
        out
    }

    pub fn conjugate(&self, q: &nalgebra::DMatrix<f64>) -> SpdPath {
        SpdPath {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.conjugate(q)).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        matrix_series_csv(&self.grid, &self.values, "x")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (grid, values) = parse_matrix_series_csv(text)?;
        Self::new(grid, values)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SpdPath = serde_json::from_str(text)?;
        Self::new(raw.grid, raw.values)
    }

    /// Reads a path from a `.csv` or `.json` file (by extension).
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::from_csv(&text),
            _ => Self::from_json(&text),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => self.to_csv(),
            _ => self.to_json()?,
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarPath {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl ScalarPath {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        grid::validate(&grid)?;
        if grid.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} grid nodes but {} values",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("validated path")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,y\n");
        for (t, y) in self.grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{t:e},{y:e}");
        }
        out
    }
}

/// Diagonal matrix path built from scalar component paths on a common grid.
pub fn diagonal_path(components: &[ScalarPath]) -> Result<SpdPath> {
    let first = components
        .first()
        .ok_or_else(|| Error::Domain("need at least one component".into()))?;
    if components.iter().any(|c| c.grid != first.grid) {
        return Err(Error::GridMismatch("component grids differ".into()));
    }
    let values = (0..first.len())
        .map(|k| {
            let d: Vec<f64> = components.iter().map(|c| c.values[k]).collect();
            SymMatrix::from_diagonal(&d)
        })
        .collect();
    SpdPath::new(first.grid.clone(), values)
}

pub(crate) fn matrix_series_csv(grid: &[f64], values: &[SymMatrix], prefix: &str) -> String {
    let m = values.first().map_or(1, SymMatrix::dim);
    let mut out = String::from("t");
    for i in 1..=m {
        for j in i..=m {
            let _ = write!(out, ",{prefix}_{i}_{j}");
        }
    }
    out.push('\n');
    for (t, v) in grid.iter().zip(values) {
        let _ = write!(out, "{t:e}");
        for x in v.upper_triangle() {
            let _ = write!(out, ",{x:e}");
        }
        out.push('\n');
    }
    out
}

pub(crate) fn parse_matrix_series_csv(text: &str) -> Result<(Vec<f64>, Vec<SymMatrix>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        field: "header".into(),
        message: "empty file".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"t") {
        return Err(Error::Parse {
            line: 1,
            field: "t".into(),
            message: "first column must be `t`".into(),
        });
    }
    let entries = columns.len() - 1;
    let dim = (1..=64)
        .find(|d| d * (d + 1) / 2 == entries)
        .ok_or_else(|| Error::Parse {
            line: 1,
            field: "header".into(),
            message: format!("{entries} matrix columns is not a triangular number"),
        })?;
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(Error::Parse {
                line: line_no,
                field: "row".into(),
                message: format!("expected {} cells, found {}", columns.len(), cells.len()),
            });
        }
        let mut nums = Vec::with_capacity(cells.len());
        for (cell, name) in cells.iter().zip(&columns) {
            nums.push(cell.parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                field: (*name).to_string(),
                message: e.to_string(),
            })?);
        }
        grid.push(nums[0]);
        values.push(SymMatrix::from_upper_triangle(dim, &nums[1..])?);
    }
    Ok((grid, values))
}
