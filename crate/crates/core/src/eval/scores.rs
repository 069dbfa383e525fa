//! Score matrices and their tabular interchange file.
//!
//! The file has one row per `(method, point, eval seed)`:
//!
//! ```text
//! method,task,point_index,<feature...>,seed,raw,normalized,failed
//! ```
//!
//! It is what `approx` and `reporting` consume, and the injection point for
//! scores computed elsewhere.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::family::parse_field;
use crate::{Error, MetricDirection, Result};

/// One method on one point MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub seeds: Vec<u64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub failed: bool,
}

impl Cell {
    pub fn raw_mean(&self) -> f64 {
        mean(&self.raw)
    }

    /// The realized score `s_{R,i}`: the mean of the per-seed normalized values.
    pub fn score(&self) -> f64 {
        mean(&self.normalized)
    }

    pub fn is_usable(&self) -> bool {
        !self.failed && self.score().is_finite()
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// All cells of one method; `None` marks a point that was never evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub method: String,
    pub cells: Vec<Option<Cell>>,
}

impl ScoreRow {
    /// Points that are missing or failed.
    pub fn unusable(&self) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.as_ref().is_some_and(Cell::is_usable))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.unusable().is_empty()
    }

    /// Normalized scores for every point, or the list of unusable points.
    pub fn scores(&self) -> Result<Vec<f64>> {
        let missing = self.unusable();
        if !missing.is_empty() {
            return Err(Error::IncompleteScores {
                method: self.method.clone(),
                missing,
            });
        }
        Ok(self
            .cells
            .iter()
            .map(|c| c.as_ref().expect("checked").score())
            .collect())
    }

    pub fn score_at(&self, index: usize) -> Option<f64> {
        self.cells
            .get(index)?
            .as_ref()
            .filter(|c| c.is_usable())
            .map(Cell::score)
    }
}

/// Scores of several methods over one family.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub task: String,
    pub direction: MetricDirection,
    pub feature_names: Vec<String>,
    pub taus: Vec<Vec<f64>>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreMatrix {
    pub fn new(
        task: impl Into<String>,
        direction: MetricDirection,
        feature_names: Vec<String>,
        taus: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            task: task.into(),
            direction,
            feature_names,
            taus,
            rows: Vec::new(),
        }
    }

    pub fn family_size(&self) -> usize {
        self.taus.len()
    }

    pub fn methods(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.method.as_str()).collect()
    }

    pub fn row(&self, method: &str) -> Result<&ScoreRow> {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .ok_or_else(|| Error::UnknownMethod(method.to_string()))
    }

    /// Inserts or replaces a method's row.
    pub fn set_row(&mut self, row: ScoreRow) -> Result<()> {
        if row.cells.len() != self.family_size() {
            return Err(Error::SizeMismatch(format!(
                "row for `{}` has {} cells, family has {}",
                row.method,
                row.cells.len(),
                self.family_size()
            )));
        }
        match self.rows.iter_mut().find(|r| r.method == row.method) {
            Some(r) => *r = row,
            None => self.rows.push(row),
        }
        Ok(())
    }

    /// `M x methods` normalized scores; errors if any row is incomplete.
    pub fn score_table(&self) -> Result<Vec<Vec<f64>>> {
        self.rows.iter().map(ScoreRow::scores).collect()
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["method", "task", "point_index"].map(String::from).to_vec();
        header.extend(self.feature_names.iter().cloned());
        header.extend(["seed", "raw", "normalized", "failed"].map(String::from));
        w.write_record(&header)?;
        for row in &self.rows {
            for (i, cell) in row.cells.iter().enumerate() {
                let Some(cell) = cell else { continue };
                for k in 0..cell.seeds.len() {
                    let mut rec = vec![row.method.clone(), self.task.clone(), i.to_string()];
                    rec.extend(self.taus[i].iter().map(|v| v.to_string()));
                    rec.push(cell.seeds[k].to_string());
                    rec.push(cell.raw[k].to_string());
                    rec.push(cell.normalized[k].to_string());
                    rec.push(cell.failed.to_string());
                    w.write_record(&rec)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a score file. Methods keep their order of first appearance;
    /// `family_size` fixes the row length (points absent from the file are
    /// missing cells).
    pub fn read<R: Read>(input: R, direction: MetricDirection, family_size: Option<usize>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let n = header.len();
        if n < 7
            || header[..3] != ["method", "task", "point_index"]
            || header[n - 4..] != ["seed", "raw", "normalized", "failed"]
        {
            return Err(Error::Parse(
                "score file header must be method,task,point_index,<features...>,seed,raw,normalized,failed".into(),
            ));
        }
        let feature_names = header[3..n - 4].to_vec();
        let n_feat = feature_names.len();

        let mut task: Option<String> = None;
        let mut order: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), Cell> = BTreeMap::new();
        let mut taus: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for rec in r.records() {
            let rec = rec?;
            let method = rec.get(0).unwrap_or_default().to_string();
            let t = rec.get(1).unwrap_or_default();
            match &task {
                None => task = Some(t.to_string()),
                Some(prev) if prev != t => {
                    return Err(Error::Parse(format!("score file mixes tasks `{prev}` and `{t}`")))
                }
                _ => {}
            }
            let point: usize = parse_field(&rec, 2)?;
            let tau = (0..n_feat)
                .map(|c| parse_field(&rec, 3 + c))
                .collect::<Result<Vec<f64>>>()?;
            if let Some(prev) = taus.insert(point, tau.clone()) {
                if prev != tau {
                    return Err(Error::Parse(format!("point {point} appears with two context vectors")));
                }
            }
            let m = match order.iter().position(|x| *x == method) {
                Some(m) => m,
                None => {
                    order.push(method);
                    order.len() - 1
                }
            };
            let seed: u64 = parse_field(&rec, n - 4)?;
            let raw: f64 = parse_field(&rec, n - 3)?;
            let normalized: f64 = parse_field(&rec, n - 2)?;
            let failed: bool = parse_field(&rec, n - 1)?;
            let cell = cells.entry((m, point)).or_insert_with(|| Cell {
                seeds: Vec::new(),
                raw: Vec::new(),
                normalized: Vec::new(),
                failed: false,
            });
            cell.seeds.push(seed);
            cell.raw.push(raw);
            cell.normalized.push(normalized);
            cell.failed |= failed;
        }

        let size = match family_size {
            Some(s) => s,
            None => taus.keys().next_back().map_or(0, |k| k + 1),
        };
        if let Some((&k, _)) = taus.iter().next_back() {
            if k >= size {
                return Err(Error::SizeMismatch(format!("point index {k} outside family of {size}")));
            }
        }
        let dense_taus = (0..size)
            .map(|i| taus.get(&i).cloned().unwrap_or_else(|| vec![f64::NAN; n_feat]))
            .collect();
        let mut rows: Vec<ScoreRow> = order
            .iter()
            .map(|m| ScoreRow {
                method: m.clone(),
                cells: vec![None; size],
            })
            .collect();
        for ((m, i), c) in cells {
            rows[m].cells[i] = Some(c);
        }
        Ok(Self {
            task: task.unwrap_or_default(),
            direction,
            feature_names,
            taus: dense_taus,
            rows,
        })
    }
}
