//! Confusion-matrix accounting, lower-triangular folding and evaluation scores.
//!
//! Rows index the reference class and columns the predicted class, so the false
//! positives of class `i` are the off-diagonal sum of column `i` and the false
//! negatives the off-diagonal sum of row `i`. Class indices are 1-based throughout.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LabelMap, RgbImage};

/// Default class names, in label order 1..=6.
pub const POTSDAM_CLASSES: [&str; 6] = ["imp_surf", "building", "low_veg", "tree", "car", "clutter"];

pub fn default_class_names(num_classes: usize) -> Vec<String> {
    (1..=num_classes)
        .map(|c| {
            POTSDAM_CLASSES
                .get(c - 1)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("class_{c}"))
        })
        .collect()
}

/// C×C pixel-count table (rows = reference, columns = prediction).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "a confusion matrix needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(Self {
            size: num_classes,
            counts: vec![0; num_classes * num_classes],
            class_names: default_class_names(num_classes),
        })
    }

    /// Builds from row-major rows (rows = reference).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let mut m = Self::zeros(rows.len())?;
        for (r, row) in rows.iter().enumerate() {
            if row.len() != m.size {
                return Err(Error::Shape(format!(
                    "row {} has {} entries, expected {}",
                    r + 1,
                    row.len(),
                    m.size
                )));
            }
            m.counts[r * m.size..(r + 1) * m.size].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.size {
            return Err(Error::Shape(format!(
                "{} class names for {} classes",
                names.len(),
                self.size
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.size
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Count for 1-based `(reference, predicted)`.
    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[(reference - 1) * self.size + predicted - 1]
    }

    pub fn add(&mut self, reference: usize, predicted: usize, count: u64) {
        self.counts[(reference - 1) * self.size + predicted - 1] += count;
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size).map(|i| self.counts[i * self.size + i]).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = self.clone();
        for r in 0..self.size {
            for c in 0..self.size {
                t.counts[c * self.size + r] = self.counts[r * self.size + c];
            }
        }
        t
    }

    /// Elementwise sum; used to accumulate over tiles and images.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.size != self.size {
            return Err(Error::Shape(format!(
                "cannot merge {0}x{0} into {1}x{1}",
                other.size, self.size
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Tallies one more reference/prediction pair of maps.
    pub fn accumulate(&mut self, reference: &LabelMap, prediction: &LabelMap) -> Result<()> {
        check_same_dims(reference, prediction)?;
        reference.validate(self.size)?;
        prediction.validate(self.size)?;
        for (&r, &p) in reference.data().iter().zip(prediction.data()) {
            self.counts[(r as usize - 1) * self.size + p as usize - 1] += 1;
        }
        Ok(())
    }

    /// Whitespace-separated rows, one line per reference class.
    pub fn to_text(&self) -> String {
        matrix_text(&self.counts, self.size)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let rows = parse_matrix_text(text)?;
        Self::from_rows(&rows)
    }
}

pub fn confusion_from_maps(
    reference: &LabelMap,
    prediction: &LabelMap,
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::zeros(num_classes)?;
    m.accumulate(reference, prediction)?;
    Ok(m)
}

fn check_same_dims(a: &LabelMap, b: &LabelMap) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Shape(format!(
            "reference is {}x{} but prediction is {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Symmetrized confusion degree; nonzero only strictly below the diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowerTriangular {
    size: usize,
    weights: Vec<u64>,
}

impl LowerTriangular {
    /// Builds from a full C×C table, rejecting entries on or above the diagonal.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let size = rows.len();
        let mut weights = vec![0; size * size];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::Shape(format!(
                    "row {} has {} entries, expected {size}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &w) in row.iter().enumerate() {
                if j >= i && w != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({}, {}) = {w} is on or above the diagonal",
                        i + 1,
                        j + 1
                    )));
                }
                weights[i * size + j] = w;
            }
        }
        Ok(Self { size, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Weight for 1-based `(i, j)`; zero unless `i > j`.
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.weights[(i - 1) * self.size + j - 1]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.weights.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    pub fn to_text(&self) -> String {
        matrix_text(&self.weights, self.size)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        Self::from_rows(&parse_matrix_text(text)?)
    }
}

/// `b_ij = a_ij + a_ji` for `i > j`, zero elsewhere.
pub fn fold_lower_triangular(m: &ConfusionMatrix) -> LowerTriangular {
    let n = m.size;
    let mut weights = vec![0; n * n];
    for i in 0..n {
        for j in 0..i {
            weights[i * n + j] = m.counts[i * n + j] + m.counts[j * n + i];
        }
    }
    LowerTriangular { size: n, weights }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: usize,
    pub name: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_class: Vec<ClassScore>,
    pub oa: f64,
    pub mean_f1: f64,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn score(m: &ConfusionMatrix) -> Result<ScoreReport> {
    let total = m.total();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "cannot score an empty confusion matrix".into(),
        ));
    }
    let n = m.size;
    let mut per_class = Vec::with_capacity(n);
    for i in 0..n {
        let tp = m.counts[i * n + i];
        let row: u64 = m.counts[i * n..(i + 1) * n].iter().sum();
        let col: u64 = (0..n).map(|r| m.counts[r * n + i]).sum();
        let fp = col - tp;
        let fn_ = row - tp;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassScore {
            class: i + 1,
            name: m.class_names[i].clone(),
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        });
    }
    let mean_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / n as f64;
    Ok(ScoreReport {
        per_class,
        oa: ratio(m.trace(), total),
        mean_f1,
        total,
    })
}

impl ScoreReport {
    /// Plain-text table with an OA / mean F1 footer.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>10} {:>10} {:>10}",
            "class", "precision", "recall", "f1"
        );
        for c in &self.per_class {
            let _ = writeln!(
                s,
                "{:<10} {:>10.4} {:>10.4} {:>10.4}",
                c.name, c.precision, c.recall, c.f1
            );
        }
        let _ = writeln!(s, "OA       {:.4}", self.oa);
        let _ = writeln!(s, "mean F1  {:.4}", self.mean_f1);
        s
    }

    /// One row in the layout of a results table: per-class F1 ×100, then OA and mean F1 ×100.
    pub fn summary_row(&self, label: &str) -> String {
        let mut s = label.to_string();
        for c in &self.per_class {
            let _ = write!(s, "\t{:.1}", c.f1 * 100.0);
        }
        let _ = write!(s, "\t{:.1}\t{:.1}", self.oa * 100.0, self.mean_f1 * 100.0);
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Correct pixels green, wrong pixels red.
pub fn render_error_map(reference: &LabelMap, prediction: &LabelMap) -> Result<RgbImage> {
    check_same_dims(reference, prediction)?;
    let mut data = Vec::with_capacity(reference.data().len() * 3);
    for (r, p) in reference.data().iter().zip(prediction.data()) {
        data.extend_from_slice(if r == p { &[0, 255, 0] } else { &[255, 0, 0] });
    }
    RgbImage::from_vec(reference.height(), reference.width(), data)
}

fn matrix_text(values: &[u64], size: usize) -> String {
    let mut s = String::new();
    for row in values.chunks(size) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Parses a whitespace-separated square matrix of non-negative integers.
pub fn parse_matrix_text(text: &str) -> Result<Vec<Vec<u64>>> {
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<u64>().map_err(|_| Error::Parse {
                    position: line_no + 1,
                    message: format!("line {}: `{tok}` is not a non-negative integer", line_no + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            position: 0,
            message: "empty matrix".into(),
        });
    }
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Parse {
            position: i + 1,
            message: format!("row {} has {} entries, expected {n}", i + 1, r.len()),
        });
    }
    Ok(rows)
}
