//! Dataset containers and CSV ingestion.
//!
//! CSV layouts (all with a header row):
//! * categorical: one integer-coded column per feature, codes starting at 1.
//!   A header cell may carry the number of categories as `name:D`; otherwise
//!   D is the largest code seen in that column.
//! * counts: a column named `y`.
//! * regression: a `y` column plus covariate columns. An intercept column is
//!   prepended automatically.

use std::path::Path;

use crate::error::{Error, Result};

/// N×r matrix of categorical codes, stored zero-based and row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalData {
    n_obs: usize,
    cards: Vec<usize>,
    codes: Vec<u16>,
    names: Vec<String>,
}

impl CategoricalData {
    /// `rows` hold one-based codes; `cards[j]` is the number of categories
    /// of feature `j`.
    pub fn new(rows: &[Vec<usize>], cards: Vec<usize>) -> Result<Self> {
        let r = cards.len();
        if r == 0 {
            return Err(Error::Data("categorical data needs at least one feature".into()));
        }
        if let Some(j) = cards.iter().position(|&d| d == 0 || d > u16::MAX as usize) {
            return Err(Error::Data(format!("feature {j} has an invalid number of categories")));
        }
        let mut codes = Vec::with_capacity(rows.len() * r);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != r {
                return Err(Error::Data(format!("row {i} has {} entries, expected {r}", row.len())));
            }
            for (j, &c) in row.iter().enumerate() {
                if c < 1 || c > cards[j] {
                    return Err(Error::Data(format!(
                        "row {i}, feature {j}: code {c} outside 1..={}",
                        cards[j]
                    )));
                }
                codes.push((c - 1) as u16);
            }
        }
        Ok(CategoricalData {
            n_obs: rows.len(),
            names: (1..=r).map(|j| format!("y{j}")).collect(),
            cards,
            codes,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.cards.len() {
            self.names = names;
        }
        self
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_features(&self) -> usize {
        self.cards.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Zero-based codes of observation `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[u16] {
        let r = self.cards.len();
        &self.codes[i * r..(i + 1) * r]
    }

    /// Rows with one-based codes.
    pub fn rows_one_based(&self) -> Vec<Vec<usize>> {
        (0..self.n_obs)
            .map(|i| self.row(i).iter().map(|&c| c as usize + 1).collect())
            .collect()
    }

    /// Rows permuted by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let r = self.cards.len();
        let mut codes = Vec::with_capacity(self.codes.len());
        for &i in order {
            codes.extend_from_slice(&self.codes[i * r..(i + 1) * r]);
        }
        CategoricalData {
            n_obs: order.len(),
            cards: self.cards.clone(),
            codes,
            names: self.names.clone(),
        }
    }
}

/// Univariate counts.
#[derive(Clone, Debug, PartialEq)]
pub struct CountData {
    y: Vec<u64>,
}

impl CountData {
    pub fn new(y: Vec<u64>) -> Self {
        CountData { y }
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn mean(&self) -> f64 {
        if self.y.is_empty() {
            return 0.0;
        }
        self.y.iter().sum::<u64>() as f64 / self.y.len() as f64
    }
}

/// Count outcomes with a covariate matrix whose first column is the intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionData {
    y: Vec<u64>,
    x: Vec<f64>,
    n_cols: usize,
    names: Vec<String>,
}

impl RegressionData {
    /// `covariates[i]` excludes the intercept, which is added here.
    pub fn new(y: Vec<u64>, covariates: &[Vec<f64>]) -> Result<Self> {
        if covariates.len() != y.len() {
            return Err(Error::Data(format!(
                "{} outcomes but {} covariate rows",
                y.len(),
                covariates.len()
            )));
        }
        let p = covariates.first().map_or(0, Vec::len);
        let mut x = Vec::with_capacity(y.len() * (p + 1));
        for (i, row) in covariates.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Data(format!("covariate row {i} has {} entries, expected {p}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("covariate row {i} contains non-finite value {v}")));
            }
            x.push(1.0);
            x.extend_from_slice(row);
        }
        let mut names = vec!["intercept".to_string()];
        names.extend((1..=p).map(|j| format!("x{j}")));
        let data = RegressionData {
            y,
            x,
            n_cols: p + 1,
            names,
        };
        if !data.full_column_rank() {
            log::warn!("covariate matrix is not of full column rank");
        }
        Ok(data)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        if names.len() + 1 == self.n_cols {
            self.names = std::iter::once("intercept".to_string()).chain(names).collect();
        }
        self
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Cholesky test on XᵀX.
    pub fn full_column_rank(&self) -> bool {
        let p = self.n_cols;
        let mut g = vec![0.0; p * p];
        for i in 0..self.n_obs() {
            let r = self.row(i);
            for a in 0..p {
                for b in 0..p {
                    g[a * p + b] += r[a] * r[b];
                }
            }
        }
        let scale = (0..p).map(|a| g[a * p + a]).fold(0.0f64, f64::max).max(1.0);
        let mut l = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..=a {
                let mut s = g[a * p + b];
                for c in 0..b {
                    s -= l[a * p + c] * l[b * p + c];
                }
                if a == b {
                    if s <= 1e-10 * scale {
                        return false;
                    }
                    l[a * p + a] = s.sqrt();
                } else {
                    l[a * p + b] = s / l[b * p + b];
                }
            }
        }
        true
    }
}

/// Any supported dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Categorical(CategoricalData),
    Counts(CountData),
    Regression(RegressionData),
}

impl Dataset {
    pub fn n_obs(&self) -> usize {
        match self {
            Dataset::Categorical(d) => d.n_obs(),
            Dataset::Counts(d) => d.n_obs(),
            Dataset::Regression(d) => d.n_obs(),
        }
    }
}

fn parse_header_cell(cell: &str) -> (String, Option<usize>) {
    match cell.rsplit_once(':') {
        Some((name, d)) => match d.trim().parse::<usize>() {
            Ok(d) => (name.trim().to_string(), Some(d)),
            Err(_) => (cell.trim().to_string(), None),
        },
        None => (cell.trim().to_string(), None),
    }
}

pub fn read_categorical_csv(path: impl AsRef<Path>) -> Result<CategoricalData> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    let headers = rdr.headers()?.clone();
    let parsed: Vec<(String, Option<usize>)> = headers.iter().map(parse_header_cell).collect();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Data(format!("line {}: '{v}' is not a category code", line + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let cards = parsed
        .iter()
        .enumerate()
        .map(|(j, (_, d))| d.unwrap_or_else(|| rows.iter().filter_map(|r| r.get(j)).copied().max().unwrap_or(1)))
        .collect();
    Ok(CategoricalData::new(&rows, cards)?.with_names(parsed.into_iter().map(|p| p.0).collect()))
}

fn parse_count(v: &str, line: usize) -> Result<u64> {
    let t = v.trim();
    if let Ok(c) = t.parse::<u64>() {
        return Ok(c);
    }
    match t.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f.is_finite() => Ok(f as u64),
        _ => Err(Error::Data(format!("line {line}: '{v}' is not a nonnegative count"))),
    }
}

pub fn read_counts_csv(path: impl AsRef<Path>) -> Result<CountData> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == "y")
        .ok_or_else(|| Error::Data("count CSV needs a 'y' column".into()))?;
    let mut y = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        y.push(parse_count(rec.get(col).unwrap_or(""), line + 2)?);
    }
    Ok(CountData::new(y))
}

pub fn read_regression_csv(path: impl AsRef<Path>) -> Result<RegressionData> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    let headers = rdr.headers()?.clone();
    let ycol = headers
        .iter()
        .position(|h| h.trim() == "y")
        .ok_or_else(|| Error::Data("regression CSV needs a 'y' column".into()))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != ycol)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    let mut y = Vec::new();
    let mut xs = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        y.push(parse_count(rec.get(ycol).unwrap_or(""), line + 2)?);
        let row = rec
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != ycol)
            .map(|(_, v)| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("line {}: '{v}' is not a number", line + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        xs.push(row);
    }
    Ok(RegressionData::new(y, &xs)?.with_names(names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn categorical_csv_with_annotations() {
        let p = tmp("M:4,C:3,F\n1,1,1\n4,3,2\n2,2,3\n");
        let d = read_categorical_csv(p.path()).unwrap();
        assert_eq!(d.cards(), &[4, 3, 3]);
        assert_eq!(d.n_obs(), 3);
        assert_eq!(d.row(1), &[3, 2, 1]);
        assert_eq!(d.names(), &["M", "C", "F"]);
    }

    #[test]
    fn categorical_rejects_out_of_range() {
        assert!(CategoricalData::new(&[vec![0, 1]], vec![2, 2]).is_err());
        assert!(CategoricalData::new(&[vec![3, 1]], vec![2, 2]).is_err());
        assert!(CategoricalData::new(&[vec![1]], vec![2, 2]).is_err());
    }

    #[test]
    fn regression_csv_adds_intercept() {
        let p = tmp("y,logl\n3,1.5\n0,2.0\n7,0.3\n");
        let d = read_regression_csv(p.path()).unwrap();
        assert_eq!(d.n_cols(), 2);
        assert_eq!(d.row(2), &[1.0, 0.3]);
        assert_eq!(d.y(), &[3, 0, 7]);
        assert!(d.full_column_rank());
        let collinear = RegressionData::new(vec![1, 2, 3], &[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert!(!collinear.full_column_rank());
    }

    #[test]
    fn count_csv() {
        let p = tmp("id,y\na,3\nb,0\nc,12\n");
        assert_eq!(read_counts_csv(p.path()).unwrap().y(), &[3, 0, 12]);
        let bad = tmp("y\n-1\n");
        assert!(read_counts_csv(bad.path()).is_err());
        let missing = tmp("z\n1\n");
        assert!(read_counts_csv(missing.path()).is_err());
    }
}
