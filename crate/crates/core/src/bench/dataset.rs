//! Tabular datasets: CSV ingestion, train/test split, noise injection.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rewards::mean_var;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// Column-major features, `x[v][s]`.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    /// All rows are training rows until [`split`](Self::split) is called.
    pub fn new(name: impl Into<String>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Data { line: 0, message: "dataset has no feature columns".into() });
        }
        if x.iter().any(|c| c.len() != y.len()) {
            return Err(Error::Data { line: 0, message: "feature columns and target differ in length".into() });
        }
        if x.iter().flatten().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Data { line: 0, message: "dataset contains non-finite values".into() });
        }
        let train = (0..y.len()).collect();
        Ok(Self { name: name.into(), x, y, train, test: Vec::new() })
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn variables(&self) -> usize {
        self.x.len()
    }

    /// Deterministic shuffled split; `test_fraction` of the rows go to the
    /// test set (at least one row stays in training).
    pub fn split(mut self, test_fraction: f64, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..self.rows()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((self.rows() as f64 * test_fraction).round() as usize).min(self.rows().saturating_sub(1));
        let mut test = idx.split_off(idx.len() - n_test);
        idx.sort_unstable();
        test.sort_unstable();
        self.train = idx;
        self.test = test;
        self
    }

    /// Explicit split by row ranges: the first `n_train` rows train.
    pub fn split_at(mut self, n_train: usize) -> Self {
        let n = self.rows();
        self.train = (0..n_train.min(n)).collect();
        self.test = (n_train.min(n)..n).collect();
        self
    }

    fn gather(&self, rows: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x = self.x.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect();
        let y = rows.iter().map(|&r| self.y[r]).collect();
        (x, y)
    }

    pub fn train_data(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        self.gather(&self.train)
    }

    pub fn test_data(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        self.gather(&self.test)
    }

    /// Population standard deviation of the training targets.
    pub fn sigma_y(&self) -> f64 {
        let y: Vec<f64> = self.train.iter().map(|&r| self.y[r]).collect();
        if y.is_empty() {
            return 0.0;
        }
        mean_var(&y).1.sqrt()
    }

    /// Adds `Normal(0, (level * sigma_y)^2)` noise to the training targets.
    pub fn add_noise(&self, level: f64, seed: u64) -> Result<Self> {
        if !(level >= 0.0) {
            return Err(Error::Config(format!("noise level must be non-negative, got {level}")));
        }
        let mut out = self.clone();
        if level == 0.0 {
            return Ok(out);
        }
        let std = level * self.sigma_y();
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &r in &self.train {
            out.y[r] += normal.sample(&mut rng);
        }
        Ok(out)
    }
}

fn parse_row(record: &csv::StringRecord, line: usize) -> std::result::Result<Vec<f64>, String> {
    record
        .iter()
        .enumerate()
        .map(|(col, cell)| {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| format!("column {}: `{}` is not a number", col + 1, cell.trim()))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("column {}: non-finite value `{}`", col + 1, cell.trim()))
            }
        })
        .collect::<std::result::Result<_, _>>()
        .map_err(|m| format!("line {line}: {m}"))
}

/// Reads a numeric CSV whose last column is the target. A first row that
/// does not parse as numbers is treated as a header.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data").to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) => Error::Data { line: 0, message: format!("{}: {io}", path.display()) },
            _ => Error::Data { line: 0, message: e.to_string() },
        })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Data { line, message: e.to_string() })?;
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let parsed = parse_row(&record, line);
        let row = match parsed {
            Ok(r) => r,
            Err(_) if i == 0 && record.iter().any(|c| c.trim().parse::<f64>().is_err()) => {
                width = Some(record.len());
                continue;
            }
            Err(message) => return Err(Error::Data { line, message }),
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Data { line, message: format!("expected {w} columns, found {}", row.len()) })
            }
            _ => {}
        }
        rows.push(row);
    }
    let width = width.unwrap_or(0);
    if rows.is_empty() || width < 2 {
        return Err(Error::Data { line: 0, message: "need at least one row with a feature and a target column".into() });
    }
    let x = (0..width - 1).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
    let y = rows.iter().map(|r| r[width - 1]).collect();
    Dataset::new(name, x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn plain_numeric_file() {
        let body: String = (0..10).map(|i| format!("{i},{},{}\n", i * 2, i * 3)).collect();
        let d = load_csv(write(&body).path()).unwrap();
        assert_eq!((d.variables(), d.rows()), (2, 10));
        assert_eq!(d.y[4], 12.0);
    }

    #[test]
    fn header_detected() {
        let d = load_csv(write("x1,x2,y\n1,2,3\n4,5,6\n").path()).unwrap();
        assert_eq!((d.variables(), d.rows()), (2, 2));
    }

    #[test]
    fn nan_cell_names_line() {
        let err = load_csv(write("1,2\n3,NaN\n5,6\n").path()).unwrap_err();
        match err {
            Error::Data { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("non-finite"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn ragged_and_text_rejected() {
        assert!(matches!(load_csv(write("1,2\n3,4,5\n").path()), Err(Error::Data { line: 2, .. })));
        assert!(matches!(load_csv(write("1,2\n3,abc\n").path()), Err(Error::Data { line: 2, .. })));
    }

    #[test]
    fn missing_file_is_data_error() {
        assert!(matches!(load_csv(Path::new("/nonexistent/file.csv")), Err(Error::Data { .. })));
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let d = Dataset::new("d", vec![(0..50).map(f64::from).collect()], (0..50).map(f64::from).collect()).unwrap();
        let s = d.split(0.3, 4);
        assert_eq!(s.test.len(), 15);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn noise_only_touches_training_rows() {
        let n = 10_000;
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 2.0 } else { -2.0 }).collect();
        let d = Dataset::new("d", vec![vec![0.0; n]], y).unwrap().split(0.2, 1);
        assert_eq!(d.add_noise(0.0, 3).unwrap(), d);
        let noisy = d.add_noise(0.1, 3).unwrap();
        for &r in &d.test {
            assert_eq!(noisy.y[r].to_bits(), d.y[r].to_bits());
        }
        let eps: Vec<f64> = d.train.iter().map(|&r| noisy.y[r] - d.y[r]).collect();
        let (_, var) = mean_var(&eps);
        let m = eps.len() as f64;
        // sigma_y = 2, so the noise std is 0.2; the sample variance has std ~ sqrt(2/m) var
        assert!((var - 0.04).abs() < 3.0 * 0.04 * (2.0 / m).sqrt(), "{var}");
        assert_eq!(d.add_noise(0.1, 3).unwrap(), noisy);
    }
}
