use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetKind};
use crate::error::{Error, Result};

/// Layout of an input CSV file. Both layouts start with a header row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsvSchema {
    /// `d` feature columns followed by one target column.
    Tabular,
    /// A single value per row, in time order.
    TimeSeries,
}

/// Reads a dataset from a headed CSV file.
pub fn load_csv_dataset(path: impl AsRef<Path>, schema: CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let csv_err = |line: u64, message: String| Error::Csv {
        path: display.clone(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => csv_err(1, format!("{other:?}")),
        })?;
    let header_len = reader.headers().map_err(|e| csv_err(1, e.to_string()))?.len();
    if header_len == 0 {
        return Err(csv_err(1, "file is empty".into()));
    }
    let expected = match schema {
        CsvSchema::TimeSeries => {
            if header_len != 1 {
                return Err(csv_err(
                    1,
                    format!("time-series file must have exactly one column, header has {header_len}"),
                ));
            }
            1
        }
        CsvSchema::Tabular => {
            if header_len < 2 {
                return Err(csv_err(
                    1,
                    "tabular file needs at least one feature column and a target column".into(),
                ));
            }
            header_len
        }
    };

    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != expected {
            return Err(csv_err(
                line,
                format!("expected {expected} fields, found {}", record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| csv_err(line, format!("column {}: '{cell}' is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(csv_err(line, format!("column {}: non-finite value", col + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(csv_err(2, "file has a header but no data rows".into()));
    }

    match schema {
        CsvSchema::TimeSeries => Dataset::time_series(DVector::from_vec(values)),
        CsvSchema::Tabular => {
            let all = DMatrix::from_row_slice(rows, expected, &values);
            let inputs = all.columns(0, expected - 1).into_owned();
            let targets = all.column(expected - 1).into_owned();
            Dataset::tabular(inputs, targets)
        }
    }
}

/// `ln(y − 260)` applied elementwise.
pub fn ozone_transform(y: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some((index, &value)) = y.iter().enumerate().find(|(_, &v)| !(v > 260.0)) {
        return Err(Error::Domain {
            what: "the ozone transform ln(y − 260)",
            index,
            value,
        });
    }
    Ok(y.map(|v| (v - 260.0).ln()))
}

/// Splits into `(train, test)` with `n_train` rows in the first part.
///
/// Time series are split into a prefix and suffix. Tabular rows are
/// assigned by a permutation drawn from `seed`.
pub fn split_dataset(data: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let m = data.len();
    if n_train == 0 || n_train >= m {
        return Err(Error::InvalidInput(format!(
            "training size must be in 1..{m}, got {n_train}"
        )));
    }
    let order: Vec<usize> = match data.kind() {
        DatasetKind::TimeSeries => (0..m).collect(),
        DatasetKind::Tabular => {
            let mut idx: Vec<usize> = (0..m).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx[..n_train].sort_unstable();
            idx[n_train..].sort_unstable();
            idx
        }
    };
    Ok((
        data.select_rows(&order[..n_train])?,
        data.select_rows(&order[n_train..])?,
    ))
}

/// Per-column affine scaling to zero mean and unit variance, fitted on one
/// dataset and applied to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
}

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = var.sqrt();
    (mean, if scale > 0.0 { scale } else { 1.0 })
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let (feature_mean, feature_scale) = (0..data.n_features())
            .map(|j| mean_and_scale(data.inputs().column(j).iter().copied()))
            .unzip();
        let (target_mean, target_scale) = mean_and_scale(data.targets().iter().copied());
        Self {
            feature_mean,
            feature_scale,
            target_mean,
            target_scale,
        }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        crate::error::check_len("standardized features", self.feature_mean.len(), data.n_features())?;
        let mut inputs = data.inputs().clone();
        for j in 0..inputs.ncols() {
            let (mu, s) = (self.feature_mean[j], self.feature_scale[j]);
            inputs.column_mut(j).apply(|v| *v = (*v - mu) / s);
        }
        let targets = data.targets().map(|v| (v - self.target_mean) / self.target_scale);
        match data.kind() {
            DatasetKind::Tabular => Dataset::tabular(inputs, targets),
            DatasetKind::TimeSeries => Dataset::time_series(targets),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_tabular_file() {
        let f = write_tmp("x1,x2,y\n1,2,3\n4,5,6\n7,8,9\n");
        let d = load_csv_dataset(f.path(), CsvSchema::Tabular).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.targets().as_slice(), &[3.0, 6.0, 9.0]);
        assert_eq!(d.inputs()[(2, 1)], 8.0);
    }

    #[test]
    fn loads_time_series_file() {
        let f = write_tmp("ozone\n300\n310.5\n295\n");
        let d = load_csv_dataset(f.path(), CsvSchema::TimeSeries).unwrap();
        assert_eq!(d.kind(), DatasetKind::TimeSeries);
        assert_eq!(d.targets().as_slice(), &[300.0, 310.5, 295.0]);
    }

    #[test]
    fn reports_line_of_bad_rows() {
        let f = write_tmp("x,y\n1,2\n3\n");
        match load_csv_dataset(f.path(), CsvSchema::Tabular) {
            Err(Error::Csv { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("x,y\n1,2\n3,abc\n");
        match load_csv_dataset(f.path(), CsvSchema::Tabular) {
            Err(Error::Csv { line: 3, message, .. }) => assert!(message.contains("abc")),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("");
        assert!(matches!(
            load_csv_dataset(f.path(), CsvSchema::Tabular),
            Err(Error::Csv { line: 1, .. })
        ));
    }

    #[test]
    fn ozone_transform_domain() {
        let e = std::f64::consts::E;
        let t = ozone_transform(&DVector::from_vec(vec![261.0, 260.0 + e])).unwrap();
        assert_eq!(t[0], 0.0);
        // 260 + e is itself rounded, so allow a few ulps of slack.
        assert!((t[1] - 1.0).abs() < 1e-13);
        match ozone_transform(&DVector::from_vec(vec![300.0, 260.0])) {
            Err(Error::Domain { index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn time_series_split_is_prefix_suffix() {
        let d = Dataset::time_series(DVector::from_fn(518, |i, _| i as f64)).unwrap();
        let (train, test) = split_dataset(&d, 450, 0).unwrap();
        assert_eq!((train.len(), test.len()), (450, 68));
        assert_eq!(test.targets()[0], 450.0);
        let (_, single) = split_dataset(&d, 517, 0).unwrap();
        assert_eq!(single.len(), 1);
        assert!(split_dataset(&d, 0, 0).is_err());
        assert!(split_dataset(&d, 518, 0).is_err());
    }

    #[test]
    fn tabular_split_is_seeded_partition() {
        let d = Dataset::tabular(
            DMatrix::from_fn(50, 1, |i, _| i as f64),
            DVector::from_fn(50, |i, _| i as f64),
        )
        .unwrap();
        let (a_train, a_test) = split_dataset(&d, 40, 9).unwrap();
        let (b_train, b_test) = split_dataset(&d, 40, 9).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        let mut all: Vec<f64> = a_train
            .targets()
            .iter()
            .chain(a_test.targets().iter())
            .copied()
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..50).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn standardizer_centers_training_data() {
        let d = Dataset::tabular(
            DMatrix::from_fn(10, 2, |i, j| (i * (j + 1)) as f64),
            DVector::from_fn(10, |i, _| 3.0 * i as f64 + 1.0),
        )
        .unwrap();
        let s = Standardizer::fit(&d);
        let z = s.apply(&d).unwrap();
        for j in 0..2 {
            let col = z.inputs().column(j);
            assert!(col.mean().abs() < 1e-12);
            assert!((col.variance() - 1.0).abs() < 1e-12);
        }
        assert!(z.targets().mean().abs() < 1e-12);
    }
}
