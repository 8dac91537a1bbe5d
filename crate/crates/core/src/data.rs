//! Tabular datasets: CSV ingestion, column standardization and seeded
//! train/test splits. Also hosts the built-in datasets used when no CSV is
//! supplied.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            _ => Err(Error::Config(format!("unknown task `{s}`"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

impl From<&str> for TargetColumn {
    fn from(s: &str) -> Self {
        TargetColumn::Name(s.to_string())
    }
}

impl From<usize> for TargetColumn {
    fn from(i: usize) -> Self {
        TargetColumn::Index(i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Regression(Vec<f64>),
    /// Class indices in `0..classes`.
    Classification { labels: Vec<usize>, classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(v) => v.len(),
            Targets::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Regression(_) => Task::Regression,
            Targets::Classification { .. } => Task::Classification,
        }
    }

    fn select(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Regression(v) => Targets::Regression(indices.iter().map(|&i| v[i]).collect()),
            Targets::Classification { labels, classes } => Targets::Classification {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
        }
    }
}

/// Column statistics used to standardize, and later invert, a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub feature_means: Vec<f64>,
    /// Population standard deviations; constant columns are recorded as 1.
    pub feature_stds: Vec<f64>,
    pub target_mean: Option<f64>,
    pub target_std: Option<f64>,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        (mean, 1.0)
    } else {
        (mean, std)
    }
}

impl Standardization {
    pub fn fit(ds: &Dataset) -> Self {
        let d = ds.dim();
        let (feature_means, feature_stds) = (0..d)
            .map(|j| mean_and_std(&ds.features.column(j)))
            .unzip();
        let (target_mean, target_std) = match &ds.targets {
            Targets::Regression(y) => {
                let (m, s) = mean_and_std(y);
                (Some(m), Some(s))
            }
            Targets::Classification { .. } => (None, None),
        };
        Self {
            feature_means,
            feature_stds,
            target_mean,
            target_std,
        }
    }

    pub fn transform_point(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.feature_means).zip(&self.feature_stds) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert_point(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.feature_means).zip(&self.feature_stds) {
            *v = *v * s + m;
        }
    }

    pub fn invert_target(&self, y: f64) -> f64 {
        match (self.target_mean, self.target_std) {
            (Some(m), Some(s)) => y * s + m,
            _ => y,
        }
    }

    /// Applies these statistics to a raw dataset.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.standardization.is_some() {
            return Err(Error::BadParameter("dataset is already standardized".into()));
        }
        if ds.dim() != self.feature_means.len() {
            return Err(Error::BadShape(format!(
                "statistics cover {} features, dataset has {}",
                self.feature_means.len(),
                ds.dim()
            )));
        }
        let mut out = ds.clone();
        for i in 0..out.len() {
            self.transform_point(out.features.row_mut(i));
        }
        if let (Targets::Regression(y), Some(m), Some(s)) =
            (&mut out.targets, self.target_mean, self.target_std)
        {
            y.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        out.standardization = Some(self.clone());
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: Targets,
    pub feature_names: Vec<String>,
    pub target_column: String,
    /// Set once the dataset has been standardized.
    pub standardization: Option<Standardization>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub d: usize,
    pub task: Task,
    pub target_column: String,
}

impl Dataset {
    pub fn new(features: Matrix, targets: Targets) -> Result<Self> {
        if features.rows() != targets.len() {
            return Err(Error::BadShape(format!(
                "{} feature rows but {} targets",
                features.rows(),
                targets.len()
            )));
        }
        if features.rows() == 0 {
            return Err(Error::EmptyDataset {
                needed: 1,
                found: 0,
            });
        }
        if let Targets::Classification { labels, classes } = &targets {
            if let Some(&bad) = labels.iter().find(|&&l| l >= *classes) {
                return Err(Error::BadParameter(format!(
                    "class label {bad} outside 0..{classes}"
                )));
            }
        }
        let feature_names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            features,
            targets,
            feature_names,
            target_column: "y".into(),
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn task(&self) -> Task {
        self.targets.task()
    }

    /// Number of model outputs this dataset calls for.
    pub fn output_dim(&self) -> usize {
        match &self.targets {
            Targets::Regression(_) => 1,
            Targets::Classification { classes, .. } => *classes,
        }
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            n: self.len(),
            d: self.dim(),
            task: self.task(),
            target_column: self.target_column.clone(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            targets: self.targets.select(indices),
            feature_names: self.feature_names.clone(),
            target_column: self.target_column.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// First `n` rows (or all of them, if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }
}

/// Reads a comma-separated file with a header line.
pub fn load_csv(path: impl AsRef<Path>, target: impl Into<TargetColumn>, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, target, task)
}

/// Parses CSV text; see [`load_csv`].
pub fn parse_csv(text: &str, target: impl Into<TargetColumn>, task: Task) -> Result<Dataset> {
    let target = target.into();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_idx = match &target {
        TargetColumn::Index(i) if *i < header.len() => *i,
        TargetColumn::Index(i) => return Err(Error::UnknownColumn(i.to_string())),
        TargetColumn::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.clone()))?,
    };
    let d = header.len() - 1;

    let mut features = Vec::new();
    let mut reg_targets = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let column = c + 1;
            if c == target_idx {
                match task {
                    Task::Regression => reg_targets.push(parse_real(cell, row, column)?),
                    Task::Classification => labels.push(parse_label(cell, row, column)?),
                }
            } else {
                features.push(parse_real(cell, row, column)?);
            }
        }
    }

    let n = match task {
        Task::Regression => reg_targets.len(),
        Task::Classification => labels.len(),
    };
    if n < 2 {
        return Err(Error::EmptyDataset { needed: 2, found: n });
    }
    let targets = match task {
        Task::Regression => Targets::Regression(reg_targets),
        Task::Classification => {
            let classes = labels.iter().max().map_or(0, |m| m + 1);
            Targets::Classification { labels, classes }
        }
    };
    let mut ds = Dataset::new(Matrix::from_vec(n, d, features)?, targets)?;
    ds.feature_names = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    ds.target_column = header[target_idx].clone();
    Ok(ds)
}

fn parse_real(cell: &str, row: usize, column: usize) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            column,
            message: format!("`{cell}` is not a finite number"),
        }),
    }
}

fn parse_label(cell: &str, row: usize, column: usize) -> Result<usize> {
    // accept "1" as well as "1.0"
    let v = parse_real(cell, row, column)?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::Parse {
            row,
            column,
            message: format!("`{cell}` is not a class index"),
        });
    }
    Ok(v as usize)
}

/// Standardizes features (and regression targets) with the dataset's own statistics.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    Standardization::fit(ds).apply(ds)
}

/// Undoes [`standardize`]; a raw dataset is returned unchanged.
pub fn destandardize(ds: &Dataset) -> Dataset {
    let Some(stats) = &ds.standardization else {
        return ds.clone();
    };
    let mut out = ds.clone();
    for i in 0..out.len() {
        stats.invert_point(out.features.row_mut(i));
    }
    if let Targets::Regression(y) = &mut out.targets {
        y.iter_mut().for_each(|v| *v = stats.invert_target(*v));
    }
    out.standardization = None;
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SplitSpec {
    /// Train size: `floor(fraction * n)`, clamped so each side keeps a row.
    pub fn train_size(&self, n: usize) -> Result<usize> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::BadParameter(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if n < 2 {
            return Err(Error::EmptyDataset { needed: 2, found: n });
        }
        Ok(((self.train_fraction * n as f64).floor() as usize).clamp(1, n - 1))
    }

    /// Seeded permutation of `0..n`, split into (train, test) index sets.
    pub fn indices(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let k = self.train_size(n)?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let test = idx.split_off(k);
        Ok((idx, test))
    }
}

/// Splits without touching the feature scale.
pub fn split_raw(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = spec.indices(ds.len())?;
    Ok((ds.select(&train), ds.select(&test)))
}

/// Seeded split; both halves are standardized with training-set statistics.
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let raw = destandardize(ds);
    let (train, test) = split_raw(&raw, spec)?;
    let stats = Standardization::fit(&train);
    Ok((stats.apply(&train)?, stats.apply(&test)?))
}

/// Built-in datasets, usable without any files on disk.
pub mod builtin {
    use super::*;

    const DIGITS_CSV: &str = include_str!("../data/digits8x8.csv");

    /// The 1797 8x8 handwritten digits (UCI optdigits test set), pixels scaled to `[0, 1]`.
    pub fn digits() -> Dataset {
        let mut ds = parse_csv(DIGITS_CSV, "label", Task::Classification)
            .expect("embedded digits table is well formed");
        let n = ds.len();
        for i in 0..n {
            ds.features.row_mut(i).iter_mut().for_each(|v| *v /= 16.0);
        }
        ds
    }

    /// Piecewise-linear "credit rating" style response over `d` features.
    ///
    /// Each feature passes through a hinge with a kink at a feature-specific
    /// location; a pairwise interaction and Gaussian noise are added.
    pub fn piecewise(n: usize, d: usize, noise: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Matrix::zeros(n, d);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let row = features.row_mut(i);
            for v in row.iter_mut() {
                *v = rng.random_range(-2.0..2.0);
            }
            y.push(piecewise_response(row) + noise * rng.sample::<f64, _>(StandardNormal));
        }
        let mut ds = Dataset::new(features, Targets::Regression(y)).expect("consistent shapes");
        ds.target_column = "rating".into();
        ds
    }

    /// Noise-free response underlying [`piecewise`].
    pub fn piecewise_response(x: &[f64]) -> f64 {
        let mut y = 0.0;
        for (j, &v) in x.iter().enumerate() {
            let kink = -0.5 + 0.25 * j as f64;
            let (lo, hi) = if j % 2 == 0 { (0.2, 1.5) } else { (-1.0, 0.3) };
            y += if v < kink { lo * (v - kink) } else { hi * (v - kink) };
        }
        if x.len() >= 2 {
            y += 0.5 * (x[0] * x[1]).max(0.0);
        }
        y
    }

    /// `y = w . x + b + noise` with `w_j = (j + 1) / d`, `b = 0.5`.
    pub fn linear(n: usize, d: usize, noise: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Matrix::zeros(n, d);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let row = features.row_mut(i);
            let mut t = 0.5;
            for (j, v) in row.iter_mut().enumerate() {
                *v = rng.sample::<f64, _>(StandardNormal);
                t += (j + 1) as f64 / d as f64 * *v;
            }
            y.push(t + noise * rng.sample::<f64, _>(StandardNormal));
        }
        Dataset::new(features, Targets::Regression(y)).expect("consistent shapes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "a,b,y\n1,2,3\n4,5,6\n7,8,9\n";

    #[test]
    fn reads_small_csv() {
        let ds = parse_csv(SMALL, "y", Task::Regression).unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 2));
        assert_eq!(ds.targets, Targets::Regression(vec![3.0, 6.0, 9.0]));
        assert_eq!(ds.point(1), &[4.0, 5.0]);
        assert_eq!(ds.feature_names, ["a", "b"]);
        assert!(ds.standardization.is_none());
    }

    #[test]
    fn target_by_index_matches_name() {
        let by_name = parse_csv(SMALL, "y", Task::Regression).unwrap();
        let by_index = parse_csv(SMALL, 2usize, Task::Regression).unwrap();
        assert_eq!(by_name, by_index);
    }

    #[test]
    fn text_cell_reports_location() {
        let text = "a,b,y\n1,2,3\nfoo,5,6\n7,8,9\n";
        match parse_csv(text, "y", Task::Regression) {
            Err(Error::Parse { row: 2, column: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_column_and_short_files() {
        assert!(matches!(
            parse_csv(SMALL, "z", Task::Regression),
            Err(Error::UnknownColumn(_))
        ));
        assert!(matches!(
            parse_csv(SMALL, 7usize, Task::Regression),
            Err(Error::UnknownColumn(_))
        ));
        assert!(matches!(
            parse_csv("a,y\n1,2\n", "y", Task::Regression),
            Err(Error::EmptyDataset { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn classification_labels() {
        let ds = parse_csv("a,c\n0.5,1\n0.1,0\n0.3,2\n", "c", Task::Classification).unwrap();
        assert_eq!(
            ds.targets,
            Targets::Classification {
                labels: vec![1, 0, 2],
                classes: 3
            }
        );
        assert_eq!(ds.output_dim(), 3);
        assert!(parse_csv("a,c\n0.5,1.5\n0.1,0\n", "c", Task::Classification).is_err());
    }

    #[test]
    fn population_std_convention() {
        let ds = parse_csv("a,k,y\n1,5,0\n2,5,1\n3,5,2\n", "y", Task::Regression).unwrap();
        let st = standardize(&ds).unwrap();
        let a = st.features.column(0);
        let expect = 1.5f64.sqrt(); // (x - 2) / sqrt(2/3)
        assert!((a[0] + expect).abs() < 1e-12 && a[1].abs() < 1e-15 && (a[2] - expect).abs() < 1e-12);
        assert_eq!(st.features.column(1), vec![0.0; 3]);
        let stats = st.standardization.as_ref().unwrap();
        assert_eq!(stats.feature_stds[1], 1.0);
        assert_eq!(stats.target_mean, Some(1.0));
    }

    #[test]
    fn round_trip_is_identity() {
        let ds = builtin::piecewise(40, 3, 0.1, 3);
        let back = destandardize(&standardize(&ds).unwrap());
        for (a, b) in ds.features.as_slice().iter().zip(back.features.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        let (Targets::Regression(y0), Targets::Regression(y1)) = (&ds.targets, &back.targets) else {
            unreachable!()
        };
        assert!(y0.iter().zip(y1).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(standardize(&standardize(&ds).unwrap()).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = builtin::linear(10, 2, 0.0, 1);
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 7,
        };
        let (tr, te) = split(&ds, spec).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert_eq!(spec.indices(10).unwrap(), spec.indices(10).unwrap());
        let (tr2, _) = split(&ds, spec).unwrap();
        assert_eq!(tr, tr2);
    }

    #[test]
    fn split_size_rule() {
        // floor(f * n) clamped to [1, n - 1], enumerated against the direct formula
        for n in 2..40usize {
            for f in [0.01, 0.1, 0.5, 0.8, 0.99] {
                let spec = SplitSpec { train_fraction: f, seed: 0 };
                let want = ((f * n as f64).floor() as usize).max(1).min(n - 1);
                assert_eq!(spec.train_size(n).unwrap(), want);
            }
        }
        let spec = SplitSpec { train_fraction: 0.99, seed: 0 };
        assert_eq!(spec.train_size(10).unwrap(), 9);
        assert!(SplitSpec { train_fraction: 1.0, seed: 0 }.train_size(10).is_err());
    }

    #[test]
    fn training_statistics_only() {
        let ds = builtin::piecewise(50, 3, 0.1, 9);
        let spec = SplitSpec { train_fraction: 0.7, seed: 2 };
        let (tr, te) = split(&ds, spec).unwrap();
        let (raw_tr, _) = split_raw(&ds, spec).unwrap();
        assert_eq!(tr.standardization, Some(Standardization::fit(&raw_tr)));
        assert_eq!(tr.standardization, te.standardization);
        for j in 0..3 {
            let col = tr.features.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-8 && (var.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn digits_are_embedded() {
        let ds = builtin::digits();
        assert_eq!((ds.len(), ds.dim(), ds.output_dim()), (1797, 64, 10));
        assert!(ds.features.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
