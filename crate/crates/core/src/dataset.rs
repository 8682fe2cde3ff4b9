//! Two-modality labeled datasets: CSV ingestion, class ordering and splitting.
//!
//! Samples are always stored class-contiguously (labels non-decreasing) so that
//! the class-block structure used by [`crate::semantics`] can be applied in
//! linear time. `original_indices` maps stored rows back to file rows.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Paired feature rows for modality X and Y plus dense class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalDataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    labels: Vec<usize>,
    class_counts: Vec<usize>,
    class_names: Vec<String>,
    original_indices: Vec<usize>,
}

impl MultiModalDataset {
    /// Builds a dataset from rows in file order. `labels` may be any class ids;
    /// they are densified by ascending value. Rows are stably sorted by class.
    pub fn from_parts(x: DMatrix<f64>, y: DMatrix<f64>, labels: &[usize]) -> Result<Self> {
        let names: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
        let distinct: BTreeSet<usize> = labels.iter().copied().collect();
        let order: Vec<String> = distinct.iter().map(|l| l.to_string()).collect();
        Self::from_named(x, y, &names, order)
    }

    /// `names` are per-row class names; `class_order` lists distinct names in
    /// dense-index order.
    fn from_named(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        names: &[String],
        class_order: Vec<String>,
    ) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::RowCountMismatch {
                left: "x".into(),
                left_rows: x.nrows(),
                right: "y".into(),
                right_rows: y.nrows(),
            });
        }
        if names.len() != x.nrows() {
            return Err(Error::RowCountMismatch {
                left: "features".into(),
                left_rows: x.nrows(),
                right: "labels".into(),
                right_rows: names.len(),
            });
        }
        let n = x.nrows();
        if n < 2 {
            return Err(Error::TooFewSamples(n));
        }
        check_finite(&x, "x")?;
        check_finite(&y, "y")?;
        if class_order.len() < 2 {
            return Err(Error::TooFewClasses(class_order.len()));
        }
        let index: BTreeMap<&str, usize> = class_order
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let dense: Vec<usize> = names.iter().map(|s| index[s.as_str()]).collect();

        let mut perm: Vec<usize> = (0..n).collect();
        perm.sort_by_key(|&i| dense[i]);
        let mut class_counts = vec![0usize; class_order.len()];
        for &l in &dense {
            class_counts[l] += 1;
        }
        Ok(Self {
            x: select_rows(&x, &perm),
            y: select_rows(&y, &perm),
            labels: perm.iter().map(|&i| dense[i]).collect(),
            class_counts,
            class_names: class_order,
            original_indices: perm,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Per-class sample counts. Subsets produced by [`split`] keep the parent's
    /// class index space, so a count may be zero there.
    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn original_indices(&self) -> &[usize] {
        &self.original_indices
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }

    /// Number of classes with at least one sample.
    pub fn n_present_classes(&self) -> usize {
        self.class_counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn x_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn y_dim(&self) -> usize {
        self.y.ncols()
    }

    /// `(x, y)` with the rows of every class block sorted by value. A fit
    /// depends only on the set of rows per class, so fitting on this makes the
    /// result bitwise independent of the within-class sample order.
    pub(crate) fn canonical_features(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut order: Vec<usize> = (0..self.n_samples()).collect();
        let row = |i: usize| self.x.row(i).iter().chain(self.y.row(i).iter()).copied().collect::<Vec<f64>>();
        order.sort_by(|&a, &b| {
            self.labels[a].cmp(&self.labels[b]).then_with(|| {
                row(a)
                    .iter()
                    .zip(row(b).iter())
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        (select_rows(&self.x, &order), select_rows(&self.y, &order))
    }

    /// Subset by stored positions, re-sorted class-contiguously. The class
    /// index space of `self` is retained.
    pub fn subset(&self, positions: &[usize]) -> Self {
        let mut pos = positions.to_vec();
        pos.sort_by_key(|&i| (self.labels[i], self.original_indices[i]));
        let mut class_counts = vec![0usize; self.class_counts.len()];
        for &i in &pos {
            class_counts[self.labels[i]] += 1;
        }
        Self {
            x: select_rows(&self.x, &pos),
            y: select_rows(&self.y, &pos),
            labels: pos.iter().map(|&i| self.labels[i]).collect(),
            class_counts,
            class_names: self.class_names.clone(),
            original_indices: pos.iter().map(|&i| self.original_indices[i]).collect(),
        }
    }
}

fn check_finite(m: &DMatrix<f64>, modality: &'static str) -> Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite {
                    modality,
                    row: r,
                    col: c,
                });
            }
        }
    }
    Ok(())
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

struct RawTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row: Vec<String> = record.iter().map(str::to_owned).collect();
        if row.len() < headers.len() || row.iter().any(String::is_empty) {
            let missing = (0..headers.len())
                .find(|&c| row.get(c).is_none_or(|v| v.is_empty()))
                .unwrap_or(0);
            return Err(Error::MissingCell {
                path: path.to_path_buf(),
                row: i + 1,
                column: headers[missing].clone(),
            });
        }
        rows.push(row);
    }
    Ok(RawTable { headers, rows })
}

fn numeric_matrix(path: &Path, table: &RawTable, skip: Option<usize>) -> Result<DMatrix<f64>> {
    let cols: Vec<usize> = (0..table.headers.len())
        .filter(|&c| Some(c) != skip)
        .collect();
    if cols.is_empty() {
        return Err(Error::NoFeatures {
            path: path.to_path_buf(),
        });
    }
    let mut data = DMatrix::zeros(table.rows.len(), cols.len());
    for (r, row) in table.rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            let cell = &row[c];
            data[(r, j)] = cell.parse::<f64>().map_err(|_| Error::NonNumericCell {
                path: path.to_path_buf(),
                row: r + 1,
                column: table.headers[c].clone(),
                value: cell.clone(),
            })?;
        }
    }
    Ok(data)
}

/// Distinct labels in dense-index order: numeric order when every label
/// parses as an integer, lexicographic otherwise.
fn class_order(names: &[String]) -> Vec<String> {
    let distinct: BTreeSet<&str> = names.iter().map(String::as_str).collect();
    let mut order: Vec<String> = distinct.into_iter().map(str::to_owned).collect();
    let numeric: Option<Vec<i64>> = order.iter().map(|s| s.parse::<i64>().ok()).collect();
    if let Some(values) = numeric {
        let mut pairs: Vec<(i64, String)> = values.into_iter().zip(order).collect();
        pairs.sort();
        order = pairs.into_iter().map(|(_, s)| s).collect();
    }
    order
}

/// Loads two aligned CSV files. The label column must be present in exactly
/// one of them; every other column is a numeric feature.
pub fn load_dataset(
    x_path: impl AsRef<Path>,
    y_path: impl AsRef<Path>,
    label_column: &str,
) -> Result<MultiModalDataset> {
    let (x_path, y_path) = (x_path.as_ref(), y_path.as_ref());
    let xt = read_table(x_path)?;
    let yt = read_table(y_path)?;
    if xt.rows.len() != yt.rows.len() {
        return Err(Error::RowCountMismatch {
            left: x_path.display().to_string(),
            left_rows: xt.rows.len(),
            right: y_path.display().to_string(),
            right_rows: yt.rows.len(),
        });
    }
    let x_label = xt.headers.iter().position(|h| h == label_column);
    let y_label = yt.headers.iter().position(|h| h == label_column);
    let (names, x_skip, y_skip) = match (x_label, y_label) {
        (Some(_), Some(_)) => return Err(Error::AmbiguousLabelColumn(label_column.into())),
        (None, None) => return Err(Error::MissingLabelColumn(label_column.into())),
        (Some(c), None) => (column(&xt, c), Some(c), None),
        (None, Some(c)) => (column(&yt, c), None, Some(c)),
    };
    let x = numeric_matrix(x_path, &xt, x_skip)?;
    let y = numeric_matrix(y_path, &yt, y_skip)?;
    let order = class_order(&names);
    MultiModalDataset::from_named(x, y, &names, order)
}

fn column(table: &RawTable, c: usize) -> Vec<String> {
    table.rows.iter().map(|r| r[c].clone()).collect()
}

/// How to partition a dataset into train and test sets.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Training rows given as zero-based original (file) row indices.
    ByIndexFile(PathBuf),
    /// Same as `ByIndexFile` with the indices already in memory.
    ByIndices(Vec<usize>),
    /// `count` random training samples from every class.
    PerClassCount { count: usize, seed: u64 },
    /// Stratified: `round(fraction * n_d)` training samples from class d,
    /// clamped so that every class with two or more samples appears on both sides.
    Fraction { fraction: f64, seed: u64 },
}

/// Reads an index file: one zero-based original-row index per line.
pub fn read_index_file(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<usize>().map_err(|_| {
                Error::InvalidSplit(format!("{}: `{l}` is not a row index", path.display()))
            })
        })
        .collect()
}

/// Splits into disjoint (train, test) sets, both class-contiguous.
/// Deterministic for a given seed.
pub fn split(
    ds: &MultiModalDataset,
    spec: &SplitSpec,
) -> Result<(MultiModalDataset, MultiModalDataset)> {
    let n = ds.n_samples();
    let mut in_train = vec![false; n];
    match spec {
        SplitSpec::ByIndexFile(path) => {
            let idx = read_index_file(path)?;
            return split(ds, &SplitSpec::ByIndices(idx));
        }
        SplitSpec::ByIndices(idx) => {
            let mut stored_of = vec![0usize; n];
            for (pos, &orig) in ds.original_indices.iter().enumerate() {
                stored_of[orig] = pos;
            }
            for &orig in idx {
                if orig >= n {
                    return Err(Error::InvalidSplit(format!(
                        "index {orig} out of range for {n} samples"
                    )));
                }
                if std::mem::replace(&mut in_train[stored_of[orig]], true) {
                    return Err(Error::InvalidSplit(format!("duplicate index {orig}")));
                }
            }
        }
        SplitSpec::PerClassCount { count, seed } => {
            let min = ds.class_counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
            if *count == 0 || *count > min {
                return Err(Error::InvalidSplit(format!(
                    "requested per-class count {count} exceeds available samples (smallest class has {min})"
                )));
            }
            mark_per_class(ds, *seed, |_| *count, &mut in_train);
        }
        SplitSpec::Fraction { fraction, seed } => {
            if !(*fraction > 0.0 && *fraction < 1.0) {
                return Err(Error::InvalidSplit(format!(
                    "fraction {fraction} not in (0, 1)"
                )));
            }
            mark_per_class(
                ds,
                *seed,
                |n_d| {
                    let k = (fraction * n_d as f64).round() as usize;
                    if n_d >= 2 {
                        k.clamp(1, n_d - 1)
                    } else {
                        k.min(n_d)
                    }
                },
                &mut in_train,
            );
        }
    }
    let train: Vec<usize> = (0..n).filter(|&i| in_train[i]).collect();
    let test: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidSplit(format!(
            "split leaves {} train and {} test samples",
            train.len(),
            test.len()
        )));
    }
    Ok((ds.subset(&train), ds.subset(&test)))
}

fn mark_per_class(
    ds: &MultiModalDataset,
    seed: u64,
    take: impl Fn(usize) -> usize,
    in_train: &mut [bool],
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = 0;
    for &n_d in &ds.class_counts {
        let mut block: Vec<usize> = (start..start + n_d).collect();
        block.shuffle(&mut rng);
        for &i in block.iter().take(take(n_d)) {
            in_train[i] = true;
        }
        start += n_d;
    }
}
