//! Applying fitted models: projection, sign hashing, fusion, k-NN
//! classification and separation measures.
//!
//! At inference the class-block weighting is unavailable (test labels are
//! unknown), so samples are projected as `(x - x_mean) W_x`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::MultiModalDataset;
use crate::dccm::check_dims;
use crate::error::{Error, Result};
use crate::linalg::subtract_mean;
use crate::model::ProjectionModel;
use crate::semantics::build_semantic_context;

/// Elementwise sign with `sgn(0) = +1`.
pub fn sign_codes<R: nalgebra::Dim, C: nalgebra::Dim, S>(
    m: &nalgebra::Matrix<f64, R, C, S>,
) -> nalgebra::OMatrix<f64, R, C>
where
    S: nalgebra::RawStorage<f64, R, C>,
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<R, C>,
{
    m.map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
}

/// Binary codes in `{-1, +1}^L` for both modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct HashCodes {
    pub codes_x: DMatrix<f64>,
    pub codes_y: DMatrix<f64>,
}

/// `(zx, zy) = ((x - x_mean) W_x, (y - y_mean) W_y)`.
pub fn project(
    model: &ProjectionModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if x.ncols() != model.x_dim() || y.ncols() != model.y_dim() || x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            context: "project",
            expected: format!("x (n, {}) and y (n, {})", model.x_dim(), model.y_dim()),
            actual: format!("x {:?} and y {:?}", x.shape(), y.shape()),
        });
    }
    Ok((
        subtract_mean(x, &model.x_mean)? * &model.w_x,
        subtract_mean(y, &model.y_mean)? * &model.w_y,
    ))
}

pub fn hash(zx: &DMatrix<f64>, zy: &DMatrix<f64>) -> HashCodes {
    HashCodes {
        codes_x: sign_codes(zx),
        codes_y: sign_codes(zy),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    #[default]
    Concat,
    Sum,
    XOnly,
    YOnly,
}

impl FusionRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionRule::Concat => "concat",
            FusionRule::Sum => "sum",
            FusionRule::XOnly => "x_only",
            FusionRule::YOnly => "y_only",
        }
    }
}

impl std::str::FromStr for FusionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(FusionRule::Concat),
            "sum" => Ok(FusionRule::Sum),
            "x_only" | "x" => Ok(FusionRule::XOnly),
            "y_only" | "y" => Ok(FusionRule::YOnly),
            other => Err(Error::InvalidParameter(format!(
                "unknown fusion rule `{other}` (expected concat, sum, x_only or y_only)"
            ))),
        }
    }
}

pub fn fuse(zx: &DMatrix<f64>, zy: &DMatrix<f64>, rule: FusionRule) -> Result<DMatrix<f64>> {
    let rows_match = zx.nrows() == zy.nrows();
    match rule {
        FusionRule::XOnly => return Ok(zx.clone()),
        FusionRule::YOnly => return Ok(zy.clone()),
        FusionRule::Concat if rows_match => {}
        FusionRule::Sum if rows_match && zx.ncols() == zy.ncols() => return Ok(zx + zy),
        _ => {
            return Err(Error::DimensionMismatch {
                context: "fuse",
                expected: format!("{:?}", zx.shape()),
                actual: format!("{:?}", zy.shape()),
            })
        }
    }
    let mut out = DMatrix::zeros(zx.nrows(), zx.ncols() + zy.ncols());
    out.columns_mut(0, zx.ncols()).copy_from(zx);
    out.columns_mut(zx.ncols(), zy.ncols()).copy_from(zy);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
    /// Number of differing entries between fused hash codes.
    Hamming,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub fusion: FusionRule,
    pub k: usize,
    pub distance: Distance,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            fusion: FusionRule::Concat,
            k: 1,
            distance: Distance::Euclidean,
        }
    }
}

fn distance(a: nalgebra::RowDVector<f64>, b: nalgebra::DMatrixView<'_, f64>, kind: Distance) -> f64 {
    match kind {
        Distance::Euclidean => (a - b).norm_squared(),
        Distance::Hamming => a.iter().zip(b.iter()).filter(|(p, q)| p != q).count() as f64,
    }
}

/// Majority vote among the `k` nearest training rows; distance ties resolve
/// to the lower training index and vote ties to the smallest class index.
pub fn knn_classify(
    train: &DMatrix<f64>,
    train_labels: &[usize],
    query: &DMatrix<f64>,
    k: usize,
    kind: Distance,
) -> Result<Vec<usize>> {
    knn_classify_excluding(train, train_labels, query, k, kind, false)
}

fn knn_classify_excluding(
    train: &DMatrix<f64>,
    train_labels: &[usize],
    query: &DMatrix<f64>,
    k: usize,
    kind: Distance,
    leave_one_out: bool,
) -> Result<Vec<usize>> {
    let available = train.nrows() - usize::from(leave_one_out);
    if k == 0 || k > available {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must be in 1..={available}"
        )));
    }
    if train.ncols() != query.ncols() || train_labels.len() != train.nrows() {
        return Err(Error::DimensionMismatch {
            context: "knn",
            expected: format!("{} feature columns", train.ncols()),
            actual: format!("{} feature columns", query.ncols()),
        });
    }
    let n_classes = train_labels.iter().max().map_or(0, |&m| m + 1);
    Ok((0..query.nrows())
        .into_par_iter()
        .map(|q| {
            let row = query.row(q).into_owned();
            let mut dists: Vec<(f64, usize)> = (0..train.nrows())
                .filter(|&i| !(leave_one_out && i == q))
                .map(|i| (distance(row.clone(), train.row(i).as_view(), kind), i))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![0usize; n_classes];
            for &(_, i) in dists.iter().take(k) {
                votes[train_labels[i]] += 1;
            }
            let best = *votes.iter().max().unwrap();
            votes.iter().position(|&v| v == best).unwrap()
        })
        .collect())
}

/// Leave-one-out k-NN accuracy over the rows of `features`.
pub fn leave_one_out_accuracy(
    features: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    kind: Distance,
) -> Result<f64> {
    let pred = knn_classify_excluding(features, labels, features, k, kind, true)?;
    let correct = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / labels.len() as f64)
}

fn class_means(z: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> (Vec<usize>, DMatrix<f64>) {
    let mut counts = vec![0usize; n_classes];
    let mut sums = DMatrix::zeros(n_classes, z.ncols());
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        let mut row = sums.row_mut(l);
        row += z.row(i);
    }
    for (d, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums.row_mut(d).unscale_mut(n as f64);
        }
    }
    (counts, sums)
}

/// Between-class over within-class variance, separately for every column.
/// A column with no spread at all scores 0; one with only between-class
/// spread scores infinity.
pub fn fisher_ratios(z: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> Vec<f64> {
    let (counts, means) = class_means(z, labels, n_classes);
    let total = z.row_mean();
    (0..z.ncols())
        .map(|j| {
            let between: f64 = (0..n_classes)
                .map(|d| counts[d] as f64 * (means[(d, j)] - total[j]).powi(2))
                .sum();
            let within: f64 = labels
                .iter()
                .enumerate()
                .map(|(i, &l)| (z[(i, j)] - means[(l, j)]).powi(2))
                .sum();
            match (between, within) {
                (b, _) if b == 0.0 => 0.0,
                (_, w) if w == 0.0 => f64::INFINITY,
                (b, w) => b / w,
            }
        })
        .collect()
}

/// Multivariate Fisher criterion: the largest value of
/// `(v^T S_b v) / (v^T S_w v)` over directions `v`, with `S_w` restricted to
/// its numerical range (directions without within-class spread are dropped).
pub fn fisher_criterion(z: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> f64 {
    let (counts, means) = class_means(z, labels, n_classes);
    let total = z.row_mean();
    let k = z.ncols();
    let mut s_b = DMatrix::zeros(k, k);
    for d in 0..n_classes {
        let diff = (means.row(d) - &total).transpose();
        s_b += &diff * diff.transpose() * counts[d] as f64;
    }
    let mut s_w = DMatrix::zeros(k, k);
    for (i, &l) in labels.iter().enumerate() {
        let diff = (z.row(i) - means.row(l)).transpose();
        s_w += &diff * diff.transpose();
    }
    let eig = SymmetricEigen::new(s_w);
    let top = eig.eigenvalues.amax();
    if top == 0.0 {
        return 0.0;
    }
    let keep: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] > 1e-10 * top).collect();
    let whiten = DMatrix::from_fn(k, keep.len(), |r, c| {
        eig.eigenvectors[(r, keep[c])] / eig.eigenvalues[keep[c]].sqrt()
    });
    let reduced = whiten.transpose() * s_b * &whiten;
    SymmetricEigen::new((&reduced + reduced.transpose()) * 0.5)
        .eigenvalues
        .max()
        .max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: String,
    pub code_length: usize,
    pub fusion: FusionRule,
    pub distance: Distance,
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
    /// Per fused dimension, on training projections.
    pub fisher_ratio: Vec<f64>,
    /// Multivariate criterion over all fused dimensions, on training projections.
    pub fisher_criterion: f64,
    /// `||codes_x codes_y^T - L S'_test||^2`.
    pub hamming_reconstruction_error: f64,
}

impl EvalReport {
    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "method={}", self.method);
        let _ = writeln!(s, "code_length={}", self.code_length);
        let _ = writeln!(s, "fusion={}", self.fusion.as_str());
        let _ = writeln!(
            s,
            "distance={}",
            match self.distance {
                Distance::Euclidean => "euclidean",
                Distance::Hamming => "hamming",
            }
        );
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "n_train={}", self.n_train);
        let _ = writeln!(s, "n_test={}", self.n_test);
        let _ = writeln!(s, "accuracy={}", self.accuracy);
        let _ = writeln!(s, "fisher_ratio={}", join(&self.fisher_ratio));
        let _ = writeln!(s, "fisher_criterion={}", self.fisher_criterion);
        let _ = writeln!(
            s,
            "hamming_reconstruction_error={}",
            self.hamming_reconstruction_error
        );
        let _ = writeln!(s, "classes={}", self.class_names.join(","));
        for (d, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "confusion.{}={}", d, cells.join(","));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Confusion matrix as CSV with a header of predicted class names.
    pub fn confusion_csv(&self) -> String {
        let mut s = format!("true\\predicted,{}\n", self.class_names.join(","));
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "{name},{}", cells.join(","));
        }
        s
    }
}

/// Projects both sets, fuses, classifies every test sample by k-NN against
/// the training samples and collects the report.
pub fn evaluate(
    model: &ProjectionModel,
    train: &MultiModalDataset,
    test: &MultiModalDataset,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if test.n_samples() == 0 {
        return Err(Error::InvalidParameter("empty test set".into()));
    }
    if opts.k == 0 || opts.k > train.n_samples() {
        return Err(Error::InvalidParameter(format!(
            "k = {} must be in 1..={}",
            opts.k,
            train.n_samples()
        )));
    }
    check_dims(model, train)?;
    check_dims(model, test)?;
    if train.n_classes() != test.n_classes() {
        return Err(Error::DimensionMismatch {
            context: "train/test class space",
            expected: format!("{} classes", train.n_classes()),
            actual: format!("{} classes", test.n_classes()),
        });
    }
    let c = train.n_classes();
    let (zx_tr, zy_tr) = project(model, train.x(), train.y())?;
    let (zx_te, zy_te) = project(model, test.x(), test.y())?;
    let fused_tr = fuse(&zx_tr, &zy_tr, opts.fusion)?;
    let (feat_tr, feat_te) = match opts.distance {
        Distance::Euclidean => (fused_tr.clone(), fuse(&zx_te, &zy_te, opts.fusion)?),
        Distance::Hamming => {
            let tr = hash(&zx_tr, &zy_tr);
            let te = hash(&zx_te, &zy_te);
            (
                fuse(&tr.codes_x, &tr.codes_y, opts.fusion)?,
                fuse(&te.codes_x, &te.codes_y, opts.fusion)?,
            )
        }
    };
    let predicted = knn_classify(&feat_tr, train.labels(), &feat_te, opts.k, opts.distance)?;
    let mut confusion = vec![vec![0usize; c]; c];
    for (&truth, &pred) in test.labels().iter().zip(&predicted) {
        confusion[truth][pred] += 1;
    }
    let correct: usize = (0..c).map(|d| confusion[d][d]).sum();

    let test_ctx = build_semantic_context(test.labels(), test.class_counts())?;
    let codes = hash(&zx_te, &zy_te);
    let hamming_reconstruction_error = test_ctx.reconstruction_error(
        &codes.codes_x,
        &codes.codes_y,
        model.code_length() as f64,
    )?;

    Ok(EvalReport {
        method: model.method.to_string(),
        code_length: model.code_length(),
        fusion: opts.fusion,
        distance: opts.distance,
        k: opts.k,
        n_train: train.n_samples(),
        n_test: test.n_samples(),
        accuracy: correct as f64 / test.n_samples() as f64,
        confusion,
        class_names: train.class_names().to_vec(),
        fisher_ratio: fisher_ratios(&fused_tr, train.labels(), c),
        fisher_criterion: fisher_criterion(&fused_tr, train.labels(), c),
        hamming_reconstruction_error,
    })
}

/// Header of the projection-trace CSV for code length `l`.
pub fn projection_trace_header(l: usize) -> Vec<String> {
    let mut h = vec!["sample_index".to_string(), "label".to_string()];
    h.extend((1..=l).map(|i| format!("zx_{i}")));
    h.extend((1..=l).map(|i| format!("zy_{i}")));
    h
}

/// Writes `sample_index,label,zx_1..zx_L,zy_1..zy_L`, one row per stored
/// sample. `sample_index` is the original file row.
pub fn export_projection_trace(
    model: &ProjectionModel,
    ds: &MultiModalDataset,
    path: impl AsRef<Path>,
) -> Result<()> {
    let (zx, zy) = project(model, ds.x(), ds.y())?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(projection_trace_header(model.code_length()))?;
    for i in 0..ds.n_samples() {
        let mut rec = vec![
            ds.original_indices()[i].to_string(),
            ds.class_names()[ds.labels()[i]].clone(),
        ];
        rec.extend(zx.row(i).iter().map(|v| v.to_string()));
        rec.extend(zy.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A projection trace read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionTrace {
    pub sample_index: Vec<usize>,
    pub labels: Vec<String>,
    pub zx: DMatrix<f64>,
    pub zy: DMatrix<f64>,
}

pub fn read_projection_trace(path: impl AsRef<Path>) -> Result<ProjectionTrace> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let l = header.len().saturating_sub(2) / 2;
    if header.len() != 2 + 2 * l || header.iter().collect::<Vec<_>>() != projection_trace_header(l) {
        return Err(Error::InvalidParameter(format!(
            "{}: not a projection trace header",
            path.display()
        )));
    }
    let (mut idx, mut labels, mut zx, mut zy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec[c].parse().map_err(|_| Error::NonNumericCell {
                path: path.to_path_buf(),
                row: row + 1,
                column: header[c].to_string(),
                value: rec[c].to_string(),
            })
        };
        idx.push(num(0)? as usize);
        labels.push(rec[1].to_string());
        for c in 0..l {
            zx.push(num(2 + c)?);
            zy.push(num(2 + l + c)?);
        }
    }
    let n = idx.len();
    Ok(ProjectionTrace {
        sample_index: idx,
        labels,
        zx: DMatrix::from_row_slice(n, l, &zx),
        zy: DMatrix::from_row_slice(n, l, &zy),
    })
}
