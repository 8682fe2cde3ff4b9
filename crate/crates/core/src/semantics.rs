//! Label-derived matrices: the indicator matrix `U`, the signed similarity
//! `S' = 2 U U^T - 1 1^T`, and the class-block matrix `A` with its principal
//! square root.
//!
//! `A` is block diagonal with one all-ones `n_d x n_d` block per class. Since
//! an all-ones block `H` satisfies `H^2 = n H`, the principal root of each
//! block is `H / sqrt(n)`. Neither `A` nor its root is ever materialized for
//! computation; both are applied blockwise in `O(N k)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default cap on `N` above which `S'` is not materialized.
pub const DEFAULT_DENSE_CAP: usize = 10_000;

#[derive(Debug, Clone)]
pub struct SemanticContext {
    u: DMatrix<f64>,
    s_prime: Option<DMatrix<f64>>,
    block_sizes: Vec<usize>,
    block_sqrt_scales: Vec<f64>,
}

/// Builds the semantic matrices for class-contiguous labels.
pub fn build_semantic_context(labels: &[usize], class_counts: &[usize]) -> Result<SemanticContext> {
    build_semantic_context_with_cap(labels, class_counts, DEFAULT_DENSE_CAP)
}

pub fn build_semantic_context_with_cap(
    labels: &[usize],
    class_counts: &[usize],
    dense_cap: usize,
) -> Result<SemanticContext> {
    let n = labels.len();
    let c = class_counts.len();
    for (i, w) in labels.windows(2).enumerate() {
        if w[1] < w[0] {
            return Err(Error::NotClassOrdered {
                position: i + 1,
                previous: w[0],
                label: w[1],
            });
        }
    }
    let mut observed = vec![0usize; c];
    for &l in labels {
        if l >= c {
            return Err(Error::DimensionMismatch {
                context: "semantic labels",
                expected: format!("label < {c}"),
                actual: l.to_string(),
            });
        }
        observed[l] += 1;
    }
    if observed != class_counts {
        return Err(Error::DimensionMismatch {
            context: "class counts",
            expected: format!("{observed:?}"),
            actual: format!("{class_counts:?}"),
        });
    }
    let u = DMatrix::from_fn(n, c, |i, k| if labels[i] == k { 1.0 } else { 0.0 });
    let s_prime = (n <= dense_cap).then(|| {
        DMatrix::from_fn(n, n, |i, j| if labels[i] == labels[j] { 1.0 } else { -1.0 })
    });
    Ok(SemanticContext {
        u,
        s_prime,
        block_sizes: class_counts.to_vec(),
        block_sqrt_scales: class_counts
            .iter()
            .map(|&n_d| if n_d == 0 { 0.0 } else { 1.0 / (n_d as f64).sqrt() })
            .collect(),
    })
}

impl SemanticContext {
    pub fn n_samples(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.u.ncols()
    }

    /// `N x c` one-hot label indicator.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Dense `S'`, when `N` is within the materialization cap.
    pub fn s_prime(&self) -> Option<&DMatrix<f64>> {
        self.s_prime.as_ref()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    /// `1 / sqrt(n_d)` per class: the scale of each block of `A^{1/2}`.
    pub fn block_sqrt_scales(&self) -> &[f64] {
        &self.block_sqrt_scales
    }

    fn check_rows(&self, m: &DMatrix<f64>, context: &'static str) -> Result<()> {
        if m.nrows() != self.n_samples() {
            return Err(Error::DimensionMismatch {
                context,
                expected: format!("{} rows", self.n_samples()),
                actual: format!("{} rows", m.nrows()),
            });
        }
        Ok(())
    }

    fn apply_blocks(&self, m: &DMatrix<f64>, scale: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        let mut start = 0;
        for (d, &n_d) in self.block_sizes.iter().enumerate() {
            if n_d == 0 {
                continue;
            }
            let s = scale(d);
            for col in 0..m.ncols() {
                let sum: f64 = m.view((start, col), (n_d, 1)).iter().sum();
                out.view_mut((start, col), (n_d, 1)).fill(sum * s);
            }
            start += n_d;
        }
        out
    }

    /// `A^{1/2} M`: every row of a class block becomes the block column sum
    /// divided by `sqrt(n_d)`.
    pub fn apply_a_sqrt(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(m, "apply_a_sqrt")?;
        Ok(self.apply_blocks(m, |d| self.block_sqrt_scales[d]))
    }

    /// `A M`: every row of a class block becomes the block column sum.
    pub fn apply_a(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(m, "apply_a")?;
        Ok(self.apply_blocks(m, |_| 1.0))
    }

    /// `S' M` through the factored form `2 U (U^T M) - 1 (1^T M)`.
    pub fn apply_s_prime(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(m, "apply_s_prime")?;
        let class_sums = self.u.transpose() * m;
        let total = m.row_sum();
        let mut out = &self.u * class_sums * 2.0;
        for mut row in out.row_iter_mut() {
            row -= &total;
        }
        Ok(out)
    }

    /// `||P Q^T - scale * S'||_F^2` without forming any `N x N` matrix:
    /// `tr(P^T P Q^T Q) - 2 scale tr(P^T S' Q) + scale^2 N^2`.
    pub fn reconstruction_error(&self, p: &DMatrix<f64>, q: &DMatrix<f64>, scale: f64) -> Result<f64> {
        if p.ncols() != q.ncols() {
            return Err(Error::DimensionMismatch {
                context: "reconstruction_error",
                expected: format!("{} code columns", p.ncols()),
                actual: format!("{} code columns", q.ncols()),
            });
        }
        let sq = self.apply_s_prime(q)?;
        self.check_rows(p, "reconstruction_error")?;
        let gram = (p.transpose() * p).component_mul(&(q.transpose() * q)).sum();
        let cross = p.component_mul(&sq).sum();
        let n = self.n_samples() as f64;
        Ok(gram - 2.0 * scale * cross + scale * scale * n * n)
    }

    /// Dense `A`; intended for oracles and small problems.
    pub fn materialize_a(&self) -> DMatrix<f64> {
        self.materialize_blocks(|_| 1.0)
    }

    /// Dense `A^{1/2}`; intended for oracles and small problems.
    pub fn materialize_a_sqrt(&self) -> DMatrix<f64> {
        self.materialize_blocks(|d| self.block_sqrt_scales[d])
    }

    /// Dense `S'` regardless of the cap.
    pub fn materialize_s_prime(&self) -> DMatrix<f64> {
        let mut s = &self.u * self.u.transpose() * 2.0;
        s.add_scalar_mut(-1.0);
        s
    }

    fn materialize_blocks(&self, scale: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let n = self.n_samples();
        let mut a = DMatrix::zeros(n, n);
        let mut start = 0;
        for (d, &n_d) in self.block_sizes.iter().enumerate() {
            a.view_mut((start, start), (n_d, n_d)).fill(scale(d));
            start += n_d;
        }
        a
    }
}
