//! Centering, the class-weighted correlation blocks, and the two-block
//! generalized eigenvalue solver.
//!
//! The pencil
//!
//! ```text
//! [ 0     Rxy ] [wx]       [ Rxx  0  ] [wx]
//! [ Rxy^T  0  ] [wy] = lam [  0  Ryy ] [wy]
//! ```
//!
//! is solved by whitening each block with its inverse square root and taking
//! the singular triplets of `K = Rxx^{-1/2} Rxy Ryy^{-1/2}`. The pencil
//! spectrum is `±sigma_i` (plus zeros when `m != p`); only the nonnegative half
//! is returned.
//!
//! The triplets come from the symmetric eigendecomposition of `[0 K; K^T 0]`,
//! whose eigenvectors for `+sigma_i` are `[u_i; v_i] / sqrt(2)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::semantics::SemanticContext;

/// Relative factor for the automatic ridge: `1e-6 * trace(R) / dim`.
pub const AUTO_RIDGE_FACTOR: f64 = 1e-6;

/// Mean-centered copies of both modalities with the means that were removed.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredPair {
    pub x_prime: DMatrix<f64>,
    pub y_prime: DMatrix<f64>,
    pub x_mean: DVector<f64>,
    pub y_mean: DVector<f64>,
}

/// Subtracts the column means of each modality.
pub fn center(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<CenteredPair> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            context: "center",
            expected: format!("{} rows in y", x.nrows()),
            actual: format!("{} rows", y.nrows()),
        });
    }
    if x.nrows() < 2 {
        return Err(Error::TooFewSamples(x.nrows()));
    }
    let x_mean = column_means(x);
    let y_mean = column_means(y);
    Ok(CenteredPair {
        x_prime: subtract_mean(x, &x_mean)?,
        y_prime: subtract_mean(y, &y_mean)?,
        x_mean,
        y_mean,
    })
}

pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    m.row_mean().transpose()
}

/// `m - 1 mean^T`.
pub fn subtract_mean(m: &DMatrix<f64>, mean: &DVector<f64>) -> Result<DMatrix<f64>> {
    if m.ncols() != mean.len() {
        return Err(Error::DimensionMismatch {
            context: "subtract_mean",
            expected: format!("{} columns", mean.len()),
            actual: format!("{} columns", m.ncols()),
        });
    }
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row -= mean.transpose();
    }
    Ok(out)
}

/// Ridge added to the diagonal of `Rxx` and `Ryy` before whitening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `1e-6 * trace(R) / dim`, chosen per modality.
    Auto,
    Fixed(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Auto
    }
}

impl Ridge {
    pub fn resolve(&self, r: &DMatrix<f64>) -> Result<f64> {
        match *self {
            Ridge::Auto => Ok(AUTO_RIDGE_FACTOR * r.trace().max(0.0) / r.nrows().max(1) as f64),
            Ridge::Fixed(v) if v >= 0.0 && v.is_finite() => Ok(v),
            Ridge::Fixed(v) => Err(Error::InvalidParameter(format!(
                "ridge must be a finite nonnegative number, got {v}"
            ))),
        }
    }
}

impl std::str::FromStr for Ridge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Ridge::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("ridge `{s}` is neither `auto` nor a number")))?;
        Ridge::Fixed(v).resolve(&DMatrix::zeros(0, 0)).map(Ridge::Fixed)
    }
}

/// The `N x N` operator placed between `A^{1/2} x'` and `A^{1/2} y'` in `Rxy`.
#[derive(Debug, Clone, Copy)]
pub enum Coupling<'a> {
    /// The signed semantic similarity, applied in factored form.
    SPrime,
    /// Any dense `N x N` target, e.g. a deflated residual.
    Dense(&'a DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GevProblem {
    pub r_xy: DMatrix<f64>,
    pub r_xx: DMatrix<f64>,
    pub r_yy: DMatrix<f64>,
    pub ridge_x: f64,
    pub ridge_y: f64,
}

/// `A^{1/2} x'` and `A^{1/2} y'`, the class-weighted features every block is built from.
pub fn weighted_features(
    cp: &CenteredPair,
    ctx: &SemanticContext,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok((ctx.apply_a_sqrt(&cp.x_prime)?, ctx.apply_a_sqrt(&cp.y_prime)?))
}

/// Assembles `Rxx = x'^T A x'`, `Ryy = y'^T A y'` and
/// `Rxy = (A^{1/2} x')^T C (A^{1/2} y')`.
pub fn build_gev(
    cp: &CenteredPair,
    ctx: &SemanticContext,
    coupling: Coupling<'_>,
    ridge: Ridge,
) -> Result<GevProblem> {
    let (px, py) = weighted_features(cp, ctx)?;
    let r_xx = symmetrize(&(cp.x_prime.transpose() * ctx.apply_a(&cp.x_prime)?));
    let r_yy = symmetrize(&(cp.y_prime.transpose() * ctx.apply_a(&cp.y_prime)?));
    let coupled_y = match coupling {
        Coupling::SPrime => ctx.apply_s_prime(&py)?,
        Coupling::Dense(c) => {
            if c.nrows() != py.nrows() || c.ncols() != py.nrows() {
                return Err(Error::DimensionMismatch {
                    context: "build_gev coupling",
                    expected: format!("{0}x{0}", py.nrows()),
                    actual: format!("{}x{}", c.nrows(), c.ncols()),
                });
            }
            c * &py
        }
    };
    let r_xy = px.transpose() * coupled_y;
    let ridge_x = ridge.resolve(&r_xx)?;
    let ridge_y = ridge.resolve(&r_yy)?;
    Ok(GevProblem {
        r_xy,
        r_xx,
        r_yy,
        ridge_x,
        ridge_y,
    })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct GevSolution {
    /// `m x L`, columns ordered by descending eigenvalue.
    pub w_x: DMatrix<f64>,
    /// `p x L`.
    pub w_y: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl GevSolution {
    /// Rescales so that `W^T (R + rI) W = scale * I`.
    pub fn with_constraint_scale(mut self, scale: f64) -> Self {
        let f = scale.sqrt();
        self.w_x *= f;
        self.w_y *= f;
        self
    }
}

/// `(R + ridge I)^{-1/2}` via symmetric eigendecomposition, eigenvalues
/// floored at `ridge`.
pub(crate) fn regularized_inv_sqrt(
    r: &DMatrix<f64>,
    ridge: f64,
    block: &'static str,
) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::try_new(symmetrize(r), f64::EPSILON, 0)
        .ok_or(Error::NoConvergence("symmetric eigendecomposition"))?;
    let scale = eig.eigenvalues.amax().max(ridge);
    let min = eig.eigenvalues.min();
    let floor = 1e-14 * scale;
    if min < -1e-10 * scale || min + ridge <= floor || scale == 0.0 {
        return Err(Error::NotPositiveDefinite {
            block,
            ridge,
            min_eigenvalue: min + ridge,
        });
    }
    let inv_sqrt = eig
        .eigenvalues
        .map(|l| 1.0 / (l + ridge).max(ridge).max(floor).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose())
}

/// Top-`pairs` eigenpairs of the two-block pencil.
///
/// Each column pair satisfies `W_x^T (Rxx + rI) W_x = 1`; eigenvalues are the
/// singular values of the whitened coupling and are nonnegative. The first
/// significant entry of every `W_x` column is positive.
pub fn solve_gev(prob: &GevProblem, pairs: usize) -> Result<GevSolution> {
    let (m, p) = (prob.r_xx.nrows(), prob.r_yy.nrows());
    if prob.r_xy.shape() != (m, p) || prob.r_xx.ncols() != m || prob.r_yy.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "solve_gev",
            expected: format!("Rxy {m}x{p}, square Rxx/Ryy"),
            actual: format!(
                "Rxy {:?}, Rxx {:?}, Ryy {:?}",
                prob.r_xy.shape(),
                prob.r_xx.shape(),
                prob.r_yy.shape()
            ),
        });
    }
    if pairs == 0 {
        return Err(Error::InvalidParameter("pair count must be at least 1".into()));
    }
    if pairs > m.min(p) {
        return Err(Error::TooManyPairs {
            requested: pairs,
            available: m.min(p),
        });
    }
    let kx = regularized_inv_sqrt(&prob.r_xx, prob.ridge_x, "Rxx")?;
    let ky = regularized_inv_sqrt(&prob.r_yy, prob.ridge_y, "Ryy")?;
    let k = &kx * &prob.r_xy * &ky;
    let (u, v, sigma) = top_singular_triplets(&k, pairs)?;

    let mut w_x = DMatrix::zeros(m, pairs);
    let mut w_y = DMatrix::zeros(p, pairs);
    for col in 0..pairs {
        let mut wx = &kx * u.column(col);
        let mut wy = &ky * v.column(col);
        if leading_sign(&wx) < 0.0 {
            wx.neg_mut();
            wy.neg_mut();
        }
        w_x.set_column(col, &wx);
        w_y.set_column(col, &wy);
    }
    let eigenvalues = sigma;
    Ok(GevSolution {
        w_x,
        w_y,
        eigenvalues,
    })
}

/// Leading `pairs` singular triplets of `k`, singular values descending.
/// Left and right vectors are unit length; inside a (numerically) null
/// singular subspace the missing side is completed orthonormally.
fn top_singular_triplets(
    k: &DMatrix<f64>,
    pairs: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> {
    let (m, p) = k.shape();
    let mut aug = DMatrix::zeros(m + p, m + p);
    aug.view_mut((0, m), (m, p)).copy_from(k);
    aug.view_mut((m, 0), (p, m)).copy_from(&k.transpose());
    let eig = SymmetricEigen::try_new(aug, f64::EPSILON, 0)
        .ok_or(Error::NoConvergence("symmetric eigendecomposition"))?;
    let mut order: Vec<usize> = (0..m + p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalue is NaN")
    });

    let mut u = DMatrix::zeros(m, pairs);
    let mut v = DMatrix::zeros(p, pairs);
    let mut sigma = Vec::with_capacity(pairs);
    for (col, &i) in order.iter().take(pairs).enumerate() {
        let z = eig.eigenvectors.column(i);
        let ui = z.rows(0, m).into_owned();
        let vi = z.rows(m, p).into_owned();
        u.set_column(col, &unit_or_complement(ui, &u.columns(0, col).into_owned()));
        v.set_column(col, &unit_or_complement(vi, &v.columns(0, col).into_owned()));
        sigma.push(eig.eigenvalues[i].max(0.0));
    }
    Ok((u, v, sigma))
}

/// Normalizes `x` after projecting out `basis`; if nothing significant is
/// left, returns the first canonical vector outside the span of `basis`.
fn unit_or_complement(x: DVector<f64>, basis: &DMatrix<f64>) -> DVector<f64> {
    let project_out = |x: DVector<f64>| {
        if basis.ncols() == 0 {
            x
        } else {
            let coef = basis.transpose() * &x;
            x - basis * coef
        }
    };
    let r = project_out(x);
    if r.norm() > 1e-6 {
        return r.normalize();
    }
    let n = basis.nrows();
    let mut best = DVector::zeros(n);
    for j in 0..n {
        let r = project_out(DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }));
        if r.norm() > best.norm() + 1e-12 {
            best = r;
        }
    }
    best.normalize()
}

fn leading_sign(v: &DVector<f64>) -> f64 {
    let tol = 1e-12 * v.amax();
    v.iter()
        .find(|x| x.abs() > tol)
        .map_or(1.0, |x| x.signum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::build_semantic_context;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let g = random(rng, n + 3, n);
        g.transpose() * g + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn center_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let y = DMatrix::from_row_slice(2, 1, &[5.0, 5.0]);
        let cp = center(&x, &y).unwrap();
        assert_eq!(cp.x_mean.as_slice(), &[2.0, 3.0]);
        assert_eq!(cp.x_prime, DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, 1.0, 1.0]));
        assert_eq!(cp.y_prime, DMatrix::zeros(2, 1));
        let again = center(&cp.x_prime, &cp.y_prime).unwrap();
        assert!((again.x_prime - &cp.x_prime).abs().max() < 1e-12);
        assert!(center(&x, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn centered_columns_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 17, 4) * 100.0;
        let y = random(&mut rng, 17, 2);
        let cp = center(&x, &y).unwrap();
        for col in cp.x_prime.column_iter() {
            assert!(col.sum().abs() < 1e-9 * 17.0 * 100.0);
        }
    }

    #[test]
    fn scalar_gev() {
        let prob = GevProblem {
            r_xy: DMatrix::from_element(1, 1, 2.0),
            r_xx: DMatrix::from_element(1, 1, 1.0),
            r_yy: DMatrix::from_element(1, 1, 1.0),
            ridge_x: 0.0,
            ridge_y: 0.0,
        };
        let sol = solve_gev(&prob, 1).unwrap();
        assert!((sol.eigenvalues[0] - 2.0).abs() < 1e-14);
        assert!((sol.w_x[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((sol.w_y[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(matches!(
            solve_gev(&prob, 2),
            Err(Error::TooManyPairs { requested: 2, available: 1 })
        ));
    }

    #[test]
    fn negative_coupling_flips_y() {
        let prob = GevProblem {
            r_xy: DMatrix::from_element(1, 1, -3.0),
            r_xx: DMatrix::from_element(1, 1, 4.0),
            r_yy: DMatrix::from_element(1, 1, 1.0),
            ridge_x: 0.0,
            ridge_y: 0.0,
        };
        let sol = solve_gev(&prob, 1).unwrap();
        assert!((sol.eigenvalues[0] - 1.5).abs() < 1e-14);
        assert!(sol.w_x[(0, 0)] > 0.0 && sol.w_y[(0, 0)] < 0.0);
    }

    #[test]
    fn indefinite_block_is_reported() {
        let prob = GevProblem {
            r_xy: DMatrix::from_element(2, 1, 1.0),
            r_xx: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            r_yy: DMatrix::from_element(1, 1, 1.0),
            ridge_x: 0.0,
            ridge_y: 0.0,
        };
        let err = solve_gev(&prob, 1).unwrap_err();
        assert!(err.is_numerical());
        assert!(err.to_string().contains("increase the ridge"));
        let singular = GevProblem {
            r_xx: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            ..prob
        };
        assert!(solve_gev(&singular, 1).is_err());
        let ridged = GevProblem {
            ridge_x: 1e-3,
            ..singular
        };
        assert!(solve_gev(&ridged, 1).is_ok());
    }

    #[test]
    fn residuals_and_unit_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (m, p) = (4, 3);
        let prob = GevProblem {
            r_xy: random(&mut rng, m, p),
            r_xx: spd(&mut rng, m),
            r_yy: spd(&mut rng, p),
            ridge_x: 0.01,
            ridge_y: 0.02,
        };
        let sol = solve_gev(&prob, 3).unwrap();
        let bx = &prob.r_xx + DMatrix::identity(m, m) * prob.ridge_x;
        let by = &prob.r_yy + DMatrix::identity(p, p) * prob.ridge_y;
        let gram = sol.w_x.transpose() * &bx * &sol.w_x;
        assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-10);
        for (j, &lam) in sol.eigenvalues.iter().enumerate() {
            let wx = sol.w_x.column(j);
            let wy = sol.w_y.column(j);
            let r1 = &prob.r_xy * wy - &bx * wx * lam;
            let r2 = prob.r_xy.transpose() * wx - &by * wy * lam;
            assert!(r1.norm() <= 1e-6 * (&prob.r_xy * wy).norm());
            assert!(r2.norm() <= 1e-6 * (prob.r_xy.transpose() * wx).norm());
        }
        assert!(sol.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let objective = (sol.w_x.transpose() * &prob.r_xy * &sol.w_y).trace();
        let sum: f64 = sol.eigenvalues.iter().sum();
        assert!((2.0 * objective - 2.0 * sum).abs() < 1e-10 * sum);

        let scaled = sol.clone().with_constraint_scale(5.0);
        let gram = scaled.w_x.transpose() * &bx * &scaled.w_x;
        assert!((gram - DMatrix::identity(3, 3) * 5.0).abs().max() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prob = GevProblem {
            r_xy: random(&mut rng, 5, 6),
            r_xx: spd(&mut rng, 5),
            r_yy: spd(&mut rng, 6),
            ridge_x: 0.0,
            ridge_y: 0.0,
        };
        assert_eq!(solve_gev(&prob, 4).unwrap(), solve_gev(&prob, 4).unwrap());
    }

    #[test]
    fn build_gev_singletons_and_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 2, 2);
        let y = random(&mut rng, 2, 1);
        let cp = center(&x, &y).unwrap();
        let ctx = build_semantic_context(&[0, 1], &[1, 1]).unwrap();
        let prob = build_gev(&cp, &ctx, Coupling::SPrime, Ridge::Fixed(0.0)).unwrap();
        let want = cp.x_prime.transpose() * &cp.x_prime;
        assert!((&prob.r_xx - want).abs().max() < 1e-14);

        // m = p = 1, N = 4, two classes of two
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 4.0, 7.0]);
        let y = DMatrix::from_row_slice(4, 1, &[0.5, -1.0, 3.0, 2.0]);
        let cp = center(&x, &y).unwrap();
        let ctx = build_semantic_context(&[0, 0, 1, 1], &[2, 2]).unwrap();
        let prob = build_gev(&cp, &ctx, Coupling::SPrime, Ridge::Auto).unwrap();
        let root = ctx.materialize_a_sqrt();
        let s = ctx.materialize_s_prime();
        let dense = cp.x_prime.transpose() * &root * &s * &root * &cp.y_prime;
        assert!((prob.r_xy[(0, 0)] - dense[(0, 0)]).abs() < 1e-12);
        let dense_rt = build_gev(&cp, &ctx, Coupling::Dense(&s), Ridge::Auto).unwrap();
        assert!((dense_rt.r_xy - &prob.r_xy).abs().max() < 1e-12);
        let a = ctx.materialize_a();
        let rxx = cp.x_prime.transpose() * &a * &cp.x_prime;
        assert!((prob.r_xx[(0, 0)] - rxx[(0, 0)]).abs() < 1e-12);
        assert!((prob.ridge_x - 1e-6 * rxx[(0, 0)]).abs() < 1e-18);

        // discriminative correlation: within minus between equals 2 x'^T A y'
        let within = cp.x_prime.transpose() * ctx.apply_a(&cp.y_prime).unwrap();
        let between = -within.clone();
        assert!(((&within - &between) - 2.0 * cp.x_prime.transpose() * &a * &cp.y_prime)
            .abs()
            .max()
            < 1e-12);
    }

    #[test]
    fn zero_ridge_solves_the_unregularized_pencil() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let prob = GevProblem {
            r_xy: random(&mut rng, 3, 3),
            r_xx: spd(&mut rng, 3),
            r_yy: spd(&mut rng, 3),
            ridge_x: 0.0,
            ridge_y: 0.0,
        };
        let sol = solve_gev(&prob, 2).unwrap();
        for j in 0..2 {
            let (wx, wy) = (sol.w_x.column(j), sol.w_y.column(j));
            let lhs = &prob.r_xy * wy;
            assert!((&lhs - &prob.r_xx * wx * sol.eigenvalues[j]).norm() < 1e-10 * lhs.norm());
            assert!(((wx.transpose() * &prob.r_xx * wx)[(0, 0)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_parsing() {
        assert_eq!("auto".parse::<Ridge>().unwrap(), Ridge::Auto);
        assert_eq!("0.5".parse::<Ridge>().unwrap(), Ridge::Fixed(0.5));
        assert!("-1".parse::<Ridge>().is_err());
        assert!("x".parse::<Ridge>().is_err());
    }
}
