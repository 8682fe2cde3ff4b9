//! Non-canonical solver: one projection pair per step, each the top pencil
//! eigenvector of a residual target that is downdated by the sign codes of
//! the previous pair.
//!
//! With `Px = A^{1/2} x'` and `Py = A^{1/2} y'`, the target starts at
//! `D0 = Px^T S' Py` and after step `t` becomes
//! `D_t = D_{t-1} - (Px^T sgn(Px w_x^t)) (Py^T sgn(Py w_y^t))^T`,
//! which equals `Px^T R_t Py` with `R_t = S' - sum_k sgn(..) sgn(..)^T`.
//! Each pair is normalized to `w^T (R + rI) w = 1`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::dataset::MultiModalDataset;
use crate::dccm::require_classes;
use crate::encode::sign_codes;
use crate::error::{Error, Result};
use crate::linalg::{build_gev, center, solve_gev, weighted_features, CenteredPair, Coupling, GevProblem, Ridge};
use crate::model::{Method, ProjectionModel};
use crate::semantics::{build_semantic_context, SemanticContext};

/// A target whose Frobenius norm falls below this fraction of `||D0||` is
/// treated as exhausted.
pub const DEGENERATE_RELATIVE_NORM: f64 = 1e-12;

/// `D0 = 2 (Px^T U)(Py^T U)^T - (Px^T 1)(Py^T 1)^T`, never forming `S'`.
pub fn init_d0(cp: &CenteredPair, ctx: &SemanticContext) -> Result<DMatrix<f64>> {
    let (px, py) = weighted_features(cp, ctx)?;
    Ok(init_d0_weighted(&px, &py, ctx))
}

fn init_d0_weighted(px: &DMatrix<f64>, py: &DMatrix<f64>, ctx: &SemanticContext) -> DMatrix<f64> {
    let xu = px.transpose() * ctx.u();
    let yu = py.transpose() * ctx.u();
    let x1 = px.row_sum().transpose();
    let y1 = py.row_sum().transpose();
    xu * yu.transpose() * 2.0 - x1 * y1.transpose()
}

/// Iteration state: the current target plus everything solved so far.
#[derive(Debug, Clone)]
pub struct DeflationState {
    /// Number of completed steps.
    pub t: usize,
    pub d: DMatrix<f64>,
    pub d0_norm: f64,
    pub residual_trace: Vec<f64>,
    pub w_x: Vec<DVector<f64>>,
    pub w_y: Vec<DVector<f64>>,
    pub lambdas: Vec<f64>,
    pub degenerate: Vec<bool>,
    codes_x: Vec<DVector<f64>>,
    codes_y: Vec<DVector<f64>>,
}

impl DeflationState {
    pub fn new(d0: DMatrix<f64>) -> Self {
        Self {
            t: 0,
            d0_norm: d0.norm(),
            d: d0,
            residual_trace: Vec::new(),
            w_x: Vec::new(),
            w_y: Vec::new(),
            lambdas: Vec::new(),
            degenerate: Vec::new(),
            codes_x: Vec::new(),
            codes_y: Vec::new(),
        }
    }

    pub fn is_exhausted(&self) -> bool {
        let norm = self.d.norm();
        norm == 0.0 || norm <= DEGENERATE_RELATIVE_NORM * self.d0_norm
    }
}

/// Result of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub w_x: DVector<f64>,
    pub w_y: DVector<f64>,
    pub lambda: f64,
    pub degenerate: bool,
}

/// Whitening blocks shared by every step.
#[derive(Debug, Clone)]
pub struct StepBlocks {
    pub r_xx: DMatrix<f64>,
    pub r_yy: DMatrix<f64>,
    pub ridge_x: f64,
    pub ridge_y: f64,
}

impl From<GevProblem> for StepBlocks {
    fn from(p: GevProblem) -> Self {
        Self {
            r_xx: p.r_xx,
            r_yy: p.r_yy,
            ridge_x: p.ridge_x,
            ridge_y: p.ridge_y,
        }
    }
}

/// Top eigenpair of `[0 D; D^T 0]` against `blockdiag(Rxx + rI, Ryy + rI)`.
/// An exhausted target yields zero vectors, `lambda = 0` and the degeneracy flag.
pub fn dnccm_step(state: &DeflationState, blocks: &StepBlocks) -> Result<StepOutcome> {
    let (m, p) = (blocks.r_xx.nrows(), blocks.r_yy.nrows());
    if state.d.shape() != (m, p) {
        return Err(Error::DimensionMismatch {
            context: "dnccm_step",
            expected: format!("{m}x{p} target"),
            actual: format!("{:?}", state.d.shape()),
        });
    }
    if state.is_exhausted() {
        return Ok(StepOutcome {
            w_x: DVector::zeros(m),
            w_y: DVector::zeros(p),
            lambda: 0.0,
            degenerate: true,
        });
    }
    let prob = GevProblem {
        r_xy: state.d.clone(),
        r_xx: blocks.r_xx.clone(),
        r_yy: blocks.r_yy.clone(),
        ridge_x: blocks.ridge_x,
        ridge_y: blocks.ridge_y,
    };
    let sol = solve_gev(&prob, 1)?;
    let w_x = sol.w_x.column(0).into_owned();
    let w_y = sol.w_y.column(0).into_owned();
    let lambda = (w_x.transpose() * &state.d * &w_y)[(0, 0)];
    Ok(StepOutcome {
        w_x,
        w_y,
        lambda,
        degenerate: false,
    })
}

/// Rank-one downdate of the target by the sign codes of `(w_x, w_y)`.
/// Zero vectors (a degenerate step) leave the target unchanged.
pub fn update_d(
    d: &DMatrix<f64>,
    px: &DMatrix<f64>,
    py: &DMatrix<f64>,
    w_x: &DVector<f64>,
    w_y: &DVector<f64>,
) -> DMatrix<f64> {
    if w_x.iter().all(|&v| v == 0.0) && w_y.iter().all(|&v| v == 0.0) {
        return d.clone();
    }
    let bx = sign_codes(&(px * w_x));
    let by = sign_codes(&(py * w_y));
    d - (px.transpose() * bx) * (py.transpose() * by).transpose()
}

/// Runs `iterations` steps (default `m + p`).
pub fn fit_dnccm(
    train: &MultiModalDataset,
    iterations: Option<usize>,
    ridge: Ridge,
) -> Result<ProjectionModel> {
    require_classes(train)?;
    let (m, p) = (train.x_dim(), train.y_dim());
    let q = iterations.unwrap_or(m + p);
    if q == 0 {
        return Err(Error::InvalidParameter("iteration count must be at least 1".into()));
    }
    if q > m.min(p) {
        warn!(
            "{q} iterations requested but only {} pairs are linearly independent; later columns come from the deflated, rank-deficient problem",
            m.min(p)
        );
    }
    let (x, y) = train.canonical_features();
    let cp = center(&x, &y)?;
    let ctx = build_semantic_context(train.labels(), train.class_counts())?;
    let (px, py) = weighted_features(&cp, &ctx)?;
    let blocks: StepBlocks = build_gev(&cp, &ctx, Coupling::SPrime, ridge)?.into();
    let mut state = DeflationState::new(init_d0_weighted(&px, &py, &ctx));
    for _ in 0..q {
        let step = dnccm_step(&state, &blocks)?;
        state.d = update_d(&state.d, &px, &py, &step.w_x, &step.w_y);
        state.codes_x.push(sign_codes(&(&px * &step.w_x)));
        state.codes_y.push(sign_codes(&(&py * &step.w_y)));
        state.t += 1;
        let bx = DMatrix::from_columns(&state.codes_x);
        let by = DMatrix::from_columns(&state.codes_y);
        state
            .residual_trace
            .push(ctx.reconstruction_error(&bx, &by, state.t as f64)?);
        state.w_x.push(step.w_x);
        state.w_y.push(step.w_y);
        state.lambdas.push(step.lambda);
        state.degenerate.push(step.degenerate);
    }
    if state.degenerate.iter().any(|&d| d) {
        warn!(
            "{} of {q} steps had an exhausted target and produced zero columns",
            state.degenerate.iter().filter(|&&d| d).count()
        );
    }
    Ok(ProjectionModel {
        method: Method::Dnccm,
        w_x: DMatrix::from_columns(&state.w_x),
        w_y: DMatrix::from_columns(&state.w_y),
        x_mean: cp.x_mean,
        y_mean: cp.y_mean,
        spectrum: state.lambdas,
        degenerate: state.degenerate,
        residual_trace: state.residual_trace,
        n_classes: train.n_classes(),
        ridge_x: blocks.ridge_x,
        ridge_y: blocks.ridge_y,
    })
}
