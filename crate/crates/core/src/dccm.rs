//! Canonical solver: one closed-form generalized eigenvalue solve.
//!
//! The class-weighted features `A^{1/2} x'` and `A^{1/2} y'` are coupled
//! through the signed similarity `S'`; the top `L` pencil eigenvectors are
//! rescaled so that `W^T (R + rI) W = N I`.

use log::warn;

use crate::dataset::MultiModalDataset;
use crate::encode::sign_codes;
use crate::error::{Error, Result};
use crate::linalg::{build_gev, center, solve_gev, subtract_mean, Coupling, Ridge};
use crate::model::{Method, ProjectionModel};
use crate::semantics::{build_semantic_context, SemanticContext};

/// `min(m, p, c - 1)`, the default code length.
pub fn default_code_length(train: &MultiModalDataset) -> usize {
    train
        .x_dim()
        .min(train.y_dim())
        .min(train.n_present_classes().saturating_sub(1))
        .max(1)
}

pub(crate) fn require_classes(train: &MultiModalDataset) -> Result<()> {
    match train.n_present_classes() {
        c if c < 2 => Err(Error::TooFewClasses(c)),
        _ => Ok(()),
    }
}

pub fn fit_dccm(
    train: &MultiModalDataset,
    code_length: Option<usize>,
    ridge: Ridge,
) -> Result<ProjectionModel> {
    require_classes(train)?;
    let l = code_length.unwrap_or_else(|| default_code_length(train));
    let rank = train.n_present_classes() - 1;
    if l > rank {
        warn!(
            "code length {l} exceeds the semantic rank {rank}; eigenvalues past {rank} are near zero and their directions are arbitrary"
        );
    }
    let (x, y) = train.canonical_features();
    let cp = center(&x, &y)?;
    let ctx = build_semantic_context(train.labels(), train.class_counts())?;
    let prob = build_gev(&cp, &ctx, Coupling::SPrime, ridge)?;
    let sol = solve_gev(&prob, l)?.with_constraint_scale(train.n_samples() as f64);
    Ok(ProjectionModel {
        method: Method::Dccm,
        w_x: sol.w_x,
        w_y: sol.w_y,
        x_mean: cp.x_mean,
        y_mean: cp.y_mean,
        degenerate: vec![false; l],
        spectrum: sol.eigenvalues,
        residual_trace: Vec::new(),
        n_classes: train.n_classes(),
        ridge_x: prob.ridge_x,
        ridge_y: prob.ridge_y,
    })
}

/// `(A^{1/2} x' W_x, A^{1/2} y' W_y)` using the model's means.
pub fn weighted_projections(
    model: &ProjectionModel,
    ds: &MultiModalDataset,
    ctx: &SemanticContext,
) -> Result<(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)> {
    check_dims(model, ds)?;
    let xp = subtract_mean(ds.x(), &model.x_mean)?;
    let yp = subtract_mean(ds.y(), &model.y_mean)?;
    Ok((
        ctx.apply_a_sqrt(&(xp * &model.w_x))?,
        ctx.apply_a_sqrt(&(yp * &model.w_y))?,
    ))
}

/// Signed hashing objective `||sgn(P) sgn(Q)^T - L S'||^2`.
pub fn objective_dccm(model: &ProjectionModel, ds: &MultiModalDataset) -> Result<f64> {
    let ctx = build_semantic_context(ds.labels(), ds.class_counts())?;
    let (p, q) = weighted_projections(model, ds, &ctx)?;
    ctx.reconstruction_error(&sign_codes(&p), &sign_codes(&q), model.code_length() as f64)
}

/// Relaxed objective `||P Q^T - L S'||^2` with the sign function dropped.
pub fn relaxed_objective(model: &ProjectionModel, ds: &MultiModalDataset) -> Result<f64> {
    let ctx = build_semantic_context(ds.labels(), ds.class_counts())?;
    let (p, q) = weighted_projections(model, ds, &ctx)?;
    ctx.reconstruction_error(&p, &q, model.code_length() as f64)
}

pub(crate) fn check_dims(model: &ProjectionModel, ds: &MultiModalDataset) -> Result<()> {
    if ds.x_dim() != model.x_dim() || ds.y_dim() != model.y_dim() {
        return Err(Error::DimensionMismatch {
            context: "model vs data",
            expected: format!("x {} cols, y {} cols", model.x_dim(), model.y_dim()),
            actual: format!("x {} cols, y {} cols", ds.x_dim(), ds.y_dim()),
        });
    }
    Ok(())
}
