//! Discriminative vectorial representation of two feature modalities.
//!
//! Projection pairs `(W_x, W_y)` are fitted so that class-weighted
//! projections of both modalities agree with the label similarity structure
//! while within-class correlation is maximized. Two solvers are provided:
//!
//! * [`fit_dccm`]: canonical, a single closed-form generalized eigenvalue solve;
//! * [`fit_dnccm`]: non-canonical, one pair per step with a sign-code deflation
//!   of the target between steps.
//!
//! Fitted models project new samples, hash them to `{-1, +1}` codes, and are
//! scored with a k-NN classifier on fused projections ([`evaluate`]).

pub mod dataset;
pub mod dccm;
pub mod dnccm;
pub mod encode;
pub mod error;
pub mod linalg;
pub mod model;
pub mod semantics;

pub use dataset::{load_dataset, split, MultiModalDataset, SplitSpec};
pub use dccm::{default_code_length, fit_dccm, objective_dccm, relaxed_objective};
pub use dnccm::fit_dnccm;
pub use encode::{
    evaluate, export_projection_trace, fuse, hash, project, Distance, EvalOptions, EvalReport,
    FusionRule, HashCodes,
};
pub use error::{Error, Result};
pub use linalg::{build_gev, center, solve_gev, CenteredPair, Coupling, GevProblem, GevSolution, Ridge};
pub use model::{Method, ProjectionModel};
pub use semantics::{build_semantic_context, SemanticContext};

/// Fits either solver. `code_length` is `L` for dccm and the iteration count
/// `Q` for dnccm; `None` selects each solver's default.
pub fn fit(
    method: Method,
    train: &MultiModalDataset,
    code_length: Option<usize>,
    ridge: Ridge,
) -> Result<ProjectionModel> {
    match method {
        Method::Dccm => fit_dccm(train, code_length, ridge),
        Method::Dnccm => fit_dnccm(train, code_length, ridge),
    }
}
