use std::fmt;

use thiserror::Error;

/// Pipeline stage in which an error surfaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Flow,
    DetectOrder,
    Group,
    Form,
    Compactify,
    Normality,
    Retract,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Input => "input",
            Stage::Flow => "flow",
            Stage::DetectOrder => "detect_order",
            Stage::Group => "group",
            Stage::Form => "form",
            Stage::Compactify => "compactify",
            Stage::Normality => "normality",
            Stage::Retract => "retract",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular (smallest singular value {sigma_min:e}, threshold {threshold:e})")]
    SingularMatrix { sigma_min: f64, threshold: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("{value} is not within {tol:e} of a root of unity of order <= {max_order}")]
    NotARootOfUnity {
        value: num_complex::Complex64,
        max_order: u64,
        tol: f64,
    },

    #[error("invalid Baumslag-Solitar parameters ({p}, {q}): {reason}")]
    InvalidGroup { p: i64, q: i64, reason: &'static str },

    #[error("invalid orbit datum: {0}")]
    InvalidOrbit(String),

    #[error("representations belong to different groups")]
    GroupMismatch,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("{u} is not a unit modulo {modulus}")]
    NotAUnit { u: i64, modulus: u64 },

    #[error("matrix does not have finite order: {0}")]
    NotFiniteOrder(String),

    #[error("generated group is degenerate: {0}")]
    DegenerateGroup(String),

    #[error("A does not normalize <B> (best exponent {best_exponent}, distance {distance:e})")]
    NotNormalizing { best_exponent: u64, distance: f64 },

    #[error("polar factor does not commute with B (defect {defect:e})")]
    PolarObstruction { defect: f64 },

    #[error("B is not unitary (defect {defect:e})")]
    NotUnitary { defect: f64 },

    #[error("flow did not reach the Kempf-Ness set ({outcome} after {iterations} iterations, ‖μ‖ = {moment_norm:e})")]
    FlowNotConverged {
        outcome: &'static str,
        iterations: usize,
        moment_norm: f64,
    },

    #[error("representation is not special linear: {0}")]
    NotSpecialLinear(String),

    #[error("representation fails the defining relation (residual {residual:e} > {tol:e})")]
    NotInVariety { residual: f64, tol: f64 },

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
