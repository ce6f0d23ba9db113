use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("rank-deficient frame: {found} of {expected} columns are independent")]
    RankDeficient { expected: usize, found: usize },

    #[error("loop is singular at sample point λ = {lambda}")]
    SingularSample { lambda: Complex64 },

    #[error("aliasing: residual {residual:.3e} exceeds {tol:.3e}; increase the truncation or the sample count")]
    Aliasing { residual: f64, tol: f64 },

    #[error("truncation too small: {0}")]
    Truncation(String),

    #[error("admissibility violated: max |π⊥ μ₋₁ π| = {residual:.3e} > {tol:.3e} at grid point {point:?}")]
    Admissibility {
        residual: f64,
        tol: f64,
        point: (usize, usize),
    },

    #[error("frame is not holomorphic: ∂̄-defect {defect:.3e}")]
    NonHolomorphicFrame { defect: f64 },

    #[error("integration failed at z = {z}: {reason}")]
    Integration { z: Complex64, reason: String },

    #[error("not Grassmannian-valued: involution defect {defect:.3e} > {tol:.3e}")]
    NotGrassmannian { defect: f64, tol: f64 },

    #[error("uniton conditions fail: (a) {cond_a:.3e}, (b) {cond_b:.3e}, tolerance {tol:.3e}")]
    UnitonConditions { cond_a: f64, cond_b: f64, tol: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("certificate failed: {0}")]
    Certificate(String),

    #[error("at grid point ({i}, {j}), z = {z}: {source}")]
    AtPoint {
        i: usize,
        j: usize,
        z: Complex64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, i: usize, j: usize, z: Complex64) -> Error {
        Error::AtPoint {
            i,
            j,
            z,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
