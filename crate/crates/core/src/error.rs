use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario parse error: {0}")]
    Parse(String),

    /// A scenario key violates one of its constraints.
    #[error("invalid scenario: {key}: {constraint}")]
    Invalid { key: String, constraint: String },

    #[error("r_j formula inconsistent: normalization sum {sum} deviates from 1 by more than {tol}")]
    Normalization { sum: f64, tol: f64 },

    #[error("series truncation: J_max = {j_max} too small (tail term ratio {ratio:e} > tol {tol:e})")]
    Truncation { j_max: usize, ratio: f64, tol: f64 },

    #[error("degenerate: H_pe = 1 when the angle error deviation is zero")]
    DegeneratePointing,

    #[error("cone model invalid for N = {0} (side-lobe numerator is not positive)")]
    ConeModel(u32),

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {bound:e}")]
    Quadrature { estimate: f64, bound: f64 },

    #[error("conditional coverage {value} outside [0, 1] beyond clamp slack")]
    Clamp { value: f64 },

    #[error("{0}")]
    Input(String),
}
