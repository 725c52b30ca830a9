//! Dense linear algebra: matrices, truncated and slice-streamed SVD,
//! pseudoinverse and the block selectors used by the sequence autoencoder.

mod matrix;
mod pinv;
mod selectors;
mod svd;

pub use matrix::{dot, norm, Matrix};
pub use pinv::{least_squares, pseudoinverse, DEFAULT_RCOND};
pub use selectors::{build_selectors, SelectorMatrices};
pub use svd::{incremental_truncated_svd, numerical_rank, svd, truncated_svd, SliceSvd, SvdResult};
