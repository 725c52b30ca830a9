use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Block selectors over a reversed-prefix vector of `l` blocks of size `a`.
///
/// `p` embeds an element into the first block; `r` shifts every block down by
/// one position, discarding the last block.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectorMatrices {
    pub p: Matrix,
    pub r: Matrix,
    pub l: usize,
    pub a: usize,
}

pub fn build_selectors(l: usize, a: usize) -> Result<SelectorMatrices> {
    if l == 0 || a == 0 {
        return Err(Error::dim(format!(
            "selectors need l >= 1 and a >= 1, got l={l}, a={a}"
        )));
    }
    let n = l * a;
    let p = Matrix::from_fn(n, a, |r, c| if r == c { 1.0 } else { 0.0 });
    let r = Matrix::from_fn(n, n, |row, col| if row >= a && col == row - a { 1.0 } else { 0.0 });
    Ok(SelectorMatrices { p, r, l, a })
}
