//! Closed-form pieces of incremental training: subsampled hidden activations
//! for the autoencoder fit, and least-squares readout fitting.

use crate::error::{Error, Result};
use crate::mslmn::{mslmn_forward, MsLmnParams};
use crate::numerics::{least_squares, Matrix, DEFAULT_RCOND};
use crate::tasks::{Item, Target, TaskKind};

/// Per item, the hidden rows `hᵗ` with `t mod 2^g = 0` (1-based `t`). Items
/// shorter than `2^g` yield an empty matrix.
pub fn collect_subsampled_hidden(params: &MsLmnParams, items: &[&Item], g: usize) -> Result<Vec<Matrix>> {
    if items.is_empty() {
        return Err(Error::EmptyInput("no sequences to subsample".into()));
    }
    let rate = 1usize
        .checked_shl(g as u32)
        .ok_or_else(|| Error::Precondition(format!("rate 2^{g} overflows")))?;
    items
        .iter()
        .map(|item| {
            let hidden = mslmn_forward(params, &item.input)?.hidden;
            let keep: Vec<&[f64]> = (rate..=item.len()).step_by(rate).map(|t| hidden.row(t - 1)).collect();
            if keep.is_empty() {
                Ok(Matrix::zeros(0, params.hidden_size()))
            } else {
                Matrix::from_rows(&keep)
            }
        })
        .collect()
}

/// Least-squares readout from the concatenated memory of all modules.
///
/// Regression uses every timestep; classification uses the final step with
/// one-hot targets. Rows of a regression sequence of length `l` are weighted
/// by `1/√l`, so the fit minimises the same per-sequence mean that training
/// reports. Returns one `N_y x N_m` block per module.
pub fn fit_readout(params: &MsLmnParams, items: &[&Item], kind: TaskKind, ridge: f64) -> Result<Vec<Matrix>> {
    let n_y = params.output_size();
    let total = params.modules() * params.memory_size();
    let mut design: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<Vec<f64>> = Vec::new();
    for item in items {
        if item.is_empty() {
            continue;
        }
        let memory = mslmn_forward(params, &item.input)?.memory;
        match (kind, &item.target) {
            (TaskKind::Regression, Target::Sequence(t)) => {
                if t.shape() != (item.len(), n_y) {
                    return Err(Error::dim("regression target does not match model output"));
                }
                let w = 1.0 / (item.len() as f64).sqrt();
                for r in 0..item.len() {
                    design.push(memory.row(r).iter().map(|v| v * w).collect());
                    targets.push(t.row(r).iter().map(|v| v * w).collect());
                }
            }
            (TaskKind::Classification, &Target::Class(c)) => {
                if c >= n_y {
                    return Err(Error::Index { index: c, len: n_y });
                }
                design.push(memory.row(item.len() - 1).to_vec());
                let mut onehot = vec![0.0; n_y];
                onehot[c] = 1.0;
                targets.push(onehot);
            }
            _ => return Err(Error::Input("target type does not match task kind".into())),
        }
    }
    if design.is_empty() {
        return Err(Error::EmptyInput("no memory states to fit a readout on".into()));
    }
    let m_all = Matrix::from_rows(&design)?;
    let y_all = Matrix::from_rows(&targets)?;
    debug_assert_eq!(m_all.cols(), total);
    let x = least_squares(&m_all, &y_all, ridge, DEFAULT_RCOND)?;
    let w = x.transpose();
    let n_m = params.memory_size();
    Ok((0..params.modules())
        .map(|i| w.col_range(i * n_m, (i + 1) * n_m))
        .collect())
}
