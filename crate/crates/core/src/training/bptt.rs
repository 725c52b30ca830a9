//! Backpropagation through time for the multiscale cell.

use crate::error::{Error, Result};
use crate::mslmn::{mslmn_forward, MsLmnParams};
use crate::numerics::Matrix;
use crate::tasks::{Item, Target};
use crate::training::loss::{cross_entropy, softmax, LossKind};

/// Mean batch loss and its gradient with respect to every weight block.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub grads: MsLmnParams,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.grads
            .blocks()
            .iter()
            .map(|b| b.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales the gradient so its global norm is at most `max_norm`.
    pub fn clip(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            let s = max_norm / n;
            for b in self.grads.blocks_mut() {
                b.as_mut_slice().iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

/// Loss of one sequence and `∂loss/∂y` per step (`l x N_y`).
fn output_loss(output: &Matrix, target: &Target, loss: LossKind) -> Result<(f64, Matrix)> {
    let (l, n_y) = output.shape();
    let mut dy = Matrix::zeros(l, n_y);
    match (loss, target) {
        (LossKind::StepMse, Target::Sequence(t)) => {
            if t.shape() != output.shape() {
                return Err(Error::dim(format!(
                    "target is {:?}, output is {:?}",
                    t.shape(),
                    output.shape()
                )));
            }
            let n = (l * n_y).max(1) as f64;
            let mut sum = 0.0;
            for ((d, &y), &tv) in dy.as_mut_slice().iter_mut().zip(output.as_slice()).zip(t.as_slice()) {
                let e = y - tv;
                sum += e * e;
                *d = 2.0 * e / n;
            }
            Ok((sum / n, dy))
        }
        (LossKind::TerminalCrossEntropy, &Target::Class(c)) => {
            if l == 0 {
                return Err(Error::EmptyInput("classification sequence is empty".into()));
            }
            let logits = output.row(l - 1);
            let value = cross_entropy(logits, c)?;
            let p = softmax(logits);
            let last = dy.row_mut(l - 1);
            for (j, (d, pj)) in last.iter_mut().zip(p).enumerate() {
                *d = pj - if j == c { 1.0 } else { 0.0 };
            }
            Ok((value, dy))
        }
        _ => Err(Error::Input("loss kind does not match target type".into())),
    }
}

/// Loss of one sequence; gradients scaled by `weight` are added to `grads`.
fn accumulate(
    params: &MsLmnParams,
    input: &Matrix,
    target: &Target,
    loss: LossKind,
    weight: f64,
    grads: &mut MsLmnParams,
) -> Result<f64> {
    let traj = mslmn_forward(params, input)?;
    if input.cols() != params.input_size() {
        return Err(Error::dim("input width does not match model"));
    }
    let (value, mut dy) = output_loss(&traj.output, target, loss)?;
    dy.as_mut_slice().iter_mut().for_each(|v| *v *= weight);

    let l = input.rows();
    let g = params.modules();
    let n_m = params.memory_size();
    let n_h = params.hidden_size();
    let total = g * n_m;
    let schedule = params.schedule();
    let zeros = vec![0.0; total];

    let mut dm = vec![0.0; total];
    let mut dm_prev = vec![0.0; total];
    let mut dh = vec![0.0; n_h];
    for t in (0..l).rev() {
        let m_t = traj.memory.row(t);
        let m_prev: &[f64] = if t > 0 { traj.memory.row(t - 1) } else { &zeros };
        let h = traj.hidden.row(t);
        let dy_t = dy.row(t);

        if dy_t.iter().any(|&v| v != 0.0) {
            for i in 0..g {
                let blk = i * n_m..(i + 1) * n_m;
                params.wmy[i].t_matvec_acc(dy_t, &mut dm[blk.clone()]);
                grads.wmy[i].add_outer(dy_t, &m_t[blk]);
            }
        }

        let active = schedule.active(t + 1);
        dm_prev.fill(0.0);
        dm_prev[active * n_m..].copy_from_slice(&dm[active * n_m..]);
        dh.fill(0.0);
        for k in 0..active {
            let dmk = &dm[k * n_m..(k + 1) * n_m];
            grads.whm[k].add_outer(dmk, h);
            params.whm[k].t_matvec_acc(dmk, &mut dh);
            for i in k..g {
                let blk = i * n_m..(i + 1) * n_m;
                grads.wmm[k][i - k].add_outer(dmk, &m_prev[blk.clone()]);
                params.wmm[k][i - k].t_matvec_acc(dmk, &mut dm_prev[blk]);
            }
        }

        // dpre = dh ⊙ (1 − h²)
        for (d, &hv) in dh.iter_mut().zip(h) {
            *d *= 1.0 - hv * hv;
        }
        grads.wxh.add_outer(&dh, input.row(t));
        if let Some(b) = grads.hidden_bias.as_mut() {
            for (bv, d) in b.as_mut_slice().iter_mut().zip(&dh) {
                *bv += d;
            }
        }
        for i in 0..g {
            let blk = i * n_m..(i + 1) * n_m;
            grads.wmh[i].add_outer(&dh, &m_prev[blk.clone()]);
            params.wmh[i].t_matvec_acc(&dh, &mut dm_prev[blk]);
        }
        std::mem::swap(&mut dm, &mut dm_prev);
    }
    Ok(value)
}

/// Gradients of the mean loss over `batch`. Frozen modules pass their
/// gradient through unchanged, so blocks owned by a module that never
/// activates on the batch get exactly zero gradient.
pub fn bptt_gradients(params: &MsLmnParams, batch: &[&Item], loss: LossKind) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    let mut grads = params.zeros_like();
    let w = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for item in batch {
        if item.is_empty() {
            return Err(Error::EmptyInput("sequence of length 0".into()));
        }
        total += accumulate(params, &item.input, &item.target, loss, w, &mut grads)?;
    }
    Ok(Gradients { loss: total * w, grads })
}

/// Mean loss over `items` without gradients.
pub fn batch_loss(params: &MsLmnParams, items: &[&Item], loss: LossKind) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyInput("no items to evaluate".into()));
    }
    let mut total = 0.0;
    for item in items {
        let traj = mslmn_forward(params, &item.input)?;
        total += output_loss(&traj.output, &item.target, loss)?.0;
    }
    Ok(total / items.len() as f64)
}
