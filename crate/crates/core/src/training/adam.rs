//! Adam with coupled L2 weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mslmn::MsLmnParams;
use crate::numerics::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment accumulators laid out like [`MsLmnParams::blocks`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &MsLmnParams) -> Self {
        let zeros: Vec<Matrix> = params
            .blocks()
            .iter()
            .map(|b| Matrix::zeros(b.rows(), b.cols()))
            .collect();
        AdamState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    fn matches(&self, params: &MsLmnParams) -> bool {
        let blocks = params.blocks();
        blocks.len() == self.first.len()
            && blocks.len() == self.second.len()
            && blocks
                .iter()
                .zip(self.first.iter().zip(&self.second))
                .all(|(b, (m, v))| b.shape() == m.shape() && b.shape() == v.shape())
    }
}

/// One Adam update of `w` in place. Decay is added to the gradient before the
/// moments are updated.
fn update(w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], step: u64, lr: f64, l2: f64) {
    let bc1 = 1.0 - BETA1.powi(step as i32);
    let bc2 = 1.0 - BETA2.powi(step as i32);
    for i in 0..w.len() {
        let gi = g[i] + l2 * w[i];
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        w[i] -= lr * mh / (vh.sqrt() + EPSILON);
    }
}

/// Applies one Adam step to every block of `params`.
pub fn adam_step(
    params: &mut MsLmnParams,
    grads: &MsLmnParams,
    adam: &mut AdamState,
    learning_rate: f64,
    l2_decay: f64,
) -> Result<()> {
    if grads.blocks().len() != params.blocks().len()
        || grads
            .blocks()
            .iter()
            .zip(params.blocks())
            .any(|(g, p)| g.shape() != p.shape())
    {
        return Err(Error::dim("gradient blocks do not match parameters"));
    }
    if !adam.matches(params) {
        return Err(Error::dim("optimizer state does not match parameters"));
    }
    adam.step += 1;
    let step = adam.step;
    for ((w, g), (m, v)) in params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(adam.first.iter_mut().zip(adam.second.iter_mut()))
    {
        update(
            w.as_mut_slice(),
            g.as_slice(),
            m.as_mut_slice(),
            v.as_mut_slice(),
            step,
            learning_rate,
            l2_decay,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mslmn::Dims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> Dims {
        Dims {
            input: 1,
            hidden: 2,
            memory: 2,
            output: 1,
            modules: 2,
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut w, mut m, mut v) = ([0.0], [0.0], [0.0]);
        update(&mut w, &[1.0], &mut m, &mut v, 1, 0.1, 0.0);
        assert!((w[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn decay_is_added_to_gradient() {
        let (mut w, mut m, mut v) = ([2.0], [0.0], [0.0]);
        update(&mut w, &[0.0], &mut m, &mut v, 1, 0.1, 0.5);
        assert!((m[0] - 0.1).abs() < 1e-15);
        assert!((w[0] - 1.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradients_leave_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p0 = MsLmnParams::random(dims(), false, &mut rng);
        let mut p = p0.clone();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &p0.zeros_like(), &mut st, 0.1, 0.0).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p0 = MsLmnParams::random(dims(), false, &mut rng);
        let g = MsLmnParams::random(dims(), false, &mut rng);
        let run = || {
            let mut p = p0.clone();
            let mut st = AdamState::new(&p);
            adam_step(&mut p, &g, &mut st, 0.01, 1e-3).unwrap();
            (p, st)
        };
        assert_eq!(run(), run());
        let mut p = p0.clone();
        let mut st = AdamState::new(&p);
        let bigger = MsLmnParams::zeros(Dims { modules: 3, ..dims() }, false);
        assert!(adam_step(&mut p, &bigger, &mut st, 0.1, 0.0).is_err());
        let mut st_bad = AdamState::new(&bigger);
        assert!(adam_step(&mut p, &g, &mut st_bad, 0.1, 0.0).is_err());
    }
}
