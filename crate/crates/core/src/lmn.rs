//! Single-scale Linear Memory Network.
//!
//! ```text
//! hᵗ = tanh(Wxh xᵗ + Wmh mᵗ⁻¹)
//! mᵗ = Whm hᵗ + Wmm mᵗ⁻¹
//! yᵗ = Wmy mᵗ
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmnParams {
    pub wxh: Matrix,
    pub wmh: Matrix,
    pub whm: Matrix,
    pub wmm: Matrix,
    pub wmy: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmnState {
    pub h: Vec<f64>,
    pub m: Vec<f64>,
}

/// Vanilla tanh RNN, `hᵗ = tanh(Wxh xᵗ + Whh hᵗ⁻¹)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnParams {
    pub wxh: Matrix,
    pub whh: Matrix,
}

/// Per-timestep trajectories of a forward pass, one row per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub hidden: Matrix,
    pub memory: Matrix,
    pub output: Matrix,
}

impl LmnParams {
    pub fn new(wxh: Matrix, wmh: Matrix, whm: Matrix, wmm: Matrix, wmy: Matrix) -> Result<Self> {
        let p = LmnParams {
            wxh,
            wmh,
            whm,
            wmm,
            wmy,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(n_x: usize, n_h: usize, n_m: usize, n_y: usize) -> Self {
        LmnParams {
            wxh: Matrix::zeros(n_h, n_x),
            wmh: Matrix::zeros(n_h, n_m),
            whm: Matrix::zeros(n_m, n_h),
            wmm: Matrix::zeros(n_m, n_m),
            wmy: Matrix::zeros(n_y, n_m),
        }
    }

    pub fn input_size(&self) -> usize {
        self.wxh.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.wxh.rows()
    }

    pub fn memory_size(&self) -> usize {
        self.wmm.rows()
    }

    pub fn output_size(&self) -> usize {
        self.wmy.rows()
    }

    fn validate(&self) -> Result<()> {
        let (n_h, n_m, n_y) = (self.hidden_size(), self.memory_size(), self.output_size());
        let expect = [
            ("Wmh", &self.wmh, (n_h, n_m)),
            ("Whm", &self.whm, (n_m, n_h)),
            ("Wmm", &self.wmm, (n_m, n_m)),
            ("Wmy", &self.wmy, (n_y, n_m)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::dim(format!("{name} is {:?}, expected {shape:?}", m.shape())));
            }
            m.check_finite(name)?;
        }
        self.wxh.check_finite("Wxh")
    }

    pub fn initial_state(&self) -> LmnState {
        LmnState {
            h: vec![0.0; self.hidden_size()],
            m: vec![0.0; self.memory_size()],
        }
    }
}

pub fn lmn_step(params: &LmnParams, state: &LmnState, x: &[f64]) -> Result<LmnState> {
    if x.len() != params.input_size() || state.m.len() != params.memory_size() || state.h.len() != params.hidden_size()
    {
        return Err(Error::dim(format!(
            "input {} / memory {} do not match N_x={} / N_m={}",
            x.len(),
            state.m.len(),
            params.input_size(),
            params.memory_size()
        )));
    }
    let mut h = vec![0.0; params.hidden_size()];
    params.wxh.matvec_acc(x, &mut h);
    params.wmh.matvec_acc(&state.m, &mut h);
    h.iter_mut().for_each(|v| *v = v.tanh());
    let mut m = vec![0.0; params.memory_size()];
    params.whm.matvec_acc(&h, &mut m);
    params.wmm.matvec_acc(&state.m, &mut m);
    Ok(LmnState { h, m })
}

pub fn lmn_forward(params: &LmnParams, sequence: &Matrix) -> Result<Trajectory> {
    let l = sequence.rows();
    if l > 0 && sequence.cols() != params.input_size() {
        return Err(Error::dim(format!(
            "sequence has {} features, model expects {}",
            sequence.cols(),
            params.input_size()
        )));
    }
    let mut hidden = Matrix::zeros(l, params.hidden_size());
    let mut memory = Matrix::zeros(l, params.memory_size());
    let mut output = Matrix::zeros(l, params.output_size());
    let mut state = params.initial_state();
    for t in 0..l {
        state = lmn_step(params, &state, sequence.row(t))?;
        hidden.row_mut(t).copy_from_slice(&state.h);
        memory.row_mut(t).copy_from_slice(&state.m);
        params.wmy.matvec_acc(&state.m, output.row_mut(t));
    }
    Ok(Trajectory { hidden, memory, output })
}

/// LMN whose memory reproduces the RNN hidden state exactly:
/// `Wmh = Whh`, `Whm = I`, `Wmm = 0`. The readout is zero with `N_y = N_h`.
pub fn lmn_from_rnn(rnn: &RnnParams) -> LmnParams {
    let n_h = rnn.wxh.rows();
    LmnParams {
        wxh: rnn.wxh.clone(),
        wmh: rnn.whh.clone(),
        whm: Matrix::identity(n_h),
        wmm: Matrix::zeros(n_h, n_h),
        wmy: Matrix::zeros(n_h, n_h),
    }
}

pub fn rnn_forward(rnn: &RnnParams, sequence: &Matrix) -> Result<Matrix> {
    let n_h = rnn.wxh.rows();
    if rnn.whh.shape() != (n_h, n_h) {
        return Err(Error::dim(format!(
            "Whh is {:?}, expected ({n_h}, {n_h})",
            rnn.whh.shape()
        )));
    }
    let l = sequence.rows();
    if l > 0 && sequence.cols() != rnn.wxh.cols() {
        return Err(Error::dim(format!(
            "sequence has {} features, RNN expects {}",
            sequence.cols(),
            rnn.wxh.cols()
        )));
    }
    let mut out = Matrix::zeros(l, n_h);
    let mut h = vec![0.0; n_h];
    for t in 0..l {
        let mut next = vec![0.0; n_h];
        rnn.wxh.matvec_acc(sequence.row(t), &mut next);
        rnn.whh.matvec_acc(&h, &mut next);
        next.iter_mut().for_each(|v| *v = v.tanh());
        out.row_mut(t).copy_from_slice(&next);
        h = next;
    }
    Ok(out)
}
