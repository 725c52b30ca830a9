//! Multiscale Linear Memory Network.
//!
//! The memory is split into `g` modules of `N_m` units. Module `k` (1-based)
//! updates only at timesteps with `t mod 2^(k-1) = 0` and otherwise holds its
//! previous value. Modules read the hidden state and every module at least as
//! slow as themselves; the hidden state reads every module:
//!
//! ```text
//! hᵗ   = tanh(Wxh xᵗ + Σᵢ W^{mᵢh} mᵢᵗ⁻¹ [+ b])
//! m_kᵗ = W^{hm_k} hᵗ + Σ_{i≥k} W^{mᵢm_k} mᵢᵗ⁻¹   if k is active at t
//! m_kᵗ = m_kᵗ⁻¹                                otherwise
//! yᵗ   = Σᵢ W^{mᵢy} mᵢᵗ
//! ```
//!
//! Module indices in code are 0-based: module `k` has period `2^k`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmn::{LmnParams, Trajectory};
use crate::numerics::Matrix;

/// Clock rates `1, 2, 4, …, 2^(g-1)` of a `g`-module memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockSchedule {
    modules: usize,
}

impl ClockSchedule {
    pub fn new(modules: usize) -> Result<Self> {
        if modules == 0 {
            return Err(Error::Precondition("a schedule needs at least one module".into()));
        }
        Ok(ClockSchedule { modules })
    }

    pub fn modules(&self) -> usize {
        self.modules
    }

    pub fn rates(&self) -> Vec<usize> {
        (0..self.modules).map(|k| 1usize << k).collect()
    }

    /// Number of modules updated at 1-based step `t` (the active modules are
    /// always a prefix `0..i_max`).
    #[inline]
    pub fn active(&self, t: usize) -> usize {
        debug_assert!(t >= 1);
        (t.trailing_zeros() as usize + 1).min(self.modules)
    }
}

/// `⌊log₂ l_max⌋`, at least 1.
pub fn module_count_for(l_max: usize) -> Result<usize> {
    if l_max == 0 {
        return Err(Error::EmptyInput("maximum sequence length is 0".into()));
    }
    Ok((l_max.ilog2() as usize).max(1))
}

/// `i_max = max{ i ≤ g | t mod 2^(i-1) = 0 }` for 1-based `t`.
pub fn active_modules(t: usize, g: usize) -> Result<usize> {
    if t == 0 {
        return Err(Error::Precondition("timesteps are 1-based".into()));
    }
    Ok(ClockSchedule::new(g)?.active(t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsLmnParams {
    /// `N_h x N_x`.
    pub wxh: Matrix,
    /// Optional hidden bias, `N_h x 1`. Off unless explicitly requested.
    #[serde(default)]
    pub hidden_bias: Option<Matrix>,
    /// `W^{mᵢh}` for each module, `N_h x N_m`.
    pub wmh: Vec<Matrix>,
    /// `W^{hm_k}` for each module, `N_m x N_h`.
    pub whm: Vec<Matrix>,
    /// `wmm[k][i - k]` is `W^{mᵢm_k}` (module `k` reading module `i ≥ k`), `N_m x N_m`.
    pub wmm: Vec<Vec<Matrix>>,
    /// `W^{mᵢy}` for each module, `N_y x N_m`.
    pub wmy: Vec<Matrix>,
}

/// Model dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub memory: usize,
    pub output: usize,
    pub modules: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsLmnState {
    pub h: Vec<f64>,
    pub m: Vec<Vec<f64>>,
    /// 1-based index of the next step to run.
    pub t: usize,
}

impl MsLmnParams {
    pub fn zeros(dims: Dims, hidden_bias: bool) -> Self {
        let Dims {
            input,
            hidden,
            memory,
            output,
            modules,
        } = dims;
        MsLmnParams {
            wxh: Matrix::zeros(hidden, input),
            hidden_bias: hidden_bias.then(|| Matrix::zeros(hidden, 1)),
            wmh: vec![Matrix::zeros(hidden, memory); modules],
            whm: vec![Matrix::zeros(memory, hidden); modules],
            wmm: (0..modules)
                .map(|k| vec![Matrix::zeros(memory, memory); modules - k])
                .collect(),
            wmy: vec![Matrix::zeros(output, memory); modules],
        }
    }

    /// Uniform initialization in `±1/√fan_in` of each receiving unit.
    pub fn random<R: Rng + ?Sized>(dims: Dims, hidden_bias: bool, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims, hidden_bias);
        let g = dims.modules;
        let fill = |m: &mut Matrix, fan_in: usize, rng: &mut R| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            m.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..=bound));
        };
        let h_fan = dims.input + g * dims.memory + usize::from(hidden_bias);
        fill(&mut p.wxh, h_fan, rng);
        if let Some(b) = p.hidden_bias.as_mut() {
            fill(b, h_fan, rng);
        }
        for m in &mut p.wmh {
            fill(m, h_fan, rng);
        }
        for k in 0..g {
            let fan = dims.hidden + (g - k) * dims.memory;
            fill(&mut p.whm[k], fan, rng);
            for block in &mut p.wmm[k] {
                fill(block, fan, rng);
            }
        }
        for m in &mut p.wmy {
            fill(m, g * dims.memory, rng);
        }
        p
    }

    /// Multiscale model with one module carrying the weights of `lmn`.
    pub fn from_lmn(lmn: &LmnParams) -> Self {
        MsLmnParams {
            wxh: lmn.wxh.clone(),
            hidden_bias: None,
            wmh: vec![lmn.wmh.clone()],
            whm: vec![lmn.whm.clone()],
            wmm: vec![vec![lmn.wmm.clone()]],
            wmy: vec![lmn.wmy.clone()],
        }
    }

    pub fn modules(&self) -> usize {
        self.whm.len()
    }

    pub fn schedule(&self) -> ClockSchedule {
        ClockSchedule {
            modules: self.modules(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.wxh.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.wxh.rows()
    }

    pub fn memory_size(&self) -> usize {
        self.whm[0].rows()
    }

    pub fn output_size(&self) -> usize {
        self.wmy[0].rows()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            input: self.input_size(),
            hidden: self.hidden_size(),
            memory: self.memory_size(),
            output: self.output_size(),
            modules: self.modules(),
        }
    }

    /// `W^{mᵢm_k}` for 0-based `i ≥ k`.
    #[inline]
    pub fn wmm_block(&self, i: usize, k: usize) -> &Matrix {
        &self.wmm[k][i - k]
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.whm.len();
        if g == 0 {
            return Err(Error::dim("model has no memory modules"));
        }
        if self.wmh.len() != g || self.wmm.len() != g || self.wmy.len() != g {
            return Err(Error::dim("per-module block lists have different lengths"));
        }
        let (n_h, n_m, n_y) = (self.hidden_size(), self.whm[0].rows(), self.wmy[0].rows());
        let check = |name: String, m: &Matrix, shape: (usize, usize)| -> Result<()> {
            if m.shape() != shape {
                return Err(Error::dim(format!("{name} is {:?}, expected {shape:?}", m.shape())));
            }
            m.check_finite(&name)
        };
        self.wxh.check_finite("Wxh")?;
        if let Some(b) = &self.hidden_bias {
            check("hidden bias".into(), b, (n_h, 1))?;
        }
        for k in 0..g {
            check(format!("Wmh[{k}]"), &self.wmh[k], (n_h, n_m))?;
            check(format!("Whm[{k}]"), &self.whm[k], (n_m, n_h))?;
            check(format!("Wmy[{k}]"), &self.wmy[k], (n_y, n_m))?;
            if self.wmm[k].len() != g - k {
                return Err(Error::dim(format!(
                    "module {k} has {} recurrent blocks, expected {}",
                    self.wmm[k].len(),
                    g - k
                )));
            }
            for (off, block) in self.wmm[k].iter().enumerate() {
                check(format!("Wmm[{},{k}]", k + off), block, (n_m, n_m))?;
            }
        }
        Ok(())
    }

    /// Stored scalar weights:
    /// `N_h·N_x + g·N_h·N_m + g·N_m·N_h + g(g+1)/2·N_m² + g·N_y·N_m`, plus `N_h`
    /// when the hidden bias is enabled.
    pub fn count_params(&self) -> usize {
        let d = self.dims();
        let g = d.modules;
        d.hidden * d.input
            + 2 * g * d.hidden * d.memory
            + g * (g + 1) / 2 * d.memory * d.memory
            + g * d.output * d.memory
            + self.hidden_bias.as_ref().map_or(0, Matrix::rows)
    }

    /// Every weight block in a fixed order: `Wxh`, bias, `Wmh…`, `Whm…`,
    /// `Wmm` (module-major), `Wmy…`.
    pub fn blocks(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.wxh];
        out.extend(self.hidden_bias.iter());
        out.extend(self.wmh.iter());
        out.extend(self.whm.iter());
        out.extend(self.wmm.iter().flatten());
        out.extend(self.wmy.iter());
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.wxh];
        out.extend(self.hidden_bias.iter_mut());
        out.extend(self.wmh.iter_mut());
        out.extend(self.whm.iter_mut());
        out.extend(self.wmm.iter_mut().flatten());
        out.extend(self.wmy.iter_mut());
        out
    }

    /// Names matching [`MsLmnParams::blocks`], 1-based module indices.
    pub fn block_names(&self) -> Vec<String> {
        let g = self.modules();
        let mut out = vec!["Wxh".to_string()];
        if self.hidden_bias.is_some() {
            out.push("b_h".into());
        }
        out.extend((1..=g).map(|i| format!("W^(m{i},h)")));
        out.extend((1..=g).map(|k| format!("W^(h,m{k})")));
        for k in 0..g {
            out.extend((k..g).map(|i| format!("W^(m{},m{})", i + 1, k + 1)));
        }
        out.extend((1..=g).map(|i| format!("W^(m{i},y)")));
        out
    }

    pub fn zeros_like(&self) -> Self {
        MsLmnParams::zeros(self.dims(), self.hidden_bias.is_some())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.is_finite())
    }

    /// Replaces every readout block.
    pub fn set_readout(&mut self, blocks: Vec<Matrix>) -> Result<()> {
        if blocks.len() != self.modules()
            || blocks
                .iter()
                .any(|b| b.shape() != (self.output_size(), self.memory_size()))
        {
            return Err(Error::dim("readout blocks do not match model shape"));
        }
        self.wmy = blocks;
        Ok(())
    }

    /// New model with one more, slower module. Its input map is `a_new`
    /// (`N_m x N_h`), its self-recurrence `b_new` (`N_m x N_m`) and its readout
    /// `readout` (`N_y x N_m`, zero when absent). The new module feeds neither the
    /// hidden state nor any faster module, so existing trajectories are unchanged.
    pub fn add_module(&self, a_new: &Matrix, b_new: &Matrix, readout: Option<&Matrix>) -> Result<Self> {
        let d = self.dims();
        if a_new.shape() != (d.memory, d.hidden) {
            return Err(Error::dim(format!(
                "new input map is {:?}, expected ({}, {})",
                a_new.shape(),
                d.memory,
                d.hidden
            )));
        }
        if b_new.shape() != (d.memory, d.memory) {
            return Err(Error::dim(format!(
                "new recurrence is {:?}, expected ({m}, {m})",
                b_new.shape(),
                m = d.memory
            )));
        }
        let readout = match readout {
            Some(r) if r.shape() != (d.output, d.memory) => {
                return Err(Error::dim(format!(
                    "new readout is {:?}, expected ({}, {})",
                    r.shape(),
                    d.output,
                    d.memory
                )))
            }
            Some(r) => r.clone(),
            None => Matrix::zeros(d.output, d.memory),
        };
        let mut next = self.clone();
        next.wmh.push(Matrix::zeros(d.hidden, d.memory));
        next.whm.push(a_new.clone());
        for row in next.wmm.iter_mut() {
            row.push(Matrix::zeros(d.memory, d.memory));
        }
        next.wmm.push(vec![b_new.clone()]);
        next.wmy.push(readout);
        Ok(next)
    }

    pub fn initial_state(&self) -> MsLmnState {
        MsLmnState {
            h: vec![0.0; self.hidden_size()],
            m: vec![vec![0.0; self.memory_size()]; self.modules()],
            t: 1,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::dim(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    fn check_state(&self, state: &MsLmnState) -> Result<()> {
        if state.m.len() != self.modules()
            || state.m.iter().any(|m| m.len() != self.memory_size())
            || state.h.len() != self.hidden_size()
        {
            return Err(Error::dim("state does not match model shape"));
        }
        if state.t == 0 {
            return Err(Error::Precondition("timesteps are 1-based".into()));
        }
        Ok(())
    }
}

/// Pre-activation and hidden state from the input and the stacked previous memory.
#[inline]
pub(crate) fn hidden_into(params: &MsLmnParams, x: &[f64], m_prev: &[f64], pre: &mut [f64], h: &mut [f64]) {
    let n_m = params.memory_size();
    match &params.hidden_bias {
        Some(b) => pre.copy_from_slice(b.as_slice()),
        None => pre.fill(0.0),
    }
    params.wxh.matvec_acc(x, pre);
    for (i, w) in params.wmh.iter().enumerate() {
        w.matvec_acc(&m_prev[i * n_m..(i + 1) * n_m], pre);
    }
    for (hv, &p) in h.iter_mut().zip(pre.iter()) {
        *hv = p.tanh();
    }
}

/// Memory update with the hidden state given: modules `0..active` recompute,
/// the rest copy their previous value. Memories are stacked, module-major.
#[inline]
pub(crate) fn memory_into(params: &MsLmnParams, active: usize, h: &[f64], m_prev: &[f64], m: &mut [f64]) {
    let n_m = params.memory_size();
    let g = params.modules();
    for k in 0..g {
        let out = &mut m[k * n_m..(k + 1) * n_m];
        if k < active {
            out.fill(0.0);
            params.whm[k].matvec_acc(h, out);
            for i in k..g {
                params.wmm_block(i, k).matvec_acc(&m_prev[i * n_m..(i + 1) * n_m], out);
            }
        } else {
            out.copy_from_slice(&m_prev[k * n_m..(k + 1) * n_m]);
        }
    }
}

/// Memory update for 1-based step `t` driven by a given hidden vector.
pub fn memory_update(params: &MsLmnParams, t: usize, h: &[f64], m_prev: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if t == 0 {
        return Err(Error::Precondition("timesteps are 1-based".into()));
    }
    if h.len() != params.hidden_size() || m_prev.len() != params.modules() {
        return Err(Error::dim("hidden/memory shape mismatch"));
    }
    let stacked: Vec<f64> = m_prev.concat();
    let mut out = vec![0.0; stacked.len()];
    memory_into(params, params.schedule().active(t), h, &stacked, &mut out);
    Ok(out.chunks(params.memory_size().max(1)).map(<[f64]>::to_vec).collect())
}

/// One step through the per-module update.
pub fn mslmn_step(params: &MsLmnParams, state: &MsLmnState, x: &[f64]) -> Result<MsLmnState> {
    params.check_input(x)?;
    params.check_state(state)?;
    let n_h = params.hidden_size();
    let n_m = params.memory_size();
    let prev: Vec<f64> = state.m.concat();
    let mut pre = vec![0.0; n_h];
    let mut h = vec![0.0; n_h];
    hidden_into(params, x, &prev, &mut pre, &mut h);
    let mut m = vec![0.0; prev.len()];
    memory_into(params, params.schedule().active(state.t), &h, &prev, &mut m);
    Ok(MsLmnState {
        h,
        m: m.chunks(n_m.max(1)).map(<[f64]>::to_vec).collect(),
        t: state.t + 1,
    })
}

/// Whole-model block matrices: memory stacked as `[m₁; …; m_g]`, `W^{hm}`
/// stacked by rows, and `W^{mm}` block upper-triangular (block row `k` holds
/// `W^{mᵢm_k}` in block column `i ≥ k`).
#[derive(Clone, Debug, PartialEq)]
pub struct PackedMsLmn {
    pub wxh: Matrix,
    pub hidden_bias: Option<Vec<f64>>,
    pub wmh: Matrix,
    pub whm: Matrix,
    pub wmm: Matrix,
    pub wmy: Matrix,
    pub schedule: ClockSchedule,
    pub memory_size: usize,
}

impl PackedMsLmn {
    pub fn new(params: &MsLmnParams) -> Self {
        let d = params.dims();
        let (g, n_m) = (d.modules, d.memory);
        let total = g * n_m;
        let mut wmh = Matrix::zeros(d.hidden, total);
        let mut whm = Matrix::zeros(total, d.hidden);
        let mut wmm = Matrix::zeros(total, total);
        let mut wmy = Matrix::zeros(d.output, total);
        for i in 0..g {
            for r in 0..d.hidden {
                for c in 0..n_m {
                    wmh[(r, i * n_m + c)] = params.wmh[i][(r, c)];
                }
            }
            for r in 0..n_m {
                for c in 0..d.hidden {
                    whm[(i * n_m + r, c)] = params.whm[i][(r, c)];
                }
            }
            for r in 0..d.output {
                for c in 0..n_m {
                    wmy[(r, i * n_m + c)] = params.wmy[i][(r, c)];
                }
            }
        }
        for k in 0..g {
            for i in k..g {
                let block = params.wmm_block(i, k);
                for r in 0..n_m {
                    for c in 0..n_m {
                        wmm[(k * n_m + r, i * n_m + c)] = block[(r, c)];
                    }
                }
            }
        }
        PackedMsLmn {
            wxh: params.wxh.clone(),
            hidden_bias: params.hidden_bias.as_ref().map(|b| b.as_slice().to_vec()),
            wmh,
            whm,
            wmm,
            wmy,
            schedule: params.schedule(),
            memory_size: n_m,
        }
    }

    /// Step on the stacked memory: rows `0..i_max·N_m` are recomputed with the
    /// packed matrices, the remaining rows are copied.
    pub fn step(&self, m_prev: &[f64], x: &[f64], t: usize) -> (Vec<f64>, Vec<f64>) {
        let mut h = match &self.hidden_bias {
            Some(b) => b.clone(),
            None => vec![0.0; self.wxh.rows()],
        };
        self.wxh.matvec_acc(x, &mut h);
        self.wmh.matvec_acc(m_prev, &mut h);
        h.iter_mut().for_each(|v| *v = v.tanh());

        let split = self.schedule.active(t) * self.memory_size;
        let mut m = m_prev.to_vec();
        let n_h = h.len();
        let total = m_prev.len();
        for (r, mr) in m.iter_mut().enumerate().take(split) {
            let hm = &self.whm.as_slice()[r * n_h..(r + 1) * n_h];
            let mm = &self.wmm.as_slice()[r * total..(r + 1) * total];
            *mr = crate::numerics::dot(hm, &h) + crate::numerics::dot(mm, m_prev);
        }
        (h, m)
    }
}

/// One step through the packed block-matrix path.
pub fn mslmn_step_packed(params: &MsLmnParams, state: &MsLmnState, x: &[f64]) -> Result<MsLmnState> {
    params.check_input(x)?;
    params.check_state(state)?;
    let packed = PackedMsLmn::new(params);
    let (h, m) = packed.step(&state.m.concat(), x, state.t);
    Ok(MsLmnState {
        h,
        m: m.chunks(params.memory_size().max(1)).map(<[f64]>::to_vec).collect(),
        t: state.t + 1,
    })
}

/// Runs the model from zero state over `sequence` (`l x N_x`). The memory
/// matrix stacks all modules per row (`l x g·N_m`).
pub fn mslmn_forward(params: &MsLmnParams, sequence: &Matrix) -> Result<Trajectory> {
    let l = sequence.rows();
    if l > 0 {
        params.check_input(sequence.row(0))?;
    }
    let d = params.dims();
    let total = d.modules * d.memory;
    let schedule = params.schedule();
    let mut hidden = Matrix::zeros(l, d.hidden);
    let mut memory = Matrix::zeros(l, total);
    let mut output = Matrix::zeros(l, d.output);
    let mut prev = vec![0.0; total];
    let mut pre = vec![0.0; d.hidden];
    let mut m = vec![0.0; total];
    for t in 0..l {
        let h = hidden.row_mut(t);
        hidden_into(params, sequence.row(t), &prev, &mut pre, h);
        let h = hidden.row(t).to_vec();
        memory_into(params, schedule.active(t + 1), &h, &prev, &mut m);
        memory.row_mut(t).copy_from_slice(&m);
        let y = output.row_mut(t);
        for (i, w) in params.wmy.iter().enumerate() {
            w.matvec_acc(&m[i * d.memory..(i + 1) * d.memory], y);
        }
        std::mem::swap(&mut prev, &mut m);
    }
    Ok(Trajectory { hidden, memory, output })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmn::{lmn_forward, lmn_step};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(g: usize) -> Dims {
        Dims {
            input: 2,
            hidden: 3,
            memory: 2,
            output: 1,
            modules: g,
        }
    }

    #[test]
    fn module_counts() {
        assert_eq!(module_count_for(300).unwrap(), 8);
        assert_eq!(module_count_for(97).unwrap(), 6);
        assert_eq!(module_count_for(1).unwrap(), 1);
        assert!(matches!(module_count_for(0), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn active_module_rule() {
        assert_eq!(active_modules(4, 3).unwrap(), 3);
        assert_eq!(active_modules(1, 5).unwrap(), 1);
        assert_eq!(active_modules(6, 4).unwrap(), 2);
        assert_eq!(active_modules(64, 3).unwrap(), 3);
        assert!(matches!(active_modules(0, 3), Err(Error::Precondition(_))));
    }

    #[test]
    fn rates_double() {
        assert_eq!(ClockSchedule::new(4).unwrap().rates(), vec![1, 2, 4, 8]);
        assert!(ClockSchedule::new(0).is_err());
    }

    #[test]
    fn single_module_matches_lmn_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ms = MsLmnParams::random(dims(1), false, &mut rng);
        let lmn = LmnParams::new(
            ms.wxh.clone(),
            ms.wmh[0].clone(),
            ms.whm[0].clone(),
            ms.wmm[0][0].clone(),
            ms.wmy[0].clone(),
        )
        .unwrap();
        let mut a = ms.initial_state();
        let mut b = lmn.initial_state();
        for t in 0..6 {
            let x = [t as f64 * 0.1, -0.3];
            a = mslmn_step(&ms, &a, &x).unwrap();
            b = lmn_step(&lmn, &b, &x).unwrap();
            assert_eq!(a.h, b.h);
            assert_eq!(a.m[0], b.m);
        }
        let seq = Matrix::from_fn(7, 2, |r, c| ((r * 3 + c) as f64).sin());
        let ta = mslmn_forward(&ms, &seq).unwrap();
        let tb = lmn_forward(&lmn, &seq).unwrap();
        assert!(ta.memory.max_abs_diff(&tb.memory) <= 1e-14);
        assert!(ta.output.max_abs_diff(&tb.output) <= 1e-14);
    }

    #[test]
    fn slow_module_frozen_on_odd_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = MsLmnParams::random(dims(2), false, &mut rng);
        let mut s = p.initial_state();
        s.m[1] = vec![0.7, -0.4];
        s.t = 3;
        let next = mslmn_step(&p, &s, &[1.0, 2.0]).unwrap();
        assert_eq!(next.m[1], s.m[1]);
        assert_eq!(next.t, 4);
    }

    #[test]
    fn zero_weights() {
        let p = MsLmnParams::zeros(dims(3), false);
        let mut s = p.initial_state();
        s.m = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        s.t = 2;
        let next = mslmn_step(&p, &s, &[1.0, 1.0]).unwrap();
        assert_eq!(next.h, vec![0.0; 3]);
        assert_eq!(next.m[0], vec![0.0; 2]);
        assert_eq!(next.m[1], vec![0.0; 2]);
        assert_eq!(next.m[2], vec![3.0, 3.0]);
    }

    #[test]
    fn packed_matches_per_module() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MsLmnParams::random(dims(3), true, &mut rng);
        let mut s = p.initial_state();
        s.m = vec![vec![0.1, 0.2], vec![-0.3, 0.5], vec![0.9, -0.1]];
        s.t = 4;
        let a = mslmn_step(&p, &s, &[0.5, -0.5]).unwrap();
        let b = mslmn_step_packed(&p, &s, &[0.5, -0.5]).unwrap();
        for (x, y) in a.m.concat().iter().zip(b.m.concat()) {
            assert!((x - y).abs() <= 1e-12);
        }
        // Odd step: only the first module is recomputed.
        s.t = 5;
        let c = mslmn_step_packed(&p, &s, &[0.5, -0.5]).unwrap();
        assert_eq!(c.m[1], s.m[1]);
        assert_eq!(c.m[2], s.m[2]);
        assert_ne!(c.m[0], s.m[0]);
    }

    #[test]
    fn packed_layout_is_block_upper_triangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = MsLmnParams::random(dims(3), false, &mut rng);
        let packed = PackedMsLmn::new(&p);
        for r in 0..6 {
            for c in 0..6 {
                if c / 2 < r / 2 {
                    assert_eq!(packed.wmm[(r, c)], 0.0);
                }
            }
        }
        assert_eq!(packed.wmm[(0, 4)], p.wmm_block(2, 0)[(0, 0)]);
    }

    #[test]
    fn count_params_formula() {
        let p = MsLmnParams::zeros(
            Dims {
                input: 1,
                hidden: 4,
                memory: 6,
                output: 1,
                modules: 1,
            },
            false,
        );
        assert_eq!(p.count_params(), 94);
        let zero = MsLmnParams::zeros(
            Dims {
                input: 0,
                hidden: 0,
                memory: 0,
                output: 0,
                modules: 1,
            },
            false,
        );
        assert_eq!(zero.count_params(), 0);
        let total: usize = p.blocks().iter().map(|b| b.as_slice().len()).sum();
        assert_eq!(total, 94);
    }

    #[test]
    fn table_configuration_count() {
        // 9 modules of 4 units, one hidden unit, scalar input and output.
        let p = MsLmnParams::zeros(
            Dims {
                input: 1,
                hidden: 1,
                memory: 4,
                output: 1,
                modules: 9,
            },
            false,
        );
        assert_eq!(p.count_params(), 1 + 36 + 36 + 45 * 16 + 36);
        let total: usize = p.blocks().iter().map(|b| b.as_slice().len()).sum();
        assert_eq!(p.count_params(), total);
    }

    #[test]
    fn add_module_shapes_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = MsLmnParams::random(dims(2), false, &mut rng);
        let q = p.add_module(&Matrix::zeros(2, 3), &Matrix::identity(2), None).unwrap();
        q.validate().unwrap();
        assert_eq!(q.modules(), 3);
        assert_eq!(q.output_size(), 1);
        assert_eq!(q.wmm_block(2, 2), &Matrix::identity(2));
        assert_eq!(q.wmm_block(2, 0), &Matrix::zeros(2, 2));
        assert_eq!(q.wmh[2], Matrix::zeros(3, 2));
        assert!(p.add_module(&Matrix::zeros(3, 3), &Matrix::identity(2), None).is_err());
        assert!(p.add_module(&Matrix::zeros(2, 3), &Matrix::identity(3), None).is_err());
        assert!(p
            .add_module(&Matrix::zeros(2, 3), &Matrix::identity(2), Some(&Matrix::zeros(2, 2)))
            .is_err());
        assert_eq!(q.block_names().len(), q.blocks().len());
    }

    #[test]
    fn memory_update_ignores_faster_modules() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = MsLmnParams::random(dims(3), false, &mut rng);
        let h = vec![0.2, -0.1, 0.4];
        let prev = vec![vec![0.5, 0.5], vec![-0.2, 0.1], vec![0.3, 0.3]];
        let mut zeroed = prev.clone();
        zeroed[0] = vec![0.0, 0.0];
        let a = memory_update(&p, 4, &h, &prev).unwrap();
        let b = memory_update(&p, 4, &h, &zeroed).unwrap();
        assert_eq!(a[1], b[1]);
        assert_eq!(a[2], b[2]);
        assert_ne!(a[0], b[0]);
    }
}
