use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laes::SvdMethod;

/// Optimizer and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Coupled L2 decay, added to the gradient.
    pub l2_decay: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Epochs between module additions in incremental training.
    pub module_add_period: usize,
    pub seed: u64,
    /// Std of Gaussian noise added to the inputs, redrawn every epoch.
    pub noise_std: f64,
    /// Autoencoder state size for new modules; defaults to the module size.
    pub laes_state_size: Option<usize>,
    /// Fit the autoencoder through the slice-wise SVD.
    pub laes_slices: bool,
    /// Cap on the rank kept by the slice-wise SVD; implies `laes_slices`.
    pub laes_max_rank: Option<usize>,
    pub readout_ridge: f64,
    /// Refit every readout block after a module is added.
    pub refit_readout: bool,
    /// Global gradient-norm clip; off when absent.
    pub clip_norm: Option<f64>,
    /// Record elapsed wall time in metrics; when off the column is 0.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 1,
            l2_decay: 0.0,
            max_epochs: 100,
            patience: 0,
            module_add_period: 50,
            seed: 0,
            noise_std: 0.0,
            laes_state_size: None,
            laes_slices: false,
            laes_max_rank: None,
            readout_ridge: 0.0,
            refit_readout: true,
            clip_norm: None,
            record_wall_time: true,
        }
    }
}

impl TrainConfig {
    pub fn svd_method(&self) -> SvdMethod {
        match (self.laes_max_rank, self.laes_slices) {
            (Some(cap), _) => SvdMethod::BoundedSlices(cap),
            (None, true) => SvdMethod::Slices,
            (None, false) => SvdMethod::Dense,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::Config(format!("{field}: {msg}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be a finite non-negative number");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.l2_decay >= 0.0 && self.l2_decay.is_finite()) {
            return bad("l2_decay", "must be a finite non-negative number");
        }
        if self.module_add_period == 0 {
            return bad("module_add_period", "must be at least 1");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std", "must be a finite non-negative number");
        }
        if self.laes_state_size == Some(0) {
            return bad("laes_state_size", "must be at least 1");
        }
        if self.laes_max_rank == Some(0) {
            return bad("laes_max_rank", "must be at least 1");
        }
        if !(self.readout_ridge >= 0.0 && self.readout_ridge.is_finite()) {
            return bad("readout_ridge", "must be a finite non-negative number");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad("clip_norm", "must be a positive number");
            }
        }
        Ok(())
    }
}

/// Model sizes that do not depend on the data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub hidden: usize,
    /// Units per memory module.
    pub memory: usize,
    /// Module count (maximum module count for incremental training).
    pub modules: usize,
    #[serde(default)]
    pub hidden_bias: bool,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.memory == 0 || self.modules == 0 {
            return Err(Error::Config(
                "architecture: hidden, memory and modules must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
