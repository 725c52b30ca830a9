//! Versioned JSON checkpoints.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cli::config::TaskSpec;
use crate::error::{Error, Result};
use crate::mslmn::{Dims, MsLmnParams};
use crate::tasks::TaskKind;
use crate::training::AdamState;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointArch {
    #[serde(flatten)]
    pub dims: Dims,
    pub hidden_bias: bool,
    /// Clock period of each module.
    pub rates: Vec<usize>,
}

/// Enough to rebuild the generator: the run seed plus the stream position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngState {
            seed,
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: CheckpointArch,
    pub task_kind: TaskKind,
    /// Task the model was trained on, with resolved paths.
    #[serde(default)]
    pub task: Option<TaskSpec>,
    /// Epochs trained when the checkpoint was taken.
    pub epoch: usize,
    pub weights: MsLmnParams,
    #[serde(default)]
    pub optimizer: Option<AdamState>,
    #[serde(default)]
    pub rng: Option<RngState>,
}

impl Checkpoint {
    pub fn new(weights: MsLmnParams, task_kind: TaskKind, task: Option<TaskSpec>, epoch: usize) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            architecture: CheckpointArch {
                dims: weights.dims(),
                hidden_bias: weights.hidden_bias.is_some(),
                rates: weights.schedule().rates(),
            },
            task_kind,
            task,
            epoch,
            weights,
            optimizer: None,
            rng: None,
        }
    }

    /// Writes to a temporary sibling first, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        let tmp = path.with_extension("json.tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let fail = |msg: String| Error::Format {
            path: path.to_path_buf(),
            line: 0,
            msg,
        };
        if ck.format_version != FORMAT_VERSION {
            return Err(fail(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                ck.format_version
            )));
        }
        ck.weights.validate().map_err(|e| fail(e.to_string()))?;
        let arch = &ck.architecture;
        if arch.dims != ck.weights.dims()
            || arch.hidden_bias != ck.weights.hidden_bias.is_some()
            || arch.rates != ck.weights.schedule().rates()
        {
            return Err(fail("architecture header disagrees with the weights".into()));
        }
        Ok(ck)
    }
}
