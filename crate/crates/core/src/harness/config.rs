//! Experiment configuration files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::SyntheticSpec;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, TrainConfig, CONTINUATION_LR_FACTOR};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Train the template model and score it.
    TrainEval,
    /// Every combination of L2 normalization, spectral normalization and
    /// leaky activations over the template.
    AblationGrid,
    /// Branch a partly trained model into a cross-entropy control arm and a
    /// collapse-loss arm.
    Intervention,
    /// Score the template model at each checkpoint epoch.
    OvertrainSweep,
    /// The template without L2 normalization against the template with it.
    BaselineCompare,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::TrainEval => "train-eval",
            ExperimentKind::AblationGrid => "ablation-grid",
            ExperimentKind::Intervention => "intervention",
            ExperimentKind::OvertrainSweep => "overtrain-sweep",
            ExperimentKind::BaselineCompare => "baseline-compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionSettings {
    /// Epochs each arm trains after the branch point.
    pub arm_epochs: usize,
    /// Multiplier on the learning rate in effect at the branch point.
    #[serde(default = "default_lr_factor")]
    pub lr_factor: f64,
}

fn default_lr_factor() -> f64 {
    CONTINUATION_LR_FACTOR
}

impl Default for InterventionSettings {
    fn default() -> Self {
        Self {
            arm_epochs: 20,
            lr_factor: CONTINUATION_LR_FACTOR,
        }
    }
}

/// One experiment. The `seed` fields of `data` and `train` are placeholders:
/// every entry of `seeds` drives data generation, initialization and
/// batching for its own run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment_kind: ExperimentKind,
    pub data: SyntheticSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Epochs (1-based) after which the model is scored. For an
    /// intervention the first entry is the branch point.
    #[serde(default)]
    pub checkpoint_epochs: Vec<usize>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub intervention: InterventionSettings,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        let config_err = |e: Error| Error::Config(e.to_string());
        self.data.validate().map_err(config_err)?;
        self.train.validate().map_err(config_err)?;
        if self.model.hidden_dims.is_empty() || self.model.hidden_dims.contains(&0) {
            return bad("hidden_dims must be nonempty and positive".into());
        }
        if let Some(&e) = self
            .checkpoint_epochs
            .iter()
            .find(|&&e| e == 0 || e > self.train.epochs)
        {
            return bad(format!("checkpoint epoch {e} outside 1..={}", self.train.epochs));
        }
        if self.checkpoint_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("checkpoint_epochs must be strictly increasing".into());
        }
        if self.experiment_kind == ExperimentKind::Intervention {
            match self.checkpoint_epochs.first() {
                Some(&b) if b < self.train.epochs => {}
                _ => return bad("intervention needs a checkpoint epoch below the epoch count".into()),
            }
            let s = &self.intervention;
            if s.arm_epochs == 0 || !(s.lr_factor > 0.0) {
                return bad("intervention arm_epochs and lr_factor must be positive".into());
            }
        }
        Ok(())
    }

    /// Branch point of an intervention.
    pub fn branch_epoch(&self) -> Option<usize> {
        self.checkpoint_epochs.first().copied()
    }

    /// Scoring epochs for a non-intervention run: the checkpoints plus the
    /// final epoch.
    pub fn scoring_epochs(&self) -> Vec<usize> {
        let mut epochs: BTreeSet<usize> = self.checkpoint_epochs.iter().copied().collect();
        epochs.insert(self.train.epochs);
        epochs.into_iter().collect()
    }
}
