use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use csntax_core::model::{Architecture, ModelConfig};
use csntax_core::stats::StatsConfig;
use csntax_core::synth::GenConfig;
use csntax_core::train::{Optimizer, TrainConfig};
use serde::{Deserialize, Serialize};

/// Every tunable of a run, as loaded from `--config` and then overridden by flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub stats: StatsConfig,
    pub generator: GenConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct ModelArgs {
    /// Message-passing operator: gine or gat.
    #[arg(long)]
    pub arch: Option<Architecture>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Width of the classifier hidden layer (defaults to the hidden dimension).
    #[arg(long)]
    pub classifier_hidden: Option<usize>,
}

impl ModelArgs {
    pub fn any(&self) -> bool {
        self.arch.is_some() || self.hidden_dim.is_some() || self.layers.is_some() || self.classifier_hidden.is_some()
    }

    pub fn apply(&self, m: &mut ModelConfig) {
        if let Some(a) = self.arch {
            m.architecture = a;
        }
        if let Some(d) = self.hidden_dim {
            m.hidden_dim = d;
        }
        if let Some(l) = self.layers {
            m.num_layers = l;
        }
        if let Some(c) = self.classifier_hidden {
            m.classifier_hidden = Some(c);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    /// Minimal pairs per update.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Comma-separated training seeds for multi-run protocols.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
}

impl TrainArgs {
    pub fn apply(&self, t: &mut TrainConfig) {
        if let Some(v) = self.lr {
            t.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.epochs {
            t.max_epochs = v;
        }
        if let Some(v) = self.patience {
            t.early_stop_patience = v;
        }
        if let Some(v) = &self.seeds {
            t.seeds = v.clone();
        }
        match self.optimizer {
            Some(OptimizerArg::Sgd) => t.optimizer = Optimizer::Sgd,
            Some(OptimizerArg::Adam) if t.optimizer == Optimizer::Sgd => t.optimizer = Optimizer::default(),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct StatsArgs {
    /// Monte-Carlo replications.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
}

impl StatsArgs {
    pub fn apply(&self, s: &mut StatsConfig) {
        if let Some(r) = self.replications {
            s.replications = r;
        }
        if let Some(a) = self.alpha {
            s.alpha = a;
        }
    }
}
