//! The graph network: parameters, message-passing layers, pooling, the pairwise
//! classifier and exact reverse-mode gradients.

mod checkpoint;
mod layers;
mod network;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::FeatureVocab;
use crate::linalg::{Affine, Matrix};

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use layers::{gat_layer, gine_layer, mean_pool, node_init, GatCache, GineCache};
pub use network::{
    classify_pair, cross_entropy, embed_graph, forward, forward_raw, gradients, loss_and_gradients,
    softmax2, symmetrized_logits, Logits,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Gine,
    Gat,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Gine => "gine",
            Architecture::Gat => "gat",
        })
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gine" => Ok(Architecture::Gine),
            "gat" => Ok(Architecture::Gat),
            _ => Err(format!("unknown architecture `{s}` (expected gine or gat)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub architecture: Architecture,
    /// Width multiplier of the per-layer MLP hidden layer (GINE only).
    pub layer_mlp_expansion: usize,
    /// Classifier hidden width; `None` means `hidden_dim`.
    pub classifier_hidden: Option<usize>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 12,
            num_layers: 3,
            architecture: Architecture::Gine,
            layer_mlp_expansion: 2,
            classifier_hidden: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid model config: {0}")]
pub struct ConfigError(pub String);

impl ModelConfig {
    pub fn classifier_width(&self) -> usize {
        self.classifier_hidden.unwrap_or(self.hidden_dim)
    }

    pub fn mlp_width(&self) -> usize {
        self.hidden_dim * self.layer_mlp_expansion
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.hidden_dim == 0 {
            return Err(ConfigError("hidden_dim must be at least 1".into()));
        }
        if self.num_layers == 0 {
            return Err(ConfigError("num_layers must be at least 1".into()));
        }
        if self.layer_mlp_expansion == 0 {
            return Err(ConfigError("layer_mlp_expansion must be at least 1".into()));
        }
        if self.classifier_width() == 0 {
            return Err(ConfigError("classifier_hidden must be at least 1".into()));
        }
        Ok(())
    }

    /// Same architecture, ignoring the seed.
    pub fn same_shape(&self, other: &ModelConfig) -> bool {
        self.hidden_dim == other.hidden_dim
            && self.num_layers == other.num_layers
            && self.architecture == other.architecture
            && self.layer_mlp_expansion == other.layer_mlp_expansion
            && self.classifier_width() == other.classifier_width()
    }
}

/// Exact number of learnable scalars for `cfg`.
pub fn param_count(cfg: &ModelConfig) -> Result<usize, ConfigError> {
    cfg.validate()?;
    let d = cfg.hidden_dim;
    let embeddings =
        (FeatureVocab::UPOS + FeatureVocab::DEPREL + FeatureVocab::LANG + FeatureVocab::ORIGIN) * d;
    let per_layer = match cfg.architecture {
        Architecture::Gine => {
            let h = cfg.mlp_width();
            1 + (d * h + h) + (h * d + d)
        }
        Architecture::Gat => (d * d + d) + 2 * d,
    };
    let c = cfg.classifier_width();
    let classifier = (2 * d * c + c) + (c * 2 + 2);
    Ok(embeddings + cfg.num_layers * per_layer + classifier)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GineParams {
    /// Weight of the node's own state, as `1 + eps`.
    pub eps: f64,
    pub mlp1: Affine,
    pub mlp2: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatParams {
    pub lin: Affine,
    /// Attention vector over `[W x_i ‖ m_j]`, length `2d`.
    pub attn: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Gine(GineParams),
    Gat(GatParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub upos_embed: Matrix,
    pub deprel_embed: Matrix,
    pub lang_embed: Matrix,
    pub origin_embed: Matrix,
    pub layers: Vec<LayerParams>,
    pub classifier_hidden: Affine,
    pub classifier_out: Affine,
}

/// Name and shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ModelParameters {
    /// All-zero parameters with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let d = cfg.hidden_dim;
        let layers = (0..cfg.num_layers)
            .map(|_| match cfg.architecture {
                Architecture::Gine => LayerParams::Gine(GineParams {
                    eps: 0.0,
                    mlp1: Affine::zeros(d, cfg.mlp_width()),
                    mlp2: Affine::zeros(cfg.mlp_width(), d),
                }),
                Architecture::Gat => {
                    LayerParams::Gat(GatParams { lin: Affine::zeros(d, d), attn: vec![0.0; 2 * d] })
                }
            })
            .collect();
        Ok(ModelParameters {
            config: cfg.clone(),
            upos_embed: Matrix::zeros(FeatureVocab::UPOS, d),
            deprel_embed: Matrix::zeros(FeatureVocab::DEPREL, d),
            lang_embed: Matrix::zeros(FeatureVocab::LANG, d),
            origin_embed: Matrix::zeros(FeatureVocab::ORIGIN, d),
            layers,
            classifier_hidden: Affine::zeros(2 * d, cfg.classifier_width()),
            classifier_out: Affine::zeros(cfg.classifier_width(), 2),
        })
    }

    /// Seeded initialization: weights and embeddings uniform in
    /// `±sqrt(1 / fan_in)`, biases and `eps` zero.
    pub fn init(cfg: &ModelConfig) -> Result<Self, ConfigError> {
        let mut p = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.hidden_dim;
        let mut fill = |xs: &mut [f64], fan_in: usize| {
            let bound = (1.0 / fan_in as f64).sqrt();
            for x in xs {
                *x = rng.gen_range(-bound..=bound);
            }
        };
        // embeddings feed a d-wide layer input
        fill(p.upos_embed.as_mut_slice(), d);
        fill(p.deprel_embed.as_mut_slice(), d);
        fill(p.lang_embed.as_mut_slice(), d);
        fill(p.origin_embed.as_mut_slice(), d);
        for layer in &mut p.layers {
            match layer {
                LayerParams::Gine(g) => {
                    let (fan1, fan2) = (g.mlp1.input_dim(), g.mlp2.input_dim());
                    fill(g.mlp1.weight.as_mut_slice(), fan1);
                    fill(g.mlp2.weight.as_mut_slice(), fan2);
                }
                LayerParams::Gat(g) => {
                    let fan = g.lin.input_dim();
                    fill(g.lin.weight.as_mut_slice(), fan);
                    fill(&mut g.attn, 2 * d);
                }
            }
        }
        let (fan1, fan2) = (p.classifier_hidden.input_dim(), p.classifier_out.input_dim());
        fill(p.classifier_hidden.weight.as_mut_slice(), fan1);
        fill(p.classifier_out.weight.as_mut_slice(), fan2);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    /// Names and shapes of every tensor, in the canonical order shared by
    /// [`Self::slices`] and [`Self::slices_mut`].
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let spec = |name: String, shape: Vec<usize>| TensorSpec { name, shape };
        let affine = |prefix: &str, a: &Affine| {
            [
                spec(format!("{prefix}.weight"), a.weight.shape().to_vec()),
                spec(format!("{prefix}.bias"), vec![a.bias.len()]),
            ]
        };
        let mut out = vec![
            spec("embed.upos".into(), self.upos_embed.shape().to_vec()),
            spec("embed.deprel".into(), self.deprel_embed.shape().to_vec()),
            spec("embed.lang".into(), self.lang_embed.shape().to_vec()),
            spec("embed.origin".into(), self.origin_embed.shape().to_vec()),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Gine(g) => {
                    out.push(spec(format!("layers.{l}.eps"), vec![1]));
                    out.extend(affine(&format!("layers.{l}.mlp1"), &g.mlp1));
                    out.extend(affine(&format!("layers.{l}.mlp2"), &g.mlp2));
                }
                LayerParams::Gat(g) => {
                    out.extend(affine(&format!("layers.{l}.lin"), &g.lin));
                    out.push(spec(format!("layers.{l}.attn"), vec![g.attn.len()]));
                }
            }
        }
        out.extend(affine("classifier.hidden", &self.classifier_hidden));
        out.extend(affine("classifier.out", &self.classifier_out));
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.upos_embed.as_slice(),
            self.deprel_embed.as_slice(),
            self.lang_embed.as_slice(),
            self.origin_embed.as_slice(),
        ];
        for layer in &self.layers {
            match layer {
                LayerParams::Gine(g) => {
                    out.push(std::slice::from_ref(&g.eps));
                    out.extend([g.mlp1.weight.as_slice(), &g.mlp1.bias]);
                    out.extend([g.mlp2.weight.as_slice(), &g.mlp2.bias]);
                }
                LayerParams::Gat(g) => {
                    out.extend([g.lin.weight.as_slice(), &g.lin.bias, &g.attn]);
                }
            }
        }
        out.extend([self.classifier_hidden.weight.as_slice(), &self.classifier_hidden.bias]);
        out.extend([self.classifier_out.weight.as_slice(), &self.classifier_out.bias]);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.upos_embed.as_mut_slice(),
            self.deprel_embed.as_mut_slice(),
            self.lang_embed.as_mut_slice(),
            self.origin_embed.as_mut_slice(),
        ];
        for layer in &mut self.layers {
            match layer {
                LayerParams::Gine(g) => {
                    out.push(std::slice::from_mut(&mut g.eps));
                    out.extend([g.mlp1.weight.as_mut_slice(), &mut g.mlp1.bias]);
                    out.extend([g.mlp2.weight.as_mut_slice(), &mut g.mlp2.bias]);
                }
                LayerParams::Gat(g) => {
                    out.extend([g.lin.weight.as_mut_slice(), &mut g.lin.bias, &mut g.attn]);
                }
            }
        }
        out.extend([
            self.classifier_hidden.weight.as_mut_slice(),
            &mut self.classifier_hidden.bias,
        ]);
        out.extend([self.classifier_out.weight.as_mut_slice(), &mut self.classifier_out.bias]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length");
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn fill(&mut self, v: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x = v);
        }
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, scale: f64, other: &ModelParameters) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            crate::linalg::axpy(dst, scale, src);
        }
    }
}
