//! Plain-text checkpoints.
//!
//! ```text
//! csntax-checkpoint 1
//! vocab 1
//! hidden_dim 12
//! num_layers 3
//! architecture gine
//! layer_mlp_expansion 2
//! classifier_hidden 12
//! seed 0
//! tensor embed.upos 17 12
//! <one line per row, 17 significant digits per value>
//! ...
//! end
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::encoding::FeatureVocab;

use super::{ModelConfig, ModelParameters};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "csntax-checkpoint";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("checkpoint config does not match the requested model: {0}")]
    ConfigMismatch(String),
}

fn fmt_value(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

impl ModelParameters {
    pub fn to_checkpoint_string(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        writeln!(out, "{MAGIC} {CHECKPOINT_VERSION}").unwrap();
        writeln!(out, "vocab {}", FeatureVocab::VERSION).unwrap();
        writeln!(out, "hidden_dim {}", c.hidden_dim).unwrap();
        writeln!(out, "num_layers {}", c.num_layers).unwrap();
        writeln!(out, "architecture {}", c.architecture).unwrap();
        writeln!(out, "layer_mlp_expansion {}", c.layer_mlp_expansion).unwrap();
        writeln!(out, "classifier_hidden {}", c.classifier_width()).unwrap();
        writeln!(out, "seed {}", c.seed).unwrap();
        for (spec, data) in self.tensor_specs().iter().zip(self.slices()) {
            let dims: Vec<String> = spec.shape.iter().map(usize::to_string).collect();
            writeln!(out, "tensor {} {}", spec.name, dims.join(" ")).unwrap();
            let row_len = *spec.shape.last().unwrap_or(&1);
            for row in data.chunks(row_len.max(1)) {
                for (i, &v) in row.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    fmt_value(&mut out, v);
                }
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| CheckpointError::Format {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            })
        };
        let err = |line: usize, message: String| CheckpointError::Format { line, message };

        let (ln, header) = next("header")?;
        if header != format!("{MAGIC} {CHECKPOINT_VERSION}") {
            return Err(err(ln, format!("unsupported header `{header}`")));
        }
        let mut field = |key: &str| -> Result<(usize, String), CheckpointError> {
            let (ln, line) = next(key)?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok((ln, v.to_string())),
                _ => Err(err(ln, format!("expected `{key} <value>`, found `{line}`"))),
            }
        };
        let parse_usize = |(ln, v): (usize, String)| {
            v.parse::<usize>().map_err(|e| err(ln, format!("`{v}`: {e}")))
        };
        let vocab = parse_usize(field("vocab")?)?;
        if vocab != FeatureVocab::VERSION as usize {
            return Err(err(2, format!("feature vocabulary version {vocab} is not supported")));
        }
        let hidden_dim = parse_usize(field("hidden_dim")?)?;
        let num_layers = parse_usize(field("num_layers")?)?;
        let (ln, arch) = field("architecture")?;
        let architecture = arch.parse().map_err(|e| err(ln, e))?;
        let layer_mlp_expansion = parse_usize(field("layer_mlp_expansion")?)?;
        let classifier_hidden = parse_usize(field("classifier_hidden")?)?;
        let (ln, seed) = field("seed")?;
        let seed = seed.parse::<u64>().map_err(|e| err(ln, format!("`{seed}`: {e}")))?;
        let config = ModelConfig {
            hidden_dim,
            num_layers,
            architecture,
            layer_mlp_expansion,
            classifier_hidden: Some(classifier_hidden),
            seed,
        };
        let mut params =
            ModelParameters::zeros(&config).map_err(|e| err(ln, e.to_string()))?;
        let specs = params.tensor_specs();
        for (spec, slot) in specs.iter().zip(params.slices_mut()) {
            let (ln, line) = next(&spec.name)?;
            let dims: Vec<String> = spec.shape.iter().map(usize::to_string).collect();
            let expected = format!("tensor {} {}", spec.name, dims.join(" "));
            if line != expected {
                return Err(err(ln, format!("expected `{expected}`, found `{line}`")));
            }
            let row_len = *spec.shape.last().unwrap_or(&1);
            for row in slot.chunks_mut(row_len.max(1)) {
                let (ln, line) = next("tensor row")?;
                let values: Vec<&str> = line.split_ascii_whitespace().collect();
                if values.len() != row.len() {
                    return Err(err(ln, format!("expected {} values, found {}", row.len(), values.len())));
                }
                for (dst, v) in row.iter_mut().zip(values) {
                    *dst = v.parse::<f64>().map_err(|e| err(ln, format!("`{v}`: {e}")))?;
                }
            }
        }
        let (ln, end) = next("end")?;
        if end != "end" {
            return Err(err(ln, format!("expected `end`, found `{end}`")));
        }
        Ok(params)
    }
}

pub fn write_checkpoint(p: &ModelParameters, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    fs::write(path, p.to_checkpoint_string())
        .map_err(|source| CheckpointError::Io { path: path.into(), source })
}

/// Loads a checkpoint. When `expected` is given, its architecture fields must
/// match the stored ones.
pub fn read_checkpoint(
    path: impl AsRef<Path>,
    expected: Option<&ModelConfig>,
) -> Result<ModelParameters, CheckpointError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| CheckpointError::Io { path: path.into(), source })?;
    let params = ModelParameters::from_checkpoint_str(&text)?;
    if let Some(cfg) = expected {
        if !cfg.same_shape(&params.config) {
            return Err(CheckpointError::ConfigMismatch(format!(
                "checkpoint has hidden_dim={} num_layers={} architecture={} expansion={} classifier_hidden={}, \
                 requested hidden_dim={} num_layers={} architecture={} expansion={} classifier_hidden={}",
                params.config.hidden_dim,
                params.config.num_layers,
                params.config.architecture,
                params.config.layer_mlp_expansion,
                params.config.classifier_width(),
                cfg.hidden_dim,
                cfg.num_layers,
                cfg.architecture,
                cfg.layer_mlp_expansion,
                cfg.classifier_width(),
            )));
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    #[test]
    fn bit_faithful_round_trip() {
        for arch in [Architecture::Gine, Architecture::Gat] {
            let cfg = ModelConfig { architecture: arch, seed: 17, ..Default::default() };
            let mut p = ModelParameters::init(&cfg).unwrap();
            // awkward values: subnormal, negative zero, extremes
            let mut flat = p.flatten();
            flat[0] = f64::MIN_POSITIVE / 3.0;
            flat[1] = -0.0;
            flat[2] = f64::MAX;
            flat[3] = 1.0 / 3.0;
            p.set_flat(&flat);
            let text = p.to_checkpoint_string();
            let back = ModelParameters::from_checkpoint_str(&text).unwrap();
            let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
            assert_eq!(bits(back.flatten()), bits(p.flatten()));
            assert!(back.config.same_shape(&p.config));
            assert_eq!(back.to_checkpoint_string(), text);
        }
    }

    #[test]
    fn mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = ModelParameters::init(&ModelConfig::default()).unwrap();
        write_checkpoint(&p, &path).unwrap();
        assert!(read_checkpoint(&path, Some(&ModelConfig::default())).is_ok());
        let other = ModelConfig { hidden_dim: 8, ..Default::default() };
        assert!(matches!(
            read_checkpoint(&path, Some(&other)),
            Err(CheckpointError::ConfigMismatch(_))
        ));
    }

    #[test]
    fn truncated_file_is_an_error() {
        let p = ModelParameters::init(&ModelConfig { hidden_dim: 2, num_layers: 1, ..Default::default() }).unwrap();
        let text = p.to_checkpoint_string();
        let cut: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(ModelParameters::from_checkpoint_str(&cut).is_err());
        let garbled = text.replacen("tensor embed.lang 3 2", "tensor embed.lang 2 3", 1);
        assert!(ModelParameters::from_checkpoint_str(&garbled).is_err());
    }
}
