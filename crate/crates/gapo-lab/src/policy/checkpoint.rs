//! Versioned, bit-exact policy checkpoints.
//!
//! The container embeds a format version, the backend tag, all tensors
//! (row-major with explicit dimensions), and the training rng state
//! (root seed plus step counter) so a resumed or reloaded run is
//! byte-for-byte reproducible. JSON is used as the carrier: the
//! serializer emits shortest round-tripping decimal forms, so finite
//! `f64` values survive save -> load -> save without bit drift.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::policy::mlp::{MlpConfig, MlpPolicy, MlpTensors};
use crate::policy::tabular::TabularPolicy;
use crate::policy::Policy;
use crate::task_gen::MAX_LIST_LEN;

/// Current container version; loaders refuse anything else.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Deterministic training stream position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub root_seed: u64,
    pub step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct ArrayBlob {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct TabularRowBlob {
    prompt_hash: u64,
    prefix_len: u16,
    logits: Vec<f64>,
}

/// On-disk policy container.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub backend: String,
    pub vocab_size: usize,
    pub n_list_templates: usize,
    pub n_open_templates: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub pointer_hidden_dim: usize,
    pub max_response_len: usize,
    pub rng: RngState,
    arrays: Vec<ArrayBlob>,
    tabular_rows: Vec<TabularRowBlob>,
}

/// Fixed (name, rows, cols) layout of the MLP tensors.
fn mlp_array_layout(cfg: &MlpConfig) -> [(&'static str, usize, usize); 11] {
    [
        ("item_embeddings", cfg.vocab_size, cfg.embed_dim),
        (
            "template_embeddings",
            cfg.n_list_templates + cfg.n_open_templates,
            cfg.embed_dim,
        ),
        ("position_offsets", MAX_LIST_LEN, cfg.embed_dim),
        ("w1", cfg.hidden_dim, cfg.din()),
        ("b1", 1, cfg.hidden_dim),
        ("w2", cfg.vocab_size, cfg.hidden_dim),
        ("b2", 1, cfg.vocab_size),
        ("w1p", cfg.pointer_hidden_dim, cfg.dinp()),
        ("b1p", 1, cfg.pointer_hidden_dim),
        ("w3", MAX_LIST_LEN, cfg.pointer_hidden_dim),
        ("b3", 1, MAX_LIST_LEN),
    ]
}

impl Checkpoint {
    pub fn from_policy(policy: &Policy, max_response_len: usize, rng: RngState) -> Self {
        match policy {
            Policy::Mlp(mlp) => {
                let cfg = &mlp.config;
                let layout = mlp_array_layout(cfg);
                let fields: [&Vec<f64>; 11] = [
                    &mlp.tensors.e,
                    &mlp.tensors.et,
                    &mlp.tensors.o,
                    &mlp.tensors.w1,
                    &mlp.tensors.b1,
                    &mlp.tensors.w2,
                    &mlp.tensors.b2,
                    &mlp.tensors.w1p,
                    &mlp.tensors.b1p,
                    &mlp.tensors.w3,
                    &mlp.tensors.b3,
                ];
                let arrays = layout
                    .iter()
                    .zip(fields)
                    .map(|((name, rows, cols), data)| ArrayBlob {
                        name: name.to_string(),
                        rows: *rows,
                        cols: *cols,
                        data: data.clone(),
                    })
                    .collect();
                Checkpoint {
                    format_version: CHECKPOINT_FORMAT_VERSION,
                    backend: "mlp".to_string(),
                    vocab_size: cfg.vocab_size,
                    n_list_templates: cfg.n_list_templates,
                    n_open_templates: cfg.n_open_templates,
                    embed_dim: cfg.embed_dim,
                    hidden_dim: cfg.hidden_dim,
                    pointer_hidden_dim: cfg.pointer_hidden_dim,
                    max_response_len,
                    rng,
                    arrays,
                    tabular_rows: Vec::new(),
                }
            }
            Policy::Tabular(tab) => Checkpoint {
                format_version: CHECKPOINT_FORMAT_VERSION,
                backend: "tabular".to_string(),
                vocab_size: tab.vocab_size(),
                n_list_templates: 0,
                n_open_templates: 0,
                embed_dim: 0,
                hidden_dim: 0,
                pointer_hidden_dim: 0,
                max_response_len,
                rng,
                arrays: Vec::new(),
                tabular_rows: tab
                    .rows()
                    .iter()
                    .map(|((hash, len), logits)| TabularRowBlob {
                        prompt_hash: *hash,
                        prefix_len: *len,
                        logits: logits.clone(),
                    })
                    .collect(),
            },
        }
    }

    /// Reconstructs the policy; validates version and tensor shapes.
    pub fn into_policy(&self) -> Result<Policy> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(LabError::CheckpointVersion {
                found: self.format_version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        match self.backend.as_str() {
            "mlp" => {
                let cfg = MlpConfig {
                    vocab_size: self.vocab_size,
                    n_list_templates: self.n_list_templates,
                    n_open_templates: self.n_open_templates,
                    embed_dim: self.embed_dim,
                    hidden_dim: self.hidden_dim,
                    pointer_hidden_dim: self.pointer_hidden_dim,
                };
                let layout = mlp_array_layout(&cfg);
                if self.arrays.len() != layout.len() {
                    return Err(LabError::Checkpoint(format!(
                        "expected {} arrays, found {}",
                        layout.len(),
                        self.arrays.len()
                    )));
                }
                let mut tensors = MlpTensors::default();
                let slots: [&mut Vec<f64>; 11] = [
                    &mut tensors.e,
                    &mut tensors.et,
                    &mut tensors.o,
                    &mut tensors.w1,
                    &mut tensors.b1,
                    &mut tensors.w2,
                    &mut tensors.b2,
                    &mut tensors.w1p,
                    &mut tensors.b1p,
                    &mut tensors.w3,
                    &mut tensors.b3,
                ];
                for (((name, rows, cols), blob), slot) in
                    layout.iter().zip(&self.arrays).zip(slots)
                {
                    if blob.name != *name || blob.rows != *rows || blob.cols != *cols {
                        return Err(LabError::Checkpoint(format!(
                            "array `{}` has shape {}x{}, expected `{}` {}x{}",
                            blob.name, blob.rows, blob.cols, name, rows, cols
                        )));
                    }
                    if blob.data.len() != rows * cols {
                        return Err(LabError::Checkpoint(format!(
                            "array `{}` holds {} values, expected {}",
                            blob.name,
                            blob.data.len(),
                            rows * cols
                        )));
                    }
                    *slot = blob.data.clone();
                }
                Ok(Policy::Mlp(MlpPolicy {
                    config: cfg,
                    tensors,
                }))
            }
            "tabular" => {
                let mut tab = TabularPolicy::new(self.vocab_size);
                for row in &self.tabular_rows {
                    if row.logits.len() != self.vocab_size {
                        return Err(LabError::Checkpoint(format!(
                            "tabular row for context ({}, {}) has {} logits, expected {}",
                            row.prompt_hash,
                            row.prefix_len,
                            row.logits.len(),
                            self.vocab_size
                        )));
                    }
                    tab.insert_raw_row(row.prompt_hash, row.prefix_len, row.logits.clone());
                }
                Ok(Policy::Tabular(tab))
            }
            other => Err(LabError::Checkpoint(format!("unknown backend `{other}`"))),
        }
    }

    /// Atomic write: serialize to a temporary file in the target
    /// directory, then rename into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer(&mut tmp, self)?;
        tmp.persist(path)
            .map_err(|e| LabError::Checkpoint(format!("cannot persist checkpoint: {e}")))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| LabError::Checkpoint(format!("cannot parse checkpoint: {e}")))?;
        Ok(ckpt)
    }
}
