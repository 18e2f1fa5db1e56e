use std::path::Path;

use thiserror::Error;

use super::{BlockId, ModelDims, ModelParams, TrainConfig};
use crate::manifold::CcmSpec;
use crate::tensor_store::{read_store, write_store, StoreError};

pub const CHECKPOINT_FORMAT: &str = "lifelog-checkpoint";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),
}

/// Trained weights with everything needed to reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: TrainConfig,
    pub spec: CcmSpec,
    /// Fingerprint of the graph schema the model was trained on.
    pub schema: String,
}

impl Checkpoint {
    pub fn check_compatible(&self, dims: &ModelDims, schema: &str) -> Result<(), CheckpointError> {
        if self.params.dims() != dims {
            return Err(CheckpointError::Compatibility(format!(
                "model dims {:?} do not match data dims {:?}",
                self.params.dims(),
                dims
            )));
        }
        if self.schema != schema {
            return Err(CheckpointError::Compatibility(format!(
                "checkpoint schema '{}' differs from graph schema '{}'",
                self.schema, schema
            )));
        }
        Ok(())
    }
}

/// Writes `<path>` (manifest) and its `.bin` sibling. Weights are stored as f32.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint, header: &[String]) -> Result<(), CheckpointError> {
    let meta = vec![
        ("dims".to_string(), json(ckpt.params.dims())),
        ("config".to_string(), json(&ckpt.config)),
        ("spec".to_string(), json(&ckpt.spec)),
        ("schema".to_string(), ckpt.schema.clone()),
    ];
    let blocks: Vec<(String, ndarray::ArrayView2<f64>)> = ckpt
        .params
        .blocks()
        .map(|(id, b)| (id.name().to_string(), b.view()))
        .collect();
    write_store(path, CHECKPOINT_FORMAT, header, &meta, &blocks)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let (manifest, arrays) = read_store(path)?;
    let bad = |m: String| CheckpointError::Compatibility(m);
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("format '{}' is not {CHECKPOINT_FORMAT}", manifest.format)));
    }
    fn field<T: serde::de::DeserializeOwned>(m: &crate::tensor_store::StoreManifest, key: &str) -> Result<T, CheckpointError> {
        let raw = m
            .meta(key)
            .ok_or_else(|| CheckpointError::Compatibility(format!("missing meta '{key}'")))?;
        serde_json::from_str(raw).map_err(|e| CheckpointError::Compatibility(format!("meta '{key}': {e}")))
    }
    let dims: ModelDims = field(&manifest, "dims")?;
    let config: TrainConfig = field(&manifest, "config")?;
    let spec: CcmSpec = field(&manifest, "spec")?;
    let schema = manifest.meta("schema").unwrap_or_default().to_string();

    let mut blocks = Vec::with_capacity(BlockId::ALL.len());
    for id in BlockId::ALL {
        let pos = manifest
            .blocks
            .iter()
            .position(|b| b.name == id.name())
            .ok_or_else(|| bad(format!("missing block {}", id.name())))?;
        blocks.push(arrays[pos].clone());
    }
    let params = ModelParams::from_blocks(dims, blocks).map_err(|e| bad(e.to_string()))?;
    if spec.ambient_dim() != dims.latent {
        return Err(bad(format!(
            "latent size {} does not match manifold dimension {}",
            dims.latent,
            spec.ambient_dim()
        )));
    }
    Ok(Checkpoint {
        params,
        config,
        spec,
        schema,
    })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}
