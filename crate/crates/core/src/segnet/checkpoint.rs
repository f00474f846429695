use std::collections::BTreeMap;
use std::path::Path;

use candle_core::DType;

use super::{SegConfig, SegModel, TrainState};
use crate::error::{Error, Result};
use crate::nn::{load_tensors, save_tensors};

const KIND: &str = "histmap.segnet";

pub struct SegCheckpoint {
    pub model: SegModel,
    pub state: Option<TrainState>,
}

/// Parameters plus config, seed and training history in one safetensors
/// file.
pub fn save_seg_checkpoint(path: &Path, model: &SegModel, state: Option<&TrainState>) -> Result<()> {
    let mut tensors = Vec::new();
    model.params().export("", &mut tensors);
    let mut meta = BTreeMap::new();
    meta.insert("kind".to_string(), KIND.to_string());
    meta.insert("config".to_string(), json(&model.config)?);
    meta.insert("seed".to_string(), model.seed.to_string());
    if let Some(s) = state {
        meta.insert("train_state".to_string(), json(s)?);
    }
    save_tensors(path, &tensors, &meta)
}

pub fn load_seg_checkpoint(path: &Path) -> Result<SegCheckpoint> {
    let (tensors, meta) = load_tensors(path)?;
    let field = |k: &str| {
        meta.get(k)
            .ok_or_else(|| Error::Checkpoint(format!("{}: missing metadata `{k}`", path.display())))
    };
    if field("kind")? != KIND {
        return Err(Error::Checkpoint(format!("{} is not a segmentation checkpoint", path.display())));
    }
    let config: SegConfig = serde_json::from_str(field("config")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let seed: u64 = field("seed")?.parse().map_err(|_| Error::Checkpoint("bad seed".into()))?;
    let dtype = tensors.values().next().map_or(DType::F32, |t| t.dtype());
    let model = SegModel::new(&config, seed, dtype)?;
    model.params().import("", &tensors)?;
    let state = match meta.get("train_state") {
        Some(s) => Some(serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?),
        None => None,
    };
    Ok(SegCheckpoint { model, state })
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Checkpoint(e.to_string()))
}
