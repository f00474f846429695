use std::collections::BTreeMap;
use std::path::Path;

use candle_core::DType;

use super::{TransConfig, TransState, TranslationModelPair};
use crate::error::{Error, Result};
use crate::nn::{load_tensors, save_tensors};

const KIND: &str = "histmap.translator";

pub struct TransCheckpoint {
    pub model: TranslationModelPair,
    pub state: Option<TransState>,
}

/// All four networks plus config, seed and training state (loss weights
/// and step counter) in one safetensors file.
pub fn save_trans_checkpoint(path: &Path, model: &TranslationModelPair, state: Option<&TransState>) -> Result<()> {
    let mut tensors = Vec::new();
    for (prefix, store) in model.stores() {
        store.export(prefix, &mut tensors);
    }
    let mut meta = BTreeMap::new();
    meta.insert("kind".to_string(), KIND.to_string());
    meta.insert("config".to_string(), json(&model.config)?);
    meta.insert("seed".to_string(), model.seed.to_string());
    if let Some(s) = state {
        meta.insert("train_state".to_string(), json(s)?);
    }
    save_tensors(path, &tensors, &meta)
}

pub fn load_trans_checkpoint(path: &Path) -> Result<TransCheckpoint> {
    let (tensors, meta) = load_tensors(path)?;
    let field = |k: &str| {
        meta.get(k)
            .ok_or_else(|| Error::Checkpoint(format!("{}: missing metadata `{k}`", path.display())))
    };
    if field("kind")? != KIND {
        return Err(Error::Checkpoint(format!("{} is not a translation checkpoint", path.display())));
    }
    let config: TransConfig = serde_json::from_str(field("config")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let seed: u64 = field("seed")?.parse().map_err(|_| Error::Checkpoint("bad seed".into()))?;
    let dtype = tensors.values().next().map_or(DType::F32, |t| t.dtype());
    let model = TranslationModelPair::new(&config, seed, dtype)?;
    for (prefix, store) in model.stores() {
        store.import(prefix, &tensors)?;
    }
    let state = match meta.get("train_state") {
        Some(s) => Some(serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?),
        None => None,
    };
    Ok(TransCheckpoint { model, state })
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::translator::LossWeights;

    #[test]
    fn save_load_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TransConfig {
            gen_channels: 2,
            gen_blocks: 1,
            disc_channels: 2,
            ..TransConfig::toy()
        };
        let m = TranslationModelPair::new(&cfg, 7, DType::F32).unwrap();
        let state = TransState {
            step: 12,
            epoch: 3,
            weights: LossWeights::cyclegan(),
            rng_seed: 5,
            history: Vec::new(),
        };
        let p = dir.path().join("t.safetensors");
        save_trans_checkpoint(&p, &m, Some(&state)).unwrap();
        let back = load_trans_checkpoint(&p).unwrap();
        assert_eq!(back.model.config, cfg);
        assert_eq!(back.state.as_ref(), Some(&state));
        assert_eq!(back.model.flat_values().unwrap(), m.flat_values().unwrap());
        let q = dir.path().join("u.safetensors");
        save_trans_checkpoint(&q, &back.model, back.state.as_ref()).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
        assert!(crate::segnet::load_seg_checkpoint(&p).is_err());
    }
}
