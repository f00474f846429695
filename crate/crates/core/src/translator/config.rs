use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Collection;
use crate::error::{Error, Result};

/// Weights of the cycle, identity and translation terms in the generator
/// objective; the adversarial term has weight 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub lambda_tran: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cyc: 1.0,
            lambda_id: 0.5,
            lambda_tran: 0.5,
        }
    }
}

impl LossWeights {
    /// Plain CycleGAN: no translation term.
    pub fn cyclegan() -> Self {
        Self {
            lambda_tran: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_cyc", self.lambda_cyc),
            ("lambda_id", self.lambda_id),
            ("lambda_tran", self.lambda_tran),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Constant Adam step size for all four networks.
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Stops training after this many generator updates, if set.
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Training crop (and inference patch) size per collection.
    pub crop_px: BTreeMap<Collection, usize>,
    pub scale_range: (f64, f64),
    pub gen_channels: usize,
    pub gen_blocks: usize,
    pub disc_channels: usize,
    pub disc_layers: usize,
}

impl Default for TransConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TransConfig {
    pub fn paper() -> Self {
        Self {
            epochs: 100,
            batch_size: 1,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            max_steps: None,
            crop_px: BTreeMap::from([
                (Collection::Cassini, 1000),
                (Collection::Etatmajor, 500),
                (Collection::Scan50, 500),
                (Collection::Modern, 500),
            ]),
            scale_range: (0.7, 1.4),
            gen_channels: 64,
            gen_blocks: 9,
            disc_channels: 64,
            disc_layers: 3,
        }
    }

    /// Desk-scale profile: 3 residual blocks, 64 px crops, 2000 steps.
    pub fn toy() -> Self {
        Self {
            epochs: 10,
            max_steps: Some(2000),
            crop_px: Collection::ALL.iter().map(|&c| (c, 64)).collect(),
            gen_channels: 16,
            gen_blocks: 3,
            disc_channels: 16,
            ..Self::paper()
        }
    }

    pub fn crop_for(&self, collection: Collection) -> Result<usize> {
        self.crop_px
            .get(&collection)
            .copied()
            .ok_or_else(|| Error::Config(format!("no crop size configured for {collection}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.gen_channels == 0 || self.disc_channels == 0 {
            return bad("network widths must be positive");
        }
        if self.disc_layers == 0 {
            return bad("disc_layers must be at least 1");
        }
        if self.crop_px.values().any(|&c| c < 4) {
            return bad("crop sizes must be at least 4 pixels");
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("scale_range must satisfy 0 < low <= high");
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("learning_rate must be >= 0 and betas in [0, 1)");
        }
        Ok(())
    }
}
