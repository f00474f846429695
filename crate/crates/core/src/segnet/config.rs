use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Collection, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::MetricConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegConfig {
    pub stages: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub convs_per_stage: usize,
    pub num_classes: usize,
    /// Training crop (and inference patch) size per collection.
    pub crop_px: BTreeMap<Collection, usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay_power: f64,
    pub scale_range: (f64, f64),
    pub dice_smooth: f64,
    #[serde(default)]
    pub validation: MetricConfig,
}

impl Default for SegConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl SegConfig {
    pub fn paper() -> Self {
        Self {
            stages: 8,
            base_channels: 32,
            max_channels: 512,
            convs_per_stage: 2,
            num_classes: NUM_CLASSES,
            crop_px: BTreeMap::from([
                (Collection::Cassini, 1000),
                (Collection::Etatmajor, 500),
                (Collection::Scan50, 500),
                (Collection::Modern, 500),
            ]),
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-2,
            momentum: 0.99,
            weight_decay: 3e-5,
            lr_decay_power: 0.9,
            scale_range: (0.7, 1.4),
            dice_smooth: 1e-5,
            validation: MetricConfig::default(),
        }
    }

    /// Desk-scale profile: five stages, 128 px crops, batch 8, 20 epochs.
    pub fn toy() -> Self {
        Self {
            stages: 5,
            base_channels: 8,
            max_channels: 64,
            crop_px: Collection::ALL.iter().map(|&c| (c, 128)).collect(),
            epochs: 20,
            batch_size: 8,
            momentum: 0.9,
            ..Self::paper()
        }
    }

    pub fn crop_for(&self, collection: Collection) -> Result<usize> {
        self.crop_px
            .get(&collection)
            .copied()
            .ok_or_else(|| Error::Config(format!("no crop size configured for {collection}")))
    }

    /// Spatial size of the input must be a multiple of this; smaller or
    /// ragged inputs are mirror-padded up to it.
    pub fn downsampling_factor(&self) -> usize {
        1 << (self.stages - 1)
    }

    pub fn channels(&self) -> Vec<usize> {
        (0..self.stages)
            .map(|s| (self.base_channels << s).min(self.max_channels))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.stages < 2 {
            return bad("segmentation network needs at least 2 stages");
        }
        if self.stages > 12 {
            return bad("more than 12 stages is not supported");
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return bad("channel widths must satisfy 0 < base_channels <= max_channels");
        }
        if self.convs_per_stage == 0 {
            return bad("convs_per_stage must be at least 1");
        }
        if self.num_classes != NUM_CLASSES {
            return bad("num_classes must be 5");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.crop_px.values().any(|&c| c == 0) {
            return bad("crop sizes must be positive");
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("scale_range must satisfy 0 < low <= high");
        }
        if self.learning_rate < 0.0 || !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return bad("learning_rate, weight_decay must be >= 0 and momentum in [0, 1)");
        }
        if self.dice_smooth <= 0.0 {
            return bad("dice_smooth must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_valid_and_round_trip_through_toml() {
        for cfg in [SegConfig::paper(), SegConfig::toy()] {
            cfg.validate().unwrap();
            let s = toml::to_string(&cfg).unwrap();
            assert_eq!(toml::from_str::<SegConfig>(&s).unwrap(), cfg);
        }
    }

    #[test]
    fn paper_profile_geometry() {
        let cfg = SegConfig::paper();
        assert_eq!(cfg.downsampling_factor(), 128);
        assert_eq!(cfg.channels(), vec![32, 64, 128, 256, 512, 512, 512, 512]);
        assert_eq!(cfg.crop_for(Collection::Cassini).unwrap(), 1000);
        assert_eq!(cfg.crop_for(Collection::Etatmajor).unwrap(), 500);
    }

    #[test]
    fn one_stage_is_rejected() {
        let cfg = SegConfig {
            stages: 1,
            ..SegConfig::toy()
        };
        assert!(cfg.validate().is_err());
    }
}
