use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Collection;
use crate::error::{Error, Result};
use crate::metrics::MetricConfig;
use crate::segnet::SegConfig;
use crate::toygen::ToySpec;
use crate::translator::{LossWeights, TransConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workflow {
    SupervisedCv,
    WeakDirect,
    WeakTranslate,
    Evaluate,
    ForestDensity,
    Toygen,
    Stylize,
}

/// Base table of defaults that a config file is layered on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Paper,
    Toy,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "toy" => Ok(Self::Toy),
            _ => Err(Error::Config(format!("unknown profile `{s}` (expected paper or toy)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Segmentation checkpoint for `infer`.
    pub checkpoint: Option<PathBuf>,
    /// Translation checkpoint; `infer` translates before segmenting when set.
    pub translator: Option<PathBuf>,
    /// Directory of predicted label PNGs named `<tile_id>.png`.
    pub predictions: Option<PathBuf>,
    /// Line-delimited vector features for `stylize`.
    pub features: Option<PathBuf>,
    /// Style spec for `stylize` and for synthetic modern maps.
    pub style: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub cell_size_km: f64,
    /// Rendered size of one grid cell in pixels.
    pub cell_px: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            cell_size_km: 10.0,
            cell_px: 16,
        }
    }
}

/// Everything one run needs, resolved from a profile and a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// The table of defaults this config was resolved against.
    pub profile: Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow: Option<Workflow>,
    pub collection: Collection,
    pub seeds: Vec<u64>,
    pub folds: usize,
    /// Train folds or seeds on separate threads.
    pub parallel: bool,
    pub paths: Paths,
    pub seg: SegConfig,
    pub trans: TransConfig,
    pub weights: LossWeights,
    pub metric: MetricConfig,
    pub density: DensityConfig,
    pub toy: ToySpec,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let (seg, trans) = match profile {
            Profile::Paper => (SegConfig::paper(), TransConfig::paper()),
            Profile::Toy => (SegConfig::toy(), TransConfig::toy()),
        };
        Self {
            profile,
            workflow: None,
            collection: Collection::Cassini,
            seeds: vec![0, 1, 2],
            folds: 7,
            parallel: false,
            paths: Paths::default(),
            seg,
            trans,
            weights: LossWeights::default(),
            metric: MetricConfig::default(),
            density: DensityConfig::default(),
            toy: ToySpec::default(),
        }
    }

    /// Layers `text` (TOML) over a profile's table; unknown keys are
    /// errors. A `profile` key in the text overrides `profile`.
    pub fn from_toml(profile: Profile, text: &str) -> Result<Self> {
        let over: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let profile = match over.get("profile") {
            Some(toml::Value::String(p)) => p.parse()?,
            Some(_) => return Err(Error::Config("profile must be a string".into())),
            None => profile,
        };
        let mut base = toml::Table::try_from(Self::profile(profile)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, over);
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(profile: Profile, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(profile, &text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("cross-validation needs at least 2 folds".into()));
        }
        if !(self.density.cell_size_km > 0.0 && self.density.cell_size_km.is_finite()) || self.density.cell_px == 0 {
            return Err(Error::Config("density cell size must be positive".into()));
        }
        self.seg.validate()?;
        self.trans.validate()?;
        self.weights.validate()?;
        self.toy.validate()
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Config(format!("paths.{what} must be set for this command")))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_resolves_to_the_profile() {
        assert_eq!(RunConfig::from_toml(Profile::Toy, "").unwrap(), RunConfig::profile(Profile::Toy));
        assert_eq!(RunConfig::from_toml(Profile::Paper, "").unwrap(), RunConfig::profile(Profile::Paper));
    }

    #[test]
    fn nested_overrides_keep_sibling_defaults() {
        let cfg = RunConfig::from_toml(
            Profile::Toy,
            "workflow = \"weak_translate\"\nseeds = [7]\n[seg]\nepochs = 3\n[weights]\nlambda_tran = 0.0\n",
        )
        .unwrap();
        assert_eq!(cfg.workflow, Some(Workflow::WeakTranslate));
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.seg.epochs, 3);
        assert_eq!(cfg.seg.batch_size, SegConfig::toy().batch_size);
        assert_eq!(cfg.weights.lambda_tran, 0.0);
        assert_eq!(cfg.weights.lambda_id, 0.5);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(RunConfig::from_toml(Profile::Toy, "seeds = []").is_err());
        assert!(RunConfig::from_toml(Profile::Toy, "unknown = 1").is_err());
        assert!(RunConfig::from_toml(Profile::Toy, "[seg]\nbogus = 1").is_err());
        assert!(RunConfig::from_toml(Profile::Toy, "[weights]\nlambda_cyc = -1.0").is_err());
        assert!(RunConfig::from_toml(Profile::Toy, "[density]\ncell_size_km = 0.0").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::from_toml(Profile::Paper, "folds = 3").unwrap();
        assert_eq!(RunConfig::from_toml(Profile::Toy, &cfg.to_toml()).unwrap(), cfg);
    }
}
