use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Palette;
use crate::corpus::{ClassId, Collection};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildingMode {
    Individual,
    Agglomerated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelOfDetail {
    /// Area features (forest, hydrography) below this are dropped.
    pub min_polygon_area_m2: f64,
    /// Roads ranked above this are dropped; `None` keeps every road.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_road_rank: Option<u32>,
    pub building_mode: BuildingMode,
    #[serde(default)]
    pub agglomeration_radius_m: f64,
}

/// Per-collection level-of-detail rules and rendering palette.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleSpec {
    pub collection: Collection,
    pub lod: LevelOfDetail,
    pub palette: Palette,
    pub stroke_widths_px: BTreeMap<ClassId, f64>,
}

fn default_strokes() -> BTreeMap<ClassId, f64> {
    ClassId::ALL
        .iter()
        .map(|&c| {
            let w = match c {
                ClassId::Hydrography | ClassId::Roads => 2.0,
                _ => 1.0,
            };
            (c, w)
        })
        .collect()
}

impl StyleSpec {
    /// Configuration defaults; detail grows monotonically towards the present.
    pub fn default_for(collection: Collection) -> Self {
        let lod = match collection {
            Collection::Cassini => LevelOfDetail {
                min_polygon_area_m2: 10_000.0,
                max_road_rank: Some(2),
                building_mode: BuildingMode::Agglomerated,
                agglomeration_radius_m: 20.0,
            },
            Collection::Etatmajor => LevelOfDetail {
                min_polygon_area_m2: 2_500.0,
                max_road_rank: Some(3),
                building_mode: BuildingMode::Individual,
                agglomeration_radius_m: 0.0,
            },
            Collection::Scan50 => LevelOfDetail {
                min_polygon_area_m2: 1_000.0,
                max_road_rank: Some(4),
                building_mode: BuildingMode::Individual,
                agglomeration_radius_m: 0.0,
            },
            Collection::Modern => LevelOfDetail {
                min_polygon_area_m2: 0.0,
                max_road_rank: None,
                building_mode: BuildingMode::Individual,
                agglomeration_radius_m: 0.0,
            },
        };
        Self {
            collection,
            lod,
            palette: Palette::legend(),
            stroke_widths_px: default_strokes(),
        }
    }

    pub fn stroke_width(&self, class: ClassId) -> f64 {
        self.stroke_widths_px.get(&class).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.palette.validate()?;
        for (c, w) in &self.stroke_widths_px {
            if !(w.is_finite() && *w >= 1.0) {
                return Err(Error::Config(format!(
                    "stroke width for {c} must be at least 1 pixel, got {w}"
                )));
            }
        }
        let lod = &self.lod;
        if !(lod.min_polygon_area_m2 >= 0.0 && lod.agglomeration_radius_m >= 0.0) {
            return Err(Error::Config(
                "areas and radii in the level of detail must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: StyleSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("style spec serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_grow_in_detail() {
        let specs: Vec<_> = [Collection::Cassini, Collection::Etatmajor, Collection::Scan50]
            .into_iter()
            .map(StyleSpec::default_for)
            .collect();
        for s in &specs {
            s.validate().unwrap();
        }
        assert!(specs.windows(2).all(|w| w[0].lod.min_polygon_area_m2 > w[1].lod.min_polygon_area_m2));
        assert!(specs.windows(2).all(|w| w[0].lod.max_road_rank < w[1].lod.max_road_rank));
    }

    #[test]
    fn toml_round_trip_with_hex_colors() {
        let s = StyleSpec::default_for(Collection::Cassini);
        let text = s.to_toml();
        assert!(text.contains("#99EC53"), "{text}");
        assert_eq!(StyleSpec::from_toml(&text).unwrap(), s);
    }

    #[test]
    fn thin_strokes_are_rejected() {
        let mut s = StyleSpec::default_for(Collection::Scan50);
        s.stroke_widths_px.insert(ClassId::Roads, 0.5);
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }
}
