//! Tiles, labels, manifests and the ways a corpus is carved into
//! training, validation and evaluation sets.

mod folds;
mod manifest;
mod patches;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Raster, Rgb};

pub use folds::{make_folds, split_supervised, split_weak, FoldSplit, SupervisedSplit, WeakSplit};
pub use manifest::{load_manifest, save_manifest, Manifest, ManifestEntry};
pub use patches::{extract_patches, padded_len, patch_offsets, stitch, Patch};

/// Land-cover classes shared by every label raster.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum ClassId {
    #[default]
    Background = 0,
    Forest = 1,
    Hydrography = 2,
    Roads = 3,
    Buildings = 4,
}

pub const NUM_CLASSES: usize = 5;

impl ClassId {
    pub const ALL: [ClassId; NUM_CLASSES] = [
        ClassId::Background,
        ClassId::Forest,
        ClassId::Hydrography,
        ClassId::Roads,
        ClassId::Buildings,
    ];

    pub fn from_u8(v: u8) -> Result<Self> {
        Self::ALL
            .get(v as usize)
            .copied()
            .ok_or(Error::InvalidClass(v as u32))
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Background => "background",
            ClassId::Forest => "forest",
            ClassId::Hydrography => "hydrography",
            ClassId::Roads => "roads",
            ClassId::Buildings => "buildings",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Map collections. `Modern` is the contemporary rendering the weak labels
/// come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Collection {
    Cassini,
    Etatmajor,
    Scan50,
    Modern,
}

impl Collection {
    pub const ALL: [Collection; 4] = [
        Collection::Cassini,
        Collection::Etatmajor,
        Collection::Scan50,
        Collection::Modern,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Collection::Cassini => "cassini",
            Collection::Etatmajor => "etatmajor",
            Collection::Scan50 => "scan50",
            Collection::Modern => "modern",
        }
    }
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Collection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cassini" => Ok(Collection::Cassini),
            "etatmajor" => Ok(Collection::Etatmajor),
            "scan50" => Ok(Collection::Scan50),
            "modern" => Ok(Collection::Modern),
            other => Err(Error::Config(format!("unknown collection `{other}`"))),
        }
    }
}

/// Nominal ground sampling distance of the aligned tile sets.
pub const NOMINAL_RESOLUTION_M: f64 = 6.77;

/// Affine pixel → projected-meter transform, GDAL coefficient order:
/// `x = c[0] + c[1]·col + c[2]·row`, `y = c[3] + c[4]·col + c[5]·row`,
/// with `(col, row)` in continuous pixel coordinates (pixel centers at +0.5).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Georef(pub [f64; 6]);

impl Georef {
    /// North-up transform with the top-left corner at `(x0, y0)`.
    pub fn north_up(x0: f64, y0: f64, pixel_m: f64) -> Self {
        Georef([x0, pixel_m, 0.0, y0, 0.0, -pixel_m])
    }

    fn det(&self) -> f64 {
        let c = &self.0;
        c[1] * c[5] - c[2] * c[4]
    }

    pub fn is_invertible(&self) -> bool {
        let d = self.det();
        d.is_finite() && d.abs() > 1e-12
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        let c = &self.0;
        (c[0] + c[1] * col + c[2] * row, c[3] + c[4] * col + c[5] * row)
    }

    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let c = &self.0;
        let d = self.det();
        let (dx, dy) = (x - c[0], y - c[3]);
        ((c[5] * dx - c[2] * dy) / d, (-c[4] * dx + c[1] * dy) / d)
    }

    /// Square root of the pixel footprint area.
    pub fn resolution_m_per_px(&self) -> f64 {
        self.det().abs().sqrt()
    }

    pub fn pixel_area_m2(&self) -> f64 {
        self.det().abs()
    }

    /// Parses an ESRI world file (A, D, B, E, C, F; C/F locate the centre
    /// of the top-left pixel).
    pub fn read_world_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Schema {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let [a, d, b, e, c, f]: [f64; 6] = vals.try_into().map_err(|_| Error::Schema {
            path: path.to_path_buf(),
            message: "world file needs exactly 6 coefficients".into(),
        })?;
        let g = Georef([
            c - 0.5 * a - 0.5 * b,
            a,
            b,
            f - 0.5 * d - 0.5 * e,
            d,
            e,
        ]);
        if !g.is_invertible() {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: "affine transform is not invertible".into(),
            });
        }
        Ok(g)
    }

    pub fn write_world_file(&self, path: &Path) -> Result<()> {
        let [_, a, b, _, d, e] = self.0;
        let (c, f) = self.pixel_to_world(0.5, 0.5);
        let text = format!("{a}\n{d}\n{b}\n{e}\n{c}\n{f}\n");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// One georeferenced raster patch of a single collection.
#[derive(Clone, Debug, PartialEq)]
pub struct Tile {
    pub tile_id: String,
    pub collection: Collection,
    pub image: Raster<Rgb>,
    pub georef: Georef,
}

impl Tile {
    pub fn new(
        tile_id: impl Into<String>,
        collection: Collection,
        image: Raster<Rgb>,
        georef: Georef,
    ) -> Result<Self> {
        let tile_id = tile_id.into();
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::Data(format!("tile `{tile_id}` has an empty image")));
        }
        if !georef.is_invertible() {
            return Err(Error::Data(format!(
                "tile `{tile_id}` has a non-invertible georeference"
            )));
        }
        Ok(Self {
            tile_id,
            collection,
            image,
            georef,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.image.shape()
    }

    pub fn resolution_m_per_px(&self) -> f64 {
        self.georef.resolution_m_per_px()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    HistoricalManual,
    ModernVector,
}

/// Per-pixel class map for one tile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    pub tile_id: String,
    pub source: LabelSource,
    pub data: Raster<ClassId>,
}

impl LabelRaster {
    pub fn new(tile_id: impl Into<String>, source: LabelSource, data: Raster<ClassId>) -> Self {
        Self {
            tile_id: tile_id.into(),
            source,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    /// Reads a single-channel PNG whose pixel values are class ids.
    pub fn read_png(tile_id: &str, source: LabelSource, path: &Path) -> Result<Self> {
        let raw = Raster::<u8>::read_gray_png(path)?;
        let mut data = Vec::with_capacity(raw.data().len());
        for &v in raw.data() {
            data.push(ClassId::from_u8(v)?);
        }
        Ok(Self::new(
            tile_id,
            source,
            Raster::from_vec(raw.height(), raw.width(), data)?,
        ))
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        self.data.map(|c| *c as u8).write_gray_png(path)
    }

    pub fn class_counts(&self) -> [u64; NUM_CLASSES] {
        let mut counts = [0u64; NUM_CLASSES];
        for c in self.data.data() {
            counts[c.index()] += 1;
        }
        counts
    }
}
