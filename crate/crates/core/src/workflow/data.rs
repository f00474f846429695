use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::corpus::{ClassId, Collection, Georef, LabelRaster, LabelSource, Manifest, ManifestEntry, Tile};
use crate::error::{Error, Result};
use crate::raster::{Raster, Rgb};
use crate::stylizer::{colorize, Palette};
use crate::toygen::{toy_modern_palette, ToyCorpus};

/// Everything known about one footprint for a single historical collection.
#[derive(Clone, Debug)]
pub struct TileData {
    pub tile: Tile,
    /// Manual labels of the historical map (annotated tiles only).
    pub historical_labels: Option<Raster<ClassId>>,
    /// Modern label raster at the collection's level of detail.
    pub modern_labels: Option<Raster<ClassId>>,
}

/// One historical collection loaded into memory, keyed by tile id.
pub struct Dataset {
    pub collection: Collection,
    pub manifest: Manifest,
    pub tiles: BTreeMap<String, TileData>,
    /// Colours of the synthetic modern maps.
    pub palette: Palette,
}

impl Dataset {
    /// Reads images, labels and world files of `collection` for every
    /// manifest entry that has an image in it.
    pub fn load(manifest: &Manifest, collection: Collection, palette: Palette) -> Result<Self> {
        palette.validate()?;
        let mut tiles = BTreeMap::new();
        for e in manifest.entries() {
            let Some(img) = e.images.get(&collection) else {
                continue;
            };
            let image = Raster::<Rgb>::read_png(&manifest.resolve(img))?;
            let georef = match &e.georef {
                Some(p) => Georef::read_world_file(&manifest.resolve(p))?,
                None => Georef::north_up(e.centroid_x_m, e.centroid_y_m, 1.0),
            };
            let read = |c: Collection, src: LabelSource| -> Result<Option<Raster<ClassId>>> {
                match e.labels.get(&c) {
                    Some(p) => {
                        let l = LabelRaster::read_png(&e.tile_id, src, &manifest.resolve(p))?;
                        l.data.ensure_shape(image.shape())?;
                        Ok(Some(l.data))
                    }
                    None => Ok(None),
                }
            };
            let historical_labels = if e.annotated {
                read(collection, LabelSource::HistoricalManual)?
            } else {
                None
            };
            let modern_labels = read(Collection::Modern, LabelSource::ModernVector)?;
            tiles.insert(
                e.tile_id.clone(),
                TileData {
                    tile: Tile::new(e.tile_id.clone(), collection, image, georef)?,
                    historical_labels,
                    modern_labels,
                },
            );
        }
        if tiles.is_empty() {
            return Err(Error::EmptySplit(format!("manifest has no {collection} images")));
        }
        Ok(Self {
            collection,
            manifest: manifest.clone(),
            tiles,
            palette,
        })
    }

    /// The in-memory equivalent of writing the corpus and loading it back.
    pub fn from_toy(corpus: &ToyCorpus) -> Result<Self> {
        let collection = corpus.spec.collection;
        let mut entries = Vec::new();
        let mut tiles = BTreeMap::new();
        for t in &corpus.tiles {
            let (h, w) = t.historical.shape();
            let (cx, cy) = t.georef.pixel_to_world(w as f64 / 2.0, h as f64 / 2.0);
            entries.push(ManifestEntry {
                tile_id: t.tile_id.clone(),
                images: BTreeMap::new(),
                labels: BTreeMap::new(),
                centroid_x_m: cx,
                centroid_y_m: cy,
                annotated: t.annotated,
                georef: None,
            });
            tiles.insert(
                t.tile_id.clone(),
                TileData {
                    tile: t.historical_tile(collection)?,
                    historical_labels: t.annotated.then(|| t.historical_labels.clone()),
                    modern_labels: Some(t.modern_labels.clone()),
                },
            );
        }
        Ok(Self {
            collection,
            manifest: Manifest::new(PathBuf::new(), entries)?,
            tiles,
            palette: toy_modern_palette(),
        })
    }

    pub fn get(&self, id: &str) -> Result<&TileData> {
        self.tiles
            .get(id)
            .ok_or_else(|| Error::Pairing(format!("tile `{id}` is not in the dataset")))
    }

    pub fn historical_labels(&self, id: &str) -> Result<&Raster<ClassId>> {
        self.get(id)?
            .historical_labels
            .as_ref()
            .ok_or_else(|| Error::Pairing(format!("tile `{id}` has no historical labels")))
    }

    pub fn modern_labels(&self, id: &str) -> Result<&Raster<ClassId>> {
        self.get(id)?
            .modern_labels
            .as_ref()
            .ok_or_else(|| Error::Pairing(format!("tile `{id}` has no aligned modern label raster")))
    }

    pub fn images(&self, ids: &[String]) -> Result<BTreeMap<String, Raster<Rgb>>> {
        ids.iter().map(|id| Ok((id.clone(), self.get(id)?.tile.image.clone()))).collect()
    }

    pub fn modern_label_map(&self, ids: &[String]) -> Result<BTreeMap<String, Raster<ClassId>>> {
        ids.iter().map(|id| Ok((id.clone(), self.modern_labels(id)?.clone()))).collect()
    }

    /// Modern labels of `id` painted with the dataset palette.
    pub fn synthetic_modern(&self, id: &str) -> Result<Raster<Rgb>> {
        colorize(
            &LabelRaster::new(id, LabelSource::ModernVector, self.modern_labels(id)?.clone()),
            &self.palette,
        )
    }

    /// Annotated tile ids in order.
    pub fn annotated_ids(&self) -> Vec<String> {
        self.tiles
            .iter()
            .filter(|(_, t)| t.historical_labels.is_some())
            .map(|(id, _)| id.clone())
            .collect()
    }
}
