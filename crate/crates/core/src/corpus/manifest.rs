use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Collection;
use crate::error::{Error, Result};

/// One tile footprint and the files that describe it in every collection.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub tile_id: String,
    pub images: BTreeMap<Collection, PathBuf>,
    pub labels: BTreeMap<Collection, PathBuf>,
    pub centroid_x_m: f64,
    pub centroid_y_m: f64,
    pub annotated: bool,
    /// World-file sidecar; paths are relative to the manifest directory.
    pub georef: Option<PathBuf>,
}

/// Validated, immutable dataset index. Relative paths resolve against `root`.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.tile_id.as_str()) {
                return Err(Error::DuplicateTile(e.tile_id.clone()));
            }
        }
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, tile_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.tile_id == tile_id)
    }

    pub fn annotated_ids(&self) -> BTreeSet<String> {
        self.entries
            .iter()
            .filter(|e| e.annotated)
            .map(|e| e.tile_id.clone())
            .collect()
    }

    pub fn unannotated_ids(&self) -> BTreeSet<String> {
        self.entries
            .iter()
            .filter(|e| !e.annotated)
            .map(|e| e.tile_id.clone())
            .collect()
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.root.join(rel)
        }
    }

    fn referenced_paths(&self) -> impl Iterator<Item = PathBuf> + '_ {
        self.entries.iter().flat_map(move |e| {
            e.images
                .values()
                .chain(e.labels.values())
                .chain(e.georef.iter())
                .map(move |p| self.resolve(p))
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default)]
    tile: Vec<RawEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    tile_id: String,
    centroid_x_m: f64,
    centroid_y_m: f64,
    #[serde(default)]
    annotated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    georef: Option<PathBuf>,
    images: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    labels: BTreeMap<String, PathBuf>,
}

fn parse_collections(
    raw: BTreeMap<String, PathBuf>,
    path: &Path,
    tile_id: &str,
) -> Result<BTreeMap<Collection, PathBuf>> {
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<Collection>()
                .map(|c| (c, v))
                .map_err(|_| Error::Schema {
                    path: path.to_path_buf(),
                    message: format!("tile `{tile_id}`: unknown collection key `{k}`"),
                })
        })
        .collect()
}

/// Parses and validates a manifest file; every referenced file must exist.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawManifest = toml::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut entries = Vec::with_capacity(raw.tile.len());
    for r in raw.tile {
        if r.images.is_empty() {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("tile `{}`: field `images` is empty", r.tile_id),
            });
        }
        let images = parse_collections(r.images, path, &r.tile_id)?;
        let labels = parse_collections(r.labels, path, &r.tile_id)?;
        entries.push(ManifestEntry {
            tile_id: r.tile_id,
            images,
            labels,
            centroid_x_m: r.centroid_x_m,
            centroid_y_m: r.centroid_y_m,
            annotated: r.annotated,
            georef: r.georef,
        });
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = Manifest::new(root, entries)?;

    let missing: Vec<PathBuf> = manifest.referenced_paths().filter(|p| !p.exists()).collect();
    if !missing.is_empty() {
        return Err(Error::DanglingReference { paths: missing });
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let raw = RawManifest {
        tile: manifest
            .entries
            .iter()
            .map(|e| RawEntry {
                tile_id: e.tile_id.clone(),
                centroid_x_m: e.centroid_x_m,
                centroid_y_m: e.centroid_y_m,
                annotated: e.annotated,
                georef: e.georef.clone(),
                images: e
                    .images
                    .iter()
                    .map(|(k, v)| (k.name().to_string(), v.clone()))
                    .collect(),
                labels: e
                    .labels
                    .iter()
                    .map(|(k, v)| (k.name().to_string(), v.clone()))
                    .collect(),
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&raw).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
