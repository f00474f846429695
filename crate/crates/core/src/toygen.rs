//! Procedural toy corpora: aligned "historical" and "modern" renderings of
//! the same synthetic landscape, with known labels for both eras.
//!
//! The modern image is literally the modern label map painted with
//! [`toy_modern_palette`]. The historical image blends each modern pixel
//! towards a textured, sepia "engraved" appearance by `style_gap`, so the
//! gap between eras grows monotonically with it.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use geo::{LineString, Polygon};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    save_manifest, ClassId, Collection, Georef, LabelRaster, LabelSource, Manifest, ManifestEntry,
    Tile, NOMINAL_RESOLUTION_M, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::raster::{Raster, Rgb};
use crate::stylizer::{colorize, rasterize_grid, Geometry, Palette, StyleSpec, VectorFeature};

/// Expected number of features of each kind per 128×128 tile; scaled with
/// tile area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyDensities {
    pub forest: f64,
    pub hydrography: f64,
    pub roads: f64,
    /// Building clusters (each a handful of small rectangles).
    pub buildings: f64,
}

impl Default for ToyDensities {
    fn default() -> Self {
        Self {
            forest: 2.2,
            hydrography: 0.9,
            roads: 1.5,
            buildings: 1.5,
        }
    }
}

impl ToyDensities {
    pub fn zero() -> Self {
        Self {
            forest: 0.0,
            hydrography: 0.0,
            roads: 0.0,
            buildings: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySpec {
    pub n_tiles: usize,
    pub size_px: usize,
    pub seed: u64,
    /// 0 renders both eras identically, 1 is the full historical look.
    pub style_gap: f64,
    /// Probability that a feature exists in only one of the two eras.
    pub change_rate: f64,
    pub densities: ToyDensities,
    /// Fraction of tiles flagged as manually annotated.
    pub annotated_fraction: f64,
    /// Collection tag of the historical era.
    pub collection: Collection,
    pub pixel_m: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            n_tiles: 200,
            size_px: 128,
            seed: 0,
            style_gap: 0.5,
            change_rate: 0.0,
            densities: ToyDensities::default(),
            annotated_fraction: 1.0,
            collection: Collection::Cassini,
            pixel_m: NOMINAL_RESOLUTION_M,
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.n_tiles == 0 || self.size_px == 0 {
            return Err(Error::Config("toy corpus needs n_tiles >= 1 and size_px >= 1".into()));
        }
        if !unit(self.style_gap) || !unit(self.change_rate) || !unit(self.annotated_fraction) {
            return Err(Error::Config("style_gap, change_rate and annotated_fraction must lie in [0, 1]".into()));
        }
        let d = &self.densities;
        if [d.forest, d.hydrography, d.roads, d.buildings].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("feature densities must be finite and >= 0".into()));
        }
        if self.collection == Collection::Modern {
            return Err(Error::Config("the historical era cannot be tagged `modern`".into()));
        }
        if !(self.pixel_m > 0.0) {
            return Err(Error::Config("pixel_m must be positive".into()));
        }
        Ok(())
    }
}

/// The flat palette of the modern era.
pub fn toy_modern_palette() -> Palette {
    Palette::legend()
}

/// Stroke widths and palette used to scan-convert toy features.
pub fn toy_style() -> StyleSpec {
    let mut s = StyleSpec::default_for(Collection::Modern);
    s.palette = toy_modern_palette();
    s.stroke_widths_px.insert(ClassId::Hydrography, 4.0);
    s.stroke_widths_px.insert(ClassId::Roads, 3.0);
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyTile {
    pub tile_id: String,
    pub georef: Georef,
    pub annotated: bool,
    pub historical: Raster<Rgb>,
    pub modern: Raster<Rgb>,
    pub historical_labels: Raster<ClassId>,
    pub modern_labels: Raster<ClassId>,
    /// Number of features of each class present in (historical, modern).
    pub feature_counts: ([u64; NUM_CLASSES], [u64; NUM_CLASSES]),
}

impl ToyTile {
    pub fn historical_tile(&self, collection: Collection) -> Result<Tile> {
        Tile::new(self.tile_id.clone(), collection, self.historical.clone(), self.georef)
    }

    pub fn modern_tile(&self) -> Result<Tile> {
        Tile::new(self.tile_id.clone(), Collection::Modern, self.modern.clone(), self.georef)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyCorpus {
    pub spec: ToySpec,
    pub tiles: Vec<ToyTile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Era {
    Both,
    HistoricalOnly,
    ModernOnly,
}

impl Era {
    fn historical(self) -> bool {
        self != Era::ModernOnly
    }
    fn modern(self) -> bool {
        self != Era::HistoricalOnly
    }
}

/// Generates the corpus; fully determined by `spec`.
pub fn generate_corpus(spec: &ToySpec) -> Result<ToyCorpus> {
    spec.validate()?;
    let cols = (spec.n_tiles as f64).sqrt().ceil() as usize;
    let extent = spec.size_px as f64 * spec.pixel_m;

    let mut order: Vec<usize> = (0..spec.n_tiles).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed ^ 0xA11C_A7ED));
    let n_annotated = (spec.annotated_fraction * spec.n_tiles as f64).round() as usize;
    let mut annotated = vec![false; spec.n_tiles];
    for &i in &order[..n_annotated] {
        annotated[i] = true;
    }

    let tiles = (0..spec.n_tiles)
        .map(|i| {
            let georef = Georef::north_up((i % cols) as f64 * extent, -((i / cols) as f64) * extent, spec.pixel_m);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64 + 1);
            generate_tile(spec, format!("t{i:05}"), georef, annotated[i], &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyCorpus {
        spec: spec.clone(),
        tiles,
    })
}

fn count<R: Rng>(rng: &mut R, expected: f64) -> usize {
    let whole = expected.floor();
    whole as usize + rng.random_bool(expected - whole) as usize
}

fn generate_tile(spec: &ToySpec, tile_id: String, georef: Georef, annotated: bool, rng: &mut ChaCha8Rng) -> Result<ToyTile> {
    let n = spec.size_px as f64;
    let scale = (n / 128.0).powi(2);
    let d = &spec.densities;
    let to_world = |pts: &[(f64, f64)]| -> LineString<f64> {
        LineString::from(pts.iter().map(|&(c, r)| georef.pixel_to_world(c, r)).collect::<Vec<_>>())
    };

    let mut features: Vec<(VectorFeature, Era)> = Vec::new();
    let mut push = |f: VectorFeature, rng: &mut ChaCha8Rng| {
        // draw unconditionally so geometry streams do not depend on change_rate
        let u: f64 = rng.random();
        let side: bool = rng.random();
        let era = if u < spec.change_rate {
            if side {
                Era::HistoricalOnly
            } else {
                Era::ModernOnly
            }
        } else {
            Era::Both
        };
        features.push((f, era));
    };

    for _ in 0..count(rng, d.forest * scale) {
        let (cx, cy) = (rng.random_range(0.0..n), rng.random_range(0.0..n));
        let radius = rng.random_range(0.1..0.28) * n;
        let k = 14;
        let phase: f64 = rng.random_range(0.0..TAU);
        let pts: Vec<(f64, f64)> = (0..k)
            .map(|j| {
                let a = phase + TAU * j as f64 / k as f64;
                let r = radius * rng.random_range(0.65..1.15);
                (cx + r * a.cos(), cy + r * a.sin())
            })
            .collect();
        let poly = Polygon::new(to_world(&pts), vec![]);
        push(VectorFeature::new(Geometry::Polygon(poly), ClassId::Forest, None)?, rng);
    }
    for _ in 0..count(rng, d.hydrography * scale) {
        let pts = meander(rng, n, 0.35);
        push(VectorFeature::new(Geometry::Polyline(to_world(&pts)), ClassId::Hydrography, None)?, rng);
    }
    for _ in 0..count(rng, d.roads * scale) {
        let pts = meander(rng, n, 0.08);
        push(VectorFeature::new(Geometry::Polyline(to_world(&pts)), ClassId::Roads, Some(1))?, rng);
    }
    for _ in 0..count(rng, d.buildings * scale) {
        let (cx, cy) = (rng.random_range(0.1..0.9) * n, rng.random_range(0.1..0.9) * n);
        for _ in 0..rng.random_range(3..8) {
            let (x, y) = (cx + rng.random_range(-12.0..12.0), cy + rng.random_range(-12.0..12.0));
            let (w, h) = (rng.random_range(4.0..9.0), rng.random_range(4.0..9.0));
            let pts = [(x, y), (x + w, y), (x + w, y + h), (x, y + h)];
            let poly = Polygon::new(to_world(&pts), vec![]);
            push(VectorFeature::new(Geometry::Polygon(poly), ClassId::Buildings, None)?, rng);
        }
    }

    let style = toy_style();
    let shape = (spec.size_px, spec.size_px);
    let mut counts = ([0u64; NUM_CLASSES], [0u64; NUM_CLASSES]);
    let mut hist_f = Vec::new();
    let mut mod_f = Vec::new();
    for (f, era) in &features {
        if era.historical() {
            counts.0[f.class.index()] += 1;
            hist_f.push(f.clone());
        }
        if era.modern() {
            counts.1[f.class.index()] += 1;
            mod_f.push(f.clone());
        }
    }
    let historical_labels = rasterize_grid(&hist_f, &georef, shape, &style).data;
    let modern_labels = rasterize_grid(&mod_f, &georef, shape, &style).data;

    let modern = colorize(
        &LabelRaster::new(tile_id.clone(), LabelSource::ModernVector, modern_labels.clone()),
        &style.palette,
    )?;
    let base = colorize(
        &LabelRaster::new(tile_id.clone(), LabelSource::HistoricalManual, historical_labels.clone()),
        &style.palette,
    )?;
    let engraved = engrave(&historical_labels, rng);
    let g = spec.style_gap;
    let historical = Raster::from_fn(spec.size_px, spec.size_px, |r, c| {
        let (m, t) = (base.get(r, c), engraved.get(r, c));
        std::array::from_fn(|k| {
            let v = m[k] as f64 + g * (t[k] - m[k] as f64);
            v.round().clamp(0.0, 255.0) as u8
        })
    });

    Ok(ToyTile {
        tile_id,
        georef,
        annotated,
        historical,
        modern,
        historical_labels,
        modern_labels,
        feature_counts: counts,
    })
}

/// Smooth random walk entering at one border and running across the tile.
fn meander<R: Rng>(rng: &mut R, n: f64, wiggle: f64) -> Vec<(f64, f64)> {
    let side = rng.random_range(0..4);
    let t = rng.random_range(0.1..0.9) * n;
    let (mut x, mut y, mut heading) = match side {
        0 => (t, -2.0, TAU / 4.0),
        1 => (n + 2.0, t, TAU / 2.0),
        2 => (t, n + 2.0, -TAU / 4.0),
        _ => (-2.0, t, 0.0),
    };
    heading += rng.random_range(-0.4..0.4);
    let step = n / 24.0;
    let mut pts = vec![(x, y)];
    for _ in 0..40 {
        heading += rng.random_range(-wiggle..wiggle);
        x += step * heading.cos();
        y += step * heading.sin();
        pts.push((x, y));
        if x < -4.0 || y < -4.0 || x > n + 4.0 || y > n + 4.0 {
            break;
        }
    }
    pts
}

/// The fully historical look of a label map: sepia class colours, class
/// hatching, relief hachures on open ground and banded paper noise. Values
/// are unclamped floats; blending and rounding happen at the caller.
fn engrave<R: Rng>(labels: &Raster<ClassId>, rng: &mut R) -> Raster<[f64; 3]> {
    let (h, w) = labels.shape();
    let hills: Vec<(f64, f64, f64)> = (0..rng.random_range(0..3))
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(0.1..0.25) * w as f64,
            )
        })
        .collect();
    let (p1, p2) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    let (l1, l2) = (rng.random_range(20.0..50.0), rng.random_range(20.0..50.0));
    let noise: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();

    Raster::from_fn(h, w, |r, c| {
        let (ri, ci) = (r as i64, c as i64);
        let mut rgb: [f64; 3] = match labels.get(r, c) {
            ClassId::Background => {
                let on_hill = hills.iter().any(|&(hx, hy, hr)| {
                    let d = ((c as f64 - hx).powi(2) + (r as f64 - hy).powi(2)).sqrt();
                    d < hr && (d as i64) % 5 == 0
                });
                if on_hill {
                    [168.0, 132.0, 96.0]
                } else {
                    [236.0, 224.0, 194.0]
                }
            }
            ClassId::Forest => {
                if (ri + ci) % 5 == 0 || (ri % 6 == 0 && ci % 6 == 3) {
                    [96.0, 104.0, 64.0]
                } else {
                    [170.0, 176.0, 124.0]
                }
            }
            ClassId::Hydrography => {
                if ri % 3 == 0 {
                    [92.0, 120.0, 140.0]
                } else {
                    [140.0, 164.0, 176.0]
                }
            }
            ClassId::Roads => [120.0, 86.0, 60.0],
            ClassId::Buildings => {
                if (ri - ci).rem_euclid(3) == 0 {
                    [40.0, 28.0, 24.0]
                } else {
                    [84.0, 60.0, 48.0]
                }
            }
        };
        let band = 0.08 * (TAU * r as f64 / l1 + p1).sin() * (TAU * c as f64 / l2 + p2).sin();
        let factor = 1.0 + band + 0.06 * noise[r * w + c];
        for v in &mut rgb {
            *v *= factor;
        }
        rgb
    })
}

/// Exact per-class counts for each era.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub historical_pixels: [u64; NUM_CLASSES],
    pub modern_pixels: [u64; NUM_CLASSES],
    pub historical_features: [u64; NUM_CLASSES],
    pub modern_features: [u64; NUM_CLASSES],
}

impl CorpusStats {
    /// Pixel frequency of `class` in (historical, modern).
    pub fn frequency(&self, class: ClassId) -> (f64, f64) {
        let f = |v: &[u64; NUM_CLASSES]| v[class.index()] as f64 / v.iter().sum::<u64>().max(1) as f64;
        (f(&self.historical_pixels), f(&self.modern_pixels))
    }
}

pub fn corpus_stats(corpus: &ToyCorpus) -> CorpusStats {
    let mut s = CorpusStats {
        historical_pixels: [0; NUM_CLASSES],
        modern_pixels: [0; NUM_CLASSES],
        historical_features: [0; NUM_CLASSES],
        modern_features: [0; NUM_CLASSES],
    };
    for t in &corpus.tiles {
        for c in t.historical_labels.data() {
            s.historical_pixels[c.index()] += 1;
        }
        for c in t.modern_labels.data() {
            s.modern_pixels[c.index()] += 1;
        }
        for k in 0..NUM_CLASSES {
            s.historical_features[k] += t.feature_counts.0[k];
            s.modern_features[k] += t.feature_counts.1[k];
        }
    }
    s
}

/// Writes images, label maps, world files and `manifest.toml` under `dir`.
/// Historical labels are written for annotated tiles only.
pub fn write_corpus(corpus: &ToyCorpus, dir: &Path) -> Result<Manifest> {
    let hist = corpus.spec.collection;
    let rel = |kind: &str, coll: &str, id: &str, ext: &str| PathBuf::from(format!("{kind}/{coll}/{id}.{ext}"));
    let mut entries = Vec::with_capacity(corpus.tiles.len());
    for t in &corpus.tiles {
        let hi = rel("images", hist.name(), &t.tile_id, "png");
        let mi = rel("images", "modern", &t.tile_id, "png");
        let ml = rel("labels", "modern", &t.tile_id, "png");
        let gw = rel("georef", "tiles", &t.tile_id, "wld");
        for p in [&hi, &mi, &ml, &gw] {
            ensure_parent(&dir.join(p))?;
        }
        t.historical.write_png(&dir.join(&hi))?;
        t.modern.write_png(&dir.join(&mi))?;
        LabelRaster::new(t.tile_id.clone(), LabelSource::ModernVector, t.modern_labels.clone()).write_png(&dir.join(&ml))?;
        t.georef.write_world_file(&dir.join(&gw))?;
        let mut labels = BTreeMap::from([(Collection::Modern, ml)]);
        if t.annotated {
            let hl = rel("labels", hist.name(), &t.tile_id, "png");
            ensure_parent(&dir.join(&hl))?;
            LabelRaster::new(t.tile_id.clone(), LabelSource::HistoricalManual, t.historical_labels.clone())
                .write_png(&dir.join(&hl))?;
            labels.insert(hist, hl);
        }
        let (cx, cy) = t.georef.pixel_to_world(t.modern.width() as f64 / 2.0, t.modern.height() as f64 / 2.0);
        entries.push(ManifestEntry {
            tile_id: t.tile_id.clone(),
            images: BTreeMap::from([(hist, hi), (Collection::Modern, mi)]),
            labels,
            centroid_x_m: cx,
            centroid_y_m: cy,
            annotated: t.annotated,
            georef: Some(gw),
        });
    }
    let manifest = Manifest::new(dir, entries)?;
    save_manifest(&manifest, &dir.join("manifest.toml"))?;
    Ok(manifest)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stylizer::declassify;

    fn small(gap: f64, change: f64) -> ToySpec {
        ToySpec {
            n_tiles: 6,
            size_px: 64,
            seed: 42,
            style_gap: gap,
            change_rate: change,
            ..ToySpec::default()
        }
    }

    #[test]
    fn no_change_means_identical_labels() {
        let c = generate_corpus(&small(0.7, 0.0)).unwrap();
        for t in &c.tiles {
            assert_eq!(t.historical_labels, t.modern_labels);
        }
        let s = corpus_stats(&c);
        assert_eq!(s.historical_pixels, s.modern_pixels);
    }

    #[test]
    fn zero_gap_zero_change_gives_identical_images() {
        let c = generate_corpus(&small(0.0, 0.0)).unwrap();
        for t in &c.tiles {
            assert_eq!(t.historical, t.modern);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_corpus(&small(0.5, 0.3)).unwrap(), generate_corpus(&small(0.5, 0.3)).unwrap());
    }

    #[test]
    fn modern_image_is_the_colorized_label_map() {
        let c = generate_corpus(&small(0.9, 0.4)).unwrap();
        for t in &c.tiles {
            let l = LabelRaster::new(t.tile_id.clone(), LabelSource::ModernVector, t.modern_labels.clone());
            assert_eq!(colorize(&l, &toy_modern_palette()).unwrap(), t.modern);
            assert_eq!(declassify(&t.tile_id, &t.modern, &toy_modern_palette()).unwrap(), l);
        }
    }

    #[test]
    fn zero_densities_give_pure_background() {
        let spec = ToySpec {
            densities: ToyDensities::zero(),
            ..small(0.5, 0.5)
        };
        let s = corpus_stats(&generate_corpus(&spec).unwrap());
        assert_eq!(s.frequency(ClassId::Background), (1.0, 1.0));
    }

    #[test]
    fn era_gap_grows_with_style_gap() {
        let mut prev = -1.0;
        for gap in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let c = generate_corpus(&small(gap, 0.0)).unwrap();
            let mut total = 0.0;
            let mut n = 0.0;
            for t in &c.tiles {
                for (a, b) in t.historical.data().iter().zip(t.modern.data()) {
                    total += (0..3).map(|k| (a[k] as f64 - b[k] as f64).abs()).sum::<f64>();
                    n += 3.0;
                }
            }
            let l1 = total / n;
            assert!(l1 >= prev, "gap {gap}: {l1} < {prev}");
            prev = l1;
        }
    }

    #[test]
    fn paired_footprints_and_background_share() {
        let c = generate_corpus(&ToySpec {
            n_tiles: 30,
            size_px: 128,
            ..small(0.5, 0.0)
        })
        .unwrap();
        let ids: std::collections::BTreeSet<_> = c.tiles.iter().map(|t| t.georef.0.map(f64::to_bits)).collect();
        assert_eq!(ids.len(), 30);
        let bg = corpus_stats(&c).frequency(ClassId::Background).1;
        assert!((0.6..0.85).contains(&bg), "background share {bg}");
    }

    /// Each feature survives in a given era with probability 1 − c/2 and
    /// the two eras differ by ±1 per changed feature.
    #[test]
    fn half_change_keeps_eras_symmetric() {
        let spec = ToySpec {
            n_tiles: 120,
            densities: ToyDensities {
                forest: 3.0,
                ..ToyDensities::zero()
            },
            ..small(0.5, 0.5)
        };
        let s = corpus_stats(&generate_corpus(&spec).unwrap());
        let f = ClassId::Forest.index();
        let (x, y) = (s.historical_features[f] as f64, s.modern_features[f] as f64);
        // estimated number of generated features
        let total = (x + y) / 1.5;
        assert!((x - y).abs() <= 3.0 * (0.5 * total).sqrt(), "{x} vs {y}");
        let mean = (x + y) / 2.0;
        let sigma = (total * 0.75 * 0.25).sqrt();
        assert!((x - mean).abs() <= 3.0 * sigma && (y - mean).abs() <= 3.0 * sigma);
    }

    #[test]
    fn written_corpus_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ToySpec {
            annotated_fraction: 0.5,
            ..small(0.5, 0.0)
        };
        let c = generate_corpus(&spec).unwrap();
        let m = write_corpus(&c, dir.path()).unwrap();
        let loaded = crate::corpus::load_manifest(&dir.path().join("manifest.toml")).unwrap();
        assert_eq!(loaded.entries(), m.entries());
        assert_eq!(loaded.annotated_ids().len(), 3);
        let e = &loaded.entries()[0];
        let img = Raster::<Rgb>::read_png(&loaded.resolve(&e.images[&Collection::Cassini])).unwrap();
        assert_eq!(img, c.tiles[0].historical);
    }
}
