//! Shared inputs for the benchmarks.

use histmap::stylizer::{Geometry, VectorFeature};
use histmap::{ClassId, Collection, Georef, LabelRaster, LabelSource, Raster, Tile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Blobby label map: rectangles of random classes on background.
pub fn label_map(size: usize, seed: u64) -> LabelRaster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = Raster::filled(size, size, ClassId::Background);
    for _ in 0..size / 4 {
        let (y, x) = (rng.random_range(0..size), rng.random_range(0..size));
        let (h, w) = (rng.random_range(1..size / 4 + 2), rng.random_range(1..size / 4 + 2));
        let c = ClassId::ALL[rng.random_range(1..ClassId::ALL.len())];
        for yy in y..(y + h).min(size) {
            for xx in x..(x + w).min(size) {
                r.set(yy, xx, c);
            }
        }
    }
    LabelRaster::new("bench", LabelSource::HistoricalManual, r)
}

pub fn tile(size: usize) -> Tile {
    let image = Raster::from_fn(size, size, |r, c| [(r * 7 % 256) as u8, (c * 13 % 256) as u8, ((r ^ c) % 256) as u8]);
    Tile::new("bench", Collection::Cassini, image, Georef::north_up(0.0, size as f64, 1.0)).expect("valid tile")
}

/// Random squares and road segments inside `[0, extent]²` (metres).
pub fn features(n: usize, extent: f64, seed: u64) -> Vec<VectorFeature> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (x, y) = (rng.random_range(0.0..extent), rng.random_range(0.0..extent));
            let s = rng.random_range(2.0..extent / 8.0);
            if i % 3 == 0 {
                let line = geo::LineString::from(vec![(x, y), (x + s, y + s / 2.0)]);
                VectorFeature::new(Geometry::Polyline(line), ClassId::Roads, Some(1)).expect("valid road")
            } else {
                let ring = geo::LineString::from(vec![(x, y), (x + s, y), (x + s, y + s), (x, y + s), (x, y)]);
                VectorFeature::new(Geometry::Polygon(geo::Polygon::new(ring, vec![])), ClassId::Forest, None)
                    .expect("valid polygon")
            }
        })
        .collect()
}
