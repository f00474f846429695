use serde::{Deserialize, Serialize};

use crate::corpus::{ClassId, Collection, Georef, LabelRaster};
use crate::error::{Error, Result};
use crate::raster::{Raster, Rgb};

/// Forest share of the predicted pixels in each cell of a square grid
/// aligned to multiples of the cell size in map coordinates. Row 0 is the
/// northernmost row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMap {
    pub era: Collection,
    pub cell_size_km: f64,
    /// World coordinates of the north-west corner of cell (0, 0).
    pub origin_x_m: f64,
    pub origin_y_m: f64,
    pub rows: usize,
    pub cols: usize,
    /// Forest pixel count per cell, row-major.
    pub forest: Vec<u64>,
    /// Predicted pixel count per cell; 0 marks a missing cell.
    pub covered: Vec<u64>,
}

const RAMP_LOW: Rgb = [247, 244, 222];
const RAMP_HIGH: Rgb = [0, 88, 36];

/// Pixel centres are binned into cells; a pixel seen by several tiles is
/// counted once per tile.
pub fn forest_density(predictions: &[(LabelRaster, Georef)], cell_size_km: f64, era: Collection) -> Result<DensityMap> {
    if !(cell_size_km > 0.0 && cell_size_km.is_finite()) {
        return Err(Error::Config(format!("density cell size must be positive, got {cell_size_km} km")));
    }
    if predictions.is_empty() {
        return Err(Error::Data("no predictions to aggregate".into()));
    }
    let cell_m = cell_size_km * 1000.0;
    let key = |g: &Georef, r: usize, c: usize| {
        let (x, y) = g.pixel_to_world(c as f64 + 0.5, r as f64 + 0.5);
        ((x / cell_m).floor() as i64, (y / cell_m).floor() as i64)
    };
    let (mut cx0, mut cx1, mut cy0, mut cy1) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for (p, g) in predictions {
        let (h, w) = p.shape();
        for (r, c) in [(0, 0), (0, w - 1), (h - 1, 0), (h - 1, w - 1)] {
            let (kx, ky) = key(g, r, c);
            cx0 = cx0.min(kx);
            cx1 = cx1.max(kx);
            cy0 = cy0.min(ky);
            cy1 = cy1.max(ky);
        }
    }
    let (rows, cols) = ((cy1 - cy0 + 1) as usize, (cx1 - cx0 + 1) as usize);
    let mut forest = vec![0u64; rows * cols];
    let mut covered = vec![0u64; rows * cols];
    for (p, g) in predictions {
        let (h, w) = p.shape();
        for r in 0..h {
            for c in 0..w {
                let (kx, ky) = key(g, r, c);
                let i = (cy1 - ky) as usize * cols + (kx - cx0) as usize;
                covered[i] += 1;
                if *p.data.get(r, c) == ClassId::Forest {
                    forest[i] += 1;
                }
            }
        }
    }
    Ok(DensityMap {
        era,
        cell_size_km,
        origin_x_m: cx0 as f64 * cell_m,
        origin_y_m: (cy1 + 1) as f64 * cell_m,
        rows,
        cols,
        forest,
        covered,
    })
}

impl DensityMap {
    /// `None` for cells without predictions.
    pub fn fraction(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.cols + col;
        (self.covered[i] > 0).then(|| self.forest[i] as f64 / self.covered[i] as f64)
    }

    pub fn grid(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.fraction(r, c)).collect())
            .collect()
    }

    /// One line per grid row, comma-separated, `NA` for missing cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.grid() {
            let cells: Vec<String> = row
                .iter()
                .map(|v| v.map_or("NA".to_string(), |f| format!("{f:.6}")))
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Cells as `cell_px` squares on a light-to-dark green ramp; missing
    /// cells are hatched grey.
    pub fn render(&self, cell_px: usize) -> Raster<Rgb> {
        let cell_px = cell_px.max(1);
        Raster::from_fn(self.rows * cell_px, self.cols * cell_px, |y, x| {
            match self.fraction(y / cell_px, x / cell_px) {
                Some(f) => ramp(f),
                None if (x + y) % 6 < 2 => [150, 150, 150],
                None => [230, 230, 230],
            }
        })
    }
}

fn ramp(f: f64) -> Rgb {
    let f = f.clamp(0.0, 1.0);
    std::array::from_fn(|i| (RAMP_LOW[i] as f64 + f * (RAMP_HIGH[i] as f64 - RAMP_LOW[i] as f64)).round() as u8)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::LabelSource;

    fn pred(h: usize, w: usize, f: impl FnMut(usize, usize) -> ClassId) -> LabelRaster {
        LabelRaster::new("t", LabelSource::HistoricalManual, Raster::from_fn(h, w, f))
    }

    #[test]
    fn uniform_predictions_give_uniform_cells() {
        let g = Georef::north_up(0.0, 2000.0, 100.0);
        let all = forest_density(&[(pred(20, 20, |_, _| ClassId::Forest), g)], 1.0, Collection::Cassini).unwrap();
        assert_eq!((all.rows, all.cols), (2, 2));
        assert!(all.grid().iter().flatten().all(|v| *v == Some(1.0)));
        let none = forest_density(&[(pred(20, 20, |_, _| ClassId::Roads), g)], 1.0, Collection::Cassini).unwrap();
        assert!(none.grid().iter().flatten().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn checkerboard_in_one_cell_is_half() {
        let g = Georef::north_up(0.0, 1000.0, 100.0);
        let p = pred(10, 10, |r, c| if (r + c) % 2 == 0 { ClassId::Forest } else { ClassId::Background });
        let m = forest_density(&[(p, g)], 1.0, Collection::Cassini).unwrap();
        assert_eq!((m.rows, m.cols), (1, 1));
        assert_eq!(m.fraction(0, 0), Some(0.5));
    }

    #[test]
    fn uncovered_cells_are_missing_not_zero() {
        let a = Georef::north_up(0.0, 1000.0, 100.0);
        let b = Georef::north_up(2000.0, 1000.0, 100.0);
        let m = forest_density(
            &[(pred(10, 10, |_, _| ClassId::Forest), a), (pred(10, 10, |_, _| ClassId::Background), b)],
            1.0,
            Collection::Etatmajor,
        )
        .unwrap();
        assert_eq!(m.grid(), vec![vec![Some(1.0), None, Some(0.0)]]);
        assert_eq!(m.to_csv(), "1.000000,NA,0.000000\n");
        let img = m.render(6);
        assert_eq!(*img.get(0, 0), RAMP_HIGH);
        assert_eq!(*img.get(0, 12), RAMP_LOW);
        assert_ne!(img.get(0, 6), img.get(0, 8));
    }

    #[test]
    fn degenerate_cell_sizes_are_config_errors() {
        let p = [(pred(2, 2, |_, _| ClassId::Forest), Georef::north_up(0.0, 0.0, 1.0))];
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(forest_density(&p, bad, Collection::Cassini), Err(Error::Config(_))));
        }
        assert!(forest_density(&[], 1.0, Collection::Cassini).is_err());
    }

    proptest! {
        #[test]
        fn forest_pixels_are_conserved(
            tiles in prop::collection::vec((0.0f64..5000.0, 0.0f64..5000.0, 1usize..12, 1usize..12, any::<u64>()), 1..5),
            cell_km in 0.05f64..3.0,
        ) {
            let preds: Vec<(LabelRaster, Georef)> = tiles
                .iter()
                .map(|&(x, y, h, w, s)| {
                    let p = pred(h, w, |r, c| if (s >> ((r * w + c) % 64)) & 1 == 1 { ClassId::Forest } else { ClassId::Hydrography });
                    (p, Georef::north_up(x, y, 37.0))
                })
                .collect();
            let m = forest_density(&preds, cell_km, Collection::Cassini).unwrap();
            let total: u64 = preds.iter().map(|(p, _)| p.data.data().iter().filter(|&&c| c == ClassId::Forest).count() as u64).sum();
            let pixels: u64 = preds.iter().map(|(p, _)| p.data.data().len() as u64).sum();
            let mut recovered = 0.0;
            for r in 0..m.rows {
                for c in 0..m.cols {
                    if let Some(f) = m.fraction(r, c) {
                        prop_assert!((0.0..=1.0).contains(&f));
                        recovered += f * m.covered[r * m.cols + c] as f64;
                    }
                }
            }
            prop_assert_eq!(m.forest.iter().sum::<u64>(), total);
            prop_assert_eq!(m.covered.iter().sum::<u64>(), pixels);
            prop_assert_eq!(recovered.round() as u64, total);
        }
    }
}
