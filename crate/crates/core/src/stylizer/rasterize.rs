use geo::Coord;

use super::{Geometry, StyleSpec, VectorFeature};
use crate::corpus::{ClassId, Georef, LabelRaster, LabelSource, Tile};
use crate::raster::Raster;

/// Hard-classified scan conversion onto a tile's pixel grid.
///
/// A polygon claims every pixel whose centre lies inside it (even-odd rule,
/// holes honoured); polylines and points claim pixel centres within half the
/// class stroke width. Overlaps resolve as
/// buildings > roads > hydrography > forest > background. Anything outside
/// the grid is clipped.
pub fn rasterize(features: &[VectorFeature], tile: &Tile, spec: &StyleSpec) -> LabelRaster {
    let mut out = rasterize_grid(features, &tile.georef, tile.shape(), spec);
    out.tile_id = tile.tile_id.clone();
    out
}

pub fn rasterize_grid(
    features: &[VectorFeature],
    georef: &Georef,
    shape: (usize, usize),
    spec: &StyleSpec,
) -> LabelRaster {
    let (h, w) = shape;
    let mut grid = Raster::filled(h, w, ClassId::Background);
    // ClassId order is the precedence order, lowest first
    for class in ClassId::ALL {
        let stroke = spec.stroke_width(class);
        for f in features.iter().filter(|f| f.class == class) {
            let to_px = |c: &Coord<f64>| {
                let (x, y) = georef.world_to_pixel(c.x, c.y);
                Coord { x, y }
            };
            match &f.geometry {
                Geometry::Polygon(p) => {
                    let rings: Vec<Vec<Coord<f64>>> = std::iter::once(p.exterior())
                        .chain(p.interiors())
                        .map(|r| r.coords().map(to_px).collect())
                        .collect();
                    fill_polygon(&mut grid, &rings, class);
                }
                Geometry::Polyline(l) => {
                    let pts: Vec<Coord<f64>> = l.coords().map(to_px).collect();
                    stroke_polyline(&mut grid, &pts, stroke / 2.0, class);
                }
                Geometry::Point(p) => {
                    let c = to_px(&p.0);
                    stroke_polyline(&mut grid, &[c, c], stroke / 2.0, class);
                    if c.x >= 0.0 && c.y >= 0.0 && (c.x as usize) < w && (c.y as usize) < h {
                        grid.set(c.y as usize, c.x as usize, class);
                    }
                }
            }
        }
    }
    LabelRaster::new("", LabelSource::ModernVector, grid)
}

fn fill_polygon(grid: &mut Raster<ClassId>, rings: &[Vec<Coord<f64>>], class: ClassId) {
    let (h, w) = grid.shape();
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in rings.iter().flatten() {
        ymin = ymin.min(c.y);
        ymax = ymax.max(c.y);
    }
    if !ymin.is_finite() {
        return;
    }
    let r0 = ((ymin - 0.5).ceil().max(0.0)) as usize;
    let r1 = ((ymax - 0.5).floor().min(h as f64 - 1.0)).max(-1.0);
    if r1 < 0.0 {
        return;
    }
    let mut xs = Vec::new();
    for r in r0..=r1 as usize {
        let yc = r as f64 + 0.5;
        xs.clear();
        for ring in rings {
            for e in ring.windows(2) {
                let (a, b) = (e[0], e[1]);
                if (a.y <= yc && yc < b.y) || (b.y <= yc && yc < a.y) {
                    xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // centres c + 0.5 in [x0, x1)
            let c0 = (span[0] - 0.5).ceil().max(0.0);
            let c1 = ((span[1] - 0.5).ceil()).min(w as f64);
            if c1 <= c0 {
                continue;
            }
            for c in c0 as usize..c1 as usize {
                grid.set(r, c, class);
            }
        }
    }
}

fn stroke_polyline(grid: &mut Raster<ClassId>, pts: &[Coord<f64>], half_width: f64, class: ClassId) {
    let (h, w) = grid.shape();
    let segs: Vec<(Coord<f64>, Coord<f64>)> = if pts.len() == 1 {
        vec![(pts[0], pts[0])]
    } else {
        pts.windows(2).map(|s| (s[0], s[1])).collect()
    };
    let hw2 = half_width * half_width;
    for (a, b) in segs {
        let xmin = (a.x.min(b.x) - half_width - 0.5).floor().max(0.0);
        let xmax = (a.x.max(b.x) + half_width).ceil().min(w as f64 - 1.0);
        let ymin = (a.y.min(b.y) - half_width - 0.5).floor().max(0.0);
        let ymax = (a.y.max(b.y) + half_width).ceil().min(h as f64 - 1.0);
        if xmax < xmin || ymax < ymin {
            continue;
        }
        for r in ymin as usize..=ymax as usize {
            for c in xmin as usize..=xmax as usize {
                let p = Coord {
                    x: c as f64 + 0.5,
                    y: r as f64 + 0.5,
                };
                if dist2_to_segment(p, a, b) <= hw2 {
                    grid.set(r, c, class);
                }
            }
        }
    }
}

fn dist2_to_segment(p: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> f64 {
    let d = b - a;
    let len2 = d.x * d.x + d.y * d.y;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p - a).x * d.x + (p - a).y * d.y) / len2).clamp(0.0, 1.0)
    };
    let q = a + d * t;
    (p.x - q.x).powi(2) + (p.y - q.y).powi(2)
}

#[cfg(test)]
mod tests {
    use geo::{coord, Area, LineString, Rect};

    use super::*;
    use crate::corpus::Collection;

    fn polyline_from_pixels(georef: &Georef, pts: &[(f64, f64)]) -> LineString<f64> {
        LineString::from(pts.iter().map(|&(c, r)| georef.pixel_to_world(c, r)).collect::<Vec<_>>())
    }

    fn unit_grid() -> Georef {
        // pixel (col, row) ↔ world (col, -row): 1 m pixels
        Georef::north_up(0.0, 0.0, 1.0)
    }

    fn rect_px(c0: f64, r0: f64, c1: f64, r1: f64, class: ClassId) -> VectorFeature {
        let g = unit_grid();
        let (x0, y0) = g.pixel_to_world(c0, r0);
        let (x1, y1) = g.pixel_to_world(c1, r1);
        let r = Rect::new(coord! { x: x0, y: y0 }, coord! { x: x1, y: y1 });
        VectorFeature::new(Geometry::Polygon(r.to_polygon()), class, None).unwrap()
    }

    fn spec() -> StyleSpec {
        StyleSpec::default_for(Collection::Modern)
    }

    #[test]
    fn empty_input_is_all_background() {
        let l = rasterize_grid(&[], &unit_grid(), (6, 7), &spec());
        assert!(l.data.data().iter().all(|&c| c == ClassId::Background));
    }

    #[test]
    fn axis_aligned_rectangle_claims_exactly_its_pixels() {
        let f = rect_px(2.0, 2.0, 6.0, 6.0, ClassId::Forest);
        let l = rasterize_grid(&[f], &unit_grid(), (10, 10), &spec());
        for r in 0..10 {
            for c in 0..10 {
                let inside = (2..=5).contains(&r) && (2..=5).contains(&c);
                assert_eq!(*l.data.get(r, c) == ClassId::Forest, inside, "({r},{c})");
            }
        }
    }

    #[test]
    fn roads_win_over_forest() {
        let g = unit_grid();
        let forest = rect_px(0.0, 0.0, 10.0, 10.0, ClassId::Forest);
        let road = VectorFeature::new(
            Geometry::Polyline(polyline_from_pixels(&g, &[(0.0, 5.0), (10.0, 5.0)])),
            ClassId::Roads,
            Some(1),
        )
        .unwrap();
        // order in the input must not matter
        for fs in [vec![road.clone(), forest.clone()], vec![forest, road]] {
            let l = rasterize_grid(&fs, &g, (10, 10), &spec());
            for c in 0..10 {
                assert_eq!(*l.data.get(4, c), ClassId::Roads);
                assert_eq!(*l.data.get(5, c), ClassId::Roads);
                assert_eq!(*l.data.get(2, c), ClassId::Forest);
            }
        }
    }

    #[test]
    fn features_off_the_grid_are_clipped() {
        let f = rect_px(-50.0, -50.0, 3.0, 3.0, ClassId::Hydrography);
        let far = rect_px(100.0, 100.0, 120.0, 120.0, ClassId::Forest);
        let l = rasterize_grid(&[f, far], &unit_grid(), (5, 5), &spec());
        assert_eq!(l.class_counts()[ClassId::Hydrography.index()], 9);
        assert_eq!(l.class_counts()[ClassId::Forest.index()], 0);
    }

    #[test]
    fn large_polygon_area_is_preserved() {
        let g = Georef::north_up(0.0, 0.0, 6.77);
        // irregular hexagon spanning ~40×40 pixels
        let pts = [(3.3, 2.1), (41.7, 5.2), (46.0, 24.9), (38.2, 44.4), (9.1, 40.6), (1.4, 20.3)];
        let ring: Vec<(f64, f64)> = pts.iter().map(|&(c, r)| g.pixel_to_world(c, r)).collect();
        let poly = geo::Polygon::new(LineString::from(ring), vec![]);
        let area = poly.unsigned_area();
        let f = VectorFeature::new(Geometry::Polygon(poly), ClassId::Forest, None).unwrap();
        let l = rasterize_grid(&[f], &g, (50, 50), &spec());
        let px = l.class_counts()[ClassId::Forest.index()] as f64 * g.pixel_area_m2();
        assert!((px - area).abs() / area <= 0.05, "{px} vs {area}");
    }
}
