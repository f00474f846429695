use geo::{Buffer, BoundingRect, MultiPolygon};

use super::{BuildingMode, Geometry, StyleSpec, VectorFeature};
use crate::corpus::ClassId;

/// Filters features down to the level of detail of `spec.collection`.
///
/// * area features (any polygon that is not a building) smaller than
///   `min_polygon_area_m2` are dropped;
/// * roads ranked above `max_road_rank` are dropped;
/// * in agglomerated mode, building polygons are replaced by the union of
///   their `agglomeration_radius_m` buffers (urban blocks), appended after
///   the surviving features in bounding-box order.
///
/// Blocks come out marked `generalized`, which makes the operation
/// idempotent.
pub fn adapt_lod(features: &[VectorFeature], spec: &StyleSpec) -> Vec<VectorFeature> {
    let lod = &spec.lod;
    let agglomerate = lod.building_mode == BuildingMode::Agglomerated;
    let mut kept = Vec::with_capacity(features.len());
    let mut to_merge = Vec::new();

    for f in features {
        if f.generalized {
            kept.push(f.clone());
            continue;
        }
        match (&f.geometry, f.class) {
            (Geometry::Polygon(p), ClassId::Buildings) if agglomerate => to_merge.push(p.clone()),
            (Geometry::Polygon(_), ClassId::Buildings) => kept.push(f.clone()),
            (Geometry::Polygon(_), _) if f.area_m2() < lod.min_polygon_area_m2 => {}
            (_, ClassId::Roads)
                if matches!((f.rank, lod.max_road_rank), (Some(r), Some(max)) if r > max) => {}
            _ => kept.push(f.clone()),
        }
    }

    if !to_merge.is_empty() {
        let merged = MultiPolygon::new(to_merge).buffer(lod.agglomeration_radius_m);
        let mut blocks: Vec<_> = merged.0.into_iter().collect();
        blocks.sort_by(|a, b| {
            let ka = a.bounding_rect().map(|r| (r.min().x, r.min().y));
            let kb = b.bounding_rect().map(|r| (r.min().x, r.min().y));
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        });
        kept.extend(blocks.into_iter().map(|p| VectorFeature {
            geometry: Geometry::Polygon(p),
            class: ClassId::Buildings,
            rank: None,
            generalized: true,
        }));
    }
    kept
}
