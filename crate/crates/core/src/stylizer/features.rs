use std::fmt::Write as _;
use std::path::Path;

use geo::{Area, Coord, Euclidean, Length, LineString, Point, Polygon};
use wkt::{ToWkt, TryFromWkt};

use crate::corpus::ClassId;
use crate::error::{Error, Result};

/// Geometry in projected meters.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Polygon(Polygon<f64>),
    Polyline(LineString<f64>),
    Point(Point<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorFeature {
    pub geometry: Geometry,
    pub class: ClassId,
    /// Road importance, 1 = most important.
    pub rank: Option<u32>,
    /// Set on building blocks produced by agglomeration; such features are
    /// already at their final level of detail.
    pub generalized: bool,
}

fn distinct_points(coords: impl Iterator<Item = Coord<f64>>) -> usize {
    let mut seen: Vec<Coord<f64>> = Vec::new();
    for c in coords {
        if !seen.contains(&c) {
            seen.push(c);
        }
    }
    seen.len()
}

impl VectorFeature {
    pub fn new(geometry: Geometry, class: ClassId, rank: Option<u32>) -> Result<Self> {
        let f = Self {
            geometry,
            class,
            rank,
            generalized: false,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.geometry {
            Geometry::Polygon(p) => {
                if distinct_points(p.exterior().coords().copied()) < 3 {
                    return Err(Error::Geometry(
                        "polygon needs at least 3 distinct vertices".into(),
                    ));
                }
            }
            Geometry::Polyline(l) => {
                if distinct_points(l.coords().copied()) < 2 {
                    return Err(Error::Geometry(
                        "polyline needs at least 2 distinct vertices".into(),
                    ));
                }
            }
            Geometry::Point(p) => {
                if !(p.x().is_finite() && p.y().is_finite()) {
                    return Err(Error::Geometry("point has non-finite coordinates".into()));
                }
            }
        }
        Ok(())
    }

    /// Polygon area in m²; zero for other geometries.
    pub fn area_m2(&self) -> f64 {
        match &self.geometry {
            Geometry::Polygon(p) => p.unsigned_area(),
            _ => 0.0,
        }
    }

    /// Polyline length in m; zero for other geometries.
    pub fn length_m(&self) -> f64 {
        match &self.geometry {
            Geometry::Polyline(l) => Euclidean.length(l),
            _ => 0.0,
        }
    }
}

/// Parses the line-delimited feature format:
///
/// ```text
/// # class  rank  geometry
/// forest   -     POLYGON ((0 0, 100 0, 100 100, 0 100, 0 0))
/// roads    2     LINESTRING (0 50, 100 50)
/// ```
///
/// Blank lines and `#` comments are skipped.
pub fn parse_features(text: &str) -> Result<Vec<VectorFeature>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let mut parts = line.splitn(3, char::is_whitespace);
        let class_s = parts.next().unwrap_or_default();
        let rank_s = parts.next().map(str::trim).unwrap_or_default();
        let geom_s = parts.next().map(str::trim).unwrap_or_default();
        let class =
            ClassId::from_name(class_s).ok_or_else(|| err(format!("unknown class `{class_s}`")))?;
        let rank = match rank_s {
            "-" => None,
            s => Some(
                s.parse::<u32>()
                    .map_err(|_| err(format!("bad rank `{s}`")))?,
            ),
        };
        let geom = geo::Geometry::<f64>::try_from_wkt_str(geom_s)
            .map_err(|e| err(format!("bad geometry: {e}")))?;
        let geometry = match geom {
            geo::Geometry::Polygon(p) => Geometry::Polygon(p),
            geo::Geometry::LineString(l) => Geometry::Polyline(l),
            geo::Geometry::Point(p) => Geometry::Point(p),
            other => {
                return Err(err(format!(
                    "unsupported geometry type {:?}",
                    std::mem::discriminant(&other)
                )))
            }
        };
        out.push(VectorFeature::new(geometry, class, rank).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

pub fn read_features(path: &Path) -> Result<Vec<VectorFeature>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(&text)
}

pub fn write_features(features: &[VectorFeature]) -> String {
    let mut out = String::new();
    for f in features {
        let rank = f.rank.map_or("-".to_string(), |r| r.to_string());
        let wkt = match &f.geometry {
            Geometry::Polygon(p) => p.wkt_string(),
            Geometry::Polyline(l) => l.wkt_string(),
            Geometry::Point(p) => p.wkt_string(),
        };
        let _ = writeln!(out, "{} {} {}", f.class, rank, wkt);
    }
    out
}
