//! Planar projection and the vector geometry used by proximity covariates.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Local equirectangular projection around a reference point.
/// Accurate to well under a meter across a city-sized domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lat0: f64,
    pub lon0: f64,
}

impl Default for Projection {
    /// Centered on Nantes.
    fn default() -> Self {
        Self {
            lat0: 47.2184,
            lon0: -1.5536,
        }
    }
}

impl Projection {
    pub fn forward(&self, lat: f64, lon: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let x = (lon - self.lon0) * k * self.lat0.to_radians().cos();
        let y = (lat - self.lat0) * k;
        (x, y)
    }

    pub fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let lat = self.lat0 + y / k;
        let lon = self.lon0 + x / (k * self.lat0.to_radians().cos());
        (lat, lon)
    }
}

pub type Xy = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Point(Xy),
    LineString(Vec<Xy>),
    /// Outer ring first, holes after.
    Polygon(Vec<Vec<Xy>>),
}

fn dist_point_segment(p: Xy, a: Xy, b: Xy) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let u = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + u * dx, a[1] + u * dy);
    ((p[0] - qx).hypot(p[1] - qy), u)
}

fn point_in_ring(p: Xy, ring: &[Xy]) -> bool {
    let mut inside = false;
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (ring[i][0], ring[i][1]);
        let (xj, yj) = (ring[j][0], ring[j][1]);
        if (yi > p[1]) != (yj > p[1]) && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn dist_polyline(p: Xy, line: &[Xy]) -> f64 {
    match line.len() {
        0 => f64::INFINITY,
        1 => (p[0] - line[0][0]).hypot(p[1] - line[0][1]),
        _ => line
            .windows(2)
            .map(|w| dist_point_segment(p, w[0], w[1]).0)
            .fold(f64::INFINITY, f64::min),
    }
}

impl Geometry {
    /// Euclidean distance from `p`; zero inside a polygon.
    pub fn distance_to(&self, p: Xy) -> f64 {
        match self {
            Geometry::Point(q) => (p[0] - q[0]).hypot(p[1] - q[1]),
            Geometry::LineString(l) => dist_polyline(p, l),
            Geometry::Polygon(rings) => {
                if let Some(outer) = rings.first() {
                    let in_hole = rings[1..].iter().any(|h| point_in_ring(p, h));
                    if point_in_ring(p, outer) && !in_hole {
                        return 0.0;
                    }
                }
                rings
                    .iter()
                    .map(|r| {
                        let mut closed = r.clone();
                        if let (Some(f), Some(l)) = (r.first(), r.last()) {
                            if f != l {
                                closed.push(*f);
                            }
                        }
                        dist_polyline(p, &closed)
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn representative_point(&self) -> Xy {
        match self {
            Geometry::Point(q) => *q,
            Geometry::LineString(l) => l.first().copied().unwrap_or([0.0, 0.0]),
            Geometry::Polygon(r) => {
                let ring = r.first().map(|v| v.as_slice()).unwrap_or(&[]);
                if ring.is_empty() {
                    return [0.0, 0.0];
                }
                let n = ring.len() as f64;
                [ring.iter().map(|q| q[0]).sum::<f64>() / n, ring.iter().map(|q| q[1]).sum::<f64>() / n]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub class: String,
    pub geometry: Geometry,
}

/// Snap of a point onto a polyline: distance, and arc length along the line.
pub fn snap_to_polyline(p: Xy, line: &[Xy]) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    let mut acc = 0.0;
    for w in line.windows(2) {
        let (d, u) = dist_point_segment(p, w[0], w[1]);
        let seg = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        if d < best.0 {
            best = (d, acc + u * seg);
        }
        acc += seg;
    }
    best
}

fn parse_position(v: &Value, proj: &Projection) -> Result<Xy> {
    let arr = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| Error::Parse("GeoJSON position must be [lon, lat]".into()))?;
    let lon = arr[0].as_f64().ok_or_else(|| Error::Parse("bad longitude".into()))?;
    let lat = arr[1].as_f64().ok_or_else(|| Error::Parse("bad latitude".into()))?;
    let (x, y) = proj.forward(lat, lon);
    Ok([x, y])
}

fn parse_line(v: &Value, proj: &Projection) -> Result<Vec<Xy>> {
    v.as_array()
        .ok_or_else(|| Error::Parse("GeoJSON line must be an array".into()))?
        .iter()
        .map(|p| parse_position(p, proj))
        .collect()
}

fn parse_geometry(g: &Value, proj: &Projection) -> Result<Vec<Geometry>> {
    let ty = g.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = g.get("coordinates").unwrap_or(&Value::Null);
    let as_arr = |v: &Value| -> Result<Vec<Value>> {
        v.as_array()
            .cloned()
            .ok_or_else(|| Error::Parse(format!("GeoJSON {ty} coordinates must be an array")))
    };
    Ok(match ty {
        "Point" => vec![Geometry::Point(parse_position(coords, proj)?)],
        "MultiPoint" => as_arr(coords)?
            .iter()
            .map(|p| parse_position(p, proj).map(Geometry::Point))
            .collect::<Result<_>>()?,
        "LineString" => vec![Geometry::LineString(parse_line(coords, proj)?)],
        "MultiLineString" => as_arr(coords)?
            .iter()
            .map(|l| parse_line(l, proj).map(Geometry::LineString))
            .collect::<Result<_>>()?,
        "Polygon" => vec![Geometry::Polygon(
            as_arr(coords)?.iter().map(|r| parse_line(r, proj)).collect::<Result<_>>()?,
        )],
        "MultiPolygon" => as_arr(coords)?
            .iter()
            .map(|poly| {
                as_arr(poly)?
                    .iter()
                    .map(|r| parse_line(r, proj))
                    .collect::<Result<Vec<_>>>()
                    .map(Geometry::Polygon)
            })
            .collect::<Result<_>>()?,
        other => return Err(Error::Parse(format!("unsupported GeoJSON geometry `{other}`"))),
    })
}

/// Reads a FeatureCollection; each feature's `class` property names its class.
pub fn parse_geojson(text: &str, proj: &Projection) -> Result<Vec<Feature>> {
    let root: Value = serde_json::from_str(text)?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("expected a GeoJSON FeatureCollection".into()))?;
    let mut out = Vec::new();
    for f in features {
        let class = f
            .get("properties")
            .and_then(|p| p.get("class"))
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        let geom = f.get("geometry").ok_or_else(|| Error::Parse("feature without geometry".into()))?;
        for g in parse_geometry(geom, proj)? {
            out.push(Feature {
                class: class.clone(),
                geometry: g,
            });
        }
    }
    Ok(out)
}

pub fn read_geojson(path: &Path, proj: &Projection) -> Result<Vec<Feature>> {
    parse_geojson(&std::fs::read_to_string(path)?, proj)
}

fn position_json(p: Xy, proj: &Projection) -> Value {
    let (lat, lon) = proj.inverse(p[0], p[1]);
    json!([round9(lon), round9(lat)])
}

fn round9(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

pub fn to_geojson(features: &[Feature], proj: &Projection) -> Value {
    let feats: Vec<Value> = features
        .iter()
        .map(|f| {
            let geometry = match &f.geometry {
                Geometry::Point(p) => json!({"type": "Point", "coordinates": position_json(*p, proj)}),
                Geometry::LineString(l) => json!({
                    "type": "LineString",
                    "coordinates": l.iter().map(|p| position_json(*p, proj)).collect::<Vec<_>>()
                }),
                Geometry::Polygon(rings) => json!({
                    "type": "Polygon",
                    "coordinates": rings
                        .iter()
                        .map(|r| r.iter().map(|p| position_json(*p, proj)).collect::<Vec<_>>())
                        .collect::<Vec<_>>()
                }),
            };
            json!({"type": "Feature", "properties": {"class": f.class}, "geometry": geometry})
        })
        .collect();
    json!({"type": "FeatureCollection", "features": feats})
}

pub fn write_geojson(path: &Path, features: &[Feature], proj: &Projection) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&to_geojson(features, proj))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_round_trip() {
        let p = Projection::default();
        let (x, y) = p.forward(47.25, -1.50);
        let (lat, lon) = p.inverse(x, y);
        assert!((lat - 47.25).abs() < 1e-12 && (lon + 1.50).abs() < 1e-12);
        // one degree of latitude is ~111 km
        let (_, y1) = p.forward(p.lat0 + 1.0, p.lon0);
        assert!((y1 - 111_195.0).abs() < 10.0);
    }

    #[test]
    fn distances() {
        let seg = Geometry::LineString(vec![[0.0, 0.0], [10.0, 0.0]]);
        assert_eq!(seg.distance_to([5.0, 3.0]), 3.0);
        assert_eq!(seg.distance_to([13.0, 4.0]), 5.0);
        let sq = Geometry::Polygon(vec![vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]]);
        assert_eq!(sq.distance_to([1.0, 1.0]), 0.0);
        assert_eq!(sq.distance_to([6.0, 2.0]), 2.0);
    }

    #[test]
    fn geojson_round_trip() {
        let proj = Projection::default();
        let feats = vec![
            Feature {
                class: "primary".into(),
                geometry: Geometry::LineString(vec![[0.0, 0.0], [100.0, 50.0]]),
            },
            Feature {
                class: "building".into(),
                geometry: Geometry::Point([-20.0, 30.0]),
            },
        ];
        let text = serde_json::to_string(&to_geojson(&feats, &proj)).unwrap();
        let back = parse_geojson(&text, &proj).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].class, "primary");
        if let Geometry::LineString(l) = &back[0].geometry {
            assert!((l[1][0] - 100.0).abs() < 1e-3 && (l[1][1] - 50.0).abs() < 1e-3);
        } else {
            panic!("wrong geometry");
        }
    }

    #[test]
    fn snapping_reports_arc_length() {
        let line = vec![[0.0, 0.0], [100.0, 0.0], [100.0, 100.0]];
        let (d, s) = snap_to_polyline([102.0, 40.0], &line);
        assert!((d - 2.0).abs() < 1e-12 && (s - 140.0).abs() < 1e-12);
    }
}
