//! GeoJSON FeatureCollection output for field polygons.
//!
//! Coordinates are written with shortest round-trip formatting, so reading a
//! file back yields bit-identical vertices.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::vectorize::{FieldPolygon, FieldProperties, Point, Ring};

fn ring_json(ring: &Ring) -> Value {
    Value::Array(ring.iter().map(|p| json!([p.x, p.y])).collect())
}

fn feature(p: &FieldPolygon) -> Value {
    let mut props = Map::new();
    props.insert("id".into(), json!(p.id));
    props.insert("part".into(), json!(p.properties.part));
    props.insert("area_m2".into(), json!(p.area));
    props.insert("wheat_fraction".into(), json!(p.properties.wheat_fraction));
    props.insert("is_wheat".into(), json!(p.properties.is_wheat));
    if let Some(year) = p.properties.year {
        props.insert("year".into(), json!(year));
    }
    if p.properties.rdp_degenerate {
        props.insert("rdp_degenerate".into(), json!(true));
    }
    let rings: Vec<Value> = p.rings().map(ring_json).collect();
    json!({
        "type": "Feature",
        "geometry": { "type": "Polygon", "coordinates": rings },
        "properties": props,
    })
}

/// FeatureCollection value; `crs` goes into the legacy named-CRS member when non-empty.
pub fn to_value(polygons: &[FieldPolygon], crs: &str) -> Value {
    let mut fc = Map::new();
    fc.insert("type".into(), json!("FeatureCollection"));
    if !crs.is_empty() {
        fc.insert(
            "crs".into(),
            json!({ "type": "name", "properties": { "name": crs } }),
        );
    }
    fc.insert(
        "features".into(),
        Value::Array(polygons.iter().map(feature).collect()),
    );
    Value::Object(fc)
}

pub fn write<W: Write>(polygons: &[FieldPolygon], crs: &str, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, &to_value(polygons, crs))?;
    writeln!(out)
}

fn bad(reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: "<geojson>".into(),
        reason: reason.into(),
    }
}

fn parse_ring(v: &Value) -> Result<Ring> {
    let coords = v.as_array().ok_or_else(|| bad("ring is not an array"))?;
    coords
        .iter()
        .map(|c| match c.as_array().map(Vec::as_slice) {
            Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok(Point::new(x, y)),
                _ => Err(bad("non-numeric coordinate")),
            },
            _ => Err(bad("coordinate is not a pair")),
        })
        .collect()
}

fn parse_feature(f: &Value) -> Result<FieldPolygon> {
    let geom = &f["geometry"];
    if geom["type"] != "Polygon" {
        return Err(bad("only Polygon geometries are supported"));
    }
    let rings = geom["coordinates"]
        .as_array()
        .ok_or_else(|| bad("missing coordinates"))?;
    let mut rings = rings.iter().map(parse_ring);
    let exterior = rings.next().ok_or_else(|| bad("polygon without rings"))??;
    let interiors = rings.collect::<Result<Vec<_>>>()?;
    let props = &f["properties"];
    let id = props["id"]
        .as_u64()
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| bad("feature id missing or not a u32"))?;
    Ok(FieldPolygon {
        id,
        exterior,
        interiors,
        area: props["area_m2"].as_f64().unwrap_or(0.0),
        properties: FieldProperties {
            part: props["part"].as_u64().unwrap_or(0) as u32,
            wheat_fraction: props["wheat_fraction"].as_f64(),
            is_wheat: props["is_wheat"].as_bool(),
            year: props["year"].as_i64().map(|y| y as i32),
            rdp_degenerate: props["rdp_degenerate"].as_bool().unwrap_or(false),
        },
    })
}

/// Parses a FeatureCollection written by [`write`].
pub fn read<R: Read>(input: R) -> Result<Vec<FieldPolygon>> {
    let v: Value = serde_json::from_reader(input).map_err(|e| bad(e.to_string()))?;
    if v["type"] != "FeatureCollection" {
        return Err(bad("not a FeatureCollection"));
    }
    v["features"]
        .as_array()
        .ok_or_else(|| bad("missing features"))?
        .iter()
        .map(parse_feature)
        .collect()
}

/// Number of distinct field ids flagged as wheat.
pub fn wheat_field_count(polygons: &[FieldPolygon]) -> usize {
    polygons
        .iter()
        .filter(|p| p.properties.is_wheat == Some(true))
        .map(|p| p.id)
        .collect::<BTreeSet<_>>()
        .len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Grid, LabelRaster};
    use crate::vectorize::polygonize;

    #[test]
    fn feature_layout() {
        let grid = Grid::simple(2, 1, 10.0);
        let mut polys = polygonize(&LabelRaster::new(grid, vec![1, 0]).unwrap()).unwrap();
        polys[0].properties.year = Some(2020);
        let v = to_value(&polys, "EPSG:32636");
        assert_eq!(v["crs"]["properties"]["name"], "EPSG:32636");
        let f = &v["features"][0];
        assert_eq!(f["geometry"]["type"], "Polygon");
        assert_eq!(f["properties"]["id"], 1);
        assert_eq!(f["properties"]["area_m2"], 100.0);
        assert_eq!(f["properties"]["year"], 2020);
        assert!(f["properties"]["is_wheat"].is_null());
        assert!(f["properties"].get("rdp_degenerate").is_none());
        assert_eq!(f["geometry"]["coordinates"][0].as_array().unwrap().len(), 5);
    }

    #[test]
    fn round_trip_keeps_full_precision() {
        let ring = vec![
            Point::new(712345.123456789, 3712345.987654321),
            Point::new(712355.1, 3712345.987654321),
            Point::new(712355.1, 3712355.000000001),
            Point::new(712345.123456789, 3712345.987654321),
        ];
        let poly = FieldPolygon {
            id: 3,
            exterior: ring,
            interiors: vec![],
            area: 1.0 / 3.0,
            properties: FieldProperties {
                part: 1,
                wheat_fraction: Some(0.1 + 0.2),
                is_wheat: Some(true),
                year: None,
                rdp_degenerate: true,
            },
        };
        let mut buf = Vec::new();
        write(std::slice::from_ref(&poly), "", &mut buf).unwrap();
        let back = read(buf.as_slice()).unwrap();
        assert_eq!(back, vec![poly]);
        assert_eq!(wheat_field_count(&back), 1);
    }

    #[test]
    fn rejects_other_documents() {
        assert!(read(&b"{\"type\":\"Feature\"}"[..]).is_err());
        assert!(read(&b"not json"[..]).is_err());
    }
}
