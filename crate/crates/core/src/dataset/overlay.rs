use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// A site-feature polyline in site coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub name: Option<String>,
    pub points: Vec<[f64; 2]>,
}

fn line(coords: &Value) -> Result<Vec<[f64; 2]>, String> {
    let arr = coords.as_array().ok_or("coordinates must be an array")?;
    arr.iter()
        .map(|p| {
            let xy = p.as_array().filter(|a| a.len() >= 2).ok_or("position must be [x, y]")?;
            match (xy[0].as_f64(), xy[1].as_f64()) {
                (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok([x, y]),
                _ => Err("position coordinates must be finite numbers".to_string()),
            }
        })
        .collect()
}

/// Reads a GeoJSON `FeatureCollection` (or a bare array of features) of
/// `LineString` / `MultiLineString` / `Polygon` geometries. Other geometry types
/// are ignored.
pub fn parse_overlays(text: &str) -> Result<Vec<Overlay>, String> {
    let doc: Value = serde_json::from_str(text).map_err(|e| format!("overlays.json: {e}"))?;
    let features = match &doc {
        Value::Array(a) => a.clone(),
        Value::Object(o) => o
            .get("features")
            .and_then(Value::as_array)
            .cloned()
            .ok_or("overlays.json: expected a FeatureCollection")?,
        _ => return Err("overlays.json: expected a FeatureCollection".into()),
    };
    let mut out = Vec::new();
    for f in &features {
        let name = f
            .pointer("/properties/name")
            .and_then(Value::as_str)
            .map(str::to_string);
        let Some(geom) = f.get("geometry") else { continue };
        let kind = geom.get("type").and_then(Value::as_str).unwrap_or("");
        let coords = geom.get("coordinates").unwrap_or(&Value::Null);
        let lines = match kind {
            "LineString" => vec![line(coords)?],
            "MultiLineString" | "Polygon" => coords
                .as_array()
                .ok_or("coordinates must be an array")?
                .iter()
                .map(line)
                .collect::<Result<_, _>>()?,
            _ => continue,
        };
        out.extend(lines.into_iter().map(|points| Overlay {
            name: name.clone(),
            points,
        }));
    }
    Ok(out)
}

pub(crate) fn write_overlays(overlays: &[Overlay]) -> String {
    let features: Vec<Value> = overlays
        .iter()
        .map(|o| {
            json!({
                "type": "Feature",
                "properties": { "name": o.name },
                "geometry": { "type": "LineString", "coordinates": o.points },
            })
        })
        .collect();
    let doc = json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_string_pretty(&doc).expect("overlay json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines_and_round_trips() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"name":"road"},
             "geometry":{"type":"LineString","coordinates":[[0,0],[10,5.5]]}},
            {"type":"Feature","properties":{},
             "geometry":{"type":"Polygon","coordinates":[[[1,1],[2,1],[2,2],[1,1]]]}},
            {"type":"Feature","geometry":{"type":"Point","coordinates":[3,3]}}
        ]}"#;
        let o = parse_overlays(text).unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o[0].name.as_deref(), Some("road"));
        assert_eq!(o[0].points, vec![[0.0, 0.0], [10.0, 5.5]]);
        assert_eq!(o[1].points.len(), 4);
        assert_eq!(parse_overlays(&write_overlays(&o)).unwrap(), o);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_overlays("[1,2").is_err());
        assert!(parse_overlays(r#"{"features":[{"geometry":{"type":"LineString","coordinates":[[0]]}}]}"#).is_err());
    }
}
