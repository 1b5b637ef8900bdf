//! Plain-text region files: one `lon lat` pair in degrees per line, the
//! polygon closed implicitly. Blank lines and `#` comments are ignored; a
//! leading `# name: <text>` comment names the region.
//!
//! Other formats can be converted with any tool that emits this layout, for
//! example `ogr2ogr -f CSV -lco GEOMETRY=AS_XY` followed by `cut`.

use std::path::Path;

use chebmap_core::geo::exact_degrees;
use chebmap_core::{GeoError, GeoPoint, Region};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegionFileError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid region: {0}")]
    Region(#[from] GeoError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

const NAME_TAG: &str = "name:";

pub fn parse_region(text: &str, default_name: &str) -> Result<Region, RegionFileError> {
    let mut name = default_name.to_string();
    let mut pts = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if pts.is_empty() {
                if let Some(n) = comment.trim().strip_prefix(NAME_TAG) {
                    name = n.trim().to_string();
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let syntax = |msg: String| RegionFileError::Syntax { line: k + 1, msg };
        let mut fields = line.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty());
        let mut num = |what: &str| -> Result<f64, RegionFileError> {
            let f = fields.next().ok_or_else(|| syntax(format!("missing {what}")))?;
            let v: f64 = f.parse().map_err(|_| syntax(format!("{what} {f:?} is not a number")))?;
            if !v.is_finite() {
                return Err(syntax(format!("{what} is not finite")));
            }
            Ok(v)
        };
        let lon = num("longitude")?;
        let lat = num("latitude")?;
        if fields.next().is_some() {
            return Err(syntax("expected exactly two numbers".into()));
        }
        if !(-360.0..=360.0).contains(&lon) {
            return Err(syntax(format!("longitude {lon} out of range")));
        }
        if !(lat > -90.0 && lat < 90.0) {
            return Err(syntax(format!("latitude {lat} out of range")));
        }
        pts.push(GeoPoint::from_degrees(lon, lat));
    }
    Ok(Region::new(name, pts)?)
}

pub fn read_region(path: &Path) -> Result<Region, RegionFileError> {
    let text = std::fs::read_to_string(path).map_err(|e| RegionFileError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_region(&text, &stem)
}

pub fn serialize_region(region: &Region) -> String {
    let mut out = String::new();
    if !region.name.is_empty() && !region.name.contains('\n') {
        out.push_str(&format!("# {NAME_TAG} {}\n", region.name));
    }
    for p in region.boundary() {
        out.push_str(&format!("{} {}\n", exact_degrees(p.lon), exact_degrees(p.lat)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_name() {
        let r = parse_region("# name: box\n\n0 0\n10 0 # inline\n10 10\n0 10\n", "x");
        assert!(r.is_err(), "inline comments are not supported");
        let r = parse_region("# name: box\n\n0 0\n10, 0\n10 10\n0 10\n0 0\n", "x").unwrap();
        assert_eq!(r.name, "box");
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn reports_line_numbers() {
        match parse_region("0 0\n1 1\nfoo 2\n", "r") {
            Err(RegionFileError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_region("0 0\n1 95\n2 0\n", "r"), Err(RegionFileError::Syntax { line: 2, .. })));
        assert!(matches!(parse_region("0 0\n1 1\n", "r"), Err(RegionFileError::Region(_))));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "# name: tri\n0.1 0.2\n33.3 -4.7\n12.123456789 44.4\n";
        let a = parse_region(text, "").unwrap();
        let b = parse_region(&serialize_region(&a), "").unwrap();
        assert_eq!(a, b);
    }
}
