use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::cloud::{Point, PointCloud};
use super::{GeometryError, Result};

/// Parses whitespace-separated XYZ text, one point per line. Blank lines are ignored.
pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(GeometryError::MalformedXyz {
                line: i + 1,
                reason: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let mut p: Point = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            p[k] = f.parse().map_err(|_| GeometryError::MalformedXyz {
                line: i + 1,
                reason: format!("not a number: {f:?}"),
            })?;
            if !p[k].is_finite() {
                return Err(GeometryError::MalformedXyz {
                    line: i + 1,
                    reason: "non-finite coordinate".into(),
                });
            }
        }
        points.push(p);
    }
    PointCloud::new(points)
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_xyz(&fs::read_to_string(path)?)
}

pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in cloud.points() {
        // Display for f64 is shortest round-trip.
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_bad_lines() {
        let cloud = parse_xyz("0 0 0\n\n1.5 -2 3e-2\n").unwrap();
        assert_eq!(cloud.points(), &[[0.0, 0.0, 0.0], [1.5, -2.0, 0.03]]);
        assert_eq!(
            parse_xyz("0 0 0\n1 2\n"),
            Err(GeometryError::MalformedXyz { line: 2, reason: "expected 3 fields, found 2".into() })
        );
        assert!(matches!(parse_xyz("a b c"), Err(GeometryError::MalformedXyz { line: 1, .. })));
        assert_eq!(parse_xyz(""), Err(GeometryError::EmptyInput));
    }

    #[test]
    fn file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        let cloud = PointCloud::new(vec![[0.1, 1.0 / 3.0, -7e-12], [1e10, 2.5, 0.0]]).unwrap();
        write_xyz(&path, &cloud).unwrap();
        assert_eq!(read_xyz(&path).unwrap(), cloud);
    }
}
