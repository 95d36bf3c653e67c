//! Point cloud, mesh and diagram files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! writer here is read back bit-exactly by its reader.

use crate::error::{Error, Result};
use crate::rips::{Diagram, DiagramPoint, PointCloud};
use std::fs;
use std::path::Path;

pub const DIAGRAM_HEADER: &str = "dim,birth,death,b1,b2,d1,d2";

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest representation that parses back to the same `f64` (`inf` for infinity).
pub fn format_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

fn parse_error(source: &str, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        column,
        message: message.into(),
    }
}

/// Parses CSV points: one row per point, a header row is skipped when present.
pub fn parse_points(text: &str, source: &str) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut coords = Vec::new();
    let mut dim: Option<usize> = None;
    let mut first = true;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if std::mem::take(&mut first) && parsed.iter().all(|r| r.is_err()) {
            continue;
        }
        let expected = *dim.get_or_insert(record.len());
        if record.len() != expected {
            return Err(parse_error(
                source,
                line,
                record.len().min(expected) + 1,
                format!("expected {expected} columns, found {}", record.len()),
            ));
        }
        for (col, (field, value)) in record.iter().zip(parsed).enumerate() {
            match value {
                Ok(v) if v.is_finite() => coords.push(v),
                _ => {
                    return Err(parse_error(
                        source,
                        line,
                        col + 1,
                        format!("`{field}` is not a finite number"),
                    ))
                }
            }
        }
    }
    let dim = dim.ok_or_else(|| parse_error(source, 1, 1, "no points"))?;
    PointCloud::new(coords, dim)
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_points(&read_text(path)?, &path.display().to_string())
}

pub fn points_to_csv(x: &PointCloud) -> String {
    let mut out = String::with_capacity(x.coords().len() * 20);
    for p in x.rows() {
        let row: Vec<String> = p.iter().map(|&v| format_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_points(path: impl AsRef<Path>, x: &PointCloud) -> Result<()> {
    write_text(path.as_ref(), &points_to_csv(x))
}

/// Vertices of an OFF mesh, in file order; faces are validated and dropped.
pub fn parse_off(text: &str, source: &str) -> Result<PointCloud> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_error(source, 1, 1, "empty file, expected `OFF` header"))?;
    let mut tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&"OFF") {
        return Err(parse_error(source, line_no, 1, "missing `OFF` header"));
    }
    tokens.remove(0);
    let (count_line, counts) = if tokens.is_empty() {
        let (l, c) = lines
            .next()
            .ok_or_else(|| parse_error(source, line_no + 1, 1, "missing vertex/face counts"))?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (line_no, tokens)
    };
    if counts.len() < 2 {
        return Err(parse_error(source, count_line, 1, "expected `vertices faces [edges]` counts"));
    }
    let parse_count = |i: usize| -> Result<usize> {
        counts[i]
            .parse()
            .map_err(|_| parse_error(source, count_line, i + 1, format!("bad count `{}`", counts[i])))
    };
    let (nv, nf) = (parse_count(0)?, parse_count(1)?);

    let mut coords = Vec::with_capacity(nv * 3);
    for k in 0..nv {
        let (l, row) = lines.next().ok_or_else(|| {
            parse_error(source, 0, 1, format!("header declares {nv} vertices, body has {k}"))
        })?;
        let fields: Vec<&str> = row.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_error(
                source,
                l,
                1,
                format!("vertex {k}: expected 3 coordinates, found {} fields", fields.len()),
            ));
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_error(source, l, c + 1, format!("`{f}` is not a finite number")))?;
            coords.push(v);
        }
    }
    for k in 0..nf {
        let (l, row) = lines.next().ok_or_else(|| {
            parse_error(source, 0, 1, format!("header declares {nf} faces, body has {k}"))
        })?;
        let fields: Vec<&str> = row.split_whitespace().collect();
        let arity: Option<usize> = fields.first().and_then(|f| f.parse().ok());
        match arity {
            Some(a) if fields.len() > a && fields[1..=a].iter().all(|f| f.parse::<usize>().is_ok_and(|i| i < nv)) => {}
            _ => return Err(parse_error(source, l, 1, format!("malformed face {k}"))),
        }
    }
    if let Some((l, _)) = lines.next() {
        return Err(parse_error(source, l, 1, "unexpected content after the declared faces"));
    }
    if nv == 0 {
        return Err(parse_error(source, count_line, 1, "mesh has no vertices"));
    }
    PointCloud::new(coords, 3)
}

pub fn read_off(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_off(&read_text(path)?, &path.display().to_string())
}

/// Reads `.off` meshes by extension, CSV otherwise.
pub fn read_point_source(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("off") => read_off(path),
        _ => read_points(path),
    }
}

pub fn diagram_to_csv(d: &Diagram) -> String {
    let edge = |e: Option<(usize, usize)>| match e {
        Some((a, b)) => (a.to_string(), b.to_string()),
        None => ("-1".into(), "-1".into()),
    };
    let mut out = String::from(DIAGRAM_HEADER);
    out.push('\n');
    for p in d.iter() {
        let (b1, b2) = edge(p.birth_edge);
        let (d1, d2) = edge(p.death_edge);
        out.push_str(&format!(
            "{},{},{},{b1},{b2},{d1},{d2}\n",
            p.dim,
            format_f64(p.birth),
            format_f64(p.death)
        ));
    }
    out
}

pub fn write_diagram(path: impl AsRef<Path>, d: &Diagram) -> Result<()> {
    write_text(path.as_ref(), &diagram_to_csv(d))
}

pub fn parse_diagram(text: &str, source: &str) -> Result<Diagram> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != DIAGRAM_HEADER {
        return Err(parse_error(source, 1, 1, format!("expected header `{DIAGRAM_HEADER}`")));
    }
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 7 {
            return Err(parse_error(source, line, 1, format!("expected 7 fields, found {}", record.len())));
        }
        let float = |c: usize| -> Result<f64> {
            record[c]
                .parse::<f64>()
                .ok()
                .filter(|v| !v.is_nan())
                .ok_or_else(|| parse_error(source, line, c + 1, format!("`{}` is not a number", &record[c])))
        };
        let int = |c: usize| -> Result<i64> {
            record[c]
                .parse::<i64>()
                .map_err(|_| parse_error(source, line, c + 1, format!("`{}` is not an integer", &record[c])))
        };
        let edge = |c: usize| -> Result<Option<(usize, usize)>> {
            let (a, b) = (int(c)?, int(c + 1)?);
            match (a, b) {
                (-1, -1) => Ok(None),
                (a, b) if a >= 0 && b >= 0 => Ok(Some((a as usize, b as usize))),
                _ => Err(parse_error(source, line, c + 1, "edge indices must both be -1 or both >= 0")),
            }
        };
        let dim = int(0)?;
        if dim < 0 {
            return Err(parse_error(source, line, 1, "negative dimension"));
        }
        points.push(DiagramPoint {
            dim: dim as usize,
            birth: float(1)?,
            death: float(2)?,
            birth_edge: edge(3)?,
            death_edge: edge(5)?,
        });
    }
    Diagram::new(points)
}

pub fn read_diagram(path: impl AsRef<Path>) -> Result<Diagram> {
    let path = path.as_ref();
    parse_diagram(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_points() {
        let x = parse_points("0,0\n3,0\n", "t").unwrap();
        assert_eq!(x.len(), 2);
        assert_eq!(x.coords(), &[0.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn skips_header_row() {
        let x = parse_points("x,y\n1,2\n3,4\n", "t").unwrap();
        assert_eq!(x.coords(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn reports_parse_location() {
        match parse_points("1,2\n3,oops\n", "pts.csv").unwrap_err() {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 2)),
            e => panic!("unexpected {e}"),
        }
        match parse_points("1,2\n3\n", "pts.csv").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        assert!(parse_points("", "empty").is_err());
    }

    #[test]
    fn off_minimal() {
        let text = "OFF\n# comment\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let x = parse_off(text, "m.off").unwrap();
        assert_eq!((x.len(), x.dim()), (3, 3));
        assert_eq!(x.point(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn off_count_mismatch() {
        assert!(parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", "m").is_err());
        assert!(parse_off("OFF\n2 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", "m").is_err());
        assert!(parse_off("PLY\n3 1 0\n", "m").is_err());
        assert!(parse_off("OFF 3 0 0\n0 0 0\n1 0 0\n0 1 0\n", "m").is_ok());
    }

    #[test]
    fn diagram_csv_roundtrip() {
        let d = Diagram::new(vec![
            DiagramPoint {
                dim: 0,
                birth: 0.0,
                death: 3.0,
                birth_edge: None,
                death_edge: Some((0, 1)),
            },
            DiagramPoint::new(0, 0.0, f64::INFINITY),
            DiagramPoint {
                dim: 1,
                birth: 1.0,
                death: std::f64::consts::SQRT_2,
                birth_edge: Some((2, 3)),
                death_edge: Some((0, 3)),
            },
        ])
        .unwrap();
        let text = diagram_to_csv(&d);
        assert!(text.starts_with("dim,birth,death,b1,b2,d1,d2\n0,0.0,3.0,-1,-1,0,1\n0,0.0,inf,-1,-1,-1,-1\n"));
        assert_eq!(parse_diagram(&text, "d").unwrap(), d);
    }
}
