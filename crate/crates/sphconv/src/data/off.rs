//! OFF mesh reader/writer.
//!
//! Accepts the common header variants found in the wild: `OFF` on its own
//! line, `OFF 8 6 0` with the counts on the same line, and the fused
//! `OFF8 6 0` with no separator. Blank lines and `#` comments are skipped.
//! Polygons with more than three vertices are fan-triangulated; extra tokens
//! after a vertex's coordinates or a face's indices (color extensions) are
//! ignored.

use crate::data::{DataError, TriangleMesh};
use crate::geometry::Point3;

pub fn parse_off(bytes: &[u8]) -> Result<TriangleMesh, DataError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| DataError::Off { line: 0, message: "not valid UTF-8".into() })?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| DataError::Off { line: 1, message: "empty file".into() })?;
    if !header.starts_with("OFF") {
        return Err(DataError::Off {
            line: header_line,
            message: format!("expected OFF header, got {header:?}"),
        });
    }
    let rest = header["OFF".len()..].trim();
    let counts_source = if rest.is_empty() {
        lines.next().ok_or_else(|| DataError::Off {
            line: header_line,
            message: "missing element counts".into(),
        })?
    } else {
        (header_line, rest)
    };
    let (counts_line, counts_text) = counts_source;
    let counts: Vec<&str> = counts_text.split_whitespace().collect();
    if counts.len() < 2 {
        return Err(DataError::Off {
            line: counts_line,
            message: format!("expected 'vertices faces [edges]', got {counts_text:?}"),
        });
    }
    let parse_count = |tok: &str| {
        tok.parse::<usize>().map_err(|_| DataError::Off {
            line: counts_line,
            message: format!("bad count {tok:?}"),
        })
    };
    let num_vertices = parse_count(counts[0])?;
    let num_faces = parse_count(counts[1])?;

    let mut vertices = Vec::with_capacity(num_vertices);
    for k in 0..num_vertices {
        let (line, text) = lines.next().ok_or(DataError::Off {
            line: counts_line,
            message: format!("file truncated: {k} of {num_vertices} vertices"),
        })?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(DataError::Off {
                line,
                message: format!("vertex needs 3 coordinates, got {}", toks.len()),
            });
        }
        let coord = |tok: &str| {
            tok.parse::<f64>().map_err(|_| DataError::Off {
                line,
                message: format!("bad coordinate {tok:?}"),
            })
        };
        let p = Point3::new(coord(toks[0])?, coord(toks[1])?, coord(toks[2])?);
        if !p.is_finite() {
            return Err(DataError::Off { line, message: "non-finite vertex".into() });
        }
        vertices.push(p);
    }

    let mut faces = Vec::with_capacity(num_faces);
    for k in 0..num_faces {
        let (line, text) = lines.next().ok_or(DataError::Off {
            line: counts_line,
            message: format!("file truncated: {k} of {num_faces} faces"),
        })?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        let arity = toks[0].parse::<usize>().map_err(|_| DataError::Off {
            line,
            message: format!("bad face vertex count {:?}", toks[0]),
        })?;
        if arity < 3 {
            return Err(DataError::Off {
                line,
                message: format!("face needs at least 3 vertices, got {arity}"),
            });
        }
        if toks.len() < 1 + arity {
            return Err(DataError::Off {
                line,
                message: format!("face declares {arity} vertices but lists {}", toks.len() - 1),
            });
        }
        let mut idx = Vec::with_capacity(arity);
        for tok in &toks[1..=arity] {
            let i = tok.parse::<usize>().map_err(|_| DataError::Off {
                line,
                message: format!("bad vertex index {tok:?}"),
            })?;
            if i >= vertices.len() {
                return Err(DataError::Off {
                    line,
                    message: format!("vertex index {i} out of range (have {})", vertices.len()),
                });
            }
            idx.push(i as u32);
        }
        // Fan triangulation: (v0, v1, v2), (v0, v2, v3), ...
        for w in idx[1..].windows(2) {
            faces.push([idx[0], w[0], w[1]]);
        }
    }

    Ok(TriangleMesh { vertices, faces })
}

/// Minimal writer: triangles only, counts header on its own line.
pub fn serialize_off(mesh: &TriangleMesh) -> String {
    let mut out = String::from("OFF\n");
    out.push_str(&format!("{} {} 0\n", mesh.vertices.len(), mesh.faces.len()));
    for v in &mesh.vertices {
        out.push_str(&format!("{} {} {}\n", v.x, v.y, v.z));
    }
    for f in &mesh.faces {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    out
}
