//! Plain-text mesh serialization.
//!
//! Format (`tmesh`, version 1):
//! ```text
//! tmesh 1
//! v <x> <y>        one line per vertex, 17 significant digits
//! t <i> <j> <k>    one line per triangle, 0-based vertex ids
//! ```
//! Coordinates are written with enough digits to round-trip f64 exactly, so
//! write → parse → write reproduces the file byte for byte. The format
//! carries geometry only: boundary classes, generation and curved-geometry
//! hooks are not serialized.

use super::{Mesh, MeshError, Vertex, VertexId};
use crate::geom::Vec2;
use std::fmt::Write as _;
use std::path::Path;

pub fn write_text(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str("tmesh 1\n");
    for v in &mesh.vertices {
        writeln!(out, "v {:.16e} {:.16e}", v.pos.x, v.pos.y).unwrap();
    }
    for e in &mesh.elements {
        writeln!(out, "t {} {} {}", e.vertices[0], e.vertices[1], e.vertices[2]).unwrap();
    }
    out
}

pub fn parse_text(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| MeshError::Format("empty file".into()))?;
    if header.1.trim() != "tmesh 1" {
        return Err(MeshError::Format(format!(
            "expected header 'tmesh 1', found {:?}",
            header.1
        )));
    }

    let mut vertices: Vec<Vertex> = Vec::new();
    let mut triangles: Vec<[VertexId; 3]> = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let kind = fields.next().unwrap();
        let rest: Vec<&str> = fields.collect();
        match kind {
            "v" => {
                let [x, y] = parse_fields::<f64, 2>(&rest, lineno)?;
                vertices.push(Vertex::new(Vec2::new(x, y)));
            }
            "t" => {
                let [i, j, k] = parse_fields::<usize, 3>(&rest, lineno)?;
                triangles.push([i, j, k]);
            }
            other => {
                return Err(MeshError::Format(format!(
                    "line {}: unknown record type {other:?}",
                    lineno + 1
                )));
            }
        }
    }
    Mesh::build(vertices, &triangles, Vec::new())
}

fn parse_fields<T: std::str::FromStr, const N: usize>(
    fields: &[&str],
    lineno: usize,
) -> Result<[T; N], MeshError> {
    if fields.len() != N {
        return Err(MeshError::Format(format!(
            "line {}: expected {N} fields, found {}",
            lineno + 1,
            fields.len()
        )));
    }
    let mut out = Vec::with_capacity(N);
    for f in fields {
        out.push(f.parse::<T>().map_err(|_| {
            MeshError::Format(format!("line {}: cannot parse {f:?}", lineno + 1))
        })?);
    }
    Ok(out.try_into().unwrap_or_else(|_| unreachable!()))
}

pub fn save(mesh: &Mesh, path: &Path) -> Result<(), MeshError> {
    std::fs::write(path, write_text(mesh))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::aligned_square;
    use proptest::prelude::*;

    #[test]
    fn round_trip_preserves_geometry_and_text() {
        let mesh = aligned_square(3);
        let text = write_text(&mesh);
        let back = parse_text(&text).unwrap();
        assert_eq!(back.vertices.len(), mesh.vertices.len());
        assert_eq!(back.elements.len(), mesh.elements.len());
        for (a, b) in mesh.vertices.iter().zip(&back.vertices) {
            assert_eq!(a.pos, b.pos);
        }
        for (a, b) in mesh.elements.iter().zip(&back.elements) {
            assert_eq!(a.vertices, b.vertices);
        }
        assert_eq!(write_text(&back), text);
    }

    #[test]
    fn irrational_coordinates_round_trip_exactly() {
        let mesh = crate::mesh::split_rectangle();
        let back = parse_text(&write_text(&mesh)).unwrap();
        for (a, b) in mesh.vertices.iter().zip(&back.vertices) {
            assert_eq!(a.pos.x.to_bits(), b.pos.x.to_bits());
            assert_eq!(a.pos.y.to_bits(), b.pos.y.to_bits());
        }
    }

    #[test]
    fn rejects_bad_header() {
        assert!(matches!(
            parse_text("mesh 2\nv 0 0\n"),
            Err(MeshError::Format(_))
        ));
        assert!(matches!(parse_text(""), Err(MeshError::Format(_))));
    }

    #[test]
    fn rejects_malformed_records() {
        let missing_field = "tmesh 1\nv 0.0\n";
        assert!(matches!(
            parse_text(missing_field),
            Err(MeshError::Format(_))
        ));
        let bad_number = "tmesh 1\nv 0.0 zero\n";
        assert!(matches!(parse_text(bad_number), Err(MeshError::Format(_))));
        let unknown = "tmesh 1\nq 1 2 3\n";
        assert!(matches!(parse_text(unknown), Err(MeshError::Format(_))));
    }

    #[test]
    fn rejects_dangling_vertex_reference() {
        let text = "tmesh 1\nv 0.0 0.0\nv 1.0 0.0\nv 0.0 1.0\nt 0 1 9\n";
        assert!(matches!(
            parse_text(text),
            Err(MeshError::InvalidVertexIndex { .. })
        ));
    }

    #[test]
    fn save_and_load_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("square.tmesh");
        let mesh = aligned_square(2);
        save(&mesh, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.elements.len(), mesh.elements.len());
    }

    proptest! {
        /// Randomly refined meshes survive a text round trip bit-exactly.
        #[test]
        fn refined_meshes_round_trip(seed in any::<u64>(), rounds in 1usize..4) {
            let mut mesh = aligned_square(2);
            let mut state = seed;
            for _ in 0..rounds {
                let mut marked = Vec::new();
                for k in 0..mesh.elements.len() {
                    // xorshift64 driven marking pattern
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    if state % 3 == 0 {
                        marked.push(k);
                    }
                }
                mesh = mesh.bisect(&marked).unwrap();
            }
            let text = write_text(&mesh);
            let back = parse_text(&text).unwrap();
            prop_assert_eq!(back.elements.len(), mesh.elements.len());
            for (a, b) in mesh.vertices.iter().zip(&back.vertices) {
                prop_assert_eq!(a.pos.x.to_bits(), b.pos.x.to_bits());
                prop_assert_eq!(a.pos.y.to_bits(), b.pos.y.to_bits());
            }
            prop_assert_eq!(&write_text(&back), &text);
        }
    }
}
