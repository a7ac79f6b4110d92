//! Triangle meshes on disk: ASCII OBJ in and out, binary STL in.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use latent_glider_core::{TriangleMesh, Vec3};

use crate::error::{Error, Result};

/// Loads an OBJ or binary STL file, chosen by extension.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let parsed = match ext.as_deref() {
        Some("obj") => {
            let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "OBJ is not UTF-8"))?;
            parse_obj(text)
        }
        Some("stl") => parse_stl(&bytes),
        _ => return Err(Error::format(path, "unsupported mesh extension (expected .obj or .stl)")),
    };
    parsed.map_err(|m| Error::format(path, m))
}

fn resolve_index(token: &str, vertex_count: usize) -> Result<u32, String> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head.parse().map_err(|_| format!("bad face index `{token}`"))?;
    let idx = match raw {
        0 => return Err("face index 0 is not valid in OBJ".into()),
        r if r > 0 => r - 1,
        r => vertex_count as i64 + r,
    };
    if idx < 0 || idx as usize >= vertex_count {
        return Err(format!("face index {raw} out of range ({vertex_count} vertices)"));
    }
    Ok(idx as u32)
}

/// Parses `v` and `f` records; polygons are split into fans around their
/// first corner and every other record is ignored.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, String> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let tok = it.next().ok_or_else(|| format!("line {}: short vertex record", line_no + 1))?;
                    *slot = tok.parse().map_err(|_| format!("line {}: bad coordinate `{tok}`", line_no + 1))?;
                }
                vertices.push(Vec3::from(c));
            }
            Some("f") => {
                let idx = it
                    .map(|t| resolve_index(t, vertices.len()))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| format!("line {}: {e}", line_no + 1))?;
                if idx.len() < 3 {
                    return Err(format!("line {}: face with fewer than 3 corners", line_no + 1));
                }
                for w in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[w], idx[w + 1]]);
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err("mesh has no faces".into());
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| e.to_string())
}

/// Binary STL: 80-byte header, triangle count, 50 bytes per facet. Corners
/// with identical coordinates are merged into one vertex.
pub fn parse_stl(bytes: &[u8]) -> Result<TriangleMesh, String> {
    if bytes.len() < 84 {
        return Err("file too short for binary STL".into());
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = 84 + 50 * count;
    if bytes.len() != expected {
        return Err(format!("binary STL declares {count} facets ({expected} bytes) but has {} bytes", bytes.len()));
    }
    if count == 0 {
        return Err("mesh has no faces".into());
    }
    let mut lookup: HashMap<[u32; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(count);
    for f in 0..count {
        let rec = &bytes[84 + 50 * f..84 + 50 * (f + 1)];
        let mut tri = [0u32; 3];
        for (c, slot) in tri.iter_mut().enumerate() {
            let mut bits = [0u32; 3];
            for (a, b) in bits.iter_mut().enumerate() {
                let o = 12 + 12 * c + 4 * a;
                *b = u32::from_le_bytes(rec[o..o + 4].try_into().unwrap());
            }
            let p = bits.map(|b| f32::from_bits(b) as f64);
            if p.iter().any(|v| !v.is_finite()) {
                return Err(format!("facet {f}: non-finite coordinate"));
            }
            *slot = *lookup.entry(bits).or_insert_with(|| {
                vertices.push(Vec3::from(p));
                (vertices.len() - 1) as u32
            });
        }
        triangles.push(tri);
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| e.to_string())
}

pub fn obj_string(mesh: &TriangleMesh) -> String {
    let mut s = String::with_capacity(mesh.vertices.len() * 40 + mesh.triangles.len() * 24);
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    std::fs::write(path, obj_string(mesh)).map_err(|e| Error::io(path, e))
}

/// Binary STL bytes (used by tests and for interchange).
pub fn stl_bytes(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    out.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        let n = (b - a).cross(c - a).normalized();
        for v in [n, a, b, c] {
            for x in v.to_array() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}
