//! ASCII OFF / OBJ triangle mesh input and OFF output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{TriangulatedHypersurface, Vec3};
use crate::error::{Error, Result};

type RawMesh = (Vec<Vec3>, Vec<[usize; 3]>);

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), msg: msg.into() }
}

/// Loads a mesh, choosing the format from the extension (`.off` or `.obj`).
pub fn load_mesh(path: &Path) -> Result<TriangulatedHypersurface> {
    let text = fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let (v, t) = match ext.as_deref() {
        Some("off") => parse_off(&text).map_err(|m| parse_err(path, m))?,
        Some("obj") => parse_obj(&text).map_err(|m| parse_err(path, m))?,
        _ => return Err(parse_err(path, "unknown mesh extension (expected .off or .obj)")),
    };
    TriangulatedHypersurface::new(v, t)
}

/// Data lines with comments stripped.
fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
}

pub fn parse_off(text: &str) -> std::result::Result<RawMesh, String> {
    let mut tok = tokens(text);
    match tok.next() {
        Some("OFF") => {}
        other => return Err(format!("expected OFF header, found {other:?}")),
    }
    let mut num = |what: &str| -> std::result::Result<usize, String> {
        tok.next()
            .ok_or_else(|| format!("missing {what}"))?
            .parse()
            .map_err(|e| format!("bad {what}: {e}"))
    };
    let nv = num("vertex count")?;
    let nf = num("face count")?;
    let _ne = num("edge count")?;
    let mut rest = tokens(text).skip(4);
    let mut real = || -> std::result::Result<f64, String> {
        rest.next()
            .ok_or_else(|| "unexpected end of file".to_string())?
            .parse()
            .map_err(|e| format!("bad number: {e}"))
    };
    let mut verts = Vec::with_capacity(nv);
    for _ in 0..nv {
        verts.push(Vec3::new(real()?, real()?, real()?));
    }
    let mut tris = Vec::with_capacity(nf);
    for f in 0..nf {
        let k = real()?;
        if k != 3.0 {
            return Err(format!("face {f} has {k} vertices; only triangles are supported"));
        }
        let mut idx = [0usize; 3];
        for i in idx.iter_mut() {
            let x = real()?;
            if x < 0.0 || x.fract() != 0.0 {
                return Err(format!("face {f} has a bad vertex index {x}"));
            }
            *i = x as usize;
        }
        tris.push(idx);
    }
    Ok((verts, tris))
}

pub fn parse_obj(text: &str) -> std::result::Result<RawMesh, String> {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| format!("line {}: {e}", ln + 1))?;
                if c.len() != 3 {
                    return Err(format!("line {}: vertex needs 3 coordinates", ln + 1));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<i64> = it
                    .map(|s| s.split('/').next().unwrap_or("").parse::<i64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| format!("line {}: {e}", ln + 1))?;
                if idx.len() != 3 {
                    return Err(format!("line {}: only triangles are supported", ln + 1));
                }
                let mut tri = [0usize; 3];
                for (k, &i) in idx.iter().enumerate() {
                    let resolved = if i > 0 { i - 1 } else { verts.len() as i64 + i };
                    if resolved < 0 {
                        return Err(format!("line {}: bad index {i}", ln + 1));
                    }
                    tri[k] = resolved as usize;
                }
                tris.push(tri);
            }
            _ => {}
        }
    }
    Ok((verts, tris))
}

/// OFF text with shortest round-trip float formatting.
pub fn to_off_string(positions: &[Vec3], triangles: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(positions.len() * 60 + triangles.len() * 20);
    let _ = writeln!(s, "OFF\n{} {} 0", positions.len(), triangles.len());
    for p in positions {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for t in triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn save_off(mesh: &TriangulatedHypersurface, path: &Path) -> Result<()> {
    fs::write(path, to_off_string(mesh.vertex_positions(), mesh.topology_arc().triangles()))?;
    Ok(())
}
