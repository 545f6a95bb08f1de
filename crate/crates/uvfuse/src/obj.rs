//! Wavefront OBJ reading (positions, texture coordinates, polygons).

use std::path::Path;

use log::warn;
use uvfuse_core::geometry::{Corner, TexturedMesh};
use uvfuse_core::{DVec2, DVec3};

use crate::error::{io_err, Error, Result};

/// Resolution at which overlapping UV charts are reported.
pub const OVERLAP_CHECK_RESOLUTION: usize = 512;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjData {
    pub positions: Vec<DVec3>,
    pub uvs: Vec<DVec2>,
    pub faces: Vec<Vec<Corner>>,
}

fn index(token: &str, count: usize) -> std::result::Result<usize, String> {
    let i: i64 = token.parse().map_err(|_| format!("bad index {token:?}"))?;
    let resolved = match i {
        0 => return Err("index 0 is not valid".into()),
        i if i > 0 => i - 1,
        i => count as i64 + i,
    };
    usize::try_from(resolved).map_err(|_| format!("index {i} out of range"))
}

fn floats<const N: usize>(parts: &mut std::str::SplitWhitespace<'_>) -> std::result::Result<[f64; N], String> {
    let mut out = [0.0; N];
    for o in &mut out {
        let tok = parts.next().ok_or("too few coordinates")?;
        *o = tok.parse().map_err(|_| format!("bad number {tok:?}"))?;
    }
    Ok(out)
}

/// Parses OBJ text. Normals, groups, materials and other statements are ignored.
pub fn parse_obj(text: &str) -> std::result::Result<ObjData, (usize, String)> {
    let mut data = ObjData::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut parts = line.split_whitespace();
        let wrap = |m: String| (n + 1, m);
        match parts.next() {
            Some("v") => {
                let [x, y, z] = floats::<3>(&mut parts).map_err(wrap)?;
                data.positions.push(DVec3::new(x, y, z));
            }
            Some("vt") => {
                let [u, v] = floats::<2>(&mut parts).map_err(wrap)?;
                data.uvs.push(DVec2::new(u, v));
            }
            Some("f") => {
                let mut face = Vec::new();
                for corner in parts {
                    let mut fields = corner.split('/');
                    let v = index(fields.next().unwrap_or(""), data.positions.len()).map_err(wrap)?;
                    let t = match fields.next() {
                        None | Some("") => None,
                        Some(s) => Some(index(s, data.uvs.len()).map_err(wrap)?),
                    };
                    face.push((v, t));
                }
                data.faces.push(face);
            }
            _ => {}
        }
    }
    Ok(data)
}

/// Loads a textured mesh, normalized to the unit bounding sphere.
pub fn load_obj(path: &Path) -> Result<TexturedMesh> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let data = parse_obj(&text).map_err(|(line, message)| Error::Parse {
        path: path.into(),
        line,
        message,
    })?;
    let mesh = TexturedMesh::from_polygons(data.positions, &data.uvs, &data.faces)?;
    let overlap = mesh.uv_overlap_texels(OVERLAP_CHECK_RESOLUTION);
    if overlap > 0 {
        warn!(
            "{}: {overlap} texels at {OVERLAP_CHECK_RESOLUTION}² are shared by several faces",
            path.display()
        );
    }
    Ok(mesh)
}

/// OBJ text for a mesh with per-corner texture coordinates.
pub fn write_obj(mesh: &TexturedMesh) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for uv in mesh.uv_coords() {
        for t in uv {
            let _ = writeln!(s, "vt {} {}", t.x, t.y);
        }
    }
    for (f, tri) in mesh.triangles().iter().enumerate() {
        let _ = writeln!(
            s,
            "f {}/{} {}/{} {}/{}",
            tri[0] + 1,
            3 * f + 1,
            tri[1] + 1,
            3 * f + 2,
            tri[2] + 1,
            3 * f + 3
        );
    }
    s
}
