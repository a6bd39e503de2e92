//! Wavefront OBJ subset: `v x y z` and `f a b c` lines only, 1-based
//! indices, triangles only. Blank lines and `#` comments are tolerated on
//! read; anything else is rejected.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::volume::TriMesh;

pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for t in &mesh.triangles {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    out
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        match keyword {
            "v" => {
                if rest.len() != 3 {
                    return Err(Error::Obj(format!(
                        "line {}: vertex needs exactly 3 coordinates",
                        lineno + 1
                    )));
                }
                let mut coords = [0.0f64; 3];
                for (i, s) in rest.iter().enumerate() {
                    coords[i] = s.parse().map_err(|_| {
                        Error::Obj(format!("line {}: bad coordinate {:?}", lineno + 1, s))
                    })?;
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                if rest.len() > 3 {
                    return Err(Error::Obj(format!(
                        "line {}: face has {} vertices, only triangles are supported",
                        lineno + 1,
                        rest.len()
                    )));
                }
                if rest.len() < 3 {
                    return Err(Error::Obj(format!(
                        "line {}: face needs 3 vertex indices",
                        lineno + 1
                    )));
                }
                let mut idx = [0u32; 3];
                for (i, s) in rest.iter().enumerate() {
                    let n: i64 = s.parse().map_err(|_| {
                        Error::Obj(format!(
                            "line {}: bad index {:?} (texture/normal indices are not supported)",
                            lineno + 1,
                            s
                        ))
                    })?;
                    if n < 1 || n as usize > vertices.len() {
                        return Err(Error::Obj(format!(
                            "line {}: index {} out of range (have {} vertices)",
                            lineno + 1,
                            n,
                            vertices.len()
                        )));
                    }
                    idx[i] = (n - 1) as u32;
                }
                triangles.push(idx);
            }
            other => {
                return Err(Error::Obj(format!(
                    "line {}: unsupported keyword {:?}",
                    lineno + 1,
                    other
                )));
            }
        }
    }
    let mesh = TriMesh { vertices, triangles };
    mesh.validate()?;
    Ok(mesh)
}

pub fn save_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    std::fs::write(path, write_obj(mesh))?;
    Ok(())
}

pub fn load_obj(path: &Path) -> Result<TriMesh> {
    parse_obj(&std::fs::read_to_string(path)?)
}
