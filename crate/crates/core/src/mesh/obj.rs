//! Wavefront OBJ reading and writing.
//!
//! Only `v`, `f` and `l` records matter; texture and normal indices on face
//! corners are ignored, as are all other record types.

use std::fmt::Write as _;
use std::path::Path;

use super::{MeshKind, TriMesh, Vec3};
use crate::error::{Error, Result};

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_obj(&text, path)
}

pub(crate) fn parse_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut polyline: Vec<usize> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| err(lineno, format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(err(lineno, "vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "f" | "l" => {
                let mut idx = Vec::new();
                for t in tokens {
                    let first = t.split('/').next().unwrap_or("");
                    let k: i64 = first
                        .parse()
                        .map_err(|e| err(lineno, format!("bad index {t:?}: {e}")))?;
                    let resolved = match k {
                        0 => return Err(err(lineno, "indices are 1-based".into())),
                        k if k > 0 => k - 1,
                        k => vertices.len() as i64 + k,
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(err(lineno, format!("index {k} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if tag == "f" {
                    if idx.len() != 3 {
                        return Err(err(
                            lineno,
                            format!("only triangles are supported, face has {} corners", idx.len()),
                        ));
                    }
                    faces.push([idx[0], idx[1], idx[2]]);
                } else {
                    if !polyline.is_empty() && polyline.last() == idx.first() {
                        idx.remove(0);
                    }
                    polyline.extend(idx);
                }
            }
            _ => {}
        }
    }

    if !faces.is_empty() {
        if !polyline.is_empty() {
            log::warn!("{}: ignoring `l` records in a triangle mesh", path.display());
        }
        return TriMesh::new_surface(vertices, faces);
    }
    if polyline.is_empty() {
        return Err(err(text.lines().count(), "no faces or polylines found".into()));
    }
    if polyline.len() > 1 && polyline.first() == polyline.last() {
        polyline.pop();
    }
    let mut seen = vec![false; vertices.len()];
    for &v in &polyline {
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::InvalidMesh(format!(
                "polyline visits vertex {} twice; it must be a single closed cycle",
                v + 1
            )));
        }
    }
    TriMesh::new_loop(polyline.iter().map(|&v| vertices[v]).collect())
}

/// Plain-text closed polyline: one `x y z` triple per line, closure implied.
pub fn load_polyline_txt(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut vertices = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let c: Vec<f64> = line
            .split(|ch: char| ch.is_whitespace() || ch == ',')
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("bad coordinate: {e}"),
            })?;
        if c.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected three coordinates".into(),
            });
        }
        vertices.push(Vec3::new(c[0], c[1], c[2]));
    }
    TriMesh::new_loop(vertices)
}

pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for v in mesh.vertices() {
        writeln!(out, "v {:.17e} {:.17e} {:.17e}", v.x, v.y, v.z).unwrap();
    }
    match mesh.kind() {
        MeshKind::Surface => {
            for f in mesh.faces() {
                writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
            }
        }
        MeshKind::Loop => {
            out.push('l');
            for i in 0..=mesh.num_vertices() {
                write!(out, " {}", i % mesh.num_vertices() + 1).unwrap();
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
