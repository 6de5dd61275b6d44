//! `rtmesh 1` text format.
//!
//! ```text
//! rtmesh 1
//! v <x> <y> <class>
//! f <i> <j> <k>
//! ```
//!
//! `class` is one of `interior`, `boundary`, `roi:<i>`, `line:<j>`. Faces are 0-based
//! and counter-clockwise. The domain size is the bounding box of the vertices.

use std::io::{BufRead, Write};

use super::{MeshError, SimplicialMesh, VertexRole};
use crate::geometry::Point;

pub fn role_token(role: VertexRole) -> String {
    match role {
        VertexRole::Interior => "interior".into(),
        VertexRole::Boundary => "boundary".into(),
        VertexRole::Roi(i) => format!("roi:{i}"),
        VertexRole::Line(j) => format!("line:{j}"),
    }
}

pub fn parse_role(token: &str) -> Option<VertexRole> {
    match token {
        "interior" => Some(VertexRole::Interior),
        "boundary" => Some(VertexRole::Boundary),
        _ => {
            let (kind, idx) = token.split_once(':')?;
            let idx: usize = idx.parse().ok()?;
            match kind {
                "roi" => Some(VertexRole::Roi(idx)),
                "line" => Some(VertexRole::Line(idx)),
                _ => None,
            }
        }
    }
}

/// Writes the mesh. Without `roles` each vertex is tagged from its boundary flag.
pub fn write_mesh<W: Write>(out: &mut W, mesh: &SimplicialMesh, roles: Option<&[VertexRole]>) -> Result<(), MeshError> {
    writeln!(out, "rtmesh 1")?;
    for (v, p) in mesh.vertices().iter().enumerate() {
        let role = match roles {
            Some(r) => r[v],
            None if mesh.boundary_flags()[v] => VertexRole::Boundary,
            None => VertexRole::Interior,
        };
        writeln!(out, "v {} {} {}", p.x, p.y, role_token(role))?;
    }
    for t in mesh.triangles() {
        writeln!(out, "f {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

pub fn mesh_to_string(mesh: &SimplicialMesh, roles: Option<&[VertexRole]>) -> String {
    let mut buf = Vec::new();
    write_mesh(&mut buf, mesh, roles).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("mesh text is ascii")
}

pub fn read_mesh<R: BufRead>(input: R) -> Result<(SimplicialMesh, Vec<VertexRole>), MeshError> {
    let err = |line: usize, message: &str| MeshError::Parse { line, message: message.to_string() };
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == "rtmesh 1" => {}
        Some((_, Err(e))) => return Err(e.into()),
        _ => return Err(err(1, "expected header `rtmesh 1`")),
    }
    let mut vertices = Vec::new();
    let mut roles = Vec::new();
    let mut triangles = Vec::new();
    for (n, line) in lines {
        let line = line?;
        let lineno = n + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => continue,
            Some("v") => {
                let x: f64 = tok.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(lineno, "bad x"))?;
                let y: f64 = tok.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(lineno, "bad y"))?;
                let role = tok.next().and_then(parse_role).ok_or_else(|| err(lineno, "bad vertex class"))?;
                vertices.push(Point::new(x, y));
                roles.push(role);
            }
            Some("f") => {
                let mut idx = [0usize; 3];
                for slot in &mut idx {
                    *slot = tok.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(lineno, "bad face index"))?;
                }
                triangles.push(idx);
            }
            Some(other) => return Err(err(lineno, &format!("unknown record `{other}`"))),
        }
        if tok.next().is_some() {
            return Err(err(lineno, "trailing tokens"));
        }
    }
    let width = vertices.iter().map(|p| p.x).fold(0.0, f64::max);
    let height = vertices.iter().map(|p| p.y).fold(0.0, f64::max);
    let mesh = SimplicialMesh::from_parts(width, height, vertices, triangles)?;
    Ok((mesh, roles))
}
