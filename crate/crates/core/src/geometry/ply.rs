//! ASCII PLY export/import for meshes with color, opacity, and optional
//! per-vertex source-pixel coordinates.
//!
//! Floats are written with Rust's shortest-roundtrip formatting, so a
//! write/read cycle reproduces values bit for bit.

use std::io::{BufRead, Write};

use nalgebra::Point3;

use super::{GeometryError, TriMesh};

/// Writes vertices as `x y z [red green blue] [opacity] [u v]` (colors in
/// [0,1] floats) followed by triangular faces.
pub fn write_ply(
    out: &mut dyn Write,
    mesh: &TriMesh,
    source_pixels: Option<&[[f64; 2]]>,
) -> Result<(), GeometryError> {
    mesh.validate()?;
    if let Some(sp) = source_pixels {
        if sp.len() != mesh.vertices.len() {
            return Err(GeometryError::BadMesh("source pixel count mismatch".into()));
        }
    }
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", mesh.vertices.len())?;
    writeln!(out, "property double x")?;
    writeln!(out, "property double y")?;
    writeln!(out, "property double z")?;
    if mesh.colors.is_some() {
        writeln!(out, "property double red")?;
        writeln!(out, "property double green")?;
        writeln!(out, "property double blue")?;
    }
    if mesh.opacities.is_some() {
        writeln!(out, "property double opacity")?;
    }
    if source_pixels.is_some() {
        writeln!(out, "property double u")?;
        writeln!(out, "property double v")?;
    }
    writeln!(out, "element face {}", mesh.faces.len())?;
    writeln!(out, "property list uchar int vertex_indices")?;
    writeln!(out, "end_header")?;
    for (i, v) in mesh.vertices.iter().enumerate() {
        write!(out, "{} {} {}", v.x, v.y, v.z)?;
        if let Some(c) = &mesh.colors {
            write!(out, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
        }
        if let Some(o) = &mesh.opacities {
            write!(out, " {}", o[i])?;
        }
        if let Some(sp) = source_pixels {
            write!(out, " {} {}", sp[i][0], sp[i][1])?;
        }
        writeln!(out)?;
    }
    for f in &mesh.faces {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

/// Reads the subset of ASCII PLY produced by [`write_ply`]: double vertex
/// properties from {x, y, z, red, green, blue, opacity, u, v} in any
/// order, plus integer-list faces.
pub fn read_ply(
    input: &mut dyn BufRead,
) -> Result<(TriMesh, Option<Vec<[f64; 2]>>), GeometryError> {
    let mut lines = input.lines().enumerate();
    let mut next = || -> Result<(usize, String), GeometryError> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n + 1, l)),
            Some((n, Err(e))) => Err(GeometryError::PlyParse {
                line: n + 1,
                msg: e.to_string(),
            }),
            None => Err(GeometryError::PlyParse {
                line: 0,
                msg: "unexpected end of file".into(),
            }),
        }
    };
    let fail = |line: usize, msg: &str| GeometryError::PlyParse {
        line,
        msg: msg.into(),
    };

    let (l, magic) = next()?;
    if magic.trim() != "ply" {
        return Err(fail(l, "missing ply magic"));
    }
    let (l, fmt) = next()?;
    if fmt.trim() != "format ascii 1.0" {
        return Err(fail(l, "only ascii 1.0 is supported"));
    }

    let mut vertex_count = 0usize;
    let mut face_count = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = None::<&'static str>;
    loop {
        let (l, line) = next()?;
        let line = line.trim().to_string();
        if line == "end_header" {
            break;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("comment") => {}
            Some("element") => match (tok.next(), tok.next()) {
                (Some("vertex"), Some(n)) => {
                    vertex_count = n.parse().map_err(|_| fail(l, "bad vertex count"))?;
                    current = Some("vertex");
                }
                (Some("face"), Some(n)) => {
                    face_count = n.parse().map_err(|_| fail(l, "bad face count"))?;
                    current = Some("face");
                }
                _ => return Err(fail(l, "unsupported element")),
            },
            Some("property") => match current {
                Some("vertex") => {
                    let ty = tok.next().ok_or_else(|| fail(l, "missing property type"))?;
                    if ty == "list" {
                        return Err(fail(l, "list property on vertices"));
                    }
                    let name = tok.next().ok_or_else(|| fail(l, "missing property name"))?;
                    vertex_props.push(name.to_string());
                }
                Some("face") => {}
                _ => return Err(fail(l, "property outside element")),
            },
            Some(other) => return Err(fail(l, &format!("unknown header entry '{other}'"))),
            None => {}
        }
    }

    let find = |name: &str| vertex_props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(fail(0, "vertex element lacks x/y/z")),
    };
    let icolor = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let iop = find("opacity");
    let iuv = match (find("u"), find("v")) {
        (Some(u), Some(v)) => Some([u, v]),
        _ => None,
    };

    let mut mesh = TriMesh::default();
    let mut colors = Vec::new();
    let mut ops = Vec::new();
    let mut uvs = Vec::new();
    for _ in 0..vertex_count {
        let (l, line) = next()?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| fail(l, "bad vertex number"))?;
        if vals.len() != vertex_props.len() {
            return Err(fail(l, "wrong vertex value count"));
        }
        mesh.vertices.push(Point3::new(vals[ix], vals[iy], vals[iz]));
        if let Some([r, g, b]) = icolor {
            colors.push([vals[r], vals[g], vals[b]]);
        }
        if let Some(o) = iop {
            ops.push(vals[o]);
        }
        if let Some([u, v]) = iuv {
            uvs.push([vals[u], vals[v]]);
        }
    }
    for _ in 0..face_count {
        let (l, line) = next()?;
        let vals: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| fail(l, "bad face index"))?;
        if vals.len() != 4 || vals[0] != 3 {
            return Err(fail(l, "only triangular faces are supported"));
        }
        mesh.faces.push([vals[1], vals[2], vals[3]]);
    }
    if icolor.is_some() {
        mesh.colors = Some(colors);
    }
    if iop.is_some() {
        mesh.opacities = Some(ops);
    }
    mesh.validate()?;
    Ok((mesh, iuv.map(|_| uvs)))
}
