use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// An indexed triangle soup.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Appends a triangle unless all three referenced positions coincide.
    pub fn push_triangle(&mut self, t: [usize; 3]) {
        debug_assert!(t.iter().all(|&i| i < self.vertices.len()));
        let (a, b, c) = (self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
        if a == b && b == c {
            return;
        }
        self.triangles.push(t);
    }

    pub fn is_valid(&self) -> bool {
        self.triangles.iter().all(|t| t.iter().all(|&i| i < self.vertices.len()))
    }
}

/// Writes ASCII OBJ: a header comment, `v x y z` lines in vertex order, then
/// 1-based `f i j k` lines in triangle order.
pub fn export_obj<W: Write>(mesh: &TriangleMesh, out: &mut W) -> Result<()> {
    debug_assert!(mesh.is_valid());
    writeln!(out, "# lofted edge-loop surface")?;
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// Parses the subset of OBJ that `export_obj` writes (`v` and `f` triangles;
/// comments and blank lines ignored).
pub fn parse_obj<R: BufRead>(input: R) -> Result<TriangleMesh> {
    let mut mesh = TriangleMesh::default();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let tag = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => {
                if rest.len() != 3 {
                    return Err(Error::format("OBJ", format!("line {}: bad vertex", lineno + 1)));
                }
                let mut v = [0f64; 3];
                for (slot, s) in v.iter_mut().zip(&rest) {
                    *slot = s
                        .parse()
                        .map_err(|_| Error::format("OBJ", format!("line {}: bad coordinate", lineno + 1)))?;
                }
                mesh.vertices.push(v);
            }
            "f" => {
                if rest.len() != 3 {
                    return Err(Error::format("OBJ", format!("line {}: only triangles supported", lineno + 1)));
                }
                let mut t = [0usize; 3];
                for (slot, s) in t.iter_mut().zip(&rest) {
                    let one_based: usize = s
                        .parse()
                        .map_err(|_| Error::format("OBJ", format!("line {}: bad index", lineno + 1)))?;
                    if one_based == 0 {
                        return Err(Error::format("OBJ", format!("line {}: zero index", lineno + 1)));
                    }
                    *slot = one_based - 1;
                }
                mesh.triangles.push(t);
            }
            other => {
                return Err(Error::format("OBJ", format!("line {}: unsupported tag {other}", lineno + 1)))
            }
        }
    }
    if !mesh.is_valid() {
        return Err(Error::format("OBJ", "face index out of range"));
    }
    Ok(mesh)
}
