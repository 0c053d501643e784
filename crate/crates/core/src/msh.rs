//! ASCII Gmsh MSH 2.2 reader (tetrahedra and tagged boundary triangles).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FemError, Result};
use crate::geometry::{self, Point};
use crate::mesh::{sorted3, Mesh};

pub fn import_msh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_msh(&text, path)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        loop {
            let (i, l) = self.inner.next()?;
            self.last = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Some(l);
            }
        }
    }

    fn err(&self, message: impl Into<String>) -> FemError {
        FemError::Msh { path: self.path.to_path_buf(), line: self.last, message: message.into() }
    }

    fn expect(&mut self, what: &str) -> Result<&'a str> {
        self.next().ok_or_else(|| self.err(format!("malformed section: unexpected end of file, expected {what}")))
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines, tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| lines.err(format!("malformed section: bad {what}")))
}

pub fn parse_msh(text: &str, path: &Path) -> Result<Mesh> {
    let mut lines = Lines { inner: text.lines().enumerate(), path, last: 0 };
    let mut vertices: Vec<Point> = Vec::new();
    let mut node_index: HashMap<usize, usize> = HashMap::new();
    let mut cells: Vec<[usize; 4]> = Vec::new();
    let mut tags: HashMap<[usize; 3], i32> = HashMap::new();
    let mut seen_nodes = false;

    while let Some(line) = lines.next() {
        match line {
            "$MeshFormat" => {
                let fmt = lines.expect("format line")?;
                let mut it = fmt.split_whitespace();
                let version: f64 = parse_num(&lines, it.next(), "format version")?;
                let file_type: u32 = parse_num(&lines, it.next(), "file type")?;
                if !(2.0..3.0).contains(&version) || file_type != 0 {
                    return Err(lines.err(format!("unsupported format {fmt} (ASCII 2.x expected)")));
                }
                if lines.expect("$EndMeshFormat")? != "$EndMeshFormat" {
                    return Err(lines.err("malformed section: missing $EndMeshFormat"));
                }
            }
            "$Nodes" => {
                let tok = lines.expect("node count")?;
                let n: usize = parse_num(&lines, Some(tok), "node count")?;
                if n == 0 {
                    return Err(lines.err("malformed section: empty Nodes section"));
                }
                for _ in 0..n {
                    let l = lines.expect("node line")?;
                    let mut it = l.split_whitespace();
                    let id: usize = parse_num(&lines, it.next(), "node id")?;
                    let mut x = [0.0; 3];
                    for c in &mut x {
                        *c = parse_num(&lines, it.next(), "node coordinate")?;
                    }
                    if node_index.insert(id, vertices.len()).is_some() {
                        return Err(lines.err(format!("malformed section: duplicate node {id}")));
                    }
                    vertices.push(x);
                }
                if lines.expect("$EndNodes")? != "$EndNodes" {
                    return Err(lines.err("malformed section: node count does not match"));
                }
                seen_nodes = true;
            }
            "$Elements" => {
                if !seen_nodes {
                    return Err(lines.err("malformed section: Elements before Nodes"));
                }
                let tok = lines.expect("element count")?;
                let n: usize = parse_num(&lines, Some(tok), "element count")?;
                for _ in 0..n {
                    let l = lines.expect("element line")?;
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    if toks.len() < 3 {
                        return Err(lines.err("malformed section: short element line"));
                    }
                    let etype: u32 = parse_num(&lines, Some(toks[1]), "element type")?;
                    let ntags: usize = parse_num(&lines, Some(toks[2]), "tag count")?;
                    let nnodes = match etype {
                        2 => 3,
                        4 => 4,
                        15 => 1,
                        1 => 2,
                        other => return Err(lines.err(format!("unsupported element type {other}"))),
                    };
                    if toks.len() != 3 + ntags + nnodes {
                        return Err(lines.err("malformed section: wrong number of fields"));
                    }
                    let physical: i32 = if ntags > 0 { parse_num(&lines, Some(toks[3]), "physical tag")? } else { 0 };
                    let mut nodes = Vec::with_capacity(nnodes);
                    for t in &toks[3 + ntags..] {
                        let id: usize = parse_num(&lines, Some(t), "node reference")?;
                        let v = *node_index
                            .get(&id)
                            .ok_or_else(|| lines.err(format!("malformed section: unknown node {id}")))?;
                        nodes.push(v);
                    }
                    match etype {
                        4 => {
                            let c = [nodes[0], nodes[1], nodes[2], nodes[3]];
                            let a = geometry::sub(vertices[c[1]], vertices[c[0]]);
                            let b = geometry::sub(vertices[c[2]], vertices[c[0]]);
                            let d = geometry::sub(vertices[c[3]], vertices[c[0]]);
                            let vol = geometry::dot(a, geometry::cross(b, d)) / 6.0;
                            if vol <= 0.0 {
                                return Err(lines.err(format!("inverted cell (signed volume {vol:e})")));
                            }
                            cells.push(c);
                        }
                        2 => {
                            tags.insert(sorted3([nodes[0], nodes[1], nodes[2]]), physical);
                        }
                        _ => {}
                    }
                }
                if lines.expect("$EndElements")? != "$EndElements" {
                    return Err(lines.err("malformed section: element count does not match"));
                }
            }
            l if l.starts_with('$') && !l.starts_with("$End") => {
                // Skip unknown sections such as $PhysicalNames.
                let end = format!("$End{}", &l[1..]);
                loop {
                    if lines.expect(&end)? == end {
                        break;
                    }
                }
            }
            other => return Err(lines.err(format!("malformed section: unexpected line {other:?}"))),
        }
    }
    if !seen_nodes {
        return Err(lines.err("malformed section: no Nodes section"));
    }
    if cells.is_empty() {
        return Err(lines.err("malformed section: no tetrahedra"));
    }
    Mesh::new(vertices, cells, tags)
}

/// Writes a mesh in the same subset; boundary faces without a tag are
/// written with physical group 0.
pub fn write_msh(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.vertices.len());
    for (i, v) in mesh.vertices.iter().enumerate() {
        let _ = writeln!(s, "{} {:.17e} {:.17e} {:.17e}", i + 1, v[0], v[1], v[2]);
    }
    s.push_str("$EndNodes\n$Elements\n");
    let mut tris: Vec<(&[usize; 3], &i32)> = mesh.boundary_tags.iter().collect();
    tris.sort();
    let _ = writeln!(s, "{}", tris.len() + mesh.cells.len());
    let mut id = 1;
    for (t, tag) in tris {
        let _ = writeln!(s, "{id} 2 2 {tag} {tag} {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        id += 1;
    }
    for c in &mesh.cells {
        let _ = writeln!(s, "{id} 4 2 1 1 {} {} {} {}", c[0] + 1, c[1] + 1, c[2] + 1, c[3] + 1);
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_cube_mesh;

    fn parse(text: &str) -> Result<Mesh> {
        parse_msh(text, Path::new("test.msh"))
    }

    #[test]
    fn roundtrip_cube() {
        let m = generate_cube_mesh(1);
        let back = parse(&write_msh(&m)).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.cells, m.cells);
        assert_eq!(back.boundary_tags, m.boundary_tags);
        assert_eq!(back.num_vertices(), 8);
        assert_eq!(back.num_cells(), 6);
    }

    #[test]
    fn five_node_element_rejected() {
        let text = "$Nodes\n1\n1 0 0 0\n$EndNodes\n$Elements\n1\n1 7 2 1 1 1 1 1 1 1\n$EndElements\n";
        let e = parse(text).unwrap_err().to_string();
        assert!(e.contains("unsupported element type"), "{e}");
        assert!(e.contains("test.msh:7"), "{e}");
    }

    #[test]
    fn empty_nodes_rejected() {
        let e = parse("$Nodes\n0\n$EndNodes\n").unwrap_err().to_string();
        assert!(e.contains("malformed section"), "{e}");
    }

    #[test]
    fn inverted_cell_rejected() {
        let text =
            "$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n$Elements\n1\n1 4 2 1 1 1 3 2 4\n$EndElements\n";
        let e = parse(text).unwrap_err().to_string();
        assert!(e.contains("inverted cell") && e.contains(":10"), "{e}");
    }

    #[test]
    fn physical_names_skipped() {
        let text = "$PhysicalNames\n1\n2 1 \"wall\"\n$EndPhysicalNames\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n$Elements\n2\n1 2 2 5 5 1 2 3\n2 4 2 1 1 1 2 3 4\n$EndElements\n";
        let m = parse(text).unwrap();
        assert_eq!(m.boundary_tags[&[0, 1, 2]], 5);
    }
}
