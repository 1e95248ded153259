//! Plain-text mesh files and legacy VTK polygon output.
//!
//! Text layout:
//! ```text
//! n_v n_el
//! x y on_boundary is_corner      (n_v lines, flags as 0/1)
//! k id_1 ... id_k                (n_el lines, CCW)
//! ```

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::{pt, Element, Node, PolyMesh};
use crate::error::{Error, Result};

pub fn to_text(mesh: &PolyMesh) -> String {
    let mut s = String::new();
    writeln!(s, "{} {}", mesh.n_nodes(), mesh.n_elements()).unwrap();
    for n in &mesh.nodes {
        writeln!(
            s,
            "{:?} {:?} {} {}",
            n.pos.x, n.pos.y, n.on_boundary as u8, n.is_corner as u8
        )
        .unwrap();
    }
    for el in &mesh.elements {
        write!(s, "{}", el.len()).unwrap();
        for v in &el.vertices {
            write!(s, " {v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn from_text(text: &str) -> Result<PolyMesh> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let bad = |msg: &str| Error::Parse(msg.to_string());
    let header = lines.next().ok_or_else(|| bad("empty mesh file"))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad header")))
        .collect::<Result<_>>()?;
    let [n_v, n_el] = counts[..] else {
        return Err(bad("header must be `n_v n_el`"));
    };
    let flag = |t: &str| match t {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(bad("flag must be 0 or 1")),
    };
    let mut nodes = Vec::with_capacity(n_v);
    for _ in 0..n_v {
        let l = lines.next().ok_or_else(|| bad("truncated node list"))?;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 4 {
            return Err(bad("node line must have 4 fields"));
        }
        let x: f64 = t[0].parse().map_err(|_| bad("bad x"))?;
        let y: f64 = t[1].parse().map_err(|_| bad("bad y"))?;
        nodes.push(Node { pos: pt(x, y), on_boundary: flag(t[2])?, is_corner: flag(t[3])? });
    }
    let mut elements = Vec::with_capacity(n_el);
    for _ in 0..n_el {
        let l = lines.next().ok_or_else(|| bad("truncated element list"))?;
        let t: Vec<usize> = l
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| bad("bad element entry")))
            .collect::<Result<_>>()?;
        if t.is_empty() || t[0] + 1 != t.len() {
            return Err(bad("element vertex count mismatch"));
        }
        elements.push(Element::new(t[1..].to_vec()));
    }
    PolyMesh::new(nodes, elements)
}

pub fn write_text(mesh: &PolyMesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_text(mesh))?;
    Ok(())
}

pub fn read_text(path: impl AsRef<Path>) -> Result<PolyMesh> {
    from_text(&std::fs::read_to_string(path)?)
}

enum Field<'a> {
    Scalars(&'a str, &'a [f64]),
    Vectors(&'a str, &'a [[f64; 2]]),
}

/// Legacy ASCII VTK writer (POLYDATA with POLYGONS cells).
pub struct VtkWriter<'a> {
    mesh: &'a PolyMesh,
    title: String,
    point: Vec<Field<'a>>,
    cell: Vec<Field<'a>>,
}

impl<'a> VtkWriter<'a> {
    pub fn new(mesh: &'a PolyMesh) -> Self {
        VtkWriter { mesh, title: "polyvem mesh".into(), point: Vec::new(), cell: Vec::new() }
    }

    pub fn title(mut self, t: impl Into<String>) -> Self {
        self.title = t.into();
        self
    }

    pub fn point_scalars(mut self, name: &'a str, v: &'a [f64]) -> Self {
        assert_eq!(v.len(), self.mesh.n_nodes());
        self.point.push(Field::Scalars(name, v));
        self
    }

    pub fn point_vectors(mut self, name: &'a str, v: &'a [[f64; 2]]) -> Self {
        assert_eq!(v.len(), self.mesh.n_nodes());
        self.point.push(Field::Vectors(name, v));
        self
    }

    pub fn cell_scalars(mut self, name: &'a str, v: &'a [f64]) -> Self {
        assert_eq!(v.len(), self.mesh.n_elements());
        self.cell.push(Field::Scalars(name, v));
        self
    }

    pub fn render(&self) -> String {
        let m = self.mesh;
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\n");
        writeln!(s, "{}", self.title.replace('\n', " ")).unwrap();
        s.push_str("ASCII\nDATASET POLYDATA\n");
        writeln!(s, "POINTS {} double", m.n_nodes()).unwrap();
        for n in &m.nodes {
            writeln!(s, "{:?} {:?} 0", n.pos.x, n.pos.y).unwrap();
        }
        let size: usize = m.elements.iter().map(|e| e.len() + 1).sum();
        writeln!(s, "POLYGONS {} {}", m.n_elements(), size).unwrap();
        for el in &m.elements {
            write!(s, "{}", el.len()).unwrap();
            for v in &el.vertices {
                write!(s, " {v}").unwrap();
            }
            s.push('\n');
        }
        if !self.point.is_empty() {
            writeln!(s, "POINT_DATA {}", m.n_nodes()).unwrap();
            write_fields(&mut s, &self.point);
        }
        if !self.cell.is_empty() {
            writeln!(s, "CELL_DATA {}", m.n_elements()).unwrap();
            write_fields(&mut s, &self.cell);
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.render().as_bytes())?;
        f.flush()?;
        Ok(())
    }
}

fn write_fields(s: &mut String, fields: &[Field<'_>]) {
    for f in fields {
        match f {
            Field::Scalars(name, v) => {
                writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
                for x in *v {
                    writeln!(s, "{x:?}").unwrap();
                }
            }
            Field::Vectors(name, v) => {
                writeln!(s, "VECTORS {name} double").unwrap();
                for [x, y] in *v {
                    writeln!(s, "{x:?} {y:?} 0").unwrap();
                }
            }
        }
    }
}
