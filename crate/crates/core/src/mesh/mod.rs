//! Triangulated separating surfaces with sliding boundary constraints.
//!
//! Triangles are oriented so that the induced boundary orientation runs
//! through the side faces in increasing order. The normal `(x1-x0)×(x2-x0)`
//! then points into the apex/top side `E`.

mod build;
mod measure;
mod report;

pub use build::*;
pub use measure::*;
pub use report::*;

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::domain::PolyhedralDomain;
use crate::error::{Error, Result};
use crate::metric::Point;

/// Constraint carried by a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexTag {
    Interior,
    /// Slides in side face `F_j`.
    Face(usize),
    /// Slides along `L_j = F_j ∩ F_{j+1}`.
    Edge(usize),
}

impl VertexTag {
    pub fn is_boundary(&self) -> bool {
        !matches!(self, VertexTag::Interior)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriSurface {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub tags: Vec<VertexTag>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    tags: Vec<VertexTag>,
}

impl TriSurface {
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, tags: Vec<VertexTag>) -> Self {
        TriSurface {
            vertices,
            triangles,
            tags,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Corner vertex on each edge `L_j`, if present.
    pub fn corners(&self, k: usize) -> Vec<Option<usize>> {
        let mut c = vec![None; k];
        for (i, t) in self.tags.iter().enumerate() {
            if let VertexTag::Edge(j) = t {
                if *j < k {
                    c[*j] = Some(i);
                }
            }
        }
        c
    }

    /// Undirected edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut s = BTreeSet::new();
        for t in &self.triangles {
            for a in 0..3 {
                let (u, v) = (t[a], t[(a + 1) % 3]);
                s.insert((u.min(v), u.max(v)));
            }
        }
        s.into_iter().collect()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges().len() as i64 + self.triangles.len() as i64
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut vt = vec![Vec::new(); self.vertices.len()];
        for (i, t) in self.triangles.iter().enumerate() {
            for &v in t {
                vt[v].push(i);
            }
        }
        vt
    }

    /// Sorted one-ring neighbours of each vertex.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.vertices.len()];
        for t in &self.triangles {
            for a in 0..3 {
                let (u, v) = (t[a], t[(a + 1) % 3]);
                nb[u].insert(v);
                nb[v].insert(u);
            }
        }
        nb.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Vertices within `rings` edge hops of `v`, excluding `v`.
    pub fn ring(&self, nb: &[Vec<usize>], v: usize, rings: usize) -> Vec<usize> {
        let mut seen = BTreeSet::new();
        seen.insert(v);
        let mut front = vec![v];
        for _ in 0..rings {
            let mut next = Vec::new();
            for &u in &front {
                for &w in &nb[u] {
                    if seen.insert(w) {
                        next.push(w);
                    }
                }
            }
            front = next;
        }
        seen.remove(&v);
        seen.into_iter().collect()
    }

    /// Directed boundary edges `(u, v)` whose reverse is not present.
    fn boundary_edges(&self) -> Result<HashMap<usize, usize>> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for a in 0..3 {
                *count.entry((t[a], t[(a + 1) % 3])).or_default() += 1;
            }
        }
        let mut next = HashMap::new();
        for (&(u, v), &c) in &count {
            if c > 1 {
                return Err(Error::InvalidMesh(format!("edge {u}-{v} used twice with one orientation")));
            }
            if !count.contains_key(&(v, u)) && next.insert(u, v).is_some() {
                return Err(Error::InvalidMesh(format!("boundary pinched at vertex {u}")));
            }
        }
        Ok(next)
    }

    /// The single boundary loop in induced orientation, starting at the
    /// smallest boundary index.
    pub fn boundary_loop(&self) -> Result<Vec<usize>> {
        let next = self.boundary_edges()?;
        let start = *next
            .keys()
            .min()
            .ok_or_else(|| Error::InvalidMesh("surface has no boundary".into()))?;
        let mut lp = vec![start];
        let mut v = next[&start];
        while v != start {
            lp.push(v);
            v = *next
                .get(&v)
                .ok_or_else(|| Error::InvalidMesh("open boundary chain".into()))?;
            if lp.len() > next.len() {
                return Err(Error::InvalidMesh("boundary does not close".into()));
            }
        }
        if lp.len() != next.len() {
            return Err(Error::InvalidMesh("boundary has several components".into()));
        }
        Ok(lp)
    }

    /// Boundary loop rotated to start at the corner on `L_{k-1}`, so that the
    /// run on `F_j` sits between the corners on `L_{j-1}` and `L_j`.
    pub fn boundary_loop_from_corner(&self, k: usize) -> Result<Vec<usize>> {
        let lp = self.boundary_loop()?;
        let pos = lp
            .iter()
            .position(|&v| self.tags[v] == VertexTag::Edge(k - 1))
            .ok_or(Error::OpenContactCurve(0))?;
        let mut r = lp[pos..].to_vec();
        r.extend_from_slice(&lp[..pos]);
        Ok(r)
    }

    /// Boundary chain on `F_j` including both corners, in loop order.
    pub fn contact_curve(&self, k: usize, j: usize) -> Result<Vec<usize>> {
        let lp = self.boundary_loop()?;
        let prev = VertexTag::Edge((j + k - 1) % k);
        let here = VertexTag::Edge(j);
        let s = lp
            .iter()
            .position(|&v| self.tags[v] == prev)
            .ok_or(Error::OpenContactCurve(j))?;
        let mut chain = vec![lp[s]];
        let n = lp.len();
        for i in 1..=n {
            let v = lp[(s + i) % n];
            chain.push(v);
            match self.tags[v] {
                t if t == here => return Ok(chain),
                VertexTag::Face(f) if f == j => {}
                _ => return Err(Error::OpenContactCurve(j)),
            }
        }
        Err(Error::OpenContactCurve(j))
    }

    /// Full structural check against the domain.
    pub fn validate(&self, p: &PolyhedralDomain) -> Result<()> {
        let n = self.vertices.len();
        if self.tags.len() != n {
            return Err(Error::InvalidMesh("tag count differs from vertex count".into()));
        }
        if self.triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let scale = p.scale();
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidMesh(format!("bad triangle {i}")));
            }
            let [a, b, c] = t.map(|v| self.vertices[v]);
            if (b - a).cross(&(c - a)).norm() < 1e-14 * scale * scale {
                return Err(Error::DegenerateTriangle(i));
            }
        }
        let k = p.k();
        let lp = self.boundary_loop()?;
        let on_loop: BTreeSet<usize> = lp.iter().copied().collect();
        for v in 0..n {
            if self.tags[v].is_boundary() != on_loop.contains(&v) {
                return Err(Error::InvalidMesh(format!("vertex {v} tag disagrees with boundary")));
            }
        }
        for j in 0..k {
            self.contact_curve(k, j)?;
        }
        if lp.iter().filter(|&&v| matches!(self.tags[v], VertexTag::Edge(_))).count() != k {
            return Err(Error::InvalidMesh("need exactly one corner per edge".into()));
        }
        let tol = 1e-12 * scale.max(1.0);
        for v in 0..n {
            let x = self.vertices[v];
            match self.tags[v] {
                VertexTag::Interior => {}
                VertexTag::Face(j) => {
                    if j >= k || p.face(j).plane_distance(&x).abs() > tol {
                        return Err(Error::InvalidMesh(format!("vertex {v} is off face {j}")));
                    }
                }
                VertexTag::Edge(j) => {
                    if j >= k || edge_distance(p, j, &x) > tol {
                        return Err(Error::InvalidMesh(format!("vertex {v} is off edge {j}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Ray parity test: a point just inside the apex/top side is separated
    /// from a point just above the base centroid by an odd number of
    /// crossings.
    pub fn separates(&self, p: &PolyhedralDomain) -> bool {
        let (top, bottom) = separation_probe(p);
        let mut crossings = 0;
        for t in &self.triangles {
            let [a, b, c] = t.map(|v| self.vertices[v]);
            if segment_hits_triangle(&top, &bottom, &a, &b, &c) {
                crossings += 1;
            }
        }
        crossings % 2 == 1
    }

    /// Project constrained vertices back onto their face or edge.
    pub fn project_constraints(&mut self, p: &PolyhedralDomain) {
        for v in 0..self.vertices.len() {
            self.vertices[v] = project_to_constraint(p, self.tags[v], &self.vertices[v]);
        }
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        for x in &self.vertices {
            writeln!(w, "v {:.17e} {:.17e} {:.17e}", x.x, x.y, x.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        w.flush()?;
        let side = Sidecar {
            tags: self.tags.clone(),
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn read_obj(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for line in f.lines() {
            let line = line?;
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::InvalidMesh(format!("bad vertex line: {e}")))?;
                    if c.len() != 3 {
                        return Err(Error::InvalidMesh("vertex needs 3 coordinates".into()));
                    }
                    vertices.push(Vector3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|s| s.split('/').next().unwrap_or("").parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::InvalidMesh(format!("bad face line: {e}")))?;
                    if idx.len() != 3 || idx.iter().any(|&i| i == 0) {
                        return Err(Error::InvalidMesh("only 1-based triangles supported".into()));
                    }
                    triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {}
            }
        }
        let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        if side.tags.len() != vertices.len() {
            return Err(Error::InvalidMesh("sidecar tag count differs from OBJ".into()));
        }
        Ok(TriSurface {
            vertices,
            triangles,
            tags: side.tags,
        })
    }
}

/// Sidecar path `surf.obj` → `surf.tags.json`.
pub fn sidecar_path(obj: &Path) -> std::path::PathBuf {
    obj.with_extension("tags.json")
}

fn edge_distance(p: &PolyhedralDomain, j: usize, x: &Point) -> f64 {
    let (a, b) = p.edge(j);
    let d = (b - a).normalize();
    let r = x - a;
    (r - d * r.dot(&d)).norm()
}

pub fn project_to_constraint(p: &PolyhedralDomain, tag: VertexTag, x: &Point) -> Point {
    match tag {
        VertexTag::Interior => *x,
        VertexTag::Face(j) => {
            let f = p.face(j);
            x - f.normal * f.plane_distance(x)
        }
        VertexTag::Edge(j) => {
            let (a, b) = p.edge(j);
            let d = (b - a).normalize();
            a + d * (x - a).dot(&d)
        }
    }
}

/// Endpoints of the segment used by [`TriSurface::separates`].
pub fn separation_probe(p: &PolyhedralDomain) -> (Point, Point) {
    // generic base point, off the centroid where slice meshes have a vertex
    let b = p.base();
    let c = p.base_centroid() * 0.9 + b[0] * 0.0637 + b[1] * 0.0363;
    let eps = 1e-6;
    let top = match p.apex() {
        Some(a) => a + (c - a) * eps,
        None => {
            let t = p.top().iter().sum::<Point>() / p.k() as f64;
            t + (c - t) * eps
        }
    };
    let bottom = c + (top - c) * eps;
    (top, bottom)
}

/// Möller–Trumbore segment/triangle test.
pub fn segment_hits_triangle(p0: &Point, p1: &Point, a: &Point, b: &Point, c: &Point) -> bool {
    let d = p1 - p0;
    let e1 = b - a;
    let e2 = c - a;
    let q = d.cross(&e2);
    let det = e1.dot(&q);
    if det.abs() < 1e-300 {
        return false;
    }
    let inv = 1.0 / det;
    let s = p0 - a;
    let u = s.dot(&q) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let r = s.cross(&e1);
    let v = d.dot(&r) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let t = e2.dot(&r) * inv;
    (0.0..=1.0).contains(&t)
}
