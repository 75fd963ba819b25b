//! Surface generators: planar slices, graphs and smooth perturbations.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::{project_to_constraint, TriSurface, VertexTag};
use crate::domain::PolyhedralDomain;
use crate::error::{Error, Result};
use crate::metric::Point;

/// Corners `c_j = π ∩ L_j` of the plane `{n·x = offset}`; the polygon edge
/// `c_{j-1} → c_j` lies on `F_j`.
pub fn slice_polygon(p: &PolyhedralDomain, n: &Vector3<f64>, offset: f64) -> Result<Vec<Point>> {
    let mut c = Vec::with_capacity(p.k());
    for j in 0..p.k() {
        let (a, b) = p.edge(j);
        let sa = n.dot(&a) - offset;
        let sb = n.dot(&b) - offset;
        if sa * sb >= 0.0 {
            return Err(Error::EmptySlice);
        }
        let t = sa / (sa - sb);
        if !(t > 1e-12 && t < 1.0 - 1e-12) {
            return Err(Error::EmptySlice);
        }
        c.push(a + (b - a) * t);
    }
    Ok(c)
}

/// Number of subdivisions so that every fan edge is at most `h`.
fn subdivisions(center: &Point, poly: &[Point], h: f64) -> usize {
    let mut m: f64 = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        m = m.max((b - a).norm()).max((a - center).norm());
    }
    ((m / h).ceil() as usize).max(1)
}

/// Fan from the centroid of a corner polygon, each fan triangle uniformly
/// subdivided into `n²` pieces with `n = ceil(longest fan edge / h)`.
pub fn polygon_mesh(poly: &[Point], h: f64) -> Result<TriSurface> {
    let k = poly.len();
    if k < 3 || !(h > 0.0) {
        return Err(Error::InvalidMesh("need a polygon and h > 0".into()));
    }
    let center = poly.iter().sum::<Point>() / k as f64;
    let n = subdivisions(&center, poly, h);
    #[derive(Hash, PartialEq, Eq, Clone, Copy)]
    enum Key {
        Center,
        Spoke(usize, usize),
        Inner(usize, usize, usize),
    }
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut tags = Vec::new();
    let mut triangles = Vec::new();
    for a in 0..k {
        let b = (a + 1) % k;
        let pa = poly[a];
        let pb = poly[b];
        let key = |i: usize, j: usize| -> Key {
            if i == 0 && j == 0 {
                Key::Center
            } else if j == 0 {
                Key::Spoke(a, i)
            } else if i == 0 {
                Key::Spoke(b, j)
            } else {
                Key::Inner(a, i, j)
            }
        };
        let mut id = |i: usize, j: usize| -> usize {
            let kk = key(i, j);
            if let Some(&v) = index.get(&kk) {
                return v;
            }
            let x = center + (pa - center) * (i as f64 / n as f64) + (pb - center) * (j as f64 / n as f64);
            let tag = if i + j < n {
                VertexTag::Interior
            } else if j == 0 {
                VertexTag::Edge(a)
            } else if i == 0 {
                VertexTag::Edge(b)
            } else {
                VertexTag::Face(b)
            };
            vertices.push(x);
            tags.push(tag);
            index.insert(kk, vertices.len() - 1);
            vertices.len() - 1
        };
        for i in 0..n {
            for j in 0..(n - i) {
                let v00 = id(i, j);
                let v10 = id(i + 1, j);
                let v01 = id(i, j + 1);
                triangles.push([v00, v10, v01]);
                if i + j + 1 < n {
                    let v11 = id(i + 1, j + 1);
                    triangles.push([v10, v11, v01]);
                }
            }
        }
    }
    Ok(TriSurface {
        vertices,
        triangles,
        tags,
    })
}

/// Planar slice `{n·x = offset}` of the domain meshed at size `h`.
pub fn slice_mesh(p: &PolyhedralDomain, n: &Vector3<f64>, offset: f64, h: f64) -> Result<TriSurface> {
    let poly = slice_polygon(p, n, offset)?;
    polygon_mesh(&poly, h)
}

/// Horizontal slice at height `z`.
pub fn horizontal_slice(p: &PolyhedralDomain, z: f64, h: f64) -> Result<TriSurface> {
    slice_mesh(p, &Vector3::z(), z, h)
}

/// Apply `f` to every vertex, then project constrained vertices back onto
/// their face or edge.
pub fn map_surface<F: Fn(&Point) -> Point>(s: &TriSurface, p: &PolyhedralDomain, f: F) -> TriSurface {
    let mut out = s.clone();
    for x in out.vertices.iter_mut() {
        *x = f(x);
    }
    out.project_constraints(p);
    out
}

/// Horizontal slice at `z0` lifted to the graph `z = f(x, y)`.
pub fn graph_mesh<F: Fn(f64, f64) -> f64>(
    p: &PolyhedralDomain,
    z0: f64,
    h: f64,
    f: F,
) -> Result<TriSurface> {
    let s = horizontal_slice(p, z0, h)?;
    Ok(map_surface(&s, p, |x| Vector3::new(x.x, x.y, f(x.x, x.y))))
}

/// Vertical smooth perturbation of amplitude `amp` (deterministic), keeping
/// constraints. Used to start minimizations away from the answer.
pub fn perturbed(s: &TriSurface, p: &PolyhedralDomain, amp: f64) -> TriSurface {
    let c = p.base_centroid();
    let l = p.scale();
    map_surface(s, p, |x| {
        let d = (x - c) / l;
        let w = (3.1 * d.x + 0.7).sin() * (2.3 * d.y - 0.4).cos() + 0.5 * (1.7 * (d.x + d.y)).sin();
        x + Vector3::z() * (amp * w)
    })
}

/// Uniformly refine every triangle into four, keeping tags consistent.
pub fn refine(s: &TriSurface, p: &PolyhedralDomain) -> TriSurface {
    let mut vertices = s.vertices.clone();
    let mut tags = s.tags.clone();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let boundary: std::collections::HashSet<(usize, usize)> = match s.boundary_loop() {
        Ok(lp) => (0..lp.len())
            .map(|i| {
                let (u, v) = (lp[i], lp[(i + 1) % lp.len()]);
                (u.min(v), u.max(v))
            })
            .collect(),
        Err(_) => Default::default(),
    };
    let mut midpoint = |u: usize, v: usize| -> usize {
        let key = (u.min(v), u.max(v));
        if let Some(&m) = mid.get(&key) {
            return m;
        }
        let x = (vertices[u] + vertices[v]) * 0.5;
        let tag = if boundary.contains(&key) {
            match (tags[u], tags[v]) {
                (VertexTag::Face(j), _) | (_, VertexTag::Face(j)) => VertexTag::Face(j),
                (VertexTag::Edge(a), VertexTag::Edge(b)) => {
                    let k = p.k();
                    if (a + 1) % k == b {
                        VertexTag::Face(b)
                    } else {
                        VertexTag::Face(a)
                    }
                }
                _ => VertexTag::Interior,
            }
        } else {
            VertexTag::Interior
        };
        let x = project_to_constraint(p, tag, &x);
        vertices.push(x);
        tags.push(tag);
        mid.insert(key, vertices.len() - 1);
        vertices.len() - 1
    };
    let mut triangles = Vec::with_capacity(4 * s.triangles.len());
    for t in &s.triangles {
        let [a, b, c] = *t;
        let ab = midpoint(a, b);
        let bc = midpoint(b, c);
        let ca = midpoint(c, a);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    TriSurface {
        vertices,
        triangles,
        tags,
    }
}
