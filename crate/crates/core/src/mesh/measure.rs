//! Riemannian areas, wetted areas and their gradients.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use super::{TriSurface, VertexTag};
use crate::domain::{DomainKind, PolyhedralDomain, SideFace};
use crate::error::{Error, Result};
use crate::metric::{MetricField, Point};

/// Gram matrix of the edge vectors `e1`, `e2` in `g`.
fn gram(g: &Matrix3<f64>, e1: &Vector3<f64>, e2: &Vector3<f64>) -> Matrix2<f64> {
    let ge1 = g * e1;
    let ge2 = g * e2;
    Matrix2::new(e1.dot(&ge1), e1.dot(&ge2), e2.dot(&ge1), e2.dot(&ge2))
}

/// Area of the triangle `(a, b, c)` with `g` frozen at the centroid.
pub fn triangle_area(field: &MetricField, a: &Point, b: &Point, c: &Point) -> f64 {
    let g = field.g(&((a + b + c) / 3.0));
    let d = gram(&g, &(b - a), &(c - a)).determinant();
    0.5 * d.max(0.0).sqrt()
}

/// Triangle area and its gradient with respect to the three corners.
pub fn triangle_area_grad(
    field: &MetricField,
    a: &Point,
    b: &Point,
    c: &Point,
) -> (f64, [Vector3<f64>; 3]) {
    let ctr = (a + b + c) / 3.0;
    let g = field.g(&ctr);
    let e = [b - a, c - a];
    let gr = gram(&g, &e[0], &e[1]);
    let det = gr.determinant();
    if !(det > 0.0) {
        return (0.0, [Vector3::zeros(); 3]);
    }
    let area = 0.5 * det.sqrt();
    let w = gr.try_inverse().unwrap_or_else(Matrix2::zeros);
    let ge = [g * e[0], g * e[1]];
    let de = [
        (ge[0] * w[(0, 0)] + ge[1] * w[(0, 1)]) * area,
        (ge[0] * w[(1, 0)] + ge[1] * w[(1, 1)]) * area,
    ];
    let mut dc = Vector3::zeros();
    if !field.is_flat() {
        let dg = field.dg(&ctr);
        for k in 0..3 {
            let m = gram(&dg[k], &e[0], &e[1]);
            dc[k] = 0.5 * area * (w * m).trace();
        }
    }
    let third = dc / 3.0;
    (area, [third - de[0] - de[1], de[0] + third, de[1] + third])
}

fn check_triangles(s: &TriSurface, field: &MetricField) -> Result<()> {
    let mut scale: f64 = 0.0;
    for x in &s.vertices {
        scale = scale.max(x.norm());
    }
    let scale = scale.max(1.0);
    for (i, t) in s.triangles.iter().enumerate() {
        let [a, b, c] = t.map(|v| s.vertices[v]);
        if (b - a).cross(&(c - a)).norm() <= 1e-14 * scale * scale {
            return Err(Error::DegenerateTriangle(i));
        }
        field.evaluate(&((a + b + c) / 3.0))?;
    }
    Ok(())
}

/// `ℋ²(Σ)` by one-point (centroid) quadrature per triangle.
pub fn riemannian_area(s: &TriSurface, field: &MetricField) -> Result<f64> {
    check_triangles(s, field)?;
    Ok(s.triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|v| s.vertices[v]);
            triangle_area(field, &a, &b, &c)
        })
        .sum())
}

/// Area and its gradient with respect to every vertex position.
pub fn area_gradient(s: &TriSurface, field: &MetricField) -> Result<(f64, Vec<Vector3<f64>>)> {
    check_triangles(s, field)?;
    let mut grad = vec![Vector3::zeros(); s.vertices.len()];
    let mut total = 0.0;
    for t in &s.triangles {
        let [a, b, c] = t.map(|v| s.vertices[v]);
        let (ar, gr) = triangle_area_grad(field, &a, &b, &c);
        total += ar;
        for i in 0..3 {
            grad[t[i]] += gr[i];
        }
    }
    Ok((total, grad))
}

/// Lumped mass: one third of the incident triangle areas.
pub fn vertex_masses(s: &TriSurface, field: &MetricField) -> Vec<f64> {
    let mut m = vec![0.0; s.vertices.len()];
    for t in &s.triangles {
        let [a, b, c] = t.map(|v| s.vertices[v]);
        let ar = triangle_area(field, &a, &b, &c) / 3.0;
        for &v in t {
            m[v] += ar;
        }
    }
    m
}

/// Euclidean normal covector `(b-a)×(c-a)` of each triangle.
pub fn triangle_covectors(s: &TriSurface) -> Vec<Vector3<f64>> {
    s.triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|v| s.vertices[v]);
            (b - a).cross(&(c - a))
        })
        .collect()
}

/// `g`-unit vertex normals pointing into `E`.
pub fn vertex_normals(s: &TriSurface, field: &MetricField) -> Vec<Vector3<f64>> {
    let cov = triangle_covectors(s);
    let mut acc = vec![Vector3::zeros(); s.vertices.len()];
    for (t, n) in s.triangles.iter().zip(&cov) {
        for &v in t {
            acc[v] += n;
        }
    }
    acc.iter()
        .zip(&s.vertices)
        .map(|(n, x)| MetricField::unit_from_covector(&field.g(x), n))
        .collect()
}

/// `g`-unit normal of each triangle at its centroid.
pub fn triangle_normals(s: &TriSurface, field: &MetricField) -> Vec<Vector3<f64>> {
    triangle_covectors(s)
        .iter()
        .zip(&s.triangles)
        .map(|(n, t)| {
            let c = t.iter().map(|&v| s.vertices[v]).sum::<Point>() / 3.0;
            MetricField::unit_from_covector(&field.g(&c), n)
        })
        .collect()
}

/// Area density of the face chart, `√det(Uᵀ g U)`.
fn chart_density(field: &MetricField, f: &SideFace, y: &Vector2<f64>) -> f64 {
    let x = f.from_chart(y);
    gram(&field.g(&x), &f.u1, &f.u2).determinant().max(0.0).sqrt()
}

fn chart_density_grad(field: &MetricField, f: &SideFace, y: &Vector2<f64>) -> (f64, Vector2<f64>) {
    let x = f.from_chart(y);
    let gm = gram(&field.g(&x), &f.u1, &f.u2);
    let rho = gm.determinant().max(0.0).sqrt();
    if field.is_flat() {
        return (rho, Vector2::zeros());
    }
    let inv = gm.try_inverse().unwrap_or_else(Matrix2::zeros);
    let mut d = Vector2::zeros();
    for (a, u) in [f.u1, f.u2].iter().enumerate() {
        let dg = field.dg_along(&x, u);
        d[a] = 0.5 * rho * (inv * gram(&dg, &f.u1, &f.u2)).trace();
    }
    (rho, d)
}

/// Quadrature nodes on the reference triangle `{s, t ≥ 0, s + t ≤ 1}`:
/// `m²` sub-triangles with a three-point degree-two rule on each.
fn reference_rule(m: usize) -> Vec<(f64, f64, f64)> {
    let mut q = Vec::with_capacity(3 * m * m);
    let h = 1.0 / m as f64;
    let w = 0.5 * h * h / 3.0;
    let pts = [(1.0 / 6.0, 1.0 / 6.0), (2.0 / 3.0, 1.0 / 6.0), (1.0 / 6.0, 2.0 / 3.0)];
    for i in 0..m {
        for j in 0..(m - i) {
            let (s0, t0) = (i as f64 * h, j as f64 * h);
            for &(a, b) in &pts {
                q.push((s0 + a * h, t0 + b * h, w));
            }
            if i + j + 1 < m {
                let (s1, t1) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
                for &(a, b) in &pts {
                    q.push((s1 - a * h, t1 - b * h, w));
                }
            }
        }
    }
    q
}

const WET_SUBDIV: usize = 4;

/// E-side region of `F_j` in chart coordinates: the contact curve from the
/// corner on `L_{j-1}` to the corner on `L_j`, then the far ends of `L_j`
/// and `L_{j-1}`. Returns the polygon and, per polygon vertex, the mesh
/// vertex it came from.
fn wetted_polygon(
    p: &PolyhedralDomain,
    s: &TriSurface,
    j: usize,
    chain: &[usize],
) -> (Vec<Vector2<f64>>, Vec<Option<usize>>) {
    let k = p.k();
    let f = p.face(j);
    let mut poly: Vec<Vector2<f64>> = chain.iter().map(|&v| f.to_chart(&s.vertices[v])).collect();
    let mut src: Vec<Option<usize>> = chain.iter().map(|&v| Some(v)).collect();
    let (_, far_j) = p.edge(j);
    let (_, far_prev) = p.edge((j + k - 1) % k);
    poly.push(f.to_chart(&far_j));
    src.push(None);
    if p.kind() == DomainKind::Prism {
        poly.push(f.to_chart(&far_prev));
        src.push(None);
    }
    (poly, src)
}

/// Signed integral of `ρ` over the chart triangle `(c0, a, b)` and its
/// gradient in `a` and `b`.
fn fan_integral(
    field: &MetricField,
    f: &SideFace,
    rule: &[(f64, f64, f64)],
    c0: &Vector2<f64>,
    a: &Vector2<f64>,
    b: &Vector2<f64>,
    with_grad: bool,
) -> (f64, Vector2<f64>, Vector2<f64>) {
    let ea = a - c0;
    let eb = b - c0;
    let det = ea.x * eb.y - ea.y * eb.x;
    let mut q = 0.0;
    let mut qa = Vector2::zeros();
    let mut qb = Vector2::zeros();
    for &(s, t, w) in rule {
        let y = c0 + ea * s + eb * t;
        if with_grad {
            let (rho, d) = chart_density_grad(field, f, &y);
            q += w * rho;
            qa += d * (w * s);
            qb += d * (w * t);
        } else {
            q += w * chart_density(field, f, &y);
        }
    }
    let ddet_a = Vector2::new(eb.y, -eb.x);
    let ddet_b = Vector2::new(-ea.y, ea.x);
    (det * q, ddet_a * q + qa * det, ddet_b * q + qb * det)
}

/// `ℋ²(∂E ∩ F_j)` measured in `g`.
pub fn wetted_area(p: &PolyhedralDomain, s: &TriSurface, j: usize, field: &MetricField) -> Result<f64> {
    let chain = s.contact_curve(p.k(), j)?;
    Ok(wetted_area_on_chain(p, s, j, &chain, field))
}

/// [`wetted_area`] with the contact chain of `F_j` supplied.
pub fn wetted_area_on_chain(
    p: &PolyhedralDomain,
    s: &TriSurface,
    j: usize,
    chain: &[usize],
    field: &MetricField,
) -> f64 {
    let (poly, _) = wetted_polygon(p, s, j, chain);
    let f = p.face(j);
    let rule = reference_rule(WET_SUBDIV);
    let c0 = *poly.last().unwrap();
    let mut total = 0.0;
    for i in 0..poly.len() - 1 {
        total += fan_integral(field, f, &rule, &c0, &poly[i], &poly[i + 1], false).0;
    }
    total
}

/// Wetted area of `F_j` and its gradient as `(vertex, 3D covector)` pairs.
pub fn wetted_area_grad(
    p: &PolyhedralDomain,
    s: &TriSurface,
    j: usize,
    field: &MetricField,
) -> Result<(f64, Vec<(usize, Vector3<f64>)>)> {
    let chain = s.contact_curve(p.k(), j)?;
    Ok(wetted_area_grad_on_chain(p, s, j, &chain, field))
}

/// [`wetted_area_grad`] with the contact chain of `F_j` supplied.
pub fn wetted_area_grad_on_chain(
    p: &PolyhedralDomain,
    s: &TriSurface,
    j: usize,
    chain: &[usize],
    field: &MetricField,
) -> (f64, Vec<(usize, Vector3<f64>)>) {
    let (poly, src) = wetted_polygon(p, s, j, chain);
    let f = p.face(j);
    let rule = reference_rule(WET_SUBDIV);
    let c0 = *poly.last().unwrap();
    let mut total = 0.0;
    let mut g2 = vec![Vector2::zeros(); poly.len()];
    for i in 0..poly.len() - 1 {
        let (v, da, db) = fan_integral(field, f, &rule, &c0, &poly[i], &poly[i + 1], true);
        total += v;
        g2[i] += da;
        g2[i + 1] += db;
    }
    let grads = src
        .iter()
        .zip(&g2)
        .filter_map(|(s, g)| s.map(|v| (v, f.u1 * g.x + f.u2 * g.y)))
        .collect();
    (total, grads)
}

/// Per-vertex contact angle `arccos g(N, X)` along the contact curve on `F_j`.
pub fn contact_angles(
    p: &PolyhedralDomain,
    s: &TriSurface,
    j: usize,
    field: &MetricField,
    normals: &[Vector3<f64>],
) -> Result<Vec<(usize, f64)>> {
    let chain = s.contact_curve(p.k(), j)?;
    let f = p.face(j);
    Ok(chain
        .iter()
        .filter(|&&v| s.tags[v] == VertexTag::Face(j))
        .map(|&v| {
            let x = s.vertices[v];
            let g = field.g(&x);
            let xn = MetricField::unit_from_covector(&g, &f.normal);
            let c = MetricField::inner(&g, &normals[v], &xn);
            (v, c.clamp(-1.0, 1.0).acos())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{graph_mesh, horizontal_slice, perturbed};
    use crate::metric::Aabb;

    fn flat() -> MetricField {
        MetricField::flat(Aabb::cube(-2.0, 3.0))
    }

    #[test]
    fn flat_unit_square_area() {
        let p = PolyhedralDomain::unit_cube();
        let s = horizontal_slice(&p, 0.5, 1.0 / 16.0).unwrap();
        assert!((riemannian_area(&s, &flat()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let s = TriSurface::new(
            vec![Point::zeros(), Point::x(), Point::x() * 2.0],
            vec![[0, 1, 2]],
            vec![VertexTag::Interior; 3],
        );
        assert_eq!(riemannian_area(&s, &flat()).unwrap_err(), Error::DegenerateTriangle(0));
    }

    #[test]
    fn conformal_area_converges() {
        let p = PolyhedralDomain::box_prism((-0.5, 0.5), (-0.5, 0.5), 1.0).unwrap();
        let f = MetricField::conformal_gaussian(0.3, 1.0, Point::zeros(), Aabb::cube(-1.0, 2.0));
        let z: f64 = 0.3;
        // tensor Gauss-Legendre oracle of ∫ u⁴ over the square
        let (xs, ws) = gauss_legendre_20();
        let mut oracle = 0.0;
        for (xi, wi) in xs.iter().zip(&ws) {
            for (yj, wj) in xs.iter().zip(&ws) {
                let (x, y) = (0.5 * xi, 0.5 * yj);
                let u = 1.0 + 0.3 * (-(x * x + y * y + z * z)).exp();
                oracle += 0.25 * wi * wj * u.powi(4);
            }
        }
        let e1 = (riemannian_area(&horizontal_slice(&p, z, 0.1).unwrap(), &f).unwrap() - oracle).abs();
        let e2 = (riemannian_area(&horizontal_slice(&p, z, 0.05).unwrap(), &f).unwrap() - oracle).abs();
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    pub(crate) fn gauss_legendre_20() -> (Vec<f64>, Vec<f64>) {
        let n = 20;
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for i in 1..=n {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            xs.push(x);
            ws.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        (xs, ws)
    }

    #[test]
    fn area_gradient_matches_finite_differences() {
        let p = PolyhedralDomain::box_prism((-0.5, 0.5), (-0.5, 0.5), 1.0).unwrap();
        let f = MetricField::shear_perturb(0.2, Point::new(0.1, 0.0, 0.5), Aabb::cube(-1.0, 2.0));
        let s = perturbed(&horizontal_slice(&p, 0.5, 0.25).unwrap(), &p, 0.05);
        let (_, g) = area_gradient(&s, &f).unwrap();
        let e = 1e-6;
        for v in [0, 3, 7] {
            for i in 0..3 {
                let mut sp = s.clone();
                let mut sm = s.clone();
                sp.vertices[v][i] += e;
                sm.vertices[v][i] -= e;
                let fd = (riemannian_area(&sp, &f).unwrap() - riemannian_area(&sm, &f).unwrap()) / (2.0 * e);
                assert!((fd - g[v][i]).abs() < 1e-6, "{fd} vs {}", g[v][i]);
            }
        }
    }

    #[test]
    fn cube_wetted_area_is_apex_side() {
        let p = PolyhedralDomain::unit_cube();
        let s = horizontal_slice(&p, 0.25, 0.1).unwrap();
        for j in 0..4 {
            assert!((wetted_area(&p, &s, j, &flat()).unwrap() - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn cone_wetted_area_exact() {
        let p = PolyhedralDomain::square_cone(1.0).unwrap();
        let s = horizontal_slice(&p, 0.5, 0.1).unwrap();
        // triangle apex (0,0,1), (±1/4, -1/4, 1/2): base 1/2, slant height √5/4
        let exact = 0.5 * 0.5 * 5f64.sqrt() / 4.0;
        for j in 0..4 {
            assert!((wetted_area(&p, &s, j, &flat()).unwrap() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn wetted_gradient_matches_finite_differences() {
        let p = PolyhedralDomain::square_cone(1.0).unwrap();
        let f = MetricField::conformal_gaussian(0.3, 0.8, Point::new(0.1, 0.0, 0.3), Aabb::cube(-1.0, 2.0));
        let s = perturbed(&horizontal_slice(&p, 0.4, 0.2).unwrap(), &p, 0.03);
        let (w, g) = wetted_area_grad(&p, &s, 1, &f).unwrap();
        assert!((w - wetted_area(&p, &s, 1, &f).unwrap()).abs() < 1e-14);
        let e = 1e-6;
        for (v, gv) in g {
            let dir = match s.tags[v] {
                VertexTag::Face(j) => p.face(j).u1 * 0.6 + p.face(j).u2 * 0.8,
                VertexTag::Edge(j) => {
                    let (a, b) = p.edge(j);
                    (b - a).normalize()
                }
                VertexTag::Interior => unreachable!(),
            };
            let mut sp = s.clone();
            let mut sm = s.clone();
            sp.vertices[v] += dir * e;
            sm.vertices[v] -= dir * e;
            let fd = (wetted_area(&p, &sp, 1, &f).unwrap() - wetted_area(&p, &sm, 1, &f).unwrap()) / (2.0 * e);
            assert!((fd - gv.dot(&dir)).abs() < 1e-6, "{fd} vs {}", gv.dot(&dir));
        }
    }

    #[test]
    fn conformal_wetted_area_converges() {
        let p = PolyhedralDomain::box_prism((-0.5, 0.5), (-0.5, 0.5), 1.0).unwrap();
        let f = MetricField::conformal_gaussian(0.3, 1.0, Point::zeros(), Aabb::cube(-1.0, 2.0));
        // face y = -1/2, region z in [0.4, 1]
        let (xs, ws) = gauss_legendre_20();
        let mut oracle = 0.0;
        for (xi, wi) in xs.iter().zip(&ws) {
            for (zj, wj) in xs.iter().zip(&ws) {
                let x = 0.5 * xi;
                let z = 0.7 + 0.3 * zj;
                let u = 1.0 + 0.3 * (-(x * x + 0.25 + z * z)).exp();
                oracle += 0.5 * 0.3 * wi * wj * u.powi(4);
            }
        }
        let s = graph_mesh(&p, 0.4, 0.1, |_, _| 0.4).unwrap();
        let w = wetted_area(&p, &s, 0, &f).unwrap();
        assert!((w - oracle).abs() < 1e-5 * oracle, "{w} vs {oracle}");
    }

    #[test]
    fn contact_angles_of_cone_slice() {
        let p = PolyhedralDomain::square_cone(1.0).unwrap();
        let s = horizontal_slice(&p, 0.5, 0.1).unwrap();
        let n = vertex_normals(&s, &flat());
        for j in 0..4 {
            for (_, a) in contact_angles(&p, &s, j, &flat(), &n).unwrap() {
                assert!((a - 2f64.atan()).abs() < 1e-12);
            }
        }
    }
}
