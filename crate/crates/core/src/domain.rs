//! Cone- and prism-type polyhedra.
//!
//! The base polygon `B` lies in the plane `z = 0` with counterclockwise
//! vertices; the apex (cone) or the top polygon `B₂ = s·B + t` (prism) lies in
//! `z > 0`. Side face `F_j` spans the base edge `b_j → b_{j+1}` and edge `L_j`
//! is `F_j ∩ F_{j+1}`, issuing from `b_{j+1}`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Aabb, MetricField, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Cone,
    Prism,
}

/// JSON form of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub base: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apex: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_offset: Option<[f64; 3]>,
}

/// Planar side face with a 2D chart `x = origin + a·u1 + b·u2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SideFace {
    pub index: usize,
    /// Corners in order: `b_j, b_{j+1}` then apex, or `t_{j+1}, t_j`.
    pub vertices: Vec<Point>,
    /// Euclidean outward unit normal.
    pub normal: Vector3<f64>,
    pub origin: Point,
    pub u1: Vector3<f64>,
    pub u2: Vector3<f64>,
}

impl SideFace {
    pub fn to_chart(&self, x: &Point) -> Vector2<f64> {
        let d = x - self.origin;
        Vector2::new(d.dot(&self.u1), d.dot(&self.u2))
    }

    pub fn from_chart(&self, c: &Vector2<f64>) -> Point {
        self.origin + self.u1 * c.x + self.u2 * c.y
    }

    pub fn chart_polygon(&self) -> Vec<Vector2<f64>> {
        self.vertices.iter().map(|v| self.to_chart(v)).collect()
    }

    /// Signed distance to the face plane, positive outside.
    pub fn plane_distance(&self, x: &Point) -> f64 {
        (x - self.origin).dot(&self.normal)
    }

    /// Euclidean distance from a chart point to the polygon boundary,
    /// negative when outside.
    pub fn inner_distance(&self, c: &Vector2<f64>) -> f64 {
        polygon_inner_distance(&self.chart_polygon(), c)
    }

    pub fn area(&self) -> f64 {
        crate::wedge::polygon_area(&self.vertices)
    }
}

/// Signed distance from `c` to the boundary of a convex CCW polygon.
pub fn polygon_inner_distance(poly: &[Vector2<f64>], c: &Vector2<f64>) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let e = b - a;
        let s = (e.x * (c.y - a.y) - e.y * (c.x - a.x)) / e.norm();
        d = d.min(s);
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAngles {
    /// Base-to-side contact angles `γ_j`.
    pub gamma: Vec<f64>,
    /// Side-to-side dihedral angles `θ'_j` along `L_j`.
    pub theta: Vec<f64>,
    /// Base interior angles `α'_j` at the foot `b_{j+1}` of `L_j`.
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralDomain {
    kind: DomainKind,
    base: Vec<Point>,
    apex: Option<Point>,
    top: Vec<Point>,
    top_scale: f64,
    top_offset: Vector3<f64>,
    faces: Vec<SideFace>,
    scale: f64,
}

impl PolyhedralDomain {
    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        match spec.kind {
            DomainKind::Cone => {
                let a = spec
                    .apex
                    .ok_or_else(|| Error::InvalidDomain("cone needs an apex".into()))?;
                Self::cone(&spec.base, Vector3::from(a))
            }
            DomainKind::Prism => {
                let s = spec
                    .top_scale
                    .ok_or_else(|| Error::InvalidDomain("prism needs top_scale".into()))?;
                let t = spec
                    .top_offset
                    .ok_or_else(|| Error::InvalidDomain("prism needs top_offset".into()))?;
                Self::prism(&spec.base, s, Vector3::from(t))
            }
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: DomainSpec = serde_json::from_str(s)?;
        Self::from_spec(&spec)
    }

    pub fn to_spec(&self) -> DomainSpec {
        DomainSpec {
            kind: self.kind,
            base: self.base.iter().map(|b| [b.x, b.y]).collect(),
            apex: self.apex.map(|a| [a.x, a.y, a.z]),
            top_scale: (self.kind == DomainKind::Prism).then_some(self.top_scale),
            top_offset: (self.kind == DomainKind::Prism)
                .then(|| [self.top_offset.x, self.top_offset.y, self.top_offset.z]),
        }
    }

    pub fn cone(base: &[[f64; 2]], apex: Point) -> Result<Self> {
        let b = check_base(base)?;
        let scale = diameter(b.iter().chain(std::iter::once(&apex)));
        if apex.z <= 1e-12 * scale {
            return Err(Error::InvalidDomain("apex must lie above the base plane".into()));
        }
        let mut d = PolyhedralDomain {
            kind: DomainKind::Cone,
            base: b,
            apex: Some(apex),
            top: Vec::new(),
            top_scale: 0.0,
            top_offset: Vector3::zeros(),
            faces: Vec::new(),
            scale,
        };
        d.build_faces()?;
        Ok(d)
    }

    pub fn prism(base: &[[f64; 2]], top_scale: f64, top_offset: Vector3<f64>) -> Result<Self> {
        let b = check_base(base)?;
        if !(top_scale > 0.0) {
            return Err(Error::InvalidDomain("top_scale must be positive".into()));
        }
        let top: Vec<Point> = b.iter().map(|p| p * top_scale + top_offset).collect();
        let scale = diameter(b.iter().chain(top.iter()));
        if top_offset.z <= 1e-12 * scale {
            return Err(Error::InvalidDomain("top face must lie above the base plane".into()));
        }
        let mut d = PolyhedralDomain {
            kind: DomainKind::Prism,
            base: b,
            apex: None,
            top,
            top_scale,
            top_offset,
            faces: Vec::new(),
            scale,
        };
        d.build_faces()?;
        Ok(d)
    }

    /// Axis-parallel box `[x0,x1]×[y0,y1]×[0,h]` as a prism.
    pub fn box_prism(x: (f64, f64), y: (f64, f64), h: f64) -> Result<Self> {
        Self::prism(
            &[[x.0, y.0], [x.1, y.0], [x.1, y.1], [x.0, y.1]],
            1.0,
            Vector3::new(0.0, 0.0, h),
        )
    }

    /// Unit cube `[0,1]³`.
    pub fn unit_cube() -> Self {
        Self::box_prism((0.0, 1.0), (0.0, 1.0), 1.0).expect("unit cube")
    }

    /// Cone over the unit square centred at the origin with apex `(0,0,h)`.
    pub fn square_cone(h: f64) -> Result<Self> {
        Self::cone(
            &[[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]],
            Vector3::new(0.0, 0.0, h),
        )
    }

    fn build_faces(&mut self) -> Result<()> {
        let k = self.base.len();
        let tol = 1e-12 * self.scale * self.scale;
        let centroid = self.interior_point();
        let mut faces = Vec::with_capacity(k);
        for j in 0..k {
            let b0 = self.base[j];
            let b1 = self.base[(j + 1) % k];
            let vertices = match self.kind {
                DomainKind::Cone => vec![b0, b1, self.apex.unwrap()],
                DomainKind::Prism => vec![b0, b1, self.top[(j + 1) % k], self.top[j]],
            };
            let far = vertices[2];
            let n = (b1 - b0).cross(&(far - b0));
            if 0.5 * n.norm() < tol {
                return Err(Error::DegenerateFace(j));
            }
            let mut n = n.normalize();
            if n.dot(&(centroid - b0)) > 0.0 {
                n = -n;
            }
            let u1 = (b1 - b0).normalize();
            let u2 = n.cross(&u1);
            let u2 = if u2.dot(&(far - b0)) < 0.0 { -u2 } else { u2 };
            let face = SideFace {
                index: j,
                vertices,
                normal: n,
                origin: b0,
                u1,
                u2,
            };
            if face.area() < tol {
                return Err(Error::DegenerateFace(j));
            }
            faces.push(face);
        }
        self.faces = faces;
        Ok(())
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &[Point] {
        &self.base
    }

    pub fn apex(&self) -> Option<Point> {
        self.apex
    }

    pub fn top(&self) -> &[Point] {
        &self.top
    }

    pub fn top_scale(&self) -> f64 {
        self.top_scale
    }

    pub fn top_offset(&self) -> Vector3<f64> {
        self.top_offset
    }

    /// Height of the apex or top face above the base plane.
    pub fn height(&self) -> f64 {
        match self.kind {
            DomainKind::Cone => self.apex.unwrap().z,
            DomainKind::Prism => self.top_offset.z,
        }
    }

    pub fn faces(&self) -> &[SideFace] {
        &self.faces
    }

    pub fn face(&self, j: usize) -> &SideFace {
        &self.faces[j % self.k()]
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Endpoints of `L_j` (base end first).
    pub fn edge(&self, j: usize) -> (Point, Point) {
        let k = self.k();
        let b = self.base[(j + 1) % k];
        match self.kind {
            DomainKind::Cone => (b, self.apex.unwrap()),
            DomainKind::Prism => (b, self.top[(j + 1) % k]),
        }
    }

    pub fn edge_length(&self, j: usize) -> f64 {
        let (a, b) = self.edge(j);
        (b - a).norm()
    }

    pub fn base_centroid(&self) -> Point {
        self.base.iter().sum::<Point>() / self.k() as f64
    }

    fn interior_point(&self) -> Point {
        let c = self.base_centroid();
        match self.kind {
            DomainKind::Cone => c * 0.75 + self.apex.unwrap() * 0.25,
            DomainKind::Prism => {
                let ct = self.top.iter().sum::<Point>() / self.k() as f64;
                (c + ct) * 0.5
            }
        }
    }

    /// Bounding box of the vertices.
    pub fn bbox(&self) -> Aabb {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in self.base.iter().chain(self.top.iter()).chain(self.apex.iter()) {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Aabb::new(lo, hi)
    }

    /// Smallest signed distance to the bounding planes, positive inside.
    pub fn inner_distance(&self, x: &Point) -> f64 {
        let mut d = x.z;
        if self.kind == DomainKind::Prism {
            d = d.min(self.top_offset.z - x.z);
        }
        for f in &self.faces {
            d = d.min(-f.plane_distance(x));
        }
        d
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.inner_distance(x) >= -1e-12 * self.scale
    }

    pub fn model_angles(&self) -> ModelAngles {
        let k = self.k();
        let up = Vector3::z();
        let gamma = self
            .faces
            .iter()
            .map(|f| f.normal.dot(&up).clamp(-1.0, 1.0).acos())
            .collect();
        let theta = (0..k)
            .map(|j| {
                let c = -self.faces[j].normal.dot(&self.faces[(j + 1) % k].normal);
                c.clamp(-1.0, 1.0).acos()
            })
            .collect();
        let alpha = (0..k)
            .map(|j| {
                let v = self.base[(j + 1) % k];
                let a = self.base[j] - v;
                let b = self.base[(j + 2) % k] - v;
                a.angle(&b)
            })
            .collect();
        ModelAngles { gamma, theta, alpha }
    }

    /// Point at Euclidean arclength `s` along `L_j` from its base end.
    pub fn edge_point(&self, j: usize, s: f64) -> Result<Point> {
        let (a, b) = self.edge(j);
        let len = (b - a).norm();
        if !(s >= -1e-12 * len && s <= len * (1.0 + 1e-12)) {
            return Err(Error::InvalidDomain(format!("arclength {s} outside [0, {len}]")));
        }
        Ok(a + (b - a) * (s / len))
    }

    /// Angle `∠(F_j, F_{j+1})` at arclength `s` on `L_j`, measured in `g`
    /// between the face conormals orthogonal to the edge.
    pub fn dihedral_angle(&self, field: &MetricField, j: usize, s: f64) -> Result<f64> {
        let k = self.k();
        let x = self.edge_point(j, s)?;
        let g = field.evaluate(&x)?;
        let (a, b) = self.edge(j);
        let t = b - a;
        let f0 = &self.faces[j % k];
        let f1 = &self.faces[(j + 1) % k];
        let w0 = -f0.normal.cross(&t);
        let w1 = f1.normal.cross(&t);
        Ok(g_angle(&g, &t, &w0, &w1))
    }

    /// Angle between the base `B` and `F_j` at arclength `s` along the base
    /// edge `b_j → b_{j+1}`.
    pub fn base_dihedral_angle(&self, field: &MetricField, j: usize, s: f64) -> Result<f64> {
        let k = self.k();
        let a = self.base[j % k];
        let b = self.base[(j + 1) % k];
        let len = (b - a).norm();
        if !(s >= -1e-12 * len && s <= len * (1.0 + 1e-12)) {
            return Err(Error::InvalidDomain(format!("arclength {s} outside [0, {len}]")));
        }
        let x = a + (b - a) * (s / len);
        let g = field.evaluate(&x)?;
        let t = b - a;
        let f = &self.faces[j % k];
        let wb = Vector3::z().cross(&t);
        let wf = f.u2;
        Ok(g_angle(&g, &t, &wb, &wf))
    }

    /// Per-edge angle hypotheses for contact angles `gammas`, sampling each
    /// edge at `samples` points.
    pub fn check_hypotheses(
        &self,
        field: &MetricField,
        gammas: &[f64],
        samples: usize,
    ) -> Result<HypothesisReport> {
        let k = self.k();
        if gammas.len() != k {
            return Err(Error::InvalidDomain("gamma count must match face count".into()));
        }
        let n = samples.max(2);
        let mut edges = Vec::with_capacity(k);
        for j in 0..k {
            let len = self.edge_length(j);
            let bound = (PI - (gammas[j] + gammas[(j + 1) % k])).abs();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..n {
                let s = len * i as f64 / (n - 1) as f64;
                let a = self.dihedral_angle(field, j, s)?;
                lo = lo.min(a);
                hi = hi.max(a);
            }
            edges.push(EdgeHypothesis {
                edge: j,
                bound,
                min_angle: lo,
                max_angle: hi,
                satisfied: lo > bound && hi < PI,
            });
        }
        let all_le = gammas.iter().all(|&g| g <= PI / 2.0);
        let all_ge = gammas.iter().all(|&g| g >= PI / 2.0);
        Ok(HypothesisReport {
            angle_bound_ok: edges.iter().all(|e| e.satisfied),
            edges,
            all_at_most_right: all_le,
            all_at_least_right: all_ge,
            one_sided_ok: all_le || all_ge,
        })
    }

    /// Mean curvature `div X` of side face `j` at `x` w.r.t. the outward normal.
    pub fn face_mean_curvature(&self, field: &MetricField, j: usize, x: &Point) -> Result<f64> {
        let s = self.face_second_form(field, j, x)?;
        Ok(s.mean_curvature)
    }

    /// Second fundamental form `II(U,V) = g(∇_U X, V)` of side face `j` at
    /// `x`, in the Euclidean chart basis `(u1, u2)`.
    pub fn face_second_form(&self, field: &MetricField, j: usize, x: &Point) -> Result<FaceShape> {
        let f = self.face(j);
        let h = field.h_fd();
        let c = f.to_chart(x);
        if f.inner_distance(&c) < h {
            return Err(Error::StencilClipped([x.x, x.y, x.z]));
        }
        plane_shape(field, &f.normal, x, &[f.u1, f.u2])
    }

    /// Same as [`face_second_form`](Self::face_second_form) for the base,
    /// whose outward normal is `-e_z`.
    pub fn base_second_form(&self, field: &MetricField, x: &Point) -> Result<FaceShape> {
        let h = field.h_fd();
        let poly: Vec<Vector2<f64>> = self.base.iter().map(|b| Vector2::new(b.x, b.y)).collect();
        if polygon_inner_distance(&poly, &Vector2::new(x.x, x.y)) < h {
            return Err(Error::StencilClipped([x.x, x.y, x.z]));
        }
        plane_shape(field, &-Vector3::z(), x, &[Vector3::x(), Vector3::y()])
    }
}

/// Angle at the edge with tangent `t` between in-face directions `w0`, `w1`
/// after `g`-projection orthogonal to `t`.
fn g_angle(g: &Matrix3<f64>, t: &Vector3<f64>, w0: &Vector3<f64>, w1: &Vector3<f64>) -> f64 {
    let ip = |a: &Vector3<f64>, b: &Vector3<f64>| MetricField::inner(g, a, b);
    let tt = ip(t, t);
    let c0 = w0 - t * (ip(w0, t) / tt);
    let c1 = w1 - t * (ip(w1, t) / tt);
    let c = ip(&c0, &c1) / (ip(&c0, &c0) * ip(&c1, &c1)).sqrt();
    c.clamp(-1.0, 1.0).acos()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeHypothesis {
    pub edge: usize,
    /// `|π - (γ_j + γ_{j+1})|`.
    pub bound: f64,
    pub min_angle: f64,
    pub max_angle: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub edges: Vec<EdgeHypothesis>,
    pub angle_bound_ok: bool,
    pub all_at_most_right: bool,
    pub all_at_least_right: bool,
    pub one_sided_ok: bool,
}

/// Shape data of a planar face at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceShape {
    /// `g`-unit outward normal.
    pub normal: Vector3<f64>,
    /// `II(u_a, u_b)` in the Euclidean tangent basis.
    pub second_form: Matrix2<f64>,
    /// `g(u_a, u_b)`.
    pub first_form: Matrix2<f64>,
    pub mean_curvature: f64,
}

impl FaceShape {
    /// `II(U, V)` for tangent vectors given by basis coefficients.
    pub fn form(&self, u: &Vector2<f64>, v: &Vector2<f64>) -> f64 {
        u.dot(&(self.second_form * v))
    }
}

/// Outward `g`-unit normal field of the plane with Euclidean normal `n`.
pub fn unit_normal_field(field: &MetricField, n: &Vector3<f64>, x: &Point) -> Vector3<f64> {
    MetricField::unit_from_covector(&field.g(x), n)
}

/// Shape of the plane with Euclidean normal `n` through `x`, by central
/// differences of its unit normal field along `basis`.
pub fn plane_shape(
    field: &MetricField,
    n: &Vector3<f64>,
    x: &Point,
    basis: &[Vector3<f64>; 2],
) -> Result<FaceShape> {
    let h = field.h_fd();
    let g = field.evaluate(x)?;
    if field.bbox().inner_distance(x) < 2.0 * h {
        return Err(Error::StencilClipped([x.x, x.y, x.z]));
    }
    let nx = unit_normal_field(field, n, x);
    let gam = field.christoffel(x);
    let mut dx = [Vector3::zeros(); 2];
    for a in 0..2 {
        let xp = x + basis[a] * h;
        let xm = x - basis[a] * h;
        let d = (unit_normal_field(field, n, &xp) - unit_normal_field(field, n, &xm)) / (2.0 * h);
        dx[a] = d + MetricField::gamma_apply(&gam, &basis[a], &nx);
    }
    let mut s = Matrix2::zeros();
    let mut gi = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            s[(a, b)] = MetricField::inner(&g, &dx[a], &basis[b]);
            gi[(a, b)] = MetricField::inner(&g, &basis[a], &basis[b]);
        }
    }
    let s = (s + s.transpose()) * 0.5;
    let inv = gi.try_inverse().ok_or(Error::DegenerateFace(0))?;
    let mean = (inv * s).trace();
    Ok(FaceShape {
        normal: nx,
        second_form: s,
        first_form: gi,
        mean_curvature: mean,
    })
}

fn check_base(base: &[[f64; 2]]) -> Result<Vec<Point>> {
    let k = base.len();
    if k < 3 {
        return Err(Error::InvalidDomain("base needs at least 3 vertices".into()));
    }
    let pts: Vec<Point> = base.iter().map(|p| Vector3::new(p[0], p[1], 0.0)).collect();
    let scale = diameter(pts.iter());
    if !(scale > 0.0) || pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidDomain("degenerate base".into()));
    }
    for j in 0..k {
        let a = pts[j];
        let b = pts[(j + 1) % k];
        let c = pts[(j + 2) % k];
        let cr = (b - a).cross(&(c - b)).z;
        if cr <= 1e-12 * scale * scale {
            return Err(Error::InvalidDomain(format!(
                "base must be strictly convex and counterclockwise (vertex {})",
                (j + 1) % k
            )));
        }
    }
    // turning number one rules out star polygons
    let mut turn = 0.0;
    for j in 0..k {
        let a = pts[j];
        let b = pts[(j + 1) % k];
        let c = pts[(j + 2) % k];
        turn += (b - a).angle(&(c - b));
    }
    if (turn - 2.0 * PI).abs() > 1e-9 {
        return Err(Error::InvalidDomain("base polygon winds more than once".into()));
    }
    Ok(pts)
}

fn diameter<'a>(pts: impl Iterator<Item = &'a Point> + Clone) -> f64 {
    let mut d: f64 = 0.0;
    for a in pts.clone() {
        for b in pts.clone() {
            d = d.max((a - b).norm());
        }
    }
    d
}
