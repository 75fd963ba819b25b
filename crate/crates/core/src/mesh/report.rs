//! Discrete curvature measurements: mean curvature, fitted second
//! fundamental form, angle-defect Gauss curvature, boundary turning and
//! corner angles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::measure::{area_gradient, contact_angles, vertex_masses, vertex_normals};
use super::{TriSurface, VertexTag};
use crate::domain::{plane_shape, PolyhedralDomain};
use crate::error::{Error, Result};
use crate::metric::{MetricField, Point};

/// Local quadric `w = p·(s,t) + ½ q(s,t)` over a `g`-orthonormal frame
/// `(e1, e2, N)` at a vertex, with the induced forms in the coordinate
/// basis `X_s = e1 + p1 N`, `X_t = e2 + p2 N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadricFit {
    /// `g`-unit normal of the fitted surface, on the `E` side.
    pub normal: Vector3<f64>,
    pub frame_inv: Matrix3<f64>,
    /// Linear coefficients `p`.
    pub slope: Vector2<f64>,
    /// Quadratic coefficients `q`.
    pub quad: Matrix2<f64>,
    pub first: Matrix2<f64>,
    pub second: Matrix2<f64>,
}

impl QuadricFit {
    /// Coefficients of a tangent vector in the basis `(X_s, X_t)`.
    pub fn coeffs(&self, u: &Vector3<f64>) -> Vector2<f64> {
        let c = self.frame_inv * u;
        Vector2::new(c.x, c.y)
    }

    /// `A(u, v)`.
    pub fn form(&self, u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
        let a = self.coeffs(u);
        let b = self.coeffs(v);
        a.dot(&(self.second * b))
    }

    pub fn mean(&self) -> f64 {
        self.first
            .try_inverse()
            .map(|gi| (gi * self.second).trace())
            .unwrap_or(f64::NAN)
    }

    /// Second fundamental form in a `g`-orthonormal tangent basis.
    pub fn orthonormal(&self) -> Matrix2<f64> {
        match self.first.cholesky() {
            Some(ch) => {
                let li = ch.l().try_inverse().unwrap_or_else(Matrix2::zeros);
                li * self.second * li.transpose()
            }
            None => Matrix2::from_element(f64::NAN),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        let a = self.orthonormal();
        a[(0, 0)].powi(2) + 2.0 * a[(0, 1)].powi(2) + a[(1, 1)].powi(2)
    }

    pub fn det(&self) -> f64 {
        self.orthonormal().determinant()
    }

    /// `g`-orthonormal tangent basis matching [`orthonormal`](Self::orthonormal).
    pub fn tangent_basis(&self) -> [Vector3<f64>; 2] {
        let fi = self.frame_inv.try_inverse().unwrap_or_else(Matrix3::identity);
        let xs = fi * Vector3::new(1.0, 0.0, self.slope.x);
        let xt = fi * Vector3::new(0.0, 1.0, self.slope.y);
        // columns of X·L⁻ᵀ with X = [X_s X_t]
        let li = self
            .first
            .cholesky()
            .and_then(|c| c.l().try_inverse())
            .unwrap_or_else(Matrix2::identity);
        let b0 = xs * li[(0, 0)] + xt * li[(0, 1)];
        let b1 = xs * li[(1, 0)] + xt * li[(1, 1)];
        [b0, b1]
    }
}

fn orthonormal_frame(g: &Matrix3<f64>, n: &Vector3<f64>) -> Matrix3<f64> {
    let ip = |a: &Vector3<f64>, b: &Vector3<f64>| MetricField::inner(g, a, b);
    let mut cands = [Vector3::x(), Vector3::y(), Vector3::z()];
    cands.sort_by(|a, b| ip(a, n).abs().partial_cmp(&ip(b, n).abs()).unwrap());
    let mut e1 = cands[0] - n * ip(&cands[0], n);
    e1 /= ip(&e1, &e1).sqrt();
    let mut e2 = cands[1] - n * ip(&cands[1], n) - e1 * ip(&cands[1], &e1);
    e2 /= ip(&e2, &e2).sqrt();
    Matrix3::from_columns(&[e1, e2, *n])
}

/// Monomials of the local chart fit: through second order, plus third
/// order when the stencil has enough points.
fn chart_terms(m: usize) -> usize {
    if m >= 12 {
        9
    } else {
        5
    }
}

fn chart_row(a: &mut DMatrix<f64>, r: usize, ss: f64, tt: f64) {
    a[(r, 0)] = ss;
    a[(r, 1)] = tt;
    a[(r, 2)] = 0.5 * ss * ss;
    a[(r, 3)] = ss * tt;
    a[(r, 4)] = 0.5 * tt * tt;
    if a.ncols() > 5 {
        a[(r, 5)] = ss * ss * ss / 6.0;
        a[(r, 6)] = 0.5 * ss * ss * tt;
        a[(r, 7)] = 0.5 * ss * tt * tt;
        a[(r, 8)] = tt * tt * tt / 6.0;
    }
}

/// Fit a quadric at vertex `v` through `stencil`, starting from the frame
/// normal `n0`.
pub fn quadric_fit(
    s: &TriSurface,
    field: &MetricField,
    v: usize,
    stencil: &[usize],
    n0: &Vector3<f64>,
) -> Result<QuadricFit> {
    if stencil.len() < 5 {
        return Err(Error::InvalidMesh(format!("quadric stencil at {v} too small")));
    }
    let x = s.vertices[v];
    let g = field.g(&x);
    let frame = orthonormal_frame(&g, n0);
    let finv = frame
        .try_inverse()
        .ok_or_else(|| Error::InvalidMesh("singular frame".into()))?;
    let m = stencil.len();
    let mut a = DMatrix::zeros(m, chart_terms(m));
    let mut b = DVector::zeros(m);
    let mut scale: f64 = 0.0;
    let local: Vec<Vector3<f64>> = stencil.iter().map(|&u| finv * (s.vertices[u] - x)).collect();
    for l in &local {
        scale = scale.max(l.x.abs()).max(l.y.abs());
    }
    for (r, l) in local.iter().enumerate() {
        let (ss, tt) = (l.x / scale, l.y / scale);
        chart_row(&mut a, r, ss, tt);
        b[r] = l.z;
    }
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidMesh(e.to_string()))?;
    let p = Vector2::new(sol[0] / scale, sol[1] / scale);
    let q = Matrix2::new(sol[2], sol[3], sol[3], sol[4]) / (scale * scale);
    let e1 = frame.column(0).into_owned();
    let e2 = frame.column(1).into_owned();
    let nn = frame.column(2).into_owned();
    let xs = e1 + nn * p.x;
    let xt = e2 + nn * p.y;
    let root = (1.0 + p.norm_squared()).sqrt();
    let nrm = (nn - e1 * p.x - e2 * p.y) / root;
    let gam = field.christoffel(&x);
    let basis = [xs, xt];
    let mut second = Matrix2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let c = MetricField::gamma_apply(&gam, &basis[i], &basis[j]);
            second[(i, j)] = q[(i, j)] / root + MetricField::inner(&g, &c, &nrm);
        }
    }
    let first = Matrix2::new(1.0 + p.x * p.x, p.x * p.y, p.x * p.y, 1.0 + p.y * p.y);
    Ok(QuadricFit {
        normal: nrm,
        frame_inv: finv,
        slope: p,
        quad: q,
        first,
        second: (second + second.transpose()) * 0.5,
    })
}

/// Quadratic fit of a vertex function in the chart of a [`QuadricFit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionFit {
    /// Surface gradient `∇^Σ f` as an ambient vector.
    pub gradient: Vector3<f64>,
    /// Laplace–Beltrami `Δ_Σ f` of the induced metric.
    pub laplacian: f64,
}

/// Fit `f` over `stencil` in the chart `(s,t)` of `fit` at vertex `v`.
pub fn fit_function(
    s: &TriSurface,
    field: &MetricField,
    v: usize,
    stencil: &[usize],
    fit: &QuadricFit,
    f: &[f64],
) -> Result<FunctionFit> {
    let x = s.vertices[v];
    let m = stencil.len();
    let local: Vec<Vector3<f64>> = stencil.iter().map(|&u| fit.frame_inv * (s.vertices[u] - x)).collect();
    let scale = local.iter().fold(0.0f64, |a, l| a.max(l.x.abs()).max(l.y.abs()));
    let mut a = DMatrix::zeros(m, chart_terms(m));
    let mut b = DVector::zeros(m);
    for (r, l) in local.iter().enumerate() {
        let (ss, tt) = (l.x / scale, l.y / scale);
        chart_row(&mut a, r, ss, tt);
        b[r] = f[stencil[r]] - f[v];
    }
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidMesh(e.to_string()))?;
    let df = Vector2::new(sol[0] / scale, sol[1] / scale);
    let d2f = Matrix2::new(sol[2], sol[3], sol[3], sol[4]) / (scale * scale);
    let frame = fit.frame_inv.try_inverse().unwrap_or_else(Matrix3::identity);
    let (e1, e2, nn) = (frame.column(0).into_owned(), frame.column(1).into_owned(), frame.column(2).into_owned());
    let xi = [e1 + nn * fit.slope.x, e2 + nn * fit.slope.y];
    let g = field.g(&x);
    let hinv = fit.first.try_inverse().ok_or_else(|| Error::InvalidMesh("degenerate chart".into()))?;
    // dh[k][i][j] = ∂_k h_ij
    let mut dh = [[[0.0; 2]; 2]; 2];
    for k in 0..2 {
        let dg = field.dg_along(&x, &xi[k]);
        for i in 0..2 {
            for j in 0..2 {
                let xki = nn * fit.quad[(k, i)];
                let xkj = nn * fit.quad[(k, j)];
                dh[k][i][j] = MetricField::inner(&dg, &xi[i], &xi[j])
                    + MetricField::inner(&g, &xki, &xi[j])
                    + MetricField::inner(&g, &xi[i], &xkj);
            }
        }
    }
    let mut lap = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let mut gamma_k = Vector2::zeros();
            for k in 0..2 {
                let mut c = 0.0;
                for l in 0..2 {
                    c += 0.5 * hinv[(k, l)] * (dh[i][j][l] + dh[j][i][l] - dh[l][i][j]);
                }
                gamma_k[k] = c;
            }
            lap += hinv[(i, j)] * (d2f[(i, j)] - gamma_k.dot(&df));
        }
    }
    let gc = hinv * df;
    Ok(FunctionFit {
        gradient: xi[0] * gc.x + xi[1] * gc.y,
        laplacian: lap,
    })
}

/// Interior angle of triangle corner `a` with `g` frozen at the centroid.
pub fn triangle_angle(g: &Matrix3<f64>, a: &Point, b: &Point, c: &Point) -> f64 {
    let u = b - a;
    let w = c - a;
    let cs = MetricField::inner(g, &u, &w) / (MetricField::inner(g, &u, &u) * MetricField::inner(g, &w, &w)).sqrt();
    cs.clamp(-1.0, 1.0).acos()
}

/// `g`-length of the straight segment `a → b`, three-point Gauss rule.
pub fn edge_length(field: &MetricField, a: &Point, b: &Point) -> f64 {
    let d = b - a;
    let r = (0.6f64).sqrt() * 0.5;
    [(0.5 - r, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + r, 5.0 / 18.0)]
        .iter()
        .map(|&(t, w)| w * MetricField::inner(&field.g(&(a + d * t)), &d, &d).sqrt())
        .sum()
}

/// Angle opposite side `c` in a triangle with side lengths `a`, `b`, `c`.
fn law_of_cosines(a: f64, b: f64, c: f64) -> f64 {
    ((a * a + b * b - c * c) / (2.0 * a * b)).clamp(-1.0, 1.0).acos()
}

/// Angles of each triangle of the piecewise flat metric given by the
/// `g`-lengths of the mesh edges; every triangle sums to `π`.
pub fn triangle_angles(s: &TriSurface, field: &MetricField) -> Vec<[f64; 3]> {
    let mut len = std::collections::HashMap::new();
    let mut l = |u: usize, v: usize| -> f64 {
        *len.entry((u.min(v), u.max(v)))
            .or_insert_with(|| edge_length(field, &s.vertices[u], &s.vertices[v]))
    };
    s.triangles
        .iter()
        .map(|t| {
            let a = l(t[1], t[2]);
            let b = l(t[2], t[0]);
            let c = l(t[0], t[1]);
            [law_of_cosines(b, c, a), law_of_cosines(c, a, b), law_of_cosines(a, b, c)]
        })
        .collect()
}

/// Sum of incident triangle angles at each vertex.
pub fn angle_sums(s: &TriSurface, field: &MetricField) -> Vec<f64> {
    let mut th = vec![0.0; s.vertices.len()];
    for (t, ang) in s.triangles.iter().zip(triangle_angles(s, field)) {
        for i in 0..3 {
            th[t[i]] += ang[i];
        }
    }
    th
}

fn g_len(field: &MetricField, a: &Point, b: &Point) -> f64 {
    edge_length(field, a, b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryReport {
    /// Mean curvature `tr A` of the quadric fit.
    pub mean_curvature: Vec<f64>,
    /// `-⟨∇Area_v, N_v⟩ / m_v`; meaningful at interior vertices only, where it
    /// is the discrete optimality residual. Converges in the mass-weighted
    /// mean, not pointwise at irregular vertices.
    pub mean_curvature_variational: Vec<f64>,
    /// `(A11, A12, A22)` in a `g`-orthonormal tangent frame.
    pub second_form: Vec<[f64; 3]>,
    pub second_form_norm_sq: Vec<f64>,
    /// Angle-defect density at interior vertices, zero on the boundary.
    pub gauss_curvature: Vec<f64>,
    /// Sectional curvature plus `det A`.
    pub gauss_curvature_fit: Vec<f64>,
    pub vertex_mass: Vec<f64>,
    /// `(vertex, k_g)` along the boundary away from corners.
    pub geodesic_curvature: Vec<(usize, f64)>,
    /// Interior angle at the corner on `L_j`, from incident triangle angles.
    pub corner_angles: Vec<f64>,
    /// Same, from the two boundary chords at the corner.
    pub corner_angles_tangent: Vec<f64>,
    pub euler_characteristic: i64,
    /// `(vertex, γ)` along each side face.
    pub contact_angles: Vec<Vec<(usize, f64)>>,
    pub total_gauss_defect: f64,
    /// `Σ K_fit m_v` over interior vertices; the boundary cells are already
    /// accounted for by the boundary turning.
    pub total_gauss_fit: f64,
    pub total_geodesic_turning: f64,
}

/// Quadric-fit stencil: two rings inside, three at the boundary.
pub fn fit_stencil(s: &TriSurface, nb: &[Vec<usize>], v: usize) -> Vec<usize> {
    let rings = if s.tags[v].is_boundary() { 3 } else { 2 };
    s.ring(nb, v, rings)
}

/// Quadric fits at every vertex.
pub fn fit_all(s: &TriSurface, field: &MetricField) -> Result<Vec<QuadricFit>> {
    let nb = s.neighbors();
    let normals = vertex_normals(s, field);
    (0..s.vertices.len())
        .map(|v| quadric_fit(s, field, v, &fit_stencil(s, &nb, v), &normals[v]))
        .collect()
}

/// Mean curvature at each vertex from the first variation of area,
/// `H_v = -⟨∇Area_v, N_v⟩ / m_v`.
pub fn first_variation_mean_curvature(s: &TriSurface, field: &MetricField) -> Result<Vec<f64>> {
    let (_, grad) = area_gradient(s, field)?;
    let m = vertex_masses(s, field);
    let n = vertex_normals(s, field);
    Ok((0..s.vertices.len()).map(|v| -grad[v].dot(&n[v]) / m[v]).collect())
}

/// Boundary turning `π - Σθ` divided by the `g`-length of the two adjacent
/// half edges, at each non-corner boundary vertex.
pub fn geodesic_curvature(s: &TriSurface, field: &MetricField, sums: &[f64]) -> Result<Vec<(usize, f64)>> {
    let lp = s.boundary_loop()?;
    let n = lp.len();
    let mut out = Vec::new();
    for i in 0..n {
        let v = lp[i];
        if !matches!(s.tags[v], VertexTag::Face(_)) {
            continue;
        }
        let a = s.vertices[lp[(i + n - 1) % n]];
        let b = s.vertices[lp[(i + 1) % n]];
        let x = s.vertices[v];
        let len = 0.5 * (g_len(field, &a, &x) + g_len(field, &x, &b));
        out.push((v, (PI - sums[v]) / len));
    }
    Ok(out)
}

pub fn geometry_report(p: &PolyhedralDomain, s: &TriSurface, field: &MetricField) -> Result<GeometryReport> {
    let k = p.k();
    let nv = s.vertices.len();
    let fits = fit_all(s, field)?;
    let h1 = first_variation_mean_curvature(s, field)?;
    let m = vertex_masses(s, field);
    let sums = angle_sums(s, field);
    let normals = vertex_normals(s, field);
    let mut mean = vec![0.0; nv];
    let mut second = vec![[0.0; 3]; nv];
    let mut nsq = vec![0.0; nv];
    let mut kd = vec![0.0; nv];
    let mut kf = vec![0.0; nv];
    let mut total_defect = 0.0;
    let mut total_fit = 0.0;
    for v in 0..nv {
        let f = &fits[v];
        mean[v] = f.mean();
        let a = f.orthonormal();
        second[v] = [a[(0, 0)], a[(0, 1)], a[(1, 1)]];
        nsq[v] = f.norm_sq();
        if !s.tags[v].is_boundary() {
            let d = 2.0 * PI - sums[v];
            total_defect += d;
            kd[v] = d / m[v];
        }
        let sec = if field.is_flat() {
            0.0
        } else {
            let ct = field.curvature_unchecked(&s.vertices[v]);
            let [b0, b1] = f.tangent_basis();
            ct.riemann_form(&b0, &b1)
        };
        kf[v] = sec + f.det();
        if !s.tags[v].is_boundary() {
            total_fit += kf[v] * m[v];
        }
    }
    let kg = geodesic_curvature(s, field, &sums)?;
    let lp = s.boundary_loop()?;
    let turning: f64 = lp
        .iter()
        .filter(|&&v| matches!(s.tags[v], VertexTag::Face(_)))
        .map(|&v| PI - sums[v])
        .sum();
    let corners = s.corners(k);
    let n = lp.len();
    let mut alpha = Vec::with_capacity(k);
    let mut alpha_t = Vec::with_capacity(k);
    for (j, c) in corners.iter().enumerate() {
        let v = c.ok_or(Error::OpenContactCurve(j))?;
        alpha.push(sums[v]);
        let i = lp.iter().position(|&u| u == v).unwrap();
        let x = s.vertices[v];
        let g = field.g(&x);
        alpha_t.push(triangle_angle(
            &g,
            &x,
            &s.vertices[lp[(i + 1) % n]],
            &s.vertices[lp[(i + n - 1) % n]],
        ));
    }
    let contact = (0..k)
        .map(|j| contact_angles(p, s, j, field, &normals))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeometryReport {
        mean_curvature: mean,
        mean_curvature_variational: h1,
        second_form: second,
        second_form_norm_sq: nsq,
        gauss_curvature: kd,
        gauss_curvature_fit: kf,
        vertex_mass: m,
        geodesic_curvature: kg,
        corner_angles: alpha,
        corner_angles_tangent: alpha_t,
        euler_characteristic: s.euler_characteristic(),
        contact_angles: contact,
        total_gauss_defect: total_defect,
        total_gauss_fit: total_fit,
        total_geodesic_turning: turning,
    })
}

/// `|∫K + ∫k_g + Σ(π-α_j) - 2πχ|` with angle-defect curvature.
pub fn gauss_bonnet_residual(r: &GeometryReport) -> f64 {
    let corners: f64 = r.corner_angles.iter().map(|a| PI - a).sum();
    (r.total_gauss_defect + r.total_geodesic_turning + corners - 2.0 * PI * r.euler_characteristic as f64).abs()
}

/// Same with the Gauss-equation curvature `K_M + det A` integrated by mass.
pub fn gauss_bonnet_residual_fit(r: &GeometryReport) -> f64 {
    let corners: f64 = r.corner_angles.iter().map(|a| PI - a).sum();
    (r.total_gauss_fit + r.total_geodesic_turning + corners - 2.0 * PI * r.euler_characteristic as f64).abs()
}

/// One boundary sample of `II(ν̄,ν̄) + cos γ A(ν,ν) + sin γ k_g - H̄`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundarySample {
    pub vertex: usize,
    pub face: usize,
    pub gamma: f64,
    pub face_form: f64,
    pub surface_form: f64,
    pub geodesic_curvature: f64,
    pub face_mean_curvature: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryIdentity {
    pub samples: Vec<BoundarySample>,
    pub max_residual: f64,
    pub max_mean_curvature: f64,
}

/// Frame and shape data at a face-tagged boundary vertex.
#[derive(Debug, Clone)]
pub struct BoundaryFrame {
    pub vertex: usize,
    pub face: usize,
    /// Outward conormal of `∂Σ` in `Σ`.
    pub nu: Vector3<f64>,
    /// Conormal of `∂Σ` in the face, pointing out of `E`.
    pub nubar: Vector3<f64>,
    pub cos_gamma: f64,
    pub sin_gamma: f64,
    /// `II(ν̄, ν̄)`.
    pub face_form: f64,
    /// `A(ν, ν)`.
    pub surface_form: f64,
    pub face_mean_curvature: f64,
}

/// Boundary frames at every face-tagged vertex, in boundary-loop order.
pub fn boundary_frames(
    p: &PolyhedralDomain,
    s: &TriSurface,
    field: &MetricField,
    fits: &[QuadricFit],
) -> Result<Vec<BoundaryFrame>> {
    let nb = s.neighbors();
    let lp = s.boundary_loop()?;
    let n = lp.len();
    let mut out = Vec::new();
    for i in 0..n {
        let v = lp[i];
        let j = match s.tags[v] {
            VertexTag::Face(j) => j,
            _ => continue,
        };
        let x = s.vertices[v];
        let g = field.g(&x);
        let ip = |a: &Vector3<f64>, b: &Vector3<f64>| MetricField::inner(&g, a, b);
        let unit = |a: Vector3<f64>| a / ip(&a, &a).sqrt();
        let fit = &fits[v];
        let nn = fit.normal;
        let t = {
            let d = s.vertices[lp[(i + 1) % n]] - s.vertices[lp[(i + n - 1) % n]];
            let d = d - nn * ip(&d, &nn);
            unit(d)
        };
        let inner_pts: Vec<usize> = nb[v].iter().copied().filter(|&u| !s.tags[u].is_boundary()).collect();
        let out_dir = if inner_pts.is_empty() {
            -p.face(j).normal
        } else {
            x - inner_pts.iter().map(|&u| s.vertices[u]).sum::<Point>() / inner_pts.len() as f64
        };
        let nu = unit(out_dir - t * ip(&out_dir, &t) - nn * ip(&out_dir, &nn));
        let face = p.face(j);
        let shape = plane_shape(field, &face.normal, &x, &[face.u1, face.u2])?;
        let xn = shape.normal;
        let mn = -nn;
        let nubar = unit(mn - t * ip(&mn, &t) - xn * ip(&mn, &xn));
        let cb = Vector2::new(nubar.dot(&face.u1), nubar.dot(&face.u2));
        out.push(BoundaryFrame {
            vertex: v,
            face: j,
            nu,
            nubar,
            cos_gamma: ip(&nn, &xn),
            sin_gamma: ip(&nu, &xn),
            face_form: shape.form(&cb, &cb),
            surface_form: fit.form(&nu, &nu),
            face_mean_curvature: shape.mean_curvature,
        });
    }
    Ok(out)
}

/// Evaluate the boundary identity at every face vertex of the listed faces
/// (all faces when `faces` is `None`). Requires `max |H| ≤ h_bound` over
/// interior vertices.
pub fn boundary_identity_residual(
    p: &PolyhedralDomain,
    s: &TriSurface,
    field: &MetricField,
    h_bound: f64,
    faces: Option<&[usize]>,
) -> Result<BoundaryIdentity> {
    let h1 = first_variation_mean_curvature(s, field)?;
    let hmax = (0..s.vertices.len())
        .filter(|&v| !s.tags[v].is_boundary())
        .map(|v| h1[v].abs())
        .fold(0.0, f64::max);
    if hmax > h_bound {
        return Err(Error::NotMinimal(hmax));
    }
    let fits = fit_all(s, field)?;
    let sums = angle_sums(s, field);
    let kg: std::collections::HashMap<usize, f64> = geodesic_curvature(s, field, &sums)?.into_iter().collect();
    let mut samples = Vec::new();
    for fr in boundary_frames(p, s, field, &fits)? {
        if faces.is_some_and(|fs| !fs.contains(&fr.face)) {
            continue;
        }
        let k = kg.get(&fr.vertex).copied().unwrap_or(0.0);
        let res = fr.face_form + fr.cos_gamma * fr.surface_form + fr.sin_gamma * k - fr.face_mean_curvature;
        samples.push(BoundarySample {
            vertex: fr.vertex,
            face: fr.face,
            gamma: fr.cos_gamma.clamp(-1.0, 1.0).acos(),
            face_form: fr.face_form,
            surface_form: fr.surface_form,
            geodesic_curvature: k,
            face_mean_curvature: fr.face_mean_curvature,
            residual: res.abs(),
        });
    }
    let max = samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    Ok(BoundaryIdentity {
        samples,
        max_residual: max,
        max_mean_curvature: hmax,
    })
}

/// Oscillation of the unit normal near a corner across refinement levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CornerProbe {
    pub radii: Vec<f64>,
    pub oscillation: Vec<f64>,
    /// Fitted exponent of `osc ~ r^β`; `None` when the oscillation vanishes.
    pub beta: Option<f64>,
}

/// For level `ℓ`, the largest `g`-angle between triangle normals within
/// Euclidean distance `r0·2^{-ℓ}` of the corner on `L_j`, compared with the
/// normal of the triangle nearest the corner.
pub fn corner_regularity_probe(
    p: &PolyhedralDomain,
    levels: &[TriSurface],
    field: &MetricField,
    j: usize,
    r0: f64,
) -> Result<CornerProbe> {
    if levels.len() < 3 {
        return Err(Error::InsufficientLevels(levels.len()));
    }
    let mut radii = Vec::new();
    let mut osc = Vec::new();
    for (l, s) in levels.iter().enumerate() {
        let r = r0 * 0.5f64.powi(l as i32);
        let c = s.corners(p.k())[j % p.k()].ok_or(Error::OpenContactCurve(j))?;
        let xc = s.vertices[c];
        let g = field.g(&xc);
        let normals = super::measure::triangle_normals(s, field);
        let mut near: Vec<(f64, Vector3<f64>)> = s
            .triangles
            .iter()
            .zip(&normals)
            .map(|(t, n)| {
                let ctr = t.iter().map(|&v| s.vertices[v]).sum::<Point>() / 3.0;
                ((ctr - xc).norm(), *n)
            })
            .filter(|(d, _)| *d <= r)
            .collect();
        near.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let reference = near.first().map(|x| x.1).ok_or(Error::InsufficientLevels(l))?;
        let mut o: f64 = 0.0;
        for (_, n) in &near {
            let cs = MetricField::inner(&g, n, &reference) / (MetricField::inner(&g, n, n) * MetricField::inner(&g, &reference, &reference)).sqrt();
            o = o.max(cs.clamp(-1.0, 1.0).acos());
        }
        radii.push(r);
        osc.push(o);
    }
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(&osc)
        .filter(|(_, o)| **o > 1e-12)
        .map(|(r, o)| (r.ln(), o.ln()))
        .collect();
    let beta = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(CornerProbe {
        radii,
        oscillation: osc,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{graph_mesh, horizontal_slice, map_surface, refine, slice_mesh};
    use crate::metric::Aabb;
    use crate::wedge::{plane_from_contact_angles, Wedge};

    fn flat() -> MetricField {
        MetricField::flat(Aabb::cube(-2.0, 3.0))
    }

    fn interior_err<F: Fn(f64, f64) -> f64>(s: &TriSurface, h: &[f64], exact: F, margin: f64) -> f64 {
        (0..s.vertices.len())
            .filter(|&v| !s.tags[v].is_boundary())
            .filter(|&v| {
                let x = s.vertices[v];
                x.x > margin && x.x < 1.0 - margin && x.y > margin && x.y < 1.0 - margin
            })
            .map(|v| (h[v] - exact(s.vertices[v].x, s.vertices[v].y)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn flat_square_slice_is_trivial() {
        let p = PolyhedralDomain::unit_cube();
        let s = horizontal_slice(&p, 0.5, 0.125).unwrap();
        let r = geometry_report(&p, &s, &flat()).unwrap();
        assert!(r.mean_curvature.iter().all(|h| h.abs() < 1e-10));
        assert!(r.second_form_norm_sq.iter().all(|a| a.abs() < 1e-10));
        assert!(r.gauss_curvature.iter().all(|k| k.abs() < 1e-10));
        assert!(r.geodesic_curvature.iter().all(|(_, k)| k.abs() < 1e-10));
        assert!(r.corner_angles.iter().all(|a| (a - PI / 2.0).abs() < 1e-12));
        assert_eq!(r.euler_characteristic, 1);
        assert!(gauss_bonnet_residual(&r) < 1e-12);
    }

    #[test]
    fn cone_slice_corner_angles_sum() {
        let p = PolyhedralDomain::square_cone(1.0).unwrap();
        let s = horizontal_slice(&p, 0.5, 0.1).unwrap();
        let r = geometry_report(&p, &s, &flat()).unwrap();
        let sum: f64 = r.corner_angles.iter().map(|a| PI - a).sum();
        assert!((sum - 2.0 * PI).abs() < 1e-12);
        assert!(gauss_bonnet_residual(&r) < 1e-12);
    }

    #[test]
    fn graph_mean_curvature_converges() {
        let p = PolyhedralDomain::unit_cube();
        let a = 0.1;
        let f = move |x: f64, y: f64| 0.5 + a * (PI * x).sin() * (PI * y).sin();
        let exact = move |x: f64, y: f64| {
            let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
            let fx = a * PI * cx * sy;
            let fy = a * PI * sx * cy;
            let fxx = -a * PI * PI * sx * sy;
            let fyy = fxx;
            let fxy = a * PI * PI * cx * cy;
            let w = (1.0 + fx * fx + fy * fy).sqrt();
            ((1.0 + fy * fy) * fxx - 2.0 * fx * fy * fxy + (1.0 + fx * fx) * fyy) / w.powi(3)
        };
        let mut errs = Vec::new();
        let mut var = Vec::new();
        for h in [0.1, 0.05] {
            let s = graph_mesh(&p, 0.5, h, f).unwrap();
            let r = geometry_report(&p, &s, &flat()).unwrap();
            errs.push(interior_err(&s, &r.mean_curvature, exact, 0.0));
            // variational estimate: mass-weighted mean error
            let (mut num, mut den) = (0.0, 0.0);
            for v in 0..s.vertices.len() {
                if !s.tags[v].is_boundary() {
                    let x = s.vertices[v];
                    num += r.vertex_mass[v] * (r.mean_curvature_variational[v] - exact(x.x, x.y)).abs();
                    den += r.vertex_mass[v];
                }
            }
            var.push(num / den);
        }
        assert!(errs[1] < 0.6 * errs[0], "{errs:?}");
        assert!(var[1] < 0.6 * var[0], "{var:?}");
    }

    #[test]
    fn cylinder_trough() {
        let p = PolyhedralDomain::unit_cube();
        let r0 = 1.5;
        let s = graph_mesh(&p, 0.5, 0.05, move |x, _| 0.5 + r0 - (r0 * r0 - (x - 0.5).powi(2)).sqrt()).unwrap();
        let r = geometry_report(&p, &s, &flat()).unwrap();
        let e = interior_err(&s, &r.mean_curvature, |_, _| 1.0 / r0, 0.1);
        assert!(e < 0.02 * (1.0 / r0), "{e}");
        for (v, k) in &r.geodesic_curvature {
            if matches!(s.tags[*v], VertexTag::Face(1) | VertexTag::Face(3)) {
                assert!(k.abs() < 1e-2, "{k}");
            }
        }
    }

    #[test]
    fn gauss_bonnet_paths() {
        let p = PolyhedralDomain::unit_cube();
        let f = |x: f64, y: f64| 0.5 + 0.1 * (PI * x).sin() * (PI * y).sin();
        let s = graph_mesh(&p, 0.5, 0.1, f).unwrap();
        let mut res = Vec::new();
        let mut cur = s;
        for _ in 0..2 {
            let r = geometry_report(&p, &cur, &flat()).unwrap();
            assert!(gauss_bonnet_residual(&r) < 1e-10);
            res.push(gauss_bonnet_residual_fit(&r));
            cur = map_surface(&refine(&cur, &p), &p, |x| nalgebra::Vector3::new(x.x, x.y, f(x.x, x.y)));
        }
        assert!(res[1] <= 0.6 * res[0], "{res:?}");
    }

    #[test]
    fn sphere_product_sectional_enters_fitted_curvature() {
        let p = PolyhedralDomain::box_prism((-0.3, 0.3), (-0.3, 0.3), 1.0).unwrap();
        let f = MetricField::sphere_product(2.0, 0.0, 0.0, Aabb::cube(-1.0, 2.0));
        let s = horizontal_slice(&p, 0.5, 0.05).unwrap();
        let r = geometry_report(&p, &s, &f).unwrap();
        // horizontal slices are totally geodesic copies of the sphere factor
        let c = s.vertices.iter().position(|x| x.x.abs() < 1e-12 && x.y.abs() < 1e-12).unwrap();
        assert!((r.gauss_curvature_fit[c] - 0.25).abs() < 1e-3, "{}", r.gauss_curvature_fit[c]);
        assert!(r.second_form_norm_sq[c] < 1e-6);
        assert!((r.gauss_curvature[c] - 0.25).abs() < 2e-2, "{}", r.gauss_curvature[c]);
    }

    #[test]
    fn boundary_identity_on_flat_slices() {
        let p = PolyhedralDomain::unit_cube();
        let s = horizontal_slice(&p, 0.5, 0.1).unwrap();
        let b = boundary_identity_residual(&p, &s, &flat(), 1e-8, None).unwrap();
        assert!(b.max_residual < 1e-10);
        let c = PolyhedralDomain::square_cone(1.0).unwrap();
        let s = horizontal_slice(&c, 0.5, 0.05).unwrap();
        let b = boundary_identity_residual(&c, &s, &flat(), 1e-8, None).unwrap();
        assert!(b.max_residual < 1e-8);
        for smp in &b.samples {
            assert!((smp.gamma - 2f64.atan()).abs() < 1e-10);
        }
    }

    #[test]
    fn boundary_identity_catenoid_is_first_order() {
        let p = PolyhedralDomain::box_prism((-0.5, 0.5), (-0.5, 0.5), 1.0).unwrap();
        let cat = |x: f64, y: f64| -0.5 + ((x.cosh()).powi(2) - y * y).sqrt();
        let mut res = Vec::new();
        for h in [0.05, 0.025] {
            let s = graph_mesh(&p, 0.5, h, cat).unwrap();
            let b = boundary_identity_residual(&p, &s, &flat(), 0.5, Some(&[1, 3])).unwrap();
            res.push(b.max_residual);
        }
        assert!(res[1] <= 0.6 * res[0], "{res:?}");
    }

    #[test]
    fn not_minimal_rejected() {
        let p = PolyhedralDomain::unit_cube();
        let s = graph_mesh(&p, 0.5, 0.1, |x, _| 0.5 + 0.2 * x * x).unwrap();
        assert!(matches!(
            boundary_identity_residual(&p, &s, &flat(), 1e-3, None),
            Err(Error::NotMinimal(_))
        ));
    }

    #[test]
    fn corner_probe() {
        let p = PolyhedralDomain::unit_cube();
        let levels: Vec<TriSurface> = [0.2, 0.1, 0.05].iter().map(|&h| horizontal_slice(&p, 0.5, h).unwrap()).collect();
        let r = corner_regularity_probe(&p, &levels, &flat(), 0, 0.4).unwrap();
        assert!(r.oscillation.iter().all(|o| *o < 1e-12));
        assert!(r.beta.is_none());
        assert_eq!(
            corner_regularity_probe(&p, &levels[..1], &flat(), 0, 0.4).unwrap_err(),
            Error::InsufficientLevels(1)
        );
    }

    #[test]
    fn contact_angles_of_wedge_plane() {
        let p = PolyhedralDomain::unit_cube();
        let (a, b) = p.edge(0);
        let w = Wedge::from_normals(p.face(0).normal, p.face(1).normal, b - a).unwrap();
        let (g1, g2) = (1.45, 1.35);
        let nu = plane_from_contact_angles(&w, g1, g2).unwrap();
        let off = nu.dot(&nalgebra::Vector3::new(1.0, 0.0, 0.4));
        let s = slice_mesh(&p, &nu, off, 0.1).unwrap();
        let n = crate::mesh::vertex_normals(&s, &flat());
        for (j, g) in [(0, g1), (1, g2)] {
            for (_, a) in crate::mesh::contact_angles(&p, &s, j, &flat(), &n).unwrap() {
                assert!((a - g).abs() < 1e-10, "{a} vs {g}");
            }
        }
    }
}
