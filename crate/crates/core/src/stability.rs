//! Second variation of the capillary energy, its spectrum, infinitesimal
//! rigidity and the comparison inequality chain.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::domain::{plane_shape, ModelAngles, PolyhedralDomain};
use crate::error::{Error, Result};
use crate::mesh::{
    boundary_frames, edge_length, first_variation_mean_curvature, fit_all, geometry_report,
    triangle_area, QuadricFit, TriSurface, VertexTag,
};
use crate::metric::{MetricField, Point};
use crate::solver::{mesh_size, minimize, SolverOptions};
use crate::sparse::Csr;

#[derive(Debug, Clone)]
pub struct StabilityOperator {
    /// Dirichlet energy `∫|∇f|²` on piecewise-linear functions.
    pub stiffness: Csr,
    /// Lumped mass.
    pub mass: Vec<f64>,
    /// `|A|² + Ric(N,N)` per vertex.
    pub potential: Vec<f64>,
    /// `Q` per face-tagged boundary vertex.
    pub robin_coefficient: Vec<(usize, f64)>,
    /// Lumped `∫_{∂Σ} Q φ_v` per vertex.
    pub robin: Vec<f64>,
    /// Part of `robin` carried by corner vertices.
    pub corner_robin: f64,
}

impl StabilityOperator {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// `K - diag(m V + b)`, the matrix of the quadratic form.
    pub fn matrix(&self) -> Csr {
        let d: Vec<f64> = (0..self.n())
            .map(|v| self.mass[v] * self.potential[v] + self.robin[v])
            .collect();
        self.stiffness.add(1.0, &Csr::diagonal(&d), -1.0)
    }

    /// `∫|∇f|² - ∫ V f² - ∫_{∂Σ} Q f²`.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        let mut q = self.stiffness.quad(f);
        for v in 0..self.n() {
            q -= (self.mass[v] * self.potential[v] + self.robin[v]) * f[v] * f[v];
        }
        q
    }

    /// Same operator with `V + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut o = self.clone();
        o.potential.iter_mut().for_each(|v| *v += c);
        o
    }

    /// Pure Neumann Laplacian on the same mesh.
    pub fn neumann(&self) -> Self {
        let mut o = self.clone();
        o.potential.iter_mut().for_each(|v| *v = 0.0);
        o.robin.iter_mut().for_each(|v| *v = 0.0);
        o.robin_coefficient.iter_mut().for_each(|(_, q)| *q = 0.0);
        o.corner_robin = 0.0;
        o
    }
}

/// Piecewise-linear stiffness with the metric frozen at each centroid.
pub fn stiffness_matrix(s: &TriSurface, field: &MetricField) -> Csr {
    let mut t = Vec::with_capacity(9 * s.triangles.len());
    for tri in &s.triangles {
        let [a, b, c] = tri.map(|v| s.vertices[v]);
        let g = field.g(&((a + b + c) / 3.0));
        let e = [b - a, c - a];
        let ip = |u: &Vector3<f64>, w: &Vector3<f64>| MetricField::inner(&g, u, w);
        let gram = nalgebra::Matrix2::new(ip(&e[0], &e[0]), ip(&e[0], &e[1]), ip(&e[1], &e[0]), ip(&e[1], &e[1]));
        let det = gram.determinant();
        if !(det > 0.0) {
            continue;
        }
        let area = 0.5 * det.sqrt();
        let ginv = gram.try_inverse().unwrap();
        let d = [Vector2::new(-1.0, -1.0), Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)];
        for i in 0..3 {
            for j in 0..3 {
                t.push((tri[i], tri[j], area * d[i].dot(&(ginv * d[j]))));
            }
        }
    }
    Csr::from_triplets(s.vertices.len(), t)
}

/// Assemble the second-variation form at `s` for contact angles `gamma`.
/// `h_tol` bounds the interior mean curvature accepted as minimal.
pub fn assemble(
    p: &PolyhedralDomain,
    s: &TriSurface,
    field: &MetricField,
    gamma: &[f64],
    h_tol: f64,
) -> Result<StabilityOperator> {
    let nv = s.vertices.len();
    let h1 = first_variation_mean_curvature(s, field)?;
    let hmax = (0..nv)
        .filter(|&v| !s.tags[v].is_boundary())
        .map(|v| h1[v].abs())
        .fold(0.0, f64::max);
    if hmax > h_tol {
        return Err(Error::NotMinimal(hmax));
    }
    let fits = fit_all(s, field)?;
    let mut mass = vec![0.0; nv];
    for t in &s.triangles {
        let [a, b, c] = t.map(|v| s.vertices[v]);
        let ar = triangle_area(field, &a, &b, &c) / 3.0;
        for &v in t {
            mass[v] += ar;
        }
    }
    let potential = potential(s, field, &fits)?;
    let mut q = vec![None; nv];
    let mut robin_coefficient = Vec::new();
    for fr in boundary_frames(p, s, field, &fits)? {
        let g = gamma[fr.face];
        let val = fr.face_form / g.sin() + fr.surface_form / g.tan();
        q[fr.vertex] = Some(val);
        robin_coefficient.push((fr.vertex, val));
    }
    let mut robin = vec![0.0; nv];
    let mut corner_robin = 0.0;
    let lp = s.boundary_loop()?;
    for i in 0..lp.len() {
        let (u, w) = (lp[i], lp[(i + 1) % lp.len()]);
        let ends: Vec<f64> = [q[u], q[w]].into_iter().flatten().collect();
        if ends.is_empty() {
            continue;
        }
        let qs = ends.iter().sum::<f64>() / ends.len() as f64;
        let half = 0.5 * edge_length(field, &s.vertices[u], &s.vertices[w]) * qs;
        for v in [u, w] {
            robin[v] += half;
            if matches!(s.tags[v], VertexTag::Edge(_)) {
                corner_robin += half;
            }
        }
    }
    Ok(StabilityOperator {
        stiffness: stiffness_matrix(s, field),
        mass,
        potential,
        robin_coefficient,
        robin,
        corner_robin,
    })
}

fn potential(s: &TriSurface, field: &MetricField, fits: &[QuadricFit]) -> Result<Vec<f64>> {
    (0..s.vertices.len())
        .map(|v| {
            let a2 = fits[v].norm_sq();
            if field.is_flat() {
                return Ok(a2);
            }
            let ct = field.curvature_at(&s.vertices[v])?;
            Ok(a2 + ct.ricci_form(&fits[v].normal))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub value: f64,
    /// Mass-normalized, positive mean.
    pub vector: Vec<f64>,
    /// `‖(K - λM)φ‖ / ‖Mφ‖`.
    pub residual: f64,
    pub iterations: usize,
}

struct Reduced {
    b: DMatrix<f64>,
    sqrt_m: Vec<f64>,
}

fn reduce(op: &StabilityOperator) -> Result<Reduced> {
    let n = op.n();
    if op.mass.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::SolverBreakdown("mass matrix not positive".into()));
    }
    let a = op.matrix();
    let sqrt_m: Vec<f64> = op.mass.iter().map(|m| m.sqrt()).collect();
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.col[k];
            b[(i, j)] = a.val[k] / (sqrt_m[i] * sqrt_m[j]);
        }
    }
    let b = (&b + b.transpose()) * 0.5;
    Ok(Reduced { b, sqrt_m })
}

fn gershgorin_lower(b: &DMatrix<f64>) -> f64 {
    (0..b.nrows())
        .map(|i| {
            let off: f64 = (0..b.ncols()).filter(|&j| j != i).map(|j| b[(i, j)].abs()).sum();
            b[(i, i)] - off
        })
        .fold(f64::INFINITY, f64::min)
}

fn deflate(x: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for q in basis {
        let c = q.dot(x);
        x.axpy(-c, q, 1.0);
    }
}

fn start_vector(n: usize, basis: &[DVector<f64>]) -> DVector<f64> {
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.3 * (0.7 * i as f64).sin() + 0.2 * (1.3 * i as f64).cos());
    deflate(&mut x, basis);
    x.normalize()
}

enum Factor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn solve(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Factor::Chol(c) => Some(c.solve(x)),
            Factor::Lu(l) => l.solve(x),
        }
    }
}

fn shifted(b: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let mut m = b.clone();
    for i in 0..m.nrows() {
        m[(i, i)] -= sigma;
    }
    m
}

/// Inverse iteration with a fixed factorization; returns `(λ, ψ, iters, converged)`.
fn iterate(
    b: &DMatrix<f64>,
    f: &Factor,
    x0: DVector<f64>,
    basis: &[DVector<f64>],
    max_iter: usize,
    tol: f64,
) -> Result<(f64, DVector<f64>, usize, bool)> {
    let mut x = x0;
    let mut lam = x.dot(&(b * &x));
    for it in 1..=max_iter {
        let mut y = f
            .solve(&x)
            .ok_or_else(|| Error::SolverBreakdown("singular shift".into()))?;
        deflate(&mut y, basis);
        let ny = y.norm();
        if !(ny.is_finite() && ny > 0.0) {
            return Err(Error::SolverBreakdown("singular shift".into()));
        }
        x = y / ny;
        let bx = b * &x;
        lam = x.dot(&bx);
        let r = (bx - &x * lam).norm();
        if r < tol {
            return Ok((lam, x, it, true));
        }
    }
    Ok((lam, x, max_iter, false))
}

/// Eigenpair of `B` above the span of `basis` by shifted inverse iteration.
/// The shift is raised toward the Rayleigh quotient while the shifted matrix
/// stays positive definite (checked by Cholesky).
fn smallest(r: &Reduced, basis: &[DVector<f64>]) -> Result<(f64, DVector<f64>, usize)> {
    let b = &r.b;
    let n = b.nrows();
    let tol = (1e-14 * b.amax()).max(1e-11);
    let mut sigma = gershgorin_lower(b) - 1.0;
    let mut fac = match shifted(b, sigma).cholesky() {
        Some(c) => Factor::Chol(c),
        None => {
            sigma -= 1.0 + sigma.abs();
            Factor::Chol(
                shifted(b, sigma)
                    .cholesky()
                    .ok_or_else(|| Error::SolverBreakdown("no positive shift found".into()))?,
            )
        }
    };
    let mut x = start_vector(n, basis);
    let mut total = 0;
    let mut lam = f64::NAN;
    for _round in 0..60 {
        let (l, y, it, done) = iterate(b, &fac, x, basis, 8, tol)?;
        total += it;
        x = y;
        lam = l;
        if done {
            return Ok((lam, x, total));
        }
        let gap = lam - sigma;
        if gap <= 1e-9 * (1.0 + lam.abs()) {
            break;
        }
        let trial = sigma + 0.5 * gap;
        let m = shifted(b, trial);
        let next = if basis.is_empty() {
            m.cholesky().map(Factor::Chol)
        } else {
            Some(Factor::Lu(m.lu()))
        };
        if let Some(nf) = next {
            fac = nf;
            sigma = trial;
        }
    }
    let (l, y, it, done) = iterate(b, &fac, x, basis, 2000, tol)?;
    total += it;
    if !done {
        let r = (b * &y - &y * l).norm();
        if r > 1e-9 {
            return Err(Error::NoConvergence(format!("eigen residual {r:e} (λ≈{lam})")));
        }
    }
    Ok((l, y, total))
}

fn finish(op: &StabilityOperator, r: &Reduced, lam: f64, psi: &DVector<f64>, iters: usize) -> Eigenpair {
    let mut phi: Vec<f64> = psi.iter().zip(&r.sqrt_m).map(|(p, s)| p / s).collect();
    let mean: f64 = phi.iter().zip(&op.mass).map(|(f, m)| f * m).sum();
    if mean < 0.0 {
        phi.iter_mut().for_each(|f| *f = -*f);
    }
    let a = op.matrix();
    let kphi = a.mul(&phi);
    let res: f64 = kphi
        .iter()
        .zip(&phi)
        .zip(&op.mass)
        .map(|((k, f), m)| (k - lam * m * f).powi(2))
        .sum::<f64>()
        .sqrt();
    let mphi: f64 = phi.iter().zip(&op.mass).map(|(f, m)| (m * f).powi(2)).sum::<f64>().sqrt();
    Eigenpair {
        value: lam,
        vector: phi,
        residual: res / mphi,
        iterations: iters,
    }
}

/// Smallest generalized eigenpair of the second-variation form.
pub fn min_eigenvalue(op: &StabilityOperator) -> Result<Eigenpair> {
    let r = reduce(op)?;
    let (lam, psi, it) = smallest(&r, &[])?;
    Ok(finish(op, &r, lam, &psi, it))
}

/// First two eigenpairs; the second by deflation of the first.
pub fn lowest_two(op: &StabilityOperator) -> Result<(Eigenpair, Eigenpair)> {
    let r = reduce(op)?;
    let (l1, p1, i1) = smallest(&r, &[])?;
    let (l2, p2, i2) = smallest(&r, std::slice::from_ref(&p1))?;
    Ok((finish(op, &r, l1, &p1, i1), finish(op, &r, l2, &p2, i2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityCertificate {
    pub scalar_curvature: f64,
    pub second_form: f64,
    pub face_mean_curvature: f64,
    pub corner_angle: f64,
    pub ricci_normal: f64,
    pub gauss_curvature: f64,
    pub geodesic_curvature: f64,
}

impl RigidityCertificate {
    pub fn max_residual(&self) -> f64 {
        [
            self.scalar_curvature,
            self.second_form,
            self.face_mean_curvature,
            self.corner_angle,
            self.ricci_normal,
            self.gauss_curvature,
            self.geodesic_curvature,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        self.max_residual() < tol
    }
}

/// Max residuals of the infinitesimal rigidity equations at `s`.
pub fn rigidity_certificate(
    p: &PolyhedralDomain,
    s: &TriSurface,
    field: &MetricField,
    model: &ModelAngles,
) -> Result<RigidityCertificate> {
    let rep = geometry_report(p, s, field)?;
    let fits = fit_all(s, field)?;
    let mut cert = RigidityCertificate {
        scalar_curvature: 0.0,
        second_form: rep.second_form_norm_sq.iter().map(|a| a.sqrt()).fold(0.0, f64::max),
        face_mean_curvature: 0.0,
        corner_angle: rep
            .corner_angles
            .iter()
            .zip(&model.alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        ricci_normal: 0.0,
        gauss_curvature: rep.gauss_curvature.iter().map(|k| k.abs()).fold(0.0, f64::max),
        geodesic_curvature: rep.geodesic_curvature.iter().map(|(_, k)| k.abs()).fold(0.0, f64::max),
    };
    if !field.is_flat() {
        for (v, x) in s.vertices.iter().enumerate() {
            let ct = field.curvature_at(x)?;
            cert.scalar_curvature = cert.scalar_curvature.max(ct.scalar.abs());
            cert.ricci_normal = cert.ricci_normal.max(ct.ricci_form(&fits[v].normal).abs());
        }
    }
    for fr in boundary_frames(p, s, field, &fits)? {
        cert.face_mean_curvature = cert.face_mean_curvature.max(fr.face_mean_curvature.abs());
    }
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonVerdict {
    Consistent,
    CounterexampleFlag,
}

/// Numeric sides of each step of the comparison argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonLedger {
    pub metric: String,
    pub h: f64,
    pub tol: f64,
    pub min_scalar_curvature: f64,
    pub min_face_mean_curvature: f64,
    pub energy: f64,
    pub converged: bool,
    pub lambda_min: f64,
    /// `-∫(|A|² + Ric(N,N)) - ∫_{∂Σ} Q`, the form at `f = 1`.
    pub form_at_one: f64,
    /// Corner-vertex share of the boundary term in `form_at_one`.
    pub form_at_one_corner: f64,
    /// `max |½(R - 2K_Σ + |A|²) - (|A|² + Ric(N,N))|` over interior vertices.
    pub gauss_equation_residual: f64,
    pub integral_gauss: f64,
    pub integral_geodesic: f64,
    pub corner_sum: f64,
    pub model_corner_sum: f64,
    pub euler_characteristic: i64,
    pub gauss_bonnet_residual: f64,
    /// `∫½(R + |A|²)`.
    pub curvature_term: f64,
    /// `Σ_j ∫_{∂Σ∩F_j} H̄ / sin γ_j`.
    pub boundary_term: f64,
    /// `curvature_term + boundary_term`.
    pub l_value: f64,
    pub verdict: ComparisonVerdict,
}

/// Sample points inside the domain: an `n³` grid in barycentric-like
/// coordinates between base points and the apex/top.
pub fn interior_samples(p: &PolyhedralDomain, n: usize) -> Vec<Point> {
    let c = p.base_centroid();
    let mut out = Vec::new();
    let k = p.k();
    for a in 0..n {
        let t = (a as f64 + 0.5) / n as f64;
        for j in 0..k {
            for b in 0..n {
                let r = (b as f64 + 0.5) / n as f64;
                let (e0, e1) = p.edge(j);
                let lo = c + (e0 - c) * r;
                let hi_c = match p.apex() {
                    Some(ap) => ap,
                    None => c + p.top_offset(),
                };
                let hi = hi_c + (e1 - hi_c) * r;
                let x = lo + (hi - lo) * t;
                if p.inner_distance(&x) > 0.0 {
                    out.push(x);
                }
            }
        }
    }
    out
}

/// Minimum `H̄` over interior sample points of the side faces.
pub fn min_face_mean_curvature(p: &PolyhedralDomain, field: &MetricField, n: usize) -> Result<f64> {
    let mut m = f64::INFINITY;
    for j in 0..p.k() {
        let f = p.face(j);
        let poly = f.chart_polygon();
        let c = poly.iter().sum::<Vector2<f64>>() / poly.len() as f64;
        for a in 0..n {
            for b in 0..poly.len() {
                let r = (a as f64 + 0.5) / n as f64 * 0.9;
                let q = c + (poly[b] - c) * r;
                let x = f.from_chart(&q);
                match p.face_mean_curvature(field, j, &x) {
                    Ok(h) => m = m.min(h),
                    Err(Error::StencilClipped(..)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(m)
}

/// Solve for the minimizer from `init`, check the comparison hypotheses and
/// evaluate each quantity of the inequality chain.
pub fn comparison_verdict(
    p: &PolyhedralDomain,
    field: &MetricField,
    gamma: &[f64],
    init: &TriSurface,
    opts: &SolverOptions,
) -> Result<ComparisonLedger> {
    let samples = interior_samples(p, 4);
    let sign = field.verify_scalar_sign(&samples, 1e-8)?;
    if !sign.pass {
        return Err(Error::HypothesisFailed("scalar curvature".into()));
    }
    let hmin = min_face_mean_curvature(p, field, 3)?;
    if hmin < -1e-8 {
        return Err(Error::HypothesisFailed("face mean convexity".into()));
    }
    let hyp = p.check_hypotheses(field, gamma, 5)?;
    if !hyp.angle_bound_ok {
        return Err(Error::HypothesisFailed("dihedral angle bound".into()));
    }
    let (s, rep) = minimize(p, field, gamma, init, opts)?;
    let h = mesh_size(&s);
    let tol = 10.0 * h;
    let geo = geometry_report(p, &s, field)?;
    let op = assemble(p, &s, field, gamma, f64::INFINITY)?;
    let lambda_min = min_eigenvalue(&op)?.value;
    let ones = vec![1.0; s.vertices.len()];
    let form_at_one = op.quadratic_form(&ones);
    let fits = fit_all(&s, field)?;
    let mut curvature_term = 0.0;
    let mut ge_res: f64 = 0.0;
    for (v, x) in s.vertices.iter().enumerate() {
        let (r, ric) = if field.is_flat() {
            (0.0, 0.0)
        } else {
            let ct = field.curvature_at(x)?;
            (ct.scalar, ct.ricci_form(&fits[v].normal))
        };
        let a2 = geo.second_form_norm_sq[v];
        curvature_term += 0.5 * (r + a2) * geo.vertex_mass[v];
        if !s.tags[v].is_boundary() {
            let lhs = 0.5 * (r - 2.0 * geo.gauss_curvature_fit[v] + a2);
            ge_res = ge_res.max((lhs - (a2 + ric)).abs());
        }
    }
    let boundary_term = boundary_mean_curvature_integral(p, &s, field, gamma)?;
    let corner_sum: f64 = geo.corner_angles.iter().map(|a| PI - a).sum();
    let model_corner_sum: f64 = p.model_angles().alpha.iter().map(|a| PI - a).sum();
    let integral_geodesic = geo.total_geodesic_turning;
    let integral_gauss = geo.total_gauss_defect;
    let gb = (integral_gauss + integral_geodesic + corner_sum - 2.0 * PI * geo.euler_characteristic as f64).abs();
    let l_value = curvature_term + boundary_term;
    Ok(ComparisonLedger {
        metric: field.name().to_string(),
        h,
        tol,
        min_scalar_curvature: sign.min_scalar,
        min_face_mean_curvature: hmin,
        energy: rep.energy,
        converged: rep.converged,
        lambda_min,
        form_at_one,
        form_at_one_corner: -op.corner_robin,
        gauss_equation_residual: ge_res,
        integral_gauss,
        integral_geodesic,
        corner_sum,
        model_corner_sum,
        euler_characteristic: geo.euler_characteristic,
        gauss_bonnet_residual: gb,
        curvature_term,
        boundary_term,
        l_value,
        verdict: if l_value >= -tol {
            ComparisonVerdict::Consistent
        } else {
            ComparisonVerdict::CounterexampleFlag
        },
    })
}

/// `Σ_j ∫_{∂Σ∩F_j} H̄ / sin γ_j` by the trapezoid rule on boundary segments.
pub fn boundary_mean_curvature_integral(
    p: &PolyhedralDomain,
    s: &TriSurface,
    field: &MetricField,
    gamma: &[f64],
) -> Result<f64> {
    let k = p.k();
    let lp = s.boundary_loop()?;
    let mut total = 0.0;
    for i in 0..lp.len() {
        let (u, w) = (lp[i], lp[(i + 1) % lp.len()]);
        let j = segment_face(k, s.tags[u], s.tags[w])?;
        let f = p.face(j);
        let hb = |x: &Point| -> Result<f64> {
            if field.is_flat() {
                return Ok(0.0);
            }
            Ok(plane_shape(field, &f.normal, x, &[f.u1, f.u2])?.mean_curvature)
        };
        let (xu, xw) = (s.vertices[u], s.vertices[w]);
        let len = edge_length(field, &xu, &xw);
        total += 0.5 * len * (hb(&xu)? + hb(&xw)?) / gamma[j].sin();
    }
    Ok(total)
}

/// Face containing the boundary segment between two boundary vertices.
pub fn segment_face(k: usize, a: VertexTag, b: VertexTag) -> Result<usize> {
    match (a, b) {
        (VertexTag::Face(j), _) | (_, VertexTag::Face(j)) => Ok(j),
        (VertexTag::Edge(x), VertexTag::Edge(y)) if (x + 1) % k == y => Ok(y),
        (VertexTag::Edge(x), VertexTag::Edge(y)) if (y + 1) % k == x => Ok(x),
        _ => Err(Error::InvalidMesh("boundary segment not on a face".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{horizontal_slice, refine};
    use crate::metric::Aabb;
    use crate::solver::energy;
    use std::f64::consts::FRAC_PI_2;

    fn flat() -> MetricField {
        MetricField::flat(Aabb::cube(-1.0, 2.0))
    }

    #[test]
    fn flat_slices_are_neumann() {
        let cube = PolyhedralDomain::unit_cube();
        let s = horizontal_slice(&cube, 0.5, 0.125).unwrap();
        let op = assemble(&cube, &s, &flat(), &[FRAC_PI_2; 4], 1e-8).unwrap();
        assert!(op.stiffness.is_symmetric(1e-14));
        assert!(op.potential.iter().all(|v| v.abs() < 1e-10));
        assert!(op.robin.iter().all(|v| v.abs() < 1e-10));
        let e = min_eigenvalue(&op).unwrap();
        assert!(e.value.abs() < 1e-8, "{}", e.value);
        assert!(e.residual < 1e-9);
        let mean = e.vector.iter().sum::<f64>() / e.vector.len() as f64;
        assert!(e.vector.iter().all(|f| ((f - mean) / mean).abs() < 1e-6));
        let shifted = min_eigenvalue(&op.shifted(0.7)).unwrap();
        assert!((shifted.value + 0.7).abs() < 1e-8);
        assert!(op.quadratic_form(&vec![1.0; s.vertices.len()]).abs() < 1e-8);

        let cone = PolyhedralDomain::square_cone(1.0).unwrap();
        let s = horizontal_slice(&cone, 0.5, 0.1).unwrap();
        let op = assemble(&cone, &s, &flat(), &cone.model_angles().gamma, 1e-8).unwrap();
        assert!(op.robin_coefficient.iter().all(|(_, q)| q.abs() < 1e-8));
        assert!(min_eigenvalue(&op).unwrap().value.abs() < 1e-8);
    }

    #[test]
    fn neumann_square_second_eigenvalue() {
        let cube = PolyhedralDomain::unit_cube();
        let mut errs = Vec::new();
        let mut s = horizontal_slice(&cube, 0.5, 0.25).unwrap();
        for _ in 0..3 {
            let op = assemble(&cube, &s, &flat(), &[FRAC_PI_2; 4], 1e-8).unwrap();
            let (e1, e2) = lowest_two(&op).unwrap();
            assert!(e1.value.abs() < 1e-8);
            assert!(e2.residual < 1e-9);
            errs.push((e2.value - PI * PI).abs());
            s = refine(&s, &cube);
        }
        assert!(errs[2] < 0.35 * errs[1] && errs[1] < 0.35 * errs[0], "{errs:?}");
    }

    #[test]
    fn form_matches_energy_second_difference() {
        let cube = PolyhedralDomain::unit_cube();
        let s = horizontal_slice(&cube, 0.5, 0.1).unwrap();
        let g = [FRAC_PI_2; 4];
        let op = assemble(&cube, &s, &flat(), &g, 1e-8).unwrap();
        let f0 = energy(&cube, &s, &flat(), &g).unwrap();
        let eps = 1e-3;
        for (a, b) in [(1.0, 0.0), (0.0, 2.0), (1.5, 1.0), (3.0, -2.0)] {
            let f: Vec<f64> = s
                .vertices
                .iter()
                .map(|x| (PI * a * x.x).cos() * (PI * b * x.y).cos() + 0.3 * x.x)
                .collect();
            let mv = |sg: f64| {
                let mut t = s.clone();
                for (x, fv) in t.vertices.iter_mut().zip(&f) {
                    x.z += sg * eps * fv;
                }
                energy(&cube, &t, &flat(), &g).unwrap()
            };
            let d2 = (mv(1.0) - 2.0 * f0 + mv(-1.0)) / (eps * eps);
            let q = op.quadratic_form(&f);
            assert!((d2 - q).abs() < 0.03 * q.abs(), "{d2} vs {q}");
        }
    }

    #[test]
    fn rigidity_of_flat_slices() {
        let cube = PolyhedralDomain::unit_cube();
        let s = horizontal_slice(&cube, 0.5, 0.125).unwrap();
        let c = rigidity_certificate(&cube, &s, &flat(), &cube.model_angles()).unwrap();
        assert!(c.is_rigid(1e-8), "{c:?}");
        let cone = PolyhedralDomain::square_cone(1.0).unwrap();
        let s = horizontal_slice(&cone, 0.5, 0.1).unwrap();
        let c = rigidity_certificate(&cone, &s, &flat(), &cone.model_angles()).unwrap();
        assert!(c.is_rigid(1e-8), "{c:?}");
        let f = MetricField::conformal_gaussian(0.2, 0.5, Vector3::new(0.5, 0.5, 0.5), Aabb::cube(-1.0, 2.0));
        let s = horizontal_slice(&cube, 0.5, 0.125).unwrap();
        let c = rigidity_certificate(&cube, &s, &f, &cube.model_angles()).unwrap();
        assert!(c.scalar_curvature > 1e-3);
        assert!(!c.is_rigid(1e-8));
    }

    #[test]
    fn gauss_equation_on_sphere_product_slice() {
        let cube = PolyhedralDomain::unit_cube();
        let f = MetricField::sphere_product(2.0, 0.5, 0.5, Aabb::cube(-1.0, 2.0));
        let s = horizontal_slice(&cube, 0.5, 0.1).unwrap();
        let fits = fit_all(&s, &f).unwrap();
        let geo = geometry_report(&cube, &s, &f).unwrap();
        for v in (0..s.vertices.len()).filter(|&v| !s.tags[v].is_boundary()) {
            let ct = f.curvature_at(&s.vertices[v]).unwrap();
            let a2 = fits[v].norm_sq();
            let lhs = 0.5 * (ct.scalar - 2.0 * geo.gauss_curvature_fit[v] + a2);
            let rhs = a2 + ct.ricci_form(&fits[v].normal);
            assert!((lhs - rhs).abs() < 0.05, "{lhs} {rhs}");
        }
    }

    #[test]
    fn comparison_on_flat_cube_and_negative_metric() {
        let cube = PolyhedralDomain::unit_cube();
        let init = horizontal_slice(&cube, 0.5, 0.125).unwrap();
        let g = [FRAC_PI_2; 4];
        let l = comparison_verdict(&cube, &flat(), &g, &init, &SolverOptions::default()).unwrap();
        assert_eq!(l.verdict, ComparisonVerdict::Consistent);
        assert!(l.l_value.abs() < l.tol);
        assert!(l.gauss_bonnet_residual < 1e-10);
        let neg = MetricField::conformal_gaussian(-0.3, 0.3, Vector3::new(0.5, 0.5, 0.5), Aabb::cube(-1.0, 2.0));
        assert_eq!(
            comparison_verdict(&cube, &neg, &g, &init, &SolverOptions::default()).unwrap_err(),
            Error::HypothesisFailed("scalar curvature".into())
        );
    }
}
