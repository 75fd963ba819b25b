//! Constant-mean-curvature capillary leaves, their continuation into
//! foliations, the mean-curvature dynamics along them, and finite-difference
//! checks of the evolution formulas for `H` and `⟨N, X⟩`.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::domain::{plane_shape, DomainKind, PolyhedralDomain};
use crate::error::{Error, Result};
use crate::mesh::{
    boundary_frames, contact_angles, edge_length, first_variation_mean_curvature, fit_all, fit_function,
    fit_stencil, horizontal_slice, polygon_mesh, project_to_constraint, quadric_fit, vertex_masses,
    vertex_normals, QuadricFit, TriSurface, VertexTag,
};
use crate::metric::{MetricField, Point};
use crate::solver::{mesh_size, Energy};
use crate::sparse::cg;
use crate::stability::stiffness_matrix;

/// Lumped boundary length per vertex.
fn boundary_weights(s: &TriSurface, field: &MetricField) -> Result<Vec<f64>> {
    let mut w = vec![0.0; s.vertices.len()];
    let lp = s.boundary_loop()?;
    for i in 0..lp.len() {
        let (u, v) = (lp[i], lp[(i + 1) % lp.len()]);
        let l = 0.5 * edge_length(field, &s.vertices[u], &s.vertices[v]);
        w[u] += l;
        w[v] += l;
    }
    Ok(w)
}

/// Solve `Δu = f` in `Σ`, `∂u/∂ν = g` on `∂Σ` with `∫u = 0`; `f`, `g` are
/// nodal values (only boundary entries of `g` are read).
pub fn neumann_solve(s: &TriSurface, field: &MetricField, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let n = s.vertices.len();
    if f.len() != n || g.len() != n {
        return Err(Error::Config("data length must match vertex count".into()));
    }
    let m = vertex_masses(s, field);
    let l = boundary_weights(s, field)?;
    let mut b: Vec<f64> = (0..n).map(|v| -m[v] * f[v] + l[v] * g[v]).collect();
    let norm: f64 = (0..n).map(|v| (m[v] * f[v]).abs() + (l[v] * g[v]).abs()).sum();
    if norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let imbalance: f64 = b.iter().sum();
    if imbalance.abs() > 1e-6 * norm {
        return Err(Error::Incompatible(imbalance / norm));
    }
    b.iter_mut().for_each(|x| *x -= imbalance / n as f64);
    let k = stiffness_matrix(s, field);
    let ones = vec![1.0; n];
    let mut u = cg(&k, &b, None, Some(&ones), 1e-13, 20 * n + 100)?;
    let mean = u.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>() / m.iter().sum::<f64>();
    u.iter_mut().for_each(|x| *x -= mean);
    Ok(u)
}

/// Leaves parametrized by one scalar per vertex along fixed rays: from the
/// apex through a reference slice (cone), or from the base to the top face
/// (prism). Boundary vertices stay on their face or edge for every value.
#[derive(Debug, Clone)]
pub struct LeafFamily {
    pub kind: DomainKind,
    pub mesh: TriSurface,
    pub anchor: Vec<Point>,
    pub dir: Vec<Vector3<f64>>,
    pub ref_mass: Vec<f64>,
    /// Reference mesh size.
    pub h: f64,
    colors: Vec<Vec<usize>>,
}

impl LeafFamily {
    /// Cone: parameter `ρ` scales the slice at half the apex height about the
    /// apex (`ρ = 1` is that slice, `ρ → 0` the apex). Prism: parameter `τ`
    /// is the fraction of the way from the base to the top face.
    pub fn new(p: &PolyhedralDomain, h: f64) -> Result<Self> {
        let (mesh, anchor, dir) = match p.kind() {
            DomainKind::Cone => {
                let apex = p.apex().unwrap();
                let m = horizontal_slice(p, 0.5 * apex.z, h)?;
                let dir = m.vertices.iter().map(|x| x - apex).collect();
                let anchor = vec![apex; m.vertices.len()];
                (m, anchor, dir)
            }
            DomainKind::Prism => {
                let k = p.k();
                let poly: Vec<Point> = (0..k).map(|j| p.base()[(j + 1) % k]).collect();
                let m = polygon_mesh(&poly, h)?;
                let (sc, off) = (p.top_scale(), p.top_offset());
                let dir = m.vertices.iter().map(|b| b * (sc - 1.0) + off).collect();
                (m.clone(), m.vertices.clone(), dir)
            }
        };
        let ref_mass = vertex_masses(&mesh, &MetricField::flat(p.bbox().padded(1.0)));
        let colors = distance2_coloring(&mesh);
        Ok(LeafFamily {
            kind: p.kind(),
            mesh,
            anchor,
            dir,
            ref_mass,
            h,
            colors,
        })
    }

    pub fn n(&self) -> usize {
        self.anchor.len()
    }

    pub fn surface(&self, s: &[f64]) -> TriSurface {
        let mut m = self.mesh.clone();
        for (v, x) in m.vertices.iter_mut().enumerate() {
            *x = self.anchor[v] + self.dir[v] * s[v];
        }
        m
    }

    /// Reference-mass weighted mean of the parameters.
    pub fn mean(&self, s: &[f64]) -> f64 {
        s.iter().zip(&self.ref_mass).map(|(a, m)| a * m).sum::<f64>() / self.ref_mass.iter().sum::<f64>()
    }
}

/// Greedy colouring in which vertices within two edges get different colours.
fn distance2_coloring(s: &TriSurface) -> Vec<Vec<usize>> {
    let nb = s.neighbors();
    let n = s.vertices.len();
    let mut color = vec![usize::MAX; n];
    let mut ncol = 0;
    for v in 0..n {
        let mut used = std::collections::HashSet::new();
        for &u in &nb[v] {
            used.insert(color[u]);
            for &w in &nb[u] {
                used.insert(color[w]);
            }
        }
        let c = (0..).find(|c| !used.contains(c)).unwrap();
        color[v] = c;
        ncol = ncol.max(c + 1);
    }
    let mut out = vec![Vec::new(); ncol];
    for v in 0..n {
        out[color[v]].push(v);
    }
    out
}

/// `∂F/∂s_v` and `∂Vol(E)/∂s_v` at a leaf.
fn leaf_gradients(fam: &LeafFamily, e: &Energy, field: &MetricField, s: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let surf = fam.surface(s);
    let (_, g) = e.value_grad(&surf);
    let dfds: Vec<f64> = g.iter().zip(&fam.dir).map(|(a, d)| a.dot(d)).collect();
    let mut w = vec![0.0; fam.n()];
    for t in &surf.triangles {
        let [a, b, c] = t.map(|v| surf.vertices[v]);
        let nt = (b - a).cross(&(c - a));
        let mids = [(a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5];
        let rho: Vec<f64> = mids.iter().map(|x| field.g(x).determinant().max(0.0).sqrt()).collect();
        // midpoint k is adjacent to local vertices k and k+1
        let near = [rho[0] + rho[2], rho[0] + rho[1], rho[1] + rho[2]];
        for i in 0..3 {
            w[t[i]] -= fam.dir[t[i]].dot(&nt) * near[i] / 12.0;
        }
    }
    (dfds, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafOptions {
    /// Bound on `|H_v - λ|` at interior vertices.
    pub tol: f64,
    pub max_newton: usize,
    pub fd_step: f64,
}

impl Default for LeafOptions {
    fn default() -> Self {
        LeafOptions {
            tol: 1e-9,
            max_newton: 30,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafState {
    pub rho: f64,
    pub params: Vec<f64>,
    pub lambda: f64,
    /// `max |H_v - λ|` over interior vertices.
    pub mean_curvature_residual: f64,
    /// `max |γ_measured - γ_j|`.
    pub angle_residual: f64,
    /// `Σ cot γ_j |∂Σ ∩ F_j|`.
    pub c_rho: f64,
    pub energy: f64,
    pub newton_iterations: usize,
    /// Norms of the Newton increments.
    pub increments: Vec<f64>,
    /// `⟨∂x/∂ρ, N⟩` per vertex; filled by [`foliate`].
    pub lapse: Vec<f64>,
}

fn merit(g: &[f64], w: &[f64], c: f64) -> f64 {
    let wmax = w.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    g.iter().fold(0.0f64, |a, b| a.max(b.abs())) / wmax + c.abs()
}

/// Newton iteration for the leaf with mean parameter `rho`: every vertex
/// satisfies `∂F/∂s_v = λ ∂Vol/∂s_v` (constant discrete mean curvature `λ`,
/// capillary condition at the boundary rows) and the weighted mean of the
/// parameters equals `rho`.
pub fn leaf_solve(
    p: &PolyhedralDomain,
    field: &MetricField,
    gamma: &[f64],
    fam: &LeafFamily,
    rho: f64,
    warm: Option<(&[f64], f64)>,
    opts: &LeafOptions,
) -> Result<LeafState> {
    let n = fam.n();
    let e = Energy::new(p, field, gamma.to_vec(), &fam.mesh)?;
    let (mut s, mut lam) = match warm {
        Some((s0, l0)) => {
            let shift = rho - fam.mean(s0);
            (s0.iter().map(|x| x + shift).collect::<Vec<_>>(), l0)
        }
        None => (vec![rho; n], f64::NAN),
    };
    let (mut dfds, mut w) = leaf_gradients(fam, &e, field, &s);
    if lam.is_nan() {
        lam = dfds.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().map(|b| b * b).sum::<f64>();
    }
    let resid = |dfds: &[f64], w: &[f64], lam: f64| -> Vec<f64> {
        dfds.iter().zip(w).map(|(a, b)| a - lam * b).collect()
    };
    let mut g = resid(&dfds, &w, lam);
    let mut c = fam.mean(&s) - rho;
    let interior: Vec<usize> = (0..n).filter(|&v| !fam.mesh.tags[v].is_boundary()).collect();
    let hres = |g: &[f64], w: &[f64]| interior.iter().map(|&v| (g[v] / w[v]).abs()).fold(0.0, f64::max);
    let bres = |g: &[f64], w: &[f64]| {
        let wmax = w.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        g.iter().fold(0.0f64, |a, b| a.max(b.abs())) / wmax
    };
    let mut increments = Vec::new();
    let mut iters = 0;
    let scale = p.scale();
    loop {
        if hres(&g, &w) < opts.tol && bres(&g, &w) < opts.tol && c.abs() < 1e-13 {
            break;
        }
        if iters >= opts.max_newton {
            return Err(Error::NewtonDiverged(merit(&g, &w, c)));
        }
        iters += 1;
        // Jacobian of the residual in s at fixed λ, by coloured central differences
        let mut jac = DMatrix::<f64>::zeros(n + 1, n + 1);
        let nb = fam.mesh.neighbors();
        for col in &fam.colors {
            let step: Vec<f64> = (0..n).map(|_| 0.0).collect();
            let mut sp = s.clone();
            let mut sm = s.clone();
            let mut step = step;
            for &v in col {
                let d = opts.fd_step * scale / fam.dir[v].norm().max(1e-12);
                step[v] = d;
                sp[v] += d;
                sm[v] -= d;
            }
            let (fp, wp) = leaf_gradients(fam, &e, field, &sp);
            let (fm, wm) = leaf_gradients(fam, &e, field, &sm);
            let gp = resid(&fp, &wp, lam);
            let gm = resid(&fm, &wm, lam);
            for &v in col {
                for &r in nb[v].iter().chain(std::iter::once(&v)) {
                    jac[(r, v)] = (gp[r] - gm[r]) / (2.0 * step[v]);
                }
            }
        }
        let wsum: f64 = fam.ref_mass.iter().sum();
        for v in 0..n {
            jac[(v, n)] = -w[v];
            jac[(n, v)] = fam.ref_mass[v] / wsum;
        }
        let mut rhs = DVector::zeros(n + 1);
        for v in 0..n {
            rhs[v] = -g[v];
        }
        rhs[n] = -c;
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NewtonDiverged(f64::INFINITY))?;
        increments.push(delta.rows(0, n).norm());
        let m0 = merit(&g, &w, c);
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut left = false;
        for _ in 0..20 {
            let st: Vec<f64> = (0..n).map(|v| s[v] + alpha * delta[v]).collect();
            let lt = lam + alpha * delta[n];
            let surf = fam.surface(&st);
            let outside = surf
                .vertices
                .iter()
                .map(|x| p.inner_distance(x))
                .fold(f64::INFINITY, f64::min)
                < -1e-9 * scale
                || (fam.kind == DomainKind::Cone && st.iter().any(|&x| x <= 0.0));
            if outside {
                left = true;
                alpha *= 0.5;
                continue;
            }
            let (ft, wt) = leaf_gradients(fam, &e, field, &st);
            let gt = resid(&ft, &wt, lt);
            let ct = fam.mean(&st) - rho;
            if merit(&gt, &wt, ct) <= (1.0 - 1e-4 * alpha) * m0 || m0 < 1e-12 {
                s = st;
                lam = lt;
                dfds = ft;
                w = wt;
                g = gt;
                c = ct;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            if left {
                return Err(Error::LeafLeftDomain(rho));
            }
            return Err(Error::NewtonDiverged(m0));
        }
    }
    let _ = &dfds;
    let surf = fam.surface(&s);
    let normals = vertex_normals(&surf, field);
    let mut angle_residual: f64 = 0.0;
    let mut c_rho = 0.0;
    for j in 0..p.k() {
        for (_, a) in contact_angles(p, &surf, j, field, &normals)? {
            angle_residual = angle_residual.max((a - gamma[j]).abs());
        }
        let chain = surf.contact_curve(p.k(), j)?;
        let len: f64 = chain
            .windows(2)
            .map(|w| edge_length(field, &surf.vertices[w[0]], &surf.vertices[w[1]]))
            .sum();
        c_rho += len / gamma[j].tan();
    }
    Ok(LeafState {
        rho,
        lambda: lam,
        mean_curvature_residual: hres(&g, &w),
        angle_residual,
        c_rho,
        energy: e.value(&surf),
        newton_iterations: iters,
        increments,
        lapse: Vec::new(),
        params: s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoliationTrace {
    pub leaves: Vec<LeafState>,
    /// Central-difference `dλ/dρ` at interior leaves.
    pub hprime: Vec<Option<f64>>,
    /// `min_v` over consecutive leaves of the parameter gap, signed by the
    /// direction of `ρ`.
    pub min_gap: f64,
    /// Error that stopped the continuation early, if any.
    pub truncated: Option<String>,
    pub h: f64,
    pub step: f64,
}

impl FoliationTrace {
    pub fn lambdas(&self) -> Vec<f64> {
        self.leaves.iter().map(|l| l.lambda).collect()
    }
}

/// Continue leaves over `steps` equal intervals of `range`, with adaptive
/// sub-stepping between recorded parameters.
pub fn foliate(
    p: &PolyhedralDomain,
    field: &MetricField,
    gamma: &[f64],
    fam: &LeafFamily,
    range: (f64, f64),
    steps: usize,
    opts: &LeafOptions,
) -> Result<FoliationTrace> {
    if steps == 0 || range.0 == range.1 {
        return Err(Error::Config("foliation needs a nonempty range and steps > 0".into()));
    }
    let dr = (range.1 - range.0) / steps as f64;
    let cap = (range.1 - range.0).abs() / 10.0;
    let first = leaf_solve(p, field, gamma, fam, range.0, None, opts)?;
    let mut leaves = vec![first];
    let mut truncated = None;
    let mut sub = dr.abs().min(cap);
    let mut easy = 0;
    'outer: for i in 1..=steps {
        let target = range.0 + dr * i as f64;
        loop {
            let cur = leaves.last().unwrap();
            let remaining = target - cur.rho;
            if remaining.abs() < 1e-14 {
                break;
            }
            let h = remaining.signum() * sub.min(remaining.abs());
            let next = cur.rho + h;
            let warm: Vec<f64> = match fam.kind {
                DomainKind::Cone => cur.params.iter().map(|x| x * next / cur.rho).collect(),
                DomainKind::Prism => cur.params.clone(),
            };
            match leaf_solve(p, field, gamma, fam, next, Some((&warm, cur.lambda)), opts) {
                Ok(l) => {
                    if l.newton_iterations <= 3 {
                        easy += 1;
                        if easy >= 3 {
                            sub = (2.0 * sub).min(cap).min(dr.abs());
                            easy = 0;
                        }
                    } else {
                        easy = 0;
                    }
                    let reached = (l.rho - target).abs() < 1e-14;
                    if reached {
                        leaves.push(l);
                        break;
                    }
                    // intermediate leaf, dropped after the loop
                    leaves.push(l);
                    continue;
                }
                Err(err) => {
                    sub *= 0.5;
                    easy = 0;
                    if sub < dr.abs() / 64.0 {
                        truncated = Some(err.to_string());
                        break 'outer;
                    }
                }
            }
        }
    }
    // drop intermediate (off-grid) leaves
    let grid: Vec<f64> = (0..=steps).map(|i| range.0 + dr * i as f64).collect();
    leaves.retain(|l| grid.iter().any(|g| (g - l.rho).abs() < 1e-12));
    finish_trace(p, field, fam, leaves, truncated, dr)
}

fn finish_trace(
    _p: &PolyhedralDomain,
    field: &MetricField,
    fam: &LeafFamily,
    mut leaves: Vec<LeafState>,
    truncated: Option<String>,
    dr: f64,
) -> Result<FoliationTrace> {
    let m = leaves.len();
    let mut min_gap = f64::INFINITY;
    for i in 0..m.saturating_sub(1) {
        let d = leaves[i + 1].rho - leaves[i].rho;
        for v in 0..fam.n() {
            min_gap = min_gap.min((leaves[i + 1].params[v] - leaves[i].params[v]) * d.signum());
        }
    }
    let mut hprime = vec![None; m];
    for i in 1..m.saturating_sub(1) {
        hprime[i] = Some((leaves[i + 1].lambda - leaves[i - 1].lambda) / (leaves[i + 1].rho - leaves[i - 1].rho));
    }
    if m >= 2 {
        for i in 0..m {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == m - 1 {
                (m - 2, m - 1)
            } else {
                (i - 1, i + 1)
            };
            let dr = leaves[b].rho - leaves[a].rho;
            let surf = fam.surface(&leaves[i].params);
            let normals = vertex_normals(&surf, field);
            let lapse: Vec<f64> = (0..fam.n())
                .map(|v| {
                    let dx = fam.dir[v] * ((leaves[b].params[v] - leaves[a].params[v]) / dr);
                    MetricField::inner(&field.g(&surf.vertices[v]), &dx, &normals[v])
                })
                .collect();
            leaves[i].lapse = lapse;
        }
    }
    Ok(FoliationTrace {
        leaves,
        hprime,
        min_gap,
        truncated,
        h: fam.h,
        step: dr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub rho: f64,
    pub lambda: f64,
    pub hprime: f64,
    pub c_rho: f64,
    /// `∫ 1/v`.
    pub inverse_lapse_integral: f64,
    /// `H'(ρ) ∫1/v - C(ρ) H(ρ)`; independent of the orientation of `ρ`.
    pub residual: f64,
    /// `H' - C H` with `ρ` oriented so that the leaves move along `N`.
    pub residual_unweighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsLedger {
    pub rows: Vec<DynamicsRow>,
    pub min_residual: f64,
    pub min_residual_unweighted: f64,
    /// `Δρ² + h`.
    pub tolerance: f64,
    pub pass: bool,
}

/// Check `H'(ρ) ∫1/v ≥ C(ρ) H(ρ)` along a trace.
pub fn dynamics_check(trace: &FoliationTrace, p: &PolyhedralDomain, field: &MetricField, fam: &LeafFamily) -> Result<DynamicsLedger> {
    let m = trace.leaves.len();
    if m < 3 {
        return Err(Error::Config(format!("dynamics check needs at least 3 leaves, got {m}")));
    }
    if !field.is_flat() {
        for l in &trace.leaves {
            let surf = fam.surface(&l.params);
            for (v, x) in surf.vertices.iter().enumerate() {
                if field.curvature_at(x)?.scalar < -1e-8 {
                    return Err(Error::HypothesisFailed("scalar curvature".into()));
                }
                if let VertexTag::Face(j) = surf.tags[v] {
                    let f = p.face(j);
                    if plane_shape(field, &f.normal, x, &[f.u1, f.u2])?.mean_curvature < -1e-8 {
                        return Err(Error::HypothesisFailed("face mean convexity".into()));
                    }
                }
            }
        }
    }
    let mut rows = Vec::new();
    for i in 1..m - 1 {
        let l = &trace.leaves[i];
        let hp = trace.hprime[i].unwrap();
        let surf = fam.surface(&l.params);
        let mass = vertex_masses(&surf, field);
        let inv: f64 = mass.iter().zip(&l.lapse).map(|(a, v)| a / v).sum();
        let orient = if inv < 0.0 { -1.0 } else { 1.0 };
        rows.push(DynamicsRow {
            rho: l.rho,
            lambda: l.lambda,
            hprime: hp,
            c_rho: l.c_rho,
            inverse_lapse_integral: inv,
            residual: hp * inv - l.c_rho * l.lambda,
            residual_unweighted: orient * hp - l.c_rho * l.lambda,
        });
    }
    let min_residual = rows.iter().map(|r| r.residual).fold(f64::INFINITY, f64::min);
    let min_unw = rows.iter().map(|r| r.residual_unweighted).fold(f64::INFINITY, f64::min);
    let tolerance = trace.step * trace.step + trace.h;
    Ok(DynamicsLedger {
        rows,
        min_residual,
        min_residual_unweighted: min_unw,
        tolerance,
        pass: min_residual >= -tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
struct TraceRow {
    rho: f64,
    lambda: f64,
    c_rho: f64,
    min_lapse: f64,
    angle_residual: f64,
    hprime_minus_ch: Option<f64>,
}

/// Write the trace as CSV; the last column is the dynamics residual when
/// `dynamics` is given.
pub fn write_trace_csv(path: &Path, trace: &FoliationTrace, dynamics: Option<&DynamicsLedger>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    for l in &trace.leaves {
        let res = dynamics.and_then(|d| d.rows.iter().find(|r| r.rho == l.rho).map(|r| r.residual));
        let min_lapse = l.lapse.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        w.serialize(TraceRow {
            rho: l.rho,
            lambda: l.lambda,
            c_rho: l.c_rho,
            min_lapse,
            angle_residual: l.angle_residual,
            hprime_minus_ch: res,
        })
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStat {
    pub max_abs: f64,
    /// `max |linearization|` over the compared set.
    pub scale: f64,
    /// `max_abs / max(scale, 1e-3)`.
    pub relative: f64,
}

impl ErrorStat {
    fn new(pairs: &[(f64, f64)]) -> Self {
        let max_abs = pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = pairs.iter().map(|(_, b)| b.abs()).fold(0.0, f64::max);
        ErrorStat {
            max_abs,
            scale,
            relative: max_abs / scale.max(1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionCheck {
    /// `dH/dt` vs `Δf + (Ric(N,N) + |A|²) f`, interior vertices off the boundary ring.
    pub mean_curvature: ErrorStat,
    /// `d⟨N,X⟩/dt` vs `-sin γ ∂f/∂ν + (cos γ A(ν,ν) + II(ν̄,ν̄)) f` on the faces.
    pub angle: ErrorStat,
    /// `∇_Y N` vs `-∇^Σ f`, by coordinate components.
    pub normal: ErrorStat,
    /// Samples `(vertex, finite difference, linearization)` for `dH/dt`.
    pub mean_curvature_samples: Vec<(usize, f64, f64)>,
    /// Largest Euclidean correction applied to keep boundary vertices on
    /// their faces, relative to `dt`.
    pub tangential_defect: f64,
}

fn displaced(p: &PolyhedralDomain, s: &TriSurface, normals: &[Vector3<f64>], f: &[f64], t: f64) -> (TriSurface, f64) {
    let mut out = s.clone();
    let mut defect: f64 = 0.0;
    for v in 0..s.vertices.len() {
        let x = s.vertices[v] + normals[v] * (t * f[v]);
        let y = project_to_constraint(p, s.tags[v], &x);
        defect = defect.max((y - x).norm());
        out.vertices[v] = y;
    }
    (out, defect)
}

/// Finite-difference evolution of `H`, `⟨N,X⟩` and `N` under the normal
/// variation `f N` compared with their linearizations. `h_tol` bounds the
/// interior mean curvature of `s`.
pub fn evolution_lemma_check(
    p: &PolyhedralDomain,
    field: &MetricField,
    s: &TriSurface,
    f: &[f64],
    dt: f64,
    h_tol: f64,
) -> Result<EvolutionCheck> {
    let n = s.vertices.len();
    let h1 = first_variation_mean_curvature(s, field)?;
    let hmax = (0..n)
        .filter(|&v| !s.tags[v].is_boundary())
        .map(|v| h1[v].abs())
        .fold(0.0, f64::max);
    if hmax > h_tol {
        return Err(Error::NotMinimal(hmax));
    }
    let nb = s.neighbors();
    let fits = fit_all(s, field)?;
    let normals: Vec<Vector3<f64>> = fits.iter().map(|q| q.normal).collect();
    let (sp, dp) = displaced(p, s, &normals, f, dt);
    let (sm, dm) = displaced(p, s, &normals, f, -dt);
    let refit = |t: &TriSurface| -> Result<Vec<QuadricFit>> {
        let vn = vertex_normals(t, field);
        (0..n)
            .map(|v| quadric_fit(t, field, v, &fit_stencil(t, &nb, v), &vn[v]))
            .collect()
    };
    let fp = refit(&sp)?;
    let fm = refit(&sm)?;
    let near_boundary: Vec<bool> = (0..n)
        .map(|v| s.tags[v].is_boundary() || nb[v].iter().any(|&u| s.tags[u].is_boundary()))
        .collect();
    let mut hs = Vec::new();
    let mut ns = Vec::new();
    let mut samples = Vec::new();
    for v in 0..n {
        if near_boundary[v] {
            continue;
        }
        let x = s.vertices[v];
        let ff = fit_function(s, field, v, &fit_stencil(s, &nb, v), &fits[v], f)?;
        let ric = if field.is_flat() {
            0.0
        } else {
            field.curvature_at(&x)?.ricci_form(&fits[v].normal)
        };
        let lin = ff.laplacian + (ric + fits[v].norm_sq()) * f[v];
        let fd = (fp[v].mean() - fm[v].mean()) / (2.0 * dt);
        hs.push((fd, lin));
        samples.push((v, fd, lin));
        let gam = field.christoffel(&x);
        let y = fits[v].normal * f[v];
        let dn = (fp[v].normal - fm[v].normal) / (2.0 * dt) + MetricField::gamma_apply(&gam, &y, &fits[v].normal);
        for i in 0..3 {
            ns.push((dn[i], -ff.gradient[i]));
        }
    }
    let mut angles = Vec::new();
    for fr in boundary_frames(p, s, field, &fits)? {
        let v = fr.vertex;
        let x = s.vertices[v];
        let face = p.face(fr.face);
        let ff = fit_function(s, field, v, &fit_stencil(s, &nb, v), &fits[v], f)?;
        let g = field.g(&x);
        let dfdnu = MetricField::inner(&g, &ff.gradient, &fr.nu);
        let lin = -fr.sin_gamma * dfdnu + (fr.cos_gamma * fr.surface_form + fr.face_form) * f[v];
        let cosg = |t: &TriSurface, q: &QuadricFit| {
            let gt = field.g(&t.vertices[v]);
            let xn = MetricField::unit_from_covector(&gt, &face.normal);
            MetricField::inner(&gt, &q.normal, &xn)
        };
        let fd = (cosg(&sp, &fp[v]) - cosg(&sm, &fm[v])) / (2.0 * dt);
        angles.push((fd, lin));
    }
    Ok(EvolutionCheck {
        mean_curvature: ErrorStat::new(&hs),
        angle: ErrorStat::new(&angles),
        normal: ErrorStat::new(&ns),
        mean_curvature_samples: samples,
        tangential_defect: dp.max(dm) / dt,
    })
}

/// Mesh size of a leaf.
pub fn leaf_mesh_size(fam: &LeafFamily, l: &LeafState) -> f64 {
    mesh_size(&fam.surface(&l.params))
}
