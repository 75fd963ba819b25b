//! Capillary energy `F = |Σ| - Σ cos γ_j |∂E ∩ F_j|` and its constrained
//! minimization over triangulated surfaces.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainKind, PolyhedralDomain};
use crate::error::{Error, Result};
use crate::mesh::{
    contact_angles, first_variation_mean_curvature, project_to_constraint,
    riemannian_area, triangle_area, triangle_area_grad, vertex_normals, wetted_area_grad_on_chain,
    wetted_area_on_chain, TriSurface, VertexTag,
};
use crate::metric::MetricField;

/// Contact angles used by the energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaPolicy {
    /// The string `"model"`.
    Model(String),
    Explicit(Vec<f64>),
}

impl Default for GammaPolicy {
    fn default() -> Self {
        GammaPolicy::Model("model".into())
    }
}

impl GammaPolicy {
    pub fn resolve(&self, p: &PolyhedralDomain) -> Result<Vec<f64>> {
        match self {
            GammaPolicy::Model(s) if s == "model" => Ok(p.model_angles().gamma),
            GammaPolicy::Model(s) => Err(Error::Config(format!("unknown gamma policy {s:?}"))),
            GammaPolicy::Explicit(v) => {
                if v.len() != p.k() {
                    return Err(Error::Config(format!("expected {} angles, got {}", p.k(), v.len())));
                }
                if let Some(&g) = v.iter().find(|g| !(**g > 0.0 && **g < std::f64::consts::PI)) {
                    return Err(Error::BadAngle(g));
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Limited-memory BFGS on the constraint subspace.
    Lbfgs,
    /// Plain projected gradient with step doubling.
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Projected-gradient ∞-norm tolerance, relative to the domain scale.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest vertex displacement of the first trial step, relative to `h`.
    pub step0: f64,
    pub armijo: f64,
    pub method: Method,
    pub memory: usize,
    /// Obstacle clearance below which the run aborts, relative to `h`.
    pub obstacle_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iter: 50_000,
            step0: 0.1,
            armijo: 1e-4,
            method: Method::Lbfgs,
            memory: 12,
            obstacle_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clearances {
    /// Distance from `Σ̄` to the base `B`.
    pub base: f64,
    /// Distance to the top `B₂` (prism).
    pub top: Option<f64>,
    /// Distance to the apex (cone).
    pub apex: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy: f64,
    pub area: f64,
    pub wetted: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `max |H|` over interior vertices (first-variation estimate).
    pub mean_curvature_inf: f64,
    /// `max |γ_measured - γ_j|` per face.
    pub contact_angle_residual: Vec<f64>,
    pub clearances: Clearances,
    pub gradient_inf: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl EnergyReport {
    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NotConverged(self.iterations))
        }
    }

    /// `area - Σ cos γ_j wetted_j` recomputed from the stored fields.
    pub fn recomputed_energy(&self) -> f64 {
        self.area
            - self
                .wetted
                .iter()
                .zip(&self.gamma)
                .map(|(w, g)| g.cos() * w)
                .sum::<f64>()
    }
}

/// Energy evaluation with cached contact chains.
pub struct Energy<'a> {
    pub domain: &'a PolyhedralDomain,
    pub field: &'a MetricField,
    pub gamma: Vec<f64>,
    chains: Vec<Vec<usize>>,
}

impl<'a> Energy<'a> {
    pub fn new(
        domain: &'a PolyhedralDomain,
        field: &'a MetricField,
        gamma: Vec<f64>,
        s: &TriSurface,
    ) -> Result<Self> {
        if gamma.len() != domain.k() {
            return Err(Error::Config("gamma count must match face count".into()));
        }
        let chains = (0..domain.k())
            .map(|j| s.contact_curve(domain.k(), j))
            .collect::<Result<Vec<_>>>()?;
        Ok(Energy {
            domain,
            field,
            gamma,
            chains,
        })
    }

    pub fn area(&self, s: &TriSurface) -> f64 {
        s.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|v| s.vertices[v]);
                triangle_area(self.field, &a, &b, &c)
            })
            .sum()
    }

    pub fn wetted(&self, s: &TriSurface) -> Vec<f64> {
        (0..self.domain.k())
            .map(|j| wetted_area_on_chain(self.domain, s, j, &self.chains[j], self.field))
            .collect()
    }

    pub fn value(&self, s: &TriSurface) -> f64 {
        let w = self.wetted(s);
        self.area(s) - w.iter().zip(&self.gamma).map(|(w, g)| g.cos() * w).sum::<f64>()
    }

    /// Value and unconstrained gradient.
    pub fn value_grad(&self, s: &TriSurface) -> (f64, Vec<Vector3<f64>>) {
        let mut grad = vec![Vector3::zeros(); s.vertices.len()];
        let mut total = 0.0;
        for t in &s.triangles {
            let [a, b, c] = t.map(|v| s.vertices[v]);
            let (ar, gr) = triangle_area_grad(self.field, &a, &b, &c);
            total += ar;
            for i in 0..3 {
                grad[t[i]] += gr[i];
            }
        }
        for j in 0..self.domain.k() {
            let cg = self.gamma[j].cos();
            if cg == 0.0 {
                continue;
            }
            let (w, gw) = wetted_area_grad_on_chain(self.domain, s, j, &self.chains[j], self.field);
            total -= cg * w;
            for (v, g) in gw {
                grad[v] -= g * cg;
            }
        }
        (total, grad)
    }

    /// Gradient projected onto the constraint directions of each vertex.
    pub fn project(&self, s: &TriSurface, grad: &mut [Vector3<f64>]) {
        for (v, g) in grad.iter_mut().enumerate() {
            *g = project_direction(self.domain, s.tags[v], g);
        }
    }
}

/// Orthogonal projection of a displacement onto the tangent space of the
/// vertex constraint.
pub fn project_direction(p: &PolyhedralDomain, tag: VertexTag, d: &Vector3<f64>) -> Vector3<f64> {
    match tag {
        VertexTag::Interior => *d,
        VertexTag::Face(j) => {
            let n = p.face(j).normal;
            d - n * d.dot(&n)
        }
        VertexTag::Edge(j) => {
            let (a, b) = p.edge(j);
            let e = (b - a).normalize();
            e * d.dot(&e)
        }
    }
}

/// `F` for an admissible surface.
pub fn energy(p: &PolyhedralDomain, s: &TriSurface, field: &MetricField, gamma: &[f64]) -> Result<f64> {
    s.validate(p)?;
    if !s.separates(p) {
        return Err(Error::NotAdmissible);
    }
    riemannian_area(s, field)?;
    Ok(Energy::new(p, field, gamma.to_vec(), s)?.value(s))
}

pub fn obstacle_check(p: &PolyhedralDomain, s: &TriSurface) -> Clearances {
    let base = s.vertices.iter().map(|x| x.z).fold(f64::INFINITY, f64::min).max(0.0);
    let top = (p.kind() == DomainKind::Prism).then(|| {
        let zt = p.top_offset().z;
        s.vertices.iter().map(|x| zt - x.z).fold(f64::INFINITY, f64::min).max(0.0)
    });
    let apex = p
        .apex()
        .map(|a| s.vertices.iter().map(|x| (x - a).norm()).fold(f64::INFINITY, f64::min));
    Clearances { base, top, apex }
}

/// Characteristic edge length of the mesh.
pub fn mesh_size(s: &TriSurface) -> f64 {
    let e = s.edges();
    let total: f64 = e.iter().map(|&(u, v)| (s.vertices[u] - s.vertices[v]).norm()).sum();
    total / e.len().max(1) as f64
}

/// Measured first-variation certificates of a surface.
pub fn energy_report(
    p: &PolyhedralDomain,
    s: &TriSurface,
    field: &MetricField,
    gamma: &[f64],
    iterations: usize,
    converged: bool,
) -> Result<EnergyReport> {
    let e = Energy::new(p, field, gamma.to_vec(), s)?;
    let (value, mut grad) = e.value_grad(s);
    e.project(s, &mut grad);
    let area = e.area(s);
    let wetted = e.wetted(s);
    let h = first_variation_mean_curvature(s, field)?;
    let hinf = (0..s.vertices.len())
        .filter(|&v| !s.tags[v].is_boundary())
        .map(|v| h[v].abs())
        .fold(0.0, f64::max);
    let normals = vertex_normals(s, field);
    let mut res = Vec::with_capacity(p.k());
    for j in 0..p.k() {
        let a = contact_angles(p, s, j, field, &normals)?;
        res.push(a.iter().map(|(_, g)| (g - gamma[j]).abs()).fold(0.0, f64::max));
    }
    Ok(EnergyReport {
        energy: value,
        area,
        wetted,
        gamma: gamma.to_vec(),
        mean_curvature_inf: hinf,
        contact_angle_residual: res,
        clearances: obstacle_check(p, s),
        gradient_inf: grad.iter().map(|g| g.amax()).fold(0.0, f64::max),
        iterations,
        converged,
    })
}

fn dot(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn inf_norm(a: &[Vector3<f64>]) -> f64 {
    a.iter().map(|g| g.amax()).fold(0.0, f64::max)
}

/// Minimize `F` from `init`. Returns the final iterate; `converged` is false
/// when the iteration budget ran out.
pub fn minimize(
    p: &PolyhedralDomain,
    field: &MetricField,
    gamma: &[f64],
    init: &TriSurface,
    opts: &SolverOptions,
) -> Result<(TriSurface, EnergyReport)> {
    init.validate(p)?;
    if !init.separates(p) {
        return Err(Error::NotAdmissible);
    }
    riemannian_area(init, field)?;
    let h = mesh_size(init);
    let eps_obs = opts.obstacle_factor * h;
    let tol = opts.tol * p.scale();
    let e = Energy::new(p, field, gamma.to_vec(), init)?;
    let mut s = init.clone();
    s.project_constraints(p);
    let clear = obstacle_check(p, &s);
    if clear.base < eps_obs || clear.top.is_some_and(|t| t < eps_obs) {
        return Err(Error::ObstacleContact(clear.base.min(clear.top.unwrap_or(f64::INFINITY))));
    }
    let (mut f, mut g) = e.value_grad(&s);
    e.project(&s, &mut g);
    let mut hist: VecDeque<(Vec<Vector3<f64>>, Vec<Vector3<f64>>, f64)> = VecDeque::new();
    let mut alpha_prev: f64 = 0.0;
    let mut iters = 0;
    let mut converged = false;
    while iters < opts.max_iter {
        let gn = inf_norm(&g);
        if gn < tol {
            converged = true;
            break;
        }
        iters += 1;
        let mut d: Vec<Vector3<f64>> = g.iter().map(|x| -x).collect();
        if opts.method == Method::Lbfgs && !hist.is_empty() {
            let mut a = Vec::with_capacity(hist.len());
            for (sv, yv, rho) in hist.iter().rev() {
                let ai = rho * dot(sv, &d);
                for (di, yi) in d.iter_mut().zip(yv) {
                    *di -= yi * ai;
                }
                a.push(ai);
            }
            let (sl, yl, _) = hist.back().unwrap();
            let gamma_s = dot(sl, yl) / dot(yl, yl);
            for di in d.iter_mut() {
                *di *= gamma_s;
            }
            for ((sv, yv, rho), ai) in hist.iter().zip(a.iter().rev()) {
                let b = rho * dot(yv, &d);
                for (di, si) in d.iter_mut().zip(sv) {
                    *di += si * (ai - b);
                }
            }
            e.project(&s, &mut d);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = g.iter().map(|x| -x).collect();
            slope = dot(&g, &d);
        }
        let dmax = inf_norm(&d);
        let mut alpha = match (opts.method, hist.is_empty()) {
            (Method::Lbfgs, false) => 1.0,
            (Method::Gradient, _) if alpha_prev > 0.0 => 2.0 * alpha_prev,
            _ => opts.step0 * h / dmax,
        };
        let mut accepted = None;
        for _ in 0..60 {
            let mut t = s.clone();
            for (x, di) in t.vertices.iter_mut().zip(&d) {
                *x += di * alpha;
            }
            for v in 0..t.vertices.len() {
                t.vertices[v] = project_to_constraint(p, t.tags[v], &t.vertices[v]);
            }
            if admissible_step(p, &s, &t) {
                let ft = e.value(&t);
                if ft <= f + opts.armijo * alpha * slope {
                    accepted = Some((t, ft));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let (t, ft) = match accepted {
            Some(x) => x,
            None => {
                if hist.is_empty() {
                    // no descent possible at floating-point resolution
                    break;
                }
                hist.clear();
                continue;
            }
        };
        debug_assert!(ft <= f);
        let clear = obstacle_check(p, &t);
        if clear.base < eps_obs || clear.top.is_some_and(|x| x < eps_obs) {
            return Err(Error::ObstacleContact(clear.base.min(clear.top.unwrap_or(f64::INFINITY))));
        }
        let (_, mut gt) = e.value_grad(&t);
        e.project(&t, &mut gt);
        let sv: Vec<Vector3<f64>> = t.vertices.iter().zip(&s.vertices).map(|(a, b)| a - b).collect();
        let yv: Vec<Vector3<f64>> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-16 * dot(&sv, &sv).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
            hist.push_back((sv, yv, 1.0 / sy));
            if hist.len() > opts.memory {
                hist.pop_front();
            }
        }
        alpha_prev = alpha;
        s = t;
        f = ft;
        g = gt;
    }
    if !converged && inf_norm(&g) < tol {
        converged = true;
    }
    if !s.separates(p) {
        return Err(Error::NotAdmissible);
    }
    let report = energy_report(p, &s, field, gamma, iters, converged)?;
    Ok((s, report))
}

/// Trial iterate stays in the domain and keeps triangle orientations.
fn admissible_step(p: &PolyhedralDomain, old: &TriSurface, new: &TriSurface) -> bool {
    let tol = 1e-9 * p.scale();
    if new.vertices.iter().any(|x| p.inner_distance(x) < -tol) {
        return false;
    }
    for t in &new.triangles {
        let [a, b, c] = t.map(|v| new.vertices[v]);
        let [a0, b0, c0] = t.map(|v| old.vertices[v]);
        let n = (b - a).cross(&(c - a));
        let n0 = (b0 - a0).cross(&(c0 - a0));
        if n.dot(&n0) <= 0.25 * n0.norm_squared() {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Negative,
    Zero,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfimumProbe {
    pub values: Vec<f64>,
    pub minimized: Vec<Option<f64>>,
    pub min_energy: f64,
    pub band: f64,
    pub verdict: Verdict,
}

/// Minimum of `F` over an initial family and, optionally, over minimize runs
/// started from it; classified against the band `±5e-3`.
pub fn infimum_probe(
    p: &PolyhedralDomain,
    field: &MetricField,
    gamma: &[f64],
    family: &[TriSurface],
    run: Option<&SolverOptions>,
) -> Result<InfimumProbe> {
    if family.is_empty() {
        return Err(Error::Config("infimum probe needs at least one surface".into()));
    }
    let band = 5e-3;
    let mut values = Vec::with_capacity(family.len());
    let mut minimized = Vec::with_capacity(family.len());
    for s in family {
        values.push(energy(p, s, field, gamma)?);
        minimized.push(match run {
            Some(o) => minimize(p, field, gamma, s, o).ok().map(|(_, r)| r.energy),
            None => None,
        });
    }
    let min_energy = values
        .iter()
        .chain(minimized.iter().flatten())
        .copied()
        .fold(f64::INFINITY, f64::min);
    let verdict = if min_energy < -band {
        Verdict::Negative
    } else if min_energy > band {
        Verdict::Positive
    } else {
        Verdict::Zero
    };
    Ok(InfimumProbe {
        values,
        minimized,
        min_energy,
        band,
        verdict,
    })
}
