//! Riemannian metrics on a box of 3-space and their curvature tensors.
//!
//! A [`MetricField`] is a pure evaluator `x -> g(x)` with an optional
//! evaluator for the first partial derivatives. Christoffel symbols,
//! Riemann, Ricci and scalar curvature are obtained from second-order
//! central differences of the supplied data.
//!
//! Curvature conventions: `R_{abcd}` is the fully covariant Riemann tensor
//! with `Ric_{bd} = g^{ac} R_{abcd}` so that round spheres have positive
//! Ricci and scalar curvature.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Christoffel symbols of the second kind, indexed `[k][i][j]` for `Γ^k_ij`.
pub type Christoffel = [[[f64; 3]; 3]; 3];

type MetricFn = Arc<dyn Fn(&Point) -> Matrix3<f64> + Send + Sync>;
type DerivFn = Arc<dyn Fn(&Point) -> [Matrix3<f64>; 3] + Send + Sync>;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Aabb { min, max }
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        Aabb::new([lo; 3], [hi; 3])
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..3).all(|i| x[i] >= self.min[i] && x[i] <= self.max[i])
    }

    /// Distance from `x` to the nearest box face (negative outside).
    pub fn inner_distance(&self, x: &Point) -> f64 {
        (0..3)
            .map(|i| (x[i] - self.min[i]).min(self.max[i] - x[i]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn diameter(&self) -> f64 {
        (0..3)
            .map(|i| (self.max[i] - self.min[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn padded(&self, pad: f64) -> Self {
        let mut b = *self;
        for i in 0..3 {
            b.min[i] -= pad;
            b.max[i] += pad;
        }
        b
    }
}

/// A Riemannian metric on a box region.
#[derive(Clone)]
pub struct MetricField {
    name: String,
    eval: MetricFn,
    deriv: Option<DerivFn>,
    h_fd: f64,
    bbox: Aabb,
    flat: bool,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("name", &self.name)
            .field("h_fd", &self.h_fd)
            .field("bbox", &self.bbox)
            .field("analytic_derivative", &self.deriv.is_some())
            .finish()
    }
}

/// Curvature data at a point.
#[derive(Debug, Clone)]
pub struct CurvatureTensors {
    pub metric: Matrix3<f64>,
    pub christoffel: Christoffel,
    /// Fully covariant Riemann tensor `R_{abcd}`.
    pub riemann: [[[[f64; 3]; 3]; 3]; 3],
    pub ricci: Matrix3<f64>,
    pub scalar: f64,
}

impl CurvatureTensors {
    /// `Ric(v, v)` for a vector `v`.
    pub fn ricci_form(&self, v: &Vector3<f64>) -> f64 {
        v.dot(&(self.ricci * v))
    }

    /// `R_{iklm} x^i y^k x^l y^m`; equals `K(x,y) (|x|^2|y|^2 - <x,y>^2)`.
    pub fn riemann_form(&self, x: &Vector3<f64>, y: &Vector3<f64>) -> f64 {
        let r = &self.riemann;
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        s += r[a][b][c][d] * x[a] * y[b] * x[c] * y[d];
                    }
                }
            }
        }
        s
    }
}

/// Result of sampling the scalar curvature sign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarSignReport {
    pub min_scalar: f64,
    pub argmin: [f64; 3],
    pub tolerance: f64,
    pub pass: bool,
}

impl MetricField {
    pub fn new<F>(name: impl Into<String>, bbox: Aabb, eval: F) -> Self
    where
        F: Fn(&Point) -> Matrix3<f64> + Send + Sync + 'static,
    {
        MetricField {
            name: name.into(),
            eval: Arc::new(eval),
            deriv: None,
            h_fd: 1e-3 * bbox.diameter(),
            bbox,
            flat: false,
        }
    }

    /// Attach analytic first derivatives `[dg/dx, dg/dy, dg/dz]`.
    pub fn with_derivative<D>(mut self, d: D) -> Self
    where
        D: Fn(&Point) -> [Matrix3<f64>; 3] + Send + Sync + 'static,
    {
        self.deriv = Some(Arc::new(d));
        self
    }

    pub fn with_h_fd(mut self, h: f64) -> Self {
        self.h_fd = h;
        self
    }

    pub fn with_bbox(mut self, bbox: Aabb) -> Self {
        self.bbox = bbox;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn h_fd(&self) -> f64 {
        self.h_fd
    }

    pub fn bbox(&self) -> Aabb {
        self.bbox
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn has_derivative(&self) -> bool {
        self.deriv.is_some()
    }

    // ---- catalog ---------------------------------------------------------

    pub fn flat(bbox: Aabb) -> Self {
        let mut m = MetricField::new("flat", bbox, |_| Matrix3::identity())
            .with_derivative(|_| [Matrix3::zeros(); 3]);
        m.flat = true;
        m
    }

    /// Conformally flat metric `u^4 δ` from a conformal factor and its gradient.
    pub fn conformal<U, G>(name: impl Into<String>, bbox: Aabb, u: U, grad_u: G) -> Self
    where
        U: Fn(&Point) -> f64 + Send + Sync + Clone + 'static,
        G: Fn(&Point) -> Vector3<f64> + Send + Sync + 'static,
    {
        let u2 = u.clone();
        MetricField::new(name, bbox, move |x| Matrix3::identity() * u(x).powi(4)).with_derivative(
            move |x| {
                let uu = u2(x);
                let gu = grad_u(x);
                let c = 4.0 * uu.powi(3);
                [
                    Matrix3::identity() * (c * gu[0]),
                    Matrix3::identity() * (c * gu[1]),
                    Matrix3::identity() * (c * gu[2]),
                ]
            },
        )
    }

    /// `u = 1 + eps * exp(-|x - c|^2 / sigma^2)`, metric `u^4 δ`.
    pub fn conformal_gaussian(eps: f64, sigma: f64, center: Point, bbox: Aabb) -> Self {
        let s2 = sigma * sigma;
        let u = move |x: &Point| 1.0 + eps * (-(x - center).norm_squared() / s2).exp();
        let gu = move |x: &Point| {
            let d = x - center;
            d * (-2.0 * eps / s2 * (-d.norm_squared() / s2).exp())
        };
        MetricField::conformal(
            format!("conformal_gaussian({eps},{sigma})"),
            bbox,
            u,
            gu,
        )
    }

    /// Diagonal perturbation `diag(1 + eps b, 1 + eps b/2, 1 - eps b/3)` with a
    /// Gaussian bump `b` centred at `center`. Not conformally flat.
    pub fn diag_perturb(eps: f64, center: Point, bbox: Aabb) -> Self {
        let w = Vector3::new(1.0, 0.5, -1.0 / 3.0);
        let bump = move |x: &Point| (-(x - center).norm_squared()).exp();
        MetricField::new(format!("diag_perturb({eps})"), bbox, move |x| {
            let b = bump(x);
            Matrix3::from_diagonal(&Vector3::new(
                1.0 + eps * w[0] * b,
                1.0 + eps * w[1] * b,
                1.0 + eps * w[2] * b,
            ))
        })
        .with_derivative(move |x| {
            let d = x - center;
            let b = (-d.norm_squared()).exp();
            let mut out = [Matrix3::zeros(); 3];
            for (k, m) in out.iter_mut().enumerate() {
                let db = -2.0 * d[k] * b;
                *m = Matrix3::from_diagonal(&(w * (eps * db)));
            }
            out
        })
    }

    /// Symmetric off-diagonal perturbation `δ + eps b (e_x e_y^T + e_y e_x^T)`
    /// plus a diagonal bump; tilts coordinate-plane angles.
    pub fn shear_perturb(eps: f64, center: Point, bbox: Aabb) -> Self {
        let shape = |b: f64, eps: f64| {
            let mut m = Matrix3::identity();
            m[(0, 0)] += eps * b;
            m[(0, 1)] = 0.5 * eps * b;
            m[(1, 0)] = 0.5 * eps * b;
            m[(2, 2)] += 0.5 * eps * b;
            m
        };
        MetricField::new(format!("shear_perturb({eps})"), bbox, move |x| {
            shape((-(x - center).norm_squared()).exp(), eps)
        })
        .with_derivative(move |x| {
            let d = x - center;
            let b = (-d.norm_squared()).exp();
            let mut out = [Matrix3::zeros(); 3];
            for (k, m) in out.iter_mut().enumerate() {
                let db = -2.0 * d[k] * b;
                *m = shape(db, eps) - Matrix3::identity();
            }
            out
        })
    }

    /// Product of a round 2-sphere of the given radius (gnomonic chart centred
    /// at `(cx, cy)`) with a line in `z`. Straight lines of the chart are
    /// geodesics, so planes `x = const`, `y = const` and `z = const` are
    /// totally geodesic. Scalar curvature is `2 / radius^2`.
    pub fn sphere_product(radius: f64, cx: f64, cy: f64, bbox: Aabb) -> Self {
        MetricField::new(format!("sphere_product({radius})"), bbox, move |x| {
            let u = (x[0] - cx) / radius;
            let v = (x[1] - cy) / radius;
            let w = 1.0 + u * u + v * v;
            let s = 1.0 / (w * w);
            Matrix3::new(
                (1.0 + v * v) * s,
                -u * v * s,
                0.0,
                -u * v * s,
                (1.0 + u * u) * s,
                0.0,
                0.0,
                0.0,
                1.0,
            )
        })
    }

    /// Constant metric `L^T L` (the Euclidean metric pulled back by a linear map).
    pub fn linear(l: Matrix3<f64>, bbox: Aabb) -> Self {
        let g = l.transpose() * l;
        MetricField::new("linear", bbox, move |_| g).with_derivative(|_| [Matrix3::zeros(); 3])
    }

    /// Build a catalog metric from its textual name, e.g. `"flat"`,
    /// `"conformal_gaussian(0.1,1)"`, `"conformal_gaussian(0.1,1,0,0,1)"`,
    /// `"diag_perturb(0.1)"`, `"shear_perturb(0.1)"`, `"sphere_product(2)"`.
    /// Bumps without an explicit centre are centred at the box centre.
    pub fn from_spec(spec: &str, bbox: Aabb) -> Result<Self> {
        let spec = spec.trim();
        let (head, args) = match spec.find('(') {
            Some(i) => {
                if !spec.ends_with(')') {
                    return Err(Error::Config(format!("malformed metric spec '{spec}'")));
                }
                let inner = &spec[i + 1..spec.len() - 1];
                let args = inner
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| {
                            Error::Config(format!("bad number '{s}' in metric spec '{spec}'"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (&spec[..i], args)
            }
            None => (spec, Vec::new()),
        };
        let centre = Vector3::new(
            0.5 * (bbox.min[0] + bbox.max[0]),
            0.5 * (bbox.min[1] + bbox.max[1]),
            0.5 * (bbox.min[2] + bbox.max[2]),
        );
        let want = |n: &[usize]| -> Result<()> {
            if n.contains(&args.len()) {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "metric '{head}' expects {n:?} arguments, got {}",
                    args.len()
                )))
            }
        };
        let pick_centre = |off: usize| {
            if args.len() >= off + 3 {
                Vector3::new(args[off], args[off + 1], args[off + 2])
            } else {
                centre
            }
        };
        match head.trim() {
            "flat" => {
                want(&[0])?;
                Ok(MetricField::flat(bbox))
            }
            "conformal_gaussian" => {
                want(&[2, 5])?;
                Ok(MetricField::conformal_gaussian(args[0], args[1], pick_centre(2), bbox))
            }
            "diag_perturb" => {
                want(&[1, 4])?;
                Ok(MetricField::diag_perturb(args[0], pick_centre(1), bbox))
            }
            "shear_perturb" => {
                want(&[1, 4])?;
                Ok(MetricField::shear_perturb(args[0], pick_centre(1), bbox))
            }
            "sphere_product" => {
                want(&[1, 3])?;
                let (cx, cy) = if args.len() == 3 {
                    (args[1], args[2])
                } else {
                    (centre[0], centre[1])
                };
                Ok(MetricField::sphere_product(args[0], cx, cy, bbox))
            }
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }

    // ---- evaluation ------------------------------------------------------

    /// Raw metric components, no domain or definiteness checks.
    #[inline]
    pub fn g(&self, x: &Point) -> Matrix3<f64> {
        (self.eval)(x)
    }

    /// Checked evaluation: inside the box and positive definite.
    pub fn evaluate(&self, x: &Point) -> Result<Matrix3<f64>> {
        if !self.bbox.contains(x) {
            return Err(Error::OutOfDomain([x[0], x[1], x[2]]));
        }
        let m = self.g(x);
        let sym = 0.5 * (m + m.transpose());
        let min_eig = sym.symmetric_eigenvalues().min();
        if min_eig.is_nan() || min_eig <= 0.0 {
            return Err(Error::NotSpd {
                point: [x[0], x[1], x[2]],
                min_eig,
            });
        }
        Ok(sym)
    }

    /// First partial derivatives `[∂_x g, ∂_y g, ∂_z g]`.
    pub fn dg(&self, x: &Point) -> [Matrix3<f64>; 3] {
        if self.flat {
            return [Matrix3::zeros(); 3];
        }
        if let Some(d) = &self.deriv {
            return d(x);
        }
        let h = self.h_fd;
        let mut out = [Matrix3::zeros(); 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut e = Vector3::zeros();
            e[k] = h;
            *o = (self.g(&(x + e)) - self.g(&(x - e))) / (2.0 * h);
        }
        out
    }

    /// Directional derivative of the metric along `v`.
    pub fn dg_along(&self, x: &Point, v: &Vector3<f64>) -> Matrix3<f64> {
        let d = self.dg(x);
        d[0] * v[0] + d[1] * v[1] + d[2] * v[2]
    }

    /// Second partial derivatives `∂_a ∂_b g`, symmetric in `(a, b)`.
    fn ddg(&self, x: &Point) -> [[Matrix3<f64>; 3]; 3] {
        let h = self.h_fd;
        let mut out = [[Matrix3::zeros(); 3]; 3];
        let e = |k: usize| {
            let mut v = Vector3::zeros();
            v[k] = h;
            v
        };
        if let Some(d) = &self.deriv {
            let mut raw = [[Matrix3::zeros(); 3]; 3];
            for a in 0..3 {
                let p = d(&(x + e(a)));
                let m = d(&(x - e(a)));
                for b in 0..3 {
                    raw[a][b] = (p[b] - m[b]) / (2.0 * h);
                }
            }
            for a in 0..3 {
                for b in 0..3 {
                    out[a][b] = 0.5 * (raw[a][b] + raw[b][a]);
                }
            }
        } else {
            let g0 = self.g(x);
            for a in 0..3 {
                out[a][a] = (self.g(&(x + e(a))) - 2.0 * g0 + self.g(&(x - e(a)))) / (h * h);
                for b in (a + 1)..3 {
                    let v = (self.g(&(x + e(a) + e(b))) - self.g(&(x + e(a) - e(b)))
                        - self.g(&(x - e(a) + e(b)))
                        + self.g(&(x - e(a) - e(b))))
                        / (4.0 * h * h);
                    out[a][b] = v;
                    out[b][a] = v;
                }
            }
        }
        out
    }

    /// Christoffel symbols at `x` (no domain check).
    pub fn christoffel(&self, x: &Point) -> Christoffel {
        let g = self.g(x);
        if self.flat {
            return [[[0.0; 3]; 3]; 3];
        }
        let ginv = g.try_inverse().unwrap_or_else(Matrix3::identity);
        let dg = self.dg(x);
        christoffel_from(&ginv, &dg)
    }

    /// `∇_u v` for a constant-coefficient field `v`, i.e. `Γ(u, v)`.
    pub fn gamma_apply(gamma: &Christoffel, u: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for k in 0..3 {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += gamma[k][i][j] * u[i] * v[j];
                }
            }
            out[k] = s;
        }
        out
    }

    /// Curvature tensors by second-order central differences.
    pub fn curvature_at(&self, x: &Point) -> Result<CurvatureTensors> {
        if !self.bbox.contains(x) {
            return Err(Error::OutOfDomain([x[0], x[1], x[2]]));
        }
        if self.bbox.inner_distance(x) < 2.0 * self.h_fd {
            return Err(Error::StencilClipped([x[0], x[1], x[2]]));
        }
        Ok(self.curvature_unchecked(x))
    }

    /// Curvature without the stencil check; callers guarantee the stencil
    /// stays where the evaluator is defined.
    pub fn curvature_unchecked(&self, x: &Point) -> CurvatureTensors {
        let g = self.g(x);
        if self.flat {
            return CurvatureTensors {
                metric: g,
                christoffel: [[[0.0; 3]; 3]; 3],
                riemann: [[[[0.0; 3]; 3]; 3]; 3],
                ricci: Matrix3::zeros(),
                scalar: 0.0,
            };
        }
        let ginv = g.try_inverse().unwrap_or_else(Matrix3::identity);
        let dg = self.dg(x);
        let ddg = self.ddg(x);
        let gam = christoffel_from(&ginv, &dg);

        // R_{iklm} = 1/2 (g_im,kl + g_kl,im - g_il,km - g_km,il)
        //          + g_np (Γ^n_kl Γ^p_im - Γ^n_km Γ^p_il)
        let mut r = [[[[0.0; 3]; 3]; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    for m in 0..3 {
                        let mut v = 0.5
                            * (ddg[k][l][(i, m)] + ddg[i][m][(k, l)]
                                - ddg[k][m][(i, l)]
                                - ddg[i][l][(k, m)]);
                        for n in 0..3 {
                            for p in 0..3 {
                                v += g[(n, p)]
                                    * (gam[n][k][l] * gam[p][i][m] - gam[n][k][m] * gam[p][i][l]);
                            }
                        }
                        r[i][k][l][m] = v;
                    }
                }
            }
        }
        // Ric_{km} = g^{il} R_{iklm}
        let mut ric = Matrix3::zeros();
        for k in 0..3 {
            for m in 0..3 {
                let mut s = 0.0;
                for i in 0..3 {
                    for l in 0..3 {
                        s += ginv[(i, l)] * r[i][k][l][m];
                    }
                }
                ric[(k, m)] = s;
            }
        }
        let ric = 0.5 * (ric + ric.transpose());
        let scalar = (ginv.component_mul(&ric)).sum();
        CurvatureTensors {
            metric: g,
            christoffel: gam,
            riemann: r,
            ricci: ric,
            scalar,
        }
    }

    /// Scalar curvature only.
    pub fn scalar_curvature(&self, x: &Point) -> Result<f64> {
        Ok(self.curvature_at(x)?.scalar)
    }

    /// Sample `R` and report its minimum against `-tolerance`.
    pub fn verify_scalar_sign(&self, samples: &[Point], tolerance: f64) -> Result<ScalarSignReport> {
        if samples.is_empty() {
            return Err(Error::Config("empty sample set".into()));
        }
        let mut min_r = f64::INFINITY;
        let mut arg = samples[0];
        for x in samples {
            let r = self.curvature_at(x)?.scalar;
            if r < min_r {
                min_r = r;
                arg = *x;
            }
        }
        Ok(ScalarSignReport {
            min_scalar: min_r,
            argmin: [arg[0], arg[1], arg[2]],
            tolerance,
            pass: min_r >= -tolerance,
        })
    }

    /// g-inner product.
    #[inline]
    pub fn inner(g: &Matrix3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        a.dot(&(g * b))
    }

    /// Raise a covector and normalise in `g`.
    pub fn unit_from_covector(g: &Matrix3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
        let ginv = g.try_inverse().unwrap_or_else(Matrix3::identity);
        let v = ginv * n;
        v / MetricField::inner(g, &v, &v).sqrt()
    }
}

fn christoffel_from(ginv: &Matrix3<f64>, dg: &[Matrix3<f64>; 3]) -> Christoffel {
    let mut gam = [[[0.0; 3]; 3]; 3];
    // Γ_{l i j} = 1/2 (∂_i g_jl + ∂_j g_il - ∂_l g_ij)
    let mut low = [[[0.0; 3]; 3]; 3];
    for l in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                low[l][i][j] = 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
            }
        }
    }
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += ginv[(k, l)] * low[l][i][j];
                }
                gam[k][i][j] = s;
            }
        }
    }
    gam
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump_u(x: &Point) -> f64 {
        1.0 + 0.1 * (-x.norm_squared()).exp()
    }

    // R = -8 u^{-5} Δu for g = u^4 δ, Δu = 0.1 e^{-r^2} (4 r^2 - 6).
    fn bump_oracle(x: &Point) -> f64 {
        let r2 = x.norm_squared();
        let lap = 0.1 * (-r2).exp() * (4.0 * r2 - 6.0);
        -8.0 * bump_u(x).powi(-5) * lap
    }

    #[test]
    fn flat_is_identity_and_curvature_free() {
        let m = MetricField::flat(Aabb::cube(-1.0, 1.0));
        let x = Vector3::new(0.3, 0.1, 0.7);
        assert_eq!(m.evaluate(&x).unwrap(), Matrix3::identity());
        let c = m.curvature_at(&Vector3::new(0.1, 0.2, 0.3)).unwrap();
        assert_eq!(c.scalar, 0.0);
        assert_eq!(c.ricci, Matrix3::zeros());
    }

    #[test]
    fn conformal_value_at_origin() {
        let m = MetricField::conformal_gaussian(0.1, 1.0, Vector3::zeros(), Aabb::cube(-2.0, 2.0));
        let g = m.evaluate(&Vector3::zeros()).unwrap();
        assert!((g[(0, 0)] - 1.4641).abs() < 1e-12);
        assert!(g[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn outside_box_rejected() {
        let m = MetricField::flat(Aabb::cube(0.0, 1.0));
        assert!(matches!(
            m.evaluate(&Vector3::new(1.5, 0.0, 0.0)),
            Err(Error::OutOfDomain(_))
        ));
        assert!(matches!(
            m.curvature_at(&Vector3::new(1e-4, 0.5, 0.5)),
            Err(Error::StencilClipped(_))
        ));
    }

    #[test]
    fn not_spd_detected() {
        let m = MetricField::new("bad", Aabb::cube(-1.0, 1.0), |_| {
            Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0))
        });
        assert!(matches!(m.evaluate(&Vector3::zeros()), Err(Error::NotSpd { .. })));
    }

    #[test]
    fn conformal_scalar_curvature_matches_oracle() {
        let m = MetricField::conformal_gaussian(0.1, 1.0, Vector3::zeros(), Aabb::cube(-3.0, 3.0))
            .with_h_fd(1e-3);
        let r0 = m.scalar_curvature(&Vector3::zeros()).unwrap();
        assert!((r0 - 48.0 * 0.1 / 1.1f64.powi(5)).abs() < 1e-4 * r0);
        for x in [Vector3::new(0.3, 0.2, -0.1), Vector3::new(1.0, 0.9, 0.4)] {
            let r = m.scalar_curvature(&x).unwrap();
            let o = bump_oracle(&x);
            assert!((r - o).abs() < 1e-4 * o.abs().max(1e-3), "{r} vs {o}");
        }
        let far = Vector3::new(1.0, 0.8, 0.5);
        assert!(far.norm_squared() > 1.5);
        assert!(m.scalar_curvature(&far).unwrap() < 0.0);
    }

    #[test]
    fn fd_only_path_converges_second_order() {
        // No analytic derivative: pure metric stencil.
        let make = |h: f64| {
            MetricField::new("bump-fd", Aabb::cube(-3.0, 3.0), |x| {
                Matrix3::identity() * bump_u(x).powi(4)
            })
            .with_h_fd(h)
        };
        let x = Vector3::new(0.3, -0.2, 0.25);
        let o = bump_oracle(&x);
        let e1 = (make(1e-2).scalar_curvature(&x).unwrap() - o).abs();
        let e2 = (make(5e-3).scalar_curvature(&x).unwrap() - o).abs();
        assert!(e1 / e2 >= 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn sphere_product_scalar_curvature() {
        let m = MetricField::sphere_product(2.0, 0.5, 0.5, Aabb::cube(-1.0, 2.0));
        for x in [Vector3::new(0.5, 0.5, 0.5), Vector3::new(0.1, 0.9, 0.2)] {
            let c = m.curvature_at(&x).unwrap();
            assert!((c.scalar - 0.5).abs() < 1e-5, "R = {}", c.scalar);
            // the z direction is flat
            assert!(c.ricci[(2, 2)].abs() < 1e-6);
        }
    }

    #[test]
    fn riemann_symmetries_and_trace() {
        let m = MetricField::shear_perturb(0.3, Vector3::new(0.1, 0.2, 0.0), Aabb::cube(-2.0, 2.0));
        let c = m.curvature_at(&Vector3::new(0.4, -0.3, 0.2)).unwrap();
        let r = &c.riemann;
        let scale = r.iter().flatten().flatten().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(scale > 0.0);
        for a in 0..3 {
            for b in 0..3 {
                for cc in 0..3 {
                    for d in 0..3 {
                        let v = r[a][b][cc][d];
                        assert!((v + r[b][a][cc][d]).abs() <= 1e-8 * scale);
                        assert!((v + r[a][b][d][cc]).abs() <= 1e-8 * scale);
                        assert!((v - r[cc][d][a][b]).abs() <= 1e-8 * scale);
                        let bianchi = v + r[a][cc][d][b] + r[a][d][b][cc];
                        assert!(bianchi.abs() <= 1e-8 * scale);
                    }
                }
            }
        }
        let ginv = c.metric.try_inverse().unwrap();
        let tr = ginv.component_mul(&c.ricci).sum();
        assert!((tr - c.scalar).abs() <= 1e-10 * c.scalar.abs().max(1e-12));
    }

    #[test]
    fn verify_scalar_sign_reports() {
        let m = MetricField::conformal_gaussian(0.1, 1.0, Vector3::zeros(), Aabb::cube(-2.5, 2.5));
        let inner: Vec<Point> = (0..27)
            .map(|i| {
                Vector3::new(
                    (i % 3) as f64 * 0.5 - 0.5,
                    ((i / 3) % 3) as f64 * 0.5 - 0.5,
                    (i / 9) as f64 * 0.5 - 0.5,
                )
            })
            .collect();
        let rep = m.verify_scalar_sign(&inner, 1e-10).unwrap();
        assert!(rep.pass && rep.min_scalar > 0.0);
        let wide: Vec<Point> = inner.iter().map(|x| x * 2.0).collect();
        let rep = m.verify_scalar_sign(&wide, 1e-10).unwrap();
        assert!(!rep.pass && rep.min_scalar < 0.0);
    }

    #[test]
    fn catalog_parsing() {
        let b = Aabb::cube(-1.0, 2.0);
        assert!(MetricField::from_spec("flat", b).unwrap().is_flat());
        assert!(MetricField::from_spec("conformal_gaussian(0.1, 1)", b).is_ok());
        assert!(MetricField::from_spec("conformal_gaussian(0.1,1,0,0,1)", b).is_ok());
        assert!(MetricField::from_spec("diag_perturb(0.1)", b).is_ok());
        assert!(MetricField::from_spec("sphere_product(2)", b).is_ok());
        assert!(MetricField::from_spec("diag_perturb()", b).is_err());
        assert!(MetricField::from_spec("nope(1)", b).is_err());
    }
}
