//! Closed-form Euclidean wedge geometry.
//!
//! A wedge is bounded by two half-planes `Γ1`, `Γ2` sharing an edge line; its
//! opening angle `θ'` satisfies `ν1·ν2 = -cos θ'` for the outward unit normals.
//! These routines decide when a plane meeting both faces at prescribed contact
//! angles exists, construct it, and measure the corner angle it cuts out.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two half-planes with a common edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wedge {
    /// Outward unit normal of `Γ1`.
    pub nu1: Vector3<f64>,
    /// Outward unit normal of `Γ2`.
    pub nu2: Vector3<f64>,
    /// Unit edge direction; fixes the sign of the out-of-plane component.
    pub edge: Vector3<f64>,
    /// Opening angle in `(0, π)`.
    pub opening: f64,
}

impl Wedge {
    /// Canonical wedge around the z-axis: `Γ1` is the half-plane `y = 0, x > 0`
    /// and `Γ2` is rotated by `θ'` about `e_z`.
    pub fn canonical(opening: f64) -> Result<Self> {
        check_angle(opening)?;
        let nu1 = Vector3::new(0.0, -1.0, 0.0);
        let nu2 = Vector3::new(-opening.sin(), opening.cos(), 0.0);
        Ok(Wedge {
            nu1,
            nu2,
            edge: Vector3::z(),
            opening,
        })
    }

    /// Wedge from two outward face normals and an oriented edge direction.
    pub fn from_normals(nu1: Vector3<f64>, nu2: Vector3<f64>, edge: Vector3<f64>) -> Result<Self> {
        let nu1 = nu1.normalize();
        let nu2 = nu2.normalize();
        let c = (-nu1.dot(&nu2)).clamp(-1.0, 1.0);
        let opening = c.acos();
        check_angle(opening)?;
        let e = nu1.cross(&nu2);
        if e.norm() < 1e-14 {
            return Err(Error::BadAngle(opening));
        }
        let e = e.normalize();
        let e = if e.dot(&edge) < 0.0 { -e } else { e };
        Ok(Wedge {
            nu1,
            nu2,
            edge: e,
            opening,
        })
    }

    /// Unit vector bisecting the wedge interior, orthogonal to the edge.
    pub fn bisector(&self) -> Vector3<f64> {
        (-(self.nu1 + self.nu2)).normalize()
    }

    /// Contact angles a plane with unit normal `nu` makes with the two faces.
    pub fn contact_angles(&self, nu: &Vector3<f64>) -> (f64, f64) {
        let n = nu.normalize();
        let angle = |m: &Vector3<f64>| n.cross(m).norm().atan2(n.dot(m));
        (angle(&self.nu1), angle(&self.nu2))
    }
}

fn check_angle(a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 && a < PI {
        Ok(())
    } else {
        Err(Error::BadAngle(a))
    }
}

/// Open interval of admissible opening angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleWindow {
    pub lower: f64,
    pub upper: f64,
}

impl AngleWindow {
    pub fn contains(&self, theta: f64) -> bool {
        theta > self.lower && theta < self.upper
    }

    pub fn is_empty(&self) -> bool {
        self.lower >= self.upper
    }
}

/// `(|π - (γ1+γ2)|, π - |γ1-γ2|)`.
pub fn angle_window(gamma1: f64, gamma2: f64) -> Result<AngleWindow> {
    check_angle(gamma1)?;
    check_angle(gamma2)?;
    Ok(AngleWindow {
        lower: (PI - (gamma1 + gamma2)).abs(),
        upper: PI - (gamma1 - gamma2).abs(),
    })
}

/// Unit normal of the plane meeting `Γ1`, `Γ2` at contact angles `γ1`, `γ2`:
/// `ν·ν1 = cos γ1`, `ν·ν2 = cos γ2`. Of the two mirror solutions the one with a
/// positive component along the wedge edge is returned.
pub fn plane_from_contact_angles(w: &Wedge, gamma1: f64, gamma2: f64) -> Result<Vector3<f64>> {
    let win = angle_window(gamma1, gamma2)?;
    let (c1, c2) = (gamma1.cos(), gamma2.cos());
    let (st, ct) = (w.opening.sin(), w.opening.cos());
    // orthonormal frame (ν1, e2, edge) with ν2 = -cos θ' ν1 + sin θ' e2
    let e2 = (w.nu2 + w.nu1 * ct) / st;
    let y = (c2 + ct * c1) / st;
    let in_plane = w.nu1 * c1 + e2 * y;
    // 1 - c1² - y² as a product of cosines, free of cancellation
    let th = w.opening;
    let c2_out = -4.0
        * ((th + gamma1 + gamma2) / 2.0).cos()
        * ((th + gamma1 - gamma2) / 2.0).cos()
        * ((th - gamma1 + gamma2) / 2.0).cos()
        * ((th - gamma1 - gamma2) / 2.0).cos()
        / (st * st);
    let scale = 1e-13;
    if c2_out.abs() <= scale || (win.lower - w.opening).abs() <= 1e-13 || (win.upper - w.opening).abs() <= 1e-13 {
        return Err(Error::Tangential);
    }
    if c2_out < 0.0 || !win.contains(w.opening) {
        return Err(Error::NoSolution);
    }
    let nu = in_plane + w.edge * c2_out.sqrt();
    Ok(nu.normalize())
}

/// Corner angle `α` with `cos α = (cos γ1 cos γ2 + cos θ') / (sin γ1 sin γ2)`.
pub fn corner_angle(gamma1: f64, gamma2: f64, opening: f64) -> Result<f64> {
    check_angle(opening)?;
    let win = angle_window(gamma1, gamma2)?;
    if !win.contains(opening) {
        return Err(Error::NoSolution);
    }
    let c = (gamma1.cos() * gamma2.cos() + opening.cos()) / (gamma1.sin() * gamma2.sin());
    Ok(c.clamp(-1.0, 1.0).acos())
}

/// Corner angles at two openings `θa <= θb` and whether `α(θa) <= α(θb)`.
pub fn corner_angle_monotonicity_check(
    gamma1: f64,
    gamma2: f64,
    theta_a: f64,
    theta_b: f64,
) -> Result<(bool, f64, f64)> {
    let aa = corner_angle(gamma1, gamma2, theta_a)?;
    let ab = corner_angle(gamma1, gamma2, theta_b)?;
    let ok = if theta_a <= theta_b { aa <= ab + 1e-15 } else { ab <= aa + 1e-15 };
    Ok((ok, aa, ab))
}

/// Area of a planar polygon in 3-space (vertices in order).
pub fn polygon_area(pts: &[Vector3<f64>]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut s = Vector3::zeros();
    for i in 0..pts.len() {
        s += pts[i].cross(&pts[(i + 1) % pts.len()]);
    }
    0.5 * s.norm()
}

/// Terms of the slice identity for a flat cone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceIdentity {
    pub slice_area: f64,
    /// Apex-side area of each side face cut off by the plane.
    pub face_areas: Vec<f64>,
    /// `slice_area - Σ cos γ_j face_area_j`.
    pub residual: f64,
}

/// Evaluate `|π ∩ ∂E| - Σ cos γ_j |F_j ∩ ∂E|` where `E` is the part of the
/// flat cone (apex `apex`, base polygon `base` in order) on the apex side of
/// the plane `{x : n·x = offset}`.
pub fn cone_slice_identity(
    apex: &Vector3<f64>,
    base: &[Vector3<f64>],
    normal: &Vector3<f64>,
    offset: f64,
    gammas: &[f64],
) -> Result<SliceIdentity> {
    let k = base.len();
    if gammas.len() != k || k < 3 {
        return Err(Error::InvalidDomain("gamma count must match base".into()));
    }
    let n = normal.normalize();
    let sa = n.dot(apex) - offset;
    // each apex-to-base ray must cross the plane strictly inside
    let mut cut = Vec::with_capacity(k);
    for b in base {
        let sb = n.dot(b) - offset;
        if sa * sb >= 0.0 {
            return Err(Error::EmptySlice);
        }
        let t = sa / (sa - sb);
        cut.push(apex + (b - apex) * t);
    }
    let slice_area = polygon_area(&cut);
    let face_areas: Vec<f64> = (0..k)
        .map(|j| polygon_area(&[*apex, cut[j], cut[(j + 1) % k]]))
        .collect();
    let residual = slice_area
        - face_areas
            .iter()
            .zip(gammas)
            .map(|(a, g)| g.cos() * a)
            .sum::<f64>();
    Ok(SliceIdentity {
        slice_area,
        face_areas,
        residual,
    })
}

/// Outcome of [`wedge_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeSuite {
    pub samples: usize,
    pub seed: u64,
    /// Triples where existence of the plane disagrees with the window.
    pub window_mismatches: usize,
    /// Worst contact-angle round-trip error.
    pub max_round_trip: f64,
    pub monotonicity_failures: usize,
    pub pass: bool,
}

/// Random `(γ1, γ2, θ')` triples: plane existence against the window,
/// contact-angle round trip, and monotonicity of the corner angle.
pub fn wedge_suite(samples: usize, seed: u64) -> WedgeSuite {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = WedgeSuite {
        samples,
        seed,
        window_mismatches: 0,
        max_round_trip: 0.0,
        monotonicity_failures: 0,
        pass: false,
    };
    let open = |r: &mut rand_chacha::ChaCha8Rng| loop {
        let x: f64 = r.gen_range(0.0..PI);
        if x > 0.0 {
            return x;
        }
    };
    for _ in 0..samples {
        let (g1, g2, th) = (open(&mut rng), open(&mut rng), open(&mut rng));
        let win = angle_window(g1, g2).unwrap();
        let w = Wedge::canonical(th).unwrap();
        match plane_from_contact_angles(&w, g1, g2) {
            Ok(nu) => {
                if !win.contains(th) {
                    out.window_mismatches += 1;
                }
                let (a, b) = w.contact_angles(&nu);
                out.max_round_trip = out.max_round_trip.max((a - g1).abs()).max((b - g2).abs());
                let th2 = th + rng.gen_range(0.0..1.0) * (win.upper - th);
                if let Ok((ok, _, _)) = corner_angle_monotonicity_check(g1, g2, th, th2) {
                    if !ok {
                        out.monotonicity_failures += 1;
                    }
                }
            }
            Err(Error::Tangential) => {}
            Err(_) => {
                if win.contains(th) {
                    out.window_mismatches += 1;
                }
            }
        }
    }
    out.pass = out.window_mismatches == 0 && out.max_round_trip < 1e-12 && out.monotonicity_failures == 0;
    out
}
