//! One test per acceptance criterion; each prints a single PASS/FAIL line.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use nalgebra::Vector3;
use polyscal::domain::PolyhedralDomain;
use polyscal::foliation::{dynamics_check, evolution_lemma_check, foliate, neumann_solve, LeafFamily, LeafOptions};
use polyscal::mesh::{
    boundary_identity_residual, contact_angles, gauss_bonnet_residual, gauss_bonnet_residual_fit, geometry_report,
    graph_mesh, horizontal_slice, map_surface, perturbed, refine, vertex_masses, vertex_normals,
};
use polyscal::solver::{energy, minimize, SolverOptions};
use polyscal::stability::{
    assemble, comparison_verdict, lowest_two, min_eigenvalue, rigidity_certificate, ComparisonVerdict,
};
use polyscal::wedge::{angle_window, corner_angle, plane_from_contact_angles, Wedge};
use polyscal::{Aabb, Error, MetricField, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn flat() -> MetricField {
    MetricField::flat(Aabb::cube(-1.0, 2.0))
}

fn verdict(n: u32, ok: bool, detail: String, t: Instant, budget: f64) {
    let secs = t.elapsed().as_secs_f64();
    let ok = ok && secs < budget;
    println!("criterion {n}: {} ({detail}; {secs:.2}s of {budget}s)", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n}: {detail}; {secs:.2}s");
}

// Corner angle by intersecting the plane through the edge foot with
// one ray in each half-plane of the canonical wedge.
fn brute_corner(nu: &Vector3<f64>, opening: f64) -> f64 {
    let u1 = Vector3::new(1.0, 0.0, 0.0);
    let u2 = Vector3::new(opening.cos(), opening.sin(), 0.0);
    let a = u1 - Vector3::z() * (nu.dot(&u1) / nu.z);
    let b = u2 - Vector3::z() * (nu.dot(&u2) / nu.z);
    (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
}

#[test]
fn criterion_01_wedge_lemmas() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let (mut mismatch, mut rt, mut corner, mut mono) = (0usize, 0.0f64, 0.0f64, 0usize);
    let mut solved = 0;
    for _ in 0..100_000 {
        let g1 = rng.gen_range(1e-6..PI - 1e-6);
        let g2 = rng.gen_range(1e-6..PI - 1e-6);
        let th = rng.gen_range(1e-6..PI - 1e-6);
        let lo = (PI - (g1 + g2)).abs();
        let hi = PI - (g1 - g2).abs();
        let inside = th > lo && th < hi;
        let win = angle_window(g1, g2).unwrap();
        if (win.lower - lo).abs() > 1e-15 || (win.upper - hi).abs() > 1e-15 {
            mismatch += 1;
        }
        let w = Wedge::canonical(th).unwrap();
        match plane_from_contact_angles(&w, g1, g2) {
            Ok(nu) => {
                solved += 1;
                if !inside {
                    mismatch += 1;
                    continue;
                }
                let a1 = nu.cross(&w.nu1).norm().atan2(nu.dot(&w.nu1));
                let a2 = nu.cross(&w.nu2).norm().atan2(nu.dot(&w.nu2));
                rt = rt.max((a1 - g1).abs()).max((a2 - g2).abs());
                let a = corner_angle(g1, g2, th).unwrap();
                corner = corner.max((a - brute_corner(&nu, th)).abs());
                let th2 = rng.gen_range(th..hi);
                if corner_angle(g1, g2, th2).unwrap() < a {
                    mono += 1;
                }
            }
            Err(Error::Tangential) => {}
            Err(_) => {
                if inside {
                    mismatch += 1;
                }
            }
        }
    }
    let ok = mismatch == 0 && rt < 1e-12 && corner < 1e-10 && mono == 0 && solved > 10_000;
    verdict(
        1,
        ok,
        format!("{solved} planes, window mismatches {mismatch}, round trip {rt:.1e}, corner vs brute force {corner:.1e}, non-monotone {mono}"),
        t,
        10.0,
    );
}

#[test]
fn criterion_02_cone_slice_identity() {
    let t = Instant::now();
    let cone = PolyhedralDomain::square_cone(1.0).unwrap();
    let gamma = cone.model_angles().gamma;
    let mut worst: f64 = 0.0;
    for z in [0.2, 0.5, 0.8] {
        let s = horizontal_slice(&cone, z, 0.1).unwrap();
        worst = worst.max(energy(&cone, &s, &flat(), &gamma).unwrap().abs());
    }
    // geometric angles 0.1 rad larger than the energy angles
    let steep = PolyhedralDomain::square_cone(0.5 * (gamma[0] + 0.1).tan()).unwrap();
    let s = horizontal_slice(&steep, 0.5 * steep.height(), 0.1).unwrap();
    let e = energy(&steep, &s, &flat(), &gamma).unwrap();
    verdict(
        2,
        worst < 1e-12 && e < -1e-3,
        format!("model-angle slices |F| <= {worst:.1e}, inflated-angle slice F = {e:.4e}"),
        t,
        1.0,
    );
}

#[test]
fn criterion_03_flat_cube_minimization() {
    let t = Instant::now();
    let cube = PolyhedralDomain::unit_cube();
    let h = 1.0 / 16.0;
    let init = perturbed(&horizontal_slice(&cube, 0.5, h).unwrap(), &cube, 0.05);
    let (s, r) = minimize(&cube, &flat(), &[FRAC_PI_2; 4], &init, &SolverOptions::default()).unwrap();
    let zbar = s.vertices.iter().map(|x| x.z).sum::<f64>() / s.vertices.len() as f64;
    let dev = s.vertices.iter().map(|x| (x.z - zbar).abs()).fold(0.0, f64::max);
    let ang = r.contact_angle_residual.iter().cloned().fold(0.0, f64::max);
    let ok = r.converged
        && (1.0..=1.005).contains(&r.energy)
        && r.mean_curvature_inf < 0.05
        && ang < 0.02
        && dev < 2.0 * h * h;
    verdict(
        3,
        ok,
        format!(
            "converged {}, F = {:.10}, |H| = {:.1e}, angle residual {ang:.1e}, planarity {dev:.1e}",
            r.converged, r.energy, r.mean_curvature_inf
        ),
        t,
        60.0,
    );
}

#[test]
fn criterion_04_gauss_bonnet() {
    let t = Instant::now();
    let cube = PolyhedralDomain::unit_cube();
    let cone = PolyhedralDomain::square_cone(1.0).unwrap();
    let sphere = MetricField::sphere_product(2.0, 0.5, 0.5, Aabb::cube(-1.0, 2.0));
    let mut defect: f64 = 0.0;
    for (p, f) in [(&cube, flat()), (&cube, sphere.clone()), (&cone, flat())] {
        let s = perturbed(&horizontal_slice(p, 0.4 * p.height(), 0.1).unwrap(), p, 0.03);
        defect = defect.max(gauss_bonnet_residual(&geometry_report(p, &s, &f).unwrap()));
    }
    let sine = |x: f64, y: f64| 0.5 + 0.1 * (PI * x).sin() * (PI * y).sin();
    let mut s = graph_mesh(&cube, 0.5, 0.1, sine).unwrap();
    let mut fit = Vec::new();
    for _ in 0..2 {
        let r = geometry_report(&cube, &s, &flat()).unwrap();
        defect = defect.max(gauss_bonnet_residual(&r));
        fit.push(gauss_bonnet_residual_fit(&r));
        s = map_surface(&refine(&s, &cube), &cube, |x| Vector3::new(x.x, x.y, sine(x.x, x.y)));
    }
    let ratio = fit[1] / fit[0];
    verdict(
        4,
        defect < 1e-10 && ratio <= 0.6,
        format!("angle-defect residual {defect:.1e}, fitted-K residuals {:.2e} -> {:.2e} (ratio {ratio:.2})", fit[0], fit[1]),
        t,
        30.0,
    );
}

#[test]
fn criterion_05_boundary_identity() {
    let t = Instant::now();
    let cone = PolyhedralDomain::square_cone(1.0).unwrap();
    let s = horizontal_slice(&cone, 0.5, 0.05).unwrap();
    let flat_res = boundary_identity_residual(&cone, &s, &flat(), 1e-8, None).unwrap().max_residual;
    let p = PolyhedralDomain::box_prism((-0.5, 0.5), (-0.5, 0.5), 1.0).unwrap();
    let cat = |x: f64, y: f64| -0.5 + (x.cosh().powi(2) - y * y).sqrt();
    let mut res = Vec::new();
    for h in [0.05, 0.025] {
        let s = graph_mesh(&p, 0.5, h, cat).unwrap();
        res.push(boundary_identity_residual(&p, &s, &flat(), 0.5, Some(&[1, 3])).unwrap().max_residual);
    }
    let ratio = res[1] / res[0];
    verdict(
        5,
        flat_res < 1e-8 && ratio <= 0.6,
        format!("flat cone slice {flat_res:.1e}, catenoid {:.2e} -> {:.2e} (ratio {ratio:.2})", res[0], res[1]),
        t,
        30.0,
    );
}

#[test]
fn criterion_06_curvature_engine() {
    let t = Instant::now();
    let (eps, sigma) = (0.1, 1.0);
    let c = Point::new(0.0, 0.0, 0.0);
    let oracle = |x: &Point| {
        let r2 = (x - c).norm_squared() / (sigma * sigma);
        let e = (-r2).exp();
        let u = 1.0 + eps * e;
        let lap = eps * e * (4.0 * r2 - 6.0) / (sigma * sigma);
        -8.0 * u.powi(-5) * lap
    };
    let pts = [Point::new(0.0, 0.0, 0.0), Point::new(0.3, 0.2, -0.1), Point::new(0.7, -0.5, 0.4), Point::new(1.0, 0.9, 0.4)];
    let err = |hfd: f64| {
        let m = MetricField::conformal_gaussian(eps, sigma, c, Aabb::cube(-3.0, 3.0)).with_h_fd(hfd);
        pts.iter()
            .map(|x| {
                let o = oracle(x);
                (m.scalar_curvature(x).unwrap() - o).abs() / o.abs()
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(1e-3), err(5e-4));
    let (c1, c2) = (err(1e-2), err(5e-3));
    verdict(
        6,
        e1 < 1e-4 && c1 / c2 >= 3.5,
        format!("relative error {e1:.1e} at h_fd=1e-3 ({e2:.1e} at 5e-4), ratio {:.2} for 1e-2 -> 5e-3", c1 / c2),
        t,
        5.0,
    );
}

#[test]
fn criterion_07_stability_operator() {
    let t = Instant::now();
    let cube = PolyhedralDomain::unit_cube();
    let g = [FRAC_PI_2; 4];
    let s = horizontal_slice(&cube, 0.5, 0.1).unwrap();
    let op = assemble(&cube, &s, &flat(), &g, 1e-8).unwrap();
    let e = min_eigenvalue(&op).unwrap();
    let mean = e.vector.iter().sum::<f64>() / e.vector.len() as f64;
    let spread = e.vector.iter().map(|f| ((f - mean) / mean).abs()).fold(0.0, f64::max);
    let mut errs = Vec::new();
    let mut m = horizontal_slice(&cube, 0.5, 0.25).unwrap();
    for _ in 0..3 {
        let (_, e2) = lowest_two(&assemble(&cube, &m, &flat(), &g, 1e-8).unwrap()).unwrap();
        errs.push((e2.value - PI * PI).abs());
        m = refine(&m, &cube);
    }
    let f0 = energy(&cube, &s, &flat(), &g).unwrap();
    let d = 1e-3;
    let mut form_err: f64 = 0.0;
    for (a, b) in [(1.0, 0.0), (0.0, 2.0), (1.5, 1.0)] {
        let f: Vec<f64> = s.vertices.iter().map(|x| (PI * a * x.x).cos() * (PI * b * x.y).cos() + 0.3 * x.x).collect();
        let mv = |sg: f64| {
            let mut t = s.clone();
            for (x, fv) in t.vertices.iter_mut().zip(&f) {
                x.z += sg * d * fv;
            }
            energy(&cube, &t, &flat(), &g).unwrap()
        };
        let d2 = (mv(1.0) - 2.0 * f0 + mv(-1.0)) / (d * d);
        let q = op.quadratic_form(&f);
        form_err = form_err.max((d2 - q).abs() / q.abs());
    }
    let quad = errs[1] / errs[0] < 0.35 && errs[2] / errs[1] < 0.35;
    verdict(
        7,
        e.value.abs() < 1e-8 && spread < 1e-6 && quad && form_err < 0.03,
        format!(
            "lambda_min {:.1e}, eigenvector spread {spread:.1e}, |lambda_2 - pi^2| {:.2e} {:.2e} {:.2e}, form vs second difference {form_err:.1e}",
            e.value, errs[0], errs[1], errs[2]
        ),
        t,
        60.0,
    );
}

#[test]
fn criterion_08_comparison_verifier() {
    let t = Instant::now();
    let cube = PolyhedralDomain::unit_cube();
    let h = 0.125;
    let init = perturbed(&horizontal_slice(&cube, 0.5, h).unwrap(), &cube, 0.02);
    let b = Aabb::cube(-1.0, 2.0);
    let metrics = [
        flat(),
        MetricField::sphere_product(2.0, 0.5, 0.5, b),
        MetricField::sphere_product(3.0, 0.3, 0.6, b),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for f in &metrics {
        let gamma = cube.model_angles().gamma;
        match comparison_verdict(&cube, f, &gamma, &init, &SolverOptions::default()) {
            Ok(l) => {
                ok &= l.verdict == ComparisonVerdict::Consistent && l.l_value >= -l.tol && l.min_scalar_curvature >= -1e-8;
                parts.push(format!("{}: L = {:.3e} (tol {:.2})", f.name(), l.l_value, l.tol));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{}: {e}", f.name()));
            }
        }
    }
    verdict(8, ok, parts.join(", "), t, 300.0);
}

#[test]
fn criterion_09_neumann_solver() {
    let t = Instant::now();
    let cube = PolyhedralDomain::unit_cube();
    let mut s = horizontal_slice(&cube, 0.5, 0.125).unwrap();
    let mut errs = Vec::new();
    for _ in 0..3 {
        let exact: Vec<f64> = s.vertices.iter().map(|x| (PI * x.x).cos() * (PI * x.y).cos()).collect();
        let f: Vec<f64> = exact.iter().map(|u| -2.0 * PI * PI * u).collect();
        let zero = vec![0.0; exact.len()];
        let u = neumann_solve(&s, &flat(), &f, &zero).unwrap();
        let m = vertex_masses(&s, &flat());
        let num: f64 = (0..u.len()).map(|v| m[v] * (u[v] - exact[v]).powi(2)).sum();
        let den: f64 = (0..u.len()).map(|v| m[v] * exact[v].powi(2)).sum();
        errs.push((num / den).sqrt());
        s = refine(&s, &cube);
    }
    let one = vec![1.0; s.vertices.len()];
    let zero = vec![0.0; s.vertices.len()];
    let rejected = matches!(neumann_solve(&s, &flat(), &one, &zero), Err(Error::Incompatible(_)));
    let (r1, r2) = (errs[0] / errs[1], errs[1] / errs[2]);
    verdict(
        9,
        r1 >= 3.5 && r2 >= 3.5 && rejected,
        format!("L2 errors {:.2e} {:.2e} {:.2e} (ratios {r1:.2}, {r2:.2}), incompatible rejected {rejected}", errs[0], errs[1], errs[2]),
        t,
        10.0,
    );
}

#[test]
fn criterion_10_foliation_dynamics() {
    let t = Instant::now();
    let cone = PolyhedralDomain::square_cone(1.0).unwrap();
    let gamma = cone.model_angles().gamma;
    let opts = LeafOptions::default();
    let fam = LeafFamily::new(&cone, 0.125).unwrap();
    let tr = foliate(&cone, &flat(), &gamma, &fam, (0.1, 1.0), 20, &opts).unwrap();
    let flat_lam = tr.lambdas().iter().map(|l| l.abs()).fold(0.0, f64::max);
    let apex = cone.apex().unwrap();
    let field = MetricField::conformal_gaussian(0.3, 0.6, apex, Aabb::cube(-1.0, 2.0));
    let tr = foliate(&cone, &field, &gamma, &fam, (0.05, 0.4), 14, &opts).unwrap();
    let lam = tr.lambdas();
    let (l0, l1) = (lam[0].abs(), lam[lam.len() - 1].abs());
    let d = dynamics_check(&tr, &cone, &field, &fam).unwrap();
    let ok = flat_lam < 1e-8 && tr.truncated.is_none() && l0 < 0.5 * l1 && d.min_residual >= -d.tolerance;
    verdict(
        10,
        ok,
        format!(
            "flat max|lambda| {flat_lam:.1e}; conformal |lambda(0.05)| = {l0:.4}, |lambda(0.4)| = {l1:.4}, min residual {:.3e} vs tolerance {:.3e}",
            d.min_residual, d.tolerance
        ),
        t,
        300.0,
    );
}

// Ric(N,N) of u⁴δ on a horizontal plane through the bump centre, N vertical.
fn conformal_ricci_nn(eps: f64, sigma: f64, c: &Point, x: &Point) -> f64 {
    let d = x - c;
    let s2 = sigma * sigma;
    let e = (-d.norm_squared() / s2).exp();
    let u = 1.0 + eps * e;
    let grad_u = d * (-2.0 * eps * e / s2);
    let lap_u = eps * e * (4.0 * d.norm_squared() / (s2 * s2) - 6.0 / s2);
    let uzz = eps * e * (4.0 * d.z * d.z / (s2 * s2) - 2.0 / s2);
    // φ = 2 ln u
    let grad_phi = grad_u * (2.0 / u);
    let phi_zz = 2.0 * (uzz / u - grad_u.z * grad_u.z / (u * u));
    let lap_phi = 2.0 * (lap_u / u - grad_u.norm_squared() / (u * u));
    let ric_zz = -(phi_zz - grad_phi.z * grad_phi.z) - (lap_phi + grad_phi.norm_squared());
    ric_zz / (u * u * u * u)
}

#[test]
fn criterion_11_evolution_lemmas() {
    let t = Instant::now();
    let cube = PolyhedralDomain::unit_cube();
    let s = horizontal_slice(&cube, 0.5, 1.0 / 32.0).unwrap();
    let cosx: Vec<f64> = s.vertices.iter().map(|x| (PI * x.x).cos()).collect();
    let one = vec![1.0; s.vertices.len()];
    let dt = 1e-3;
    let mut parts = Vec::new();
    let mut ok = true;

    let c = evolution_lemma_check(&cube, &flat(), &s, &cosx, dt, 1e-8).unwrap();
    let exact_err = c
        .mean_curvature_samples
        .iter()
        .map(|(v, fd, _)| (fd + PI * PI * (PI * s.vertices[*v].x).cos()).abs())
        .fold(0.0, f64::max)
        / (PI * PI);
    ok &= exact_err < 0.02 && c.mean_curvature.relative < 0.02 && c.angle.max_abs < 0.03;
    parts.push(format!(
        "flat cos: dH/dt vs -pi^2 cos {exact_err:.1e}, vs linearization {:.1e}, angle abs {:.1e}",
        c.mean_curvature.relative, c.angle.max_abs
    ));
    let c = evolution_lemma_check(&cube, &flat(), &s, &one, dt, 1e-8).unwrap();
    ok &= c.mean_curvature.max_abs < 1e-8 && c.angle.max_abs < 1e-8;
    parts.push(format!("flat one: {:.1e} {:.1e}", c.mean_curvature.max_abs, c.angle.max_abs));

    let centre = Point::new(0.5, 0.5, 0.5);
    let field = MetricField::conformal_gaussian(0.3, 0.4, centre, Aabb::cube(-1.0, 2.0));
    let c = evolution_lemma_check(&cube, &field, &s, &one, dt, 1e-2).unwrap();
    let scale = c
        .mean_curvature_samples
        .iter()
        .map(|(v, _, _)| conformal_ricci_nn(0.3, 0.4, &centre, &s.vertices[*v]).abs())
        .fold(0.0, f64::max);
    let oracle_err = c
        .mean_curvature_samples
        .iter()
        .map(|(v, fd, _)| (fd - conformal_ricci_nn(0.3, 0.4, &centre, &s.vertices[*v])).abs())
        .fold(0.0, f64::max)
        / scale;
    ok &= oracle_err < 0.03 && c.mean_curvature.relative < 0.03 && c.angle.relative < 0.03;
    parts.push(format!(
        "conformal one: dH/dt vs Ric(N,N) oracle {oracle_err:.1e}, vs linearization {:.1e}, angle {:.1e}",
        c.mean_curvature.relative, c.angle.relative
    ));
    let c = evolution_lemma_check(&cube, &field, &s, &cosx, dt, 1e-2).unwrap();
    ok &= c.mean_curvature.relative < 0.03 && c.angle.relative < 0.03;
    parts.push(format!(
        "conformal cos: {:.1e}, angle {:.1e}",
        c.mean_curvature.relative, c.angle.relative
    ));
    verdict(11, ok, parts.join("; "), t, 60.0);
}

#[test]
fn criterion_12_rigidity_pipeline() {
    let t = Instant::now();
    let opts = LeafOptions::default();
    let mut worst: f64 = 0.0;
    let mut spread = Vec::new();
    let mut leaves = 0;
    let cube = PolyhedralDomain::unit_cube();
    let cone = PolyhedralDomain::square_cone(1.0).unwrap();
    for (p, range, gamma) in [
        (&cube, (0.3, 0.7), vec![FRAC_PI_2; 4]),
        (&cone, (0.2, 1.0), cone.model_angles().gamma),
    ] {
        let fam = LeafFamily::new(p, 0.125).unwrap();
        let tr = foliate(p, &flat(), &gamma, &fam, range, 8, &opts).unwrap();
        assert!(tr.truncated.is_none());
        let model = p.model_angles();
        let mut e = Vec::new();
        for l in &tr.leaves {
            let s = fam.surface(&l.params);
            worst = worst.max(rigidity_certificate(p, &s, &flat(), &model).unwrap().max_residual());
            let n = vertex_normals(&s, &flat());
            for j in 0..p.k() {
                for (_, a) in contact_angles(p, &s, j, &flat(), &n).unwrap() {
                    assert!((a - gamma[j]).abs() < 1e-8);
                }
            }
            e.push(l.energy);
            leaves += 1;
        }
        let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        spread.push(hi - lo);
    }
    verdict(
        12,
        worst < 1e-6 && spread.iter().all(|s| *s < 1e-8),
        format!("{leaves} leaves, max rigidity residual {worst:.1e}, F spread cube {:.1e} cone {:.1e}", spread[0], spread[1]),
        t,
        120.0,
    );
}
