use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use chebmap_core::distortion::{classify_euler, local_scales, DEFAULT_STEP, DEFAULT_TOL};
use chebmap_core::geo::{GeoPoint, PlanePoint, Region, Vec3};
use chebmap_core::laplace::{build_grid, harmonic_conjugate, integrate_holomorphic, ComplexField, ScalarField};
use chebmap_core::net::{build_net, darboux_net, edge_length_check, sine_gordon_residual, Surface, VertexStatus};
use chebmap_core::projections::{fit_circle_or_line, great_circle_image_check, make_projection, ProjectionKind};
use chebmap_core::EulerClass;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disk(r: f64, n: usize) -> Vec<PlanePoint> {
    (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            PlanePoint::new(r * a.cos(), r * a.sin())
        })
        .collect()
}

#[test]
fn conjugate_of_re_z_squared() {
    let g = build_grid(&disk(1.0, 1024), 96).unwrap();
    let f = ScalarField::from_fn(&g, |p| p.x * p.x - p.y * p.y);
    let anchor = g.nearest_interior(PlanePoint::new(0.2, 0.1));
    let v = harmonic_conjugate(&f, anchor).unwrap();
    let a = g.center(anchor);
    let worst = g
        .interior_cells()
        .map(|c| {
            let z = g.center(c);
            (v.at(c) - (2.0 * z.x * z.y - 2.0 * a.x * a.y)).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn integrating_z_gives_half_z_squared() {
    let g = Arc::new(build_grid(&disk(1.0, 1024), 80).unwrap());
    let mut values = vec![Complex64::new(f64::NAN, f64::NAN); g.nx * g.ny];
    for c in g.interior_cells() {
        let z = g.center(c);
        values[c.j * g.nx + c.i] = Complex64::new(z.x, z.y);
    }
    for (c, p) in g.boundary_cells().zip(g.boundary_points()) {
        values[c.j * g.nx + c.i] = Complex64::new(p.x, p.y);
    }
    let fprime = ComplexField { grid: g.clone(), values };
    let anchor = g.nearest_interior(PlanePoint::new(0.0, 0.0));
    let za = g.center(anchor);
    let za = Complex64::new(za.x, za.y);
    let f = integrate_holomorphic(&fprime, anchor, Complex64::new(1.0, 2.0)).unwrap();
    for c in g.interior_cells() {
        let z = g.center(c);
        let z = Complex64::new(z.x, z.y);
        let expect = 0.5 * (z * z - za * za) + Complex64::new(1.0, 2.0);
        assert!((f.at(c) - expect).norm() < 1e-9, "{c:?}");
    }
}

#[test]
fn stereographic_maps_great_circles_to_circles() {
    let map = make_projection(ProjectionKind::Stereographic {
        center: GeoPoint::from_degrees(15.0, 25.0),
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let axis = GeoPoint::new(rng.gen_range(-PI..PI), rng.gen_range(-1.0f64..1.0).asin()).to_vec3();
        assert!(great_circle_image_check(&map, axis, 180, 1e-6).unwrap(), "{axis:?}");
    }
}

#[test]
fn mercator_great_circles() {
    let map = make_projection(ProjectionKind::Mercator).unwrap();
    assert!(great_circle_image_check(&map, Vec3::Z, 64, 1e-6).unwrap());
    let tilted = Vec3::new(0.0, -(FRAC_PI_2 / 2.0).sin(), (FRAC_PI_2 / 2.0).cos());
    assert!(!great_circle_image_check(&map, tilted, 64, 1e-6).unwrap());
    assert!(great_circle_image_check(&map, Vec3::Z, 7, 1e-6).is_err());
}

#[test]
fn lagrange_graticule_is_circular() {
    for n in [1.0, 0.5] {
        let map = make_projection(ProjectionKind::LagrangeCircle { n }).unwrap();
        for k in 0..10 {
            let lon = (-160.0 + 35.0 * k as f64).to_radians();
            let meridian: Vec<PlanePoint> = (0..60)
                .map(|s| GeoPoint::new(lon, (-80.0 + 160.0 * s as f64 / 59.0).to_radians()))
                .filter_map(|p| map.forward(p).ok())
                .collect();
            let lat = (-75.0 + 16.0 * k as f64).to_radians();
            let parallel: Vec<PlanePoint> = (0..60)
                .map(|s| GeoPoint::new((-170.0 + 340.0 * s as f64 / 59.0).to_radians(), lat))
                .filter_map(|p| map.forward(p).ok())
                .collect();
            for line in [meridian, parallel] {
                assert!(line.len() > 40);
                let fit = fit_circle_or_line(&line).unwrap();
                assert!(fit.max_residual() < 1e-6, "n={n} k={k}: {fit:?}");
            }
        }
    }
}

#[test]
fn cylindrical_graticules_are_rectangular() {
    for kind in [ProjectionKind::Mercator, ProjectionKind::EqualAreaCylindrical] {
        let map = make_projection(kind).unwrap();
        for lon in [-150.0f64, -20.0, 0.0, 75.0] {
            let xs: Vec<f64> = [-60.0f64, -10.0, 30.0, 70.0]
                .iter()
                .map(|&lat| map.forward(GeoPoint::from_degrees(lon, lat)).unwrap().x)
                .collect();
            assert!(xs.iter().all(|x| (x - xs[0]).abs() < 1e-12), "{kind:?} meridian {lon}");
        }
        for lat in [-50.0f64, 0.0, 45.0] {
            let ys: Vec<f64> = [-170.0f64, -30.0, 60.0]
                .iter()
                .map(|&lon| map.forward(GeoPoint::from_degrees(lon, lat)).unwrap().y)
                .collect();
            assert!(ys.iter().all(|y| (y - ys[0]).abs() < 1e-12), "{kind:?} parallel {lat}");
        }
    }
}

#[test]
fn conic_point_six_matches_closed_form() {
    // f(z) = (1/n) exp(-n (y - i x)) in Mercator coordinates, up to a
    // similarity fixed by the map's normalization
    let map = make_projection(ProjectionKind::normal_conic(0.6, 0.0)).unwrap();
    let f = |p: GeoPoint| {
        let z = chebmap_core::mercator_forward(p).unwrap();
        (Complex64::new(-0.6 * z.y, 0.6 * z.x)).exp() / 0.6
    };
    let pts = [
        GeoPoint::from_degrees(0.0, 30.0),
        GeoPoint::from_degrees(20.0, 50.0),
        GeoPoint::from_degrees(-40.0, -10.0),
        GeoPoint::from_degrees(100.0, 70.0),
    ];
    let src: Vec<Complex64> = pts.iter().map(|&p| f(p)).collect();
    let dst: Vec<Complex64> = pts
        .iter()
        .map(|&p| {
            let q = map.forward(p).unwrap();
            Complex64::new(q.x, q.y)
        })
        .collect();
    let fit = chebmap_core::optimal::similarity_align(&src, &dst).unwrap();
    assert!(fit.max_discrepancy < 1e-12 * fit.alpha.norm(), "{fit:?}");
    for p in pts {
        let s = local_scales(&map, p, DEFAULT_STEP).unwrap();
        assert!((s.tissot_a - s.tissot_b) / s.tissot_a < 1e-8);
    }
}

#[test]
fn euler_property_sweep() {
    use EulerClass::*;
    let region = Region::quadrangle("q", -0.4, 0.4, 0.3, 0.9, 16).unwrap();
    let expect: [(ProjectionKind, BTreeSet<EulerClass>); 6] = [
        (ProjectionKind::Mercator, BTreeSet::from([H1, H2])),
        (ProjectionKind::EqualAreaCylindrical, BTreeSet::from([H1, H3])),
        (
            ProjectionKind::Stereographic {
                center: GeoPoint::from_degrees(0.0, 35.0),
            },
            BTreeSet::from([H2]),
        ),
        (ProjectionKind::normal_conic(0.7, 0.0), BTreeSet::from([H2])),
        (ProjectionKind::LagrangeCircle { n: 0.5 }, BTreeSet::from([H2])),
        (
            ProjectionKind::DelisleConic {
                lat1: 0.35,
                lat2: 0.8,
                central_meridian: 0.0,
            },
            BTreeSet::new(),
        ),
    ];
    for (kind, classes) in expect {
        let got = classify_euler(&make_projection(kind).unwrap(), &region, 24, DEFAULT_TOL).unwrap();
        assert_eq!(got, classes, "{kind}");
    }
}

#[test]
fn sphere_base_cell_balances_curvature() {
    let net = build_net(Surface::Sphere { radius: 1.0 }, FRAC_PI_2, 0.02, 10).unwrap();
    let phi: Vec<f64> = [(0, 0), (1, 0), (0, 1), (1, 1)]
        .iter()
        .map(|&(i, j)| net.angle(i, j).unwrap())
        .collect();
    let mixed = (phi[3] - phi[1] - phi[2] + phi[0]) / (0.02 * 0.02);
    let mean = phi.iter().sum::<f64>() / 4.0;
    // D_uv phi ~ -K sin(phi), with sin(phi0) = 1
    assert!((mixed + mean.sin()).abs() < 0.05, "{mixed}");
}

#[test]
fn darboux_sphere_nets() {
    let s = Surface::Sphere { radius: 1.0 };
    let coarse = darboux_net(s, 1.2, 0.04, 0.06, 20).unwrap();
    let fine = darboux_net(s, 1.2, 0.02, 0.03, 40).unwrap();
    for net in [&coarse, &fine] {
        let e = edge_length_check(net);
        assert!(e.max_deviation_i < 1e-9 && e.max_deviation_j < 1e-9);
        assert_eq!(net.count(VertexStatus::Torn), 0);
    }
    let (r1, r2) = (sine_gordon_residual(&coarse).unwrap(), sine_gordon_residual(&fine).unwrap());
    assert!(r1.max / r2.max >= 1.8, "{} {}", r1.max, r2.max);
}

#[test]
fn sphere_net_angle_drift_matches_dot_product() {
    let net = build_net(Surface::Sphere { radius: 2.0 }, 1.0, 0.1, 12).unwrap();
    let mut drift: f64 = 0.0;
    for (i, j) in [(8, 8), (-9, 5), (10, -10), (3, -7)] {
        let a = net.angle(i, j).unwrap();
        let p = net.point(i, j).unwrap();
        let n = p.normalized();
        let ti = net.point(i + 1, j).unwrap() - p;
        let tj = net.point(i, j + 1).unwrap() - p;
        let (ti, tj) = (ti - n * n.dot(ti), tj - n * n.dot(tj));
        let oracle = (ti.dot(tj) / (ti.norm() * tj.norm())).acos();
        assert!((a - oracle).abs() < 1e-12);
        drift = drift.max((a - 1.0).abs());
    }
    assert!(drift > 1e-3);
}
