//! End-to-end acceptance suite. Each criterion runs at its stated tolerance
//! and time budget and prints one PASS/FAIL line; the test fails if any
//! criterion does.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chebmap_core::distortion::{distortion_report, local_scales, magnification_conformal, DEFAULT_STEP};
use chebmap_core::geo::{mercator_inverse, GeoPoint, PlanePoint, Region};
use chebmap_core::laplace::{build_grid, solve_dirichlet, SolverConfig};
use chebmap_core::net::{build_net, edge_length_check, hemisphere_coverage, sine_gordon_residual, Surface, VertexStatus};
use chebmap_core::optimal::{fit_conic_exponent, optimize_projection, similarity_align, ConicSearch};
use chebmap_core::projections::{make_projection, ProjectionKind, ProjectionMap};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn deg(v: f64) -> f64 {
    v.to_radians()
}

fn proj(kind: ProjectionKind) -> ProjectionMap {
    make_projection(kind).expect("valid projection")
}

/// Uniform points on the sphere below 80 degrees latitude, at least `margin`
/// radians from the singular set of `map`.
fn random_points(map: &ProjectionMap, count: usize, margin: f64, rng: &mut ChaCha8Rng) -> Vec<GeoPoint> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let lon = rng.gen_range(-PI..PI);
        let lat = rng.gen_range(-1.0f64..1.0).asin();
        let p = GeoPoint::new(lon, lat);
        if lat.abs() < deg(80.0) && map.singular_distance(p) > margin {
            out.push(p);
        }
    }
    out
}

fn conformal_kinds() -> Vec<ProjectionKind> {
    vec![
        ProjectionKind::Mercator,
        ProjectionKind::Stereographic {
            center: GeoPoint::default(),
        },
        ProjectionKind::Stereographic {
            center: GeoPoint::from_degrees(40.0, 50.0),
        },
        ProjectionKind::normal_conic(0.6, 0.0),
        ProjectionKind::ConformalConic {
            n: 0.3,
            central_meridian: deg(20.0),
            center_lat: deg(10.0),
        },
        ProjectionKind::LagrangeCircle { n: 1.0 },
        ProjectionKind::LagrangeCircle { n: 0.5 },
    ]
}

fn conformality_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let kinds = [
        ProjectionKind::Mercator,
        ProjectionKind::Stereographic {
            center: GeoPoint::default(),
        },
        ProjectionKind::normal_conic(0.6, 0.0),
        ProjectionKind::LagrangeCircle { n: 1.0 },
    ];
    let mut failures = 0;
    for kind in kinds {
        let map = proj(kind);
        for p in random_points(&map, 200, 0.05, &mut rng) {
            match local_scales(&map, p, DEFAULT_STEP) {
                Ok(s) => worst = worst.max((s.tissot_a - s.tissot_b) / s.tissot_a),
                Err(_) => failures += 1,
            }
        }
    }
    let ea = proj(ProjectionKind::EqualAreaCylindrical);
    let mut worst_area: f64 = 0.0;
    for p in random_points(&ea, 200, 0.05, &mut rng) {
        match local_scales(&ea, p, DEFAULT_STEP) {
            Ok(s) => worst_area = worst_area.max((s.tissot_a * s.tissot_b - 1.0).abs()),
            Err(_) => failures += 1,
        }
    }
    Outcome {
        pass: worst <= 1e-6 && worst_area <= 1e-6 && failures == 0,
        detail: format!("max (a-b)/a {worst:.2e}, max |ab-1| {worst_area:.2e}, failed points {failures}"),
    }
}

fn magnification_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for kind in conformal_kinds() {
        let map = proj(kind);
        for p in random_points(&map, 200, 0.05, &mut rng) {
            match (magnification_conformal(&map, p), local_scales(&map, p, DEFAULT_STEP)) {
                (Ok(m), Ok(s)) => worst = worst.max((m - s.tissot_a).abs() / s.tissot_a),
                _ => failures += 1,
            }
        }
    }
    Outcome {
        pass: worst <= 1e-5 && failures == 0,
        detail: format!("max relative |m - a| {worst:.2e} over {} kinds", conformal_kinds().len()),
    }
}

/// Least-squares slope of `log err` against `log h`.
fn fitted_order(res: &[usize], err: &[f64]) -> f64 {
    let xs: Vec<f64> = res.iter().map(|&r| -(r as f64).ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn solver_order() -> Outcome {
    let disk: Vec<PlanePoint> = (0..4096)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / 4096.0;
            PlanePoint::new(a.cos(), a.sin())
        })
        .collect();
    let rect = vec![
        PlanePoint::new(-1.0, -0.5),
        PlanePoint::new(1.0, -0.5),
        PlanePoint::new(1.0, 0.5),
        PlanePoint::new(-1.0, 0.5),
    ];
    let fields: [(&str, fn(PlanePoint) -> f64); 3] = [
        ("t", |p| p.x),
        ("t^2-u^2", |p| p.x * p.x - p.y * p.y),
        ("Re e^z", |p| p.x.exp() * p.y.cos()),
    ];
    let res = [64, 128, 256];
    let mut pass = true;
    let mut notes = Vec::new();
    for (dname, curve) in [("disk", &disk), ("rect", &rect)] {
        for (fname, f) in fields {
            let mut errs = Vec::new();
            let mut range = 0.0;
            for &r in &res {
                let mut g = build_grid(curve, r).expect("grid");
                g.set_boundary_values(f);
                let s = solve_dirichlet(&g, &SolverConfig::default()).expect("solve");
                let (lo, hi) = g
                    .boundary_points()
                    .iter()
                    .map(|&p| f(p))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
                range = hi - lo;
                errs.push(g.interior_cells().map(|c| (s.at(c) - f(g.center(c))).abs()).fold(0.0, f64::max));
            }
            let last = errs[errs.len() - 1];
            // a harmonic the scheme reproduces exactly has no convergence order
            let exact = errs.iter().all(|&e| e <= 1e-10 * range);
            let order = fitted_order(&res, &errs);
            let ok = last <= 1e-3 * range && (exact || order >= 1.9);
            pass &= ok;
            notes.push(if exact {
                format!("{dname}/{fname} exact (max err {last:.1e})")
            } else {
                format!("{dname}/{fname} order {order:.2} err256 {:.1e}", last / range)
            });
        }
    }
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

fn cap(center: GeoPoint, radius_deg: f64) -> Region {
    Region::cap("cap", center, deg(radius_deg), 512).expect("cap")
}

fn optimality_recovery() -> Outcome {
    let region = cap(GeoPoint::default(), 30.0);
    let st = proj(ProjectionKind::Stereographic {
        center: GeoPoint::default(),
    });
    let o256 = optimize_projection(&region, 256).expect("optimize 256");
    let o128 = optimize_projection(&region, 128).expect("optimize 128");
    let g = &o256.grid;
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut m_ratio = Vec::new();
    for c in g.interior_cells() {
        let p = mercator_inverse(g.center(c));
        let q = st.forward(p).expect("stereographic");
        src.push(o256.image.at(c));
        dst.push(Complex64::new(q.x, q.y));
        m_ratio.push(o256.m_field.at(c) / magnification_conformal(&st, p).expect("m"));
    }
    let fit = similarity_align(&src, &dst).expect("alignment");
    // the stereographic image of the cap is a disk
    let diam = 2.0 * 2.0 * deg(15.0).tan();
    let disc = fit.max_discrepancy / diam;
    let scale = fit.alpha.norm();
    let m_dev = m_ratio.iter().map(|r| (r * scale - 1.0).abs()).fold(0.0, f64::max);
    let shrink = o128.boundary_constancy / o256.boundary_constancy;
    Outcome {
        pass: disc < 0.01 && m_dev < 0.01 && shrink >= 1.8,
        detail: format!(
            "discrepancy/diameter {disc:.2e}, m deviation {m_dev:.2e}, boundary log m spread {:.2e} -> {:.2e} (x{shrink:.2})",
            o128.boundary_constancy, o256.boundary_constancy
        ),
    }
}

fn beats_classical() -> Outcome {
    let regions = [
        cap(GeoPoint::default(), 30.0),
        Region::quadrangle("quad", deg(-20.0), deg(20.0), deg(30.0), deg(50.0), 64).expect("quad"),
        Region::quadrangle("band", deg(-60.0), deg(60.0), deg(-15.0), deg(15.0), 64).expect("band"),
    ];
    let grid = 256;
    let mut pass = true;
    let mut notes = Vec::new();
    for r in &regions {
        let opt = optimize_projection(r, grid).expect("optimize").ratio;
        let ratio = |k: ProjectionKind| distortion_report(&proj(k), r, grid).expect("report").ratio;
        let merc = ratio(ProjectionKind::Mercator);
        let st = ratio(ProjectionKind::Stereographic { center: r.centroid() });
        let conic = ratio(fit_conic_exponent(r, &ConicSearch::default()).expect("fit").kind());
        let best = merc.min(st).min(conic);
        let ok = opt <= best * 1.01;
        pass &= ok;
        notes.push(format!(
            "{}: opt {opt:.6} vs mercator {merc:.6} stereo {st:.6} conic {conic:.6}",
            r.name
        ));
    }
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

fn euler_impossibility() -> Outcome {
    let centers = [(0.0, 0.0), (30.0, 40.0), (-100.0, -35.0), (130.0, 10.0), (60.0, 54.0)];
    let mut worst = f64::INFINITY;
    let mut worst_at = String::new();
    let mut count = 0;
    for (lon, lat) in centers {
        let c = GeoPoint::from_degrees(lon, lat);
        let r = cap(c, 30.0);
        let kinds = [
            ProjectionKind::Mercator,
            ProjectionKind::EqualAreaCylindrical,
            ProjectionKind::Stereographic { center: c },
            ProjectionKind::ConformalConic {
                n: 0.6,
                central_meridian: c.lon,
                center_lat: c.lat,
            },
            ProjectionKind::LagrangeCircle { n: 1.0 },
            ProjectionKind::DelisleConic {
                lat1: deg(lat - 10.0),
                lat2: deg(lat + 15.0),
                central_meridian: c.lon,
            },
        ];
        for k in kinds {
            let map = proj(k);
            let ratio = distortion_report(&map, &r, 48).map(|rep| rep.ratio).unwrap_or(f64::INFINITY);
            count += 1;
            if ratio < worst {
                worst = ratio;
                worst_at = format!("{} at ({lon}, {lat})", map.name());
            }
        }
        let opt = optimize_projection(&r, 64).expect("optimize").ratio;
        count += 1;
        if opt < worst {
            worst = opt;
            worst_at = format!("optimized at ({lon}, {lat})");
        }
    }
    Outcome {
        pass: worst > 1.0 + 1e-3,
        detail: format!("smallest ratio {worst:.6} ({worst_at}) over {count} projection/cap pairs"),
    }
}

fn net_suite() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    // plane: exact constant solution, up to floating-point round-off
    for phi0 in [FRAC_PI_2, deg(60.0)] {
        let net = build_net(Surface::Plane, phi0, 0.1, 10).expect("plane net");
        let angle_err = net
            .indices()
            .filter_map(|(i, j)| net.angle(i, j).ok())
            .map(|a| (a - phi0).abs())
            .fold(0.0, f64::max);
        let sg = sine_gordon_residual(&net).expect("residual");
        let edges = edge_length_check(&net).max_deviation;
        let ok = angle_err <= 1e-12 && sg.max <= 1e-10 && edges <= 1e-9 && net.count(VertexStatus::Ok) == 441;
        pass &= ok;
        notes.push(format!(
            "plane {:.0} deg: angle err {angle_err:.1e}, residual {:.1e}, edge err {edges:.1e}",
            phi0.to_degrees(),
            sg.max
        ));
    }
    let sphere = Surface::Sphere { radius: 1.0 };
    let coarse = build_net(sphere, FRAC_PI_2, 0.05, 31).expect("sphere net");
    let fine = build_net(sphere, FRAC_PI_2, 0.025, 63).expect("fine net");
    let torn = coarse.count(VertexStatus::Torn) + fine.count(VertexStatus::Torn);
    let gap = hemisphere_coverage(&coarse, 0.1, 4000).expect("sphere");
    let (r1, r2) = (
        sine_gordon_residual(&coarse).expect("coarse residual"),
        sine_gordon_residual(&fine).expect("fine residual"),
    );
    let decay = r1.max / r2.max;
    let edges = edge_length_check(&coarse).max_deviation.max(edge_length_check(&fine).max_deviation);
    let mixed = r1.max_mixed.max(r2.max_mixed);
    pass &= torn == 0 && gap <= 0.05 && decay >= 1.8 && edges <= 1e-9 && mixed <= 1e-6;
    notes.push(format!(
        "sphere: torn {torn}, coverage gap {gap:.3} rad, residual {:.2e} -> {:.2e} (x{decay:.2}), edge err {edges:.1e}, max D_uv phi {mixed:.3}",
        r1.max, r2.max
    ));
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

fn run_bin(args: &[&str], threads: &str) -> (Vec<u8>, i32) {
    let out = Command::new(env!("CARGO_BIN_EXE_chebmap"))
        .args(args)
        .env("CHEBMAP_THREADS", threads)
        .output()
        .expect("run chebmap");
    (out.stdout, out.status.code().unwrap_or(-1))
}

fn write_cap(path: &Path) {
    let r = cap(GeoPoint::default(), 30.0);
    std::fs::write(path, chebmap::serialize_region(&r)).expect("write region");
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let region = dir.path().join("cap.txt");
    write_cap(&region);
    let mut outputs: Vec<(String, Vec<u8>)> = Vec::new();
    let mut codes = Vec::new();
    for threads in ["1", "4"] {
        for run in 0..2 {
            let map = dir.path().join(format!("m{threads}{run}.bin"));
            let net = dir.path().join(format!("n{threads}{run}.csv"));
            let svg = dir.path().join(format!("n{threads}{run}.svg"));
            let (o1, c1) = run_bin(
                &["optimize", region.to_str().unwrap(), "--grid", "128", "--out", map.to_str().unwrap()],
                threads,
            );
            let (o2, c2) = run_bin(
                &["net", "--out", net.to_str().unwrap(), "--svg", svg.to_str().unwrap()],
                threads,
            );
            codes.extend([c1, c2]);
            let mut blob = o1;
            blob.extend(o2);
            for f in [&map, &net, &svg] {
                blob.extend(std::fs::read(f).unwrap_or_default());
            }
            outputs.push((format!("threads={threads} run={run}"), blob));
        }
    }
    let same = outputs.iter().all(|(_, b)| *b == outputs[0].1);
    Outcome {
        pass: same && codes.iter().all(|&c| c == 0) && !outputs[0].1.is_empty(),
        detail: format!("{} runs, exit codes {codes:?}, identical outputs: {same}", outputs.len()),
    }
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 8] = [
        ("1 conformality suite", conformality_suite, Duration::from_secs(5)),
        ("2 magnification consistency", magnification_consistency, Duration::from_secs(5)),
        ("3 Dirichlet solver order", solver_order, Duration::from_secs(30)),
        ("4 optimality recovery on 30 deg cap", optimality_recovery, Duration::from_secs(60)),
        ("5 optimized beats classical", beats_classical, Duration::from_secs(120)),
        ("6 no distortion-free projection", euler_impossibility, Duration::from_secs(10)),
        ("7 Chebyshev nets", net_suite, Duration::from_secs(30)),
        ("8 determinism", determinism, Duration::from_secs(120)),
    ];
    let mut failed = Vec::new();
    for (name, f, budget) in criteria {
        let t = Instant::now();
        let out = f();
        let took = t.elapsed();
        let ok = out.pass && took <= budget;
        println!(
            "criterion {name}: {} ({:.2} s of {} s) {}",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
        if !ok {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
