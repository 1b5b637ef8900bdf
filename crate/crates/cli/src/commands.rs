//! The four subcommands. Each returns its report text; files named in the
//! configuration are written as a side effect.

use std::fmt::Write as _;
use std::path::Path;

use chebmap_core::distortion::{local_scales, sample_region, DistortionSample, DEFAULT_STEP};
use chebmap_core::geo::{self, slerp};
use chebmap_core::net::{self, ChebNet};
use chebmap_core::optimal::{fit_conic_exponent, optimize_projection_with, ConicSearch, OptimizedProjection};
use chebmap_core::{
    distortion_report, make_projection, CellIndex, CellKind, GeoPoint, ProjectionKind, ProjectionMap, Region,
    SolverConfig, Surface, VertexStatus,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{CliError, Command, RunConfig, SurfaceArg, CONIC_FIT_KEYWORD, OPTIMIZED_KEYWORD};
use crate::map_file::{self, MapFile};
use crate::region_file::read_region;
use crate::svg::{Path as SvgPath, Svg};

/// Report text for stdout plus warnings for stderr.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub report: String,
    pub warnings: Vec<String>,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    match &cfg.command {
        Command::Project { .. } => cmd_project(cfg),
        Command::Optimize { .. } => cmd_optimize(cfg),
        Command::Net { .. } => cmd_net(cfg),
        Command::Compare { .. } => cmd_compare(cfg),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Parses a projection spec. A bare `stereographic` is centered at the
/// region centroid.
pub fn resolve_projection(spec: &str, region: &Region) -> Result<ProjectionKind, CliError> {
    if spec.trim().eq_ignore_ascii_case("stereographic") {
        return Ok(ProjectionKind::Stereographic {
            center: region.centroid(),
        });
    }
    Ok(spec.parse::<ProjectionKind>()?)
}

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Numerical(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Numerical(format!("csv: {e}")))
}

/// Boundary vertices with every edge subdivided into great-circle pieces of
/// at most a quarter degree.
fn dense_boundary(region: &Region) -> Vec<GeoPoint> {
    let b = region.boundary();
    let max_piece = 0.25f64.to_radians();
    let mut out = Vec::new();
    for k in 0..b.len() {
        let (p, q) = (b[k].to_vec3(), b[(k + 1) % b.len()].to_vec3());
        let pieces = (p.angle_to(q) / max_piece).ceil().max(1.0) as usize;
        out.push(b[k]);
        for s in 1..pieces {
            out.push(GeoPoint::from_vec3(slerp(p, q, s as f64 / pieces as f64)));
        }
    }
    out
}

/// Multiples of `step` (degrees) covering `[lo, hi]` (radians), clamped.
fn graticule_values(lo: f64, hi: f64, step: f64, limit: f64) -> Vec<f64> {
    // tolerate degree values that came back from radians a few ulps off
    let (a, b) = (
        (lo.to_degrees() / step + 1e-9).floor() as i64,
        (hi.to_degrees() / step - 1e-9).ceil() as i64,
    );
    (a..=b)
        .map(|k| k as f64 * step)
        .filter(|v| v.abs() <= limit)
        .collect()
}

/// Meridians and parallels at `step` degrees over the region's bounding box
/// widened to whole graticule cells.
fn graticule_lines(region: &Region, step: f64) -> Vec<Vec<GeoPoint>> {
    let (lon0, lon1, lat0, lat1) = region.lonlat_bounds();
    let lat_lim = 84.9;
    let lons = graticule_values(lon0, lon1, step, 360.0);
    let lats = graticule_values(lat0, lat1, step, lat_lim);
    let la = ((lat0.to_degrees() / step + 1e-9).floor() * step).max(-lat_lim);
    let lb = ((lat1.to_degrees() / step - 1e-9).ceil() * step).min(lat_lim);
    let (Some(&ma), Some(&mb)) = (lons.first(), lons.last()) else {
        return Vec::new();
    };
    let samples = |a: f64, b: f64| -> Vec<f64> {
        let n = ((b - a) / 0.25).ceil().max(1.0) as usize;
        (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
    };
    let mut lines = Vec::new();
    for &lon in &lons {
        lines.push(samples(la, lb).into_iter().map(|lat| GeoPoint::from_degrees(lon, lat)).collect());
    }
    for &lat in &lats {
        lines.push(samples(ma, mb).into_iter().map(|lon| GeoPoint::from_degrees(lon, lat)).collect());
    }
    lines
}

fn draw_map(title: &str, region: &Region, graticule: f64, f: impl Fn(GeoPoint) -> Option<(f64, f64)>) -> Svg {
    let mut svg = Svg::new(title);
    for line in graticule_lines(region, graticule) {
        svg.add(SvgPath::from_points("graticule", line.into_iter().map(&f), false));
    }
    svg.add(SvgPath::from_points("boundary", dense_boundary(region).into_iter().map(&f), true));
    svg
}

fn classes(set: &std::collections::BTreeSet<chebmap_core::EulerClass>) -> String {
    if set.is_empty() {
        return "none".into();
    }
    set.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

fn sample_row(s: &DistortionSample) -> Vec<String> {
    vec![
        fmt_f(s.point.lon_deg()),
        fmt_f(s.point.lat_deg()),
        fmt_f(s.k_meridian),
        fmt_f(s.k_parallel),
        fmt_f(s.tissot_a),
        fmt_f(s.tissot_b),
        fmt_f(s.angle_distortion.to_degrees()),
        s.m.map(fmt_f).unwrap_or_default(),
    ]
}

/// `n` points drawn uniformly in the region's lon/lat box and kept when
/// their Mercator cell is interior.
fn random_points(region: &Region, grid: usize, n: usize, seed: u64) -> Result<Vec<GeoPoint>, CliError> {
    let s = sample_region(region, grid)?;
    let g = &s.grid;
    let (lon0, lon1, lat0, lat1) = region.lonlat_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 1000 * n + 10_000 {
            return Err(CliError::BadInput("region too small to sample".into()));
        }
        let p = GeoPoint::new(rng.gen_range(lon0..=lon1), rng.gen_range(lat0..=lat1));
        let z = geo::mercator_forward(p)?;
        let (fi, fj) = ((z.x - g.t_min) / g.h, (z.y - g.u_min) / g.h);
        if fi < 0.0 || fj < 0.0 || fi >= g.nx as f64 || fj >= g.ny as f64 {
            continue;
        }
        if g.kind(CellIndex {
            i: fi as usize,
            j: fj as usize,
        }) == CellKind::Interior
        {
            out.push(p);
        }
    }
    Ok(out)
}

fn cmd_project(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Command::Project {
        region,
        projection,
        graticule,
        samples,
    } = &cfg.command
    else {
        unreachable!("dispatched on command")
    };
    let region = read_region(region)?;
    let kind = resolve_projection(projection, &region)?;
    let map = make_projection(kind)?;
    let rep = distortion_report(&map, &region, cfg.grid)?;
    let mut out = Outcome::default();
    let _ = writeln!(
        out.report,
        "projection={kind} ratio={:.9} m_min={:.9} m_max={:.9} classes={} samples={}",
        rep.ratio,
        rep.m_min,
        rep.m_max,
        classes(&rep.classification),
        rep.samples
    );
    if let Some(path) = &cfg.svg {
        let mut svg = draw_map(&format!("{} / {kind}", region.name), &region, *graticule, |p| {
            map.forward(p).ok().map(|q| (q.x, q.y))
        });
        svg.legend(format!("{kind}"));
        svg.legend(format!("scale ratio {:.6}", rep.ratio));
        svg.legend(format!("scale range {:.6} .. {:.6}", rep.m_min, rep.m_max));
        svg.legend(format!("properties {}", classes(&rep.classification)));
        write_file(path, svg.render().as_bytes())?;
    }
    if let Some(path) = &cfg.csv {
        let pts = match samples {
            Some(n) => random_points(&region, cfg.grid, *n, cfg.seed)?,
            None => sample_region(&region, cfg.grid)?.interior,
        };
        let mut rows = Vec::with_capacity(pts.len());
        for p in pts {
            rows.push(sample_row(&local_scales(&map, p, DEFAULT_STEP)?));
        }
        let header = [
            "lon", "lat", "k_meridian", "k_parallel", "tissot_a", "tissot_b", "angle_distortion", "m",
        ];
        write_file(path, &csv_bytes(&header, rows)?)?;
    }
    Ok(out)
}

fn solver(cfg: &RunConfig) -> SolverConfig {
    SolverConfig {
        tol_res: cfg.tol,
        max_iter: cfg.max_iter,
    }
}

fn cmd_optimize(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Command::Optimize { region } = &cfg.command else {
        unreachable!("dispatched on command")
    };
    let region = read_region(region)?;
    let opt = optimize_projection_with(&region, cfg.grid, &solver(cfg))?;
    let (lo, hi) = opt.m_range();
    let mut out = Outcome::default();
    let _ = writeln!(out.report, "ratio={:.9} boundary_dev={:.6e}", opt.ratio, opt.boundary_constancy);
    let _ = writeln!(
        out.report,
        "grid={}x{} interior={} m_min={lo:.9} m_max={hi:.9} conformality_defect={:.3e}",
        opt.grid.nx,
        opt.grid.ny,
        opt.grid.interior_count(),
        opt.conformality_defect()
    );
    if let Some(path) = &cfg.out {
        let bytes = map_file::encode(&MapFile::from_projection(&opt));
        write_file(path, &bytes)?;
    }
    if let Some(path) = &cfg.svg {
        write_file(path, optimized_svg(&opt).render().as_bytes())?;
    }
    Ok(out)
}

fn optimized_svg(opt: &OptimizedProjection) -> Svg {
    let mut svg = draw_map(&format!("{} / optimized", opt.region.name), &opt.region, 10.0, |p| {
        opt.map_point(p).map(|q| (q.x, q.y))
    });
    svg.legend("optimized conformal");
    svg.legend(format!("scale ratio {:.6}", opt.ratio));
    svg.legend(format!("boundary log-scale spread {:.3e}", opt.boundary_constancy));
    svg
}

fn cmd_net(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Command::Net {
        surface,
        radius,
        phi0,
        step,
        rect,
        ..
    } = &cfg.command
    else {
        unreachable!("dispatched on command")
    };
    let surf = match surface {
        SurfaceArg::Plane => Surface::Plane,
        SurfaceArg::Sphere => Surface::Sphere { radius: *radius },
    };
    let (a, c) = rect.unwrap_or((*step, *step));
    let n = cfg.net_half_width();
    let net = net::darboux_net(surf, phi0.to_radians(), a, c, n)?;
    let edges = net::edge_length_check(&net);
    let sg = net::sine_gordon_residual(&net);
    let mut out = Outcome::default();
    let _ = write!(
        out.report,
        "vertices={} ok={} torn={} out_of_range={} max_edge_dev={:.3e}",
        (2 * n + 1) * (2 * n + 1),
        net.count(VertexStatus::Ok),
        net.count(VertexStatus::Torn),
        net.count(VertexStatus::OutOfRange),
        edges.max_deviation
    );
    match sg {
        Ok(r) => {
            let _ = write!(
                out.report,
                " sine_gordon={:.6e} at=({},{}) max_mixed={:.6e}",
                r.max, r.at.0, r.at.1, r.max_mixed
            );
        }
        Err(e) => {
            out.warnings.push(format!("no sine-Gordon residual: {e}"));
            let _ = write!(out.report, " sine_gordon=n/a");
        }
    }
    out.report.push('\n');
    if let Some(path) = &cfg.out {
        write_file(path, &net_csv(&net)?)?;
    }
    if let Some(path) = &cfg.svg {
        write_file(path, net_svg(&net).render().as_bytes())?;
    }
    Ok(out)
}

fn net_csv(net: &ChebNet) -> Result<Vec<u8>, CliError> {
    let sphere = matches!(net.surface, Surface::Sphere { .. });
    let header: &[&str] = if sphere {
        &["i", "j", "x", "y", "z", "phi", "status"]
    } else {
        &["i", "j", "x", "y", "phi", "status"]
    };
    let angles = net::net_angles(net);
    let rows = net.indices().zip(angles).map(|((i, j), phi)| {
        let mut r = vec![i.to_string(), j.to_string()];
        let p = net.point(i, j);
        let coords: &[fn(&chebmap_core::Vec3) -> f64] = if sphere {
            &[|v| v.x, |v| v.y, |v| v.z]
        } else {
            &[|v| v.x, |v| v.y]
        };
        for f in coords {
            r.push(p.as_ref().map(f).map(fmt_f).unwrap_or_default());
        }
        r.push(phi.map(fmt_f).unwrap_or_default());
        r.push(net.status(i, j).map(|s| s.as_str()).unwrap_or_default().to_string());
        r
    });
    csv_bytes(header, rows.collect::<Vec<_>>())
}

/// Plane nets drawn as is; sphere nets orthographically from outside the
/// base point, with the hemisphere rim.
fn net_svg(net: &ChebNet) -> Svg {
    let mut svg = Svg::new("Chebyshev net");
    let n = net.n as i64;
    let view = |i: i64, j: i64| -> Option<(f64, f64)> {
        let p = net.point(i, j)?;
        match net.surface {
            Surface::Plane => Some((p.x, p.y)),
            Surface::Sphere { .. } => (p.x >= 0.0).then_some((p.y, p.z)),
        }
    };
    for j in -n..=n {
        svg.add(SvgPath::from_points("net-i", (-n..=n).map(|i| view(i, j)), false));
    }
    for i in -n..=n {
        svg.add(SvgPath::from_points("net-j", (-n..=n).map(|j| view(i, j)), false));
    }
    if let Surface::Sphere { radius } = net.surface {
        let rim = (0..=360).map(|k| {
            let t = (k as f64).to_radians();
            Some((radius * t.cos(), radius * t.sin()))
        });
        svg.add(SvgPath::from_points("rim", rim, true));
    }
    svg.legend(format!("seed angle {:.4} deg", net.phi0.to_degrees()));
    svg.legend(format!("edges {} x {}", net.a_len, net.c_len));
    svg
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub name: String,
    pub projection: String,
    pub ratio: f64,
    pub m_min: f64,
    pub m_max: f64,
}

fn cmd_compare(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Command::Compare { region, projections } = &cfg.command else {
        unreachable!("dispatched on command")
    };
    let region = read_region(region)?;
    let mut out = Outcome::default();
    let mut seen: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for spec in projections {
        let key = match spec.as_str() {
            OPTIMIZED_KEYWORD | CONIC_FIT_KEYWORD => spec.clone(),
            s => resolve_projection(s, &region)?.to_string(),
        };
        if seen.contains(&key) {
            out.warnings.push(format!("warning: projection {spec:?} listed more than once; ignoring repeat"));
            continue;
        }
        seen.push(key);
        rows.push(compare_row(cfg, &region, spec)?);
    }
    rows.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let _ = writeln!(out.report, "{:<width$}  {:>12}  {:>12}  {:>12}  projection", "name", "ratio", "m_min", "m_max");
    for r in &rows {
        let _ = writeln!(
            out.report,
            "{:<width$}  {:>12.9}  {:>12.6}  {:>12.6}  {}",
            r.name, r.ratio, r.m_min, r.m_max, r.projection
        );
    }
    if let Some(path) = &cfg.csv {
        let body = rows.iter().enumerate().map(|(k, r)| {
            vec![
                (k + 1).to_string(),
                r.name.clone(),
                r.projection.clone(),
                fmt_f(r.ratio),
                fmt_f(r.m_min),
                fmt_f(r.m_max),
            ]
        });
        write_file(path, &csv_bytes(&["rank", "name", "projection", "ratio", "m_min", "m_max"], body.collect::<Vec<_>>())?)?;
    }
    Ok(out)
}

fn classical_row(name: &str, map: &ProjectionMap, region: &Region, grid: usize) -> Result<CompareRow, CliError> {
    let rep = distortion_report(map, region, grid)?;
    Ok(CompareRow {
        name: name.into(),
        projection: map.kind().to_string(),
        ratio: rep.ratio,
        m_min: rep.m_min,
        m_max: rep.m_max,
    })
}

pub fn compare_row(cfg: &RunConfig, region: &Region, spec: &str) -> Result<CompareRow, CliError> {
    match spec {
        OPTIMIZED_KEYWORD => {
            let opt = optimize_projection_with(region, cfg.grid, &solver(cfg))?;
            let (m_min, m_max) = opt.m_range();
            Ok(CompareRow {
                name: OPTIMIZED_KEYWORD.into(),
                projection: "optimized".into(),
                ratio: opt.ratio,
                m_min,
                m_max,
            })
        }
        CONIC_FIT_KEYWORD => {
            let fit = fit_conic_exponent(region, &ConicSearch::default())?;
            classical_row(CONIC_FIT_KEYWORD, &make_projection(fit.kind())?, region, cfg.grid)
        }
        s => {
            let kind = resolve_projection(s, region)?;
            classical_row(kind.name(), &make_projection(kind)?, region, cfg.grid)
        }
    }
}
