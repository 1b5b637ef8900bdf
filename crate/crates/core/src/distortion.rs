//! Local scale factors, Tissot indicatrices and regional distortion.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::geo::{self, GeoError, GeoPoint, PlanePoint, Region};
use crate::laplace::{self, GridDomain, GridError, ScalarField};
use crate::linalg::singular_values_2x2;
use crate::projections::{ProjectionError, ProjectionMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistortionError {
    #[error("{point} is within {dist:e} rad of the singular set of {name}")]
    SingularPoint { name: String, point: GeoPoint, dist: f64 },
    #[error("finite-difference step {0:e} outside (1e-8, 1e-3)")]
    StepUnderflow(f64),
    #[error("{0} has no analytic derivative")]
    NotConformal(String),
    #[error("grid resolution {0} below the minimum of {1}")]
    BadGrid(usize, usize),
    #[error("no usable sample points in region")]
    NoSamples,
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

/// Local distortion of a projection at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionSample {
    pub point: GeoPoint,
    pub k_meridian: f64,
    pub k_parallel: f64,
    pub tissot_a: f64,
    pub tissot_b: f64,
    pub angle_distortion: f64,
    /// Magnification, present when the indicatrix is a circle to 1e-6.
    pub m: Option<f64>,
    /// Image directions (radians from +x) of the northward meridian and
    /// eastward parallel tangents.
    pub meridian_dir: f64,
    pub parallel_dir: f64,
}

/// Jacobian columns `(d/dEast, d/dNorth)` per unit sphere arc.
fn jacobian(map: &ProjectionMap, p: GeoPoint, h: f64) -> Result<[f64; 4], ProjectionError> {
    let dl = h / p.lat.cos();
    let e1 = map.forward(GeoPoint::new(p.lon + dl, p.lat))?;
    let e0 = map.forward(GeoPoint::new(p.lon - dl, p.lat))?;
    let n1 = map.forward(GeoPoint::new(p.lon, p.lat + h))?;
    let n0 = map.forward(GeoPoint::new(p.lon, p.lat - h))?;
    let d = 2.0 * h;
    Ok([(e1.x - e0.x) / d, (e1.y - e0.y) / d, (n1.x - n0.x) / d, (n1.y - n0.y) / d])
}

/// Tissot data from a central-difference Jacobian with respect to the sphere
/// metric. When the half-step Jacobian disagrees with the full-step one by
/// more than `1e-8` (relative), the two are Richardson-extrapolated.
pub fn local_scales(map: &ProjectionMap, p: GeoPoint, h: f64) -> Result<DistortionSample, DistortionError> {
    if !(h > 1e-8 && h < 1e-3) {
        return Err(DistortionError::StepUnderflow(h));
    }
    let reach = 4.0 * h / p.lat.cos().max(1e-12);
    let dist = map.singular_distance(p);
    if !(dist > reach) || p.lat.abs() + h >= FRAC_PI_2 {
        return Err(DistortionError::SingularPoint {
            name: map.name().into(),
            point: p,
            dist,
        });
    }
    let j1 = jacobian(map, p, h)?;
    let j2 = jacobian(map, p, 0.5 * h)?;
    let size = j1.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let diff = j1.iter().zip(&j2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let j = if diff > 1e-8 * size {
        std::array::from_fn(|k| (4.0 * j2[k] - j1[k]) / 3.0)
    } else {
        j1
    };
    if j.iter().any(|v| !v.is_finite()) {
        return Err(DistortionError::SingularPoint {
            name: map.name().into(),
            point: p,
            dist,
        });
    }
    let [ex, ey, nx, ny] = j;
    let (a, b) = singular_values_2x2(ex, nx, ey, ny);
    let angle = 2.0 * ((a - b) / (a + b)).clamp(0.0, 1.0).asin();
    Ok(DistortionSample {
        point: p,
        k_meridian: nx.hypot(ny),
        k_parallel: ex.hypot(ey),
        tissot_a: a,
        tissot_b: b,
        angle_distortion: angle,
        m: ((a - b) <= 1e-6 * a).then_some(a),
        meridian_dir: ny.atan2(nx),
        parallel_dir: ey.atan2(ex),
    })
}

/// Magnification `|f'(z)| cosh(psi)` of a conformal map at `p`, `z` the
/// Mercator point of `p`.
pub fn magnification_conformal(map: &ProjectionMap, p: GeoPoint) -> Result<f64, DistortionError> {
    if !map.is_conformal() {
        return Err(DistortionError::NotConformal(map.name().into()));
    }
    if map.is_singular(p) {
        return Err(DistortionError::SingularPoint {
            name: map.name().into(),
            point: p,
            dist: map.singular_distance(p),
        });
    }
    let z = geo::mercator_forward(p)?;
    let d = map
        .holo_derivative(z)
        .ok_or_else(|| DistortionError::NotConformal(map.name().into()))?;
    Ok(d.norm() * z.y.cosh())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EulerClass {
    /// Meridians and parallels map to two perpendicular families of parallel
    /// lines.
    H1,
    /// Conformal.
    H2,
    /// Equal-area.
    H3,
}

impl fmt::Display for EulerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EulerClass::H1 => "H1",
            EulerClass::H2 => "H2",
            EulerClass::H3 => "H3",
        })
    }
}

/// Minimum grid for classification.
pub const MIN_CLASSIFY_GRID: usize = 16;
/// Minimum grid for a distortion report.
pub const MIN_REPORT_GRID: usize = 32;

/// Sample sites of a region at a given resolution: the rasterized Mercator
/// domain, interior cell centers, and a dense uniform sampling of the
/// boundary curve.
#[derive(Debug, Clone)]
pub struct RegionSampling {
    pub grid: GridDomain,
    pub interior: Vec<GeoPoint>,
    pub boundary: Vec<GeoPoint>,
}

/// Boundary samples used for a grid of the given resolution.
pub fn boundary_samples(grid: usize) -> usize {
    (8 * grid).max(256)
}

pub fn sample_region(region: &Region, grid: usize) -> Result<RegionSampling, DistortionError> {
    let nb = boundary_samples(grid);
    let curve = region.mercator_boundary(nb)?;
    let domain = laplace::rasterize(&curve, grid)?;
    let interior = domain
        .interior_cells()
        .map(|c| geo::mercator_inverse(domain.center(c)))
        .collect();
    let boundary = curve.iter().map(|&q| geo::mercator_inverse(q)).collect();
    Ok(RegionSampling {
        grid: domain,
        interior,
        boundary,
    })
}

fn classify_samples(samples: &[DistortionSample], tol: f64) -> BTreeSet<EulerClass> {
    let mut out = BTreeSet::new();
    if samples.is_empty() {
        return out;
    }
    // H1: one rotation puts every parallel tangent horizontal and every
    // meridian tangent vertical (directions taken mod pi).
    let offsets: Vec<f64> = samples
        .iter()
        .flat_map(|s| [s.parallel_dir, s.meridian_dir - FRAC_PI_2])
        .collect();
    let (sy, sx) = offsets
        .iter()
        .fold((0.0, 0.0), |(y, x), &d| (y + (2.0 * d).sin(), x + (2.0 * d).cos()));
    let theta = 0.5 * sy.atan2(sx);
    let misalign = offsets
        .iter()
        .map(|&d| {
            let r = (d - theta).rem_euclid(std::f64::consts::PI);
            r.min(std::f64::consts::PI - r)
        })
        .fold(0.0, f64::max);
    if misalign < tol {
        out.insert(EulerClass::H1);
    }
    let aniso = samples
        .iter()
        .map(|s| (s.tissot_a - s.tissot_b) / s.tissot_a)
        .fold(0.0, f64::max);
    if aniso < tol {
        out.insert(EulerClass::H2);
    }
    let (lo, hi) = samples
        .iter()
        .map(|s| s.tissot_a * s.tissot_b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let c = 0.5 * (lo + hi);
    if (hi - c).max(c - lo) / c < tol {
        out.insert(EulerClass::H3);
    }
    out
}

fn scales_at(map: &ProjectionMap, pts: &[GeoPoint]) -> Vec<Option<DistortionSample>> {
    pts.par_iter().map(|&p| local_scales(map, p, DEFAULT_STEP).ok()).collect()
}

/// Which of Euler's three properties hold for `map` over `region`, sampled
/// at the interior cells of a `grid`-resolution raster. Points too close to
/// the singular set are skipped.
pub fn classify_euler(map: &ProjectionMap, region: &Region, grid: usize, tol: f64) -> Result<BTreeSet<EulerClass>, DistortionError> {
    if grid < MIN_CLASSIFY_GRID {
        return Err(DistortionError::BadGrid(grid, MIN_CLASSIFY_GRID));
    }
    let s = sample_region(region, grid)?;
    let samples: Vec<DistortionSample> = scales_at(map, &s.interior).into_iter().flatten().collect();
    if samples.is_empty() {
        return Err(DistortionError::NoSamples);
    }
    Ok(classify_samples(&samples, tol))
}

/// Regional distortion summary.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub region: Region,
    pub projection: String,
    pub grid: usize,
    pub m_min: f64,
    pub m_max: f64,
    /// `m_max / m_min`. For non-conformal maps the largest Tissot semi-axis
    /// over the smallest.
    pub ratio: f64,
    /// Log of the areal-mean scale `sqrt(a b)`, which is `log m` for
    /// conformal maps.
    pub field: ScalarField,
    pub classification: BTreeSet<EulerClass>,
    pub samples: usize,
}

/// Distortion over the interior cells of a `grid` raster of the region and
/// a dense sampling of its boundary. Conformal maps use the analytic
/// magnification; others use Tissot semi-axes.
pub fn distortion_report(map: &ProjectionMap, region: &Region, grid: usize) -> Result<DistortionReport, DistortionError> {
    if grid < MIN_REPORT_GRID {
        return Err(DistortionError::BadGrid(grid, MIN_REPORT_GRID));
    }
    let s = sample_region(region, grid)?;
    let (m_min, m_max) = extreme_scales(map, &s)?;
    let interior = s.interior.len();
    let scales = scales_at(map, &s.interior);
    let mut classified = Vec::with_capacity(interior);
    for (k, v) in scales.iter().enumerate() {
        match v {
            Some(v) => classified.push(*v),
            None => {
                return Err(singular_error(map, s.interior[k]));
            }
        }
    }
    let classification = classify_samples(&classified, DEFAULT_TOL);
    let conformal = map.is_conformal();
    let log_scale = |p: PlanePoint| -> f64 {
        let g = geo::mercator_inverse(p);
        if conformal {
            if let Ok(m) = magnification_conformal(map, g) {
                return m.ln();
            }
        }
        match local_scales(map, g, DEFAULT_STEP) {
            Ok(d) => 0.5 * (d.tissot_a * d.tissot_b).ln(),
            Err(_) => f64::NAN,
        }
    };
    let field = ScalarField::from_fn(&s.grid, log_scale);
    Ok(DistortionReport {
        region: region.clone(),
        projection: map.kind().to_string(),
        grid,
        m_min,
        m_max,
        ratio: m_max / m_min,
        field,
        classification,
        samples: interior + s.boundary.len(),
    })
}

fn singular_error(map: &ProjectionMap, p: GeoPoint) -> DistortionError {
    DistortionError::Projection(ProjectionError::SingularPoint {
        name: map.name().into(),
        point: p,
    })
}

/// Smallest and largest local scale over all sample sites. Reductions run in
/// index order so the result does not depend on the thread schedule.
pub fn extreme_scales(map: &ProjectionMap, s: &RegionSampling) -> Result<(f64, f64), DistortionError> {
    let pts: Vec<GeoPoint> = s.interior.iter().chain(&s.boundary).copied().collect();
    let conformal = map.is_conformal();
    let per: Vec<Option<(f64, f64)>> = pts
        .par_iter()
        .map(|&p| {
            if conformal {
                magnification_conformal(map, p).ok().map(|m| (m, m))
            } else {
                local_scales(map, p, DEFAULT_STEP).ok().map(|d| (d.tissot_b, d.tissot_a))
            }
        })
        .collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (k, v) in per.iter().enumerate() {
        match v {
            Some((b, a)) if b.is_finite() && a.is_finite() && *b > 0.0 => {
                lo = lo.min(*b);
                hi = hi.max(*a);
            }
            _ => return Err(singular_error(map, pts[k])),
        }
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projections::{make_projection, ProjectionKind};
    use approx::assert_abs_diff_eq;

    fn proj(kind: ProjectionKind) -> ProjectionMap {
        make_projection(kind).unwrap()
    }

    fn cap30() -> Region {
        Region::cap("cap", GeoPoint::default(), 30f64.to_radians(), 256).unwrap()
    }

    #[test]
    fn mercator_equator_and_sixty() {
        let m = proj(ProjectionKind::Mercator);
        let s = local_scales(&m, GeoPoint::new(0.2, 0.0), DEFAULT_STEP).unwrap();
        assert_abs_diff_eq!(s.k_meridian, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.k_parallel, 1.0, epsilon = 1e-9);
        let s = local_scales(&m, GeoPoint::from_degrees(10.0, 60.0), DEFAULT_STEP).unwrap();
        assert_abs_diff_eq!(s.m.unwrap(), 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(magnification_conformal(&m, GeoPoint::from_degrees(10.0, 60.0)).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(magnification_conformal(&m, GeoPoint::from_degrees(10.0, 0.0)).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn equal_area_product() {
        let m = proj(ProjectionKind::EqualAreaCylindrical);
        let s = local_scales(&m, GeoPoint::from_degrees(-20.0, 60.0), DEFAULT_STEP).unwrap();
        assert_abs_diff_eq!(s.tissot_a * s.tissot_b, 1.0, epsilon = 1e-6);
        assert!(s.m.is_none());
        // angle distortion from the closed form: a = sec, b = cos
        let (a, b) = (2.0, 0.5);
        assert_abs_diff_eq!(s.angle_distortion, 2.0 * ((a - b) / (a + b) as f64).asin(), epsilon = 1e-6);
    }

    #[test]
    fn bad_steps_and_points() {
        let m = proj(ProjectionKind::Mercator);
        assert!(matches!(local_scales(&m, GeoPoint::default(), 1e-9), Err(DistortionError::StepUnderflow(_))));
        assert!(matches!(local_scales(&m, GeoPoint::default(), 1e-2), Err(DistortionError::StepUnderflow(_))));
        let s = proj(ProjectionKind::Stereographic { center: GeoPoint::default() });
        let anti = GeoPoint::new(std::f64::consts::PI, 0.0);
        assert!(matches!(local_scales(&s, anti, DEFAULT_STEP), Err(DistortionError::SingularPoint { .. })));
        let ea = proj(ProjectionKind::EqualAreaCylindrical);
        assert!(matches!(
            magnification_conformal(&ea, GeoPoint::default()),
            Err(DistortionError::NotConformal(_))
        ));
    }

    #[test]
    fn euler_classes() {
        use EulerClass::*;
        let r = cap30();
        let c = |k| classify_euler(&proj(k), &r, 24, DEFAULT_TOL).unwrap();
        assert_eq!(c(ProjectionKind::Mercator), BTreeSet::from([H1, H2]));
        assert_eq!(c(ProjectionKind::EqualAreaCylindrical), BTreeSet::from([H1, H3]));
        assert_eq!(c(ProjectionKind::Stereographic { center: GeoPoint::default() }), BTreeSet::from([H2]));
        let delisle = ProjectionKind::DelisleConic {
            lat1: 0.2,
            lat2: 0.5,
            central_meridian: 0.0,
        };
        assert!(c(delisle).is_empty());
        assert!(matches!(
            classify_euler(&proj(ProjectionKind::Mercator), &r, 15, DEFAULT_TOL),
            Err(DistortionError::BadGrid(15, 16))
        ));
    }

    #[test]
    fn mercator_band_ratio() {
        let band = Region::quadrangle("band", -0.5, 0.5, -20f64.to_radians(), 20f64.to_radians(), 64).unwrap();
        let r = distortion_report(&proj(ProjectionKind::Mercator), &band, 64).unwrap();
        let expect = 1.0 / 20f64.to_radians().cos();
        assert!((r.ratio - expect).abs() < 1e-4, "{} vs {expect}", r.ratio);
    }

    #[test]
    fn stereographic_cap_boundary_is_level() {
        let s = proj(ProjectionKind::Stereographic { center: GeoPoint::default() });
        let r = distortion_report(&s, &cap30(), 64).unwrap();
        let g = &r.field.grid;
        let vals: Vec<f64> = g.boundary_cells().map(|c| r.field.at(c)).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        // boundary values sit on a resampled polygon, so agree to its chord error
        assert!(hi - lo < 1e-3, "{lo} {hi}");
        // m = sec^2(d/2) on the stereographic, maximal on the rim
        let rim = 1.0 / (15f64.to_radians().cos().powi(2));
        assert!((r.m_max - rim).abs() < 1e-4 && (r.m_min - 1.0).abs() < 1e-3);
    }

    #[test]
    fn report_scale_invariant() {
        let base = proj(ProjectionKind::normal_conic(0.6, 0.0));
        let big = base.with_scale(2.5).unwrap();
        let r = cap30();
        let (a, b) = (distortion_report(&base, &r, 40).unwrap(), distortion_report(&big, &r, 40).unwrap());
        assert!((a.ratio - b.ratio).abs() < 1e-12 * a.ratio);
        assert!((b.m_max / a.m_max - 2.5).abs() < 1e-12);
        assert_eq!(a.classification, b.classification);
    }

    #[test]
    fn tiny_region_ratio_near_one() {
        let r = Region::cap("dot", GeoPoint::from_degrees(30.0, 40.0), 0.001, 64).unwrap();
        let rep = distortion_report(&proj(ProjectionKind::Mercator), &r, 32).unwrap();
        assert!(rep.ratio - 1.0 < 3e-3, "{}", rep.ratio);
    }

    #[test]
    fn report_rejects_small_grid() {
        assert!(matches!(
            distortion_report(&proj(ProjectionKind::Mercator), &cap30(), 31),
            Err(DistortionError::BadGrid(31, 32))
        ));
    }
}
