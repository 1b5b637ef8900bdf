//! Distortion-minimizing conformal maps of a region.
//!
//! In Mercator coordinates `z = t + i u` a conformal map has
//! `log m = Re log f'(z) + log cosh u`. The map whose magnification is
//! constant along the boundary is obtained by solving the Dirichlet problem
//! for `h = Re log f'` with boundary data `-log cosh u`, completing `h` to the
//! holomorphic `log f' = h + i h~`, and integrating `f'`.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::distortion::{self, extreme_scales, sample_region, DistortionError, RegionSampling};
use crate::geo::{self, GeoError, GeoPoint, PlanePoint, Region};
use crate::laplace::{
    build_grid, harmonic_conjugate, integrate_holomorphic, solve_dirichlet, CellIndex, CellKind, ComplexField,
    GridDomain, GridError, ScalarField, SolverConfig,
};
use crate::linalg::singular_values_2x2;
use crate::projections::{make_projection, ProjectionKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("resolution {0} below the minimum of {1}")]
    BadResolution(usize, usize),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Distortion(#[from] DistortionError),
}

pub const MIN_OPTIMIZE_RESOLUTION: usize = 64;

/// Gridded conformal map of a region with (discretely) constant boundary
/// magnification.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedProjection {
    pub region: Region,
    pub resolution: usize,
    pub grid: Arc<GridDomain>,
    /// Plane image of every interior cell center and of the boundary-curve
    /// point nearest each boundary cell.
    pub image: ComplexField,
    pub m_field: ScalarField,
    pub ratio: f64,
    /// `max |log m - median log m|` over boundary cells.
    pub boundary_constancy: f64,
}

pub fn optimize_projection(region: &Region, resolution: usize) -> Result<OptimizedProjection, OptimizeError> {
    optimize_projection_with(region, resolution, &SolverConfig::default())
}

pub fn optimize_projection_with(
    region: &Region,
    resolution: usize,
    cfg: &SolverConfig,
) -> Result<OptimizedProjection, OptimizeError> {
    if resolution < MIN_OPTIMIZE_RESOLUTION {
        return Err(OptimizeError::BadResolution(resolution, MIN_OPTIMIZE_RESOLUTION));
    }
    let curve = region.mercator_boundary(distortion::boundary_samples(resolution))?;
    let mut grid = build_grid(&curve, resolution)?;
    grid.set_boundary_values(|p| -log_cosh(p.y));
    let h = solve_dirichlet(&grid, cfg)?;
    let g = h.grid.clone();
    let anchor = g.nearest_interior(geo::mercator_forward(region.centroid())?);
    let conj = harmonic_conjugate(&h, anchor)?;

    let n = g.nx * g.ny;
    let mut fprime = vec![Complex64::new(f64::NAN, f64::NAN); n];
    for k in 0..n {
        if h.values[k].is_finite() && conj.values[k].is_finite() {
            fprime[k] = Complex64::new(h.values[k], conj.values[k]).exp();
        }
    }
    let fprime = ComplexField {
        grid: g.clone(),
        values: fprime,
    };
    let image = integrate_holomorphic(&fprime, anchor, Complex64::new(0.0, 0.0))?;

    let mut log_m = vec![f64::NAN; n];
    for c in g.interior_cells() {
        let k = c.j * g.nx + c.i;
        log_m[k] = h.values[k] + log_cosh(g.center(c).y);
    }
    let extrap = h.extrapolate_to_boundary();
    let mut boundary_log_m = Vec::with_capacity(extrap.len());
    for ((c, p), hb) in g.boundary_cells().zip(g.boundary_points()).zip(&extrap) {
        let v = hb + log_cosh(p.y);
        log_m[c.j * g.nx + c.i] = v;
        boundary_log_m.push(v);
    }
    let med = median(&boundary_log_m);
    let boundary_constancy = boundary_log_m.iter().map(|v| (v - med).abs()).fold(0.0, f64::max);
    let (lo, hi) = log_m
        .iter()
        .filter(|v| !v.is_nan())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
    let m_field = ScalarField {
        grid: g.clone(),
        values: log_m.iter().map(|v| v.exp()).collect(),
    };
    Ok(OptimizedProjection {
        region: region.clone(),
        resolution,
        grid: g,
        image,
        m_field,
        ratio: (hi - lo).exp(),
        boundary_constancy,
    })
}

/// `ln cosh x` without overflow.
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

impl OptimizedProjection {
    /// Bilinear interpolation of a cell field at Mercator point `z`, over
    /// whichever of the four surrounding cells carry values.
    fn interpolate<T>(&self, values: &[T], z: PlanePoint, ok: impl Fn(&T) -> bool) -> Option<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let g = &self.grid;
        let fx = (z.x - g.t_min) / g.h - 0.5;
        let fy = (z.y - g.u_min) / g.h - 0.5;
        if !(fx > -1.0 && fy > -1.0 && fx < g.nx as f64 && fy < g.ny as f64) {
            return None;
        }
        let (i0, j0) = (fx.floor(), fy.floor());
        let (ax, ay) = (fx - i0, fy - j0);
        let mut acc: Option<T> = None;
        let mut wsum = 0.0;
        for (di, wx) in [(0, 1.0 - ax), (1, ax)] {
            for (dj, wy) in [(0, 1.0 - ay), (1, ay)] {
                let (i, j) = (i0 as isize + di, j0 as isize + dj);
                if i < 0 || j < 0 || i >= g.nx as isize || j >= g.ny as isize {
                    continue;
                }
                let v = values[j as usize * g.nx + i as usize];
                let w = wx * wy;
                if !ok(&v) || w == 0.0 {
                    continue;
                }
                acc = Some(match acc {
                    Some(a) => a + v * w,
                    None => v * w,
                });
                wsum += w;
            }
        }
        acc.map(|a| a * (1.0 / wsum))
    }

    /// Image of `p`, interpolated from the grid; `None` outside it.
    pub fn map_point(&self, p: GeoPoint) -> Option<PlanePoint> {
        let z = geo::mercator_forward(p).ok()?;
        self.interpolate(&self.image.values, z, |v| v.is_finite())
            .map(|w| PlanePoint::new(w.re, w.im))
    }

    /// Magnification at `p`, interpolated from the grid.
    pub fn magnification(&self, p: GeoPoint) -> Option<f64> {
        let z = geo::mercator_forward(p).ok()?;
        self.interpolate(&self.m_field.values, z, |v| v.is_finite())
    }

    pub fn m_range(&self) -> (f64, f64) {
        self.m_field.range()
    }

    /// Largest Tissot anisotropy `(a - b)/a` of the gridded image over
    /// interior cells whose four lattice neighbors are interior, from central
    /// differences of the image.
    pub fn conformality_defect(&self) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for c in g.interior_cells() {
            let interior = |i: usize, j: usize| g.kind(CellIndex { i, j }) == CellKind::Interior;
            if !(interior(c.i + 1, c.j) && interior(c.i - 1, c.j) && interior(c.i, c.j + 1) && interior(c.i, c.j - 1)) {
                continue;
            }
            let at = |i: usize, j: usize| self.image.values[j * g.nx + i];
            let dt = (at(c.i + 1, c.j) - at(c.i - 1, c.j)) / (2.0 * g.h);
            let du = (at(c.i, c.j + 1) - at(c.i, c.j - 1)) / (2.0 * g.h);
            let (a, b) = singular_values_2x2(dt.re, du.re, dt.im, du.im);
            worst = worst.max((a - b) / a);
        }
        worst
    }
}

/// Least-squares similarity `w = alpha z + beta` taking `src` onto `dst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityFit {
    pub alpha: Complex64,
    pub beta: Complex64,
    /// Largest `|alpha src + beta - dst|`.
    pub max_discrepancy: f64,
}

pub fn similarity_align(src: &[Complex64], dst: &[Complex64]) -> Option<SimilarityFit> {
    if src.len() != dst.len() || src.len() < 2 {
        return None;
    }
    let n = src.len() as f64;
    let ms = src.iter().sum::<Complex64>() / n;
    let md = dst.iter().sum::<Complex64>() / n;
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for (s, d) in src.iter().zip(dst) {
        num += (s - ms).conj() * (d - md);
        den += (s - ms).norm_sqr();
    }
    if !(den > 0.0) {
        return None;
    }
    let alpha = num / den;
    let beta = md - alpha * ms;
    let max_discrepancy = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (alpha * s + beta - d).norm())
        .fold(0.0, f64::max);
    Some(SimilarityFit {
        alpha,
        beta,
        max_discrepancy,
    })
}

/// Search settings for [`fit_conic_exponent`]. Meridian offsets are measured
/// from the middle longitude of the region; reference latitudes span the
/// region's latitude range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConicSearch {
    /// Raster resolution of the distortion evaluation.
    pub grid: usize,
    pub n_min: f64,
    pub n_max: f64,
    pub n_steps: usize,
    pub meridian_steps: usize,
    pub lat_steps: usize,
    /// Stop once a refinement cycle improves `ln(ratio)` by less than this
    /// fraction.
    pub rel_tol: f64,
    pub max_cycles: usize,
}

impl Default for ConicSearch {
    fn default() -> Self {
        ConicSearch {
            grid: 48,
            n_min: 0.05,
            n_max: 1.0,
            n_steps: 20,
            meridian_steps: 9,
            lat_steps: 9,
            rel_tol: 1e-4,
            max_cycles: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConicFit {
    pub n: f64,
    pub central_meridian: f64,
    pub center_lat: f64,
    pub ratio: f64,
    /// Best ratio of the coarse scan, before refinement.
    pub scan_ratio: f64,
    pub evaluations: usize,
}

impl ConicFit {
    pub fn kind(&self) -> ProjectionKind {
        ProjectionKind::ConformalConic {
            n: self.n,
            central_meridian: self.central_meridian,
            center_lat: self.center_lat,
        }
    }
}

struct ConicObjective<'a> {
    sampling: &'a RegionSampling,
    lon_mid: f64,
    evaluations: usize,
}

impl ConicObjective<'_> {
    fn ratio(&mut self, x: [f64; 3]) -> f64 {
        self.evaluations += 1;
        let kind = ProjectionKind::ConformalConic {
            n: x[0],
            central_meridian: geo::wrap_lon(self.lon_mid + x[1]),
            center_lat: x[2],
        };
        let Ok(map) = make_projection(kind) else {
            return f64::INFINITY;
        };
        match extreme_scales(&map, self.sampling) {
            Ok((lo, hi)) => hi / lo,
            Err(_) => f64::INFINITY,
        }
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

/// Best conformal conic for the region: a coarse scan over cone constant,
/// central meridian and reference latitude, refined coordinate-wise by
/// golden-section search. The scan visits `n` ascending, then meridian
/// offsets by increasing magnitude, and keeps the first minimum, so ties go
/// to the smallest `n` and then the smallest offset.
pub fn fit_conic_exponent(region: &Region, cfg: &ConicSearch) -> Result<ConicFit, OptimizeError> {
    if cfg.grid < distortion::MIN_REPORT_GRID {
        return Err(OptimizeError::BadResolution(cfg.grid, distortion::MIN_REPORT_GRID));
    }
    let sampling = sample_region(region, cfg.grid)?;
    let (lon0, lon1, lat0, lat1) = region.lonlat_bounds();
    let lon_mid = 0.5 * (lon0 + lon1);
    let half_width = 0.5 * (lon1 - lon0);
    let lo = [cfg.n_min, -half_width, lat0];
    let hi = [cfg.n_max, half_width, lat1];
    let mut obj = ConicObjective {
        sampling: &sampling,
        lon_mid,
        evaluations: 0,
    };

    let ns = linspace(cfg.n_min, cfg.n_max, cfg.n_steps);
    let mut offsets = linspace(-half_width, half_width, cfg.meridian_steps);
    offsets.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    let lats = linspace(lat0, lat1, cfg.lat_steps);
    let steps = [
        (cfg.n_max - cfg.n_min) / (cfg.n_steps.max(2) - 1) as f64,
        2.0 * half_width / (cfg.meridian_steps.max(2) - 1) as f64,
        (lat1 - lat0) / (cfg.lat_steps.max(2) - 1) as f64,
    ];
    let mut best = ([ns[0], offsets[0], lats[0]], f64::INFINITY);
    for &n in &ns {
        for &off in &offsets {
            for &lat in &lats {
                let r = obj.ratio([n, off, lat]);
                if improves(r, best.1) {
                    best = ([n, off, lat], r);
                }
            }
        }
    }
    let scan_ratio = best.1;
    if scan_ratio.is_finite() {
        for _ in 0..cfg.max_cycles {
            let before = best.1;
            for axis in 0..3 {
                if !(steps[axis] > 0.0) {
                    continue;
                }
                let a = (best.0[axis] - steps[axis]).max(lo[axis]);
                let b = (best.0[axis] + steps[axis]).min(hi[axis]);
                let (x, r) = golden_section(a, b, 40, |v| {
                    let mut p = best.0;
                    p[axis] = v;
                    obj.ratio(p)
                });
                if improves(r, best.1) {
                    best.0[axis] = x;
                    best.1 = r;
                }
            }
            // relative to the distortion excess ln(ratio), which is what
            // shrinks; the ratio itself stays near 1
            if (before.ln() - best.1.ln()) <= cfg.rel_tol * before.ln() {
                break;
            }
        }
    }
    // A nearly normal-aspect cone leaves the meridian offset undetermined;
    // resolve such ties toward the middle of the region.
    if best.0[1] != 0.0 {
        let r = obj.ratio([best.0[0], 0.0, best.0[2]]);
        if (r <= best.1 || ties(r, best.1)) && r <= scan_ratio {
            best = ([best.0[0], 0.0, best.0[2]], r);
        }
    }
    Ok(ConicFit {
        n: best.0[0],
        central_meridian: geo::wrap_lon(lon_mid + best.0[1]),
        center_lat: best.0[2],
        ratio: best.1,
        scan_ratio,
        evaluations: obj.evaluations,
    })
}

/// Differences below round-off of the ratio count as ties, so flat
/// directions (the central meridian of a normal-aspect cone) keep the
/// tie-broken scan choice.
fn improves(r: f64, best: f64) -> bool {
    r < best && (best.is_infinite() || !ties(r, best))
}

/// Equal within sampling noise: `ln` ratios agree to 1e-6 relative.
fn ties(r: f64, best: f64) -> bool {
    let (a, b) = (r.ln(), best.ln());
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-15)
}

/// Minimizes `f` on `[a, b]`; returns the best point seen.
fn golden_section(mut a: f64, mut b: f64, iters: usize, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
            if fd < best.1 {
                best = (d, fd);
            }
        }
        if (b - a).abs() < 1e-10 {
            break;
        }
    }
    best
}
