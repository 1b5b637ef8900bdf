//! Spherical primitives on the unit sphere.
//!
//! Longitudes and latitudes are radians. Mercator (isometric) coordinates
//! are `(t, u) = (lon, ln tan(pi/4 + lat/2))`, in which the sphere metric is
//! `cos^2(lat) * (dt^2 + du^2)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Regions and Mercator coordinates are restricted to `|lat| < LAT_CAP`.
pub const LAT_CAP: f64 = 85.0 * PI / 180.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {lat_deg:.6} deg reaches the polar cap (|lat| >= 85 deg)")]
    Pole { lat_deg: f64 },
    #[error("circles on the sphere do not intersect")]
    NoIntersection,
    #[error("circle centers coincide or are antipodal")]
    DegenerateCenters,
    #[error("circle radius {0} outside (0, pi)")]
    BadRadius(f64),
    #[error("region needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("resampling needs at least 8 points, got {0}")]
    TooFewSamples(usize),
    #[error("region boundary is self-intersecting (edges {0} and {1})")]
    NotSimple(usize, usize),
    #[error("non-finite coordinate in region boundary")]
    NonFinite,
    #[error("invalid region parameter: {0}")]
    BadParam(String),
}

/// Cartesian vector in R^3, mostly used for unit vectors on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    /// Angle between two vectors in `[0, pi]`, accurate for tiny and
    /// near-antipodal separations.
    pub fn angle_to(self, o: Vec3) -> f64 {
        self.cross(o).norm().atan2(self.dot(o))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Point on the unit sphere. `lon` in `(-pi, pi]`, `lat` in `[-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    /// Builds a point, wrapping the longitude into `(-pi, pi]`.
    pub fn new(lon: f64, lat: f64) -> Self {
        GeoPoint {
            lon: wrap_lon(lon),
            lat,
        }
    }

    pub fn from_degrees(lon_deg: f64, lat_deg: f64) -> Self {
        GeoPoint::new(lon_deg.to_radians(), lat_deg.to_radians())
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon.to_degrees()
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat.to_degrees()
    }

    pub fn to_vec3(self) -> Vec3 {
        let (sl, cl) = self.lat.sin_cos();
        let (so, co) = self.lon.sin_cos();
        Vec3::new(cl * co, cl * so, sl)
    }

    /// Inverse of [`GeoPoint::to_vec3`]; the input need not be normalized.
    pub fn from_vec3(v: Vec3) -> Self {
        let lat = v.z.atan2(v.x.hypot(v.y));
        let lon = v.y.atan2(v.x);
        GeoPoint::new(lon, lat)
    }

    /// Unit vectors pointing east and north in the tangent plane.
    pub fn local_frame(self) -> (Vec3, Vec3) {
        let (sl, cl) = self.lat.sin_cos();
        let (so, co) = self.lon.sin_cos();
        let east = Vec3::new(-so, co, 0.0);
        let north = Vec3::new(-sl * co, -sl * so, cl);
        (east, north)
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6}) deg", self.lon_deg(), self.lat_deg())
    }
}

/// Point in a projection plane (or in the Mercator plane, as `(t, u)`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        PlanePoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, o: &PlanePoint) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

pub fn wrap_lon(lon: f64) -> f64 {
    if lon > -PI && lon <= PI {
        return lon;
    }
    let mut w = lon.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Degree value whose conversion back to radians reproduces `rad` exactly,
/// when one exists within a few ulps of the direct conversion. Text written
/// with it parses back to the same radians.
pub fn exact_degrees(rad: f64) -> f64 {
    let d = rad.to_degrees();
    let (mut lo, mut hi) = (d, d);
    for _ in 0..8 {
        for c in [lo, hi] {
            if c.to_radians() == rad {
                return c;
            }
        }
        lo = lo.next_down();
        hi = hi.next_up();
    }
    d
}

/// `ln tan(pi/4 + lat/2)`, written as `asinh(tan(lat))` for accuracy.
pub fn isometric_latitude(lat: f64) -> f64 {
    lat.tan().asinh()
}

/// Gudermannian function, the inverse of [`isometric_latitude`].
pub fn gudermannian(u: f64) -> f64 {
    u.sinh().atan()
}

pub fn mercator_forward(p: GeoPoint) -> Result<PlanePoint, GeoError> {
    if !(p.lat.abs() < LAT_CAP) {
        return Err(GeoError::Pole {
            lat_deg: p.lat.to_degrees(),
        });
    }
    Ok(PlanePoint::new(p.lon, isometric_latitude(p.lat)))
}

/// Inverse Mercator map. The `t` coordinate is taken as the longitude
/// verbatim (no wrapping), so that the forward map round-trips exactly.
pub fn mercator_inverse(q: PlanePoint) -> GeoPoint {
    GeoPoint {
        lon: q.x,
        lat: gudermannian(q.y),
    }
}

pub fn geodesic_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    a.to_vec3().angle_to(b.to_vec3())
}

/// Point reached from `p` after travelling `dist` radians along the great
/// circle with initial unit tangent `dir` (which must be orthogonal to `p`).
pub fn travel(p: Vec3, dir: Vec3, dist: f64) -> Vec3 {
    let (s, c) = dist.sin_cos();
    (p * c + dir * s).normalized()
}

/// Unit tangent at `from` of the great circle heading to `to`.
pub fn heading_tangent(from: Vec3, to: Vec3) -> Vec3 {
    let t = to - from * from.dot(to);
    t.normalized()
}

/// Spherical linear interpolation between two unit vectors.
pub fn slerp(a: Vec3, b: Vec3, frac: f64) -> Vec3 {
    let omega = a.angle_to(b);
    if omega < 1e-15 {
        return a;
    }
    let s = omega.sin();
    (a * (((1.0 - frac) * omega).sin() / s) + b * ((frac * omega).sin() / s)).normalized()
}

/// Intersections of the circles `{p : angle(p, c1) = r1}` and
/// `{p : angle(p, c2) = r2}`.
///
/// Two-point results are ordered with the point on the positive side of
/// `c1 x c2` first. Tangent circles give a single point.
pub fn sphere_circle_intersect(c1: Vec3, r1: f64, c2: Vec3, r2: f64) -> Result<Vec<Vec3>, GeoError> {
    for r in [r1, r2] {
        if !(r > 0.0 && r < PI) {
            return Err(GeoError::BadRadius(r));
        }
    }
    let c1 = c1.normalized();
    let c2 = c2.normalized();
    let axis = c1.cross(c2);
    let sin_d = axis.norm();
    if sin_d < 1e-12 {
        return Err(GeoError::DegenerateCenters);
    }
    let d = sin_d.atan2(c1.dot(c2));
    // frame: c1, e2 toward c2, e3 = c1 x e2 along c1 x c2
    let e3 = axis * (1.0 / sin_d);
    let e2 = e3.cross(c1);
    // p = cos r1 c1 + sin r1 (cos th e2 + sin th e3); the numerator of cos th
    // is cos r2 - cos r1 cos d, written without cancellation
    let half_d = (0.5 * d).sin();
    let num = 2.0 * r1.cos() * half_d * half_d - 2.0 * (0.5 * (r1 + r2)).sin() * (0.5 * (r2 - r1)).sin();
    let cos_th = num / (r1.sin() * sin_d);
    let tangency = 4.0 * f64::EPSILON;
    if cos_th.abs() > 1.0 + tangency || !cos_th.is_finite() {
        return Err(GeoError::NoIntersection);
    }
    let (sr, cr) = r1.sin_cos();
    let along = c1 * cr + e2 * (sr * cos_th.clamp(-1.0, 1.0));
    if cos_th.abs() >= 1.0 - tangency {
        return Ok(vec![along.normalized()]);
    }
    let sin_th = ((1.0 - cos_th) * (1.0 + cos_th)).sqrt();
    Ok(vec![(along + e3 * (sr * sin_th)).normalized(), (along - e3 * (sr * sin_th)).normalized()])
}

/// Simply connected region bounded by a closed, counterclockwise polyline.
/// Consecutive vertices are joined by great-circle arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    boundary: Vec<GeoPoint>,
}

impl Region {
    /// Validates and orients a boundary. A repeated closing vertex is dropped;
    /// clockwise input is reversed.
    pub fn new(name: impl Into<String>, boundary: Vec<GeoPoint>) -> Result<Self, GeoError> {
        let mut pts = boundary;
        if pts.iter().any(|p| !p.lon.is_finite() || !p.lat.is_finite()) {
            return Err(GeoError::NonFinite);
        }
        while pts.len() > 1 && same_point(pts[0], pts[pts.len() - 1]) {
            pts.pop();
        }
        pts.dedup_by(|a, b| same_point(*a, *b));
        if pts.len() < 3 {
            return Err(GeoError::TooFewVertices(pts.len()));
        }
        if let Some(p) = pts.iter().find(|p| p.lat.abs() > LAT_CAP) {
            return Err(GeoError::Pole {
                lat_deg: p.lat.to_degrees(),
            });
        }
        let plane: Vec<(f64, f64)> = pts.iter().map(|p| (p.lon, p.lat)).collect();
        if let Some((i, j)) = first_self_intersection(&plane) {
            return Err(GeoError::NotSimple(i, j));
        }
        if signed_area(&plane) < 0.0 {
            pts.reverse();
        }
        Ok(Region {
            name: name.into(),
            boundary: pts,
        })
    }

    /// Geodesic circle of angular radius `radius` around `center`, sampled
    /// with `n` vertices.
    pub fn cap(name: impl Into<String>, center: GeoPoint, radius: f64, n: usize) -> Result<Self, GeoError> {
        if !(radius > 0.0 && radius < FRAC_PI_2) {
            return Err(GeoError::BadParam(format!("cap radius {radius} outside (0, pi/2)")));
        }
        if n < 3 {
            return Err(GeoError::TooFewVertices(n));
        }
        let c = center.to_vec3();
        let (east, north) = center.local_frame();
        let pts = (0..n)
            .map(|k| {
                let az = 2.0 * PI * k as f64 / n as f64;
                let dir = east * az.cos() + north * az.sin();
                GeoPoint::from_vec3(travel(c, dir, radius))
            })
            .collect();
        Region::new(name, pts)
    }

    /// Latitude/longitude quadrangle whose sides follow meridians and
    /// parallels, with `per_side` samples along each side.
    pub fn quadrangle(
        name: impl Into<String>,
        lon_min: f64,
        lon_max: f64,
        lat_min: f64,
        lat_max: f64,
        per_side: usize,
    ) -> Result<Self, GeoError> {
        if !(lon_min < lon_max && lat_min < lat_max) || per_side < 1 {
            return Err(GeoError::BadParam("empty quadrangle".into()));
        }
        let n = per_side as f64;
        let mut pts = Vec::with_capacity(4 * per_side);
        for k in 0..per_side {
            pts.push(GeoPoint::new(lon_min + (lon_max - lon_min) * k as f64 / n, lat_min));
        }
        for k in 0..per_side {
            pts.push(GeoPoint::new(lon_max, lat_min + (lat_max - lat_min) * k as f64 / n));
        }
        for k in 0..per_side {
            pts.push(GeoPoint::new(lon_max - (lon_max - lon_min) * k as f64 / n, lat_max));
        }
        for k in 0..per_side {
            pts.push(GeoPoint::new(lon_min, lat_max - (lat_max - lat_min) * k as f64 / n));
        }
        Region::new(name, pts)
    }

    pub fn boundary(&self) -> &[GeoPoint] {
        &self.boundary
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    /// Total boundary length in radians.
    pub fn perimeter(&self) -> f64 {
        let n = self.boundary.len();
        (0..n)
            .map(|k| geodesic_distance(self.boundary[k], self.boundary[(k + 1) % n]))
            .sum()
    }

    /// Normalized mean of the unit vectors of a uniform boundary resampling.
    pub fn centroid(&self) -> GeoPoint {
        let pts = resample_points(&self.boundary, 512);
        let sum = pts.iter().fold(Vec3::default(), |acc, p| acc + p.to_vec3());
        GeoPoint::from_vec3(sum)
    }

    /// `(lon_min, lon_max, lat_min, lat_max)` over the boundary vertices.
    pub fn lonlat_bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.boundary {
            b.0 = b.0.min(p.lon);
            b.1 = b.1.max(p.lon);
            b.2 = b.2.min(p.lat);
            b.3 = b.3.max(p.lat);
        }
        b
    }

    /// The boundary in Mercator coordinates, resampled to `n` points.
    pub fn mercator_boundary(&self, n: usize) -> Result<Vec<PlanePoint>, GeoError> {
        resample_points(&self.boundary, n)
            .into_iter()
            .map(mercator_forward)
            .collect()
    }
}

fn same_point(a: GeoPoint, b: GeoPoint) -> bool {
    (a.lon - b.lon).abs() < 1e-14 && (a.lat - b.lat).abs() < 1e-14
}

/// Resamples the closed boundary to `n` points equally spaced in arc length,
/// starting at the first vertex.
pub fn resample_boundary(region: &Region, n: usize) -> Result<Region, GeoError> {
    if n < 8 {
        return Err(GeoError::TooFewSamples(n));
    }
    if region.boundary.len() < 3 {
        return Err(GeoError::TooFewVertices(region.boundary.len()));
    }
    Ok(Region {
        name: region.name.clone(),
        boundary: resample_points(&region.boundary, n),
    })
}

fn resample_points(boundary: &[GeoPoint], n: usize) -> Vec<GeoPoint> {
    let verts: Vec<Vec3> = boundary.iter().map(|p| p.to_vec3()).collect();
    let m = verts.len();
    let lens: Vec<f64> = (0..m).map(|k| verts[k].angle_to(verts[(k + 1) % m])).collect();
    let total: f64 = lens.iter().sum();
    let step = total / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut edge = 0;
    let mut edge_start = 0.0;
    for k in 0..n {
        let target = k as f64 * step;
        while edge + 1 < m && edge_start + lens[edge] <= target {
            edge_start += lens[edge];
            edge += 1;
        }
        let frac = if lens[edge] > 0.0 {
            ((target - edge_start) / lens[edge]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let v = if frac == 0.0 {
            verts[edge]
        } else {
            slerp(verts[edge], verts[(edge + 1) % m], frac)
        };
        out.push(GeoPoint::from_vec3(v));
    }
    out
}

fn signed_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|k| {
            let (x0, y0) = poly[k];
            let (x1, y1) = poly[(k + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
        * 0.5
}

/// First pair of non-adjacent edges of the closed polyline that intersect.
pub fn first_self_intersection(poly: &[(f64, f64)]) -> Option<(usize, usize)> {
    let n = poly.len();
    if n < 4 {
        return None;
    }
    // Sort edges by min x so each edge is only tested against overlapping ones.
    let mut order: Vec<usize> = (0..n).collect();
    let xmin = |k: usize| poly[k].0.min(poly[(k + 1) % n].0);
    let xmax = |k: usize| poly[k].0.max(poly[(k + 1) % n].0);
    order.sort_by(|&a, &b| xmin(a).total_cmp(&xmin(b)).then(a.cmp(&b)));
    let mut best: Option<(usize, usize)> = None;
    for (oi, &i) in order.iter().enumerate() {
        let hi = xmax(i);
        for &j in &order[oi + 1..] {
            if xmin(j) > hi {
                break;
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if b == a + 1 || (a == 0 && b == n - 1) {
                continue;
            }
            if segments_intersect(poly[a], poly[(a + 1) % n], poly[b], poly[(b + 1) % n]) {
                best = Some(match best {
                    Some(prev) if prev <= (a, b) => prev,
                    _ => (a, b),
                });
            }
        }
    }
    best
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_intersect(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}
