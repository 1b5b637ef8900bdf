//! Classical sphere-to-plane projections.
//!
//! Every conformal kind also exposes the complex derivative `f'(zeta)` of the
//! plane map written as a holomorphic function of the Mercator coordinate
//! `zeta = lon + i * psi` (`psi` the isometric latitude). Its magnification
//! is then `|f'(zeta)| * cosh(psi)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::geo::{self, GeoError, GeoPoint, PlanePoint, Vec3, LAT_CAP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    #[error("bad projection parameter: {0}")]
    BadParam(String),
    #[error("{point} lies on the singular set of {name}")]
    SingularPoint { name: String, point: GeoPoint },
    #[error("projection {0} has no inverse")]
    NoInverse(String),
    #[error("{0} is outside the image of the projection")]
    OutsideImage(String),
    #[error("need at least 8 samples, got {0}")]
    InsufficientSamples(usize),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Projection family plus its defining parameters (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectionKind {
    Mercator,
    EqualAreaCylindrical,
    Stereographic {
        center: GeoPoint,
    },
    /// Conformal conic with cone constant `n`. The cone axis is tilted along
    /// `central_meridian` so that the parallel of least scale passes through
    /// `(central_meridian, center_lat)`; `center_lat = asin(n)` is the normal
    /// (polar-axis) aspect.
    ConformalConic {
        n: f64,
        central_meridian: f64,
        center_lat: f64,
    },
    /// Circular-graticule conformal map `(2i/n) (w - 1)/(w + 1)` with
    /// `w = exp(-i n zeta)`.
    LagrangeCircle {
        n: f64,
    },
    /// Equidistant conic, true scale along meridians and on both standard
    /// parallels.
    DelisleConic {
        lat1: f64,
        lat2: f64,
        central_meridian: f64,
    },
}

impl ProjectionKind {
    pub fn normal_conic(n: f64, central_meridian: f64) -> Self {
        ProjectionKind::ConformalConic {
            n,
            central_meridian,
            center_lat: n.clamp(-1.0, 1.0).asin(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProjectionKind::Mercator => "mercator",
            ProjectionKind::EqualAreaCylindrical => "equal_area_cylindrical",
            ProjectionKind::Stereographic { .. } => "stereographic",
            ProjectionKind::ConformalConic { .. } => "conformal_conic",
            ProjectionKind::LagrangeCircle { .. } => "lagrange_circle",
            ProjectionKind::DelisleConic { .. } => "delisle_conic",
        }
    }

    pub fn is_conformal(&self) -> bool {
        !matches!(
            self,
            ProjectionKind::EqualAreaCylindrical | ProjectionKind::DelisleConic { .. }
        )
    }
}

impl fmt::Display for ProjectionKind {
    /// Formats in the `name:key=value,...` syntax accepted by [`FromStr`],
    /// angles in degrees.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ProjectionKind::Mercator | ProjectionKind::EqualAreaCylindrical => write!(f, "{}", self.name()),
            ProjectionKind::Stereographic { center } => {
                write!(
                    f,
                    "stereographic:lon={},lat={}",
                    geo::exact_degrees(center.lon),
                    geo::exact_degrees(center.lat)
                )
            }
            ProjectionKind::ConformalConic {
                n,
                central_meridian,
                center_lat,
            } => write!(
                f,
                "conformal_conic:n={},lon0={},lat_c={}",
                n,
                geo::exact_degrees(central_meridian),
                geo::exact_degrees(center_lat)
            ),
            ProjectionKind::LagrangeCircle { n } => write!(f, "lagrange_circle:n={n}"),
            ProjectionKind::DelisleConic {
                lat1,
                lat2,
                central_meridian,
            } => write!(
                f,
                "delisle_conic:lat1={},lat2={},lon0={}",
                geo::exact_degrees(lat1),
                geo::exact_degrees(lat2),
                geo::exact_degrees(central_meridian)
            ),
        }
    }
}

/// Parses `name[:key=value,...]`, angles in degrees. Missing keys take
/// defaults: stereographic centers on (0, 0), conic `lon0 = 0` and
/// `lat_c = asin(n)`, Delisle `lon0 = 0`.
impl FromStr for ProjectionKind {
    type Err = ProjectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (s, ""),
        };
        let mut params: Vec<(String, f64)> = Vec::new();
        if !rest.is_empty() {
            for item in rest.split(',') {
                let (k, v) = item
                    .split_once('=')
                    .ok_or_else(|| ProjectionError::BadParam(format!("expected key=value, got {item:?}")))?;
                let k = k.trim().to_ascii_lowercase();
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| ProjectionError::BadParam(format!("{k}: not a number: {v:?}")))?;
                if !v.is_finite() {
                    return Err(ProjectionError::BadParam(format!("{k}: not finite")));
                }
                if params.iter().any(|(pk, _)| *pk == k) {
                    return Err(ProjectionError::BadParam(format!("duplicate key {k}")));
                }
                params.push((k, v));
            }
        }
        let mut take = |key: &str| -> Option<f64> {
            let idx = params.iter().position(|(k, _)| k == key)?;
            Some(params.remove(idx).1)
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "mercator" => ProjectionKind::Mercator,
            "equal_area_cylindrical" | "equal-area" | "equal_area" => ProjectionKind::EqualAreaCylindrical,
            "stereographic" => {
                let lon = take("lon").unwrap_or(0.0);
                let lat = take("lat").unwrap_or(0.0);
                ProjectionKind::Stereographic {
                    center: GeoPoint::from_degrees(lon, lat),
                }
            }
            "conformal_conic" | "conic" => {
                let n = take("n").ok_or_else(|| ProjectionError::BadParam("conformal_conic needs n".into()))?;
                let lon0 = take("lon0").unwrap_or(0.0).to_radians();
                let lat_c = take("lat_c").map(f64::to_radians);
                match lat_c {
                    Some(center_lat) => ProjectionKind::ConformalConic {
                        n,
                        central_meridian: lon0,
                        center_lat,
                    },
                    None => ProjectionKind::normal_conic(n, lon0),
                }
            }
            "lagrange_circle" | "lagrange" => ProjectionKind::LagrangeCircle {
                n: take("n").unwrap_or(1.0),
            },
            "delisle_conic" | "delisle" => {
                let lat1 = take("lat1").ok_or_else(|| ProjectionError::BadParam("delisle_conic needs lat1".into()))?;
                let lat2 = take("lat2").ok_or_else(|| ProjectionError::BadParam("delisle_conic needs lat2".into()))?;
                ProjectionKind::DelisleConic {
                    lat1: lat1.to_radians(),
                    lat2: lat2.to_radians(),
                    central_meridian: take("lon0").unwrap_or(0.0).to_radians(),
                }
            }
            other => return Err(ProjectionError::BadParam(format!("unknown projection {other:?}"))),
        };
        if let Some((k, _)) = params.first() {
            return Err(ProjectionError::BadParam(format!("unknown key {k:?} for {name}")));
        }
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Consts {
    None,
    Stereo {
        /// South-pole chart coordinate of the center.
        a: Complex64,
        rot: Complex64,
        lon0: f64,
        sin_c: f64,
        cos_c: f64,
        center: Vec3,
    },
    Conic {
        n: f64,
        lon0: f64,
        /// Signed colatitude of the cone apex along the central meridian.
        tilt: f64,
        a: Complex64,
        rho0: f64,
        apex: Vec3,
    },
    Delisle {
        n: f64,
        g: f64,
        rho0: f64,
        lon0: f64,
    },
}

/// An immutable, fully parameterized projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap {
    kind: ProjectionKind,
    scale: f64,
    consts: Consts,
}

pub fn make_projection(kind: ProjectionKind) -> Result<ProjectionMap, ProjectionError> {
    let bad = |m: String| Err(ProjectionError::BadParam(m));
    let consts = match kind {
        ProjectionKind::Mercator | ProjectionKind::EqualAreaCylindrical => Consts::None,
        ProjectionKind::Stereographic { center } => {
            if !(center.lat.abs() < FRAC_PI_2 - 1e-9) || !center.lon.is_finite() {
                return bad(format!("stereographic center {center} must be off the poles"));
            }
            Consts::Stereo {
                a: chart(center),
                rot: Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, -center.lon),
                lon0: center.lon,
                sin_c: center.lat.sin(),
                cos_c: center.lat.cos(),
                center: center.to_vec3(),
            }
        }
        ProjectionKind::ConformalConic {
            n,
            central_meridian,
            center_lat,
        } => {
            if !(n > 0.0 && n <= 1.0) {
                return bad(format!("cone constant n = {n} outside (0, 1]"));
            }
            if !central_meridian.is_finite() || !(center_lat.abs() < FRAC_PI_2) {
                return bad("conic center must be finite and off the poles".into());
            }
            let tilt = n.asin() - center_lat;
            if !(tilt.abs() < 0.95 * PI) {
                return bad(format!("conic axis tilt {tilt} too large"));
            }
            let a = Complex64::from_polar((0.5 * tilt).tan(), central_meridian);
            let std_colat = FRAC_PI_2 - n.asin();
            let apex = {
                let (s, c) = tilt.sin_cos();
                let (so, co) = central_meridian.sin_cos();
                Vec3::new(s * co, s * so, c)
            };
            Consts::Conic {
                n,
                lon0: central_meridian,
                tilt,
                a,
                rho0: (0.5 * std_colat).tan().powf(n) / n,
                apex,
            }
        }
        ProjectionKind::LagrangeCircle { n } => {
            if !(n > 0.0 && n.is_finite()) {
                return bad(format!("exponent n = {n} must be positive"));
            }
            Consts::None
        }
        ProjectionKind::DelisleConic {
            lat1,
            lat2,
            central_meridian,
        } => {
            if !(lat1.abs() < FRAC_PI_2 && lat2.abs() < FRAC_PI_2) || !central_meridian.is_finite() {
                return bad("standard parallels must lie strictly between the poles".into());
            }
            if (lat1 - lat2).abs() < 1e-9 {
                return bad("standard parallels must differ".into());
            }
            let n = (lat1.cos() - lat2.cos()) / (lat2 - lat1);
            if n.abs() < 1e-6 {
                return bad("standard parallels symmetric about the equator (cylindrical limit)".into());
            }
            let g = lat1.cos() / n + lat1;
            Consts::Delisle {
                n,
                g,
                rho0: g - 0.5 * (lat1 + lat2),
                lon0: central_meridian,
            }
        }
    };
    Ok(ProjectionMap {
        kind,
        scale: 1.0,
        consts,
    })
}

/// South-pole stereographic chart `tan(colat/2) e^{i lon} = e^{i zeta}`.
fn chart(p: GeoPoint) -> Complex64 {
    let (sl, cl) = p.lat.sin_cos();
    Complex64::from_polar(cl / (1.0 + sl), p.lon)
}

fn chart_from_mercator(z: PlanePoint) -> Complex64 {
    Complex64::from_polar((-z.y).exp(), z.x)
}

impl ProjectionMap {
    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Same projection with every output length multiplied by `s`.
    pub fn with_scale(&self, s: f64) -> Result<ProjectionMap, ProjectionError> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(ProjectionError::BadParam(format!("scale {s} must be positive")));
        }
        let mut m = self.clone();
        m.scale = self.scale * s;
        Ok(m)
    }

    /// Named parameters (angles in radians), including the global scale.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        let mut v = match self.kind {
            ProjectionKind::Mercator | ProjectionKind::EqualAreaCylindrical => vec![],
            ProjectionKind::Stereographic { center } => vec![("center_lon", center.lon), ("center_lat", center.lat)],
            ProjectionKind::ConformalConic {
                n,
                central_meridian,
                center_lat,
            } => vec![("n", n), ("central_meridian", central_meridian), ("center_lat", center_lat)],
            ProjectionKind::LagrangeCircle { n } => vec![("n", n)],
            ProjectionKind::DelisleConic {
                lat1,
                lat2,
                central_meridian,
            } => vec![("lat1", lat1), ("lat2", lat2), ("central_meridian", central_meridian)],
        };
        v.push(("scale", self.scale));
        v
    }

    pub fn is_conformal(&self) -> bool {
        self.kind.is_conformal()
    }

    pub fn has_inverse(&self) -> bool {
        true
    }

    pub fn singular_description(&self) -> String {
        match self.kind {
            ProjectionKind::Mercator => "poles (|lat| >= 85 deg) and the antimeridian cut".into(),
            ProjectionKind::EqualAreaCylindrical => "poles and the antimeridian cut".into(),
            ProjectionKind::Stereographic { center } => {
                let anti = GeoPoint::from_vec3(-center.to_vec3());
                format!("antipode of the center, {anti}")
            }
            ProjectionKind::ConformalConic { n, .. } if n == 1.0 => {
                "point antipodal to the cone apex".into()
            }
            ProjectionKind::ConformalConic { .. } => "cone apex, its antipode and the cut meridian opposite the central meridian".into(),
            ProjectionKind::LagrangeCircle { n } => {
                format!("equator points with n*lon = pi (mod 2pi), n = {n}, and the antimeridian cut")
            }
            ProjectionKind::DelisleConic { .. } => "cone apex and the cut meridian opposite the central meridian".into(),
        }
    }

    /// Approximate angular distance (radians) from `p` to the singular set.
    pub fn singular_distance(&self, p: GeoPoint) -> f64 {
        let cut = |lon_rel: f64, coslat: f64| (PI - geo::wrap_lon(lon_rel).abs()) * coslat.abs();
        match (self.kind, self.consts) {
            (ProjectionKind::Mercator, _) => (LAT_CAP - p.lat.abs()).min(cut(p.lon, p.lat.cos())),
            (ProjectionKind::EqualAreaCylindrical, _) => (FRAC_PI_2 - p.lat.abs()).min(cut(p.lon, p.lat.cos())),
            (_, Consts::Stereo { center, .. }) => p.to_vec3().angle_to(-center),
            (_, Consts::Conic { apex, n, .. }) => {
                let v = p.to_vec3();
                let (lon_r, colat_r) = self.conic_rotated(v);
                if n == 1.0 {
                    // stereographic from the antipode: regular at the apex, no cut
                    return v.angle_to(-apex);
                }
                let along = v.angle_to(apex).min(v.angle_to(-apex));
                along.min(cut(lon_r, colat_r.sin()))
            }
            (ProjectionKind::LagrangeCircle { n }, _) => {
                let v = p.to_vec3();
                let mut d = cut(p.lon, p.lat.cos());
                // singular points where n * lon = pi (mod 2pi) on the equator
                let mut k = 0.0;
                loop {
                    let lon = (PI + 2.0 * PI * k) / n;
                    if lon > PI + 1e-12 {
                        break;
                    }
                    for s in [lon, -lon] {
                        d = d.min(v.angle_to(GeoPoint::new(s, 0.0).to_vec3()));
                    }
                    k += 1.0;
                }
                d
            }
            (_, Consts::Delisle { n, g, lon0, .. }) => {
                let apex_dist = if n > 0.0 { g - p.lat } else { p.lat - g };
                apex_dist.min(cut(p.lon - lon0, p.lat.cos()))
            }
            _ => f64::INFINITY,
        }
    }

    pub fn is_singular(&self, p: GeoPoint) -> bool {
        !(self.singular_distance(p) > 1e-9)
    }

    /// Longitude and colatitude in the frame whose pole is the cone apex.
    fn conic_rotated(&self, v: Vec3) -> (f64, f64) {
        let Consts::Conic { lon0, tilt, .. } = self.consts else {
            unreachable!("conic frame requested for non-conic projection")
        };
        let (so, co) = lon0.sin_cos();
        let (x, y) = (v.x * co + v.y * so, -v.x * so + v.y * co);
        let (st, ct) = tilt.sin_cos();
        let xr = x * ct - v.z * st;
        let zr = x * st + v.z * ct;
        let lon = y.atan2(xr);
        let colat = xr.hypot(y).atan2(zr);
        (lon, colat)
    }

    /// Plane image of `p`, without the singular-set check of [`project`].
    pub fn forward(&self, p: GeoPoint) -> Result<PlanePoint, ProjectionError> {
        let q = match (self.kind, self.consts) {
            (ProjectionKind::Mercator, _) => geo::mercator_forward(p)?,
            (ProjectionKind::EqualAreaCylindrical, _) => PlanePoint::new(p.lon, p.lat.sin()),
            (_, Consts::Stereo { lon0, sin_c, cos_c, .. }) => {
                let (sl, cl) = p.lat.sin_cos();
                let (sd, cd) = (p.lon - lon0).sin_cos();
                let denom = 1.0 + sin_c * sl + cos_c * cl * cd;
                let k = 2.0 / denom;
                PlanePoint::new(k * cl * sd, k * (cos_c * sl - sin_c * cl * cd))
            }
            (_, Consts::Conic { n, rho0, .. }) => {
                let (lon_r, colat_r) = self.conic_rotated(p.to_vec3());
                let rho = (0.5 * colat_r).tan().powf(n) / n;
                let (st, ct) = (n * lon_r).sin_cos();
                PlanePoint::new(rho * st, rho0 - rho * ct)
            }
            (ProjectionKind::LagrangeCircle { n }, _) => {
                let psi = geo::isometric_latitude(p.lat);
                let l = lagrange_mobius(n * psi, -n * p.lon);
                let f = Complex64::new(0.0, 2.0 / n) * l;
                PlanePoint::new(f.re, f.im)
            }
            (_, Consts::Delisle { n, g, rho0, lon0 }) => {
                let rho = g - p.lat;
                let (st, ct) = (n * geo::wrap_lon(p.lon - lon0)).sin_cos();
                PlanePoint::new(rho * st, rho0 - rho * ct)
            }
            _ => unreachable!("constants always match the kind"),
        };
        let out = PlanePoint::new(q.x * self.scale, q.y * self.scale);
        if !out.is_finite() {
            return Err(ProjectionError::SingularPoint {
                name: self.name().into(),
                point: p,
            });
        }
        Ok(out)
    }

    pub fn inverse(&self, q: PlanePoint) -> Result<GeoPoint, ProjectionError> {
        let (x, y) = (q.x / self.scale, q.y / self.scale);
        let outside = || ProjectionError::OutsideImage(format!("({x}, {y})"));
        match (self.kind, self.consts) {
            (ProjectionKind::Mercator, _) => Ok(geo::mercator_inverse(PlanePoint::new(x, y))),
            (ProjectionKind::EqualAreaCylindrical, _) => {
                if y.abs() > 1.0 {
                    return Err(outside());
                }
                Ok(GeoPoint { lon: x, lat: y.asin() })
            }
            (_, Consts::Stereo { a, rot, .. }) => {
                let w = Complex64::new(x, y) / (rot * 2.0);
                let s = (w + a) / (Complex64::new(1.0, 0.0) - a.conj() * w);
                Ok(from_chart(s))
            }
            (_, Consts::Conic { n, rho0, a, lon0, .. }) => {
                // f = i rho0 - (i/n) s'^n
                let f = Complex64::new(x, y);
                let sn = Complex64::new(0.0, n) * (f - Complex64::new(0.0, rho0));
                if sn.norm() == 0.0 {
                    return Ok(GeoPoint::from_vec3(self.conic_apex()));
                }
                if sn.arg().abs() > n * PI + 1e-12 {
                    return Err(outside());
                }
                let sr = (sn.ln() / n).exp();
                let u = Complex64::from_polar(1.0, lon0) * sr;
                let s = (u + a) / (Complex64::new(1.0, 0.0) - a.conj() * u);
                Ok(from_chart(s))
            }
            (ProjectionKind::LagrangeCircle { n }, _) => {
                let l = Complex64::new(x, y) * n / Complex64::new(0.0, 2.0);
                let one = Complex64::new(1.0, 0.0);
                let w = (one + l) / (one - l);
                let lw = w.ln();
                if !lw.is_finite() {
                    return Err(outside());
                }
                let psi = lw.re / n;
                let lon = -lw.im / n;
                if lon.abs() > PI {
                    return Err(outside());
                }
                Ok(GeoPoint {
                    lon,
                    lat: geo::gudermannian(psi),
                })
            }
            (_, Consts::Delisle { n, g, rho0, lon0 }) => {
                let sgn = n.signum();
                let rho = sgn * x.hypot(rho0 - y);
                let theta = (sgn * x).atan2(sgn * (rho0 - y));
                let lat = g - rho;
                let dlon = theta / n;
                if lat.abs() > FRAC_PI_2 || dlon.abs() > PI {
                    return Err(outside());
                }
                Ok(GeoPoint::new(lon0 + dlon, lat))
            }
            _ => unreachable!("constants always match the kind"),
        }
    }

    fn conic_apex(&self) -> Vec3 {
        match self.consts {
            Consts::Conic { apex, .. } => apex,
            _ => Vec3::Z,
        }
    }

    /// Complex derivative `f'(zeta)` at the Mercator point `z = (lon, psi)`,
    /// for conformal kinds; `None` otherwise.
    pub fn holo_derivative(&self, z: PlanePoint) -> Option<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        let d = match (self.kind, self.consts) {
            (ProjectionKind::Mercator, _) => one,
            (_, Consts::Stereo { a, rot, .. }) => {
                let s = chart_from_mercator(z);
                let den = one + a.conj() * s;
                rot * 2.0 * (1.0 + a.norm_sqr()) * Complex64::new(0.0, 1.0) * s / (den * den)
            }
            (_, Consts::Conic { n, lon0, a, .. }) => {
                let s = chart_from_mercator(z);
                let den = one + a.conj() * s;
                let e = Complex64::from_polar(1.0, -lon0);
                let sr = e * (s - a) / den;
                (sr.ln() * (n - 1.0)).exp() * e * (1.0 + a.norm_sqr()) * s / (den * den)
            }
            (ProjectionKind::LagrangeCircle { n }, _) => {
                // 4w/(w+1)^2 = 1/cosh^2(v/2) with w = e^v, v = n (psi - i lon)
                let v = Complex64::new(n * z.y, -n * z.x);
                let c = (v * 0.5).cosh();
                one / (c * c)
            }
            _ => return None,
        };
        Some(d * self.scale)
    }
}

fn from_chart(s: Complex64) -> GeoPoint {
    // |s| = tan(colat / 2)
    let r = s.norm();
    let lat = FRAC_PI_2 - 2.0 * r.atan();
    GeoPoint::new(s.arg(), lat)
}

/// `(w - 1)/(w + 1)` for `w = exp(re + i im)`, stable for large `|re|`.
fn lagrange_mobius(re: f64, im: f64) -> Complex64 {
    // (w - 1)/(w + 1) = tanh(v / 2)
    Complex64::new(re, im).scale(0.5).tanh()
}

/// Checked evaluation: `SingularPoint` on the singular set.
pub fn project(map: &ProjectionMap, p: GeoPoint) -> Result<PlanePoint, ProjectionError> {
    if map.is_singular(p) {
        return Err(ProjectionError::SingularPoint {
            name: map.name().into(),
            point: p,
        });
    }
    map.forward(p)
}

/// Least-squares circle (or line) through plane points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CircleFit {
    Circle { cx: f64, cy: f64, r: f64, max_residual: f64 },
    Line { nx: f64, ny: f64, d: f64, max_residual: f64 },
}

impl CircleFit {
    pub fn max_residual(&self) -> f64 {
        match *self {
            CircleFit::Circle { max_residual, .. } | CircleFit::Line { max_residual, .. } => max_residual,
        }
    }
}

/// Algebraic fit of `A (x^2 + y^2) + B x + C y + D = 0` with unit coefficient
/// norm, in coordinates centered and scaled to unit RMS spread. Residuals
/// are geometric distances in those normalized units.
pub fn fit_circle_or_line(pts: &[PlanePoint]) -> Option<CircleFit> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let spread = (pts.iter().map(|p| (p.x - mx).powi(2) + (p.y - my).powi(2)).sum::<f64>() / n).sqrt();
    if !(spread > 0.0 && spread.is_finite()) {
        return None;
    }
    let norm: Vec<(f64, f64)> = pts.iter().map(|p| ((p.x - mx) / spread, (p.y - my) / spread)).collect();
    let mut m = [[0.0f64; 4]; 4];
    for &(x, y) in &norm {
        let row = [x * x + y * y, x, y, 1.0];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    let (vals, vecs) = crate::linalg::sym_eigen4(m);
    let k = (0..4).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    let [a, b, c, d] = [vecs[0][k], vecs[1][k], vecs[2][k], vecs[3][k]];
    let extent = norm.iter().map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max);
    let grad = b.hypot(c);
    if 4.0 * a.abs() * extent < 1e-9 * grad.max(1e-300) || a == 0.0 {
        let (nx, ny, dd) = (b / grad, c / grad, d / grad);
        let res = norm.iter().map(|&(x, y)| (nx * x + ny * y + dd).abs()).fold(0.0, f64::max);
        return Some(CircleFit::Line {
            nx,
            ny,
            d: dd,
            max_residual: res,
        });
    }
    let cx = -b / (2.0 * a);
    let cy = -c / (2.0 * a);
    let r2 = cx * cx + cy * cy - d / a;
    if !(r2 > 0.0) {
        return None;
    }
    let r = r2.sqrt();
    let res = norm
        .iter()
        .map(|&(x, y)| ((x - cx).hypot(y - cy) - r).abs())
        .fold(0.0, f64::max);
    Some(CircleFit::Circle {
        cx: cx * spread + mx,
        cy: cy * spread + my,
        r: r * spread,
        max_residual: res,
    })
}

/// Whether the image of the great circle with pole `axis` is a circle or a
/// line to within `tol` (normalized fit residual). Samples within 0.05 rad of
/// the singular set are skipped.
pub fn great_circle_image_check(
    map: &ProjectionMap,
    axis: Vec3,
    n_samples: usize,
    tol: f64,
) -> Result<bool, ProjectionError> {
    if n_samples < 8 {
        return Err(ProjectionError::InsufficientSamples(n_samples));
    }
    let axis = axis.normalized();
    let seed = if axis.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    let u = axis.cross(seed).normalized();
    let v = axis.cross(u);
    let mut pts = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let th = 2.0 * PI * (k as f64 + 0.5) / n_samples as f64;
        let p = GeoPoint::from_vec3(u * th.cos() + v * th.sin());
        if map.singular_distance(p) < 0.05 {
            continue;
        }
        if let Ok(q) = map.forward(p) {
            pts.push(q);
        }
    }
    if pts.len() < 8 {
        return Err(ProjectionError::InsufficientSamples(pts.len()));
    }
    Ok(fit_circle_or_line(&pts).is_some_and(|f| f.max_residual() < tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    #[test]
    fn mercator_is_mercator_forward() {
        let m = make_projection(ProjectionKind::Mercator).unwrap();
        for p in [GeoPoint::new(0.3, 0.4), GeoPoint::new(-2.0, -1.1)] {
            assert_eq!(m.forward(p).unwrap(), geo::mercator_forward(p).unwrap());
        }
        assert_eq!(project(&m, GeoPoint::default()).unwrap(), PlanePoint::new(0.0, 0.0));
    }

    #[test]
    fn stereographic_center_and_antipode() {
        let c = GeoPoint::from_degrees(0.0, 0.0);
        let s = make_projection(ProjectionKind::Stereographic { center: c }).unwrap();
        let q = project(&s, c).unwrap();
        assert_abs_diff_eq!(q.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.y, 0.0, epsilon = 1e-15);
        let anti = GeoPoint::from_degrees(180.0, 0.0);
        assert!(matches!(project(&s, anti), Err(ProjectionError::SingularPoint { .. })));
    }

    #[test]
    fn delisle_true_scale_along_meridian() {
        let d = make_projection(ProjectionKind::DelisleConic {
            lat1: deg(40.0),
            lat2: deg(60.0),
            central_meridian: 0.0,
        })
        .unwrap();
        for lon in [-20.0, 0.0, 35.0] {
            let a = d.forward(GeoPoint::from_degrees(lon, 40.0)).unwrap();
            let b = d.forward(GeoPoint::from_degrees(lon, 60.0)).unwrap();
            assert_abs_diff_eq!(a.distance(&b), PI / 9.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn delisle_meridians_are_concurrent_lines() {
        let d = make_projection(ProjectionKind::DelisleConic {
            lat1: deg(40.0),
            lat2: deg(60.0),
            central_meridian: deg(10.0),
        })
        .unwrap();
        let Consts::Delisle { n, g, rho0, .. } = d.consts else { panic!() };
        let apex = PlanePoint::new(0.0, rho0);
        for lon in [-30.0, 10.0, 42.0] {
            let a = d.forward(GeoPoint::from_degrees(lon, 30.0)).unwrap();
            let b = d.forward(GeoPoint::from_degrees(lon, 70.0)).unwrap();
            // collinear with the apex
            let cross = (a.x - apex.x) * (b.y - apex.y) - (a.y - apex.y) * (b.x - apex.x);
            assert_abs_diff_eq!(cross, 0.0, epsilon = 1e-12);
        }
        assert!(n > 0.0 && g > FRAC_PI_2);
    }

    #[test]
    fn bad_params_rejected() {
        let e = |k| make_projection(k).unwrap_err();
        assert!(matches!(e(ProjectionKind::normal_conic(1.5, 0.0)), ProjectionError::BadParam(_)));
        assert!(matches!(e(ProjectionKind::normal_conic(0.0, 0.0)), ProjectionError::BadParam(_)));
        assert!(matches!(
            e(ProjectionKind::DelisleConic {
                lat1: 0.5,
                lat2: 0.5,
                central_meridian: 0.0
            }),
            ProjectionError::BadParam(_)
        ));
        assert!(matches!(e(ProjectionKind::LagrangeCircle { n: -1.0 }), ProjectionError::BadParam(_)));
    }

    #[test]
    fn normal_conic_matches_textbook_formula() {
        // x = rho sin(n dlon), y = rho0 - rho cos(n dlon), rho = tan(pi/4 - lat/2)^n / n
        let n = 0.6;
        let lon0 = deg(15.0);
        let m = make_projection(ProjectionKind::normal_conic(n, lon0)).unwrap();
        let rho = |lat: f64| (PI / 4.0 - lat / 2.0).tan().powf(n) / n;
        let rho0 = rho(n.asin());
        for (lon, lat) in [(0.0, 30.0), (40.0, 55.0), (-20.0, 10.0)] {
            let p = GeoPoint::from_degrees(lon, lat);
            let q = m.forward(p).unwrap();
            let th = n * (p.lon - lon0);
            assert_abs_diff_eq!(q.x, rho(p.lat) * th.sin(), epsilon = 1e-12);
            assert_abs_diff_eq!(q.y, rho0 - rho(p.lat) * th.cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn conic_derivative_matches_fd_of_forward() {
        // f'(zeta) ~ (f(zeta + d) - f(zeta - d)) / 2d along the real axis
        let map = make_projection(ProjectionKind::ConformalConic {
            n: 0.7,
            central_meridian: deg(20.0),
            center_lat: deg(30.0),
        })
        .unwrap();
        let d = 1e-6;
        for (lon, lat) in [(10.0, 20.0), (40.0, 45.0), (-5.0, 60.0)] {
            let z = geo::mercator_forward(GeoPoint::from_degrees(lon, lat)).unwrap();
            let f = |t: f64| {
                let q = map.forward(geo::mercator_inverse(PlanePoint::new(t, z.y))).unwrap();
                Complex64::new(q.x, q.y)
            };
            let fd = (f(z.x + d) - f(z.x - d)) / (2.0 * d);
            let an = map.holo_derivative(z).unwrap();
            assert!((fd - an).norm() < 1e-7 * an.norm(), "{fd} vs {an}");
        }
    }

    #[test]
    fn inverses_round_trip() {
        let kinds = [
            ProjectionKind::Mercator,
            ProjectionKind::EqualAreaCylindrical,
            ProjectionKind::Stereographic {
                center: GeoPoint::from_degrees(30.0, 40.0),
            },
            ProjectionKind::ConformalConic {
                n: 0.6,
                central_meridian: deg(10.0),
                center_lat: deg(25.0),
            },
            ProjectionKind::LagrangeCircle { n: 0.8 },
            ProjectionKind::DelisleConic {
                lat1: deg(40.0),
                lat2: deg(60.0),
                central_meridian: deg(5.0),
            },
        ];
        for k in kinds {
            let m = make_projection(k).unwrap().with_scale(1.7).unwrap();
            for (lon, lat) in [(10.0, 20.0), (40.0, 45.0), (-25.0, 60.0), (0.0, -10.0)] {
                let p = GeoPoint::from_degrees(lon, lat);
                let back = m.inverse(m.forward(p).unwrap()).unwrap();
                assert!(geo::geodesic_distance(p, back) < 1e-9, "{k}: {p} -> {back}");
            }
        }
    }

    #[test]
    fn kind_text_round_trip() {
        let kinds = [
            "mercator",
            "equal_area_cylindrical",
            "stereographic:lon=12.5,lat=-3",
            "conformal_conic:n=0.6,lon0=10,lat_c=35",
            "lagrange_circle:n=1",
            "delisle_conic:lat1=40,lat2=60,lon0=30",
        ];
        for s in kinds {
            let k: ProjectionKind = s.parse().unwrap();
            let again: ProjectionKind = k.to_string().parse().unwrap();
            assert_eq!(k.name(), again.name());
            let (a, b) = (make_projection(k).unwrap(), make_projection(again).unwrap());
            for ((ka, va), (kb, vb)) in a.params().into_iter().zip(b.params()) {
                assert_eq!(ka, kb);
                assert_abs_diff_eq!(va, vb, epsilon = 1e-12);
            }
        }
        assert!("nope".parse::<ProjectionKind>().is_err());
        assert!("conformal_conic".parse::<ProjectionKind>().is_err());
        assert!("mercator:n=2".parse::<ProjectionKind>().is_err());
        assert!("stereographic:lon=1,lon=2".parse::<ProjectionKind>().is_err());
        assert!("stereographic:lon=inf".parse::<ProjectionKind>().is_err());
    }

    #[test]
    fn mercator_equator_is_a_line_tilted_circle_is_not() {
        let m = make_projection(ProjectionKind::Mercator).unwrap();
        assert!(great_circle_image_check(&m, Vec3::Z, 64, 1e-6).unwrap());
        let tilted = (Vec3::Z + Vec3::X).normalized();
        assert!(!great_circle_image_check(&m, tilted, 64, 1e-6).unwrap());
        assert!(matches!(
            great_circle_image_check(&m, Vec3::Z, 7, 1e-6),
            Err(ProjectionError::InsufficientSamples(7))
        ));
    }

    #[test]
    fn circle_fit_recovers_circle() {
        let pts: Vec<PlanePoint> = (0..20)
            .map(|k| {
                let t = k as f64 * 0.3;
                PlanePoint::new(3.0 + 2.0 * t.cos(), -1.0 + 2.0 * t.sin())
            })
            .collect();
        match fit_circle_or_line(&pts).unwrap() {
            CircleFit::Circle { cx, cy, r, max_residual } => {
                assert_abs_diff_eq!(cx, 3.0, epsilon = 1e-10);
                assert_abs_diff_eq!(cy, -1.0, epsilon = 1e-10);
                assert_abs_diff_eq!(r, 2.0, epsilon = 1e-10);
                assert!(max_residual < 1e-10);
            }
            other => panic!("expected circle, got {other:?}"),
        }
    }
}
