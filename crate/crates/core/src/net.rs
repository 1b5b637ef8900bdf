//! Discrete Chebyshev nets: lattices of quadrilaterals with fixed side
//! lengths on the plane or a sphere, grown from two geodesic seeds.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rayon::prelude::*;
use thiserror::Error;

use crate::geo::{sphere_circle_intersect, travel, GeoError, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("seed angle {0} outside (0, pi)")]
    BadSeedAngle(f64),
    #[error("step {step} too large for the surface (limit {limit})")]
    StepTooLarge { step: f64, limit: f64 },
    #[error("extent {extent} exceeds the chart limit {limit}")]
    ExtentTooLarge { extent: f64, limit: f64 },
    #[error("bad net parameter: {0}")]
    BadParam(String),
    #[error("vertex ({0}, {1}) lacks an ok +i or +j neighbor")]
    MissingNeighbor(i64, i64),
    #[error("net has no 3x3 window of ok vertices")]
    NetTooSmall,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    Plane,
    Sphere { radius: f64 },
}

impl Surface {
    pub fn curvature(&self) -> f64 {
        match *self {
            Surface::Plane => 0.0,
            Surface::Sphere { radius } => 1.0 / (radius * radius),
        }
    }

    /// Edge length below which the construction is well posed.
    fn step_limit(&self) -> f64 {
        match *self {
            Surface::Plane => f64::INFINITY,
            Surface::Sphere { radius } => 0.2 * PI * radius,
        }
    }

    /// Longest seed geodesic per quadrant.
    fn extent_limit(&self) -> f64 {
        match *self {
            Surface::Plane => f64::INFINITY,
            Surface::Sphere { radius } => PI * radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexStatus {
    Ok,
    /// The two constraint circles did not meet, or a predecessor was torn.
    Torn,
    /// Outside the open hemisphere around the base point (sphere only).
    OutOfRange,
}

impl VertexStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            VertexStatus::Ok => "ok",
            VertexStatus::Torn => "torn",
            VertexStatus::OutOfRange => "out_of_range",
        }
    }
}

/// Lattice of surface points over the index window `[-n, n]^2`. Sphere
/// vertices are stored as unit vectors (scale by the radius for positions);
/// plane vertices have `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebNet {
    pub surface: Surface,
    pub phi0: f64,
    /// Length of edges along `i`.
    pub a_len: f64,
    /// Length of edges along `j`.
    pub c_len: f64,
    pub n: usize,
    points: Vec<Vec3>,
    status: Vec<VertexStatus>,
}

/// Direction (radians from east) of the `i` seed (`sign = -1`) or the `j`
/// seed (`sign = +1`) at the base point.
fn seed_angle(phi0: f64, sign: f64) -> f64 {
    FRAC_PI_4 + sign * 0.5 * phi0
}

pub fn build_net(surface: Surface, phi0: f64, h: f64, n: usize) -> Result<ChebNet, NetError> {
    darboux_net(surface, phi0, h, h, n)
}

/// Net with `i`-edges of length `a_len` and `j`-edges of length `c_len`.
pub fn darboux_net(surface: Surface, phi0: f64, a_len: f64, c_len: f64, n: usize) -> Result<ChebNet, NetError> {
    if !(phi0 > 0.0 && phi0 < PI) {
        return Err(NetError::BadSeedAngle(phi0));
    }
    if let Surface::Sphere { radius } = surface {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(NetError::BadParam(format!("sphere radius {radius}")));
        }
    }
    if !(a_len > 0.0 && c_len > 0.0 && a_len.is_finite() && c_len.is_finite()) {
        return Err(NetError::BadParam(format!("edge lengths {a_len}, {c_len} must be positive")));
    }
    if n == 0 {
        return Err(NetError::BadParam("net needs n >= 1".into()));
    }
    let step = a_len.max(c_len);
    if step > surface.step_limit() {
        return Err(NetError::StepTooLarge {
            step,
            limit: surface.step_limit(),
        });
    }
    let extent = n as f64 * step;
    if extent > surface.extent_limit() * (1.0 + 1e-12) {
        return Err(NetError::ExtentTooLarge {
            extent,
            limit: surface.extent_limit(),
        });
    }
    let mut net = ChebNet {
        surface,
        phi0,
        a_len,
        c_len,
        n,
        points: vec![Vec3::default(); (2 * n + 1) * (2 * n + 1)],
        status: vec![VertexStatus::Torn; (2 * n + 1) * (2 * n + 1)],
    };
    let ni = n as i64;
    // seeds
    let (ti, tj) = (seed_angle(phi0, -1.0), seed_angle(phi0, 1.0));
    match surface {
        Surface::Plane => {
            let di = Vec3::new(ti.cos(), ti.sin(), 0.0);
            let dj = Vec3::new(tj.cos(), tj.sin(), 0.0);
            for k in -ni..=ni {
                net.set(k, 0, di * (k as f64 * a_len), VertexStatus::Ok);
                net.set(0, k, dj * (k as f64 * c_len), VertexStatus::Ok);
            }
        }
        Surface::Sphere { radius } => {
            // base point (lon 0, lat 0): east = +y, north = +z
            let base = Vec3::X;
            let di = Vec3::new(0.0, ti.cos(), ti.sin());
            let dj = Vec3::new(0.0, tj.cos(), tj.sin());
            for k in -ni..=ni {
                for (pi, pj, dir, len) in [(k, 0, di, a_len), (0, k, dj, c_len)] {
                    let p = travel(base, dir, k as f64 * len / radius);
                    let st = net.range_status(p);
                    net.set(pi, pj, p, st);
                }
            }
        }
    }
    // anti-diagonals |i| + |j| = d, all four quadrants
    for d in 2..=(2 * ni) {
        let sites: Vec<(i64, i64)> = (1..d)
            .filter(|&i| i <= ni && d - i <= ni)
            .flat_map(|i| {
                let j = d - i;
                [(i, j), (-i, j), (i, -j), (-i, -j)]
            })
            .collect();
        let results: Vec<(Vec3, VertexStatus)> = sites.par_iter().map(|&(i, j)| net.propagate(i, j)).collect();
        for (&(i, j), (p, st)) in sites.iter().zip(results) {
            net.set(i, j, p, st);
        }
    }
    Ok(net)
}

impl ChebNet {
    fn idx(&self, i: i64, j: i64) -> usize {
        let w = 2 * self.n + 1;
        (j + self.n as i64) as usize * w + (i + self.n as i64) as usize
    }

    fn set(&mut self, i: i64, j: i64, p: Vec3, st: VertexStatus) {
        let k = self.idx(i, j);
        self.points[k] = p;
        self.status[k] = st;
    }

    fn in_window(&self, i: i64, j: i64) -> bool {
        let n = self.n as i64;
        i.abs() <= n && j.abs() <= n
    }

    fn range_status(&self, p: Vec3) -> VertexStatus {
        match self.surface {
            Surface::Plane => VertexStatus::Ok,
            Surface::Sphere { .. } if p.dot(Vec3::X) > 0.0 => VertexStatus::Ok,
            Surface::Sphere { .. } => VertexStatus::OutOfRange,
        }
    }

    /// Vertex `(i, j)` from its two predecessors toward the seeds.
    fn propagate(&self, i: i64, j: i64) -> (Vec3, VertexStatus) {
        let (si, sj) = (i.signum(), j.signum());
        let ka = self.idx(i - si, j);
        let kb = self.idx(i, j - sj);
        let kd = self.idx(i - si, j - sj);
        let preds = [self.status[ka], self.status[kb], self.status[kd]];
        if preds.contains(&VertexStatus::Torn) {
            return (Vec3::default(), VertexStatus::Torn);
        }
        if preds.contains(&VertexStatus::OutOfRange) {
            return (Vec3::default(), VertexStatus::OutOfRange);
        }
        let (a, b, diag) = (self.points[ka], self.points[kb], self.points[kd]);
        // P is an i-edge from `a` and a j-edge from `b`
        let roots = match self.surface {
            Surface::Plane => plane_circle_intersect(a, self.a_len, b, self.c_len),
            Surface::Sphere { radius } => {
                sphere_circle_intersect(a, self.a_len / radius, b, self.c_len / radius).map_err(|_| ())
            }
        };
        let Ok(roots) = roots else {
            return (Vec3::default(), VertexStatus::Torn);
        };
        let dist = |p: Vec3| match self.surface {
            Surface::Plane => (p - diag).norm(),
            Surface::Sphere { .. } => p.angle_to(diag),
        };
        let mut best = roots[0];
        for &r in &roots[1..] {
            if dist(r) > dist(best) {
                best = r;
            }
        }
        (best, self.range_status(best))
    }

    pub fn status(&self, i: i64, j: i64) -> Option<VertexStatus> {
        self.in_window(i, j).then(|| self.status[self.idx(i, j)])
    }

    /// Surface position (scaled by the sphere radius) of an ok vertex.
    pub fn point(&self, i: i64, j: i64) -> Option<Vec3> {
        if self.status(i, j) != Some(VertexStatus::Ok) {
            return None;
        }
        let p = self.points[self.idx(i, j)];
        Some(match self.surface {
            Surface::Plane => p,
            Surface::Sphere { radius } => p * radius,
        })
    }

    fn ok(&self, i: i64, j: i64) -> bool {
        self.status(i, j) == Some(VertexStatus::Ok)
    }

    pub fn indices(&self) -> impl Iterator<Item = (i64, i64)> {
        let n = self.n as i64;
        (-n..=n).flat_map(move |j| (-n..=n).map(move |i| (i, j)))
    }

    pub fn count(&self, st: VertexStatus) -> usize {
        self.status.iter().filter(|&&s| s == st).count()
    }

    /// Geodesic (or Euclidean) distance between two ok vertices.
    fn edge_length(&self, p: (i64, i64), q: (i64, i64)) -> Option<f64> {
        if !(self.ok(p.0, p.1) && self.ok(q.0, q.1)) {
            return None;
        }
        let (a, b) = (self.points[self.idx(p.0, p.1)], self.points[self.idx(q.0, q.1)]);
        Some(match self.surface {
            Surface::Plane => (a - b).norm(),
            Surface::Sphere { radius } => radius * a.angle_to(b),
        })
    }

    /// Net angle at `(i, j)`: signed angle from the chord toward `(i+1, j)`
    /// to the chord toward `(i, j+1)`, measured in the tangent plane with the
    /// outward normal.
    pub fn angle(&self, i: i64, j: i64) -> Result<f64, NetError> {
        if !(self.ok(i, j) && self.ok(i + 1, j) && self.ok(i, j + 1)) {
            return Err(NetError::MissingNeighbor(i, j));
        }
        let p = self.points[self.idx(i, j)];
        let qi = self.points[self.idx(i + 1, j)];
        let qj = self.points[self.idx(i, j + 1)];
        let (ti, tj, normal) = match self.surface {
            Surface::Plane => (qi - p, qj - p, Vec3::Z),
            Surface::Sphere { .. } => (qi - p * p.dot(qi), qj - p * p.dot(qj), p),
        };
        Ok(ti.cross(tj).dot(normal).atan2(ti.dot(tj)))
    }
}

/// Intersections of two circles in the `z = 0` plane, the root on the left
/// of `c1 -> c2` first.
fn plane_circle_intersect(c1: Vec3, r1: f64, c2: Vec3, r2: f64) -> Result<Vec<Vec3>, ()> {
    let d = c2 - c1;
    let dist = d.norm();
    if !(dist > 0.0) || dist > r1 + r2 || dist < (r1 - r2).abs() {
        return Err(());
    }
    let along = (dist * dist + r1 * r1 - r2 * r2) / (2.0 * dist);
    let off2 = r1 * r1 - along * along;
    let e = d * (1.0 / dist);
    let base = c1 + e * along;
    let left = Vec3::new(-e.y, e.x, 0.0);
    if off2 <= 0.0 {
        return Ok(vec![base]);
    }
    let off = off2.sqrt();
    Ok(vec![base + left * off, base - left * off])
}

/// Net angle at every vertex whose `+i` and `+j` neighbors are ok, indexed
/// like [`ChebNet::indices`].
pub fn net_angles(net: &ChebNet) -> Vec<Option<f64>> {
    net.indices().map(|(i, j)| net.angle(i, j).ok()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineGordonResidual {
    /// Largest `|D_uv phi + K sin(mean phi)|` over cells.
    pub max: f64,
    pub at: (i64, i64),
    /// Largest `D_uv phi` over cells (sign check).
    pub max_mixed: f64,
    pub cells: usize,
}

/// Discrete sine-Gordon residual over every cell `(i, j)..(i+1, j+1)` whose
/// four corner angles exist. `D_uv phi` is the mixed difference divided by
/// the cell's edge lengths `a c`.
pub fn sine_gordon_residual(net: &ChebNet) -> Result<SineGordonResidual, NetError> {
    let k = net.surface.curvature();
    let phi = net_angles(net);
    let w = 2 * net.n + 1;
    let n = net.n as i64;
    let at = |i: i64, j: i64| -> Option<f64> {
        if i.abs() > n || j.abs() > n {
            return None;
        }
        phi[(j + n) as usize * w + (i + n) as usize]
    };
    let mut out = SineGordonResidual {
        max: 0.0,
        at: (0, 0),
        max_mixed: f64::NEG_INFINITY,
        cells: 0,
    };
    for (i, j) in net.indices() {
        let (Some(p00), Some(p10), Some(p01), Some(p11)) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)) else {
            continue;
        };
        let mixed = (p11 - p10 - p01 + p00) / (net.a_len * net.c_len);
        let mean = 0.25 * (p00 + p10 + p01 + p11);
        let r = (mixed + k * mean.sin()).abs();
        out.cells += 1;
        out.max_mixed = out.max_mixed.max(mixed);
        if r > out.max {
            out.max = r;
            out.at = (i, j);
        }
    }
    if out.cells == 0 {
        return Err(NetError::NetTooSmall);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCheck {
    /// Largest `|length - prescribed|` over edges between ok vertices.
    pub max_deviation: f64,
    pub max_deviation_i: f64,
    pub max_deviation_j: f64,
    pub edges: usize,
}

pub fn edge_length_check(net: &ChebNet) -> EdgeCheck {
    let mut out = EdgeCheck {
        max_deviation: 0.0,
        max_deviation_i: 0.0,
        max_deviation_j: 0.0,
        edges: 0,
    };
    for (i, j) in net.indices() {
        if let Some(l) = net.edge_length((i, j), (i + 1, j)) {
            out.max_deviation_i = out.max_deviation_i.max((l - net.a_len).abs());
            out.edges += 1;
        }
        if let Some(l) = net.edge_length((i, j), (i, j + 1)) {
            out.max_deviation_j = out.max_deviation_j.max((l - net.c_len).abs());
            out.edges += 1;
        }
    }
    out.max_deviation = out.max_deviation_i.max(out.max_deviation_j);
    out
}

/// Whether every ok vertex lies strictly inside the hemisphere around the
/// base point, and the largest angular distance from a sample of that
/// hemisphere (shrunk by `margin`) to the nearest ok vertex.
pub fn hemisphere_coverage(net: &ChebNet, margin: f64, samples: usize) -> Option<f64> {
    let Surface::Sphere { radius } = net.surface else {
        return None;
    };
    let verts: Vec<Vec3> = net
        .indices()
        .filter_map(|(i, j)| net.point(i, j))
        .map(|p| p * (1.0 / radius))
        .collect();
    // Fibonacci lattice on the cap of angular radius pi/2 - margin
    let cap = FRAC_PI_2 - margin;
    let golden = PI * (3.0 - 5f64.sqrt());
    let worst = (0..samples)
        .into_par_iter()
        .map(|k| {
            let cos_t = 1.0 - (1.0 - cap.cos()) * (k as f64 + 0.5) / samples as f64;
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let az = golden * k as f64;
            let p = Vec3::new(cos_t, sin_t * az.cos(), sin_t * az.sin());
            verts.iter().map(|v| v.angle_to(p)).fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max);
    Some(worst)
}

impl From<GeoError> for NetError {
    fn from(e: GeoError) -> Self {
        NetError::BadParam(e.to_string())
    }
}
