//! Dirichlet problems for the Laplace equation on a region of the Mercator
//! plane, harmonic conjugation and path integration of holomorphic
//! derivatives.
//!
//! The region is rasterized onto a square lattice of cells (coordinates
//! `(t, u)`, `t` horizontal). Cells whose centers fall inside the boundary
//! curve are *interior*; exterior cells 4-adjacent to an interior cell form
//! the *boundary* ring. Where a lattice link leaves the region, the stencil
//! is shortened to the point where the link crosses the boundary curve
//! (Shortley-Weller), and the Dirichlet datum is taken at that crossing.
//! This keeps the scheme second order on curved boundaries.
//!
//! Field values stored on boundary cells refer to the point of the boundary
//! curve nearest to the cell center.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::geo::{first_self_intersection, PlanePoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("resolution {0} below the minimum of {1}")]
    BadResolution(usize, usize),
    #[error("boundary curve needs at least 3 finite points")]
    BadCurve,
    #[error("boundary curve is self-intersecting (edges {0} and {1})")]
    NotSimple(usize, usize),
    #[error("rasterized region has holes")]
    NotSimplyConnected,
    #[error("region too thin for the grid: {0} interior components")]
    RegionTooThin(usize),
    #[error("boundary values not set")]
    BoundaryUnset,
    #[error("solver hit the iteration cap {iterations} with residual {residual:e} (tolerance {tol:e})")]
    NoConvergence { iterations: usize, residual: f64, tol: f64 },
    #[error("discrete maximum principle violated by {0:e}")]
    MaximumPrinciple(f64),
    #[error("cell ({0}, {1}) is not an interior cell")]
    BadAnchor(usize, usize),
    #[error("field is not discretely harmonic: residual {residual:e} > {tol:e}")]
    NotHarmonic { residual: f64, tol: f64 },
    #[error("path integrals disagree by {discrepancy:e} (tolerance {tol:e})")]
    PathInconsistency { discrepancy: f64, tol: f64 },
    #[error("field does not belong to this grid")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Exterior,
    Interior,
    Boundary,
}

/// Lattice position, `i` along `t` and `j` along `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
}

/// East, west, north, south.
const DIRS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Neighbor {
    Cell(usize),
    /// Index into the crossing list, and the link length as a fraction of `h`.
    Crossing(usize, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    pub t_min: f64,
    pub u_min: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    mask: Vec<CellKind>,
    curve: Vec<PlanePoint>,
    /// Per cell: slot into `interior` for interior cells.
    slot: Vec<usize>,
    interior: Vec<usize>,
    neighbors: Vec<[Neighbor; 4]>,
    crossings: Vec<PlanePoint>,
    crossing_values: Vec<Option<f64>>,
    boundary_cells: Vec<usize>,
    nearest: Vec<PlanePoint>,
    boundary_values: Vec<Option<f64>>,
}

const NO_SLOT: usize = usize::MAX;

pub const MIN_RESOLUTION: usize = 32;

/// Rasterizes the closed plane curve `curve` with `resolution` cells along
/// the longer side of its bounding box.
pub fn build_grid(curve: &[PlanePoint], resolution: usize) -> Result<GridDomain, GridError> {
    if resolution < MIN_RESOLUTION {
        return Err(GridError::BadResolution(resolution, MIN_RESOLUTION));
    }
    rasterize(curve, resolution)
}

/// [`build_grid`] without the minimum-resolution check, for coarse sampling.
pub(crate) fn rasterize(curve: &[PlanePoint], resolution: usize) -> Result<GridDomain, GridError> {
    let mut curve: Vec<PlanePoint> = curve.to_vec();
    while curve.len() > 1 && curve[0] == curve[curve.len() - 1] {
        curve.pop();
    }
    if curve.len() < 3 || curve.iter().any(|p| !p.is_finite()) || resolution == 0 {
        return Err(GridError::BadCurve);
    }
    let pairs: Vec<(f64, f64)> = curve.iter().map(|p| (p.x, p.y)).collect();
    if let Some((a, b)) = first_self_intersection(&pairs) {
        return Err(GridError::NotSimple(a, b));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &curve {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let (w, ht) = (x1 - x0, y1 - y0);
    if !(w > 0.0 && ht > 0.0) {
        return Err(GridError::BadCurve);
    }
    let h = w.max(ht) / resolution as f64;
    let nx = (w / h - 1e-9).ceil() as usize + 2;
    let ny = (ht / h - 1e-9).ceil() as usize + 2;
    // center the lattice on the bounding box
    let t_min = 0.5 * (x0 + x1) - 0.5 * nx as f64 * h;
    let u_min = 0.5 * (y0 + y1) - 0.5 * ny as f64 * h;
    let tc = |i: usize| t_min + (i as f64 + 0.5) * h;
    let uc = |j: usize| u_min + (j as f64 + 0.5) * h;

    let row_cross: Vec<Vec<f64>> = (0..ny).map(|j| line_crossings(&curve, uc(j), false)).collect();
    let col_cross: Vec<Vec<f64>> = (0..nx).map(|i| line_crossings(&curve, tc(i), true)).collect();

    let mut mask = vec![CellKind::Exterior; nx * ny];
    for (j, xs) in row_cross.iter().enumerate() {
        for pair in xs.chunks_exact(2) {
            for i in 0..nx {
                let t = tc(i);
                if t >= pair[0] && t < pair[1] {
                    mask[j * nx + i] = CellKind::Interior;
                }
            }
        }
    }
    let interior: Vec<usize> = (0..nx * ny).filter(|&k| mask[k] == CellKind::Interior).collect();
    if interior.is_empty() {
        return Err(GridError::RegionTooThin(0));
    }
    let comps = count_components(&mask, nx, ny, |k| k == CellKind::Interior, false);
    if comps != 1 {
        return Err(GridError::RegionTooThin(comps));
    }
    // every non-interior cell must reach the outer frame (8-connected)
    if count_components(&mask, nx, ny, |k| k != CellKind::Interior, true) != 1 {
        return Err(GridError::NotSimplyConnected);
    }
    let mut slot = vec![NO_SLOT; nx * ny];
    for (s, &k) in interior.iter().enumerate() {
        slot[k] = s;
    }
    let mut crossings = Vec::new();
    let mut neighbors = Vec::with_capacity(interior.len());
    for &k in &interior {
        let (i, j) = (k % nx, k / nx);
        let mut nb = [Neighbor::Cell(0); 4];
        for (d, &(di, dj)) in DIRS.iter().enumerate() {
            let (ni, nj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
            let nk = nj * nx + ni;
            if mask[nk] == CellKind::Interior {
                nb[d] = Neighbor::Cell(slot[nk]);
                continue;
            }
            mask[nk] = CellKind::Boundary;
            let (start, list, horizontal) = if dj == 0 { (tc(i), &row_cross[j], true) } else { (uc(j), &col_cross[i], false) };
            let sign = (di + dj) as f64;
            // nearest crossing strictly ahead, within one cell
            let hit = list
                .iter()
                .map(|&c| (c - start) * sign)
                .filter(|&dist| dist > 0.0 && dist <= h * (1.0 + 1e-12))
                .fold(f64::INFINITY, f64::min);
            let frac = if hit.is_finite() { (hit / h).clamp(1e-9, 1.0) } else { 1.0 };
            let p = if horizontal {
                PlanePoint::new(start + sign * frac * h, uc(j))
            } else {
                PlanePoint::new(tc(i), start + sign * frac * h)
            };
            nb[d] = Neighbor::Crossing(crossings.len(), frac);
            crossings.push(p);
        }
        neighbors.push(nb);
    }
    let boundary_cells: Vec<usize> = (0..nx * ny).filter(|&k| mask[k] == CellKind::Boundary).collect();
    let nearest: Vec<PlanePoint> = boundary_cells
        .iter()
        .map(|&k| nearest_on_curve(&curve, PlanePoint::new(tc(k % nx), uc(k / nx))))
        .collect();
    let nb_cells = boundary_cells.len();
    let n_cross = crossings.len();
    Ok(GridDomain {
        t_min,
        u_min,
        h,
        nx,
        ny,
        mask,
        curve,
        slot,
        interior,
        neighbors,
        crossings,
        crossing_values: vec![None; n_cross],
        boundary_cells,
        nearest,
        boundary_values: vec![None; nb_cells],
    })
}

/// Sorted crossings of the closed curve with the line `y = c` (or `x = c`
/// when `vertical`), using the half-open rule at vertices.
fn line_crossings(curve: &[PlanePoint], c: f64, vertical: bool) -> Vec<f64> {
    let n = curve.len();
    let mut xs = Vec::new();
    for k in 0..n {
        let (a, b) = (curve[k], curve[(k + 1) % n]);
        let (ay, by, ax, bx) = if vertical { (a.x, b.x, a.y, b.y) } else { (a.y, b.y, a.x, b.x) };
        if (ay > c) != (by > c) {
            xs.push(ax + (c - ay) * (bx - ax) / (by - ay));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs
}

fn nearest_on_curve(curve: &[PlanePoint], p: PlanePoint) -> PlanePoint {
    let n = curve.len();
    let mut best = (f64::INFINITY, p);
    for k in 0..n {
        let (a, b) = (curve[k], curve[(k + 1) % n]);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let s = if len2 > 0.0 { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let q = PlanePoint::new(a.x + s * dx, a.y + s * dy);
        let d = q.distance(&p);
        if d < best.0 {
            best = (d, q);
        }
    }
    best.1
}

fn count_components(mask: &[CellKind], nx: usize, ny: usize, member: impl Fn(CellKind) -> bool, diag: bool) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut comps = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if seen[start] || !member(mask[start]) {
            continue;
        }
        comps += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = ((k % nx) as isize, (k / nx) as isize);
            for di in -1..=1isize {
                for dj in -1..=1isize {
                    if (di == 0 && dj == 0) || (!diag && di != 0 && dj != 0) {
                        continue;
                    }
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a >= nx as isize || b >= ny as isize {
                        continue;
                    }
                    let nk = b as usize * nx + a as usize;
                    if !seen[nk] && member(mask[nk]) {
                        seen[nk] = true;
                        stack.push(nk);
                    }
                }
            }
        }
    }
    comps
}

impl GridDomain {
    pub fn kind(&self, c: CellIndex) -> CellKind {
        self.mask[c.j * self.nx + c.i]
    }

    pub fn mask(&self) -> &[CellKind] {
        &self.mask
    }

    pub fn curve(&self) -> &[PlanePoint] {
        &self.curve
    }

    pub fn center(&self, c: CellIndex) -> PlanePoint {
        PlanePoint::new(self.t_min + (c.i as f64 + 0.5) * self.h, self.u_min + (c.j as f64 + 0.5) * self.h)
    }

    fn center_of(&self, k: usize) -> PlanePoint {
        self.center(CellIndex { i: k % self.nx, j: k / self.nx })
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.t_min,
            self.t_min + self.nx as f64 * self.h,
            self.u_min,
            self.u_min + self.ny as f64 * self.h,
        )
    }

    pub fn interior_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.interior.iter().map(|&k| CellIndex { i: k % self.nx, j: k / self.nx })
    }

    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    pub fn boundary_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.boundary_cells.iter().map(|&k| CellIndex { i: k % self.nx, j: k / self.nx })
    }

    /// Nearest boundary-curve point of each boundary cell, in
    /// [`GridDomain::boundary_cells`] order.
    pub fn boundary_points(&self) -> &[PlanePoint] {
        &self.nearest
    }

    /// Points where lattice links leave the region.
    pub fn crossing_points(&self) -> &[PlanePoint] {
        &self.crossings
    }

    /// Sets every Dirichlet datum from `g`, evaluated on the boundary curve.
    pub fn set_boundary_values(&mut self, g: impl Fn(PlanePoint) -> f64) {
        self.crossing_values = self.crossings.iter().map(|&p| Some(g(p))).collect();
        self.boundary_values = self.nearest.iter().map(|&p| Some(g(p))).collect();
    }

    pub fn boundary_values_set(&self) -> bool {
        self.crossing_values.iter().all(Option::is_some) && self.boundary_values.iter().all(Option::is_some)
    }

    /// Interior cell closest to `p`.
    pub fn nearest_interior(&self, p: PlanePoint) -> CellIndex {
        let k = *self
            .interior
            .iter()
            .min_by(|&&a, &&b| {
                let (da, db) = (self.center_of(a).distance(&p), self.center_of(b).distance(&p));
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("grid has interior cells");
        CellIndex { i: k % self.nx, j: k / self.nx }
    }

    fn link_length(nb: Neighbor, h: f64) -> f64 {
        match nb {
            Neighbor::Cell(_) => h,
            Neighbor::Crossing(_, frac) => frac * h,
        }
    }

    /// Normalized Shortley-Weller weights for E, W, N, S.
    fn stencil_weights(&self, s: usize) -> [f64; 4] {
        let nb = &self.neighbors[s];
        let l: [f64; 4] = std::array::from_fn(|d| Self::link_length(nb[d], self.h));
        let mut w = [
            2.0 / (l[0] * (l[0] + l[1])),
            2.0 / (l[1] * (l[0] + l[1])),
            2.0 / (l[2] * (l[2] + l[3])),
            2.0 / (l[3] * (l[2] + l[3])),
        ];
        let sum: f64 = w.iter().sum();
        for x in &mut w {
            *x /= sum;
        }
        w
    }
}

/// Real field on the interior and boundary cells of a grid; `NaN` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Arc<GridDomain>,
    pub values: Vec<f64>,
}

/// Complex field on the interior and boundary cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: Arc<GridDomain>,
    pub values: Vec<Complex64>,
}

impl ScalarField {
    /// Samples `g` at interior cell centers and at the boundary points; the
    /// grid's Dirichlet data is set from `g` as well.
    pub fn from_fn(grid: &GridDomain, g: impl Fn(PlanePoint) -> f64) -> ScalarField {
        let mut grid = grid.clone();
        grid.set_boundary_values(&g);
        let mut values = vec![f64::NAN; grid.nx * grid.ny];
        for &k in &grid.interior {
            values[k] = g(grid.center_of(k));
        }
        for (b, &k) in grid.boundary_cells.iter().enumerate() {
            values[k] = grid.boundary_values[b].unwrap_or(f64::NAN);
        }
        ScalarField {
            grid: Arc::new(grid),
            values,
        }
    }

    pub fn at(&self, c: CellIndex) -> f64 {
        self.values[c.j * self.grid.nx + c.i]
    }

    /// Min and max over interior and boundary cells.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    fn neighbor_value(&self, nb: Neighbor) -> f64 {
        match nb {
            Neighbor::Cell(s) => self.values[self.grid.interior[s]],
            Neighbor::Crossing(c, _) => self.grid.crossing_values[c].unwrap_or(f64::NAN),
        }
    }

    /// Max over interior cells of the normalized stencil residual
    /// `|sum_k w_k (v_k - v_c)|`.
    pub fn residual(&self) -> f64 {
        let g = &self.grid;
        (0..g.interior.len())
            .into_par_iter()
            .map(|s| {
                let w = g.stencil_weights(s);
                let uc = self.values[g.interior[s]];
                (0..4)
                    .map(|d| w[d] * (self.neighbor_value(g.neighbors[s][d]) - uc))
                    .sum::<f64>()
                    .abs()
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Second-order gradient `(d/dt, d/du)` at the interior cell with slot `s`.
    fn gradient_at(&self, s: usize) -> (f64, f64) {
        let g = &self.grid;
        let nb = g.neighbors[s];
        let uc = self.values[g.interior[s]];
        let diff = |fwd: Neighbor, back: Neighbor| {
            let (hf, hb) = (GridDomain::link_length(fwd, g.h), GridDomain::link_length(back, g.h));
            let (vf, vb) = (self.neighbor_value(fwd), self.neighbor_value(back));
            (hb * hb * (vf - uc) + hf * hf * (uc - vb)) / (hf * hb * (hf + hb))
        };
        (diff(nb[0], nb[1]), diff(nb[2], nb[3]))
    }

    /// Gradient at every interior cell, indexed like the cells (NaN elsewhere).
    pub fn gradient(&self) -> Vec<(f64, f64)> {
        let g = &self.grid;
        let mut out = vec![(f64::NAN, f64::NAN); g.nx * g.ny];
        for (s, &k) in g.interior.iter().enumerate() {
            out[k] = self.gradient_at(s);
        }
        out
    }

    /// Value at the nearest-curve point of each boundary cell, extrapolated
    /// linearly from the adjacent interior cells (averaged in E, W, N, S
    /// order). Measures how closely the discrete solution meets its boundary
    /// data on the curve itself.
    pub fn extrapolate_to_boundary(&self) -> Vec<f64> {
        let g = &self.grid;
        g.boundary_cells
            .iter()
            .zip(&g.nearest)
            .map(|(&k, &p)| {
                let mut acc = 0.0;
                let mut cnt = 0.0;
                for &(di, dj) in &DIRS {
                    let (i, j) = ((k % g.nx) as isize + di, (k / g.nx) as isize + dj);
                    if i < 0 || j < 0 || i >= g.nx as isize || j >= g.ny as isize {
                        continue;
                    }
                    let nk = j as usize * g.nx + i as usize;
                    if g.slot[nk] == NO_SLOT {
                        continue;
                    }
                    let (gx, gy) = self.gradient_at(g.slot[nk]);
                    let c = g.center_of(nk);
                    acc += self.values[nk] + gx * (p.x - c.x) + gy * (p.y - c.y);
                    cnt += 1.0;
                }
                acc / cnt
            })
            .collect()
    }
}

impl ComplexField {
    pub fn at(&self, c: CellIndex) -> Complex64 {
        self.values[c.j * self.grid.nx + c.i]
    }
}

/// Iteration controls for [`solve_dirichlet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Convergence threshold on the normalized stencil residual, relative to
    /// the range of the boundary data.
    pub tol_res: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_res: 1e-13,
            max_iter: 100_000,
        }
    }
}

/// Solves the discrete Dirichlet problem by red-black SOR.
///
/// Each half-sweep only reads cells of the other color, so cells of one color
/// are updated in parallel with a schedule-independent (bitwise reproducible)
/// result.
pub fn solve_dirichlet(domain: &GridDomain, cfg: &SolverConfig) -> Result<ScalarField, GridError> {
    if !domain.boundary_values_set() {
        return Err(GridError::BoundaryUnset);
    }
    let g = domain;
    let n = g.interior.len();
    let bvals: Vec<f64> = g
        .crossing_values
        .iter()
        .chain(g.boundary_values.iter())
        .map(|v| v.expect("checked above"))
        .collect();
    let (lo, hi) = bvals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    let scale = if range > 0.0 { range } else { lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) };
    let tol = cfg.tol_res * scale;

    // Compact stencils: neighbor slots (NO_SLOT for Dirichlet) and the
    // weighted Dirichlet contribution.
    struct Stencil {
        nb: [usize; 4],
        w: [f64; 4],
        fixed: [f64; 4],
    }
    let stencils: Vec<Stencil> = (0..n)
        .map(|s| {
            let w = g.stencil_weights(s);
            let mut nb = [NO_SLOT; 4];
            let mut fixed = [0.0; 4];
            for d in 0..4 {
                match g.neighbors[s][d] {
                    Neighbor::Cell(o) => nb[d] = o,
                    Neighbor::Crossing(c, _) => fixed[d] = g.crossing_values[c].expect("checked above"),
                }
            }
            Stencil { nb, w, fixed }
        })
        .collect();
    let color = |s: usize| {
        let k = g.interior[s];
        (k % g.nx + k / g.nx) % 2
    };
    let reds: Vec<usize> = (0..n).filter(|&s| color(s) == 0).collect();
    let blacks: Vec<usize> = (0..n).filter(|&s| color(s) == 1).collect();

    let mean = bvals.iter().sum::<f64>() / bvals.len() as f64;
    let correction = |u: &[f64], s: usize| -> f64 {
        let st = &stencils[s];
        let uc = u[s];
        let mut r = 0.0;
        for d in 0..4 {
            let v = if st.nb[d] == NO_SLOT { st.fixed[d] } else { u[st.nb[d]] };
            r += st.w[d] * (v - uc);
        }
        r
    };

    // Jacobi spectral radius estimate for the bounding rectangle.
    let rho = 0.5 * ((std::f64::consts::PI / g.nx as f64).cos() + (std::f64::consts::PI / g.ny as f64).cos());
    let omega_opt = 2.0 / (1.0 + (1.0 - rho * rho).sqrt());

    let run = |omega: f64| -> Result<(Vec<f64>, usize, f64), (usize, f64)> {
        let mut u = vec![mean; n];
        let mut buf = vec![0.0; n];
        let mut first = None;
        let mut last = f64::INFINITY;
        for it in 1..=cfg.max_iter {
            let mut sweep_max: f64 = 0.0;
            for set in [&reds, &blacks] {
                let upd = &mut buf[..set.len()];
                let uref = &u;
                upd.par_iter_mut().zip(set.par_iter()).for_each(|(o, &s)| *o = correction(uref, s));
                for (k, &s) in set.iter().enumerate() {
                    sweep_max = sweep_max.max(upd[k].abs());
                    u[s] += omega * upd[k];
                }
            }
            if !sweep_max.is_finite() {
                return Err((it, sweep_max));
            }
            let r0 = *first.get_or_insert(sweep_max);
            if it > 20 && sweep_max > 1e3 * r0.max(tol) {
                return Err((it, sweep_max));
            }
            last = sweep_max;
            if sweep_max <= tol {
                let exact = (0..n).into_par_iter().map(|s| correction(&u, s).abs()).reduce(|| 0.0, f64::max);
                if exact <= tol {
                    return Ok((u, it, exact));
                }
            }
        }
        Ok((u, cfg.max_iter + 1, last))
    };

    let (u, iters, res) = match run(omega_opt) {
        Ok(r) => r,
        Err(_) => run(1.0).map_err(|(it, r)| GridError::NoConvergence {
            iterations: it,
            residual: r / scale,
            tol: cfg.tol_res,
        })?,
    };
    if iters > cfg.max_iter {
        return Err(GridError::NoConvergence {
            iterations: cfg.max_iter,
            residual: res / scale,
            tol: cfg.tol_res,
        });
    }
    let mut values = vec![f64::NAN; g.nx * g.ny];
    for (s, &k) in g.interior.iter().enumerate() {
        values[k] = u[s];
    }
    for (b, &k) in g.boundary_cells.iter().enumerate() {
        values[k] = g.boundary_values[b].expect("checked above");
    }
    let slack = 1e-9 * scale;
    let (flo, fhi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let excess = (lo - flo).max(fhi - hi);
    if excess > slack {
        return Err(GridError::MaximumPrinciple(excess));
    }
    Ok(ScalarField {
        grid: Arc::new(domain.clone()),
        values,
    })
}

/// Spanning tree grown from the anchor by alternately extending along full
/// lattice runs in the two axis directions, starting with `t` runs when
/// `rows_first`. Returns `(parent, child)` slot pairs in visiting order.
fn run_tree(g: &GridDomain, anchor: usize, rows_first: bool) -> Vec<(usize, usize)> {
    let n = g.interior.len();
    let mut reached = vec![false; n];
    reached[anchor] = true;
    let mut frontier = vec![anchor];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut horizontal = rows_first;
    let mut idle = 0;
    while edges.len() + 1 < n {
        let dirs: [usize; 2] = if horizontal { [0, 1] } else { [2, 3] };
        let mut next = Vec::new();
        for &start in &frontier {
            for &d in &dirs {
                let mut cur = start;
                while let Neighbor::Cell(o) = g.neighbors[cur][d] {
                    if reached[o] {
                        break;
                    }
                    reached[o] = true;
                    edges.push((cur, o));
                    next.push(o);
                    cur = o;
                }
            }
        }
        frontier.extend(next.iter().copied());
        if next.is_empty() {
            idle += 1;
            if idle >= 2 {
                break;
            }
        } else {
            idle = 0;
        }
        horizontal = !horizontal;
    }
    edges
}

fn direction_between(g: &GridDomain, a: usize, b: usize) -> usize {
    (0..4)
        .find(|&d| g.neighbors[a][d] == Neighbor::Cell(b))
        .expect("tree edges join lattice neighbors")
}

fn anchor_slot(g: &GridDomain, anchor: CellIndex) -> Result<usize, GridError> {
    if anchor.i >= g.nx || anchor.j >= g.ny {
        return Err(GridError::BadAnchor(anchor.i, anchor.j));
    }
    match g.slot[anchor.j * g.nx + anchor.i] {
        NO_SLOT => Err(GridError::BadAnchor(anchor.i, anchor.j)),
        s => Ok(s),
    }
}

/// Integrates per-edge increments along both run trees; returns the
/// row-first values and the maximum disagreement between the two.
fn integrate_trees<T, F>(g: &GridDomain, anchor: usize, anchor_value: T, incr: F, dist: impl Fn(T, T) -> f64) -> (Vec<T>, f64)
where
    T: Copy + std::ops::Add<Output = T> + Send + Sync,
    F: Fn(usize, usize, usize) -> T,
{
    let mut results = Vec::with_capacity(2);
    for rows_first in [true, false] {
        let mut vals = vec![anchor_value; g.interior.len()];
        for (a, b) in run_tree(g, anchor, rows_first) {
            vals[b] = vals[a] + incr(a, b, direction_between(g, a, b));
        }
        results.push(vals);
    }
    let disc = results[0]
        .iter()
        .zip(&results[1])
        .map(|(&x, &y)| dist(x, y))
        .fold(0.0, f64::max);
    (results.swap_remove(0), disc)
}

/// Harmonic conjugate `v` of `field` (so that `field + i v` is holomorphic in
/// `t + i u`), normalized to zero at `anchor`.
pub fn harmonic_conjugate(field: &ScalarField, anchor: CellIndex) -> Result<ScalarField, GridError> {
    let g = &*field.grid;
    let a = anchor_slot(g, anchor)?;
    let (lo, hi) = field.range();
    let scale = if hi > lo { hi - lo } else { lo.abs().max(f64::MIN_POSITIVE) };
    let residual = field.residual() / scale;
    let tol = 100.0 * SolverConfig::default().tol_res;
    if !(residual <= tol) {
        return Err(GridError::NotHarmonic { residual, tol });
    }
    let grads: Vec<(f64, f64)> = (0..g.interior.len()).map(|s| field.gradient_at(s)).collect();
    let gmax = grads.iter().map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max);
    // v_t = -f_u, v_u = f_t; trapezoid along each lattice edge
    let incr = |a: usize, b: usize, d: usize| {
        let (ga, gb) = (grads[a], grads[b]);
        match d {
            0 => -0.5 * g.h * (ga.1 + gb.1),
            1 => 0.5 * g.h * (ga.1 + gb.1),
            2 => 0.5 * g.h * (ga.0 + gb.0),
            _ => -0.5 * g.h * (ga.0 + gb.0),
        }
    };
    let (vals, disc) = integrate_trees(g, a, 0.0, incr, |x, y| (x - y).abs());
    let tol = 10.0 * g.h * g.h * gmax.max(f64::MIN_POSITIVE);
    if disc > tol {
        return Err(GridError::PathInconsistency { discrepancy: disc, tol });
    }
    let mut values = vec![f64::NAN; g.nx * g.ny];
    for (s, &k) in g.interior.iter().enumerate() {
        values[k] = vals[s];
    }
    for (b, &k) in g.boundary_cells.iter().enumerate() {
        let p = g.nearest[b];
        values[k] = average_over_interior_neighbors(g, k, |s, c| {
            let (gx, gy) = grads[s];
            vals[s] - gy * (p.x - c.x) + gx * (p.y - c.y)
        });
    }
    Ok(ScalarField {
        grid: field.grid.clone(),
        values,
    })
}

fn average_over_interior_neighbors<T>(g: &GridDomain, k: usize, f: impl Fn(usize, PlanePoint) -> T) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Div<f64, Output = T>,
{
    let mut acc: Option<T> = None;
    let mut cnt = 0.0;
    for &(di, dj) in &DIRS {
        let (i, j) = ((k % g.nx) as isize + di, (k / g.nx) as isize + dj);
        if i < 0 || j < 0 || i >= g.nx as isize || j >= g.ny as isize {
            continue;
        }
        let nk = j as usize * g.nx + i as usize;
        if g.slot[nk] == NO_SLOT {
            continue;
        }
        let v = f(g.slot[nk], g.center_of(nk));
        acc = Some(match acc {
            Some(a) => a + v,
            None => v,
        });
        cnt += 1.0;
    }
    acc.expect("boundary cells touch the interior") / cnt
}

/// Recovers `F` with `F' = fprime` and `F(anchor) = anchor_value` by
/// trapezoidal integration along lattice paths. Boundary-cell values are
/// taken at the nearest curve point.
pub fn integrate_holomorphic(fprime: &ComplexField, anchor: CellIndex, anchor_value: Complex64) -> Result<ComplexField, GridError> {
    let g = &*fprime.grid;
    let a = anchor_slot(g, anchor)?;
    let fp: Vec<Complex64> = g.interior.iter().map(|&k| fprime.values[k]).collect();
    let fmax = fp.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let step = |d: usize| match d {
        0 => Complex64::new(g.h, 0.0),
        1 => Complex64::new(-g.h, 0.0),
        2 => Complex64::new(0.0, g.h),
        _ => Complex64::new(0.0, -g.h),
    };
    let incr = |a: usize, b: usize, d: usize| step(d) * (fp[a] + fp[b]) * 0.5;
    let (vals, disc) = integrate_trees(g, a, anchor_value, incr, |x, y| (x - y).norm());
    let (t0, t1, u0, u1) = g.bounds();
    let diam = (t1 - t0).hypot(u1 - u0).max(1.0);
    let tol = 10.0 * g.h * g.h * fmax.max(f64::MIN_POSITIVE) * diam;
    if disc > tol {
        return Err(GridError::PathInconsistency { discrepancy: disc, tol });
    }
    let mut values = vec![Complex64::new(f64::NAN, f64::NAN); g.nx * g.ny];
    for (s, &k) in g.interior.iter().enumerate() {
        values[k] = vals[s];
    }
    for (b, &k) in g.boundary_cells.iter().enumerate() {
        let p = g.nearest[b];
        let fb = fprime.values[k];
        values[k] = average_over_interior_neighbors(g, k, |s, c| {
            let dz = Complex64::new(p.x - c.x, p.y - c.y);
            let end = if fb.is_finite() { fb } else { fp[s] };
            vals[s] + dz * (fp[s] + end) * 0.5
        });
    }
    Ok(ComplexField {
        grid: fprime.grid.clone(),
        values,
    })
}
