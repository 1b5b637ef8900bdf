//! `CHEBMAP1` map files.
//!
//! Layout, all numbers little-endian:
//!
//! ```text
//! magic   8 bytes  "CHEBMAP1"
//! t_min t_max u_min u_max h      5 x f64
//! nx ny                          2 x u64
//! image   nx*ny x (re, im)       row-major, u outer, t inner
//! m       nx*ny x f64
//! ```
//!
//! Cells outside the region hold NaN.

use chebmap_core::OptimizedProjection;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"CHEBMAP1";
const HEADER_LEN: usize = 8 + 5 * 8 + 2 * 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapFileError {
    #[error("not a CHEBMAP1 file")]
    BadMagic,
    #[error("truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("bad header: {0}")]
    BadHeader(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapFile {
    pub t_min: f64,
    pub t_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub image: Vec<(f64, f64)>,
    pub m: Vec<f64>,
}

impl MapFile {
    pub fn from_projection(p: &OptimizedProjection) -> MapFile {
        let g = &p.grid;
        let (t_min, t_max, u_min, u_max) = g.bounds();
        MapFile {
            t_min,
            t_max,
            u_min,
            u_max,
            h: g.h,
            nx: g.nx,
            ny: g.ny,
            image: p.image.values.iter().map(|z| (z.re, z.im)).collect(),
            m: p.m_field.values.clone(),
        }
    }

    /// Same contents, NaN compared equal to NaN.
    pub fn same_as(&self, o: &MapFile) -> bool {
        encode(self) == encode(o)
    }
}

pub fn encode(m: &MapFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.nx * m.ny * 24);
    out.extend_from_slice(MAGIC);
    for v in [m.t_min, m.t_max, m.u_min, m.u_max, m.h] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [m.nx as u64, m.ny as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &(re, im) in &m.image {
        out.extend_from_slice(&re.to_le_bytes());
        out.extend_from_slice(&im.to_le_bytes());
    }
    for &v in &m.m {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn f64_at(b: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(b[off..off + 8].try_into().expect("8-byte slice"))
}

fn u64_at(b: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(b[off..off + 8].try_into().expect("8-byte slice"))
}

pub fn decode(bytes: &[u8]) -> Result<MapFile, MapFileError> {
    if bytes.len() < MAGIC.len() || &bytes[..8] != MAGIC {
        return Err(MapFileError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(MapFileError::Truncated {
            need: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let [t_min, t_max, u_min, u_max, h] = std::array::from_fn(|k| f64_at(bytes, 8 + 8 * k));
    let (nx, ny) = (u64_at(bytes, 48), u64_at(bytes, 56));
    let bad = |m: String| Err(MapFileError::BadHeader(m));
    if ![t_min, t_max, u_min, u_max, h].iter().all(|v| v.is_finite()) || !(h > 0.0) {
        return bad("bounds and spacing must be finite with h > 0".into());
    }
    if nx == 0 || ny == 0 {
        return bad("empty grid".into());
    }
    let cells = nx
        .checked_mul(ny)
        .and_then(|c| usize::try_from(c).ok())
        .filter(|c| c.checked_mul(24).is_some())
        .ok_or_else(|| MapFileError::BadHeader("grid too large".into()))?;
    let need = HEADER_LEN
        .checked_add(cells * 24)
        .ok_or_else(|| MapFileError::BadHeader("grid too large".into()))?;
    if bytes.len() < need {
        return Err(MapFileError::Truncated {
            need,
            have: bytes.len(),
        });
    }
    if bytes.len() > need {
        return Err(MapFileError::Trailing(bytes.len() - need));
    }
    let (nxf, nyf) = (nx as f64, ny as f64);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(h);
    if !close(t_max - t_min, nxf * h) || !close(u_max - u_min, nyf * h) {
        return bad(format!("bounds disagree with {nx} x {ny} cells of size {h}"));
    }
    let image = (0..cells)
        .map(|k| (f64_at(bytes, HEADER_LEN + 16 * k), f64_at(bytes, HEADER_LEN + 16 * k + 8)))
        .collect();
    let m_off = HEADER_LEN + 16 * cells;
    let m = (0..cells).map(|k| f64_at(bytes, m_off + 8 * k)).collect();
    Ok(MapFile {
        t_min,
        t_max,
        u_min,
        u_max,
        h,
        nx: nx as usize,
        ny: ny as usize,
        image,
        m,
    })
}
