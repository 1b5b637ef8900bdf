//! Run configuration and the error-to-exit-code mapping.

use std::path::PathBuf;

use chebmap_core::{DistortionError, GeoError, GridError, NetError, OptimizeError, ProjectionError};
use thiserror::Error;

use crate::map_file::MapFileError;
use crate::region_file::RegionFileError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    BadInput(String),
    #[error("{0}")]
    Singular(String),
    /// Dirichlet solve stopped at the iteration cap.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e}, tolerance {tol:e})")]
    NoConvergence { iterations: usize, residual: f64, tol: f64 },
    /// Other failures of the numerical pipeline.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) => 2,
            CliError::Singular(_) => 3,
            CliError::NoConvergence { .. } | CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
        CliError::BadInput(format!("{}: {e}", path.display()))
    }
}

impl From<GeoError> for CliError {
    fn from(e: GeoError) -> Self {
        match e {
            GeoError::Pole { .. } => CliError::Singular(e.to_string()),
            _ => CliError::BadInput(e.to_string()),
        }
    }
}

impl From<ProjectionError> for CliError {
    fn from(e: ProjectionError) -> Self {
        match e {
            ProjectionError::Geo(g) => g.into(),
            ProjectionError::SingularPoint { .. } | ProjectionError::OutsideImage(_) => CliError::Singular(e.to_string()),
            _ => CliError::BadInput(e.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::NoConvergence {
                iterations,
                residual,
                tol,
            } => CliError::NoConvergence {
                iterations,
                residual,
                tol,
            },
            GridError::MaximumPrinciple(_)
            | GridError::NotHarmonic { .. }
            | GridError::PathInconsistency { .. }
            | GridError::GridMismatch => CliError::Numerical(e.to_string()),
            _ => CliError::BadInput(e.to_string()),
        }
    }
}

impl From<DistortionError> for CliError {
    fn from(e: DistortionError) -> Self {
        match e {
            DistortionError::Projection(p) => p.into(),
            DistortionError::Geo(g) => g.into(),
            DistortionError::Grid(g) => g.into(),
            DistortionError::SingularPoint { .. } => CliError::Singular(e.to_string()),
            _ => CliError::BadInput(e.to_string()),
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::BadResolution(..) => CliError::BadInput(e.to_string()),
            OptimizeError::Geo(g) => g.into(),
            OptimizeError::Grid(g) => g.into(),
            OptimizeError::Distortion(d) => d.into(),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        CliError::BadInput(e.to_string())
    }
}

impl From<RegionFileError> for CliError {
    fn from(e: RegionFileError) -> Self {
        match e {
            RegionFileError::Region(g) => g.into(),
            _ => CliError::BadInput(e.to_string()),
        }
    }
}

impl From<MapFileError> for CliError {
    fn from(e: MapFileError) -> Self {
        CliError::BadInput(e.to_string())
    }
}

pub const MAX_GRID: usize = 4096;
pub const MAX_NET_HALF_WIDTH: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceArg {
    Plane,
    Sphere,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Project {
        region: PathBuf,
        projection: String,
        /// Graticule spacing, degrees.
        graticule: f64,
        /// Random sample points for the CSV instead of grid cell centers.
        samples: Option<usize>,
    },
    Optimize {
        region: PathBuf,
    },
    Net {
        surface: SurfaceArg,
        radius: f64,
        /// Seed angle, degrees.
        phi0: f64,
        step: f64,
        /// Seed length per quadrant.
        extent: f64,
        rect: Option<(f64, f64)>,
    },
    Compare {
        region: PathBuf,
        projections: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub grid: usize,
    /// Relative residual tolerance of the Dirichlet solve.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed for sampled checks and sampled output.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

pub const OPTIMIZED_KEYWORD: &str = "optimized";
pub const CONIC_FIT_KEYWORD: &str = "conic-fit";

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::BadInput(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Smallest grid the command accepts.
    pub fn min_grid(&self) -> usize {
        match &self.command {
            Command::Optimize { .. } => chebmap_core::optimal::MIN_OPTIMIZE_RESOLUTION,
            Command::Compare { projections, .. } if projections.iter().any(|p| p == OPTIMIZED_KEYWORD) => {
                chebmap_core::optimal::MIN_OPTIMIZE_RESOLUTION
            }
            _ => chebmap_core::distortion::MIN_REPORT_GRID,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        positive("tolerance", self.tol)?;
        if self.max_iter == 0 {
            return Err(CliError::BadInput("max-iter must be at least 1".into()));
        }
        if !matches!(self.command, Command::Net { .. }) && !(self.min_grid()..=MAX_GRID).contains(&self.grid) {
            return Err(CliError::BadInput(format!(
                "grid {} outside [{}, {MAX_GRID}]",
                self.grid,
                self.min_grid()
            )));
        }
        match &self.command {
            Command::Project { graticule, samples, .. } => {
                positive("graticule spacing", *graticule)?;
                if *graticule > 90.0 {
                    return Err(CliError::BadInput("graticule spacing above 90 degrees".into()));
                }
                if *samples == Some(0) {
                    return Err(CliError::BadInput("samples must be at least 1".into()));
                }
            }
            Command::Optimize { .. } => {}
            Command::Net {
                radius,
                phi0,
                step,
                extent,
                rect,
                ..
            } => {
                if !(*phi0 > 0.0 && *phi0 < 180.0) {
                    return Err(CliError::BadInput(format!("phi0 {phi0} outside (0, 180) degrees")));
                }
                positive("radius", *radius)?;
                positive("step", *step)?;
                positive("extent", *extent)?;
                if let Some((a, c)) = rect {
                    positive("rect a", *a)?;
                    positive("rect c", *c)?;
                }
                let n = self.net_half_width();
                if n == 0 || n > MAX_NET_HALF_WIDTH {
                    return Err(CliError::BadInput(format!(
                        "extent/step gives {n} steps per quadrant, need 1..={MAX_NET_HALF_WIDTH}"
                    )));
                }
            }
            Command::Compare { projections, .. } => {
                let has_opt = projections.iter().any(|p| p == OPTIMIZED_KEYWORD);
                if projections.len() < 2 && !has_opt {
                    return Err(CliError::BadInput(
                        "compare needs at least two projections or the keyword \"optimized\"".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Steps per quadrant of a net run: `round(extent / edge)` with the
    /// longer edge.
    pub fn net_half_width(&self) -> usize {
        match &self.command {
            Command::Net { step, extent, rect, .. } => {
                let edge = rect.map_or(*step, |(a, c)| a.max(c));
                let n = (extent / edge).round();
                if n.is_finite() && n >= 0.0 {
                    n.min(usize::MAX as f64) as usize
                } else {
                    0
                }
            }
            _ => 0,
        }
    }
}
