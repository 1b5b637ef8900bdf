//! Sphere-to-plane projections and their distortion, Chebyshev-optimal
//! conformal maps obtained from a Dirichlet problem, and discrete Chebyshev
//! nets on the plane and the sphere.

pub mod distortion;
pub mod geo;
pub mod laplace;
mod linalg;
pub mod net;
pub mod optimal;
pub mod projections;

pub use distortion::{
    classify_euler, distortion_report, local_scales, magnification_conformal, DistortionError, DistortionReport,
    DistortionSample, EulerClass,
};
pub use geo::{
    geodesic_distance, mercator_forward, mercator_inverse, resample_boundary, sphere_circle_intersect, GeoError,
    GeoPoint, PlanePoint, Region, Vec3, LAT_CAP,
};
pub use laplace::{
    build_grid, harmonic_conjugate, integrate_holomorphic, solve_dirichlet, CellIndex, CellKind, ComplexField,
    GridDomain, GridError, ScalarField, SolverConfig,
};
pub use net::{build_net, darboux_net, ChebNet, NetError, Surface, VertexStatus};
pub use optimal::{fit_conic_exponent, optimize_projection, ConicFit, ConicSearch, OptimizeError, OptimizedProjection};
pub use projections::{
    great_circle_image_check, make_projection, project, ProjectionError, ProjectionKind, ProjectionMap,
};
