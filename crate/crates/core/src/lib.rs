//! Template mesh fitting with explicit control of vertex density.
//!
//! A fixed-connectivity template (usually an icosphere) is deformed onto a
//! target surface by first-order optimization of diffusion-re-parameterized
//! coordinates `u = (I + lambda L) p`. An edge-length adaptation energy
//! redistributes vertices: first toward uniform density, then toward
//! high-curvature regions, without ever remeshing. A landmark pipeline
//! transfers corpus annotations onto the template for correspondence-aware
//! registration.
//!
//! ```no_run
//! use densadapt::{fit, icosphere, FitConfig};
//! use densadapt::synthetic::{spiky_star, SpikyStarParams};
//!
//! let template = icosphere(4, 1.0)?;
//! let target = spiky_star(&SpikyStarParams::default())?;
//! let result = fit(&template, &target, &FitConfig::default())?;
//! assert!(result.mesh.same_connectivity(&template));
//! # Ok::<(), densadapt::Error>(())
//! ```

pub mod density;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod fit;
pub mod gradcheck;
pub mod landmarks;
pub mod laplacian;
pub mod losses;
pub mod mesh;
pub mod optim;
pub mod par;
pub mod pipeline;
pub mod sparse;
pub mod spatial;
pub mod synthetic;

pub use density::{
    adaptation_energy, adaptation_gradient, adaptive_target, curvature_magnitudes, mean_edge_lengths,
    smooth_field, uniform_target, EdgeLengthTarget, TargetKind,
};
pub use diffusion::DiffusionSystem;
pub use error::{Error, Result};
pub use fit::{fit, optimize_adaptation_only, AdaptationConfig, BaselineMode, FitConfig, FitResult, IterationMetrics};
pub use laplacian::SparseLaplacian;
pub use mesh::{icosphere, load_obj, save_obj, vertex_normals, TriMesh, Vec3};
pub use optim::{OptimizerState, ScheduleConfig, SecondMoment, StepConfig};
pub use par::Execution;
pub use spatial::{closest_points, Correspondence, SurfaceIndex};
