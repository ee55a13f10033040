//! Multi-domain Legendre-Gauss-Radau direct collocation.

pub mod lgr;
pub mod mesh;
pub mod refine;
pub mod transcription;

pub use lgr::LgrRule;
pub use mesh::{Domain, Mesh, Regime};
pub use refine::{estimate_error, interpolate_solution, refine_mesh};
pub use transcription::{
    Bounds, CollocationError, CollocationSolution, IntervalSpan, Ocp, Scalar, Trajectory, Transcription,
    TranscriptionOptions,
};
