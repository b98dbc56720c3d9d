//! The sketch-and-project iteration: closed-form step, per-method kernels,
//! a direct projection oracle and the run loop.

pub mod presets;
pub mod run;
pub mod state;
pub mod step;
pub mod system;

pub use presets::{build_geometry, preset, BlockSize, GeometryChoice, PresetOptions, ProbScheme, SamplingKind};
pub use run::{run_solver, ConvergenceLog, LogEntry, Outcome, SolveReport, SolverConfig, StopMetric};
pub use state::{IterateState, Method};
pub use step::{general_step, project_sketch_oracle, projection_matrix, specialized_step, vector_sketch_step};
pub use system::LinearSystem;
