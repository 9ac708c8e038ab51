//! Time-optimal planning for a rectangular car among moving obstacles.

pub mod error;
pub mod grid;
pub mod io;
pub mod kinematics;
pub mod scene;
pub mod oracle;
pub mod solver;
pub mod tracer;

pub use error::{Error, Result};
pub use grid::{Domain, Grid4, NodeIndex};
pub use kinematics::{CarParams, Configuration, ControlPair};
pub use scene::{Scene, SceneFile};
pub use solver::{SolveReport, Solver, SolverParams, ValueFunction};
