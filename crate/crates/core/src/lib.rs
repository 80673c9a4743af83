//! Constructive trajectory tracking of a rigid body immersed in a bounded
//! stationary Stokes flow, actuated only through boundary velocities on a
//! control patch of the container wall.
//!
//! The pipeline: discretize the fluid boundary ([`geometry`]), solve the
//! exterior Stokes problems by fundamental-solution collocation
//! ([`stokes`]), assemble resistance and mass matrices ([`dynamics`]),
//! synthesize an interpolated feedback law on a pose grid ([`control`]),
//! and close the loop ([`sim`]). [`scenario`] holds the TOML run
//! descriptions shared with the command-line tools.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod scenario;
pub mod sim;
pub mod stokes;

pub use control::{BoundSet, ControlField, ControlLaw, EvalMode, GridAxis, PoseGrid};
pub use dynamics::{MassMatrix, ResistanceMatrix};
pub use error::{Error, Result};
pub use geometry::{
    BoundaryDiscretization, DomainGeometry, PatchTag, Pose, RigidState, ShapeKind, SolidShape,
};
pub use scenario::Scenario;
pub use sim::{SimulationRecord, SwitchOffReport, Trajectory};
pub use stokes::{BoundaryData, SolverConfig, StokesSolution, StokesSolver};
