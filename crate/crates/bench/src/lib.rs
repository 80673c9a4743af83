//! Shared fixtures for the criterion benches: a deliberately coarse
//! configuration so single iterations stay well under a second.

use std::sync::Arc;

use nalgebra::Vector3;

use stokestrack_core::control::{build_control_law, BoundSet, ControlLaw, GridAxis, PoseGrid};
use stokestrack_core::geometry::{BoundaryDiscretization, DomainGeometry, Pose, SolidShape};
use stokestrack_core::stokes::{SolverConfig, StokesSolver};

pub const SOLID_RESOLUTION: (usize, usize) = (9, 18);
pub const OUTER_RESOLUTION: (usize, usize) = (11, 22);

pub fn shape() -> SolidShape {
    SolidShape::sphere(0.1, 1.0).unwrap()
}

pub fn domain() -> DomainGeometry {
    DomainGeometry::new(1.0, std::f64::consts::FRAC_PI_3, 0.3).unwrap()
}

pub fn solver_config() -> SolverConfig {
    SolverConfig {
        solid_source_resolution: (6, 12),
        outer_source_resolution: (9, 18),
        cap_source_count: 80,
        residual_tolerance: 1e-2,
        ..SolverConfig::default()
    }
}

pub fn discretization(pose: &Pose) -> Arc<BoundaryDiscretization> {
    Arc::new(
        BoundaryDiscretization::assemble(
            &shape(),
            pose,
            &domain(),
            SOLID_RESOLUTION,
            OUTER_RESOLUTION,
        )
        .unwrap(),
    )
}

pub fn solver(pose: &Pose) -> StokesSolver {
    StokesSolver::new(&shape(), pose, &domain(), discretization(pose), &solver_config()).unwrap()
}

/// Single-node law centered at the origin.
pub fn law() -> ControlLaw {
    let axis = |half: f64| GridAxis {
        min: -half,
        max: half,
        count: 1,
    };
    let grid = PoseGrid {
        axes: vec![axis(0.01), axis(0.01), axis(0.01)],
    };
    build_control_law(
        &shape(),
        &domain(),
        &solver_config(),
        SOLID_RESOLUTION,
        OUTER_RESOLUTION,
        grid,
        6,
        0.3,
        0.1,
        BoundSet {
            velocity: 10.0,
            acceleration: 100.0,
        },
    )
    .unwrap()
    .0
}

pub fn offset_pose() -> Pose {
    Pose::translated(Vector3::new(0.2, 0.0, 0.1))
}
