//! Scenario files: a single TOML document describing geometry, solver
//! settings, control-law synthesis parameters and the run to execute.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::{BoundSet, GridAxis, PoseGrid};
use crate::error::{Error, Result};
use crate::geometry::{DomainGeometry, SolidShape};
use crate::sim::{SplineTrajectory, Trajectory};
use crate::stokes::SolverConfig;

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::InvalidScenario {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub geometry: GeometrySection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub control: ControlSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub solid: SolidSection,
    pub domain_radius: f64,
    pub gamma_cap: f64,
    pub delta: f64,
    #[serde(default = "default_solid_resolution")]
    pub solid_resolution: (usize, usize),
    #[serde(default = "default_outer_resolution")]
    pub outer_resolution: (usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum SolidSection {
    Sphere { radius: f64, mass: f64 },
    Ellipsoid { semi_axes: [f64; 3], mass: f64 },
}

fn default_solid_resolution() -> (usize, usize) {
    (12, 24)
}
fn default_outer_resolution() -> (usize, usize) {
    (14, 28)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub basis_size: usize,
    pub bump_radius: f64,
    pub epsilon_rel: f64,
    pub grid_min: [f64; 3],
    pub grid_max: [f64; 3],
    pub grid_counts: [usize; 3],
    pub velocity_bound: f64,
    pub acceleration_bound: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            basis_size: 12,
            bump_radius: 0.3,
            epsilon_rel: 0.05,
            grid_min: [-0.35, -0.35, -0.05],
            grid_max: [0.35, 0.35, 0.05],
            grid_counts: [3, 3, 3],
            velocity_bound: 10.0,
            acceleration_bound: 100.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub trajectory: TrajectorySection,
    pub duration: f64,
    pub dt: f64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> String {
    "fast".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySection {
    Rest {
        #[serde(default)]
        position: [f64; 3],
    },
    Line {
        start: [f64; 3],
        end: [f64; 3],
        duration: f64,
    },
    Circle {
        #[serde(default)]
        center: [f64; 3],
        radius: f64,
        period: f64,
    },
    Spline {
        times: Vec<f64>,
        waypoints: Vec<[f64; 3]>,
    },
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text)
            .map_err(|e| invalid("(document)", e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        match &g.solid {
            SolidSection::Sphere { radius, mass } => {
                if *radius <= 0.0 {
                    return Err(invalid("geometry.solid.radius", "must be > 0"));
                }
                if *mass <= 0.0 {
                    return Err(invalid("geometry.solid.mass", "must be > 0"));
                }
            }
            SolidSection::Ellipsoid { semi_axes, mass } => {
                if semi_axes.iter().any(|a| *a <= 0.0) {
                    return Err(invalid("geometry.solid.semi_axes", "must all be > 0"));
                }
                if *mass <= 0.0 {
                    return Err(invalid("geometry.solid.mass", "must be > 0"));
                }
            }
        }
        if g.domain_radius <= 0.0 {
            return Err(invalid("geometry.domain_radius", "must be > 0"));
        }
        if !(g.gamma_cap > 0.0 && g.gamma_cap < std::f64::consts::PI) {
            return Err(invalid("geometry.gamma_cap", "must lie in (0, pi)"));
        }
        if g.delta <= 0.0 {
            return Err(invalid("geometry.delta", "must be > 0"));
        }
        if g.solid_resolution.0 < 4 || g.solid_resolution.1 < 4 {
            return Err(invalid("geometry.solid_resolution", "each count must be >= 4"));
        }
        if g.outer_resolution.0 < 4 || g.outer_resolution.1 < 4 {
            return Err(invalid("geometry.outer_resolution", "each count must be >= 4"));
        }
        self.solver
            .validate()
            .map_err(|e| invalid("solver", e.to_string()))?;
        let c = &self.control;
        if c.basis_size < 6 {
            return Err(invalid("control.basis_size", "must be >= 6"));
        }
        if !(c.bump_radius > 0.0 && c.bump_radius < g.gamma_cap) {
            return Err(invalid(
                "control.bump_radius",
                "must lie in (0, gamma_cap)",
            ));
        }
        if !(c.epsilon_rel > 0.0) {
            return Err(invalid("control.epsilon_rel", "must be > 0"));
        }
        if c
            .grid_min
            .iter()
            .zip(c.grid_max.iter())
            .any(|(lo, hi)| lo >= hi)
        {
            return Err(invalid("control.grid_min", "must be < grid_max componentwise"));
        }
        if c.grid_counts.iter().any(|&n| n == 0) {
            return Err(invalid("control.grid_counts", "must all be >= 1"));
        }
        if !(c.velocity_bound > 0.0) {
            return Err(invalid("control.velocity_bound", "must be > 0"));
        }
        if !(c.acceleration_bound > 0.0) {
            return Err(invalid("control.acceleration_bound", "must be > 0"));
        }
        let r = &self.run;
        if r.duration <= 0.0 {
            return Err(invalid("run.duration", "must be > 0"));
        }
        if !(r.dt > 0.0 && r.dt <= r.duration) {
            return Err(invalid("run.dt", "must lie in (0, duration]"));
        }
        if r.mode != "fast" && r.mode != "full" {
            return Err(invalid("run.mode", "must be \"fast\" or \"full\""));
        }
        match &r.trajectory {
            TrajectorySection::Line { duration, .. } => {
                if *duration <= 0.0 {
                    return Err(invalid("run.trajectory.duration", "must be > 0"));
                }
            }
            TrajectorySection::Circle { radius, period, .. } => {
                if *radius <= 0.0 {
                    return Err(invalid("run.trajectory.radius", "must be > 0"));
                }
                if *period <= 0.0 {
                    return Err(invalid("run.trajectory.period", "must be > 0"));
                }
            }
            TrajectorySection::Spline { times, waypoints } => {
                if times.len() < 2 || times.len() != waypoints.len() {
                    return Err(invalid(
                        "run.trajectory.times",
                        "need >= 2 entries matching waypoints",
                    ));
                }
            }
            TrajectorySection::Rest { .. } => {}
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<SolidShape> {
        match &self.geometry.solid {
            SolidSection::Sphere { radius, mass } => SolidShape::sphere(*radius, *mass),
            SolidSection::Ellipsoid { semi_axes, mass } => SolidShape::ellipsoid(
                Vector3::new(semi_axes[0], semi_axes[1], semi_axes[2]),
                *mass,
            ),
        }
    }

    pub fn domain(&self) -> Result<DomainGeometry> {
        DomainGeometry::new(
            self.geometry.domain_radius,
            self.geometry.gamma_cap,
            self.geometry.delta,
        )
    }

    /// Pose grid over the translation components (orientation axes are
    /// added during synthesis for non-spherical solids).
    pub fn grid(&self) -> PoseGrid {
        let c = &self.control;
        PoseGrid {
            axes: (0..3)
                .map(|a| GridAxis {
                    min: c.grid_min[a],
                    max: c.grid_max[a],
                    count: c.grid_counts[a],
                })
                .collect(),
        }
    }

    pub fn bounds(&self) -> BoundSet {
        BoundSet {
            velocity: self.control.velocity_bound,
            acceleration: self.control.acceleration_bound,
        }
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        let v = |a: &[f64; 3]| Vector3::new(a[0], a[1], a[2]);
        Ok(match &self.run.trajectory {
            TrajectorySection::Rest { position } => Trajectory::Rest {
                pose: crate::geometry::Pose::translated(v(position)),
            },
            TrajectorySection::Line {
                start,
                end,
                duration,
            } => Trajectory::Line {
                start: v(start),
                end: v(end),
                duration: *duration,
            },
            TrajectorySection::Circle {
                center,
                radius,
                period,
            } => Trajectory::Circle {
                center: v(center),
                radius: *radius,
                period: *period,
            },
            TrajectorySection::Spline { times, waypoints } => Trajectory::Spline(
                SplineTrajectory::clamped(
                    times.clone(),
                    waypoints.iter().map(v).collect(),
                )?,
            ),
        })
    }

    /// Unit sphere in the unit container, circular reference orbit.
    pub fn default_sphere() -> Self {
        Self {
            geometry: GeometrySection {
                solid: SolidSection::Sphere {
                    radius: 0.1,
                    mass: 1.0,
                },
                domain_radius: 1.0,
                gamma_cap: std::f64::consts::FRAC_PI_3,
                delta: 0.3,
                solid_resolution: default_solid_resolution(),
                outer_resolution: default_outer_resolution(),
            },
            solver: SolverConfig::default(),
            control: ControlSection::default(),
            run: RunSection {
                trajectory: TrajectorySection::Circle {
                    center: [0.0, 0.0, 0.0],
                    radius: 0.3,
                    period: 1.0,
                },
                duration: 1.0,
                dt: 1e-2,
                mode: "fast".to_string(),
                seed: 0,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_round_trips() {
        let sc = Scenario::default_sphere();
        sc.validate().unwrap();
        let text = toml::to_string(&sc).unwrap();
        let back = Scenario::from_toml(&text).unwrap();
        assert_eq!(back.control.basis_size, sc.control.basis_size);
        assert_eq!(back.run.dt, sc.run.dt);
        back.shape().unwrap();
        back.domain().unwrap();
        back.trajectory().unwrap();
    }

    #[test]
    fn bad_fields_are_named() {
        let mut sc = Scenario::default_sphere();
        sc.geometry.delta = -1.0;
        match sc.validate() {
            Err(Error::InvalidScenario { field, .. }) => assert_eq!(field, "geometry.delta"),
            other => panic!("expected scenario error, got {other:?}"),
        }
        let mut sc = Scenario::default_sphere();
        sc.run.mode = "turbo".into();
        match sc.validate() {
            Err(Error::InvalidScenario { field, .. }) => assert_eq!(field, "run.mode"),
            other => panic!("expected scenario error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "[geometry]\nwat = 3\n";
        assert!(Scenario::from_toml(text).is_err());
    }
}
