//! Closed-loop integration: the reformulated solid ODE, free or controlled,
//! tracking of prescribed trajectories, fluid-field reconstruction and the
//! switch-off experiment.

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::control::{ControlField, ControlLaw, EvalMode};
use crate::dynamics::{elementary_solutions, rotated_inertia, ElementarySolutions};
use crate::error::{Error, Result};
use crate::geometry::{
    BoundaryDiscretization, PatchTag, Pose, RigidState,
};
use crate::stokes::{BoundaryData, StokesSolution, StokesSolver};

/// Reference trajectory `t -> (q, q', q'')`, twice differentiable by
/// construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Trajectory {
    /// Stationary target.
    Rest { pose: Pose },
    /// Translation from `start` to `end` over `duration` along a quintic
    /// ramp (zero end velocities and accelerations).
    Line {
        start: Vector3<f64>,
        end: Vector3<f64>,
        duration: f64,
    },
    /// Circular translation in the x-y plane, starting at
    /// `center + (radius, 0, 0)`.
    Circle {
        center: Vector3<f64>,
        radius: f64,
        period: f64,
    },
    /// Clamped cubic spline through position waypoints (zero end
    /// velocities), orientation held fixed.
    Spline(SplineTrajectory),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplineTrajectory {
    pub times: Vec<f64>,
    pub waypoints: Vec<Vector3<f64>>,
    /// Per-component second derivatives at the knots.
    curvatures: Vec<Vector3<f64>>,
}

impl SplineTrajectory {
    pub fn clamped(times: Vec<f64>, waypoints: Vec<Vector3<f64>>) -> Result<Self> {
        let n = times.len();
        if n < 2 || waypoints.len() != n {
            return Err(Error::InvalidTrajectory(
                "spline needs at least two waypoints with matching times".into(),
            ));
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidTrajectory(
                    "spline times must be strictly increasing".into(),
                ));
            }
        }
        let mut curvatures = vec![Vector3::zeros(); n];
        for c in 0..3 {
            let y: Vec<f64> = waypoints.iter().map(|p| p[c]).collect();
            let m = clamped_spline_curvatures(&times, &y, 0.0, 0.0);
            for (i, mi) in m.iter().enumerate() {
                curvatures[i][c] = *mi;
            }
        }
        Ok(Self {
            times,
            waypoints,
            curvatures,
        })
    }

    fn sample(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let n = self.times.len();
        let t = t.clamp(self.times[0], self.times[n - 1]);
        let i = match self.times[..n - 1]
            .iter()
            .rposition(|&ti| ti <= t)
        {
            Some(i) => i,
            None => 0,
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let (a, b) = (t1 - t, t - t0);
        let (y0, y1) = (self.waypoints[i], self.waypoints[i + 1]);
        let (m0, m1) = (self.curvatures[i], self.curvatures[i + 1]);
        let pos = m0 * a.powi(3) / (6.0 * h)
            + m1 * b.powi(3) / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * a
            + (y1 / h - m1 * h / 6.0) * b;
        let vel = -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) + (y1 - y0) / h
            - (m1 - m0) * h / 6.0;
        let acc = m0 * a / h + m1 * b / h;
        (pos, vel, acc)
    }
}

/// Clamped-end second derivatives via the Thomas algorithm.
fn clamped_spline_curvatures(t: &[f64], y: &[f64], slope0: f64, slope1: f64) -> Vec<f64> {
    let n = t.len();
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let mut diag = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    diag[0] = 2.0 * h[0];
    upper[0] = h[0];
    rhs[0] = 6.0 * ((y[1] - y[0]) / h[0] - slope0);
    for i in 1..n - 1 {
        lower[i] = h[i - 1];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        upper[i] = h[i];
        rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    lower[n - 1] = h[n - 2];
    diag[n - 1] = 2.0 * h[n - 2];
    rhs[n - 1] = 6.0 * (slope1 - (y[n - 1] - y[n - 2]) / h[n - 2]);
    // forward sweep
    for i in 1..n {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut m = vec![0.0; n];
    m[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
    }
    m
}

impl Trajectory {
    /// Reference pose, velocity and acceleration at time `t`.
    pub fn sample(&self, t: f64) -> (Pose, Vector6<f64>, Vector6<f64>) {
        match self {
            Trajectory::Rest { pose } => (pose.clone(), Vector6::zeros(), Vector6::zeros()),
            Trajectory::Line {
                start,
                end,
                duration,
            } => {
                let tau = (t / duration).clamp(0.0, 1.0);
                let s = tau.powi(3) * (10.0 - 15.0 * tau + 6.0 * tau * tau);
                let ds = 30.0 * tau.powi(2) * (1.0 - tau).powi(2) / duration;
                let dds =
                    (60.0 * tau - 180.0 * tau * tau + 120.0 * tau.powi(3)) / (duration * duration);
                let delta = end - start;
                let mut vel = Vector6::zeros();
                let mut acc = Vector6::zeros();
                vel.fixed_rows_mut::<3>(0).copy_from(&(delta * ds));
                acc.fixed_rows_mut::<3>(0).copy_from(&(delta * dds));
                (Pose::translated(start + delta * s), vel, acc)
            }
            Trajectory::Circle {
                center,
                radius,
                period,
            } => {
                let w = 2.0 * std::f64::consts::PI / period;
                let (s, c) = (w * t).sin_cos();
                let pos = center + *radius * Vector3::new(c, s, 0.0);
                let mut vel = Vector6::zeros();
                let mut acc = Vector6::zeros();
                vel.fixed_rows_mut::<3>(0)
                    .copy_from(&(*radius * w * Vector3::new(-s, c, 0.0)));
                acc.fixed_rows_mut::<3>(0)
                    .copy_from(&(-*radius * w * w * Vector3::new(c, s, 0.0)));
                (Pose::translated(pos), vel, acc)
            }
            Trajectory::Spline(sp) => {
                let (pos, v, a) = sp.sample(t);
                let mut vel = Vector6::zeros();
                let mut acc = Vector6::zeros();
                vel.fixed_rows_mut::<3>(0).copy_from(&v);
                acc.fixed_rows_mut::<3>(0).copy_from(&a);
                (Pose::translated(pos), vel, acc)
            }
        }
    }
}

/// Acceleration from the total hydrodynamic force/torque:
/// `m h'' = f_lin`, `I w' = f_ang - w ^ (I w)`.
fn acceleration_from_force(law: &ControlLaw, state: &RigidState, force: &Vector6<f64>) -> Vector6<f64> {
    let omega = state.angular();
    let inertia = rotated_inertia(&law.shape, &state.pose);
    let f_lin = force.fixed_rows::<3>(0).into_owned();
    let f_ang = force.fixed_rows::<3>(3).into_owned();
    let a_lin = f_lin / law.shape.mass;
    let a_ang = inertia
        .lu()
        .solve(&(f_ang - omega.cross(&(inertia * omega))))
        .expect("inertia is SPD");
    let mut acc = Vector6::zeros();
    acc.fixed_rows_mut::<3>(0).copy_from(&a_lin);
    acc.fixed_rows_mut::<3>(3).copy_from(&a_ang);
    acc
}

/// Acceleration of the uncontrolled quasi-linear ODE
/// `d/dt(M(q) q') = -K(q) q'`, with `K` taken from the law's tables.
pub fn free_rhs(law: &ControlLaw, state: &RigidState) -> Result<Vector6<f64>> {
    let k = law.resistance_at(&state.pose)?;
    let force = -k * state.velocity;
    Ok(acceleration_from_force(law, state, &force))
}

#[derive(Debug, Clone)]
pub struct ControlledStep {
    pub acceleration: Vector6<f64>,
    pub mu: Vector6<f64>,
    pub field: ControlField,
    /// Full mode only: triangle-inequality bound on the fast/full
    /// acceleration gap from the recomputed tables.
    pub interpolation_bound: Option<f64>,
}

/// Controlled acceleration: the gain is evaluated at the current `(q, q')`
/// with the reference acceleration as feedforward; the resulting forcing is
/// either read from the interpolated tables or recomputed by fresh Stokes
/// solves.
pub fn controlled_rhs(
    law: &ControlLaw,
    state: &RigidState,
    acc_ref: &Vector6<f64>,
    mode: EvalMode,
) -> Result<ControlledStep> {
    let (mu, field) = law.mu(&state.pose, &state.velocity, acc_ref)?;
    let k_fast = law.resistance_at(&state.pose)?;
    let b_fast = law.control_matrix(&state.pose, EvalMode::Fast)?;
    let fc_fast = b_fast * mu;
    match mode {
        EvalMode::Fast => {
            let force = -k_fast * state.velocity - fc_fast;
            Ok(ControlledStep {
                acceleration: acceleration_from_force(law, state, &force),
                mu,
                field,
                interpolation_bound: None,
            })
        }
        EvalMode::Full => {
            let k_full = law.recompute_resistance(&state.pose)?;
            let sol = solve_control_problem(law, &state.pose, &field)?;
            let fc_full = sol.traction_integrals();
            let force = -k_full * state.velocity - fc_full;
            let acceleration = acceleration_from_force(law, state, &force);
            // |M^-1| ((|K_fast - K_full|)|q'| + |Fc_fast - Fc_full|)
            let inertia = rotated_inertia(&law.shape, &state.pose);
            let inv_mass_norm = (1.0 / law.shape.mass)
                .max(1.0 / inertia.symmetric_eigen().eigenvalues.min());
            let bound = inv_mass_norm
                * ((k_fast - k_full).norm() * state.velocity.norm()
                    + (fc_fast - fc_full).norm());
            Ok(ControlledStep {
                acceleration,
                mu,
                field,
                interpolation_bound: Some(bound),
            })
        }
    }
}

/// Stokes solve with the control field on the container boundary and
/// no-slip on the solid.
pub fn solve_control_problem(
    law: &ControlLaw,
    pose: &Pose,
    field: &ControlField,
) -> Result<StokesSolution> {
    let disc = Arc::new(BoundaryDiscretization::assemble(
        &law.shape,
        pose,
        &law.domain,
        law.solid_resolution,
        law.outer_resolution,
    )?);
    let n_solid = disc.solid_idx.len();
    let solver = StokesSolver::new(&law.shape, pose, &law.domain, disc.clone(), &law.solver_config)?;
    let mut values = vec![Vector3::zeros(); disc.len()];
    for (j, v) in field.values.iter().enumerate() {
        values[n_solid + j] = *v;
    }
    solver.solve(&BoundaryData { values })
}

fn rk4_step<F>(state: &RigidState, t: f64, dt: f64, mut rhs: F) -> Result<RigidState>
where
    F: FnMut(&RigidState, f64) -> Result<Vector6<f64>>,
{
    // stage derivative of (h, R, q') is (v, w^R, a)
    let deriv = |s: &RigidState, time: f64, rhs: &mut F| -> Result<(Vector3<f64>, Matrix3<f64>, Vector6<f64>)> {
        let acc = rhs(s, time)?;
        let omega = s.angular();
        Ok((
            s.linear(),
            crate::geometry::skew(&omega) * s.pose.rot,
            acc,
        ))
    };

    let apply = |s: &RigidState, k: &(Vector3<f64>, Matrix3<f64>, Vector6<f64>), f: f64| RigidState {
        pose: Pose {
            h: s.pose.h + f * k.0,
            rot: s.pose.rot + f * k.1,
        },
        velocity: s.velocity + f * k.2,
    };

    let k1 = deriv(state, t, &mut rhs)?;
    let s2 = apply(state, &k1, dt / 2.0);
    let k2 = deriv(&s2, t + dt / 2.0, &mut rhs)?;
    let s3 = apply(state, &k2, dt / 2.0);
    let k3 = deriv(&s3, t + dt / 2.0, &mut rhs)?;
    let s4 = apply(state, &k3, dt);
    let k4 = deriv(&s4, t + dt, &mut rhs)?;

    let h = state.pose.h + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    let rot_raw = state.pose.rot + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    let rot = crate::geometry::polar_project(&rot_raw);
    let velocity = state.velocity + dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
    Ok(RigidState {
        pose: Pose { h, rot },
        velocity,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordRow {
    pub t: f64,
    pub h: Vector3<f64>,
    pub rot: Matrix3<f64>,
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
    pub mu: Vector6<f64>,
    pub cost: f64,
    pub position_error: f64,
    pub rotation_error: f64,
    pub linear_velocity_error: f64,
    pub angular_velocity_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRecord {
    pub rows: Vec<RecordRow>,
    pub truncated: bool,
    pub sup_position_error: f64,
    pub sup_rotation_error: f64,
    pub sup_linear_velocity_error: f64,
    pub sup_angular_velocity_error: f64,
    pub max_cost: f64,
    pub max_mu: f64,
}

/// Integrates the controlled system along the reference trajectory from
/// matched initial data and records sup-norm tracking errors.
pub fn track(
    law: &ControlLaw,
    trajectory: &Trajectory,
    t_final: f64,
    dt: f64,
    mode: EvalMode,
) -> Result<SimulationRecord> {
    let (pose0, vel0, _) = trajectory.sample(0.0);
    let mut state = RigidState {
        pose: pose0,
        velocity: vel0,
    };
    let steps = (t_final / dt).round() as usize;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut truncated = false;
    for step in 0..=steps {
        let t = step as f64 * dt;
        if !law.covers(&state.pose) {
            truncated = true;
            break;
        }
        let (pose_ref, vel_ref, acc_ref) = trajectory.sample(t);
        let ctrl = controlled_rhs(law, &state, &acc_ref, mode)?;
        let cost = law.control_cost(&ctrl.field);
        rows.push(RecordRow {
            t,
            h: state.pose.h,
            rot: state.pose.rot,
            linear: state.linear(),
            angular: state.angular(),
            mu: ctrl.mu,
            cost,
            position_error: (state.pose.h - pose_ref.h).norm(),
            rotation_error: (state.pose.rot - pose_ref.rot).norm(),
            linear_velocity_error: (state.linear()
                - vel_ref.fixed_rows::<3>(0).into_owned())
            .norm(),
            angular_velocity_error: (state.angular()
                - vel_ref.fixed_rows::<3>(3).into_owned())
            .norm(),
        });
        if step == steps {
            break;
        }
        state = rk4_step(&state, t, dt, |s, time| {
            let (_, _, acc_ref) = trajectory.sample(time);
            Ok(controlled_rhs(law, s, &acc_ref, mode)?.acceleration)
        })?;
    }
    Ok(summarize(rows, truncated))
}

fn summarize(rows: Vec<RecordRow>, truncated: bool) -> SimulationRecord {
    let fold = |f: fn(&RecordRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    SimulationRecord {
        sup_position_error: fold(|r| r.position_error),
        sup_rotation_error: fold(|r| r.rotation_error),
        sup_linear_velocity_error: fold(|r| r.linear_velocity_error),
        sup_angular_velocity_error: fold(|r| r.angular_velocity_error),
        max_cost: fold(|r| r.cost),
        max_mu: fold(|r| r.mu.norm()),
        rows,
        truncated,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FreeRunRow {
    pub t: f64,
    pub state: RigidState,
    pub acceleration: Vector6<f64>,
    pub kinetic_energy: f64,
}

/// Integrates the uncontrolled dynamics; `law` supplies the resistance
/// tables.
pub fn free_run(
    law: &ControlLaw,
    initial: &RigidState,
    t_final: f64,
    dt: f64,
) -> Result<(Vec<FreeRunRow>, bool)> {
    let mut state = initial.clone();
    let steps = (t_final / dt).round() as usize;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut truncated = false;
    for step in 0..=steps {
        let t = step as f64 * dt;
        if !law.covers(&state.pose) {
            truncated = true;
            break;
        }
        let acceleration = free_rhs(law, &state)?;
        let mass = crate::dynamics::mass_matrix(&law.shape, &state.pose).m;
        let kinetic_energy = 0.5 * state.velocity.dot(&(mass * state.velocity));
        rows.push(FreeRunRow {
            t,
            state: state.clone(),
            acceleration,
            kinetic_energy,
        });
        if step == steps {
            break;
        }
        state = rk4_step(&state, t, dt, |s, _| free_rhs(law, s))?;
    }
    Ok((rows, truncated))
}

#[derive(Debug, Clone, Serialize)]
pub struct SwitchOffReport {
    pub max_mu: f64,
    pub max_resistive_force: f64,
    pub max_momentum_rate: f64,
    pub mu_norms: Vec<f64>,
    pub truncated: bool,
}

/// Integrates the free dynamics (with `dynamics` supplying the tables) and
/// evaluates the gain of `law` along the resulting trajectory. For a
/// trajectory satisfying the law's own uncontrolled ODE the gain vanishes.
pub fn switch_off_experiment(
    law: &ControlLaw,
    dynamics: &ControlLaw,
    initial: &RigidState,
    t_final: f64,
    dt: f64,
) -> Result<SwitchOffReport> {
    let (rows, truncated) = free_run(dynamics, initial, t_final, dt)?;
    let mut max_mu = 0.0f64;
    let mut max_resistive_force = 0.0f64;
    let mut max_momentum_rate = 0.0f64;
    let mut mu_norms = Vec::with_capacity(rows.len());
    for row in &rows {
        let (mu, _) = law.mu(&row.state.pose, &row.state.velocity, &row.acceleration)?;
        let k = dynamics.resistance_at(&row.state.pose)?;
        let rate = crate::dynamics::momentum_rate(
            &dynamics.shape,
            &row.state.pose,
            &row.state.velocity,
            &row.acceleration,
        );
        mu_norms.push(mu.norm());
        max_mu = max_mu.max(mu.norm());
        max_resistive_force = max_resistive_force.max((k * row.state.velocity).norm());
        max_momentum_rate = max_momentum_rate.max(rate.norm());
    }
    Ok(SwitchOffReport {
        max_mu,
        max_resistive_force,
        max_momentum_rate,
        mu_norms,
        truncated,
    })
}

/// Reconstructed fluid state `u = q' . V(q, .) + u^c` at a fixed time.
pub struct FluidReconstruction {
    elem: ElementarySolutions,
    control: StokesSolution,
    velocity6: Vector6<f64>,
    pub solid_residual: f64,
    pub gamma_residual: f64,
    pub wall_residual: f64,
}

impl FluidReconstruction {
    pub fn velocity(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let mut u = self.control.velocity(x);
        for (i, sol) in self.elem.solutions.iter().enumerate() {
            u += self.velocity6[i] * sol.velocity(x);
        }
        u
    }

    pub fn pressure(&self, x: &Vector3<f64>) -> f64 {
        let mut p = self.control.pressure(x);
        for (i, sol) in self.elem.solutions.iter().enumerate() {
            p += self.velocity6[i] * sol.pressure(x);
        }
        p
    }

    pub fn velocity_gradient(&self, x: &Vector3<f64>) -> nalgebra::Matrix3<f64> {
        let mut g = self.control.velocity_gradient(x);
        for (i, sol) in self.elem.solutions.iter().enumerate() {
            g += self.velocity6[i] * sol.velocity_gradient(x);
        }
        g
    }
}

/// Superposes the elementary and control contributions at the given state
/// and verifies the boundary conditions of the coupled system.
pub fn reconstruct_fluid(
    law: &ControlLaw,
    state: &RigidState,
    field: &ControlField,
    probes: &[Vector3<f64>],
) -> Result<(FluidReconstruction, Vec<(Vector3<f64>, f64)>)> {
    for x in probes {
        let local = state.pose.rot.transpose() * (x - state.pose.h);
        if law.shape.contains_local(&local) || !law.domain.contains(x) {
            return Err(Error::ProbeOutsideFluid(x[0], x[1], x[2]));
        }
    }
    let disc = Arc::new(BoundaryDiscretization::assemble(
        &law.shape,
        &state.pose,
        &law.domain,
        law.solid_resolution,
        law.outer_resolution,
    )?);
    let solver = StokesSolver::new(
        &law.shape,
        &state.pose,
        &law.domain,
        disc.clone(),
        &law.solver_config,
    )?;
    let elem = elementary_solutions(&solver, &state.pose)?;
    let control = solve_control_problem(law, &state.pose, field)?;

    let recon = FluidReconstruction {
        elem,
        control,
        velocity6: state.velocity,
        solid_residual: 0.0,
        gamma_residual: 0.0,
        wall_residual: 0.0,
    };
    let n_solid = disc.solid_idx.len();
    let mut solid_residual = 0.0f64;
    let mut gamma_residual = 0.0f64;
    let mut wall_residual = 0.0f64;
    for (i, node) in disc.nodes.iter().enumerate() {
        let u = recon.velocity(&node.point);
        match node.tag {
            PatchTag::Solid => {
                solid_residual = solid_residual.max((u - state.velocity_at(&node.point)).norm());
            }
            PatchTag::Gamma => {
                gamma_residual = gamma_residual.max((u - field.values[i - n_solid]).norm());
            }
            PatchTag::Wall => {
                wall_residual = wall_residual.max(u.norm());
            }
        }
    }
    let recon = FluidReconstruction {
        solid_residual,
        gamma_residual,
        wall_residual,
        ..recon
    };
    let values = probes
        .iter()
        .map(|x| (recon.velocity(x), recon.pressure(x)))
        .collect();
    Ok((recon, values))
}
