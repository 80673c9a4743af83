//! Per-pose rigid-body objects: elementary rigid velocities, elementary
//! Stokes solutions, the resistance matrix and the mass matrix.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainGeometry, Pose, SolidShape};
use crate::stokes::{BoundaryData, StokesSolution, StokesSolver};

/// Max tolerated relative asymmetry of the assembled resistance matrix.
pub const ASYMMETRY_BOUND: f64 = 1e-2;

/// `phi_i(q, x)`: unit translations for `i = 1..3`, unit rotations about the
/// center of mass for `i = 4..6`.
pub fn elementary_velocity(i: usize, pose: &Pose, x: &Vector3<f64>) -> Result<Vector3<f64>> {
    if !(1..=6).contains(&i) {
        return Err(Error::IndexOutOfRange(i));
    }
    Ok(rigid_basis_field(i - 1, &pose.h, x))
}

/// Zero-based variant used internally.
pub(crate) fn rigid_basis_field(i: usize, h: &Vector3<f64>, x: &Vector3<f64>) -> Vector3<f64> {
    if i < 3 {
        let mut e = Vector3::zeros();
        e[i] = 1.0;
        e
    } else {
        let mut e = Vector3::zeros();
        e[i - 3] = 1.0;
        e.cross(&(x - h))
    }
}

/// The six fields `(V_i, P_i)` with `V_i = phi_i` on the solid boundary and
/// `V_i = 0` on the container boundary.
pub struct ElementarySolutions {
    pub solutions: Vec<StokesSolution>,
}

pub fn elementary_solutions(solver: &StokesSolver, pose: &Pose) -> Result<ElementarySolutions> {
    let disc = solver.disc.clone();
    let mut solutions = Vec::with_capacity(6);
    for i in 0..6 {
        let values = disc
            .nodes
            .iter()
            .map(|n| match n.tag {
                crate::geometry::PatchTag::Solid => rigid_basis_field(i, &pose.h, &n.point),
                _ => Vector3::zeros(),
            })
            .collect();
        solutions.push(solver.solve_smooth(&BoundaryData { values })?);
    }
    Ok(ElementarySolutions { solutions })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResistanceMatrix {
    /// Symmetrized `K(q)`.
    pub k: Matrix6<f64>,
    /// Relative asymmetry before symmetrization, a discretization diagnostic.
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
}

/// Assembles `K_ij = int Sigma(V_i, P_i) n . phi_j dsigma` by surface
/// quadrature, then symmetrizes.
pub fn resistance_matrix(elem: &ElementarySolutions) -> Result<ResistanceMatrix> {
    let mut k = Matrix6::zeros();
    for (i, sol) in elem.solutions.iter().enumerate() {
        let row = sol.traction_integrals();
        for j in 0..6 {
            k[(i, j)] = row[j];
        }
    }
    let asymmetry = (k - k.transpose()).norm() / k.norm();
    if asymmetry > ASYMMETRY_BOUND {
        return Err(Error::AsymmetryBound {
            asymmetry,
            bound: ASYMMETRY_BOUND,
        });
    }
    let k = 0.5 * (k + k.transpose());
    let min_eigenvalue = k.symmetric_eigen().eigenvalues.min();
    if min_eigenvalue <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eig: min_eigenvalue,
        });
    }
    Ok(ResistanceMatrix {
        k,
        asymmetry,
        min_eigenvalue,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassMatrix {
    pub m: Matrix6<f64>,
}

/// Block-diagonal mass matrix with blocks `m Id` and `I(q) = R I0 R^T`.
pub fn mass_matrix(shape: &SolidShape, pose: &Pose) -> MassMatrix {
    let mut m = Matrix6::zeros();
    for d in 0..3 {
        m[(d, d)] = shape.mass;
    }
    let inertia = rotated_inertia(shape, pose);
    m.view_mut((3, 3), (3, 3)).copy_from(&inertia);
    MassMatrix { m }
}

pub fn rotated_inertia(shape: &SolidShape, pose: &Pose) -> Matrix3<f64> {
    pose.rot * shape.inertia0 * pose.rot.transpose()
}

/// `d/dt (M(q) q') = (m h'', I(q) w' + w ^ (I(q) w))`, the exact derivative
/// of the momentum under the inertia conjugation law.
pub fn momentum_rate(
    shape: &SolidShape,
    pose: &Pose,
    velocity: &Vector6<f64>,
    acceleration: &Vector6<f64>,
) -> Vector6<f64> {
    let omega = velocity.fixed_rows::<3>(3).into_owned();
    let a_lin = acceleration.fixed_rows::<3>(0).into_owned();
    let a_ang = acceleration.fixed_rows::<3>(3).into_owned();
    let inertia = rotated_inertia(shape, pose);
    let mut out = Vector6::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&(shape.mass * a_lin));
    out.fixed_rows_mut::<3>(3)
        .copy_from(&(inertia * a_ang + omega.cross(&(inertia * omega))));
    out
}

/// Monte Carlo estimate of `2 int_F D(V_i):D(V_j) dx` against the surface
/// value `K_ij`; returns the relative discrepancy. A loose cross-check of
/// the integration-by-parts identity.
pub fn volume_form_check(
    elem: &ElementarySolutions,
    shape: &SolidShape,
    pose: &Pose,
    domain: &DomainGeometry,
    i: usize,
    j: usize,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if !(1..=6).contains(&i) {
        return Err(Error::IndexOutOfRange(i));
    }
    if !(1..=6).contains(&j) {
        return Err(Error::IndexOutOfRange(j));
    }
    let vi = &elem.solutions[i - 1];
    let vj = &elem.solutions[j - 1];
    let surface = vi.traction_integrals()[j - 1];

    let ball_volume = 4.0 / 3.0 * std::f64::consts::PI * domain.radius.powi(3);
    let mut acc = 0.0;
    for _ in 0..samples {
        // uniform in the container ball
        let dir = loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0f64),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-6 && n <= 1.0 {
                break v / n;
            }
        };
        let r = domain.radius * rng.gen_range(0.0..1.0f64).cbrt();
        let x = r * dir;
        let local = pose.rot.transpose() * (x - pose.h);
        if shape.contains_local(&local) {
            continue;
        }
        let gi = vi.velocity_gradient(&x);
        let gj = vj.velocity_gradient(&x);
        let di = 0.5 * (gi + gi.transpose());
        let dj = 0.5 * (gj + gj.transpose());
        acc += 2.0 * di.dot(&dj);
    }
    let volume_estimate = acc / samples as f64 * ball_volume;
    if surface == 0.0 && volume_estimate == 0.0 {
        return Ok(0.0);
    }
    Ok((volume_estimate - surface).abs() / surface.abs().max(f64::MIN_POSITIVE))
}
